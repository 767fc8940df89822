//! Unpartitioned dense evaluation of a model, used as the numeric oracle.

use crate::compiler::{build_computation_graph, KernelOp, ModelSpec, WeightSet};
use crate::error::Result;
use crate::matrix::{dense_matmul_oracle, elementwise_activation, CooMatrix, DenseMatrix};
use crate::transform::sparse_to_dense;

/// Evaluates `spec` with whole-matrix dense products, the same adjacency
/// rewrites and the same kernel order as the compiled program.
pub fn reference_inference(
    spec: &ModelSpec,
    adjacency: &CooMatrix,
    features: &DenseMatrix,
    weights: &WeightSet,
) -> Result<DenseMatrix> {
    let graph = build_computation_graph(spec)?;
    weights.check_against(spec)?;
    let adj = graph
        .adjacency
        .iter()
        .map(|op| sparse_to_dense(&op.apply(adjacency)?))
        .collect::<Result<Vec<_>>>()?;
    let mut slots = vec![features.to_row_major()];
    for k in &graph.kernels {
        let out = match &k.op {
            KernelOp::Aggregate { adjacency, input } => {
                dense_matmul_oracle(&adj[*adjacency], &slots[*input])?
            }
            KernelOp::Update { input, weight } => {
                dense_matmul_oracle(&slots[*input], &weights.get(weight)?.to_row_major())?
            }
            KernelOp::Add { lhs, rhs } => slots[*lhs].add(&slots[*rhs])?,
        };
        slots.push(elementwise_activation(&out, k.activation));
    }
    Ok(slots.pop().expect("input slot"))
}
