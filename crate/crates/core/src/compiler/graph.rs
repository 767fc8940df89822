//! Lowering of layer descriptors into an ordered list of kernels, and the
//! compile-time adjacency rewrites those kernels read.

use serde::{Deserialize, Serialize};

use super::ir::{KernelOp, KernelType};
use super::model::{Aggregation, ModelKind, ModelSpec};
use crate::error::{Error, Result};
use crate::matrix::{Activation, CooMatrix, Layout};

/// Rewrite applied to the raw adjacency before it is partitioned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdjacencyOp {
    Raw,
    /// `D^-1 A`
    RowNormalized,
    /// `D^-1/2 (A + I) D^-1/2`, degrees taken from `A + I`.
    SymNormSelfLoops,
    /// `A + scale·I`
    PlusIdentity { scale: f32 },
    /// `D^-1 A + scale·I`
    RowNormalizedPlusIdentity { scale: f32 },
}

fn row_sums(a: &CooMatrix) -> Vec<f64> {
    let mut s = vec![0.0f64; a.rows()];
    for e in a.entries() {
        s[e.row] += e.value as f64;
    }
    s
}

fn plus_identity(a: &CooMatrix, scale: f32) -> Result<CooMatrix> {
    let n = a.rows();
    CooMatrix::from_triplets(
        n,
        n,
        Layout::RowMajor,
        a.entries()
            .iter()
            .map(|e| (e.row, e.col, e.value))
            .chain((0..n).map(|i| (i, i, scale))),
    )
}

fn row_normalized(a: &CooMatrix) -> Result<CooMatrix> {
    let sums = row_sums(a);
    CooMatrix::from_triplets(
        a.rows(),
        a.cols(),
        Layout::RowMajor,
        a.entries().iter().map(|e| {
            let s = sums[e.row];
            let v = if s != 0.0 { e.value as f64 / s } else { 0.0 };
            (e.row, e.col, v as f32)
        }),
    )
}

impl AdjacencyOp {
    pub fn apply(self, a: &CooMatrix) -> Result<CooMatrix> {
        if a.rows() != a.cols() {
            return Err(Error::shape(format!("adjacency must be square, got {:?}", a.shape())));
        }
        match self {
            AdjacencyOp::Raw => Ok(a.clone()),
            AdjacencyOp::RowNormalized => row_normalized(a),
            AdjacencyOp::PlusIdentity { scale } => plus_identity(a, scale),
            AdjacencyOp::RowNormalizedPlusIdentity { scale } => {
                plus_identity(&row_normalized(a)?, scale)
            }
            AdjacencyOp::SymNormSelfLoops => {
                let looped = plus_identity(a, 1.0)?;
                let inv: Vec<f64> = row_sums(&looped)
                    .into_iter()
                    .map(|d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
                    .collect();
                CooMatrix::from_triplets(
                    a.rows(),
                    a.cols(),
                    Layout::RowMajor,
                    looped.entries().iter().map(|e| {
                        (e.row, e.col, (e.value as f64 * inv[e.row] * inv[e.col]) as f32)
                    }),
                )
            }
        }
    }
}

/// A kernel before partitioning.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelNode {
    pub layer_id: usize,
    pub f_in: usize,
    pub f_out: usize,
    pub aggregation: Option<Aggregation>,
    pub activation: Activation,
    pub op: KernelOp,
    pub output: usize,
}

impl KernelNode {
    pub fn kernel_type(&self) -> KernelType {
        self.op.kernel_type()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct KernelGraph {
    pub kernels: Vec<KernelNode>,
    /// Distinct adjacency rewrites, indexed by `KernelOp::Aggregate::adjacency`.
    pub adjacency: Vec<AdjacencyOp>,
    /// Column count of every feature slot; slot 0 is the model input.
    pub feature_cols: Vec<usize>,
}

impl KernelGraph {
    fn adjacency_slot(&mut self, op: AdjacencyOp) -> usize {
        match self.adjacency.iter().position(|&o| o == op) {
            Some(i) => i,
            None => {
                self.adjacency.push(op);
                self.adjacency.len() - 1
            }
        }
    }

    fn push(
        &mut self,
        layer_id: usize,
        f_in: usize,
        f_out: usize,
        aggregation: Option<Aggregation>,
        activation: Activation,
        op: KernelOp,
    ) -> usize {
        let output = self.feature_cols.len();
        self.feature_cols.push(f_out);
        self.kernels.push(KernelNode {
            layer_id,
            f_in,
            f_out,
            aggregation,
            activation,
            op,
            output,
        });
        output
    }

    /// Kernel that writes feature slot `slot`, if any.
    pub fn producer(&self, slot: usize) -> Option<usize> {
        self.kernels.iter().position(|k| k.output == slot)
    }
}

fn adjacency_op(kind: ModelKind, aggregation: Aggregation, gin_epsilon: f32) -> AdjacencyOp {
    let mean = aggregation == Aggregation::Mean;
    match kind {
        ModelKind::Gcn | ModelKind::Sgc => AdjacencyOp::SymNormSelfLoops,
        ModelKind::Sage if mean => AdjacencyOp::RowNormalized,
        ModelKind::Sage => AdjacencyOp::Raw,
        ModelKind::Gin if mean => AdjacencyOp::RowNormalizedPlusIdentity {
            scale: 1.0 + gin_epsilon,
        },
        ModelKind::Gin => AdjacencyOp::PlusIdentity {
            scale: 1.0 + gin_epsilon,
        },
    }
}

/// Lowers every layer into kernels, in execution order:
///
/// * GCN: Aggregate, Update (activation on the Update)
/// * SAGE: Aggregate, Update(neighbor), Update(self), Add (activation on the Add)
/// * GIN: Aggregate over `A + (1+ε)I`, Update + ReLU, Update
/// * SGC: `hops` Aggregates, then one Update
pub fn build_computation_graph(spec: &ModelSpec) -> Result<KernelGraph> {
    spec.validate()?;
    let mut g = KernelGraph {
        feature_cols: vec![spec.input_dim().unwrap_or(0)],
        ..KernelGraph::default()
    };
    let mut cur = 0usize;
    for (l, layer) in spec.layers.iter().enumerate() {
        if matches!(layer.aggregation, Aggregation::Max | Aggregation::Min) {
            return Err(Error::config(format!(
                "layer {l}: {:?} aggregation cannot be expressed as a matrix product; use sum or mean",
                layer.aggregation
            )));
        }
        let (fi, fo) = (layer.f_in, layer.f_out);
        let agg = Some(layer.aggregation);
        let act = layer.activation_fn();
        let adj = g.adjacency_slot(adjacency_op(layer.kind, layer.aggregation, layer.gin_epsilon));
        let ident = Activation::Identity;
        let w = |suffix: &str| format!("l{l}.{suffix}");
        cur = match layer.kind {
            ModelKind::Gcn => {
                let a = g.push(l, fi, fi, agg, ident, KernelOp::Aggregate { adjacency: adj, input: cur });
                g.push(l, fi, fo, None, act, KernelOp::Update { input: a, weight: w("w") })
            }
            ModelKind::Sgc => {
                let mut h = cur;
                for _ in 0..layer.sgc_hops {
                    h = g.push(l, fi, fi, agg, ident, KernelOp::Aggregate { adjacency: adj, input: h });
                }
                g.push(l, fi, fo, None, act, KernelOp::Update { input: h, weight: w("w") })
            }
            ModelKind::Sage => {
                let a = g.push(l, fi, fi, agg, ident, KernelOp::Aggregate { adjacency: adj, input: cur });
                let n = g.push(l, fi, fo, None, ident, KernelOp::Update { input: a, weight: w("w_neigh") });
                let s = g.push(l, fi, fo, None, ident, KernelOp::Update { input: cur, weight: w("w_self") });
                g.push(l, fo, fo, None, act, KernelOp::Add { lhs: n, rhs: s })
            }
            ModelKind::Gin => {
                let a = g.push(l, fi, fi, agg, ident, KernelOp::Aggregate { adjacency: adj, input: cur });
                let h = g.push(l, fi, fo, None, Activation::Relu, KernelOp::Update { input: a, weight: w("w1") });
                g.push(l, fo, fo, None, act, KernelOp::Update { input: h, weight: w("w2") })
            }
        };
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::model::{LayerSpec, ModelKind};
    use crate::matrix::MatrixRef;

    fn types(g: &KernelGraph) -> Vec<KernelType> {
        g.kernels.iter().map(|k| k.kernel_type()).collect()
    }

    #[test]
    fn gcn_two_layers_alternate() {
        let g = build_computation_graph(&ModelSpec::zoo("gcn2", 8, 4, 2).unwrap()).unwrap();
        use KernelType::*;
        assert_eq!(types(&g), [Aggregate, Update, Aggregate, Update]);
        assert_eq!(g.adjacency, [AdjacencyOp::SymNormSelfLoops]);
        assert_eq!(g.kernels[1].activation, Activation::Relu);
        assert_eq!(g.kernels[3].activation, Activation::Identity);
        assert_eq!(g.feature_cols, [8, 8, 4, 4, 2]);
    }

    #[test]
    fn sgc_hops() {
        let g = build_computation_graph(&ModelSpec::zoo("sgc2", 8, 4, 2).unwrap()).unwrap();
        use KernelType::*;
        assert_eq!(types(&g), [Aggregate, Aggregate, Update]);
    }

    #[test]
    fn sage_branches() {
        let g = build_computation_graph(&ModelSpec::zoo("sage2", 8, 4, 2).unwrap()).unwrap();
        use KernelType::*;
        assert_eq!(
            types(&g)[..4],
            [Aggregate, Update, Update, ElementwiseAdd]
        );
        assert_eq!(g.kernels[2].op, KernelOp::Update { input: 0, weight: "l0.w_self".into() });
        assert_eq!(g.kernels[3].op, KernelOp::Add { lhs: 2, rhs: 3 });
        assert_eq!(g.adjacency, [AdjacencyOp::RowNormalized]);
    }

    #[test]
    fn empty_model() {
        let g = build_computation_graph(&ModelSpec::new("empty", vec![])).unwrap();
        assert!(g.kernels.is_empty());
    }

    #[test]
    fn max_aggregation_rejected() {
        let spec = ModelSpec::new(
            "m",
            vec![LayerSpec::new(ModelKind::Sage, 4, 4).with_aggregation(Aggregation::Max)],
        );
        assert!(matches!(build_computation_graph(&spec), Err(Error::Config(_))));
    }

    #[test]
    fn sym_norm_path_graph() {
        // path 0-1-2, undirected
        let a = CooMatrix::from_triplets(
            3,
            3,
            Layout::RowMajor,
            [(0, 1, 1.0), (1, 0, 1.0), (1, 2, 1.0), (2, 1, 1.0)],
        )
        .unwrap();
        let n = MatrixRef::from(AdjacencyOp::SymNormSelfLoops.apply(&a).unwrap());
        // degrees with self loops: 2, 3, 2
        assert!((n.get(0, 0) - 0.5).abs() < 1e-7);
        assert!((n.get(0, 1) - 1.0 / 6f32.sqrt()).abs() < 1e-7);
        assert!((n.get(1, 1) - 1.0 / 3.0).abs() < 1e-7);
    }

    #[test]
    fn row_normalized_rows_sum_to_one() {
        let a = CooMatrix::from_triplets(
            3,
            3,
            Layout::RowMajor,
            [(0, 1, 1.0), (0, 2, 3.0), (2, 0, 5.0)],
        )
        .unwrap();
        let n = MatrixRef::from(AdjacencyOp::RowNormalized.apply(&a).unwrap());
        assert_eq!(n.get(0, 1) + n.get(0, 2), 1.0);
        assert_eq!(n.get(2, 0), 1.0);
        assert_eq!(n.nnz(), 3);
    }

    #[test]
    fn gin_self_term() {
        let a = CooMatrix::from_triplets(2, 2, Layout::RowMajor, [(0, 0, 1.0), (0, 1, 2.0)]).unwrap();
        let n = MatrixRef::from(AdjacencyOp::PlusIdentity { scale: 1.5 }.apply(&a).unwrap());
        assert_eq!((n.get(0, 0), n.get(0, 1), n.get(1, 1)), (2.5, 2.0, 1.5));
    }
}
