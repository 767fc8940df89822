//! Preprocessing: lower a model into kernels, pick partition sizes,
//! partition the compile-time matrices and enumerate every kernel's tasks.

pub mod graph;
pub mod ir;
pub mod model;
pub mod partition;

use std::collections::BTreeMap;

use log::{info, warn};
use serde::{Deserialize, Serialize};

pub use graph::{build_computation_graph, AdjacencyOp, KernelGraph, KernelNode};
pub use ir::{
    BlockRef, DensitySidecar, ExecutionScheme, KernelIR, KernelOp, KernelType, Operand,
    PairRef, ProgramIr, TaskDescriptor,
};
pub use model::{ActivationKind, Aggregation, LayerSpec, ModelKind, ModelSpec, WeightSet};
pub use partition::{
    choose_partition_sizes, DensityGrid, KernelWorkload, PartitionSizes, PartitionedMatrix,
    WorkloadKind,
};

use crate::error::{Error, Result};
use crate::matrix::{block_count, block_range, CooMatrix, DenseMatrix, MatrixRef};

pub const DEFAULT_CORES: usize = 7;
pub const DEFAULT_ETA: usize = 4;
/// 6 MiB of on-chip buffer per core, enough for 512 × 512 partitions.
pub const DEFAULT_MEM_BUDGET: usize = 6 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompileOptions {
    pub n_cores: usize,
    pub eta: usize,
    pub mem_budget: usize,
    /// Fixed `(N1, N2)` instead of the search.
    pub partition: Option<(usize, usize)>,
}

impl Default for CompileOptions {
    fn default() -> Self {
        Self {
            n_cores: DEFAULT_CORES,
            eta: DEFAULT_ETA,
            mem_budget: DEFAULT_MEM_BUDGET,
            partition: None,
        }
    }
}

/// IR plus every compile-time matrix, partitioned and profiled.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledProgram {
    pub ir: ProgramIr,
    pub adjacency: Vec<PartitionedMatrix>,
    pub weights: BTreeMap<String, PartitionedMatrix>,
    pub features: DenseMatrix,
    pub sidecar: DensitySidecar,
}

impl CompiledProgram {
    pub fn n1(&self) -> usize {
        self.ir.partition.n1
    }

    pub fn n2(&self) -> usize {
        self.ir.partition.n2
    }
}

pub fn kernel_workloads(graph: &KernelGraph, num_vertices: usize) -> Vec<KernelWorkload> {
    graph
        .kernels
        .iter()
        .filter_map(|k| {
            let v = num_vertices as u64;
            match k.kernel_type() {
                KernelType::Aggregate => Some(KernelWorkload {
                    kind: WorkloadKind::Aggregate,
                    q: v * k.f_in as u64,
                }),
                KernelType::Update => Some(KernelWorkload {
                    kind: WorkloadKind::Update,
                    q: v * k.f_out as u64,
                }),
                KernelType::ElementwiseAdd => None,
            }
        })
        .collect()
}

fn resolve_sizes(
    graph: &KernelGraph,
    num_vertices: usize,
    opts: &CompileOptions,
) -> Result<PartitionSizes> {
    let n_max = partition::max_partition(opts.mem_budget)?;
    match opts.partition {
        Some((n1, n2)) => {
            if n1 == 0 || n2 == 0 || n1 % n2 != 0 {
                return Err(Error::config(format!(
                    "partition override ({n1}, {n2}) needs positive sizes with N2 dividing N1"
                )));
            }
            if n1 > n_max {
                warn!("partition override N1={n1} exceeds the on-chip limit {n_max}");
            }
            Ok(PartitionSizes { n1, n2, n_max })
        }
        None => choose_partition_sizes(
            &kernel_workloads(graph, num_vertices),
            opts.mem_budget,
            opts.n_cores,
            opts.eta,
        ),
    }
}

fn aggregate_tasks(v: usize, f: usize, adj: usize, input: usize, n1: usize, n2: usize) -> Vec<TaskDescriptor> {
    let mut tasks = Vec::new();
    for i in 0..block_count(v, n1) {
        for k in 0..block_count(f, n2) {
            let (rows, cols) = (block_range(i, n1, v), block_range(k, n2, f));
            let pairs = (0..block_count(v, n1))
                .map(|j| {
                    let inner = block_range(j, n1, v);
                    PairRef {
                        x: BlockRef::new(Operand::Adjacency { index: adj }, rows.clone(), inner.clone()),
                        y: BlockRef::new(Operand::Feature { index: input }, inner, cols.clone()),
                    }
                })
                .collect();
            tasks.push(TaskDescriptor {
                id: tasks.len(),
                out_block: (i, k),
                fiber: None,
                out_rows: rows,
                out_cols: cols,
                pairs,
                addends: Vec::new(),
            });
        }
    }
    tasks
}

#[allow(clippy::too_many_arguments)]
fn update_tasks(
    v: usize,
    f1: usize,
    f2: usize,
    input: usize,
    weight: &str,
    n1: usize,
    n2: usize,
) -> Vec<TaskDescriptor> {
    let per_fiber = n1 / n2;
    let mut tasks = Vec::new();
    for i in 0..block_count(v, n2) {
        for k in 0..block_count(f2, n2) {
            let (rows, cols) = (block_range(i, n2, v), block_range(k, n2, f2));
            let pairs = (0..block_count(f1, n2))
                .map(|t| {
                    let inner = block_range(t, n2, f1);
                    PairRef {
                        x: BlockRef::new(Operand::Feature { index: input }, rows.clone(), inner.clone()),
                        y: BlockRef::new(Operand::Weight { name: weight.to_string() }, inner, cols.clone()),
                    }
                })
                .collect();
            tasks.push(TaskDescriptor {
                id: tasks.len(),
                out_block: (i, k),
                fiber: Some((i / per_fiber, i % per_fiber)),
                out_rows: rows,
                out_cols: cols,
                pairs,
                addends: Vec::new(),
            });
        }
    }
    tasks
}

fn add_tasks(v: usize, f: usize, lhs: usize, rhs: usize, n2: usize) -> Vec<TaskDescriptor> {
    let mut tasks = Vec::new();
    for i in 0..block_count(v, n2) {
        for k in 0..block_count(f, n2) {
            let (rows, cols) = (block_range(i, n2, v), block_range(k, n2, f));
            tasks.push(TaskDescriptor {
                id: tasks.len(),
                out_block: (i, k),
                fiber: None,
                out_rows: rows.clone(),
                out_cols: cols.clone(),
                pairs: Vec::new(),
                addends: vec![
                    BlockRef::new(Operand::Feature { index: lhs }, rows.clone(), cols.clone()),
                    BlockRef::new(Operand::Feature { index: rhs }, rows, cols),
                ],
            });
        }
    }
    tasks
}

/// Enumerates the tasks of one kernel for a `v`-vertex graph.
pub fn kernel_tasks(node: &KernelNode, v: usize, sizes: PartitionSizes) -> Vec<TaskDescriptor> {
    let (n1, n2) = (sizes.n1, sizes.n2);
    match &node.op {
        KernelOp::Aggregate { adjacency, input } => {
            aggregate_tasks(v, node.f_in, *adjacency, *input, n1, n2)
        }
        KernelOp::Update { input, weight } => {
            update_tasks(v, node.f_in, node.f_out, *input, weight, n1, n2)
        }
        KernelOp::Add { lhs, rhs } => add_tasks(v, node.f_out, *lhs, *rhs, n2),
    }
}

/// Compiles a model against a graph, its input features and its weights.
pub fn compile(
    spec: &ModelSpec,
    adjacency: &CooMatrix,
    features: &DenseMatrix,
    weights: &WeightSet,
    opts: &CompileOptions,
) -> Result<CompiledProgram> {
    let graph = build_computation_graph(spec)?;
    let v = adjacency.rows();
    if adjacency.cols() != v {
        return Err(Error::shape(format!(
            "adjacency must be square, got {:?}",
            adjacency.shape()
        )));
    }
    if features.rows() != v {
        return Err(Error::shape(format!(
            "features have {} rows but the graph has {v} vertices",
            features.rows()
        )));
    }
    if let Some(f) = spec.input_dim() {
        if features.cols() != f {
            return Err(Error::shape(format!(
                "features have {} columns but the model expects {f}",
                features.cols()
            )));
        }
    }
    weights.check_against(spec)?;
    if opts.n_cores == 0 {
        return Err(Error::config("at least one core is required"));
    }

    let sizes = resolve_sizes(&graph, v, opts)?;
    let (n1, n2) = (sizes.n1, sizes.n2);
    info!("partition sizes N1={n1} N2={n2} (N_max={})", sizes.n_max);

    let adj_parts = graph
        .adjacency
        .iter()
        .enumerate()
        .map(|(i, op)| {
            let a: MatrixRef = op.apply(adjacency)?.into();
            PartitionedMatrix::partition(format!("A{i}"), &a, n1, n1)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut weight_parts = BTreeMap::new();
    for (name, _, _) in spec.weight_shapes() {
        let w: MatrixRef = weights.get(&name)?.to_row_major().into();
        weight_parts.insert(name.clone(), PartitionedMatrix::partition(name, &w, n2, n2)?);
    }
    let features = features.to_row_major();

    let kernels = graph
        .kernels
        .iter()
        .enumerate()
        .map(|(id, node)| {
            let mut deps: Vec<usize> = node
                .op
                .feature_inputs()
                .into_iter()
                .filter_map(|slot| graph.producer(slot))
                .collect();
            deps.sort_unstable();
            deps.dedup();
            KernelIR {
                id,
                layer_type: node.kernel_type(),
                layer_id: node.layer_id,
                f_in: node.f_in,
                f_out: node.f_out,
                num_vertices: v,
                num_edges: adjacency.nnz(),
                aggregation: node.aggregation,
                activation: node.activation,
                op: node.op.clone(),
                output: node.output,
                scheme: ExecutionScheme {
                    n1,
                    n2,
                    tasks: kernel_tasks(node, v, sizes),
                    deps,
                },
            }
        })
        .collect();

    let ir = ProgramIr {
        ir_version: ir::IR_VERSION,
        model: spec.name.clone(),
        num_vertices: v,
        num_edges: adjacency.nnz(),
        partition: sizes,
        n_cores: opts.n_cores,
        eta: opts.eta,
        mem_budget: opts.mem_budget,
        adjacency: graph
            .adjacency
            .iter()
            .zip(&adj_parts)
            .enumerate()
            .map(|(index, (&op, p))| ir::AdjacencySlot {
                index,
                op,
                nnz: p.nnz(),
            })
            .collect(),
        features: graph
            .feature_cols
            .iter()
            .enumerate()
            .map(|(index, &cols)| ir::FeatureSlot {
                index,
                rows: v,
                cols,
                producer: graph.producer(index),
            })
            .collect(),
        weights: spec
            .weight_shapes()
            .into_iter()
            .map(|(name, rows, cols)| ir::WeightSlot { name, rows, cols })
            .collect(),
        kernels,
    };

    let mut feature_density = vec![None; graph.feature_cols.len()];
    feature_density[0] = Some(DensityGrid::profile(&features.clone().into(), n2, n2));
    let sidecar = DensitySidecar {
        sidecar_version: ir::SIDECAR_VERSION,
        adjacency: adj_parts.iter().map(|p| p.densities.clone()).collect(),
        weights: weight_parts
            .iter()
            .map(|(k, p)| (k.clone(), p.densities.clone()))
            .collect(),
        features: feature_density,
    };

    Ok(CompiledProgram {
        ir,
        adjacency: adj_parts,
        weights: weight_parts,
        features,
        sidecar,
    })
}
