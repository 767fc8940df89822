//! Serializable program representation: kernels, their execution schemes
//! and the compile-time density sidecar.

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::graph::AdjacencyOp;
use super::model::Aggregation;
use super::partition::{DensityGrid, PartitionSizes};
use crate::matrix::Activation;

pub const IR_VERSION: u32 = 1;
pub const SIDECAR_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelType {
    Aggregate,
    Update,
    ElementwiseAdd,
}

impl KernelType {
    pub fn name(self) -> &'static str {
        match self {
            KernelType::Aggregate => "aggregate",
            KernelType::Update => "update",
            KernelType::ElementwiseAdd => "add",
        }
    }
}

/// A matrix a task can read.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Operand {
    Adjacency { index: usize },
    Feature { index: usize },
    Weight { name: String },
}

impl std::fmt::Display for Operand {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Operand::Adjacency { index } => write!(f, "A{index}"),
            Operand::Feature { index } => write!(f, "H{index}"),
            Operand::Weight { name } => write!(f, "{name}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockRef {
    pub operand: Operand,
    pub rows: Range<usize>,
    pub cols: Range<usize>,
}

impl BlockRef {
    pub fn new(operand: Operand, rows: Range<usize>, cols: Range<usize>) -> Self {
        Self {
            operand,
            rows,
            cols,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows.len(), self.cols.len())
    }

    pub fn elements(&self) -> usize {
        self.rows.len() * self.cols.len()
    }
}

/// One `X_it · Y_tk` multiplication of an accumulation chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRef {
    pub x: BlockRef,
    pub y: BlockRef,
}

/// One output block and the chain of pair products that computes it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskDescriptor {
    pub id: usize,
    /// Block coordinates of the output in the kernel's output grid.
    pub out_block: (usize, usize),
    /// `(g, f)`: the output fiber and the subfiber within it (Update only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fiber: Option<(usize, usize)>,
    pub out_rows: Range<usize>,
    pub out_cols: Range<usize>,
    pub pairs: Vec<PairRef>,
    /// Blocks summed elementwise (ElementwiseAdd only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub addends: Vec<BlockRef>,
}

impl TaskDescriptor {
    /// Accumulation chain length.
    pub fn k(&self) -> usize {
        self.pairs.len()
    }

    pub fn out_elements(&self) -> usize {
        self.out_rows.len() * self.out_cols.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionScheme {
    pub n1: usize,
    pub n2: usize,
    pub tasks: Vec<TaskDescriptor>,
    /// Upstream kernels whose outputs this kernel reads.
    pub deps: Vec<usize>,
}

/// What a kernel computes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum KernelOp {
    /// `H_out = A · H_in`
    Aggregate { adjacency: usize, input: usize },
    /// `H_out = H_in · W`
    Update { input: usize, weight: String },
    /// `H_out = H_lhs + H_rhs`
    Add { lhs: usize, rhs: usize },
}

impl KernelOp {
    pub fn kernel_type(&self) -> KernelType {
        match self {
            KernelOp::Aggregate { .. } => KernelType::Aggregate,
            KernelOp::Update { .. } => KernelType::Update,
            KernelOp::Add { .. } => KernelType::ElementwiseAdd,
        }
    }

    pub fn feature_inputs(&self) -> Vec<usize> {
        match self {
            KernelOp::Aggregate { input, .. } | KernelOp::Update { input, .. } => vec![*input],
            KernelOp::Add { lhs, rhs } => vec![*lhs, *rhs],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelIR {
    pub id: usize,
    pub layer_type: KernelType,
    pub layer_id: usize,
    pub f_in: usize,
    pub f_out: usize,
    pub num_vertices: usize,
    pub num_edges: usize,
    pub aggregation: Option<Aggregation>,
    pub activation: Activation,
    pub op: KernelOp,
    /// Feature slot this kernel writes.
    pub output: usize,
    pub scheme: ExecutionScheme,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSlot {
    pub index: usize,
    pub rows: usize,
    pub cols: usize,
    /// Kernel that writes the slot; `None` for the input features.
    pub producer: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjacencySlot {
    pub index: usize,
    pub op: AdjacencyOp,
    pub nnz: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSlot {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramIr {
    pub ir_version: u32,
    pub model: String,
    pub num_vertices: usize,
    pub num_edges: usize,
    pub partition: PartitionSizes,
    pub n_cores: usize,
    pub eta: usize,
    pub mem_budget: usize,
    pub adjacency: Vec<AdjacencySlot>,
    pub features: Vec<FeatureSlot>,
    pub weights: Vec<WeightSlot>,
    pub kernels: Vec<KernelIR>,
}

impl ProgramIr {
    pub fn output_feature(&self) -> usize {
        self.kernels.last().map_or(0, |k| k.output)
    }

    pub fn task_count(&self) -> usize {
        self.kernels.iter().map(|k| k.scheme.tasks.len()).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("IR serializes")
    }
}

/// Compile-time block densities. Intermediate feature slots are `None`
/// (unknown) until the runtime profiles them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySidecar {
    pub sidecar_version: u32,
    pub adjacency: Vec<DensityGrid>,
    pub weights: BTreeMap<String, DensityGrid>,
    pub features: Vec<Option<DensityGrid>>,
}

impl DensitySidecar {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sidecar serializes")
    }
}
