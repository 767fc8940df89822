//! Simulation results.

use serde::{Deserialize, Serialize};

use super::analyzer::MappingStrategy;
use crate::compiler::KernelType;
use crate::perf_model::{Choice, PairDecision, PairDims};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionHistogram {
    pub gemm: u64,
    pub spdmm: u64,
    pub spmm: u64,
    pub skip: u64,
}

impl DecisionHistogram {
    pub fn record(&mut self, c: Choice) {
        match c {
            Choice::Gemm => self.gemm += 1,
            Choice::Spdmm => self.spdmm += 1,
            Choice::Spmm => self.spmm += 1,
            Choice::Skip => self.skip += 1,
        }
    }

    pub fn merge(&mut self, o: &DecisionHistogram) {
        self.gemm += o.gemm;
        self.spdmm += o.spdmm;
        self.spmm += o.spmm;
        self.skip += o.skip;
    }

    pub fn total(&self) -> u64 {
        self.gemm + self.spdmm + self.spmm + self.skip
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelReport {
    pub kernel_id: usize,
    pub layer_type: KernelType,
    pub layer_id: usize,
    pub tasks: usize,
    pub start: u64,
    pub end: u64,
    pub makespan: u64,
    /// Longest and summed task durations as scheduled.
    pub max_task: u64,
    pub sum_task: u64,
    pub predicted_cycles: u64,
    pub executed_cycles: u64,
    pub epilogue_cycles: u64,
    pub switch_cycles: u64,
    pub transform_cycles: u64,
    pub transfer_cycles: u64,
    pub histogram: DecisionHistogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreReport {
    pub id: usize,
    pub busy_cycles: u64,
    pub switch_cycles: u64,
    pub tasks: usize,
    pub utilization: f64,
}

/// Chain length and analyzer decisions of one task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskCounter {
    pub kernel: usize,
    pub task: usize,
    pub k: usize,
    pub decisions: usize,
}

/// One analyzed and executed pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairTrace {
    pub kernel: usize,
    pub task: usize,
    pub pair: usize,
    pub dims: PairDims,
    pub x_density: f64,
    pub y_density: f64,
    pub decision: PairDecision,
    pub executed_cycles: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub strategy: MappingStrategy,
    pub n_cores: usize,
    pub p_sys: usize,
    pub visible_overheads: bool,
    pub makespan: u64,
    pub kernels: Vec<KernelReport>,
    pub cores: Vec<CoreReport>,
    pub histogram: DecisionHistogram,
    pub predicted_cycles: u64,
    pub executed_cycles: u64,
    pub epilogue_cycles: u64,
    pub switch_cycles: u64,
    pub transform_cycles: u64,
    pub transfer_cycles: u64,
    pub analyzer_decisions: u64,
    pub task_counters: Vec<TaskCounter>,
    #[serde(skip)]
    pub trace: Vec<PairTrace>,
}

impl SimReport {
    /// Total pair compute cycles plus elementwise epilogues.
    pub fn compute_cycles(&self) -> u64 {
        self.executed_cycles + self.epilogue_cycles
    }

    pub fn latency_ms(&self, clock_mhz: f64) -> f64 {
        cycles_to_ms(self.makespan, clock_mhz)
    }
}

pub fn cycles_to_ms(cycles: u64, clock_mhz: f64) -> f64 {
    cycles as f64 / (clock_mhz * 1e3)
}
