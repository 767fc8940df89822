//! Runtime system and accelerator simulator: per-pair primitive mapping,
//! task scheduling on simulated cores, and write-back profiling.

pub mod analyzer;
pub mod engine;
pub mod reference;
pub mod report;
pub mod scheduler;

pub use analyzer::{analyze_task, decide_pair, static_mapping, AnalyzedPair, DensityStore, MappingStrategy};
pub use engine::{run_inference, InferenceResult, RunConfig, DEFAULT_BYTES_PER_CYCLE};
pub use reference::reference_inference;
pub use report::{
    cycles_to_ms, CoreReport, DecisionHistogram, KernelReport, PairTrace, SimReport, TaskCounter,
};
pub use scheduler::{makespan_of, task_duration, Assignment, CoreState, KernelSchedule, Scheduler, TaskWork};
