//! Sparsity-aware GNN inference: a compiler that partitions a model and
//! graph into blocked matrix-multiplication tasks, a runtime that maps every
//! block pair to GEMM, SpDMM or SPMM from profiled densities, and a
//! multi-core accelerator simulator that executes the tasks and counts
//! cycles.

pub mod compiler;
pub mod error;
pub mod experiment;
pub mod generate;
pub mod io;
pub mod matrix;
pub mod perf_model;
pub mod primitives;
pub mod runtime;
pub mod transform;

pub use error::{Error, Result};
