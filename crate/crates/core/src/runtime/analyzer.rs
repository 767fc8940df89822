//! Per-pair kernel-to-primitive mapping.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::compiler::{BlockRef, DensityGrid, DensitySidecar, KernelType, Operand, TaskDescriptor};
use crate::error::{Error, Result};
use crate::perf_model::{PairDecision, PairDims, SparseOperand};
use crate::primitives::{CoreConfig, PrimitiveKind};
use crate::transform::DensityRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MappingStrategy {
    /// Aggregate on SpDMM with A sparse, Update on GEMM.
    Static1,
    /// Everything on SpDMM with the left operand sparse.
    Static2,
    Dynamic,
}

impl MappingStrategy {
    pub const ALL: [MappingStrategy; 3] = [
        MappingStrategy::Static1,
        MappingStrategy::Static2,
        MappingStrategy::Dynamic,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            MappingStrategy::Static1 => "s1",
            MappingStrategy::Static2 => "s2",
            MappingStrategy::Dynamic => "dynamic",
        }
    }
}

impl std::fmt::Display for MappingStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for MappingStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "s1" | "static1" => Ok(MappingStrategy::Static1),
            "s2" | "static2" => Ok(MappingStrategy::Static2),
            "dynamic" | "dyn" => Ok(MappingStrategy::Dynamic),
            other => Err(Error::config(format!(
                "unknown strategy '{other}' (expected s1, s2 or dynamic)"
            ))),
        }
    }
}

/// Block densities known to the runtime: compile-time grids for the
/// adjacency, weights and input features, plus runtime-profiled grids for
/// every feature slot written so far.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityStore {
    pub adjacency: Vec<DensityGrid>,
    pub weights: BTreeMap<String, DensityGrid>,
    pub features: Vec<Option<DensityGrid>>,
}

impl DensityStore {
    pub fn from_sidecar(s: &DensitySidecar) -> Self {
        Self {
            adjacency: s.adjacency.clone(),
            weights: s.weights.clone(),
            features: s.features.clone(),
        }
    }

    pub fn set_feature(&mut self, slot: usize, grid: DensityGrid) {
        if slot >= self.features.len() {
            self.features.resize(slot + 1, None);
        }
        self.features[slot] = Some(grid);
    }

    pub fn lookup(&self, b: &BlockRef) -> Result<DensityRecord> {
        let grid = match &b.operand {
            Operand::Adjacency { index } => self.adjacency.get(*index),
            Operand::Weight { name } => self.weights.get(name),
            Operand::Feature { index } => self.features.get(*index).and_then(Option::as_ref),
        };
        let grid = grid.ok_or_else(|| {
            Error::RuntimeOrder(format!(
                "density of {} is unknown: it has not been profiled yet",
                b.operand
            ))
        })?;
        grid.query(b.rows.clone(), b.cols.clone())
    }
}

/// The primitive and sparse side a static strategy forces on a pair.
pub fn static_mapping(strategy: MappingStrategy, kind: KernelType) -> Option<(PrimitiveKind, SparseOperand)> {
    match (strategy, kind) {
        (_, KernelType::ElementwiseAdd) | (MappingStrategy::Dynamic, _) => None,
        (MappingStrategy::Static1, KernelType::Aggregate) => {
            Some((PrimitiveKind::Spdmm, SparseOperand::Left))
        }
        (MappingStrategy::Static1, KernelType::Update) => {
            Some((PrimitiveKind::Gemm, SparseOperand::None))
        }
        (MappingStrategy::Static2, _) => Some((PrimitiveKind::Spdmm, SparseOperand::Left)),
    }
}

/// Decision for one pair with known operand densities.
pub fn decide_pair(
    strategy: MappingStrategy,
    kind: KernelType,
    dims: PairDims,
    ax: f64,
    ay: f64,
    cfg: &CoreConfig,
) -> Result<PairDecision> {
    match static_mapping(strategy, kind) {
        Some((prim, side)) => PairDecision::forced(prim, side, dims, ax, ay, cfg.p_sys),
        None => PairDecision::dynamic(dims, ax, ay, cfg.p_sys),
    }
}

/// Pair densities and decision, in chain order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyzedPair {
    pub dims: PairDims,
    pub x_density: f64,
    pub y_density: f64,
    pub decision: PairDecision,
}

/// Maps every pair of `task` to a primitive. Exactly one decision per pair.
pub fn analyze_task(
    task: &TaskDescriptor,
    kind: KernelType,
    densities: &DensityStore,
    strategy: MappingStrategy,
    cfg: &CoreConfig,
) -> Result<Vec<AnalyzedPair>> {
    task.pairs
        .iter()
        .map(|p| {
            let (m, n) = p.x.shape();
            let dims = PairDims::new(m, n, p.y.cols.len());
            let ax = densities.lookup(&p.x)?.density;
            let ay = densities.lookup(&p.y)?.density;
            Ok(AnalyzedPair {
                dims,
                x_density: ax,
                y_density: ay,
                decision: decide_pair(strategy, kind, dims, ax, ay, cfg)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perf_model::Choice;

    fn cfg() -> CoreConfig {
        CoreConfig::default()
    }

    #[test]
    fn dynamic_examples() {
        let dims = PairDims::new(16, 16, 16);
        let d = decide_pair(MappingStrategy::Dynamic, KernelType::Update, dims, 1.0, 1.0, &cfg()).unwrap();
        assert_eq!(d.choice, Choice::Gemm);
        let d = decide_pair(MappingStrategy::Dynamic, KernelType::Aggregate, dims, 0.0, 1.0, &cfg()).unwrap();
        assert_eq!(d.choice, Choice::Skip);
    }

    #[test]
    fn static_examples() {
        let dims = PairDims::new(16, 16, 16);
        let d = decide_pair(MappingStrategy::Static1, KernelType::Update, dims, 0.01, 1.0, &cfg()).unwrap();
        assert_eq!(d.choice, Choice::Gemm);
        let d = decide_pair(MappingStrategy::Static1, KernelType::Aggregate, dims, 0.0, 1.0, &cfg()).unwrap();
        assert_eq!((d.choice, d.sparse_operand), (Choice::Spdmm, SparseOperand::Left));
        let d = decide_pair(MappingStrategy::Static2, KernelType::Update, dims, 0.9, 0.1, &cfg()).unwrap();
        assert_eq!((d.choice, d.sparse_operand), (Choice::Spdmm, SparseOperand::Left));
    }

    #[test]
    fn parse_strategy() {
        assert_eq!("S1".parse::<MappingStrategy>().unwrap(), MappingStrategy::Static1);
        assert_eq!("dynamic".parse::<MappingStrategy>().unwrap(), MappingStrategy::Dynamic);
        assert!("s3".parse::<MappingStrategy>().is_err());
    }

    #[test]
    fn unknown_density_is_order_violation() {
        let store = DensityStore {
            adjacency: vec![],
            weights: BTreeMap::new(),
            features: vec![None, None],
        };
        let b = BlockRef::new(Operand::Feature { index: 1 }, 0..4, 0..4);
        assert!(matches!(store.lookup(&b), Err(Error::RuntimeOrder(_))));
    }
}
