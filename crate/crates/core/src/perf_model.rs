//! Analytical cost model of the three primitives and the density-driven
//! selector built on top of it.
//!
//! For `Z = X·Y` with `X: m×n` (density `αx`) and `Y: n×d` (density `αy`):
//!
//! | mode  | MACs/cycle | cycles                  |
//! |-------|-----------:|-------------------------|
//! | GEMM  | p²         | mnd / p²                |
//! | SpDMM | p²/2       | α_min · 2mnd / p²       |
//! | SPMM  | p          | αx · αy · mnd / p       |
//!
//! Comparing the three closed forms splits `0 ≤ α_min ≤ α_max ≤ 1` into
//! three disjoint regions: GEMM when `α_min ≥ 1/2`, SpDMM when
//! `α_min < 1/2 ∧ α_max ≥ 2/p`, SPMM otherwise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::primitives::PrimitiveKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Choice {
    Gemm,
    Spdmm,
    Spmm,
    Skip,
}

impl Choice {
    pub fn primitive(self) -> Option<PrimitiveKind> {
        match self {
            Choice::Gemm => Some(PrimitiveKind::Gemm),
            Choice::Spdmm => Some(PrimitiveKind::Spdmm),
            Choice::Spmm => Some(PrimitiveKind::Spmm),
            Choice::Skip => None,
        }
    }
}

impl From<PrimitiveKind> for Choice {
    fn from(k: PrimitiveKind) -> Self {
        match k {
            PrimitiveKind::Gemm => Choice::Gemm,
            PrimitiveKind::Spdmm => Choice::Spdmm,
            PrimitiveKind::Spmm => Choice::Spmm,
        }
    }
}

/// Which operand of a pair is fed to the sparse input buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SparseOperand {
    Left,
    Right,
    Both,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairDecision {
    pub choice: Choice,
    pub sparse_operand: SparseOperand,
    pub predicted_cycles: u64,
}

/// Operand dimensions of one pair multiplication `(m×n)·(n×d)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairDims {
    pub m: usize,
    pub n: usize,
    pub d: usize,
}

impl PairDims {
    pub fn new(m: usize, n: usize, d: usize) -> Self {
        Self { m, n, d }
    }

    fn volume(&self) -> f64 {
        self.m as f64 * self.n as f64 * self.d as f64
    }
}

fn check_density(a: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&a) {
        return Err(Error::Domain { value: a });
    }
    Ok(())
}

/// Ceiling that absorbs floating error from densities computed as
/// `nnz / total`, so `α·total` lands on the exact integer.
fn ceil_cycles(x: f64) -> u64 {
    if x <= 0.0 {
        return 0;
    }
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.max(1.0) {
        r as u64
    } else {
        x.ceil() as u64
    }
}

/// Unrounded cycle estimate, useful for region analysis.
pub fn predict_cycles_raw(kind: PrimitiveKind, dims: PairDims, ax: f64, ay: f64, p_sys: usize) -> f64 {
    let p = p_sys as f64;
    let v = dims.volume();
    match kind {
        PrimitiveKind::Gemm => v / (p * p),
        PrimitiveKind::Spdmm => ax.min(ay) * 2.0 * v / (p * p),
        PrimitiveKind::Spmm => ax * ay * v / p,
    }
}

pub fn predict_cycles(
    kind: PrimitiveKind,
    dims: PairDims,
    ax: f64,
    ay: f64,
    p_sys: usize,
) -> Result<u64> {
    check_density(ax)?;
    check_density(ay)?;
    Ok(ceil_cycles(predict_cycles_raw(kind, dims, ax, ay, p_sys)))
}

/// Predicted cycles of a pair when the caller fixes which side is sparse.
/// SpDMM is charged by the density of the named sparse side, which is what
/// a static mapping pays when it picks the denser operand.
pub fn predict_forced(
    kind: PrimitiveKind,
    sparse: SparseOperand,
    dims: PairDims,
    ax: f64,
    ay: f64,
    p_sys: usize,
) -> Result<u64> {
    check_density(ax)?;
    check_density(ay)?;
    let (ax, ay) = match (kind, sparse) {
        (PrimitiveKind::Spdmm, SparseOperand::Left) => (ax, 1.0),
        (PrimitiveKind::Spdmm, SparseOperand::Right) => (1.0, ay),
        _ => (ax, ay),
    };
    Ok(ceil_cycles(predict_cycles_raw(kind, dims, ax, ay, p_sys)))
}

/// The selector: skip empty pairs, then pick by the region thresholds.
/// Boundaries resolve toward GEMM at `α_min = 1/2` and toward SpDMM at
/// `α_max = 2/p`.
pub fn select_primitive(ax: f64, ay: f64, p_sys: usize) -> Result<(Choice, SparseOperand)> {
    check_density(ax)?;
    check_density(ay)?;
    let (amin, amax) = (ax.min(ay), ax.max(ay));
    Ok(if amin == 0.0 {
        (Choice::Skip, SparseOperand::None)
    } else if amin >= 0.5 {
        (Choice::Gemm, SparseOperand::None)
    } else if amax >= 2.0 / p_sys as f64 {
        let side = if ax <= ay {
            SparseOperand::Left
        } else {
            SparseOperand::Right
        };
        (Choice::Spdmm, side)
    } else {
        (Choice::Spmm, SparseOperand::Both)
    })
}

impl PairDecision {
    pub fn dynamic(dims: PairDims, ax: f64, ay: f64, p_sys: usize) -> Result<Self> {
        let (choice, sparse_operand) = select_primitive(ax, ay, p_sys)?;
        let predicted_cycles = match choice.primitive() {
            Some(kind) => predict_cycles(kind, dims, ax, ay, p_sys)?,
            None => 0,
        };
        Ok(Self {
            choice,
            sparse_operand,
            predicted_cycles,
        })
    }

    pub fn forced(
        kind: PrimitiveKind,
        sparse_operand: SparseOperand,
        dims: PairDims,
        ax: f64,
        ay: f64,
        p_sys: usize,
    ) -> Result<Self> {
        Ok(Self {
            choice: kind.into(),
            sparse_operand,
            predicted_cycles: predict_forced(kind, sparse_operand, dims, ax, ay, p_sys)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Gemm,
    Spdmm,
    Spmm,
}

fn regions_claiming(amin: f64, amax: f64, p_sys: usize) -> Vec<Region> {
    let t = 2.0 / p_sys as f64;
    let mut out = Vec::with_capacity(1);
    if amin >= 0.5 {
        out.push(Region::Gemm);
    }
    if amin < 0.5 && amax >= t {
        out.push(Region::Spdmm);
    }
    if amin < 0.5 && amax < t {
        out.push(Region::Spmm);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub p_sys: usize,
    pub points: usize,
    pub gemm_points: usize,
    pub spdmm_points: usize,
    pub spmm_points: usize,
    pub skip_points: usize,
    pub violations: Vec<String>,
}

/// Enumerates a grid over `0 ≤ α_min ≤ α_max ≤ 1` (plus both threshold
/// lines) and checks that exactly one region claims every point and that the
/// selector picks an argmin of the continuous cost model, with the stated
/// tie-breaks. Any violation is returned as an error carrying the report.
pub fn region_partition_check(p_sys: usize, step: f64) -> Result<RegionReport> {
    if p_sys < 8 {
        return Err(Error::config(format!("p_sys must be >= 8, got {p_sys}")));
    }
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::config(format!("grid step {step} out of range")));
    }
    let steps = (1.0 / step).round() as usize;
    let mut axis: Vec<f64> = (0..=steps).map(|i| i as f64 / steps as f64).collect();
    axis.push(0.5);
    axis.push(2.0 / p_sys as f64);
    axis.sort_by(|a, b| a.partial_cmp(b).unwrap());
    axis.dedup();

    // any dims work for the continuous comparison; keep them divisible
    let dims = PairDims::new(4 * p_sys, 4 * p_sys, 4 * p_sys);
    let mut report = RegionReport {
        p_sys,
        points: 0,
        gemm_points: 0,
        spdmm_points: 0,
        spmm_points: 0,
        skip_points: 0,
        violations: Vec::new(),
    };
    for (i, &amin) in axis.iter().enumerate() {
        for &amax in &axis[i..] {
            report.points += 1;
            let claims = regions_claiming(amin, amax, p_sys);
            if claims.len() != 1 {
                report
                    .violations
                    .push(format!("({amin}, {amax}) claimed by {claims:?}"));
                continue;
            }
            let (choice, _) = select_primitive(amin, amax, p_sys)?;
            let expected = match claims[0] {
                Region::Gemm => Choice::Gemm,
                Region::Spdmm => Choice::Spdmm,
                Region::Spmm => Choice::Spmm,
            };
            match choice {
                Choice::Skip => report.skip_points += 1,
                Choice::Gemm => report.gemm_points += 1,
                Choice::Spdmm => report.spdmm_points += 1,
                Choice::Spmm => report.spmm_points += 1,
            }
            if choice != Choice::Skip && choice != expected {
                report.violations.push(format!(
                    "({amin}, {amax}) selector {choice:?} but region {:?}",
                    claims[0]
                ));
            }
            if choice == Choice::Skip && amin != 0.0 {
                report.violations.push(format!("({amin}, {amax}) skipped non-empty pair"));
            }
            let costs: Vec<(PrimitiveKind, f64)> = PrimitiveKind::ALL
                .iter()
                .map(|&k| (k, predict_cycles_raw(k, dims, amin, amax, p_sys)))
                .collect();
            let best = costs.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
            let chosen = match choice.primitive() {
                Some(k) => costs.iter().find(|c| c.0 == k).unwrap().1,
                None => 0.0,
            };
            if chosen > best * (1.0 + 1e-12) + 1e-12 {
                report.violations.push(format!(
                    "({amin}, {amax}) selector {choice:?} costs {chosen} > min {best}"
                ));
            }
            // exact ties must resolve as specified
            if choice != Choice::Skip {
                let tied: Vec<PrimitiveKind> = costs
                    .iter()
                    .filter(|c| (c.1 - best).abs() <= 1e-12 * best.max(1.0))
                    .map(|c| c.0)
                    .collect();
                if tied.len() > 1 {
                    let want = if tied.contains(&PrimitiveKind::Gemm) && amin >= 0.5 {
                        Choice::Gemm
                    } else if tied.contains(&PrimitiveKind::Spdmm) {
                        Choice::Spdmm
                    } else {
                        Choice::Spmm
                    };
                    if want != choice {
                        report.violations.push(format!(
                            "({amin}, {amax}) tie {tied:?} resolved to {choice:?}, want {want:?}"
                        ));
                    }
                }
            }
        }
    }
    if report.violations.is_empty() {
        Ok(report)
    } else {
        Err(Error::ModelInconsistency(format!(
            "{} violations at p_sys={}: first {}",
            report.violations.len(),
            p_sys,
            report.violations[0]
        )))
    }
}
