//! The three execution modes of a computation core.
//!
//! Each kernel computes `acc + X·Y` and reports the cycles the ALU array
//! would spend: `p²` MACs per cycle for GEMM, `p²/2` for SpDMM and `p` for
//! SPMM. For every output element the products are accumulated in ascending
//! inner-index order, the same order as [`dense_matmul_oracle`], so the three
//! modes agree with the oracle bit for bit when `acc` is zero.
//!
//! [`dense_matmul_oracle`]: crate::matrix::dense_matmul_oracle

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{CooMatrix, DenseMatrix, Layout, MatrixRef};
use crate::transform::{transform_layout, DEFAULT_LANE_WIDTH};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimitiveKind {
    Gemm,
    Spdmm,
    Spmm,
}

impl PrimitiveKind {
    pub const ALL: [PrimitiveKind; 3] = [PrimitiveKind::Gemm, PrimitiveKind::Spdmm, PrimitiveKind::Spmm];

    pub fn name(self) -> &'static str {
        match self {
            PrimitiveKind::Gemm => "GEMM",
            PrimitiveKind::Spdmm => "SpDMM",
            PrimitiveKind::Spmm => "SPMM",
        }
    }
}

impl std::fmt::Display for PrimitiveKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoreConfig {
    /// ALU array dimension.
    pub p_sys: usize,
    /// Elements per cycle of the transform units.
    pub lane_width: usize,
}

impl Default for CoreConfig {
    fn default() -> Self {
        Self {
            p_sys: 16,
            lane_width: DEFAULT_LANE_WIDTH,
        }
    }
}

impl CoreConfig {
    pub fn with_p_sys(p_sys: usize) -> Self {
        Self {
            p_sys,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p_sys < 8 {
            return Err(Error::config(format!("p_sys must be >= 8, got {}", self.p_sys)));
        }
        if self.lane_width == 0 {
            return Err(Error::config("lane width must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecResult {
    pub output: DenseMatrix,
    pub compute_cycles: u64,
    pub macs_executed: u64,
}

fn check_acc(acc: &DenseMatrix, m: usize, d: usize) -> Result<()> {
    if acc.shape() != (m, d) {
        return Err(Error::shape(format!(
            "accumulator {:?} does not match product shape ({m}, {d})",
            acc.shape()
        )));
    }
    if acc.layout() != Layout::RowMajor {
        return Err(Error::Format("result buffer must be row-major".into()));
    }
    Ok(())
}

fn check_inner(x: (usize, usize), y: (usize, usize)) -> Result<()> {
    if x.1 != y.0 {
        return Err(Error::shape(format!("product of {x:?} and {y:?}")));
    }
    Ok(())
}

/// GEMM cycles on a `p × p` output-stationary array: every `p`-tile of the
/// output needs `n` beats per `p`-deep slice of the inner dimension.
pub fn gemm_cycles(m: usize, n: usize, d: usize, p: usize) -> u64 {
    (m.div_ceil(p) * n.div_ceil(p) * d.div_ceil(p) * p) as u64
}

/// SpDMM cycles for `nnz` sparse elements each multiplied by a dense row or
/// column of length `len`.
pub fn spdmm_cycles(nnz: usize, len: usize, p: usize) -> u64 {
    ((nnz * len * 2) as u64).div_ceil((p * p) as u64)
}

pub fn spmm_cycles(pairs: u64, p: usize) -> u64 {
    pairs.div_ceil(p as u64)
}

/// Dense × dense. `x` must be row-major and `y` column-major.
pub fn exec_gemm(
    x: &DenseMatrix,
    y: &DenseMatrix,
    acc: &DenseMatrix,
    cfg: &CoreConfig,
) -> Result<ExecResult> {
    check_inner(x.shape(), y.shape())?;
    let (m, n, d) = (x.rows(), x.cols(), y.cols());
    check_acc(acc, m, d)?;
    if x.layout() != Layout::RowMajor || y.layout() != Layout::ColMajor {
        return Err(Error::Format(
            "GEMM expects a row-major left operand and a column-major right operand".into(),
        ));
    }
    let mut out = acc.clone();
    if m * n * d > 0 {
        let xv = x.values();
        let yv = y.values();
        let ov = out.values_mut();
        for i in 0..m {
            let xr = &xv[i * n..(i + 1) * n];
            for j in 0..d {
                let yc = &yv[j * n..(j + 1) * n];
                let mut s = ov[i * d + j];
                for k in 0..n {
                    s += xr[k] * yc[k];
                }
                ov[i * d + j] = s;
            }
        }
    }
    Ok(ExecResult {
        output: out,
        compute_cycles: gemm_cycles(m, n, d, cfg.p_sys),
        macs_executed: (m * n * d) as u64,
    })
}

fn row_major_coo(c: &CooMatrix) -> std::borrow::Cow<'_, CooMatrix> {
    if c.layout() == Layout::RowMajor {
        std::borrow::Cow::Borrowed(c)
    } else {
        match transform_layout(&MatrixRef::Coo(c.clone()), Layout::RowMajor) {
            MatrixRef::Coo(r) => std::borrow::Cow::Owned(r),
            MatrixRef::Dense(_) => unreachable!(),
        }
    }
}

/// Sparse × dense by scatter-gather: each nonzero `x[r][i]` fetches row
/// `y[i]` and reduces `x[r][i]·y[i]` into output row `r`.
pub fn exec_spdmm(
    sparse_x: &CooMatrix,
    dense_y: &DenseMatrix,
    acc: &DenseMatrix,
    cfg: &CoreConfig,
) -> Result<ExecResult> {
    check_inner(sparse_x.shape(), dense_y.shape())?;
    let (m, d) = (sparse_x.rows(), dense_y.cols());
    check_acc(acc, m, d)?;
    if dense_y.layout() != Layout::RowMajor {
        return Err(Error::Format("SpDMM expects a row-major dense operand".into()));
    }
    let x = row_major_coo(sparse_x);
    let mut out = acc.clone();
    let yv = dense_y.values();
    let ov = out.values_mut();
    for e in x.entries() {
        let yr = &yv[e.col * d..(e.col + 1) * d];
        let zr = &mut ov[e.row * d..(e.row + 1) * d];
        for (z, y) in zr.iter_mut().zip(yr) {
            *z += e.value * *y;
        }
    }
    let nnz = x.nnz();
    Ok(ExecResult {
        output: out,
        compute_cycles: spdmm_cycles(nnz, d, cfg.p_sys),
        macs_executed: (nnz * d) as u64,
    })
}

/// Dense × sparse: the mirrored scatter-gather, with the right operand in
/// the sparse buffer. Each nonzero `y[i][j]` reduces column `x[:, i]` into
/// output column `j`.
pub fn exec_spdmm_rhs(
    dense_x: &DenseMatrix,
    sparse_y: &CooMatrix,
    acc: &DenseMatrix,
    cfg: &CoreConfig,
) -> Result<ExecResult> {
    check_inner(dense_x.shape(), sparse_y.shape())?;
    let (m, d) = (dense_x.rows(), sparse_y.cols());
    check_acc(acc, m, d)?;
    if dense_x.layout() != Layout::RowMajor {
        return Err(Error::Format("SpDMM expects a row-major dense operand".into()));
    }
    let y = row_major_coo(sparse_y);
    let n = dense_x.cols();
    let mut out = acc.clone();
    let xv = dense_x.values();
    let ov = out.values_mut();
    for r in 0..m {
        let xr = &xv[r * n..(r + 1) * n];
        let zr = &mut ov[r * d..(r + 1) * d];
        for e in y.entries() {
            zr[e.col] += xr[e.row] * e.value;
        }
    }
    let nnz = y.nnz();
    Ok(ExecResult {
        output: out,
        compute_cycles: spdmm_cycles(nnz, m, cfg.p_sys),
        macs_executed: (nnz * m) as u64,
    })
}

/// Number of nonzero products a row-wise sparse × sparse product performs:
/// the sum over nonzeros `x[r][i]` of the nonzero count of row `y[i]`.
pub fn spmm_pair_count(x: &CooMatrix, y: &CooMatrix) -> u64 {
    let offsets = row_major_coo(y).major_offsets();
    row_major_coo(x)
        .entries()
        .iter()
        .map(|e| (offsets[e.col + 1] - offsets[e.col]) as u64)
        .sum()
}

/// Sparse × sparse by row-wise product: output row `r` accumulates
/// `x[r][i]·y[i]` over the nonzeros of `x[r]`, touching only the nonzeros of
/// `y[i]`. Both operands must be row-major.
pub fn exec_spmm(
    sparse_x: &CooMatrix,
    sparse_y: &CooMatrix,
    acc: &DenseMatrix,
    cfg: &CoreConfig,
) -> Result<ExecResult> {
    check_inner(sparse_x.shape(), sparse_y.shape())?;
    let (m, d) = (sparse_x.rows(), sparse_y.cols());
    check_acc(acc, m, d)?;
    if sparse_x.layout() != Layout::RowMajor || sparse_y.layout() != Layout::RowMajor {
        return Err(Error::Format("SPMM expects row-major sparse operands".into()));
    }
    let y_offsets = sparse_y.major_offsets();
    let y_entries = sparse_y.entries();
    let mut out = acc.clone();
    let ov = out.values_mut();
    let mut pairs = 0u64;
    for e in sparse_x.entries() {
        let row = &y_entries[y_offsets[e.col]..y_offsets[e.col + 1]];
        pairs += row.len() as u64;
        let base = e.row * d;
        for f in row {
            ov[base + f.col] += e.value * f.value;
        }
    }
    Ok(ExecResult {
        output: out,
        compute_cycles: spmm_cycles(pairs, cfg.p_sys),
        macs_executed: pairs,
    })
}

/// Cycles lost when a core changes execution mode between two consecutive
/// pair multiplications.
pub const fn mode_switch_cost() -> u64 {
    1
}

/// Tracks the active mode of one core and charges the switch penalty.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ModeTracker {
    last: Option<PrimitiveKind>,
}

impl ModeTracker {
    pub fn new(last: Option<PrimitiveKind>) -> Self {
        Self { last }
    }

    pub fn last(&self) -> Option<PrimitiveKind> {
        self.last
    }

    pub fn charge(&mut self, kind: PrimitiveKind) -> u64 {
        let cost = match self.last {
            Some(prev) if prev != kind => mode_switch_cost(),
            _ => 0,
        };
        self.last = Some(kind);
        cost
    }

    /// Switch cycles for running `kinds` in order starting from this state.
    pub fn charge_all(&mut self, kinds: impl IntoIterator<Item = PrimitiveKind>) -> u64 {
        kinds.into_iter().map(|k| self.charge(k)).sum()
    }
}
