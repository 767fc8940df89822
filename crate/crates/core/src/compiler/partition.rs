//! Block geometry, per-block density grids and partition-size selection.

use std::ops::Range;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{
    block_count, block_range, is_nonzero, slice_block, CooEntry, CooMatrix, DenseMatrix, Layout,
    MatrixRef,
};
use crate::transform::DensityRecord;

pub const MIN_PARTITION: usize = 16;

/// Bytes per core needed by a partition of size `n`: two input blocks and
/// one result block of 32-bit values.
pub fn partition_bytes(n: usize) -> usize {
    3 * n * n * 4
}

/// Largest power of two whose three `N × N` buffers fit in `mem_budget`.
pub fn max_partition(mem_budget: usize) -> Result<usize> {
    if partition_bytes(MIN_PARTITION) > mem_budget {
        return Err(Error::config(format!(
            "on-chip budget of {mem_budget} bytes cannot hold {MIN_PARTITION}x{MIN_PARTITION} partitions ({} bytes needed)",
            partition_bytes(MIN_PARTITION)
        )));
    }
    let mut n = MIN_PARTITION;
    while partition_bytes(2 * n) <= mem_budget {
        n *= 2;
    }
    Ok(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkloadKind {
    Aggregate,
    Update,
}

/// Per-kernel workload `Q`: `|V|·f_in` for Aggregate, `|V|·f_out` for Update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelWorkload {
    pub kind: WorkloadKind,
    pub q: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionSizes {
    pub n1: usize,
    pub n2: usize,
    pub n_max: usize,
}

fn candidates(lo: usize, hi: usize) -> impl Iterator<Item = usize> {
    std::iter::successors(Some(lo), |&n| Some(n * 2)).take_while(move |&n| n <= hi)
}

/// Two-step search. `N2` is the largest size that still gives every Update
/// kernel at least `eta·n_cores` output blocks, then `N1 ≥ N2` is the largest
/// size that does the same for every Aggregate kernel with `N1 × N2` output
/// blocks. Kernels too small to meet the target fall back to the smallest
/// admissible size with a warning.
pub fn choose_partition_sizes(
    workloads: &[KernelWorkload],
    mem_budget: usize,
    n_cores: usize,
    eta: usize,
) -> Result<PartitionSizes> {
    if eta == 0 || n_cores == 0 {
        return Err(Error::config("eta and the core count must be >= 1"));
    }
    let n_max = max_partition(mem_budget)?;
    let target = (eta * n_cores) as u64;
    let pick = |q: u64, lo: usize, blocks: &dyn Fn(usize) -> u64| -> usize {
        match candidates(lo, n_max).filter(|&n| q / blocks(n) >= target).last() {
            Some(n) => n,
            None => {
                warn!(
                    "workload Q={q} cannot produce {target} tasks at any partition size; using {lo}"
                );
                lo
            }
        }
    };
    let n2 = workloads
        .iter()
        .filter(|w| w.kind == WorkloadKind::Update)
        .map(|w| pick(w.q, MIN_PARTITION, &|n| (n * n) as u64))
        .min()
        .unwrap_or(n_max);
    let n1 = workloads
        .iter()
        .filter(|w| w.kind == WorkloadKind::Aggregate)
        .map(|w| pick(w.q, n2, &|n| (n * n2) as u64))
        .min()
        .unwrap_or(n2);
    Ok(PartitionSizes { n1, n2, n_max })
}

/// Nonzero counts of a matrix over a regular block grid. Edge blocks may be
/// smaller than `block_rows × block_cols`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub rows: usize,
    pub cols: usize,
    pub block_rows: usize,
    pub block_cols: usize,
    /// Row-major over the block grid.
    pub cells: Vec<DensityRecord>,
}

impl DensityGrid {
    pub fn grid_shape(&self) -> (usize, usize) {
        (
            block_count(self.rows, self.block_rows),
            block_count(self.cols, self.block_cols),
        )
    }

    pub fn profile(m: &MatrixRef, block_rows: usize, block_cols: usize) -> Self {
        assert!(block_rows > 0 && block_cols > 0, "block size must be positive");
        let (rows, cols) = m.shape();
        let (gr, gc) = (block_count(rows, block_rows), block_count(cols, block_cols));
        let mut counts = vec![0usize; gr * gc];
        match m {
            MatrixRef::Dense(d) => {
                for i in 0..rows {
                    for j in 0..cols {
                        if is_nonzero(d.get(i, j)) {
                            counts[(i / block_rows) * gc + j / block_cols] += 1;
                        }
                    }
                }
            }
            MatrixRef::Coo(c) => {
                for e in c.entries() {
                    if is_nonzero(e.value) {
                        counts[(e.row / block_rows) * gc + e.col / block_cols] += 1;
                    }
                }
            }
        }
        let cells = counts
            .into_iter()
            .enumerate()
            .map(|(k, nnz)| {
                let h = block_range(k / gc, block_rows, rows).len();
                let w = block_range(k % gc, block_cols, cols).len();
                DensityRecord::new(nnz, h * w)
            })
            .collect();
        Self {
            rows,
            cols,
            block_rows,
            block_cols,
            cells,
        }
    }

    pub fn cell(&self, bi: usize, bj: usize) -> DensityRecord {
        let (_, gc) = self.grid_shape();
        self.cells[bi * gc + bj]
    }

    fn aligned(start: usize, end: usize, block: usize, len: usize) -> bool {
        start % block == 0 && (end % block == 0 || end == len) && start <= end && end <= len
    }

    /// Density of a block-aligned region, merged from the cells it covers.
    pub fn query(&self, rows: Range<usize>, cols: Range<usize>) -> Result<DensityRecord> {
        if !Self::aligned(rows.start, rows.end, self.block_rows, self.rows)
            || !Self::aligned(cols.start, cols.end, self.block_cols, self.cols)
        {
            return Err(Error::shape(format!(
                "region {rows:?} x {cols:?} is not aligned to the {}x{} grid of a {}x{} matrix",
                self.block_rows, self.block_cols, self.rows, self.cols
            )));
        }
        let mut rec = DensityRecord::new(0, 0);
        for bi in rows.start / self.block_rows..block_count(rows.end, self.block_rows) {
            for bj in cols.start / self.block_cols..block_count(cols.end, self.block_cols) {
                rec = rec.merge(self.cell(bi, bj));
            }
        }
        Ok(rec)
    }

    pub fn total(&self) -> DensityRecord {
        self.cells
            .iter()
            .fold(DensityRecord::new(0, 0), |a, &b| a.merge(b))
    }
}

/// A matrix cut into a regular grid of row-major blocks, each with its
/// profiled density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionedMatrix {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub block_rows: usize,
    pub block_cols: usize,
    /// Row-major over the block grid.
    pub blocks: Vec<MatrixRef>,
    pub densities: DensityGrid,
}

impl PartitionedMatrix {
    pub fn partition(
        name: impl Into<String>,
        m: &MatrixRef,
        block_rows: usize,
        block_cols: usize,
    ) -> Result<Self> {
        if block_rows == 0 || block_cols == 0 {
            return Err(Error::config("block size must be positive"));
        }
        let (rows, cols) = m.shape();
        let (gr, gc) = (block_count(rows, block_rows), block_count(cols, block_cols));
        let blocks = match m {
            MatrixRef::Coo(c) => bucket_coo(c, block_rows, block_cols)
                .into_iter()
                .map(MatrixRef::Coo)
                .collect(),
            MatrixRef::Dense(_) => {
                let mut out = Vec::with_capacity(gr * gc);
                for bi in 0..gr {
                    for bj in 0..gc {
                        let b = slice_block(
                            m,
                            block_range(bi, block_rows, rows),
                            block_range(bj, block_cols, cols),
                        )?;
                        out.push(match b {
                            MatrixRef::Dense(d) => MatrixRef::Dense(d.to_row_major()),
                            other => other,
                        });
                    }
                }
                out
            }
        };
        Ok(Self {
            name: name.into(),
            rows,
            cols,
            block_rows,
            block_cols,
            blocks,
            densities: DensityGrid::profile(m, block_rows, block_cols),
        })
    }

    pub fn grid_shape(&self) -> (usize, usize) {
        self.densities.grid_shape()
    }

    pub fn block(&self, bi: usize, bj: usize) -> &MatrixRef {
        let (_, gc) = self.grid_shape();
        &self.blocks[bi * gc + bj]
    }

    /// Block whose top-left corner is `(r0, c0)`.
    pub fn block_at(&self, r0: usize, c0: usize) -> Result<&MatrixRef> {
        if r0 % self.block_rows != 0 || c0 % self.block_cols != 0 {
            return Err(Error::shape(format!(
                "({r0}, {c0}) is not a block origin of {}",
                self.name
            )));
        }
        Ok(self.block(r0 / self.block_rows, c0 / self.block_cols))
    }

    pub fn nnz(&self) -> usize {
        self.blocks.iter().map(MatrixRef::nnz).sum()
    }

    /// Reassembles the full matrix in row-major dense form.
    pub fn assemble(&self) -> Result<DenseMatrix> {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        let (gr, gc) = self.grid_shape();
        for bi in 0..gr {
            for bj in 0..gc {
                let block = match self.block(bi, bj) {
                    MatrixRef::Dense(d) => d.clone(),
                    MatrixRef::Coo(c) => crate::transform::sparse_to_dense(c)?,
                };
                out.write_block(bi * self.block_rows, bj * self.block_cols, &block)?;
            }
        }
        Ok(out)
    }
}

/// One pass over a COO matrix, routing each entry to its block.
fn bucket_coo(c: &CooMatrix, block_rows: usize, block_cols: usize) -> Vec<CooMatrix> {
    let (rows, cols) = c.shape();
    let (gr, gc) = (block_count(rows, block_rows), block_count(cols, block_cols));
    let mut buckets: Vec<Vec<CooEntry>> = vec![Vec::new(); gr * gc];
    let row_major = match c.layout() {
        Layout::RowMajor => std::borrow::Cow::Borrowed(c),
        Layout::ColMajor => match crate::transform::transform_layout(&c.clone().into(), Layout::RowMajor) {
            MatrixRef::Coo(r) => std::borrow::Cow::Owned(r),
            MatrixRef::Dense(_) => unreachable!(),
        },
    };
    for e in row_major.entries() {
        let (bi, bj) = (e.row / block_rows, e.col / block_cols);
        buckets[bi * gc + bj].push(CooEntry::new(
            e.row - bi * block_rows,
            e.col - bj * block_cols,
            e.value,
        ));
    }
    buckets
        .into_iter()
        .enumerate()
        .map(|(k, entries)| {
            let h = block_range(k / gc, block_rows, rows).len();
            let w = block_range(k % gc, block_cols, cols).len();
            CooMatrix::from_sorted_unchecked(h, w, Layout::RowMajor, entries)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn n_max_from_budget() {
        assert_eq!(max_partition(6 << 20).unwrap(), 512);
        assert_eq!(max_partition(partition_bytes(128)).unwrap(), 128);
        assert_eq!(max_partition(partition_bytes(128) - 1).unwrap(), 64);
        assert!(matches!(max_partition(1000), Err(Error::Config(_))));
    }

    #[test]
    fn single_update_kernel() {
        let w = [KernelWorkload {
            kind: WorkloadKind::Update,
            q: 4096 * 64,
        }];
        let s = choose_partition_sizes(&w, partition_bytes(128), 7, 4).unwrap();
        assert_eq!(s.n2, 64);
        assert_eq!(s.n1, 64);
    }

    #[test]
    fn enormous_workload_hits_memory_clamp() {
        let w = [
            KernelWorkload {
                kind: WorkloadKind::Update,
                q: u64::MAX / 4,
            },
            KernelWorkload {
                kind: WorkloadKind::Aggregate,
                q: u64::MAX / 4,
            },
        ];
        let s = choose_partition_sizes(&w, partition_bytes(256), 7, 4).unwrap();
        assert_eq!((s.n1, s.n2), (256, 256));
    }

    #[test]
    fn tiny_graph_degenerates_to_minimum() {
        let w = [
            KernelWorkload {
                kind: WorkloadKind::Update,
                q: 10 * 4,
            },
            KernelWorkload {
                kind: WorkloadKind::Aggregate,
                q: 10 * 4,
            },
        ];
        let s = choose_partition_sizes(&w, 6 << 20, 7, 4).unwrap();
        assert_eq!((s.n1, s.n2), (16, 16));
    }

    #[test]
    fn aggregate_step_uses_n2() {
        let w = [
            KernelWorkload {
                kind: WorkloadKind::Aggregate,
                q: 4096 * 64,
            },
            KernelWorkload {
                kind: WorkloadKind::Update,
                q: 4096 * 64,
            },
        ];
        let s = choose_partition_sizes(&w, 6 << 20, 7, 4).unwrap();
        // 262144 / (N1·64) >= 28  =>  N1 <= 146
        assert_eq!((s.n1, s.n2), (128, 64));
    }

    #[test]
    fn grid_of_four_by_four() {
        let m = DenseMatrix::from_rows(&[
            [1.0f32, 2.0, 0.0, 0.0],
            [3.0, 4.0, 0.0, 0.0],
            [0.0, 0.0, 5.0, 0.0],
            [0.0, 0.0, 0.0, 6.0],
        ]);
        let p = PartitionedMatrix::partition("m", &m.clone().into(), 2, 2).unwrap();
        assert_eq!(p.grid_shape(), (2, 2));
        assert_eq!(p.densities.cell(0, 0).density, 1.0);
        assert!(p.densities.cell(0, 1).is_empty());
        assert!(p.densities.cell(1, 0).is_empty());
        assert_eq!(p.densities.cell(1, 1).density, 0.5);
        assert_eq!(p.assemble().unwrap(), m);
    }

    #[test]
    fn ragged_edge_block() {
        let m = DenseMatrix::identity(5);
        let p = PartitionedMatrix::partition("m", &m.clone().into(), 2, 2).unwrap();
        assert_eq!(p.grid_shape(), (3, 3));
        assert_eq!(p.block(2, 2).shape(), (1, 1));
        assert_eq!(p.block(2, 0).shape(), (1, 2));
        assert_eq!(p.densities.cell(2, 2), DensityRecord::new(1, 1));
        assert_eq!(p.assemble().unwrap(), m);
    }

    #[test]
    fn coo_partition_matches_dense() {
        let c = CooMatrix::from_triplets(
            5,
            7,
            Layout::RowMajor,
            [(0, 6, 1.0), (4, 0, 2.0), (2, 3, 3.0), (3, 3, -1.0)],
        )
        .unwrap();
        let sparse = PartitionedMatrix::partition("a", &c.clone().into(), 2, 3).unwrap();
        let dense_src = crate::transform::sparse_to_dense(&c).unwrap();
        let dense = PartitionedMatrix::partition("a", &dense_src.clone().into(), 2, 3).unwrap();
        assert_eq!(sparse.densities, dense.densities);
        assert_eq!(sparse.nnz(), 4);
        assert_eq!(sparse.assemble().unwrap(), dense_src);
        for b in &sparse.blocks {
            match b {
                MatrixRef::Coo(c) => assert!(c.is_canonical()),
                _ => unreachable!(),
            }
        }
    }

    #[test]
    fn query_merges_cells() {
        let m = DenseMatrix::identity(6);
        let g = DensityGrid::profile(&m.into(), 2, 2);
        assert_eq!(g.query(0..4, 0..2).unwrap(), DensityRecord::new(2, 8));
        assert_eq!(g.query(0..6, 0..6).unwrap(), DensityRecord::new(6, 36));
        assert!(g.query(1..4, 0..2).is_err());
    }
}
