//! Sparsity profiling and format/layout transforms.
//!
//! These are the software counterparts of the per-core auxiliary units: a
//! nonzero counter, a dense-to-sparse compactor, its inverse, and a layout
//! transposer. Each one also has a streaming throughput cost, see
//! [`transform_cycle_cost`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{is_nonzero, CooEntry, CooMatrix, DenseMatrix, Layout, MatrixRef};

/// Default lane count of the streaming transform units (one DDR4 channel).
pub const DEFAULT_LANE_WIDTH: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityRecord {
    pub nnz: usize,
    pub total: usize,
    pub density: f64,
}

impl DensityRecord {
    pub fn new(nnz: usize, total: usize) -> Self {
        debug_assert!(nnz <= total);
        let density = if total == 0 {
            0.0
        } else {
            nnz as f64 / total as f64
        };
        Self {
            nnz,
            total,
            density,
        }
    }

    /// Record of two disjoint regions taken together.
    pub fn merge(self, other: DensityRecord) -> DensityRecord {
        DensityRecord::new(self.nnz + other.nnz, self.total + other.total)
    }

    pub fn is_empty(&self) -> bool {
        self.nnz == 0
    }
}

pub fn profile_density(m: &MatrixRef) -> DensityRecord {
    let (r, c) = m.shape();
    DensityRecord::new(m.nnz(), r * c)
}

/// Compacts a dense matrix into canonical COO, walking the storage in its
/// own layout order so the output has the same layout tag.
pub fn dense_to_sparse(m: &DenseMatrix) -> CooMatrix {
    let (rows, cols) = m.shape();
    let mut entries = Vec::new();
    match m.layout() {
        Layout::RowMajor => {
            for (k, &v) in m.values().iter().enumerate() {
                if is_nonzero(v) {
                    entries.push(CooEntry::new(k / cols, k % cols, v));
                }
            }
        }
        Layout::ColMajor => {
            for (k, &v) in m.values().iter().enumerate() {
                if is_nonzero(v) {
                    entries.push(CooEntry::new(k % rows, k / rows, v));
                }
            }
        }
    }
    CooMatrix::from_sorted_unchecked(rows, cols, m.layout(), entries)
}

/// Expands COO into a dense matrix with the same layout tag. Duplicate
/// coordinates are rejected.
pub fn sparse_to_dense(m: &CooMatrix) -> Result<DenseMatrix> {
    let (rows, cols) = m.shape();
    let mut out = DenseMatrix::new(rows, cols, m.layout(), vec![0.0; rows * cols])?;
    let mut seen = vec![false; rows * cols];
    for e in m.entries() {
        let o = out.offset(e.row, e.col);
        if std::mem::replace(&mut seen[o], true) {
            return Err(Error::Format(format!(
                "duplicate COO coordinate ({}, {})",
                e.row, e.col
            )));
        }
        out.values_mut()[o] = e.value;
    }
    Ok(out)
}

/// Re-stores `m` in `target` order. The logical matrix is unchanged.
pub fn transform_layout(m: &MatrixRef, target: Layout) -> MatrixRef {
    if m.layout() == target {
        return m.clone();
    }
    match m {
        MatrixRef::Dense(d) => {
            let (rows, cols) = d.shape();
            let mut values = vec![0.0f32; rows * cols];
            for i in 0..rows {
                for j in 0..cols {
                    let o = match target {
                        Layout::RowMajor => i * cols + j,
                        Layout::ColMajor => j * rows + i,
                    };
                    values[o] = d.get(i, j);
                }
            }
            MatrixRef::Dense(DenseMatrix::new(rows, cols, target, values).expect("same size"))
        }
        MatrixRef::Coo(c) => {
            let mut entries = c.entries().to_vec();
            match target {
                Layout::RowMajor => entries.sort_by_key(|e| (e.row, e.col)),
                Layout::ColMajor => entries.sort_by_key(|e| (e.col, e.row)),
            }
            MatrixRef::Coo(CooMatrix::from_sorted_unchecked(
                c.rows(),
                c.cols(),
                target,
                entries,
            ))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    D2S,
    S2D,
    LayoutFlip,
    Profile,
}

/// Streaming cost of pushing `elements` through a transform unit that
/// consumes `lane_width` elements per cycle.
pub fn transform_cycle_cost(_kind: TransformKind, elements: usize, lane_width: usize) -> u64 {
    assert!(lane_width >= 1, "lane width must be positive");
    elements.div_ceil(lane_width) as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_trivial_cases() {
        let z: MatrixRef = DenseMatrix::zeros(4, 4).into();
        assert_eq!(profile_density(&z).density, 0.0);
        let id: MatrixRef = DenseMatrix::identity(4).into();
        let rec = profile_density(&id);
        assert_eq!((rec.nnz, rec.total), (4, 16));
        assert_eq!(rec.density, 0.25);
    }

    #[test]
    fn negative_zero_is_zero() {
        let m: MatrixRef = DenseMatrix::from_rows(&[[-0.0f32, 1.0]]).into();
        assert_eq!(profile_density(&m).nnz, 1);
        match &m {
            MatrixRef::Dense(d) => assert_eq!(dense_to_sparse(d).nnz(), 1),
            _ => unreachable!(),
        }
    }

    #[test]
    fn d2s_definition() {
        let row = DenseMatrix::from_rows(&[[0.0f32, 5.0, 0.0, 7.0]]);
        let coo = dense_to_sparse(&row);
        assert_eq!(
            coo.entries(),
            &[CooEntry::new(0, 1, 5.0), CooEntry::new(0, 3, 7.0)]
        );
        assert_eq!(dense_to_sparse(&DenseMatrix::zeros(3, 3)).nnz(), 0);
    }

    #[test]
    fn d2s_keeps_col_major_layout() {
        let d = DenseMatrix::new(2, 2, Layout::ColMajor, vec![1.0, 0.0, 2.0, 3.0]).unwrap();
        let coo = dense_to_sparse(&d);
        assert_eq!(coo.layout(), Layout::ColMajor);
        assert!(coo.is_canonical());
        assert!(sparse_to_dense(&coo).unwrap().same_elements(&d));
    }

    #[test]
    fn s2d_rejects_duplicates() {
        let raw = CooMatrix::from_raw_parts(
            2,
            2,
            Layout::RowMajor,
            vec![CooEntry::new(0, 0, 1.0), CooEntry::new(0, 0, 2.0)],
        )
        .unwrap();
        assert!(matches!(sparse_to_dense(&raw), Err(Error::Format(_))));
    }

    #[test]
    fn layout_noop_and_symmetric() {
        let s = DenseMatrix::from_rows(&[[1.0f32, 2.0], [2.0, 3.0]]);
        let r: MatrixRef = s.clone().into();
        assert_eq!(transform_layout(&r, Layout::RowMajor), r);
        match transform_layout(&r, Layout::ColMajor) {
            MatrixRef::Dense(d) => {
                assert_eq!(d.layout(), Layout::ColMajor);
                assert!(d.same_elements(&s));
                // symmetric: raw storage is also unchanged
                assert_eq!(d.values(), s.values());
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn transform_costs() {
        assert_eq!(transform_cycle_cost(TransformKind::D2S, 16, 16), 1);
        assert_eq!(transform_cycle_cost(TransformKind::S2D, 0, 16), 0);
        assert_eq!(transform_cycle_cost(TransformKind::LayoutFlip, 33, 16), 3);
    }
}
