//! Dense and coordinate (COO) matrix storage with an explicit element order.
//!
//! Every stored matrix carries a [`Layout`] tag. Dense values are a flat
//! buffer indexed according to that tag; COO entries are kept sorted in the
//! corresponding lexicographic order, deduplicated and free of explicit zeros.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    RowMajor,
    ColMajor,
}

impl Layout {
    pub fn flipped(self) -> Layout {
        match self {
            Layout::RowMajor => Layout::ColMajor,
            Layout::ColMajor => Layout::RowMajor,
        }
    }
}

/// Nonzero test used everywhere: exact comparison, so `-0.0` counts as zero.
#[inline]
pub fn is_nonzero(v: f32) -> bool {
    v != 0.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    layout: Layout,
    values: Vec<f32>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, layout: Layout, values: Vec<f32>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::shape(format!(
                "dense {rows}x{cols} needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            layout,
            values,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            layout: Layout::RowMajor,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Builds a row-major matrix from nested rows. Panics on ragged input.
    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Self {
        let n = rows.len();
        let c = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(n * c);
        for r in rows {
            assert_eq!(r.as_ref().len(), c, "ragged rows");
            values.extend_from_slice(r.as_ref());
        }
        Self {
            rows: n,
            cols: c,
            layout: Layout::RowMajor,
            values,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Raw storage in layout order.
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    #[inline]
    pub fn offset(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.rows && j < self.cols);
        match self.layout {
            Layout::RowMajor => i * self.cols + j,
            Layout::ColMajor => j * self.rows + i,
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.values[self.offset(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f32) {
        let o = self.offset(i, j);
        self.values[o] = v;
    }

    /// Row `i` as a contiguous slice. Only valid for row-major storage.
    pub fn row(&self, i: usize) -> &[f32] {
        assert_eq!(self.layout, Layout::RowMajor, "row() needs row-major storage");
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn nnz(&self) -> usize {
        self.values.iter().filter(|v| is_nonzero(**v)).count()
    }

    /// Logical equality, ignoring the storage layout.
    pub fn same_elements(&self, other: &DenseMatrix) -> bool {
        self.shape() == other.shape()
            && (0..self.rows).all(|i| (0..self.cols).all(|j| self.get(i, j) == other.get(i, j)))
    }

    /// Copy of this matrix stored row-major.
    pub fn to_row_major(&self) -> DenseMatrix {
        if self.layout == Layout::RowMajor {
            return self.clone();
        }
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.values[i * self.cols + j] = self.get(i, j);
            }
        }
        out
    }

    /// Elementwise sum of two equally shaped matrices (row-major result).
    pub fn add(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.shape() != other.shape() {
            return Err(Error::shape(format!(
                "elementwise add of {:?} and {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.values[i * self.cols + j] = self.get(i, j) + other.get(i, j);
            }
        }
        Ok(out)
    }

    /// Writes `block` into this row-major matrix with its origin at `(r0, c0)`.
    pub fn write_block(&mut self, r0: usize, c0: usize, block: &DenseMatrix) -> Result<()> {
        if r0 + block.rows > self.rows || c0 + block.cols > self.cols {
            return Err(Error::shape(format!(
                "block {:?} at ({r0},{c0}) exceeds {:?}",
                block.shape(),
                self.shape()
            )));
        }
        for i in 0..block.rows {
            for j in 0..block.cols {
                self.set(r0 + i, c0 + j, block.get(i, j));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CooEntry {
    pub row: usize,
    pub col: usize,
    pub value: f32,
}

impl CooEntry {
    pub fn new(row: usize, col: usize, value: f32) -> Self {
        Self { row, col, value }
    }

    #[inline]
    fn key(&self, layout: Layout) -> (usize, usize) {
        match layout {
            Layout::RowMajor => (self.row, self.col),
            Layout::ColMajor => (self.col, self.row),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CooMatrix {
    rows: usize,
    cols: usize,
    layout: Layout,
    entries: Vec<CooEntry>,
}

impl CooMatrix {
    pub fn empty(rows: usize, cols: usize, layout: Layout) -> Self {
        Self {
            rows,
            cols,
            layout,
            entries: Vec::new(),
        }
    }

    /// Canonicalizing constructor: duplicates are summed, zeros dropped and
    /// entries sorted for `layout`.
    pub fn from_triplets<I>(rows: usize, cols: usize, layout: Layout, triplets: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f32)>,
    {
        let mut entries = Vec::new();
        for (r, c, v) in triplets {
            if r >= rows || c >= cols {
                return Err(Error::shape(format!(
                    "entry ({r},{c}) outside {rows}x{cols}"
                )));
            }
            entries.push(CooEntry::new(r, c, v));
        }
        entries.sort_by_key(|e| e.key(layout));
        let mut merged: Vec<CooEntry> = Vec::with_capacity(entries.len());
        for e in entries {
            match merged.last_mut() {
                Some(last) if last.row == e.row && last.col == e.col => last.value += e.value,
                _ => merged.push(e),
            }
        }
        merged.retain(|e| is_nonzero(e.value));
        Ok(Self {
            rows,
            cols,
            layout,
            entries: merged,
        })
    }

    /// Wraps entries without canonicalizing them. Only bounds are checked;
    /// use [`CooMatrix::is_canonical`] to validate the rest.
    pub fn from_raw_parts(
        rows: usize,
        cols: usize,
        layout: Layout,
        entries: Vec<CooEntry>,
    ) -> Result<Self> {
        if let Some(e) = entries.iter().find(|e| e.row >= rows || e.col >= cols) {
            return Err(Error::shape(format!(
                "entry ({},{}) outside {rows}x{cols}",
                e.row, e.col
            )));
        }
        Ok(Self {
            rows,
            cols,
            layout,
            entries,
        })
    }

    /// Entries must already be sorted, unique and nonzero.
    pub(crate) fn from_sorted_unchecked(
        rows: usize,
        cols: usize,
        layout: Layout,
        entries: Vec<CooEntry>,
    ) -> Self {
        let m = Self {
            rows,
            cols,
            layout,
            entries,
        };
        debug_assert!(m.is_canonical());
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn entries(&self) -> &[CooEntry] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<CooEntry> {
        self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_canonical(&self) -> bool {
        self.entries.iter().all(|e| is_nonzero(e.value))
            && self
                .entries
                .windows(2)
                .all(|w| w[0].key(self.layout) < w[1].key(self.layout))
    }

    /// Slice of entries whose major index (row for row-major, column for
    /// column-major) falls in `major`.
    pub fn major_range(&self, major: Range<usize>) -> &[CooEntry] {
        let lo = self
            .entries
            .partition_point(|e| e.key(self.layout).0 < major.start);
        let hi = self
            .entries
            .partition_point(|e| e.key(self.layout).0 < major.end);
        &self.entries[lo..hi]
    }

    /// Per-major-index offsets into `entries` (length = major dimension + 1).
    pub fn major_offsets(&self) -> Vec<usize> {
        let n = match self.layout {
            Layout::RowMajor => self.rows,
            Layout::ColMajor => self.cols,
        };
        let mut offsets = vec![0usize; n + 1];
        for e in &self.entries {
            offsets[e.key(self.layout).0 + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        offsets
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "snake_case")]
pub enum MatrixRef {
    Dense(DenseMatrix),
    Coo(CooMatrix),
}

impl MatrixRef {
    pub fn rows(&self) -> usize {
        match self {
            MatrixRef::Dense(m) => m.rows(),
            MatrixRef::Coo(m) => m.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            MatrixRef::Dense(m) => m.cols(),
            MatrixRef::Coo(m) => m.cols(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows(), self.cols())
    }

    pub fn layout(&self) -> Layout {
        match self {
            MatrixRef::Dense(m) => m.layout(),
            MatrixRef::Coo(m) => m.layout(),
        }
    }

    pub fn nnz(&self) -> usize {
        match self {
            MatrixRef::Dense(m) => m.nnz(),
            MatrixRef::Coo(m) => m.nnz(),
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self, MatrixRef::Coo(_))
    }

    /// Element lookup; O(log nnz) for COO.
    pub fn get(&self, i: usize, j: usize) -> f32 {
        match self {
            MatrixRef::Dense(m) => m.get(i, j),
            MatrixRef::Coo(m) => {
                let key = match m.layout() {
                    Layout::RowMajor => (i, j),
                    Layout::ColMajor => (j, i),
                };
                m.entries()
                    .binary_search_by_key(&key, |e| e.key(m.layout()))
                    .map_or(0.0, |idx| m.entries()[idx].value)
            }
        }
    }
}

impl From<DenseMatrix> for MatrixRef {
    fn from(m: DenseMatrix) -> Self {
        MatrixRef::Dense(m)
    }
}

impl From<CooMatrix> for MatrixRef {
    fn from(m: CooMatrix) -> Self {
        MatrixRef::Coo(m)
    }
}

/// Ground-truth product `x · y` by the naive triple loop, summing over the
/// inner index in ascending order. Result is row-major.
pub fn dense_matmul_oracle(x: &DenseMatrix, y: &DenseMatrix) -> Result<DenseMatrix> {
    if x.cols() != y.rows() {
        return Err(Error::shape(format!(
            "oracle matmul {:?} x {:?}",
            x.shape(),
            y.shape()
        )));
    }
    let (m, n, d) = (x.rows(), x.cols(), y.cols());
    let mut out = DenseMatrix::zeros(m, d);
    for i in 0..m {
        for j in 0..d {
            let mut acc = 0.0f32;
            for k in 0..n {
                acc += x.get(i, k) * y.get(k, j);
            }
            out.values[i * d + j] = acc;
        }
    }
    Ok(out)
}

/// Extracts the sub-matrix `rows × cols`, keeping the input format and
/// layout. COO indices are re-based to the block origin.
pub fn slice_block(m: &MatrixRef, rows: Range<usize>, cols: Range<usize>) -> Result<MatrixRef> {
    if rows.start > rows.end || cols.start > cols.end || rows.end > m.rows() || cols.end > m.cols()
    {
        return Err(Error::shape(format!(
            "slice rows {rows:?} cols {cols:?} of {:?}",
            m.shape()
        )));
    }
    let (h, w) = (rows.len(), cols.len());
    match m {
        MatrixRef::Dense(d) => {
            let mut values = Vec::with_capacity(h * w);
            match d.layout() {
                Layout::RowMajor => {
                    for i in rows.clone() {
                        let base = i * d.cols();
                        values.extend_from_slice(&d.values()[base + cols.start..base + cols.end]);
                    }
                }
                Layout::ColMajor => {
                    for j in cols.clone() {
                        let base = j * d.rows();
                        values.extend_from_slice(&d.values()[base + rows.start..base + rows.end]);
                    }
                }
            }
            Ok(MatrixRef::Dense(DenseMatrix::new(h, w, d.layout(), values)?))
        }
        MatrixRef::Coo(c) => {
            let (major, minor) = match c.layout() {
                Layout::RowMajor => (rows.clone(), cols.clone()),
                Layout::ColMajor => (cols.clone(), rows.clone()),
            };
            let entries = c
                .major_range(major)
                .iter()
                .filter(|e| {
                    let mi = match c.layout() {
                        Layout::RowMajor => e.col,
                        Layout::ColMajor => e.row,
                    };
                    minor.contains(&mi)
                })
                .map(|e| CooEntry::new(e.row - rows.start, e.col - cols.start, e.value))
                .collect();
            Ok(MatrixRef::Coo(CooMatrix::from_sorted_unchecked(
                h,
                w,
                c.layout(),
                entries,
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Identity,
    Relu,
    Prelu {
        slope: f32,
    },
}

impl Activation {
    #[inline]
    pub fn apply_scalar(self, v: f32) -> f32 {
        match self {
            Activation::Identity => v,
            Activation::Relu => {
                if v > 0.0 {
                    v
                } else {
                    0.0
                }
            }
            Activation::Prelu { slope } => {
                if v >= 0.0 {
                    v
                } else {
                    slope * v
                }
            }
        }
    }

    pub fn is_identity(self) -> bool {
        matches!(self, Activation::Identity)
    }
}

/// Applies `kind` to every element; shape and layout are preserved.
pub fn elementwise_activation(m: &DenseMatrix, kind: Activation) -> DenseMatrix {
    let mut out = m.clone();
    if !kind.is_identity() {
        for v in out.values_mut() {
            *v = kind.apply_scalar(*v);
        }
    }
    out
}

/// Number of blocks of size `block` needed to cover `len`.
#[inline]
pub fn block_count(len: usize, block: usize) -> usize {
    len.div_ceil(block)
}

/// Index range of block `idx` of size `block` within `len` (last one may be short).
#[inline]
pub fn block_range(idx: usize, block: usize, len: usize) -> Range<usize> {
    let start = idx * block;
    start.min(len)..((idx + 1) * block).min(len)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f32]]) -> DenseMatrix {
        DenseMatrix::from_rows(rows)
    }

    #[test]
    fn oracle_identity() {
        let x = m(&[&[3.0, -1.0], &[2.5, 7.0]]);
        let out = dense_matmul_oracle(&DenseMatrix::identity(2), &x).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn oracle_hand_case() {
        let x = m(&[&[0.0, 2.0], &[0.0, 0.0]]);
        let y = m(&[&[1.0, 1.0], &[3.0, 4.0]]);
        let out = dense_matmul_oracle(&x, &y).unwrap();
        assert_eq!(out, m(&[&[6.0, 8.0], &[0.0, 0.0]]));
    }

    #[test]
    fn oracle_annihilator() {
        let z = DenseMatrix::zeros(3, 4);
        let ones = DenseMatrix::new(4, 2, Layout::RowMajor, vec![1.0; 8]).unwrap();
        assert_eq!(dense_matmul_oracle(&z, &ones).unwrap(), DenseMatrix::zeros(3, 2));
    }

    #[test]
    fn oracle_shape_error() {
        let a = DenseMatrix::zeros(2, 3);
        assert!(matches!(
            dense_matmul_oracle(&a, &a),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn layout_offsets() {
        let rm = DenseMatrix::new(2, 3, Layout::RowMajor, (0..6).map(|v| v as f32).collect())
            .unwrap();
        let cm = DenseMatrix::new(2, 3, Layout::ColMajor, vec![0.0, 3.0, 1.0, 4.0, 2.0, 5.0])
            .unwrap();
        assert!(rm.same_elements(&cm));
        assert_eq!(cm.offset(1, 2), 2 * 2 + 1);
    }

    #[test]
    fn coo_construction_coalesces_and_drops_zeros() {
        let c = CooMatrix::from_triplets(
            3,
            3,
            Layout::RowMajor,
            vec![(2, 0, 1.0), (0, 1, 2.0), (0, 1, 3.0), (1, 1, 0.0), (1, 2, 4.0), (1, 2, -4.0)],
        )
        .unwrap();
        assert_eq!(c.entries(), &[CooEntry::new(0, 1, 5.0), CooEntry::new(2, 0, 1.0)]);
        assert!(c.is_canonical());
    }

    #[test]
    fn coo_col_major_order() {
        let c = CooMatrix::from_triplets(
            2,
            2,
            Layout::ColMajor,
            vec![(0, 1, 1.0), (1, 0, 2.0), (0, 0, 3.0)],
        )
        .unwrap();
        let keys: Vec<_> = c.entries().iter().map(|e| (e.row, e.col)).collect();
        assert_eq!(keys, vec![(0, 0), (1, 0), (0, 1)]);
    }

    #[test]
    fn coo_out_of_range() {
        assert!(CooMatrix::from_triplets(2, 2, Layout::RowMajor, vec![(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn slice_identity_cases() {
        let id: MatrixRef = DenseMatrix::identity(4).into();
        assert_eq!(slice_block(&id, 0..4, 0..4).unwrap(), id);
        let off = slice_block(&id, 0..2, 2..4).unwrap();
        assert_eq!(off.nnz(), 0);
        assert_eq!(off.shape(), (2, 2));
        let diag = slice_block(&id, 2..4, 2..4).unwrap();
        assert_eq!(diag, MatrixRef::Dense(DenseMatrix::identity(2)));

        let coo = CooMatrix::from_triplets(4, 4, Layout::RowMajor, (0..4).map(|i| (i, i, 1.0)))
            .unwrap();
        let diag = slice_block(&coo.into(), 2..4, 2..4).unwrap();
        match diag {
            MatrixRef::Coo(c) => {
                assert_eq!(c.entries(), &[CooEntry::new(0, 0, 1.0), CooEntry::new(1, 1, 1.0)])
            }
            _ => panic!("format changed"),
        }
    }

    #[test]
    fn slice_out_of_range() {
        let id: MatrixRef = DenseMatrix::identity(4).into();
        assert!(slice_block(&id, 0..5, 0..1).is_err());
    }

    #[test]
    fn activation_cases() {
        let x = m(&[&[-1.0, 2.0], &[0.0, -3.0]]);
        assert_eq!(
            elementwise_activation(&x, Activation::Relu),
            m(&[&[0.0, 2.0], &[0.0, 0.0]])
        );
        let pos = m(&[&[1.0, 2.0]]);
        assert_eq!(elementwise_activation(&pos, Activation::Relu), pos);
        let out = elementwise_activation(&m(&[&[-10.0]]), Activation::Prelu { slope: 0.1 });
        assert!((out.get(0, 0) + 1.0).abs() < 1e-6);
    }

    #[test]
    fn block_geometry() {
        assert_eq!(block_count(5, 2), 3);
        assert_eq!(block_range(2, 2, 5), 4..5);
        assert_eq!(block_count(0, 16), 0);
    }
}
