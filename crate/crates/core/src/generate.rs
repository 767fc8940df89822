//! Seeded synthetic inputs: random graphs at a target density, features
//! with random support, uniform weights and magnitude pruning.

use std::collections::HashSet;

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand::seq::index;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{CooMatrix, DenseMatrix, Layout};

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn check_density(density: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&density) || density.is_nan() {
        return Err(Error::config(format!(
            "requested density {density} is outside [0, 1]"
        )));
    }
    Ok(())
}

fn target_count(density: f64, total: usize) -> usize {
    ((density * total as f64).round() as usize).min(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    #[default]
    ErdosRenyi,
    PowerLaw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphParams {
    pub kind: GraphKind,
    pub vertices: usize,
    pub density: f64,
    #[serde(default)]
    pub symmetric: bool,
    /// Degree exponent for power-law graphs.
    #[serde(default = "default_exponent")]
    pub exponent: f64,
}

fn default_exponent() -> f64 {
    2.5
}

impl GraphParams {
    pub fn erdos_renyi(vertices: usize, density: f64) -> Self {
        Self {
            kind: GraphKind::ErdosRenyi,
            vertices,
            density,
            symmetric: false,
            exponent: default_exponent(),
        }
    }

    pub fn generate<R: Rng>(&self, rng: &mut R) -> Result<CooMatrix> {
        match self.kind {
            GraphKind::ErdosRenyi => erdos_renyi(self.vertices, self.density, self.symmetric, rng),
            GraphKind::PowerLaw => power_law(
                self.vertices,
                self.density,
                self.exponent,
                self.symmetric,
                rng,
            ),
        }
    }
}

fn unit_edges(n: usize, cells: impl IntoIterator<Item = (usize, usize)>) -> Result<CooMatrix> {
    CooMatrix::from_triplets(
        n,
        n,
        Layout::RowMajor,
        cells.into_iter().map(|(r, c)| (r, c, 1.0f32)),
    )
}

/// Uniform random graph with exactly `round(density·n²)` unit-weight edges
/// (directed), or the nearest even count of mirrored off-diagonal edges when
/// `symmetric`.
pub fn erdos_renyi<R: Rng>(n: usize, density: f64, symmetric: bool, rng: &mut R) -> Result<CooMatrix> {
    check_density(density)?;
    if n == 0 {
        return Ok(CooMatrix::empty(0, 0, Layout::RowMajor));
    }
    if !symmetric {
        let k = target_count(density, n * n);
        let picks = index::sample(rng, n * n, k);
        return unit_edges(n, picks.into_iter().map(|p| (p / n, p % n)));
    }
    let upper = n * (n - 1) / 2;
    let k = target_count(density / 2.0, n * n).min(upper);
    let picks = index::sample(rng, upper, k);
    let mut cells = Vec::with_capacity(2 * k);
    for p in picks {
        let (r, c) = upper_pair(p, n);
        cells.push((r, c));
        cells.push((c, r));
    }
    unit_edges(n, cells)
}

/// Maps a linear index over the strict upper triangle to `(row, col)`.
fn upper_pair(mut p: usize, n: usize) -> (usize, usize) {
    let mut r = 0;
    loop {
        let len = n - 1 - r;
        if p < len {
            return (r, r + 1 + p);
        }
        p -= len;
        r += 1;
    }
}

/// Chung-Lu style graph with a heavy-tailed degree profile. Endpoints are
/// drawn proportionally to `(i + 1)^(-1/(exponent - 1))`; duplicates are
/// rejected until the exact edge count is reached.
pub fn power_law<R: Rng>(
    n: usize,
    density: f64,
    exponent: f64,
    symmetric: bool,
    rng: &mut R,
) -> Result<CooMatrix> {
    check_density(density)?;
    if exponent <= 1.0 {
        return Err(Error::config("power-law exponent must exceed 1"));
    }
    if n == 0 {
        return Ok(CooMatrix::empty(0, 0, Layout::RowMajor));
    }
    let k = if symmetric {
        target_count(density / 2.0, n * n).min(n * (n - 1) / 2)
    } else {
        target_count(density, n * n)
    };
    let weights: Vec<f64> = (0..n)
        .map(|i| ((i + 1) as f64).powf(-1.0 / (exponent - 1.0)))
        .collect();
    let dist = WeightedIndex::new(&weights).map_err(|e| Error::config(e.to_string()))?;
    // vertex labels are shuffled so hubs are not all in the first block
    let mut label: Vec<usize> = (0..n).collect();
    label.shuffle(rng);
    let mut seen = HashSet::with_capacity(k);
    let mut attempts = 0usize;
    let budget = 50 * k + 1000;
    while seen.len() < k && attempts < budget {
        attempts += 1;
        let (a, b) = (label[dist.sample(rng)], label[dist.sample(rng)]);
        let key = if symmetric {
            if a == b {
                continue;
            }
            (a.min(b), a.max(b))
        } else {
            (a, b)
        };
        seen.insert(key);
    }
    if seen.len() < k {
        // too dense for rejection sampling; top up uniformly
        let total = if symmetric { n * (n - 1) / 2 } else { n * n };
        for p in index::sample(rng, total, total).into_iter() {
            if seen.len() == k {
                break;
            }
            let key = if symmetric { upper_pair(p, n) } else { (p / n, p % n) };
            seen.insert(key);
        }
    }
    let mut cells: Vec<(usize, usize)> = seen.into_iter().collect();
    cells.sort_unstable();
    if symmetric {
        let mirrored: Vec<_> = cells.iter().map(|&(r, c)| (c, r)).collect();
        cells.extend(mirrored);
    }
    unit_edges(n, cells)
}

/// Uniform values in `[-scale, scale)`.
pub fn random_dense<R: Rng>(rows: usize, cols: usize, scale: f32, rng: &mut R) -> DenseMatrix {
    let values = (0..rows * cols)
        .map(|_| rng.gen_range(-scale..scale))
        .collect();
    DenseMatrix::new(rows, cols, Layout::RowMajor, values).expect("length matches")
}

/// Features with exactly `round(density·rows·cols)` nonzeros at uniformly
/// random positions, values in `(0, 1]`.
pub fn random_features<R: Rng>(
    rows: usize,
    cols: usize,
    density: f64,
    rng: &mut R,
) -> Result<DenseMatrix> {
    check_density(density)?;
    let total = rows * cols;
    let k = target_count(density, total);
    let mut values = vec![0.0f32; total];
    for p in index::sample(rng, total, k) {
        values[p] = 1.0 - rng.gen::<f32>();
    }
    DenseMatrix::new(rows, cols, Layout::RowMajor, values)
}

/// Keeps the `round(density·len)` largest-magnitude entries and zeroes the
/// rest. Ties keep the earlier storage position.
pub fn magnitude_prune(m: &mut DenseMatrix, density: f64) -> Result<()> {
    check_density(density)?;
    let keep = target_count(density, m.len());
    let mut order: Vec<usize> = (0..m.len()).collect();
    let vals = m.values();
    order.sort_by(|&a, &b| vals[b].abs().total_cmp(&vals[a].abs()).then(a.cmp(&b)));
    let vals = m.values_mut();
    for &p in &order[keep..] {
        vals[p] = 0.0;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn er_exact_count() {
        let mut rng = seeded_rng(1);
        let g = erdos_renyi(2708, 0.0014, false, &mut rng).unwrap();
        let want = (0.0014f64 * 2708.0 * 2708.0).round() as usize;
        assert_eq!(g.nnz(), want);
        assert!(g.is_canonical());
        let d = g.nnz() as f64 / (2708.0 * 2708.0);
        assert!((d - 0.0014).abs() <= 0.05 * 0.0014);
    }

    #[test]
    fn er_zero_density_is_empty() {
        let g = erdos_renyi(100, 0.0, false, &mut seeded_rng(3)).unwrap();
        assert_eq!(g.nnz(), 0);
    }

    #[test]
    fn er_symmetric() {
        let g = erdos_renyi(64, 0.1, true, &mut seeded_rng(4)).unwrap();
        for e in g.entries() {
            assert_ne!(e.row, e.col);
            assert!(g.entries().iter().any(|f| f.row == e.col && f.col == e.row));
        }
    }

    #[test]
    fn upper_pair_enumerates_triangle() {
        let n = 6;
        let all: Vec<_> = (0..n * (n - 1) / 2).map(|p| upper_pair(p, n)).collect();
        let mut want = Vec::new();
        for r in 0..n {
            for c in r + 1..n {
                want.push((r, c));
            }
        }
        assert_eq!(all, want);
    }

    #[test]
    fn power_law_density_and_skew() {
        let n = 1024;
        let g = power_law(n, 0.01, 2.5, false, &mut seeded_rng(5)).unwrap();
        assert_eq!(g.nnz(), (0.01f64 * (n * n) as f64).round() as usize);
        let mut deg = vec![0usize; n];
        for e in g.entries() {
            deg[e.row] += 1;
        }
        let max = *deg.iter().max().unwrap();
        assert!(max as f64 > 4.0 * g.nnz() as f64 / n as f64);
    }

    #[test]
    fn power_law_dense_request_completes() {
        let g = power_law(32, 0.9, 2.1, false, &mut seeded_rng(6)).unwrap();
        assert_eq!(g.nnz(), (0.9f64 * 1024.0).round() as usize);
    }

    #[test]
    fn infeasible_density() {
        assert!(matches!(
            erdos_renyi(10, 1.5, false, &mut seeded_rng(0)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn prune_bound() {
        let mut rng = seeded_rng(7);
        for &(r, c) in &[(7, 9), (16, 16), (1, 3)] {
            let mut w = random_dense(r, c, 1.0, &mut rng);
            magnitude_prune(&mut w, 0.5).unwrap();
            let d = w.nnz() as f64 / w.len() as f64;
            assert!(d <= 0.5 + 1.0 / w.len() as f64);
        }
    }

    #[test]
    fn prune_keeps_largest() {
        let mut w = DenseMatrix::from_rows(&[[0.1f32, -3.0, 2.0, -0.5]]);
        magnitude_prune(&mut w, 0.5).unwrap();
        assert_eq!(w.values(), &[0.0, -3.0, 2.0, 0.0]);
    }

    #[test]
    fn features_exact_support() {
        let h = random_features(50, 20, 0.3, &mut seeded_rng(8)).unwrap();
        assert_eq!(h.nnz(), 300);
        assert!(h.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn seeds_are_deterministic() {
        let a = erdos_renyi(200, 0.02, false, &mut seeded_rng(9)).unwrap();
        let b = erdos_renyi(200, 0.02, false, &mut seeded_rng(9)).unwrap();
        assert_eq!(a, b);
    }
}
