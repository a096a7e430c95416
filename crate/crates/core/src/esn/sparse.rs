//! Compressed sparse row storage for the reservoir matrix, plus the
//! spectral radius estimate used to scale it.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Square or rectangular CSR matrix with `f64` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// One `(row, col, value)` entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triplet {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

impl CsrMatrix {
    /// Builds from triplets. Duplicate coordinates are summed; explicit zeros
    /// are kept out of the structure.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[Triplet]) -> Option<Self> {
        if triplets.iter().any(|t| t.row >= rows || t.col >= cols) {
            return None;
        }
        let mut sorted = triplets.to_vec();
        sorted.sort_by_key(|t| (t.row, t.col));
        let mut row_ptr = vec![0; rows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for t in sorted {
            if last == Some((t.row, t.col)) {
                *values.last_mut().unwrap() += t.value;
                continue;
            }
            last = Some((t.row, t.col));
            row_ptr[t.row + 1] += 1;
            col_idx.push(t.col);
            values.push(t.value);
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        let mut m = Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        };
        m.prune_zeros();
        Some(m)
    }

    pub(crate) fn from_rows(cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for row in &rows {
            for &(c, v) in row {
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        let mut m = Self {
            rows: rows.len(),
            cols,
            row_ptr,
            col_idx,
            values,
        };
        m.prune_zeros();
        m
    }

    fn prune_zeros(&mut self) {
        if self.values.iter().all(|&v| v != 0.0) {
            return;
        }
        let mut row_ptr = vec![0; self.rows + 1];
        let mut col_idx = Vec::with_capacity(self.values.len());
        let mut values = Vec::with_capacity(self.values.len());
        for r in 0..self.rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.values[k] != 0.0 {
                    col_idx.push(self.col_idx[k]);
                    values.push(self.values[k]);
                }
            }
            row_ptr[r + 1] = values.len();
        }
        self.row_ptr = row_ptr;
        self.col_idx = col_idx;
        self.values = values;
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Fraction of structurally nonzero entries.
    pub fn density(&self) -> f64 {
        if self.rows * self.cols == 0 {
            return 0.0;
        }
        self.nnz() as f64 / (self.rows * self.cols) as f64
    }

    pub fn triplets(&self) -> Vec<Triplet> {
        self.iter().map(|(row, col, value)| Triplet { row, col, value }).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.col_idx[k], self.values[k]))
        })
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }

    /// `out = self * x`.
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *o = acc;
        }
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.rows);
        self.mul_vec_into(x.as_slice(), out.as_mut_slice());
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.rows, self.cols);
        for (r, c, v) in self.iter() {
            d[(r, c)] = v;
        }
        d
    }

    /// `self * B` where the *columns* of `bt` are the rows of `B`, returned in
    /// the same transposed layout. Keeps every inner loop contiguous.
    fn mul_transposed_block(&self, bt: &DMatrix<f64>) -> DMatrix<f64> {
        let k = bt.nrows();
        let mut out = DMatrix::zeros(k, self.rows);
        for r in 0..self.rows {
            let mut acc = out.column_mut(r);
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc.axpy(self.values[idx], &bt.column(self.col_idx[idx]), 1.0);
            }
        }
        out
    }
}

/// Below this size the spectrum is computed directly from a dense Schur
/// decomposition.
const DENSE_LIMIT: usize = 96;
const BLOCK: usize = 32;
const ORTHO_EVERY: usize = 6;
const MAX_ITERS: usize = 60_000;
const REL_TOL: f64 = 1e-13;

/// Largest eigenvalue modulus of a square sparse matrix.
///
/// Small matrices go through a dense Schur decomposition. Larger ones use
/// block subspace iteration with Rayleigh–Ritz extraction, which copes with
/// complex-conjugate dominant pairs and near-ties in modulus. `seed` fixes
/// the starting block so results are reproducible.
pub fn spectral_radius(a: &CsrMatrix, seed: u64) -> f64 {
    assert_eq!(a.rows, a.cols, "spectral radius needs a square matrix");
    let m = a.rows;
    if m == 0 || a.nnz() == 0 {
        return 0.0;
    }
    if m <= DENSE_LIMIT {
        return max_modulus(a.to_dense());
    }

    let k = BLOCK.min(m);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed_5eed_5eed);
    let start = DMatrix::from_fn(m, k, |_, _| rng.random_range(-1.0..1.0));
    let mut qt = start.qr().q().transpose();

    let mut prev = f64::NAN;
    let mut streak = 0;
    let mut iter = 0;
    let mut estimate = 0.0;
    while iter < MAX_ITERS {
        // qt holds an orthonormal basis here
        let zt = a.mul_transposed_block(&qt);
        let h = &zt * qt.transpose();
        estimate = max_modulus(h);
        if estimate == 0.0 {
            // the block sits in a null space; fall back to the exact route
            return max_modulus(a.to_dense());
        }
        if (estimate - prev).abs() <= REL_TOL * estimate {
            streak += 1;
            if streak >= 3 {
                return estimate;
            }
        } else {
            streak = 0;
        }
        prev = estimate;

        let mut next = zt;
        for _ in 1..ORTHO_EVERY {
            next = a.mul_transposed_block(&next);
            let norm = next.norm();
            if norm == 0.0 || !norm.is_finite() {
                return max_modulus(a.to_dense());
            }
            next /= norm;
        }
        iter += ORTHO_EVERY;
        qt = next.transpose().qr().q().transpose();
    }
    log::warn!("spectral radius estimate did not settle after {MAX_ITERS} iterations: {estimate}");
    estimate
}

fn max_modulus(h: DMatrix<f64>) -> f64 {
    h.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_sparse(m: usize, density: f64, seed: u64) -> CsrMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Vec::new();
        for r in 0..m {
            for c in 0..m {
                if rng.random::<f64>() < density {
                    t.push(Triplet { row: r, col: c, value: rng.random_range(-1.0..1.0) });
                }
            }
        }
        CsrMatrix::from_triplets(m, m, &t).unwrap()
    }

    #[test]
    fn triplet_round_trip_and_duplicates() {
        let t = [
            Triplet { row: 1, col: 0, value: 2.0 },
            Triplet { row: 0, col: 1, value: 1.0 },
            Triplet { row: 1, col: 0, value: 0.5 },
            Triplet { row: 0, col: 0, value: 0.0 },
        ];
        let m = CsrMatrix::from_triplets(2, 2, &t).unwrap();
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.to_dense(), DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.5, 0.0]));
        assert!(CsrMatrix::from_triplets(2, 2, &[Triplet { row: 2, col: 0, value: 1.0 }]).is_none());
    }

    #[test]
    fn mul_vec_matches_dense() {
        let a = random_sparse(40, 0.2, 3);
        let x = DVector::from_fn(40, |i, _| (i as f64).sin());
        let diff = a.mul_vec(&x) - a.to_dense() * &x;
        assert!(diff.amax() < 1e-12);
    }

    #[test]
    fn rotation_has_unit_radius() {
        // complex pair e^{±iθ}: plain power iteration never settles on this
        let m = CsrMatrix::from_triplets(
            2,
            2,
            &[
                Triplet { row: 0, col: 0, value: 0.6 },
                Triplet { row: 0, col: 1, value: -0.8 },
                Triplet { row: 1, col: 0, value: 0.8 },
                Triplet { row: 1, col: 1, value: 0.6 },
            ],
        )
        .unwrap();
        assert!((spectral_radius(&m, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn iterative_route_matches_dense_eigenvalues() {
        for (m, seed) in [(150, 1), (300, 2), (400, 9)] {
            let a = random_sparse(m, 0.05, seed);
            let exact = max_modulus(a.to_dense());
            let est = spectral_radius(&a, 7);
            assert!((est - exact).abs() < 1e-9 * exact, "m={m}: {est} vs {exact}");
        }
    }

    #[test]
    fn nilpotent_is_zero() {
        let m = CsrMatrix::from_triplets(200, 200, &[Triplet { row: 0, col: 199, value: 1.0 }]).unwrap();
        assert_eq!(spectral_radius(&m, 0), 0.0);
    }
}
