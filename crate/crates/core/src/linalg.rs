//! Sparse storage and a banded LU factorization.
//!
//! All discrete operators here are nearest-neighbour couplings, so under the
//! node orderings supplied by [`crate::geometry::Grid`] they have small
//! bandwidth and a banded direct solve is both exact and cheap.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl CsrMatrix {
    /// Build from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(rows: usize, cols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut indptr = vec![0; rows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut data: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < rows && c < cols, "triplet ({r},{c}) out of bounds");
            if last == Some((r, c)) {
                *data.last_mut().unwrap() += v;
                continue;
            }
            indices.push(c);
            data.push(v);
            indptr[r + 1] += 1;
            last = Some((r, c));
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        CsrMatrix {
            rows,
            cols,
            indptr,
            indices,
            data,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, (0..n).map(|i| (i, i, 1.0)).collect())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    /// Iterate over the stored entries of one row as `(col, value)`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .cloned()
            .zip(self.data[span].iter().cloned())
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.rows)
            .flat_map(|r| self.row(r).map(move |(c, v)| (r, c, v)))
            .collect()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(j, _)| j == c).map_or(0.0, |(_, v)| v)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    /// `yᵀ A` computed as `Aᵀ y`.
    pub fn transpose_matvec(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (r, &yr) in y.iter().enumerate() {
            for (c, v) in self.row(r) {
                out[c] += v * yr;
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(
            self.cols,
            self.rows,
            self.triplets().into_iter().map(|(r, c, v)| (c, r, v)).collect(),
        )
    }

    /// `diag(s) · A`.
    pub fn scale_rows(&self, s: &[f64]) -> Self {
        let mut out = self.clone();
        for r in 0..self.rows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                out.data[k] *= s[r];
            }
        }
        out
    }

    /// `A + diag(d)`.
    pub fn add_diagonal(&self, d: &[f64]) -> Self {
        let mut t = self.triplets();
        t.extend(d.iter().enumerate().map(|(i, &v)| (i, i, v)));
        Self::from_triplets(self.rows, self.cols, t)
    }

    /// `a·A + b·B` for matrices of equal shape.
    pub fn linear_combination(a: f64, m: &Self, b: f64, n: &Self) -> Self {
        assert_eq!((m.rows, m.cols), (n.rows, n.cols));
        let mut t: Vec<_> = m.triplets().into_iter().map(|(r, c, v)| (r, c, a * v)).collect();
        t.extend(n.triplets().into_iter().map(|(r, c, v)| (r, c, b * v)));
        Self::from_triplets(m.rows, m.cols, t)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                out[(r, c)] += v;
            }
        }
        out
    }
}

/// LU factorization with partial pivoting of a banded matrix, taken in a
/// caller-supplied symmetric permutation.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    /// Row `i` stores columns `i - kl ..= i + ku + kl` of the permuted matrix.
    band: Vec<f64>,
    multipliers: Vec<f64>,
    pivots: Vec<usize>,
    /// `order[k]` is the original index placed at position `k`.
    order: Vec<usize>,
    swaps: usize,
}

impl BandedLu {
    /// Factor `A` with rows and columns reordered by `order`.
    pub fn factor(a: &CsrMatrix, order: &[usize]) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n || order.len() != n {
            return Err(Error::SolveFailure(format!(
                "shape mismatch: {}x{} matrix, ordering of {}",
                a.rows(),
                a.cols(),
                order.len()
            )));
        }
        let mut position = vec![usize::MAX; n];
        for (k, &i) in order.iter().enumerate() {
            position[i] = k;
        }
        if position.contains(&usize::MAX) {
            return Err(Error::SolveFailure("ordering is not a permutation".into()));
        }
        let (mut kl, mut ku) = (0usize, 0usize);
        for r in 0..n {
            for (c, _) in a.row(r) {
                let (pr, pc) = (position[r], position[c]);
                if pc > pr {
                    ku = ku.max(pc - pr);
                } else {
                    kl = kl.max(pr - pc);
                }
            }
        }
        let width = 2 * kl + ku + 1;
        let mut lu = BandedLu {
            n,
            kl,
            ku,
            width,
            band: vec![0.0; n * width],
            multipliers: vec![0.0; n * kl.max(1)],
            pivots: vec![0; n],
            order: order.to_vec(),
            swaps: 0,
        };
        for r in 0..n {
            for (c, v) in a.row(r) {
                if !v.is_finite() {
                    return Err(Error::SolveFailure("non-finite matrix entry".into()));
                }
                let slot = lu.slot(position[r], position[c]);
                lu.band[slot] += v;
            }
        }
        lu.eliminate()?;
        Ok(lu)
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    fn eliminate(&mut self) -> Result<()> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + ku + kl).min(n - 1);
            let mut p = k;
            let mut best = self.band[self.slot(k, k)].abs();
            for r in k + 1..=last_row {
                let v = self.band[self.slot(r, k)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::SolveFailure(format!("zero pivot at position {k}")));
            }
            self.pivots[k] = p;
            if p != k {
                self.swaps += 1;
                for j in k..=last_col {
                    let (a, b) = (self.slot(k, j), self.slot(p, j));
                    self.band.swap(a, b);
                }
            }
            let pivot = self.band[self.slot(k, k)];
            for r in k + 1..=last_row {
                let srk = self.slot(r, k);
                let m = self.band[srk] / pivot;
                self.band[srk] = 0.0;
                self.multipliers[k * kl.max(1) + (r - k - 1)] = m;
                if m == 0.0 {
                    continue;
                }
                for j in k + 1..=last_col {
                    let u = self.band[self.slot(k, j)];
                    let s = self.slot(r, j);
                    self.band[s] -= m * u;
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Lower and upper bandwidth of the permuted matrix.
    pub fn bandwidth(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        if rhs.len() != n {
            return Err(Error::SolveFailure(format!(
                "right-hand side of length {} for a system of size {n}",
                rhs.len()
            )));
        }
        let mut b: Vec<f64> = self.order.iter().map(|&i| rhs[i]).collect();
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                for r in k + 1..=(k + kl).min(n - 1) {
                    b[r] -= self.multipliers[k * kl.max(1) + (r - k - 1)] * bk;
                }
            }
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in i + 1..=(i + ku + kl).min(n - 1) {
                s -= self.band[self.slot(i, j)] * b[j];
            }
            b[i] = s / self.band[self.slot(i, i)];
        }
        let mut x = vec![0.0; n];
        for (k, &i) in self.order.iter().enumerate() {
            x[i] = b[k];
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SolveFailure("non-finite solution".into()));
        }
        Ok(x)
    }

    /// Solve `Aᵀ x = rhs` with the same factorization.
    pub fn solve_transpose(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        if rhs.len() != n {
            return Err(Error::SolveFailure("right-hand side length mismatch".into()));
        }
        // PA = LU in permuted coordinates, so Aᵀ = Uᵀ Lᵀ P.
        let mut b: Vec<f64> = self.order.iter().map(|&i| rhs[i]).collect();
        for i in 0..n {
            let mut s = b[i];
            for j in i.saturating_sub(ku + kl)..i {
                s -= self.band[self.slot(j, i)] * b[j];
            }
            b[i] = s / self.band[self.slot(i, i)];
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for r in k + 1..=(k + kl).min(n - 1) {
                s -= self.multipliers[k * kl.max(1) + (r - k - 1)] * b[r];
            }
            b[k] = s;
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
        }
        let mut x = vec![0.0; n];
        for (k, &i) in self.order.iter().enumerate() {
            x[i] = b[k];
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SolveFailure("non-finite solution".into()));
        }
        Ok(x)
    }

    /// Sign of the determinant of the original matrix.
    pub fn det_sign(&self) -> f64 {
        let mut sign = if self.swaps.is_multiple_of(2) { 1.0 } else { -1.0 };
        for i in 0..self.n {
            if self.band[self.slot(i, i)] < 0.0 {
                sign = -sign;
            }
        }
        sign
    }

    /// `log |det A|`.
    pub fn log_abs_det(&self) -> f64 {
        (0..self.n).map(|i| self.band[self.slot(i, i)].abs().ln()).sum()
    }

    /// Smallest `|U_ii|`, a cheap singularity indicator.
    pub fn min_abs_pivot(&self) -> f64 {
        (0..self.n)
            .map(|i| self.band[self.slot(i, i)].abs())
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `Σ w_i a_i b_i`.
pub fn weighted_dot(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a.iter().zip(b)).map(|(w, (x, y))| w * x * y).sum()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `y += s x`.
pub fn axpy(s: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += s * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_banded(n: usize, kl: usize, ku: usize, seed: u64) -> CsrMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Vec::new();
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                t.push((i, j, rng.gen_range(-1.0..1.0)));
            }
        }
        CsrMatrix::from_triplets(n, n, t)
    }

    #[test]
    fn solve_matches_dense() {
        for (n, kl, ku, seed) in [(30, 2, 3, 1), (50, 5, 1, 2), (17, 0, 4, 3), (12, 4, 0, 4)] {
            let a = random_banded(n, kl, ku, seed);
            let order: Vec<usize> = (0..n).collect();
            let lu = BandedLu::factor(&a, &order).unwrap();
            let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
            let x = lu.solve(&b).unwrap();
            let r = a.matvec(&x);
            for (ri, bi) in r.iter().zip(&b) {
                assert!((ri - bi).abs() < 1e-9, "{ri} vs {bi}");
            }
            let y = lu.solve_transpose(&b).unwrap();
            let rt = a.transpose_matvec(&y);
            for (ri, bi) in rt.iter().zip(&b) {
                assert!((ri - bi).abs() < 1e-9, "{ri} vs {bi}");
            }
            let dense_det = a.to_dense().determinant();
            assert_eq!(lu.det_sign(), dense_det.signum());
            assert!((lu.log_abs_det() - dense_det.abs().ln()).abs() < 1e-8);
        }
    }

    #[test]
    fn permuted_cycle_is_solved() {
        // Periodic tridiagonal matrix in zig-zag order.
        let n = 21;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 3.0));
            t.push((i, (i + 1) % n, -1.0));
            t.push(((i + 1) % n, i, -1.0 + 0.1 * i as f64));
        }
        let a = CsrMatrix::from_triplets(n, n, t);
        let mut order = Vec::new();
        let (mut lo, mut hi) = (0, n - 1);
        while lo <= hi {
            order.push(lo);
            if lo != hi {
                order.push(hi);
            }
            lo += 1;
            hi -= 1;
        }
        let lu = BandedLu::factor(&a, &order).unwrap();
        assert!(lu.bandwidth().0 <= 2 && lu.bandwidth().1 <= 2);
        let b = vec![1.0; n];
        let x = lu.solve(&b).unwrap();
        let r = a.matvec(&x);
        assert!(r.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn singular_matrix_fails() {
        let a = CsrMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (1, 0, 1.0)]);
        assert!(BandedLu::factor(&a, &[0, 1]).is_err());
    }

    #[test]
    fn duplicate_triplets_are_summed() {
        let a = CsrMatrix::from_triplets(2, 2, vec![(0, 1, 1.0), (0, 1, 2.5), (1, 0, -1.0)]);
        assert_eq!(a.get(0, 1), 3.5);
        assert_eq!(a.nnz(), 2);
    }
}
