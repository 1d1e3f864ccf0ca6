//! Symmetric banded storage and an in-place Cholesky factorization. Grid
//! meshes in row-major vertex order have a bandwidth of about one row of
//! vertices, which keeps a direct solve cheap and fully deterministic.

use nalgebra::Matrix3;

#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    n: usize,
    bw: usize,
    /// Row-major lower band: entry `(i, j)` with `i - bw <= j <= i` lives at
    /// `i * (bw + 1) + bw - (i - j)`.
    data: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NotPositiveDefinite(pub usize);

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + self.bw - (i - j)
    }

    /// Entry `(i, j)` of the symmetric matrix.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    /// Adds `v` to the symmetric pair `(i, j)`/`(j, i)`.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    /// Adds the 3×3 block coupling vertex `vi` (rows) to `vj` (columns).
    /// Each unordered vertex pair must be added once (the diagonal block
    /// once per element as well).
    pub fn add_block(&mut self, vi: usize, vj: usize, blk: &Matrix3<f64>) {
        if vi == vj {
            for r in 0..3 {
                for c in 0..=r {
                    self.add(3 * vi + r, 3 * vi + c, blk[(r, c)]);
                }
            }
        } else {
            for r in 0..3 {
                for c in 0..3 {
                    self.add(3 * vi + r, 3 * vj + c, blk[(r, c)]);
                }
            }
        }
    }

    /// `s · self + diag(d)` with `d` given per vertex (repeated over its 3 DOFs).
    pub fn scaled_plus_vertex_diag(&self, s: f64, d: &[f64]) -> Self {
        let mut out = Self {
            n: self.n,
            bw: self.bw,
            data: self.data.iter().map(|v| v * s).collect(),
        };
        for (v, dv) in d.iter().enumerate() {
            for c in 0..3 {
                let k = out.idx(3 * v + c, 3 * v + c);
                out.data[k] += dv;
            }
        }
        out
    }

    /// Replaces row and column `i` with the identity row.
    pub fn clamp_dof(&mut self, i: usize) {
        let lo = i.saturating_sub(self.bw);
        for j in lo..i {
            let k = self.idx(i, j);
            self.data[k] = 0.0;
        }
        for r in i + 1..(i + self.bw + 1).min(self.n) {
            let k = self.idx(r, i);
            self.data[k] = 0.0;
        }
        let k = self.idx(i, i);
        self.data[k] = 1.0;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..=i {
                let a = self.data[self.idx(i, j)];
                y[i] += a * x[j];
                if j != i {
                    y[j] += a * x[i];
                }
            }
        }
        y
    }

    /// Overwrites the lower band with its Cholesky factor `L` (`A = L Lᵀ`).
    pub fn cholesky_in_place(&mut self) -> Result<(), NotPositiveDefinite> {
        let w = self.bw + 1;
        for i in 0..self.n {
            let lo_i = i.saturating_sub(self.bw);
            for j in lo_i..=i {
                let lo = lo_i.max(j.saturating_sub(self.bw));
                let row_i = &self.data[i * w + self.bw - (i - lo)..i * w + self.bw - (i - j)];
                let row_j = &self.data[j * w + self.bw - (j - lo)..j * w + self.bw];
                let dot: f64 = row_i.iter().zip(row_j).map(|(a, b)| a * b).sum();
                let k = i * w + self.bw - (i - j);
                let s = self.data[k] - dot;
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(NotPositiveDefinite(i));
                    }
                    self.data[k] = s.sqrt();
                } else {
                    self.data[k] = s / self.data[j * w + self.bw];
                }
            }
        }
        Ok(())
    }

    /// Solves `L Lᵀ x = b` in place, assuming the factorization has run.
    pub fn cholesky_solve(&self, b: &mut [f64]) {
        let w = self.bw + 1;
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let mut s = b[i];
            for j in lo..i {
                s -= self.data[i * w + self.bw - (i - j)] * b[j];
            }
            b[i] = s / self.data[i * w + self.bw];
        }
        for i in (0..self.n).rev() {
            b[i] /= self.data[i * w + self.bw];
            let xi = b[i];
            let lo = i.saturating_sub(self.bw);
            for j in lo..i {
                b[j] -= self.data[i * w + self.bw - (i - j)] * xi;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use nalgebra::{DMatrix, DVector};
    use rand::Rng;

    #[test]
    fn cholesky_matches_dense_solve() {
        let (n, bw) = (40, 7);
        let mut rng = seed::rng_for(1, &[]);
        let mut a = BandMatrix::zeros(n, bw);
        let mut dense = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in i.saturating_sub(bw)..i {
                let v = rng.random_range(-1.0..1.0);
                a.add(i, j, v);
                dense[(i, j)] += v;
                dense[(j, i)] += v;
            }
            a.add(i, i, 2.0 * bw as f64 + 1.0);
            dense[(i, i)] += 2.0 * bw as f64 + 1.0;
        }
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        assert!(
            (DVector::from_vec(a.mul_vec(&b)) - &dense * DVector::from_vec(b.clone())).norm()
                < 1e-12
        );
        let expected = dense
            .clone()
            .lu()
            .solve(&DVector::from_vec(b.clone()))
            .unwrap();
        let mut x = b.clone();
        a.cholesky_in_place().unwrap();
        a.cholesky_solve(&mut x);
        assert!((DVector::from_vec(x) - expected).norm() < 1e-10);
    }

    #[test]
    fn clamp_and_indefinite() {
        let mut a = BandMatrix::zeros(3, 1);
        a.add(0, 0, 1.0);
        a.add(1, 0, 2.0);
        a.add(1, 1, 1.0);
        a.add(2, 2, 1.0);
        let mut b = a.clone();
        assert_eq!(b.cholesky_in_place(), Err(NotPositiveDefinite(1)));
        a.clamp_dof(1);
        assert_eq!(a.get(0, 1), 0.0);
        assert_eq!(a.get(1, 1), 1.0);
        assert!(a.cholesky_in_place().is_ok());
    }
}
