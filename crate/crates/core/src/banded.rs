//! Direct solvers for banded linear systems.
//!
//! Lattice operators with a 4-connected stencil are banded with half-bandwidth
//! equal to the shorter grid side, which keeps exact sampling of fields up to
//! a few hundred pixels a side tractable.

use crate::error::{Error, Result};

/// Square banded matrix, row-wise storage of columns `[r - lower, r + upper]`.
#[derive(Clone, Debug)]
pub(crate) struct BandedMatrix {
    n: usize,
    lower: usize,
    upper: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    /// Zero matrix with the given half-bandwidths; `upper` is storage capacity
    /// and may exceed the structural bandwidth to leave room for pivot fill.
    pub fn zeros(n: usize, lower: usize, upper: usize) -> Self {
        Self {
            n,
            lower,
            upper,
            data: vec![0.0; n * (lower + upper + 1)],
        }
    }

    #[inline]
    fn stride(&self) -> usize {
        self.lower + self.upper + 1
    }

    #[inline]
    fn offset(&self, r: usize, c: usize) -> usize {
        debug_assert!(c + self.lower >= r && c <= r + self.upper, "({r},{c}) outside band");
        r * self.stride() + c + self.lower - r
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[self.offset(r, c)]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        let o = self.offset(r, c);
        self.data[o] = v;
    }

    /// Solve `A x = rhs` in place by Gaussian elimination.
    ///
    /// With `pivot`, partial pivoting is used and `upper` must be at least
    /// `2 * lower` (the fill bound). Without it, elimination runs in natural
    /// order, which is stable for diagonally dominant systems.
    pub fn solve(mut self, rhs: &mut [f64], pivot: bool) -> Result<()> {
        let n = self.n;
        assert_eq!(rhs.len(), n);
        if pivot {
            assert!(self.upper >= 2 * self.lower, "insufficient fill capacity");
        }
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tiny = scale * 1e-13;
        let stride = self.stride();
        let lower = self.lower;
        let upper = self.upper;

        for k in 0..n {
            let last_row = (k + lower).min(n - 1);
            let last_col = (k + upper).min(n - 1);
            if pivot {
                let mut p = k;
                let mut best = self.get(k, k).abs();
                for r in k + 1..=last_row {
                    let v = self.get(r, k).abs();
                    if v > best {
                        best = v;
                        p = r;
                    }
                }
                if p != k {
                    for c in k..=last_col {
                        let (a, b) = (self.offset(k, c), self.offset(p, c));
                        self.data.swap(a, b);
                    }
                    rhs.swap(k, p);
                }
            }
            let diag = self.get(k, k);
            if diag.abs() <= tiny || !diag.is_finite() {
                return Err(Error::SingularSystem { pivot: k });
            }
            let (head, tail) = self.data.split_at_mut((k + 1) * stride);
            let pivot_row = &head[k * stride..];
            let prow = &pivot_row[k + 1 + lower - k..=last_col + lower - k];
            for r in k + 1..=last_row {
                let base = (r - k - 1) * stride;
                let lead = base + k + lower - r;
                let l = tail[lead] / diag;
                if l == 0.0 {
                    continue;
                }
                tail[lead] = 0.0;
                let dst = &mut tail[base + k + 1 + lower - r..=base + last_col + lower - r];
                for (d, &s) in dst.iter_mut().zip(prow) {
                    *d -= l * s;
                }
                rhs[r] -= l * rhs[k];
            }
        }

        for k in (0..n).rev() {
            let last_col = (k + upper).min(n - 1);
            let row = &self.data[k * stride..(k + 1) * stride];
            let mut acc = rhs[k];
            for c in k + 1..=last_col {
                acc -= row[c + lower - k] * rhs[c];
            }
            rhs[k] = acc / row[lower];
        }
        Ok(())
    }
}

/// Lower Cholesky factor of a symmetric positive-definite banded matrix.
#[derive(Clone, Debug)]
pub(crate) struct BandedCholesky {
    n: usize,
    bw: usize,
    // row r holds columns [r - bw, r]
    data: Vec<f64>,
}

impl BandedCholesky {
    /// Factor `a`, reading only its lower band (`a.lower` must equal the
    /// half-bandwidth). Fails if the matrix is not positive definite.
    pub fn factor(a: &BandedMatrix) -> Result<Self> {
        let n = a.n;
        let bw = a.lower;
        let stride = bw + 1;
        let mut data = vec![0.0; n * stride];
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let k0 = j0.max(j.saturating_sub(bw));
                let mut acc = a.get(i, j);
                let ri = i * stride + bw - i;
                let rj = j * stride + bw - j;
                for k in k0..j {
                    acc -= data[ri + k] * data[rj + k];
                }
                if j == i {
                    if acc <= 0.0 || !acc.is_finite() {
                        return Err(Error::SingularSystem { pivot: i });
                    }
                    data[ri + i] = acc.sqrt();
                } else {
                    data[ri + j] = acc / data[rj + j];
                }
            }
        }
        Ok(Self { n, bw, data })
    }

    /// Solve `Lᵀ x = rhs` in place.
    pub fn solve_transpose(&self, rhs: &mut [f64]) {
        let stride = self.bw + 1;
        for j in (0..self.n).rev() {
            let mut acc = rhs[j];
            for i in j + 1..=(j + self.bw).min(self.n - 1) {
                acc -= self.data[i * stride + self.bw - i + j] * rhs[i];
            }
            rhs[j] = acc / self.data[j * stride + self.bw];
        }
    }
}
