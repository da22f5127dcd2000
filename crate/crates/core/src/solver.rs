//! Linear solvers for the symmetrised Laplacian: Jacobi-preconditioned
//! conjugate gradients and a banded `L D L^T` factorisation with selected
//! inversion of the band.

use crate::error::{Error, Result};
use crate::operator::CsrMatrix;

/// Default relative residual target for iterative solves.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Iteration cap `50 sqrt(n)`, with a floor for tiny systems.
pub fn default_max_iter(n: usize) -> usize {
    ((50.0 * (n as f64).sqrt()).ceil() as usize).max(50)
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `A x = b` for symmetric positive definite `A` with diagonal
/// preconditioning, to `||b - A x|| <= tol ||b||`.
pub fn pcg(a: &CsrMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<CgOutcome> {
    let n = a.n();
    if b.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: b.len(),
        });
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .into_iter()
        .enumerate()
        .map(|(i, d)| {
            if d > 0.0 {
                Ok(1.0 / d)
            } else {
                Err(Error::NotPositiveDefinite { row: i, pivot: d })
            }
        })
        .collect::<Result<_>>()?;

    let b_norm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(CgOutcome {
            x,
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut res = 1.0;

    for it in 1..=max_iter {
        a.mul_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::NotPositiveDefinite { row: it, pivot: pap });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res = dot(&r, &r).sqrt() / b_norm;
        if res <= tol {
            // Confirm against the true residual before reporting success.
            a.mul_into(&x, &mut ap);
            let true_res = b
                .iter()
                .zip(&ap)
                .map(|(b, ax)| (b - ax) * (b - ax))
                .sum::<f64>()
                .sqrt()
                / b_norm;
            if true_res <= tol {
                return Ok(CgOutcome {
                    x,
                    iterations: it,
                    relative_residual: true_res,
                });
            }
            for i in 0..n {
                r[i] = b[i] - ap[i];
            }
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NotConverged {
        iterations: max_iter,
        residual: res,
    })
}

/// `A = L D L^T` for a symmetric positive definite band matrix.
///
/// Row `i` of the unit lower factor is stored at `l[i * (bw + 1) + k]` for the
/// entry `L[i][i - k]`, `k = 1..=bw`; slot `k = 0` is unused.
#[derive(Debug, Clone)]
pub struct BandedLdlt {
    n: usize,
    bw: usize,
    l: Vec<f64>,
    d: Vec<f64>,
}

impl BandedLdlt {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.n();
        let bw = a.bandwidth();
        let w = bw + 1;
        let mut l = vec![0.0; n * w];
        let mut d = vec![0.0; n];
        for i in 0..n {
            for (j, v) in a.row(i) {
                if j < i {
                    l[i * w + (i - j)] = v;
                }
            }
            let lo = i.saturating_sub(bw);
            // Row i of L from the stored lower triangle of A.
            for j in lo..i {
                let jlo = lo.max(j.saturating_sub(bw));
                let mut s = l[i * w + (i - j)];
                for k in jlo..j {
                    s -= l[i * w + (i - k)] * l[j * w + (j - k)] * d[k];
                }
                l[i * w + (i - j)] = s / d[j];
            }
            let mut di = a.get(i, i);
            for k in lo..i {
                let lik = l[i * w + (i - k)];
                di -= lik * lik * d[k];
            }
            if !(di > 0.0) {
                return Err(Error::NotPositiveDefinite { row: i, pivot: di });
            }
            d[i] = di;
        }
        Ok(BandedLdlt { n, bw, l, d })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    pub fn pivots(&self) -> &[f64] {
        &self.d
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        let mut x = b.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let mut s = x[i];
            for k in lo..i {
                s -= self.l[i * w + (i - k)] * x[k];
            }
            x[i] = s;
        }
        for i in 0..n {
            x[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            let hi = (i + bw).min(n - 1);
            let mut s = x[i];
            for k in i + 1..=hi {
                s -= self.l[k * w + (k - i)] * x[k];
            }
            x[i] = s;
        }
        x
    }

    /// Diagonal of `A^{-1}` by the Takahashi recurrence, which only touches
    /// inverse entries inside the band.
    pub fn inverse_diagonal(&self) -> Vec<f64> {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        // z[j * w + (j - i)] = (A^{-1})[j][i] for 0 <= j - i <= bw
        let mut z = vec![0.0; n * w];
        let zget = |z: &[f64], a: usize, b: usize| -> f64 {
            if a >= b {
                z[a * w + (a - b)]
            } else {
                z[b * w + (b - a)]
            }
        };
        let mut col = vec![0.0; w];
        for i in (0..n).rev() {
            let hi = (i + bw).min(n - 1);
            // Off-diagonal entries Z[j][i], j in (i, hi].
            for j in i + 1..=hi {
                let mut s = 0.0;
                for k in i + 1..=hi {
                    let lki = self.l[k * w + (k - i)];
                    if lki != 0.0 {
                        s -= lki * zget(&z, j, k);
                    }
                }
                col[j - i] = s;
            }
            let mut zii = 1.0 / self.d[i];
            for k in i + 1..=hi {
                zii -= self.l[k * w + (k - i)] * col[k - i];
            }
            z[i * w] = zii;
            for j in i + 1..=hi {
                z[j * w + (j - i)] = col[j - i];
            }
        }
        (0..n).map(|i| z[i * w]).collect()
    }
}
