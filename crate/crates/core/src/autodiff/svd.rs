//! Thin singular value decomposition by one-sided (Hestenes) Jacobi rotations.
//!
//! For `A` of shape `m×n` with `r = min(m, n)` this returns `U` (`m×r`),
//! singular values `s` (length `r`, descending) and `V` (`n×r`) with
//! `A = U · diag(s) · Vᵀ`. Columns of `U` belonging to zero singular
//! values are left as zero vectors; callers that need an orthonormal
//! basis must threshold on `s` first.

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const SVD_TOLERANCE: f64 = 1e-12;
pub const SVD_MAX_SWEEPS: usize = 200;

#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Tensor,
    pub s: Vec<f64>,
    pub v: Tensor,
}

impl Svd {
    /// `U_r · V_rᵀ` over singular values strictly above `rel_cutoff · σ_max`.
    pub fn polar_factor(&self, rel_cutoff: f64) -> Tensor {
        let m = self.u.rows();
        let n = self.v.rows();
        let mut out = Tensor::zeros(&[m, n]);
        let smax = self.s.first().copied().unwrap_or(0.0);
        if smax <= 0.0 {
            return out;
        }
        let cutoff = rel_cutoff * smax;
        let r = self.s.len();
        for (j, &sj) in self.s.iter().enumerate() {
            if sj <= cutoff {
                continue;
            }
            for a in 0..m {
                let ua = self.u.data()[a * r + j];
                if ua == 0.0 {
                    continue;
                }
                for b in 0..n {
                    let v = out.get(a, b) + ua * self.v.data()[b * r + j];
                    out.set(a, b, v);
                }
            }
        }
        out
    }
}

pub fn svd(a: &Tensor) -> Result<Svd> {
    let (m, n) = a.expect_matrix("svd")?;
    if m == 0 || n == 0 {
        return Err(Error::Contract(format!(
            "svd of empty matrix {:?}",
            a.shape()
        )));
    }
    if m >= n {
        jacobi_tall(a)
    } else {
        // A = (Aᵀ)ᵀ = (U' S V'ᵀ)ᵀ = V' S U'ᵀ
        let t = jacobi_tall(&a.transpose())?;
        Ok(Svd {
            u: t.v,
            s: t.s,
            v: t.u,
        })
    }
}

/// One-sided Jacobi for `m ≥ n`. Columns are kept contiguous for the rotations.
fn jacobi_tall(a: &Tensor) -> Result<Svd> {
    let (m, n) = (a.rows(), a.cols());
    // column-major working copies
    let mut cols: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..m).map(|i| a.get(i, j)).collect())
        .collect();
    let mut vcols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    // Rotations preserve ‖A‖_F; inner products below ε·‖A‖_F² are rounding noise.
    let floor = f64::EPSILON * cols.iter().flatten().map(|x| x * x).sum::<f64>();
    let mut converged = n == 1;
    for _sweep in 0..SVD_MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let (alpha, beta, gamma) = {
                    let (cp, cq) = (&cols[p], &cols[q]);
                    let mut alpha = 0.0;
                    let mut beta = 0.0;
                    let mut gamma = 0.0;
                    for (&x, &y) in cp.iter().zip(cq) {
                        alpha += x * x;
                        beta += y * y;
                        gamma += x * y;
                    }
                    (alpha, beta, gamma)
                };
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                if gamma.abs() <= floor || gamma.abs() <= SVD_TOLERANCE * alpha.sqrt() * beta.sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, p, q, c, s);
                rotate(&mut vcols, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
        }
    }
    if !converged {
        return Err(Error::SvdNoConvergence {
            iterations: SVD_MAX_SWEEPS,
        });
    }

    let norms: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));

    let r = n;
    let mut u = Tensor::zeros(&[m, r]);
    let mut v = Tensor::zeros(&[n, r]);
    let mut s = Vec::with_capacity(r);
    for (k, &j) in order.iter().enumerate() {
        let sigma = norms[j];
        s.push(sigma);
        if sigma > 0.0 {
            for i in 0..m {
                u.set(i, k, cols[j][i] / sigma);
            }
        }
        for i in 0..n {
            v.set(i, k, vcols[j][i]);
        }
    }
    Ok(Svd { u, s, v })
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    let cp = &mut left[p];
    let cq = &mut right[0];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let xp = *x;
        let xq = *y;
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}
