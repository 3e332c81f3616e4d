//! Lanczos approximation of `exp(-i h A) ψ` for Hermitian `A`.
//!
//! The subspace grows until the a-posteriori estimate
//! `β_m |[exp(-i h T_m)]_{m,1}| ‖ψ‖` drops below the tolerance; if the cap is
//! reached the step is halved. Because the basis is kept orthonormal and the
//! projected propagator is unitary, norm and energy are preserved to rounding.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovExp {
    /// Local error target per step.
    pub tol: f64,
    /// Largest subspace dimension.
    pub max_dim: usize,
    /// Smallest step before giving up.
    pub min_step: f64,
}

impl Default for KrylovExp {
    fn default() -> Self {
        KrylovExp {
            tol: 1e-10,
            max_dim: 40,
            min_step: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KrylovStats {
    pub steps: usize,
    pub matvecs: usize,
    pub rejected: usize,
    pub max_dim_used: usize,
}

impl KrylovStats {
    pub fn merge(&mut self, other: KrylovStats) {
        self.steps += other.steps;
        self.matvecs += other.matvecs;
        self.rejected += other.rejected;
        self.max_dim_used = self.max_dim_used.max(other.max_dim_used);
    }
}

fn cdot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn cnorm(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `exp(-i h T) e_1` for the symmetric tridiagonal `T`.
fn tridiagonal_exp_e1(alpha: &[f64], beta: &[f64], h: f64) -> Vec<C64> {
    let n = alpha.len();
    let mut t = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        t[(i, i)] = alpha[i];
        if i + 1 < n {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let s = &eig.eigenvectors;
    (0..n)
        .map(|i| {
            (0..n)
                .map(|k| {
                    let phase = C64::from_polar(1.0, -h * eig.eigenvalues[k]);
                    phase * (s[(i, k)] * s[(0, k)])
                })
                .sum()
        })
        .collect()
}

impl KrylovExp {
    /// One attempt at `ψ ← exp(-i h A) ψ`; `None` if the subspace cap was hit.
    fn try_step<F>(&self, op: &F, psi: &mut [C64], h: f64, stats: &mut KrylovStats) -> Option<()>
    where
        F: Fn(&[C64], &mut [C64]),
    {
        let dim = psi.len();
        let beta0 = cnorm(psi);
        if beta0 == 0.0 {
            return Some(());
        }
        let max_dim = self.max_dim.min(dim).max(1);
        let mut basis: Vec<Vec<C64>> = Vec::with_capacity(max_dim);
        basis.push(psi.iter().map(|z| z / beta0).collect());
        let mut alpha = Vec::with_capacity(max_dim);
        let mut beta: Vec<f64> = Vec::with_capacity(max_dim);
        let mut w = vec![C64::default(); dim];

        for j in 0..max_dim {
            op(&basis[j], &mut w);
            stats.matvecs += 1;
            let a = cdot(&basis[j], &w).re;
            alpha.push(a);
            for (wi, vi) in w.iter_mut().zip(&basis[j]) {
                *wi -= vi * a;
            }
            if j > 0 {
                let b = beta[j - 1];
                for (wi, vi) in w.iter_mut().zip(&basis[j - 1]) {
                    *wi -= vi * b;
                }
            }
            // Full reorthogonalization.
            for v in &basis {
                let c = cdot(v, &w);
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi -= vi * c;
                }
            }
            let b = cnorm(&w);
            let u = tridiagonal_exp_e1(&alpha, &beta, h);
            let scale = alpha.iter().map(|x| x.abs()).fold(1.0, f64::max);
            let breakdown = b <= 1e-13 * scale || j + 1 == dim;
            let err = b * u[j].norm() * beta0;
            if breakdown || err < self.tol {
                stats.max_dim_used = stats.max_dim_used.max(j + 1);
                for z in psi.iter_mut() {
                    *z = C64::default();
                }
                for (v, &c) in basis.iter().zip(&u) {
                    let c = c * beta0;
                    for (zi, vi) in psi.iter_mut().zip(v) {
                        *zi += vi * c;
                    }
                }
                return Some(());
            }
            if j + 1 == max_dim {
                break;
            }
            beta.push(b);
            basis.push(w.iter().map(|z| z / b).collect());
        }
        None
    }

    /// Advances `psi` by `dt` under the constant operator `op`, subdividing
    /// the step as needed. `t0` only labels errors.
    pub fn propagate<F>(&self, op: &F, psi: &mut [C64], dt: f64, t0: f64) -> Result<KrylovStats>
    where
        F: Fn(&[C64], &mut [C64]),
    {
        let mut stats = KrylovStats::default();
        let mut done = 0.0;
        let mut h = dt;
        while done < dt * (1.0 - 1e-14) {
            h = h.min(dt - done);
            if self.try_step(op, psi, h, &mut stats).is_some() {
                stats.steps += 1;
                done += h;
                // Grow back cautiously after a rejection.
                h *= 1.5;
            } else {
                stats.rejected += 1;
                h *= 0.5;
                if h < self.min_step {
                    return Err(Error::StepUnderflow {
                        time: t0 + done,
                        step: h,
                    });
                }
            }
        }
        Ok(stats)
    }
}
