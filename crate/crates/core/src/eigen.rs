//! Lowest eigenpairs of real symmetric operators.
//!
//! Small problems are diagonalized densely. Larger ones use a thick-restart
//! Lanczos iteration with full (two-pass) reorthogonalization: the projected
//! matrix is accumulated from the orthogonalization coefficients, so after a
//! restart the kept Ritz vectors and the residual direction still satisfy
//! `A V = V H + f e_lastᵀ` and Ritz residuals are read off `|f| |s_last|`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mbham::HamiltonianPair;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EigenOptions {
    /// Dimensions up to this size are diagonalized densely.
    pub dense_threshold: usize,
    /// Required residual `‖Hv - λv‖` of every returned pair.
    pub tol: f64,
    /// Lanczos subspace size; `None` picks `max(2k + 30, 60)`.
    pub subspace: Option<usize>,
    pub max_restarts: usize,
    /// Seed of the Lanczos starting vector.
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            dense_threshold: 3000,
            tol: 1e-8,
            subspace: None,
            max_restarts: 500,
            seed: 0x5eed,
        }
    }
}

/// Ascending eigenvalues with eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct Eigenpairs {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
    /// `‖Hv - λv‖` measured on the returned pairs.
    pub residuals: Vec<f64>,
}

impl Eigenpairs {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn vector(&self, i: usize) -> Vec<f64> {
        self.vectors.column(i).iter().copied().collect()
    }
}

/// Fixes the sign of each column so its largest-magnitude entry is positive.
fn canonical_signs(vectors: &mut DMatrix<f64>) {
    for mut col in vectors.column_iter_mut() {
        let pivot = col
            .iter()
            .copied()
            .fold(0.0f64, |acc, x| if x.abs() > acc.abs() + 1e-12 { x } else { acc });
        if pivot < 0.0 {
            col.neg_mut();
        }
    }
}

/// Lowest `k` eigenpairs of a dense symmetric matrix.
pub fn dense_lowest(m: DMatrix<f64>, k: usize) -> Result<Eigenpairs> {
    let n = m.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("cannot take {k} eigenpairs of dimension {n}")));
    }
    let original = m.clone();
    let eig = SymmetricEigen::try_new(m, 1e-15, 0)
        .ok_or_else(|| Error::Eigensolver("dense symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values: Vec<f64> = order[..k].iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, k);
    for (c, &i) in order[..k].iter().enumerate() {
        vectors.set_column(c, &eig.eigenvectors.column(i));
    }
    canonical_signs(&mut vectors);
    let residuals = (0..k)
        .map(|c| {
            let v = vectors.column(c);
            (&original * v - v * values[c]).norm()
        })
        .collect();
    Ok(Eigenpairs {
        values,
        vectors,
        residuals,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Orthogonalizes `w` against `basis` twice; returns the accumulated
/// coefficients.
fn orthogonalize(basis: &[Vec<f64>], w: &mut [f64]) -> Vec<f64> {
    let mut coeffs = vec![0.0; basis.len()];
    for _ in 0..2 {
        for (c, v) in coeffs.iter_mut().zip(basis) {
            let h = dot(v, w);
            *c += h;
            w.iter_mut().zip(v).for_each(|(wi, vi)| *wi -= h * vi);
        }
    }
    coeffs
}

fn random_unit_orthogonal(rng: &mut ChaCha8Rng, basis: &[Vec<f64>], dim: usize) -> Option<Vec<f64>> {
    for _ in 0..10 {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() - 0.5).collect();
        orthogonalize(basis, &mut v);
        let nv = norm(&v);
        if nv > 1e-8 {
            v.iter_mut().for_each(|x| *x /= nv);
            return Some(v);
        }
    }
    None
}

/// Lowest `k` eigenpairs of the symmetric operator `op` on `R^dim`.
pub fn lanczos_lowest<F>(op: F, dim: usize, k: usize, opts: &EigenOptions) -> Result<Eigenpairs>
where
    F: Fn(&[f64], &mut [f64]),
{
    if k == 0 || k >= dim {
        return Err(Error::InvalidParameter(format!(
            "Lanczos needs 0 < k < dim, got k = {k}, dim = {dim}"
        )));
    }
    let m = opts.subspace.unwrap_or((2 * k + 30).max(60)).min(dim).max(k + 2);
    let keep = (k + (m - k) / 2).min(m - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut proj = DMatrix::<f64>::zeros(m, m);
    basis.push(random_unit_orthogonal(&mut rng, &[], dim).expect("nonzero random start"));
    let mut w = vec![0.0; dim];
    let mut residual_norm;
    let mut residual_dir: Vec<f64>;

    for restart in 0..=opts.max_restarts {
        // Expand the basis to m vectors.
        loop {
            let j = basis.len() - 1;
            op(&basis[j], &mut w);
            let h = orthogonalize(&basis, &mut w);
            for (i, &hi) in h.iter().enumerate() {
                proj[(i, j)] = hi;
                proj[(j, i)] = hi;
            }
            let beta = norm(&w);
            if basis.len() == m {
                residual_norm = beta;
                residual_dir = w.clone();
                break;
            }
            let scale = proj[(j, j)].abs().max(1.0);
            if beta > 1e-12 * scale {
                basis.push(w.iter().map(|x| x / beta).collect());
            } else {
                // Invariant subspace: continue with a fresh direction.
                match random_unit_orthogonal(&mut rng, &basis, dim) {
                    Some(v) => basis.push(v),
                    None => {
                        residual_norm = 0.0;
                        residual_dir = vec![0.0; dim];
                        break;
                    }
                }
            }
        }

        let size = basis.len();
        let sub = proj.view((0, 0), (size, size)).into_owned();
        let eig = SymmetricEigen::new(sub);
        let mut order: Vec<usize> = (0..size).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let ritz_res: Vec<f64> = order
            .iter()
            .map(|&i| residual_norm * eig.eigenvectors[(size - 1, i)].abs())
            .collect();
        let converged = ritz_res[..k].iter().all(|&r| r < 0.05 * opts.tol);

        if converged || restart == opts.max_restarts || size < m {
            if !converged && size == m {
                return Err(Error::NoConvergence(format!(
                    "Lanczos: {} restarts, worst residual {:e}",
                    opts.max_restarts,
                    ritz_res[..k].iter().copied().fold(0.0, f64::max)
                )));
            }
            let mut vectors = DMatrix::zeros(dim, k);
            let values: Vec<f64> = order[..k].iter().map(|&i| eig.eigenvalues[i]).collect();
            for (c, &i) in order[..k].iter().enumerate() {
                let s = eig.eigenvectors.column(i);
                let mut x = vec![0.0; dim];
                for (v, &coef) in basis.iter().zip(s.iter()) {
                    x.iter_mut().zip(v).for_each(|(xi, vi)| *xi += coef * vi);
                }
                let nx = norm(&x);
                vectors.set_column(c, &DVector::from_iterator(dim, x.iter().map(|xi| xi / nx)));
            }
            canonical_signs(&mut vectors);
            let mut y = vec![0.0; dim];
            let residuals = (0..k)
                .map(|c| {
                    let x: Vec<f64> = vectors.column(c).iter().copied().collect();
                    op(&x, &mut y);
                    y.iter()
                        .zip(&x)
                        .map(|(a, b)| (a - values[c] * b).powi(2))
                        .sum::<f64>()
                        .sqrt()
                })
                .collect();
            return Ok(Eigenpairs {
                values,
                vectors,
                residuals,
            });
        }

        // Thick restart: keep the lowest Ritz vectors plus the residual direction.
        let mut kept: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut new_proj = DMatrix::<f64>::zeros(m, m);
        for (c, &i) in order[..keep].iter().enumerate() {
            let s = eig.eigenvectors.column(i);
            let mut x = vec![0.0; dim];
            for (v, &coef) in basis.iter().zip(s.iter()) {
                x.iter_mut().zip(v).for_each(|(xi, vi)| *xi += coef * vi);
            }
            new_proj[(c, c)] = eig.eigenvalues[i];
            kept.push(x);
        }
        // Re-orthonormalize the kept vectors against rounding drift.
        for c in 0..kept.len() {
            let (done, rest) = kept.split_at_mut(c);
            orthogonalize(done, &mut rest[0]);
            let nx = norm(&rest[0]);
            rest[0].iter_mut().for_each(|x| *x /= nx);
        }
        let mut next = residual_dir;
        orthogonalize(&kept, &mut next);
        let nn = norm(&next);
        if nn > 1e-14 {
            next.iter_mut().for_each(|x| *x /= nn);
            kept.push(next);
        } else {
            kept.push(random_unit_orthogonal(&mut rng, &kept, dim).ok_or_else(|| {
                Error::Eigensolver("could not extend the Krylov basis".into())
            })?);
        }
        basis = kept;
        proj = new_proj;
    }
    unreachable!("loop returns on the last restart")
}

/// Lowest `k` eigenpairs of `H0 + g W`; dense below the threshold.
pub fn lowest_eigenpairs(
    h: &HamiltonianPair,
    g: f64,
    k: usize,
    opts: &EigenOptions,
) -> Result<Eigenpairs> {
    let dim = h.dim();
    if k == 0 || k > dim || (k == dim && dim > opts.dense_threshold) {
        return Err(Error::InvalidParameter(format!(
            "requested {k} eigenpairs of dimension {dim}"
        )));
    }
    let pairs = if dim <= opts.dense_threshold {
        dense_lowest(h.dense(g), k)?
    } else {
        lanczos_lowest(|x, y| h.apply_real(g, x, y), dim, k, opts)?
    };
    if let Some((i, r)) = pairs
        .residuals
        .iter()
        .enumerate()
        .find(|(_, r)| !(**r < opts.tol))
    {
        return Err(Error::NoConvergence(format!(
            "eigenpair {i} has residual {r:e} above {:e}",
            opts.tol
        )));
    }
    Ok(pairs)
}
