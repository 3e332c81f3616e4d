//! One- and two-body matrix elements over Wannier orbitals and the sparse
//! many-body operators `H0 = Σ h_ij a†_i a_j` and
//! `W = ½ Σ W_ijkl a†_i a†_j a_k a_l`, so that `H(g) = H0 + g W`.

use std::io::Write;

use nalgebra::DMatrix;

use crate::dvr::{Grid, SpMatrix};
use crate::exec::Execution;
use crate::fock::{FockBasis, SignedPermutation};
use crate::spbands::WannierSet;
use crate::C64;

/// Two-body integrals below this magnitude are stored as zero.
pub const TENSOR_DROP_TOL: f64 = 1e-12;
/// Many-body matrix elements below this magnitude are not stored.
pub const ASSEMBLY_DROP_TOL: f64 = 1e-14;

/// `h_ij = w_iᵀ H_sp w_j`.
#[derive(Debug, Clone)]
pub struct OneBodyTensor(pub DMatrix<f64>);

impl OneBodyTensor {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn n_orb(&self) -> usize {
        self.0.nrows()
    }
}

pub fn one_body_elements(wannier: &WannierSet, h_sp: &SpMatrix) -> OneBodyTensor {
    let w = wannier.matrix();
    let h = w.transpose() * h_sp.matrix() * &w;
    OneBodyTensor(0.5 * (&h + h.transpose()))
}

/// Contact integrals `∫ w_i w_j w_k w_l dx` over real orbitals.
#[derive(Debug, Clone)]
pub struct TwoBodyTensor {
    n_orb: usize,
    values: Vec<f64>,
}

impl TwoBodyTensor {
    pub fn n_orb(&self) -> usize {
        self.n_orb
    }

    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let n = self.n_orb;
        self.values[((i * n + j) * n + k) * n + l]
    }

    /// Largest violation of the permutation symmetries.
    pub fn max_symmetry_violation(&self) -> f64 {
        let n = self.n_orb;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let v = self.get(i, j, k, l);
                        for u in [
                            self.get(j, i, k, l),
                            self.get(i, j, l, k),
                            self.get(k, l, i, j),
                            self.get(i, k, j, l),
                        ] {
                            worst = worst.max((v - u).abs());
                        }
                    }
                }
            }
        }
        worst
    }

    /// CSV `i,j,k,l,value` over nonzero elements with `i<=j<=k<=l`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "i,j,k,l,value")?;
        let n = self.n_orb;
        for i in 0..n {
            for j in i..n {
                for k in j..n {
                    for l in k..n {
                        let v = self.get(i, j, k, l);
                        if v != 0.0 {
                            writeln!(out, "{i},{j},{k},{l},{v:.15e}")?;
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Grid quadrature of the contact integrals. With unit-norm DVR
/// coefficients `c`, `∫ w_i w_j w_k w_l dx = Σ_α c_iα c_jα c_kα c_lα / Δx`.
pub fn two_body_elements(wannier: &WannierSet, grid: &Grid) -> TwoBodyTensor {
    let n = wannier.len();
    let w = wannier.matrix();
    let n_pts = w.nrows();
    let inv_dx = 1.0 / grid.dx();
    let mut values = vec![0.0; n * n * n * n];
    let mut pair = vec![0.0; n_pts];
    for i in 0..n {
        for j in i..n {
            for (a, p) in pair.iter_mut().enumerate() {
                *p = w[(a, i)] * w[(a, j)];
            }
            for k in i..n {
                for l in k..n {
                    let v: f64 = (0..n_pts).map(|a| pair[a] * w[(a, k)] * w[(a, l)]).sum::<f64>()
                        * inv_dx;
                    let v = if v.abs() < TENSOR_DROP_TOL { 0.0 } else { v };
                    // All 24 index permutations share this value.
                    let idx = [i, j, k, l];
                    for p in PERMUTATIONS_4 {
                        let (a, b, c, d) = (idx[p[0]], idx[p[1]], idx[p[2]], idx[p[3]]);
                        values[((a * n + b) * n + c) * n + d] = v;
                    }
                }
            }
        }
    }
    TwoBodyTensor { n_orb: n, values }
}

const PERMUTATIONS_4: [[usize; 4]; 24] = [
    [0, 1, 2, 3], [0, 1, 3, 2], [0, 2, 1, 3], [0, 2, 3, 1], [0, 3, 1, 2], [0, 3, 2, 1],
    [1, 0, 2, 3], [1, 0, 3, 2], [1, 2, 0, 3], [1, 2, 3, 0], [1, 3, 0, 2], [1, 3, 2, 0],
    [2, 0, 1, 3], [2, 0, 3, 1], [2, 1, 0, 3], [2, 1, 3, 0], [2, 3, 0, 1], [2, 3, 1, 0],
    [3, 0, 1, 2], [3, 0, 2, 1], [3, 1, 0, 2], [3, 1, 2, 0], [3, 2, 0, 1], [3, 2, 1, 0],
];

/// `H0` and `W` on a shared row-compressed sparsity pattern.
#[derive(Debug, Clone)]
pub struct HamiltonianPair {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    h0: Vec<f64>,
    w: Vec<f64>,
}

impl HamiltonianPair {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// `y = (H0 + g W) x` for real vectors.
    pub fn apply_real(&self, g: f64, x: &[f64], y: &mut [f64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += (self.h0[k] + g * self.w[k]) * x[self.cols[k]];
            }
            *yr = acc;
        }
    }

    /// `y = (H0 + g W) x` for complex vectors.
    pub fn apply(&self, g: f64, x: &[C64], y: &mut [C64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            let mut re = 0.0;
            let mut im = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let a = self.h0[k] + g * self.w[k];
                let v = x[self.cols[k]];
                re += a * v.re;
                im += a * v.im;
            }
            *yr = C64::new(re, im);
        }
    }

    /// `⟨x| H0 + g W |x⟩` for a complex state.
    pub fn expectation(&self, g: f64, x: &[C64]) -> f64 {
        let mut hx = vec![C64::default(); self.dim];
        self.apply(g, x, &mut hx);
        x.iter().zip(&hx).map(|(a, b)| (a.conj() * b).re).sum()
    }

    fn dense_from(&self, f: impl Fn(usize) -> f64) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                m[(r, self.cols[k])] += f(k);
            }
        }
        m
    }

    pub fn dense(&self, g: f64) -> DMatrix<f64> {
        self.dense_from(|k| self.h0[k] + g * self.w[k])
    }

    pub fn dense_h0(&self) -> DMatrix<f64> {
        self.dense_from(|k| self.h0[k])
    }

    pub fn dense_w(&self) -> DMatrix<f64> {
        self.dense_from(|k| self.w[k])
    }

    /// Diagonal of `H0 + g W`.
    pub fn diagonal(&self, g: f64) -> Vec<f64> {
        (0..self.dim)
            .map(|r| {
                (self.row_ptr[r]..self.row_ptr[r + 1])
                    .filter(|&k| self.cols[k] == r)
                    .map(|k| self.h0[k] + g * self.w[k])
                    .sum()
            })
            .collect()
    }

    fn lookup(&self, r: usize, c: usize) -> Option<usize> {
        let row = &self.cols[self.row_ptr[r]..self.row_ptr[r + 1]];
        row.binary_search(&c).ok().map(|p| self.row_ptr[r] + p)
    }

    /// `(max |H0 - H0ᵀ|, max |W - Wᵀ|)` over stored entries.
    pub fn max_asymmetry(&self) -> (f64, f64) {
        let mut worst = (0.0f64, 0.0f64);
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.cols[k];
                let (h0t, wt) = self
                    .lookup(c, r)
                    .map_or((0.0, 0.0), |kt| (self.h0[kt], self.w[kt]));
                worst.0 = worst.0.max((self.h0[k] - h0t).abs());
                worst.1 = worst.1.max((self.w[k] - wt).abs());
            }
        }
        worst
    }

    /// Max absolute row sum of `W`, an upper bound on `‖W‖₂`.
    pub fn w_norm_bound(&self) -> f64 {
        (0..self.dim)
            .map(|r| (self.row_ptr[r]..self.row_ptr[r + 1]).map(|k| self.w[k].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Max absolute row sum of `H0 + g W`.
    pub fn norm_bound(&self, g: f64) -> f64 {
        (0..self.dim)
            .map(|r| {
                (self.row_ptr[r]..self.row_ptr[r + 1])
                    .map(|k| (self.h0[k] + g * self.w[k]).abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// `max |(H Π - Π H)_{ij}|` for `H = H0 + g W`, by columns.
    pub fn parity_residual(&self, g: f64, parity: &SignedPermutation) -> f64 {
        let n = self.dim;
        let mut worst = 0.0f64;
        let mut e = vec![0.0; n];
        let mut he = vec![0.0; n];
        let mut pe_h = vec![0.0; n];
        for j in 0..n {
            // H Π e_j = sign_j H e_{π(j)}
            let pj = parity.target[j];
            e.iter_mut().for_each(|x| *x = 0.0);
            e[pj] = parity.sign[j];
            self.apply_real(g, &e, &mut he);
            // Π H e_j
            e.iter_mut().for_each(|x| *x = 0.0);
            e[j] = 1.0;
            self.apply_real(g, &e, &mut pe_h);
            let phe = parity.apply(&pe_h);
            for i in 0..n {
                worst = worst.max((he[i] - phe[i]).abs());
            }
        }
        worst
    }
}

fn sqrt_u(n: u32) -> f64 {
    (n as f64).sqrt()
}

/// One row of `H0` and `W` as sorted `(col, h0, w)` triples.
fn assemble_row(
    basis: &FockBasis,
    h: &OneBodyTensor,
    w: &TwoBodyTensor,
    row: usize,
) -> Vec<(usize, f64, f64)> {
    let n_orb = basis.n_orbitals();
    let ket = basis.state(row);
    let mut entries: Vec<(usize, f64, f64)> = Vec::new();
    let mut work = ket.to_vec();

    // One-body: a†_i a_j |n⟩.
    for j in 0..n_orb {
        let nj = ket[j] as u32;
        if nj == 0 {
            continue;
        }
        work[j] -= 1;
        for i in 0..n_orb {
            let hij = h.get(i, j);
            if hij == 0.0 {
                continue;
            }
            let ni = work[i] as u32;
            let amp = sqrt_u(nj) * sqrt_u(ni + 1);
            work[i] += 1;
            let col = basis.rank(&work).expect("one-body image in basis");
            work[i] -= 1;
            entries.push((col, hij * amp, 0.0));
        }
        work[j] += 1;
    }

    // Two-body over unordered pairs: coefficient ½ m_ij m_kl with m = 2 for
    // distinct indices, 1 otherwise.
    for k in 0..n_orb {
        if ket[k] == 0 {
            continue;
        }
        for l in k..n_orb {
            let ann = if k == l {
                let nk = ket[k] as u32;
                if nk < 2 {
                    continue;
                }
                sqrt_u(nk * (nk - 1))
            } else {
                if ket[l] == 0 {
                    continue;
                }
                sqrt_u(ket[k] as u32 * ket[l] as u32)
            };
            work[k] -= 1;
            work[l] -= 1;
            let m_kl = if k == l { 1.0 } else { 2.0 };
            for i in 0..n_orb {
                for j in i..n_orb {
                    let v = w.get(i, j, k, l);
                    if v == 0.0 {
                        continue;
                    }
                    let cre = if i == j {
                        let ni = work[i] as u32;
                        sqrt_u((ni + 1) * (ni + 2))
                    } else {
                        sqrt_u((work[i] as u32 + 1) * (work[j] as u32 + 1))
                    };
                    let m_ij = if i == j { 1.0 } else { 2.0 };
                    work[i] += 1;
                    work[j] += 1;
                    let col = basis.rank(&work).expect("two-body image in basis");
                    work[i] -= 1;
                    work[j] -= 1;
                    entries.push((col, 0.0, 0.5 * m_ij * m_kl * v * ann * cre));
                }
            }
            work[k] += 1;
            work[l] += 1;
        }
    }

    entries.sort_by_key(|e| e.0);
    let mut merged: Vec<(usize, f64, f64)> = Vec::with_capacity(entries.len());
    for (c, a, b) in entries {
        match merged.last_mut() {
            Some(last) if last.0 == c => {
                last.1 += a;
                last.2 += b;
            }
            _ => merged.push((c, a, b)),
        }
    }
    merged.retain(|e| e.1.abs() >= ASSEMBLY_DROP_TOL || e.2.abs() >= ASSEMBLY_DROP_TOL);
    merged
}

/// Assembles `H0` and `W` row by row.
pub fn assemble(
    basis: &FockBasis,
    h: &OneBodyTensor,
    w: &TwoBodyTensor,
    exec: Execution,
) -> HamiltonianPair {
    assert_eq!(h.n_orb(), basis.n_orbitals());
    assert_eq!(w.n_orb(), basis.n_orbitals());
    let dim = basis.dim();
    let rows = exec.map_range(dim, |r| assemble_row(basis, h, w, r));
    let nnz: usize = rows.iter().map(Vec::len).sum();
    let mut row_ptr = Vec::with_capacity(dim + 1);
    let mut cols = Vec::with_capacity(nnz);
    let mut h0 = Vec::with_capacity(nnz);
    let mut wv = Vec::with_capacity(nnz);
    row_ptr.push(0);
    for row in rows {
        for (c, a, b) in row {
            cols.push(c);
            h0.push(a);
            wv.push(b);
        }
        row_ptr.push(cols.len());
    }
    HamiltonianPair {
        dim,
        row_ptr,
        cols,
        h0,
        w: wv,
    }
}
