//! Sine-DVR discretization of the hard-walled lattice `V0 sin²(x)` on
//! `(-m π/2, m π/2)`.
//!
//! Orbitals are stored as DVR coefficient vectors with unit Euclidean norm.
//! The continuum value at a node is `c_α / sqrt(Δx)`, so a spatial integral
//! `∫ f dx` becomes `Δx Σ_α f(x_α)` once every factor is converted back to a
//! function value.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::{Error, Result};

/// Minimum number of grid points accepted.
pub const MIN_POINTS: usize = 64;
/// Minimum number of grid points per lattice well.
pub const MIN_POINTS_PER_WELL: usize = 32;

/// |ζ(1/2)|.
pub const ZETA_HALF_ABS: f64 = 1.460_354_508_809_586_8;

/// Uniform sine-DVR grid over a finite lattice of `m_wells` sites.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    m_wells: usize,
    n_points: usize,
    half_length: f64,
    dx: f64,
    points: Vec<f64>,
}

impl Grid {
    pub fn m_wells(&self) -> usize {
        self.m_wells
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    /// Position of the hard walls, `m π/2`.
    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    /// Node spacing, which is also the quadrature weight.
    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Index of the node mirrored through `x = 0`.
    pub fn mirror_index(&self, i: usize) -> usize {
        self.n_points - 1 - i
    }

    /// Index of the node closest to `x`.
    pub fn nearest_index(&self, x: f64) -> usize {
        let raw = ((x + self.half_length) / self.dx).round() as isize - 1;
        raw.clamp(0, self.n_points as isize - 1) as usize
    }

    /// Wave number `k_j = j π / (2 L)` of the `j`-th box mode (`j` from 1).
    pub fn box_wavenumber(&self, j: usize) -> f64 {
        j as f64 * PI / (2.0 * self.half_length)
    }
}

/// Builds the sine-DVR grid for `m_wells` wells with `n_points` interior nodes.
pub fn build_grid(m_wells: usize, n_points: usize) -> Result<Grid> {
    if m_wells == 0 || m_wells % 2 == 0 {
        return Err(Error::InvalidGrid(format!(
            "m_wells must be odd and positive, got {m_wells}"
        )));
    }
    if n_points < MIN_POINTS {
        return Err(Error::InvalidGrid(format!(
            "n_points = {n_points} is below the minimum {MIN_POINTS}"
        )));
    }
    if n_points < MIN_POINTS_PER_WELL * m_wells {
        return Err(Error::InvalidGrid(format!(
            "n_points = {n_points} resolves fewer than {MIN_POINTS_PER_WELL} points per well \
             for {m_wells} wells"
        )));
    }
    let half_length = m_wells as f64 * PI / 2.0;
    let dx = 2.0 * half_length / (n_points + 1) as f64;
    let points = (1..=n_points)
        .map(|a| -half_length + a as f64 * dx)
        .collect();
    Ok(Grid {
        m_wells,
        n_points,
        half_length,
        dx,
        points,
    })
}

/// Dense real symmetric single-particle operator on the grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct SpMatrix(DMatrix<f64>);

impl SpMatrix {
    pub fn new(m: DMatrix<f64>) -> Self {
        SpMatrix(m)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let m = &self.0;
        let n = m.nrows();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..i {
                worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

/// Closed-form sine-DVR matrix of `-d²/dx²` on the grid's box.
pub fn kinetic_matrix(grid: &Grid) -> DMatrix<f64> {
    let n = grid.n_points;
    let np1 = (n + 1) as f64;
    let length = 2.0 * grid.half_length;
    let pref = 0.5 * (PI / length).powi(2);
    let inv_sin2 = |arg: f64| {
        let s = arg.sin();
        1.0 / (s * s)
    };
    DMatrix::from_fn(n, n, |r, c| {
        let i = (r + 1) as f64;
        let j = (c + 1) as f64;
        if r == c {
            pref * ((2.0 * np1 * np1 + 1.0) / 3.0 - inv_sin2(PI * i / np1))
        } else {
            let sign = if (r + c) % 2 == 0 { 1.0 } else { -1.0 };
            pref * sign
                * (inv_sin2(PI * (i - j) / (2.0 * np1)) - inv_sin2(PI * (i + j) / (2.0 * np1)))
        }
    })
}

/// Single-particle Hamiltonian `-d²/dx² + V0 sin²(x)` in recoil units.
pub fn sp_hamiltonian(grid: &Grid, v0: f64) -> Result<SpMatrix> {
    if !(v0 >= 0.0) || !v0.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "lattice depth must be finite and nonnegative, got {v0}"
        )));
    }
    let mut h = kinetic_matrix(grid);
    for (a, &x) in grid.points.iter().enumerate() {
        h[(a, a)] += v0 * x.sin().powi(2);
    }
    // The closed form is symmetric analytically; remove rounding asymmetry.
    let n = h.nrows();
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (h[(i, j)] + h[(j, i)]);
            h[(i, j)] = avg;
            h[(j, i)] = avg;
        }
    }
    Ok(SpMatrix(h))
}

/// Lattice potential values `V0 sin²(x_α)` at the nodes.
pub fn lattice_potential(grid: &Grid, v0: f64) -> Vec<f64> {
    grid.points.iter().map(|x| v0 * x.sin().powi(2)).collect()
}

/// Olshanii effective 1D coupling
/// `2 a0 / a⊥² · (1 - |ζ(1/2)| a0 / (√2 a⊥))⁻¹`.
///
/// Lengths are in units of `1/k` and the prefactor assumes `ħ = M = 1`; in
/// recoil units (`ħ = 2M = 1`) the physical coupling is twice the returned
/// value. The rest of the crate takes `g` as a direct input, so this helper
/// only fixes the resonance structure.
pub fn effective_interaction_1d(a0: f64, a_perp: f64) -> Result<f64> {
    if !(a_perp > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "transverse length must be positive, got {a_perp}"
        )));
    }
    let denominator = 1.0 - ZETA_HALF_ABS * a0 / (std::f64::consts::SQRT_2 * a_perp);
    if denominator.abs() < 1e-12 {
        return Err(Error::Resonance { denominator });
    }
    Ok(2.0 * a0 / (a_perp * a_perp) / denominator)
}

/// Orthonormal discrete sine transform (DST-I) on the grid nodes.
///
/// Maps DVR coefficients onto box eigenmodes `sin(j x)` and back; the matrix
/// is symmetric and involutory.
pub struct SineTransform {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    buffer: Vec<Complex64>,
}

impl std::fmt::Debug for SineTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SineTransform").field("n", &self.n).finish()
    }
}

impl SineTransform {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(2 * (n + 1));
        let scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        SineTransform {
            n,
            fft,
            scratch,
            buffer: vec![Complex64::default(); 2 * (n + 1)],
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// In-place orthonormal DST-I of a complex vector.
    pub fn apply(&mut self, data: &mut [Complex64]) {
        let n = self.n;
        assert_eq!(data.len(), n);
        // Odd extension: [0, x_1..x_n, 0, -x_n..-x_1].
        let buf = &mut self.buffer;
        buf[0] = Complex64::default();
        buf[n + 1] = Complex64::default();
        for (k, &v) in data.iter().enumerate() {
            buf[k + 1] = v;
            buf[2 * n + 1 - k] = -v;
        }
        self.fft.process_with_scratch(buf, &mut self.scratch);
        // FFT of the odd extension at j is -2i Σ x_k sin(π j k/(n+1)).
        let scale = (2.0 / (n + 1) as f64).sqrt() * 0.5;
        for (j, out) in data.iter_mut().enumerate() {
            let z = buf[j + 1];
            *out = Complex64::new(-z.im, z.re) * scale;
        }
    }
}
