//! Single-particle bands and Wannier orbitals.
//!
//! Wannier orbitals of a band are the eigenvectors of the position operator
//! projected onto that band's eigenstates. For a finite open chain this
//! gives a unique, real, maximally localized set whose position eigenvalues
//! are the orbital centers.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dvr::{Grid, SpMatrix};
use crate::{Error, Result};

/// Relative splitting below which two Wannier centers count as degenerate.
pub const CENTER_DEGENERACY_TOL: f64 = 1e-8;

/// Reflection parity `x -> -x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn sign(self) -> f64 {
        match self {
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
        }
    }

    pub fn from_sign(s: f64) -> Self {
        if s >= 0.0 {
            Parity::Even
        } else {
            Parity::Odd
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Parity::Even => "even",
            Parity::Odd => "odd",
        }
    }
}

/// Lowest single-particle eigenpairs on the grid.
#[derive(Debug, Clone)]
pub struct SpSpectrum {
    pub eigenvalues: Vec<f64>,
    /// Orthonormal columns over grid nodes.
    pub eigenvectors: DMatrix<f64>,
    pub parity: Vec<Parity>,
}

impl SpSpectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// `max |VᵀV - I|`.
    pub fn orthonormality_error(&self) -> f64 {
        let v = &self.eigenvectors;
        let gram = v.transpose() * v;
        (gram - DMatrix::identity(v.ncols(), v.ncols())).amax()
    }
}

/// Reflection overlap `Σ_α v_α v_{mirror(α)}`.
fn reflection_overlap(v: &[f64]) -> f64 {
    let n = v.len();
    (0..n).map(|a| v[a] * v[n - 1 - a]).sum()
}

/// Lowest `n_states` eigenpairs of the single-particle Hamiltonian.
pub fn solve_sp(h: &SpMatrix, n_states: usize) -> Result<SpSpectrum> {
    let n = h.dim();
    if n_states == 0 || n_states > n {
        return Err(Error::InvalidParameter(format!(
            "n_states = {n_states} must lie in 1..={n}"
        )));
    }
    let eig = SymmetricEigen::try_new(h.matrix().clone(), 1e-15, 0).ok_or_else(|| {
        Error::Eigensolver("dense symmetric eigensolver did not converge".into())
    })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    if eig.eigenvalues.iter().any(|e| !e.is_finite()) {
        return Err(Error::Eigensolver("non-finite eigenvalue".into()));
    }
    let mut eigenvalues = Vec::with_capacity(n_states);
    let mut eigenvectors = DMatrix::zeros(n, n_states);
    let mut parity = Vec::with_capacity(n_states);
    for (k, &idx) in order.iter().take(n_states).enumerate() {
        eigenvalues.push(eig.eigenvalues[idx]);
        let mut col: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        // Deterministic sign: largest-magnitude component positive.
        let pivot = col
            .iter()
            .copied()
            .fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            col.iter_mut().for_each(|x| *x = -*x);
        }
        parity.push(Parity::from_sign(reflection_overlap(&col)));
        eigenvectors.set_column(k, &DVector::from_vec(col));
    }
    Ok(SpSpectrum {
        eigenvalues,
        eigenvectors,
        parity,
    })
}

/// Consecutive blocks of `m_wells` eigenstates, one block per band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandPartition {
    pub m_wells: usize,
    /// Mean energy of each band.
    pub centers: Vec<f64>,
    /// Intra-block spread `E_last - E_first`.
    pub bandwidths: Vec<f64>,
    /// Distance to the next block; `gaps[b]` separates band `b` from `b + 1`.
    pub gaps: Vec<f64>,
}

impl BandPartition {
    pub fn n_bands(&self) -> usize {
        self.bandwidths.len()
    }

    /// Eigenstate indices belonging to `band`.
    pub fn states(&self, band: usize) -> std::ops::Range<usize> {
        band * self.m_wells..(band + 1) * self.m_wells
    }
}

/// Splits the spectrum into bands of `m_wells` states and checks that the
/// lowest band is narrower than the gap above it.
///
/// Higher bands of shallow lattices lie above the barrier tops and are
/// routinely wider than their gaps; they are recorded but not rejected,
/// since the position-operator rotation only needs distinct centers.
pub fn group_bands(spec: &SpSpectrum, m_wells: usize) -> Result<BandPartition> {
    partition_bands(spec, m_wells, true)
}

/// Like [`group_bands`] but records the partition even when a band overlaps
/// its neighbour.
pub fn group_bands_unchecked(spec: &SpSpectrum, m_wells: usize) -> Result<BandPartition> {
    partition_bands(spec, m_wells, false)
}

fn partition_bands(spec: &SpSpectrum, m_wells: usize, check: bool) -> Result<BandPartition> {
    if m_wells == 0 || spec.len() % m_wells != 0 || spec.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "{} states do not split into blocks of {m_wells}",
            spec.len()
        )));
    }
    let e = &spec.eigenvalues;
    let n_bands = e.len() / m_wells;
    let mut centers = Vec::with_capacity(n_bands);
    let mut bandwidths = Vec::with_capacity(n_bands);
    let mut gaps = Vec::with_capacity(n_bands.saturating_sub(1));
    for b in 0..n_bands {
        let block = &e[b * m_wells..(b + 1) * m_wells];
        centers.push(block.iter().sum::<f64>() / m_wells as f64);
        let width = block[m_wells - 1] - block[0];
        bandwidths.push(width);
        if b + 1 < n_bands {
            let gap = e[(b + 1) * m_wells] - block[m_wells - 1];
            if check && b == 0 && width >= gap {
                return Err(Error::ShallowLattice {
                    band: b,
                    bandwidth: width,
                    gap,
                });
            }
            gaps.push(gap);
        }
    }
    Ok(BandPartition {
        m_wells,
        centers,
        bandwidths,
        gaps,
    })
}

/// One localized orbital `(band, site)`.
#[derive(Debug, Clone)]
pub struct WannierOrbital {
    pub band: usize,
    /// Site index `0..m_wells`, left to right.
    pub site: usize,
    /// Position expectation value.
    pub center: f64,
    /// `w_{b,s}(-x) = parity_phase · w_{b,mirror(s)}(x)`.
    pub parity_phase: f64,
    /// DVR coefficients, unit Euclidean norm.
    pub coeffs: DVector<f64>,
}

/// Wannier orbitals for a set of bands, ordered band-major then by site.
#[derive(Debug, Clone)]
pub struct WannierSet {
    pub m_wells: usize,
    pub orbitals: Vec<WannierOrbital>,
}

impl WannierSet {
    pub fn len(&self) -> usize {
        self.orbitals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.orbitals.is_empty()
    }

    pub fn bands(&self) -> Vec<usize> {
        let mut b: Vec<usize> = self.orbitals.iter().map(|o| o.band).collect();
        b.dedup();
        b
    }

    /// Orbitals as columns of a matrix over grid nodes.
    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.orbitals.first().map_or(0, |o| o.coeffs.len());
        let mut m = DMatrix::zeros(n, self.len());
        for (k, o) in self.orbitals.iter().enumerate() {
            m.set_column(k, &o.coeffs);
        }
        m
    }

    /// `max |WᵀW - I|` across all orbitals.
    pub fn orthonormality_error(&self) -> f64 {
        let w = self.matrix();
        (w.transpose() * &w - DMatrix::identity(self.len(), self.len())).amax()
    }

    /// Merges single-band sets into one, keeping band-major order.
    pub fn concat(sets: Vec<WannierSet>) -> Result<WannierSet> {
        let m_wells = sets.first().map_or(0, |s| s.m_wells);
        if sets.iter().any(|s| s.m_wells != m_wells) {
            return Err(Error::InvalidParameter("mixed lattice sizes".into()));
        }
        let mut orbitals: Vec<WannierOrbital> = sets.into_iter().flat_map(|s| s.orbitals).collect();
        orbitals.sort_by_key(|o| (o.band, o.site));
        Ok(WannierSet { m_wells, orbitals })
    }

    /// Writes `x, w_{b,s}(x)...` as CSV with continuum normalization.
    pub fn write_csv<W: Write>(&self, grid: &Grid, mut out: W) -> std::io::Result<()> {
        write!(out, "x")?;
        for o in &self.orbitals {
            write!(out, ",w_b{}_s{}", o.band, o.site + 1)?;
        }
        writeln!(out)?;
        let scale = 1.0 / grid.dx().sqrt();
        for (a, x) in grid.points().iter().enumerate() {
            write!(out, "{x:.12e}")?;
            for o in &self.orbitals {
                write!(out, ",{:.12e}", o.coeffs[a] * scale)?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Builds the Wannier orbitals of one band by diagonalizing the projected
/// position operator.
///
/// Signs are fixed so even-numbered bands are positive at their center node
/// and odd-numbered bands are positive on the lobe right of their center.
pub fn build_wannier(
    spec: &SpSpectrum,
    partition: &BandPartition,
    band: usize,
    grid: &Grid,
) -> Result<WannierSet> {
    if band >= partition.n_bands() {
        return Err(Error::InvalidParameter(format!(
            "band {band} not present ({} bands resolved)",
            partition.n_bands()
        )));
    }
    let m = partition.m_wells;
    let range = partition.states(band);
    let u = spec.eigenvectors.columns(range.start, m).into_owned();
    let x = DVector::from_column_slice(grid.points());
    let xu = DMatrix::from_fn(u.nrows(), m, |a, j| x[a] * u[(a, j)]);
    let mut proj = u.transpose() * xu;
    proj = 0.5 * (&proj + proj.transpose());
    let eig = SymmetricEigen::new(proj);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let scale = grid.half_length().max(1.0);
    for w in order.windows(2) {
        let split = eig.eigenvalues[w[1]] - eig.eigenvalues[w[0]];
        if split < CENTER_DEGENERACY_TOL * scale {
            return Err(Error::DegenerateCenters {
                band,
                splitting: split,
            });
        }
    }

    let right_lobe = |coeffs: &DVector<f64>, center: f64| -> f64 {
        grid.points()
            .iter()
            .zip(coeffs.iter())
            .filter(|(&xa, _)| xa > center && xa < center + std::f64::consts::FRAC_PI_2)
            .map(|(_, &c)| c)
            .sum()
    };

    let mut orbitals = Vec::with_capacity(m);
    for (site, &k) in order.iter().enumerate() {
        let center = eig.eigenvalues[k];
        let mut coeffs = &u * eig.eigenvectors.column(k);
        let reference = if band % 2 == 0 {
            coeffs[grid.nearest_index(center)]
        } else {
            right_lobe(&coeffs, center)
        };
        if reference < 0.0 {
            coeffs.neg_mut();
        }
        orbitals.push(WannierOrbital {
            band,
            site,
            center,
            parity_phase: 1.0,
            coeffs,
        });
    }

    // Parity phases from the mirror overlaps.
    let n = grid.n_points();
    for s in 0..m {
        let mirror = m - 1 - s;
        let overlap: f64 = (0..n)
            .map(|a| orbitals[s].coeffs[grid.mirror_index(a)] * orbitals[mirror].coeffs[a])
            .sum();
        orbitals[s].parity_phase = if overlap >= 0.0 { 1.0 } else { -1.0 };
    }

    Ok(WannierSet {
        m_wells: m,
        orbitals,
    })
}

/// Wannier orbitals for bands `0..n_bands`.
pub fn build_wannier_bands(
    spec: &SpSpectrum,
    partition: &BandPartition,
    n_bands: usize,
    grid: &Grid,
) -> Result<WannierSet> {
    let sets = (0..n_bands)
        .map(|b| build_wannier(spec, partition, b, grid))
        .collect::<Result<Vec<_>>>()?;
    WannierSet::concat(sets)
}
