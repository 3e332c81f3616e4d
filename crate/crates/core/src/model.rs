//! End-to-end pipeline: lattice → bands → Wannier orbitals → Fock basis →
//! `H(g)`, plus quench runs and parameter scans built on it.

use serde::{Deserialize, Serialize};

use crate::dvr::{build_grid, sp_hamiltonian, Grid, SpMatrix};
use crate::dynamics::{
    evolve_mf, evolve_quench, ground_state, mf_ground_state, EvolutionStats, MfSettings,
    MfTrajectory, Observer, PropagationSettings, QuenchProtocol,
};
use crate::eigen::EigenOptions;
use crate::fock::{basis_dimension, enumerate_basis, lattice_orbitals, parity_map, FockBasis, SignedPermutation, MAX_DIMENSION};
use crate::mbham::{assemble, one_body_elements, two_body_elements, HamiltonianPair, OneBodyTensor, TwoBodyTensor};
use crate::observables::{
    excitation_fraction, excitation_fraction_after, fidelity_spectrum, fidelity_variance_k,
    mean_fidelity, FidelityRecorder, FidelitySeries, PopulationRecorder, PopulationSeries,
    SpectrumSeries, Target, Window,
};
use crate::spbands::{build_wannier_bands, group_bands, solve_sp, BandPartition, SpSpectrum, WannierSet};
use crate::{Error, Execution, Result, C64};

/// Physical and numerical parameters of one lattice system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeConfig {
    pub m_wells: usize,
    /// Grid nodes; `None` picks `100 m - 1` (odd, so a node sits at `x = 0`).
    pub n_points: Option<usize>,
    pub v0: f64,
    /// Number of bands kept per site.
    pub bands: usize,
    pub n_particles: usize,
}

impl LatticeConfig {
    pub fn new(m_wells: usize, v0: f64, bands: usize, n_particles: usize) -> Self {
        LatticeConfig {
            m_wells,
            n_points: None,
            v0,
            bands,
            n_particles,
        }
    }

    pub fn triple_well(v0: f64, bands: usize) -> Self {
        LatticeConfig::new(3, v0, bands, 3)
    }

    pub fn five_well(v0: f64, bands: usize) -> Self {
        LatticeConfig::new(5, v0, bands, 5)
    }

    pub fn resolved_points(&self) -> usize {
        self.n_points.unwrap_or(100 * self.m_wells.max(1) - 1)
    }

    pub fn with_v0(&self, v0: f64) -> Self {
        LatticeConfig { v0, ..self.clone() }
    }
}

/// Everything derived from a [`LatticeConfig`].
#[derive(Debug, Clone)]
pub struct LatticeModel {
    pub config: LatticeConfig,
    pub grid: Grid,
    pub h_sp: SpMatrix,
    pub spectrum: SpSpectrum,
    pub partition: BandPartition,
    pub wannier: WannierSet,
    pub one_body: OneBodyTensor,
    pub two_body: TwoBodyTensor,
    pub basis: FockBasis,
    pub parity: SignedPermutation,
    pub hamiltonian: HamiltonianPair,
    /// Used for every ground-state solve.
    pub eigen: EigenOptions,
}

impl LatticeModel {
    pub fn build(config: &LatticeConfig, exec: Execution) -> Result<Self> {
        if config.bands == 0 || config.n_particles == 0 {
            return Err(Error::InvalidParameter(
                "need at least one band and one particle".into(),
            ));
        }
        let n_orb = config.bands * config.m_wells;
        let dimension = basis_dimension(config.n_particles, n_orb);
        if dimension > MAX_DIMENSION {
            return Err(Error::DimensionOverflow {
                dimension,
                limit: MAX_DIMENSION,
            });
        }
        let grid = build_grid(config.m_wells, config.resolved_points())?;
        let h_sp = sp_hamiltonian(&grid, config.v0)?;
        // One extra band so the highest kept band has a gap above it.
        let spectrum = solve_sp(&h_sp, (config.bands + 1) * config.m_wells)?;
        let partition = group_bands(&spectrum, config.m_wells)?;
        let wannier = build_wannier_bands(&spectrum, &partition, config.bands, &grid)?;
        let one_body = one_body_elements(&wannier, &h_sp);
        let two_body = two_body_elements(&wannier, &grid);
        let orbitals = lattice_orbitals(config.bands, config.m_wells);
        let basis = enumerate_basis(config.n_particles, &orbitals, config.m_wells)?;
        let parity = parity_map(&basis, &wannier)?;
        let hamiltonian = assemble(&basis, &one_body, &two_body, exec);
        Ok(LatticeModel {
            config: config.clone(),
            grid,
            h_sp,
            spectrum,
            partition,
            wannier,
            one_body,
            two_body,
            basis,
            parity,
            hamiltonian,
            eigen: EigenOptions::default(),
        })
    }

    pub fn with_eigen_options(mut self, eigen: EigenOptions) -> Self {
        self.eigen = eigen;
        self
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// Even-parity ground state of `H(g)`.
    pub fn ground_state(&self, g: f64) -> Result<Vec<C64>> {
        ground_state(&self.hamiltonian, g, Some(&self.parity), &self.eigen)
    }

    /// Runs one quench from the ground state at `g_i`.
    pub fn run_quench(
        &self,
        protocol: &QuenchProtocol,
        settings: &PropagationSettings,
        targets: &[Target],
    ) -> Result<QuenchOutcome> {
        let psi0 = self.ground_state(protocol.g_i)?;
        self.run_quench_from(&psi0, protocol, settings, targets)
    }

    /// Runs one quench from a given initial state.
    pub fn run_quench_from(
        &self,
        psi0: &[C64],
        protocol: &QuenchProtocol,
        settings: &PropagationSettings,
        targets: &[Target],
    ) -> Result<QuenchOutcome> {
        let mut recorder = QuenchRecorder::new(self, psi0, protocol.g_f, targets)?;
        let stats = evolve_quench(&self.hamiltonian, protocol, psi0, settings, &mut recorder)?;
        recorder.finish(protocol, self.config.v0, stats)
    }

    /// Summaries of quenches over several ramp times; the initial state is
    /// shared.
    pub fn scan_tau(
        &self,
        g_i: f64,
        g_f: f64,
        taus: &[f64],
        total_time: f64,
        settings: &PropagationSettings,
        exec: Execution,
    ) -> Result<Vec<QuenchSummary>> {
        let psi0 = self.ground_state(g_i)?;
        exec.map(taus, |&tau| {
            let p = QuenchProtocol::new(g_i, g_f, tau).with_total_time(total_time);
            self.run_quench_from(&psi0, &p, settings, &[])
                .map(|o| o.summary)
        })
        .into_iter()
        .collect()
    }

    /// Summaries over final couplings at fixed ramp time.
    pub fn scan_gf(
        &self,
        g_i: f64,
        g_fs: &[f64],
        tau: f64,
        total_time: f64,
        settings: &PropagationSettings,
        exec: Execution,
    ) -> Result<Vec<QuenchSummary>> {
        let psi0 = self.ground_state(g_i)?;
        exec.map(g_fs, |&g_f| {
            let p = QuenchProtocol::new(g_i, g_f, tau).with_total_time(total_time);
            self.run_quench_from(&psi0, &p, settings, &[])
                .map(|o| o.summary)
        })
        .into_iter()
        .collect()
    }
}

/// Summaries over lattice depths; each depth builds its own model.
pub fn scan_v0(
    config: &LatticeConfig,
    v0s: &[f64],
    protocol: &QuenchProtocol,
    settings: &PropagationSettings,
    eigen: &EigenOptions,
    exec: Execution,
) -> Result<Vec<QuenchSummary>> {
    exec.map(v0s, |&v0| {
        let model = LatticeModel::build(&config.with_v0(v0), Execution::Sequential)?
            .with_eigen_options(eigen.clone());
        model.run_quench(protocol, settings, &[]).map(|o| o.summary)
    })
    .into_iter()
    .collect()
}

/// Scalar results of one quench.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuenchSummary {
    pub tau: f64,
    #[serde(rename = "V0")]
    pub v0: f64,
    pub g_i: f64,
    pub g_f: f64,
    #[serde(rename = "F_mean")]
    pub f_mean: f64,
    /// `None` when the mean fidelity vanishes.
    #[serde(rename = "K")]
    pub k: Option<f64>,
    #[serde(rename = "P_exc")]
    pub p_exc: f64,
    /// Excited fraction averaged over `[τ, T]` only.
    #[serde(rename = "P_exc_post")]
    pub p_exc_post: f64,
}

/// Full record of one quench.
#[derive(Debug, Clone)]
pub struct QuenchOutcome {
    pub summary: QuenchSummary,
    pub fidelity: FidelitySeries,
    pub populations: PopulationSeries,
    /// `⟨H(g_f)⟩` at each sample.
    pub energy: Vec<f64>,
    pub stats: EvolutionStats,
}

impl QuenchOutcome {
    pub fn spectrum(&self, window: Window) -> Result<SpectrumSeries> {
        fidelity_spectrum(
            &self.fidelity,
            self.summary.tau,
            *self.fidelity.times.last().unwrap_or(&0.0),
            window,
        )
    }
}

/// Streams fidelity, class and target populations, and energy.
pub struct QuenchRecorder<'a> {
    hamiltonian: &'a HamiltonianPair,
    g_f: f64,
    fidelity: FidelityRecorder,
    populations: PopulationRecorder,
    energy: Vec<f64>,
}

impl<'a> QuenchRecorder<'a> {
    /// Always records the six classes, followed by `targets`.
    pub fn new(model: &'a LatticeModel, psi0: &[C64], g_f: f64, targets: &[Target]) -> Result<Self> {
        let mut all: Vec<Target> = crate::fock::ClassLabel::ALL
            .into_iter()
            .map(Target::Class)
            .collect();
        all.extend(targets.iter().cloned());
        Ok(QuenchRecorder {
            hamiltonian: &model.hamiltonian,
            g_f,
            fidelity: FidelityRecorder::new(psi0),
            populations: PopulationRecorder::new(&model.basis, &all)?,
            energy: Vec::new(),
        })
    }

    pub fn finish(self, protocol: &QuenchProtocol, v0: f64, stats: EvolutionStats) -> Result<QuenchOutcome> {
        let f = self.fidelity.series;
        let pops = self.populations.series;
        let total = protocol.total_time;
        let f_mean = mean_fidelity(&f, protocol.tau, total)?;
        let k = match fidelity_variance_k(&f, protocol.tau, total) {
            Ok(k) => Some(k),
            Err(Error::DegenerateMean(_)) => None,
            Err(e) => return Err(e),
        };
        let p_exc = excitation_fraction(&pops.times, &pops.p0, total)?;
        let p_exc_post = excitation_fraction_after(&pops.times, &pops.p0, protocol.tau, total)?;
        Ok(QuenchOutcome {
            summary: QuenchSummary {
                tau: protocol.tau,
                v0,
                g_i: protocol.g_i,
                g_f: protocol.g_f,
                f_mean,
                k,
                p_exc,
                p_exc_post,
            },
            fidelity: f,
            populations: pops,
            energy: self.energy,
            stats,
        })
    }
}

impl Observer for QuenchRecorder<'_> {
    fn observe(&mut self, t: f64, g: f64, psi: &[C64]) -> Result<()> {
        self.fidelity.observe(t, g, psi)?;
        self.populations.observe(t, g, psi)?;
        self.energy.push(self.hamiltonian.expectation(self.g_f, psi));
        Ok(())
    }
}

/// Result of a mean-field quench.
#[derive(Debug, Clone)]
pub struct MfOutcome {
    pub summary: QuenchSummary,
    pub fidelity: FidelitySeries,
    /// `1 - w0(t)^N`.
    pub excited: Vec<f64>,
}

impl MfOutcome {
    pub fn spectrum(&self, window: Window) -> Result<SpectrumSeries> {
        fidelity_spectrum(
            &self.fidelity,
            self.summary.tau,
            *self.fidelity.times.last().unwrap_or(&0.0),
            window,
        )
    }
}

/// Mean-field counterpart of [`LatticeModel::run_quench`].
pub fn run_mf_quench(
    config: &LatticeConfig,
    protocol: &QuenchProtocol,
    settings: &MfSettings,
) -> Result<MfOutcome> {
    let grid = build_grid(config.m_wells, config.resolved_points())?;
    let start = mf_ground_state(&grid, config.v0, protocol.g_i, config.n_particles, settings)?;
    let mut rec = MfTrajectory::new(&grid, config.v0, &start)?;
    evolve_mf(&grid, config.v0, protocol, &start, settings, &mut rec)?;
    let fidelity = FidelitySeries {
        times: rec.times(),
        values: rec.fidelity(),
    };
    let excited = rec.excited_probability();
    let total = protocol.total_time;
    let f_mean = mean_fidelity(&fidelity, protocol.tau, total)?;
    let k = fidelity_variance_k(&fidelity, protocol.tau, total).ok();
    let p0: Vec<f64> = excited.iter().map(|e| 1.0 - e).collect();
    let p_exc = excitation_fraction(&fidelity.times, &p0, total)?;
    let p_exc_post = excitation_fraction_after(&fidelity.times, &p0, protocol.tau, total)?;
    Ok(MfOutcome {
        summary: QuenchSummary {
            tau: protocol.tau,
            v0: config.v0,
            g_i: protocol.g_i,
            g_f: protocol.g_f,
            f_mean,
            k,
            p_exc,
            p_exc_post,
        },
        fidelity,
        excited,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triple_well_dimensions() {
        let m = LatticeModel::build(&LatticeConfig::triple_well(10.0, 2), Execution::Sequential).unwrap();
        assert_eq!(m.dim(), 56);
        assert_eq!(m.partition.n_bands(), 3);
        assert!(m.parity.squared().is_identity());
    }

    #[test]
    fn overflow_is_caught_before_building() {
        let c = LatticeConfig::new(9, 10.0, 4, 12);
        assert!(matches!(
            LatticeModel::build(&c, Execution::Sequential),
            Err(Error::DimensionOverflow { .. })
        ));
    }

    #[test]
    fn stationary_quench_keeps_unit_fidelity() {
        let m = LatticeModel::build(&LatticeConfig::triple_well(10.0, 2), Execution::Sequential).unwrap();
        let p = QuenchProtocol::new(1.0, 1.0, 0.0).with_total_time(20.0);
        let out = m.run_quench(&p, &PropagationSettings::default(), &[]).unwrap();
        assert!(out.fidelity.values.iter().all(|f| (f - 1.0).abs() < 1e-9));
        assert!((out.summary.f_mean - 1.0).abs() < 1e-9);
        assert!(out.summary.k.unwrap() < 1e-6);
    }
}
