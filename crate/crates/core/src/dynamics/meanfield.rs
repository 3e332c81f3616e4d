//! Single-orbital mean-field reduction: every boson occupies the same orbital
//! `φ`, which obeys `i ∂φ = (T + V + g (N-1) |φ|²) φ`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::dvr::{lattice_potential, sp_hamiltonian, Grid, SineTransform};
use crate::{Error, Result, C64};

use super::protocol::QuenchProtocol;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MfSettings {
    /// Split-step size. Steps much above `1e-3` on the default grids let
    /// a parametric instability of the splitting grow over a few hundred
    /// time units.
    pub dt: f64,
    /// Abort when `|‖φ‖² - 1|` exceeds this.
    pub norm_tolerance: f64,
    /// Self-consistency target on the chemical potential.
    pub scf_tol: f64,
    pub scf_max_iter: usize,
}

impl Default for MfSettings {
    fn default() -> Self {
        MfSettings {
            dt: 0.001,
            norm_tolerance: 1e-6,
            scf_tol: 1e-12,
            scf_max_iter: 5000,
        }
    }
}

/// Mean-field orbital as unit-norm DVR coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct MfState {
    pub phi: Vec<C64>,
    pub n_particles: usize,
    /// Chemical potential of the stationary state it was prepared as.
    pub mu: f64,
}

impl MfState {
    pub fn norm_sqr(&self) -> f64 {
        self.phi.iter().map(|z| z.norm_sqr()).sum()
    }
}

fn lowest_real(h: DMatrix<f64>) -> (f64, Vec<f64>) {
    let eig = SymmetricEigen::new(h);
    let k = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("nonempty matrix");
    let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
    let s: f64 = v.iter().sum();
    if s < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    (eig.eigenvalues[k], v)
}

/// Stationary mean-field ground state at coupling `g`, found by a damped
/// self-consistent field iteration on the nonlinear eigenproblem.
pub fn mf_ground_state(
    grid: &Grid,
    v0: f64,
    g: f64,
    n_particles: usize,
    settings: &MfSettings,
) -> Result<MfState> {
    if n_particles == 0 {
        return Err(Error::InvalidParameter("need at least one particle".into()));
    }
    let h_sp = sp_hamiltonian(grid, v0)?.into_inner();
    let coupling = g * (n_particles as f64 - 1.0) / grid.dx();
    let (mut mu, v) = lowest_real(h_sp.clone());
    let mut density: Vec<f64> = v.iter().map(|x| x * x).collect();
    let mut phi = v;
    if coupling != 0.0 {
        let mut mix: f64 = 0.5;
        let mut converged = false;
        let mut last_change = f64::INFINITY;
        for _ in 0..settings.scf_max_iter {
            let mut h = h_sp.clone();
            for (a, d) in density.iter().enumerate() {
                h[(a, a)] += coupling * d;
            }
            let (new_mu, v) = lowest_real(h);
            let change: f64 = density
                .iter()
                .zip(&v)
                .map(|(d, x)| (d - x * x).abs())
                .sum();
            if change < settings.scf_tol.sqrt() * 1e-2 && (new_mu - mu).abs() < settings.scf_tol {
                mu = new_mu;
                phi = v;
                converged = true;
                break;
            }
            // Back off the mixing when the iteration oscillates.
            if change > last_change {
                mix = (mix * 0.5).max(0.02);
            } else {
                mix = (mix * 1.1).min(0.7);
            }
            last_change = change;
            for (d, x) in density.iter_mut().zip(&v) {
                *d = (1.0 - mix) * *d + mix * x * x;
            }
            mu = new_mu;
            phi = v;
        }
        if !converged {
            return Err(Error::NoConvergence(format!(
                "mean-field ground state at g = {g} did not converge in {} iterations",
                settings.scf_max_iter
            )));
        }
    }
    Ok(MfState {
        phi: phi.into_iter().map(|x| C64::new(x, 0.0)).collect(),
        n_particles,
        mu,
    })
}

/// Receives every output sample of a mean-field run.
pub trait MfObserver {
    fn observe(&mut self, t: f64, g: f64, phi: &[C64]) -> Result<()>;
}

impl<F> MfObserver for F
where
    F: FnMut(f64, f64, &[C64]) -> Result<()>,
{
    fn observe(&mut self, t: f64, g: f64, phi: &[C64]) -> Result<()> {
        self(t, g, phi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MfRecord {
    pub t: f64,
    pub g: f64,
    /// `|⟨φ0|φ(t)⟩|²`.
    pub overlap: f64,
    /// Weight of `φ(t)` in the lowest band.
    pub band0_weight: f64,
    pub norm_sqr: f64,
}

/// Records overlaps with the initial orbital and lowest-band weights.
#[derive(Debug, Clone)]
pub struct MfTrajectory {
    n_particles: usize,
    phi0: Vec<C64>,
    band0: DMatrix<f64>,
    pub records: Vec<MfRecord>,
}

impl MfTrajectory {
    /// Prepares a recorder; the lowest band is spanned by the `m_wells`
    /// lowest single-particle states at depth `v0`.
    pub fn new(grid: &Grid, v0: f64, phi0: &MfState) -> Result<Self> {
        let h = sp_hamiltonian(grid, v0)?.into_inner();
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let m = grid.m_wells();
        let band0 = DMatrix::from_fn(grid.n_points(), m, |r, c| eig.eigenvectors[(r, order[c])]);
        Ok(MfTrajectory {
            n_particles: phi0.n_particles,
            phi0: phi0.phi.clone(),
            band0,
            records: Vec::new(),
        })
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    /// Many-body fidelity of the product state, `|⟨φ0|φ⟩|^{2N}`.
    pub fn fidelity(&self) -> Vec<f64> {
        let n = self.n_particles as i32;
        self.records.iter().map(|r| r.overlap.powi(n)).collect()
    }

    /// Probability that at least one boson is outside the lowest band,
    /// `1 - w0^N`.
    pub fn excited_probability(&self) -> Vec<f64> {
        let n = self.n_particles as i32;
        self.records
            .iter()
            .map(|r| 1.0 - r.band0_weight.min(1.0).powi(n))
            .collect()
    }

    fn band0_weight(&self, phi: &[C64]) -> f64 {
        (0..self.band0.ncols())
            .map(|c| {
                let col = self.band0.column(c);
                let z: C64 = col.iter().zip(phi).map(|(u, p)| p * *u).sum();
                z.norm_sqr()
            })
            .sum()
    }
}

impl MfObserver for MfTrajectory {
    fn observe(&mut self, t: f64, g: f64, phi: &[C64]) -> Result<()> {
        let z: C64 = self.phi0.iter().zip(phi).map(|(a, b)| a.conj() * b).sum();
        let record = MfRecord {
            t,
            g,
            overlap: z.norm_sqr(),
            band0_weight: self.band0_weight(phi),
            norm_sqr: phi.iter().map(|z| z.norm_sqr()).sum(),
        };
        self.records.push(record);
        Ok(())
    }
}

/// Strang-split propagator; the kinetic part is diagonal in the sine basis.
struct SplitStep {
    dst: SineTransform,
    k2: Vec<f64>,
    potential: Vec<f64>,
    coupling_scale: f64,
}

impl SplitStep {
    fn new(grid: &Grid, v0: f64, n_particles: usize) -> Self {
        let n = grid.n_points();
        SplitStep {
            dst: SineTransform::new(n),
            k2: (1..=n).map(|j| grid.box_wavenumber(j).powi(2)).collect(),
            potential: lattice_potential(grid, v0),
            coupling_scale: (n_particles as f64 - 1.0) / grid.dx(),
        }
    }

    fn kinetic(&mut self, phi: &mut [C64], dt: f64) {
        self.dst.apply(phi);
        for (z, k2) in phi.iter_mut().zip(&self.k2) {
            *z *= C64::from_polar(1.0, -k2 * dt);
        }
        self.dst.apply(phi);
    }

    fn step(&mut self, phi: &mut [C64], g: f64, dt: f64) {
        self.kinetic(phi, 0.5 * dt);
        let c = g * self.coupling_scale;
        for (z, v) in phi.iter_mut().zip(&self.potential) {
            let phase = -(v + c * z.norm_sqr()) * dt;
            *z *= C64::from_polar(1.0, phase);
        }
        self.kinetic(phi, 0.5 * dt);
    }
}

/// Runs the mean-field quench from `start` (usually the ground state at
/// `g_i`), sampling every `dt_out`. Returns the final orbital.
pub fn evolve_mf<O: MfObserver>(
    grid: &Grid,
    v0: f64,
    protocol: &QuenchProtocol,
    start: &MfState,
    settings: &MfSettings,
    observer: &mut O,
) -> Result<MfState> {
    protocol.validate()?;
    if start.phi.len() != grid.n_points() {
        return Err(Error::BasisMismatch {
            expected: grid.n_points(),
            found: start.phi.len(),
        });
    }
    if !(settings.dt > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "split-step size must be positive, got {}",
            settings.dt
        )));
    }
    let mut split = SplitStep::new(grid, v0, start.n_particles);
    let schedule = protocol.schedule();
    let times = protocol.sample_times();
    let mut phi = start.phi.clone();
    let mut t = times[0];
    observer.observe(t, schedule.coupling(t), &phi)?;
    for &target in &times[1..] {
        let mut cuts: Vec<f64> = schedule
            .knots()
            .iter()
            .map(|k| k.0)
            .filter(|&k| k > t + 1e-12 && k < target - 1e-12)
            .collect();
        cuts.push(target);
        for &end in &cuts {
            let n_sub = ((end - t) / settings.dt - 1e-9).ceil().max(1.0) as usize;
            let h = (end - t) / n_sub as f64;
            for k in 0..n_sub {
                let g = schedule.coupling(t + (k as f64 + 0.5) * h);
                split.step(&mut phi, g, h);
            }
            t = end;
        }
        let drift = (phi.iter().map(|z| z.norm_sqr()).sum::<f64>() - 1.0).abs();
        if drift > settings.norm_tolerance {
            return Err(Error::NormDrift { time: t, drift });
        }
        observer.observe(t, schedule.coupling(t), &phi)?;
    }
    Ok(MfState {
        phi,
        n_particles: start.n_particles,
        mu: f64::NAN,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dvr::build_grid;
    use crate::dynamics::KrylovExp;

    #[test]
    fn box_orbital_is_stationary_without_interaction() {
        let grid = build_grid(3, 191).unwrap();
        let start = mf_ground_state(&grid, 0.0, 0.0, 3, &MfSettings::default()).unwrap();
        let protocol = QuenchProtocol::new(0.0, 0.0, 0.0).with_total_time(20.0);
        let mut rec = MfTrajectory::new(&grid, 0.0, &start).unwrap();
        evolve_mf(&grid, 0.0, &protocol, &start, &MfSettings::default(), &mut rec).unwrap();
        for r in &rec.records {
            assert!((r.overlap.sqrt() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn ground_state_is_self_consistent() {
        let grid = build_grid(3, 191).unwrap();
        let s = mf_ground_state(&grid, 10.0, 2.0, 3, &MfSettings::default()).unwrap();
        assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
        // H[φ] φ = μ φ.
        let mut h = sp_hamiltonian(&grid, 10.0).unwrap().into_inner();
        for (a, z) in s.phi.iter().enumerate() {
            h[(a, a)] += 2.0 * 2.0 * z.norm_sqr() / grid.dx();
        }
        let phi: Vec<f64> = s.phi.iter().map(|z| z.re).collect();
        let hphi = &h * nalgebra::DVector::from_vec(phi.clone());
        let res: f64 = hphi
            .iter()
            .zip(&phi)
            .map(|(a, b)| (a - s.mu * b).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(res < 1e-6, "residual {res}");
        // Repulsion spreads the density: more weight outside the central well.
        let free = mf_ground_state(&grid, 10.0, 0.0, 3, &MfSettings::default()).unwrap();
        let center = grid.n_points() / 2;
        assert!(s.phi[center].norm() < free.phi[center].norm());
    }

    #[test]
    fn linear_limit_matches_krylov() {
        let grid = build_grid(3, 127).unwrap();
        // Start from the shallow-lattice ground state and evolve in a deeper one.
        let start = mf_ground_state(&grid, 4.0, 0.0, 3, &MfSettings::default()).unwrap();
        let protocol = QuenchProtocol::new(0.0, 0.0, 0.0)
            .with_total_time(1.0)
            .with_dt_out(1.0);
        let settings = MfSettings {
            dt: 2e-4,
            ..MfSettings::default()
        };
        let mut sink = |_: f64, _: f64, _: &[C64]| Ok(());
        let end = evolve_mf(&grid, 10.0, &protocol, &start, &settings, &mut sink).unwrap();

        let h = sp_hamiltonian(&grid, 10.0).unwrap().into_inner();
        let op = |x: &[C64], y: &mut [C64]| {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi = h.row(i).iter().zip(x).map(|(a, b)| b * *a).sum();
            }
        };
        let mut psi = start.phi.clone();
        KrylovExp::default().propagate(&op, &mut psi, 1.0, 0.0).unwrap();
        let err = end
            .phi
            .iter()
            .zip(&psi)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-7, "max deviation {err}");
    }

    #[test]
    fn norm_is_conserved_under_quench() {
        let grid = build_grid(3, 191).unwrap();
        let start = mf_ground_state(&grid, 10.0, 0.0, 3, &MfSettings::default()).unwrap();
        let protocol = QuenchProtocol::new(0.0, 2.0, 1.0).with_total_time(10.0);
        let mut rec = MfTrajectory::new(&grid, 10.0, &start).unwrap();
        evolve_mf(&grid, 10.0, &protocol, &start, &MfSettings::default(), &mut rec).unwrap();
        for r in &rec.records {
            assert!((r.norm_sqr - 1.0).abs() < 1e-9);
            assert!(r.band0_weight <= 1.0 + 1e-12);
        }
        let f = rec.fidelity();
        assert!((f[0] - 1.0).abs() < 1e-12);
        assert!(f.iter().all(|&x| (0.0..=1.0 + 1e-12).contains(&x)));
    }
}
