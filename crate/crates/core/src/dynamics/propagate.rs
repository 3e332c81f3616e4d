use crate::eigen::{lowest_eigenpairs, EigenOptions};
use crate::fock::SignedPermutation;
use crate::mbham::HamiltonianPair;
use crate::{Error, Result, C64};

use super::krylov::{KrylovExp, KrylovStats};
use super::protocol::{CouplingSchedule, QuenchProtocol};

/// Normalized ground state of `H0 + g W` with even parity checked.
pub fn ground_state(
    h: &HamiltonianPair,
    g: f64,
    parity: Option<&SignedPermutation>,
    opts: &EigenOptions,
) -> Result<Vec<C64>> {
    let pairs = lowest_eigenpairs(h, g, 1, opts).map_err(|e| e.at_coupling(g))?;
    let v = pairs.vector(0);
    if let Some(p) = parity {
        let pv = p.apply(&v);
        let expectation: f64 = v.iter().zip(&pv).map(|(a, b)| a * b).sum();
        if (expectation - 1.0).abs() > 1e-8 {
            return Err(Error::Eigensolver(format!(
                "ground state at g = {g} has parity expectation {expectation}"
            )));
        }
    }
    Ok(v.into_iter().map(|x| C64::new(x, 0.0)).collect())
}

/// Integrator for segments where the coupling changes linearly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RampScheme {
    /// One exponential per substep at the midpoint coupling (second order).
    Midpoint,
    /// Two exponentials per substep at Gauss-point couplings (fourth order,
    /// commutator free).
    #[default]
    CommutatorFree4,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationSettings {
    /// Substep during ramps; `None` uses `0.005 · min(1, τ)` capped at 0.01.
    pub dt_int: Option<f64>,
    pub krylov: KrylovExp,
    pub scheme: RampScheme,
    /// Abort when `|‖ψ‖² - 1|` exceeds this.
    pub norm_tolerance: f64,
}

impl Default for PropagationSettings {
    fn default() -> Self {
        PropagationSettings {
            dt_int: None,
            krylov: KrylovExp::default(),
            scheme: RampScheme::default(),
            norm_tolerance: 1e-8,
        }
    }
}

impl PropagationSettings {
    pub fn ramp_step(&self, tau: f64) -> f64 {
        self.dt_int
            .unwrap_or_else(|| (0.005 * tau.min(1.0)).min(0.01))
            .max(1e-6)
    }
}

/// Receives every output sample.
pub trait Observer {
    fn observe(&mut self, t: f64, g: f64, psi: &[C64]) -> Result<()>;
}

impl<F> Observer for F
where
    F: FnMut(f64, f64, &[C64]) -> Result<()>,
{
    fn observe(&mut self, t: f64, g: f64, psi: &[C64]) -> Result<()> {
        self(t, g, psi)
    }
}

/// Stored samples of a propagation.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub couplings: Vec<f64>,
    pub states: Vec<Vec<C64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }
}

impl Observer for Trajectory {
    fn observe(&mut self, t: f64, g: f64, psi: &[C64]) -> Result<()> {
        self.times.push(t);
        self.couplings.push(g);
        self.states.push(psi.to_vec());
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EvolutionStats {
    pub krylov: KrylovStats,
    pub samples: usize,
    /// Largest `|‖ψ‖² - 1|` seen at a sample.
    pub max_norm_drift: f64,
}

fn norm_sqr(psi: &[C64]) -> f64 {
    psi.iter().map(|z| z.norm_sqr()).sum()
}

/// Propagates `psi0` under the quench protocol, reporting samples at
/// `k · dt_out`.
pub fn evolve_quench<O: Observer>(
    h: &HamiltonianPair,
    protocol: &QuenchProtocol,
    psi0: &[C64],
    settings: &PropagationSettings,
    observer: &mut O,
) -> Result<EvolutionStats> {
    protocol.validate()?;
    let schedule = protocol.schedule();
    let times = protocol.sample_times();
    let dt_int = settings.ramp_step(protocol.tau);
    evolve_schedule(h, &schedule, &times, psi0, dt_int, settings, observer)
}

/// Propagates `psi0` along an arbitrary piecewise-linear schedule, reporting
/// at `sample_times` (ascending, starting at the schedule start).
pub fn evolve_schedule<O: Observer>(
    h: &HamiltonianPair,
    schedule: &CouplingSchedule,
    sample_times: &[f64],
    psi0: &[C64],
    dt_int: f64,
    settings: &PropagationSettings,
    observer: &mut O,
) -> Result<EvolutionStats> {
    if psi0.len() != h.dim() {
        return Err(Error::BasisMismatch {
            expected: h.dim(),
            found: psi0.len(),
        });
    }
    let n0 = norm_sqr(psi0);
    if (n0 - 1.0).abs() > settings.norm_tolerance {
        return Err(Error::InvalidParameter(format!(
            "initial state is not normalized: ‖ψ‖² = {n0}"
        )));
    }
    if sample_times.is_empty() {
        return Ok(EvolutionStats::default());
    }

    let mut psi = psi0.to_vec();
    let mut stats = EvolutionStats::default();
    let knots: Vec<f64> = schedule.knots().iter().map(|k| k.0).collect();
    let mut t = sample_times[0];
    observer.observe(t, schedule.coupling(t), &psi)?;
    stats.samples += 1;

    for &target in &sample_times[1..] {
        // Segment boundaries: knots strictly inside (t, target).
        let mut cuts: Vec<f64> = knots
            .iter()
            .copied()
            .filter(|&k| k > t + 1e-12 && k < target - 1e-12)
            .collect();
        cuts.push(target);
        for &end in &cuts {
            let (_, slope) = schedule.eval(0.5 * (t + end));
            if slope == 0.0 {
                let g = schedule.coupling(0.5 * (t + end));
                let op = |x: &[C64], y: &mut [C64]| h.apply(g, x, y);
                stats.krylov.merge(settings.krylov.propagate(&op, &mut psi, end - t, t)?);
            } else {
                let n_sub = ((end - t) / dt_int - 1e-9).ceil().max(1.0) as usize;
                let step = (end - t) / n_sub as f64;
                for k in 0..n_sub {
                    let t0 = t + k as f64 * step;
                    let mid = t0 + 0.5 * step;
                    let (g_mid, slope) = schedule.eval(mid);
                    match settings.scheme {
                        RampScheme::Midpoint => {
                            let op = |x: &[C64], y: &mut [C64]| h.apply(g_mid, x, y);
                            stats.krylov.merge(settings.krylov.propagate(&op, &mut psi, step, t0)?);
                        }
                        RampScheme::CommutatorFree4 => {
                            // Gauss-point couplings combine to g_mid ∓ slope·h/3
                            // for a linear ramp; the earlier-weighted one acts first.
                            let shift = slope * step / 3.0;
                            for g in [g_mid - shift, g_mid + shift] {
                                let op = |x: &[C64], y: &mut [C64]| h.apply(g, x, y);
                                stats
                                    .krylov
                                    .merge(settings.krylov.propagate(&op, &mut psi, 0.5 * step, t0)?);
                            }
                        }
                    }
                }
            }
            t = end;
        }
        let drift = (norm_sqr(&psi) - 1.0).abs();
        stats.max_norm_drift = stats.max_norm_drift.max(drift);
        if drift > settings.norm_tolerance {
            return Err(Error::NormDrift { time: t, drift });
        }
        observer.observe(t, schedule.coupling(t), &psi)?;
        stats.samples += 1;
    }
    Ok(stats)
}
