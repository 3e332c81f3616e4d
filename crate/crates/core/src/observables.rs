//! Fidelity, its window statistics and spectrum, number-state and class
//! populations, and the excited-band fraction.

use std::io::Write;

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Observer, Trajectory};
use crate::fock::{parse_ket, ClassLabel, FockBasis};
use crate::{Error, Result, C64};

/// Minimum number of window samples for a spectrum.
pub const MIN_SPECTRUM_SAMPLES: usize = 64;

const TIME_EPS: f64 = 1e-9;

/// `|⟨a|b⟩|²`.
pub fn overlap_sqr(a: &[C64], b: &[C64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.conj() * y)
        .sum::<C64>()
        .norm_sqr()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FidelitySeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl FidelitySeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,F")?;
        for (t, f) in self.times.iter().zip(&self.values) {
            writeln!(out, "{t},{f}")?;
        }
        Ok(())
    }
}

/// `F(t) = |⟨ψ0|ψ(t)⟩|²` for every stored sample.
pub fn fidelity(traj: &Trajectory, psi0: &[C64]) -> Result<FidelitySeries> {
    if traj.dim() != psi0.len() && !traj.is_empty() {
        return Err(Error::BasisMismatch {
            expected: psi0.len(),
            found: traj.dim(),
        });
    }
    Ok(FidelitySeries {
        times: traj.times.clone(),
        values: traj.states.iter().map(|s| overlap_sqr(psi0, s)).collect(),
    })
}

/// Streaming fidelity observer; keeps only the overlaps.
#[derive(Debug, Clone)]
pub struct FidelityRecorder {
    psi0: Vec<C64>,
    pub series: FidelitySeries,
}

impl FidelityRecorder {
    pub fn new(psi0: &[C64]) -> Self {
        FidelityRecorder {
            psi0: psi0.to_vec(),
            series: FidelitySeries::default(),
        }
    }
}

impl Observer for FidelityRecorder {
    fn observe(&mut self, t: f64, _g: f64, psi: &[C64]) -> Result<()> {
        if psi.len() != self.psi0.len() {
            return Err(Error::BasisMismatch {
                expected: self.psi0.len(),
                found: psi.len(),
            });
        }
        self.series.times.push(t);
        self.series.values.push(overlap_sqr(&self.psi0, psi));
        Ok(())
    }
}

fn lerp(times: &[f64], values: &[f64], t: f64) -> f64 {
    let k = times.partition_point(|&x| x < t);
    if k == 0 {
        return values[0];
    }
    if k == times.len() {
        return values[k - 1];
    }
    let (t0, t1) = (times[k - 1], times[k]);
    let w = (t - t0) / (t1 - t0);
    values[k - 1] * (1.0 - w) + values[k] * w
}

/// Trapezoidal integral of a sampled function over `[start, end]`, with
/// linear interpolation at window edges that fall between samples.
pub fn trapezoid(times: &[f64], values: &[f64], start: f64, end: f64) -> Result<f64> {
    if times.len() != values.len() {
        return Err(Error::InvalidParameter(format!(
            "{} times but {} values",
            times.len(),
            values.len()
        )));
    }
    if !(end > start)
        || times.len() < 2
        || start < times[0] - TIME_EPS
        || end > times[times.len() - 1] + TIME_EPS
    {
        return Err(Error::EmptyWindow { start, end });
    }
    let mut knots = vec![(start, lerp(times, values, start))];
    for (&t, &v) in times.iter().zip(values) {
        if t > start + TIME_EPS && t < end - TIME_EPS {
            knots.push((t, v));
        }
    }
    knots.push((end, lerp(times, values, end)));
    Ok(knots
        .windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
        .sum())
}

/// Time average over `[start, end]`.
pub fn window_mean(times: &[f64], values: &[f64], start: f64, end: f64) -> Result<f64> {
    Ok(trapezoid(times, values, start, end)? / (end - start))
}

/// `F̄ = (T - τ)⁻¹ ∫_τ^T F dt`.
pub fn mean_fidelity(f: &FidelitySeries, tau: f64, total_time: f64) -> Result<f64> {
    window_mean(&f.times, &f.values, tau, total_time)
}

/// Normalized standard deviation `K = σ_F / F̄` over `[τ, T]`.
pub fn fidelity_variance_k(f: &FidelitySeries, tau: f64, total_time: f64) -> Result<f64> {
    let mean = mean_fidelity(f, tau, total_time)?;
    if mean < 1e-12 {
        return Err(Error::DegenerateMean(mean));
    }
    let sq: Vec<f64> = f.values.iter().map(|v| (v - mean).powi(2)).collect();
    let var = window_mean(&f.times, &sq, tau, total_time)?;
    Ok(var.max(0.0).sqrt() / mean)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Window {
    #[default]
    Rectangular,
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub omega: f64,
    pub amplitude: f64,
}

/// One-sided amplitude spectrum, `ω_j = 2π j / (n Δt)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSeries {
    pub omega: Vec<f64>,
    pub amplitude: Vec<f64>,
}

impl SpectrumSeries {
    /// Frequency spacing.
    pub fn resolution(&self) -> f64 {
        if self.omega.len() < 2 {
            0.0
        } else {
            self.omega[1] - self.omega[0]
        }
    }

    /// Local maxima above `min_relative` times the largest nonzero-frequency
    /// amplitude, in ascending frequency.
    pub fn peaks(&self, min_relative: f64) -> Vec<Peak> {
        let a = &self.amplitude;
        if a.len() < 3 {
            return Vec::new();
        }
        let top = a[1..].iter().cloned().fold(0.0, f64::max);
        let mut out = Vec::new();
        for j in 1..a.len() {
            let left = a[j - 1];
            let right = if j + 1 < a.len() { a[j + 1] } else { 0.0 };
            if a[j] > left && a[j] >= right && a[j] >= min_relative * top && a[j] > 0.0 {
                out.push(Peak {
                    omega: self.omega[j],
                    amplitude: a[j],
                });
            }
        }
        out
    }

    /// The `k` strongest peaks, strongest first.
    pub fn dominant_peaks(&self, k: usize) -> Vec<Peak> {
        let mut p = self.peaks(0.0);
        p.sort_by(|a, b| b.amplitude.total_cmp(&a.amplitude));
        p.truncate(k);
        p
    }

    /// Largest amplitude within `[lo, hi]`.
    pub fn max_in(&self, lo: f64, hi: f64) -> Option<Peak> {
        self.omega
            .iter()
            .zip(&self.amplitude)
            .filter(|(w, _)| **w >= lo && **w <= hi)
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(&omega, &amplitude)| Peak { omega, amplitude })
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "omega,amplitude")?;
        for (w, a) in self.omega.iter().zip(&self.amplitude) {
            writeln!(out, "{w},{a}")?;
        }
        Ok(())
    }
}

/// Spectrum of `values - mean` over samples with `t ∈ [start, end)`, where
/// `mean` is the trapezoidal window average. Requires uniform sampling.
pub fn signal_spectrum(
    times: &[f64],
    values: &[f64],
    start: f64,
    end: f64,
    window: Window,
) -> Result<SpectrumSeries> {
    let mean = window_mean(times, values, start, end)?;
    let idx: Vec<usize> = (0..times.len())
        .filter(|&i| times[i] >= start - TIME_EPS && times[i] < end - TIME_EPS)
        .collect();
    let n = idx.len();
    if n < MIN_SPECTRUM_SAMPLES {
        return Err(Error::TooFewSamples {
            found: n,
            required: MIN_SPECTRUM_SAMPLES,
        });
    }
    let dt = times[idx[1]] - times[idx[0]];
    for w in idx.windows(2) {
        if w[1] != w[0] + 1 || ((times[w[1]] - times[w[0]]) - dt).abs() > 1e-6 * dt {
            return Err(Error::InvalidParameter(
                "spectrum requires uniformly spaced samples".into(),
            ));
        }
    }
    let weights: Vec<f64> = match window {
        Window::Rectangular => vec![1.0; n],
        Window::Hann => (0..n)
            .map(|k| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos()))
            .collect(),
    };
    let norm: f64 = weights.iter().sum();
    let mut buf: Vec<C64> = idx
        .iter()
        .zip(&weights)
        .map(|(&i, w)| C64::new((values[i] - mean) * w, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let span = n as f64 * dt;
    let half = n / 2;
    Ok(SpectrumSeries {
        omega: (0..=half)
            .map(|j| 2.0 * std::f64::consts::PI * j as f64 / span)
            .collect(),
        amplitude: (0..=half).map(|j| 2.0 * buf[j].norm() / norm).collect(),
    })
}

/// Fidelity spectrum over the post-ramp window `[τ, T]`.
pub fn fidelity_spectrum(
    f: &FidelitySeries,
    tau: f64,
    total_time: f64,
    window: Window,
) -> Result<SpectrumSeries> {
    signal_spectrum(&f.times, &f.values, tau, total_time, window)
}

/// Population target: a single number state or a whole class.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Target {
    State(Vec<u8>),
    Class(ClassLabel),
}

impl Target {
    /// Parses a class label (`S`, `SP`, ..., `OTHER`) or a ket such as
    /// `1,1,1` or `|1,1^{(1)},1⟩`.
    pub fn parse(text: &str, basis: &FockBasis) -> Result<Target> {
        if let Some(c) = ClassLabel::parse(text.trim()) {
            return Ok(Target::Class(c));
        }
        let occ = parse_ket(text, basis.orbitals(), basis.m_wells())
            .map_err(|_| Error::UnknownTarget(text.to_string()))?;
        if basis.rank(&occ).is_none() {
            return Err(Error::UnknownTarget(text.to_string()));
        }
        Ok(Target::State(occ))
    }

    pub fn label(&self, basis: &FockBasis) -> String {
        match self {
            Target::State(occ) => {
                crate::fock::format_ket(occ, basis.orbitals(), basis.m_wells())
            }
            Target::Class(c) => c.as_str().to_string(),
        }
    }
}

/// Per-sample projections onto the targets plus the band-zero total `P0`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PopulationSeries {
    pub times: Vec<f64>,
    pub labels: Vec<String>,
    /// `values[k][i]`: target `k` at sample `i`.
    pub values: Vec<Vec<f64>>,
    pub p0: Vec<f64>,
}

impl PopulationSeries {
    pub fn series(&self, label: &str) -> Option<&[f64]> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|k| self.values[k].as_slice())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header: Vec<String> = self.labels.iter().map(|l| csv_field(l)).collect();
        writeln!(out, "t,{},P0", header.join(","))?;
        for i in 0..self.times.len() {
            write!(out, "{}", self.times[i])?;
            for v in &self.values {
                write!(out, ",{}", v[i])?;
            }
            writeln!(out, ",{}", self.p0[i])?;
        }
        Ok(())
    }
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Streaming population observer.
#[derive(Debug, Clone)]
pub struct PopulationRecorder {
    members: Vec<Vec<usize>>,
    band_zero: Vec<usize>,
    pub series: PopulationSeries,
}

impl PopulationRecorder {
    pub fn new(basis: &FockBasis, targets: &[Target]) -> Result<Self> {
        let mut members = Vec::with_capacity(targets.len());
        for t in targets {
            let m = match t {
                Target::State(occ) => vec![basis
                    .rank(occ)
                    .ok_or_else(|| Error::UnknownTarget(t.label(basis)))?],
                Target::Class(c) => (0..basis.dim())
                    .filter(|&i| basis.classify(i).label == *c)
                    .collect(),
            };
            members.push(m);
        }
        Ok(PopulationRecorder {
            members,
            band_zero: basis.band_zero_states(),
            series: PopulationSeries {
                labels: targets.iter().map(|t| t.label(basis)).collect(),
                values: vec![Vec::new(); targets.len()],
                ..PopulationSeries::default()
            },
        })
    }

    /// Recorder over the full class partition.
    pub fn classes(basis: &FockBasis) -> Result<Self> {
        let targets: Vec<Target> = ClassLabel::ALL.into_iter().map(Target::Class).collect();
        PopulationRecorder::new(basis, &targets)
    }
}

impl Observer for PopulationRecorder {
    fn observe(&mut self, t: f64, _g: f64, psi: &[C64]) -> Result<()> {
        let weight = |ids: &[usize]| ids.iter().map(|&i| psi[i].norm_sqr()).sum::<f64>();
        self.series.times.push(t);
        for (k, m) in self.members.iter().enumerate() {
            self.series.values[k].push(weight(m));
        }
        self.series.p0.push(weight(&self.band_zero));
        Ok(())
    }
}

/// Populations of stored trajectory samples.
pub fn populations(traj: &Trajectory, basis: &FockBasis, targets: &[Target]) -> Result<PopulationSeries> {
    if !traj.is_empty() && traj.dim() != basis.dim() {
        return Err(Error::BasisMismatch {
            expected: basis.dim(),
            found: traj.dim(),
        });
    }
    let mut rec = PopulationRecorder::new(basis, targets)?;
    for ((&t, &g), psi) in traj.times.iter().zip(&traj.couplings).zip(&traj.states) {
        rec.observe(t, g, psi)?;
    }
    Ok(rec.series)
}

/// `P̄_exc = 1 - T⁻¹ ∫_0^T P0 dt`.
pub fn excitation_fraction(times: &[f64], p0: &[f64], total_time: f64) -> Result<f64> {
    Ok(1.0 - window_mean(times, p0, 0.0, total_time)?)
}

/// Post-ramp variant, `1 - (T - τ)⁻¹ ∫_τ^T P0 dt`.
pub fn excitation_fraction_after(times: &[f64], p0: &[f64], tau: f64, total_time: f64) -> Result<f64> {
    Ok(1.0 - window_mean(times, p0, tau, total_time)?)
}
