//! Run configuration: a sectioned `key = value` file (TOML) plus command-line
//! overrides.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Spectrum,
    Quench,
    ScanTau,
    ScanV0,
    ScanGf,
    Mf,
    Fit,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Spectrum => "spectrum",
            Mode::Quench => "quench",
            Mode::ScanTau => "scan-tau",
            Mode::ScanV0 => "scan-v0",
            Mode::ScanGf => "scan-gf",
            Mode::Mf => "mf",
            Mode::Fit => "fit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowName {
    Rectangular,
    Hann,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub mode: Mode,
    pub output: PathBuf,
    /// Seeds the Lanczos starting vectors.
    pub seed: u32,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            mode: Mode::Quench,
            output: PathBuf::from("out"),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatticeSection {
    pub m_wells: usize,
    /// Omitted means `100 m - 1`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_points: Option<usize>,
    #[serde(rename = "V0")]
    pub v0: f64,
    pub bands: usize,
    #[serde(rename = "N")]
    pub n_particles: usize,
}

impl Default for LatticeSection {
    fn default() -> Self {
        LatticeSection {
            m_wells: 3,
            n_points: None,
            v0: 10.0,
            bands: 2,
            n_particles: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuenchSection {
    pub g_i: f64,
    pub g_f: f64,
    pub tau: f64,
    #[serde(rename = "T")]
    pub total_time: f64,
    pub dt_out: f64,
    /// Omitted means the automatic ramp step.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt_int: Option<f64>,
    /// Extra population targets: class labels or kets such as `1,1,1`.
    pub targets: Vec<String>,
    pub window: WindowName,
}

impl Default for QuenchSection {
    fn default() -> Self {
        QuenchSection {
            g_i: 0.0,
            g_f: 2.0,
            tau: 8.0,
            total_time: 500.0,
            dt_out: 0.1,
            dt_int: None,
            targets: Vec::new(),
            window: WindowName::Rectangular,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumSection {
    #[serde(rename = "K_eigen")]
    pub k_eigen: usize,
    pub g_start: f64,
    pub g_end: f64,
    pub g_step: f64,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        SpectrumSection {
            k_eigen: 25,
            g_start: 0.0,
            g_end: 4.0,
            g_step: 0.02,
        }
    }
}

/// Values of the scanned variable (τ, V0 or g_f depending on the mode).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSection {
    pub start: f64,
    pub end: f64,
    pub count: usize,
    pub spacing: Spacing,
    /// Explicit values; overrides start/end/count when present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

impl Default for ScanSection {
    fn default() -> Self {
        ScanSection {
            start: 0.5,
            end: 100.0,
            count: 12,
            spacing: Spacing::Log,
            values: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    /// CSV with a header row.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    pub x: String,
    pub y: String,
    pub models: Vec<String>,
}

impl Default for FitSection {
    fn default() -> Self {
        FitSection {
            input: None,
            x: "tau".into(),
            y: "P_exc".into(),
            models: vec!["exponential".into(), "biexponential".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run: RunSection,
    pub lattice: LatticeSection,
    pub quench: QuenchSection,
    pub spectrum: SpectrumSection,
    pub scan: ScanSection,
    pub fit: FitSection,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError(format!("config: {}", e.message())))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| ConfigError(format!("{}: {}", path.display(), e.0)))
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    /// SHA-256 of the serialized config, hex encoded.
    pub fn hash(&self) -> String {
        format!("{:x}", Sha256::digest(self.to_text().as_bytes()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let l = &self.lattice;
        if l.m_wells == 0 || l.bands == 0 || l.n_particles == 0 {
            return bad("lattice: m_wells, bands and N must be positive");
        }
        if !l.v0.is_finite() || l.v0 < 0.0 {
            return bad(format!("lattice: V0 = {} must be finite and non-negative", l.v0));
        }
        let q = &self.quench;
        for (name, v) in [("g_i", q.g_i), ("g_f", q.g_f), ("tau", q.tau), ("T", q.total_time), ("dt_out", q.dt_out)] {
            if !v.is_finite() {
                return bad(format!("quench: {name} is not finite"));
            }
        }
        if q.tau < 0.0 {
            return bad(format!("quench: tau = {} < 0", q.tau));
        }
        if q.tau > q.total_time {
            return bad(format!("quench: tau = {} exceeds T = {}", q.tau, q.total_time));
        }
        if !(q.dt_out > 0.0) || q.dt_out > q.total_time {
            return bad(format!("quench: dt_out = {} must lie in (0, T]", q.dt_out));
        }
        if let Some(dt) = q.dt_int {
            if !(dt > 0.0) {
                return bad(format!("quench: dt_int = {dt} must be positive"));
            }
        }
        let s = &self.spectrum;
        if s.k_eigen == 0 {
            return bad("spectrum: K_eigen must be positive");
        }
        if !(s.g_step > 0.0) || !(s.g_end >= s.g_start) {
            return bad(format!(
                "spectrum: need g_step > 0 and g_end >= g_start, got [{}, {}] step {}",
                s.g_start, s.g_end, s.g_step
            ));
        }
        if matches!(self.run.mode, Mode::ScanTau | Mode::ScanV0 | Mode::ScanGf) {
            let values = self.scan_values()?;
            if self.run.mode == Mode::ScanTau {
                if let Some(t) = values.iter().find(|&&t| t < 0.0 || t > q.total_time) {
                    return bad(format!("scan: ramp time {t} outside [0, T]"));
                }
            }
            if self.run.mode == Mode::ScanV0 && values.iter().any(|&v| v < 0.0) {
                return bad("scan: negative lattice depth");
            }
        }
        if self.run.mode == Mode::Fit {
            if self.fit.input.is_none() {
                return bad("fit: no input file");
            }
            if self.fit.models.is_empty() {
                return bad("fit: no models");
            }
            for m in &self.fit.models {
                if latticequench::fits::FitModel::parse(m).is_none() {
                    return bad(format!(
                        "fit: unknown model '{m}' (exponential, biexponential, double_gaussian)"
                    ));
                }
            }
        }
        Ok(())
    }

    /// The scanned values in ascending order of generation.
    pub fn scan_values(&self) -> Result<Vec<f64>, ConfigError> {
        let s = &self.scan;
        if let Some(v) = &s.values {
            if v.is_empty() {
                return bad("scan: empty value list");
            }
            if v.iter().any(|x| !x.is_finite()) {
                return bad("scan: non-finite value");
            }
            return Ok(v.clone());
        }
        if s.count == 0 {
            return bad("scan: count must be positive");
        }
        if !(s.start.is_finite() && s.end.is_finite()) || s.end < s.start {
            return bad(format!("scan: empty range [{}, {}]", s.start, s.end));
        }
        if s.count == 1 {
            return Ok(vec![s.start]);
        }
        let n = s.count - 1;
        Ok(match s.spacing {
            Spacing::Linear => (0..=n)
                .map(|i| s.start + (s.end - s.start) * i as f64 / n as f64)
                .collect(),
            Spacing::Log => {
                if !(s.start > 0.0) {
                    return bad("scan: log spacing needs start > 0");
                }
                let (a, b) = (s.start.ln(), s.end.ln());
                (0..=n)
                    .map(|i| (a + (b - a) * i as f64 / n as f64).exp())
                    .collect()
            }
        })
    }
}

/// Command-line overrides; every field mirrors a config key.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    #[arg(long = "m-wells")]
    pub m_wells: Option<usize>,
    #[arg(long = "n-points")]
    pub n_points: Option<usize>,
    #[arg(long = "V0")]
    pub v0: Option<f64>,
    #[arg(long)]
    pub bands: Option<usize>,
    #[arg(long = "N")]
    pub n_particles: Option<usize>,
    #[arg(long = "g-i", allow_hyphen_values = true)]
    pub g_i: Option<f64>,
    #[arg(long = "g-f", allow_hyphen_values = true)]
    pub g_f: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long = "T")]
    pub total_time: Option<f64>,
    #[arg(long = "dt-out")]
    pub dt_out: Option<f64>,
    #[arg(long = "dt-int")]
    pub dt_int: Option<f64>,
    /// Extra population target (class label or ket like 1,1,1); repeatable.
    #[arg(long = "target")]
    pub targets: Vec<String>,
    #[arg(long, value_parser = ["rectangular", "hann"])]
    pub window: Option<String>,
    #[arg(long = "K-eigen")]
    pub k_eigen: Option<usize>,
    #[arg(long = "g-start", allow_hyphen_values = true)]
    pub g_start: Option<f64>,
    #[arg(long = "g-end", allow_hyphen_values = true)]
    pub g_end: Option<f64>,
    #[arg(long = "g-step")]
    pub g_step: Option<f64>,
    #[arg(long = "scan-start", allow_hyphen_values = true)]
    pub scan_start: Option<f64>,
    #[arg(long = "scan-end", allow_hyphen_values = true)]
    pub scan_end: Option<f64>,
    #[arg(long = "scan-count")]
    pub scan_count: Option<usize>,
    #[arg(long = "scan-spacing", value_parser = ["linear", "log"])]
    pub scan_spacing: Option<String>,
    /// Explicit scan values, comma separated.
    #[arg(long = "scan-values", value_delimiter = ',', allow_hyphen_values = true)]
    pub scan_values: Option<Vec<f64>>,
    #[arg(long = "fit-input")]
    pub fit_input: Option<PathBuf>,
    #[arg(long = "fit-x")]
    pub fit_x: Option<String>,
    #[arg(long = "fit-y")]
    pub fit_y: Option<String>,
    /// Fit models, comma separated.
    #[arg(long = "models", value_delimiter = ',')]
    pub models: Option<Vec<String>>,
    /// Output directory (overrides LATTICEQUENCH_OUT and the config).
    #[arg(long = "out")]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u32>,
}

impl Overrides {
    pub fn apply(&self, c: &mut RunConfig) {
        macro_rules! set {
            ($src:expr => $dst:expr) => {
                if let Some(v) = $src.clone() {
                    $dst = v;
                }
            };
        }
        set!(self.m_wells => c.lattice.m_wells);
        if self.n_points.is_some() {
            c.lattice.n_points = self.n_points;
        }
        set!(self.v0 => c.lattice.v0);
        set!(self.bands => c.lattice.bands);
        set!(self.n_particles => c.lattice.n_particles);
        set!(self.g_i => c.quench.g_i);
        set!(self.g_f => c.quench.g_f);
        set!(self.tau => c.quench.tau);
        set!(self.total_time => c.quench.total_time);
        set!(self.dt_out => c.quench.dt_out);
        if self.dt_int.is_some() {
            c.quench.dt_int = self.dt_int;
        }
        if !self.targets.is_empty() {
            c.quench.targets = self.targets.clone();
        }
        if let Some(w) = &self.window {
            c.quench.window = if w == "hann" { WindowName::Hann } else { WindowName::Rectangular };
        }
        set!(self.k_eigen => c.spectrum.k_eigen);
        set!(self.g_start => c.spectrum.g_start);
        set!(self.g_end => c.spectrum.g_end);
        set!(self.g_step => c.spectrum.g_step);
        set!(self.scan_start => c.scan.start);
        set!(self.scan_end => c.scan.end);
        set!(self.scan_count => c.scan.count);
        if let Some(s) = &self.scan_spacing {
            c.scan.spacing = if s == "log" { Spacing::Log } else { Spacing::Linear };
        }
        if self.scan_values.is_some() {
            c.scan.values = self.scan_values.clone();
        }
        if self.fit_input.is_some() {
            c.fit.input = self.fit_input.clone();
        }
        set!(self.fit_x => c.fit.x);
        set!(self.fit_y => c.fit.y);
        set!(self.models => c.fit.models);
        set!(self.output => c.run.output);
        set!(self.seed => c.run.seed);
    }
}
