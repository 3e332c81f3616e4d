//! Executes one [`RunConfig`] and persists its artifacts.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use latticequench::dynamics::{MfSettings, PropagationSettings, QuenchProtocol};
use latticequench::eigen::EigenOptions;
use latticequench::fits::{f_test, fit, FitModel, FitOptions, FitResult};
use latticequench::model::{run_mf_quench, scan_v0, LatticeConfig, LatticeModel, QuenchSummary};
use latticequench::observables::{SpectrumSeries, Target, Window};
use latticequench::spectra::{detect_crossings, scan_g, uniform_grid, SpectrumSolver};
use latticequench::Execution;

use crate::config::{ConfigError, Mode, RunConfig, WindowName};

const F_TEST_ALPHA: f64 = 0.05;

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Numerical(String),
    Io(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numerical(_) => 3,
            Failure::Io(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Numerical(m) => write!(f, "numerical failure: {m}"),
            Failure::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<latticequench::Error> for Failure {
    fn from(e: latticequench::Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else if let latticequench::Error::Io(io) = &e {
            Failure::Io(io.to_string())
        } else {
            Failure::Config(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    mode: &'a str,
    config_sha256: &'a str,
    files: &'a [FileEntry],
    warnings: &'a [String],
}

/// Collects every file written below one output directory.
pub struct Artifacts {
    root: PathBuf,
    files: Vec<FileEntry>,
    pub warnings: Vec<String>,
}

impl Artifacts {
    pub fn new(root: &Path) -> Result<Self, Failure> {
        fs::create_dir_all(root)
            .map_err(|e| Failure::Io(format!("cannot create {}: {e}", root.display())))?;
        Ok(Artifacts {
            root: root.to_path_buf(),
            files: Vec::new(),
            warnings: Vec::new(),
        })
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<(), Failure> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)
            .map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))?;
        self.files.retain(|f| f.path != rel);
        self.files.push(FileEntry {
            path: rel.to_string(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    pub fn write_with(
        &mut self,
        rel: &str,
        f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
    ) -> Result<(), Failure> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(rel, &buf)
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, rel: &str, value: &T) -> Result<(), Failure> {
        let mut text = serde_json::to_string_pretty(value).expect("plain data serializes");
        text.push('\n');
        self.write(rel, text.as_bytes())
    }

    /// Records files written into `prefix/` by a nested run, including its
    /// own manifest.
    pub fn adopt(&mut self, prefix: &str, entries: Vec<FileEntry>) -> Result<(), Failure> {
        let manifest = fs::read(self.root.join(prefix).join("manifest.json"))?;
        let nested = entries.into_iter().chain(std::iter::once(FileEntry {
            path: "manifest.json".into(),
            bytes: manifest.len() as u64,
            sha256: sha256_hex(&manifest),
        }));
        for mut f in nested {
            f.path = format!("{prefix}/{}", f.path);
            self.files.push(f);
        }
        Ok(())
    }

    /// Writes `manifest.json` listing every file so far.
    pub fn finish(mut self, mode: &str, config_sha256: &str) -> Result<Vec<FileEntry>, Failure> {
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = Manifest {
            mode,
            config_sha256,
            files: &self.files,
            warnings: &self.warnings,
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        let path = self.root.join("manifest.json");
        fs::write(&path, text)
            .map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))?;
        Ok(self.files)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

fn lattice(c: &RunConfig) -> LatticeConfig {
    LatticeConfig {
        m_wells: c.lattice.m_wells,
        n_points: c.lattice.n_points,
        v0: c.lattice.v0,
        bands: c.lattice.bands,
        n_particles: c.lattice.n_particles,
    }
}

fn eigen_options(c: &RunConfig) -> EigenOptions {
    EigenOptions {
        seed: u64::from(c.run.seed),
        ..EigenOptions::default()
    }
}

fn protocol(c: &RunConfig) -> QuenchProtocol {
    let q = &c.quench;
    QuenchProtocol::new(q.g_i, q.g_f, q.tau)
        .with_total_time(q.total_time)
        .with_dt_out(q.dt_out)
}

fn settings(c: &RunConfig) -> PropagationSettings {
    PropagationSettings {
        dt_int: c.quench.dt_int,
        ..PropagationSettings::default()
    }
}

fn window(c: &RunConfig) -> Window {
    match c.quench.window {
        WindowName::Rectangular => Window::Rectangular,
        WindowName::Hann => Window::Hann,
    }
}

fn build_model(c: &RunConfig) -> Result<LatticeModel, Failure> {
    Ok(LatticeModel::build(&lattice(c), Execution::Parallel)?.with_eigen_options(eigen_options(c)))
}

/// Runs the configured mode into `dir`, returning the manifest entries.
pub fn run(config: &RunConfig, dir: &Path) -> Result<Vec<FileEntry>, Failure> {
    config.validate()?;
    let mut out = Artifacts::new(dir)?;
    out.write("config.toml", config.to_text().as_bytes())?;
    match config.run.mode {
        Mode::Spectrum => spectrum(config, &mut out)?,
        Mode::Quench => quench(config, &mut out)?,
        Mode::ScanTau | Mode::ScanV0 | Mode::ScanGf => scan(config, &mut out)?,
        Mode::Mf => mean_field(config, &mut out)?,
        Mode::Fit => fit_file(config, &mut out)?,
    }
    out.finish(config.run.mode.as_str(), &config.hash())
}

fn spectrum(c: &RunConfig, out: &mut Artifacts) -> Result<(), Failure> {
    let model = build_model(c)?;
    let mut solver = SpectrumSolver::new(&model.hamiltonian, &model.basis, &model.parity, c.spectrum.k_eigen);
    solver.options = eigen_options(c);
    let s = &c.spectrum;
    let grid = uniform_grid(s.g_start, s.g_end, s.g_step);
    let scan = scan_g(&solver, &grid, Execution::Parallel)?;
    let refine = |g: f64, p| solver.sector_energies(g, p);
    let report = detect_crossings(&scan, Some(&refine))?;
    out.write_with("spectrum.csv", |w| scan.write_csv(w))?;
    out.write_with("crossings.csv", |w| report.write_csv(w))?;
    out.warnings.extend(report.warnings.iter().cloned());
    Ok(())
}

/// The fidelity spectrum needs enough post-ramp samples; a short run only
/// loses that file.
fn write_spectrum(out: &mut Artifacts, spectrum: latticequench::Result<SpectrumSeries>) -> Result<(), Failure> {
    match spectrum {
        Ok(s) => out.write_with("spectrum.csv", |w| s.write_csv(w)),
        Err(e @ latticequench::Error::TooFewSamples { .. }) => {
            out.warnings.push(format!("spectrum.csv skipped: {e}"));
            Ok(())
        }
        Err(e) => Err(e.into()),
    }
}

#[derive(Serialize)]
struct QuenchReport<'a> {
    #[serde(flatten)]
    summary: &'a QuenchSummary,
    dimension: usize,
    max_norm_drift: f64,
    /// Relative spread of `⟨H(g_f)⟩` after the ramp.
    energy_drift: f64,
}

fn quench(c: &RunConfig, out: &mut Artifacts) -> Result<(), Failure> {
    let model = build_model(c)?;
    let targets = c
        .quench
        .targets
        .iter()
        .map(|t| Target::parse(t, &model.basis))
        .collect::<latticequench::Result<Vec<_>>>()?;
    let p = protocol(c);
    let outcome = model.run_quench(&p, &settings(c), &targets)?;
    let post: Vec<f64> = outcome
        .fidelity
        .times
        .iter()
        .zip(&outcome.energy)
        .filter(|(&t, _)| t >= p.tau)
        .map(|(_, &e)| e)
        .collect();
    let energy_drift = match post.first() {
        Some(&e0) => post.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max) / e0.abs().max(1e-300),
        None => 0.0,
    };
    out.write_with("fidelity.csv", |w| outcome.fidelity.write_csv(w))?;
    out.write_with("populations.csv", |w| outcome.populations.write_csv(w))?;
    write_spectrum(out, outcome.spectrum(window(c)))?;
    out.write_json(
        "summary.json",
        &QuenchReport {
            summary: &outcome.summary,
            dimension: model.dim(),
            max_norm_drift: outcome.stats.max_norm_drift,
            energy_drift,
        },
    )
}

fn mean_field(c: &RunConfig, out: &mut Artifacts) -> Result<(), Failure> {
    let outcome = run_mf_quench(&lattice(c), &protocol(c), &MfSettings::default())?;
    out.write_with("mf.csv", |w| {
        use std::io::Write;
        writeln!(w, "t,F,P_exc")?;
        for ((t, f), e) in outcome.fidelity.times.iter().zip(&outcome.fidelity.values).zip(&outcome.excited) {
            writeln!(w, "{t},{f},{e}")?;
        }
        Ok(())
    })?;
    write_spectrum(out, outcome.spectrum(window(c)))?;
    out.write_json("summary.json", &outcome.summary)
}

fn summaries_csv(rows: &[QuenchSummary]) -> Result<Vec<u8>, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Failure::Io(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Failure::Io(e.to_string()))
}

#[derive(Serialize, Default)]
struct FitReport {
    x: String,
    y: String,
    fits: Vec<FitResult>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    failures: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    f_test: Option<latticequench::fits::FComparison>,
}

fn fit_models(models: &[FitModel], x: &str, y: &str, xs: &[f64], ys: &[f64], warnings: &mut Vec<String>) -> FitReport {
    let opts = FitOptions::default();
    let mut report = FitReport {
        x: x.into(),
        y: y.into(),
        ..FitReport::default()
    };
    for &m in models {
        match fit(m, xs, ys, &opts) {
            Ok(r) => report.fits.push(r),
            Err(e) => {
                let msg = format!("{} fit of {y}({x}): {e}", m.name());
                warnings.push(msg.clone());
                report.failures.push(msg);
            }
        }
    }
    let by = |m: FitModel| report.fits.iter().find(|r| r.model == m);
    if let (Some(a), Some(b)) = (by(FitModel::Exponential), by(FitModel::Biexponential)) {
        match f_test(a, b, F_TEST_ALPHA) {
            Ok(cmp) => report.f_test = Some(cmp),
            Err(e) => warnings.push(format!("F test skipped: {e}")),
        }
    }
    report
}

fn scan(c: &RunConfig, out: &mut Artifacts) -> Result<(), Failure> {
    let values = c.scan_values()?;
    let q = &c.quench;
    let s = settings(c);
    let exec = Execution::Parallel;
    let (rows, x, models) = match c.run.mode {
        Mode::ScanTau => {
            let m = build_model(c)?;
            let rows = m.scan_tau(q.g_i, q.g_f, &values, q.total_time, &s, exec)?;
            (rows, "tau", vec![FitModel::Exponential, FitModel::Biexponential])
        }
        Mode::ScanGf => {
            let m = build_model(c)?;
            (m.scan_gf(q.g_i, &values, q.tau, q.total_time, &s, exec)?, "g_f", Vec::new())
        }
        _ => {
            let rows = scan_v0(&lattice(c), &values, &protocol(c), &s, &eigen_options(c), exec)?;
            (rows, "V0", vec![FitModel::Exponential, FitModel::DoubleGaussian])
        }
    };
    // Per-point files first, then the merged table.
    for (i, r) in rows.iter().enumerate() {
        out.write_json(&format!("points/{i:03}.json"), r)?;
    }
    let table = summaries_csv(&rows)?;
    out.write("scan.csv", &table)?;
    if !models.is_empty() {
        let xs: Vec<f64> = match c.run.mode {
            Mode::ScanTau => rows.iter().map(|r| r.tau).collect(),
            _ => rows.iter().map(|r| r.v0).collect(),
        };
        let ys: Vec<f64> = rows.iter().map(|r| r.p_exc).collect();
        let report = fit_models(&models, x, "P_exc", &xs, &ys, &mut out.warnings);
        out.write_json("fits.json", &report)?;
    }
    Ok(())
}

fn read_columns(path: &Path, x: &str, y: &str) -> Result<(Vec<f64>, Vec<f64>), Failure> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Failure::Io(format!("cannot read {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?
        .clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            let known: Vec<&str> = headers.iter().collect();
            Failure::Config(format!(
                "{}: no column '{name}' (columns: {})",
                path.display(),
                known.join(", ")
            ))
        })
    };
    let (ix, iy) = (col(x)?, col(y)?);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        let parse = |i: usize, name: &str| -> Result<f64, Failure> {
            let field = record.get(i).unwrap_or("").trim();
            field.parse().map_err(|_| {
                Failure::Config(format!(
                    "{}: row {}: column '{name}' is not a number: '{field}'",
                    path.display(),
                    line + 2
                ))
            })
        };
        xs.push(parse(ix, x)?);
        ys.push(parse(iy, y)?);
    }
    Ok((xs, ys))
}

fn fit_file(c: &RunConfig, out: &mut Artifacts) -> Result<(), Failure> {
    let input = c.fit.input.as_ref().expect("validated");
    let (xs, ys) = read_columns(input, &c.fit.x, &c.fit.y)?;
    let models: Vec<FitModel> = c.fit.models.iter().filter_map(|m| FitModel::parse(m)).collect();
    let mut warnings = Vec::new();
    let report = fit_models(&models, &c.fit.x, &c.fit.y, &xs, &ys, &mut warnings);
    out.warnings.extend(warnings);
    if report.fits.is_empty() {
        return Err(Failure::Numerical(report.failures.join("; ")));
    }
    out.write_json("fit.json", &report)
}
