mod config;
mod recipes;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Mode, Overrides, RunConfig};
use run::{Artifacts, Failure};

/// Few-boson quench dynamics in finite 1D optical lattices.
#[derive(Parser)]
#[command(name = "latticequench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Eigenspectrum scan over g with avoided-crossing detection.
    Spectrum(RunArgs),
    /// One quench: fidelity, populations, fidelity spectrum.
    Quench(RunArgs),
    /// Quench summaries over ramp times, with exponential fits.
    ScanTau(RunArgs),
    /// Quench summaries over lattice depths.
    ScanV0(RunArgs),
    /// Quench summaries over final couplings.
    ScanGf(RunArgs),
    /// Mean-field quench.
    Mf(RunArgs),
    /// Fit models to two columns of a CSV file.
    Fit(RunArgs),
    /// List recipes, print one, or run it.
    Recipes(RecipeArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Config file; command-line flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads for scans (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct RecipeArgs {
    name: Option<String>,
    /// Run every variant instead of printing it.
    #[arg(long)]
    run: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
}

const OUT_ENV: &str = "LATTICEQUENCH_OUT";

fn env_out() -> Option<PathBuf> {
    std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

fn run_mode(mode: Mode, args: RunArgs) -> Result<(), Failure> {
    let mut config = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    config.run.mode = mode;
    if let Some(dir) = env_out() {
        config.run.output = dir;
    }
    args.overrides.apply(&mut config);
    let dir = config.run.output.clone();
    let files = latticequench::exec::with_jobs(args.jobs, || run::run(&config, &dir))?;
    println!("{}: wrote {} files to {}", mode.as_str(), files.len() + 1, dir.display());
    Ok(())
}

fn run_recipe(recipe: &recipes::Recipe, root: &Path, jobs: Option<usize>) -> Result<(), Failure> {
    let dir = root.join(recipe.name);
    let mut top = Artifacts::new(&dir)?;
    for (label, variant) in &recipe.variants {
        let mut c = variant.clone();
        c.run.output = dir.join(label);
        eprintln!("{} {label}: {}", recipe.name, c.run.mode.as_str());
        let files = latticequench::exec::with_jobs(jobs, || run::run(&c, &c.run.output))?;
        top.adopt(label, files)?;
    }
    let text = recipes::render(recipe);
    top.write("recipe.toml", text.as_bytes())?;
    top.finish("recipe", &run::sha256_hex(text.as_bytes()))?;
    println!("{}: wrote {}", recipe.name, dir.display());
    Ok(())
}

fn recipes_command(args: RecipeArgs) -> Result<(), Failure> {
    let Some(name) = args.name else {
        for r in recipes::all() {
            let modes: Vec<_> = r.variants.iter().map(|(l, c)| format!("{l}:{}", c.run.mode.as_str())).collect();
            println!("{:<6} {}  [{}]", r.name, r.description, modes.join(" "));
        }
        return Ok(());
    };
    let recipe = recipes::find(&name).ok_or_else(|| {
        Failure::Config(format!(
            "unknown recipe '{name}'; valid names: {}",
            recipes::names().join(", ")
        ))
    })?;
    if !args.run {
        print!("{}", recipes::render(&recipe));
        return Ok(());
    }
    let root = args
        .out
        .or_else(env_out)
        .unwrap_or_else(|| RunConfig::default().run.output);
    run_recipe(&recipe, &root, args.jobs)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Spectrum(a) => run_mode(Mode::Spectrum, a),
        Command::Quench(a) => run_mode(Mode::Quench, a),
        Command::ScanTau(a) => run_mode(Mode::ScanTau, a),
        Command::ScanV0(a) => run_mode(Mode::ScanV0, a),
        Command::ScanGf(a) => run_mode(Mode::ScanGf, a),
        Command::Mf(a) => run_mode(Mode::Mf, a),
        Command::Fit(a) => run_mode(Mode::Fit, a),
        Command::Recipes(a) => recipes_command(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
