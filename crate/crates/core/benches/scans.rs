//! Parallel versus sequential scans on the 56-state triple well.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use latticequench::dynamics::PropagationSettings;
use latticequench::fits::{fit, FitModel, FitOptions};
use latticequench::model::{LatticeConfig, LatticeModel};
use latticequench::spectra::{scan_g, uniform_grid, SpectrumSolver, DEFAULT_LEVELS};
use latticequench::Execution;

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn bench_scan_g(c: &mut Criterion) {
    let model = LatticeModel::build(&LatticeConfig::triple_well(4.0, 2), Execution::Sequential).unwrap();
    let solver = SpectrumSolver::new(&model.hamiltonian, &model.basis, &model.parity, DEFAULT_LEVELS);
    let grid = uniform_grid(0.0, 4.0, 0.05);
    let mut group = c.benchmark_group("scan_g");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| scan_g(&solver, &grid, exec).unwrap())
        });
    }
    group.finish();
}

fn bench_scan_tau(c: &mut Criterion) {
    let model = LatticeModel::build(&LatticeConfig::triple_well(10.0, 2), Execution::Sequential).unwrap();
    let taus = [0.5, 1.0, 2.0, 4.0, 8.0, 16.0];
    let settings = PropagationSettings::default();
    let mut group = c.benchmark_group("scan_tau");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| model.scan_tau(0.0, 2.0, &taus, 50.0, &settings, exec).unwrap())
        });
    }
    group.finish();
}

fn bench_multistart_fit(c: &mut Criterion) {
    let truth = [0.2, 2.0, 0.05, 30.0];
    let xs: Vec<f64> = (0..24).map(|i| 0.5 * 1.25f64.powi(i)).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| FitModel::Biexponential.eval(x, &truth)).collect();
    let mut group = c.benchmark_group("biexponential_fit");
    for (name, exec) in MODES {
        let opts = FitOptions { exec, ..FitOptions::default() };
        group.bench_with_input(BenchmarkId::from_parameter(name), &opts, |b, opts| {
            b.iter(|| fit(FitModel::Biexponential, &xs, &ys, opts).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_scan_g, bench_scan_tau, bench_multistart_fit);
criterion_main!(benches);
