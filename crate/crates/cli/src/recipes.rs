//! Named reproduction recipes, one per figure panel.

use crate::config::{Mode, RunConfig, Spacing};

pub struct Recipe {
    pub name: &'static str,
    pub description: &'static str,
    /// Labeled configurations; each runs into its own subdirectory.
    pub variants: Vec<(String, RunConfig)>,
}

fn base(mode: Mode, m_wells: usize, v0: f64, g_i: f64, g_f: f64) -> RunConfig {
    let mut c = RunConfig::default();
    c.run.mode = mode;
    c.lattice.m_wells = m_wells;
    c.lattice.n_particles = m_wells;
    c.lattice.v0 = v0;
    c.quench.g_i = g_i;
    c.quench.g_f = g_f;
    c
}

fn spectrum(v0: f64) -> RunConfig {
    base(Mode::Spectrum, 3, v0, 0.0, 0.0)
}

fn tau_log(mut c: RunConfig, count: usize) -> RunConfig {
    c.scan.start = 0.5;
    c.scan.end = 100.0;
    c.scan.count = count;
    c.scan.spacing = Spacing::Log;
    c
}

fn with_tau(mut c: RunConfig, tau: f64) -> RunConfig {
    c.quench.tau = tau;
    c
}

fn v0_range(mut c: RunConfig, tau: f64) -> RunConfig {
    c.quench.tau = tau;
    c.scan.start = 3.0;
    c.scan.end = 14.0;
    c.scan.count = 12;
    c.scan.spacing = Spacing::Linear;
    c
}

fn gf_range(mut c: RunConfig, start: f64, end: f64) -> RunConfig {
    c.scan.start = start;
    c.scan.end = end;
    c.scan.count = 20;
    c.scan.spacing = Spacing::Linear;
    c
}

const RAMP_TIMES: [f64; 4] = [1.0, 5.0, 10.0, 25.0];

fn ramps(mode: Mode, m: usize, v0: f64, g_i: f64, g_f: f64) -> Vec<(String, RunConfig)> {
    RAMP_TIMES
        .iter()
        .map(|&t| (format!("tau{t}"), with_tau(base(mode, m, v0, g_i, g_f), t)))
        .collect()
}

fn one(label: &str, c: RunConfig) -> Vec<(String, RunConfig)> {
    vec![(label.to_string(), c)]
}

fn labeled(items: Vec<(&str, RunConfig)>) -> Vec<(String, RunConfig)> {
    items.into_iter().map(|(l, c)| (l.to_string(), c)).collect()
}

fn target(mut c: RunConfig, ket: &str) -> RunConfig {
    c.quench.targets = vec![ket.to_string()];
    c
}

/// Every recipe, in figure order.
pub fn all() -> Vec<Recipe> {
    use Mode::*;
    let r = |name, description, variants| Recipe {
        name,
        description,
        variants,
    };
    let neg_probe = |ket: &str| {
        labeled(vec![
            ("V0_4", target(with_tau(base(Quench, 3, 4.0, 2.0, 0.0), 8.0), ket)),
            ("V0_10", target(with_tau(base(Quench, 3, 10.0, 2.0, 0.0), 8.0), ket)),
        ])
    };
    vec![
        r("fig1a", "eigenspectrum vs g, triple well, V0 = 4", one("V0_4", spectrum(4.0))),
        r("fig1b", "eigenspectrum vs g, triple well, V0 = 10", one("V0_10", spectrum(10.0))),
        r("fig2a", "fidelity F(t) for several ramp times, 0 -> 2, V0 = 4", ramps(Quench, 3, 4.0, 0.0, 2.0)),
        r("fig2b", "mean fidelity vs ramp time, 0 -> 2, V0 = 4", one("V0_4", tau_log(base(ScanTau, 3, 4.0, 0.0, 2.0), 16))),
        r(
            "fig2c",
            "fidelity variance K vs ramp time, 0 -> 2, V0 = 4",
            one("V0_4", tau_log(base(ScanTau, 3, 4.0, 0.0, 2.0), 24)),
        ),
        r("fig2d", "fidelity F(t) for several ramp times, 0 -> 2, V0 = 10", ramps(Quench, 3, 10.0, 0.0, 2.0)),
        r(
            "fig2e",
            "fidelity spectrum at tau = 8, many-body and mean-field",
            labeled(vec![
                ("mb_V0_10", with_tau(base(Quench, 3, 10.0, 0.0, 2.0), 8.0)),
                ("mb_V0_4", with_tau(base(Quench, 3, 4.0, 0.0, 2.0), 8.0)),
                ("mb_V0_10_gf1", with_tau(base(Quench, 3, 10.0, 0.0, 1.0), 8.0)),
                ("mb_V0_10_gf3", with_tau(base(Quench, 3, 10.0, 0.0, 3.0), 8.0)),
                ("mf_V0_10", with_tau(base(Mf, 3, 10.0, 0.0, 2.0), 8.0)),
            ]),
        ),
        r(
            "fig3a",
            "excited fraction vs ramp time, 0 -> 2, V0 = 4 and 10",
            labeled(vec![
                ("V0_4", tau_log(base(ScanTau, 3, 4.0, 0.0, 2.0), 16)),
                ("V0_10", tau_log(base(ScanTau, 3, 10.0, 0.0, 2.0), 16)),
            ]),
        ),
        r(
            "fig3b",
            "excited fraction vs lattice depth, 0 -> 2, several ramp times",
            [1.0, 10.0, 25.0, 50.0]
                .iter()
                .map(|&t| (format!("tau{t}"), v0_range(base(ScanV0, 3, 10.0, 0.0, 2.0), t)))
                .collect(),
        ),
        r(
            "fig3c",
            "excited fraction vs final coupling g_f at tau = 8, V0 = 4 and 10",
            labeled(vec![
                ("V0_4", gf_range(with_tau(base(ScanGf, 3, 4.0, 0.0, 2.0), 8.0), 0.2, 4.0)),
                ("V0_10", gf_range(with_tau(base(ScanGf, 3, 10.0, 0.0, 2.0), 8.0), 0.2, 4.0)),
            ]),
        ),
        r("fig4a", "fidelity F(t) for several ramp times, 2 -> 0, V0 = 4", ramps(Quench, 3, 4.0, 2.0, 0.0)),
        r("fig4b", "fidelity F(t) for several ramp times, 2 -> 0, V0 = 10", ramps(Quench, 3, 10.0, 2.0, 0.0)),
        r("fig4c", "population of |1,1,1>, 2 -> 0, tau = 8", neg_probe("1,1,1")),
        r("fig4d", "population of |1,2,0>, 2 -> 0, tau = 8", neg_probe("1,2,0")),
        r("fig4e", "population of |0,3,0>, 2 -> 0, tau = 8", neg_probe("0,3,0")),
        r(
            "fig4f",
            "fidelity variance K vs ramp time, 2 -> 0, V0 = 4",
            one("V0_4", tau_log(base(ScanTau, 3, 4.0, 2.0, 0.0), 24)),
        ),
        r(
            "fig4g",
            "fidelity spectrum at tau = 8 after a negative quench",
            labeled(vec![
                ("mb_V0_10", with_tau(base(Quench, 3, 10.0, 2.0, 0.0), 8.0)),
                ("mb_V0_4", with_tau(base(Quench, 3, 4.0, 2.0, 0.0), 8.0)),
                ("mb_V0_10_gf0.05", with_tau(base(Quench, 3, 10.0, 2.0, 0.05), 8.0)),
                ("mf_V0_10", with_tau(base(Mf, 3, 10.0, 2.0, 0.0), 8.0)),
            ]),
        ),
        r("fig5a", "five wells: fidelity F(t), 0 -> 2, V0 = 10", ramps(Quench, 5, 10.0, 0.0, 2.0)),
        r("fig5b", "five wells: mean-field fidelity, 0 -> 2, V0 = 10", ramps(Mf, 5, 10.0, 0.0, 2.0)),
        r("fig5c", "five wells: fidelity F(t), 2 -> 0, V0 = 10", ramps(Quench, 5, 10.0, 2.0, 0.0)),
        r("fig5d", "five wells: mean-field fidelity, 2 -> 0, V0 = 10", ramps(Mf, 5, 10.0, 2.0, 0.0)),
        r(
            "fig5e",
            "five wells: excited fraction vs ramp time, 0 -> 2",
            labeled(vec![
                ("V0_4", tau_log(base(ScanTau, 5, 4.0, 0.0, 2.0), 12)),
                ("V0_10", tau_log(base(ScanTau, 5, 10.0, 0.0, 2.0), 12)),
            ]),
        ),
        r(
            "fig5f",
            "five wells: excited fraction vs ramp time, negative quench 2 -> 0",
            labeled(vec![
                ("V0_4", tau_log(base(ScanTau, 5, 4.0, 2.0, 0.0), 12)),
                ("V0_10", tau_log(base(ScanTau, 5, 10.0, 2.0, 0.0), 12)),
            ]),
        ),
        r(
            "fig5g",
            "five wells: excited fraction vs lattice depth, 0 -> 2",
            labeled(vec![
                ("tau1", v0_range(base(ScanV0, 5, 10.0, 0.0, 2.0), 1.0)),
                ("tau10", v0_range(base(ScanV0, 5, 10.0, 0.0, 2.0), 10.0)),
            ]),
        ),
        r(
            "fig5h",
            "five wells: excited fraction vs lattice depth, 2 -> 0",
            labeled(vec![
                ("tau1", v0_range(base(ScanV0, 5, 10.0, 2.0, 0.0), 1.0)),
                ("tau10", v0_range(base(ScanV0, 5, 10.0, 2.0, 0.0), 10.0)),
            ]),
        ),
    ]
}

pub fn find(name: &str) -> Option<Recipe> {
    all().into_iter().find(|r| r.name == name)
}

pub fn names() -> Vec<&'static str> {
    all().iter().map(|r| r.name).collect()
}

/// Human-readable expansion of one recipe.
pub fn render(recipe: &Recipe) -> String {
    let mut s = format!("# {}: {}\n", recipe.name, recipe.description);
    for (label, c) in &recipe.variants {
        s.push_str(&format!("\n# variant {label}\n{}", c.to_text()));
    }
    s
}
