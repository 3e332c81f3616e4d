use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_latticequench"));
    c.env_remove("LATTICEQUENCH_OUT");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "status {:?}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn files_on_disk(dir: &Path) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_string_lossy().replace('\\', "/"));
            }
        }
    }
    out
}

const SMALL_SPECTRUM: &[&str] = &[
    "spectrum", "--V0", "4", "--bands", "1", "--K-eigen", "6", "--g-end", "1", "--g-step", "0.25",
];

#[test]
fn recipes_are_listed_and_expanded() {
    let list = ok(&run(&["recipes"]));
    for name in ["fig1a", "fig2e", "fig3c", "fig4g", "fig5f", "fig5h"] {
        assert!(list.contains(name), "{name} missing from\n{list}");
    }
    assert_eq!(list.lines().count(), 25);

    let fig3c = ok(&run(&["recipes", "fig3c"]));
    assert_eq!(fig3c.matches("mode = \"scan-gf\"").count(), 2);
    assert!(fig3c.contains("V0 = 4.0") && fig3c.contains("V0 = 10.0"));

    let fig5f = ok(&run(&["recipes", "fig5f"]));
    assert!(fig5f.contains("mode = \"scan-tau\""));
    assert!(fig5f.contains("m_wells = 5") && fig5f.contains("N = 5"));
    assert!(fig5f.contains("g_i = 2.0") && fig5f.contains("g_f = 0.0"));
}

#[test]
fn unknown_recipe_lists_valid_names() {
    let out = run(&["recipes", "fig9z"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("fig9z") && err.contains("fig1a") && err.contains("fig5h"), "{err}");
}

#[test]
fn manifest_lists_every_file_with_its_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("spec");
    let mut args = SMALL_SPECTRUM.to_vec();
    args.extend(["--out", dir.to_str().unwrap()]);
    ok(&run(&args));

    let m = manifest(&dir);
    assert_eq!(m["mode"], "spectrum");
    let listed: BTreeSet<String> = m["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["path"].as_str().unwrap().to_string())
        .collect();
    let mut on_disk = files_on_disk(&dir);
    assert!(on_disk.remove("manifest.json"));
    assert_eq!(listed, on_disk);
    for f in m["files"].as_array().unwrap() {
        let bytes = fs::read(dir.join(f["path"].as_str().unwrap())).unwrap();
        assert_eq!(f["bytes"].as_u64().unwrap(), bytes.len() as u64);
        assert_eq!(f["sha256"].as_str().unwrap(), format!("{:x}", Sha256::digest(&bytes)));
    }
    let config = fs::read(dir.join("config.toml")).unwrap();
    assert_eq!(m["config_sha256"].as_str().unwrap(), format!("{:x}", Sha256::digest(&config)));

    let spectrum = fs::read_to_string(dir.join("spectrum.csv")).unwrap();
    assert!(spectrum.starts_with("g,E_1,"));
    assert_eq!(spectrum.lines().count(), 1 + 5);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let quench = [
        "quench", "--V0", "10", "--bands", "1", "--tau", "2", "--T", "30", "--target", "1,1,1", "--seed", "7",
    ];
    for cmd in [SMALL_SPECTRUM, &quench[..]] {
        let dir = tmp.path().join(cmd[0]);
        let mut args = cmd.to_vec();
        args.extend(["--out", dir.to_str().unwrap()]);
        let snapshot = || -> Vec<(String, Vec<u8>)> {
            ok(&run(&args));
            files_on_disk(&dir).into_iter().map(|n| (n.clone(), fs::read(dir.join(&n)).unwrap())).collect()
        };
        let first = snapshot();
        let second = snapshot();
        assert!(first.len() >= 4);
        for ((n, a), (m, b)) in first.iter().zip(&second) {
            assert_eq!(n, m);
            assert!(a == b, "{n} differs between runs");
        }
    }
    let pops = fs::read_to_string(tmp.path().join("quench/populations.csv")).unwrap();
    assert!(pops.lines().next().unwrap().contains("\"1,1,1\""), "{}", pops.lines().next().unwrap());
}

#[test]
fn config_errors_exit_with_status_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "[lattice]\nV0 = 4.0\ndepth = 3\n").unwrap();
    let out = run(&["quench", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("depth"));

    let out = run(&["quench", "--tau", "9", "--T", "5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("exceeds T"));

    let out = run(&["quench", "--m-wells", "9", "--N", "12", "--bands", "4"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("exceeds the limit"));

    let out = run(&["quench", "--target", "1,1", "--bands", "1", "--T", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_with_status_three() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "spectrum", "--V0", "0.2", "--K-eigen", "4", "--g-end", "0.5", "--g-step", "0.25",
        "--out", tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("shallow lattice"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    let from_file = tmp.path().join("from-file");
    fs::write(
        &cfg,
        format!(
            "[run]\noutput = {:?}\n[lattice]\nV0 = 4.0\nbands = 1\n[quench]\ntau = 1.0\nT = 10.0\n",
            from_file.to_str().unwrap()
        ),
    )
    .unwrap();
    ok(&run(&["quench", "--config", cfg.to_str().unwrap(), "--V0", "6"]));
    let written = fs::read_to_string(from_file.join("config.toml")).unwrap();
    assert!(written.contains("mode = \"quench\""));
    assert!(written.contains("V0 = 6.0"));
    assert!(written.contains("T = 10.0"));
    let summary: Value = serde_json::from_str(&fs::read_to_string(from_file.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["V0"], 6.0);
    assert_eq!(summary["dimension"], 10);
}

#[test]
fn output_directory_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let env_dir = tmp.path().join("env");
    let flag_dir = tmp.path().join("flag");
    let out = bin()
        .args(SMALL_SPECTRUM)
        .env("LATTICEQUENCH_OUT", &env_dir)
        .output()
        .unwrap();
    ok(&out);
    assert!(env_dir.join("manifest.json").exists());

    let mut args = SMALL_SPECTRUM.to_vec();
    args.extend(["--out", flag_dir.to_str().unwrap()]);
    let out = bin().args(&args).env("LATTICEQUENCH_OUT", tmp.path().join("unused")).output().unwrap();
    ok(&out);
    assert!(flag_dir.join("manifest.json").exists());
    assert!(!tmp.path().join("unused").exists());
}

#[test]
fn tau_scan_writes_points_table_and_fits() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("tau");
    ok(&run(&[
        "scan-tau", "--V0", "10", "--T", "30", "--scan-start", "0.5", "--scan-end", "25",
        "--scan-count", "9", "--jobs", "2", "--out", dir.to_str().unwrap(),
    ]));
    let table = fs::read_to_string(dir.join("scan.csv")).unwrap();
    assert_eq!(table.lines().next().unwrap(), "tau,V0,g_i,g_f,F_mean,K,P_exc,P_exc_post");
    assert_eq!(table.lines().count(), 10);
    for i in 0..9 {
        assert!(dir.join(format!("points/{i:03}.json")).exists());
    }
    let fits: Value = serde_json::from_str(&fs::read_to_string(dir.join("fits.json")).unwrap()).unwrap();
    let models: Vec<&str> = fits["fits"].as_array().unwrap().iter().map(|f| f["model"].as_str().unwrap()).collect();
    assert_eq!(models, ["exponential", "biexponential"]);
    assert!(fits["f_test"]["p_value"].is_number());
    for f in fits["fits"].as_array().unwrap() {
        assert!(f["r_squared"].as_f64().unwrap() > 0.5, "{f}");
    }
}

#[test]
fn fit_mode_recovers_a_biexponential() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data.csv");
    let mut text = String::from("tau,P_exc\n");
    for i in 0..20 {
        let x = 0.5 * 1.3f64.powi(i);
        let y = 0.2 * (-x / 2.0).exp() + 0.05 * (-x / 30.0).exp();
        text.push_str(&format!("{x},{y}\n"));
    }
    fs::write(&data, text).unwrap();
    let dir = tmp.path().join("fit");
    ok(&run(&[
        "fit", "--fit-input", data.to_str().unwrap(), "--models", "biexponential",
        "--out", dir.to_str().unwrap(),
    ]));
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.join("fit.json")).unwrap()).unwrap();
    let p: Vec<f64> = report["fits"][0]["parameters"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    for (got, want) in p.iter().zip([0.2, 2.0, 0.05, 30.0]) {
        assert!((got - want).abs() < 1e-3 * want, "{p:?}");
    }

    let out = run(&["fit", "--fit-input", data.to_str().unwrap(), "--fit-y", "F_mean", "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("columns: tau, P_exc"));
}

#[test]
fn recipe_run_lists_nested_files() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&run(&["recipes", "fig1a", "--run", "--out", tmp.path().to_str().unwrap()]));
    let dir = tmp.path().join("fig1a");
    let listed: BTreeSet<String> = manifest(&dir)["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["path"].as_str().unwrap().to_string())
        .collect();
    let mut on_disk = files_on_disk(&dir);
    assert!(on_disk.remove("manifest.json"));
    assert_eq!(listed, on_disk);
    assert!(listed.contains("V0_4/crossings.csv"));
    let crossings = fs::read_to_string(dir.join("V0_4/crossings.csv")).unwrap();
    assert!(crossings.lines().skip(1).any(|l| l.contains(",wide,")));
}

#[test]
fn mean_field_run_writes_fidelity_and_excitation() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&run(&["mf", "--tau", "1", "--T", "4", "--out", tmp.path().to_str().unwrap()]));
    let table = fs::read_to_string(tmp.path().join("mf.csv")).unwrap();
    assert_eq!(table.lines().next().unwrap(), "t,F,P_exc");
    assert_eq!(table.lines().count(), 1 + 41);
    let first: Vec<f64> = table.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert!((first[1] - 1.0).abs() < 1e-9 && first[2].abs() < 1e-6, "{first:?}");
    let summary: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("summary.json")).unwrap()).unwrap();
    assert!(summary["P_exc"].as_f64().unwrap() >= 0.0);
}
