//! End-to-end tests of the command-line interface, driving the built binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_crjmcmc"))
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("crjmcmc_cli_tests").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "command failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn small_grid(dir: &Path) -> PathBuf {
    let path = dir.join("sim.json");
    std::fs::write(
        &path,
        r#"{
            "mu_f": [1000.0],
            "snr": [1.0],
            "n_fluorophores": [1, 2],
            "replicates": 2,
            "p_bleach": 0.05
        }"#,
    )
    .unwrap();
    path
}

fn fast_chain_config(dir: &Path) -> PathBuf {
    let path = dir.join("chain.json");
    std::fs::write(
        &path,
        r#"{
            "chain": {
                "n_iter": 600,
                "burn_in_fraction": 0.5,
                "extension": 300,
                "max_iter": 1500,
                "n_chains": 3,
                "psrf_threshold": 1.2,
                "seed": 0
            },
            "tau_frames": 10.0
        }"#,
    )
    .unwrap();
    path
}

#[test]
fn simulate_grid_counts_and_reproducibility() {
    let dir = tmp("simulate");
    let grid = small_grid(&dir);
    let out_a = dir.join("a");
    let out_b = dir.join("b");
    ok(&bin()
        .args(["simulate", "--config"])
        .arg(&grid)
        .arg("--out")
        .arg(&out_a)
        .args(["--seed", "9"])
        .output()
        .unwrap());
    // cartesian product: 1 mu_f x 1 snr x 2 counts x 2 replicates
    let csvs = std::fs::read_dir(&out_a)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .path()
                .extension()
                .is_some_and(|x| x == "csv")
        })
        .count();
    assert_eq!(csvs, 4);
    assert!(out_a.join("manifest.json").is_file());

    ok(&bin()
        .args(["simulate", "--config"])
        .arg(&grid)
        .arg("--out")
        .arg(&out_b)
        .args(["--seed", "9"])
        .output()
        .unwrap());
    for entry in std::fs::read_dir(&out_a).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_str().unwrap();
        if name == "manifest.json" {
            continue; // carries wall-clock timing
        }
        let a = std::fs::read(&path).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn simulate_rejects_malformed_config() {
    let dir = tmp("simulate_bad");
    let bad = dir.join("bad.json");
    std::fs::write(&bad, "{ \"mu_f\": [1000.0\n").unwrap();
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&bad)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("bad.json"), "{stderr}");
    assert!(
        stderr.contains(':'),
        "diagnostic should be line-anchored: {stderr}"
    );
}

#[test]
fn hyperparams_single_trace_identity_and_empty_glob() {
    let dir = tmp("hyper");
    let grid = dir.join("sim.json");
    std::fs::write(
        &grid,
        r#"{ "mu_f": [1000.0], "snr": [1.0], "n_fluorophores": [1], "replicates": 1,
             "p_bleach": 0.02, "extension_frames": [30, 60] }"#,
    )
    .unwrap();
    let traces = dir.join("traces");
    ok(&bin()
        .args(["simulate", "--config"])
        .arg(&grid)
        .arg("--out")
        .arg(&traces)
        .args(["--seed", "3"])
        .output()
        .unwrap());

    let hyper = dir.join("hyper.json");
    let pattern = format!("{}/*.csv", traces.display());
    ok(&bin()
        .args(["hyperparams", "--traces", &pattern, "--out"])
        .arg(&hyper)
        .output()
        .unwrap());
    let parsed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&hyper).unwrap()).unwrap();
    let groups = parsed["groups"].as_object().unwrap();
    assert_eq!(groups.len(), 1);
    let entry = groups.values().next().unwrap();
    assert_eq!(entry["n_traces"], 1);

    // pooling a single trace is the identity: the pooled prior means equal
    // that trace's own estimate
    let trace_path = std::fs::read_dir(&traces)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|x| x == "csv"))
        .unwrap();
    let trace = crjmcmc::io::read_trace_csv(&trace_path).unwrap();
    let dist = crjmcmc::sampler::ProposalSettings::default()
        .build(&trace)
        .unwrap();
    let est = crjmcmc::gibbs::estimate_trace_hyperparams(
        &trace,
        &dist,
        None,
        crjmcmc::gibbs::WeightScheme::InverseTraceVariance,
    );
    let eta_f = entry["hyperparams"]["eta_f"].as_f64().unwrap();
    let eta_b = entry["hyperparams"]["eta_b"].as_f64().unwrap();
    assert!(
        (eta_f - est.eta_f_hat).abs() < 1e-9,
        "{eta_f} vs {}",
        est.eta_f_hat
    );
    assert!(
        (eta_b - est.eta_b_hat).abs() < 1e-9,
        "{eta_b} vs {}",
        est.eta_b_hat
    );

    let out = bin()
        .args([
            "hyperparams",
            "--traces",
            "/nonexistent/nothing-*.csv",
            "--out",
        ])
        .arg(dir.join("none.json"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no traces match"));
}

#[test]
fn analyze_pipeline_and_worker_determinism() {
    let dir = tmp("analyze");
    let grid = small_grid(&dir);
    let traces = dir.join("traces");
    ok(&bin()
        .args(["simulate", "--config"])
        .arg(&grid)
        .arg("--out")
        .arg(&traces)
        .args(["--seed", "17"])
        .output()
        .unwrap());
    let hyper = dir.join("hyper.json");
    let pattern = format!("{}/*.csv", traces.display());
    ok(&bin()
        .args(["hyperparams", "--traces", &pattern, "--out"])
        .arg(&hyper)
        .output()
        .unwrap());

    // missing hyperparameter file is a hard error
    let out = bin()
        .args(["analyze", "--traces", &pattern, "--hyper"])
        .arg(dir.join("missing.json"))
        .arg("--out")
        .arg(dir.join("nope"))
        .output()
        .unwrap();
    assert!(!out.status.success());

    let chain_cfg = fast_chain_config(&dir);
    let run = |out_dir: &Path, workers: &str| {
        ok(&bin()
            .args(["analyze", "--traces", &pattern, "--hyper"])
            .arg(&hyper)
            .arg("--config")
            .arg(&chain_cfg)
            .arg("--out")
            .arg(out_dir)
            .args(["--seed", "5", "--workers", workers])
            .output()
            .unwrap());
    };
    let res1 = dir.join("w1");
    let res2 = dir.join("w2");
    run(&res1, "1");
    run(&res2, "2");
    let mut compared = 0;
    for entry in std::fs::read_dir(&res1).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_str().unwrap().to_string();
        if !name.ends_with(".summary.json") {
            continue;
        }
        let a = std::fs::read(&path).unwrap();
        let b = std::fs::read(res2.join(&name)).unwrap();
        assert_eq!(a, b, "{name} differs across worker counts");
        compared += 1;
    }
    assert_eq!(compared, 4);

    // summaries are structurally sane
    let any = std::fs::read_dir(&res1)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.to_str().unwrap().ends_with(".summary.json"))
        .unwrap();
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&any).unwrap()).unwrap();
    assert!(summary["mode_k"].as_u64().is_some());
    assert!(summary["frame_counts"].as_array().is_some());
}

#[test]
fn metrics_perfect_estimates_and_orphan_detection() {
    let dir = tmp("metrics");
    let grid = small_grid(&dir);
    let traces = dir.join("traces");
    ok(&bin()
        .args(["simulate", "--config"])
        .arg(&grid)
        .arg("--out")
        .arg(&traces)
        .args(["--seed", "23"])
        .output()
        .unwrap());

    // synthesise perfect summaries straight from the ground truth
    let estimates = dir.join("estimates");
    std::fs::create_dir_all(&estimates).unwrap();
    for entry in std::fs::read_dir(&traces).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_str().unwrap().to_string();
        let Some(id) = name.strip_suffix(".truth.json") else {
            continue;
        };
        let truth: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        let counts = truth["counts"].clone();
        let mu_f = truth["mu_f"].as_f64().unwrap();
        let predicted: Vec<f64> = truth["counts"]
            .as_array()
            .unwrap()
            .iter()
            .map(|n| n.as_f64().unwrap() * mu_f)
            .collect();
        let summary = serde_json::json!({
            "converged": true,
            "chain_pair": [0, 1],
            "total_iterations": 0,
            "burn_in": 0,
            "mode_k": truth["change_points"].as_array().unwrap().len(),
            "k_t": 0,
            "change_points": truth["change_points"],
            "mu_f": { "mean": mu_f, "ci_low": mu_f, "ci_high": mu_f },
            "mu_b": { "mean": 0.0, "ci_low": 0.0, "ci_high": 0.0 },
            "sigma_f2": { "mean": truth["sigma_f2"], "ci_low": 0.0, "ci_high": 0.0 },
            "sigma_b2": { "mean": truth["sigma_b2"], "ci_low": 0.0, "ci_high": 0.0 },
            "frame_counts": counts,
            "predicted_intensity": predicted,
        });
        std::fs::write(
            estimates.join(format!("{id}.summary.json")),
            serde_json::to_string_pretty(&summary).unwrap(),
        )
        .unwrap();
    }

    let out_csv = dir.join("metrics.csv");
    ok(&bin()
        .args(["metrics", "--estimates"])
        .arg(&estimates)
        .arg("--truth")
        .arg(&traces)
        .arg("--out")
        .arg(&out_csv)
        .output()
        .unwrap());
    let text = std::fs::read_to_string(&out_csv).unwrap();
    let mut data_rows = 0;
    for line in text.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        if cells[0] == "mean" || cells[0] == "ci95" {
            continue;
        }
        data_rows += 1;
        assert_eq!(cells[2], "1", "accuracy should be exactly 1: {line}");
        assert_eq!(cells[7], "0", "rmse should be exactly 0: {line}");
    }
    assert_eq!(data_rows, 4);

    // orphaned IDs are an error that names the offender
    std::fs::remove_file(
        std::fs::read_dir(&estimates)
            .unwrap()
            .next()
            .unwrap()
            .unwrap()
            .path(),
    )
    .unwrap();
    let out = bin()
        .args(["metrics", "--estimates"])
        .arg(&estimates)
        .arg("--truth")
        .arg(&traces)
        .arg("--out")
        .arg(dir.join("broken.csv"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("do not match"), "{stderr}");
    assert!(stderr.contains("trace_mu1000"), "{stderr}");
}

#[test]
fn malformed_trace_csv_reports_position() {
    let dir = tmp("badcsv");
    let trace = dir.join("broken.csv");
    std::fs::write(
        &trace,
        "frame,time,intensity\n0,0.5,10\n1,1.5,not_a_number\n",
    )
    .unwrap();
    let hyper = dir.join("hyper.json");
    let pattern = format!("{}/*.csv", dir.display());
    let out = bin()
        .args(["hyperparams", "--traces", &pattern, "--out"])
        .arg(&hyper)
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("broken.csv"), "{stderr}");
    assert!(stderr.contains(":3:"), "line anchor missing: {stderr}");
    assert!(stderr.contains("not_a_number"), "{stderr}");
}
