//! End-to-end checks of the command-line pipeline, including the
//! coverage-harness reproduction path and exit codes.

use invopt::experiment::{chain_seed, dataset_seed, CoverageReport};
use std::path::Path;
use std::process::Command;

fn invopt() -> Command {
    Command::new(env!("CARGO_BIN_EXE_invopt"))
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().expect("spawn invopt");
    assert!(
        out.status.success(),
        "command failed: {:?}\nstdout: {}\nstderr: {}",
        cmd,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn gen_data_round_trip_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for out in [&a, &b] {
        run_ok(invopt().args([
            "gen-data",
            "--family",
            "qp",
            "--error",
            "objective",
            "--n",
            "5",
            "--N",
            "100",
            "--kappa",
            "10",
            "--seed",
            "7",
            "--out",
            out.to_str().unwrap(),
        ]));
    }
    let bytes_a = std::fs::read(&a).unwrap();
    let bytes_b = std::fs::read(&b).unwrap();
    assert_eq!(bytes_a, bytes_b, "gen-data is not bitwise reproducible");

    let ds = invopt::datagen::Dataset::load(&a).unwrap();
    assert_eq!(ds.len(), 100);
    assert_eq!(ds.dim(), 5);
    assert_eq!(ds.to_json().unwrap().as_bytes(), bytes_a.as_slice());
}

#[test]
fn gen_instance_writes_schema() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("inst.json");
    run_ok(invopt().args([
        "gen-instance",
        "--family",
        "lp",
        "--n",
        "3",
        "--m",
        "4",
        "--seed",
        "3",
        "--out",
        path.to_str().unwrap(),
    ]));
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with(r#"{"kind":"lp","A":"#), "schema drifted: {text}");
    let inst: invopt::forward::ForwardInstance = serde_json::from_str(&text).unwrap();
    assert_eq!(inst.dim(), 3);
}

fn run_chain_cli(data: &Path, algorithm: &str, seed: u64, out: &Path) {
    run_ok(invopt().args([
        "run-chain",
        "--data",
        data.to_str().unwrap(),
        "--algorithm",
        algorithm,
        "--chains",
        "2",
        "--block-size",
        "800",
        "--max-iters",
        "1600",
        "--seed",
        &seed.to_string(),
        "--out",
        out.to_str().unwrap(),
    ]));
}

#[test]
fn chain_region_contains_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.json");
    run_ok(invopt().args([
        "gen-data", "--family", "qp", "--error", "objective", "--n", "3", "--N", "60",
        "--kappa", "10", "--seed", "21", "--out", data.to_str().unwrap(),
    ]));

    let traces = dir.path().join("traces");
    run_chain_cli(&data, "2", 22, &traces);
    assert!(traces.join("chain_0.csv").exists());
    assert!(traces.join("chain_1.csv").exists());
    let diag: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(traces.join("diagnostics.json")).unwrap())
            .unwrap();
    assert_eq!(diag["algorithm"], 2);
    assert!(diag["psrf_final"].as_f64().unwrap() > 0.0);

    let region = dir.path().join("r.json");
    run_ok(invopt().args([
        "region",
        "--trace",
        traces.to_str().unwrap(),
        "--alpha",
        "0.05",
        "--out",
        region.to_str().unwrap(),
    ]));
    let parsed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&region).unwrap()).unwrap();
    for key in ["mean_dir", "tangent_mean", "cov", "q", "alpha", "epsilon"] {
        assert!(parsed.get(key).is_some(), "region JSON missing {key}");
    }

    // the posterior concentrates around theta* = e/sqrt(3) at N=60
    let inside = run_ok(invopt().args([
        "contains", "--region", region.to_str().unwrap(), "--theta", "1,1,1",
    ]));
    assert_eq!(inside.trim(), "true");
    let outside = run_ok(invopt().args([
        "contains", "--region", region.to_str().unwrap(), "--theta", "-1,0.1,0",
    ]));
    assert_eq!(outside.trim(), "false");

    let rms: serde_json::Value = serde_json::from_str(&run_ok(invopt().args([
        "alpha-rms", "--trace", traces.to_str().unwrap(),
    ])))
    .unwrap();
    assert!(rms["radians"].as_f64().unwrap() > 0.0);
    assert!(
        (rms["degrees"].as_f64().unwrap()
            - rms["radians"].as_f64().unwrap().to_degrees())
        .abs()
            < 1e-12
    );

    let psrf: serde_json::Value = serde_json::from_str(&run_ok(invopt().args([
        "psrf", "--trace", traces.to_str().unwrap(),
    ])))
    .unwrap();
    assert_eq!(psrf["per_param"].as_array().unwrap().len(), 4); // 3 coords + log nuisance
    assert!(psrf["max_psrf"].as_f64().unwrap() >= 1.0);
}

#[test]
fn coverage_harness_membership_reproduced_via_cli() {
    let dir = tempfile::tempdir().unwrap();
    let master = 31u64;
    let exp = serde_json::json!({
        "family": "qp",
        "algorithm": 2,
        "n": 3,
        "N": 50,
        "noise_param": 10.0,
        "alpha": 0.05,
        "replications": 1,
        "seed": master,
        "chain": {"n_chains": 2, "block_size": 800, "max_iters": 1600}
    });
    let cfg_path = dir.path().join("exp.json");
    std::fs::write(&cfg_path, exp.to_string()).unwrap();
    let report_path = dir.path().join("report.json");
    run_ok(invopt().args([
        "coverage",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        report_path.to_str().unwrap(),
    ]));
    let report =
        CoverageReport::from_json(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report.replications, 1);
    let recorded = report.per_replication[0].contained;

    // reproduce replication 0 stage by stage through the CLI
    let data = dir.path().join("rep0.json");
    run_ok(invopt().args([
        "gen-data", "--family", "qp", "--error", "objective", "--n", "3", "--N", "50",
        "--kappa", "10",
        "--seed", &dataset_seed(master, 0).to_string(),
        "--out", data.to_str().unwrap(),
    ]));
    let traces = dir.path().join("rep0_traces");
    run_chain_cli(&data, "2", chain_seed(master, 0), &traces);
    let region = dir.path().join("rep0_region.json");
    run_ok(invopt().args([
        "region", "--trace", traces.to_str().unwrap(), "--alpha", "0.05",
        "--out", region.to_str().unwrap(),
    ]));
    let inside = run_ok(invopt().args([
        "contains", "--region", region.to_str().unwrap(), "--theta", "1,1,1",
    ]));
    assert_eq!(
        inside.trim() == "true",
        recorded,
        "CLI pipeline disagrees with the coverage harness"
    );

    // recount invariant
    let recount = report.per_replication.iter().filter(|r| r.contained).count() as f64
        / report.replications as f64;
    assert_eq!(report.coverage, recount);
}

#[test]
fn coverage_reports_identical_across_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let exp = serde_json::json!({
        "family": "qp",
        "algorithm": 2,
        "n": 3,
        "N": 40,
        "noise_param": 10.0,
        "replications": 3,
        "seed": 77,
        "chain": {"n_chains": 2, "block_size": 800, "max_iters": 1600}
    });
    let cfg_path = dir.path().join("exp.json");
    std::fs::write(&cfg_path, exp.to_string()).unwrap();

    let mut normalized = Vec::new();
    for jobs in ["1", "2"] {
        let out = dir.path().join(format!("report_{jobs}.json"));
        run_ok(invopt().args([
            "coverage",
            "--config",
            cfg_path.to_str().unwrap(),
            "--jobs",
            jobs,
            "--out",
            out.to_str().unwrap(),
        ]));
        let mut report =
            CoverageReport::from_json(&std::fs::read_to_string(&out).unwrap()).unwrap();
        report.wall_clock_s = 0.0;
        normalized.push(report.to_json().unwrap());
    }
    assert_eq!(normalized[0], normalized[1]);
}

#[test]
fn emit_hist_writes_angular_counts() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d2.json");
    run_ok(invopt().args([
        "gen-data", "--family", "qp", "--error", "objective", "--n", "2", "--N", "40",
        "--kappa", "10", "--seed", "5", "--out", data.to_str().unwrap(),
    ]));
    let traces = dir.path().join("traces2");
    run_chain_cli(&data, "2", 6, &traces);
    let region = dir.path().join("r2.json");
    let hist = dir.path().join("hist.csv");
    run_ok(invopt().args([
        "region", "--trace", traces.to_str().unwrap(), "--alpha", "0.05",
        "--out", region.to_str().unwrap(),
        "--emit-hist", hist.to_str().unwrap(),
        "--hist-bins", "36",
    ]));
    let text = std::fs::read_to_string(&hist).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("angle_radians,count"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 36);
    let total: usize = rows
        .iter()
        .map(|r| r.split(',').nth(1).unwrap().parse::<usize>().unwrap())
        .sum();
    // every pooled post-warm-up sample lands in exactly one bin
    let pooled: usize = ["chain_0.csv", "chain_1.csv"]
        .iter()
        .map(|name| {
            std::fs::read_to_string(traces.join(name))
                .unwrap()
                .lines()
                .count()
                - 1
        })
        .sum();
    assert_eq!(total, pooled);
}

#[test]
fn exit_codes() {
    // unknown flag -> usage error 1
    let out = invopt().args(["gen-data", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    // missing --seed on run-chain -> usage error 1
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.json");
    run_ok(invopt().args([
        "gen-data", "--family", "qp", "--error", "objective", "--n", "2", "--N", "5",
        "--kappa", "10", "--seed", "5", "--out", data.to_str().unwrap(),
    ]));
    let out = invopt()
        .args([
            "run-chain", "--data", data.to_str().unwrap(), "--algorithm", "2",
            "--out", dir.path().join("t").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    // missing input file -> runtime error 2
    let out = invopt()
        .args([
            "run-chain", "--data", "/nonexistent.json", "--algorithm", "2",
            "--seed", "1", "--out", dir.path().join("t2").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // algorithm 2 on decision-model data: observations are off the
    // boundary, so the recovery step fails -> runtime error 2
    let noisy = dir.path().join("noisy.json");
    run_ok(invopt().args([
        "gen-data", "--family", "qp", "--error", "decision", "--n", "2", "--N", "5",
        "--sigma2", "0.5", "--seed", "8", "--out", noisy.to_str().unwrap(),
    ]));
    let out = invopt()
        .args([
            "run-chain", "--data", noisy.to_str().unwrap(), "--algorithm", "2",
            "--seed", "1", "--out", dir.path().join("t3").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("boundary"), "stderr: {stderr}");

    // help -> 0
    let out = invopt().args(["--help"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}
