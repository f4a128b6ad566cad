//! End-to-end runs of the `nsgmm` binary.

#![allow(clippy::needless_range_loop)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nsgmm::mc::{parse_results, RESULTS_HEADER};

fn nsgmm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nsgmm"))
        .args(args)
        .output()
        .expect("spawn nsgmm")
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

#[test]
fn solve_two_point_ivqr() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("two.csv");
    std::fs::write(&csv, "y,D,W\n0,1,0\n1,-1,0\n").unwrap();
    let v = json(&nsgmm(&["solve", "ivqr", "--data", path_str(&csv), "--tau", "0.5"]));
    // Best pattern leaves ḡ = (0, ±½, 0).
    assert!((v["q_hat"].as_f64().unwrap() - 0.25).abs() < 1e-15);
    assert_eq!(v["weight"]["kind"], "identity");
}

#[test]
fn solve_rejects_empty_file() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("empty.csv");
    std::fs::write(&csv, "").unwrap();
    assert_eq!(
        nsgmm(&["solve", "ivqr", "--data", path_str(&csv), "--tau", "0.5"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(nsgmm(&["solve", "ivqr", "--tau", "0.5"]).status.code(), Some(1));
}

/// Inverse of a 3×3 matrix by cofactors.
fn inverse3(m: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let c = |r: usize, s: usize| {
        let (r1, r2) = ((r + 1) % 3, (r + 2) % 3);
        let (s1, s2) = ((s + 1) % 3, (s + 2) % 3);
        m[r1][s1] * m[r2][s2] - m[r1][s2] * m[r2][s1]
    };
    let det: f64 = (0..3).map(|k| m[0][k] * c(0, k)).sum();
    let mut out = [[0.0; 3]; 3];
    for r in 0..3 {
        for s in 0..3 {
            out[r][s] = c(s, r) / det;
        }
    }
    out
}

#[test]
fn solve_tau_scaled_weight() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("d.csv");
    let rows = [
        (0.3, 1.2, -0.4),
        (1.1, -0.7, 0.9),
        (-0.5, 0.2, 1.5),
        (2.0, 1.9, 0.1),
        (0.7, -1.3, -1.1),
    ];
    let mut text = String::from("y,D,W\n");
    for (y, d, w) in rows {
        text.push_str(&format!("{y},{d},{w}\n"));
    }
    std::fs::write(&csv, text).unwrap();
    let v = json(&nsgmm(&[
        "solve",
        "ivqr",
        "--data",
        path_str(&csv),
        "--tau",
        "0.5",
        "--weight",
        "tau-scaled",
    ]));
    let mut s = [[0.0; 3]; 3];
    for (_, d, w) in rows {
        let z = [1.0, d, w];
        for r in 0..3 {
            for c in 0..3 {
                s[r][c] += 0.25 * z[r] * z[c] / rows.len() as f64;
            }
        }
    }
    let want = inverse3(s);
    for r in 0..3 {
        for c in 0..3 {
            let got = v["weight"]["matrix"][r][c].as_f64().unwrap();
            assert!(
                (got - want[r][c]).abs() <= 1e-10 * want[r][c].abs().max(1.0),
                "({r},{c})"
            );
        }
    }
}

const SMALL_CONFIG: &str = r#"{
  "scenarios": [
    {"id": "loc", "model": "location", "family": "g1", "tau": 0.3, "pipeline": "one-step",
     "weight": "identity", "n_grid": [50, 100, 200], "reps": 20, "base_seed": 7},
    {"id": "iv", "model": "ivqr", "tau": 0.5, "delta": 0.0, "pipeline": "one-step",
     "weight": "tau-scaled", "n_grid": [20, 40, 80], "reps": 20, "base_seed": 8}
  ]
}
"#;

#[test]
fn simulate_is_reproducible_and_records_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, SMALL_CONFIG).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (out, threads) in [(&a, "1"), (&b, "3")] {
        let o = nsgmm(&[
            "simulate",
            "--config",
            path_str(&cfg),
            "--out",
            path_str(out),
            "--reps",
            "10",
            "--threads",
            threads,
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let ra = std::fs::read(a.join("results.csv")).unwrap();
    assert_eq!(ra, std::fs::read(b.join("results.csv")).unwrap());
    assert_eq!(
        std::fs::read(a.join("raw_iv.csv")).unwrap(),
        std::fs::read(b.join("raw_iv.csv")).unwrap()
    );
    let rows = parse_results(std::str::from_utf8(&ra).unwrap()).unwrap();
    // One location component plus two IVQR components per n.
    assert_eq!(rows.len(), 3 + 6);
    assert!(rows.iter().all(|r| r.reps == 10));
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["overrides"]["reps"], 10);
    assert_eq!(manifest["rng_id"], nsgmm::sampling::RNG_ID);
    assert_eq!(manifest["artifact_version"], nsgmm::mc::ARTIFACT_VERSION);

    // rates and report on the same run.
    assert!(
        nsgmm(&["rates", "--in", path_str(&a.join("results.csv")), "--out", path_str(&a)])
            .status
            .success()
    );
    assert!(a.join("decay_loc.csv").is_file());
    assert!(a.join("decay_iv.csv").is_file());
    assert!(nsgmm(&["report", "--run", path_str(&a)]).status.success());
    let first = std::fs::read(a.join("report.md")).unwrap();
    assert!(nsgmm(&["report", "--run", path_str(&a)]).status.success());
    assert_eq!(first, std::fs::read(a.join("report.md")).unwrap());
}

#[test]
fn malformed_config_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, "{\n  \"scenarios\": [\n    {\"id\": \"x\",, }\n  ]\n}\n").unwrap();
    let o = nsgmm(&["simulate", "--config", path_str(&cfg), "--out", path_str(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.json:3:"), "{err}");

    std::fs::write(
        &cfg,
        SMALL_CONFIG.replace("\"base_seed\": 8", "\"base_seed\": 8, \"colour\": 1"),
    )
    .unwrap();
    assert_eq!(
        nsgmm(&["simulate", "--config", path_str(&cfg), "--out", path_str(dir.path())])
            .status
            .code(),
        Some(1)
    );
}

fn results_file(dir: &Path, id: &str, series: &[(usize, f64)]) -> PathBuf {
    let mut text = RESULTS_HEADER.join(",") + "\n";
    for &(n, v) in series {
        text.push_str(&format!(
            "{id},location,g1,0.1,,identity,two-step,{n},2000,0,0,0,0,{v},{v},1,{},{}\n",
            nsgmm::sampling::RNG_ID,
            nsgmm::mc::ARTIFACT_VERSION
        ));
    }
    let p = dir.join(format!("{id}.csv"));
    std::fs::write(&p, text).unwrap();
    p
}

fn classification(rates: &Path) -> String {
    let rows = nsgmm::cli::read_rates(rates).unwrap();
    assert_eq!(rows.len(), 1);
    rows[0].classification.clone()
}

#[test]
fn rates_classify_synthetic_and_published_series() {
    let dir = tempfile::tempdir().unwrap();
    let grid = [200, 400, 800, 1600, 3200, 6400];

    let input = results_file(dir.path(), "cn", &grid.map(|n| (n, 3.0 / n as f64)));
    let out = dir.path().join("cn_out");
    assert!(nsgmm(&["rates", "--in", path_str(&input), "--out", path_str(&out)])
        .status
        .success());
    assert_eq!(classification(&out.join("rates.csv")), "ROOT_N");

    let published = [0.1115, 0.0787, 0.0471, 0.0261, 0.0152, 0.0089];
    let series: Vec<(usize, f64)> = grid.iter().copied().zip(published).collect();
    let input = results_file(dir.path(), "t1", &series);
    let out = dir.path().join("t1_out");
    assert!(nsgmm(&["rates", "--in", path_str(&input), "--out", path_str(&out)])
        .status
        .success());
    assert_eq!(classification(&out.join("rates.csv")), "CUBE_ROOT");

    let input = results_file(dir.path(), "one", &[(200, 0.1)]);
    assert_eq!(
        nsgmm(&["rates", "--in", path_str(&input), "--out", path_str(dir.path())])
            .status
            .code(),
        Some(1)
    );

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "scenario_id,n\nx,1\n").unwrap();
    assert_eq!(
        nsgmm(&["rates", "--in", path_str(&bad), "--out", path_str(dir.path())])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn report_needs_inputs() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(nsgmm(&["report", "--run", path_str(dir.path())]).status.code(), Some(1));
}

#[test]
fn dump_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d.csv");
    let o = nsgmm(&[
        "dump",
        "--dgp",
        "location",
        "--family",
        "g3",
        "--n",
        "7",
        "--seed",
        "4",
        "--out",
        path_str(&out),
    ]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("y,x1,x2,x3,x4,x5\n"));
    assert_eq!(text.lines().count(), 8);
    let o = nsgmm(&["dump", "--dgp", "ivqr", "--delta", "0.6", "--n", "5", "--seed", "4"]);
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("y,D,W\n"));
    // Dumped data solve cleanly.
    let v = json(&nsgmm(&[
        "solve",
        "location",
        "--data",
        path_str(&out),
        "--tau",
        "0.3",
        "--family",
        "g3",
    ]));
    assert!(v["q_hat"].as_f64().unwrap() >= 0.0);
}

#[test]
fn pseudo_true_correct_median() {
    let v = json(&nsgmm(&[
        "pseudo-true",
        "--model",
        "ivqr",
        "--tau",
        "0.5",
        "--delta",
        "0",
    ]));
    let t = &v["theta_star"];
    assert!((t[0].as_f64().unwrap() - 1.0).abs() < 1e-4 && (t[1].as_f64().unwrap() - 1.0).abs() < 1e-4);
}

#[test]
fn bundled_configs_parse() {
    let t1 = nsgmm::cli::parse_config(
        &std::fs::read_to_string(config_path("paper_table1_desk.json")).unwrap(),
        "t1",
    )
    .unwrap();
    assert_eq!(t1.scenarios.len(), 24);
    // Both pipelines: 4 families × 3 τ × 5 n for each.
    let rows: usize = t1.scenarios.iter().map(|s| s.n_grid.len()).sum();
    assert_eq!(rows, 2 * 4 * 3 * 5);
    let t3 = nsgmm::cli::parse_config(
        &std::fs::read_to_string(config_path("paper_table3_desk.json")).unwrap(),
        "t3",
    )
    .unwrap();
    assert_eq!(t3.scenarios.len(), 6);
    assert!(nsgmm::cli::parse_config(
        &std::fs::read_to_string(config_path("paper_full.json")).unwrap(),
        "full"
    )
    .is_ok());
}

#[test]
fn table1_desk_row_count() {
    let dir = tempfile::tempdir().unwrap();
    let o = nsgmm(&[
        "simulate",
        "--config",
        path_str(&config_path("paper_table1_desk.json")),
        "--out",
        path_str(dir.path()),
        "--reps",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = nsgmm::mc::read_results(&dir.path().join("results.csv")).unwrap();
    assert_eq!(rows.len(), 120);
}
