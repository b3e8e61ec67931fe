use std::path::Path;

use fomcert_workbench::cli::{run_cli, EXIT_CONFIG, EXIT_EPSILON, EXIT_OK};
use fomcert_workbench::config::{parse_theory, ConfigError, ExperimentConfig};
use fomcert_core::bounds::TheoryParams;

const FLOW: &str = r#"{
  "seed": 3,
  "generator": { "kind": "network_flow", "n_supply": 3, "n_demand": 2, "edge_prob": 1.0 },
  "algorithm": { "name": "pdhg" },
  "verify": { "kmax": 10 },
  "baseline": { "samples": 50 }
}"#;

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn malformed_json_reports_line_and_column() {
    let err = ExperimentConfig::from_json("{\n  \"seed\": 1,\n  \"verify\": {\"kmax\" 3}\n}", "cfg.json").unwrap_err();
    match err {
        ConfigError::Parse { line, column, .. } => assert_eq!((line, column), (3, 21)),
        e => panic!("unexpected {e}"),
    }
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.json", "{ \"seed\": }");
    assert_eq!(run_cli(["fomcert", "verify", "--config", &cfg]), EXIT_CONFIG);
}

#[test]
fn config_validation() {
    assert!(matches!(ExperimentConfig::from_json("{}", "x"), Err(ConfigError::Invalid(_))));
    let typo = FLOW.replace("\"kmax\"", "\"k_max\"");
    assert!(matches!(ExperimentConfig::from_json(&typo, "x"), Err(ConfigError::Parse { .. })));
    let zero = FLOW.replace("\"samples\": 50", "\"samples\": 0");
    assert!(ExperimentConfig::from_json(&zero, "x").is_err());
    assert!(ExperimentConfig::from_json(FLOW, "x").is_ok());
}

#[test]
fn theory_strings() {
    assert_eq!(parse_theory("none", 1.0).unwrap(), None);
    assert_eq!(parse_theory("contractive:0.5", 2.0).unwrap(), Some(TheoryParams::Contractive { beta: 0.5, r: 2.0 }));
    assert_eq!(parse_theory("averaged:2:0.5", 1.0).unwrap(), Some(TheoryParams::Averaged { d: 2.0, q: 0.5, r: 1.0 }));
    assert!(parse_theory("contractive:1.5", 1.0).is_err());
    assert!(parse_theory("bogus", 1.0).is_err());
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "alphas.txt", "1.0 0.5\n0.25");
    assert_eq!(parse_theory(&format!("user:{f}"), 1.0).unwrap(), Some(TheoryParams::User { alphas: vec![1.0, 0.5, 0.25] }));
}

#[test]
fn verify_writes_one_row_per_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "flow.json", FLOW);
    let out = dir.path().join("r.csv");
    let cuts = dir.path().join("models");
    let code = run_cli([
        "fomcert", "verify", "--config", &cfg, "--kmax", "10", "--out", &out.display().to_string(),
        "--dump-model", &cuts.display().to_string(),
    ]);
    assert_eq!(code, EXIT_OK);
    let mut rdr = csv::Reader::from_path(&out).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 10);
    let head = rdr.headers().unwrap().clone();
    let col = |name: &str| head.iter().position(|h| h == name).unwrap();
    for r in &rows {
        let bound: f64 = r[col("best_bound")].parse().unwrap();
        let sm: f64 = r[col("sample_max")].parse().unwrap();
        assert!(bound >= sm);
    }
    assert!(cuts.join("vp_10.lp").exists());
}

#[test]
fn epsilon_violation_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "flow.json", FLOW);
    assert_eq!(run_cli(["fomcert", "verify", "--config", &cfg, "--kmax", "2", "--epsilon", "1e-3"]), EXIT_EPSILON);
    assert_eq!(run_cli(["fomcert", "verify", "--config", &cfg, "--kmax", "2", "--epsilon", "100"]), EXIT_OK);
}

#[test]
fn generate_and_sample_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "flow.json", FLOW);
    let fam = dir.path().join("family.json");
    assert_eq!(run_cli(["fomcert", "generate", "--config", &cfg, "--out", &fam.display().to_string()]), EXIT_OK);
    let inline = r#"{ "family": "family.json", "verify": { "kmax": 4 }, "baseline": { "samples": 20 } }"#;
    let cfg2 = write(dir.path(), "from_file.json", inline);
    let sm = dir.path().join("sm.csv");
    assert_eq!(run_cli(["fomcert", "sample", "--config", &cfg2, "--out", &sm.display().to_string()]), EXIT_OK);
    let text = std::fs::read_to_string(&sm).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert_eq!(run_cli(["fomcert", "sample", "--config", "/nonexistent.json"]), EXIT_CONFIG);
}
