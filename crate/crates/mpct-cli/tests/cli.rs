//! End-to-end CLI checks: exit codes, schema rejection and byte-identical
//! outputs for identical config + seed.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mpct"))
}

fn example_config(out_dir: &Path, extra: &str) -> String {
    format!(
        r#"{{
  "schema": 1,
  "system": {{
    "a": [[1.0, 1.0], [0.0, 1.0]],
    "b": [[0.5], [1.0]],
    "c": [[1.0, 0.0]],
    "d": [[0.0]]
  }},
  "constraints": {{
    "F": [[1,0,0],[-1,0,0],[0,1,0],[0,-1,0],[0,0,1],[0,0,-1]],
    "g": [10.0, 10.0, 2.0, 2.0, 0.5, 0.5]
  }},
  "weights": {{
    "q": [[100.0, 0.0], [0.0, 100.0]],
    "r": [[1.0]],
    "s": [[1000.0]]
  }},
  "sigma": 0.99,
  "horizon": 5,
  {extra}
  "schedule": {{"setpoints": [{{"at": 0, "y": [2.0]}}]}},
  "run": {{"steps": 15, "x0": [0.0, 0.0], "seed": 11}},
  "output_dir": "{}"
}}"#,
        out_dir.display()
    )
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("mpct-cli-test-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn missing_config_exits_one() {
    let status = bin()
        .args(["design", "--config", "/nonexistent/config.json"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn unknown_keys_exit_one() {
    let dir = tmp_dir("badkey");
    let cfg = dir.join("bad.json");
    fs::write(
        &cfg,
        example_config(&dir, r#""formulations": ["LIN_MPCT"], "mystery_key": 1,"#),
    )
    .unwrap();
    let status = bin()
        .args(["design", "--config", cfg.to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn certified_design_exits_zero() {
    let dir = tmp_dir("design");
    let cfg = dir.join("cfg.json");
    fs::write(&cfg, example_config(&dir, r#""formulations": ["LIN_MPCT"],"#)).unwrap();
    let status = bin()
        .args(["design", "--config", cfg.to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(dir.join("design.json").exists());
    assert!(dir.join("validation.json").exists());
    assert!(dir.join("tracking_set.json").exists());
}

#[test]
fn zero_state_weight_is_uncertified() {
    let dir = tmp_dir("uncert");
    let cfg = dir.join("cfg.json");
    let text = example_config(&dir, r#""formulations": ["EQU_MPCT"],"#)
        .replace("[[100.0, 0.0], [0.0, 100.0]]", "[[0.0, 0.0], [0.0, 0.0]]");
    fs::write(&cfg, text).unwrap();
    let status = bin()
        .args(["design", "--config", cfg.to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    let validation = fs::read_to_string(dir.join("validation.json")).unwrap();
    assert!(validation.contains("\"certified\": false"));
}

#[test]
fn unreachable_classical_reference_exits_two() {
    let dir = tmp_dir("unreach");
    let cfg = dir.join("cfg.json");
    let text = example_config(&dir, r#""formulations": ["STAN"],"#)
        .replace(r#""y": [2.0]"#, r#""y": [12.0]"#);
    fs::write(&cfg, text).unwrap();
    let status = bin()
        .args(["design", "--config", cfg.to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn simulate_outputs_are_byte_identical_across_runs() {
    let dir_a = tmp_dir("det-a");
    let dir_b = tmp_dir("det-b");
    for dir in [&dir_a, &dir_b] {
        let cfg = dir.join("cfg.json");
        fs::write(&cfg, example_config(dir, r#""formulations": ["LIN_MPCT"],"#)).unwrap();
        let status = bin()
            .args(["simulate", "--config", cfg.to_str().unwrap()])
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
    }
    let a = fs::read(dir_a.join("trace_LIN_MPCT.csv")).unwrap();
    let b = fs::read(dir_b.join("trace_LIN_MPCT.csv")).unwrap();
    assert_eq!(a, b, "trace CSVs differ between identical runs");
}

#[test]
fn shipped_example_configs_pass_schema_validation() {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(configs).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let text = fs::read_to_string(&path).unwrap();
        let cfg: mpct::schema::ExperimentConfig = serde_json::from_str(&text)
            .unwrap_or_else(|e| panic!("{} failed to parse: {e}", path.display()));
        cfg.validate()
            .unwrap_or_else(|e| panic!("{} failed validation: {e}", path.display()));
        seen += 1;
    }
    assert!(seen >= 7, "expected the shipped configs, found {seen}");
}

#[test]
fn solve_dumps_a_program_and_solution() {
    let dir = tmp_dir("solve");
    let cfg = dir.join("cfg.json");
    fs::write(&cfg, example_config(&dir, r#""formulations": ["EQU_MPCT"],"#)).unwrap();
    let status = bin()
        .args(["solve", "--config", cfg.to_str().unwrap(), "--dump-qp"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(dir.join("program_EQU_MPCT.json").exists());
    let sol = fs::read_to_string(dir.join("solution_EQU_MPCT.json")).unwrap();
    assert!(sol.contains("\"status\": \"Solved\""));
}
