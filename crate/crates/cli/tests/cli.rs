use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn susd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_susd"))
        .args(args)
        .env_remove("SUSD_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn read_dir(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn analytic_to_stdout() {
    let o = susd(&["analytic", "--s", "0.25"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("s,state,mu,k,p_analytic,"));
    assert!(text.contains("\ns,p_succ_analytic,p_succ_mean,p_succ_std,p_succ_env_min,p_succ_env_max\n0.25,0.25,,,,\n"));
}

#[test]
fn analytic_at_zero_overlap_succeeds_surely() {
    let o = susd(&["analytic", "--s", "0", "--format", "json"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("\"p_succ_analytic\": 1.0"), "{text}");
}

#[test]
fn csv_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = susd(&["analytic", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let names: Vec<String> = read_dir(&out).into_iter().map(|(n, _)| n).collect();
    assert_eq!(names, ["detectors.csv", "metadata.json", "success.csv"]);
    let meta = fs::read_to_string(out.join("metadata.json")).unwrap();
    assert!(meta.contains("\"grid_source\": \"illustrative_default\""));
    assert!(meta.contains("\"config_hash\""));
    let det = fs::read_to_string(out.join("detectors.csv")).unwrap();
    assert_eq!(det.lines().count(), 1 + 7 * 2 * 9);
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"s_grid": [0.1, 0.2], "seed": 3, "alice_policy": "minus"}"#).unwrap();
    let o = susd(&["analytic", "--config", cfg.to_str().unwrap(), "--seed", "11", "--format", "json"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("\"seed\": 11"));
    assert!(text.contains("\"grid_source\": \"user\""));
    assert!(!text.contains("\"state\": \"+\""));
}

#[test]
fn env_seed_is_a_fallback() {
    let o = Command::new(env!("CARGO_BIN_EXE_susd"))
        .args(["analytic", "--s", "0.5", "--format", "json"])
        .env("SUSD_SEED", "77")
        .output()
        .unwrap();
    assert!(stdout(&o).contains("\"seed\": 77"));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"s_grid": [0.1], "colour": "red"}"#).unwrap();
    assert_eq!(susd(&["analytic", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(susd(&["analytic", "--s", "1.5"]).status.code(), Some(2));
    assert_eq!(susd(&["analytic", "--s-grid", "0.1,abc"]).status.code(), Some(2));
    assert_eq!(susd(&["analytic", "--config", "/nonexistent/c.json"]).status.code(), Some(2));
}

#[test]
fn validate_passes_and_reports_each_check() {
    let o = susd(&["validate"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 10);
    assert!(text.lines().all(|l| l.starts_with("PASS ") && l.contains("deviation=")));
}

#[test]
fn injected_plate_error_fails_validation() {
    let o = susd(&["validate", "--inject-bob-cw-error", "5"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).lines().any(|l| l.starts_with("FAIL optics_kraus")));
}

#[test]
fn simulate_and_montecarlo_are_byte_reproducible_across_workers() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["simulate", "montecarlo"] {
        let mut outputs = Vec::new();
        for (run, workers) in [(0, "1"), (1, "4"), (2, "4")] {
            let out = dir.path().join(format!("{cmd}-{run}"));
            let o = susd(&[
                cmd,
                "--s-grid",
                "0.2,0.6",
                "--trials",
                "20000",
                "--seed",
                "5",
                "--workers",
                workers,
                "--out",
                out.to_str().unwrap(),
            ]);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
            outputs.push(read_dir(&out));
        }
        assert_eq!(outputs[0], outputs[1], "{cmd}");
        assert_eq!(outputs[1], outputs[2], "{cmd}");
    }
}
