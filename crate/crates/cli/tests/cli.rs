//! End-to-end tests of the `bellopt` binary: every subcommand, the artifact
//! formats, the documented exit codes, and the determinism guarantee.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bellopt() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bellopt"))
}

fn run(cmd: &mut Command) -> (i32, String, String) {
    let Output { status, stdout, stderr } = cmd.output().expect("spawning bellopt");
    (
        status.code().expect("exit code"),
        String::from_utf8(stdout).expect("utf-8 stdout"),
        String::from_utf8(stderr).expect("utf-8 stderr"),
    )
}

fn write_config(dir: &Path, name: &str, body: &serde_json::Value) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(body).unwrap()).unwrap();
    path
}

fn vacuum_config(dir: &Path, seed: u64, output: &str) -> PathBuf {
    write_config(
        dir,
        &format!("{output}.config.json"),
        &serde_json::json!({
            "ancilla": {"family": "vacuum"},
            "n": 4,
            "runs": 100,
            "seed": seed,
            "output": dir.join(output),
        }),
    )
}

/// First line of stdout starting with `prefix`, with the prefix stripped.
fn line_after<'a>(stdout: &'a str, prefix: &str) -> &'a str {
    stdout
        .lines()
        .find_map(|line| line.trim().strip_prefix(prefix))
        .unwrap_or_else(|| panic!("no `{prefix}` line in:\n{stdout}"))
        .trim()
}

fn summary_value(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn optimize_vacuum_campaign_writes_artifacts() {
    let dir = TempDir::new().unwrap();
    let config = vacuum_config(dir.path(), 7, "vac");
    let (code, stdout, _) = run(bellopt().arg("optimize").arg(&config));
    assert_eq!(code, 0, "stdout: {stdout}");

    let best: f64 = line_after(&stdout, "best: P_succ =")
        .split_whitespace()
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!((best - 0.5).abs() <= 1e-6, "vacuum best {best}");

    let records = fs::read_to_string(dir.path().join("vac.runs.jsonl")).unwrap();
    let lines: Vec<&str> = records.lines().collect();
    assert_eq!(lines.len(), 100);
    for line in &lines {
        let record: serde_json::Value = serde_json::from_str(line).unwrap();
        let p = record["success_probability"].as_f64().unwrap();
        assert!(p <= 0.5 + 1e-9, "vacuum run above the ceiling: {p}");
    }

    let summary = summary_value(&dir.path().join("vac.summary.json"));
    assert_eq!(summary["campaign"]["runs"], 100);
    assert_eq!(summary["campaign"]["ancilla"]["family"], "vacuum");
    assert!(summary["timing"]["elapsed_secs"].as_f64().unwrap() >= 0.0);
}

#[test]
fn identical_configs_give_identical_summaries_modulo_timing() {
    let dir = TempDir::new().unwrap();
    let first = vacuum_config(dir.path(), 11, "a");
    let second = vacuum_config(dir.path(), 11, "b");
    assert_eq!(run(bellopt().arg("optimize").arg(&first)).0, 0);
    assert_eq!(run(bellopt().arg("optimize").arg(&second).arg("--parallelism").arg("3")).0, 0);

    let strip = |name: &str| {
        let mut value = summary_value(&dir.path().join(name));
        value.as_object_mut().unwrap().remove("timing").expect("timing field");
        serde_json::to_string(&value).unwrap()
    };
    assert_eq!(strip("a.summary.json"), strip("b.summary.json"));
}

#[test]
fn optimize_bell_pair_campaign_reaches_three_quarters() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        dir.path(),
        "bell.config.json",
        &serde_json::json!({
            "ancilla": {"family": "bell_pairs", "m": 1},
            "n": 8,
            "runs": 20,
            "seed": 3,
            "output": dir.path().join("bell"),
        }),
    );
    let (code, stdout, _) = run(bellopt().arg("optimize").arg(&config));
    assert_eq!(code, 0, "stdout: {stdout}");
    let best: f64 = line_after(&stdout, "best: P_succ =")
        .split_whitespace()
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!((best - 0.75).abs() <= 1e-6, "bell-pair best {best}");
}

#[test]
fn malformed_config_exits_2_without_artifacts() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("bad.json");
    fs::write(&config, r#"{"ancilla": {"family": "vacuum"}, "n": 4, "bogus": 1}"#).unwrap();
    let (code, _, stderr) = run(bellopt().arg("optimize").arg(&config));
    assert_eq!(code, 2, "stderr: {stderr}");
    assert!(stderr.contains("bogus"), "stderr: {stderr}");
    assert!(fs::read_dir(dir.path()).unwrap().count() == 1, "no artifacts expected");
}

#[test]
fn missing_config_exits_4() {
    let (code, _, stderr) = run(bellopt().arg("optimize").arg("/nonexistent/config.json"));
    assert_eq!(code, 4, "stderr: {stderr}");
}

#[test]
fn oversized_compile_is_refused_with_exit_3() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        dir.path(),
        "huge.config.json",
        &serde_json::json!({
            "ancilla": {"family": "grice", "iterations": 3},
            "n": 32,
            "runs": 1,
            "seed": 1,
            "output": dir.path().join("huge"),
        }),
    );
    let (code, _, stderr) = run(bellopt().arg("optimize").arg(&config));
    assert_eq!(code, 3, "stderr: {stderr}");
    assert!(stderr.contains("refusing"), "stderr: {stderr}");
    assert!(!dir.path().join("huge.runs.jsonl").exists(), "refused campaign left records");
}

#[test]
fn bounds_match_published_values() {
    let (code, stdout, _) = run(bellopt().args(["bounds", "ghz(4)"]));
    assert_eq!(code, 0);
    assert!(stdout.contains("3/4"), "ghz(4): {stdout}");

    let (code, stdout, _) = run(bellopt().args(["bounds", "single_photons(6)"]));
    assert_eq!(code, 0);
    assert!(stdout.contains("13/16"), "singles(6) generic: {stdout}");
    assert!(stdout.contains("7/8"), "singles(6) photon: {stdout}");

    let (code, stdout, _) = run(bellopt().args(["bounds", "single_photons(1)"]));
    assert_eq!(code, 0);
    assert!(stdout.contains("1/2"), "singles(1): {stdout}");
}

#[test]
fn bounds_rejects_unknown_ancilla_shorthand() {
    let (code, _, stderr) = run(bellopt().args(["bounds", "nonsense(3)"]));
    assert_eq!(code, 2, "stderr: {stderr}");
}

fn identity_unitary(n: usize) -> serde_json::Value {
    let re: Vec<Vec<f64>> =
        (0..n).map(|i| (0..n).map(|j| f64::from(i == j)).collect()).collect();
    let im = vec![vec![0.0; n]; n];
    serde_json::json!({"n": n, "re": re, "im": im})
}

#[test]
fn verify_identity_with_vacuum_is_inconclusive() {
    let dir = TempDir::new().unwrap();
    let unitary = write_config(dir.path(), "identity.json", &identity_unitary(4));
    let (code, stdout, _) =
        run(bellopt().arg("verify").arg(&unitary).args(["--ancilla", "vacuum"]));
    assert_eq!(code, 0, "stdout: {stdout}");
    let p: f64 =
        line_after(&stdout, "success probability:").split_whitespace().next().unwrap().parse().unwrap();
    assert_eq!(p, 0.0);
    assert_eq!(line_after(&stdout, "discriminating events:"), "0");
}

#[test]
fn verify_rejects_a_non_unitary_matrix() {
    let dir = TempDir::new().unwrap();
    let mut matrix = identity_unitary(4);
    matrix["re"][0][0] = serde_json::json!(2.0);
    let path = write_config(dir.path(), "stretch.json", &matrix);
    let (code, _, stderr) = run(bellopt().arg("verify").arg(&path).args(["--ancilla", "vacuum"]));
    assert_eq!(code, 2, "stderr: {stderr}");
    assert!(stderr.contains("not unitary"), "stderr: {stderr}");
}

/// Runs a single-photon-pair campaign, then re-evaluates its best record and
/// checks the published optimum: 5/8 with pattern (1, 1, 1/4, 1/4).
#[test]
fn verify_round_trips_the_best_stored_record() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        dir.path(),
        "s2.config.json",
        &serde_json::json!({
            "ancilla": {"family": "single_photons", "k": 2},
            "n": 6,
            "runs": 40,
            "seed": 1,
            "output": dir.path().join("s2"),
        }),
    );
    assert_eq!(run(bellopt().arg("optimize").arg(&config)).0, 0);

    // Among the optimal records, pick one realizing the published scheme:
    // P_succ = 5/8 with discrimination pattern (1, 1, 1/4, 1/4).
    let records = fs::read_to_string(dir.path().join("s2.runs.jsonl")).unwrap();
    let best_line = records
        .lines()
        .find(|line| {
            let record: serde_json::Value = serde_json::from_str(line).unwrap();
            if (record["success_probability"].as_f64().unwrap() - 0.625).abs() > 1e-6 {
                return false;
            }
            let mut pattern: Vec<f64> = record["pattern"]
                .as_array()
                .unwrap()
                .iter()
                .map(|v| v.as_f64().unwrap())
                .collect();
            pattern.sort_by(|a, b| b.total_cmp(a));
            pattern.iter().zip([1.0, 1.0, 0.25, 0.25]).all(|(got, want)| (got - want).abs() <= 1e-6)
        })
        .expect("no (1, 1, 1/4, 1/4) optimum among the runs");
    let stored: f64 = serde_json::from_str::<serde_json::Value>(best_line).unwrap()
        ["success_probability"]
        .as_f64()
        .unwrap();
    let record_path = dir.path().join("best.json");
    fs::write(&record_path, best_line).unwrap();

    let (code, stdout, _) = run(bellopt()
        .arg("verify")
        .arg(&record_path)
        .args(["--ancilla", "single_photons(2)"]));
    assert_eq!(code, 0, "stdout: {stdout}");
    let replayed: f64 =
        line_after(&stdout, "success probability:").split_whitespace().next().unwrap().parse().unwrap();
    assert!((replayed - stored).abs() <= 1e-9, "stored {stored}, replayed {replayed}");
    assert!((replayed - 0.625).abs() <= 1e-6, "best should be 5/8, got {replayed}");

    let mut pattern: Vec<f64> = line_after(&stdout, "pattern:")
        .split(", ")
        .map(|part| part.split_whitespace().last().unwrap().parse().unwrap())
        .collect();
    pattern.sort_by(|a, b| b.total_cmp(a));
    for (got, want) in pattern.iter().zip([1.0, 1.0, 0.25, 0.25]) {
        assert!((got - want).abs() <= 1e-6, "pattern {pattern:?}");
    }
}

#[test]
fn verify_polish_writes_a_run_record() {
    let dir = TempDir::new().unwrap();
    let unitary = write_config(dir.path(), "identity.json", &identity_unitary(5));
    let polished = dir.path().join("polished.json");
    let (code, stdout, _) = run(bellopt()
        .arg("verify")
        .arg(&unitary)
        .args(["--ancilla", "single_photons(1)", "--polish", "--seed", "5"])
        .arg("--output")
        .arg(&polished));
    assert_eq!(code, 0, "stdout: {stdout}");
    let record: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&polished).unwrap()).unwrap();
    assert_eq!(record["seed"], 5);
    assert!(record["final_unitary"]["re"].as_array().unwrap().len() == 5);
}

#[test]
fn report_compares_campaigns_and_flags_violations() {
    let dir = TempDir::new().unwrap();
    let config = vacuum_config(dir.path(), 7, "vac");
    assert_eq!(run(bellopt().arg("optimize").arg(&config)).0, 0);

    // Damage one record line: the row must survive with a warning.
    let records_path = dir.path().join("vac.runs.jsonl");
    let mut records = fs::read_to_string(&records_path).unwrap();
    records.push_str("this is not json\n");
    fs::write(&records_path, records).unwrap();

    // A synthetic campaign claiming an impossible value must get flagged.
    let fake = dir.path().join("fake.summary.json");
    fs::write(
        &fake,
        serde_json::to_string(&serde_json::json!({
            "ancilla": {"family": "vacuum"},
            "n": 4,
            "runs": 1,
            "converged_runs": 1,
            "histogram": [],
            "best": {
                "run_index": 0, "seed": 1, "success_probability": 0.99,
                "final_f": -3.96, "converged": true
            }
        }))
        .unwrap(),
    )
    .unwrap();

    let rows_path = dir.path().join("rows.json");
    let (code, stdout, stderr) = run(bellopt()
        .arg("report")
        .arg(dir.path().join("vac.summary.json"))
        .arg(&fake)
        .arg("--output")
        .arg(&rows_path));
    assert_eq!(code, 0, "stderr: {stderr}");
    assert!(stderr.contains("skipped 1 corrupt"), "stderr: {stderr}");
    assert!(stdout.contains("EXCEEDS"), "stdout: {stdout}");

    let rows: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&rows_path).unwrap()).unwrap();
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["best_rational"], "1/2");
    assert_eq!(rows[0]["literature_value"], "1/2");
    assert_eq!(rows[0]["skipped_record_lines"], 1);
    assert_eq!(rows[0]["bound_violations"].as_array().unwrap().len(), 0);
    assert!(!rows[1]["bound_violations"].as_array().unwrap().is_empty());
}

#[test]
fn report_with_no_files_prints_an_empty_table() {
    let (code, stdout, _) = run(bellopt().arg("report"));
    assert_eq!(code, 0);
    assert_eq!(stdout.lines().count(), 1, "only the header: {stdout}");
}

#[test]
fn events_counts_match_the_combinatorics() {
    let (code, stdout, _) = run(bellopt().args(["events", "--modes", "4", "--photons", "2"]));
    assert_eq!(code, 0);
    assert_eq!(line_after(&stdout, "detection events:"), "10");

    let (code, stdout, _) = run(bellopt().args(["events", "--modes", "8", "--photons", "4"]));
    assert_eq!(code, 0);
    assert_eq!(line_after(&stdout, "detection events:"), "330");
    assert_eq!(line_after(&stdout, "partition classes:"), "5");
}
