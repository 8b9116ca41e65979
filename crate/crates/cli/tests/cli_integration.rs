//! End-to-end runs of each CLI command through temporary directories.

use std::path::{Path, PathBuf};

use dcw_cli::config::parse_config;
use dcw_cli::run::{run, write_error_record};

fn write_file(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn run_config(dir: &Path, body: &str) -> dcw_cli::run::RunOutcome {
    let path = write_file(dir, "run.toml", body);
    let config = parse_config(&path).unwrap();
    run(&config, Some(&path)).unwrap()
}

#[test]
fn welfare_with_actual_reference_prices_emits_the_step_curve() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    run_config(
        dir.path(),
        &format!(
            r#"
command = "welfare"
seed = 5
out_dir = "{}"

[model]
kind = "logit"
alpha = [0.0, 0.5, 1.0]
beta = 1.0
draws = 4096

[analysis]
prices = [1.0, 1.5, 2.0]
income = 10.0
reference_prices = [1.0, 1.5, 2.0]
measure = "levels"
mode = "conditional_on_own_choice"
k = 1
grid = {{ lo = 8.0, hi = 11.0, points = 61 }}
"#,
            out.display()
        ),
    );
    let text = std::fs::read_to_string(out.join("curve.csv")).unwrap();
    for line in text.lines().skip(1) {
        let mut fields = line.split(',');
        let w: f64 = fields.next().unwrap().parse().unwrap();
        let v: f64 = fields.next().unwrap().parse().unwrap();
        let expect = if w <= 10.0 { 1.0 } else { 0.0 };
        assert_eq!(v, expect, "w = {w}");
    }
    let metadata: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("curve_metadata.json")).unwrap())
            .unwrap();
    assert_eq!(metadata["mass_points"][0]["location"], 10.0);
    assert_eq!(metadata["mass_points"][0]["jump"], 1.0);
}

#[test]
fn bounds_without_price_change_are_point_intervals() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    run_config(
        dir.path(),
        &format!(
            r#"
command = "bounds"
out_dir = "{}"

[model]
kind = "logit"
alpha = [0.0, 0.5]
beta = 1.0
draws = 1024

[analysis]
prices = [1.0, 1.5]
post_prices = [1.0, 1.5]
income = 10.0
"#,
            out.display()
        ),
    );
    let text = std::fs::read_to_string(out.join("bounds.csv")).unwrap();
    let mut rows = 0;
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let (i, j): (usize, usize) = (fields[0].parse().unwrap(), fields[1].parse().unwrap());
        let (lo, hi): (f64, f64) = (fields[2].parse().unwrap(), fields[3].parse().unwrap());
        if i == j {
            assert_eq!(lo, hi, "diagonal cell ({i},{j}) should be point identified");
            assert!(lo > 0.0);
        } else {
            assert_eq!((lo, hi), (0.0, 0.0));
        }
        rows += 1;
    }
    assert_eq!(rows, 4);
}

#[test]
fn simulate_then_estimate_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let sim_out = dir.path().join("sim");
    run_config(
        dir.path(),
        &format!(
            r#"
command = "simulate"
seed = 11
out_dir = "{}"

[model]
kind = "logit"
alpha = [0.0, 0.5]
beta = 1.0

[simulate]
kind = "cross_section"
count = 5000

[simulate.budget_sampler]
kind = "uniform_jitter"
price_halfwidth = 0.8
income_halfwidth = 0.5

[simulate.budget_sampler.base]
prices = [1.0, 1.5]
income = 10.0
"#,
            sim_out.display()
        ),
    );
    let dataset = sim_out.join("dataset.csv");
    assert!(dataset.exists());
    let lines = std::fs::read_to_string(&dataset).unwrap().lines().count();
    assert_eq!(lines, 5001); // header plus one row per draw

    let est_out = dir.path().join("est");
    let outcome = run_config(
        dir.path(),
        &format!(
            r#"
command = "estimate"
out_dir = "{}"

[model]
kind = "data"
choice_data = "{}"

[estimate]
queries = [[1.0, 1.5, 10.0], [0.8, 1.2, 10.0]]
"#,
            est_out.display(),
            dataset.display()
        ),
    );
    assert!(est_out.join("choice_model_metadata.json").exists());
    let probs = std::fs::read_to_string(est_out.join("choice_probabilities.csv")).unwrap();
    for line in probs.lines().skip(1) {
        let fields: Vec<f64> = line
            .split(',')
            .take(5)
            .map(|f| f.parse().unwrap())
            .collect();
        let total = fields[3] + fields[4];
        assert_eq!(total, 1.0, "probabilities must add up exactly");
    }
    // manifest digests cover the input dataset
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&outcome.manifest).unwrap()).unwrap();
    let digests = manifest["input_digests"].as_object().unwrap();
    assert!(digests.keys().any(|k| k.ends_with("dataset.csv")));
}

#[test]
fn swf_command_reports_weighted_mean_income_for_utilitarian_mmu() {
    let dir = tempfile::tempdir().unwrap();
    write_file(
        dir.path(),
        "population.csv",
        "p_0,p_1,y,weight\n1.0,1.5,8.0,0.25\n1.0,1.5,10.0,0.5\n1.0,1.5,14.0,0.25\n",
    );
    let out = dir.path().join("out");
    run_config(
        dir.path(),
        &format!(
            r#"
command = "swf"
out_dir = "{}"

[model]
kind = "logit"
alpha = [0.0, 0.5]
beta = 1.0
draws = 1024

[analysis]
prices = [1.0, 1.5]
income = 0.0
reference_prices = [1.0, 1.5]
grid = {{ lo = 6.0, hi = 16.0, points = 256 }}

[swf]
population = "population.csv"
delta_p = [-0.2, -0.2]
"#,
            out.display()
        ),
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("swf.json")).unwrap()).unwrap();
    let expected = 0.25 * 8.0 + 0.5 * 10.0 + 0.25 * 14.0;
    let swf = report["swf"].as_f64().unwrap();
    assert!((swf - expected).abs() < 1e-6, "swf {swf} vs {expected}");
    assert_eq!(
        report["per_member_contributions"].as_array().unwrap().len(),
        3
    );
    // a uniform price cut raises utilitarian welfare
    assert!(report["swf_difference"].as_f64().unwrap() > 0.0);
}

#[test]
fn panel_simulation_round_trips_through_transition_estimation() {
    let dir = tempfile::tempdir().unwrap();
    let sim_out = dir.path().join("sim");
    run_config(
        dir.path(),
        &format!(
            r#"
command = "simulate"
seed = 12
out_dir = "{}"

[model]
kind = "logit"
alpha = [0.0, 0.5]
beta = 1.0

[simulate]
kind = "panel"
count = 2000
output = "panel.csv"

[simulate.income_sampler]
kind = "uniform"
lo = 9.0
hi = 11.0

[analysis]
prices = [1.0, 1.5]
post_prices = [1.0, 1.2]
income = 10.0
"#,
            sim_out.display()
        ),
    );
    let est_out = dir.path().join("est");
    run_config(
        dir.path(),
        &format!(
            r#"
command = "estimate"
out_dir = "{}"

[model]
kind = "data"
panel_data = "{}"

[estimate]
queries = [[1.0, 1.5, 1.0, 1.2, 10.0]]
"#,
            est_out.display(),
            sim_out.join("panel.csv").display()
        ),
    );
    assert!(est_out.join("transition_model_metadata.json").exists());
    assert!(est_out.join("transition_probabilities.csv").exists());
}

#[test]
fn failed_run_leaves_an_error_record() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let path = write_error_record(&out, "synthetic failure").unwrap();
    let record: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(record["error"], "synthetic failure");
}

#[test]
fn binary_runs_welfare_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config = write_file(
        dir.path(),
        "run.toml",
        &format!(
            r#"
command = "welfare"
seed = 3
out_dir = "{}"

[model]
kind = "logit"
alpha = [0.0, 0.5]
beta = 1.0
draws = 4096

[analysis]
prices = [1.0, 1.5]
post_prices = [1.0, 1.2]
income = 10.0
reference_prices = [1.0, 1.5]
measure = "cv"
mode = "marginal"
grid = {{ lo = -0.6, hi = 0.6, points = 41 }}
"#,
            out.display()
        ),
    );
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_dcw"))
        .args(["welfare", "--config"])
        .arg(&config)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("curve.csv").exists());
    assert!(out.join("manifest.json").exists());

    // seed override through the flag changes the manifest
    let out2 = dir.path().join("out2");
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_dcw"))
        .args(["welfare", "--config"])
        .arg(&config)
        .arg("--seed")
        .arg("99")
        .arg("--out")
        .arg(&out2)
        .status()
        .unwrap();
    assert!(status.success());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out2.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["seed"], 99);

    // mismatched subcommand is rejected
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_dcw"))
        .args(["bounds", "--config"])
        .arg(&config)
        .status()
        .unwrap();
    assert!(!status.success());
}

#[test]
fn estimated_choice_model_drives_a_welfare_curve() {
    let dir = tempfile::tempdir().unwrap();
    let sim_out = dir.path().join("sim");
    run_config(
        dir.path(),
        &format!(
            r#"
command = "simulate"
seed = 21
out_dir = "{}"

[model]
kind = "logit"
alpha = [0.0, 0.5]
beta = 1.0

[simulate]
kind = "cross_section"
count = 20000

[simulate.budget_sampler]
kind = "uniform_jitter"
price_halfwidth = 1.0
income_halfwidth = 0.0

[simulate.budget_sampler.base]
prices = [1.0, 1.5]
income = 10.0
"#,
            sim_out.display()
        ),
    );
    let out = dir.path().join("welfare");
    run_config(
        dir.path(),
        &format!(
            r#"
command = "welfare"
out_dir = "{}"

[model]
kind = "data"
choice_data = "{}"

[analysis]
prices = [1.0, 1.5]
post_prices = [1.0, 1.2]
income = 10.0
reference_prices = [1.0, 1.5]
measure = "cv"
mode = "marginal"
grid = {{ lo = -0.4, hi = 0.4, points = 81 }}
"#,
            out.display(),
            sim_out.join("dataset.csv").display()
        ),
    );
    let text = std::fs::read_to_string(out.join("curve.csv")).unwrap();
    let values: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(values.windows(2).all(|w| w[1] >= w[0]), "curve must be a CDF");
    assert!(values[0] < 0.05, "left tail {}", values[0]);
    assert!(values.last().unwrap() > &0.95, "right tail {}", values.last().unwrap());
    assert!(out.join("choice_model_metadata.json").exists());
}
