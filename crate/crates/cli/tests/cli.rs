use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ecop::io::{self, Table};

const SMALL_RUN: &str = r#"
# short hazard-gridworld run
algorithm = "ecop"
seeds = [0, 1, 2]
episodes = 6
batch_episodes = 4
policy_lr = 0.05

[env]
name = "hazard_gridworld"
"#;

fn ecop(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ecop"))
        .args(args)
        .env("ECOP_OUT_ROOT", root)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn read_table(path: &Path) -> Table {
    Table::parse(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn run_writes_per_seed_aggregate_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "small.toml", SMALL_RUN);
    let out = ecop(&["run", config.to_str().unwrap()], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let run_dir = dir.path().join("small");
    for seed in 0..3 {
        let table = read_table(&run_dir.join(format!("seed_{seed}.csv")));
        assert_eq!(table.header, ["episode", "J", "J_C1", "lambda_max_1", "beta", "loss", "feasible", "seconds"]);
        assert_eq!(table.rows.len(), 6);
        assert!(run_dir.join(format!("seed_{seed}.policy.json")).exists());
    }
    let agg = read_table(&run_dir.join("aggregate.csv"));
    assert_eq!(&agg.header[..5], ["episode", "J_mean", "J_std", "J_C1_mean", "J_C1_std"]);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_sha256"], io::sha256_hex(SMALL_RUN.as_bytes()));
    assert_eq!(manifest["seeds"], serde_json::json!([0, 1, 2]));
    assert_eq!(manifest["env"], "hazard_gridworld");
}

#[test]
fn repeated_runs_are_byte_identical_and_jobs_do_not_matter() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "small.toml", SMALL_RUN);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    for (out_dir, jobs) in [(&a, "1"), (&b, "1"), (&c, "3")] {
        let out = ecop(&["--jobs", jobs, "--out-dir", out_dir.to_str().unwrap(), "run", config.to_str().unwrap()], dir.path());
        assert!(out.status.success(), "{}", stderr(&out));
    }
    for name in ["seed_0.csv", "seed_1.csv", "seed_2.csv", "aggregate.csv", "seed_2.policy.json"] {
        let first = std::fs::read(a.join(name)).unwrap();
        assert_eq!(first, std::fs::read(b.join(name)).unwrap(), "{name} differs between runs");
        assert_eq!(first, std::fs::read(c.join(name)).unwrap(), "{name} differs with --jobs 3");
    }
}

#[test]
fn aggregate_means_match_recomputation() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "small.toml", SMALL_RUN);
    let out = ecop(&["run", config.to_str().unwrap()], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let run_dir = dir.path().join("small");
    let seeds: Vec<Table> = (0..3).map(|s| read_table(&run_dir.join(format!("seed_{s}.csv")))).collect();
    let agg = read_table(&run_dir.join("aggregate.csv"));
    for column in ["J", "J_C1", "loss", "beta"] {
        let means = agg.column(&format!("{column}_mean")).unwrap();
        let stds = agg.column(&format!("{column}_std")).unwrap();
        for (row, (mean, std)) in means.iter().zip(&stds).enumerate() {
            let values: Vec<f64> = seeds.iter().map(|t| t.column(column).unwrap()[row].parse().unwrap()).collect();
            let expect = values.iter().sum::<f64>() / values.len() as f64;
            let var = values.iter().map(|v| (v - expect).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
            assert!((mean.parse::<f64>().unwrap() - expect).abs() <= 1e-12, "{column} row {row}");
            assert!((std.parse::<f64>().unwrap() - var.sqrt()).abs() <= 1e-12, "{column} row {row}");
        }
    }
}

#[test]
fn seed_offset_shifts_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "small.toml", SMALL_RUN);
    let out = ecop(&["--seed-offset", "10", "run", config.to_str().unwrap()], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let run_dir = dir.path().join("small");
    assert!(run_dir.join("seed_12.csv").exists());
    assert!(!run_dir.join("seed_0.csv").exists());
}

#[test]
fn unknown_config_key_fails_with_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "bad.toml", "seeds = [0]\nepisodez = 3\n");
    let out = ecop(&["run", config.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("episodez"), "{err}");
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn unknown_env_override_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "bad.toml", "[env]\nname = \"hazard_gridworld\"\nwind = 0.3\n");
    let out = ecop(&["run", config.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("wind"));
}

#[test]
fn export_then_train_on_the_exported_model_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("hazard.json");
    let out = ecop(&["export-cmdp", "hazard_gridworld", model.to_str().unwrap()], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let cmdp = io::read_cmdp(&model).unwrap();
    assert_eq!((cmdp.num_states(), cmdp.num_actions(), cmdp.horizon()), (36, 4, 30));

    let config = write_config(
        dir.path(),
        "tab.toml",
        "seeds = [0]\nepisodes = 3\nbatch_episodes = 4\n[env]\nname = \"tabular\"\nfile = \"hazard.json\"\n",
    );
    let out = ecop(&["run", config.to_str().unwrap()], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let checkpoint = dir.path().join("tab").join("seed_0.policy.json");

    let out = ecop(&["eval", "--episodes", "200", checkpoint.to_str().unwrap(), "hazard_gridworld"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let table = Table::parse(&String::from_utf8(out.stdout).unwrap()).unwrap();
    let methods = table.column("method").unwrap();
    assert_eq!(methods, ["exact", "monte_carlo"]);
    let j: Vec<f64> = table.column("J").unwrap().iter().map(|v| v.parse().unwrap()).collect();
    let se: f64 = table.column("J_se").unwrap()[1].parse().unwrap();
    assert!((j[0] - j[1]).abs() <= 4.0 * se + 1e-9, "exact {} vs sampled {} (se {se})", j[0], j[1]);

    let out = ecop(&["eval", checkpoint.to_str().unwrap(), "navigation_gridworld"], dir.path());
    assert_eq!(out.status.code(), Some(2), "a 36-state policy must not evaluate on a 64-state grid");
}

#[test]
fn verify_lemma1_passes_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = ecop(&["verify", "lemma1"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let report = read_table(&dir.path().join("verify").join("verify_lemma1.csv"));
    assert_eq!(report.header, ["instance", "check", "max_abs_error", "passed"]);
    assert_eq!(report.rows.len(), 100);
    for row in &report.rows {
        assert_eq!(row[3], "true");
        assert!(row[2].parse::<f64>().unwrap() <= 1e-9);
    }
}

#[test]
fn unknown_suite_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = ecop(&["verify", "everything"], dir.path());
    assert!(!out.status.success());
}

#[test]
fn ipoce_runs_on_a_small_exported_model() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ecop_core::rng::rng_from_seed(4);
    let cmdp = ecop_core::oracle::random_cmdp(&mut rng, 2, 2, 2, 1);
    io::write_cmdp(&dir.path().join("small.json"), &cmdp).unwrap();
    let config = write_config(
        dir.path(),
        "ip.toml",
        "algorithm = \"ipoce_exact\"\nseeds = [0, 1]\nepisodes = 10\nipoce_resolution = 4\n[env]\nname = \"tabular\"\nfile = \"small.json\"\n",
    );
    let out = ecop(&["run", config.to_str().unwrap()], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let table = read_table(&dir.path().join("ip").join("seed_0.csv"));
    assert_eq!(table.header, ["episode", "J", "J_C1", "feasible", "algorithm"]);
    assert!(!table.rows.is_empty() && table.rows.len() <= 10);
    assert!(table.rows.iter().all(|r| r[4] == "ipoce_exact"));
}

#[test]
fn ipoce_refuses_models_too_large_to_enumerate() {
    let dir = tempfile::tempdir().unwrap();
    let out = ecop(&["export-cmdp", "hazard_gridworld", dir.path().join("h.json").to_str().unwrap()], dir.path());
    assert!(out.status.success());
    // Too large to enumerate: the grid search must refuse rather than truncate.
    let config = write_config(
        dir.path(),
        "ip.toml",
        "algorithm = \"ipoce_exact\"\nseeds = [0]\nepisodes = 2\n[env]\nname = \"tabular\"\nfile = \"h.json\"\n",
    );
    let out = ecop(&["run", config.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
}
