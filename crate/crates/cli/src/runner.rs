//! Multi-seed experiment execution and artifact writing.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, OnceLock};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use ecop_core::ecop::Trainer;
use ecop_core::envs::Environment;
use ecop_core::oracle::{ipoce, random_policy, PolicyGrid};
use ecop_core::rng::{derive_seed, rng_from_seed};

use crate::config::{AlgorithmName, RunConfig};
use crate::io::{self, Manifest, Table};

/// Name of the environment variable holding the default output root.
pub const OUT_ROOT_ENV: &str = "ECOP_OUT_ROOT";

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    /// Added to every configured seed.
    pub seed_offset: u64,
    /// Overrides the config's output directory.
    pub out_dir: Option<PathBuf>,
    /// Default root for relative or missing output directories.
    pub out_root: PathBuf,
    /// Worker threads; seeds are independent.
    pub jobs: usize,
    /// Fill the `seconds` column with wall-clock time (outputs then differ
    /// between runs).
    pub timing: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { seed_offset: 0, out_dir: None, out_root: PathBuf::from("runs"), jobs: 1, timing: false }
    }
}

/// Where a run writes: `--out-dir`, else the config's `out_dir` (relative to
/// the root), else `<root>/<config stem>`.
pub fn resolve_out_dir(config: &RunConfig, config_path: &Path, opts: &RunOptions) -> PathBuf {
    if let Some(dir) = &opts.out_dir {
        return dir.clone();
    }
    match &config.out_dir {
        Some(dir) if dir.is_absolute() => dir.clone(),
        Some(dir) => opts.out_root.join(dir),
        None => opts.out_root.join(config_path.file_stem().unwrap_or_default()),
    }
}

/// Result of one seed.
#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub seed: u64,
    pub table: Table,
    pub checkpoint: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub seeds: Vec<SeedOutcome>,
    pub aggregate: Table,
}

fn wall_clock() -> f64 {
    static START: OnceLock<Instant> = OnceLock::new();
    START.get_or_init(Instant::now).elapsed().as_secs_f64()
}

/// Trains (or solves) one seed and returns its metric table.
pub fn run_seed(config: &RunConfig, env: &dyn Environment, seed: u64, timing: bool) -> Result<SeedOutcome> {
    let m = env.spec().num_constraints();
    match config.algorithm {
        AlgorithmName::IpoceExact => run_ipoce(config, env, seed),
        algorithm => {
            let tag = (algorithm != AlgorithmName::Ecop).then_some(algorithm.as_str());
            let mut trainer = Trainer::new(env, config.train_config(seed)?)?;
            if timing {
                trainer = trainer.with_clock(wall_clock);
            }
            let mut table = Table::new(io::record_header(m, tag.is_some()));
            trainer
                .run(|rec| table.rows.push(io::record_row(rec, tag)))
                .with_context(|| format!("seed {seed} stopped after episode {}", table.rows.len()))?;
            let checkpoint = config.checkpoint.then(|| io::checkpoint_to_json(trainer.policy()));
            Ok(SeedOutcome { seed, table, checkpoint })
        }
    }
}

/// Exact constrained policy iteration on the environment's model; one row per
/// iteration with exact `J` and `J_{C_i}`.
fn run_ipoce(config: &RunConfig, env: &dyn Environment, seed: u64) -> Result<SeedOutcome> {
    let Some(cmdp) = env.to_cmdp() else {
        bail!("ipoce_exact needs a tabular environment with an exact model");
    };
    let grid = PolicyGrid::new(config.ipoce_resolution, cmdp.num_actions())?;
    let mut rng = rng_from_seed(derive_seed(seed, &[u64::MAX]));
    let init = random_policy(&mut rng, cmdp.horizon(), cmdp.num_states(), cmdp.num_actions());
    let result = ipoce(&cmdp, &init, &grid, config.episodes, config.ipoce_budget)?;
    let m = cmdp.num_constraints();
    let mut header = vec!["episode".to_string(), "J".to_string()];
    header.extend((1..=m).map(|i| format!("J_C{i}")));
    header.extend(["feasible", "algorithm"].map(String::from));
    let mut table = Table::new(header);
    for (k, (j, costs)) in result.history.iter().enumerate() {
        let mut row = vec![(k + 1).to_string(), j.to_string()];
        row.extend(costs.iter().map(f64::to_string));
        let feasible = costs.iter().zip(cmdp.thresholds()).all(|(c, d)| c <= d);
        row.push(feasible.to_string());
        row.push(AlgorithmName::IpoceExact.as_str().into());
        table.rows.push(row);
    }
    Ok(SeedOutcome { seed, table, checkpoint: None })
}

/// Runs every seed (in parallel when `jobs > 1`), then writes one table per
/// seed, the aggregate table, checkpoints and the manifest.
pub fn run_experiment(config: &RunConfig, config_path: &Path, config_bytes: &[u8], opts: &RunOptions) -> Result<RunSummary> {
    let env = config.env.build()?;
    let seeds: Vec<u64> = config
        .seeds
        .iter()
        .map(|s| s.checked_add(opts.seed_offset).context("seed offset overflows"))
        .collect::<Result<_>>()?;
    let outcomes = run_seeds(config, env.as_ref(), &seeds, opts.jobs.max(1), opts.timing)?;

    let out_dir = resolve_out_dir(config, config_path, opts);
    std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let mut files = Vec::new();
    for o in &outcomes {
        let name = format!("seed_{}.csv", o.seed);
        write(&out_dir.join(&name), &o.table.to_csv())?;
        files.push(name);
        if let Some(ck) = &o.checkpoint {
            let name = format!("seed_{}.policy.json", o.seed);
            write(&out_dir.join(&name), ck)?;
            files.push(name);
        }
    }
    let tables: Vec<Table> = outcomes.iter().map(|o| o.table.clone()).collect();
    let aggregate = io::aggregate(&tables)?;
    write(&out_dir.join("aggregate.csv"), &aggregate.to_csv())?;
    files.push("aggregate.csv".into());

    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        core_version: ecop_core::VERSION.into(),
        config_file: config_path.display().to_string(),
        config_sha256: io::sha256_hex(config_bytes),
        algorithm: config.algorithm.as_str().into(),
        env: env.spec().name.clone(),
        seed_offset: opts.seed_offset,
        seeds,
        files,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    write(&out_dir.join("manifest.json"), &text)?;
    Ok(RunSummary { out_dir, seeds: outcomes, aggregate })
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Runs seeds on up to `jobs` threads; results come back in seed-list order.
pub fn run_seeds(config: &RunConfig, env: &dyn Environment, seeds: &[u64], jobs: usize, timing: bool) -> Result<Vec<SeedOutcome>> {
    let slots: Vec<Mutex<Option<Result<SeedOutcome>>>> = seeds.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = jobs.min(seeds.len()).max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= seeds.len() {
                    break;
                }
                let outcome = run_seed(config, env, seeds[i], timing);
                *slots[i].lock().expect("no poisoned slot") = Some(outcome);
            });
        }
    });
    slots.into_iter().map(|s| s.into_inner().expect("no poisoned slot").expect("every seed ran")).collect()
}
