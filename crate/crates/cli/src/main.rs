use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use ecop::config::{EnvConfig, RunConfig};
use ecop::runner::{run_experiment, RunOptions, OUT_ROOT_ENV};
use ecop::verify::{self, Suite, SuiteReport};
use ecop::{eval, io};

#[derive(Parser, Debug)]
#[command(name = "ecop", version, about = "Episodic constrained policy optimization experiments")]
struct Cli {
    /// Output directory (overrides the config and the output root).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Root for run outputs when no directory is given.
    #[arg(long, global = true, env = OUT_ROOT_ENV, default_value = "runs")]
    out_root: PathBuf,
    /// Worker threads for independent seeds.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Added to every configured seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed_offset: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train every configured seed and write per-seed and aggregate CSVs.
    Run {
        config: PathBuf,
        /// Record wall-clock seconds (outputs are then not reproducible).
        #[arg(long)]
        timing: bool,
    },
    /// Run an oracle suite: lemma1, theorem1, gradients, occupancy or all.
    Verify { suite: Suite },
    /// Write the exact model of a tabular environment as JSON.
    ExportCmdp { env: String, file: PathBuf },
    /// Evaluate a policy checkpoint on an environment.
    Eval {
        checkpoint: PathBuf,
        env: String,
        /// Monte-Carlo episodes (0 for exact evaluation only).
        #[arg(long, default_value_t = 1000)]
        episodes: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { config, timing } => {
            let bytes = std::fs::read(&config).with_context(|| format!("reading config {}", config.display()))?;
            let run_config = RunConfig::load(&config)?;
            let opts = RunOptions {
                seed_offset: cli.seed_offset,
                out_dir: cli.out_dir,
                out_root: cli.out_root,
                jobs: cli.jobs,
                timing,
            };
            let summary = run_experiment(&run_config, &config, &bytes, &opts)?;
            for o in &summary.seeds {
                let last = o.table.rows.last().map(|r| r[1].as_str()).unwrap_or("-");
                println!("seed {}: {} rows, final J {last}", o.seed, o.table.rows.len());
            }
            println!("wrote {}", summary.out_dir.display());
            Ok(true)
        }
        Command::Verify { suite } => {
            let reports = verify::run(suite)?;
            let dir = cli.out_dir.unwrap_or_else(|| cli.out_root.join("verify"));
            std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            let path = dir.join(format!("verify_{}.csv", suite.name()));
            std::fs::write(&path, SuiteReport::to_table(&reports).to_csv())
                .with_context(|| format!("writing {}", path.display()))?;
            for r in &reports {
                println!("{}: {} [{}]", r.suite, r.summary, if r.passed { "PASS" } else { "FAIL" });
            }
            println!("report {}", path.display());
            Ok(reports.iter().all(|r| r.passed))
        }
        Command::ExportCmdp { env, file } => {
            let built = EnvConfig::from_argument(&env)?.build()?;
            let cmdp = built.to_cmdp().with_context(|| format!("{env} has no exact tabular model"))?;
            io::write_cmdp(&file, &cmdp)?;
            println!(
                "wrote {} (S={}, A={}, H={}, m={})",
                file.display(),
                cmdp.num_states(),
                cmdp.num_actions(),
                cmdp.horizon(),
                cmdp.num_constraints()
            );
            Ok(true)
        }
        Command::Eval { checkpoint, env, episodes } => {
            let policy = io::read_checkpoint(&checkpoint)?;
            let built = EnvConfig::from_argument(&env)?.build()?;
            let table = eval::evaluate(&policy, built.as_ref(), episodes, cli.seed_offset)?;
            print!("{}", table.to_csv());
            Ok(true)
        }
    }
}
