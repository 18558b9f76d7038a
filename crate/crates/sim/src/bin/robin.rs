use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use robin_sim::{runner, scenarios};

#[derive(Parser)]
#[command(name = "robin", version, about = "Channel-randomized orthogonal blinding experiments")]
struct Cli {
    /// Override the experiment seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for the CSV results.
    #[arg(long, global = true, default_value = "results")]
    out_dir: PathBuf,
    /// Worker threads (0 uses every core).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Suppress the per-point summaries.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a built-in scenario or a config file.
    Run {
        /// Scenario name or path to a config file.
        config: String,
    },
    /// List the built-in scenarios.
    List,
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> anyhow::Result<ExitCode> {
    let cli = Cli::parse();
    let config = match cli.command {
        Command::List => {
            print!("{}", scenarios::listing());
            return Ok(ExitCode::SUCCESS);
        }
        Command::Run { config } => config,
    };
    let mut cfg = robin_sim::load_config(&config).with_context(|| format!("loading `{config}`"))?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let opts = runner::RunOptions { workers: cli.workers };
    let quiet = cli.quiet;
    let outcome = runner::run(&cfg, &opts, |p| {
        if !quiet {
            println!("{}", p.summary);
        }
    })?;
    runner::check_invariants(&outcome.rows)?;
    let path = robin_sim::write_results(&cfg, &outcome, &cli.out_dir)?;
    if !quiet {
        println!("wrote {} in {:.1} s", path.display(), outcome.wall_time.as_secs_f64());
    }
    let failed = outcome.failed_points();
    if failed > 0 {
        eprintln!("{failed} sweep point(s) failed; see the error rows in {}", path.display());
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}
