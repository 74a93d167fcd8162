use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};

use vrkm_cli::config::{preset, ExperimentConfig};
use vrkm_cli::{experiment, verify};

#[derive(Parser)]
#[command(
    name = "vrkm",
    about = "Variance-reduced fast KM solvers: instance generation, experiment runs, \
             verification and comparison",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate problem instances and their certificates.
    Generate {
        #[arg(long, value_name = "PATH")]
        config: Option<PathBuf>,
        /// Built-in preset: desk | desk-constrained | exp1 | exp2.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Master seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the (method x instance x seed) matrix and aggregate the traces.
    Run {
        #[arg(long, value_name = "PATH")]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
    /// Run the verification suites (fast: exact checks; full: every
    /// acceptance criterion). Exit code 1 on failure.
    Verify {
        #[arg(long, default_value = "fast")]
        level: String,
        /// Directory for the machine-readable report (optional).
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
    /// Epochs-to-threshold table from aggregated traces.
    Compare {
        /// One or more output directories containing aggregated.csv.
        #[arg(value_name = "DIR", required = true)]
        dirs: Vec<PathBuf>,
    },
}

fn load_config(
    config: Option<PathBuf>,
    preset_name: Option<String>,
    seed: Option<u64>,
) -> Result<ExperimentConfig> {
    let mut cfg = match (config, preset_name) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(&path)
                .with_context(|| format!("reading {}", path.display()))?;
            ExperimentConfig::from_toml(&text).context("parsing config")?
        }
        (None, Some(name)) => preset(&name, seed.unwrap_or(42))
            .ok_or_else(|| anyhow!("unknown preset '{name}'"))?,
        (None, None) => return Err(anyhow!("either --config or --preset is required")),
    };
    if let Some(s) = seed {
        cfg.problem.master_seed = s;
    }
    Ok(cfg)
}

fn set_threads(threads: usize) {
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .ok();
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Generate { config, preset, out, seed } => {
            let cfg = load_config(config, preset, seed)?;
            std::fs::create_dir_all(&out)?;
            experiment::generate(&cfg, &out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Run { config, preset, out, seed, threads } => {
            let cfg = load_config(config, preset, seed)?;
            let threads = if threads == 0 { rayon::current_num_threads() } else { threads };
            if !experiment::instances_dir(&out).exists() {
                std::fs::create_dir_all(&out)?;
                experiment::generate(&cfg, &out)?;
            }
            experiment::run_experiment(&cfg, &out, threads)?;
            println!("aggregated traces written to {}", out.join("aggregated.csv").display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { level, out, threads } => {
            set_threads(threads);
            let reports = match level.as_str() {
                "fast" => verify::run_fast(),
                "full" => verify::run_full(),
                other => return Err(anyhow!("unknown level '{other}' (use fast | full)")),
            };
            let ok = verify::print_reports(&reports);
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("verify_report.json"), verify::reports_to_json(&reports)?)?;
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Compare { dirs } => {
            let table = experiment::compare(&dirs)?;
            print!("{table}");
            Ok(ExitCode::SUCCESS)
        }
    }
}
