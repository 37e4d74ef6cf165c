use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use netcomm::analysis::analyze;
use netcomm::experiment::{
    read_results_csv, run_simulation_logged, run_sweep, write_results_csv, ExperimentId, ResultRow,
    Scale, SimulationConfig, SweepSpec,
};
use netcomm::plot::plot_summaries;
use netcomm::topology::TopologySpec;

const EXIT_ERROR: u8 = 1;
const EXIT_PARTIAL: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "netcomm", version, about = "Emergent communication on social networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one simulation; writes results.csv, episodes.jsonl and network.txt.
    Simulate {
        /// JSON simulation config. Defaults to a 10-agent ring without supervision.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Master seed, overriding the config's.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the number of rounds.
        #[arg(long)]
        rounds: Option<u64>,
        #[arg(long, env = "NETCOMM_OUT", default_value = "out")]
        out: PathBuf,
    },
    /// Run an experiment grid; writes results.csv.
    Sweep {
        /// 1, 2, 3, or custom (requires --config).
        #[arg(long)]
        experiment: String,
        /// full or desk.
        #[arg(long, default_value = "full")]
        scale: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Maximum concurrent runs.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Override the number of rounds per run.
        #[arg(long)]
        rounds: Option<u64>,
        /// JSON sweep spec for `--experiment custom`.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, env = "NETCOMM_OUT", default_value = "out")]
        out: PathBuf,
    },
    /// Aggregate results.csv into condition summaries and regressions.
    Analyze {
        /// Directory containing results.csv.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, env = "NETCOMM_OUT", default_value = "out")]
        out: PathBuf,
    },
    /// Render SVG figures from summary_exp*.csv files.
    Plot {
        /// Directory containing summary_exp*.csv.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, env = "NETCOMM_OUT", default_value = "out")]
        out: PathBuf,
    },
    /// Check a simulation config or sweep spec without running it.
    ValidateConfig {
        path: PathBuf,
    },
}

fn read_text(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn create_dir(path: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

fn simulate(
    config: Option<&Path>,
    seed: Option<u64>,
    rounds: Option<u64>,
    out: &Path,
) -> anyhow::Result<u8> {
    let mut cfg = match config {
        Some(path) => SimulationConfig::from_json(&read_text(path)?)
            .with_context(|| format!("in {}", path.display()))?,
        None => SimulationConfig::new(TopologySpec::ring(10), 0.0, 0),
    };
    if let Some(seed) = seed {
        cfg.master_seed = seed;
    }
    if let Some(rounds) = rounds {
        cfg.rounds = rounds;
        cfg.metric_window = cfg.metric_window.min(rounds);
    }
    create_dir(out)?;
    let run = run_simulation_logged(&cfg, &out.join("episodes.jsonl"))?;
    let row = ResultRow::from_run(ExperimentId::Single, 0, &run);
    write_results_csv(&out.join("results.csv"), &[row])?;
    let net = out.join("network.txt");
    std::fs::write(&net, &run.edge_list).with_context(|| format!("writing {}", net.display()))?;
    log::info!(
        "coordination {:.3}, speaking consistency {:.3}, listening consistency {:.3}",
        run.coordination_rate,
        run.metrics.speaking_consistency,
        run.metrics.listening_consistency
    );
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn sweep(
    experiment: &str,
    scale: &str,
    seed: u64,
    jobs: usize,
    rounds: Option<u64>,
    config: Option<&Path>,
    out: &Path,
) -> anyhow::Result<u8> {
    let id: ExperimentId = experiment.parse()?;
    let mut spec = match (id, config) {
        (ExperimentId::Custom, Some(path)) => SweepSpec::from_json(&read_text(path)?)
            .with_context(|| format!("in {}", path.display()))?,
        (ExperimentId::Custom, None) => bail!("--experiment custom requires --config"),
        (_, Some(_)) => bail!("--config is only accepted with --experiment custom"),
        (id, None) => SweepSpec::preset(id, scale.parse::<Scale>()?)?,
    };
    if let Some(rounds) = rounds {
        spec = spec.with_rounds(rounds);
    }
    spec.validate()?;
    create_dir(out)?;
    log::info!("sweep: {} runs on {} thread(s)", spec.n_runs(), jobs.max(1));
    let outcome = run_sweep(&spec, seed, jobs)?;
    if outcome.is_total_failure() {
        bail!("all {} runs failed", outcome.failures.len());
    }
    write_results_csv(&out.join("results.csv"), &outcome.rows)?;
    if outcome.is_partial_failure() {
        for f in &outcome.failures {
            eprintln!(
                "run failed: cell {} repetition {} seed {}: {}",
                f.cell, f.repetition, f.seed, f.message
            );
        }
        return Ok(EXIT_PARTIAL);
    }
    Ok(0)
}

fn validate_config(path: &Path) -> anyhow::Result<u8> {
    let text = read_text(path)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if value.get("experiment").is_some() {
        let spec = SweepSpec::from_json(&text)?;
        spec.validate()?;
        println!("ok: sweep spec with {} runs", spec.n_runs());
    } else {
        let cfg = SimulationConfig::from_json(&text)?;
        cfg.validate()?;
        println!("ok: simulation config ({} rounds)", cfg.rounds);
    }
    Ok(0)
}

fn dispatch(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Simulate {
            config,
            seed,
            rounds,
            out,
        } => simulate(config.as_deref(), seed, rounds, &out),
        Command::Sweep {
            experiment,
            scale,
            seed,
            jobs,
            rounds,
            config,
            out,
        } => sweep(&experiment, &scale, seed, jobs, rounds, config.as_deref(), &out),
        Command::Analyze { input, out } => {
            let rows = read_results_csv(&input.join("results.csv"))?;
            let outputs = analyze(&rows, &out)?;
            for p in outputs.summaries.iter().chain(&outputs.regressions) {
                println!("{}", p.display());
            }
            Ok(0)
        }
        Command::Plot { input, out } => {
            for p in plot_summaries(&input, &out)? {
                println!("{}", p.display());
            }
            Ok(0)
        }
        Command::ValidateConfig { path } => validate_config(&path),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
