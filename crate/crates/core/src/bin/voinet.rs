use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use voinet::control::gain_summary;
use voinet::harness::export::export_json;
use voinet::harness::monte_carlo::{run_episodes, summarize};
use voinet::harness::{
    calibrate_hop_lambda, compare_policies, export_summary, export_trace, pendulum_scenario, InputMode, ScenarioConfig, Simulator,
};
use voinet::scheduling::parse_policies;
use voinet::{Error, Result};

#[derive(Parser)]
#[command(name = "voinet", version, about = "Joint control and transmission scheduling over multi-hop networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run Monte Carlo episodes; writes trace.csv (first seed), summary.json and gains.json.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long, env = "VOINET_SEED")]
        seed: Option<u64>,
        /// `dvoi`, `threshold` or `periodic:p`; comma-separated for per-hop policies.
        #[arg(long)]
        policy: Option<String>,
        #[arg(long)]
        input_mode: Option<InputMode>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Paired comparison of the scenario policy against a baseline on shared seeds.
    Compare {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = "periodic:1")]
        baseline: String,
        #[arg(long)]
        policy: Option<String>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long, env = "VOINET_SEED")]
        seed: Option<u64>,
        /// Also write the full report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bisect the multiplier of one hop towards a target request rate.
    Calibrate {
        #[arg(long)]
        hop: usize,
        #[arg(long)]
        target_rate: f64,
        /// Defaults to the built-in pendulum scenario.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        lambda_min: f64,
        #[arg(long, default_value_t = 1000.0)]
        lambda_max: f64,
        #[arg(long, default_value_t = 50)]
        runs: usize,
    },
    /// Print the built-in inverted-pendulum scenario.
    Pendulum {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err.category() {
        "config" => 2,
        "model" => 3,
        "dimension" => 4,
        "numeric" => 5,
        "trace" => 6,
        "calibration" => 7,
        "io" => 8,
        _ => 9,
    }
}

fn apply_overrides(config: &mut ScenarioConfig, policy: Option<&str>, input_mode: Option<InputMode>, seed: Option<u64>, runs: Option<usize>) -> Result<()> {
    if let Some(spec) = policy {
        config.policies = parse_policies(spec, config.topology.max_hops())?;
    }
    if let Some(mode) = input_mode {
        config.input_mode = mode;
    }
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(runs) = runs {
        config.runs = runs;
    }
    config.validate()
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            scenario,
            runs,
            seed,
            policy,
            input_mode,
            out_dir,
        } => {
            let mut config = ScenarioConfig::load(&scenario)?;
            apply_overrides(&mut config, policy.as_deref(), input_mode, seed, runs)?;
            if config.runs == 0 {
                return Err(Error::Config("runs must be at least 1".into()));
            }
            let sim = Simulator::new(&config)?;
            create_dir(&out_dir)?;
            export_trace(&sim.episode(config.seed)?, &out_dir.join("trace.csv"))?;
            let summary = summarize(&sim, run_episodes(&sim, config.runs, config.seed)?);
            export_summary(&summary, &out_dir.join("summary.json"))?;
            if config.horizon() > 0 {
                let gains: Vec<_> = config
                    .plants
                    .iter()
                    .zip(&sim.gains)
                    .map(|(p, g)| gain_summary(p, g))
                    .collect::<Result<_>>()?;
                export_json(&gains, &out_dir.join("gains.json"))?;
            }
            println!(
                "runs={} mean_cost={:.6} augmented_cost={:.6} rates={:?}",
                summary.runs, summary.mean_cost, summary.augmented_cost, summary.rates.per_hop
            );
        }
        Command::Compare {
            scenario,
            baseline,
            policy,
            runs,
            seed,
            out,
        } => {
            let mut config = ScenarioConfig::load(&scenario)?;
            apply_overrides(&mut config, policy.as_deref(), None, seed, runs)?;
            let base = parse_policies(&baseline, config.topology.max_hops())?;
            let report = compare_policies(&config, &config.policies, &base, config.runs, config.seed)?;
            if let Some(path) = out {
                export_json(&report, &path)?;
            }
            println!(
                "difference={:.6} ci95=[{:.6}, {:.6}] verdict: {}",
                report.mean_difference,
                report.ci95[0],
                report.ci95[1],
                report.verdict_text()
            );
        }
        Command::Calibrate {
            hop,
            target_rate,
            scenario,
            lambda_min,
            lambda_max,
            runs,
        } => {
            let config = match scenario {
                Some(path) => ScenarioConfig::load(&path)?,
                None => pendulum_scenario(),
            };
            let lambda = calibrate_hop_lambda(&config, hop, target_rate, (lambda_min, lambda_max), runs)?;
            println!("{lambda}");
        }
        Command::Pendulum { out } => {
            let text = pendulum_scenario().to_json();
            match out {
                Some(path) => std::fs::write(&path, text + "\n").map_err(|source| Error::Io { path, source })?,
                None => println!("{text}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error[{}]: {err}", err.category());
            ExitCode::from(exit_code(&err))
        }
    }
}
