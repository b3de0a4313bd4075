mod commands;
mod config;
mod error;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;

/// Activity-shifting recommendations from appliance-level consumption and
/// day-ahead carbon intensity and price signals.
///
/// Exit codes: 0 success, 1 invalid input or configuration, 2 internal
/// error. Errors are printed to stderr as one JSON line.
#[derive(Debug, Parser)]
#[command(name = "actshift", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Serialize)]
struct Global {
    /// Run configuration (TOML). Flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Random seed for model training.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Model family: logreg, forest or mlp.
    #[arg(long, global = true)]
    family: Option<String>,
    /// Output directory for artifacts, reports and manifests.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Raw consumption CSV (REFIT layout).
    #[arg(long, global = true)]
    consumption: Option<PathBuf>,
    /// Hourly dataset written by `ingest`.
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    /// Device catalog (TOML).
    #[arg(long, global = true)]
    catalog: Option<PathBuf>,
    /// Activity mapping (TOML).
    #[arg(long, global = true)]
    mapping: Option<PathBuf>,
    /// Carbon intensity fixture (`datetime,value`, gCO2/kWh).
    #[arg(long, global = true)]
    carbon_file: Option<PathBuf>,
    /// Day-ahead price fixture (`datetime,value`, currency/MWh).
    #[arg(long, global = true)]
    price_file: Option<PathBuf>,
    /// Model store directory.
    #[arg(long, global = true)]
    models: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize, Default)]
pub struct RecommendFlags {
    /// Weight of emissions against price, in [0, 1].
    #[arg(long)]
    ratio: Option<f64>,
    /// Let flexible activities start outside the predicted availability hours.
    #[arg(long, action = clap::ArgAction::Set, value_name = "BOOL")]
    aval_off: Option<bool>,
    /// Availability probability threshold.
    #[arg(long)]
    avail_th: Option<f64>,
    /// Activity probability threshold.
    #[arg(long)]
    act_th: Option<f64>,
}

#[derive(Debug, Args, Serialize, Default)]
pub struct DayRange {
    /// First evaluated date (default: first predictable day).
    #[arg(long)]
    from: Option<NaiveDate>,
    /// Last evaluated date, inclusive (default: last predictable day).
    #[arg(long)]
    to: Option<NaiveDate>,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
enum Command {
    /// Resample the consumption file to hourly energy and derive usage,
    /// availability and lag features.
    Ingest,
    /// Fit availability and usage models for one day and store them.
    Train {
        /// Day whose horizon the models predict (YYYY-MM-DD).
        #[arg(long)]
        date: NaiveDate,
    },
    /// Recommend start hours for the activities predicted on one day.
    Recommend {
        #[arg(long)]
        date: NaiveDate,
        #[command(flatten)]
        flags: RecommendFlags,
    },
    /// Score agents, cold start or savings over the dataset.
    Evaluate {
        #[command(subcommand)]
        what: Evaluate,
    },
    /// Search aval_off and both thresholds for the largest yearly saving.
    Gridsearch {
        #[arg(long, value_enum)]
        objective: ObjectiveArg,
        #[command(flatten)]
        range: DayRange,
    },
    /// Write a synthetic household with signals, catalog, mapping and config.
    Synth {
        /// Number of days.
        #[arg(long, default_value_t = 365)]
        days: usize,
        /// First day (YYYY-MM-DD).
        #[arg(long, default_value = "2014-01-06")]
        start: NaiveDate,
        /// Power samples per hour in the consumption file.
        #[arg(long, default_value_t = 6)]
        per_hour: usize,
        /// First day of the signal calendar.
        #[arg(long, default_value = "2021-01-01")]
        signal_start: NaiveDate,
        /// Days of signal history.
        #[arg(long, default_value_t = 365)]
        signal_days: usize,
    },
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
enum Evaluate {
    /// Daily AUC of the availability and usage forecasts and the activity
    /// agreement score.
    Agents {
        #[command(flatten)]
        range: DayRange,
        /// Usage threshold of the agreement score.
        #[arg(long)]
        use_th: Option<f64>,
        /// Activity threshold of the agreement score.
        #[arg(long)]
        act_th: Option<f64>,
    },
    /// Days of training data an agent needs to reach a score threshold.
    Coldstart {
        /// availability, activity, or usage:<device>.
        #[arg(long)]
        agent: String,
        /// First test day (default: 30 days before the end of the data).
        #[arg(long)]
        test_from: Option<NaiveDate>,
        /// Length of the fixed test period in days.
        #[arg(long, default_value_t = 30)]
        test_days: usize,
        /// Score to reach (default: AUC 0.79, agreement 0.65).
        #[arg(long)]
        threshold: Option<f64>,
        /// Stop at the first training length reaching the threshold.
        #[arg(long)]
        stop_at_threshold: bool,
    },
    /// Replay the recommender over the data and count accepted savings.
    Savings {
        #[command(flatten)]
        range: DayRange,
        #[command(flatten)]
        flags: RecommendFlags,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ObjectiveArg {
    Emissions,
    Price,
}

fn configure(g: &Global) -> Result<RunConfig, CliError> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = Some(s);
    }
    if let Some(f) = &g.family {
        cfg.model.family = f.parse()?;
    }
    let p = &mut cfg.paths;
    for (slot, flag) in [
        (&mut p.output, &g.out),
        (&mut p.consumption, &g.consumption),
        (&mut p.dataset, &g.dataset),
        (&mut p.catalog, &g.catalog),
        (&mut p.mapping, &g.mapping),
        (&mut p.carbon, &g.carbon_file),
        (&mut p.price, &g.price_file),
        (&mut p.models, &g.models),
    ] {
        if flag.is_some() {
            slot.clone_from(flag);
        }
    }
    Ok(cfg)
}

fn apply(cfg: &mut RunConfig, f: &RecommendFlags) {
    let r = &mut cfg.recommend;
    r.emissions_ratio = f.ratio.unwrap_or(r.emissions_ratio);
    r.aval_off = f.aval_off.unwrap_or(r.aval_off);
    r.availability_threshold = f.avail_th.unwrap_or(r.availability_threshold);
    r.activity_threshold = f.act_th.unwrap_or(r.activity_threshold);
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let mut cfg = configure(&cli.global)?;
    let command = serde_json::to_value(&cli.command)?;
    match &cli.command {
        Command::Recommend { flags, .. } | Command::Evaluate { what: Evaluate::Savings { flags, .. } } => {
            apply(&mut cfg, flags)
        }
        Command::Evaluate {
            what: Evaluate::Agents { use_th, act_th, .. },
        } => {
            cfg.evaluate.use_th = use_th.unwrap_or(cfg.evaluate.use_th);
            cfg.evaluate.act_th = act_th.unwrap_or(cfg.evaluate.act_th);
        }
        _ => {}
    }
    cfg.validate()?;
    let run = run::Run::new(cfg, command);
    match cli.command {
        Command::Ingest => commands::ingest(run),
        Command::Train { date } => commands::train(run, date),
        Command::Recommend { date, .. } => commands::recommend(run, date),
        Command::Evaluate { what } => match what {
            Evaluate::Agents { range, .. } => commands::evaluate_agents(run, &range),
            Evaluate::Coldstart {
                agent,
                test_from,
                test_days,
                threshold,
                stop_at_threshold,
            } => commands::evaluate_coldstart(run, &agent, test_from, test_days, threshold, stop_at_threshold),
            Evaluate::Savings { range, .. } => commands::evaluate_savings(run, &range),
        },
        Command::Gridsearch { objective, range } => {
            let objective = match objective {
                ObjectiveArg::Emissions => actshift::eval::Objective::Emissions,
                ObjectiveArg::Price => actshift::eval::Objective::Price,
            };
            commands::gridsearch(run, objective, &range)
        }
        Command::Synth {
            days,
            start,
            per_hour,
            signal_start,
            signal_days,
        } => commands::synth(run, days, start, per_hour, signal_start, signal_days),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.kind().to_string();
            let detail = e.to_string();
            let first = detail
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or(&msg)
                .trim_start_matches("error: ");
            eprintln!("{}", CliError::user(first).to_line());
            return ExitCode::from(1);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
