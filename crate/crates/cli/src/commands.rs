use std::ops::Range;
use std::path::PathBuf;

use actshift::activity::ActivityMapping;
use actshift::eval::{
    cold_start, cold_start_csv, evaluate_agents as score_agents, grid_search, signals_for_bundles, simulate_savings,
    AgentKind, ColdStartOptions, Objective,
};
use actshift::ingest::{engineer_features, load_readings, resample_hourly, DeviceCatalog, HourlyDataset, ReadOptions};
use actshift::models::{fit_for_horizon, horizon_rows, predict_proba, RollingOptions, Target, TrainedModel};
use actshift::predictors::{forecast_household, DayBundle};
use actshift::recommend::{build_schedule, mapping_energy};
use actshift::signals::{midnight, rfc3339, write_fixture, FixtureSource, SignalKind, SignalSet};
use actshift::store::ModelStore;
use actshift::synth::{synthetic_signals, SynthHousehold};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::run::{sha256_bytes, Run};
use crate::DayRange;

fn load_catalog(run: &mut Run) -> Result<DeviceCatalog, CliError> {
    let path = run.config.require(&run.config.paths.catalog, "catalog", "catalog")?.to_path_buf();
    let catalog = DeviceCatalog::load(&path)?;
    run.input(&path)?;
    Ok(catalog)
}

fn load_mapping(run: &mut Run, ds: &HourlyDataset) -> Result<ActivityMapping, CliError> {
    let path = run.config.require(&run.config.paths.mapping, "mapping", "mapping")?.to_path_buf();
    let mapping = ActivityMapping::load(&path)?;
    run.input(&path)?;
    for d in mapping.devices() {
        match ds.catalog.get(d) {
            None => return Err(CliError::user(format!("{}: device `{d}` is not in the catalog", path.display()))),
            Some(spec) if !spec.shiftable => {
                return Err(CliError::user(format!("{}: device `{d}` is not shiftable", path.display())))
            }
            Some(_) => {}
        }
    }
    Ok(mapping)
}

fn load_dataset(run: &mut Run) -> Result<HourlyDataset, CliError> {
    let catalog = load_catalog(run)?;
    let path = run.config.dataset();
    if !path.exists() {
        return Err(CliError::user(format!(
            "hourly dataset {} not found; run `actshift ingest` first",
            path.display()
        )));
    }
    let ds = HourlyDataset::load_csv(&path, &catalog)?;
    run.input(&path)?;
    Ok(ds)
}

fn load_signals(run: &mut Run) -> Result<SignalSet<f64>, CliError> {
    let carbon = run.config.require(&run.config.paths.carbon, "carbon", "carbon-file")?.to_path_buf();
    let price = run.config.require(&run.config.paths.price, "price", "price-file")?.to_path_buf();
    let set = SignalSet::new(
        Box::new(FixtureSource::<f64>::load(&carbon, SignalKind::Carbon)?),
        Box::new(FixtureSource::<f64>::load(&price, SignalKind::Price)?),
    );
    run.input(&carbon)?;
    run.input(&price)?;
    Ok(set)
}

/// Mean hourly kWh of each mapping device; estimated from the data where
/// the catalog gives none.
fn device_kwh(ds: &HourlyDataset, mapping: &ActivityMapping) -> Result<Vec<f64>, CliError> {
    Ok(mapping_energy(mapping, &ds.catalog.with_estimated_averages(ds))?)
}

fn day_index(ds: &HourlyDataset, date: NaiveDate) -> Result<usize, CliError> {
    let offset = midnight(date) - ds.start;
    if offset < 0 || offset as usize / 86_400 >= ds.days() {
        return Err(CliError::user(format!(
            "{date} is outside the data ({} to {})",
            rfc3339(ds.start),
            rfc3339(ds.hour_timestamp(ds.hours()))
        )));
    }
    Ok(offset as usize / 86_400)
}

fn predictable(ds: &HourlyDataset, opts: &RollingOptions) -> Range<usize> {
    opts.schedule.predictable_days(ds.hours(), opts.hour_offset)
}

fn check_predictable(ds: &HourlyDataset, opts: &RollingOptions, date: NaiveDate) -> Result<usize, CliError> {
    let day = day_index(ds, date)?;
    let ok = predictable(ds, opts);
    if !ok.contains(&day) {
        return Err(CliError::user(format!(
            "{date} cannot be predicted: needs {} days of history and a complete horizon",
            opts.schedule.headstart_days
        )));
    }
    Ok(day)
}

fn day_range(ds: &HourlyDataset, opts: &RollingOptions, r: &DayRange) -> Result<Range<usize>, CliError> {
    let all = predictable(ds, opts);
    if all.is_empty() {
        return Err(CliError::user(format!(
            "{} days of data leave no day to predict after the {}-day headstart",
            ds.days(),
            opts.schedule.headstart_days
        )));
    }
    let start = match r.from {
        Some(d) => check_predictable(ds, opts, d)?,
        None => all.start,
    };
    let end = match r.to {
        Some(d) => check_predictable(ds, opts, d)? + 1,
        None => all.end,
    };
    if start >= end {
        return Err(CliError::user("--from is after --to"));
    }
    Ok(start..end)
}

fn targets(ds: &HourlyDataset) -> Vec<Target> {
    let mut t = vec![Target::Availability];
    t.extend(
        ds.catalog
            .devices
            .iter()
            .enumerate()
            .filter(|(_, d)| d.shiftable)
            .map(|(i, _)| Target::Device(i)),
    );
    t
}

#[derive(Serialize, Deserialize)]
struct ForecastCache {
    key: String,
    bundles: Vec<DayBundle<f64>>,
}

/// Rolling forecasts for `days`, cached in the output directory under a key
/// of everything they depend on.
fn forecasts(run: &mut Run, ds: &HourlyDataset, days: Range<usize>) -> Result<Vec<DayBundle<f64>>, CliError> {
    let opts = run.config.rolling()?;
    let dataset = crate::run::sha256_file(&run.config.dataset())?;
    let key = sha256_bytes(
        serde_json::to_string(&(&dataset, &ds.catalog, &opts, &days))?.as_bytes(),
    );
    let path = run.config.output().join(format!("forecasts-{}.json", opts.family));
    if let Ok(text) = std::fs::read_to_string(&path) {
        if let Ok(cache) = serde_json::from_str::<ForecastCache>(&text) {
            if cache.key == key {
                run.input(&path)?;
                return Ok(cache.bundles);
            }
        }
    }
    let bundles = forecast_household::<f64>(ds, &opts, Some(days))?;
    let json = serde_json::to_string(&ForecastCache { key, bundles })?;
    run.write(&path, json.as_bytes())?;
    let cache: ForecastCache = serde_json::from_str(&json)?;
    Ok(cache.bundles)
}

#[derive(Serialize)]
struct DeviceSummary {
    id: String,
    used_hours: usize,
    usage_rate: f64,
    avg_kwh: Option<f64>,
}

#[derive(Serialize)]
struct IngestReport {
    start: String,
    days: usize,
    hours: usize,
    gap_hours: usize,
    malformed_rows: usize,
    availability_rate: f64,
    devices: Vec<DeviceSummary>,
}

pub fn ingest(mut run: Run) -> Result<(), CliError> {
    let catalog = load_catalog(&mut run)?;
    let path = run.config.require(&run.config.paths.consumption, "consumption", "consumption")?.to_path_buf();
    let loaded = load_readings(&path, ReadOptions::default())?;
    run.input(&path)?;
    let hourly = resample_hourly(&loaded.readings)?;
    let ds = engineer_features(&hourly, &catalog)?;
    let mut csv = Vec::new();
    ds.write_csv(&mut csv)?;
    let out = run.config.dataset();
    run.write(&out, &csv)?;

    let hours = ds.hours().max(1) as f64;
    let estimated = ds.catalog.with_estimated_averages(&ds);
    let report = IngestReport {
        start: rfc3339(ds.start),
        days: ds.days(),
        hours: ds.hours(),
        gap_hours: ds.gap.iter().filter(|&&g| g).count(),
        malformed_rows: loaded.malformed_rows,
        availability_rate: ds.availability.iter().filter(|&&a| a).count() as f64 / hours,
        devices: estimated
            .devices
            .iter()
            .zip(&ds.usage)
            .map(|(d, u)| {
                let used = u.iter().filter(|&&x| x).count();
                DeviceSummary {
                    id: d.id.clone(),
                    used_hours: used,
                    usage_rate: used as f64 / hours,
                    avg_kwh: d.avg_kwh,
                }
            })
            .collect(),
    };
    let report_path = run.config.output().join("ingest.json");
    run.write_report(&report_path, &report)?;
    println!(
        "ingested {} days ({} gap hours, {} malformed rows) into {}",
        report.days,
        report.gap_hours,
        report.malformed_rows,
        out.display()
    );
    run.finish("ingest")?;
    Ok(())
}

#[derive(Serialize)]
struct TrainedEntry {
    target: String,
    path: PathBuf,
    hyperparams: actshift::models::Hyperparams,
    trained_through: Option<i64>,
    degenerate: bool,
}

#[derive(Serialize)]
struct TrainReport {
    date: NaiveDate,
    horizon_start: String,
    models: Vec<TrainedEntry>,
}

pub fn train(mut run: Run, date: NaiveDate) -> Result<(), CliError> {
    let ds = load_dataset(&mut run)?;
    let opts = run.config.rolling()?;
    let day = check_predictable(&ds, &opts, date)?;
    let horizon = opts.horizon_hour(day);
    let targets = targets(&ds);
    let fitted: Vec<actshift::Result<TrainedModel<f64>>> = std::thread::scope(|s| {
        let handles: Vec<_> = targets
            .iter()
            .map(|&t| {
                let (ds, opts) = (&ds, &opts);
                s.spawn(move || fit_for_horizon::<f64>(ds, t, opts, horizon))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("training thread panicked")).collect()
    });
    let store = ModelStore::open(run.config.models())?;
    let mut models = Vec::new();
    for (t, model) in targets.iter().zip(fitted) {
        let model = model?;
        let name = t.name(&ds);
        let path = store.save(&name, &model)?;
        let bytes = std::fs::read(&path).map_err(|e| CliError::internal(format!("{}: {e}", path.display())))?;
        run.output_written(&path, &bytes);
        models.push(TrainedEntry {
            target: name,
            path,
            hyperparams: model.hyperparams.clone(),
            trained_through: model.trained_through,
            degenerate: model.degenerate,
        });
    }
    let report = TrainReport {
        date,
        horizon_start: rfc3339(ds.hour_timestamp(horizon)),
        models,
    };
    run.write_report(&run.config.output().join(format!("train-{date}.json")), &report)?;
    println!("trained {} models for {date} into {}", report.models.len(), store.root().display());
    run.finish(&format!("train-{date}"))?;
    Ok(())
}

#[derive(Serialize)]
struct RecommendReport<'a> {
    date: NaiveDate,
    availability: &'a [f64],
    usage: &'a [(String, Vec<f64>)],
    schedule: &'a actshift::recommend::ScheduleReport<f64>,
}

pub fn recommend(mut run: Run, date: NaiveDate) -> Result<(), CliError> {
    let ds = load_dataset(&mut run)?;
    let mapping = load_mapping(&mut run, &ds)?;
    let signals = load_signals(&mut run)?;
    let opts = run.config.rolling()?;
    let day = check_predictable(&ds, &opts, date)?;
    let horizon = opts.horizon_hour(day);
    let store_dir = run.config.models();
    if !store_dir.is_dir() {
        return Err(CliError::user(format!(
            "model store {} not found; run `actshift train --date {date}` first",
            store_dir.display()
        )));
    }
    let store = ModelStore::open(&store_dir)?;
    let mut probs = Vec::new();
    for t in targets(&ds) {
        let name = t.name(&ds);
        let path = store.path(&name);
        if !path.exists() {
            return Err(CliError::user(format!(
                "no model for `{name}` in {}; run `actshift train --date {date}` first",
                store_dir.display()
            )));
        }
        let model: TrainedModel<f64> = store.load(&name)?;
        run.input(&path)?;
        if model.trained_through.is_some_and(|h| h > horizon as i64) {
            return Err(CliError::user(format!(
                "model for `{name}` was trained on data after {date}; retrain for this date"
            )));
        }
        let rows = horizon_rows::<f64>(&ds, t, horizon)?;
        probs.push((name, predict_proba(&model, &rows, &t.schema(&ds))?));
    }
    let (_, availability) = probs.remove(0);
    let bundle = DayBundle {
        day,
        horizon_hour: horizon,
        horizon_start: ds.hour_timestamp(horizon),
        availability,
        usage: probs,
    };
    let pair = signals.for_date(date, opts.hour_offset as u32)?;
    let kwh = device_kwh(&ds, &mapping)?;
    let mut schedule = build_schedule(
        &bundle.availability,
        &bundle.usage_for(&mapping)?,
        &pair,
        &mapping,
        &kwh,
        &run.config.recommend,
    )?;
    // report in consumption time, not the aligned signal calendar
    schedule.horizon_start = bundle.horizon_start;
    let table = schedule.render_table();
    let out = run.config.output();
    run.write(&out.join(format!("recommend-{date}.txt")), table.as_bytes())?;
    let report = RecommendReport {
        date,
        availability: &bundle.availability,
        usage: &bundle.usage,
        schedule: &schedule,
    };
    run.write_report(&out.join(format!("recommend-{date}.json")), &report)?;
    print!("{table}");
    run.finish(&format!("recommend-{date}"))?;
    Ok(())
}

pub fn evaluate_agents(mut run: Run, range: &DayRange) -> Result<(), CliError> {
    let ds = load_dataset(&mut run)?;
    let mapping = load_mapping(&mut run, &ds)?;
    let opts = run.config.rolling()?;
    let days = day_range(&ds, &opts, range)?;
    let bundles = forecasts(&mut run, &ds, days)?;
    let e = &run.config.evaluate;
    let report = score_agents(&ds, &bundles, &mapping, e.use_th, e.act_th)?;

    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut csv = String::from("day,date,availability");
    for (id, _) in &report.usage {
        csv.push_str(&format!(",{id}"));
    }
    csv.push_str(",activity\n");
    for (i, b) in bundles.iter().enumerate() {
        csv.push_str(&format!("{},{},{}", b.day, &rfc3339(b.horizon_start)[..10], fmt(report.availability.per_day[i])));
        for (_, s) in &report.usage {
            csv.push_str(&format!(",{}", fmt(s.per_day[i])));
        }
        csv.push_str(&format!(",{}\n", report.activity.per_day[i]));
    }
    let out = run.config.output();
    run.write(&out.join("agents.csv"), csv.as_bytes())?;
    run.write_report(&out.join("agents.json"), &report)?;
    println!(
        "{} days: availability AUC {}, usage AUC {}, activity agreement {}",
        report.days,
        fmt(report.availability.mean),
        fmt(report.usage_mean),
        fmt(report.activity.mean)
    );
    run.finish("evaluate-agents")?;
    Ok(())
}

fn parse_agent(s: &str) -> Result<AgentKind, CliError> {
    match s {
        "availability" => Ok(AgentKind::Availability),
        "activity" => Ok(AgentKind::Activity),
        _ => match s.strip_prefix("usage:") {
            Some(id) if !id.is_empty() => Ok(AgentKind::Usage(id.to_string())),
            _ => Err(CliError::user(format!(
                "unknown agent `{s}` (expected availability, activity or usage:<device>)"
            ))),
        },
    }
}

pub fn evaluate_coldstart(
    mut run: Run,
    agent: &str,
    test_from: Option<NaiveDate>,
    test_days: usize,
    threshold: Option<f64>,
    stop_at_threshold: bool,
) -> Result<(), CliError> {
    let agent = parse_agent(agent)?;
    let ds = load_dataset(&mut run)?;
    let mapping = load_mapping(&mut run, &ds)?;
    let opts = run.config.rolling()?;
    let end_all = predictable(&ds, &opts).end;
    let start = match test_from {
        Some(d) => day_index(&ds, d)?,
        None => end_all.saturating_sub(test_days),
    };
    let e = &run.config.evaluate;
    let cs = ColdStartOptions {
        threshold: threshold.unwrap_or(match agent {
            AgentKind::Activity => e.equal_threshold,
            _ => e.auc_threshold,
        }),
        min_days: opts.schedule.headstart_days,
        stop_at_threshold,
        use_th: e.use_th,
        act_th: e.act_th,
    };
    let result = cold_start(&ds, &agent, &mapping, &opts, &cs, start..start + test_days)?;
    let name = match &agent {
        AgentKind::Availability => "availability".to_string(),
        AgentKind::Activity => "activity".to_string(),
        AgentKind::Usage(id) => format!("usage-{id}"),
    };
    let out = run.config.output();
    run.write(&out.join(format!("coldstart-{name}.csv")), cold_start_csv(&result).as_bytes())?;
    run.write_report(&out.join(format!("coldstart-{name}.json")), &result)?;
    match result.days_to_threshold {
        Some(d) => println!("{name}: threshold {} reached with {d} days of training data", cs.threshold),
        None => println!("{name}: threshold {} not reached", cs.threshold),
    }
    run.finish(&format!("coldstart-{name}"))?;
    Ok(())
}

pub fn evaluate_savings(mut run: Run, range: &DayRange) -> Result<(), CliError> {
    let ds = load_dataset(&mut run)?;
    let mapping = load_mapping(&mut run, &ds)?;
    let signals = load_signals(&mut run)?;
    let opts = run.config.rolling()?;
    let days = day_range(&ds, &opts, range)?;
    let bundles = forecasts(&mut run, &ds, days)?;
    let pairs = signals_for_bundles(&signals, &bundles, opts.hour_offset as u32)?;
    let kwh = device_kwh(&ds, &mapping)?;
    let report = simulate_savings(&ds, &bundles, &pairs, &mapping, &kwh, &run.config.recommend)?;
    let out = run.config.output();
    run.write(&out.join("savings-histogram.csv"), report.histogram_csv().as_bytes())?;
    run.write_report(&out.join("savings.json"), &report)?;
    println!(
        "{} accepted recommendations ({:.2}/day): emissions {:.1} gCO2 ({:.1} %), price {:.4} ({:.1} %)",
        report.recommendations,
        report.recommendations_per_day,
        report.total_emissions_saving,
        100.0 * report.relative_emissions_saving,
        report.total_price_saving,
        100.0 * report.relative_price_saving
    );
    run.finish("savings")?;
    Ok(())
}

pub fn gridsearch(mut run: Run, objective: Objective, range: &DayRange) -> Result<(), CliError> {
    let ds = load_dataset(&mut run)?;
    let mapping = load_mapping(&mut run, &ds)?;
    let signals = load_signals(&mut run)?;
    let opts = run.config.rolling()?;
    let days = day_range(&ds, &opts, range)?;
    let bundles = forecasts(&mut run, &ds, days)?;
    let pairs = signals_for_bundles(&signals, &bundles, opts.hour_offset as u32)?;
    let kwh = device_kwh(&ds, &mapping)?;
    let result = grid_search(&ds, &bundles, &pairs, &mapping, &kwh, &run.config.evaluate.grid, objective)?;
    let name = match objective {
        Objective::Emissions => "emissions",
        Objective::Price => "price",
    };
    let out = run.config.output();
    run.write(&out.join(format!("gridsearch-{name}.csv")), result.to_csv().as_bytes())?;
    run.write_report(&out.join(format!("gridsearch-{name}.json")), &result)?;
    let b = &result.best;
    println!(
        "best for {name}: aval_off {} availability threshold {} activity threshold {}",
        b.aval_off, b.availability_threshold, b.activity_threshold
    );
    run.finish(&format!("gridsearch-{name}"))?;
    Ok(())
}

fn run_toml(family: actshift::models::Family, seed: u64) -> String {
    format!(
        "seed = {seed}\n\n\
         [paths]\n\
         consumption = \"house.csv\"\n\
         catalog = \"catalog.toml\"\n\
         mapping = \"mapping.toml\"\n\
         carbon = \"carbon.csv\"\n\
         price = \"price.csv\"\n\
         output = \"out\"\n\n\
         [model]\n\
         family = \"{family}\"\n"
    )
}

pub fn synth(
    mut run: Run,
    days: usize,
    start: NaiveDate,
    per_hour: usize,
    signal_start: NaiveDate,
    signal_days: usize,
) -> Result<(), CliError> {
    if days == 0 || signal_days == 0 {
        return Err(CliError::user("--days and --signal-days must be positive"));
    }
    let seed = run.config.seed()?;
    let out = run.config.output();
    let house = SynthHousehold::new(start, days, seed);
    let mut csv = Vec::new();
    house.write_refit_csv(&mut csv, per_hour)?;
    run.write(&out.join("house.csv"), &csv)?;
    run.write(&out.join("catalog.toml"), house.catalog().to_toml_string()?.as_bytes())?;
    run.write(&out.join("mapping.toml"), house.mapping().to_toml_string()?.as_bytes())?;
    let (carbon, price) = synthetic_signals(seed);
    let from = midnight(signal_start);
    for (name, src) in [("carbon.csv", carbon), ("price.csv", price)] {
        let fixture = src.to_fixture::<f64>(from, signal_days * 24)?;
        let mut bytes = Vec::new();
        write_fixture(&mut bytes, from, fixture.values())?;
        run.write(&out.join(name), &bytes)?;
    }
    run.write(&out.join("run.toml"), run_toml(run.config.model.family, seed).as_bytes())?;
    println!("wrote a {days}-day synthetic household to {}", out.display());
    run.finish("synth")?;
    Ok(())
}
