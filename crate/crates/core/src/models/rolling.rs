//! Day-by-day refitting over an hourly dataset.
//!
//! A horizon is 24 hours starting at hour index `H`. The model predicting it
//! is fitted on the non-gap hours of `[H - window, H)`; its hyperparameters
//! come from the most recent tuning event, held every `retune_interval_days`
//! starting at the first prediction.

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{encode, fit_inner, seed_for, tune, Family, FeatureSchema, Hyperparams, TrainedModel, TrainingSet};
use crate::error::{Error, Result};
use crate::ingest::{HourlyDataset, LagColumns, HOURS_PER_WEEK};
use crate::scalar::Scalar;
use crate::signals::HORIZON;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "device")]
pub enum Target {
    Availability,
    /// Device index in the dataset's catalog.
    Device(usize),
}

impl Target {
    pub fn name(self, ds: &HourlyDataset) -> String {
        match self {
            Target::Availability => "availability".to_string(),
            Target::Device(d) => ds.catalog.devices[d].id.clone(),
        }
    }

    pub fn labels(self, ds: &HourlyDataset) -> &[bool] {
        match self {
            Target::Availability => &ds.availability,
            Target::Device(d) => &ds.usage[d],
        }
    }

    fn lags(self, ds: &HourlyDataset) -> &LagColumns {
        match self {
            Target::Availability => &ds.availability_lags,
            Target::Device(d) => &ds.usage_lags[d],
        }
    }

    /// Time columns plus this target's own lag columns, nothing else.
    pub fn schema(self, ds: &HourlyDataset) -> FeatureSchema {
        FeatureSchema::for_target(&self.name(ds))
    }

    fn row<T: Scalar>(self, ds: &HourlyDataset, h: usize) -> Vec<T> {
        let lags = self.lags(ds);
        encode(ds.time[h], lags.lag1[h], lags.lag168[h])
    }
}

/// Rows for the hours in `hours`, skipping gap hours and the first week,
/// whose weekly lag would read from before the data starts.
pub fn training_set<T: Scalar>(
    ds: &HourlyDataset,
    target: Target,
    hours: Range<usize>,
) -> TrainingSet<T> {
    let labels = target.labels(ds);
    let (rows, labels) = hours
        .filter(|&h| h >= HOURS_PER_WEEK && !ds.gap[h])
        .map(|h| (target.row(ds, h), labels[h]))
        .unzip();
    TrainingSet { rows, labels }
}

/// Feature rows for the 24 hours starting at `start`.
pub fn horizon_rows<T: Scalar>(
    ds: &HourlyDataset,
    target: Target,
    start: usize,
) -> Result<Vec<Vec<T>>> {
    if start + HORIZON > ds.hours() {
        return Err(Error::Config(format!(
            "horizon at hour {start} extends past the end of the data ({} hours)",
            ds.hours()
        )));
    }
    Ok((start..start + HORIZON).map(|h| target.row(ds, h)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSchedule {
    pub headstart_days: usize,
    pub retune_interval_days: usize,
    pub training_window_days: usize,
    /// Trailing share of the tuning window used for validation.
    pub validation_fraction: f64,
}

impl Default for TrainingSchedule {
    fn default() -> Self {
        Self {
            headstart_days: 28,
            retune_interval_days: 120,
            training_window_days: 180,
            validation_fraction: 0.2,
        }
    }
}

impl TrainingSchedule {
    /// Hour index of the first predicted horizon.
    pub fn first_horizon(&self, hour_offset: usize) -> usize {
        self.headstart_days * 24 + hour_offset
    }

    /// Index of the tuning event governing the horizon at `horizon_hour`.
    pub fn tuning_event(&self, horizon_hour: usize, hour_offset: usize) -> Result<usize> {
        let first = self.first_horizon(hour_offset);
        if horizon_hour < first {
            return Err(Error::InsufficientHistory {
                hour: horizon_hour,
                needed: first,
            });
        }
        Ok((horizon_hour - first) / (self.retune_interval_days.max(1) * 24))
    }

    /// Hour index at which tuning event `k` happens.
    pub fn tuning_hour(&self, event: usize, hour_offset: usize) -> usize {
        self.first_horizon(hour_offset) + event * self.retune_interval_days * 24
    }

    /// Training hours for a model whose first prediction is `hour`.
    pub fn window(&self, hour: usize) -> Range<usize> {
        hour.saturating_sub(self.training_window_days * 24)..hour
    }

    /// Days (0-based) whose horizons can be predicted in a dataset of
    /// `hours` hours.
    pub fn predictable_days(&self, hours: usize, hour_offset: usize) -> Range<usize> {
        let first = self.headstart_days;
        let last = (hours.saturating_sub(hour_offset + HORIZON)) / 24 + 1;
        first..last.max(first)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingOptions {
    pub family: Family,
    /// Defaults to the family's grid.
    #[serde(default)]
    pub grid: Option<Vec<Hyperparams>>,
    #[serde(default)]
    pub schedule: TrainingSchedule,
    pub seed: u64,
    /// Hours after midnight at which each horizon starts.
    #[serde(default)]
    pub hour_offset: usize,
}

impl RollingOptions {
    pub fn new(family: Family, seed: u64) -> Self {
        Self {
            family,
            grid: None,
            schedule: TrainingSchedule::default(),
            seed,
            hour_offset: 0,
        }
    }

    pub fn grid(&self) -> Vec<Hyperparams> {
        self.grid.clone().unwrap_or_else(|| self.family.default_grid())
    }

    pub fn horizon_hour(&self, day: usize) -> usize {
        day * 24 + self.hour_offset
    }
}

/// 24-hour probabilities for one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DayForecast<T> {
    pub day: usize,
    pub horizon_hour: usize,
    pub probs: Vec<T>,
    pub hyperparams: Hyperparams,
    pub degenerate: bool,
}

fn tuned_params<T: Scalar>(
    ds: &HourlyDataset,
    target: Target,
    opts: &RollingOptions,
    event: usize,
    seed: u64,
) -> Result<Hyperparams> {
    let grid = opts.grid();
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let hour = opts.schedule.tuning_hour(event, opts.hour_offset);
    let set: TrainingSet<T> = training_set(ds, target, opts.schedule.window(hour));
    let (train_part, validation) = set.split_tail(opts.schedule.validation_fraction);
    if train_part.is_empty() || validation.is_empty() {
        return Ok(grid[0].clone());
    }
    Ok(tune(&grid, &train_part, &validation, &target.schema(ds), seed)?.best)
}

/// Hyperparameters chosen at tuning event `event` (0 is the first
/// prediction, then one every retune interval).
pub fn tuned_hyperparams<T: Scalar>(
    ds: &HourlyDataset,
    target: Target,
    opts: &RollingOptions,
    event: usize,
) -> Result<Hyperparams> {
    tuned_params::<T>(ds, target, opts, event, seed_for(opts.seed, &target.name(ds)))
}

fn fit_window<T: Scalar>(
    ds: &HourlyDataset,
    target: Target,
    opts: &RollingOptions,
    hyperparams: &Hyperparams,
    horizon_hour: usize,
    seed: u64,
) -> Result<TrainedModel<T>> {
    let set: TrainingSet<T> = training_set(ds, target, opts.schedule.window(horizon_hour));
    if set.is_empty() {
        return Err(Error::InsufficientHistory {
            hour: horizon_hour,
            needed: opts.schedule.first_horizon(opts.hour_offset),
        });
    }
    let (mut model, _) = fit_inner(hyperparams, &set, None, &target.schema(ds), seed)?;
    model.trained_through = Some(horizon_hour as i64);
    Ok(model)
}

/// The model that predicts the horizon starting at `horizon_hour`, tuned at
/// the governing tuning event and fitted on the window before the horizon.
pub fn fit_for_horizon<T: Scalar>(
    ds: &HourlyDataset,
    target: Target,
    opts: &RollingOptions,
    horizon_hour: usize,
) -> Result<TrainedModel<T>> {
    let event = opts.schedule.tuning_event(horizon_hour, opts.hour_offset)?;
    let seed = seed_for(opts.seed, &target.name(ds));
    let hp = tuned_params::<T>(ds, target, opts, event, seed)?;
    fit_window(ds, target, opts, &hp, horizon_hour, seed)
}

/// Refits for every predictable day in `days` (all of them when `None`) and
/// returns each day's probabilities. Days before the headstart are skipped.
pub fn rolling_fit_predict<T: Scalar>(
    ds: &HourlyDataset,
    target: Target,
    opts: &RollingOptions,
    days: Option<Range<usize>>,
) -> Result<Vec<DayForecast<T>>> {
    let available = opts.schedule.predictable_days(ds.hours(), opts.hour_offset);
    let days = match days {
        Some(r) => r.start.max(available.start)..r.end.min(available.end),
        None => available,
    };
    let seed = seed_for(opts.seed, &target.name(ds));
    let schema = target.schema(ds);
    let mut tuned: BTreeMap<usize, Hyperparams> = BTreeMap::new();
    let mut out = Vec::with_capacity(days.len());
    for day in days {
        let horizon = opts.horizon_hour(day);
        let event = opts.schedule.tuning_event(horizon, opts.hour_offset)?;
        if !tuned.contains_key(&event) {
            let hp = tuned_params::<T>(ds, target, opts, event, seed)?;
            tuned.insert(event, hp);
        }
        let hp = &tuned[&event];
        let model: TrainedModel<T> = fit_window(ds, target, opts, hp, horizon, seed)?;
        let rows = horizon_rows(ds, target, horizon)?;
        let probs = super::predict_proba(&model, &rows, &schema)?;
        out.push(DayForecast {
            day,
            horizon_hour: horizon,
            probs,
            hyperparams: model.hyperparams.clone(),
            degenerate: model.degenerate,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{engineer_features, DeviceCatalog, DeviceSpec, HourlyEnergy};

    /// `days` days starting Monday 2014-01-06; the TV is on 18:00-22:00
    /// every day.
    fn daily_pattern(days: usize) -> HourlyDataset {
        let hours = days * 24;
        let tv = (0..hours)
            .map(|h| if (18..=22).contains(&(h % 24)) { 120.0 } else { 0.0 })
            .collect();
        let hourly = HourlyEnergy {
            start: 1_388_966_400,
            devices: vec!["tv".into()],
            energy: vec![tv],
            gap: vec![false; hours],
        };
        let catalog = DeviceCatalog::new(vec![DeviceSpec {
            availability: true,
            ..DeviceSpec::new("tv")
        }])
        .unwrap();
        engineer_features(&hourly, &catalog).unwrap()
    }

    #[test]
    fn thirty_days_predict_days_29_and_30() {
        let ds = daily_pattern(30);
        let opts = RollingOptions::new(Family::Logreg, 1);
        let out: Vec<DayForecast<f64>> =
            rolling_fit_predict(&ds, Target::Availability, &opts, None).unwrap();
        let days: Vec<usize> = out.iter().map(|f| f.day + 1).collect();
        assert_eq!(days, vec![29, 30]);
        assert!(out.iter().all(|f| f.probs.len() == 24));
    }

    #[test]
    fn retune_fires_at_day_148() {
        let s = TrainingSchedule::default();
        let first = s.first_horizon(0);
        assert_eq!(first, 28 * 24);
        assert_eq!(s.tuning_event(first, 0).unwrap(), 0);
        assert_eq!(s.tuning_event((28 + 119) * 24, 0).unwrap(), 0);
        assert_eq!(s.tuning_event((28 + 120) * 24, 0).unwrap(), 1);
        assert_eq!(s.tuning_hour(1, 0), (28 + 120) * 24);
        assert!(matches!(
            s.tuning_event(27 * 24, 0),
            Err(Error::InsufficientHistory { .. })
        ));
        assert_eq!(s.window(200 * 24), 20 * 24..200 * 24);
        assert_eq!(s.window(10), 0..10);
    }

    #[test]
    fn stationary_pattern_gives_equal_consecutive_forecasts() {
        let ds = daily_pattern(30);
        let opts = RollingOptions::new(Family::Logreg, 1);
        let out: Vec<DayForecast<f64>> =
            rolling_fit_predict(&ds, Target::Availability, &opts, None).unwrap();
        for (a, b) in out[0].probs.iter().zip(&out[1].probs) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn single_day_fit_matches_rolling_entry() {
        let ds = daily_pattern(31);
        let opts = RollingOptions::new(Family::Mlp, 3);
        let rolling: Vec<DayForecast<f64>> =
            rolling_fit_predict(&ds, Target::Availability, &opts, Some(30..31)).unwrap();
        let model: TrainedModel<f64> =
            fit_for_horizon(&ds, Target::Availability, &opts, 30 * 24).unwrap();
        let rows = horizon_rows(&ds, Target::Availability, 30 * 24).unwrap();
        let probs = super::super::predict_proba(&model, &rows, &Target::Availability.schema(&ds)).unwrap();
        assert_eq!(rolling[0].probs, probs);
    }

    #[test]
    fn gap_hours_are_not_training_rows() {
        let mut ds = daily_pattern(9);
        ds.gap[170] = true;
        ds.gap[200] = true;
        let set: TrainingSet<f64> = training_set(&ds, Target::Availability, 168..216);
        assert_eq!(set.len(), 46);
        // the first week has no weekly lag to learn from
        let set: TrainingSet<f64> = training_set(&ds, Target::Availability, 0..216);
        assert_eq!(set.len(), 46);
    }

    #[test]
    fn ancient_rows_do_not_influence_the_model() {
        // Horizon at day 220: window covers days 40..220; lag168 of its first
        // rows reads back to day 33. Perturbing days 0..33 must not matter.
        let ds = daily_pattern(221);
        let mut perturbed = ds.clone();
        let hours = 33 * 24;
        for h in 0..hours {
            perturbed.energy[0][h] = if h % 5 == 0 { 300.0 } else { 0.0 };
        }
        let hourly = HourlyEnergy {
            start: ds.start,
            devices: vec!["tv".into()],
            energy: perturbed.energy.clone(),
            gap: ds.gap.clone(),
        };
        let perturbed = engineer_features(&hourly, &ds.catalog).unwrap();
        assert_ne!(perturbed.availability, ds.availability);
        let mut opts = RollingOptions::new(Family::Logreg, 9);
        opts.schedule.retune_interval_days = 120;
        let a: Vec<DayForecast<f64>> =
            rolling_fit_predict(&ds, Target::Availability, &opts, Some(220..221)).unwrap();
        let b: Vec<DayForecast<f64>> =
            rolling_fit_predict(&perturbed, Target::Availability, &opts, Some(220..221)).unwrap();
        assert_eq!(a, b);
    }
}
