//! Replays daily schedules against what the household actually did and
//! totals the savings of the recommendations it could have followed.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activity::ActivityMapping;
use crate::error::{Error, Result};
use crate::ingest::HourlyDataset;
use crate::predictors::DayBundle;
use crate::recommend::{build_schedule, window_sum, RecommendationConfig};
use crate::scalar::Scalar;
use crate::signals::{date_of, SignalPair, SignalSet};

/// A recommendation the household could have followed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptedRecommendation {
    pub day: usize,
    pub horizon_start: i64,
    pub activity_id: String,
    pub predicted_start: usize,
    pub recommended_start: usize,
    pub duration: usize,
    /// Mean hourly energy of the identifying devices actually used, kWh.
    pub energy_kwh: f64,
    pub emissions_saving: f64,
    pub price_saving: f64,
    pub baseline_emissions: f64,
    pub baseline_price: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavingsReport {
    pub config: RecommendationConfig,
    pub days: usize,
    /// Recommendations issued, before the acceptability check.
    pub issued: usize,
    /// Acceptable recommendations.
    pub recommendations: usize,
    pub recommendations_per_year: f64,
    pub recommendations_per_day: f64,
    pub total_emissions_saving: f64,
    pub relative_emissions_saving: f64,
    pub total_price_saving: f64,
    pub relative_price_saving: f64,
    pub baseline_emissions: f64,
    pub baseline_price: f64,
    pub accepted: Vec<AcceptedRecommendation>,
}

impl SavingsReport {
    /// Counts of accepted recommended start hours (horizon hour index).
    pub fn start_histogram(&self) -> [usize; 24] {
        let mut h = [0; 24];
        for a in &self.accepted {
            h[a.recommended_start] += 1;
        }
        h
    }

    /// `hour,count` rows for plotting.
    pub fn histogram_csv(&self) -> String {
        let mut s = String::from("hour,count\n");
        for (h, c) in self.start_histogram().iter().enumerate() {
            s.push_str(&format!("{h},{c}\n"));
        }
        s
    }
}

/// Signals for the dates of the bundles, in bundle order.
pub fn signals_for_bundles<T: Scalar>(
    set: &SignalSet<T>,
    bundles: &[DayBundle<T>],
    hour_offset: u32,
) -> Result<Vec<SignalPair<T>>> {
    bundles
        .iter()
        .map(|b| {
            let day_start = b.horizon_start - i64::from(hour_offset) * 3600;
            set.for_date(date_of(day_start), hour_offset)
        })
        .collect()
}

/// Recorded usage of the activity's identifying devices inside the
/// instance window, as mean hourly kWh over the window; `None` if none of
/// them ran.
fn used_energy(
    ds: &HourlyDataset,
    members: &[usize],
    start: usize,
    duration: usize,
) -> Option<f64> {
    let used: Vec<usize> = members
        .iter()
        .copied()
        .filter(|&d| (start..start + duration).any(|h| ds.usage[d][h]))
        .collect();
    if used.is_empty() {
        return None;
    }
    let wh: f64 = used
        .iter()
        .map(|&d| ds.energy[d][start..start + duration].iter().sum::<f64>())
        .sum();
    Some(wh / duration as f64 / 1000.0)
}

/// Builds each day's schedule from the forecasts and keeps the
/// recommendations whose predicted instance really happened: the resident
/// was available at the predicted start and an identifying device of the
/// activity ran within the instance. Savings use the recorded energy of
/// those devices.
pub fn simulate_savings<T: Scalar>(
    ds: &HourlyDataset,
    bundles: &[DayBundle<T>],
    signals: &[SignalPair<T>],
    mapping: &ActivityMapping,
    device_kwh: &[T],
    config: &RecommendationConfig,
) -> Result<SavingsReport> {
    if bundles.len() != signals.len() {
        return Err(Error::LengthMismatch {
            left: bundles.len(),
            right: signals.len(),
        });
    }
    let members: Vec<Vec<usize>> = (0..mapping.activities().len())
        .map(|a| {
            mapping
                .members(a)
                .map(|d| {
                    let id = &mapping.devices()[d];
                    ds.device_index(id).ok_or_else(|| Error::UnknownDevice(id.clone()))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let per_day: Vec<(usize, Vec<AcceptedRecommendation>)> = bundles
        .par_iter()
        .zip(signals)
        .map(|(b, s)| {
            let usage = b.usage_for(mapping)?;
            let report = build_schedule(&b.availability, &usage, s, mapping, device_kwh, config)?;
            let carbon: Vec<f64> = s.carbon.values().iter().map(|v| v.as_f64()).collect();
            let price: Vec<f64> = s.price.values().iter().map(|v| v.as_f64()).collect();
            let mut accepted = Vec::new();
            for r in &report.recommendations {
                let a = mapping
                    .activities()
                    .iter()
                    .position(|x| x.id == r.activity_id)
                    .expect("activity of the mapping");
                let (pred, dur) = (r.instance.predicted_start, r.instance.duration);
                let start = b.horizon_hour + pred;
                if start + dur > ds.hours() || !ds.availability[start] {
                    continue;
                }
                let Some(energy) = used_energy(ds, &members[a], start, dur) else {
                    continue;
                };
                let rec = r.recommended_start;
                let base_e = energy * window_sum(&carbon, pred, dur);
                let base_p = energy * window_sum(&price, pred, dur) / 1000.0;
                accepted.push(AcceptedRecommendation {
                    day: b.day,
                    horizon_start: b.horizon_start,
                    activity_id: r.activity_id.clone(),
                    predicted_start: pred,
                    recommended_start: rec,
                    duration: dur,
                    energy_kwh: energy,
                    emissions_saving: energy * (window_sum(&carbon, pred, dur) - window_sum(&carbon, rec, dur)),
                    price_saving: energy * (window_sum(&price, pred, dur) - window_sum(&price, rec, dur)) / 1000.0,
                    baseline_emissions: base_e,
                    baseline_price: base_p,
                });
            }
            Ok((report.recommendations.len(), accepted))
        })
        .collect::<Result<_>>()?;

    // ordered reduction: identical totals regardless of scheduling
    let mut report = SavingsReport {
        config: *config,
        days: bundles.len(),
        issued: 0,
        recommendations: 0,
        recommendations_per_year: 0.0,
        recommendations_per_day: 0.0,
        total_emissions_saving: 0.0,
        relative_emissions_saving: 0.0,
        total_price_saving: 0.0,
        relative_price_saving: 0.0,
        baseline_emissions: 0.0,
        baseline_price: 0.0,
        accepted: Vec::new(),
    };
    for (issued, accepted) in per_day {
        report.issued += issued;
        for a in accepted {
            report.total_emissions_saving += a.emissions_saving;
            report.total_price_saving += a.price_saving;
            report.baseline_emissions += a.baseline_emissions;
            report.baseline_price += a.baseline_price;
            report.accepted.push(a);
        }
    }
    report.recommendations = report.accepted.len();
    if report.days > 0 {
        report.recommendations_per_day = report.recommendations as f64 / report.days as f64;
        report.recommendations_per_year = report.recommendations_per_day * 365.0;
    }
    if report.baseline_emissions != 0.0 {
        report.relative_emissions_saving = report.total_emissions_saving / report.baseline_emissions;
    }
    if report.baseline_price != 0.0 {
        report.relative_price_saving = report.total_price_saving / report.baseline_price;
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Emissions,
    Price,
}

impl Objective {
    pub fn ratio(self) -> f64 {
        match self {
            Objective::Emissions => 1.0,
            Objective::Price => 0.0,
        }
    }

    fn total(self, r: &SavingsReport) -> f64 {
        match self {
            Objective::Emissions => r.total_emissions_saving,
            Objective::Price => r.total_price_saving,
        }
    }
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "emissions" => Ok(Objective::Emissions),
            "price" => Ok(Objective::Price),
            other => Err(Error::Config(format!(
                "unknown objective `{other}` (expected emissions or price)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub aval_off: Vec<bool>,
    pub availability_threshold: Vec<f64>,
    pub activity_threshold: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            aval_off: vec![true, false],
            availability_threshold: vec![0.15, 0.3, 0.5],
            activity_threshold: vec![0.15, 0.3, 0.5],
        }
    }
}

impl GridSpec {
    pub fn configs(&self, objective: Objective) -> Vec<RecommendationConfig> {
        let mut out = Vec::new();
        for &aval_off in &self.aval_off {
            for &availability_threshold in &self.availability_threshold {
                for &activity_threshold in &self.activity_threshold {
                    out.push(RecommendationConfig {
                        aval_off,
                        emissions_ratio: objective.ratio(),
                        availability_threshold,
                        activity_threshold,
                    });
                }
            }
        }
        out
    }
}

/// One grid point without the per-recommendation detail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub config: RecommendationConfig,
    pub recommendations: usize,
    pub recommendations_per_day: f64,
    pub total_emissions_saving: f64,
    pub relative_emissions_saving: f64,
    pub total_price_saving: f64,
    pub relative_price_saving: f64,
}

impl From<&SavingsReport> for GridRow {
    fn from(r: &SavingsReport) -> Self {
        Self {
            config: r.config,
            recommendations: r.recommendations,
            recommendations_per_day: r.recommendations_per_day,
            total_emissions_saving: r.total_emissions_saving,
            relative_emissions_saving: r.relative_emissions_saving,
            total_price_saving: r.total_price_saving,
            relative_price_saving: r.relative_price_saving,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub objective: Objective,
    pub best: RecommendationConfig,
    pub best_index: usize,
    pub results: Vec<GridRow>,
}

impl GridSearchResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "aval_off,availability_threshold,activity_threshold,emissions_ratio,recommendations,recommendations_per_day,total_emissions_saving,relative_emissions_saving,total_price_saving,relative_price_saving\n",
        );
        for r in &self.results {
            let c = &r.config;
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                c.aval_off,
                c.availability_threshold,
                c.activity_threshold,
                c.emissions_ratio,
                r.recommendations,
                r.recommendations_per_day,
                r.total_emissions_saving,
                r.relative_emissions_saving,
                r.total_price_saving,
                r.relative_price_saving
            ));
        }
        s
    }
}

/// Simulates every grid point and picks the one with the largest total
/// saving for the objective; ties go to the earlier point.
pub fn grid_search<T: Scalar>(
    ds: &HourlyDataset,
    bundles: &[DayBundle<T>],
    signals: &[SignalPair<T>],
    mapping: &ActivityMapping,
    device_kwh: &[T],
    grid: &GridSpec,
    objective: Objective,
) -> Result<GridSearchResult> {
    let configs = grid.configs(objective);
    if configs.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let reports = configs
        .iter()
        .map(|c| simulate_savings(ds, bundles, signals, mapping, device_kwh, c))
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, r) in reports.iter().enumerate() {
        if objective.total(r) > objective.total(&reports[best]) {
            best = i;
        }
    }
    Ok(GridSearchResult {
        objective,
        best: configs[best],
        best_index: best,
        results: reports.iter().map(GridRow::from).collect(),
    })
}
