//! How many days of history the agents need before their scores on a fixed
//! test period reach a threshold.

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::agents::day_equal_score;
use super::metrics::auc;
use crate::activity::ActivityMapping;
use crate::error::{Error, Result};
use crate::ingest::HourlyDataset;
use crate::models::{horizon_rows, predict_proba, seed_for, train, training_set, tuned_hyperparams, Hyperparams, RollingOptions, Target};
use crate::signals::HORIZON;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "agent", content = "device")]
pub enum AgentKind {
    Availability,
    Usage(String),
    Activity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColdStartOptions {
    /// AUC for availability/usage, activity agreement for activities.
    pub threshold: f64,
    /// Shortest prefix evaluated, in days.
    pub min_days: usize,
    /// Stop at the first prefix reaching the threshold.
    pub stop_at_threshold: bool,
    /// Usage threshold of the activity agreement score.
    pub use_th: f64,
    pub act_th: f64,
}

impl Default for ColdStartOptions {
    fn default() -> Self {
        Self {
            threshold: 0.79,
            min_days: 28,
            stop_at_threshold: false,
            use_th: 0.5,
            act_th: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColdStartPoint {
    pub train_days: usize,
    /// `None` when the test period holds a single class.
    pub score: Option<f64>,
    /// SHA-256 of the test rows and labels the score was computed on.
    pub test_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColdStartResult {
    pub agent: AgentKind,
    pub threshold: f64,
    pub test_days: Range<usize>,
    pub curve: Vec<ColdStartPoint>,
    /// First prefix length whose score reaches the threshold; `None` means
    /// not reached.
    pub days_to_threshold: Option<usize>,
}

fn digest(rows: &[Vec<Vec<f64>>], labels: &[Vec<bool>]) -> String {
    let mut h = Sha256::new();
    for (day_rows, day_labels) in rows.iter().zip(labels) {
        for (r, &l) in day_rows.iter().zip(day_labels) {
            for v in r {
                h.update(v.to_le_bytes());
            }
            h.update([u8::from(l)]);
        }
    }
    hex::encode(h.finalize())
}

/// Test rows and labels of `target` over the test days.
fn test_set(ds: &HourlyDataset, target: Target, days: &Range<usize>, offset: usize) -> Result<(Vec<Vec<Vec<f64>>>, Vec<Vec<bool>>)> {
    let labels = target.labels(ds);
    let mut rows = Vec::with_capacity(days.len());
    let mut truth = Vec::with_capacity(days.len());
    for day in days.clone() {
        let start = day * 24 + offset;
        rows.push(horizon_rows::<f64>(ds, target, start)?);
        truth.push(labels[start..start + HORIZON].to_vec());
    }
    Ok((rows, truth))
}

/// Trains on the first `train_days` days (hyperparameters from the tuning
/// event that governs that day) and predicts every test day.
fn predict_prefix(
    ds: &HourlyDataset,
    target: Target,
    opts: &RollingOptions,
    train_days: usize,
    rows: &[Vec<Vec<f64>>],
    tuned: &mut BTreeMap<(Target, usize), Hyperparams>,
) -> Result<Vec<Vec<f64>>> {
    let hour = opts.horizon_hour(train_days);
    let event = opts.schedule.tuning_event(hour, opts.hour_offset)?;
    let hp = match tuned.get(&(target, event)) {
        Some(hp) => hp.clone(),
        None => {
            let hp = tuned_hyperparams::<f64>(ds, target, opts, event)?;
            tuned.insert((target, event), hp.clone());
            hp
        }
    };
    let set = training_set::<f64>(ds, target, 0..hour);
    if set.is_empty() {
        return Err(Error::InsufficientHistory { hour, needed: hour + 1 });
    }
    let schema = target.schema(ds);
    let model = train(&hp, &set, &schema, seed_for(opts.seed, &target.name(ds)))?;
    rows.iter().map(|r| predict_proba(&model, r, &schema)).collect()
}

/// Scores prefixes of `min_days`, `min_days + 1`, ... days up to the start
/// of `test_days` on that fixed test period.
pub fn cold_start(
    ds: &HourlyDataset,
    agent: &AgentKind,
    mapping: &ActivityMapping,
    opts: &RollingOptions,
    cs: &ColdStartOptions,
    test_days: Range<usize>,
) -> Result<ColdStartResult> {
    if test_days.is_empty() || test_days.end * 24 + opts.hour_offset > ds.hours() {
        return Err(Error::Config(format!(
            "test days {test_days:?} are not inside the {} days of data",
            ds.days()
        )));
    }
    if test_days.start < cs.min_days.max(opts.schedule.headstart_days) {
        return Err(Error::Config(format!(
            "test period starts on day {} but training needs at least {} days before it",
            test_days.start,
            cs.min_days.max(opts.schedule.headstart_days)
        )));
    }
    let targets: Vec<Target> = match agent {
        AgentKind::Availability => vec![Target::Availability],
        AgentKind::Usage(id) => vec![Target::Device(
            ds.device_index(id).ok_or_else(|| Error::UnknownDevice(id.clone()))?,
        )],
        AgentKind::Activity => mapping
            .devices()
            .iter()
            .map(|id| ds.device_index(id).map(Target::Device).ok_or_else(|| Error::UnknownDevice(id.clone())))
            .collect::<Result<_>>()?,
    };
    let sets = targets
        .iter()
        .map(|&t| test_set(ds, t, &test_days, opts.hour_offset))
        .collect::<Result<Vec<_>>>()?;

    let mut tuned = BTreeMap::new();
    let mut curve = Vec::new();
    let mut reached = None;
    let first = cs.min_days.max(opts.schedule.headstart_days);
    for train_days in first..=test_days.start {
        let mut h = Sha256::new();
        for (rows, labels) in &sets {
            h.update(digest(rows, labels).as_bytes());
        }
        let test_digest = hex::encode(h.finalize());
        let preds = targets
            .iter()
            .zip(&sets)
            .map(|(&t, (rows, _))| predict_prefix(ds, t, opts, train_days, rows, &mut tuned))
            .collect::<Result<Vec<_>>>()?;
        let score = match agent {
            AgentKind::Activity => {
                let per_day = (0..test_days.len())
                    .map(|d| {
                        let usage: Vec<Vec<f64>> = preds.iter().map(|p| p[d].clone()).collect();
                        day_equal_score(&usage, mapping, cs.use_th, cs.act_th)
                    })
                    .collect::<Result<Vec<f64>>>()?;
                Some(per_day.iter().sum::<f64>() / per_day.len() as f64)
            }
            _ => {
                let scores: Vec<f64> = preds[0].iter().flatten().copied().collect();
                let labels: Vec<bool> = sets[0].1.iter().flatten().copied().collect();
                auc(&scores, &labels)
            }
        };
        curve.push(ColdStartPoint {
            train_days,
            score,
            test_digest,
        });
        if reached.is_none() && score.is_some_and(|s| s >= cs.threshold) {
            reached = Some(train_days);
            if cs.stop_at_threshold {
                break;
            }
        }
    }
    Ok(ColdStartResult {
        agent: agent.clone(),
        threshold: cs.threshold,
        test_days,
        curve,
        days_to_threshold: reached,
    })
}

/// `train_days,score` rows for plotting.
pub fn cold_start_csv(result: &ColdStartResult) -> String {
    let mut s = String::from("train_days,score\n");
    for p in &result.curve {
        s.push_str(&format!(
            "{},{}\n",
            p.train_days,
            p.score.map_or(String::new(), |v| v.to_string())
        ));
    }
    s
}
