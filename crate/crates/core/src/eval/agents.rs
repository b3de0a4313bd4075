//! Replay scores of the forecasting agents over predicted days.

use serde::{Deserialize, Serialize};

use super::metrics::{auc, equal_score, predicted_activity_set, target_activity_set, AucSummary, EqualScore};
use crate::activity::{activity_probs, ActivityMapping};
use crate::error::{Error, Result};
use crate::ingest::HourlyDataset;
use crate::predictors::DayBundle;
use crate::scalar::Scalar;
use crate::signals::HORIZON;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentReport {
    pub days: usize,
    pub availability: AucSummary,
    /// Per shiftable device.
    pub usage: Vec<(String, AucSummary)>,
    /// Mean of the per-device mean AUCs.
    pub usage_mean: Option<f64>,
    pub activity: EqualScore,
}

fn truth(ds: &HourlyDataset, labels: &[bool], start: usize) -> Result<Vec<bool>> {
    labels
        .get(start..start + HORIZON)
        .map(<[bool]>::to_vec)
        .ok_or_else(|| Error::Config(format!("no ground truth for horizon at hour {start} ({} hours)", ds.hours())))
}

/// Hourly agreement of usage-derived and predicted activity sets for one
/// horizon.
pub fn day_equal_score<T: Scalar>(
    usage: &[Vec<T>],
    mapping: &ActivityMapping,
    use_th: T,
    act_th: T,
) -> Result<f64> {
    let pairs = (0..HORIZON)
        .map(|h| {
            let hour: Vec<T> = usage.iter().map(|u| u[h]).collect();
            let probs = activity_probs(&hour, mapping)?;
            Ok((
                target_activity_set(&hour, use_th, mapping),
                predicted_activity_set(&probs, act_th),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    equal_score(&pairs)
}

/// AUC of every availability and usage forecast against the recorded flags,
/// and the activity agreement score, over the given days.
pub fn evaluate_agents<T: Scalar>(
    ds: &HourlyDataset,
    bundles: &[DayBundle<T>],
    mapping: &ActivityMapping,
    use_th: f64,
    act_th: f64,
) -> Result<AgentReport> {
    let mut availability = Vec::with_capacity(bundles.len());
    let devices: Vec<String> = bundles
        .first()
        .map(|b| b.usage.iter().map(|(id, _)| id.clone()).collect())
        .unwrap_or_default();
    let mut usage: Vec<Vec<Option<f64>>> = vec![Vec::with_capacity(bundles.len()); devices.len()];
    let mut equal = Vec::with_capacity(bundles.len());
    for b in bundles {
        let start = b.horizon_hour;
        availability.push(auc(&b.availability, &truth(ds, &ds.availability, start)?));
        for (k, id) in devices.iter().enumerate() {
            let d = ds.device_index(id).ok_or_else(|| Error::UnknownDevice(id.clone()))?;
            let probs = b.usage_of(id).ok_or_else(|| Error::UnknownDevice(id.clone()))?;
            usage[k].push(auc(probs, &truth(ds, &ds.usage[d], start)?));
        }
        equal.push(day_equal_score(&b.usage_for(mapping)?, mapping, T::lit(use_th), T::lit(act_th))?);
    }
    let usage: Vec<(String, AucSummary)> = devices
        .into_iter()
        .zip(usage)
        .map(|(id, days)| (id, AucSummary::from_days(days)))
        .collect();
    let means: Vec<f64> = usage.iter().filter_map(|(_, s)| s.mean).collect();
    Ok(AgentReport {
        days: bundles.len(),
        availability: AucSummary::from_days(availability),
        usage_mean: (!means.is_empty()).then(|| means.iter().sum::<f64>() / means.len() as f64),
        usage,
        activity: EqualScore::from_days(equal, use_th, act_th),
    })
}
