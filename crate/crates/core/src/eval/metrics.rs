//! Scores for the forecasting agents: rank AUC for availability and usage,
//! and the hourly activity-set agreement score for activities.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::activity::ActivityMapping;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::signals::HORIZON;

/// Rank-based AUC (Mann-Whitney U, tied scores count one half). `None` when
/// the labels hold a single class.
///
/// Panics if `scores` and `labels` differ in length.
pub fn auc<T: Scalar>(scores: &[T], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len(), "scores and labels differ in length");
    let pos = labels.iter().filter(|&&l| l).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].as_f64().total_cmp(&scores[b].as_f64()));

    // Twice the positive rank sum, so tied (half-integer) ranks stay integral.
    let mut rank_sum2: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]].as_f64() == scores[order[i]].as_f64() {
            j += 1;
        }
        // ranks i+1 ..= j share their mean (i + 1 + j) / 2
        let tied_pos = order[i..j].iter().filter(|&&k| labels[k]).count() as u64;
        rank_sum2 += tied_pos * (i as u64 + 1 + j as u64);
        i = j;
    }
    let u2 = rank_sum2 - pos * (pos + 1);
    Some(u2 as f64 / (2 * pos * neg) as f64)
}

/// Per-day AUCs; single-class days are skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucSummary {
    pub per_day: Vec<Option<f64>>,
    pub mean: Option<f64>,
    pub skipped: usize,
}

impl AucSummary {
    pub fn from_days(days: Vec<Option<f64>>) -> Self {
        let scored: Vec<f64> = days.iter().flatten().copied().collect();
        let mean = (!scored.is_empty()).then(|| scored.iter().sum::<f64>() / scored.len() as f64);
        Self {
            skipped: days.len() - scored.len(),
            per_day: days,
            mean,
        }
    }
}

/// Indices of activities, in mapping order.
pub type ActivitySet = BTreeSet<usize>;

/// Device ids identifying each activity.
pub fn identifying_devices(mapping: &ActivityMapping) -> Vec<Vec<String>> {
    (0..mapping.activities().len())
        .map(|a| mapping.members(a).map(|d| mapping.devices()[d].clone()).collect())
        .collect()
}

/// Activities with an identifying device whose usage probability exceeds
/// `use_th`. `usage` is in mapping device order.
pub fn target_activity_set<T: Scalar>(
    usage: &[T],
    use_th: T,
    mapping: &ActivityMapping,
) -> ActivitySet {
    usage
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > use_th)
        .map(|(d, _)| mapping.owner(d))
        .collect()
}

/// Activities with probability above `act_th`.
pub fn predicted_activity_set<T: Scalar>(activity_probs: &[T], act_th: T) -> ActivitySet {
    activity_probs
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > act_th)
        .map(|(a, _)| a)
        .collect()
}

/// Share of the 24 hours whose target and predicted activity sets are equal.
pub fn equal_score(pairs: &[(ActivitySet, ActivitySet)]) -> Result<f64> {
    if pairs.len() != HORIZON {
        return Err(Error::LengthMismatch {
            left: pairs.len(),
            right: HORIZON,
        });
    }
    let equal = pairs.iter().filter(|(a, b)| a == b).count();
    Ok(equal as f64 / HORIZON as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EqualScore {
    pub per_day: Vec<f64>,
    pub mean: Option<f64>,
    pub use_th: f64,
    pub act_th: f64,
}

impl EqualScore {
    pub fn from_days(per_day: Vec<f64>, use_th: f64, act_th: f64) -> Self {
        let mean = (!per_day.is_empty()).then(|| per_day.iter().sum::<f64>() / per_day.len() as f64);
        Self {
            per_day,
            mean,
            use_th,
            act_th,
        }
    }
}
