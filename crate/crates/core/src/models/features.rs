//! Feature encoding: one-hot month (12), day of week (7) and hour (24), then
//! the target's 1-hour and 1-week lag flags.

use serde::{Deserialize, Serialize};

use crate::ingest::TimeFeatures;
use crate::scalar::Scalar;

pub const TIME_COLUMNS: usize = 12 + 7 + 24;
pub const FEATURE_COUNT: usize = TIME_COLUMNS + 2;

/// Column names of a feature vector, fixed per trained model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub columns: Vec<String>,
}

impl FeatureSchema {
    /// Time columns followed by `lag1:<target>` and `lag168:<target>`.
    pub fn for_target(target: &str) -> Self {
        let mut columns = Vec::with_capacity(FEATURE_COUNT);
        columns.extend((1..=12).map(|m| format!("month_{m}")));
        columns.extend((0..7).map(|d| format!("dow_{d}")));
        columns.extend((0..24).map(|h| format!("hour_{h}")));
        columns.push(format!("lag1:{target}"));
        columns.push(format!("lag168:{target}"));
        Self { columns }
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// Targets whose lag columns this schema reads.
    pub fn lag_targets(&self) -> Vec<&str> {
        self.columns
            .iter()
            .filter_map(|c| c.split_once(':').map(|(_, t)| t))
            .collect()
    }
}

pub fn encode<T: Scalar>(time: TimeFeatures, lag1: bool, lag168: bool) -> Vec<T> {
    let mut row = vec![T::zero(); FEATURE_COUNT];
    row[usize::from(time.month) - 1] = T::one();
    row[12 + usize::from(time.day_of_week)] = T::one();
    row[19 + usize::from(time.hour)] = T::one();
    if lag1 {
        row[TIME_COLUMNS] = T::one();
    }
    if lag168 {
        row[TIME_COLUMNS + 1] = T::one();
    }
    row
}

/// Non-zero entries of a dense row.
#[derive(Debug, Clone)]
pub(crate) struct SparseRow<T> {
    pub idx: Vec<usize>,
    pub val: Vec<T>,
}

impl<T: Scalar> SparseRow<T> {
    pub fn from_dense(row: &[T]) -> Self {
        let (idx, val) = row
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_zero())
            .map(|(i, v)| (i, *v))
            .unzip();
        Self { idx, val }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        self.idx.iter().copied().zip(self.val.iter().copied())
    }
}
