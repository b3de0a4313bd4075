//! Binary classifiers for hourly availability and device usage, and the
//! rolling train/tune schedule that drives them.

mod features;
mod forest;
mod logreg;
mod mlp;
mod rolling;

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::metrics::auc;
use crate::scalar::Scalar;

pub use features::{encode, FeatureSchema, FEATURE_COUNT, TIME_COLUMNS};
use features::SparseRow;
pub use forest::{ForestParams, Node, Tree};
pub use logreg::LogRegParams;
pub use mlp::MlpParams;
pub use rolling::{
    fit_for_horizon, horizon_rows, rolling_fit_predict, training_set, tuned_hyperparams, DayForecast,
    RollingOptions, Target, TrainingSchedule,
};

pub(crate) fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Logreg,
    Forest,
    #[default]
    Mlp,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Logreg => "logreg",
            Family::Forest => "forest",
            Family::Mlp => "mlp",
        })
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logreg" => Ok(Family::Logreg),
            "forest" => Ok(Family::Forest),
            "mlp" => Ok(Family::Mlp),
            other => Err(Error::Config(format!(
                "unknown model family `{other}` (expected logreg, forest or mlp)"
            ))),
        }
    }
}

impl Family {
    /// Grid searched at every tuning event.
    pub fn default_grid(self) -> Vec<Hyperparams> {
        match self {
            Family::Logreg => vec![Hyperparams::logreg()],
            Family::Forest => [50, 100]
                .into_iter()
                .flat_map(|trees| {
                    [6, 12]
                        .into_iter()
                        .map(move |max_depth| Hyperparams::Forest { trees, max_depth })
                })
                .collect(),
            Family::Mlp => [8, 16, 32]
                .into_iter()
                .flat_map(|hidden| {
                    [0.01, 0.001].into_iter().map(move |learning_rate| Hyperparams::Mlp {
                        hidden,
                        learning_rate,
                        epochs: 200,
                    })
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Hyperparams {
    Logreg { l2: f64, max_iter: usize },
    Forest { trees: usize, max_depth: usize },
    Mlp { hidden: usize, learning_rate: f64, epochs: usize },
}

impl Hyperparams {
    pub fn logreg() -> Self {
        Hyperparams::Logreg {
            l2: 1e-4,
            max_iter: 500,
        }
    }

    pub fn family(&self) -> Family {
        match self {
            Hyperparams::Logreg { .. } => Family::Logreg,
            Hyperparams::Forest { .. } => Family::Forest,
            Hyperparams::Mlp { .. } => Family::Mlp,
        }
    }

    /// Orders configurations by model size: fewer hidden units or trees,
    /// shallower trees, stronger regularisation compare as smaller.
    fn capacity_cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Hyperparams::Logreg { l2: a, .. }, Hyperparams::Logreg { l2: b, .. }) => {
                b.partial_cmp(a).unwrap_or(Ordering::Equal)
            }
            (
                Hyperparams::Forest {
                    trees: ta,
                    max_depth: da,
                },
                Hyperparams::Forest {
                    trees: tb,
                    max_depth: db,
                },
            ) => (ta, da).cmp(&(tb, db)),
            (Hyperparams::Mlp { hidden: a, .. }, Hyperparams::Mlp { hidden: b, .. }) => a.cmp(b),
            _ => Ordering::Equal,
        }
    }
}

/// Feature rows with binary targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet<T> {
    pub rows: Vec<Vec<T>>,
    pub labels: Vec<bool>,
}

impl<T: Scalar> TrainingSet<T> {
    pub fn new(rows: Vec<Vec<T>>, labels: Vec<bool>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::LengthMismatch {
                left: rows.len(),
                right: labels.len(),
            });
        }
        if let Some(first) = rows.first() {
            if let Some(bad) = rows.iter().find(|r| r.len() != first.len()) {
                return Err(Error::LengthMismatch {
                    left: first.len(),
                    right: bad.len(),
                });
            }
        }
        Ok(Self { rows, labels })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    /// Chronological split: the first `1 - fraction` for training, the rest
    /// for validation.
    pub fn split_tail(&self, fraction: f64) -> (Self, Self) {
        let cut = ((self.len() as f64) * (1.0 - fraction)).round() as usize;
        let cut = cut.min(self.len());
        (
            Self {
                rows: self.rows[..cut].to_vec(),
                labels: self.labels[..cut].to_vec(),
            },
            Self {
                rows: self.rows[cut..].to_vec(),
                labels: self.labels[cut..].to_vec(),
            },
        )
    }

    fn sparse(&self) -> Vec<SparseRow<T>> {
        self.rows.iter().map(|r| SparseRow::from_dense(r)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", tag = "kind", rename_all = "lowercase")]
pub enum ModelParams<T> {
    /// Class prior of a single-class training set.
    Constant { prob: T },
    Logreg(LogRegParams<T>),
    Forest(ForestParams<T>),
    Mlp(MlpParams<T>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TrainedModel<T> {
    pub family: Family,
    pub hyperparams: Hyperparams,
    pub params: ModelParams<T>,
    pub schema: FeatureSchema,
    /// Exclusive end of the training window (hour index or unix time,
    /// chosen by the caller).
    pub trained_through: Option<i64>,
    pub seed: u64,
    /// Trained on a single class; predicts the prior.
    pub degenerate: bool,
    /// Training loss before and after fitting (log-loss for logreg and mlp).
    #[serde(default)]
    pub loss: Option<(f64, f64)>,
}

impl<T: Scalar> TrainedModel<T> {
    pub fn predict_row(&self, row: &[T]) -> T {
        let p = match &self.params {
            ModelParams::Constant { prob } => *prob,
            ModelParams::Logreg(p) => p.predict(row),
            ModelParams::Forest(p) => p.predict(row),
            ModelParams::Mlp(p) => p.predict(row),
        };
        p.max(T::zero()).min(T::one())
    }
}

/// Fits a model. A single-class training set yields a constant model that
/// emits the class prior, flagged degenerate.
pub fn train<T: Scalar>(
    hyperparams: &Hyperparams,
    set: &TrainingSet<T>,
    schema: &FeatureSchema,
    seed: u64,
) -> Result<TrainedModel<T>> {
    fit_inner(hyperparams, set, None, schema, seed).map(|(m, _)| m)
}

fn fit_inner<T: Scalar>(
    hyperparams: &Hyperparams,
    set: &TrainingSet<T>,
    validation: Option<&TrainingSet<T>>,
    schema: &FeatureSchema,
    seed: u64,
) -> Result<(TrainedModel<T>, Hyperparams)> {
    if set.is_empty() {
        return Err(Error::Empty("training set".into()));
    }
    check_schema(schema, set.rows[0].len())?;
    let positives = set.positives();
    let mut model = TrainedModel {
        family: hyperparams.family(),
        hyperparams: hyperparams.clone(),
        params: ModelParams::Constant {
            prob: T::from_usize(positives).unwrap() / T::from_usize(set.len()).unwrap(),
        },
        schema: schema.clone(),
        trained_through: None,
        seed,
        degenerate: true,
        loss: None,
    };
    if positives == 0 || positives == set.len() {
        return Ok((model, hyperparams.clone()));
    }
    model.degenerate = false;
    let dim = schema.len();
    let mut used = hyperparams.clone();
    model.params = match *hyperparams {
        Hyperparams::Logreg { l2, max_iter } => {
            let (p, report) = logreg::fit(
                &set.sparse(),
                &set.labels,
                dim,
                T::lit(l2),
                max_iter,
                T::lit(1e-6),
            );
            model.loss = Some((report.initial_loss.as_f64(), report.final_loss.as_f64()));
            ModelParams::Logreg(p)
        }
        Hyperparams::Forest { trees, max_depth } => {
            ModelParams::Forest(forest::fit(&set.rows, &set.labels, trees, max_depth, seed))
        }
        Hyperparams::Mlp {
            hidden,
            learning_rate,
            epochs,
        } => {
            let val = validation.filter(|v| !v.is_empty()).map(|v| v.sparse());
            let fit = mlp::fit(
                &set.sparse(),
                &set.labels,
                dim,
                hidden,
                learning_rate,
                epochs,
                val.as_deref()
                    .zip(validation.map(|v| v.labels.as_slice())),
                seed,
            );
            used = Hyperparams::Mlp {
                hidden,
                learning_rate,
                epochs: fit.epochs,
            };
            model.loss = Some((fit.initial_loss, fit.final_loss));
            ModelParams::Mlp(fit.params)
        }
    };
    model.hyperparams = used.clone();
    Ok((model, used))
}

fn check_schema(schema: &FeatureSchema, width: usize) -> Result<()> {
    if schema.len() != width {
        return Err(Error::SchemaMismatch {
            expected: schema.len().to_string(),
            found: width.to_string(),
        });
    }
    Ok(())
}

/// Probabilities for each row. `schema` describes the rows and must equal
/// the model's schema.
pub fn predict_proba<T: Scalar>(
    model: &TrainedModel<T>,
    rows: &[Vec<T>],
    schema: &FeatureSchema,
) -> Result<Vec<T>> {
    if *schema != model.schema {
        return Err(Error::SchemaMismatch {
            expected: model.schema.columns.join(","),
            found: schema.columns.join(","),
        });
    }
    rows.iter()
        .map(|r| {
            check_schema(schema, r.len())?;
            Ok(model.predict_row(r))
        })
        .collect()
}

/// Result of a grid search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tuned {
    pub best: Hyperparams,
    /// Validation AUC per grid point, in grid order. `None` when the
    /// validation split holds a single class.
    pub scores: Vec<(Hyperparams, Option<f64>)>,
}

/// Picks the grid point with the highest validation AUC; ties go to the
/// smaller model, then to grid order. For the MLP the returned point carries
/// the early-stopping epoch count.
pub fn tune<T: Scalar>(
    grid: &[Hyperparams],
    train_set: &TrainingSet<T>,
    validation: &TrainingSet<T>,
    schema: &FeatureSchema,
    seed: u64,
) -> Result<Tuned> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if validation.is_empty() {
        return Err(Error::Empty("validation split".into()));
    }
    if grid.len() == 1 && grid[0].family() != Family::Mlp {
        return Ok(Tuned {
            best: grid[0].clone(),
            scores: vec![(grid[0].clone(), None)],
        });
    }
    let mut scores = Vec::with_capacity(grid.len());
    let mut best: Option<(usize, f64)> = None;
    for (i, hp) in grid.iter().enumerate() {
        let (model, used) = fit_inner(hp, train_set, Some(validation), schema, seed)?;
        let preds: Vec<f64> = validation
            .rows
            .iter()
            .map(|r| model.predict_row(r).as_f64())
            .collect();
        let score = auc(&preds, &validation.labels);
        let key = score.unwrap_or(0.5);
        let better = match best {
            None => true,
            Some((b, s)) => {
                key > s || (key == s && used.capacity_cmp(&scores_hp(&scores, b)) == Ordering::Less)
            }
        };
        if better {
            best = Some((i, key));
        }
        scores.push((used, score));
    }
    let (b, _) = best.expect("non-empty grid");
    Ok(Tuned {
        best: scores[b].0.clone(),
        scores,
    })
}

fn scores_hp(scores: &[(Hyperparams, Option<f64>)], i: usize) -> Hyperparams {
    scores[i].0.clone()
}

/// Stable per-target seed.
pub fn seed_for(base: u64, target: &str) -> u64 {
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ base;
    for b in target.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::TimeFeatures;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn schema() -> FeatureSchema {
        FeatureSchema::for_target("x")
    }

    /// Hourly rows over `days` days with random lag1 flags and target = lag1.
    fn separable(days: usize, seed: u64) -> TrainingSet<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for h in 0..days * 24 {
            let t = TimeFeatures {
                month: 1 + (h / (24 * 31)) as u8 % 12,
                day_of_week: ((h / 24) % 7) as u8,
                hour: (h % 24) as u8,
            };
            let lag1 = rng.gen_bool(0.3);
            rows.push(encode(t, lag1, rng.gen_bool(0.5)));
            labels.push(lag1);
        }
        TrainingSet::new(rows, labels).unwrap()
    }

    fn random_labels(n: usize, seed: u64) -> TrainingSet<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..n)
            .map(|h| {
                let t = TimeFeatures {
                    month: 1 + rng.gen_range(0..12),
                    day_of_week: rng.gen_range(0..7),
                    hour: (h % 24) as u8,
                };
                encode(t, rng.gen_bool(0.5), rng.gen_bool(0.5))
            })
            .collect();
        let labels = (0..n).map(|_| rng.gen_bool(0.4)).collect();
        TrainingSet::new(rows, labels).unwrap()
    }

    fn holdout_auc(model: &TrainedModel<f64>, set: &TrainingSet<f64>) -> f64 {
        let preds: Vec<f64> = predict_proba(model, &set.rows, &schema()).unwrap();
        auc(&preds, &set.labels).unwrap()
    }

    fn all_families() -> Vec<Hyperparams> {
        vec![
            Hyperparams::logreg(),
            Hyperparams::Forest {
                trees: 20,
                max_depth: 6,
            },
            Hyperparams::Mlp {
                hidden: 8,
                learning_rate: 0.01,
                epochs: 30,
            },
        ]
    }

    #[test]
    fn separable_toy_set_has_perfect_holdout_auc() {
        let train_set = separable(20, 1);
        let test_set = separable(5, 2);
        for hp in all_families() {
            let m = train(&hp, &train_set, &schema(), 3).unwrap();
            assert_eq!(holdout_auc(&m, &test_set), 1.0, "{hp:?}");
        }
    }

    #[test]
    fn separable_positive_hours_predicted_confidently() {
        let set = separable(20, 4);
        let m = train(&Hyperparams::logreg(), &set, &schema(), 0).unwrap();
        let day = TrainingSet::new(set.rows[..24].to_vec(), set.labels[..24].to_vec()).unwrap();
        let probs = predict_proba(&m, &day.rows, &schema()).unwrap();
        for (p, &l) in probs.iter().zip(&day.labels) {
            if l {
                assert!(*p >= 0.9, "{p}");
            }
        }
    }

    #[test]
    fn random_labels_give_chance_auc() {
        // Monte Carlo over 2000 held-out rows: the AUC standard error is
        // about 0.013, so a 0.1 band is > 7 sigma.
        let train_set = random_labels(2000, 11);
        let test_set = random_labels(2000, 12);
        for hp in all_families() {
            let m = train(&hp, &train_set, &schema(), 5).unwrap();
            let a = holdout_auc(&m, &test_set);
            assert!((a - 0.5).abs() <= 0.1, "{hp:?}: {a}");
        }
    }

    #[test]
    fn single_class_is_degenerate() {
        let mut set = separable(3, 9);
        set.labels.iter_mut().for_each(|l| *l = false);
        for hp in all_families() {
            let m = train(&hp, &set, &schema(), 0).unwrap();
            assert!(m.degenerate);
            let p = predict_proba(&m, &set.rows[..24], &schema()).unwrap();
            assert!(p.iter().all(|&x| x.abs() < 1e-12));
        }
    }

    #[test]
    fn training_reduces_loss() {
        let set = separable(10, 5);
        for hp in [all_families()[0].clone(), all_families()[2].clone()] {
            let m = train(&hp, &set, &schema(), 1).unwrap();
            let (before, after) = m.loss.unwrap();
            assert!(after < before, "{hp:?}: {before} -> {after}");
        }
    }

    #[test]
    fn zero_weight_logreg_predicts_half() {
        let m = TrainedModel {
            family: Family::Logreg,
            hyperparams: Hyperparams::logreg(),
            params: ModelParams::Logreg(LogRegParams::zeros(FEATURE_COUNT)),
            schema: schema(),
            trained_through: None,
            seed: 0,
            degenerate: false,
            loss: None,
        };
        let rows = separable(1, 0).rows;
        let p = predict_proba(&m, &rows, &schema()).unwrap();
        assert_eq!(p, vec![0.5; 24]);
    }

    #[test]
    fn schema_mismatch_is_rejected() {
        let set = separable(3, 1);
        let m = train(&Hyperparams::logreg(), &set, &schema(), 0).unwrap();
        let other = FeatureSchema::for_target("y");
        assert!(matches!(
            predict_proba(&m, &set.rows, &other),
            Err(Error::SchemaMismatch { .. })
        ));
        assert!(predict_proba(&m, &[vec![0.0; 3]], &schema()).is_err());
    }

    #[test]
    fn predictions_are_deterministic() {
        let set = separable(8, 21);
        for hp in all_families() {
            let a = train(&hp, &set, &schema(), 77).unwrap();
            let b = train(&hp, &set, &schema(), 77).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn tune_single_point_grid() {
        let set = separable(5, 1);
        let (tr, va) = set.split_tail(0.2);
        let grid = vec![Hyperparams::Forest {
            trees: 5,
            max_depth: 3,
        }];
        let t = tune(&grid, &tr, &va, &schema(), 0).unwrap();
        assert_eq!(t.best, grid[0]);
        assert!(matches!(
            tune::<f64>(&[], &tr, &va, &schema(), 0),
            Err(Error::EmptyGrid)
        ));
    }

    #[test]
    fn tune_prefers_the_separating_point() {
        let set = separable(10, 3);
        let (tr, va) = set.split_tail(0.2);
        // A depth-0 tree predicts a constant (AUC 0.5).
        let weak = Hyperparams::Forest {
            trees: 1,
            max_depth: 0,
        };
        let strong = Hyperparams::Forest {
            trees: 30,
            max_depth: 3,
        };
        let t = tune(&[weak, strong.clone()], &tr, &va, &schema(), 0).unwrap();
        assert_eq!(t.best, strong);
        assert_eq!(t.scores[1].1, Some(1.0));
    }

    #[test]
    fn tune_tie_goes_to_smaller_model() {
        let set = separable(10, 8);
        let (tr, va) = set.split_tail(0.2);
        // Both forests separate perfectly: identical validation AUC of 1.0.
        let big = Hyperparams::Forest {
            trees: 40,
            max_depth: 6,
        };
        let small = Hyperparams::Forest {
            trees: 20,
            max_depth: 6,
        };
        let t = tune(&[big, small.clone()], &tr, &va, &schema(), 0).unwrap();
        assert_eq!(t.scores[0].1, Some(1.0));
        assert_eq!(t.scores[1].1, Some(1.0));
        assert_eq!(t.best, small);
    }

    #[test]
    fn mlp_capacity_sanity() {
        let set = separable(20, 13);
        let (tr, va) = set.split_tail(0.2);
        let lr = train(&Hyperparams::logreg(), &tr, &schema(), 0).unwrap();
        let grid = Family::Mlp.default_grid();
        let t = tune(&grid, &tr, &va, &schema(), 0).unwrap();
        let mlp = train(&t.best, &tr, &schema(), 0).unwrap();
        let a_lr = holdout_auc(&lr, &va);
        let a_mlp = holdout_auc(&mlp, &va);
        assert!(a_mlp >= a_lr - 0.05, "{a_mlp} vs {a_lr}");
    }

    #[test]
    fn family_parsing() {
        assert_eq!("mlp".parse::<Family>().unwrap(), Family::Mlp);
        assert!("svm".parse::<Family>().is_err());
        assert_eq!(Family::Mlp.default_grid().len(), 6);
        assert_eq!(Family::Forest.default_grid().len(), 4);
    }

    #[test]
    fn model_serde_roundtrip() {
        let set = separable(4, 2);
        for hp in all_families() {
            let m = train(&hp, &set, &schema(), 1).unwrap();
            let json = serde_json::to_string(&m).unwrap();
            let back: TrainedModel<f64> = serde_json::from_str(&json).unwrap();
            assert_eq!(back, m);
        }
    }
}
