//! Activity probabilities from device-usage probabilities.
//!
//! Each activity is a binary vector over the mapped devices. Per hour, the
//! usage-probability vector is compared with every activity vector by cosine
//! similarity and the similarities are normalised to sum to one. Runs of
//! hours above the activity threshold become activity instances.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::signals::HORIZON;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flexibility {
    /// Start anywhere in the horizon (programmable appliances).
    Flexible,
    /// One hour earlier to four hours later.
    SlightlyFlexible,
    /// One hour earlier to two hours later.
    Inflexible,
}

impl Flexibility {
    /// Allowed start offsets relative to the predicted start, for the
    /// windowed classes.
    pub fn window(self) -> Option<(i64, i64)> {
        match self {
            Flexibility::Flexible => None,
            Flexibility::SlightlyFlexible => Some((-1, 4)),
            Flexibility::Inflexible => Some((-1, 2)),
        }
    }
}

impl fmt::Display for Flexibility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Flexibility::Flexible => "flexible",
            Flexibility::SlightlyFlexible => "slightly_flexible",
            Flexibility::Inflexible => "inflexible",
        })
    }
}

impl FromStr for Flexibility {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flexible" => Ok(Flexibility::Flexible),
            "slightly_flexible" => Ok(Flexibility::SlightlyFlexible),
            "inflexible" => Ok(Flexibility::Inflexible),
            other => Err(Error::Mapping(format!("unknown flexibility `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Activity {
    pub id: String,
    /// Relation to each device of the mapping, in device order: 1 when the
    /// device identifies the activity.
    pub relation: Vec<u8>,
    pub flexibility: Flexibility,
}

/// Binary activity x device relation. Every device identifies exactly one
/// activity and every activity has at least one device.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ActivityMapping {
    devices: Vec<String>,
    activities: Vec<Activity>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MappingFile {
    #[serde(default)]
    devices: Option<Vec<String>>,
    #[serde(rename = "activity", default)]
    activities: Vec<ActivityEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ActivityEntry {
    id: String,
    flexibility: Flexibility,
    #[serde(default)]
    devices: Option<Vec<String>>,
    /// Explicit vector over the top-level `devices` list.
    #[serde(default)]
    relation: Option<Vec<f64>>,
}

impl ActivityMapping {
    /// Validates and builds a mapping from `(activity, flexibility, devices)`.
    pub fn new(
        devices: Vec<String>,
        activities: Vec<(String, Flexibility, Vec<String>)>,
    ) -> Result<Self> {
        let activities = activities
            .into_iter()
            .map(|(id, flexibility, members)| {
                let relation = devices
                    .iter()
                    .map(|d| u8::from(members.contains(d)))
                    .collect();
                for m in &members {
                    if !devices.contains(m) {
                        return Err(Error::Mapping(format!(
                            "activity `{id}` lists unknown device `{m}`"
                        )));
                    }
                }
                Ok(Activity {
                    id,
                    relation,
                    flexibility,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mapping = Self {
            devices,
            activities,
        };
        mapping.validate()?;
        Ok(mapping)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: MappingFile = toml::from_str(text).map_err(|e| Error::Mapping(e.to_string()))?;
        let mut devices = file.devices.clone().unwrap_or_default();
        if file.devices.is_none() {
            for a in &file.activities {
                for d in a.devices.iter().flatten() {
                    if !devices.contains(d) {
                        devices.push(d.clone());
                    }
                }
            }
        }
        let mut entries = Vec::with_capacity(file.activities.len());
        for a in file.activities {
            let members = match (a.devices, a.relation) {
                (Some(_), Some(_)) => {
                    return Err(Error::Mapping(format!(
                        "activity `{}`: give either `devices` or `relation`, not both",
                        a.id
                    )))
                }
                (Some(m), None) => m,
                (None, Some(rel)) => {
                    if file.devices.is_none() {
                        return Err(Error::Mapping(
                            "`relation` vectors need a top-level `devices` list".into(),
                        ));
                    }
                    if rel.len() != devices.len() {
                        return Err(Error::Mapping(format!(
                            "activity `{}`: relation has {} entries for {} devices",
                            a.id,
                            rel.len(),
                            devices.len()
                        )));
                    }
                    if let Some(v) = rel.iter().find(|&&v| v != 0.0 && v != 1.0) {
                        return Err(Error::Mapping(format!(
                            "activity `{}`: graded relation {v} (only 0 or 1 allowed)",
                            a.id
                        )));
                    }
                    devices
                        .iter()
                        .zip(&rel)
                        .filter(|(_, &v)| v == 1.0)
                        .map(|(d, _)| d.clone())
                        .collect()
                }
                (None, None) => Vec::new(),
            };
            entries.push((a.id, a.flexibility, members));
        }
        Self::new(devices, entries)
    }

    /// The `[[activity]]` file form read by [`ActivityMapping::from_toml_str`].
    pub fn to_toml_string(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Entry<'a> {
            id: &'a str,
            flexibility: Flexibility,
            devices: Vec<&'a str>,
        }
        #[derive(Serialize)]
        struct File<'a> {
            devices: &'a [String],
            activity: Vec<Entry<'a>>,
        }
        let file = File {
            devices: &self.devices,
            activity: self
                .activities
                .iter()
                .enumerate()
                .map(|(a, act)| Entry {
                    id: &act.id,
                    flexibility: act.flexibility,
                    devices: self.members(a).map(|d| self.devices[d].as_str()).collect(),
                })
                .collect(),
        };
        toml::to_string(&file).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Mapping(m) => Error::Mapping(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    fn validate(&self) -> Result<()> {
        if self.activities.is_empty() {
            return Err(Error::Mapping("no activities".into()));
        }
        let mut ids = HashSet::new();
        for a in &self.activities {
            if !ids.insert(a.id.as_str()) {
                return Err(Error::Mapping(format!("duplicate activity `{}`", a.id)));
            }
            if !a.relation.contains(&1) {
                return Err(Error::Mapping(format!("activity `{}` has no devices", a.id)));
            }
        }
        let mut seen = HashSet::new();
        for (d, name) in self.devices.iter().enumerate() {
            if !seen.insert(name.as_str()) {
                return Err(Error::Mapping(format!("duplicate device `{name}`")));
            }
            let owners: Vec<&str> = self
                .activities
                .iter()
                .filter(|a| a.relation[d] == 1)
                .map(|a| a.id.as_str())
                .collect();
            match owners.len() {
                1 => {}
                0 => {
                    return Err(Error::Mapping(format!(
                        "device `{name}` is not mapped to any activity"
                    )))
                }
                _ => {
                    return Err(Error::Mapping(format!(
                        "device `{name}` is mapped to several activities ({}); mappings must be exclusive",
                        owners.join(", ")
                    )))
                }
            }
        }
        Ok(())
    }

    pub fn devices(&self) -> &[String] {
        &self.devices
    }

    pub fn activities(&self) -> &[Activity] {
        &self.activities
    }

    pub fn activity(&self, id: &str) -> Option<&Activity> {
        self.activities.iter().find(|a| a.id == id)
    }

    pub fn relation_vector<T: Scalar>(&self, activity: usize) -> Vec<T> {
        self.activities[activity]
            .relation
            .iter()
            .map(|&r| if r == 1 { T::one() } else { T::zero() })
            .collect()
    }

    /// Device indices (mapping order) identifying `activity`.
    pub fn members(&self, activity: usize) -> impl Iterator<Item = usize> + '_ {
        self.activities[activity]
            .relation
            .iter()
            .enumerate()
            .filter(|(_, &r)| r == 1)
            .map(|(d, _)| d)
    }

    /// Index of the activity a device identifies.
    pub fn owner(&self, device: usize) -> usize {
        self.activities
            .iter()
            .position(|a| a.relation[device] == 1)
            .expect("validated mapping")
    }
}

/// `a·b / (|a| |b|)`; zero when either vector is all zeros.
pub fn cosine_similarity<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let (dot, na, nb) = a.iter().zip(b).fold(
        (T::zero(), T::zero(), T::zero()),
        |(d, x, y), (&p, &q)| (d + p * q, x + p * p, y + q * q),
    );
    if na.is_zero() || nb.is_zero() {
        return Ok(T::zero());
    }
    Ok(dot / (na.sqrt() * nb.sqrt()))
}

/// Normalised similarities of one hour's usage probabilities (mapping device
/// order) to every activity. All zeros when no activity is similar.
pub fn activity_probs<T: Scalar>(usage: &[T], mapping: &ActivityMapping) -> Result<Vec<T>> {
    let sims = (0..mapping.activities.len())
        .map(|i| cosine_similarity(usage, &mapping.relation_vector::<T>(i)))
        .collect::<Result<Vec<T>>>()?;
    let total = sims.iter().fold(T::zero(), |a, &s| a + s);
    if total.is_zero() {
        return Ok(vec![T::zero(); sims.len()]);
    }
    Ok(sims.into_iter().map(|s| s / total).collect())
}

/// One predicted occurrence of an activity within the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActivityInstance {
    pub predicted_start: usize,
    pub duration: usize,
}

impl ActivityInstance {
    pub fn hours(&self) -> std::ops::Range<usize> {
        self.predicted_start..self.predicted_start + self.duration
    }
}

/// Maximal runs of hours with probability strictly above `threshold`.
pub fn extract_instances<T: Scalar>(probs: &[T], threshold: T) -> Vec<ActivityInstance> {
    let mut out = Vec::new();
    let mut run: Option<usize> = None;
    for (h, &p) in probs.iter().enumerate() {
        match (p > threshold, run) {
            (true, None) => run = Some(h),
            (false, Some(s)) => {
                out.push(ActivityInstance {
                    predicted_start: s,
                    duration: h - s,
                });
                run = None;
            }
            _ => {}
        }
    }
    if let Some(s) = run {
        out.push(ActivityInstance {
            predicted_start: s,
            duration: probs.len() - s,
        });
    }
    out
}

/// One activity's hourly probabilities over a horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ActivityForecast<T> {
    pub activity_id: String,
    pub horizon_start: i64,
    pub probs: Vec<T>,
    pub instances: Vec<ActivityInstance>,
}

/// Activity forecasts for a horizon from per-device usage forecasts.
/// `usage[d]` holds the 24 probabilities of mapping device `d`.
pub fn forecast_activities<T: Scalar>(
    usage: &[Vec<T>],
    mapping: &ActivityMapping,
    horizon_start: i64,
    threshold: T,
) -> Result<Vec<ActivityForecast<T>>> {
    if usage.len() != mapping.devices.len() {
        return Err(Error::LengthMismatch {
            left: usage.len(),
            right: mapping.devices.len(),
        });
    }
    let mut per_activity = vec![Vec::with_capacity(HORIZON); mapping.activities.len()];
    let hours = usage.first().map_or(0, Vec::len);
    for h in 0..hours {
        let hour: Vec<T> = usage.iter().map(|u| u[h]).collect();
        for (a, p) in activity_probs(&hour, mapping)?.into_iter().enumerate() {
            per_activity[a].push(p);
        }
    }
    Ok(mapping
        .activities
        .iter()
        .zip(per_activity)
        .map(|(a, probs)| ActivityForecast {
            activity_id: a.id.clone(),
            horizon_start,
            instances: extract_instances(&probs, threshold),
            probs,
        })
        .collect())
}

/// The five-device example household: cooking uses oven and kettle.
pub fn example_mapping() -> ActivityMapping {
    let devices = ["Oven", "Kettle", "WashingMachine", "Dishwasher", "Television"]
        .map(String::from)
        .to_vec();
    ActivityMapping::new(
        devices,
        vec![
            ("Cooking".into(), Flexibility::Inflexible, vec!["Oven".into(), "Kettle".into()]),
            ("Laundering".into(), Flexibility::Flexible, vec!["WashingMachine".into()]),
            ("Cleaning".into(), Flexibility::Flexible, vec!["Dishwasher".into()]),
            ("Entertaining".into(), Flexibility::SlightlyFlexible, vec!["Television".into()]),
        ],
    )
    .expect("valid example mapping")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        // 1.4 / (1 * sqrt 2)
        let s: f64 = cosine_similarity(&[0.8, 0.6, 0.0], &[1.0, 1.0, 0.0]).unwrap();
        assert!((s - 0.989_949_493_661_166_5).abs() < 1e-12, "{s}");
        assert_eq!(cosine_similarity(&[0.0_f64; 3], &[1.0, 1.0, 0.0]).unwrap(), 0.0);
        assert!(cosine_similarity(&[1.0_f64], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn toml_roundtrip() {
        let m = example_mapping();
        assert_eq!(ActivityMapping::from_toml_str(&m.to_toml_string().unwrap()).unwrap(), m);
    }

    #[test]
    fn self_similarity_is_the_maximum() {
        let m = example_mapping();
        for k in 0..m.activities().len() {
            let probs = activity_probs(&m.relation_vector::<f64>(k), &m).unwrap();
            let best = probs.iter().cloned().fold(f64::MIN, f64::max);
            assert_eq!(probs[k], best);
        }
    }

    #[test]
    fn zero_usage_gives_zero_probs() {
        let m = example_mapping();
        assert_eq!(activity_probs(&[0.0_f64; 5], &m).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn cooking_dominates_with_oven_and_kettle() {
        // Oven 0.9, Kettle 0.9, others 0.05: |u| = sqrt(1.62 + 0.0075).
        let m = example_mapping();
        let u = [0.9, 0.9, 0.05, 0.05, 0.05];
        let norm = (0.81f64 * 2.0 + 0.0025 * 3.0).sqrt();
        let sims = [1.8 / (norm * 2f64.sqrt()), 0.05 / norm, 0.05 / norm, 0.05 / norm];
        let total: f64 = sims.iter().sum();
        let probs = activity_probs(&u, &m).unwrap();
        for (p, s) in probs.iter().zip(sims) {
            assert!((p - s / total).abs() < 1e-12);
        }
        assert!((probs[0] - 0.894_574).abs() < 1e-6, "{}", probs[0]);
        assert!(probs[1..].iter().all(|&p| p < probs[0]));
    }

    #[test]
    fn instances_from_runs() {
        let mut p = vec![0.1_f64; 24];
        p[0] = 0.9;
        p[1] = 0.9;
        assert_eq!(
            extract_instances(&p, 0.5),
            vec![ActivityInstance {
                predicted_start: 0,
                duration: 2
            }]
        );
        assert!(extract_instances(&[0.2_f64; 24], 0.5).is_empty());
        let mut p = vec![0.0_f64; 24];
        p[7] = 0.4;
        p[8] = 0.35;
        p[19] = 0.31;
        p[20] = 0.3;
        let got: Vec<(usize, usize)> = extract_instances(&p, 0.3)
            .iter()
            .map(|i| (i.predicted_start, i.duration))
            .collect();
        assert_eq!(got, vec![(7, 2), (19, 1)]);
        let mut p = vec![0.0_f64; 24];
        p[22] = 1.0;
        p[23] = 1.0;
        assert_eq!(extract_instances(&p, 0.5)[0].hours(), 22..24);
    }

    #[test]
    fn mapping_rejects_shared_devices() {
        let err = ActivityMapping::new(
            vec!["a".into(), "b".into()],
            vec![
                ("x".into(), Flexibility::Flexible, vec!["a".into()]),
                ("y".into(), Flexibility::Flexible, vec!["a".into(), "b".into()]),
            ],
        )
        .unwrap_err();
        assert!(err.to_string().contains("several activities"), "{err}");
    }

    #[test]
    fn mapping_rejects_unmapped_and_empty() {
        assert!(ActivityMapping::new(
            vec!["a".into(), "b".into()],
            vec![("x".into(), Flexibility::Flexible, vec!["a".into()])],
        )
        .is_err());
        assert!(ActivityMapping::new(
            vec!["a".into()],
            vec![
                ("x".into(), Flexibility::Flexible, vec!["a".into()]),
                ("y".into(), Flexibility::Flexible, vec![]),
            ],
        )
        .is_err());
    }

    #[test]
    fn mapping_toml_forms() {
        let text = r#"
            [[activity]]
            id = "Cooking"
            flexibility = "inflexible"
            devices = ["Oven", "Kettle"]

            [[activity]]
            id = "Laundering"
            flexibility = "flexible"
            devices = ["WashingMachine"]
        "#;
        let m = ActivityMapping::from_toml_str(text).unwrap();
        assert_eq!(m.devices(), &["Oven", "Kettle", "WashingMachine"]);
        assert_eq!(m.activities()[0].relation, vec![1, 1, 0]);
        assert_eq!(m.owner(2), 1);

        let text = r#"
            devices = ["Oven", "Kettle"]
            [[activity]]
            id = "Cooking"
            flexibility = "inflexible"
            relation = [1, 0.5]
        "#;
        let err = ActivityMapping::from_toml_str(text).unwrap_err();
        assert!(err.to_string().contains("graded"), "{err}");

        let text = r#"
            devices = ["Oven", "Kettle"]
            [[activity]]
            id = "Cooking"
            flexibility = "inflexible"
            relation = [1, 1]
        "#;
        assert_eq!(ActivityMapping::from_toml_str(text).unwrap().activities()[0].relation, vec![1, 1]);
    }

    fn usage_vec() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.0f64..=1.0, 5)
    }

    proptest! {
        #[test]
        fn scale_invariance(u in usage_vec(), lambda in 0.01f64..100.0) {
            let m = example_mapping();
            let a = activity_probs(&u, &m).unwrap();
            let scaled: Vec<f64> = u.iter().map(|x| x * lambda).collect();
            let b = activity_probs(&scaled, &m).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn probabilities_sum_to_one(u in usage_vec()) {
            let m = example_mapping();
            let p = activity_probs(&u, &m).unwrap();
            let s: f64 = p.iter().sum();
            prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
            if u.iter().any(|&x| x > 0.0) {
                prop_assert!((s - 1.0).abs() < 1e-9);
            } else {
                prop_assert_eq!(s, 0.0);
            }
        }

        #[test]
        fn concurrent_activities_both_detected(a in 0usize..4, b in 0usize..4) {
            prop_assume!(a != b);
            let m = example_mapping();
            let ra = m.relation_vector::<f64>(a);
            let rb = m.relation_vector::<f64>(b);
            let u: Vec<f64> = ra.iter().zip(&rb).map(|(x, y)| x.max(*y)).collect();
            let p = activity_probs(&u, &m).unwrap();
            prop_assert!(p[a] > 0.0 && p[b] > 0.0);
        }

        #[test]
        fn instances_tile_the_hours_above_threshold(
            probs in proptest::collection::vec(0.0f64..=1.0, 24),
            th in 0.0f64..=1.0,
        ) {
            let inst = extract_instances(&probs, th);
            let mut covered = vec![false; 24];
            let mut last_end = 0;
            for i in &inst {
                prop_assert!(i.duration >= 1);
                prop_assert!(i.predicted_start + i.duration <= 24);
                prop_assert!(i.predicted_start >= last_end);
                last_end = i.predicted_start + i.duration;
                for h in i.hours() {
                    covered[h] = true;
                }
            }
            for h in 0..24 {
                prop_assert_eq!(covered[h], probs[h] > th);
            }
        }
    }
}
