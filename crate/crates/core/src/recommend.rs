//! The day's shifting schedule: for every predicted activity instance, the
//! start hour within its flexibility window that minimises the blended
//! carbon/price score, plus the savings of following it.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::activity::{forecast_activities, ActivityInstance, ActivityMapping, Flexibility};
use crate::error::{Error, Result};
use crate::ingest::DeviceCatalog;
use crate::scalar::{argmin, Scalar};
use crate::signals::{rfc3339, DayAheadSignal, SignalPair, HORIZON};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecommendationConfig {
    /// Flexible activities may start outside the predicted availability hours.
    pub aval_off: bool,
    /// Weight of emissions against price, in `[0, 1]`.
    pub emissions_ratio: f64,
    pub availability_threshold: f64,
    pub activity_threshold: f64,
}

impl Default for RecommendationConfig {
    fn default() -> Self {
        Self {
            aval_off: true,
            emissions_ratio: 1.0,
            availability_threshold: 0.15,
            activity_threshold: 0.15,
        }
    }
}

impl RecommendationConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("emissions_ratio", self.emissions_ratio),
            ("availability_threshold", self.availability_threshold),
            ("activity_threshold", self.activity_threshold),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Hours with the lowest carbon intensity and the lowest price; earliest on
/// ties.
pub fn greenest_cheapest<T: Scalar>(
    carbon: &DayAheadSignal<T>,
    price: &DayAheadSignal<T>,
) -> (usize, usize) {
    (
        argmin(carbon.values()).expect("24 values"),
        argmin(price.values()).expect("24 values"),
    )
}

/// Hours whose availability probability reaches `threshold`, ascending.
pub fn availability_hours<T: Scalar>(probs: &[T], threshold: T) -> Vec<usize> {
    (0..probs.len()).filter(|&h| probs[h] >= threshold).collect()
}

/// Allowed start hours for an instance, ascending. Windows are clipped to
/// the horizon, never wrapped.
pub fn candidate_starts(
    instance: &ActivityInstance,
    flexibility: Flexibility,
    aval_off: bool,
    available: &[usize],
) -> Vec<usize> {
    let Some(last) = HORIZON.checked_sub(instance.duration) else {
        return Vec::new();
    };
    match flexibility.window() {
        None if aval_off => (0..=last).collect(),
        None => available.iter().copied().filter(|&s| s <= last).collect(),
        Some((before, after)) => {
            let pred = instance.predicted_start as i64;
            let lo = (pred + before).max(0);
            let hi = (pred + after).min(last as i64);
            (lo..=hi).map(|s| s as usize).collect()
        }
    }
}

fn min_max<T: Scalar>(v: &[T]) -> Vec<T> {
    let lo = v.iter().copied().fold(T::infinity(), T::min);
    let hi = v.iter().copied().fold(T::neg_infinity(), T::max);
    let range = hi - lo;
    if !(range > T::zero()) {
        return vec![T::zero(); v.len()];
    }
    v.iter().map(|&x| (x - lo) / range).collect()
}

/// `r * carbon + (1 - r) * price`, each min-max normalised over the horizon.
pub fn blended_score<T: Scalar>(carbon: &[T], price: &[T], r: T) -> Vec<T> {
    let c = min_max(carbon);
    let p = min_max(price);
    c.iter()
        .zip(&p)
        .map(|(&c, &p)| r * c + (T::one() - r) * p)
        .collect()
}

/// Sum of `values[start..start + len]`.
pub fn window_sum<T: Scalar>(values: &[T], start: usize, len: usize) -> T {
    values[start..start + len]
        .iter()
        .fold(T::zero(), |a, &v| a + v)
}

/// Candidate with the lowest window score; ties go to the start closest to
/// the predicted one, then to the earliest. `None` without candidates.
pub fn best_start<T: Scalar>(
    instance: &ActivityInstance,
    candidates: &[usize],
    score: &[T],
) -> Option<usize> {
    let pred = instance.predicted_start;
    let mut best: Option<(T, usize, usize)> = None;
    for &s in candidates {
        let sum = window_sum(score, s, instance.duration);
        let key = (sum, s.abs_diff(pred), s);
        let better = match best {
            None => true,
            Some((b, d, e)) => sum < b || (sum == b && (key.1, key.2) < (d, e)),
        };
        if better {
            best = Some(key);
        }
    }
    best.map(|(_, _, s)| s)
}

/// Greedy slot assignment for the instances of one flexible activity, in
/// the given order: each takes its best start among candidates not taken by
/// an earlier instance. `None` when an instance's candidates are exhausted.
pub fn assign_flexible_slots<T: Scalar>(
    instances: &[ActivityInstance],
    candidates: &[Vec<usize>],
    score: &[T],
) -> Vec<Option<usize>> {
    let mut used: Vec<usize> = Vec::new();
    instances
        .iter()
        .zip(candidates)
        .map(|(inst, cands)| {
            let free: Vec<usize> = cands.iter().copied().filter(|s| !used.contains(s)).collect();
            let s = best_start(inst, &free, score);
            used.extend(s);
            s
        })
        .collect()
}

/// Emissions (g) and price (currency) saved by moving an instance drawing
/// `energy_kwh` per hour from its predicted start to `recommended`. Prices
/// are per MWh.
pub fn savings<T: Scalar>(
    instance: &ActivityInstance,
    recommended: usize,
    signals: &SignalPair<T>,
    energy_kwh: T,
) -> (T, T) {
    let d = instance.duration;
    let p = instance.predicted_start;
    let diff = |v: &[T]| window_sum(v, p, d) - window_sum(v, recommended, d);
    (
        energy_kwh * diff(signals.carbon.values()),
        energy_kwh * diff(signals.price.values()) / T::lit(1000.0),
    )
}

/// Emissions and cost of running an instance at its predicted start.
pub fn baseline<T: Scalar>(instance: &ActivityInstance, signals: &SignalPair<T>, energy_kwh: T) -> (T, T) {
    let (p, d) = (instance.predicted_start, instance.duration);
    (
        energy_kwh * window_sum(signals.carbon.values(), p, d),
        energy_kwh * window_sum(signals.price.values(), p, d) / T::lit(1000.0),
    )
}

/// Summed mean hourly consumption of the activity's devices whose usage
/// probability exceeds `threshold` somewhere in the instance. `usage` and
/// `device_kwh` are in mapping device order.
pub fn instance_energy<T: Scalar>(
    instance: &ActivityInstance,
    activity: usize,
    mapping: &ActivityMapping,
    usage: &[Vec<T>],
    device_kwh: &[T],
    threshold: T,
) -> T {
    mapping
        .members(activity)
        .filter(|&d| instance.hours().any(|h| usage[d][h] > threshold))
        .fold(T::zero(), |a, d| a + device_kwh[d])
}

/// Mean hourly consumption (kWh) of each mapping device, from the catalog.
pub fn mapping_energy<T: Scalar>(mapping: &ActivityMapping, catalog: &DeviceCatalog) -> Result<Vec<T>> {
    mapping
        .devices()
        .iter()
        .map(|id| {
            let spec = catalog.get(id).ok_or_else(|| Error::UnknownDevice(id.clone()))?;
            spec.avg_kwh.map(T::lit).ok_or_else(|| {
                Error::Catalog(format!(
                    "device `{id}` has no avg_kwh; set it or estimate it from the data"
                ))
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Recommendation<T> {
    pub activity_id: String,
    pub flexibility: Flexibility,
    pub instance: ActivityInstance,
    pub recommended_start: usize,
    /// Mean hourly consumption assumed for the savings, kWh.
    pub energy_kwh: T,
    pub emissions_saving: T,
    pub price_saving: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    /// Predicted start outside the availability hours.
    Unavailable,
    NoCandidates,
    /// Every candidate start was taken by an earlier instance.
    Exhausted,
    /// The best free start scores worse than the predicted one.
    NoImprovement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub activity_id: String,
    pub instance: ActivityInstance,
    pub reason: SkipReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ScheduleReport<T> {
    pub horizon_start: i64,
    pub config: RecommendationConfig,
    pub greenest_hour: usize,
    pub cheapest_hour: usize,
    pub availability_hours: Vec<usize>,
    pub recommendations: Vec<Recommendation<T>>,
    pub skipped: Vec<Skipped>,
    pub total_emissions_saving: T,
    pub total_price_saving: T,
    /// Emissions and cost of the recommended instances at their predicted
    /// starts.
    pub baseline_emissions: T,
    pub baseline_price: T,
    pub relative_emissions_saving: T,
    pub relative_price_saving: T,
}

fn ratio<T: Scalar>(num: T, den: T) -> T {
    if den.is_zero() {
        T::zero()
    } else {
        num / den
    }
}

impl<T: Scalar> ScheduleReport<T> {
    /// Recomputes totals and relative savings from the recommendations.
    pub fn refresh_totals(&mut self, signals: &SignalPair<T>) {
        let (mut e, mut p, mut be, mut bp) = (T::zero(), T::zero(), T::zero(), T::zero());
        for r in &self.recommendations {
            e = e + r.emissions_saving;
            p = p + r.price_saving;
            let (x, y) = baseline(&r.instance, signals, r.energy_kwh);
            be = be + x;
            bp = bp + y;
        }
        self.total_emissions_saving = e;
        self.total_price_saving = p;
        self.baseline_emissions = be;
        self.baseline_price = bp;
        self.relative_emissions_saving = ratio(e, be);
        self.relative_price_saving = ratio(p, bp);
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))
    }

    /// Plain-text table: greenest and cheapest hour, one row per
    /// recommendation, savings footer.
    pub fn render_table(&self) -> String {
        let clock = |h: usize| {
            let hour = (self.horizon_start.rem_euclid(86_400) / 3_600) as usize;
            format!("{:02}:00", (hour + h) % 24)
        };
        let mut s = String::new();
        let _ = writeln!(s, "Recommendations from {}", rfc3339(self.horizon_start));
        let _ = writeln!(
            s,
            "emissions ratio {:.2} | aval_off {} | availability threshold {:.2} | activity threshold {:.2}",
            self.config.emissions_ratio,
            self.config.aval_off,
            self.config.availability_threshold,
            self.config.activity_threshold
        );
        let _ = writeln!(s);
        let _ = writeln!(s, "Greenest hour: {}", clock(self.greenest_hour));
        let _ = writeln!(s, "Cheapest hour: {}", clock(self.cheapest_hour));
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<16} {:<20} {:>8}", "Activity", "Best beginning hour", "Duration");
        if self.recommendations.is_empty() {
            let _ = writeln!(s, "(no recommendations)");
        }
        for r in &self.recommendations {
            let _ = writeln!(
                s,
                "{:<16} {:<20} {:>6} h",
                r.activity_id,
                clock(r.recommended_start),
                r.instance.duration
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "Total emissions savings: {:.1} gCO2 ({:.1} %)",
            self.total_emissions_saving.as_f64(),
            100.0 * self.relative_emissions_saving.as_f64()
        );
        let _ = writeln!(
            s,
            "Total price savings: {:.4} ({:.1} %)",
            self.total_price_saving.as_f64(),
            100.0 * self.relative_price_saving.as_f64()
        );
        s
    }
}

/// Builds the schedule for one horizon. `usage` holds each mapping device's
/// 24 usage probabilities (mapping order); `device_kwh` its mean hourly
/// consumption.
pub fn build_schedule<T: Scalar>(
    availability: &[T],
    usage: &[Vec<T>],
    signals: &SignalPair<T>,
    mapping: &ActivityMapping,
    device_kwh: &[T],
    config: &RecommendationConfig,
) -> Result<ScheduleReport<T>> {
    config.validate()?;
    if availability.len() != HORIZON {
        return Err(Error::LengthMismatch {
            left: availability.len(),
            right: HORIZON,
        });
    }
    if device_kwh.len() != mapping.devices().len() {
        return Err(Error::LengthMismatch {
            left: device_kwh.len(),
            right: mapping.devices().len(),
        });
    }
    if let Some(u) = usage.iter().find(|u| u.len() != HORIZON) {
        return Err(Error::LengthMismatch {
            left: u.len(),
            right: HORIZON,
        });
    }
    let act_th = T::lit(config.activity_threshold);
    let available = availability_hours(availability, T::lit(config.availability_threshold));
    let score = blended_score(
        signals.carbon.values(),
        signals.price.values(),
        T::lit(config.emissions_ratio),
    );
    let (greenest, cheapest) = greenest_cheapest(&signals.carbon, &signals.price);
    let activities = forecast_activities(usage, mapping, signals.carbon.horizon_start(), act_th)?;

    let mut recommendations = Vec::new();
    let mut skipped = Vec::new();
    for (a, forecast) in activities.iter().enumerate() {
        let activity = &mapping.activities()[a];
        let skip = |instance: ActivityInstance, reason| Skipped {
            activity_id: activity.id.clone(),
            instance,
            reason,
        };
        let (gated, open): (Vec<_>, Vec<_>) = forecast
            .instances
            .iter()
            .copied()
            .partition(|i| available.binary_search(&i.predicted_start).is_err());
        skipped.extend(gated.into_iter().map(|i| skip(i, SkipReason::Unavailable)));

        let candidates: Vec<Vec<usize>> = open
            .iter()
            .map(|i| candidate_starts(i, activity.flexibility, config.aval_off, &available))
            .collect();
        let starts = if activity.flexibility == Flexibility::Flexible {
            assign_flexible_slots(&open, &candidates, &score)
        } else {
            open.iter()
                .zip(&candidates)
                .map(|(i, c)| best_start(i, c, &score))
                .collect()
        };
        for ((instance, cands), start) in open.iter().zip(&candidates).zip(starts) {
            let Some(rec) = start else {
                let reason = if cands.is_empty() {
                    SkipReason::NoCandidates
                } else {
                    SkipReason::Exhausted
                };
                skipped.push(skip(*instance, reason));
                continue;
            };
            let d = instance.duration;
            if window_sum(&score, rec, d) > window_sum(&score, instance.predicted_start, d) {
                skipped.push(skip(*instance, SkipReason::NoImprovement));
                continue;
            }
            let energy = instance_energy(instance, a, mapping, usage, device_kwh, act_th);
            let (e, p) = savings(instance, rec, signals, energy);
            recommendations.push(Recommendation {
                activity_id: activity.id.clone(),
                flexibility: activity.flexibility,
                instance: *instance,
                recommended_start: rec,
                energy_kwh: energy,
                emissions_saving: e,
                price_saving: p,
            });
        }
    }

    let mut report = ScheduleReport {
        horizon_start: signals.carbon.horizon_start(),
        config: *config,
        greenest_hour: greenest,
        cheapest_hour: cheapest,
        availability_hours: available,
        recommendations,
        skipped,
        total_emissions_saving: T::zero(),
        total_price_saving: T::zero(),
        baseline_emissions: T::zero(),
        baseline_price: T::zero(),
        relative_emissions_saving: T::zero(),
        relative_price_saving: T::zero(),
    };
    report.refresh_totals(signals);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activity::example_mapping;
    use crate::signals::SignalKind;
    use proptest::prelude::*;

    fn inst(start: usize, dur: usize) -> ActivityInstance {
        ActivityInstance {
            predicted_start: start,
            duration: dur,
        }
    }

    fn pair(carbon: Vec<f64>, price: Vec<f64>) -> SignalPair<f64> {
        SignalPair {
            carbon: DayAheadSignal::new(SignalKind::Carbon, 0, carbon).unwrap(),
            price: DayAheadSignal::new(SignalKind::Price, 0, price).unwrap(),
        }
    }

    /// Every feasible start, the window sums and the tie rule, spelled out.
    fn oracle(instance: &ActivityInstance, candidates: &[usize], score: &[f64]) -> Option<usize> {
        let mut all: Vec<(f64, usize, usize)> = candidates
            .iter()
            .map(|&s| {
                let sum: f64 = (0..instance.duration).fold(0.0, |a, k| a + score[s + k]);
                (sum, s.abs_diff(instance.predicted_start), s)
            })
            .collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        all.first().map(|t| t.2)
    }

    #[test]
    fn greenest_and_cheapest() {
        let s = pair(vec![5.0; 24], (0..24).map(f64::from).collect());
        assert_eq!(greenest_cheapest(&s.carbon, &s.price), (0, 0));
        let mut c = vec![300.0; 24];
        c[3] = 100.0;
        let mut p = vec![50.0; 24];
        p[23] = 10.0;
        let s = pair(c, p);
        assert_eq!(greenest_cheapest(&s.carbon, &s.price), (3, 23));
    }

    #[test]
    fn availability_threshold_filter() {
        assert!(availability_hours(&[0.0f64; 24], 0.15).is_empty());
        let probs: Vec<f64> = (0..24).map(|h| if (18..=22).contains(&h) { 0.2 } else { 0.1 }).collect();
        assert_eq!(availability_hours(&probs, 0.15), vec![18, 19, 20, 21, 22]);
        assert_eq!(availability_hours(&probs, 0.0).len(), 24);
    }

    #[test]
    fn candidate_windows() {
        assert_eq!(
            candidate_starts(&inst(10, 2), Flexibility::Inflexible, true, &[]),
            vec![9, 10, 11, 12]
        );
        assert_eq!(
            candidate_starts(&inst(20, 3), Flexibility::SlightlyFlexible, true, &[]),
            vec![19, 20, 21]
        );
        assert_eq!(
            candidate_starts(&inst(5, 1), Flexibility::Flexible, true, &[]),
            (0..24).collect::<Vec<_>>()
        );
        assert_eq!(
            candidate_starts(&inst(0, 1), Flexibility::Inflexible, true, &[]),
            vec![0, 1, 2]
        );
        assert_eq!(
            candidate_starts(&inst(20, 2), Flexibility::Flexible, false, &[3, 20, 22, 23]),
            vec![3, 20, 22]
        );
    }

    #[test]
    fn blended_score_extremes() {
        let carbon: Vec<f64> = (0..24).map(|h| ((h * 7) % 24) as f64).collect();
        let price: Vec<f64> = (0..24).map(|h| ((h * 5) % 24) as f64 * 3.0 + 10.0).collect();
        let order = |v: &[f64]| {
            let mut idx: Vec<usize> = (0..24).collect();
            idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
            idx
        };
        assert_eq!(order(&blended_score(&carbon, &price, 1.0)), order(&carbon));
        assert_eq!(order(&blended_score(&carbon, &price, 0.0)), order(&price));
        let rising: Vec<f64> = (0..24).map(f64::from).collect();
        let falling: Vec<f64> = rising.iter().rev().copied().collect();
        for s in blended_score(&rising, &falling, 0.5) {
            assert!((s - 0.5).abs() < 1e-9);
        }
        assert_eq!(blended_score(&[7.0; 24], &[7.0; 24], 0.3), vec![0.0; 24]);
    }

    #[test]
    fn best_start_examples() {
        let score: Vec<f64> = (0..24).map(|h| 24.0 - h as f64).collect();
        assert_eq!(best_start(&inst(4, 1), &[7], &score), Some(7));
        let all: Vec<usize> = (0..=22).collect();
        assert_eq!(best_start(&inst(4, 2), &all, &score), Some(22));
        assert_eq!(best_start(&inst(4, 2), &all, &[1.0; 24]), Some(4));
        assert_eq!(best_start::<f64>(&inst(4, 2), &[], &score), None);
        // equal sums at 3 and 5 around pred 4 with 4 worse: earliest wins
        let mut s = vec![5.0; 24];
        s[3] = 1.0;
        s[5] = 1.0;
        assert_eq!(best_start(&inst(4, 1), &[3, 4, 5], &s), Some(3));
    }

    #[test]
    fn flexible_slots_examples() {
        let mut score = vec![10.0; 24];
        score[3] = 1.0;
        score[4] = 2.0;
        let cands: Vec<usize> = (0..24).collect();
        let got = assign_flexible_slots(&[inst(8, 1), inst(15, 1)], &[cands.clone(), cands.clone()], &score);
        assert_eq!(got, vec![Some(3), Some(4)]);
        assert_eq!(assign_flexible_slots(&[inst(8, 1)], &[cands], &score), vec![Some(3)]);
        let three = vec![vec![5, 6, 7]; 3];
        let got = assign_flexible_slots(&[inst(5, 1), inst(6, 1), inst(7, 1)], &three, &score);
        let mut used: Vec<usize> = got.iter().map(|s| s.unwrap()).collect();
        used.sort();
        assert_eq!(used, vec![5, 6, 7]);
        let got = assign_flexible_slots(&[inst(5, 1), inst(6, 1)], &[vec![5], vec![5]], &score);
        assert_eq!(got, vec![Some(5), None]);
    }

    #[test]
    fn savings_examples() {
        let mut carbon = vec![150.0; 24];
        carbon[10] = 200.0;
        carbon[12] = 100.0;
        let mut price = vec![40.0; 24];
        price[10] = 60.0;
        price[12] = 20.0;
        let s = pair(carbon, price);
        assert_eq!(savings(&inst(10, 1), 10, &s, 1.0), (0.0, 0.0));
        let (e, p) = savings(&inst(10, 1), 12, &s, 1.0);
        assert_eq!(e, 100.0);
        assert!((p - 0.04).abs() < 1e-15);
    }

    fn usage_with(device: usize, hours: std::ops::Range<usize>, p: f64) -> Vec<Vec<f64>> {
        let mut u = vec![vec![0.0; 24]; 5];
        for h in hours {
            u[device][h] = p;
        }
        u
    }

    #[test]
    fn unavailable_day_has_no_recommendations() {
        let mapping = example_mapping();
        let s = pair((0..24).map(f64::from).collect(), vec![30.0; 24]);
        let usage = usage_with(2, 10..12, 0.9);
        let report = build_schedule(&[0.0; 24], &usage, &s, &mapping, &[1.0; 5], &RecommendationConfig {
            aval_off: false,
            ..Default::default()
        })
        .unwrap();
        assert!(report.recommendations.is_empty());
        assert_eq!(report.greenest_hour, 0);
        assert_eq!(report.skipped[0].reason, SkipReason::Unavailable);
    }

    #[test]
    fn inflexible_instance_moves_to_window_minimum() {
        let mapping = example_mapping();
        let mut carbon = vec![300.0; 24];
        carbon[13] = 100.0;
        let s = pair(carbon, vec![30.0; 24]);
        let usage = usage_with(1, 12..13, 0.9); // kettle at noon -> cooking
        let report =
            build_schedule(&[1.0; 24], &usage, &s, &mapping, &[0.5; 5], &RecommendationConfig::default()).unwrap();
        assert_eq!(report.recommendations.len(), 1);
        let r = &report.recommendations[0];
        assert_eq!((r.activity_id.as_str(), r.recommended_start), ("Cooking", 13));
        assert_eq!(r.energy_kwh, 0.5);
        assert_eq!(r.emissions_saving, 100.0);
        assert_eq!(report.total_emissions_saving, 100.0);
        assert!((report.relative_emissions_saving - 100.0 / 150.0).abs() < 1e-12);
    }

    #[test]
    fn energy_counts_only_predicted_devices() {
        let mapping = example_mapping();
        let mut usage = usage_with(0, 12..14, 0.9);
        usage[1][13] = 0.1;
        let e = instance_energy(&inst(12, 2), 0, &mapping, &usage, &[2.0, 0.1, 1.0, 1.0, 1.0], 0.15);
        assert_eq!(e, 2.0);
        usage[1][13] = 0.2;
        let e = instance_energy(&inst(12, 2), 0, &mapping, &usage, &[2.0, 0.1, 1.0, 1.0, 1.0], 0.15);
        assert!((e - 2.1).abs() < 1e-12);
    }

    #[test]
    fn table_rendering() {
        let mapping = example_mapping();
        let mut carbon = vec![300.0; 24];
        carbon[3] = 90.0;
        let s = pair(carbon, (0..24).map(|h| 50.0 - h as f64).collect());
        let usage = usage_with(2, 19..21, 0.8);
        let report =
            build_schedule(&[1.0; 24], &usage, &s, &mapping, &[1.0; 5], &RecommendationConfig::default()).unwrap();
        let text = report.render_table();
        assert!(text.contains("Greenest hour: 03:00"), "{text}");
        assert!(text.contains("Cheapest hour: 23:00"), "{text}");
        assert!(text.contains("Laundering"), "{text}");
        let back: ScheduleReport<f64> = serde_json::from_str(&report.to_json().unwrap()).unwrap();
        assert_eq!(back, report);
    }

    fn signal_vec() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.0f64..500.0, 24)
    }

    fn flex() -> impl Strategy<Value = Flexibility> {
        prop_oneof![
            Just(Flexibility::Flexible),
            Just(Flexibility::SlightlyFlexible),
            Just(Flexibility::Inflexible)
        ]
    }

    proptest! {
        #[test]
        fn best_start_equals_enumeration(
            carbon in signal_vec(), price in signal_vec(), r in 0.0f64..=1.0,
            dur in 1usize..=5, pred_raw in 0usize..24, f in flex(), aval_off: bool,
            avail in proptest::collection::btree_set(0usize..24, 0..24),
        ) {
            let pred = pred_raw.min(24 - dur);
            let i = inst(pred, dur);
            let avail: Vec<usize> = avail.into_iter().collect();
            let cands = candidate_starts(&i, f, aval_off, &avail);
            let score = blended_score(&carbon, &price, r);
            prop_assert_eq!(best_start(&i, &cands, &score), oracle(&i, &cands, &score));
            for &s in &cands {
                prop_assert!(s + dur <= 24);
                if let Some((b, a)) = f.window() {
                    prop_assert!(s as i64 >= pred as i64 + b && s as i64 <= pred as i64 + a);
                }
            }
        }

        #[test]
        fn schedule_invariants(
            carbon in signal_vec(), price in signal_vec(),
            r in prop_oneof![Just(0.0f64), Just(0.5), Just(1.0)],
            aval_off: bool,
            usage in proptest::collection::vec(proptest::collection::vec(0.0f64..=1.0, 24), 5),
            avail in proptest::collection::vec(0.0f64..=1.0, 24),
        ) {
            let mapping = example_mapping();
            let s = pair(carbon, price);
            let cfg = RecommendationConfig { aval_off, emissions_ratio: r, ..Default::default() };
            let report = build_schedule(&avail, &usage, &s, &mapping, &[1.0, 0.2, 1.5, 1.1, 0.1], &cfg).unwrap();
            let score = blended_score(s.carbon.values(), s.price.values(), r);
            let mut e = 0.0;
            let mut p = 0.0;
            for rec in &report.recommendations {
                let d = rec.instance.duration;
                prop_assert!(rec.recommended_start + d <= 24);
                prop_assert!(window_sum(&score, rec.recommended_start, d)
                    <= window_sum(&score, rec.instance.predicted_start, d));
                if r == 1.0 { prop_assert!(rec.emissions_saving >= 0.0); }
                if r == 0.0 { prop_assert!(rec.price_saving >= 0.0); }
                e += rec.emissions_saving;
                p += rec.price_saving;
            }
            prop_assert!((report.total_emissions_saving - e).abs() < 1e-9);
            prop_assert!((report.total_price_saving - p).abs() < 1e-9);
            for a in mapping.activities() {
                let mut starts: Vec<usize> = report.recommendations.iter()
                    .filter(|x| x.activity_id == a.id).map(|x| x.recommended_start).collect();
                let n = starts.len();
                starts.sort();
                starts.dedup();
                if a.flexibility == Flexibility::Flexible { prop_assert_eq!(starts.len(), n); }
            }
        }
    }
}
