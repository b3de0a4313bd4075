//! Availability and per-device usage forecasts for a day's horizon.

use std::io::Write;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activity::ActivityMapping;
use crate::error::{Error, Result};
use crate::ingest::HourlyDataset;
use crate::models::{rolling_fit_predict, DayForecast, RollingOptions, Target};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct AvailabilityForecast<T> {
    pub day: usize,
    /// Unix seconds of the first forecast hour.
    pub horizon_start: i64,
    pub probs: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct UsageForecast<T> {
    pub device_id: String,
    pub day: usize,
    pub horizon_start: i64,
    pub probs: Vec<T>,
}

fn check_day(opts: &RollingOptions, day: usize) -> Result<()> {
    if day < opts.schedule.headstart_days {
        return Err(Error::InsufficientHistory {
            hour: opts.horizon_hour(day),
            needed: opts.schedule.first_horizon(opts.hour_offset),
        });
    }
    Ok(())
}

fn single_day<T: Scalar>(
    ds: &HourlyDataset,
    target: Target,
    opts: &RollingOptions,
    day: usize,
) -> Result<DayForecast<T>> {
    check_day(opts, day)?;
    let hour = opts.horizon_hour(day);
    let model = crate::models::fit_for_horizon::<T>(ds, target, opts, hour)?;
    let rows = crate::models::horizon_rows(ds, target, hour)?;
    let probs = crate::models::predict_proba(&model, &rows, &target.schema(ds))?;
    Ok(DayForecast {
        day,
        horizon_hour: hour,
        probs,
        hyperparams: model.hyperparams,
        degenerate: model.degenerate,
    })
}

/// Availability probabilities for the horizon of `day` (0-based).
pub fn forecast_availability<T: Scalar>(
    ds: &HourlyDataset,
    opts: &RollingOptions,
    day: usize,
) -> Result<AvailabilityForecast<T>> {
    let f = single_day(ds, Target::Availability, opts, day)?;
    Ok(AvailabilityForecast {
        day,
        horizon_start: ds.hour_timestamp(f.horizon_hour),
        probs: f.probs,
    })
}

fn usage_target(ds: &HourlyDataset, device_id: &str) -> Result<Target> {
    let d = ds
        .device_index(device_id)
        .ok_or_else(|| Error::UnknownDevice(device_id.to_string()))?;
    if !ds.catalog.devices[d].shiftable {
        return Err(Error::Config(format!(
            "device `{device_id}` is not part of any shiftable activity"
        )));
    }
    Ok(Target::Device(d))
}

/// Usage probabilities of one shiftable device for the horizon of `day`.
pub fn forecast_usage<T: Scalar>(
    ds: &HourlyDataset,
    device_id: &str,
    opts: &RollingOptions,
    day: usize,
) -> Result<UsageForecast<T>> {
    let target = usage_target(ds, device_id)?;
    let f = single_day(ds, target, opts, day)?;
    Ok(UsageForecast {
        device_id: device_id.to_string(),
        day,
        horizon_start: ds.hour_timestamp(f.horizon_hour),
        probs: f.probs,
    })
}

/// All forecasts of one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DayBundle<T> {
    pub day: usize,
    pub horizon_hour: usize,
    pub horizon_start: i64,
    pub availability: Vec<T>,
    /// `(device id, probabilities)` in catalog order, shiftable devices only.
    pub usage: Vec<(String, Vec<T>)>,
}

impl<T: Scalar> DayBundle<T> {
    pub fn availability_forecast(&self) -> AvailabilityForecast<T> {
        AvailabilityForecast {
            day: self.day,
            horizon_start: self.horizon_start,
            probs: self.availability.clone(),
        }
    }

    pub fn usage_of(&self, device_id: &str) -> Option<&[T]> {
        self.usage
            .iter()
            .find(|(id, _)| id == device_id)
            .map(|(_, p)| p.as_slice())
    }

    /// Usage forecasts in the mapping's device order.
    pub fn usage_for(&self, mapping: &ActivityMapping) -> Result<Vec<Vec<T>>> {
        mapping
            .devices()
            .iter()
            .map(|d| {
                self.usage_of(d)
                    .map(<[T]>::to_vec)
                    .ok_or_else(|| Error::UnknownDevice(d.clone()))
            })
            .collect()
    }
}

/// Rolling forecasts of availability and every shiftable device for the
/// predictable days within `days`. Targets are fitted in parallel; the result
/// is identical to a sequential run.
pub fn forecast_household<T: Scalar>(
    ds: &HourlyDataset,
    opts: &RollingOptions,
    days: Option<Range<usize>>,
) -> Result<Vec<DayBundle<T>>> {
    let mut targets = vec![Target::Availability];
    targets.extend(
        ds.catalog
            .devices
            .iter()
            .enumerate()
            .filter(|(_, d)| d.shiftable)
            .map(|(i, _)| Target::Device(i)),
    );
    let per_target: Vec<Vec<DayForecast<T>>> = targets
        .par_iter()
        .map(|&t| rolling_fit_predict(ds, t, opts, days.clone()))
        .collect::<Result<_>>()?;

    let (avail, devices) = per_target.split_first().expect("availability target");
    Ok(avail
        .iter()
        .enumerate()
        .map(|(i, a)| DayBundle {
            day: a.day,
            horizon_hour: a.horizon_hour,
            horizon_start: ds.hour_timestamp(a.horizon_hour),
            availability: a.probs.clone(),
            usage: targets[1..]
                .iter()
                .zip(devices)
                .map(|(t, f)| (t.name(ds), f[i].probs.clone()))
                .collect(),
        })
        .collect())
}

/// Writes `day,hour,prob` rows.
pub fn write_forecast_csv<T: Scalar, W: Write>(
    out: W,
    rows: impl IntoIterator<Item = (usize, Vec<T>)>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Serde(e.to_string());
    w.write_record(["day", "hour", "prob"]).map_err(err)?;
    for (day, probs) in rows {
        for (h, p) in probs.iter().enumerate() {
            w.write_record([day.to_string(), h.to_string(), p.to_string()])
                .map_err(err)?;
        }
    }
    w.flush().map_err(|e| Error::Serde(e.to_string()))
}
