//! Appliance-level readings: REFIT-style CSV parsing, hourly resampling and
//! the time and lag features consumed by the prediction models.
//!
//! Hours are UTC wall-clock hour starts; timestamps are truncated into their
//! hour bucket. Matrices are stored column-major (one `Vec` per device) since
//! every consumer walks a single device's series.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Datelike, NaiveDateTime, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SECONDS_PER_HOUR: i64 = 3_600;
pub const SECONDS_PER_DAY: i64 = 86_400;
pub const HOURS_PER_WEEK: usize = 168;
pub const DEFAULT_USAGE_THRESHOLD_WH: f64 = 10.0;

/// Power samples of one appliance.
#[derive(Debug, Clone, PartialEq)]
pub struct RawReadings {
    pub device_id: String,
    /// `(unix seconds, watts)`, strictly increasing in time.
    pub samples: Vec<(i64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DataFormat {
    /// `Time[,Unix],Aggregate,Appliance1..N` in watts.
    #[default]
    Refit,
}

#[derive(Debug, Clone, Copy)]
pub struct ReadOptions {
    pub format: DataFormat,
    /// How far (seconds) a row may fall behind the latest timestamp seen and
    /// still be re-ordered instead of rejected.
    pub reorder_window: i64,
}

impl Default for ReadOptions {
    fn default() -> Self {
        Self {
            format: DataFormat::Refit,
            reorder_window: 60,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadedReadings {
    pub readings: Vec<RawReadings>,
    /// Rows rejected by the parser (bad field count, unparsable numbers,
    /// negative or non-finite power, duplicate timestamps).
    pub malformed_rows: usize,
}

/// Parses a timestamp given either as unix seconds or as ISO-8601 /
/// `YYYY-MM-DD HH:MM:SS` (interpreted as UTC).
pub fn parse_timestamp(field: &str) -> Option<i64> {
    let field = field.trim();
    if let Ok(secs) = field.parse::<i64>() {
        return Some(secs);
    }
    if let Ok(secs) = field.parse::<f64>() {
        if secs.is_finite() {
            return Some(secs.floor() as i64);
        }
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(field) {
        return Some(dt.timestamp());
    }
    for fmt in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(field, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    None
}

/// Reads every appliance column of a consumption file. The `Aggregate`
/// column is not an appliance and is skipped.
pub fn load_readings(path: &Path, options: ReadOptions) -> Result<LoadedReadings> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let DataFormat::Refit = options.format;
    parse_refit(&text, path, options.reorder_window)
}

fn parse_refit(text: &str, path: &Path, reorder_window: i64) -> Result<LoadedReadings> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = match reader.headers() {
        Ok(h) if !h.is_empty() && !(h.len() == 1 && h[0].is_empty()) => h.clone(),
        _ => return Err(Error::NoRows { path: path.into() }),
    };

    let time_col = headers
        .iter()
        .position(|h| h.eq_ignore_ascii_case("unix"))
        .or_else(|| headers.iter().position(|h| h.eq_ignore_ascii_case("time")))
        .ok_or_else(|| Error::parse(path, "missing `Time` column"))?;
    let device_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| {
            !h.eq_ignore_ascii_case("time")
                && !h.eq_ignore_ascii_case("unix")
                && !h.eq_ignore_ascii_case("aggregate")
        })
        .map(|(i, h)| (i, h.to_string()))
        .collect();
    if device_cols.is_empty() {
        return Err(Error::parse(path, "no appliance columns"));
    }

    let mut rows: Vec<(i64, Vec<f64>)> = Vec::new();
    let mut malformed = 0usize;
    let mut latest = i64::MIN;
    for (idx, record) in reader.records().enumerate() {
        let Ok(record) = record else {
            malformed += 1;
            continue;
        };
        if record.len() != headers.len() {
            malformed += 1;
            continue;
        }
        let Some(ts) = parse_timestamp(&record[time_col]) else {
            malformed += 1;
            continue;
        };
        let powers: Option<Vec<f64>> = device_cols
            .iter()
            .map(|(i, _)| {
                record[*i]
                    .parse::<f64>()
                    .ok()
                    .filter(|p| p.is_finite() && *p >= 0.0)
            })
            .collect();
        let Some(powers) = powers else {
            malformed += 1;
            continue;
        };
        if latest != i64::MIN && ts < latest - reorder_window {
            return Err(Error::NonMonotone {
                row: idx + 2,
                timestamp: ts,
                window: reorder_window,
            });
        }
        latest = latest.max(ts);
        rows.push((ts, powers));
    }

    rows.sort_by_key(|(ts, _)| *ts);
    let before = rows.len();
    rows.dedup_by_key(|(ts, _)| *ts);
    malformed += before - rows.len();

    if rows.is_empty() {
        return Err(Error::NoRows { path: path.into() });
    }

    let readings = device_cols
        .iter()
        .enumerate()
        .map(|(k, (_, name))| RawReadings {
            device_id: name.clone(),
            samples: rows.iter().map(|(ts, p)| (*ts, p[k])).collect(),
        })
        .collect();
    Ok(LoadedReadings {
        readings,
        malformed_rows: malformed,
    })
}

/// Hourly energy per device in watt-hours, covering whole UTC days.
#[derive(Debug, Clone, PartialEq)]
pub struct HourlyEnergy {
    /// Unix timestamp of the first hour (a UTC midnight).
    pub start: i64,
    pub devices: Vec<String>,
    /// `energy[device][hour]`, watt-hours.
    pub energy: Vec<Vec<f64>>,
    /// Hours in which at least one device had no samples.
    pub gap: Vec<bool>,
}

impl HourlyEnergy {
    pub fn hours(&self) -> usize {
        self.gap.len()
    }
}

pub(crate) fn floor_to(ts: i64, step: i64) -> i64 {
    ts.div_euclid(step) * step
}

/// Buckets samples into hours and averages them: the mean power within an
/// hour times one hour gives watt-hours. Hours without samples are zero and
/// flagged as gaps.
pub fn resample_hourly(readings: &[RawReadings]) -> Result<HourlyEnergy> {
    let (first, last) = readings
        .iter()
        .flat_map(|r| r.samples.iter().map(|(t, _)| *t))
        .fold(None, |acc: Option<(i64, i64)>, t| match acc {
            None => Some((t, t)),
            Some((lo, hi)) => Some((lo.min(t), hi.max(t))),
        })
        .ok_or_else(|| Error::Empty("no readings to resample".into()))?;

    let start = floor_to(first, SECONDS_PER_DAY);
    let end = floor_to(last, SECONDS_PER_DAY) + SECONDS_PER_DAY;
    let hours = ((end - start) / SECONDS_PER_HOUR) as usize;

    let mut gap = vec![false; hours];
    let energy = readings
        .iter()
        .map(|r| {
            let mut sum = vec![0.0; hours];
            let mut count = vec![0u32; hours];
            for &(t, p) in &r.samples {
                let h = ((t - start) / SECONDS_PER_HOUR) as usize;
                sum[h] += p;
                count[h] += 1;
            }
            sum.iter()
                .zip(&count)
                .enumerate()
                .map(|(h, (&s, &c))| {
                    if c == 0 {
                        gap[h] = true;
                        0.0
                    } else {
                        s / f64::from(c)
                    }
                })
                .collect()
        })
        .collect();

    Ok(HourlyEnergy {
        start,
        devices: readings.iter().map(|r| r.device_id.clone()).collect(),
        energy,
        gap,
    })
}

/// One appliance of the household.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSpec {
    pub id: String,
    /// Column header in the consumption file; defaults to `id`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column: Option<String>,
    /// Usage implies the resident is at home (kettle, TV, ...).
    #[serde(default)]
    pub availability: bool,
    /// Hourly energy (Wh) above which the device counts as used.
    #[serde(default = "default_threshold")]
    pub threshold_wh: f64,
    /// Mean consumption per hour of use, kWh. Estimated from data when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub avg_kwh: Option<f64>,
    /// Whether the device takes part in shiftable activities. Fridges and
    /// freezers are not.
    #[serde(default = "default_true")]
    pub shiftable: bool,
}

fn default_threshold() -> f64 {
    DEFAULT_USAGE_THRESHOLD_WH
}

fn default_true() -> bool {
    true
}

impl DeviceSpec {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            column: None,
            availability: false,
            threshold_wh: DEFAULT_USAGE_THRESHOLD_WH,
            avg_kwh: None,
            shiftable: true,
        }
    }

    pub fn column(&self) -> &str {
        self.column.as_deref().unwrap_or(&self.id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceCatalog {
    #[serde(rename = "device")]
    pub devices: Vec<DeviceSpec>,
}

impl DeviceCatalog {
    pub fn new(devices: Vec<DeviceSpec>) -> Result<Self> {
        let catalog = Self { devices };
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let catalog: Self = toml::from_str(text).map_err(|e| Error::Catalog(e.to_string()))?;
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Catalog(m) => Error::Catalog(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.devices.is_empty() {
            return Err(Error::Catalog("no devices".into()));
        }
        if !self.devices.iter().any(|d| d.availability) {
            return Err(Error::Catalog(
                "at least one availability-indicating device is required".into(),
            ));
        }
        let mut seen = HashMap::new();
        for d in &self.devices {
            if seen.insert(d.id.as_str(), ()).is_some() {
                return Err(Error::Catalog(format!("duplicate device `{}`", d.id)));
            }
            if !(d.threshold_wh.is_finite() && d.threshold_wh > 0.0) {
                return Err(Error::Catalog(format!(
                    "device `{}`: threshold must be > 0",
                    d.id
                )));
            }
            if let Some(avg) = d.avg_kwh {
                if !(avg.is_finite() && avg >= 0.0) {
                    return Err(Error::Catalog(format!(
                        "device `{}`: average consumption must be >= 0",
                        d.id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.devices.iter().position(|d| d.id == id)
    }

    pub fn get(&self, id: &str) -> Option<&DeviceSpec> {
        self.devices.iter().find(|d| d.id == id)
    }

    /// Fills missing `avg_kwh` with the mean hourly energy over hours in
    /// which the device was used. Explicit values are kept.
    pub fn with_estimated_averages(&self, dataset: &HourlyDataset) -> Self {
        let mut out = self.clone();
        for spec in &mut out.devices {
            if spec.avg_kwh.is_some() {
                continue;
            }
            let Some(d) = dataset.device_index(&spec.id) else {
                continue;
            };
            let (sum, n) = dataset.energy[d]
                .iter()
                .zip(&dataset.usage[d])
                .filter(|(_, &used)| used)
                .fold((0.0, 0usize), |(s, n), (e, _)| (s + e, n + 1));
            spec.avg_kwh = Some(if n == 0 { 0.0 } else { sum / n as f64 / 1000.0 });
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeFeatures {
    /// 1-12
    pub month: u8,
    /// 0 = Monday
    pub day_of_week: u8,
    /// 0-23
    pub hour: u8,
}

impl TimeFeatures {
    pub fn from_timestamp(ts: i64) -> Self {
        let dt = DateTime::<Utc>::from_timestamp(ts, 0).expect("timestamp in range");
        Self {
            month: dt.month() as u8,
            day_of_week: dt.weekday().num_days_from_monday() as u8,
            hour: dt.hour() as u8,
        }
    }
}

/// A binary column shifted by one hour and by one week. Positions before
/// the start of the data are 0.
#[derive(Debug, Clone, PartialEq)]
pub struct LagColumns {
    pub lag1: Vec<bool>,
    pub lag168: Vec<bool>,
}

impl LagColumns {
    pub fn of(base: &[bool]) -> Self {
        Self {
            lag1: shift(base, 1),
            lag168: shift(base, HOURS_PER_WEEK),
        }
    }
}

pub fn shift(base: &[bool], by: usize) -> Vec<bool> {
    (0..base.len())
        .map(|h| h >= by && base[h - by])
        .collect()
}

/// Hourly energy plus the engineered features. Device order follows the
/// catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct HourlyDataset {
    pub start: i64,
    pub catalog: DeviceCatalog,
    /// `energy[device][hour]`, watt-hours.
    pub energy: Vec<Vec<f64>>,
    pub gap: Vec<bool>,
    pub time: Vec<TimeFeatures>,
    /// `usage[device][hour]`
    pub usage: Vec<Vec<bool>>,
    pub availability: Vec<bool>,
    pub usage_lags: Vec<LagColumns>,
    pub availability_lags: LagColumns,
}

impl HourlyDataset {
    pub fn hours(&self) -> usize {
        self.gap.len()
    }

    pub fn days(&self) -> usize {
        self.hours() / 24
    }

    pub fn devices(&self) -> impl Iterator<Item = &str> {
        self.catalog.devices.iter().map(|d| d.id.as_str())
    }

    pub fn device_index(&self, id: &str) -> Option<usize> {
        self.catalog.index_of(id)
    }

    pub fn hour_timestamp(&self, h: usize) -> i64 {
        self.start + h as i64 * SECONDS_PER_HOUR
    }

    pub fn usage_flag(&self, hour: usize, device: usize) -> bool {
        self.usage[device][hour]
    }

    /// Writes the dataset as CSV: raw energy first, derived columns after.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let ids: Vec<&str> = self.devices().collect();
        let mut header = vec!["hour_start".to_string(), "gap".to_string()];
        header.extend(ids.iter().map(|id| format!("energy:{id}")));
        header.extend(["month", "dow", "hour", "avail", "avail_lag1", "avail_lag168"].map(String::from));
        for id in &ids {
            header.push(format!("use:{id}"));
            header.push(format!("use_lag1:{id}"));
            header.push(format!("use_lag168:{id}"));
        }
        w.write_record(&header).map_err(csv_err)?;
        let flag = |b: bool| if b { "1" } else { "0" }.to_string();
        for h in 0..self.hours() {
            let t = self.time[h];
            let mut row = vec![self.hour_timestamp(h).to_string(), flag(self.gap[h])];
            row.extend(self.energy.iter().map(|e| e[h].to_string()));
            row.extend([
                t.month.to_string(),
                t.day_of_week.to_string(),
                t.hour.to_string(),
                flag(self.availability[h]),
                flag(self.availability_lags.lag1[h]),
                flag(self.availability_lags.lag168[h]),
            ]);
            for d in 0..ids.len() {
                row.push(flag(self.usage[d][h]));
                row.push(flag(self.usage_lags[d].lag1[h]));
                row.push(flag(self.usage_lags[d].lag168[h]));
            }
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Serde(e.to_string()))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Reads a file produced by [`HourlyDataset::write_csv`]. Only the raw
    /// energy and gap columns are read; features are rebuilt from them.
    pub fn load_csv(path: &Path, catalog: &DeviceCatalog) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| Error::parse(path, e.to_string()))?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::parse(path, format!("missing column `{name}`")))
        };
        let ts_col = col("hour_start")?;
        let gap_col = col("gap")?;
        let energy_cols: Vec<usize> = catalog
            .devices
            .iter()
            .map(|d| col(&format!("energy:{}", d.id)))
            .collect::<Result<_>>()?;

        let mut start = None;
        let mut gap = Vec::new();
        let mut energy = vec![Vec::new(); energy_cols.len()];
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::parse(path, e.to_string()))?;
            let ts: i64 = record[ts_col]
                .parse()
                .map_err(|_| Error::parse(path, format!("row {}: bad hour_start", i + 2)))?;
            let first = *start.get_or_insert(ts);
            if ts != first + i as i64 * SECONDS_PER_HOUR {
                return Err(Error::parse(path, format!("row {}: hours not contiguous", i + 2)));
            }
            gap.push(&record[gap_col] == "1");
            for (k, &c) in energy_cols.iter().enumerate() {
                let v: f64 = record[c]
                    .parse()
                    .map_err(|_| Error::parse(path, format!("row {}: bad energy", i + 2)))?;
                energy[k].push(v);
            }
        }
        let start = start.ok_or_else(|| Error::NoRows { path: path.into() })?;
        let hourly = HourlyEnergy {
            start,
            devices: catalog.devices.iter().map(|d| d.column().to_string()).collect(),
            energy,
            gap,
        };
        engineer_features(&hourly, catalog)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Serde(e.to_string())
}

/// Thresholds the hourly energy into usage flags, derives availability and
/// the time and lag features.
pub fn engineer_features(hourly: &HourlyEnergy, catalog: &DeviceCatalog) -> Result<HourlyDataset> {
    catalog.validate()?;
    let hours = hourly.hours();
    if hours == 0 {
        return Err(Error::Empty("fewer than 1 hour of data".into()));
    }
    let energy: Vec<Vec<f64>> = catalog
        .devices
        .iter()
        .map(|spec| {
            hourly
                .devices
                .iter()
                .position(|c| c == spec.column())
                .map(|i| hourly.energy[i].clone())
                .ok_or_else(|| Error::UnknownDevice(spec.column().to_string()))
        })
        .collect::<Result<_>>()?;

    let usage: Vec<Vec<bool>> = catalog
        .devices
        .iter()
        .zip(&energy)
        .map(|(spec, e)| e.iter().map(|&wh| wh > spec.threshold_wh).collect())
        .collect();
    let availability: Vec<bool> = (0..hours)
        .map(|h| {
            catalog
                .devices
                .iter()
                .zip(&usage)
                .any(|(spec, u)| spec.availability && u[h])
        })
        .collect();

    Ok(HourlyDataset {
        start: hourly.start,
        catalog: catalog.clone(),
        time: (0..hours)
            .map(|h| TimeFeatures::from_timestamp(hourly.start + h as i64 * SECONDS_PER_HOUR))
            .collect(),
        usage_lags: usage.iter().map(|u| LagColumns::of(u)).collect(),
        availability_lags: LagColumns::of(&availability),
        energy,
        gap: hourly.gap.clone(),
        usage,
        availability,
    })
}
