//! Day-ahead price and carbon-intensity vectors behind a pluggable source.
//!
//! Fixture files are CSV with a `datetime,value` header and one row per
//! hour. `datetime` is RFC 3339 or unix seconds. Missing hours are an error.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Datelike, NaiveDate, SecondsFormat, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{floor_to, parse_timestamp, SECONDS_PER_DAY, SECONDS_PER_HOUR};
use crate::scalar::Scalar;

pub const HORIZON: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalKind {
    /// currency per MWh
    Price,
    /// gCO2 per kWh
    Carbon,
}

impl fmt::Display for SignalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SignalKind::Price => "price",
            SignalKind::Carbon => "carbon",
        })
    }
}

/// 24 hourly values starting at `horizon_start`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DayAheadSignal<T> {
    kind: SignalKind,
    horizon_start: i64,
    values: Vec<T>,
}

impl<T: Scalar> DayAheadSignal<T> {
    pub fn new(kind: SignalKind, horizon_start: i64, values: Vec<T>) -> Result<Self> {
        if values.len() != HORIZON {
            return Err(Error::Signal(format!(
                "{kind} signal needs {HORIZON} values, got {}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Signal(format!("{kind} value {v} is not finite")));
        }
        if kind == SignalKind::Carbon {
            if let Some(v) = values.iter().find(|v| **v < T::zero()) {
                return Err(Error::Signal(format!("negative carbon intensity {v}")));
            }
        }
        Ok(Self {
            kind,
            horizon_start,
            values,
        })
    }

    pub fn kind(&self) -> SignalKind {
        self.kind
    }

    pub fn horizon_start(&self) -> i64 {
        self.horizon_start
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }
}

/// First and last fully covered UTC days of a source.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignalCalendar {
    pub first: NaiveDate,
    pub last: NaiveDate,
}

pub trait SignalSource<T: Scalar>: Send + Sync {
    fn kind(&self) -> SignalKind;

    /// 24 contiguous hourly values beginning at `horizon_start`.
    fn fetch(&self, horizon_start: i64) -> Result<DayAheadSignal<T>>;

    /// Covered days; `None` for unbounded sources.
    fn calendar(&self) -> Option<SignalCalendar>;
}

/// Fetches a signal of the requested kind, checking the horizon boundary.
pub fn fetch_signal<T: Scalar>(
    source: &dyn SignalSource<T>,
    kind: SignalKind,
    horizon_start: i64,
) -> Result<DayAheadSignal<T>> {
    if source.kind() != kind {
        return Err(Error::Signal(format!(
            "source provides {} but {kind} was requested",
            source.kind()
        )));
    }
    if horizon_start.rem_euclid(SECONDS_PER_HOUR) != 0 {
        return Err(Error::Signal(format!(
            "horizon start {horizon_start} is not an hour boundary"
        )));
    }
    source.fetch(horizon_start)
}

/// Hourly values read from a fixture file.
#[derive(Debug, Clone)]
pub struct FixtureSource<T> {
    kind: SignalKind,
    start: i64,
    values: Vec<T>,
}

impl<T: Scalar> FixtureSource<T> {
    pub fn from_values(kind: SignalKind, start: i64, values: Vec<T>) -> Result<Self> {
        if start.rem_euclid(SECONDS_PER_HOUR) != 0 {
            return Err(Error::Signal("fixture must start on an hour".into()));
        }
        if let Some(v) = values
            .iter()
            .find(|v| !v.is_finite() || (kind == SignalKind::Carbon && **v < T::zero()))
        {
            return Err(Error::Signal(format!("invalid {kind} value {v}")));
        }
        Ok(Self {
            kind,
            start,
            values,
        })
    }

    pub fn load(path: &Path, kind: SignalKind) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| Error::parse(path, e.to_string()))?
            .clone();
        if headers.len() < 2 || &headers[0] != "datetime" || &headers[1] != "value" {
            return Err(Error::parse(path, "expected header `datetime,value`"));
        }
        let mut start = None;
        let mut values = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::parse(path, e.to_string()))?;
            let row = i + 2;
            let ts = parse_timestamp(&record[0])
                .ok_or_else(|| Error::parse(path, format!("row {row}: bad datetime")))?;
            let first = *start.get_or_insert(ts);
            let expected = first + i as i64 * SECONDS_PER_HOUR;
            if ts != expected {
                return Err(Error::parse(
                    path,
                    format!("row {row}: expected hour {expected}, found {ts} (gap or disorder)"),
                ));
            }
            let v: f64 = record[1]
                .parse()
                .map_err(|_| Error::parse(path, format!("row {row}: bad value")))?;
            values.push(
                T::from_f64(v)
                    .ok_or_else(|| Error::parse(path, format!("row {row}: value out of range")))?,
            );
        }
        let start = start.ok_or_else(|| Error::NoRows { path: path.into() })?;
        Self::from_values(kind, start, values).map_err(|e| Error::parse(path, e.to_string()))
    }

    pub fn start(&self) -> i64 {
        self.start
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn end(&self) -> i64 {
        self.start + self.values.len() as i64 * SECONDS_PER_HOUR
    }
}

impl<T: Scalar> SignalSource<T> for FixtureSource<T> {
    fn kind(&self) -> SignalKind {
        self.kind
    }

    fn fetch(&self, horizon_start: i64) -> Result<DayAheadSignal<T>> {
        let offset = horizon_start - self.start;
        let coverage = || Error::Coverage {
            kind: self.kind.to_string(),
            horizon_start,
        };
        if offset < 0 || offset % SECONDS_PER_HOUR != 0 {
            return Err(coverage());
        }
        let first = (offset / SECONDS_PER_HOUR) as usize;
        let slice = self
            .values
            .get(first..first + HORIZON)
            .ok_or_else(coverage)?;
        DayAheadSignal::new(self.kind, horizon_start, slice.to_vec())
    }

    fn calendar(&self) -> Option<SignalCalendar> {
        let first_day = if self.start.rem_euclid(SECONDS_PER_DAY) == 0 {
            self.start
        } else {
            floor_to(self.start, SECONDS_PER_DAY) + SECONDS_PER_DAY
        };
        let last_day = floor_to(self.end(), SECONDS_PER_DAY) - SECONDS_PER_DAY;
        (last_day >= first_day).then(|| SignalCalendar {
            first: date_of(first_day),
            last: date_of(last_day),
        })
    }
}

/// Writes hourly values in the fixture format.
pub fn write_fixture<T: Scalar, W: Write>(mut out: W, start: i64, values: &[T]) -> Result<()> {
    let io = |e| Error::Serde(format!("{e}"));
    writeln!(out, "datetime,value").map_err(io)?;
    for (i, v) in values.iter().enumerate() {
        let ts = start + i as i64 * SECONDS_PER_HOUR;
        writeln!(out, "{},{}", rfc3339(ts), v).map_err(io)?;
    }
    Ok(())
}

pub fn rfc3339(ts: i64) -> String {
    DateTime::<Utc>::from_timestamp(ts, 0)
        .expect("timestamp in range")
        .to_rfc3339_opts(SecondsFormat::Secs, true)
}

pub fn date_of(ts: i64) -> NaiveDate {
    DateTime::<Utc>::from_timestamp(ts, 0)
        .expect("timestamp in range")
        .date_naive()
}

pub fn midnight(date: NaiveDate) -> i64 {
    date.and_hms_opt(0, 0, 0)
        .expect("valid midnight")
        .and_utc()
        .timestamp()
}

/// Daily cosine profile with optional seasonal swing and per-hour noise.
///
/// `value(t) = base + amplitude * cos(2π (hour - peak_hour) / 24)
///            + seasonal * cos(2π (day_of_year - 15) / 365) + noise`
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSource {
    pub kind: SignalKind,
    pub base: f64,
    pub amplitude: f64,
    pub peak_hour: f64,
    #[serde(default)]
    pub seasonal: f64,
    /// Half-width of uniform noise added per hour.
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
    /// `[start, end)` unix seconds; unbounded when absent.
    #[serde(default)]
    pub coverage: Option<(i64, i64)>,
}

impl SyntheticSource {
    pub fn value_at(&self, ts: i64) -> f64 {
        let dt = DateTime::<Utc>::from_timestamp(ts, 0).expect("timestamp in range");
        let hour = (ts.rem_euclid(SECONDS_PER_DAY) / SECONDS_PER_HOUR) as f64;
        let doy = f64::from(dt.ordinal0());
        let mut v = self.base
            + self.amplitude * (2.0 * PI * (hour - self.peak_hour) / 24.0).cos()
            + self.seasonal * (2.0 * PI * (doy - 15.0) / 365.0).cos();
        if self.noise > 0.0 {
            let slot = ts.div_euclid(SECONDS_PER_HOUR) as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ slot.wrapping_mul(0x9E37_79B9_7F4A_7C15));
            v += rng.gen_range(-self.noise..=self.noise);
        }
        if self.kind == SignalKind::Carbon {
            v = v.max(0.0);
        }
        v
    }

    /// Materializes `[start, start + hours)` into a fixture source.
    pub fn to_fixture<T: Scalar>(&self, start: i64, hours: usize) -> Result<FixtureSource<T>> {
        let values = (0..hours)
            .map(|h| T::lit(self.value_at(start + h as i64 * SECONDS_PER_HOUR)))
            .collect();
        FixtureSource::from_values(self.kind, start, values)
    }
}

impl<T: Scalar> SignalSource<T> for SyntheticSource {
    fn kind(&self) -> SignalKind {
        self.kind
    }

    fn fetch(&self, horizon_start: i64) -> Result<DayAheadSignal<T>> {
        if let Some((lo, hi)) = self.coverage {
            if horizon_start < lo || horizon_start + HORIZON as i64 * SECONDS_PER_HOUR > hi {
                return Err(Error::Coverage {
                    kind: self.kind.to_string(),
                    horizon_start,
                });
            }
        }
        let values = (0..HORIZON)
            .map(|h| T::lit(self.value_at(horizon_start + h as i64 * SECONDS_PER_HOUR)))
            .collect();
        DayAheadSignal::new(self.kind, horizon_start, values)
    }

    fn calendar(&self) -> Option<SignalCalendar> {
        let (lo, hi) = self.coverage?;
        let first = floor_to(lo + SECONDS_PER_DAY - 1, SECONDS_PER_DAY);
        let last = floor_to(hi, SECONDS_PER_DAY) - SECONDS_PER_DAY;
        (last >= first).then(|| SignalCalendar {
            first: date_of(first),
            last: date_of(last),
        })
    }
}

/// Maps a consumption date onto the signal calendar by day and month,
/// ignoring the year. Feb 29 falls back to Feb 28 in non-leap years. The
/// earliest calendar year containing the date wins; if no year does, the
/// calendar's first year is used (and fetching will report the coverage gap).
pub fn align_date(consumption: NaiveDate, calendar: &SignalCalendar) -> NaiveDate {
    let in_year = |year: i32| {
        NaiveDate::from_ymd_opt(year, consumption.month(), consumption.day())
            .or_else(|| NaiveDate::from_ymd_opt(year, consumption.month(), consumption.day() - 1))
            .expect("Feb 28 exists in every year")
    };
    (calendar.first.year()..=calendar.last.year())
        .map(in_year)
        .find(|d| *d >= calendar.first && *d <= calendar.last)
        .unwrap_or_else(|| in_year(calendar.first.year()))
}

/// Both signals for one horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SignalPair<T> {
    pub carbon: DayAheadSignal<T>,
    pub price: DayAheadSignal<T>,
}

/// Carbon and price sources queried through date alignment.
pub struct SignalSet<T: Scalar> {
    pub carbon: Box<dyn SignalSource<T>>,
    pub price: Box<dyn SignalSource<T>>,
}

impl<T: Scalar> SignalSet<T> {
    pub fn new(carbon: Box<dyn SignalSource<T>>, price: Box<dyn SignalSource<T>>) -> Self {
        Self { carbon, price }
    }

    /// Signals for the horizon beginning `hour_offset` hours after midnight
    /// of `date` (a consumption-calendar date).
    pub fn for_date(&self, date: NaiveDate, hour_offset: u32) -> Result<SignalPair<T>> {
        let fetch = |src: &dyn SignalSource<T>, kind| {
            let aligned = src
                .calendar()
                .map(|c| align_date(date, &c))
                .unwrap_or(date);
            let start = midnight(aligned) + i64::from(hour_offset) * SECONDS_PER_HOUR;
            fetch_signal(src, kind, start)
        };
        Ok(SignalPair {
            carbon: fetch(self.carbon.as_ref(), SignalKind::Carbon)?,
            price: fetch(self.price.as_ref(), SignalKind::Price)?,
        })
    }

    /// Signals for consecutive dates, keyed by date. Fails on the first
    /// uncovered date.
    pub fn for_dates(
        &self,
        dates: impl IntoIterator<Item = NaiveDate>,
        hour_offset: u32,
    ) -> Result<BTreeMap<NaiveDate, SignalPair<T>>> {
        dates
            .into_iter()
            .map(|d| Ok((d, self.for_date(d, hour_offset)?)))
            .collect()
    }
}
