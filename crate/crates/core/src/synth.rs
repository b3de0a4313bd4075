//! Deterministic synthetic household and signals for tests, demos and the
//! bundled fixtures.
//!
//! Six appliances follow a weekly routine (weekday evenings at home, longer
//! weekend days); each scheduled use is dropped with probability `noise`
//! and spurious uses appear at a tenth of that rate.

use std::io::Write;

use chrono::{Datelike, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::activity::{example_mapping, ActivityMapping};
use crate::error::{Error, Result};
use crate::ingest::{engineer_features, DeviceCatalog, DeviceSpec, HourlyDataset, HourlyEnergy, SECONDS_PER_HOUR};
use crate::signals::{date_of, midnight, SignalKind, SyntheticSource};

struct Routine {
    id: &'static str,
    availability: bool,
    shiftable: bool,
    /// Wh drawn in an hour of use.
    wh: f64,
    weekday: &'static [(u32, u32)],
    weekend: &'static [(u32, u32)],
    /// Weekdays (Mon = 0) on which the device runs at all.
    days: &'static [u32],
}

const ROUTINES: [Routine; 6] = [
    Routine {
        id: "Oven",
        availability: true,
        shiftable: true,
        wh: 1500.0,
        weekday: &[(18, 19)],
        weekend: &[(12, 13), (18, 19)],
        days: &[0, 1, 2, 3, 4, 5, 6],
    },
    Routine {
        id: "Kettle",
        availability: true,
        shiftable: true,
        wh: 90.0,
        weekday: &[(7, 8), (17, 18)],
        weekend: &[(9, 10), (17, 18)],
        days: &[0, 1, 2, 3, 4, 5, 6],
    },
    Routine {
        id: "WashingMachine",
        availability: false,
        shiftable: true,
        wh: 600.0,
        weekday: &[(19, 21)],
        weekend: &[(10, 12)],
        days: &[0, 3, 5],
    },
    Routine {
        id: "Dishwasher",
        availability: false,
        shiftable: true,
        wh: 1000.0,
        weekday: &[(21, 22)],
        weekend: &[(20, 21)],
        days: &[0, 1, 2, 3, 4, 5, 6],
    },
    Routine {
        id: "Television",
        availability: true,
        shiftable: true,
        wh: 110.0,
        weekday: &[(19, 23)],
        weekend: &[(14, 23)],
        days: &[0, 1, 2, 3, 4, 5, 6],
    },
    Routine {
        id: "Fridge",
        availability: false,
        shiftable: false,
        wh: 45.0,
        weekday: &[(0, 24)],
        weekend: &[(0, 24)],
        days: &[0, 1, 2, 3, 4, 5, 6],
    },
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthHousehold {
    /// First day (UTC midnight, unix seconds).
    pub start: i64,
    pub days: usize,
    pub seed: u64,
    pub noise: f64,
}

impl Default for SynthHousehold {
    fn default() -> Self {
        Self {
            start: midnight(NaiveDate::from_ymd_opt(2014, 1, 6).expect("valid date")),
            days: 365,
            seed: 7,
            noise: 0.05,
        }
    }
}

impl SynthHousehold {
    pub fn new(start: NaiveDate, days: usize, seed: u64) -> Self {
        Self {
            start: midnight(start),
            days,
            seed,
            ..Self::default()
        }
    }

    fn column(i: usize) -> String {
        format!("Appliance{}", i + 1)
    }

    /// Catalog with REFIT-style column names and nominal consumption.
    pub fn catalog(&self) -> DeviceCatalog {
        DeviceCatalog::new(
            ROUTINES
                .iter()
                .enumerate()
                .map(|(i, r)| DeviceSpec {
                    column: Some(Self::column(i)),
                    availability: r.availability,
                    avg_kwh: Some(r.wh / 1000.0),
                    shiftable: r.shiftable,
                    ..DeviceSpec::new(r.id)
                })
                .collect(),
        )
        .expect("valid synthetic catalog")
    }

    pub fn mapping(&self) -> ActivityMapping {
        example_mapping()
    }

    pub fn energy(&self) -> HourlyEnergy {
        let hours = self.days * 24;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut energy = vec![vec![0.0; hours]; ROUTINES.len()];
        for day in 0..self.days {
            let dow = date_of(self.start + day as i64 * 86_400).weekday().num_days_from_monday();
            for (d, r) in ROUTINES.iter().enumerate() {
                let slots = if dow >= 5 { r.weekend } else { r.weekday };
                for h in 0..24u32 {
                    let scheduled =
                        r.days.contains(&dow) && slots.iter().any(|&(a, b)| (a..b).contains(&h));
                    let on = if !r.shiftable {
                        true
                    } else if scheduled {
                        !rng.gen_bool(self.noise)
                    } else {
                        rng.gen_bool(self.noise / 10.0)
                    };
                    if on {
                        energy[d][day * 24 + h as usize] = r.wh * rng.gen_range(0.8..1.2);
                    }
                }
            }
        }
        HourlyEnergy {
            start: self.start,
            devices: (0..ROUTINES.len()).map(Self::column).collect(),
            energy,
            gap: vec![false; hours],
        }
    }

    pub fn dataset(&self) -> Result<HourlyDataset> {
        engineer_features(&self.energy(), &self.catalog())
    }

    /// Writes the household as a REFIT-style CSV with `per_hour` constant
    /// power samples per hour.
    pub fn write_refit_csv<W: Write>(&self, out: W, per_hour: usize) -> Result<()> {
        if per_hour == 0 || 3600 % per_hour != 0 {
            return Err(Error::Config(format!("{per_hour} samples per hour do not divide an hour")));
        }
        let energy = self.energy();
        let step = SECONDS_PER_HOUR / per_hour as i64;
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Serde(e.to_string());
        let mut header = vec!["Time".to_string(), "Unix".to_string(), "Aggregate".to_string()];
        header.extend(energy.devices.iter().cloned());
        w.write_record(&header).map_err(err)?;
        for h in 0..energy.hours() {
            for k in 0..per_hour as i64 {
                let ts = energy.start + h as i64 * SECONDS_PER_HOUR + k * step;
                // constant power over the hour: W equals the hour's Wh
                let watts: Vec<f64> = energy.energy.iter().map(|e| e[h]).collect();
                let total: f64 = watts.iter().sum();
                let mut row = vec![
                    chrono::DateTime::from_timestamp(ts, 0)
                        .expect("in range")
                        .format("%Y-%m-%d %H:%M:%S")
                        .to_string(),
                    ts.to_string(),
                    format!("{total:.3}"),
                ];
                row.extend(watts.iter().map(|v| format!("{v:.3}")));
                w.write_record(&row).map_err(err)?;
            }
        }
        w.flush().map_err(|e| Error::io("<csv output>", e))
    }
}

/// Carbon intensity (gCO2/kWh) lowest before dawn and price (per MWh)
/// lowest in the early morning: positively correlated, not identical.
pub fn synthetic_signals(seed: u64) -> (SyntheticSource, SyntheticSource) {
    (
        SyntheticSource {
            kind: SignalKind::Carbon,
            base: 250.0,
            amplitude: 80.0,
            peak_hour: 16.0,
            seasonal: 30.0,
            noise: 25.0,
            seed,
            coverage: None,
        },
        SyntheticSource {
            kind: SignalKind::Price,
            base: 45.0,
            amplitude: 15.0,
            peak_hour: 19.0,
            seasonal: 5.0,
            noise: 8.0,
            seed: seed.wrapping_add(1),
            coverage: None,
        },
    )
}
