//! Activity-shifting recommendations from appliance-level consumption data
//! and day-ahead carbon-intensity and price signals.
//!
//! The math is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix it to `f64`.

pub mod activity;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod models;
pub mod predictors;
pub mod recommend;
pub mod scalar;
pub mod signals;
pub mod store;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type DayAheadSignal = signals::DayAheadSignal<f64>;
pub type SignalPair = signals::SignalPair<f64>;
pub type SignalSet = signals::SignalSet<f64>;
pub type FixtureSource = signals::FixtureSource<f64>;
pub type TrainedModel = models::TrainedModel<f64>;
pub type TrainingSet = models::TrainingSet<f64>;
pub type DayForecast = models::DayForecast<f64>;
pub type AvailabilityForecast = predictors::AvailabilityForecast<f64>;
pub type UsageForecast = predictors::UsageForecast<f64>;
pub type DayBundle = predictors::DayBundle<f64>;
pub type ActivityForecast = activity::ActivityForecast<f64>;
pub type Recommendation = recommend::Recommendation<f64>;
pub type ScheduleReport = recommend::ScheduleReport<f64>;
