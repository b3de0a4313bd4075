//! Evaluation of the agents and of the savings the schedule would deliver.

mod agents;
mod coldstart;
pub mod metrics;
mod savings;

pub use agents::{day_equal_score, evaluate_agents, AgentReport};
pub use coldstart::{cold_start, cold_start_csv, AgentKind, ColdStartOptions, ColdStartPoint, ColdStartResult};
pub use metrics::{auc, AucSummary, EqualScore};
pub use savings::{
    grid_search, signals_for_bundles, simulate_savings, AcceptedRecommendation, GridRow, GridSearchResult,
    GridSpec, Objective, SavingsReport,
};
