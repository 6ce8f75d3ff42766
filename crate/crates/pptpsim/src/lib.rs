//! Scenario-driven simulator for priced path probing, utility-driven path
//! selection and hop-by-hop micropayments over an NDN-style plane.

pub mod metrics;
pub mod scenario;
pub mod sim;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Scenario(#[from] scenario::ScenarioError),
    #[error(transparent)]
    Sim(#[from] sim::SimError),
}

pub use metrics::{MetricsRow, Summary};
pub use scenario::{parse_scenario, Scenario};
pub use sim::{run_scenario, RunOutput, Sim, SimConfig};
