//! Plant models, integration and episode execution.

mod episode;
mod integrate;
mod output;
mod plant;

pub use episode::{
    run_episode, run_seeds, EpisodeConfig, EpisodeResult, Outcome, RunMetrics, Trajectory,
};
pub use integrate::step_rk4;
pub use output::{
    format_metrics, write_events_csv, write_funnel_csv, write_inputs_csv, write_trajectory_csv,
};
pub use plant::{
    geometric_matrix, omni_team_plant, Drift, OmniRobotTeam, Plant, PlantConfig, PlantModel,
    SingleIntegrator,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid plant: {0}")]
    Plant(String),
    #[error("invalid episode configuration: {0}")]
    Config(String),
}
