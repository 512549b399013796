//! Cylinder-forest simulator: maps, sensing, episodes and experiment grids.

mod episode;
mod map;
mod report;
mod sensor;

use thiserror::Error;

pub use episode::{default_bounds_box, run_episode, run_on_map, EpisodeResult, Outcome, SimConfig};
pub use map::{generate_map, Cylinder, MapSpec, WorldMap};
pub use report::{run_grid, CellSummary, GridCell, GridReport, CSV_HEADER, SUMMARY_HEADER};
pub use sensor::{sense, SensorSpec};

use crate::collision::IndexError;
use crate::planner::PlannerError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulator config: {0}")]
    Config(String),
    #[error("overcrowded map: placed {placed} of {requested} obstacles before giving up")]
    Overcrowded { placed: usize, requested: usize },
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Index(#[from] IndexError),
}
