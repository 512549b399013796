//! Experiment grids and CSV reports.

use rayon::prelude::*;

use super::episode::{mean, percentile, run_episode, EpisodeResult, SimConfig};
use super::SimError;
use crate::collision::CollisionIndex;
use crate::library::PrimitiveLibrary;
use crate::planner::PlannerConfig;

pub const CSV_HEADER: &str =
    "seed,n_obs,n_paths,success,t_total_s,d_total_m,mean_check_us,p99_check_us,mean_select_us,emergency_stops";

pub const SUMMARY_HEADER: &str = "n_obs,n_paths,episodes,success_rate,mean_t_total_s,mean_d_total_m,mean_check_us,p99_check_us,mean_select_us,mean_emergency_stops";

/// One (library, density) combination.
#[derive(Debug, Clone, Copy)]
pub struct GridCell<'a> {
    pub library: &'a PrimitiveLibrary,
    pub index: &'a CollisionIndex,
    pub n_obs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub n_obs: usize,
    pub n_paths: usize,
    pub episodes: usize,
    pub success_rate: f64,
    /// Means over successful episodes; NaN when none succeeded.
    pub mean_t_total: f64,
    pub mean_d_total: f64,
    pub mean_check_us: f64,
    pub p99_check_us: f64,
    pub mean_select_us: f64,
    pub mean_emergency_stops: f64,
}

impl CellSummary {
    fn from_episodes(n_obs: usize, n_paths: usize, eps: &[&EpisodeResult]) -> Self {
        let ok: Vec<&EpisodeResult> = eps.iter().copied().filter(|e| e.success).collect();
        let avg = |f: &dyn Fn(&EpisodeResult) -> f64, set: &[&EpisodeResult]| {
            if set.is_empty() {
                f64::NAN
            } else {
                set.iter().map(|e| f(e)).sum::<f64>() / set.len() as f64
            }
        };
        let checks: Vec<f64> = eps.iter().flat_map(|e| e.check_us.iter().copied()).collect();
        let selects: Vec<f64> = eps.iter().flat_map(|e| e.select_us.iter().copied()).collect();
        Self {
            n_obs,
            n_paths,
            episodes: eps.len(),
            success_rate: if eps.is_empty() { 0.0 } else { ok.len() as f64 / eps.len() as f64 },
            mean_t_total: avg(&|e| e.t_total, &ok),
            mean_d_total: avg(&|e| e.d_total, &ok),
            mean_check_us: mean(&checks),
            p99_check_us: percentile(&checks, 0.99),
            mean_select_us: mean(&selects),
            mean_emergency_stops: avg(&|e| e.emergency_stops as f64, eps),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GridReport {
    pub episodes: Vec<EpisodeResult>,
    pub cells: Vec<CellSummary>,
}

impl GridReport {
    /// One row per episode.
    pub fn episodes_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for e in &self.episodes {
            out.push_str(&format!(
                "{},{},{},{},{:.3},{:.3},{:.2},{:.2},{:.2},{}\n",
                e.seed,
                e.n_obs,
                e.n_paths,
                e.success,
                e.t_total,
                e.d_total,
                e.mean_check_us(),
                e.p99_check_us(),
                e.mean_select_us(),
                e.emergency_stops
            ));
        }
        out
    }

    /// One row per grid cell.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from(SUMMARY_HEADER);
        out.push('\n');
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{:.3},{:.3},{:.3},{:.2},{:.2},{:.2},{:.2}\n",
                c.n_obs,
                c.n_paths,
                c.episodes,
                c.success_rate,
                c.mean_t_total,
                c.mean_d_total,
                c.mean_check_us,
                c.p99_check_us,
                c.mean_select_us,
                c.mean_emergency_stops
            ));
        }
        out
    }
}

/// Runs every seed in every cell, in parallel. Episode order follows
/// (cell, seed) regardless of scheduling.
pub fn run_grid(
    cells: &[GridCell<'_>],
    seeds: &[u64],
    planner: &PlannerConfig,
    sim: &SimConfig,
) -> Result<GridReport, SimError> {
    let jobs: Vec<(usize, u64)> = (0..cells.len()).flat_map(|c| seeds.iter().map(move |&s| (c, s))).collect();
    let episodes = jobs
        .par_iter()
        .map(|&(c, seed)| {
            let cell = &cells[c];
            run_episode(seed, cell.n_obs, cell.library, cell.index, planner, sim)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let summaries = cells
        .iter()
        .enumerate()
        .map(|(c, cell)| {
            let eps: Vec<&EpisodeResult> = episodes[c * seeds.len()..(c + 1) * seeds.len()].iter().collect();
            CellSummary::from_episodes(cell.n_obs, cell.library.paths.len(), &eps)
        })
        .collect();
    Ok(GridReport { episodes, cells: summaries })
}
