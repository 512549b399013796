//! Time-optimal motion primitives for quadrotor local planning.
//!
//! The offline side builds a library of geometric arcs ([`path_library`]),
//! time-parameterizes each one at every start speed ([`topp`], [`library`])
//! and precomputes which voxels each primitive sweeps ([`collision`]). The
//! online side keeps a short stack of sensor frames ([`point_cloud`]), checks
//! a fixed-size sample against the index and picks the cheapest safe
//! primitive ([`planner`]). [`sim`] closes the loop in random cylinder
//! forests.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod collision;
pub mod config;
pub mod library;
pub mod lp;
pub mod path_library;
pub mod planner;
pub mod point_cloud;
pub mod sim;
pub mod spline;
pub mod topp;

pub use collision::{build_index, check, CollisionIndex, IndexError, IndexParams, SafetyMask};
pub use config::{ConfigError, Preset, RunConfig};
pub use library::{build_library, LibraryConfig, LibraryError, Primitive, PrimitiveLibrary};
pub use lp::{solve_lp_2d, HalfPlane, LpOutcome};
pub use path_library::{build_path_library, generate_arc, ArcSpec, GeometricPath, PathLibrarySpec, Radius};
pub use planner::{replan, select_trajectory, velocity_frame, Aabb, PlannerConfig, PlannerState, Selection, VelocityFrame};
pub use point_cloud::CloudStack;
pub use sim::{generate_map, run_episode, run_grid, EpisodeResult, SimConfig, WorldMap};
pub use topp::{parameterize, Bounds, ToppOptions, Trajectory, TrajectoryKnot};

pub use nalgebra::{Vector2, Vector3};
