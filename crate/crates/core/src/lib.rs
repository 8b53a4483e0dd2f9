//! Lane-level behavior maps learned from observed vehicle trajectories, and map-based
//! multi-hypothesis trajectory prediction.
//!
//! Map building runs raster → skeleton → topological graph → map matching → velocity
//! clustering, transition tables and prototype trajectories. Prediction associates an observed
//! vehicle with a directed edge, enumerates reachable edge sequences, weights them with
//! velocity-interpolated transition probabilities and warps the stored prototypes onto the
//! observed track. A constant yaw rate and acceleration model serves as baseline.

pub mod behavior;
pub mod config;
pub mod cyra;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod graph;
pub mod io;
pub mod matching;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod predict;
pub mod raster;

pub use error::{Error, Result};
pub use geometry::Point2;
pub use model::{Trajectory, TrajectoryPoint, VehicleState};
