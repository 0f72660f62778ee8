//! Leader-following robot pipeline over a deterministic 2D simulator.
//!
//! A scripted leader walks through the world while synthetic LIDAR and camera
//! sensors observe it. The pipeline recognises and tracks the leader,
//! rebuilds a continuous-curvature path from the estimated footsteps and
//! drives a unicycle robot along that path.

pub mod control;
pub mod fusion;
pub mod geometry;
pub mod harness;
pub mod path;
pub mod recognition;
pub mod sim;
pub mod tracker;
