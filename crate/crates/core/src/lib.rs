//! Constraint-aware consensus for water levels in open-channel networks.
//!
//! Channels are the agents: a junction topology is turned into its line
//! graph, Metropolis-Hastings weights are put on it, and water-height
//! deviations are driven to a common level while every per-step change
//! respects download and upload limits.

pub mod analysis;
pub mod constraints;
pub mod distributed;
pub mod eigen;
pub mod geometry;
pub mod graph;
pub mod rgp;
pub mod runner;
pub mod scenario;
pub mod weights;
