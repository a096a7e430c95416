//! Predictive repositioning of UAV base stations.
//!
//! User trajectories are forecast with per-user Echo State Networks, the
//! forecast positions are clustered and covered by one UAV-BS per cluster,
//! and the fleet is moved onto the new positions along the assignment with
//! the smallest total flight distance.

pub mod clustering;
pub mod esn;
pub mod forecast;
pub mod matching;
pub mod pipeline;
pub mod placement;
pub mod trajectory;
