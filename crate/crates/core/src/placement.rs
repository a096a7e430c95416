//! Per-cluster UAV-BS positioning by exhaustive grid search for the point
//! covering the most cluster members.

use std::cmp::Ordering;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::ClusterResult;
use crate::trajectory::{haversine_m, GeoPoint, LocalProjection};

#[derive(Debug, Error)]
pub enum PlacementError {
    #[error("cluster {0} has no members")]
    EmptyCluster(usize),
    #[error("invalid placement config: {0}")]
    InvalidConfig(String),
    #[error("cluster assignment covers {assigned} points but {given} were given")]
    Inconsistent { assigned: usize, given: usize },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacementConfig {
    /// Meters.
    pub coverage_radius: f64,
    /// Candidate grid pitch, meters.
    pub grid_step: f64,
    /// Users one UAV-BS can serve; unlimited when `None`.
    pub capacity: Option<usize>,
}

impl Default for PlacementConfig {
    fn default() -> Self {
        Self {
            coverage_radius: 500.0,
            grid_step: 25.0,
            capacity: None,
        }
    }
}

impl PlacementConfig {
    pub fn validate(&self) -> Result<(), PlacementError> {
        if !(self.coverage_radius > 0.0 && self.coverage_radius.is_finite()) {
            return Err(PlacementError::InvalidConfig(format!(
                "coverage radius must be positive, got {}",
                self.coverage_radius
            )));
        }
        if !(self.grid_step > 0.0 && self.grid_step <= self.coverage_radius) {
            return Err(PlacementError::InvalidConfig(format!(
                "grid step must lie in (0, {}], got {}",
                self.coverage_radius, self.grid_step
            )));
        }
        if self.capacity == Some(0) {
            return Err(PlacementError::InvalidConfig("capacity must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UavPosition {
    pub pos: GeoPoint,
    /// Members served from `pos`.
    pub covered: usize,
    pub cluster_id: usize,
}

/// Coverage of one candidate: served count and the summed distance to the
/// members it serves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coverage {
    pub covered: usize,
    pub distance_sum: f64,
}

/// Members within `coverage_radius` of `pos`, capped at `capacity` (the
/// nearest ones are served first).
pub fn coverage_at(pos: GeoPoint, members: &[GeoPoint], cfg: &PlacementConfig) -> Coverage {
    let mut within: Vec<f64> = members
        .iter()
        .map(|&m| haversine_m(pos, m))
        .filter(|&d| d <= cfg.coverage_radius)
        .collect();
    if let Some(cap) = cfg.capacity {
        if within.len() > cap {
            within.sort_by(f64::total_cmp);
            within.truncate(cap);
        }
    }
    Coverage {
        covered: within.len(),
        distance_sum: within.iter().sum(),
    }
}

/// Total order on candidates: more covered wins, then smaller distance sum,
/// then the lexicographically smaller (lat, lon).
pub fn compare_candidates(a: (GeoPoint, Coverage), b: (GeoPoint, Coverage)) -> Ordering {
    b.1.covered
        .cmp(&a.1.covered)
        .then(a.1.distance_sum.total_cmp(&b.1.distance_sum))
        .then(a.0.lat.total_cmp(&b.0.lat))
        .then(a.0.lon.total_cmp(&b.0.lon))
}

/// Candidate positions: a `grid_step` lattice over the members' bounding box
/// grown by `coverage_radius` on every side.
pub fn candidate_grid(members: &[GeoPoint], cfg: &PlacementConfig) -> Vec<GeoPoint> {
    let proj = LocalProjection::about_mean(members);
    let xy: Vec<[f64; 2]> = members.iter().map(|&m| proj.to_xy(m)).collect();
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &xy {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let r = cfg.coverage_radius;
    let steps = |d: usize| ((hi[d] - lo[d] + 2.0 * r) / cfg.grid_step + 1e-9).floor() as usize;
    let (nx, ny) = (steps(0), steps(1));
    let mut out = Vec::with_capacity((nx + 1) * (ny + 1));
    for i in 0..=nx {
        for j in 0..=ny {
            let x = lo[0] - r + i as f64 * cfg.grid_step;
            let y = lo[1] - r + j as f64 * cfg.grid_step;
            out.push(proj.to_geo([x, y]));
        }
    }
    out
}

/// Best grid candidate for one cluster.
pub fn place_cluster(members: &[GeoPoint], cfg: &PlacementConfig) -> Result<UavPosition, PlacementError> {
    place_cluster_with_id(members, cfg, 0)
}

fn place_cluster_with_id(
    members: &[GeoPoint],
    cfg: &PlacementConfig,
    cluster_id: usize,
) -> Result<UavPosition, PlacementError> {
    cfg.validate()?;
    if members.is_empty() {
        return Err(PlacementError::EmptyCluster(cluster_id));
    }
    let best = candidate_grid(members, cfg)
        .into_iter()
        .map(|c| (c, coverage_at(c, members, cfg)))
        .min_by(|a, b| compare_candidates(*a, *b))
        .expect("grid always holds at least one candidate");
    Ok(UavPosition {
        pos: best.0,
        covered: best.1.covered,
        cluster_id,
    })
}

/// Places one UAV-BS per cluster, in cluster index order.
pub fn place_all(
    clusters: &ClusterResult,
    points: &[GeoPoint],
    cfg: &PlacementConfig,
) -> Result<Vec<UavPosition>, PlacementError> {
    if clusters.assignment.len() != points.len() {
        return Err(PlacementError::Inconsistent {
            assigned: clusters.assignment.len(),
            given: points.len(),
        });
    }
    (0..clusters.centroids.len())
        .into_par_iter()
        .map(|c| {
            let members: Vec<GeoPoint> = clusters.members(c).map(|i| points[i]).collect();
            place_cluster_with_id(&members, cfg, c)
        })
        .collect()
}

/// Writes `cluster_id,lat,lon,covered` rows.
pub fn write_positions_csv<W: Write>(writer: W, positions: &[UavPosition]) -> Result<(), PlacementError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["cluster_id", "lat", "lon", "covered"])?;
    for p in positions {
        w.write_record([
            p.cluster_id.to_string(),
            p.pos.lat.to_string(),
            p.pos.lon.to_string(),
            p.covered.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
