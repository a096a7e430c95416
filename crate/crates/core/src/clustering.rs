//! K-means over user positions with k-means++ seeding.
//!
//! Distances are planar, in a local equirectangular projection centred on
//! the mean latitude of the input, so centroids and inertia are in meters.

use std::cmp::Ordering;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajectory::{GeoPoint, LocalProjection};

pub const DEFAULT_MAX_ITER: usize = 100;
/// Stop once an iteration improves inertia by less than this, in m².
pub const DEFAULT_TOL: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum ClusteringError {
    #[error("cannot form {clusters} clusters from {points} points")]
    TooFewPoints { points: usize, clusters: usize },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    /// Cluster index of every input point.
    pub assignment: Vec<usize>,
    pub centroids: Vec<GeoPoint>,
    /// Sum of squared member-to-centroid distances, m².
    pub inertia: f64,
    /// `true` for clusters with no members at termination.
    pub empty: Vec<bool>,
    /// Inertia after every assignment pass, in order.
    pub inertia_trace: Vec<f64>,
}

impl ClusterResult {
    pub fn members(&self, cluster: usize) -> impl Iterator<Item = usize> + '_ {
        self.assignment
            .iter()
            .enumerate()
            .filter(move |(_, &c)| c == cluster)
            .map(|(i, _)| i)
    }
}

/// Lloyd's algorithm from k-means++ seeds.
///
/// Points are processed in a canonical (lat, lon) order, so the result for a
/// permuted input is the same clustering with the assignment permuted
/// alongside. Ties go to the lowest cluster index.
pub fn kmeans(
    points: &[GeoPoint],
    n: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<ClusterResult, ClusteringError> {
    if n == 0 || points.len() < n {
        return Err(ClusteringError::TooFewPoints {
            points: points.len(),
            clusters: n,
        });
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .lat
            .total_cmp(&points[b].lat)
            .then(points[a].lon.total_cmp(&points[b].lon))
    });
    let sorted: Vec<GeoPoint> = order.iter().map(|&i| points[i]).collect();
    let proj = LocalProjection::about_mean(&sorted);
    let xy: Vec<[f64; 2]> = sorted.iter().map(|&p| proj.to_xy(p)).collect();

    let mut centroids = seed_plus_plus(&xy, n, seed);
    let mut labels = vec![0usize; xy.len()];
    let mut trace = Vec::new();
    let mut prev = f64::INFINITY;

    for iter in 0..max_iter.max(1) {
        let inertia = assign(&xy, &centroids, &mut labels);
        trace.push(inertia);
        if prev - inertia < tol || iter + 1 == max_iter.max(1) {
            break;
        }
        prev = inertia;
        update(&xy, &mut centroids, &labels);
    }

    let inertia = *trace.last().unwrap();
    let mut assignment = vec![0; points.len()];
    for (sorted_pos, &orig) in order.iter().enumerate() {
        assignment[orig] = labels[sorted_pos];
    }
    let mut empty = vec![true; n];
    for &c in &labels {
        empty[c] = false;
    }
    Ok(ClusterResult {
        assignment,
        centroids: centroids.into_iter().map(|c| proj.to_geo(c)).collect(),
        inertia,
        empty,
        inertia_trace: trace,
    })
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn nearest(p: [f64; 2], centroids: &[[f64; 2]]) -> (usize, f64) {
    centroids
        .iter()
        .enumerate()
        .map(|(c, &q)| (c, dist2(p, q)))
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)))
        .unwrap()
}

fn seed_plus_plus(xy: &[[f64; 2]], n: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = vec![rng.random_range(0..xy.len())];
    let mut d2: Vec<f64> = xy.iter().map(|&p| dist2(p, xy[chosen[0]])).collect();
    while chosen.len() < n {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave target at the very end of the cumulative sum
            pick.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).unwrap())
        } else {
            // every point coincides with a chosen seed; take the first unused index
            (0..xy.len()).find(|i| !chosen.contains(i)).unwrap()
        };
        chosen.push(pick);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(dist2(xy[i], xy[pick]));
        }
    }
    chosen.into_iter().map(|i| xy[i]).collect()
}

fn assign(xy: &[[f64; 2]], centroids: &[[f64; 2]], labels: &mut [usize]) -> f64 {
    let mut inertia = 0.0;
    for (p, label) in xy.iter().zip(labels.iter_mut()) {
        let (c, d) = nearest(*p, centroids);
        *label = c;
        inertia += d;
    }
    inertia
}

fn update(xy: &[[f64; 2]], centroids: &mut [[f64; 2]], labels: &[usize]) {
    let k = centroids.len();
    let mut sums = vec![[0.0; 2]; k];
    let mut counts = vec![0usize; k];
    for (p, &c) in xy.iter().zip(labels) {
        sums[c][0] += p[0];
        sums[c][1] += p[1];
        counts[c] += 1;
    }
    for c in 0..k {
        if counts[c] > 0 {
            centroids[c] = [sums[c][0] / counts[c] as f64, sums[c][1] / counts[c] as f64];
        }
    }
    // an empty cluster moves onto the point farthest from its own centroid
    for c in 0..k {
        if counts[c] > 0 {
            continue;
        }
        let far = xy
            .iter()
            .zip(labels)
            .enumerate()
            .filter(|(_, (_, &l))| counts[l] > 1)
            .map(|(i, (p, &l))| (i, dist2(*p, centroids[l])))
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal).then(b.0.cmp(&a.0)));
        if let Some((i, _)) = far {
            centroids[c] = xy[i];
            counts[labels[i]] -= 1;
            counts[c] = 1;
        }
    }
}

/// Writes `user_id,cluster_id` rows.
pub fn write_assignment_csv<W: Write>(
    writer: W,
    user_ids: &[String],
    result: &ClusterResult,
) -> Result<(), ClusteringError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["user_id", "cluster_id"])?;
    for (id, c) in user_ids.iter().zip(&result.assignment) {
        w.write_record([id.as_str(), &c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `cluster_id,lat,lon` rows.
pub fn write_centroids_csv<W: Write>(writer: W, result: &ClusterResult) -> Result<(), ClusteringError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["cluster_id", "lat", "lon"])?;
    for (c, p) in result.centroids.iter().enumerate() {
        w.write_record([c.to_string(), p.lat.to_string(), p.lon.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
