//! Weighted forecast error and turn-aware weighting.

use nalgebra::DVector;

use super::EsnError;
use crate::trajectory::{bearing_deg, haversine_m, Track};

const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Targets, predictions and per-prediction weights of equal length.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSeries {
    targets: Vec<DVector<f64>>,
    predictions: Vec<DVector<f64>>,
    weights: Vec<f64>,
}

impl WeightedSeries {
    pub fn new(
        targets: Vec<DVector<f64>>,
        predictions: Vec<DVector<f64>>,
        weights: Vec<f64>,
    ) -> Result<Self, EsnError> {
        let m = targets.len();
        if predictions.len() != m || weights.len() != m {
            return Err(EsnError::InvalidSeries(format!(
                "length mismatch: {m} targets, {} predictions, {} weights",
                predictions.len(),
                weights.len()
            )));
        }
        if m == 0 {
            return Err(EsnError::EmptySeries);
        }
        if let Some((i, _)) = targets.iter().zip(&predictions).enumerate().find(|(_, (t, p))| t.len() != p.len()) {
            return Err(EsnError::InvalidSeries(format!("dimension mismatch at index {i}")));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(EsnError::InvalidSeries("weights must be finite and non-negative".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(EsnError::InvalidSeries(format!("weights sum to {sum}, expected 1")));
        }
        Ok(Self {
            targets,
            predictions,
            weights,
        })
    }

    /// Equal weights `1/M`.
    pub fn uniform(targets: Vec<DVector<f64>>, predictions: Vec<DVector<f64>>) -> Result<Self, EsnError> {
        let m = targets.len();
        let weights = vec![1.0 / m.max(1) as f64; m];
        Self::new(targets, predictions, weights)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// `sqrt(Σ wᵢ ‖yᵢ − ŷᵢ‖²)` with weights summing to one.
pub fn weighted_rmse(series: &WeightedSeries) -> f64 {
    let acc: f64 = series
        .targets
        .iter()
        .zip(&series.predictions)
        .zip(&series.weights)
        .map(|((t, p), w)| w * (p - t).norm_squared())
        .sum();
    acc.sqrt()
}

/// Per-point weights that down-weight sharp turns.
///
/// The heading change at an interior point is the angle between the
/// incoming and outgoing segment bearings. Points whose change exceeds
/// `heading_threshold_deg` get raw weight `base_weight * turn_discount`,
/// all others `base_weight`; the result is normalized to sum to 1. The two
/// endpoints have no heading change of their own and take their neighbour's
/// classification. Zero-length segments count as going straight.
///
/// Tracks with fewer than 3 points get uniform weights.
pub fn turn_weights(
    track: &Track,
    base_weight: f64,
    turn_discount: f64,
    heading_threshold_deg: f64,
) -> Result<Vec<f64>, EsnError> {
    if !(turn_discount > 0.0 && turn_discount < 1.0) {
        return Err(EsnError::InvalidParams(format!("turn discount must lie in (0, 1), got {turn_discount}")));
    }
    if !(base_weight > 0.0) {
        return Err(EsnError::InvalidParams(format!("base weight must be positive, got {base_weight}")));
    }
    let pts = &track.points;
    let m = pts.len();
    if m < 3 {
        return Ok(vec![1.0 / m.max(1) as f64; m]);
    }

    let mut turning = vec![false; m];
    for i in 1..m - 1 {
        let (a, b, c) = (pts[i - 1].pos, pts[i].pos, pts[i + 1].pos);
        if haversine_m(a, b) == 0.0 || haversine_m(b, c) == 0.0 {
            continue;
        }
        let change = (bearing_deg(b, c) - bearing_deg(a, b) + 540.0).rem_euclid(360.0) - 180.0;
        turning[i] = change.abs() > heading_threshold_deg;
    }
    turning[0] = turning[1];
    turning[m - 1] = turning[m - 2];

    let raw: Vec<f64> = turning
        .iter()
        .map(|&t| if t { base_weight * turn_discount } else { base_weight })
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}
