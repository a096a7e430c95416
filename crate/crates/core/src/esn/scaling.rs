use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// Smallest half-range kept per coordinate so constant series stay finite.
const MIN_HALF_RANGE: f64 = 1e-9;

/// Per-coordinate affine map of a fitting window onto `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    center: Vec<f64>,
    half_range: Vec<f64>,
}

impl MinMaxScaler {
    /// Fits to `samples`; `None` when empty or of mixed dimension.
    pub fn fit(samples: &[DVector<f64>]) -> Option<Self> {
        let dim = samples.first()?.len();
        if samples.iter().any(|s| s.len() != dim) {
            return None;
        }
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for s in samples {
            for (i, &v) in s.iter().enumerate() {
                lo[i] = lo[i].min(v);
                hi[i] = hi[i].max(v);
            }
        }
        let center = lo.iter().zip(&hi).map(|(l, h)| 0.5 * (l + h)).collect();
        let half_range = lo.iter().zip(&hi).map(|(l, h)| (0.5 * (h - l)).max(MIN_HALF_RANGE)).collect();
        Some(Self { center, half_range })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn transform(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(v.len(), |i, _| (v[i] - self.center[i]) / self.half_range[i])
    }

    pub fn inverse(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(v.len(), |i, _| v[i] * self.half_range[i] + self.center[i])
    }
}
