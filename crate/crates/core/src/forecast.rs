//! Position forecasting for a single user: normalize the history window,
//! fit a per-user ESN on one-step-ahead pairs and run it free for the
//! horizon.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::esn::{turn_weights, weighted_rmse, EsnError, EsnModel, EsnParams, MinMaxScaler, WeightedSeries};
use crate::trajectory::{haversine_m, split, GeoPoint, Track};

/// Fraction of a track treated as past data when sweeping reservoir sizes.
pub const TRAIN_FRACTION: f64 = 0.75;

/// Down-weighting of sharp turns when scoring a forecast.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TurnWeighting {
    pub base_weight: f64,
    pub turn_discount: f64,
    pub heading_threshold_deg: f64,
}

impl Default for TurnWeighting {
    fn default() -> Self {
        Self {
            base_weight: 1.0,
            turn_discount: 0.5,
            heading_threshold_deg: 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackForecast {
    pub predicted: Vec<GeoPoint>,
    /// Affine map fitted on the history window.
    pub scaler: MinMaxScaler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastScore {
    /// Turn-weighted RMSE in normalized units.
    pub rmse_weighted: f64,
    /// Mean great-circle error, meters.
    pub mean_error_m: f64,
}

fn encode(p: GeoPoint) -> DVector<f64> {
    DVector::from_vec(vec![p.lat, p.lon])
}

fn decode(v: &DVector<f64>) -> GeoPoint {
    GeoPoint { lat: v[0], lon: v[1] }
}

/// Trains `model` on `history` and forecasts `horizon` positions after its
/// last sample. The reservoir is reused as is; only the readout is refitted.
pub fn forecast_with(model: &mut EsnModel, history: &[GeoPoint], horizon: usize) -> Result<TrackForecast, EsnError> {
    if model.params().input_dim != 2 {
        return Err(EsnError::InvalidParams(format!(
            "position forecasting needs input_dim 2, got {}",
            model.params().input_dim
        )));
    }
    let raw: Vec<DVector<f64>> = history.iter().map(|&p| encode(p)).collect();
    let scaler = MinMaxScaler::fit(&raw).ok_or(EsnError::EmptySeries)?;
    let u: Vec<DVector<f64>> = raw.iter().map(|v| scaler.transform(v)).collect();
    if u.len() < 2 {
        return Err(EsnError::InsufficientData { retained: 0 });
    }
    model.train_readout(&u[..u.len() - 1], &u[1..])?;
    let out = model.forecast(&u, horizon)?;
    Ok(TrackForecast {
        predicted: out.iter().map(|y| decode(&scaler.inverse(y))).collect(),
        scaler,
    })
}

/// Builds a fresh model from `params` and forecasts with it.
pub fn forecast_track(params: &EsnParams, history: &[GeoPoint], horizon: usize) -> Result<TrackForecast, EsnError> {
    let mut model = EsnModel::new(*params)?;
    forecast_with(&mut model, history, horizon)
}

/// Scores a forecast against the positions that actually followed.
pub fn score_forecast(
    forecast: &TrackForecast,
    truth: &Track,
    weighting: &TurnWeighting,
) -> Result<ForecastScore, EsnError> {
    if truth.len() != forecast.predicted.len() {
        return Err(EsnError::InvalidSeries(format!(
            "{} predictions against {} actual positions",
            forecast.predicted.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(EsnError::EmptySeries);
    }
    let weights = turn_weights(
        truth,
        weighting.base_weight,
        weighting.turn_discount,
        weighting.heading_threshold_deg,
    )?;
    let targets = truth.points.iter().map(|p| forecast.scaler.transform(&encode(p.pos))).collect();
    let predictions = forecast.predicted.iter().map(|&p| forecast.scaler.transform(&encode(p))).collect();
    let series = WeightedSeries::new(targets, predictions, weights)?;
    let mean_error_m = truth
        .points
        .iter()
        .zip(&forecast.predicted)
        .map(|(t, &p)| haversine_m(t.pos, p))
        .sum::<f64>()
        / truth.len() as f64;
    Ok(ForecastScore {
        rmse_weighted: weighted_rmse(&series),
        mean_error_m,
    })
}

/// One reservoir size's score in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub size: usize,
    pub rmse_weighted: f64,
    pub mean_error_m: f64,
}

/// Forecasts the same window of `track` with each reservoir size in
/// `sizes` and scores it against what followed.
///
/// The track (already on its sampling grid) is split into past and future
/// parts at [`TRAIN_FRACTION`]; the history is the last `history_steps + 1`
/// past samples and the forecast covers the first `horizon_steps` future
/// ones.
pub fn reservoir_sweep(
    track: &Track,
    sizes: &[usize],
    base: &EsnParams,
    history_steps: usize,
    horizon_steps: usize,
    weighting: &TurnWeighting,
) -> Result<Vec<SweepRow>, EsnError> {
    let (past, future) = split(track, TRAIN_FRACTION).map_err(|e| EsnError::InvalidSeries(e.to_string()))?;
    if past.len() < history_steps + 1 || future.len() < horizon_steps {
        let train_len = |n: usize| (TRAIN_FRACTION * n as f64 - 1e-9).ceil() as usize;
        let needed = (history_steps + 1 + horizon_steps..)
            .find(|&n| train_len(n) > history_steps && n - train_len(n) >= horizon_steps)
            .expect("some length always suffices");
        return Err(EsnError::SeriesTooShort {
            available: track.len(),
            needed,
        });
    }
    let history: Vec<GeoPoint> = past.points[past.len() - history_steps - 1..].iter().map(|p| p.pos).collect();
    let truth = Track {
        user_id: track.user_id.clone(),
        points: future.points[..horizon_steps].to_vec(),
        dt: track.dt,
    };
    sizes
        .iter()
        .map(|&size| {
            let params = EsnParams { reservoir_size: size, ..*base };
            let forecast = forecast_track(&params, &history, horizon_steps)?;
            let score = score_forecast(&forecast, &truth, weighting)?;
            log::info!("size {size}: rmse {:.5}, mean error {:.1} m", score.rmse_weighted, score.mean_error_m);
            Ok(SweepRow {
                size,
                rmse_weighted: score.rmse_weighted,
                mean_error_m: score.mean_error_m,
            })
        })
        .collect()
}

/// Writes `size,rmse_weighted,mean_error_m` rows.
pub fn write_sweep_csv<W: std::io::Write>(writer: W, rows: &[SweepRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["size", "rmse_weighted", "mean_error_m"])?;
    for r in rows {
        w.write_record([r.size.to_string(), r.rmse_weighted.to_string(), r.mean_error_m.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
