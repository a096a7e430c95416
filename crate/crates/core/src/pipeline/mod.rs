//! The repositioning loop: cluster and place the fleet once, then every
//! period collect each user's recent history, forecast it, re-cluster and
//! re-place on the forecast, and match the fleet onto the new positions at
//! minimum total flight distance.

mod report;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{kmeans, ClusteringError, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::esn::{EsnError, EsnModel, EsnParams};
use crate::forecast::{forecast_with, score_forecast, ForecastScore, TrackForecast, TurnWeighting};
use crate::matching::{build_cost_matrix, solve_min_matching, MatchingError, MatchingScheme};
use crate::placement::{place_all, PlacementConfig, PlacementError, UavPosition};
use crate::trajectory::{GeoPoint, Track};

pub use report::{write_costs_csv, write_matchings_csv, write_positions_csv, write_rmse_csv};

/// Relative slack when checking that time spans are whole multiples of the
/// sampling interval.
const STEP_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("track {user_id} has {available} samples, a full epoch needs {needed}")]
    TrackExhausted {
        user_id: String,
        available: usize,
        needed: usize,
    },
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error(transparent)]
    Esn(#[from] EsnError),
    #[error(transparent)]
    Clustering(#[from] ClusteringError),
    #[error(transparent)]
    Placement(#[from] PlacementError),
    #[error(transparent)]
    Matching(#[from] MatchingError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    /// Number of users.
    #[serde(rename = "N")]
    pub num_ues: usize,
    /// Number of UAV base stations.
    #[serde(rename = "n")]
    pub num_uavs: usize,
    /// Sampling interval, seconds.
    pub lambda_s: f64,
    /// History window, seconds.
    pub tau_s: f64,
    /// Reposition period (and forecast horizon), seconds.
    #[serde(rename = "T_s")]
    pub period_s: f64,
    pub esn: EsnParams,
    pub placement: PlacementConfig,
    pub kmeans_seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            num_ues: 30,
            num_uavs: 3,
            lambda_s: 3.0,
            tau_s: 900.0,
            period_s: 300.0,
            esn: EsnParams::default(),
            placement: PlacementConfig::default(),
            kmeans_seed: 1,
        }
    }
}

fn whole_steps(span: f64, step: f64) -> Option<usize> {
    let q = span / step;
    let r = q.round();
    ((q - r).abs() <= STEP_EPS * q.max(1.0) && r >= 1.0).then_some(r as usize)
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::InvalidConfig(m));
        if self.num_uavs == 0 || self.num_uavs > self.num_ues {
            return bad(format!("need 1 <= n <= N, got n={} N={}", self.num_uavs, self.num_ues));
        }
        if !(self.lambda_s > 0.0 && self.period_s > 0.0 && self.tau_s > 0.0) {
            return bad("lambda_s, tau_s and T_s must be positive".into());
        }
        if whole_steps(self.tau_s, self.lambda_s).is_none() {
            return bad(format!("lambda_s={} does not divide tau_s={}", self.lambda_s, self.tau_s));
        }
        if whole_steps(self.period_s, self.lambda_s).is_none() {
            return bad(format!("lambda_s={} does not divide T_s={}", self.lambda_s, self.period_s));
        }
        self.esn.validate()?;
        if self.esn.input_dim != 2 {
            return bad(format!("esn.input_dim must be 2 (lat, lon), got {}", self.esn.input_dim));
        }
        self.placement.validate()?;
        Ok(())
    }

    /// Samples per history window, excluding the current one.
    pub fn history_steps(&self) -> usize {
        whole_steps(self.tau_s, self.lambda_s).unwrap_or(0)
    }

    /// Forecast steps per epoch, `T_s / lambda_s`.
    pub fn horizon_steps(&self) -> usize {
        whole_steps(self.period_s, self.lambda_s).unwrap_or(0)
    }

    /// ESN parameters for one user; each user gets its own reservoir.
    pub fn esn_for(&self, ue: usize) -> EsnParams {
        EsnParams {
            seed: self.esn.seed.wrapping_add(ue as u64),
            ..self.esn
        }
    }
}

/// One user's forecast within an epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UeForecast {
    pub user_id: String,
    #[serde(flatten)]
    pub forecast: TrackForecast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch_index: usize,
    /// Sample index of the epoch's "now"; the history ends here and the
    /// forecast covers the following `horizon_steps` samples.
    pub cursor: usize,
    /// Fleet positions before repositioning (`L`).
    pub current_positions: Vec<UavPosition>,
    /// Positions derived from the forecast (`P`).
    pub predicted_positions: Vec<UavPosition>,
    pub matching: MatchingScheme,
    pub forecasts: Vec<UeForecast>,
    pub per_ue_rmse: Vec<f64>,
    pub per_ue_error_m: Vec<f64>,
    /// Seconds spent on the epoch. Not serialized, so records stay
    /// byte-identical across runs.
    #[serde(skip)]
    pub wall_time: f64,
}

impl EpochRecord {
    /// Fleet positions after repositioning: UAV `i` ends at `P[perm[i]]`.
    pub fn repositioned(&self) -> Vec<UavPosition> {
        self.matching.perm.iter().map(|&j| self.predicted_positions[j]).collect()
    }
}

fn positions_at(tracks: &[Track], index: usize) -> Vec<GeoPoint> {
    tracks.iter().map(|t| t.points[index].pos).collect()
}

fn check_tracks(config: &SimulationConfig, tracks: &[Track]) -> Result<(), PipelineError> {
    if tracks.len() != config.num_ues {
        return Err(PipelineError::LengthMismatch(format!(
            "config expects N={} users, got {} tracks",
            config.num_ues,
            tracks.len()
        )));
    }
    for t in tracks {
        let on_grid = t.points.iter().enumerate().all(|(k, p)| {
            (p.t - t.points[0].t - k as f64 * config.lambda_s).abs() <= 1e-6 * config.lambda_s
        });
        if !on_grid {
            return Err(PipelineError::InvalidConfig(format!(
                "track {} is not sampled every {} s",
                t.user_id, config.lambda_s
            )));
        }
    }
    Ok(())
}

/// Actual positions following `record.cursor`, one track per user.
pub fn horizon_truth(config: &SimulationConfig, tracks: &[Track], record: &EpochRecord) -> Vec<Track> {
    let (start, end) = (record.cursor + 1, record.cursor + 1 + config.horizon_steps());
    tracks
        .iter()
        .map(|t| Track {
            user_id: t.user_id.clone(),
            points: t.points[start.min(t.len())..end.min(t.len())].to_vec(),
            dt: t.dt,
        })
        .collect()
}

/// Per-user forecast quality of one epoch against what actually happened.
pub fn evaluate_epoch(
    record: &EpochRecord,
    truth: &[Track],
    weighting: &TurnWeighting,
) -> Result<Vec<ForecastScore>, PipelineError> {
    if truth.len() != record.forecasts.len() {
        return Err(PipelineError::LengthMismatch(format!(
            "{} forecasts but {} truth tracks",
            record.forecasts.len(),
            truth.len()
        )));
    }
    record
        .forecasts
        .iter()
        .zip(truth)
        .map(|(f, t)| {
            if f.forecast.predicted.len() != t.len() {
                return Err(PipelineError::LengthMismatch(format!(
                    "user {}: {} predictions, {} actual positions",
                    f.user_id,
                    f.forecast.predicted.len(),
                    t.len()
                )));
            }
            Ok(score_forecast(&f.forecast, t, weighting)?)
        })
        .collect()
}

/// Runs the repositioning loop until any track runs out of data for a full
/// epoch (history plus horizon).
pub fn run(config: &SimulationConfig, tracks: &[Track]) -> Result<Vec<EpochRecord>, PipelineError> {
    config.validate()?;
    check_tracks(config, tracks)?;
    let (hist, horizon) = (config.history_steps(), config.horizon_steps());
    let needed = hist + horizon + 1;
    let shortest = tracks.iter().min_by_key(|t| t.len()).expect("N >= 1");
    if shortest.len() < needed {
        return Err(PipelineError::TrackExhausted {
            user_id: shortest.user_id.clone(),
            available: shortest.len(),
            needed,
        });
    }
    let epochs = (shortest.len() - needed) / horizon + 1;
    let n = config.num_uavs;

    let clusters = kmeans(&positions_at(tracks, 0), n, config.kmeans_seed, DEFAULT_MAX_ITER, DEFAULT_TOL)?;
    let mut fleet = place_all(&clusters, &positions_at(tracks, 0), &config.placement)?;
    log::info!("initial fleet placed; running {epochs} epochs");

    let mut models: Vec<EsnModel> = (0..tracks.len())
        .into_par_iter()
        .map(|ue| EsnModel::new(config.esn_for(ue)))
        .collect::<Result<_, _>>()?;

    let weighting = TurnWeighting::default();
    let mut records = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let started = Instant::now();
        let cursor = hist + epoch * horizon;

        let forecasts: Vec<UeForecast> = models
            .par_iter_mut()
            .zip(tracks)
            .map(|(model, track)| {
                let history: Vec<GeoPoint> = track.points[cursor - hist..=cursor].iter().map(|p| p.pos).collect();
                let forecast = forecast_with(model, &history, horizon)?;
                Ok(UeForecast {
                    user_id: track.user_id.clone(),
                    forecast,
                })
            })
            .collect::<Result<_, EsnError>>()?;

        let finals: Vec<GeoPoint> = forecasts.iter().map(|f| *f.forecast.predicted.last().unwrap()).collect();
        let seed = config.kmeans_seed.wrapping_add(epoch as u64 + 1);
        let clusters = kmeans(&finals, n, seed, DEFAULT_MAX_ITER, DEFAULT_TOL)?;
        let predicted = place_all(&clusters, &finals, &config.placement)?;

        let current: Vec<GeoPoint> = fleet.iter().map(|u| u.pos).collect();
        let targets: Vec<GeoPoint> = predicted.iter().map(|u| u.pos).collect();
        let matching = solve_min_matching(&build_cost_matrix(&current, &targets)?);

        let mut record = EpochRecord {
            epoch_index: epoch,
            cursor,
            current_positions: fleet,
            predicted_positions: predicted,
            matching,
            forecasts,
            per_ue_rmse: Vec::new(),
            per_ue_error_m: Vec::new(),
            wall_time: 0.0,
        };
        let scores = evaluate_epoch(&record, &horizon_truth(config, tracks, &record), &weighting)?;
        record.per_ue_rmse = scores.iter().map(|s| s.rmse_weighted).collect();
        record.per_ue_error_m = scores.iter().map(|s| s.mean_error_m).collect();
        fleet = record.repositioned();
        record.wall_time = started.elapsed().as_secs_f64();
        log::info!(
            "epoch {epoch}: reposition cost {:.1} m, mean forecast error {:.1} m ({:.2} s)",
            record.matching.total_cost,
            record.per_ue_error_m.iter().sum::<f64>() / record.per_ue_error_m.len() as f64,
            record.wall_time
        );
        records.push(record);
    }
    Ok(records)
}
