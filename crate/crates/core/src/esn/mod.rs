//! Echo State Network: a fixed random sparse reservoir driven by
//! `x(t) = tanh(W_in u(t) + W_res x(t-1))` and a linear readout
//! `y(t) = W_out x(t)` trained in closed form.

mod metrics;
mod readout;
mod scaling;
pub mod sparse;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use metrics::{turn_weights, weighted_rmse, WeightedSeries};
pub use readout::ridge;
pub use scaling::MinMaxScaler;
pub use sparse::{spectral_radius, CsrMatrix, Triplet};

/// Seeds tried (`seed`, `seed + 1`, ...) before giving up on a reservoir
/// whose spectral radius is zero.
const MAX_INIT_ATTEMPTS: u64 = 8;

#[derive(Debug, Error)]
pub enum EsnError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("reservoir has zero spectral radius after {0} attempts")]
    DegenerateReservoir(u64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("insufficient data: {retained} states retained after washout, at least 2 required")]
    InsufficientData { retained: usize },
    #[error("series has {available} samples, {needed} required")]
    SeriesTooShort { available: usize, needed: usize },
    #[error("readout system is singular")]
    SingularSystem,
    #[error("model has not been trained")]
    NotTrained,
    #[error("empty series")]
    EmptySeries,
    #[error("invalid series: {0}")]
    InvalidSeries(String),
    #[error("malformed model document: {0}")]
    Json(#[from] serde_json::Error),
}

/// Reservoir hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EsnParams {
    /// Length of each input (and output) vector.
    pub input_dim: usize,
    /// Number of reservoir neurons.
    pub reservoir_size: usize,
    pub spectral_radius: f64,
    /// Expected fraction of nonzero reservoir entries.
    pub connectivity: f64,
    pub input_scale: f64,
    pub ridge_lambda: f64,
    /// Leading states discarded before fitting the readout.
    pub washout: usize,
    pub seed: u64,
}

impl Default for EsnParams {
    fn default() -> Self {
        Self {
            input_dim: 2,
            reservoir_size: 500,
            spectral_radius: 0.9,
            connectivity: 0.02,
            input_scale: 0.01,
            ridge_lambda: 1e-6,
            washout: 50,
            seed: 1,
        }
    }
}

impl EsnParams {
    pub fn validate(&self) -> Result<(), EsnError> {
        let bad = |msg: String| Err(EsnError::InvalidParams(msg));
        if self.input_dim == 0 {
            return bad("input_dim must be at least 1".into());
        }
        if self.reservoir_size < self.input_dim {
            return bad(format!(
                "reservoir_size {} is smaller than input_dim {}",
                self.reservoir_size, self.input_dim
            ));
        }
        if !(self.spectral_radius > 0.0 && self.spectral_radius < 1.0) {
            return bad(format!("spectral_radius must lie in (0, 1), got {}", self.spectral_radius));
        }
        if !(self.connectivity > 0.0 && self.connectivity <= 1.0) {
            return bad(format!("connectivity must lie in (0, 1], got {}", self.connectivity));
        }
        if !(self.input_scale > 0.0 && self.input_scale.is_finite()) {
            return bad(format!("input_scale must be positive, got {}", self.input_scale));
        }
        if !(self.ridge_lambda >= 0.0 && self.ridge_lambda.is_finite()) {
            return bad(format!("ridge_lambda must be non-negative, got {}", self.ridge_lambda));
        }
        Ok(())
    }
}

/// Weights and running state of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct EsnModel {
    params: EsnParams,
    w_in: DMatrix<f64>,
    w_res: CsrMatrix,
    w_out: DMatrix<f64>,
    state: DVector<f64>,
    trained: bool,
}

impl EsnModel {
    /// Draws a reservoir for `params`, deterministically per seed.
    ///
    /// Input weights are uniform in `±input_scale`. Each reservoir entry is
    /// nonzero with probability `connectivity`, uniform in `[-1, 1]`, and the
    /// whole matrix is then rescaled to the requested spectral radius.
    pub fn new(params: EsnParams) -> Result<Self, EsnError> {
        params.validate()?;
        let (m, n) = (params.reservoir_size, params.input_dim);

        for attempt in 0..MAX_INIT_ATTEMPTS {
            let seed = params.seed.wrapping_add(attempt);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w_in = DMatrix::from_fn(m, n, |_, _| rng.random_range(-params.input_scale..=params.input_scale));

            let rows: Vec<Vec<(usize, f64)>> = (0..m)
                .map(|_| {
                    (0..m)
                        .filter_map(|c| {
                            (params.connectivity >= 1.0 || rng.random::<f64>() < params.connectivity)
                                .then(|| (c, rng.random_range(-1.0..=1.0)))
                        })
                        .collect()
                })
                .collect();
            let mut w_res = CsrMatrix::from_rows(m, rows);

            let rho = spectral_radius(&w_res, seed);
            if !(rho > 1e-12) {
                log::debug!("seed {seed}: degenerate reservoir, retrying");
                continue;
            }
            w_res.scale(params.spectral_radius / rho);

            return Ok(Self {
                params: EsnParams { seed: params.seed, ..params },
                w_in,
                w_res,
                w_out: DMatrix::zeros(n, m),
                state: DVector::zeros(m),
                trained: false,
            });
        }
        Err(EsnError::DegenerateReservoir(MAX_INIT_ATTEMPTS))
    }

    /// Assembles a model from explicit weights.
    pub fn from_parts(
        params: EsnParams,
        w_in: DMatrix<f64>,
        w_res: CsrMatrix,
        w_out: Option<DMatrix<f64>>,
    ) -> Result<Self, EsnError> {
        let (m, n) = (params.reservoir_size, params.input_dim);
        let check = |expected: usize, got: usize| {
            if expected == got {
                Ok(())
            } else {
                Err(EsnError::DimensionMismatch { expected, got })
            }
        };
        check(m, w_in.nrows())?;
        check(n, w_in.ncols())?;
        check(m, w_res.rows())?;
        check(m, w_res.cols())?;
        if let Some(w) = &w_out {
            check(n, w.nrows())?;
            check(m, w.ncols())?;
        }
        Ok(Self {
            params,
            w_in,
            w_res,
            trained: w_out.is_some(),
            w_out: w_out.unwrap_or_else(|| DMatrix::zeros(n, m)),
            state: DVector::zeros(m),
        })
    }

    pub fn params(&self) -> &EsnParams {
        &self.params
    }

    pub fn w_in(&self) -> &DMatrix<f64> {
        &self.w_in
    }

    pub fn w_res(&self) -> &CsrMatrix {
        &self.w_res
    }

    pub fn w_out(&self) -> &DMatrix<f64> {
        &self.w_out
    }

    pub fn state(&self) -> &DVector<f64> {
        &self.state
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn reset_state(&mut self) {
        self.state.fill(0.0);
    }

    pub fn set_state(&mut self, state: DVector<f64>) -> Result<(), EsnError> {
        if state.len() != self.params.reservoir_size {
            return Err(EsnError::DimensionMismatch {
                expected: self.params.reservoir_size,
                got: state.len(),
            });
        }
        self.state = state;
        Ok(())
    }

    /// Advances the reservoir by one input and returns the new state.
    pub fn step(&mut self, u: &DVector<f64>) -> Result<&DVector<f64>, EsnError> {
        if u.len() != self.params.input_dim {
            return Err(EsnError::DimensionMismatch {
                expected: self.params.input_dim,
                got: u.len(),
            });
        }
        let mut next = self.w_res.mul_vec(&self.state);
        next.gemv(1.0, &self.w_in, u, 1.0);
        next.apply(|v| *v = v.tanh());
        self.state = next;
        Ok(&self.state)
    }

    /// Readout of the current state.
    pub fn output(&self) -> DVector<f64> {
        &self.w_out * &self.state
    }

    /// Drives the reservoir over `inputs` from a zero state, drops the
    /// first `washout` states and fits the readout to the aligned targets by
    /// ridge regression.
    pub fn train_readout(&mut self, inputs: &[DVector<f64>], targets: &[DVector<f64>]) -> Result<(), EsnError> {
        if inputs.len() != targets.len() {
            return Err(EsnError::DimensionMismatch {
                expected: inputs.len(),
                got: targets.len(),
            });
        }
        let n = self.params.input_dim;
        if let Some(bad) = targets.iter().find(|t| t.len() != n) {
            return Err(EsnError::DimensionMismatch { expected: n, got: bad.len() });
        }
        let washout = self.params.washout;
        let retained = inputs.len().saturating_sub(washout);
        if retained < 2 {
            return Err(EsnError::InsufficientData { retained });
        }

        let m = self.params.reservoir_size;
        let mut states = DMatrix::zeros(m, retained);
        let mut ys = DMatrix::zeros(n, retained);
        self.reset_state();
        for (k, (u, y)) in inputs.iter().zip(targets).enumerate() {
            self.step(u)?;
            if k >= washout {
                states.set_column(k - washout, &self.state);
                ys.set_column(k - washout, y);
            }
        }

        self.w_out = ridge(&states, &ys, self.params.ridge_lambda)?;
        self.trained = true;
        Ok(())
    }

    /// Teacher-forces the reservoir over `history` from a zero state, then
    /// runs `horizon` free-running steps feeding each output back in as
    /// the next input.
    pub fn forecast(&mut self, history: &[DVector<f64>], horizon: usize) -> Result<Vec<DVector<f64>>, EsnError> {
        if !self.trained {
            return Err(EsnError::NotTrained);
        }
        if history.is_empty() {
            return Err(EsnError::InvalidSeries("empty history".into()));
        }
        self.reset_state();
        for u in history {
            self.step(u)?;
        }
        let mut out = Vec::with_capacity(horizon);
        for h in 0..horizon {
            let y = self.output();
            if h + 1 < horizon {
                self.step(&y)?;
            }
            out.push(y);
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String, EsnError> {
        Ok(serde_json::to_string(&ModelDocument::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self, EsnError> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        doc.into_model()
    }
}

/// On-disk form of a model: dense input and readout weights, the reservoir
/// as sparse triplets.
#[derive(Debug, Serialize, Deserialize)]
struct ModelDocument {
    params: EsnParams,
    seed: u64,
    trained: bool,
    w_in: Vec<Vec<f64>>,
    w_res: Vec<Triplet>,
    w_out: Vec<Vec<f64>>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<DMatrix<f64>, EsnError> {
    if rows.len() != nrows {
        return Err(EsnError::DimensionMismatch { expected: nrows, got: rows.len() });
    }
    if let Some(r) = rows.iter().find(|r| r.len() != ncols) {
        return Err(EsnError::DimensionMismatch { expected: ncols, got: r.len() });
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

impl From<&EsnModel> for ModelDocument {
    fn from(model: &EsnModel) -> Self {
        Self {
            params: model.params,
            seed: model.params.seed,
            trained: model.trained,
            w_in: rows_of(&model.w_in),
            w_res: model.w_res.triplets(),
            w_out: rows_of(&model.w_out),
        }
    }
}

impl ModelDocument {
    fn into_model(self) -> Result<EsnModel, EsnError> {
        let params = EsnParams { seed: self.seed, ..self.params };
        params.validate()?;
        let (m, n) = (params.reservoir_size, params.input_dim);
        let w_in = from_rows(&self.w_in, m, n)?;
        let w_out = from_rows(&self.w_out, n, m)?;
        let w_res = CsrMatrix::from_triplets(m, m, &self.w_res)
            .ok_or_else(|| EsnError::InvalidParams("reservoir triplet out of bounds".into()))?;
        EsnModel::from_parts(params, w_in, w_res, self.trained.then_some(w_out))
    }
}
