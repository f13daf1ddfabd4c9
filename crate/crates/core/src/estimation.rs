//! Sensor-side Kalman filter, the relay estimator cascade, age-of-information
//! bookkeeping and the mismatch errors between neighbouring decision makers.
//!
//! Hops are 1-based in the public API (`hop = 1` is the sensor-side
//! scheduler, `hop = L + 1` the controller) and 0-based in slices.

use nalgebra::{DMatrix, DVector};

use crate::linalg::{spd_solve, symmetrize};
use crate::model::PlantModel;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    /// Time index of the last measurement update; `None` before the first one.
    pub k: Option<usize>,
    pub x_pred: DVector<f64>,
    pub x_filt: DVector<f64>,
    pub sigma_pred: DMatrix<f64>,
    pub sigma_filt: DMatrix<f64>,
    pub gain: DMatrix<f64>,
    /// Gain-weighted innovation `K (y - C x_pred)`.
    pub innovation: DVector<f64>,
}

impl KalmanState {
    /// `x_{0|-1} = 0`, `Sigma_{0|-1} = Omega0`.
    pub fn prior(model: &PlantModel) -> Self {
        let n = model.state_dim();
        KalmanState {
            k: None,
            x_pred: DVector::zeros(n),
            x_filt: DVector::zeros(n),
            sigma_pred: model.omega0.clone(),
            sigma_filt: model.omega0.clone(),
            gain: DMatrix::zeros(n, model.output_dim()),
            innovation: DVector::zeros(n),
        }
    }

    /// One-step prediction `A x_{k|k} + B u_k`.
    pub fn predict(&self, u: &DVector<f64>, model: &PlantModel) -> DVector<f64> {
        &model.a * &self.x_filt + &model.b * u
    }
}

/// Advance the filter to the next measurement. The first call only performs
/// the measurement update on the prior; `u_prev` is ignored there.
pub fn kalman_step(state: &KalmanState, u_prev: &DVector<f64>, y: &DVector<f64>, model: &PlantModel) -> Result<KalmanState> {
    if y.len() != model.output_dim() {
        return Err(Error::dim("kalman_step measurement", model.output_dim(), y.len()));
    }
    let (k, x_pred, sigma_pred) = match state.k {
        None => (0, state.x_pred.clone(), state.sigma_pred.clone()),
        Some(prev) => {
            if u_prev.len() != model.input_dim() {
                return Err(Error::dim("kalman_step input", model.input_dim(), u_prev.len()));
            }
            let sigma = symmetrize(&(&model.a * &state.sigma_filt * model.a.transpose() + &model.w));
            (prev + 1, state.predict(u_prev, model), sigma)
        }
    };
    measurement_update(k, x_pred, sigma_pred, y, model)
}

pub(crate) fn measurement_update(
    k: usize,
    x_pred: DVector<f64>,
    sigma_pred: DMatrix<f64>,
    y: &DVector<f64>,
    model: &PlantModel,
) -> Result<KalmanState> {
    let gain = kalman_gain(&sigma_pred, model)?;
    let innovation = &gain * (y - &model.c * &x_pred);
    let sigma_filt = symmetrize(&(&sigma_pred - &gain * &model.c * &sigma_pred));
    Ok(KalmanState {
        k: Some(k),
        x_filt: &x_pred + &innovation,
        x_pred,
        sigma_pred,
        sigma_filt,
        gain,
        innovation,
    })
}

/// `K = Sigma C^T (C Sigma C^T + V)^-1`.
pub fn kalman_gain(sigma_pred: &DMatrix<f64>, model: &PlantModel) -> Result<DMatrix<f64>> {
    let c = &model.c;
    let s = c * sigma_pred * c.transpose() + &model.v;
    // K^T = S^-1 C Sigma, S symmetric
    Ok(spd_solve(&s, &(c * sigma_pred), "innovation covariance C Sigma C^T + V")?.transpose())
}

/// Covariance of the gain-weighted innovation, `K (C Sigma_pred C^T + V) K^T`.
pub fn innovation_covariance(state: &KalmanState, model: &PlantModel) -> DMatrix<f64> {
    let k = &state.gain;
    let s = &model.c * &state.sigma_pred * model.c.transpose() + &model.v;
    symmetrize(&(k * s * k.transpose()))
}

/// Estimate held by the decision maker at hop `j >= 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct HopEstimate {
    pub hop: usize,
    pub x_pred: DVector<f64>,
    pub x_filt: DVector<f64>,
}

impl HopEstimate {
    /// Before any packet: `x_{0|-1}[j] = x_{0|-1}[1] = 0`.
    pub fn initial(hop: usize, n: usize) -> Self {
        HopEstimate {
            hop,
            x_pred: DVector::zeros(n),
            x_filt: DVector::zeros(n),
        }
    }
}

/// Predict with the previous input, then overwrite with the forwarded
/// estimate if a packet from hop `j - 1` arrived this step. `received` must
/// already be propagated to the current time.
pub fn cascade_step(est: &HopEstimate, received: Option<&DVector<f64>>, u_prev: &DVector<f64>, model: &PlantModel) -> HopEstimate {
    let x_pred = &model.a * &est.x_filt + &model.b * u_prev;
    let x_filt = received.cloned().unwrap_or_else(|| x_pred.clone());
    HopEstimate {
        hop: est.hop,
        x_pred,
        x_filt,
    }
}

/// Per-hop age of information and the relative age to the next hop.
///
/// `delta[j-1]` is the AoI at decision maker `j` (`j = 1..=L+1`),
/// `rel_delta[j-1] = delta[j] - delta[j-1]` for `j = 1..=L`.
#[derive(Debug, Clone, PartialEq)]
pub struct AoiTracker {
    delays: Vec<usize>,
    history: Vec<Vec<usize>>,
    pub delta: Vec<usize>,
    pub rel_delta: Vec<usize>,
}

impl AoiTracker {
    /// `delays[j-1] = d[j]`, with `d[1] = 0`.
    pub fn new(delays: &[usize]) -> Result<Self> {
        if delays.first() != Some(&0) {
            return Err(Error::Config("first hop delay d[1] must be 0".into()));
        }
        if delays.iter().skip(1).any(|&d| d == 0) {
            return Err(Error::Config("relay delays d[j], j > 1, must be at least 1".into()));
        }
        let hops = delays.len();
        Ok(AoiTracker {
            delays: delays.to_vec(),
            history: Vec::new(),
            delta: vec![0; hops],
            rel_delta: vec![0; hops.saturating_sub(1)],
        })
    }

    /// Number of decision makers, `L + 1`.
    pub fn len(&self) -> usize {
        self.delays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delays.is_empty()
    }

    /// AoI of decision maker `idx` (0-based) at time `t`; zero for `t <= 0`.
    pub fn at(&self, t: i64, idx: usize) -> usize {
        if t <= 0 {
            return 0;
        }
        self.history.get(t as usize).map_or(0, |row| row[idx])
    }

    /// Steps recorded so far; the next call to [`aoi_step`] computes this time index.
    pub fn steps(&self) -> usize {
        self.history.len()
    }
}

/// Advance the tracker one step. `received[j-1]` is `delta_{k-d[j]}[j-1]` for
/// `j >= 2`; the entry for hop 1 is ignored.
pub fn aoi_step(tracker: &AoiTracker, received: &[bool]) -> Result<AoiTracker> {
    let hops = tracker.len();
    if received.len() != hops {
        return Err(Error::dim("aoi_step receptions", hops, received.len()));
    }
    let k = tracker.steps() as i64;
    let mut delta = vec![0usize; hops];
    if k > 0 {
        for idx in 1..hops {
            let d = tracker.delays[idx];
            delta[idx] = if received[idx] {
                tracker.at(k - d as i64, idx - 1) + d
            } else {
                tracker.at(k - 1, idx) + 1
            };
        }
    }
    let rel_delta = delta.windows(2).map(|w| w[1] - w[0].min(w[1])).collect();
    let mut next = tracker.clone();
    next.history.push(delta.clone());
    next.delta = delta;
    next.rel_delta = rel_delta;
    Ok(next)
}

impl AoiTracker {
    pub fn step(&mut self, received: &[bool]) -> Result<()> {
        *self = aoi_step(self, received)?;
        Ok(())
    }

    /// `0 = delta[1] <= delta[2] <= ... <= delta[L+1]`.
    pub fn is_ordered(&self) -> bool {
        self.delta.first() == Some(&0) && self.delta.windows(2).all(|w| w[0] <= w[1])
    }
}

/// Mismatch `x_{k|k}[j] - x_{k|k}[j+1]` between neighbouring decision makers, `j = 1..=L`.
#[derive(Debug, Clone, PartialEq)]
pub struct MismatchState {
    pub xtilde: Vec<DVector<f64>>,
}

/// Direct differences of the per-hop filtered estimates (`estimates.len() = L + 1`).
pub fn mismatch_direct(estimates: &[DVector<f64>]) -> MismatchState {
    MismatchState {
        xtilde: estimates.windows(2).map(|w| &w[0] - &w[1]).collect(),
    }
}

/// One-step mismatch propagation for unit relay delays:
///
/// ```text
/// x~'[1] = zeta_{k+1} + (1 - delta_k[1]) A x~[1]
/// x~'[j] = delta_k[j-1] A x~[j-1] + (1 - delta_k[j]) A x~[j],   j > 1
/// ```
///
/// `deltas[j-1]` is the decision `delta_k[j]` taken at hop `j`.
pub fn mismatch_recursion(
    prev: &MismatchState,
    zeta_next: &DVector<f64>,
    deltas: &[bool],
    delays: &[usize],
    model: &PlantModel,
) -> Result<MismatchState> {
    if delays.first() != Some(&0) || delays.iter().skip(1).any(|&d| d != 1) {
        return Err(Error::UnitDelayRequired("recursion valid only for unit hop delays"));
    }
    let hops = prev.xtilde.len();
    if deltas.len() != hops {
        return Err(Error::dim("mismatch_recursion decisions", hops, deltas.len()));
    }
    let propagated: Vec<DVector<f64>> = prev.xtilde.iter().map(|x| &model.a * x).collect();
    let xtilde = (0..hops)
        .map(|idx| {
            let mut next = if idx == 0 {
                zeta_next.clone()
            } else if deltas[idx - 1] {
                propagated[idx - 1].clone()
            } else {
                DVector::zeros(zeta_next.len())
            };
            if !deltas[idx] {
                next += &propagated[idx];
            }
            next
        })
        .collect();
    Ok(MismatchState { xtilde })
}

/// Estimation error at hop `j` and its distance from `e[1] + sum_{l<j} x~[l]`.
pub fn error_decomposition(
    true_x: &DVector<f64>,
    kalman: &KalmanState,
    estimates: &[DVector<f64>],
    mismatch: &MismatchState,
    hop: usize,
) -> Result<(DVector<f64>, f64)> {
    if hop == 0 || hop > estimates.len() || hop > mismatch.xtilde.len() + 1 {
        return Err(Error::Config(format!("hop {hop} outside 1..={}", estimates.len())));
    }
    let e_hop = true_x - &estimates[hop - 1];
    let mut composed = true_x - &kalman.x_filt;
    for xt in &mismatch.xtilde[..hop - 1] {
        composed += xt;
    }
    let residual = (&e_hop - composed).norm();
    Ok((e_hop, residual))
}
