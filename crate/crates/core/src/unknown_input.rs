//! Practical information pattern: the sensor-side scheduler sees the applied
//! inputs only after the acknowledgment delay and reconstructs the recent ones
//! from its measurements.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::control::GainSchedule;
use crate::linalg::{is_pd, spd_solve};
use crate::model::PlantModel;
use crate::scheduling::dvoi_value;
use crate::{Error, Result};

/// Quadratic weights on the output residuals (`qe`, m x m) and on the
/// estimated inputs (`re`, p x p), constant over the window.
#[derive(Debug, Clone, PartialEq)]
pub struct InputEstimatorWeights {
    pub qe: DMatrix<f64>,
    pub re: DMatrix<f64>,
    pub window: usize,
}

/// Scalar multiples of the identity used by scenario files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightScales {
    pub qe: f64,
    pub re: f64,
}

impl Default for WeightScales {
    fn default() -> Self {
        WeightScales { qe: 100.0, re: 0.1 }
    }
}

impl InputEstimatorWeights {
    pub fn scaled(model: &PlantModel, scales: WeightScales, window: usize) -> Self {
        InputEstimatorWeights {
            qe: DMatrix::identity(model.output_dim(), model.output_dim()) * scales.qe,
            re: DMatrix::identity(model.input_dim(), model.input_dim()) * scales.re,
            window,
        }
    }

    pub fn validate(&self, model: &PlantModel) -> Result<()> {
        if self.qe.shape() != (model.output_dim(), model.output_dim()) {
            return Err(Error::dim("input estimator Qe", model.output_dim(), self.qe.nrows()));
        }
        if self.re.shape() != (model.input_dim(), model.input_dim()) {
            return Err(Error::dim("input estimator Re", model.input_dim(), self.re.nrows()));
        }
        if !is_pd(&self.qe, 0.0) || !is_pd(&self.re, 0.0) {
            return Err(Error::Config("input estimator weights must be positive definite".into()));
        }
        Ok(())
    }
}

/// Minimizer of
///
/// ```text
/// sum_t (y_t - C x_{t|t-1})^T Qe (y_t - C x_{t|t-1}) + u_{t-1}^T Re u_{t-1}
/// ```
///
/// over the unknown inputs `u_s..u_{s+w-1}`, where the predictions follow the
/// Kalman recursion started from the exact filtered estimate `x_{s|s}`.
/// `gains[i]` and `measurements[i]` belong to time `s + 1 + i`.
pub fn estimate_unknown_inputs(
    x_start: &DVector<f64>,
    gains: &[DMatrix<f64>],
    measurements: &[DVector<f64>],
    weights: &InputEstimatorWeights,
    model: &PlantModel,
) -> Result<Vec<DVector<f64>>> {
    let window = measurements.len();
    if gains.len() != window {
        return Err(Error::dim("estimate_unknown_inputs gains", window, gains.len()));
    }
    weights.validate(model)?;
    let (n, p) = (model.state_dim(), model.input_dim());
    if window == 0 {
        return Ok(Vec::new());
    }
    let dim = p * window;
    let (a, b, c) = (&model.a, &model.b, &model.c);
    // x_{t|t} = offset + sens * u, tracked as an affine map of the stacked inputs
    let mut offset = x_start.clone();
    let mut sens = DMatrix::<f64>::zeros(n, dim);
    let mut normal = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<f64>::zeros(dim);
    for (i, (gain, y)) in gains.iter().zip(measurements).enumerate() {
        let pred_offset = a * &offset;
        let mut pred_sens = a * &sens;
        let mut block = pred_sens.view_mut((0, i * p), (n, p));
        block += b;
        let resid_offset = y - c * &pred_offset;
        let resid_sens = c * &pred_sens;
        let weighted = resid_sens.transpose() * &weights.qe;
        normal += &weighted * &resid_sens;
        rhs += &weighted * &resid_offset;
        offset = &pred_offset + gain * &resid_offset;
        sens = &pred_sens - gain * &resid_sens;
    }
    for i in 0..window {
        let mut block = normal.view_mut((i * p, i * p), (p, p));
        block += &weights.re;
    }
    let stacked = spd_solve(&normal, &DMatrix::from_column_slice(dim, 1, rhs.as_slice()), "input estimator normal equations")?;
    Ok((0..window)
        .map(|i| DVector::from_iterator(p, stacked.column(0).rows(i * p, p).iter().copied()))
        .collect())
}

/// Runs the filter from `x_{s|s}` through the window with the given inputs, returning `x_{k|k}`.
pub fn filter_through_window(
    x_start: &DVector<f64>,
    gains: &[DMatrix<f64>],
    measurements: &[DVector<f64>],
    inputs: &[DVector<f64>],
    model: &PlantModel,
) -> DVector<f64> {
    gains
        .iter()
        .zip(measurements)
        .zip(inputs)
        .fold(x_start.clone(), |x, ((gain, y), u)| {
            let pred = &model.a * x + &model.b * u;
            let resid = y - &model.c * &pred;
            pred + gain * resid
        })
}

/// Two-hop specialization with a single unknown input `u_{k-1}`. Returns the
/// input estimate and the corrected filtered estimate `x_{k|k}[1]`.
pub fn closed_form_two_hop(
    y: &DVector<f64>,
    x_prev: &DVector<f64>,
    gain: &DMatrix<f64>,
    model: &PlantModel,
    weights: &InputEstimatorWeights,
    loop_hops: usize,
) -> Result<(DVector<f64>, DVector<f64>)> {
    if loop_hops != 2 {
        return Err(Error::Config(format!("closed form applies to two hops, got {loop_hops}")));
    }
    weights.validate(model)?;
    let (a, b, c) = (&model.a, &model.b, &model.c);
    let cb = c * b;
    let resid = y - c * a * x_prev;
    let lhs = cb.transpose() * &weights.qe * &cb + &weights.re;
    let rhs = cb.transpose() * &weights.qe * &resid;
    let u_hat = spd_solve(&lhs, &DMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice()), "B^T C^T Qe C B + Re")?.column(0).into_owned();
    let corrected = a * x_prev + (b - gain * &cb) * &u_hat + gain * resid;
    Ok((u_hat, corrected))
}

/// dVoI evaluated on the mismatch reconstructed from the practical information set.
pub fn approximated_dvoi(
    xtilde_est: &DVector<f64>,
    model: &PlantModel,
    gains: &GainSchedule,
    k: usize,
    hop: usize,
    loop_hops: usize,
    lambda: f64,
) -> Result<f64> {
    dvoi_value(xtilde_est, model, gains, k, hop, loop_hops, lambda)
}

/// Trigger decisions as relayed by the acknowledgment channel. Hop `j` may
/// read the decision of hop `l` at time `t` only once `t <= k - (L + 1 - l)`,
/// and the applied input `u_t` only once `t <= k - (L + 1 - j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AckLedger {
    loop_hops: usize,
    decisions: Vec<Vec<bool>>,
}

impl AckLedger {
    pub fn new(loop_hops: usize) -> Self {
        AckLedger {
            loop_hops,
            decisions: vec![Vec::new(); loop_hops],
        }
    }

    /// Appends the decisions `delta_t[1..=L]` for the next time index.
    pub fn push(&mut self, deltas: &[bool]) -> Result<()> {
        if deltas.len() != self.loop_hops {
            return Err(Error::dim("ack ledger decisions", self.loop_hops, deltas.len()));
        }
        for (hist, &d) in self.decisions.iter_mut().zip(deltas) {
            hist.push(d);
        }
        Ok(())
    }

    fn lag(&self, hop: usize) -> i64 {
        (self.loop_hops + 1 - hop) as i64
    }

    /// Decision of hop `about` at time `t` as seen at time `k`.
    pub fn decision(&self, about: usize, t: usize, k: usize) -> Result<bool> {
        if about == 0 || about > self.loop_hops {
            return Err(Error::Config(format!("hop {about} outside 1..={}", self.loop_hops)));
        }
        if t as i64 > k as i64 - self.lag(about) {
            return Err(Error::Config(format!(
                "decision of hop {about} at time {t} not acknowledged by time {k}"
            )));
        }
        self.decisions[about - 1]
            .get(t)
            .copied()
            .ok_or(Error::TimeOutOfRange { k: t, horizon: self.decisions[about - 1].len() })
    }

    /// Latest input index visible to hop `viewer` at time `k`, if any.
    pub fn latest_known_input(&self, viewer: usize, k: usize) -> Option<usize> {
        let latest = k as i64 - self.lag(viewer);
        (latest >= 0).then_some(latest as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn model() -> PlantModel {
        let mut m = PlantModel::scalar(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0);
        m.a = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 0.9]);
        m.b = DMatrix::from_row_slice(2, 1, &[0.0, 0.5]);
        m.c = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        m.w = DMatrix::identity(2, 2) * 0.01;
        m.v = DMatrix::identity(2, 2) * 0.01;
        m.omega0 = DMatrix::identity(2, 2);
        m.q = DMatrix::identity(2, 2);
        m.terminal = DMatrix::identity(2, 2);
        m
    }

    #[test]
    fn consistent_measurements_give_zero_inputs() {
        let m = model();
        let w = InputEstimatorWeights::scaled(&m, WeightScales::default(), 2);
        let x0 = DVector::from_row_slice(&[1.0, -1.0]);
        let gains = vec![DMatrix::identity(2, 2) * 0.3; 2];
        let y1 = &m.c * &m.a * &x0;
        let y2 = &m.c * &m.a * &m.a * &x0;
        let u = estimate_unknown_inputs(&x0, &gains, &[y1, y2], &w, &m).unwrap();
        assert!(u.iter().all(|ui| ui.norm() < 1e-12));
    }

    #[test]
    fn closed_form_consistent_prediction() {
        let m = model();
        let w = InputEstimatorWeights::scaled(&m, WeightScales::default(), 1);
        let x = DVector::from_row_slice(&[0.3, 0.2]);
        let gain = DMatrix::identity(2, 2) * 0.4;
        let y = &m.c * &m.a * &x;
        let (u, corrected) = closed_form_two_hop(&y, &x, &gain, &m, &w, 2).unwrap();
        assert_eq!(u[0], 0.0);
        assert!((corrected - &m.a * &x).norm() < 1e-15);
        assert!(closed_form_two_hop(&y, &x, &gain, &m, &w, 3).is_err());
    }

    #[test]
    fn closed_form_matches_general_solver() {
        let m = model();
        let w = InputEstimatorWeights::scaled(&m, WeightScales::default(), 1);
        let x = DVector::from_row_slice(&[0.3, 0.2]);
        let gain = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.3]);
        let y = DVector::from_row_slice(&[0.7, -0.4]);
        let (u, corrected) = closed_form_two_hop(&y, &x, &gain, &m, &w, 2).unwrap();
        let general = estimate_unknown_inputs(&x, std::slice::from_ref(&gain), std::slice::from_ref(&y), &w, &m).unwrap();
        assert_relative_eq!(u[0], general[0][0], epsilon = 1e-12);
        let refiltered = filter_through_window(&x, &[gain], &[y], &general, &m);
        assert!((corrected - refiltered).norm() < 1e-12);
    }

    #[test]
    fn empty_window() {
        let m = model();
        let w = InputEstimatorWeights::scaled(&m, WeightScales::default(), 0);
        assert!(estimate_unknown_inputs(&DVector::zeros(2), &[], &[], &w, &m).unwrap().is_empty());
    }

    #[test]
    fn weights_must_be_positive_definite() {
        let m = model();
        let w = InputEstimatorWeights::scaled(&m, WeightScales { qe: 100.0, re: 0.0 }, 1);
        assert!(w.validate(&m).is_err());
    }

    #[test]
    fn ledger_enforces_acknowledgment_delay() {
        let mut ledger = AckLedger::new(2);
        for k in 0..5 {
            ledger.push(&[k % 2 == 0, true]).unwrap();
        }
        // hop 2 decisions arrive one step later, hop 1 decisions two steps later
        assert!(ledger.decision(2, 3, 4).unwrap());
        assert!(ledger.decision(2, 4, 4).is_err());
        assert!(ledger.decision(1, 2, 4).unwrap());
        assert!(ledger.decision(1, 3, 4).is_err());
        assert_eq!(ledger.latest_known_input(1, 4), Some(2));
        assert_eq!(ledger.latest_known_input(1, 1), None);
        assert_eq!(ledger.latest_known_input(2, 4), Some(3));
    }
}
