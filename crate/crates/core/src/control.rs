//! Finite-horizon LQR gains, the steady-state Riccati solution and LQG cost bookkeeping.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::linalg::{quad_form, spd_solve, symmetrize};
use crate::model::PlantModel;
use crate::{Error, Result};

/// Backward Riccati solution over a horizon `T`.
///
/// `s[k]` for `k = 0..=T`, `gains[k]` and `gamma[k]` for `k = 0..T`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSchedule {
    pub horizon: usize,
    pub s: Vec<DMatrix<f64>>,
    pub gains: Vec<DMatrix<f64>>,
    pub gamma: Vec<DMatrix<f64>>,
}

impl GainSchedule {
    pub fn gain(&self, k: usize) -> Result<&DMatrix<f64>> {
        self.gains.get(k).ok_or(Error::TimeOutOfRange { k, horizon: self.horizon })
    }

    /// Estimation-error weight `Gamma_k`. Indices at or past the horizon
    /// return `Gamma_{T-1}`: the scheduler reads one step beyond its cutoff.
    pub fn gamma_at(&self, k: usize) -> &DMatrix<f64> {
        &self.gamma[k.min(self.horizon - 1)]
    }
}

/// One Riccati backward step, returning `(S_k, L_k, Gamma_k)` from `S_{k+1}`.
pub fn riccati_step(model: &PlantModel, s_next: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let (a, b) = (&model.a, &model.b);
    let bt_s = b.transpose() * s_next;
    let m = &model.r + &bt_s * b;
    let gain = spd_solve(&m, &(&bt_s * a), "R + B^T S B")?;
    let gamma = symmetrize(&(gain.transpose() * &m * &gain));
    // S_k = Q + A^T S A - L^T M L
    let s = symmetrize(&(&model.q + a.transpose() * s_next * a - &gamma));
    Ok((s, gain, gamma))
}

pub fn riccati_backward(model: &PlantModel, horizon: usize) -> Result<GainSchedule> {
    if horizon == 0 {
        return Err(Error::Config("horizon must be at least 1".into()));
    }
    let mut s = vec![model.terminal.clone(); horizon + 1];
    let mut gains = vec![DMatrix::zeros(0, 0); horizon];
    let mut gamma = vec![DMatrix::zeros(0, 0); horizon];
    for k in (0..horizon).rev() {
        let (sk, lk, gk) = riccati_step(model, &s[k + 1])?;
        s[k] = sk;
        gains[k] = lk;
        gamma[k] = gk;
    }
    Ok(GainSchedule { horizon, s, gains, gamma })
}

/// `S - (Q + A^T (S - S B (R + B^T S B)^-1 B^T S) A)`, Frobenius norm.
pub fn riccati_residual(model: &PlantModel, s: &DMatrix<f64>) -> Result<f64> {
    let (next, _, _) = riccati_step(model, s)?;
    Ok((s - next).norm())
}

/// Stabilizing solution of the discrete algebraic Riccati equation.
///
/// Structure-preserving doubling followed by fixed-point polishing.
pub fn steady_state_riccati(model: &PlantModel) -> Result<DMatrix<f64>> {
    let n = model.state_dim();
    let id = DMatrix::<f64>::identity(n, n);
    let r_inv_bt = spd_solve(&model.r, &model.b.transpose(), "R")?;
    let mut a = model.a.clone();
    let mut g = &model.b * r_inv_bt;
    let mut h = model.q.clone();
    for _ in 0..64 {
        let w = &id + &g * &h;
        let lu = w.clone().lu();
        let w_inv_a = lu.solve(&a).ok_or(Error::Singular("I + G H"))?;
        let w_inv_g = lu.solve(&g).ok_or(Error::Singular("I + G H"))?;
        let h_next = symmetrize(&(&h + a.transpose() * &h * &w_inv_a));
        let g_next = symmetrize(&(&g + &a * &w_inv_g * a.transpose()));
        let a_next = &a * &w_inv_a;
        let change = (&h_next - &h).norm() / h_next.norm().max(1.0);
        h = h_next;
        g = g_next;
        a = a_next;
        if change < 1e-15 {
            break;
        }
    }
    let mut s = h;
    for _ in 0..16 {
        let (next, _, _) = riccati_step(model, &s)?;
        let change = (&next - &s).norm();
        s = next;
        if change <= f64::EPSILON * s.norm() {
            break;
        }
    }
    Ok(s)
}

/// `u_k = -L_k x`.
pub fn control_action(schedule: &GainSchedule, k: usize, x_hat: &DVector<f64>) -> Result<DVector<f64>> {
    let gain = schedule.gain(k)?;
    if gain.ncols() != x_hat.len() {
        return Err(Error::dim("control_action estimate", gain.ncols(), x_hat.len()));
    }
    Ok(-(gain * x_hat))
}

/// Realized quadratic cost `x_T^T Lambda x_T + sum_k x_k^T Q x_k + u_k^T R u_k`.
///
/// `states` holds `x_0..=x_T`, `inputs` holds `u_0..u_{T-1}`.
pub fn empirical_cost(states: &[DVector<f64>], inputs: &[DVector<f64>], model: &PlantModel) -> Result<f64> {
    if states.len() != inputs.len() + 1 {
        return Err(Error::IncompleteTrace(format!(
            "{} states for {} inputs",
            states.len(),
            inputs.len()
        )));
    }
    let horizon = inputs.len();
    let running: f64 = states[..horizon]
        .iter()
        .zip(inputs)
        .map(|(x, u)| quad_form(&model.q, x) + quad_form(&model.r, u))
        .sum();
    Ok(running + quad_form(&model.terminal, &states[horizon]))
}

/// Expected cost split into the initial-state, process-noise and
/// estimation-error contributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostReport {
    pub initial: f64,
    pub process_noise: f64,
    pub estimation: f64,
}

impl CostReport {
    pub fn total(&self) -> f64 {
        self.initial + self.process_noise + self.estimation
    }
}

/// `x_0^T S_0 x_0 + sum_k tr(S_{k+1} W) + sum_k e_k^T Gamma_k e_k`, with
/// `errors[k] = x_k - x_{k|k}[L+1]` for `k = 0..T`. The realized cost minus
/// this value is a zero-mean martingale term driven by the process noise.
pub fn theoretical_cost(schedule: &GainSchedule, x0: &DVector<f64>, model: &PlantModel, errors: &[DVector<f64>]) -> Result<CostReport> {
    if errors.len() != schedule.horizon {
        return Err(Error::IncompleteTrace(format!(
            "{} estimation errors for horizon {}",
            errors.len(),
            schedule.horizon
        )));
    }
    let process_noise = schedule.s[1..].iter().map(|s| (s * &model.w).trace()).sum();
    let estimation = errors.iter().zip(&schedule.gamma).map(|(e, g)| quad_form(g, e)).sum();
    Ok(CostReport {
        initial: quad_form(&schedule.s[0], x0),
        process_noise,
        estimation,
    })
}

/// Exported view of the gain schedule.
#[derive(Debug, Clone, Serialize)]
pub struct GainSummary {
    pub s0: Vec<Vec<f64>>,
    pub s_steady: Vec<Vec<f64>>,
    pub l0: Vec<Vec<f64>>,
    pub steady_residual: f64,
}

pub fn gain_summary(model: &PlantModel, schedule: &GainSchedule) -> Result<GainSummary> {
    let rows = |m: &DMatrix<f64>| m.row_iter().map(|r| r.iter().copied().collect()).collect();
    let s_steady = steady_state_riccati(model)?;
    Ok(GainSummary {
        s0: rows(&schedule.s[0]),
        steady_residual: riccati_residual(model, &s_steady)?,
        s_steady: rows(&s_steady),
        l0: rows(&schedule.gains[0]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar(a: f64, b: f64, q: f64, r: f64, terminal: f64) -> PlantModel {
        PlantModel::scalar(a, b, 1.0, 1.0, 1.0, 1.0, q, r, terminal)
    }

    #[test]
    fn terminal_condition() {
        let m = scalar(1.1, 1.0, 1.0, 1.0, 3.0);
        let g = riccati_backward(&m, 7).unwrap();
        assert_eq!(g.s[7][(0, 0)], 3.0);
        assert_eq!(g.s.len(), 8);
        assert_eq!(g.gains.len(), 7);
    }

    #[test]
    fn scalar_closed_form_step() {
        let m = scalar(1.0, 1.0, 1.0, 1.0, 1.0);
        let g = riccati_backward(&m, 1).unwrap();
        assert_relative_eq!(g.s[0][(0, 0)], 1.5);
        assert_relative_eq!(g.gains[0][(0, 0)], 0.5);
        assert_relative_eq!(g.gamma[0][(0, 0)], 0.5);
    }

    #[test]
    fn steady_state_scalar_golden_ratio() {
        // S = 1 + S - S^2 / (1 + S)  =>  S^2 - S - 1 = 0
        let m = scalar(1.0, 1.0, 1.0, 1.0, 1.0);
        let s = steady_state_riccati(&m).unwrap();
        assert_relative_eq!(s[(0, 0)], (1.0 + 5f64.sqrt()) / 2.0, epsilon = 1e-12);
        assert!(riccati_residual(&m, &s).unwrap() < 1e-12);
    }

    #[test]
    fn finite_horizon_converges_to_steady_state() {
        let mut m = scalar(1.0, 1.0, 1.0, 1.0, 1.0);
        m.a = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        m.b = DMatrix::from_row_slice(2, 1, &[0.005, 0.1]);
        m.q = DMatrix::identity(2, 2);
        m.terminal = DMatrix::identity(2, 2);
        let g = riccati_backward(&m, 2000).unwrap();
        let s = steady_state_riccati(&m).unwrap();
        assert!((&g.s[0] - &s).norm() / s.norm() < 1e-9);
    }

    #[test]
    fn gamma_holds_last_value_past_horizon() {
        let m = scalar(1.2, 1.0, 1.0, 1.0, 5.0);
        let g = riccati_backward(&m, 4).unwrap();
        assert_eq!(g.gamma_at(3), &g.gamma[3]);
        assert_eq!(g.gamma_at(9), &g.gamma[3]);
        assert!(g.gain(4).is_err());
    }

    #[test]
    fn zero_weights_give_zero_gain() {
        let m = scalar(1.0, 1.0, 0.0, 1.0, 0.0);
        let g = riccati_backward(&m, 3).unwrap();
        assert!(g.gains.iter().all(|l| l[(0, 0)] == 0.0));
    }

    #[test]
    fn control_action_sign() {
        let m = scalar(1.0, 1.0, 1.0, 1.0, 1.0);
        let g = riccati_backward(&m, 1).unwrap();
        let u = control_action(&g, 0, &DVector::from_element(1, 2.0)).unwrap();
        assert_relative_eq!(u[0], -1.0);
        assert!(control_action(&g, 0, &DVector::zeros(2)).is_err());
    }

    #[test]
    fn empirical_cost_by_hand() {
        let m = scalar(1.0, 1.0, 2.0, 3.0, 5.0);
        let xs = vec![DVector::from_element(1, 1.0), DVector::from_element(1, 2.0)];
        let us = vec![DVector::from_element(1, 1.0)];
        assert_relative_eq!(empirical_cost(&xs, &us, &m).unwrap(), 2.0 + 3.0 + 20.0);
        assert!(empirical_cost(&xs, &[], &m).is_err());
    }

    #[test]
    fn noiseless_perfect_information_cost_is_initial_term() {
        let mut m = scalar(1.3, 1.0, 1.0, 0.5, 2.0);
        m.w = DMatrix::zeros(1, 1);
        let g = riccati_backward(&m, 10).unwrap();
        let mut xs = vec![DVector::from_element(1, 0.7)];
        let mut us = Vec::new();
        for k in 0..10 {
            let u = control_action(&g, k, &xs[k]).unwrap();
            xs.push(&m.a * &xs[k] + &m.b * &u);
            us.push(u);
        }
        let zeros = vec![DVector::zeros(1); 10];
        let predicted = theoretical_cost(&g, &xs[0], &m, &zeros).unwrap();
        assert_relative_eq!(empirical_cost(&xs, &us, &m).unwrap(), predicted.total(), epsilon = 1e-12);
    }
}
