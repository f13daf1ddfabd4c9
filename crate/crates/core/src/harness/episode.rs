use nalgebra::{DMatrix, DVector};

use crate::control::{control_action, riccati_backward, theoretical_cost, CostReport, GainSchedule};
use crate::estimation::{cascade_step, kalman_step, mismatch_direct, AoiTracker, HopEstimate, KalmanState};
use crate::linalg::{matrix_power, quad_form};
use crate::model::{sample_gaussian, stream_id, NoiseKind, NoiseSource, PlantModel, PlantNoise};
use crate::scheduling::{dvoi_decide, dvoi_value, periodic_policy, threshold_single_hop, Policy};
use crate::unknown_input::{estimate_unknown_inputs, filter_through_window, AckLedger, InputEstimatorWeights};
use crate::{Error, Result};

use super::scenario::{InitialState, InputMode, ScenarioConfig};

/// One noise realization for a loop: `x0`, `w_0..w_{T-1}`, `v_0..v_{T-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopNoise {
    pub x0: DVector<f64>,
    pub process: Vec<DVector<f64>>,
    pub measurement: Vec<DVector<f64>>,
}

impl LoopNoise {
    pub fn draw(model: &PlantModel, initial: &InitialState, seed: u64, loop_index: usize, horizon: usize) -> Result<Self> {
        let x0 = match initial {
            InitialState::Deterministic { states } => DVector::from_row_slice(&states[loop_index]),
            InitialState::Sampled => {
                let mut source = NoiseSource::new(seed, stream_id(loop_index, NoiseKind::Initial));
                sample_gaussian(&model.omega0, &mut source)?
            }
        };
        let mut noise = PlantNoise::new(model, seed, loop_index)?;
        let process = (0..horizon).map(|_| noise.draw_process()).collect();
        let measurement = (0..horizon).map(|_| noise.draw_measurement()).collect();
        Ok(LoopNoise { x0, process, measurement })
    }
}

/// Everything recorded for one loop at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub u: DVector<f64>,
    /// Gain-weighted innovation of the sensor-side filter.
    pub zeta: DVector<f64>,
    /// Exact Kalman estimate `x_{k|k}`; differs from `xhat[0]` only when inputs are estimated.
    pub kalman: DVector<f64>,
    /// Estimates held by decision makers `1..=L+1`.
    pub xhat: Vec<DVector<f64>>,
    pub aoi: Vec<usize>,
    pub raoi: Vec<usize>,
    pub xtilde: Vec<DVector<f64>>,
    /// NaN where the closed form does not apply (non-unit delays).
    pub dvoi: Vec<f64>,
    pub delta: Vec<bool>,
    pub stage_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopTrace {
    pub loop_index: usize,
    pub hops: usize,
    pub steps: Vec<StepRecord>,
    pub x_final: DVector<f64>,
    pub terminal_cost: f64,
}

impl LoopTrace {
    pub fn cost(&self) -> f64 {
        self.steps.iter().map(|s| s.stage_cost).sum::<f64>() + self.terminal_cost
    }

    /// Transmissions per hop over the episode.
    pub fn trigger_counts(&self) -> Vec<u64> {
        (0..self.hops)
            .map(|j| self.steps.iter().filter(|s| s.delta[j]).count() as u64)
            .collect()
    }

    /// `x_k - x_{k|k}[L+1]` for every step.
    pub fn controller_errors(&self) -> Vec<DVector<f64>> {
        self.steps.iter().map(|s| &s.x - &s.xhat[self.hops]).collect()
    }

    pub fn states(&self) -> Vec<DVector<f64>> {
        let mut xs: Vec<DVector<f64>> = self.steps.iter().map(|s| s.x.clone()).collect();
        xs.push(self.x_final.clone());
        xs
    }

    pub fn inputs(&self) -> Vec<DVector<f64>> {
        self.steps.iter().map(|s| s.u.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub seed: u64,
    pub horizon: usize,
    pub loops: Vec<LoopTrace>,
}

impl SimulationTrace {
    pub fn cost(&self) -> f64 {
        self.loops.iter().map(LoopTrace::cost).sum()
    }
}

/// Scenario with its gain schedules computed once; shared read-only across runs.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub config: ScenarioConfig,
    pub gains: Vec<GainSchedule>,
}

impl Simulator {
    pub fn new(config: &ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let horizon = config.horizon();
        let gains = config
            .plants
            .iter()
            .map(|p| {
                if horizon == 0 {
                    Ok(GainSchedule {
                        horizon: 0,
                        s: vec![p.terminal.clone()],
                        gains: Vec::new(),
                        gamma: Vec::new(),
                    })
                } else {
                    riccati_backward(p, horizon)
                }
            })
            .collect::<Result<_>>()?;
        Ok(Simulator {
            config: config.clone(),
            gains,
        })
    }

    pub fn draw_noise(&self, seed: u64) -> Result<Vec<LoopNoise>> {
        let c = &self.config;
        c.plants
            .iter()
            .enumerate()
            .map(|(i, p)| LoopNoise::draw(p, &c.initial_state, seed, i, c.horizon()))
            .collect()
    }

    pub fn episode(&self, seed: u64) -> Result<SimulationTrace> {
        let noise = self.draw_noise(seed)?;
        self.episode_with_noise(seed, &noise)
    }

    pub fn episode_with_noise(&self, seed: u64, noise: &[LoopNoise]) -> Result<SimulationTrace> {
        if noise.len() != self.config.plants.len() {
            return Err(Error::dim("noise realizations", self.config.plants.len(), noise.len()));
        }
        let loops = (0..noise.len())
            .map(|i| self.run_loop(i, &noise[i]))
            .collect::<Result<_>>()?;
        Ok(SimulationTrace {
            seed,
            horizon: self.config.horizon(),
            loops,
        })
    }

    /// Predicted cost terms for one simulated loop.
    pub fn predicted_cost(&self, trace: &LoopTrace) -> Result<CostReport> {
        let model = &self.config.plants[trace.loop_index];
        let x0 = trace.steps.first().map_or(&trace.x_final, |s| &s.x);
        theoretical_cost(&self.gains[trace.loop_index], x0, model, &trace.controller_errors())
    }

    fn run_loop(&self, loop_index: usize, noise: &LoopNoise) -> Result<LoopTrace> {
        let cfg = &self.config;
        let model = &cfg.plants[loop_index];
        let gains = &self.gains[loop_index];
        let horizon = cfg.horizon();
        let hops = cfg.topology.loop_hops[loop_index];
        let delays = &cfg.topology.delays[..=hops];
        let unit_delays = cfg.topology.has_unit_delays();
        let (n, p) = (model.state_dim(), model.input_dim());
        if noise.x0.len() != n || noise.process.len() < horizon || noise.measurement.len() < horizon {
            return Err(Error::IncompleteTrace(format!("noise realization shorter than horizon {horizon}")));
        }
        let weights = InputEstimatorWeights::scaled(model, cfg.estimator_weights, hops - 1);
        let max_lag = delays.iter().copied().max().unwrap_or(0).max(hops);
        let powers: Vec<DMatrix<f64>> = (0..=max_lag).map(|d| matrix_power(&model.a, d)).collect();

        let mut x = noise.x0.clone();
        let mut kalman = KalmanState::prior(model);
        let mut filtered: Vec<DVector<f64>> = Vec::with_capacity(horizon);
        let mut kalman_gains: Vec<DMatrix<f64>> = Vec::with_capacity(horizon);
        let mut ys: Vec<DVector<f64>> = Vec::with_capacity(horizon);
        let mut inputs: Vec<DVector<f64>> = Vec::with_capacity(horizon);
        // held[j][t]: estimate of decision maker j + 1 at time t
        let mut held: Vec<Vec<DVector<f64>>> = vec![Vec::with_capacity(horizon); hops + 1];
        let mut decisions: Vec<Vec<bool>> = vec![Vec::with_capacity(horizon); hops];
        let mut relays: Vec<HopEstimate> = (2..=hops + 1).map(|j| HopEstimate::initial(j, n)).collect();
        let mut aoi = AoiTracker::new(delays)?;
        let mut ledger = AckLedger::new(hops);
        let mut steps = Vec::with_capacity(horizon);
        let u_zero = DVector::zeros(p);

        for k in 0..horizon {
            let y = &model.c * &x + &noise.measurement[k];
            let u_prev = inputs.last().unwrap_or(&u_zero);
            kalman = kalman_step(&kalman, u_prev, &y, model)?;
            filtered.push(kalman.x_filt.clone());
            kalman_gains.push(kalman.gain.clone());
            ys.push(y.clone());

            let first = match cfg.input_mode {
                InputMode::Oracle => kalman.x_filt.clone(),
                InputMode::Estimated => {
                    let start = ledger.latest_known_input(1, k).map_or(0, |t| t + 1).min(k);
                    let u_hat = estimate_unknown_inputs(
                        &filtered[start],
                        &kalman_gains[start + 1..=k],
                        &ys[start + 1..=k],
                        &weights,
                        model,
                    )?;
                    let estimate = filter_through_window(&filtered[start], &kalman_gains[start + 1..=k], &ys[start + 1..=k], &u_hat, model);
                    // forwarded control-free; downstream re-adds the applied inputs
                    (start..k).fold(estimate, |acc, t| {
                        acc + &powers[k - 1 - t] * &model.b * (&inputs[t] - &u_hat[t - start])
                    })
                }
            };
            held[0].push(first);

            let mut received = vec![false; hops + 1];
            for j in 1..=hops {
                let d = delays[j];
                let packet = (k >= d && decisions[j - 1][k - d]).then(|| {
                    received[j] = true;
                    (k - d..k).fold(&powers[d] * &held[j - 1][k - d], |acc, t| {
                        acc + &powers[k - 1 - t] * &model.b * &inputs[t]
                    })
                });
                if k > 0 {
                    relays[j - 1] = cascade_step(&relays[j - 1], packet.as_ref(), &inputs[k - 1], model);
                }
                held[j].push(relays[j - 1].x_filt.clone());
            }
            aoi.step(&received)?;

            let xhat: Vec<DVector<f64>> = held.iter().map(|h| h[k].clone()).collect();
            let mismatch = mismatch_direct(&xhat);
            let mut dvoi = vec![f64::NAN; hops];
            let mut delta = vec![false; hops];
            for j in 1..=hops {
                let lambda = cfg.topology.lambda[j - 1];
                let xt = &mismatch.xtilde[j - 1];
                if unit_delays {
                    dvoi[j - 1] = dvoi_value(xt, model, gains, k, j, hops, lambda)?;
                }
                delta[j - 1] = match cfg.policies[j - 1] {
                    Policy::Dvoi => dvoi_decide(dvoi[j - 1], k, j, hops, horizon),
                    Policy::Periodic(period) => periodic_policy(k, period),
                    Policy::Threshold => threshold_single_hop(xt, model, gains, k, lambda),
                };
                decisions[j - 1].push(delta[j - 1]);
            }
            ledger.push(&delta)?;

            let u = control_action(gains, k, &xhat[hops])?;
            let stage_cost = quad_form(&model.q, &x) + quad_form(&model.r, &u);
            let x_next = &model.a * &x + &model.b * &u + &noise.process[k];
            steps.push(StepRecord {
                k,
                x: std::mem::replace(&mut x, x_next),
                y,
                u: u.clone(),
                zeta: kalman.innovation.clone(),
                kalman: kalman.x_filt.clone(),
                xhat,
                aoi: aoi.delta.clone(),
                raoi: aoi.rel_delta.clone(),
                xtilde: mismatch.xtilde,
                dvoi,
                delta,
                stage_cost,
            });
            inputs.push(u);
        }
        Ok(LoopTrace {
            loop_index,
            hops,
            terminal_cost: quad_form(&model.terminal, &x),
            x_final: x,
            steps,
        })
    }
}

pub fn run_episode(config: &ScenarioConfig, seed: u64) -> Result<SimulationTrace> {
    Simulator::new(config)?.episode(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::scenario::pendulum_scenario;

    #[test]
    fn zero_horizon_gives_empty_trace() {
        let mut s = pendulum_scenario();
        s.topology.horizon = 0;
        let trace = run_episode(&s, 1).unwrap();
        assert!(trace.loops[0].steps.is_empty());
    }

    #[test]
    fn always_transmit_controller_age_equals_hop_count() {
        let s = pendulum_scenario().with_policies(vec![Policy::Periodic(1); 2]);
        let trace = run_episode(&s, 3).unwrap();
        let steps = &trace.loops[0].steps;
        assert_eq!(steps[0].aoi, vec![0, 0, 0]);
        assert_eq!(steps[1].aoi, vec![0, 1, 1]);
        for step in &steps[2..] {
            assert_eq!(step.aoi, vec![0, 1, 2]);
        }
        assert_eq!(trace.loops[0].trigger_counts(), vec![200, 200]);
    }

    #[test]
    fn pendulum_records_every_field() {
        let trace = run_episode(&pendulum_scenario(), 11).unwrap();
        let lt = &trace.loops[0];
        assert_eq!(lt.steps.len(), 200);
        let s = &lt.steps[50];
        assert_eq!((s.x.len(), s.y.len(), s.u.len()), (4, 2, 1));
        assert_eq!((s.xhat.len(), s.aoi.len(), s.raoi.len(), s.xtilde.len(), s.dvoi.len()), (3, 3, 2, 2, 2));
        assert!(lt.cost().is_finite());
    }
}
