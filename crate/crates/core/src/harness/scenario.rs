use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::model::{discretize_continuous, PlantModel};
use crate::scheduling::{require_unit_delays, NetworkTopology, Policy};
use crate::unknown_input::WeightScales;
use crate::{Error, Result};

/// Whether schedulers know the applied control history or reconstruct the
/// most recent inputs from measurements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputMode {
    #[default]
    Oracle,
    Estimated,
}

impl fmt::Display for InputMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InputMode::Oracle => "oracle",
            InputMode::Estimated => "estimated",
        })
    }
}

impl FromStr for InputMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "oracle" => Ok(InputMode::Oracle),
            "estimated" => Ok(InputMode::Estimated),
            other => Err(Error::Config(format!("unknown input mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InitialState {
    /// One fixed initial state per loop.
    Deterministic { states: Vec<Vec<f64>> },
    /// `x_0 ~ N(0, Omega0)` per loop and episode.
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub notes: String,
    pub plants: Vec<PlantModel>,
    pub topology: NetworkTopology,
    /// One policy per hop, shared by every loop routed through that hop.
    pub policies: Vec<Policy>,
    #[serde(default)]
    pub input_mode: InputMode,
    pub initial_state: InitialState,
    #[serde(default)]
    pub estimator_weights: WeightScales,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_runs")]
    pub runs: usize,
}

fn default_runs() -> usize {
    100
}

impl ScenarioConfig {
    pub fn horizon(&self) -> usize {
        self.topology.horizon
    }

    pub fn validate(&self) -> Result<()> {
        self.topology.validate()?;
        if self.plants.len() != self.topology.loops() {
            return Err(Error::Config(format!(
                "{} plants for {} loops",
                self.plants.len(),
                self.topology.loops()
            )));
        }
        for (i, plant) in self.plants.iter().enumerate() {
            let report = plant.validate();
            if !report.is_empty() {
                return Err(Error::InvalidModel(report.issues.iter().map(|s| format!("loop {i}: {s}")).collect()));
            }
        }
        let hops = self.topology.max_hops();
        if self.policies.len() != hops {
            return Err(Error::Config(format!("{} policies for {hops} hops", self.policies.len())));
        }
        if self.policies.contains(&Policy::Dvoi) {
            require_unit_delays(&self.topology.delays)?;
        }
        if let Some(j) = self.policies.iter().position(|p| *p == Policy::Threshold) {
            if j != 0 || self.topology.loop_hops.iter().any(|&l| l != 1) {
                return Err(Error::Config("threshold policy applies to single-hop loops only".into()));
            }
        }
        if let InitialState::Deterministic { states } = &self.initial_state {
            if states.len() != self.plants.len() {
                return Err(Error::Config(format!("{} initial states for {} loops", states.len(), self.plants.len())));
            }
            for (x0, plant) in states.iter().zip(&self.plants) {
                if x0.len() != plant.state_dim() {
                    return Err(Error::dim("initial state", plant.state_dim(), x0.len()));
                }
            }
        }
        if !(self.estimator_weights.qe > 0.0 && self.estimator_weights.re > 0.0) {
            return Err(Error::Config("input estimator weights must be positive".into()));
        }
        Ok(())
    }

    pub fn with_policies(&self, policies: Vec<Policy>) -> Self {
        ScenarioConfig { policies, ..self.clone() }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: ScenarioConfig = serde_json::from_str(text).map_err(|source| Error::Json {
            path: "<inline>".into(),
            source,
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config: ScenarioConfig = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

pub const PENDULUM_NOTES: &str = "Cart-pole linearized about the upright equilibrium. \
State (position, velocity, pitch angle, pitch rate), input horizontal force. \
With p = I(M+m) + M m l^2: \
Ac = [[0,1,0,0],[0,-(I+m l^2) b/p, m^2 g l^2/p, 0],[0,0,0,1],[0,-m l b/p, m g l (M+m)/p, 0]], \
Bc = [0, (I+m l^2)/p, 0, m l/p]^T, with I = 6e-3, m = 0.2, l = 0.6, g = 9.81, M = 0.5, b = 0.1. \
Discretized by zero-order hold at dt = 0.01. C selects position and pitch angle. \
x0 is fixed at [0,0,0.2,0] while the filter prior uses Omega0 = W.";

/// Continuous-time cart-pole linearization `(Ac, Bc)`.
pub fn pendulum_continuous() -> (DMatrix<f64>, DMatrix<f64>) {
    let (inertia, m, l, g, cart, b) = (6e-3, 0.2, 0.6, 9.81, 0.5, 0.1);
    let p = inertia * (cart + m) + cart * m * l * l;
    let ac = DMatrix::from_row_slice(
        4,
        4,
        &[
            0.0, 1.0, 0.0, 0.0,
            0.0, -(inertia + m * l * l) * b / p, m * m * g * l * l / p, 0.0,
            0.0, 0.0, 0.0, 1.0,
            0.0, -m * l * b / p, m * g * l * (cart + m) / p, 0.0,
        ],
    );
    let bc = DMatrix::from_column_slice(4, 1, &[0.0, (inertia + m * l * l) / p, 0.0, m * l / p]);
    (ac, bc)
}

pub fn pendulum_model() -> PlantModel {
    let (ac, bc) = pendulum_continuous();
    let (a, b) = discretize_continuous(&ac, &bc, 0.01).expect("positive sampling interval");
    let w = DMatrix::from_row_slice(
        4,
        4,
        &[6.0, 3.0, 1.0, 6.0, 3.0, 8.0, 3.0, 4.0, 1.0, 3.0, 7.0, 6.0, 6.0, 4.0, 6.0, 31.0],
    ) / 1e4;
    let q = DMatrix::from_diagonal(&DVector::from_row_slice(&[1.0, 1.0, 1000.0, 1.0]));
    PlantModel {
        a,
        b,
        c: DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]),
        v: DMatrix::from_diagonal(&DVector::from_row_slice(&[2.0, 1.0])) / 1e3,
        omega0: w.clone(),
        w,
        terminal: q.clone(),
        q,
        r: DMatrix::identity(1, 1),
    }
}

/// Single inverted pendulum controlled over two relay hops.
pub fn pendulum_scenario() -> ScenarioConfig {
    ScenarioConfig {
        name: "pendulum".into(),
        notes: PENDULUM_NOTES.into(),
        plants: vec![pendulum_model()],
        topology: NetworkTopology {
            loop_hops: vec![2],
            delays: vec![0, 1, 1],
            lambda: vec![15.0, 30.0],
            budgets: vec![200.0, 200.0],
            horizon: 200,
        },
        policies: vec![Policy::Dvoi; 2],
        input_mode: InputMode::Oracle,
        initial_state: InitialState::Deterministic {
            states: vec![vec![0.0, 0.0, 0.2, 0.0]],
        },
        estimator_weights: WeightScales::default(),
        seed: 0,
        runs: 500,
    }
}
