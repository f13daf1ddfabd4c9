//! Joint control and scheduling for feedback loops closed over shared
//! multi-hop networks.
//!
//! Each loop runs a Kalman filter at the sensor-side scheduler, a cascade of
//! relay estimators along the network path, and a certainty-equivalence LQR
//! controller at the far end. Every relay decides per step whether to forward
//! its estimate using the distributed value of information (dVoI): a
//! transmission cost `lambda[j]` minus the controller cost that forwarding the
//! current mismatch would avoid.
//!
//! Module map:
//! - [`model`]: plant models, validation, seeded noise, ZOH discretization
//! - [`estimation`]: Kalman filter, relay cascade, age of information, mismatch errors
//! - [`control`]: backward Riccati synthesis and cost evaluation
//! - [`scheduling`]: dVoI, baseline policies, request rates, multiplier calibration
//! - [`unknown_input`]: recent-input reconstruction when schedulers lag the controller
//! - [`harness`]: episodes, Monte Carlo, policy comparison, scenario files, export

pub mod control;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod scheduling;
pub mod unknown_input;

pub use error::{Error, Result};
pub use nalgebra::{DMatrix, DVector};
