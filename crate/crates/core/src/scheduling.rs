//! Per-hop transmission policies, request-rate accounting and multiplier calibration.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::control::GainSchedule;
use crate::linalg::{matrix_power, quad_form};
use crate::model::PlantModel;
use crate::{Error, Result};

/// Shared multi-hop network: per-loop hop counts, per-hop delays, multipliers and budgets.
///
/// Per-hop vectors are indexed by `j - 1`. `delays` has `L_max + 1` entries
/// (decision makers), `lambda` and `budgets` have `L_max` (schedulers).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkTopology {
    pub loop_hops: Vec<usize>,
    pub delays: Vec<usize>,
    pub lambda: Vec<f64>,
    pub budgets: Vec<f64>,
    pub horizon: usize,
}

impl NetworkTopology {
    pub fn loops(&self) -> usize {
        self.loop_hops.len()
    }

    pub fn max_hops(&self) -> usize {
        self.loop_hops.iter().copied().max().unwrap_or(0)
    }

    pub fn has_unit_delays(&self) -> bool {
        self.delays.first() == Some(&0) && self.delays.iter().skip(1).all(|&d| d == 1)
    }

    pub fn validate(&self) -> Result<()> {
        let hops = self.max_hops();
        let mut issues = Vec::new();
        if self.loop_hops.is_empty() {
            issues.push("at least one loop required".to_string());
        }
        if self.loop_hops.contains(&0) {
            issues.push("every loop needs at least one hop".to_string());
        }
        if self.delays.len() != hops + 1 {
            issues.push(format!("expected {} delays, got {}", hops + 1, self.delays.len()));
        }
        if self.delays.first().is_some_and(|&d| d != 0) {
            issues.push("d[1] must be 0".to_string());
        }
        if self.delays.iter().skip(1).any(|&d| d == 0) {
            issues.push("d[j] must be at least 1 for j > 1".to_string());
        }
        if self.lambda.len() != hops {
            issues.push(format!("expected {hops} multipliers, got {}", self.lambda.len()));
        }
        if self.lambda.iter().any(|&l| l < 0.0 || !l.is_finite()) {
            issues.push("multipliers must be finite and nonnegative".to_string());
        }
        if self.budgets.len() != hops {
            issues.push(format!("expected {hops} rate budgets, got {}", self.budgets.len()));
        }
        if self.budgets.iter().any(|&r| r.is_nan() || r < 0.0) {
            issues.push("rate budgets must be nonnegative".to_string());
        }
        if self.budgets.windows(2).any(|w| w[1] > w[0]) {
            issues.push("rate budgets must be nonincreasing along the route".to_string());
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(issues.join("; ")))
        }
    }
}

/// `lambda - x~^T (A^h)^T Gamma_{k+h} A^h x~` with `h = L_i + 1 - j`.
///
/// Only valid for unit relay delays; the caller checks the topology.
pub fn dvoi_value(
    xtilde: &DVector<f64>,
    model: &PlantModel,
    gains: &GainSchedule,
    k: usize,
    hop: usize,
    loop_hops: usize,
    lambda: f64,
) -> Result<f64> {
    if hop == 0 || hop > loop_hops {
        return Err(Error::Config(format!("hop {hop} outside 1..={loop_hops}")));
    }
    if xtilde.len() != model.state_dim() {
        return Err(Error::dim("dvoi_value mismatch", model.state_dim(), xtilde.len()));
    }
    let lookahead = loop_hops + 1 - hop;
    Ok(dvoi_with_weight(xtilde, &model.a, gains.gamma_at(k + lookahead), lookahead, lambda))
}

/// `lambda - x~^T (A^h)^T G A^h x~` for an explicit weight `G`.
pub fn dvoi_with_weight(xtilde: &DVector<f64>, a: &DMatrix<f64>, weight: &DMatrix<f64>, lookahead: usize, lambda: f64) -> f64 {
    lambda - quad_form(weight, &(matrix_power(a, lookahead) * xtilde))
}

pub fn require_unit_delays(delays: &[usize]) -> Result<()> {
    if delays.first() == Some(&0) && delays.iter().skip(1).all(|&d| d == 1) {
        Ok(())
    } else {
        Err(Error::UnitDelayRequired("dVoI closed form requires unit delays"))
    }
}

/// Transmit iff the value is strictly negative and `k <= T - (L_i + 1 - j)`.
pub fn dvoi_decide(dvoi: f64, k: usize, hop: usize, loop_hops: usize, horizon: usize) -> bool {
    dvoi < 0.0 && within_cutoff(k, hop, loop_hops, horizon)
}

pub fn within_cutoff(k: usize, hop: usize, loop_hops: usize, horizon: usize) -> bool {
    k + (loop_hops + 1 - hop) <= horizon
}

/// Single-hop rule `x~^T A^T Gamma_{k+1} A x~ > lambda`.
pub fn threshold_single_hop(xtilde: &DVector<f64>, model: &PlantModel, gains: &GainSchedule, k: usize, lambda: f64) -> bool {
    quad_form(gains.gamma_at(k + 1), &(&model.a * xtilde)) > lambda
}

pub fn periodic_policy(k: usize, period: usize) -> bool {
    period > 0 && k.is_multiple_of(period)
}

/// Per-hop policy. Text form: `dvoi`, `threshold`, `periodic:p` (or `periodic(p)`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Policy {
    Dvoi,
    Periodic(usize),
    Threshold,
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::Dvoi => write!(f, "dvoi"),
            Policy::Periodic(p) => write!(f, "periodic:{p}"),
            Policy::Threshold => write!(f, "threshold"),
        }
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "dvoi" => return Ok(Policy::Dvoi),
            "threshold" => return Ok(Policy::Threshold),
            _ => {}
        }
        let period = s
            .strip_prefix("periodic:")
            .or_else(|| s.strip_prefix("periodic(").and_then(|r| r.strip_suffix(')')))
            .ok_or_else(|| Error::Config(format!("unknown policy '{s}'")))?;
        match period.trim().parse::<usize>() {
            Ok(p) if p >= 1 => Ok(Policy::Periodic(p)),
            _ => Err(Error::Config(format!("periodic policy needs a period >= 1, got '{period}'"))),
        }
    }
}

impl Serialize for Policy {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Policy {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Parses a comma-separated list; a single entry applies to every hop.
pub fn parse_policies(spec: &str, hops: usize) -> Result<Vec<Policy>> {
    let parsed: Vec<Policy> = spec.split(',').map(str::parse).collect::<Result<_>>()?;
    match parsed.len() {
        1 => Ok(vec![parsed[0]; hops]),
        n if n == hops => Ok(parsed),
        n => Err(Error::Config(format!("{n} policies given for {hops} hops"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchedulerDecisionRecord {
    pub k: usize,
    pub loop_index: usize,
    pub hop: usize,
    pub dvoi: f64,
    pub delta: bool,
    pub xtilde_used: DVector<f64>,
}

/// Transmission counts summed over episodes, `counts[loop][hop - 1]`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RateAccumulator {
    pub counts: Vec<Vec<u64>>,
    pub episodes: u64,
}

impl RateAccumulator {
    pub fn new(loop_hops: &[usize]) -> Self {
        RateAccumulator {
            counts: loop_hops.iter().map(|&h| vec![0; h]).collect(),
            episodes: 0,
        }
    }

    pub fn record_episode(&mut self, counts: &[Vec<u64>]) {
        if self.counts.is_empty() {
            self.counts = counts.iter().map(|c| vec![0; c.len()]).collect();
        }
        for (acc, c) in self.counts.iter_mut().zip(counts) {
            for (a, b) in acc.iter_mut().zip(c) {
                *a += b;
            }
        }
        self.episodes += 1;
    }

    pub fn merge(mut self, other: &RateAccumulator) -> RateAccumulator {
        if self.counts.is_empty() {
            return other.clone();
        }
        for (acc, c) in self.counts.iter_mut().zip(&other.counts) {
            for (a, b) in acc.iter_mut().zip(c) {
                *a += b;
            }
        }
        self.episodes += other.episodes;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    /// Mean transmissions per episode, `per_loop_hop[loop][hop - 1]`.
    pub per_loop_hop: Vec<Vec<f64>>,
    /// Sum over loops, per hop.
    pub per_hop: Vec<f64>,
    /// 1-based hops whose total rate exceeds the budget.
    pub violations: Vec<usize>,
}

pub fn request_rate(acc: &RateAccumulator, budgets: &[f64]) -> RateReport {
    let episodes = acc.episodes.max(1) as f64;
    let per_loop_hop: Vec<Vec<f64>> = acc
        .counts
        .iter()
        .map(|c| c.iter().map(|&n| n as f64 / episodes).collect())
        .collect();
    let hops = per_loop_hop.iter().map(Vec::len).max().unwrap_or(0).max(budgets.len());
    let per_hop: Vec<f64> = (0..hops)
        .map(|j| per_loop_hop.iter().filter_map(|r| r.get(j)).sum())
        .collect();
    let violations = per_hop
        .iter()
        .enumerate()
        .filter(|&(j, &r)| budgets.get(j).is_some_and(|&b| r > b))
        .map(|(j, _)| j + 1)
        .collect();
    RateReport {
        per_loop_hop,
        per_hop,
        violations,
    }
}

/// Bisection on a multiplier so that `rate_at(lambda)` lands within 5% of
/// `target`. `rate_at` is assumed nonincreasing in `lambda`. Returns the
/// higher-multiplier end of the final bracket if 30 iterations do not suffice.
pub fn calibrate_lambda(mut rate_at: impl FnMut(f64) -> Result<f64>, target: f64, bounds: (f64, f64)) -> Result<f64> {
    let (mut lo, mut hi) = bounds;
    if !(lo >= 0.0 && hi > lo) {
        return Err(Error::Config(format!("invalid multiplier bounds [{lo}, {hi}]")));
    }
    let within = |r: f64| (r - target).abs() <= 0.05 * target.abs();
    let rate_hi = rate_at(hi)?;
    if within(rate_hi) {
        return Ok(hi);
    }
    let rate_lo = rate_at(lo)?;
    if within(rate_lo) {
        return Ok(lo);
    }
    if target > rate_lo || target < rate_hi {
        return Err(Error::Unreachable {
            target,
            low: rate_hi,
            high: rate_lo,
            lambda_low: lo,
            lambda_high: hi,
        });
    }
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        let rate = rate_at(mid)?;
        if within(rate) {
            return Ok(mid);
        }
        if rate > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}
