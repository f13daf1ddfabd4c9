use rayon::prelude::*;
use serde::Serialize;

use crate::scheduling::{calibrate_lambda, request_rate, Policy, RateAccumulator, RateReport};
use crate::{Error, Result};

use super::episode::{SimulationTrace, Simulator};
use super::scenario::ScenarioConfig;

/// Per-episode scalars retained after the trace is dropped.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeSummary {
    pub seed: u64,
    /// Realized quadratic cost summed over loops.
    pub cost: f64,
    /// Cost plus the multiplier charge for every transmission.
    pub augmented_cost: f64,
    /// Predicted cost (initial, process-noise and estimation terms) summed over loops.
    pub predicted_cost: f64,
    pub counts: Vec<Vec<u64>>,
}

impl EpisodeSummary {
    pub fn from_trace(sim: &Simulator, trace: &SimulationTrace) -> Result<Self> {
        let counts: Vec<Vec<u64>> = trace.loops.iter().map(|l| l.trigger_counts()).collect();
        let lambda = &sim.config.topology.lambda;
        let charge: f64 = counts
            .iter()
            .flat_map(|c| c.iter().enumerate().map(|(j, &n)| lambda[j] * n as f64))
            .sum();
        let predicted_cost = trace
            .loops
            .iter()
            .map(|l| sim.predicted_cost(l).map(|r| r.total()))
            .sum::<Result<f64>>()?;
        let cost = trace.cost();
        Ok(EpisodeSummary {
            seed: trace.seed,
            cost,
            augmented_cost: cost + charge,
            predicted_cost,
            counts,
        })
    }
}

/// Sample mean and 95% normal-approximation interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std: f64,
    pub ci95: [f64; 2],
}

pub fn estimate(samples: &[f64]) -> Estimate {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = if samples.len() > 1 {
        samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let std = var.sqrt();
    let half = 1.96 * std / n.sqrt();
    Estimate {
        mean,
        std,
        ci95: [mean - half, mean + half],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryMetrics {
    pub runs: usize,
    pub policies: Vec<Policy>,
    pub input_mode: String,
    pub mean_cost: f64,
    pub ci95: [f64; 2],
    pub augmented_cost: f64,
    pub augmented_ci95: [f64; 2],
    pub predicted_cost: f64,
    pub rates: RateReport,
    pub violations: Vec<usize>,
    /// Mean transmissions per episode, `[loop][hop - 1]`.
    pub trigger_counts: Vec<Vec<f64>>,
    pub seeds: Vec<u64>,
    #[serde(skip)]
    pub episodes: Vec<EpisodeSummary>,
}

/// Runs episodes with seeds `base_seed..base_seed + runs` in parallel.
/// Results are collected in seed order, so output is independent of thread scheduling.
pub fn run_episodes(sim: &Simulator, runs: usize, base_seed: u64) -> Result<Vec<EpisodeSummary>> {
    (0..runs as u64)
        .into_par_iter()
        .map(|r| {
            let seed = base_seed.wrapping_add(r);
            EpisodeSummary::from_trace(sim, &sim.episode(seed)?)
        })
        .collect()
}

pub fn summarize(sim: &Simulator, episodes: Vec<EpisodeSummary>) -> SummaryMetrics {
    let config = &sim.config;
    let acc = episodes
        .iter()
        .map(|e| {
            let mut a = RateAccumulator::new(&config.topology.loop_hops);
            a.record_episode(&e.counts);
            a
        })
        .reduce(|a, b| a.merge(&b))
        .unwrap_or_else(|| RateAccumulator::new(&config.topology.loop_hops));
    let rates = request_rate(&acc, &config.topology.budgets);
    let costs: Vec<f64> = episodes.iter().map(|e| e.cost).collect();
    let augmented: Vec<f64> = episodes.iter().map(|e| e.augmented_cost).collect();
    let cost = estimate(&costs);
    let aug = estimate(&augmented);
    SummaryMetrics {
        runs: episodes.len(),
        policies: config.policies.clone(),
        input_mode: config.input_mode.to_string(),
        mean_cost: cost.mean,
        ci95: cost.ci95,
        augmented_cost: aug.mean,
        augmented_ci95: aug.ci95,
        predicted_cost: episodes.iter().map(|e| e.predicted_cost).sum::<f64>() / episodes.len() as f64,
        violations: rates.violations.clone(),
        trigger_counts: rates.per_loop_hop.clone(),
        rates,
        seeds: episodes.iter().map(|e| e.seed).collect(),
        episodes,
    }
}

pub fn monte_carlo(config: &ScenarioConfig, runs: usize, base_seed: u64) -> Result<SummaryMetrics> {
    if runs < 2 {
        return Err(Error::Config(format!("Monte Carlo needs at least 2 runs, got {runs}")));
    }
    let sim = Simulator::new(config)?;
    let episodes = run_episodes(&sim, runs, base_seed)?;
    Ok(summarize(&sim, episodes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Upper confidence bound of `a - b` is at most zero.
    FirstNotWorse,
    /// Lower confidence bound of `a - b` is at least zero.
    SecondNotWorse,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub policy_a: Vec<Policy>,
    pub policy_b: Vec<Policy>,
    pub runs: usize,
    pub augmented_a: f64,
    pub augmented_b: f64,
    /// Paired difference `a - b` of the augmented cost.
    pub mean_difference: f64,
    pub ci95: [f64; 2],
    pub verdict: Verdict,
    pub summary_a: SummaryMetrics,
    pub summary_b: SummaryMetrics,
}

impl ComparisonReport {
    pub fn verdict_text(&self) -> String {
        let name = |p: &[Policy]| p.iter().map(Policy::to_string).collect::<Vec<_>>().join(",");
        match self.verdict {
            Verdict::FirstNotWorse => format!("{} <= {}", name(&self.policy_a), name(&self.policy_b)),
            Verdict::SecondNotWorse => format!("{} <= {}", name(&self.policy_b), name(&self.policy_a)),
            Verdict::Inconclusive => "inconclusive".into(),
        }
    }
}

/// Paired comparison on shared seeds.
pub fn compare_policies(config: &ScenarioConfig, a: &[Policy], b: &[Policy], runs: usize, base_seed: u64) -> Result<ComparisonReport> {
    if runs < 2 {
        return Err(Error::Config(format!("comparison needs at least 2 runs, got {runs}")));
    }
    let sim_a = Simulator::new(&config.with_policies(a.to_vec()))?;
    let sim_b = Simulator::new(&config.with_policies(b.to_vec()))?;
    let summary_a = summarize(&sim_a, run_episodes(&sim_a, runs, base_seed)?);
    let summary_b = summarize(&sim_b, run_episodes(&sim_b, runs, base_seed)?);
    let diffs: Vec<f64> = summary_a
        .episodes
        .iter()
        .zip(&summary_b.episodes)
        .map(|(ea, eb)| ea.augmented_cost - eb.augmented_cost)
        .collect();
    let diff = estimate(&diffs);
    let verdict = if diff.ci95[1] <= 0.0 {
        Verdict::FirstNotWorse
    } else if diff.ci95[0] >= 0.0 {
        Verdict::SecondNotWorse
    } else {
        Verdict::Inconclusive
    };
    Ok(ComparisonReport {
        policy_a: a.to_vec(),
        policy_b: b.to_vec(),
        runs,
        augmented_a: summary_a.augmented_cost,
        augmented_b: summary_b.augmented_cost,
        mean_difference: diff.mean,
        ci95: diff.ci95,
        verdict,
        summary_a,
        summary_b,
    })
}

/// Calibrates the multiplier of `hop` (1-based) against the total request
/// rate at that hop, probing with common seeds.
pub fn calibrate_hop_lambda(config: &ScenarioConfig, hop: usize, target: f64, bounds: (f64, f64), runs: usize) -> Result<f64> {
    if hop == 0 || hop > config.topology.max_hops() {
        return Err(Error::Config(format!("hop {hop} outside 1..={}", config.topology.max_hops())));
    }
    let rate_at = |lambda: f64| -> Result<f64> {
        let mut probe = config.clone();
        probe.topology.lambda[hop - 1] = lambda;
        let sim = Simulator::new(&probe)?;
        let summary = summarize(&sim, run_episodes(&sim, runs.max(1), config.seed)?);
        Ok(summary.rates.per_hop[hop - 1])
    };
    calibrate_lambda(rate_at, target, bounds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::scenario::pendulum_scenario;

    #[test]
    fn estimate_of_constant_samples() {
        let e = estimate(&[2.0, 2.0, 2.0]);
        assert_eq!(e.mean, 2.0);
        assert_eq!(e.ci95, [2.0, 2.0]);
    }

    #[test]
    fn identical_policies_compare_equal() {
        let mut s = pendulum_scenario();
        s.topology.horizon = 30;
        let report = compare_policies(&s, &[Policy::Dvoi; 2], &[Policy::Dvoi; 2], 4, 9).unwrap();
        assert_eq!(report.mean_difference, 0.0);
        assert_eq!(report.ci95, [0.0, 0.0]);
    }

    #[test]
    fn always_transmit_rates_are_exact() {
        let mut s = pendulum_scenario().with_policies(vec![Policy::Periodic(1); 2]);
        s.topology.horizon = 40;
        let m = monte_carlo(&s, 5, 0).unwrap();
        assert_eq!(m.rates.per_hop, vec![40.0, 40.0]);
        assert_eq!(m.seeds, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn single_run_rejected() {
        assert!(monte_carlo(&pendulum_scenario(), 1, 0).is_err());
    }
}
