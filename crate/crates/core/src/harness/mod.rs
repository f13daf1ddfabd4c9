//! Episode orchestration, Monte Carlo evaluation, scenario files and exports.

pub mod episode;
pub mod export;
pub mod monte_carlo;
pub mod scenario;

pub use episode::{run_episode, LoopNoise, LoopTrace, SimulationTrace, Simulator, StepRecord};
pub use export::{export_json, export_summary, export_trace, read_table, trace_table, write_table, TraceTable};
pub use monte_carlo::{
    calibrate_hop_lambda, compare_policies, monte_carlo, ComparisonReport, EpisodeSummary, SummaryMetrics, Verdict,
};
pub use scenario::{pendulum_model, pendulum_scenario, InitialState, InputMode, ScenarioConfig};
