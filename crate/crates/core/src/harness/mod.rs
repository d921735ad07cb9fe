//! Scenario generation, Monte Carlo evaluation, the solver convergence sweep,
//! rollout traces and configuration.

pub mod cases;
pub mod config;
pub mod metrics;
pub mod montecarlo;
pub mod multi_team;
pub mod scenario;
pub mod sweep;
pub mod trace;

pub use config::{CertificateParams, HarnessConfig, MethodConfig, MonteCarloParams, MultiTeamParams, ScenarioParams, SweepParams};
pub use metrics::{classify_inferences, rollout_metrics, Classification, MeanStd, MetricsReport, RolloutMetrics};
pub use montecarlo::{run_certification, run_monte_carlo, run_rollout, write_monte_carlo_csv, THREADS_ENV};
pub use multi_team::{run_crossing, MultiTeamReport};
pub use scenario::{generate_scenario, ScenarioSpec};
pub use sweep::{find_sweep_case, newton_region_sweep, write_sweep_csv, Outcome, SweepCase, SweepCell, SweepReport};
pub use trace::write_trace;
