//! Rollout metrics.
//!
//! * collisions: entries of an agent into a true obstacle disk (`‖s − θ‖ < r`),
//!   counted once per transition from outside to inside;
//! * ghosts: inferred entries that match no true obstacle, counted per learner;
//! * error: distance from a matched inference to its obstacle, in meters;
//! * discovery: true obstacles matched by at least one learner.

use serde::{Deserialize, Serialize};

use crate::coordinator::RoundRobinWorld;
use crate::Vector;

use super::scenario::ScenarioSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub inferred: usize,
    pub truth: usize,
    pub error: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub matches: Vec<Match>,
    pub ghosts: Vec<usize>,
}

/// Greedy nearest-neighbour matching; each true obstacle is used at most once
/// and ties go to the lower index.
pub fn classify_inferences(inferred: &[Vector], truth: &[Vector], match_tol: f64) -> Classification {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, th) in inferred.iter().enumerate() {
        for (k, tr) in truth.iter().enumerate() {
            let d = (th - tr).norm();
            if d <= match_tol {
                pairs.push((d, i, k));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_inf = vec![false; inferred.len()];
    let mut used_true = vec![false; truth.len()];
    let mut matches = Vec::new();
    for (d, i, k) in pairs {
        if !used_inf[i] && !used_true[k] {
            used_inf[i] = true;
            used_true[k] = true;
            matches.push(Match { inferred: i, truth: k, error: d });
        }
    }
    matches.sort_by_key(|m| m.inferred);
    let ghosts = (0..inferred.len()).filter(|&i| !used_inf[i]).collect();
    Classification { matches, ghosts }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutMetrics {
    pub seed: u64,
    pub collisions: usize,
    pub ghosts: usize,
    /// Errors of every matched inference across learners.
    pub errors: Vec<f64>,
    pub discovered: usize,
    pub total_obstacles: usize,
    pub failed_steps: usize,
    pub steps: usize,
}

impl RolloutMetrics {
    pub fn mean_error(&self) -> Option<f64> {
        (!self.errors.is_empty()).then(|| self.errors.iter().sum::<f64>() / self.errors.len() as f64)
    }
}

/// Counts collision entries along a position trajectory.
pub fn count_collisions(trajectory: &[Vec<Vector>], obstacles: &[(Vector, f64)]) -> usize {
    let mut count = 0;
    let n_agents = trajectory.first().map_or(0, Vec::len);
    for a in 0..n_agents {
        for (theta, r) in obstacles {
            let mut inside = false;
            for positions in trajectory {
                let now = (&positions[a] - theta).norm() < *r;
                if now && !inside {
                    count += 1;
                }
                inside = now;
            }
        }
    }
    count
}

pub fn rollout_metrics(spec: &ScenarioSpec, world: &RoundRobinWorld) -> RolloutMetrics {
    let truth: Vec<Vector> = spec.obstacles.iter().map(|o| o.theta.clone()).collect();
    let with_r: Vec<(Vector, f64)> = spec.obstacles.iter().map(|o| (o.theta.clone(), o.r)).collect();
    let mut ghosts = 0;
    let mut errors = Vec::new();
    let mut found = vec![false; truth.len()];
    for beliefs in &world.beliefs {
        let inferred: Vec<Vector> = beliefs.inferred().map(|e| e.barrier.theta.clone()).collect();
        let c = classify_inferences(&inferred, &truth, spec.params.match_tol());
        ghosts += c.ghosts.len();
        for m in c.matches {
            found[m.truth] = true;
            errors.push(m.error);
        }
    }
    RolloutMetrics {
        seed: spec.seed,
        collisions: count_collisions(&world.trajectory(), &with_r),
        ghosts,
        errors,
        discovered: found.iter().filter(|&&f| f).count(),
        total_obstacles: truth.len(),
        failed_steps: world.log.iter().filter(|r| r.failure.is_some()).count(),
        steps: world.log.len(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Population mean and standard deviation; NaN for an empty sample.
    pub fn of(xs: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = xs.into_iter().collect();
        if v.is_empty() {
            return Self { mean: f64::NAN, std: f64::NAN };
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub label: String,
    pub rollouts: Vec<RolloutMetrics>,
    pub collisions: MeanStd,
    pub ghosts: MeanStd,
    /// Over all matched inferences of all rollouts, in meters.
    pub inference_error: MeanStd,
    pub discovery_rate: f64,
    pub failed_rollouts: usize,
}

impl MetricsReport {
    pub fn aggregate(label: impl Into<String>, rollouts: Vec<RolloutMetrics>) -> Self {
        let collisions = MeanStd::of(rollouts.iter().map(|r| r.collisions as f64));
        let ghosts = MeanStd::of(rollouts.iter().map(|r| r.ghosts as f64));
        let inference_error = MeanStd::of(rollouts.iter().flat_map(|r| r.errors.iter().copied()));
        let total: usize = rollouts.iter().map(|r| r.total_obstacles).sum();
        let found: usize = rollouts.iter().map(|r| r.discovered).sum();
        let discovery_rate = if total == 0 { 0.0 } else { found as f64 / total as f64 };
        let failed_rollouts = rollouts.iter().filter(|r| r.failed_steps > 0).count();
        Self { label: label.into(), rollouts, collisions, ghosts, inference_error, discovery_rate, failed_rollouts }
    }
}
