use rayon::prelude::*;

use crate::coordinator::{check_safety_certificate, CertificateReport, RoundRobinWorld};
use crate::{Error, Result};

use super::config::{HarnessConfig, MethodConfig};
use super::metrics::{rollout_metrics, MetricsReport, RolloutMetrics};
use super::scenario::{generate_scenario, ScenarioSpec};

/// Environment variable capping rollout parallelism; `0` or unset means one thread per core.
pub const THREADS_ENV: &str = "CBF_INVERT_THREADS";

/// Runs one rollout to the execution horizon, stopping early once the team has arrived.
pub fn run_rollout(spec: &ScenarioSpec) -> Result<RoundRobinWorld> {
    let mut world = spec.build_world()?;
    while world.time() < spec.params.t_e && world.halted().is_none() && !spec.arrived(&world) {
        world.step()?;
    }
    Ok(world)
}

/// Runs `seeds` certificate scenarios and checks each rollout against its true obstacles.
pub fn run_certification(cfg: &HarnessConfig, seeds: usize) -> Result<Vec<(u64, CertificateReport)>> {
    let params = cfg.certificate_scenario();
    let pool = thread_pool()?;
    pool.install(|| {
        (0..seeds as u64)
            .into_par_iter()
            .map(|i| {
                let seed = cfg.montecarlo.base_seed + i;
                let spec = generate_scenario(seed, &params)?;
                let world = run_rollout(&spec)?;
                Ok((seed, check_safety_certificate(&world, &spec.obstacles)))
            })
            .collect()
    })
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("{THREADS_ENV} must be a nonnegative integer, got `{v}`")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(e.to_string()))
}

/// Runs `rollouts` seeded rollouts per configuration. Seeds are shared across
/// configurations, so every method sees the same scenarios.
pub fn run_monte_carlo(cfg: &HarnessConfig, rollouts: usize, matrix: &[MethodConfig]) -> Result<Vec<MetricsReport>> {
    let seeds: Vec<u64> = (0..rollouts as u64).map(|i| cfg.montecarlo.base_seed + i).collect();
    let specs = seeds
        .iter()
        .map(|&s| generate_scenario(s, &cfg.scenario))
        .collect::<Result<Vec<_>>>()?;
    let pool = thread_pool()?;
    let mut reports = Vec::new();
    for m in matrix {
        let rows: Vec<RolloutMetrics> = pool.install(|| {
            specs
                .par_iter()
                .map(|spec| {
                    let spec = spec.clone().with_method(m.form, m.method);
                    let world = run_rollout(&spec)?;
                    Ok(rollout_metrics(&spec, &world))
                })
                .collect::<Result<Vec<_>>>()
        })?;
        reports.push(MetricsReport::aggregate(m.label(), rows));
    }
    Ok(reports)
}

/// One CSV row per (configuration, rollout), followed by a `#`-prefixed summary block.
/// `mean_error` is in meters and left empty when a rollout has no matched inference.
pub fn write_monte_carlo_csv<W: std::io::Write>(reports: &[MetricsReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(["config", "seed", "collisions", "ghosts", "mean_error", "discovered", "total_obstacles", "failed_steps"])
        .map_err(io)?;
    for rep in reports {
        for r in &rep.rollouts {
            w.write_record([
                rep.label.clone(),
                r.seed.to_string(),
                r.collisions.to_string(),
                r.ghosts.to_string(),
                r.mean_error().map_or(String::new(), |e| format!("{e:.6e}")),
                r.discovered.to_string(),
                r.total_obstacles.to_string(),
                r.failed_steps.to_string(),
            ])
            .map_err(io)?;
        }
    }
    let mut out = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    writeln!(out, "# summary: config,collisions_mean,collisions_std,ghosts_mean,ghosts_std,error_mean_m,error_std_m,discovery_rate,failed_rollouts")?;
    for rep in reports {
        writeln!(
            out,
            "# {},{:.4},{:.4},{:.4},{:.4},{:.6e},{:.6e},{:.4},{}",
            rep.label,
            rep.collisions.mean,
            rep.collisions.std,
            rep.ghosts.mean,
            rep.ghosts.std,
            rep.inference_error.mean,
            rep.inference_error.std,
            rep.discovery_rate,
            rep.failed_rollouts
        )?;
    }
    Ok(())
}
