//! Convergence regions of the inverse solvers over a grid of initial guesses.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintForm;
use crate::coordinator::MethodKind;
use crate::inference::{
    active_formation_terms, closed_form_theta, initial_lambda, input_matching_baseline, newton_infer_anchored,
    InferenceConfig, NewtonStart, Observation, Verdict,
};
use crate::safety_filter::FormationTerm;
use crate::{vector, Error, Result, Vector};

use super::config::ScenarioParams;
use super::scenario::generate_scenario;

/// An observation with obstacle and formation both active, taken from a rollout.
#[derive(Debug, Clone)]
pub struct SweepCase {
    pub obs: Observation,
    pub theta: Vector,
    pub learner: Vector,
    pub cfg: InferenceConfig,
    pub seed: u64,
    pub t: usize,
}

/// Scans seeded CBF+KKT rollouts from `seed` on for the first demonstrator step
/// where the obstacle and a formation bound are active together.
pub fn find_sweep_case(params: &ScenarioParams, seed: u64, max_seeds: u64) -> Result<SweepCase> {
    for s in seed..seed + max_seeds {
        let spec = generate_scenario(s, params)?.with_method(ConstraintForm::Cbf, MethodKind::Kkt);
        let mut world = spec.build_world()?;
        let cfg = world.config.inference_config()?;
        while world.time() < params.t_e && world.halted().is_none() && !spec.arrived(&world) {
            world.step()?;
            let rec = world.log.last().expect("step logged");
            let k = rec.demonstrator;
            let d = &rec.agents[k];
            if !(d.active_set.obstacle && d.active_set.formation() && !d.active_set.velocity) || rec.failure.is_some() {
                continue;
            }
            let next = world.joint.positions();
            let mut obs = Observation::new(d.u_nom.clone(), d.u_safe.clone(), d.position.clone(), d.velocity.clone(), world.config.dynamics)?;
            obs.s_next = next[k].clone();
            for fc in &world.config.formation {
                if let Some(p) = fc.partner_of(k) {
                    obs.partners.push(FormationTerm { constraint: *fc, partner_next: next[p].clone() });
                }
            }
            if active_formation_terms(&obs, &cfg).is_empty() {
                continue;
            }
            let learner = rec.agents.iter().find(|a| a.agent != k).expect("two agents").position.clone();
            let theta = d.obstacle.clone().expect("active obstacle has a center");
            return Ok(SweepCase { obs, theta, learner, cfg, seed: s, t: rec.t });
        }
    }
    Err(Error::Config(format!("no step with obstacle and formation both active in {max_seeds} seeds")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    ConvergedTrue,
    ConvergedWrong,
    Diverged,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::ConvergedTrue => "converged_true",
            Outcome::ConvergedWrong => "converged_wrong",
            Outcome::Diverged => "diverged",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub x0: f64,
    pub y0: f64,
    pub method: MethodKind,
    pub outcome: Outcome,
    pub iterations: usize,
    /// `‖θ̂ − θ‖`, NaN when diverged.
    pub final_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub cells: Vec<SweepCell>,
}

impl SweepReport {
    pub fn fraction(&self, method: MethodKind, outcome: Outcome) -> f64 {
        let of_method: Vec<_> = self.cells.iter().filter(|c| c.method == method).collect();
        if of_method.is_empty() {
            return 0.0;
        }
        of_method.iter().filter(|c| c.outcome == outcome).count() as f64 / of_method.len() as f64
    }
}

/// Input Matching counts as converged when the re-solved filter reproduces the
/// observed control to this fraction of `‖Δu‖²`.
const IM_MATCH_REL: f64 = 1e-4;

fn classify(theta_hat: Option<&Vector>, theta: &Vector, tol: f64) -> (Outcome, f64) {
    match theta_hat {
        None => (Outcome::Diverged, f64::NAN),
        Some(t) => {
            let err = (t - theta).norm();
            (if err <= tol { Outcome::ConvergedTrue } else { Outcome::ConvergedWrong }, err)
        }
    }
}

/// Cell centers of an `n × n` grid over `[lo, hi]`.
pub fn grid(lo: [f64; 2], hi: [f64; 2], n: usize) -> Vec<Vector> {
    let mut out = Vec::with_capacity(n * n);
    for iy in 0..n {
        for ix in 0..n {
            let x = lo[0] + (ix as f64 + 0.5) * (hi[0] - lo[0]) / n as f64;
            let y = lo[1] + (iy as f64 + 0.5) * (hi[1] - lo[1]) / n as f64;
            out.push(vector(&[x, y]));
        }
    }
    out
}

/// Runs Newton (regularized toward the closed-form estimate, started at each
/// cell) and Input Matching (started at each cell) over the grid.
pub fn newton_region_sweep(case: &SweepCase, lo: [f64; 2], hi: [f64; 2], n: usize) -> Result<SweepReport> {
    let cfg = &case.cfg;
    let k = active_formation_terms(&case.obs, cfg).len();
    let cf = closed_form_theta(&case.obs, cfg)?;
    let anchor = NewtonStart::new(cf.theta.clone(), initial_lambda(&case.obs, cfg, &cf.theta), vec![0.0; k]);
    let du2 = case.obs.delta_u().norm_squared();
    let cells: Vec<SweepCell> = grid(lo, hi, n)
        .par_iter()
        .flat_map_iter(|theta0| {
            let start = NewtonStart::new(theta0.clone(), initial_lambda(&case.obs, cfg, theta0), vec![0.0; k]);
            let nr = newton_infer_anchored(&case.obs, &start, &anchor, cfg);
            let (n_out, n_err) = classify(nr.theta_hat.as_ref(), &case.theta, cfg.match_tol);
            let im = input_matching_baseline(&case.obs, theta0, cfg);
            let matched = im.verdict == Verdict::InferredInputMatching && im.final_residual <= IM_MATCH_REL * du2;
            let (i_out, i_err) = classify(im.theta_hat.as_ref().filter(|_| matched), &case.theta, cfg.match_tol);
            [
                SweepCell { x0: theta0[0], y0: theta0[1], method: MethodKind::Kkt, outcome: n_out, iterations: nr.iterations, final_error: n_err },
                SweepCell {
                    x0: theta0[0],
                    y0: theta0[1],
                    method: MethodKind::InputMatching,
                    outcome: i_out,
                    iterations: im.iterations,
                    final_error: i_err,
                },
            ]
        })
        .collect();
    Ok(SweepReport { cells })
}

/// `x0,y0,method,outcome,iterations,final_error` per cell.
pub fn write_sweep_csv<W: std::io::Write>(report: &SweepReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(["x0", "y0", "method", "outcome", "iterations", "final_error"]).map_err(io)?;
    for c in &report.cells {
        let method = match c.method {
            MethodKind::Kkt => "newton",
            MethodKind::InputMatching => "input_matching",
        };
        w.write_record([
            format!("{:.6}", c.x0),
            format!("{:.6}", c.y0),
            method.to_string(),
            c.outcome.as_str().to_string(),
            c.iterations.to_string(),
            if c.final_error.is_nan() { String::new() } else { format!("{:.6e}", c.final_error) },
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}
