use crate::constraints::QuadraticBarrier;
use crate::safety_filter::{solve, FilterProblem};
use crate::Vector;

use super::{nelder_mead, InferenceConfig, InferenceResult, Observation, Verdict};

/// `‖u_safe − filter(θ)‖²`, or `+∞` when the filter with an obstacle at `θ` is infeasible.
fn mismatch(obs: &Observation, cfg: &InferenceConfig, theta: &Vector) -> f64 {
    let Ok(barrier) = QuadraticBarrier::new(theta.clone(), cfg.q.clone(), cfg.r) else {
        return f64::INFINITY;
    };
    let mut problem = FilterProblem::new(obs.s_t.clone(), obs.v_t.clone(), obs.u_nom.clone(), cfg.cbf, obs.dynamics)
        .with_barrier(barrier)
        .with_form(cfg.form);
    problem.formation = obs.partners.clone();
    problem.vel_bound = obs.vel_bound;
    match solve(&problem) {
        Ok(sol) => (&obs.u_safe - &sol.u_safe).norm_squared(),
        Err(_) => f64::INFINITY,
    }
}

/// Searches `θ` so that re-running the filter reproduces the observed control.
pub fn input_matching_baseline(obs: &Observation, theta0: &Vector, cfg: &InferenceConfig) -> InferenceResult {
    let res = nelder_mead::minimize(|th| mismatch(obs, cfg, th), theta0, cfg.im_simplex_size, cfg.im_max_iter);
    let found = res.fx.is_finite();
    InferenceResult {
        verdict: if found { Verdict::InferredInputMatching } else { Verdict::Failed },
        theta_hat: found.then(|| res.x.clone()),
        lambda_hat: None,
        nu_hat: None,
        iterations: res.iterations,
        final_residual: res.fx,
        candidate: None,
        residual_trace: res.trace,
        premise: None,
        message: (!found).then(|| "every simplex vertex was infeasible".to_string()),
    }
}
