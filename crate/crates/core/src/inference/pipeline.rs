use crate::coordinator::BeliefSet;
use crate::dynamics::control_matrix;
use crate::safety_filter::ActiveSet;
use crate::{Matrix, Vector};

use super::{
    closed_form_theta, input_matching_baseline, newton::initial_lambda, newton_infer, InferenceConfig, InferenceResult,
    NewtonStart, Observation, Verdict,
};

/// Which inverse solver runs once the gates have passed.
#[derive(Debug, Clone, PartialEq)]
pub enum InferenceMethod {
    /// Closed form for the obstacle alone, Newton when a formation bound is also active.
    Kkt,
    /// Nelder-Mead search over `θ` from the given start.
    InputMatching { theta0: Vector },
}

/// Formation terms `(f, σ)` the learner judges active from the realized distances.
/// `σ = +1` for the lower bound, `−1` for the upper one.
pub fn active_formation_terms(obs: &Observation, cfg: &InferenceConfig) -> Vec<(Vector, f64)> {
    let mut out = Vec::new();
    for term in &obs.partners {
        let f = &obs.s_next - &term.partner_next;
        let dist_sq = f.norm_squared();
        let lo = term.constraint.lower().powi(2);
        let hi = term.constraint.upper().powi(2);
        if (dist_sq - lo).abs() <= cfg.formation_tol * lo.max(1.0) {
            out.push((f, 1.0));
        } else if (dist_sq - hi).abs() <= cfg.formation_tol * hi.max(1.0) {
            out.push((f, -1.0));
        }
    }
    out
}

/// Part of `Δu` not explained by the active formation gradients.
fn formation_residual(delta_u: &Vector, b_s: &Matrix, terms: &[(Vector, f64)]) -> f64 {
    let cols: Vec<Vector> = terms.iter().map(|(f, s)| b_s.transpose() * f * *s).collect();
    let g = Matrix::from_columns(&cols);
    let coeffs = g.clone().svd(true, true).solve(delta_u, 1e-12).expect("svd with vectors");
    (delta_u - g * coeffs).norm()
}

/// Gates an observation and, if it survives, infers the obstacle behind it.
pub fn rejection_pipeline(
    obs: &Observation,
    beliefs: &BeliefSet,
    active: &ActiveSet,
    cfg: &InferenceConfig,
    method: &InferenceMethod,
) -> InferenceResult {
    let delta_u = obs.delta_u();
    if delta_u.norm() < cfg.noise_threshold {
        return InferenceResult::rejected(Verdict::RejectedNoise);
    }
    if active.velocity {
        return InferenceResult::rejected(Verdict::RejectedVelocityBound);
    }
    let terms = active_formation_terms(obs, cfg);
    let b_s = control_matrix(&obs.dynamics);
    if !terms.is_empty() && formation_residual(&delta_u, &b_s, &terms) < cfg.noise_threshold {
        return InferenceResult::rejected(Verdict::RejectedFormationExplains);
    }

    let mut result = match method {
        InferenceMethod::InputMatching { theta0 } => input_matching_baseline(obs, theta0, cfg),
        InferenceMethod::Kkt => match closed_form_theta(obs, cfg) {
            Err(e) => InferenceResult::failed(e.to_string()),
            Ok(cf) if terms.is_empty() => InferenceResult {
                verdict: Verdict::InferredClosedForm,
                lambda_hat: Some(cf.lambda),
                theta_hat: Some(cf.theta),
                ..InferenceResult::rejected(Verdict::InferredClosedForm)
            },
            Ok(cf) => {
                let lambda0 = initial_lambda(obs, cfg, &cf.theta);
                newton_infer(obs, &NewtonStart::new(cf.theta, lambda0, vec![0.0; terms.len()]), cfg)
            }
        },
    };

    if let Some(theta) = &result.theta_hat {
        let known = beliefs.entries().iter().any(|e| (&e.barrier.theta - theta).norm() <= cfg.match_tol);
        if known {
            result.candidate = result.theta_hat.take();
            result.verdict = Verdict::RejectedKnown;
        }
    }
    result
}
