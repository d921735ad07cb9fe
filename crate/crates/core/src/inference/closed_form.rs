use std::sync::atomic::{AtomicU64, Ordering};

use crate::constraints::q_norm_sq;
use crate::dynamics::control_matrix;
use crate::{Error, Matrix, Result, Vector};

use super::{InferenceConfig, Observation};

static SIGN_CALLS: AtomicU64 = AtomicU64::new(0);
static SIGN_VIOLATIONS: AtomicU64 = AtomicU64::new(0);

/// `(calls, violations)` of the `A > 0, C < 0` check across every closed-form
/// inversion in this process.
pub fn sign_structure_stats() -> (u64, u64) {
    (SIGN_CALLS.load(Ordering::Relaxed), SIGN_VIOLATIONS.load(Ordering::Relaxed))
}

/// Unit direction `Q⁻¹ B_s⁻ᵀ Δu`; the obstacle lies on `s⁺ − t·d̂`, `t > 0`.
pub fn obstacle_direction(delta_u: &Vector, b_s: &Matrix, q: &Matrix) -> Result<Vector> {
    if delta_u.norm() == 0.0 {
        return Err(Error::ZeroDeviation);
    }
    let w = b_s
        .transpose()
        .lu()
        .solve(delta_u)
        .ok_or(Error::Singular("constraint-relevant control matrix"))?;
    let dir = q.clone().cholesky().ok_or(Error::Singular("barrier shape"))?.solve(&w);
    let n = dir.norm();
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::Singular("constraint-relevant control matrix"));
    }
    Ok(dir / n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedForm {
    pub theta: Vector,
    pub t_star: f64,
    pub direction: Vector,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Multiplier that makes stationarity hold exactly at `theta`.
    pub lambda: f64,
}

/// Recovers `θ` from an observation where only the barrier constraint was active.
pub fn closed_form_theta(obs: &Observation, cfg: &InferenceConfig) -> Result<ClosedForm> {
    let delta_u = obs.delta_u();
    let b_s = control_matrix(&obs.dynamics);
    let d_hat = obstacle_direction(&delta_u, &b_s, &cfg.q)?;
    let gamma = cfg.decay();
    let e = &obs.s_t - &obs.s_next;
    let qd = &cfg.q * &d_hat;

    let a = gamma * d_hat.dot(&qd);
    let b = -2.0 * (1.0 - gamma) * e.dot(&qd);
    let c = -(1.0 - gamma) * q_norm_sq(&e, &cfg.q) - gamma * cfg.r * cfg.r;

    SIGN_CALLS.fetch_add(1, Ordering::Relaxed);
    if !(a > 0.0 && c < 0.0) {
        SIGN_VIOLATIONS.fetch_add(1, Ordering::Relaxed);
    }
    debug_assert!(a > 0.0 && c < 0.0, "sign structure violated: A = {a}, C = {c}");

    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Err(Error::NoConsistentObstacle { discriminant: disc });
    }
    let sq = disc.sqrt();
    // Same root as (−B + √disc)/2A, written to avoid cancellation when B > 0.
    let t_star = if b > 0.0 { 2.0 * c / (-b - sq) } else { (-b + sq) / (2.0 * a) };
    let theta = &obs.s_next - &d_hat * t_star;

    let grad = b_s.transpose() * (&cfg.q * (&obs.s_next - &theta)) * 2.0;
    let lambda = delta_u.norm() / grad.norm();
    Ok(ClosedForm { theta, t_star, direction: d_hat, a, b, c, lambda })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Identifiability {
    pub identifiable: bool,
    pub reasons: Vec<String>,
}

fn rank(m: &Matrix) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let tol = max * (m.nrows().max(m.ncols()) as f64) * f64::EPSILON;
    sv.iter().filter(|&&s| s > tol && s > 0.0).count()
}

/// Local identifiability of `θ` from one observation with multiplier `lambda`.
pub fn check_identifiability(b_s: &Matrix, lambda: f64, q: &Matrix) -> Identifiability {
    let k = q.nrows();
    let mut reasons = Vec::new();
    if !(lambda > 0.0) {
        reasons.push("constraint inactive".to_string());
    }
    if rank(b_s) < k {
        reasons.push("insufficient actuation".to_string());
    }
    if rank(&(q * 2.0)) < k {
        reasons.push("insufficient barrier sensitivity".to_string());
    }
    Identifiability { identifiable: reasons.is_empty(), reasons }
}
