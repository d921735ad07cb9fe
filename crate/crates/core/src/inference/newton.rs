//! Regularized Newton iteration for the coupled obstacle/formation system.
//!
//! Unknowns are stacked as `x = (θ, λ, ν₁ … ν_k)`. The residual is
//!
//! ```text
//! F₁ = Δu − 2λ B_sᵀ Q c − Σ 2 σⱼ νⱼ B_sᵀ fⱼ          (d rows)
//! F₂ = cᵀ Q c − (1 − γ)(s_t − θ)ᵀ Q (s_t − θ) − γ r²   (1 row)
//! ```
//!
//! with `c = s⁺ − θ`. There are more unknowns than rows, so the iteration
//! drives `π(x) = ∇Fᵀ F + μ (x − x₀)` to zero, which is the stationarity
//! condition of `½‖F‖² + ½μ‖x − x₀‖²`.

use serde::{Deserialize, Serialize};

use crate::dynamics::control_matrix;
use crate::{Error, Matrix, Result, Vector};

use super::{closed_form_theta, pipeline::active_formation_terms, InferenceConfig, InferenceResult, Observation, Verdict};

/// Starting point `(θ₀, λ₀, ν₀)`; one `ν` per active formation term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonStart {
    pub theta: Vector,
    pub lambda: f64,
    pub nu: Vec<f64>,
}

impl NewtonStart {
    pub fn new(theta: Vector, lambda: f64, nu: Vec<f64>) -> Self {
        Self { theta, lambda, nu }
    }

    fn pack(&self) -> Vector {
        let d = self.theta.len();
        let mut x = Vector::zeros(d + 1 + self.nu.len());
        x.rows_mut(0, d).copy_from(&self.theta);
        x[d] = self.lambda;
        for (k, nu) in self.nu.iter().enumerate() {
            x[d + 1 + k] = *nu;
        }
        x
    }
}

/// Diagnostic check of `μ > M̂·F̂_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PremiseCheck {
    pub m_hat: f64,
    pub f_max: f64,
    pub mu: f64,
    pub holds: bool,
}

/// The residual map for one observation, with precomputed constant blocks.
#[derive(Debug, Clone)]
pub struct NewtonSystem {
    delta_u: Vector,
    s_t: Vector,
    s_next: Vector,
    btq: Matrix,
    q: Matrix,
    decay: f64,
    r: f64,
    /// `σⱼ B_sᵀ fⱼ` per active formation term.
    formation: Vec<Vector>,
}

impl NewtonSystem {
    /// Builds the system from `obs`, with formation terms `(f, σ)`.
    pub fn new(obs: &Observation, cfg: &InferenceConfig, terms: &[(Vector, f64)]) -> Result<Self> {
        let b_s = control_matrix(&obs.dynamics);
        let bt = b_s.transpose();
        let btq = &bt * &cfg.q;
        let formation = terms.iter().map(|(f, sigma)| &bt * f * *sigma).collect();
        Ok(Self {
            delta_u: obs.delta_u(),
            s_t: obs.s_t.clone(),
            s_next: obs.s_next.clone(),
            btq,
            q: cfg.q.clone(),
            decay: cfg.decay(),
            r: cfg.r,
            formation,
        })
    }

    pub fn dim(&self) -> usize {
        self.s_t.len()
    }

    pub fn n_unknowns(&self) -> usize {
        self.dim() + 1 + self.formation.len()
    }

    pub fn residual(&self, x: &Vector) -> Vector {
        let d = self.dim();
        let theta = x.rows(0, d).into_owned();
        let lambda = x[d];
        let c = &self.s_next - &theta;
        let mut f1 = &self.delta_u - &self.btq * &c * (2.0 * lambda);
        for (k, g) in self.formation.iter().enumerate() {
            f1 -= g * (2.0 * x[d + 1 + k]);
        }
        let e = &self.s_t - &theta;
        let f2 = c.dot(&(&self.q * &c)) - (1.0 - self.decay) * e.dot(&(&self.q * &e)) - self.decay * self.r * self.r;
        let mut out = Vector::zeros(d + 1);
        out.rows_mut(0, d).copy_from(&f1);
        out[d] = f2;
        out
    }

    /// `∂F/∂x`, `(d + 1) × n`.
    pub fn jacobian(&self, x: &Vector) -> Matrix {
        let d = self.dim();
        let n = self.n_unknowns();
        let theta = x.rows(0, d).into_owned();
        let lambda = x[d];
        let c = &self.s_next - &theta;
        let mut j = Matrix::zeros(d + 1, n);
        j.view_mut((0, 0), (d, d)).copy_from(&(&self.btq * (2.0 * lambda)));
        j.view_mut((0, d), (d, 1)).copy_from(&(&self.btq * &c * -2.0));
        for (k, g) in self.formation.iter().enumerate() {
            j.view_mut((0, d + 1 + k), (d, 1)).copy_from(&(g * -2.0));
        }
        let row = &self.q * (&c * -2.0 + (&self.s_t - &theta) * (2.0 * (1.0 - self.decay)));
        j.view_mut((d, 0), (1, d)).copy_from(&row.transpose());
        j
    }

    /// `∇²Fᵢ`, constant because every row is at most quadratic.
    fn row_hessian(&self, i: usize) -> Matrix {
        let d = self.dim();
        let n = self.n_unknowns();
        let mut h = Matrix::zeros(n, n);
        if i < d {
            for a in 0..d {
                let v = 2.0 * self.btq[(i, a)];
                h[(a, d)] = v;
                h[(d, a)] = v;
            }
        } else {
            h.view_mut((0, 0), (d, d)).copy_from(&(&self.q * (2.0 * self.decay)));
        }
        h
    }

    /// `M̂ = maxᵢ ‖∇²Fᵢ‖₂`.
    pub fn hessian_bound(&self) -> f64 {
        let d = self.dim();
        let q_norm = self.q.clone().symmetric_eigen().eigenvalues.amax();
        let mut m = 2.0 * self.decay * q_norm;
        for i in 0..d {
            m = m.max(2.0 * self.btq.row(i).norm());
        }
        m
    }

    pub fn pi(&self, x: &Vector, x0: &Vector, mu: f64) -> Vector {
        self.jacobian(x).transpose() * self.residual(x) + (x - x0) * mu
    }

    /// `∇π = JᵀJ + Σ Fᵢ ∇²Fᵢ + μI`.
    pub fn grad_pi(&self, x: &Vector, mu: f64) -> Matrix {
        let n = self.n_unknowns();
        let j = self.jacobian(x);
        let f = self.residual(x);
        let mut g = j.transpose() * &j + Matrix::identity(n, n) * mu;
        for i in 0..f.len() {
            g += self.row_hessian(i) * f[i];
        }
        g
    }

}

/// `F(x)` for `obs`, with formation terms inferred from geometry.
pub fn residual_f(x: &NewtonStart, obs: &Observation, cfg: &InferenceConfig) -> Result<Vector> {
    let terms = active_formation_terms(obs, cfg);
    if terms.is_empty() {
        return Err(Error::MissingPartner);
    }
    if terms.len() != x.nu.len() {
        return Err(Error::DimensionMismatch { expected: terms.len(), found: x.nu.len() });
    }
    let sys = NewtonSystem::new(obs, cfg, &terms)?;
    Ok(sys.residual(&x.pack()))
}

/// Runs the regularized Newton iteration from `x0`, regularizing toward `x0`.
pub fn newton_infer(obs: &Observation, x0: &NewtonStart, cfg: &InferenceConfig) -> InferenceResult {
    newton_infer_anchored(obs, x0, x0, cfg)
}

/// Starts the iteration at `start` while the regularization pulls toward `anchor`.
pub fn newton_infer_anchored(
    obs: &Observation,
    start: &NewtonStart,
    anchor: &NewtonStart,
    cfg: &InferenceConfig,
) -> InferenceResult {
    let terms = active_formation_terms(obs, cfg);
    if terms.is_empty() {
        return InferenceResult::failed(Error::MissingPartner.to_string());
    }
    for x in [start, anchor] {
        if terms.len() != x.nu.len() {
            return InferenceResult::failed(format!("expected {} formation multipliers, got {}", terms.len(), x.nu.len()));
        }
    }
    let sys = match NewtonSystem::new(obs, cfg, &terms) {
        Ok(s) => s,
        Err(e) => return InferenceResult::failed(e.to_string()),
    };
    let (x, a) = (start.pack(), anchor.pack());
    if !x.iter().chain(a.iter()).all(|v| v.is_finite()) {
        return InferenceResult::failed("non-finite starting point");
    }
    solve_system(&sys, x, a, cfg)
}

fn solve_system(sys: &NewtonSystem, start: Vector, anchor: Vector, cfg: &InferenceConfig) -> InferenceResult {
    let d = sys.dim();
    let mu = cfg.mu;
    let m_hat = sys.hessian_bound();
    let mut x = start;
    let mut p = sys.pi(&x, &anchor, mu);
    let mut norm = p.norm();
    let mut trace = vec![norm];
    let mut f_max = sys.residual(&x).lp_norm(1);
    let mut iterations = 0;
    let mut failure = None;

    while norm > cfg.newton_tol && iterations < cfg.newton_max_iter {
        let Some(step) = sys.grad_pi(&x, mu).lu().solve(&(-&p)) else {
            failure = Some("singular Newton matrix; regularization premise violated".to_string());
            break;
        };
        let mut alpha = 1.0;
        let mut accepted = None;
        while alpha > 1e-12 {
            let trial = &x + &step * alpha;
            let tp = sys.pi(&trial, &anchor, mu);
            if tp.norm_squared() <= (1.0 - 2.0 * cfg.armijo_c * alpha) * norm * norm {
                accepted = Some((trial, tp));
                break;
            }
            alpha *= cfg.backtrack_beta;
        }
        iterations += 1;
        let Some((nx, np)) = accepted else {
            failure = Some("line search stalled".to_string());
            break;
        };
        let n_norm = np.norm();
        assert!(n_norm <= norm, "accepted step increased ‖π‖");
        x = nx;
        p = np;
        norm = n_norm;
        trace.push(norm);
        f_max = f_max.max(sys.residual(&x).lp_norm(1));
    }

    let premise = PremiseCheck { m_hat, f_max, mu, holds: mu > m_hat * f_max };
    if !premise.holds {
        log::warn!("regularization premise violated: mu = {mu:.3e}, M*F_max = {:.3e}", m_hat * f_max);
    }
    let converged = norm <= cfg.newton_tol;
    let nu: f64 = x.rows(d + 1, x.len() - d - 1).sum();
    InferenceResult {
        verdict: if converged { Verdict::InferredNewton } else { Verdict::Failed },
        theta_hat: converged.then(|| x.rows(0, d).into_owned()),
        lambda_hat: Some(x[d]),
        nu_hat: Some(nu),
        iterations,
        final_residual: norm,
        candidate: (!converged).then(|| x.rows(0, d).into_owned()),
        residual_trace: trace,
        premise: Some(premise),
        message: if converged {
            None
        } else {
            Some(failure.unwrap_or_else(|| format!("no convergence after {iterations} iterations")))
        },
    }
}

/// Newton started from the obstacle-only closed-form estimate, `ν₀ = 0`.
pub fn newton_from_closed_form(obs: &Observation, cfg: &InferenceConfig) -> InferenceResult {
    let k = active_formation_terms(obs, cfg).len();
    match closed_form_theta(obs, cfg) {
        Ok(cf) => {
            let lambda0 = initial_lambda(obs, cfg, &cf.theta);
            newton_infer(obs, &NewtonStart::new(cf.theta, lambda0, vec![0.0; k]), cfg)
        }
        Err(e) => InferenceResult::failed(e.to_string()),
    }
}

/// `λ₀ = ‖Δu‖ / ‖2 B_sᵀ Q (s⁺ − θ₀)‖`, guarded against a vanishing denominator.
pub fn initial_lambda(obs: &Observation, cfg: &InferenceConfig, theta0: &Vector) -> f64 {
    let b_s = control_matrix(&obs.dynamics);
    let g = b_s.transpose() * (&cfg.q * (&obs.s_next - theta0)) * 2.0;
    obs.delta_u().norm() / g.norm().max(1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::cases::random_two_active_case;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn truth(case: &crate::harness::cases::OracleCase) -> NewtonStart {
        let nu = case
            .solution
            .formation_multipliers
            .iter()
            .map(|(lo, hi)| lo + hi)
            .collect();
        NewtonStart::new(case.theta.clone(), case.solution.lambda_obs, nu)
    }

    #[test]
    fn residual_vanishes_at_ground_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let case = random_two_active_case(&mut rng, 2, (0.005, 0.05));
            let f = residual_f(&truth(&case), &case.obs, &case.cfg).unwrap();
            assert!(f.norm() <= 1e-8, "‖F‖ = {}", f.norm());
        }
    }

    #[test]
    fn residual_sign_at_next_position() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let case = random_two_active_case(&mut rng, 2, (0.005, 0.05));
        let x = NewtonStart::new(case.obs.s_next.clone(), 3.0, vec![0.0]);
        let f = residual_f(&x, &case.obs, &case.cfg).unwrap();
        assert!(f[2] < 0.0);
        // ν = 0 leaves only the obstacle stationarity term.
        let delta = case.obs.delta_u();
        assert!((f.rows(0, 2).into_owned() - delta).norm() < 1e-12);
    }

    #[test]
    fn missing_partner_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let case = crate::harness::cases::random_obstacle_case(&mut rng, 2);
        let x = NewtonStart::new(case.theta.clone(), 1.0, vec![]);
        assert_eq!(residual_f(&x, &case.obs, &case.cfg), Err(Error::MissingPartner));
    }

    #[test]
    fn starting_at_the_root_converges_immediately() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..20 {
            let case = random_two_active_case(&mut rng, 2, (0.005, 0.05));
            let res = newton_infer(&case.obs, &truth(&case), &case.cfg);
            assert_eq!(res.verdict, Verdict::InferredNewton, "{:?}", res.message);
            assert!(res.iterations <= 2);
            assert!((res.theta_hat.unwrap() - &case.theta).norm() <= 1e-8);
        }
    }

    #[test]
    fn grad_pi_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..100 {
            let case = random_two_active_case(&mut rng, 2, (0.005, 0.05));
            let terms = active_formation_terms(&case.obs, &case.cfg);
            let sys = NewtonSystem::new(&case.obs, &case.cfg, &terms).unwrap();
            let n = sys.n_unknowns();
            let x = Vector::from_fn(n, |_, _| rng.gen_range(-3.0..3.0));
            let x0 = Vector::from_fn(n, |_, _| rng.gen_range(-3.0..3.0));
            let g = sys.grad_pi(&x, 1e-3);
            let h = 1e-6;
            for k in 0..n {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += h;
                xm[k] -= h;
                let fd = (sys.pi(&xp, &x0, 1e-3) - sys.pi(&xm, &x0, 1e-3)) / (2.0 * h);
                let col = g.column(k).into_owned();
                let rel = (&fd - &col).norm() / col.norm().max(1.0);
                assert!(rel <= 1e-5, "column {k}: rel {rel}");
            }
        }
    }

    #[test]
    fn descent_is_monotone_from_perturbed_start() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        for _ in 0..30 {
            let case = random_two_active_case(&mut rng, 2, (0.005, 0.05));
            let mut start = truth(&case);
            start.theta[0] += rng.gen_range(-0.3..0.3);
            start.theta[1] += rng.gen_range(-0.3..0.3);
            let res = newton_infer(&case.obs, &start, &case.cfg);
            for w in res.residual_trace.windows(2) {
                assert!(w[1] <= w[0]);
            }
        }
    }
}
