//! Inverting safety-filtered actions.
//!
//! Given `(u_nom, u_safe, s_t)` of a demonstrator whose filter was active, the
//! KKT stationarity condition `Δu = 2λ B_sᵀ Q (s⁺ − θ)` pins the obstacle to a
//! ray from `s⁺`; the binding barrier condition picks the unique point on it
//! ([`closed_form_theta`]). When a formation bound is active as well, the
//! system is underdetermined and is solved by regularized Newton iteration
//! ([`newton_infer`]). [`rejection_pipeline`] chains the gates that keep noise,
//! formation-only deviations and already-known obstacles from being reported.

mod closed_form;
mod input_matching;
pub mod nelder_mead;
mod newton;
mod pipeline;

use serde::{Deserialize, Serialize};

use crate::constraints::{check_spd, CbfParams, ConstraintForm, VelocityBound};
use crate::dynamics::{next_position, DynamicsParams};
use crate::error::check_dim;
use crate::safety_filter::{FilterProblem, FilterSolution, FormationTerm};
use crate::{Error, Matrix, Result, Vector};

pub use closed_form::{
    check_identifiability, closed_form_theta, obstacle_direction, sign_structure_stats, ClosedForm, Identifiability,
};
pub use input_matching::input_matching_baseline;
pub use newton::{initial_lambda, newton_from_closed_form, newton_infer, newton_infer_anchored, residual_f, NewtonStart, NewtonSystem, PremiseCheck};
pub use pipeline::{active_formation_terms, rejection_pipeline, InferenceMethod};

/// Tolerance on `s⁺` matching the dynamics step of `s_t` under `u_safe`.
pub const OBSERVATION_TOLERANCE: f64 = 1e-9;

/// What a learner sees of one demonstrator step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub u_nom: Vector,
    pub u_safe: Vector,
    pub s_t: Vector,
    pub v_t: Vector,
    pub s_next: Vector,
    /// Formation partners with their realized next positions.
    pub partners: Vec<FormationTerm>,
    pub vel_bound: Option<VelocityBound>,
    pub dynamics: DynamicsParams,
}

impl Observation {
    /// Builds an observation, deriving `s⁺` from the dynamics.
    pub fn new(u_nom: Vector, u_safe: Vector, s_t: Vector, v_t: Vector, dynamics: DynamicsParams) -> Result<Self> {
        check_dim(s_t.len(), u_nom.len())?;
        check_dim(s_t.len(), u_safe.len())?;
        check_dim(s_t.len(), v_t.len())?;
        let s_next = next_position(&s_t, &v_t, &u_safe, &dynamics);
        Ok(Self { u_nom, u_safe, s_t, v_t, s_next, partners: Vec::new(), vel_bound: None, dynamics })
    }

    /// Builds an observation from a recorded next position, checking it against the dynamics.
    pub fn with_next(
        u_nom: Vector,
        u_safe: Vector,
        s_t: Vector,
        v_t: Vector,
        s_next: Vector,
        dynamics: DynamicsParams,
    ) -> Result<Self> {
        let mut obs = Self::new(u_nom, u_safe, s_t, v_t, dynamics)?;
        check_dim(obs.s_next.len(), s_next.len())?;
        let gap = (&obs.s_next - &s_next).norm();
        if gap > OBSERVATION_TOLERANCE {
            return Err(Error::InconsistentObservation(gap));
        }
        obs.s_next = s_next;
        Ok(obs)
    }

    /// The observation produced by solving `problem` to `sol`.
    pub fn from_filter(problem: &FilterProblem, sol: &FilterSolution) -> Self {
        Self {
            u_nom: problem.u_nom.clone(),
            u_safe: sol.u_safe.clone(),
            s_t: problem.s_t.clone(),
            v_t: problem.v_t.clone(),
            s_next: problem.next_position(&sol.u_safe),
            partners: problem.formation.clone(),
            vel_bound: problem.vel_bound,
            dynamics: problem.dynamics,
        }
    }

    pub fn with_partner(mut self, term: FormationTerm) -> Self {
        self.partners.push(term);
        self
    }

    pub fn delta_u(&self) -> Vector {
        &self.u_safe - &self.u_nom
    }

    pub fn dim(&self) -> usize {
        self.s_t.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    pub cbf: CbfParams,
    /// Constraint form the demonstrator is assumed to enforce.
    pub form: ConstraintForm,
    pub q: Matrix,
    /// Radius the demonstrator enforces (already inflated if it inflates).
    pub r: f64,
    pub noise_threshold: f64,
    pub mu: f64,
    pub newton_max_iter: usize,
    pub newton_tol: f64,
    pub armijo_c: f64,
    pub backtrack_beta: f64,
    pub match_tol: f64,
    /// Squared-distance tolerance for calling a formation bound active.
    pub formation_tol: f64,
    pub im_max_iter: usize,
    pub im_simplex_size: f64,
}

impl InferenceConfig {
    pub fn new(cbf: CbfParams, q: Matrix, r: f64) -> Result<Self> {
        let cfg = Self {
            cbf,
            form: ConstraintForm::Cbf,
            q,
            r,
            noise_threshold: 1e-6,
            mu: 1e-3,
            newton_max_iter: 100,
            newton_tol: 1e-10,
            armijo_c: 1e-4,
            backtrack_beta: 0.5,
            match_tol: 0.25 * r,
            formation_tol: 1e-6,
            im_max_iter: 100,
            im_simplex_size: r,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Circular barrier of radius `r` in `dim` dimensions.
    pub fn circle(cbf: CbfParams, dim: usize, r: f64) -> Result<Self> {
        Self::new(cbf, Matrix::identity(dim, dim), r)
    }

    pub fn validate(&self) -> Result<()> {
        check_spd(&self.q)?;
        let positive = [
            ("r", self.r),
            ("noise_threshold", self.noise_threshold),
            ("mu", self.mu),
            ("newton_tol", self.newton_tol),
            ("match_tol", self.match_tol),
            ("formation_tol", self.formation_tol),
            ("im_simplex_size", self.im_simplex_size),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("armijo_c", self.armijo_c), ("backtrack_beta", self.backtrack_beta)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidParameter(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        if self.newton_max_iter == 0 {
            return Err(Error::InvalidParameter("newton_max_iter must be positive".into()));
        }
        Ok(())
    }

    /// Effective decay: `γ` for the CBF form, 1 for plain next-step feasibility.
    pub fn decay(&self) -> f64 {
        self.form.decay(&self.cbf)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    InferredClosedForm,
    InferredNewton,
    InferredInputMatching,
    RejectedNoise,
    RejectedFormationExplains,
    RejectedVelocityBound,
    RejectedKnown,
    Failed,
}

impl Verdict {
    pub fn is_inferred(self) -> bool {
        matches!(self, Verdict::InferredClosedForm | Verdict::InferredNewton | Verdict::InferredInputMatching)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::InferredClosedForm => "inferred_closed_form",
            Verdict::InferredNewton => "inferred_newton",
            Verdict::InferredInputMatching => "inferred_input_matching",
            Verdict::RejectedNoise => "rejected_noise",
            Verdict::RejectedFormationExplains => "rejected_formation_explains",
            Verdict::RejectedVelocityBound => "rejected_velocity_bound",
            Verdict::RejectedKnown => "rejected_known",
            Verdict::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceResult {
    pub verdict: Verdict,
    pub theta_hat: Option<Vector>,
    pub lambda_hat: Option<f64>,
    pub nu_hat: Option<f64>,
    pub iterations: usize,
    pub final_residual: f64,
    /// Estimate that was computed but not reported (e.g. it matched a known obstacle).
    pub candidate: Option<Vector>,
    /// `‖π(x_k)‖` per Newton iterate, or the best objective per Nelder-Mead iteration.
    pub residual_trace: Vec<f64>,
    pub premise: Option<PremiseCheck>,
    pub message: Option<String>,
}

impl InferenceResult {
    pub fn rejected(verdict: Verdict) -> Self {
        Self {
            verdict,
            theta_hat: None,
            lambda_hat: None,
            nu_hat: None,
            iterations: 0,
            final_residual: 0.0,
            candidate: None,
            residual_trace: Vec::new(),
            premise: None,
            message: None,
        }
    }

    pub fn failed(message: impl Into<String>) -> Self {
        Self { message: Some(message.into()), ..Self::rejected(Verdict::Failed) }
    }
}

