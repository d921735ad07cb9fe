//! The minimally invasive safety filter
//!
//! ```text
//! u_safe = argmin ½‖u − u_nom‖²
//!          s.t. h(s⁺(u), θ) ≥ (1 − γ) h(s, θ)          (nearest obstacle)
//!               d − ε ≤ ‖s⁺(u) − s_j⁺‖ ≤ d + ε          (each formation partner)
//!               ‖v⁺(u)‖ ≤ v_max                         (optional)
//! ```
//!
//! with `s⁺(u) = s + Δt·v + B_s·u`. Every constraint is quadratic in `u`, so
//! the problem is a tiny non-convex QCQP. It is solved exactly by enumerating
//! active sets of size at most two and keeping the cheapest KKT point that is
//! primal and dual feasible.

mod qcqp;

use serde::{Deserialize, Serialize};

use crate::constraints::{
    barrier_grad_u, decay_residual, formation_values, CbfParams, ConstraintForm, FormationConstraint,
    QuadraticBarrier, VelocityBound,
};
use crate::coordinator::BeliefSet;
use crate::dynamics::{control_matrix, next_position, DynamicsParams};
use crate::error::check_dim;
use crate::{Error, Matrix, Result, Vector};

use qcqp::{pair_candidates, single_candidates, QuadConstraint};

/// Stationarity tolerance reported by the solver.
pub const KKT_TOLERANCE: f64 = 1e-8;
/// Slack allowed on primal feasibility and multiplier signs when accepting a candidate.
const ACCEPT_TOLERANCE: f64 = 1e-9;

/// A formation bound against a partner whose next position is already fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormationTerm {
    pub constraint: FormationConstraint,
    pub partner_next: Vector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterProblem {
    pub s_t: Vector,
    pub v_t: Vector,
    pub u_nom: Vector,
    pub barrier: Option<QuadraticBarrier>,
    pub formation: Vec<FormationTerm>,
    pub vel_bound: Option<VelocityBound>,
    pub cbf: CbfParams,
    pub form: ConstraintForm,
    pub dynamics: DynamicsParams,
}

impl FilterProblem {
    /// A problem with only a nominal control; add constraints with the builder methods.
    pub fn new(s_t: Vector, v_t: Vector, u_nom: Vector, cbf: CbfParams, dynamics: DynamicsParams) -> Self {
        Self {
            s_t,
            v_t,
            u_nom,
            barrier: None,
            formation: Vec::new(),
            vel_bound: None,
            cbf,
            form: ConstraintForm::Cbf,
            dynamics,
        }
    }

    pub fn with_barrier(mut self, b: QuadraticBarrier) -> Self {
        self.barrier = Some(b);
        self
    }

    pub fn with_formation(mut self, constraint: FormationConstraint, partner_next: Vector) -> Self {
        self.formation.push(FormationTerm { constraint, partner_next });
        self
    }

    pub fn with_velocity_bound(mut self, vb: VelocityBound) -> Self {
        self.vel_bound = Some(vb);
        self
    }

    pub fn with_form(mut self, form: ConstraintForm) -> Self {
        self.form = form;
        self
    }

    pub fn dim(&self) -> usize {
        self.s_t.len()
    }

    fn validate(&self) -> Result<()> {
        let d = self.dim();
        check_dim(d, self.v_t.len())?;
        check_dim(d, self.u_nom.len())?;
        check_dim(d, self.dynamics.dim)?;
        if let Some(b) = &self.barrier {
            check_dim(d, b.dim())?;
        }
        for term in &self.formation {
            check_dim(d, term.partner_next.len())?;
            if term.partner_next.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParameter("formation partner position must be finite".into()));
            }
        }
        let finite = |v: &Vector| v.iter().all(|x| x.is_finite());
        if !(finite(&self.s_t) && finite(&self.v_t) && finite(&self.u_nom)) {
            return Err(Error::InvalidParameter("filter inputs must be finite".into()));
        }
        Ok(())
    }

    pub fn next_position(&self, u: &Vector) -> Vector {
        next_position(&self.s_t, &self.v_t, u, &self.dynamics)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveSet {
    pub obstacle: bool,
    pub formation_lower: bool,
    pub formation_upper: bool,
    pub velocity: bool,
}

impl ActiveSet {
    pub fn any(&self) -> bool {
        self.obstacle || self.formation_lower || self.formation_upper || self.velocity
    }

    pub fn formation(&self) -> bool {
        self.formation_lower || self.formation_upper
    }

    /// Compact label such as `obstacle+upper`, or `none`.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.obstacle {
            parts.push("obstacle");
        }
        if self.formation_lower {
            parts.push("lower");
        }
        if self.formation_upper {
            parts.push("upper");
        }
        if self.velocity {
            parts.push("velocity");
        }
        if parts.is_empty() {
            "none".into()
        } else {
            parts.join("+")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSolution {
    pub u_safe: Vector,
    pub lambda_obs: f64,
    /// Sum of the formation multipliers; see `formation_multipliers` for the split.
    pub nu_form: f64,
    pub mu_vel: f64,
    /// `(lower, upper)` multipliers, one pair per formation term.
    pub formation_multipliers: Vec<(f64, f64)>,
    pub active_set: ActiveSet,
    pub kkt_residual: f64,
}

impl FilterSolution {
    pub fn modified(&self, u_nom: &Vector) -> bool {
        self.u_safe != *u_nom
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tag {
    Obstacle,
    Lower(usize),
    Upper(usize),
    Velocity,
}

impl Tag {
    fn name(self) -> String {
        match self {
            Tag::Obstacle => "obstacle".into(),
            Tag::Lower(k) => format!("formation_lower[{k}]"),
            Tag::Upper(k) => format!("formation_upper[{k}]"),
            Tag::Velocity => "velocity".into(),
        }
    }

    fn excludes(self, other: Tag) -> bool {
        matches!((self, other), (Tag::Lower(a), Tag::Upper(b)) | (Tag::Upper(a), Tag::Lower(b)) if a == b)
    }
}

/// Rewrites every constraint of the problem in control space.
fn build_constraints(p: &FilterProblem) -> Result<Vec<(Tag, QuadConstraint)>> {
    let d = p.dim();
    let bs = control_matrix(&p.dynamics);
    let bs_inv = bs
        .clone()
        .try_inverse()
        .ok_or(Error::Singular("constraint-relevant control matrix"))?;
    let drift = &p.s_t + &p.v_t * p.dynamics.dt;
    let mut out = Vec::new();

    if let Some(b) = &p.barrier {
        let decay = p.form.decay(&p.cbf);
        let h_t = crate::constraints::barrier_value(&p.s_t, b);
        let m = bs.transpose() * &b.q * &bs;
        let a = &bs_inv * (&b.theta - &drift);
        let rho = b.r * b.r + (1.0 - decay) * h_t;
        out.push((Tag::Obstacle, QuadConstraint::new(1.0, m, a, rho)));
    }
    for (k, term) in p.formation.iter().enumerate() {
        let m = bs.transpose() * &bs;
        let a = &bs_inv * (&term.partner_next - &drift);
        let fc = &term.constraint;
        out.push((Tag::Lower(k), QuadConstraint::new(1.0, m.clone(), a.clone(), fc.lower().powi(2))));
        out.push((Tag::Upper(k), QuadConstraint::new(-1.0, m, a, fc.upper().powi(2))));
    }
    if let Some(vb) = &p.vel_bound {
        let dt = p.dynamics.dt;
        let m = Matrix::identity(d, d) * (dt * dt);
        let a = -&p.v_t / dt;
        out.push((Tag::Velocity, QuadConstraint::new(-1.0, m, a, vb.v_max * vb.v_max)));
    }
    Ok(out)
}

/// Solves the safety filter to global optimality.
pub fn solve(problem: &FilterProblem) -> Result<FilterSolution> {
    problem.validate()?;
    let cons = build_constraints(problem)?;
    let u_nom = &problem.u_nom;

    if cons.iter().all(|(_, c)| c.value(u_nom) >= 0.0) {
        return Ok(assemble(problem, &cons, u_nom.clone(), &[]));
    }

    let feasible = |u: &Vector, mults: &[(usize, f64)]| {
        mults.iter().all(|(_, l)| *l >= -ACCEPT_TOLERANCE)
            && cons.iter().all(|(_, c)| c.value(u) >= -ACCEPT_TOLERANCE * c.rho.abs().max(1.0))
    };

    let mut best: Option<(f64, Vector, Vec<(usize, f64)>)> = None;
    let mut consider = |u: Vector, mults: Vec<(usize, f64)>| {
        if !feasible(&u, &mults) {
            return;
        }
        let obj = 0.5 * (&u - u_nom).norm_squared();
        if best.as_ref().is_none_or(|(b, _, _)| obj < *b) {
            best = Some((obj, u, mults));
        }
    };

    let mut singles: Vec<Vec<(Vector, f64)>> = Vec::with_capacity(cons.len());
    for (k, (_, c)) in cons.iter().enumerate() {
        let pts = single_candidates(c, u_nom);
        for (u, lam) in &pts {
            consider(u.clone(), vec![(k, *lam)]);
        }
        singles.push(pts);
    }
    if problem.dim() >= 2 {
        for i in 0..cons.len() {
            for j in (i + 1)..cons.len() {
                if cons[i].0.excludes(cons[j].0) {
                    continue;
                }
                let mut seeds: Vec<Vector> = singles[i].iter().chain(&singles[j]).map(|(u, _)| u.clone()).collect();
                seeds.push(u_nom.clone());
                for (u, l1, l2) in pair_candidates(&cons[i].1, &cons[j].1, u_nom, &seeds) {
                    consider(u, vec![(i, l1), (j, l2)]);
                }
            }
        }
    }

    match best {
        Some((_, u, mults)) => {
            let mults: Vec<(usize, f64)> = mults.into_iter().map(|(k, l)| (k, l.max(0.0))).collect();
            Ok(assemble(problem, &cons, u, &mults))
        }
        None => {
            let (tag, worst) = cons
                .iter()
                .map(|(t, c)| (*t, c.value(u_nom)))
                .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                .expect("infeasible problem has at least one constraint");
            Err(Error::Infeasible { constraint: tag.name(), violation: -worst })
        }
    }
}

fn assemble(p: &FilterProblem, cons: &[(Tag, QuadConstraint)], u: Vector, mults: &[(usize, f64)]) -> FilterSolution {
    let mut sol = FilterSolution {
        u_safe: u.clone(),
        lambda_obs: 0.0,
        nu_form: 0.0,
        mu_vel: 0.0,
        formation_multipliers: vec![(0.0, 0.0); p.formation.len()],
        active_set: ActiveSet::default(),
        kkt_residual: 0.0,
    };
    let mut stationarity = &u - &p.u_nom;
    for &(k, lam) in mults {
        stationarity -= cons[k].1.grad(&u) * lam;
        match cons[k].0 {
            Tag::Obstacle => {
                sol.lambda_obs = lam;
                sol.active_set.obstacle = true;
            }
            Tag::Lower(i) => {
                sol.formation_multipliers[i].0 = lam;
                sol.active_set.formation_lower = true;
            }
            Tag::Upper(i) => {
                sol.formation_multipliers[i].1 = lam;
                sol.active_set.formation_upper = true;
            }
            Tag::Velocity => {
                sol.mu_vel = lam;
                sol.active_set.velocity = true;
            }
        }
    }
    sol.nu_form = sol.formation_multipliers.iter().map(|(a, b)| a + b).sum();
    sol.kkt_residual = stationarity.norm();
    sol
}

/// The obstacle whose center is closest to `s`; ties go to the earliest entry.
pub fn nearest_obstacle(s: &Vector, beliefs: &BeliefSet) -> Option<QuadraticBarrier> {
    let mut best: Option<(f64, &QuadraticBarrier)> = None;
    for entry in beliefs.entries() {
        let dist = (s - &entry.barrier.theta).norm();
        if best.is_none_or(|(b, _)| dist < b) {
            best = Some((dist, &entry.barrier));
        }
    }
    best.map(|(_, b)| b.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub stationarity_residual: f64,
    pub worst_primal_violation: f64,
    pub worst_complementarity: f64,
}

impl KktReport {
    pub fn max(&self) -> f64 {
        self.stationarity_residual.max(self.worst_primal_violation).max(self.worst_complementarity)
    }
}

/// Recomputes the KKT conditions of `sol` straight from the barrier, formation
/// and velocity definitions.
pub fn verify_kkt(problem: &FilterProblem, sol: &FilterSolution) -> KktReport {
    let u = &sol.u_safe;
    let bs = control_matrix(&problem.dynamics);
    let s_next = problem.next_position(u);
    let mut stationarity = u - &problem.u_nom;
    let mut primal: f64 = 0.0;
    let mut comp: f64 = 0.0;
    let mut account = |value: f64, grad: Vector, mult: f64, st: &mut Vector| {
        *st -= grad * mult;
        primal = primal.max(-value);
        comp = comp.max((mult * value).abs()).max(-mult);
    };

    if let Some(b) = &problem.barrier {
        let decay = problem.form.decay(&problem.cbf);
        let value = decay_residual(&problem.s_t, &s_next, b, decay);
        account(value, barrier_grad_u(&s_next, b, &bs), sol.lambda_obs, &mut stationarity);
    }
    for (k, term) in problem.formation.iter().enumerate() {
        let (lo, hi) = formation_values(&s_next, &term.partner_next, &term.constraint);
        let grad = bs.transpose() * (&s_next - &term.partner_next) * 2.0;
        let (ml, mu) = sol.formation_multipliers.get(k).copied().unwrap_or((0.0, 0.0));
        account(lo, grad.clone(), ml, &mut stationarity);
        account(hi, -grad, mu, &mut stationarity);
    }
    if let Some(vb) = &problem.vel_bound {
        let dt = problem.dynamics.dt;
        let v_next = &problem.v_t + u * dt;
        let value = vb.v_max * vb.v_max - v_next.norm_squared();
        account(value, -v_next * (2.0 * dt), sol.mu_vel, &mut stationarity);
    }
    KktReport {
        stationarity_residual: stationarity.norm(),
        worst_primal_violation: primal.max(0.0),
        worst_complementarity: comp,
    }
}
