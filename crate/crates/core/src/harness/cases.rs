//! Randomized forward-filter cases with known ground truth.
//!
//! Each case runs [`solve`] on a problem whose obstacle is known, then hands
//! back the resulting observation. Inverse solvers are checked against the
//! obstacle that produced it.

use rand::Rng;

use crate::constraints::{CbfParams, FormationConstraint, QuadraticBarrier};
use crate::dynamics::DynamicsParams;
use crate::inference::{InferenceConfig, Observation};
use crate::safety_filter::{solve, FilterProblem, FilterSolution};
use crate::{Matrix, Vector};

/// Smallest deviation a generated case may have.
const MIN_DEVIATION: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct OracleCase {
    pub obs: Observation,
    pub cfg: InferenceConfig,
    pub theta: Vector,
    pub problem: FilterProblem,
    pub solution: FilterSolution,
}

/// Observation of a single circular obstacle filter with the given geometry.
pub fn obstacle_only_observation(
    theta: Vector,
    r: f64,
    gamma: f64,
    s_t: Vector,
    v_t: Vector,
    u_nom: Vector,
) -> (Observation, Vector) {
    let dim = s_t.len();
    let problem = FilterProblem::new(s_t, v_t, u_nom, CbfParams::new(gamma).expect("gamma"), DynamicsParams::new(0.1, dim).expect("dt"))
        .with_barrier(QuadraticBarrier::circle(theta.clone(), r).expect("radius"));
    let sol = solve(&problem).expect("feasible");
    (Observation::from_filter(&problem, &sol), theta)
}

fn random_unit<R: Rng>(rng: &mut R, dim: usize) -> Vector {
    loop {
        let v = Vector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Random SPD shape with eigenvalues in `[0.5, 2]`; identity in two dimensions.
fn random_shape<R: Rng>(rng: &mut R, dim: usize) -> Matrix {
    if dim == 2 {
        return Matrix::identity(2, 2);
    }
    let a = Matrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0));
    let qr = a.qr();
    let u = qr.q();
    let eig = Vector::from_fn(dim, |_, _| rng.gen_range(0.5..2.0));
    &u * Matrix::from_diagonal(&eig) * u.transpose()
}

/// Point on the `Q`-ellipse of radius `scale` around the origin, in direction `w`.
fn q_scaled(w: &Vector, q: &Matrix, scale: f64) -> Vector {
    w * (scale / w.dot(&(q * w)).sqrt())
}

struct Geometry {
    theta: Vector,
    q: Matrix,
    r: f64,
    gamma: f64,
    s_t: Vector,
    v_t: Vector,
    u_nom: Vector,
}

fn approach<R: Rng>(rng: &mut R, dim: usize) -> Geometry {
    let theta = Vector::from_fn(dim, |_, _| rng.gen_range(-5.0..5.0));
    let q = random_shape(rng, dim);
    let r = rng.gen_range(0.5..2.0);
    let gamma = rng.gen_range(0.1..0.9);
    let w = random_unit(rng, dim);
    let s_t = &theta + q_scaled(&w, &q, r * rng.gen_range(1.01..1.5));
    let inward = -&w + random_unit(rng, dim) * 0.4;
    let v_t = inward.normalize() * rng.gen_range(0.3..3.0);
    let u_nom = -&w * rng.gen_range(0.0..6.0) + random_unit(rng, dim) * rng.gen_range(0.0..3.0);
    Geometry { theta, q, r, gamma, s_t, v_t, u_nom }
}

/// A case where exactly the barrier constraint is active.
pub fn random_obstacle_case<R: Rng>(rng: &mut R, dim: usize) -> OracleCase {
    loop {
        let g = approach(rng, dim);
        let barrier = QuadraticBarrier::new(g.theta.clone(), g.q.clone(), g.r).expect("spd");
        let cbf = CbfParams::new(g.gamma).expect("gamma");
        let problem = FilterProblem::new(g.s_t, g.v_t, g.u_nom, cbf, DynamicsParams::new(0.1, dim).expect("dt"))
            .with_barrier(barrier);
        let Ok(solution) = solve(&problem) else { continue };
        let a = solution.active_set;
        if !a.obstacle || a.formation() || a.velocity {
            continue;
        }
        if (&solution.u_safe - &problem.u_nom).norm() < MIN_DEVIATION {
            continue;
        }
        let obs = Observation::from_filter(&problem, &solution);
        let cfg = InferenceConfig::new(cbf, g.q, g.r).expect("config");
        return OracleCase { obs, cfg, theta: g.theta, problem, solution };
    }
}

/// A case where the barrier and one formation bound are active together.
///
/// The partner's next position is placed so the obstacle-only solution misses
/// the formation band by a margin drawn from `mismatch`.
pub fn random_two_active_case<R: Rng>(rng: &mut R, dim: usize, mismatch: (f64, f64)) -> OracleCase {
    loop {
        let base = random_obstacle_case(rng, dim);
        let dist = rng.gen_range(1.0..2.5);
        let slack = rng.gen_range(0.05..0.2) * dist;
        let fc = FormationConstraint::new(0, 1, dist, slack).expect("formation");
        let s_free = base.problem.next_position(&base.solution.u_safe);
        let delta = rng.gen_range(mismatch.0..mismatch.1);
        let (radius, _) = if rng.gen_bool(0.5) { (fc.upper() + delta, true) } else { (fc.lower() - delta, false) };
        let partner_next = &s_free + random_unit(rng, dim) * radius;
        let problem = base.problem.clone().with_formation(fc, partner_next);
        let Ok(solution) = solve(&problem) else { continue };
        let a = solution.active_set;
        if !a.obstacle || !a.formation() || a.velocity {
            continue;
        }
        let obs = Observation::from_filter(&problem, &solution);
        return OracleCase { obs, cfg: base.cfg, theta: base.theta, problem, solution };
    }
}

/// A case where a formation bound alone modifies the nominal control.
pub fn random_formation_only_case<R: Rng>(rng: &mut R, dim: usize) -> OracleCase {
    loop {
        let s_t = Vector::from_fn(dim, |_, _| rng.gen_range(-5.0..5.0));
        let v_t = random_unit(rng, dim) * rng.gen_range(0.0..2.0);
        let u_nom = random_unit(rng, dim) * rng.gen_range(0.5..5.0);
        let dist = rng.gen_range(1.0..2.5);
        let fc = FormationConstraint::new(0, 1, dist, 0.1 * dist).expect("formation");
        let dyn_p = DynamicsParams::new(0.1, dim).expect("dt");
        let s_free = crate::dynamics::next_position(&s_t, &v_t, &u_nom, &dyn_p);
        let radius = if rng.gen_bool(0.5) { fc.upper() + 0.01 } else { fc.lower() - 0.01 };
        let partner_next = &s_free + random_unit(rng, dim) * radius;
        let cbf = CbfParams::default();
        let problem = FilterProblem::new(s_t, v_t, u_nom, cbf, dyn_p).with_formation(fc, partner_next);
        let Ok(solution) = solve(&problem) else { continue };
        if !solution.active_set.formation() {
            continue;
        }
        let obs = Observation::from_filter(&problem, &solution);
        let cfg = InferenceConfig::circle(cbf, dim, 1.0).expect("config");
        let theta = Vector::from_element(dim, f64::NAN);
        return OracleCase { obs, cfg, theta, problem, solution };
    }
}
