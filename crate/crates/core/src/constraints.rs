//! Quadratic barriers, the discrete-time CBF residual and formation bounds.

use serde::{Deserialize, Serialize};

use crate::error::check_dim;
use crate::{Error, Matrix, Result, Vector};

/// Smallest admissible eigenvalue of a barrier shape matrix.
pub const PD_TOLERANCE: f64 = 1e-10;

/// `h(s, θ) = (s − θ)ᵀ Q (s − θ) − r²`; the agent must stay where `h ≥ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticBarrier {
    pub theta: Vector,
    pub q: Matrix,
    pub r: f64,
}

impl QuadraticBarrier {
    pub fn new(theta: Vector, q: Matrix, r: f64) -> Result<Self> {
        check_dim(theta.len(), q.nrows())?;
        check_dim(theta.len(), q.ncols())?;
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidParameter(format!("barrier radius must be positive, got {r}")));
        }
        check_spd(&q)?;
        Ok(Self { theta, q, r })
    }

    /// Circular barrier (`Q = I`).
    pub fn circle(theta: Vector, r: f64) -> Result<Self> {
        let d = theta.len();
        Self::new(theta, Matrix::identity(d, d), r)
    }

    pub fn with_radius(&self, r: f64) -> Result<Self> {
        Self::new(self.theta.clone(), self.q.clone(), r)
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }
}

/// Fails unless `q` is symmetric with every eigenvalue above [`PD_TOLERANCE`].
pub fn check_spd(q: &Matrix) -> Result<()> {
    if !q.is_square() {
        return Err(Error::InvalidParameter("shape matrix must be square".into()));
    }
    let scale = q.amax().max(1.0);
    if (q - q.transpose()).amax() > 1e-12 * scale {
        return Err(Error::InvalidParameter("shape matrix must be symmetric".into()));
    }
    let eig = q.clone().symmetric_eigen();
    let min = eig.eigenvalues.min();
    if !(min > PD_TOLERANCE) {
        return Err(Error::InvalidParameter(format!(
            "shape matrix must be positive definite (smallest eigenvalue {min:.3e})"
        )));
    }
    Ok(())
}

/// Decay rate of the discrete-time CBF condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CbfParams {
    pub gamma: f64,
}

impl CbfParams {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidParameter(format!("gamma must lie in (0, 1), got {gamma}")));
        }
        Ok(Self { gamma })
    }
}

impl Default for CbfParams {
    fn default() -> Self {
        Self { gamma: 0.3 }
    }
}

/// How the obstacle constraint is imposed on the next step.
///
/// `Cbf` enforces `h(s⁺) ≥ (1 − γ) h(s)`. `Circle` enforces plain next-step
/// feasibility `h(s⁺) ≥ 0`, i.e. the `γ → 1` limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintForm {
    #[default]
    Cbf,
    Circle,
}

impl ConstraintForm {
    pub fn decay(self, cbf: &CbfParams) -> f64 {
        match self {
            ConstraintForm::Cbf => cbf.gamma,
            ConstraintForm::Circle => 1.0,
        }
    }
}

/// Pairwise distance band `d − ε ≤ ‖s_i − s_j‖ ≤ d + ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormationConstraint {
    pub i: usize,
    pub j: usize,
    pub dist: f64,
    pub slack: f64,
}

impl FormationConstraint {
    pub fn new(i: usize, j: usize, dist: f64, slack: f64) -> Result<Self> {
        if i == j {
            return Err(Error::InvalidParameter("formation needs two distinct agents".into()));
        }
        if !(slack > 0.0 && dist - slack > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "formation requires 0 < slack < dist (dist {dist}, slack {slack})"
            )));
        }
        Ok(Self { i, j, dist, slack })
    }

    pub fn lower(&self) -> f64 {
        self.dist - self.slack
    }

    pub fn upper(&self) -> f64 {
        self.dist + self.slack
    }

    pub fn involves(&self, agent: usize) -> bool {
        self.i == agent || self.j == agent
    }

    /// The agent paired with `agent`, if this constraint involves it.
    pub fn partner_of(&self, agent: usize) -> Option<usize> {
        if self.i == agent {
            Some(self.j)
        } else if self.j == agent {
            Some(self.i)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityBound {
    pub v_max: f64,
}

impl VelocityBound {
    pub fn new(v_max: f64) -> Result<Self> {
        if !(v_max > 0.0) {
            return Err(Error::InvalidParameter(format!("v_max must be positive, got {v_max}")));
        }
        Ok(Self { v_max })
    }
}

/// `‖x‖²_Q = xᵀ Q x`.
pub fn q_norm_sq(x: &Vector, q: &Matrix) -> f64 {
    x.dot(&(q * x))
}

pub fn barrier_value(s: &Vector, b: &QuadraticBarrier) -> f64 {
    q_norm_sq(&(s - &b.theta), &b.q) - b.r * b.r
}

/// `∇_u h(s⁺) = 2 B_sᵀ Q (s⁺ − θ)`.
pub fn barrier_grad_u(s_next: &Vector, b: &QuadraticBarrier, b_s: &Matrix) -> Vector {
    b_s.transpose() * (&b.q * (s_next - &b.theta)) * 2.0
}

/// `h(s⁺) − (1 − γ) h(s)`; nonnegative iff the CBF condition holds.
pub fn cbf_residual(s_t: &Vector, s_next: &Vector, b: &QuadraticBarrier, p: &CbfParams) -> f64 {
    decay_residual(s_t, s_next, b, p.gamma)
}

/// Same as [`cbf_residual`] for an arbitrary decay in `(0, 1]`.
pub fn decay_residual(s_t: &Vector, s_next: &Vector, b: &QuadraticBarrier, decay: f64) -> f64 {
    barrier_value(s_next, b) - (1.0 - decay) * barrier_value(s_t, b)
}

/// `(g_lower, g_upper)`; both nonnegative iff the pair sits inside its band.
pub fn formation_values(s_i: &Vector, s_j: &Vector, fc: &FormationConstraint) -> (f64, f64) {
    let dist_sq = (s_i - s_j).norm_squared();
    (dist_sq - fc.lower().powi(2), fc.upper().powi(2) - dist_sq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{control_matrix, next_position, DynamicsParams};
    use crate::vector;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn diag(a: f64, b: f64) -> Matrix {
        Matrix::from_diagonal(&vector(&[a, b]))
    }

    #[test]
    fn barrier_examples() {
        let b = QuadraticBarrier::circle(vector(&[0.0, 0.0]), 1.0).unwrap();
        assert_abs_diff_eq!(barrier_value(&vector(&[3.0, 0.0]), &b), 8.0);
        let b2 = QuadraticBarrier::new(vector(&[1.0, -1.0]), diag(2.0, 5.0), 2.0).unwrap();
        assert_abs_diff_eq!(barrier_value(&vector(&[1.0, -1.0]), &b2), -4.0);
        let b3 = QuadraticBarrier::new(vector(&[0.0, 0.0]), diag(1.0, 4.0), 1.0).unwrap();
        assert_abs_diff_eq!(barrier_value(&vector(&[0.0, 2.0]), &b3), 15.0);
    }

    #[test]
    fn rejects_bad_shapes() {
        let theta = vector(&[0.0, 0.0]);
        assert!(QuadraticBarrier::new(theta.clone(), diag(1.0, 0.0), 1.0).is_err());
        assert!(QuadraticBarrier::new(theta.clone(), diag(1.0, -2.0), 1.0).is_err());
        let asym = Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(QuadraticBarrier::new(theta.clone(), asym, 1.0).is_err());
        assert!(QuadraticBarrier::circle(theta.clone(), 0.0).is_err());
        assert!(CbfParams::new(1.0).is_err());
        assert!(CbfParams::new(0.0).is_err());
        assert!(FormationConstraint::new(0, 0, 1.0, 0.1).is_err());
        assert!(FormationConstraint::new(0, 1, 0.1, 0.2).is_err());
        assert!(VelocityBound::new(0.0).is_err());
    }

    #[test]
    fn gradient_examples() {
        let b = QuadraticBarrier::circle(vector(&[0.0, 0.0]), 1.0).unwrap();
        let bs = Matrix::identity(2, 2) * 0.005;
        assert_abs_diff_eq!(barrier_grad_u(&vector(&[0.0, 0.0]), &b, &bs), vector(&[0.0, 0.0]));
        assert_abs_diff_eq!(barrier_grad_u(&vector(&[1.0, 0.0]), &b, &bs), vector(&[0.01, 0.0]), epsilon = 1e-15);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let params = DynamicsParams::new(0.1, 2).unwrap();
        let bs = control_matrix(&params);
        for _ in 0..1000 {
            let a: f64 = rng.gen_range(0.2..3.0);
            let c: f64 = rng.gen_range(0.2..3.0);
            let off: f64 = rng.gen_range(-0.1..0.1) * (a * c).sqrt();
            let q = Matrix::from_row_slice(2, 2, &[a, off, off, c]);
            let theta = vector(&[rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)]);
            let b = QuadraticBarrier::new(theta, q, rng.gen_range(0.5..2.0)).unwrap();
            let p = vector(&[rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)]);
            let v = vector(&[rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]);
            let u = vector(&[rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0)]);
            let analytic = barrier_grad_u(&next_position(&p, &v, &u, &params), &b, &bs);
            let h = 1e-3;
            let fd = Vector::from_fn(2, |k, _| {
                let mut up = u.clone();
                let mut um = u.clone();
                up[k] += h;
                um[k] -= h;
                (barrier_value(&next_position(&p, &v, &up, &params), &b)
                    - barrier_value(&next_position(&p, &v, &um, &params), &b))
                    / (2.0 * h)
            });
            let rel = (&analytic - &fd).norm() / analytic.norm().max(1e-8);
            assert!(rel < 1e-6, "relative gradient error {rel}");
        }
    }

    #[test]
    fn cbf_residual_examples() {
        let b = QuadraticBarrier::circle(vector(&[0.0, 0.0]), 1.0).unwrap();
        let p = CbfParams::new(0.3).unwrap();
        let s = vector(&[2.0, 0.0]);
        assert_abs_diff_eq!(cbf_residual(&s, &s, &b, &p), 0.3 * 3.0, epsilon = 1e-12);
        let on = vector(&[1.0, 0.0]);
        assert_abs_diff_eq!(cbf_residual(&on, &on, &b, &p), 0.0);
        assert_abs_diff_eq!(cbf_residual(&s, &vector(&[1.5, 0.0]), &b, &p), -0.85, epsilon = 1e-12);
    }

    #[test]
    fn formation_examples() {
        let fc = FormationConstraint::new(0, 1, 1.5, 0.3).unwrap();
        let a = vector(&[0.0, 0.0]);
        let (lo, hi) = formation_values(&a, &vector(&[1.5, 0.0]), &fc);
        assert_abs_diff_eq!(lo, 2.25 - 1.44, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, 3.24 - 2.25, epsilon = 1e-12);
        assert_abs_diff_eq!(formation_values(&a, &vector(&[0.0, 1.2]), &fc).0, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(formation_values(&a, &vector(&[1.8, 0.0]), &fc).1, 0.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn identity_shape_is_circle(s in prop::array::uniform2(-5.0..5.0f64), t in prop::array::uniform2(-5.0..5.0f64), r in 0.1..3.0f64) {
            let b = QuadraticBarrier::circle(vector(&t), r).unwrap();
            let direct = (vector(&s) - vector(&t)).norm_squared() - r * r;
            prop_assert!((barrier_value(&vector(&s), &b) - direct).abs() < 1e-12);
        }

        #[test]
        fn at_most_one_formation_bound_violated(
            si in prop::array::uniform2(-5.0..5.0f64),
            sj in prop::array::uniform2(-5.0..5.0f64),
            dist in 0.5..3.0f64,
            frac in 0.01..0.99f64,
        ) {
            let fc = FormationConstraint::new(0, 1, dist, frac * dist).unwrap();
            let (lo, hi) = formation_values(&vector(&si), &vector(&sj), &fc);
            prop_assert!(!(lo < 0.0 && hi < 0.0));
            prop_assert!((lo + hi - (fc.upper().powi(2) - fc.lower().powi(2))).abs() < 1e-9);
        }
    }
}
