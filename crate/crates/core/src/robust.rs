//! Moving obstacles with bounded speed, and other teams treated as such.
//!
//! An obstacle that may move at up to `v_max` during one step is handled by
//! inflating its radius by `Δt·v_max`; [`worst_case_velocity`] gives the exact
//! worst case and is used to check that the inflation is conservative.

use serde::{Deserialize, Serialize};

use crate::constraints::QuadraticBarrier;
use crate::dynamics::AgentState;
use crate::{Error, Result, Vector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovingObstacle {
    pub center: Vector,
    pub v_max: f64,
    pub r_safe: f64,
}

impl MovingObstacle {
    pub fn new(center: Vector, v_max: f64, r_safe: f64) -> Result<Self> {
        if !(v_max > 0.0 && r_safe > 0.0 && v_max.is_finite() && r_safe.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "moving obstacle needs positive v_max and r_safe, got {v_max} and {r_safe}"
            )));
        }
        Ok(Self { center, v_max, r_safe })
    }

    /// Static circular barrier at the current center with the inflated radius.
    pub fn robust_barrier(&self, dt: f64) -> Result<QuadraticBarrier> {
        QuadraticBarrier::circle(self.center.clone(), robust_radius(self.r_safe, dt, self.v_max))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorstCase {
    pub v_star: Vector,
    pub h_min: f64,
    pub r: f64,
}

/// Obstacle velocity in the `v_max` ball that minimizes `‖c − Δt·v‖² − r²`,
/// where `c` is the agent's next position relative to the obstacle's current one.
pub fn worst_case_velocity(c: &Vector, dt: f64, v_max: f64, r: f64) -> WorstCase {
    let n = c.norm();
    let reach = dt * v_max;
    if n > reach {
        WorstCase { v_star: c * (v_max / n), h_min: (n - reach).powi(2) - r * r, r }
    } else {
        WorstCase { v_star: c / dt, h_min: -r * r, r }
    }
}

/// `r_safe + Δt·v_max`.
pub fn robust_radius(r_safe: f64, dt: f64, v_max: f64) -> f64 {
    r_safe + dt * v_max
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TeamObstacleConfig {
    pub v_max: f64,
    pub r_safe: f64,
}

/// The other team as one moving obstacle centered at its mean position.
pub fn team_as_obstacle(other_team: &[AgentState], cfg: &TeamObstacleConfig) -> Result<MovingObstacle> {
    let first = other_team
        .first()
        .ok_or_else(|| Error::InvalidParameter("team must not be empty".into()))?;
    let sum = other_team.iter().skip(1).fold(first.position.clone(), |acc, a| acc + &a.position);
    MovingObstacle::new(sum / other_team.len() as f64, cfg.v_max, cfg.r_safe)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample_ball<R: Rng>(rng: &mut R, radius: f64) -> Vector {
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        let rho = radius * rng.gen::<f64>().sqrt();
        vector(&[rho * angle.cos(), rho * angle.sin()])
    }

    fn sample_sphere<R: Rng>(rng: &mut R, radius: f64) -> Vector {
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        vector(&[radius * angle.cos(), radius * angle.sin()])
    }

    #[test]
    fn worst_case_examples() {
        let w = worst_case_velocity(&vector(&[2.0, 0.0]), 0.1, 1.0, 0.5);
        assert!((w.v_star - vector(&[1.0, 0.0])).norm() < 1e-15);
        assert!((w.h_min - 3.36).abs() < 1e-12);
        let w = worst_case_velocity(&vector(&[0.05, 0.0]), 0.1, 1.0, 0.5);
        assert!((w.v_star - vector(&[0.5, 0.0])).norm() < 1e-12);
        assert_eq!(w.h_min, -0.25);
        let w = worst_case_velocity(&vector(&[0.0, 0.0]), 0.1, 1.0, 0.5);
        assert_eq!(w.v_star, vector(&[0.0, 0.0]));
    }

    #[test]
    fn worst_case_is_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..1000 {
            let c = vector(&[rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]);
            let dt = rng.gen_range(0.01..0.5);
            let v_max = rng.gen_range(0.1..5.0);
            let target = &c / dt;
            let proj = if target.norm() <= v_max { target.clone() } else { target.normalize() * v_max };
            assert!((worst_case_velocity(&c, dt, v_max, 1.0).v_star - proj).norm() < 1e-9);
        }
    }

    #[test]
    fn worst_case_matches_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..50 {
            let c = vector(&[rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
            let dt = rng.gen_range(0.05..0.3);
            let v_max = rng.gen_range(0.5..3.0);
            let r = rng.gen_range(0.2..1.0);
            let w = worst_case_velocity(&c, dt, v_max, r);
            let mut best = f64::INFINITY;
            for k in 0..20_000 {
                // Every other sample sits on the boundary, where the minimizer usually is.
                let v = if k % 2 == 0 { sample_ball(&mut rng, v_max) } else { sample_sphere(&mut rng, v_max) };
                best = best.min((&c - v * dt).norm_squared() - r * r);
            }
            assert!(w.h_min <= best + 1e-12);
            assert!(best - w.h_min < 1e-4, "gap {}", best - w.h_min);
        }
    }

    #[test]
    fn radius_examples() {
        assert!((robust_radius(0.5, 0.1, 1.0) - 0.6).abs() < 1e-15);
        assert_eq!(robust_radius(0.5, 0.1, 0.0), 0.5);
        assert!((robust_radius(1.0, 0.2, 2.0) - 1.4).abs() < 1e-15);
    }

    #[test]
    fn inflation_is_conservative() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..1000 {
            let dt = rng.gen_range(0.05..0.3);
            let v_max = rng.gen_range(0.1..3.0);
            let r_safe = rng.gen_range(0.2..1.5);
            let rr = robust_radius(r_safe, dt, v_max);
            // Any next position outside the inflated circle.
            let c = sample_ball(&mut rng, 1.0).normalize() * rng.gen_range(rr..rr + 2.0);
            assert!(worst_case_velocity(&c, dt, v_max, r_safe).h_min >= -1e-12);
        }
    }

    #[test]
    fn team_centers() {
        let cfg = TeamObstacleConfig { v_max: 1.0, r_safe: 0.5 };
        let one = [AgentState::at_rest(vector(&[1.0, 2.0]))];
        assert_eq!(team_as_obstacle(&one, &cfg).unwrap().center, vector(&[1.0, 2.0]));
        let two = [AgentState::at_rest(vector(&[0.0, 0.0])), AgentState::at_rest(vector(&[2.0, 0.0]))];
        assert_eq!(team_as_obstacle(&two, &cfg).unwrap().center, vector(&[1.0, 0.0]));
        let square: Vec<_> = [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)]
            .iter()
            .map(|&(x, y)| AgentState::at_rest(vector(&[x + 3.0, y])))
            .collect();
        assert!((team_as_obstacle(&square, &cfg).unwrap().center - vector(&[3.0, 0.0])).norm() < 1e-15);
        assert!(team_as_obstacle(&[], &cfg).is_err());
    }

    proptest::proptest! {
        #[test]
        fn worst_case_is_ball_projection(
            cx in -2.0..2.0f64,
            cy in -2.0..2.0f64,
            dt in 0.01..0.5f64,
            v_max in 0.1..5.0f64,
        ) {
            let c = vector(&[cx, cy]);
            let w = worst_case_velocity(&c, dt, v_max, 1.0);
            proptest::prop_assert!(w.v_star.norm() <= v_max * (1.0 + 1e-12));
            // Optimality of a projection: (target − v*)·(v − v*) ≤ 0 for every v in the ball.
            let target = &c / dt;
            for k in 0..16 {
                let a = k as f64 * std::f64::consts::TAU / 16.0;
                let v = vector(&[v_max * a.cos(), v_max * a.sin()]);
                proptest::prop_assert!((&target - &w.v_star).dot(&(v - &w.v_star)) <= 1e-9 * (1.0 + target.norm_squared()));
            }
        }
    }
}
