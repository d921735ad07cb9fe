//! Exact KKT-point enumeration for a least-distance problem with a handful of
//! quadratic constraints.
//!
//! Every constraint is written in control space as
//! `g(u) = σ·((u − a)ᵀ M (u − a) − ρ) ≥ 0` with `M ≻ 0`; `σ = +1` keeps `u`
//! outside an ellipsoid, `σ = −1` keeps it inside.

use crate::{Matrix, Vector};

const BISECT_ITERS: usize = 400;

#[derive(Debug, Clone)]
pub(crate) struct QuadConstraint {
    pub sigma: f64,
    pub m: Matrix,
    pub a: Vector,
    pub rho: f64,
    eigvals: Vector,
    eigvecs: Matrix,
}

impl QuadConstraint {
    pub fn new(sigma: f64, m: Matrix, a: Vector, rho: f64) -> Self {
        let eig = m.clone().symmetric_eigen();
        Self { sigma, m, a, rho, eigvals: eig.eigenvalues, eigvecs: eig.eigenvectors }
    }

    pub fn value(&self, u: &Vector) -> f64 {
        let w = u - &self.a;
        self.sigma * (w.dot(&(&self.m * &w)) - self.rho)
    }

    pub fn grad(&self, u: &Vector) -> Vector {
        &self.m * (u - &self.a) * (2.0 * self.sigma)
    }

    fn dim(&self) -> usize {
        self.a.len()
    }
}

/// Eigenvalue groups (equal within a relative tolerance), largest first.
fn eigen_groups(c: &QuadConstraint) -> Vec<(f64, Vec<usize>)> {
    let mut idx: Vec<usize> = (0..c.dim()).collect();
    idx.sort_by(|&i, &j| c.eigvals[j].partial_cmp(&c.eigvals[i]).unwrap());
    let top = c.eigvals[idx[0]];
    let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
    for i in idx {
        let m = c.eigvals[i];
        match groups.last_mut() {
            Some((gm, members)) if (*gm - m).abs() <= 1e-12 * top => members.push(i),
            _ => groups.push((m, vec![i])),
        }
    }
    groups
}

/// Bisection for a sign change of `f` on `(lo, hi)`; `f_lo_pos` is the sign at `lo`.
fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, f_lo_pos: bool) -> f64 {
    for _ in 0..BISECT_ITERS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid);
        if (v > 0.0) == f_lo_pos {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Every KKT point of `min ½‖u − u_nom‖² s.t. g(u) = 0` with multiplier `λ ≥ 0`.
///
/// Stationarity gives `(I − 2λσM)(u − a) = u_nom − a`; in the eigenbasis of `M`
/// this reduces to the secular equation
/// `φ(λ) = Σ m_i z_i² / (1 − 2λσ m_i)² − ρ = 0`, convex between consecutive poles.
pub(crate) fn single_candidates(c: &QuadConstraint, u_nom: &Vector) -> Vec<(Vector, f64)> {
    let z0 = c.eigvecs.transpose() * (u_nom - &c.a);
    let sigma = c.sigma;
    let m = &c.eigvals;
    let n = c.dim();
    let scale = z0.norm().max(c.rho.abs().sqrt()).max(1e-300);

    let phi = |lam: f64| -> f64 {
        let mut s = -c.rho;
        for i in 0..n {
            if z0[i] != 0.0 {
                let den = 1.0 - 2.0 * lam * sigma * m[i];
                s += m[i] * z0[i] * z0[i] / (den * den);
            }
        }
        s
    };
    let dphi = |lam: f64| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            if z0[i] != 0.0 {
                let den = 1.0 - 2.0 * lam * sigma * m[i];
                s += 4.0 * sigma * m[i] * m[i] * z0[i] * z0[i] / (den * den * den);
            }
        }
        s
    };
    let point = |lam: f64| -> Vector {
        let z = Vector::from_fn(n, |i, _| {
            if z0[i] == 0.0 {
                0.0
            } else {
                z0[i] / (1.0 - 2.0 * lam * sigma * m[i])
            }
        });
        &c.a + &c.eigvecs * z
    };

    let mut roots: Vec<f64> = Vec::new();
    let mut out: Vec<(Vector, f64)> = Vec::new();

    if sigma < 0.0 {
        // Keep-in: φ strictly decreasing on λ ≥ 0.
        let f0 = phi(0.0);
        if f0 > 0.0 {
            let mut hi = 1.0 / (2.0 * m.max());
            while phi(hi) > 0.0 && hi < 1e300 {
                hi *= 2.0;
            }
            roots.push(bisect(&phi, 0.0, hi, true));
        }
    } else {
        let groups = eigen_groups(c);
        let active: Vec<bool> = groups
            .iter()
            .map(|(_, members)| {
                let w: f64 = members.iter().map(|&i| z0[i] * z0[i]).sum::<f64>().sqrt();
                w > 0.0
            })
            .collect();
        let poles: Vec<f64> = groups.iter().map(|(gm, _)| 1.0 / (2.0 * gm)).collect();

        // First interval [0, p₁): φ increasing.
        let f0 = phi(0.0);
        let hi_pos = active[0] || phi(poles[0]) > 0.0;
        if f0 <= 0.0 && hi_pos {
            if f0 == 0.0 {
                roots.push(0.0);
            } else {
                roots.push(bisect(&phi, 0.0, poles[0], false));
            }
        }
        // Middle intervals: convex, up to two roots each.
        for k in 0..poles.len().saturating_sub(1) {
            let (lo, hi) = (poles[k], poles[k + 1]);
            let lo_pos = active[k] || phi(lo) > 0.0;
            let hi_pos = active[k + 1] || phi(hi) > 0.0;
            let d_lo_neg = active[k] || dphi(lo) < 0.0;
            let d_hi_pos = active[k + 1] || dphi(hi) > 0.0;
            let xm = if !d_lo_neg {
                lo
            } else if !d_hi_pos {
                hi
            } else {
                bisect(&dphi, lo, hi, false)
            };
            let fm = phi(xm);
            if fm <= 0.0 {
                if lo_pos && xm > lo {
                    roots.push(bisect(&phi, lo, xm, true));
                }
                if hi_pos && xm < hi {
                    roots.push(bisect(&phi, xm, hi, false));
                }
            }
        }
        // Last interval (p_K, ∞): φ decreasing towards −ρ.
        let last = poles.len() - 1;
        let lo = poles[last];
        if active[last] || phi(lo) > 0.0 {
            let mut hi = 2.0 * lo;
            while phi(hi) > 0.0 && hi < 1e300 {
                hi *= 2.0;
            }
            roots.push(bisect(&phi, lo, hi, true));
        }

        // Hard case: the pole itself, with a free component along a group
        // whose projection of u_nom − a (nearly) vanishes.
        for (g, (gm, members)) in groups.iter().enumerate() {
            let w: f64 = members.iter().map(|&i| z0[i] * z0[i]).sum::<f64>().sqrt();
            if w > 1e-9 * scale {
                continue;
            }
            let lam = poles[g];
            let mut z = Vector::zeros(n);
            let mut rem = c.rho;
            for i in 0..n {
                if members.contains(&i) {
                    continue;
                }
                z[i] = z0[i] / (1.0 - m[i] / gm);
                rem -= m[i] * z[i] * z[i];
            }
            if rem < 0.0 {
                continue;
            }
            let t = (rem / gm).sqrt();
            for sign in [1.0, -1.0] {
                let mut zz = z.clone();
                zz[members[0]] = sign * t;
                out.push((&c.a + &c.eigvecs * zz, lam));
            }
        }
    }

    let mut pts: Vec<(Vector, f64)> = roots.into_iter().map(|lam| (point(lam), lam)).collect();
    pts.extend(out);
    pts
}

/// Points on the boundary of both constraints that satisfy stationarity with
/// some multipliers (signs checked by the caller).
pub(crate) fn pair_candidates(
    c1: &QuadConstraint,
    c2: &QuadConstraint,
    u_nom: &Vector,
    seeds: &[Vector],
) -> Vec<(Vector, f64, f64)> {
    let points = if c1.dim() == 2 {
        conic_intersections(c1, c2)
    } else {
        newton_intersections(c1, c2, u_nom, seeds)
    };
    points
        .into_iter()
        .filter_map(|u| {
            let g1 = c1.grad(&u);
            let g2 = c2.grad(&u);
            let a = Matrix::from_columns(&[g1, g2]);
            let rhs = &u - u_nom;
            let ata = a.transpose() * &a;
            let chol = ata.clone().cholesky()?;
            if ata.determinant().abs() <= 1e-14 * ata.norm_squared() {
                return None;
            }
            let lam = chol.solve(&(a.transpose() * rhs));
            Some((u, lam[0], lam[1]))
        })
        .collect()
}

const CONIC_SAMPLES: usize = 720;

fn conic_intersections(c1: &QuadConstraint, c2: &QuadConstraint) -> Vec<Vector> {
    if c1.rho <= 0.0 {
        return Vec::new();
    }
    // Boundary of c1: u(φ) = a + V diag(√(ρ/m)) (cos φ, sin φ).
    let axes = Vector::from_fn(2, |i, _| (c1.rho / c1.eigvals[i]).sqrt());
    let at = |phi: f64| -> Vector {
        let z = Vector::from_column_slice(&[axes[0] * phi.cos(), axes[1] * phi.sin()]);
        &c1.a + &c1.eigvecs * z
    };
    let g = |phi: f64| c2.value(&at(phi));
    let step = std::f64::consts::TAU / CONIC_SAMPLES as f64;
    let mut out = Vec::new();
    let mut prev = g(0.0);
    for k in 1..=CONIC_SAMPLES {
        let phi = k as f64 * step;
        let cur = g(phi);
        if prev == 0.0 {
            out.push(at(phi - step));
        } else if (prev > 0.0) != (cur > 0.0) && cur != 0.0 {
            let root = bisect(&g, phi - step, phi, prev > 0.0);
            out.push(at(root));
        }
        prev = cur;
    }
    out
}

fn newton_intersections(c1: &QuadConstraint, c2: &QuadConstraint, u_nom: &Vector, seeds: &[Vector]) -> Vec<Vector> {
    let d = c1.dim();
    let mut found: Vec<Vector> = Vec::new();
    for seed in seeds {
        let mut x = Vector::zeros(d + 2);
        x.rows_mut(0, d).copy_from(seed);
        let residual = |x: &Vector| -> Vector {
            let u = x.rows(0, d).into_owned();
            let mut r = Vector::zeros(d + 2);
            let st = &u - u_nom - c1.grad(&u) * x[d] - c2.grad(&u) * x[d + 1];
            r.rows_mut(0, d).copy_from(&st);
            r[d] = c1.value(&u);
            r[d + 1] = c2.value(&u);
            r
        };
        for _ in 0..60 {
            let r = residual(&x);
            if r.norm() < 1e-13 {
                break;
            }
            let u = x.rows(0, d).into_owned();
            let mut jac = Matrix::zeros(d + 2, d + 2);
            let hess = Matrix::identity(d, d) - &c1.m * (2.0 * c1.sigma * x[d]) - &c2.m * (2.0 * c2.sigma * x[d + 1]);
            jac.view_mut((0, 0), (d, d)).copy_from(&hess);
            let g1 = c1.grad(&u);
            let g2 = c2.grad(&u);
            jac.view_mut((0, d), (d, 1)).copy_from(&(-&g1));
            jac.view_mut((0, d + 1), (d, 1)).copy_from(&(-&g2));
            jac.view_mut((d, 0), (1, d)).copy_from(&g1.transpose());
            jac.view_mut((d + 1, 0), (1, d)).copy_from(&g2.transpose());
            let Some(dx) = jac.lu().solve(&(-&r)) else { break };
            let base = r.norm();
            let mut alpha = 1.0;
            loop {
                let trial = &x + &dx * alpha;
                if residual(&trial).norm() < base || alpha < 1e-10 {
                    x = trial;
                    break;
                }
                alpha *= 0.5;
            }
        }
        if residual(&x).norm() < 1e-10 {
            let u = x.rows(0, d).into_owned();
            if !found.iter().any(|f| (f - &u).norm() < 1e-9) {
                found.push(u);
            }
        }
    }
    found
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vector;

    #[test]
    fn circle_projection_from_inside_has_near_and_far_points() {
        let c = QuadConstraint::new(1.0, Matrix::identity(2, 2), vector(&[0.0, 0.0]), 1.0);
        let pts = single_candidates(&c, &vector(&[0.5, 0.0]));
        assert_eq!(pts.len(), 2);
        assert!((pts[0].0.clone() - vector(&[1.0, 0.0])).norm() < 1e-12);
        assert!((pts[1].0.clone() - vector(&[-1.0, 0.0])).norm() < 1e-12);
        assert!(pts.iter().all(|(_, l)| *l >= 0.0));
    }

    #[test]
    fn hard_case_at_center() {
        let c = QuadConstraint::new(1.0, Matrix::identity(2, 2), vector(&[1.0, 1.0]), 4.0);
        let pts = single_candidates(&c, &vector(&[1.0, 1.0]));
        assert_eq!(pts.len(), 2);
        for (u, _) in &pts {
            assert!((c.value(u)).abs() < 1e-12);
        }
    }

    #[test]
    fn ellipse_roots_lie_on_boundary_and_are_stationary() {
        let m = Matrix::from_row_slice(2, 2, &[3.0, 0.4, 0.4, 1.0]);
        let c = QuadConstraint::new(1.0, m, vector(&[0.2, -0.1]), 2.0);
        let u_nom = vector(&[0.3, 0.1]);
        let pts = single_candidates(&c, &u_nom);
        assert!(pts.len() >= 2);
        for (u, lam) in &pts {
            assert!(c.value(u).abs() < 1e-10);
            let st = u - &u_nom - c.grad(u) * *lam;
            assert!(st.norm() < 1e-9, "stationarity {}", st.norm());
        }
    }

    #[test]
    fn keep_in_projection() {
        let c = QuadConstraint::new(-1.0, Matrix::identity(2, 2) * 0.01, vector(&[0.0, 0.0]), 1.0);
        let pts = single_candidates(&c, &vector(&[20.0, 0.0]));
        assert_eq!(pts.len(), 1);
        assert!((pts[0].0.clone() - vector(&[10.0, 0.0])).norm() < 1e-9);
    }

    #[test]
    fn circle_pair_intersections() {
        let c1 = QuadConstraint::new(1.0, Matrix::identity(2, 2), vector(&[0.0, 0.0]), 1.0);
        let c2 = QuadConstraint::new(-1.0, Matrix::identity(2, 2), vector(&[1.0, 0.0]), 1.0);
        let pts = pair_candidates(&c1, &c2, &vector(&[0.5, 0.0]), &[]);
        assert_eq!(pts.len(), 2);
        for (u, _, _) in &pts {
            assert!((u[0] - 0.5).abs() < 1e-10);
        }
    }
}
