//! Derivative-free simplex minimization with the standard coefficients
//! (reflection 1, expansion 2, contraction ½, shrink ½).

use crate::Vector;

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vector,
    pub fx: f64,
    pub iterations: usize,
    /// Best objective after each iteration.
    pub trace: Vec<f64>,
}

const ALPHA: f64 = 1.0;
const GAMMA: f64 = 2.0;
const RHO: f64 = 0.5;
const SIGMA: f64 = 0.5;

/// Minimizes `f` from an axis-aligned simplex of edge `size` at `x0`, for exactly
/// `max_iter` iterations. NaN objective values are treated as `+∞`.
pub fn minimize(mut f: impl FnMut(&Vector) -> f64, x0: &Vector, size: f64, max_iter: usize) -> NelderMeadResult {
    let n = x0.len();
    let mut eval = |x: &Vector| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<(Vector, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.clone(), eval(x0)));
    for i in 0..n {
        let mut x = x0.clone();
        x[i] += size;
        let fx = eval(&x);
        simplex.push((x, fx));
    }

    let mut trace = Vec::with_capacity(max_iter);
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let centroid = simplex[..n].iter().fold(Vector::zeros(n), |acc, (x, _)| acc + x) / n as f64;
        let (worst, f_worst) = simplex[n].clone();
        let f_best = simplex[0].1;
        let f_second = simplex[n - 1].1;

        let xr = &centroid + (&centroid - &worst) * ALPHA;
        let fr = eval(&xr);
        if fr < f_best {
            let xe = &centroid + (&xr - &centroid) * GAMMA;
            let fe = eval(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < f_second {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc, ok) = if fr < f_worst {
                let xc = &centroid + (&xr - &centroid) * RHO;
                let fc = eval(&xc);
                let ok = fc <= fr;
                (xc, fc, ok)
            } else {
                let xc = &centroid + (&worst - &centroid) * RHO;
                let fc = eval(&xc);
                let ok = fc < f_worst;
                (xc, fc, ok)
            };
            if ok {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    let x = &best + (&entry.0 - &best) * SIGMA;
                    let fx = eval(&x);
                    *entry = (x, fx);
                }
            }
        }
        trace.push(simplex.iter().map(|e| e.1).fold(f64::INFINITY, f64::min));
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, fx) = simplex.swap_remove(0);
    NelderMeadResult { x, fx, iterations: max_iter, trace }
}
