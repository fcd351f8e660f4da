//! Quasi-Newton minimization with Armijo backtracking.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOptions {
    pub gradient_tol: f64,
    pub max_iter: usize,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self { gradient_tol: 1e-8, max_iter: 2000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BfgsResult {
    pub x: DVector<f64>,
    pub value: f64,
    pub gradient: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
}

const ARMIJO_C: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;
/// Consecutive iterations without a meaningful decrease before giving up.
const MAX_STALLS: usize = 20;
const STALL_TOL: f64 = 1e-15;

/// Minimizes `f`, which returns `None` where it is not defined. `None` at the start point
/// yields `None`. Stops early, unconverged, after a run of iterations without decrease.
pub fn bfgs<F>(f: F, x0: DVector<f64>, opts: &BfgsOptions) -> Option<BfgsResult>
where
    F: Fn(&DVector<f64>) -> Option<(f64, DVector<f64>)>,
{
    let k = x0.len();
    let (mut fx, mut g) = f(&x0)?;
    let mut x = x0;
    let mut h = DMatrix::<f64>::identity(k, k);
    let mut iterations = 0;
    let mut stalls = 0;
    while iterations < opts.max_iter {
        if g.amax() < opts.gradient_tol {
            return Some(BfgsResult { x, value: fx, gradient: g, iterations, converged: true });
        }
        iterations += 1;
        let mut dir = -(&h * &g);
        let mut slope = g.dot(&dir);
        if !(slope < 0.0) {
            h = DMatrix::identity(k, k);
            dir = -g.clone();
            slope = g.dot(&dir);
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial = &x + &dir * step;
            if let Some((ft, gt)) = f(&trial) {
                let armijo = ft <= fx + ARMIJO_C * step * slope;
                // near the optimum the decrease drops below rounding; accept a smaller gradient
                let flat = ft <= fx + 1e-14 * fx.abs() && gt.amax() < g.amax();
                if ft.is_finite() && (armijo || flat) {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            if h != DMatrix::identity(k, k) {
                h = DMatrix::identity(k, k);
                continue;
            }
            break;
        };
        let s = &xn - &x;
        let y = &gn - &g;
        let sy = s.dot(&y);
        if sy > 1e-16 * s.norm() * y.norm() && sy > 0.0 {
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            // H+ = (I - rho s y') H (I - rho y s') + rho s s'
            h = &h - (&hy * s.transpose() + &s * hy.transpose()) * rho + &s * s.transpose() * (rho * rho * yhy + rho);
        }
        stalls = if fx - fn_ <= STALL_TOL * (1.0 + fx.abs()) { stalls + 1 } else { 0 };
        x = xn;
        fx = fn_;
        g = gn;
        if stalls >= MAX_STALLS && g.amax() >= opts.gradient_tol {
            break;
        }
    }
    let converged = g.amax() < opts.gradient_tol;
    Some(BfgsResult { x, value: fx, gradient: g, iterations, converged })
}
