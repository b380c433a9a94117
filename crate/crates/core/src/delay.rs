//! Retarded-time solver for `c tau = |z - x(t - tau)|`.
//!
//! For a path with Lipschitz constant `s < c` the residual
//! `g(tau) = c tau - |z - x(t - tau)|` is strictly increasing with slope at
//! least `c - s`, and its root lies in
//! `[|z - x(t)| / (c + s), |z - x(t)| / (c - s)]`. Both endpoints are
//! evaluated up front, so every returned delay is bracketed.

use crate::error::{Error, Result};
use crate::history::Path;
use crate::vecops::dist;

/// Below this distance the source is treated as coincident and `tau = 0`.
pub const COINCIDENCE_EPS: f64 = 1e-14;
/// Absolute resolution targeted on `tau`.
pub const TAU_RESOLUTION: f64 = 1e-13;
/// Relative tolerance on the residual, scaled by `max(1, c * hi)`.
pub const RESIDUAL_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DelayMethod {
    /// Plain bisection; the reference path.
    Bisection,
    /// Illinois false position inside the bracket.
    #[default]
    Secant,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayOptions {
    pub method: DelayMethod,
    pub max_iter: usize,
}

impl Default for DelayOptions {
    fn default() -> Self {
        Self { method: DelayMethod::default(), max_iter: 200 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayResult {
    pub tau: f64,
    /// Retarded position `x(t - tau)`.
    pub x_delayed: Vec<f64>,
    /// Certified bracket `(lo, hi)` from the Lipschitz bound.
    pub bracket: (f64, f64),
    pub iterations: usize,
    /// `|c tau - |z - x_delayed||`.
    pub residual: f64,
}

impl DelayResult {
    /// Self-observation: `tau = 0`, the observer sees itself where it is.
    pub fn coincident(x: &[f64]) -> Self {
        Self { tau: 0.0, x_delayed: x.to_vec(), bracket: (0.0, 0.0), iterations: 0, residual: 0.0 }
    }
}

struct Residual<'a, P: ?Sized> {
    z: &'a [f64],
    path: &'a P,
    t: f64,
    c: f64,
    buf: Vec<f64>,
}

impl<P: Path + ?Sized> Residual<'_, P> {
    fn at(&mut self, tau: f64) -> Result<f64> {
        self.path.eval_into(self.t - tau, &mut self.buf)?;
        Ok(self.c * tau - dist(self.z, &self.buf))
    }
}

pub fn solve_delay<P: Path + ?Sized>(z: &[f64], path: &P, t: f64, c: f64) -> Result<DelayResult> {
    solve_delay_with(z, path, t, c, &DelayOptions::default())
}

pub fn solve_delay_with<P: Path + ?Sized>(
    z: &[f64],
    path: &P,
    t: f64,
    c: f64,
    opts: &DelayOptions,
) -> Result<DelayResult> {
    let dim = path.dim();
    if z.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: z.len() });
    }
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::InvalidParameter(format!("speed of light must be finite and > 0, got {c}")));
    }
    let s = path.lipschitz_bound();
    if s >= c {
        return Err(Error::ContractViolation(format!(
            "path lipschitz bound {s} is not below the speed of light {c}; the delay equation is not uniquely solvable"
        )));
    }

    let mut x_now = vec![0.0; dim];
    path.eval_into(t, &mut x_now)?;
    let d0 = dist(z, &x_now);
    let lo = d0 / (c + s);
    let hi = d0 / (c - s);
    if d0 < COINCIDENCE_EPS {
        return Ok(DelayResult { tau: 0.0, x_delayed: x_now, bracket: (lo, hi), iterations: 0, residual: d0 });
    }

    let mut g = Residual { z, path, t, c, buf: vec![0.0; dim] };

    // The usable bracket may be cut short by the stored window; the root is
    // still inside it whenever g is already nonnegative at the window edge.
    let mut b = hi;
    let start = path.window_start();
    if t - b < start {
        let edge = t - start;
        if edge < lo || g.at(edge)? < 0.0 {
            return Err(Error::OutOfWindow { t: t - hi, start, end: path.frontier() });
        }
        b = edge;
    }
    let mut a = lo;
    let mut ga = g.at(a)?;
    let mut gb = g.at(b)?;

    let tol_g = RESIDUAL_RTOL * (c * hi).max(1.0);
    let tol_tau_g = TAU_RESOLUTION * (c - s);

    let finish = |tau: f64, iterations: usize| -> Result<DelayResult> {
        let mut x_delayed = vec![0.0; dim];
        path.eval_into(t - tau, &mut x_delayed)?;
        let residual = (c * tau - dist(z, &x_delayed)).abs();
        Ok(DelayResult { tau, x_delayed, bracket: (lo, hi), iterations, residual })
    };

    if ga >= 0.0 {
        return finish(a, 0);
    }
    if gb <= 0.0 {
        return finish(b, 0);
    }

    // Illinois bookkeeping: scaled endpoint residuals used only for the secant step.
    let (mut wa, mut wb) = (ga, gb);
    let mut side = 0i8;
    let mut best = if -ga < gb { (a, -ga) } else { (b, gb) };

    for iter in 1..=opts.max_iter {
        let mid = 0.5 * (a + b);
        let x = match opts.method {
            DelayMethod::Bisection => mid,
            DelayMethod::Secant => {
                let r = (a * wb - b * wa) / (wb - wa);
                if r > a && r < b && r.is_finite() {
                    r
                } else {
                    mid
                }
            }
        };
        if x <= a || x >= b {
            return finish(best.0, iter);
        }
        let gx = g.at(x)?;
        if gx.abs() < best.1 {
            best = (x, gx.abs());
        }
        if gx == 0.0 {
            return finish(x, iter);
        }
        if gx < 0.0 {
            a = x;
            ga = gx;
            wa = gx;
            if side == 1 {
                wb *= 0.5;
            }
            side = 1;
        } else {
            b = x;
            gb = gx;
            wb = gx;
            if side == -1 {
                wa *= 0.5;
            }
            side = -1;
        }
        let converged = best.1 <= tol_g && (best.1 <= tol_tau_g || b - a <= TAU_RESOLUTION);
        if converged {
            return finish(best.0, iter);
        }
    }
    let _ = (ga, gb);
    finish(best.0, opts.max_iter)
}

/// Delays seen by an observer at `z` (agent `i`) from every path at time `t`.
/// The self term follows the convention `tau_ii = 0`, `x~_ii = z`.
pub fn delayed_positions_on<P: Path>(
    paths: &[P],
    i: usize,
    z: &[f64],
    t: f64,
    c: f64,
    opts: &DelayOptions,
) -> Result<Vec<DelayResult>> {
    paths
        .iter()
        .enumerate()
        .map(|(j, p)| if j == i { Ok(DelayResult::coincident(z)) } else { solve_delay_with(z, p, t, c, opts) })
        .collect()
}
