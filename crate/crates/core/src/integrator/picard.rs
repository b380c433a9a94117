//! Picard fixed-point reference solver.
//!
//! On a window `[t0, t0 + T]` short enough for the integral operator
//! `(G phi)(t) = phi(t0) + int_{t0}^t F(phi)(u) du` to contract, iterate
//! `phi <- G phi` until successive iterates agree to `tol`, then chain windows.
//! `F(phi)` resolves every delay against `phi` itself, so each iterate is a
//! full trajectory candidate; the integral uses the trapezoid rule on the step grid.

use super::{commit, integrate, velocities, IntegrateOptions, Scheme, SimTrace};
use crate::delay::{delayed_positions_on, DelayResult};
use crate::dynamics::{Model, Point, SystemState};
use crate::error::{Error, Result};
use crate::history::Trajectory;
use crate::vecops::dist;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 200 }
    }
}

/// Largest `T` with `2T (1 - s/c)^-1 (psi_sup + 2 (x0_norm + s S0 + s T) L_psi) <= 1/2`.
///
/// The bound is quadratic in `T`; the positive root is taken in the
/// cancellation-free form `T = 1 / (b + sqrt(b^2 + 2a))`.
pub fn contraction_window(x0_norm: f64, s0: f64, s: f64, c: f64, l_psi: f64, psi_sup: f64) -> Result<f64> {
    for (what, v) in [("x0_norm", x0_norm), ("S0", s0), ("s", s), ("L_psi", l_psi), ("psi_sup", psi_sup)] {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::Domain { what, value: v });
        }
    }
    if !(c.is_finite() && s < c) {
        return Err(Error::InvalidParameter(format!("contraction window needs s < c, got s = {s}, c = {c}")));
    }
    let k = 1.0 / (1.0 - s / c);
    // 4 k s L T^2 + 2 k (psi_sup + 2 (x0 + s S0) L) T - 1/2 = 0
    let a = 4.0 * k * s * l_psi;
    let b = 2.0 * k * (psi_sup + 2.0 * (x0_norm + s * s0) * l_psi);
    if b <= 0.0 {
        return Err(Error::InvalidParameter("contraction window is unbounded for a vanishing kernel".into()));
    }
    Ok(1.0 / (b + (b * b + 2.0 * a).sqrt()))
}

/// `(steps per window, T*)` for the N-agent system, using `R0` as the
/// initial norm and `d_x(0)/(c - s)` as the history span.
pub(crate) fn window_steps(state: &SystemState, dt: f64) -> Result<(usize, f64)> {
    let m = state.model();
    let t_star = contraction_window(
        state.initial_radius(),
        state.history_span(),
        m.s(),
        m.c(),
        m.psi().lipschitz_const(),
        m.psi_sup(),
    )?;
    let steps = ((t_star / dt) + 1e-9).floor().max(1.0) as usize;
    Ok((steps, t_star))
}

pub(crate) struct WindowOutcome {
    pub start: (f64, Vec<Point>),
    /// Converged positions at each node.
    pub positions: Vec<Vec<Point>>,
    /// Delays at the start of each node's step, resolved against the converged iterate.
    pub delays: Vec<Vec<Vec<DelayResult>>>,
    pub iterations: usize,
    pub contraction: f64,
}

fn install(trajectories: &mut [Trajectory], t0: f64, nodes: &[f64], phi: &[Vec<Point>]) -> Result<()> {
    for (i, tr) in trajectories.iter_mut().enumerate() {
        tr.truncate_after(t0);
        for (t, p) in nodes.iter().zip(phi) {
            tr.append_segment(*t, &p[i])?;
        }
    }
    Ok(())
}

fn node_delays(state: &SystemState, t: f64, positions: &[Point]) -> Result<Vec<Vec<DelayResult>>> {
    let c = state.model().c();
    let opts = *state.model().delay_options();
    (0..positions.len())
        .map(|i| delayed_positions_on(&state.trajectories, i, &positions[i], t, c, &opts))
        .collect()
}

/// Solve one window whose grid nodes (after the current frontier) are `nodes`.
pub(crate) fn window(state: &mut SystemState, nodes: &[f64], opts: &PicardOptions) -> Result<WindowOutcome> {
    let t0 = state.t;
    let x0 = state.positions();
    let delays0 = state.all_delays()?;
    let f0 = velocities(state, &x0, &delays0);

    let mut phi: Vec<Vec<Point>> = vec![x0.clone(); nodes.len()];
    let mut last_gap = f64::INFINITY;
    let mut contraction = 0.0f64;

    let outcome = (|| -> Result<usize> {
        for iter in 1..=opts.max_iter {
            install(&mut state.trajectories, t0, nodes, &phi)?;
            let mut next = Vec::with_capacity(nodes.len());
            let mut acc = x0.clone();
            let mut prev_t = t0;
            let mut prev_f = f0.clone();
            for (m, &t) in nodes.iter().enumerate() {
                let d = node_delays(state, t, &phi[m])?;
                let f = velocities(state, &phi[m], &d);
                let h = t - prev_t;
                for ((a, fa), fb) in acc.iter_mut().zip(&prev_f).zip(&f) {
                    for ((x, va), vb) in a.iter_mut().zip(fa).zip(fb) {
                        *x += 0.5 * h * (va + vb);
                    }
                }
                next.push(acc.clone());
                prev_t = t;
                prev_f = f;
            }
            let gap = next
                .iter()
                .zip(&phi)
                .flat_map(|(a, b)| a.iter().zip(b).map(|(p, q)| dist(p, q)))
                .fold(0.0, f64::max);
            if last_gap.is_finite() && last_gap > 10.0 * opts.tol {
                contraction = contraction.max(gap / last_gap);
            }
            last_gap = gap;
            phi = next;
            if gap <= opts.tol {
                return Ok(iter);
            }
        }
        Err(Error::NonConvergence { iterations: opts.max_iter, gap: last_gap })
    })();

    let iterations = match outcome {
        Ok(k) => k,
        Err(e) => {
            for tr in &mut state.trajectories {
                tr.truncate_after(t0);
            }
            return Err(e);
        }
    };

    // Observers see delays resolved against the converged iterate.
    install(&mut state.trajectories, t0, nodes, &phi)?;
    let mut delays = Vec::with_capacity(nodes.len());
    delays.push(delays0);
    for m in 0..nodes.len().saturating_sub(1) {
        delays.push(node_delays(state, nodes[m], &phi[m])?);
    }
    // Commit through the regular path so the Lipschitz contract is checked once more.
    for tr in &mut state.trajectories {
        tr.truncate_after(t0);
    }
    for (t, p) in nodes.iter().zip(&phi) {
        commit(state, *t, p)?;
    }
    Ok(WindowOutcome { start: (t0, x0), positions: phi, delays, iterations, contraction })
}

/// Reference trace from an initial datum: Picard windows chained over `[0, t_end]`.
pub fn picard_reference(
    model: &Model,
    datum: &[Trajectory],
    t_end: f64,
    dt: f64,
    opts: PicardOptions,
) -> Result<SimTrace> {
    let mut state = SystemState::new(model.clone(), datum.to_vec())?;
    let mut o = IntegrateOptions::new(Scheme::Picard, dt, t_end);
    o.picard = opts;
    integrate(&mut state, &o, &mut []).map_err(|e| e.error)
}
