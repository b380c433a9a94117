//! Time stepping for the delayed system.
//!
//! All agents advance from one frozen snapshot of the committed history.
//! Explicit schemes only ever read the past, except the Heun corrector, which
//! looks into the current step through a linear extension of each trajectory
//! along its predictor slope.

mod picard;
mod trace;

pub use picard::{contraction_window, picard_reference, PicardOptions};
pub use trace::{Metrics, PicardStats, Scheme, SimTrace};

use crate::delay::{delayed_positions_on, DelayResult};
use crate::dynamics::{velocity, Point, SystemState};
use crate::error::{Error, Result};
use crate::history::LIPSCHITZ_SLACK;
use crate::vecops::dist;

/// One committed step, as seen by observers.
#[derive(Debug)]
pub struct StepRecord<'a> {
    pub t_start: f64,
    pub t_end: f64,
    pub before: &'a [Point],
    pub after: &'a [Point],
    /// Delays resolved at `t_start` against the committed history, indexed `[i][j]`.
    pub delays: &'a [Vec<DelayResult>],
}

impl StepRecord<'_> {
    pub fn dt(&self) -> f64 {
        self.t_end - self.t_start
    }
}

/// Per-step callback used for audits and metrics.
pub trait Observer {
    fn on_step(&mut self, step: &StepRecord<'_>);
}

/// What a single step computed at its start time.
#[derive(Debug, Clone)]
pub struct StepInfo {
    pub t_start: f64,
    pub before: Vec<Point>,
    pub delays: Vec<Vec<DelayResult>>,
}

/// Integration failure; carries the trace recorded up to the failure.
#[derive(Debug, Clone, thiserror::Error)]
#[error("integration failed at t = {t}: {error}")]
pub struct IntegrateError {
    pub t: f64,
    pub error: Error,
    pub trace: Box<SimTrace>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrateOptions {
    pub scheme: Scheme,
    pub dt: f64,
    pub t_end: f64,
    pub picard: PicardOptions,
}

impl IntegrateOptions {
    pub fn new(scheme: Scheme, dt: f64, t_end: f64) -> Self {
        Self { scheme, dt, t_end, picard: PicardOptions::default() }
    }
}

/// Default pitch: resolves both the kernel rate and the shortest initial delays.
pub fn default_dt(state: &SystemState) -> f64 {
    let m = state.model();
    let a = 0.01 * (m.c() - m.s()) / m.psi_sup().max(1.0);
    let b = 0.01 * state.history_span();
    if b > 0.0 {
        a.min(b)
    } else {
        a
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if dt.is_finite() && dt > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("dt must be finite and > 0, got {dt}")))
    }
}

fn velocities(state: &SystemState, positions: &[Point], delays: &[Vec<DelayResult>]) -> Vec<Point> {
    positions.iter().zip(delays).map(|(x, d)| velocity(state.model().psi(), x, d)).collect()
}

/// Append `next` to every trajectory at `t_new`, all or nothing.
pub(crate) fn commit(state: &mut SystemState, t_new: f64, next: &[Point]) -> Result<()> {
    let dt = t_new - state.t;
    if !(dt > 0.0) {
        return Err(Error::ContractViolation(format!("step to {t_new} does not advance frontier {}", state.t)));
    }
    for (tr, x) in state.trajectories.iter().zip(next) {
        let step = dist(tr.frontier_point(), x);
        let bound = tr.lipschitz_bound() * dt;
        if step > bound + LIPSCHITZ_SLACK {
            return Err(Error::LipschitzViolation { t: t_new, step, bound });
        }
    }
    for (tr, x) in state.trajectories.iter_mut().zip(next) {
        tr.append_segment(t_new, x)?;
    }
    state.t = t_new;
    state.prune(dt);
    Ok(())
}

fn euler_to(state: &mut SystemState, t_new: f64) -> Result<StepInfo> {
    let t_start = state.t;
    let h = t_new - t_start;
    let before = state.positions();
    let delays = state.all_delays()?;
    let f0 = velocities(state, &before, &delays);
    let next: Vec<Point> = before
        .iter()
        .zip(&f0)
        .map(|(x, v)| x.iter().zip(v).map(|(a, b)| a + h * b).collect())
        .collect();
    commit(state, t_new, &next)?;
    Ok(StepInfo { t_start, before, delays })
}

fn heun_to(state: &mut SystemState, t_new: f64) -> Result<StepInfo> {
    let t_start = state.t;
    let h = t_new - t_start;
    let before = state.positions();
    let delays = state.all_delays()?;
    let f0 = velocities(state, &before, &delays);
    let predictor: Vec<Point> = before
        .iter()
        .zip(&f0)
        .map(|(x, v)| x.iter().zip(v).map(|(a, b)| a + h * b).collect())
        .collect();
    let horizon = h + 1e-12 * t_new.abs().max(1.0);
    let extended = state
        .trajectories
        .iter()
        .zip(&f0)
        .map(|(tr, v)| tr.extended(v, horizon))
        .collect::<Result<Vec<_>>>()?;
    let c = state.model().c();
    let opts = *state.model().delay_options();
    let mut next = Vec::with_capacity(state.n());
    for (i, xp) in predictor.iter().enumerate() {
        let d1 = delayed_positions_on(&extended, i, xp, t_new, c, &opts)?;
        let f1 = velocity(state.model().psi(), xp, &d1);
        next.push(before[i].iter().zip(&f0[i]).zip(&f1).map(|((x, a), b)| x + 0.5 * h * (a + b)).collect());
    }
    drop(extended);
    commit(state, t_new, &next)?;
    Ok(StepInfo { t_start, before, delays })
}

/// Forward Euler step of length `dt`.
pub fn step_euler(state: &mut SystemState, dt: f64) -> Result<StepInfo> {
    check_dt(dt)?;
    let t_new = state.t + dt;
    euler_to(state, t_new)
}

/// Heun (explicit trapezoid) step of length `dt`.
pub fn step_heun(state: &mut SystemState, dt: f64) -> Result<StepInfo> {
    check_dt(dt)?;
    let t_new = state.t + dt;
    heun_to(state, t_new)
}

/// Uniform grid from `t0` to `t0 + t_end` with pitch `dt`; the last step may be shorter.
pub(crate) fn time_grid(t0: f64, t_end: f64, dt: f64) -> Vec<f64> {
    let n = ((t_end / dt) - 1e-9).ceil().max(1.0) as usize;
    let mut grid: Vec<f64> = (1..n).map(|k| t0 + k as f64 * dt).collect();
    grid.push(t0 + t_end);
    grid
}

/// Advance `state` by `opts.t_end`, notifying observers after every step.
pub fn integrate(
    state: &mut SystemState,
    opts: &IntegrateOptions,
    observers: &mut [&mut dyn Observer],
) -> std::result::Result<SimTrace, IntegrateError> {
    let mut trace = SimTrace::new(opts.scheme, opts.dt, state.dim());
    let fail = |state: &SystemState, mut trace: SimTrace, error: Error| {
        let delays = state.all_delays().ok();
        trace.push(state.t(), state.positions(), delays.as_deref());
        IntegrateError { t: state.t(), error, trace: Box::new(trace) }
    };
    if let Err(e) = check_dt(opts.dt) {
        return Err(fail(state, trace, e));
    }
    if !(opts.t_end.is_finite() && opts.t_end >= opts.dt) {
        let e = Error::InvalidParameter(format!("horizon T = {} must be >= dt = {}", opts.t_end, opts.dt));
        return Err(fail(state, trace, e));
    }
    let grid = time_grid(state.t(), opts.t_end, opts.dt);

    let mut emit = |trace: &mut SimTrace, info: StepInfo, after: Vec<Point>, t_end: f64| {
        let record = StepRecord { t_start: info.t_start, t_end, before: &info.before, after: &after, delays: &info.delays };
        for ob in observers.iter_mut() {
            ob.on_step(&record);
        }
        trace.push(info.t_start, info.before, Some(&info.delays));
    };

    match opts.scheme {
        Scheme::Euler | Scheme::Heun => {
            for &t_new in &grid {
                let res = if opts.scheme == Scheme::Euler { euler_to(state, t_new) } else { heun_to(state, t_new) };
                match res {
                    Ok(info) => emit(&mut trace, info, state.positions(), t_new),
                    Err(e) => return Err(fail(state, trace, e)),
                }
            }
        }
        Scheme::Picard => {
            let window = match picard::window_steps(state, opts.dt) {
                Ok(w) => w,
                Err(e) => return Err(fail(state, trace, e)),
            };
            let mut stats = PicardStats { window_bound: window.1, steps_per_window: window.0, ..Default::default() };
            for nodes in grid.chunks(window.0) {
                match picard::window(state, nodes, &opts.picard) {
                    Ok(out) => {
                        stats.iterations.push(out.iterations);
                        stats.contraction.push(out.contraction);
                        let mut prev = out.start;
                        for (k, (&t_node, delays)) in nodes.iter().zip(out.delays).enumerate() {
                            let after = out.positions[k].clone();
                            let info = StepInfo { t_start: prev.0, before: prev.1, delays };
                            emit(&mut trace, info, after.clone(), t_node);
                            prev = (t_node, after);
                        }
                    }
                    Err(e) => {
                        trace.picard = Some(stats);
                        return Err(fail(state, trace, e));
                    }
                }
            }
            trace.picard = Some(stats);
        }
    }
    match state.all_delays() {
        Ok(delays) => trace.push(state.t(), state.positions(), Some(&delays)),
        Err(e) => return Err(fail(state, trace, e)),
    }
    Ok(trace)
}
