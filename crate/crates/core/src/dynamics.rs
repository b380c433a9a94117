//! Right-hand side of the delayed Hegselmann-Krause system and its
//! instantaneous (infinite speed of light) baseline.

use crate::delay::{delayed_positions_on, DelayOptions, DelayResult};
use crate::error::{Error, Result};
use crate::history::Trajectory;
use crate::influence::{Certification, InfluenceFunction};
use crate::vecops::{dist, norm};

pub type Point = Vec<f64>;

/// Speed of light plus a kernel certified against it.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    c: f64,
    psi: InfluenceFunction,
    cert: Certification,
    delay: DelayOptions,
}

impl Model {
    /// Certify `psi` for speed of light `c` on distances up to `r_max`.
    pub fn new(c: f64, psi: InfluenceFunction, r_max: f64) -> Result<Self> {
        let cert = psi.validate(c, r_max)?;
        Ok(Self { c, psi, cert, delay: DelayOptions::default() })
    }

    pub fn with_delay_options(mut self, delay: DelayOptions) -> Self {
        self.delay = delay;
        self
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// Certified speed bound.
    pub fn s(&self) -> f64 {
        self.cert.s
    }

    pub fn psi(&self) -> &InfluenceFunction {
        &self.psi
    }

    pub fn certification(&self) -> &Certification {
        &self.cert
    }

    pub fn r_max(&self) -> f64 {
        self.cert.r_max
    }

    pub fn psi_sup(&self) -> f64 {
        self.cert.psi_sup
    }

    pub fn delay_options(&self) -> &DelayOptions {
        &self.delay
    }

    /// Length of initial history needed for a configuration of diameter `diameter`.
    pub fn history_span(&self, diameter: f64) -> f64 {
        diameter / (self.c - self.cert.s)
    }
}

/// `N` trajectories sharing a frontier time, paired with a certified model.
#[derive(Debug, Clone)]
pub struct SystemState {
    model: Model,
    pub(crate) trajectories: Vec<Trajectory>,
    pub(crate) t: f64,
    dim: usize,
    r0: f64,
    d0: f64,
    s0: f64,
}

impl SystemState {
    pub fn new(model: Model, mut trajectories: Vec<Trajectory>) -> Result<Self> {
        if trajectories.len() < 2 {
            return Err(Error::InvalidParameter(format!("need at least two agents, got {}", trajectories.len())));
        }
        let dim = trajectories[0].dim();
        let t = trajectories[0].frontier();
        let s = model.s();
        for (i, tr) in trajectories.iter_mut().enumerate() {
            if tr.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: tr.dim() });
            }
            if (tr.frontier() - t).abs() > 1e-12 * t.abs().max(1.0) {
                return Err(Error::InvalidParameter(format!(
                    "agent {i} frontier {} differs from common frontier {t}",
                    tr.frontier()
                )));
            }
            if tr.lipschitz_bound() > s * (1.0 + 1e-12) {
                return Err(Error::InvalidParameter(format!(
                    "agent {i} history has lipschitz bound {} above the certified speed bound {s}",
                    tr.lipschitz_bound()
                )));
            }
            tr.set_lipschitz_bound(s)?;
        }
        let positions: Vec<Point> = trajectories.iter().map(|tr| tr.frontier_point().to_vec()).collect();
        let d0 = crate::analysis::diameter(&positions);
        let s0 = model.history_span(d0);
        for (i, tr) in trajectories.iter().enumerate() {
            if tr.window_start() > t - s0 + 1e-9 * s0.max(1.0) {
                return Err(Error::InvalidParameter(format!(
                    "agent {i} history starts at {} but must cover [{}, {t}]",
                    tr.window_start(),
                    t - s0
                )));
            }
        }
        let r0 = crate::analysis::initial_radius(&trajectories, t - s0)?;
        if model.r_max() < 2.0 * r0 * (1.0 - 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "influence certified only up to r_max = {} but distances can reach 2 R0 = {}",
                model.r_max(),
                2.0 * r0
            )));
        }
        Ok(Self { model, trajectories, t, dim, r0, d0, s0 })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn n(&self) -> usize {
        self.trajectories.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn positions(&self) -> Vec<Point> {
        self.trajectories.iter().map(|tr| tr.frontier_point().to_vec()).collect()
    }

    /// Radius of the initial datum, the maximum of `|x_i|` over the initial window.
    pub fn initial_radius(&self) -> f64 {
        self.r0
    }

    /// Diameter of the configuration at the initial frontier.
    pub fn initial_diameter(&self) -> f64 {
        self.d0
    }

    /// Length of the initial history window, `d_x(0) / (c - s)`.
    pub fn history_span(&self) -> f64 {
        self.s0
    }

    /// Upper bound on any delay for the rest of the run: distances never
    /// exceed `2 R0`, so no delay exceeds `2 R0 / (c - s)`.
    pub fn max_delay(&self) -> f64 {
        2.0 * self.r0 / (self.model.c() - self.model.s())
    }

    pub fn delayed_positions(&self, i: usize) -> Result<Vec<DelayResult>> {
        if i >= self.n() {
            return Err(Error::InvalidParameter(format!("agent index {i} out of range")));
        }
        let z = self.trajectories[i].frontier_point();
        delayed_positions_on(&self.trajectories, i, z, self.t, self.model.c(), self.model.delay_options())
    }

    pub fn all_delays(&self) -> Result<Vec<Vec<DelayResult>>> {
        (0..self.n()).map(|i| self.delayed_positions(i)).collect()
    }

    pub(crate) fn prune(&mut self, dt: f64) {
        let cut = self.t - self.max_delay() - dt;
        for tr in &mut self.trajectories {
            tr.prune_before(cut);
        }
    }
}

/// `(1/(N-1)) sum_j psi(|x~_j - x_i|) (x~_j - x_i)` for observer position `x_i`.
pub(crate) fn velocity(psi: &InfluenceFunction, x_i: &[f64], delays: &[DelayResult]) -> Point {
    let n = delays.len();
    let mut v = vec![0.0; x_i.len()];
    for d in delays {
        let r = dist(&d.x_delayed, x_i);
        if r == 0.0 {
            continue;
        }
        let w = psi.value(r);
        for ((vk, &xj), &xi) in v.iter_mut().zip(&d.x_delayed).zip(x_i) {
            *vk += w * (xj - xi);
        }
    }
    let scale = 1.0 / (n as f64 - 1.0);
    v.iter_mut().for_each(|vk| *vk *= scale);
    v
}

/// Velocity of agent `i` given its delays from [`SystemState::delayed_positions`].
pub fn rhs(state: &SystemState, i: usize, delays: &[DelayResult]) -> Result<Point> {
    if delays.len() != state.n() {
        return Err(Error::DimensionMismatch { expected: state.n(), got: delays.len() });
    }
    if let Some(bad) = delays.iter().find(|d| d.x_delayed.len() != state.dim()) {
        return Err(Error::DimensionMismatch { expected: state.dim(), got: bad.x_delayed.len() });
    }
    let x_i = state.trajectories[i].frontier_point();
    Ok(velocity(state.model.psi(), x_i, delays))
}

/// Undelayed right-hand side for every agent.
pub fn rhs_classical(positions: &[Point], psi: &InfluenceFunction) -> Result<Vec<Point>> {
    let n = positions.len();
    if n < 2 {
        return Err(Error::InvalidParameter(format!("need at least two agents, got {n}")));
    }
    let dim = positions[0].len();
    if let Some(bad) = positions.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, got: bad.len() });
    }
    Ok(positions
        .iter()
        .map(|x_i| {
            let mut v = vec![0.0; dim];
            for x_j in positions {
                let r = dist(x_j, x_i);
                if r == 0.0 {
                    continue;
                }
                let w = psi.value(r);
                for ((vk, a), b) in v.iter_mut().zip(x_j).zip(x_i) {
                    *vk += w * (a - b);
                }
            }
            v.iter_mut().for_each(|vk| *vk /= n as f64 - 1.0);
            v
        })
        .collect())
}

/// Largest agent speed in a set of velocities.
pub fn max_speed(velocities: &[Point]) -> f64 {
    velocities.iter().map(|v| norm(v)).fold(0.0, f64::max)
}
