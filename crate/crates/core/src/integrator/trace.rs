use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analysis::{diameter, radius};
use crate::delay::DelayResult;
use crate::dynamics::Point;
use crate::error::{Error, Result};
use crate::vecops::dist;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Euler,
    Heun,
    Picard,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Euler => "euler",
            Scheme::Heun => "heun",
            Scheme::Picard => "picard",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euler" => Ok(Scheme::Euler),
            "heun" => Ok(Scheme::Heun),
            "picard" => Ok(Scheme::Picard),
            other => Err(Error::Parse(format!("unknown scheme '{other}' (expected euler, heun or picard)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub diameter: f64,
    pub radius: f64,
}

/// Per-window diagnostics of the Picard reference solver.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PicardStats {
    /// Contraction window `T*` the windows were sized from.
    pub window_bound: f64,
    /// Number of grid steps per window.
    pub steps_per_window: usize,
    pub iterations: Vec<usize>,
    /// Largest ratio of successive iterate gaps observed in each window.
    pub contraction: Vec<f64>,
}

impl PicardStats {
    pub fn worst_contraction(&self) -> f64 {
        self.contraction.iter().cloned().fold(0.0, f64::max)
    }
}

/// Time-indexed record of an integration run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub scheme: Scheme,
    pub dt: f64,
    pub dim: usize,
    pub times: Vec<f64>,
    pub positions: Vec<Vec<Point>>,
    /// `(min, max)` delay over ordered pairs `i != j`.
    pub delays_summary: Vec<(f64, f64)>,
    pub metrics: Vec<Metrics>,
    pub picard: Option<PicardStats>,
}

impl SimTrace {
    pub fn new(scheme: Scheme, dt: f64, dim: usize) -> Self {
        Self {
            scheme,
            dt,
            dim,
            times: Vec::new(),
            positions: Vec::new(),
            delays_summary: Vec::new(),
            metrics: Vec::new(),
            picard: None,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_agents(&self) -> usize {
        self.positions.first().map_or(0, Vec::len)
    }

    pub fn final_positions(&self) -> Option<&[Point]> {
        self.positions.last().map(Vec::as_slice)
    }

    pub(crate) fn push(&mut self, t: f64, positions: Vec<Point>, delays: Option<&[Vec<DelayResult>]>) {
        let summary = delays.map_or((f64::NAN, f64::NAN), summarize_delays);
        self.metrics.push(Metrics { diameter: diameter(&positions), radius: radius(&positions) });
        self.times.push(t);
        self.positions.push(positions);
        self.delays_summary.push(summary);
    }

    /// Largest distance between matching agents over time indices `0..upto`.
    pub fn sup_gap_until(&self, other: &SimTrace, t_max: f64) -> Result<f64> {
        if self.n_agents() != other.n_agents() || self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.n_agents(), got: other.n_agents() });
        }
        let mut gap = 0.0f64;
        for (k, (&t, pos)) in self.times.iter().zip(&self.positions).enumerate() {
            if t > t_max * (1.0 + 1e-12) {
                break;
            }
            let other_t = *other.times.get(k).ok_or_else(|| Error::InvalidParameter("traces have different lengths".into()))?;
            if (other_t - t).abs() > 1e-9 * t.abs().max(1.0) {
                return Err(Error::InvalidParameter(format!("trace time grids differ at index {k}: {t} vs {other_t}")));
            }
            for (a, b) in pos.iter().zip(&other.positions[k]) {
                gap = gap.max(dist(a, b));
            }
        }
        Ok(gap)
    }

    pub fn sup_gap(&self, other: &SimTrace) -> Result<f64> {
        self.sup_gap_until(other, f64::INFINITY)
    }

    /// Positions as CSV rows `t, agent_id, x_0, ..., x_{d-1}`.
    pub fn write_positions_csv<W: Write>(&self, mut w: W, header: &str) -> Result<()> {
        if !header.is_empty() {
            writeln!(w, "# {header}")?;
        }
        write!(w, "t,agent_id")?;
        for k in 0..self.dim {
            write!(w, ",x_{k}")?;
        }
        writeln!(w)?;
        for (t, pos) in self.times.iter().zip(&self.positions) {
            for (i, p) in pos.iter().enumerate() {
                write!(w, "{t},{i}")?;
                for v in p {
                    write!(w, ",{v}")?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }

    /// Metrics as CSV rows `t, d_x, R_x, tau_min, tau_max`.
    pub fn write_metrics_csv<W: Write>(&self, mut w: W, header: &str) -> Result<()> {
        if !header.is_empty() {
            writeln!(w, "# {header}")?;
        }
        writeln!(w, "t,d_x,R_x,tau_min,tau_max")?;
        for ((t, m), (lo, hi)) in self.times.iter().zip(&self.metrics).zip(&self.delays_summary) {
            writeln!(w, "{t},{},{},{lo},{hi}", m.diameter, m.radius)?;
        }
        Ok(())
    }
}

fn summarize_delays(delays: &[Vec<DelayResult>]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (i, row) in delays.iter().enumerate() {
        for (j, d) in row.iter().enumerate() {
            if i != j {
                lo = lo.min(d.tau);
                hi = hi.max(d.tau);
            }
        }
    }
    (lo, hi)
}
