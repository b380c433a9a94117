//! Diagnostics and invariant audits.

use std::fmt;
use std::io::Write;

use crate::dynamics::{Point, SystemState};
use crate::error::{Error, Result};
use crate::history::Trajectory;
use crate::influence::InfluenceFunction;
use crate::integrator::{Observer, SimTrace, StepRecord};
use crate::vecops::{dist, norm};

/// Largest pairwise distance.
pub fn diameter(positions: &[Point]) -> f64 {
    let mut d = 0.0f64;
    for (k, a) in positions.iter().enumerate() {
        for b in &positions[k + 1..] {
            d = d.max(dist(a, b));
        }
    }
    d
}

/// Largest distance from the origin.
pub fn radius(positions: &[Point]) -> f64 {
    positions.iter().map(|p| norm(p)).fold(0.0, f64::max)
}

/// Radius of a datum over `[t_from, frontier]`.
///
/// On a piecewise-linear path `|x|` is convex per segment, so the maximum is
/// attained at a node or at the window edge.
pub fn initial_radius(trajectories: &[Trajectory], t_from: f64) -> Result<f64> {
    let mut r = 0.0f64;
    for tr in trajectories {
        let t0 = t_from.max(tr.window_start()).min(tr.frontier());
        r = r.max(norm(&tr.eval_at(t0)?));
        for (t, x) in tr.samples() {
            if t >= t0 {
                r = r.max(norm(x));
            }
        }
    }
    Ok(r)
}

/// Whether the order of the initial 1D positions is kept at every trace time.
///
/// Agents are ranked by their first recorded position; ties may separate in
/// either direction.
pub fn ordering_preserved(trace: &SimTrace) -> Result<bool> {
    if trace.dim != 1 {
        return Err(Error::InvalidParameter(format!("ordering is only defined in 1D, trace has dim {}", trace.dim)));
    }
    let Some(first) = trace.positions.first() else {
        return Ok(true);
    };
    let mut order: Vec<usize> = (0..first.len()).collect();
    order.sort_by(|&a, &b| first[a][0].total_cmp(&first[b][0]));
    for pos in &trace.positions {
        for w in order.windows(2) {
            let (a, b) = (w[0], w[1]);
            if first[a][0] < first[b][0] && pos[a][0] > pos[b][0] + 1e-9 {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// First trace time with `d_x <= eps`.
pub fn consensus_time(trace: &SimTrace, eps: f64) -> Option<f64> {
    trace.times.iter().zip(&trace.metrics).find(|(_, m)| m.diameter <= eps).map(|(t, _)| *t)
}

/// Range over which the kernel bounds of the decay certificate are taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DecayRange {
    /// `[0, R0]`.
    #[default]
    Radius,
    /// `[0, 2 R0]`, which covers every pairwise distance.
    TwiceRadius,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayCertificate {
    pub psi_lo: f64,
    pub psi_hi: f64,
    /// `N/(N-1) psi_lo - 2 s/(c - s) psi_hi`.
    pub lambda: f64,
    pub condition_met: bool,
    pub range_used: (f64, f64),
}

impl fmt::Display for DecayCertificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "psi_lo = {:.6e}, psi_hi = {:.6e} on [{}, {}], lambda = {:.6e}, condition {}",
            self.psi_lo,
            self.psi_hi,
            self.range_used.0,
            self.range_used.1,
            self.lambda,
            if self.condition_met { "met" } else { "not met" }
        )
    }
}

pub fn decay_certificate(
    psi: &InfluenceFunction,
    s: f64,
    c: f64,
    n: usize,
    r0: f64,
    range: DecayRange,
) -> Result<DecayCertificate> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("need at least two agents, got {n}")));
    }
    if !(s >= 0.0 && s < c) {
        return Err(Error::InvalidParameter(format!("decay certificate needs 0 <= s < c, got s = {s}, c = {c}")));
    }
    let hi = match range {
        DecayRange::Radius => r0,
        DecayRange::TwiceRadius => 2.0 * r0,
    };
    let (psi_lo, psi_hi) = psi.range_bounds(0.0, hi)?;
    let nf = n as f64;
    let lambda = nf / (nf - 1.0) * psi_lo - 2.0 * s / (c - s) * psi_hi;
    Ok(DecayCertificate { psi_lo, psi_hi, lambda, condition_met: lambda > 0.0, range_used: (0.0, hi) })
}

/// Worst ratio `d_x(t) / (d_x(0) e^{-lambda t})` along a trace; the envelope holds if it is `<= 1 + slack`.
pub fn decay_envelope_ratio(trace: &SimTrace, lambda: f64) -> f64 {
    let (Some(&t0), Some(m0)) = (trace.times.first(), trace.metrics.first()) else {
        return 0.0;
    };
    let d0 = m0.diameter;
    trace
        .times
        .iter()
        .zip(&trace.metrics)
        .map(|(t, m)| {
            let env = d0 * (-lambda * (t - t0)).exp();
            if m.diameter == 0.0 {
                0.0
            } else {
                m.diameter / env
            }
        })
        .fold(0.0, f64::max)
}

/// Largest increase of `|x|` between consecutive samples; `<= slack` means nonincreasing.
pub fn max_abs_increase(xs: &[f64]) -> f64 {
    xs.windows(2).map(|w| w[1].abs() - w[0].abs()).fold(f64::NEG_INFINITY, f64::max)
}

/// `sign(x + x~) == sign(x)` at every sample.
pub fn sign_condition_holds(x: &[f64], x_tilde: &[f64]) -> bool {
    let sign = |v: f64| if v > 0.0 { 1 } else if v < 0.0 { -1 } else { 0 };
    x.iter().zip(x_tilde).all(|(&a, &b)| sign(a + b) == sign(a))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Check {
    DelayBracket,
    RetardedDistance,
    RadiusBound,
    DiameterMonotone,
    SpeedBound,
}

impl Check {
    pub const ALL: [Check; 5] =
        [Check::DelayBracket, Check::RetardedDistance, Check::RadiusBound, Check::DiameterMonotone, Check::SpeedBound];

    pub fn name(self) -> &'static str {
        match self {
            Check::DelayBracket => "delay_bracket",
            Check::RetardedDistance => "retarded_distance",
            Check::RadiusBound => "radius_bound",
            Check::DiameterMonotone => "diameter_monotone",
            Check::SpeedBound => "speed_bound",
        }
    }

    /// Statement the check enforces.
    pub fn statement(self) -> &'static str {
        match self {
            Check::DelayBracket => "|x_i - x_j|/(c+s) <= tau_ij <= |x_i - x_j|/(c-s)",
            Check::RetardedDistance => "|x_i - x~_j| > |x_i - x_j| / 2",
            Check::RadiusBound => "R_x(t) <= R_x^0",
            Check::DiameterMonotone => "d_x nonincreasing (1D)",
            Check::SpeedBound => "per-step displacement <= s dt",
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Worst margin of one check over one step; negative margins beyond the slack fail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditRow {
    pub t: f64,
    pub check: Check,
    pub margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckSummary {
    pub check: Check,
    pub steps: usize,
    pub failures: usize,
    pub worst_margin: f64,
    pub worst_t: f64,
    /// False when the check is recorded but not enforced.
    pub asserted: bool,
}

/// Step observer enforcing the invariants of the exact flow, with slack for discretization.
#[derive(Debug, Clone)]
pub struct Auditor {
    c: f64,
    s: f64,
    r0: f64,
    d_slack: f64,
    /// Minimum pair distance for the retarded-distance check.
    pub distance_floor: f64,
    /// Slack applied to the bracket, radius and retarded-distance checks.
    pub slack: f64,
    /// Keep one row per step and check (needed for the audit CSV).
    pub keep_rows: bool,
    rows: Vec<AuditRow>,
    summary: Vec<CheckSummary>,
    first_failure: Option<AuditRow>,
}

impl Auditor {
    pub fn new(state: &SystemState) -> Self {
        let summary = Check::ALL
            .iter()
            .map(|&check| CheckSummary {
                check,
                steps: 0,
                failures: 0,
                worst_margin: f64::INFINITY,
                worst_t: f64::NAN,
                asserted: check != Check::DiameterMonotone || state.dim() == 1,
            })
            .collect();
        Self {
            c: state.model().c(),
            s: state.model().s(),
            r0: state.initial_radius(),
            d_slack: 1e-9 * state.initial_diameter().max(1.0),
            distance_floor: 1e-6,
            slack: 1e-9,
            keep_rows: true,
            rows: Vec::new(),
            summary,
            first_failure: None,
        }
    }

    pub fn rows(&self) -> &[AuditRow] {
        &self.rows
    }

    pub fn summary(&self) -> &[CheckSummary] {
        &self.summary
    }

    pub fn get(&self, check: Check) -> &CheckSummary {
        &self.summary[check as usize]
    }

    pub fn failures(&self) -> usize {
        self.summary.iter().filter(|s| s.asserted).map(|s| s.failures).sum()
    }

    pub fn passed(&self) -> bool {
        self.failures() == 0
    }

    pub fn first_failure(&self) -> Option<&AuditRow> {
        self.first_failure.as_ref()
    }

    /// Error naming the first violated check, if any.
    pub fn verdict(&self) -> Result<()> {
        match &self.first_failure {
            None => Ok(()),
            Some(row) => Err(Error::ContractViolation(format!(
                "audit {} failed at t = {} with margin {:e}: {}",
                row.check,
                row.t,
                row.margin,
                row.check.statement()
            ))),
        }
    }

    fn record(&mut self, t: f64, check: Check, margin: f64, pass: bool) {
        let sum = &mut self.summary[check as usize];
        let pass = pass || !sum.asserted;
        sum.steps += 1;
        if margin < sum.worst_margin {
            sum.worst_margin = margin;
            sum.worst_t = t;
        }
        let row = AuditRow { t, check, margin, pass };
        if !pass {
            sum.failures += 1;
            if self.first_failure.is_none() {
                self.first_failure = Some(row);
            }
        }
        if self.keep_rows {
            self.rows.push(row);
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W, header: &str) -> Result<()> {
        if !header.is_empty() {
            writeln!(w, "# {header}")?;
        }
        writeln!(w, "t,check_name,margin,pass")?;
        for r in &self.rows {
            writeln!(w, "{},{},{:e},{}", r.t, r.check, r.margin, r.pass)?;
        }
        Ok(())
    }

    /// Line-oriented summary.
    pub fn report(&self) -> String {
        let mut out = String::new();
        for s in &self.summary {
            let status = if !s.asserted {
                "recorded"
            } else if s.failures == 0 {
                "pass"
            } else {
                "FAIL"
            };
            out.push_str(&format!(
                "{:<18} {:>8} steps {:>6} failures  worst margin {:>12.4e}  {status}\n",
                s.check.name(),
                s.steps,
                s.failures,
                s.worst_margin
            ));
        }
        out
    }
}

impl Observer for Auditor {
    fn on_step(&mut self, step: &StepRecord<'_>) {
        let t = step.t_start;
        let x = step.before;
        let mut bracket = f64::INFINITY;
        let mut retarded = f64::INFINITY;
        for (i, row) in step.delays.iter().enumerate() {
            for (j, d) in row.iter().enumerate() {
                if i == j {
                    continue;
                }
                let r = dist(&x[i], &x[j]);
                let (lo, hi) = (r / (self.c + self.s), r / (self.c - self.s));
                bracket = bracket.min((d.tau - lo).min(hi - d.tau));
                if r > self.distance_floor {
                    retarded = retarded.min(dist(&x[i], &d.x_delayed) - 0.5 * r);
                }
            }
        }
        if bracket.is_finite() {
            self.record(t, Check::DelayBracket, bracket, bracket >= -self.slack);
        }
        if retarded.is_finite() {
            self.record(t, Check::RetardedDistance, retarded, retarded > -self.slack);
        }

        let radius_margin = self.r0 - radius(step.after);
        self.record(step.t_end, Check::RadiusBound, radius_margin, radius_margin >= -self.slack * self.r0.max(1.0));

        let d_margin = diameter(x) - diameter(step.after);
        self.record(step.t_end, Check::DiameterMonotone, d_margin, d_margin >= -self.d_slack);

        let moved = x.iter().zip(step.after).map(|(a, b)| dist(a, b)).fold(0.0, f64::max);
        let speed_margin = self.s * step.dt() * (1.0 + 1e-10) - moved;
        self.record(step.t_end, Check::SpeedBound, speed_margin, speed_margin >= 0.0);
    }
}

/// Per-pair delay rows `(t, i, j, tau, lo, hi, residual)` for the delay audit CSV.
#[derive(Debug, Clone, Default)]
pub struct DelayLog {
    pub rows: Vec<(f64, usize, usize, f64, f64, f64, f64)>,
}

impl DelayLog {
    pub fn write_csv<W: Write>(&self, mut w: W, header: &str) -> Result<()> {
        if !header.is_empty() {
            writeln!(w, "# {header}")?;
        }
        writeln!(w, "t,i,j,tau,lo,hi,residual")?;
        for (t, i, j, tau, lo, hi, res) in &self.rows {
            writeln!(w, "{t},{i},{j},{tau},{lo},{hi},{res:e}")?;
        }
        Ok(())
    }
}

impl Observer for DelayLog {
    fn on_step(&mut self, step: &StepRecord<'_>) {
        for (i, row) in step.delays.iter().enumerate() {
            for (j, d) in row.iter().enumerate() {
                if i != j {
                    self.rows.push((step.t_start, i, j, d.tau, d.bracket.0, d.bracket.1, d.residual));
                }
            }
        }
    }
}
