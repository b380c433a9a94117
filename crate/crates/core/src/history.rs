//! Piecewise-linear agent trajectories on a sliding window of the past.
//!
//! Linear interpolation keeps the Lipschitz constant of the samples, so every
//! stored trajectory stays inside the admissible class `C_s` and the delay
//! equation remains uniquely solvable against it.

use crate::error::{Error, Result};
use crate::vecops::{dist, norm};

/// Absolute slack allowed on the per-segment Lipschitz test.
pub const LIPSCHITZ_SLACK: f64 = 1e-12;

/// Relative slack allowed on extrapolation slopes.
const SLOPE_SLACK: f64 = 1e-12;

/// Minimal read interface needed to solve the delay equation against a path.
pub trait Path {
    fn dim(&self) -> usize;
    fn lipschitz_bound(&self) -> f64;
    fn window_start(&self) -> f64;
    /// Latest time at which the path is defined.
    fn frontier(&self) -> f64;
    fn eval_into(&self, t: f64, out: &mut [f64]) -> Result<()>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dim: usize,
    lipschitz_bound: f64,
    /// Index of the first retained sample; samples before it are logically pruned.
    head: usize,
    times: Vec<f64>,
    coords: Vec<f64>,
}

impl Trajectory {
    /// A trajectory consisting of a single sample.
    pub fn new(lipschitz_bound: f64, t0: f64, x0: &[f64]) -> Result<Self> {
        if x0.is_empty() {
            return Err(Error::InvalidParameter("trajectory dimension must be >= 1".into()));
        }
        if !(lipschitz_bound.is_finite() && lipschitz_bound >= 0.0) {
            return Err(Error::InvalidParameter(format!("lipschitz bound must be finite and >= 0, got {lipschitz_bound}")));
        }
        if !t0.is_finite() || x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("trajectory samples must be finite".into()));
        }
        Ok(Self { dim: x0.len(), lipschitz_bound, head: 0, times: vec![t0], coords: x0.to_vec() })
    }

    /// Build from explicit samples, checking ordering and the Lipschitz bound.
    pub fn from_samples<P: AsRef<[f64]>>(lipschitz_bound: f64, samples: &[(f64, P)]) -> Result<Self> {
        let (first, rest) =
            samples.split_first().ok_or_else(|| Error::InvalidParameter("trajectory needs at least one sample".into()))?;
        let mut traj = Self::new(lipschitz_bound, first.0, first.1.as_ref())?;
        for (t, x) in rest {
            traj.append_segment(*t, x.as_ref())?;
        }
        Ok(traj)
    }

    /// Sample a user path on `[t_start, t_end]` with pitch at most `pitch`.
    /// The sampled path is Lipschitz-checked, never clamped.
    pub fn from_fn<F>(lipschitz_bound: f64, t_start: f64, t_end: f64, pitch: f64, mut path: F) -> Result<Self>
    where
        F: FnMut(f64) -> Vec<f64>,
    {
        if !(pitch > 0.0) || !(t_end >= t_start) {
            return Err(Error::InvalidParameter(format!("invalid sampling grid [{t_start}, {t_end}] pitch {pitch}")));
        }
        let n = ((t_end - t_start) / pitch).ceil().max(0.0) as usize;
        let mut traj = Self::new(lipschitz_bound, t_start, &path(t_start))?;
        for k in 1..=n {
            let t = if k == n { t_end } else { t_start + (t_end - t_start) * k as f64 / n as f64 };
            traj.append_segment(t, &path(t))?;
        }
        Ok(traj)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lipschitz_bound(&self) -> f64 {
        self.lipschitz_bound
    }

    /// Replace the Lipschitz bound after checking every retained segment against it.
    pub fn set_lipschitz_bound(&mut self, bound: f64) -> Result<()> {
        if !(bound.is_finite() && bound >= 0.0) {
            return Err(Error::InvalidParameter(format!("lipschitz bound must be finite and >= 0, got {bound}")));
        }
        for k in self.head + 1..self.times.len() {
            let step = dist(self.point(k - 1), self.point(k));
            let dt = self.times[k] - self.times[k - 1];
            if step > bound * dt + LIPSCHITZ_SLACK {
                return Err(Error::LipschitzViolation { t: self.times[k], step, bound: bound * dt });
            }
        }
        self.lipschitz_bound = bound;
        Ok(())
    }

    /// Number of retained samples.
    pub fn len(&self) -> usize {
        self.times.len() - self.head
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn window_start(&self) -> f64 {
        self.times[self.head]
    }

    pub fn frontier(&self) -> f64 {
        *self.times.last().expect("trajectory is never empty")
    }

    pub fn frontier_point(&self) -> &[f64] {
        self.point(self.times.len() - 1)
    }

    /// Retained samples in time order.
    pub fn samples(&self) -> impl Iterator<Item = (f64, &[f64])> + '_ {
        (self.head..self.times.len()).map(move |k| (self.times[k], self.point(k)))
    }

    #[inline]
    fn point(&self, k: usize) -> &[f64] {
        &self.coords[k * self.dim..(k + 1) * self.dim]
    }

    pub fn eval_at(&self, t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out)?;
        Ok(out)
    }

    /// Linear extension past the frontier with a slope clamped to the Lipschitz bound.
    pub fn extrapolate_at(&self, t: f64, slope: &[f64]) -> Result<Vec<f64>> {
        self.check_slope(slope)?;
        let frontier = self.frontier();
        if !(t >= frontier) {
            return Err(Error::OutOfWindow { t, start: frontier, end: f64::INFINITY });
        }
        let mut out = self.frontier_point().to_vec();
        crate::vecops::axpy(t - frontier, slope, &mut out);
        Ok(out)
    }

    fn check_slope(&self, slope: &[f64]) -> Result<()> {
        if slope.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: slope.len() });
        }
        let speed = norm(slope);
        if speed > self.lipschitz_bound * (1.0 + SLOPE_SLACK) {
            return Err(Error::ContractViolation(format!(
                "extrapolation slope {speed} exceeds lipschitz bound {}",
                self.lipschitz_bound
            )));
        }
        Ok(())
    }

    /// The trajectory extended linearly with `slope` for at most `horizon` past its frontier.
    pub fn extended<'a>(&'a self, slope: &'a [f64], horizon: f64) -> Result<Extended<'a>> {
        self.check_slope(slope)?;
        Ok(Extended { base: self, slope, horizon })
    }

    pub fn append_segment(&mut self, t_new: f64, x_new: &[f64]) -> Result<()> {
        if x_new.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x_new.len() });
        }
        let t_last = self.frontier();
        if !(t_new > t_last) || !t_new.is_finite() {
            return Err(Error::ContractViolation(format!("append at t = {t_new} does not advance frontier {t_last}")));
        }
        if x_new.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite sample at t = {t_new}")));
        }
        let step = dist(self.frontier_point(), x_new);
        let allowed = self.lipschitz_bound * (t_new - t_last);
        if step > allowed + LIPSCHITZ_SLACK {
            return Err(Error::LipschitzViolation { t: t_new, step, bound: allowed });
        }
        self.times.push(t_new);
        self.coords.extend_from_slice(x_new);
        Ok(())
    }

    /// Drop samples strictly before `t_cut`, keeping the last sample at or before it.
    pub fn prune_before(&mut self, t_cut: f64) {
        let k = self.times[self.head..].partition_point(|&t| t <= t_cut);
        if k > 1 {
            self.head += k - 1;
        }
        if self.head > 256 && self.head * 2 > self.times.len() {
            self.times.drain(..self.head);
            self.coords.drain(..self.head * self.dim);
            self.head = 0;
        }
    }

    /// Remove every sample strictly after `t`. The sample at or before `t` is kept.
    pub(crate) fn truncate_after(&mut self, t: f64) {
        let k = self.times.partition_point(|&s| s <= t).max(self.head + 1);
        self.times.truncate(k);
        self.coords.truncate(k * self.dim);
    }
}

impl Path for Trajectory {
    fn dim(&self) -> usize {
        self.dim
    }

    fn lipschitz_bound(&self) -> f64 {
        self.lipschitz_bound
    }

    fn window_start(&self) -> f64 {
        Trajectory::window_start(self)
    }

    fn frontier(&self) -> f64 {
        Trajectory::frontier(self)
    }

    fn eval_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        if out.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: out.len() });
        }
        let start = self.window_start();
        let end = self.frontier();
        if !(t >= start && t <= end) {
            return Err(Error::OutOfWindow { t, start, end });
        }
        // times[lo] <= t < times[lo + 1]; k >= 1 because t >= window start
        let k = self.times[self.head..].partition_point(|&s| s <= t);
        let lo = self.head + k - 1;
        if lo + 1 == self.times.len() || self.times[lo] == t {
            out.copy_from_slice(self.point(lo));
            return Ok(());
        }
        let hi = lo + 1;
        let (t0, t1) = (self.times[lo], self.times[hi]);
        let w = (t - t0) / (t1 - t0);
        let (a, b) = (self.point(lo), self.point(hi));
        for ((o, &x0), &x1) in out.iter_mut().zip(a).zip(b) {
            *o = x0 + w * (x1 - x0);
        }
        Ok(())
    }
}

/// A trajectory extended linearly past its frontier, used for stage
/// evaluations that look into a step that is not committed yet.
#[derive(Debug, Clone, Copy)]
pub struct Extended<'a> {
    base: &'a Trajectory,
    slope: &'a [f64],
    horizon: f64,
}

impl Path for Extended<'_> {
    fn dim(&self) -> usize {
        self.base.dim
    }

    fn lipschitz_bound(&self) -> f64 {
        self.base.lipschitz_bound
    }

    fn window_start(&self) -> f64 {
        self.base.window_start()
    }

    fn frontier(&self) -> f64 {
        self.base.frontier() + self.horizon
    }

    fn eval_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        let f = self.base.frontier();
        if t <= f {
            return self.base.eval_into(t, out);
        }
        if t > f + self.horizon {
            return Err(Error::OutOfWindow { t, start: self.base.window_start(), end: f + self.horizon });
        }
        if out.len() != self.base.dim {
            return Err(Error::DimensionMismatch { expected: self.base.dim, got: out.len() });
        }
        out.copy_from_slice(self.base.frontier_point());
        crate::vecops::axpy(t - f, self.slope, out);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_examples() {
        let a = Trajectory::from_samples(2.0, &[(0.0, [0.0]), (1.0, [1.0])]).unwrap();
        assert_eq!(a.eval_at(0.5).unwrap(), vec![0.5]);
        let b = Trajectory::from_samples(1.0, &[(0.0, [0.0, 0.0]), (2.0, [2.0, 0.0])]).unwrap();
        assert_eq!(b.eval_at(2.0).unwrap(), vec![2.0, 0.0]);
        let c = Trajectory::from_samples(0.0, &[(-1.0, [3.0]), (0.0, [3.0])]).unwrap();
        assert_eq!(c.eval_at(-0.25).unwrap(), vec![3.0]);
    }

    #[test]
    fn eval_outside_window_fails() {
        let a = Trajectory::from_samples(2.0, &[(0.0, [0.0]), (1.0, [1.0])]).unwrap();
        assert!(matches!(a.eval_at(-0.1), Err(Error::OutOfWindow { .. })));
        assert!(matches!(a.eval_at(1.1), Err(Error::OutOfWindow { .. })));
        let single = Trajectory::new(1.0, 0.0, &[4.0]).unwrap();
        assert_eq!(single.eval_at(0.0).unwrap(), vec![4.0]);
        assert!(single.eval_at(-1e-9).is_err());
    }

    #[test]
    fn extrapolation_examples() {
        let a = Trajectory::from_samples(0.5, &[(0.0, [0.0]), (1.0, [0.0])]).unwrap();
        assert!((a.extrapolate_at(1.1, &[0.3]).unwrap()[0] - 0.03).abs() < 1e-15);
        assert_eq!(a.extrapolate_at(7.0, &[0.0]).unwrap(), vec![0.0]);
        let b = Trajectory::new(0.2, 0.0, &[1.0, 1.0]).unwrap();
        let x = b.extrapolate_at(0.5, &[0.1, 0.0]).unwrap();
        assert!((x[0] - 1.05).abs() < 1e-15 && x[1] == 1.0);
        assert!(matches!(a.extrapolate_at(1.1, &[0.6]), Err(Error::ContractViolation(_))));
    }

    #[test]
    fn extended_path_matches_extrapolation() {
        let a = Trajectory::from_samples(1.0, &[(0.0, [0.0]), (1.0, [0.5])]).unwrap();
        let slope = [0.25];
        let ext = a.extended(&slope, 0.2).unwrap();
        let mut out = [0.0];
        ext.eval_into(1.1, &mut out).unwrap();
        assert_eq!(out[0], a.extrapolate_at(1.1, &slope).unwrap()[0]);
        ext.eval_into(0.5, &mut out).unwrap();
        assert_eq!(out[0], 0.25);
        assert!(ext.eval_into(1.3, &mut out).is_err());
    }

    #[test]
    fn append_rejects_fast_segments() {
        let mut a = Trajectory::new(1.0, 0.0, &[0.0]).unwrap();
        a.append_segment(1.0, &[1.0]).unwrap();
        assert!(matches!(a.append_segment(2.0, &[2.1]), Err(Error::LipschitzViolation { .. })));
        assert!(matches!(a.append_segment(1.0, &[1.0]), Err(Error::ContractViolation(_))));
        assert!(matches!(a.append_segment(3.0, &[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
        a.append_segment(2.0, &[2.0]).unwrap();
        assert_eq!(a.eval_at(2.0).unwrap(), vec![2.0]);
    }

    #[test]
    fn prune_keeps_cut_evaluable() {
        let samples: Vec<(f64, [f64; 1])> = (0..1000).map(|k| (k as f64 * 0.1, [(k as f64 * 0.1).sin()])).collect();
        let mut a = Trajectory::from_samples(1.0, &samples).unwrap();
        let before: Vec<f64> = (0..200).map(|k| a.eval_at(60.0 + k as f64 * 0.1813).unwrap()[0]).collect();
        a.prune_before(60.05);
        assert!(a.window_start() <= 60.05);
        assert!((a.window_start() - 60.0).abs() < 1e-9);
        let after: Vec<f64> = (0..200).map(|k| a.eval_at(60.0 + k as f64 * 0.1813).unwrap()[0]).collect();
        assert_eq!(before, after);
        assert!(a.eval_at(59.0).is_err());
    }

    #[test]
    fn truncate_after_restores_frontier() {
        let mut a = Trajectory::from_samples(1.0, &[(0.0, [0.0]), (1.0, [0.5]), (2.0, [1.0])]).unwrap();
        a.truncate_after(1.0);
        assert_eq!(a.frontier(), 1.0);
        a.append_segment(1.5, &[0.2]).unwrap();
        assert_eq!(a.eval_at(1.5).unwrap(), vec![0.2]);
    }

    #[test]
    fn from_fn_samples_and_checks() {
        let a = Trajectory::from_fn(1.0, -1.0, 0.0, 0.1, |t| vec![0.5 * t]).unwrap();
        assert_eq!(a.len(), 11);
        assert!((a.eval_at(-0.55).unwrap()[0] + 0.275).abs() < 1e-15);
        assert!(Trajectory::from_fn(0.4, -1.0, 0.0, 0.1, |t| vec![0.5 * t]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn lipschitz_path() -> impl Strategy<Value = (f64, Vec<(f64, Vec<f64>)>)> {
            (0.1f64..3.0, 1usize..4, prop::collection::vec((0.01f64..1.0, prop::collection::vec(-1.0f64..1.0, 3)), 1..40))
                .prop_map(|(bound, dim, steps)| {
                    let mut t = 0.0;
                    let mut x = vec![0.0; dim];
                    let mut out = vec![(t, x.clone())];
                    for (dt, dir) in steps {
                        let d = &dir[..dim];
                        let n = norm(d).max(1e-12);
                        // speed in [0, bound]
                        let speed = bound * n.min(1.0);
                        for (xi, di) in x.iter_mut().zip(d) {
                            *xi += dt * speed * di / n;
                        }
                        t += dt;
                        out.push((t, x.clone()));
                    }
                    (bound, out)
                })
        }

        proptest! {
            #[test]
            fn interpolation_preserves_lipschitz((bound, samples) in lipschitz_path(), u in 0.0f64..1.0, v in 0.0f64..1.0) {
                let traj = Trajectory::from_samples(bound, &samples).unwrap();
                let (t0, t1) = (traj.window_start(), traj.frontier());
                let a = t0 + u.min(v) * (t1 - t0);
                let b = t0 + u.max(v) * (t1 - t0);
                let xa = traj.eval_at(a).unwrap();
                let xb = traj.eval_at(b).unwrap();
                prop_assert!(dist(&xa, &xb) <= bound * (b - a) + 1e-9);
            }

            #[test]
            fn nodes_are_exact((bound, samples) in lipschitz_path()) {
                let traj = Trajectory::from_samples(bound, &samples).unwrap();
                for (t, x) in &samples {
                    prop_assert_eq!(&traj.eval_at(*t).unwrap(), x);
                }
            }

            #[test]
            fn prune_is_invisible_after_cut((bound, samples) in lipschitz_path(), cut in 0.0f64..1.0, q in prop::collection::vec(0.0f64..1.0, 10)) {
                let mut traj = Trajectory::from_samples(bound, &samples).unwrap();
                let (t0, t1) = (traj.window_start(), traj.frontier());
                let t_cut = t0 + cut * (t1 - t0);
                let queries: Vec<f64> = q.iter().map(|w| t_cut + w * (t1 - t_cut)).collect();
                let before: Vec<Vec<f64>> = queries.iter().map(|&t| traj.eval_at(t).unwrap()).collect();
                traj.prune_before(t_cut);
                for (t, x) in queries.iter().zip(before) {
                    prop_assert_eq!(traj.eval_at(*t).unwrap(), x);
                }
            }
        }
    }
}
