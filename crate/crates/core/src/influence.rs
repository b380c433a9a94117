//! Influence kernels `psi(r)` and the certified speed bound `s = sup psi(r) r`.
//!
//! A kernel is only usable together with a speed of light `c` once
//! [`InfluenceFunction::validate`] has certified `s < c` on the distance
//! range the scenario can reach. The certificate carries an upper bound on
//! the supremum, never an estimate.

use std::collections::BinaryHeap;
use std::fmt;

use ordered_float::OrderedFloat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Additive error allowed between the certified speed bound and the true supremum.
pub const SPEED_BOUND_TOL: f64 = 1e-6;

const INITIAL_CELLS: usize = 512;
const MAX_REFINEMENTS: usize = 2_000_000;
const LIPSCHITZ_SPOT_SAMPLES: usize = 1001;

#[derive(Debug, Clone, PartialEq)]
pub enum InfluenceKind {
    /// `kappa / (1 + r^2)^beta`
    Rational { kappa: f64, beta: f64 },
    /// `kappa * exp(-r^2 / sigma^2)`
    Gaussian { kappa: f64, sigma: f64 },
    /// `max(0, a - b r)`
    AffineCutoff { a: f64, b: f64 },
    /// Piecewise-linear through `(r, psi)` nodes, constant outside the node range.
    Tabulated { nodes: Vec<(f64, f64)> },
}

/// An immutable influence kernel together with its Lipschitz constant.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceFunction {
    kind: InfluenceKind,
    lipschitz: f64,
}

/// Serialized form used by configuration files: `{kind, params, r_max}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceSpec {
    pub kind: String,
    #[serde(default)]
    pub params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_max: Option<f64>,
}

/// Certified upper bound on `sup_{0 <= r <= r_max} psi(r) r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedBound {
    /// Certified upper bound.
    pub value: f64,
    /// Largest sampled value of `psi(r) r` (a lower bound on the supremum).
    pub lower: f64,
    /// Where `lower` was attained.
    pub argmax: f64,
}

/// Outcome of a successful [`InfluenceFunction::validate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certification {
    /// Certified speed bound, strictly below `c`.
    pub s: f64,
    pub c: f64,
    /// Distance range the certificate covers.
    pub r_max: f64,
    pub argmax: f64,
    /// Maximum of `psi` on `[0, r_max]`.
    pub psi_sup: f64,
}

fn check_finite(what: &'static str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain { what, value: v })
    }
}

fn rational_lipschitz(kappa: f64, beta: f64) -> f64 {
    if beta == 0.0 || kappa == 0.0 {
        return 0.0;
    }
    // |psi'| = 2 beta kappa r (1 + r^2)^(-beta - 1), maximal at r^2 = 1 / (2 beta + 1).
    let r2 = 1.0 / (2.0 * beta + 1.0);
    2.0 * beta * kappa * r2.sqrt() * (1.0 + r2).powf(-beta - 1.0)
}

impl InfluenceFunction {
    pub fn rational(kappa: f64, beta: f64) -> Result<Self> {
        check_finite("kappa", kappa)?;
        check_finite("beta", beta)?;
        if kappa < 0.0 {
            return Err(Error::InvalidParameter(format!("rational kappa must be >= 0, got {kappa}")));
        }
        if beta < 0.0 {
            return Err(Error::InvalidParameter(format!("rational beta must be >= 0, got {beta}")));
        }
        Ok(Self { kind: InfluenceKind::Rational { kappa, beta }, lipschitz: rational_lipschitz(kappa, beta) })
    }

    pub fn gaussian(kappa: f64, sigma: f64) -> Result<Self> {
        check_finite("kappa", kappa)?;
        check_finite("sigma", sigma)?;
        if kappa < 0.0 {
            return Err(Error::InvalidParameter(format!("gaussian kappa must be >= 0, got {kappa}")));
        }
        if sigma <= 0.0 {
            return Err(Error::InvalidParameter(format!("gaussian sigma must be > 0, got {sigma}")));
        }
        // |psi'| = 2 kappa r / sigma^2 exp(-r^2/sigma^2), maximal at r = sigma / sqrt(2).
        let lipschitz = kappa * std::f64::consts::SQRT_2 * (-0.5f64).exp() / sigma;
        Ok(Self { kind: InfluenceKind::Gaussian { kappa, sigma }, lipschitz })
    }

    pub fn affine_cutoff(a: f64, b: f64) -> Result<Self> {
        check_finite("a", a)?;
        check_finite("b", b)?;
        if a < 0.0 || b < 0.0 {
            return Err(Error::InvalidParameter(format!("affine-cutoff needs a >= 0 and b >= 0, got a={a}, b={b}")));
        }
        Ok(Self { kind: InfluenceKind::AffineCutoff { a, b }, lipschitz: b })
    }

    /// Piecewise-linear kernel. Node abscissae must be strictly increasing and
    /// start at `r >= 0`; repeated abscissae would encode a jump and are rejected.
    pub fn tabulated(nodes: Vec<(f64, f64)>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidParameter("tabulated kernel needs at least one node".into()));
        }
        for &(r, v) in &nodes {
            check_finite("node r", r)?;
            check_finite("node psi", v)?;
            if r < 0.0 || v < 0.0 {
                return Err(Error::InvalidParameter(format!("tabulated node ({r}, {v}) must be nonnegative")));
            }
        }
        let mut lipschitz = 0.0f64;
        for w in nodes.windows(2) {
            let (r0, v0) = w[0];
            let (r1, v1) = w[1];
            if r1 <= r0 {
                return Err(Error::InfluenceRejected(format!(
                    "tabulated data is not Lipschitz: abscissae {r0} and {r1} are not strictly increasing"
                )));
            }
            lipschitz = lipschitz.max((v1 - v0).abs() / (r1 - r0));
        }
        Ok(Self { kind: InfluenceKind::Tabulated { nodes }, lipschitz })
    }

    pub fn from_spec(spec: &InfluenceSpec) -> Result<Self> {
        let p = &spec.params;
        let arity = |lo: usize, hi: usize| -> Result<()> {
            if p.len() < lo || p.len() > hi {
                Err(Error::InvalidParameter(format!(
                    "influence kind '{}' expects {lo}..={hi} params, got {}",
                    spec.kind,
                    p.len()
                )))
            } else {
                Ok(())
            }
        };
        match spec.kind.as_str() {
            "rational" => {
                arity(1, 2)?;
                Self::rational(p[0], p.get(1).copied().unwrap_or(1.0))
            }
            "gaussian" => {
                arity(2, 2)?;
                Self::gaussian(p[0], p[1])
            }
            "affine-cutoff" => {
                arity(2, 2)?;
                Self::affine_cutoff(p[0], p[1])
            }
            "tabulated" => {
                if p.is_empty() || p.len() % 2 != 0 {
                    return Err(Error::InvalidParameter(
                        "tabulated params must be a flat list of (r, psi) pairs".into(),
                    ));
                }
                Self::tabulated(p.chunks(2).map(|c| (c[0], c[1])).collect())
            }
            other => Err(Error::InvalidParameter(format!("unknown influence kind '{other}'"))),
        }
    }

    pub fn to_spec(&self, r_max: Option<f64>) -> InfluenceSpec {
        let (kind, params) = match &self.kind {
            InfluenceKind::Rational { kappa, beta } => ("rational", vec![*kappa, *beta]),
            InfluenceKind::Gaussian { kappa, sigma } => ("gaussian", vec![*kappa, *sigma]),
            InfluenceKind::AffineCutoff { a, b } => ("affine-cutoff", vec![*a, *b]),
            InfluenceKind::Tabulated { nodes } => ("tabulated", nodes.iter().flat_map(|&(r, v)| [r, v]).collect()),
        };
        InfluenceSpec { kind: kind.to_string(), params, r_max }
    }

    pub fn kind(&self) -> &InfluenceKind {
        &self.kind
    }

    pub fn lipschitz_const(&self) -> f64 {
        self.lipschitz
    }

    /// `psi(r)` with domain checking.
    pub fn eval(&self, r: f64) -> Result<f64> {
        if !r.is_finite() || r < 0.0 {
            return Err(Error::Domain { what: "r", value: r });
        }
        Ok(self.value(r))
    }

    /// Unchecked evaluation for hot paths; `r` must be finite and nonnegative.
    #[inline]
    pub(crate) fn value(&self, r: f64) -> f64 {
        match &self.kind {
            InfluenceKind::Rational { kappa, beta } => {
                let base = 1.0 + r * r;
                if *beta == 1.0 {
                    kappa / base
                } else {
                    kappa * base.powf(-beta)
                }
            }
            InfluenceKind::Gaussian { kappa, sigma } => kappa * (-(r * r) / (sigma * sigma)).exp(),
            InfluenceKind::AffineCutoff { a, b } => (a - b * r).max(0.0),
            InfluenceKind::Tabulated { nodes } => {
                let k = nodes.partition_point(|&(x, _)| x <= r);
                if k == 0 {
                    nodes[0].1
                } else if k == nodes.len() {
                    nodes[k - 1].1
                } else {
                    let (r0, v0) = nodes[k - 1];
                    let (r1, v1) = nodes[k];
                    v0 + (v1 - v0) * (r - r0) / (r1 - r0)
                }
            }
        }
    }

    /// Exact `(min, max)` of `psi` on `[lo, hi]`.
    pub fn range_bounds(&self, lo: f64, hi: f64) -> Result<(f64, f64)> {
        if !(lo.is_finite() && hi.is_finite()) || lo < 0.0 || hi < lo {
            return Err(Error::InvalidParameter(format!("invalid range [{lo}, {hi}]")));
        }
        match &self.kind {
            // Nonincreasing on [0, inf).
            InfluenceKind::Rational { .. } | InfluenceKind::Gaussian { .. } | InfluenceKind::AffineCutoff { .. } => {
                Ok((self.value(hi), self.value(lo)))
            }
            InfluenceKind::Tabulated { nodes } => {
                let (mut min, mut max) = (self.value(lo).min(self.value(hi)), self.value(lo).max(self.value(hi)));
                for &(_, v) in nodes.iter().filter(|&&(r, _)| r > lo && r < hi) {
                    min = min.min(v);
                    max = max.max(v);
                }
                Ok((min, max))
            }
        }
    }

    /// Certified upper bound on `sup_{0 <= r <= r_max} psi(r) r`.
    ///
    /// Branch and bound over a cell partition of `[0, r_max]`: on a cell
    /// `[a, b]` the product `psi(r) r` is Lipschitz with constant
    /// `L_psi b + psi(a) + L_psi (b - a)`, which bounds the cell maximum from
    /// its endpoint values. Cells are refined until the largest cell bound is
    /// within [`SPEED_BOUND_TOL`] of the best sampled value.
    pub fn effective_speed_bound(&self, r_max: f64) -> Result<SpeedBound> {
        if !r_max.is_finite() || r_max <= 0.0 {
            return Err(Error::Domain { what: "r_max", value: r_max });
        }
        let l = self.lipschitz;
        let f = |r: f64| self.value(r) * r;
        let cell = |a: f64, fa: f64, b: f64, fb: f64| {
            let psi_a = self.value(a);
            let local = l * b + psi_a + l * (b - a);
            let ub = 0.5 * (fa + fb) + 0.5 * local * (b - a);
            (OrderedFloat(ub), OrderedFloat(a), OrderedFloat(fa), OrderedFloat(b), OrderedFloat(fb))
        };

        let mut lower = 0.0f64;
        let mut argmax = 0.0f64;
        let mut heap = BinaryHeap::with_capacity(4 * INITIAL_CELLS);
        let h = r_max / INITIAL_CELLS as f64;
        let mut prev = (0.0, f(0.0));
        for k in 1..=INITIAL_CELLS {
            let r = if k == INITIAL_CELLS { r_max } else { k as f64 * h };
            let fr = f(r);
            if fr > lower {
                lower = fr;
                argmax = r;
            }
            heap.push(cell(prev.0, prev.1, r, fr));
            prev = (r, fr);
        }

        let mut refinements = 0;
        loop {
            let top = *heap.peek().expect("partition is never empty");
            let ub = top.0 .0;
            if ub <= lower + SPEED_BOUND_TOL || refinements >= MAX_REFINEMENTS {
                return Ok(SpeedBound { value: ub.max(lower), lower, argmax });
            }
            heap.pop();
            let (a, fa, b, fb) = (top.1 .0, top.2 .0, top.3 .0, top.4 .0);
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                // Cell cannot be split further in floating point.
                return Ok(SpeedBound { value: ub.max(lower), lower, argmax });
            }
            let fm = f(m);
            if fm > lower {
                lower = fm;
                argmax = m;
            }
            heap.push(cell(a, fa, m, fm));
            heap.push(cell(m, fm, b, fb));
            refinements += 1;
        }
    }

    fn positive_on(&self, r_max: f64) -> bool {
        match &self.kind {
            InfluenceKind::Tabulated { nodes } => {
                self.value(r_max) > 0.0 && nodes.iter().filter(|&&(r, _)| r > 0.0 && r <= r_max).all(|&(_, v)| v > 0.0)
                    // psi(0+) > 0 when the first node sits above zero
                    && (nodes[0].0 == 0.0 || nodes[0].1 > 0.0)
            }
            // Nonincreasing kinds: positivity on (0, r_max] reduces to psi(r_max) > 0.
            _ => self.value(r_max) > 0.0,
        }
    }

    fn lipschitz_spot_check(&self, r_max: f64) -> Option<(f64, f64)> {
        let h = r_max / (LIPSCHITZ_SPOT_SAMPLES - 1) as f64;
        let vals: Vec<f64> = (0..LIPSCHITZ_SPOT_SAMPLES).map(|k| self.value(k as f64 * h)).collect();
        let bound = |dr: f64| self.lipschitz * dr * (1.0 + 1e-9) + 1e-14;
        for stride in [1usize, 7, 100, LIPSCHITZ_SPOT_SAMPLES - 1] {
            for k in 0..LIPSCHITZ_SPOT_SAMPLES.saturating_sub(stride) {
                let dr = stride as f64 * h;
                if (vals[k + stride] - vals[k]).abs() > bound(dr) {
                    return Some((k as f64 * h, (k + stride) as f64 * h));
                }
            }
        }
        None
    }

    /// Certify the kernel for a speed of light `c` on the distance range `[0, r_max]`.
    pub fn validate(&self, c: f64, r_max: f64) -> Result<Certification> {
        if !c.is_finite() || c <= 0.0 {
            return Err(Error::InvalidParameter(format!("speed of light c must be finite and > 0, got {c}")));
        }
        if !r_max.is_finite() || r_max <= 0.0 {
            return Err(Error::InvalidParameter(format!("r_max must be finite and > 0, got {r_max}")));
        }
        if !self.positive_on(r_max) {
            return Err(Error::InfluenceRejected(format!("psi(r) must be positive for all r in (0, {r_max}]")));
        }
        if let Some((a, b)) = self.lipschitz_spot_check(r_max) {
            return Err(Error::InfluenceRejected(format!(
                "psi is not Lipschitz with constant {} between r = {a} and r = {b}",
                self.lipschitz
            )));
        }
        let bound = self.effective_speed_bound(r_max)?;
        if bound.value >= c {
            return Err(Error::SpeedOfLight { s: bound.value, c, r: bound.argmax });
        }
        let (_, psi_sup) = self.range_bounds(0.0, r_max)?;
        Ok(Certification { s: bound.value, c, r_max, argmax: bound.argmax, psi_sup })
    }
}

impl fmt::Display for InfluenceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.kind)?;
        for (k, p) in self.params.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

impl std::str::FromStr for InfluenceSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let params = rest
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("bad influence parameter '{t}': {e}"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(InfluenceSpec { kind: kind.trim().to_string(), params, r_max: None })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent oracle: plain dense grid maximum of `psi(r) r`.
    fn grid_sup(f: &InfluenceFunction, r_max: f64, n: usize) -> f64 {
        (0..=n).map(|k| {
            let r = r_max * k as f64 / n as f64;
            f.eval(r).unwrap() * r
        })
        .fold(0.0, f64::max)
    }

    #[test]
    fn eval_examples() {
        let f = InfluenceFunction::rational(1.0, 1.0).unwrap();
        assert_eq!(f.eval(0.0).unwrap(), 1.0);
        assert_eq!(f.eval(1.0).unwrap(), 0.5);
        let t = InfluenceFunction::tabulated(vec![(0.0, 1.0), (2.0, 0.2)]).unwrap();
        assert!((t.eval(1.0).unwrap() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn eval_rejects_bad_domain() {
        let f = InfluenceFunction::rational(1.0, 1.0).unwrap();
        assert!(matches!(f.eval(-0.1), Err(Error::Domain { .. })));
        assert!(matches!(f.eval(f64::NAN), Err(Error::Domain { .. })));
        assert!(matches!(f.eval(f64::INFINITY), Err(Error::Domain { .. })));
    }

    #[test]
    fn rational_speed_bound_matches_calculus() {
        // r / (1 + r^2) peaks at r = 1 with value 1/2.
        let f = InfluenceFunction::rational(1.0, 1.0).unwrap();
        let b = f.effective_speed_bound(10.0).unwrap();
        assert!(b.value >= 0.5 && b.value <= 0.5 + SPEED_BOUND_TOL, "{b:?}");
        assert!((b.argmax - 1.0).abs() < 1e-2);
        assert!(b.value >= grid_sup(&f, 10.0, 200_000));
    }

    #[test]
    fn zero_and_constant_kernels() {
        let zero = InfluenceFunction::rational(0.0, 1.0).unwrap();
        assert_eq!(zero.effective_speed_bound(3.0).unwrap().value, 0.0);
        let half = InfluenceFunction::rational(0.5, 0.0).unwrap();
        let b = half.effective_speed_bound(1.0).unwrap();
        assert!(b.value >= 0.5 && b.value <= 0.5 + SPEED_BOUND_TOL);
        let table = InfluenceFunction::tabulated(vec![(0.0, 0.5)]).unwrap();
        assert!(table.effective_speed_bound(1.0).unwrap().value >= 0.5);
    }

    #[test]
    fn gaussian_speed_bound_beats_grid() {
        let f = InfluenceFunction::gaussian(2.0, 1.5).unwrap();
        let b = f.effective_speed_bound(6.0).unwrap();
        // closed form: kappa sigma / sqrt(2) e^{-1/2}
        let exact = 2.0 * 1.5 / 2f64.sqrt() * (-0.5f64).exp();
        assert!(b.value >= exact && b.value <= exact + SPEED_BOUND_TOL);
        assert!(b.value >= grid_sup(&f, 6.0, 100_000));
    }

    #[test]
    fn validate_examples() {
        let f = InfluenceFunction::rational(1.0, 1.0).unwrap();
        let cert = f.validate(1.0, 10.0).unwrap();
        assert!((cert.s - 0.5).abs() < 1e-5);
        assert_eq!(cert.psi_sup, 1.0);

        let f2 = InfluenceFunction::rational(2.0, 1.0).unwrap();
        match f2.validate(1.0, 10.0) {
            Err(Error::SpeedOfLight { s, r, .. }) => {
                assert!(s >= 1.0);
                assert!((r - 1.0).abs() < 1e-2);
            }
            other => panic!("expected rejection, got {other:?}"),
        }

        let zero = InfluenceFunction::rational(0.0, 1.0).unwrap();
        assert!(matches!(zero.validate(1.0, 10.0), Err(Error::InfluenceRejected(_))));
    }

    #[test]
    fn affine_cutoff_positivity_depends_on_range() {
        let f = InfluenceFunction::affine_cutoff(1.0, 0.5).unwrap();
        assert!(f.validate(1.0, 1.5).is_ok());
        assert!(matches!(f.validate(1.0, 2.0), Err(Error::InfluenceRejected(_))));
    }

    #[test]
    fn tabulated_rejects_jumps() {
        let r = InfluenceFunction::tabulated(vec![(0.0, 1.0), (1.0, 0.5), (1.0, 0.2)]);
        assert!(matches!(r, Err(Error::InfluenceRejected(_))));
    }

    #[test]
    fn lipschitz_constants_bound_difference_quotients() {
        let kernels = [
            InfluenceFunction::rational(1.0, 1.0).unwrap(),
            InfluenceFunction::rational(0.7, 2.5).unwrap(),
            InfluenceFunction::gaussian(1.0, 0.8).unwrap(),
            InfluenceFunction::affine_cutoff(1.0, 0.3).unwrap(),
            InfluenceFunction::tabulated(vec![(0.0, 1.0), (0.5, 0.9), (2.0, 0.1)]).unwrap(),
        ];
        for f in &kernels {
            let h = 1e-4;
            let mut worst = 0.0f64;
            for k in 0..50_000 {
                let r = k as f64 * h;
                worst = worst.max((f.value(r + h) - f.value(r)).abs() / h);
            }
            assert!(worst <= f.lipschitz_const() * (1.0 + 1e-6), "{f:?}: {worst}");
            assert!(worst >= 0.95 * f.lipschitz_const(), "{f:?}: constant is loose: {worst}");
        }
    }

    #[test]
    fn range_bounds_are_exact() {
        let t = InfluenceFunction::tabulated(vec![(0.0, 0.2), (1.0, 1.0), (3.0, 0.1)]).unwrap();
        let (lo, hi) = t.range_bounds(0.0, 2.0).unwrap();
        assert!((lo - 0.2).abs() < 1e-15);
        assert_eq!(hi, 1.0);
        let g = InfluenceFunction::gaussian(1.0, 2.0).unwrap();
        let (lo, hi) = g.range_bounds(0.0, 2.0).unwrap();
        assert_eq!(hi, 1.0);
        assert!((lo - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn spec_round_trip() {
        let spec: InfluenceSpec = "gaussian:1.5,2".parse().unwrap();
        let f = InfluenceFunction::from_spec(&spec).unwrap();
        assert_eq!(f.to_spec(None), InfluenceSpec { kind: "gaussian".into(), params: vec![1.5, 2.0], r_max: None });
        assert_eq!(spec.to_string(), "gaussian:1.5,2");
        let default_beta = InfluenceFunction::from_spec(&"rational:1".parse().unwrap()).unwrap();
        assert_eq!(default_beta.kind(), &InfluenceKind::Rational { kappa: 1.0, beta: 1.0 });
        assert!(InfluenceFunction::from_spec(&"cubic:1".parse().unwrap()).is_err());
        assert!(InfluenceFunction::from_spec(&"tabulated:0,1,2".parse().unwrap()).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn speed_bound_monotone_in_range(kappa in 0.1f64..3.0, beta in 0.3f64..3.0, r1 in 0.1f64..20.0, extra in 0.0f64..20.0) {
                let f = InfluenceFunction::rational(kappa, beta).unwrap();
                let a = f.effective_speed_bound(r1).unwrap().value;
                let b = f.effective_speed_bound(r1 + extra).unwrap().value;
                // both are within SPEED_BOUND_TOL of nested suprema
                prop_assert!(a <= b + SPEED_BOUND_TOL);
            }

            #[test]
            fn accepted_kernels_respect_bound(kappa in 0.1f64..2.0, sigma in 0.2f64..5.0, c in 0.5f64..5.0, r_max in 0.5f64..30.0) {
                let f = InfluenceFunction::gaussian(kappa, sigma).unwrap();
                if let Ok(cert) = f.validate(c, r_max) {
                    prop_assert!(cert.s < c);
                    for k in 0..=2000 {
                        let r = r_max * k as f64 / 2000.0;
                        prop_assert!(f.value(r) * r <= cert.s);
                    }
                }
            }
        }
    }
}
