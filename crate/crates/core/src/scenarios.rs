//! Initial data on `[-S0, 0]` and the scalar reduction of the symmetric pair.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{diameter, initial_radius};
use crate::delay::{solve_delay_with, DelayResult};
use crate::dynamics::{Model, Point, SystemState};
use crate::error::{Error, Result};
use crate::history::{Path, Trajectory};
use crate::influence::{InfluenceFunction, InfluenceSpec};
use crate::integrator::{time_grid, Scheme, SimTrace};
use crate::vecops::norm;

/// Slopes of random histories stay below this fraction of `s`.
pub const RANDOM_SLOPE_FRACTION: f64 = 0.9;
/// Segments per random history.
pub const RANDOM_SEGMENTS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct InitialDatum {
    pub trajectories: Vec<Trajectory>,
    /// `d_x(0) / (c - s)`.
    pub s0: f64,
    pub seed: Option<u64>,
}

impl InitialDatum {
    pub fn n(&self) -> usize {
        self.trajectories.len()
    }

    pub fn dim(&self) -> usize {
        self.trajectories.first().map_or(0, Trajectory::dim)
    }

    pub fn positions(&self) -> Vec<Point> {
        self.trajectories.iter().map(|t| t.frontier_point().to_vec()).collect()
    }

    /// `R_x^0` over `[-S0, 0]`.
    pub fn radius(&self) -> Result<f64> {
        initial_radius(&self.trajectories, -self.s0)
    }

    pub fn into_state(self, model: Model) -> Result<SystemState> {
        SystemState::new(model, self.trajectories)
    }
}

fn check_positions(positions: &[Point]) -> Result<usize> {
    let dim = positions.first().map_or(0, Vec::len);
    if positions.len() < 2 {
        return Err(Error::InvalidParameter(format!("need at least two agents, got {}", positions.len())));
    }
    if let Some(bad) = positions.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, got: bad.len() });
    }
    Ok(dim)
}

/// Agents resting at their `t = 0` positions for the whole window.
pub fn constant_history(positions: &[Point], model: &Model) -> Result<InitialDatum> {
    let zero = vec![vec![0.0; check_positions(positions)?]; positions.len()];
    linear_history(positions, &zero, model)
}

/// `x_i(t) = x_i(0) + v_i t` on `[-S0, 0]`; requires `|v_i| <= s`.
pub fn linear_history(positions: &[Point], velocities: &[Point], model: &Model) -> Result<InitialDatum> {
    let dim = check_positions(positions)?;
    if velocities.len() != positions.len() {
        return Err(Error::DimensionMismatch { expected: positions.len(), got: velocities.len() });
    }
    let s = model.s();
    let s0 = model.history_span(diameter(positions));
    let mut trajectories = Vec::with_capacity(positions.len());
    for (i, (x, v)) in positions.iter().zip(velocities).enumerate() {
        if v.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: v.len() });
        }
        if norm(v) > s * (1.0 + 1e-12) {
            return Err(Error::ContractViolation(format!(
                "agent {i} history speed {} exceeds the certified bound s = {s}",
                norm(v)
            )));
        }
        let tr = if s0 > 0.0 {
            let past: Vec<f64> = x.iter().zip(v).map(|(a, b)| a - b * s0).collect();
            Trajectory::from_samples(s, &[(-s0, past.as_slice()), (0.0, x.as_slice())])?
        } else {
            Trajectory::new(s, 0.0, x)?
        };
        trajectories.push(tr);
    }
    Ok(InitialDatum { trajectories, s0, seed: None })
}

fn unit_ball_point(rng: &mut ChaCha8Rng, dim: usize) -> Point {
    loop {
        let p: Point = (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
        if norm(&p) <= 1.0 {
            return p;
        }
    }
}

/// Positions uniform in the ball of radius `box_radius`, histories
/// piecewise linear over [`RANDOM_SEGMENTS`] segments with random slopes of
/// magnitude at most `0.9 s`. Hence `R_x^0 <= box_radius + 0.9 s S0`.
pub fn random_lipschitz_history(seed: u64, n: usize, dim: usize, box_radius: f64, model: &Model) -> Result<InitialDatum> {
    if !(box_radius.is_finite() && box_radius > 0.0) {
        return Err(Error::Domain { what: "box_radius", value: box_radius });
    }
    if n < 2 || dim == 0 {
        return Err(Error::InvalidParameter(format!("need n >= 2 and dim >= 1, got n = {n}, dim = {dim}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions: Vec<Point> =
        (0..n).map(|_| unit_ball_point(&mut rng, dim).into_iter().map(|v| v * box_radius).collect()).collect();
    let s = model.s();
    let s0 = model.history_span(diameter(&positions));
    let pitch = s0 / RANDOM_SEGMENTS as f64;
    let mut trajectories = Vec::with_capacity(n);
    for x0 in &positions {
        // Built backwards from t = 0.
        let mut nodes = vec![(0.0, x0.clone())];
        let mut x = x0.clone();
        for k in 1..=RANDOM_SEGMENTS {
            let dir = unit_ball_point(&mut rng, dim);
            let d = norm(&dir);
            let speed = RANDOM_SLOPE_FRACTION * s * rng.random::<f64>();
            if d > 0.0 {
                for (xi, di) in x.iter_mut().zip(&dir) {
                    *xi -= speed * di / d * pitch;
                }
            }
            let t = if k == RANDOM_SEGMENTS { -s0 } else { -(k as f64) * pitch };
            nodes.push((t, x.clone()));
        }
        nodes.reverse();
        let tr = if s0 > 0.0 { Trajectory::from_samples(s, &nodes)? } else { Trajectory::new(s, 0.0, x0)? };
        trajectories.push(tr);
    }
    Ok(InitialDatum { trajectories, s0, seed: Some(seed) })
}

/// Certify `psi` on `r_max = 2 (R0 + d0)` for a datum built by `build`.
///
/// The datum depends on `s` through its window length, and `s` depends on
/// `r_max`, so the range is widened until it covers the datum it produces.
pub fn auto_certify<F>(psi: &InfluenceFunction, c: f64, r_max_hint: f64, mut build: F) -> Result<(Model, InitialDatum)>
where
    F: FnMut(&Model) -> Result<InitialDatum>,
{
    let mut r_max = r_max_hint.max(1e-12);
    for _ in 0..32 {
        let model = Model::new(c, psi.clone(), r_max)?;
        let datum = build(&model)?;
        let need = 2.0 * (datum.radius()? + diameter(&datum.positions()));
        if need <= r_max {
            return Ok((model, datum));
        }
        r_max = need * (1.0 + 1e-9);
    }
    Err(Error::InvalidParameter("influence range did not settle while certifying the datum".into()))
}

/// The pair `(x, -x)` built from agent one's history.
pub fn symmetric_pair_datum(x0_path: &Trajectory, model: &Model) -> Result<InitialDatum> {
    if x0_path.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: x0_path.dim() });
    }
    let mirrored: Vec<(f64, Vec<f64>)> = x0_path.samples().map(|(t, x)| (t, vec![-x[0]])).collect();
    let bound = x0_path.lipschitz_bound();
    let other = Trajectory::from_samples(bound, &mirrored)?;
    let s0 = model.history_span(2.0 * x0_path.frontier_point()[0].abs());
    Ok(InitialDatum { trajectories: vec![x0_path.clone(), other], s0, seed: None })
}

/// Scalar run of the symmetric pair with the retarded value at every trace time.
#[derive(Debug, Clone, PartialEq)]
pub struct PairRun {
    /// Two-agent trace with `x_2 = -x_1`.
    pub trace: SimTrace,
    pub x: Vec<f64>,
    /// `x(t - tau(t))`.
    pub x_tilde: Vec<f64>,
    pub tau: Vec<f64>,
}

/// Integrate `x' = -psi(|x + x~|)(x + x~)` with `c tau = |x(t) + x(t - tau)|`.
///
/// Only Euler and Heun are supported; the Heun corrector resolves its delay
/// against the history extended along the predictor slope, as in the full engine.
pub fn symmetric_pair_scalar(model: &Model, x0_path: &Trajectory, t_end: f64, dt: f64, scheme: Scheme) -> Result<PairRun> {
    if x0_path.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: x0_path.dim() });
    }
    if scheme == Scheme::Picard {
        return Err(Error::InvalidParameter("the scalar pair integrator supports euler and heun".into()));
    }
    if !(dt.is_finite() && dt > 0.0 && t_end.is_finite() && t_end >= dt) {
        return Err(Error::InvalidParameter(format!("need 0 < dt <= T, got dt = {dt}, T = {t_end}")));
    }
    let datum = symmetric_pair_datum(x0_path, model)?;
    // Full validation of the two-agent datum (window, speed bound, range).
    let state = datum.into_state(model.clone())?;
    let mut path = state.trajectories()[0].clone();
    let c = model.c();
    let psi = model.psi();
    let opts = *model.delay_options();
    let keep = state.max_delay();
    let slope = |x: f64, xt: f64| -psi.value((x + xt).abs()) * (x + xt);
    let solve = |p: &dyn Path, x: f64, t: f64| solve_delay_with(&[-x], p, t, c, &opts);

    let mut run = PairRun { trace: SimTrace::new(scheme, dt, 1), x: Vec::new(), x_tilde: Vec::new(), tau: Vec::new() };
    let record = |run: &mut PairRun, t: f64, x: f64, d: &DelayResult| {
        let xt = d.x_delayed[0];
        let pair = |a: f64| DelayResult { x_delayed: vec![a], ..d.clone() };
        let delays = vec![vec![DelayResult::coincident(&[x]), pair(-xt)], vec![pair(xt), DelayResult::coincident(&[-x])]];
        run.trace.push(t, vec![vec![x], vec![-x]], Some(&delays));
        run.x.push(x);
        run.x_tilde.push(xt);
        run.tau.push(d.tau);
    };

    let mut t = path.frontier();
    for t_new in time_grid(t, t_end, dt) {
        let h = t_new - t;
        let x = path.frontier_point()[0];
        let d0 = solve(&path, x, t)?;
        let f0 = slope(x, d0.x_delayed[0]);
        let next = match scheme {
            Scheme::Euler => x + h * f0,
            _ => {
                let xp = x + h * f0;
                let slope0 = [f0];
                let ext = path.extended(&slope0, h + 1e-12 * t_new.abs().max(1.0))?;
                let d1 = solve(&ext, xp, t_new)?;
                x + 0.5 * h * (f0 + slope(xp, d1.x_delayed[0]))
            }
        };
        record(&mut run, t, x, &d0);
        path.append_segment(t_new, &[next])?;
        path.prune_before(t_new - keep - h);
        t = t_new;
    }
    let x = path.frontier_point()[0];
    let d = solve(&path, x, t)?;
    record(&mut run, t, x, &d);
    Ok(run)
}

/// Header of a datum file.
#[derive(Debug, Clone, PartialEq)]
pub struct DatumHeader {
    pub n: usize,
    pub dim: usize,
    pub c: f64,
    pub psi: InfluenceSpec,
    pub s: f64,
    pub s0: f64,
    pub seed: Option<u64>,
}

/// Write `# key=value` header lines followed by rows `agent_id, t, x_k` sorted by agent then time.
pub fn write_datum<W: Write>(mut w: W, datum: &InitialDatum, model: &Model, extra_header: &str) -> Result<()> {
    if !extra_header.is_empty() {
        writeln!(w, "# {extra_header}")?;
    }
    writeln!(w, "# n={}", datum.n())?;
    writeln!(w, "# dim={}", datum.dim())?;
    writeln!(w, "# c={}", model.c())?;
    writeln!(w, "# psi={}", model.psi().to_spec(Some(model.r_max())))?;
    writeln!(w, "# r_max={}", model.r_max())?;
    writeln!(w, "# s={}", model.s())?;
    writeln!(w, "# s0={}", datum.s0)?;
    if let Some(seed) = datum.seed {
        writeln!(w, "# seed={seed}")?;
    }
    write!(w, "agent_id,t")?;
    for k in 0..datum.dim() {
        write!(w, ",x_{k}")?;
    }
    writeln!(w)?;
    for (i, tr) in datum.trajectories.iter().enumerate() {
        for (t, x) in tr.samples() {
            write!(w, "{i},{t}")?;
            for v in x {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

fn header_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::Parse(format!("bad datum header value {key}={value}")))
}

/// Read a datum file. Histories are checked against the recorded `s`.
pub fn read_datum<R: BufRead>(r: R) -> Result<(DatumHeader, InitialDatum)> {
    let (mut n, mut dim, mut c, mut psi, mut s, mut s0, mut seed, mut r_max) = (None, None, None, None, None, None, None, None);
    let mut rows: Vec<Vec<(f64, Vec<f64>)>> = Vec::new();
    let mut saw_columns = false;
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.trim().split_once('=') {
                match k.trim() {
                    "n" => n = Some(header_value::<usize>(k, v)?),
                    "dim" => dim = Some(header_value::<usize>(k, v)?),
                    "c" => c = Some(header_value::<f64>(k, v)?),
                    "psi" => psi = Some(v.trim().parse::<InfluenceSpec>()?),
                    "r_max" => r_max = Some(header_value::<f64>(k, v)?),
                    "s" => s = Some(header_value::<f64>(k, v)?),
                    "s0" => s0 = Some(header_value::<f64>(k, v)?),
                    "seed" => seed = Some(header_value::<u64>(k, v)?),
                    _ => {}
                }
            }
            continue;
        }
        if !saw_columns {
            saw_columns = true;
            if line.starts_with("agent_id") {
                continue;
            }
        }
        let fields = line
            .split(',')
            .map(|f| f.trim().parse::<f64>().map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1))))
            .collect::<Result<Vec<_>>>()?;
        if fields.len() < 3 {
            return Err(Error::Parse(format!("line {}: expected agent_id,t,x_0,...", lineno + 1)));
        }
        let id = fields[0];
        if id < 0.0 || id.fract() != 0.0 {
            return Err(Error::Parse(format!("line {}: bad agent id {id}", lineno + 1)));
        }
        let id = id as usize;
        if id >= rows.len() {
            rows.resize_with(id + 1, Vec::new);
        }
        rows[id].push((fields[1], fields[2..].to_vec()));
    }
    let missing = |k: &str| Error::Parse(format!("datum header is missing '{k}'"));
    let mut psi = psi.ok_or_else(|| missing("psi"))?;
    if psi.r_max.is_none() {
        psi.r_max = r_max;
    }
    let header = DatumHeader {
        n: n.ok_or_else(|| missing("n"))?,
        dim: dim.ok_or_else(|| missing("dim"))?,
        c: c.ok_or_else(|| missing("c"))?,
        psi,
        s: s.ok_or_else(|| missing("s"))?,
        s0: s0.ok_or_else(|| missing("s0"))?,
        seed,
    };
    if rows.len() != header.n {
        return Err(Error::Parse(format!("header says n = {} but file has {} agents", header.n, rows.len())));
    }
    let mut trajectories = Vec::with_capacity(header.n);
    for (i, samples) in rows.iter().enumerate() {
        if samples.is_empty() {
            return Err(Error::Parse(format!("agent {i} has no samples")));
        }
        if let Some((_, x)) = samples.iter().find(|(_, x)| x.len() != header.dim) {
            return Err(Error::DimensionMismatch { expected: header.dim, got: x.len() });
        }
        trajectories.push(Trajectory::from_samples(header.s, samples)?);
    }
    let datum = InitialDatum { trajectories, s0: header.s0, seed: header.seed };
    Ok((header, datum))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> Model {
        Model::new(1.0, InfluenceFunction::rational(1.0, 1.0).unwrap(), 40.0).unwrap()
    }

    #[test]
    fn constant_history_examples() {
        let m = model();
        let d = constant_history(&[vec![0.0], vec![1.0]], &m).unwrap();
        assert!((d.s0 - 1.0 / (1.0 - m.s())).abs() < 1e-15);
        assert_eq!(d.trajectories[1].eval_at(-d.s0).unwrap(), vec![1.0]);
        let d = constant_history(&[vec![0.5], vec![0.5], vec![0.5]], &m).unwrap();
        assert_eq!(d.s0, 0.0);
        assert!(d.into_state(m.clone()).is_ok());
        let d = constant_history(&[vec![0.0, 0.0], vec![3.0, 4.0]], &m).unwrap();
        assert!((d.s0 - 5.0 / (1.0 - m.s())).abs() < 1e-14);
    }

    #[test]
    fn linear_history_examples() {
        let m = model();
        let s = m.s();
        let p = [vec![1.0], vec![0.0]];
        assert_eq!(
            linear_history(&p, &[vec![0.0], vec![0.0]], &m).unwrap(),
            constant_history(&p, &m).unwrap()
        );
        let d = linear_history(&p, &[vec![s], vec![0.0]], &m).unwrap();
        assert!(d.into_state(m.clone()).is_ok());
        assert!(matches!(linear_history(&p, &[vec![1.1 * s], vec![0.0]], &m), Err(Error::ContractViolation(_))));
    }

    #[test]
    fn random_history_is_reproducible_and_admissible() {
        let m = Model::new(1.0, InfluenceFunction::rational(1.0, 1.0).unwrap(), 100.0).unwrap();
        let a = random_lipschitz_history(7, 10, 2, 5.0, &m).unwrap();
        let b = random_lipschitz_history(7, 10, 2, 5.0, &m).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, random_lipschitz_history(8, 10, 2, 5.0, &m).unwrap());
        for tr in &a.trajectories {
            assert_eq!(tr.len(), RANDOM_SEGMENTS + 1);
            assert_eq!(tr.window_start(), -a.s0);
            let pts: Vec<_> = tr.samples().map(|(t, x)| (t, x.to_vec())).collect();
            for w in pts.windows(2) {
                let v = crate::vecops::dist(&w[1].1, &w[0].1) / (w[1].0 - w[0].0);
                assert!(v <= RANDOM_SLOPE_FRACTION * m.s() * (1.0 + 1e-12));
            }
        }
        assert!(a.radius().unwrap() <= 5.0 + RANDOM_SLOPE_FRACTION * m.s() * a.s0 + 1e-12);
        assert!(a.into_state(m).is_ok());
    }

    #[test]
    fn auto_certify_covers_the_datum() {
        let psi = InfluenceFunction::rational(1.0, 1.0).unwrap();
        let (m, d) = auto_certify(&psi, 1.0, 1.0, |m| random_lipschitz_history(3, 6, 3, 4.0, m)).unwrap();
        assert!(m.r_max() >= 2.0 * (d.radius().unwrap() + diameter(&d.positions())));
        assert!(d.into_state(m).is_ok());
    }

    fn pair_path(m: &Model, x0: f64) -> Trajectory {
        let s0 = m.history_span(2.0 * x0.abs());
        Trajectory::from_samples(m.s(), &[(-s0, [x0]), (0.0, [x0])]).unwrap()
    }

    #[test]
    fn zero_pair_stays_at_rest() {
        let m = model();
        let path = Trajectory::new(m.s(), 0.0, &[0.0]).unwrap();
        let run = symmetric_pair_scalar(&m, &path, 2.0, 0.1, Scheme::Heun).unwrap();
        assert!(run.x.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn unit_pair_decays_monotonically() {
        let m = model();
        let run = symmetric_pair_scalar(&m, &pair_path(&m, 1.0), 10.0, 0.01, Scheme::Heun).unwrap();
        assert!(run.x.windows(2).all(|w| w[1].abs() < w[0].abs()));
        assert!(crate::analysis::sign_condition_holds(&run.x, &run.x_tilde));
        assert!(run.x.last().unwrap().abs() < 0.5);
        assert!((run.tau[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn scalar_pair_matches_full_engine() {
        use crate::integrator::{integrate, IntegrateOptions};
        let m = model();
        let path = Trajectory::from_samples(m.s(), &[(-6.0, [1.6]), (-3.0, [1.9]), (0.0, [1.2])]).unwrap();
        for scheme in [Scheme::Euler, Scheme::Heun] {
            let run = symmetric_pair_scalar(&m, &path, 3.0, 0.01, scheme).unwrap();
            let mut st = symmetric_pair_datum(&path, &m).unwrap().into_state(m.clone()).unwrap();
            let full = integrate(&mut st, &IntegrateOptions::new(scheme, 0.01, 3.0), &mut []).unwrap();
            let gap = run.trace.sup_gap(&full).unwrap();
            assert!(gap < 1e-12, "{scheme}: {gap}");
        }
    }

    #[test]
    fn datum_file_round_trip() {
        let m = Model::new(1.0, InfluenceFunction::gaussian(0.5, 2.0).unwrap(), 20.0).unwrap();
        let d = random_lipschitz_history(11, 4, 2, 2.0, &m).unwrap();
        let mut buf = Vec::new();
        write_datum(&mut buf, &d, &m, "config sha256=abc").unwrap();
        let (h, back) = read_datum(std::io::Cursor::new(buf)).unwrap();
        assert_eq!((h.n, h.dim, h.c, h.seed), (4, 2, 1.0, Some(11)));
        assert_eq!(h.s, m.s());
        assert_eq!(InfluenceFunction::from_spec(&h.psi).unwrap(), *m.psi());
        assert_eq!(h.psi.r_max, Some(20.0));
        assert_eq!(back, d);
    }

    #[test]
    fn datum_reader_rejects_bad_files() {
        let bad_speed = "# n=2\n# dim=1\n# c=1\n# psi=rational:1,1\n# s=0.5\n# s0=2\nagent_id,t,x_0\n0,-2,0\n0,0,2\n1,0,1\n";
        assert!(matches!(read_datum(bad_speed.as_bytes()), Err(Error::LipschitzViolation { .. })));
        let missing = "# n=1\nagent_id,t,x_0\n0,0,1\n";
        assert!(matches!(read_datum(missing.as_bytes()), Err(Error::Parse(_))));
    }
}
