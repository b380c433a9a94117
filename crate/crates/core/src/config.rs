//! Run configuration (TOML) and the pipeline from config to an initial state.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{diameter, radius, DecayRange};
use crate::dynamics::{Model, Point, SystemState};
use crate::error::{Error, Result};
use crate::history::Trajectory;
use crate::influence::{InfluenceFunction, InfluenceSpec};
use crate::integrator::{default_dt, IntegrateOptions, PicardOptions, Scheme};
use crate::scenarios::{
    auto_certify, constant_history, linear_history, random_lipschitz_history, read_datum, symmetric_pair_datum,
    InitialDatum,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub psi: InfluenceSpec,
    pub scenario: ScenarioSpec,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioSpec {
    Constant {
        positions: Vec<Point>,
    },
    Linear {
        positions: Vec<Point>,
        velocities: Vec<Point>,
    },
    Random {
        seed: u64,
        box_radius: f64,
    },
    /// Two agents at `x0` and `-x0` (1D); `velocity` is the constant history slope of the first agent.
    SymmetricPair {
        x0: f64,
        #[serde(default)]
        velocity: f64,
    },
    File {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(rename = "T", alias = "t_end")]
    pub t_end: f64,
    #[serde(default = "default_picard_tol")]
    pub picard_tol: f64,
    #[serde(default = "default_picard_max_iter")]
    pub picard_max_iter: usize,
}

fn default_scheme() -> Scheme {
    Scheme::Heun
}

fn default_picard_tol() -> f64 {
    PicardOptions::default().tol
}

fn default_picard_max_iter() -> usize {
    PicardOptions::default().max_iter
}

impl Default for IntegratorSection {
    fn default() -> Self {
        Self {
            scheme: default_scheme(),
            dt: None,
            t_end: 10.0,
            picard_tol: default_picard_tol(),
            picard_max_iter: default_picard_max_iter(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayRangeSpec {
    #[default]
    Radius,
    TwiceRadius,
}

impl From<DecayRangeSpec> for DecayRange {
    fn from(r: DecayRangeSpec) -> Self {
        match r {
            DecayRangeSpec::Radius => DecayRange::Radius,
            DecayRangeSpec::TwiceRadius => DecayRange::TwiceRadius,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_trajectory")]
    pub trajectory: String,
    #[serde(default = "default_metrics")]
    pub metrics: String,
    #[serde(default = "default_audit")]
    pub audit: String,
    /// Optional per-pair delay audit file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delays: Option<String>,
    /// Consensus threshold as a fraction of `d_x(0)`.
    #[serde(default = "default_eps_rel")]
    pub eps_rel: f64,
    #[serde(default)]
    pub decay_range: DecayRangeSpec,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_trajectory() -> String {
    "trajectory.csv".into()
}

fn default_metrics() -> String {
    "metrics.csv".into()
}

fn default_audit() -> String {
    "audit.csv".into()
}

fn default_eps_rel() -> f64 {
    1e-3
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            trajectory: default_trajectory(),
            metrics: default_metrics(),
            audit: default_audit(),
            delays: None,
            eps_rel: default_eps_rel(),
            decay_range: DecayRangeSpec::default(),
        }
    }
}

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub scheme: Option<Scheme>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Load a config; relative scenario and output paths are resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let ScenarioSpec::File { path: p } = &mut cfg.scenario {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if cfg.output.dir.is_relative() {
            cfg.output.dir = base.join(&cfg.output.dir);
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(dt) = o.dt {
            self.integrator.dt = Some(dt);
        }
        if let Some(t) = o.t_end {
            self.integrator.t_end = t;
        }
        if let Some(s) = o.scheme {
            self.integrator.scheme = s;
        }
        if let Some(seed) = o.seed {
            match &mut self.scenario {
                ScenarioSpec::Random { seed: s, .. } => *s = seed,
                _ => return Err(Error::InvalidParameter("--seed only applies to random scenarios".into())),
            }
        }
        if let Some(dir) = &o.out_dir {
            self.output.dir = dir.clone();
        }
        Ok(())
    }

    /// Field-level checks that do not need the kernel certified.
    pub fn check(&self) -> Result<()> {
        let positive = |what: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{what} must be finite and > 0, got {v}")))
            }
        };
        positive("model.c", self.model.c)?;
        positive("integrator.T", self.integrator.t_end)?;
        if let Some(dt) = self.integrator.dt {
            positive("integrator.dt", dt)?;
        }
        positive("integrator.picard_tol", self.integrator.picard_tol)?;
        positive("output.eps_rel", self.output.eps_rel)?;
        if self.model.n.is_some_and(|n| n < 2) {
            return Err(Error::InvalidParameter("model.n must be >= 2".into()));
        }
        if self.model.dim == Some(0) {
            return Err(Error::InvalidParameter("model.dim must be >= 1".into()));
        }
        match &self.scenario {
            ScenarioSpec::Random { box_radius, .. } => {
                positive("scenario.box_radius", *box_radius)?;
                if self.model.n.is_none() || self.model.dim.is_none() {
                    return Err(Error::InvalidParameter("random scenarios need model.n and model.dim".into()));
                }
            }
            ScenarioSpec::File { path } if !path.exists() => {
                return Err(Error::InvalidParameter(format!("scenario.path {} does not exist", path.display())));
            }
            _ => {}
        }
        Ok(())
    }

    /// SHA-256 of the TOML serialization of this (resolved) config.
    pub fn hash(&self) -> String {
        let text = toml::to_string(self).unwrap_or_default();
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// Everything a run needs: certified model, datum and integrator options.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: RunConfig,
    pub model: Model,
    pub datum: InitialDatum,
    pub options: IntegrateOptions,
}

impl Prepared {
    pub fn state(&self) -> Result<SystemState> {
        self.datum.clone().into_state(self.model.clone())
    }

    pub fn config_hash(&self) -> String {
        self.config.hash()
    }
}

fn build_datum(spec: &ScenarioSpec, model_cfg: &ModelSection, model: &Model) -> Result<InitialDatum> {
    match spec {
        ScenarioSpec::Constant { positions } => constant_history(positions, model),
        ScenarioSpec::Linear { positions, velocities } => linear_history(positions, velocities, model),
        ScenarioSpec::Random { seed, box_radius } => {
            let (n, dim) = (model_cfg.n.unwrap_or(2), model_cfg.dim.unwrap_or(1));
            random_lipschitz_history(*seed, n, dim, *box_radius, model)
        }
        ScenarioSpec::SymmetricPair { x0, velocity } => {
            if velocity.abs() > model.s() * (1.0 + 1e-12) {
                return Err(Error::ContractViolation(format!(
                    "pair history speed {} exceeds the certified bound s = {}",
                    velocity.abs(),
                    model.s()
                )));
            }
            let s0 = model.history_span(2.0 * x0.abs());
            let path = if s0 > 0.0 {
                Trajectory::from_samples(model.s(), &[(-s0, [x0 - velocity * s0]), (0.0, [*x0])])?
            } else {
                Trajectory::new(model.s(), 0.0, &[*x0])?
            };
            symmetric_pair_datum(&path, model)
        }
        ScenarioSpec::File { .. } => unreachable!("file scenarios are loaded directly"),
    }
}

fn check_shape(cfg: &ModelSection, datum: &InitialDatum) -> Result<()> {
    if let Some(n) = cfg.n {
        if n != datum.n() {
            return Err(Error::DimensionMismatch { expected: n, got: datum.n() });
        }
    }
    if let Some(d) = cfg.dim {
        if d != datum.dim() {
            return Err(Error::DimensionMismatch { expected: d, got: datum.dim() });
        }
    }
    Ok(())
}

/// Certify the kernel, build the datum and resolve the step size.
pub fn prepare(mut config: RunConfig) -> Result<Prepared> {
    config.check()?;
    let psi = InfluenceFunction::from_spec(&config.psi)?;
    let c = config.model.c;
    let (model, datum) = match &config.scenario {
        ScenarioSpec::File { path } => {
            let f = fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            let (header, datum) = read_datum(BufReader::new(f))?;
            if (header.c - c).abs() > 1e-12 * c {
                return Err(Error::InvalidParameter(format!(
                    "datum file was generated for c = {} but the config has c = {c}",
                    header.c
                )));
            }
            // The recorded range reproduces the generating run's speed bound.
            let r_max = match config.psi.r_max.or(header.psi.r_max) {
                Some(r) => r,
                None => 2.0 * (datum.radius()? + diameter(&datum.positions())),
            };
            (Model::new(c, psi, r_max.max(1e-12))?, datum)
        }
        spec => match config.psi.r_max {
            Some(r_max) => {
                let model = Model::new(c, psi, r_max)?;
                let datum = build_datum(spec, &config.model, &model)?;
                (model, datum)
            }
            None => {
                let hint = match spec {
                    ScenarioSpec::Constant { positions } | ScenarioSpec::Linear { positions, .. } => {
                        2.0 * (radius(positions) + diameter(positions))
                    }
                    ScenarioSpec::Random { box_radius, .. } => 6.0 * box_radius,
                    ScenarioSpec::SymmetricPair { x0, .. } => 6.0 * x0.abs(),
                    ScenarioSpec::File { .. } => unreachable!(),
                };
                auto_certify(&psi, c, hint, |m| build_datum(spec, &config.model, m))?
            }
        },
    };
    check_shape(&config.model, &datum)?;
    let state = datum.clone().into_state(model.clone())?;
    let dt = config.integrator.dt.unwrap_or_else(|| default_dt(&state));
    config.integrator.dt = Some(dt);
    config.psi.r_max = Some(model.r_max());
    let mut options = IntegrateOptions::new(config.integrator.scheme, dt, config.integrator.t_end);
    options.picard = PicardOptions { tol: config.integrator.picard_tol, max_iter: config.integrator.picard_max_iter };
    Ok(Prepared { config, model, datum, options })
}
