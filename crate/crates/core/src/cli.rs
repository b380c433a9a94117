//! Command-line front end.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid configuration or
//! rejected kernel, 3 audit failure.

use std::ffi::OsString;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::analysis::{consensus_time, decay_certificate, diameter, Auditor, DecayRange, DelayLog};
use crate::config::{prepare, Overrides, Prepared, RunConfig};
use crate::error::{Error, Result};
use crate::integrator::{contraction_window, integrate, IntegrateError, Observer, Scheme, SimTrace};
use crate::scenarios::write_datum;
use crate::vecops::dist;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_AUDIT: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "hkdelay", version, about = "Consensus dynamics with finite-speed information propagation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate a scenario, audit it, and write trajectory, metrics and audit CSVs
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Run several schemes on the same datum and report gaps and convergence orders
    Compare {
        config: PathBuf,
        /// Comma-separated schemes, e.g. euler,heun,picard
        #[arg(long, value_delimiter = ',', required = true)]
        schemes: Vec<Scheme>,
        /// Number of step sizes dt, dt/2, ... used for order estimates
        #[arg(long, default_value_t = 3)]
        levels: usize,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Check the config and certify the kernel without integrating
    Validate {
        config: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Write the initial datum described by the config to a datum file
    GenScenario {
        config: PathBuf,
        /// Output file (default: <out-dir>/datum.csv)
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
}

#[derive(Args, Debug, Default)]
struct OverrideArgs {
    #[arg(long)]
    dt: Option<f64>,
    /// Horizon
    #[arg(long = "T")]
    t_end: Option<f64>,
    #[arg(long)]
    scheme: Option<Scheme>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl From<&OverrideArgs> for Overrides {
    fn from(a: &OverrideArgs) -> Self {
        Overrides { dt: a.dt, t_end: a.t_end, scheme: a.scheme, seed: a.seed, out_dir: a.out_dir.clone() }
    }
}

/// Parse arguments and run; returns the process exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = if e.use_stderr() { write!(err, "{e}") } else { write!(out, "{e}") };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Run { config, overrides } => load(config, overrides).and_then(|p| cmd_run(p, out)),
        Command::Compare { config, schemes, levels, overrides } => {
            load(config, overrides).and_then(|p| cmd_compare(p, schemes, *levels, out))
        }
        Command::Validate { config, overrides } => load(config, overrides).and_then(|p| cmd_validate(&p, out)),
        Command::GenScenario { config, output, overrides } => {
            load(config, overrides).and_then(|p| cmd_gen(&p, output.as_deref(), out))
        }
    };
    match result {
        Ok(code) => code,
        Err(Failure { code, message }) => {
            let _ = writeln!(err, "error: {message}");
            code
        }
    }
}

struct Failure {
    code: i32,
    message: String,
}

fn invalid(e: Error) -> Failure {
    let hint = match e {
        Error::SpeedOfLight { .. } => " (agents must stay subluminal: sup psi(r) r < c)",
        _ => "",
    };
    Failure { code: EXIT_INVALID, message: format!("invalid configuration: {e}{hint}") }
}

fn runtime(e: Error) -> Failure {
    Failure { code: EXIT_FAILURE, message: e.to_string() }
}

fn load(path: &Path, o: &OverrideArgs) -> std::result::Result<Prepared, Failure> {
    let mut cfg = RunConfig::load(path).map_err(|e| match e {
        Error::Io(_) => runtime(e),
        other => invalid(other),
    })?;
    cfg.apply(&o.into()).map_err(invalid)?;
    prepare(cfg).map_err(invalid)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<fs::File>> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    let f = fs::File::create(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(BufWriter::new(f))
}

fn header(p: &Prepared) -> String {
    format!("config sha256={}", p.config_hash())
}

fn print_setup(p: &Prepared, out: &mut dyn Write) -> Result<()> {
    let m = &p.model;
    let cert = m.certification();
    let st = p.state()?;
    writeln!(out, "{}", header(p))?;
    writeln!(
        out,
        "model      N = {}, dim = {}, c = {}, psi = {}",
        st.n(),
        st.dim(),
        m.c(),
        m.psi().to_spec(None)
    )?;
    writeln!(
        out,
        "speed      s = {:.9} (certified on [0, {:.6}], attained near r = {:.6}), psi_sup = {:.6}",
        m.s(),
        m.r_max(),
        cert.argmax,
        m.psi_sup()
    )?;
    writeln!(
        out,
        "datum      R0 = {:.9}, d0 = {:.9}, S0 = {:.9}, max delay <= {:.6}",
        st.initial_radius(),
        st.initial_diameter(),
        st.history_span(),
        st.max_delay()
    )?;
    writeln!(out, "integrator {}, dt = {}, T = {}", p.options.scheme, p.options.dt, p.options.t_end)?;
    let cert_r = decay_certificate(m.psi(), m.s(), m.c(), st.n(), st.initial_radius(), DecayRange::Radius)?;
    let cert_2r = decay_certificate(m.psi(), m.s(), m.c(), st.n(), st.initial_radius(), DecayRange::TwiceRadius)?;
    let chosen: DecayRange = p.config.output.decay_range.into();
    writeln!(out, "decay      [0, R0]:  {cert_r}{}", if chosen == DecayRange::Radius { "  (used)" } else { "" })?;
    writeln!(out, "decay      [0, 2R0]: {cert_2r}{}", if chosen == DecayRange::TwiceRadius { "  (used)" } else { "" })?;
    if cert_r.condition_met != cert_2r.condition_met {
        writeln!(
            out,
            "note       the decay condition depends on the kernel range: pairwise distances can reach 2 R0"
        )?;
    }
    if let Ok(t_star) =
        contraction_window(st.initial_radius(), st.history_span(), m.s(), m.c(), m.psi().lipschitz_const(), m.psi_sup())
    {
        writeln!(out, "picard     contraction window T* = {t_star:.6e}")?;
    }
    Ok(())
}

fn cmd_validate(p: &Prepared, out: &mut dyn Write) -> std::result::Result<i32, Failure> {
    print_setup(p, out).map_err(runtime)?;
    writeln!(out, "valid").map_err(|e| runtime(e.into()))?;
    Ok(EXIT_OK)
}

fn cmd_gen(p: &Prepared, output: Option<&Path>, out: &mut dyn Write) -> std::result::Result<i32, Failure> {
    let path = output.map(Path::to_path_buf).unwrap_or_else(|| p.config.output.dir.join("datum.csv"));
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| runtime(Error::InvalidParameter("empty output path".into())))?;
    let mut w = create(dir, &name.to_string_lossy()).map_err(runtime)?;
    write_datum(&mut w, &p.datum, &p.model, &header(p)).map_err(runtime)?;
    w.flush().map_err(|e| runtime(e.into()))?;
    writeln!(out, "wrote {}", path.display()).map_err(|e| runtime(e.into()))?;
    Ok(EXIT_OK)
}

fn cmd_run(p: Prepared, out: &mut dyn Write) -> std::result::Result<i32, Failure> {
    let io = |e: std::io::Error| runtime(e.into());
    print_setup(&p, out).map_err(runtime)?;
    let mut state = p.state().map_err(invalid)?;
    let d0 = state.initial_diameter();
    let mut auditor = Auditor::new(&state);
    let mut delays = p.config.output.delays.as_ref().map(|_| DelayLog::default());
    let result = {
        let mut observers: Vec<&mut dyn Observer> = vec![&mut auditor];
        if let Some(d) = delays.as_mut() {
            observers.push(d);
        }
        integrate(&mut state, &p.options, &mut observers)
    };
    let (trace, failure) = match result {
        Ok(t) => (t, None),
        Err(IntegrateError { t, error, trace }) => (*trace, Some(format!("integration stopped at t = {t}: {error}"))),
    };

    let o = &p.config.output;
    let h = header(&p);
    let write_all = || -> Result<()> {
        let mut w = create(&o.dir, &o.trajectory)?;
        trace.write_positions_csv(&mut w, &h)?;
        w.flush()?;
        let mut w = create(&o.dir, &o.metrics)?;
        trace.write_metrics_csv(&mut w, &h)?;
        w.flush()?;
        let mut w = create(&o.dir, &o.audit)?;
        auditor.write_csv(&mut w, &h)?;
        w.flush()?;
        if let (Some(name), Some(log)) = (&o.delays, &delays) {
            let mut w = create(&o.dir, name)?;
            log.write_csv(&mut w, &h)?;
            w.flush()?;
        }
        Ok(())
    };
    write_all().map_err(runtime)?;

    let last = trace.metrics.last().copied();
    let eps = o.eps_rel * d0;
    let t_cons = consensus_time(&trace, eps);
    writeln!(out, "steps      {}", trace.len().saturating_sub(1)).map_err(io)?;
    if let Some(m) = last {
        writeln!(out, "final      t = {}, d_x = {:.6e}, R_x = {:.6e}", trace.times.last().unwrap(), m.diameter, m.radius)
            .map_err(io)?;
    }
    match t_cons {
        Some(t) => writeln!(out, "consensus  d_x <= {eps:.3e} first at t = {t}"),
        None => writeln!(out, "consensus  d_x <= {eps:.3e} not reached"),
    }
    .map_err(io)?;
    if let Some(stats) = &trace.picard {
        let max_it = stats.iterations.iter().max().copied().unwrap_or(0);
        writeln!(
            out,
            "picard     {} windows of {} steps, max iterations {}, worst contraction {:.3}",
            stats.iterations.len(),
            stats.steps_per_window,
            max_it,
            stats.worst_contraction()
        )
        .map_err(io)?;
    }
    write!(out, "{}", auditor.report()).map_err(io)?;
    writeln!(out, "audit      {} failures", auditor.failures()).map_err(io)?;
    writeln!(out, "wrote      {}", o.dir.display()).map_err(io)?;

    if let Some(msg) = failure {
        return Err(Failure { code: EXIT_FAILURE, message: msg });
    }
    if let Err(e) = auditor.verdict() {
        writeln!(out, "{e}").map_err(io)?;
        return Ok(EXIT_AUDIT);
    }
    Ok(EXIT_OK)
}

fn endpoint_gap(a: &SimTrace, b: &SimTrace) -> f64 {
    match (a.final_positions(), b.final_positions()) {
        (Some(x), Some(y)) => x.iter().zip(y).map(|(p, q)| dist(p, q)).fold(0.0, f64::max),
        _ => f64::NAN,
    }
}

fn cmd_compare(p: Prepared, schemes: &[Scheme], levels: usize, out: &mut dyn Write) -> std::result::Result<i32, Failure> {
    let io = |e: std::io::Error| runtime(e.into());
    if schemes.len() < 2 {
        return Err(invalid(Error::InvalidParameter("compare needs at least two schemes".into())));
    }
    let levels = levels.max(1);
    print_setup(&p, out).map_err(runtime)?;
    let state = p.state().map_err(invalid)?;
    let runs: Vec<Vec<Result<SimTrace>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = schemes
            .iter()
            .map(|&scheme| {
                let state = &state;
                let base = p.options;
                scope.spawn(move || {
                    (0..levels)
                        .map(|k| {
                            let mut o = base;
                            o.scheme = scheme;
                            o.dt = base.dt / (1u64 << k) as f64;
                            let mut st = state.clone();
                            integrate(&mut st, &o, &mut []).map_err(|e| e.error)
                        })
                        .collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("compare worker panicked")).collect()
    });

    let mut ok = true;
    for (scheme, r) in schemes.iter().zip(&runs) {
        if let Some(Err(e)) = r.iter().find(|x| x.is_err()) {
            writeln!(out, "{scheme}: failed: {e}").map_err(io)?;
            ok = false;
        }
    }
    if !ok {
        return Err(runtime(Error::InvalidParameter("one or more member runs failed".into())));
    }
    let runs: Vec<Vec<SimTrace>> = runs.into_iter().map(|r| r.into_iter().map(|x| x.unwrap()).collect()).collect();

    writeln!(out, "sup-norm gaps at dt = {}", p.options.dt).map_err(io)?;
    for a in 0..schemes.len() {
        for b in a + 1..schemes.len() {
            let gap = runs[a][0].sup_gap(&runs[b][0]).map_err(runtime)?;
            writeln!(out, "  {} vs {}: {gap:.6e}", schemes[a], schemes[b]).map_err(io)?;
        }
    }
    if levels >= 2 {
        writeln!(out, "endpoint differences under dt halving").map_err(io)?;
        for (scheme, r) in schemes.iter().zip(&runs) {
            let diffs: Vec<f64> = r.windows(2).map(|w| endpoint_gap(&w[0], &w[1])).collect();
            let mut line = format!("  {scheme}:");
            for d in &diffs {
                line.push_str(&format!(" {d:.3e}"));
            }
            for w in diffs.windows(2) {
                let ratio = w[0] / w[1];
                line.push_str(&format!("  ratio {ratio:.3} (order {:.2})", ratio.log2()));
            }
            writeln!(out, "{line}").map_err(io)?;
        }
    }
    let d_final: Vec<String> = runs
        .iter()
        .zip(schemes)
        .map(|(r, s)| format!("{s} {:.6e}", r[0].final_positions().map_or(f64::NAN, diameter)))
        .collect();
    writeln!(out, "final d_x  {}", d_final.join(", ")).map_err(io)?;
    Ok(EXIT_OK)
}
