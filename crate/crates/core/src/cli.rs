//! `chnl` command-line front end.
//!
//! Exit codes: 0 success, 1 numerical abort or failed check, 2 usage or
//! configuration error.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use sha2::{Digest, Sha256};

use crate::config::{parse_config, RunConfig};
use crate::diagnostics::{identity_suite, poincare_checks, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::grid::TorusGrid;
use crate::kernels::{field_battery, MollifierProfile, ProfileKind};
use crate::nonlocal_ops::{calibrate_limit_constant, CalibrationReport, OpKind};
use crate::physics::PotentialSpec;
use crate::snapshot;
use crate::solvers::Solver;
use crate::sweep::{run_sweep, SweepPlan, SweepResult};

pub const MANIFEST: &str = "manifest.sha256";
const DEFAULT_OUT: &str = "chnl_out";

#[derive(Debug, Parser)]
#[command(name = "chnl", about = "Nonlocal and local degenerate Cahn-Hilliard / adhesion lab on the torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    /// 1D smooth well, m = 1, Gaussian kernel, eps in {1, 0.7, 0.1}.
    SmoothWell,
    /// Flory-Huggins theta = 2, m = u(1-u), eps in {0.4, 0.2, 0.1}.
    Degenerate,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Op {
    B,
    K,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate one system from a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the resolved configuration and exit.
        #[arg(long)]
        print_config: bool,
    },
    /// Nonlocal-to-local comparison over an eps ladder.
    Sweep {
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        print_config: bool,
    },
    /// Fit the local coefficient of B_eps or K_eps on a sine mode.
    Calibrate {
        #[arg(long, value_enum)]
        op: Op,
        #[arg(long, default_value = "compact_bump")]
        profile: String,
        #[arg(long, default_value_t = 0.0)]
        alpha: f64,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.2, 0.1, 0.05, 0.025])]
        eps: Vec<f64>,
        #[arg(long, default_value_t = 8192)]
        n: usize,
        #[arg(long, default_value_t = 2.0 * std::f64::consts::PI)]
        length: f64,
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact-identity and Poincare battery.
    Check {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convert a CHNL1 snapshot to CSV.
    EmitPlotData {
        snapshot: PathBuf,
        /// Directory for the CSV and manifest; stdout otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print build metadata.
    Version,
}

/// Artifact writer that records a SHA-256 per file.
pub struct Output {
    dir: PathBuf,
    hashes: BTreeMap<String, String>,
    volatile: BTreeSet<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

impl Output {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            hashes: BTreeMap::new(),
            volatile: BTreeSet::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.dir.join(name), bytes)?;
        self.hashes.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    /// Marks an artifact whose bytes depend on wall-clock time.
    pub fn mark_volatile(&mut self, name: &str) {
        self.volatile.insert(name.to_string());
    }

    /// Writes `manifest.sha256` in `sha256sum` format.
    pub fn finish(self) -> Result<PathBuf> {
        let mut text = String::new();
        for name in &self.volatile {
            let _ = writeln!(text, "# volatile (timings): {name}");
        }
        for (name, hash) in &self.hashes {
            let _ = writeln!(text, "{hash}  {name}");
        }
        let path = self.dir.join(MANIFEST);
        fs::write(&path, text)?;
        Ok(path)
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::InvalidParameter(_)
        | Error::InvalidGrid(_)
        | Error::KernelWraps { .. }
        | Error::AlphaOutOfRange { .. }
        | Error::ThetaConstraint { .. }
        | Error::AdhesionConstraint { .. }
        | Error::StepTooLarge { .. }
        | Error::MemoryGuard(_)
        | Error::Format(_) => 2,
        _ => 1,
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var("CHNL_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 && rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            log::warn!("thread pool already initialised; CHNL_THREADS ignored");
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    configure_threads();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            match &e {
                Error::Config(list) => {
                    eprintln!("configuration rejected:");
                    for m in list {
                        eprintln!("  - {m}");
                    }
                }
                _ => eprintln!("error: {e}"),
            }
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Run {
            config,
            out,
            print_config,
        } => {
            let cfg = parse_config(&config)?;
            if print_config {
                print!("{}", cfg.to_toml_string());
                return Ok(0);
            }
            cmd_run(&cfg, out)
        }
        Command::Sweep {
            config,
            preset,
            out,
            print_config,
        } => {
            let (plan, echo) = match (config, preset) {
                (Some(path), _) => {
                    let cfg = parse_config(&path)?;
                    (cfg.sweep_plan()?, Some(cfg))
                }
                (None, Some(Preset::SmoothWell)) => (SweepPlan::smooth_well_preset()?, None),
                (None, Some(Preset::Degenerate)) => (SweepPlan::degenerate_preset()?, None),
                (None, None) => unreachable!("clap requires one of --config / --preset"),
            };
            if print_config {
                match &echo {
                    Some(cfg) => print!("{}", cfg.to_toml_string()),
                    None => println!("{plan:#?}"),
                }
                return Ok(0);
            }
            let out = out
                .or_else(|| echo.as_ref().and_then(|c| c.output_dir.clone()))
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
            cmd_sweep(&plan, echo.as_ref(), &out)
        }
        Command::Calibrate {
            op,
            profile,
            alpha,
            eps,
            n,
            length,
            dim,
            out,
        } => {
            let kind = ProfileKind::parse(&profile)
                .ok_or_else(|| Error::InvalidParameter(format!("unknown profile `{profile}`")))?;
            let profile = MollifierProfile::new(kind, dim)?;
            let grid = TorusGrid::new(dim, n, length)?;
            let op = match op {
                Op::B => OpKind::B,
                Op::K => OpKind::K,
            };
            let report = calibrate_limit_constant(op, &profile, alpha, &eps, &grid)?;
            print_calibration(&report);
            if let Some(dir) = out {
                let mut o = Output::new(&dir)?;
                o.write("calibration.csv", report.to_csv().as_bytes())?;
                o.finish()?;
            }
            Ok(0)
        }
        Command::Check { config, out } => {
            let cfg = config.as_deref().map(parse_config).transpose()?;
            cmd_check(cfg.as_ref(), &out.unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)))
        }
        Command::EmitPlotData { snapshot: path, out } => {
            let snap = snapshot::read(&path)?;
            let csv = snapshot::to_plot_csv(&snap.field);
            match out {
                Some(dir) => {
                    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("snapshot");
                    let mut o = Output::new(&dir)?;
                    o.write(&format!("{stem}.csv"), csv.as_bytes())?;
                    o.finish()?;
                }
                None => print!("{csv}"),
            }
            Ok(0)
        }
        Command::Version => {
            println!("chnl {}", env!("CARGO_PKG_VERSION"));
            println!("profile: {}", if cfg!(debug_assertions) { "debug" } else { "release" });
            println!("target: {}-{}", std::env::consts::ARCH, std::env::consts::OS);
            println!("snapshot format: {}", snapshot::MAGIC);
            Ok(0)
        }
    }
}

fn events_csv(record: &DiagnosticsRecord) -> String {
    let mut s = String::from("step,t,message\n");
    for e in &record.events {
        let _ = writeln!(s, "{},{},\"{}\"", e.step, e.t, e.message.replace('"', "'"));
    }
    s
}

fn cmd_run(cfg: &RunConfig, out: Option<PathBuf>) -> Result<i32> {
    let dir = out
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let mut o = Output::new(&dir)?;
    o.write("config.toml", cfg.to_toml_string().as_bytes())?;
    let grid = cfg.grid()?;
    let mut sc = cfg.solver_config();
    sc.dump_dir = Some(dir.clone());
    let solver = Solver::new(cfg.model()?, sc, grid)?;
    let u0 = cfg.initial_field()?;
    info!("running {} steps of {}", cfg.solver_config().steps()?, cfg.solver.system.name());

    let mut snaps = Vec::new();
    let result = solver.run(u0, |s| {
        snaps.push((format!("snap_{:08}.chnl", s.step), snapshot::encode(&s.u, s.t)));
        Ok(())
    });
    for (name, bytes) in &snaps {
        o.write(name, bytes)?;
    }
    let output = match result {
        Ok(r) => r,
        Err(e @ Error::NonFinite { .. }) => {
            o.finish()?;
            eprintln!("numerical abort: {e}");
            return Ok(1);
        }
        Err(e) => return Err(e),
    };
    let record = &output.record;
    o.write("diagnostics.csv", record.to_csv().as_bytes())?;
    o.write("events.csv", events_csv(record).as_bytes())?;
    o.write("final.chnl", &snapshot::encode(&output.state.u, output.state.t))?;
    let manifest = o.finish()?;
    println!("system: {}", cfg.solver.system.name());
    println!("steps: {}  t: {}", output.state.step, output.state.t);
    println!("relative mass drift: {:e}", record.max_relative_mass_drift());
    println!("energy increases flagged: {}", record.energy_violations(crate::solvers::ENERGY_TOL));
    println!("min u: {}  max u: {}", record.min_u(), record.max_u());
    println!("events: {}", record.events.len());
    println!("manifest: {}", manifest.display());
    Ok(0)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "NA".into())
}

fn cmd_sweep(plan: &SweepPlan, cfg: Option<&RunConfig>, dir: &Path) -> Result<i32> {
    let mut o = Output::new(dir)?;
    if let Some(cfg) = cfg {
        o.write("config.toml", cfg.to_toml_string().as_bytes())?;
    }
    let result = run_sweep(plan)?;
    write_sweep(&mut o, plan, &result)?;
    let manifest = o.finish()?;
    print!("{}", result.to_csv());
    for (j, t) in result.times.iter().enumerate() {
        let (p, _) = result.order_l2[j].unwrap_or((f64::NAN, f64::NAN));
        println!("t = {t}: fitted L2 order {p:.3}, ||u_local|| = {}", result.local_norm(j));
    }
    println!("u0 sha256: {}", result.u0_sha256);
    println!("manifest: {}", manifest.display());
    if result.aborted.is_empty() {
        Ok(0)
    } else {
        for (eps, why) in &result.aborted {
            eprintln!("eps = {eps} aborted: {why}");
        }
        Ok(1)
    }
}

/// Writes every sweep artifact; `sweep_result.csv` is marked volatile because
/// it carries wall-clock runtimes.
pub fn write_sweep(o: &mut Output, plan: &SweepPlan, result: &SweepResult) -> Result<()> {
    o.write("sweep_result.csv", result.to_csv().as_bytes())?;
    o.mark_volatile("sweep_result.csv");

    let mut orders = String::from("t,order_l2,const_l2,order_h1,const_h1\n");
    for (j, t) in result.times.iter().enumerate() {
        let (a, b) = result.order_l2[j].map_or((None, None), |(p, c)| (Some(p), Some(c)));
        let (c, d) = result.order_h1[j].map_or((None, None), |(p, c)| (Some(p), Some(c)));
        let _ = writeln!(orders, "{t},{},{},{},{}", fmt_opt(a), fmt_opt(b), fmt_opt(c), fmt_opt(d));
    }
    o.write("sweep_orders.csv", orders.as_bytes())?;

    let mut flags = String::from("eps,t,width_nonlocal,width_local,smoothing_nonlocal,smoothing_local\n");
    for f in &result.flags {
        let _ = writeln!(
            flags,
            "{},{},{},{},{},{}",
            f.eps,
            f.t,
            fmt_opt(f.width_nonlocal),
            fmt_opt(f.width_local),
            fmt_opt(f.smoothing_nonlocal),
            fmt_opt(f.smoothing_local)
        );
    }
    o.write("sweep_flags.csv", flags.as_bytes())?;

    let g = plan.grid;
    let meta = format!(
        "u0_sha256 = \"{}\"\nseed = {}\ndt = {}\ndim = {}\nn = {}\nlength = {}\nprofile = \"{}\"\nalpha = {}\n",
        result.u0_sha256,
        result.seed,
        result.dt,
        g.dim(),
        g.n(),
        g.length(),
        plan.profile.kind().name(),
        plan.alpha
    );
    o.write("sweep_meta.toml", meta.as_bytes())?;

    for (t, u) in &result.local.states {
        o.write(&format!("local_t{t}.chnl"), &snapshot::encode(u, *t))?;
    }
    for (eps, traj) in result.eps.iter().zip(&result.nonlocal) {
        for (t, u) in &traj.states {
            o.write(&format!("eps{eps}_t{t}.chnl"), &snapshot::encode(u, *t))?;
        }
        o.write(&format!("eps{eps}_diagnostics.csv"), traj.record.to_csv().as_bytes())?;
    }
    o.write("local_diagnostics.csv", result.local.record.to_csv().as_bytes())?;
    Ok(())
}

fn print_calibration(r: &CalibrationReport) {
    print!("{}", r.to_csv());
    let fits: Vec<String> = r.c_per_eps.iter().map(|c| c.to_string()).collect();
    println!("per-eps fit: {}", fits.join(" "));
    println!("reference: {}", r.reference);
    println!("c_eff: {}  ratio: {}", r.c_eff, r.ratio);
    println!("order: {}  constant: {}", r.order, r.order_constant);
    if let Some(holds) = r.linear_bound_holds() {
        println!("linear bound e <= C eps: {}", if holds { "holds" } else { "violated" });
    }
}

/// Runs the identity battery on 1D `n = 64` and 2D `n = 32` grids and the
/// Poincare report in 1D; returns 1 on any identity failure.
fn cmd_check(cfg: Option<&RunConfig>, dir: &Path) -> Result<i32> {
    let length = cfg.map(|c| c.grid.length).unwrap_or(2.0 * std::f64::consts::PI);
    let kind = cfg.map(|c| c.kernel.profile).unwrap_or(ProfileKind::CompactBump);
    let eps = cfg.and_then(|c| c.kernel.eps).unwrap_or(0.8);
    let alpha = cfg.map(|c| c.kernel.alpha).unwrap_or(0.0);
    let seed = cfg.map(|c| c.seed).unwrap_or(0);

    let mut report = String::from("name,dim,n,alpha,defect,tolerance,status\n");
    let mut failed = 0;
    for (dim, n) in [(1, 64), (2, 32)] {
        let grid = TorusGrid::new(dim, n, length)?;
        let profile = MollifierProfile::new(kind, dim)?;
        for c in identity_suite(&grid, &profile, eps, alpha, seed)? {
            let status = if c.pass { "PASS" } else { "FAIL" };
            failed += usize::from(!c.pass);
            let _ = writeln!(report, "{},{},{},{},{:e},{:e},{status}", c.name, c.dim, c.n, c.alpha, c.defect, c.tolerance);
        }
    }

    let grid = TorusGrid::new(1, 256, length)?;
    let profile = MollifierProfile::new(kind, 1)?;
    let battery = field_battery(&grid, 8, seed);
    let eps_list: Vec<f64> = (0..3).map(|k| eps / 2f64.powi(k)).collect();
    let theta = cfg
        .and_then(|c| c.potential)
        .and_then(|p: PotentialSpec| p.theta())
        .unwrap_or(2.0);
    let gamma = 1.0 / (8.0 * theta);
    let poincare = poincare_checks(&battery, &eps_list, alpha, &profile)?;

    let mut o = Output::new(dir)?;
    o.write("check_report.csv", report.as_bytes())?;
    o.write("poincare.csv", poincare.to_csv(gamma).as_bytes())?;
    o.finish()?;
    print!("{report}");
    println!(
        "poincare sups: C1 {:.6} C2 {:.6} C3(gamma = {gamma}) {:.6}",
        poincare.c1_sup(),
        poincare.c2_sup(),
        poincare.c3_sup(gamma)
    );
    Ok(if failed == 0 { 0 } else { 1 })
}
