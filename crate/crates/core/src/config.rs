//! Run configuration: strict TOML parsing, pre-flight checks and echo.
//!
//! Every violation is collected before returning, and any key not listed
//! here is rejected by its dotted name.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::grid::{LaplacianScheme, TorusField, TorusGrid};
use crate::kernels::{build_kernel, check_adhesion_constraint, MollifierProfile, ProfileKind};
use crate::nonlocal_ops::{limit_coefficients, AdhesionKernel};
use crate::physics::{MobilitySpec, PotentialSpec, DEFAULT_DELTA_CUT};
use crate::solvers::{FaceAverage, InitialCondition, Model, SolverConfig, SystemKind};
use crate::sweep::{SweepPhysics, SweepPlan};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridConfig {
    pub dim: usize,
    pub n: usize,
    pub length: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    pub profile: ProfileKind,
    /// Required by nonlocal and adhesion systems.
    pub eps: Option<f64>,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSection {
    pub system: SystemKind,
    pub dt: f64,
    pub t_final: f64,
    pub stabilization: Option<f64>,
    pub face_average: FaceAverage,
    pub output_every: u64,
    pub allow_unstable: bool,
    pub laplacian: LaplacianScheme,
    pub c_b: Option<f64>,
    pub c_k: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialSpec {
    Random { low: f64, high: f64 },
    Cosine { mean: f64, amplitude: f64, mode: u32 },
    /// `CHNL1` snapshot on the configured grid.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSection {
    pub eps: Vec<f64>,
    pub times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub grid: GridConfig,
    pub kernel: KernelConfig,
    /// Present for Cahn-Hilliard systems.
    pub potential: Option<PotentialSpec>,
    pub mobility: MobilitySpec,
    pub solver: SolverSection,
    /// Present for adhesion systems.
    pub adhesion_a: Option<f64>,
    pub initial: InitialSpec,
    pub sweep: Option<SweepSection>,
    pub output_dir: Option<PathBuf>,
}

/// Collects violations while walking the document.
struct Walker {
    errors: Vec<String>,
}

impl Walker {
    fn section<'a>(&mut self, root: &'a Table, name: &str, known: &[&str]) -> Option<&'a Table> {
        match root.get(name) {
            None => None,
            Some(Value::Table(t)) => {
                for key in t.keys() {
                    if !known.contains(&key.as_str()) {
                        self.errors.push(format!("unknown key `{name}.{key}`"));
                    }
                }
                Some(t)
            }
            Some(_) => {
                self.errors.push(format!("`{name}` must be a table"));
                None
            }
        }
    }

    fn float(&mut self, t: Option<&Table>, section: &str, key: &str) -> Option<f64> {
        match t?.get(key)? {
            Value::Float(v) => Some(*v),
            Value::Integer(v) => Some(*v as f64),
            _ => {
                self.errors.push(format!("`{section}.{key}` must be a number"));
                None
            }
        }
    }

    fn required_float(&mut self, t: Option<&Table>, section: &str, key: &str, why: &str) -> Option<f64> {
        let v = self.float(t, section, key);
        if v.is_none() && t.and_then(|t| t.get(key)).is_none() {
            self.errors.push(format!("missing required key `{section}.{key}` ({why})"));
        }
        v
    }

    fn int(&mut self, t: Option<&Table>, section: &str, key: &str) -> Option<i64> {
        match t?.get(key)? {
            Value::Integer(v) => Some(*v),
            _ => {
                self.errors.push(format!("`{section}.{key}` must be an integer"));
                None
            }
        }
    }

    fn string<'a>(&mut self, t: Option<&'a Table>, section: &str, key: &str) -> Option<&'a str> {
        match t?.get(key)? {
            Value::String(s) => Some(s.as_str()),
            _ => {
                self.errors.push(format!("`{section}.{key}` must be a string"));
                None
            }
        }
    }

    fn boolean(&mut self, t: Option<&Table>, section: &str, key: &str) -> Option<bool> {
        match t?.get(key)? {
            Value::Boolean(b) => Some(*b),
            _ => {
                self.errors.push(format!("`{section}.{key}` must be a boolean"));
                None
            }
        }
    }

    fn float_list(&mut self, t: Option<&Table>, section: &str, key: &str) -> Option<Vec<f64>> {
        match t?.get(key)? {
            Value::Array(a) => {
                let vals: Option<Vec<f64>> = a
                    .iter()
                    .map(|v| match v {
                        Value::Float(x) => Some(*x),
                        Value::Integer(x) => Some(*x as f64),
                        _ => None,
                    })
                    .collect();
                if vals.is_none() {
                    self.errors.push(format!("`{section}.{key}` must be an array of numbers"));
                }
                vals
            }
            _ => {
                self.errors.push(format!("`{section}.{key}` must be an array of numbers"));
                None
            }
        }
    }

    fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        if !ok {
            self.errors.push(msg());
        }
    }
}

const TOP_LEVEL: &[&str] = &[
    "seed", "grid", "kernel", "potential", "mobility", "solver", "adhesion", "initial", "sweep", "output",
];

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    RunConfig::from_toml_str(&text, path.parent().unwrap_or(Path::new(".")))
}

impl RunConfig {
    /// Parses and validates; relative `initial.path` values resolve against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let root: Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(vec![format!("TOML syntax: {}", e.message())]))?;
        let mut w = Walker { errors: Vec::new() };
        let known: BTreeSet<&str> = TOP_LEVEL.iter().copied().collect();
        for (key, value) in &root {
            if !known.contains(key.as_str()) {
                match value {
                    Value::Table(t) => {
                        for sub in t.keys() {
                            w.errors.push(format!("unknown key `{key}.{sub}`"));
                        }
                    }
                    _ => w.errors.push(format!("unknown key `{key}`")),
                }
            }
        }

        let seed = match root.get("seed") {
            None => 0,
            Some(Value::Integer(s)) if *s >= 0 => *s as u64,
            Some(_) => {
                w.errors.push("`seed` must be a nonnegative integer".into());
                0
            }
        };

        let g = w.section(&root, "grid", &["dim", "n", "length"]);
        w.check(g.is_some(), || "missing required table `grid`".into());
        let dim = w.int(g, "grid", "dim").unwrap_or(1);
        let n = w.int(g, "grid", "n");
        w.check(g.is_none() || n.is_some(), || "missing required key `grid.n`".into());
        let length = w.float(g, "grid", "length").unwrap_or(2.0 * std::f64::consts::PI);
        w.check(dim == 1 || dim == 2, || format!("`grid.dim` must be 1 or 2, got {dim}"));
        let n = n.unwrap_or(0);
        w.check(
            g.is_none() || (n >= 4 && n % 2 == 0),
            || format!("`grid.n` must be an even integer >= 4, got {n}"),
        );
        w.check(length.is_finite() && length > 0.0, || format!("`grid.length` must be positive, got {length}"));

        let s = w.section(
            &root,
            "solver",
            &[
                "system", "dt", "t_final", "stabilization", "face_average", "output_every", "allow_unstable", "laplacian",
                "c_b", "c_k",
            ],
        );
        w.check(s.is_some(), || "missing required table `solver`".into());
        let system = match w.string(s, "solver", "system") {
            Some(name) => SystemKind::parse(name).or_else(|| {
                w.errors.push(format!(
                    "`solver.system` must be one of ch_nonlocal, ch_local, adhesion_nonlocal, adhesion_local; got `{name}`"
                ));
                None
            }),
            None => {
                if s.is_some() {
                    w.errors.push("missing required key `solver.system`".into());
                }
                None
            }
        };
        let dt = w.required_float(s, "solver", "dt", "time step");
        let t_final = w.required_float(s, "solver", "t_final", "final time");
        let stabilization = w.float(s, "solver", "stabilization");
        let face_average = match w.string(s, "solver", "face_average") {
            None => FaceAverage::Arithmetic,
            Some(name) => FaceAverage::parse(name).unwrap_or_else(|| {
                w.errors.push(format!("`solver.face_average` must be arithmetic or harmonic, got `{name}`"));
                FaceAverage::Arithmetic
            }),
        };
        let output_every = w.int(s, "solver", "output_every").unwrap_or(0);
        w.check(output_every >= 0, || "`solver.output_every` must be nonnegative".into());
        let allow_unstable = w.boolean(s, "solver", "allow_unstable").unwrap_or(false);
        let laplacian = match w.string(s, "solver", "laplacian") {
            None | Some("stencil") => LaplacianScheme::Stencil,
            Some("spectral") => LaplacianScheme::Spectral,
            Some(other) => {
                w.errors.push(format!("`solver.laplacian` must be stencil or spectral, got `{other}`"));
                LaplacianScheme::Stencil
            }
        };
        let c_b = w.float(s, "solver", "c_b");
        let c_k = w.float(s, "solver", "c_k");

        let is_ch = system.map(|s| !s.is_adhesion()).unwrap_or(true);
        let is_adhesion = system.map(|s| s.is_adhesion()).unwrap_or(false);

        let k = w.section(&root, "kernel", &["profile", "eps", "alpha"]);
        let profile = match w.string(k, "kernel", "profile") {
            None => ProfileKind::CompactBump,
            Some(name) => ProfileKind::parse(name).unwrap_or_else(|| {
                w.errors.push(format!("`kernel.profile` must be compact_bump or truncated_gaussian, got `{name}`"));
                ProfileKind::CompactBump
            }),
        };
        let sweep_section = w.section(&root, "sweep", &["eps", "times"]);
        let needs_eps = system.map(|s| s.is_nonlocal() || s.is_adhesion()).unwrap_or(false) && sweep_section.is_none();
        let eps = if needs_eps {
            w.required_float(k, "kernel", "eps", "kernel scale")
        } else {
            w.float(k, "kernel", "eps")
        };
        let alpha = if is_ch {
            w.required_float(k, "kernel", "alpha", "kernel singularity")
        } else {
            w.float(k, "kernel", "alpha")
        }
        .unwrap_or(0.0);
        if is_adhesion {
            w.check(alpha == 0.0, || format!("adhesion systems need `kernel.alpha` = 0, got {alpha}"));
        }
        if let Some(e) = eps {
            w.check(e.is_finite() && e > 0.0, || format!("`kernel.eps` must be positive, got {e}"));
        }

        let p = w.section(&root, "potential", &["kind", "theta", "delta_cut"]);
        let potential = if is_ch {
            match w.string(p, "potential", "kind") {
                Some("flory_huggins") => {
                    let theta = w.required_float(p, "potential", "theta", "interaction strength");
                    let cut = w.float(p, "potential", "delta_cut").unwrap_or(DEFAULT_DELTA_CUT);
                    theta.and_then(|th| match PotentialSpec::flory_huggins(th, cut) {
                        Ok(v) => Some(v),
                        Err(e) => {
                            w.errors.push(format!("potential: {e}"));
                            None
                        }
                    })
                }
                Some("smooth_well") => {
                    w.check(p.is_some_and(|t| !t.contains_key("theta")), || {
                        "`potential.theta` is not used by smooth_well".into()
                    });
                    Some(PotentialSpec::SmoothDoubleWell)
                }
                Some(other) => {
                    w.errors.push(format!("`potential.kind` must be flory_huggins or smooth_well, got `{other}`"));
                    None
                }
                None => {
                    w.errors.push("missing required key `potential.kind`".into());
                    None
                }
            }
        } else {
            w.check(p.is_none(), || "`potential` is not used by adhesion systems".into());
            None
        };

        let m = w.section(&root, "mobility", &["kind", "k", "l", "value"]);
        let mobility = match w.string(m, "mobility", "kind") {
            None | Some("degenerate") => {
                let kk = w.int(m, "mobility", "k").unwrap_or(1);
                let ll = w.int(m, "mobility", "l").unwrap_or(1);
                match MobilitySpec::degenerate(kk.max(0) as u32, ll.max(0) as u32) {
                    Ok(v) => v,
                    Err(e) => {
                        w.errors.push(format!("mobility: {e}"));
                        MobilitySpec::Degenerate { k: 1, l: 1 }
                    }
                }
            }
            Some("constant") => {
                let v = w.float(m, "mobility", "value").unwrap_or(1.0);
                MobilitySpec::constant(v).unwrap_or_else(|e| {
                    w.errors.push(format!("mobility: {e}"));
                    MobilitySpec::Constant(1.0)
                })
            }
            Some(other) => {
                w.errors.push(format!("`mobility.kind` must be degenerate or constant, got `{other}`"));
                MobilitySpec::Degenerate { k: 1, l: 1 }
            }
        };

        let a_sec = w.section(&root, "adhesion", &["a"]);
        let adhesion_a = if is_adhesion {
            w.required_float(a_sec, "adhesion", "a", "adhesion strength")
        } else {
            w.check(a_sec.is_none(), || "`adhesion` is only used by adhesion systems".into());
            None
        };

        let i = w.section(&root, "initial", &["kind", "low", "high", "mean", "amplitude", "mode", "path"]);
        let initial = match w.string(i, "initial", "kind") {
            None | Some("random") => InitialSpec::Random {
                low: w.float(i, "initial", "low").unwrap_or(0.4),
                high: w.float(i, "initial", "high").unwrap_or(0.6),
            },
            Some("cosine") => InitialSpec::Cosine {
                mean: w.float(i, "initial", "mean").unwrap_or(0.5),
                amplitude: w.float(i, "initial", "amplitude").unwrap_or(0.2),
                mode: w.int(i, "initial", "mode").unwrap_or(1).max(0) as u32,
            },
            Some("file") => match w.string(i, "initial", "path") {
                Some(path) => InitialSpec::File(base_dir.join(path)),
                None => {
                    w.errors.push("missing required key `initial.path` for kind = file".into());
                    InitialSpec::File(PathBuf::new())
                }
            },
            Some(other) => {
                w.errors.push(format!("`initial.kind` must be random, cosine or file, got `{other}`"));
                InitialSpec::Random { low: 0.4, high: 0.6 }
            }
        };
        if let InitialSpec::Random { low, high } = initial {
            w.check(low < high, || format!("`initial.low` must be below `initial.high`, got [{low}, {high})"));
        }

        let sweep = sweep_section.map(|sw| SweepSection {
            eps: w.float_list(Some(sw), "sweep", "eps").unwrap_or_default(),
            times: w.float_list(Some(sw), "sweep", "times").unwrap_or_default(),
        });
        if let Some(sw) = &sweep {
            w.check(sw.eps.len() >= 3, || "`sweep.eps` needs at least 3 values".into());
            w.check(!sw.times.is_empty(), || "`sweep.times` needs at least one value".into());
            if let Some(sys) = system {
                w.check(sys.is_nonlocal(), || "sweeps need a nonlocal `solver.system`".into());
            }
        }

        let o = w.section(&root, "output", &["dir"]);
        let output_dir = w.string(o, "output", "dir").map(PathBuf::from);

        if !w.errors.is_empty() {
            return Err(Error::Config(w.errors));
        }
        let cfg = RunConfig {
            seed,
            grid: GridConfig {
                dim: dim as usize,
                n: n as usize,
                length,
            },
            kernel: KernelConfig { profile, eps, alpha },
            potential,
            mobility,
            solver: SolverSection {
                system: system.expect("checked"),
                dt: dt.expect("checked"),
                t_final: t_final.expect("checked"),
                stabilization,
                face_average,
                output_every: output_every as u64,
                allow_unstable,
                laplacian,
                c_b,
                c_k,
            },
            adhesion_a,
            initial,
            sweep,
            output_dir,
        };
        cfg.preflight()?;
        Ok(cfg)
    }

    /// Numerical pre-flight: grid, step count, kernel resolution and the
    /// theta / adhesion constraints, all reported together.
    fn preflight(&self) -> Result<()> {
        let mut errors = Vec::new();
        if let Err(e) = self.grid() {
            return Err(Error::Config(vec![e.to_string()]));
        }
        if let Err(e) = self.solver_config().steps() {
            errors.push(e.to_string());
        }
        match &self.sweep {
            Some(sw) => {
                for &eps in &sw.eps {
                    if let Err(e) = self.model_at(eps) {
                        errors.push(format!("eps = {eps}: {e}"));
                    }
                }
                if errors.is_empty() {
                    if let Err(e) = self.sweep_plan().and_then(|p| p.validate()) {
                        errors.push(e.to_string());
                    }
                }
            }
            None => {
                if let Err(e) = self.model() {
                    errors.push(e.to_string());
                }
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors))
        }
    }

    pub fn grid(&self) -> Result<TorusGrid> {
        TorusGrid::new(self.grid.dim, self.grid.n, self.grid.length)
    }

    pub fn profile(&self) -> Result<MollifierProfile> {
        MollifierProfile::new(self.kernel.profile, self.grid.dim)
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            dt: self.solver.dt,
            t_final: self.solver.t_final,
            stabilization: self.solver.stabilization,
            face_average: self.solver.face_average,
            output_every: self.solver.output_every,
            allow_unstable: self.solver.allow_unstable,
            dump_dir: None,
        }
    }

    fn coefficients(&self) -> Result<(f64, f64)> {
        let (c_b, c_k) = limit_coefficients(&self.profile()?, self.kernel.alpha)?;
        Ok((self.solver.c_b.unwrap_or(c_b), self.solver.c_k.unwrap_or(c_k)))
    }

    /// Model of the configured system at `kernel.eps`.
    pub fn model(&self) -> Result<Model> {
        let eps = self.kernel.eps.or_else(|| self.sweep.as_ref().map(|s| s.eps[0]));
        match eps {
            Some(e) => self.model_at(e),
            None => self.model_at(f64::NAN),
        }
    }

    /// Model of the configured system with the kernel scale set to `eps`.
    pub fn model_at(&self, eps: f64) -> Result<Model> {
        let grid = self.grid()?;
        let profile = self.profile()?;
        let (c_b, c_k) = self.coefficients()?;
        let missing = || Error::InvalidParameter("configuration lacks a potential".into());
        match self.solver.system {
            SystemKind::ChNonlocal => Model::ch_nonlocal(
                build_kernel(&profile, eps, self.kernel.alpha, &grid)?,
                self.potential.ok_or_else(missing)?,
                self.mobility,
            ),
            SystemKind::ChLocal => Model::ch_local(c_b, self.solver.laplacian, self.potential.ok_or_else(missing)?, self.mobility),
            SystemKind::AdhesionNonlocal | SystemKind::AdhesionLocal => {
                let a = self.adhesion_a.unwrap_or(0.0);
                let check = check_adhesion_constraint(a, eps, &profile, &grid)?;
                if self.solver.system == SystemKind::AdhesionNonlocal {
                    Model::adhesion_nonlocal(AdhesionKernel::new(&profile, eps, &grid)?, a, c_k, &check)
                } else {
                    Model::adhesion_local(c_k, a, grid, &check)
                }
            }
        }
    }

    pub fn initial_condition(&self) -> Result<InitialCondition> {
        Ok(match &self.initial {
            InitialSpec::Random { low, high } => InitialCondition::Random { low: *low, high: *high },
            InitialSpec::Cosine { mean, amplitude, mode } => InitialCondition::Cosine {
                mean: *mean,
                amplitude: *amplitude,
                mode: *mode,
            },
            InitialSpec::File(path) => InitialCondition::Field(crate::snapshot::read(path)?.field),
        })
    }

    pub fn initial_field(&self) -> Result<TorusField> {
        self.initial_condition()?.build(self.grid()?, self.seed)
    }

    pub fn sweep_plan(&self) -> Result<SweepPlan> {
        let sw = self
            .sweep
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("configuration has no [sweep] table".into()))?;
        let physics = match self.solver.system {
            SystemKind::ChNonlocal | SystemKind::ChLocal => SweepPhysics::CahnHilliard {
                potential: self
                    .potential
                    .ok_or_else(|| Error::InvalidParameter("configuration lacks a potential".into()))?,
                mobility: self.mobility,
            },
            _ => SweepPhysics::Adhesion {
                a: self.adhesion_a.unwrap_or(0.0),
            },
        };
        Ok(SweepPlan {
            grid: self.grid()?,
            profile: self.profile()?,
            alpha: self.kernel.alpha,
            physics,
            solver: self.solver_config(),
            eps: sw.eps.clone(),
            times: sw.times.clone(),
            initial: self.initial_condition()?,
            seed: self.seed,
            local_scheme: self.solver.laplacian,
            c_b: self.solver.c_b,
            c_k: self.solver.c_k,
        })
    }

    /// Fully resolved configuration (defaults filled) as TOML.
    pub fn to_toml_string(&self) -> String {
        let mut root = Table::new();
        root.insert("seed".into(), Value::Integer(self.seed as i64));

        let mut g = Table::new();
        g.insert("dim".into(), Value::Integer(self.grid.dim as i64));
        g.insert("n".into(), Value::Integer(self.grid.n as i64));
        g.insert("length".into(), Value::Float(self.grid.length));
        root.insert("grid".into(), Value::Table(g));

        let mut k = Table::new();
        k.insert("profile".into(), Value::String(self.kernel.profile.name().into()));
        if let Some(e) = self.kernel.eps {
            k.insert("eps".into(), Value::Float(e));
        }
        k.insert("alpha".into(), Value::Float(self.kernel.alpha));
        root.insert("kernel".into(), Value::Table(k));

        if let Some(p) = &self.potential {
            let mut t = Table::new();
            match p {
                PotentialSpec::FloryHuggins { theta, delta_cut } => {
                    t.insert("kind".into(), Value::String("flory_huggins".into()));
                    t.insert("theta".into(), Value::Float(*theta));
                    t.insert("delta_cut".into(), Value::Float(*delta_cut));
                }
                PotentialSpec::SmoothDoubleWell => {
                    t.insert("kind".into(), Value::String("smooth_well".into()));
                }
            }
            root.insert("potential".into(), Value::Table(t));
        }

        let mut m = Table::new();
        match self.mobility {
            MobilitySpec::Degenerate { k, l } => {
                m.insert("kind".into(), Value::String("degenerate".into()));
                m.insert("k".into(), Value::Integer(k as i64));
                m.insert("l".into(), Value::Integer(l as i64));
            }
            MobilitySpec::Constant(v) => {
                m.insert("kind".into(), Value::String("constant".into()));
                m.insert("value".into(), Value::Float(v));
            }
        }
        root.insert("mobility".into(), Value::Table(m));

        let s = &self.solver;
        let mut t = Table::new();
        t.insert("system".into(), Value::String(s.system.name().into()));
        t.insert("dt".into(), Value::Float(s.dt));
        t.insert("t_final".into(), Value::Float(s.t_final));
        if let Some(v) = s.stabilization {
            t.insert("stabilization".into(), Value::Float(v));
        }
        t.insert("face_average".into(), Value::String(s.face_average.name().into()));
        t.insert("output_every".into(), Value::Integer(s.output_every as i64));
        t.insert("allow_unstable".into(), Value::Boolean(s.allow_unstable));
        let lap = match s.laplacian {
            LaplacianScheme::Stencil => "stencil",
            LaplacianScheme::Spectral => "spectral",
        };
        t.insert("laplacian".into(), Value::String(lap.into()));
        if let Some(v) = s.c_b {
            t.insert("c_b".into(), Value::Float(v));
        }
        if let Some(v) = s.c_k {
            t.insert("c_k".into(), Value::Float(v));
        }
        root.insert("solver".into(), Value::Table(t));

        if let Some(a) = self.adhesion_a {
            let mut t = Table::new();
            t.insert("a".into(), Value::Float(a));
            root.insert("adhesion".into(), Value::Table(t));
        }

        let mut i = Table::new();
        match &self.initial {
            InitialSpec::Random { low, high } => {
                i.insert("kind".into(), Value::String("random".into()));
                i.insert("low".into(), Value::Float(*low));
                i.insert("high".into(), Value::Float(*high));
            }
            InitialSpec::Cosine { mean, amplitude, mode } => {
                i.insert("kind".into(), Value::String("cosine".into()));
                i.insert("mean".into(), Value::Float(*mean));
                i.insert("amplitude".into(), Value::Float(*amplitude));
                i.insert("mode".into(), Value::Integer(*mode as i64));
            }
            InitialSpec::File(p) => {
                i.insert("kind".into(), Value::String("file".into()));
                i.insert("path".into(), Value::String(p.display().to_string()));
            }
        }
        root.insert("initial".into(), Value::Table(i));

        if let Some(sw) = &self.sweep {
            let mut t = Table::new();
            t.insert("eps".into(), Value::Array(sw.eps.iter().map(|&v| Value::Float(v)).collect()));
            t.insert("times".into(), Value::Array(sw.times.iter().map(|&v| Value::Float(v)).collect()));
            root.insert("sweep".into(), Value::Table(t));
        }
        if let Some(dir) = &self.output_dir {
            let mut t = Table::new();
            t.insert("dir".into(), Value::String(dir.display().to_string()));
            root.insert("output".into(), Value::Table(t));
        }
        root.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[grid]
n = 64

[kernel]
eps = 0.2
alpha = 0.0

[potential]
kind = "flory_huggins"
theta = 2.0

[solver]
system = "ch_nonlocal"
dt = 1e-3
t_final = 0.01
"#;

    fn parse(text: &str) -> Result<RunConfig> {
        RunConfig::from_toml_str(text, Path::new("."))
    }

    fn messages(text: &str) -> Vec<String> {
        match parse(text) {
            Err(Error::Config(m)) => m,
            other => panic!("expected config errors, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_fills_defaults_and_round_trips() {
        let cfg = parse(MINIMAL).unwrap();
        assert_eq!(cfg.grid.dim, 1);
        assert_eq!(cfg.mobility, MobilitySpec::Degenerate { k: 1, l: 1 });
        assert_eq!(cfg.initial, InitialSpec::Random { low: 0.4, high: 0.6 });
        let echoed = cfg.to_toml_string();
        let again = parse(&echoed).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.to_toml_string(), echoed);
    }

    #[test]
    fn unknown_key_is_named() {
        let text = format!("{MINIMAL}\n[potental]\ntheta = 2.0\n");
        let m = messages(&text);
        assert!(m.iter().any(|s| s.contains("`potental.theta`")), "{m:?}");
        let text = MINIMAL.replace("theta = 2.0", "theta = 2.0\nthetta = 1.0");
        assert!(messages(&text).iter().any(|s| s.contains("`potential.thetta`")));
    }

    #[test]
    fn all_violations_reported() {
        let text = MINIMAL.replace("dt = 1e-3\n", "").replace("alpha = 0.0\n", "").replace("n = 64", "n = 63");
        let m = messages(&text);
        assert!(m.iter().any(|s| s.contains("solver.dt")), "{m:?}");
        assert!(m.iter().any(|s| s.contains("kernel.alpha")), "{m:?}");
        assert!(m.iter().any(|s| s.contains("grid.n")), "{m:?}");
    }

    #[test]
    fn theta_preflight_cites_quantities() {
        let text = MINIMAL.replace("eps = 0.2", "eps = 2.0");
        let m = messages(&text);
        let joined = m.join("\n");
        assert!(joined.contains("2 theta = 4") && joined.contains("= 0.25"), "{joined}");
    }

    #[test]
    fn adhesion_preflight_rejects_large_a() {
        let text = r#"
[grid]
n = 128
[kernel]
eps = 0.2
[solver]
system = "adhesion_nonlocal"
dt = 1e-3
t_final = 0.01
[adhesion]
a = 10.0
"#;
        let m = messages(text);
        assert!(m.iter().any(|s| s.contains("adhesion constraint")), "{m:?}");
        assert!(parse(&text.replace("a = 10.0", "a = 0.5")).is_ok());
    }

    #[test]
    fn physics_keys_have_no_silent_default() {
        let text = MINIMAL.replace("theta = 2.0\n", "");
        assert!(messages(&text).iter().any(|s| s.contains("potential.theta")));
        let text = MINIMAL.replace("eps = 0.2\n", "");
        assert!(messages(&text).iter().any(|s| s.contains("kernel.eps")));
    }
}
