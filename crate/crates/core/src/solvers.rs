//! First-order IMEX time stepping of the four systems in conservative flux form.
//!
//! Every step solves
//! `(1 + dt sigma(k)) (û^{n+1} - û^n) = dt r̂hs^n`,
//! where `rhs = div_h(flux(u^n))` is assembled on cell faces and `sigma` is a
//! diagonal stabilising symbol built from the stencil `-Δ_h`. The zero mode of
//! the increment is dropped, so the grid sum of `u` never changes.

use std::path::PathBuf;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

use crate::diagnostics::{
    dissipation, energy_eps, energy_local, entropy_total, grad_norm_sq, mass, DiagnosticsRecord, DiagnosticsRow,
};
use crate::error::{Error, Result};
use crate::grid::{divergence_flux, face_gradient, LaplacianScheme, Spectral, TorusField, TorusGrid};
use crate::kernels::{AdhesionCheck, KernelSpec};
use crate::nonlocal_ops::{apply_b, apply_k, AdhesionKernel};
use crate::physics::{chemical_potential, m_times_fpp, EntropyDensity, Interaction, MobilitySpec, PotentialSpec};

/// Soft bound on `u` outside `[0, 1]` for Flory-Huggins runs.
pub const BOUND_TOL: f64 = 1e-6;
/// Relative energy increase tolerated per step before a step is flagged.
pub const ENERGY_TOL: f64 = 1e-10;
const HARMONIC_REG: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemKind {
    ChNonlocal,
    ChLocal,
    AdhesionNonlocal,
    AdhesionLocal,
}

impl SystemKind {
    pub fn name(&self) -> &'static str {
        match self {
            SystemKind::ChNonlocal => "ch_nonlocal",
            SystemKind::ChLocal => "ch_local",
            SystemKind::AdhesionNonlocal => "adhesion_nonlocal",
            SystemKind::AdhesionLocal => "adhesion_local",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ch_nonlocal" => Some(SystemKind::ChNonlocal),
            "ch_local" => Some(SystemKind::ChLocal),
            "adhesion_nonlocal" => Some(SystemKind::AdhesionNonlocal),
            "adhesion_local" => Some(SystemKind::AdhesionLocal),
            _ => None,
        }
    }

    pub fn is_nonlocal(&self) -> bool {
        matches!(self, SystemKind::ChNonlocal | SystemKind::AdhesionNonlocal)
    }

    pub fn is_adhesion(&self) -> bool {
        matches!(self, SystemKind::AdhesionNonlocal | SystemKind::AdhesionLocal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FaceAverage {
    #[default]
    Arithmetic,
    HarmonicRegularized,
}

impl FaceAverage {
    pub fn name(&self) -> &'static str {
        match self {
            FaceAverage::Arithmetic => "arithmetic",
            FaceAverage::HarmonicRegularized => "harmonic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "arithmetic" => Some(FaceAverage::Arithmetic),
            "harmonic" => Some(FaceAverage::HarmonicRegularized),
            _ => None,
        }
    }

    fn apply(&self, a: f64, b: f64) -> f64 {
        match self {
            FaceAverage::Arithmetic => 0.5 * (a + b),
            FaceAverage::HarmonicRegularized => 2.0 * a * b / (a + b + HARMONIC_REG),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_final: f64,
    /// Overrides the automatic stabilisation constant.
    pub stabilization: Option<f64>,
    pub face_average: FaceAverage,
    /// Observer cadence in steps; 0 calls the observer only at start and end.
    pub output_every: u64,
    /// Proceed (with a warning) when `dt` exceeds the stability bound.
    pub allow_unstable: bool,
    /// Where to write the last finite state if a step turns non-finite.
    pub dump_dir: Option<PathBuf>,
}

impl SolverConfig {
    pub fn new(dt: f64, t_final: f64) -> Self {
        Self {
            dt,
            t_final,
            stabilization: None,
            face_average: FaceAverage::Arithmetic,
            output_every: 0,
            allow_unstable: false,
            dump_dir: None,
        }
    }

    /// Number of steps, requiring `t_final` to be a whole number of steps.
    pub fn steps(&self) -> Result<u64> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_final.is_finite() && self.t_final >= 0.0) {
            return Err(Error::InvalidParameter(format!("t_final must be nonnegative, got {}", self.t_final)));
        }
        let n = (self.t_final / self.dt).round();
        if (n * self.dt - self.t_final).abs() > 1e-9 * self.t_final.max(self.dt) {
            return Err(Error::InvalidParameter(format!(
                "t_final = {} is not a whole number of steps of dt = {}",
                self.t_final, self.dt
            )));
        }
        Ok(n as u64)
    }
}

/// Everything that defines the right-hand side of one system.
#[derive(Debug, Clone)]
pub enum Model {
    ChNonlocal {
        kernel: KernelSpec,
        potential: PotentialSpec,
        mobility: MobilitySpec,
    },
    ChLocal {
        c_b: f64,
        scheme: LaplacianScheme,
        potential: PotentialSpec,
        mobility: MobilitySpec,
    },
    AdhesionNonlocal {
        kernel: AdhesionKernel,
        a: f64,
        /// Leading coefficient of `K_eps ≈ c_k ∇`, used only for stabilisation.
        c_k: f64,
    },
    AdhesionLocal {
        c_k: f64,
        a: f64,
        grid: TorusGrid,
    },
}

impl Model {
    pub fn ch_nonlocal(kernel: KernelSpec, potential: PotentialSpec, mobility: MobilitySpec) -> Result<Self> {
        if let Some(theta) = potential.theta() {
            if !crate::kernels::check_theta_constraint(theta, &kernel) {
                return Err(Error::ThetaConstraint {
                    two_theta: 2.0 * theta,
                    conv_one: kernel.conv_one(),
                });
            }
        }
        Ok(Model::ChNonlocal {
            kernel,
            potential,
            mobility,
        })
    }

    pub fn ch_local(c_b: f64, scheme: LaplacianScheme, potential: PotentialSpec, mobility: MobilitySpec) -> Result<Self> {
        if !(c_b.is_finite() && c_b > 0.0) {
            return Err(Error::InvalidParameter(format!("c_B must be positive, got {c_b}")));
        }
        Ok(Model::ChLocal {
            c_b,
            scheme,
            potential,
            mobility,
        })
    }

    fn require_admissible(a: f64, check: &AdhesionCheck) -> Result<()> {
        if check.a != a || !check.ok {
            return Err(Error::AdhesionConstraint {
                a,
                c_est: check.c_est,
                value: a.abs() * check.c_est.sqrt(),
            });
        }
        Ok(())
    }

    pub fn adhesion_nonlocal(kernel: AdhesionKernel, a: f64, c_k: f64, check: &AdhesionCheck) -> Result<Self> {
        Self::require_admissible(a, check)?;
        Ok(Model::AdhesionNonlocal { kernel, a, c_k })
    }

    pub fn adhesion_local(c_k: f64, a: f64, grid: TorusGrid, check: &AdhesionCheck) -> Result<Self> {
        Self::require_admissible(a, check)?;
        Ok(Model::AdhesionLocal { c_k, a, grid })
    }

    pub fn system(&self) -> SystemKind {
        match self {
            Model::ChNonlocal { .. } => SystemKind::ChNonlocal,
            Model::ChLocal { .. } => SystemKind::ChLocal,
            Model::AdhesionNonlocal { .. } => SystemKind::AdhesionNonlocal,
            Model::AdhesionLocal { .. } => SystemKind::AdhesionLocal,
        }
    }

    fn grid(&self) -> Option<&TorusGrid> {
        match self {
            Model::ChNonlocal { kernel, .. } => Some(kernel.grid()),
            Model::AdhesionNonlocal { kernel, .. } => Some(kernel.grid()),
            Model::AdhesionLocal { grid, .. } => Some(grid),
            Model::ChLocal { .. } => None,
        }
    }

    fn mobility(&self) -> MobilitySpec {
        match self {
            Model::ChNonlocal { mobility, .. } | Model::ChLocal { mobility, .. } => *mobility,
            _ => MobilitySpec::Degenerate { k: 1, l: 1 },
        }
    }

    /// Tracks `u` against `[0, 1]` when the physics requires it.
    fn monitors_bounds(&self) -> bool {
        match self {
            Model::ChNonlocal { potential, mobility, .. } | Model::ChLocal { potential, mobility, .. } => {
                potential.theta().is_some() && mobility.is_degenerate()
            }
            _ => false,
        }
    }
}

/// Stabilising symbol `sigma = s4 λ λ_scheme + s2 λ` with `λ` the stencil `-Δ_h` eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stabilization {
    pub s2: f64,
    pub s4: f64,
}

/// Mutable state of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub u: TorusField,
    pub t: f64,
    pub step: u64,
    /// Chemical potential (CH systems) at the current state, if computed.
    pub mu: Option<TorusField>,
    pub stabilization: Stabilization,
}

impl SolverState {
    pub fn new(u: TorusField) -> Self {
        Self {
            u,
            t: 0.0,
            step: 0,
            mu: None,
            stabilization: Stabilization { s2: 0.0, s4: 0.0 },
        }
    }
}

/// Initial data.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    /// Independent uniform samples in `[low, high)` from the run seed.
    Random { low: f64, high: f64 },
    /// `mean + amplitude cos(2 pi mode x_1 / L)`.
    Cosine { mean: f64, amplitude: f64, mode: u32 },
    Field(TorusField),
}

impl InitialCondition {
    pub fn build(&self, grid: TorusGrid, seed: u64) -> Result<TorusField> {
        match self {
            InitialCondition::Random { low, high } => {
                if !(low < high) {
                    return Err(Error::InvalidParameter(format!("random initial data needs low < high, got [{low}, {high})")));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                TorusField::new(grid, (0..grid.len()).map(|_| rng.gen_range(*low..*high)).collect())
            }
            InitialCondition::Cosine { mean, amplitude, mode } => {
                let k = 2.0 * std::f64::consts::PI * *mode as f64 / grid.length();
                Ok(TorusField::from_fn(grid, |x| mean + amplitude * (k * x[0]).cos()))
            }
            InitialCondition::Field(f) => {
                if f.grid() != &grid {
                    return Err(Error::GridMismatch("initial field grid differs from the configured grid".into()));
                }
                Ok(f.clone())
            }
        }
    }
}

/// Output of [`Solver::run`].
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub state: SolverState,
    pub record: DiagnosticsRecord,
}

/// Time integrator for one model.
#[derive(Debug, Clone)]
pub struct Solver {
    model: Model,
    cfg: SolverConfig,
    grid: TorusGrid,
    spectral: Spectral,
    /// Stencil `-Δ_h` eigenvalue per bin.
    lambda: Vec<f64>,
    /// Eigenvalue of the Laplacian used inside `mu` (local CH only).
    lambda_mu: Vec<f64>,
    entropy: Option<EntropyDensity>,
}

impl Solver {
    pub fn new(model: Model, cfg: SolverConfig, grid: TorusGrid) -> Result<Self> {
        if let Some(g) = model.grid() {
            crate::grid::check_grid(g, &grid)?;
        }
        cfg.steps()?;
        if let Some(s) = cfg.stabilization {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::InvalidParameter(format!("stabilization must be nonnegative, got {s}")));
            }
        }
        let lambda: Vec<f64> = (0..grid.len()).map(|i| grid.stencil_symbol(i)).collect();
        let lambda_mu = match &model {
            Model::ChLocal { scheme, .. } => (0..grid.len()).map(|i| grid.neg_laplacian_symbol(i, *scheme)).collect(),
            _ => lambda.clone(),
        };
        let entropy = match &model {
            Model::ChNonlocal { potential, mobility, .. } | Model::ChLocal { potential, mobility, .. } => {
                let cut = match potential {
                    PotentialSpec::FloryHuggins { delta_cut, .. } => *delta_cut,
                    PotentialSpec::SmoothDoubleWell => crate::physics::DEFAULT_DELTA_CUT,
                };
                Some(EntropyDensity::new(mobility, cut)?)
            }
            _ => None,
        };
        let solver = Self {
            model,
            cfg,
            grid,
            spectral: Spectral::new(grid),
            lambda,
            lambda_mu,
            entropy,
        };
        if let Some(s) = solver.cfg.stabilization {
            let bound = solver.stability_bound(Stabilization { s2: s, s4: s }, solver.stiffness_bound());
            if solver.cfg.dt > bound {
                if solver.cfg.allow_unstable {
                    warn!("dt = {} exceeds the stability bound {bound}; proceeding", solver.cfg.dt);
                } else {
                    return Err(Error::StepTooLarge {
                        dt: solver.cfg.dt,
                        bound,
                    });
                }
            }
        }
        Ok(solver)
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    /// Worst-case frozen-coefficient stiffness `(a2, a4)` of the explicit part
    /// over `u ∈ [0, 1]`, in the same units as [`Stabilization`].
    pub fn stiffness_bound(&self) -> Stabilization {
        match &self.model {
            Model::ChNonlocal {
                kernel,
                potential,
                mobility,
            } => {
                let samples = (0..=1000).map(|i| i as f64 / 1000.0);
                let s2 = samples
                    .map(|s| mobility_times_curvature(s, kernel.conv_one(), potential, mobility))
                    .fold(0.0, f64::max);
                Stabilization { s2, s4: 0.0 }
            }
            Model::ChLocal {
                c_b,
                potential,
                mobility,
                ..
            } => {
                let s2 = (0..=1000)
                    .map(|i| {
                        let s = i as f64 / 1000.0;
                        mobility_times_curvature(s, 0.0, potential, mobility)
                    })
                    .fold(0.0, f64::max);
                Stabilization {
                    s2,
                    s4: mobility.max_value() * c_b,
                }
            }
            Model::AdhesionNonlocal { a, c_k, .. } | Model::AdhesionLocal { a, c_k, .. } => Stabilization {
                s2: 1.0 + 0.25 * (a * c_k).abs(),
                s4: 0.0,
            },
        }
    }

    /// Von Neumann bound of the frozen-coefficient scheme: the amplification
    /// `1 - dt a(λ) / (1 + dt sigma(λ))` stays in `[-1, 1]` iff
    /// `dt (a(λ) - 2 sigma(λ)) <= 2` for every resolved `λ`.
    pub fn stability_bound(&self, stab: Stabilization, stiff: Stabilization) -> f64 {
        let mut bound = f64::INFINITY;
        for (l, lm) in self.lambda.iter().zip(&self.lambda_mu) {
            let a = stiff.s2 * l + stiff.s4 * l * lm;
            let sigma = stab.s2 * l + stab.s4 * l * lm;
            let excess = a - 2.0 * sigma;
            if excess > 0.0 {
                bound = bound.min(2.0 / excess);
            }
        }
        bound
    }

    /// Stabilisation for the current state.
    fn stabilization_for(&self, u: &TorusField) -> Stabilization {
        if let Some(s) = self.cfg.stabilization {
            return match self.model {
                Model::ChLocal { .. } => Stabilization { s2: s, s4: s },
                _ => Stabilization { s2: s, s4: 0.0 },
            };
        }
        match &self.model {
            Model::ChNonlocal {
                kernel,
                potential,
                mobility,
            } => Stabilization {
                s2: u
                    .values()
                    .iter()
                    .map(|&s| mobility_times_curvature(s, kernel.conv_one(), potential, mobility))
                    .fold(0.0, f64::max),
                s4: 0.0,
            },
            Model::ChLocal {
                c_b,
                potential,
                mobility,
                ..
            } => Stabilization {
                s2: u
                    .values()
                    .iter()
                    .map(|&s| mobility_times_curvature(s, 0.0, potential, mobility))
                    .fold(0.0, f64::max),
                s4: mobility.max_value() * c_b,
            },
            Model::AdhesionNonlocal { a, c_k, .. } | Model::AdhesionLocal { a, c_k, .. } => Stabilization {
                s2: u.max().max(0.0) + 0.25 * (a * c_k).abs(),
                s4: 0.0,
            },
        }
    }

    fn face_mobility(&self, u: &TorusField, axis: usize, m: impl Fn(f64) -> f64) -> Vec<f64> {
        let v = u.values();
        (0..self.grid.len())
            .map(|i| self.cfg.face_average.apply(m(v[i]), m(v[self.grid.shifted(i, axis, 1)])))
            .collect()
    }

    /// Chemical potential for CH systems.
    pub fn chemical_potential(&self, u: &TorusField) -> Result<Option<TorusField>> {
        match &self.model {
            Model::ChNonlocal { kernel, potential, .. } => {
                Ok(Some(chemical_potential(u, Interaction::Nonlocal(kernel), potential)?))
            }
            Model::ChLocal {
                c_b, scheme, potential, ..
            } => Ok(Some(chemical_potential(
                u,
                Interaction::Local {
                    c_b: *c_b,
                    scheme: *scheme,
                },
                potential,
            )?)),
            _ => Ok(None),
        }
    }

    /// `div_h(flux(u))` and the chemical potential it was built from.
    pub fn rhs(&self, u: &TorusField) -> Result<(TorusField, Option<TorusField>)> {
        let g = self.grid;
        match &self.model {
            Model::ChNonlocal { mobility, .. } | Model::ChLocal { mobility, .. } => {
                let mu = self.chemical_potential(u)?.expect("CH system has a chemical potential");
                let flux: Vec<TorusField> = face_gradient(&mu)
                    .into_iter()
                    .enumerate()
                    .map(|(axis, gm)| {
                        let mf = self.face_mobility(u, axis, |s| mobility.value(s));
                        let vals = gm.values().iter().zip(&mf).map(|(d, m)| d * m).collect();
                        TorusField::new(g, vals)
                    })
                    .collect::<Result<_>>()?;
                Ok((divergence_flux(&flux)?, Some(mu)))
            }
            Model::AdhesionNonlocal { kernel, a, .. } => {
                let k = apply_k(u, kernel)?;
                let flux = self.adhesion_flux(u, *a, |axis, i| {
                    let kv = k[axis].values();
                    0.5 * (kv[i] + kv[g.shifted(i, axis, 1)])
                })?;
                Ok((divergence_flux(&flux)?, None))
            }
            Model::AdhesionLocal { c_k, a, .. } => {
                let grad = face_gradient(u);
                let flux = self.adhesion_flux(u, *a, |axis, i| c_k * grad[axis].values()[i])?;
                Ok((divergence_flux(&flux)?, None))
            }
        }
    }

    /// Face flux `u ∇u - a u(1-u) V` with `V` supplied at faces.
    fn adhesion_flux(&self, u: &TorusField, a: f64, velocity: impl Fn(usize, usize) -> f64) -> Result<Vec<TorusField>> {
        let g = self.grid;
        face_gradient(u)
            .into_iter()
            .enumerate()
            .map(|(axis, gu)| {
                let uf = self.face_mobility(u, axis, |s| s);
                let mf = self.face_mobility(u, axis, |s| s * (1.0 - s));
                let vals = (0..g.len())
                    .map(|i| uf[i] * gu.values()[i] - a * mf[i] * velocity(axis, i))
                    .collect();
                TorusField::new(g, vals)
            })
            .collect()
    }

    /// Advances the state by one step given a precomputed right-hand side.
    fn advance(&self, state: &mut SolverState, rhs: &TorusField) -> Result<()> {
        let dt = self.cfg.dt;
        let stab = self.stabilization_for(&state.u);
        let mut data: Vec<Complex64> = self.spectral.forward_complex(rhs.values());
        data[0] = Complex64::new(0.0, 0.0);
        for (i, c) in data.iter_mut().enumerate().skip(1) {
            let sigma = stab.s2 * self.lambda[i] + stab.s4 * self.lambda[i] * self.lambda_mu[i];
            *c *= dt / (1.0 + dt * sigma);
        }
        let inc = self.spectral.inverse_real(data);
        let next: Vec<f64> = state.u.values().iter().zip(&inc).map(|(u, d)| u + d).collect();
        if next.iter().any(|v| !v.is_finite()) {
            let dump = self.dump(state);
            return Err(Error::NonFinite {
                step: state.step + 1,
                t: state.t + dt,
                dump,
            });
        }
        state.u = TorusField::new(self.grid, next)?;
        state.step += 1;
        state.t = state.step as f64 * dt;
        state.mu = None;
        state.stabilization = stab;
        Ok(())
    }

    fn dump(&self, state: &SolverState) -> Option<PathBuf> {
        let dir = self.cfg.dump_dir.as_ref()?;
        let path = dir.join(format!("abort_step{}.chnl", state.step));
        match crate::snapshot::write(&path, &state.u, state.t) {
            Ok(()) => Some(path),
            Err(e) => {
                warn!("could not dump state to {}: {e}", path.display());
                None
            }
        }
    }

    /// One step of a CH system.
    pub fn step_ch(&self, state: &mut SolverState) -> Result<()> {
        if self.model.system().is_adhesion() {
            return Err(Error::InvalidParameter("step_ch called on an adhesion model".into()));
        }
        self.step(state)
    }

    /// One step of an adhesion system.
    pub fn step_adhesion(&self, state: &mut SolverState) -> Result<()> {
        if !self.model.system().is_adhesion() {
            return Err(Error::InvalidParameter("step_adhesion called on a CH model".into()));
        }
        self.step(state)
    }

    /// Turns a non-finite intermediate (overflowed rhs or potential) into a
    /// dumped abort of the step in progress.
    fn guard<T>(&self, state: &SolverState, r: Result<T>) -> Result<T> {
        match r {
            Err(Error::InvalidField(msg)) if msg.starts_with("non-finite") => Err(Error::NonFinite {
                step: state.step + 1,
                t: state.t + self.cfg.dt,
                dump: self.dump(state),
            }),
            other => other,
        }
    }

    pub fn step(&self, state: &mut SolverState) -> Result<()> {
        let (rhs, _) = self.guard(state, self.rhs(&state.u))?;
        self.advance(state, &rhs)
    }

    /// Energy functional of the system: `E_eps` (nonlocal CH), the local
    /// Ginzburg-Landau energy (local CH), or `1/2 ‖u‖^2` (adhesion).
    pub fn energy(&self, u: &TorusField) -> Result<f64> {
        match &self.model {
            Model::ChNonlocal { kernel, potential, .. } => energy_eps(u, kernel, potential),
            Model::ChLocal { c_b, potential, .. } => Ok(energy_local(u, *c_b, potential)),
            _ => Ok(0.5 * u.norm_l2().powi(2)),
        }
    }

    fn diagnostics_row(&self, state: &SolverState, mu: Option<&TorusField>) -> Result<DiagnosticsRow> {
        let u = &state.u;
        let (energy, seminorm) = match &self.model {
            Model::ChNonlocal { kernel, potential, .. } => {
                let half = 0.5 * apply_b(u, kernel)?.inner(u)?;
                (crate::diagnostics::potential_integral(u, potential) + half, 4.0 * half)
            }
            _ => (self.energy(u)?, grad_norm_sq(u)),
        };
        let diss = match mu {
            Some(mu) => dissipation(u, mu, &self.model.mobility())?,
            None => {
                // porous-medium part: ∫ u |∇u|^2
                let g = self.grid;
                let v = u.values();
                let mut total = 0.0;
                for (axis, gu) in face_gradient(u).iter().enumerate() {
                    for (i, d) in gu.values().iter().enumerate() {
                        total += 0.5 * (v[i] + v[g.shifted(i, axis, 1)]) * d * d;
                    }
                }
                total * g.cell_volume()
            }
        };
        Ok(DiagnosticsRow {
            step: state.step,
            t: state.t,
            mass: mass(u),
            energy,
            entropy: self.entropy.as_ref().map(|e| entropy_total(u, e)).unwrap_or(0.0),
            min_u: u.min(),
            max_u: u.max(),
            bbm_seminorm: seminorm,
            energy_increment: 0.0,
            dissipation: diss,
        })
    }

    fn check_events(&self, state: &SolverState, record: &mut DiagnosticsRecord) {
        if self.model.monitors_bounds() {
            let (lo, hi) = (state.u.min(), state.u.max());
            if lo < -BOUND_TOL || hi > 1.0 + BOUND_TOL {
                record.flag(state.step, state.t, format!("u left [0, 1]: min {lo}, max {hi}"));
            }
        }
        if self.model.system() == SystemKind::ChNonlocal {
            if let [.., prev, last] = record.rows.as_slice() {
                if last.energy_increment > ENERGY_TOL * (1.0 + prev.energy.abs()) {
                    let inc = last.energy_increment;
                    record.flag(state.step, state.t, format!("energy increased by {inc:e}"));
                }
            }
        }
    }

    /// Integrates from `u0` to `t_final`, recording diagnostics every step and
    /// calling `observer` at the configured cadence (always at start and end).
    pub fn run(&self, u0: TorusField, mut observer: impl FnMut(&SolverState) -> Result<()>) -> Result<RunOutput> {
        crate::grid::check_grid(&self.grid, u0.grid())?;
        let steps = self.cfg.steps()?;
        let mut state = SolverState::new(u0);
        let mut record = DiagnosticsRecord::new();
        loop {
            let (rhs, mu) = if state.step < steps {
                let (r, m) = self.guard(&state, self.rhs(&state.u))?;
                (Some(r), m)
            } else {
                (None, self.chemical_potential(&state.u)?)
            };
            let row = self.guard(&state, self.diagnostics_row(&state, mu.as_ref()))?;
            record.push(row)?;
            state.mu = mu;
            self.check_events(&state, &mut record);
            let cadence = self.cfg.output_every;
            if state.step == 0 || state.step == steps || (cadence > 0 && state.step.is_multiple_of(cadence)) {
                observer(&state)?;
            }
            match rhs {
                Some(r) => self.advance(&mut state, &r)?,
                None => break,
            }
        }
        Ok(RunOutput { state, record })
    }
}

/// `m(s) (c + F''(s))`, with the cancellation-free form of `m F''` when `m = s(1-s)`.
fn mobility_times_curvature(s: f64, c: f64, potential: &PotentialSpec, mobility: &MobilitySpec) -> f64 {
    let m = mobility.value(s);
    let m_fpp = match (potential, mobility) {
        (PotentialSpec::FloryHuggins { theta, .. }, MobilitySpec::Degenerate { k: 1, l: 1 }) => m_times_fpp(s, *theta),
        _ if m == 0.0 => 0.0,
        _ => m * potential.dprime(s),
    };
    m * c + m_fpp
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{build_kernel, MollifierProfile};
    use crate::physics::DEFAULT_DELTA_CUT;
    use std::f64::consts::PI;

    fn grid() -> TorusGrid {
        TorusGrid::new(1, 128, 2.0 * PI).unwrap()
    }

    fn nonlocal_fh(g: TorusGrid) -> Model {
        let p = MollifierProfile::compact_bump(1).unwrap();
        let k = build_kernel(&p, 0.2, 0.0, &g).unwrap();
        Model::ch_nonlocal(
            k,
            PotentialSpec::flory_huggins(2.0, DEFAULT_DELTA_CUT).unwrap(),
            MobilitySpec::degenerate(1, 1).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn constant_state_is_fixed_point() {
        let g = grid();
        let s = Solver::new(nonlocal_fh(g), SolverConfig::new(1e-3, 0.01), g).unwrap();
        let u0 = TorusField::constant(g, 0.3);
        let out = s.run(u0.clone(), |_| Ok(())).unwrap();
        assert_eq!(out.state.u, u0);
        assert_eq!(out.record.rows.len(), 11);
    }

    #[test]
    fn zero_final_time_returns_initial_data() {
        let g = grid();
        let s = Solver::new(nonlocal_fh(g), SolverConfig::new(1e-3, 0.0), g).unwrap();
        let u0 = InitialCondition::Random { low: 0.4, high: 0.6 }.build(g, 9).unwrap();
        let out = s.run(u0.clone(), |_| Ok(())).unwrap();
        assert_eq!(out.state.u, u0);
    }

    #[test]
    fn mass_is_conserved() {
        let g = grid();
        let s = Solver::new(nonlocal_fh(g), SolverConfig::new(1e-3, 0.1), g).unwrap();
        let u0 = InitialCondition::Random { low: 0.4, high: 0.6 }.build(g, 3).unwrap();
        let out = s.run(u0, |_| Ok(())).unwrap();
        assert!(out.record.max_relative_mass_drift() < 1e-12);
        assert_eq!(out.record.energy_violations(ENERGY_TOL), 0);
        assert!(out.record.events.is_empty(), "{:?}", out.record.events);
    }

    #[test]
    fn theta_constraint_refused() {
        let g = grid();
        let p = MollifierProfile::compact_bump(1).unwrap();
        let k = build_kernel(&p, 1.0, 0.0, &g).unwrap();
        let r = Model::ch_nonlocal(
            k,
            PotentialSpec::flory_huggins(1.0, DEFAULT_DELTA_CUT).unwrap(),
            MobilitySpec::degenerate(1, 1).unwrap(),
        );
        assert!(matches!(r, Err(Error::ThetaConstraint { .. })));
    }

    #[test]
    fn step_counts_and_mismatch() {
        assert_eq!(SolverConfig::new(0.1, 1.0).steps().unwrap(), 10);
        assert!(SolverConfig::new(0.3, 1.0).steps().is_err());
        assert!(SolverConfig::new(0.0, 1.0).steps().is_err());
    }

    #[test]
    fn explicit_override_checks_bound() {
        let g = grid();
        let mut cfg = SolverConfig::new(1e-2, 0.1);
        cfg.stabilization = Some(0.0);
        assert!(matches!(Solver::new(nonlocal_fh(g), cfg.clone(), g), Err(Error::StepTooLarge { .. })));
        cfg.allow_unstable = true;
        assert!(Solver::new(nonlocal_fh(g), cfg, g).is_ok());
    }

    #[test]
    fn mirror_symmetry_preserved() {
        let g = grid();
        let s = Solver::new(nonlocal_fh(g), SolverConfig::new(1e-3, 0.05), g).unwrap();
        let u0 = TorusField::from_fn(g, |x| 0.5 + 0.1 * x[0].cos() + 0.05 * (3.0 * x[0]).cos());
        let out = s.run(u0, |_| Ok(())).unwrap();
        let v = out.state.u.values();
        let n = g.n();
        for j in 1..n {
            assert!((v[j] - v[n - j]).abs() < 1e-10);
        }
    }

    #[test]
    fn cosine_initial_condition() {
        let g = grid();
        let u = InitialCondition::Cosine {
            mean: 0.5,
            amplitude: 0.2,
            mode: 1,
        }
        .build(g, 0)
        .unwrap();
        assert!((u.values()[0] - 0.7).abs() < 1e-15);
        assert!((u.mean() - 0.5).abs() < 1e-15);
    }
}
