//! Nonlocal-to-local comparison runs over an eps ladder.
//!
//! The local reference is integrated once on the same grid and with the same
//! `dt` as every nonlocal run, so `e(eps)` isolates the eps error from the
//! discretisation error.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::diagnostics::{fit_rate, h1_distance, l2_distance, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::grid::{LaplacianScheme, TorusField, TorusGrid};
use crate::kernels::{build_kernel, check_adhesion_constraint, MollifierProfile};
use crate::nonlocal_ops::{limit_coefficients, AdhesionKernel};
use crate::physics::{MobilitySpec, PotentialSpec, DEFAULT_DELTA_CUT};
use crate::solvers::{InitialCondition, Model, Solver, SolverConfig};

/// Default fraction of the initial total variation that counts as "smoothed".
pub const SMOOTHING_TV_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub enum SweepPhysics {
    CahnHilliard {
        potential: PotentialSpec,
        mobility: MobilitySpec,
    },
    Adhesion {
        a: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub grid: TorusGrid,
    pub profile: MollifierProfile,
    pub alpha: f64,
    pub physics: SweepPhysics,
    /// `t_final` is overridden by the last comparison time.
    pub solver: SolverConfig,
    /// Strictly decreasing.
    pub eps: Vec<f64>,
    /// Strictly increasing comparison times.
    pub times: Vec<f64>,
    pub initial: InitialCondition,
    pub seed: u64,
    pub local_scheme: LaplacianScheme,
    /// Override for the local coefficient `c_B`; quadrature value otherwise.
    pub c_b: Option<f64>,
    /// Override for `c_K`; quadrature value otherwise.
    pub c_k: Option<f64>,
}

impl SweepPlan {
    /// 1D smooth well, `m = 1`, Gaussian kernel, `eps ∈ {1, 0.7, 0.1}`,
    /// random `u0 ∈ [0.4, 0.6]`, compared at `t ∈ {1, 10, 100}`.
    pub fn smooth_well_preset() -> Result<Self> {
        let grid = TorusGrid::new(1, 512, 16.0)?;
        Ok(Self {
            grid,
            profile: MollifierProfile::truncated_gaussian(1, crate::kernels::GAUSSIAN_TRUNCATION)?,
            alpha: 0.0,
            physics: SweepPhysics::CahnHilliard {
                potential: PotentialSpec::SmoothDoubleWell,
                mobility: MobilitySpec::constant(1.0)?,
            },
            solver: SolverConfig::new(1e-3, 100.0),
            eps: vec![1.0, 0.7, 0.1],
            times: vec![1.0, 10.0, 100.0],
            initial: InitialCondition::Random { low: 0.4, high: 0.6 },
            seed: 20_240_501,
            local_scheme: LaplacianScheme::Stencil,
            c_b: None,
            c_k: None,
        })
    }

    /// Degenerate Flory-Huggins comparison (`theta = 2`, `m = u(1-u)`).
    pub fn degenerate_preset() -> Result<Self> {
        let grid = TorusGrid::new(1, 512, 2.0 * std::f64::consts::PI)?;
        Ok(Self {
            grid,
            profile: MollifierProfile::compact_bump(1)?,
            alpha: 0.0,
            physics: SweepPhysics::CahnHilliard {
                potential: PotentialSpec::flory_huggins(2.0, DEFAULT_DELTA_CUT)?,
                mobility: MobilitySpec::degenerate(1, 1)?,
            },
            solver: SolverConfig::new(1e-5, 1.0),
            eps: vec![0.4, 0.2, 0.1],
            times: vec![1.0],
            initial: InitialCondition::Field(bump_profile(grid)),
            seed: 0,
            local_scheme: LaplacianScheme::Stencil,
            c_b: None,
            c_k: None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps.len() < 3 {
            return Err(Error::InvalidParameter(format!("eps ladder needs at least 3 values, got {}", self.eps.len())));
        }
        if self.eps.iter().any(|e| !(e.is_finite() && *e > 0.0)) || self.eps.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidParameter("eps ladder must be positive and strictly decreasing".into()));
        }
        if self.times.is_empty() || self.times[0] <= 0.0 || self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("comparison times must be positive and strictly increasing".into()));
        }
        if self.profile.dim() != self.grid.dim() {
            return Err(Error::InvalidParameter("profile and grid dimensions differ".into()));
        }
        for &t in &self.times {
            self.step_of(t)?;
        }
        Ok(())
    }

    fn step_of(&self, t: f64) -> Result<u64> {
        let mut cfg = self.solver.clone();
        cfg.t_final = t;
        cfg.steps()
    }

    fn run_config(&self) -> SolverConfig {
        let mut cfg = self.solver.clone();
        cfg.t_final = *self.times.last().expect("validated");
        cfg.output_every = 1;
        cfg
    }

    fn coefficients(&self) -> Result<(f64, f64)> {
        let (c_b, c_k) = limit_coefficients(&self.profile, self.alpha)?;
        Ok((self.c_b.unwrap_or(c_b), self.c_k.unwrap_or(c_k)))
    }

    fn local_model(&self) -> Result<Model> {
        let (c_b, c_k) = self.coefficients()?;
        match &self.physics {
            SweepPhysics::CahnHilliard { potential, mobility } => {
                Model::ch_local(c_b, self.local_scheme, *potential, *mobility)
            }
            SweepPhysics::Adhesion { a } => {
                let check = check_adhesion_constraint(*a, self.eps[0], &self.profile, &self.grid)?;
                Model::adhesion_local(c_k, *a, self.grid, &check)
            }
        }
    }

    fn nonlocal_model(&self, eps: f64) -> Result<Model> {
        let (_, c_k) = self.coefficients()?;
        match &self.physics {
            SweepPhysics::CahnHilliard { potential, mobility } => {
                Model::ch_nonlocal(build_kernel(&self.profile, eps, self.alpha, &self.grid)?, *potential, *mobility)
            }
            SweepPhysics::Adhesion { a } => {
                let check = check_adhesion_constraint(*a, self.eps[0], &self.profile, &self.grid)?;
                Model::adhesion_nonlocal(AdhesionKernel::new(&self.profile, eps, &self.grid)?, *a, c_k, &check)
            }
        }
    }
}

/// `0.3 + 0.4 exp(-2 |x - c|^2)` bump centred in the box.
fn bump_profile(grid: TorusGrid) -> TorusField {
    let l = grid.length();
    TorusField::from_fn(grid, |x| {
        let r2: f64 = x[..grid.dim()].iter().map(|c| (c - l / 2.0).powi(2)).sum();
        0.3 + 0.4 * (-2.0 * r2).exp()
    })
}

/// What one run keeps: states at the comparison times and a total-variation trace.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<(f64, TorusField)>,
    pub tv: Vec<(f64, f64)>,
    pub record: DiagnosticsRecord,
    pub runtime_s: f64,
}

fn integrate(model: Model, plan: &SweepPlan, u0: &TorusField) -> Result<Trajectory> {
    let start = Instant::now();
    let solver = Solver::new(model, plan.run_config(), plan.grid)?;
    let steps: Vec<u64> = plan.times.iter().map(|&t| plan.step_of(t)).collect::<Result<_>>()?;
    let mut states = Vec::with_capacity(steps.len());
    let mut tv = Vec::new();
    let out = solver.run(u0.clone(), |s| {
        tv.push((s.t, total_variation(&s.u)));
        if steps.contains(&s.step) {
            states.push((s.t, s.u.clone()));
        }
        Ok(())
    })?;
    Ok(Trajectory {
        states,
        tv,
        record: out.record,
        runtime_s: start.elapsed().as_secs_f64(),
    })
}

/// Interface-width and smoothing-time proxies of a nonlocal/local pair.
#[derive(Debug, Clone, PartialEq)]
pub struct QualitativeFlags {
    pub eps: f64,
    pub t: f64,
    pub width_nonlocal: Option<f64>,
    pub width_local: Option<f64>,
    pub smoothing_nonlocal: Option<f64>,
    pub smoothing_local: Option<f64>,
}

impl QualitativeFlags {
    pub fn sharper_interface(&self) -> Option<bool> {
        Some(self.width_nonlocal? <= self.width_local?)
    }

    pub fn slower_smoothing(&self) -> Option<bool> {
        Some(self.smoothing_nonlocal? >= self.smoothing_local?)
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub eps: Vec<f64>,
    pub times: Vec<f64>,
    /// `err_l2[i][j]`: eps `i`, time `j`.
    pub err_l2: Vec<Vec<f64>>,
    pub err_h1: Vec<Vec<f64>>,
    pub runtime_s: Vec<f64>,
    pub local_runtime_s: f64,
    /// Fitted `(order, constant)` per comparison time, when at least three
    /// completed points with positive error exist.
    pub order_l2: Vec<Option<(f64, f64)>>,
    pub order_h1: Vec<Option<(f64, f64)>>,
    pub u0_sha256: String,
    pub dt: f64,
    pub seed: u64,
    pub local: Trajectory,
    pub nonlocal: Vec<Trajectory>,
    pub flags: Vec<QualitativeFlags>,
    /// Ladder points that aborted, with the reason. Their rows are absent.
    pub aborted: Vec<(f64, String)>,
}

impl SweepResult {
    pub fn csv_header() -> &'static str {
        "eps,t,err_l2,err_h1,runtime_s"
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::csv_header());
        for (i, eps) in self.eps.iter().enumerate() {
            for (j, t) in self.times.iter().enumerate() {
                let _ = writeln!(out, "{eps},{t},{},{},{}", self.err_l2[i][j], self.err_h1[i][j], self.runtime_s[i]);
            }
        }
        out
    }

    /// True when the L² error strictly decreases along the ladder at every time.
    pub fn l2_strictly_decreasing(&self) -> bool {
        strictly_decreasing(&self.err_l2, self.times.len())
    }

    pub fn h1_strictly_decreasing(&self) -> bool {
        strictly_decreasing(&self.err_h1, self.times.len())
    }

    /// `‖u_local(t)‖_{L^2}` at comparison time `j`.
    pub fn local_norm(&self, j: usize) -> f64 {
        self.local.states[j].1.norm_l2()
    }
}

fn strictly_decreasing(err: &[Vec<f64>], times: usize) -> bool {
    (0..times).all(|j| err.windows(2).all(|w| w[1][j] < w[0][j]))
}

/// Hex SHA-256 of the `CHNL1` encoding of a field at `t = 0`.
pub fn field_hash(u: &TorusField) -> String {
    let digest = Sha256::digest(crate::snapshot::encode(u, 0.0));
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Runs the local reference and every ladder point from the same `u0`.
pub fn run_sweep(plan: &SweepPlan) -> Result<SweepResult> {
    plan.validate()?;
    let u0 = plan.initial.build(plan.grid, plan.seed)?;
    let u0_sha256 = field_hash(&u0);

    let local_model = plan.local_model()?;
    let models: Vec<Result<Model>> = plan.eps.iter().map(|&e| plan.nonlocal_model(e)).collect();
    // Constraint and kernel failures are configuration errors, not aborts.
    let models: Vec<Model> = models.into_iter().collect::<Result<_>>()?;

    let (local, runs) = rayon::join(
        || integrate(local_model, plan, &u0),
        || {
            models
                .into_par_iter()
                .map(|m| integrate(m, plan, &u0))
                .collect::<Vec<_>>()
        },
    );
    let local = local?;

    let mut eps = Vec::new();
    let mut err_l2 = Vec::new();
    let mut err_h1 = Vec::new();
    let mut runtime_s = Vec::new();
    let mut nonlocal = Vec::new();
    let mut aborted = Vec::new();
    let mut flags = Vec::new();
    for (&e, run) in plan.eps.iter().zip(runs) {
        match run {
            Ok(traj) => {
                let mut l2 = Vec::with_capacity(plan.times.len());
                let mut h1 = Vec::with_capacity(plan.times.len());
                for ((_, a), (_, b)) in traj.states.iter().zip(&local.states) {
                    l2.push(l2_distance(a, b)?);
                    h1.push(h1_distance(a, b)?);
                }
                flags.push(qualitative_flags(e, &traj, &local, SMOOTHING_TV_FRACTION));
                eps.push(e);
                err_l2.push(l2);
                err_h1.push(h1);
                runtime_s.push(traj.runtime_s);
                nonlocal.push(traj);
            }
            Err(err) => aborted.push((e, err.to_string())),
        }
    }
    let fit = |err: &[Vec<f64>], j: usize| {
        let col: Vec<f64> = err.iter().map(|r| r[j]).collect();
        fit_rate(&eps, &col).ok()
    };
    let order_l2 = (0..plan.times.len()).map(|j| fit(&err_l2, j)).collect();
    let order_h1 = (0..plan.times.len()).map(|j| fit(&err_h1, j)).collect();
    Ok(SweepResult {
        local_runtime_s: local.runtime_s,
        eps,
        times: plan.times.clone(),
        err_l2,
        err_h1,
        runtime_s,
        order_l2,
        order_h1,
        u0_sha256,
        dt: plan.solver.dt,
        seed: plan.seed,
        local,
        nonlocal,
        flags,
        aborted,
    })
}

/// `Σ |u(x + h e_i) - u(x)| h^(d-1)` over faces.
pub fn total_variation(u: &TorusField) -> f64 {
    let g = u.grid();
    let v = u.values();
    let mut total = 0.0;
    for axis in 0..g.dim() {
        for i in 0..g.len() {
            total += (v[g.shifted(i, axis, 1)] - v[i]).abs();
        }
    }
    total * g.spacing().powi(g.dim() as i32 - 1)
}

/// Width over which `u` rises from 0.1 to 0.9 around the steepest face along
/// the first axis, linearly interpolated. `None` when no such crossing exists
/// within half a period.
pub fn interface_width(u: &TorusField) -> Option<f64> {
    let g = u.grid();
    let v = u.values();
    let n = g.n() as isize;
    let h = g.spacing();
    let (steep, _) = (0..g.len())
        .map(|i| (i, (v[g.shifted(i, 0, 1)] - v[i]).abs()))
        .max_by(|a, b| a.1.total_cmp(&b.1))?;
    let rising = v[g.shifted(steep, 0, 1)] > v[steep];
    // Offset (in cells from `steep`) of the first crossing of `level` walking
    // from `start` in direction `dir`.
    let crossing = |level: f64, start: isize, dir: isize| -> Option<f64> {
        let mut p = start;
        for _ in 0..n / 2 {
            let a = v[g.shifted(steep, 0, p)];
            let b = v[g.shifted(steep, 0, p + dir)];
            if (a - level) * (b - level) <= 0.0 && a != b {
                return Some(p as f64 + dir as f64 * (level - a) / (b - a));
            }
            p += dir;
        }
        None
    };
    let (low, high) = if rising { (0.1, 0.9) } else { (0.9, 0.1) };
    let back = crossing(low, 1, -1)?;
    let fwd = crossing(high, 0, 1)?;
    Some((fwd - back) * h)
}

/// First recorded time at which the total variation falls to `fraction` of its initial value.
pub fn smoothing_time(tv: &[(f64, f64)], fraction: f64) -> Option<f64> {
    let (_, tv0) = *tv.first()?;
    tv.iter().find(|(_, v)| *v <= fraction * tv0).map(|(t, _)| *t)
}

pub fn qualitative_flags(eps: f64, nonlocal: &Trajectory, local: &Trajectory, fraction: f64) -> QualitativeFlags {
    let last = |t: &Trajectory| t.states.last().and_then(|(_, u)| interface_width(u));
    QualitativeFlags {
        eps,
        t: nonlocal.states.last().map(|(t, _)| *t).unwrap_or(0.0),
        width_nonlocal: last(nonlocal),
        width_local: last(local),
        smoothing_nonlocal: smoothing_time(&nonlocal.tv, fraction),
        smoothing_local: smoothing_time(&local.tv, fraction),
    }
}
