//! Mass, energy, entropy, the entropy-dissipation ledger, nonlocal Poincaré
//! checks, error norms and rate fitting.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::grid::{face_gradient, TorusField, TorusGrid};
use crate::kernels::{build_kernel, h1_norm_sq, KernelSpec, MollifierProfile};
use crate::nonlocal_ops::{apply_b, bbm_seminorm};
use crate::physics::{EntropyDensity, MobilitySpec, PotentialSpec};

pub fn mass(u: &TorusField) -> f64 {
    u.integral()
}

pub fn potential_integral(u: &TorusField, potential: &PotentialSpec) -> f64 {
    u.values().iter().map(|&s| potential.value(s)).sum::<f64>() * u.grid().cell_volume()
}

/// `∫ F(u) + 1/4 ∬ J_eps (u(x) - u(y))^2 = ∫ F(u) + 1/2 <B_eps u, u>`.
pub fn energy_eps(u: &TorusField, kernel: &KernelSpec, potential: &PotentialSpec) -> Result<f64> {
    Ok(potential_integral(u, potential) + 0.5 * apply_b(u, kernel)?.inner(u)?)
}

/// `∫ F(u) + c_B/2 ‖∇_h u‖^2` with face differences.
pub fn energy_local(u: &TorusField, c_b: f64, potential: &PotentialSpec) -> f64 {
    potential_integral(u, potential) + 0.5 * c_b * grad_norm_sq(u)
}

/// `‖∇_h u‖^2` with face differences.
pub fn grad_norm_sq(u: &TorusField) -> f64 {
    face_gradient(u).iter().map(|g| g.norm_l2().powi(2)).sum()
}

pub fn entropy_total(u: &TorusField, density: &EntropyDensity) -> f64 {
    u.values().iter().map(|&s| density.value(s)).sum::<f64>() * u.grid().cell_volume()
}

/// `∫ m(u) |∇ mu|^2` with face-averaged mobility.
pub fn dissipation(u: &TorusField, mu: &TorusField, mobility: &MobilitySpec) -> Result<f64> {
    u.ensure_same_grid(mu)?;
    let g = *u.grid();
    let v = u.values();
    let mut total = 0.0;
    for (axis, gm) in face_gradient(mu).iter().enumerate() {
        for (i, d) in gm.values().iter().enumerate() {
            let m = 0.5 * (mobility.value(v[i]) + mobility.value(v[g.shifted(i, axis, 1)]));
            total += m * d * d;
        }
    }
    Ok(total * g.cell_volume())
}

/// A noteworthy event during a run.
#[derive(Debug, Clone, PartialEq)]
pub struct FlaggedEvent {
    pub step: u64,
    pub t: f64,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRow {
    pub step: u64,
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    pub entropy: f64,
    pub min_u: f64,
    pub max_u: f64,
    pub bbm_seminorm: f64,
    /// `E(t_n) - E(t_{n-1})`, zero on the first row.
    pub energy_increment: f64,
    pub dissipation: f64,
}

/// Per-step time series of a trajectory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiagnosticsRecord {
    pub rows: Vec<DiagnosticsRow>,
    pub events: Vec<FlaggedEvent>,
}

impl DiagnosticsRecord {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a row, filling in the energy increment.
    pub fn push(&mut self, mut row: DiagnosticsRow) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if row.t <= last.t {
                return Err(Error::InvalidParameter(format!(
                    "diagnostics timestamps must increase: {} after {}",
                    row.t, last.t
                )));
            }
            row.energy_increment = row.energy - last.energy;
        } else {
            row.energy_increment = 0.0;
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn flag(&mut self, step: u64, t: f64, message: impl Into<String>) {
        self.events.push(FlaggedEvent {
            step,
            t,
            message: message.into(),
        });
    }

    pub fn csv_header() -> &'static str {
        "step,t,mass,energy,entropy,min_u,max_u,dissipation"
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::csv_header());
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.step, r.t, r.mass, r.energy, r.entropy, r.min_u, r.max_u, r.dissipation
            );
        }
        out
    }

    /// Largest `|mass(t) - mass(0)| / |mass(0)|`.
    pub fn max_relative_mass_drift(&self) -> f64 {
        let Some(first) = self.rows.first() else { return 0.0 };
        let m0 = first.mass;
        self.rows
            .iter()
            .map(|r| (r.mass - m0).abs() / m0.abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }

    /// Largest `energy_increment / (1 + |E_prev|)`.
    pub fn max_relative_energy_increment(&self) -> f64 {
        self.rows
            .windows(2)
            .map(|w| w[1].energy_increment / (1.0 + w[0].energy.abs()))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Steps whose energy increment exceeds `tol (1 + |E_prev|)`.
    pub fn energy_violations(&self, tol: f64) -> usize {
        self.rows
            .windows(2)
            .filter(|w| w[1].energy_increment > tol * (1.0 + w[0].energy.abs()))
            .count()
    }

    /// `|sum of increments - (E(T) - E(0))|`.
    pub fn ledger_defect(&self) -> f64 {
        match (self.rows.first(), self.rows.last()) {
            (Some(a), Some(b)) => {
                let summed: f64 = self.rows.iter().map(|r| r.energy_increment).sum();
                (summed - (b.energy - a.energy)).abs()
            }
            _ => 0.0,
        }
    }

    pub fn min_u(&self) -> f64 {
        self.rows.iter().map(|r| r.min_u).fold(f64::INFINITY, f64::min)
    }

    pub fn max_u(&self) -> f64 {
        self.rows.iter().map(|r| r.max_u).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `‖u - v‖_{L^2}`.
pub fn l2_distance(u: &TorusField, v: &TorusField) -> Result<f64> {
    Ok(u.zip_map(v, |a, b| a - b)?.norm_l2())
}

/// `‖u - v‖_{H^1}` with face differences.
pub fn h1_distance(u: &TorusField, v: &TorusField) -> Result<f64> {
    Ok(h1_norm_sq(&u.zip_map(v, |a, b| a - b)?).sqrt())
}

/// Least-squares fit of `log e = p log eps + log C`; returns `(p, C)`.
pub fn fit_rate(eps: &[f64], errors: &[f64]) -> Result<(f64, f64)> {
    if eps.len() != errors.len() {
        return Err(Error::Fit(format!("{} eps values but {} errors", eps.len(), errors.len())));
    }
    if eps.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 points, got {}", eps.len())));
    }
    if eps.iter().chain(errors).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::Fit("eps and errors must be positive and finite".into()));
    }
    let xs: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("all eps values coincide".into()));
    }
    let p = sxy / sxx;
    Ok((p, (my - p * mx).exp()))
}

/// `∬ J_eps |∇u(x) - ∇u(y)|^2 = sum_i 2 <B_eps ∂_i u, ∂_i u>`.
pub fn gradient_bbm(u: &TorusField, kernel: &KernelSpec) -> Result<f64> {
    face_gradient(u).iter().map(|g| bbm_seminorm(g, kernel)).sum()
}

/// Both sides of the three nonlocal Poincaré inequalities for one field and eps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoincareSample {
    pub field: usize,
    pub eps: f64,
    /// `‖f - mean f‖^2`.
    pub l2_deviation: f64,
    pub seminorm: f64,
    pub h1_sq: f64,
    pub l2_sq: f64,
    pub gradient_seminorm: f64,
}

impl PoincareSample {
    /// Lemma C.1 ratio `‖f - mean‖^2 / seminorm` (bounded by `1/(4 C_p)`).
    pub fn c1_ratio(&self) -> Option<f64> {
        (self.seminorm > 0.0).then(|| self.l2_deviation / self.seminorm)
    }

    /// Lemma C.2 ratio `seminorm / ‖f‖_{H^1}^2`.
    pub fn c2_ratio(&self) -> Option<f64> {
        (self.h1_sq > 0.0).then(|| self.seminorm / self.h1_sq)
    }

    /// Smallest `C(gamma)` making `‖f‖_{H^1}^2 <= gamma G(f) + C ‖f‖^2` hold.
    pub fn c3_constant(&self, gamma: f64) -> Option<f64> {
        (self.l2_sq > 0.0).then(|| ((self.h1_sq - gamma * self.gradient_seminorm) / self.l2_sq).max(0.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoincareReport {
    pub alpha: f64,
    pub eps: Vec<f64>,
    pub samples: Vec<PoincareSample>,
}

impl PoincareReport {
    pub fn c1_sup(&self) -> f64 {
        self.samples.iter().filter_map(|s| s.c1_ratio()).fold(0.0, f64::max)
    }

    pub fn c2_sup(&self) -> f64 {
        self.samples.iter().filter_map(|s| s.c2_ratio()).fold(0.0, f64::max)
    }

    pub fn c3_sup(&self, gamma: f64) -> f64 {
        self.samples.iter().filter_map(|s| s.c3_constant(gamma)).fold(0.0, f64::max)
    }

    /// Samples of one field across the eps list.
    pub fn field_samples(&self, field: usize) -> Vec<&PoincareSample> {
        self.samples.iter().filter(|s| s.field == field).collect()
    }

    pub fn to_csv(&self, gamma: f64) -> String {
        let mut out = String::from("field,eps,c1_ratio,c2_ratio,c3_constant\n");
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for s in &self.samples {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                s.field,
                s.eps,
                fmt(s.c1_ratio()),
                fmt(s.c2_ratio()),
                fmt(s.c3_constant(gamma))
            );
        }
        out
    }
}

pub fn poincare_checks(
    battery: &[TorusField],
    eps_list: &[f64],
    alpha: f64,
    profile: &MollifierProfile,
) -> Result<PoincareReport> {
    let grid: TorusGrid = match battery.first() {
        Some(f) => *f.grid(),
        None => return Err(Error::InvalidParameter("empty field battery".into())),
    };
    let mut samples = Vec::with_capacity(battery.len() * eps_list.len());
    for &eps in eps_list {
        let kernel = build_kernel(profile, eps, alpha, &grid)?;
        for (i, f) in battery.iter().enumerate() {
            let mean = f.integral() / grid.volume();
            samples.push(PoincareSample {
                field: i,
                eps,
                l2_deviation: f.map(|v| v - mean).norm_l2().powi(2),
                seminorm: bbm_seminorm(f, &kernel)?,
                h1_sq: h1_norm_sq(f),
                l2_sq: f.norm_l2().powi(2),
                gradient_seminorm: gradient_bbm(f, &kernel)?,
            });
        }
    }
    Ok(PoincareReport {
        alpha,
        eps: eps_list.to_vec(),
        samples,
    })
}

/// One step of the entropy-dissipation ledger.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyLedgerRow {
    pub t: f64,
    pub entropy: f64,
    /// `Phi(t_{n+1}) - Phi(t_n)`; zero on the last row.
    pub entropy_increment: f64,
    /// `1/2 ∬ J_eps |∇u(x) - ∇u(y)|^2`.
    pub gradient_term: f64,
    /// `∫ F''(u) |∇u|^2`.
    pub potential_term: f64,
    /// Left side `2 theta ‖∇u‖^2` of the negative-part control.
    pub control_lhs: f64,
    /// Right side `1/4 G + C(theta) ‖u‖^2`.
    pub control_rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntropyLedger {
    /// Records that the entropy density is anchored at 1/2, not at 0.
    pub header: String,
    pub theta: f64,
    /// `C(theta) = 2 theta C(gamma)` at `gamma = 1/(8 theta)`, from the battery.
    pub c_theta: f64,
    pub rows: Vec<EntropyLedgerRow>,
}

impl EntropyLedger {
    pub fn control_holds(&self) -> bool {
        self.rows.iter().all(|r| r.control_lhs <= r.control_rhs)
    }

    /// Largest `(Phi_{n+1} - Phi_n)/dt + gradient_term + potential_term` over the
    /// steps, i.e. the discrete residual of the entropy inequality.
    pub fn max_entropy_residual(&self) -> f64 {
        self.rows
            .windows(2)
            .map(|w| w[0].entropy_increment / (w[1].t - w[0].t) + w[0].gradient_term + w[0].potential_term)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# {}\n", self.header);
        out.push_str("t,entropy,entropy_increment,gradient_term,potential_term,control_lhs,control_rhs\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.t, r.entropy, r.entropy_increment, r.gradient_term, r.potential_term, r.control_lhs, r.control_rhs
            );
        }
        out
    }
}

pub const ENTROPY_ANCHOR_NOTE: &str = "entropy density anchored at 1/2: phi(1/2) = phi'(1/2) = 0";

/// `C(gamma)` of the no-average Poincaré inequality, measured on a battery.
pub fn measure_c_gamma(battery: &[TorusField], kernel: &KernelSpec, gamma: f64) -> Result<f64> {
    let mut sup: f64 = 0.0;
    for f in battery {
        let sample = PoincareSample {
            field: 0,
            eps: kernel.eps(),
            l2_deviation: 0.0,
            seminorm: 0.0,
            h1_sq: h1_norm_sq(f),
            l2_sq: f.norm_l2().powi(2),
            gradient_seminorm: gradient_bbm(f, kernel)?,
        };
        if let Some(c) = sample.c3_constant(gamma) {
            sup = sup.max(c);
        }
    }
    Ok(sup)
}

/// Builds the entropy ledger along a trajectory of `(t, u)` snapshots.
pub fn entropy_dissipation_ledger(
    trajectory: &[(f64, TorusField)],
    kernel: &KernelSpec,
    potential: &PotentialSpec,
    density: &EntropyDensity,
    battery: &[TorusField],
) -> Result<EntropyLedger> {
    let theta = potential.theta().unwrap_or(0.0);
    let c_theta = if theta > 0.0 {
        2.0 * theta * measure_c_gamma(battery, kernel, 1.0 / (8.0 * theta))?
    } else {
        0.0
    };
    let mut rows: Vec<EntropyLedgerRow> = Vec::with_capacity(trajectory.len());
    for (t, u) in trajectory {
        let grads = face_gradient(u);
        let g_full: f64 = grads.iter().map(|g| bbm_seminorm(g, kernel)).sum::<Result<f64>>()?;
        let v = u.values();
        let hd = u.grid().cell_volume();
        let potential_term: f64 = grads
            .iter()
            .map(|g| g.values().iter().zip(v).map(|(d, &s)| potential.dprime(s) * d * d).sum::<f64>())
            .sum::<f64>()
            * hd;
        let grad_sq: f64 = grads.iter().map(|g| g.norm_l2().powi(2)).sum();
        rows.push(EntropyLedgerRow {
            t: *t,
            entropy: entropy_total(u, density),
            entropy_increment: 0.0,
            gradient_term: 0.5 * g_full,
            potential_term,
            control_lhs: 2.0 * theta * grad_sq,
            control_rhs: 0.25 * g_full + c_theta * u.norm_l2().powi(2),
        });
    }
    for i in 0..rows.len().saturating_sub(1) {
        rows[i].entropy_increment = rows[i + 1].entropy - rows[i].entropy;
    }
    Ok(EntropyLedger {
        header: ENTROPY_ANCHOR_NOTE.into(),
        theta,
        c_theta,
        rows,
    })
}

/// One line of the exact-identity battery.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityCheck {
    pub name: &'static str,
    pub dim: usize,
    pub n: usize,
    pub alpha: f64,
    /// Defect relative to `max(1, |reference|)`.
    pub defect: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Tolerance on every exact identity.
pub const IDENTITY_TOL: f64 = 1e-10;

/// `∬ J (u(x) - u(y))^2` as a sum over the kernel support, without transforms.
pub fn bbm_pair_sum(u: &TorusField, kernel: &KernelSpec) -> Result<f64> {
    crate::grid::check_grid(kernel.grid(), u.grid())?;
    let g = *u.grid();
    let v = u.values();
    let w = kernel.weights();
    let mut total = 0.0;
    for &o in kernel.support_offsets() {
        let mut acc = 0.0;
        for x in 0..g.len() {
            let d = v[x] - v[g.sub_index(x, o)];
            acc += d * d;
        }
        total += w[o] * acc;
    }
    Ok(total * g.cell_volume())
}

/// Adjointness `<B u, phi> = <S u, S phi>`, the seminorm identity, the zero
/// mean of `B u`, the Leibniz rule of `S` and telescoping of `div_h`, all on
/// seeded uniform random fields.
pub fn identity_suite(grid: &TorusGrid, profile: &MollifierProfile, eps: f64, alpha: f64, seed: u64) -> Result<Vec<IdentityCheck>> {
    use rand::{Rng, SeedableRng};
    let kernel = build_kernel(profile, eps, alpha, grid)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let random = |rng: &mut rand_chacha::ChaCha8Rng| {
        TorusField::new(*grid, (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect())
    };
    let u = random(&mut rng)?;
    let phi = random(&mut rng)?;
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1.0);
    let mut out = Vec::new();
    let mut push = |name, defect: f64| {
        out.push(IdentityCheck {
            name,
            dim: grid.dim(),
            n: grid.n(),
            alpha,
            defect,
            tolerance: IDENTITY_TOL,
            pass: defect <= IDENTITY_TOL,
        })
    };

    let s = crate::nonlocal_ops::check_s_identities(&u, &phi, &kernel)?;
    push("s_adjointness", rel(s.b_pairing, s.s_pairing));
    push("s_leibniz", s.s2_defect / s.s2_scale.max(1.0));

    let via_b = bbm_seminorm(&u, &kernel)?;
    push("bbm_identity", rel(via_b, bbm_pair_sum(&u, &kernel)?));

    let bu = apply_b(&u, &kernel)?;
    let scale: f64 = bu.values().iter().map(|v| v.abs()).sum::<f64>() * grid.cell_volume();
    push("b_zero_mean", bu.integral().abs() / scale.max(1.0));

    let flux: Vec<TorusField> = (0..grid.dim()).map(|_| random(&mut rng)).collect::<Result<_>>()?;
    let div = crate::grid::divergence_flux(&flux)?;
    let scale: f64 = div.values().iter().map(|v| v.abs()).sum::<f64>() * grid.cell_volume();
    push("divergence_telescoping", div.integral().abs() / scale.max(1.0));
    Ok(out)
}
