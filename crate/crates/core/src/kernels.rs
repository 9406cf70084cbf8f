//! Mollifier profiles, the scaled interaction kernels `J_eps` built on a
//! grid, their moments, and the admissibility checks that guard the solvers.
//!
//! `J_eps(x) = omega_eps(x) / (eps^(2 - alpha) |x|^alpha)` with
//! `omega_eps(x) = eps^-d omega(x / eps)` and `omega` a unit-mass radial profile.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{face_gradient, Spectral, TorusField, TorusGrid};
use crate::nonlocal_ops;
use crate::quadrature::integrate_radial_power;

/// Absolute tolerance used for all profile moments.
pub const MOMENT_TOL: f64 = 1e-12;

/// Default truncation radius of the Gaussian profile, in units of `eps`.
pub const GAUSSIAN_TRUNCATION: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileKind {
    /// `exp(-1 / (1 - |z|^2))` on the unit ball.
    CompactBump,
    /// `exp(-|z|^2)` cut off at a finite radius.
    TruncatedGaussian,
}

impl ProfileKind {
    pub fn name(&self) -> &'static str {
        match self {
            ProfileKind::CompactBump => "compact_bump",
            ProfileKind::TruncatedGaussian => "truncated_gaussian",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "compact_bump" => Some(ProfileKind::CompactBump),
            "truncated_gaussian" => Some(ProfileKind::TruncatedGaussian),
            _ => None,
        }
    }
}

/// Nonnegative radial profile with unit mass on `R^d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MollifierProfile {
    kind: ProfileKind,
    dim: usize,
    radius: f64,
    norm: f64,
}

/// Surface measure of the unit sphere in `R^d` (`d` = 1 or 2).
fn sphere_measure(dim: usize) -> f64 {
    if dim == 1 {
        2.0
    } else {
        2.0 * PI
    }
}

impl MollifierProfile {
    pub fn compact_bump(dim: usize) -> Result<Self> {
        Self::build(ProfileKind::CompactBump, dim, 1.0)
    }

    pub fn truncated_gaussian(dim: usize, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidParameter(format!("truncation radius must be positive, got {radius}")));
        }
        Self::build(ProfileKind::TruncatedGaussian, dim, radius)
    }

    pub fn new(kind: ProfileKind, dim: usize) -> Result<Self> {
        match kind {
            ProfileKind::CompactBump => Self::compact_bump(dim),
            ProfileKind::TruncatedGaussian => Self::truncated_gaussian(dim, GAUSSIAN_TRUNCATION),
        }
    }

    fn build(kind: ProfileKind, dim: usize, radius: f64) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidParameter(format!("profile dimension must be 1 or 2, got {dim}")));
        }
        let mut p = Self {
            kind,
            dim,
            radius,
            norm: 1.0,
        };
        let mass = p.radial_integral(0.0, 1e-15)?;
        p.norm = 1.0 / mass;
        Ok(p)
    }

    pub fn kind(&self) -> ProfileKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Radius of the support (in units of `eps` once scaled).
    pub fn support_radius(&self) -> f64 {
        self.radius
    }

    fn shape(&self, r: f64) -> f64 {
        if r >= self.radius {
            return 0.0;
        }
        match self.kind {
            ProfileKind::CompactBump => (-1.0 / (1.0 - r * r)).exp(),
            ProfileKind::TruncatedGaussian => (-r * r).exp(),
        }
    }

    /// `omega(z)` for `|z| = r`.
    pub fn value(&self, r: f64) -> f64 {
        self.norm * self.shape(r)
    }

    /// `omega_eps(x) = eps^-d omega(|x| / eps)`.
    pub fn scaled(&self, r: f64, eps: f64) -> f64 {
        self.value(r / eps) / eps.powi(self.dim as i32)
    }

    /// `∫_{R^d} omega(z) |z|^p dz` by adaptive quadrature.
    pub fn radial_moment(&self, p: f64, tol: f64) -> Result<f64> {
        self.radial_integral(p, tol)
    }

    fn radial_integral(&self, p: f64, tol: f64) -> Result<f64> {
        let s = sphere_measure(self.dim);
        let power = p + self.dim as f64 - 1.0;
        let r0 = self.radius;
        // ∫_0^R g(r) r^q dr = R^(q+1) ∫_0^1 g(R t) t^q dt
        let scale = s * self.norm * r0.powf(power + 1.0);
        let inner = integrate_radial_power(|t| self.shape(r0 * t), power, tol / scale)?;
        Ok(scale * inner.value)
    }
}

/// Moments of a profile for a given singularity exponent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentTable {
    /// `∫ omega(z) |z|^(2 - alpha) dz`.
    pub w: f64,
    /// `∫ omega(z) |z| dz`.
    pub c_omega: f64,
    /// `J_eps * 1 = eps^-2 ∫ omega(z) |z|^-alpha dz` at `eps`.
    pub j_conv_one: f64,
    /// `∫ omega(z) z_1^2 |z|^-alpha dz`.
    pub diag_moment: f64,
    pub eps: f64,
    pub alpha: f64,
}

impl MomentTable {
    pub fn csv_header() -> &'static str {
        "W,C_omega,J_conv_1,diag_moment"
    }

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{}", self.w, self.c_omega, self.j_conv_one, self.diag_moment)
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}\n", Self::csv_header(), self.csv_row())
    }
}

/// Computes the moment table at `eps = 1`. `alpha` may range over `[0, 2]`.
pub fn moments(profile: &MollifierProfile, alpha: f64) -> Result<MomentTable> {
    moments_with_tol(profile, alpha, MOMENT_TOL)
}

pub fn moments_with_tol(profile: &MollifierProfile, alpha: f64, tol: f64) -> Result<MomentTable> {
    if !(0.0..=2.0).contains(&alpha) {
        return Err(Error::AlphaOutOfRange { alpha, max: 2.0 });
    }
    let w = profile.radial_moment(2.0 - alpha, tol)?;
    let c_omega = profile.radial_moment(1.0, tol)?;
    let j_conv_one = if alpha < profile.dim() as f64 {
        profile.radial_moment(-alpha, tol)?
    } else {
        f64::INFINITY
    };
    // Diagonal entry of the second-moment tensor, evaluated as a product of a
    // radial and an angular quadrature rather than as w / d.
    let diag_moment = match profile.dim() {
        1 => profile.radial_moment(2.0 - alpha, tol)? / 2.0 * 2.0,
        _ => {
            let radial = profile.radial_moment(2.0 - alpha, tol)? / (2.0 * PI);
            let angular = crate::quadrature::integrate(|t: f64| t.cos().powi(2), 0.0, 2.0 * PI, tol)?.value;
            radial * angular
        }
    };
    Ok(MomentTable {
        w,
        c_omega,
        j_conv_one,
        diag_moment,
        eps: 1.0,
        alpha,
    })
}

/// Largest admissible singularity exponent on a `dim`-dimensional torus.
pub fn alpha_limit(dim: usize) -> f64 {
    (dim as f64 - 1.0).max(1.0)
}

/// The kernel `J_eps` tabulated on a grid, with its transform cached.
#[derive(Debug, Clone)]
pub struct KernelSpec {
    profile: MollifierProfile,
    eps: f64,
    alpha: f64,
    grid: TorusGrid,
    /// `h^d J_eps(x_j)` at every minimal-image offset `x_j`.
    weights: Vec<f64>,
    /// Flat offset indices with `0 < |x_j| <= eps R`, symmetric under negation.
    support: Vec<usize>,
    /// Real DFT of `weights` (the kernel is even).
    transform: Vec<f64>,
    conv_one: f64,
    spectral: Spectral,
}

impl KernelSpec {
    pub fn profile(&self) -> &MollifierProfile {
        &self.profile
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn spectral(&self) -> &Spectral {
        &self.spectral
    }

    /// Discrete `J_eps * 1 = sum_j h^d J_eps(x_j)`.
    pub fn conv_one(&self) -> f64 {
        self.conv_one
    }

    /// `J_eps(x_j)` values (without the `h^d` weight).
    pub fn table(&self) -> Vec<f64> {
        let hd = self.grid.cell_volume();
        self.weights.iter().map(|w| w / hd).collect()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn support_offsets(&self) -> &[usize] {
        &self.support
    }

    /// `Ĵ(k)` per DFT bin.
    pub fn transform(&self) -> &[f64] {
        &self.transform
    }

    /// Symbol of `B_eps`: `Ĵ(0) - Ĵ(k)`, exactly zero at `k = 0`.
    pub fn b_symbol(&self, idx: usize) -> f64 {
        if idx == 0 {
            0.0
        } else {
            self.transform[0] - self.transform[idx]
        }
    }

    pub fn moment_table(&self) -> Result<MomentTable> {
        let mut m = moments(&self.profile, self.alpha)?;
        m.eps = self.eps;
        m.j_conv_one = self.conv_one;
        Ok(m)
    }
}

/// Tabulates `J_eps` on the grid.
///
/// Off the origin the table is the pointwise kernel. The origin entry does not
/// enter `B_eps` or `S_eps` (their increments vanish there), so it is chosen to
/// make the discrete mass equal the quadrature value of `J_eps * 1`.
pub fn build_kernel(profile: &MollifierProfile, eps: f64, alpha: f64, grid: &TorusGrid) -> Result<KernelSpec> {
    if profile.dim() != grid.dim() {
        return Err(Error::GridMismatch(format!(
            "profile is {}-dimensional, grid is {}-dimensional",
            profile.dim(),
            grid.dim()
        )));
    }
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    let amax = alpha_limit(grid.dim());
    if !(0.0..amax).contains(&alpha) {
        return Err(Error::AlphaOutOfRange { alpha, max: amax });
    }
    let support = eps * profile.support_radius();
    let half = grid.length() / 2.0;
    if support >= half {
        return Err(Error::KernelWraps {
            support,
            half_period: half,
        });
    }

    let hd = grid.cell_volume();
    let denom = eps.powf(2.0 - alpha);
    let mut weights = vec![0.0; grid.len()];
    let mut offsets = Vec::new();
    for (idx, w) in weights.iter_mut().enumerate() {
        if idx == 0 {
            continue;
        }
        let x = grid.offset_vector(idx);
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
        if r <= support {
            let val = profile.scaled(r, eps) / (denom * r.powf(alpha));
            if val > 0.0 {
                *w = hd * val;
                offsets.push(idx);
            }
        }
    }
    let off_origin: f64 = pairwise_sum(&weights);
    let target = profile.radial_moment(-alpha, MOMENT_TOL)? / eps.powi(2);
    let origin = target - off_origin;
    if origin < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "kernel under-resolved: eps = {eps} with h = {} overshoots J_eps * 1 = {target}",
            grid.spacing()
        )));
    }
    weights[0] = origin;

    let spectral = Spectral::new(*grid);
    let transform: Vec<f64> = spectral.forward_complex(&weights).into_iter().map(|c| c.re).collect();
    Ok(KernelSpec {
        profile: *profile,
        eps,
        alpha,
        grid: *grid,
        weights,
        support: offsets,
        transform,
        conv_one: target,
        spectral,
    })
}

fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        v.iter().sum()
    } else {
        let (a, b) = v.split_at(v.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

/// `2 theta < J_eps * 1`.
pub fn check_theta_constraint(theta: f64, kernel: &KernelSpec) -> bool {
    2.0 * theta < kernel.conv_one()
}

/// Standard battery of test fields: cosine and sine modes `m = 1..n/4` along
/// each axis (plus diagonal modes in 2D) and seeded random smooth fields.
pub fn field_battery(grid: &TorusGrid, random_fields: usize, seed: u64) -> Vec<TorusField> {
    let l = grid.length();
    let mut out = Vec::new();
    for m in 1..=grid.n() / 4 {
        let k = 2.0 * PI * m as f64 / l;
        for axis in 0..grid.dim() {
            out.push(TorusField::from_fn(*grid, |x| (k * x[axis]).cos()));
            out.push(TorusField::from_fn(*grid, |x| (k * x[axis]).sin()));
        }
        if grid.dim() == 2 {
            out.push(TorusField::from_fn(*grid, |x| (k * (x[0] + x[1])).sin()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..random_fields {
        out.push(random_smooth_field(grid, 8, &mut rng));
    }
    out
}

/// Random trigonometric polynomial with modes up to `max_mode` and amplitudes
/// decaying like `1 / (1 + |m|^2)`.
pub fn random_smooth_field(grid: &TorusGrid, max_mode: i64, rng: &mut impl Rng) -> TorusField {
    let l = grid.length();
    let mut terms = Vec::new();
    let m1_range = if grid.dim() == 2 { -max_mode..=max_mode } else { 0..=0 };
    for m0 in -max_mode..=max_mode {
        for m1 in m1_range.clone() {
            if m0 == 0 && m1 == 0 {
                continue;
            }
            let amp = rng.gen_range(-1.0..1.0) / (1.0 + (m0 * m0 + m1 * m1) as f64);
            let phase = rng.gen_range(0.0..2.0 * PI);
            terms.push((m0 as f64, m1 as f64, amp, phase));
        }
    }
    let offset = rng.gen_range(-1.0..1.0);
    TorusField::from_fn(*grid, |x| {
        offset
            + terms
                .iter()
                .map(|&(m0, m1, a, p)| a * (2.0 * PI * (m0 * x[0] + m1 * x[1]) / l + p).cos())
                .sum::<f64>()
    })
}

/// Discrete `‖f‖²_{H^1} = ‖f‖² + ‖∇_h f‖²` with face differences.
pub fn h1_norm_sq(f: &TorusField) -> f64 {
    let grad: f64 = face_gradient(f).iter().map(|g| g.norm_l2().powi(2)).sum();
    f.norm_l2().powi(2) + grad
}

/// Outcome of the adhesion pre-flight.
#[derive(Debug, Clone, PartialEq)]
pub struct AdhesionCheck {
    pub a: f64,
    /// Safety-scaled empirical constant of `∬ |f(x)-f(y)|² eps^-2 omega_eps ≤ C ‖f‖²_{H^1}`.
    pub c_est: f64,
    /// Largest raw ratio over the battery and the eps ladder.
    pub sup_ratio: f64,
    pub eps_values: Vec<f64>,
    pub value: f64,
    pub ok: bool,
}

pub const ADHESION_SAFETY: f64 = 1.1;

/// Eps ladder used by the adhesion constant estimate: `eps_max / 2^k` for
/// `k = 0..levels` while the kernel stays resolved (at least two cells per eps).
pub fn adhesion_eps_ladder(eps_max: f64, grid: &TorusGrid, levels: usize) -> Vec<f64> {
    (0..levels)
        .map(|k| eps_max / 2f64.powi(k as i32))
        .filter(|&e| e >= 2.0 * grid.spacing())
        .collect()
}

/// Empirical version of `|a| sqrt(C) < 1` with `C` estimated over the battery.
pub fn check_adhesion_constraint(
    a: f64,
    eps_max: f64,
    profile: &MollifierProfile,
    grid: &TorusGrid,
) -> Result<AdhesionCheck> {
    let battery = field_battery(grid, 8, 0x0adc_0de5);
    let eps_values = adhesion_eps_ladder(eps_max, grid, 4);
    if eps_values.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "eps_max = {eps_max} is below two grid cells"
        )));
    }
    let mut sup: f64 = 0.0;
    for &eps in &eps_values {
        let kernel = build_kernel(profile, eps, 0.0, grid)?;
        for f in &battery {
            let h1 = h1_norm_sq(f);
            if h1 > 0.0 {
                sup = sup.max(nonlocal_ops::bbm_seminorm(f, &kernel)? / h1);
            }
        }
    }
    let c_est = ADHESION_SAFETY * sup;
    let value = a.abs() * c_est.sqrt();
    Ok(AdhesionCheck {
        a,
        c_est,
        sup_ratio: sup,
        eps_values,
        value,
        ok: value < 1.0,
    })
}
