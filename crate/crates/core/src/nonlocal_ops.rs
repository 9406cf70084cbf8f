//! The nonlocal operators `B_eps`, `S_eps` and `K_eps`, their exact discrete
//! identities, and the consistency calibration against the local operators.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::diagnostics::fit_rate;
use crate::error::{Error, Result};
use crate::grid::{check_grid, Spectral, TorusField, TorusGrid};
use crate::kernels::{build_kernel, moments, KernelSpec, MollifierProfile};

/// Largest grids on which two-point fields are materialised.
pub const S_GUARD_1D: usize = 512;
pub const S_GUARD_2D: usize = 128;

/// Subtracts the first sample so that constant fields become exact zeros
/// before the transform; every operator here annihilates constants.
fn shifted_values(u: &TorusField) -> Vec<f64> {
    let c = u.values()[0];
    u.values().iter().map(|v| v - c).collect()
}

/// `B_eps[u] = (J_eps * 1) u - J_eps * u` as a circular convolution.
pub fn apply_b(u: &TorusField, kernel: &KernelSpec) -> Result<TorusField> {
    check_grid(kernel.grid(), u.grid())?;
    let spectral = kernel.spectral();
    let mut data = spectral.forward_complex(&shifted_values(u));
    for (i, c) in data.iter_mut().enumerate() {
        *c *= kernel.b_symbol(i);
    }
    Ok(TorusField::from_raw(*u.grid(), spectral.inverse_real(data)))
}

/// `∬ J_eps(x-y) (u(x)-u(y))^2 = 2 <B_eps u, u>`.
pub fn bbm_seminorm(u: &TorusField, kernel: &KernelSpec) -> Result<f64> {
    Ok(2.0 * apply_b(u, kernel)?.inner(u)?)
}

/// Values of a two-point function `(x, y)` with `y` restricted to the kernel support.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoPointField {
    grid: TorusGrid,
    offsets: Vec<usize>,
    /// Row-major in `(x, offset)`.
    values: Vec<f64>,
}

impl TwoPointField {
    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, offset_slot: usize) -> f64 {
        self.values[x * self.offsets.len() + offset_slot]
    }

    /// `∬ f g dx dy` with weights `h^(2d)`.
    pub fn inner(&self, other: &TwoPointField) -> Result<f64> {
        check_grid(&self.grid, &other.grid)?;
        if self.offsets != other.offsets {
            return Err(Error::GridMismatch("two-point fields over different offsets".into()));
        }
        let hd = self.grid.cell_volume();
        Ok(hd * hd * self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>())
    }

    pub fn max_abs_diff(&self, other: &TwoPointField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn check_s_guard(grid: &TorusGrid) -> Result<()> {
    let limit = if grid.dim() == 1 { S_GUARD_1D } else { S_GUARD_2D };
    if grid.n() > limit {
        return Err(Error::MemoryGuard(format!(
            "two-point fields need n <= {limit} in {}D, got n = {}",
            grid.dim(),
            grid.n()
        )));
    }
    Ok(())
}

/// `S_eps[u](x, y) = sqrt(J_eps(y) / 2) (u(x - y) - u(x))`.
pub fn apply_s(u: &TorusField, kernel: &KernelSpec) -> Result<TwoPointField> {
    check_grid(kernel.grid(), u.grid())?;
    let grid = *u.grid();
    check_s_guard(&grid)?;
    let offsets = kernel.support_offsets().to_vec();
    let hd = grid.cell_volume();
    let coef: Vec<f64> = offsets.iter().map(|&o| (kernel.weights()[o] / (2.0 * hd)).sqrt()).collect();
    let v = u.values();
    let mut values = Vec::with_capacity(grid.len() * offsets.len());
    for x in 0..grid.len() {
        for (&o, &c) in offsets.iter().zip(&coef) {
            values.push(c * (v[grid.sub_index(x, o)] - v[x]));
        }
    }
    Ok(TwoPointField { grid, offsets, values })
}

/// Defects of the exact discrete identities of `S_eps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SIdentityReport {
    /// `<B_eps u, phi>`.
    pub b_pairing: f64,
    /// `<S_eps u, S_eps phi>`.
    pub s_pairing: f64,
    /// `|b_pairing - s_pairing|`.
    pub s3_defect: f64,
    /// Max pointwise gap between `S[u phi] - u S[phi] - phi S[u]` and the
    /// product-of-increments term evaluated directly from the profile.
    pub s2_defect: f64,
    /// Max magnitude of the product-of-increments term (scale for `s2_defect`).
    pub s2_scale: f64,
}

pub fn check_s_identities(u: &TorusField, phi: &TorusField, kernel: &KernelSpec) -> Result<SIdentityReport> {
    u.ensure_same_grid(phi)?;
    let b_pairing = apply_b(u, kernel)?.inner(phi)?;
    let su = apply_s(u, kernel)?;
    let sphi = apply_s(phi, kernel)?;
    let s_pairing = su.inner(&sphi)?;

    let prod = u.zip_map(phi, |a, b| a * b)?;
    let sprod = apply_s(&prod, kernel)?;
    let grid = *u.grid();
    let offsets = su.offsets().to_vec();
    let eps = kernel.eps();
    let alpha = kernel.alpha();
    let profile = kernel.profile();
    let (uv, pv) = (u.values(), phi.values());
    let mut s2_defect: f64 = 0.0;
    let mut s2_scale: f64 = 0.0;
    for x in 0..grid.len() {
        for (slot, &o) in offsets.iter().enumerate() {
            let y = grid.offset_vector(o);
            let r = (y[0] * y[0] + y[1] * y[1]).sqrt();
            let coef = profile.scaled(r, eps).sqrt() / (2f64.sqrt() * eps.powf(1.0 - alpha / 2.0) * r.powf(alpha / 2.0));
            let xy = grid.sub_index(x, o);
            let expected = coef * (uv[xy] - uv[x]) * (pv[xy] - pv[x]);
            let leibniz = sprod.get(x, slot) - uv[x] * sphi.get(x, slot) - pv[x] * su.get(x, slot);
            s2_defect = s2_defect.max((leibniz - expected).abs());
            s2_scale = s2_scale.max(expected.abs());
        }
    }
    Ok(SIdentityReport {
        b_pairing,
        s_pairing,
        s3_defect: (b_pairing - s_pairing).abs(),
        s2_defect,
        s2_scale,
    })
}

/// Vector-valued antisymmetric table `eps^-1 omega_eps(y) y / |y|` with transforms.
#[derive(Debug, Clone)]
pub struct AdhesionKernel {
    profile: MollifierProfile,
    eps: f64,
    grid: TorusGrid,
    /// Per component, `h^d` times the table.
    weights: Vec<Vec<f64>>,
    transforms: Vec<Vec<Complex64>>,
    spectral: Spectral,
}

impl AdhesionKernel {
    pub fn new(profile: &MollifierProfile, eps: f64, grid: &TorusGrid) -> Result<Self> {
        // Shares the admissibility checks (dimension, eps, wrap) of J_eps.
        build_kernel(profile, eps, 0.0, grid)?;
        let hd = grid.cell_volume();
        let support = eps * profile.support_radius();
        let mut weights = vec![vec![0.0; grid.len()]; grid.dim()];
        for idx in 1..grid.len() {
            let y = grid.offset_vector(idx);
            let r = (y[0] * y[0] + y[1] * y[1]).sqrt();
            if r <= support {
                let base = hd * profile.scaled(r, eps) / (eps * r);
                for (axis, w) in weights.iter_mut().enumerate() {
                    w[idx] = base * y[axis];
                }
            }
        }
        if grid.dim() == 1 {
            // The table jumps at the origin, so plain lattice sums carry an
            // O(h^2) kink error. The Euler-Maclaurin end correction moves
            // w(0+)/12 onto the nearest offsets and restores O(h^4).
            let w0 = hd * profile.scaled(0.0, eps) / eps;
            let last = grid.len() - 1;
            weights[0][1] += w0 / 12.0;
            weights[0][last] -= w0 / 12.0;
        }
        let spectral = Spectral::new(*grid);
        let transforms = weights.iter().map(|w| spectral.forward_complex(w)).collect();
        Ok(Self {
            profile: *profile,
            eps,
            grid: *grid,
            weights,
            transforms,
            spectral,
        })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn profile(&self) -> &MollifierProfile {
        &self.profile
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    /// `h^d` times the table, per component.
    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }
}

/// `K_eps[u](x) = eps^-1 ∫ u(x - y) omega_eps(y) y/|y| dy`, one field per axis.
pub fn apply_k(u: &TorusField, kernel: &AdhesionKernel) -> Result<Vec<TorusField>> {
    check_grid(&kernel.grid, u.grid())?;
    let uhat = kernel.spectral.forward_complex(&shifted_values(u));
    Ok(kernel
        .transforms
        .iter()
        .map(|t| {
            let mut data: Vec<Complex64> = uhat.iter().zip(t).map(|(a, b)| a * b).collect();
            data[0] = Complex64::new(0.0, 0.0);
            TorusField::from_raw(*u.grid(), kernel.spectral.inverse_real(data))
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    B,
    K,
}

/// Result of fitting a nonlocal operator against its local limit on `sin(2 pi x / L)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub op: OpKind,
    pub alpha: f64,
    /// Strictly decreasing.
    pub eps: Vec<f64>,
    /// `‖op_eps[phi] - c_eff L[phi]‖_inf` at the extrapolated `c_eff`.
    pub errors: Vec<f64>,
    /// Least-squares coefficient at each eps.
    pub c_per_eps: Vec<f64>,
    /// Richardson-extrapolated limit coefficient from the two smallest eps.
    pub c_eff: f64,
    pub order: f64,
    pub order_constant: f64,
    /// `W / (2d)` for B, `C_omega / d` for K.
    pub reference: f64,
    pub ratio: f64,
    /// For K: the Taylor-remainder constant `C` of `e(eps) <= C eps`.
    pub linear_bound: Option<f64>,
}

impl CalibrationReport {
    pub fn csv_header() -> &'static str {
        "eps,error,c_eff,order"
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::csv_header());
        for (e, err) in self.eps.iter().zip(&self.errors) {
            out.push_str(&format!("{e},{err},{},{}\n", self.c_eff, self.order));
        }
        out
    }

    /// Whether every error satisfies the linear Taylor bound.
    pub fn linear_bound_holds(&self) -> Option<bool> {
        self.linear_bound
            .map(|c| self.eps.iter().zip(&self.errors).all(|(&e, &err)| err <= c * e))
    }
}

/// Relative least-squares residual above which the calibration field is rejected.
pub const FIT_RESIDUAL_LIMIT: f64 = 1e-2;

/// Quadrature values of the local limits: `B_eps -> -c_b Δ` and `K_eps -> c_k ∇`.
pub fn limit_coefficients(profile: &MollifierProfile, alpha: f64) -> Result<(f64, f64)> {
    let table = moments(profile, alpha)?;
    let c_b = table.diag_moment / 2.0;
    // x - y convention: K_eps[u] ≈ -(1/d) ∫ omega |z| ∇u
    let c_k = -table.c_omega / profile.dim() as f64;
    Ok((c_b, c_k))
}

/// Calibrates the local coefficient of `B_eps` (against `-Δ`) or `K_eps`
/// (against `∇`, first component) on the lowest sine mode along the first axis.
pub fn calibrate_limit_constant(
    op: OpKind,
    profile: &MollifierProfile,
    alpha: f64,
    eps_list: &[f64],
    grid: &TorusGrid,
) -> Result<CalibrationReport> {
    if eps_list.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 eps values, got {}", eps_list.len())));
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Fit("eps list must be strictly decreasing".into()));
    }
    if op == OpKind::K && alpha != 0.0 {
        return Err(Error::InvalidParameter("the adhesion kernel has no singular exponent; use alpha = 0".into()));
    }
    let k = 2.0 * PI / grid.length();
    let phi = TorusField::from_fn(*grid, |x| (k * x[0]).sin());
    // Local operator applied analytically.
    let target = match op {
        OpKind::B => phi.map(|v| k * k * v),
        OpKind::K => TorusField::from_fn(*grid, |x| k * (k * x[0]).cos()),
    };
    let tt = target.inner(&target)?;

    let evaluated: Vec<TorusField> = eps_list
        .par_iter()
        .map(|&eps| -> Result<TorusField> {
            match op {
                OpKind::B => apply_b(&phi, &build_kernel(profile, eps, alpha, grid)?),
                OpKind::K => Ok(apply_k(&phi, &AdhesionKernel::new(profile, eps, grid)?)?.swap_remove(0)),
            }
        })
        .collect::<Result<_>>()?;

    let mut c_per_eps = Vec::with_capacity(eps_list.len());
    for (f, &eps) in evaluated.iter().zip(eps_list) {
        let c = f.inner(&target)? / tt;
        let resid = f.zip_map(&target, |a, b| a - c * b)?.norm_l2();
        if resid > FIT_RESIDUAL_LIMIT * f.norm_l2().max(f64::MIN_POSITIVE) {
            return Err(Error::Fit(format!("relative residual {resid:e} at eps = {eps} (field not smooth enough)")));
        }
        c_per_eps.push(c);
    }
    let m = eps_list.len();
    let r2 = (eps_list[m - 2] / eps_list[m - 1]).powi(2);
    let c_eff = (r2 * c_per_eps[m - 1] - c_per_eps[m - 2]) / (r2 - 1.0);
    let errors: Vec<f64> = evaluated
        .iter()
        .map(|f| f.zip_map(&target, |a, b| a - c_eff * b).map(|d| d.norm_inf()))
        .collect::<Result<_>>()?;
    let (order, order_constant) = fit_rate(eps_list, &errors)?;

    let table = moments(profile, alpha)?;
    let (reference, linear_bound) = match op {
        OpKind::B => (table.diag_moment / 2.0, None),
        OpKind::K => {
            // |R_eps| <= eps^-1 ∫ 1/2 |y|^2 ‖D^2 phi‖ omega_eps = (M2/2) ‖D^2 phi‖ eps.
            let m2 = profile.radial_moment(2.0, crate::kernels::MOMENT_TOL)?;
            (table.c_omega / profile.dim() as f64, Some(0.5 * m2 * k * k))
        }
    };
    Ok(CalibrationReport {
        op,
        alpha,
        eps: eps_list.to_vec(),
        errors,
        c_per_eps,
        c_eff,
        order,
        order_constant,
        reference,
        ratio: c_eff / reference,
        linear_bound,
    })
}

/// Sup over offsets of the `L^2` norm of the difference-quotient defect.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceQuotientReport {
    pub eps: f64,
    pub per_offset: Vec<f64>,
    pub max_defect: f64,
}

/// `max_y ‖(u(x - eps y) - u(x)) / (eps |y|) + ∇u(x)·y/|y|‖_{L^2}` with the
/// shift and the gradient applied exactly to the trigonometric interpolant.
pub fn difference_quotient_check(u: &TorusField, eps: f64, y_offsets: &[[f64; 2]]) -> Result<DifferenceQuotientReport> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    let grid = *u.grid();
    let spectral = Spectral::new(grid);
    let uhat = spectral.forward_complex(u.values());
    let nyquist = |idx: usize| {
        let m = grid.multi_index(idx);
        m[0] == grid.n() / 2 || (grid.dim() == 2 && m[1] == grid.n() / 2)
    };
    let mut per_offset = Vec::with_capacity(y_offsets.len());
    for y in y_offsets {
        let norm = (y[0] * y[0] + y[1] * y[1]).sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidParameter("zero offset in difference-quotient check".into()));
        }
        let dir = [y[0] / norm, y[1] / norm];
        let data: Vec<Complex64> = uhat
            .iter()
            .enumerate()
            .map(|(idx, &c)| {
                if nyquist(idx) {
                    return Complex64::new(0.0, 0.0);
                }
                let kv = grid.wave_vector(idx);
                let kdot_shift = eps * (kv[0] * y[0] + kv[1] * y[1]);
                let shift = Complex64::new(0.0, -kdot_shift).exp() - 1.0;
                let dq = shift / (eps * norm);
                let grad = Complex64::new(0.0, kv[0] * dir[0] + kv[1] * dir[1]);
                c * (dq + grad)
            })
            .collect();
        let defect = TorusField::from_raw(grid, spectral.inverse_real(data));
        per_offset.push(defect.norm_l2());
    }
    let max_defect = per_offset.iter().cloned().fold(0.0, f64::max);
    Ok(DifferenceQuotientReport {
        eps,
        per_offset,
        max_defect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::ProfileKind;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(grid: TorusGrid, seed: u64) -> TorusField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        TorusField::new(grid, (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn kernel(dim: usize, n: usize, eps: f64, alpha: f64) -> KernelSpec {
        let g = TorusGrid::new(dim, n, 1.0).unwrap();
        let p = MollifierProfile::compact_bump(dim).unwrap();
        build_kernel(&p, eps, alpha, &g).unwrap()
    }

    /// Direct O(n^2d) `(J*1) u - J*u` from the profile, without the table.
    fn direct_b(u: &TorusField, k: &KernelSpec) -> Vec<f64> {
        let g = *u.grid();
        let w = k.weights();
        let v = u.values();
        (0..g.len())
            .map(|x| (0..g.len()).map(|o| w[o] * (v[x] - v[g.sub_index(x, o)])).sum())
            .collect()
    }

    #[test]
    fn b_annihilates_constants_exactly() {
        let k = kernel(1, 64, 0.1, 0.5);
        let c = TorusField::constant(*k.grid(), 0.37);
        assert!(apply_b(&c, &k).unwrap().values().iter().all(|&v| v == 0.0));
        let k2 = kernel(2, 32, 0.2, 0.0);
        let c2 = TorusField::constant(*k2.grid(), -1.5);
        assert!(apply_b(&c2, &k2).unwrap().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn b_matches_direct_sum() {
        for (dim, n, eps, alpha) in [(1, 128, 0.1, 0.0), (1, 128, 0.1, 0.5), (2, 32, 0.2, 0.5)] {
            let k = kernel(dim, n, eps, alpha);
            let u = random_field(*k.grid(), 7);
            let fast = apply_b(&u, &k).unwrap();
            let slow = direct_b(&u, &k);
            let scale = slow.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (a, b) in fast.values().iter().zip(&slow) {
                assert!((a - b).abs() <= 1e-10 * scale);
            }
        }
    }

    #[test]
    fn b_eigenvalue_on_fourier_mode() {
        let k = kernel(1, 64, 0.1, 0.0);
        let g = *k.grid();
        let m = 3.0;
        let u = TorusField::from_fn(g, |x| (2.0 * PI * m * x[0]).cos());
        let bu = apply_b(&u, &k).unwrap();
        // eigenvalue by direct summation sum_j w_j (1 - cos(k x_j))
        let lam: f64 = (0..g.len())
            .map(|o| k.weights()[o] * (1.0 - (2.0 * PI * m * g.offset_vector(o)[0]).cos()))
            .sum();
        for (a, b) in bu.values().iter().zip(u.values()) {
            assert!((a - lam * b).abs() < 1e-10 * lam);
        }
    }

    #[test]
    fn s_identities_on_random_fields() {
        for (dim, n, eps) in [(1, 64, 0.1), (2, 32, 0.2)] {
            for alpha in [0.0, 0.5] {
                let k = kernel(dim, n, eps, alpha);
                let u = random_field(*k.grid(), 1);
                let phi = random_field(*k.grid(), 2);
                let r = check_s_identities(&u, &phi, &k).unwrap();
                assert!(r.s3_defect <= 1e-12 * r.b_pairing.abs().max(1.0), "{r:?}");
                assert!(r.s2_defect <= 1e-13 * r.s2_scale.max(1.0), "{r:?}");
            }
        }
    }

    #[test]
    fn s_of_constant_vanishes_and_guard_trips() {
        let k = kernel(1, 64, 0.1, 0.0);
        let c = TorusField::constant(*k.grid(), 2.0);
        assert_eq!(apply_s(&c, &k).unwrap().max_abs(), 0.0);
        let r = check_s_identities(&c, &random_field(*k.grid(), 3), &k).unwrap();
        assert_eq!(r.s3_defect, 0.0);
        assert_eq!(r.b_pairing, 0.0);
        let big = kernel(1, 1024, 0.1, 0.0);
        let u = TorusField::zeros(*big.grid());
        assert!(matches!(apply_s(&u, &big), Err(Error::MemoryGuard(_))));
    }

    #[test]
    fn k_table_antisymmetric_and_zero_on_constants() {
        let g = TorusGrid::new(2, 32, 1.0).unwrap();
        let p = MollifierProfile::compact_bump(2).unwrap();
        let ak = AdhesionKernel::new(&p, 0.2, &g).unwrap();
        for w in ak.weights() {
            for idx in 0..g.len() {
                assert_eq!(w[idx], -w[g.sub_index(0, idx)]);
            }
        }
        let c = TorusField::constant(g, 0.4);
        for comp in apply_k(&c, &ak).unwrap() {
            assert!(comp.values().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn k_matches_direct_sum() {
        let g = TorusGrid::new(1, 128, 1.0).unwrap();
        let p = MollifierProfile::compact_bump(1).unwrap();
        let ak = AdhesionKernel::new(&p, 0.1, &g).unwrap();
        let u = random_field(g, 11);
        let fast = apply_k(&u, &ak).unwrap();
        let h = g.spacing();
        let v = u.values();
        let mut scale: f64 = 0.0;
        let slow: Vec<f64> = (0..g.len())
            .map(|x| {
                (1..g.len())
                    .map(|o| {
                        let y = g.offset_vector(o)[0];
                        let mut val = h * p.scaled(y.abs(), 0.1) * y.signum() / 0.1;
                        if o == 1 || o == g.len() - 1 {
                            val += y.signum() * h * p.scaled(0.0, 0.1) / 0.1 / 12.0;
                        }
                        val * v[g.sub_index(x, o)]
                    })
                    .sum()
            })
            .collect();
        for s in &slow {
            scale = scale.max(f64::abs(*s));
        }
        for (a, b) in fast[0].values().iter().zip(&slow) {
            assert!((a - b).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn calibrate_b_in_one_dimension() {
        let g = TorusGrid::new(1, 8192, 2.0 * PI).unwrap();
        let p = MollifierProfile::compact_bump(1).unwrap();
        let r = calibrate_limit_constant(OpKind::B, &p, 0.0, &[0.2, 0.1, 0.05, 0.025], &g).unwrap();
        assert!((r.ratio - 1.0).abs() < 1e-3, "{r:?}");
        assert!((r.order - 2.0).abs() <= 0.3, "{r:?}");
        assert_eq!(r.to_csv().lines().count(), 5);
    }

    #[test]
    fn calibrate_k_in_one_dimension() {
        let g = TorusGrid::new(1, 8192, 2.0 * PI).unwrap();
        let p = MollifierProfile::compact_bump(1).unwrap();
        let r = calibrate_limit_constant(OpKind::K, &p, 0.0, &[0.2, 0.1, 0.05, 0.025], &g).unwrap();
        // x - y convention: K_eps[psi] -> -C_omega psi' in 1D.
        assert!((r.ratio + 1.0).abs() < 1e-3, "{r:?}");
        assert!((r.order - 2.0).abs() <= 0.3, "{r:?}");
        assert_eq!(r.linear_bound_holds(), Some(true));
    }

    #[test]
    fn calibrate_rejects_bad_ladders() {
        let g = TorusGrid::new(1, 256, 2.0 * PI).unwrap();
        let p = MollifierProfile::new(ProfileKind::CompactBump, 1).unwrap();
        assert!(calibrate_limit_constant(OpKind::B, &p, 0.0, &[0.2, 0.1], &g).is_err());
        assert!(calibrate_limit_constant(OpKind::B, &p, 0.0, &[0.1, 0.2, 0.05], &g).is_err());
    }

    #[test]
    fn difference_quotients() {
        let g = TorusGrid::new(1, 256, 2.0 * PI).unwrap();
        let c = TorusField::constant(g, 3.0);
        let r = difference_quotient_check(&c, 0.1, &[[1.0, 0.0], [-0.5, 0.0]]).unwrap();
        assert!(r.max_defect < 1e-13);
        let u = TorusField::from_fn(g, |x| x[0].sin());
        let offs = [[1.0, 0.0], [-0.7, 0.0]];
        let a = difference_quotient_check(&u, 0.1, &offs).unwrap();
        let b = difference_quotient_check(&u, 0.05, &offs).unwrap();
        assert!(b.max_defect < a.max_defect);
        // Taylor remainder of a unit-frequency sine: |y| eps / 2 * ‖sin‖.
        let bound = 0.5 * 0.1 * u.norm_l2();
        assert!(a.max_defect <= bound * 1.01);
        assert!((b.max_defect / a.max_defect - 0.5).abs() < 0.02);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn b_is_zero_mean_and_nonnegative(seed in any::<u64>(), alpha in 0.0f64..0.9) {
            let k = kernel(1, 64, 0.1, alpha);
            let u = random_field(*k.grid(), seed);
            let bu = apply_b(&u, &k).unwrap();
            let scale = bu.norm_inf() * 64.0;
            prop_assert!(bu.sum().abs() <= 1e-12 * scale.max(1.0));
            prop_assert!(bu.inner(&u).unwrap() >= 0.0);
        }

        #[test]
        fn s_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let k = kernel(1, 64, 0.1, 0.3);
            let u = random_field(*k.grid(), seed);
            let v = random_field(*k.grid(), seed.wrapping_add(1));
            let comb = u.zip_map(&v, |x, y| a * x + b * y).unwrap();
            let lhs = apply_s(&comb, &k).unwrap();
            let su = apply_s(&u, &k).unwrap();
            let sv = apply_s(&v, &k).unwrap();
            let scale = lhs.max_abs().max(1.0);
            for i in 0..lhs.values().len() {
                let rhs = a * su.values()[i] + b * sv.values()[i];
                prop_assert!((lhs.values()[i] - rhs).abs() <= 1e-13 * scale);
            }
        }
    }
}
