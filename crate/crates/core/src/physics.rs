//! Potentials, mobilities, the entropy density and the chemical potential.

use crate::error::{Error, Result};
use crate::grid::{laplacian, LaplacianScheme, TorusField};
use crate::kernels::{check_theta_constraint, KernelSpec};
use crate::nonlocal_ops::apply_b;
use crate::quadrature::integrate;

pub const DEFAULT_DELTA_CUT: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PotentialSpec {
    /// `s ln s + (1-s) ln(1-s) - theta (s - 1/2)^2 + ln 2 + theta/4`, cut off at
    /// `[delta_cut, 1 - delta_cut]` with a C¹ quadratic continuation outside.
    FloryHuggins { theta: f64, delta_cut: f64 },
    /// `s^2 (1-s)^2`.
    SmoothDoubleWell,
}

impl PotentialSpec {
    pub fn flory_huggins(theta: f64, delta_cut: f64) -> Result<Self> {
        if !(theta.is_finite() && theta >= 0.0) {
            return Err(Error::InvalidParameter(format!("theta must be finite and nonnegative, got {theta}")));
        }
        if !(delta_cut > 0.0 && delta_cut <= 1e-4) {
            return Err(Error::InvalidParameter(format!("delta_cut must lie in (0, 1e-4], got {delta_cut}")));
        }
        Ok(PotentialSpec::FloryHuggins { theta, delta_cut })
    }

    pub fn theta(&self) -> Option<f64> {
        match *self {
            PotentialSpec::FloryHuggins { theta, .. } => Some(theta),
            PotentialSpec::SmoothDoubleWell => None,
        }
    }

    /// Additive constant `ln 2 + theta/4`: the entropy part is at least `-ln 2`
    /// and the concave part at least `-theta/4`, so `F >= 0` on `[0, 1]`.
    pub fn k_const(&self) -> f64 {
        match *self {
            PotentialSpec::FloryHuggins { theta, .. } => std::f64::consts::LN_2 + theta / 4.0,
            PotentialSpec::SmoothDoubleWell => 0.0,
        }
    }

    pub fn value(&self, s: f64) -> f64 {
        match *self {
            PotentialSpec::FloryHuggins { theta, delta_cut } => {
                let c = s.clamp(delta_cut, 1.0 - delta_cut);
                let base = fh_value(c, theta) + self.k_const();
                let d = s - c;
                if d == 0.0 {
                    base
                } else {
                    base + fh_prime(c, theta) * d + 0.5 * fh_dprime(c, theta) * d * d
                }
            }
            PotentialSpec::SmoothDoubleWell => s * s * (1.0 - s) * (1.0 - s),
        }
    }

    pub fn prime(&self, s: f64) -> f64 {
        match *self {
            PotentialSpec::FloryHuggins { theta, delta_cut } => {
                let c = s.clamp(delta_cut, 1.0 - delta_cut);
                fh_prime(c, theta) + fh_dprime(c, theta) * (s - c)
            }
            PotentialSpec::SmoothDoubleWell => 2.0 * s * (1.0 - s) * (1.0 - 2.0 * s),
        }
    }

    pub fn dprime(&self, s: f64) -> f64 {
        match *self {
            PotentialSpec::FloryHuggins { theta, delta_cut } => {
                fh_dprime(s.clamp(delta_cut, 1.0 - delta_cut), theta)
            }
            PotentialSpec::SmoothDoubleWell => 2.0 * (1.0 - 6.0 * s + 6.0 * s * s),
        }
    }

    /// `min F''` over `[0, 1]`.
    pub fn min_dprime(&self) -> f64 {
        match *self {
            PotentialSpec::FloryHuggins { theta, .. } => 4.0 - 2.0 * theta,
            PotentialSpec::SmoothDoubleWell => -1.0,
        }
    }
}

fn fh_value(s: f64, theta: f64) -> f64 {
    s * s.ln() + (1.0 - s) * (1.0 - s).ln() - theta * (s - 0.5) * (s - 0.5)
}

fn fh_prime(s: f64, theta: f64) -> f64 {
    (s / (1.0 - s)).ln() + theta * (1.0 - 2.0 * s)
}

fn fh_dprime(s: f64, theta: f64) -> f64 {
    1.0 / (s * (1.0 - s)) - 2.0 * theta
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MobilitySpec {
    /// `s^k (1-s)^l`, evaluated on `s` clamped to `[0, 1]`.
    Degenerate { k: u32, l: u32 },
    Constant(f64),
}

impl MobilitySpec {
    pub fn degenerate(k: u32, l: u32) -> Result<Self> {
        if k < 1 || l < 1 {
            return Err(Error::InvalidParameter(format!("mobility exponents must be >= 1, got k = {k}, l = {l}")));
        }
        Ok(MobilitySpec::Degenerate { k, l })
    }

    pub fn constant(value: f64) -> Result<Self> {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::InvalidParameter(format!("constant mobility must be positive, got {value}")));
        }
        Ok(MobilitySpec::Constant(value))
    }

    pub fn value(&self, s: f64) -> f64 {
        match *self {
            MobilitySpec::Degenerate { k, l } => {
                let c = s.clamp(0.0, 1.0);
                c.powi(k as i32) * (1.0 - c).powi(l as i32)
            }
            MobilitySpec::Constant(m) => m,
        }
    }

    /// `max m` over `[0, 1]`: `k^k l^l / (k+l)^(k+l)` in the degenerate case.
    pub fn max_value(&self) -> f64 {
        match *self {
            MobilitySpec::Degenerate { k, l } => {
                let s = k as f64 / (k + l) as f64;
                self.value(s)
            }
            MobilitySpec::Constant(m) => m,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self, MobilitySpec::Degenerate { .. })
    }
}

/// `m(s) F''(s)` for `m = s(1-s)` without cancellation: `1 - 2 theta s(1-s)`.
pub fn m_times_fpp(s: f64, theta: f64) -> f64 {
    let c = s.clamp(0.0, 1.0);
    1.0 - 2.0 * theta * c * (1.0 - c)
}

/// Convex entropy density with `phi'' = 1/m` and `phi(1/2) = phi'(1/2) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub enum EntropyDensity {
    /// `s ln s + (1-s) ln(1-s) + ln 2`.
    LogMobility { delta_cut: f64 },
    /// `(s - 1/2)^2 / (2 m)`.
    Constant { m: f64 },
    /// Tabulated in logit variables `t = ln(s/(1-s))` on a uniform grid.
    Tabulated(EntropyTable),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntropyTable {
    k: u32,
    l: u32,
    delta_cut: f64,
    t0: f64,
    dt: f64,
    phi: Vec<f64>,
    dphi_dt: Vec<f64>,
}

const TABLE_NODES: usize = 8001;

impl EntropyTable {
    fn new(k: u32, l: u32, delta_cut: f64) -> Result<Self> {
        let tmax = ((1.0 - delta_cut) / delta_cut).ln();
        let dt = 2.0 * tmax / (TABLE_NODES - 1) as f64;
        let nodes: Vec<f64> = (0..TABLE_NODES).map(|i| -tmax + i as f64 * dt).collect();
        let mid = TABLE_NODES / 2;
        let ki = 1 - k as i32;
        let li = 1 - l as i32;
        // d phi'(s(t)) / dt = s(1-s)/m(s)
        let g1 = |t: f64| sigmoid(t).powi(ki) * sigmoid(-t).powi(li);
        let tol = |scale: f64| dt * (1e-12 * scale + 1e-16);
        let mut dphi = vec![0.0; TABLE_NODES];
        for i in mid + 1..TABLE_NODES {
            let (a, b) = (nodes[i - 1], nodes[i]);
            dphi[i] = dphi[i - 1] + integrate(g1, a, b, tol(g1(a).max(g1(b))))?.value;
        }
        for i in (0..mid).rev() {
            let (a, b) = (nodes[i], nodes[i + 1]);
            dphi[i] = dphi[i + 1] - integrate(g1, a, b, tol(g1(a).max(g1(b))))?.value;
        }
        // d phi / dt = phi'(s) s(1-s), with phi' Hermite-interpolated on each panel.
        let mut phi = vec![0.0; TABLE_NODES];
        let panel = |i: usize| -> Result<f64> {
            let (a, b) = (nodes[i], nodes[i + 1]);
            let f = |t: f64| hermite(a, dt, dphi[i], dphi[i + 1], g1(a), g1(b), t) * sigmoid(t) * sigmoid(-t);
            let scale = f(a).abs().max(f(b).abs());
            Ok(integrate(f, a, b, tol(scale))?.value)
        };
        for i in mid + 1..TABLE_NODES {
            phi[i] = phi[i - 1] + panel(i - 1)?;
        }
        for i in (0..mid).rev() {
            phi[i] = phi[i + 1] - panel(i)?;
        }
        let dphi_dt = nodes
            .iter()
            .zip(&dphi)
            .map(|(&t, &d)| d * sigmoid(t) * sigmoid(-t))
            .collect();
        Ok(Self {
            k,
            l,
            delta_cut,
            t0: -tmax,
            dt,
            phi,
            dphi_dt,
        })
    }

    fn eval(&self, s: f64) -> f64 {
        let c = s.clamp(self.delta_cut, 1.0 - self.delta_cut);
        let t = (c / (1.0 - c)).ln();
        let pos = ((t - self.t0) / self.dt).clamp(0.0, (TABLE_NODES - 1) as f64);
        let i = (pos.floor() as usize).min(TABLE_NODES - 2);
        let a = self.t0 + i as f64 * self.dt;
        hermite(a, self.dt, self.phi[i], self.phi[i + 1], self.dphi_dt[i], self.dphi_dt[i + 1], t)
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Cubic Hermite interpolant on `[a, a + h]`.
fn hermite(a: f64, h: f64, y0: f64, y1: f64, d0: f64, d1: f64, t: f64) -> f64 {
    let x = (t - a) / h;
    let x2 = x * x;
    let x3 = x2 * x;
    (2.0 * x3 - 3.0 * x2 + 1.0) * y0
        + (x3 - 2.0 * x2 + x) * h * d0
        + (-2.0 * x3 + 3.0 * x2) * y1
        + (x3 - x2) * h * d1
}

impl EntropyDensity {
    pub fn new(mobility: &MobilitySpec, delta_cut: f64) -> Result<Self> {
        match *mobility {
            MobilitySpec::Degenerate { k: 1, l: 1 } => Ok(EntropyDensity::LogMobility { delta_cut }),
            MobilitySpec::Degenerate { k, l } => Ok(EntropyDensity::Tabulated(EntropyTable::new(k, l, delta_cut)?)),
            MobilitySpec::Constant(m) => Ok(EntropyDensity::Constant { m }),
        }
    }

    pub fn value(&self, s: f64) -> f64 {
        match self {
            EntropyDensity::LogMobility { delta_cut } => {
                let c = s.clamp(*delta_cut, 1.0 - *delta_cut);
                c * c.ln() + (1.0 - c) * (1.0 - c).ln() + std::f64::consts::LN_2
            }
            EntropyDensity::Constant { m } => (s - 0.5) * (s - 0.5) / (2.0 * m),
            EntropyDensity::Tabulated(t) => t.eval(s),
        }
    }

    /// Mobility exponents of a tabulated density.
    pub fn exponents(&self) -> Option<(u32, u32)> {
        match self {
            EntropyDensity::Tabulated(t) => Some((t.k, t.l)),
            _ => None,
        }
    }
}

/// Entropy density for a given mobility.
pub fn entropy_density(s: f64, mobility: &MobilitySpec, delta_cut: f64) -> Result<f64> {
    Ok(EntropyDensity::new(mobility, delta_cut)?.value(s))
}

/// Interaction term in the chemical potential.
#[derive(Debug, Clone, Copy)]
pub enum Interaction<'a> {
    Nonlocal(&'a KernelSpec),
    Local { c_b: f64, scheme: LaplacianScheme },
}

/// `B_eps[u] + F'(u)` or `-c_B Δu + F'(u)`.
pub fn chemical_potential(u: &TorusField, interaction: Interaction<'_>, potential: &PotentialSpec) -> Result<TorusField> {
    let inter = match interaction {
        Interaction::Nonlocal(kernel) => {
            if let Some(theta) = potential.theta() {
                if !check_theta_constraint(theta, kernel) {
                    return Err(Error::ThetaConstraint {
                        two_theta: 2.0 * theta,
                        conv_one: kernel.conv_one(),
                    });
                }
            }
            apply_b(u, kernel)?
        }
        Interaction::Local { c_b, scheme } => laplacian(u, scheme).map(|v| -c_b * v),
    };
    let mut out = inter;
    for (o, &s) in out.values_mut().iter_mut().zip(u.values()) {
        *o += potential.prime(s);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fh(theta: f64) -> PotentialSpec {
        PotentialSpec::flory_huggins(theta, DEFAULT_DELTA_CUT).unwrap()
    }

    #[test]
    fn potential_examples() {
        assert!((fh(2.0).value(0.5) - 0.5).abs() < 1e-15);
        assert!((fh(1.0).dprime(0.5) - 2.0).abs() < 1e-15);
        // 30-digit reference: 0.505812035941136959
        assert!((fh(2.0).value(0.25) - 0.505_812_035_941_137).abs() < 1e-14);
        assert_eq!(fh(2.0).prime(0.5), 0.0);
    }

    #[test]
    fn cutoff_keeps_values_finite_and_c1() {
        let p = fh(2.0);
        for s in [-1.0, -1e-3, 0.0, 1.0, 1.5] {
            assert!(p.value(s).is_finite() && p.prime(s).is_finite() && p.dprime(s).is_finite());
        }
        let d = DEFAULT_DELTA_CUT;
        let below = p.prime(d - 1e-12);
        let at = p.prime(d);
        assert!((below - at).abs() < 1e-3 * at.abs());
    }

    #[test]
    fn smooth_well_values() {
        let p = PotentialSpec::SmoothDoubleWell;
        assert_eq!(p.value(0.0), 0.0);
        assert_eq!(p.value(1.0), 0.0);
        assert_eq!(p.dprime(0.5), -1.0);
        assert!((p.prime(0.3) - 2.0 * 0.3 * 0.7 * 0.4).abs() < 1e-15);
    }

    #[test]
    fn mobility_examples() {
        let m = MobilitySpec::degenerate(1, 1).unwrap();
        assert_eq!(m.value(0.0), 0.0);
        assert_eq!(m.value(1.0), 0.0);
        assert_eq!(m_times_fpp(0.0, 2.0), 1.0);
        assert_eq!(m_times_fpp(1.0, 2.0), 1.0);
        assert_eq!(m.value(0.5), 0.25);
        assert_eq!(m_times_fpp(0.5, 2.0), 0.0);
        let m21 = MobilitySpec::degenerate(2, 1).unwrap();
        assert!((m21.value(0.25) - 0.046875).abs() < 1e-15);
        assert!((m21.max_value() - 4.0 / 27.0).abs() < 1e-15);
        assert!(MobilitySpec::degenerate(0, 1).is_err());
        assert!(MobilitySpec::constant(0.0).is_err());
    }

    #[test]
    fn entropy_examples() {
        let m = MobilitySpec::degenerate(1, 1).unwrap();
        let phi = EntropyDensity::new(&m, DEFAULT_DELTA_CUT).unwrap();
        assert_eq!(phi.value(0.5), 0.0);
        // 30-digit reference: 0.368064207168497070
        assert!((phi.value(0.9) - 0.368_064_207_168_497_07).abs() < 1e-14);
        let h = 1e-4;
        let second = (phi.value(0.25 + h) - 2.0 * phi.value(0.25) + phi.value(0.25 - h)) / (h * h);
        assert!((second - 16.0 / 3.0).abs() < 1e-5);
    }

    #[test]
    fn tabulated_entropy_matches_closed_form() {
        let table = EntropyTable::new(1, 1, DEFAULT_DELTA_CUT).unwrap();
        let closed = EntropyDensity::LogMobility {
            delta_cut: DEFAULT_DELTA_CUT,
        };
        for i in 1..1000 {
            let s = i as f64 / 1000.0;
            assert!((table.eval(s) - closed.value(s)).abs() < 1e-9, "s = {s}");
        }
    }

    #[test]
    fn tabulated_entropy_has_inverse_mobility_curvature() {
        let m = MobilitySpec::degenerate(2, 1).unwrap();
        let phi = EntropyDensity::new(&m, DEFAULT_DELTA_CUT).unwrap();
        assert!(phi.value(0.5).abs() < 1e-14);
        let h = 1e-3;
        for s in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let second = (phi.value(s + h) - 2.0 * phi.value(s) + phi.value(s - h)) / (h * h);
            let expect = 1.0 / m.value(s);
            assert!((second - expect).abs() < 1e-4 * expect, "s = {s}: {second} vs {expect}");
        }
    }

    #[test]
    fn constant_mobility_entropy() {
        let m = MobilitySpec::constant(2.0).unwrap();
        let phi = EntropyDensity::new(&m, DEFAULT_DELTA_CUT).unwrap();
        assert!((phi.value(1.5) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn entropy_is_convex_on_fine_grid() {
        for m in [
            MobilitySpec::degenerate(1, 1).unwrap(),
            MobilitySpec::degenerate(2, 1).unwrap(),
            MobilitySpec::degenerate(1, 3).unwrap(),
        ] {
            let phi = EntropyDensity::new(&m, DEFAULT_DELTA_CUT).unwrap();
            let h = 1e-3;
            let mut s = 2e-3;
            while s < 1.0 - 2e-3 {
                let second = phi.value(s + h) - 2.0 * phi.value(s) + phi.value(s - h);
                assert!(second > 0.0, "{m:?} not convex at {s}");
                s += 1e-3;
            }
        }
    }

    proptest! {
        #[test]
        fn fh_prime_is_derivative(s in 0.05f64..0.95, theta in 0.5f64..3.0) {
            let p = fh(theta);
            let h = 1e-6;
            let fd = (p.value(s + h) - p.value(s - h)) / (2.0 * h);
            prop_assert!((fd - p.prime(s)).abs() <= 1e-6 * p.prime(s).abs().max(1.0));
            let fd2 = (p.prime(s + h) - p.prime(s - h)) / (2.0 * h);
            prop_assert!((fd2 - p.dprime(s)).abs() <= 1e-6 * p.dprime(s).abs().max(1.0));
        }

        #[test]
        fn smooth_well_prime_is_derivative(s in -0.5f64..1.5) {
            let p = PotentialSpec::SmoothDoubleWell;
            let h = 1e-6;
            let fd = (p.value(s + h) - p.value(s - h)) / (2.0 * h);
            prop_assert!((fd - p.prime(s)).abs() <= 1e-6 * p.prime(s).abs().max(1.0));
        }

        #[test]
        fn closed_form_m_fpp_matches_product(s in 1e-8f64..(1.0 - 1e-8), theta in 0.0f64..4.0) {
            let m = MobilitySpec::degenerate(1, 1).unwrap();
            let prod = m.value(s) * fh(theta).dprime(s);
            prop_assert!((prod - m_times_fpp(s, theta)).abs() <= 1e-12);
        }

        #[test]
        fn fh_potential_nonnegative(s in 0.0f64..1.0, theta in 0.0f64..4.0) {
            prop_assert!(fh(theta).value(s) >= -1e-14);
        }
    }
}
