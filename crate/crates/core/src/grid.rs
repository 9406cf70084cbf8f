//! Uniform periodic grids on `[0, L)^d`, sampled fields, spectral transforms
//! and the finite-difference operators used by the conservative schemes.
//!
//! Fields are stored row-major: in 2D the sample at `(i0, i1)` lives at
//! `i0 * n + i1`, and axis 0 is the slow index. Face-centred quantities
//! (fluxes) use the same storage, with entry `j` along an axis holding the
//! value on the face between nodes `j` and `j + 1`.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Uniform grid on the flat torus `[0, L)^d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorusGrid {
    dim: usize,
    n: usize,
    length: f64,
}

impl TorusGrid {
    pub const MIN_POINTS: usize = 8;

    pub fn new(dim: usize, n: usize, length: f64) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGrid(format!("dimension must be 1 or 2, got {dim}")));
        }
        if n < Self::MIN_POINTS || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points per dimension must be a power of two >= {}, got {n}",
                Self::MIN_POINTS
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!("period length must be positive, got {length}")));
        }
        Ok(Self { dim, n, length })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points per dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    /// `h^d`, the quadrature weight of one node.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// `L^d`.
    pub fn volume(&self) -> f64 {
        self.length.powi(self.dim as i32)
    }

    /// Total number of nodes, `n^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Per-axis integer indices of a flat node index.
    pub fn multi_index(&self, idx: usize) -> [usize; 2] {
        match self.dim {
            1 => [idx, 0],
            _ => [idx / self.n, idx % self.n],
        }
    }

    pub fn flat_index(&self, multi: [usize; 2]) -> usize {
        match self.dim {
            1 => multi[0],
            _ => multi[0] * self.n + multi[1],
        }
    }

    /// Coordinates `x_j = j h` of a node. Unused axes are zero.
    pub fn coords(&self, idx: usize) -> [f64; 2] {
        let h = self.spacing();
        let m = self.multi_index(idx);
        match self.dim {
            1 => [m[0] as f64 * h, 0.0],
            _ => [m[0] as f64 * h, m[1] as f64 * h],
        }
    }

    /// Signed minimal-image offset of a per-axis index: `j` for `j <= n/2`,
    /// `j - n` otherwise. Also the signed Fourier mode number of a DFT bin.
    pub fn signed(&self, j: usize) -> i64 {
        if j <= self.n / 2 {
            j as i64
        } else {
            j as i64 - self.n as i64
        }
    }

    /// Signed per-axis offsets of a flat index (minimal image).
    pub fn signed_offset(&self, idx: usize) -> [i64; 2] {
        let m = self.multi_index(idx);
        match self.dim {
            1 => [self.signed(m[0]), 0],
            _ => [self.signed(m[0]), self.signed(m[1])],
        }
    }

    /// Minimal-image displacement vector of a flat offset index.
    pub fn offset_vector(&self, idx: usize) -> [f64; 2] {
        let h = self.spacing();
        let s = self.signed_offset(idx);
        [s[0] as f64 * h, s[1] as f64 * h]
    }

    /// Flat index of the node shifted by `delta` along `axis`, with wrap.
    #[inline]
    pub fn shifted(&self, idx: usize, axis: usize, delta: isize) -> usize {
        let n = self.n as isize;
        match (self.dim, axis) {
            (1, _) => (idx as isize + delta).rem_euclid(n) as usize,
            (_, 0) => {
                let (i0, i1) = (idx / self.n, idx % self.n);
                ((i0 as isize + delta).rem_euclid(n) as usize) * self.n + i1
            }
            _ => {
                let (i0, i1) = (idx / self.n, idx % self.n);
                i0 * self.n + (i1 as isize + delta).rem_euclid(n) as usize
            }
        }
    }

    /// Flat index of `a - b` (node `a` translated by minus the offset `b`).
    pub fn sub_index(&self, a: usize, b: usize) -> usize {
        let ma = self.multi_index(a);
        let mb = self.multi_index(b);
        let n = self.n;
        self.flat_index([(ma[0] + n - mb[0]) % n, (ma[1] + n - mb[1]) % n])
    }

    /// Physical wave vector `2 pi m / L` of a DFT bin.
    pub fn wave_vector(&self, idx: usize) -> [f64; 2] {
        let s = self.signed_offset(idx);
        let c = 2.0 * PI / self.length;
        [s[0] as f64 * c, s[1] as f64 * c]
    }

    /// Eigenvalue of `-Δ` for the bin: spectral (`|k|^2`) or 3/5-point stencil.
    pub fn neg_laplacian_symbol(&self, idx: usize, scheme: LaplacianScheme) -> f64 {
        match scheme {
            LaplacianScheme::Spectral => {
                let k = self.wave_vector(idx);
                k[0] * k[0] + k[1] * k[1]
            }
            LaplacianScheme::Stencil => self.stencil_symbol(idx),
        }
    }

    /// Eigenvalue of the stencil `-Δ_h`: `sum_i (4/h^2) sin^2(pi m_i / n)`.
    pub fn stencil_symbol(&self, idx: usize) -> f64 {
        let h = self.spacing();
        let s = self.signed_offset(idx);
        (0..self.dim)
            .map(|a| {
                let v = (PI * s[a] as f64 / self.n as f64).sin();
                4.0 * v * v / (h * h)
            })
            .sum()
    }
}

/// Real samples on a [`TorusGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct TorusField {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl TorusField {
    pub fn new(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidField(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidField(format!("non-finite value at index {i}")));
        }
        Ok(Self { grid, values })
    }

    /// Builds a field without the finiteness check. Callers own the invariant.
    pub(crate) fn from_raw(grid: TorusGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn zeros(grid: TorusGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: TorusGrid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn from_fn(grid: TorusGrid, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.coords(i))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn ensure_same_grid(&self, other: &TorusField) -> Result<()> {
        check_grid(&self.grid, &other.grid)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &TorusField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.ensure_same_grid(other)?;
        Ok(Self::from_raw(
            self.grid,
            self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        ))
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.values.len() as f64
    }

    /// Discrete integral `h^d sum_j f_j`.
    pub fn integral(&self) -> f64 {
        self.sum() * self.grid.cell_volume()
    }

    /// Discrete `L^2` inner product.
    pub fn inner(&self, other: &TorusField) -> Result<f64> {
        self.ensure_same_grid(other)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>() * self.grid.cell_volume())
    }

    pub fn norm_l2(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

pub(crate) fn check_grid(a: &TorusGrid, b: &TorusGrid) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::GridMismatch(format!(
            "d={} n={} L={} vs d={} n={} L={}",
            a.dim, a.n, a.length, b.dim, b.n, b.length
        )))
    }
}

/// Which discrete Laplacian to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LaplacianScheme {
    /// 3-point (1D) / 5-point (2D) stencil.
    #[default]
    Stencil,
    Spectral,
}

/// Second-order central-difference gradient at the nodes.
pub fn gradient(f: &TorusField) -> Vec<TorusField> {
    let g = *f.grid();
    let inv = 1.0 / (2.0 * g.spacing());
    (0..g.dim())
        .map(|axis| {
            let v = f.values();
            let out = (0..g.len())
                .map(|i| (v[g.shifted(i, axis, 1)] - v[g.shifted(i, axis, -1)]) * inv)
                .collect();
            TorusField::from_raw(g, out)
        })
        .collect()
}

/// One-sided difference `(f_{j+1} - f_j) / h` on the faces `j + 1/2`.
pub fn face_gradient(f: &TorusField) -> Vec<TorusField> {
    let g = *f.grid();
    let inv = 1.0 / g.spacing();
    (0..g.dim())
        .map(|axis| {
            let v = f.values();
            let out = (0..g.len()).map(|i| (v[g.shifted(i, axis, 1)] - v[i]) * inv).collect();
            TorusField::from_raw(g, out)
        })
        .collect()
}

/// Discrete divergence of a face-centred flux: `sum_i (F_{j+1/2} - F_{j-1/2}) / h`.
/// The grid sum of the result telescopes to zero.
pub fn divergence_flux(flux: &[TorusField]) -> Result<TorusField> {
    let first = flux
        .first()
        .ok_or_else(|| Error::GridMismatch("empty flux".into()))?;
    let g = *first.grid();
    if flux.len() != g.dim() {
        return Err(Error::GridMismatch(format!(
            "flux has {} components on a {}-dimensional grid",
            flux.len(),
            g.dim()
        )));
    }
    for comp in flux {
        check_grid(&g, comp.grid())?;
    }
    let inv = 1.0 / g.spacing();
    let mut out = vec![0.0; g.len()];
    for (axis, comp) in flux.iter().enumerate() {
        let v = comp.values();
        for (i, o) in out.iter_mut().enumerate() {
            *o += (v[i] - v[g.shifted(i, axis, -1)]) * inv;
        }
    }
    Ok(TorusField::from_raw(g, out))
}

pub fn laplacian(f: &TorusField, scheme: LaplacianScheme) -> TorusField {
    let g = *f.grid();
    match scheme {
        LaplacianScheme::Stencil => {
            let inv = 1.0 / (g.spacing() * g.spacing());
            let v = f.values();
            let out = (0..g.len())
                .map(|i| {
                    (0..g.dim())
                        .map(|a| {
                            let p = v[g.shifted(i, a, 1)];
                            let m = v[g.shifted(i, a, -1)];
                            ((p - v[i]) - (v[i] - m)) * inv
                        })
                        .sum()
                })
                .collect();
            TorusField::from_raw(g, out)
        }
        LaplacianScheme::Spectral => {
            let spectral = Spectral::new(g);
            spectral.apply_real_symbol(f, |idx| -g.neg_laplacian_symbol(idx, LaplacianScheme::Spectral))
        }
    }
}

/// Unnormalised DFT coefficients of a field.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    grid: TorusGrid,
    data: Vec<Complex64>,
}

impl Spectrum {
    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.data
    }

    pub fn coefficients_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }
}

/// FFT plans for one grid. Plans are shared and immutable; every call
/// allocates its own scratch, so one engine can serve concurrent callers.
#[derive(Clone)]
pub struct Spectral {
    grid: TorusGrid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("grid", &self.grid).finish()
    }
}

impl Spectral {
    pub fn new(grid: TorusGrid) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            grid,
            forward: planner.plan_fft_forward(grid.n()),
            inverse: planner.plan_fft_inverse(grid.n()),
        }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    fn transform(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let n = self.grid.n();
        let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        fft.process_with_scratch(data, &mut scratch);
        if self.grid.dim() == 2 {
            let mut t = vec![Complex64::default(); data.len()];
            transpose(data, &mut t, n);
            fft.process_with_scratch(&mut t, &mut scratch);
            transpose(&t, data, n);
        }
    }

    pub fn forward_complex(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut data, &self.forward);
        data
    }

    /// Inverse transform returning the real part, normalised by `n^d`.
    pub fn inverse_real(&self, mut data: Vec<Complex64>) -> Vec<f64> {
        self.transform(&mut data, &self.inverse);
        let scale = 1.0 / self.grid.len() as f64;
        data.into_iter().map(|c| c.re * scale).collect()
    }

    pub fn forward(&self, f: &TorusField) -> Result<Spectrum> {
        check_grid(&self.grid, f.grid())?;
        Ok(Spectrum {
            grid: self.grid,
            data: self.forward_complex(f.values()),
        })
    }

    pub fn inverse(&self, s: &Spectrum) -> Result<TorusField> {
        check_grid(&self.grid, s.grid())?;
        Ok(TorusField::from_raw(self.grid, self.inverse_real(s.data.clone())))
    }

    /// Multiplies the spectrum of `f` by a real symbol indexed by DFT bin.
    pub fn apply_real_symbol(&self, f: &TorusField, symbol: impl Fn(usize) -> f64) -> TorusField {
        let mut data = self.forward_complex(f.values());
        for (i, c) in data.iter_mut().enumerate() {
            *c *= symbol(i);
        }
        TorusField::from_raw(self.grid, self.inverse_real(data))
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in 0..n {
            dst[j * n + i] = src[i * n + j];
        }
    }
}

pub fn forward_transform(f: &TorusField) -> Spectrum {
    Spectral::new(*f.grid())
        .forward(f)
        .expect("engine built for the field's grid")
}

pub fn inverse_transform(s: &Spectrum) -> TorusField {
    Spectral::new(*s.grid())
        .inverse(s)
        .expect("engine built for the spectrum's grid")
}
