//! Periodic-box Fourier machinery.
//!
//! Fields are stored as Fourier-series coefficients on an `nx × ny` grid,
//! laid out row-major with the y index fastest (`coeffs[ix * ny + iy]`).
//! The coefficient convention is `f(x, y) = Σ c(k) exp(i(kx·x + ky·y))`,
//! i.e. the forward transform is normalized by `1 / (nx·ny)`.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};
use std::sync::Arc;

use rand::Rng;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GridError {
    #[error("resolution n{axis} = {n} must be even and at least 4")]
    Resolution { axis: char, n: usize },
    #[error("box side l{axis} = {len} must be positive and finite")]
    Length { axis: char, len: f64 },
}

struct GridInner {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    kx: Vec<f64>,
    ky: Vec<f64>,
    kx_full: Vec<f64>,
    ky_full: Vec<f64>,
    cut_x: i64,
    cut_y: i64,
    fwd_x: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
}

/// Periodic computational box `[0, lx) × [0, ly)` with `nx × ny` modes.
///
/// Cloning is cheap; FFT plans are shared and immutable.
#[derive(Clone)]
pub struct Grid2D {
    inner: Arc<GridInner>,
}

impl fmt::Debug for Grid2D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid2D")
            .field("nx", &self.nx())
            .field("ny", &self.ny())
            .field("lx", &self.lx())
            .field("ly", &self.ly())
            .finish()
    }
}

impl PartialEq for Grid2D {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.nx() == other.nx()
                && self.ny() == other.ny()
                && self.lx() == other.lx()
                && self.ly() == other.ly())
    }
}

/// Signed mode number of storage index `j` on an `n`-point axis.
/// The Nyquist index `n/2` maps to `-n/2`.
pub fn signed_index(j: usize, n: usize) -> i64 {
    if j < n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

/// Storage index of signed mode number `m` on an `n`-point axis.
pub fn storage_index(m: i64, n: usize) -> usize {
    m.rem_euclid(n as i64) as usize
}

fn wavenumbers(n: usize, len: f64, zero_nyquist: bool) -> Vec<f64> {
    (0..n)
        .map(|j| {
            if zero_nyquist && j == n / 2 {
                0.0
            } else {
                2.0 * PI * signed_index(j, n) as f64 / len
            }
        })
        .collect()
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self, GridError> {
        for (axis, n) in [('x', nx), ('y', ny)] {
            if n < 4 || n % 2 != 0 {
                return Err(GridError::Resolution { axis, n });
            }
        }
        for (axis, len) in [('x', lx), ('y', ly)] {
            if !(len.is_finite() && len > 0.0) {
                return Err(GridError::Length { axis, len });
            }
        }
        let mut planner = FftPlanner::new();
        let inner = GridInner {
            nx,
            ny,
            lx,
            ly,
            kx: wavenumbers(nx, lx, true),
            ky: wavenumbers(ny, ly, true),
            kx_full: wavenumbers(nx, lx, false),
            ky_full: wavenumbers(ny, ly, false),
            // largest retained |mode| such that 3·cut < n (2/3 rule)
            cut_x: ((nx - 1) / 3) as i64,
            cut_y: ((ny - 1) / 3) as i64,
            fwd_x: planner.plan_fft_forward(nx),
            inv_x: planner.plan_fft_inverse(nx),
            fwd_y: planner.plan_fft_forward(ny),
            inv_y: planner.plan_fft_inverse(ny),
        };
        Ok(Self { inner: Arc::new(inner) })
    }

    /// Square box of side `2π` — handy for closed-form checks.
    pub fn unit_periodic(n: usize) -> Self {
        Self::new(n, n, 2.0 * PI, 2.0 * PI).expect("valid resolution")
    }

    pub fn nx(&self) -> usize {
        self.inner.nx
    }
    pub fn ny(&self) -> usize {
        self.inner.ny
    }
    pub fn lx(&self) -> f64 {
        self.inner.lx
    }
    pub fn ly(&self) -> f64 {
        self.inner.ly
    }
    pub fn len(&self) -> usize {
        self.inner.nx * self.inner.ny
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn dx(&self) -> f64 {
        self.lx() / self.nx() as f64
    }
    pub fn dy(&self) -> f64 {
        self.ly() / self.ny() as f64
    }
    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dy()
    }
    pub fn area(&self) -> f64 {
        self.lx() * self.ly()
    }

    /// Derivative wavenumbers; the Nyquist entry is zero so the table is
    /// antisymmetric under index negation.
    pub fn kx(&self) -> &[f64] {
        &self.inner.kx
    }
    pub fn ky(&self) -> &[f64] {
        &self.inner.ky
    }

    /// Wavenumbers keeping the Nyquist entry at `-n/2 · 2π/l`; used for
    /// phase shifts where the sign convention matters less than the magnitude.
    pub fn kx_full(&self) -> &[f64] {
        &self.inner.kx_full
    }
    pub fn ky_full(&self) -> &[f64] {
        &self.inner.ky_full
    }

    /// Largest representable |kx| (the Nyquist wavenumber).
    pub fn kx_max(&self) -> f64 {
        PI * self.nx() as f64 / self.lx()
    }
    pub fn ky_max(&self) -> f64 {
        PI * self.ny() as f64 / self.ly()
    }

    /// Largest retained signed mode numbers under the 2/3 rule.
    pub fn dealias_cut(&self) -> (i64, i64) {
        (self.inner.cut_x, self.inner.cut_y)
    }

    pub fn is_retained(&self, ix: usize, iy: usize) -> bool {
        signed_index(ix, self.nx()).abs() <= self.inner.cut_x && signed_index(iy, self.ny()).abs() <= self.inner.cut_y
    }

    pub fn x(&self, ix: usize) -> f64 {
        ix as f64 * self.dx()
    }
    pub fn y(&self, iy: usize) -> f64 {
        iy as f64 * self.dy()
    }

    /// Flat index of the mode `-k` given the flat index of `k`.
    pub fn mirror(&self, idx: usize) -> usize {
        let (nx, ny) = (self.nx(), self.ny());
        let (ix, iy) = (idx / ny, idx % ny);
        ((nx - ix) % nx) * ny + (ny - iy) % ny
    }

    fn fft2(&self, data: &mut [Complex64], inverse: bool) {
        let g = &*self.inner;
        let (fx, fy) = if inverse {
            (&g.inv_x, &g.inv_y)
        } else {
            (&g.fwd_x, &g.fwd_y)
        };
        let (nx, ny) = (g.nx, g.ny);
        let scratch_len = fx.get_inplace_scratch_len().max(fy.get_inplace_scratch_len());
        let mut scratch = vec![ZERO; scratch_len];
        fy.process_with_scratch(data, &mut scratch[..fy.get_inplace_scratch_len()]);
        // x transforms on narrow column blocks gathered into a small buffer
        const B: usize = 8;
        let mut buf = vec![ZERO; B * nx];
        for c0 in (0..ny).step_by(B) {
            let w = B.min(ny - c0);
            for ix in 0..nx {
                let row = &data[ix * ny + c0..ix * ny + c0 + w];
                for (j, &z) in row.iter().enumerate() {
                    buf[j * nx + ix] = z;
                }
            }
            fx.process_with_scratch(&mut buf[..w * nx], &mut scratch[..fx.get_inplace_scratch_len()]);
            for ix in 0..nx {
                let row = &mut data[ix * ny + c0..ix * ny + c0 + w];
                for (j, z) in row.iter_mut().enumerate() {
                    *z = buf[j * nx + ix];
                }
            }
        }
    }
}

/// Fourier coefficients of one scalar field on a [`Grid2D`].
#[derive(Clone)]
pub struct SpectralField {
    grid: Grid2D,
    coeffs: Vec<Complex64>,
}

impl fmt::Debug for SpectralField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralField")
            .field("grid", &self.grid)
            .field("l2", &self.l2_norm())
            .finish()
    }
}

impl SpectralField {
    pub fn zeros(grid: &Grid2D) -> Self {
        Self {
            grid: grid.clone(),
            coeffs: vec![ZERO; grid.len()],
        }
    }

    pub fn constant(grid: &Grid2D, value: f64) -> Self {
        let mut f = Self::zeros(grid);
        f.coeffs[0] = Complex64::new(value, 0.0);
        f
    }

    pub fn from_coeffs(grid: &Grid2D, coeffs: Vec<Complex64>) -> Self {
        assert_eq!(coeffs.len(), grid.len(), "coefficient count mismatch");
        Self {
            grid: grid.clone(),
            coeffs,
        }
    }

    pub fn from_physical(grid: &Grid2D, samples: &[f64]) -> Self {
        assert_eq!(samples.len(), grid.len(), "sample count mismatch");
        let mut data: Vec<Complex64> = samples.iter().map(|&s| Complex64::new(s, 0.0)).collect();
        grid.fft2(&mut data, false);
        let norm = 1.0 / grid.len() as f64;
        data.iter_mut().for_each(|c| *c *= norm);
        Self {
            grid: grid.clone(),
            coeffs: data,
        }
    }

    pub fn from_physical_complex(grid: &Grid2D, samples: &[Complex64]) -> Self {
        assert_eq!(samples.len(), grid.len(), "sample count mismatch");
        let mut data = samples.to_vec();
        grid.fft2(&mut data, false);
        let norm = 1.0 / grid.len() as f64;
        data.iter_mut().for_each(|c| *c *= norm);
        Self {
            grid: grid.clone(),
            coeffs: data,
        }
    }

    /// Samples `f(x, y)` on the collocation grid.
    pub fn from_fn(grid: &Grid2D, f: impl Fn(f64, f64) -> f64) -> Self {
        Self::from_physical(grid, &sample(grid, f))
    }

    /// Single Fourier mode `amp · exp(i(mx·2πx/lx + my·2πy/ly))`.
    pub fn mode(grid: &Grid2D, mx: i64, my: i64, amp: Complex64) -> Self {
        let mut f = Self::zeros(grid);
        let idx = storage_index(mx, grid.nx()) * grid.ny() + storage_index(my, grid.ny());
        f.coeffs[idx] = amp;
        f
    }

    /// Seeded random real field with a Gaussian spectral envelope of width
    /// `kwidth` (in wavenumber units), dealiased, scaled so that the maximum
    /// coefficient modulus is `amplitude`.
    pub fn random<R: Rng + ?Sized>(grid: &Grid2D, rng: &mut R, amplitude: f64, kwidth: f64) -> Self {
        let mut f = Self::zeros(grid);
        for ix in 0..grid.nx() {
            for iy in 0..grid.ny() {
                if !grid.is_retained(ix, iy) {
                    continue;
                }
                let (kx, ky) = (grid.kx()[ix], grid.ky()[iy]);
                let env = (-(kx * kx + ky * ky) / (2.0 * kwidth * kwidth)).exp();
                let re: f64 = rng.random_range(-1.0..1.0);
                let im: f64 = rng.random_range(-1.0..1.0);
                f.coeffs[ix * grid.ny() + iy] = Complex64::new(re, im) * env;
            }
        }
        f.symmetrize();
        f.coeffs[0] = ZERO;
        let peak = f.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if peak > 0.0 {
            f.scale(amplitude / peak);
        }
        f
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }
    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }
    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    /// Coefficient of the signed mode `(mx, my)`.
    pub fn coeff(&self, mx: i64, my: i64) -> Complex64 {
        let g = &self.grid;
        self.coeffs[storage_index(mx, g.nx()) * g.ny() + storage_index(my, g.ny())]
    }

    /// Physical samples, assuming the field is real (imaginary parts dropped).
    pub fn to_physical(&self) -> Vec<f64> {
        let mut data = self.coeffs.clone();
        self.grid.fft2(&mut data, true);
        data.into_iter().map(|c| c.re).collect()
    }

    pub fn to_physical_complex(&self) -> Vec<Complex64> {
        let mut data = self.coeffs.clone();
        self.grid.fft2(&mut data, true);
        data
    }

    /// Mean value (the real part of the zero mode).
    pub fn mean(&self) -> f64 {
        self.coeffs[0].re
    }

    /// `√(∫|f|²)` via Parseval.
    pub fn l2_norm(&self) -> f64 {
        (self.grid.area() * self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>()).sqrt()
    }

    /// `∫ f·g` over the box for real fields.
    pub fn inner(&self, other: &Self) -> f64 {
        self.check_grid(other);
        self.grid.area()
            * self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| (a * b.conj()).re)
                .sum::<f64>()
    }

    /// Maximum of |f| over the collocation grid.
    pub fn max_abs(&self) -> f64 {
        self.to_physical().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_coeff(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == ZERO)
    }

    /// Largest |c(k) − conj(c(−k))|; zero for real fields.
    pub fn conjugate_symmetry_defect(&self) -> f64 {
        (0..self.coeffs.len())
            .map(|i| (self.coeffs[i] - self.coeffs[self.grid.mirror(i)].conj()).norm())
            .fold(0.0, f64::max)
    }

    /// Projects onto real fields: `c(k) ← (c(k) + conj(c(−k))) / 2`.
    pub fn symmetrize(&mut self) {
        let old = self.coeffs.clone();
        for (i, c) in self.coeffs.iter_mut().enumerate() {
            *c = 0.5 * (old[i] + old[self.grid.mirror(i)].conj());
        }
    }

    /// Applies a real Fourier multiplier `m(kx, ky)`.
    pub fn apply_symbol(&self, m: impl Fn(f64, f64) -> f64) -> Self {
        let mut out = self.clone();
        out.apply_symbol_in_place(m);
        out
    }

    pub fn apply_symbol_in_place(&mut self, m: impl Fn(f64, f64) -> f64) {
        let g = &self.grid;
        let ny = g.ny();
        let (kx, ky) = (g.kx(), g.ky());
        for (ix, row) in self.coeffs.chunks_mut(ny).enumerate() {
            for (iy, c) in row.iter_mut().enumerate() {
                *c *= m(kx[ix], ky[iy]);
            }
        }
    }

    /// Applies a complex Fourier multiplier `m(kx, ky)`.
    pub fn apply_complex_symbol(&self, m: impl Fn(f64, f64) -> Complex64) -> Self {
        let mut out = self.clone();
        let ny = self.grid.ny();
        let (kx, ky) = (self.grid.kx(), self.grid.ky());
        for (ix, row) in out.coeffs.chunks_mut(ny).enumerate() {
            for (iy, c) in row.iter_mut().enumerate() {
                *c *= m(kx[ix], ky[iy]);
            }
        }
        out
    }

    /// `∂^order f / ∂axis^order`: coefficients times `(i k_axis)^order`.
    pub fn deriv(&self, axis: Axis, order: u32) -> Self {
        let ik_pow = |k: f64| {
            let p = k.powi(order as i32);
            match order % 4 {
                0 => Complex64::new(p, 0.0),
                1 => Complex64::new(0.0, p),
                2 => Complex64::new(-p, 0.0),
                _ => Complex64::new(0.0, -p),
            }
        };
        let ny = self.grid.ny();
        let mut coeffs = Vec::with_capacity(self.coeffs.len());
        match axis {
            Axis::X => {
                for (row, &k) in self.coeffs.chunks(ny).zip(self.grid.kx()) {
                    let m = ik_pow(k);
                    coeffs.extend(row.iter().map(|c| c * m));
                }
            }
            Axis::Y => {
                let ms: Vec<Complex64> = self.grid.ky().iter().map(|&k| ik_pow(k)).collect();
                for row in self.coeffs.chunks(ny) {
                    coeffs.extend(row.iter().zip(&ms).map(|(c, m)| c * m));
                }
            }
        }
        Self {
            grid: self.grid.clone(),
            coeffs,
        }
    }

    pub fn dx(&self) -> Self {
        self.deriv(Axis::X, 1)
    }
    pub fn dy(&self) -> Self {
        self.deriv(Axis::Y, 1)
    }

    pub fn laplacian(&self) -> Self {
        self.apply_symbol(|kx, ky| -(kx * kx + ky * ky))
    }

    /// `Δ⁻¹ f` with the zero mode set to zero.
    pub fn inverse_laplacian(&self) -> Self {
        self.apply_symbol(|kx, ky| {
            let k2 = kx * kx + ky * ky;
            if k2 == 0.0 {
                0.0
            } else {
                -1.0 / k2
            }
        })
    }

    /// The nonlocal operator `∂a∂b/Δ`, symbol `k_a k_b / |k|²`, zero mode zeroed.
    pub fn nonlocal(&self, a: Axis, b: Axis) -> Self {
        self.apply_symbol(|kx, ky| nonlocal_symbol(kx, ky, a, b))
    }

    /// Bessel potential `⟨∇⟩^s = (1 − Δ)^{s/2}`.
    pub fn bessel(&self, s: f64) -> Self {
        self.apply_symbol(|kx, ky| (1.0 + kx * kx + ky * ky).powf(0.5 * s))
    }

    /// Zeroes every mode outside the 2/3-rule box.
    pub fn dealias(&mut self) {
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        let (cx, cy) = self.grid.dealias_cut();
        let cy = cy as usize;
        for (ix, row) in self.coeffs.chunks_mut(ny).enumerate() {
            if signed_index(ix, nx).abs() > cx {
                row.fill(ZERO);
            } else if cy + 1 < ny - cy {
                row[cy + 1..ny - cy].fill(ZERO);
            }
        }
    }

    pub fn dealiased(mut self) -> Self {
        self.dealias();
        self
    }

    /// True when every mode outside the 2/3-rule box is exactly zero.
    pub fn is_dealiased(&self) -> bool {
        let ny = self.grid.ny();
        self.coeffs
            .iter()
            .enumerate()
            .all(|(i, c)| self.grid.is_retained(i / ny, i % ny) || *c == ZERO)
    }

    /// `f(x − sx, y − sy)` by modewise phase shift.
    pub fn translated(&self, sx: f64, sy: f64) -> Self {
        let (kx, ky) = (self.grid.kx_full(), self.grid.ky_full());
        let ny = self.grid.ny();
        let mut out = self.clone();
        for (ix, row) in out.coeffs.chunks_mut(ny).enumerate() {
            for (iy, c) in row.iter_mut().enumerate() {
                *c *= Complex64::from_polar(1.0, -(kx[ix] * sx + ky[iy] * sy));
            }
        }
        out
    }

    pub fn scale(&mut self, a: f64) {
        self.coeffs.iter_mut().for_each(|c| *c *= a);
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.scale(a);
        out
    }

    /// `self += a · other`.
    pub fn axpy(&mut self, a: f64, other: &Self) {
        self.check_grid(other);
        self.coeffs.iter_mut().zip(&other.coeffs).for_each(|(c, o)| *c += a * o);
    }

    /// Largest coefficient-wise distance.
    pub fn max_coeff_diff(&self, other: &Self) -> f64 {
        self.check_grid(other);
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn has_non_finite(&self) -> bool {
        self.coeffs.iter().any(|c| !(c.re.is_finite() && c.im.is_finite()))
    }

    fn check_grid(&self, other: &Self) {
        assert!(self.grid == other.grid, "fields live on different grids");
    }
}

/// Symbol of `∂a∂b/Δ` at `(kx, ky)`; zero at the origin.
pub fn nonlocal_symbol(kx: f64, ky: f64, a: Axis, b: Axis) -> f64 {
    let k2 = kx * kx + ky * ky;
    if k2 == 0.0 {
        return 0.0;
    }
    let pick = |ax: Axis| match ax {
        Axis::X => kx,
        Axis::Y => ky,
    };
    pick(a) * pick(b) / k2
}

/// Samples `f` at the collocation points.
pub fn sample(grid: &Grid2D, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.len());
    for ix in 0..grid.nx() {
        let x = grid.x(ix);
        for iy in 0..grid.ny() {
            out.push(f(x, grid.y(iy)));
        }
    }
    out
}

/// Transforms two real fields with one complex FFT.
pub fn to_physical_pair(f: &SpectralField, g: &SpectralField) -> (Vec<f64>, Vec<f64>) {
    f.check_grid(g);
    let mut z: Vec<Complex64> = f
        .coeffs
        .iter()
        .zip(&g.coeffs)
        .map(|(a, b)| a + Complex64::i() * b)
        .collect();
    f.grid.fft2(&mut z, true);
    z.into_iter().map(|c| (c.re, c.im)).unzip()
}

/// Forward transform of two real sample arrays with one complex FFT.
pub fn from_physical_pair(grid: &Grid2D, a: &[f64], b: &[f64]) -> (SpectralField, SpectralField) {
    assert_eq!(a.len(), grid.len());
    assert_eq!(b.len(), grid.len());
    let mut z: Vec<Complex64> = a.iter().zip(b).map(|(&x, &y)| Complex64::new(x, y)).collect();
    grid.fft2(&mut z, false);
    let norm = 0.5 / grid.len() as f64;
    let (nx, ny) = (grid.nx(), grid.ny());
    let mut fa = vec![ZERO; z.len()];
    let mut fb = vec![ZERO; z.len()];
    for ix in 0..nx {
        let mrow = ((nx - ix) % nx) * ny;
        for iy in 0..ny {
            let i = ix * ny + iy;
            let zi = z[i];
            let zm = z[mrow + (ny - iy) % ny].conj();
            fa[i] = (zi + zm) * norm;
            let d = zi - zm;
            fb[i] = Complex64::new(d.im * norm, -d.re * norm);
        }
    }
    (
        SpectralField::from_coeffs(grid, fa),
        SpectralField::from_coeffs(grid, fb),
    )
}

/// Physical samples of several real fields, transformed two at a time.
pub fn to_physical_many(fields: &[&SpectralField]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(fields.len());
    for chunk in fields.chunks(2) {
        match chunk {
            [f, g] => {
                let (a, b) = to_physical_pair(f, g);
                out.push(a);
                out.push(b);
            }
            [f] => out.push(f.to_physical()),
            _ => unreachable!(),
        }
    }
    out
}

/// Forward transforms of several real sample arrays, two at a time.
pub fn from_physical_many(grid: &Grid2D, samples: &[Vec<f64>]) -> Vec<SpectralField> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(2) {
        match chunk {
            [a, b] => {
                let (fa, fb) = from_physical_pair(grid, a, b);
                out.push(fa);
                out.push(fb);
            }
            [a] => out.push(SpectralField::from_physical(grid, a)),
            _ => unreachable!(),
        }
    }
    out
}

/// Pointwise `Σ aᵢ·bᵢ` of sample arrays.
pub fn dot_samples(pairs: &[(&Vec<f64>, &Vec<f64>)]) -> Vec<f64> {
    let n = pairs[0].0.len();
    let mut out = vec![0.0; n];
    for (a, b) in pairs {
        out.iter_mut()
            .zip(a.iter().zip(b.iter()))
            .for_each(|(o, (x, y))| *o += x * y);
    }
    out
}

/// Orthogonal projection of `(u, v)` onto divergence-free fields.
/// Mean modes pass through unchanged.
pub fn leray_project(u: &SpectralField, v: &SpectralField) -> (SpectralField, SpectralField) {
    u.check_grid(v);
    let g = u.grid();
    let ny = g.ny();
    let mut pu = u.clone();
    let mut pv = v.clone();
    let ky = g.ky();
    for (ix, &kx) in g.kx().iter().enumerate() {
        let r = ix * ny..(ix + 1) * ny;
        let (ur, vr) = (&u.coeffs[r.clone()], &v.coeffs[r.clone()]);
        let (pur, pvr) = (&mut pu.coeffs[r.clone()], &mut pv.coeffs[r]);
        for iy in 0..ny {
            let k2 = kx * kx + ky[iy] * ky[iy];
            if k2 == 0.0 {
                continue;
            }
            let div = (kx * ur[iy] + ky[iy] * vr[iy]) / k2;
            pur[iy] -= kx * div;
            pvr[iy] -= ky[iy] * div;
        }
    }
    (pu, pv)
}

/// Modewise `|i kx û + i ky v̂|`, maximized, relative to the largest coefficient.
pub fn divergence_defect(u: &SpectralField, v: &SpectralField) -> f64 {
    let g = u.grid();
    let ny = g.ny();
    let scale = u.max_coeff().max(v.max_coeff());
    if scale == 0.0 {
        return 0.0;
    }
    let mut worst: f64 = 0.0;
    for ix in 0..g.nx() {
        for iy in 0..ny {
            let i = ix * ny + iy;
            let d = g.kx()[ix] * u.coeffs[i] + g.ky()[iy] * v.coeffs[i];
            worst = worst.max(d.norm());
        }
    }
    worst / scale
}

macro_rules! binop {
    ($tr:ident, $m:ident, $op:tt, $aop:tt) => {
        impl $tr<&SpectralField> for &SpectralField {
            type Output = SpectralField;
            fn $m(self, rhs: &SpectralField) -> SpectralField {
                self.check_grid(rhs);
                let coeffs = self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a $op b).collect();
                SpectralField { grid: self.grid.clone(), coeffs }
            }
        }
        impl $tr<SpectralField> for SpectralField {
            type Output = SpectralField;
            fn $m(mut self, rhs: SpectralField) -> SpectralField {
                self.check_grid(&rhs);
                self.coeffs.iter_mut().zip(&rhs.coeffs).for_each(|(a, b)| *a $aop b);
                self
            }
        }
        impl $tr<&SpectralField> for SpectralField {
            type Output = SpectralField;
            fn $m(mut self, rhs: &SpectralField) -> SpectralField {
                self.check_grid(rhs);
                self.coeffs.iter_mut().zip(&rhs.coeffs).for_each(|(a, b)| *a $aop b);
                self
            }
        }
    };
}

binop!(Add, add, +, +=);
binop!(Sub, sub, -, -=);

impl AddAssign<&SpectralField> for SpectralField {
    fn add_assign(&mut self, rhs: &SpectralField) {
        self.axpy(1.0, rhs);
    }
}

impl SubAssign<&SpectralField> for SpectralField {
    fn sub_assign(&mut self, rhs: &SpectralField) {
        self.axpy(-1.0, rhs);
    }
}

impl Mul<f64> for &SpectralField {
    type Output = SpectralField;
    fn mul(self, a: f64) -> SpectralField {
        self.scaled(a)
    }
}

impl Mul<f64> for SpectralField {
    type Output = SpectralField;
    fn mul(mut self, a: f64) -> SpectralField {
        self.scale(a);
        self
    }
}

impl Neg for SpectralField {
    type Output = SpectralField;
    fn neg(mut self) -> SpectralField {
        self.scale(-1.0);
        self
    }
}

impl Neg for &SpectralField {
    type Output = SpectralField;
    fn neg(self) -> SpectralField {
        self.scaled(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: &SpectralField, b: &SpectralField, tol: f64) -> bool {
        a.max_coeff_diff(b) <= tol
    }

    #[test]
    fn grid_validation() {
        assert!(matches!(
            Grid2D::new(3, 8, 1.0, 1.0),
            Err(GridError::Resolution { axis: 'x', n: 3 })
        ));
        assert!(Grid2D::new(8, 2, 1.0, 1.0).is_err());
        assert!(Grid2D::new(8, 8, 0.0, 1.0).is_err());
        assert!(Grid2D::new(8, 8, 1.0, f64::NAN).is_err());
        assert!(Grid2D::new(4, 4, 1.0, 1.0).is_ok());
    }

    #[test]
    fn wavenumbers_are_antisymmetric() {
        let g = Grid2D::new(16, 12, 3.0, 5.0).unwrap();
        for j in 0..16 {
            assert_eq!(g.kx()[j], -g.kx()[(16 - j) % 16]);
        }
        for j in 0..12 {
            assert_eq!(g.ky()[j], -g.ky()[(12 - j) % 12]);
        }
        assert!((g.kx()[1] - 2.0 * PI / 3.0).abs() < 1e-15);
    }

    #[test]
    fn derivative_of_sine() {
        let g = Grid2D::unit_periodic(16);
        let f = SpectralField::from_fn(&g, |x, _| x.sin());
        let want = SpectralField::from_fn(&g, |x, _| x.cos());
        assert!(close(&f.deriv(Axis::X, 1), &want, 1e-14));
    }

    #[test]
    fn derivative_of_constant_vanishes() {
        let g = Grid2D::unit_periodic(8);
        let f = SpectralField::constant(&g, 3.5);
        for axis in [Axis::X, Axis::Y] {
            for order in 1..4 {
                assert!(f.deriv(axis, order).is_zero());
            }
        }
    }

    #[test]
    fn second_derivative_of_exponential_mode() {
        let g = Grid2D::unit_periodic(16);
        let f = SpectralField::mode(&g, 3, 0, Complex64::new(1.0, 0.0));
        let d = f.deriv(Axis::X, 2);
        assert!((d.coeff(3, 0) - Complex64::new(-9.0, 0.0)).norm() < 1e-13);
        // physical check against exp(i3x)
        let phys = d.to_physical_complex();
        let x = g.x(5);
        let want = -9.0 * Complex64::from_polar(1.0, 3.0 * x);
        assert!((phys[5 * g.ny()] - want).norm() < 1e-12);
    }

    #[test]
    fn nonlocal_on_diagonal_mode() {
        let g = Grid2D::unit_periodic(16);
        let f = SpectralField::mode(&g, 1, 1, Complex64::new(1.0, 0.0));
        let r = f.nonlocal(Axis::X, Axis::Y);
        assert!((r.coeff(1, 1) - Complex64::new(0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn nonlocal_on_product_of_sines() {
        let g = Grid2D::unit_periodic(16);
        let f = SpectralField::from_fn(&g, |x, y| x.sin() * y.sin());
        let want = SpectralField::from_fn(&g, |x, y| -0.5 * x.cos() * y.cos());
        assert!(close(&f.nonlocal(Axis::X, Axis::Y), &want, 1e-15));

        // independent route: dense multiplier matrix acting on the sample vector
        let n = g.len();
        let phys = f.to_physical();
        let mut out = vec![0.0; n];
        for (p, o) in out.iter_mut().enumerate() {
            let (px, py) = (g.x(p / g.ny()), g.y(p % g.ny()));
            for (q, fq) in phys.iter().enumerate() {
                let (qx, qy) = (g.x(q / g.ny()), g.y(q % g.ny()));
                // kernel entry = (1/n) Σ_k m(k) e^{ik·(xp − xq)}
                let mut entry = 0.0;
                for ix in 0..g.nx() {
                    for iy in 0..g.ny() {
                        let (kx, ky) = (g.kx()[ix], g.ky()[iy]);
                        let m = nonlocal_symbol(kx, ky, Axis::X, Axis::Y);
                        if m != 0.0 {
                            entry += m * (kx * (px - qx) + ky * (py - qy)).cos();
                        }
                    }
                }
                *o += entry * fq / n as f64;
            }
        }
        let want_phys = want.to_physical();
        for (a, b) in out.iter().zip(&want_phys) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn nonlocal_kills_constants() {
        let g = Grid2D::unit_periodic(8);
        let f = SpectralField::constant(&g, 2.0);
        assert!(f.nonlocal(Axis::X, Axis::X).is_zero());
        assert!(f.nonlocal(Axis::Y, Axis::X).is_zero());
    }

    #[test]
    fn leray_examples() {
        let g = Grid2D::unit_periodic(16);
        let chi = SpectralField::from_fn(&g, |x, y| (x + y).sin());
        let (pu, pv) = leray_project(&chi.dx(), &chi.dy());
        assert!(pu.max_coeff() < 1e-15 && pv.max_coeff() < 1e-15);

        let chi = SpectralField::from_fn(&g, |x, y| (2.0 * x).cos() * y.sin());
        let (u, v) = (-chi.dy(), chi.dx());
        let (pu, pv) = leray_project(&u, &v);
        assert!(close(&pu, &u, 1e-15) && close(&pv, &v, 1e-15));

        let u = SpectralField::from_fn(&g, |_, y| y.sin());
        let v = SpectralField::zeros(&g);
        let (pu, pv) = leray_project(&u, &v);
        assert!(close(&pu, &u, 1e-16) && pv.is_zero());
    }

    #[test]
    fn leray_keeps_mean() {
        let g = Grid2D::unit_periodic(8);
        let u = SpectralField::constant(&g, 1.5);
        let v = SpectralField::constant(&g, -0.5);
        let (pu, pv) = leray_project(&u, &v);
        assert_eq!(pu.mean(), 1.5);
        assert_eq!(pv.mean(), -0.5);
    }

    #[test]
    fn pair_transforms_match_single() {
        let g = Grid2D::new(16, 8, 2.0, 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f = SpectralField::random(&g, &mut rng, 1.0, 10.0);
        let h = SpectralField::random(&g, &mut rng, 1.0, 10.0);
        let (a, b) = to_physical_pair(&f, &h);
        let (fa, fb) = (f.to_physical(), h.to_physical());
        for i in 0..g.len() {
            assert!((a[i] - fa[i]).abs() < 1e-14 && (b[i] - fb[i]).abs() < 1e-14);
        }
        let (f2, h2) = from_physical_pair(&g, &a, &b);
        assert!(close(&f2, &f, 1e-15) && close(&h2, &h, 1e-15));
    }

    #[test]
    fn random_fields_are_real_and_dealiased() {
        let g = Grid2D::unit_periodic(32);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = SpectralField::random(&g, &mut rng, 0.3, 4.0);
        assert!(f.is_dealiased());
        assert!(f.conjugate_symmetry_defect() < 1e-16);
        assert!((f.max_coeff() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn dealias_cut_follows_two_thirds_rule() {
        let g = Grid2D::new(256, 96, 1.0, 1.0).unwrap();
        assert_eq!(g.dealias_cut(), (85, 31));
        let g = Grid2D::new(6, 6, 1.0, 1.0).unwrap();
        assert_eq!(g.dealias_cut(), (1, 1));
    }

    #[test]
    fn translation_is_phase_shift() {
        let g = Grid2D::unit_periodic(16);
        let f = SpectralField::from_fn(&g, |x, y| (x + 0.3).sin() * y.cos());
        let shifted = f.translated(0.7, 0.0);
        let want = SpectralField::from_fn(&g, |x, y| (x - 0.7 + 0.3).sin() * y.cos());
        assert!(close(&shifted, &want, 1e-14));
    }
}
