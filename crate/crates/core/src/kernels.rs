//! Solution multipliers of the damped wave (telegraph) equation
//! `∂ttΦ + ∂tΦ − ∂xxΦ = 0`.
//!
//! In Fourier variables each x-frequency `ξ` obeys
//! `Φ̈ + Φ̇ + ξ²Φ = 0`, whose solution is
//! `Φ(t) = K̂0(t,ξ)·Φ(0) + K̂1(t,ξ)·(½Φ(0) + Φ̇(0))` with
//!
//! ```text
//! K̂0 = e^{-t/2} C(μt²),   K̂1 = t·e^{-t/2} S(μt²),   μ = ¼ − ξ²,
//! C(z) = cosh √z,         S(z) = sinh √z / √z,
//! ```
//!
//! continued to `z < 0` as `cos √−z` and `sin √−z / √−z`. Both are real for
//! real `ξ`. The multipliers act on the x-frequency only.

use std::fmt;

use crate::spectral::SpectralField;

/// Below this `|μ|·t²` the double root at `ξ = ±½` is resolved by series.
pub const SERIES_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelId {
    K0,
    K1,
    K0dot,
    K1dot,
}

impl KernelId {
    pub const ALL: [KernelId; 4] = [KernelId::K0, KernelId::K1, KernelId::K0dot, KernelId::K1dot];
}

impl fmt::Display for KernelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelId::K0 => "K0",
            KernelId::K1 => "K1",
            KernelId::K0dot => "K0dot",
            KernelId::K1dot => "K1dot",
        })
    }
}

/// `(K̂0, K̂1)` at `(t, ξ)`.
pub fn k0_k1(t: f64, xi: f64) -> (f64, f64) {
    let xi2 = xi * xi;
    let mu = 0.25 - xi2;
    let z = mu * t * t;
    if z.abs() < SERIES_THRESHOLD {
        let damp = (-0.5 * t).exp();
        let c = 1.0 + z / 2.0 + z * z / 24.0 + z * z * z / 720.0;
        let s = 1.0 + z / 6.0 + z * z / 120.0 + z * z * z / 5040.0;
        (damp * c, t * damp * s)
    } else if mu > 0.0 {
        let lam = mu.sqrt();
        // slow root −½ + λ written without cancellation
        let slow = -xi2 / (0.5 + lam);
        let fast = -0.5 - lam;
        let es = (slow * t).exp();
        let k0 = 0.5 * (es + (fast * t).exp());
        let k1 = es * (-(-2.0 * lam * t).exp_m1()) / (2.0 * lam);
        (k0, k1)
    } else {
        let om = (-mu).sqrt();
        let damp = (-0.5 * t).exp();
        let (sin, cos) = (om * t).sin_cos();
        (damp * cos, damp * sin / om)
    }
}

/// The multiplier `kind` at time `t ≥ 0` and x-frequency `xi`.
///
/// Time derivatives follow from `K̇0 = −½K0 + (¼ − ξ²)K1` and
/// `K̇1 = K0 − ½K1`.
pub fn khat(kind: KernelId, t: f64, xi: f64) -> f64 {
    let (k0, k1) = k0_k1(t, xi);
    match kind {
        KernelId::K0 => k0,
        KernelId::K1 => k1,
        KernelId::K0dot => -0.5 * k0 + (0.25 - xi * xi) * k1,
        KernelId::K1dot => k0 - 0.5 * k1,
    }
}

/// Multiplies every coefficient at `(kx, ky)` by `khat(kind, t, kx)`.
pub fn apply_kernel(kind: KernelId, t: f64, f: &SpectralField) -> SpectralField {
    let mut out = f.clone();
    apply_kernel_in_place(kind, t, &mut out);
    out
}

pub fn apply_kernel_in_place(kind: KernelId, t: f64, f: &mut SpectralField) {
    let grid = f.grid().clone();
    let ny = grid.ny();
    for (ix, row) in f.coeffs_mut().chunks_mut(ny).enumerate() {
        let m = khat(kind, t, grid.kx()[ix]);
        row.iter_mut().for_each(|c| *c *= m);
    }
}

/// Exact homogeneous propagation of `(Φ, Φ̇)` over `t`.
pub fn propagate(t: f64, phi: &SpectralField, phi_t: &SpectralField) -> (SpectralField, SpectralField) {
    let grid = phi.grid().clone();
    let ny = grid.ny();
    let mut p = phi.clone();
    let mut pt = phi_t.clone();
    let (src, src_t) = (phi.coeffs(), phi_t.coeffs());
    let (dst, dst_t) = (p.coeffs_mut(), pt.coeffs_mut());
    for ix in 0..grid.nx() {
        let xi = grid.kx()[ix];
        let (k0, k1) = k0_k1(t, xi);
        let k0d = -0.5 * k0 + (0.25 - xi * xi) * k1;
        let k1d = k0 - 0.5 * k1;
        for i in ix * ny..(ix + 1) * ny {
            let a = src[i];
            let b = 0.5 * src[i] + src_t[i];
            dst[i] = k0 * a + k1 * b;
            dst_t[i] = k0d * a + k1d * b;
        }
    }
    (p, pt)
}

/// Which constant-free inequality a sample checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundKind {
    /// `0 ≤ K̂0 ≤ e^{−tξ²}` for `|ξ| ≤ ½`.
    K0Low,
    /// `0 ≤ K̂1 ≤ 2e^{−tξ²}` for `|ξ| ≤ ½`.
    K1Low,
    /// `|∂tK̂0| ≤ 2ξ²(1+t)e^{−tξ²} + e^{−t/2}` for `|ξ| ≤ ½`.
    K0dotLow,
    /// `|∂tK̂1| ≤ 2ξ²(1+t)e^{−tξ²} + e^{−t/2}` for `|ξ| ≤ ½`.
    K1dotLow,
    /// `|K̂0| ≤ e^{−t/2}` for `|ξ| ≥ ½`.
    K0High,
    /// `|K̂1| ≤ t·e^{−t/2}` for `|ξ| ≥ ½`.
    K1High,
}

impl BoundKind {
    pub fn name(self) -> &'static str {
        match self {
            BoundKind::K0Low => "K0_low",
            BoundKind::K1Low => "K1_low",
            BoundKind::K0dotLow => "K0dot_low",
            BoundKind::K1dotLow => "K1dot_low",
            BoundKind::K0High => "K0_high",
            BoundKind::K1High => "K1_high",
        }
    }

    fn requires_nonnegative(self) -> bool {
        matches!(self, BoundKind::K0Low | BoundKind::K1Low)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundSample {
    pub t: f64,
    pub xi: f64,
    pub kind: BoundKind,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

impl BoundSample {
    fn new(t: f64, xi: f64, kind: BoundKind, value: f64, bound: f64) -> Self {
        let mut pass = value.abs() <= bound * (1.0 + 1e-12);
        if kind.requires_nonnegative() {
            pass &= value >= 0.0;
        }
        Self {
            t,
            xi,
            kind,
            value,
            bound,
            pass,
        }
    }

    /// `|value| / bound`; `0/0` counts as 0.
    pub fn ratio(&self) -> f64 {
        if self.bound == 0.0 {
            if self.value == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.value.abs() / self.bound
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct KernelBoundReport {
    pub samples: Vec<BoundSample>,
    pub max_ratio: f64,
}

impl KernelBoundReport {
    pub fn failures(&self) -> impl Iterator<Item = &BoundSample> {
        self.samples.iter().filter(|s| !s.pass)
    }

    pub fn all_pass(&self) -> bool {
        self.samples.iter().all(|s| s.pass)
    }

    pub fn max_ratio_of(&self, kind: BoundKind) -> f64 {
        self.samples
            .iter()
            .filter(|s| s.kind == kind)
            .map(BoundSample::ratio)
            .fold(0.0, f64::max)
    }

    /// CSV with columns `t,xi,kind,value,bound,ratio`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,xi,kind,value,bound,ratio\n");
        for s in &self.samples {
            out.push_str(&format!(
                "{},{},{},{:e},{:e},{:e}\n",
                s.t,
                s.xi,
                s.kind.name(),
                s.value,
                s.bound,
                s.ratio()
            ));
        }
        out
    }
}

/// Evaluates every applicable bound on the Cartesian product of samples.
/// Failing samples are reported, never panicked on.
pub fn check_kernel_bounds(t_samples: &[f64], xi_samples: &[f64]) -> KernelBoundReport {
    let mut samples = Vec::new();
    for &t in t_samples {
        for &xi in xi_samples {
            let (k0, k1) = k0_k1(t, xi);
            let a = xi.abs();
            if a <= 0.5 {
                let heat = (-t * xi * xi).exp();
                let deriv_bound = 2.0 * xi * xi * (1.0 + t) * heat + (-0.5 * t).exp();
                samples.push(BoundSample::new(t, xi, BoundKind::K0Low, k0, heat));
                samples.push(BoundSample::new(t, xi, BoundKind::K1Low, k1, 2.0 * heat));
                samples.push(BoundSample::new(
                    t,
                    xi,
                    BoundKind::K0dotLow,
                    khat(KernelId::K0dot, t, xi),
                    deriv_bound,
                ));
                samples.push(BoundSample::new(
                    t,
                    xi,
                    BoundKind::K1dotLow,
                    khat(KernelId::K1dot, t, xi),
                    deriv_bound,
                ));
            }
            if a >= 0.5 {
                let damp = (-0.5 * t).exp();
                samples.push(BoundSample::new(t, xi, BoundKind::K0High, k0, damp));
                samples.push(BoundSample::new(t, xi, BoundKind::K1High, k1, t * damp));
            }
        }
    }
    let max_ratio = samples.iter().map(BoundSample::ratio).fold(0.0, f64::max);
    KernelBoundReport { samples, max_ratio }
}

/// Classical RK4 for `Φ̈ + Φ̇ + ξ²Φ = 0` from `(Φ0, Φ1)` over `[0, t]` with
/// `steps` steps. Independent of the closed forms; used as their oracle.
pub fn mode_ode_rk4(xi: f64, phi0: f64, phi1: f64, t: f64, steps: usize) -> (f64, f64) {
    let h = t / steps as f64;
    let xi2 = xi * xi;
    let rhs = |p: f64, q: f64| (q, -q - xi2 * p);
    let (mut p, mut q) = (phi0, phi1);
    for _ in 0..steps {
        let (a1, b1) = rhs(p, q);
        let (a2, b2) = rhs(p + 0.5 * h * a1, q + 0.5 * h * b1);
        let (a3, b3) = rhs(p + 0.5 * h * a2, q + 0.5 * h * b2);
        let (a4, b4) = rhs(p + h * a3, q + h * b3);
        p += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
        q += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
    }
    (p, q)
}
