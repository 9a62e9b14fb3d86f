//! Littlewood–Paley projectors and Riesz-type multipliers.

use crate::spectral::{Axis, Grid2D, SpectralField};

/// Smooth radial cutoff: 1 on `|ξ| ≤ 1`, 0 on `|ξ| ≥ 2`, non-increasing.
///
/// The ramp is `h(2 − |ξ|)` with `h(s) = e^{−1/s} / (e^{−1/s} + e^{−1/(1−s)})`,
/// which is C∞ at both ends.
pub fn bump(xi: f64) -> f64 {
    let r = xi.abs();
    if r <= 1.0 {
        return 1.0;
    }
    if r >= 2.0 {
        return 0.0;
    }
    let s = 2.0 - r;
    let a = (-1.0 / s).exp();
    let b = (-1.0 / (1.0 - s)).exp();
    a / (a + b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjMode {
    /// `P_{≤M}`: multiplier `φ(|k|/M)`.
    Leq,
    /// `P_M`: multiplier `φ(|k|/M) − φ(2|k|/M)`.
    Band,
    /// `P_{>M}`: multiplier `1 − φ(|k|/M)`.
    Gt,
}

/// Which frequency the cutoff is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Modulus {
    /// Full 2D modulus `|k|`.
    #[default]
    Full,
    /// `|kx|` only.
    XOnly,
}

pub fn multiplier(r: f64, m: f64, mode: ProjMode) -> f64 {
    match mode {
        ProjMode::Leq => bump(r / m),
        ProjMode::Band => bump(r / m) - bump(2.0 * r / m),
        ProjMode::Gt => 1.0 - bump(r / m),
    }
}

/// # Panics
/// If `m` is not positive.
pub fn project(f: &SpectralField, m: f64, mode: ProjMode) -> SpectralField {
    project_with(f, m, mode, Modulus::Full)
}

pub fn project_with(f: &SpectralField, m: f64, mode: ProjMode, modulus: Modulus) -> SpectralField {
    assert!(m > 0.0, "projector scale must be positive, got {m}");
    match modulus {
        Modulus::Full => f.apply_symbol(|kx, ky| multiplier(kx.hypot(ky), m, mode)),
        Modulus::XOnly => f.apply_symbol(|kx, _| multiplier(kx.abs(), m, mode)),
    }
}

/// Dyadic scales `m_min·2^j ≤ m_max`.
pub fn dyadic_scales(m_min: f64, m_max: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut m = m_min;
    while m <= m_max * (1.0 + 1e-12) {
        out.push(m);
        m *= 2.0;
    }
    out
}

/// One factor `sign · k_a k_b / |k|²` of a Riesz composition, i.e. the
/// operator `sign · ∂a∂b/Δ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RieszFactor {
    pub a: Axis,
    pub b: Axis,
    pub negate: bool,
}

impl RieszFactor {
    pub fn new(a: Axis, b: Axis) -> Self {
        Self { a, b, negate: false }
    }

    pub fn negated(self) -> Self {
        Self {
            negate: !self.negate,
            ..self
        }
    }

    pub fn symbol(&self, kx: f64, ky: f64) -> f64 {
        let k2 = kx * kx + ky * ky;
        if k2 == 0.0 {
            return 0.0;
        }
        let pick = |ax: Axis| match ax {
            Axis::X => kx,
            Axis::Y => ky,
        };
        let s = pick(self.a) * pick(self.b) / k2;
        if self.negate {
            -s
        } else {
            s
        }
    }
}

/// # Panics
/// If `pattern` is empty.
pub fn riesz_apply(f: &SpectralField, pattern: &[RieszFactor]) -> SpectralField {
    assert!(!pattern.is_empty(), "riesz pattern must be nonempty");
    f.apply_symbol(|kx, ky| pattern.iter().map(|p| p.symbol(kx, ky)).product())
}

/// Grid quadrature of `|f|`.
pub fn l1_norm(f: &SpectralField) -> f64 {
    f.to_physical().iter().map(|s| s.abs()).sum::<f64>() * f.grid().cell_area()
}

/// Ratio of the two sides of
///
/// ```text
/// ‖|∇|^α ⟨∇⟩^{n0} ∂x∂y/(−Δ) f‖₁  ≲  ‖f‖₁^{1−α+ε} ‖∂x f‖₁^{α−ε} + ‖⟨∇⟩^{n0−1+α+ε} ∂x f‖₁
/// ```
///
/// with discrete L¹ norms. A vanishing right side gives `+∞`.
pub fn lemma_ratio_diagnostic(f: &SpectralField, alpha: f64, eps: f64, n0: f64) -> f64 {
    let lhs_field = f.apply_symbol(|kx, ky| {
        let k2 = kx * kx + ky * ky;
        if k2 == 0.0 {
            return 0.0;
        }
        // ∂x∂y/(−Δ) has symbol kx·ky/|k|²
        k2.powf(0.5 * alpha) * (1.0 + k2).powf(0.5 * n0) * kx * ky / k2
    });
    let lhs = l1_norm(&lhs_field);
    let fx = f.dx();
    let l1f = l1_norm(f);
    let l1fx = l1_norm(&fx);
    let tail = l1_norm(&fx.bessel(n0 - 1.0 + alpha + eps));
    let rhs = l1f.powf(1.0 - alpha + eps) * l1fx.powf(alpha - eps) + tail;
    if rhs == 0.0 {
        f64::INFINITY
    } else {
        lhs / rhs
    }
}

/// Ratios for the anisotropic dilation family `g(σx, y)` of a centred
/// Gaussian `g = exp(−r²/2)`.
pub fn lemma_dilation_sweep(grid: &Grid2D, sigmas: &[f64], alpha: f64, eps: f64, n0: f64) -> Vec<(f64, f64)> {
    let (cx, cy) = (0.5 * grid.lx(), 0.5 * grid.ly());
    sigmas
        .iter()
        .map(|&s| {
            let f = SpectralField::from_fn(grid, |x, y| {
                let (dx, dy) = (s * (x - cx), y - cy);
                (-(dx * dx + dy * dy) / 2.0).exp()
            });
            (s, lemma_ratio_diagnostic(&f, alpha, eps, n0))
        })
        .collect()
}
