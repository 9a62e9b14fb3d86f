//! Norms, norm reports, pressure, energy bookkeeping and decay fits.

use crate::nonlinear::{time_derivative_fields, Tendency};
use crate::spectral::{to_physical_many, Axis, SpectralField};
use crate::state::State;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormP {
    Two,
    Inf,
}

/// `‖⟨∇⟩^s f‖_p`.
pub fn sobolev_norm(f: &SpectralField, s: f64, p: NormP) -> f64 {
    sobolev_norm_vec(&[f], s, p)
}

/// `‖⟨∇⟩^s (f₁, …, f_n)‖_p` with the Euclidean norm taken pointwise.
pub fn sobolev_norm_vec(fs: &[&SpectralField], s: f64, p: NormP) -> f64 {
    match p {
        NormP::Two => {
            let mut acc = 0.0;
            for f in fs {
                let g = f.grid();
                let (kx, ky, ny) = (g.kx_full(), g.ky_full(), g.ny());
                for (i, c) in f.coeffs().iter().enumerate() {
                    let k2 = kx[i / ny].powi(2) + ky[i % ny].powi(2);
                    acc += c.norm_sqr() * (1.0 + k2).powf(s);
                }
            }
            (acc * fs[0].grid().area()).sqrt()
        }
        NormP::Inf => {
            let lifted: Vec<SpectralField> = fs.iter().map(|f| f.bessel(s)).collect();
            sup_norm_vec(&lifted.iter().collect::<Vec<_>>())
        }
    }
}

fn sup_norm_vec(fs: &[&SpectralField]) -> f64 {
    let samples = to_physical_many(fs);
    (0..samples[0].len())
        .map(|i| samples.iter().map(|s| s[i] * s[i]).sum::<f64>())
        .fold(0.0, f64::max)
        .sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedL1 {
    pub value: f64,
    /// False when the boundary magnitude exceeds `1e−8·max|f|`.
    pub localized: bool,
}

/// `∫⟨r⟩^w |f|` by grid quadrature, `r` measured from the box centre and
/// `⟨r⟩ = (1 + r²)^{1/2}`.
pub fn weighted_l1(f: &SpectralField, w: f64) -> WeightedL1 {
    let g = f.grid();
    let samples = f.to_physical();
    let (cx, cy) = (0.5 * g.lx(), 0.5 * g.ly());
    let (nx, ny) = (g.nx(), g.ny());
    let mut value = 0.0;
    let mut peak = 0.0f64;
    let mut edge = 0.0f64;
    for ix in 0..nx {
        let dx = g.x(ix) - cx;
        for iy in 0..ny {
            let dy = g.y(iy) - cy;
            let a = samples[ix * ny + iy].abs();
            value += (1.0 + dx * dx + dy * dy).powf(0.5 * w) * a;
            peak = peak.max(a);
            if ix == 0 || iy == 0 {
                edge = edge.max(a);
            }
        }
    }
    WeightedL1 {
        value: value * g.cell_area(),
        localized: edge <= 1e-8 * peak,
    }
}

/// Data-norm pieces `‖⟨∇⟩^N(u₀, ∇ψ₀)‖₂ + ‖⟨r⟩^w(u₀, ψ₀)‖₁` with `w` the
/// weight exponent.
pub fn x0_norm(state: &State, n: f64, w: f64) -> (f64, WeightedL1) {
    let (px, py) = (state.psi.dx(), state.psi.dy());
    let sob = sobolev_norm_vec(&[&state.u, &state.v, &px, &py], n, NormP::Two);
    let parts = [
        weighted_l1(&state.u, w),
        weighted_l1(&state.v, w),
        weighted_l1(&state.psi, w),
    ];
    let l1 = WeightedL1 {
        value: parts.iter().map(|p| p.value).sum(),
        localized: parts.iter().all(|p| p.localized),
    };
    (sob, l1)
}

/// Exponent of the `⟨r⟩` weight in the data norm.
pub const X0_WEIGHT: f64 = 6.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormParams {
    pub n: f64,
    pub eps: f64,
}

impl Default for NormParams {
    fn default() -> Self {
        Self { n: 5.0, eps: 0.01 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    X,
    Y,
    Raw,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub key: &'static str,
    pub label: &'static str,
    pub family: Family,
    pub power: f64,
    pub raw: f64,
}

impl Component {
    pub fn weighted(&self, t: f64) -> f64 {
        self.raw * t.powf(self.power)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormReport {
    pub t: f64,
    pub components: Vec<Component>,
}

impl NormReport {
    pub fn get(&self, key: &str) -> Option<f64> {
        self.components
            .iter()
            .find(|c| c.key == key)
            .map(|c| c.weighted(self.t))
    }

    pub fn keys(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.components.iter().map(|c| c.key)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.components.iter().map(|c| c.weighted(self.t))
    }

    pub fn x_components(&self) -> impl Iterator<Item = &Component> {
        self.components.iter().filter(|c| c.family == Family::X)
    }
}

/// Builds the report; time derivatives come from `tendency` when given.
pub fn norm_report(state: &State, tendency: Option<&Tendency>, params: NormParams) -> NormReport {
    use Family::*;
    use NormP::{Inf, Two};
    let owned;
    let d = match tendency {
        Some(d) => d,
        None => {
            owned = time_derivative_fields(state);
            &owned
        }
    };
    let t = state.t;
    let (u, v, psi) = (&state.u, &state.v, &state.psi);
    let (px, py) = (psi.dx(), psi.dy());
    let pxx = psi.deriv(Axis::X, 2);
    let (ux, vx) = (u.dx(), v.dx());
    let raw = |key, label, power, raw| Component {
        key,
        label,
        family: Raw,
        power,
        raw,
    };
    let pressure = pressure_recover(state);
    let mut c = vec![
        Component {
            key: "x.hN_u_gradpsi_2",
            label: "t^{-eps}·‖⟨∇⟩^N(u, ∇ψ)‖₂",
            family: X,
            power: -params.eps,
            raw: sobolev_norm_vec(&[u, v, &px, &py], params.n, Two),
        },
        Component {
            key: "x.h3psi_2",
            label: "t^{1/4}·‖⟨∇⟩³ψ‖₂",
            family: X,
            power: 0.25,
            raw: sobolev_norm(psi, 3.0, Two),
        },
        Component {
            key: "x.h1psixx_inf",
            label: "t^{3/2}·‖⟨∇⟩∂xxψ‖∞",
            family: X,
            power: 1.5,
            raw: sobolev_norm(&pxx, 1.0, Inf),
        },
        Component {
            key: "x.h3psixx_2",
            label: "t^{5/4}·‖⟨∇⟩³∂xxψ‖₂",
            family: X,
            power: 1.25,
            raw: sobolev_norm(&pxx, 3.0, Two),
        },
        Component {
            key: "x.psixxx_2",
            label: "t^{3/2}·‖∂xxxψ‖₂",
            family: X,
            power: 1.5,
            raw: sobolev_norm(&pxx.dx(), 0.0, Two),
        },
        Component {
            key: "x.ut_inf",
            label: "t^{3/2}·‖∂t u‖∞",
            family: X,
            power: 1.5,
            raw: sobolev_norm_vec(&[&d.du, &d.dv], 0.0, Inf),
        },
        Component {
            key: "x.h1ut_2",
            label: "t^{5/4}·‖⟨∇⟩∂t u‖₂",
            family: X,
            power: 1.25,
            raw: sobolev_norm_vec(&[&d.du, &d.dv], 1.0, Two),
        },
        Component {
            key: "x.h1ux_inf",
            label: "t·‖⟨∇⟩∂x u‖∞",
            family: X,
            power: 1.0,
            raw: sobolev_norm_vec(&[&ux, &vx], 1.0, Inf),
        },
        Component {
            key: "x.vxt_2",
            label: "t^{3/2}·‖∂x∂t v‖₂",
            family: X,
            power: 1.5,
            raw: sobolev_norm(&d.dv.dx(), 0.0, Two),
        },
        Component {
            key: "y.h2psi_inf",
            label: "t^{1/2}·‖⟨∇⟩²ψ‖∞",
            family: Y,
            power: 0.5,
            raw: sobolev_norm(psi, 2.0, Inf),
        },
        Component {
            key: "y.h1psix_2",
            label: "t^{3/4}·‖⟨∇⟩∂xψ‖₂",
            family: Y,
            power: 0.75,
            raw: sobolev_norm(&px, 1.0, Two),
        },
        Component {
            key: "y.h3psix_inf",
            label: "t·‖∂x⟨∇⟩³ψ‖∞",
            family: Y,
            power: 1.0,
            raw: sobolev_norm(&px, 3.0, Inf),
        },
        Component {
            key: "y.u_inf",
            label: "t·‖u‖∞",
            family: Y,
            power: 1.0,
            raw: u.max_abs(),
        },
        Component {
            key: "y.v_inf",
            label: "t^{3/2}·‖v‖∞",
            family: Y,
            power: 1.5,
            raw: v.max_abs(),
        },
        Component {
            key: "y.u_2",
            label: "t^{3/4}·‖u‖₂",
            family: Y,
            power: 0.75,
            raw: sobolev_norm(u, 0.0, Two),
        },
        Component {
            key: "y.ux_2",
            label: "t^{5/4}·‖∂x u‖₂",
            family: Y,
            power: 1.25,
            raw: sobolev_norm(&ux, 0.0, Two),
        },
        Component {
            key: "y.v_2",
            label: "t^{5/4}·‖v‖₂",
            family: Y,
            power: 1.25,
            raw: sobolev_norm(v, 0.0, Two),
        },
    ];
    c.push(raw("raw.u_inf", "‖u‖∞", 0.0, u.max_abs()));
    c.push(raw("raw.v_inf", "‖v‖∞", 0.0, v.max_abs()));
    c.push(raw("raw.psi_inf", "‖ψ‖∞", 0.0, psi.max_abs()));
    c.push(raw("raw.P_inf", "‖P‖∞", 0.0, pressure.max_abs()));
    c.push(raw("raw.u_2", "‖u‖₂", 0.0, u.l2_norm()));
    NormReport { t, components: c }
}

/// `P = −2∂yψ + ∇·∇·(∇ψ⊗∇ψ + u⊗u)/(−Δ)`, zero mean.
pub fn pressure_recover(state: &State) -> SpectralField {
    let (u, v, psi) = (&state.u, &state.v, &state.psi);
    let g = state.grid();
    let (px, py) = (psi.dx(), psi.dy());
    let s = to_physical_many(&[u, v, &px, &py]);
    let (su, sv, spx, spy) = (&s[0], &s[1], &s[2], &s[3]);
    let prod = |a: &Vec<f64>, b: &Vec<f64>, c: &Vec<f64>, d: &Vec<f64>| -> Vec<f64> {
        a.iter()
            .zip(b)
            .zip(c.iter().zip(d))
            .map(|((a, b), (c, d))| a * b + c * d)
            .collect()
    };
    let txx = prod(spx, spx, su, su);
    let txy = prod(spx, spy, su, sv);
    let tyy = prod(spy, spy, sv, sv);
    let t = crate::spectral::from_physical_many(g, &[txx, txy, tyy]);
    let div2 = t[0].deriv(Axis::X, 2) + t[1].dx().dy().scaled(2.0) + t[2].deriv(Axis::Y, 2);
    let mut p = -(div2.dealiased().inverse_laplacian()) - py.scaled(2.0);
    p.coeffs_mut()[0] = crate::Complex64::new(0.0, 0.0);
    p
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyRow {
    pub t: f64,
    /// `‖u‖₂² + ‖∇ψ‖₂²`.
    pub e: f64,
    /// `‖u‖₂²`.
    pub ku: f64,
    /// Finite-difference `dE/dt + 2‖u‖₂²`.
    pub residual: f64,
}

/// `(‖u‖₂² + ‖∇ψ‖₂², ‖u‖₂²)`.
pub fn energy(state: &State) -> (f64, f64) {
    let ku = state.u.l2_norm().powi(2) + state.v.l2_norm().powi(2);
    let m = state.psi.dx().l2_norm().powi(2) + state.psi.dy().l2_norm().powi(2);
    (ku + m, ku)
}

/// Residuals for a uniformly spaced series. At each interior point the
/// central difference `(E(t+h) − E(t−h))/2h` is paired with the
/// Simpson-weighted `‖u‖₂²` over the same stencil, so the residual is
/// `(1/2h)∫(dE/dt + 2‖u‖₂²)` up to quadrature error. End points reuse the
/// nearest interior stencil; a two-point series uses the trapezoid rule.
pub fn energy_residuals(ts: &[f64], es: &[f64], kus: &[f64]) -> Vec<EnergyRow> {
    let n = ts.len();
    let stencil = |c: usize| {
        let de = (es[c + 1] - es[c - 1]) / (ts[c + 1] - ts[c - 1]);
        de + 2.0 * (kus[c - 1] + 4.0 * kus[c] + kus[c + 1]) / 6.0
    };
    (0..n)
        .map(|i| {
            let residual = match n {
                0 | 1 => 0.0,
                2 => (es[1] - es[0]) / (ts[1] - ts[0]) + kus[0] + kus[1],
                _ => stencil(i.clamp(1, n - 2)),
            };
            EnergyRow {
                t: ts[i],
                e: es[i],
                ku: kus[i],
                residual,
            }
        })
        .collect()
}

pub fn energy_report(history: &[State]) -> Vec<EnergyRow> {
    let ts: Vec<f64> = history.iter().map(|s| s.t).collect();
    let (es, kus): (Vec<f64>, Vec<f64>) = history.iter().map(energy).unzip();
    energy_residuals(&ts, &es, &kus)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub exponent: f64,
    pub stderr: f64,
    pub window: (f64, f64),
    pub r_squared: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("fit window ({0}, {1}) is empty or reversed")]
    BadWindow(f64, f64),
    #[error("nonpositive series value {value} at t = {t}")]
    NonPositive { t: f64, value: f64 },
    #[error("too few samples in window: {found} < 8")]
    TooFewSamples { found: usize },
}

pub const MIN_FIT_SAMPLES: usize = 8;

/// Least-squares slope of `log value` against `log t` over the window.
pub fn decay_fit(series: &[(f64, f64)], window: (f64, f64)) -> Result<DecayFit, FitError> {
    let (lo, hi) = window;
    if !(lo < hi) || lo <= 0.0 {
        return Err(FitError::BadWindow(lo, hi));
    }
    let pts: Vec<(f64, f64)> = series.iter().copied().filter(|(t, _)| *t >= lo && *t <= hi).collect();
    if let Some(&(t, value)) = pts.iter().find(|(_, v)| !(*v > 0.0)) {
        return Err(FitError::NonPositive { t, value });
    }
    if pts.len() < MIN_FIT_SAMPLES {
        return Err(FitError::TooFewSamples { found: pts.len() });
    }
    let xs: Vec<f64> = pts.iter().map(|(t, _)| t.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|(_, v)| v.ln()).collect();
    let (slope, stderr, r_squared) = line_fit(&xs, &ys);
    Ok(DecayFit {
        exponent: slope,
        stderr,
        window,
        r_squared,
        samples: pts.len(),
    })
}

/// R² of `ln f` against `t` (an exponential law) over the window.
/// `None` when [`decay_fit`] would refuse the same data.
pub fn exponential_r_squared(series: &[(f64, f64)], window: (f64, f64)) -> Option<f64> {
    decay_fit(series, window).ok()?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = series
        .iter()
        .filter(|(t, _)| *t >= window.0 && *t <= window.1)
        .map(|(t, v)| (*t, v.ln()))
        .unzip();
    Some(line_fit(&xs, &ys).2)
}

/// Least-squares line: `(slope, slope stderr, R²)`.
fn line_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let stderr = (sse / (n - 2.0) / sxx).sqrt();
    // a constant series is fitted perfectly by slope 0
    let r_squared = if syy <= 1e-30 * n { 1.0 } else { 1.0 - sse / syy };
    (slope, stderr, r_squared)
}
