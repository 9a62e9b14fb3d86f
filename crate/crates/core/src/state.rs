//! The unknowns `(u, v, ψ)` and initial-data synthesis.

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::snapshot::{self, SnapshotError};
use crate::spectral::{divergence_defect, leray_project, Grid2D, SpectralField};

/// Velocity `(u, v)` and perturbed magnetic stream function `ψ = φ − y`
/// at time `t`.
#[derive(Debug, Clone)]
pub struct State {
    pub u: SpectralField,
    pub v: SpectralField,
    pub psi: SpectralField,
    pub t: f64,
}

impl State {
    pub fn zeros(grid: &Grid2D, t: f64) -> Self {
        Self {
            u: SpectralField::zeros(grid),
            v: SpectralField::zeros(grid),
            psi: SpectralField::zeros(grid),
            t,
        }
    }

    pub fn grid(&self) -> &Grid2D {
        self.u.grid()
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        Self {
            u: self.u.scaled(lambda),
            v: self.v.scaled(lambda),
            psi: self.psi.scaled(lambda),
            t: self.t,
        }
    }

    /// Translates every field by `(sx, sy)` in physical space.
    pub fn translated(&self, sx: f64, sy: f64) -> Self {
        Self {
            u: self.u.translated(sx, sy),
            v: self.v.translated(sx, sy),
            psi: self.psi.translated(sx, sy),
            t: self.t,
        }
    }

    pub fn is_dealiased(&self) -> bool {
        self.u.is_dealiased() && self.v.is_dealiased() && self.psi.is_dealiased()
    }

    pub fn divergence_defect(&self) -> f64 {
        divergence_defect(&self.u, &self.v)
    }

    pub fn has_non_finite(&self) -> bool {
        self.u.has_non_finite() || self.v.has_non_finite() || self.psi.has_non_finite()
    }

    /// Projects the velocity onto divergence-free fields.
    pub fn project(&mut self) {
        let (u, v) = leray_project(&self.u, &self.v);
        self.u = u;
        self.v = v;
    }

    /// Seeded random dealiased state with divergence-free velocity; the
    /// largest coefficient of each field is about `amplitude`.
    pub fn random(grid: &Grid2D, seed: u64, amplitude: f64, kwidth: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chi = SpectralField::random(grid, &mut rng, 1.0, kwidth);
        let psi = SpectralField::random(grid, &mut rng, amplitude, kwidth);
        let (mut u, mut v) = (chi.dy(), -chi.dx());
        let peak = u.max_coeff().max(v.max_coeff());
        if peak > 0.0 {
            u.scale(amplitude / peak);
            v.scale(amplitude / peak);
        }
        Self { u, v, psi, t: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IcKind {
    /// Gaussian magnetic bump `ψ₀ = A·g` plus a weak Gaussian vortex
    /// `u = ∇⊥(A·swirl·σ·g)`, with `g = exp(−r²/2σ²)` centred in the box.
    GaussianVortex,
    /// `u = A·sin(κy)`, `v = ψ = 0`, with κ the box wavenumber nearest 1.
    Shear,
    /// `ψ₀ = A·cos(2π(mx·x/lx + my·y/ly))`, velocity zero.
    SingleMode,
    /// Physical samples read from a snapshot file.
    File,
}

impl IcKind {
    pub fn name(self) -> &'static str {
        match self {
            IcKind::GaussianVortex => "gaussian_vortex",
            IcKind::Shear => "shear",
            IcKind::SingleMode => "single_mode",
            IcKind::File => "file",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "gaussian_vortex" => Some(IcKind::GaussianVortex),
            "shear" => Some(IcKind::Shear),
            "single_mode" => Some(IcKind::SingleMode),
            "file" => Some(IcKind::File),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialCondition {
    pub kind: IcKind,
    pub amplitude: f64,
    pub sigma: f64,
    pub swirl: f64,
    pub mode: (i64, i64),
    /// Relative amplitude of a seeded, Gaussian-windowed random perturbation.
    pub noise: f64,
    pub seed: u64,
    pub file: Option<PathBuf>,
}

impl Default for InitialCondition {
    fn default() -> Self {
        Self {
            kind: IcKind::GaussianVortex,
            amplitude: 1e-3,
            sigma: 2.0,
            swirl: 0.1,
            mode: (1, 0),
            noise: 0.0,
            seed: 0,
            file: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum InitError {
    #[error("amplitude must be finite and non-negative, got {0}")]
    Amplitude(f64),
    #[error("gaussian width sigma must be positive, got {0}")]
    Sigma(f64),
    #[error("initial condition kind `file` needs a path")]
    MissingFile,
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error("snapshot grid {found:?} does not match configured grid {expected:?}")]
    GridMismatch {
        expected: (usize, usize, f64, f64),
        found: (usize, usize, f64, f64),
    },
}

/// Builds the state at `t = 1`. Velocity is Leray-projected and every field
/// is dealiased.
pub fn make_initial_data(grid: &Grid2D, ic: &InitialCondition) -> Result<State, InitError> {
    let a = ic.amplitude;
    if !(a.is_finite() && a >= 0.0) {
        return Err(InitError::Amplitude(a));
    }
    let mut state = match ic.kind {
        IcKind::GaussianVortex => {
            if !(ic.sigma > 0.0) {
                return Err(InitError::Sigma(ic.sigma));
            }
            let g = gaussian(grid, ic.sigma);
            let chi = g.scaled(a * ic.swirl * ic.sigma);
            State {
                u: chi.dy(),
                v: -chi.dx(),
                psi: g.scaled(a),
                t: 1.0,
            }
        }
        IcKind::Shear => {
            let m = (grid.ly() / (2.0 * std::f64::consts::PI)).round().max(1.0);
            let kappa = 2.0 * std::f64::consts::PI * m / grid.ly();
            State {
                u: SpectralField::from_fn(grid, |_, y| a * (kappa * y).sin()),
                v: SpectralField::zeros(grid),
                psi: SpectralField::zeros(grid),
                t: 1.0,
            }
        }
        IcKind::SingleMode => {
            let (mx, my) = ic.mode;
            let (kx, ky) = (
                2.0 * std::f64::consts::PI * mx as f64 / grid.lx(),
                2.0 * std::f64::consts::PI * my as f64 / grid.ly(),
            );
            State {
                u: SpectralField::zeros(grid),
                v: SpectralField::zeros(grid),
                psi: SpectralField::from_fn(grid, |x, y| a * (kx * x + ky * y).cos()),
                t: 1.0,
            }
        }
        IcKind::File => {
            let path = ic.file.as_ref().ok_or(InitError::MissingFile)?;
            let snap = snapshot::read_snapshot(path)?;
            let found = (snap.nx, snap.ny, snap.lx, snap.ly);
            let expected = (grid.nx(), grid.ny(), grid.lx(), grid.ly());
            if found != expected {
                return Err(InitError::GridMismatch { expected, found });
            }
            snap.into_state(grid, 1.0)
        }
    };
    if ic.noise > 0.0 && a > 0.0 {
        let window = gaussian(grid, 4.0 * ic.sigma.max(1.0)).to_physical();
        let noisy = State::random(grid, ic.seed, a * ic.noise, 2.0 / ic.sigma.max(0.5));
        let windowed = |f: &SpectralField| {
            let mut p = f.to_physical();
            p.iter_mut().zip(&window).for_each(|(s, w)| *s *= w);
            SpectralField::from_physical(grid, &p)
        };
        state.u += &windowed(&noisy.u);
        state.v += &windowed(&noisy.v);
        state.psi += &windowed(&noisy.psi);
    }
    state.u.dealias();
    state.v.dealias();
    state.psi.dealias();
    state.project();
    Ok(state)
}

/// `exp(−r²/2σ²)` about the box centre.
pub fn gaussian(grid: &Grid2D, sigma: f64) -> SpectralField {
    let (cx, cy) = (0.5 * grid.lx(), 0.5 * grid.ly());
    SpectralField::from_fn(grid, |x, y| {
        let r2 = (x - cx).powi(2) + (y - cy).powi(2);
        (-r2 / (2.0 * sigma * sigma)).exp()
    })
}
