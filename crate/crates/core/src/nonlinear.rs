//! Quadratic nonlinearities.
//!
//! With the pressure eliminated, the perturbation equations read
//!
//! ```text
//! ∂t u + u − ∂xy ψ = Π1
//! ∂t v + v + ∂xx ψ = Π2
//! ∂t ψ + u·∇ψ + v  = 0
//! ```
//!
//! where `Π = −(u·∇u + Δψ∇ψ) + ∇Δ⁻¹∇·(u·∇u + Δψ∇ψ)`. Differentiating once
//! more in time gives damped wave equations for `u`, `v`, `ψ` forced by
//! `F1`, `F2`, `F0`.
//!
//! Products are formed on the collocation grid and dealiased by the 2/3
//! rule; all other operators act modewise.

use crate::spectral::{dot_samples, from_physical_many, to_physical_many, Axis, Grid2D, SpectralField};
use crate::state::State;

/// Switches for the right-hand side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Physics {
    /// When false, all quadratic terms are dropped.
    pub nonlinear: bool,
}

impl Default for Physics {
    fn default() -> Self {
        Self { nonlinear: true }
    }
}

impl Physics {
    pub const LINEAR: Physics = Physics { nonlinear: false };
}

/// `(∂t u, ∂t v, ∂t ψ)` of a state.
#[derive(Debug, Clone)]
pub struct Tendency {
    pub du: SpectralField,
    pub dv: SpectralField,
    pub dpsi: SpectralField,
}

#[derive(Debug, Clone)]
pub struct PiPair {
    pub pi1: SpectralField,
    pub pi2: SpectralField,
    /// Relative L² gap between the vector form and the expanded form.
    pub equivalence_residual: f64,
}

#[derive(Debug, Clone)]
pub struct ForcingTriple {
    pub f0: SpectralField,
    pub f1: SpectralField,
    pub f2: SpectralField,
    /// Relative L² gap between `F0` and `−(u + u_t)·∇φ − Π2` (with `φ = y + ψ`).
    /// Reported only.
    pub f0_alt_residual: f64,
}

/// Collocation samples of a triple and the derivatives the products need.
pub(crate) struct Sampled {
    u: Vec<f64>,
    v: Vec<f64>,
    ux: Vec<f64>,
    uy: Vec<f64>,
    vx: Vec<f64>,
    vy: Vec<f64>,
    px: Vec<f64>,
    py: Vec<f64>,
    lap: Vec<f64>,
}

impl Sampled {
    pub(crate) fn new(u: &SpectralField, v: &SpectralField, psi: &SpectralField) -> Self {
        let fields = [
            u.clone(),
            v.clone(),
            u.dx(),
            u.dy(),
            v.dx(),
            v.dy(),
            psi.dx(),
            psi.dy(),
            psi.laplacian(),
        ];
        let refs: Vec<&SpectralField> = fields.iter().collect();
        let mut it = to_physical_many(&refs).into_iter();
        let mut next = || it.next().unwrap();
        Self {
            u: next(),
            v: next(),
            ux: next(),
            uy: next(),
            vx: next(),
            vy: next(),
            px: next(),
            py: next(),
            lap: next(),
        }
    }
}

/// `a·∇(b_velocity) + Δ(a_ψ)∇(b_ψ)` on the grid.
fn q_samples(a: &Sampled, b: &Sampled) -> [Vec<f64>; 2] {
    [
        dot_samples(&[(&a.u, &b.ux), (&a.v, &b.uy), (&a.lap, &b.px)]),
        dot_samples(&[(&a.u, &b.vx), (&a.v, &b.vy), (&a.lap, &b.py)]),
    ]
}

/// `a_velocity·∇(b_ψ)` on the grid.
fn transport_samples(a: &Sampled, b: &Sampled) -> Vec<f64> {
    dot_samples(&[(&a.u, &b.px), (&a.v, &b.py)])
}

fn to_spectral(grid: &Grid2D, samples: Vec<Vec<f64>>) -> Vec<SpectralField> {
    from_physical_many(grid, &samples)
        .into_iter()
        .map(SpectralField::dealiased)
        .collect()
}

/// `Π = −Q + ∇Δ⁻¹∇·Q`, i.e. minus the Leray projection of `Q`.
fn pi_from_q(qu: &SpectralField, qv: &SpectralField) -> (SpectralField, SpectralField) {
    let div = (qu.dx() + qv.dy()).inverse_laplacian();
    let pi1 = div.dx() - qu;
    let pi2 = div.dy() - qv;
    (pi1, pi2)
}

/// Dealiased `u ∂x f + v ∂y f`.
pub fn transport(u: &SpectralField, v: &SpectralField, f: &SpectralField) -> SpectralField {
    let refs = [u, v, &f.dx(), &f.dy()];
    let s = to_physical_many(&refs);
    let prod = dot_samples(&[(&s[0], &s[2]), (&s[1], &s[3])]);
    SpectralField::from_physical(u.grid(), &prod).dealiased()
}

/// Vector form `Π = −u·∇u − Δψ∇ψ + ∇Δ⁻¹∇·(u·∇u + Δψ∇ψ)`.
pub fn pi_vector(state: &State) -> (SpectralField, SpectralField) {
    let q = quadratic(state);
    pi_from_q(&q[0], &q[1])
}

/// `Q = u·∇u + Δψ∇ψ`, the quantity `Π` projects.
fn quadratic(state: &State) -> Vec<SpectralField> {
    let s = Sampled::new(&state.u, &state.v, &state.psi);
    to_spectral(state.grid(), q_samples(&s, &s).to_vec())
}

/// The term-by-term expansion in which each nonlocal operator is written
/// with as many x-derivatives as possible.
pub fn pi_expanded(state: &State) -> (SpectralField, SpectralField) {
    use Axis::{X, Y};
    let (u, v, psi) = (&state.u, &state.v, &state.psi);
    let grid = state.grid();
    let fields = [
        u.clone(),
        v.clone(),
        u.dx(),
        u.dy(),
        v.dx(),
        psi.dx(),
        psi.dy(),
        psi.deriv(X, 2),
        psi.deriv(Y, 2),
        psi.dx().dy(),
    ];
    let refs: Vec<&SpectralField> = fields.iter().collect();
    let s = to_physical_many(&refs);
    let (su, sv, sux, suy, svx, spx, spy, spxx, spyy, spxy) =
        (&s[0], &s[1], &s[2], &s[3], &s[4], &s[5], &s[6], &s[7], &s[8], &s[9]);
    let p = |a: &Vec<f64>, b: &Vec<f64>| dot_samples(&[(a, b)]);
    let products = vec![
        p(su, sux),   // 0  u ux
        p(sv, suy),   // 1  v uy
        p(su, svx),   // 2  u vx
        p(sv, sux),   // 3  v ux
        p(spx, spxx), // 4  ψx ψxx
        p(spx, spyy), // 5  ψx ψyy
        p(spy, spxx), // 6  ψy ψxx
        p(spy, spxy), // 7  ψy ψxy
        p(su, sv),    // 8  u v
        p(spy, spyy), // 9  ψy ψyy
        p(spx, spx),  // 10 ψx ψx
        p(spx, spy),  // 11 ψx ψy
    ];
    let q = to_spectral(grid, products);
    let nl = |f: &SpectralField, a, b| f.nonlocal(a, b);
    // ∂^{ax}∂^{ay} Δ⁻¹ with three derivatives
    let d3 = |f: &SpectralField, nx: u32, ny: u32| f.deriv(X, nx).deriv(Y, ny).inverse_laplacian();

    let pi1 = -&q[0] - &q[1] + nl(&q[2], X, Y) - nl(&q[3], X, Y) + nl(&q[0], X, X) + nl(&q[1], X, X) - &q[4] - &q[5]
        + nl(&q[6], X, Y)
        + nl(&q[7], Y, Y)
        + nl(&q[4], X, X)
        + nl(&q[5], X, X);

    let pi2 = nl(&q[2], X, X) * -2.0 + q[8].dx() + nl(&q[0], X, Y) * 2.0 - nl(&q[6], X, X) - nl(&q[9], X, X)
        + d3(&q[10], 2, 1) * 0.5
        + d3(&q[11], 1, 2)
        - nl(&q[7], X, Y);
    (pi1, pi2)
}

fn relative_gap(a: &SpectralField, b: &SpectralField) -> f64 {
    let diff = (a - b).l2_norm();
    let scale = a.l2_norm().max(b.l2_norm());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// `Π1, Π2` by both forms; the vector form is returned. The residual is
/// measured against `‖u·∇u + Δψ∇ψ‖` so that it stays meaningful when the
/// projection nearly annihilates the quadratic term.
pub fn pi_terms(state: &State) -> PiPair {
    let q = quadratic(state);
    let (pi1, pi2) = pi_from_q(&q[0], &q[1]);
    let (e1, e2) = pi_expanded(state);
    let diff = ((&pi1 - &e1).l2_norm().powi(2) + (&pi2 - &e2).l2_norm().powi(2)).sqrt();
    let scale = (q[0].l2_norm().powi(2) + q[1].l2_norm().powi(2)).sqrt();
    let equivalence_residual = if scale == 0.0 { diff } else { diff / scale };
    PiPair {
        pi1,
        pi2,
        equivalence_residual,
    }
}

/// Right-hand side of the first-order system:
/// `du = −u + ∂xyψ + Π1`, `dv = −v − ∂xxψ + Π2`, `dψ = −u·∇ψ − v`.
pub fn time_derivative_fields(state: &State) -> Tendency {
    time_derivative_fields_with(state, Physics::default())
}

pub fn time_derivative_fields_with(state: &State, physics: Physics) -> Tendency {
    let (u, v, psi) = (&state.u, &state.v, &state.psi);
    let psi_x = psi.dx();
    let mut du = psi_x.dy() - u;
    let mut dv = -psi_x.dx() - v;
    let mut dpsi = -v;
    if physics.nonlinear {
        let s = Sampled::new(u, v, psi);
        let [qu, qv] = q_samples(&s, &s);
        let adv = transport_samples(&s, &s);
        let mut f = to_spectral(state.grid(), vec![qu, qv, adv]).into_iter();
        let (qu, qv, adv) = (f.next().unwrap(), f.next().unwrap(), f.next().unwrap());
        let (pi1, pi2) = pi_from_q(&qu, &qv);
        du += &pi1;
        dv += &pi2;
        dpsi -= &adv;
    }
    Tendency { du, dv, dpsi }
}

/// Second-order forcings with `∂t` inside them expanded by the product
/// rule, using the state's own tendencies.
pub fn forcing_terms(state: &State) -> ForcingTriple {
    let d = time_derivative_fields(state);
    forcing_terms_from(state, &d)
}

/// As [`forcing_terms`] but with caller-supplied time derivatives
/// (e.g. those carried by the second-order integrator).
pub fn forcing_terms_from(state: &State, d: &Tendency) -> ForcingTriple {
    let grid = state.grid();
    let s = Sampled::new(&state.u, &state.v, &state.psi);
    let st = Sampled::new(&d.du, &d.dv, &d.dpsi);
    let [qu, qv] = q_samples(&s, &s);
    let [qtu_a, qtv_a] = q_samples(&st, &s);
    let [qtu_b, qtv_b] = q_samples(&s, &st);
    let qtu: Vec<f64> = qtu_a.iter().zip(&qtu_b).map(|(a, b)| a + b).collect();
    let qtv: Vec<f64> = qtv_a.iter().zip(&qtv_b).map(|(a, b)| a + b).collect();
    let adv = transport_samples(&s, &s);
    let adv_t_vel = transport_samples(&st, &s);
    let adv_t_psi = transport_samples(&s, &st);
    let f = to_spectral(grid, vec![qu, qv, qtu, qtv, adv, adv_t_vel, adv_t_psi]);
    let (_, pi2) = pi_from_q(&f[0], &f[1]);
    let (pi1_t, pi2_t) = pi_from_q(&f[2], &f[3]);
    let (adv, adv_t_vel, adv_t_psi) = (&f[4], &f[5], &f[6]);
    let adv_t = adv_t_vel + adv_t_psi;

    let f0 = -adv - &adv_t - &pi2;
    let f1 = pi1_t - adv.dx().dy();
    let f2 = pi2_t + adv.deriv(Axis::X, 2);

    // −(u + u_t)·∇φ − Π2 with ∇φ = ∇ψ + e_y
    let alt = -adv - adv_t_vel - &state.v - &d.dv - &pi2;
    let f0_alt_residual = relative_gap(&f0, &alt);
    ForcingTriple {
        f0,
        f1,
        f2,
        f0_alt_residual,
    }
}
