//! Property checks shared by the property suite and the acceptance target.
#![allow(dead_code)]

use mhdlab_core::diagnostics::{decay_fit, sobolev_norm, NormP};
use mhdlab_core::lp::{dyadic_scales, project, ProjMode, RieszFactor};
use mhdlab_core::nonlinear::{forcing_terms, forcing_terms_from, pi_vector, time_derivative_fields_with, Physics};
use mhdlab_core::spectral::{leray_project, Axis, Grid2D, SpectralField};
use mhdlab_core::state::State;
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<(), TestCaseError>;

pub fn rel_gap(a: &SpectralField, b: &SpectralField) -> f64 {
    let d = (a - b).l2_norm();
    let s = a.l2_norm().max(b.l2_norm());
    if s == 0.0 {
        d
    } else {
        d / s
    }
}

pub fn random_field(grid: &Grid2D, seed: u64) -> SpectralField {
    SpectralField::random(grid, &mut ChaCha8Rng::seed_from_u64(seed), 1.0, 6.0)
}

pub fn random_samples(grid: &Grid2D, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Arbitrary real samples survive physical → spectral → physical.
pub fn spectral_round_trip(seed: u64, n: usize) -> Check {
    let g = Grid2D::unit_periodic(n);
    let a = random_samples(&g, seed);
    let back = SpectralField::from_physical(&g, &a).to_physical();
    let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let err = a.iter().zip(&back).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    prop_assert!(err <= 1e-12 * scale, "round trip error {err:e}");
    Ok(())
}

/// Mixed derivatives commute up to one rounding per coefficient.
pub fn deriv_commutes(seed: u64) -> Check {
    let f = random_field(&Grid2D::new(32, 32, 6.0, 9.0).unwrap(), seed);
    let xy = f.dx().dy();
    let yx = f.dy().dx();
    prop_assert!(xy.max_coeff_diff(&yx) <= 1e-15 * xy.max_coeff().max(1e-300));
    Ok(())
}

pub fn parseval(seed: u64) -> Check {
    let g = Grid2D::new(32, 48, 5.0, 7.0).unwrap();
    let f = random_field(&g, seed);
    let quad = (f.to_physical().iter().map(|x| x * x).sum::<f64>() * g.cell_area()).sqrt();
    let spec = sobolev_norm(&f, 0.0, NormP::Two);
    prop_assert!((quad - spec).abs() <= 1e-12 * quad);
    Ok(())
}

pub fn leray_idempotent(seed: u64) -> Check {
    let g = Grid2D::unit_periodic(32);
    let (u, v) = (random_field(&g, seed), random_field(&g, seed + 7919));
    let (pu, pv) = leray_project(&u, &v);
    let (ppu, ppv) = leray_project(&pu, &pv);
    prop_assert!(ppu.max_coeff_diff(&pu) <= 1e-13);
    prop_assert!(ppv.max_coeff_diff(&pv) <= 1e-13);
    Ok(())
}

/// Every composed Riesz symbol has modulus ≤ 1 on every grid mode.
pub fn riesz_symbol_bounded(pattern: &[(usize, usize, bool)], len: f64) -> Check {
    let axes = [Axis::X, Axis::Y];
    let factors: Vec<RieszFactor> = pattern
        .iter()
        .map(|&(a, b, neg)| {
            let f = RieszFactor::new(axes[a], axes[b]);
            if neg {
                f.negated()
            } else {
                f
            }
        })
        .collect();
    let g = Grid2D::new(24, 24, len, len).unwrap();
    for &kx in g.kx() {
        for &ky in g.ky() {
            let m: f64 = factors.iter().map(|f| f.symbol(kx, ky)).product();
            prop_assert!(m.abs() <= 1.0 + 1e-15, "symbol {m} at ({kx}, {ky})");
        }
    }
    Ok(())
}

pub fn decay_fit_scale_invariant(c: f64, p: f64) -> Check {
    let series: Vec<(f64, f64)> = (2..=120)
        .map(|i| {
            let t = i as f64 * 0.5;
            (t, t.powf(p) * (1.0 + 0.2 * t.sin()))
        })
        .collect();
    let scaled: Vec<(f64, f64)> = series.iter().map(|&(t, v)| (t, c * v)).collect();
    let a = decay_fit(&series, (5.0, 50.0)).unwrap();
    let b = decay_fit(&scaled, (5.0, 50.0)).unwrap();
    prop_assert!((a.exponent - b.exponent).abs() <= 1e-10);
    prop_assert!((a.r_squared - b.r_squared).abs() <= 1e-10);
    Ok(())
}

pub fn homogeneity_state(seed: u64) -> State {
    State::random(&Grid2D::new(32, 32, 16.0, 16.0).unwrap(), seed, 1e-2, 1.5)
}

/// `Π` and the quadratic part of `F` scale by `λ²`; the full `F` is
/// `λ²F₂ + λ³F₃` exactly.
pub fn quadratic_homogeneity(seed: u64, lambda: f64) -> Check {
    let s = homogeneity_state(seed);
    let sl = s.scaled(lambda);
    let l2 = lambda * lambda;

    let (p1, p2) = pi_vector(&s);
    let (q1, q2) = pi_vector(&sl);
    prop_assert!(rel_gap(&q1, &(&p1 * l2)) <= 1e-12);
    prop_assert!(rel_gap(&q2, &(&p2 * l2)) <= 1e-12);

    let quad = |st: &State| forcing_terms_from(st, &time_derivative_fields_with(st, Physics::LINEAR));
    let (a, b) = (quad(&s), quad(&sl));
    for (x, y) in [(&a.f0, &b.f0), (&a.f1, &b.f1), (&a.f2, &b.f2)] {
        prop_assert!(rel_gap(y, &(x * l2)) <= 1e-12);
    }

    // the λ³ part comes from the quadratic pieces of the tendency
    let full = |st: &State| forcing_terms(st);
    let (fa, fb) = (full(&s), full(&sl));
    for (fq, fu, fl, ql) in [
        (&a.f0, &fa.f0, &fb.f0, &b.f0),
        (&a.f1, &fa.f1, &fb.f1, &b.f1),
        (&a.f2, &fa.f2, &fb.f2, &b.f2),
    ] {
        let cubic = fu - fq;
        let want = ql + &(&cubic * (l2 * lambda));
        prop_assert!(rel_gap(fl, &want) <= 1e-11);
    }
    Ok(())
}

/// Translating the state in `x` translates `Π` and `F`.
pub fn translation_covariance(seed: u64, shift: f64) -> Check {
    let s = homogeneity_state(seed);
    let st = s.translated(shift, 0.0);
    let (p1, p2) = pi_vector(&s);
    let (q1, q2) = pi_vector(&st);
    prop_assert!(rel_gap(&q1, &p1.translated(shift, 0.0)) <= 1e-12);
    prop_assert!(rel_gap(&q2, &p2.translated(shift, 0.0)) <= 1e-12);
    let (f, ft) = (forcing_terms(&s), forcing_terms(&st));
    for (a, b) in [(&f.f0, &ft.f0), (&f.f1, &ft.f1), (&f.f2, &ft.f2)] {
        prop_assert!(rel_gap(b, &a.translated(shift, 0.0)) <= 1e-12);
    }
    Ok(())
}

/// Complementarity, dyadic telescoping and idempotence of the projectors.
pub fn lp_exactness(seed: u64, m: f64) -> Check {
    let g = Grid2D::unit_periodic(48);
    let f = SpectralField::random(&g, &mut ChaCha8Rng::seed_from_u64(seed), 1.0, 8.0);
    let sum = project(&f, m, ProjMode::Leq) + project(&f, m, ProjMode::Gt);
    prop_assert!(sum.max_coeff_diff(&f) <= 1e-12);
    let scales = dyadic_scales(m, 16.0 * m);
    let mut acc = SpectralField::zeros(&g);
    for &s in &scales {
        acc += &project(&f, s, ProjMode::Band);
    }
    let want = project(&f, *scales.last().unwrap(), ProjMode::Leq) - project(&f, 0.5 * m, ProjMode::Leq);
    prop_assert!(acc.max_coeff_diff(&want) <= 1e-12);
    Ok(())
}
