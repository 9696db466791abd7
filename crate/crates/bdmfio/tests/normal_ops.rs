//! Integration tests for normal-direction operators: Dirac-action orders, loss of a derivative
//! under x′-differentiation, Sobolev bounds and the leak identity.

use bdmfio::geometry::{phases, PhaseFunction, ProfileFn};
use bdmfio::halfline::{LineVector, Side};
use bdmfio::normal_ops::*;
use bdmfio::numerics::{loglog_slope, to_complex, weighted_norm, C64};
use bdmfio::symbols::{families, taylor_split, ScalarSymbol};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn opts(n: usize) -> NormalOptions {
    NormalOptions {
        modes: n,
        ..Default::default()
    }
}

/// Fitted exponent of ‖r⁺Op(a)δ^{(j)}‖_{L²} over |ξ′| ∈ {4, 8, 16, 32}.
fn dirac_slope(a: &ScalarSymbol, psi: &PhaseFunction, j: usize) -> f64 {
    let sweep = [4.0, 8.0, 16.0, 32.0];
    let vals: Vec<f64> = sweep
        .iter()
        .map(|&s| {
            let pt = FrozenPoint::new(vec![0.2], vec![s]).unwrap();
            dirac_action(a, psi, &pt, j, Side::Plus, &opts(32))
                .unwrap()
                .plus
                .norm()
        })
        .collect();
    let xs: Vec<f64> = sweep.iter().map(|s| (1.0f64 + s * s).sqrt()).collect();
    loglog_slope(&xs, &vals)
}

#[test]
fn dirac_orders() {
    // order-0 and order-(−1) rational symbols, flat and deformed phases
    let minus_one = ScalarSymbol::fiber("1/(<xi'>+i xin)", -1.0, |_, xip, t| {
        C64::new(1.0, 0.0) / C64::new((1.0 + xip[0] * xip[0]).sqrt(), t)
    });
    let cases: Vec<(ScalarSymbol, f64, PhaseFunction)> = vec![
        (families::bracket_plus(), 0.0, phases::identity(2)),
        (
            families::bracket_plus(),
            0.0,
            phases::normal_deformation(0.5),
        ),
        (minus_one, -1.0, phases::identity(2)),
    ];
    for (a, m, psi) in &cases {
        for j in 0..=1 {
            let s = dirac_slope(a, psi, j);
            let expected = m + 0.5 + j as f64;
            assert!(
                (s - expected).abs() <= 0.3,
                "{} j={j}: slope {s}, expected {expected}",
                a.name
            );
        }
    }
}

#[test]
fn dirac_closed_form() {
    let pt = FrozenPoint::new(vec![0.0], vec![1e-8]).unwrap();
    let k = dirac_action(
        &families::rational_plus(),
        &phases::identity(2),
        &pt,
        0,
        Side::Plus,
        &opts(64),
    )
    .unwrap();
    let worst = (0..200)
        .map(|i| i as f64 * 0.05)
        .map(|x| (k.eval(x).re - (-x).exp()).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-6, "{worst:e}");
}

fn derivative_family(prof: &ProfileFn, xp: f64, n: usize) -> OperatorMatrix {
    let pt = FrozenPoint::new(vec![xp], vec![1.0]).unwrap();
    tangential_derivative(
        &families::one(),
        &phases::simple(prof.clone()),
        &pt,
        1e-3,
        &opts(n),
    )
    .unwrap()
}

#[test]
fn derivative_loss() {
    let prof = ProfileFn::Sine { a: 1.5, b: 0.5 };
    let xp = 0.4;
    let (f, fp) = (prof.value(&[xp]), prof.derivative(&[xp]));
    let t = derivative_family(&prof, xp, 64);
    let u = LineVector::plus_from_fn(&t.basis(), |x| C64::new(x * x * (-x).exp(), 0.0));
    let tu = t.apply(&u).unwrap();
    for i in 0..40 {
        let x = 0.1 + 0.2 * i as f64;
        let y = f * x;
        let expected = fp * x * (2.0 * y - y * y) * (-y).exp();
        assert!((tu.eval(x).re - expected).abs() < 1e-4, "x={x}");
    }
    let t32 = derivative_family(&prof, xp, 32);
    let t128 = derivative_family(&prof, xp, 128);
    let grow = t128.sobolev_norm((1, 1.0), (1, 0.0)) / t32.sobolev_norm((1, 1.0), (1, 0.0));
    let (b32, b128) = (
        t32.sobolev_norm((1, 1.0), (0, 0.0)),
        t128.sobolev_norm((1, 1.0), (0, 0.0)),
    );
    assert!(grow >= 2.0, "growth {grow}");
    assert!((b128 - b32).abs() / b32 <= 0.1, "{b32} vs {b128}");
}

/// H^s → H^s norm of P_{2N} T P_N: the image of the N-mode span is resolved on 2N modes, which
/// avoids the H^s growth of the L²-orthogonal projection back onto N modes.
fn tall_sobolev_norm(
    a: &ScalarSymbol,
    psi: &PhaseFunction,
    pt: &FrozenPoint,
    n: usize,
    s: usize,
) -> f64 {
    let t = truncated_op(a, psi, pt, &opts(2 * n)).unwrap();
    let big = t.basis();
    let tall = t.matrix.columns(0, n).into_owned();
    let gd = to_complex(&big.with_modes(n).sobolev_gram(s, 0.0));
    let gc = to_complex(&big.sobolev_gram(s, 0.0));
    weighted_norm(&tall, &gd, &gc)
}

#[test]
fn sobolev_continuity() {
    let pt = FrozenPoint::new(vec![0.1], vec![2.0]).unwrap();
    for (a, psi) in [
        (families::bracket_plus(), phases::identity(2)),
        (families::bracket_cayley(), phases::normal_deformation(0.5)),
    ] {
        for s in 0..=2usize {
            let norms: Vec<f64> = [32, 64, 128]
                .iter()
                .map(|&n| tall_sobolev_norm(&a, &psi, &pt, n, s))
                .collect();
            let (lo, hi) = norms
                .iter()
                .fold((f64::INFINITY, 0.0f64), |(l, h), v| (l.min(*v), h.max(*v)));
            assert!(hi / lo < 1.25, "{} s={s}: {norms:?}", a.name);
        }
    }
}

#[test]
fn leak_identity_against_direct_quadrature() {
    let psi = phases::normal_deformation(0.5);
    let pt = FrozenPoint::new(vec![0.2], vec![1.0]).unwrap();
    let (_, a0) = taylor_split(&families::bracket_plus(), 2).unwrap();
    let o = opts(64);
    let l = leak_op(&a0, &psi, &pt, &o).unwrap();
    let u = LineVector::plus_from_fn(&l.basis(), |x| C64::new(x.powi(6) * (-x).exp(), 0.0));
    let v = l.apply(&u).unwrap();
    let uh = |xi: f64| C64::new(720.0, 0.0) / C64::new(1.0, xi).powi(7);
    let xs = [-0.3, -1.0, -2.5];
    let d = apply_direct(&a0, &psi, &pt, &uh, &xs, &o).unwrap();
    let scale = d.iter().map(|c| c.norm()).fold(0.0, f64::max);
    assert!(scale > 1e-6, "fixture leaks nothing");
    for (x, dv) in xs.iter().zip(&d) {
        assert!(
            (v.eval(*x) - dv).norm() < 1e-8,
            "{x}: {} vs {}",
            v.eval(*x),
            dv
        );
    }
}

fn max_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    (a - b).iter().map(|c| c.norm()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn boundary_symbol_homogeneity(lambda in 2.0f64..8.0, xi in 0.5f64..3.0) {
        let r = boundary_homogeneity_residual(
            &families::bracket_cayley(), &phases::normal_deformation(0.5), &[0.0], &[xi], lambda, &opts(32),
        ).unwrap();
        prop_assert!(r < 1e-6, "{}", r);
    }

    #[test]
    fn flat_phase_substitution(c in 0.5f64..2.0, xi in 0.5f64..4.0) {
        // ψ = x′ξ′ + c x_nξ_n is the substitution u ↦ u(c x_n) at every frozen ξ′
        let pt = FrozenPoint::new(vec![0.0], vec![xi]).unwrap();
        let t = truncated_op(&families::one(), &phases::simple(ProfileFn::Constant { value: c }), &pt, &opts(32)).unwrap();
        let d = bdmfio::numerics::to_complex(&t.basis().dilation_matrix(c));
        prop_assert!(max_diff(&t.matrix, &d) < 1e-9);
    }
}
