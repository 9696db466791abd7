//! Integration tests for block symbols: multiplicativity of the boundary principal symbol,
//! associativity, conjugation by boundary FIOs and parametrices.

use bdmfio::bdm::fixtures::{elliptic_symbol, first_order_symbol, full_block};
use bdmfio::bdm::*;
use bdmfio::geometry::{phases, PhaseFunction, ProfileFn};
use bdmfio::normal_ops::{FrozenPoint, NormalOptions};
use bdmfio::symbols::{families, ScalarSymbol};
use proptest::prelude::*;

fn opts() -> NormalOptions {
    NormalOptions {
        modes: 32,
        ..Default::default()
    }
}

fn fio(
    name: &str,
    a: ScalarSymbol,
    psi: PhaseFunction,
    m: f64,
    chart: &str,
    pt: &FrozenPoint,
) -> BdMBlockSymbol {
    let parts = BlockParts::default().with_fio(a, psi).with_chart(chart);
    assemble_block(name, &parts, m, m.ceil().max(0.0) as usize, pt, &opts()).unwrap()
}

#[test]
fn multiplicativity_decay() {
    let pts = sweep_points(&[0.1], &[1.0], &[4.0, 8.0, 16.0, 32.0]).unwrap();
    let p = &pts[0];
    let b0 = full_block(0, p, &opts()).unwrap();
    let a1 = full_block(1, p, &opts()).unwrap();
    let deformed = fio(
        "deformed",
        families::bracket_plus(),
        phases::normal_deformation(0.5),
        0.0,
        "nd",
        p,
    );
    let first = fio(
        "first",
        first_order_symbol(),
        phases::identity(2),
        1.0,
        "id",
        p,
    );
    for (b, a) in [(&b0, &a1), (&b0, &deformed), (&first, &a1)] {
        let fit = multiplicativity_defect(b, a, &pts, &opts()).unwrap();
        let bound = b.order + a.order - 1.0 + 0.3;
        if let Some(s) = fit.slope {
            assert!(
                s <= bound,
                "{} ∘ {}: slope {s} > {bound} ({:?})",
                b.name,
                a.name,
                fit.values
            );
        }
    }
}

#[test]
fn egorov_over_identity() {
    let p = FrozenPoint::new(vec![0.1], vec![2.0]).unwrap();
    let a = fio(
        "A",
        families::bracket_cayley(),
        phases::normal_deformation(0.5),
        0.0,
        "nd",
        &p,
    );
    let q = full_block(2, &p, &opts()).unwrap();
    let r = egorov_conjugate(&a, &q).unwrap();
    assert!(
        r.chart_is_identity && r.class_ok,
        "{} {}",
        r.block.chart,
        r.fiber_identity_defect
    );
    assert!(r.fiber_identity_defect <= 1e-8);
}

#[test]
fn parametrices_of_elliptic_fixtures() {
    let p = FrozenPoint::new(vec![0.0], vec![1.5]).unwrap();
    let e = fio("ell", elliptic_symbol(), phases::identity(2), 0.0, "id", &p);
    assert!(parametrix_symbol(&e).unwrap().residual <= 1e-8);
    let c = fio(
        "ell-deformed",
        elliptic_symbol(),
        phases::normal_deformation(0.5),
        0.0,
        "nd",
        &p,
    );
    assert!(parametrix_symbol(&c).unwrap().residual <= 1e-8);
    // η′ → 0: the boundary symbol of the flat phase with f ≡ 1.3 is the dilation u ↦ u(1.3 x_n)
    let basis = bdmfio::halfline::HalfLineBasis::new(32, 2.0);
    let d = bdmfio::normal_ops::boundary_symbol_in(
        &families::one(),
        &phases::simple(ProfileFn::Constant { value: 1.3 }),
        &[0.0],
        &[0.0],
        &basis,
        &opts(),
    )
    .unwrap();
    assert!(parametrix_of(&d).unwrap().residual <= 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn associativity(i in 0usize..3, j in 0usize..3, k in 0usize..3, xi in 1.0f64..8.0) {
        let p = FrozenPoint::new(vec![0.3], vec![xi]).unwrap();
        let (c, b, a) = (full_block(i, &p, &opts()).unwrap(), full_block(j, &p, &opts()).unwrap(), full_block(k, &p, &opts()).unwrap());
        let r = associativity_residual(&c, &b, &a).unwrap();
        prop_assert!(r <= 1e-8, "{}", r);
    }

    #[test]
    fn adjoint_is_involutive(i in 0usize..3, xi in 1.0f64..8.0) {
        let p = FrozenPoint::new(vec![0.3], vec![xi]).unwrap();
        let a = full_block(i, &p, &opts()).unwrap();
        let aa = adjoint(&adjoint(&a).unwrap()).unwrap();
        let d = (&aa.matrix - &a.matrix).iter().map(|c| c.norm()).fold(0.0, f64::max);
        prop_assert!(d < 1e-10, "{}", d);
    }
}
