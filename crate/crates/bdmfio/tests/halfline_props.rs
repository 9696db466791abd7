//! Property tests for the half-line basis: the ξ-multiplication induction formula, dilations and
//! the transform.

use bdmfio::halfline::{
    delta_rep, dilate, measure, transform_forward, FrequencyGrid, HalfLineBasis, LineVector, Side,
    Space,
};
use bdmfio::numerics::C64;
use nalgebra::DVector;
use proptest::prelude::*;

const I: C64 = C64::new(0.0, 1.0);

/// u(x) = Σ c_k x^k e^{−ax} on ℝ₊ with its closed-form transform Σ c_k k!/(a+iξ)^{k+1}.
#[derive(Clone, Debug)]
struct Fixture {
    a: f64,
    c: Vec<f64>,
}

impl Fixture {
    fn eval(&self, x: f64) -> f64 {
        self.c
            .iter()
            .enumerate()
            .map(|(k, c)| c * x.powi(k as i32))
            .sum::<f64>()
            * (-self.a * x).exp()
    }

    fn hat(&self, xi: f64) -> C64 {
        let z = C64::new(self.a, xi);
        let mut fact = 1.0;
        let mut s = C64::new(0.0, 0.0);
        for (k, c) in self.c.iter().enumerate() {
            if k > 0 {
                fact *= k as f64;
            }
            s += C64::new(c * fact, 0.0) / z.powu(k as u32 + 1);
        }
        s
    }
}

/// max over the grid |ξ^j ê⁺u − (−i)^j(ê⁺u^{(j)} + Σ_l u^{(l)}(0) δ̂^{(j−l−1)})|, the right side
/// assembled from basis derivatives, basis jets and symbolic Dirac atoms.
fn derep2_residual(f: &Fixture, j: usize) -> f64 {
    let basis = HalfLineBasis::new(64, 2.0);
    let u = LineVector::plus_from_fn(&basis, |x| C64::new(f.eval(x), 0.0));
    let d = basis.diff_matrix().map(|v| C64::new(v, 0.0));
    let mut dj = u.plus.clone();
    for _ in 0..j {
        dj = &d * dj;
    }
    let uj = LineVector::full(basis.beta(), dj, DVector::zeros(64));
    let grid = FrequencyGrid::new(128, basis.beta());
    let tj = transform_forward(&uj, &grid).unwrap();
    let atoms: Vec<Vec<C64>> = (0..j)
        .map(|k| delta_rep(k, &basis).unwrap().transform(&grid))
        .collect();
    let mut worst: f64 = 0.0;
    for (i, &x) in grid.xi.iter().enumerate() {
        if x.abs() > 8.0 {
            continue;
        }
        let lhs = C64::new(x, 0.0).powu(j as u32) * f.hat(x);
        let mut rhs = tj.values[i];
        for l in 0..j {
            rhs += u.jet_value(l) * atoms[j - l - 1][i];
        }
        rhs *= (-I).powu(j as u32);
        worst = worst.max((lhs - rhs).norm() / (1.0 + lhs.norm()));
    }
    worst
}

#[test]
fn derep2_on_exponential() {
    let f = Fixture {
        a: 1.0,
        c: vec![1.0],
    };
    for j in 0..=4 {
        let r = derep2_residual(&f, j);
        assert!(r < 1e-6, "j={j}: {r:e}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn derep2_on_random_schwartz(
        a in 0.8f64..2.5,
        c in prop::collection::vec(-1.0f64..1.0, 1..4),
        j in 0usize..=4,
    ) {
        let f = Fixture { a, c };
        let r = derep2_residual(&f, j);
        prop_assert!(r < 1e-6, "{:?} j={} residual {:e}", f, j, r);
    }

    #[test]
    fn dilation_group_law(l1 in 0.3f64..3.0, l2 in 0.3f64..3.0, seed in prop::collection::vec(-1.0f64..1.0, 8)) {
        let basis = HalfLineBasis::new(8, 2.0);
        let u = LineVector::plus(basis.beta(), DVector::from_iterator(8, seed.iter().map(|v| C64::new(*v, 0.0))));
        let a = dilate(&dilate(&u, l1).unwrap(), l2).unwrap();
        let b = dilate(&u, l1 * l2).unwrap();
        for &x in &[0.1, 0.6, 1.7] {
            prop_assert!((a.eval(x) - b.eval(x)).norm() < 1e-10);
        }
        // orthonormal basis: L² norms are coefficient norms
        prop_assert!((a.plus.norm() - u.plus.norm()).abs() < 1e-10 * (1.0 + u.plus.norm()));
    }

    #[test]
    fn extension_is_adjoint_of_restriction(k in 0usize..16, l in 0usize..16) {
        // ⟨e⁺φ_k, φ_l⟩_{L²(ℝ)} equals the L²(ℝ₊) product of φ_k and r⁺φ_l
        let basis = HalfLineBasis::new(16, 2.0);
        let (xs, ws) = basis.quadrature(64, basis.beta());
        let p = basis.phi_matrix(&xs, 16);
        let ip: f64 = (0..xs.len()).map(|i| ws[i] * p[(i, k)] * p[(i, l)]).sum();
        let e = if k == l { 1.0 } else { 0.0 };
        prop_assert!((ip - e).abs() < 1e-10);
    }
}

#[test]
fn jet_and_l2_of_exponential() {
    let basis = HalfLineBasis::new(64, 2.0);
    let u = LineVector::plus_from_fn(&basis, |x| C64::new((-x).exp(), 0.0));
    assert!((measure(&u, Space::Jet(0)).unwrap() - 1.0).abs() < 1e-10);
    assert!((measure(&u, Space::L2).unwrap() - 0.5f64.sqrt()).abs() < 1e-10);
}

#[test]
fn transform_of_extension_is_rational() {
    let basis = HalfLineBasis::new(32, 2.0);
    let u = LineVector::full_from_fn(&basis, |x| {
        C64::new(if x >= 0.0 { (-x).exp() } else { 0.0 }, 0.0)
    });
    assert_eq!(u.side, Side::Full);
    let grid = FrequencyGrid::new(64, basis.beta());
    let t = transform_forward(&u, &grid).unwrap();
    for (k, &x) in grid.xi.iter().enumerate() {
        assert!((t.values[k] - C64::new(1.0, 0.0) / C64::new(1.0, x)).norm() < 1e-10);
    }
}
