//! Property tests for the deformation family and the index estimator.

use bdmfio::geometry::{charts, hamiltonian_flow_chart, hamiltonians, phases};
use bdmfio::index_lab::*;
use bdmfio::normal_ops::{FrozenPoint, NormalOptions};
use bdmfio::symbols::families;
use proptest::prelude::*;

fn small() -> NormalOptions {
    NormalOptions {
        modes: 16,
        ..Default::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn rescaling_eta_and_t(lambda in 0.25f64..4.0) {
        let f = DeformationFamily::new("nd", phases::normal_deformation(0.5), vec![0.0], vec![1.0])
            .unwrap()
            .with_t_grid(vec![0.5, 0.125]);
        let g = f.rescaled(lambda).with_t_grid(vec![0.5 / lambda, 0.125 / lambda]);
        let (a, b) = (deformation_continuity(&f, &small()).unwrap(), deformation_continuity(&g, &small()).unwrap());
        for (x, y) in a.rows.iter().zip(&b.rows) {
            prop_assert!((x.norm_diff - y.norm_diff).abs() < 1e-6, "{:?} {:?}", x, y);
        }
    }

    #[test]
    fn index_stable_under_rank_one(coef in -1e-3f64..1e-3, flow in 0usize..2) {
        let pt = FrozenPoint::new(vec![0.3], vec![1.0]).unwrap();
        let io = IndexOptions { normal: small(), ..Default::default() };
        let chart = match flow {
            0 => charts::identity(2),
            _ => hamiltonian_flow_chart(&hamiltonians::normal_shear(0.5), 0.2).unwrap(),
        };
        let u = build_u(&chart, &families::one(), &pt, &io.normal).unwrap();
        let base = index_estimate(&u, &io).unwrap();
        prop_assert!(base.svd_gap >= 10.0);
        let p = index_estimate(&with_rank_one(&u, coef).unwrap(), &io).unwrap();
        prop_assert_eq!(p.estimated_index, base.estimated_index);
    }
}

#[test]
fn linear_family_is_constant() {
    let f = DeformationFamily::new("flat", phases::identity(2), vec![0.0], vec![1.0]).unwrap();
    let r = deformation_continuity(&f, &small()).unwrap();
    assert!((f.c - 1.0).abs() < 1e-12);
    assert!(r
        .rows
        .iter()
        .all(|row| row.norm_diff < 1e-10 && row.schur_bound < 1e-10));
}
