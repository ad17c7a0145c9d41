mod common;

use common::random_field;
use kglab_core::grid::{mixed_norm, sobolev_norm, RealField, TorusGrid};
use proptest::prelude::*;

fn grid2() -> TorusGrid {
    TorusGrid::new(2, 32, 26.0).unwrap()
}

#[test]
fn round_trip_on_random_field() {
    let g = TorusGrid::new(3, 16, 26.0).unwrap();
    let f = random_field(g, 5, 20, 2.0);
    let back = f.forward().inverse_real();
    let err = f.values().iter().zip(back.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-10 * f.max_abs(), "{err:.3e}");
}

#[test]
fn sobolev_single_mode() {
    // cos(xi0 x) has |f^|^2 = (L/2)^2 at +-xi0, so ||f||_{H^s}^2 = <xi0>^{2s} L / 2.
    let g = TorusGrid::new(1, 64, 8.0 * std::f64::consts::PI).unwrap();
    let xi0 = 3.0 * g.dxi();
    let f = RealField::from_fn(g, |x| (xi0 * x[0]).cos());
    for s in [0.0, 0.5, 1.0, 2.0] {
        let expect = ((1.0 + xi0 * xi0).powf(s) * g.extent() / 2.0).sqrt();
        let got = sobolev_norm(&f, s);
        assert!((got - expect).abs() < 1e-10 * expect, "s={s}: {got} vs {expect}");
    }
}

#[test]
fn zero_field_norms() {
    let g = grid2();
    let z = RealField::zeros(g);
    assert_eq!(sobolev_norm(&z, 1.5), 0.0);
    assert_eq!(mixed_norm(&[0.0, 1.0], &[&z, &z], 2.0, 4.0, (0.0, 1.0)).unwrap(), 0.0);
}

#[test]
fn mixed_norm_window_errors() {
    let g = grid2();
    let f = random_field(g, 1, 4, 1.0);
    assert!(mixed_norm(&[0.0, 1.0], &[&f, &f], 2.0, 2.0, (1.0, 1.0)).is_err());
    assert!(mixed_norm(&[0.0, 1.0], &[&f, &f], 2.0, 2.0, (0.0, 2.0)).is_err());
}

fn field_strategy() -> impl Strategy<Value = RealField> {
    (any::<u64>(), 1usize..12, 0.5f64..3.0).prop_map(|(seed, modes, kmax)| random_field(grid2(), seed, modes, kmax))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn parseval(f in field_strategy()) {
        let phys = f.lp_norm(2.0);
        let spec = f.forward().l2_norm();
        prop_assert!((phys - spec).abs() <= 1e-10 * phys.max(1e-300));
    }

    #[test]
    fn real_fields_are_hermitian(f in field_strategy()) {
        prop_assert!(f.forward().hermitian_defect() < 1e-12);
    }

    #[test]
    fn sobolev_monotone_in_s(f in field_strategy(), s in -1.0f64..2.0, ds in 0.01f64..1.0) {
        prop_assert!(sobolev_norm(&f, s + ds) >= sobolev_norm(&f, s) * (1.0 - 1e-12));
    }

    #[test]
    fn mixed_norm_homogeneous(f in field_strategy(), a in -5.0f64..5.0, q in 1.0f64..8.0, r in 1.0f64..8.0) {
        let g = f.scaled(0.5);
        let times = [0.0, 0.5, 1.0];
        let base = mixed_norm(&times, &[&f, &g, &f], q, r, (0.0, 1.0)).unwrap();
        let (fa, ga) = (f.scaled(a), g.scaled(a));
        let scaled = mixed_norm(&times, &[&fa, &ga, &fa], q, r, (0.0, 1.0)).unwrap();
        prop_assert!((scaled - a.abs() * base).abs() <= 1e-10 * (1.0 + base * a.abs()));
    }

    #[test]
    fn constant_trajectory(f in field_strategy(), r in 1.0f64..6.0) {
        let lr = f.lp_norm(r);
        let sup = mixed_norm(&[0.0, 0.3, 1.0], &[&f, &f, &f], f64::INFINITY, r, (0.0, 1.0)).unwrap();
        let two = mixed_norm(&[0.0, 1.0], &[&f, &f], 2.0, r, (0.0, 1.0)).unwrap();
        prop_assert!((sup - lr).abs() <= 1e-12 * lr.max(1e-300));
        prop_assert!((two - lr).abs() <= 1e-12 * lr.max(1e-300));
    }

    #[test]
    fn binary_container_round_trips(f in field_strategy()) {
        let mut buf = Vec::new();
        f.write_binary(&mut buf).unwrap();
        prop_assert_eq!(buf.len(), 8 * 3 + 8 * f.values().len());
        prop_assert_eq!(RealField::read_binary(&buf[..]).unwrap(), f);
    }
}
