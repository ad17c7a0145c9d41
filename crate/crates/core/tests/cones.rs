mod common;

use common::{bump, random_field, zero_on};
use kglab_core::cones::{
    check_conditions, cone_difference, flux_audit, local_energy, local_force, localized_solution, shell_volume, Cone,
    ConeKind, ExponentBudget, SampledPieces,
};
use kglab_core::grid::{RealField, StatePair, TorusGrid};
use kglab_core::solver::{integrate, FnForcing, Forcing, NonlinearModel, Trajectory};
use kglab_core::Error;

fn model() -> NonlinearModel {
    NonlinearModel::new(2, 3.0).unwrap()
}

#[test]
fn solutions_agree_inside_cone_when_data_agree_on_base() {
    let g = TorusGrid::new(2, 128, 64.0).unwrap();
    let cone = Cone::new(0.0, vec![0.0, 0.0], 4, ConeKind::Standard).unwrap();
    let base = cone.slice_mask(&g, 0.0);
    let u0 = bump(g, &[0.0, 0.0], 2.0, 0.8);
    let u1 = bump(g, &[1.0, -1.0], 1.5, 0.4);
    let a = StatePair::new(u0.clone(), u1.clone()).unwrap();
    // far-away Gaussians, cut to exactly zero on the base (the cut is at the 1e-10 level)
    let mut v0 = u0.clone();
    v0.add_scaled(1.0, &zero_on(bump(g, &[18.0, 3.0], 1.5, 0.7), &base)).unwrap();
    let mut v1 = u1.clone();
    v1.add_scaled(1.0, &zero_on(bump(g, &[-4.0, 18.0], 1.5, -0.5), &base)).unwrap();
    let b = StatePair::new(v0, v1).unwrap();
    // data differ only outside the doubled base
    for (i, m) in base.iter().enumerate() {
        if *m {
            assert_eq!(a.u.values()[i], b.u.values()[i]);
        }
    }
    let ta = integrate(&a, 0.0, 1e-2, 400, 10, &model(), None).unwrap();
    let tb = integrate(&b, 0.0, 1e-2, 400, 10, &model(), None).unwrap();
    let diff = cone_difference(&ta, &tb, &cone).unwrap();
    assert!(diff < 1e-6, "difference in cone {diff:.3e}");
    // outside the cone the solutions do differ
    let wide = cone.widened();
    assert!(cone_difference(&ta, &tb, &wide).unwrap() > 1e-2);
}

fn constant_trajectory(g: TorusGrid, c: f64, t_end: f64, h: f64) -> Trajectory {
    let steps = (t_end / h).round() as usize;
    let s = StatePair::new(RealField::from_fn(g, |_| c), RealField::zeros(g)).unwrap();
    Trajectory::new((0..=steps).map(|i| i as f64 * h).collect(), vec![s; steps + 1]).unwrap()
}

#[test]
fn local_force_of_constant_field_is_shell_volume() {
    let g = TorusGrid::new(2, 256, 64.0).unwrap();
    let (n, delta, h, c) = (4u64, 0.05, 0.25, 0.5);
    let traj = constant_trajectory(g, c, 4.0, h);
    let cone = Cone::new(0.0, vec![0.0, 0.0], n, ConeKind::Standard).unwrap();
    let got = local_force(&traj, &cone, delta, &model()).unwrap();
    let w = (n as f64).powf(10.0 * delta);
    // sup over t' is at an endpoint, where the lags run over 0..N
    let m = traj.times.len();
    let expected = (0..m)
        .map(|tp| {
            (0..m)
                .map(|j| {
                    let wt = if j == 0 || j == m - 1 { 0.5 * h } else { h };
                    wt * shell_volume(2, (traj.times[j] - traj.times[tp]).abs(), w)
                })
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
        * c.powi(4);
    assert!((got / expected - 1.0).abs() < 0.03, "{got} vs {expected}");
}

#[test]
fn local_force_rejects_wrapping_shells() {
    let g = TorusGrid::new(2, 32, 26.0).unwrap();
    let traj = constant_trajectory(g, 1.0, 16.0, 0.5);
    let cone = Cone::new(0.0, vec![0.0, 0.0], 16, ConeKind::Standard).unwrap();
    assert!(matches!(local_force(&traj, &cone, 0.01, &model()), Err(Error::WrapAround(_))));
}

#[test]
fn local_energy_grows_with_enlargement_and_needs_coverage() {
    let g = TorusGrid::new(2, 64, 48.0).unwrap();
    let s = StatePair::new(random_field(g, 5, 10, 1.5).scaled(0.2), RealField::zeros(g)).unwrap();
    let traj = integrate(&s, 0.0, 2e-2, 100, 10, &model(), None).unwrap();
    let cone = Cone::new(0.0, vec![0.0, 0.0], 2, ConeKind::Standard).unwrap();
    let e = local_energy(&traj, &cone, &model()).unwrap();
    let ew = local_energy(&traj, &cone.widened(), &model()).unwrap();
    assert!(ew >= e);
    let late = Cone::new(1.0, vec![0.0, 0.0], 2, ConeKind::Standard).unwrap();
    assert!(matches!(local_energy(&traj, &late, &model()), Err(Error::CoverageGap { .. })));
}

#[test]
fn unforced_flux_does_not_create_energy() {
    let g = TorusGrid::new(2, 128, 64.0).unwrap();
    let data = StatePair::new(random_field(g, 7, 16, 1.0).scaled(0.3), random_field(g, 8, 16, 1.0).scaled(0.3)).unwrap();
    let cone = Cone::new(0.0, vec![0.0, 0.0], 2, ConeKind::Standard).unwrap();
    let w = localized_solution(&data, None, &cone, 1e-2, 10, &model()).unwrap();
    let rep = flux_audit(&w, &data, None, &cone, 0.01, &model()).unwrap();
    assert!(rep.energy_ratio <= 1.0 + 1e-3, "{}", rep.energy_ratio);
    assert_eq!(rep.constant_energy, 0.0);
    assert!(rep.c0 > 0.0 && rep.constant_force.is_finite());
}

fn budget() -> ExponentBudget {
    ExponentBudget { d: 2, s: 0.95, delta: 0.01, theta: 0.5, alpha: 0.8, beta: 0.1 }
}

#[test]
fn zero_forcing_passes_all_conditions() {
    let g = TorusGrid::new(2, 32, 26.0).unwrap();
    let zero = FnForcing(move |_t: f64| RealField::zeros(g));
    let times: Vec<f64> = (0..=40).map(|i| i as f64 * 0.1).collect();
    let sampled = SampledPieces::sample(times.clone(), &[(1, &zero as &dyn Forcing), (2, &zero)]);
    let u = constant_trajectory(g, 0.2, 4.0, 0.1);
    let rep = check_conditions(&sampled, &g, &budget(), 0.1, 1.0, &model(), &[2], 2.0, &[&u]).unwrap();
    assert!(rep.all_pass());
    assert_eq!(rep.ii.margin(), 0.1);
    assert!(!rep.iv.is_empty());
}

#[test]
fn slowly_decaying_piece_violates_condition_iii() {
    let g = TorusGrid::new(2, 32, 26.0).unwrap();
    let zero = FnForcing(move |_t: f64| RealField::zeros(g));
    let tail = FnForcing(move |t: f64| RealField::from_fn(g, |_| 0.05 / (1.0 + t)));
    let times: Vec<f64> = (0..=100).map(|i| i as f64 * 0.1).collect();
    let sampled = SampledPieces::sample(times, &[(1, &zero as &dyn Forcing), (2, &tail)]);
    let rep = check_conditions(&sampled, &g, &budget(), 0.01, 1e6, &model(), &[], 0.0, &[]).unwrap();
    assert!(rep.iii[0].pass);
    assert!(!rep.iii[1].pass);
    assert!(!rep.all_pass());
}

mod props {
    use super::*;
    use kglab_core::cones::{optimized_threshold, regularity_threshold, Q};
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn widened_cone_contains_the_cone(t in 0.0f64..4.0, x0 in -10.0f64..10.0, x1 in -10.0f64..10.0) {
            let cone = Cone::new(0.0, vec![0.0, 0.0], 4, ConeKind::Standard).unwrap();
            if cone.contains(t, &[x0, x1]) {
                prop_assert!(cone.widened().contains(t, &[x0, x1]));
            }
        }

        #[test]
        fn threshold_monotone_in_delta(d in 4i64..=5, a in 0i64..50, b in 0i64..50, th in 1i64..20, be in 1i64..20) {
            let (lo, hi) = (a.min(b), a.max(b));
            let theta = Q::new(th, 20);
            let beta = Q::new(be, 100);
            let s_lo = regularity_threshold(d, Q::new(lo, 2500), theta, beta).s_min;
            let s_hi = regularity_threshold(d, Q::new(hi, 2500), theta, beta).s_min;
            prop_assert!(s_lo <= s_hi);
        }

        #[test]
        fn threshold_monotone_above_balance(d in 4i64..=5, a in 0i64..40, b in 0i64..40) {
            let star = optimized_threshold(d).unwrap().theta_star;
            let zero = Q::from_integer(0);
            let (lo, hi) = (star + Q::new(a.min(b), 40), star + Q::new(a.max(b), 40));
            let s_lo = regularity_threshold(d, zero, lo, zero).s_min;
            let s_hi = regularity_threshold(d, zero, hi, zero).s_min;
            prop_assert!(s_lo <= s_hi);
            prop_assert!(optimized_threshold(d).unwrap().s_min <= s_lo);
        }
    }
}
