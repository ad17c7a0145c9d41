mod common;

use common::{bump, random_field};
use kglab_core::decomposition::{
    atom, cell_multiplier, cube_indices, enlarged_cell_multiplier, max_cell_index, modulation_norm, project_frequency_cell,
    spatial_cells, spatial_window, DyadicWindow, UnitPartition,
};
use kglab_core::grid::{ComplexField, RealField, SpectralField, TorusGrid};
use kglab_core::Error;
use num_complex::Complex64;
use proptest::prelude::*;

fn grid() -> TorusGrid {
    TorusGrid::new(2, 64, 26.0).unwrap()
}

fn complex_l2_diff(a: &ComplexField, b: &ComplexField) -> f64 {
    let mut d = a.clone();
    d.add_scaled(Complex64::new(-1.0, 0.0), b).unwrap();
    d.lp_norm(2.0)
}

#[test]
fn plateau_plane_wave_passes_and_far_cell_vanishes() {
    let g = grid();
    let xi0 = [(2.0 / g.dxi()).round() * g.dxi(), (-1.0 / g.dxi()).round() * g.dxi()];
    let f = RealField::from_fn(g, |x| (xi0[0] * x[0] + xi0[1] * x[1]).cos());
    // The cosine splits into +-xi0; only +xi0 lies in cell (2, -1).
    let half = ComplexField::from_fn(g, |x| Complex64::from_polar(0.5, xi0[0] * x[0] + xi0[1] * x[1]));
    let p = project_frequency_cell(&f, &[2, -1]).unwrap();
    assert!(complex_l2_diff(&p, &half) < 1e-10 * half.lp_norm(2.0));
    assert!(project_frequency_cell(&f, &[4, -1]).unwrap().max_abs() < 1e-12);
}

#[test]
fn band_limited_field_is_resummed() {
    let g = grid();
    let f = random_field(g, 8, 30, 2.5);
    let mut acc = ComplexField::zeros(g);
    for k in cube_indices(2, 3) {
        acc.add_scaled(Complex64::new(1.0, 0.0), &project_frequency_cell(&f, &k).unwrap()).unwrap();
    }
    assert!(complex_l2_diff(&acc, &f.to_complex()) < 1e-10 * f.lp_norm(2.0));
}

#[test]
fn out_of_band_cell_rejected() {
    let g = TorusGrid::new(1, 32, 26.0).unwrap();
    assert!(matches!(project_frequency_cell(&RealField::zeros(g), &[4]), Err(Error::OutOfBand(_))));
}

#[test]
fn enlarged_projection_fixes_cell() {
    let g = grid();
    let f = random_field(g, 4, 40, 3.0).forward();
    for k in [[0i64, 0], [2, -1], [-3, 3]] {
        let pk = cell_multiplier(&g, &k).unwrap().apply(&f);
        let twice = enlarged_cell_multiplier(&g, &k).unwrap().apply(&pk);
        let mut d = twice.clone();
        d.add_scaled(Complex64::new(-1.0, 0.0), &pk).unwrap();
        assert!(d.l2_norm() < 1e-10 * pk.l2_norm().max(1e-300), "k={k:?}");
    }
}

#[test]
fn spatial_windows_resum_and_localize() {
    let g = grid();
    let f = random_field(g, 2, 10, 2.0);
    let mut acc = RealField::zeros(g);
    for l in spatial_cells(&g).unwrap() {
        acc.add_scaled(1.0, &spatial_window(&f, &l).unwrap()).unwrap();
    }
    let err = acc.values().iter().zip(f.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-12 * f.max_abs().max(1.0));
    let one = RealField::from_fn(g, |_| 1.0);
    let w = spatial_window(&one, &[3, -2]).unwrap();
    let p = UnitPartition;
    for (i, v) in w.values().iter().enumerate() {
        let x = g.point(i);
        assert!((v - p.eval(&[x[0] - 3.0, x[1] + 2.0])).abs() < 1e-15);
    }
    let clipped = bump(g, &[0.0, 0.0], 0.05, 1.0).map(|v| if v < 1e-3 { 0.0 } else { v });
    assert_eq!(spatial_window(&clipped, &[3, 0]).unwrap().max_abs(), 0.0);
}

#[test]
fn atom_spectrum_stays_in_cell() {
    let g = grid();
    let f = random_field(g, 6, 30, 3.0);
    let a = atom(&f, &[1, -2], &[0, 1]).unwrap();
    let spec = a.payload.forward();
    let total = spec.l2_norm();
    let mut outside = 0.0;
    for (i, c) in spec.coeffs().iter().enumerate() {
        let xi = g.wavevector(i);
        if (xi[0] - 1.0).abs() > 1.0 || (xi[1] + 2.0).abs() > 1.0 {
            outside += c.norm_sqr();
        }
    }
    assert!((outside / g.volume()).sqrt() <= 1e-10 * total);
}

#[test]
fn zero_field_has_zero_modulation_norm() {
    let g = grid();
    assert_eq!(modulation_norm(&RealField::zeros(g), 1.0, 2.0, 2.0, 2.0).unwrap(), 0.0);
    assert!(modulation_norm(&RealField::zeros(g), 1.0, 0.5, 2.0, 2.0).is_err());
}

/// A unit-scale spatial window spreads frequency by about 2 pi, so the mass
/// of a windowed plane wave is shared by many cells (the k = 0 column even
/// carries the most here). What holds exactly is the bookkeeping.
#[test]
fn column_masses_resum_to_modulation_norm() {
    let g = grid();
    let xi0 = (2.0 / g.dxi()).round() * g.dxi();
    let f = RealField::from_fn(g, |x| (xi0 * x[0]).cos() * (-(x[0] * x[0] + x[1] * x[1]) / 18.0).exp());
    let whole = modulation_norm(&f, 0.0, 2.0, 2.0, 2.0).unwrap();
    let windows: Vec<SpectralField> =
        spatial_cells(&g).unwrap().iter().map(|l| spatial_window(&f, l).unwrap().forward()).collect();
    let column = |k: &[i64]| -> f64 {
        let m = cell_multiplier(&g, k).unwrap();
        windows.iter().map(|w| m.l2_norm_of(w).powi(2)).sum()
    };
    let mut total = 0.0;
    for k in cube_indices(2, max_cell_index(&g)) {
        let c = column(&k);
        let neg: Vec<i64> = k.iter().map(|v| -v).collect();
        assert!((c - column(&neg)).abs() <= 1e-10 * c.max(1e-300), "{k:?}");
        total += c;
    }
    assert!((total.sqrt() / whole - 1.0).abs() < 1e-6, "{} vs {whole}", total.sqrt());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn frequency_partition_of_unity(a in -20.0f64..20.0, b in -20.0f64..20.0, c in -20.0f64..20.0) {
        let v = [a, b, c];
        let p = UnitPartition;
        let base: Vec<i64> = v.iter().map(|x| x.round() as i64).collect();
        let mut sum = 0.0;
        for off in cube_indices(3, 1) {
            let k: Vec<i64> = base.iter().zip(&off).map(|(x, o)| x + o).collect();
            sum += p.shifted(&v, &k);
        }
        prop_assert!((sum - 1.0).abs() < 1e-12);
        let inner: f64 = p.eval(&v);
        prop_assert!((0.0..=1.0).contains(&inner));
    }

    #[test]
    fn dyadic_telescoping(r in 0.0f64..64.0) {
        let w = DyadicWindow;
        let total: f64 = (0..8).map(|j| w.psi(1 << j, r)).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cell_projection_is_linear(seed in any::<u64>(), a in -3.0f64..3.0) {
        let g = TorusGrid::new(1, 64, 26.0).unwrap();
        let f = random_field(g, seed, 6, 4.0);
        let lhs = project_frequency_cell(&f.scaled(a), &[2]).unwrap();
        let mut rhs = project_frequency_cell(&f, &[2]).unwrap();
        rhs.scale(Complex64::new(a, 0.0));
        prop_assert!(complex_l2_diff(&lhs, &rhs) <= 1e-12 * (1.0 + rhs.lp_norm(2.0)));
    }
}
