#![allow(dead_code)]

use kglab_core::grid::{RealField, TorusGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Sum of `modes` random plane waves with `|xi|_inf <= kmax`, unit-variance
/// amplitudes damped by `exp(-|xi|^2 / 4)`.
pub fn random_field(grid: TorusGrid, seed: u64, modes: usize, kmax: f64) -> RealField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = grid.dim();
    let dxi = grid.dxi();
    let top = (kmax / dxi).floor() as i64;
    let waves: Vec<(Vec<f64>, f64, f64)> = (0..modes)
        .map(|_| {
            let xi: Vec<f64> = (0..d).map(|_| rng.random_range(-top..=top) as f64 * dxi).collect();
            let damp = (-xi.iter().map(|v| v * v).sum::<f64>() / 4.0).exp();
            let a: f64 = rng.sample::<f64, _>(StandardNormal) * damp;
            (xi, a, rng.random_range(0.0..std::f64::consts::TAU))
        })
        .collect();
    RealField::from_fn(grid, |x| {
        waves
            .iter()
            .map(|(xi, a, ph)| a * (xi.iter().zip(x).map(|(k, y)| k * y).sum::<f64>() + ph).cos())
            .sum()
    })
}

/// Gaussian bump `amp * exp(-|x - c|^2 / (2 w^2))`.
pub fn bump(grid: TorusGrid, center: &[f64], width: f64, amp: f64) -> RealField {
    let c = center.to_vec();
    RealField::from_fn(grid, move |x| {
        let r2: f64 = x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
        amp * (-r2 / (2.0 * width * width)).exp()
    })
}

pub fn max_diff(a: &RealField, b: &RealField) -> f64 {
    a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `f` with its values on `mask` set to zero.
pub fn zero_on(f: RealField, mask: &[bool]) -> RealField {
    let mut f = f;
    for (v, m) in f.values_mut().iter_mut().zip(mask) {
        if *m {
            *v = 0.0;
        }
    }
    f
}
