//! Microlocal randomization of Cauchy data and empirical checks of the
//! sub-Gaussian toolbox (Khinchin, maximal inequality, tails).
//!
//! The randomized datum is
//!
//! ```text
//! f^w = sum_{|k|_inf <= K} sum_l X_k P_k(Y_l phi_l f)
//!     = F^{-1}( m_X F(w_Y f) ),   m_X = sum_k X_k phi(. - k),  w_Y = sum_l Y_l phi_l
//! ```
//!
//! To keep `f^w` real, `X_k` and `X_{-k}` are the same draw.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::decomposition::{cell_multiplier, frequency_cells, spatial_cells, tensor_multiplier, window_1d};
use crate::error::{Error, Result};
use crate::grid::{RealField, SpectralField, StatePair, TorusGrid};

/// Real, mean-zero, unit-variance families.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubGaussianFamily {
    Rademacher,
    StandardGaussian,
    /// Uniform on `[-sqrt 3, sqrt 3]`.
    UniformSymmetric,
    /// Every draw equals the given value. Not random; used to check that the
    /// decomposition reassembles the datum.
    Constant(f64),
}

impl SubGaussianFamily {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            Self::StandardGaussian => StandardNormal.sample(rng),
            Self::UniformSymmetric => {
                let a = 3f64.sqrt();
                Uniform::new_inclusive(-a, a).expect("finite bounds").sample(rng)
            }
            Self::Constant(c) => c,
        }
    }

    /// `sup_p p^{-1/2} ||X||_{L^p}` (attained at `p = 1` for each family here).
    pub fn psi_norm(&self) -> f64 {
        match *self {
            Self::Rademacher => 1.0,
            Self::StandardGaussian => (2.0 / std::f64::consts::PI).sqrt(),
            Self::UniformSymmetric => 3f64.sqrt() / 2.0,
            Self::Constant(c) => c.abs(),
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based seed mixing: `H(base, tag, index)` folds each word through
/// SplitMix64. Draws depend only on this key, never on iteration order.
pub fn mix_seed(base: u64, tag: u64, index: &[i64]) -> u64 {
    let mut h = splitmix(base ^ splitmix(tag));
    h = splitmix(h ^ index.len() as u64);
    for &c in index {
        h = splitmix(h ^ c as u64);
    }
    h
}

const TAG_X: u64 = 0x58; // 'X'
const TAG_Y: u64 = 0x59; // 'Y'
const TAG_DRAW: u64 = 0x44; // 'D'

/// Base seed and family for one realization of `{X_k}`, `{Y_l}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomSeedPlan {
    pub base_seed: u64,
    pub family: SubGaussianFamily,
}

impl RandomSeedPlan {
    pub fn new(base_seed: u64, family: SubGaussianFamily) -> Self {
        Self { base_seed, family }
    }

    fn draw(&self, tag: u64, index: &[i64]) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.base_seed, tag, index));
        self.family.sample(&mut rng)
    }

    /// `X_k`, shared between `k` and `-k`.
    pub fn x(&self, k: &[i64]) -> f64 {
        let neg: Vec<i64> = k.iter().map(|c| -c).collect();
        let key = if neg.as_slice() > k { neg.as_slice() } else { k };
        self.draw(TAG_X, key)
    }

    /// `Y_l`.
    pub fn y(&self, l: &[i64]) -> f64 {
        self.draw(TAG_Y, l)
    }

    /// Plan for Monte Carlo draw number `i`.
    pub fn nth(&self, i: u64) -> Self {
        Self { base_seed: mix_seed(self.base_seed, TAG_DRAW, &[i as i64]), family: self.family }
    }
}

fn axis_support(grid: &TorusGrid, c: f64) -> Vec<(usize, f64)> {
    grid.axis_coords()
        .iter()
        .enumerate()
        .map(|(j, &x)| (j, window_1d(grid.wrap(x - c))))
        .filter(|e| e.1 != 0.0)
        .collect()
}

/// `w_Y = sum_l Y_l phi_l` on the physical grid.
pub fn spatial_weight(grid: &TorusGrid, plan: &RandomSeedPlan) -> Result<RealField> {
    let mut w = RealField::zeros(*grid);
    let vals = w.values_mut();
    for l in spatial_cells(grid)? {
        let y = plan.y(&l);
        let per_axis = l.iter().map(|&c| axis_support(grid, c as f64)).collect();
        for (i, v) in tensor_multiplier(grid, per_axis).entries {
            vals[i] += y * v;
        }
    }
    Ok(w)
}

/// `m_X = sum_{|k|_inf <= K} X_k phi(xi - k)` on the spectral grid.
pub fn frequency_weight(grid: &TorusGrid, plan: &RandomSeedPlan, kmax: i64) -> Result<Vec<f64>> {
    let mut m = vec![0.0; grid.len()];
    for k in frequency_cells(grid, kmax)? {
        let x = plan.x(&k);
        for (i, v) in cell_multiplier(grid, &k)?.entries {
            m[i] += x * v;
        }
    }
    Ok(m)
}

fn apply_weights(f: &RealField, w: &RealField, m: &[f64]) -> Result<RealField> {
    let mut s = f.mul(w)?.forward();
    s.multiply_table(m);
    Ok(s.inverse_real())
}

/// Randomizes `(f, g)` with one realization of the plan, truncating to
/// `|k|_inf <= kmax` and every spatial cell of the torus.
pub fn randomize_data(f: &RealField, g: &RealField, plan: &RandomSeedPlan, kmax: i64) -> Result<StatePair> {
    let grid = f.grid();
    if grid != g.grid() {
        return Err(Error::GridMismatch);
    }
    let m = frequency_weight(grid, plan, kmax)?;
    let w = spatial_weight(grid, plan)?;
    StatePair::new(apply_weights(f, &w, &m)?, apply_weights(g, &w, &m)?)
}

/// `sum_{|k|_inf <= K, l} ||P_k(phi_l f)||_{L^2}^2`.
pub fn atom_energy(f: &RealField, kmax: i64) -> Result<f64> {
    let grid = f.grid();
    let mults = frequency_cells(grid, kmax)?
        .iter()
        .map(|k| cell_multiplier(grid, k))
        .collect::<Result<Vec<_>>>()?;
    let mut total = 0.0;
    for l in spatial_cells(grid)? {
        let lf: Vec<f64> = l.iter().map(|&c| c as f64).collect();
        let spec: SpectralField = f.mul(&crate::decomposition::spatial_window_field(grid, &lf)?)?.forward();
        total += mults.iter().map(|m| m.l2_norm_of(&spec).powi(2)).sum::<f64>();
    }
    Ok(total)
}

/// Monte Carlo moments of `f^w`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MomentReport {
    pub draws: usize,
    /// `||mean_w f^w||_{L^2}`.
    pub mean_norm: f64,
    /// `mean_w ||f^w||_{L^2}^2`.
    pub mean_square: f64,
    /// `sum_{k,l} ||P_k(phi_l f)||_{L^2}^2`.
    pub atom_energy: f64,
}

impl MomentReport {
    /// Three standard errors of the sample mean.
    pub fn mean_tolerance(&self) -> f64 {
        3.0 * (self.mean_square / self.draws as f64).sqrt()
    }

    pub fn isometry_ratio(&self) -> f64 {
        self.mean_square / self.atom_energy
    }
}

/// Draws `draws` independent realizations of `f^w` (draw `i` uses `plan.nth(i)`).
pub fn randomization_moments(f: &RealField, plan: &RandomSeedPlan, kmax: i64, draws: usize) -> Result<MomentReport> {
    if draws == 0 {
        return Err(Error::InvalidArgument("need at least one draw".into()));
    }
    let grid = f.grid();
    let mut mean = RealField::zeros(*grid);
    let mut sq = 0.0;
    for i in 0..draws {
        let p = plan.nth(i as u64);
        let m = frequency_weight(grid, &p, kmax)?;
        let w = spatial_weight(grid, &p)?;
        let fw = apply_weights(f, &w, &m)?;
        sq += fw.lp_norm(2.0).powi(2);
        mean.add_scaled(1.0, &fw)?;
    }
    mean.scale(1.0 / draws as f64);
    Ok(MomentReport {
        draws,
        mean_norm: mean.lp_norm(2.0),
        mean_square: sq / draws as f64,
        atom_energy: atom_energy(f, kmax)?,
    })
}

/// `(E|Z|^p)^{1/p}` for a standard Gaussian `Z`.
pub fn gaussian_abs_moment(p: f64) -> f64 {
    let ln = ln_gamma((p + 1.0) / 2.0) - 0.5 * std::f64::consts::PI.ln();
    2f64.sqrt() * (ln / p).exp()
}

/// `(E|sum a_j e_j|^p)^{1/p}` over all `2^J` sign patterns.
pub fn rademacher_exact_moment(a: &[f64], p: f64) -> Result<f64> {
    if a.len() > 24 {
        return Err(Error::InvalidArgument("exhaustive enumeration limited to 24 terms".into()));
    }
    let total = 1u64 << a.len();
    let mut acc = 0.0;
    for mask in 0..total {
        let s: f64 = a.iter().enumerate().map(|(j, &v)| if mask >> j & 1 == 1 { v } else { -v }).sum();
        acc += s.abs().powf(p);
    }
    Ok((acc / total as f64).powf(1.0 / p))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct KhinchinRow {
    pub p: f64,
    pub empirical: f64,
    /// `p^{1/2} ||a||_2`.
    pub bound: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KhinchinTable {
    pub rows: Vec<KhinchinRow>,
    /// `max_p empirical / bound`.
    pub constant: f64,
}

/// Empirical `L^p` norms of `sum_j a_j X_j`.
pub fn verify_khinchin(
    family: SubGaussianFamily,
    a: &[f64],
    p_grid: &[f64],
    draws: usize,
    seed: u64,
) -> Result<KhinchinTable> {
    let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::InvalidArgument("coefficient vector must be nonzero".into()));
    }
    if p_grid.is_empty() || p_grid.iter().any(|p| !(1.0..=16.0).contains(p)) {
        return Err(Error::InvalidArgument("p grid must lie in [1, 16]".into()));
    }
    if draws == 0 {
        return Err(Error::InvalidArgument("need at least one draw".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sums: Vec<f64> = (0..draws)
        .map(|_| a.iter().map(|&v| v * family.sample(&mut rng)).sum::<f64>().abs())
        .collect();
    let rows: Vec<KhinchinRow> = p_grid
        .iter()
        .map(|&p| {
            let m = sums.iter().map(|s| s.powf(p)).sum::<f64>() / draws as f64;
            KhinchinRow { p, empirical: m.powf(1.0 / p), bound: p.sqrt() * norm }
        })
        .collect();
    let constant = rows.iter().map(|r| r.empirical / r.bound).fold(0.0, f64::max);
    Ok(KhinchinTable { rows, constant })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MaxRow {
    pub j: usize,
    /// Empirical `E max_{j <= J} |X_j|`.
    pub expected_max: f64,
    /// `log <J>`.
    pub bound: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MaxTable {
    pub rows: Vec<MaxRow>,
    /// `max_J ratio / min_J ratio` of `expected_max / bound`.
    pub spread: f64,
}

/// Empirical expected maxima of `J` independent draws.
pub fn verify_max_inequality(family: SubGaussianFamily, j_grid: &[usize], draws: usize, seed: u64) -> Result<MaxTable> {
    if j_grid.is_empty() || j_grid.iter().any(|&j| !(1..=100_000).contains(&j)) {
        return Err(Error::InvalidArgument("J grid must lie in [1, 1e5]".into()));
    }
    if draws == 0 {
        return Err(Error::InvalidArgument("need at least one draw".into()));
    }
    let rows: Vec<MaxRow> = j_grid
        .iter()
        .map(|&j| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, TAG_DRAW, &[j as i64]));
            let total: f64 = (0..draws)
                .map(|_| (0..j).map(|_| family.sample(&mut rng).abs()).fold(0.0, f64::max))
                .sum();
            let jf = j as f64;
            MaxRow { j, expected_max: total / draws as f64, bound: (1.0 + jf * jf).sqrt().ln() }
        })
        .collect();
    let ratios = rows.iter().map(|r| r.expected_max / r.bound);
    let hi = ratios.clone().fold(0.0, f64::max);
    let lo = ratios.fold(f64::INFINITY, f64::min);
    Ok(MaxTable { rows, spread: hi / lo })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TailFit {
    /// Fitted exponent `c` in `P(|X| > t) <= 2 exp(-c t^2)`.
    pub c_hat: f64,
    /// `max_{p in {1,2,4,8}} p^{-1/2} (mean |X|^p)^{1/p}`.
    pub psi_estimate: f64,
    /// `(t, empirical survival)` points used in the fit.
    pub survival: Vec<(f64, f64)>,
}

/// `max_{p in {1,2,4,8}} p^{-1/2} (mean |X|^p)^{1/p}`; 0 for no samples.
pub fn psi_estimate(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let n = samples.len() as f64;
    [1.0f64, 2.0, 4.0, 8.0]
        .iter()
        .map(|&p| (samples.iter().map(|a| a.abs().powf(p)).sum::<f64>() / n).powf(1.0 / p) / p.sqrt())
        .fold(0.0, f64::max)
}

/// Fits the Gaussian tail exponent from the empirical survival function.
///
/// `ln(S(t)/2)` is regressed on `t^2` (with intercept) over 40 equally spaced
/// levels up to the largest level still exceeded by 50 samples. `c_hat` is
/// `NaN` when the samples have no tail to fit (e.g. all equal).
pub fn tail_statistics(samples: &[f64]) -> Result<TailFit> {
    if samples.len() < 1000 {
        return Err(Error::InsufficientData(format!("{} samples, need 1000", samples.len())));
    }
    let n = samples.len() as f64;
    let mut abs: Vec<f64> = samples.iter().map(|x| x.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let psi_estimate = psi_estimate(samples);
    let top = abs[abs.len() - 50];
    let mut survival = Vec::new();
    if top > 0.0 {
        for i in 1..=40 {
            let t = top * i as f64 / 40.0;
            let count = abs.len() - abs.partition_point(|&a| a <= t);
            if count > 0 {
                survival.push((t, count as f64 / n));
            }
        }
    }
    let c_hat = if survival.len() >= 3 {
        let xs: Vec<f64> = survival.iter().map(|s| s.0 * s.0).collect();
        let ys: Vec<f64> = survival.iter().map(|s| (s.1 / 2.0).ln()).collect();
        let m = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        -sxy / sxx
    } else {
        f64::NAN
    };
    Ok(TailFit { c_hat, psi_estimate, survival })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_order_independent() {
        let plan = RandomSeedPlan::new(7, SubGaussianFamily::StandardGaussian);
        let a = plan.x(&[3, -1]);
        let _ = plan.y(&[0, 0]);
        assert_eq!(a, plan.x(&[3, -1]));
        assert_eq!(a, plan.x(&[-3, 1]));
        assert_ne!(plan.x(&[1]), plan.x(&[2]));
    }

    #[test]
    fn rademacher_exact_examples() {
        assert!((rademacher_exact_moment(&[1.0, 1.0], 2.0).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(rademacher_exact_moment(&[1.0], 5.0).unwrap(), 1.0);
    }

    #[test]
    fn gaussian_moments_closed_form() {
        assert!((gaussian_abs_moment(2.0) - 1.0).abs() < 1e-14);
        assert!((gaussian_abs_moment(1.0) - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-14);
        assert!((gaussian_abs_moment(4.0) - 3f64.powf(0.25)).abs() < 1e-14);
    }

    #[test]
    fn single_rademacher_has_unit_norms() {
        let t = verify_khinchin(SubGaussianFamily::Rademacher, &[1.0, 0.0, 0.0], &[1.0, 2.0, 8.0], 500, 1).unwrap();
        for r in &t.rows {
            assert!((r.empirical - 1.0).abs() < 1e-15);
        }
        assert!(verify_khinchin(SubGaussianFamily::Rademacher, &[0.0], &[2.0], 10, 1).is_err());
        assert!(verify_khinchin(SubGaussianFamily::Rademacher, &[1.0], &[32.0], 10, 1).is_err());
    }

    #[test]
    fn max_of_one_rademacher() {
        let t = verify_max_inequality(SubGaussianFamily::Rademacher, &[1], 100, 3).unwrap();
        assert_eq!(t.rows[0].expected_max, 1.0);
    }

    #[test]
    fn tail_degenerate_inputs() {
        assert!(tail_statistics(&[1.0; 10]).is_err());
        let z = tail_statistics(&vec![0.0; 2000]).unwrap();
        assert_eq!(z.psi_estimate, 0.0);
        let r: Vec<f64> = (0..2000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!(tail_statistics(&r).unwrap().psi_estimate <= 1.0);
    }

    #[test]
    fn constant_family_reassembles() {
        let g = TorusGrid::new(1, 128, 32.0).unwrap();
        let f = RealField::from_fn(g, |x| (-(x[0] * x[0]) / 2.0).exp());
        let plan = RandomSeedPlan::new(0, SubGaussianFamily::Constant(1.0));
        let k = crate::decomposition::max_cell_index(&g);
        let out = randomize_data(&f, &f, &plan, k).unwrap();
        let err = out.u.values().iter().zip(f.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
    }
}
