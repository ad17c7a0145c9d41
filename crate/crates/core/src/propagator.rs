//! Exact spectral linear Klein-Gordon flow, and measurements of the
//! unit-cell decay and Strichartz scaling laws.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::decomposition::{cell_multiplier, check_dyadic, dyadic_multiplier, window_1d};
use crate::error::{Error, Result};
use crate::fit::{loglog_fit, RegressionResult};
use crate::grid::{bracket, time_norm, ComplexField, RealField, SpectralField, StatePair, TorusGrid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// `e^{+-it<grad>}` as a spectral multiplier.
#[derive(Clone, Debug)]
pub struct HalfWaveFlow {
    grid: TorusGrid,
    sign: Sign,
    symbol: Vec<f64>,
}

impl HalfWaveFlow {
    pub fn new(grid: TorusGrid, sign: Sign) -> Self {
        Self { grid, sign, symbol: grid.bracket_table() }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn apply_spectral(&self, f: &SpectralField, t: f64) -> Result<SpectralField> {
        if f.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        let s = self.sign.value() * t;
        let data = f
            .coeffs()
            .iter()
            .zip(&self.symbol)
            .map(|(c, &w)| c * Complex64::from_polar(1.0, s * w))
            .collect();
        SpectralField::from_vec(self.grid, data)
    }

    pub fn apply(&self, f: &ComplexField, t: f64) -> Result<ComplexField> {
        Ok(self.apply_spectral(&f.forward(), t)?.inverse())
    }
}

/// `e^{+-it<grad>} f` for real `f` (complex in general).
pub fn evolve_half_wave(f: &RealField, t: f64, sign: Sign) -> ComplexField {
    let flow = HalfWaveFlow::new(*f.grid(), sign);
    flow.apply_spectral(&f.forward(), t).expect("same grid").inverse()
}

/// The linear propagator `K(t)` acting on Cauchy data.
#[derive(Clone, Debug)]
pub struct PairFlow {
    grid: TorusGrid,
    symbol: Vec<f64>,
}

impl PairFlow {
    pub fn new(grid: TorusGrid) -> Self {
        Self { grid, symbol: grid.bracket_table() }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    /// `<xi>` in storage order.
    pub fn symbol(&self) -> &[f64] {
        &self.symbol
    }

    /// Evolves spectral data `(u^, u_t^)` in place.
    pub fn evolve_spectral(&self, u: &mut SpectralField, ut: &mut SpectralField, t: f64) {
        let (uc, vc) = (u.coeffs_mut(), ut.coeffs_mut());
        for ((a, b), &w) in uc.iter_mut().zip(vc.iter_mut()).zip(&self.symbol) {
            let (s, c) = (t * w).sin_cos();
            let (a0, b0) = (*a, *b);
            *a = a0 * c + b0 * (s / w);
            *b = -a0 * (w * s) + b0 * c;
        }
    }

    pub fn evolve(&self, state: &StatePair, t: f64) -> Result<StatePair> {
        if state.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        let (mut u, mut ut) = (state.u.forward(), state.ut.forward());
        self.evolve_spectral(&mut u, &mut ut, t);
        StatePair::new(u.inverse_real(), ut.inverse_real())
    }

    /// `||<grad> u||^2 + ||u_t||^2`.
    pub fn linear_energy(&self, state: &StatePair) -> f64 {
        let u = state.u.forward().sobolev_norm(1.0);
        let v = state.ut.lp_norm(2.0);
        u * u + v * v
    }
}

/// `K(t)(u_0, u_1)`.
pub fn evolve_pair(state: &StatePair, t: f64) -> Result<StatePair> {
    PairFlow::new(*state.grid()).evolve(state, t)
}

/// Where the cell propagator is computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    /// Modulated data evolved by `e^{it<xi>}` on the torus.
    Lab,
    /// Demodulated data `g` evolved by `e^{it w(eta)}` with
    /// `w(eta) = <k+eta> - <k> - eta.k/<k>`. Equal in modulus to the lab field
    /// translated by the group velocity `k/<k>`, so every `L^r` norm agrees
    /// while the packet stays near the origin.
    CoMoving,
}

/// Probe data before modulation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Probe {
    /// `exp(-|x|^2 / (2 w^2))`.
    Isotropic { width: f64 },
    /// Width `radial` along `k`, width `<k>` across it.
    Knapp { radial: f64 },
}

impl Probe {
    fn widths(&self, k: &[i64]) -> (f64, f64) {
        let kf: Vec<f64> = k.iter().map(|&c| c as f64).collect();
        match *self {
            Probe::Isotropic { width } => (width, width),
            Probe::Knapp { radial } => {
                if kf.iter().all(|&c| c == 0.0) {
                    (radial, radial)
                } else {
                    (radial, bracket(&kf))
                }
            }
        }
    }

    fn field(&self, grid: &TorusGrid, k: &[i64]) -> RealField {
        let (wr, wt) = self.widths(k);
        let kn = k.iter().map(|&c| (c * c) as f64).sum::<f64>().sqrt();
        let dir: Vec<f64> = if kn > 0.0 {
            k.iter().map(|&c| c as f64 / kn).collect()
        } else {
            let mut e = vec![0.0; k.len()];
            e[0] = 1.0;
            e
        };
        RealField::from_fn(*grid, |x| {
            let xr: f64 = x.iter().zip(&dir).map(|(a, b)| a * b).sum();
            let x2: f64 = x.iter().map(|a| a * a).sum();
            (-(xr * xr) / (2.0 * wr * wr) - (x2 - xr * xr).max(0.0) / (2.0 * wt * wt)).exp()
        })
    }

    /// Diameter of the region where the amplitude exceeds `SUPPORT_LEVEL`.
    fn diameter(&self, k: &[i64]) -> f64 {
        let (wr, wt) = self.widths(k);
        2.0 * wr.max(wt) * (-2.0 * SUPPORT_LEVEL.ln()).sqrt()
    }
}

/// Relative amplitude below which a tail counts as outside the support.
const SUPPORT_LEVEL: f64 = 1e-6;

fn dual_exponent(r: f64) -> f64 {
    if r.is_infinite() {
        1.0
    } else if r == 1.0 {
        f64::INFINITY
    } else {
        r / (r - 1.0)
    }
}

/// Evolution of one windowed datum under a fixed phase table.
struct CellPropagator {
    spec: SpectralField,
    phase: Vec<f64>,
    speed: f64,
}

impl CellPropagator {
    fn new(grid: &TorusGrid, k: &[i64], probe: &Probe, frame: Frame) -> Result<(Self, RealField)> {
        let d = grid.dim();
        if k.len() != d {
            return Err(Error::InvalidArgument("cell index has wrong dimension".into()));
        }
        let g = probe.field(grid, k);
        let kf: Vec<f64> = k.iter().map(|&c| c as f64).collect();
        let jk = bracket(&kf);
        let (spec, phase) = match frame {
            Frame::Lab => {
                let m = cell_multiplier(grid, k)?;
                let modulated = ComplexField::from_fn(*grid, |x| {
                    let ph: f64 = x.iter().zip(&kf).map(|(a, b)| a * b).sum();
                    Complex64::from_polar(1.0, ph)
                })
                .mul_real(&g)?;
                (m.apply(&modulated.forward()), grid.bracket_table())
            }
            Frame::CoMoving => {
                let mut s = g.forward();
                let phase: Vec<f64> = (0..grid.len())
                    .map(|i| {
                        let eta = grid.wavevector(i);
                        let shifted: Vec<f64> = (0..d).map(|a| eta[a] + kf[a]).collect();
                        let dot: f64 = (0..d).map(|a| eta[a] * kf[a]).sum();
                        bracket(&shifted) - jk - dot / jk
                    })
                    .collect();
                s.multiply(|eta| Complex64::new(eta.iter().map(|&e| window_1d(e)).product(), 0.0));
                (s, phase)
            }
        };
        let peak = spec.coeffs().iter().map(|c| c.norm()).fold(0.0, f64::max);
        let mut speed: f64 = 0.0;
        for (i, c) in spec.coeffs().iter().enumerate() {
            if c.norm() <= SUPPORT_LEVEL * peak {
                continue;
            }
            let xi = grid.wavevector(i);
            let v = match frame {
                Frame::Lab => 1.0,
                Frame::CoMoving => {
                    let shifted: Vec<f64> = (0..d).map(|a| xi[a] + kf[a]).collect();
                    let jb = bracket(&shifted);
                    (0..d).map(|a| (shifted[a] / jb - kf[a] / jk).abs()).fold(0.0, f64::max)
                }
            };
            speed = speed.max(v);
        }
        Ok((Self { spec, phase, speed }, g))
    }

    fn check_wrap(&self, grid: &TorusGrid, diameter: f64, t_max: f64) -> Result<()> {
        let need = diameter + 2.0 * self.speed * t_max;
        if grid.extent() < need {
            return Err(Error::WrapAround(format!(
                "extent {} below {need:.3} needed up to t = {t_max}",
                grid.extent()
            )));
        }
        Ok(())
    }

    fn norm_at(&self, t: f64, r: f64) -> Result<f64> {
        let data = self
            .spec
            .coeffs()
            .iter()
            .zip(&self.phase)
            .map(|(c, &w)| c * Complex64::from_polar(1.0, t * w))
            .collect();
        Ok(SpectralField::from_vec(*self.spec.grid(), data)?.inverse().lp_norm(r))
    }
}

/// Fit over one regime of the decay bound.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WindowFit {
    pub window: (f64, f64),
    pub predicted_slope: f64,
    /// `None` when the window is shorter than half a decade or has too few samples.
    pub fit: Option<RegressionResult>,
}

impl WindowFit {
    fn new(points: &[(f64, f64)], window: (f64, f64), predicted_slope: f64) -> Self {
        let fit = if window.1 / window.0 >= 10f64.sqrt() {
            loglog_fit(points, Some(window)).ok()
        } else {
            None
        };
        Self { window, predicted_slope, fit }
    }

    pub fn skipped(&self) -> bool {
        self.fit.is_none()
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DecayRow {
    pub t: f64,
    /// `||e^{it<grad>} P_k f||_{L^r} / ||f||_{L^{r'}}`.
    pub ratio: f64,
    /// `min{1, <k>^{(d-1)/2} t^{-(d-1)/2}, <k>^{(d+2)/2} t^{-d/2}}^{1-2/r}`.
    pub predicted: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecayConfig {
    pub grid: TorusGrid,
    pub k: Vec<i64>,
    pub r: f64,
    pub times: Vec<f64>,
    pub probe: Probe,
    pub frame: Frame,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecayReport {
    pub k: Vec<i64>,
    pub r: f64,
    pub rows: Vec<DecayRow>,
    /// Regime `2<k> <= t <= min(<k>^3, T)/2`.
    pub wave: WindowFit,
    /// Regime `2<k>^3 <= t <= T`.
    pub klein_gordon: WindowFit,
    /// Fit over every sampled time.
    pub overall: Option<RegressionResult>,
    /// Intersection of the two fitted lines, or `<k>^3` if either is missing.
    pub crossover: f64,
}

/// `min{...}` bound of the unit-cell decay estimate.
pub fn predicted_decay(d: usize, k: &[i64], r: f64, t: f64) -> f64 {
    let kf: Vec<f64> = k.iter().map(|&c| c as f64).collect();
    let jk = bracket(&kf);
    let df = d as f64;
    let t = t.abs();
    let b = 1f64
        .min((jk / t).powf((df - 1.0) / 2.0))
        .min(jk.powf((df + 2.0) / 2.0) * t.powf(-df / 2.0));
    b.powf(1.0 - 2.0 / r)
}

/// Measures `||e^{it<grad>} P_k f||_{L^r} / ||f||_{L^{r'}}` over the time grid.
pub fn measure_cell_decay(cfg: &DecayConfig) -> Result<DecayReport> {
    let grid = &cfg.grid;
    if !(cfg.r >= 2.0) {
        return Err(Error::InvalidArgument(format!("r = {} below 2", cfg.r)));
    }
    if cfg.times.iter().any(|t| !t.is_finite() || *t <= 0.0) || cfg.times.is_empty() {
        return Err(Error::InvalidArgument("times must be positive".into()));
    }
    let (prop, g) = CellPropagator::new(grid, &cfg.k, &cfg.probe, cfg.frame)?;
    let t_max = cfg.times.iter().cloned().fold(0.0, f64::max);
    prop.check_wrap(grid, cfg.probe.diameter(&cfg.k), t_max)?;
    let denom = g.lp_norm(dual_exponent(cfg.r));
    let d = grid.dim();
    let rows = cfg
        .times
        .iter()
        .map(|&t| {
            Ok(DecayRow {
                t,
                ratio: prop.norm_at(t, cfg.r)? / denom,
                predicted: predicted_decay(d, &cfg.k, cfg.r, t),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.t, r.ratio)).collect();
    let kf: Vec<f64> = cfg.k.iter().map(|&c| c as f64).collect();
    let jk = bracket(&kf);
    let scale = 1.0 - 2.0 / cfg.r;
    let df = d as f64;
    let wave = WindowFit::new(&pts, (2.0 * jk, jk.powi(3).min(t_max) / 2.0), -scale * (df - 1.0) / 2.0);
    let klein_gordon = WindowFit::new(&pts, (2.0 * jk.powi(3), t_max), -scale * df / 2.0);
    let crossover = match (&wave.fit, &klein_gordon.fit) {
        (Some(a), Some(b)) if a.slope != b.slope => ((b.intercept - a.intercept) / (a.slope - b.slope)).exp(),
        _ => jk.powi(3),
    };
    Ok(DecayReport {
        k: cfg.k.clone(),
        r: cfg.r,
        overall: loglog_fit(&pts, None).ok(),
        rows,
        wave,
        klein_gordon,
        crossover,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrichartzBranch {
    /// `2/q + (d-1)/r <= (d-1)/2`: growth `<k>^{1/q}`.
    Admissible,
    /// `2/q + (d-1)/r > (d-1)/2`, `2/q + d/r <= d/2`: growth `<k>^{3/q - (d-1)(1/2-1/r)}`.
    SubAdmissible,
}

/// Classifies `(q, r, d)` and returns the predicted growth exponent in `<k>`.
pub fn classify_strichartz(q: f64, r: f64, d: usize) -> Result<(StrichartzBranch, f64)> {
    if !(q >= 2.0 && r >= 2.0) {
        return Err(Error::InvalidArgument(format!("(q, r) = ({q}, {r}) needs q, r >= 2")));
    }
    let df = d as f64;
    let (iq, ir) = (1.0 / q, 1.0 / r);
    if q == 2.0 && r.is_infinite() && (d == 2 || d == 3) {
        return Err(Error::ExcludedEndpoint(format!("(q, r, d) = (2, inf, {d})")));
    }
    let eps = 1e-12;
    if 2.0 * iq + (df - 1.0) * ir <= (df - 1.0) / 2.0 + eps {
        Ok((StrichartzBranch::Admissible, iq))
    } else if 2.0 * iq + df * ir <= df / 2.0 + eps {
        Ok((StrichartzBranch::SubAdmissible, 3.0 * iq - (df - 1.0) * (0.5 - ir)))
    } else {
        Err(Error::InvalidArgument(format!("(q, r, d) = ({q}, {r}, {d}) outside the Strichartz range")))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StrichartzConfig {
    pub dim: usize,
    /// Cell indices `k e_1`.
    pub ks: Vec<i64>,
    pub q: f64,
    pub r: f64,
    /// Horizon `T = factor * <k>^power`.
    pub horizon_factor: f64,
    pub horizon_power: f64,
    pub extent: f64,
    pub n: usize,
    pub probe: Probe,
    pub frame: Frame,
    /// Geometric time samples on `[0.05 <k>, T]` (plus `t = 0`).
    pub time_samples: usize,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct StrichartzRow {
    pub k: i64,
    pub bracket: f64,
    /// `||e^{it<grad>} P_k f||_{L^q_t L^r_x}` with `||P_k f||_{L^2} = 1`.
    pub norm: f64,
    /// `||u(T)||_{L^r} / max_t ||u(t)||_{L^r}`; small when the integral has saturated.
    pub saturation: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StrichartzReport {
    pub branch: StrichartzBranch,
    pub predicted: f64,
    pub rows: Vec<StrichartzRow>,
    pub fit: RegressionResult,
}

impl StrichartzReport {
    pub fn exponent(&self) -> f64 {
        self.fit.slope
    }
}

/// Fits the growth of the unit-cell Strichartz norm against `<k>`.
pub fn measure_cell_strichartz(cfg: &StrichartzConfig) -> Result<StrichartzReport> {
    let (branch, predicted) = classify_strichartz(cfg.q, cfg.r, cfg.dim)?;
    if cfg.ks.len() < 3 {
        return Err(Error::InsufficientData("need at least three cells".into()));
    }
    if cfg.time_samples < 2 {
        return Err(Error::InvalidArgument("need at least two time samples".into()));
    }
    let grid = TorusGrid::new(cfg.dim, cfg.n, cfg.extent)?;
    let mut rows = Vec::with_capacity(cfg.ks.len());
    for &kk in &cfg.ks {
        let mut k = vec![0i64; cfg.dim];
        k[0] = kk;
        let jk = bracket(&[kk as f64]);
        let horizon = cfg.horizon_factor * jk.powf(cfg.horizon_power);
        let (mut prop, _) = CellPropagator::new(&grid, &k, &cfg.probe, cfg.frame)?;
        prop.check_wrap(&grid, cfg.probe.diameter(&k), horizon)?;
        let l2 = prop.spec.l2_norm();
        if l2 == 0.0 {
            return Err(Error::InvalidArgument("probe has no mass in the cell".into()));
        }
        prop.spec.scale(Complex64::new(1.0 / l2, 0.0));
        let t0 = 0.05 * jk;
        let m = cfg.time_samples;
        let mut times = vec![0.0];
        times.extend((0..m).map(|i| t0 * (horizon / t0).powf(i as f64 / (m - 1) as f64)));
        let vals = times.iter().map(|&t| prop.norm_at(t, cfg.r)).collect::<Result<Vec<_>>>()?;
        let norm = time_norm(&times, &vals, cfg.q, (0.0, horizon))?;
        let peak = vals.iter().cloned().fold(0.0, f64::max);
        rows.push(StrichartzRow { k: kk, bracket: jk, norm, saturation: vals[vals.len() - 1] / peak });
    }
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.bracket, r.norm)).collect();
    let fit = loglog_fit(&pts, None)?;
    Ok(StrichartzReport { branch, predicted, rows, fit })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TransferReport {
    pub n: u64,
    /// `||e^{it<grad>} P_N f||_{L^inf_t L^r_x}`.
    pub sup_norm: f64,
    /// `||e^{it<grad>} P_N f||_{L^q_t L^r_x}`.
    pub lq_norm: f64,
    /// `sup_norm / (N^{1/q} lq_norm)`.
    pub ratio: f64,
}

/// Compares the `L^inf_t` and `N^{1/q} L^q_t` norms of `e^{it<grad>} P_N f`
/// over the sampled times.
pub fn verify_infty_transfer(f: &RealField, n: u64, q: f64, r: f64, times: &[f64]) -> Result<TransferReport> {
    check_dyadic(n)?;
    if times.len() < 2 || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInterval("times must be increasing with at least two samples".into()));
    }
    let grid = f.grid();
    let m = dyadic_multiplier(grid, n)?;
    let mut s = f.forward();
    s.multiply_table(&m);
    if s.l2_norm() == 0.0 {
        return Err(Error::InvalidArgument("P_N f vanishes".into()));
    }
    let flow = HalfWaveFlow::new(*grid, Sign::Plus);
    let vals = times
        .iter()
        .map(|&t| Ok(flow.apply_spectral(&s, t)?.inverse().lp_norm(r)))
        .collect::<Result<Vec<_>>>()?;
    let window = (times[0], times[times.len() - 1]);
    let sup_norm = vals.iter().cloned().fold(0.0, f64::max);
    let lq_norm = time_norm(times, &vals, q, window)?;
    let ratio = sup_norm / ((n as f64).powf(1.0 / q) * lq_norm);
    Ok(TransferReport { n, sup_norm, lq_norm, ratio })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn zero_mode_is_pure_phase() {
        let g = TorusGrid::new(1, 64, 32.0).unwrap();
        let f = RealField::from_fn(g, |_| 1.0);
        let u = evolve_half_wave(&f, 0.7, Sign::Plus);
        for v in u.values() {
            assert!((v - Complex64::from_polar(1.0, 0.7)).norm() < 1e-12);
        }
        let s = StatePair::new(f.clone(), RealField::zeros(g)).unwrap();
        let e = evolve_pair(&s, 1.3).unwrap();
        for v in e.u.values() {
            assert!((v - 1.3f64.cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn strichartz_classification() {
        assert_eq!(classify_strichartz(4.0, f64::INFINITY, 3).unwrap(), (StrichartzBranch::Admissible, 0.25));
        let (b, p) = classify_strichartz(4.0, 4.0, 2).unwrap();
        assert_eq!(b, StrichartzBranch::SubAdmissible);
        assert!((p - 0.5).abs() < 1e-15);
        assert_eq!(classify_strichartz(f64::INFINITY, 2.0, 2).unwrap().1, 0.0);
        assert!(matches!(classify_strichartz(2.0, f64::INFINITY, 3), Err(Error::ExcludedEndpoint(_))));
        assert!(classify_strichartz(2.0, 2.0, 1).is_err());
        assert!(classify_strichartz(2.0, 100.0, 1).is_err());
    }

    #[test]
    fn l2_decay_is_flat() {
        let grid = TorusGrid::new(2, 64, 32.0).unwrap();
        let cfg = DecayConfig {
            grid,
            k: vec![2, 0],
            r: 2.0,
            times: vec![1.0, 2.0, 4.0, 8.0],
            probe: Probe::Isotropic { width: 0.5 },
            frame: Frame::Lab,
        };
        let rep = measure_cell_decay(&cfg).unwrap();
        for r in &rep.rows {
            assert!(rel(r.ratio, rep.rows[0].ratio) < 1e-12);
        }
        let far = DecayConfig { times: vec![20.0], ..cfg };
        assert!(matches!(measure_cell_decay(&far), Err(Error::WrapAround(_))));
    }

    #[test]
    fn frames_agree() {
        let grid = TorusGrid::new(2, 128, 64.0).unwrap();
        let base = DecayConfig {
            grid,
            k: vec![3, 1],
            r: f64::INFINITY,
            times: vec![3.0, 10.0],
            probe: Probe::Isotropic { width: 0.5 },
            frame: Frame::Lab,
        };
        let lab = measure_cell_decay(&base).unwrap();
        let co = measure_cell_decay(&DecayConfig { frame: Frame::CoMoving, ..base }).unwrap();
        for (a, b) in lab.rows.iter().zip(&co.rows) {
            assert!(rel(a.ratio, b.ratio) < 1e-2, "{} vs {}", a.ratio, b.ratio);
        }
    }

    #[test]
    fn transfer_rejects_zero() {
        let g = TorusGrid::new(1, 64, 32.0).unwrap();
        assert!(verify_infty_transfer(&RealField::zeros(g), 2, 4.0, 2.0, &[0.0, 1.0]).is_err());
    }
}
