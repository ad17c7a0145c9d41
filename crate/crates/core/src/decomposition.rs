//! Phase-space uniform decomposition: smooth unit-cell windows in space and
//! frequency, dyadic Littlewood-Paley windows, modulation norms and the
//! mismatch-decay measurements.
//!
//! The mother window is built from the bump `b(x) = exp(-1/(1-x^2))`:
//!
//! ```text
//! S(z)  = int_{-1}^{z} b / int_{-1}^{1} b         (z in [-1, 1])
//! s(y)  = S(2y - 1)                               (y in [0, 1])
//! h(x)  = s((3/4 - |x|) / (1/2))
//! phi(x) = h(x) / sum_k h(x - k)
//! ```
//!
//! so `phi = 1` on `[-1/4, 1/4]`, `phi = 0` outside `[-3/4, 3/4]`, and the
//! integer translates sum to one. Multi-dimensional windows are tensor products.

use std::sync::OnceLock;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{loglog_fit, RegressionResult};
use crate::grid::{bracket, ComplexField, RealField, SpectralField, TorusGrid, MAX_DIM};

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn bump(x: f64) -> f64 {
    if x.abs() < 1.0 {
        (-1.0 / (1.0 - x * x)).exp()
    } else {
        0.0
    }
}

struct Smoothstep {
    step: f64,
    cumulative: Vec<f64>,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Smoothstep {
    const PANELS: usize = 512;

    fn new() -> Self {
        let (nodes, weights) = gauss_legendre(16);
        let step = 2.0 / Self::PANELS as f64;
        let mut s = Self { step, cumulative: vec![0.0; Self::PANELS + 1], nodes, weights };
        for p in 0..Self::PANELS {
            let a = -1.0 + p as f64 * step;
            s.cumulative[p + 1] = s.cumulative[p] + s.panel(a, a + step);
        }
        s
    }

    fn panel(&self, a: f64, b: f64) -> f64 {
        let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * bump(c + h * x)).sum::<f64>() * h
    }

    fn raw(&self, z: f64) -> f64 {
        if z <= -1.0 {
            return 0.0;
        }
        if z >= 1.0 {
            return 1.0;
        }
        let p = (((z + 1.0) / self.step) as usize).min(Self::PANELS - 1);
        let a = -1.0 + p as f64 * self.step;
        (self.cumulative[p] + self.panel(a, z)) / self.cumulative[Self::PANELS]
    }

    /// Symmetrized so that `S(z) + S(-z) = 1` holds to rounding.
    fn eval(&self, z: f64) -> f64 {
        0.5 * (self.raw(z) + 1.0 - self.raw(-z))
    }
}

fn smoothstep_table() -> &'static Smoothstep {
    static TABLE: OnceLock<Smoothstep> = OnceLock::new();
    TABLE.get_or_init(Smoothstep::new)
}

/// Smooth monotone step from 0 (for `y <= 0`) to 1 (for `y >= 1`).
pub fn smoothstep(y: f64) -> f64 {
    smoothstep_table().eval(2.0 * y - 1.0)
}

fn plateau_profile(x: f64) -> f64 {
    smoothstep((0.75 - x.abs()) / 0.5)
}

/// One-dimensional partition-of-unity window `phi`.
pub fn window_1d(x: f64) -> f64 {
    if x.abs() >= 0.75 {
        return 0.0;
    }
    let base = x.floor() as i64;
    let denom: f64 = (base - 1..=base + 2).map(|k| plateau_profile(x - k as f64)).sum();
    plateau_profile(x) / denom
}

/// Tensor-product unit-cell window `phi(v)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct UnitPartition;

impl UnitPartition {
    pub fn eval(&self, v: &[f64]) -> f64 {
        v.iter().map(|&x| window_1d(x)).product()
    }

    /// `phi(v - k)`.
    pub fn shifted(&self, v: &[f64], k: &[i64]) -> f64 {
        v.iter().zip(k).map(|(&x, &c)| window_1d(x - c as f64)).product()
    }

    /// `sum_{|j - k|_inf <= 1} phi(v - j)`, the enlarged cell.
    pub fn enlarged(&self, v: &[f64], k: &[i64]) -> f64 {
        v.iter()
            .zip(k)
            .map(|(&x, &c)| (-1..=1).map(|o| window_1d(x - (c + o) as f64)).sum::<f64>())
            .product()
    }
}

/// Radial cutoff and its dyadic differences.
#[derive(Clone, Copy, Debug, Default)]
pub struct DyadicWindow;

impl DyadicWindow {
    /// `chi0(r)`: 1 for `r <= 1`, 0 for `r >= 2`.
    pub fn chi0(&self, r: f64) -> f64 {
        1.0 - smoothstep(r - 1.0)
    }

    /// `psi_N(r)` for dyadic `N`; `psi_1 = chi0`.
    pub fn psi(&self, n: u64, r: f64) -> f64 {
        if n <= 1 {
            self.chi0(r)
        } else {
            let n = n as f64;
            self.chi0(r / n) - self.chi0(2.0 * r / n)
        }
    }
}

/// Validates a dyadic scale.
pub fn check_dyadic(n: u64) -> Result<()> {
    if n >= 1 && n.is_power_of_two() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{n} is not dyadic")))
    }
}

/// Sparse spectral multiplier: nonzero weights in storage order.
#[derive(Clone, Debug)]
pub struct SparseMultiplier {
    pub entries: Vec<(usize, f64)>,
}

impl SparseMultiplier {
    pub fn apply(&self, f: &SpectralField) -> SpectralField {
        let mut out = SpectralField::zeros(*f.grid());
        let src = f.coeffs();
        let dst = out.coeffs_mut();
        for &(i, w) in &self.entries {
            dst[i] = src[i] * w;
        }
        out
    }

    /// `||m f^||_{L^2}` without an inverse transform.
    pub fn l2_norm_of(&self, f: &SpectralField) -> f64 {
        let src = f.coeffs();
        let s: f64 = self.entries.iter().map(|&(i, w)| w * w * src[i].norm_sqr()).sum();
        (s / f.grid().volume()).sqrt()
    }
}

pub(crate) fn tensor_multiplier(grid: &TorusGrid, per_axis: Vec<Vec<(usize, f64)>>) -> SparseMultiplier {
    let d = grid.dim();
    let mut entries = Vec::new();
    let mut idx = [0usize; MAX_DIM];
    fn rec(
        a: usize,
        d: usize,
        w: f64,
        idx: &mut [usize; MAX_DIM],
        per_axis: &[Vec<(usize, f64)>],
        grid: &TorusGrid,
        out: &mut Vec<(usize, f64)>,
    ) {
        if a == d {
            out.push((grid.ravel(idx), w));
            return;
        }
        for &(j, v) in &per_axis[a] {
            idx[a] = j;
            rec(a + 1, d, w * v, idx, per_axis, grid, out);
        }
    }
    rec(0, d, 1.0, &mut idx, &per_axis, grid, &mut entries);
    entries.sort_unstable_by_key(|e| e.0);
    SparseMultiplier { entries }
}

fn check_k(grid: &TorusGrid, k: &[i64], margin: f64) -> Result<()> {
    if k.len() != grid.dim() {
        return Err(Error::InvalidArgument("cell index has wrong dimension".into()));
    }
    let kmax = k.iter().map(|c| c.abs()).max().unwrap_or(0) as f64;
    grid.check_band(kmax + margin)
}

/// `phi(xi - k)` as a sparse multiplier.
pub fn cell_multiplier(grid: &TorusGrid, k: &[i64]) -> Result<SparseMultiplier> {
    check_k(grid, k, 0.0)?;
    let freqs = grid.axis_freqs();
    let per_axis = k
        .iter()
        .map(|&c| {
            freqs
                .iter()
                .enumerate()
                .map(|(j, &xi)| (j, window_1d(xi - c as f64)))
                .filter(|e| e.1 != 0.0)
                .collect()
        })
        .collect();
    Ok(tensor_multiplier(grid, per_axis))
}

/// Enlarged-cell multiplier for `P~_k = sum_{|j-k|_inf <= 1} P_j`.
pub fn enlarged_cell_multiplier(grid: &TorusGrid, k: &[i64]) -> Result<SparseMultiplier> {
    check_k(grid, k, 1.0)?;
    let freqs = grid.axis_freqs();
    let per_axis = k
        .iter()
        .map(|&c| {
            freqs
                .iter()
                .enumerate()
                .map(|(j, &xi)| (j, (-1..=1).map(|o| window_1d(xi - (c + o) as f64)).sum::<f64>()))
                .filter(|e| e.1 != 0.0)
                .collect()
        })
        .collect();
    Ok(tensor_multiplier(grid, per_axis))
}

/// `P_k f`. Complex-valued in general (real only for `k = 0`).
pub fn project_frequency_cell(f: &RealField, k: &[i64]) -> Result<ComplexField> {
    Ok(cell_multiplier(f.grid(), k)?.apply(&f.forward()).inverse())
}

/// `P_k` on spectral data.
pub fn project_frequency_cell_spectral(f: &SpectralField, k: &[i64]) -> Result<SpectralField> {
    Ok(cell_multiplier(f.grid(), k)?.apply(f))
}

/// Largest `K` such that every cell `|k|_inf <= K` is resolved.
pub fn max_cell_index(grid: &TorusGrid) -> i64 {
    let mut k = (grid.nyquist() - 1.0).floor() as i64;
    while k >= 0 && grid.check_band(k as f64).is_err() {
        k -= 1;
    }
    k.max(0)
}

/// All integer vectors with `|k|_inf <= kmax`, lexicographic.
pub fn cube_indices(dim: usize, kmax: i64) -> Vec<Vec<i64>> {
    let side = (2 * kmax + 1) as usize;
    let total = side.pow(dim as u32);
    (0..total)
        .map(|mut i| {
            let mut v = vec![0i64; dim];
            for a in (0..dim).rev() {
                v[a] = (i % side) as i64 - kmax;
                i /= side;
            }
            v
        })
        .collect()
}

/// Frequency cells `|k|_inf <= kmax` after checking the band.
pub fn frequency_cells(grid: &TorusGrid, kmax: i64) -> Result<Vec<Vec<i64>>> {
    grid.check_band(kmax as f64)?;
    Ok(cube_indices(grid.dim(), kmax))
}

/// Spatial cells covering the torus: `L` consecutive integers per axis.
pub fn spatial_cells(grid: &TorusGrid) -> Result<Vec<Vec<i64>>> {
    grid.check_integer_extent()?;
    let len = grid.extent().round() as i64;
    let lo = -(len / 2);
    let per = len as usize;
    let total = per.pow(grid.dim() as u32);
    Ok((0..total)
        .map(|mut i| {
            let mut v = vec![0i64; grid.dim()];
            for a in (0..grid.dim()).rev() {
                v[a] = lo + (i % per) as i64;
                i /= per;
            }
            v
        })
        .collect())
}

/// Physical window `phi_l(x) = phi(x - l)` (periodized).
pub fn spatial_window_field(grid: &TorusGrid, l: &[f64]) -> Result<RealField> {
    if l.len() != grid.dim() {
        return Err(Error::InvalidArgument("cell index has wrong dimension".into()));
    }
    let coords = grid.axis_coords();
    let per_axis: Vec<Vec<f64>> = l
        .iter()
        .map(|&c| coords.iter().map(|&x| window_1d(grid.wrap(x - c))).collect())
        .collect();
    let mut out = RealField::zeros(*grid);
    for (idx, v) in out.values_mut().iter_mut().enumerate() {
        let m = grid.unravel(idx);
        *v = (0..grid.dim()).map(|a| per_axis[a][m[a]]).product();
    }
    Ok(out)
}

/// `phi_l f`.
pub fn spatial_window(f: &RealField, l: &[i64]) -> Result<RealField> {
    f.grid().check_integer_extent()?;
    let lf: Vec<f64> = l.iter().map(|&c| c as f64).collect();
    f.mul(&spatial_window_field(f.grid(), &lf)?)
}

/// Radial dyadic multiplier `psi_N(|xi|)`.
pub fn dyadic_multiplier(grid: &TorusGrid, n: u64) -> Result<Vec<f64>> {
    check_dyadic(n)?;
    if 2.0 * n as f64 >= grid.nyquist() {
        return Err(Error::OutOfBand(format!("dyadic scale {n} not resolved")));
    }
    let w = DyadicWindow;
    Ok(grid.wavenumber_sq().into_iter().map(|q| w.psi(n, q.sqrt())).collect())
}

/// `P_N f` (real for real `f`, the multiplier being radial).
pub fn project_dyadic(f: &RealField, n: u64) -> Result<RealField> {
    let m = dyadic_multiplier(f.grid(), n)?;
    let mut s = f.forward();
    s.multiply_table(&m);
    Ok(s.inverse_real())
}

/// One block `P_k(phi_l f)`.
#[derive(Clone, Debug)]
pub struct PhaseSpaceAtom {
    pub k: Vec<i64>,
    pub l: Vec<i64>,
    pub payload: ComplexField,
}

/// Builds the atom `P_k(phi_l f)`.
pub fn atom(f: &RealField, k: &[i64], l: &[i64]) -> Result<PhaseSpaceAtom> {
    let payload = project_frequency_cell(&spatial_window(f, l)?, k)?;
    Ok(PhaseSpaceAtom { k: k.to_vec(), l: l.to_vec(), payload })
}

fn lq_sum(values: impl Iterator<Item = f64>, q: f64) -> f64 {
    if q.is_infinite() {
        values.fold(0.0, f64::max)
    } else {
        values.map(|v| v.powf(q)).sum::<f64>().powf(1.0 / q)
    }
}

/// `|| <k>^s ||P_k(phi_l f)||_{L^r} ||_{l^q_k l^p_l}`: inner `l^p` over spatial
/// cells, outer `l^q` over every resolved frequency cell.
pub fn modulation_norm(f: &RealField, s: f64, p: f64, q: f64, r: f64) -> Result<f64> {
    for e in [p, q, r] {
        if e.is_nan() || e < 1.0 {
            return Err(Error::InvalidArgument(format!("exponent {e} below 1")));
        }
    }
    let grid = f.grid();
    let cells = spatial_cells(grid)?;
    let kmax = max_cell_index(grid);
    let ks = frequency_cells(grid, kmax)?;
    let mults: Vec<SparseMultiplier> =
        ks.iter().map(|k| cell_multiplier(grid, k)).collect::<Result<_>>()?;
    // norms[k][l]
    let mut norms = vec![Vec::with_capacity(cells.len()); ks.len()];
    for l in &cells {
        let spec = spatial_window(f, l)?.forward();
        for (j, m) in mults.iter().enumerate() {
            let v = if r == 2.0 { m.l2_norm_of(&spec) } else { m.apply(&spec).inverse().lp_norm(r) };
            norms[j].push(v);
        }
    }
    let per_k = ks.iter().zip(&norms).map(|(k, row)| {
        let kf: Vec<f64> = k.iter().map(|&c| c as f64).collect();
        bracket(&kf).powf(s) * lq_sum(row.iter().copied(), p)
    });
    Ok(lq_sum(per_k, q))
}

/// Which mismatch operator to measure.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MismatchKind {
    /// `h_l F^{-1}(phi_0 F(h_0 f))` with `|l - 0| = separation`.
    Spatial,
    /// `F^{-1}(phi_k F(h_0 F^{-1}(phi_0 f^)))` with `|k - 0| = separation`.
    Frequency,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MismatchRow {
    pub separation: i64,
    /// Power-iteration estimate of the `L^2` operator norm.
    pub operator_norm: f64,
    /// `||T f|| / ||f||` for the supplied probe.
    pub probe_ratio: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MismatchTable {
    pub kind: MismatchKind,
    pub rows: Vec<MismatchRow>,
    /// Log-log fit of operator norm against separation (rows with separation >= 1).
    pub fit: Option<RegressionResult>,
}

impl MismatchTable {
    /// CSV with columns `separation,ratio,log_ratio`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("separation,ratio,log_ratio\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{:.17e},{:.17e}\n",
                r.separation,
                r.operator_norm,
                r.operator_norm.ln()
            ));
        }
        s
    }
}

struct MismatchOperator {
    kind: MismatchKind,
    near: RealField,
    far: RealField,
    home: SparseMultiplier,
    away: SparseMultiplier,
}

impl MismatchOperator {
    fn new(grid: &TorusGrid, kind: MismatchKind, sep: i64) -> Result<Self> {
        let d = grid.dim();
        let origin = vec![0i64; d];
        let mut shifted = vec![0i64; d];
        shifted[0] = sep;
        let zero_f = vec![0.0; d];
        let mut far_f = vec![0.0; d];
        far_f[0] = sep as f64;
        match kind {
            MismatchKind::Spatial => {
                if sep as f64 + 1.5 > 0.5 * grid.extent() {
                    return Err(Error::WrapAround(format!(
                        "separation {sep} too large for extent {}",
                        grid.extent()
                    )));
                }
            }
            MismatchKind::Frequency => check_k(grid, &shifted, 0.0)?,
        }
        Ok(Self {
            kind,
            near: spatial_window_field(grid, &zero_f)?,
            far: spatial_window_field(grid, &far_f)?,
            home: cell_multiplier(grid, &origin)?,
            away: cell_multiplier(grid, &shifted)?,
        })
    }

    fn apply(&self, f: &ComplexField, adjoint: bool) -> Result<ComplexField> {
        match self.kind {
            MismatchKind::Spatial => {
                let (first, last) = if adjoint { (&self.far, &self.near) } else { (&self.near, &self.far) };
                self.home.apply(&f.mul_real(first)?.forward()).inverse().mul_real(last)
            }
            MismatchKind::Frequency => {
                let (first, last) = if adjoint { (&self.away, &self.home) } else { (&self.home, &self.away) };
                let mid = first.apply(&f.forward()).inverse().mul_real(&self.near)?;
                Ok(last.apply(&mid.forward()).inverse())
            }
        }
    }

    fn operator_norm(&self, probe: &ComplexField) -> Result<f64> {
        let mut v = probe.clone();
        let n0 = v.lp_norm(2.0);
        v.scale(Complex64::new(1.0 / n0, 0.0));
        let mut lambda = 0.0;
        for _ in 0..300 {
            let w = self.apply(&self.apply(&v, false)?, true)?;
            let nw = w.lp_norm(2.0);
            if nw == 0.0 {
                return Ok(0.0);
            }
            let done = (nw - lambda).abs() <= 1e-12 * nw;
            lambda = nw;
            v = w;
            v.scale(Complex64::new(1.0 / nw, 0.0));
            if done {
                break;
            }
        }
        Ok(lambda.sqrt())
    }
}

/// Measures the decay of the mismatch operators against separation.
pub fn measure_mismatch_decay(
    kind: MismatchKind,
    separations: &[i64],
    probe: &RealField,
) -> Result<MismatchTable> {
    if separations.is_empty() {
        return Err(Error::InvalidArgument("empty separation range".into()));
    }
    let pn = probe.lp_norm(2.0);
    if pn == 0.0 || !pn.is_finite() {
        return Err(Error::InvalidArgument("probe must be nonzero".into()));
    }
    let grid = probe.grid();
    grid.check_integer_extent()?;
    let pc = probe.to_complex();
    let mut rows = Vec::with_capacity(separations.len());
    for &sep in separations {
        let op = MismatchOperator::new(grid, kind, sep.abs())?;
        let probe_ratio = op.apply(&pc, false)?.lp_norm(2.0) / pn;
        let operator_norm = op.operator_norm(&pc)?;
        rows.push(MismatchRow { separation: sep.abs(), operator_norm, probe_ratio });
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.separation >= 1)
        .map(|r| (r.separation as f64, r.operator_norm))
        .collect();
    let fit = loglog_fit(&pts, None).ok();
    Ok(MismatchTable { kind, rows, fit })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothstep_endpoints_and_symmetry() {
        assert_eq!(smoothstep(0.0), 0.0);
        assert_eq!(smoothstep(1.0), 1.0);
        assert!((smoothstep(0.5) - 0.5).abs() < 1e-15);
        for i in 0..100 {
            let y = i as f64 / 100.0;
            assert!((smoothstep(y) + smoothstep(1.0 - y) - 1.0).abs() < 1e-15);
            assert!(smoothstep(y + 0.01) >= smoothstep(y));
        }
    }

    #[test]
    fn window_plateau_and_support() {
        for i in 0..=100 {
            let x = -0.25 + 0.5 * i as f64 / 100.0;
            assert_eq!(window_1d(x), 1.0);
        }
        assert_eq!(window_1d(0.75), 0.0);
        assert_eq!(window_1d(-0.8), 0.0);
    }

    #[test]
    fn dyadic_examples() {
        let w = DyadicWindow;
        assert_eq!(w.chi0(0.5), 1.0);
        assert_eq!(w.chi0(2.0), 0.0);
        assert_eq!(w.psi(4, 1.0), 0.0);
        assert!((w.psi(4, 4.0) - 1.0).abs() < 1e-15);
        assert!((w.psi(4, 3.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn plateau_mode_passes_cell_projection() {
        let g = TorusGrid::new(1, 128, 32.0).unwrap();
        // 2 pi * 16 / 32 = pi; cell 3 has plateau [2.75, 3.25].
        let j = 15usize;
        let xi0 = g.freq(j);
        assert!((xi0 - 3.0).abs() <= 0.25);
        let f = RealField::from_fn(g, |x| (xi0 * x[0]).cos());
        let p = project_frequency_cell(&f, &[3]).unwrap();
        let q = project_frequency_cell(&f, &[-3]).unwrap();
        let mut sum = p.clone();
        sum.add_scaled(Complex64::new(1.0, 0.0), &q).unwrap();
        let err = sum.real_part().values().iter().zip(f.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12);
        assert!(project_frequency_cell(&f, &[5]).unwrap().max_abs() < 1e-13);
        assert!(project_frequency_cell(&f, &[40]).is_err());
    }

    #[test]
    fn spatial_windows_partition() {
        let g = TorusGrid::new(2, 64, 26.0).unwrap();
        let f = RealField::from_fn(g, |x| 1.0 + x[0].sin() * x[1].cos());
        let mut acc = RealField::zeros(g);
        for l in spatial_cells(&g).unwrap() {
            acc.add_scaled(1.0, &spatial_window(&f, &l).unwrap()).unwrap();
        }
        let err = acc.values().iter().zip(f.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12);
        assert!(spatial_cells(&TorusGrid::new(1, 64, 8.0 * std::f64::consts::PI).unwrap()).is_err());
    }

    #[test]
    fn window_far_from_support_vanishes() {
        let g = TorusGrid::new(1, 256, 32.0).unwrap();
        let f = RealField::from_fn(g, |x| if (x[0] - 5.0).abs() < 0.5 { 1.0 } else { 0.0 });
        assert_eq!(spatial_window(&f, &[0]).unwrap().max_abs(), 0.0);
        let ones = RealField::from_fn(g, |_| 1.0);
        let w = spatial_window(&ones, &[2]).unwrap();
        assert_eq!(w, spatial_window_field(&g, &[2.0]).unwrap());
    }

    #[test]
    fn zero_probe_rejected() {
        let g = TorusGrid::new(1, 256, 32.0).unwrap();
        let z = RealField::zeros(g);
        assert!(measure_mismatch_decay(MismatchKind::Spatial, &[2], &z).is_err());
        let f = RealField::from_fn(g, |x| (-x[0] * x[0]).exp());
        assert!(measure_mismatch_decay(MismatchKind::Spatial, &[], &f).is_err());
    }

    #[test]
    fn no_mismatch_is_contraction() {
        let g = TorusGrid::new(1, 256, 32.0).unwrap();
        let f = RealField::from_fn(g, |x| (-x[0] * x[0]).exp());
        for kind in [MismatchKind::Spatial, MismatchKind::Frequency] {
            let t = measure_mismatch_decay(kind, &[0], &f).unwrap();
            assert!(t.rows[0].operator_norm <= 1.0 + 1e-6);
            assert!(t.rows[0].probe_ratio <= 1.0 + 1e-6);
        }
    }
}
