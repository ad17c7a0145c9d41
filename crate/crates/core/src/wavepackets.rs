//! Wave packets `W_{k,l,t0} = P~_k(phi_l f_{k,t0})`, their tubes, amplitude
//! classes, the greedy bush decomposition with an independent post hoc audit,
//! and Monte Carlo checks of the sub-Gaussian bounds for bush sums.

use std::collections::{BTreeMap, HashMap};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cones::{local_force, Cone, ConeKind};
use crate::decomposition::{cell_multiplier, cube_indices, enlarged_cell_multiplier, spatial_window_field};
use crate::error::{Error, Result};
use crate::fit::{loglog_fit, RegressionResult};
use crate::grid::{ComplexField, RealField, SpectralField, TorusGrid};
use crate::randomization::{psi_estimate, spatial_weight, tail_statistics, RandomSeedPlan, TailFit};
use crate::solver::{Forcing, NonlinearModel, Trajectory};

/// Frequency cells of the dyadic block: `|k| <= 1` for `N = 1`, else `N/2 < |k| <= N`.
pub fn dyadic_cells(dim: usize, n: u64) -> Result<Vec<Vec<i64>>> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::InvalidArgument(format!("scale {n} is not dyadic")));
    }
    let nf = n as f64;
    let lo = if n == 1 { -1.0 } else { nf / 2.0 };
    Ok(cube_indices(dim, n as i64)
        .into_iter()
        .filter(|k| {
            let r = k.iter().map(|&c| (c * c) as f64).sum::<f64>().sqrt();
            r > lo && r <= nf
        })
        .collect())
}

/// `k / <k>`.
pub fn group_velocity(k: &[i64]) -> Vec<f64> {
    let b = (1.0 + k.iter().map(|&c| (c * c) as f64).sum::<f64>()).sqrt();
    k.iter().map(|&c| c as f64 / b).collect()
}

/// Spectral coefficients on the support of an enlarged cell.
#[derive(Clone, Debug)]
pub struct SparseSpectrum {
    pub entries: Vec<(usize, Complex64)>,
}

impl SparseSpectrum {
    pub fn to_spectral(&self, grid: &TorusGrid) -> SpectralField {
        let mut s = SpectralField::zeros(*grid);
        for &(i, c) in &self.entries {
            s.coeffs_mut()[i] = c;
        }
        s
    }

    pub fn l2_norm(&self, grid: &TorusGrid) -> f64 {
        (self.entries.iter().map(|e| e.1.norm_sqr()).sum::<f64>() / grid.volume()).sqrt()
    }
}

#[derive(Clone, Debug)]
pub struct WavePacket {
    pub k: Vec<i64>,
    pub l: Vec<i64>,
    pub t0: f64,
    /// `||W||_{L^2}`.
    pub norm: f64,
    pub velocity: Vec<f64>,
    pub spectrum: SparseSpectrum,
}

impl WavePacket {
    pub fn payload(&self, grid: &TorusGrid) -> ComplexField {
        self.spectrum.to_spectral(grid).inverse()
    }
}

/// Precomputes `h = e^{i t0 <xi>} (F(w_Y f) - i <xi>^{-1} F(w_Y g)) / 2`, so that
/// `f_{k,t0} = P_k h` and `W_{k,l,t0} = P~_k(phi_l F^{-1} P_k h)`.
pub struct PacketBuilder {
    grid: TorusGrid,
    t0: f64,
    base: SpectralField,
}

impl PacketBuilder {
    pub fn new(f: &RealField, g: &RealField, plan: &RandomSeedPlan, t0: f64) -> Result<Self> {
        let grid = *f.grid();
        if &grid != g.grid() {
            return Err(Error::GridMismatch);
        }
        let w = spatial_weight(&grid, plan)?;
        let ff = f.mul(&w)?.forward();
        let gg = g.mul(&w)?.forward();
        let br = grid.bracket_table();
        let data = (0..grid.len())
            .map(|i| {
                let c = (ff.coeffs()[i] - Complex64::new(0.0, 1.0 / br[i]) * gg.coeffs()[i]) * 0.5;
                c * Complex64::from_polar(1.0, t0 * br[i])
            })
            .collect();
        Ok(Self { grid, t0, base: SpectralField::from_vec(grid, data)? })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    /// `f_{k,t0}` on the physical grid.
    pub fn cell_field(&self, k: &[i64]) -> Result<ComplexField> {
        Ok(cell_multiplier(&self.grid, k)?.apply(&self.base).inverse())
    }

    /// `||f_{k,t0}||_{L^2}` (independent of `t0`).
    pub fn cell_norm(&self, k: &[i64]) -> Result<f64> {
        Ok(cell_multiplier(&self.grid, k)?.l2_norm_of(&self.base))
    }

    /// Packets for every `k` in `ks` and `l` in `ls`.
    pub fn build(&self, ks: &[Vec<i64>], ls: &[Vec<i64>]) -> Result<Vec<WavePacket>> {
        let windows = ls
            .iter()
            .map(|l| {
                let lf: Vec<f64> = l.iter().map(|&c| c as f64).collect();
                spatial_window_field(&self.grid, &lf)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut out = Vec::with_capacity(ks.len() * ls.len());
        for k in ks {
            let cell = self.cell_field(k)?;
            let big = enlarged_cell_multiplier(&self.grid, k)?;
            let velocity = group_velocity(k);
            for (l, w) in ls.iter().zip(&windows) {
                let spec = cell.mul_real(w)?.forward();
                let entries: Vec<(usize, Complex64)> =
                    big.entries.iter().map(|&(i, m)| (i, spec.coeffs()[i] * m)).collect();
                let spectrum = SparseSpectrum { entries };
                out.push(WavePacket {
                    k: k.clone(),
                    l: l.clone(),
                    t0: self.t0,
                    norm: spectrum.l2_norm(&self.grid),
                    velocity: velocity.clone(),
                    spectrum,
                });
            }
        }
        Ok(out)
    }
}

/// Packets for every `k` in `ks` and every spatial cell of the torus.
pub fn build_wave_packets(
    f: &RealField,
    g: &RealField,
    plan: &RandomSeedPlan,
    ks: &[Vec<i64>],
    t0: f64,
) -> Result<Vec<WavePacket>> {
    let b = PacketBuilder::new(f, g, plan, t0)?;
    let ls = crate::decomposition::spatial_cells(f.grid())?;
    b.build(ks, &ls)
}

/// `{(t, x) : t0 <= t <= t0 + N, |x - (l - (t - t0) v)| <= radius}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tube {
    pub l: Vec<f64>,
    pub velocity: Vec<f64>,
    pub t0: f64,
    pub length: f64,
    pub radius: f64,
}

impl Tube {
    /// Tube of a packet at scale `n`: radius `N^{2 delta}`.
    pub fn of_packet(p: &WavePacket, n: f64, delta: f64) -> Self {
        Self {
            l: p.l.iter().map(|&c| c as f64).collect(),
            velocity: p.velocity.clone(),
            t0: p.t0,
            length: n,
            radius: n.powf(2.0 * delta),
        }
    }

    pub fn center(&self, t: f64) -> Vec<f64> {
        self.l.iter().zip(&self.velocity).map(|(l, v)| l - (t - self.t0) * v).collect()
    }

    pub fn contains(&self, t: f64, x: &[f64]) -> bool {
        if t < self.t0 || t > self.t0 + self.length {
            return false;
        }
        let c = self.center(t);
        c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() <= self.radius * self.radius
    }

    /// As `contains`, with displacements taken modulo the torus.
    pub fn contains_wrapped(&self, grid: &TorusGrid, t: f64, x: &[f64]) -> bool {
        if t < self.t0 || t > self.t0 + self.length {
            return false;
        }
        let c = self.center(t);
        c.iter().zip(x).map(|(a, b)| grid.wrap(a - b).powi(2)).sum::<f64>() <= self.radius * self.radius
    }

    fn overlap(&self, tc: f64, half: f64) -> Option<(f64, f64)> {
        let a = self.t0.max(tc - half);
        let b = (self.t0 + self.length).min(tc + half);
        (a <= b).then_some((a, b))
    }

    fn box_gap_sq(&self, t: f64, xc: &[f64], half: f64) -> f64 {
        self.center(t).iter().zip(xc).map(|(c, x)| ((c - x).abs() - half).max(0.0).powi(2)).sum()
    }

    /// Whether the tube meets the cube `|t - tc| <= half`, `|x - xc|_inf <= half`.
    /// Exact: the squared gap to the box is piecewise quadratic in `t`.
    pub fn meets_cube(&self, tc: f64, xc: &[f64], half: f64) -> bool {
        let Some((a, b)) = self.overlap(tc, half) else {
            return false;
        };
        let mut knots = vec![a, b];
        for ((&l, &v), &x) in self.l.iter().zip(&self.velocity).zip(xc) {
            if v != 0.0 {
                for s in [-half, half] {
                    let t = self.t0 + (l - x - s) / v;
                    if t > a && t < b {
                        knots.push(t);
                    }
                }
            }
        }
        knots.sort_by(f64::total_cmp);
        let r2 = self.radius * self.radius * (1.0 + 1e-12);
        for w in knots.windows(2) {
            let (p, q) = (w[0], w[1]);
            let mid = 0.5 * (p + q);
            let c = self.center(mid);
            let (mut sab, mut sbb) = (0.0, 0.0);
            for a_ in 0..c.len() {
                let dev = c[a_] - xc[a_];
                if dev.abs() > half {
                    // gap = sigma (l - (t - t0) v - xc) - half = alpha + beta t
                    let sigma = dev.signum();
                    let beta = -sigma * self.velocity[a_];
                    let alpha = sigma * (self.l[a_] + self.t0 * self.velocity[a_] - xc[a_]) - half;
                    sab += alpha * beta;
                    sbb += beta * beta;
                }
            }
            let t = if sbb > 0.0 { (-sab / sbb).clamp(p, q) } else { mid };
            if self.box_gap_sq(t, xc, half) <= r2 || self.box_gap_sq(p, xc, half) <= r2 {
                return true;
            }
        }
        false
    }

    /// Independent check of `meets_cube` by golden-section search of the
    /// convex gap function.
    pub fn meets_cube_search(&self, tc: f64, xc: &[f64], half: f64) -> bool {
        let Some((mut a, mut b)) = self.overlap(tc, half) else {
            return false;
        };
        let r2 = self.radius * self.radius * (1.0 + 1e-12);
        if self.box_gap_sq(a, xc, half) <= r2 || self.box_gap_sq(b, xc, half) <= r2 {
            return true;
        }
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - phi * (b - a);
            let d = a + phi * (b - a);
            if self.box_gap_sq(c, xc, half) <= self.box_gap_sq(d, xc, half) {
                b = d;
            } else {
                a = c;
            }
        }
        self.box_gap_sq(0.5 * (a + b), xc, half) <= r2
    }
}

/// Lattice `N^delta Z^{d+1}` of cubes `Q` of side `N^delta`; the doubled cube
/// `2Q` has the same center and side `2 N^delta`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CubeLattice {
    pub side: f64,
}

impl CubeLattice {
    pub fn new(n: f64, delta: f64) -> Self {
        Self { side: n.powf(delta) }
    }

    pub fn center(&self, j: &[i64]) -> (f64, Vec<f64>) {
        (j[0] as f64 * self.side, j[1..].iter().map(|&c| c as f64 * self.side).collect())
    }

    /// Whether `tube` meets `2Q` for the cube with index `j`.
    pub fn meets(&self, tube: &Tube, j: &[i64]) -> bool {
        let (tc, xc) = self.center(j);
        tube.meets_cube(tc, &xc, self.side)
    }

    pub fn meets_search(&self, tube: &Tube, j: &[i64]) -> bool {
        let (tc, xc) = self.center(j);
        tube.meets_cube_search(tc, &xc, self.side)
    }

    /// Every cube index whose doubled cube can meet the tube's bounding box.
    pub fn candidates(&self, tube: &Tube) -> Vec<Vec<i64>> {
        let s = self.side;
        let a = tube.center(tube.t0);
        let b = tube.center(tube.t0 + tube.length);
        let mut lo = vec![((tube.t0 - s) / s).floor() as i64];
        let mut hi = vec![((tube.t0 + tube.length + s) / s).ceil() as i64];
        for i in 0..a.len() {
            lo.push(((a[i].min(b[i]) - tube.radius - s) / s).floor() as i64);
            hi.push(((a[i].max(b[i]) + tube.radius + s) / s).ceil() as i64);
        }
        let mut out = vec![vec![]];
        for (l, h) in lo.into_iter().zip(hi) {
            out = out.into_iter().flat_map(|p| (l..=h).map(move |c| [p.clone(), vec![c]].concat())).collect();
        }
        out
    }
}

/// `A_m`: eligible packets with `||W|| in [2^m, 2^{m+1})`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AmplitudeClass {
    pub m: i32,
    /// Indices into the packet list.
    pub members: Vec<usize>,
    /// `ceil(N^{(d-6)/4} #A_m)`.
    pub mu: usize,
}

/// `ceil(N^{(d-6)/4} count)`, at least 1.
pub fn bush_threshold(n: f64, d: usize, count: usize) -> usize {
    let x = n.powf((d as f64 - 6.0) / 4.0) * count as f64;
    ((x - 1e-9).ceil() as usize).max(1)
}

/// Exponent `m` with `2^m <= x < 2^{m+1}`.
pub fn dyadic_exponent(x: f64) -> i32 {
    let mut m = x.log2().floor() as i32;
    if 2f64.powi(m) > x {
        m -= 1;
    } else if 2f64.powi(m + 1) <= x {
        m += 1;
    }
    m
}

/// Bins packets with `|l - x0| <= C N` and nonzero norm by dyadic norm.
pub fn bin_amplitudes(packets: &[WavePacket], x0: &[f64], n: f64, c: f64) -> Result<Vec<AmplitudeClass>> {
    if c < 1.0 {
        return Err(Error::InvalidArgument(format!("C = {c} below 1")));
    }
    let mut classes: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for (i, p) in packets.iter().enumerate() {
        let r = p.l.iter().zip(x0).map(|(&l, &x)| (l as f64 - x).powi(2)).sum::<f64>().sqrt();
        if r <= c * n && p.norm > 0.0 {
            classes.entry(dyadic_exponent(p.norm)).or_default().push(i);
        }
    }
    Ok(classes
        .into_iter()
        .map(|(m, members)| {
            let d = x0.len();
            AmplitudeClass { m, mu: bush_threshold(n, d, members.len()), members }
        })
        .collect())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Bush {
    /// Lattice index `(j_t, j_x...)` of the anchor cube.
    pub anchor: Vec<i64>,
    pub members: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BushDecomposition {
    pub m: i32,
    pub mu: usize,
    pub bushes: Vec<Bush>,
    pub remainder: Vec<usize>,
}

/// Greedy extraction: cubes are scanned in lexicographic index order; a cube
/// whose double meets at least `mu` remaining tubes takes all of them as a
/// bush. Counts only decrease, so one pass leaves no qualifying cube.
/// `tubes[i]` is the tube of packet `i`.
pub fn greedy_bush_decomposition(class: &AmplitudeClass, tubes: &[Tube], lattice: &CubeLattice) -> Result<BushDecomposition> {
    if class.mu == 0 {
        return Err(Error::InvalidArgument("mu must be at least 1".into()));
    }
    let mut cubes: BTreeMap<Vec<i64>, Vec<usize>> = BTreeMap::new();
    for &i in &class.members {
        let tube = tubes.get(i).ok_or_else(|| Error::InvalidArgument(format!("no tube for packet {i}")))?;
        for j in lattice.candidates(tube) {
            if lattice.meets(tube, &j) {
                cubes.entry(j).or_default().push(i);
            }
        }
    }
    let mut taken: HashMap<usize, bool> = HashMap::new();
    let mut bushes = Vec::new();
    for (anchor, list) in cubes {
        let live: Vec<usize> = list.into_iter().filter(|i| !taken.contains_key(i)).collect();
        if live.len() >= class.mu {
            for &i in &live {
                taken.insert(i, true);
            }
            bushes.push(Bush { anchor, members: live });
        }
    }
    let remainder = class.members.iter().copied().filter(|i| !taken.contains_key(i)).collect();
    Ok(BushDecomposition { m: class.m, mu: class.mu, bushes, remainder })
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct BushAudit {
    pub violations: Vec<String>,
    pub cubes_examined: usize,
    pub max_remainder_count: usize,
}

/// Re-verifies the four invariants with the search-based meet test,
/// enumerating every lattice cube a remainder tube could meet.
pub fn audit_bush_decomposition(
    class: &AmplitudeClass,
    tubes: &[Tube],
    lattice: &CubeLattice,
    dec: &BushDecomposition,
) -> BushAudit {
    let mut audit = BushAudit::default();
    let mut seen: HashMap<usize, usize> = HashMap::new();
    for i in dec.bushes.iter().flat_map(|b| b.members.iter()).chain(&dec.remainder) {
        *seen.entry(*i).or_default() += 1;
    }
    for &i in &class.members {
        match seen.remove(&i) {
            Some(1) => {}
            Some(c) => audit.violations.push(format!("packet {i} appears {c} times")),
            None => audit.violations.push(format!("packet {i} missing")),
        }
    }
    for i in seen.keys() {
        audit.violations.push(format!("packet {i} not in the class"));
    }
    for (b, bush) in dec.bushes.iter().enumerate() {
        if bush.members.len() < dec.mu {
            audit.violations.push(format!("bush {b} has {} < mu = {}", bush.members.len(), dec.mu));
        }
        for &i in &bush.members {
            if !lattice.meets_search(&tubes[i], &bush.anchor) {
                audit.violations.push(format!("bush {b}: tube {i} misses the doubled anchor"));
            }
        }
    }
    let mut counts: HashMap<Vec<i64>, usize> = HashMap::new();
    for &i in &dec.remainder {
        for j in lattice.candidates(&tubes[i]) {
            audit.cubes_examined += 1;
            if lattice.meets_search(&tubes[i], &j) {
                *counts.entry(j).or_default() += 1;
            }
        }
    }
    for (j, c) in &counts {
        audit.max_remainder_count = audit.max_remainder_count.max(*c);
        if *c >= dec.mu {
            audit.violations.push(format!("cube {j:?} meets {c} >= mu = {} remainder tubes", dec.mu));
        }
    }
    audit
}

/// Sum of `X_k e^{i(t - t0)<grad>} W` over a packet subset, kept per `k` in
/// spectral form so each draw costs one transform per time.
pub struct PacketSum {
    grid: TorusGrid,
    t0: f64,
    per_k: Vec<(Vec<i64>, SparseSpectrum)>,
    bracket: Vec<f64>,
}

impl PacketSum {
    pub fn new(grid: &TorusGrid, packets: &[WavePacket], members: &[usize]) -> Self {
        let mut acc: BTreeMap<Vec<i64>, HashMap<usize, Complex64>> = BTreeMap::new();
        let mut t0 = 0.0;
        for &i in members {
            let p = &packets[i];
            t0 = p.t0;
            let e = acc.entry(p.k.clone()).or_default();
            for &(j, c) in &p.spectrum.entries {
                *e.entry(j).or_default() += c;
            }
        }
        let per_k = acc
            .into_iter()
            .map(|(k, m)| {
                let mut entries: Vec<(usize, Complex64)> = m.into_iter().collect();
                entries.sort_unstable_by_key(|e| e.0);
                (k, SparseSpectrum { entries })
            })
            .collect();
        Self { grid: *grid, t0, per_k, bracket: grid.bracket_table() }
    }

    /// The field at time `t` with weights `x(k)`.
    pub fn field(&self, t: f64, x: impl Fn(&[i64]) -> f64) -> ComplexField {
        let mut s = SpectralField::zeros(self.grid);
        let dt = t - self.t0;
        for (k, spec) in &self.per_k {
            let w = x(k);
            let c = s.coeffs_mut();
            for &(i, v) in &spec.entries {
                c[i] += v * w * Complex64::from_polar(1.0, dt * self.bracket[i]);
            }
        }
        s.inverse()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OffcoreRow {
    pub separation: f64,
    /// `sup_K |e^{i(t-t0)<grad>} P~_k(phi_l f_k)| / ||f_k||_{L^2}`.
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OffcoreTable {
    pub rows: Vec<OffcoreRow>,
    pub fit: Option<RegressionResult>,
}

/// Sup over the cone grid (at `times`) of a packet centred `separation` away
/// from `x0` along the first axis, relative to `||P_k f||_{L^2}`. Zero
/// separation is tabulated but excluded from the fit.
pub fn measure_offcore_decay(
    f: &RealField,
    k: &[i64],
    separations: &[i64],
    cone: &Cone,
    times: &[f64],
) -> Result<OffcoreTable> {
    let grid = *f.grid();
    grid.check_integer_extent()?;
    let reach = 2.0 * cone.n + 1.0;
    let fk = cell_multiplier(&grid, k)?.apply(&f.forward());
    let norm = cell_multiplier(&grid, k)?.l2_norm_of(&f.forward());
    if norm == 0.0 {
        return Err(Error::InvalidArgument("P_k f vanishes".into()));
    }
    let fk = fk.inverse();
    let big = enlarged_cell_multiplier(&grid, k)?;
    let br = grid.bracket_table();
    let mut rows = Vec::new();
    for &sep in separations {
        if sep as f64 + reach >= grid.extent() / 2.0 {
            return Err(Error::WrapAround(format!("separation {sep} with cone reach {reach}")));
        }
        let mut l: Vec<f64> = cone.x0.iter().map(|c| c.round()).collect();
        l[0] += sep as f64;
        let w = big.apply(&fk.mul_real(&spatial_window_field(&grid, &l)?)?.forward());
        let mut sup: f64 = 0.0;
        for &t in times {
            let mut s = w.clone();
            let dt = t - cone.t0;
            for (c, b) in s.coeffs_mut().iter_mut().zip(&br) {
                *c *= Complex64::from_polar(1.0, dt * b);
            }
            let field = s.inverse();
            let mask = cone.slice_mask(&grid, t);
            for (v, m) in field.values().iter().zip(&mask) {
                if *m {
                    sup = sup.max(v.norm());
                }
            }
        }
        rows.push(OffcoreRow { separation: sep as f64, ratio: sup / norm });
    }
    let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.separation > 0.0).map(|r| (r.separation, r.ratio)).collect();
    let fit = if pts.len() >= 2 { Some(loglog_fit(&pts, None)?) } else { None };
    Ok(OffcoreTable { rows, fit })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrilinearReport {
    /// `int_K |F| |u1| |u2|^{p-1}`.
    pub integral: f64,
    /// `sup_t ||u1||_{L^2(K(t))}`.
    pub u1_l2: f64,
    /// `sup_t ||u2||_{L^2(K(t))}`.
    pub u2_l2: f64,
    /// `sup_t ||u2||_{L^{p+1}(K(t))}`.
    pub u2_lp: f64,
    /// `sup_t ||u2||_{L^{2(p-1)}(K(t))}`.
    pub u2_holder: f64,
    /// `sup_K |F|`.
    pub forcing_sup: f64,
    /// `N ||F||_inf ||u1||_{L^inf L^2} ||u2||^{p-1}_{L^inf L^{2(p-1)}}`.
    pub holder_bound: f64,
    /// `F^N[u2]` with shell thickness `N^{5 delta}`.
    pub force_functional: f64,
    /// `N^{-s+(d+2)/8+2d delta} ||u1|| ||u2||_2^{(d-4)/2} (||u2||_{p+1}^{d(6-d)/(2(d-2))} + F^{(6-d)/4})`,
    /// defined for `d >= 3`.
    pub bound_factor: Option<f64>,
    /// `integral / bound_factor`.
    pub implied_constant: Option<f64>,
}

/// Quadrature of the trilinear cone integral and the measurable factors of its bound.
#[allow(clippy::too_many_arguments)]
pub fn trilinear_cone_integral(
    forcing: &dyn Forcing,
    u1: &Trajectory,
    u2: &Trajectory,
    cone: &Cone,
    model: &NonlinearModel,
    s: f64,
    delta: f64,
) -> Result<TrilinearReport> {
    let grid = *u1.grid();
    if &grid != u2.grid() {
        return Err(Error::GridMismatch);
    }
    if u1.times != u2.times {
        return Err(Error::InvalidArgument("trajectories sampled at different times".into()));
    }
    u1.covers(cone.t0, cone.t_end())?;
    let p = model.power;
    let tol = 1e-9 * (1.0 + cone.t_end().abs());
    let idx: Vec<usize> =
        (0..u1.times.len()).filter(|&i| u1.times[i] >= cone.t0 - tol && u1.times[i] <= cone.t_end() + tol).collect();
    let dv = grid.cell_volume();
    let (mut u1_l2, mut u2_l2, mut u2_lp, mut u2_h, mut fsup) = (0f64, 0f64, 0f64, 0f64, 0f64);
    let mut profile = Vec::new();
    for &i in &idx {
        let t = u1.times[i];
        let mask = cone.slice_mask(&grid, t);
        let f = forcing.at(t);
        let (a, b) = (u1.states[i].u.values(), u2.states[i].u.values());
        let (mut s1, mut s2, mut sp, mut sh, mut integ) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for j in (0..grid.len()).filter(|&j| mask[j]) {
            s1 += a[j] * a[j];
            s2 += b[j] * b[j];
            sp += b[j].abs().powf(p + 1.0);
            sh += b[j].abs().powf(2.0 * (p - 1.0));
            fsup = fsup.max(f.values()[j].abs());
            integ += f.values()[j].abs() * a[j].abs() * b[j].abs().powf(p - 1.0);
        }
        u1_l2 = u1_l2.max((s1 * dv).sqrt());
        u2_l2 = u2_l2.max((s2 * dv).sqrt());
        u2_lp = u2_lp.max((sp * dv).powf(1.0 / (p + 1.0)));
        u2_h = u2_h.max((sh * dv).powf(1.0 / (2.0 * (p - 1.0))));
        profile.push(integ * dv);
    }
    let times: Vec<f64> = idx.iter().map(|&i| u1.times[i]).collect();
    let integral = if times.len() >= 2 {
        crate::grid::time_norm(&times, &profile, 1.0, (cone.t0, cone.t_end()))?
    } else {
        0.0
    };
    let holder_bound = cone.n * fsup * u1_l2 * u2_h.powf(p - 1.0);
    let force_functional = local_force(u2, cone, delta / 2.0, model)?;
    let d = grid.dim() as f64;
    let bound_factor = (grid.dim() >= 3).then(|| {
        cone.n.powf(-s + (d + 2.0) / 8.0 + 2.0 * d * delta)
            * u1_l2
            * u2_l2.powf((d - 4.0) / 2.0)
            * (u2_lp.powf(d * (6.0 - d) / (2.0 * (d - 2.0))) + force_functional.powf((6.0 - d) / 4.0))
    });
    let implied_constant = bound_factor.map(|b| if b > 0.0 { integral / b } else { 0.0 });
    Ok(TrilinearReport {
        integral,
        u1_l2,
        u2_l2,
        u2_lp,
        u2_holder: u2_h,
        forcing_sup: fsup,
        holder_bound,
        force_functional,
        bound_factor,
        implied_constant,
    })
}

/// One Monte Carlo run of the bush statistics at a single scale.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BushMonteCarloConfig {
    pub n: u64,
    pub delta: f64,
    pub draws: usize,
    pub seed: u64,
    /// `C` in `|l - x0| <= C N`.
    pub c: f64,
    /// Spatial cells with `|l - x0|_inf <= cell_radius` carry packets.
    pub cell_radius: i64,
    /// Highest amplitude classes examined.
    pub top_classes: usize,
    /// Bushes sampled per class, in extraction order.
    pub max_bushes: usize,
    /// Time samples on `[t0, t0 + N]`.
    pub time_samples: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BushMonteCarlo {
    pub n: u64,
    pub classes: Vec<BushDecomposition>,
    /// `2^{-m} (#B)^{-1/2} ||sum X_k e^{i(t-t0)<grad>} W||_{L^inf_{t,x}}` per draw, pooled over bushes.
    pub bush_samples: Vec<f64>,
    /// `2^{-m} mu^{-1/2} ||...||_{L^inf(K)}` over the remainder.
    pub remainder_samples: Vec<f64>,
    /// `(2^m #B)^{-1} ||...||_{L^inf(K minus tubes)}`.
    pub off_tube_samples: Vec<f64>,
    pub bush_psi: f64,
    pub remainder_psi: f64,
    pub off_tube_mean: f64,
    /// Tail fit when at least 1000 samples were pooled.
    pub bush_tail: Option<TailFit>,
    /// Classes without bushes or with empty remainder.
    pub skipped: usize,
}

/// Samples the bush, remainder and off-tube statistics for data `(f, g)`
/// with the `omega_2` part held fixed by `y_plan` and `X_k` drawn from
/// `x_plan.nth(draw)`. The cone is `K^N_{0, x0}`.
pub fn montecarlo_bush_supnorm(
    f: &RealField,
    g: &RealField,
    x0: &[f64],
    y_plan: &RandomSeedPlan,
    x_plan: &RandomSeedPlan,
    cfg: &BushMonteCarloConfig,
) -> Result<BushMonteCarlo> {
    let grid = *f.grid();
    let nf = cfg.n as f64;
    if cfg.draws == 0 || cfg.time_samples < 2 {
        return Err(Error::InvalidArgument("need draws and at least two time samples".into()));
    }
    let builder = PacketBuilder::new(f, g, y_plan, 0.0)?;
    let ks = dyadic_cells(grid.dim(), cfg.n)?;
    let centre: Vec<i64> = x0.iter().map(|c| c.round() as i64).collect();
    let ls: Vec<Vec<i64>> = cube_indices(grid.dim(), cfg.cell_radius)
        .into_iter()
        .map(|o| o.iter().zip(&centre).map(|(a, b)| a + b).collect())
        .collect();
    let packets = builder.build(&ks, &ls)?;
    let tubes: Vec<Tube> = packets.iter().map(|p| Tube::of_packet(p, nf, cfg.delta)).collect();
    let lattice = CubeLattice::new(nf, cfg.delta);
    let mut classes = bin_amplitudes(&packets, x0, nf, cfg.c)?;
    classes.reverse();
    classes.truncate(cfg.top_classes);
    let cone = Cone::new(0.0, x0.to_vec(), cfg.n, ConeKind::Standard)?;
    let times: Vec<f64> = (0..cfg.time_samples).map(|i| nf * i as f64 / (cfg.time_samples - 1) as f64).collect();
    let cone_masks: Vec<Vec<bool>> = times.iter().map(|&t| cone.slice_mask(&grid, t)).collect();
    let mut out = BushMonteCarlo {
        n: cfg.n,
        classes: Vec::new(),
        bush_samples: Vec::new(),
        remainder_samples: Vec::new(),
        off_tube_samples: Vec::new(),
        bush_psi: 0.0,
        remainder_psi: 0.0,
        off_tube_mean: 0.0,
        bush_tail: None,
        skipped: 0,
    };
    for class in &classes {
        let dec = greedy_bush_decomposition(class, &tubes, &lattice)?;
        let scale = 2f64.powi(class.m);
        if dec.bushes.is_empty() {
            out.skipped += 1;
        }
        for bush in dec.bushes.iter().take(cfg.max_bushes) {
            let sum = PacketSum::new(&grid, &packets, &bush.members);
            let off_masks: Vec<Vec<bool>> = times
                .iter()
                .zip(&cone_masks)
                .map(|(&t, cm)| {
                    let mut m = cm.clone();
                    for &b in &bush.members {
                        clear_disk(&grid, &tubes[b], t, &mut m);
                    }
                    m
                })
                .collect();
            let count = bush.members.len() as f64;
            for draw in 0..cfg.draws {
                let plan = x_plan.nth(draw as u64);
                let (mut all, mut off) = (0f64, 0f64);
                for (ti, &t) in times.iter().enumerate() {
                    let field = sum.field(t, |k| plan.x(k));
                    for (i, v) in field.values().iter().enumerate() {
                        let a = v.norm();
                        all = all.max(a);
                        if off_masks[ti][i] {
                            off = off.max(a);
                        }
                    }
                }
                out.bush_samples.push(all / (scale * count.sqrt()));
                out.off_tube_samples.push(off / (scale * count));
            }
        }
        if dec.remainder.is_empty() {
            out.skipped += 1;
        } else {
            let sum = PacketSum::new(&grid, &packets, &dec.remainder);
            for draw in 0..cfg.draws {
                let plan = x_plan.nth(draw as u64);
                let mut sup: f64 = 0.0;
                for (ti, &t) in times.iter().enumerate() {
                    let field = sum.field(t, |k| plan.x(k));
                    for (v, m) in field.values().iter().zip(&cone_masks[ti]) {
                        if *m {
                            sup = sup.max(v.norm());
                        }
                    }
                }
                out.remainder_samples.push(sup / (scale * (dec.mu as f64).sqrt()));
            }
        }
        out.classes.push(dec);
    }
    out.bush_psi = psi_estimate(&out.bush_samples);
    out.remainder_psi = psi_estimate(&out.remainder_samples);
    if !out.off_tube_samples.is_empty() {
        out.off_tube_mean = out.off_tube_samples.iter().sum::<f64>() / out.off_tube_samples.len() as f64;
    }
    if out.bush_samples.len() >= 1000 {
        out.bush_tail = Some(tail_statistics(&out.bush_samples)?);
    }
    Ok(out)
}

/// Clears the grid points of the tube's slice at `t` from `mask`.
fn clear_disk(grid: &TorusGrid, tube: &Tube, t: f64, mask: &mut [bool]) {
    if t < tube.t0 || t > tube.t0 + tube.length {
        return;
    }
    let c = tube.center(t);
    let dx = grid.dx();
    let n = grid.n() as i64;
    let reach = (tube.radius / dx).ceil() as i64 + 1;
    let coords = grid.axis_coords();
    // nearest index to the centre on each axis
    let base: Vec<i64> = c.iter().map(|&x| ((x - coords[0]) / dx).round() as i64).collect();
    let d = grid.dim();
    let side = (2 * reach + 1) as usize;
    let mut idx = [0usize; crate::grid::MAX_DIM];
    for flat in 0..side.pow(d as u32) {
        let mut rem = flat;
        let mut r2 = 0.0;
        for a in 0..d {
            let off = (rem % side) as i64 - reach;
            rem /= side;
            let j = (base[a] + off).rem_euclid(n) as usize;
            idx[a] = j;
            r2 += grid.wrap(coords[j] - c[a]).powi(2);
        }
        if r2 <= tube.radius * tube.radius {
            mask[grid.ravel(&idx[..d])] = false;
        }
    }
}

/// Scaling summary over several scales: `C` is fitted at the smallest scale
/// and every scale is compared with `C N^{d delta}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BushScaling {
    pub ns: Vec<u64>,
    pub psi: Vec<f64>,
    pub constant: f64,
    /// `max_N psi(N) / (C N^{d delta})`.
    pub worst_ratio: f64,
    /// Log-log slope of the mean off-tube statistic in `N`.
    pub off_tube_fit: Option<RegressionResult>,
}

pub fn bush_scaling(runs: &[BushMonteCarlo], d: usize, delta: f64) -> Result<BushScaling> {
    if runs.is_empty() {
        return Err(Error::InsufficientData("no runs".into()));
    }
    let ns: Vec<u64> = runs.iter().map(|r| r.n).collect();
    let psi: Vec<f64> = runs.iter().map(|r| r.bush_psi).collect();
    let growth = |n: u64| (n as f64).powf(d as f64 * delta);
    let constant = psi[0] / growth(ns[0]);
    let worst_ratio = ns.iter().zip(&psi).map(|(&n, &p)| p / (constant * growth(n))).fold(0.0, f64::max);
    let pts: Vec<(f64, f64)> =
        runs.iter().filter(|r| r.off_tube_mean > 0.0).map(|r| (r.n as f64, r.off_tube_mean)).collect();
    let off_tube_fit = if pts.len() >= 2 { Some(loglog_fit(&pts, None)?) } else { None };
    Ok(BushScaling { ns, psi, constant, worst_ratio, off_tube_fit })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tube(l: &[f64], v: &[f64]) -> Tube {
        Tube { l: l.to_vec(), velocity: v.to_vec(), t0: 0.0, length: 4.0, radius: 0.5 }
    }

    #[test]
    fn dyadic_blocks() {
        assert_eq!(dyadic_cells(2, 1).unwrap().len(), 5);
        let k4 = dyadic_cells(2, 4).unwrap();
        assert!(k4.iter().all(|k| {
            let r = ((k[0] * k[0] + k[1] * k[1]) as f64).sqrt();
            r > 2.0 && r <= 4.0
        }));
        assert!(dyadic_cells(2, 3).is_err());
    }

    #[test]
    fn velocity_is_subluminal() {
        assert_eq!(group_velocity(&[0, 0]), vec![0.0, 0.0]);
        for k in dyadic_cells(3, 8).unwrap() {
            assert!(group_velocity(&k).iter().map(|v| v * v).sum::<f64>() < 1.0);
        }
    }

    #[test]
    fn meet_tests_agree() {
        let t = tube(&[0.0, 0.0], &[0.6, -0.3]);
        for (tc, xc, yes) in [
            (0.0, [0.0, 0.0], true),
            (2.0, [-1.2, 0.6], true),
            (2.0, [3.0, 0.0], false),
            (9.0, [0.0, 0.0], false),
            (2.0, [-1.2, 1.95], true),
            (2.0, [-1.2, 2.5], false),
        ] {
            assert_eq!(t.meets_cube(tc, &xc, 1.0), yes, "{tc} {xc:?}");
            assert_eq!(t.meets_cube_search(tc, &xc, 1.0), yes, "{tc} {xc:?}");
        }
    }

    #[test]
    fn dyadic_binning() {
        assert_eq!(dyadic_exponent(1.0), 0);
        assert_eq!(dyadic_exponent(1.999), 0);
        assert_eq!(dyadic_exponent(2.0), 1);
        assert_eq!(dyadic_exponent(0.3), -2);
        assert_eq!(bush_threshold(16.0, 2, 32), 2);
        assert_eq!(bush_threshold(16.0, 2, 1), 1);
    }

    fn class_of(tubes: &[Tube], mu: usize) -> AmplitudeClass {
        AmplitudeClass { m: 0, members: (0..tubes.len()).collect(), mu }
    }

    #[test]
    fn three_tubes_through_one_cube() {
        let tubes = vec![tube(&[0.0, 0.0], &[0.5, 0.0]), tube(&[0.0, 0.0], &[-0.5, 0.2]), tube(&[0.3, 0.0], &[0.0, 0.7])];
        let lat = CubeLattice { side: 1.0 };
        let dec = greedy_bush_decomposition(&class_of(&tubes, 2), &tubes, &lat).unwrap();
        assert_eq!(dec.bushes.len(), 1);
        assert_eq!(dec.bushes[0].members.len(), 3);
        assert!(dec.remainder.is_empty());
        let dec5 = greedy_bush_decomposition(&class_of(&tubes, 5), &tubes, &lat).unwrap();
        assert!(dec5.bushes.is_empty());
        assert_eq!(dec5.remainder.len(), 3);
        let audit = audit_bush_decomposition(&class_of(&tubes, 5), &tubes, &lat, &dec5);
        assert!(audit.violations.is_empty());
        assert_eq!(audit.max_remainder_count, 3);
        let empty = AmplitudeClass { m: 0, members: vec![], mu: 1 };
        let e = greedy_bush_decomposition(&empty, &tubes, &lat).unwrap();
        assert!(e.bushes.is_empty() && e.remainder.is_empty());
    }

    #[test]
    fn audit_catches_a_bad_decomposition() {
        let tubes = vec![tube(&[0.0, 0.0], &[0.5, 0.0]), tube(&[0.0, 0.0], &[-0.5, 0.2])];
        let lat = CubeLattice { side: 1.0 };
        let bad = BushDecomposition { m: 0, mu: 2, bushes: vec![], remainder: vec![0, 1] };
        assert!(!audit_bush_decomposition(&class_of(&tubes, 2), &tubes, &lat, &bad).violations.is_empty());
    }
}
