//! Truncated light cones, localized energy and force functionals, the flux
//! inequalities they satisfy, the checks on the forcing used by the induction
//! on scales, and the regularity-threshold arithmetic.

use num_complex::Complex64;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::decomposition::smoothstep;
use crate::error::{Error, Result};
use crate::grid::{time_norm, RealField, SpectralField, StatePair, TorusGrid};
use crate::solver::{integrate, EnergyExponents, Forcing, NonlinearModel, Trajectory};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConeKind {
    /// `|x - x0|_inf <= 2N - (t - t0)`.
    Standard,
    /// `|x - x0|_inf <= 10N - (t - t0)`.
    Wide,
}

/// `K^N_{t0,x0}` or its widening.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cone {
    pub t0: f64,
    pub x0: Vec<f64>,
    pub n: f64,
    pub kind: ConeKind,
}

impl Cone {
    pub fn new(t0: f64, x0: Vec<f64>, n: u64, kind: ConeKind) -> Result<Self> {
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::InvalidArgument(format!("cone scale {n} is not dyadic")));
        }
        if x0.is_empty() {
            return Err(Error::InvalidArgument("cone base needs a center".into()));
        }
        Ok(Self { t0, x0, n: n as f64, kind })
    }

    pub fn widened(&self) -> Self {
        Self { kind: ConeKind::Wide, ..self.clone() }
    }

    fn base(&self) -> f64 {
        match self.kind {
            ConeKind::Standard => 2.0 * self.n,
            ConeKind::Wide => 10.0 * self.n,
        }
    }

    pub fn t_end(&self) -> f64 {
        self.t0 + self.n
    }

    /// Half side of the slice at time `t` (may be negative outside the time range).
    pub fn half_width(&self, t: f64) -> f64 {
        self.base() - (t - self.t0)
    }

    /// Exact membership in `R x R^d`.
    pub fn contains(&self, t: f64, x: &[f64]) -> bool {
        if t < self.t0 || t > self.t_end() {
            return false;
        }
        let r = x.iter().zip(&self.x0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        r <= self.half_width(t)
    }

    /// Grid points of the slice at `t`, displacements taken modulo the torus.
    pub fn slice_mask(&self, grid: &TorusGrid, t: f64) -> Vec<bool> {
        let inside_time = t >= self.t0 - 1e-12 && t <= self.t_end() + 1e-12;
        let hw = self.half_width(t);
        let coords = grid.axis_coords();
        let per_axis: Vec<Vec<f64>> =
            self.x0.iter().map(|&c| coords.iter().map(|&x| grid.wrap(x - c).abs()).collect()).collect();
        (0..grid.len())
            .map(|i| {
                if !inside_time {
                    return false;
                }
                let m = grid.unravel(i);
                (0..grid.dim()).all(|a| per_axis[a][m[a]] <= hw + 1e-12)
            })
            .collect()
    }

    fn check_grid(&self, grid: &TorusGrid) -> Result<()> {
        if self.x0.len() != grid.dim() {
            return Err(Error::InvalidArgument("cone center has wrong dimension".into()));
        }
        Ok(())
    }
}

fn gradient_sq(u: &RealField) -> RealField {
    let grid = *u.grid();
    let spec = u.forward();
    let mut acc = RealField::zeros(grid);
    for a in 0..grid.dim() {
        let mut s: SpectralField = spec.clone();
        s.multiply(|xi| Complex64::new(0.0, xi[a]));
        let g = s.inverse_real();
        for (o, v) in acc.values_mut().iter_mut().zip(g.values()) {
            *o += v * v;
        }
    }
    acc
}

/// `u_t^2/2 + u^2/2 + |grad u|^2/2 + |u|^{p+1}/(p+1)` pointwise.
pub fn energy_density(state: &StatePair, model: &NonlinearModel) -> RealField {
    let g2 = gradient_sq(&state.u);
    let mut out = RealField::zeros(*state.grid());
    for (i, o) in out.values_mut().iter_mut().enumerate() {
        let (u, v) = (state.u.values()[i], state.ut.values()[i]);
        *o = 0.5 * (v * v + u * u + g2.values()[i]) + model.potential(u);
    }
    out
}

fn masked_integral(f: &RealField, mask: &[bool]) -> f64 {
    f.values().iter().zip(mask).filter(|(_, &m)| m).map(|(v, _)| v).sum::<f64>() * f.grid().cell_volume()
}

fn cone_indices(traj: &Trajectory, cone: &Cone) -> Result<Vec<usize>> {
    cone.check_grid(traj.grid())?;
    traj.covers(cone.t0, cone.t_end())?;
    let tol = 1e-9 * (1.0 + cone.t_end().abs());
    Ok((0..traj.times.len())
        .filter(|&i| traj.times[i] >= cone.t0 - tol && traj.times[i] <= cone.t_end() + tol)
        .collect())
}

/// `sup_t int_{slice(t)} energy density` over the stored times in the cone.
/// For the functional on `K~` pass a wide cone.
pub fn local_energy(traj: &Trajectory, cone: &Cone, model: &NonlinearModel) -> Result<f64> {
    let idx = cone_indices(traj, cone)?;
    let grid = *traj.grid();
    Ok(idx
        .iter()
        .map(|&i| {
            let t = traj.times[i];
            masked_integral(&energy_density(&traj.states[i], model), &cone.slice_mask(&grid, t))
        })
        .fold(0.0, f64::max))
}

/// `e^N_{t0,x0} = int_{|x-x0|_inf <= 3N} v_t^2 + v^2 + |grad v|^2 + |v|^{p+1}` at `t0`.
pub fn base_energy(state: &StatePair, cone: &Cone, model: &NonlinearModel) -> Result<f64> {
    let grid = *state.grid();
    cone.check_grid(&grid)?;
    let g2 = gradient_sq(&state.u);
    let box3 = Cone { kind: ConeKind::Standard, ..cone.clone() };
    let mask = box_mask(&grid, &box3.x0, 3.0 * cone.n);
    let dens = RealField::from_vec(
        grid,
        (0..grid.len())
            .map(|i| {
                let (u, v) = (state.u.values()[i], state.ut.values()[i]);
                v * v + u * u + g2.values()[i] + u.abs().powf(model.power + 1.0)
            })
            .collect(),
    )?;
    Ok(masked_integral(&dens, &mask))
}

fn box_mask(grid: &TorusGrid, x0: &[f64], half: f64) -> Vec<bool> {
    (0..grid.len())
        .map(|i| {
            let p = grid.point(i);
            (0..grid.dim()).all(|a| grid.wrap(p[a] - x0[a]).abs() <= half + 1e-12)
        })
        .collect()
}

/// Smooth cutoff equal to 1 on `|x - x0|_inf <= 2N` and 0 outside `3N`.
pub fn extension_cutoff(grid: &TorusGrid, x0: &[f64], n: f64) -> RealField {
    let x0 = x0.to_vec();
    let g = *grid;
    RealField::from_fn(g, move |x| {
        x.iter().zip(&x0).map(|(a, b)| smoothstep((3.0 * n - g.wrap(a - b).abs()) / n)).product()
    })
}

/// Annulus area (`d = 1, 2, 3`) of `{y : ||y| - r| <= w}`.
pub fn shell_volume(d: usize, r: f64, w: f64) -> f64 {
    let (a, b) = ((r - w).max(0.0), r + w);
    match d {
        1 => 2.0 * (b - a),
        2 => std::f64::consts::PI * (b * b - a * a),
        3 => 4.0 / 3.0 * std::f64::consts::PI * (b.powi(3) - a.powi(3)),
        _ => f64::NAN,
    }
}

/// `sup_{t', |x'-x0| <= 3N} int_{t0}^{t0+N} int_{||x-x'| - |t-t'|| <= N^{10 delta}} |u|^{p+1}`.
///
/// `t'` runs over the stored times in the cone and `x'` over every grid point
/// in the ball (a finer lattice than spacing `N^{10 delta}/2`). The shell
/// integrals are FFT convolutions with annulus indicators.
pub fn local_force(traj: &Trajectory, cone: &Cone, delta: f64, model: &NonlinearModel) -> Result<f64> {
    let idx = cone_indices(traj, cone)?;
    let grid = *traj.grid();
    let w = cone.n.powf(10.0 * delta);
    if grid.extent() < 2.0 * (cone.n + w) {
        return Err(Error::WrapAround(format!(
            "extent {} below {} needed for shells of radius N + N^(10 delta)",
            grid.extent(),
            2.0 * (cone.n + w)
        )));
    }
    if idx.len() < 2 {
        return Err(Error::InsufficientData("cone covers fewer than two stored times".into()));
    }
    let h = traj.spacing();
    let rho: Vec<SpectralField> = idx
        .iter()
        .map(|&i| traj.states[i].u.map(|u| u.abs().powf(model.power + 1.0)).forward())
        .collect();
    let radius: Vec<f64> = (0..grid.len())
        .map(|i| {
            let p = grid.point(i);
            (0..grid.dim()).map(|a| p[a] * p[a]).sum::<f64>().sqrt()
        })
        .collect();
    let kernels: Vec<SpectralField> = (0..idx.len())
        .map(|lag| {
            let r = lag as f64 * h;
            let k: Vec<f64> = radius.iter().map(|&y| if (y - r).abs() <= w { 1.0 } else { 0.0 }).collect();
            RealField::from_vec(grid, k).expect("finite").forward()
        })
        .collect();
    let ball = {
        let x0 = cone.x0.clone();
        (0..grid.len())
            .map(|i| {
                let p = grid.point(i);
                (0..grid.dim()).map(|a| grid.wrap(p[a] - x0[a]).powi(2)).sum::<f64>().sqrt() <= 3.0 * cone.n + 1e-12
            })
            .collect::<Vec<bool>>()
    };
    let m = idx.len();
    let mut best: f64 = 0.0;
    for i in 0..m {
        let mut acc = SpectralField::zeros(grid);
        for j in 0..m {
            let wt = if j == 0 || j == m - 1 { 0.5 * h } else { h };
            let lag = i.abs_diff(j);
            let data: Vec<Complex64> =
                kernels[lag].coeffs().iter().zip(rho[j].coeffs()).map(|(a, b)| a * b * wt).collect();
            acc.add_scaled(Complex64::new(1.0, 0.0), &SpectralField::from_vec(grid, data)?)?;
        }
        let field = acc.inverse_real();
        let top = field.values().iter().zip(&ball).filter(|(_, &b)| b).map(|(v, _)| *v).fold(0.0, f64::max);
        best = best.max(top);
    }
    Ok(best)
}

/// `F chi_K` as a forcing.
pub struct ConeMaskedForcing<'a> {
    pub inner: &'a dyn Forcing,
    pub cone: Cone,
    pub grid: TorusGrid,
}

impl Forcing for ConeMaskedForcing<'_> {
    fn at(&self, t: f64) -> RealField {
        let f = self.inner.at(t);
        let mask = self.cone.slice_mask(&self.grid, t);
        let vals = f.values().iter().zip(&mask).map(|(v, &m)| if m { *v } else { 0.0 }).collect();
        RealField::from_vec(self.grid, vals).expect("finite")
    }
}

/// Solves the localized equation on `[t0, t0 + N]`: data
/// `cutoff * (v(t0), v_t(t0))` and forcing `F chi_K`.
pub fn localized_solution(
    state_t0: &StatePair,
    forcing: Option<&dyn Forcing>,
    cone: &Cone,
    dt: f64,
    stride: usize,
    model: &NonlinearModel,
) -> Result<Trajectory> {
    let grid = *state_t0.grid();
    cone.check_grid(&grid)?;
    let cut = extension_cutoff(&grid, &cone.x0, cone.n);
    let data = StatePair::new(state_t0.u.mul(&cut)?, state_t0.ut.mul(&cut)?)?;
    let steps = (cone.n / dt).round() as usize;
    if ((steps as f64) * dt - cone.n).abs() > 1e-9 * cone.n {
        return Err(Error::InvalidArgument(format!("dt = {dt} does not divide N = {}", cone.n)));
    }
    let masked = forcing.map(|f| ConeMaskedForcing { inner: f, cone: cone.clone(), grid });
    integrate(&data, cone.t0, dt, steps, stride, model, masked.as_ref().map(|m| m as &dyn Forcing))
}

/// `||F chi_K||_{L^p_t L^{2p}_x}` over the cone's time range.
pub fn cone_strichartz_norm(times: &[f64], forcing: &dyn Forcing, grid: &TorusGrid, cone: &Cone, model: &NonlinearModel) -> Result<f64> {
    let (q, r) = model.strichartz_exponents();
    let profile: Vec<f64> = times
        .iter()
        .map(|&t| {
            let f = forcing.at(t);
            let mask = cone.slice_mask(grid, t);
            let vals = f.values().iter().zip(&mask).map(|(v, &m)| if m { *v } else { 0.0 }).collect();
            RealField::from_vec(*grid, vals).expect("finite").lp_norm(r)
        })
        .collect();
    time_norm(times, &profile, q, (cone.t0, cone.t_end()))
}

/// `int_K |F| |u_t| |u|^{p-1}` by trapezoid in time over the stored slices.
pub fn cone_trilinear(traj: &Trajectory, forcing: &dyn Forcing, cone: &Cone, model: &NonlinearModel) -> Result<f64> {
    let idx = cone_indices(traj, cone)?;
    let grid = *traj.grid();
    let times: Vec<f64> = idx.iter().map(|&i| traj.times[i]).collect();
    let vals: Vec<f64> = idx
        .iter()
        .map(|&i| {
            let t = traj.times[i];
            let f = forcing.at(t);
            let mask = cone.slice_mask(&grid, t);
            let s = &traj.states[i];
            (0..grid.len())
                .filter(|&j| mask[j])
                .map(|j| f.values()[j].abs() * s.ut.values()[j].abs() * s.u.values()[j].abs().powf(model.power - 1.0))
                .sum::<f64>()
                * grid.cell_volume()
        })
        .collect();
    if times.len() < 2 {
        return Ok(0.0);
    }
    time_norm(&times, &vals, 1.0, (cone.t0, cone.t_end()))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FluxReport {
    pub cone: Cone,
    /// `E~` of `w` over the wide cone.
    pub e_tilde: f64,
    /// Energy on the wide slice at `t0`.
    pub e_start: f64,
    /// `e_tilde / e_start`; at most 1 up to discretization when `F = 0`.
    pub energy_ratio: f64,
    /// `e^N_{t0,x0}` of the data.
    pub e_base: f64,
    /// `E(w(t0)) / e^N_{t0,x0}`, the extension constant.
    pub c0: f64,
    /// `||F||_{S~(K)}^{2p}`.
    pub s_term: f64,
    /// `int_K |F||w_t||w|^{p-1}`.
    pub trilinear: f64,
    /// `F~` of `w`.
    pub f_tilde: f64,
    /// Smallest `C` with `e_tilde <= 8/7 c0 e_base + C (s_term + trilinear)`.
    pub constant_energy: f64,
    /// Smallest `C` with `f_tilde <= C N^{10 delta} (e_tilde + s_term + trilinear)`.
    pub constant_force: f64,
}

/// Evaluates both flux inequalities for the localized solution `w` of a cone.
pub fn flux_audit(
    w: &Trajectory,
    data_t0: &StatePair,
    forcing: Option<&dyn Forcing>,
    cone: &Cone,
    delta: f64,
    model: &NonlinearModel,
) -> Result<FluxReport> {
    let grid = *w.grid();
    let wide = cone.widened();
    let e_tilde = local_energy(w, &wide, model)?;
    let i0 = cone_indices(w, cone)?[0];
    let e_start = masked_integral(&energy_density(&w.states[i0], model), &wide.slice_mask(&grid, w.times[i0]));
    let e_base = base_energy(data_t0, cone, model)?;
    let cut = extension_cutoff(&grid, &cone.x0, cone.n);
    let ext = StatePair::new(data_t0.u.mul(&cut)?, data_t0.ut.mul(&cut)?)?;
    let e_ext = crate::solver::energy(&ext, model);
    let c0 = if e_base > 0.0 { e_ext / e_base } else { 0.0 };
    let (s_term, trilinear) = match forcing {
        Some(f) => {
            let idx = cone_indices(w, cone)?;
            let times: Vec<f64> = idx.iter().map(|&i| w.times[i]).collect();
            let s = cone_strichartz_norm(&times, f, &grid, cone, model)?;
            (s.powf(2.0 * model.power), cone_trilinear(w, f, cone, model)?)
        }
        None => (0.0, 0.0),
    };
    let f_tilde = local_force(w, cone, delta, model)?;
    let ratio = |num: f64, den: f64| {
        if num <= 0.0 {
            0.0
        } else if den > 0.0 {
            num / den
        } else {
            f64::INFINITY
        }
    };
    let constant_energy = ratio(e_tilde - 8.0 / 7.0 * c0 * e_base, s_term + trilinear);
    let constant_force = ratio(f_tilde, cone.n.powf(10.0 * delta) * (e_tilde + s_term + trilinear));
    Ok(FluxReport {
        cone: cone.clone(),
        e_tilde,
        e_start,
        energy_ratio: ratio(e_tilde, e_start),
        e_base,
        c0,
        s_term,
        trilinear,
        f_tilde,
        constant_energy,
        constant_force,
    })
}

/// Difference of two solutions on the cone: `max |u_a - u_b|` over the stored
/// slices. Finite speed of propagation makes this vanish when the data agree
/// on `|x - x0|_inf <= 2N`.
pub fn cone_difference(a: &Trajectory, b: &Trajectory, cone: &Cone) -> Result<f64> {
    let idx = cone_indices(a, cone)?;
    if a.times != b.times {
        return Err(Error::InvalidArgument("trajectories sampled at different times".into()));
    }
    let grid = *a.grid();
    let mut worst: f64 = 0.0;
    for &i in &idx {
        let mask = cone.slice_mask(&grid, a.times[i]);
        for (j, &m) in mask.iter().enumerate() {
            if m {
                worst = worst.max((a.states[i].u.values()[j] - b.states[i].u.values()[j]).abs());
            }
        }
    }
    Ok(worst)
}

/// Exponents of the induction-on-scales hypotheses.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ExponentBudget {
    pub d: usize,
    pub s: f64,
    pub delta: f64,
    pub theta: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl ExponentBudget {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0 / 50.0) {
            return Err(Error::InvalidArgument(format!("delta = {} outside (0, 1/50)", self.delta)));
        }
        if !(self.alpha > self.theta + 20.0 * self.delta) {
            return Err(Error::InvalidArgument("alpha must exceed theta + 20 delta".into()));
        }
        if !(self.beta > 0.0 && self.theta > 0.0) {
            return Err(Error::InvalidArgument("beta and theta must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConditionResult {
    pub label: String,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

impl ConditionResult {
    fn new(label: String, value: f64, limit: f64) -> Self {
        Self { label, value, limit, pass: value <= limit }
    }

    pub fn margin(&self) -> f64 {
        self.limit - self.value
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConditionReport {
    pub i: ConditionResult,
    pub ii: ConditionResult,
    pub iii: Vec<ConditionResult>,
    pub iv: Vec<ConditionResult>,
    /// Some `N` had `N^{1+theta}` beyond the horizon.
    pub partial_coverage: bool,
}

impl ConditionReport {
    pub fn all_pass(&self) -> bool {
        self.i.pass && self.ii.pass && self.iii.iter().all(|c| c.pass) && self.iv.iter().all(|c| c.pass)
    }
}

/// Sampled forcing `F = sum_N F_N`, each piece at the same uniform times.
pub struct SampledPieces {
    pub times: Vec<f64>,
    /// `(N, F_N(t_j))`.
    pub pieces: Vec<(u64, Vec<RealField>)>,
}

impl SampledPieces {
    pub fn sample(times: Vec<f64>, pieces: &[(u64, &dyn Forcing)]) -> Self {
        let pieces = pieces.iter().map(|(n, f)| (*n, times.iter().map(|&t| f.at(t)).collect())).collect();
        Self { times, pieces }
    }

    fn total(&self, j: usize, grid: &TorusGrid) -> RealField {
        let mut acc = RealField::zeros(*grid);
        for (_, fs) in &self.pieces {
            acc.add_scaled(1.0, &fs[j]).expect("same grid");
        }
        acc
    }
}

/// Evaluates conditions (i)-(iv) on a finite horizon.
///
/// - (i) `||F||_S` over the horizon, against `limit_s`;
/// - (ii) `sup_I ||F||_{L^1(I, L^b)}` over unit windows, against `eta`;
/// - (iii) `||F_N||_{L^1([N^{1+theta}, T], L^inf)}` against `eta N^{-beta}`;
/// - (iv) for each test trajectory, cone `K^N_{t0,x0}` with `t0 in {0, N, ..,
///   floor(N^theta) N}` and `x0 in N Z^d` inside `|x0|_inf <= x_range`, and every
///   piece `M >= N`: `int_K |F_M||u_t||u|^{p-1} <= eta M^{-alpha} (E~ + F~)`.
#[allow(clippy::too_many_arguments)]
pub fn check_conditions(
    sampled: &SampledPieces,
    grid: &TorusGrid,
    budget: &ExponentBudget,
    eta: f64,
    limit_s: f64,
    model: &NonlinearModel,
    scales: &[u64],
    x_range: f64,
    tests: &[&Trajectory],
) -> Result<ConditionReport> {
    budget.validate()?;
    let times = &sampled.times;
    if times.len() < 2 {
        return Err(Error::InvalidInterval("need at least two samples".into()));
    }
    let horizon = (times[0], times[times.len() - 1]);
    let (q, r) = model.strichartz_exponents();
    let ex = EnergyExponents::new(model)?;
    let totals: Vec<RealField> = (0..times.len()).map(|j| sampled.total(j, grid)).collect();
    let s_profile: Vec<f64> = totals.iter().map(|f| f.lp_norm(r)).collect();
    let i = ConditionResult::new("(i) ||F||_S".into(), time_norm(times, &s_profile, q, horizon)?, limit_s);
    let b_profile: Vec<f64> = totals.iter().map(|f| f.lp_norm(ex.b)).collect();
    let mut worst: f64 = 0.0;
    let mut a = horizon.0;
    while a < horizon.1 - 1e-12 {
        let bnd = (a + 1.0).min(horizon.1);
        worst = worst.max(time_norm(times, &b_profile, 1.0, (a, bnd))?);
        a += 0.5;
    }
    let ii = ConditionResult::new("(ii) sup_I ||F||_{L^1 L^b}".into(), worst, eta);
    let mut partial = false;
    let mut iii = Vec::new();
    for (n, fs) in &sampled.pieces {
        let nf = *n as f64;
        let start = nf.powf(1.0 + budget.theta);
        let value = if start >= horizon.1 {
            partial = true;
            0.0
        } else {
            let prof: Vec<f64> = fs.iter().map(|f| f.max_abs()).collect();
            // start may fall between samples: integrate from the first sample at or after it
            let first = times.iter().position(|&t| t >= start).unwrap_or(times.len() - 1);
            if first + 1 >= times.len() {
                0.0
            } else {
                time_norm(&times[first..], &prof[first..], 1.0, (times[first], horizon.1))?
            }
        };
        iii.push(ConditionResult::new(format!("(iii) N = {n}"), value, eta * nf.powf(-budget.beta)));
    }
    let mut iv = Vec::new();
    for &n in scales {
        let nf = n as f64;
        let reps = nf.powf(budget.theta).floor() as u64;
        let xs = lattice_points(grid.dim(), nf, x_range);
        for k in 0..=reps {
            let t0 = (k * n) as f64;
            if t0 + nf > horizon.1 + 1e-9 {
                partial = true;
                continue;
            }
            for x0 in &xs {
                let cone = Cone::new(t0, x0.clone(), n, ConeKind::Standard)?;
                for (ti, u) in tests.iter().enumerate() {
                    let e = local_energy(u, &cone.widened(), model)?;
                    let f = local_force(u, &cone, budget.delta, model)?;
                    for (m, fs) in sampled.pieces.iter().filter(|(m, _)| *m >= n) {
                        let piece = SampledForcing { times, fields: fs };
                        let lhs = cone_trilinear(u, &piece, &cone, model)?;
                        let rhs = eta * (*m as f64).powf(-budget.alpha) * (e + f);
                        iv.push(ConditionResult::new(
                            format!("(iv) N = {n}, t0 = {t0}, x0 = {x0:?}, M = {m}, u #{ti}"),
                            lhs,
                            rhs,
                        ));
                    }
                }
            }
        }
    }
    Ok(ConditionReport { i, ii, iii, iv, partial_coverage: partial })
}

fn lattice_points(d: usize, spacing: f64, range: f64) -> Vec<Vec<f64>> {
    let m = (range / spacing).floor() as i64;
    crate::decomposition::cube_indices(d, m)
        .into_iter()
        .map(|v| v.iter().map(|&c| c as f64 * spacing).collect())
        .collect()
}

/// Forcing read back from samples (nearest stored time).
struct SampledForcing<'a> {
    times: &'a [f64],
    fields: &'a [RealField],
}

impl Forcing for SampledForcing<'_> {
    fn at(&self, t: f64) -> RealField {
        let j = self
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map(|(j, _)| j)
            .unwrap_or(0);
        self.fields[j].clone()
    }
}

pub type Q = Ratio<i64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binding {
    /// `alpha = s - (d+2)/8 - 2d delta > theta + 20 delta`.
    Alpha,
    /// `beta < s + (d-3) theta / 2 - 1`.
    Beta,
    Both,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub d: i64,
    /// Infimum of admissible `s` (exclusive).
    pub s_min: Q,
    pub alpha_bound: Q,
    pub beta_bound: Q,
    pub binding: Binding,
    /// `s_min < 1` and the parameters satisfy their ranges.
    pub feasible: bool,
    pub reasons: Vec<String>,
}

/// Smallest `s` compatible with both exponent chains:
/// `s > theta + (20 + 2d) delta + (d+2)/8` and `s > 1 + beta - (d-3) theta / 2`.
pub fn regularity_threshold(d: i64, delta: Q, theta: Q, beta: Q) -> ThresholdReport {
    let zero = Q::from_integer(0);
    let one = Q::from_integer(1);
    let alpha_bound = theta + Q::from_integer(20 + 2 * d) * delta + Q::new(d + 2, 8);
    let beta_bound = one + beta - Q::new(d - 3, 2) * theta;
    let s_min = alpha_bound.max(beta_bound);
    let binding = if alpha_bound > beta_bound {
        Binding::Alpha
    } else if beta_bound > alpha_bound {
        Binding::Beta
    } else {
        Binding::Both
    };
    let mut reasons = Vec::new();
    if !(delta > zero && delta < Q::new(1, 50)) {
        reasons.push("delta outside (0, 1/50)".to_string());
    }
    if theta <= zero {
        reasons.push("theta must be positive".to_string());
    }
    if beta <= zero {
        reasons.push("beta must be positive".to_string());
    }
    if s_min >= one {
        reasons.push(format!("s_min = {s_min} leaves no room below s = 1"));
    }
    ThresholdReport { d, s_min, alpha_bound, beta_bound, binding, feasible: reasons.is_empty(), reasons }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptimizedThreshold {
    pub d: i64,
    /// Balancing `theta* = (6-d) / (4(d-1))`.
    pub theta_star: Q,
    /// `lim_{delta, beta -> 0}` of the threshold at `theta*`.
    pub s_min: Q,
    /// `(d^2 - d + 10) / (8(d-1))`.
    pub closed_form: Q,
}

/// The threshold with `delta, beta -> 0` and `theta` balanced.
pub fn optimized_threshold(d: i64) -> Result<OptimizedThreshold> {
    if !(4..=5).contains(&d) {
        return Err(Error::InvalidArgument(format!("thresholds are derived for d = 4, 5, got {d}")));
    }
    let theta_star = Q::new(6 - d, 4 * (d - 1));
    let zero = Q::from_integer(0);
    let limit = regularity_threshold(d, zero, theta_star, zero);
    Ok(OptimizedThreshold {
        d,
        theta_star,
        s_min: limit.s_min,
        closed_form: Q::new(d * d - d + 10, 8 * (d - 1)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn membership_examples() {
        let c = Cone::new(0.0, vec![0.0, 0.0], 4, ConeKind::Standard).unwrap();
        assert!(c.contains(1.0, &[7.0, -3.0]));
        assert!(!c.contains(1.0, &[7.01, 0.0]));
        assert!(c.contains(4.0, &[0.0, 0.0]));
        assert!(c.contains(4.0, &[4.0, 0.0]));
        assert!(!c.contains(4.1, &[0.0, 0.0]));
        let w = c.widened();
        assert!(w.contains(1.0, &[30.0, 0.0]));
        assert_eq!(2.0 * c.half_width(1.0), 14.0);
    }

    #[test]
    fn thresholds() {
        for (d, num, den) in [(4, 11, 12), (5, 15, 16)] {
            let t = optimized_threshold(d).unwrap();
            assert_eq!(t.s_min, Q::new(num, den));
            assert_eq!(t.closed_form, Q::new(num, den));
        }
        assert_eq!(Q::new(4 * 4 - 4 + 10, 8 * 3), Q::new(11, 12));
        let r = regularity_threshold(4, Q::new(1, 1000), Q::new(1, 6), Q::new(1, 100));
        assert!(r.feasible);
        let bad = regularity_threshold(4, Q::new(1, 10), Q::new(1, 6), Q::new(1, 100));
        assert!(!bad.feasible);
    }
}
