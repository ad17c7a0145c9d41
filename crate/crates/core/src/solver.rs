//! Defocusing nonlinear Klein-Gordon integration, energy accounting, the
//! contraction-map local solver for the forced equation
//!
//! ```text
//! v_tt - Lap v + v + |v+F|^{p-1}(v+F) = 0
//! ```
//!
//! and the energy-growth and interval-partition bookkeeping around it.
//!
//! The Strichartz space is `S(I) = L^p_t L^{2p}_x` for the configured power
//! `p`; at the critical power `p = (d+2)/(d-2)` this is
//! `L^{(d+2)/(d-2)}_t L^{2(d+2)/(d-2)}_x`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{mixed_norm, time_norm, RealField, SpectralField, StatePair, TorusGrid};
use crate::propagator::PairFlow;

/// `|u|^{p-1} u` with coupling `g` (1 for the equation, 0 for the free flow).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonlinearModel {
    pub dim: usize,
    pub power: f64,
    #[serde(default = "one")]
    pub coupling: f64,
}

fn one() -> f64 {
    1.0
}

impl NonlinearModel {
    pub fn new(dim: usize, power: f64) -> Result<Self> {
        if !(power >= 1.0) || !power.is_finite() {
            return Err(Error::InvalidArgument(format!("power {power} below 1")));
        }
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        Ok(Self { dim, power, coupling: 1.0 })
    }

    /// Energy-critical power `(d+2)/(d-2)`, `d >= 3`.
    pub fn critical(dim: usize) -> Result<Self> {
        if dim < 3 {
            return Err(Error::InvalidArgument(format!("no critical power in d = {dim}")));
        }
        Self::new(dim, (dim as f64 + 2.0) / (dim as f64 - 2.0))
    }

    /// Same power with the nonlinearity switched off.
    pub fn free(self) -> Self {
        Self { coupling: 0.0, ..self }
    }

    #[inline]
    pub fn nonlinearity(&self, u: f64) -> f64 {
        if self.coupling == 0.0 {
            return 0.0;
        }
        let p = self.power;
        let v = if p == 3.0 {
            u * u * u
        } else if p == 1.0 {
            u
        } else {
            u.abs().powf(p - 1.0) * u
        };
        self.coupling * v
    }

    /// `g |u|^{p+1} / (p+1)`.
    #[inline]
    pub fn potential(&self, u: f64) -> f64 {
        self.coupling * u.abs().powf(self.power + 1.0) / (self.power + 1.0)
    }

    /// `(q, r)` of `S(I)`.
    pub fn strichartz_exponents(&self) -> (f64, f64) {
        (self.power, 2.0 * self.power)
    }
}

/// External forcing `F(t)`.
pub trait Forcing: Sync {
    fn at(&self, t: f64) -> RealField;
}

/// `F(t) = pi_1 K(t)(f, g)`, the free evolution of Cauchy data.
#[derive(Clone, Debug)]
pub struct FreeForcing {
    flow: PairFlow,
    u: SpectralField,
    ut: SpectralField,
    amplitude: f64,
}

impl FreeForcing {
    pub fn new(data: &StatePair) -> Self {
        Self { flow: PairFlow::new(*data.grid()), u: data.u.forward(), ut: data.ut.forward(), amplitude: 1.0 }
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self { amplitude: self.amplitude * a, ..self.clone() }
    }
}

impl Forcing for FreeForcing {
    fn at(&self, t: f64) -> RealField {
        let (mut u, mut ut) = (self.u.clone(), self.ut.clone());
        self.flow.evolve_spectral(&mut u, &mut ut, t);
        let mut f = u.inverse_real();
        f.scale(self.amplitude);
        f
    }
}

/// Forcing given by a closure.
pub struct FnForcing<F: Fn(f64) -> RealField + Sync>(pub F);

impl<F: Fn(f64) -> RealField + Sync> Forcing for FnForcing<F> {
    fn at(&self, t: f64) -> RealField {
        (self.0)(t)
    }
}

/// Snapshots at uniformly spaced times.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<StatePair>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, states: Vec<StatePair>) -> Result<Self> {
        if times.is_empty() || times.len() != states.len() {
            return Err(Error::InvalidArgument("one state per time stamp required".into()));
        }
        if times.len() > 1 {
            let h = times[1] - times[0];
            if !(h > 0.0) {
                return Err(Error::InvalidArgument("time stamps must increase".into()));
            }
            for w in times.windows(2) {
                if ((w[1] - w[0]) - h).abs() > 1e-9 * h.max(1.0) {
                    return Err(Error::InvalidArgument("time stamps must be uniform".into()));
                }
            }
        }
        Ok(Self { times, states })
    }

    pub fn spacing(&self) -> f64 {
        if self.times.len() > 1 {
            self.times[1] - self.times[0]
        } else {
            0.0
        }
    }

    pub fn grid(&self) -> &TorusGrid {
        self.states[0].grid()
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    /// Checks that `[a, b]` lies within the stored range.
    pub fn covers(&self, a: f64, b: f64) -> Result<()> {
        let tol = 1e-9 * (1.0 + b.abs());
        if a < self.start() - tol || b > self.end() + tol {
            return Err(Error::CoverageGap { start: a, end: b });
        }
        Ok(())
    }

    /// `||u||_{L^q_t L^r_x}` over `window`.
    pub fn mixed_norm(&self, q: f64, r: f64, window: (f64, f64)) -> Result<f64> {
        let fields: Vec<&RealField> = self.states.iter().map(|s| &s.u).collect();
        mixed_norm(&self.times, &fields, q, r, window)
    }

    pub fn strichartz_norm(&self, model: &NonlinearModel) -> Result<f64> {
        let (q, r) = model.strichartz_exponents();
        self.mixed_norm(q, r, (self.start(), self.end()))
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EnergyRecord {
    pub t: f64,
    pub energy: f64,
}

/// `E(u, u_t) = int u_t^2/2 + |grad u|^2/2 + u^2/2 + |u|^{p+1}/(p+1)`.
pub fn energy(state: &StatePair, model: &NonlinearModel) -> f64 {
    let h1 = state.u.forward().sobolev_norm(1.0);
    let v = state.ut.lp_norm(2.0);
    let pot: f64 = state.u.values().iter().map(|&u| model.potential(u)).sum::<f64>() * state.grid().cell_volume();
    0.5 * (h1 * h1 + v * v) + pot
}

fn check_finite(f: &RealField, t: f64) -> Result<()> {
    if f.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence(format!("non-finite samples at t = {t}")))
    }
}

/// Strang splitting: half linear flow, nonlinear kick, half linear flow.
/// The state is kept in Fourier space; each step costs one inverse and one
/// forward transform plus whatever the forcing needs.
pub struct StrangStepper<'a> {
    flow: PairFlow,
    model: NonlinearModel,
    dt: f64,
    half: Vec<(f64, f64)>,
    forcing: Option<&'a dyn Forcing>,
    u: SpectralField,
    ut: SpectralField,
    t: f64,
}

impl<'a> StrangStepper<'a> {
    pub fn new(
        state: &StatePair,
        t: f64,
        dt: f64,
        model: NonlinearModel,
        forcing: Option<&'a dyn Forcing>,
    ) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidArgument(format!("dt = {dt} must be positive")));
        }
        let flow = PairFlow::new(*state.grid());
        let half = flow.symbol().iter().map(|&w| (0.5 * dt * w).sin_cos()).collect();
        Ok(Self { flow, model, dt, half, forcing, u: state.u.forward(), ut: state.ut.forward(), t })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    fn half_linear(&mut self) {
        let sym = self.flow.symbol();
        for (((a, b), &(s, c)), &w) in
            self.u.coeffs_mut().iter_mut().zip(self.ut.coeffs_mut().iter_mut()).zip(&self.half).zip(sym)
        {
            let (a0, b0) = (*a, *b);
            *a = a0 * c + b0 * (s / w);
            *b = -a0 * (w * s) + b0 * c;
        }
    }

    pub fn step(&mut self) -> Result<()> {
        self.half_linear();
        let mid = self.t + 0.5 * self.dt;
        let mut w = self.u.inverse_real();
        if let Some(f) = self.forcing {
            w.add_scaled(1.0, &f.at(mid))?;
        }
        check_finite(&w, mid)?;
        let p = self.model.power;
        if self.model.coupling != 0.0 {
            let limit = 0.1 / (1.0 + w.max_abs().powf(p - 1.0));
            if self.dt > limit * (1.0 + 1e-12) {
                return Err(Error::TimeStep { dt: self.dt, limit });
            }
            let model = self.model;
            let kick = w.map(|v| model.nonlinearity(v)).forward();
            self.ut.add_scaled(Complex64::new(-self.dt, 0.0), &kick)?;
        }
        self.half_linear();
        self.t += self.dt;
        Ok(())
    }

    pub fn state(&self) -> Result<StatePair> {
        let s = StatePair::new(self.u.inverse_real(), self.ut.inverse_real())?;
        check_finite(&s.u, self.t)?;
        check_finite(&s.ut, self.t)?;
        Ok(s)
    }
}

/// One Strang step from time `t`.
pub fn step_strang(
    state: &StatePair,
    t: f64,
    dt: f64,
    model: &NonlinearModel,
    forcing: Option<&dyn Forcing>,
) -> Result<StatePair> {
    let mut s = StrangStepper::new(state, t, dt, *model, forcing)?;
    s.step()?;
    s.state()
}

/// Integrates `steps` Strang steps, storing every `stride`-th state.
pub fn integrate(
    data: &StatePair,
    t0: f64,
    dt: f64,
    steps: usize,
    stride: usize,
    model: &NonlinearModel,
    forcing: Option<&dyn Forcing>,
) -> Result<Trajectory> {
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be positive".into()));
    }
    let mut s = StrangStepper::new(data, t0, dt, *model, forcing)?;
    let mut times = vec![t0];
    let mut states = vec![data.clone()];
    for i in 1..=steps {
        s.step()?;
        if i % stride == 0 {
            times.push(t0 + i as f64 * dt);
            states.push(s.state()?);
        }
    }
    Trajectory::new(times, states)
}

/// Energies along a trajectory.
pub fn energy_series(traj: &Trajectory, model: &NonlinearModel) -> Vec<EnergyRecord> {
    traj.times
        .iter()
        .zip(&traj.states)
        .map(|(&t, s)| EnergyRecord { t, energy: energy(s, model) })
        .collect()
}

/// `D(t_j) = int_{t_0}^{t_j} sin((t_j-s)<grad>)/<grad> N(s) ds` and its time
/// derivative, by cumulative trapezoid sums of `cos(s w) N^` and `sin(s w) N^`.
fn duhamel_series(flow: &PairFlow, taus: &[f64], sources: &[SpectralField]) -> Vec<(SpectralField, SpectralField)> {
    let grid = *flow.grid();
    let sym = flow.symbol();
    let len = grid.len();
    let zero = Complex64::new(0.0, 0.0);
    let mut a = vec![zero; len];
    let mut b = vec![zero; len];
    let mut out = Vec::with_capacity(taus.len());
    let mut prev: Option<(f64, &SpectralField)> = None;
    for (&tau, src) in taus.iter().zip(sources) {
        if let Some((tp, sp)) = prev {
            let h = 0.5 * (tau - tp);
            for m in 0..len {
                let w = sym[m];
                let (s0, c0) = (tp * w).sin_cos();
                let (s1, c1) = (tau * w).sin_cos();
                let (n0, n1) = (sp.coeffs()[m], src.coeffs()[m]);
                a[m] += (n0 * c0 + n1 * c1) * h;
                b[m] += (n0 * s0 + n1 * s1) * h;
            }
        }
        prev = Some((tau, src));
        let mut d = SpectralField::zeros(grid);
        let mut dd = SpectralField::zeros(grid);
        for m in 0..len {
            let w = sym[m];
            let (s, c) = (tau * w).sin_cos();
            d.coeffs_mut()[m] = (a[m] * s - b[m] * c) / w;
            dd.coeffs_mut()[m] = a[m] * c + b[m] * s;
        }
        out.push((d, dd));
    }
    out
}

fn uniform_times(t0: f64, t1: f64, dt: f64) -> Result<Vec<f64>> {
    if !(t1 > t0) {
        return Err(Error::InvalidInterval(format!("[{t0}, {t1}]")));
    }
    let m = ((t1 - t0) / dt).round() as usize;
    if m == 0 || ((m as f64) * dt - (t1 - t0)).abs() > 1e-9 * (t1 - t0) {
        return Err(Error::InvalidInterval(format!("[{t0}, {t1}] is not a multiple of dt = {dt}")));
    }
    Ok((0..=m).map(|j| t0 + j as f64 * dt).collect())
}

/// Free evolution `K(t - t0)(v0, v1)` at the given times.
fn free_series(flow: &PairFlow, data: &StatePair, times: &[f64]) -> Vec<(SpectralField, SpectralField)> {
    let (u, ut) = (data.u.forward(), data.ut.forward());
    times
        .iter()
        .map(|&t| {
            let (mut a, mut b) = (u.clone(), ut.clone());
            flow.evolve_spectral(&mut a, &mut b, t - times[0]);
            (a, b)
        })
        .collect()
}

/// The Duhamel map `T v = K(t)(v0,v1) - int sin((t-s)<grad>)/<grad> N(v+F)(s) ds`.
struct DuhamelMap<'a> {
    flow: PairFlow,
    model: NonlinearModel,
    times: Vec<f64>,
    free: Vec<(SpectralField, SpectralField)>,
    forcing: Vec<Option<RealField>>,
    _marker: std::marker::PhantomData<&'a ()>,
}

impl<'a> DuhamelMap<'a> {
    fn new(
        data: &StatePair,
        times: Vec<f64>,
        model: NonlinearModel,
        forcing: Option<&'a dyn Forcing>,
    ) -> Self {
        let flow = PairFlow::new(*data.grid());
        let free = free_series(&flow, data, &times);
        let forcing = times.iter().map(|&t| forcing.map(|f| f.at(t))).collect();
        Self { flow, model, times, free, forcing, _marker: std::marker::PhantomData }
    }

    /// Returns `(T v, d/dt T v)` in physical space.
    fn apply(&self, v: &[RealField]) -> Result<Vec<StatePair>> {
        let model = self.model;
        let sources = v
            .iter()
            .zip(&self.forcing)
            .zip(&self.times)
            .map(|((u, f), &t)| {
                let mut w = u.clone();
                if let Some(f) = f {
                    w.add_scaled(1.0, f)?;
                }
                check_finite(&w, t)?;
                Ok(w.map(|x| model.nonlinearity(x)).forward())
            })
            .collect::<Result<Vec<_>>>()?;
        let taus: Vec<f64> = self.times.iter().map(|t| t - self.times[0]).collect();
        let duh = duhamel_series(&self.flow, &taus, &sources);
        self.free
            .iter()
            .zip(duh)
            .map(|((fu, fv), (d, dd))| {
                let mut u = fu.clone();
                u.add_scaled(Complex64::new(-1.0, 0.0), &d)?;
                let mut ut = fv.clone();
                ut.add_scaled(Complex64::new(-1.0, 0.0), &dd)?;
                StatePair::new(u.inverse_real(), ut.inverse_real())
            })
            .collect()
    }
}

fn series_distance(times: &[f64], a: &[RealField], b: &[RealField], q: f64, r: f64) -> Result<f64> {
    let profile = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            let mut d = x.clone();
            d.add_scaled(-1.0, y)?;
            Ok(d.lp_norm(r))
        })
        .collect::<Result<Vec<_>>>()?;
    time_norm(times, &profile, q, (times[0], times[times.len() - 1]))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContractionReport {
    pub iterations: usize,
    /// `||v^{j} - v^{j-1}||_{S(I)}` per iteration.
    pub distances: Vec<f64>,
    /// Ratios of successive distances.
    pub factors: Vec<f64>,
    /// `||K(t)(v0,v1)||_{S(I)}`.
    pub free_norm: f64,
    /// `||F||_{S(I)}`.
    pub forcing_norm: f64,
}

/// Picard iteration of the Duhamel map on `interval` with step `dt`, until
/// successive iterates are within `1e-8` in `S(I)`.
///
/// Smallness is checked, not assumed: the free evolution must satisfy
/// `||K(t)(v0,v1)||_S <= eta/2`, and the measured one-step Lipschitz factor
/// must not exceed 1/2.
pub fn local_solve_contraction(
    data: &StatePair,
    forcing: Option<&dyn Forcing>,
    interval: (f64, f64),
    dt: f64,
    eta: f64,
    model: &NonlinearModel,
) -> Result<(Trajectory, ContractionReport)> {
    if !(eta > 0.0) {
        return Err(Error::InvalidArgument(format!("eta = {eta} must be positive")));
    }
    let times = uniform_times(interval.0, interval.1, dt)?;
    let (q, r) = model.strichartz_exponents();
    let map = DuhamelMap::new(data, times.clone(), *model, forcing);
    let free: Vec<RealField> = map.free.iter().map(|(u, _)| u.inverse_real()).collect();
    let zeros: Vec<RealField> = free.iter().map(|f| RealField::zeros(*f.grid())).collect();
    let free_norm = series_distance(&times, &free, &zeros, q, r)?;
    let forcing_norm = match forcing {
        Some(_) => {
            let fs: Vec<RealField> = map.forcing.iter().map(|f| f.clone().expect("forcing present")).collect();
            series_distance(&times, &fs, &zeros, q, r)?
        }
        None => 0.0,
    };
    if free_norm > 0.5 * eta {
        return Err(Error::DataTooLarge { norm: free_norm, limit: 0.5 * eta });
    }
    let mut current = free;
    let mut states: Vec<StatePair> = Vec::new();
    let mut distances = Vec::new();
    let mut factors = Vec::new();
    for it in 1..=50 {
        let next = map.apply(&current)?;
        let next_u: Vec<RealField> = next.iter().map(|s| s.u.clone()).collect();
        let dist = series_distance(&times, &next_u, &current, q, r)?;
        if let Some(&prev) = distances.last() {
            let f: f64 = if prev > 0.0 { dist / prev } else { 0.0 };
            if distances.len() == 1 && f > 0.5 {
                return Err(Error::IntervalTooLarge { lipschitz: f });
            }
            factors.push(f);
        }
        distances.push(dist);
        current = next_u;
        states = next;
        if dist < 1e-8 {
            let report = ContractionReport { iterations: it, distances, factors, free_norm, forcing_norm };
            return Ok((Trajectory::new(times, states)?, report));
        }
    }
    let _ = states;
    Err(Error::Divergence(format!(
        "Picard iteration did not converge in 50 steps (last distance {:.3e})",
        distances.last().copied().unwrap_or(f64::NAN)
    )))
}

/// `sup_j ||u(t_j) - T(u)(t_j)||_{L^2}` with the Duhamel map built from
/// `traj.states[0]`. Needs spacing at most `1e-2`.
pub fn duhamel_residual(traj: &Trajectory, model: &NonlinearModel, forcing: Option<&dyn Forcing>) -> Result<f64> {
    if traj.times.len() < 2 {
        return Ok(0.0);
    }
    let h = traj.spacing();
    if h > 1e-2 * (1.0 + 1e-12) {
        return Err(Error::TimeStep { dt: h, limit: 1e-2 });
    }
    let map = DuhamelMap::new(&traj.states[0], traj.times.clone(), *model, forcing);
    let us: Vec<RealField> = traj.states.iter().map(|s| s.u.clone()).collect();
    let image = map.apply(&us)?;
    let mut worst: f64 = 0.0;
    for (a, b) in us.iter().zip(&image) {
        let mut d = a.clone();
        d.add_scaled(-1.0, &b.u)?;
        worst = worst.max(d.lp_norm(2.0));
    }
    Ok(worst)
}

/// Exponents of the energy-derivative inequality
/// `|e'| <= C (e^a ||F||_{L^b} + e^{1/2} ||F||_{L^{2p}}^p)`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EnergyExponents {
    /// `a = 1/2 + (p-1)/(p+1)`.
    pub a: f64,
    /// `1/b = (3-p)/(2(p+1))`; `b = inf` at `p = 3`.
    pub b: f64,
    /// `p`, with `||F||_{L^{2p}}` raised to it.
    pub p: f64,
    /// Constant that follows from the pointwise bound
    /// `||a|^{p-1}a - |b|^{p-1}b| <= p 2^{max(p-2,0)} |a-b| (|a|^{p-1} + |a-b|^{p-1})`
    /// and `||v_t||_2 <= (2e)^{1/2}`, `||v||_{p+1}^{p-1} <= ((p+1)e)^{(p-1)/(p+1)}`.
    pub explicit_constant: f64,
}

impl EnergyExponents {
    pub fn new(model: &NonlinearModel) -> Result<Self> {
        let p = model.power;
        if p > 3.0 {
            return Err(Error::InvalidArgument(format!("energy inequality needs p <= 3, got {p}")));
        }
        let a = 0.5 + (p - 1.0) / (p + 1.0);
        let b = if p == 3.0 { f64::INFINITY } else { 2.0 * (p + 1.0) / (3.0 - p) };
        let pointwise = p * 2f64.powf((p - 2.0).max(0.0));
        let explicit_constant =
            model.coupling.abs() * pointwise * 2f64.sqrt() * (p + 1.0).powf((p - 1.0) / (p + 1.0)).max(1.0);
        Ok(Self { a, b, p, explicit_constant })
    }

    /// `e^a ||F||_b + e^{1/2} ||F||_{2p}^p`.
    pub fn rhs(&self, e: f64, f: &RealField) -> f64 {
        let e = e.max(0.0);
        e.powf(self.a) * f.lp_norm(self.b) + e.sqrt() * f.lp_norm(2.0 * self.p).powf(self.p)
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EnergyCheckpoint {
    pub t: f64,
    pub energy: f64,
    /// Central-difference `|e'(t)|`.
    pub derivative: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnergyInequalityReport {
    pub checkpoints: Vec<EnergyCheckpoint>,
    /// `max |e'| / rhs`.
    pub constant: f64,
    pub explicit_constant: f64,
}

/// Checks `|e'(t)| <= C (e^a ||F(t)||_b + e^{1/2} ||F(t)||_{2p}^p)` at up to
/// `checkpoints` interior stored times, with `e'` by central differences.
pub fn energy_derivative_audit(
    traj: &Trajectory,
    model: &NonlinearModel,
    forcing: &dyn Forcing,
    checkpoints: usize,
) -> Result<EnergyInequalityReport> {
    let ex = EnergyExponents::new(model)?;
    let n = traj.times.len();
    if n < 3 || checkpoints == 0 {
        return Err(Error::InsufficientData("need three stored states and one checkpoint".into()));
    }
    let es: Vec<f64> = traj.states.iter().map(|s| energy(s, model)).collect();
    let interior = n - 2;
    let count = checkpoints.min(interior);
    let mut out = Vec::with_capacity(count);
    for c in 0..count {
        let i = 1 + (c * interior) / count;
        let h = traj.times[i + 1] - traj.times[i - 1];
        let derivative = ((es[i + 1] - es[i - 1]) / h).abs();
        let f = forcing.at(traj.times[i]);
        out.push(EnergyCheckpoint { t: traj.times[i], energy: es[i], derivative, rhs: ex.rhs(es[i], &f) });
    }
    let constant = out
        .iter()
        .filter(|c| c.rhs > 0.0)
        .map(|c| c.derivative / c.rhs)
        .fold(0.0, f64::max);
    Ok(EnergyInequalityReport { checkpoints: out, constant, explicit_constant: ex.explicit_constant })
}

/// Cumulative `||F||_{S([t_0,t])}` and `||F||_{L^1([t_0,t], L^b)}` at the sampled times.
pub fn forcing_norm_series(
    times: &[f64],
    forcing: &dyn Forcing,
    model: &NonlinearModel,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let ex = EnergyExponents::new(model)?;
    let (q, r) = model.strichartz_exponents();
    let fs: Vec<RealField> = times.iter().map(|&t| forcing.at(t)).collect();
    let pr: Vec<f64> = fs.iter().map(|f| f.lp_norm(r).powf(q)).collect();
    let pb: Vec<f64> = fs.iter().map(|f| f.lp_norm(ex.b)).collect();
    let mut s = vec![0.0; times.len()];
    let mut l1 = vec![0.0; times.len()];
    let (mut acc_s, mut acc_b) = (0.0, 0.0);
    for i in 1..times.len() {
        let h = 0.5 * (times[i] - times[i - 1]);
        acc_s += h * (pr[i] + pr[i - 1]);
        acc_b += h * (pb[i] + pb[i - 1]);
        s[i] = acc_s.powf(1.0 / q);
        l1[i] = acc_b;
    }
    Ok((s, l1))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GronwallReport {
    pub bound: Vec<f64>,
    /// `max_t e(t) / bound(t)`.
    pub constant: f64,
}

/// Energy bound from the Gronwall argument, with `S = ||F||_{S([0,t])}` and
/// `A = ||F||_{L^1([0,t], L^b)}`:
///
/// - `a = 1` (`p = 3`): `(e(0) + S^{2p}) (1 + A e^A)`;
/// - `a < 1`: `e(0) + S^{2p} + A^{1/(1-a)}`.
///
/// At `d = 4, 5` with the critical power these are the two displayed bounds.
pub fn gronwall_bound(
    energies: &[f64],
    s_norm: &[f64],
    l1_norm: &[f64],
    model: &NonlinearModel,
) -> Result<GronwallReport> {
    let ex = EnergyExponents::new(model)?;
    if energies.is_empty() || energies.len() != s_norm.len() || energies.len() != l1_norm.len() {
        return Err(Error::InvalidArgument("series lengths differ".into()));
    }
    let e0 = energies[0];
    let p = ex.p;
    let bound: Vec<f64> = s_norm
        .iter()
        .zip(l1_norm)
        .map(|(&s, &a)| {
            if ex.a >= 1.0 {
                (e0 + s.powf(2.0 * p)) * (1.0 + a * a.exp())
            } else {
                e0 + s.powf(2.0 * p) + a.powf(1.0 / (1.0 - ex.a))
            }
        })
        .collect();
    let constant = energies
        .iter()
        .zip(&bound)
        .filter(|(_, &b)| b > 0.0)
        .map(|(e, b)| e / b)
        .fold(0.0, f64::max);
    Ok(GronwallReport { bound, constant })
}

/// Greedy left-to-right maximal intervals with `(int_I profile^q)^{1/q} <= eta`.
///
/// `profile[j]` is `||F(t_j)||_{L^r}`. A single sampling step whose mass
/// already exceeds `eta` becomes its own interval.
pub fn partition_by_strichartz(times: &[f64], profile: &[f64], q: f64, eta: f64) -> Result<Vec<(f64, f64)>> {
    if !(eta > 0.0) {
        return Err(Error::InvalidArgument(format!("eta = {eta} must be positive")));
    }
    if times.len() < 2 || times.len() != profile.len() {
        return Err(Error::InvalidInterval("need at least two samples".into()));
    }
    let budget = eta.powf(q);
    let mut out = Vec::new();
    let mut start = 0;
    while start + 1 < times.len() {
        let mut acc = 0.0;
        let mut end = start + 1;
        loop {
            let h = 0.5 * (times[end] - times[end - 1]);
            let piece = h * (profile[end].abs().powf(q) + profile[end - 1].abs().powf(q));
            if acc + piece > budget && end > start + 1 {
                end -= 1;
                break;
            }
            acc += piece;
            if end + 1 == times.len() {
                break;
            }
            end += 1;
        }
        out.push((times[start], times[end]));
        start = end;
    }
    Ok(out)
}

/// `||F(t)||_{L^{2p}}` at the sampled times, the profile whose `L^p_t` norm is `||F||_S`.
pub fn strichartz_profile(times: &[f64], forcing: &dyn Forcing, model: &NonlinearModel) -> Vec<f64> {
    let r = model.strichartz_exponents().1;
    times.iter().map(|&t| forcing.at(t).lp_norm(r)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn energy_of_unit_field_in_d4() {
        let g = TorusGrid::new(4, 4, 8.0 * PI).unwrap();
        let m = NonlinearModel::critical(4).unwrap();
        let s = StatePair::new(RealField::from_fn(g, |_| 1.0), RealField::zeros(g)).unwrap();
        let e = energy(&s, &m);
        assert!((e - 0.75 * g.volume()).abs() < 1e-9 * g.volume());
    }

    #[test]
    fn zero_state_stays_zero() {
        let g = TorusGrid::new(2, 16, 8.0 * PI).unwrap();
        let m = NonlinearModel::new(2, 3.0).unwrap();
        let z = StatePair::zeros(g);
        assert_eq!(step_strang(&z, 0.0, 0.01, &m, None).unwrap(), z);
        assert_eq!(energy(&z, &m), 0.0);
    }

    #[test]
    fn partition_examples() {
        let times: Vec<f64> = (0..=100).map(|i| i as f64 * 0.1).collect();
        let zero = vec![0.0; times.len()];
        assert_eq!(partition_by_strichartz(&times, &zero, 3.0, 0.1).unwrap().len(), 1);
        let flat = vec![1.0; times.len()];
        // ||F||_S^3 = 10, eta^3 = 1: ten intervals
        let parts = partition_by_strichartz(&times, &flat, 3.0, 1.0).unwrap();
        assert!((parts.len() as i64 - 10).abs() <= 1);
        assert_eq!(partition_by_strichartz(&times, &flat, 3.0, 10.0).unwrap().len(), 1);
        assert_eq!(parts[0].0, 0.0);
        assert!((parts.last().unwrap().1 - 10.0).abs() < 1e-12);
    }

    #[test]
    fn exponents_reduce_to_critical_values() {
        let e4 = EnergyExponents::new(&NonlinearModel::critical(4).unwrap()).unwrap();
        assert_eq!(e4.a, 1.0);
        assert!(e4.b.is_infinite());
        let e5 = EnergyExponents::new(&NonlinearModel::critical(5).unwrap()).unwrap();
        assert!((e5.a - 0.9).abs() < 1e-14);
        assert!((e5.b - 10.0).abs() < 1e-12);
        assert!(EnergyExponents::new(&NonlinearModel::new(1, 5.0).unwrap()).is_err());
    }
}
