//! The twelve acceptance criteria. Each check returns a verdict and a short
//! account of the measured numbers; `run` adds the runtime budget.

use std::time::Instant;

use kglab_core::cones::{cone_difference, optimized_threshold, Cone, ConeKind};
use kglab_core::decomposition::{measure_mismatch_decay, modulation_norm, MismatchKind};
use kglab_core::grid::{sobolev_norm, RealField, StatePair, TorusGrid};
use kglab_core::propagator::{
    measure_cell_decay, measure_cell_strichartz, DecayConfig, Frame, HalfWaveFlow, Probe, Sign, StrichartzConfig,
};
use kglab_core::randomization::{verify_khinchin, verify_max_inequality, RandomSeedPlan, SubGaussianFamily};
use kglab_core::solver::{
    duhamel_residual, energy_derivative_audit, energy_series, integrate, local_solve_contraction, FreeForcing,
    NonlinearModel, Trajectory,
};
use kglab_core::wavepackets::{
    audit_bush_decomposition, bush_scaling, bush_threshold, dyadic_cells, greedy_bush_decomposition, group_velocity,
    montecarlo_bush_supnorm, AmplitudeClass, BushMonteCarlo, BushMonteCarloConfig, CubeLattice, Tube,
};
use kglab_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Check = fn() -> Result<(bool, String)>;

pub struct Criterion {
    pub id: u32,
    pub name: &'static str,
    /// Runtime budget in seconds.
    pub budget: f64,
    pub check: Check,
}

pub const CRITERIA: [Criterion; 12] = [
    Criterion { id: 1, name: "threshold reproduction", budget: 1.0, check: thresholds },
    Criterion { id: 2, name: "linear isometry and energy conservation", budget: 120.0, check: conservation },
    Criterion { id: 3, name: "decay exponents", budget: 600.0, check: decay },
    Criterion { id: 4, name: "refined Strichartz exponents", budget: 900.0, check: strichartz },
    Criterion { id: 5, name: "equivalent norm", budget: 300.0, check: equivalent_norm },
    Criterion { id: 6, name: "mismatch decay", budget: 300.0, check: mismatch },
    Criterion { id: 7, name: "Khinchin and maximal inequalities", budget: 300.0, check: khinchin },
    Criterion { id: 8, name: "bush decomposition correctness", budget: 300.0, check: bush_audit },
    Criterion { id: 9, name: "finite speed of propagation", budget: 120.0, check: finite_speed },
    Criterion { id: 10, name: "Duhamel consistency and contraction", budget: 600.0, check: duhamel },
    Criterion { id: 11, name: "Gronwall differential inequality", budget: 600.0, check: gronwall },
    Criterion { id: 12, name: "sub-Gaussian bush scaling", budget: 1200.0, check: bush_growth },
];

pub struct Outcome {
    pub id: u32,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
}

impl Outcome {
    pub fn line(&self) -> String {
        let tag = if self.pass { "PASS" } else { "FAIL" };
        format!("criterion {}: {tag} ({:.1}s) {}", self.id, self.seconds, self.detail)
    }
}

/// Runs one criterion; errors and blown budgets count as failures.
pub fn run(c: &Criterion) -> Outcome {
    let start = Instant::now();
    let res = (c.check)();
    let seconds = start.elapsed().as_secs_f64();
    let (mut pass, mut detail) = match res {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    if seconds > c.budget {
        pass = false;
        detail.push_str(&format!("; runtime {seconds:.1}s over the {:.0}s budget", c.budget));
    }
    Outcome { id: c.id, pass, detail: format!("{}: {detail}", c.name), seconds }
}

/// Sum of `modes` random plane waves with `|xi|_inf <= kmax`, amplitudes
/// damped by `exp(-|xi|^2 / 4)`.
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

/// `amp * exp(-|x - c|^2 / (2 w^2))`.
pub fn bump(grid: TorusGrid, center: &[f64], width: f64, amp: f64) -> RealField {
    let c = center.to_vec();
    RealField::from_fn(grid, move |x| {
        let r2: f64 = x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
        amp * (-r2 / (2.0 * width * width)).exp()
    })
}

fn geomspace(a: f64, b: f64, m: usize) -> Vec<f64> {
    (0..m).map(|i| a * (b / a).powf(i as f64 / (m - 1) as f64)).collect()
}

fn cubic() -> Result<NonlinearModel> {
    NonlinearModel::new(2, 3.0)
}

pub fn thresholds() -> Result<(bool, String)> {
    let four = optimized_threshold(4)?;
    let five = optimized_threshold(5)?;
    let pass = four.s_min.to_string() == "11/12" && five.s_min.to_string() == "15/16";
    Ok((pass, format!("s_min = {} (d = 4), {} (d = 5)", four.s_min, five.s_min)))
}

pub fn conservation() -> Result<(bool, String)> {
    let g = TorusGrid::new(2, 256, 32.0)?;
    let f = random_field(g, 21, 40, 4.0);
    let flow = HalfWaveFlow::new(g, Sign::Plus);
    let n0 = f.lp_norm(2.0);
    let mut l2_drift: f64 = 0.0;
    for t in [0.5, 1.0, 2.0, 5.0, 10.0] {
        let n = flow.apply(&f.to_complex(), t)?.lp_norm(2.0);
        l2_drift = l2_drift.max((n - n0).abs() / n0);
    }
    let u0 = RealField::from_fn(g, |x| (-(x[0] * x[0] + x[1] * x[1]) / 4.0).exp() * x[0].cos());
    let u1 = bump(g, &[2.0, 0.0], 2f64.sqrt(), 0.5);
    let model = cubic()?;
    let traj = integrate(&StatePair::new(u0, u1)?, 0.0, 2e-3, 5000, 50, &model, None)?;
    let es = energy_series(&traj, &model);
    let e0 = es[0].energy;
    let drift = es.iter().map(|r| (r.energy - e0).abs() / e0).fold(0.0, f64::max);
    Ok((l2_drift < 1e-12 && drift < 1e-6, format!("half-wave L2 drift {l2_drift:.2e}, energy drift {drift:.2e}")))
}

pub fn decay() -> Result<(bool, String)> {
    let jk = 65f64.sqrt();
    let wave = measure_cell_decay(&DecayConfig {
        grid: TorusGrid::new(2, 256, 256.0)?,
        k: vec![8, 0],
        r: f64::INFINITY,
        times: geomspace(1.0, jk.powi(3), 60),
        probe: Probe::Isotropic { width: 0.5 },
        frame: Frame::CoMoving,
    })?;
    let a = wave.wave.fit.as_ref().map_or(f64::NAN, |f| f.slope);
    let pass_a = (a - wave.wave.predicted_slope).abs() <= 0.15;
    let origin = measure_cell_decay(&DecayConfig {
        grid: TorusGrid::new(3, 128, 128.0)?,
        k: vec![0, 0, 0],
        r: f64::INFINITY,
        times: geomspace(5.0, 50.0, 24),
        probe: Probe::Isotropic { width: 0.5 },
        frame: Frame::Lab,
    })?;
    let b = origin.overall.as_ref().map_or(f64::NAN, |f| f.slope);
    let pass_b = (-1.6..=-0.85).contains(&b);
    Ok((
        pass_a && pass_b,
        format!(
            "d=2 |k|=8 slope {a:.3} on [{:.1}, {:.1}] (want -0.5 +- 0.15); d=3 k=0 slope {b:.3} on [5, 50] (want [-1.6, -0.85])",
            wave.wave.window.0, wave.wave.window.1
        ),
    ))
}

pub fn strichartz() -> Result<(bool, String)> {
    let configs = [
        StrichartzConfig {
            dim: 2,
            ks: vec![4, 8, 16, 32],
            q: 4.0,
            r: f64::INFINITY,
            horizon_factor: 100.0,
            horizon_power: 1.0,
            extent: 256.0,
            n: 512,
            probe: Probe::Isotropic { width: 1.0 },
            frame: Frame::CoMoving,
            time_samples: 64,
        },
        StrichartzConfig {
            dim: 3,
            ks: vec![4, 8, 16],
            q: 4.0,
            r: f64::INFINITY,
            horizon_factor: 60.0,
            horizon_power: 1.0,
            extent: 128.0,
            n: 128,
            probe: Probe::Isotropic { width: 1.0 },
            frame: Frame::CoMoving,
            time_samples: 80,
        },
        StrichartzConfig {
            dim: 2,
            ks: vec![2, 4, 8],
            q: 4.0,
            r: 4.0,
            horizon_factor: 10.0,
            horizon_power: 3.0,
            extent: 1024.0,
            n: 1024,
            probe: Probe::Knapp { radial: 0.5 },
            frame: Frame::CoMoving,
            time_samples: 150,
        },
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for c in &configs {
        let rep = measure_cell_strichartz(c)?;
        let ok = (rep.exponent() - rep.predicted).abs() <= 0.1;
        pass &= ok;
        parts.push(format!(
            "d={} q={} r={} {:?}: {:.3} vs {:.3}",
            c.dim,
            c.q,
            c.r,
            rep.branch,
            rep.exponent(),
            rep.predicted
        ));
    }
    Ok((pass, parts.join("; ")))
}

pub fn equivalent_norm() -> Result<(bool, String)> {
    let g = TorusGrid::new(2, 64, 26.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let fields: Vec<RealField> = (0..50)
        .map(|i| {
            let modes = rng.random_range(4..40);
            let kmax = rng.random_range(0.5..4.0);
            random_field(g, 1000 + i, modes, kmax)
        })
        .collect();
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for s in [0.0, 0.5, 1.0] {
        let ratios = fields
            .iter()
            .map(|f| Ok(modulation_norm(f, s, 2.0, 2.0, 2.0)? / sobolev_norm(f, s)))
            .collect::<Result<Vec<f64>>>()?;
        let hi = ratios.iter().cloned().fold(0.0, f64::max);
        let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        worst = worst.max(hi / lo);
        parts.push(format!("s={s}: [{lo:.3}, {hi:.3}]"));
    }
    Ok((worst < 10.0, format!("max/min {worst:.3}; {}", parts.join(", "))))
}

pub fn mismatch() -> Result<(bool, String)> {
    let g = TorusGrid::new(2, 128, 26.0)?;
    let probe = random_field(g, 3, 40, 3.0);
    let seps: Vec<i64> = (2..=8).collect();
    let mut pass = true;
    let mut parts = Vec::new();
    for kind in [MismatchKind::Spatial, MismatchKind::Frequency] {
        let t = measure_mismatch_decay(kind, &seps, &probe)?;
        let slope = t.fit.as_ref().map_or(f64::NAN, |f| f.slope);
        pass &= slope <= -4.0;
        parts.push(format!("{kind:?} slope {slope:.3}"));
    }
    Ok((pass, format!("{} over separations 2..8 (want <= -4)", parts.join(", "))))
}

pub fn khinchin() -> Result<(bool, String)> {
    let families =
        [SubGaussianFamily::Rademacher, SubGaussianFamily::StandardGaussian, SubGaussianFamily::UniformSymmetric];
    let mut constant: f64 = 0.0;
    for (i, family) in families.into_iter().enumerate() {
        for (j, len) in [10usize, 1000].into_iter().enumerate() {
            let a: Vec<f64> = (1..=len).map(|m| 1.0 / m as f64).collect();
            let t = verify_khinchin(family, &a, &[1.0, 2.0, 4.0, 8.0], 10_000, (10 * i + j) as u64)?;
            constant = constant.max(t.constant);
        }
    }
    let j = 10_000usize;
    let m = verify_max_inequality(SubGaussianFamily::StandardGaussian, &[j], 10_000, 99)?;
    let reference = (2.0 * (j as f64).ln()).sqrt();
    let gap = (m.rows[0].expected_max / reference - 1.0).abs();
    Ok((
        constant <= 1.0 && gap <= 0.05,
        format!(
            "Khinchin constant {constant:.3} (want <= 1); E max at J=1e4 {:.4} vs sqrt(2 ln J) = {reference:.4}, gap {:.1}% (want <= 5%)",
            m.rows[0].expected_max,
            100.0 * gap
        ),
    ))
}

/// Packets of `P_N` with tubes through a few common points, so that the
/// greedy pass finds bushes.
fn random_packet_tubes(rng: &mut ChaCha8Rng, n: u64, delta: f64, count: usize) -> Result<Vec<Tube>> {
    let nf = n as f64;
    let ks = dyadic_cells(2, n)?;
    let foci: Vec<(f64, [f64; 2])> =
        (0..3).map(|_| (rng.random_range(0.0..nf), [rng.random_range(-nf..nf), rng.random_range(-nf..nf)])).collect();
    Ok((0..count)
        .map(|_| {
            let k = &ks[rng.random_range(0..ks.len())];
            let v = group_velocity(k);
            let l = if rng.random_bool(0.6) {
                let (t, x) = foci[rng.random_range(0..foci.len())];
                vec![(x[0] + t * v[0]).round(), (x[1] + t * v[1]).round()]
            } else {
                vec![rng.random_range(-4.0 * nf..4.0 * nf).round(), rng.random_range(-4.0 * nf..4.0 * nf).round()]
            };
            Tube { l, velocity: v, t0: 0.0, length: nf, radius: nf.powf(2.0 * delta) }
        })
        .collect())
}

pub fn bush_audit() -> Result<(bool, String)> {
    let delta = 0.01;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut violations, mut bushes, mut cubes) = (0usize, 0usize, 0usize);
    let mut first = None;
    for trial in 0..100 {
        let n = [4u64, 8, 16][trial % 3];
        let count = rng.random_range(20..120);
        let tubes = random_packet_tubes(&mut rng, n, delta, count)?;
        // Even trials use the scale's own threshold, odd ones a small one.
        let mu = if trial % 2 == 0 { bush_threshold(n as f64, 2, count) } else { rng.random_range(2..8) };
        let class = AmplitudeClass { m: 0, members: (0..count).collect(), mu };
        let lattice = CubeLattice::new(n as f64, delta);
        let dec = greedy_bush_decomposition(&class, &tubes, &lattice)?;
        let audit = audit_bush_decomposition(&class, &tubes, &lattice, &dec);
        violations += audit.violations.len();
        bushes += dec.bushes.len();
        cubes += audit.cubes_examined;
        if first.is_none() {
            first = audit.violations.first().cloned();
        }
    }
    let mut detail = format!("100 packet sets, {bushes} bushes, {cubes} cube checks, {violations} violations");
    if let Some(v) = first {
        detail.push_str(&format!(" (first: {v})"));
    }
    Ok((violations == 0, detail))
}

pub fn finite_speed() -> Result<(bool, String)> {
    let g = TorusGrid::new(2, 128, 64.0)?;
    let cone = Cone::new(0.0, vec![0.0, 0.0], 4, ConeKind::Standard)?;
    let base = cone.slice_mask(&g, 0.0);
    let u0 = bump(g, &[0.0, 0.0], 2.0, 0.8);
    let u1 = bump(g, &[1.0, -1.0], 1.5, 0.4);
    let outside = |f: RealField| {
        let mut f = f;
        for (v, m) in f.values_mut().iter_mut().zip(&base) {
            if *m {
                *v = 0.0;
            }
        }
        f
    };
    let mut v0 = u0.clone();
    v0.add_scaled(1.0, &outside(bump(g, &[18.0, 3.0], 1.5, 0.7)))?;
    let mut v1 = u1.clone();
    v1.add_scaled(1.0, &outside(bump(g, &[-4.0, 18.0], 1.5, -0.5)))?;
    let model = cubic()?;
    let ta = integrate(&StatePair::new(u0, u1)?, 0.0, 1e-2, 400, 10, &model, None)?;
    let tb = integrate(&StatePair::new(v0, v1)?, 0.0, 1e-2, 400, 10, &model, None)?;
    let inside = cone_difference(&ta, &tb, &cone)?;
    let wide = cone_difference(&ta, &tb, &cone.widened())?;
    Ok((inside < 1e-6, format!("difference {inside:.2e} in K^4 (want < 1e-6), {wide:.2e} in the widened cone")))
}

fn pair_difference(a: &Trajectory, b: &Trajectory) -> Result<Trajectory> {
    let states = a
        .states
        .iter()
        .zip(&b.states)
        .map(|(x, y)| {
            let mut d = x.u.clone();
            d.add_scaled(-1.0, &y.u)?;
            StatePair::new(d, RealField::zeros(*x.u.grid()))
        })
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(a.times.clone(), states)
}

pub fn duhamel() -> Result<(bool, String)> {
    let g = TorusGrid::new(2, 64, 26.0)?;
    let model = cubic()?;
    let data = StatePair::new(bump(g, &[0.0, 0.0], 1.5, 0.5), bump(g, &[1.0, 0.0], 1.5, 0.25))?;
    let dt = 1e-3;
    let (fixed, rep) = local_solve_contraction(&data, None, (0.0, 1.0), dt, 10.0, &model)?;
    let split = integrate(&data, 0.0, dt, 1000, 1, &model, None)?;
    let dist = pair_difference(&fixed, &split)?.strichartz_norm(&model)?;
    let active: Vec<f64> =
        rep.factors.iter().zip(&rep.distances[1..]).filter(|(_, d)| **d > 1e-12).map(|(f, _)| *f).collect();
    let hi = active.iter().cloned().fold(0.0, f64::max);
    let lo = active.iter().cloned().fold(f64::INFINITY, f64::min);
    let geometric = !active.is_empty() && hi <= 0.5 && hi / lo <= 10.0;
    let coarse = integrate(&data, 0.0, 1e-2, 100, 1, &model, None)?;
    let fine = integrate(&data, 0.0, 5e-3, 200, 1, &model, None)?;
    let halving = duhamel_residual(&coarse, &model, None)? / duhamel_residual(&fine, &model, None)?;
    Ok((
        dist < 1e-3 && geometric && halving >= 3.5,
        format!(
            "S-distance {dist:.2e}, contraction factors in [{lo:.3}, {hi:.3}] over {} iterations, residual ratio {halving:.2} (want >= 3.5)",
            rep.iterations
        ),
    ))
}

pub fn gronwall() -> Result<(bool, String)> {
    let g = TorusGrid::new(2, 64, 26.0)?;
    let model = cubic()?;
    let data = StatePair::new(bump(g, &[0.0, 0.0], 1.5, 0.5), bump(g, &[1.0, 0.0], 1.5, 0.25))?;
    let mut constant: f64 = 0.0;
    let mut explicit = f64::INFINITY;
    let mut checkpoints = 0;
    for i in 0..10 {
        let f = FreeForcing::new(&StatePair::new(random_field(g, 300 + i, 8, 2.0), random_field(g, 400 + i, 8, 2.0))?)
            .scaled(0.3);
        let traj = integrate(&data, 0.0, 2e-3, 1000, 5, &model, Some(&f))?;
        let rep = energy_derivative_audit(&traj, &model, &f, 100)?;
        constant = constant.max(rep.constant);
        explicit = explicit.min(rep.explicit_constant);
        checkpoints += rep.checkpoints.len();
    }
    Ok((
        constant > 0.0 && constant <= explicit && checkpoints == 1000,
        format!("fitted constant {constant:.3} over {checkpoints} checkpoints, explicit constant {explicit:.3}"),
    ))
}

pub fn bush_growth() -> Result<(bool, String)> {
    let delta = 0.01;
    let runs = [(4u64, 28.0, 64usize), (8, 28.0, 128), (16, 40.0, 256)]
        .into_iter()
        .map(|(n, extent, points)| {
            let g = TorusGrid::new(2, points, extent)?;
            let f = bump(g, &[0.0, 0.0], 0.08, 1.0);
            let cfg = BushMonteCarloConfig {
                n,
                delta,
                draws: 500,
                seed: 7,
                c: 4.0,
                cell_radius: 2,
                top_classes: 1,
                max_bushes: 2,
                time_samples: 2 * n as usize + 1,
            };
            let y = RandomSeedPlan::new(7, SubGaussianFamily::Rademacher);
            let x = RandomSeedPlan::new(8, SubGaussianFamily::Rademacher);
            montecarlo_bush_supnorm(&f, &RealField::zeros(g), &[0.0, 0.0], &y, &x, &cfg)
        })
        .collect::<Result<Vec<BushMonteCarlo>>>()?;
    let s = bush_scaling(&runs, 2, delta)?;
    let off = s.off_tube_fit.as_ref().map_or(f64::NAN, |f| f.slope);
    let psi: Vec<String> = s.psi.iter().map(|p| format!("{p:.3}")).collect();
    Ok((
        s.worst_ratio <= 1.1 && off <= -2.0,
        format!(
            "psi = [{}] for N = {:?}, C = {:.3}, worst psi / (C N^(2 delta)) = {:.3} (want <= 1.1); off-tube slope {off:.3} (want <= -2)",
            psi.join(", "),
            s.ns,
            s.constant,
            s.worst_ratio
        ),
    ))
}
