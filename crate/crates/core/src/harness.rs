//! Experiment orchestration: configuration files, run manifests and output
//! files.
//!
//! A config is a TOML document with a top-level `kind`, optional `seed`,
//! `[grid]` and `[model]` tables, and one table per experiment kind. Every
//! field has a default, so `kind = "thresholds"` alone is a valid config.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::cones::{flux_audit, localized_solution, optimized_threshold, regularity_threshold, Cone, ConeKind, Q};
use crate::error::{Error, Result};
use crate::grid::{RealField, StatePair, TorusGrid};
use crate::propagator::{measure_cell_decay, measure_cell_strichartz, DecayConfig, Frame, Probe, StrichartzConfig};
use crate::randomization::{
    randomization_moments, tail_statistics, verify_khinchin, verify_max_inequality, RandomSeedPlan, SubGaussianFamily,
};
use crate::solver::{energy_series, integrate, FreeForcing, NonlinearModel};
use crate::wavepackets::{montecarlo_bush_supnorm, trilinear_cone_integral, BushMonteCarloConfig};

pub use crate::fit::{loglog_fit, RegressionResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Decay,
    Strichartz,
    Khinchin,
    Maxineq,
    Randomize,
    Solve,
    ConeAudit,
    Bush,
    Thresholds,
    Trilinear,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 10] = [
        Self::Decay,
        Self::Strichartz,
        Self::Khinchin,
        Self::Maxineq,
        Self::Randomize,
        Self::Solve,
        Self::ConeAudit,
        Self::Bush,
        Self::Thresholds,
        Self::Trilinear,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Decay => "decay",
            Self::Strichartz => "strichartz",
            Self::Khinchin => "khinchin",
            Self::Maxineq => "maxineq",
            Self::Randomize => "randomize",
            Self::Solve => "solve",
            Self::ConeAudit => "cone-audit",
            Self::Bush => "bush",
            Self::Thresholds => "thresholds",
            Self::Trilinear => "trilinear",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// Periodic grid. Defaults: `dim = 2`, `n = 128`, `extent = 64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub n: usize,
    pub extent: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { dim: 2, n: 128, extent: 64.0 }
    }
}

/// Nonlinearity `|u|^{p-1} u`. Default `power = 3`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub power: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self { power: 3.0 }
    }
}

/// Defaults: `k = [8, 0]`, `r = inf`, times geometric on `[1, 128]` (48
/// samples), isotropic probe of width 0.5, co-moving frame, tolerance 0.15.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecayParams {
    pub k: Vec<i64>,
    pub r: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub samples: usize,
    pub probe: Probe,
    pub frame: Frame,
    /// Allowed distance between fitted and predicted slope.
    pub tolerance: f64,
}

impl Default for DecayParams {
    fn default() -> Self {
        Self {
            k: vec![8, 0],
            r: f64::INFINITY,
            t_min: 1.0,
            t_max: 128.0,
            samples: 48,
            probe: Probe::Isotropic { width: 0.5 },
            frame: Frame::CoMoving,
            tolerance: 0.15,
        }
    }
}

/// Defaults: `ks = [2, 4, 8]`, `q = 4`, `r = inf`, horizon `10 <k>`,
/// isotropic probe of width 1, co-moving frame, 64 time samples,
/// tolerance 0.1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrichartzParams {
    pub ks: Vec<i64>,
    pub q: f64,
    pub r: f64,
    pub horizon_factor: f64,
    pub horizon_power: f64,
    pub probe: Probe,
    pub frame: Frame,
    pub time_samples: usize,
    pub tolerance: f64,
}

impl Default for StrichartzParams {
    fn default() -> Self {
        Self {
            ks: vec![2, 4, 8],
            q: 4.0,
            r: f64::INFINITY,
            horizon_factor: 10.0,
            horizon_power: 1.0,
            probe: Probe::Isotropic { width: 1.0 },
            frame: Frame::CoMoving,
            time_samples: 64,
            tolerance: 0.1,
        }
    }
}

/// Coefficients `a_j = 1/j`, `j = 1..=J`. Defaults: Rademacher, `J = 10`,
/// `p in {1, 2, 4, 8}`, 10000 draws, pass when the constant is at most 1.05.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KhinchinParams {
    pub family: SubGaussianFamily,
    pub j: usize,
    pub p_grid: Vec<f64>,
    pub draws: usize,
    pub max_constant: f64,
}

impl Default for KhinchinParams {
    fn default() -> Self {
        Self {
            family: SubGaussianFamily::Rademacher,
            j: 10,
            p_grid: vec![1.0, 2.0, 4.0, 8.0],
            draws: 10_000,
            max_constant: 1.05,
        }
    }
}

/// Defaults: Gaussian, `J in {10, 100, 1000, 10000}`, 1000 draws, pass when
/// the ratio spread is at most 2.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaxineqParams {
    pub family: SubGaussianFamily,
    pub j_grid: Vec<usize>,
    pub draws: usize,
    pub max_spread: f64,
}

impl Default for MaxineqParams {
    fn default() -> Self {
        Self {
            family: SubGaussianFamily::StandardGaussian,
            j_grid: vec![10, 100, 1000, 10_000],
            draws: 1000,
            max_spread: 2.0,
        }
    }
}

/// Gaussian datum of the given width at the origin. Defaults: width 2,
/// `kmax = 4`, 200 draws, Rademacher weights, isometry tolerance 0.1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomizeParams {
    pub width: f64,
    pub kmax: i64,
    pub draws: usize,
    pub family: SubGaussianFamily,
    pub tolerance: f64,
}

impl Default for RandomizeParams {
    fn default() -> Self {
        Self { width: 2.0, kmax: 4, draws: 200, family: SubGaussianFamily::Rademacher, tolerance: 0.1 }
    }
}

/// Gaussian `u(0)`, `u_t(0) = 0`. Defaults: amplitude 0.5, width 1.5,
/// `dt = 2e-3`, 5000 steps, stride 50, relative drift tolerance 1e-6.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveParams {
    pub amplitude: f64,
    pub width: f64,
    pub dt: f64,
    pub steps: usize,
    pub stride: usize,
    pub tolerance: f64,
}

impl Default for SolveParams {
    fn default() -> Self {
        Self { amplitude: 0.5, width: 1.5, dt: 2e-3, steps: 5000, stride: 50, tolerance: 1e-6 }
    }
}

/// Unforced flux audit on `K^N_{0,0}`. Defaults: `n = 4`, `delta = 0.01`,
/// amplitude 0.2, width 1.5, `dt = 1e-2`, stride 5, pass when the energy
/// ratio is at most `1 + 1e-3`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConeAuditParams {
    pub n: u64,
    pub delta: f64,
    pub amplitude: f64,
    pub width: f64,
    pub dt: f64,
    pub stride: usize,
    pub max_ratio: f64,
}

impl Default for ConeAuditParams {
    fn default() -> Self {
        Self { n: 4, delta: 0.01, amplitude: 0.2, width: 1.5, dt: 1e-2, stride: 5, max_ratio: 1.0 + 1e-3 }
    }
}

/// Bush Monte Carlo on `K^N_{0,0}` with datum `exp(-|x|^2/(2 width^2))`,
/// `g = 0`. Defaults: `n = 4`, `delta = 0.01`, 100 draws, `c = 4`,
/// cell radius 2, one class, two bushes, width 0.08, `2N + 1` time samples
/// when `time_samples = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BushParams {
    pub n: u64,
    pub delta: f64,
    pub draws: usize,
    pub c: f64,
    pub cell_radius: i64,
    pub top_classes: usize,
    pub max_bushes: usize,
    pub time_samples: usize,
    pub width: f64,
}

impl Default for BushParams {
    fn default() -> Self {
        Self {
            n: 4,
            delta: 0.01,
            draws: 100,
            c: 4.0,
            cell_radius: 2,
            top_classes: 1,
            max_bushes: 2,
            time_samples: 0,
            width: 0.08,
        }
    }
}

/// Rationals are written `"a/b"`. Defaults: `dims = [4, 5]`; when all of
/// `delta`, `theta`, `beta` are given the general threshold is reported too.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdParams {
    pub dims: Vec<i64>,
    pub delta: Option<String>,
    pub theta: Option<String>,
    pub beta: Option<String>,
}

impl Default for ThresholdParams {
    fn default() -> Self {
        Self { dims: vec![4, 5], delta: None, theta: None, beta: None }
    }
}

/// Free waves `u1`, `u2` from Gaussian data and forcing `scale * e^{it<grad>}`
/// of a third Gaussian. Defaults: `n = 4`, `delta = 0.01`, `s = 0.95`,
/// amplitude 0.5, width 1.5, forcing scale 0.1, `dt = 5e-2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrilinearParams {
    pub n: u64,
    pub delta: f64,
    pub s: f64,
    pub amplitude: f64,
    pub width: f64,
    pub forcing_scale: f64,
    pub dt: f64,
}

impl Default for TrilinearParams {
    fn default() -> Self {
        Self { n: 4, delta: 0.01, s: 0.95, amplitude: 0.5, width: 1.5, forcing_scale: 0.1, dt: 5e-2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Base seed. Default 0; the CLI flag overrides it.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub decay: DecayParams,
    #[serde(default)]
    pub strichartz: StrichartzParams,
    #[serde(default)]
    pub khinchin: KhinchinParams,
    #[serde(default)]
    pub maxineq: MaxineqParams,
    #[serde(default)]
    pub randomize: RandomizeParams,
    #[serde(default)]
    pub solve: SolveParams,
    #[serde(default, rename = "cone-audit")]
    pub cone_audit: ConeAuditParams,
    #[serde(default)]
    pub bush: BushParams,
    #[serde(default)]
    pub thresholds: ThresholdParams,
    #[serde(default)]
    pub trilinear: TrilinearParams,
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        Self {
            kind,
            seed: 0,
            grid: GridSpec::default(),
            model: ModelSpec::default(),
            decay: DecayParams::default(),
            strichartz: StrichartzParams::default(),
            khinchin: KhinchinParams::default(),
            maxineq: MaxineqParams::default(),
            randomize: RandomizeParams::default(),
            solve: SolveParams::default(),
            cone_audit: ConeAuditParams::default(),
            bush: BushParams::default(),
            thresholds: ThresholdParams::default(),
            trilinear: TrilinearParams::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    /// SHA-256 of the canonical JSON form (seed included).
    pub fn hash(&self) -> String {
        let canon = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(&canon))
    }

    /// Checks the fields used by `kind`. All problems are collected, one
    /// `field: message` entry each.
    pub fn validate(&self) -> Result<()> {
        let mut errs: Vec<String> = Vec::new();
        if let Err(e) = TorusGrid::new(self.grid.dim, self.grid.n, self.grid.extent) {
            errs.push(format!("grid: {e}"));
        }
        let half = self.grid.extent / 2.0;
        let horizon = |errs: &mut Vec<String>, field: &str, t: f64| {
            if !(t.is_finite() && t > 0.0) {
                errs.push(format!("{field}: horizon {t} must be positive"));
            } else if t > half {
                errs.push(format!("{field}: horizon {t} exceeds L/2 = {half}; the flow would wrap around the torus"));
            }
        };
        match self.kind {
            ExperimentKind::Decay => {
                let p = &self.decay;
                if p.frame == Frame::Lab {
                    horizon(&mut errs, "decay.t_max", p.t_max);
                }
                if p.k.len() != self.grid.dim {
                    errs.push(format!("decay.k: {} components for a {}-dimensional grid", p.k.len(), self.grid.dim));
                }
                if !(p.t_min > 0.0 && p.t_min < p.t_max) {
                    errs.push(format!("decay.t_min: need 0 < t_min < t_max, got {} and {}", p.t_min, p.t_max));
                }
                if p.samples < 3 {
                    errs.push("decay.samples: need at least 3".into());
                }
            }
            ExperimentKind::Strichartz => {
                let p = &self.strichartz;
                if p.frame == Frame::Lab {
                    let kmax = p.ks.iter().map(|k| k.abs()).max().unwrap_or(0) as f64;
                    horizon(&mut errs, "strichartz.horizon_factor", p.horizon_factor * (1.0 + kmax * kmax).sqrt().powf(p.horizon_power));
                }
                if p.ks.len() < 3 {
                    errs.push("strichartz.ks: need at least three cells".into());
                }
            }
            ExperimentKind::Khinchin => {
                if self.khinchin.j == 0 {
                    errs.push("khinchin.j: must be positive".into());
                }
                if self.khinchin.draws == 0 {
                    errs.push("khinchin.draws: must be positive".into());
                }
            }
            ExperimentKind::Maxineq => {
                if self.maxineq.draws == 0 {
                    errs.push("maxineq.draws: must be positive".into());
                }
            }
            ExperimentKind::Randomize => {
                if self.grid.extent.fract() != 0.0 {
                    errs.push("grid.extent: spatial windows need an integer extent".into());
                }
                if self.randomize.draws == 0 {
                    errs.push("randomize.draws: must be positive".into());
                }
            }
            ExperimentKind::Solve => {
                let p = &self.solve;
                horizon(&mut errs, "solve.steps", p.dt * p.steps as f64);
                if p.stride == 0 || p.stride > p.steps {
                    errs.push(format!("solve.stride: {} not in 1..={}", p.stride, p.steps));
                }
            }
            ExperimentKind::ConeAudit => {
                let p = &self.cone_audit;
                horizon(&mut errs, "cone-audit.n", p.n as f64);
                if !p.n.is_power_of_two() {
                    errs.push(format!("cone-audit.n: {} is not dyadic", p.n));
                }
                if p.stride == 0 {
                    errs.push("cone-audit.stride: must be positive".into());
                }
            }
            ExperimentKind::Bush => {
                let p = &self.bush;
                horizon(&mut errs, "bush.n", p.n as f64);
                if !p.n.is_power_of_two() {
                    errs.push(format!("bush.n: {} is not dyadic", p.n));
                }
                if self.grid.extent.fract() != 0.0 {
                    errs.push("grid.extent: spatial windows need an integer extent".into());
                }
            }
            ExperimentKind::Thresholds => {
                let p = &self.thresholds;
                for (name, v) in [("delta", &p.delta), ("theta", &p.theta), ("beta", &p.beta)] {
                    if let Some(s) = v {
                        if let Err(e) = parse_ratio(s) {
                            errs.push(format!("thresholds.{name}: {e}"));
                        }
                    }
                }
                if let Some(d) = p.dims.iter().find(|d| !(4..=5).contains(*d)) {
                    errs.push(format!("thresholds.dims: {d} outside 4..=5"));
                }
            }
            ExperimentKind::Trilinear => {
                let p = &self.trilinear;
                horizon(&mut errs, "trilinear.n", p.n as f64);
                if !p.n.is_power_of_two() {
                    errs.push(format!("trilinear.n: {} is not dyadic", p.n));
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs.join("; ")))
        }
    }
}

fn parse_ratio(s: &str) -> std::result::Result<Q, String> {
    let (a, b) = s.split_once('/').unwrap_or((s, "1"));
    let a: i64 = a.trim().parse().map_err(|_| format!("bad numerator in {s:?}"))?;
    let b: i64 = b.trim().parse().map_err(|_| format!("bad denominator in {s:?}"))?;
    if b == 0 {
        return Err(format!("zero denominator in {s:?}"));
    }
    Ok(Q::new(a, b))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn ratio_str(q: &Q) -> String {
    format!("{}/{}", q.numer(), q.denom())
}

/// Formats floats with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

struct Sig17;

impl serde_json::ser::Formatter for Sig17 {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        w.write_all(fmt_f64(v).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        self.write_f64(w, v as f64)
    }
}

/// JSON with every float printed to 17 significant digits.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Sig17);
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("json is utf-8"))
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

/// A CSV table whose columns carry a description for the schema sidecar.
#[derive(Clone, Debug)]
pub struct Table {
    pub name: String,
    pub columns: Vec<(&'static str, &'static str)>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[(&'static str, &'static str)]) -> Self {
        Self { name: name.into(), columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.iter().map(|c| c.0).collect::<Vec<_>>().join(",");
        s.push('\n');
        for r in &self.rows {
            let line: Vec<String> = r
                .iter()
                .map(|c| match c {
                    Cell::Int(i) => i.to_string(),
                    Cell::Float(v) => fmt_f64(*v),
                    Cell::Text(t) => t.clone(),
                })
                .collect();
            s.push_str(&line.join(","));
            s.push('\n');
        }
        s
    }

    pub fn schema(&self) -> serde_json::Value {
        json!({
            "file": format!("{}.csv", self.name),
            "float_format": "17 significant digits, scientific",
            "columns": self.columns.iter().map(|(n, d)| json!({"name": n, "description": d})).collect::<Vec<_>>(),
        })
    }
}

/// Outcome of one experiment before it is written to disk.
#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub summary: serde_json::Value,
    pub tables: Vec<Table>,
    /// Extra JSON documents, written as `<name>.json`.
    pub documents: Vec<(String, serde_json::Value)>,
    /// `None` for experiments without a pass rule.
    pub verdict: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub kind: ExperimentKind,
    pub config_hash: String,
    pub code_version: String,
    pub seed: u64,
    /// Seconds since the Unix epoch.
    pub started: f64,
    pub finished: f64,
    pub outputs: Vec<OutputFile>,
    pub verdict: Option<bool>,
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

fn gaussian(grid: TorusGrid, center: &[f64], width: f64, amp: f64) -> RealField {
    let c = center.to_vec();
    RealField::from_fn(grid, move |x| {
        let r2: f64 = x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
        amp * (-r2 / (2.0 * width * width)).exp()
    })
}

fn context(what: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::InvalidArgument(m) => Error::InvalidArgument(format!("{what}: {m}")),
        Error::InsufficientData(m) => Error::InsufficientData(format!("{what}: {m}")),
        other => other,
    }
}

/// Runs the experiment in memory.
pub fn compute(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let grid = TorusGrid::new(cfg.grid.dim, cfg.grid.n, cfg.grid.extent)?;
    let model = NonlinearModel::new(cfg.grid.dim, cfg.model.power)?;
    let mut tables = Vec::new();
    let mut documents = Vec::new();
    let (summary, verdict) = match cfg.kind {
        ExperimentKind::Decay => {
            let p = &cfg.decay;
            let m = p.samples;
            let times: Vec<f64> =
                (0..m).map(|i| p.t_min * (p.t_max / p.t_min).powf(i as f64 / (m - 1) as f64)).collect();
            let rep = measure_cell_decay(&DecayConfig {
                grid,
                k: p.k.clone(),
                r: p.r,
                times,
                probe: p.probe,
                frame: p.frame,
            })
            .map_err(context("decay"))?;
            let mut t = Table::new(
                "decay",
                &[
                    ("t", "time"),
                    ("ratio", "||e^{it<grad>} P_k f||_{L^r} / ||f||_{L^{r'}}"),
                    ("predicted", "dispersive bound min{1, <k>^{(d-1)/2} t^{-(d-1)/2}, <k>^{(d+2)/2} t^{-d/2}}^{1-2/r}"),
                ],
            );
            for r in &rep.rows {
                t.push(vec![r.t.into(), r.ratio.into(), r.predicted.into()]);
            }
            tables.push(t);
            let window = if rep.wave.skipped() { &rep.klein_gordon } else { &rep.wave };
            let slope = window.fit.as_ref().map(|f| f.slope);
            let verdict = slope.map(|v| (v - window.predicted_slope).abs() <= p.tolerance);
            let summary = json!({
                "slope": slope,
                "predicted": window.predicted_slope,
                "window": window.window,
                "tolerance_pass": verdict,
                "report": rep,
            });
            (summary, verdict)
        }
        ExperimentKind::Strichartz => {
            let p = &cfg.strichartz;
            let rep = measure_cell_strichartz(&StrichartzConfig {
                dim: grid.dim(),
                ks: p.ks.clone(),
                q: p.q,
                r: p.r,
                horizon_factor: p.horizon_factor,
                horizon_power: p.horizon_power,
                extent: grid.extent(),
                n: grid.n(),
                probe: p.probe,
                frame: p.frame,
                time_samples: p.time_samples,
            })
            .map_err(context("strichartz"))?;
            let mut t = Table::new(
                "strichartz",
                &[
                    ("k", "cell index along the first axis"),
                    ("bracket", "<k>"),
                    ("norm", "||e^{it<grad>} P_k f||_{L^q_t L^r_x} with ||P_k f||_{L^2} = 1"),
                    ("predicted", "first norm scaled by (<k> / <k_1>)^e with the predicted exponent e"),
                    ("saturation", "||u(T)||_{L^r} / max_t ||u(t)||_{L^r}"),
                ],
            );
            let (n0, b0) = (rep.rows[0].norm, rep.rows[0].bracket);
            for r in &rep.rows {
                let predicted = n0 * (r.bracket / b0).powf(rep.predicted);
                t.push(vec![r.k.into(), r.bracket.into(), r.norm.into(), predicted.into(), r.saturation.into()]);
            }
            tables.push(t);
            let pass = (rep.exponent() - rep.predicted).abs() <= p.tolerance;
            let (lo, hi) = (b0, rep.rows[rep.rows.len() - 1].bracket);
            let summary = json!({
                "slope": rep.exponent(),
                "predicted": rep.predicted,
                "window": [lo, hi],
                "tolerance_pass": pass,
                "report": rep,
            });
            (summary, Some(pass))
        }
        ExperimentKind::Khinchin => {
            let p = &cfg.khinchin;
            let a: Vec<f64> = (1..=p.j).map(|j| 1.0 / j as f64).collect();
            let rep = verify_khinchin(p.family, &a, &p.p_grid, p.draws, cfg.seed).map_err(context("khinchin"))?;
            let mut t = Table::new(
                "khinchin",
                &[
                    ("p", "moment order"),
                    ("empirical", "(mean |sum_j a_j X_j|^p)^{1/p}"),
                    ("bound", "p^{1/2} ||a||_2"),
                ],
            );
            for r in &rep.rows {
                t.push(vec![r.p.into(), r.empirical.into(), r.bound.into()]);
            }
            tables.push(t);
            (serde_json::to_value(&rep)?, Some(rep.constant <= p.max_constant))
        }
        ExperimentKind::Maxineq => {
            let p = &cfg.maxineq;
            let rep = verify_max_inequality(p.family, &p.j_grid, p.draws, cfg.seed).map_err(context("maxineq"))?;
            let mut t = Table::new(
                "maxineq",
                &[
                    ("j", "number of independent draws J"),
                    ("expected_max", "empirical E max_{j <= J} |X_j|"),
                    ("bound", "log <J>"),
                    ("gaussian_reference", "sqrt(2 ln J)"),
                ],
            );
            for r in &rep.rows {
                let jf = r.j as f64;
                t.push(vec![r.j.into(), r.expected_max.into(), r.bound.into(), (2.0 * jf.ln()).sqrt().into()]);
            }
            tables.push(t);
            (serde_json::to_value(&rep)?, Some(rep.spread <= p.max_spread))
        }
        ExperimentKind::Randomize => {
            let p = &cfg.randomize;
            let f = gaussian(grid, &vec![0.0; grid.dim()], p.width, 1.0);
            let plan = RandomSeedPlan::new(cfg.seed, p.family);
            let rep = randomization_moments(&f, &plan, p.kmax, p.draws).map_err(context("randomize"))?;
            let pass = rep.mean_norm <= rep.mean_tolerance() && (rep.isometry_ratio() - 1.0).abs() <= p.tolerance;
            let summary = json!({
                "report": rep,
                "mean_tolerance": rep.mean_tolerance(),
                "isometry_ratio": rep.isometry_ratio(),
            });
            (summary, Some(pass))
        }
        ExperimentKind::Solve => {
            let p = &cfg.solve;
            let data = StatePair::new(gaussian(grid, &vec![0.0; grid.dim()], p.width, p.amplitude), RealField::zeros(grid))?;
            let traj = integrate(&data, 0.0, p.dt, p.steps, p.stride, &model, None).map_err(context("solve"))?;
            let es = energy_series(&traj, &model);
            let e0 = es[0].energy;
            let mut t = Table::new(
                "solve",
                &[
                    ("t", "time"),
                    ("energy", "E(u, u_t)"),
                    ("relative_drift", "|E(t) - E(0)| / E(0)"),
                ],
            );
            let mut worst = 0f64;
            for r in &es {
                let drift = (r.energy - e0).abs() / e0;
                worst = worst.max(drift);
                t.push(vec![r.t.into(), r.energy.into(), drift.into()]);
            }
            tables.push(t);
            let summary = json!({
                "initial_energy": e0,
                "max_relative_drift": worst,
                "strichartz_norm": traj.strichartz_norm(&model)?,
            });
            (summary, Some(worst <= p.tolerance))
        }
        ExperimentKind::ConeAudit => {
            let p = &cfg.cone_audit;
            let x0 = vec![0.0; grid.dim()];
            let cone = Cone::new(0.0, x0.clone(), p.n, ConeKind::Standard)?;
            let data = StatePair::new(gaussian(grid, &x0, p.width, p.amplitude), RealField::zeros(grid))?;
            let w = localized_solution(&data, None, &cone, p.dt, p.stride, &model).map_err(context("cone-audit"))?;
            let rep = flux_audit(&w, &data, None, &cone, p.delta, &model).map_err(context("cone-audit"))?;
            let pass = rep.energy_ratio <= p.max_ratio;
            (serde_json::to_value(&rep)?, Some(pass))
        }
        ExperimentKind::Bush => {
            let p = &cfg.bush;
            let f = gaussian(grid, &vec![0.0; grid.dim()], p.width, 1.0);
            let g = RealField::zeros(grid);
            let mc_cfg = BushMonteCarloConfig {
                n: p.n,
                delta: p.delta,
                draws: p.draws,
                seed: cfg.seed,
                c: p.c,
                cell_radius: p.cell_radius,
                top_classes: p.top_classes,
                max_bushes: p.max_bushes,
                time_samples: if p.time_samples == 0 { 2 * p.n as usize + 1 } else { p.time_samples },
            };
            let y_plan = RandomSeedPlan::new(cfg.seed, SubGaussianFamily::Rademacher);
            let x_plan = RandomSeedPlan::new(cfg.seed.wrapping_add(1), SubGaussianFamily::Rademacher);
            let x0 = vec![0.0; grid.dim()];
            let mc = montecarlo_bush_supnorm(&f, &g, &x0, &y_plan, &x_plan, &mc_cfg).map_err(context("bush"))?;
            let decomposition: Vec<serde_json::Value> = mc
                .classes
                .iter()
                .map(|c| {
                    json!({
                        "m": c.m,
                        "mu": c.mu,
                        "bushes": c.bushes.iter().map(|b| json!({"anchor": b.anchor, "members": b.members})).collect::<Vec<_>>(),
                        "remainder_count": c.remainder.len(),
                    })
                })
                .collect();
            documents.push(("bush_decomposition".to_string(), serde_json::Value::Array(decomposition)));
            let mut s = Table::new(
                "bush_samples",
                &[
                    ("statistic", "bush, remainder or off_tube"),
                    ("index", "sample index within the statistic"),
                    ("value", "normalized sup norm of the sample"),
                ],
            );
            for (name, xs) in
                [("bush", &mc.bush_samples), ("remainder", &mc.remainder_samples), ("off_tube", &mc.off_tube_samples)]
            {
                for (i, v) in xs.iter().enumerate() {
                    s.push(vec![name.into(), i.into(), (*v).into()]);
                }
            }
            tables.push(s);
            let mut tail = Table::new(
                "bush_tail",
                &[("t", "threshold"), ("survival", "empirical P(X > t) over the pooled bush samples")],
            );
            if let Ok(fit) = tail_statistics(&mc.bush_samples) {
                for (t, v) in fit.survival {
                    tail.push(vec![t.into(), v.into()]);
                }
            }
            tables.push(tail);
            let summary = json!({
                "n": mc.n,
                "bush_psi": mc.bush_psi,
                "remainder_psi": mc.remainder_psi,
                "off_tube_mean": mc.off_tube_mean,
                "bush_tail": mc.bush_tail,
                "skipped": mc.skipped,
                "samples": mc.bush_samples.len(),
            });
            (summary, None)
        }
        ExperimentKind::Thresholds => {
            let p = &cfg.thresholds;
            let mut rows = Vec::new();
            let mut pass = true;
            for &d in &p.dims {
                let o = optimized_threshold(d)?;
                pass &= o.s_min == o.closed_form;
                rows.push(json!({
                    "d": d,
                    "theta_star": ratio_str(&o.theta_star),
                    "s_min": ratio_str(&o.s_min),
                    "s_min_value": *o.s_min.numer() as f64 / *o.s_min.denom() as f64,
                    "closed_form": ratio_str(&o.closed_form),
                }));
            }
            let mut summary = json!({ "optimized": rows });
            if let (Some(a), Some(b), Some(c)) = (&p.delta, &p.theta, &p.beta) {
                let (delta, theta, beta) = (
                    parse_ratio(a).map_err(Error::Config)?,
                    parse_ratio(b).map_err(Error::Config)?,
                    parse_ratio(c).map_err(Error::Config)?,
                );
                let general: Vec<serde_json::Value> = p
                    .dims
                    .iter()
                    .map(|&d| {
                        let r = regularity_threshold(d, delta, theta, beta);
                        json!({
                            "d": d,
                            "s_min": ratio_str(&r.s_min),
                            "alpha_bound": ratio_str(&r.alpha_bound),
                            "beta_bound": ratio_str(&r.beta_bound),
                            "binding": r.binding,
                            "feasible": r.feasible,
                            "reasons": r.reasons,
                        })
                    })
                    .collect();
                summary["general"] = serde_json::Value::Array(general);
            }
            (summary, Some(pass))
        }
        ExperimentKind::Trilinear => {
            let p = &cfg.trilinear;
            let d = grid.dim();
            let x0 = vec![0.0; d];
            let cone = Cone::new(0.0, x0, p.n, ConeKind::Standard)?;
            let mut shifted = vec![0.0; d];
            shifted[0] = 1.0;
            let free = model.free();
            let steps = (p.n as f64 / p.dt).round() as usize;
            let d1 = StatePair::new(gaussian(grid, &vec![0.0; d], p.width, p.amplitude), RealField::zeros(grid))?;
            let d2 = StatePair::new(gaussian(grid, &shifted, p.width, p.amplitude), RealField::zeros(grid))?;
            let u1 = integrate(&d1, 0.0, p.dt, steps, 1, &free, None)?;
            let u2 = integrate(&d2, 0.0, p.dt, steps, 1, &free, None)?;
            shifted[0] = -1.0;
            let fdata = StatePair::new(gaussian(grid, &shifted, p.width, 1.0), RealField::zeros(grid))?;
            let forcing = FreeForcing::new(&fdata).scaled(p.forcing_scale);
            let rep = trilinear_cone_integral(&forcing, &u1, &u2, &cone, &model, p.s, p.delta)
                .map_err(context("trilinear"))?;
            let pass = rep.integral <= rep.holder_bound * (1.0 + 1e-9);
            (serde_json::to_value(&rep)?, Some(pass))
        }
    };
    Ok(ExperimentOutput { summary, tables, documents, verdict })
}

fn write_file(dir: &Path, name: &str, contents: &str, outputs: &mut Vec<OutputFile>) -> Result<()> {
    let path: PathBuf = dir.join(name);
    fs::write(&path, contents)?;
    outputs.push(OutputFile {
        path: name.to_string(),
        sha256: hex(&Sha256::digest(contents.as_bytes())),
        bytes: contents.len() as u64,
    });
    Ok(())
}

/// Validates, runs, writes outputs under `out_dir` and returns the manifest
/// (also written as `manifest.json`).
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunManifest> {
    cfg.validate()?;
    let started = now();
    let out = compute(cfg)?;
    fs::create_dir_all(out_dir)?;
    let name = cfg.kind.name();
    let mut outputs = Vec::new();
    let summary = json!({
        "kind": name,
        "seed": cfg.seed,
        "verdict": out.verdict,
        "result": out.summary,
    });
    write_file(out_dir, &format!("{name}.json"), &to_json(&summary)?, &mut outputs)?;
    for (doc, value) in &out.documents {
        write_file(out_dir, &format!("{doc}.json"), &to_json(value)?, &mut outputs)?;
    }
    if !out.tables.is_empty() {
        let schema: Vec<serde_json::Value> = out.tables.iter().map(Table::schema).collect();
        for t in &out.tables {
            write_file(out_dir, &format!("{}.csv", t.name), &t.to_csv(), &mut outputs)?;
        }
        write_file(out_dir, &format!("{name}.schema.json"), &to_json(&schema)?, &mut outputs)?;
    }
    let manifest = RunManifest {
        kind: cfg.kind,
        config_hash: cfg.hash(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        started,
        finished: now(),
        outputs,
        verdict: out.verdict,
    };
    fs::write(out_dir.join("manifest.json"), to_json(&manifest)?)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let c = ExperimentConfig::from_toml("kind = \"thresholds\"").unwrap();
        assert_eq!(c, ExperimentConfig::new(ExperimentKind::Thresholds));
        c.validate().unwrap();
    }

    #[test]
    fn unknown_field_is_named() {
        let e = ExperimentConfig::from_toml("kind = \"solve\"\n[solve]\nsteps = 10\nbogus = 1\n").unwrap_err();
        assert!(e.to_string().contains("bogus"), "{e}");
    }

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        let s = to_json(&json!({"x": 1.0 / 3.0})).unwrap();
        assert!(s.contains("3.3333333333333331e-1"), "{s}");
        let back: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["x"].as_f64().unwrap(), 1.0 / 3.0);
    }
}
