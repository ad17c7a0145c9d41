//! Periodic torus proxy for `R^d` with physical and spectral field representations.
//!
//! Grid points sit at `x_j = -L/2 + j dx` on every axis, so the origin is a
//! sample point. Transforms follow the continuum convention
//!
//! ```text
//! f^(xi) = int f(x) e^{-i x.xi} dx       ~  dx^d sum_j f(x_j) e^{-i x_j.xi}
//! f(x)   = (2 pi)^{-d} int f^(xi) e^{i x.xi} dxi  ~  L^{-d} sum_m f^(xi_m) e^{i x.xi_m}
//! ```
//!
//! with `xi_m = 2 pi m / L`, so Plancherel reads `||f||_2^2 = L^{-d} sum |f^|^2`.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported dimension.
pub const MAX_DIM: usize = 6;

/// `<x> = (1 + |x|^2)^{1/2}` from the squared modulus.
#[inline]
pub fn bracket_sq(norm_sq: f64) -> f64 {
    (1.0 + norm_sq).sqrt()
}

/// `<x>` for a vector.
#[inline]
pub fn bracket(v: &[f64]) -> f64 {
    bracket_sq(v.iter().map(|a| a * a).sum())
}

/// Uniform periodic grid: `n` points per axis on `[-L/2, L/2)^d`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusGrid {
    dim: usize,
    n: usize,
    extent: f64,
}

impl TorusGrid {
    pub fn new(dim: usize, n: usize, extent: f64) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidGrid(format!("dimension {dim} outside 1..={MAX_DIM}")));
        }
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!("n = {n} is not a power of two")));
        }
        if !(extent.is_finite() && extent > 0.0) {
            return Err(Error::InvalidGrid(format!("extent {extent} must be positive")));
        }
        // dxi <= 1/4 keeps at least eight frequencies per unit cell.
        if 2.0 * PI / extent > 0.25 + 1e-15 {
            return Err(Error::InvalidGrid(format!(
                "extent {extent} below 8*pi: frequency spacing exceeds 1/4"
            )));
        }
        Ok(Self { dim, n, extent })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn extent(&self) -> f64 {
        self.extent
    }
    pub fn dx(&self) -> f64 {
        self.extent / self.n as f64
    }
    pub fn dxi(&self) -> f64 {
        2.0 * PI / self.extent
    }
    /// Total sample count `n^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    /// `dx^d`, the Riemann-sum weight.
    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(self.dim as i32)
    }
    /// `L^d`.
    pub fn volume(&self) -> f64 {
        self.extent.powi(self.dim as i32)
    }
    /// Largest resolved frequency `pi n / L`.
    pub fn nyquist(&self) -> f64 {
        PI * self.n as f64 / self.extent
    }

    /// Coordinate of sample `j` on one axis.
    #[inline]
    pub fn coord(&self, j: usize) -> f64 {
        -0.5 * self.extent + j as f64 * self.dx()
    }

    /// Signed frequency index of FFT slot `j`.
    #[inline]
    pub fn signed_index(&self, j: usize) -> i64 {
        if j < self.n / 2 {
            j as i64
        } else {
            j as i64 - self.n as i64
        }
    }

    /// Angular frequency of FFT slot `j`.
    #[inline]
    pub fn freq(&self, j: usize) -> f64 {
        self.dxi() * self.signed_index(j) as f64
    }

    /// FFT slot of a signed frequency index, if representable.
    pub fn slot_of(&self, m: i64) -> Option<usize> {
        let h = (self.n / 2) as i64;
        if m < -h || m >= h {
            None
        } else if m >= 0 {
            Some(m as usize)
        } else {
            Some((m + self.n as i64) as usize)
        }
    }

    pub fn axis_coords(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.coord(j)).collect()
    }

    pub fn axis_freqs(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.freq(j)).collect()
    }

    /// Row-major multi-index (last axis fastest).
    #[inline]
    pub fn unravel(&self, mut idx: usize) -> [usize; MAX_DIM] {
        let mut out = [0usize; MAX_DIM];
        for a in (0..self.dim).rev() {
            out[a] = idx % self.n;
            idx /= self.n;
        }
        out
    }

    #[inline]
    pub fn ravel(&self, multi: &[usize]) -> usize {
        multi[..self.dim].iter().fold(0, |acc, &j| acc * self.n + j)
    }

    /// Physical position of sample `idx`.
    pub fn point(&self, idx: usize) -> [f64; MAX_DIM] {
        let m = self.unravel(idx);
        let mut x = [0.0; MAX_DIM];
        for a in 0..self.dim {
            x[a] = self.coord(m[a]);
        }
        x
    }

    /// Wavevector of spectral slot `idx`.
    pub fn wavevector(&self, idx: usize) -> [f64; MAX_DIM] {
        let m = self.unravel(idx);
        let mut xi = [0.0; MAX_DIM];
        for a in 0..self.dim {
            xi[a] = self.freq(m[a]);
        }
        xi
    }

    /// `|xi|^2` for every spectral slot, in storage order.
    pub fn wavenumber_sq(&self) -> Vec<f64> {
        let f = self.axis_freqs();
        let mut out = vec![0.0; self.len()];
        for (idx, v) in out.iter_mut().enumerate() {
            let m = self.unravel(idx);
            *v = (0..self.dim).map(|a| f[m[a]] * f[m[a]]).sum();
        }
        out
    }

    /// `<xi>` for every spectral slot.
    pub fn bracket_table(&self) -> Vec<f64> {
        self.wavenumber_sq().into_iter().map(bracket_sq).collect()
    }

    /// Requires the Nyquist frequency to exceed `kmax + 1`.
    pub fn check_band(&self, kmax: f64) -> Result<()> {
        if kmax + 1.0 < self.nyquist() {
            Ok(())
        } else {
            Err(Error::OutOfBand(format!(
                "|k|_inf + 1 = {} not below Nyquist {:.4}",
                kmax + 1.0,
                self.nyquist()
            )))
        }
    }

    /// Integer translates of a unit window tile the torus only for integer `L`.
    pub fn check_integer_extent(&self) -> Result<()> {
        if (self.extent - self.extent.round()).abs() < 1e-12 {
            Ok(())
        } else {
            Err(Error::InvalidGrid(format!(
                "spatial windows need an integer extent, got {}",
                self.extent
            )))
        }
    }

    /// Minimum-image displacement along one axis.
    #[inline]
    pub fn wrap(&self, dx: f64) -> f64 {
        dx - self.extent * (dx / self.extent).round()
    }

    fn same(&self, other: &TorusGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    let mut planner = PLANNER
        .get_or_init(|| Mutex::new(FftPlanner::new()))
        .lock()
        .expect("fft planner poisoned");
    if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    }
}

/// Unnormalized multi-dimensional DFT along every axis.
fn fft_nd(grid: &TorusGrid, data: &mut [Complex64], inverse: bool) {
    let n = grid.n;
    let fft = plan(n, inverse);
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    // Last axis is contiguous.
    fft.process_with_scratch(data, &mut scratch);
    const BATCH: usize = 16;
    let mut buf = vec![Complex64::new(0.0, 0.0); n * BATCH];
    for axis in (0..grid.dim.saturating_sub(1)).rev() {
        let stride = n.pow((grid.dim - 1 - axis) as u32);
        let block = stride * n;
        for base in (0..data.len()).step_by(block) {
            let mut inner = 0;
            while inner < stride {
                let b = BATCH.min(stride - inner);
                for j in 0..n {
                    let src = base + j * stride + inner;
                    for c in 0..b {
                        buf[c * n + j] = data[src + c];
                    }
                }
                fft.process_with_scratch(&mut buf[..b * n], &mut scratch);
                for j in 0..n {
                    let dst = base + j * stride + inner;
                    for c in 0..b {
                        data[dst + c] = buf[c * n + j];
                    }
                }
                inner += b;
            }
        }
    }
}

/// `(-1)^{sum of indices}`: the phase from centring the grid at the origin.
fn apply_centre_phase(grid: &TorusGrid, data: &mut [Complex64]) {
    for (idx, c) in data.iter_mut().enumerate() {
        let m = grid.unravel(idx);
        let s: usize = m[..grid.dim].iter().sum();
        if s % 2 == 1 {
            *c = -*c;
        }
    }
}

fn forward_raw(grid: &TorusGrid, mut data: Vec<Complex64>) -> Vec<Complex64> {
    fft_nd(grid, &mut data, false);
    let w = grid.cell_volume();
    apply_centre_phase(grid, &mut data);
    for c in data.iter_mut() {
        *c *= w;
    }
    data
}

fn inverse_raw(grid: &TorusGrid, mut data: Vec<Complex64>) -> Vec<Complex64> {
    apply_centre_phase(grid, &mut data);
    fft_nd(grid, &mut data, true);
    let w = 1.0 / grid.volume();
    for c in data.iter_mut() {
        *c *= w;
    }
    data
}

fn check_exponent(p: f64) -> Result<()> {
    if p.is_nan() || p < 1.0 {
        Err(Error::InvalidArgument(format!("Lebesgue exponent {p} below 1")))
    } else {
        Ok(())
    }
}

fn lp_from_abs(grid: &TorusGrid, abs: impl Iterator<Item = f64>, p: f64) -> f64 {
    if p.is_infinite() {
        abs.fold(0.0, f64::max)
    } else if p == 2.0 {
        (abs.map(|a| a * a).sum::<f64>() * grid.cell_volume()).sqrt()
    } else {
        (abs.map(|a| a.powf(p)).sum::<f64>() * grid.cell_volume()).powf(1.0 / p)
    }
}

/// Real samples on a torus grid.
#[derive(Clone, Debug, PartialEq)]
pub struct RealField {
    grid: TorusGrid,
    data: Vec<f64>,
}

impl RealField {
    pub fn zeros(grid: TorusGrid) -> Self {
        Self { data: vec![0.0; grid.len()], grid }
    }

    pub fn from_vec(grid: TorusGrid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} samples, got {}",
                grid.len(),
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence("non-finite sample".into()));
        }
        Ok(Self { grid, data })
    }

    /// Samples `f` at every grid point; `f` receives the first `d` coordinates.
    pub fn from_fn(grid: TorusGrid, f: impl Fn(&[f64]) -> f64) -> Self {
        let d = grid.dim;
        let data = (0..grid.len()).map(|i| f(&grid.point(i)[..d])).collect();
        Self { grid, data }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.data
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `f^` with the `dx^d` Riemann weight.
    pub fn forward(&self) -> SpectralField {
        let data = self.data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        SpectralField { grid: self.grid, data: forward_raw(&self.grid, data) }
    }

    pub fn to_complex(&self) -> ComplexField {
        ComplexField {
            grid: self.grid,
            data: self.data.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    /// `L^p` norm by Riemann sum; `p = inf` is the grid maximum.
    pub fn lp_norm(&self, p: f64) -> f64 {
        lp_from_abs(&self.grid, self.data.iter().map(|v| v.abs()), p)
    }

    pub fn max_abs(&self) -> f64 {
        self.lp_norm(f64::INFINITY)
    }

    pub fn integral(&self) -> f64 {
        self.data.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn scale(&mut self, a: f64) {
        self.data.iter_mut().for_each(|v| *v *= a);
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.scale(a);
        out
    }

    /// `self += a * other`.
    pub fn add_scaled(&mut self, a: f64, other: &RealField) -> Result<()> {
        self.grid.same(&other.grid)?;
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += a * y;
        }
        Ok(())
    }

    /// Pointwise product.
    pub fn mul(&self, other: &RealField) -> Result<RealField> {
        self.grid.same(&other.grid)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect();
        Ok(RealField { grid: self.grid, data })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> RealField {
        RealField { grid: self.grid, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Binary container: `d`, `n` as u64 and `L` as f64 (little endian), then samples.
    pub fn write_binary(&self, mut w: impl Write) -> Result<()> {
        w.write_all(&(self.grid.dim as u64).to_le_bytes())?;
        w.write_all(&(self.grid.n as u64).to_le_bytes())?;
        w.write_all(&self.grid.extent.to_le_bytes())?;
        let mut buf = Vec::with_capacity(8 * self.data.len());
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_binary(mut r: impl Read) -> Result<Self> {
        let mut word = [0u8; 8];
        r.read_exact(&mut word)?;
        let dim = u64::from_le_bytes(word) as usize;
        r.read_exact(&mut word)?;
        let n = u64::from_le_bytes(word) as usize;
        r.read_exact(&mut word)?;
        let extent = f64::from_le_bytes(word);
        let grid = TorusGrid::new(dim, n, extent)?;
        let mut bytes = vec![0u8; 8 * grid.len()];
        r.read_exact(&mut bytes)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        RealField::from_vec(grid, data)
    }
}

/// Complex samples on a torus grid (half-wave evolutions, wave packets).
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField {
    grid: TorusGrid,
    data: Vec<Complex64>,
}

impl ComplexField {
    pub fn zeros(grid: TorusGrid) -> Self {
        Self { data: vec![Complex64::new(0.0, 0.0); grid.len()], grid }
    }

    pub fn from_vec(grid: TorusGrid, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::InvalidArgument("sample count mismatch".into()));
        }
        Ok(Self { grid, data })
    }

    pub fn from_fn(grid: TorusGrid, f: impl Fn(&[f64]) -> Complex64) -> Self {
        let d = grid.dim;
        let data = (0..grid.len()).map(|i| f(&grid.point(i)[..d])).collect();
        Self { grid, data }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }
    pub fn values(&self) -> &[Complex64] {
        &self.data
    }
    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn forward(&self) -> SpectralField {
        SpectralField { grid: self.grid, data: forward_raw(&self.grid, self.data.clone()) }
    }

    pub fn real_part(&self) -> RealField {
        RealField { grid: self.grid, data: self.data.iter().map(|c| c.re).collect() }
    }

    pub fn imag_part(&self) -> RealField {
        RealField { grid: self.grid, data: self.data.iter().map(|c| c.im).collect() }
    }

    pub fn lp_norm(&self, p: f64) -> f64 {
        lp_from_abs(&self.grid, self.data.iter().map(|c| c.norm()), p)
    }

    pub fn max_abs(&self) -> f64 {
        self.lp_norm(f64::INFINITY)
    }

    pub fn scale(&mut self, a: Complex64) {
        self.data.iter_mut().for_each(|v| *v *= a);
    }

    pub fn add_scaled(&mut self, a: Complex64, other: &ComplexField) -> Result<()> {
        self.grid.same(&other.grid)?;
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += a * y;
        }
        Ok(())
    }

    /// Pointwise product with a real weight.
    pub fn mul_real(&self, w: &RealField) -> Result<ComplexField> {
        self.grid.same(&w.grid)?;
        let data = self.data.iter().zip(&w.data).map(|(a, b)| a * b).collect();
        Ok(ComplexField { grid: self.grid, data })
    }
}

/// Fourier coefficients `f^(xi_m)` in FFT storage order.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    grid: TorusGrid,
    data: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(grid: TorusGrid) -> Self {
        Self { data: vec![Complex64::new(0.0, 0.0); grid.len()], grid }
    }

    pub fn from_vec(grid: TorusGrid, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::InvalidArgument("coefficient count mismatch".into()));
        }
        Ok(Self { grid, data })
    }

    /// Coefficients from a function of the wavevector.
    pub fn from_fn(grid: TorusGrid, f: impl Fn(&[f64]) -> Complex64) -> Self {
        let d = grid.dim;
        let data = (0..grid.len()).map(|i| f(&grid.wavevector(i)[..d])).collect();
        Self { grid, data }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }
    pub fn coeffs(&self) -> &[Complex64] {
        &self.data
    }
    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    /// Inverse transform to complex samples.
    pub fn inverse(&self) -> ComplexField {
        ComplexField { grid: self.grid, data: inverse_raw(&self.grid, self.data.clone()) }
    }

    /// Inverse transform keeping the real part (the imaginary part is rounding
    /// noise when the coefficients are Hermitian).
    pub fn inverse_real(&self) -> RealField {
        self.inverse().real_part()
    }

    /// Multiplies every coefficient by `m(xi)`.
    pub fn multiply(&mut self, m: impl Fn(&[f64]) -> Complex64) {
        let d = self.grid.dim;
        for (i, c) in self.data.iter_mut().enumerate() {
            *c *= m(&self.grid.wavevector(i)[..d]);
        }
    }

    /// Multiplies by a precomputed table in storage order.
    pub fn multiply_table(&mut self, table: &[f64]) {
        for (c, &w) in self.data.iter_mut().zip(table) {
            *c *= w;
        }
    }

    pub fn scale(&mut self, a: Complex64) {
        self.data.iter_mut().for_each(|v| *v *= a);
    }

    pub fn add_scaled(&mut self, a: Complex64, other: &SpectralField) -> Result<()> {
        self.grid.same(&other.grid)?;
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += a * y;
        }
        Ok(())
    }

    /// `L^2` norm via Plancherel.
    pub fn l2_norm(&self) -> f64 {
        (self.data.iter().map(|c| c.norm_sqr()).sum::<f64>() / self.grid.volume()).sqrt()
    }

    /// `(sum <xi>^{2s} |f^|^2 dxi^d (2 pi)^{-d})^{1/2}`.
    pub fn sobolev_norm(&self, s: f64) -> f64 {
        let k2 = self.grid.wavenumber_sq();
        let sum: f64 = self
            .data
            .iter()
            .zip(&k2)
            .map(|(c, &q)| (1.0 + q).powf(s) * c.norm_sqr())
            .sum();
        (sum / self.grid.volume()).sqrt()
    }

    /// Largest `|c(-xi) - conj c(xi)|` relative to the largest coefficient.
    pub fn hermitian_defect(&self) -> f64 {
        let g = &self.grid;
        let scale = self.data.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        for (i, c) in self.data.iter().enumerate() {
            let m = g.unravel(i);
            let mut neg = [0usize; MAX_DIM];
            for a in 0..g.dim {
                neg[a] = (g.n - m[a]) % g.n;
            }
            let j = g.ravel(&neg);
            worst = worst.max((self.data[j] - c.conj()).norm());
        }
        worst / scale
    }
}

/// Cauchy data `(u, u_t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct StatePair {
    pub u: RealField,
    pub ut: RealField,
}

impl StatePair {
    pub fn new(u: RealField, ut: RealField) -> Result<Self> {
        u.grid.same(&ut.grid)?;
        Ok(Self { u, ut })
    }

    pub fn zeros(grid: TorusGrid) -> Self {
        Self { u: RealField::zeros(grid), ut: RealField::zeros(grid) }
    }

    pub fn grid(&self) -> &TorusGrid {
        self.u.grid()
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self { u: self.u.scaled(a), ut: self.ut.scaled(a) }
    }
}

/// `sobolev_norm` of a real field.
pub fn sobolev_norm(f: &RealField, s: f64) -> f64 {
    f.forward().sobolev_norm(s)
}

/// Trapezoid `L^q` norm in time of a sampled profile restricted to `window`.
///
/// Samples must cover the window; `q = inf` takes the maximum.
pub fn time_norm(times: &[f64], values: &[f64], q: f64, window: (f64, f64)) -> Result<f64> {
    check_exponent(q)?;
    let (a, b) = window;
    if !(a < b) || times.len() != values.len() {
        return Err(Error::InvalidInterval(format!("window [{a}, {b}]")));
    }
    let tol = 1e-9 * (1.0 + a.abs().max(b.abs()));
    let sel: Vec<usize> = (0..times.len())
        .filter(|&i| times[i] >= a - tol && times[i] <= b + tol)
        .collect();
    if sel.is_empty() {
        return Err(Error::InvalidInterval(format!("no samples in [{a}, {b}]")));
    }
    let first = times[sel[0]];
    let last = times[*sel.last().expect("nonempty")];
    if first > a + tol || last < b - tol {
        return Err(Error::CoverageGap { start: a, end: b });
    }
    if q.is_infinite() {
        return Ok(sel.iter().map(|&i| values[i].abs()).fold(0.0, f64::max));
    }
    let mut acc = 0.0;
    for w in sel.windows(2) {
        let (i, j) = (w[0], w[1]);
        acc += 0.5 * (times[j] - times[i]) * (values[i].abs().powf(q) + values[j].abs().powf(q));
    }
    Ok(acc.powf(1.0 / q))
}

/// `L^q_t L^r_x` over `window`: trapezoid in time, Riemann sum in space.
pub fn mixed_norm(
    times: &[f64],
    fields: &[&RealField],
    q: f64,
    r: f64,
    window: (f64, f64),
) -> Result<f64> {
    check_exponent(r)?;
    if times.len() != fields.len() {
        return Err(Error::InvalidArgument("one field per time stamp required".into()));
    }
    let profile: Vec<f64> = fields.iter().map(|f| f.lp_norm(r)).collect();
    time_norm(times, &profile, q, window)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid2() -> TorusGrid {
        TorusGrid::new(2, 32, 8.0 * PI).unwrap()
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(TorusGrid::new(2, 48, 30.0).is_err());
        assert!(TorusGrid::new(1, 64, 20.0).is_err());
        assert!(TorusGrid::new(0, 64, 30.0).is_err());
        assert!(TorusGrid::new(1, 64, 8.0 * PI).is_ok());
    }

    #[test]
    fn constant_goes_to_dc() {
        let g = grid2();
        let f = RealField::from_fn(g, |_| 1.0);
        let s = f.forward();
        assert!((s.coeffs()[0].re - g.volume()).abs() < 1e-9 * g.volume());
        let rest: f64 = s.coeffs()[1..].iter().map(|c| c.norm()).fold(0.0, f64::max);
        assert!(rest < 1e-9);
    }

    #[test]
    fn cosine_splits_between_plus_minus() {
        let g = TorusGrid::new(1, 64, 32.0).unwrap();
        let xi0 = g.freq(3);
        let s = RealField::from_fn(g, |x| (xi0 * x[0]).cos()).forward();
        let a = s.coeffs()[3].norm();
        let b = s.coeffs()[61].norm();
        assert!((a - b).abs() < 1e-10);
        assert!((a - 16.0).abs() < 1e-10);
    }

    #[test]
    fn single_mode_sobolev() {
        let g = TorusGrid::new(2, 32, 32.0).unwrap();
        let xi = [g.freq(2), g.freq(30)];
        let f = ComplexField::from_fn(g, |x| Complex64::from_polar(1.0, xi[0] * x[0] + xi[1] * x[1]));
        let s = 1.5;
        let expect = bracket(&xi).powf(s) * g.volume().sqrt();
        assert!((f.forward().sobolev_norm(s) / expect - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mixed_norm_examples() {
        let g = TorusGrid::new(1, 32, 32.0).unwrap();
        let f = RealField::from_fn(g, |x| (-x[0] * x[0]).exp());
        let times: Vec<f64> = (0..11).map(|i| i as f64 / 10.0).collect();
        let fields: Vec<&RealField> = times.iter().map(|_| &f).collect();
        let r = 3.0;
        let v = mixed_norm(&times, &fields, 2.0, r, (0.0, 1.0)).unwrap();
        assert!((v - f.lp_norm(r)).abs() < 1e-12);
        let v = mixed_norm(&times, &fields, f64::INFINITY, r, (0.0, 1.0)).unwrap();
        assert!((v - f.lp_norm(r)).abs() < 1e-14);
        assert!(mixed_norm(&times, &fields, 2.0, r, (0.5, 0.5)).is_err());
        assert!(mixed_norm(&times, &fields, 2.0, r, (2.0, 3.0)).is_err());
    }

    #[test]
    fn binary_round_trip() {
        let g = grid2();
        let f = RealField::from_fn(g, |x| x[0].sin() * x[1]);
        let mut buf = Vec::new();
        f.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 24 + 8 * g.len());
        let back = RealField::read_binary(buf.as_slice()).unwrap();
        assert_eq!(back, f);
    }
}
