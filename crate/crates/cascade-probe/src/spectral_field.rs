//! Periodic grid fields with spectral calculus, pressure recovery, quadrature
//! and a small binary file format.
//!
//! Samples are stored row-major over `(x1, x2)`: the value at
//! `x = (i1 dx, i2 dx)` lives at index `i1 * N + i2`. Spectral coefficients use
//! the real-to-complex layout `N x (N/2 + 1)` with the half axis along `x2`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform periodic grid of `N x N` points on the box `[0, L)^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    n: usize,
    l: f64,
}

impl Grid2D {
    pub fn new(n: usize, l: f64) -> Result<Self> {
        if n < 16 || !n.is_power_of_two() || !(l > 0.0) || !l.is_finite() {
            return Err(Error::InvalidGrid { n, l });
        }
        Ok(Self { n, l })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn l(&self) -> f64 {
        self.l
    }

    pub fn dx(&self) -> f64 {
        self.l / self.n as f64
    }

    /// Number of samples, `N^2`.
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinate of grid index `i` along either axis.
    pub fn coord(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }

    /// Fundamental wavenumber `2 pi / L`.
    pub fn kappa(&self) -> f64 {
        2.0 * PI / self.l
    }

    /// Number of complex coefficients along the half axis.
    pub fn half(&self) -> usize {
        self.n / 2 + 1
    }

    /// Signed integer wavenumber of full-axis index `i`, in `{-N/2+1, ..., N/2}`.
    pub fn wavenumber(&self, i: usize) -> i64 {
        let n = self.n as i64;
        let i = i as i64;
        if i <= n / 2 {
            i
        } else {
            i - n
        }
    }
}

/// Real samples of a scalar field on a [`Grid2D`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField2D {
    grid: Grid2D,
    values: Vec<f64>,
}

impl ScalarField2D {
    pub fn new(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch { expected: grid.len(), got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("scalar field samples".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid2D) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    /// Samples `f(x1, x2)` at every grid point.
    pub fn from_fn(grid: Grid2D, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let n = grid.n();
        let mut values = Vec::with_capacity(grid.len());
        for i1 in 0..n {
            let x1 = grid.coord(i1);
            for i2 in 0..n {
                values.push(f(x1, grid.coord(i2)));
            }
        }
        Self::new(grid, values)
    }

    pub(crate) fn from_raw(grid: Grid2D, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, i1: usize, i2: usize) -> f64 {
        self.values[i1 * self.grid.n() + i2]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Pointwise map into a new field on the same grid.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Largest pointwise absolute difference to `other`.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(self.values.iter().zip(&other.values).fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }
}

/// Two-component vector field sharing one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField2D {
    pub u1: ScalarField2D,
    pub u2: ScalarField2D,
}

impl VectorField2D {
    pub fn new(u1: ScalarField2D, u2: ScalarField2D) -> Result<Self> {
        if u1.grid != u2.grid {
            return Err(Error::GridMismatch);
        }
        Ok(Self { u1, u2 })
    }

    pub fn zeros(grid: Grid2D) -> Self {
        Self { u1: ScalarField2D::zeros(grid), u2: ScalarField2D::zeros(grid) }
    }

    pub fn from_fn(grid: Grid2D, f: impl Fn(f64, f64) -> [f64; 2]) -> Result<Self> {
        let u1 = ScalarField2D::from_fn(grid, |a, b| f(a, b)[0])?;
        let u2 = ScalarField2D::from_fn(grid, |a, b| f(a, b)[1])?;
        Ok(Self { u1, u2 })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.u1.grid
    }

    /// Largest pointwise Euclidean norm.
    pub fn max_norm(&self) -> f64 {
        self.u1
            .values
            .iter()
            .zip(&self.u2.values)
            .fold(0.0, |m, (a, b)| m.max(a.hypot(*b)))
    }
}

/// Fourier coefficients in the real-to-complex layout, normalized so that
/// `f(x) = sum_k c_k exp(i k.x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: Grid2D,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(grid: Grid2D) -> Self {
        Self { grid, coeffs: vec![Complex64::new(0.0, 0.0); grid.n() * grid.half()] }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Applies `f(k1, k2, c)` to every coefficient, with integer wavenumbers.
    pub fn map_modes(&mut self, f: impl Fn(i64, i64, Complex64) -> Complex64) {
        let h = self.grid.half();
        for i1 in 0..self.grid.n() {
            let k1 = self.grid.wavenumber(i1);
            for i2 in 0..h {
                let c = &mut self.coeffs[i1 * h + i2];
                *c = f(k1, i2 as i64, *c);
            }
        }
    }

    /// Sum over the full (Hermitian) spectrum of `w(k1, k2) |c_k|^2`.
    pub fn weighted_power(&self, w: impl Fn(i64, i64) -> f64) -> f64 {
        let n = self.grid.n();
        let h = self.grid.half();
        let mut acc = 0.0;
        for i1 in 0..n {
            let k1 = self.grid.wavenumber(i1);
            for i2 in 0..h {
                // interior half-axis modes stand for themselves and their conjugate partner
                let mult = if i2 == 0 || i2 == n / 2 { 1.0 } else { 2.0 };
                acc += mult * w(k1, i2 as i64) * self.coeffs[i1 * h + i2].norm_sqr();
            }
        }
        acc
    }
}

/// FFT plans for one grid size. Plans are shared; scratch buffers are per call.
pub struct Spectral {
    grid: Grid2D,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("grid", &self.grid).finish()
    }
}

fn plan_cache() -> &'static Mutex<HashMap<(usize, u64), Arc<Spectral>>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, u64), Arc<Spectral>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

impl Spectral {
    /// Shared transform object for `grid`, planned once per process.
    pub fn for_grid(grid: &Grid2D) -> Arc<Spectral> {
        let key = (grid.n(), grid.l().to_bits());
        let mut cache = plan_cache().lock().expect("plan cache poisoned");
        cache
            .entry(key)
            .or_insert_with(|| {
                let n = grid.n();
                let mut rp = RealFftPlanner::<f64>::new();
                let mut cp = FftPlanner::<f64>::new();
                Arc::new(Spectral {
                    grid: *grid,
                    r2c: rp.plan_fft_forward(n),
                    c2r: rp.plan_fft_inverse(n),
                    fwd: cp.plan_fft_forward(n),
                    inv: cp.plan_fft_inverse(n),
                })
            })
            .clone()
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    /// Forward transform of raw samples into `out` (length `N (N/2+1)`).
    pub fn forward_into(&self, values: &[f64], out: &mut [Complex64]) {
        let n = self.grid.n();
        let h = self.grid.half();
        let mut row = self.r2c.make_input_vec();
        let mut scratch = self.r2c.make_scratch_vec();
        for i1 in 0..n {
            row.copy_from_slice(&values[i1 * n..(i1 + 1) * n]);
            self.r2c
                .process_with_scratch(&mut row, &mut out[i1 * h..(i1 + 1) * h], &mut scratch)
                .expect("real FFT buffer sizes are fixed by the plan");
        }
        let mut cols = transpose_to_columns(out, n, h);
        self.fwd.process(&mut cols);
        let scale = 1.0 / (n * n) as f64;
        for i2 in 0..h {
            for i1 in 0..n {
                out[i1 * h + i2] = cols[i2 * n + i1] * scale;
            }
        }
    }

    /// Inverse transform of `coeffs` into raw samples `out` (length `N^2`).
    pub fn inverse_into(&self, coeffs: &[Complex64], out: &mut [f64]) {
        let n = self.grid.n();
        let h = self.grid.half();
        let mut cols = transpose_to_columns(coeffs, n, h);
        self.inv.process(&mut cols);
        let mut row = self.c2r.make_input_vec();
        let mut scratch = self.c2r.make_scratch_vec();
        for i1 in 0..n {
            for i2 in 0..h {
                row[i2] = cols[i2 * n + i1];
            }
            // the DC and Nyquist bins of a real row carry no imaginary part
            row[0].im = 0.0;
            row[h - 1].im = 0.0;
            self.c2r
                .process_with_scratch(&mut row, &mut out[i1 * n..(i1 + 1) * n], &mut scratch)
                .expect("real FFT buffer sizes are fixed by the plan");
        }
    }

    pub fn forward(&self, f: &ScalarField2D) -> Result<SpectralField> {
        if f.grid != self.grid {
            return Err(Error::GridMismatch);
        }
        let mut s = SpectralField::zeros(self.grid);
        self.forward_into(&f.values, &mut s.coeffs);
        Ok(s)
    }

    pub fn inverse(&self, s: &SpectralField) -> Result<ScalarField2D> {
        if s.grid != self.grid {
            return Err(Error::GridMismatch);
        }
        let mut out = vec![0.0; self.grid.len()];
        self.inverse_into(&s.coeffs, &mut out);
        ScalarField2D::new(self.grid, out)
    }

    /// Physical wavenumber used for first derivatives; the Nyquist mode is zeroed.
    pub fn deriv_k(&self, k: i64) -> f64 {
        if k.unsigned_abs() as usize * 2 == self.grid.n() {
            0.0
        } else {
            k as f64 * self.grid.kappa()
        }
    }

    /// Physical squared wavenumber magnitude `|k|^2`.
    pub fn k_sq(&self, k1: i64, k2: i64) -> f64 {
        let kap = self.grid.kappa();
        ((k1 * k1 + k2 * k2) as f64) * kap * kap
    }

    /// Spectral velocity `u = grad-perp (-Laplacian)^{-1} w` from spectral vorticity.
    pub fn velocity_hat(&self, w: &SpectralField) -> (SpectralField, SpectralField) {
        let mut u1 = w.clone();
        let mut u2 = w.clone();
        u1.map_modes(|k1, k2, c| {
            let ksq = self.k_sq(k1, k2);
            if ksq == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, self.deriv_k(k2)) * c / ksq
            }
        });
        u2.map_modes(|k1, k2, c| {
            let ksq = self.k_sq(k1, k2);
            if ksq == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, -self.deriv_k(k1)) * c / ksq
            }
        });
        (u1, u2)
    }

    /// Spectral partial derivative along axis 0 (`x1`) or 1 (`x2`).
    pub fn partial_hat(&self, s: &SpectralField, axis: usize) -> SpectralField {
        let mut d = s.clone();
        d.map_modes(|k1, k2, c| {
            let k = if axis == 0 { self.deriv_k(k1) } else { self.deriv_k(k2) };
            Complex64::new(0.0, k) * c
        });
        d
    }
}

fn transpose_to_columns(data: &[Complex64], n: usize, h: usize) -> Vec<Complex64> {
    let mut cols = vec![Complex64::new(0.0, 0.0); n * h];
    for i1 in 0..n {
        for i2 in 0..h {
            cols[i2 * n + i1] = data[i1 * h + i2];
        }
    }
    cols
}

/// Spectral gradient `(d1 f, d2 f)`.
pub fn gradient(f: &ScalarField2D) -> Result<VectorField2D> {
    let sp = Spectral::for_grid(f.grid());
    let s = sp.forward(f)?;
    let g1 = sp.inverse(&sp.partial_hat(&s, 0))?;
    let g2 = sp.inverse(&sp.partial_hat(&s, 1))?;
    VectorField2D::new(g1, g2)
}

/// Spectral Laplacian.
pub fn laplacian(f: &ScalarField2D) -> Result<ScalarField2D> {
    let sp = Spectral::for_grid(f.grid());
    let mut s = sp.forward(f)?;
    s.map_modes(|k1, k2, c| c * -sp.k_sq(k1, k2));
    sp.inverse(&s)
}

/// Scalar curl `d1 u2 - d2 u1`.
pub fn curl(u: &VectorField2D) -> Result<ScalarField2D> {
    if u.u1.grid != u.u2.grid {
        return Err(Error::GridMismatch);
    }
    let sp = Spectral::for_grid(u.grid());
    let a = sp.partial_hat(&sp.forward(&u.u2)?, 0);
    let b = sp.partial_hat(&sp.forward(&u.u1)?, 1);
    let mut c = a;
    for (x, y) in c.coeffs.iter_mut().zip(&b.coeffs) {
        *x -= *y;
    }
    sp.inverse(&c)
}

/// Spectral divergence `d1 u1 + d2 u2`.
pub fn divergence(u: &VectorField2D) -> Result<ScalarField2D> {
    if u.u1.grid != u.u2.grid {
        return Err(Error::GridMismatch);
    }
    let sp = Spectral::for_grid(u.grid());
    let mut a = sp.partial_hat(&sp.forward(&u.u1)?, 0);
    let b = sp.partial_hat(&sp.forward(&u.u2)?, 1);
    for (x, y) in a.coeffs.iter_mut().zip(&b.coeffs) {
        *x += *y;
    }
    sp.inverse(&a)
}

/// Divergence-free velocity whose curl is `w`. Requires a zero-mean vorticity.
pub fn velocity_from_vorticity(w: &ScalarField2D) -> Result<VectorField2D> {
    check_zero_mean(w)?;
    let sp = Spectral::for_grid(w.grid());
    let (a, b) = sp.velocity_hat(&sp.forward(w)?);
    VectorField2D::new(sp.inverse(&a)?, sp.inverse(&b)?)
}

pub(crate) fn check_zero_mean(w: &ScalarField2D) -> Result<()> {
    let mean = w.mean();
    let max = w.max_abs();
    if mean.abs() > 1e-12 * max {
        return Err(Error::NonZeroMean { mean, max });
    }
    Ok(())
}

/// Zero-mean pressure solving `Lap p = -div((u.grad) u)` for divergence-free `u`.
///
/// The right-hand side is evaluated in conservative form `-d_i d_j (u_i u_j)`.
/// The viscosity does not enter the pressure of an incompressible flow; it is
/// accepted so callers can pass the solver configuration through unchanged.
pub fn solve_pressure(u: &VectorField2D, _nu: f64) -> Result<ScalarField2D> {
    if u.u1.grid != u.u2.grid {
        return Err(Error::GridMismatch);
    }
    let grid = *u.grid();
    let sp = Spectral::for_grid(&grid);
    let a = &u.u1.values;
    let b = &u.u2.values;
    let prod = |f: &dyn Fn(usize) -> f64| -> Vec<f64> { (0..grid.len()).map(f).collect() };
    let mut s11 = SpectralField::zeros(grid);
    let mut s12 = SpectralField::zeros(grid);
    let mut s22 = SpectralField::zeros(grid);
    sp.forward_into(&prod(&|i| a[i] * a[i]), &mut s11.coeffs);
    sp.forward_into(&prod(&|i| a[i] * b[i]), &mut s12.coeffs);
    sp.forward_into(&prod(&|i| b[i] * b[i]), &mut s22.coeffs);
    let h = grid.half();
    let mut p = SpectralField::zeros(grid);
    for i1 in 0..grid.n() {
        let k1 = grid.wavenumber(i1);
        for i2 in 0..h {
            let k2 = i2 as i64;
            let ksq = sp.k_sq(k1, k2);
            if ksq == 0.0 {
                continue;
            }
            let (d1, d2) = (sp.deriv_k(k1), sp.deriv_k(k2));
            let idx = i1 * h + i2;
            let rhs = s11.coeffs[idx] * (d1 * d1)
                + s12.coeffs[idx] * (2.0 * d1 * d2)
                + s22.coeffs[idx] * (d2 * d2);
            p.coeffs[idx] = -rhs / ksq;
        }
    }
    sp.inverse(&p)
}

/// Riemann sum `dx^2 sum f` over the periodic box.
pub fn integrate(f: &ScalarField2D) -> f64 {
    let dx = f.grid.dx();
    dx * dx * f.values.iter().sum::<f64>()
}

/// Trigonometric interpolation of `f` onto an `n_new`-point grid of the same box.
/// Requires `n_new >= n`; the Nyquist modes of `f` are dropped.
pub fn resample(f: &ScalarField2D, n_new: usize) -> Result<ScalarField2D> {
    let src = *f.grid();
    if n_new == src.n() {
        return Ok(f.clone());
    }
    let dst = Grid2D::new(n_new, src.l())?;
    if n_new < src.n() {
        return Err(Error::InvalidGrid { n: n_new, l: src.l() });
    }
    let s = Spectral::for_grid(&src).forward(f)?;
    let mut out = SpectralField::zeros(dst);
    let (n, h, hd) = (src.n(), src.half(), dst.half());
    for i1 in 0..n {
        let k1 = src.wavenumber(i1);
        if k1.unsigned_abs() as usize * 2 == n {
            continue;
        }
        let j1 = k1.rem_euclid(n_new as i64) as usize;
        for i2 in 0..h.min(n / 2) {
            out.coeffs[j1 * hd + i2] = s.coeffs[i1 * h + i2];
        }
    }
    Spectral::for_grid(&dst).inverse(&out)
}

/// Contents of a field file.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldData {
    Scalar(ScalarField2D),
    Vector(VectorField2D),
}

impl FieldData {
    pub fn grid(&self) -> &Grid2D {
        match self {
            FieldData::Scalar(f) => f.grid(),
            FieldData::Vector(v) => v.grid(),
        }
    }
}

const MAGIC: &[u8; 4] = b"CPF1";

/// Writes `field` at time `t` in the binary field format.
pub fn write_field(w: &mut impl Write, field: &FieldData, t: f64) -> Result<()> {
    let grid = field.grid();
    w.write_all(MAGIC)?;
    w.write_all(&(grid.n() as u32).to_le_bytes())?;
    w.write_all(&grid.l().to_le_bytes())?;
    w.write_all(&t.to_le_bytes())?;
    let parts: Vec<&ScalarField2D> = match field {
        FieldData::Scalar(f) => {
            w.write_all(&[0u8])?;
            vec![f]
        }
        FieldData::Vector(v) => {
            w.write_all(&[1u8])?;
            vec![&v.u1, &v.u2]
        }
    };
    let mut buf = Vec::with_capacity(grid.len() * 8);
    for part in parts {
        buf.clear();
        for v in &part.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

/// Reads a field written by [`write_field`], returning it with its time stamp.
pub fn read_field(r: &mut impl Read) -> Result<(FieldData, f64)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b4)?;
    let n = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b8)?;
    let l = f64::from_le_bytes(b8);
    r.read_exact(&mut b8)?;
    let t = f64::from_le_bytes(b8);
    let mut kind = [0u8; 1];
    r.read_exact(&mut kind)?;
    let grid = Grid2D::new(n, l)?;
    let read_part = |r: &mut dyn Read| -> Result<ScalarField2D> {
        let mut raw = vec![0u8; grid.len() * 8];
        r.read_exact(&mut raw)?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        ScalarField2D::new(grid, values)
    };
    let data = match kind[0] {
        0 => FieldData::Scalar(read_part(r)?),
        1 => {
            let u1 = read_part(r)?;
            let u2 = read_part(r)?;
            FieldData::Vector(VectorField2D::new(u1, u2)?)
        }
        k => return Err(Error::Format(format!("unknown field kind {k}"))),
    };
    Ok((data, t))
}

pub fn save_field(path: &Path, field: &FieldData, t: f64) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_field(&mut w, field, t)?;
    w.flush()?;
    Ok(())
}

pub fn load_field(path: &Path) -> Result<(FieldData, f64)> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    read_field(&mut r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Grid2D {
        Grid2D::new(n, 2.0 * PI).unwrap()
    }

    #[test]
    fn resample_reproduces_trigonometric_polynomial() {
        let f = |x: f64, y: f64| (3.0 * x).sin() * (2.0 * y).cos() + 0.5 * (x - 5.0 * y).cos();
        let coarse = ScalarField2D::from_fn(grid(32), f).unwrap();
        let fine = resample(&coarse, 128).unwrap();
        let exact = ScalarField2D::from_fn(grid(128), f).unwrap();
        assert!(fine.max_abs_diff(&exact).unwrap() < 1e-13);
        assert!(resample(&fine, 32).is_err());
    }

    #[test]
    fn grid_rejects_bad_sizes() {
        assert!(Grid2D::new(8, 1.0).is_err());
        assert!(Grid2D::new(48, 1.0).is_err());
        assert!(Grid2D::new(64, 0.0).is_err());
        assert!(Grid2D::new(64, -1.0).is_err());
        assert!(Grid2D::new(16, 1.0).is_ok());
    }

    #[test]
    fn field_rejects_non_finite_and_wrong_length() {
        let g = grid(16);
        assert!(ScalarField2D::new(g, vec![0.0; 10]).is_err());
        let mut v = vec![0.0; g.len()];
        v[3] = f64::NAN;
        assert!(ScalarField2D::new(g, v).is_err());
    }

    #[test]
    fn round_trip_transform() {
        let g = grid(32);
        let f = ScalarField2D::from_fn(g, |x, y| (x + 2.0 * y).sin() + 0.3 * (3.0 * x).cos() + 0.1).unwrap();
        let sp = Spectral::for_grid(&g);
        let back = sp.inverse(&sp.forward(&f).unwrap()).unwrap();
        assert!(back.max_abs_diff(&f).unwrap() < 1e-13);
    }

    #[test]
    fn gradient_of_single_mode() {
        let g = grid(64);
        let f = ScalarField2D::from_fn(g, |x, _| x.sin()).unwrap();
        let gr = gradient(&f).unwrap();
        let ex = ScalarField2D::from_fn(g, |x, _| x.cos()).unwrap();
        assert!(gr.u1.max_abs_diff(&ex).unwrap() <= 1e-12);
        assert!(gr.u2.max_abs() <= 1e-12);
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let g = grid(32);
        let f = ScalarField2D::from_fn(g, |_, _| 4.5).unwrap();
        let gr = gradient(&f).unwrap();
        assert!(gr.u1.max_abs() < 1e-13 && gr.u2.max_abs() < 1e-13);
        assert!(laplacian(&f).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn gradient_and_laplacian_of_product_mode() {
        let g = grid(64);
        let f = ScalarField2D::from_fn(g, |x, y| (3.0 * x).sin() * (2.0 * y).cos()).unwrap();
        let gr = gradient(&f).unwrap();
        let e1 = ScalarField2D::from_fn(g, |x, y| 3.0 * (3.0 * x).cos() * (2.0 * y).cos()).unwrap();
        let e2 = ScalarField2D::from_fn(g, |x, y| -2.0 * (3.0 * x).sin() * (2.0 * y).sin()).unwrap();
        assert!(gr.u1.max_abs_diff(&e1).unwrap() <= 1e-10);
        assert!(gr.u2.max_abs_diff(&e2).unwrap() <= 1e-10);
        let lap = laplacian(&f).unwrap();
        let el = f.map(|v| -13.0 * v).unwrap();
        assert!(lap.max_abs_diff(&el).unwrap() <= 1e-10);
        let l1 = laplacian(&ScalarField2D::from_fn(g, |x, _| x.sin()).unwrap()).unwrap();
        let e = ScalarField2D::from_fn(g, |x, _| -x.sin()).unwrap();
        assert!(l1.max_abs_diff(&e).unwrap() <= 1e-12);
    }

    fn taylor_green_u(g: Grid2D) -> VectorField2D {
        VectorField2D::from_fn(g, |x, y| [x.sin() * y.cos(), -x.cos() * y.sin()]).unwrap()
    }

    #[test]
    fn curl_oracles() {
        let g = grid(64);
        let w = curl(&taylor_green_u(g)).unwrap();
        let ex = ScalarField2D::from_fn(g, |x, y| 2.0 * x.sin() * y.sin()).unwrap();
        assert!(w.max_abs_diff(&ex).unwrap() <= 1e-10);
        let c = VectorField2D::from_fn(g, |_, _| [1.5, -0.5]).unwrap();
        assert!(curl(&c).unwrap().max_abs() < 1e-13);
        let shear = VectorField2D::from_fn(g, |_, y| [y.sin(), 0.0]).unwrap();
        let ex = ScalarField2D::from_fn(g, |_, y| -y.cos()).unwrap();
        assert!(curl(&shear).unwrap().max_abs_diff(&ex).unwrap() <= 1e-12);
    }

    #[test]
    fn curl_rejects_mismatched_grids() {
        let u = VectorField2D { u1: ScalarField2D::zeros(grid(16)), u2: ScalarField2D::zeros(grid(32)) };
        assert!(matches!(curl(&u), Err(Error::GridMismatch)));
        assert!(VectorField2D::new(ScalarField2D::zeros(grid(16)), ScalarField2D::zeros(grid(32))).is_err());
    }

    #[test]
    fn velocity_inverts_taylor_green_vorticity() {
        let g = grid(64);
        let w = ScalarField2D::from_fn(g, |x, y| 2.0 * x.sin() * y.sin()).unwrap();
        let u = velocity_from_vorticity(&w).unwrap();
        let ex = taylor_green_u(g);
        assert!(u.u1.max_abs_diff(&ex.u1).unwrap() <= 1e-10);
        assert!(u.u2.max_abs_diff(&ex.u2).unwrap() <= 1e-10);
        let zero = velocity_from_vorticity(&ScalarField2D::zeros(g)).unwrap();
        assert_eq!(zero.max_norm(), 0.0);
    }

    #[test]
    fn velocity_of_shear_vorticity() {
        let g = grid(64);
        let w = ScalarField2D::from_fn(g, |x, _| (2.0 * x).sin()).unwrap();
        let u = velocity_from_vorticity(&w).unwrap();
        assert!(u.u1.max_abs() <= 1e-12);
        let ex = ScalarField2D::from_fn(g, |x, _| -(2.0 * x).cos() / 2.0).unwrap();
        assert!(u.u2.max_abs_diff(&ex).unwrap() <= 1e-12);
        assert!(curl(&u).unwrap().max_abs_diff(&w).unwrap() <= 1e-10);
    }

    #[test]
    fn velocity_rejects_nonzero_mean() {
        let g = grid(32);
        let w = ScalarField2D::from_fn(g, |x, _| 1.0 + x.sin()).unwrap();
        assert!(matches!(velocity_from_vorticity(&w), Err(Error::NonZeroMean { .. })));
    }

    #[test]
    fn taylor_green_pressure() {
        // (u.grad)u = (sin 2x1, sin 2x2)/2 for this velocity, so grad p = -(sin 2x1, sin 2x2)/2
        let g = grid(64);
        let p = solve_pressure(&taylor_green_u(g), 0.01).unwrap();
        let ex = ScalarField2D::from_fn(g, |x, y| 0.25 * ((2.0 * x).cos() + (2.0 * y).cos())).unwrap();
        assert!(p.max_abs_diff(&ex).unwrap() <= 1e-9);
        assert!(p.mean().abs() < 1e-14);
    }

    #[test]
    fn pressure_of_trivial_flows_vanishes() {
        let g = grid(32);
        assert!(solve_pressure(&VectorField2D::zeros(g), 0.1).unwrap().max_abs() == 0.0);
        let shear = VectorField2D::from_fn(g, |_, y| [y.sin(), 0.0]).unwrap();
        assert!(solve_pressure(&shear, 0.1).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn integrate_oracles() {
        let g = grid(64);
        let one = ScalarField2D::from_fn(g, |_, _| 1.0).unwrap();
        assert!((integrate(&one) - 4.0 * PI * PI).abs() < 1e-12);
        let s2 = ScalarField2D::from_fn(g, |x, _| x.sin().powi(2)).unwrap();
        assert!((integrate(&s2) - 2.0 * PI * PI).abs() < 1e-12);
        let s = ScalarField2D::from_fn(g, |x, _| x.sin()).unwrap();
        assert!(integrate(&s).abs() < 1e-13);
    }

    #[test]
    fn field_file_round_trip_and_bad_magic() {
        let g = grid(16);
        let f = ScalarField2D::from_fn(g, |x, y| x * 0.3 - y).unwrap();
        let v = taylor_green_u(g);
        for data in [FieldData::Scalar(f), FieldData::Vector(v)] {
            let mut buf = Vec::new();
            write_field(&mut buf, &data, 1.25).unwrap();
            let expected = 4 + 4 + 8 + 8 + 1 + g.len() * 8 * if matches!(data, FieldData::Vector(_)) { 2 } else { 1 };
            assert_eq!(buf.len(), expected);
            let (back, t) = read_field(&mut buf.as_slice()).unwrap();
            assert_eq!(t, 1.25);
            assert_eq!(back, data);
        }
        let mut bad = Vec::new();
        write_field(&mut bad, &FieldData::Scalar(ScalarField2D::zeros(g)), 0.0).unwrap();
        bad[0] = b'X';
        assert!(matches!(read_field(&mut bad.as_slice()), Err(Error::Format(_))));
        bad[0] = b'C';
        bad[24] = 7;
        assert!(matches!(read_field(&mut bad.as_slice()), Err(Error::Format(_))));
    }
}
