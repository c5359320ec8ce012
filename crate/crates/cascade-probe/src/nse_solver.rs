//! Pseudo-spectral integration of the unforced 2D Navier-Stokes equations in
//! vorticity form on the periodic box.
//!
//! Diffusion is integrated exactly through the factor `exp(-nu k^2 dt)` and the
//! advection term `-(u.grad) w` is advanced with classical RK4 (Lawson form).
//! Products are formed in physical space and truncated with the 2/3 rule.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral_field::{
    check_zero_mean, gradient, integrate, load_field, save_field, solve_pressure, velocity_from_vorticity,
    FieldData, Grid2D, ScalarField2D, Spectral, SpectralField, VectorField2D,
};

fn default_dealias() -> f64 {
    2.0 / 3.0
}

/// Time-stepping parameters. `t_end` plays the role of `2T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub nu: f64,
    pub dt: f64,
    pub n: usize,
    pub l: f64,
    pub t_end: f64,
    pub sample_stride: usize,
    #[serde(default = "default_dealias")]
    pub dealias: f64,
}

impl SolverConfig {
    pub fn grid(&self) -> Result<Grid2D> {
        Grid2D::new(self.n, self.l)
    }

    /// Number of steps covering `[0, t_end]`; `t_end` must be a multiple of `dt`.
    pub fn n_steps(&self) -> Result<usize> {
        let steps = (self.t_end / self.dt).round();
        if (steps * self.dt - self.t_end).abs() > 1e-9 * self.t_end.max(1.0) {
            return Err(Error::Config(format!(
                "t_end = {} is not an integer multiple of dt = {}",
                self.t_end, self.dt
            )));
        }
        Ok(steps as usize)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::Config(format!("viscosity must be positive, got {}", self.nu)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!("t_end must be non-negative, got {}", self.t_end)));
        }
        if self.sample_stride == 0 {
            return Err(Error::Config("sample_stride must be at least 1".into()));
        }
        if !(self.dealias > 0.0 && self.dealias <= 1.0) {
            return Err(Error::Config(format!("dealias fraction must lie in (0, 1], got {}", self.dealias)));
        }
        self.n_steps()?;
        Ok(())
    }

    /// Largest retained integer wavenumber per axis under the dealiasing rule.
    pub fn cutoff_wavenumber(&self) -> f64 {
        self.dealias * self.n as f64 / 2.0
    }
}

/// Solution sample at one time: vorticity plus the velocity and pressure it determines.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub omega: ScalarField2D,
    pub u: VectorField2D,
    pub p: ScalarField2D,
}

impl Snapshot {
    /// Rebuilds velocity and pressure from a zero-mean vorticity field.
    pub fn from_vorticity(t: f64, omega: ScalarField2D, nu: f64) -> Result<Self> {
        let u = velocity_from_vorticity(&omega)?;
        let p = solve_pressure(&u, nu)?;
        Ok(Self { t, omega, u, p })
    }

    pub fn energy(&self) -> f64 {
        let e: Vec<f64> =
            self.u.u1.values().iter().zip(self.u.u2.values()).map(|(a, b)| 0.5 * (a * a + b * b)).collect();
        integrate(&ScalarField2D::from_raw(*self.omega.grid(), e))
    }

    pub fn enstrophy(&self) -> f64 {
        let z: Vec<f64> = self.omega.values().iter().map(|w| 0.5 * w * w).collect();
        integrate(&ScalarField2D::from_raw(*self.omega.grid(), z))
    }

    pub fn palinstrophy(&self) -> Result<f64> {
        let g = gradient(&self.omega)?;
        let p: Vec<f64> = g.u1.values().iter().zip(g.u2.values()).map(|(a, b)| a * a + b * b).collect();
        Ok(integrate(&ScalarField2D::from_raw(*self.omega.grid(), p)))
    }
}

/// Time-sampled solution over `[0, t_end]` with its global series.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub config: SolverConfig,
    pub snapshots: Vec<Snapshot>,
    pub energy: Vec<f64>,
    pub enstrophy: Vec<f64>,
    pub palinstrophy: Vec<f64>,
}

impl Trajectory {
    pub fn grid(&self) -> &Grid2D {
        self.snapshots[0].omega.grid()
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    /// Builds a trajectory from snapshots, computing the global series.
    pub fn from_snapshots(config: SolverConfig, snapshots: Vec<Snapshot>) -> Result<Self> {
        if snapshots.is_empty() {
            return Err(Error::Missing("trajectory has no snapshots".into()));
        }
        if snapshots.windows(2).any(|w| w[1].t <= w[0].t) {
            return Err(Error::Config("snapshot times must be strictly increasing".into()));
        }
        let energy = snapshots.iter().map(Snapshot::energy).collect();
        let enstrophy = snapshots.iter().map(Snapshot::enstrophy).collect();
        let palinstrophy = snapshots.iter().map(Snapshot::palinstrophy).collect::<Result<_>>()?;
        Ok(Self { config, snapshots, energy, enstrophy, palinstrophy })
    }

    /// Largest relative increase of a series between consecutive snapshots.
    pub fn max_relative_increase(series: &[f64]) -> f64 {
        series
            .windows(2)
            .map(|w| if w[0] > 0.0 { (w[1] - w[0]) / w[0] } else { w[1].max(0.0) })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Relative residual of the global energy balance `dE/dt = -nu int w^2`,
    /// with both sides integrated in time by the trapezoid rule.
    pub fn global_energy_balance_residual(&self) -> f64 {
        let t = self.times();
        let mut worst: f64 = 0.0;
        for i in 1..t.len() {
            let h = t[i] - t[i - 1];
            let lhs = self.energy[i] - self.energy[i - 1];
            // int w^2 = 2 * enstrophy
            let rhs = -self.config.nu * h * (self.enstrophy[i] + self.enstrophy[i - 1]);
            let scale = self.energy[0].max(f64::MIN_POSITIVE);
            worst = worst.max((lhs - rhs).abs() / scale / h);
        }
        worst
    }

    /// Writes `meta.json` plus one vorticity file per snapshot into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut files = Vec::with_capacity(self.snapshots.len());
        for (i, s) in self.snapshots.iter().enumerate() {
            let name = format!("snap_{i:05}.cpf");
            save_field(&dir.join(&name), &FieldData::Scalar(s.omega.clone()), s.t)?;
            files.push(name);
        }
        let meta = TrajectoryMeta {
            config: self.config.clone(),
            times: self.times(),
            energy: self.energy.clone(),
            enstrophy: self.enstrophy.clone(),
            palinstrophy: self.palinstrophy.clone(),
            files,
        };
        std::fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }

    /// Loads a trajectory written by [`Trajectory::save`], rebuilding `u` and `p`.
    pub fn load(dir: &Path) -> Result<Self> {
        let meta_path = dir.join("meta.json");
        if !meta_path.exists() {
            return Err(Error::Missing(format!("{} not found", meta_path.display())));
        }
        let meta: TrajectoryMeta = serde_json::from_str(&std::fs::read_to_string(&meta_path)?)?;
        let mut snapshots = Vec::with_capacity(meta.files.len());
        for name in &meta.files {
            let path = dir.join(name);
            if !path.exists() {
                return Err(Error::Missing(format!("snapshot {} not found", path.display())));
            }
            let (data, t) = load_field(&path)?;
            let omega = match data {
                FieldData::Scalar(f) => f,
                FieldData::Vector(_) => return Err(Error::Format(format!("{name}: expected a scalar field"))),
            };
            snapshots.push(Snapshot::from_vorticity(t, omega, meta.config.nu)?);
        }
        Self::from_snapshots(meta.config, snapshots)
    }
}

/// On-disk description of a trajectory directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub config: SolverConfig,
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    pub enstrophy: Vec<f64>,
    pub palinstrophy: Vec<f64>,
    pub files: Vec<String>,
}

/// Reusable integrator state: plans, integrating factors and the dealiasing mask.
pub struct Stepper {
    sp: Arc<Spectral>,
    grid: Grid2D,
    dt: f64,
    e_full: Vec<f64>,
    e_half: Vec<f64>,
    keep: Vec<f64>,
    kd1: Vec<f64>,
    kd2: Vec<f64>,
    inv_ksq: Vec<f64>,
}

impl Stepper {
    pub fn new(config: &SolverConfig) -> Result<Self> {
        config.validate()?;
        let grid = config.grid()?;
        let sp = Spectral::for_grid(&grid);
        let h = grid.half();
        let kc = config.cutoff_wavenumber();
        let size = grid.n() * h;
        let (mut e_full, mut e_half, mut keep) = (vec![0.0; size], vec![0.0; size], vec![0.0; size]);
        let (mut kd1, mut kd2, mut inv_ksq) = (vec![0.0; size], vec![0.0; size], vec![0.0; size]);
        for i1 in 0..grid.n() {
            let k1 = grid.wavenumber(i1);
            for i2 in 0..h {
                let k2 = i2 as i64;
                let idx = i1 * h + i2;
                let ksq = sp.k_sq(k1, k2);
                e_full[idx] = (-config.nu * ksq * config.dt).exp();
                e_half[idx] = (-config.nu * ksq * config.dt * 0.5).exp();
                let inside = (k1.abs() as f64) < kc && (k2 as f64) < kc && ksq > 0.0;
                keep[idx] = if inside { 1.0 } else { 0.0 };
                kd1[idx] = sp.deriv_k(k1);
                kd2[idx] = sp.deriv_k(k2);
                inv_ksq[idx] = if ksq > 0.0 { 1.0 / ksq } else { 0.0 };
            }
        }
        Ok(Self { sp, grid, dt: config.dt, e_full, e_half, keep, kd1, kd2, inv_ksq })
    }

    /// Zeroes every mode removed by the dealiasing rule, including the mean.
    pub fn project(&self, w: &mut SpectralField) {
        for (c, k) in w.coeffs_mut().iter_mut().zip(&self.keep) {
            *c *= *k;
        }
    }

    /// Dealiased advection term `-(u.grad) w` in spectral space; returns `max|u|`.
    fn advection(&self, w: &[Complex64], out: &mut [Complex64]) -> f64 {
        let len = w.len();
        let i = Complex64::new(0.0, 1.0);
        let mut spec = vec![Complex64::new(0.0, 0.0); 4 * len];
        for idx in 0..len {
            let psi = w[idx] * self.inv_ksq[idx];
            spec[idx] = i * self.kd2[idx] * psi;
            spec[len + idx] = -i * self.kd1[idx] * psi;
            spec[2 * len + idx] = i * self.kd1[idx] * w[idx];
            spec[3 * len + idx] = i * self.kd2[idx] * w[idx];
        }
        let np = self.grid.len();
        let mut phys = vec![0.0; 4 * np];
        for (s, p) in spec.chunks(len).zip(phys.chunks_mut(np)) {
            self.sp.inverse_into(s, p);
        }
        let (u1, rest) = phys.split_at(np);
        let (u2, rest) = rest.split_at(np);
        let (wx, wy) = rest.split_at(np);
        let mut prod = vec![0.0; np];
        let mut umax: f64 = 0.0;
        for j in 0..np {
            prod[j] = -(u1[j] * wx[j] + u2[j] * wy[j]);
            umax = umax.max(u1[j].hypot(u2[j]));
        }
        if prod.iter().any(|v| !v.is_finite()) {
            umax = f64::NAN;
        }
        self.sp.forward_into(&prod, out);
        for (c, k) in out.iter_mut().zip(&self.keep) {
            *c *= *k;
        }
        umax
    }

    /// One integrating-factor RK4 step in place. Returns `max|u|` at the start of the step.
    pub fn advance(&self, w: &mut SpectralField, step: usize, t: f64) -> Result<f64> {
        let len = w.coeffs().len();
        let dt = self.dt;
        let zero = Complex64::new(0.0, 0.0);
        let (mut k1, mut k2, mut k3, mut k4) = (vec![zero; len], vec![zero; len], vec![zero; len], vec![zero; len]);
        let mut tmp = vec![zero; len];
        let w0 = w.coeffs().to_vec();

        let umax = self.advection(&w0, &mut k1);
        if !umax.is_finite() {
            return Err(Error::Blowup { step, t });
        }
        if umax > 0.0 {
            let limit = 0.5 * self.grid.dx() / umax;
            if dt > limit {
                return Err(Error::Cfl { step, t, dt, limit });
            }
        }
        for j in 0..len {
            tmp[j] = self.e_half[j] * (w0[j] + 0.5 * dt * k1[j]);
        }
        self.advection(&tmp, &mut k2);
        for j in 0..len {
            tmp[j] = self.e_half[j] * w0[j] + 0.5 * dt * k2[j];
        }
        self.advection(&tmp, &mut k3);
        for j in 0..len {
            tmp[j] = self.e_full[j] * w0[j] + dt * self.e_half[j] * k3[j];
        }
        self.advection(&tmp, &mut k4);
        let out = w.coeffs_mut();
        for j in 0..len {
            out[j] = self.e_full[j] * w0[j]
                + dt / 6.0 * (self.e_full[j] * k1[j] + 2.0 * self.e_half[j] * (k2[j] + k3[j]) + k4[j]);
        }
        if out.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::Blowup { step: step + 1, t: t + dt });
        }
        Ok(umax)
    }
}

/// Advances a dealiased spectral vorticity by one step of `config.dt`.
pub fn step(state: &SpectralField, config: &SolverConfig) -> Result<SpectralField> {
    let stepper = Stepper::new(config)?;
    if state.grid() != &config.grid()? {
        return Err(Error::GridMismatch);
    }
    let mut w = state.clone();
    stepper.advance(&mut w, 0, 0.0)?;
    Ok(w)
}

/// Integrates from `omega0` over `[0, t_end]`, storing every `sample_stride`-th
/// step and the final state.
pub fn run(config: &SolverConfig, omega0: &ScalarField2D) -> Result<Trajectory> {
    let stepper = Stepper::new(config)?;
    let grid = config.grid()?;
    if omega0.grid() != &grid {
        return Err(Error::GridMismatch);
    }
    check_zero_mean(omega0)?;
    let sp = Spectral::for_grid(&grid);
    let mut w = sp.forward(omega0)?;
    stepper.project(&mut w);
    let n_steps = config.n_steps()?;
    let mut snapshots = Vec::new();
    let record = |w: &SpectralField, t: f64, snaps: &mut Vec<Snapshot>| -> Result<()> {
        let omega = sp.inverse(w)?;
        snaps.push(Snapshot::from_vorticity(t, omega, config.nu)?);
        Ok(())
    };
    record(&w, 0.0, &mut snapshots)?;
    for s in 0..n_steps {
        let t = s as f64 * config.dt;
        stepper.advance(&mut w, s, t)?;
        let done = s + 1;
        if done % config.sample_stride == 0 || done == n_steps {
            record(&w, done as f64 * config.dt, &mut snapshots)?;
        }
    }
    Trajectory::from_snapshots(config.clone(), snapshots)
}

/// Exact Taylor-Green solution with fundamental wavenumber `kappa = 2 pi / L`:
/// `u = (sin kx cos ky, -cos kx sin ky) e^{-2 nu kappa^2 t}`.
pub fn taylor_green_snapshot(nu: f64, t: f64, grid: &Grid2D) -> Result<Snapshot> {
    let k = grid.kappa();
    let decay = (-2.0 * nu * k * k * t).exp();
    let omega = ScalarField2D::from_fn(*grid, |x, y| 2.0 * k * (k * x).sin() * (k * y).sin() * decay)?;
    let u = VectorField2D::from_fn(*grid, |x, y| {
        [(k * x).sin() * (k * y).cos() * decay, -(k * x).cos() * (k * y).sin() * decay]
    })?;
    let p = ScalarField2D::from_fn(*grid, |x, y| {
        0.25 * ((2.0 * k * x).cos() + (2.0 * k * y).cos()) * decay * decay
    })?;
    Ok(Snapshot { t, omega, u, p })
}

/// Parameters of a random-phase initial vorticity with an annular spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialSpectrum {
    /// Peak integer wavenumber `k*`.
    pub k_peak: f64,
    /// Half width of the annulus in integer wavenumbers.
    pub bandwidth: f64,
    /// Root-mean-square vorticity of the synthesized field.
    pub amplitude: f64,
    pub seed: u64,
}

/// Zero-mean random-phase vorticity with modes `| |k| - k* | <= bandwidth`,
/// scaled to the requested RMS value. Deterministic per seed.
pub fn synthesize_initial_vorticity(spec: &InitialSpectrum, grid: &Grid2D) -> Result<ScalarField2D> {
    let n = grid.n();
    let kmax = n as f64 / 3.0;
    if !(spec.k_peak > 0.0) || spec.k_peak >= kmax {
        return Err(Error::Config(format!(
            "peak wavenumber {} must lie in (0, N/3 = {kmax:.2}) for N = {n}",
            spec.k_peak
        )));
    }
    if !(spec.bandwidth >= 0.0) || !(spec.amplitude >= 0.0) {
        return Err(Error::Config("bandwidth and amplitude must be non-negative".into()));
    }
    if spec.amplitude == 0.0 {
        return Ok(ScalarField2D::zeros(*grid));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let h = grid.half();
    let mut s = SpectralField::zeros(*grid);
    let mut count = 0usize;
    for i1 in 0..n {
        let k1 = grid.wavenumber(i1);
        for i2 in 0..h {
            let k2 = i2 as i64;
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            let kk = ((k1 * k1 + k2 * k2) as f64).sqrt();
            let in_band = (kk - spec.k_peak).abs() <= spec.bandwidth
                && kk > 0.0
                && (k1.abs() as f64) < kmax
                && (k2 as f64) < kmax;
            // on the k2 = 0 line only k1 > 0 is independent; k1 < 0 is its conjugate
            if !in_band || (k2 == 0 && k1 < 0) {
                continue;
            }
            s.coeffs_mut()[i1 * h + i2] = Complex64::new(a, b);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Config(format!(
            "no grid wavenumbers within {} of k* = {}",
            spec.bandwidth, spec.k_peak
        )));
    }
    for i1 in 1..n {
        let k1 = grid.wavenumber(i1);
        if k1 < 0 {
            let partner = (n as i64 + (-k1)) as usize % n;
            let c = s.coeffs()[partner * h].conj();
            s.coeffs_mut()[i1 * h] = c;
        }
    }
    let field = Spectral::for_grid(grid).inverse(&s)?;
    let rms = (field.values().iter().map(|v| v * v).sum::<f64>() / grid.len() as f64).sqrt();
    let scale = spec.amplitude / rms;
    let mean = field.mean();
    field.map(|v| (v - mean) * scale)
}

/// Default desk-scale box side.
pub const DEFAULT_L: f64 = 2.0 * PI;

#[cfg(test)]
mod tests {
    use super::*;

    fn tg_config(n: usize, dt: f64, t_end: f64, stride: usize) -> SolverConfig {
        SolverConfig { nu: 0.01, dt, n, l: DEFAULT_L, t_end, sample_stride: stride, dealias: 2.0 / 3.0 }
    }

    #[test]
    fn config_validation() {
        let mut c = tg_config(32, 0.01, 1.0, 10);
        assert!(c.validate().is_ok());
        c.nu = 0.0;
        assert!(c.validate().is_err());
        let mut c = tg_config(32, 0.01, 1.005, 10);
        assert!(c.validate().is_err());
        c.t_end = 1.0;
        c.sample_stride = 0;
        assert!(c.validate().is_err());
        assert!(tg_config(24, 0.01, 1.0, 1).validate().is_err());
    }

    #[test]
    fn zero_state_stays_zero() {
        let c = tg_config(32, 0.01, 0.1, 1);
        let g = c.grid().unwrap();
        let w = step(&SpectralField::zeros(g), &c).unwrap();
        assert!(w.coeffs().iter().all(|z| z.norm() == 0.0));
        let traj = run(&c, &ScalarField2D::zeros(g)).unwrap();
        assert!(traj.snapshots.iter().all(|s| s.omega.max_abs() == 0.0 && s.p.max_abs() == 0.0));
        assert_eq!(traj.snapshots.len(), 11);
    }

    #[test]
    fn taylor_green_single_step_is_exact() {
        let c = tg_config(64, 1e-3, 1e-3, 1);
        let g = c.grid().unwrap();
        let s0 = taylor_green_snapshot(c.nu, 0.0, &g).unwrap();
        let sp = Spectral::for_grid(&g);
        let w1 = sp.inverse(&step(&sp.forward(&s0.omega).unwrap(), &c).unwrap()).unwrap();
        let exact = taylor_green_snapshot(c.nu, c.dt, &g).unwrap().omega;
        assert!(w1.max_abs_diff(&exact).unwrap() / exact.max_abs() <= 1e-10);
    }

    #[test]
    fn taylor_green_run_matches_analytic() {
        let c = tg_config(64, 1e-3, 1.0, 100);
        let g = c.grid().unwrap();
        let traj = run(&c, &taylor_green_snapshot(c.nu, 0.0, &g).unwrap().omega).unwrap();
        let last = traj.snapshots.last().unwrap();
        assert!((last.t - 1.0).abs() < 1e-12);
        let exact = taylor_green_snapshot(c.nu, 1.0, &g).unwrap();
        assert!(last.omega.max_abs_diff(&exact.omega).unwrap() <= 1e-6);
        assert!(last.p.max_abs_diff(&exact.p).unwrap() <= 1e-9);
    }

    #[test]
    fn taylor_green_closed_form_integrals() {
        let g = Grid2D::new(64, DEFAULT_L).unwrap();
        let (nu, t) = (0.03, 2.5);
        let s = taylor_green_snapshot(nu, t, &g).unwrap();
        let f = (-4.0 * nu * t).exp();
        assert!((s.omega.get(16, 16) - 2.0 * (-2.0 * nu * t).exp()).abs() < 1e-14);
        let s0 = taylor_green_snapshot(nu, 0.0, &g).unwrap();
        assert_eq!(s0.omega.get(16, 16), 2.0);
        assert!((s.energy() - PI * PI * f).abs() < 1e-11);
        assert!((s.enstrophy() - 2.0 * PI * PI * f).abs() < 1e-11);
        assert!((s.palinstrophy().unwrap() - 8.0 * PI * PI * f).abs() < 1e-10);
    }

    #[test]
    fn single_shear_mode_is_resolution_independent() {
        let w0 = |g: Grid2D| ScalarField2D::from_fn(g, |x, _| (3.0 * x).sin()).unwrap();
        let coarse = tg_config(32, 0.02, 1.0, 50);
        let fine = tg_config(64, 0.01, 1.0, 100);
        let a = run(&coarse, &w0(coarse.grid().unwrap())).unwrap();
        let b = run(&fine, &w0(fine.grid().unwrap())).unwrap();
        let wa = &a.snapshots.last().unwrap().omega;
        let wb = &b.snapshots.last().unwrap().omega;
        let mut worst: f64 = 0.0;
        for i in 0..32 {
            for j in 0..32 {
                worst = worst.max((wa.get(i, j) - wb.get(2 * i, 2 * j)).abs());
            }
        }
        assert!(worst / wb.max_abs() <= 1e-8, "relative difference {worst}");
    }

    fn random_field(n: usize, k: f64, seed: u64) -> ScalarField2D {
        let g = Grid2D::new(n, DEFAULT_L).unwrap();
        synthesize_initial_vorticity(&InitialSpectrum { k_peak: k, bandwidth: 2.0, amplitude: 2.0, seed }, &g)
            .unwrap()
    }

    #[test]
    fn self_convergence_order_is_four() {
        let w0 = random_field(32, 4.0, 3);
        let final_state = |dt: f64| {
            let c = SolverConfig { nu: 0.02, dt, n: 32, l: DEFAULT_L, t_end: 0.4, sample_stride: 1000, dealias: 2.0 / 3.0 };
            run(&c, &w0).unwrap().snapshots.last().unwrap().omega.clone()
        };
        let (a, b, c) = (final_state(0.04), final_state(0.02), final_state(0.01));
        let order = (a.max_abs_diff(&b).unwrap() / b.max_abs_diff(&c).unwrap()).log2();
        assert!(order >= 3.5, "order {order}");
    }

    #[test]
    fn random_run_decays_and_conserves_mean() {
        let w0 = random_field(64, 6.0, 11);
        let c = SolverConfig { nu: 0.05, dt: 0.01, n: 64, l: DEFAULT_L, t_end: 1.0, sample_stride: 1, dealias: 2.0 / 3.0 };
        let traj = run(&c, &w0).unwrap();
        assert!(Trajectory::max_relative_increase(&traj.energy) < -1e-6);
        assert!(Trajectory::max_relative_increase(&traj.enstrophy) < -1e-6);
        for s in &traj.snapshots {
            assert!(s.omega.mean().abs() <= 1e-13);
        }
        assert!(traj.global_energy_balance_residual() <= 1e-3);
    }

    #[test]
    fn cfl_violation_is_reported() {
        let w0 = random_field(32, 4.0, 1).map(|v| v * 100.0).unwrap();
        let c = SolverConfig { nu: 0.01, dt: 0.1, n: 32, l: DEFAULT_L, t_end: 1.0, sample_stride: 1, dealias: 2.0 / 3.0 };
        assert!(matches!(run(&c, &w0), Err(Error::Cfl { step: 0, .. })));
    }

    #[test]
    fn run_rejects_nonzero_mean() {
        let c = tg_config(32, 0.01, 0.1, 1);
        let w = ScalarField2D::from_fn(c.grid().unwrap(), |_, _| 1.0).unwrap();
        assert!(matches!(run(&c, &w), Err(Error::NonZeroMean { .. })));
    }

    #[test]
    fn synthesis_is_deterministic_and_banded() {
        let g = Grid2D::new(256, DEFAULT_L).unwrap();
        let spec = InitialSpectrum { k_peak: 20.0, bandwidth: 4.0, amplitude: 1.0, seed: 42 };
        let a = synthesize_initial_vorticity(&spec, &g).unwrap();
        let b = synthesize_initial_vorticity(&spec, &g).unwrap();
        assert_eq!(a, b);
        assert!(a.mean().abs() < 1e-14);
        let z = a.values().iter().map(|v| 0.5 * v * v).sum::<f64>();
        let gr = gradient(&a).unwrap();
        let p = gr.u1.values().iter().zip(gr.u2.values()).map(|(x, y)| x * x + y * y).sum::<f64>();
        let sigma = (z / p).sqrt();
        // sqrt(Z/P) with Z carrying the factor 1/2
        let s = sigma * 2f64.sqrt();
        assert!(s >= 1.0 / 24.0 && s <= 1.0 / 16.0, "scale {s}");
        let zero = synthesize_initial_vorticity(&InitialSpectrum { amplitude: 0.0, ..spec.clone() }, &g).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
        let high = InitialSpectrum { k_peak: 90.0, ..spec };
        assert!(synthesize_initial_vorticity(&high, &g).is_err());
    }

    #[test]
    fn trajectory_round_trip_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let c = tg_config(32, 0.01, 0.05, 2);
        let g = c.grid().unwrap();
        let traj = run(&c, &random_field(32, 4.0, 5)).unwrap();
        traj.save(dir.path()).unwrap();
        let back = Trajectory::load(dir.path()).unwrap();
        assert_eq!(back.snapshots.len(), traj.snapshots.len());
        for (a, b) in back.snapshots.iter().zip(&traj.snapshots) {
            assert_eq!(a.t, b.t);
            assert_eq!(a.omega, b.omega);
            assert!(a.u.u1.max_abs_diff(&b.u.u1).unwrap() < 1e-14);
        }
        assert_eq!(back.energy, traj.energy);
        std::fs::remove_file(dir.path().join("snap_00001.cpf")).unwrap();
        assert!(matches!(Trajectory::load(dir.path()), Err(Error::Missing(_))));
        assert!(g.n() == 32);
    }
}
