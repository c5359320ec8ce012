//! Localized energy, enstrophy and palinstrophy, their fluxes, time and
//! ensemble averages, length scales and local balance residuals.
//!
//! Per snapshot, every cutoff contributes a fixed set of spatial moments.
//! Time averages multiply these by the appropriate power of `eta` and apply
//! the trapezoid rule over the stored snapshots, divided by the horizon `T`.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coverings::{make_ball_covering, make_outer_pair, make_shell_covering, uniform_centers, Covering};
use crate::cutoffs::{
    make_ball_cutoff, make_domain_cutoff, make_free_shell_cutoff, make_outer_cutoff, make_shell_cutoff,
    make_time_cutoff, make_whole_box_cutoff, BoundaryMode, Cutoff, Frame, SampledCutoff, TimeCutoff,
};
use crate::error::{Error, Result};
use crate::nse_solver::{Snapshot, Trajectory};
use crate::spectral_field::{gradient, resample, Grid2D, ScalarField2D, VectorField2D};

/// Pointwise densities of one snapshot that the localized integrals need.
#[derive(Debug, Clone)]
pub struct FlowFields {
    pub grid: Grid2D,
    /// `|u|^2 / 2`
    pub ke: Vec<f64>,
    /// `|omega|^2 / 2`
    pub ens: Vec<f64>,
    /// `|grad omega|^2`
    pub pal: Vec<f64>,
    /// `|grad u|^2`
    pub grad_u: Vec<f64>,
    /// `(|u|^2/2 + p) u`
    pub energy_flux: [Vec<f64>; 2],
    /// `(|omega|^2/2) u`
    pub enstrophy_flux: [Vec<f64>; 2],
}

fn sq_sum(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * x + y * y).collect()
}

impl FlowFields {
    pub fn from_snapshot(s: &Snapshot) -> Result<Self> {
        Self::on_grid(s, s.omega.grid())
    }

    /// Densities on `grid`, a refinement of the snapshot grid over the same box.
    /// Fields are carried over by trigonometric interpolation.
    pub fn on_grid(s: &Snapshot, grid: &Grid2D) -> Result<Self> {
        let src = s.omega.grid();
        if grid.l() != src.l() || grid.n() % src.n() != 0 {
            return Err(Error::GridMismatch);
        }
        if grid.n() != src.n() {
            let up = |f: &ScalarField2D| resample(f, grid.n());
            let fine = Snapshot {
                t: s.t,
                omega: up(&s.omega)?,
                u: VectorField2D::new(up(&s.u.u1)?, up(&s.u.u2)?)?,
                p: up(&s.p)?,
            };
            return Self::on_grid(&fine, grid);
        }
        let grid = *grid;
        let (u1, u2) = (s.u.u1.values(), s.u.u2.values());
        let ke: Vec<f64> = sq_sum(u1, u2).into_iter().map(|v| 0.5 * v).collect();
        let ens: Vec<f64> = s.omega.values().iter().map(|w| 0.5 * w * w).collect();
        let gw = gradient(&s.omega)?;
        let pal = sq_sum(gw.u1.values(), gw.u2.values());
        let g1 = gradient(&s.u.u1)?;
        let g2 = gradient(&s.u.u2)?;
        let grad_u: Vec<f64> = sq_sum(g1.u1.values(), g1.u2.values())
            .into_iter()
            .zip(sq_sum(g2.u1.values(), g2.u2.values()))
            .map(|(a, b)| a + b)
            .collect();
        let p = s.p.values();
        let head: Vec<f64> = ke.iter().zip(p).map(|(k, p)| k + p).collect();
        let energy_flux = [
            head.iter().zip(u1).map(|(h, u)| h * u).collect(),
            head.iter().zip(u2).map(|(h, u)| h * u).collect(),
        ];
        let enstrophy_flux = [
            ens.iter().zip(u1).map(|(z, u)| z * u).collect(),
            ens.iter().zip(u2).map(|(z, u)| z * u).collect(),
        ];
        Ok(Self { grid, ke, ens, pal, grad_u, energy_flux, enstrophy_flux })
    }
}

/// Spatial integrals of one snapshot against one cutoff `psi`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    /// `int |u|^2/2 psi^{2 delta - 1}`
    pub ke_pow: f64,
    /// `int |omega|^2/2 psi^{2 delta - 1}`
    pub ens_pow: f64,
    /// `int |u|^2/2 psi`
    pub ke: f64,
    /// `int |omega|^2/2 psi`
    pub ens: f64,
    /// `int |grad omega|^2 psi`
    pub pal: f64,
    /// `int |grad u|^2 psi`
    pub grad_u: f64,
    /// `int (|u|^2/2 + p) u . grad psi`
    pub flux_e: f64,
    /// `int |omega|^2/2 u . grad psi`
    pub flux_z: f64,
    /// `int |u|^2/2 Lap psi`
    pub ke_lap: f64,
    /// `int |omega|^2/2 Lap psi`
    pub ens_lap: f64,
}

/// Moments of `f` against the sampled cutoff `c`.
pub fn spatial_moments(f: &FlowFields, c: &SampledCutoff) -> Moments {
    let mut m = Moments::default();
    for (k, &i) in c.indices.iter().enumerate() {
        let (psi, pw, g1, g2, lap) = (c.psi[k], c.psi_pow[k], c.g1[k], c.g2[k], c.lap[k]);
        let (ke, ens) = (f.ke[i], f.ens[i]);
        m.ke_pow += ke * pw;
        m.ens_pow += ens * pw;
        m.ke += ke * psi;
        m.ens += ens * psi;
        m.pal += f.pal[i] * psi;
        m.grad_u += f.grad_u[i] * psi;
        m.flux_e += f.energy_flux[0][i] * g1 + f.energy_flux[1][i] * g2;
        m.flux_z += f.enstrophy_flux[0][i] * g1 + f.enstrophy_flux[1][i] * g2;
        m.ke_lap += ke * lap;
        m.ens_lap += ens * lap;
    }
    let da = f.grid.dx() * f.grid.dx();
    Moments {
        ke_pow: m.ke_pow * da,
        ens_pow: m.ens_pow * da,
        ke: m.ke * da,
        ens: m.ens * da,
        pal: m.pal * da,
        grad_u: m.grad_u * da,
        flux_e: m.flux_e * da,
        flux_z: m.flux_z * da,
        ke_lap: m.ke_lap * da,
        ens_lap: m.ens_lap * da,
    }
}

/// Moments of every cutoff at every snapshot, indexed `[cutoff][snapshot]`.
/// The cutoffs must be sampled on `grid`, the analysis grid.
/// Derived fields are computed once per snapshot; cutoffs run in parallel.
pub fn moment_table(traj: &Trajectory, grid: &Grid2D, cutoffs: &[&SampledCutoff]) -> Result<Vec<Vec<Moments>>> {
    let mut table = vec![Vec::with_capacity(traj.snapshots.len()); cutoffs.len()];
    for snap in &traj.snapshots {
        let fields = FlowFields::on_grid(snap, grid)?;
        let row: Vec<Moments> = cutoffs.par_iter().map(|c| spatial_moments(&fields, c)).collect();
        for (col, m) in table.iter_mut().zip(row) {
            col.push(m);
        }
    }
    Ok(table)
}

/// Indicator of the open disk `B(0, R0)` as a sampled cutoff with zero derivatives.
pub fn disk_indicator(frame: &Frame) -> SampledCutoff {
    let n = frame.grid.n();
    let mut out = SampledCutoff::default();
    for i1 in 0..n {
        for i2 in 0..n {
            let d = frame.displacement(i1, i2, [0.0, 0.0]);
            if d[0].hypot(d[1]) < frame.r0 {
                out.indices.push(i1 * n + i2);
                out.psi.push(1.0);
                out.psi_pow.push(1.0);
                out.g1.push(0.0);
                out.g2.push(0.0);
                out.lap.push(0.0);
            }
        }
    }
    out
}

fn pow_or_zero(x: f64, p: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x.powf(p)
    }
}

/// Trapezoid weights over the snapshot times (divided by `T`) and the time cutoff
/// sampled at those times.
#[derive(Debug, Clone)]
pub struct TimeWeights {
    pub times: Vec<f64>,
    pub quad: Vec<f64>,
    pub eta: Vec<f64>,
    pub eta_pow: Vec<f64>,
    pub deta: Vec<f64>,
}

impl TimeWeights {
    /// Requires snapshots covering `[0, 2T]`.
    pub fn new(times: &[f64], tc: &TimeCutoff) -> Result<Self> {
        let big_t = tc.horizon;
        check_horizon(times, big_t)?;
        let quad = trapezoid_weights(times, big_t);
        let mut eta = Vec::with_capacity(times.len());
        let mut deta = Vec::with_capacity(times.len());
        for &t in times {
            let (e, d) = tc.eval(t);
            eta.push(e);
            deta.push(d);
        }
        let eta_pow = eta.iter().map(|&e| pow_or_zero(e, 2.0 * tc.delta - 1.0)).collect();
        Ok(Self { times: times.to_vec(), quad, eta, eta_pow, deta })
    }

    /// Number of snapshots inside `[0, 2T]`.
    pub fn samples_in_horizon(&self, horizon: f64) -> usize {
        self.times.iter().filter(|&&t| t <= 2.0 * horizon * (1.0 + 1e-12)).count()
    }
}

fn check_horizon(times: &[f64], horizon: f64) -> Result<()> {
    if times.len() < 2 {
        return Err(Error::Horizon(format!("need at least two snapshots, got {}", times.len())));
    }
    let last = *times.last().unwrap_or(&0.0);
    if times[0] > 1e-12 || last < 2.0 * horizon * (1.0 - 1e-9) {
        return Err(Error::Horizon(format!(
            "snapshots span [{}, {last}] but averaging needs [0, 2T] = [0, {}]",
            times[0],
            2.0 * horizon
        )));
    }
    Ok(())
}

fn trapezoid_weights(times: &[f64], horizon: f64) -> Vec<f64> {
    let n = times.len();
    (0..n)
        .map(|k| {
            let left = if k > 0 { times[k] - times[k - 1] } else { 0.0 };
            let right = if k + 1 < n { times[k + 1] - times[k] } else { 0.0 };
            0.5 * (left + right) / horizon
        })
        .collect()
}

/// Time average `(1/T) int_0^{2T} v dt` of an already weighted series by the trapezoid rule.
pub fn time_average(series: &[f64], times: &[f64], horizon: f64) -> Result<f64> {
    if series.len() != times.len() {
        return Err(Error::LengthMismatch { expected: times.len(), got: series.len() });
    }
    check_horizon(times, horizon)?;
    let w = trapezoid_weights(times, horizon);
    Ok(series.iter().zip(&w).map(|(v, w)| v * w).sum())
}

/// Time-averaged localized quantities of one cutoff (not area-normalized).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ElementAverages {
    /// `(1/T) iint |u|^2/2 phi^{2 delta - 1}`
    pub e: f64,
    /// `(1/T) iint |omega|^2/2 phi^{2 delta - 1}`
    #[serde(rename = "E")]
    pub big_e: f64,
    /// `(1/T) iint |omega|^2/2 phi`
    #[serde(rename = "E_prime")]
    pub e_prime: f64,
    /// `(1/T) iint |grad omega|^2 phi`
    #[serde(rename = "P")]
    pub p: f64,
    /// `(1/T) iint |grad u|^2 phi`
    #[serde(rename = "G")]
    pub g: f64,
    /// `(1/T) iint (|u|^2/2 + p) u . grad phi`
    #[serde(rename = "Phi")]
    pub phi: f64,
    /// `(1/T) iint |omega|^2/2 u . grad phi`
    #[serde(rename = "Psi")]
    pub psi: f64,
    /// `(1/T) iint |u|^2/2 phi`
    pub e_eta: f64,
    /// `(1/T) iint |u|^2/2 d_t phi`
    pub ke_dt: f64,
    /// `(1/T) iint |omega|^2/2 d_t phi`
    pub ens_dt: f64,
    /// `(1/T) iint |u|^2/2 Lap phi`
    pub ke_lap: f64,
    /// `(1/T) iint |omega|^2/2 Lap phi`
    pub ens_lap: f64,
}

impl ElementAverages {
    pub fn from_moments(m: &[Moments], w: &TimeWeights) -> Self {
        let mut a = ElementAverages::default();
        for (k, m) in m.iter().enumerate() {
            let (q, eta, ep, de) = (w.quad[k], w.eta[k], w.eta_pow[k], w.deta[k]);
            a.e += q * ep * m.ke_pow;
            a.big_e += q * ep * m.ens_pow;
            a.e_prime += q * eta * m.ens;
            a.p += q * eta * m.pal;
            a.g += q * eta * m.grad_u;
            a.phi += q * eta * m.flux_e;
            a.psi += q * eta * m.flux_z;
            a.e_eta += q * eta * m.ke;
            a.ke_dt += q * de * m.ke;
            a.ens_dt += q * de * m.ens;
            a.ke_lap += q * eta * m.ke_lap;
            a.ens_lap += q * eta * m.ens_lap;
        }
        a
    }

    /// Mean of a set of element averages, each divided by `area`.
    pub fn mean(items: &[ElementAverages], area: f64) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::Missing("empty set of elements".into()));
        }
        let w = 1.0 / (items.len() as f64 * area);
        Ok(Self::weighted_sum(items, &vec![w; items.len()]))
    }

    /// `sum_i w_i a_i`, accumulated in order.
    pub fn weighted_sum(items: &[ElementAverages], weights: &[f64]) -> Self {
        let mut s = ElementAverages::default();
        for (a, &w) in items.iter().zip(weights) {
            s.e += w * a.e;
            s.big_e += w * a.big_e;
            s.e_prime += w * a.e_prime;
            s.p += w * a.p;
            s.g += w * a.g;
            s.phi += w * a.phi;
            s.psi += w * a.psi;
            s.e_eta += w * a.e_eta;
            s.ke_dt += w * a.ke_dt;
            s.ens_dt += w * a.ens_dt;
            s.ke_lap += w * a.ke_lap;
            s.ens_lap += w * a.ens_lap;
        }
        s
    }
}

/// Per-snapshot localized quantities of one cutoff, `eta`-weighted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizedQuantities {
    pub times: Vec<f64>,
    pub e: Vec<f64>,
    #[serde(rename = "E")]
    pub big_e: Vec<f64>,
    #[serde(rename = "E_prime")]
    pub e_prime: Vec<f64>,
    #[serde(rename = "P")]
    pub p: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FluxKind {
    Energy,
    Enstrophy,
}

/// Per-snapshot flux `int F . grad phi` of one cutoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxSeries {
    pub kind: FluxKind,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

fn single_cutoff(traj: &Trajectory, c: &Cutoff) -> Result<(Vec<Moments>, Vec<f64>, Vec<f64>)> {
    let s = c.sample();
    let m = moment_table(traj, &c.frame.grid, &[&s])?.pop().unwrap_or_default();
    let times = traj.times();
    let eta = times.iter().map(|&t| c.time().eval(t).0).collect();
    Ok((m, times, eta))
}

/// `e, E, E', P` of one cutoff at every snapshot.
pub fn local_quantities(traj: &Trajectory, c: &Cutoff) -> Result<LocalizedQuantities> {
    let (m, times, eta) = single_cutoff(traj, c)?;
    let pw = 2.0 * c.frame.delta - 1.0;
    let ep: Vec<f64> = eta.iter().map(|&e| pow_or_zero(e, pw)).collect();
    Ok(LocalizedQuantities {
        e: m.iter().zip(&ep).map(|(m, w)| m.ke_pow * w).collect(),
        big_e: m.iter().zip(&ep).map(|(m, w)| m.ens_pow * w).collect(),
        e_prime: m.iter().zip(&eta).map(|(m, w)| m.ens * w).collect(),
        p: m.iter().zip(&eta).map(|(m, w)| m.pal * w).collect(),
        times,
    })
}

/// Energy flux `int (|u|^2/2 + p) u . grad phi` at every snapshot.
pub fn flux_energy(traj: &Trajectory, c: &Cutoff) -> Result<FluxSeries> {
    let (m, times, eta) = single_cutoff(traj, c)?;
    let values = m.iter().zip(&eta).map(|(m, e)| m.flux_e * e).collect();
    Ok(FluxSeries { kind: FluxKind::Energy, times, values })
}

/// Enstrophy flux `int |omega|^2/2 u . grad phi` at every snapshot.
pub fn flux_enstrophy(traj: &Trajectory, c: &Cutoff) -> Result<FluxSeries> {
    let (m, times, eta) = single_cutoff(traj, c)?;
    let values = m.iter().zip(&eta).map(|(m, e)| m.flux_z * e).collect();
    Ok(FluxSeries { kind: FluxKind::Enstrophy, times, values })
}

/// Ensemble average `(1/n) sum_i v_i / R^2`.
pub fn ensemble_average(values: &[f64], r: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Missing("empty covering".into()));
    }
    Ok(values.iter().sum::<f64>() / (values.len() as f64 * r * r))
}

/// Uniform average `(1/R0^2) int_{B(0,R0)} v(y) / R^2 dy` from values at
/// lattice nodes of spacing `h`.
pub fn uniform_average(values: &[f64], h: f64, r0: f64, r: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Missing("empty set of uniform centers".into()));
    }
    Ok(values.iter().sum::<f64>() * h * h / (r0 * r0 * r * r))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Balance {
    Energy,
    Enstrophy,
}

/// Terms of a space-time integrated local balance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalanceResidual {
    /// `nu iint |grad u|^2 phi` or `nu iint |grad omega|^2 phi`, divided by `T`
    pub dissipation: f64,
    pub time_term: f64,
    pub diffusion_term: f64,
    pub flux_term: f64,
    /// `|lhs - rhs| / max |term|`, zero when every term vanishes.
    pub relative: f64,
}

impl BalanceResidual {
    pub fn from_averages(a: &ElementAverages, nu: f64, which: Balance) -> Self {
        let (diss, dt, lap, flux) = match which {
            Balance::Energy => (nu * a.g, a.ke_dt, nu * a.ke_lap, a.phi),
            Balance::Enstrophy => (nu * a.p, a.ens_dt, nu * a.ens_lap, a.psi),
        };
        let scale = diss.abs().max(dt.abs()).max(lap.abs()).max(flux.abs());
        let relative = if scale > 0.0 { (diss - dt - lap - flux).abs() / scale } else { 0.0 };
        Self { dissipation: diss, time_term: dt, diffusion_term: lap, flux_term: flux, relative }
    }
}

/// Residual of the local energy or enstrophy balance integrated over `[0, 2T]`.
pub fn balance_residual(traj: &Trajectory, c: &Cutoff, which: Balance) -> Result<BalanceResidual> {
    let (m, times, _) = single_cutoff(traj, c)?;
    let w = TimeWeights::new(&times, c.time())?;
    Ok(BalanceResidual::from_averages(&ElementAverages::from_moments(&m, &w), traj.config.nu, which))
}

/// `sqrt(num / den)`, or an undefined-scale error.
pub fn length_scale(name: &str, num: f64, den: f64) -> Result<f64> {
    if !(den > 0.0) || !(num >= 0.0) || !num.is_finite() || !den.is_finite() {
        return Err(Error::UndefinedScale(format!("{name}: sqrt({num} / {den})")));
    }
    Ok((num / den).sqrt())
}

fn scale_opt(num: f64, den: f64) -> Option<f64> {
    length_scale("", num, den).ok()
}

// ---------------------------------------------------------------------------
// Full analysis
// ---------------------------------------------------------------------------

/// Shell `A(x0, R1, R2)` given relative to the disk center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShellSpec {
    pub x0: [f64; 2],
    #[serde(rename = "R1")]
    pub r1: f64,
    #[serde(rename = "R2")]
    pub r2: f64,
}

/// What to compute on a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    #[serde(rename = "R0")]
    pub r0: f64,
    pub delta: f64,
    /// Averaging horizon `T`; snapshots must cover `[0, 2T]`.
    #[serde(rename = "T")]
    pub horizon: f64,
    pub boundary_mode: BoundaryMode,
    /// Ball radii `R` for the ensemble averages.
    #[serde(rename = "R_list")]
    pub r_list: Vec<f64>,
    /// Individual shells for the single-shell locality bound.
    pub shells: Vec<ShellSpec>,
    /// Dyadic exponents `k` for the locality ratios.
    pub k_list: Vec<i32>,
    /// Radii `R0 < R < D/2` for the outer cutoffs.
    #[serde(rename = "outer_R_list")]
    pub outer_r_list: Vec<f64>,
    /// Compute uniform averages over centers in `B(0, R0)`.
    pub uniform: bool,
    /// Lattice spacing of uniform centers as a fraction of `R`.
    pub uniform_spacing: f64,
    /// Also compute plain-mode ball and shell families.
    pub plain_check: bool,
    /// Lattice refinement used when measuring `C0` of covering elements.
    pub c0_refine: usize,
    /// Analysis grid refinement over the simulation grid (power of two).
    /// Snapshots are interpolated spectrally so that narrow cutoffs are resolved.
    pub oversample: usize,
}

impl AnalysisConfig {
    /// Defaults for a disk of radius `r0` and horizon `t`.
    pub fn new(r0: f64, horizon: f64) -> Self {
        Self {
            r0,
            delta: 0.75,
            horizon,
            boundary_mode: BoundaryMode::Cone,
            r_list: vec![r0, r0 / 2.0, r0 / 4.0],
            shells: vec![ShellSpec { x0: [0.0, 0.0], r1: r0 / 2.0, r2: r0 / 4.0 }],
            k_list: vec![-3, -2, -1, 0],
            outer_r_list: Vec::new(),
            uniform: true,
            uniform_spacing: 0.25,
            plain_check: true,
            c0_refine: 8,
            oversample: 2,
        }
    }

    /// Builds the analysis frame on `grid`.
    pub fn frame(&self, grid: &Grid2D) -> Result<Frame> {
        let tc = make_time_cutoff(self.horizon, self.delta)?;
        Frame::new(*grid, self.r0, tc)
    }
}

/// Constants measured over a family of cutoffs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FamilyConstants {
    #[serde(rename = "C0_grad")]
    pub c0_grad: f64,
    #[serde(rename = "C0_lap")]
    pub c0_lap: f64,
    /// Maximal number of element supports meeting at one grid point.
    pub support_multiplicity: usize,
}

/// One element row of the output tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementRow {
    pub index: usize,
    pub x0: [f64; 2],
    pub averages: ElementAverages,
}

/// Ensemble results for a covering family at one radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyResult {
    pub label: String,
    pub boundary_mode: BoundaryMode,
    #[serde(rename = "R")]
    pub r: f64,
    pub covering: Covering,
    pub constants: FamilyConstants,
    /// Ensemble average; ball families divide by `R^2`, shell and outer
    /// families report the area-unnormalized mean.
    pub average: ElementAverages,
    /// Uniform average over centers in `B(0, R0)`, same normalization.
    pub uniform: Option<ElementAverages>,
    pub uniform_centers: usize,
    pub elements: Vec<ElementRow>,
}

/// Results for one individually specified shell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellResult {
    pub shell: ShellSpec,
    #[serde(rename = "R_tilde")]
    pub r_tilde: f64,
    #[serde(rename = "C0_grad")]
    pub c0_grad: f64,
    #[serde(rename = "C0_lap")]
    pub c0_lap: f64,
    pub averages: ElementAverages,
    /// `Psi` of the outer and inner balls whose difference defines the shell.
    pub psi_outer_ball: f64,
    pub psi_inner_ball: f64,
    pub sigma: Option<f64>,
    pub tau: Option<f64>,
}

/// Global averages on `B(0, R0)` and on the whole box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalAverages {
    pub e0: f64,
    #[serde(rename = "E0")]
    pub big_e0: f64,
    #[serde(rename = "E_prime0")]
    pub e_prime0: f64,
    #[serde(rename = "P0")]
    pub p0: f64,
    /// `(1/(T R0^2)) iint |grad u|^2 phi0`
    #[serde(rename = "G0")]
    pub g0: f64,
    /// Non-localized palinstrophy `(1/(T R0^2)) iint_{B(0,R0)} |grad omega|^2 eta`.
    #[serde(rename = "P_prime")]
    pub p_prime: f64,
    /// Whole-box `e = (1/T) iint |u|^2/2 eta`.
    pub e_box: f64,
    /// Whole-box `(1/T) iint |u|^2/2 eta^{2 delta - 1}`.
    pub e_box_pow: f64,
    /// Whole-box `E = (1/T) iint |grad u|^2 eta`.
    #[serde(rename = "E_box")]
    pub big_e_box: f64,
    /// Averages of the disk cutoff itself (unnormalized).
    pub domain: ElementAverages,
}

/// Length scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scales {
    /// `sqrt(e0 / E'0)`
    pub tau0: Option<f64>,
    /// `sqrt(E0 / P0)`
    pub sigma0: Option<f64>,
    /// Box Taylor scale `sqrt(e / E)`.
    pub tau: Option<f64>,
    /// Box Taylor scale with `eta^{2 delta - 1}` in the energy.
    pub tau_pow: Option<f64>,
}

impl Scales {
    pub fn from_globals(g: &GlobalAverages) -> Self {
        Self {
            tau0: scale_opt(g.e0, g.e_prime0),
            sigma0: scale_opt(g.big_e0, g.p0),
            tau: scale_opt(g.e_box, g.big_e_box),
            tau_pow: scale_opt(g.e_box_pow, g.big_e_box),
        }
    }
}

/// Everything the verdicts consume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub config: AnalysisConfig,
    pub nu: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub n_grid: usize,
    pub n_analysis: usize,
    /// Box-scale parameter `D = L / sqrt 2`.
    #[serde(rename = "D")]
    pub d_domain: f64,
    pub time_cutoff: TimeCutoff,
    pub samples_in_horizon: usize,
    pub global: GlobalAverages,
    pub scales: Scales,
    pub balls: Vec<FamilyResult>,
    pub plain_balls: Vec<FamilyResult>,
    pub shell_families: Vec<FamilyResult>,
    pub plain_shell_families: Vec<FamilyResult>,
    pub shells: Vec<ShellResult>,
    pub outer: Vec<FamilyResult>,
    pub free_shells: Vec<FamilyResult>,
    /// Families that could not be built on this grid, with the reason.
    pub skipped: Vec<String>,
    pub notes: Vec<String>,
}

/// Normalization conventions reported with every analysis.
pub const NORMALIZATION_NOTES: [&str; 5] = [
    "all ball averages use 1/(T R^2) and all disk averages 1/(T R0^2), including palinstrophy",
    "box Taylor scale is sqrt(e/E), consistent with tau <= gamma R0 being equivalent to e <= gamma^2 R0^2 E",
    "shell ensemble enstrophy flux sums enstrophy fluxes",
    "outer-pair and shell families report area-unnormalized means (1/n) sum_i",
    "free shells for the inverse-cascade shell bound are centered at the outer-pair centers without disk cutoff",
];

struct Family {
    label: String,
    mode: BoundaryMode,
    r: f64,
    covering: Covering,
    area: f64,
    cutoffs: Vec<Cutoff>,
    uniform: Vec<Cutoff>,
    uniform_h: f64,
    constants: FamilyConstants,
}

fn support_multiplicity(grid: &Grid2D, sampled: &[SampledCutoff]) -> usize {
    let mut count = vec![0usize; grid.len()];
    for s in sampled {
        for &i in &s.indices {
            count[i] += 1;
        }
    }
    count.into_iter().max().unwrap_or(0)
}

fn family_constants(cutoffs: &[Cutoff], refine: usize) -> (f64, f64) {
    let c0: Vec<_> = cutoffs.par_iter().map(|c| c.measure_c0(refine)).collect();
    c0.iter().fold((0.0f64, 0.0f64), |(g, l), c| (g.max(c.grad_ratio), l.max(c.lap_ratio)))
}

/// `C0 = C_time + max C_lap` over the outer cutoffs that `analyze` would build
/// for a simulation on `sim`, or `None` when no outer radius is admissible.
/// Needs no trajectory, so hypothesis guards can run before simulating.
pub fn outer_c0(cfg: &AnalysisConfig, sim: &Grid2D) -> Result<Option<f64>> {
    let grid = Grid2D::new(sim.n() * cfg.oversample.max(1), sim.l())?;
    let frame = cfg.frame(&grid)?;
    let mut lap: Option<f64> = None;
    for &r in &cfg.outer_r_list {
        let Ok(pair) = make_outer_pair(frame.domain_scale(), r, cfg.r0) else { continue };
        let cutoffs: Vec<Cutoff> =
            pair.centers.iter().map(|&x| make_outer_cutoff(&frame, x, r)).collect::<Result<_>>()?;
        let (_, l) = family_constants(&cutoffs, cfg.c0_refine);
        lap = Some(lap.map_or(l, |m: f64| m.max(l)));
    }
    Ok(lap.map(|l| frame.time.c_time + l))
}

/// Runs the complete localized analysis of `traj`.
pub fn analyze(traj: &Trajectory, cfg: &AnalysisConfig) -> Result<AnalysisReport> {
    let sim = *traj.grid();
    if cfg.oversample == 0 || !cfg.oversample.is_power_of_two() {
        return Err(Error::Config(format!("oversample must be a power of two, got {}", cfg.oversample)));
    }
    let grid = Grid2D::new(sim.n() * cfg.oversample, sim.l())?;
    let frame = cfg.frame(&grid)?;
    let tc = frame.time;
    let weights = TimeWeights::new(&traj.times(), &tc)?;
    let d_domain = frame.domain_scale();
    let mut skipped = Vec::new();
    let mut families: Vec<Family> = Vec::new();

    let add_ball = |mode: BoundaryMode, r: f64, uniform: bool, skipped: &mut Vec<String>| -> Result<Option<Family>> {
        let covering = make_ball_covering(cfg.r0, r)?;
        let cutoffs: Result<Vec<Cutoff>> =
            covering.centers.iter().map(|&x| make_ball_cutoff(&frame, x, r, mode)).collect();
        let cutoffs = match cutoffs {
            Ok(c) => c,
            Err(e) => {
                skipped.push(format!("ball family R = {r} ({mode:?}): {e}"));
                return Ok(None);
            }
        };
        let h = cfg.uniform_spacing * r;
        let uniform = if uniform {
            uniform_centers(cfg.r0, h).into_iter().map(|y| make_ball_cutoff(&frame, y, r, mode)).collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        Ok(Some(Family {
            label: "ball".into(),
            mode,
            r,
            covering,
            area: r * r,
            cutoffs,
            uniform,
            uniform_h: h,
            constants: FamilyConstants::default(),
        }))
    };

    let mut balls_idx = Vec::new();
    let mut plain_balls_idx = Vec::new();
    for &r in &cfg.r_list {
        if let Some(f) = add_ball(cfg.boundary_mode, r, cfg.uniform, &mut skipped)? {
            balls_idx.push(families.len());
            families.push(f);
        }
        if cfg.plain_check && cfg.boundary_mode != BoundaryMode::Plain {
            if let Some(mut f) = add_ball(BoundaryMode::Plain, r, false, &mut skipped)? {
                f.label = "ball-plain".into();
                plain_balls_idx.push(families.len());
                families.push(f);
            }
        }
    }

    // shell radii: tested R plus the dyadic partners 2^k R
    let mut shell_radii: Vec<f64> = Vec::new();
    for &r in &cfg.r_list {
        let mut cands = vec![r];
        cands.extend(cfg.k_list.iter().map(|&k| r * 2f64.powi(k)));
        for c in cands {
            if !shell_radii.iter().any(|&s| (s - c).abs() <= 1e-12 * c) {
                shell_radii.push(c);
            }
        }
    }
    shell_radii.sort_by(|a, b| b.total_cmp(a));
    let add_shell = |mode: BoundaryMode, r: f64, uniform: bool, skipped: &mut Vec<String>| -> Option<Family> {
        let covering = match make_shell_covering(cfg.r0, r) {
            Ok(c) => c,
            Err(e) => {
                skipped.push(format!("shell family R = {r} ({mode:?}): {e}"));
                return None;
            }
        };
        let cutoffs: Result<Vec<Cutoff>> =
            covering.centers.iter().map(|&x| make_shell_cutoff(&frame, x, 2.0 * r, r, mode)).collect();
        let cutoffs = match cutoffs {
            Ok(c) => c,
            Err(e) => {
                skipped.push(format!("shell family R = {r} ({mode:?}): {e}"));
                return None;
            }
        };
        let h = cfg.uniform_spacing * r;
        let uniform = if uniform {
            uniform_centers(cfg.r0, h)
                .into_iter()
                .filter_map(|y| make_shell_cutoff(&frame, y, 2.0 * r, r, mode).ok())
                .collect()
        } else {
            Vec::new()
        };
        Some(Family {
            label: "shell".into(),
            mode,
            r,
            covering,
            area: 1.0,
            cutoffs,
            uniform,
            uniform_h: h,
            constants: FamilyConstants::default(),
        })
    };
    let mut shells_idx = Vec::new();
    let mut plain_shells_idx = Vec::new();
    for &r in &shell_radii {
        if let Some(f) = add_shell(cfg.boundary_mode, r, cfg.uniform, &mut skipped) {
            shells_idx.push(families.len());
            families.push(f);
        }
        if cfg.plain_check && cfg.boundary_mode != BoundaryMode::Plain {
            if let Some(mut f) = add_shell(BoundaryMode::Plain, r, false, &mut skipped) {
                f.label = "shell-plain".into();
                plain_shells_idx.push(families.len());
                families.push(f);
            }
        }
    }

    let mut outer_idx = Vec::new();
    let mut free_idx = Vec::new();
    for &r in &cfg.outer_r_list {
        let pair = match make_outer_pair(d_domain, r, cfg.r0) {
            Ok(p) => p,
            Err(e) => {
                skipped.push(format!("outer pair R = {r}: {e}"));
                continue;
            }
        };
        let cutoffs: Vec<Cutoff> =
            pair.centers.iter().map(|&x| make_outer_cutoff(&frame, x, r)).collect::<Result<_>>()?;
        outer_idx.push(families.len());
        families.push(Family {
            label: "outer".into(),
            mode: BoundaryMode::Plain,
            r,
            covering: pair.clone(),
            area: 1.0,
            cutoffs,
            uniform: Vec::new(),
            uniform_h: 0.0,
            constants: FamilyConstants::default(),
        });
        let free: Result<Vec<Cutoff>> =
            pair.centers.iter().map(|&x| make_free_shell_cutoff(&frame, x, 2.0 * r, r)).collect();
        match free {
            Ok(cutoffs) => {
                free_idx.push(families.len());
                families.push(Family {
                    label: "free-shell".into(),
                    mode: BoundaryMode::Plain,
                    r,
                    covering: pair,
                    area: 1.0,
                    cutoffs,
                    uniform: Vec::new(),
                    uniform_h: 0.0,
                    constants: FamilyConstants::default(),
                });
            }
            Err(e) => skipped.push(format!("free shell R = {r}: {e}")),
        }
    }

    let mut shell_cutoffs = Vec::new();
    for s in &cfg.shells {
        match make_shell_cutoff(&frame, s.x0, s.r1, s.r2, cfg.boundary_mode) {
            Ok(c) => {
                let outer = make_ball_cutoff(&frame, s.x0, s.r1, cfg.boundary_mode)?;
                let inner = make_ball_cutoff(&frame, s.x0, s.r2 / 2.0, cfg.boundary_mode)?;
                shell_cutoffs.push((*s, c, outer, inner));
            }
            Err(e) => skipped.push(format!("shell {s:?}: {e}")),
        }
    }

    // sample every cutoff once, then a single pass over the snapshots
    let domain = make_domain_cutoff(&frame);
    let whole = make_whole_box_cutoff(&frame);
    let mut all: Vec<&Cutoff> = vec![&domain, &whole];
    for f in &families {
        all.extend(f.cutoffs.iter());
        all.extend(f.uniform.iter());
    }
    for (_, c, o, i) in &shell_cutoffs {
        all.extend([c, o, i]);
    }
    let mut sampled: Vec<SampledCutoff> = all.par_iter().map(|c| c.sample()).collect();
    sampled.push(disk_indicator(&frame));
    let refs: Vec<&SampledCutoff> = sampled.iter().collect();
    let table = moment_table(traj, &grid, &refs)?;
    let averages: Vec<ElementAverages> = table.iter().map(|m| ElementAverages::from_moments(m, &weights)).collect();

    let r0sq = cfg.r0 * cfg.r0;
    let dom = averages[0];
    let wb = averages[1];
    let ind = averages[averages.len() - 1];
    let global = GlobalAverages {
        e0: dom.e / r0sq,
        big_e0: dom.big_e / r0sq,
        e_prime0: dom.e_prime / r0sq,
        p0: dom.p / r0sq,
        g0: dom.g / r0sq,
        p_prime: ind.p / r0sq,
        e_box: wb.e_eta,
        e_box_pow: wb.e,
        big_e_box: wb.g,
        domain: dom,
    };

    let mut cursor = 2;
    let mut results = Vec::with_capacity(families.len());
    for f in &mut families {
        let n = f.cutoffs.len();
        let m = f.uniform.len();
        let elem = &averages[cursor..cursor + n];
        let uni = &averages[cursor + n..cursor + n + m];
        let (g, l) = family_constants(&f.cutoffs, cfg.c0_refine);
        f.constants = FamilyConstants {
            c0_grad: g,
            c0_lap: l,
            support_multiplicity: support_multiplicity(&grid, &sampled[cursor..cursor + n]),
        };
        if m > 0 {
            let (ug, ul) = sampled[cursor + n..cursor + n + m]
                .iter()
                .fold((0.0f64, 0.0f64), |(a, b), s| (a.max(s.c0.grad_ratio), b.max(s.c0.lap_ratio)));
            f.constants.c0_grad = f.constants.c0_grad.max(ug);
            f.constants.c0_lap = f.constants.c0_lap.max(ul);
        }
        cursor += n + m;
        let average = ElementAverages::mean(elem, f.area)?;
        let uniform = if m > 0 {
            let w = f.uniform_h * f.uniform_h / (r0sq * f.area);
            Some(ElementAverages::weighted_sum(uni, &vec![w; m]))
        } else {
            None
        };
        let elements = elem
            .iter()
            .zip(&f.cutoffs)
            .enumerate()
            .map(|(index, (a, c))| ElementRow { index, x0: c.x0, averages: *a })
            .collect();
        results.push(FamilyResult {
            label: f.label.clone(),
            boundary_mode: f.mode,
            r: f.r,
            covering: f.covering.clone(),
            constants: f.constants,
            average,
            uniform,
            uniform_centers: m,
            elements,
        });
    }
    let mut shells = Vec::new();
    for (s, c, _, _) in &shell_cutoffs {
        let a = averages[cursor];
        let psi_outer_ball = averages[cursor + 1].psi;
        let psi_inner_ball = averages[cursor + 2].psi;
        cursor += 3;
        let c0 = c.measure_c0(cfg.c0_refine);
        shells.push(ShellResult {
            shell: *s,
            r_tilde: c.scale(),
            c0_grad: c0.grad_ratio,
            c0_lap: c0.lap_ratio,
            averages: a,
            psi_outer_ball,
            psi_inner_ball,
            sigma: scale_opt(a.big_e, a.p),
            tau: scale_opt(a.e, a.e_prime),
        });
    }

    let pick = |idx: &[usize]| idx.iter().map(|&i| results[i].clone()).collect::<Vec<_>>();
    let mut notes: Vec<String> = NORMALIZATION_NOTES.iter().map(|s| s.to_string()).collect();
    let samples = weights.samples_in_horizon(cfg.horizon);
    if samples < 200 {
        notes.push(format!("only {samples} snapshots in [0, 2T]; at least 200 are recommended"));
    }
    Ok(AnalysisReport {
        config: cfg.clone(),
        nu: traj.config.nu,
        l: grid.l(),
        n_grid: sim.n(),
        n_analysis: grid.n(),
        d_domain,
        time_cutoff: tc,
        samples_in_horizon: samples,
        scales: Scales::from_globals(&global),
        global,
        balls: pick(&balls_idx),
        plain_balls: pick(&plain_balls_idx),
        shell_families: pick(&shells_idx),
        plain_shell_families: pick(&plain_shells_idx),
        shells,
        outer: pick(&outer_idx),
        free_shells: pick(&free_idx),
        skipped,
        notes,
    })
}

/// One inequality `lower <= value <= upper` with its verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandCheck {
    pub name: String,
    #[serde(rename = "R")]
    pub r: f64,
    pub lower: f64,
    pub value: f64,
    pub upper: f64,
    pub holds: bool,
}

impl BandCheck {
    pub fn new(name: impl Into<String>, r: f64, lower: f64, value: f64, upper: f64) -> Self {
        let holds = value >= lower && value <= upper;
        Self { name: name.into(), r, lower, value, upper, holds }
    }
}

/// Comparability bands of the averaged non-negative quantities with their
/// disk counterparts, for the ensemble (measured `K1`, `K2`) and uniform (`4`, `16`) averages.
pub fn lemma_bands(rep: &AnalysisReport) -> Vec<BandCheck> {
    let g = &rep.global;
    let mut out = Vec::new();
    for f in &rep.balls {
        let k1 = f.covering.k1;
        let k2 = f.covering.k2.max(f.constants.support_multiplicity) as f64;
        let pairs = [
            ("e", f.average.e, g.e0),
            ("E", f.average.big_e, g.big_e0),
            ("E'", f.average.e_prime, g.e_prime0),
            ("P", f.average.p, g.p0),
        ];
        for (name, v, v0) in pairs {
            out.push(BandCheck::new(format!("ensemble {name}"), f.r, v0 / k1, v, k2 * v0));
        }
        if let Some(u) = &f.uniform {
            let pairs = [("e", u.e, g.e0), ("E", u.big_e, g.big_e0), ("E'", u.e_prime, g.e_prime0), ("P", u.p, g.p0)];
            for (name, v, v0) in pairs {
                out.push(BandCheck::new(format!("uniform {name}"), f.r, v0 / 4.0, v, 16.0 * v0));
            }
        }
    }
    out
}

fn csv_f(x: f64) -> String {
    format!("{x:e}")
}

/// Writes one row per (family, R, element) with the element averages.
pub fn write_elements_csv(rep: &AnalysisReport, w: &mut impl Write) -> Result<()> {
    writeln!(w, "family,mode,R,index,x0,y0,e,E,E_prime,P,G,Phi,Psi")?;
    let groups = [
        &rep.balls,
        &rep.plain_balls,
        &rep.shell_families,
        &rep.plain_shell_families,
        &rep.outer,
        &rep.free_shells,
    ];
    for fams in groups {
        for f in fams.iter() {
            for el in &f.elements {
                let a = &el.averages;
                writeln!(
                    w,
                    "{},{:?},{},{},{},{},{},{},{},{},{},{},{}",
                    f.label,
                    f.boundary_mode,
                    csv_f(f.r),
                    el.index,
                    csv_f(el.x0[0]),
                    csv_f(el.x0[1]),
                    csv_f(a.e),
                    csv_f(a.big_e),
                    csv_f(a.e_prime),
                    csv_f(a.p),
                    csv_f(a.g),
                    csv_f(a.phi),
                    csv_f(a.psi)
                )?;
            }
        }
    }
    Ok(())
}

/// Writes one row per (family, R) with ensemble and uniform averages and constants.
pub fn write_averages_csv(rep: &AnalysisReport, w: &mut impl Write) -> Result<()> {
    writeln!(w, "family,mode,average,R,n,K1,K2,C0_grad,C0_lap,e,E,E_prime,P,G,Phi,Psi")?;
    let groups = [
        &rep.balls,
        &rep.plain_balls,
        &rep.shell_families,
        &rep.plain_shell_families,
        &rep.outer,
        &rep.free_shells,
    ];
    for fams in groups {
        for f in fams.iter() {
            let mut rows = vec![("ensemble", f.average)];
            if let Some(u) = f.uniform {
                rows.push(("uniform", u));
            }
            for (kind, a) in rows {
                writeln!(
                    w,
                    "{},{:?},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    f.label,
                    f.boundary_mode,
                    kind,
                    csv_f(f.r),
                    f.covering.n,
                    csv_f(f.covering.k1),
                    f.covering.k2.max(f.constants.support_multiplicity),
                    csv_f(f.constants.c0_grad),
                    csv_f(f.constants.c0_lap),
                    csv_f(a.e),
                    csv_f(a.big_e),
                    csv_f(a.e_prime),
                    csv_f(a.p),
                    csv_f(a.g),
                    csv_f(a.phi),
                    csv_f(a.psi)
                )?;
            }
        }
    }
    Ok(())
}

/// Writes `elements.csv`, `averages.csv` and `analysis.json` into `dir`.
pub fn write_report(rep: &AnalysisReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("elements.csv"))?);
    write_elements_csv(rep, &mut f)?;
    f.flush()?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("averages.csv"))?);
    write_averages_csv(rep, &mut f)?;
    f.flush()?;
    std::fs::write(dir.join("analysis.json"), serde_json::to_string_pretty(rep)?)?;
    Ok(())
}

/// Reads `analysis.json` written by [`write_report`].
pub fn read_report(dir: &Path) -> Result<AnalysisReport> {
    let s = std::fs::read_to_string(dir.join("analysis.json"))?;
    Ok(serde_json::from_str(&s)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nse_solver::{run, synthesize_initial_vorticity, taylor_green_snapshot, InitialSpectrum, SolverConfig};
    use crate::spectral_field::{ScalarField2D, VectorField2D};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn tg_trajectory(n: usize, l: f64, nu: f64, t_end: f64, samples: usize) -> Trajectory {
        let grid = Grid2D::new(n, l).unwrap();
        let dt = t_end / samples as f64;
        let config = SolverConfig { nu, dt, n, l, t_end, sample_stride: 1, dealias: 2.0 / 3.0 };
        let snaps = (0..=samples).map(|k| taylor_green_snapshot(nu, k as f64 * dt, &grid).unwrap()).collect();
        Trajectory::from_snapshots(config, snaps).unwrap()
    }

    fn zero_trajectory(n: usize, t_end: f64, samples: usize) -> Trajectory {
        let grid = Grid2D::new(n, 2.0 * PI).unwrap();
        let dt = t_end / samples as f64;
        let config = SolverConfig { nu: 0.1, dt, n, l: 2.0 * PI, t_end, sample_stride: 1, dealias: 2.0 / 3.0 };
        let snaps = (0..=samples)
            .map(|k| Snapshot {
                t: k as f64 * dt,
                omega: ScalarField2D::zeros(grid),
                u: VectorField2D::zeros(grid),
                p: ScalarField2D::zeros(grid),
            })
            .collect();
        Trajectory::from_snapshots(config, snaps).unwrap()
    }

    fn frame_for(traj: &Trajectory, r0: f64, horizon: f64) -> Frame {
        Frame::new(*traj.grid(), r0, make_time_cutoff(horizon, 0.75).unwrap()).unwrap()
    }

    fn fine_frame(traj: &Trajectory, q: usize, r0: f64, horizon: f64) -> Frame {
        let g = Grid2D::new(traj.grid().n() * q, traj.grid().l()).unwrap();
        Frame::new(g, r0, make_time_cutoff(horizon, 0.75).unwrap()).unwrap()
    }

    #[test]
    fn taylor_green_whole_box_integrals() {
        // closed forms: pi^2, 2 pi^2, 8 pi^2 times exp(-4 nu t)
        let nu = 0.01;
        let traj = tg_trajectory(32, 2.0 * PI, nu, 2.0, 40);
        let f = frame_for(&traj, 0.7, 1.0);
        let q = local_quantities(&traj, &make_whole_box_cutoff(&f)).unwrap();
        for (k, &t) in q.times.iter().enumerate() {
            let (eta, _) = f.time.eval(t);
            let d = (-4.0 * nu * t).exp();
            assert!((q.e_prime[k] - 2.0 * PI * PI * d * eta).abs() < 1e-10);
            assert!((q.p[k] - 8.0 * PI * PI * d * eta).abs() < 1e-9);
            let ep = if eta > 0.0 { eta.powf(0.5) } else { 0.0 };
            assert!((q.e[k] - PI * PI * d * ep).abs() < 1e-10);
        }
    }

    #[test]
    fn taylor_green_box_taylor_scale_is_half() {
        let traj = tg_trajectory(32, 2.0 * PI, 0.01, 2.0, 40);
        let mut cfg = AnalysisConfig::new(0.7, 1.0);
        cfg.r_list = vec![0.7];
        cfg.shells.clear();
        cfg.uniform = false;
        cfg.plain_check = false;
        cfg.c0_refine = 1;
        let rep = analyze(&traj, &cfg).unwrap();
        assert!((rep.scales.tau.unwrap() - 0.5).abs() < 1e-12);
        // enstrophy over palinstrophy at one instant on the whole box
        let f = frame_for(&traj, 0.7, 1.0);
        let q = local_quantities(&traj, &make_whole_box_cutoff(&f)).unwrap();
        assert!(((q.e_prime[20] / q.p[20]).sqrt() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn scales_double_when_box_doubles() {
        let a = tg_trajectory(64, 2.0 * PI, 0.01, 2.0, 40);
        let b = tg_trajectory(64, 4.0 * PI, 0.04, 2.0, 40);
        let run = |t: &Trajectory, r0: f64| {
            let mut cfg = AnalysisConfig::new(r0, 1.0);
            cfg.r_list = vec![r0];
            cfg.shells.clear();
            cfg.uniform = false;
            cfg.plain_check = false;
            cfg.c0_refine = 1;
            analyze(t, &cfg).unwrap().scales
        };
        let (sa, sb) = (run(&a, 0.7), run(&b, 1.4));
        assert!((sb.tau.unwrap() / sa.tau.unwrap() - 2.0).abs() < 1e-10);
        assert!((sb.sigma0.unwrap() / sa.sigma0.unwrap() - 2.0).abs() < 1e-6);
        assert!((sb.tau0.unwrap() / sa.tau0.unwrap() - 2.0).abs() < 1e-6);
    }

    #[test]
    fn zero_flow_gives_zero_everything() {
        let traj = zero_trajectory(64, 2.0, 20);
        let f = frame_for(&traj, 0.7, 1.0);
        let c = make_ball_cutoff(&f, [0.1, 0.0], 0.35, BoundaryMode::Cone).unwrap();
        let q = local_quantities(&traj, &c).unwrap();
        assert!(q.e.iter().chain(&q.big_e).chain(&q.p).all(|v| *v == 0.0));
        assert!(flux_energy(&traj, &c).unwrap().values.iter().all(|v| *v == 0.0));
        assert!(flux_enstrophy(&traj, &c).unwrap().values.iter().all(|v| *v == 0.0));
        assert_eq!(balance_residual(&traj, &c, Balance::Energy).unwrap().relative, 0.0);
        let mut cfg = AnalysisConfig::new(0.7, 1.0);
        cfg.r_list = vec![0.7];
        cfg.c0_refine = 1;
        let rep = analyze(&traj, &cfg).unwrap();
        assert_eq!(rep.global.e0, 0.0);
        assert!(rep.scales.sigma0.is_none() && rep.scales.tau.is_none());
    }

    #[test]
    fn rigid_rotation_has_no_radial_flux() {
        let grid = Grid2D::new(64, 2.0 * PI).unwrap();
        let c = PI;
        let u = VectorField2D::from_fn(grid, |x, y| [-(y - c), x - c]).unwrap();
        let omega = ScalarField2D::from_fn(grid, |_, _| 2.0).unwrap();
        let p = ScalarField2D::zeros(grid);
        let fields = FlowFields::from_snapshot(&Snapshot { t: 0.0, omega, u, p }).unwrap();
        let f = Frame::new(grid, 0.7, make_time_cutoff(1.0, 0.75).unwrap()).unwrap();
        let ball = make_ball_cutoff(&f, [0.0, 0.0], 0.5, BoundaryMode::Cone).unwrap().sample();
        let m = spatial_moments(&fields, &ball);
        assert!(m.flux_z.abs() < 1e-12 * m.ens.abs());
    }

    #[test]
    fn taylor_green_balances_close() {
        let nu = 0.01;
        let traj = tg_trajectory(64, 2.0 * PI, nu, 2.0, 200);
        let f = fine_frame(&traj, 4, 0.9, 1.0);
        for (x0, r) in [([0.0, 0.0], 0.45), ([0.3, -0.2], 0.5), ([0.3, 0.3], 0.4)] {
            let c = make_ball_cutoff(&f, x0, r, BoundaryMode::Cone).unwrap();
            for which in [Balance::Energy, Balance::Enstrophy] {
                let res = balance_residual(&traj, &c, which).unwrap();
                assert!(res.relative <= 1e-3, "{x0:?} {which:?}: {res:?}");
            }
        }
    }

    #[test]
    fn shell_flux_is_difference_of_ball_fluxes() {
        let grid = Grid2D::new(64, 2.0 * PI).unwrap();
        let spec = InitialSpectrum { k_peak: 6.0, bandwidth: 2.0, amplitude: 3.0, seed: 11 };
        let w0 = synthesize_initial_vorticity(&spec, &grid).unwrap();
        let config = SolverConfig { nu: 0.02, dt: 0.005, n: 64, l: 2.0 * PI, t_end: 0.5, sample_stride: 5, dealias: 2.0 / 3.0 };
        let traj = run(&config, &w0).unwrap();
        let f = frame_for(&traj, 0.9, 0.25);
        let shell = make_shell_cutoff(&f, [0.1, 0.2], 0.6, 0.4, BoundaryMode::Cone).unwrap();
        let outer = make_ball_cutoff(&f, [0.1, 0.2], 0.6, BoundaryMode::Cone).unwrap();
        let inner = make_ball_cutoff(&f, [0.1, 0.2], 0.2, BoundaryMode::Cone).unwrap();
        let s = flux_enstrophy(&traj, &shell).unwrap().values;
        let o = flux_enstrophy(&traj, &outer).unwrap().values;
        let i = flux_enstrophy(&traj, &inner).unwrap().values;
        let scale = o.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for k in 0..s.len() {
            assert!((s[k] - (o[k] - i[k])).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn time_average_of_weighted_constant() {
        // oracle: composite Simpson of eta on a fine grid
        let tc = make_time_cutoff(2.0, 0.75).unwrap();
        let times: Vec<f64> = (0..=4000).map(|k| k as f64 * 4.0 / 4000.0).collect();
        let series: Vec<f64> = times.iter().map(|&t| 3.0 * tc.eval(t).0).collect();
        let avg = time_average(&series, &times, 2.0).unwrap();
        let m = 200_000;
        let h = 4.0 / m as f64;
        let mut s = tc.eval(0.0).0 + tc.eval(4.0).0;
        for k in 1..m {
            s += tc.eval(k as f64 * h).0 * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        let exact = 3.0 * s * h / 3.0 / 2.0;
        assert!((avg - exact).abs() < 1e-8);
        assert!((3.0..=6.0).contains(&avg));
        assert_eq!(time_average(&vec![0.0; times.len()], &times, 2.0).unwrap(), 0.0);
        assert!(time_average(&series, &times, 2.5).is_err());
    }

    #[test]
    fn averages_of_constant_values() {
        assert_eq!(ensemble_average(&[2.0; 7], 0.5).unwrap(), 8.0);
        assert!(ensemble_average(&[], 0.5).is_err());
        assert!(length_scale("x", 1.0, 0.0).is_err());
    }

    #[test]
    fn lemma_bands_hold_on_random_flow() {
        let grid = Grid2D::new(64, 2.0 * PI).unwrap();
        let spec = InitialSpectrum { k_peak: 5.0, bandwidth: 2.0, amplitude: 2.0, seed: 3 };
        let w0 = synthesize_initial_vorticity(&spec, &grid).unwrap();
        let config = SolverConfig { nu: 0.05, dt: 0.01, n: 64, l: 2.0 * PI, t_end: 1.0, sample_stride: 2, dealias: 2.0 / 3.0 };
        let traj = run(&config, &w0).unwrap();
        let mut cfg = AnalysisConfig::new(1.0, 0.5);
        cfg.r_list = vec![1.0, 0.5];
        cfg.shells.clear();
        cfg.k_list.clear();
        cfg.plain_check = false;
        let rep = analyze(&traj, &cfg).unwrap();
        let bands = lemma_bands(&rep);
        assert!(!bands.is_empty());
        for b in &bands {
            assert!(b.holds, "{b:?}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn time_average_is_linear(a in proptest::collection::vec(-10.0f64..10.0, 21), b in proptest::collection::vec(-10.0f64..10.0, 21)) {
            let times: Vec<f64> = (0..21).map(|k| k as f64 * 0.1).collect();
            let s: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            let lhs = time_average(&s, &times, 1.0).unwrap();
            let rhs = time_average(&a, &times, 1.0).unwrap() + time_average(&b, &times, 1.0).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-13 * (1.0 + lhs.abs()));
        }

        #[test]
        fn localized_quantities_monotone_in_cutoff(r in 0.4f64..0.7, dx in -0.2f64..0.2) {
            let traj = tg_trajectory(64, 2.0 * PI, 0.01, 2.0, 8);
            let f = frame_for(&traj, 0.7, 1.0);
            let small = make_ball_cutoff(&f, [dx, 0.0], r / 2.0, BoundaryMode::Cone).unwrap();
            let dom = make_domain_cutoff(&f);
            let a = local_quantities(&traj, &small).unwrap();
            let b = local_quantities(&traj, &dom).unwrap();
            for k in 0..a.times.len() {
                prop_assert!(a.e_prime[k] >= 0.0 && a.e_prime[k] <= b.e_prime[k] + 1e-12);
                prop_assert!(a.p[k] >= 0.0 && a.p[k] <= b.p[k] + 1e-12);
            }
        }
    }
}
