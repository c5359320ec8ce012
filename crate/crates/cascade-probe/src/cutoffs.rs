//! Smooth space-time cutoffs `phi = eta(t) psi(x)` with closed-form derivatives.
//!
//! Every spatial cutoff is assembled from one transition profile `S` on `[0, 1]`
//! that falls from 1 to 0 and is flat to all orders at both ends. Each evaluation
//! carries `psi` and `1 - psi` separately so that shells, which subtract two
//! nearly equal balls, keep full relative accuracy near their edges.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::OnceLock;

use gauss_quad::{GaussLaguerre, GaussLegendre};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral_field::{laplacian, Grid2D, ScalarField2D};

/// Below this argument the profile integral is evaluated by Gauss-Laguerre
/// quadrature instead of the interpolation table.
const TAIL_SWITCH: f64 = 0.05;
const TABLE_CELLS: usize = 4096;

fn bump(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        0.0
    } else {
        (-1.0 / (t * (1.0 - t))).exp()
    }
}

fn bump_d1(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        return 0.0;
    }
    let q = t * (1.0 - t);
    bump(t) * (1.0 - 2.0 * t) / (q * q)
}

/// Value, complement and derivatives of a profile or cutoff at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileValue {
    pub value: f64,
    pub complement: f64,
    pub d1: f64,
    pub d2: f64,
}

/// The transition `S(s) = 1 - int_0^s b / int_0^1 b` with `b(t) = exp(-1/(t(1-t)))`.
///
/// `J(s) = int_0^s b` is tabulated for `s in [0, 1/2]` and evaluated by quintic
/// Hermite interpolation using the exact derivatives `J' = b`, `J'' = b'`. The
/// far tail uses `J(s) = e^{-u0-1} int_0^inf e^{-w} exp(-1/(u0+w-1)) (u0+w)^{-2} dw`
/// with `u0 = 1/s`, which follows from the substitution `u = 1/t`.
/// Symmetry `b(t) = b(1-t)` covers `s > 1/2`.
#[derive(Debug)]
pub struct RadialProfile {
    table: Vec<f64>,
    h: f64,
    total: f64,
    laguerre: GaussLaguerre,
}

impl RadialProfile {
    fn build() -> Self {
        let legendre = GaussLegendre::new(10).expect("valid Gauss-Legendre degree");
        let laguerre = GaussLaguerre::new(24, 0.0).expect("valid Gauss-Laguerre degree");
        let h = 0.5 / TABLE_CELLS as f64;
        let mut table = Vec::with_capacity(TABLE_CELLS + 1);
        table.push(0.0);
        let mut acc = 0.0;
        for i in 0..TABLE_CELLS {
            let a = i as f64 * h;
            acc += legendre.integrate(a, a + h, bump);
            table.push(acc);
        }
        let total = 2.0 * acc;
        Self { table, h, total, laguerre }
    }

    /// Process-wide profile instance.
    pub fn global() -> &'static RadialProfile {
        static PROFILE: OnceLock<RadialProfile> = OnceLock::new();
        PROFILE.get_or_init(Self::build)
    }

    /// `int_0^1 b`.
    pub fn total(&self) -> f64 {
        self.total
    }

    /// `int_0^s b` for `s in [0, 1/2]`.
    fn partial(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        if s < TAIL_SWITCH {
            let u0 = 1.0 / s;
            let pre = (-u0 - 1.0).exp();
            if pre == 0.0 {
                return 0.0;
            }
            return pre * self.laguerre.integrate(|w| (-1.0 / (u0 + w - 1.0)).exp() / ((u0 + w) * (u0 + w)));
        }
        let x = s / self.h;
        let i = (x.floor() as usize).min(TABLE_CELLS - 1);
        let t = x - i as f64;
        let (a, b) = (i as f64 * self.h, (i + 1) as f64 * self.h);
        let (f0, f1) = (self.table[i], self.table[i + 1]);
        let (d0, d1) = (bump(a), bump(b));
        let (e0, e1) = (bump_d1(a), bump_d1(b));
        let h = self.h;
        let t2 = t * t;
        let t3 = t2 * t;
        let t4 = t3 * t;
        let t5 = t4 * t;
        let h0 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
        let h1 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
        let h2 = 0.5 * t2 - 1.5 * t3 + 1.5 * t4 - 0.5 * t5;
        let h3 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
        let h4 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5;
        let h5 = 0.5 * t3 - t4 + 0.5 * t5;
        f0 * h0 + h * d0 * h1 + h * h * e0 * h2 + f1 * h3 + h * d1 * h4 + h * h * e1 * h5
    }

    /// `S(s)`, `1 - S(s)`, `S'(s)` and `S''(s)`; constant outside `(0, 1)`.
    pub fn eval(&self, s: f64) -> ProfileValue {
        if s <= 0.0 {
            return ProfileValue { value: 1.0, complement: 0.0, d1: 0.0, d2: 0.0 };
        }
        if s >= 1.0 {
            return ProfileValue { value: 0.0, complement: 1.0, d1: 0.0, d2: 0.0 };
        }
        let (value, complement) = if s <= 0.5 {
            let c = self.partial(s) / self.total;
            (1.0 - c, c)
        } else {
            let v = self.partial(1.0 - s) / self.total;
            (v, 1.0 - v)
        };
        if value == 0.0 || complement == 0.0 {
            // derivatives are below the underflow threshold of the value itself
            return ProfileValue { value, complement, d1: 0.0, d2: 0.0 };
        }
        ProfileValue { value, complement, d1: -bump(s) / self.total, d2: -bump_d1(s) / self.total }
    }
}

/// Time cutoff `eta` on `[0, 2T]`: rises over `[0, T/4]`, equals 1 on
/// `[T/4, 5T/4]` and falls over `[5T/4, 2T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeCutoff {
    pub horizon: f64,
    pub delta: f64,
    /// Measured `sup |eta'| T / eta^delta`.
    pub c_time: f64,
}

/// Builds the time cutoff for horizon `T` and exponent `delta in [1/2, 1)`.
pub fn make_time_cutoff(horizon: f64, delta: f64) -> Result<TimeCutoff> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Cutoff(format!("horizon T must be positive, got {horizon}")));
    }
    check_delta(delta)?;
    let mut tc = TimeCutoff { horizon, delta, c_time: 0.0 };
    let samples = 200_000;
    let mut worst: f64 = 0.0;
    for i in 1..samples {
        let t = 2.0 * horizon * i as f64 / samples as f64;
        let (eta, deta) = tc.eval(t);
        if eta > 0.0 {
            worst = worst.max(deta.abs() * horizon / eta.powf(delta));
        }
    }
    tc.c_time = worst;
    Ok(tc)
}

fn check_delta(delta: f64) -> Result<()> {
    if !(0.5..1.0).contains(&delta) {
        return Err(Error::Cutoff(format!("delta must lie in [1/2, 1), got {delta}")));
    }
    Ok(())
}

impl TimeCutoff {
    /// `(eta(t), eta'(t))`.
    pub fn eval(&self, t: f64) -> (f64, f64) {
        let big_t = self.horizon;
        let p = RadialProfile::global();
        let rise = big_t / 4.0;
        let fall = 0.75 * big_t;
        if t <= 0.0 || t >= 2.0 * big_t {
            (0.0, 0.0)
        } else if t < rise {
            let v = p.eval((rise - t) / rise);
            (v.value, -v.d1 / rise)
        } else if t <= 1.25 * big_t {
            (1.0, 0.0)
        } else {
            let v = p.eval((t - 1.25 * big_t) / fall);
            (v.value, v.d1 / fall)
        }
    }
}

/// How ball cutoffs treat the part of the disk boundary they straddle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryMode {
    /// Polar blend that continues the cutoff conically between radii `R0` and `2 R0`.
    #[default]
    Cone,
    /// Product `psi_ball * psi0`; satisfies the ball conditions only.
    Plain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CutoffKind {
    Domain,
    WholeBox,
    Ball,
    BoundaryBall,
    Shell,
    BoundaryShell,
    FreeShell,
    Outer,
}

/// Analysis context shared by all cutoffs: grid, disk center, `R0`, `delta`
/// and the time cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub grid: Grid2D,
    pub origin: [f64; 2],
    pub r0: f64,
    pub delta: f64,
    pub time: TimeCutoff,
}

impl Frame {
    /// Disk of radius `r0` at the box center; requires `3 R0 <= L/2`.
    pub fn new(grid: Grid2D, r0: f64, time: TimeCutoff) -> Result<Self> {
        check_delta(time.delta)?;
        if !(r0 > 0.0) || 3.0 * r0 > grid.l() / 2.0 * (1.0 + 1e-12) {
            return Err(Error::Cutoff(format!("need 0 < 3 R0 <= L/2, got R0 = {r0}, L = {}", grid.l())));
        }
        if r0 < 2.0 * grid.dx() {
            return Err(Error::Cutoff(format!("R0 = {r0} is below two grid spacings")));
        }
        let c = grid.l() / 2.0;
        Ok(Self { grid, origin: [c, c], r0, delta: time.delta, time })
    }

    /// Box-scale domain parameter `D = L / sqrt 2` used by the outer cutoffs.
    pub fn domain_scale(&self) -> f64 {
        self.grid.l() * FRAC_1_SQRT_2
    }

    /// Minimum-image displacement of grid point `(i1, i2)` from `origin + at`.
    pub fn displacement(&self, i1: usize, i2: usize, at: [f64; 2]) -> [f64; 2] {
        let l = self.grid.l();
        let wrap = |d: f64| d - l * (d / l).round();
        [
            wrap(self.grid.coord(i1) - self.origin[0] - at[0]),
            wrap(self.grid.coord(i2) - self.origin[1] - at[1]),
        ]
    }
}

/// Cutoff value at one point: `psi`, `1 - psi`, gradient and Laplacian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffSample {
    pub psi: f64,
    pub complement: f64,
    pub grad: [f64; 2],
    pub lap: f64,
}

impl CutoffSample {
    const ZERO: CutoffSample = CutoffSample { psi: 0.0, complement: 1.0, grad: [0.0, 0.0], lap: 0.0 };
    const ONE: CutoffSample = CutoffSample { psi: 1.0, complement: 0.0, grad: [0.0, 0.0], lap: 0.0 };
}

/// Radial transition about `center`: 1 for `r <= a`, `S((r-a)/w)` up to `a + w`.
#[derive(Debug, Clone, Copy)]
struct Radial {
    a: f64,
    w: f64,
}

struct RadialEval {
    v: ProfileValue,
    r: f64,
    /// radial derivative and second radial derivative
    dr: f64,
    drr: f64,
    unit: [f64; 2],
}

impl Radial {
    fn at(&self, d: [f64; 2]) -> RadialEval {
        let r = d[0].hypot(d[1]);
        let v = RadialProfile::global().eval((r - self.a) / self.w);
        let unit = if r > 0.0 { [d[0] / r, d[1] / r] } else { [0.0, 0.0] };
        RadialEval { v, r, dr: v.d1 / self.w, drr: v.d2 / (self.w * self.w), unit }
    }

    fn sample(&self, d: [f64; 2]) -> CutoffSample {
        let e = self.at(d);
        let lap = if e.dr == 0.0 { e.drr } else { e.drr + e.dr / e.r };
        CutoffSample {
            psi: e.v.value,
            complement: e.v.complement,
            grad: [e.dr * e.unit[0], e.dr * e.unit[1]],
            lap,
        }
    }
}

/// Ball-family geometry: center relative to the disk center and radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct BallGeom {
    x0: [f64; 2],
    r: f64,
    plateau: f64,
    support: f64,
}

/// A spatial cutoff bound to a [`Frame`].
#[derive(Debug, Clone, PartialEq)]
pub struct Cutoff {
    pub kind: CutoffKind,
    pub mode: BoundaryMode,
    pub frame: Frame,
    /// Center relative to the disk center (unused for `Domain` and `WholeBox`).
    pub x0: [f64; 2],
    /// Ball radius, outer-cutoff radius, or `R1` for shells.
    pub r: f64,
    /// Inner shell radius `R2` (zero for non-shells).
    pub r2: f64,
    plateau_factor: f64,
    support_factor: f64,
}

fn norm(x: [f64; 2]) -> f64 {
    x[0].hypot(x[1])
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Disk cutoff `psi0`: 1 on `B(0, R0)`, supported in `B(0, 2 R0)`.
pub fn make_domain_cutoff(frame: &Frame) -> Cutoff {
    Cutoff {
        kind: CutoffKind::Domain,
        mode: BoundaryMode::Cone,
        frame: *frame,
        x0: [0.0, 0.0],
        r: frame.r0,
        r2: 0.0,
        plateau_factor: 1.0,
        support_factor: 2.0,
    }
}

/// The constant cutoff `psi = 1` on the whole periodic box.
pub fn make_whole_box_cutoff(frame: &Frame) -> Cutoff {
    Cutoff { kind: CutoffKind::WholeBox, ..make_domain_cutoff(frame) }
}

/// Ball cutoff of radius `R` about `x0` (relative to the disk center).
///
/// Centers may lie outside the disk as long as `B(x0, R)` meets `B(0, R0)`.
pub fn make_ball_cutoff(frame: &Frame, x0: [f64; 2], r: f64, mode: BoundaryMode) -> Result<Cutoff> {
    let r0 = frame.r0;
    if !(r > 0.0) || r > r0 * (1.0 + 1e-12) {
        return Err(Error::Cutoff(format!("ball radius must lie in (0, R0 = {r0}], got {r}")));
    }
    if r < 2.0 * frame.grid.dx() {
        return Err(Error::Cutoff(format!("ball radius {r} is below two grid spacings")));
    }
    if norm(x0) >= r0 + r {
        return Err(Error::Cutoff(format!("ball B(x0, {r}) with |x0| = {} misses B(0, R0)", norm(x0))));
    }
    let kind = if norm(x0) + r <= r0 { CutoffKind::Ball } else { CutoffKind::BoundaryBall };
    Ok(Cutoff { kind, mode, frame: *frame, x0, r, r2: 0.0, plateau_factor: 1.0, support_factor: 2.0 })
}

/// Shell cutoff `psi_{x0,R1} - psi_{x0,R2/2}`: 1 on `A(x0, R1, R2)`, supported in `A(x0, 2 R1, R2/2)`.
pub fn make_shell_cutoff(frame: &Frame, x0: [f64; 2], r1: f64, r2: f64, mode: BoundaryMode) -> Result<Cutoff> {
    if !(r2 > 0.0 && r2 < r1) {
        return Err(Error::Cutoff(format!("shell radii must satisfy 0 < R2 < R1, got R1 = {r1}, R2 = {r2}")));
    }
    if r1 - r2 <= frame.grid.dx() {
        return Err(Error::Cutoff(format!("degenerate shell: R1 - R2 = {} <= dx", r1 - r2)));
    }
    if norm(x0) >= frame.r0 {
        return Err(Error::Cutoff(format!("shell center |x0| = {} must lie in B(0, R0)", norm(x0))));
    }
    let outer = make_ball_cutoff(frame, x0, r1, mode)?;
    make_ball_cutoff(frame, x0, r2 / 2.0, mode)?;
    let kind = if outer.kind == CutoffKind::Ball { CutoffKind::Shell } else { CutoffKind::BoundaryShell };
    Ok(Cutoff { kind, r2, ..outer })
}

/// Radial shell about `x0` on the whole periodic box (no disk cutoff),
/// 1 on `A(x0, R1, R2)`, supported in `A(x0, 2 R1, R2/2)`. Requires `4 R1 < L/2`.
pub fn make_free_shell_cutoff(frame: &Frame, x0: [f64; 2], r1: f64, r2: f64) -> Result<Cutoff> {
    if !(r2 > 0.0 && r2 < r1) || r1 - r2 <= frame.grid.dx() || r2 < 4.0 * frame.grid.dx() {
        return Err(Error::Cutoff(format!("degenerate free shell R1 = {r1}, R2 = {r2}")));
    }
    if 2.0 * r1 >= frame.grid.l() / 2.0 {
        return Err(Error::Cutoff(format!("free shell support 2 R1 = {} must stay below L/2", 2.0 * r1)));
    }
    Ok(Cutoff {
        kind: CutoffKind::FreeShell,
        mode: BoundaryMode::Plain,
        frame: *frame,
        x0,
        r: r1,
        r2,
        plateau_factor: 1.0,
        support_factor: 2.0,
    })
}

/// Outer cutoff `psi_bar`: 0 on `B(x0, R - R0)`, 1 off `B(x0, R)`. Requires `R0 < R < D/2`.
pub fn make_outer_cutoff(frame: &Frame, x0: [f64; 2], r: f64) -> Result<Cutoff> {
    let d = frame.domain_scale();
    if !(r > frame.r0 && r < d / 2.0) {
        return Err(Error::Cutoff(format!("outer radius must satisfy R0 < R < D/2 = {}, got {r}", d / 2.0)));
    }
    Ok(Cutoff {
        kind: CutoffKind::Outer,
        mode: BoundaryMode::Plain,
        frame: *frame,
        x0,
        r,
        r2: 0.0,
        plateau_factor: 1.0,
        support_factor: 2.0,
    })
}

impl Cutoff {
    /// Replaces the ball plateau and support radii (multiples of `R`).
    /// Used to build deliberately malformed cutoffs for negative controls.
    pub fn with_ball_radii(mut self, plateau: f64, support: f64) -> Self {
        self.plateau_factor = plateau;
        self.support_factor = support;
        self
    }

    /// Length unit of the ratio constants: `R`, `R~ = min(R2, R1 - R2)` or `R0`.
    pub fn scale(&self) -> f64 {
        match self.kind {
            CutoffKind::Ball | CutoffKind::BoundaryBall => self.r,
            CutoffKind::Shell | CutoffKind::BoundaryShell | CutoffKind::FreeShell => self.r2.min(self.r - self.r2),
            CutoffKind::Domain | CutoffKind::WholeBox | CutoffKind::Outer => self.frame.r0,
        }
    }

    /// Time cutoff `eta` shared by every cutoff of the frame.
    pub fn time(&self) -> &TimeCutoff {
        &self.frame.time
    }

    fn domain_radial(&self) -> Radial {
        Radial { a: self.frame.r0, w: self.frame.r0 }
    }

    fn ball_geom(&self, r: f64) -> BallGeom {
        BallGeom { x0: self.x0, r, plateau: self.plateau_factor * r, support: self.support_factor * r }
    }

    /// Cutoff at displacement `x` from the disk center (no periodic wrapping).
    pub fn eval(&self, x: [f64; 2]) -> CutoffSample {
        let s = match self.kind {
            CutoffKind::WholeBox => CutoffSample::ONE,
            CutoffKind::Domain => self.domain_radial().sample(x),
            CutoffKind::Ball | CutoffKind::BoundaryBall => self.eval_ball(self.ball_geom(self.r), x),
            CutoffKind::Shell | CutoffKind::BoundaryShell => {
                let outer = self.eval_ball(self.ball_geom(self.r), x);
                let inner = self.eval_ball(self.ball_geom(self.r2 / 2.0), x);
                shell_difference(outer, inner)
            }
            CutoffKind::FreeShell => {
                let d = [x[0] - self.x0[0], x[1] - self.x0[1]];
                let outer = Radial { a: self.r, w: self.r }.sample(d);
                let inner = Radial { a: self.r2 / 2.0, w: self.r2 / 2.0 }.sample(d);
                shell_difference(outer, inner)
            }
            CutoffKind::Outer => {
                let d = [x[0] - self.x0[0], x[1] - self.x0[1]];
                let h = Radial { a: self.r - self.frame.r0, w: self.frame.r0 }.sample(d);
                CutoffSample { psi: h.complement, complement: h.psi, grad: [-h.grad[0], -h.grad[1]], lap: -h.lap }
            }
        };
        if s.psi <= 0.0 {
            CutoffSample::ZERO
        } else {
            s
        }
    }

    /// Cutoff at grid point `(i1, i2)`, using periodic displacements for
    /// cutoffs that live on the whole box.
    pub fn eval_grid(&self, i1: usize, i2: usize) -> CutoffSample {
        match self.kind {
            CutoffKind::Outer | CutoffKind::FreeShell => {
                let d = self.frame.displacement(i1, i2, self.x0);
                self.eval([d[0] + self.x0[0], d[1] + self.x0[1]])
            }
            _ => self.eval(self.frame.displacement(i1, i2, [0.0, 0.0])),
        }
    }

    fn eval_ball(&self, g: BallGeom, x: [f64; 2]) -> CutoffSample {
        let ball = Radial { a: g.plateau, w: g.support - g.plateau };
        let d = [x[0] - g.x0[0], x[1] - g.x0[1]];
        let interior = norm(g.x0) + g.r <= self.frame.r0;
        if interior {
            return ball.sample(d);
        }
        match self.mode {
            BoundaryMode::Plain => product(ball.sample(d), self.domain_radial().sample(x)),
            BoundaryMode::Cone => self.eval_cone(g, ball, x, d),
        }
    }

    fn eval_cone(&self, g: BallGeom, ball: Radial, x: [f64; 2], d: [f64; 2]) -> CutoffSample {
        let r0 = self.frame.r0;
        let eps = g.r / 4.0;
        let rho = norm(x);
        let pb = ball.sample(d);
        if rho <= r0 - eps {
            return pb;
        }
        let blend = Radial { a: r0 - eps, w: eps }.at(x);
        let dom = self.domain_radial().at(x);
        let e_rho = [x[0] / rho, x[1] / rho];
        let e_th = [-x[1] / rho, x[0] / rho];

        // angular factor: trace of a wider ball profile on the circle |x| = R0
        let proj = [r0 * e_rho[0], r0 * e_rho[1]];
        let da = [proj[0] - g.x0[0], proj[1] - g.x0[1]];
        let a_prof = Radial { a: 1.25 * g.r, w: 0.5 * g.r }.at(da);
        let grad_h = [a_prof.dr * a_prof.unit[0], a_prof.dr * a_prof.unit[1]];
        let hess_tt = if a_prof.r > 0.0 {
            let ut = dot(a_prof.unit, e_th);
            a_prof.drr * ut * ut + a_prof.dr / a_prof.r * (1.0 - ut * ut)
        } else {
            a_prof.drr
        };
        let alpha1 = r0 * dot(grad_h, e_th);
        let alpha2 = r0 * r0 * hess_tt - r0 * dot(grad_h, e_rho);
        let a_val = a_prof.v.value;
        let a_comp = a_prof.v.complement;
        let grad_a = [alpha1 / rho * e_th[0], alpha1 / rho * e_th[1]];
        let lap_a = alpha2 / (rho * rho);

        let (b, b_c, b1, b2) = (blend.v.value, blend.v.complement, blend.dr, blend.drr);
        let (p0, p0_c, p01, p02) = (dom.v.value, dom.v.complement, dom.dr, dom.drr);
        let c = b_c * p0;
        let c1 = -b1 * p0 + b_c * p01;
        let c2 = -b2 * p0 - 2.0 * b1 * p01 + b_c * p02;

        let psi = b * pb.psi + c * a_val;
        let complement = b * pb.complement + b_c * (p0_c + p0 * a_comp);
        let grad = [
            b1 * e_rho[0] * pb.psi + b * pb.grad[0] + c1 * e_rho[0] * a_val + c * grad_a[0],
            b1 * e_rho[1] * pb.psi + b * pb.grad[1] + c1 * e_rho[1] * a_val + c * grad_a[1],
        ];
        let lap = pb.psi * (b2 + b1 / rho)
            + 2.0 * b1 * dot(e_rho, pb.grad)
            + b * pb.lap
            + a_val * (c2 + c1 / rho)
            + c * lap_a;
        CutoffSample { psi, complement, grad, lap }
    }

    /// Bounding box of the support relative to the disk center, or `None`
    /// for cutoffs that need the whole grid.
    pub fn support_box(&self) -> Option<([f64; 2], [f64; 2])> {
        let r0 = self.frame.r0;
        let disk = ([-2.0 * r0, -2.0 * r0], [2.0 * r0, 2.0 * r0]);
        match self.kind {
            CutoffKind::WholeBox | CutoffKind::Outer | CutoffKind::FreeShell => None,
            CutoffKind::Domain => Some(disk),
            _ => {
                let g = self.ball_geom(self.r);
                let mut lo = [g.x0[0] - g.support, g.x0[1] - g.support];
                let mut hi = [g.x0[0] + g.support, g.x0[1] + g.support];
                let interior = norm(g.x0) + g.r <= r0;
                if !interior && self.mode == BoundaryMode::Cone {
                    if let Some((slo, shi)) = sector_box(g.x0, 1.75 * g.r, r0 - g.r / 4.0, 2.0 * r0, r0) {
                        lo = [lo[0].min(slo[0]), lo[1].min(slo[1])];
                        hi = [hi[0].max(shi[0]), hi[1].max(shi[1])];
                    }
                }
                Some((
                    [lo[0].max(disk.0[0]), lo[1].max(disk.0[1])],
                    [hi[0].min(disk.1[0]), hi[1].min(disk.1[1])],
                ))
            }
        }
    }

    /// Samples the cutoff at every grid point of its support.
    pub fn sample(&self) -> SampledCutoff {
        let grid = self.frame.grid;
        let n = grid.n();
        let dx = grid.dx();
        let (r1, r2) = match self.support_box() {
            None => ((0, n as i64 - 1), (0, n as i64 - 1)),
            Some((lo, hi)) => {
                let range = |a: f64, b: f64, o: f64| (((o + a) / dx).floor() as i64, ((o + b) / dx).ceil() as i64);
                (range(lo[0], hi[0], self.frame.origin[0]), range(lo[1], hi[1], self.frame.origin[1]))
            }
        };
        let delta = self.frame.delta;
        let scale = self.scale();
        let mut out = SampledCutoff::default();
        let mut c0 = C0Measured { grad_ratio: 0.0, lap_ratio: 0.0, scale };
        for a in r1.0..=r1.1 {
            let i1 = a.rem_euclid(n as i64) as usize;
            for b in r2.0..=r2.1 {
                let i2 = b.rem_euclid(n as i64) as usize;
                let s = self.eval_grid(i1, i2);
                if s.psi == 0.0 {
                    continue;
                }
                let gnorm = s.grad[0].hypot(s.grad[1]);
                c0.grad_ratio = c0.grad_ratio.max(gnorm * scale / s.psi.powf(delta));
                let pw = s.psi.powf(2.0 * delta - 1.0);
                c0.lap_ratio = c0.lap_ratio.max(s.lap.abs() * scale * scale / pw);
                out.indices.push(i1 * n + i2);
                out.psi.push(s.psi);
                out.psi_pow.push(pw);
                out.g1.push(s.grad[0]);
                out.g2.push(s.grad[1]);
                out.lap.push(s.lap);
            }
        }
        out.c0 = c0;
        out
    }

    /// Ratio constants measured on a lattice `refine` times finer than the
    /// grid, covering the support. Boundary cutoffs have features narrower than
    /// the analysis grid resolves, so their sampled constants converge slowly.
    pub fn measure_c0(&self, refine: usize) -> C0Measured {
        let refine = refine.max(1);
        let l = self.frame.grid.l();
        let h = self.frame.grid.dx() / refine as f64;
        let (lo, hi) = self.support_box().unwrap_or(([-l / 2.0, -l / 2.0], [l / 2.0, l / 2.0]));
        let m1 = ((hi[0] - lo[0]) / h).ceil() as usize;
        let m2 = ((hi[1] - lo[1]) / h).ceil() as usize;
        let delta = self.frame.delta;
        let scale = self.scale();
        let periodic = matches!(self.kind, CutoffKind::Outer | CutoffKind::FreeShell);
        let wrap = |d: f64| d - l * (d / l).round();
        let mut c0 = C0Measured { grad_ratio: 0.0, lap_ratio: 0.0, scale };
        for a in 0..=m1 {
            for b in 0..=m2 {
                let mut x = [lo[0] + a as f64 * h, lo[1] + b as f64 * h];
                if periodic {
                    x = [wrap(x[0] - self.x0[0]) + self.x0[0], wrap(x[1] - self.x0[1]) + self.x0[1]];
                }
                let s = self.eval(x);
                if s.psi == 0.0 {
                    continue;
                }
                c0.grad_ratio = c0.grad_ratio.max(s.grad[0].hypot(s.grad[1]) * scale / s.psi.powf(delta));
                c0.lap_ratio = c0.lap_ratio.max(s.lap.abs() * scale * scale / s.psi.powf(2.0 * delta - 1.0));
            }
        }
        c0
    }

    /// Full-grid samples of `psi` and its analytic Laplacian.
    pub fn to_fields(&self) -> Result<(ScalarField2D, ScalarField2D)> {
        let grid = self.frame.grid;
        let n = grid.n();
        let mut psi = vec![0.0; grid.len()];
        let mut lap = vec![0.0; grid.len()];
        for i1 in 0..n {
            for i2 in 0..n {
                let s = self.eval_grid(i1, i2);
                psi[i1 * n + i2] = s.psi;
                lap[i1 * n + i2] = s.lap;
            }
        }
        Ok((ScalarField2D::new(grid, psi)?, ScalarField2D::new(grid, lap)?))
    }

    /// JSON-friendly summary, optionally with measured constants.
    pub fn descriptor(&self, c0: Option<&C0Measured>) -> CutoffDescriptor {
        let is_shell = matches!(self.kind, CutoffKind::Shell | CutoffKind::BoundaryShell | CutoffKind::FreeShell);
        CutoffDescriptor {
            kind: self.kind,
            boundary_mode: self.mode,
            x0: self.x0,
            r: if is_shell { None } else { Some(self.r) },
            r1: if is_shell { Some(self.r) } else { None },
            r2: if is_shell { Some(self.r2) } else { None },
            r0: self.frame.r0,
            delta: self.frame.delta,
            c0_grad: c0.map(|c| c.grad_ratio),
            c0_lap: c0.map(|c| c.lap_ratio),
        }
    }
}

fn shell_difference(outer: CutoffSample, inner: CutoffSample) -> CutoffSample {
    CutoffSample {
        psi: inner.complement - outer.complement,
        complement: inner.psi + outer.complement,
        grad: [outer.grad[0] - inner.grad[0], outer.grad[1] - inner.grad[1]],
        lap: outer.lap - inner.lap,
    }
}

fn product(a: CutoffSample, b: CutoffSample) -> CutoffSample {
    CutoffSample {
        psi: a.psi * b.psi,
        complement: a.complement + a.psi * b.complement,
        grad: [a.psi * b.grad[0] + b.psi * a.grad[0], a.psi * b.grad[1] + b.psi * a.grad[1]],
        lap: a.psi * b.lap + b.psi * a.lap + 2.0 * dot(a.grad, b.grad),
    }
}

/// Bounding box of `{rho e(theta) : rho in [rho_a, rho_b], |R0 e(theta) - x0| < reach}`.
fn sector_box(x0: [f64; 2], reach: f64, rho_a: f64, rho_b: f64, r0: f64) -> Option<([f64; 2], [f64; 2])> {
    let dist = norm(x0);
    let full = || Some(([-rho_b, -rho_b], [rho_b, rho_b]));
    if dist == 0.0 {
        return if r0 < reach { full() } else { None };
    }
    let cos_half = (r0 * r0 + dist * dist - reach * reach) / (2.0 * r0 * dist);
    if cos_half <= -1.0 {
        return full();
    }
    if cos_half >= 1.0 {
        return None;
    }
    let half = cos_half.acos();
    let center = x0[1].atan2(x0[0]);
    let mut angles = vec![center - half, center + half];
    for q in -8..=8 {
        let a = q as f64 * PI / 2.0;
        if a > center - half && a < center + half {
            angles.push(a);
        }
    }
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for th in angles {
        for rho in [rho_a, rho_b] {
            let p = [rho * th.cos(), rho * th.sin()];
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
    }
    Some((lo, hi))
}

/// Measured ratio constants `sup |grad psi| s / psi^delta` and
/// `sup |Lap psi| s^2 / psi^{2 delta - 1}`, with `s` the cutoff's length unit.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct C0Measured {
    pub grad_ratio: f64,
    pub lap_ratio: f64,
    pub scale: f64,
}

/// Sparse samples of a cutoff on its grid support.
#[derive(Debug, Clone, Default)]
pub struct SampledCutoff {
    pub indices: Vec<usize>,
    pub psi: Vec<f64>,
    /// `psi^{2 delta - 1}`
    pub psi_pow: Vec<f64>,
    pub g1: Vec<f64>,
    pub g2: Vec<f64>,
    pub lap: Vec<f64>,
    pub c0: C0Measured,
}

/// JSON descriptor of a cutoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffDescriptor {
    pub kind: CutoffKind,
    pub boundary_mode: BoundaryMode,
    pub x0: [f64; 2],
    #[serde(rename = "R")]
    pub r: Option<f64>,
    #[serde(rename = "R1")]
    pub r1: Option<f64>,
    #[serde(rename = "R2")]
    pub r2: Option<f64>,
    #[serde(rename = "R0")]
    pub r0: f64,
    pub delta: f64,
    #[serde(rename = "C0_grad")]
    pub c0_grad: Option<f64>,
    #[serde(rename = "C0_lap")]
    pub c0_lap: Option<f64>,
}

/// Outcome of a full-grid structural scan of one cutoff.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CutoffValidation {
    pub support_ok: bool,
    pub plateau_ok: bool,
    pub below_domain_ok: bool,
    /// `None` when the cone conditions do not apply.
    pub cone_ok: Option<bool>,
    pub c0_grad: f64,
    pub c0_lap: f64,
    /// `max |Lap_analytic - Lap_spectral| / max |Lap_analytic|`.
    pub laplacian_mismatch: f64,
    pub failures: Vec<String>,
}

impl CutoffValidation {
    pub fn passed(&self) -> bool {
        self.support_ok && self.plateau_ok && self.below_domain_ok && self.cone_ok.unwrap_or(true)
    }
}

const EXACT_TOL: f64 = 1e-12;

/// Scans every grid point for the structural conditions of the cutoff's kind
/// and measures its ratio constants and Laplacian consistency.
pub fn validate_cutoff(c: &Cutoff, grid: &Grid2D) -> Result<CutoffValidation> {
    if grid != &c.frame.grid {
        return Err(Error::GridMismatch);
    }
    let n = grid.n();
    let r0 = c.frame.r0;
    let domain = make_domain_cutoff(&c.frame);
    let mut report = CutoffValidation {
        support_ok: true,
        plateau_ok: true,
        below_domain_ok: true,
        cone_ok: None,
        c0_grad: 0.0,
        c0_lap: 0.0,
        laplacian_mismatch: 0.0,
        failures: Vec::new(),
    };
    let cone_applies = c.mode == BoundaryMode::Cone
        && matches!(c.kind, CutoffKind::BoundaryBall | CutoffKind::BoundaryShell);
    if cone_applies {
        report.cone_ok = Some(true);
    }
    let note = |flag: &mut bool, msg: String, failures: &mut Vec<String>| {
        if *flag {
            failures.push(msg);
        }
        *flag = false;
    };
    let delta = c.frame.delta;
    let scale = c.scale();
    for i1 in 0..n {
        for i2 in 0..n {
            let x = c.frame.displacement(i1, i2, [0.0, 0.0]);
            let s = c.eval_grid(i1, i2);
            let rho = norm(x);
            let dx0 = norm([x[0] - c.x0[0], x[1] - c.x0[1]]);
            let at = format!("({i1}, {i2})");
            if s.psi > 0.0 {
                report.c0_grad = report.c0_grad.max(s.grad[0].hypot(s.grad[1]) * scale / s.psi.powf(delta));
                report.c0_lap = report.c0_lap.max(s.lap.abs() * scale * scale / s.psi.powf(2.0 * delta - 1.0));
            }
            let psi0 = domain.eval(x).psi;
            let (must_one, must_zero) = match c.kind {
                CutoffKind::WholeBox => (true, false),
                CutoffKind::Domain => (rho < r0 * (1.0 - 1e-12), rho >= 2.0 * r0),
                CutoffKind::Ball | CutoffKind::BoundaryBall => (
                    dx0 < c.r * (1.0 - 1e-12) && rho < r0,
                    rho >= 2.0 * r0 || (dx0 >= 2.0 * c.r && (rho < r0 || c.kind == CutoffKind::Ball)),
                ),
                CutoffKind::Shell | CutoffKind::BoundaryShell => {
                    let outside = dx0 >= 2.0 * c.r || dx0 <= c.r2 / 2.0;
                    (
                        dx0 > c.r2 * (1.0 + 1e-12) && dx0 < c.r * (1.0 - 1e-12) && rho < r0,
                        rho >= 2.0 * r0 || (outside && (rho < r0 || c.kind == CutoffKind::Shell)),
                    )
                }
                CutoffKind::FreeShell | CutoffKind::Outer => {
                    let d = c.frame.displacement(i1, i2, c.x0);
                    let dd = norm(d);
                    if c.kind == CutoffKind::Outer {
                        (dd >= c.r, dd <= c.r - r0)
                    } else {
                        (dd > c.r2 * (1.0 + 1e-12) && dd < c.r * (1.0 - 1e-12), dd >= 2.0 * c.r || dd <= c.r2 / 2.0)
                    }
                }
            };
            if must_one && (s.psi - 1.0).abs() > EXACT_TOL {
                note(&mut report.plateau_ok, format!("plateau violated at {at}: psi = {}", s.psi), &mut report.failures);
            }
            if must_zero && s.psi != 0.0 {
                note(&mut report.support_ok, format!("support violated at {at}: psi = {}", s.psi), &mut report.failures);
            }
            let bounded = matches!(c.kind, CutoffKind::Outer | CutoffKind::FreeShell | CutoffKind::WholeBox)
                || s.psi <= psi0 + EXACT_TOL;
            if !bounded || s.psi < 0.0 {
                note(
                    &mut report.below_domain_ok,
                    format!("0 <= psi <= psi0 violated at {at}: psi = {}, psi0 = {psi0}", s.psi),
                    &mut report.failures,
                );
            }
            if cone_applies && rho >= r0 && rho < 2.0 * r0 {
                let p = [r0 * x[0] / rho, r0 * x[1] / rho];
                let dp = norm([p[0] - c.x0[0], p[1] - c.x0[1]]);
                let (inner_ok, outer_zero) = if c.kind == CutoffKind::BoundaryBall {
                    (dp < c.r, dp >= 2.0 * c.r)
                } else {
                    (dp > c.r2 && dp < c.r, dp >= 2.0 * c.r || dp <= c.r2 / 2.0)
                };
                let mut ok = report.cone_ok.unwrap_or(true);
                if inner_ok && (s.psi - psi0).abs() > EXACT_TOL {
                    note(&mut ok, format!("inner cone violated at {at}: psi = {}, psi0 = {psi0}", s.psi), &mut report.failures);
                }
                if outer_zero && s.psi != 0.0 {
                    note(&mut ok, format!("outer cone violated at {at}: psi = {}", s.psi), &mut report.failures);
                }
                report.cone_ok = Some(ok);
            }
        }
    }
    let (psi, lap) = c.to_fields()?;
    let spectral = laplacian(&psi)?;
    let denom = lap.max_abs();
    report.laplacian_mismatch =
        if denom > 0.0 { spectral.max_abs_diff(&lap)? / denom } else { spectral.max_abs() };
    Ok(report)
}
