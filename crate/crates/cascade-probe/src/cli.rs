//! End-to-end driver: simulate, analyze, verify and report, configured by one
//! JSON document per run.
//!
//! A run directory holds `run.json` (the resolved configuration),
//! `trajectory/`, `analysis/`, `verdicts/` and `report/`. Every output is a pure
//! function of the configuration, so identical configurations give identical bytes.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::cascade_verdicts::{evaluate_all, guarded_inverse_gamma, OuterConstants, VerdictParams, VerdictSuite, DEFAULT_SLACK};
use crate::error::{Error, Result};
use crate::flux_analysis::{analyze, outer_c0, read_report, write_report, AnalysisConfig, AnalysisReport, ShellSpec};
use crate::nse_solver::{run, synthesize_initial_vorticity, taylor_green_snapshot, InitialSpectrum, SolverConfig, Trajectory};
use crate::spectral_field::ScalarField2D;

/// Initial vorticity of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialCondition {
    TaylorGreen,
    Spectrum(InitialSpectrum),
    Zero,
}

/// Complete description of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub name: String,
    pub solver: SolverConfig,
    pub initial: InitialCondition,
    pub analysis: AnalysisConfig,
    pub gamma_direct: f64,
    /// `None` picks the guarded default from the measured outer `C0`.
    pub gamma_inverse: Option<f64>,
    pub slack: f64,
    pub output_dir: PathBuf,
}

pub const PRESETS: [&str; 5] = ["taylor-green", "direct", "forward", "inverse", "shell"];

const R0: f64 = 0.7;
const NU: f64 = 0.05;
const HORIZON: f64 = 9.8;

impl RunConfig {
    /// Shipped configurations; all share `L = 2 pi`, `R0 = 0.7`, `nu = 0.05` and `T = R0^2/nu`.
    pub fn preset(name: &str) -> Result<Self> {
        let two_pi = 2.0 * std::f64::consts::PI;
        let solver = |n: usize| SolverConfig {
            nu: NU,
            dt: 0.00245,
            n,
            l: two_pi,
            t_end: 2.0 * HORIZON,
            sample_stride: 32,
            dealias: 2.0 / 3.0,
        };
        let spectrum = |k_peak: f64, bandwidth: f64, amplitude: f64, seed: u64| {
            InitialCondition::Spectrum(InitialSpectrum { k_peak, bandwidth, amplitude, seed })
        };
        let mut analysis = AnalysisConfig::new(R0, HORIZON);
        let (solver, initial) = match name {
            "taylor-green" => (solver(64), InitialCondition::TaylorGreen),
            "direct" => (solver(128), spectrum(8.0, 2.0, 15.0, 2024)),
            "forward" => (solver(128), spectrum(6.0, 2.0, 12.0, 7)),
            "inverse" => {
                analysis.outer_r_list = vec![0.75, 1.0, 1.5];
                (solver(128), spectrum(12.0, 3.0, 20.0, 11))
            }
            "shell" => {
                analysis.shells = vec![
                    ShellSpec { x0: [0.0, 0.0], r1: R0 / 2.0, r2: R0 / 4.0 },
                    ShellSpec { x0: [0.2, -0.1], r1: R0 / 2.0, r2: R0 / 4.0 },
                ];
                (solver(128), spectrum(10.0, 3.0, 15.0, 5))
            }
            other => {
                return Err(Error::Config(format!("unknown preset {other:?}; available: {}", PRESETS.join(", "))))
            }
        };
        Ok(Self {
            name: name.into(),
            solver,
            initial,
            analysis,
            gamma_direct: 0.5,
            gamma_inverse: None,
            slack: DEFAULT_SLACK,
            output_dir: PathBuf::from(format!("runs/{name}")),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn params(&self) -> VerdictParams {
        VerdictParams { gamma_direct: self.gamma_direct, gamma_inverse: self.gamma_inverse, slack: self.slack }
    }

    /// Checks the solver configuration and the disk embedding `3 R0 <= L/2`.
    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        let l = self.solver.l;
        if 3.0 * self.analysis.r0 > l / 2.0 * (1.0 + 1e-12) {
            return Err(Error::Config(format!("need 3 R0 <= L/2, got R0 = {}, L = {l}", self.analysis.r0)));
        }
        if !(self.slack >= 0.0) {
            return Err(Error::Config(format!("slack must be non-negative, got {}", self.slack)));
        }
        Ok(())
    }

    /// Adds the horizon rule `T >= R0^2/nu`, `t_end >= 2T` and the `gamma` guards.
    pub fn validate_for_analysis(&self) -> Result<()> {
        self.validate()?;
        let (r0, t, nu) = (self.analysis.r0, self.analysis.horizon, self.solver.nu);
        if t < r0 * r0 / nu * (1.0 - 1e-12) {
            return Err(Error::Horizon(format!(
                "averaging horizon T = {t} is below R0^2/nu = {}; the localized bounds need T >= R0^2/nu",
                r0 * r0 / nu
            )));
        }
        if self.solver.t_end < 2.0 * t * (1.0 - 1e-12) {
            return Err(Error::Horizon(format!(
                "t_end = {} is below 2T = {}; time averages need snapshots on [0, 2T]",
                self.solver.t_end,
                2.0 * t
            )));
        }
        if !(self.gamma_direct > 0.0 && self.gamma_direct < 1.0) {
            return Err(Error::Config(format!("gamma_direct must lie in (0, 1), got {}", self.gamma_direct)));
        }
        if let Some(g) = self.gamma_inverse {
            if let Some(c0) = outer_c0(&self.analysis, &self.solver.grid()?)? {
                OuterConstants::new(c0, g)?;
            } else if !(g > 0.0 && g < 1.0) {
                return Err(Error::Config(format!("gamma_inverse must be positive and below 1, got {g}")));
            }
        }
        Ok(())
    }

    /// Resolved inverse-cascade `gamma`, or `None` without outer radii.
    pub fn resolved_gamma_inverse(&self) -> Result<Option<f64>> {
        Ok(match outer_c0(&self.analysis, &self.solver.grid()?)? {
            Some(c0) => Some(self.gamma_inverse.unwrap_or_else(|| guarded_inverse_gamma(c0))),
            None => self.gamma_inverse,
        })
    }
}

/// Initial vorticity on the solver grid.
pub fn initial_vorticity(cfg: &RunConfig) -> Result<ScalarField2D> {
    let grid = cfg.solver.grid()?;
    match &cfg.initial {
        InitialCondition::TaylorGreen => Ok(taylor_green_snapshot(cfg.solver.nu, 0.0, &grid)?.omega),
        InitialCondition::Spectrum(s) => synthesize_initial_vorticity(s, &grid),
        InitialCondition::Zero => Ok(ScalarField2D::zeros(grid)),
    }
}

/// Runs the solver. With `for_analysis` the horizon rule is checked first.
pub fn simulate(cfg: &RunConfig, for_analysis: bool) -> Result<Trajectory> {
    if for_analysis {
        cfg.validate_for_analysis()?;
    } else {
        cfg.validate()?;
    }
    run(&cfg.solver, &initial_vorticity(cfg)?)
}

pub fn trajectory_dir(run_dir: &Path) -> PathBuf {
    run_dir.join("trajectory")
}

pub fn analysis_dir(run_dir: &Path) -> PathBuf {
    run_dir.join("analysis")
}

pub fn verdict_dir(run_dir: &Path) -> PathBuf {
    run_dir.join("verdicts")
}

pub fn report_dir(run_dir: &Path) -> PathBuf {
    run_dir.join("report")
}

fn write_run_config(cfg: &RunConfig, run_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(run_dir)?;
    std::fs::write(run_dir.join("run.json"), cfg.to_json()?)?;
    Ok(())
}

/// Simulates and persists the trajectory together with `run.json`.
pub fn simulate_to_dir(cfg: &RunConfig, run_dir: &Path, for_analysis: bool) -> Result<Trajectory> {
    let traj = simulate(cfg, for_analysis)?;
    write_run_config(cfg, run_dir)?;
    traj.save(&trajectory_dir(run_dir))?;
    Ok(traj)
}

/// Analyzes the stored trajectory and writes the tables.
pub fn analyze_dir(cfg: &RunConfig, run_dir: &Path) -> Result<AnalysisReport> {
    cfg.validate_for_analysis()?;
    let traj = Trajectory::load(&trajectory_dir(run_dir))?;
    if traj.config != cfg.solver {
        return Err(Error::Config("stored trajectory was produced by a different solver configuration".into()));
    }
    let rep = analyze(&traj, &cfg.analysis)?;
    write_report(&rep, &analysis_dir(run_dir))?;
    Ok(rep)
}

/// A verdict document: the resolved configuration plus one report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerdictDocument<T> {
    pub config: RunConfig,
    pub result: T,
}

/// Evaluates every theorem, analyzing first when no analysis is stored.
pub fn verify_dir(cfg: &RunConfig, run_dir: &Path) -> Result<VerdictSuite> {
    cfg.validate_for_analysis()?;
    let rep = match read_report(&analysis_dir(run_dir)) {
        Ok(r) if r.config == cfg.analysis && r.nu == cfg.solver.nu => r,
        _ => analyze_dir(cfg, run_dir)?,
    };
    let suite = evaluate_all(&rep, &cfg.params())?;
    let dir = verdict_dir(run_dir);
    std::fs::create_dir_all(&dir)?;
    for r in &suite.reports {
        let doc = VerdictDocument { config: cfg.clone(), result: r };
        std::fs::write(dir.join(format!("{}.json", r.theorem)), serde_json::to_string_pretty(&doc)?)?;
    }
    let doc = VerdictDocument { config: cfg.clone(), result: &suite };
    std::fs::write(dir.join("suite.json"), serde_json::to_string_pretty(&doc)?)?;
    Ok(suite)
}

/// Writes plot-ready tables of flux against `R`, of the locality ratios and of
/// every bound check, plus a text summary. Returns the summary.
pub fn report(rep: &AnalysisReport, suite: &VerdictSuite, out: &Path) -> Result<String> {
    std::fs::create_dir_all(out)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(out.join("flux_vs_R.csv"))?);
    writeln!(f, "family,mode,averaging,R,Psi,Phi,P,E,E_prime,G,e")?;
    let groups = [
        &rep.balls,
        &rep.plain_balls,
        &rep.shell_families,
        &rep.plain_shell_families,
        &rep.outer,
        &rep.free_shells,
    ];
    for fam in groups.into_iter().flatten() {
        let mode = format!("{:?}", fam.boundary_mode).to_lowercase();
        let mut rows = vec![("ensemble", fam.average)];
        if let Some(u) = fam.uniform {
            rows.push(("uniform", u));
        }
        for (avg, a) in rows {
            writeln!(
                f,
                "{},{mode},{avg},{},{},{},{},{},{},{},{}",
                fam.label, fam.r, a.psi, a.phi, a.p, a.big_e, a.e_prime, a.g, a.e
            )?;
        }
    }
    f.flush()?;

    let mut f = std::io::BufWriter::new(std::fs::File::create(out.join("locality_ratios.csv"))?);
    writeln!(f, "theorem,name,R,k,lower,ratio,upper,evaluated,holds")?;
    let mut b = std::io::BufWriter::new(std::fs::File::create(out.join("bounds.csv"))?);
    writeln!(b, "theorem,name,R,k,lower,value,upper,conditional,evaluated,holds")?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for r in &suite.reports {
        for c in &r.checks {
            let holds = c.holds.map_or(String::new(), |h| h.to_string());
            let k = c.k.map_or(String::new(), |k| k.to_string());
            writeln!(
                b,
                "{},\"{}\",{},{k},{},{},{},{},{},{holds}",
                r.theorem,
                c.name,
                opt(c.r),
                opt(c.lower),
                c.value,
                opt(c.upper),
                c.conditional,
                c.evaluated
            )?;
            if c.k.is_some() {
                writeln!(
                    f,
                    "{},\"{}\",{},{k},{},{},{},{},{holds}",
                    r.theorem,
                    c.name,
                    opt(c.r),
                    opt(c.lower),
                    c.value,
                    opt(c.upper),
                    c.evaluated
                )?;
            }
        }
    }
    f.flush()?;
    b.flush()?;

    let mut s = String::new();
    s.push_str(&format!(
        "grid N = {} (analysis {}), L = {}, nu = {}, R0 = {}, T = {}, samples in [0, 2T] = {}\n",
        rep.n_grid, rep.n_analysis, rep.l, rep.nu, rep.config.r0, rep.config.horizon, rep.samples_in_horizon
    ));
    let show = |v: Option<f64>| v.map_or("undefined".to_string(), |x| format!("{x:.6e}"));
    s.push_str(&format!(
        "scales: sigma0 = {}, tau0 = {}, tau = {}, tau (eta^(2 delta - 1) energy) = {}\n",
        show(rep.scales.sigma0),
        show(rep.scales.tau0),
        show(rep.scales.tau),
        show(rep.scales.tau_pow)
    ));
    for r in &suite.reports {
        let (ev, ok) = r.tally();
        s.push_str(&format!("{:<34} {:<8} checks {ok}/{ev}", r.theorem, format!("{:?}", r.verdict).to_lowercase()));
        for c in &r.conditions {
            if c.name != "unconditional" {
                s.push_str(&format!("; {}: {} vs {:.6e}", c.name, show(c.lhs), c.rhs));
            }
        }
        s.push('\n');
    }
    for k in &rep.skipped {
        s.push_str(&format!("skipped: {k}\n"));
    }
    s.push_str(&format!("overall: {:?} (exit code {})\n", suite.overall, suite.exit_code).to_lowercase());
    std::fs::write(out.join("summary.txt"), &s)?;
    Ok(s)
}

/// Runs the stored analysis and verdicts (computing whichever is missing) and writes the report tables.
pub fn report_run(cfg: &RunConfig, run_dir: &Path) -> Result<(String, i32)> {
    let suite = verify_dir(cfg, run_dir)?;
    let rep = read_report(&analysis_dir(run_dir))?;
    let s = report(&rep, &suite, &report_dir(run_dir))?;
    Ok((s, suite.exit_code))
}

// ---------------------------------------------------------------------------
// Command line
// ---------------------------------------------------------------------------

#[derive(Debug, Parser)]
#[command(name = "cascade-probe", version, about = "Physical-scale flux analysis of decaying 2D turbulence")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the solver and store the trajectory.
    Simulate(SimulateArgs),
    /// Compute localized averages, constants and scales of a stored run.
    Analyze(RunArgs),
    /// Evaluate every cascade bound; exit 0 ok, 2 vacuous only, 1 failure.
    Verify(RunArgs),
    /// Write plot-ready tables and a summary of a run.
    Report(RunArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Shipped configuration: taylor-green, direct, forward, inverse or shell.
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run directory (defaults to the configured output directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub gamma_direct: Option<f64>,
    #[arg(long)]
    pub gamma_inverse: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub l: Option<f64>,
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub kstar: Option<f64>,
    #[arg(long)]
    pub bandwidth: Option<f64>,
    #[arg(long)]
    pub amplitude: Option<f64>,
    /// Skip the analysis preconditions (horizon rule, gamma guards).
    #[arg(long)]
    pub simulate_only: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

fn resolve(args: &ConfigArgs, run_dir_json: Option<&Path>) -> Result<(RunConfig, PathBuf)> {
    let mut cfg = match (&args.preset, &args.config) {
        (Some(p), _) => RunConfig::preset(p)?,
        (None, Some(path)) => RunConfig::load(path)?,
        (None, None) => match run_dir_json {
            Some(p) if p.exists() => RunConfig::load(p)?,
            _ => return Err(Error::Config("pass --preset, --config or an --out directory holding run.json".into())),
        },
    };
    if let Some(g) = args.gamma_direct {
        cfg.gamma_direct = g;
    }
    if let Some(g) = args.gamma_inverse {
        cfg.gamma_inverse = Some(g);
    }
    let dir = args.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    cfg.output_dir = dir.clone();
    Ok((cfg, dir))
}

fn apply_overrides(cfg: &mut RunConfig, a: &SimulateArgs) -> Result<()> {
    let s = &mut cfg.solver;
    s.nu = a.nu.unwrap_or(s.nu);
    s.dt = a.dt.unwrap_or(s.dt);
    s.n = a.n.unwrap_or(s.n);
    s.l = a.l.unwrap_or(s.l);
    s.t_end = a.t_end.unwrap_or(s.t_end);
    s.sample_stride = a.stride.unwrap_or(s.sample_stride);
    let spectral = a.seed.is_some() || a.kstar.is_some() || a.bandwidth.is_some() || a.amplitude.is_some();
    if spectral {
        let InitialCondition::Spectrum(sp) = &mut cfg.initial else {
            return Err(Error::Config("--seed/--kstar/--bandwidth/--amplitude need a spectral initial condition".into()));
        };
        sp.seed = a.seed.unwrap_or(sp.seed);
        sp.k_peak = a.kstar.unwrap_or(sp.k_peak);
        sp.bandwidth = a.bandwidth.unwrap_or(sp.bandwidth);
        sp.amplitude = a.amplitude.unwrap_or(sp.amplitude);
    }
    Ok(())
}

fn run_dir_config(args: &ConfigArgs) -> Option<PathBuf> {
    args.out.as_ref().map(|d| d.join("run.json"))
}

/// Executes a parsed command line and returns the process exit code.
pub fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Simulate(a) => {
            let (mut cfg, dir) = resolve(&a.cfg, None)?;
            apply_overrides(&mut cfg, &a)?;
            let traj = simulate_to_dir(&cfg, &dir, !a.simulate_only)?;
            println!(
                "stored {} snapshots in {} (energy {:.6e} -> {:.6e})",
                traj.snapshots.len(),
                trajectory_dir(&dir).display(),
                traj.energy[0],
                traj.energy[traj.energy.len() - 1]
            );
            Ok(0)
        }
        Command::Analyze(a) => {
            let (cfg, dir) = resolve(&a.cfg, run_dir_config(&a.cfg).as_deref())?;
            let rep = analyze_dir(&cfg, &dir)?;
            println!(
                "analysis written to {} ({} ball, {} shell, {} outer families)",
                analysis_dir(&dir).display(),
                rep.balls.len(),
                rep.shell_families.len(),
                rep.outer.len()
            );
            Ok(0)
        }
        Command::Verify(a) => {
            let (cfg, dir) = resolve(&a.cfg, run_dir_config(&a.cfg).as_deref())?;
            let suite = verify_dir(&cfg, &dir)?;
            for r in &suite.reports {
                let (ev, ok) = r.tally();
                println!("{:<34} {:?} ({ok}/{ev} evaluated checks hold)", r.theorem, r.verdict);
            }
            Ok(suite.exit_code)
        }
        Command::Report(a) => {
            let (cfg, dir) = resolve(&a.cfg, run_dir_config(&a.cfg).as_deref())?;
            let (s, code) = report_run(&cfg, &dir)?;
            print!("{s}");
            Ok(code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_for_analysis() {
        for p in PRESETS {
            let cfg = RunConfig::preset(p).unwrap();
            cfg.validate_for_analysis().unwrap();
            let samples = (cfg.solver.t_end / cfg.solver.dt).round() as usize / cfg.solver.sample_stride + 1;
            assert!(samples >= 200, "{p}: {samples}");
        }
        assert!(RunConfig::preset("nope").is_err());
    }

    #[test]
    fn short_horizon_is_refused() {
        let mut cfg = RunConfig::preset("direct").unwrap();
        cfg.solver.t_end = 9.8;
        let e = simulate(&cfg, true).unwrap_err();
        assert!(matches!(e, Error::Horizon(_)), "{e}");
        assert!(e.to_string().contains("2T"));
    }

    #[test]
    fn invalid_inverse_gamma_is_rejected_before_running() {
        let mut cfg = RunConfig::preset("inverse").unwrap();
        cfg.gamma_inverse = Some(0.99);
        let e = cfg.validate_for_analysis().unwrap_err();
        assert!(matches!(e, Error::Config(_)), "{e}");
        let g = cfg.resolved_gamma_inverse().unwrap().unwrap();
        assert_eq!(g, 0.99);
        cfg.gamma_inverse = None;
        let g = cfg.resolved_gamma_inverse().unwrap().unwrap();
        let c0 = outer_c0(&cfg.analysis, &cfg.solver.grid().unwrap()).unwrap().unwrap();
        assert!(c0 > 0.52 && g < 1.0 / (2.0 * c0).sqrt());
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = RunConfig::preset("shell").unwrap();
        let back: RunConfig = serde_json::from_str(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn command_line_parses() {
        let cli = Cli::try_parse_from(["cascade-probe", "simulate", "--preset", "direct", "--seed", "3", "--n", "64"]).unwrap();
        let Command::Simulate(a) = cli.command else { panic!() };
        let (mut cfg, _) = resolve(&a.cfg, None).unwrap();
        apply_overrides(&mut cfg, &a).unwrap();
        assert_eq!(cfg.solver.n, 64);
        assert!(matches!(cfg.initial, InitialCondition::Spectrum(InitialSpectrum { seed: 3, .. })));
        assert!(Cli::try_parse_from(["cascade-probe", "verify", "--preset", "a", "--config", "b"]).is_err());
    }
}
