//! Command-line front end: JSON run configurations in, CSV branches and JSON
//! profiles out, each CSV with a `.meta.json` sidecar.
//!
//! Exit codes: 0 success, 1 solver failure, 2 configuration error.

use std::ffi::OsString;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::continuation::{NewtonSettings, PalcSettings};
use crate::error::Error;
use crate::free_boundary::{extract_expansion, newton_continue, residual_norm, FreeBoundaryProblem};
use crate::kernels::{KernelFamily, KernelSpec, LinearFamily, MatrixKernelSpec};
use crate::multispecies::{continue_kappa, extrapolate_bifurcations, SystemSettings};
use crate::particles::{continue_equilibria, mean_field_scale, simulate, EquilibriumSettings, ParticleState};
use crate::rank_one::{fit_gap_law, log_spaced, sweep_branch, BubbleSettings};
use crate::stability::critical_parameter;
use crate::viscous::{closed_form, rho_for_peak, steady_collocation, viscous_branch, CollocationSettings};

#[derive(Debug, Parser)]
#[command(name = "vacua", version, about = "Vacuum bubbles and reversible switching in aggregation models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run configuration; defaults are used for missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads for parallel sweeps (overrides the `threads` config key).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    verbose: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Critical parameter, wavenumber and growth rates of the uniform state.
    Stability,
    Particles {
        #[command(subcommand)]
        action: ParticlesAction,
    },
    Bubble {
        #[command(subcommand)]
        action: BubbleAction,
    },
    Freeboundary {
        #[command(subcommand)]
        action: FreeBoundaryAction,
    },
    Viscous {
        #[command(subcommand)]
        action: ViscousAction,
    },
    System {
        #[command(subcommand)]
        action: SystemAction,
    },
}

#[derive(Debug, Subcommand)]
enum ParticlesAction {
    /// Integrate the particle gradient flow.
    Simulate,
    /// Follow even equilibria in μ from the crystal.
    Continue,
}

#[derive(Debug, Subcommand)]
enum BubbleAction {
    /// Rank-one bubble branch over log-spaced μ, with a gap-law fit.
    Sweep,
}

#[derive(Debug, Subcommand)]
enum FreeBoundaryAction {
    /// Free-boundary branch in A₀ for a general kernel family.
    Continue {
        #[arg(long)]
        a0_max: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long)]
        grid_n: Option<usize>,
    },
}

#[derive(Debug, Subcommand)]
enum ViscousAction {
    /// Slanted branch μ(ρ) at fixed ε.
    Branch {
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        rho_min: Option<f64>,
        #[arg(long)]
        rho_max: Option<f64>,
    },
    /// Single steady profile with the Lambert-W overlay.
    Profile,
}

#[derive(Debug, Subcommand)]
enum SystemAction {
    /// Two-species branches in κ from the mixed state.
    Continue,
}

/// Failure of a run, carrying its exit code.
#[derive(Debug)]
pub enum RunError {
    Config { field: String, message: String },
    Solver(Error),
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config { .. } => 2,
            RunError::Solver(_) | RunError::Io(_) => 1,
        }
    }

    fn to_json(&self) -> Value {
        match self {
            RunError::Config { field, message } => {
                json!({"status": "error", "kind": "config", "exit_code": 2, "field": field, "message": message})
            }
            RunError::Solver(e) => {
                json!({"status": "error", "kind": "solver", "exit_code": 1, "message": e.to_string()})
            }
            RunError::Io(m) => json!({"status": "error", "kind": "io", "exit_code": 1, "message": m}),
        }
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        RunError::Solver(e)
    }
}

fn config_error(field: &str, message: impl Into<String>) -> RunError {
    RunError::Config { field: field.into(), message: message.into() }
}

/// Parse `args` (including the program name), run the command, and return the
/// exit code. Errors are reported as one JSON object on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(files) => {
            if cli.common.verbose {
                for f in files {
                    eprintln!("wrote {}", f.display());
                }
            }
            0
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli) -> Result<Vec<PathBuf>, RunError> {
    let (mut raw, source) = match &cli.common.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| config_error("--config", format!("{}: {e}", p.display())))?;
            let v: Value = serde_json::from_str(&text)
                .map_err(|e| config_error("<root>", format!("line {}, column {}: {e}", e.line(), e.column())))?;
            (v, p.display().to_string())
        }
        None => (json!({}), "defaults".to_string()),
    };
    if !raw.is_object() {
        return Err(config_error("<root>", "configuration must be a JSON object"));
    }
    let threads = match raw.as_object_mut().and_then(|m| m.remove("threads")) {
        Some(t) => Some(t.as_u64().filter(|t| *t > 0).ok_or_else(|| config_error("threads", "must be a positive integer"))?
            as usize),
        None => None,
    };
    let threads = cli.common.threads.or(threads);
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(t) = threads {
            b = b.num_threads(t);
        }
        b.build().map_err(|e| RunError::Io(format!("thread pool: {e}")))?
    };
    let out = Output::new(&cli.common.out, cli.common.verbose)?;
    if cli.common.verbose {
        eprintln!("configuration: {source}");
    }
    pool.install(|| match &cli.command {
        Command::Stability => stability(parse(raw)?, &out),
        Command::Particles { action: ParticlesAction::Simulate } => particles_simulate(parse(raw)?, &out),
        Command::Particles { action: ParticlesAction::Continue } => particles_continue(parse(raw)?, &out),
        Command::Bubble { action: BubbleAction::Sweep } => bubble_sweep(parse(raw)?, &out),
        Command::Freeboundary { action: FreeBoundaryAction::Continue { a0_max, points, grid_n } } => {
            let mut c: FreeBoundaryConfig = parse(raw)?;
            c.a0_max = a0_max.unwrap_or(c.a0_max);
            c.points = points.unwrap_or(c.points);
            c.n = grid_n.unwrap_or(c.n);
            freeboundary_continue(c, &out)
        }
        Command::Viscous { action: ViscousAction::Branch { eps, rho_min, rho_max } } => {
            let mut c: ViscousBranchConfig = parse(raw)?;
            c.eps = eps.unwrap_or(c.eps);
            c.rho_min = rho_min.unwrap_or(c.rho_min);
            c.rho_max = rho_max.unwrap_or(c.rho_max);
            viscous_branch_cmd(c, &out)
        }
        Command::Viscous { action: ViscousAction::Profile } => viscous_profile(parse(raw)?, &out),
        Command::System { action: SystemAction::Continue } => system_continue(parse(raw)?, &out),
    })?;
    Ok(out.written.into_inner().unwrap_or_default())
}

fn parse<C: DeserializeOwned>(raw: Value) -> Result<C, RunError> {
    serde_path_to_error::deserialize(raw).map_err(|e| {
        let path = e.path().to_string();
        config_error(if path == "." { "<root>" } else { &path }, e.into_inner().to_string())
    })
}

/// Output directory with atomic writes (temporary file, then rename).
struct Output {
    dir: PathBuf,
    verbose: bool,
    written: std::sync::Mutex<Vec<PathBuf>>,
}

impl Output {
    fn new(dir: &Path, verbose: bool) -> Result<Self, RunError> {
        fs::create_dir_all(dir).map_err(|e| RunError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), verbose, written: Default::default() })
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<PathBuf, RunError> {
        let path = self.dir.join(name);
        let tmp = self.dir.join(format!(".{name}.tmp{}", std::process::id()));
        fs::write(&tmp, bytes)
            .and_then(|_| fs::rename(&tmp, &path))
            .map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
        self.written.lock().expect("output list").push(path.clone());
        Ok(path)
    }

    fn json(&self, name: &str, v: &impl Serialize) -> Result<PathBuf, RunError> {
        let mut s = serde_json::to_string_pretty(v).map_err(|e| RunError::Io(e.to_string()))?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    /// CSV with header plus `<stem>.meta.json` echoing the configuration.
    fn csv(
        &self,
        stem: &str,
        header: &[String],
        rows: &[Vec<String>],
        command: &str,
        config: &impl Serialize,
        stats: Value,
    ) -> Result<(), RunError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| RunError::Io(e.to_string());
        w.write_record(header).map_err(io)?;
        for r in rows {
            w.write_record(r).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| RunError::Io(e.to_string()))?;
        self.write(&format!("{stem}.csv"), &bytes)?;
        self.meta(stem, command, config, json!({"rows": rows.len(), "columns": header, "stats": stats}))
    }

    fn meta(&self, stem: &str, command: &str, config: &impl Serialize, extra: Value) -> Result<(), RunError> {
        let mut m = json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "config": config,
        });
        if let (Some(m), Value::Object(e)) = (m.as_object_mut(), extra) {
            m.extend(e);
        }
        if self.verbose {
            eprintln!("{command}: writing {stem}");
        }
        self.json(&format!("{stem}.meta.json"), &m).map(|_| ())
    }
}

fn num(v: f64) -> String {
    v.to_string()
}

fn positive(field: &str, v: f64) -> Result<(), RunError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(config_error(field, format!("must be positive, got {v}")))
    }
}

fn range(field: &str, r: (f64, f64)) -> Result<(), RunError> {
    if r.0 < r.1 && r.0.is_finite() && r.1.is_finite() {
        Ok(())
    } else {
        Err(config_error(field, format!("range must be nonempty, got [{}, {}]", r.0, r.1)))
    }
}

fn check_family(field: &str, f: &LinearFamily) -> Result<(), RunError> {
    f.base.validate().map_err(|e| config_error(&format!("{field}.base"), e.to_string()))?;
    f.slope.validate().map_err(|e| config_error(&format!("{field}.slope"), e.to_string()))
}

// ---------------------------------------------------------------- stability

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct StabilityConfig {
    family: LinearFamily,
    bracket: (f64, f64),
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self { family: LinearFamily::dirac_cosine_model(), bracket: (-1.0, 1.0) }
    }
}

fn stability(c: StabilityConfig, out: &Output) -> Result<(), RunError> {
    check_family("family", &c.family)?;
    range("bracket", c.bracket)?;
    let family = c.family.clone();
    let report = critical_parameter(move |mu| Ok(MatrixKernelSpec::scalar(family.at(mu))), c.bracket)?;
    out.json("stability.json", &report)?;
    out.meta("stability", "stability", &c, json!({}))
}

// ---------------------------------------------------------------- particles

/// Exponential repulsion plus cosine attraction, critical at `μ = 0`.
fn default_particle_family() -> LinearFamily {
    let eta: f64 = 0.3;
    LinearFamily::new(
        KernelSpec {
            dirac_weight: 0.0,
            terms: vec![
                KernelFamily::PeriodizedExponential { eta, amplitude: 1.0 },
                KernelFamily::CosineSeries { coeffs: vec![0.0, -1.0 / (PI * (1.0 + eta * eta))] },
            ],
            l_max: 64,
        },
        KernelSpec::dirac_cosine(0.0, vec![0.0, -1.0]),
    )
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SimulateConfig {
    n: usize,
    family: LinearFamily,
    mu: f64,
    t_end: f64,
    tol: f64,
    record_every: usize,
    /// Displacement amplitude of the `sin x` mode (clusters at `x = 0`).
    perturbation: f64,
    /// Uniform random displacement, as a fraction of the spacing.
    jitter: f64,
    seed: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            n: 25,
            family: default_particle_family(),
            mu: 0.05,
            t_end: 20.0,
            tol: 1e-8,
            record_every: 10,
            perturbation: 0.01,
            jitter: 0.0,
            seed: 0,
        }
    }
}

fn particles_simulate(c: SimulateConfig, out: &Output) -> Result<(), RunError> {
    if c.n < 2 {
        return Err(config_error("n", "need at least two particles"));
    }
    check_family("family", &c.family)?;
    positive("t_end", c.t_end)?;
    positive("tol", c.tol)?;
    if !(0.0..0.5).contains(&c.jitter) {
        return Err(config_error("jitter", "must lie in [0, 0.5)"));
    }
    let h = 2.0 * PI / c.n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let x: Vec<f64> = (0..c.n)
        .map(|j| {
            let x = j as f64 * h;
            let jitter = if c.jitter > 0.0 { rng.random_range(-c.jitter..c.jitter) * h } else { 0.0 };
            x - c.perturbation * x.sin() + jitter
        })
        .collect();
    let k = MatrixKernelSpec::scalar(c.family.at(c.mu).scaled(mean_field_scale(c.n)));
    let traj = simulate(&ParticleState::scalar(x)?, &k, c.t_end, c.tol, c.record_every)?;
    let mut header = vec!["time".to_string()];
    header.extend((1..=c.n).map(|j| format!("x_{j}")));
    header.push("energy".into());
    let rows: Vec<Vec<String>> = traj
        .points
        .iter()
        .map(|p| {
            let mut r = vec![num(p.time)];
            r.extend(p.positions.iter().map(|&x| num(x)));
            r.push(num(p.energy));
            r
        })
        .collect();
    let stats = json!({
        "accepted_steps": traj.accepted_steps,
        "rejected_steps": traj.rejected_steps,
        "order_violations": traj.order_violations,
        "worst_energy_increase": traj.worst_energy_increase(0.0),
    });
    out.csv("trajectory", &header, &rows, "particles simulate", &c, stats)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ContinueParticlesConfig {
    n: usize,
    family: LinearFamily,
    mu_range: (f64, f64),
}

impl Default for ContinueParticlesConfig {
    fn default() -> Self {
        Self { n: 25, family: default_particle_family(), mu_range: (-0.05, 0.3) }
    }
}

fn particles_continue(c: ContinueParticlesConfig, out: &Output) -> Result<(), RunError> {
    if c.n < 3 {
        return Err(config_error("n", "need at least three particles"));
    }
    check_family("family", &c.family)?;
    range("mu_range", c.mu_range)?;
    let scale = mean_field_scale(c.n);
    let family = c.family.clone();
    let branch = continue_equilibria(move |mu| Ok(family.at(mu).scaled(scale)), c.n, c.mu_range, EquilibriumSettings::default())?;
    let positions_file = "particle_positions.json";
    let positions: Vec<&Vec<f64>> = branch.points.iter().map(|p| &p.positions).collect();
    out.json(positions_file, &json!({ "positions": positions }))?;
    let header = ["mu", "density_proxy", "crystal", "positions"].map(String::from);
    let rows: Vec<Vec<String>> = branch
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| vec![num(p.mu), num(p.density_proxy), p.crystal.to_string(), format!("{positions_file}#{i}")])
        .collect();
    out.csv("particle_branch", &header, &rows, "particles continue", &c, json!({"truncation": branch.truncation}))
}

// ---------------------------------------------------------------- rank one

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct BubbleConfig {
    mu_min: f64,
    mu_max: f64,
    points: usize,
    tol: f64,
}

impl Default for BubbleConfig {
    fn default() -> Self {
        Self { mu_min: 1e-5, mu_max: 1e-3, points: 20, tol: 1e-12 }
    }
}

fn bubble_sweep(c: BubbleConfig, out: &Output) -> Result<(), RunError> {
    positive("mu_min", c.mu_min)?;
    positive("tol", c.tol)?;
    range("mu_max", (c.mu_min, c.mu_max))?;
    if c.points < 2 {
        return Err(config_error("points", "need at least two points"));
    }
    let mus = log_spaced(c.mu_min, c.mu_max, c.points);
    let branch = sweep_branch(&mus, BubbleSettings { tol: c.tol, ..Default::default() })?;
    let fit = fit_gap_law(&branch.points.iter().map(|s| (s.mu, s.l)).collect::<Vec<_>>())?;
    let header = ["mu", "a0", "a1", "l", "rho", "gap"].map(String::from);
    let rows: Vec<Vec<String>> = branch
        .points
        .iter()
        .map(|s| vec![num(s.mu), num(s.a0), num(s.a1), num(s.l), num(s.rho), num(PI - s.l)])
        .collect();
    let stats = json!({"gap_fit": fit, "truncation": branch.truncation});
    out.csv("bubble_branch", &header, &rows, "bubble sweep", &c, stats)
}

// ---------------------------------------------------------------- free boundary

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FreeBoundaryConfig {
    family: LinearFamily,
    n: usize,
    a0_max: f64,
    points: usize,
    tol: f64,
    /// Samples per profile file on `[-π, π]`.
    profile_points: usize,
}

impl Default for FreeBoundaryConfig {
    fn default() -> Self {
        Self {
            family: LinearFamily::dirac_cosine_model(),
            n: 512,
            a0_max: 1.1,
            points: 20,
            tol: 1e-10,
            profile_points: 401,
        }
    }
}

fn freeboundary_continue(c: FreeBoundaryConfig, out: &Output) -> Result<(), RunError> {
    check_family("family", &c.family)?;
    if c.a0_max <= 1.0 {
        return Err(config_error("a0_max", "must exceed 1"));
    }
    if c.points == 0 {
        return Err(config_error("points", "must be positive"));
    }
    if c.n < 32 {
        return Err(config_error("n", "grid needs at least 32 points"));
    }
    if c.profile_points < 2 {
        return Err(config_error("profile_points", "need at least two samples"));
    }
    positive("tol", c.tol)?;
    let problem = FreeBoundaryProblem::new(c.family.clone(), c.n)?;
    let a0: Vec<f64> = (1..=c.points).map(|k| 1.0 + (c.a0_max - 1.0) * k as f64 / c.points as f64).collect();
    let branch = newton_continue(&problem, &a0, NewtonSettings { tol: c.tol, ..Default::default() })?;
    let mut rows = Vec::new();
    for (i, s) in branch.points.iter().enumerate() {
        let file = format!("freeboundary_profile_{i:03}.json");
        let x: Vec<f64> =
            (0..c.profile_points).map(|j| -PI + 2.0 * PI * j as f64 / (c.profile_points - 1) as f64).collect();
        let u: Vec<f64> = x.iter().map(|&x| s.density(&problem.grid, x).0).collect();
        out.json(&file, &json!({"a0": s.a0, "mu": s.mu, "l": s.l, "x": x, "u": u}))?;
        rows.push(vec![
            num(s.a0),
            num(s.mu),
            num(s.l),
            num(s.rho),
            num(s.a1),
            num(residual_norm(&problem, s)?),
            file,
        ]);
    }
    let expansion = extract_expansion(&problem, &branch).map_err(|e| e.to_string());
    let stats = json!({
        "formulation": problem.formulation,
        "truncation": branch.truncation,
        "expansion": match &expansion { Ok(e) => json!({"a1_1": e.a1_1, "a1_2": e.a1_2, "l_1": e.l_1, "rho_1": e.rho_1,
            "mu_1": e.mu_1, "mu_2": e.mu_2, "mu_3": e.mu_3}), Err(m) => json!({"unavailable": m}) },
    });
    let header = ["a0", "mu", "l", "rho", "a1", "residual", "profile"].map(String::from);
    out.csv("freeboundary_branch", &header, &rows, "freeboundary continue", &c, stats)
}

// ---------------------------------------------------------------- viscous

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ViscousBranchConfig {
    family: LinearFamily,
    eps: f64,
    rho_min: f64,
    rho_max: f64,
    points: usize,
    n: usize,
}

impl Default for ViscousBranchConfig {
    fn default() -> Self {
        Self { family: LinearFamily::dirac_cosine_model(), eps: 0.1, rho_min: 0.1, rho_max: 0.9, points: 9, n: 256 }
    }
}

fn collocation(n: usize) -> Result<CollocationSettings, RunError> {
    if n < 256 || n % 2 != 0 {
        return Err(config_error("n", format!("grid size must be even and at least 256, got {n}")));
    }
    Ok(CollocationSettings { n, ..Default::default() })
}

fn viscous_branch_cmd(c: ViscousBranchConfig, out: &Output) -> Result<(), RunError> {
    check_family("family", &c.family)?;
    positive("eps", c.eps)?;
    positive("rho_min", c.rho_min)?;
    range("rho_max", (c.rho_min, c.rho_max))?;
    if c.rho_max >= 2.0 {
        return Err(config_error("rho_max", "must be below 2"));
    }
    if c.points < 2 {
        return Err(config_error("points", "need at least two points"));
    }
    let settings = collocation(c.n)?;
    let rhos: Vec<f64> =
        (0..c.points).map(|i| c.rho_min + (c.rho_max - c.rho_min) * i as f64 / (c.points - 1) as f64).collect();
    let branch = viscous_branch(&c.family, c.eps, &rhos, settings)?;
    let header = ["rho", "mu", "mu_over_eps", "mu1_prediction"].map(String::from);
    let rows: Vec<Vec<String>> = branch
        .points
        .iter()
        .map(|p| vec![num(p.rho), num(p.mu), num(p.mu_over_eps), p.mu1_prediction.map(num).unwrap_or_default()])
        .collect();
    out.csv("viscous_branch", &header, &rows, "viscous branch", &c, json!({"truncation": branch.truncation}))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ViscousProfileConfig {
    family: LinearFamily,
    rho: f64,
    /// If set, `rho` is replaced by the value whose closed-form profile peaks here.
    peak: Option<f64>,
    eps: f64,
    n: usize,
}

impl Default for ViscousProfileConfig {
    fn default() -> Self {
        Self { family: LinearFamily::dirac_cosine_model(), rho: 0.5, peak: None, eps: 0.1, n: 256 }
    }
}

fn viscous_profile(mut c: ViscousProfileConfig, out: &Output) -> Result<(), RunError> {
    check_family("family", &c.family)?;
    positive("eps", c.eps)?;
    let settings = collocation(c.n)?;
    if let Some(p) = c.peak {
        if p <= 1.0 {
            return Err(config_error("peak", "must exceed 1"));
        }
        c.rho = rho_for_peak(p, c.eps)?;
    }
    if !(c.rho > 0.0 && c.rho < 2.0) {
        return Err(config_error("rho", "must lie in (0, 2)"));
    }
    let p = steady_collocation(&c.family, c.eps, c.rho, settings, None)?;
    // the Lambert-W form is exact only for the Dirac + cosine model
    let overlay = if c.family == LinearFamily::dirac_cosine_model() {
        let cf = closed_form(c.rho, c.eps)?;
        let u: Vec<f64> = p.x.iter().map(|&x| cf.value(x)).collect();
        let dist = u.iter().zip(&p.u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        json!({"u": u, "a": cf.a, "m": cf.m, "mu": cf.mu, "sup_distance": dist})
    } else {
        Value::Null
    };
    let body = json!({
        "x": p.x, "u": p.u, "rho": p.rho, "eps": p.eps, "mu": p.mu, "a": p.a, "m": p.m,
        "mass": p.mass(), "closed_form": overlay,
    });
    out.json("viscous_profile.json", &body)?;
    out.meta("viscous_profile", "viscous profile", &c, json!({}))
}

// ---------------------------------------------------------------- systems

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SystemConfig {
    /// Dirac weights.
    a: Vec<Vec<f64>>,
    /// Cosine amplitudes; off-diagonal entries are replaced by κ.
    b: Vec<Vec<f64>>,
    kappa_range: (f64, f64),
    eps: f64,
    n: usize,
    seed_amplitude: f64,
    step: f64,
    max_step: f64,
    max_points: usize,
    /// Viscosities for the Richardson extrapolation of the bifurcation points.
    richardson: Option<(f64, f64)>,
    /// Off-diagonal Dirac weight of the reconciliation run.
    reconcile_a12: Option<f64>,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            a: vec![vec![0.8, 1.0], vec![1.0, 1.0]],
            b: vec![vec![-0.3, 0.0], vec![0.0, -0.3]],
            kappa_range: (-0.8, 1.4),
            eps: 0.03,
            n: 128,
            seed_amplitude: 1e-2,
            step: 5e-3,
            max_step: 2e-2,
            max_points: 150,
            richardson: Some((0.03, 0.015)),
            reconcile_a12: Some(0.8),
        }
    }
}

fn matrix(field: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>, RunError> {
    let p = rows.len();
    if p == 0 || rows.iter().any(|r| r.len() != p) {
        return Err(config_error(field, "must be a nonempty square matrix"));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(config_error(field, "entries must be finite"));
    }
    Ok(DMatrix::from_fn(p, p, |i, j| rows[i][j]))
}

/// Roots in `κ` of `det(a - π b(κ)) = 0` for two species with symmetric `a`.
fn determinant_roots(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<(f64, f64)> {
    if a.nrows() != 2 {
        return None;
    }
    let s = (a[(0, 0)] - PI * b[(0, 0)]) * (a[(1, 1)] - PI * b[(1, 1)]);
    if s < 0.0 || a[(0, 1)] != a[(1, 0)] {
        return None;
    }
    Some(((a[(0, 1)] + s.sqrt()) / PI, (a[(0, 1)] - s.sqrt()) / PI))
}

fn system_continue(c: SystemConfig, out: &Output) -> Result<(), RunError> {
    let a = matrix("a", &c.a)?;
    let b = matrix("b", &c.b)?;
    if a.nrows() != b.nrows() {
        return Err(config_error("b", "must match the size of a"));
    }
    range("kappa_range", c.kappa_range)?;
    positive("eps", c.eps)?;
    positive("seed_amplitude", c.seed_amplitude)?;
    positive("step", c.step)?;
    range("max_step", (0.0, c.max_step))?;
    if c.n < 16 || c.n % 2 != 0 {
        return Err(config_error("n", "grid size must be even and at least 16"));
    }
    let settings = SystemSettings {
        n: c.n,
        seed_amplitude: c.seed_amplitude,
        palc: PalcSettings { step: c.step, max_step: c.max_step, max_points: c.max_points, ..Default::default() },
    };
    let branches = continue_kappa(&a, &b, c.kappa_range, c.eps, settings)?;

    let p = a.nrows();
    let mut header = vec!["kappa".to_string()];
    header.extend((1..=p).map(|i| format!("amp{i}")));
    header.push("branch_label".into());
    let mut rows = Vec::new();
    let mut profiles = Vec::new();
    let half = c.n / 2;
    let x: Vec<f64> = (0..=half).map(|r| PI * r as f64 / half as f64).collect();
    for br in &branches {
        for pt in &br.branch.points {
            let mut r = vec![num(pt.kappa)];
            r.extend(pt.amplitudes.iter().map(|&v| num(v)));
            r.push(br.label.short().into());
            rows.push(r);
        }
        if let Some(last) = br.branch.points.last() {
            let mut prof = json!({"label": br.label, "kappa": last.kappa, "x": x});
            for (i, u) in last.profiles.iter().enumerate() {
                prof[format!("u{}", i + 1)] = json!(u);
            }
            profiles.push(prof);
        }
    }
    out.json("system_profiles.json", &profiles)?;

    let extrapolated = match c.richardson {
        Some(e) => Some(extrapolate_bifurcations(&a, &b, c.kappa_range, e, c.n)?),
        None => None,
    };
    let reconciliation = match (c.reconcile_a12, p) {
        (Some(a12), 2) => {
            let mut a2 = a.clone();
            a2[(0, 1)] = a12;
            a2[(1, 0)] = a12;
            let extrap = match c.richardson {
                Some(e) => Some(extrapolate_bifurcations(&a2, &b, c.kappa_range, e, c.n)?),
                None => None,
            };
            json!({"a12": a12, "determinant_roots": determinant_roots(&a2, &b), "extrapolated": extrap})
        }
        _ => Value::Null,
    };
    let stats = json!({
        "bifurcations": branches.iter().map(|b| &b.bifurcation).collect::<Vec<_>>(),
        "truncations": branches.iter().map(|b| json!({"label": b.label, "truncation": b.branch.truncation})).collect::<Vec<_>>(),
        "determinant_roots": determinant_roots(&a, &b),
        "extrapolated": extrapolated,
        "reconciliation": reconciliation,
    });
    out.csv("system_branch", &header, &rows, "system continue", &c, stats)
}
