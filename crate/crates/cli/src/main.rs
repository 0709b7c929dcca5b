use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use photon_crystal::circuit::{self, CircuitOptions, CircuitParams, EffectiveCouplings};
use photon_crystal::classify::{ClassifyConfig, RunWindow, SeedSet};
use photon_crystal::cluster;
use photon_crystal::fock::DensityMatrix;
use photon_crystal::format::sig9;
use photon_crystal::meanfield::{self, EvolveConfig, SolverSettings};
use photon_crystal::observables::{self, GridSpec};
use photon_crystal::ode::Tolerance;
use photon_crystal::recipes::{self, RecipeOverrides, ThresholdSpec};
use photon_crystal::semiclassical;
use photon_crystal::sweep::{self, Axis, Engine, SweepSpec};
use photon_crystal::{Error, ModelParams};
use serde::{Deserialize, Serialize};

/// Fraction of failed grid nodes above which a sweep exits with code 3.
const MAX_FAILURE_FRACTION: f64 = 0.01;

#[derive(Parser)]
#[command(name = "photon-crystal", version, about = "Phase diagrams of driven-dissipative cavity arrays with cross-Kerr coupling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify every node of a one- or two-parameter grid and write CSV.
    Sweep(SweepArgs),
    /// Dump a single-point trajectory as CSV.
    Evolve(EvolveArgs),
    /// Report semiclassical fixed points and their stability as JSON.
    FixedPoints(PointArgs),
    /// Wigner function on a phase-space grid as CSV.
    Wigner(WignerArgs),
    /// Critical cross-Kerr coupling versus onsite Kerr, mean field and cluster.
    ClusterSweep(ClusterSweepArgs),
    /// Map circuit element values to lattice couplings.
    CircuitMap(CircuitArgs),
    /// Run one of the built-in figure recipes.
    Reproduce(ReproduceArgs),
}

#[derive(Args)]
struct PointArgs {
    /// Model parameter assignment `name=value`, repeatable.
    #[arg(long = "set", value_name = "NAME=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON sweep spec; inline flags override its fields.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// First axis `name:start:stop:count`.
    #[arg(long)]
    axis1: Option<Axis>,
    /// Second axis `name:start:stop:count` (varies fastest).
    #[arg(long)]
    axis2: Option<Axis>,
    #[command(flatten)]
    point: PointArgs,
    /// semiclassical, meanfield or cluster.
    #[arg(long)]
    engine: Option<Engine>,
    /// Seed set: default or asymmetric.
    #[arg(long)]
    seeds: Option<SeedSet>,
    /// CSV destination; standard output when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    burn_in: Option<f64>,
}

#[derive(Args)]
struct EvolveArgs {
    #[command(flatten)]
    point: PointArgs,
    #[arg(long, default_value = "meanfield")]
    engine: Engine,
    /// Index into the default seed set.
    #[arg(long, default_value_t = 0)]
    seed: usize,
    #[arg(long, default_value_t = 100.0)]
    t_max: f64,
    #[arg(long, default_value_t = 0.1)]
    dt: f64,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct WignerArgs {
    /// `vacuum`, `fock:K`, `coherent:RE,IM` or `steady` (mean-field state
    /// after `--t-max` with the `--set` parameters).
    #[arg(long, default_value = "steady")]
    state: String,
    #[command(flatten)]
    point: PointArgs,
    /// Sublattice of the steady state: a or b.
    #[arg(long, default_value = "a")]
    sublattice: String,
    #[arg(long, default_value_t = 200.0)]
    t_max: f64,
    /// Grid covers `[-half, half]` in both quadratures.
    #[arg(long, default_value_t = 4.0)]
    half: f64,
    #[arg(long, default_value_t = 101)]
    points: usize,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ClusterSweepArgs {
    /// Onsite Kerr values; `inf` selects the hard-core limit.
    #[arg(long, value_delimiter = ',', default_value = "inf")]
    u: Vec<String>,
    #[command(flatten)]
    point: PointArgs,
    #[arg(long, default_value_t = 8)]
    n_max_meanfield: usize,
    #[arg(long, default_value_t = 3)]
    n_max_cluster: usize,
    /// Bisection bracket on zv.
    #[arg(long, default_value_t = 0.0)]
    zv_min: f64,
    #[arg(long, default_value_t = 30.0)]
    zv_max: f64,
    #[arg(long, default_value_t = 0.02)]
    tol: f64,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CircuitArgs {
    /// JSON configuration with `circuit`, optional `options` and optional
    /// `lattice` sections.
    config: PathBuf,
}

#[derive(Args)]
struct ReproduceArgs {
    /// fig1, fig2a, fig2b, fig2c, fig3, fig4, fig8, fig9 or fig10.
    figure: String,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Override the resolution of every axis with more than two points.
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    burn_in: Option<f64>,
}

/// Problem with user input, reported with exit code 2.
#[derive(Debug)]
struct SpecError(String);

impl std::fmt::Display for SpecError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for SpecError {}

fn spec_err(e: impl std::fmt::Display) -> anyhow::Error {
    SpecError(e.to_string()).into()
}

/// Input validation failures from the library count as spec errors.
fn lib_err(e: Error) -> anyhow::Error {
    match e {
        Error::InvalidParameter(_) | Error::OutOfScope(_) | Error::UnknownFigure(_) | Error::Json(_) => spec_err(e),
        other => other.into(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<SpecError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Sweep(a) => sweep_cmd(a),
        Command::Evolve(a) => evolve_cmd(a).map(|_| ExitCode::SUCCESS),
        Command::FixedPoints(a) => fixed_points_cmd(a).map(|_| ExitCode::SUCCESS),
        Command::Wigner(a) => wigner_cmd(a).map(|_| ExitCode::SUCCESS),
        Command::ClusterSweep(a) => cluster_sweep_cmd(a),
        Command::CircuitMap(a) => circuit_cmd(a).map(|_| ExitCode::SUCCESS),
        Command::Reproduce(a) => reproduce_cmd(a),
    }
}

fn apply_sets(p: &mut ModelParams, sets: &[String]) -> anyhow::Result<()> {
    for s in sets {
        let (name, value) = s.split_once('=').ok_or_else(|| spec_err(format!("`{s}` is not NAME=VALUE")))?;
        let value: f64 = value.trim().parse().map_err(|_| spec_err(format!("bad value in `{s}`")))?;
        p.set(name.trim(), value).map_err(lib_err)?;
    }
    p.validate().map_err(lib_err)
}

fn point_params(point: &PointArgs) -> anyhow::Result<ModelParams> {
    let mut p = ModelParams::default();
    apply_sets(&mut p, &point.set)?;
    Ok(p)
}

fn write_out(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => io::stdout().lock().write_all(text.as_bytes()).context("writing to stdout"),
    }
}

fn workers() -> anyhow::Result<usize> {
    sweep::workers_from_env().map_err(lib_err)
}

fn sweep_cmd(a: SweepArgs) -> anyhow::Result<ExitCode> {
    let mut spec = match &a.spec {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| spec_err(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<SweepSpec>(&text).map_err(|e| spec_err(format!("{}: {e}", path.display())))?
        }
        None => {
            let axis1 = a.axis1.clone().ok_or_else(|| spec_err("either --spec or --axis1 is required"))?;
            SweepSpec::new(axis1, None, ModelParams::default(), Engine::Meanfield)
        }
    };
    if let Some(x) = a.axis1 {
        spec.axis1 = x;
    }
    if a.axis2.is_some() {
        spec.axis2 = a.axis2;
    }
    if let Some(e) = a.engine {
        spec.engine = e;
    }
    if let Some(s) = a.seeds {
        spec.seeds = s;
    }
    if let Some(t) = a.t_max {
        spec.classify.t_max = t;
    }
    if let Some(b) = a.burn_in {
        spec.classify.burn_in = b;
    }
    apply_sets(&mut spec.fixed, &a.point.set)?;
    let output = a.output.or_else(|| spec.output.as_ref().map(PathBuf::from));
    let map = sweep::run_sweep(&spec, workers()?).map_err(lib_err)?;
    write_out(output.as_deref(), &map.to_csv_string())?;
    for r in map.rows.iter().filter(|r| r.is_failure()) {
        eprintln!("failed at ({}, {:?}): {}", r.axis1, r.axis2, r.error.as_deref().unwrap_or(""));
    }
    eprintln!("{} points, {} undecided, {} failed", map.rows.len(), map.undecided(), map.failures());
    Ok(failure_code(map.failure_fraction()))
}

fn failure_code(fraction: f64) -> ExitCode {
    if fraction > MAX_FAILURE_FRACTION {
        eprintln!("{:.1}% of grid points failed", 100.0 * fraction);
        ExitCode::from(3)
    } else {
        ExitCode::SUCCESS
    }
}

fn evolve_cmd(a: EvolveArgs) -> anyhow::Result<()> {
    let p = point_params(&a.point)?;
    let pairs = SeedSet::Default.pairs();
    let &(sa, sb) = pairs.get(a.seed).ok_or_else(|| spec_err(format!("seed index must be below {}", pairs.len())))?;
    let mut csv = String::from("t,n_a,n_b,re_a_a,im_a_a,re_a_b,im_a_b\n");
    let mut row = |t: f64, na: f64, nb: f64, pa: (f64, f64), pb: (f64, f64)| {
        let cells = [t, na, nb, pa.0, pa.1, pb.0, pb.1].map(sig9);
        csv.push_str(&cells.join(","));
        csv.push('\n');
    };
    match a.engine {
        Engine::Semiclassical => {
            let start = semiclassical::SemiclassicalState::from_moments(sa.moments(), sb.moments());
            let w = RunWindow { duration: a.t_max, record_from: 0.0, sample_dt: a.dt };
            let tr = semiclassical::integrate(&p, &start, w, 0.0, Tolerance::default()).map_err(lib_err)?;
            for (t, s) in tr.times.iter().zip(&tr.states) {
                row(*t, s.w_a, s.w_b, (s.psi_a().re, s.psi_a().im), (s.psi_b().re, s.psi_b().im));
            }
        }
        Engine::Meanfield => {
            let cfg = EvolveConfig { t_max: a.t_max, record_from: 0.0, sample_dt: a.dt, ..Default::default() };
            let d = p.dim();
            let tr = meanfield::evolve_pair(&sa.density(d), &sb.density(d), &p, &cfg).map_err(lib_err)?;
            for k in 0..tr.times.len() {
                let (pa, pb) = (tr.psi_a[k], tr.psi_b[k]);
                row(tr.times[k], tr.n_a[k], tr.n_b[k], (pa.re, pa.im), (pb.re, pb.im));
            }
        }
        Engine::Cluster => {
            let solver = if p.n_max > 1 { SolverSettings::cluster() } else { SolverSettings::default() };
            let cfg = EvolveConfig { t_max: a.t_max, record_from: 0.0, sample_dt: a.dt, solver, ..Default::default() };
            let d = p.dim();
            let start = cluster::product_state(&sa.density(d), &sb.density(d));
            let tr = cluster::cluster_evolve(&start, &p, &cfg).map_err(lib_err)?;
            for (t, f) in tr.times.iter().zip(&tr.fields) {
                row(*t, f.a.w, f.b.w, (f.a.psi.re, f.a.psi.im), (f.b.psi.re, f.b.psi.im));
            }
        }
    }
    write_out(a.output.as_deref(), &csv)
}

fn fixed_points_cmd(a: PointArgs) -> anyhow::Result<()> {
    let p = point_params(&a)?;
    let json = if p.zj == 0.0 {
        let pts = semiclassical::fixed_points_j0(&p).map_err(lib_err)?;
        serde_json::json!({ "method": "closed_form", "params": p, "points": pts })
    } else {
        let found = semiclassical::fixed_points_numeric(&p, &semiclassical::default_newton_seeds(&p)).map_err(lib_err)?;
        serde_json::json!({ "method": "newton", "params": p, "result": found })
    };
    println!("{}", serde_json::to_string_pretty(&json)?);
    Ok(())
}

fn parse_state(s: &str, dim: usize) -> anyhow::Result<DensityMatrix> {
    let bad = || spec_err(format!("unknown state `{s}`"));
    if s == "vacuum" {
        return Ok(DensityMatrix::vacuum(dim));
    }
    if let Some(k) = s.strip_prefix("fock:") {
        let k: usize = k.parse().map_err(|_| bad())?;
        return DensityMatrix::fock(k, dim).map_err(lib_err);
    }
    if let Some(rest) = s.strip_prefix("coherent:") {
        let (re, im) = rest.split_once(',').ok_or_else(bad)?;
        let alpha = num_complex::Complex::new(re.parse().map_err(|_| bad())?, im.parse().map_err(|_| bad())?);
        return Ok(DensityMatrix::coherent(alpha, dim));
    }
    Err(bad())
}

fn wigner_cmd(a: WignerArgs) -> anyhow::Result<()> {
    let p = point_params(&a.point)?;
    let rho = if a.state == "steady" {
        let cfg = EvolveConfig { t_max: a.t_max, record_from: a.t_max - 1.0, ..Default::default() };
        let (sa, sb) = SeedSet::Default.pairs()[0];
        let d = p.dim();
        let tr = meanfield::evolve_pair(&sa.density(d), &sb.density(d), &p, &cfg).map_err(lib_err)?;
        match a.sublattice.as_str() {
            "a" => tr.final_rho_a,
            "b" => tr.final_rho_b,
            other => return Err(spec_err(format!("sublattice must be a or b, got `{other}`"))),
        }
    } else {
        parse_state(&a.state, p.dim())?
    };
    let grid = observables::wigner(&rho, &GridSpec::square(a.half, a.points)).map_err(lib_err)?;
    let mut buf = Vec::new();
    grid.write_csv(&mut buf).map_err(lib_err)?;
    if grid.boundary_ratio > 1e-3 {
        eprintln!("warning: Wigner function reaches {:.1e} of its peak at the grid edge", grid.boundary_ratio);
    }
    write_out(a.output.as_deref(), std::str::from_utf8(&buf)?)
}

fn cluster_sweep_cmd(a: ClusterSweepArgs) -> anyhow::Result<ExitCode> {
    let mut u_values = Vec::new();
    for u in &a.u {
        u_values.push(match u.trim() {
            "inf" | "hard-core" => None,
            v => Some(v.parse::<f64>().map_err(|_| spec_err(format!("bad onsite Kerr value `{v}`")))?),
        });
    }
    let mut base = ModelParams { omega: 0.75, ..Default::default() };
    apply_sets(&mut base, &a.point.set)?;
    let spec = ThresholdSpec {
        u_values,
        base,
        n_max_meanfield: a.n_max_meanfield,
        n_max_cluster: a.n_max_cluster,
        zv_range: (a.zv_min, a.zv_max),
        tol: a.tol,
        classify: ClassifyConfig::default(),
        solver_meanfield: SolverSettings::default(),
        solver_cluster: SolverSettings { truncation_tol: 1.0, ..SolverSettings::cluster() },
    };
    let rows = recipes::run_thresholds(&spec, workers()?).map_err(lib_err)?;
    for r in &rows {
        for e in &r.errors {
            eprintln!("u = {:?}: {e}", r.u);
        }
    }
    write_out(a.output.as_deref(), &recipes::threshold_csv(&rows))?;
    let failed: usize = rows.iter().map(|r| r.errors.len()).sum();
    Ok(failure_code(failed as f64 / (2 * rows.len()).max(1) as f64))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CircuitConfig {
    circuit: CircuitParams,
    #[serde(default)]
    options: CircuitOptions,
    lattice: Option<LatticeConfig>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LatticeConfig {
    #[serde(default = "default_z")]
    z: u32,
    /// Drive amplitude [rad/s].
    omega_drive: f64,
    /// Loss rate [rad/s].
    kappa: f64,
    #[serde(default = "default_n_max")]
    n_max: usize,
}

fn default_z() -> u32 {
    4
}

fn default_n_max() -> usize {
    12
}

#[derive(Serialize)]
struct CircuitReport {
    couplings: EffectiveCouplings,
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<ModelParams>,
}

fn circuit_cmd(a: CircuitArgs) -> anyhow::Result<()> {
    let text = fs::read_to_string(&a.config).map_err(|e| spec_err(format!("{}: {e}", a.config.display())))?;
    let cfg: CircuitConfig = serde_json::from_str(&text).map_err(|e| spec_err(format!("{}: {e}", a.config.display())))?;
    let ec = circuit::derive_couplings(&cfg.circuit, &cfg.options).map_err(lib_err)?;
    let model = match &cfg.lattice {
        Some(l) => Some(circuit::to_model_params(&ec, l.z, l.omega_drive, l.kappa, l.n_max).map_err(lib_err)?),
        None => None,
    };
    let report = CircuitReport { couplings: ec, model };
    println!("{}", serde_json::to_string_pretty(&report)?);
    println!();
    print!("{}", circuit_table(&report));
    Ok(())
}

fn circuit_table(r: &CircuitReport) -> String {
    let c = &r.couplings;
    let mut rows = vec![
        ("omega", c.omega, "rad/s"),
        ("E_C", c.e_c, "J"),
        ("E_C (printed form)", c.e_c_printed, "J/F"),
        ("alpha", c.alpha, ""),
        ("X_J", c.x_j, ""),
        ("L_J", c.l_j, "H"),
        ("U", c.u, "rad/s"),
        ("V", c.v, "rad/s"),
        ("J", c.j, "rad/s"),
        ("J2", c.j2, "rad/s"),
        ("Jn", c.jn, "rad/s"),
        ("delta_omega", c.delta_omega, "rad/s"),
        ("delta", c.delta, "rad/s"),
    ];
    if let Some(m) = &r.model {
        rows.extend([
            ("model delta", m.delta, "kappa"),
            ("model omega", m.omega, "kappa"),
            ("model u", m.u, "kappa"),
            ("model zv", m.zv, "kappa"),
            ("model zj", m.zj, "kappa"),
            ("model zj2", m.zj2, "kappa"),
            ("model zjn", m.zjn, "kappa"),
        ]);
    }
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    rows.iter().map(|(name, v, unit)| format!("{name:<width$}  {v:>16.9e}  {unit}\n")).collect()
}

fn reproduce_cmd(a: ReproduceArgs) -> anyhow::Result<ExitCode> {
    let classify = if a.t_max.is_some() || a.burn_in.is_some() {
        let mut c = ClassifyConfig::default();
        c.t_max = a.t_max.unwrap_or(c.t_max);
        c.burn_in = a.burn_in.unwrap_or(c.burn_in);
        Some(c)
    } else {
        None
    };
    let overrides = RecipeOverrides { points: a.points, classify };
    let rep = recipes::reproduce(&a.figure, &a.out_dir, &overrides, workers()?).map_err(lib_err)?;
    for f in &rep.files {
        println!("{}", f.display());
    }
    if let Some(rows) = &rep.thresholds {
        print!("{}", recipes::threshold_csv(rows));
    }
    for (suffix, map) in &rep.maps {
        let max_dn = map.rows.iter().map(|r| r.delta_n).filter(|v| v.is_finite()).fold(0.0, f64::max);
        eprintln!(
            "{} {suffix}: {} points, max delta_n {max_dn:.4}, {} undecided, {} failed",
            a.figure,
            map.rows.len(),
            map.undecided(),
            map.failures()
        );
    }
    Ok(failure_code(rep.failures as f64 / rep.grid_points.max(1) as f64))
}
