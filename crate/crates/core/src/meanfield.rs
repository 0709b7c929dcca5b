//! Two-sublattice single-site mean-field dynamics.
//!
//! Each sublattice carries its own density matrix; the Hamiltonian of one
//! sublattice depends on the instantaneous moments of the other. Both
//! master equations are integrated together as one flat complex vector.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::classify::{classify_seeds, ClassifyConfig, PairEngine, PairRun, PhaseLabel, RunWindow, SeedSet};
use crate::error::{Error, Result};
use crate::etd::Etd4;
use crate::fock::{make_ladder_ops, top_levels_population, DensityMatrix, FockOperator, LadderOps, Physicality};
use crate::ode::{l2_norm, Dopri5, OdeSystem, StepStats, Stepper, Tolerance};
use crate::params::ModelParams;
use crate::sparse::{
    from_row_major, lindblad_apply, liouvillian_diagonal, to_row_major, CsrMatrix, LindbladWorkspace, LinearFamily, LossChannel,
};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Moments of one sublattice that enter the other sublattice's Hamiltonian.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct MeanFieldSnapshot {
    /// `tr(n rho)`
    pub w: f64,
    /// `tr(a rho)`
    pub psi: C64,
    /// `tr(a a rho)`
    pub phi: C64,
    /// `tr(n a rho)`
    pub chi: C64,
}

pub fn mean_fields(rho: &DensityMatrix) -> MeanFieldSnapshot {
    let ops = make_ladder_ops(rho.dim() - 1).expect("density matrices have dim >= 2");
    let aa = FockOperator::new(ops.a.matrix() * ops.a.matrix()).expect("square");
    let na = FockOperator::new(ops.n.matrix() * ops.a.matrix()).expect("square");
    MeanFieldSnapshot {
        w: rho.expect(&ops.n).re,
        psi: rho.expect(&ops.a),
        phi: rho.expect(&aa),
        chi: rho.expect(&na),
    }
}

/// Coefficients of `[n, a^dag, a, a^dag^2, a^2, a^dag n, n a]` in the
/// field-dependent part of the Hamiltonian.
fn field_coefficients(p: &ModelParams, other: &MeanFieldSnapshot) -> [C64; 7] {
    let lin = -(other.psi * p.zj) - other.chi * p.zjn;
    let pair = other.phi * (p.zj2 / 2.0);
    let cubic = -(other.psi * p.zjn);
    [C64::new(p.zv * other.w, 0.0), lin, lin.conj(), pair, pair.conj(), cubic, cubic.conj()]
}

/// Single-site Hamiltonian of one sublattice given the other's moments.
pub fn mf_hamiltonian(params: &ModelParams, other: &MeanFieldSnapshot, ops: &LadderOps) -> Result<FockOperator> {
    let vals = [other.w, other.psi.re, other.psi.im, other.phi.re, other.phi.im, other.chi.re, other.chi.im];
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("mean-field snapshot is not finite".into()));
    }
    let (a, adag, n) = (ops.a.matrix(), ops.adag.matrix(), ops.n.matrix());
    let d = ops.dim();
    let id = DMatrix::<C64>::identity(d, d);
    let c = |x: f64| C64::new(x, 0.0);
    let mut h = n * c(-params.delta) + (a + adag) * c(params.omega) + n * (n - &id) * c(params.u);
    let basis = [n.clone(), adag.clone(), a.clone(), adag * adag, a * a, adag * n, n * a];
    for (coef, op) in field_coefficients(params, other).iter().zip(&basis) {
        h += op * *coef;
    }
    FockOperator::new(h)
}

/// Sparse operators of one site: the static Hamiltonian family, the loss
/// channel and the moment operators.
#[derive(Clone, Debug)]
pub(crate) struct SiteOperators {
    pub dim: usize,
    pub family: LinearFamily,
    pub loss: Vec<LossChannel>,
    pub a: CsrMatrix,
    pub n: CsrMatrix,
    pub aa: CsrMatrix,
    pub na: CsrMatrix,
}

impl SiteOperators {
    pub fn new(params: &ModelParams) -> Result<Self> {
        let ops = make_ladder_ops(params.n_max)?;
        let d = ops.dim();
        let a = CsrMatrix::from_dense(ops.a.matrix());
        let adag = a.adjoint();
        let n = CsrMatrix::from_dense(ops.n.matrix());
        let id = CsrMatrix::identity(d);
        let c = |x: f64| C64::new(x, 0.0);
        let base = n
            .scale(c(-params.delta))
            .add(&a.add(&adag).scale(c(params.omega)))
            .add(&n.matmul(&n.add(&id.scale(c(-1.0)))).scale(c(params.u)));
        let aa = a.matmul(&a);
        let na = n.matmul(&a);
        let terms = [n.clone(), adag.clone(), a.clone(), adag.matmul(&adag), aa.clone(), adag.matmul(&n), na.clone()];
        Ok(Self {
            dim: d,
            family: LinearFamily::new(&base, &terms),
            loss: vec![LossChannel::new(a.clone(), params.kappa)],
            a,
            n,
            aa,
            na,
        })
    }

    pub fn snapshot(&self, rho: &[C64]) -> MeanFieldSnapshot {
        MeanFieldSnapshot {
            w: self.n.expect(rho).re,
            psi: self.a.expect(rho),
            phi: self.aa.expect(rho),
            chi: self.na.expect(rho),
        }
    }
}

/// Coupled pair of master equations as an ODE system.
struct PairSystem {
    params: ModelParams,
    site: SiteOperators,
    ws: LindbladWorkspace,
}

impl OdeSystem for PairSystem {
    type Elem = C64;

    fn rhs(&mut self, y: &[C64], dy: &mut [C64]) {
        let m = self.site.dim * self.site.dim;
        let (ra, rb) = y.split_at(m);
        let (da, db) = dy.split_at_mut(m);
        let sa = self.site.snapshot(ra);
        let sb = self.site.snapshot(rb);
        self.site.family.assemble(&field_coefficients(&self.params, &sb));
        lindblad_apply(&self.site.family, &self.site.loss, ra, da, &mut self.ws);
        self.site.family.assemble(&field_coefficients(&self.params, &sa));
        lindblad_apply(&self.site.family, &self.site.loss, rb, db, &mut self.ws);
    }
}

/// Largest diagonal Liouvillian rate for which the explicit method is
/// preferred; beyond it steps are limited by stability, not accuracy.
const AUTO_STIFFNESS: f64 = 100.0;

/// Integrator and validity settings shared by the density-matrix engines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub rtol: f64,
    pub atol: f64,
    /// Largest allowed population of the two highest Fock levels.
    pub truncation_tol: f64,
    /// Full eigenvalue positivity check every this many samples.
    pub positivity_every: usize,
    pub integrator: Integrator,
}

/// Time stepper used for density-matrix evolution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// Exponential method when the Liouvillian diagonal is stiff, explicit
    /// otherwise.
    #[default]
    Auto,
    /// Explicit Dormand–Prince 5(4).
    Dopri5,
    /// Exponential Runge–Kutta treating the diagonal of the Liouvillian
    /// exactly; suited to large Fock spaces with fast phase rotation.
    Exponential,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { rtol: 1e-8, atol: 1e-12, truncation_tol: 1e-6, positivity_every: 10, integrator: Integrator::default() }
    }
}

impl SolverSettings {
    /// Settings for the plaquette at `n_max > 1`, where explicit steps are
    /// limited by stability rather than accuracy.
    pub fn cluster() -> Self {
        Self { atol: 1e-11, integrator: Integrator::Exponential, ..Self::default() }
    }

    pub fn tolerance(&self) -> Tolerance {
        Tolerance { rtol: self.rtol, atol: self.atol }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveConfig {
    pub t_max: f64,
    pub record_from: f64,
    pub sample_dt: f64,
    /// Stop as soon as the norm of the equations of motion drops below this
    /// value; zero disables early exit.
    pub early_exit_residual: f64,
    pub solver: SolverSettings,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self { t_max: 400.0, record_from: 200.0, sample_dt: 0.1, early_exit_residual: 0.0, solver: SolverSettings::default() }
    }
}

/// Worst-case validity figures of one integration.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct RunDiagnostics {
    /// Worst density-matrix invariants over all checked samples.
    pub physicality: Physicality,
    pub max_truncation_weight: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub rhs_evals: usize,
}

impl RunDiagnostics {
    fn record_steps(&mut self, s: StepStats) {
        self.accepted_steps += s.accepted;
        self.rejected_steps += s.rejected;
        self.rhs_evals += s.rhs_evals;
    }
}

#[derive(Clone, Debug)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub n_a: Vec<f64>,
    pub n_b: Vec<f64>,
    pub psi_a: Vec<C64>,
    pub psi_b: Vec<C64>,
    /// `<a a>` series, used for quadrature variances.
    pub phi_a: Vec<C64>,
    pub phi_b: Vec<C64>,
    pub final_rho_a: DensityMatrix,
    pub final_rho_b: DensityMatrix,
    /// Integration ended early on a fixed point.
    pub stationary: bool,
    /// Norm of the pair's equations of motion at the final state.
    pub final_residual: f64,
    pub diagnostics: RunDiagnostics,
}

/// Samples taken on a regular grid inside `[record_from, t_max]`, plus the
/// final state when integration stops early.
pub(crate) struct Sampler<'a> {
    pub window: RunWindow,
    pub early_exit: f64,
    pub positivity_every: usize,
    pub truncation_tol: f64,
    pub n_max: usize,
    /// Splits the flat state into the matrices to check.
    pub blocks: &'a [(usize, usize)],
    /// Local dimension when a block is a multi-site product space.
    pub site_dim: Option<usize>,
}

pub(crate) struct SampledRun {
    pub times: Vec<f64>,
    pub samples: Vec<Vec<C64>>,
    pub final_y: Vec<C64>,
    pub stationary: bool,
    pub final_residual: f64,
    pub diagnostics: RunDiagnostics,
}

impl Sampler<'_> {
    fn check(&self, y: &[C64], full: bool, diag: &mut RunDiagnostics) -> Result<()> {
        for &(offset, d) in self.blocks {
            let m = from_row_major(d, &y[offset..offset + d * d]);
            let top = if self.n_max <= 1 {
                // two-level sites are the hard-core model itself, not a cutoff
                0.0
            } else {
                match self.site_dim {
                    Some(sd) if sd != d => site_top_population(&m, sd),
                    _ => top_levels_population(&m),
                }
            };
            diag.max_truncation_weight = diag.max_truncation_weight.max(top);
            if top > self.truncation_tol {
                return Err(Error::TruncationOverflow { population: top, tolerance: self.truncation_tol, n_max: self.n_max });
            }
            if full {
                diag.physicality = diag.physicality.worst(Physicality::of(&m));
            } else {
                let cheap = Physicality {
                    hermiticity_defect: crate::fock::hermiticity_defect(&m),
                    trace_error: (m.trace() - C64::new(1.0, 0.0)).norm(),
                    min_eigenvalue: f64::INFINITY,
                };
                diag.physicality = diag.physicality.worst(cheap);
            }
        }
        Ok(())
    }

    /// Builds the stepper selected in `solver` and runs it over the window.
    /// `lin` supplies the diagonal linear part for the exponential method.
    pub fn run_system<S: OdeSystem<Elem = C64>>(
        &self,
        sys: S,
        y0: Vec<C64>,
        lin: impl FnOnce() -> Vec<C64>,
        solver: &SolverSettings,
        observe: impl FnMut(&[C64]) -> Vec<C64>,
    ) -> Result<SampledRun> {
        let dt = self.window.sample_dt;
        let h_max = dt.max(1.0);
        let mut lin = Some(lin);
        let mut diag = None;
        let integrator = match solver.integrator {
            Integrator::Auto => {
                let l = (lin.take().expect("unused"))();
                let stiffness = l.iter().map(|z| z.norm()).fold(0.0, f64::max);
                diag = Some(l);
                if stiffness > AUTO_STIFFNESS {
                    Integrator::Exponential
                } else {
                    Integrator::Dopri5
                }
            }
            other => other,
        };
        match integrator {
            Integrator::Auto => unreachable!("resolved above"),
            Integrator::Dopri5 => {
                let mut stepper = Dopri5::new(sys, 0.0, y0, solver.tolerance());
                stepper.set_max_step(h_max);
                self.run(&mut stepper, observe)
            }
            Integrator::Exponential => {
                let l = diag.unwrap_or_else(|| (lin.take().expect("unused"))());
                let mut stepper = Etd4::new(sys, 0.0, y0, l, solver.tolerance(), dt);
                stepper.set_max_level((h_max / dt).log2().floor() as i32);
                self.run(&mut stepper, observe)
            }
        }
    }

    /// Integrates `stepper` over the window. `observe` extracts the values
    /// stored per sample and must be linear in the state: samples between
    /// steps are cubic Hermite interpolants built from `observe(y)` and
    /// `observe(dy/dt)` at the step ends.
    pub fn run<S: Stepper<Elem = C64>>(
        &self,
        stepper: &mut S,
        mut observe: impl FnMut(&[C64]) -> Vec<C64>,
    ) -> Result<SampledRun> {
        let t0 = stepper.t();
        let w = self.window;
        let mut diag = RunDiagnostics { physicality: Physicality { min_eigenvalue: f64::INFINITY, ..Default::default() }, ..Default::default() };
        let mut times = Vec::new();
        let mut samples = Vec::new();
        let n_samples = ((w.duration - w.record_from) / w.sample_dt + 1e-9).floor() as usize;
        let sample_time = |k: usize| w.record_from + k as f64 * w.sample_dt;
        let mut next = 0usize;
        let mut prev = (0.0, observe(stepper.y()), observe(stepper.dy()));
        if w.record_from == 0.0 {
            times.push(0.0);
            samples.push(prev.1.clone());
            next = 1;
        }
        let mut failure = None;
        let mut steps = 0usize;
        let thr = self.early_exit;
        let finished = stepper.advance_to(t0 + w.duration, |t, y, dy| {
            let t = t - t0;
            let cur = (t, observe(y), observe(dy));
            let every = self.positivity_every.max(1);
            // full eigenvalue checks once per `every` samples, and every
            // `10 * every` steps before the window opens
            let mut full = next == 0 && steps % (10 * every) == 0;
            while next <= n_samples && sample_time(next) <= t + 1e-9 {
                let ts = sample_time(next);
                times.push(ts);
                samples.push(hermite(&prev, &cur, ts));
                full |= next % every == 0;
                next += 1;
            }
            prev = cur;
            steps += 1;
            if let Err(e) = self.check(y, full, &mut diag) {
                failure = Some(e);
                return false;
            }
            thr <= 0.0 || l2_norm(dy) >= thr
        })?;
        if let Some(e) = failure {
            return Err(e);
        }
        let stationary = !finished;
        if stationary {
            let t = stepper.t() - t0;
            if times.last().map_or(true, |&last| t > last + 1e-12) {
                times.push(t);
                samples.push(observe(stepper.y()));
            }
        }
        self.check(stepper.y(), true, &mut diag)?;
        diag.record_steps(stepper.stats());
        Ok(SampledRun {
            times,
            samples,
            final_y: stepper.y().to_vec(),
            stationary,
            final_residual: l2_norm(stepper.dy()),
            diagnostics: diag,
        })
    }
}

/// Cubic Hermite interpolation between `(t, value, derivative)` triples.
fn hermite(a: &(f64, Vec<C64>, Vec<C64>), b: &(f64, Vec<C64>, Vec<C64>), t: f64) -> Vec<C64> {
    let h = b.0 - a.0;
    if h <= 0.0 {
        return b.1.clone();
    }
    let s = ((t - a.0) / h).clamp(0.0, 1.0);
    let (s2, s3) = (s * s, s * s * s);
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    (0..a.1.len())
        .map(|i| a.1[i] * h00 + a.2[i] * (h10 * h) + b.1[i] * h01 + b.2[i] * (h11 * h))
        .collect()
}

/// Largest single-site population of the two highest levels in a
/// multi-site state.
fn site_top_population(m: &DMatrix<C64>, sd: usize) -> f64 {
    let dim = m.nrows();
    let n_sites = (dim as f64).log(sd as f64).round() as usize;
    let mut per_site = vec![0.0; n_sites];
    for idx in 0..dim {
        let p = m[(idx, idx)].re.max(0.0);
        let mut r = idx;
        for site in (0..n_sites).rev() {
            if r % sd + 2 >= sd {
                per_site[site] += p;
            }
            r /= sd;
        }
    }
    per_site.into_iter().fold(0.0, f64::max)
}

fn check_pair(params: &ModelParams, rho_a: &DensityMatrix, rho_b: &DensityMatrix) -> Result<()> {
    params.validate()?;
    let d = params.dim();
    for r in [rho_a, rho_b] {
        if r.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, found: r.dim() });
        }
    }
    Ok(())
}

fn integrate_pair(
    params: &ModelParams,
    rho_a: &DensityMatrix,
    rho_b: &DensityMatrix,
    window: RunWindow,
    early_exit: f64,
    solver: &SolverSettings,
) -> Result<(TrajectoryRecord, Vec<C64>)> {
    check_pair(params, rho_a, rho_b)?;
    if !(window.duration > window.record_from && window.record_from >= 0.0 && window.sample_dt > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need t_max > record_from >= 0 and sample_dt > 0, got {window:?}"
        )));
    }
    let site = SiteOperators::new(params)?;
    let d = site.dim;
    let m = d * d;
    let mut y0 = to_row_major(rho_a.matrix());
    y0.extend(to_row_major(rho_b.matrix()));
    let sys = PairSystem { params: params.clone(), site: site.clone(), ws: LindbladWorkspace::new(d) };
    let blocks = [(0, d), (m, d)];
    let sampler = Sampler {
        window,
        early_exit,
        positivity_every: solver.positivity_every,
        truncation_tol: solver.truncation_tol,
        n_max: params.n_max,
        blocks: &blocks,
        site_dim: None,
    };
    let lin = || {
        let mut l = liouvillian_diagonal(&site.family, &site.loss);
        l.extend_from_within(..);
        l
    };
    let run = sampler.run_system(sys, y0, lin, solver, |y| {
        let (ra, rb) = y.split_at(m);
        vec![
            site.n.expect(ra),
            site.n.expect(rb),
            site.a.expect(ra),
            site.a.expect(rb),
            site.aa.expect(ra),
            site.aa.expect(rb),
        ]
    })?;
    let record = TrajectoryRecord {
        times: run.times,
        n_a: run.samples.iter().map(|s| s[0].re).collect(),
        n_b: run.samples.iter().map(|s| s[1].re).collect(),
        psi_a: run.samples.iter().map(|s| s[2]).collect(),
        psi_b: run.samples.iter().map(|s| s[3]).collect(),
        phi_a: run.samples.iter().map(|s| s[4]).collect(),
        phi_b: run.samples.iter().map(|s| s[5]).collect(),
        final_rho_a: DensityMatrix::from_trusted(from_row_major(d, &run.final_y[..m])),
        final_rho_b: DensityMatrix::from_trusted(from_row_major(d, &run.final_y[m..])),
        stationary: run.stationary,
        final_residual: run.final_residual,
        diagnostics: run.diagnostics,
    };
    Ok((record, run.final_y))
}

/// Integrates the self-consistently coupled sublattice pair and samples the
/// populations and coherences on `[record_from, t_max]`.
pub fn evolve_pair(
    rho_a: &DensityMatrix,
    rho_b: &DensityMatrix,
    params: &ModelParams,
    cfg: &EvolveConfig,
) -> Result<TrajectoryRecord> {
    let window = RunWindow { duration: cfg.t_max, record_from: cfg.record_from, sample_dt: cfg.sample_dt };
    integrate_pair(params, rho_a, rho_b, window, cfg.early_exit_residual, &cfg.solver).map(|(r, _)| r)
}

/// Norm of the pair's equations of motion at the given state.
pub fn pair_residual(params: &ModelParams, rho_a: &DensityMatrix, rho_b: &DensityMatrix) -> Result<f64> {
    check_pair(params, rho_a, rho_b)?;
    let site = SiteOperators::new(params)?;
    let d = site.dim;
    let mut y = to_row_major(rho_a.matrix());
    y.extend(to_row_major(rho_b.matrix()));
    let mut dy = vec![ZERO; y.len()];
    let mut sys = PairSystem { params: params.clone(), site, ws: LindbladWorkspace::new(d) };
    sys.rhs(&y, &mut dy);
    Ok(l2_norm(&dy))
}

/// State of the mean-field engine: one density matrix per sublattice.
#[derive(Clone, Debug, PartialEq)]
pub struct PairState {
    pub rho_a: DensityMatrix,
    pub rho_b: DensityMatrix,
}

pub struct MeanFieldEngine {
    pub params: ModelParams,
    pub solver: SolverSettings,
}

impl PairEngine for MeanFieldEngine {
    type State = PairState;

    fn run(&self, start: &PairState, window: RunWindow, early_exit: f64) -> Result<PairRun<PairState>> {
        let (rec, _) = integrate_pair(&self.params, &start.rho_a, &start.rho_b, window, early_exit, &self.solver)?;
        Ok(PairRun {
            times: rec.times,
            n_a: rec.n_a,
            n_b: rec.n_b,
            final_state: PairState { rho_a: rec.final_rho_a, rho_b: rec.final_rho_b },
            stationary: rec.stationary,
            final_residual: rec.final_residual,
            physicality: Some(rec.diagnostics.physicality),
        })
    }

    fn perturb(&self, state: &PairState, eps: f64) -> PairState {
        let d = state.rho_a.dim();
        let kick = DensityMatrix::coherent(C64::new(1.0, 0.0), d);
        let m = state.rho_a.matrix().scale(1.0 - eps) + kick.matrix().scale(eps);
        PairState { rho_a: DensityMatrix::from_trusted(m), rho_b: state.rho_b.clone() }
    }

    fn is_symmetric(&self, state: &PairState) -> bool {
        (state.rho_a.matrix() - state.rho_b.matrix()).camax() < 1e-9
    }
}

/// Initial pairs of a named seed set at the given local dimension.
pub fn seed_pairs(set: &SeedSet, dim: usize) -> Vec<PairState> {
    set.pairs()
        .iter()
        .map(|(a, b)| PairState { rho_a: a.density(dim), rho_b: b.density(dim) })
        .collect()
}

/// Phase of a parameter point from the long-time behaviour of every seed.
pub fn classify(params: &ModelParams, seeds: &[PairState], cfg: &ClassifyConfig, solver: &SolverSettings) -> Result<PhaseLabel> {
    params.validate()?;
    for s in seeds {
        check_pair(params, &s.rho_a, &s.rho_b)?;
    }
    let engine = MeanFieldEngine { params: params.clone(), solver: solver.clone() };
    classify_seeds(&engine, seeds, cfg)
}

/// Time-averaged sublattice imbalance reached from `seed`, used to locate
/// the crystallization threshold.
pub fn steady_imbalance(params: &ModelParams, seed: &PairState, cfg: &ClassifyConfig, solver: &SolverSettings) -> Result<f64> {
    let engine = MeanFieldEngine { params: params.clone(), solver: solver.clone() };
    let run = engine.run(seed, cfg.window(), cfg.early_exit_residual)?;
    let start = run.times.partition_point(|&t| t < cfg.burn_in - 1e-9).min(run.times.len() - 1);
    Ok(crate::classify::mean_imbalance(&run.n_a[start..], &run.n_b[start..]))
}
