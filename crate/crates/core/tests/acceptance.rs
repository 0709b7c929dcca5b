//! Acceptance suite: runs every criterion, prints one PASS/FAIL line each and
//! fails unless the set of failures matches the documented deviations.
//!
//! `ACCEPTANCE_ONLY=1,4,9` restricts the run to the listed criteria.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use photon_crystal::circuit::{derive_couplings, solve_cancellation, to_model_params, CircuitParams};
use photon_crystal::classify::{ClassifyConfig, PhaseTag, RunWindow, SeedSet};
use photon_crystal::cluster::{critical_v, ThresholdEngine};
use photon_crystal::fock::{DensityMatrix, Physicality, HERMITICITY_TOL, POSITIVITY_TOL, TRACE_TOL};
use photon_crystal::meanfield::{evolve_pair, EvolveConfig, SolverSettings};
use photon_crystal::observables::{quadratures, wigner, GridSpec};
use photon_crystal::ode::Tolerance;
use photon_crystal::recipes::{recipe, Recipe};
use photon_crystal::semiclassical::{
    count_uniform_roots, fixed_points_j0, integrate, jacobian, nonuniform_exists, nonuniform_threshold,
    semiclassical_rhs, FixedPointKind, SemiclassicalState,
};
use photon_crystal::sweep::{classify_point, run_sweep, Axis, Engine, SweepSpec};
use photon_crystal::ModelParams;

type C64 = Complex<f64>;

/// Criteria expected to fail, each with a recorded explanation in the README.
/// The 2x2 plaquette with the mean-field boundary used here crystallizes at
/// zV ~ 10.8 rather than the quoted 11.76.
const KNOWN_DEVIATIONS: [usize; 1] = [6];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Physicality figures collected from the evolutions of criteria 1 to 7.
#[derive(Default)]
struct PhysicalityLog {
    entries: Vec<(String, Physicality)>,
}

impl PhysicalityLog {
    fn record(&mut self, what: &str, p: Option<Physicality>) {
        match p {
            Some(p) => self.entries.push((what.to_string(), p)),
            None => self.entries.push((
                what.to_string(),
                Physicality { hermiticity_defect: f64::NAN, trace_error: f64::NAN, min_eigenvalue: f64::NAN },
            )),
        }
    }
}

fn within_limits(p: &Physicality) -> bool {
    p.trace_error < TRACE_TOL && p.hermiticity_defect < HERMITICITY_TOL && p.min_eigenvalue > -POSITIVITY_TOL
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn c1_single_cavity(log: &mut PhysicalityLog) -> Outcome {
    let t0 = Instant::now();
    let p = ModelParams { delta: 0.3, omega: 0.5, u: 0.0, zv: 0.0, zj: 0.0, n_max: 12, ..Default::default() };
    let alpha = C64::new(p.omega, 0.0) / C64::new(p.delta, 0.5 * p.kappa);
    let expected = alpha.norm_sqr();
    let cfg = EvolveConfig { t_max: 100.0, record_from: 0.0, sample_dt: 1.0, early_exit_residual: 1e-11, ..Default::default() };
    let vac = DensityMatrix::vacuum(p.dim());
    match evolve_pair(&vac, &vac, &p, &cfg) {
        Ok(r) => {
            let el = t0.elapsed();
            let n = *r.n_a.last().unwrap();
            log.record("single cavity", Some(r.diagnostics.physicality));
            let pass = (n - expected).abs() < 1e-4 && el < Duration::from_secs(1);
            outcome(pass, format!("<n> = {n:.6}, closed form {expected:.6}, {:.3} s", secs(el)))
        }
        Err(e) => outcome(false, format!("evolution failed: {e}")),
    }
}

fn c2_semiclassical_equivalence(log: &mut PhysicalityLog) -> Outcome {
    let t0 = Instant::now();
    let p = ModelParams { delta: 1.2, omega: 1.0, zv: 0.5, zj: 0.2, n_max: 16, ..Default::default() };
    let alpha_a = C64::new(0.3, -0.2);
    let rho_a = DensityMatrix::coherent(alpha_a, p.dim());
    let rho_b = DensityMatrix::vacuum(p.dim());
    let cfg = EvolveConfig {
        t_max: 50.0,
        record_from: 0.0,
        sample_dt: 0.1,
        early_exit_residual: 0.0,
        solver: SolverSettings { rtol: 1e-10, ..Default::default() },
    };
    let quantum = match evolve_pair(&rho_a, &rho_b, &p, &cfg) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("quantum evolution failed: {e}")),
    };
    log.record("semiclassical comparison", Some(quantum.diagnostics.physicality));
    let start = SemiclassicalState::from_moments((alpha_a.norm_sqr(), alpha_a), (0.0, C64::new(0.0, 0.0)));
    let window = RunWindow { duration: 50.0, record_from: 0.0, sample_dt: 0.1 };
    let classical = match integrate(&p, &start, window, 0.0, Tolerance { rtol: 1e-11, atol: 1e-13 }) {
        Ok(t) => t,
        Err(e) => return outcome(false, format!("semiclassical integration failed: {e}")),
    };
    if quantum.times.len() != classical.times.len() {
        return outcome(false, format!("sample counts differ: {} vs {}", quantum.times.len(), classical.times.len()));
    }
    let mut worst = 0.0f64;
    for (k, s) in classical.states.iter().enumerate() {
        worst = worst.max((quantum.psi_a[k] - s.psi_a()).norm()).max((quantum.psi_b[k] - s.psi_b()).norm());
    }
    let el = t0.elapsed();
    let pass = worst < 1e-3 && el < Duration::from_secs(30);
    outcome(pass, format!("max |<a> - (x - iy)| = {worst:.2e} over t in [0, 50], {:.2} s", secs(el)))
}

fn lorentz(w: f64, p: &ModelParams) -> f64 {
    let e = p.zv * w - p.delta;
    p.omega * p.omega / (e * e + 0.25)
}

/// Number of distinct real roots of the uniform cubic
/// `zv^2 w^3 - 2 delta zv w^2 + (delta^2 + 1/4) w - omega^2` from its
/// discriminant, with the relative size of the discriminant.
fn cubic_root_count(p: &ModelParams) -> (usize, f64) {
    let a = p.zv * p.zv;
    let b = -2.0 * p.delta * p.zv;
    let c = p.delta * p.delta + 0.25;
    let d = -p.omega * p.omega;
    let terms = [18.0 * a * b * c * d, -4.0 * b.powi(3) * d, b * b * c * c, -4.0 * a * c.powi(3), -27.0 * a * a * d * d];
    let disc: f64 = terms.iter().sum();
    let scale: f64 = terms.iter().map(|t| t.abs()).sum();
    (if disc > 0.0 { 3 } else { 1 }, disc.abs() / scale)
}

/// Whether a two-cycle `w -> f(w) -> w` with `f(w) != w` exists, found by a
/// dense scan of `(f(f(w)) - w) / (f(w) - w)`. The ratio is positive at
/// `w = 0` and tends to `1 + f'(w*)` at a uniform root, so a negative value
/// anywhere marks a two-cycle.
fn two_cycle_scan(p: &ModelParams, nodes: usize) -> bool {
    let hi = 4.0 * p.omega * p.omega;
    let ratio = |w: f64| {
        let fw = lorentz(w, p);
        let den = fw - w;
        if den.abs() < 1e-13 * (1.0 + w) {
            let e = p.zv * w - p.delta;
            let slope = -2.0 * p.zv * e * fw / (e * e + 0.25);
            1.0 + slope
        } else {
            (lorentz(fw, p) - w) / den
        }
    };
    // Uniform roots are where the scan is most sensitive; include them.
    let g = |w: f64| lorentz(w, p) - w;
    let mut prev = g(0.0);
    for k in 1..=nodes {
        let w = hi * k as f64 / nodes as f64;
        if ratio(w) < 0.0 {
            return true;
        }
        let cur = g(w);
        if prev.signum() != cur.signum() {
            let (mut lo, mut up) = (hi * (k - 1) as f64 / nodes as f64, w);
            for _ in 0..200 {
                let mid = 0.5 * (lo + up);
                if g(mid).signum() == g(lo).signum() {
                    lo = mid;
                } else {
                    up = mid;
                }
            }
            if ratio(0.5 * (lo + up)) < 0.0 {
                return true;
            }
        }
        prev = cur;
    }
    false
}

fn c3_fixed_point_algebra() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut checked, mut banded, mut triple, mut cycles) = (0, 0, 0, 0);
    let mut mismatches = Vec::new();
    for _ in 0..1000 {
        let p = ModelParams {
            delta: rng.gen_range(-1.5..3.0),
            omega: rng.gen_range(0.1..2.0),
            zv: 10f64.powf(rng.gen_range(-2.0..2.0)),
            ..Default::default()
        };
        let (oracle_uniform, rel_disc) = cubic_root_count(&p);
        let zc = nonuniform_threshold(p.delta, p.omega);
        if rel_disc < 1e-9 || ((p.zv - zc) / zc).abs() < 1e-9 {
            banded += 1;
            continue;
        }
        checked += 1;
        let closed = count_uniform_roots(&p).unwrap();
        let reports = fixed_points_j0(&p).unwrap();
        let j0_uniform = reports.iter().filter(|r| r.kind == FixedPointKind::Uniform).count();
        let j0_nonuniform = reports.iter().any(|r| r.kind == FixedPointKind::Nonuniform);
        let cycle = two_cycle_scan(&p, 200_000);
        triple += usize::from(oracle_uniform == 3);
        cycles += usize::from(cycle);
        if closed != oracle_uniform || j0_uniform != oracle_uniform || nonuniform_exists(&p) != cycle || j0_nonuniform != cycle {
            mismatches.push(format!(
                "(d={:.4}, O={:.4}, zV={:.4}): uniform {closed}/{j0_uniform} vs {oracle_uniform}, two-cycle {}/{j0_nonuniform} vs {cycle}",
                p.delta,
                p.omega,
                p.zv,
                nonuniform_exists(&p)
            ));
        }
    }
    let el = t0.elapsed();
    let pass = mismatches.is_empty() && el < Duration::from_secs(5);
    let mut detail = format!(
        "{checked} of {checked} samples agree ({triple} with three uniform roots, {cycles} with a two-cycle), {banded} in boundary bands, {:.2} s",
        secs(el)
    );
    if !mismatches.is_empty() {
        detail = format!("{} mismatches of {checked}, first {}, {:.2} s", mismatches.len(), mismatches[0], secs(el));
    }
    outcome(pass, detail)
}

fn c4_jacobian() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let p = ModelParams {
            delta: rng.gen_range(-2.0..2.0),
            omega: rng.gen_range(0.0..2.0),
            zv: rng.gen_range(-3.0..3.0),
            zj: rng.gen_range(-1.0..1.0),
            ..Default::default()
        };
        let s: [f64; 6] = std::array::from_fn(|k| if k % 3 == 0 { rng.gen_range(0.0..3.0) } else { rng.gen_range(-1.5..1.5) });
        let analytic = jacobian(&SemiclassicalState::from_array(s), &p).unwrap();
        let mut fd = DMatrix::<f64>::zeros(6, 6);
        let h = 1e-5;
        for col in 0..6 {
            let (mut up, mut down) = (s, s);
            up[col] += h;
            down[col] -= h;
            let fu = semiclassical_rhs(&SemiclassicalState::from_array(up), &p).unwrap().to_array();
            let fdn = semiclassical_rhs(&SemiclassicalState::from_array(down), &p).unwrap().to_array();
            for row in 0..6 {
                fd[(row, col)] = (fu[row] - fdn[row]) / (2.0 * h);
            }
        }
        let diff: f64 = (0..36).map(|k| (analytic[(k / 6, k % 6)] - fd[(k / 6, k % 6)]).powi(2)).sum::<f64>().sqrt();
        worst = worst.max(diff / analytic.norm().max(1e-300));
    }
    let el = t0.elapsed();
    outcome(worst < 1e-6 && el < Duration::from_secs(1), format!("worst relative error {worst:.2e}, {:.3} s", secs(el)))
}

fn hard_core() -> ModelParams {
    ModelParams { delta: 0.0, omega: 0.75, n_max: 1, ..Default::default() }
}

fn c5_meanfield_threshold(log: &mut PhysicalityLog) -> Outcome {
    let t0 = Instant::now();
    let cfg = ClassifyConfig::default();
    match critical_v(ThresholdEngine::MeanField, &hard_core(), (1.0, 20.0), 0.01, &cfg, &SolverSettings::default()) {
        Ok(cp) => {
            let el = t0.elapsed();
            log.record("mean-field threshold", cp.physicality);
            let pass = (cp.zv_c - 5.73).abs() <= 0.15 && el < Duration::from_secs(120);
            outcome(pass, format!("zV_c = {:.3} (target 5.73 +- 0.15), {} evaluations, {:.1} s", cp.zv_c, cp.evaluations, secs(el)))
        }
        Err(e) => outcome(false, format!("bisection failed: {e}")),
    }
}

fn c6_cluster_threshold(log: &mut PhysicalityLog) -> Outcome {
    let t0 = Instant::now();
    let cfg = ClassifyConfig::default();
    match critical_v(ThresholdEngine::Cluster, &hard_core(), (1.0, 30.0), 0.01, &cfg, &SolverSettings::default()) {
        Ok(cp) => {
            let el = t0.elapsed();
            log.record("cluster threshold", cp.physicality);
            let pass = (cp.zv_c - 11.76).abs() <= 0.3 && el < Duration::from_secs(1200);
            outcome(pass, format!("zV_c = {:.3} (target 11.76 +- 0.3), {} evaluations, {:.1} s", cp.zv_c, cp.evaluations, secs(el)))
        }
        Err(e) => outcome(false, format!("bisection failed: {e}")),
    }
}

fn c7_oscillatory_phase(log: &mut PhysicalityLog) -> Outcome {
    let t0 = Instant::now();
    let base = ModelParams { zv: 0.5, n_max: 16, ..Default::default() };
    let cfg = ClassifyConfig::default();
    let solver = SolverSettings::default();
    let run = |delta: f64, omega: f64| {
        let p = ModelParams { delta, omega, ..base.clone() };
        classify_point(Engine::Meanfield, &p, &SeedSet::Default, &cfg, &solver, 40)
    };
    let (osc, uni) = match (run(1.0, 1.0), run(-0.5, 0.5)) {
        (Ok((a, _)), Ok((b, _))) => (a, b),
        (Err(e), _) | (_, Err(e)) => return outcome(false, format!("classification failed: {e}")),
    };
    log.record("oscillatory point", osc.physicality);
    log.record("uniform point", uni.physicality);
    let pass = osc.tag == PhaseTag::Osc && osc.delta_n > 0.0 && uni.tag == PhaseTag::Uni;
    outcome(
        pass,
        format!(
            "(1, 1) -> {} with mean dn {:.3e}, amplitude {:.3}; (-0.5, 0.5) -> {}; {:.1} s",
            osc.tag.as_str(),
            osc.delta_n,
            osc.osc_amplitude,
            uni.tag.as_str(),
            secs(t0.elapsed())
        ),
    )
}

fn c8_physicality(log: &PhysicalityLog) -> Outcome {
    if log.entries.is_empty() {
        return outcome(false, "no evolutions recorded".into());
    }
    let bad: Vec<_> = log.entries.iter().filter(|(_, p)| !within_limits(p)).collect();
    let worst = log.entries.iter().map(|(_, p)| *p).reduce(Physicality::worst).unwrap();
    let summary = format!(
        "{} evolution groups: trace {:.1e}, hermiticity {:.1e}, min eigenvalue {:.1e}",
        log.entries.len(),
        worst.trace_error,
        worst.hermiticity_defect,
        worst.min_eigenvalue
    );
    if bad.is_empty() {
        outcome(true, summary)
    } else {
        outcome(false, format!("{summary}; outside limits: {}", bad.iter().map(|(w, _)| w.as_str()).collect::<Vec<_>>().join(", ")))
    }
}

fn c9_wigner() -> Outcome {
    let grid = GridSpec::square(6.0, 121);
    let vac = wigner(&DensityMatrix::vacuum(20), &grid).unwrap();
    let peak = vac.max();
    let integral = vac.integral();
    let coh = quadratures(&DensityMatrix::coherent(C64::new(0.7, -0.4), 30));
    let fock1 = quadratures(&DensityMatrix::fock(1, 20).unwrap());
    let s3 = 3f64.sqrt();
    let pass = (peak - 1.0).abs() < 1e-6
        && (integral - std::f64::consts::PI).abs() < 0.01 * std::f64::consts::PI
        && (coh.dx1 - 1.0).abs() < 1e-3
        && (coh.dx2 - 1.0).abs() < 1e-3
        && (fock1.dx1 - s3).abs() < 1e-3
        && (fock1.dx2 - s3).abs() < 1e-3;
    outcome(
        pass,
        format!(
            "vacuum peak {peak:.9}, integral {integral:.6}, coherent ({:.6}, {:.6}), |1> ({:.6}, {:.6})",
            coh.dx1, coh.dx2, fock1.dx1, fock1.dx2
        ),
    )
}

fn c10_circuit() -> Outcome {
    let base = CircuitParams {
        l: 1e-9,
        c: 400e-15,
        c_j: 20e-15,
        e_j: 0.0,
        drive_frequency: 2.0 * std::f64::consts::PI * 7e9,
        flux_bias: 1.0,
    };
    let e_j = match solve_cancellation(base.l, base.c, base.c_j) {
        Ok(v) => v,
        Err(e) => return outcome(false, format!("cancellation failed: {e}")),
    };
    let cancelled = CircuitParams { e_j, ..base };
    let ec = derive_couplings(&cancelled, &Default::default()).unwrap();
    let v_is_2u = ec.v == 2.0 * ec.u;

    // Tune the flux so that zJ / U = 0.4 / (-4), then pick kappa to set U = -4.
    let target = -0.1;
    let ratio = |flux: f64| {
        let c = derive_couplings(&CircuitParams { flux_bias: flux, ..cancelled.clone() }, &Default::default()).unwrap();
        4.0 * c.j / (4.0 * c.u) - target
    };
    let (mut lo, mut hi) = (1.0, 2.0);
    if ratio(lo).signum() == ratio(hi).signum() {
        return outcome(false, "flux bracket does not contain the hopping ratio".into());
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ratio(mid).signum() == ratio(lo).signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tuned = derive_couplings(&CircuitParams { flux_bias: 0.5 * (lo + hi), ..cancelled.clone() }, &Default::default()).unwrap();
    let kappa = 4.0 * tuned.u / -4.0;
    let p = to_model_params(&tuned, 4, 0.5 * kappa, kappa, 8).unwrap();
    let Ok(Recipe::Sweeps { sweeps }) = recipe("fig10") else {
        return outcome(false, "negative-coupling recipe missing".into());
    };
    let f = &sweeps[0].1.fixed;
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.abs().max(1.0);
    let reached = close(p.u, f.u) && close(p.zv, f.zv) && close(p.zj2, f.zj2) && close(p.zjn, f.zjn) && close(p.zj, f.zj);
    let ratios = p.zv == 2.0 * p.u && p.zv == 2.0 * p.zj2 && p.zjn.abs() == p.zj2.abs();
    let pass = v_is_2u && ec.x_j.abs() < 1e-12 && reached && ratios;
    outcome(
        pass,
        format!(
            "V = 2U {v_is_2u}; |X_J| after cancellation {:.1e}; flux {:.6} gives u {:.6}, zV {:.6}, zJ2 {:.6}, zJn {:.6}, zJ {:.6}",
            ec.x_j.abs(),
            0.5 * (lo + hi),
            p.u,
            p.zv,
            p.zj2,
            p.zjn,
            p.zj
        ),
    )
}

fn c11_cluster_shrinks() -> Outcome {
    let t0 = Instant::now();
    let cfg = ClassifyConfig::default();
    let omegas: Vec<f64> = Axis::new("omega", 0.0, 1.5, 50).values();
    let base = ModelParams { delta: 0.75, u: 2.0, zv: 5.0, ..Default::default() };
    let mf_solver = SolverSettings::default();
    let mut mf_cry = BTreeSet::new();
    let mut errors = Vec::new();
    let mut mf_labels = Vec::new();
    for (k, &om) in omegas.iter().enumerate() {
        let p = ModelParams { omega: om, n_max: 8, ..base.clone() };
        match classify_point(Engine::Meanfield, &p, &SeedSet::Default, &cfg, &mf_solver, 40) {
            Ok((l, _)) => {
                if l.tag.has_crystal() {
                    mf_cry.insert(k);
                }
                mf_labels.push(l.tag);
            }
            Err(e) => {
                errors.push(format!("mean field at {om:.4}: {e}"));
                mf_labels.push(PhaseTag::Undecided);
            }
        }
    }
    // Points already crystalline in mean field cannot break containment, so
    // the plaquette only runs where mean field finds no crystal.
    let cluster_solver = SolverSettings { truncation_tol: 1.0, ..SolverSettings::cluster() };
    let mut violations = Vec::new();
    let mut cluster_runs = 0;
    for (k, &om) in omegas.iter().enumerate() {
        if mf_cry.contains(&k) {
            continue;
        }
        cluster_runs += 1;
        let p = ModelParams { omega: om, n_max: 3, ..base.clone() };
        match classify_point(Engine::Cluster, &p, &SeedSet::Asymmetric, &cfg, &cluster_solver, 3) {
            Ok((l, _)) if l.tag.has_crystal() => violations.push(format!("{om:.4} ({})", l.tag.as_str())),
            Ok(_) => {}
            Err(e) => errors.push(format!("cluster at {om:.4}: {e}")),
        }
    }
    let el = t0.elapsed();
    let pass = violations.is_empty() && errors.is_empty() && el < Duration::from_secs(3600);
    let range = |set: &BTreeSet<usize>| match (set.first(), set.last()) {
        (Some(&a), Some(&b)) => format!("[{:.3}, {:.3}]", omegas[a], omegas[b]),
        _ => "empty".into(),
    };
    let mut detail = format!(
        "mean-field crystal on {} of 50 points {}; {cluster_runs} plaquette runs outside it, {} crystalline; {:.0} s",
        mf_cry.len(),
        range(&mf_cry),
        violations.len(),
        secs(el)
    );
    if !violations.is_empty() {
        detail.push_str(&format!("; outside: {}", violations.join(", ")));
    }
    if !errors.is_empty() {
        detail.push_str(&format!("; errors: {}", errors.join("; ")));
    }
    outcome(pass, detail)
}

fn c12_sweep_performance() -> Outcome {
    let fixed = ModelParams { zv: 0.5, ..Default::default() };
    let spec = SweepSpec::new(
        Axis::new("omega", 0.0, 1.5, 151),
        Some(Axis::new("delta", -1.0, 1.5, 126)),
        fixed,
        Engine::Semiclassical,
    );
    let t0 = Instant::now();
    let parallel = match run_sweep(&spec, 8) {
        Ok(m) => m,
        Err(e) => return outcome(false, format!("parallel sweep failed: {e}")),
    };
    let t_par = t0.elapsed();
    let t1 = Instant::now();
    let serial = match run_sweep(&spec, 1) {
        Ok(m) => m,
        Err(e) => return outcome(false, format!("serial sweep failed: {e}")),
    };
    let t_ser = t1.elapsed();
    let (a, b) = (parallel.to_csv_string(), serial.to_csv_string());
    let identical = a.as_bytes() == b.as_bytes();
    let pass = identical && t_par < Duration::from_secs(60) && parallel.failures() == 0;
    outcome(
        pass,
        format!(
            "{} points, 8 workers {:.1} s, 1 worker {:.1} s, byte-identical {identical}, {} undecided, {} failed ({} cores available)",
            parallel.rows.len(),
            secs(t_par),
            secs(t_ser),
            parallel.undecided(),
            parallel.failures(),
            std::thread::available_parallelism().map_or(1, |n| n.get())
        ),
    )
}

fn main() {
    let only: Option<BTreeSet<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let wanted = |k: usize| only.as_ref().map_or(true, |s| s.contains(&k));
    let mut log = PhysicalityLog::default();
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let mut run = |k: usize, f: &mut dyn FnMut(&mut PhysicalityLog) -> Outcome, log: &mut PhysicalityLog| {
        if wanted(k) {
            let o = f(log);
            println!("criterion {k:>2}: {} {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
            results.push((k, o));
        }
    };
    run(1, &mut c1_single_cavity, &mut log);
    run(2, &mut c2_semiclassical_equivalence, &mut log);
    run(3, &mut |_| c3_fixed_point_algebra(), &mut log);
    run(4, &mut |_| c4_jacobian(), &mut log);
    run(5, &mut c5_meanfield_threshold, &mut log);
    run(6, &mut c6_cluster_threshold, &mut log);
    run(7, &mut c7_oscillatory_phase, &mut log);
    run(8, &mut |l| c8_physicality(l), &mut log);
    run(9, &mut |_| c9_wigner(), &mut log);
    run(10, &mut |_| c10_circuit(), &mut log);
    run(11, &mut |_| c11_cluster_shrinks(), &mut log);
    run(12, &mut |_| c12_sweep_performance(), &mut log);

    let failed: BTreeSet<usize> = results.iter().filter(|(_, o)| !o.pass).map(|(k, _)| *k).collect();
    let expected: BTreeSet<usize> = KNOWN_DEVIATIONS.iter().copied().filter(|k| wanted(*k)).collect();
    let passed = results.len() - failed.len();
    println!("acceptance: {passed}/{} passed, known deviations {:?}", results.len(), expected);
    if failed != expected {
        eprintln!("acceptance: failures {failed:?} differ from the documented deviations {expected:?}");
        std::process::exit(1);
    }
}
