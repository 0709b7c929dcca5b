//! Closed equations of motion for `(<n>, Re<a>, -Im<a>)` per sublattice,
//! valid when only cross-Kerr and single-photon hopping couple the sites.
//!
//! Time is measured in units of the inverse loss rate, so the module
//! requires `kappa = 1`.

use nalgebra::{Complex, SMatrix, SVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::classify::{classify_seeds, ClassifyConfig, PairEngine, PairRun, PhaseLabel, RunWindow, SeedSet};
use crate::error::{Error, Result};
use crate::ode::{l2_norm, Dopri5, OdeSystem, Stepper, Tolerance};
use crate::params::ModelParams;

pub type Vec6 = SVector<f64, 6>;
pub type Mat6 = SMatrix<f64, 6, 6>;

/// Residual bound for accepted fixed points.
pub const FIXED_POINT_TOL: f64 = 1e-10;
/// Real-part margin separating stable from marginal eigenvalues.
pub const STABILITY_MARGIN: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct SemiclassicalState {
    pub w_a: f64,
    pub x_a: f64,
    pub y_a: f64,
    pub w_b: f64,
    pub x_b: f64,
    pub y_b: f64,
}

impl SemiclassicalState {
    pub fn to_array(self) -> [f64; 6] {
        [self.w_a, self.x_a, self.y_a, self.w_b, self.x_b, self.y_b]
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        Self { w_a: v[0], x_a: v[1], y_a: v[2], w_b: v[3], x_b: v[4], y_b: v[5] }
    }

    pub fn to_vector(self) -> Vec6 {
        Vec6::from(self.to_array())
    }

    pub fn from_vector(v: &Vec6) -> Self {
        Self::from_array([v[0], v[1], v[2], v[3], v[4], v[5]])
    }

    /// Sublattices exchanged.
    pub fn swapped(self) -> Self {
        Self { w_a: self.w_b, x_a: self.x_b, y_a: self.y_b, w_b: self.w_a, x_b: self.x_a, y_b: self.y_a }
    }

    /// `<a>` of sublattice A.
    pub fn psi_a(&self) -> Complex<f64> {
        Complex::new(self.x_a, -self.y_a)
    }

    pub fn psi_b(&self) -> Complex<f64> {
        Complex::new(self.x_b, -self.y_b)
    }

    /// Builds the state from per-sublattice `(<n>, <a>)`.
    pub fn from_moments(a: (f64, Complex<f64>), b: (f64, Complex<f64>)) -> Self {
        Self { w_a: a.0, x_a: a.1.re, y_a: -a.1.im, w_b: b.0, x_b: b.1.re, y_b: -b.1.im }
    }

    fn max_abs(&self) -> f64 {
        self.to_array().iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn check_scope(p: &ModelParams) -> Result<()> {
    p.validate()?;
    if !p.is_quadratic_regime() {
        return Err(Error::OutOfScope(format!(
            "semiclassical equations need u = zj2 = zjn = 0 (got u = {}, zj2 = {}, zjn = {})",
            p.u, p.zj2, p.zjn
        )));
    }
    if p.kappa != 1.0 {
        return Err(Error::OutOfScope(format!("semiclassical equations are written for kappa = 1, got {}", p.kappa)));
    }
    Ok(())
}

#[inline]
fn rhs_raw(p: &ModelParams, s: &[f64], d: &mut [f64]) {
    let (om, zj, zv, de) = (p.omega, p.zj, p.zv, p.delta);
    let (wa, xa, ya, wb, xb, yb) = (s[0], s[1], s[2], s[3], s[4], s[5]);
    let ea = -de + zv * wb;
    let eb = -de + zv * wa;
    d[0] = 2.0 * om * ya + 2.0 * zj * xa * yb - 2.0 * zj * ya * xb - wa;
    d[1] = -ea * ya + zj * yb - 0.5 * xa;
    d[2] = ea * xa - zj * xb + om - 0.5 * ya;
    d[3] = 2.0 * om * yb + 2.0 * zj * xb * ya - 2.0 * zj * yb * xa - wb;
    d[4] = -eb * yb + zj * ya - 0.5 * xb;
    d[5] = eb * xb - zj * xa + om - 0.5 * yb;
}

pub fn semiclassical_rhs(s: &SemiclassicalState, params: &ModelParams) -> Result<SemiclassicalState> {
    check_scope(params)?;
    let mut d = [0.0; 6];
    rhs_raw(params, &s.to_array(), &mut d);
    Ok(SemiclassicalState::from_array(d))
}

fn jacobian_raw(p: &ModelParams, s: &[f64]) -> Mat6 {
    let (om, zj, zv, de) = (p.omega, p.zj, p.zv, p.delta);
    let mut j = Mat6::zeros();
    for (me, other) in [(0usize, 3usize), (3, 0)] {
        let (w, x, y) = (me, me + 1, me + 2);
        let (wo, xo, yo) = (other, other + 1, other + 2);
        let e = -de + zv * s[wo];
        j[(w, w)] = -1.0;
        j[(w, x)] = 2.0 * zj * s[yo];
        j[(w, y)] = 2.0 * om - 2.0 * zj * s[xo];
        j[(w, xo)] = -2.0 * zj * s[y];
        j[(w, yo)] = 2.0 * zj * s[x];
        j[(x, x)] = -0.5;
        j[(x, y)] = -e;
        j[(x, wo)] = -zv * s[y];
        j[(x, yo)] = zj;
        j[(y, y)] = -0.5;
        j[(y, x)] = e;
        j[(y, wo)] = zv * s[x];
        j[(y, xo)] = -zj;
    }
    j
}

/// Analytic Jacobian of [`semiclassical_rhs`].
pub fn jacobian(s: &SemiclassicalState, params: &ModelParams) -> Result<Mat6> {
    check_scope(params)?;
    Ok(jacobian_raw(params, &s.to_array()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedPointKind {
    Uniform,
    Nonuniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stability {
    Stable,
    Unstable,
    HopfMarginal,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FixedPointReport {
    pub state: SemiclassicalState,
    pub kind: FixedPointKind,
    /// Jacobian spectrum sorted by decreasing real part.
    pub eigenvalues: Vec<Complex<f64>>,
    pub stability: Stability,
    /// Max-norm of the equations of motion at `state`.
    pub residual: f64,
}

/// Spectrum sorted by decreasing real part.
pub fn spectrum(j: &Mat6) -> Vec<Complex<f64>> {
    let mut ev: Vec<Complex<f64>> = j.complex_eigenvalues().iter().cloned().collect();
    ev.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    ev
}

pub fn classify_stability(ev: &[Complex<f64>]) -> Stability {
    if ev.iter().all(|l| l.re < -STABILITY_MARGIN) {
        return Stability::Stable;
    }
    let marginal: Vec<&Complex<f64>> = ev.iter().filter(|l| l.re.abs() <= STABILITY_MARGIN).collect();
    let rest_stable = ev.iter().filter(|l| l.re.abs() > STABILITY_MARGIN).all(|l| l.re < 0.0);
    if marginal.len() == 2 && rest_stable && marginal[0].im.abs() > STABILITY_MARGIN && (marginal[0].im + marginal[1].im).abs() <= 1e-7 {
        Stability::HopfMarginal
    } else {
        Stability::Unstable
    }
}

fn residual_max(p: &ModelParams, s: &SemiclassicalState) -> f64 {
    let mut d = [0.0; 6];
    rhs_raw(p, &s.to_array(), &mut d);
    d.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn report(p: &ModelParams, s: SemiclassicalState) -> FixedPointReport {
    let ev = spectrum(&jacobian_raw(p, &s.to_array()));
    let scale = 1.0 + s.max_abs();
    let kind = if (s.w_a - s.w_b).abs() <= 1e-8 * scale
        && (s.x_a - s.x_b).abs() <= 1e-8 * scale
        && (s.y_a - s.y_b).abs() <= 1e-8 * scale
    {
        FixedPointKind::Uniform
    } else {
        FixedPointKind::Nonuniform
    };
    FixedPointReport { state: s, kind, stability: classify_stability(&ev), eigenvalues: ev, residual: residual_max(p, &s) }
}

/// Real roots of `c[0] + c[1] x + c[2] x^2 + ...`, polished by Newton.
fn real_roots(coeffs: &[f64]) -> Vec<f64> {
    let mut c: Vec<f64> = coeffs.to_vec();
    while c.len() > 1 && c.last().map_or(false, |v| *v == 0.0) {
        c.pop();
    }
    let deg = c.len() - 1;
    let poly = |x: f64| c.iter().rev().fold(0.0, |acc, &k| acc * x + k);
    let dpoly = |x: f64| c.iter().enumerate().skip(1).rev().fold(0.0, |acc, (i, &k)| acc * x + i as f64 * k);
    let raw: Vec<f64> = match deg {
        0 => vec![],
        1 => vec![-c[0] / c[1]],
        _ => {
            let lead = c[deg];
            let comp = nalgebra::DMatrix::from_fn(deg, deg, |i, j| {
                if i == 0 {
                    -c[deg - 1 - j] / lead
                } else if i == j + 1 {
                    1.0
                } else {
                    0.0
                }
            });
            let scale = comp.amax().max(1.0);
            comp.complex_eigenvalues()
                .iter()
                .filter(|z| z.im.abs() <= 1e-7 * scale)
                .map(|z| z.re)
                .collect()
        }
    };
    let mut roots: Vec<f64> = raw
        .into_iter()
        .map(|mut x| {
            for _ in 0..50 {
                let d = dpoly(x);
                if d == 0.0 {
                    break;
                }
                let step = poly(x) / d;
                x -= step;
                if step.abs() <= 1e-16 * x.abs().max(1.0) {
                    break;
                }
            }
            x
        })
        .collect();
    roots.sort_by(|a, b| a.total_cmp(b));
    roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-10 * a.abs().max(1.0));
    roots
}

/// Coefficients (constant first) of the uniform cubic in `p = y`.
fn uniform_cubic(p: &ModelParams) -> [f64; 4] {
    let g = 4.0 * p.delta * p.delta + 1.0;
    let (zv, om) = (p.zv, p.omega);
    [-2.0 * om, g, -16.0 * zv * om * p.delta, 16.0 * zv * zv * om * om]
}

/// Coefficients (constant first) of the quadratic fixing the nonuniform
/// branch.
fn nonuniform_quadratic(p: &ModelParams) -> [f64; 3] {
    let g = 4.0 * p.delta * p.delta + 1.0;
    [g * g, -16.0 * (g * p.delta + 2.0 * p.zv * p.omega * p.omega), 16.0 * g]
}

/// Cross-Kerr strength above which the nonuniform pair exists.
pub fn nonuniform_threshold(delta: f64, omega: f64) -> f64 {
    let g = 4.0 * delta * delta + 1.0;
    g * (g.sqrt() - 2.0 * delta) / (4.0 * omega * omega)
}

pub fn nonuniform_exists(params: &ModelParams) -> bool {
    params.zv > nonuniform_threshold(params.delta, params.omega)
}

/// Number of uniform fixed points at zero hopping, from the closed-form
/// inequalities.
pub fn count_uniform_roots(params: &ModelParams) -> Result<usize> {
    if !(params.omega > 0.0 && params.zv > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "root counting needs omega > 0 and zv > 0, got omega = {}, zv = {}",
            params.omega, params.zv
        )));
    }
    let d = params.delta;
    if d <= 3f64.sqrt() / 2.0 {
        return Ok(1);
    }
    let xi = 4.0 * d * d - 3.0;
    let o2 = params.omega * params.omega;
    let center = (d * xi + 12.0 * d) / (54.0 * o2);
    let half = xi.powf(1.5) / (108.0 * o2);
    Ok(if (params.zv - center).abs() < half { 3 } else { 1 })
}

/// Newton polish on the full six-dimensional system.
fn polish(p: &ModelParams, s: SemiclassicalState) -> Option<SemiclassicalState> {
    newton(p, s.to_vector()).map(|v| SemiclassicalState::from_vector(&v))
}

fn canonical(s: SemiclassicalState) -> SemiclassicalState {
    if s.w_b > s.w_a {
        s.swapped()
    } else {
        s
    }
}

/// Fixed points at zero hopping from the closed forms.
pub fn fixed_points_j0(params: &ModelParams) -> Result<Vec<FixedPointReport>> {
    check_scope(params)?;
    if params.zj != 0.0 {
        return Err(Error::InvalidParameter(format!("closed forms need zj = 0, got {}", params.zj)));
    }
    let (de, om, zv) = (params.delta, params.omega, params.zv);
    let mut states = Vec::new();
    if zv == 0.0 {
        let psi = Complex::new(om, 0.0) / Complex::new(de, 0.5);
        let w = psi.norm_sqr();
        states.push(SemiclassicalState::from_moments((w, psi), (w, psi)));
    } else {
        for pb in real_roots(&uniform_cubic(params)) {
            if pb < 0.0 && om > 0.0 {
                continue;
            }
            let (w, x, y) = (2.0 * om * pb, 2.0 * pb * (de - 2.0 * zv * om * pb), pb);
            states.push(SemiclassicalState { w_a: w, x_a: x, y_a: y, w_b: w, x_b: x, y_b: y });
        }
        if om != 0.0 && nonuniform_exists(params) {
            let roots = real_roots(&nonuniform_quadratic(params));
            if roots.len() == 2 {
                let branch = |q: f64| {
                    (2.0 * q / zv, (8.0 * de * q - 4.0 * de * de - 1.0) / (4.0 * zv * om), q / (zv * om))
                };
                let (a, b) = (branch(roots[1]), branch(roots[0]));
                states.push(canonical(SemiclassicalState { w_a: a.0, x_a: a.1, y_a: a.2, w_b: b.0, x_b: b.1, y_b: b.2 }));
            }
        }
    }
    Ok(states
        .into_iter()
        .map(|s| report(params, polish(params, s).unwrap_or(s)))
        .collect())
}

/// Damped Newton iteration; `None` when it fails to converge.
fn newton(p: &ModelParams, mut v: Vec6) -> Option<Vec6> {
    let f_of = |v: &Vec6| {
        let mut d = [0.0; 6];
        rhs_raw(p, v.as_slice(), &mut d);
        Vec6::from(d)
    };
    let mut f = f_of(&v);
    for _ in 0..200 {
        let norm = f.amax();
        if norm < 1e-13 * (1.0 + v.amax()) {
            break;
        }
        let j = jacobian_raw(p, v.as_slice());
        let step = j.lu().solve(&f)?;
        let mut lambda = 1.0;
        loop {
            let trial = v - step * lambda;
            let ft = f_of(&trial);
            if ft.amax() < norm || lambda < 1e-6 {
                v = trial;
                f = ft;
                break;
            }
            lambda *= 0.5;
        }
        if !v.iter().all(|x| x.is_finite()) {
            return None;
        }
    }
    (f.amax() < FIXED_POINT_TOL).then_some(v)
}

/// Fixed points found by Newton iteration together with bookkeeping.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NumericFixedPoints {
    pub points: Vec<FixedPointReport>,
    /// Seeds whose iteration did not converge.
    pub failed_seeds: usize,
    /// Converged points rejected for negative photon number.
    pub unphysical: usize,
}

/// Closed-form zero-hopping points, the origin and 20 reproducible random
/// states in `[0, 5]^6`.
pub fn default_newton_seeds(params: &ModelParams) -> Vec<SemiclassicalState> {
    let mut seeds = Vec::new();
    let p0 = ModelParams { zj: 0.0, ..params.clone() };
    if let Ok(pts) = fixed_points_j0(&p0) {
        for r in pts {
            seeds.push(r.state);
            seeds.push(r.state.swapped());
        }
    }
    seeds.push(SemiclassicalState::default());
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_f1c5);
    for _ in 0..20 {
        let mut v = [0.0; 6];
        v.iter_mut().for_each(|x| *x = rng.gen_range(0.0..5.0));
        seeds.push(SemiclassicalState::from_array(v));
    }
    seeds
}

/// Newton search from every seed; duplicates within 1e-6 are merged and
/// nonuniform pairs reported once with `w_a >= w_b`.
pub fn fixed_points_numeric(params: &ModelParams, seeds: &[SemiclassicalState]) -> Result<NumericFixedPoints> {
    check_scope(params)?;
    let mut found: Vec<SemiclassicalState> = Vec::new();
    let (mut failed_seeds, mut unphysical) = (0, 0);
    for s in seeds {
        let Some(v) = newton(params, s.to_vector()) else {
            failed_seeds += 1;
            continue;
        };
        let st = canonical(SemiclassicalState::from_vector(&v));
        if st.w_a < -1e-12 || st.w_b < -1e-12 {
            unphysical += 1;
            continue;
        }
        if !found.iter().any(|f| (f.to_vector() - st.to_vector()).amax() < 1e-6) {
            found.push(st);
        }
    }
    found.sort_by(|a, b| a.w_a.total_cmp(&b.w_a).then(a.w_b.total_cmp(&b.w_b)));
    let points = found.into_iter().map(|s| report(params, s)).collect();
    Ok(NumericFixedPoints { points, failed_seeds, unphysical })
}

/// Loss of stability of a fixed-point branch through a complex pair.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HopfCrossing {
    pub parameter: String,
    /// Refined parameter value where the leading pair crosses the axis.
    pub value: f64,
    pub state: SemiclassicalState,
    /// Imaginary part of the critical pair (limit-cycle frequency).
    pub frequency: f64,
    /// Parameter values on the stable and unstable side of the crossing.
    pub stable_side: f64,
    pub unstable_side: f64,
}

fn leading_pair(p: &ModelParams, s: &SemiclassicalState) -> Option<Complex<f64>> {
    spectrum(&jacobian_raw(p, &s.to_array()))
        .into_iter()
        .find(|l| l.im.abs() > 1e-9)
}

fn leading_eig(p: &ModelParams, s: &SemiclassicalState) -> Complex<f64> {
    spectrum(&jacobian_raw(p, &s.to_array()))[0]
}

/// Scans `values` of `name` and returns every point where a continued
/// fixed-point branch loses stability through a complex-conjugate pair.
pub fn hopf_scan(params: &ModelParams, name: &str, values: &[f64]) -> Result<Vec<HopfCrossing>> {
    check_scope(params)?;
    let mut out = Vec::new();
    let mut prev: Option<(f64, Vec<SemiclassicalState>)> = None;
    for &v in values {
        let p = params.clone().with(name, v);
        p.validate()?;
        let mut seeds = default_newton_seeds(&p);
        if let Some((_, ref states)) = prev {
            seeds.extend(states.iter().cloned());
        }
        let pts: Vec<SemiclassicalState> = fixed_points_numeric(&p, &seeds)?.points.into_iter().map(|r| r.state).collect();
        if let Some((pv, ref states)) = prev {
            let pp = params.clone().with(name, pv);
            for s0 in states {
                // continue the branch: Newton from the previous point
                let Some(s1) = polish(&p, *s0).map(canonical) else { continue };
                if (s1.to_vector() - s0.to_vector()).amax() > 0.5 * (1.0 + s0.max_abs()) {
                    continue;
                }
                let (l0, l1) = (leading_eig(&pp, s0), leading_eig(&p, &s1));
                if (l0.re < 0.0) == (l1.re < 0.0) {
                    continue;
                }
                let (Some(c0), Some(c1)) = (leading_pair(&pp, s0), leading_pair(&p, &s1)) else { continue };
                if l0.im.abs() <= 1e-9 || l1.im.abs() <= 1e-9 {
                    continue;
                }
                if let Some(c) = refine_crossing(params, name, (pv, *s0), (v, s1), (c0.re, c1.re)) {
                    out.push(c);
                }
            }
        }
        prev = Some((v, pts));
    }
    Ok(out)
}

fn refine_crossing(
    base: &ModelParams,
    name: &str,
    lo: (f64, SemiclassicalState),
    hi: (f64, SemiclassicalState),
    re: (f64, f64),
) -> Option<HopfCrossing> {
    let (mut a, mut b) = (lo, hi);
    let sign_a = re.0 < 0.0;
    let mut crit = a;
    for _ in 0..60 {
        let mid = 0.5 * (a.0 + b.0);
        let p = base.clone().with(name, mid);
        let s = polish(&p, a.1).map(canonical)?;
        let l = leading_pair(&p, &s)?;
        crit = (mid, s);
        if (l.re < 0.0) == sign_a {
            a = (mid, s);
        } else {
            b = (mid, s);
        }
        if l.re.abs() <= STABILITY_MARGIN * 0.1 || (b.0 - a.0).abs() < 1e-13 {
            break;
        }
    }
    let p = base.clone().with(name, crit.0);
    let l = leading_pair(&p, &crit.1)?;
    let (stable_side, unstable_side) = if sign_a { (lo.0, hi.0) } else { (hi.0, lo.0) };
    Some(HopfCrossing {
        parameter: name.to_string(),
        value: crit.0,
        state: crit.1,
        frequency: l.im.abs(),
        stable_side,
        unstable_side,
    })
}

struct Flow {
    params: ModelParams,
}

impl OdeSystem for Flow {
    type Elem = f64;
    fn rhs(&mut self, y: &[f64], dy: &mut [f64]) {
        rhs_raw(&self.params, y, dy);
    }
}

/// Sampled semiclassical trajectory.
#[derive(Clone, Debug)]
pub struct SemiclassicalTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<SemiclassicalState>,
    pub final_state: SemiclassicalState,
    pub stationary: bool,
    pub final_residual: f64,
}

/// Integrates from `start`, sampling every `window.sample_dt` from
/// `window.record_from` on. A positive `early_exit` stops on a fixed point.
pub fn integrate(
    params: &ModelParams,
    start: &SemiclassicalState,
    window: RunWindow,
    early_exit: f64,
    tol: Tolerance,
) -> Result<SemiclassicalTrajectory> {
    check_scope(params)?;
    let mut stepper = Dopri5::new(Flow { params: params.clone() }, 0.0, start.to_array().to_vec(), tol);
    stepper.set_max_step(window.sample_dt.max(1.0));
    let mut stop = |_: f64, _: &[f64], dy: &[f64]| early_exit <= 0.0 || l2_norm(dy) >= early_exit;
    let mut times = Vec::new();
    let mut states = Vec::new();
    let snap = |y: &[f64]| SemiclassicalState::from_array([y[0], y[1], y[2], y[3], y[4], y[5]]);
    let mut stationary = !stepper.advance_to(window.record_from, &mut stop)?;
    if !stationary {
        let n = ((window.duration - window.record_from) / window.sample_dt + 1e-9).floor() as usize;
        for k in 0..=n {
            let t = window.record_from + k as f64 * window.sample_dt;
            if k > 0 && !stepper.advance_to(t, &mut stop)? {
                stationary = true;
                break;
            }
            times.push(t);
            states.push(snap(stepper.y()));
        }
    }
    if stationary && times.last().map_or(true, |&l| stepper.t() > l + 1e-12) {
        times.push(stepper.t());
        states.push(snap(stepper.y()));
    }
    if !stepper.y().iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite { t: stepper.t() });
    }
    Ok(SemiclassicalTrajectory {
        times,
        states,
        final_state: snap(stepper.y()),
        stationary,
        final_residual: l2_norm(stepper.dy()),
    })
}

pub struct SemiclassicalEngine {
    pub params: ModelParams,
    pub tol: Tolerance,
}

impl SemiclassicalEngine {
    pub fn new(params: &ModelParams) -> Result<Self> {
        check_scope(params)?;
        Ok(Self { params: params.clone(), tol: Tolerance::default() })
    }
}

impl PairEngine for SemiclassicalEngine {
    type State = SemiclassicalState;

    fn run(&self, start: &SemiclassicalState, window: RunWindow, early_exit: f64) -> Result<PairRun<SemiclassicalState>> {
        let tr = integrate(&self.params, start, window, early_exit, self.tol)?;
        Ok(PairRun {
            n_a: tr.states.iter().map(|s| s.w_a).collect(),
            n_b: tr.states.iter().map(|s| s.w_b).collect(),
            times: tr.times,
            final_state: tr.final_state,
            stationary: tr.stationary,
            final_residual: tr.final_residual,
            physicality: None,
        })
    }

    fn perturb(&self, s: &SemiclassicalState, eps: f64) -> SemiclassicalState {
        SemiclassicalState { x_a: s.x_a + eps, w_a: s.w_a + eps * (2.0 * s.x_a + eps), ..*s }
    }

    fn is_symmetric(&self, s: &SemiclassicalState) -> bool {
        (s.w_a - s.w_b).abs() < 1e-12 && (s.x_a - s.x_b).abs() < 1e-12 && (s.y_a - s.y_b).abs() < 1e-12
    }
}

pub fn seed_states(set: &SeedSet) -> Vec<SemiclassicalState> {
    set.pairs()
        .iter()
        .map(|(a, b)| SemiclassicalState::from_moments(a.moments(), b.moments()))
        .collect()
}

/// Phase label of a parameter point from the semiclassical flow.
pub fn classify(params: &ModelParams, seeds: &[SemiclassicalState], cfg: &ClassifyConfig) -> Result<PhaseLabel> {
    let engine = SemiclassicalEngine::new(params)?;
    classify_seeds(&engine, seeds, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(delta: f64, omega: f64, zv: f64, zj: f64) -> ModelParams {
        ModelParams { delta, omega, zv, zj, u: 0.0, ..Default::default() }
    }

    #[test]
    fn origin_and_drive() {
        let s = SemiclassicalState::default();
        let d = semiclassical_rhs(&s, &p(0.4, 0.0, 0.5, 0.3)).unwrap();
        assert_eq!(d, SemiclassicalState::default());
        let d = semiclassical_rhs(&s, &p(0.4, 0.6, 0.5, 0.3)).unwrap();
        assert_eq!(d, SemiclassicalState { y_a: 0.6, y_b: 0.6, ..Default::default() });
    }

    #[test]
    fn rejects_out_of_scope_couplings() {
        let mut q = p(0.0, 1.0, 0.5, 0.0);
        q.u = 1.0;
        assert!(matches!(semiclassical_rhs(&SemiclassicalState::default(), &q), Err(Error::OutOfScope(_))));
        let mut q = p(0.0, 1.0, 0.5, 0.0);
        q.kappa = 2.0;
        assert!(jacobian(&SemiclassicalState::default(), &q).is_err());
    }

    #[test]
    fn closed_form_pair_at_resonance() {
        let pts = fixed_points_j0(&p(0.0, 1.0, 0.5, 0.0)).unwrap();
        let non: Vec<_> = pts.iter().filter(|r| r.kind == FixedPointKind::Nonuniform).collect();
        assert_eq!(non.len(), 1);
        let s = non[0].state;
        // roots of 16 p^2 - 16 p + 1
        let (p1, p2) = (0.5 + 3f64.sqrt() / 4.0, 0.5 - 3f64.sqrt() / 4.0);
        assert!((s.w_a - 4.0 * p1).abs() < 1e-9 && (s.w_b - 4.0 * p2).abs() < 1e-9);
        for r in &pts {
            assert!(r.residual < FIXED_POINT_TOL);
        }
    }

    #[test]
    fn below_threshold_no_pair() {
        let pts = fixed_points_j0(&p(0.0, 0.6, 0.5, 0.0)).unwrap();
        assert!(pts.iter().all(|r| r.kind == FixedPointKind::Uniform));
        assert!((nonuniform_threshold(0.0, 0.6) - 1.0 / 1.44).abs() < 1e-12);
    }

    #[test]
    fn uniform_root_counts() {
        assert_eq!(count_uniform_roots(&p(0.5, 1.0, 0.5, 0.0)).unwrap(), 1);
        assert_eq!(count_uniform_roots(&p(1.0, 1.0, 0.241, 0.0)).unwrap(), 3);
        assert_eq!(count_uniform_roots(&p(1.0, 1.0, 0.5, 0.0)).unwrap(), 1);
        let n = fixed_points_j0(&p(1.0, 1.0, 0.241, 0.0)).unwrap().iter().filter(|r| r.kind == FixedPointKind::Uniform).count();
        assert_eq!(n, 3);
        for omega in [0.3, 0.8, 1.7] {
            let pts = fixed_points_j0(&p(-0.3, omega, 2.0, 0.0)).unwrap();
            assert_eq!(pts.iter().filter(|r| r.kind == FixedPointKind::Uniform).count(), 1);
        }
    }

    #[test]
    fn linear_limit_without_cross_kerr() {
        let pts = fixed_points_j0(&p(0.3, 0.5, 0.0, 0.0)).unwrap();
        assert_eq!(pts.len(), 1);
        assert!((pts[0].state.w_a - 0.25 / 0.34).abs() < 1e-12);
        assert_eq!(pts[0].stability, Stability::Stable);
    }

    #[test]
    fn numeric_reproduces_closed_forms_at_zero_hopping() {
        let q = p(0.0, 1.0, 0.5, 0.0);
        let closed = fixed_points_j0(&q).unwrap();
        let num = fixed_points_numeric(&q, &default_newton_seeds(&q)).unwrap();
        for c in &closed {
            assert!(num.points.iter().any(|n| (n.state.to_vector() - c.state.to_vector()).amax() < 1e-8));
        }
    }

    #[test]
    fn oscillatory_point_has_no_stable_fixed_point() {
        let q = p(1.0, 1.0, 0.5, 0.0);
        let num = fixed_points_numeric(&q, &default_newton_seeds(&q)).unwrap();
        assert!(!num.points.is_empty());
        assert!(num.points.iter().all(|r| r.stability != Stability::Stable));
    }

    #[test]
    fn real_roots_of_known_cubic() {
        // (x - 1)(x - 2)(x + 3) = x^3 - 7x + 6
        let r = real_roots(&[6.0, -7.0, 0.0, 1.0]);
        assert_eq!(r.len(), 3);
        for (a, b) in r.iter().zip([-3.0, 1.0, 2.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
