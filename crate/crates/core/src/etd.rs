//! Exponential Runge–Kutta integrator for `dy/dt = lin * y + N(y)` with a
//! constant, elementwise (diagonal) linear part.
//!
//! Fourth-order Cox–Matthews stages. A step is accepted outright when the
//! embedded second-order solution already agrees within tolerance; otherwise
//! step doubling decides.
//! Step sizes live on a ladder `grid * 2^k` so the exponential coefficients
//! can be cached. Steady states of the full system are exact fixed points of
//! the scheme.

use std::collections::HashMap;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::ode::{OdeSystem, StepStats, Stepper, Tolerance};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const MAX_CACHED_LEVELS: usize = 12;

/// `phi_1..phi_3` at `z`.
fn phis(z: C64) -> [C64; 3] {
    if z.norm() < 0.5 {
        // phi_k(z) = sum_m z^m / (m + k)!
        let mut out = [ZERO; 3];
        for (k, o) in out.iter_mut().enumerate() {
            let mut term = C64::new(1.0 / (1..=k + 1).product::<usize>() as f64, 0.0);
            let mut acc = term;
            for m in 1..20 {
                term = term * z / (m + k + 1) as f64;
                acc += term;
            }
            *o = acc;
        }
        out
    } else {
        let p1 = (z.exp() - 1.0) / z;
        let p2 = (p1 - 1.0) / z;
        let p3 = (p2 - 0.5) / z;
        [p1, p2, p3]
    }
}

struct Coeffs {
    e_half: Vec<C64>,
    /// `(h/2) phi_1(h lin / 2)`
    p_half: Vec<C64>,
    e_full: Vec<C64>,
    f1: Vec<C64>,
    f2: Vec<C64>,
    f3: Vec<C64>,
    /// `h phi_1`, `h phi_2` of the embedded second-order solution.
    g1: Vec<C64>,
    g2: Vec<C64>,
}

impl Coeffs {
    fn new(lin: &[C64], h: f64) -> Self {
        let n = lin.len();
        let mut cols: [Vec<C64>; 8] = std::array::from_fn(|_| Vec::with_capacity(n));
        let mut memo: HashMap<(u64, u64), [C64; 8]> = HashMap::new();
        for &l in lin {
            let v = *memo.entry((l.re.to_bits(), l.im.to_bits())).or_insert_with(|| {
                let z = l * h;
                let [h1, _, _] = phis(z * 0.5);
                let [p1, p2, p3] = phis(z);
                [
                    (z * 0.5).exp(),
                    h1 * (0.5 * h),
                    z.exp(),
                    (p1 - p2 * 3.0 + p3 * 4.0) * h,
                    (p2 - p3 * 2.0) * h,
                    (p3 * 4.0 - p2) * h,
                    p1 * h,
                    p2 * h,
                ]
            });
            for (col, x) in cols.iter_mut().zip(v) {
                col.push(x);
            }
        }
        let [e_half, p_half, e_full, f1, f2, f3, g1, g2] = cols;
        Coeffs { e_half, p_half, e_full, f1, f2, f3, g1, g2 }
    }
}

/// Stage buffers.
struct Work {
    nu: Vec<C64>,
    na: Vec<C64>,
    nb: Vec<C64>,
    nc: Vec<C64>,
    a: Vec<C64>,
    b: Vec<C64>,
    c: Vec<C64>,
}

/// `N(x) = f(x) - lin * x`.
fn nonlinear<S: OdeSystem<Elem = C64>>(sys: &mut S, lin: &[C64], x: &[C64], out: &mut [C64]) {
    sys.rhs(x, out);
    for ((o, xv), l) in out.iter_mut().zip(x).zip(lin) {
        *o -= l * xv;
    }
}

/// One Cox–Matthews step from `y` with derivative `fy`. With `embedded`
/// set, also returns the scaled RMS distance to the second-order solution.
#[allow(clippy::too_many_arguments)]
fn etd4_step<S: OdeSystem<Elem = C64>>(
    sys: &mut S,
    lin: &[C64],
    co: &Coeffs,
    y: &[C64],
    fy: &[C64],
    w: &mut Work,
    out: &mut [C64],
    embedded: Option<Tolerance>,
) -> f64 {
    let n = y.len();
    for i in 0..n {
        w.nu[i] = fy[i] - lin[i] * y[i];
        w.a[i] = co.e_half[i] * y[i] + co.p_half[i] * w.nu[i];
    }
    nonlinear(sys, lin, &w.a, &mut w.na);
    for i in 0..n {
        w.b[i] = co.e_half[i] * y[i] + co.p_half[i] * w.na[i];
    }
    nonlinear(sys, lin, &w.b, &mut w.nb);
    for i in 0..n {
        w.c[i] = co.e_half[i] * w.a[i] + co.p_half[i] * (w.nb[i] * 2.0 - w.nu[i]);
    }
    nonlinear(sys, lin, &w.c, &mut w.nc);
    let mut err_sum = 0.0;
    for i in 0..n {
        let base = co.e_full[i] * y[i];
        out[i] = base + co.f1[i] * w.nu[i] + co.f2[i] * (w.na[i] + w.nb[i]) * 2.0 + co.f3[i] * w.nc[i];
        if let Some(tol) = embedded {
            let y2 = base + co.g1[i] * w.nu[i] + co.g2[i] * (w.nc[i] - w.nu[i]);
            let sc = tol.atol + tol.rtol * y[i].norm().max(out[i].norm());
            err_sum += ((out[i] - y2).norm() / sc).powi(2);
        }
    }
    (err_sum / n.max(1) as f64).sqrt()
}

pub struct Etd4<S: OdeSystem<Elem = C64>> {
    pub sys: S,
    lin: Vec<C64>,
    t: f64,
    y: Vec<C64>,
    /// Full derivative at `y`.
    f: Vec<C64>,
    tol: Tolerance,
    grid: f64,
    level: i32,
    max_level: i32,
    cache: HashMap<i32, Coeffs>,
    stats: StepStats,
    work: Work,
    y_big: Vec<C64>,
    y_mid: Vec<C64>,
    f_mid: Vec<C64>,
    y_end: Vec<C64>,
}

impl<S: OdeSystem<Elem = C64>> Etd4<S> {
    /// `lin` is the diagonal linear part; `sys.rhs` returns the full
    /// derivative including it. `grid` is the base step of the ladder and
    /// should divide the times the caller advances to.
    pub fn new(mut sys: S, t0: f64, y0: Vec<C64>, lin: Vec<C64>, tol: Tolerance, grid: f64) -> Self {
        assert_eq!(lin.len(), y0.len());
        assert!(grid > 0.0);
        let n = y0.len();
        let mut f = vec![ZERO; n];
        sys.rhs(&y0, &mut f);
        let z = || vec![ZERO; n];
        Self {
            sys,
            lin,
            t: t0,
            y: y0,
            f,
            tol,
            grid,
            level: -3,
            max_level: 4,
            cache: HashMap::new(),
            stats: StepStats { rhs_evals: 1, ..Default::default() },
            work: Work { nu: z(), na: z(), nb: z(), nc: z(), a: z(), b: z(), c: z() },
            y_big: z(),
            y_mid: z(),
            f_mid: z(),
            y_end: z(),
        }
    }

    /// Largest ladder step is `grid * 2^max_level`.
    pub fn set_max_level(&mut self, level: i32) {
        self.max_level = level;
        self.level = self.level.min(level);
    }

    fn step_of(&self, level: i32) -> f64 {
        self.grid * 2f64.powi(level)
    }

    fn take_coeffs(&mut self, level: i32) -> Coeffs {
        match self.cache.remove(&level) {
            Some(c) => c,
            None => Coeffs::new(&self.lin, self.step_of(level)),
        }
    }

    fn return_coeffs(&mut self, level: i32, co: Coeffs) {
        if self.cache.len() >= MAX_CACHED_LEVELS {
            self.cache.clear();
        }
        self.cache.insert(level, co);
    }

    /// One full step, checked against its embedded solution and, if that is
    /// inconclusive, against two half steps (whose result is then kept).
    fn try_step(&mut self, level: Option<i32>, h_exact: f64) -> Result<bool> {
        let big = match level {
            Some(k) => self.take_coeffs(k),
            None => Coeffs::new(&self.lin, h_exact),
        };
        let lin = &self.lin;
        let sys = &mut self.sys;
        let quick = etd4_step(sys, lin, &big, &self.y, &self.f, &mut self.work, &mut self.y_big, Some(self.tol));
        self.stats.rhs_evals += 3;
        if let Some(k) = level {
            self.return_coeffs(k, big);
        }
        let quick_ok = quick <= 1.0 && self.y_big.iter().all(|v| v.re.is_finite() && v.im.is_finite());
        if quick_ok {
            std::mem::swap(&mut self.y_end, &mut self.y_big);
            return self.accept(level, h_exact, quick / 8.0);
        }
        let half = match level {
            Some(k) => self.take_coeffs(k - 1),
            None => Coeffs::new(&self.lin, 0.5 * h_exact),
        };
        let lin = &self.lin;
        let sys = &mut self.sys;
        etd4_step(sys, lin, &half, &self.y, &self.f, &mut self.work, &mut self.y_mid, None);
        sys.rhs(&self.y_mid, &mut self.f_mid);
        etd4_step(sys, lin, &half, &self.y_mid, &self.f_mid, &mut self.work, &mut self.y_end, None);
        self.stats.rhs_evals += 7;
        if let Some(k) = level {
            self.return_coeffs(k - 1, half);
        }

        let mut err_sum = 0.0;
        let mut finite = true;
        for i in 0..self.y.len() {
            let ye = self.y_end[i];
            finite &= ye.re.is_finite() && ye.im.is_finite();
            let sc = self.tol.atol + self.tol.rtol * self.y[i].norm().max(ye.norm());
            err_sum += ((ye - self.y_big[i]).norm() / (15.0 * sc)).powi(2);
        }
        let err = (err_sum / self.y.len().max(1) as f64).sqrt();
        if !finite || !err.is_finite() || err > 1.0 {
            self.stats.rejected += 1;
            let drop = if finite && err.is_finite() {
                // local error ~ h^5
                ((err.log2() / 5.0).ceil() as i32).max(1)
            } else {
                2
            };
            let from = level.unwrap_or(self.level).min(self.level);
            self.level = from - drop;
            if self.step_of(self.level) < 1e-12 * self.t.abs().max(1.0) {
                return Err(if finite {
                    Error::StepSizeUnderflow { t: self.t, h: self.step_of(self.level) }
                } else {
                    Error::NonFinite { t: self.t }
                });
            }
            return Ok(false);
        }
        self.accept(level, h_exact, err)
    }

    /// Commits `y_end`. `err` is the doubling-scale error estimate of the
    /// step just taken.
    fn accept(&mut self, level: Option<i32>, h_exact: f64, err: f64) -> Result<bool> {
        self.t += level.map_or(h_exact, |k| self.step_of(k));
        std::mem::swap(&mut self.y, &mut self.y_end);
        self.sys.rhs(&self.y, &mut self.f);
        self.stats.rhs_evals += 1;
        self.stats.accepted += 1;
        // climb a rung when a doubled step would still pass with margin
        if level == Some(self.level) && err * 32.0 < 0.5 {
            self.level = (self.level + 1).min(self.max_level);
        }
        Ok(true)
    }
}

impl<S: OdeSystem<Elem = C64>> Stepper for Etd4<S> {
    type Elem = C64;

    fn t(&self) -> f64 {
        self.t
    }

    fn y(&self) -> &[C64] {
        &self.y
    }

    fn dy(&self) -> &[C64] {
        &self.f
    }

    fn stats(&self) -> StepStats {
        self.stats
    }

    fn advance_to<F>(&mut self, t_end: f64, mut on_step: F) -> Result<bool>
    where
        F: FnMut(f64, &[C64], &[C64]) -> bool,
    {
        let eps = 1e-10 * t_end.abs().max(1.0);
        while t_end - self.t > eps {
            let remaining = t_end - self.t;
            // largest rung that fits; an off-ladder step finishes slivers
            let mut k = self.level;
            while k > self.level - 8 && self.step_of(k) > remaining + eps {
                k -= 1;
            }
            let accepted = if self.step_of(k) <= remaining + eps {
                self.try_step(Some(k), 0.0)?
            } else {
                self.try_step(None, remaining)?
            };
            if accepted {
                if (t_end - self.t).abs() < eps {
                    self.t = t_end;
                }
                if !on_step(self.t, &self.y, &self.f) {
                    return Ok(false);
                }
            }
        }
        self.t = self.t.max(t_end);
        Ok(true)
    }
}
