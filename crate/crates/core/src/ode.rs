//! Adaptive Dormand–Prince 5(4) integrator over flat real or complex state
//! vectors.

use std::ops::{Add, Mul};

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Element type of an integrated state vector.
pub trait OdeScalar: Copy + Default + Add<Output = Self> + Mul<f64, Output = Self> {
    fn magnitude(self) -> f64;
    fn is_finite_value(self) -> bool;
}

impl OdeScalar for f64 {
    fn magnitude(self) -> f64 {
        self.abs()
    }
    fn is_finite_value(self) -> bool {
        self.is_finite()
    }
}

impl OdeScalar for C64 {
    fn magnitude(self) -> f64 {
        self.norm()
    }
    fn is_finite_value(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

/// Autonomous first-order system `dy/dt = f(y)`.
pub trait OdeSystem {
    type Elem: OdeScalar;
    fn rhs(&mut self, y: &[Self::Elem], dy: &mut [Self::Elem]);
}

/// Common interface of the integrators driven by the samplers.
pub trait Stepper {
    type Elem: OdeScalar;
    fn t(&self) -> f64;
    fn y(&self) -> &[Self::Elem];
    /// Derivative at the current state.
    fn dy(&self) -> &[Self::Elem];
    fn stats(&self) -> StepStats;
    /// Advances to exactly `t_end`, calling `on_step` after every accepted
    /// step. Returns `false` if the callback requested an early stop.
    fn advance_to<F>(&mut self, t_end: f64, on_step: F) -> Result<bool>
    where
        F: FnMut(f64, &[Self::Elem], &[Self::Elem]) -> bool;
}

#[derive(Clone, Copy, Debug)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { rtol: 1e-8, atol: 1e-10 }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// error coefficients: b5 - b4
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Dormand–Prince stepper holding its state, last derivative (FSAL) and
/// proposed step size.
pub struct Dopri5<S: OdeSystem> {
    pub sys: S,
    t: f64,
    y: Vec<S::Elem>,
    f: Vec<S::Elem>,
    h: f64,
    tol: Tolerance,
    h_max: f64,
    stats: StepStats,
    k: [Vec<S::Elem>; 6],
    ytmp: Vec<S::Elem>,
    ynew: Vec<S::Elem>,
}

impl<S: OdeSystem> Dopri5<S> {
    pub fn new(mut sys: S, t0: f64, y0: Vec<S::Elem>, tol: Tolerance) -> Self {
        let n = y0.len();
        let mut f = vec![S::Elem::default(); n];
        sys.rhs(&y0, &mut f);
        let z = || vec![S::Elem::default(); n];
        let mut me = Self {
            sys,
            t: t0,
            y: y0,
            f,
            h: 0.0,
            tol,
            h_max: f64::INFINITY,
            stats: StepStats { rhs_evals: 1, ..Default::default() },
            k: [z(), z(), z(), z(), z(), z()],
            ytmp: z(),
            ynew: z(),
        };
        me.h = me.initial_step();
        me
    }

    pub fn set_max_step(&mut self, h_max: f64) {
        self.h_max = h_max;
    }

    /// Replaces the state (e.g. after a perturbation) and re-evaluates the
    /// derivative.
    pub fn reset_state(&mut self, y: Vec<S::Elem>) {
        assert_eq!(y.len(), self.y.len());
        self.y = y;
        self.sys.rhs(&self.y, &mut self.f);
        self.stats.rhs_evals += 1;
        self.h = self.initial_step();
    }

    fn scaled_norm(&self, v: &[S::Elem]) -> f64 {
        let n = v.len().max(1) as f64;
        let s: f64 = v
            .iter()
            .zip(&self.y)
            .map(|(e, y)| {
                let sc = self.tol.atol + self.tol.rtol * y.magnitude();
                (e.magnitude() / sc).powi(2)
            })
            .sum();
        (s / n).sqrt()
    }

    fn initial_step(&self) -> f64 {
        let d0 = self.scaled_norm(&self.y);
        let d1 = self.scaled_norm(&self.f);
        let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h.min(self.h_max).max(1e-8)
    }

    /// Attempts one step of size at most `h_limit`; returns whether it was
    /// accepted.
    fn try_step(&mut self, h_limit: f64) -> Result<bool> {
        let proposal = self.h.min(self.h_max);
        let h = proposal.min(h_limit);
        let clipped = h < proposal;
        let n = self.y.len();
        let y = &self.y;
        let f: &[S::Elem] = &self.f;
        let tmp = &mut self.ytmp;
        let [k2, k3, k4, k5, k6, k7] = &mut self.k;
        combine(y, h, &[(f, A21)], tmp);
        self.sys.rhs(tmp, k2);
        combine(y, h, &[(f, A31), (&k2[..], A32)], tmp);
        self.sys.rhs(tmp, k3);
        combine(y, h, &[(f, A41), (&k2[..], A42), (&k3[..], A43)], tmp);
        self.sys.rhs(tmp, k4);
        combine(y, h, &[(f, A51), (&k2[..], A52), (&k3[..], A53), (&k4[..], A54)], tmp);
        self.sys.rhs(tmp, k5);
        combine(y, h, &[(f, A61), (&k2[..], A62), (&k3[..], A63), (&k4[..], A64), (&k5[..], A65)], tmp);
        self.sys.rhs(tmp, k6);
        let ynew = &mut self.ynew;
        combine(y, h, &[(f, A71), (&k3[..], A73), (&k4[..], A74), (&k5[..], A75), (&k6[..], A76)], ynew);
        self.sys.rhs(ynew, k7);
        self.stats.rhs_evals += 6;

        let mut err_sum = 0.0;
        let mut finite = true;
        for i in 0..n {
            let e = (f[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * h;
            let yn = ynew[i];
            finite &= yn.is_finite_value();
            let sc = self.tol.atol + self.tol.rtol * y[i].magnitude().max(yn.magnitude());
            err_sum += (e.magnitude() / sc).powi(2);
        }
        let err = (err_sum / n.max(1) as f64).sqrt();
        if !finite || !err.is_finite() {
            self.h = h * 0.2;
            self.stats.rejected += 1;
            if self.h < 1e-14 * self.t.abs().max(1.0) {
                return Err(Error::NonFinite { t: self.t });
            }
            return Ok(false);
        }
        let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        if err <= 1.0 {
            self.t += h;
            std::mem::swap(&mut self.y, &mut self.ynew);
            std::mem::swap(&mut self.f, &mut self.k[5]);
            self.stats.accepted += 1;
            if !clipped {
                self.h = h * fac;
            }
            Ok(true)
        } else {
            self.h = h * fac.min(1.0);
            self.stats.rejected += 1;
            if self.h < 1e-12 * self.t.abs().max(1.0) {
                return Err(Error::StepSizeUnderflow { t: self.t, h: self.h });
            }
            Ok(false)
        }
    }

}

impl<S: OdeSystem> Stepper for Dopri5<S> {
    type Elem = S::Elem;

    fn t(&self) -> f64 {
        self.t
    }

    fn y(&self) -> &[S::Elem] {
        &self.y
    }

    fn dy(&self) -> &[S::Elem] {
        &self.f
    }

    fn stats(&self) -> StepStats {
        self.stats
    }

    fn advance_to<F>(&mut self, t_end: f64, mut on_step: F) -> Result<bool>
    where
        F: FnMut(f64, &[S::Elem], &[S::Elem]) -> bool,
    {
        while self.t < t_end {
            let remaining = t_end - self.t;
            if remaining <= 1e-13 * t_end.abs().max(1.0) {
                self.t = t_end;
                break;
            }
            let last = self.h.min(self.h_max) >= remaining;
            if self.try_step(remaining)? {
                if last && (t_end - self.t).abs() < 1e-9 * t_end.abs().max(1.0) {
                    self.t = t_end;
                }
                if !on_step(self.t, &self.y, &self.f) {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }
}

fn combine<T: OdeScalar>(y: &[T], h: f64, terms: &[(&[T], f64)], out: &mut [T]) {
    for i in 0..y.len() {
        let mut acc = T::default();
        for &(k, a) in terms {
            acc = acc + k[i] * a;
        }
        out[i] = y[i] + acc * h;
    }
}

/// Euclidean norm of a state-derivative vector.
pub fn l2_norm<T: OdeScalar>(v: &[T]) -> f64 {
    v.iter().map(|x| x.magnitude().powi(2)).sum::<f64>().sqrt()
}
