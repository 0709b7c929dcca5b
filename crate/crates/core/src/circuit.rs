//! Lumped-element circuit values to lattice couplings.
//!
//! Two LC resonators joined by a capacitively shunted Josephson junction give,
//! after a fourth-order expansion of the junction cosine and a rotating-wave
//! approximation, linear hopping, onsite Kerr, cross-Kerr and correlated
//! hopping with fixed ratios. Couplings are returned as angular frequencies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ModelParams;

pub const HBAR: f64 = 1.054_571_817e-34;
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Reduced flux quantum `hbar / 2e`.
pub const PHI0: f64 = HBAR / (2.0 * ELEMENTARY_CHARGE);
/// Largest `C_J / C` accepted without an override.
pub const MAX_CJ_RATIO: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitParams {
    /// Inductance [H].
    #[serde(rename = "L")]
    pub l: f64,
    /// Capacitance [F].
    #[serde(rename = "C")]
    pub c: f64,
    /// Junction capacitance [F].
    #[serde(rename = "C_J")]
    pub c_j: f64,
    /// Josephson energy [J].
    #[serde(rename = "E_J")]
    pub e_j: f64,
    /// Drive angular frequency [rad/s].
    pub drive_frequency: f64,
    /// SQUID flux control, multiplies `E_J`.
    #[serde(default = "one")]
    pub flux_bias: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CircuitOptions {
    /// Accept `C_J / C >= 0.2`.
    pub allow_large_cj: bool,
    /// Use `Jn = -alpha E_C` as read off the correlated-hopping term instead
    /// of the default `Jn = -J2`.
    pub literal_jn_sign: bool,
    /// Normal-ordering frequency shift [rad/s]; zero unless supplied.
    pub delta_omega: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveCouplings {
    /// Mode angular frequency `1/sqrt(L~ C~)` [rad/s].
    pub omega: f64,
    /// Charging energy `e^2 / (2 C~)` [J].
    pub e_c: f64,
    /// `e^2 / (2 C~^2)`, kept for display only [J/F].
    pub e_c_printed: f64,
    pub alpha: f64,
    pub x_j: f64,
    pub l_j: f64,
    pub u: f64,
    pub v: f64,
    pub j: f64,
    pub j2: f64,
    pub jn: f64,
    pub delta_omega: f64,
    /// `drive_frequency - (omega + delta_omega)` [rad/s].
    pub delta: f64,
}

impl CircuitParams {
    pub fn validate(&self, opts: &CircuitOptions) -> Result<()> {
        let finite = [self.l, self.c, self.c_j, self.e_j, self.drive_frequency, self.flux_bias]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParameter("circuit values must be finite".into()));
        }
        if self.l <= 0.0 || self.c <= 0.0 {
            return Err(Error::InvalidParameter("L and C must be positive".into()));
        }
        if self.c_j < 0.0 {
            return Err(Error::InvalidParameter("C_J must be non-negative".into()));
        }
        if self.e_j * self.flux_bias <= 0.0 {
            return Err(Error::InvalidParameter("flux-scaled E_J must be positive".into()));
        }
        if self.c_j / self.c >= MAX_CJ_RATIO && !opts.allow_large_cj {
            return Err(Error::InvalidParameter(format!(
                "C_J/C = {} breaks the short-range approximation (limit {MAX_CJ_RATIO})",
                self.c_j / self.c
            )));
        }
        Ok(())
    }

    pub fn effective_e_j(&self) -> f64 {
        self.e_j * self.flux_bias
    }
}

pub fn derive_couplings(cp: &CircuitParams, opts: &CircuitOptions) -> Result<EffectiveCouplings> {
    cp.validate(opts)?;
    let l_j = PHI0 * PHI0 / cp.effective_e_j();
    let l_tilde = 1.0 / (1.0 / (2.0 * cp.l) + 1.0 / l_j);
    let c_tilde = cp.c + 2.0 * cp.c_j;
    let omega = 1.0 / (l_tilde * c_tilde).sqrt();
    let e2 = ELEMENTARY_CHARGE * ELEMENTARY_CHARGE;
    let e_c = e2 / (2.0 * c_tilde);
    let alpha = 2.0 * cp.l / (2.0 * cp.l + l_j);
    let x_j = cp.c_j / c_tilde - alpha;
    let u = -alpha * e_c / HBAR;
    let j2 = u;
    let jn = if opts.literal_jn_sign { u } else { -j2 };
    Ok(EffectiveCouplings {
        omega,
        e_c,
        e_c_printed: e2 / (2.0 * c_tilde * c_tilde),
        alpha,
        x_j,
        l_j,
        u,
        v: 2.0 * u,
        j: -omega * x_j,
        j2,
        jn,
        delta_omega: opts.delta_omega,
        delta: cp.drive_frequency - (omega + opts.delta_omega),
    })
}

/// `E_J` that makes the linear hopping vanish: `L_J = 2L (C + C_J) / C_J`.
pub fn solve_cancellation(l: f64, c: f64, c_j: f64) -> Result<f64> {
    if !(l > 0.0) || !(c > 0.0) {
        return Err(Error::InvalidParameter("L and C must be positive".into()));
    }
    if c_j == 0.0 {
        return Err(Error::InvalidParameter("C_J = 0 admits no finite cancelling E_J".into()));
    }
    if !(c_j > 0.0 && c_j < c) {
        return Err(Error::InvalidParameter("cancellation needs 0 < C_J < C".into()));
    }
    let l_j = 2.0 * l * (c + c_j) / c_j;
    Ok(PHI0 * PHI0 / l_j)
}

/// Lattice parameters in units of `kappa`; `omega_drive` and `kappa` are in
/// rad/s like the couplings. Every link adds its onsite Kerr to both ends, so
/// a site with `z` links carries `z` times the per-link value and `zv = 2u`.
pub fn to_model_params(
    ec: &EffectiveCouplings,
    z: u32,
    omega_drive: f64,
    kappa: f64,
    n_max: usize,
) -> Result<ModelParams> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(Error::InvalidParameter(format!("kappa must be positive, got {kappa}")));
    }
    let zf = f64::from(z);
    let p = ModelParams {
        delta: ec.delta / kappa,
        omega: omega_drive / kappa,
        u: zf * ec.u / kappa,
        zv: zf * ec.v / kappa,
        zj: zf * ec.j / kappa,
        zj2: zf * ec.j2 / kappa,
        zjn: zf * ec.jn / kappa,
        kappa: 1.0,
        n_max,
        z,
    };
    p.validate()?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CircuitParams {
        CircuitParams {
            l: 1e-9,
            c: 400e-15,
            c_j: 20e-15,
            e_j: 2e-23,
            drive_frequency: 2.0 * std::f64::consts::PI * 7e9,
            flux_bias: 1.0,
        }
    }

    #[test]
    fn forty_two_to_one_cancels() {
        let cp = sample();
        let e_j = solve_cancellation(cp.l, cp.c, cp.c_j).unwrap();
        let ec = derive_couplings(&CircuitParams { e_j, ..cp.clone() }, &Default::default()).unwrap();
        assert!((ec.l_j / cp.l - 42.0).abs() < 1e-9);
        assert!((ec.alpha - 1.0 / 22.0).abs() < 1e-12);
        assert!(ec.x_j.abs() < 1e-12);
    }

    #[test]
    fn ratio_chain_and_signs() {
        let ec = derive_couplings(&sample(), &Default::default()).unwrap();
        assert_eq!(ec.v, 2.0 * ec.u);
        assert_eq!(ec.j2, ec.u);
        assert_eq!(ec.jn, -ec.u);
        assert!(ec.u < 0.0 && ec.omega > 0.0);
        let lit = derive_couplings(&sample(), &CircuitOptions { literal_jn_sign: true, ..Default::default() }).unwrap();
        assert_eq!(lit.jn, lit.u);
    }

    #[test]
    fn large_junction_capacitance_needs_override() {
        let cp = CircuitParams { c_j: 100e-15, ..sample() };
        assert!(derive_couplings(&cp, &Default::default()).is_err());
        assert!(derive_couplings(&cp, &CircuitOptions { allow_large_cj: true, ..Default::default() }).is_ok());
    }

    #[test]
    fn zero_junction_capacitance_has_no_cancellation() {
        assert!(solve_cancellation(1e-9, 1e-12, 0.0).is_err());
    }

    #[test]
    fn kappa_must_be_positive() {
        let ec = derive_couplings(&sample(), &Default::default()).unwrap();
        assert!(to_model_params(&ec, 4, 1.0, 0.0, 3).is_err());
        let p = to_model_params(&ec, 4, 1e6, 1e6, 3).unwrap();
        assert_eq!(p.zv, 2.0 * p.u);
    }
}
