//! Order parameter, Wigner function and quadrature squeezing of single-site
//! states.

use std::io::Write;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{make_ladder_ops, DensityMatrix, FockOperator};
use crate::format::sig9;
use crate::meanfield::TrajectoryRecord;

/// Threshold below unity for calling a quadrature squeezed.
pub const EPS_SQ: f64 = 1e-3;

/// Time-averaged sublattice imbalance over the recorded samples.
pub fn order_parameter(traj: &TrajectoryRecord) -> f64 {
    crate::classify::mean_imbalance(&traj.n_a, &traj.n_b)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub np: usize,
}

impl GridSpec {
    /// Square grid `[-half, half]^2` with `n` nodes per axis.
    pub fn square(half: f64, n: usize) -> Self {
        Self { x_min: -half, x_max: half, nx: n, p_min: -half, p_max: half, np: n }
    }

    fn validate(&self) -> Result<()> {
        if self.nx < 2 || self.np < 2 || !(self.x_max > self.x_min) || !(self.p_max > self.p_min) {
            return Err(Error::InvalidParameter(format!("degenerate Wigner grid {self:?}")));
        }
        Ok(())
    }

    fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
    }
}

/// `W(x, p)` normalized so that its phase-space integral is `pi * tr(rho)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WignerGrid {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    /// `values[i][j] = W(x[i], p[j])`.
    pub values: Vec<Vec<f64>>,
    /// Largest boundary magnitude relative to the global maximum.
    pub boundary_ratio: f64,
    /// False when the grid clips the state (boundary above 1e-6 of the peak).
    pub adequate: bool,
}

impl WignerGrid {
    pub fn dx(&self) -> f64 {
        self.x[1] - self.x[0]
    }

    pub fn dp(&self) -> f64 {
        self.p[1] - self.p[0]
    }

    /// Riemann sum of the grid values.
    pub fn integral(&self) -> f64 {
        self.values.iter().flatten().sum::<f64>() * self.dx() * self.dp()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().flatten().cloned().fold(f64::INFINITY, f64::min)
    }

    /// CSV with header `x,p,w`, one line per node, x outermost.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "x,p,w")?;
        for (i, x) in self.x.iter().enumerate() {
            for (j, p) in self.p.iter().enumerate() {
                writeln!(out, "{},{},{}", sig9(*x), sig9(*p), sig9(self.values[i][j]))?;
            }
        }
        Ok(())
    }
}

/// Generalized Laguerre polynomials `L_k^{(alpha)}(x)` for `k = 0..=n`.
fn laguerre_all(n: usize, alpha: f64, x: f64) -> Vec<f64> {
    let mut l = Vec::with_capacity(n + 1);
    l.push(1.0);
    if n >= 1 {
        l.push(1.0 + alpha - x);
    }
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + alpha - x) * l[k] - (kf + alpha) * l[k - 1]) / (kf + 1.0);
        l.push(next);
    }
    l
}

/// Matrix elements `<m|D(beta)|n>` of the displacement operator.
fn displacement_elements(beta: C64, d: usize) -> Vec<Vec<C64>> {
    let x = beta.norm_sqr();
    let gauss = (-x / 2.0).exp();
    let mut ln_fact = vec![0.0f64; d + 1];
    for k in 1..=d {
        ln_fact[k] = ln_fact[k - 1] + (k as f64).ln();
    }
    let mut out = vec![vec![C64::new(0.0, 0.0); d]; d];
    for diff in 0..d {
        let lag = laguerre_all(d - 1 - diff, diff as f64, x);
        let up = beta.powu(diff as u32);
        let down = (-beta.conj()).powu(diff as u32);
        for k in 0..d - diff {
            // m = k + diff >= n = k
            let ratio = (0.5 * (ln_fact[k] - ln_fact[k + diff])).exp();
            let common = gauss * ratio * lag[k];
            out[k + diff][k] = up * common;
            if diff > 0 {
                out[k][k + diff] = down * common;
            }
        }
    }
    out
}

/// Wigner function of `rho` on a rectangular grid, via
/// `W = sum_{m,n} rho_{nm} (-1)^n <m|D(2 alpha)|n>` with
/// `alpha = (x + i p) / sqrt(2)`.
pub fn wigner(rho: &DensityMatrix, spec: &GridSpec) -> Result<WignerGrid> {
    spec.validate()?;
    let d = rho.dim();
    let m = rho.matrix();
    let x = GridSpec::axis(spec.x_min, spec.x_max, spec.nx);
    let p = GridSpec::axis(spec.p_min, spec.p_max, spec.np);
    let values: Vec<Vec<f64>> = x
        .par_iter()
        .map(|&xv| {
            p.iter()
                .map(|&pv| {
                    let beta = C64::new(xv, pv) * std::f64::consts::SQRT_2;
                    let dm = displacement_elements(beta, d);
                    let mut acc = C64::new(0.0, 0.0);
                    for n in 0..d {
                        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                        for (mm, row) in dm.iter().enumerate() {
                            acc += m[(n, mm)] * row[n] * sign;
                        }
                    }
                    acc.re
                })
                .collect()
        })
        .collect();
    let peak = values.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut edge = 0.0f64;
    for (i, row) in values.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if i == 0 || j == 0 || i + 1 == values.len() || j + 1 == row.len() {
                edge = edge.max(v.abs());
            }
        }
    }
    let boundary_ratio = if peak > 0.0 { edge / peak } else { 0.0 };
    Ok(WignerGrid { x, p, values, boundary_ratio, adequate: boundary_ratio < 1e-6 })
}

/// Quadrature uncertainties with `X1 = a + a^dag`, `X2 = i (a^dag - a)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SqueezingReport {
    pub dx1: f64,
    pub dx2: f64,
    pub squeezed: bool,
}

/// Quadrature report from `<n>`, `<a>` and `<a^2>`; second moments use
/// the untruncated commutator `[a, a^dag] = 1`.
pub fn quadratures_from_moments(n: f64, psi: C64, phi: C64) -> SqueezingReport {
    let x1 = 2.0 * psi.re;
    let x2 = 2.0 * psi.im;
    let x1sq = 2.0 * phi.re + 2.0 * n + 1.0;
    let x2sq = -2.0 * phi.re + 2.0 * n + 1.0;
    let dx1 = (x1sq - x1 * x1).max(0.0).sqrt();
    let dx2 = (x2sq - x2 * x2).max(0.0).sqrt();
    SqueezingReport { dx1, dx2, squeezed: dx1.min(dx2) < 1.0 - EPS_SQ }
}

pub fn quadratures(rho: &DensityMatrix) -> SqueezingReport {
    let ops = make_ladder_ops(rho.dim() - 1).expect("dim >= 2");
    let aa = FockOperator::new(ops.a.matrix() * ops.a.matrix()).expect("square");
    quadratures_from_moments(rho.expect(&ops.n).re, rho.expect(&ops.a), rho.expect(&aa))
}

/// How many sublattices show squeezing at some time of the recorded tail.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SqueezeRegion {
    None,
    One,
    Both,
}

impl SqueezeRegion {
    pub fn as_str(self) -> &'static str {
        match self {
            SqueezeRegion::None => "none",
            SqueezeRegion::One => "one",
            SqueezeRegion::Both => "both",
        }
    }
}

/// Smallest quadrature uncertainty of each sublattice over the tail.
pub fn min_uncertainties(traj: &TrajectoryRecord) -> (f64, f64) {
    let min_of = |n: &[f64], psi: &[C64], phi: &[C64]| {
        n.iter()
            .zip(psi)
            .zip(phi)
            .map(|((n, psi), phi)| {
                let r = quadratures_from_moments(*n, *psi, *phi);
                r.dx1.min(r.dx2)
            })
            .fold(f64::INFINITY, f64::min)
    };
    (
        min_of(&traj.n_a, &traj.psi_a, &traj.phi_a),
        min_of(&traj.n_b, &traj.psi_b, &traj.phi_b),
    )
}

pub fn squeezing_region(traj: &TrajectoryRecord) -> SqueezeRegion {
    let (a, b) = min_uncertainties(traj);
    match ((a < 1.0 - EPS_SQ) as u8) + ((b < 1.0 - EPS_SQ) as u8) {
        0 => SqueezeRegion::None,
        1 => SqueezeRegion::One,
        _ => SqueezeRegion::Both,
    }
}

/// Region tag for every trajectory of a phase map.
pub fn squeezing_region_map(trajectories: &[TrajectoryRecord]) -> Vec<SqueezeRegion> {
    trajectories.iter().map(squeezing_region).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vacuum_and_fock_quadratures() {
        let r = quadratures(&DensityMatrix::vacuum(8));
        assert!((r.dx1 - 1.0).abs() < 1e-12 && (r.dx2 - 1.0).abs() < 1e-12 && !r.squeezed);
        let r = quadratures(&DensityMatrix::fock(1, 8).unwrap());
        assert!((r.dx1 - 3f64.sqrt()).abs() < 1e-12 && (r.dx2 - 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn displacement_is_unitary() {
        // columns well below the cutoff keep unit norm
        let dm = displacement_elements(C64::new(0.3, -0.2), 40);
        for n in 0..5 {
            let norm: f64 = (0..40).map(|m| dm[m][n].norm_sqr()).sum();
            assert!((norm - 1.0).abs() < 1e-12, "{n}: {norm}");
        }
    }

    #[test]
    fn vacuum_peak_is_one() {
        let g = wigner(&DensityMatrix::vacuum(6), &GridSpec::square(5.0, 101)).unwrap();
        assert!((g.max() - 1.0).abs() < 1e-12);
        assert!((g.integral() - std::f64::consts::PI).abs() < 0.01 * std::f64::consts::PI);
        assert!(g.adequate);
    }

    #[test]
    fn clipped_grid_is_flagged() {
        let g = wigner(&DensityMatrix::vacuum(4), &GridSpec::square(1.0, 11)).unwrap();
        assert!(!g.adequate);
    }
}
