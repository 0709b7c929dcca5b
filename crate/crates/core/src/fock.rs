//! Truncated single-mode Fock space: ladder operators, density matrices and
//! the Lindblad generator for photon loss.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};

pub const HERMITICITY_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-8;
pub const POSITIVITY_TOL: f64 = 1e-8;

/// Dense operator on a truncated Fock space, indexed by photon number.
#[derive(Clone, Debug, PartialEq)]
pub struct FockOperator {
    m: DMatrix<C64>,
}

impl FockOperator {
    pub fn new(m: DMatrix<C64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::InvalidParameter(format!(
                "operator must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(Self { m })
    }

    pub fn zeros(dim: usize) -> Self {
        Self { m: DMatrix::zeros(dim, dim) }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.m
    }

    pub fn adjoint(&self) -> Self {
        Self { m: self.m.adjoint() }
    }

    /// Largest entrywise deviation from Hermiticity.
    pub fn hermiticity_defect(&self) -> f64 {
        hermiticity_defect(&self.m)
    }
}

impl std::ops::Index<(usize, usize)> for FockOperator {
    type Output = C64;
    fn index(&self, idx: (usize, usize)) -> &C64 {
        &self.m[idx]
    }
}

/// Annihilation, creation and number operators of one truncated mode.
#[derive(Clone, Debug)]
pub struct LadderOps {
    pub a: FockOperator,
    pub adag: FockOperator,
    pub n: FockOperator,
}

impl LadderOps {
    pub fn n_max(&self) -> usize {
        self.a.dim() - 1
    }

    pub fn dim(&self) -> usize {
        self.a.dim()
    }
}

pub fn make_ladder_ops(n_max: usize) -> Result<LadderOps> {
    if n_max < 1 {
        return Err(Error::InvalidParameter("n_max must be at least 1".into()));
    }
    let dim = n_max + 1;
    let mut a = DMatrix::zeros(dim, dim);
    for m in 0..n_max {
        a[(m, m + 1)] = C64::new(((m + 1) as f64).sqrt(), 0.0);
    }
    let adag = a.adjoint();
    let n = &adag * &a;
    Ok(LadderOps {
        a: FockOperator { m: a },
        adag: FockOperator { m: adag },
        n: FockOperator { m: n },
    })
}

/// Entrywise max of |m - m^dag|.
pub fn hermiticity_defect(m: &DMatrix<C64>) -> f64 {
    let d = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..d {
        for j in i..d {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Deviations of a matrix from the density-matrix invariants.
#[derive(Clone, Copy, Debug, Default, Serialize, PartialEq)]
pub struct Physicality {
    pub hermiticity_defect: f64,
    pub trace_error: f64,
    pub min_eigenvalue: f64,
}

impl Physicality {
    pub fn of(m: &DMatrix<C64>) -> Self {
        let trace = m.trace();
        let herm = (m + m.adjoint()).scale(0.5);
        let min_eigenvalue = SymmetricEigen::new(herm)
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        Self {
            hermiticity_defect: hermiticity_defect(m),
            trace_error: (trace - C64::new(1.0, 0.0)).norm(),
            min_eigenvalue,
        }
    }

    pub fn is_physical(&self) -> bool {
        self.hermiticity_defect <= HERMITICITY_TOL
            && self.trace_error <= TRACE_TOL
            && self.min_eigenvalue >= -POSITIVITY_TOL
    }

    /// Componentwise worst case of two reports.
    pub fn worst(self, other: Self) -> Self {
        Self {
            hermiticity_defect: self.hermiticity_defect.max(other.hermiticity_defect),
            trace_error: self.trace_error.max(other.trace_error),
            min_eigenvalue: self.min_eigenvalue.min(other.min_eigenvalue),
        }
    }
}

/// Hermitian, unit-trace, positive semidefinite matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    m: DMatrix<C64>,
}

impl DensityMatrix {
    /// Validates the density-matrix invariants.
    pub fn new(m: DMatrix<C64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::InvalidState("matrix is not square".into()));
        }
        let p = Physicality::of(&m);
        if p.hermiticity_defect > HERMITICITY_TOL {
            return Err(Error::InvalidState(format!(
                "Hermiticity defect {:e}",
                p.hermiticity_defect
            )));
        }
        if p.trace_error > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace error {:e}", p.trace_error)));
        }
        if p.min_eigenvalue < -POSITIVITY_TOL {
            return Err(Error::InvalidState(format!(
                "negative eigenvalue {:e}",
                p.min_eigenvalue
            )));
        }
        Ok(Self { m })
    }

    /// Wraps a matrix produced by trusted dynamics; invariants are checked
    /// by the caller through [`Physicality`].
    pub(crate) fn from_trusted(m: DMatrix<C64>) -> Self {
        Self { m }
    }

    /// Pure state from a (not necessarily normalized) amplitude vector.
    pub fn pure(amplitudes: &[C64]) -> Result<Self> {
        let norm: f64 = amplitudes.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::InvalidState("zero state vector".into()));
        }
        let d = amplitudes.len();
        let m = DMatrix::from_fn(d, d, |i, j| amplitudes[i] * amplitudes[j].conj() / (norm * norm));
        Ok(Self { m })
    }

    pub fn fock(k: usize, dim: usize) -> Result<Self> {
        if k >= dim {
            return Err(Error::InvalidParameter(format!(
                "Fock level {k} outside dimension {dim}"
            )));
        }
        let mut m = DMatrix::zeros(dim, dim);
        m[(k, k)] = C64::new(1.0, 0.0);
        Ok(Self { m })
    }

    pub fn vacuum(dim: usize) -> Self {
        Self::fock(0, dim).expect("dim >= 1")
    }

    /// Coherent state built from the exponential series, renormalized inside
    /// the truncated space.
    pub fn coherent(alpha: C64, dim: usize) -> Self {
        let mut amps = Vec::with_capacity(dim);
        let mut c = C64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
        for k in 0..dim {
            if k > 0 {
                c = c * alpha / (k as f64).sqrt();
            }
            amps.push(c);
        }
        Self::pure(&amps).expect("coherent amplitudes are nonzero")
    }

    /// Convex combination `w * self + (1 - w) * other`.
    pub fn mix(&self, other: &Self, w: f64) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::InvalidParameter(format!("mixing weight {w} outside [0, 1]")));
        }
        Ok(Self { m: self.m.scale(w) + other.m.scale(1.0 - w) })
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.m
    }

    pub fn physicality(&self) -> Physicality {
        Physicality::of(&self.m)
    }

    /// `tr(op * rho)`.
    pub fn expect(&self, op: &FockOperator) -> C64 {
        let d = self.dim();
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..d {
            for j in 0..d {
                acc += op.m[(i, j)] * self.m[(j, i)];
            }
        }
        acc
    }

    /// Photon-number distribution (diagonal of the matrix).
    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|k| self.m[(k, k)].re).collect()
    }

    /// Population of the two highest Fock levels (one level when `dim == 2`
    /// would leave nothing to compare, so the top level alone is used there).
    pub fn truncation_weight(&self) -> f64 {
        top_levels_population(&self.m)
    }

    /// Tensor product, first factor most significant.
    pub fn kron(&self, other: &Self) -> Self {
        Self { m: self.m.kronecker(&other.m) }
    }
}

pub(crate) fn top_levels_population(m: &DMatrix<C64>) -> f64 {
    let d = m.nrows();
    if d <= 2 {
        return m[(d - 1, d - 1)].re.max(0.0);
    }
    m[(d - 1, d - 1)].re.max(0.0) + m[(d - 2, d - 2)].re.max(0.0)
}

fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Photon-loss part of the master equation,
/// `(kappa/2) (2 a rho a^dag - a^dag a rho - rho a^dag a)`.
pub fn dissipator(rho: &DensityMatrix, a: &FockOperator, kappa: f64) -> Result<DMatrix<C64>> {
    check_dims(rho.dim(), a.dim())?;
    let adag = a.m.adjoint();
    let n = &adag * &a.m;
    let r = &rho.m;
    let jump = &a.m * r * &adag;
    Ok((jump.scale(2.0) - &n * r - r * &n).scale(kappa / 2.0))
}

/// Full right-hand side `-i[H, rho] + D[a] rho` of the master equation.
pub fn lindblad_rhs(
    rho: &DensityMatrix,
    h: &FockOperator,
    a: &FockOperator,
    kappa: f64,
) -> Result<DMatrix<C64>> {
    check_dims(rho.dim(), h.dim())?;
    let defect = h.hermiticity_defect();
    if defect > HERMITICITY_TOL {
        return Err(Error::NotHermitian { defect });
    }
    let r = &rho.m;
    let comm = &h.m * r - r * &h.m;
    Ok(comm * C64::new(0.0, -1.0) + dissipator(rho, a, kappa)?)
}
