//! Compressed-row complex operators and the Lindblad kernel used by the
//! time integrators.
//!
//! Density matrices handled here are flat row-major slices of length
//! `dim * dim`. Hamiltonians built from a fixed set of operators with
//! time-dependent coefficients share one sparsity pattern
//! ([`LinearFamily`]), so re-assembly at every integrator stage is a single
//! pass over the stored values.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const MINUS_I: C64 = C64 { re: 0.0, im: -1.0 };

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed and
    /// exact zeros dropped.
    pub fn from_triplets(dim: usize, triplets: impl IntoIterator<Item = (usize, usize, C64)>) -> Self {
        let mut rows: Vec<BTreeMap<usize, C64>> = vec![BTreeMap::new(); dim];
        for (r, c, v) in triplets {
            assert!(r < dim && c < dim, "triplet ({r}, {c}) outside dimension {dim}");
            *rows[r].entry(c).or_insert(ZERO) += v;
        }
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for row in rows {
            for (c, v) in row {
                if v != ZERO {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Self { dim, row_ptr, cols, vals }
    }

    pub fn from_dense(m: &DMatrix<C64>) -> Self {
        let d = m.nrows();
        Self::from_triplets(
            d,
            (0..d).flat_map(|i| (0..d).map(move |j| (i, j, m[(i, j)]))),
        )
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_triplets(dim, (0..dim).map(|i| (i, i, C64::new(1.0, 0.0))))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.dim).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.cols[k], self.vals[k]))
        })
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(self.dim, self.triplets().map(|(r, c, v)| (c, r, v.conj())))
    }

    pub fn scale(&self, s: C64) -> Self {
        Self::from_triplets(self.dim, self.triplets().map(|(r, c, v)| (r, c, v * s)))
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        Self::from_triplets(self.dim, self.triplets().chain(other.triplets()))
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut trip = Vec::new();
        for (r, k, v) in self.triplets() {
            for idx in other.row_ptr[k]..other.row_ptr[k + 1] {
                trip.push((r, other.cols[idx], v * other.vals[idx]));
            }
        }
        Self::from_triplets(self.dim, trip)
    }

    /// Kronecker product with `self` as the more significant factor.
    pub fn kron(&self, other: &Self) -> Self {
        let d = self.dim * other.dim;
        let mut trip = Vec::with_capacity(self.nnz() * other.nnz());
        for (r1, c1, v1) in self.triplets() {
            for (r2, c2, v2) in other.triplets() {
                trip.push((r1 * other.dim + r2, c1 * other.dim + c2, v1 * v2));
            }
        }
        Self::from_triplets(d, trip)
    }

    /// Largest entry of `self - self^dag`.
    pub fn hermiticity_defect(&self) -> f64 {
        self.add(&self.adjoint().scale(C64::new(-1.0, 0.0)))
            .vals
            .iter()
            .fold(0.0, |m, v| m.max(v.norm()))
    }

    /// `tr(self * rho)` for a row-major `rho`.
    pub fn expect(&self, rho: &[C64]) -> C64 {
        csr_expect(self.dim, &self.row_ptr, &self.cols, &self.vals, rho)
    }

    fn view(&self) -> CsrView<'_> {
        CsrView { dim: self.dim, row_ptr: &self.row_ptr, cols: &self.cols, vals: &self.vals }
    }
}

#[derive(Clone, Copy)]
struct CsrView<'a> {
    dim: usize,
    row_ptr: &'a [usize],
    cols: &'a [usize],
    vals: &'a [C64],
}

impl CsrView<'_> {
    /// `out = A * x` with `x`, `out` row-major `dim x dim`.
    fn mul_dense(&self, x: &[C64], out: &mut [C64]) {
        let d = self.dim;
        for r in 0..d {
            let orow = &mut out[r * d..(r + 1) * d];
            orow.fill(ZERO);
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let v = self.vals[k];
                if v == ZERO {
                    continue;
                }
                let xrow = &x[self.cols[k] * d..(self.cols[k] + 1) * d];
                for (o, xv) in orow.iter_mut().zip(xrow) {
                    *o += v * xv;
                }
            }
        }
    }
}

fn csr_expect(dim: usize, row_ptr: &[usize], cols: &[usize], vals: &[C64], rho: &[C64]) -> C64 {
    let mut acc = ZERO;
    for r in 0..dim {
        for k in row_ptr[r]..row_ptr[r + 1] {
            acc += vals[k] * rho[cols[k] * dim + r];
        }
    }
    acc
}

/// Operators `base + sum_k c_k * term_k` sharing one sparsity pattern.
#[derive(Clone, Debug)]
pub struct LinearFamily {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    base: Vec<C64>,
    terms: Vec<Vec<C64>>,
    current: Vec<C64>,
}

impl LinearFamily {
    pub fn new(base: &CsrMatrix, terms: &[CsrMatrix]) -> Self {
        let dim = base.dim;
        let pattern = CsrMatrix::from_triplets(
            dim,
            base.triplets()
                .chain(terms.iter().flat_map(|t| t.triplets()))
                .map(|(r, c, _)| (r, c, C64::new(1.0, 0.0))),
        );
        let align = |m: &CsrMatrix| -> Vec<C64> {
            let mut out = vec![ZERO; pattern.nnz()];
            for (r, c, v) in m.triplets() {
                let span = pattern.row_ptr[r]..pattern.row_ptr[r + 1];
                let pos = pattern.cols[span.clone()]
                    .binary_search(&c)
                    .expect("entry is in the union pattern");
                out[span.start + pos] += v;
            }
            out
        };
        let base_vals = align(base);
        let terms: Vec<Vec<C64>> = terms.iter().map(align).collect();
        Self {
            dim,
            current: base_vals.clone(),
            row_ptr: pattern.row_ptr,
            cols: pattern.cols,
            base: base_vals,
            terms,
        }
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn assemble(&mut self, coeffs: &[C64]) {
        assert_eq!(coeffs.len(), self.terms.len());
        self.current.copy_from_slice(&self.base);
        for (c, t) in coeffs.iter().zip(&self.terms) {
            if *c == ZERO {
                continue;
            }
            for (cur, v) in self.current.iter_mut().zip(t) {
                *cur += c * v;
            }
        }
    }

    /// Real parts of the diagonal of the base operator.
    pub fn base_diagonal(&self) -> Vec<f64> {
        (0..self.dim)
            .map(|r| {
                let span = self.row_ptr[r]..self.row_ptr[r + 1];
                self.cols[span.clone()]
                    .binary_search(&r)
                    .map_or(0.0, |pos| self.base[span.start + pos].re)
            })
            .collect()
    }

    /// Currently assembled operator as a standalone matrix.
    pub fn current(&self) -> CsrMatrix {
        CsrMatrix {
            dim: self.dim,
            row_ptr: self.row_ptr.clone(),
            cols: self.cols.clone(),
            vals: self.current.clone(),
        }
    }

    fn view(&self) -> CsrView<'_> {
        CsrView { dim: self.dim, row_ptr: &self.row_ptr, cols: &self.cols, vals: &self.current }
    }
}

/// One loss channel `rate * D[jump]`.
#[derive(Clone, Debug)]
pub struct LossChannel {
    jump: CsrMatrix,
    jump_dag_jump: CsrMatrix,
    rate: f64,
    /// Row `r` of `jump` as its single entry `(col, value)`, when every row
    /// has at most one nonzero.
    single: Option<Vec<Option<(usize, C64)>>>,
    /// Diagonal of `jump^dag jump`, when it is diagonal.
    diag: Option<Vec<f64>>,
}

impl LossChannel {
    pub fn new(jump: CsrMatrix, rate: f64) -> Self {
        let jump_dag_jump = jump.adjoint().matmul(&jump);
        let single = (0..jump.dim)
            .map(|r| match jump.row_ptr[r + 1] - jump.row_ptr[r] {
                0 => Some(None),
                1 => {
                    let k = jump.row_ptr[r];
                    Some(Some((jump.cols[k], jump.vals[k])))
                }
                _ => None,
            })
            .collect::<Option<Vec<_>>>();
        let mut diag = Some(vec![0.0; jump.dim]);
        for (r, c, v) in jump_dag_jump.triplets() {
            match diag.as_mut() {
                Some(dg) if r == c && v.im.abs() < 1e-14 => dg[r] += v.re,
                Some(_) if v != ZERO => diag = None,
                _ => {}
            }
        }
        Self { jump, jump_dag_jump, rate, single, diag }
    }
}

/// Diagonal part of the Liouvillian in the row-major matrix basis:
/// `-i (E_r - E_c) - (g_r + g_c) / 2` with `E` the diagonal of the base
/// Hamiltonian and `g` the diagonal of `sum rate L^dag L`. Populations get
/// zero so that an exponential integrator keeps the trace exactly.
pub fn liouvillian_diagonal(h: &LinearFamily, channels: &[LossChannel]) -> Vec<C64> {
    let d = h.dim;
    let e = h.base_diagonal();
    let mut g = vec![0.0; d];
    for ch in channels {
        for (r, c, v) in ch.jump_dag_jump.triplets() {
            if r == c {
                g[r] += ch.rate * v.re;
            }
        }
    }
    let mut out = Vec::with_capacity(d * d);
    for r in 0..d {
        for c in 0..d {
            out.push(if r == c { C64::new(0.0, 0.0) } else { C64::new(-0.5 * (g[r] + g[c]), -(e[r] - e[c])) });
        }
    }
    out
}

/// Scratch buffers for [`lindblad_apply`].
#[derive(Clone, Debug)]
pub struct LindbladWorkspace {
    s1: Vec<C64>,
    s2: Vec<C64>,
    damp: Vec<f64>,
    rows: Vec<(usize, usize, C64)>,
}

impl LindbladWorkspace {
    pub fn new(dim: usize) -> Self {
        Self {
            s1: vec![ZERO; dim * dim],
            s2: vec![ZERO; dim * dim],
            damp: vec![0.0; dim],
            rows: Vec::with_capacity(dim),
        }
    }
}

fn adjoint_into(dim: usize, x: &[C64], out: &mut [C64]) {
    for r in 0..dim {
        for c in 0..dim {
            out[c * dim + r] = x[r * dim + c].conj();
        }
    }
}

/// `out = -i[H, rho] + sum_c rate_c D[L_c] rho` for Hermitian `rho`. Only the
/// upper triangle is computed; the lower one is its mirror, so the result is
/// exactly Hermitian.
pub fn lindblad_apply(
    h: &LinearFamily,
    channels: &[LossChannel],
    rho: &[C64],
    out: &mut [C64],
    ws: &mut LindbladWorkspace,
) {
    let d = h.dim;
    // H rho; rho H = (H rho)^dag for Hermitian operands.
    h.view().mul_dense(rho, &mut ws.s1);
    for r in 0..d {
        for c in r..d {
            out[r * d + c] = MINUS_I * (ws.s1[r * d + c] - ws.s1[c * d + r].conj());
        }
    }
    ws.damp.fill(0.0);
    for ch in channels {
        let half = 0.5 * ch.rate;
        match &ch.single {
            Some(single) => {
                ws.rows.clear();
                ws.rows.extend(
                    single.iter().enumerate().filter_map(|(r, e)| e.map(|(c, v)| (r, c, v))),
                );
                for (i, &(r, rr, vr)) in ws.rows.iter().enumerate() {
                    let vr = vr * ch.rate;
                    let src = &rho[rr * d..(rr + 1) * d];
                    for &(c, cc, vc) in &ws.rows[i..] {
                        out[r * d + c] += vr * src[cc] * vc.conj();
                    }
                }
            }
            None => {
                // L rho L^dag = L (L rho)^dag
                ch.jump.view().mul_dense(rho, &mut ws.s1);
                adjoint_into(d, &ws.s1, &mut ws.s2);
                ch.jump.view().mul_dense(&ws.s2, &mut ws.s1);
                for r in 0..d {
                    for c in r..d {
                        out[r * d + c] += ws.s1[r * d + c] * ch.rate;
                    }
                }
            }
        }
        match &ch.diag {
            Some(dg) => {
                for (acc, v) in ws.damp.iter_mut().zip(dg) {
                    *acc += half * v;
                }
            }
            None => {
                ch.jump_dag_jump.view().mul_dense(rho, &mut ws.s1);
                for r in 0..d {
                    for c in r..d {
                        out[r * d + c] -= (ws.s1[r * d + c] + ws.s1[c * d + r].conj()) * half;
                    }
                }
            }
        }
    }
    for r in 0..d {
        let dr = ws.damp[r];
        for c in r..d {
            out[r * d + c] -= rho[r * d + c] * (dr + ws.damp[c]);
        }
        out[r * d + r].im = 0.0;
        for c in r + 1..d {
            out[c * d + r] = out[r * d + c].conj();
        }
    }
}

pub fn to_row_major(m: &DMatrix<C64>) -> Vec<C64> {
    let d = m.nrows();
    let mut v = Vec::with_capacity(d * d);
    for r in 0..d {
        for c in 0..d {
            v.push(m[(r, c)]);
        }
    }
    v
}

pub fn from_row_major(dim: usize, v: &[C64]) -> DMatrix<C64> {
    DMatrix::from_row_slice(dim, dim, v)
}

pub fn trace_row_major(dim: usize, v: &[C64]) -> C64 {
    (0..dim).map(|k| v[k * dim + k]).sum()
}

pub fn hermiticity_defect_row_major(dim: usize, v: &[C64]) -> f64 {
    let mut worst = 0.0f64;
    for r in 0..dim {
        for c in r..dim {
            worst = worst.max((v[r * dim + c] - v[c * dim + r].conj()).norm());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{lindblad_rhs, make_ladder_ops, DensityMatrix, FockOperator};

    #[test]
    fn kron_matches_dense() {
        let ops = make_ladder_ops(2).unwrap();
        let a = CsrMatrix::from_dense(ops.a.matrix());
        let n = CsrMatrix::from_dense(ops.n.matrix());
        let k = a.kron(&n).to_dense();
        let want = ops.a.matrix().kronecker(ops.n.matrix());
        assert!((k - want).iter().all(|x| x.norm() < 1e-15));
    }

    #[test]
    fn family_assembly_and_kernel_match_dense_route() {
        let ops = make_ladder_ops(4).unwrap();
        let a = CsrMatrix::from_dense(ops.a.matrix());
        let ad = a.adjoint();
        let n = CsrMatrix::from_dense(ops.n.matrix());
        let base = n.scale(C64::new(-0.3, 0.0));
        let mut fam = LinearFamily::new(&base, &[ad.clone(), a.clone(), n.clone()]);
        let c = C64::new(0.4, -0.2);
        fam.assemble(&[c, c.conj(), C64::new(0.7, 0.0)]);
        let h_dense = fam.current().to_dense();
        let want_h = ops.n.matrix().scale(0.4) + ops.adag.matrix() * c + ops.a.matrix() * c.conj();
        assert!((h_dense.clone() - want_h).iter().all(|x| x.norm() < 1e-14));

        let rho = DensityMatrix::coherent(C64::new(0.3, 0.8), 5);
        let flat = to_row_major(rho.matrix());
        let mut out = vec![ZERO; 25];
        let mut ws = LindbladWorkspace::new(5);
        lindblad_apply(&fam, &[LossChannel::new(a, 1.0)], &flat, &mut out, &mut ws);
        let want = lindblad_rhs(&rho, &FockOperator::new(h_dense).unwrap(), &ops.a, 1.0).unwrap();
        let got = from_row_major(5, &out);
        assert!((got - want).iter().all(|x| x.norm() < 1e-13));
    }

    #[test]
    fn general_jump_matches_dense_route() {
        // a + a^dag has two entries per row and a non-diagonal square
        let ops = make_ladder_ops(4).unwrap();
        let x = ops.a.matrix() + ops.adag.matrix();
        let n = CsrMatrix::from_dense(ops.n.matrix());
        let fam = LinearFamily::new(&n, &[]);
        let rho = DensityMatrix::coherent(C64::new(-0.2, 0.5), 5);
        let flat = to_row_major(rho.matrix());
        let mut out = vec![ZERO; 25];
        let mut ws = LindbladWorkspace::new(5);
        let ch = LossChannel::new(CsrMatrix::from_dense(&x), 0.7);
        assert!(ch.single.is_none() && ch.diag.is_none());
        lindblad_apply(&fam, &[ch], &flat, &mut out, &mut ws);
        let jump = FockOperator::new(x).unwrap();
        let want = lindblad_rhs(&rho, &ops.n, &jump, 0.7).unwrap();
        let got = from_row_major(5, &out);
        assert!((got - want).iter().all(|x| x.norm() < 1e-13));
    }

    #[test]
    fn expectation_matches_trace() {
        let ops = make_ladder_ops(5).unwrap();
        let rho = DensityMatrix::coherent(C64::new(0.9, -0.1), 6);
        let a = CsrMatrix::from_dense(ops.a.matrix());
        let flat = to_row_major(rho.matrix());
        assert!((a.expect(&flat) - rho.expect(&ops.a)).norm() < 1e-14);
    }
}
