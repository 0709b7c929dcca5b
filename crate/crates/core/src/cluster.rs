//! 2x2 plaquette treated exactly, coupled to the rest of the lattice through
//! sublattice mean fields.
//!
//! Sites are numbered 0..4 around the plaquette; even sites form
//! sublattice A, odd sites sublattice B. Every site has two bonds inside
//! the plaquette and two to neighbouring plaquettes, so `z` must be 4.

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::classify::{
    classify_seeds, mean_imbalance, worst_of, ClassifyConfig, PairEngine, PairRun, PhaseLabel, RunWindow, SeedSet, SiteSeed,
};
use crate::error::{Error, Result};
use crate::fock::{make_ladder_ops, DensityMatrix, Physicality};
use crate::meanfield::{self, MeanFieldSnapshot, PairState, RunDiagnostics, Sampler, SolverSettings};
use crate::ode::OdeSystem;
use crate::params::ModelParams;
use crate::sparse::{from_row_major, lindblad_apply, liouvillian_diagonal, to_row_major, CsrMatrix, LindbladWorkspace, LinearFamily, LossChannel};

pub const SITES: usize = 4;
/// Plaquette edges.
pub const BONDS: [(usize, usize); 4] = [(0, 1), (1, 2), (2, 3), (3, 0)];
/// Largest supported cutoff (cluster dimension 4096).
pub const MAX_CLUSTER_N_MAX: usize = 7;

pub fn sublattice_sites(b: bool) -> [usize; 2] {
    if b {
        [1, 3]
    } else {
        [0, 2]
    }
}

/// Sublattice-averaged moments seen across the plaquette boundary.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct ClusterFields {
    pub a: MeanFieldSnapshot,
    pub b: MeanFieldSnapshot,
}

/// Per-site operators of the plaquette embedded in the full space.
#[derive(Clone, Debug)]
struct SiteOps {
    a: CsrMatrix,
    adag: CsrMatrix,
    n: CsrMatrix,
    aa: CsrMatrix,
    na: CsrMatrix,
}

#[derive(Clone, Debug)]
struct ClusterOperators {
    dim: usize,
    sites: Vec<SiteOps>,
    /// Static plaquette Hamiltonian plus the 14 field-dependent terms.
    family: LinearFamily,
    loss: Vec<LossChannel>,
}

fn check_cluster(params: &ModelParams) -> Result<()> {
    params.validate()?;
    if params.z != 4 {
        return Err(Error::InvalidParameter(format!("the plaquette model needs z = 4, got {}", params.z)));
    }
    if params.n_max > MAX_CLUSTER_N_MAX {
        return Err(Error::InvalidParameter(format!(
            "cluster cutoff n_max = {} exceeds {MAX_CLUSTER_N_MAX}",
            params.n_max
        )));
    }
    Ok(())
}

fn embed(op: &CsrMatrix, site: usize, d: usize) -> CsrMatrix {
    let id = CsrMatrix::identity(d);
    let mut out = if site == 0 { op.clone() } else { id.clone() };
    for k in 1..SITES {
        out = out.kron(if k == site { op } else { &id });
    }
    out
}

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

impl ClusterOperators {
    fn new(p: &ModelParams) -> Result<Self> {
        check_cluster(p)?;
        let lo = make_ladder_ops(p.n_max)?;
        let d = lo.dim();
        let a1 = CsrMatrix::from_dense(lo.a.matrix());
        let sites: Vec<SiteOps> = (0..SITES)
            .map(|i| {
                let a = embed(&a1, i, d);
                let adag = a.adjoint();
                let n = adag.matmul(&a);
                SiteOps { aa: a.matmul(&a), na: n.matmul(&a), a, adag, n }
            })
            .collect();
        let dim = d.pow(SITES as u32);
        let id = CsrMatrix::identity(dim);
        let z = p.z as f64;
        let (v, j, j2, jn) = (p.zv / z, p.zj / z, p.zj2 / z, p.zjn / z);
        let mut h = CsrMatrix::from_triplets(dim, std::iter::empty());
        for s in &sites {
            h = h
                .add(&s.n.scale(c(-p.delta)))
                .add(&s.a.add(&s.adag).scale(c(p.omega)))
                .add(&s.n.matmul(&s.n.add(&id.scale(c(-1.0)))).scale(c(p.u)));
        }
        for &(i, k) in &BONDS {
            let (si, sk) = (&sites[i], &sites[k]);
            let hop = si.adag.matmul(&sk.a);
            let pair = si.adag.matmul(&si.adag).matmul(&sk.aa).scale(c(j2 / 2.0));
            let corr = si.adag.matmul(&si.n.add(&sk.n)).matmul(&sk.a).scale(c(-jn));
            h = h
                .add(&si.n.matmul(&sk.n).scale(c(v)))
                .add(&hop.add(&hop.adjoint()).scale(c(-j)))
                .add(&pair.add(&pair.adjoint()))
                .add(&corr.add(&corr.adjoint()));
        }
        let mut terms = Vec::with_capacity(14);
        for b in [false, true] {
            let [i, k] = sublattice_sites(b);
            let sum = |f: &dyn Fn(&SiteOps) -> CsrMatrix| f(&sites[i]).add(&f(&sites[k]));
            terms.push(sum(&|s| s.n.clone()));
            terms.push(sum(&|s| s.adag.clone()));
            terms.push(sum(&|s| s.a.clone()));
            terms.push(sum(&|s| s.adag.matmul(&s.adag)));
            terms.push(sum(&|s| s.aa.clone()));
            terms.push(sum(&|s| s.adag.matmul(&s.n)));
            terms.push(sum(&|s| s.na.clone()));
        }
        let loss = sites.iter().map(|s| LossChannel::new(s.a.clone(), p.kappa)).collect();
        Ok(Self { dim, family: LinearFamily::new(&h, &terms), sites, loss })
    }

    fn site_moments(&self, rho: &[C64], i: usize) -> MeanFieldSnapshot {
        let s = &self.sites[i];
        MeanFieldSnapshot { w: s.n.expect(rho).re, psi: s.a.expect(rho), phi: s.aa.expect(rho), chi: s.na.expect(rho) }
    }

    fn fields(&self, rho: &[C64]) -> ClusterFields {
        let avg = |b: bool| {
            let [i, k] = sublattice_sites(b);
            let (x, y) = (self.site_moments(rho, i), self.site_moments(rho, k));
            MeanFieldSnapshot {
                w: 0.5 * (x.w + y.w),
                psi: (x.psi + y.psi) * 0.5,
                phi: (x.phi + y.phi) * 0.5,
                chi: (x.chi + y.chi) * 0.5,
            }
        };
        ClusterFields { a: avg(false), b: avg(true) }
    }
}

/// Coefficients of the boundary terms; sites of one sublattice see the
/// other sublattice's averages through two external bonds each.
fn boundary_coefficients(p: &ModelParams, f: &ClusterFields) -> [C64; 14] {
    let z = p.z as f64;
    let (v, j, j2, jn) = (p.zv / z, p.zj / z, p.zj2 / z, p.zjn / z);
    let mut out = [C64::new(0.0, 0.0); 14];
    for (slot, other) in [(0, &f.b), (7, &f.a)] {
        let lin = -(other.psi * (2.0 * j)) - other.chi * (2.0 * jn);
        let pair = other.phi * j2;
        let cubic = -(other.psi * (2.0 * jn));
        let vals = [c(2.0 * v * other.w), lin, lin.conj(), pair, pair.conj(), cubic, cubic.conj()];
        out[slot..slot + 7].copy_from_slice(&vals);
    }
    out
}

/// Plaquette Hamiltonian including the boundary mean-field terms.
pub fn cluster_hamiltonian(params: &ModelParams, fields: &ClusterFields) -> Result<CsrMatrix> {
    let mut ops = ClusterOperators::new(params)?;
    ops.family.assemble(&boundary_coefficients(params, fields));
    Ok(ops.family.current())
}

struct ClusterSystem {
    params: ModelParams,
    ops: ClusterOperators,
    ws: LindbladWorkspace,
}

impl OdeSystem for ClusterSystem {
    type Elem = C64;
    fn rhs(&mut self, y: &[C64], dy: &mut [C64]) {
        let f = self.ops.fields(y);
        self.ops.family.assemble(&boundary_coefficients(&self.params, &f));
        lindblad_apply(&self.ops.family, &self.ops.loss, y, dy, &mut self.ws);
    }
}

/// Product state with `a` on sublattice A and `b` on sublattice B.
pub fn product_state(a: &DensityMatrix, b: &DensityMatrix) -> DensityMatrix {
    a.kron(b).kron(a).kron(b)
}

pub fn seed_states(set: &SeedSet, dim: usize) -> Vec<DensityMatrix> {
    set.pairs()
        .iter()
        .map(|(a, b)| product_state(&a.density(dim), &b.density(dim)))
        .collect()
}

#[derive(Clone, Debug)]
pub struct ClusterTrajectory {
    pub times: Vec<f64>,
    pub fields: Vec<ClusterFields>,
    pub final_state: DensityMatrix,
    pub stationary: bool,
    pub final_residual: f64,
    pub diagnostics: RunDiagnostics,
}

impl ClusterTrajectory {
    pub fn n_a(&self) -> Vec<f64> {
        self.fields.iter().map(|f| f.a.w).collect()
    }

    pub fn n_b(&self) -> Vec<f64> {
        self.fields.iter().map(|f| f.b.w).collect()
    }
}

fn integrate(
    params: &ModelParams,
    start: &DensityMatrix,
    window: RunWindow,
    early_exit: f64,
    solver: &SolverSettings,
) -> Result<ClusterTrajectory> {
    let ops = ClusterOperators::new(params)?;
    let dim = ops.dim;
    if start.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: start.dim() });
    }
    let sys = ClusterSystem { params: params.clone(), ops: ops.clone(), ws: LindbladWorkspace::new(dim) };
    let blocks = [(0, dim)];
    let sampler = Sampler {
        window,
        early_exit,
        positivity_every: solver.positivity_every,
        truncation_tol: solver.truncation_tol,
        n_max: params.n_max,
        blocks: &blocks,
        site_dim: Some(params.dim()),
    };
    let lin = || liouvillian_diagonal(&ops.family, &ops.loss);
    let run = sampler.run_system(sys, to_row_major(start.matrix()), lin, solver, |y| {
        let f = ops.fields(y);
        vec![c(f.a.w), f.a.psi, f.a.phi, f.a.chi, c(f.b.w), f.b.psi, f.b.phi, f.b.chi]
    })?;
    let fields = run
        .samples
        .iter()
        .map(|s| ClusterFields {
            a: MeanFieldSnapshot { w: s[0].re, psi: s[1], phi: s[2], chi: s[3] },
            b: MeanFieldSnapshot { w: s[4].re, psi: s[5], phi: s[6], chi: s[7] },
        })
        .collect();
    Ok(ClusterTrajectory {
        times: run.times,
        fields,
        final_state: DensityMatrix::from_trusted(from_row_major(dim, &run.final_y)),
        stationary: run.stationary,
        final_residual: run.final_residual,
        diagnostics: run.diagnostics,
    })
}

/// Integrates the plaquette with dynamically self-consistent boundary
/// fields and samples them on `[record_from, t_max]`.
pub fn cluster_evolve(start: &DensityMatrix, params: &ModelParams, cfg: &meanfield::EvolveConfig) -> Result<ClusterTrajectory> {
    let window = RunWindow { duration: cfg.t_max, record_from: cfg.record_from, sample_dt: cfg.sample_dt };
    if !(window.duration > window.record_from && window.record_from >= 0.0 && window.sample_dt > 0.0) {
        return Err(Error::InvalidParameter(format!("need t_max > record_from >= 0, got {window:?}")));
    }
    integrate(params, start, window, cfg.early_exit_residual, &cfg.solver)
}

/// Basis permutation for the plaquette rotation by one site, which maps
/// sublattice A onto B.
fn rotation_permutation(d: usize) -> Vec<usize> {
    let dim = d.pow(SITES as u32);
    (0..dim)
        .map(|idx| {
            let mut digits = [0usize; SITES];
            let mut r = idx;
            for k in (0..SITES).rev() {
                digits[k] = r % d;
                r /= d;
            }
            digits.rotate_right(1);
            digits.iter().fold(0, |acc, &x| acc * d + x)
        })
        .collect()
}

pub struct ClusterEngine {
    pub params: ModelParams,
    pub solver: SolverSettings,
    perm: Vec<usize>,
}

impl ClusterEngine {
    pub fn new(params: &ModelParams, solver: &SolverSettings) -> Result<Self> {
        check_cluster(params)?;
        Ok(Self { params: params.clone(), solver: solver.clone(), perm: rotation_permutation(params.dim()) })
    }
}

impl PairEngine for ClusterEngine {
    type State = DensityMatrix;

    fn run(&self, start: &DensityMatrix, window: RunWindow, early_exit: f64) -> Result<PairRun<DensityMatrix>> {
        let tr = integrate(&self.params, start, window, early_exit, &self.solver)?;
        Ok(PairRun {
            n_a: tr.n_a(),
            n_b: tr.n_b(),
            times: tr.times,
            final_state: tr.final_state,
            stationary: tr.stationary,
            final_residual: tr.final_residual,
            physicality: Some(tr.diagnostics.physicality),
        })
    }

    fn perturb(&self, state: &DensityMatrix, eps: f64) -> DensityMatrix {
        let d = self.params.dim();
        let kick = product_state(&SiteSeed::Coherent(1.0).density(d), &DensityMatrix::vacuum(d));
        DensityMatrix::from_trusted(state.matrix().scale(1.0 - eps) + kick.matrix().scale(eps))
    }

    fn is_symmetric(&self, state: &DensityMatrix) -> bool {
        let m = state.matrix();
        let p = &self.perm;
        let dim = m.nrows();
        (0..dim).all(|r| (0..dim).all(|c| (m[(p[r], p[c])] - m[(r, c)]).norm() < 1e-9))
    }
}

pub fn classify(params: &ModelParams, seeds: &[DensityMatrix], cfg: &ClassifyConfig, solver: &SolverSettings) -> Result<PhaseLabel> {
    let engine = ClusterEngine::new(params, solver)?;
    classify_seeds(&engine, seeds, cfg)
}

/// Engine used to evaluate the order parameter during a threshold search.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdEngine {
    MeanField,
    Cluster,
}

/// Steady imbalance reached from the weakly displaced seed.
pub fn steady_imbalance(engine: ThresholdEngine, params: &ModelParams, cfg: &ClassifyConfig, solver: &SolverSettings) -> Result<f64> {
    imbalance_run(engine, params, cfg, solver).map(|(d, _)| d)
}

fn imbalance_run(
    engine: ThresholdEngine,
    params: &ModelParams,
    cfg: &ClassifyConfig,
    solver: &SolverSettings,
) -> Result<(f64, Option<Physicality>)> {
    let (a, b) = SeedSet::Default.pairs()[0];
    let d = params.dim();
    let (times, n_a, n_b, phys) = match engine {
        ThresholdEngine::MeanField => {
            let e = meanfield::MeanFieldEngine { params: params.clone(), solver: solver.clone() };
            let seed = PairState { rho_a: a.density(d), rho_b: b.density(d) };
            let r = e.run(&seed, cfg.window(), cfg.early_exit_residual)?;
            (r.times, r.n_a, r.n_b, r.physicality)
        }
        ThresholdEngine::Cluster => {
            let e = ClusterEngine::new(params, solver)?;
            let r = e.run(&product_state(&a.density(d), &b.density(d)), cfg.window(), cfg.early_exit_residual)?;
            (r.times, r.n_a, r.n_b, r.physicality)
        }
    };
    let start = times.partition_point(|&t| t < cfg.burn_in - 1e-9).min(times.len() - 1);
    Ok((mean_imbalance(&n_a[start..], &n_b[start..]), phys))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriticalPoint {
    pub engine: ThresholdEngine,
    pub zv_c: f64,
    /// Final bracket `[below, above]`.
    pub bracket: (f64, f64),
    pub evaluations: usize,
    /// Worst density-matrix invariants over all evaluations.
    pub physicality: Option<Physicality>,
}

/// Bisection on the cross-Kerr coupling for the onset of `delta_n >=
/// eps_cry`.
pub fn critical_v(
    engine: ThresholdEngine,
    params: &ModelParams,
    range: (f64, f64),
    tol: f64,
    cfg: &ClassifyConfig,
    solver: &SolverSettings,
) -> Result<CriticalPoint> {
    let (mut lo, mut hi) = range;
    if !(lo < hi) || !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("invalid bracket {range:?} or tolerance {tol}")));
    }
    let mut phys = None;
    let mut order = |zv: f64| -> Result<f64> {
        let (d, p) = imbalance_run(engine, &params.clone().with("zv", zv), cfg, solver)?;
        phys = worst_of(phys, p);
        Ok(d)
    };
    let (dlo, dhi) = (order(lo)?, order(hi)?);
    if dlo >= cfg.eps_cry || dhi < cfg.eps_cry {
        return Err(Error::BracketFailure {
            lo,
            hi,
            reason: format!("imbalance {dlo:.3e} at the lower end, {dhi:.3e} at the upper end"),
        });
    }
    let mut evaluations = 2;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        evaluations += 1;
        if order(mid)? >= cfg.eps_cry {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(CriticalPoint { engine, zv_c: 0.5 * (lo + hi), bracket: (lo, hi), evaluations, physicality: phys })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hard_core() -> ModelParams {
        ModelParams { n_max: 1, u: 0.0, delta: 0.0, omega: 0.0, ..Default::default() }
    }

    #[test]
    fn drive_only_hamiltonian() {
        let p = ModelParams { omega: 0.5, delta: 0.0, u: 0.0, n_max: 1, ..Default::default() };
        let h = cluster_hamiltonian(&p, &ClusterFields::default()).unwrap();
        let ops = ClusterOperators::new(&p).unwrap();
        let mut want = CsrMatrix::from_triplets(16, std::iter::empty());
        for s in &ops.sites {
            want = want.add(&s.a.add(&s.adag).scale(c(0.5)));
        }
        assert!((h.to_dense() - want.to_dense()).camax() < 1e-15);
    }

    #[test]
    fn cross_kerr_bonds_and_boundary() {
        let p = ModelParams { zv: 4.0, ..hard_core() };
        let ops = ClusterOperators::new(&p).unwrap();
        let s = &ops.sites;
        let h = cluster_hamiltonian(&p, &ClusterFields::default()).unwrap();
        let mut want = CsrMatrix::from_triplets(16, std::iter::empty());
        for (i, k) in BONDS {
            want = want.add(&s[i].n.matmul(&s[k].n));
        }
        assert!((h.to_dense() - want.to_dense()).camax() < 1e-15);
        let f = ClusterFields { b: MeanFieldSnapshot { w: 1.0, ..Default::default() }, ..Default::default() };
        let h2 = cluster_hamiltonian(&p, &f).unwrap();
        let extra = s[0].n.add(&s[2].n).scale(c(2.0));
        assert!((h2.to_dense() - h.to_dense() - extra.to_dense()).camax() < 1e-15);
    }

    #[test]
    fn hamiltonian_is_hermitian() {
        let p = ModelParams { delta: 0.2, omega: 0.6, u: 1.0, zv: 2.0, zj: 0.4, zj2: 0.3, zjn: -0.2, n_max: 2, ..Default::default() };
        let f = ClusterFields {
            a: MeanFieldSnapshot { w: 0.4, psi: C64::new(0.2, 0.1), phi: C64::new(0.05, -0.02), chi: C64::new(0.1, 0.0) },
            b: MeanFieldSnapshot { w: 0.1, psi: C64::new(-0.1, 0.3), phi: C64::new(0.0, 0.01), chi: C64::new(0.02, 0.05) },
        };
        assert!(cluster_hamiltonian(&p, &f).unwrap().hermiticity_defect() < 1e-12);
    }

    #[test]
    fn rejects_other_coordination() {
        let p = ModelParams { z: 6, ..hard_core() };
        assert!(cluster_hamiltonian(&p, &ClusterFields::default()).is_err());
    }

    #[test]
    fn rotation_maps_sublattices() {
        let d = 2;
        let perm = rotation_permutation(d);
        // |1000> -> |0100>
        assert_eq!(perm[0b1000], 0b0100);
        let mut sorted = perm.clone();
        sorted.sort();
        assert_eq!(sorted, (0..16).collect::<Vec<_>>());
    }
}
