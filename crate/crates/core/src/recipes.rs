//! Built-in parameter sets for the reference phase diagrams. Each recipe writes
//! CSV output plus a JSON manifest recording every parameter and tolerance
//! used, including the grid resolution chosen here.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::classify::{ClassifyConfig, SeedSet};
use crate::cluster::{self, CriticalPoint, ThresholdEngine};
use crate::error::{Error, Result};
use crate::format::sig9;
use crate::meanfield::SolverSettings;
use crate::params::ModelParams;
use crate::sweep::{run_sweep, Engine, PhaseMap, SweepSpec};

pub const FIGURE_IDS: [&str; 9] = ["fig1", "fig2a", "fig2b", "fig2c", "fig3", "fig4", "fig8", "fig9", "fig10"];

/// Threshold search of the crystallization onset along `zv`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThresholdSpec {
    /// Onsite Kerr values; `None` is the hard-core limit.
    pub u_values: Vec<Option<f64>>,
    pub base: ModelParams,
    /// Fock cutoff for finite `u`, per engine.
    pub n_max_meanfield: usize,
    pub n_max_cluster: usize,
    pub zv_range: (f64, f64),
    pub tol: f64,
    pub classify: ClassifyConfig,
    pub solver_meanfield: SolverSettings,
    pub solver_cluster: SolverSettings,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Recipe {
    /// One or more phase-map sweeps, each written to `<id>_<suffix>.csv`
    /// (or `<id>.csv` for an empty suffix).
    Sweeps { sweeps: Vec<(String, SweepSpec)> },
    Thresholds(ThresholdSpec),
}

/// Optional overrides applied to a recipe before it runs.
#[derive(Clone, Debug, Default)]
pub struct RecipeOverrides {
    /// Replaces the count of every axis with more than two points.
    pub points: Option<usize>,
    pub classify: Option<ClassifyConfig>,
}

fn grid(axis1: &str, axis2: &str, fixed: ModelParams, engine: Engine) -> SweepSpec {
    SweepSpec::new(axis1.parse().expect("static axis"), Some(axis2.parse().expect("static axis")), fixed, engine)
}

fn u0(zv: f64, n_max: usize) -> ModelParams {
    ModelParams { zv, n_max, ..Default::default() }
}

/// Truncation check relaxed for the plaquette at a small cutoff; the weight
/// actually reached is reported in the run diagnostics.
fn coarse_cluster_solver() -> SolverSettings {
    SolverSettings { truncation_tol: 1.0, ..SolverSettings::cluster() }
}

pub fn recipe(id: &str) -> Result<Recipe> {
    let single = |s: SweepSpec| Recipe::Sweeps { sweeps: vec![(String::new(), s)] };
    Ok(match id {
        "fig1" => single(grid("delta:-1:1.5:126", "omega:0:1:101", u0(0.5, 16), Engine::Meanfield)),
        "fig2a" => single(grid("zj:0:1:101", "delta:-1:1.5:126", u0(0.5, 16).with("omega", 1.0), Engine::Meanfield)),
        "fig2b" => single(grid("zj:0:1:101", "delta:-1:1.5:126", u0(0.5, 16).with("omega", 0.6), Engine::Meanfield)),
        "fig2c" => single(grid(
            "zj:0:1:101",
            "zv:0:1.5:101",
            u0(0.5, 16).with("omega", 0.6).with("delta", 0.2),
            Engine::Meanfield,
        )),
        "fig3" => Recipe::Sweeps {
            sweeps: [("a", 0.05), ("b", 0.1)]
                .iter()
                .map(|&(tag, j2)| {
                    let fixed = u0(0.5, 16).with("omega", 0.6).with("zj2", j2).with("zjn", j2);
                    (tag.to_string(), grid("zj:0:1:101", "delta:-1:1.5:126", fixed, Engine::Meanfield))
                })
                .collect(),
        },
        "fig4" => single(grid(
            "delta:0:1.5:101",
            "omega:0:1.5:101",
            ModelParams { u: 2.0, zv: 5.0, n_max: 8, ..Default::default() },
            Engine::Meanfield,
        )),
        "fig8" => Recipe::Thresholds(ThresholdSpec {
            u_values: vec![Some(1.0), Some(2.0), Some(5.0), Some(10.0), None],
            base: ModelParams { delta: 0.0, omega: 0.75, ..Default::default() },
            n_max_meanfield: 8,
            n_max_cluster: 3,
            zv_range: (0.0, 30.0),
            tol: 0.02,
            classify: ClassifyConfig::default(),
            solver_meanfield: SolverSettings::default(),
            solver_cluster: coarse_cluster_solver(),
        }),
        "fig9" => {
            let fixed = ModelParams { u: 2.0, zv: 5.0, n_max: 8, ..Default::default() };
            let mf = grid("delta:0.75:1:2", "omega:0:1.5:101", fixed.clone(), Engine::Meanfield);
            let mut cl = grid("delta:0.75:1:2", "omega:0:1.5:101", ModelParams { n_max: 3, ..fixed }, Engine::Cluster);
            cl.seeds = SeedSet::Asymmetric;
            cl.solver = Some(coarse_cluster_solver());
            Recipe::Sweeps { sweeps: vec![("meanfield".into(), mf), ("cluster".into(), cl)] }
        }
        "fig10" => single(grid(
            "delta:-2:1.5:101",
            "omega:0:1.5:101",
            ModelParams { u: -4.0, zv: -8.0, zj2: -4.0, zjn: 4.0, zj: 0.4, n_max: 16, ..Default::default() },
            Engine::Meanfield,
        )),
        other => return Err(Error::UnknownFigure(other.to_string())),
    })
}

impl Recipe {
    pub fn apply(&mut self, o: &RecipeOverrides) {
        match self {
            Recipe::Sweeps { sweeps } => {
                for (_, s) in sweeps {
                    if let Some(n) = o.points {
                        for a in std::iter::once(&mut s.axis1).chain(s.axis2.as_mut()) {
                            if a.count > 2 {
                                a.count = n;
                            }
                        }
                    }
                    if let Some(c) = &o.classify {
                        s.classify = c.clone();
                    }
                }
            }
            Recipe::Thresholds(t) => {
                if let Some(n) = o.points {
                    t.u_values.truncate(n.max(1));
                }
                if let Some(c) = &o.classify {
                    t.classify = c.clone();
                }
            }
        }
    }
}

/// One row of a threshold table; `None` marks a failed search.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThresholdRow {
    pub u: Option<f64>,
    pub meanfield: Option<CriticalPoint>,
    pub cluster: Option<CriticalPoint>,
    pub errors: Vec<String>,
}

pub fn run_thresholds(t: &ThresholdSpec, workers: usize) -> Result<Vec<ThresholdRow>> {
    use rayon::prelude::*;
    let jobs: Vec<(usize, ThresholdEngine)> = (0..t.u_values.len())
        .flat_map(|i| [(i, ThresholdEngine::MeanField), (i, ThresholdEngine::Cluster)])
        .collect();
    let job = |&(i, engine): &(usize, ThresholdEngine)| {
        let (u, n_max) = match t.u_values[i] {
            None => (0.0, 1),
            Some(u) => (u, if engine == ThresholdEngine::Cluster { t.n_max_cluster } else { t.n_max_meanfield }),
        };
        let p = ModelParams { u, n_max, ..t.base.clone() };
        let solver = match engine {
            ThresholdEngine::Cluster if n_max > 1 => &t.solver_cluster,
            _ => &t.solver_meanfield,
        };
        cluster::critical_v(engine, &p, t.zv_range, t.tol, &t.classify, solver)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start {workers} workers: {e}")))?;
    let results: Vec<Result<CriticalPoint>> = pool.install(|| jobs.par_iter().map(job).collect());
    let mut rows: Vec<ThresholdRow> =
        t.u_values.iter().map(|&u| ThresholdRow { u, meanfield: None, cluster: None, errors: Vec::new() }).collect();
    for ((i, engine), r) in jobs.into_iter().zip(results) {
        match (engine, r) {
            (ThresholdEngine::MeanField, Ok(c)) => rows[i].meanfield = Some(c),
            (ThresholdEngine::Cluster, Ok(c)) => rows[i].cluster = Some(c),
            (_, Err(e)) => rows[i].errors.push(format!("{engine:?}: {e}")),
        }
    }
    Ok(rows)
}

pub fn threshold_csv(rows: &[ThresholdRow]) -> String {
    let mut s = String::from("u,zv_c_meanfield,zv_c_cluster\n");
    let cell = |c: &Option<CriticalPoint>| c.as_ref().map_or_else(|| "nan".to_string(), |c| sig9(c.zv_c));
    for r in rows {
        let u = r.u.map_or_else(|| "inf".to_string(), sig9);
        s.push_str(&format!("{u},{},{}\n", cell(&r.meanfield), cell(&r.cluster)));
    }
    s
}

#[derive(Serialize)]
struct Manifest<'a> {
    figure: &'a str,
    recipe: &'a Recipe,
    /// Solver settings in effect for each sweep, after engine defaults.
    effective_solvers: Vec<(String, SolverSettings)>,
    outputs: Vec<String>,
    failures: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    thresholds: Option<&'a [ThresholdRow]>,
}

/// Outcome of a reproduction run.
#[derive(Debug)]
pub struct Reproduction {
    pub files: Vec<PathBuf>,
    pub maps: Vec<(String, PhaseMap)>,
    pub thresholds: Option<Vec<ThresholdRow>>,
    /// Failed grid nodes over all sweeps.
    pub failures: usize,
    pub grid_points: usize,
}

fn file_name(id: &str, suffix: &str, ext: &str) -> String {
    if suffix.is_empty() {
        format!("{id}.{ext}")
    } else {
        format!("{id}_{suffix}.{ext}")
    }
}

/// Runs a recipe and writes its CSV files and manifest into `out_dir`.
pub fn reproduce(id: &str, out_dir: &Path, overrides: &RecipeOverrides, workers: usize) -> Result<Reproduction> {
    let mut r = recipe(id)?;
    r.apply(overrides);
    fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();
    let mut maps = Vec::new();
    let mut thresholds = None;
    let mut effective_solvers = Vec::new();
    let (mut failures, mut grid_points) = (0, 0);
    match &r {
        Recipe::Sweeps { sweeps } => {
            for (suffix, spec) in sweeps {
                let map = run_sweep(spec, workers)?;
                let path = out_dir.join(file_name(id, suffix, "csv"));
                fs::write(&path, map.to_csv_string())?;
                files.push(path);
                failures += map.failures();
                grid_points += map.rows.len();
                effective_solvers.push((suffix.clone(), spec.effective_solver()));
                maps.push((suffix.clone(), map));
            }
        }
        Recipe::Thresholds(t) => {
            let rows = run_thresholds(t, workers)?;
            let path = out_dir.join(file_name(id, "", "csv"));
            fs::write(&path, threshold_csv(&rows))?;
            files.push(path);
            grid_points = 2 * rows.len();
            failures = rows.iter().map(|r| r.errors.len()).sum();
            effective_solvers.push(("meanfield".into(), t.solver_meanfield.clone()));
            effective_solvers.push(("cluster".into(), t.solver_cluster.clone()));
            thresholds = Some(rows);
        }
    }
    let manifest = Manifest {
        figure: id,
        recipe: &r,
        effective_solvers,
        outputs: files.iter().map(|f| f.file_name().unwrap_or_default().to_string_lossy().into_owned()).collect(),
        failures,
        thresholds: thresholds.as_deref(),
    };
    let mpath = out_dir.join(file_name(id, "", "json"));
    fs::write(&mpath, serde_json::to_string_pretty(&manifest)? + "\n")?;
    files.push(mpath);
    Ok(Reproduction { files, maps, thresholds, failures, grid_points })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_figure_has_a_valid_recipe() {
        for id in FIGURE_IDS {
            match recipe(id).unwrap() {
                Recipe::Sweeps { sweeps } => {
                    for (_, s) in &sweeps {
                        s.validate().unwrap();
                        for a in std::iter::once(&s.axis1).chain(s.axis2.as_ref()) {
                            assert!(a.count == 2 || a.count >= 100, "{id}: {a}");
                        }
                    }
                }
                Recipe::Thresholds(t) => assert!(t.u_values.contains(&None)),
            }
        }
        assert!(matches!(recipe("fig5"), Err(Error::UnknownFigure(_))));
    }

    #[test]
    fn circuit_ratios_in_the_negative_coupling_recipe() {
        let Recipe::Sweeps { sweeps } = recipe("fig10").unwrap() else { panic!() };
        let p = &sweeps[0].1.fixed;
        assert_eq!(p.zv, 2.0 * p.u);
        assert_eq!(p.u, p.zj2);
        assert_eq!(p.zjn, -p.zj2);
    }

    #[test]
    fn points_override_keeps_two_point_axes() {
        let mut r = recipe("fig9").unwrap();
        r.apply(&RecipeOverrides { points: Some(5), classify: None });
        let Recipe::Sweeps { sweeps } = r else { panic!() };
        assert_eq!(sweeps[0].1.axis1.count, 2);
        assert_eq!(sweeps[0].1.axis2.as_ref().unwrap().count, 5);
    }
}
