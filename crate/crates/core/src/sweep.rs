//! Parameter-grid sweeps: every grid node is classified independently and
//! the results are merged by index, so output never depends on the number
//! of workers.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::classify::{ClassifyConfig, PhaseLabel, PhaseTag, SeedSet};
use crate::cluster;
use crate::error::{Error, Result};
use crate::format::{sig9, sig9_opt};
use crate::meanfield::{self, SolverSettings};
use crate::params::ModelParams;
use crate::semiclassical;

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "PHOTON_CRYSTAL_WORKERS";

pub const CSV_HEADER: &str = "axis1,axis2,n_a,n_b,delta_n,label,osc_amp,osc_period";

/// Names that may be swept. `n_max` is an integer cutoff, not a coupling.
pub const AXIS_NAMES: [&str; 8] = ["delta", "omega", "u", "zv", "zj", "zj2", "zjn", "kappa"];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Semiclassical,
    #[default]
    Meanfield,
    Cluster,
}

impl FromStr for Engine {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "semiclassical" => Ok(Engine::Semiclassical),
            "meanfield" => Ok(Engine::Meanfield),
            "cluster" => Ok(Engine::Cluster),
            other => Err(Error::InvalidParameter(format!("unknown engine `{other}`"))),
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Engine::Semiclassical => "semiclassical",
            Engine::Meanfield => "meanfield",
            Engine::Cluster => "cluster",
        })
    }
}

/// Evenly spaced values of one parameter, endpoints included. Written as
/// `name:start:stop:count` on the command line and in spec files.
#[derive(Clone, Debug, PartialEq)]
pub struct Axis {
    pub name: String,
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(name: &str, start: f64, stop: f64, count: usize) -> Self {
        Self { name: name.into(), start, stop, count }
    }

    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        let last = (self.count - 1) as f64;
        (0..self.count)
            .map(|k| if k + 1 == self.count { self.stop } else { self.start + (self.stop - self.start) * k as f64 / last })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if !AXIS_NAMES.contains(&self.name.as_str()) {
            return Err(Error::InvalidParameter(format!(
                "cannot sweep `{}`; choose one of {}",
                self.name,
                AXIS_NAMES.join(", ")
            )));
        }
        if self.count < 2 {
            return Err(Error::InvalidParameter(format!("axis `{}` needs at least 2 points", self.name)));
        }
        if !self.start.is_finite() || !self.stop.is_finite() {
            return Err(Error::InvalidParameter(format!("axis `{}` has non-finite bounds", self.name)));
        }
        Ok(())
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}:{}", self.name, self.start, self.stop, self.count)
    }
}

impl FromStr for Axis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("axis `{s}` is not of the form name:start:stop:count"));
        let parts: Vec<&str> = s.split(':').collect();
        let [name, start, stop, count] = parts.as_slice() else {
            return Err(bad());
        };
        Ok(Axis {
            name: name.trim().to_string(),
            start: start.trim().parse().map_err(|_| bad())?,
            stop: stop.trim().parse().map_err(|_| bad())?,
            count: count.trim().parse().map_err(|_| bad())?,
        })
    }
}

impl Serialize for Axis {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum AxisRepr {
    Text(String),
    Fields { name: String, start: f64, stop: f64, count: usize },
}

impl<'de> Deserialize<'de> for Axis {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match AxisRepr::deserialize(d)? {
            AxisRepr::Text(t) => t.parse().map_err(serde::de::Error::custom),
            AxisRepr::Fields { name, start, stop, count } => Ok(Axis { name, start, stop, count }),
        }
    }
}

/// A sweep over one or two parameter axes. With a single axis the `axis2`
/// CSV column is left empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis1: Axis,
    #[serde(default)]
    pub axis2: Option<Axis>,
    #[serde(default)]
    pub fixed: ModelParams,
    #[serde(default)]
    pub engine: Engine,
    #[serde(default)]
    pub seeds: SeedSet,
    #[serde(default)]
    pub output: Option<String>,
    #[serde(default)]
    pub classify: ClassifyConfig,
    /// Density-matrix solver settings; engine-specific defaults when absent.
    #[serde(default)]
    pub solver: Option<SolverSettings>,
    /// Mean-field points that overflow the Fock cutoff are retried with a
    /// larger one, up to this value.
    #[serde(default = "default_max_n_max")]
    pub max_n_max: usize,
}

fn default_max_n_max() -> usize {
    40
}

impl SweepSpec {
    pub fn new(axis1: Axis, axis2: Option<Axis>, fixed: ModelParams, engine: Engine) -> Self {
        Self {
            axis1,
            axis2,
            fixed,
            engine,
            seeds: SeedSet::Default,
            output: None,
            classify: ClassifyConfig::default(),
            solver: None,
            max_n_max: default_max_n_max(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.axis1.validate()?;
        if let Some(a2) = &self.axis2 {
            a2.validate()?;
            if a2.name == self.axis1.name {
                return Err(Error::InvalidParameter(format!("both axes sweep `{}`", a2.name)));
            }
        }
        self.fixed.validate()?;
        self.classify.validate()?;
        if self.seeds.pairs().is_empty() {
            return Err(Error::InvalidParameter("seed set is empty".into()));
        }
        let swept = |n: &str| self.axes().any(|a| a.name == n);
        match self.engine {
            Engine::Semiclassical => {
                for n in ["u", "zj2", "zjn"] {
                    if swept(n) || self.fixed.get(n)? != 0.0 {
                        return Err(Error::InvalidParameter(format!(
                            "the semiclassical engine requires {n} = 0"
                        )));
                    }
                }
                if swept("kappa") || self.fixed.kappa != 1.0 {
                    return Err(Error::InvalidParameter("the semiclassical engine fixes kappa = 1".into()));
                }
            }
            Engine::Cluster => {
                if self.fixed.z != 4 {
                    return Err(Error::InvalidParameter("the cluster engine needs z = 4".into()));
                }
                if self.fixed.n_max > cluster::MAX_CLUSTER_N_MAX {
                    return Err(Error::InvalidParameter(format!(
                        "cluster n_max is limited to {}",
                        cluster::MAX_CLUSTER_N_MAX
                    )));
                }
            }
            Engine::Meanfield => {
                if self.max_n_max < self.fixed.n_max {
                    return Err(Error::InvalidParameter("max_n_max is below n_max".into()));
                }
            }
        }
        Ok(())
    }

    fn axes(&self) -> impl Iterator<Item = &Axis> {
        std::iter::once(&self.axis1).chain(self.axis2.as_ref())
    }

    pub fn grid_len(&self) -> usize {
        self.axis1.count * self.axis2.as_ref().map_or(1, |a| a.count)
    }

    /// Grid nodes in output order, `axis2` varying fastest.
    pub fn nodes(&self) -> Vec<(f64, Option<f64>)> {
        let v1 = self.axis1.values();
        match &self.axis2 {
            None => v1.into_iter().map(|a| (a, None)).collect(),
            Some(a2) => {
                let v2 = a2.values();
                v1.iter().flat_map(|&a| v2.iter().map(move |&b| (a, Some(b)))).collect()
            }
        }
    }

    pub fn params_at(&self, a1: f64, a2: Option<f64>) -> Result<ModelParams> {
        let mut p = self.fixed.clone();
        p.set(&self.axis1.name, a1)?;
        if let (Some(ax), Some(v)) = (&self.axis2, a2) {
            p.set(&ax.name, v)?;
        }
        Ok(p)
    }

    /// Solver settings in effect for this spec.
    pub fn effective_solver(&self) -> SolverSettings {
        match (&self.solver, self.engine) {
            (Some(s), _) => s.clone(),
            (None, Engine::Cluster) if self.fixed.n_max > 1 => SolverSettings::cluster(),
            (None, _) => SolverSettings::default(),
        }
    }
}

/// One grid node of a phase map.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseMapRow {
    pub axis1: f64,
    pub axis2: Option<f64>,
    pub n_a: f64,
    pub n_b: f64,
    pub delta_n: f64,
    pub label: PhaseTag,
    pub osc_amplitude: f64,
    pub osc_period: Option<f64>,
    pub per_seed: Vec<PhaseTag>,
    /// Fock cutoff finally used at this node.
    pub n_max: usize,
    /// Reason for an `UNDECIDED` row.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// The node errored for a reason other than an inconclusive tail.
    pub hard_failure: bool,
}

impl PhaseMapRow {
    fn from_label(a1: f64, a2: Option<f64>, l: &PhaseLabel, n_max: usize) -> Self {
        Self {
            axis1: a1,
            axis2: a2,
            n_a: l.n_a,
            n_b: l.n_b,
            delta_n: l.delta_n,
            label: l.tag,
            osc_amplitude: l.osc_amplitude,
            osc_period: l.osc_period,
            per_seed: l.per_seed.iter().map(|s| s.tag).collect(),
            n_max,
            error: None,
            hard_failure: false,
        }
    }

    fn failed(a1: f64, a2: Option<f64>, n_max: usize, e: &Error) -> Self {
        Self {
            axis1: a1,
            axis2: a2,
            n_a: f64::NAN,
            n_b: f64::NAN,
            delta_n: f64::NAN,
            label: PhaseTag::Undecided,
            osc_amplitude: f64::NAN,
            osc_period: None,
            per_seed: Vec::new(),
            n_max,
            error: Some(e.to_string()),
            hard_failure: !matches!(e, Error::Undecided(_)),
        }
    }

    /// An `UNDECIDED` row caused by an error rather than by a tail that
    /// never settled.
    pub fn is_failure(&self) -> bool {
        self.hard_failure
    }
}

/// Classifies one parameter point with the chosen engine. Mean-field points
/// whose Fock cutoff overflows are retried with a larger cutoff; the cutoff
/// used is returned alongside the label.
pub fn classify_point(
    engine: Engine,
    params: &ModelParams,
    seeds: &SeedSet,
    cfg: &ClassifyConfig,
    solver: &SolverSettings,
    max_n_max: usize,
) -> Result<(PhaseLabel, usize)> {
    match engine {
        Engine::Semiclassical => {
            semiclassical::classify(params, &semiclassical::seed_states(seeds), cfg).map(|l| (l, params.n_max))
        }
        Engine::Cluster => cluster::classify(params, &cluster::seed_states(seeds, params.dim()), cfg, solver)
            .map(|l| (l, params.n_max)),
        Engine::Meanfield => {
            let mut p = params.clone();
            loop {
                match meanfield::classify(&p, &meanfield::seed_pairs(seeds, p.dim()), cfg, solver) {
                    Err(Error::TruncationOverflow { .. }) if p.n_max > 1 && p.n_max < max_n_max => {
                        p.n_max = (p.n_max + (p.n_max / 2).max(4)).min(max_n_max);
                    }
                    other => return other.map(|l| (l, p.n_max)),
                }
            }
        }
    }
}

/// Result of a sweep, rows in grid order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseMap {
    pub rows: Vec<PhaseMapRow>,
}

impl PhaseMap {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.is_failure()).count()
    }

    pub fn undecided(&self) -> usize {
        self.rows.iter().filter(|r| r.label == PhaseTag::Undecided).count()
    }

    pub fn failure_fraction(&self) -> f64 {
        if self.rows.is_empty() {
            0.0
        } else {
            self.failures() as f64 / self.rows.len() as f64
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(CSV_HEADER.as_bytes())?;
        out.write_all(b"\n")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                sig9(r.axis1),
                sig9_opt(r.axis2),
                sig9(r.n_a),
                sig9(r.n_b),
                sig9(r.delta_n),
                r.label,
                sig9(r.osc_amplitude),
                sig9_opt(r.osc_period)
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }
}

/// Worker count from the environment, falling back to the available
/// parallelism.
pub fn workers_from_env() -> Result<usize> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Error::InvalidParameter(format!("{WORKERS_ENV} must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Runs every grid node on a pool of `workers` threads. Per-node errors
/// become `UNDECIDED` rows; only an invalid spec aborts the sweep.
pub fn run_sweep(spec: &SweepSpec, workers: usize) -> Result<PhaseMap> {
    spec.validate()?;
    let solver = spec.effective_solver();
    let nodes = spec.nodes();
    let point = |&(a1, a2): &(f64, Option<f64>)| -> PhaseMapRow {
        let outcome = spec
            .params_at(a1, a2)
            .and_then(|p| classify_point(spec.engine, &p, &spec.seeds, &spec.classify, &solver, spec.max_n_max));
        match outcome {
            Ok((label, n_max)) => PhaseMapRow::from_label(a1, a2, &label, n_max),
            Err(e) => PhaseMapRow::failed(a1, a2, spec.fixed.n_max, &e),
        }
    };
    let rows = if workers <= 1 {
        nodes.iter().map(point).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("cannot start {workers} workers: {e}")))?;
        pool.install(|| nodes.par_iter().map(point).collect())
    };
    Ok(PhaseMap { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_parsing_and_values() {
        let a: Axis = "delta:-1:1.5:126".parse().unwrap();
        assert_eq!(a, Axis::new("delta", -1.0, 1.5, 126));
        let v = a.values();
        assert_eq!(v.len(), 126);
        assert_eq!(v[0], -1.0);
        assert_eq!(v[125], 1.5);
        assert!((v[1] - v[0] - 0.02).abs() < 1e-12);
        assert!("delta:1:2".parse::<Axis>().is_err());
        assert!("delta:a:2:3".parse::<Axis>().is_err());
        assert_eq!(a.to_string().parse::<Axis>().unwrap(), a);
    }

    #[test]
    fn spec_validation() {
        let base = || SweepSpec::new(Axis::new("delta", 0.0, 1.0, 3), Some(Axis::new("omega", 0.0, 1.0, 2)), ModelParams::default(), Engine::Meanfield);
        assert!(base().validate().is_ok());
        let mut s = base();
        s.axis2 = Some(Axis::new("delta", 0.0, 1.0, 2));
        assert!(s.validate().is_err());
        let mut s = base();
        s.axis1.count = 1;
        assert!(s.validate().is_err());
        let mut s = base();
        s.axis1.name = "n_max".into();
        assert!(s.validate().is_err());
        let mut s = base();
        s.engine = Engine::Semiclassical;
        s.fixed.u = 1.0;
        assert!(s.validate().is_err());
        let mut s = base();
        s.engine = Engine::Semiclassical;
        s.axis1.name = "zj2".into();
        assert!(s.validate().is_err());
        let mut s = base();
        s.engine = Engine::Cluster;
        s.fixed.z = 6;
        assert!(s.validate().is_err());
    }

    #[test]
    fn axis2_varies_fastest() {
        let s = SweepSpec::new(Axis::new("delta", 0.0, 1.0, 2), Some(Axis::new("omega", 0.0, 2.0, 3)), ModelParams::default(), Engine::Semiclassical);
        let n = s.nodes();
        assert_eq!(n[0], (0.0, Some(0.0)));
        assert_eq!(n[1], (0.0, Some(1.0)));
        assert_eq!(n[3], (1.0, Some(0.0)));
    }

    #[test]
    fn spec_json_accepts_both_axis_forms() {
        let text = r#"{"axis1": "delta:-1:1.5:4", "axis2": {"name": "omega", "start": 0, "stop": 1, "count": 3},
                       "fixed": {"zv": 0.5}, "engine": "semiclassical"}"#;
        let s: SweepSpec = serde_json::from_str(text).unwrap();
        assert_eq!(s.axis2.as_ref().unwrap().count, 3);
        assert_eq!(s.fixed.zv, 0.5);
        assert_eq!(s.classify.t_max, 400.0);
        let back: SweepSpec = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<SweepSpec>(r#"{"axis1": "delta:0:1:2", "bogus": 1}"#).is_err());
    }

    #[test]
    fn failures_become_undecided_rows() {
        let mut s = SweepSpec::new(Axis::new("delta", 0.0, 1.0, 2), None, ModelParams { omega: 0.5, n_max: 2, ..Default::default() }, Engine::Meanfield);
        s.max_n_max = 2;
        s.classify.t_max = 20.0;
        s.classify.burn_in = 10.0;
        s.solver = Some(SolverSettings { truncation_tol: 1e-12, ..Default::default() });
        let map = run_sweep(&s, 1).unwrap();
        assert_eq!(map.rows.len(), 2);
        assert!(map.rows.iter().all(|r| r.label == PhaseTag::Undecided && r.is_failure()));
        assert_eq!(map.failures(), 2);
        let csv = map.to_csv_string();
        assert!(csv.lines().nth(1).unwrap().contains(",,nan,nan,nan,UNDECIDED,nan,"));
    }
}
