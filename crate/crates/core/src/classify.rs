//! Long-time tail analysis and phase labelling shared by all dynamical
//! engines (quantum mean field, semiclassical, cluster).
//!
//! An engine integrates one sublattice pair from a seed and reports the
//! sampled populations. Per seed the tail is reduced to a stationary,
//! oscillating or still-drifting verdict; drifting tails are extended, and
//! the per-seed labels are merged into a bistability-aware [`PhaseLabel`].

use std::fmt;
use std::str::FromStr;

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{DensityMatrix, Physicality};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PhaseTag {
    #[serde(rename = "UNI")]
    Uni,
    #[serde(rename = "CRY")]
    Cry,
    #[serde(rename = "OSC")]
    Osc,
    #[serde(rename = "UNI_OSC")]
    UniOsc,
    #[serde(rename = "UNI_CRY")]
    UniCry,
    #[serde(rename = "CRY_OSC")]
    CryOsc,
    #[serde(rename = "IRR")]
    Irr,
    #[serde(rename = "UNDECIDED")]
    Undecided,
}

impl PhaseTag {
    pub fn as_str(self) -> &'static str {
        match self {
            PhaseTag::Uni => "UNI",
            PhaseTag::Cry => "CRY",
            PhaseTag::Osc => "OSC",
            PhaseTag::UniOsc => "UNI_OSC",
            PhaseTag::UniCry => "UNI_CRY",
            PhaseTag::CryOsc => "CRY_OSC",
            PhaseTag::Irr => "IRR",
            PhaseTag::Undecided => "UNDECIDED",
        }
    }

    /// Whether the label includes a crystalline attractor.
    pub fn has_crystal(self) -> bool {
        matches!(self, PhaseTag::Cry | PhaseTag::UniCry | PhaseTag::CryOsc)
    }

    pub fn has_oscillation(self) -> bool {
        matches!(self, PhaseTag::Osc | PhaseTag::UniOsc | PhaseTag::CryOsc | PhaseTag::Irr)
    }
}

impl fmt::Display for PhaseTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PhaseTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "UNI" => PhaseTag::Uni,
            "CRY" => PhaseTag::Cry,
            "OSC" => PhaseTag::Osc,
            "UNI_OSC" => PhaseTag::UniOsc,
            "UNI_CRY" => PhaseTag::UniCry,
            "CRY_OSC" => PhaseTag::CryOsc,
            "IRR" => PhaseTag::Irr,
            "UNDECIDED" => PhaseTag::Undecided,
            other => return Err(Error::InvalidParameter(format!("unknown phase tag `{other}`"))),
        })
    }
}

/// Thresholds and time windows of the tail analysis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyConfig {
    /// Total integration time of the first pass.
    pub t_max: f64,
    /// Start of the analysed window.
    pub burn_in: f64,
    /// Sampling interval inside the window.
    pub sample_dt: f64,
    /// Peak-to-peak population swing that counts as oscillation.
    pub eps_osc: f64,
    /// Sublattice imbalance that counts as crystalline order.
    pub eps_cry: f64,
    /// Spectral peak must exceed this multiple of the median magnitude.
    pub dominance: f64,
    /// Residual of the equations of motion required for a stationary label.
    pub stationary_residual: f64,
    /// Early-exit residual: integration stops once the state is this close
    /// to a fixed point.
    pub early_exit_residual: f64,
    /// Additional windows allowed for tails that are still drifting.
    pub max_extensions: usize,
    /// Size of the displacement used for the chaos test.
    pub chaos_perturbation: f64,
    /// Trajectory separation that signals sensitive dependence.
    pub chaos_divergence: f64,
    /// Displacement applied to symmetric stationary states to probe their
    /// stability against sublattice symmetry breaking.
    pub symmetry_probe: f64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            t_max: 400.0,
            burn_in: 200.0,
            sample_dt: 0.1,
            eps_osc: 1e-3,
            eps_cry: 1e-2,
            dominance: 5.0,
            stationary_residual: 1e-7,
            early_exit_residual: 1e-8,
            max_extensions: 3,
            chaos_perturbation: 1e-6,
            chaos_divergence: 1e-3,
            symmetry_probe: 1e-3,
        }
    }
}

impl ClassifyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_max > self.burn_in && self.burn_in >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "need t_max > burn_in >= 0, got t_max = {}, burn_in = {}",
                self.t_max, self.burn_in
            )));
        }
        if !(self.sample_dt > 0.0) || self.sample_dt > (self.t_max - self.burn_in) / 8.0 {
            return Err(Error::InvalidParameter(format!(
                "sample_dt {} must be positive and resolve the window",
                self.sample_dt
            )));
        }
        Ok(())
    }

    pub fn window(&self) -> RunWindow {
        RunWindow { duration: self.t_max, record_from: self.burn_in, sample_dt: self.sample_dt }
    }
}

/// Integration request handed to an engine. Times are relative to the start
/// state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunWindow {
    pub duration: f64,
    pub record_from: f64,
    pub sample_dt: f64,
}

/// Sampled sublattice populations of one integration.
#[derive(Clone, Debug)]
pub struct PairRun<S> {
    pub times: Vec<f64>,
    pub n_a: Vec<f64>,
    pub n_b: Vec<f64>,
    pub final_state: S,
    /// Set when integration stopped early on a fixed point.
    pub stationary: bool,
    /// Norm of the equations of motion at the final state.
    pub final_residual: f64,
    /// Worst density-matrix invariants seen, for density-matrix engines.
    pub physicality: Option<Physicality>,
}

/// Dynamics of one sublattice pair as seen by the classifier.
pub trait PairEngine {
    type State: Clone;

    fn run(&self, start: &Self::State, window: RunWindow, early_exit: f64) -> Result<PairRun<Self::State>>;

    /// Small displacement of the A sublattice only.
    fn perturb(&self, state: &Self::State, eps: f64) -> Self::State;

    /// Whether A and B carry identical states.
    fn is_symmetric(&self, state: &Self::State) -> bool;
}

/// Initial state of one site, independent of the engine.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiteSeed {
    Vacuum,
    /// Coherent state with real amplitude.
    Coherent(f64),
    /// Mixture `p |1><1| + (1 - p) |0><0|`.
    OnePhotonMix(f64),
}

impl SiteSeed {
    pub fn density(self, dim: usize) -> DensityMatrix {
        match self {
            SiteSeed::Vacuum => DensityMatrix::vacuum(dim),
            SiteSeed::Coherent(alpha) => DensityMatrix::coherent(Complex::new(alpha, 0.0), dim),
            SiteSeed::OnePhotonMix(p) => DensityMatrix::fock(1, dim)
                .expect("dim >= 2")
                .mix(&DensityMatrix::vacuum(dim), p)
                .expect("weight in [0, 1]"),
        }
    }

    /// `(<n>, <a>)` of the untruncated state.
    pub fn moments(self) -> (f64, Complex<f64>) {
        match self {
            SiteSeed::Vacuum => (0.0, Complex::new(0.0, 0.0)),
            SiteSeed::Coherent(alpha) => (alpha * alpha, Complex::new(alpha, 0.0)),
            SiteSeed::OnePhotonMix(p) => (p, Complex::new(0.0, 0.0)),
        }
    }
}

/// Named collections of `(A, B)` seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedSet {
    /// Weakly displaced A, coherent amplitude 1 on both, half-excited A.
    Default,
    /// The two asymmetric members of the default set.
    Asymmetric,
    Custom(Vec<(SiteSeed, SiteSeed)>),
}

impl Default for SeedSet {
    fn default() -> Self {
        SeedSet::Default
    }
}

impl SeedSet {
    pub fn pairs(&self) -> Vec<(SiteSeed, SiteSeed)> {
        let weak = (SiteSeed::Coherent(0.1), SiteSeed::Vacuum);
        let half = (SiteSeed::OnePhotonMix(0.5), SiteSeed::Vacuum);
        match self {
            SeedSet::Default => vec![weak, (SiteSeed::Coherent(1.0), SiteSeed::Coherent(1.0)), half],
            SeedSet::Asymmetric => vec![weak, half],
            SeedSet::Custom(v) => v.clone(),
        }
    }
}

impl FromStr for SeedSet {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "default" => Ok(SeedSet::Default),
            "asymmetric" => Ok(SeedSet::Asymmetric),
            other => Err(Error::InvalidParameter(format!("unknown seed set `{other}`"))),
        }
    }
}

/// Reduced statistics of one analysed window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TailVerdict {
    Stationary { delta_n: f64 },
    Oscillating { amplitude: f64, delta_n: f64, period: Option<f64> },
    Drifting { reason: &'static str },
}

/// Time average of |n_A - n_B| over the samples.
pub fn mean_imbalance(n_a: &[f64], n_b: &[f64]) -> f64 {
    if n_a.is_empty() {
        return 0.0;
    }
    n_a.iter().zip(n_b).map(|(a, b)| (a - b).abs()).sum::<f64>() / n_a.len() as f64
}

pub fn peak_to_peak(x: &[f64]) -> f64 {
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if x.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

/// Dominant period of a uniformly sampled signal, or `None` when no
/// spectral line stands out against the median magnitude by `dominance`.
pub fn dominant_period(x: &[f64], dt: f64, dominance: f64) -> Option<f64> {
    let n = x.len();
    if n < 8 {
        return None;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = x.iter().map(|v| Complex::new(v - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let mags: Vec<f64> = buf[1..=n / 2].iter().map(|c| c.norm()).collect();
    let (k, peak) = mags
        .iter()
        .cloned()
        .enumerate()
        .fold((0, 0.0), |best, (i, m)| if m > best.1 { (i, m) } else { best });
    let mut sorted = mags.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let median = sorted[sorted.len() / 2];
    if peak >= dominance * median && peak > 0.0 {
        Some(n as f64 * dt / (k + 1) as f64)
    } else {
        None
    }
}

/// Reduces one window to a verdict.
pub fn analyze_tail<S>(run: &PairRun<S>, record_from: f64, cfg: &ClassifyConfig) -> TailVerdict {
    let start = run.times.partition_point(|&t| t < record_from - 1e-9);
    let (n_a, n_b) = (&run.n_a[start..], &run.n_b[start..]);
    if run.stationary || n_a.len() < 2 {
        let delta_n = match (run.n_a.last(), run.n_b.last()) {
            (Some(a), Some(b)) => (a - b).abs(),
            _ => 0.0,
        };
        if run.final_residual >= cfg.stationary_residual {
            return TailVerdict::Drifting { reason: "window too short to judge" };
        }
        return TailVerdict::Stationary { delta_n };
    }
    let amplitude = peak_to_peak(n_a).max(peak_to_peak(n_b));
    let delta_n = mean_imbalance(n_a, n_b);
    if amplitude < cfg.eps_osc {
        if run.final_residual >= cfg.stationary_residual {
            return TailVerdict::Drifting { reason: "stationary tail still relaxing" };
        }
        return TailVerdict::Stationary { delta_n };
    }
    let half = n_a.len() / 2;
    let early = peak_to_peak(&n_a[..half]).max(peak_to_peak(&n_b[..half]));
    let late = peak_to_peak(&n_a[half..]).max(peak_to_peak(&n_b[half..]));
    if late < 0.5 * early {
        return TailVerdict::Drifting { reason: "oscillation envelope decaying" };
    }
    if late > 2.0 * early {
        return TailVerdict::Drifting { reason: "oscillation envelope growing" };
    }
    let dt = if n_a.len() > 1 { (run.times[run.times.len() - 1] - run.times[start]) / (n_a.len() - 1) as f64 } else { cfg.sample_dt };
    let period = dominant_period(n_a, dt, cfg.dominance);
    TailVerdict::Oscillating { amplitude, delta_n, period }
}

/// Outcome for one seed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeedVerdict {
    pub tag: PhaseTag,
    pub delta_n: f64,
    pub osc_amplitude: f64,
    pub osc_period: Option<f64>,
    /// Time-averaged sublattice populations over the analysed window.
    pub n_a: f64,
    pub n_b: f64,
    /// Worst density-matrix invariants over every run behind this verdict.
    pub physicality: Option<Physicality>,
}

/// Merged classification of a parameter point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseLabel {
    pub tag: PhaseTag,
    /// Largest per-seed time-averaged imbalance.
    pub delta_n: f64,
    /// Largest per-seed peak-to-peak population swing.
    pub osc_amplitude: f64,
    pub osc_period: Option<f64>,
    pub n_a: f64,
    pub n_b: f64,
    pub physicality: Option<Physicality>,
    pub per_seed: Vec<SeedVerdict>,
}

/// Merges per-seed tags: identical tags pass through, pairs become
/// bistability labels, any irregular seed makes the point irregular.
pub fn merge_tags(tags: &[PhaseTag]) -> PhaseTag {
    let has = |t| tags.contains(&t);
    if has(PhaseTag::Irr) {
        return PhaseTag::Irr;
    }
    match (has(PhaseTag::Uni), has(PhaseTag::Cry), has(PhaseTag::Osc)) {
        (true, false, false) => PhaseTag::Uni,
        (false, true, false) => PhaseTag::Cry,
        (false, false, true) => PhaseTag::Osc,
        (true, false, true) => PhaseTag::UniOsc,
        (true, true, false) => PhaseTag::UniCry,
        (false, true, true) => PhaseTag::CryOsc,
        // three coexisting attractors: report the crystalline/oscillatory
        // pair, the uniform branch stays visible in the per-seed tags
        (true, true, true) => PhaseTag::CryOsc,
        (false, false, false) => PhaseTag::Undecided,
    }
}

pub fn merge(per_seed: Vec<SeedVerdict>) -> PhaseLabel {
    let tags: Vec<PhaseTag> = per_seed.iter().map(|s| s.tag).collect();
    let tag = merge_tags(&tags);
    let delta_n = per_seed.iter().map(|s| s.delta_n).fold(0.0, f64::max);
    let osc_amplitude = per_seed.iter().map(|s| s.osc_amplitude).fold(0.0, f64::max);
    let osc_period = per_seed
        .iter()
        .filter(|s| s.osc_period.is_some())
        .max_by(|a, b| a.osc_amplitude.total_cmp(&b.osc_amplitude))
        .and_then(|s| s.osc_period);
    let rep = per_seed
        .iter()
        .max_by(|a, b| a.delta_n.total_cmp(&b.delta_n))
        .expect("at least one seed");
    let physicality = per_seed.iter().fold(None, |acc, s| worst_of(acc, s.physicality));
    PhaseLabel { tag, delta_n, osc_amplitude, osc_period, n_a: rep.n_a, n_b: rep.n_b, physicality, per_seed }
}

pub fn worst_of(a: Option<Physicality>, b: Option<Physicality>) -> Option<Physicality> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.worst(y)),
        (x, y) => x.or(y),
    }
}

fn window_means<S>(run: &PairRun<S>, record_from: f64) -> (f64, f64) {
    let start = run.times.partition_point(|&t| t < record_from - 1e-9);
    let (a, b) = if start < run.n_a.len() {
        (&run.n_a[start..], &run.n_b[start..])
    } else {
        (&run.n_a[run.n_a.len().saturating_sub(1)..], &run.n_b[run.n_b.len().saturating_sub(1)..])
    };
    let mean = |x: &[f64]| if x.is_empty() { 0.0 } else { x.iter().sum::<f64>() / x.len() as f64 };
    (mean(a), mean(b))
}

/// Drives one seed to a verdict, extending the integration while the tail
/// drifts and running the symmetry and chaos probes where needed.
pub fn classify_seed<E: PairEngine>(engine: &E, seed: &E::State, cfg: &ClassifyConfig) -> Result<SeedVerdict> {
    let window = cfg.window();
    let mut run = engine.run(seed, window, cfg.early_exit_residual)?;
    let mut phys = run.physicality;
    let mut record_from = window.record_from;
    let mut probed_symmetry = false;
    let mut extensions = 0;
    let ext_window = RunWindow {
        duration: cfg.t_max - cfg.burn_in,
        record_from: 0.0,
        sample_dt: cfg.sample_dt,
    };
    loop {
        match analyze_tail(&run, record_from, cfg) {
            TailVerdict::Stationary { delta_n } => {
                if !probed_symmetry && engine.is_symmetric(&run.final_state) {
                    // the symmetric manifold is invariant; test whether the
                    // reached state survives a sublattice imbalance
                    probed_symmetry = true;
                    let start = engine.perturb(&run.final_state, cfg.symmetry_probe);
                    run = engine.run(&start, window, cfg.early_exit_residual)?;
                    phys = worst_of(phys, run.physicality);
                    record_from = window.record_from;
                    continue;
                }
                let (n_a, n_b) = window_means(&run, record_from);
                let tag = if delta_n < cfg.eps_cry { PhaseTag::Uni } else { PhaseTag::Cry };
                return Ok(SeedVerdict { tag, delta_n, osc_amplitude: 0.0, osc_period: None, n_a, n_b, physicality: phys });
            }
            TailVerdict::Oscillating { .. } if !probed_symmetry && engine.is_symmetric(&run.final_state) => {
                probed_symmetry = true;
                let start = engine.perturb(&run.final_state, cfg.symmetry_probe);
                run = engine.run(&start, window, cfg.early_exit_residual)?;
                phys = worst_of(phys, run.physicality);
                record_from = window.record_from;
            }
            TailVerdict::Oscillating { amplitude, delta_n, period } => {
                let (n_a, n_b) = window_means(&run, record_from);
                let tag = if period.is_some() {
                    PhaseTag::Osc
                } else {
                    let (chaotic, p) = diverges(engine, seed, &run, window, cfg)?;
                    phys = worst_of(phys, p);
                    if chaotic {
                        PhaseTag::Irr
                    } else {
                        PhaseTag::Osc
                    }
                };
                return Ok(SeedVerdict {
                    tag,
                    delta_n,
                    osc_amplitude: amplitude,
                    osc_period: period,
                    n_a,
                    n_b,
                    physicality: phys,
                });
            }
            TailVerdict::Drifting { reason } => {
                if extensions >= cfg.max_extensions {
                    return Err(Error::Undecided(format!(
                        "{reason} after {} time units",
                        cfg.t_max + extensions as f64 * ext_window.duration
                    )));
                }
                extensions += 1;
                run = engine.run(&run.final_state, ext_window, cfg.early_exit_residual)?;
                phys = worst_of(phys, run.physicality);
                record_from = 0.0;
            }
        }
    }
}

fn diverges<E: PairEngine>(
    engine: &E,
    seed: &E::State,
    reference: &PairRun<E::State>,
    window: RunWindow,
    cfg: &ClassifyConfig,
) -> Result<(bool, Option<Physicality>)> {
    // the reference may come from an extension; compare only when the
    // sampling grids agree, otherwise redo the reference from the seed
    let fresh;
    let mut phys = None;
    let reference = if reference.times.len() > 1 && (reference.times[0] - window.record_from).abs() < 1e-9 {
        reference
    } else {
        fresh = engine.run(seed, window, 0.0)?;
        phys = fresh.physicality;
        &fresh
    };
    let shifted = engine.run(&engine.perturb(seed, cfg.chaos_perturbation), window, 0.0)?;
    phys = worst_of(phys, shifted.physicality);
    let len = reference.n_a.len().min(shifted.n_a.len());
    let sep = (0..len)
        .map(|i| (reference.n_a[i] - shifted.n_a[i]).abs())
        .fold(0.0, f64::max);
    Ok((sep > cfg.chaos_divergence, phys))
}

/// Runs every seed and merges the verdicts. Any undecided seed makes the
/// whole point undecided.
pub fn classify_seeds<E: PairEngine>(engine: &E, seeds: &[E::State], cfg: &ClassifyConfig) -> Result<PhaseLabel> {
    cfg.validate()?;
    if seeds.len() < 2 || seeds.iter().all(|s| engine.is_symmetric(s)) {
        return Err(Error::InvalidParameter(
            "need at least two seeds, one of them sublattice-asymmetric".into(),
        ));
    }
    let per_seed = seeds.iter().map(|s| classify_seed(engine, s, cfg)).collect::<Result<Vec<_>>>()?;
    Ok(merge(per_seed))
}
