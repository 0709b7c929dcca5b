use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Couplings of the driven cavity-array Hamiltonian and its loss rate.
///
/// All frequencies are in units of the loss rate unless `kappa` is changed
/// from its default of one. Lattice couplings are stored pre-multiplied by
/// the coordination number `z`, the combination that enters the mean-field
/// equations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    /// Cavity-pump detuning.
    pub delta: f64,
    /// Coherent drive amplitude.
    pub omega: f64,
    /// Onsite Kerr nonlinearity.
    pub u: f64,
    /// Cross-Kerr coupling times `z`.
    pub zv: f64,
    /// Single-photon hopping times `z`.
    pub zj: f64,
    /// Pair hopping times `z`.
    pub zj2: f64,
    /// Density-assisted hopping times `z`.
    pub zjn: f64,
    /// Photon loss rate.
    pub kappa: f64,
    /// Fock-space cutoff per site.
    pub n_max: usize,
    /// Lattice coordination number.
    pub z: u32,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            delta: 0.0,
            omega: 0.0,
            u: 0.0,
            zv: 0.0,
            zj: 0.0,
            zj2: 0.0,
            zjn: 0.0,
            kappa: 1.0,
            n_max: 12,
            z: 4,
        }
    }
}

/// Names accepted by [`ModelParams::set`] and [`ModelParams::get`].
pub const PARAM_NAMES: [&str; 9] = [
    "delta", "omega", "u", "zv", "zj", "zj2", "zjn", "kappa", "n_max",
];

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "kappa must be positive, got {}",
                self.kappa
            )));
        }
        if self.n_max < 1 {
            return Err(Error::InvalidParameter("n_max must be at least 1".into()));
        }
        if self.z == 0 {
            return Err(Error::InvalidParameter("z must be positive".into()));
        }
        for (name, v) in self.couplings() {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} is not finite")));
            }
        }
        Ok(())
    }

    fn couplings(&self) -> [(&'static str, f64); 7] {
        [
            ("delta", self.delta),
            ("omega", self.omega),
            ("u", self.u),
            ("zv", self.zv),
            ("zj", self.zj),
            ("zj2", self.zj2),
            ("zjn", self.zjn),
        ]
    }

    /// Local Hilbert-space dimension.
    pub fn dim(&self) -> usize {
        self.n_max + 1
    }

    /// True when only the cross-Kerr and single-photon hopping couplings are
    /// active, i.e. the regime with closed semiclassical equations.
    pub fn is_quadratic_regime(&self) -> bool {
        self.u == 0.0 && self.zj2 == 0.0 && self.zjn == 0.0
    }

    pub fn get(&self, name: &str) -> Result<f64> {
        Ok(match name {
            "delta" => self.delta,
            "omega" => self.omega,
            "u" => self.u,
            "zv" => self.zv,
            "zj" => self.zj,
            "zj2" => self.zj2,
            "zjn" => self.zjn,
            "kappa" => self.kappa,
            "n_max" => self.n_max as f64,
            other => return Err(Error::InvalidParameter(format!("unknown parameter `{other}`"))),
        })
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        match name {
            "delta" => self.delta = value,
            "omega" => self.omega = value,
            "u" => self.u = value,
            "zv" => self.zv = value,
            "zj" => self.zj = value,
            "zj2" => self.zj2 = value,
            "zjn" => self.zjn = value,
            "kappa" => self.kappa = value,
            "n_max" => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "n_max must be a positive integer, got {value}"
                    )));
                }
                self.n_max = value as usize;
            }
            other => return Err(Error::InvalidParameter(format!("unknown parameter `{other}`"))),
        }
        Ok(())
    }

    /// Builder-style setter used by tests and recipes.
    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.set(name, value).expect("known parameter name");
        self
    }
}
