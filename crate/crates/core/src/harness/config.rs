use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::detection::DetectionConfig;
use crate::error::{Error, Result};
use crate::sde::{step_count, DEFAULT_NU};

/// How impulse centres are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    /// Uniform in `[t0 + 2w, t1 − 2w]` with centres at least `2w` apart.
    Random,
    /// Explicit centres in ms.
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriveConfig {
    pub n_impulses: usize,
    /// Pulse height, 1/ms.
    pub s: f64,
    /// Pulse width, ms.
    pub w: f64,
    pub placement: Placement,
}

impl Default for DriveConfig {
    fn default() -> Self {
        Self {
            n_impulses: 0,
            s: 50.0,
            w: 0.15,
            placement: Placement::Random,
        }
    }
}

/// One experiment: oscillator, monitoring, initial-state mismatch, drive and
/// detector settings. Times in ms, rates in 1/ms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub omega_a: f64,
    pub kappa: f64,
    pub eta: f64,
    /// Thermal occupation of the reference system's initial state.
    #[serde(rename = "n_bar_R")]
    pub n_bar_r: f64,
    /// Thermal occupation assumed by the filter.
    #[serde(rename = "n_bar_F")]
    pub n_bar_f: f64,
    pub t1: f64,
    pub dt: f64,
    pub nu: f64,
    pub drive: DriveConfig,
    pub detection: DetectionConfig,
    /// Give the filter and backward pass the true drive. When off, only the
    /// reference is driven and the estimators assume `u = 0`.
    pub known_drive: bool,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            omega_a: 10.0,
            kappa: 0.1,
            eta: 1.0,
            n_bar_r: 5.0,
            n_bar_f: 3.0,
            t1: 6.0,
            dt: 1e-3,
            nu: DEFAULT_NU,
            drive: DriveConfig::default(),
            detection: DetectionConfig::default(),
            known_drive: true,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("omega_a", self.omega_a),
            ("kappa", self.kappa),
            ("t1", self.t1),
            ("dt", self.dt),
            ("nu", self.nu),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(format!(
                    "{name} = {v} must be positive and finite"
                )));
            }
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::validation(format!(
                "eta = {} outside (0, 1]",
                self.eta
            )));
        }
        for (name, v) in [("n_bar_R", self.n_bar_r), ("n_bar_F", self.n_bar_f)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::validation(format!("{name} = {v} must be ≥ 0")));
            }
        }
        step_count(self.t1, self.dt)?;
        let d = &self.drive;
        if !d.s.is_finite() {
            return Err(Error::validation(format!(
                "drive height s = {} is not finite",
                d.s
            )));
        }
        if d.n_impulses > 0 && !(d.w > 0.0 && d.w.is_finite()) {
            return Err(Error::validation(format!(
                "pulse width w = {} must be positive",
                d.w
            )));
        }
        if let Placement::Fixed(centres) = &d.placement {
            if centres.len() != d.n_impulses {
                return Err(Error::validation(format!(
                    "{} fixed centres given for n_impulses = {}",
                    centres.len(),
                    d.n_impulses
                )));
            }
        }
        self.detection.validate()
    }

    /// SHA-256 of the canonical JSON serialisation, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serialises");
        hex(&Sha256::digest(bytes))
    }

    pub fn match_tolerance(&self) -> f64 {
        self.detection.tolerance_for_width(self.drive.w)
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
