//! Harness configuration: the checked-in defaults, TOML overlays and
//! validation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laurent::ExactParams;
use crate::sigma::{Kind, SigmaFamily, Truncation, C};

const DEFAULTS: &str = include_str!("../config/defaults.toml");

/// Serde adapter writing a complex number as `[re, im]`.
pub mod cx {
    use super::C;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(z: &C, s: S) -> std::result::Result<S::Ok, S::Error> {
        [z.re, z.im].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<C, D::Error> {
        let [re, im] = <[f64; 2]>::deserialize(d)?;
        Ok(C::new(re, im))
    }
}

/// Serde adapter for a list of complex numbers.
pub mod cx_vec {
    use super::C;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[C], s: S) -> std::result::Result<S::Ok, S::Error> {
        v.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<C>, D::Error> {
        let v = Vec::<[f64; 2]>::deserialize(d)?;
        Ok(v.into_iter().map(|[re, im]| C::new(re, im)).collect())
    }
}

/// Periods of `[u]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Periods {
    #[serde(with = "cx")]
    pub omega1: C,
    #[serde(with = "cx")]
    pub omega2: C,
}

/// Residual tolerance per family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub rational: f64,
    pub trig: f64,
    pub elliptic: f64,
}

impl Tolerances {
    pub fn of(&self, kind: Kind) -> f64 {
        match kind {
            Kind::Rational => self.rational,
            Kind::Trigonometric => self.trig,
            Kind::Elliptic => self.elliptic,
        }
    }
}

/// Additive parameters of the numeric identities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumParams {
    #[serde(with = "cx")]
    pub delta: C,
    #[serde(with = "cx")]
    pub kappa: C,
    /// Second coupling, used where an identity involves two of them.
    #[serde(with = "cx")]
    pub lambda: C,
    /// Offset of the type-A kernels.
    #[serde(with = "cx")]
    pub v: C,
    #[serde(with = "cx_vec")]
    pub mu: Vec<C>,
}

impl NumParams {
    /// The first `2ρ` entries of `μ`.
    pub fn for_kind(&self, kind: Kind) -> Result<NumParams> {
        let need = 2 * kind.rho();
        if self.mu.len() < need {
            return Err(Error::Config(format!("{} needs {need} values of mu, got {}", kind.name(), self.mu.len())));
        }
        Ok(NumParams { mu: self.mu[..need].to_vec(), ..self.clone() })
    }
}

/// Settings of the exact tools.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExactConfig {
    pub cauchy_degree_cap: u32,
    pub params: ExactParams,
    pub alternate: ExactParams,
}

/// The full configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub samples: usize,
    pub family: Periods,
    pub truncation: Truncation,
    pub tolerance: Tolerances,
    pub params: NumParams,
    pub exact: ExactConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config::from_toml(DEFAULTS).expect("checked-in defaults are valid")
    }
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl Config {
    /// Parse and validate a complete configuration.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The defaults with `overlay` (a partial configuration) merged on top.
    pub fn with_overlay(overlay: &str) -> Result<Self> {
        let mut base: toml::Value = toml::from_str(DEFAULTS).map_err(|e| Error::Config(e.to_string()))?;
        let over: toml::Value = toml::from_str(overlay).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut base, over);
        let cfg = Config::deserialize(base).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load_overlay(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Config::with_overlay(&text)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, t) in [("rational", self.tolerance.rational), ("trig", self.tolerance.trig), ("elliptic", self.tolerance.elliptic)] {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("tolerance.{name} must be positive")));
            }
        }
        if self.samples == 0 {
            return Err(Error::Config("samples must be positive".into()));
        }
        Truncation::new(self.truncation.max_terms, self.truncation.term_tol)?;
        self.exact.params.validate()?;
        self.exact.alternate.validate()?;
        for kind in Kind::ALL {
            self.family(kind)?;
        }
        self.params.for_kind(Kind::Elliptic)?;
        Ok(())
    }

    /// The family of the given kind built from the configured periods.
    pub fn family(&self, kind: Kind) -> Result<SigmaFamily> {
        SigmaFamily::of_kind(kind, self.family.omega1, self.family.omega2, self.truncation)
    }
}

/// Top-level sections of an overlay file.
pub fn overlay_sections(text: &str) -> Result<Vec<String>> {
    let v: toml::Value = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    Ok(v.as_table().map(|t| t.keys().cloned().collect()).unwrap_or_default())
}
