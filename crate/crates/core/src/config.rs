//! Run configuration, readable from `key = value` text.

use serde::{Deserialize, Serialize};

use crate::dynamics::Kernel;
use crate::error::{Error, Result};
use crate::robust::X84Rule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Annealer {
    /// Acceptance-rate feedback against the LamRate schedule, fixed budget.
    #[default]
    Asa,
    /// Fixed geometric cooling until the temperature drops below
    /// `sa_epsilon`.
    Sa,
}

/// How source points find their partner in the target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matching {
    /// Nearest standardized `V_g` value, computed once before the loop.
    Features,
    /// Nearest neighbour in (position, `feature_scale` * `V_g`) space,
    /// recomputed every iteration at the current pose.
    #[default]
    Joint,
}

/// Length of the rigid-body step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeStep {
    /// `dt = 1`.
    Unit,
    /// Separate lengths `dt^2 = G / K_t` for translation and `J / K_r` for
    /// rotation, `K_t` and `K_r` being the spring stiffness of the current
    /// force field along the force and about the torque axis. The step is
    /// then half a one-dimensional Newton step, whatever the units.
    #[default]
    Normalized,
}

/// Every tunable of a registration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub max_iterations: usize,
    pub beta: f64,
    pub rng_seed: u64,
    pub annealer: Annealer,
    pub sa_epsilon: f64,
    /// Hard cap on SA iterations in case `beta` is very close to 1.
    pub sa_max_iterations: usize,
    pub resample_rate: f64,
    pub knn_k: usize,
    pub alpha: f64,
    pub kernel: Kernel,
    pub x84_rule: X84Rule,
    pub matching: Matching,
    /// Feature weight of joint matching at temperature 1, in bounding-box
    /// diagonals per standardized feature unit.
    pub feature_scale: f64,
    /// The feature weight follows `feature_scale * T^feature_power`.
    pub feature_power: f64,
    /// Force softening length as a multiple of the current median match
    /// distance; 0 leaves only the floor.
    pub softening: f64,
    /// Floor of the softening length, as a fraction of the bounding-box
    /// diagonal.
    pub softening_min: f64,
    /// Clip particle masses at the X84 threshold of the resampled
    /// intensities, so a surviving outlier cannot dominate the mass center.
    pub cap_masses: bool,
    pub time_step: TimeStep,
    /// Largest weight of the normal-projected force, reached once joint
    /// matching is dominated by position.
    pub normal_projection: f64,
    /// Stop once `T < sa_epsilon` and the applied step is below 1e-12.
    pub early_exit: bool,
    /// Translate the source centroid onto the target centroid first.
    pub center_first: bool,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            beta: 0.9,
            rng_seed: 0,
            annealer: Annealer::Asa,
            sa_epsilon: 1e-5,
            sa_max_iterations: 100_000,
            resample_rate: 0.3,
            knn_k: crate::graph::DEFAULT_K,
            alpha: crate::robust::DEFAULT_ALPHA,
            kernel: Kernel::Corrected,
            x84_rule: X84Rule::MedianCentered,
            matching: Matching::Joint,
            feature_scale: 1.0,
            feature_power: 8.0,
            softening: 2.0,
            softening_min: 0.005,
            cap_masses: true,
            time_step: TimeStep::Normalized,
            normal_projection: 1.0,
            early_exit: false,
            center_first: false,
        }
    }
}

impl Config {
    /// The formulas exactly as written: one-shot feature matching, unit time
    /// step, raw masses, Coulomb forces clamped only at `1e-9` of the
    /// diagonal, the literal kernel and X84 test.
    pub fn literal() -> Self {
        Self {
            kernel: Kernel::Literal,
            x84_rule: X84Rule::Literal,
            matching: Matching::Features,
            softening: 0.0,
            softening_min: 1e-9,
            cap_masses: false,
            time_step: TimeStep::Unit,
            normal_projection: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be at least 1"));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::invalid(format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        if !(self.sa_epsilon > 0.0 && self.sa_epsilon < 1.0) {
            return Err(Error::invalid("sa_epsilon must lie in (0, 1)"));
        }
        if !(self.resample_rate > 0.0 && self.resample_rate <= 1.0) {
            return Err(Error::invalid("resample_rate must lie in (0, 1]"));
        }
        if self.knn_k == 0 {
            return Err(Error::invalid("knn_k must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid("alpha must be positive"));
        }
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !(positive(self.feature_scale) && self.feature_power.is_finite() && self.feature_power >= 0.0) {
            return Err(Error::invalid("feature_scale must be positive and feature_power non-negative"));
        }
        if !(0.0..=1.0).contains(&self.normal_projection) {
            return Err(Error::invalid("normal_projection must lie in [0, 1]"));
        }
        if !(self.softening >= 0.0 && self.softening.is_finite() && positive(self.softening_min)) {
            return Err(Error::invalid("softening must be non-negative and softening_min positive"));
        }
        Ok(())
    }

    /// Parses `key = value` TOML text; missing keys keep their defaults.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| {
            let location = match e.span() {
                Some(span) => {
                    let line = text[..span.start].matches('\n').count() + 1;
                    format!("line {line}")
                }
                None => "config".into(),
            };
            Error::parse(location, e.message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Keys set in `text` replace this config's values; the rest are kept.
    pub fn overlay(&self, text: &str) -> Result<Self> {
        // Checked on its own first so errors carry the text's line numbers.
        Self::from_toml(text)?;
        let mut table: toml::Table = self.to_toml().parse().expect("config serializes to a table");
        table.extend(text.parse::<toml::Table>().expect("already parsed"));
        Self::from_toml(&table.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlay_keeps_unset_keys() {
        let cfg = Config::literal().overlay("beta = 0.5").unwrap();
        assert_eq!(cfg.beta, 0.5);
        assert_eq!(cfg.kernel, Kernel::Literal);
        assert!(matches!(Config::default().overlay("\nbeta = ["), Err(Error::Parse { location, .. }) if location == "line 2"));
    }

    #[test]
    fn toml_round_trip() {
        let cfg = Config {
            beta: 0.8,
            annealer: Annealer::Sa,
            kernel: Kernel::Literal,
            ..Config::default()
        };
        assert_eq!(Config::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = Config::from_toml("beta = 0.75\nx84_rule = \"literal\"\n").unwrap();
        assert_eq!(cfg.beta, 0.75);
        assert_eq!(cfg.x84_rule, X84Rule::Literal);
        assert_eq!(cfg.max_iterations, 100);
    }

    #[test]
    fn bad_input_is_reported() {
        let err = Config::from_toml("beta = 0.9\nbogus = 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { ref location, .. } if location == "line 2"), "{err}");
        assert!(matches!(Config::from_toml("beta = 1.5"), Err(Error::InvalidInput(_))));
        assert!(matches!(Config::from_toml("beta = "), Err(Error::Parse { .. })));
    }
}
