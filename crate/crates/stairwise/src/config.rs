// SPDX-License-Identifier: Apache-2.0

//! Run configuration: estimator, segmentation and baseline settings, an
//! optional noise override and the noise profile applied to scenarios.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use stairwise_core::baseline::BaselineConfig;
use stairwise_core::sim::ScenarioSpec;
use stairwise_core::{FilterConfig, NoiseConfig, SegmentationConfig};

/// Scale applied to every simulated and modelled noise level. `Exact` keeps
/// a tiny residual noise so that covariances stay invertible.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseProfile {
    Exact,
    Low,
    #[default]
    Default,
    High,
}

impl NoiseProfile {
    pub fn scale(self) -> f64 {
        match self {
            Self::Exact => 1e-4,
            Self::Low => 0.5,
            Self::Default => 1.0,
            Self::High => 2.0,
        }
    }

    pub fn apply(self, spec: &mut ScenarioSpec) {
        let k = self.scale();
        if k == 1.0 {
            return;
        }
        spec.noise = spec.noise.scaled(k);
        spec.detector.endpoint_sigma *= k;
        spec.cloud_noise *= k;
    }
}

impl FromStr for NoiseProfile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "exact" | "zero" => Ok(Self::Exact),
            "low" => Ok(Self::Low),
            "default" => Ok(Self::Default),
            "high" => Ok(Self::High),
            _ => Err(format!("unknown noise profile {s:?} (exact, low, default, high)")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub filter: FilterConfig,
    pub segmentation: SegmentationConfig,
    pub baseline: BaselineConfig,
    /// Replaces the noise of every scenario before the profile is applied.
    pub noise: Option<NoiseConfig>,
    pub profile: NoiseProfile,
}

impl RunConfig {
    /// Loads TOML, or JSON when the file ends in `.json`.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            serde_json::from_str(&text)?
        } else {
            toml::from_str(&text)?
        };
        Ok(cfg)
    }

    /// The scenario as this configuration would run it.
    pub fn prepare(&self, spec: &ScenarioSpec) -> ScenarioSpec {
        let mut s = spec.clone();
        if let Some(n) = self.noise {
            s.noise = n;
        }
        self.profile.apply(&mut s);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_toml_keeps_defaults() {
        let cfg: RunConfig = toml::from_str("profile = \"high\"\n[filter]\nlanding_kappa = 3.0\n[noise.measurement]\nr = 0.05\n").unwrap();
        assert_eq!(cfg.filter.landing_kappa, 3.0);
        assert_eq!(cfg.filter.association, FilterConfig::default().association);
        assert_eq!(cfg.profile, NoiseProfile::High);
        let n = cfg.noise.unwrap();
        assert_eq!(n.measurement.r, 0.05);
        assert_eq!(n.measurement.phi, NoiseConfig::default().measurement.phi);
        assert!(toml::from_str::<RunConfig>("bogus = 1\n").is_err());
    }

    #[test]
    fn profiles_parse() {
        assert_eq!("HIGH".parse::<NoiseProfile>().unwrap(), NoiseProfile::High);
        assert_eq!("zero".parse::<NoiseProfile>().unwrap(), NoiseProfile::Exact);
        assert!("loud".parse::<NoiseProfile>().is_err());
    }
}
