//! Experiment configuration files.
//!
//! Configs are TOML. Rationals are written as "p/q" strings and marked
//! points as "inf", "x" or "a+bi" chart coordinates, so a config never
//! passes through a binary float. [`ExperimentConfig::resolve`] reduces
//! every rational and reformats every point; serializing the resolved form
//! is a fixed point of load + resolve + serialize.

use std::path::{Path, PathBuf};

use gibbslab::pair::{format_point, format_rational, parse_point, parse_rational, LogPairCurve};
use gibbslab::stability::DeformedDensityParams;
use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub k: String,
    pub gamma: String,
    /// Grid resolution for quadrature and the Ding functional.
    pub resolution: usize,
    pub out: String,
    pub pair: PairConfig,
    pub seeds: Seeds,
    pub budgets: Budgets,
    pub partition: PartitionConfig,
    pub sample: SampleConfig,
    pub flows: FlowsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairConfig {
    pub genus: u32,
    pub points: Vec<String>,
    pub weights: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub partition: u64,
    pub sample: u64,
    pub flows: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budgets {
    /// Total Monte Carlo samples for partition estimates.
    pub partition: u64,
    /// Single-site updates per chain.
    pub sample: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Mc,
    Quadrature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionConfig {
    pub method: Method,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    pub chains: usize,
    pub bands: usize,
    pub sectors: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowsConfig {
    pub checks: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            k: "2".into(),
            gamma: "1".into(),
            resolution: 32,
            out: "gibbslab-out".into(),
            pair: PairConfig::default(),
            seeds: Seeds::default(),
            budgets: Budgets::default(),
            partition: PartitionConfig::default(),
            sample: SampleConfig::default(),
            flows: FlowsConfig::default(),
        }
    }
}

impl Default for PairConfig {
    fn default() -> Self {
        Self {
            genus: 0,
            points: vec!["0".into(), "inf".into(), "1".into()],
            weights: vec!["1/2".into(); 3],
        }
    }
}

impl Default for Budgets {
    fn default() -> Self {
        Self {
            partition: 300_000,
            sample: 200_000,
        }
    }
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self { method: Method::Mc }
    }
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            bands: 4,
            sectors: 6,
        }
    }
}

impl Default for FlowsConfig {
    fn default() -> Self {
        Self { checks: 100 }
    }
}

/// A config with its parsed mathematical content.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: ExperimentConfig,
    pub pair: LogPairCurve,
    pub k: Rational64,
    pub gamma: Rational64,
}

impl Resolved {
    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(&self.config.out)
    }

    /// Density parameters; fails for pairs without a numerical model.
    pub fn params(&self) -> Result<DeformedDensityParams, CliError> {
        Ok(DeformedDensityParams::new(self.pair.clone(), self.k, self.gamma)?)
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Validates the config and reformats rationals and points.
    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let usage = |e: gibbslab::Error| CliError::Usage(e.to_string());
        let k = parse_rational(&self.k).map_err(usage)?;
        let gamma = parse_rational(&self.gamma).map_err(usage)?;
        let weights = self
            .pair
            .weights
            .iter()
            .map(|w| parse_rational(w))
            .collect::<gibbslab::Result<Vec<_>>>()
            .map_err(usage)?;
        let (pair, points) = match self.pair.genus {
            0 => {
                let pts = self
                    .pair
                    .points
                    .iter()
                    .map(|p| parse_point(p))
                    .collect::<gibbslab::Result<Vec<_>>>()
                    .map_err(usage)?;
                let points = pts.iter().map(format_point).collect();
                (LogPairCurve::genus0(pts, weights).map_err(usage)?, points)
            }
            1 => {
                // the marked point of an elliptic curve is only a label
                if weights.len() != 1 || self.pair.points.len() != 1 {
                    return Err(CliError::Usage(
                        "a genus 1 pair has exactly one marked point and one weight".into(),
                    ));
                }
                (LogPairCurve::genus1(weights[0]), self.pair.points.clone())
            }
            g => return Err(CliError::Usage(format!("unsupported genus {g}"))),
        };
        pair.bundle_degree(k).map_err(usage)?;
        if self.resolution < 4 {
            return Err(CliError::Usage(format!("resolution must be >= 4, got {}", self.resolution)));
        }
        let mut config = self.clone();
        config.k = format_rational(&k);
        config.gamma = format_rational(&gamma);
        config.pair.points = points;
        config.pair.weights = pair.weights().iter().map(format_rational).collect();
        Ok(Resolved {
            config,
            pair,
            k,
            gamma,
        })
    }
}
