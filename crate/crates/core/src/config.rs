use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Points;

/// How two servers that compare equal are ordered.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Lowest index in the scenario's declared server order wins.
    #[default]
    LowestIndex,
}

/// Order in which the migration search visits target servers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetOrder {
    /// Least free capacity first: fill the most utilized server.
    #[default]
    Ascending,
    /// Most free capacity first.
    Descending,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Dimension used for ordering and best-fit selection (0 = CPU).
    pub primary_dim: usize,
    /// Utilization cap in percent of capacity for plain allocation.
    pub pre_max: Points,
    /// Utilization cap in percent of capacity once migrations are involved.
    pub post_max: Points,
    pub cost_per_point_moved: f64,
    pub benefit_per_server_released: f64,
    pub tie_break: TieBreak,
    pub target_order: TargetOrder,
    pub seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            primary_dim: 0,
            pre_max: 70,
            post_max: 100,
            cost_per_point_moved: 1.0,
            benefit_per_server_released: 100.0,
            tie_break: TieBreak::LowestIndex,
            target_order: TargetOrder::Ascending,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("thresholds must satisfy 0 < pre_max <= post_max <= 100 (got pre_max {pre_max}, post_max {post_max})")]
    Thresholds { pre_max: Points, post_max: Points },
    #[error("{name} must be a finite non-negative number (got {value})")]
    Weight { name: &'static str, value: f64 },
    #[error("primary dimension {dim} out of range for {dims} dimensions")]
    PrimaryDim { dim: usize, dims: usize },
}

impl Config {
    /// Checks the invariants that do not depend on a scenario.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0 < self.pre_max && self.pre_max <= self.post_max && self.post_max <= 100) {
            return Err(ConfigError::Thresholds {
                pre_max: self.pre_max,
                post_max: self.post_max,
            });
        }
        for (name, value) in [
            ("cost_per_point_moved", self.cost_per_point_moved),
            ("benefit_per_server_released", self.benefit_per_server_released),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(ConfigError::Weight { name, value });
            }
        }
        Ok(())
    }

    /// Like [`Config::validate`], also checking the primary dimension against `dims`.
    pub fn validate_for(&self, dims: usize) -> Result<(), ConfigError> {
        self.validate()?;
        if self.primary_dim >= dims {
            return Err(ConfigError::PrimaryDim {
                dim: self.primary_dim,
                dims,
            });
        }
        Ok(())
    }
}
