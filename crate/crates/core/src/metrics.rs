//! The three consolidation effectiveness counts and per-server utilization rows.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{replay_unchecked, DatacenterState, ModelError, Plan, ResourceVector, ServerId};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsolidationMetrics {
    /// Non-empty servers after the plan.
    pub servers_used: usize,
    /// Servers that held tasks before and hold none after.
    pub servers_released: usize,
    /// Number of migration moves in the plan.
    pub tasks_migrated: usize,
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("after-state is not the replay of the plan over the before-state")]
    StateMismatch,
    #[error("plan does not replay over the before-state: {0}")]
    Replay(#[from] ModelError),
}

pub fn compute_metrics(before: &DatacenterState, after: &DatacenterState, plan: &Plan) -> Result<ConsolidationMetrics, MetricsError> {
    let replayed = replay_unchecked(before, plan)?;
    if &replayed != after {
        return Err(MetricsError::StateMismatch);
    }
    let servers_released = before
        .servers()
        .iter()
        .zip(after.servers())
        .filter(|(b, a)| !b.is_empty() && a.is_empty())
        .count();
    Ok(ConsolidationMetrics {
        servers_used: after.servers_used(),
        servers_released,
        tasks_migrated: plan.move_count(),
    })
}

/// One server's line in a utilization table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilizationRow {
    pub server: ServerId,
    /// Demands of the placed tasks, in placement order.
    pub task_demands: Vec<ResourceVector>,
    pub total: ResourceVector,
    /// `total / capacity` per dimension.
    pub utilization: Vec<f64>,
}

impl UtilizationRow {
    /// Task demands in one dimension, padded with zeros to `columns`.
    pub fn padded(&self, dim: usize, columns: usize) -> Vec<u64> {
        let mut out: Vec<u64> = self.task_demands.iter().map(|d| d[dim]).collect();
        out.resize(columns.max(out.len()), 0);
        out
    }
}

/// One row per server, in declared order.
pub fn utilization_report(state: &DatacenterState) -> Vec<UtilizationRow> {
    (0..state.servers().len())
        .map(|i| {
            let server = state.server(i);
            let total = state.load(i);
            let utilization = total
                .iter()
                .zip(server.capacity.iter())
                .map(|(t, c)| if c == 0 { 0.0 } else { t as f64 / c as f64 })
                .collect();
            UtilizationRow {
                server: server.id.clone(),
                task_demands: state.tasks_on(i).map(|t| t.demand.clone()).collect(),
                total,
                utilization,
            }
        })
        .collect()
}
