//! Server consolidation engine.
//!
//! Tasks with CPU and memory demands are placed onto servers with best-fit or first-fit
//! heuristics. When no server can take a task, one running task is migrated to make
//! room. Consolidation empties lightly loaded servers when every one of their tasks fits
//! elsewhere, and reports servers used, servers released and tasks migrated.
//!
//! ```
//! use consolidation_core::{consolidate, Config, DatacenterState};
//!
//! let state = DatacenterState::new(1)
//!     .with_server("S1", [100])
//!     .with_server("S2", [100])
//!     .with_task("a", [60], Some("S1"))
//!     .with_task("b", [30], Some("S2"));
//! let report = consolidate(&state, &Config::default());
//! assert_eq!(report.metrics.servers_released, 1);
//! ```

pub mod allocator;
pub mod config;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod planner;
pub mod workload;

pub use allocator::{best_fit_allocate, first_fit_allocate, pack_all, sort_tasks_desc, Algorithm, AllocError, FitKind, PlacementDecision};
pub use config::{Config, ConfigError, TargetOrder, TieBreak};
pub use metrics::{compute_metrics, utilization_report, ConsolidationMetrics, MetricsError, UtilizationRow};
pub use model::{
    apply_plan, free_capacity, replay_unchecked, validate_state, Allocation, DatacenterState, MigrationMove, ModelError, Placement, Plan,
    PlanStep, Points, ResourceVector, Server, ServerId, Task, TaskId, Violation,
};
pub use planner::{
    allocate_waiting, consolidate, cost_benefit_gate, drma_allocate_with_migration, AllocationOutcome, ConsolidationReport, CostBenefit,
    GateDecision, PlannerError,
};
pub use workload::{generate_scenario, WorkloadSpec};
