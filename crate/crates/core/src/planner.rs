//! Migration planning.
//!
//! Two entry points matter to callers:
//!
//! * [`drma_allocate_with_migration`] places a waiting task that no server can take by
//!   moving one running task out of the way first.
//! * [`consolidate`] empties lightly loaded servers one at a time. A server's tasks are
//!   migrated only when all of them can leave, so every committed move contributes to
//!   releasing a server.
//!
//! Migrations are bounded by `post_max`; plain allocation uses `pre_max`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocator::{best_fit_allocate, best_fit_in, sort_tasks_desc};
use crate::config::{Config, TargetOrder};
use crate::metrics::{compute_metrics, ConsolidationMetrics};
use crate::model::{DatacenterState, Plan, Points, ServerId, Task, TaskId};

/// Outcome of the pairwise migration check.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeasibilityVerdict {
    pub feasible: bool,
    /// Index of the server with more free capacity, when the move is feasible.
    pub target: Option<usize>,
    /// Larger of the two free capacities in the primary dimension.
    pub bound: Points,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBenefit {
    pub cost: f64,
    pub benefit: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum GateDecision {
    Commit(CostBenefit),
    Reject(CostBenefit),
}

impl GateDecision {
    pub fn is_commit(&self) -> bool {
        matches!(self, GateDecision::Commit(_))
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum PlannerError {
    #[error("no single migration makes room for task {0}")]
    Infeasible(TaskId),
    #[error("task {task} fits {server} directly; use best-fit allocation")]
    DirectFit { task: TaskId, server: ServerId },
    #[error("task {0} is not waiting")]
    NotWaiting(TaskId),
}

/// Why a release candidate was left in place.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum RejectReason {
    /// At least one of the candidate's tasks has nowhere to go.
    NoRoom {
        task: TaskId,
    },
    CostExceedsBenefit(CostBenefit),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RejectedCandidate {
    pub server: ServerId,
    #[serde(flatten)]
    pub reason: RejectReason,
}

/// Result of a [`consolidate`] run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsolidationReport {
    pub before: DatacenterState,
    pub after: DatacenterState,
    pub plan: Plan,
    pub metrics: ConsolidationMetrics,
    pub cost_benefit: CostBenefit,
    /// Servers emptied by the plan, in release order.
    pub released: Vec<ServerId>,
    pub rejected: Vec<RejectedCandidate>,
}

fn free_in(state: &DatacenterState, idx: usize, dim: usize) -> Points {
    state.server(idx).capacity[dim].saturating_sub(state.load(idx)[dim])
}

/// Larger of the two servers' free capacities in `dim`.
pub fn pairwise_max_free(state: &DatacenterState, i: usize, j: usize, dim: usize) -> Points {
    free_in(state, i, dim).max(free_in(state, j, dim))
}

/// Smaller of the two servers' free capacities in `dim`. Diagnostic only.
pub fn pairwise_min_free(state: &DatacenterState, i: usize, j: usize, dim: usize) -> Points {
    free_in(state, i, dim).min(free_in(state, j, dim))
}

/// Whether `task` can migrate toward the freer of servers `i` and `j`.
///
/// Feasible when the larger free capacity covers the demand in the primary dimension
/// and that server fits the task in every dimension under `post_max`.
pub fn migration_feasible(task: &Task, state: &DatacenterState, i: usize, j: usize, config: &Config) -> FeasibilityVerdict {
    let k = config.primary_dim;
    let bound = pairwise_max_free(state, i, j, k);
    let (fi, fj) = (free_in(state, i, k), free_in(state, j, k));
    let richer = match fi.cmp(&fj) {
        std::cmp::Ordering::Greater => i,
        std::cmp::Ordering::Less => j,
        std::cmp::Ordering::Equal => i.min(j),
    };
    let feasible = bound >= task.demand[k] && state.fits(richer, &task.demand, config.post_max);
    FeasibilityVerdict {
        feasible,
        target: feasible.then_some(richer),
        bound,
    }
}

/// Finds the first (migrated task, target) pair that frees enough room for `task`.
///
/// Targets are visited by free capacity in `config.target_order`; candidate tasks are
/// every task on the other servers, smallest primary demand first.
fn find_migration(task: &Task, state: &DatacenterState, config: &Config) -> Option<(TaskId, usize, usize)> {
    let k = config.primary_dim;
    let mut targets: Vec<usize> = (0..state.servers().len()).collect();
    targets.sort_by(|&a, &b| {
        let (fa, fb) = (free_in(state, a, k), free_in(state, b, k));
        let ord = match config.target_order {
            TargetOrder::Ascending => fa.cmp(&fb),
            TargetOrder::Descending => fb.cmp(&fa),
        };
        ord.then(a.cmp(&b))
    });

    for &target in &targets {
        let mut candidates: Vec<(&Task, usize)> = (0..state.servers().len())
            .filter(|&s| s != target)
            .flat_map(|s| state.tasks_on(s).map(move |t| (t, s)))
            .collect();
        candidates.sort_by(|(a, sa), (b, sb)| a.demand[k].cmp(&b.demand[k]).then(sa.cmp(sb)).then(a.id.cmp(&b.id)));

        for (moved, source) in candidates {
            if !state.fits(target, &moved.demand, config.post_max) {
                continue;
            }
            let mut trial = state.clone();
            trial
                .relocate(&moved.id, source, target)
                .expect("candidate task sits on its source");
            if trial.fits(source, &task.demand, config.post_max) {
                return Some((moved.id.clone(), source, target));
            }
        }
    }
    None
}

/// True when `task` cannot be placed under `post_max`, neither directly nor after any
/// single migration.
pub fn allocation_infeasible(task: &Task, state: &DatacenterState, config: &Config) -> bool {
    allocation_diagnostics(task, state, config).infeasible
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationDiagnostics {
    pub infeasible: bool,
    /// Smallest pairwise-minimum free capacity over all server pairs, if any pair exists.
    pub min_pairwise_free: Option<Points>,
}

pub fn allocation_diagnostics(task: &Task, state: &DatacenterState, config: &Config) -> AllocationDiagnostics {
    let n = state.servers().len();
    let direct = (0..n).any(|i| state.fits(i, &task.demand, config.post_max));
    let infeasible = !direct && find_migration(task, state, config).is_none();
    let min_pairwise_free = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| pairwise_min_free(state, i, j, config.primary_dim))
        .min();
    AllocationDiagnostics {
        infeasible,
        min_pairwise_free,
    }
}

/// Places a waiting task that best fit could not place by migrating one running task.
///
/// Returns the one-move, one-allocation plan delta and the resulting state.
pub fn drma_allocate_with_migration(
    task: &Task,
    state: &DatacenterState,
    config: &Config,
) -> Result<(Plan, DatacenterState), PlannerError> {
    if !state.task(&task.id).is_none_or(Task::is_waiting) {
        return Err(PlannerError::NotWaiting(task.id.clone()));
    }
    if let Ok(d) = best_fit_allocate(task, state, config) {
        return Err(PlannerError::DirectFit {
            task: task.id.clone(),
            server: d.server,
        });
    }
    let (moved, source, target) = find_migration(task, state, config).ok_or_else(|| PlannerError::Infeasible(task.id.clone()))?;

    let mut next = state.clone();
    if next.task(&task.id).is_none() {
        next.insert_waiting(task.clone());
    }
    next.relocate(&moved, source, target).expect("migration found on this state");
    next.place(&task.id, source).expect("task is waiting");

    let mut plan = Plan::new();
    plan.push_move(moved, state.server(source).id.clone(), state.server(target).id.clone());
    plan.push_allocation(task.id.clone(), state.server(source).id.clone());
    Ok((plan, next))
}

/// Outcome of placing every waiting task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllocationOutcome {
    pub plan: Plan,
    pub state: DatacenterState,
    /// Tasks that could not be placed by any route, in processing order.
    pub unplaced: Vec<TaskId>,
}

/// Places every waiting task, largest first: best fit under `pre_max`, then a single
/// migration under `post_max`, then a direct best fit under `post_max`.
pub fn allocate_waiting(state: &DatacenterState, config: &Config) -> AllocationOutcome {
    let k = config.primary_dim;
    let waiting: Vec<Task> = state.waiting_tasks().cloned().collect();
    let mut current = state.clone();
    let mut plan = Plan::new();
    let mut unplaced = Vec::new();

    for task in sort_tasks_desc(&waiting, k) {
        if let Ok(d) = best_fit_allocate(task, &current, config) {
            current.place(&task.id, d.server_index).expect("task is waiting");
            plan.push_allocation(task.id.clone(), d.server);
            continue;
        }
        if let Ok((delta, next)) = drma_allocate_with_migration(task, &current, config) {
            current = next;
            plan.extend(delta);
            continue;
        }
        match best_fit_in(&current, &task.demand, config.post_max, k, |_| true) {
            Some((idx, _)) => {
                current.place(&task.id, idx).expect("task is waiting");
                plan.push_allocation(task.id.clone(), current.server(idx).id.clone());
            }
            None => unplaced.push(task.id.clone()),
        }
    }
    AllocationOutcome {
        plan,
        state: current,
        unplaced,
    }
}

/// Non-empty server with the smallest primary-dimension load, skipping `skip`.
pub fn select_release_candidate(state: &DatacenterState, config: &Config, skip: &BTreeSet<usize>) -> Option<usize> {
    let k = config.primary_dim;
    (0..state.servers().len())
        .filter(|i| !skip.contains(i) && !state.server(*i).is_empty())
        .min_by_key(|&i| (state.load(i)[k], i))
}

/// Migration cost and release benefit of a plan planned against `before`.
///
/// Cost counts the primary-dimension demand of every moved task.
pub fn cost_benefit(plan: &Plan, before: &DatacenterState, released: usize, config: &Config) -> CostBenefit {
    let k = config.primary_dim;
    let points: Points = plan.moves().filter_map(|m| before.task(&m.task)).map(|t| t.demand[k]).sum();
    CostBenefit {
        cost: points as f64 * config.cost_per_point_moved,
        benefit: released as f64 * config.benefit_per_server_released,
    }
}

/// Commits when the migration cost does not exceed the release benefit.
pub fn cost_benefit_gate(plan: &Plan, before: &DatacenterState, released: usize, config: &Config) -> GateDecision {
    let cb = cost_benefit(plan, before, released, config);
    if cb.cost <= cb.benefit {
        GateDecision::Commit(cb)
    } else {
        GateDecision::Reject(cb)
    }
}

/// Attempts to empty the candidate onto the other non-empty servers.
fn evacuate(state: &DatacenterState, candidate: usize, config: &Config) -> Result<(Plan, DatacenterState), TaskId> {
    let k = config.primary_dim;
    let active: Vec<bool> = (0..state.servers().len())
        .map(|i| i != candidate && !state.server(i).is_empty())
        .collect();
    let tasks: Vec<Task> = state.tasks_on(candidate).cloned().collect();

    let mut trial = state.clone();
    let mut plan = Plan::new();
    for t in sort_tasks_desc(&tasks, k) {
        let (dest, _) = best_fit_in(&trial, &t.demand, config.post_max, k, |i| active[i]).ok_or_else(|| t.id.clone())?;
        trial.relocate(&t.id, candidate, dest).expect("task sits on the candidate");
        plan.push_move(t.id.clone(), state.server(candidate).id.clone(), state.server(dest).id.clone());
    }
    Ok((plan, trial))
}

/// Empties servers whose tasks can all be absorbed elsewhere, lightest first.
///
/// Each candidate is all-or-nothing: its tasks are best-fit placed onto the remaining
/// non-empty servers under `post_max`; if any task has nowhere to go, or the moves cost
/// more than the release is worth, the candidate is left untouched and not retried.
/// Servers that received tasks are not release candidates for the rest of the run.
pub fn consolidate(state: &DatacenterState, config: &Config) -> ConsolidationReport {
    let mut current = state.clone();
    let mut plan = Plan::new();
    let mut skip = BTreeSet::new();
    let mut released = Vec::new();
    let mut rejected = Vec::new();

    while let Some(candidate) = select_release_candidate(&current, config, &skip) {
        let server = current.server(candidate).id.clone();
        match evacuate(&current, candidate, config) {
            Err(task) => {
                skip.insert(candidate);
                rejected.push(RejectedCandidate {
                    server,
                    reason: RejectReason::NoRoom { task },
                });
            }
            Ok((moves, next)) => match cost_benefit_gate(&moves, &current, 1, config) {
                GateDecision::Commit(_) => {
                    // receivers stay put for the rest of the pass so no task moves twice
                    for m in moves.moves() {
                        skip.extend(next.server_index(&m.to));
                    }
                    current = next;
                    plan.extend(moves);
                    released.push(server);
                }
                GateDecision::Reject(cb) => {
                    skip.insert(candidate);
                    rejected.push(RejectedCandidate {
                        server,
                        reason: RejectReason::CostExceedsBenefit(cb),
                    });
                }
            },
        }
    }

    let metrics = compute_metrics(state, &current, &plan).expect("plan was built by replaying these moves");
    let cost_benefit = cost_benefit(&plan, state, released.len(), config);
    ConsolidationReport {
        before: state.clone(),
        after: current,
        plan,
        metrics,
        cost_benefit,
        released,
        rejected,
    }
}
