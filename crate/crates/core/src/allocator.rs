//! First-fit and best-fit placement of waiting tasks.
//!
//! Selection looks only at the primary dimension: best fit prefers a server whose
//! remaining headroom equals the demand exactly, and otherwise the server leaving the
//! least slack. Feasibility always covers every dimension. Ties go to the lowest
//! server index.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Config;
use crate::model::{DatacenterState, Points, ResourceVector, ServerId, Task, TaskId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitKind {
    Exact,
    Closest,
    First,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementDecision {
    pub task: TaskId,
    pub server: ServerId,
    pub server_index: usize,
    pub fit_kind: FitKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    FirstFit,
    BestFit,
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum AllocError {
    /// No server can take the task; the caller may fall back to migration.
    #[error("no server can accommodate task {0}")]
    NoFit(TaskId),
    #[error("task {0} is already placed")]
    NotWaiting(TaskId),
}

/// Orders tasks by demand in `dim`, largest first.
///
/// Equal demands are ordered by the next dimension (largest first) when there is one,
/// then by task id.
pub fn sort_tasks_desc<'a, I>(tasks: I, dim: usize) -> Vec<&'a Task>
where
    I: IntoIterator<Item = &'a Task>,
{
    let mut out: Vec<&Task> = tasks.into_iter().collect();
    out.sort_by(|a, b| compare_desc(a, b, dim));
    out
}

fn compare_desc(a: &Task, b: &Task, dim: usize) -> Ordering {
    let next = |t: &Task| t.demand.get(dim + 1).unwrap_or(0);
    b.demand[dim]
        .cmp(&a.demand[dim])
        .then_with(|| next(b).cmp(&next(a)))
        .then_with(|| a.id.cmp(&b.id))
}

/// Lowest-index eligible server whose headroom in `dim` equals the demand exactly and
/// which fits the demand in every dimension.
pub(crate) fn exact_fit_in<F>(state: &DatacenterState, demand: &ResourceVector, threshold: Points, dim: usize, eligible: F) -> Option<usize>
where
    F: Fn(usize) -> bool,
{
    (0..state.servers().len())
        .find(|&i| eligible(i) && state.headroom(i, dim, threshold) == demand[dim] && state.fits(i, demand, threshold))
}

/// Eligible fitting server minimizing slack in `dim`; ties to the lowest index.
pub(crate) fn closest_fit_in<F>(
    state: &DatacenterState,
    demand: &ResourceVector,
    threshold: Points,
    dim: usize,
    eligible: F,
) -> Option<usize>
where
    F: Fn(usize) -> bool,
{
    let mut best: Option<(Points, usize)> = None;
    for i in 0..state.servers().len() {
        if !eligible(i) || !state.fits(i, demand, threshold) {
            continue;
        }
        let slack = state.headroom(i, dim, threshold) - demand[dim];
        if best.is_none_or(|(s, _)| slack < s) {
            best = Some((slack, i));
        }
    }
    best.map(|(_, i)| i)
}

pub(crate) fn first_fit_in<F>(state: &DatacenterState, demand: &ResourceVector, threshold: Points, eligible: F) -> Option<usize>
where
    F: Fn(usize) -> bool,
{
    (0..state.servers().len()).find(|&i| eligible(i) && state.fits(i, demand, threshold))
}

/// Best fit restricted to eligible servers: exact match first, then closest.
pub(crate) fn best_fit_in<F>(
    state: &DatacenterState,
    demand: &ResourceVector,
    threshold: Points,
    dim: usize,
    eligible: F,
) -> Option<(usize, FitKind)>
where
    F: Fn(usize) -> bool,
{
    if let Some(i) = exact_fit_in(state, demand, threshold, dim, &eligible) {
        return Some((i, FitKind::Exact));
    }
    closest_fit_in(state, demand, threshold, dim, &eligible).map(|i| (i, FitKind::Closest))
}

/// Server index whose headroom under `threshold` in `dim` equals the task's demand.
///
/// The task's current placement is ignored; callers pass waiting tasks.
pub fn find_exact_fit(task: &Task, state: &DatacenterState, threshold: Points, dim: usize) -> Option<usize> {
    exact_fit_in(state, &task.demand, threshold, dim, |_| true)
}

/// Server index that fits the task and leaves the least slack in `dim`.
pub fn find_closest_fit(task: &Task, state: &DatacenterState, threshold: Points, dim: usize) -> Option<usize> {
    closest_fit_in(state, &task.demand, threshold, dim, |_| true)
}

fn decision(task: &Task, state: &DatacenterState, idx: usize, fit_kind: FitKind) -> PlacementDecision {
    PlacementDecision {
        task: task.id.clone(),
        server: state.server(idx).id.clone(),
        server_index: idx,
        fit_kind,
    }
}

/// Best-fit decision under `config.pre_max`. The state is not modified.
pub fn best_fit_allocate(task: &Task, state: &DatacenterState, config: &Config) -> Result<PlacementDecision, AllocError> {
    best_fit_at(task, state, config.pre_max, config.primary_dim)
}

/// Best-fit decision under an explicit threshold.
pub fn best_fit_at(task: &Task, state: &DatacenterState, threshold: Points, dim: usize) -> Result<PlacementDecision, AllocError> {
    best_fit_in(state, &task.demand, threshold, dim, |_| true)
        .map(|(idx, kind)| decision(task, state, idx, kind))
        .ok_or_else(|| AllocError::NoFit(task.id.clone()))
}

/// First-fit decision under `config.pre_max`: the lowest-index server that fits.
pub fn first_fit_allocate(task: &Task, state: &DatacenterState, config: &Config) -> Result<PlacementDecision, AllocError> {
    first_fit_in(state, &task.demand, config.pre_max, |_| true)
        .map(|idx| decision(task, state, idx, FitKind::First))
        .ok_or_else(|| AllocError::NoFit(task.id.clone()))
}

/// Places `tasks` in descending demand order with the chosen heuristic under
/// `config.pre_max`. Tasks missing from the state are added as waiting first.
///
/// Returns the packed state and the ids that could not be placed, in processing order.
pub fn pack_all(
    tasks: &[Task],
    state: &DatacenterState,
    algo: Algorithm,
    config: &Config,
) -> Result<(DatacenterState, Vec<TaskId>), AllocError> {
    let mut next = state.clone();
    for t in tasks {
        match next.task(&t.id) {
            Some(existing) if !existing.is_waiting() => return Err(AllocError::NotWaiting(t.id.clone())),
            Some(_) => {}
            None => next.insert_waiting(t.clone()),
        }
    }

    let mut unplaced = Vec::new();
    for t in sort_tasks_desc(tasks, config.primary_dim) {
        let choice = match algo {
            Algorithm::BestFit => best_fit_allocate(t, &next, config),
            Algorithm::FirstFit => first_fit_allocate(t, &next, config),
        };
        match choice {
            Ok(d) => next
                .place(&t.id, d.server_index)
                .expect("decision targets a known server and a waiting task"),
            Err(AllocError::NoFit(id)) => unplaced.push(id),
            Err(e) => return Err(e),
        }
    }
    Ok((next, unplaced))
}
