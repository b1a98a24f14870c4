//! Domain types for servers, tasks and plans, plus state validation and plan replay.
//!
//! All quantities are integer utilization points. A server's capacity defaults to
//! 100 points per dimension so that percent figures can be used verbatim.
//! States are values: every operation that changes placement returns a new state.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Index;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Config;

/// Integer utilization points.
pub type Points = u64;

/// Default per-dimension server capacity.
pub const DEFAULT_CAPACITY: Points = 100;

/// Dimension index of CPU.
pub const CPU: usize = 0;
/// Dimension index of memory.
pub const MEMORY: usize = 1;

/// Largest load a dimension of the given capacity may carry under a percent threshold.
///
/// `used <= limit(c, t)` is equivalent to `100 * used <= c * t`, so flooring loses nothing.
pub fn threshold_limit(capacity: Points, threshold: Points) -> Points {
    capacity * threshold / 100
}

/// Per-dimension quantities (dimension 0 = CPU, dimension 1 = memory).
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ResourceVector(Vec<Points>);

impl ResourceVector {
    pub fn new(values: Vec<Points>) -> Self {
        Self(values)
    }

    pub fn zeros(dims: usize) -> Self {
        Self(vec![0; dims])
    }

    pub fn splat(dims: usize, value: Points) -> Self {
        Self(vec![value; dims])
    }

    pub fn dims(&self) -> usize {
        self.0.len()
    }

    pub fn get(&self, dim: usize) -> Option<Points> {
        self.0.get(dim).copied()
    }

    pub fn as_slice(&self) -> &[Points] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = Points> + '_ {
        self.0.iter().copied()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0)
    }

    /// Component-wise sum. Both vectors must have the same length.
    pub fn add(&self, other: &ResourceVector) -> ResourceVector {
        debug_assert_eq!(self.dims(), other.dims());
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    fn add_assign(&mut self, other: &ResourceVector) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }
}

impl Index<usize> for ResourceVector {
    type Output = Points;

    fn index(&self, dim: usize) -> &Points {
        &self.0[dim]
    }
}

impl From<Vec<Points>> for ResourceVector {
    fn from(values: Vec<Points>) -> Self {
        Self(values)
    }
}

impl<const N: usize> From<[Points; N]> for ResourceVector {
    fn from(values: [Points; N]) -> Self {
        Self(values.to_vec())
    }
}

impl fmt::Display for ResourceVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

macro_rules! string_id {
    ($name:ident) => {
        #[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(id: &str) -> Self {
                Self(id.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(id: String) -> Self {
                Self(id)
            }
        }
    };
}

string_id!(TaskId);
string_id!(ServerId);

/// Where a task currently lives.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    Waiting,
    On(ServerId),
}

impl Placement {
    pub fn server(&self) -> Option<&ServerId> {
        match self {
            Placement::Waiting => None,
            Placement::On(id) => Some(id),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub id: TaskId,
    pub demand: ResourceVector,
    pub placement: Placement,
}

impl Task {
    pub fn waiting(id: impl Into<TaskId>, demand: impl Into<ResourceVector>) -> Self {
        Self {
            id: id.into(),
            demand: demand.into(),
            placement: Placement::Waiting,
        }
    }

    pub fn is_waiting(&self) -> bool {
        self.placement == Placement::Waiting
    }
}

/// A server and the tasks placed on it, in placement order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Server {
    pub id: ServerId,
    pub capacity: ResourceVector,
    pub placed: Vec<TaskId>,
}

impl Server {
    pub fn new(id: impl Into<ServerId>, capacity: impl Into<ResourceVector>) -> Self {
        Self {
            id: id.into(),
            capacity: capacity.into(),
            placed: Vec::new(),
        }
    }

    /// An empty server counts as released.
    pub fn is_empty(&self) -> bool {
        self.placed.is_empty()
    }
}

/// One broken invariant found by [`validate_state`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    DimensionMismatch {
        entity: String,
        expected: usize,
        found: usize,
    },
    DuplicateServer {
        server: ServerId,
    },
    UnknownTask {
        server: ServerId,
        task: TaskId,
    },
    UnknownServer {
        task: TaskId,
        server: ServerId,
    },
    DuplicatePlacement {
        task: TaskId,
        servers: Vec<ServerId>,
    },
    PlacementMismatch {
        task: TaskId,
        recorded: Placement,
        actual: Placement,
    },
    CapacityViolation {
        server: ServerId,
        dim: usize,
        used: Points,
        capacity: Points,
    },
    DemandExceedsCapacity {
        task: TaskId,
        dim: usize,
        demand: Points,
        max_capacity: Points,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DimensionMismatch { entity, expected, found } => {
                write!(f, "{entity} has {found} dimensions, expected {expected}")
            }
            Violation::DuplicateServer { server } => write!(f, "server id {server} declared twice"),
            Violation::UnknownTask { server, task } => {
                write!(f, "server {server} lists unknown task {task}")
            }
            Violation::UnknownServer { task, server } => {
                write!(f, "task {task} is placed on unknown server {server}")
            }
            Violation::DuplicatePlacement { task, servers } => {
                let names: Vec<_> = servers.iter().map(ServerId::as_str).collect();
                write!(f, "task {task} placed more than once: {}", names.join(", "))
            }
            Violation::PlacementMismatch { task, recorded, actual } => {
                write!(f, "task {task} records {recorded:?} but is listed under {actual:?}")
            }
            Violation::CapacityViolation {
                server,
                dim,
                used,
                capacity,
            } => {
                write!(f, "server {server} dimension {dim}: {used} placed on capacity {capacity}")
            }
            Violation::DemandExceedsCapacity {
                task,
                dim,
                demand,
                max_capacity,
            } => write!(
                f,
                "task {task} dimension {dim}: demand {demand} exceeds largest capacity {max_capacity}"
            ),
        }
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("unknown server {0}")]
    UnknownServer(ServerId),
    #[error("unknown task {0}")]
    UnknownTask(TaskId),
    #[error("server {server}: placed demand exceeds capacity in dimension {dim}")]
    CapacityViolation { server: ServerId, dim: usize },
    #[error("invalid move of {task}: {reason}")]
    InvalidMove { task: TaskId, reason: String },
    #[error("invalid allocation of {task}: {reason}")]
    InvalidAllocation { task: TaskId, reason: String },
    #[error("step {step}: server {server} dimension {dim} would carry {load}, above limit {limit}")]
    IntermediateCapacityViolation {
        step: usize,
        server: ServerId,
        dim: usize,
        load: Points,
        limit: Points,
    },
}

/// A task moved between two servers.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MigrationMove {
    pub task: TaskId,
    pub from: ServerId,
    pub to: ServerId,
}

/// A previously waiting task placed onto a server.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Allocation {
    pub task: TaskId,
    pub server: ServerId,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum PlanStep {
    Move(MigrationMove),
    Allocate(Allocation),
}

/// Ordered moves and allocations, replayable against the state they were planned on.
///
/// Steps keep their planning order: an allocation may make room assumptions that a
/// later move depends on, so moves and allocations are not regrouped.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub steps: Vec<PlanStep>,
}

impl Plan {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn push_move(&mut self, task: TaskId, from: ServerId, to: ServerId) {
        self.steps.push(PlanStep::Move(MigrationMove { task, from, to }));
    }

    pub fn push_allocation(&mut self, task: TaskId, server: ServerId) {
        self.steps.push(PlanStep::Allocate(Allocation { task, server }));
    }

    pub fn extend(&mut self, other: Plan) {
        self.steps.extend(other.steps);
    }

    pub fn moves(&self) -> impl Iterator<Item = &MigrationMove> {
        self.steps.iter().filter_map(|s| match s {
            PlanStep::Move(m) => Some(m),
            PlanStep::Allocate(_) => None,
        })
    }

    pub fn allocations(&self) -> impl Iterator<Item = &Allocation> {
        self.steps.iter().filter_map(|s| match s {
            PlanStep::Allocate(a) => Some(a),
            PlanStep::Move(_) => None,
        })
    }

    pub fn move_count(&self) -> usize {
        self.moves().count()
    }
}

/// Servers in declared order plus every known task.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatacenterState {
    dims: usize,
    servers: Vec<Server>,
    tasks: BTreeMap<TaskId, Task>,
}

impl DatacenterState {
    pub fn new(dims: usize) -> Self {
        Self {
            dims,
            servers: Vec::new(),
            tasks: BTreeMap::new(),
        }
    }

    /// Assembles a state without checking it. Use [`validate_state`] afterwards.
    pub fn from_parts(dims: usize, servers: Vec<Server>, tasks: impl IntoIterator<Item = Task>) -> Self {
        Self {
            dims,
            servers,
            tasks: tasks.into_iter().map(|t| (t.id.clone(), t)).collect(),
        }
    }

    /// Adds an empty server. Callers validate afterwards.
    pub fn with_server(mut self, id: impl Into<ServerId>, capacity: impl Into<ResourceVector>) -> Self {
        self.servers.push(Server::new(id, capacity));
        self
    }

    /// Adds a task, appending it to its server's placement list when placed.
    pub fn with_task(mut self, id: impl Into<TaskId>, demand: impl Into<ResourceVector>, server: Option<&str>) -> Self {
        let id = id.into();
        let placement = match server {
            Some(s) => {
                let sid = ServerId::from(s);
                if let Some(srv) = self.servers.iter_mut().find(|x| x.id == sid) {
                    srv.placed.push(id.clone());
                }
                Placement::On(sid)
            }
            None => Placement::Waiting,
        };
        self.tasks.insert(
            id.clone(),
            Task {
                id,
                demand: demand.into(),
                placement,
            },
        );
        self
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn servers(&self) -> &[Server] {
        &self.servers
    }

    pub fn server(&self, idx: usize) -> &Server {
        &self.servers[idx]
    }

    pub fn server_index(&self, id: &ServerId) -> Option<usize> {
        self.servers.iter().position(|s| &s.id == id)
    }

    pub fn tasks(&self) -> impl Iterator<Item = &Task> {
        self.tasks.values()
    }

    pub fn task(&self, id: &TaskId) -> Option<&Task> {
        self.tasks.get(id)
    }

    pub fn task_count(&self) -> usize {
        self.tasks.len()
    }

    pub fn waiting_tasks(&self) -> impl Iterator<Item = &Task> {
        self.tasks.values().filter(|t| t.is_waiting())
    }

    /// Tasks on the server at `idx`, in placement order.
    pub fn tasks_on(&self, idx: usize) -> impl Iterator<Item = &Task> {
        self.servers[idx].placed.iter().filter_map(|id| self.tasks.get(id))
    }

    /// Sum of placed demands on the server at `idx`.
    pub fn load(&self, idx: usize) -> ResourceVector {
        let mut total = ResourceVector::zeros(self.dims);
        for t in self.tasks_on(idx) {
            total.add_assign(&t.demand);
        }
        total
    }

    /// Free capacity of the server at `idx`: capacity minus placed demand.
    pub fn free_capacity(&self, idx: usize) -> Result<ResourceVector, ModelError> {
        free_capacity(self, &self.servers[idx])
    }

    /// Points still placeable in `dim` before the server reaches `threshold` percent.
    pub fn headroom(&self, idx: usize, dim: usize, threshold: Points) -> Points {
        let limit = threshold_limit(self.servers[idx].capacity[dim], threshold);
        limit.saturating_sub(self.load(idx)[dim])
    }

    /// Whether `demand` fits on the server at `idx` in every dimension under `threshold`.
    pub fn fits(&self, idx: usize, demand: &ResourceVector, threshold: Points) -> bool {
        let server = &self.servers[idx];
        let load = self.load(idx);
        (0..self.dims).all(|d| load[d] + demand[d] <= threshold_limit(server.capacity[d], threshold))
    }

    pub fn servers_used(&self) -> usize {
        self.servers.iter().filter(|s| !s.is_empty()).count()
    }

    /// A copy with every server emptied and every task waiting.
    pub fn emptied(&self) -> DatacenterState {
        let mut out = self.clone();
        for s in &mut out.servers {
            s.placed.clear();
        }
        for t in out.tasks.values_mut() {
            t.placement = Placement::Waiting;
        }
        out
    }

    /// Inserts a waiting task. Used by packers that receive tasks from outside the state.
    pub(crate) fn insert_waiting(&mut self, task: Task) {
        let mut task = task;
        task.placement = Placement::Waiting;
        self.tasks.insert(task.id.clone(), task);
    }

    pub(crate) fn place(&mut self, task: &TaskId, idx: usize) -> Result<(), ModelError> {
        let entry = self.tasks.get_mut(task).ok_or_else(|| ModelError::UnknownTask(task.clone()))?;
        if !entry.is_waiting() {
            return Err(ModelError::InvalidAllocation {
                task: task.clone(),
                reason: "task is not waiting".into(),
            });
        }
        entry.placement = Placement::On(self.servers[idx].id.clone());
        self.servers[idx].placed.push(task.clone());
        Ok(())
    }

    pub(crate) fn relocate(&mut self, task: &TaskId, from: usize, to: usize) -> Result<(), ModelError> {
        if from == to {
            return Err(ModelError::InvalidMove {
                task: task.clone(),
                reason: "source and destination are the same server".into(),
            });
        }
        let pos = self.servers[from]
            .placed
            .iter()
            .position(|t| t == task)
            .ok_or_else(|| ModelError::InvalidMove {
                task: task.clone(),
                reason: format!("task is not on {}", self.servers[from].id),
            })?;
        self.servers[from].placed.remove(pos);
        self.servers[to].placed.push(task.clone());
        let to_id = self.servers[to].id.clone();
        if let Some(t) = self.tasks.get_mut(task) {
            t.placement = Placement::On(to_id);
        }
        Ok(())
    }

    fn resolve(&self, id: &ServerId) -> Result<usize, ModelError> {
        self.server_index(id).ok_or_else(|| ModelError::UnknownServer(id.clone()))
    }

    /// Applies one step, returning the index of the server that gained load.
    fn apply_step(&mut self, step: &PlanStep) -> Result<usize, ModelError> {
        match step {
            PlanStep::Move(m) => {
                let from = self.resolve(&m.from)?;
                let to = self.resolve(&m.to)?;
                if !self.tasks.contains_key(&m.task) {
                    return Err(ModelError::UnknownTask(m.task.clone()));
                }
                self.relocate(&m.task, from, to)?;
                Ok(to)
            }
            PlanStep::Allocate(a) => {
                let idx = self.resolve(&a.server)?;
                self.place(&a.task, idx)?;
                Ok(idx)
            }
        }
    }
}

/// Capacity minus the sum of placed demands, per dimension.
pub fn free_capacity(state: &DatacenterState, server: &Server) -> Result<ResourceVector, ModelError> {
    let mut used = ResourceVector::zeros(state.dims);
    for t in server.placed.iter().filter_map(|id| state.tasks.get(id)) {
        used.add_assign(&t.demand);
    }
    let mut free = Vec::with_capacity(state.dims);
    for d in 0..state.dims {
        let cap = server.capacity.get(d).unwrap_or(0);
        match cap.checked_sub(used[d]) {
            Some(v) => free.push(v),
            None => {
                return Err(ModelError::CapacityViolation {
                    server: server.id.clone(),
                    dim: d,
                })
            }
        }
    }
    Ok(ResourceVector(free))
}

/// Replays `plan` over `state`, checking after every step that the receiving server
/// stays within `config.post_max`. The input state is left untouched.
pub fn apply_plan(state: &DatacenterState, plan: &Plan, config: &Config) -> Result<DatacenterState, ModelError> {
    let mut next = state.clone();
    for (step_no, step) in plan.steps.iter().enumerate() {
        let idx = next.apply_step(step)?;
        let load = next.load(idx);
        let server = &next.servers[idx];
        for d in 0..next.dims {
            let limit = threshold_limit(server.capacity[d], config.post_max);
            if load[d] > limit {
                return Err(ModelError::IntermediateCapacityViolation {
                    step: step_no,
                    server: server.id.clone(),
                    dim: d,
                    load: load[d],
                    limit,
                });
            }
        }
    }
    Ok(next)
}

/// Replays `plan` checking only structural validity (tasks on their source, known ids).
pub fn replay_unchecked(state: &DatacenterState, plan: &Plan) -> Result<DatacenterState, ModelError> {
    let mut next = state.clone();
    for step in &plan.steps {
        next.apply_step(step)?;
    }
    Ok(next)
}

/// Reports every broken invariant in a deterministic order. Empty means valid.
pub fn validate_state(state: &DatacenterState) -> Vec<Violation> {
    let mut out = Vec::new();
    let dims = state.dims;

    let mut seen_servers = BTreeMap::new();
    for s in &state.servers {
        if s.capacity.dims() != dims {
            out.push(Violation::DimensionMismatch {
                entity: format!("server {}", s.id),
                expected: dims,
                found: s.capacity.dims(),
            });
        }
        if seen_servers.insert(&s.id, ()).is_some() {
            out.push(Violation::DuplicateServer { server: s.id.clone() });
        }
    }
    for t in state.tasks.values() {
        if t.demand.dims() != dims {
            out.push(Violation::DimensionMismatch {
                entity: format!("task {}", t.id),
                expected: dims,
                found: t.demand.dims(),
            });
        }
    }
    // Anything below indexes by dimension; bail out on shape errors.
    if !out.is_empty() {
        return out;
    }

    let mut listed: BTreeMap<&TaskId, Vec<ServerId>> = BTreeMap::new();
    for s in &state.servers {
        for t in &s.placed {
            if !state.tasks.contains_key(t) {
                out.push(Violation::UnknownTask {
                    server: s.id.clone(),
                    task: t.clone(),
                });
            }
            listed.entry(t).or_default().push(s.id.clone());
        }
    }

    for t in state.tasks.values() {
        let on = listed.get(&t.id).map(Vec::as_slice).unwrap_or(&[]);
        if on.len() > 1 {
            out.push(Violation::DuplicatePlacement {
                task: t.id.clone(),
                servers: on.to_vec(),
            });
            continue;
        }
        if let Placement::On(sid) = &t.placement {
            if state.server_index(sid).is_none() {
                out.push(Violation::UnknownServer {
                    task: t.id.clone(),
                    server: sid.clone(),
                });
                continue;
            }
        }
        let actual = match on.first() {
            Some(sid) => Placement::On(sid.clone()),
            None => Placement::Waiting,
        };
        if actual != t.placement {
            out.push(Violation::PlacementMismatch {
                task: t.id.clone(),
                recorded: t.placement.clone(),
                actual,
            });
        }
    }

    for (idx, s) in state.servers.iter().enumerate() {
        let used = state.load(idx);
        for d in 0..dims {
            if used[d] > s.capacity[d] {
                out.push(Violation::CapacityViolation {
                    server: s.id.clone(),
                    dim: d,
                    used: used[d],
                    capacity: s.capacity[d],
                });
            }
        }
    }

    if !state.servers.is_empty() {
        for t in state.tasks.values() {
            for d in 0..dims {
                let max_cap = state.servers.iter().map(|s| s.capacity[d]).max().unwrap_or(0);
                if t.demand[d] > max_cap {
                    out.push(Violation::DemandExceedsCapacity {
                        task: t.id.clone(),
                        dim: d,
                        demand: t.demand[d],
                        max_capacity: max_cap,
                    });
                }
            }
        }
    }

    out
}
