//! Scenario files.
//!
//! A scenario is a TOML document:
//!
//! ```toml
//! name = "table1"          # optional, defaults to the file stem
//! dims = 2                 # dimension count; 0 = CPU, 1 = memory
//!
//! [config]                 # optional overrides of the engine defaults
//! pre_max = 70
//! post_max = 100
//!
//! [workload]               # optional generator parameters for --batch
//! n_servers = 4
//!
//! [[servers]]
//! id = "S1"
//! capacity = [100, 100]    # optional, 100 per dimension by default
//!
//! [[tasks]]
//! id = "s1t1"
//! demand = [10, 0]
//! server = "S1"            # omit for a waiting task
//! ```
//!
//! Tasks are placed on their server in file order. Unknown keys are rejected.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use consolidation_core::model::DEFAULT_CAPACITY;
use consolidation_core::{
    validate_state, Config, DatacenterState, Placement, Points, ResourceVector, Server, TargetOrder, Task, TieBreak, WorkloadSpec,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

const TABLE1: &str = include_str!("../fixtures/table1.toml");
const TABLE2: &str = include_str!("../fixtures/table2.toml");

/// Names of the scenarios compiled into the binary.
pub const BUNDLED: [&str; 2] = ["table1", "table2"];

pub fn bundled(name: &str) -> Option<&'static str> {
    match name {
        "table1" => Some(TABLE1),
        "table2" => Some(TABLE2),
        _ => None,
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{origin}: malformed scenario: {message}")]
    Parse { origin: String, message: String },
    #[error("{origin}: {location}: {message}")]
    Schema { origin: String, location: String, message: String },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub primary_dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pre_max: Option<Points>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub post_max: Option<Points>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cost_per_point_moved: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub benefit_per_server_released: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tie_break: Option<TieBreak>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_order: Option<TargetOrder>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ConfigOverrides {
    pub fn apply(&self, base: Config) -> Config {
        Config {
            primary_dim: self.primary_dim.unwrap_or(base.primary_dim),
            pre_max: self.pre_max.unwrap_or(base.pre_max),
            post_max: self.post_max.unwrap_or(base.post_max),
            cost_per_point_moved: self.cost_per_point_moved.unwrap_or(base.cost_per_point_moved),
            benefit_per_server_released: self.benefit_per_server_released.unwrap_or(base.benefit_per_server_released),
            tie_break: self.tie_break.unwrap_or(base.tie_break),
            target_order: self.target_order.unwrap_or(base.target_order),
            seed: self.seed.unwrap_or(base.seed),
        }
    }

    fn full(c: &Config) -> Self {
        Self {
            primary_dim: Some(c.primary_dim),
            pre_max: Some(c.pre_max),
            post_max: Some(c.post_max),
            cost_per_point_moved: Some(c.cost_per_point_moved),
            benefit_per_server_released: Some(c.benefit_per_server_released),
            tie_break: Some(c.tie_break),
            target_order: Some(c.target_order),
            seed: Some(c.seed),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ServerEntry {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    capacity: Option<Vec<Points>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskEntry {
    id: String,
    demand: Vec<Points>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    server: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    dims: usize,
    #[serde(default)]
    config: ConfigOverrides,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    workload: Option<WorkloadSpec>,
    #[serde(default)]
    servers: Vec<ServerEntry>,
    #[serde(default)]
    tasks: Vec<TaskEntry>,
}

/// A loaded scenario: a valid state plus the configuration to run it with.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub state: DatacenterState,
    pub config: Config,
    pub workload: Option<WorkloadSpec>,
}

/// Reads a scenario from `path`, or from the bundled fixture of that name when no such
/// file exists.
pub fn load_scenario(path: &str) -> Result<Scenario, ScenarioError> {
    let p = Path::new(path);
    if !p.exists() {
        if let Some(text) = bundled(path) {
            return parse_scenario(text, path);
        }
    }
    let text = fs::read_to_string(p).map_err(|source| ScenarioError::Io {
        path: path.to_owned(),
        source,
    })?;
    let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or(path);
    parse_scenario(&text, stem)
}

/// Parses scenario text. `origin` names the source in errors and is the default name.
pub fn parse_scenario(text: &str, origin: &str) -> Result<Scenario, ScenarioError> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| ScenarioError::Parse {
        origin: origin.to_owned(),
        message: e.to_string(),
    })?;
    let schema = |location: String, message: String| ScenarioError::Schema {
        origin: origin.to_owned(),
        location,
        message,
    };

    let dims = file.dims;
    if dims == 0 {
        return Err(schema("dims".into(), "at least one dimension is required".into()));
    }
    let config = file.config.apply(Config::default());
    config.validate_for(dims).map_err(|e| schema("config".into(), e.to_string()))?;
    if let Some(w) = &file.workload {
        w.validate(config.pre_max).map_err(|e| schema("workload".into(), e.to_string()))?;
    }

    let mut servers = Vec::with_capacity(file.servers.len());
    let mut server_ids = BTreeSet::new();
    for (i, s) in file.servers.iter().enumerate() {
        if !server_ids.insert(s.id.as_str()) {
            return Err(schema(format!("servers[{i}].id"), format!("duplicate server id {}", s.id)));
        }
        let capacity = match &s.capacity {
            Some(c) if c.len() != dims => {
                return Err(schema(
                    format!("servers[{i}].capacity"),
                    format!("expected {dims} values, found {}", c.len()),
                ))
            }
            Some(c) => ResourceVector::new(c.clone()),
            None => ResourceVector::splat(dims, DEFAULT_CAPACITY),
        };
        servers.push(Server::new(s.id.as_str(), capacity));
    }

    let mut tasks = Vec::with_capacity(file.tasks.len());
    let mut task_ids = BTreeSet::new();
    for (i, t) in file.tasks.iter().enumerate() {
        if !task_ids.insert(t.id.as_str()) {
            return Err(schema(format!("tasks[{i}].id"), format!("duplicate task id {}", t.id)));
        }
        if t.demand.len() != dims {
            return Err(schema(
                format!("tasks[{i}].demand"),
                format!("expected {dims} values, found {}", t.demand.len()),
            ));
        }
        let placement = match &t.server {
            Some(sid) => {
                let server = servers
                    .iter_mut()
                    .find(|s| s.id.as_str() == sid)
                    .ok_or_else(|| schema(format!("tasks[{i}].server"), format!("unknown server {sid}")))?;
                server.placed.push(t.id.as_str().into());
                Placement::On(server.id.clone())
            }
            None => Placement::Waiting,
        };
        tasks.push(Task {
            id: t.id.as_str().into(),
            demand: ResourceVector::new(t.demand.clone()),
            placement,
        });
    }

    let state = DatacenterState::from_parts(dims, servers, tasks);
    if let Some(v) = validate_state(&state).first() {
        return Err(schema("state".into(), v.to_string()));
    }

    Ok(Scenario {
        name: file.name.unwrap_or_else(|| origin.to_owned()),
        state,
        config,
        workload: file.workload,
    })
}

/// Serializes a scenario so that [`parse_scenario`] returns an equal value.
pub fn scenario_to_toml(scenario: &Scenario) -> String {
    let state = &scenario.state;
    let servers = state
        .servers()
        .iter()
        .map(|s| ServerEntry {
            id: s.id.to_string(),
            capacity: Some(s.capacity.as_slice().to_vec()),
        })
        .collect();
    let entry = |t: &Task| TaskEntry {
        id: t.id.to_string(),
        demand: t.demand.as_slice().to_vec(),
        server: t.placement.server().map(ToString::to_string),
    };
    let mut tasks: Vec<TaskEntry> = (0..state.servers().len()).flat_map(|i| state.tasks_on(i).map(entry)).collect();
    tasks.extend(state.waiting_tasks().map(entry));

    let file = ScenarioFile {
        name: Some(scenario.name.clone()),
        dims: state.dims(),
        config: ConfigOverrides::full(&scenario.config),
        workload: scenario.workload.clone(),
        servers,
        tasks,
    };
    toml::to_string(&file).expect("scenario types serialize to TOML")
}

pub fn save_scenario(scenario: &Scenario, path: &Path) -> Result<(), ScenarioError> {
    fs::write(path, scenario_to_toml(scenario)).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })
}
