//! Running algorithms over a state and comparing them.
//!
//! `drma` consolidates in place: waiting tasks are allocated first, then servers are
//! released by migration. `first-fit` and `best-fit` are repack baselines: every task is
//! placed from scratch onto empty servers, and the difference to the input is expressed
//! as moves so the same metrics apply.

use std::time::{Duration, Instant};

use clap::ValueEnum;
use consolidation_core::planner::cost_benefit;
use consolidation_core::workload::generate_scenario_stream;
use consolidation_core::{
    allocate_waiting, compute_metrics, consolidate, pack_all, replay_unchecked, utilization_report, Algorithm, Config,
    ConsolidationMetrics, CostBenefit, DatacenterState, Placement, Plan, Task, TaskId, UtilizationRow, WorkloadSpec,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum AlgorithmName {
    FirstFit,
    BestFit,
    Drma,
}

impl AlgorithmName {
    pub fn as_str(self) -> &'static str {
        match self {
            AlgorithmName::FirstFit => "first-fit",
            AlgorithmName::BestFit => "best-fit",
            AlgorithmName::Drma => "drma",
        }
    }

    pub fn mode(self) -> RunMode {
        match self {
            AlgorithmName::Drma => RunMode::Consolidate,
            _ => RunMode::Repack,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    /// Every task re-placed onto empty servers.
    Repack,
    /// Migration-aware consolidation of the existing placement.
    Consolidate,
}

impl RunMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RunMode::Repack => "repack",
            RunMode::Consolidate => "consolidate",
        }
    }
}

/// Outcome of one algorithm on one scenario. Tables and metrics are derived from the
/// states and plan in [`RunReport::new`], never supplied by the caller.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub algorithm: AlgorithmName,
    pub mode: RunMode,
    /// Dimension shown in tables and plot series.
    pub primary_dim: usize,
    pub before_table: Vec<UtilizationRow>,
    pub after_table: Vec<UtilizationRow>,
    pub plan: Plan,
    pub metrics: ConsolidationMetrics,
    pub cost_benefit: CostBenefit,
    /// Tasks no route could place.
    pub unplaced: Vec<TaskId>,
    pub before: DatacenterState,
    pub after: DatacenterState,
    /// Kept out of every emitted format so output stays byte-stable.
    #[serde(skip)]
    pub duration: Duration,
}

impl RunReport {
    /// Panics if `after` is not the replay of `plan` over `before`.
    pub fn new(
        scenario: &str,
        algorithm: AlgorithmName,
        config: &Config,
        before: DatacenterState,
        after: DatacenterState,
        plan: Plan,
        unplaced: Vec<TaskId>,
    ) -> Self {
        let metrics = compute_metrics(&before, &after, &plan).expect("after-state is the replay of the plan");
        let cost_benefit = cost_benefit(&plan, &before, metrics.servers_released, config);
        Self {
            scenario: scenario.to_owned(),
            algorithm,
            mode: algorithm.mode(),
            primary_dim: config.primary_dim,
            before_table: utilization_report(&before),
            after_table: utilization_report(&after),
            plan,
            metrics,
            cost_benefit,
            unplaced,
            before,
            after,
            duration: Duration::ZERO,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.unplaced.is_empty()
    }

    /// Task columns needed to show both tables.
    pub fn task_columns(&self) -> usize {
        self.before_table
            .iter()
            .chain(&self.after_table)
            .map(|r| r.task_demands.len())
            .max()
            .unwrap_or(0)
            .max(1)
    }
}

pub fn run(scenario: &str, state: &DatacenterState, config: &Config, algorithm: AlgorithmName) -> RunReport {
    let started = Instant::now();
    let mut report = match algorithm {
        AlgorithmName::Drma => run_drma(scenario, state, config),
        AlgorithmName::FirstFit => run_repack(scenario, state, config, algorithm, Algorithm::FirstFit),
        AlgorithmName::BestFit => run_repack(scenario, state, config, algorithm, Algorithm::BestFit),
    };
    report.duration = started.elapsed();
    report
}

fn run_drma(scenario: &str, state: &DatacenterState, config: &Config) -> RunReport {
    let allocated = allocate_waiting(state, config);
    let consolidated = consolidate(&allocated.state, config);
    let mut plan = allocated.plan;
    plan.extend(consolidated.plan);
    RunReport::new(
        scenario,
        AlgorithmName::Drma,
        config,
        state.clone(),
        consolidated.after,
        plan,
        allocated.unplaced,
    )
}

fn run_repack(scenario: &str, state: &DatacenterState, config: &Config, name: AlgorithmName, algo: Algorithm) -> RunReport {
    // Repacking is a from-scratch placement, so it may fill servers up to post_max.
    let cfg = Config {
        pre_max: config.post_max,
        ..config.clone()
    };
    let tasks: Vec<Task> = state.tasks().cloned().collect();
    let (packed, unplaced) = pack_all(&tasks, &state.emptied(), algo, &cfg).expect("emptied state has only waiting tasks");

    // Tasks the packer could not place keep their original position.
    let target = |t: &Task| match &packed.task(&t.id).expect("packed state holds every task").placement {
        Placement::Waiting => t.placement.clone(),
        on => on.clone(),
    };
    let plan = repack_plan(state, &tasks, &target, config);
    let after = replay_unchecked(state, &plan).expect("repack plan only references known tasks and servers");
    RunReport::new(scenario, name, config, state.clone(), after, plan, unplaced)
}

/// Orders the steps that turn `state` into the target placement. A step is taken as soon
/// as its destination has room under `post_max`; steps blocked by a cycle are appended
/// last.
fn repack_plan(state: &DatacenterState, tasks: &[Task], target: &dyn Fn(&Task) -> Placement, config: &Config) -> Plan {
    let mut pending: Vec<(&Task, Placement)> = tasks.iter().map(|t| (t, target(t))).filter(|(t, to)| *to != t.placement).collect();
    let mut plan = Plan::new();
    let mut current = state.clone();
    while !pending.is_empty() {
        let ready = pending.iter().position(|(t, to)| {
            let idx = current
                .server_index(to.server().expect("targets are servers"))
                .expect("known server");
            current.fits(idx, &t.demand, config.post_max)
        });
        let (task, to) = pending.remove(ready.unwrap_or(0));
        let to = to.server().expect("targets are servers").clone();
        let mut step = Plan::new();
        match &task.placement {
            Placement::On(from) => step.push_move(task.id.clone(), from.clone(), to),
            Placement::Waiting => step.push_allocation(task.id.clone(), to),
        }
        current = replay_unchecked(&current, &step).expect("step references known ids");
        plan.extend(step);
    }
    plan
}

/// One line of a comparison.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub algorithm: AlgorithmName,
    pub mode: RunMode,
    pub servers_used: usize,
    pub servers_released: usize,
    pub tasks_migrated: usize,
    pub cost: f64,
    pub benefit: f64,
    pub unplaced: usize,
}

impl From<&RunReport> for ComparisonRow {
    fn from(r: &RunReport) -> Self {
        Self {
            algorithm: r.algorithm,
            mode: r.mode,
            servers_used: r.metrics.servers_used,
            servers_released: r.metrics.servers_released,
            tasks_migrated: r.metrics.tasks_migrated,
            cost: r.cost_benefit.cost,
            benefit: r.cost_benefit.benefit,
            unplaced: r.unplaced.len(),
        }
    }
}

/// Runs each algorithm once, in the given order with duplicates dropped.
pub fn compare(scenario: &str, state: &DatacenterState, config: &Config, algorithms: &[AlgorithmName]) -> Vec<RunReport> {
    let mut seen = Vec::new();
    for &a in algorithms {
        if !seen.contains(&a) {
            seen.push(a);
        }
    }
    seen.into_iter().map(|a| run(scenario, state, config, a)).collect()
}

/// Means over a batch for one algorithm.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BatchRow {
    pub algorithm: AlgorithmName,
    pub mode: RunMode,
    pub scenarios: usize,
    pub mean_servers_used: f64,
    pub mean_servers_released: f64,
    pub mean_tasks_migrated: f64,
    pub mean_cost: f64,
    pub mean_benefit: f64,
    /// Runs that left at least one task unplaced.
    pub infeasible_runs: usize,
}

/// Runs every algorithm over `count` generated scenarios, each from its own stream of
/// `spec.seed`. Scenarios run in parallel; sums are taken in scenario order, so the
/// result does not depend on scheduling.
pub fn batch(name: &str, spec: &WorkloadSpec, config: &Config, algorithms: &[AlgorithmName], count: usize) -> Vec<BatchRow> {
    let mut algos = Vec::new();
    for &a in algorithms {
        if !algos.contains(&a) {
            algos.push(a);
        }
    }
    let per_scenario: Vec<Vec<ComparisonRow>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let state = generate_scenario_stream(spec, i as u64);
            let id = format!("{name}#{i:04}");
            algos.iter().map(|&a| ComparisonRow::from(&run(&id, &state, config, a))).collect()
        })
        .collect();

    let n = count.max(1) as f64;
    algos
        .iter()
        .enumerate()
        .map(|(j, &a)| {
            let rows = per_scenario.iter().map(|r| &r[j]);
            let mean = |f: &dyn Fn(&ComparisonRow) -> f64| rows.clone().map(f).sum::<f64>() / n;
            BatchRow {
                algorithm: a,
                mode: a.mode(),
                scenarios: count,
                mean_servers_used: mean(&|r| r.servers_used as f64),
                mean_servers_released: mean(&|r| r.servers_released as f64),
                mean_tasks_migrated: mean(&|r| r.tasks_migrated as f64),
                mean_cost: mean(&|r| r.cost),
                mean_benefit: mean(&|r| r.benefit),
                infeasible_runs: rows.clone().filter(|r| r.unplaced > 0).count(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::load_scenario;
    use consolidation_core::model::CPU;
    use consolidation_core::{apply_plan, validate_state};

    fn totals(rows: &[UtilizationRow]) -> Vec<u64> {
        rows.iter().map(|r| r.total[CPU]).collect()
    }

    #[test]
    fn drma_on_table1() {
        let s = load_scenario("table1").unwrap();
        let r = run(&s.name, &s.state, &s.config, AlgorithmName::Drma);
        assert_eq!(totals(&r.before_table), [70, 70, 40, 70]);
        assert_eq!(totals(&r.after_table), [100, 80, 0, 70]);
        assert_eq!(
            r.metrics,
            ConsolidationMetrics {
                servers_used: 3,
                servers_released: 1,
                tasks_migrated: 3
            }
        );
        assert_eq!(
            r.cost_benefit,
            CostBenefit {
                cost: 40.0,
                benefit: 100.0
            }
        );
        assert_eq!(r.mode, RunMode::Consolidate);
        assert!(r.is_feasible());
        assert_eq!(r.task_columns(), 5);
    }

    #[test]
    fn drma_with_tight_threshold_does_nothing() {
        let s = load_scenario("table1").unwrap();
        let cfg = Config { post_max: 70, ..s.config };
        let r = run(&s.name, &s.state, &cfg, AlgorithmName::Drma);
        assert!(r.plan.is_empty());
        assert_eq!(r.metrics.servers_released, 0);
        assert_eq!(r.after, r.before);
    }

    #[test]
    fn empty_scenario_gives_zeroed_report() {
        let st = DatacenterState::new(2);
        for a in [AlgorithmName::Drma, AlgorithmName::BestFit, AlgorithmName::FirstFit] {
            let r = run("empty", &st, &Config::default(), a);
            assert_eq!(r.metrics, ConsolidationMetrics::default());
            assert_eq!(r.cost_benefit, CostBenefit::default());
            assert!(r.plan.is_empty() && r.before_table.is_empty() && r.after_table.is_empty());
        }
    }

    #[test]
    fn repack_baselines_on_table1() {
        let s = load_scenario("table1").unwrap();
        for a in [AlgorithmName::BestFit, AlgorithmName::FirstFit] {
            let r = run(&s.name, &s.state, &s.config, a);
            assert_eq!(r.mode, RunMode::Repack);
            // 250 points pack into three servers of 100
            assert_eq!(r.metrics.servers_used, 3);
            assert_eq!(r.metrics.servers_released, 1);
            assert!(validate_state(&r.after).is_empty());
            assert_eq!(apply_plan(&r.before, &r.plan, &s.config).unwrap(), r.after);
        }
    }

    #[test]
    fn waiting_tasks_are_allocated_first() {
        let st = load_scenario("table1").unwrap().state.with_task("new", [25, 0], None);
        let r = run("x", &st, &Config::default(), AlgorithmName::Drma);
        assert!(r.is_feasible());
        assert_eq!(r.plan.allocations().count(), 1);
        assert_eq!(r.after.task_count(), 13);

        let huge = DatacenterState::new(1).with_server("S1", [100]).with_task("big", [150], None);
        for a in [AlgorithmName::Drma, AlgorithmName::BestFit] {
            let r = run("x", &huge, &Config::default(), a);
            assert_eq!(r.unplaced, vec![TaskId::from("big")]);
            assert!(!r.is_feasible());
        }
    }

    #[test]
    fn compare_keeps_order_and_drops_duplicates() {
        let s = load_scenario("table1").unwrap();
        let reports = compare(
            &s.name,
            &s.state,
            &s.config,
            &[AlgorithmName::BestFit, AlgorithmName::Drma, AlgorithmName::BestFit],
        );
        let rows: Vec<ComparisonRow> = reports.iter().map(ComparisonRow::from).collect();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].algorithm, AlgorithmName::BestFit);
        assert_eq!(rows[1].tasks_migrated, 3);
        assert_eq!(rows[1].servers_released, 1);
        assert_eq!(compare(&s.name, &s.state, &s.config, &[AlgorithmName::Drma]).len(), 1);
    }

    #[test]
    fn batch_is_deterministic() {
        let spec = WorkloadSpec {
            seed: 5,
            ..WorkloadSpec::default()
        };
        let algos = [AlgorithmName::Drma, AlgorithmName::BestFit];
        let a = batch("gen", &spec, &Config::default(), &algos, 50);
        let b = batch("gen", &spec, &Config::default(), &algos, 50);
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
        assert_eq!(a[0].scenarios, 50);
        assert!(a[0].mean_servers_used <= 4.0);
    }
}
