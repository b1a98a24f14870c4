//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero if any
//! criterion fails.

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use consolidation_cli::run::{run, AlgorithmName};
use consolidation_cli::scenario::{load_scenario, scenario_to_toml, Scenario};
use consolidation_core::model::CPU;
use consolidation_core::oracle::{min_migrations_to_release, optimal_bin_count};
use consolidation_core::planner::cost_benefit_gate;
use consolidation_core::workload::{draw_total, generate_scenario_stream, generate_server_load, scenario_rng};
use consolidation_core::{
    apply_plan, consolidate, replay_unchecked, validate_state, Config, DatacenterState, Plan, PlanStep, Points, ResourceVector,
    WorkloadSpec,
};
use rand::Rng;

const TABLE_RUNTIME_BUDGET: Duration = Duration::from_secs(1);
const ORACLE_RUNTIME_BUDGET: Duration = Duration::from_secs(60);
const ORACLE_MAX_TASKS: usize = 6;
const PROPERTY_SCENARIOS: u64 = 1000;
const PROPERTY_SEED: u64 = 2024;
const GENERATOR_DRAWS: usize = 1000;
const GENERATOR_SEED: u64 = 17;

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn table_replication() -> Verdict {
    let started = Instant::now();
    let s = load_scenario("table1").map_err(|e| e.to_string())?;
    let r = run(&s.name, &s.state, &s.config, AlgorithmName::Drma);
    let elapsed = started.elapsed();

    let totals: Vec<Points> = r.after_table.iter().map(|row| row.total[CPU]).collect();
    check(totals == [100, 80, 0, 70], || format!("after totals {totals:?}"))?;
    let m = r.metrics;
    check((m.servers_used, m.servers_released, m.tasks_migrated) == (3, 1, 3), || {
        format!("metrics {m:?}")
    })?;

    let mut moves: Vec<(Points, String, String)> = r
        .plan
        .moves()
        .map(|mv| (s.state.task(&mv.task).unwrap().demand[CPU], mv.from.to_string(), mv.to.to_string()))
        .collect();
    moves.sort();
    let expected = vec![
        (10, "S3".into(), "S1".into()),
        (10, "S3".into(), "S2".into()),
        (20, "S3".into(), "S1".into()),
    ];
    check(moves == expected, || format!("moves {moves:?}"))?;
    check(elapsed < TABLE_RUNTIME_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!("totals 100/80/0/70, 3 used, 1 released, 3 migrated in {elapsed:?}"))
}

fn threshold_gate() -> Verdict {
    let s = load_scenario("table1").map_err(|e| e.to_string())?;
    let cfg = Config { post_max: 70, ..s.config };
    let r = run(&s.name, &s.state, &cfg, AlgorithmName::Drma);
    check(r.plan.is_empty(), || format!("plan has {} steps", r.plan.steps.len()))?;
    check(r.metrics.servers_released == 0, || {
        format!("released {}", r.metrics.servers_released)
    })?;
    Ok("post_max 70: empty plan, 0 released".into())
}

/// Non-empty multisets of demands 10..=70 (in tens), descending, with sum at most `units`.
fn server_contents(units: Points, max_tasks: usize) -> Vec<Vec<Points>> {
    fn rec(prefix: &mut Vec<Points>, max_part: Points, left: Points, max_tasks: usize, out: &mut Vec<Vec<Points>>) {
        if !prefix.is_empty() {
            out.push(prefix.clone());
        }
        if prefix.len() == max_tasks {
            return;
        }
        for p in (1..=max_part.min(left)).rev() {
            prefix.push(p);
            rec(prefix, p, left - p, max_tasks, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), 7, units, max_tasks, &mut out);
    out.sort();
    out
}

/// Every state of at most `max_tasks` tasks on servers of capacity 100, up to server
/// and task order: servers are listed in sorted order of their contents.
fn small_states(max_tasks: usize) -> Vec<Vec<Vec<Points>>> {
    fn rec(
        contents: &[Vec<Points>],
        from: usize,
        tasks: usize,
        max_tasks: usize,
        cur: &mut Vec<Vec<Points>>,
        out: &mut Vec<Vec<Vec<Points>>>,
    ) {
        if !cur.is_empty() {
            out.push(cur.clone());
        }
        for (j, c) in contents.iter().enumerate().skip(from) {
            if tasks + c.len() <= max_tasks {
                cur.push(c.clone());
                rec(contents, j, tasks + c.len(), max_tasks, cur, out);
                cur.pop();
            }
        }
    }
    let contents = server_contents(10, max_tasks);
    let mut out = Vec::new();
    rec(&contents, 0, 0, max_tasks, &mut Vec::new(), &mut out);
    out
}

fn build_state(servers: &[Vec<Points>], spare: usize) -> DatacenterState {
    let mut st = DatacenterState::new(1);
    for i in 0..servers.len() + spare {
        st = st.with_server(format!("S{}", i + 1), [100]);
    }
    for (i, tasks) in servers.iter().enumerate() {
        for (j, &units) in tasks.iter().enumerate() {
            st = st.with_task(format!("s{}t{}", i + 1, j + 1), [units * 10], Some(&format!("S{}", i + 1)));
        }
    }
    st
}

fn oracle_equivalence() -> Verdict {
    let started = Instant::now();
    let cfg = Config::default();
    let instances = small_states(ORACLE_MAX_TASKS);
    let mut max_ratio = 1.0f64;
    let mut oracle_calls = 0usize;
    let mut above_minimum = 0usize;

    for servers in &instances {
        let task_count: usize = servers.iter().map(Vec::len).sum();
        let demands: Vec<ResourceVector> = servers.iter().flatten().map(|&u| ResourceVector::from([u * 10])).collect();
        let optimum = optimal_bin_count(&demands, &ResourceVector::from([100]), cfg.post_max)
            .map_err(|e| format!("{servers:?}: {e}"))?
            .optimum;

        // (a) best-fit repack onto enough empty servers for any packing
        let padded = build_state(servers, task_count - servers.len());
        let bf = run("oracle", &padded, &cfg, AlgorithmName::BestFit);
        check(bf.unplaced.is_empty(), || format!("{servers:?}: best-fit left tasks unplaced"))?;
        let used = bf.metrics.servers_used;
        check(used >= optimum, || format!("{servers:?}: best-fit {used} < optimum {optimum}"))?;
        max_ratio = max_ratio.max(used as f64 / optimum as f64);

        // (b) drma migrations against the fewest moves releasing as many servers
        let state = build_state(servers, 0);
        let drma = run("oracle", &state, &cfg, AlgorithmName::Drma);
        let released = drma.metrics.servers_released;
        if released > 0 {
            oracle_calls += 1;
            let min = min_migrations_to_release(&state, released, &cfg).map_err(|e| format!("{servers:?}: {e}"))?;
            let migrated = drma.metrics.tasks_migrated;
            check(migrated >= min, || format!("{servers:?}: drma {migrated} moves < minimum {min}"))?;
            if migrated > min {
                above_minimum += 1;
            }
        }
    }
    let elapsed = started.elapsed();
    check(elapsed < ORACLE_RUNTIME_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{} instances, max best-fit/optimal ratio {max_ratio:.3}, {oracle_calls} migration checks ({above_minimum} above minimum) in {elapsed:.1?}",
        instances.len()
    ))
}

fn demand_multiset(st: &DatacenterState) -> BTreeMap<String, ResourceVector> {
    st.tasks().map(|t| (t.id.to_string(), t.demand.clone())).collect()
}

/// Violations of the consolidation invariants for one run.
fn consolidation_violations(before: &DatacenterState, cfg: &Config) -> Vec<String> {
    let report = consolidate(before, cfg);
    let after = &report.after;
    let mut v = Vec::new();

    if demand_multiset(before) != demand_multiset(after) || after.waiting_tasks().count() != before.waiting_tasks().count() {
        v.push("task conservation".to_owned());
    }
    match apply_plan(before, &report.plan, cfg) {
        Ok(replayed) if &replayed == after => {}
        Ok(_) => v.push("replay differs from reported after-state".to_owned()),
        Err(e) => v.push(format!("replay: {e}")),
    }
    if !validate_state(after).is_empty() {
        v.push("after-state invalid".to_owned());
    }

    let mut cur = before.clone();
    for step in &report.plan.steps {
        let used = cur.servers_used();
        match replay_unchecked(&cur, &Plan { steps: vec![step.clone()] }) {
            Ok(next) => cur = next,
            Err(e) => {
                v.push(format!("step replay: {e}"));
                break;
            }
        }
        if cur.servers_used() > used {
            v.push("servers_used increased".to_owned());
        }
    }

    for step in &report.plan.steps {
        if let PlanStep::Move(m) = step {
            let idx = after.server_index(&m.from).expect("known server");
            if !after.server(idx).is_empty() {
                v.push(format!("partial evacuation of {}", m.from));
            }
        }
    }
    let released = report.metrics.servers_released;
    if released != report.released.len() || released != before.servers_used() - after.servers_used() {
        v.push("release count".to_owned());
    }
    if report.cost_benefit.cost > report.cost_benefit.benefit || !cost_benefit_gate(&report.plan, before, released, cfg).is_commit() {
        v.push("cost/benefit gate".to_owned());
    }
    v
}

fn property_suite() -> Verdict {
    let cfg = Config::default();
    let mut sizes = scenario_rng(PROPERTY_SEED, u64::MAX);
    let mut violations = Vec::new();
    let mut released = 0usize;
    for i in 0..PROPERTY_SCENARIOS {
        let spec = WorkloadSpec {
            n_servers: sizes.gen_range(4..=16),
            seed: PROPERTY_SEED,
            ..WorkloadSpec::default()
        };
        let state = generate_scenario_stream(&spec, i);
        released += consolidate(&state, &cfg).metrics.servers_released;
        for msg in consolidation_violations(&state, &cfg) {
            violations.push(format!("scenario {i}: {msg}"));
        }
    }
    check(violations.is_empty(), || {
        format!("{} violations, first: {}", violations.len(), violations[0])
    })?;
    Ok(format!(
        "{PROPERTY_SCENARIOS} scenarios, 0 violations, {released} servers released in total"
    ))
}

fn consolidate_bin(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_consolidate"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    check(out.status.success(), || format!("{args:?} exited with {}", out.status))?;
    Ok(out.stdout)
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = WorkloadSpec {
        n_servers: 10,
        seed: 99,
        ..WorkloadSpec::default()
    };
    let generated = Scenario {
        name: "generated".into(),
        state: generate_scenario_stream(&spec, 0),
        config: Config::default(),
        workload: Some(spec),
    };
    let path = dir.path().join("generated.toml");
    std::fs::write(&path, scenario_to_toml(&generated)).map_err(|e| e.to_string())?;
    let path = path.to_str().expect("utf-8 temp path");

    let mut runs = 0;
    for scenario in ["table1", path] {
        for algorithms in ["drma", "first-fit,best-fit,drma"] {
            for format in ["csv", "plotdata", "json", "table"] {
                let args = ["--scenario", scenario, "--algorithm", algorithms, "--emit", format, "--seed", "5"];
                let (a, b) = (consolidate_bin(&args)?, consolidate_bin(&args)?);
                check(a == b, || format!("{args:?} differs between runs"))?;
                check(!a.is_empty(), || format!("{args:?} printed nothing"))?;
                runs += 1;
            }
        }
    }
    for format in ["csv", "json"] {
        let args = [
            "--batch",
            "100",
            "--seed",
            "5",
            "--algorithm",
            "first-fit,best-fit,drma",
            "--emit",
            format,
        ];
        check(consolidate_bin(&args)? == consolidate_bin(&args)?, || {
            format!("{args:?} differs between runs")
        })?;
        runs += 1;
    }
    Ok(format!("{runs} command lines, byte-identical across two processes"))
}

fn generator_contract() -> Verdict {
    let spec = WorkloadSpec::default();
    let (lo, hi) = spec.total_range;
    let g = spec.granularity;
    let mut rng = scenario_rng(GENERATOR_SEED, 0);
    let mut seen = BTreeMap::new();
    for draw in 0..GENERATOR_DRAWS {
        let total = draw_total(spec.total_range, g, &mut rng);
        check((lo..=hi).contains(&total) && total % g == 0, || {
            format!("draw {draw}: total {total}")
        })?;
        let parts = generate_server_load(total, spec.slots_per_server, g, &mut rng).map_err(|e| e.to_string())?;
        check(parts.len() == spec.slots_per_server, || {
            format!("draw {draw}: {} slots", parts.len())
        })?;
        check(parts.iter().sum::<Points>() == total, || {
            format!("draw {draw}: {parts:?} does not sum to {total}")
        })?;
        check(parts.iter().all(|p| p % g == 0), || {
            format!("draw {draw}: {parts:?} off granularity")
        })?;
        *seen.entry(total).or_insert(0usize) += 1;
    }
    Ok(format!(
        "{GENERATOR_DRAWS} draws, totals seen {:?}",
        seen.keys().collect::<Vec<_>>()
    ))
}

fn main() {
    let criteria: [Criterion; 6] = [
        ("table replication", table_replication),
        ("threshold gate", threshold_gate),
        ("oracle equivalence", oracle_equivalence),
        ("property suite", property_suite),
        ("determinism", determinism),
        ("generator contract", generator_contract),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (n, (name, f)) in criteria.iter().enumerate() {
        let verdict = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match verdict {
            Ok(detail) => println!("PASS  {}. {name}: {detail}", n + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {}. {name}: {detail}", n + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
