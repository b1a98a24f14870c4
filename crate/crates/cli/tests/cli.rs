use std::fs;
use std::process::{Command, Output};

fn consolidate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_consolidate")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn table2_fixture_is_already_consolidated() {
    let o = consolidate(&["--scenario", "table2", "--emit", "csv"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let totals: Vec<&str> = text.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
    assert_eq!(totals, ["100", "80", "0", "70", "100", "80", "0", "70"]);
}

#[test]
fn out_writes_file_and_matches_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let o = consolidate(&["--scenario", "table1", "--emit", "json", "--out", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let direct = consolidate(&["--scenario", "table1", "--emit", "json"]);
    assert_eq!(fs::read(&path).unwrap(), direct.stdout);
}

#[test]
fn infeasible_run_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("big.toml");
    let full = "dims = 1\n[[servers]]\nid = \"S1\"\n[[servers]]\nid = \"S2\"\n\
                [[tasks]]\nid = \"a\"\ndemand = [100]\nserver = \"S1\"\n\
                [[tasks]]\nid = \"b\"\ndemand = [90]\nserver = \"S2\"\n";
    fs::write(&path, format!("{full}[[tasks]]\nid = \"late\"\ndemand = [50]\n")).unwrap();
    let o = consolidate(&["--scenario", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("unplaced late"));

    // larger than any server is a schema error, not an infeasible run
    fs::write(&path, format!("{full}[[tasks]]\nid = \"huge\"\ndemand = [120]\n")).unwrap();
    assert_eq!(consolidate(&["--scenario", path.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn input_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dup.toml");
    fs::write(
        &path,
        "dims = 1\n[[servers]]\nid = \"S1\"\n[[tasks]]\nid = \"t\"\ndemand = [10]\nserver = \"S1\"\n[[tasks]]\nid = \"t\"\ndemand = [20]\n",
    )
    .unwrap();
    let o = consolidate(&["--scenario", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("duplicate task id t"));

    assert_eq!(consolidate(&["--scenario", "table1", "--emit", "xml"]).status.code(), Some(2));
    assert_eq!(consolidate(&["--scenario", "table1", "--post-max", "120"]).status.code(), Some(2));
    assert_eq!(
        consolidate(&["--scenario", "table1", "--out", "/nonexistent/dir/x.csv"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn target_order_flag_changes_migration_search() {
    // No server has room for "new" under 70%, so one task must move first. Ascending
    // order fills the fullest target (S1), descending the emptiest (S3).
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mig.toml");
    let mut text = String::from("dims = 1\n");
    for s in ["S1", "S2", "S3"] {
        text.push_str(&format!("[[servers]]\nid = \"{s}\"\n"));
    }
    for (id, d, s) in [
        ("a", 40, "S1"),
        ("a2", 30, "S1"),
        ("b", 50, "S2"),
        ("b2", 20, "S2"),
        ("c", 60, "S3"),
    ] {
        text.push_str(&format!("[[tasks]]\nid = \"{id}\"\ndemand = [{d}]\nserver = \"{s}\"\n"));
    }
    text.push_str("[[tasks]]\nid = \"new\"\ndemand = [40]\n");
    fs::write(&path, text).unwrap();

    for (order, target) in [("asc", "S1"), ("desc", "S3")] {
        let o = consolidate(&["--scenario", path.to_str().unwrap(), "--target-order", order, "--emit", "json"]);
        assert_eq!(o.status.code(), Some(0), "{order}");
        let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        let steps = v["plan"]["steps"].as_array().unwrap();
        assert_eq!(steps.len(), 2, "{order}: {steps:?}");
        assert_eq!(steps[0]["task"], "b2");
        assert_eq!(steps[0]["to"], target, "{order}");
        assert_eq!(steps[1]["task"], "new");
        assert_eq!(steps[1]["server"], "S2");
    }
    assert_eq!(
        consolidate(&["--scenario", "table1", "--target-order", "sideways"]).status.code(),
        Some(2)
    );
}

#[test]
fn batch_uses_scenario_workload() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.toml");
    fs::write(&path, "dims = 2\n[workload]\nn_servers = 8\nslots_per_server = 4\n").unwrap();
    let o = consolidate(&["--batch", "10", "--scenario", path.to_str().unwrap(), "--emit", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v[0]["scenarios"], 10);
    assert!(v[0]["mean_servers_used"].as_f64().unwrap() <= 8.0);
}
