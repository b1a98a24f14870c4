//! Command-line front end for the consolidation engine: scenario files, algorithm
//! runs and comparisons, seeded batches, and report emission.

pub mod emit;
pub mod run;
pub mod scenario;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use consolidation_core::{Config, TargetOrder, WorkloadSpec};

use crate::emit::{render_batch, render_comparison, render_report, Format};
use crate::run::{batch, compare, AlgorithmName};
use crate::scenario::load_scenario;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TargetOrderArg {
    Asc,
    Desc,
}

/// Run first-fit, best-fit or migration-aware consolidation over a scenario.
#[derive(Debug, Parser)]
#[command(name = "consolidate", version)]
pub struct Args {
    /// Scenario TOML file, or a bundled scenario name (table1, table2).
    #[arg(long)]
    pub scenario: Option<String>,
    /// Algorithms to run; more than one prints a comparison.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "drma")]
    pub algorithm: Vec<AlgorithmName>,
    /// Allocation threshold in percent of capacity.
    #[arg(long)]
    pub pre_max: Option<u64>,
    /// Migration threshold in percent of capacity.
    #[arg(long)]
    pub post_max: Option<u64>,
    /// Seed for generated scenarios.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value = "table")]
    pub emit: Format,
    /// Write output here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run COUNT generated scenarios and print per-algorithm means.
    #[arg(long, value_name = "COUNT")]
    pub batch: Option<usize>,
    /// Order in which the migration search visits target servers.
    #[arg(long, value_enum)]
    pub target_order: Option<TargetOrderArg>,
}

impl Args {
    fn apply(&self, mut config: Config) -> Config {
        if let Some(v) = self.pre_max {
            config.pre_max = v;
        }
        if let Some(v) = self.post_max {
            config.post_max = v;
        }
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(o) = self.target_order {
            config.target_order = match o {
                TargetOrderArg::Asc => TargetOrder::Ascending,
                TargetOrderArg::Desc => TargetOrder::Descending,
            };
        }
        config
    }
}

/// Parses `args`, runs, and writes results to `out` and diagnostics to `err`.
/// Returns the process exit code.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let rendered = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{rendered}");
            } else {
                let _ = write!(out, "{rendered}");
            }
            return code;
        }
    };
    match execute(&args) {
        Ok((text, code)) => {
            let written = match &args.out {
                Some(path) => std::fs::write(path, &text),
                None => out.write_all(text.as_bytes()),
            };
            if let Err(e) = written {
                let _ = writeln!(err, "error: cannot write output: {e}");
                return EXIT_INPUT;
            }
            if code == EXIT_INFEASIBLE {
                let _ = writeln!(err, "error: some tasks could not be placed");
            }
            code
        }
        Err(message) => {
            let _ = writeln!(err, "error: {message}");
            EXIT_INPUT
        }
    }
}

fn execute(args: &Args) -> Result<(String, i32), String> {
    if let Some(count) = args.batch {
        let (name, base, spec) = match &args.scenario {
            Some(path) => {
                let s = load_scenario(path).map_err(|e| e.to_string())?;
                (s.name, s.config, s.workload.unwrap_or_default())
            }
            None => ("generated".to_owned(), Config::default(), WorkloadSpec::default()),
        };
        let config = args.apply(base);
        config.validate_for(spec.dims).map_err(|e| e.to_string())?;
        let spec = WorkloadSpec {
            seed: args.seed.unwrap_or(spec.seed),
            ..spec
        };
        spec.validate(config.pre_max).map_err(|e| e.to_string())?;
        let rows = batch(&name, &spec, &config, &args.algorithm, count);
        let text = render_batch(&rows, args.emit).map_err(|e| e.to_string())?;
        return Ok((text, EXIT_OK));
    }

    let path = args.scenario.as_deref().ok_or("--scenario is required unless --batch is given")?;
    let s = load_scenario(path).map_err(|e| e.to_string())?;
    let config = args.apply(s.config);
    config.validate_for(s.state.dims()).map_err(|e| e.to_string())?;

    let reports = compare(&s.name, &s.state, &config, &args.algorithm);
    let text = if reports.len() == 1 {
        render_report(&reports[0], args.emit)
    } else {
        render_comparison(&reports, args.emit)
    }
    .map_err(|e| e.to_string())?;
    let code = if reports.iter().all(|r| r.is_feasible()) {
        EXIT_OK
    } else {
        EXIT_INFEASIBLE
    };
    Ok((text, code))
}
