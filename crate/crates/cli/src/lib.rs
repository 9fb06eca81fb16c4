//! `sparcs` command line: scenario validation, the feeding demo, experiment
//! runners, workflow diffs and the document service.
//!
//! Exit codes: 0 success, 1 invalid input (bad documents, configs or paths),
//! 2 a run that completed but missed its expected pattern.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use sparcs_core::harness::{
    load_scenario, run_bite_sequencing_experiment, run_bite_transfer_experiment, run_feeding_demo,
    run_robot_model_comparison, RobotComparisonConfig, Scenario, ScenarioError, SequencingConfig,
    TransferExperimentConfig, ROBOT_WORKFLOW_FILE,
};
use sparcs_core::transfer::ArmModel;
use sparcs_core::workflow::{diff_workflows, RunStatus};
use sparcs_core::{parse_workflow, Workflow};
use sparcs_service::{import_bundled, ServiceConfig, Store};

/// Data shipped with the workspace.
pub const BUNDLED_DATA_DIR: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data");

#[derive(Debug, Parser)]
#[command(name = "sparcs", version, about = "Caregiving-scenario workbench")]
pub struct Cli {
    /// Root holding `scenarios/`, `catalog/` and `experiments/`.
    #[arg(long, env = "SPARCS_DATA_DIR", global = true)]
    pub data_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load and validate every document of a scenario.
    Validate {
        /// Scenario directory, or a scenario name under the data root.
        scenario: String,
    },
    /// Run the feeding workflow against a simulated user.
    Demo {
        scenario: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the execution trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run an experiment and write its CSV and summary to `--out`.
    Exp {
        #[arg(value_enum)]
        kind: ExperimentKind,
        /// JSON configuration; defaults apply to omitted fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Subtree edits turning workflow A into workflow B.
    Diff {
        /// Workflow file, scenario directory or scenario name.
        a: String,
        b: String,
    },
    /// Serve the `/v1` document and session API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, env = "SPARCS_STORE_DIR", default_value = "sparcs-store")]
        store_dir: PathBuf,
        /// Seed of every scenario's sequencing learner.
        #[arg(long, default_value_t = 0)]
        learner_seed: u64,
        /// Do not copy the bundled scenarios into an empty store.
        #[arg(long)]
        no_import: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExperimentKind {
    Transfer,
    Sequencing,
    Robots,
}

/// How a successful command run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    PatternMissed,
}

impl Outcome {
    pub fn exit_code(self) -> u8 {
        match self {
            Outcome::Ok => 0,
            Outcome::PatternMissed => 2,
        }
    }

    fn from_passed(passed: bool) -> Self {
        if passed {
            Outcome::Ok
        } else {
            Outcome::PatternMissed
        }
    }
}

impl Cli {
    pub fn data_dir(&self) -> PathBuf {
        self.data_dir.clone().unwrap_or_else(|| PathBuf::from(BUNDLED_DATA_DIR))
    }
}

/// An existing directory is used as is; anything else names a scenario under
/// `<data>/scenarios`.
pub fn resolve_scenario(data_dir: &Path, scenario: &str) -> PathBuf {
    let path = Path::new(scenario);
    if path.is_dir() {
        path.to_owned()
    } else {
        data_dir.join("scenarios").join(scenario)
    }
}

fn describe(e: &ScenarioError) -> String {
    let mut out = e.to_string();
    for d in e.diagnostics() {
        out.push_str(&format!("\n  {d}"));
    }
    out
}

fn load(data_dir: &Path, scenario: &str) -> Result<Scenario> {
    load_scenario(&resolve_scenario(data_dir, scenario)).map_err(|e| anyhow::anyhow!(describe(&e)))
}

/// Workflow file, scenario directory (its robot workflow) or scenario name.
fn load_workflow(data_dir: &Path, arg: &str) -> Result<Workflow> {
    let path = Path::new(arg);
    let file = if path.is_file() { path.to_owned() } else { resolve_scenario(data_dir, arg).join(ROBOT_WORKFLOW_FILE) };
    let text = fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
    parse_workflow(&text).with_context(|| file.display().to_string())
}

fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write(out: &Path, name: &str, contents: &str) -> Result<()> {
    let path = out.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn validate(data_dir: &Path, scenario: &str) -> Result<Outcome> {
    let s = load(data_dir, scenario)?;
    let nodes = |w: &Workflow| w.root.iter().count();
    println!(
        "{}: ok ({} building blocks, human workflow {} nodes, robot workflow {} nodes{})",
        s.id,
        s.blocks.blocks().len(),
        nodes(&s.workflow_human),
        nodes(&s.workflow_robot),
        if s.feeding.is_some() { ", meal" } else { "" }
    );
    Ok(Outcome::Ok)
}

fn demo(data_dir: &Path, scenario: &str, seed: u64, trace: Option<&Path>) -> Result<Outcome> {
    let s = load(data_dir, scenario)?;
    let report = run_feeding_demo(&s, seed)?;
    if let Some(path) = trace {
        fs::write(path, report.trace_text()).with_context(|| format!("writing {}", path.display()))?;
    }
    print!("{}", report.summary());
    Ok(Outcome::from_passed(report.status == RunStatus::Done))
}

fn experiment(data_dir: &Path, kind: ExperimentKind, config: Option<&Path>, out: &Path) -> Result<Outcome> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let (summary, passed) = match kind {
        ExperimentKind::Transfer => {
            let config: TransferExperimentConfig = read_config(config)?;
            let s = load(data_dir, &config.scenario)?;
            let seeds = config.seeds.clone().unwrap_or_else(|| s.planner.seeds.clone());
            let report = run_bite_transfer_experiment(&s.transfer_scenario()?, config.n_user_poses, &seeds)?;
            write(out, "transfer_metrics.csv", &report.evaluation.to_csv())?;
            (report.summary(), report.passed())
        }
        ExperimentKind::Sequencing => {
            let config: SequencingConfig = read_config(config)?;
            let report = run_bite_sequencing_experiment(&config)?;
            write(out, "sequencing_users.csv", &report.to_csv())?;
            (report.summary(), report.passed())
        }
        ExperimentKind::Robots => {
            let config: RobotComparisonConfig = read_config(config)?;
            let s = load(data_dir, &config.scenario)?;
            let arms = config.arms.iter().map(|a| ArmModel::preset(a)).collect::<Result<Vec<_>, _>>()?;
            let table = run_robot_model_comparison(&s.transfer_scenario()?, &arms, config.n_user_poses, &config.seeds)?;
            write(out, "robots_table.csv", &table.to_table())?;
            let mut summary = table.to_table();
            summary.push_str(&table.reference_notes());
            for c in table.checks() {
                summary.push_str(&format!("[{}] {}\n", if c.passed { "pass" } else { "FAIL" }, c.name));
            }
            (summary, table.passed())
        }
    };
    let name = match kind {
        ExperimentKind::Transfer => "transfer_summary.txt",
        ExperimentKind::Sequencing => "sequencing_summary.txt",
        ExperimentKind::Robots => "robots_summary.txt",
    };
    write(out, name, &summary)?;
    print!("{summary}");
    Ok(Outcome::from_passed(passed))
}

fn diff(data_dir: &Path, a: &str, b: &str) -> Result<Outcome> {
    let edits = diff_workflows(&load_workflow(data_dir, a)?, &load_workflow(data_dir, b)?);
    if edits.is_empty() {
        println!("no differences");
    }
    for e in edits {
        println!("{e}");
    }
    Ok(Outcome::Ok)
}

fn serve(data_dir: &Path, port: u16, store_dir: &Path, learner_seed: u64, no_import: bool) -> Result<Outcome> {
    if !no_import {
        let store = Store::open(store_dir).with_context(|| format!("opening store {}", store_dir.display()))?;
        let written = import_bundled(&store, data_dir)?;
        eprintln!("imported {written} bundled documents into {}", store_dir.display());
    }
    let app = sparcs_service::app(&ServiceConfig { store_dir: store_dir.to_owned(), learner_seed })?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let addr = SocketAddr::from(([127, 0, 0, 1], port));
        let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        sparcs_service::serve(listener, app).await.context("serving")
    })?;
    Ok(Outcome::Ok)
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Result<Outcome> {
    let data = cli.data_dir();
    match &cli.command {
        Command::Validate { scenario } => validate(&data, scenario),
        Command::Demo { scenario, seed, trace } => demo(&data, scenario, *seed, trace.as_deref()),
        Command::Exp { kind, config, out } => experiment(&data, *kind, config.as_deref(), out),
        Command::Diff { a, b } => diff(&data, a, b),
        Command::Serve { port, store_dir, learner_seed, no_import } => {
            serve(&data, *port, store_dir, *learner_seed, *no_import)
        }
    }
}
