//! Scenario bundles: one directory per caregiving scenario.
//!
//! ```text
//! <dir>/blocks.json            building blocks
//! <dir>/workflow_human.json    human-caregiving workflow
//! <dir>/workflow_robot.json    robot-caregiving workflow
//! <dir>/planner.json           bite-transfer planner configuration
//! <dir>/meal.json              meal and bite preferences (feeding only)
//! ```

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blocks::{head_pose_manifold, parse_building_blocks, BlockError, BuildingBlockSet, HeadPoseManifold};
use crate::hmm::{HmmError, MealSpec, TrainOptions, UserPrefProfile};
use crate::transfer::{PlannerConfig, TransferError, TransferScenario};
use crate::workflow::{parse_workflow, Diagnostic, Rule, Target, Workflow, WorkflowError};

use super::demo::DEMO_HANDLERS;

pub const BLOCKS_FILE: &str = "blocks.json";
pub const HUMAN_WORKFLOW_FILE: &str = "workflow_human.json";
pub const ROBOT_WORKFLOW_FILE: &str = "workflow_robot.json";
pub const PLANNER_FILE: &str = "planner.json";
pub const MEAL_FILE: &str = "meal.json";

#[derive(Debug, Error)]
pub enum ScenarioErrorKind {
    #[error("file is missing")]
    Missing,
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Blocks(#[from] BlockError),
    #[error(transparent)]
    Workflow(#[from] WorkflowError),
    #[error(transparent)]
    Planner(#[from] TransferError),
    #[error(transparent)]
    Meal(#[from] HmmError),
    #[error("{0}")]
    Invalid(String),
}

/// A load failure together with the file it came from.
#[derive(Debug, Error)]
pub struct ScenarioError {
    pub file: PathBuf,
    #[source]
    pub kind: ScenarioErrorKind,
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.file.display(), self.kind)
    }
}

impl ScenarioError {
    fn new(file: &Path, kind: impl Into<ScenarioErrorKind>) -> Self {
        Self { file: file.to_owned(), kind: kind.into() }
    }

    /// Workflow diagnostics carried by the error, if any.
    pub fn diagnostics(&self) -> &[Diagnostic] {
        match &self.kind {
            ScenarioErrorKind::Workflow(e) => e.diagnostics(),
            _ => &[],
        }
    }
}

/// Meal and bite-sequencing setup of a feeding scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedingSetup {
    pub meal: MealSpec,
    /// How the simulated user actually chooses bites.
    pub profile: UserPrefProfile,
    pub temperature: f64,
    #[serde(default = "default_sim_meals")]
    pub n_sim_meals: usize,
    #[serde(default = "default_observed_meals")]
    pub n_observed_meals: usize,
    #[serde(default = "default_user_weight")]
    pub user_weight: f64,
    #[serde(default = "default_states")]
    pub n_states: usize,
    #[serde(default)]
    pub train: TrainOptions,
}

fn default_sim_meals() -> usize {
    50
}

fn default_observed_meals() -> usize {
    6
}

fn default_user_weight() -> f64 {
    10.0
}

fn default_states() -> usize {
    4
}

impl FeedingSetup {
    pub fn parse(document: &str) -> Result<Self, HmmError> {
        let setup: Self = serde_json::from_str(document).map_err(|e| HmmError::Parse(e.to_string()))?;
        setup.meal.validate()?;
        setup.profile.affinities_for(&setup.meal)?;
        if !(setup.temperature >= 0.0 && setup.temperature.is_finite()) {
            return Err(HmmError::InvalidArgument("temperature must be finite and nonnegative".into()));
        }
        Ok(setup)
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub id: String,
    pub blocks: BuildingBlockSet,
    pub workflow_human: Workflow,
    pub workflow_robot: Workflow,
    pub planner: PlannerConfig,
    pub feeding: Option<FeedingSetup>,
}

impl Scenario {
    pub fn user_manifold(&self) -> Result<HeadPoseManifold, BlockError> {
        head_pose_manifold(self.blocks.user_functionality())
    }

    pub fn transfer_scenario(&self) -> Result<TransferScenario, TransferError> {
        let manifold = self.user_manifold().map_err(|e| TransferError::Config(e.to_string()))?;
        TransferScenario::from_config(&self.planner, manifold)
    }
}

fn read(path: &Path) -> Result<String, ScenarioError> {
    fs::read_to_string(path).map_err(|e| {
        let kind = if e.kind() == std::io::ErrorKind::NotFound {
            ScenarioErrorKind::Missing
        } else {
            ScenarioErrorKind::Io(e)
        };
        ScenarioError::new(path, kind)
    })
}

fn check_workflow(workflow: Workflow, target: Target) -> Result<Workflow, ScenarioErrorKind> {
    if workflow.target != target {
        let msg = format!("expected a {target:?} workflow, found {:?}", workflow.target);
        return Err(ScenarioErrorKind::Invalid(msg));
    }
    Ok(workflow)
}

fn check_handlers(workflow: &Workflow) -> Result<(), ScenarioErrorKind> {
    let dangling: Vec<Diagnostic> = workflow
        .root
        .iter()
        .filter_map(|n| {
            let handler = n.handler_ref.as_deref()?;
            (!DEMO_HANDLERS.contains(&handler)).then(|| Diagnostic {
                node_id: n.id.clone(),
                rule: Rule::UnknownHandler,
                message: format!("handler `{handler}` is not provided by the skill registry"),
            })
        })
        .collect();
    if dangling.is_empty() {
        Ok(())
    } else {
        Err(WorkflowError::DanglingHandler(dangling).into())
    }
}

/// Source of each scenario part, for error provenance.
struct Sources {
    blocks: PathBuf,
    robot: PathBuf,
    planner: PathBuf,
}

fn finish(scenario: Scenario, sources: &Sources) -> Result<Scenario, ScenarioError> {
    if scenario.blocks.scenario_id != scenario.id {
        let msg = format!("scenario_id `{}` does not match `{}`", scenario.blocks.scenario_id, scenario.id);
        return Err(ScenarioError::new(&sources.blocks, ScenarioErrorKind::Invalid(msg)));
    }
    check_handlers(&scenario.workflow_robot).map_err(|k| ScenarioError::new(&sources.robot, k))?;
    let manifold = scenario.user_manifold().map_err(|e| ScenarioError::new(&sources.blocks, e))?;
    TransferScenario::from_config(&scenario.planner, manifold).map_err(|e| ScenarioError::new(&sources.planner, e))?;
    Ok(scenario)
}

/// Loads and validates every document of a scenario directory. The directory
/// name is the scenario id and must match `blocks.json`.
pub fn load_scenario(dir: &Path) -> Result<Scenario, ScenarioError> {
    let id = dir.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_owned();
    let sources = Sources {
        blocks: dir.join(BLOCKS_FILE),
        robot: dir.join(ROBOT_WORKFLOW_FILE),
        planner: dir.join(PLANNER_FILE),
    };
    let blocks = parse_building_blocks(&read(&sources.blocks)?).map_err(|e| ScenarioError::new(&sources.blocks, e))?;
    let workflow = |path: &Path, target| {
        parse_workflow(&read(path)?)
            .map_err(ScenarioErrorKind::from)
            .and_then(|w| check_workflow(w, target))
            .map_err(|k| ScenarioError::new(path, k))
    };
    let workflow_human = workflow(&dir.join(HUMAN_WORKFLOW_FILE), Target::Human)?;
    let workflow_robot = workflow(&sources.robot, Target::Robot)?;
    let planner =
        PlannerConfig::parse(&read(&sources.planner)?).map_err(|e| ScenarioError::new(&sources.planner, e))?;
    let meal_path = dir.join(MEAL_FILE);
    let feeding = if meal_path.exists() {
        Some(FeedingSetup::parse(&read(&meal_path)?).map_err(|e| ScenarioError::new(&meal_path, e))?)
    } else {
        None
    };
    finish(Scenario { id, blocks, workflow_human, workflow_robot, planner, feeding }, &sources)
}

/// Single-document form of a scenario, keyed by the file stems of the
/// directory form.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenarioDocument {
    blocks: serde_json::Value,
    workflow_human: serde_json::Value,
    workflow_robot: serde_json::Value,
    planner: serde_json::Value,
    #[serde(default)]
    meal: Option<serde_json::Value>,
}

fn to_value(value: &impl Serialize) -> serde_json::Value {
    serde_json::to_value(value).expect("document types serialize infallibly")
}

impl Scenario {
    /// Canonical single-document form.
    pub fn to_document(&self) -> String {
        let mut doc = serde_json::Map::new();
        doc.insert("blocks".into(), to_value(&self.blocks));
        doc.insert("workflow_human".into(), to_value(&self.workflow_human));
        doc.insert("workflow_robot".into(), to_value(&self.workflow_robot));
        doc.insert("planner".into(), to_value(&self.planner));
        if let Some(f) = &self.feeding {
            doc.insert("meal".into(), to_value(f));
        }
        crate::canonical::to_canonical_string(&doc)
    }
}

/// Parses and validates the single-document form of scenario `id`. Errors
/// name the offending part (`blocks`, `planner`, ...).
pub fn parse_scenario_document(id: &str, document: &str) -> Result<Scenario, ScenarioError> {
    let part = PathBuf::from;
    let raw: RawScenarioDocument = serde_json::from_str(document)
        .map_err(|e| ScenarioError::new(&part(id), ScenarioErrorKind::Invalid(e.to_string())))?;
    let sources = Sources { blocks: part("blocks"), robot: part("workflow_robot"), planner: part("planner") };
    let text = |v: &serde_json::Value| v.to_string();
    let blocks = parse_building_blocks(&text(&raw.blocks)).map_err(|e| ScenarioError::new(&sources.blocks, e))?;
    let workflow = |name: &str, v: &serde_json::Value, target| {
        parse_workflow(&text(v))
            .map_err(ScenarioErrorKind::from)
            .and_then(|w| check_workflow(w, target))
            .map_err(|k| ScenarioError::new(Path::new(name), k))
    };
    let workflow_human = workflow("workflow_human", &raw.workflow_human, Target::Human)?;
    let workflow_robot = workflow("workflow_robot", &raw.workflow_robot, Target::Robot)?;
    let planner = PlannerConfig::parse(&text(&raw.planner)).map_err(|e| ScenarioError::new(&sources.planner, e))?;
    let feeding = raw
        .meal
        .map(|m| FeedingSetup::parse(&text(&m)).map_err(|e| ScenarioError::new(&part("meal"), e)))
        .transpose()?;
    finish(Scenario { id: id.to_owned(), blocks, workflow_human, workflow_robot, planner, feeding }, &sources)
}
