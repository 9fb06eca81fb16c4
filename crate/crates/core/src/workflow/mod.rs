//! Structured workflows: hierarchical state machines with typed abstraction
//! levels, condition-gated transitions and concurrent regions.

mod blackboard;
mod condition;
mod diff;
mod engine;
mod model;

use thiserror::Error;

pub use blackboard::{Blackboard, Value};
pub use condition::{CmpOp, ConditionError, ConditionExpr, SyntaxError};
pub use diff::{diff_workflows, Edit, EditKind};
pub use engine::{
    run, run_with_environment, Environment, Event, HandlerOutcome, HandlerRegistry, NodeStatus, RunResult, RunStatus,
    SkillHandler, TraceEvent, WorkflowInstance,
};
pub use model::{
    parse_workflow, substitute_subtree, validate_hierarchy, Diagnostic, Level, NodePath, Rule, Target, Workflow,
    WorkflowNode,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorkflowError {
    #[error("workflow parse error: {0}")]
    Parse(String),
    #[error("workflow hierarchy violated: {}", join(.0))]
    Hierarchy(Vec<Diagnostic>),
    #[error("dangling handler reference: {}", join(.0))]
    DanglingHandler(Vec<Diagnostic>),
    #[error("no node at path {0}")]
    Path(String),
}

impl WorkflowError {
    pub fn diagnostics(&self) -> &[Diagnostic] {
        match self {
            WorkflowError::Hierarchy(d) | WorkflowError::DanglingHandler(d) => d,
            _ => &[],
        }
    }
}

fn join(diags: &[Diagnostic]) -> String {
    diags.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("node `{node}` references unregistered handler `{handler}`")]
    UnknownHandler { node: String, handler: String },
    #[error(transparent)]
    Condition(#[from] ConditionError),
    #[error("handler of `{node}` changed the type of blackboard path `{path}`")]
    BlackboardType { node: String, path: String },
    #[error("step budget must be at least 1")]
    InvalidBudget,
    #[error("instance already finished")]
    Terminal,
}
