//! Step-wise execution of a workflow as a hierarchical state machine.
//!
//! One [`WorkflowInstance::step`] is one scheduling round over the active
//! frontier, visited depth-first in document order:
//!
//! * an Active leaf invokes its handler, then is Done if its post-condition
//!   holds and Failed otherwise (or if the handler reports failure);
//! * an Active composite first fails if any child failed, completes when all
//!   children are Done and its post-condition holds, and re-enters its
//!   sub-machine (children reset to Pending) when all children are Done but
//!   the post-condition does not hold yet;
//! * otherwise the composite advances its Active children and then activates
//!   Pending children whose pre-condition holds: every one of them under a
//!   concurrent parent; under a sequential parent with no Active child, the
//!   first Pending child in document order, once its pre-condition holds.
//!
//! Newly activated nodes run from the next step on.

use std::collections::HashMap;
use std::fmt;

use indexmap::IndexMap;
use serde::Serialize;

use super::blackboard::Blackboard;
use super::condition::ConditionExpr;
use super::model::{Workflow, WorkflowNode};
use super::EngineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum NodeStatus {
    Pending,
    Active,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Event {
    Activated,
    Done,
    Failed(String),
    /// Composite finished its children without meeting its post-condition and
    /// starts over.
    Reentered,
    /// Still Active when an ancestor failed.
    Aborted,
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Event::Activated => f.write_str("Activated"),
            Event::Done => f.write_str("Done"),
            Event::Failed(reason) => write!(f, "Failed({reason})"),
            Event::Reentered => f.write_str("Reentered"),
            Event::Aborted => f.write_str("Aborted"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceEvent {
    pub step: usize,
    pub node_id: String,
    pub event: Event,
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}\t{}", self.step, self.node_id, self.event)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum HandlerOutcome {
    Success,
    Failure(String),
}

/// A skill implementation bound to a leaf's `handler_ref`.
pub trait SkillHandler {
    fn invoke(&mut self, node: &WorkflowNode, blackboard: &Blackboard) -> (Blackboard, HandlerOutcome);
}

impl<F> SkillHandler for F
where
    F: FnMut(&WorkflowNode, &Blackboard) -> (Blackboard, HandlerOutcome),
{
    fn invoke(&mut self, node: &WorkflowNode, blackboard: &Blackboard) -> (Blackboard, HandlerOutcome) {
        self(node, blackboard)
    }
}

#[derive(Default)]
pub struct HandlerRegistry<'a> {
    handlers: HashMap<String, Box<dyn SkillHandler + 'a>>,
}

impl<'a> HandlerRegistry<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: impl Into<String>, handler: impl SkillHandler + 'a) -> &mut Self {
        self.handlers.insert(name.into(), Box::new(handler));
        self
    }

    pub fn contains(&self, name: &str) -> bool {
        self.handlers.contains_key(name)
    }
}

/// The world outside the robot, given a chance to change the blackboard
/// before every scheduling round (e.g. a simulated user opening their mouth).
pub trait Environment {
    fn before_step(&mut self, step: usize, blackboard: &mut Blackboard);
}

impl Environment for () {
    fn before_step(&mut self, _step: usize, _blackboard: &mut Blackboard) {}
}

#[derive(Debug, Clone)]
pub struct WorkflowInstance {
    workflow: Workflow,
    status: IndexMap<String, NodeStatus>,
    trace: Vec<TraceEvent>,
    steps: usize,
}

impl WorkflowInstance {
    /// Every node starts Pending.
    pub fn new(workflow: Workflow) -> Self {
        let status = workflow.root.iter().map(|n| (n.id.clone(), NodeStatus::Pending)).collect();
        Self { workflow, status, trace: Vec::new(), steps: 0 }
    }

    pub fn workflow(&self) -> &Workflow {
        &self.workflow
    }

    pub fn status(&self, id: &str) -> Option<NodeStatus> {
        self.status.get(id).copied()
    }

    pub fn root_status(&self) -> NodeStatus {
        self.status[&self.workflow.root.id]
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self.root_status(), NodeStatus::Done | NodeStatus::Failed)
    }

    /// Ids of all Active nodes, in document order.
    pub fn active_ids(&self) -> Vec<&str> {
        self.status.iter().filter(|(_, s)| **s == NodeStatus::Active).map(|(id, _)| id.as_str()).collect()
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Runs one scheduling round.
    pub fn step(&mut self, blackboard: &mut Blackboard, handlers: &mut HandlerRegistry<'_>) -> Result<(), EngineError> {
        if self.is_terminal() {
            return Err(EngineError::Terminal);
        }
        self.steps += 1;
        let Self { workflow, status, trace, steps } = self;
        let root = &workflow.root;
        let mut round = Round { status, trace, step: *steps, blackboard, handlers };
        match round.get(&root.id) {
            NodeStatus::Pending => {
                if eval(&root.pre, round.blackboard)? {
                    round.set(&root.id, NodeStatus::Active, Event::Activated);
                }
                Ok(())
            }
            NodeStatus::Active => round.tick(root),
            NodeStatus::Done | NodeStatus::Failed => unreachable!("checked above"),
        }
    }
}

fn eval(expr: &ConditionExpr, bb: &Blackboard) -> Result<bool, EngineError> {
    expr.eval(bb).map_err(EngineError::Condition)
}

struct Round<'s, 'h> {
    status: &'s mut IndexMap<String, NodeStatus>,
    trace: &'s mut Vec<TraceEvent>,
    step: usize,
    blackboard: &'s mut Blackboard,
    handlers: &'s mut HandlerRegistry<'h>,
}

impl Round<'_, '_> {
    fn set(&mut self, id: &str, status: NodeStatus, event: Event) {
        self.status.insert(id.to_owned(), status);
        self.trace.push(TraceEvent { step: self.step, node_id: id.to_owned(), event });
    }

    fn get(&self, id: &str) -> NodeStatus {
        self.status[id]
    }

    fn tick(&mut self, node: &WorkflowNode) -> Result<(), EngineError> {
        if node.is_leaf() {
            return self.run_leaf(node);
        }
        if node.children.iter().any(|c| self.get(&c.id) == NodeStatus::Failed) {
            for c in &node.children {
                self.abort_active(c);
            }
            self.set(&node.id, NodeStatus::Failed, Event::Failed("child failed".into()));
            return Ok(());
        }
        if node.children.iter().all(|c| self.get(&c.id) == NodeStatus::Done) {
            if eval(&node.post, self.blackboard)? {
                self.set(&node.id, NodeStatus::Done, Event::Done);
            } else {
                for c in &node.children {
                    self.reset(c);
                }
                self.trace.push(TraceEvent { step: self.step, node_id: node.id.clone(), event: Event::Reentered });
            }
            return Ok(());
        }
        let running: Vec<&WorkflowNode> =
            node.children.iter().filter(|c| self.get(&c.id) == NodeStatus::Active).collect();
        for child in running {
            self.tick(child)?;
        }
        if node.children.iter().any(|c| self.get(&c.id) == NodeStatus::Failed) {
            return Ok(());
        }
        if node.concurrent {
            for child in &node.children {
                if self.get(&child.id) == NodeStatus::Pending && eval(&child.pre, self.blackboard)? {
                    self.set(&child.id, NodeStatus::Active, Event::Activated);
                }
            }
        } else if !node.children.iter().any(|c| self.get(&c.id) == NodeStatus::Active) {
            // A sequential parent waits on its first Pending child's pre-condition.
            if let Some(next) = node.children.iter().find(|c| self.get(&c.id) == NodeStatus::Pending) {
                if eval(&next.pre, self.blackboard)? {
                    self.set(&next.id, NodeStatus::Active, Event::Activated);
                }
            }
        }
        Ok(())
    }

    fn run_leaf(&mut self, node: &WorkflowNode) -> Result<(), EngineError> {
        let (next, outcome) = match &node.handler_ref {
            Some(name) => {
                let handler = self
                    .handlers
                    .handlers
                    .get_mut(name)
                    .ok_or_else(|| EngineError::UnknownHandler { node: node.id.clone(), handler: name.clone() })?;
                handler.invoke(node, self.blackboard)
            }
            None => (self.blackboard.clone(), HandlerOutcome::Success),
        };
        if let Some(path) = self.blackboard.first_type_change(&next) {
            return Err(EngineError::BlackboardType { node: node.id.clone(), path: path.to_owned() });
        }
        *self.blackboard = next;
        match outcome {
            HandlerOutcome::Failure(reason) => self.set(&node.id, NodeStatus::Failed, Event::Failed(reason)),
            HandlerOutcome::Success => {
                if eval(&node.post, self.blackboard)? {
                    self.set(&node.id, NodeStatus::Done, Event::Done);
                } else {
                    self.set(&node.id, NodeStatus::Failed, Event::Failed("post-condition false".into()));
                }
            }
        }
        Ok(())
    }

    fn abort_active(&mut self, node: &WorkflowNode) {
        if self.get(&node.id) == NodeStatus::Active {
            for c in &node.children {
                self.abort_active(c);
            }
            self.set(&node.id, NodeStatus::Failed, Event::Aborted);
        }
    }

    fn reset(&mut self, node: &WorkflowNode) {
        self.status.insert(node.id.clone(), NodeStatus::Pending);
        for c in &node.children {
            self.reset(c);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RunStatus {
    Done,
    Failed,
    BudgetExhausted,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub status: RunStatus,
    pub instance: WorkflowInstance,
    pub blackboard: Blackboard,
}

impl RunResult {
    pub fn trace(&self) -> &[TraceEvent] {
        self.instance.trace()
    }
}

/// Steps until the root is Done or Failed, or `max_steps` rounds have run.
pub fn run(
    workflow: &Workflow,
    blackboard: Blackboard,
    handlers: &mut HandlerRegistry<'_>,
    max_steps: usize,
) -> Result<RunResult, EngineError> {
    run_with_environment(workflow, blackboard, handlers, &mut (), max_steps)
}

pub fn run_with_environment(
    workflow: &Workflow,
    mut blackboard: Blackboard,
    handlers: &mut HandlerRegistry<'_>,
    environment: &mut dyn Environment,
    max_steps: usize,
) -> Result<RunResult, EngineError> {
    if max_steps == 0 {
        return Err(EngineError::InvalidBudget);
    }
    let mut instance = WorkflowInstance::new(workflow.clone());
    while !instance.is_terminal() && instance.steps() < max_steps {
        environment.before_step(instance.steps() + 1, &mut blackboard);
        instance.step(&mut blackboard, handlers)?;
    }
    let status = match instance.root_status() {
        NodeStatus::Done => RunStatus::Done,
        NodeStatus::Failed => RunStatus::Failed,
        _ => RunStatus::BudgetExhausted,
    };
    Ok(RunResult { status, instance, blackboard })
}
