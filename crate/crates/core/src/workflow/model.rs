use std::collections::HashSet;
use std::fmt;

use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};

use super::condition::ConditionExpr;
use super::WorkflowError;
use crate::canonical::to_canonical_string;

/// Abstraction level of a workflow state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Level {
    Activity,
    CompositeTask,
    Task,
    CompositeSkill,
    MotorSkill,
    PerceptualSkill,
}

impl Level {
    pub fn as_str(self) -> &'static str {
        match self {
            Level::Activity => "Activity",
            Level::CompositeTask => "CompositeTask",
            Level::Task => "Task",
            Level::CompositeSkill => "CompositeSkill",
            Level::MotorSkill => "MotorSkill",
            Level::PerceptualSkill => "PerceptualSkill",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [
            Level::Activity,
            Level::CompositeTask,
            Level::Task,
            Level::CompositeSkill,
            Level::MotorSkill,
            Level::PerceptualSkill,
        ]
        .into_iter()
        .find(|l| l.as_str() == s)
    }

    /// Levels a child of `self` may have.
    pub fn child_levels(self) -> &'static [Level] {
        match self {
            Level::Activity => &[Level::CompositeTask],
            Level::CompositeTask => &[Level::Task],
            Level::Task => &[Level::CompositeSkill],
            Level::CompositeSkill => &[Level::MotorSkill, Level::PerceptualSkill],
            Level::MotorSkill | Level::PerceptualSkill => &[],
        }
    }

    pub fn is_skill(self) -> bool {
        matches!(self, Level::MotorSkill | Level::PerceptualSkill)
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Human-caregiving workflows stop at Tasks; robot workflows go down to skills.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Human,
    Robot,
}

impl Target {
    fn allows(self, level: Level) -> bool {
        match self {
            Target::Human => matches!(level, Level::Activity | Level::CompositeTask | Level::Task),
            Target::Robot => true,
        }
    }

    fn is_leaf_level(self, level: Level) -> bool {
        match self {
            Target::Human => level == Level::Task,
            Target::Robot => level.is_skill(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkflowNode {
    pub id: String,
    pub name: String,
    pub level: Level,
    pub pre: ConditionExpr,
    pub post: ConditionExpr,
    pub concurrent: bool,
    pub children: Vec<WorkflowNode>,
    pub handler_ref: Option<String>,
}

impl WorkflowNode {
    pub fn new(id: impl Into<String>, name: impl Into<String>, level: Level) -> Self {
        Self {
            id: id.into(),
            name: name.into(),
            level,
            pre: ConditionExpr::Always,
            post: ConditionExpr::Always,
            concurrent: false,
            children: Vec::new(),
            handler_ref: None,
        }
    }

    pub fn with_children(mut self, children: Vec<WorkflowNode>) -> Self {
        self.children = children;
        self
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn get(&self, path: &NodePath) -> Option<&WorkflowNode> {
        path.0.iter().try_fold(self, |node, &i| node.children.get(i))
    }

    /// Pre-order traversal.
    pub fn iter(&self) -> impl Iterator<Item = &WorkflowNode> {
        let mut stack = vec![self];
        std::iter::from_fn(move || {
            let node = stack.pop()?;
            stack.extend(node.children.iter().rev());
            Some(node)
        })
    }

    pub fn find_id(&self, id: &str) -> Option<&WorkflowNode> {
        self.iter().find(|n| n.id == id)
    }

    /// Path of the first node (pre-order) satisfying `pred`.
    pub fn find_path(&self, pred: &impl Fn(&WorkflowNode) -> bool) -> Option<NodePath> {
        if pred(self) {
            return Some(NodePath::root());
        }
        self.children.iter().enumerate().find_map(|(i, c)| {
            c.find_path(pred).map(|mut p| {
                p.0.insert(0, i);
                p
            })
        })
    }

    /// Structural equality ignoring node ids.
    pub fn same_shape(&self, other: &WorkflowNode) -> bool {
        self.same_attributes(other)
            && self.children.len() == other.children.len()
            && self.children.iter().zip(&other.children).all(|(a, b)| a.same_shape(b))
    }

    pub(crate) fn same_attributes(&self, other: &WorkflowNode) -> bool {
        self.name == other.name
            && self.level == other.level
            && self.pre == other.pre
            && self.post == other.post
            && self.concurrent == other.concurrent
            && self.handler_ref == other.handler_ref
    }
}

impl Serialize for WorkflowNode {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(None)?;
        map.serialize_entry("id", &self.id)?;
        map.serialize_entry("name", &self.name)?;
        map.serialize_entry("level", self.level.as_str())?;
        if !self.pre.is_always() {
            map.serialize_entry("pre", &self.pre.to_string())?;
        }
        if !self.post.is_always() {
            map.serialize_entry("post", &self.post.to_string())?;
        }
        if self.concurrent {
            map.serialize_entry("concurrent", &true)?;
        }
        if !self.children.is_empty() {
            map.serialize_entry("children", &self.children)?;
        }
        if let Some(h) = &self.handler_ref {
            map.serialize_entry("handler_ref", h)?;
        }
        map.end()
    }
}

/// Child-index path from the root; the empty path addresses the root.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, PartialOrd, Ord, Serialize)]
pub struct NodePath(pub Vec<usize>);

impl NodePath {
    pub fn root() -> Self {
        Self(Vec::new())
    }

    pub fn child(&self, i: usize) -> Self {
        let mut v = self.0.clone();
        v.push(i);
        Self(v)
    }

    pub fn starts_with(&self, prefix: &NodePath) -> bool {
        self.0.starts_with(&prefix.0)
    }
}

impl fmt::Display for NodePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("/");
        }
        for i in &self.0 {
            write!(f, "/{i}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Workflow {
    pub target: Target,
    pub root: WorkflowNode,
}

impl Workflow {
    pub fn to_canonical(&self) -> String {
        to_canonical_string(self)
    }

    /// Path of the first node with the given display name.
    pub fn path_by_name(&self, name: &str) -> Option<NodePath> {
        self.root.find_path(&|n| n.name == name)
    }

    pub fn get(&self, path: &NodePath) -> Option<&WorkflowNode> {
        self.root.get(path)
    }

    pub fn handler_refs(&self) -> Vec<&str> {
        let mut refs: Vec<&str> = self.root.iter().filter_map(|n| n.handler_ref.as_deref()).collect();
        refs.sort_unstable();
        refs.dedup();
        refs
    }
}

impl Serialize for Workflow {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(2))?;
        map.serialize_entry("target", &self.target)?;
        map.serialize_entry("root", &self.root)?;
        map.end()
    }
}

// ---- validation ------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Rule {
    RootNotActivity,
    LevelChain,
    LevelBeyondTarget,
    PrematureLeaf,
    DuplicateId,
    EmptyId,
    HandlerOnInnerNode,
    EmptyHandlerRef,
    /// A handler_ref no registry provides; reported by loaders, not by
    /// [`validate_hierarchy`].
    UnknownHandler,
    LevelMismatch,
}

impl Rule {
    pub(crate) fn is_handler_rule(self) -> bool {
        matches!(self, Rule::HandlerOnInnerNode | Rule::EmptyHandlerRef | Rule::UnknownHandler)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub node_id: String,
    pub rule: Rule,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} at `{}`: {}", self.rule, self.node_id, self.message)
    }
}

/// Checks every structural rule; returns an empty list iff the tree is valid.
pub fn validate_hierarchy(workflow: &Workflow) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let root = &workflow.root;
    if root.level != Level::Activity {
        out.push(Diagnostic {
            node_id: root.id.clone(),
            rule: Rule::RootNotActivity,
            message: format!("root must be an Activity, found {}", root.level),
        });
    }
    let mut seen = HashSet::new();
    check_node(workflow.target, root, true, &mut seen, &mut out);
    out
}

fn check_node<'a>(
    target: Target,
    node: &'a WorkflowNode,
    is_root: bool,
    seen: &mut HashSet<&'a str>,
    out: &mut Vec<Diagnostic>,
) {
    let mut diag = |rule: Rule, message: String| out.push(Diagnostic { node_id: node.id.clone(), rule, message });
    if node.id.is_empty() {
        diag(Rule::EmptyId, format!("node `{}` has an empty id", node.name));
    } else if !seen.insert(&node.id) {
        diag(Rule::DuplicateId, format!("id `{}` is used more than once", node.id));
    }
    if !target.allows(node.level) {
        diag(Rule::LevelBeyondTarget, format!("{} is not allowed in a {:?} workflow", node.level, target));
    }
    if node.is_leaf() {
        if !is_root && !target.is_leaf_level(node.level) {
            diag(Rule::PrematureLeaf, format!("{} `{}` cannot be a leaf", node.level, node.name));
        }
    } else if node.handler_ref.is_some() {
        diag(Rule::HandlerOnInnerNode, format!("{} `{}` has children and a handler_ref", node.level, node.name));
    }
    if node.handler_ref.as_deref() == Some("") {
        diag(Rule::EmptyHandlerRef, "handler_ref is empty".into());
    }
    for child in &node.children {
        if !node.level.child_levels().contains(&child.level) {
            out.push(Diagnostic {
                node_id: child.id.clone(),
                rule: Rule::LevelChain,
                message: format!(
                    "{} `{}` cannot be a child of {} `{}`",
                    child.level, child.name, node.level, node.name
                ),
            });
        }
        check_node(target, child, false, seen, out);
    }
}

// ---- parsing ---------------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    id: String,
    name: String,
    level: String,
    pre: Option<String>,
    post: Option<String>,
    #[serde(default)]
    concurrent: bool,
    #[serde(default)]
    children: Vec<RawNode>,
    handler_ref: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWorkflow {
    target: Target,
    root: RawNode,
}

fn parse_condition(node: &str, which: &str, src: Option<String>) -> Result<ConditionExpr, WorkflowError> {
    match src {
        None => Ok(ConditionExpr::Always),
        Some(s) => {
            ConditionExpr::parse(&s).map_err(|e| WorkflowError::Parse(format!("{which}-condition of `{node}`: {e}")))
        }
    }
}

fn convert(raw: RawNode) -> Result<WorkflowNode, WorkflowError> {
    let level = Level::parse(&raw.level)
        .ok_or_else(|| WorkflowError::Parse(format!("node `{}` has unknown level `{}`", raw.id, raw.level)))?;
    let pre = parse_condition(&raw.id, "pre", raw.pre)?;
    let post = parse_condition(&raw.id, "post", raw.post)?;
    let children = raw.children.into_iter().map(convert).collect::<Result<_, _>>()?;
    Ok(WorkflowNode {
        id: raw.id,
        name: raw.name,
        level,
        pre,
        post,
        concurrent: raw.concurrent,
        children,
        handler_ref: raw.handler_ref,
    })
}

/// Turns a diagnostic list into the matching error, if any.
pub(crate) fn diagnostics_to_error(diags: Vec<Diagnostic>) -> Result<(), WorkflowError> {
    if diags.is_empty() {
        Ok(())
    } else if diags.iter().all(|d| d.rule.is_handler_rule()) {
        Err(WorkflowError::DanglingHandler(diags))
    } else {
        Err(WorkflowError::Hierarchy(diags))
    }
}

/// Parses and validates a workflow document.
pub fn parse_workflow(document: &str) -> Result<Workflow, WorkflowError> {
    let raw: RawWorkflow = serde_json::from_str(document).map_err(|e| WorkflowError::Parse(e.to_string()))?;
    let workflow = Workflow { target: raw.target, root: convert(raw.root)? };
    diagnostics_to_error(validate_hierarchy(&workflow))?;
    Ok(workflow)
}

/// Returns a new tree with the node at `path` replaced by `replacement`.
pub fn substitute_subtree(
    workflow: &Workflow,
    path: &NodePath,
    replacement: WorkflowNode,
) -> Result<Workflow, WorkflowError> {
    let existing = workflow.get(path).ok_or_else(|| WorkflowError::Path(path.to_string()))?;
    if existing.level != replacement.level {
        return Err(WorkflowError::Hierarchy(vec![Diagnostic {
            node_id: replacement.id.clone(),
            rule: Rule::LevelMismatch,
            message: format!("cannot replace {} `{}` with {}", existing.level, existing.name, replacement.level),
        }]));
    }
    let mut out = workflow.clone();
    let mut slot = &mut out.root;
    for &i in &path.0 {
        slot = &mut slot.children[i];
    }
    *slot = replacement;
    diagnostics_to_error(validate_hierarchy(&out))?;
    Ok(out)
}
