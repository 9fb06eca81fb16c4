use std::fmt;

use serde::Serialize;

use super::model::{NodePath, Workflow, WorkflowNode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EditKind {
    Insert,
    Delete,
    Replace,
}

/// One subtree edit turning `a` into `b`.
///
/// `path` is expressed in `a`'s tree for deletes and replaces. For inserts it
/// is the matched parent's path in `a` extended with the new child's index in
/// `b`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Edit {
    pub kind: EditKind,
    pub path: NodePath,
    /// Human-readable `/`-joined node names of the edit location.
    pub names: String,
}

impl fmt::Display for Edit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} {} ({})", self.kind, self.path, self.names)
    }
}

/// Top-down subtree diff. Nodes are matched by `(level, name)`; subtrees that
/// are deep-equal up to ids produce no edits.
pub fn diff_workflows(a: &Workflow, b: &Workflow) -> Vec<Edit> {
    let mut edits = Vec::new();
    let names = a.root.name.clone();
    diff_nodes(&a.root, &b.root, NodePath::root(), &names, &mut edits);
    edits
}

fn same_key(a: &WorkflowNode, b: &WorkflowNode) -> bool {
    a.level == b.level && a.name == b.name
}

fn diff_nodes(a: &WorkflowNode, b: &WorkflowNode, path: NodePath, names: &str, out: &mut Vec<Edit>) {
    if !same_key(a, b) || !a.same_attributes(b) {
        out.push(Edit { kind: EditKind::Replace, path, names: names.to_owned() });
        return;
    }
    if a.same_shape(b) {
        return;
    }
    // Longest common subsequence of children by (level, name).
    let (n, m) = (a.children.len(), b.children.len());
    let mut lcs = vec![vec![0usize; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            lcs[i][j] = if same_key(&a.children[i], &b.children[j]) {
                lcs[i + 1][j + 1] + 1
            } else {
                lcs[i + 1][j].max(lcs[i][j + 1])
            };
        }
    }
    let (mut i, mut j) = (0, 0);
    while i < n || j < m {
        if i < n && j < m && same_key(&a.children[i], &b.children[j]) {
            let child_names = format!("{names}/{}", a.children[i].name);
            diff_nodes(&a.children[i], &b.children[j], path.child(i), &child_names, out);
            i += 1;
            j += 1;
        } else if j < m && (i == n || lcs[i][j + 1] >= lcs[i + 1][j]) {
            out.push(Edit {
                kind: EditKind::Insert,
                path: path.child(j),
                names: format!("{names}/{}", b.children[j].name),
            });
            j += 1;
        } else {
            out.push(Edit {
                kind: EditKind::Delete,
                path: path.child(i),
                names: format!("{names}/{}", a.children[i].name),
            });
            i += 1;
        }
    }
}
