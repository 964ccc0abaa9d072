//! Partial-order scripts: a goal plus a labeled DAG of steps whose edges are
//! temporal precedence constraints (`a -> b` means `a` must happen before `b`).

mod dot;
mod steps;

use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::cmp::Reverse;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::text::{collapse_whitespace, normalize_label};

pub use dot::{parse_dot, serialize_dot};
pub use steps::parse_steps;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScriptError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported DOT construct at {line}:{column}: {what}")]
    Unsupported {
        line: usize,
        column: usize,
        what: String,
    },
    #[error("cycle detected through {0:?}")]
    Cycle(Vec<String>),
    #[error("duplicate node id `{0}`")]
    DuplicateNodeId(String),
    #[error("edge endpoint `{0}` is not a declared node")]
    DanglingEdge(String),
    #[error("self-edge on `{0}`")]
    SelfEdge(String),
    #[error("invalid label {0:?}: labels must be non-empty single-line text")]
    InvalidLabel(String),
    #[error("edge references unknown node index {0}")]
    UnknownNode(usize),
    #[error("no node labeled `{0}`")]
    NoSuchNode(String),
    #[error("label `{0}` is ambiguous")]
    AmbiguousLabel(String),
}

/// Index of a node inside its script. Ids are synthetic and are never part of
/// an edit command; edits address nodes by label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    id: NodeId,
    label: String,
}

impl Node {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

/// Checks and cleans a step label: trimmed, non-empty, no line breaks.
pub fn clean_label(raw: &str) -> Result<String, ScriptError> {
    let trimmed = raw.trim();
    if trimmed.is_empty() || trimmed.contains(['\n', '\r']) {
        return Err(ScriptError::InvalidLabel(raw.to_owned()));
    }
    Ok(trimmed.to_owned())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OccurrenceRule {
    /// The label must match exactly one node.
    Unique,
    /// Among nodes sharing the label, pick the last in topological order.
    #[default]
    LastInTopologicalOrder,
}

/// A reference to a node by its label text.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NodeRef {
    pub label: String,
    pub rule: OccurrenceRule,
}

impl NodeRef {
    pub fn new(label: impl AsRef<str>) -> Self {
        NodeRef {
            label: collapse_whitespace(label.as_ref()),
            rule: OccurrenceRule::default(),
        }
    }

    pub fn unique(label: impl AsRef<str>) -> Self {
        NodeRef {
            rule: OccurrenceRule::Unique,
            ..NodeRef::new(label)
        }
    }
}

impl fmt::Display for NodeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

/// One entry of a linearized script.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Step {
    pub number: usize,
    pub label: String,
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}. {}", self.number, self.label)
    }
}

/// An immutable, validated script graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Script {
    goal: String,
    nodes: Vec<Node>,
    edges: BTreeSet<(NodeId, NodeId)>,
    succ: Vec<Vec<NodeId>>,
    pred: Vec<Vec<NodeId>>,
    topo: Vec<NodeId>,
}

impl Script {
    /// Builds a script from labels in declaration order and index pairs.
    pub fn new<L, S, E>(goal: &str, labels: L, edges: E) -> Result<Script, ScriptError>
    where
        L: IntoIterator<Item = S>,
        S: AsRef<str>,
        E: IntoIterator<Item = (usize, usize)>,
    {
        let labels = labels
            .into_iter()
            .map(|l| clean_label(l.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        Draft {
            goal: collapse_whitespace(goal),
            labels,
            edges: edges.into_iter().collect(),
        }
        .build()
    }

    /// A totally ordered script: each step precedes the next.
    pub fn chain<L, S>(goal: &str, labels: L) -> Result<Script, ScriptError>
    where
        L: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let labels: Vec<S> = labels.into_iter().collect();
        let n = labels.len();
        Script::new(goal, labels, (1..n).map(|i| (i - 1, i)))
    }

    pub fn empty(goal: &str) -> Script {
        Script::new(goal, Vec::<&str>::new(), []).expect("empty script is valid")
    }

    pub fn goal(&self) -> &str {
        &self.goal
    }

    pub fn with_goal(&self, goal: &str) -> Script {
        let mut s = self.clone();
        s.goal = collapse_whitespace(goal);
        s
    }

    /// The same graph with every label (and the goal) passed through `f`.
    pub fn map_text<F: FnMut(&str) -> String>(&self, mut f: F) -> Result<Script, ScriptError> {
        let mut draft = self.to_draft();
        draft.goal = collapse_whitespace(&f(&self.goal));
        for label in &mut draft.labels {
            *label = collapse_whitespace(&f(label));
        }
        draft.build()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn label(&self, id: NodeId) -> &str {
        &self.nodes[id.0].label
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.nodes.iter().map(|n| n.label.as_str())
    }

    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, from: NodeId, to: NodeId) -> bool {
        self.edges.contains(&(from, to))
    }

    pub fn successors(&self, id: NodeId) -> &[NodeId] {
        &self.succ[id.0]
    }

    pub fn predecessors(&self, id: NodeId) -> &[NodeId] {
        &self.pred[id.0]
    }

    /// True when a directed path leads from `from` to `to` (length ≥ 1).
    pub fn has_path(&self, from: NodeId, to: NodeId) -> bool {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![from];
        while let Some(n) = stack.pop() {
            for &s in &self.succ[n.0] {
                if s == to {
                    return true;
                }
                if !seen[s.0] {
                    seen[s.0] = true;
                    stack.push(s);
                }
            }
        }
        false
    }

    /// Nodes in topological order, ties broken by declaration order.
    pub fn topological_order(&self) -> &[NodeId] {
        &self.topo
    }

    /// Position of each node in [`Script::topological_order`].
    pub fn topo_positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.nodes.len()];
        for (i, id) in self.topo.iter().enumerate() {
            pos[id.0] = i;
        }
        pos
    }

    pub fn linearize(&self) -> Vec<Step> {
        self.topo
            .iter()
            .enumerate()
            .map(|(i, id)| Step {
                number: i + 1,
                label: self.label(*id).to_owned(),
            })
            .collect()
    }

    /// Numbered step list, one step per line.
    pub fn to_step_list(&self) -> String {
        self.linearize()
            .iter()
            .map(Step::to_string)
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn to_dot(&self) -> String {
        serialize_dot(self)
    }

    pub fn from_dot(text: &str) -> Result<Script, ScriptError> {
        parse_dot(text)
    }

    /// All nodes whose normalized label equals the normalized `label`.
    pub fn find_label(&self, label: &str) -> Vec<NodeId> {
        let wanted = normalize_label(label);
        self.nodes
            .iter()
            .filter(|n| normalize_label(&n.label) == wanted)
            .map(|n| n.id)
            .collect()
    }

    pub fn contains_label(&self, label: &str) -> bool {
        !self.find_label(label).is_empty()
    }

    pub fn resolve(&self, node: &NodeRef) -> Result<NodeId, ScriptError> {
        let matches = self.find_label(&node.label);
        match (matches.len(), node.rule) {
            (0, _) => Err(ScriptError::NoSuchNode(node.label.clone())),
            (1, _) => Ok(matches[0]),
            (_, OccurrenceRule::Unique) => Err(ScriptError::AmbiguousLabel(node.label.clone())),
            (_, OccurrenceRule::LastInTopologicalOrder) => {
                let pos = self.topo_positions();
                Ok(*matches.iter().max_by_key(|id| pos[id.0]).unwrap())
            }
        }
    }

    pub fn has_duplicate_labels(&self) -> bool {
        let mut seen = BTreeSet::new();
        self.nodes.iter().any(|n| !seen.insert(normalize_label(&n.label)))
    }

    /// Label-level equality for scripts without duplicate labels.
    pub fn canonical_equal(&self, other: &Script) -> Result<bool, ScriptError> {
        for s in [self, other] {
            if let Some(label) = s.first_duplicate_label() {
                return Err(ScriptError::AmbiguousLabel(label));
            }
        }
        Ok(self.equivalent(other))
    }

    /// Equality up to node ids and declaration order: same goal, same label
    /// multiset and an edge-preserving matching between equally labeled nodes.
    /// Unlike [`Script::canonical_equal`] this also accepts duplicate labels.
    pub fn equivalent(&self, other: &Script) -> bool {
        if self.goal != other.goal
            || self.nodes.len() != other.nodes.len()
            || self.edges.len() != other.edges.len()
        {
            return false;
        }
        let groups_a = self.label_groups();
        let groups_b = other.label_groups();
        if groups_a.len() != groups_b.len()
            || groups_a
                .iter()
                .zip(&groups_b)
                .any(|((la, a), (lb, b))| la != lb || a.len() != b.len())
        {
            return false;
        }
        let order: Vec<NodeId> = self.nodes.iter().map(|n| n.id).collect();
        let candidates: Vec<&Vec<NodeId>> = order
            .iter()
            .map(|id| &groups_b[&normalize_label(self.label(*id))])
            .collect();
        let mut mapping: Vec<Option<NodeId>> = vec![None; self.nodes.len()];
        let mut used = vec![false; other.nodes.len()];
        self.match_from(other, 0, &order, &candidates, &mut mapping, &mut used)
    }

    fn match_from(
        &self,
        other: &Script,
        depth: usize,
        order: &[NodeId],
        candidates: &[&Vec<NodeId>],
        mapping: &mut Vec<Option<NodeId>>,
        used: &mut Vec<bool>,
    ) -> bool {
        if depth == order.len() {
            return true;
        }
        let a = order[depth];
        for &b in candidates[depth] {
            if used[b.0] {
                continue;
            }
            let consistent = order[..depth].iter().all(|&prev| {
                let pb = mapping[prev.0].unwrap();
                self.has_edge(prev, a) == other.has_edge(pb, b)
                    && self.has_edge(a, prev) == other.has_edge(b, pb)
            });
            if !consistent {
                continue;
            }
            mapping[a.0] = Some(b);
            used[b.0] = true;
            if self.match_from(other, depth + 1, order, candidates, mapping, used) {
                return true;
            }
            mapping[a.0] = None;
            used[b.0] = false;
        }
        false
    }

    fn label_groups(&self) -> BTreeMap<String, Vec<NodeId>> {
        let mut groups: BTreeMap<String, Vec<NodeId>> = BTreeMap::new();
        for n in &self.nodes {
            groups.entry(normalize_label(&n.label)).or_default().push(n.id);
        }
        groups
    }

    fn first_duplicate_label(&self) -> Option<String> {
        let mut seen = BTreeSet::new();
        self.nodes
            .iter()
            .find(|n| !seen.insert(normalize_label(&n.label)))
            .map(|n| n.label.clone())
    }

    pub(crate) fn to_draft(&self) -> Draft {
        Draft {
            goal: self.goal.clone(),
            labels: self.nodes.iter().map(|n| n.label.clone()).collect(),
            edges: self.edges.iter().map(|(a, b)| (a.0, b.0)).collect(),
        }
    }
}

impl fmt::Display for Script {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_dot())
    }
}

impl Serialize for Script {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_dot())
    }
}

impl<'de> Deserialize<'de> for Script {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_dot(&text).map_err(serde::de::Error::custom)
    }
}

/// Mutable working copy used while building or editing a script.
#[derive(Debug, Clone, Default)]
pub(crate) struct Draft {
    pub goal: String,
    pub labels: Vec<String>,
    pub edges: BTreeSet<(usize, usize)>,
}

impl Draft {
    /// Inserts a node at `position` in declaration order, shifting later ids.
    pub fn insert_node(&mut self, position: usize, label: String) -> usize {
        self.labels.insert(position, label);
        self.edges = self
            .edges
            .iter()
            .map(|&(a, b)| (shift_up(a, position), shift_up(b, position)))
            .collect();
        position
    }

    /// Removes a node and its incident edges, shifting later ids down.
    pub fn remove_node(&mut self, index: usize) {
        self.labels.remove(index);
        self.edges = self
            .edges
            .iter()
            .filter(|&&(a, b)| a != index && b != index)
            .map(|&(a, b)| (shift_down(a, index), shift_down(b, index)))
            .collect();
    }

    pub fn predecessors(&self, index: usize) -> Vec<usize> {
        self.edges.iter().filter(|e| e.1 == index).map(|e| e.0).collect()
    }

    pub fn successors(&self, index: usize) -> Vec<usize> {
        self.edges.iter().filter(|e| e.0 == index).map(|e| e.1).collect()
    }

    pub fn build(self) -> Result<Script, ScriptError> {
        let n = self.labels.len();
        let mut nodes = Vec::with_capacity(n);
        for (i, label) in self.labels.into_iter().enumerate() {
            nodes.push(Node {
                id: NodeId(i),
                label: clean_label(&label)?,
            });
        }
        let mut succ = vec![Vec::new(); n];
        let mut pred = vec![Vec::new(); n];
        let mut edges = BTreeSet::new();
        for (a, b) in self.edges {
            if a >= n {
                return Err(ScriptError::UnknownNode(a));
            }
            if b >= n {
                return Err(ScriptError::UnknownNode(b));
            }
            if a == b {
                return Err(ScriptError::SelfEdge(nodes[a].label.clone()));
            }
            if edges.insert((NodeId(a), NodeId(b))) {
                succ[a].push(NodeId(b));
                pred[b].push(NodeId(a));
            }
        }
        let topo = topological_sort(&succ, &pred).map_err(|stuck| {
            ScriptError::Cycle(stuck.iter().map(|i| nodes[*i].label.clone()).collect())
        })?;
        Ok(Script {
            goal: collapse_whitespace(&self.goal),
            nodes,
            edges,
            succ,
            pred,
            topo,
        })
    }
}

fn shift_up(i: usize, at: usize) -> usize {
    if i >= at {
        i + 1
    } else {
        i
    }
}

fn shift_down(i: usize, removed: usize) -> usize {
    if i > removed {
        i - 1
    } else {
        i
    }
}

/// Kahn's algorithm with a min-heap on declaration index. On a cycle, returns
/// the nodes that could not be ordered.
fn topological_sort(succ: &[Vec<NodeId>], pred: &[Vec<NodeId>]) -> Result<Vec<NodeId>, Vec<usize>> {
    let n = succ.len();
    let mut indegree: Vec<usize> = pred.iter().map(Vec::len).collect();
    let mut ready: BinaryHeap<Reverse<usize>> =
        (0..n).filter(|&i| indegree[i] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(i)) = ready.pop() {
        order.push(NodeId(i));
        for s in &succ[i] {
            indegree[s.0] -= 1;
            if indegree[s.0] == 0 {
                ready.push(Reverse(s.0));
            }
        }
    }
    if order.len() == n {
        Ok(order)
    } else {
        Err((0..n).filter(|&i| indegree[i] > 0).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(steps: &[Step]) -> Vec<&str> {
        steps.iter().map(|s| s.label.as_str()).collect()
    }

    #[test]
    fn chain_linearizes_in_order() {
        let s = Script::chain("", ["a", "b", "c"]).unwrap();
        assert_eq!(s.to_step_list(), "1. a\n2. b\n3. c");
    }

    #[test]
    fn diamond_ties_follow_declaration_order() {
        let s = Script::new("", ["a", "b", "c", "d"], [(0, 1), (0, 2), (1, 3), (2, 3)]).unwrap();
        assert_eq!(labels(&s.linearize()), ["a", "b", "c", "d"]);
        let s = Script::new("", ["a", "c", "b", "d"], [(0, 1), (0, 2), (1, 3), (2, 3)]).unwrap();
        assert_eq!(labels(&s.linearize()), ["a", "c", "b", "d"]);
    }

    #[test]
    fn rejects_invalid_graphs() {
        assert!(matches!(
            Script::new("", ["a", "b"], [(0, 1), (1, 0)]),
            Err(ScriptError::Cycle(_))
        ));
        assert!(matches!(Script::new("", ["a"], [(0, 0)]), Err(ScriptError::SelfEdge(_))));
        assert!(matches!(Script::new("", ["a"], [(0, 3)]), Err(ScriptError::UnknownNode(3))));
        assert!(matches!(Script::new("", ["  "], []), Err(ScriptError::InvalidLabel(_))));
        assert!(matches!(Script::new("", ["a\nb"], []), Err(ScriptError::InvalidLabel(_))));
    }

    #[test]
    fn duplicate_edges_collapse() {
        let s = Script::new("", ["a", "b"], [(0, 1), (0, 1)]).unwrap();
        assert_eq!(s.edge_count(), 1);
    }

    #[test]
    fn resolve_picks_last_duplicate_in_topological_order() {
        // the later "pick up the pen" is the redundant one
        let s = Script::chain("", ["grab a pen", "pick up the pen", "write", "Pick up  the pen"]).unwrap();
        assert_eq!(s.resolve(&NodeRef::new("pick up the pen")).unwrap(), NodeId(3));
        assert!(matches!(
            s.resolve(&NodeRef::unique("pick up the pen")),
            Err(ScriptError::AmbiguousLabel(_))
        ));
        assert_eq!(s.resolve(&NodeRef::new("write")).unwrap(), NodeId(2));
        assert!(matches!(s.resolve(&NodeRef::new("fly")), Err(ScriptError::NoSuchNode(_))));
    }

    #[test]
    fn canonical_equality_ignores_declaration_order_and_case() {
        let a = Script::new("g", ["a", "b", "c"], [(0, 1), (1, 2)]).unwrap();
        let b = Script::new("g", ["C", "B", "A"], [(2, 1), (1, 0)]).unwrap();
        assert!(a.canonical_equal(&b).unwrap());
        let c = Script::chain("g", ["a", "c", "b"]).unwrap();
        assert!(!a.canonical_equal(&c).unwrap());
        let d = a.with_goal("other goal");
        assert!(!a.canonical_equal(&d).unwrap());
    }

    #[test]
    fn canonical_equality_refuses_duplicate_labels() {
        let a = Script::chain("", ["x", "y", "x"]).unwrap();
        assert!(matches!(a.canonical_equal(&a), Err(ScriptError::AmbiguousLabel(_))));
        assert!(a.equivalent(&a));
    }

    #[test]
    fn equivalence_matches_duplicate_labels_structurally() {
        let a = Script::new("", ["x", "y", "x"], [(0, 1)]).unwrap();
        let b = Script::new("", ["x", "x", "y"], [(1, 2)]).unwrap();
        let c = Script::new("", ["x", "x", "y"], [(2, 1)]).unwrap();
        assert!(a.equivalent(&b));
        assert!(!a.equivalent(&c));
    }

    #[test]
    fn paths() {
        let s = Script::chain("", ["a", "b", "c"]).unwrap();
        assert!(s.has_path(NodeId(0), NodeId(2)));
        assert!(!s.has_path(NodeId(2), NodeId(0)));
        assert!(!s.has_path(NodeId(1), NodeId(1)));
    }

    #[test]
    fn draft_insert_and_remove_shift_ids() {
        let s = Script::chain("", ["a", "b", "c"]).unwrap();
        let mut d = s.to_draft();
        d.insert_node(1, "n".into());
        assert_eq!(d.edges.iter().copied().collect::<Vec<_>>(), [(0, 2), (2, 3)]);
        d.remove_node(1);
        assert_eq!(d.build().unwrap(), s);
    }
}
