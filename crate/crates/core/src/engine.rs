//! Deterministic application of edits to scripts, and the inverse: recovering
//! the single edit that turns one script into another.

use std::collections::BTreeMap;

use crate::edit::{EditCommand, EditKind};
use crate::script::{NodeId, NodeRef, Script, ScriptError};
use crate::text::normalize_label;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ApplyError {
    #[error("cannot resolve location: {0}")]
    Unresolved(ScriptError),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("edit would produce an invalid script: {0}")]
    InvalidResult(ScriptError),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DiffError {
    #[error("target is not reachable with a single edit")]
    NotSingleEdit,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EnumerateError {
    #[error("script has {nodes} nodes, above the enumeration bound of {bound}")]
    TooLarge { nodes: usize, bound: usize },
}

/// Applies `edit` to `script`, returning a new script.
pub fn apply(script: &Script, edit: &EditCommand) -> Result<Script, ApplyError> {
    edit.validate()
        .map_err(|e| ApplyError::Precondition(e.to_string()))?;
    let resolve = |r: &NodeRef| script.resolve(r).map_err(ApplyError::Unresolved);
    let mut draft = script.to_draft();
    match edit {
        EditCommand::NoOp => return Ok(script.clone()),
        EditCommand::InsertNodeBefore { node, anchor } | EditCommand::InsertNodeAfter { node, anchor } => {
            let anchor = resolve(anchor)?.index();
            if script.contains_label(node) {
                return Err(ApplyError::Precondition(format!("step `{node}` already exists")));
            }
            let before = edit.kind() == EditKind::InsertNodeBefore;
            let new = draft.insert_node(if before { anchor } else { anchor + 1 }, node.clone());
            let anchor = if before { anchor + 1 } else { anchor };
            draft.edges = draft
                .edges
                .iter()
                .map(|&(a, b)| match before {
                    true if b == anchor => (a, new),
                    false if a == anchor => (new, b),
                    _ => (a, b),
                })
                .collect();
            draft.edges.insert(if before { (new, anchor) } else { (anchor, new) });
        }
        EditCommand::RemoveNode { target } => {
            let target = resolve(target)?.index();
            let preds = draft.predecessors(target);
            let succs = draft.successors(target);
            for &p in &preds {
                for &s in &succs {
                    draft.edges.insert((p, s));
                }
            }
            draft.remove_node(target);
        }
        EditCommand::ReorderEdge { first, second } => {
            let (a, b) = distinct_pair(script, first, second)?;
            draft.labels.swap(a.index(), b.index());
        }
        EditCommand::AddPartialOrder { first, second } => {
            let (a, b) = distinct_pair(script, first, second)?;
            if !script.has_edge(a, b) {
                return Err(ApplyError::Precondition(format!(
                    "no edge `{}` -> `{}` to relax",
                    script.label(a),
                    script.label(b)
                )));
            }
            let (ai, bi) = (a.index(), b.index());
            draft.edges.remove(&(ai, bi));
            for p in script.predecessors(a) {
                draft.edges.insert((p.index(), bi));
            }
            for s in script.successors(b) {
                draft.edges.insert((ai, s.index()));
            }
        }
        EditCommand::RemovePartialOrder { first, second } => {
            let (a, b) = distinct_pair(script, first, second)?;
            if script.has_path(a, b) || script.has_path(b, a) {
                return Err(ApplyError::Precondition(format!(
                    "`{}` and `{}` are already ordered",
                    script.label(a),
                    script.label(b)
                )));
            }
            let (ai, bi) = (a.index(), b.index());
            draft.edges.insert((ai, bi));
            for p in script.predecessors(a) {
                draft.edges.remove(&(p.index(), bi));
            }
            for s in script.successors(b) {
                draft.edges.remove(&(ai, s.index()));
            }
        }
    }
    draft.build().map_err(ApplyError::InvalidResult)
}

fn distinct_pair(script: &Script, first: &NodeRef, second: &NodeRef) -> Result<(NodeId, NodeId), ApplyError> {
    let a = script.resolve(first).map_err(ApplyError::Unresolved)?;
    let b = script.resolve(second).map_err(ApplyError::Unresolved)?;
    if a == b {
        return Err(ApplyError::Precondition("both locations name the same step".into()));
    }
    Ok((a, b))
}

/// True when `edit` applies to `script` and yields a script equivalent to `target`.
pub fn reproduces(script: &Script, edit: &EditCommand, target: &Script) -> bool {
    apply(script, edit).is_ok_and(|out| out.equivalent(target))
}

/// One node per distinct label, the one a label reference resolves to, in
/// topological order.
fn addressable_nodes(script: &Script) -> Vec<NodeId> {
    let mut seen = std::collections::BTreeSet::new();
    let mut nodes: Vec<NodeId> = script
        .topological_order()
        .iter()
        .rev()
        .filter(|id| seen.insert(normalize_label(script.label(**id))))
        .copied()
        .collect();
    nodes.reverse();
    nodes
}

fn label_counts(script: &Script) -> BTreeMap<String, (usize, String)> {
    let mut counts: BTreeMap<String, (usize, String)> = BTreeMap::new();
    for label in script.labels() {
        counts
            .entry(normalize_label(label))
            .or_insert_with(|| (0, label.to_owned()))
            .0 += 1;
    }
    counts
}

/// Recovers the edit that turns `from` into `to`.
///
/// Detection order: no change gives `NoOp`; one added step gives an insert
/// (`before` preferred over `after`); one missing step gives a removal; the
/// same steps give a reorder, then an added, then a removed partial order.
pub fn diff(from: &Script, to: &Script) -> Result<EditCommand, DiffError> {
    if from.equivalent(to) {
        return Ok(EditCommand::NoOp);
    }
    let (have, want) = (label_counts(from), label_counts(to));
    let anchors = addressable_nodes(from);
    let candidates: Vec<EditCommand> = if to.len() == from.len() + 1 {
        let added: Vec<&String> = want
            .iter()
            .filter(|(k, (n, _))| have.get(*k).map_or(0, |h| h.0) < *n)
            .map(|(_, (_, raw))| raw)
            .collect();
        match added.as_slice() {
            [label] if !have.contains_key(&normalize_label(label)) => {
                let before = anchors.iter().map(|a| EditCommand::insert_before(label, from.label(*a)));
                let after = anchors.iter().map(|a| EditCommand::insert_after(label, from.label(*a)));
                before.chain(after).collect()
            }
            _ => return Err(DiffError::NotSingleEdit),
        }
    } else if from.len() == to.len() + 1 {
        let removed: Vec<&String> = have
            .iter()
            .filter(|(k, (n, _))| want.get(*k).map_or(0, |w| w.0) < *n)
            .map(|(_, (_, raw))| raw)
            .collect();
        match removed.as_slice() {
            [label] => vec![EditCommand::remove(label)],
            _ => return Err(DiffError::NotSingleEdit),
        }
    } else if from.len() == to.len() && have.keys().eq(want.keys()) {
        pair_edits(from, &anchors)
    } else {
        return Err(DiffError::NotSingleEdit);
    };
    candidates
        .into_iter()
        .find(|e| reproduces(from, e, to))
        .ok_or(DiffError::NotSingleEdit)
}

/// Reorders over unordered pairs, then added and removed partial orders,
/// restricted to label-addressable nodes.
fn pair_edits(script: &Script, anchors: &[NodeId]) -> Vec<EditCommand> {
    let mut out = Vec::new();
    for (i, &a) in anchors.iter().enumerate() {
        for &b in &anchors[i + 1..] {
            out.push(EditCommand::reorder(script.label(a), script.label(b)));
        }
    }
    for &a in anchors {
        for &b in anchors {
            if script.has_edge(a, b) {
                out.push(EditCommand::add_partial_order(script.label(a), script.label(b)));
            }
        }
    }
    for &a in anchors {
        for &b in anchors {
            if a != b && !script.has_path(a, b) && !script.has_path(b, a) {
                out.push(EditCommand::remove_partial_order(script.label(a), script.label(b)));
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct EnumerateOptions {
    pub max_nodes: usize,
    /// Text used as the argument of enumerated insert edits.
    pub insert_label: String,
}

impl Default for EnumerateOptions {
    fn default() -> Self {
        EnumerateOptions {
            max_nodes: 12,
            insert_label: "new step".into(),
        }
    }
}

/// Every single edit whose preconditions hold on `script`: removals, reorders
/// of unordered pairs, partial-order additions on edges, partial-order
/// removals on unordered pairs, and inserts before/after every step using
/// `options.insert_label` as the new step.
pub fn enumerate_edits(script: &Script, options: &EnumerateOptions) -> Result<Vec<EditCommand>, EnumerateError> {
    if script.len() > options.max_nodes {
        return Err(EnumerateError::TooLarge {
            nodes: script.len(),
            bound: options.max_nodes,
        });
    }
    let anchors = addressable_nodes(script);
    let mut out: Vec<EditCommand> = anchors
        .iter()
        .map(|a| EditCommand::remove(script.label(*a)))
        .collect();
    out.extend(pair_edits(script, &anchors));
    if !script.contains_label(&options.insert_label) {
        for a in &anchors {
            out.push(EditCommand::insert_before(&options.insert_label, script.label(*a)));
            out.push(EditCommand::insert_after(&options.insert_label, script.label(*a)));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(labels: &[&str]) -> Script {
        Script::chain("g", labels).unwrap()
    }

    fn count(edits: &[EditCommand], kind: EditKind) -> usize {
        edits.iter().filter(|e| e.kind() == kind).count()
    }

    #[test]
    fn noop_is_identity() {
        let s = chain(&["a", "b"]);
        assert_eq!(apply(&s, &EditCommand::NoOp).unwrap(), s);
    }

    #[test]
    fn insert_before_rewires_incoming_edges() {
        let s = Script::new("g", ["p", "q", "l", "s"], [(0, 2), (1, 2), (2, 3)]).unwrap();
        let out = apply(&s, &EditCommand::insert_before("n", "l")).unwrap();
        let want = Script::new("g", ["p", "q", "n", "l", "s"], [(0, 2), (1, 2), (2, 3), (3, 4)]).unwrap();
        assert!(out.equivalent(&want));
        assert_eq!(out.labels().collect::<Vec<_>>(), ["p", "q", "n", "l", "s"]);
    }

    #[test]
    fn insert_after_rewires_outgoing_edges() {
        let s = Script::new("g", ["p", "l", "s", "t"], [(0, 1), (1, 2), (1, 3)]).unwrap();
        let out = apply(&s, &EditCommand::insert_after("n", "l")).unwrap();
        let want = Script::new("g", ["p", "l", "n", "s", "t"], [(0, 1), (1, 2), (2, 3), (2, 4)]).unwrap();
        assert!(out.equivalent(&want));
    }

    #[test]
    fn insert_rejects_existing_label() {
        let s = chain(&["a", "b"]);
        assert!(matches!(
            apply(&s, &EditCommand::insert_before("A", "b")),
            Err(ApplyError::Precondition(_))
        ));
    }

    #[test]
    fn remove_splices_neighbors() {
        let s = Script::new("g", ["p", "q", "x", "s", "t"], [(0, 2), (1, 2), (2, 3), (2, 4)]).unwrap();
        let out = apply(&s, &EditCommand::remove("x")).unwrap();
        let want = Script::new("g", ["p", "q", "s", "t"], [(0, 2), (0, 3), (1, 2), (1, 3)]).unwrap();
        assert!(out.equivalent(&want));
    }

    #[test]
    fn remove_targets_last_duplicate() {
        let s = chain(&["a", "x", "b", "x", "c"]);
        let out = apply(&s, &EditCommand::remove("x")).unwrap();
        assert_eq!(out.to_step_list(), "1. a\n2. x\n3. b\n4. c");
    }

    #[test]
    fn reorder_swaps_labels_only() {
        let s = chain(&["a", "b", "c"]);
        let out = apply(&s, &EditCommand::reorder("a", "c")).unwrap();
        assert_eq!(out.to_step_list(), "1. c\n2. b\n3. a");
        assert_eq!(out.edge_count(), 2);
    }

    #[test]
    fn add_partial_order_makes_a_diamond() {
        let s = chain(&["p", "a", "b", "s"]);
        let out = apply(&s, &EditCommand::add_partial_order("a", "b")).unwrap();
        let want = Script::new("g", ["p", "a", "b", "s"], [(0, 1), (0, 2), (1, 3), (2, 3)]).unwrap();
        assert!(out.equivalent(&want));
        let back = apply(&out, &EditCommand::remove_partial_order("a", "b")).unwrap();
        assert!(back.equivalent(&s));
    }

    #[test]
    fn partial_order_preconditions() {
        let s = chain(&["a", "b", "c"]);
        assert!(matches!(
            apply(&s, &EditCommand::add_partial_order("a", "c")),
            Err(ApplyError::Precondition(_))
        ));
        assert!(matches!(
            apply(&s, &EditCommand::remove_partial_order("a", "c")),
            Err(ApplyError::Precondition(_))
        ));
        assert!(matches!(
            apply(&s, &EditCommand::remove("zzz")),
            Err(ApplyError::Unresolved(ScriptError::NoSuchNode(_)))
        ));
    }

    #[test]
    fn apply_leaves_input_untouched() {
        let s = chain(&["a", "b", "c"]);
        let copy = s.clone();
        apply(&s, &EditCommand::remove("b")).unwrap();
        assert_eq!(s, copy);
    }

    #[test]
    fn diff_of_identical_scripts_is_noop() {
        let s = chain(&["a", "b"]);
        assert_eq!(diff(&s, &s).unwrap(), EditCommand::NoOp);
    }

    #[test]
    fn diff_prefers_insert_before() {
        let x = chain(&["a", "b"]);
        let y = chain(&["a", "n", "b"]);
        assert_eq!(diff(&x, &y).unwrap(), EditCommand::insert_before("n", "b"));
        let y = chain(&["a", "b", "n"]);
        assert_eq!(diff(&x, &y).unwrap(), EditCommand::insert_after("n", "b"));
    }

    #[test]
    fn diff_rejects_two_edit_distance() {
        let x = chain(&["a", "b", "c"]);
        let y = apply(&apply(&x, &EditCommand::remove("a")).unwrap(), &EditCommand::remove("b")).unwrap();
        assert_eq!(diff(&x, &y), Err(DiffError::NotSingleEdit));
        let y = chain(&["a", "b", "d"]);
        assert_eq!(diff(&x, &y), Err(DiffError::NotSingleEdit));
    }

    #[test]
    fn enumerate_three_chain() {
        let edits = enumerate_edits(&chain(&["a", "b", "c"]), &EnumerateOptions::default()).unwrap();
        assert_eq!(count(&edits, EditKind::RemoveNode), 3);
        assert_eq!(count(&edits, EditKind::ReorderEdge), 3);
        assert_eq!(count(&edits, EditKind::AddPartialOrder), 2);
        assert_eq!(count(&edits, EditKind::RemovePartialOrder), 0);
        assert_eq!(count(&edits, EditKind::InsertNodeBefore), 3);
        assert_eq!(count(&edits, EditKind::InsertNodeAfter), 3);
    }

    #[test]
    fn enumerate_single_node() {
        let edits = enumerate_edits(&chain(&["a"]), &EnumerateOptions::default()).unwrap();
        assert_eq!(count(&edits, EditKind::RemoveNode), 1);
        assert!(edits.iter().all(|e| e.locations().len() < 2));
    }

    #[test]
    fn enumerate_diamond_includes_both_directions() {
        let s = Script::new("g", ["a", "b", "c", "d"], [(0, 1), (0, 2), (1, 3), (2, 3)]).unwrap();
        let edits = enumerate_edits(&s, &EnumerateOptions::default()).unwrap();
        assert!(edits.contains(&EditCommand::remove_partial_order("b", "c")));
        assert!(edits.contains(&EditCommand::remove_partial_order("c", "b")));
        assert_eq!(count(&edits, EditKind::RemovePartialOrder), 2);
    }

    #[test]
    fn enumerate_respects_bound() {
        let s = chain(&["a", "b", "c"]);
        let opts = EnumerateOptions {
            max_nodes: 2,
            ..Default::default()
        };
        assert_eq!(
            enumerate_edits(&s, &opts),
            Err(EnumerateError::TooLarge { nodes: 3, bound: 2 })
        );
    }
}
