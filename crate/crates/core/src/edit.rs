//! The edit-command language: a single typed graph edit, its textual surface
//! form, and the (type, argument, location) decomposition used for scoring.
//!
//! Canonical surface forms (keywords are case-insensitive on input):
//!
//! ```text
//! insert node '<ARG>' before '<LOC>'
//! insert node '<ARG>' after '<LOC>'
//! remove node '<LOC>'
//! reorder edge between '< <A> , <B> >'
//! add partial order between '< <A> , <B> >'
//! remove partial order between '< <A> , <B> >'
//! noop
//! ```
//!
//! The parser also accepts `⟨ ⟩`, LaTeX `$\langle$ $\rangle$`, curly and back
//! quotes, missing quotes and irregular spacing.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::script::NodeRef;
use crate::text::collapse_whitespace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditKind {
    InsertNodeBefore,
    InsertNodeAfter,
    RemoveNode,
    ReorderEdge,
    AddPartialOrder,
    RemovePartialOrder,
    NoOp,
}

impl EditKind {
    /// The phrase compared by the edit-type metric.
    pub fn phrase(self) -> &'static str {
        match self {
            EditKind::InsertNodeBefore => "insert node before",
            EditKind::InsertNodeAfter => "insert node after",
            EditKind::RemoveNode => "remove node",
            EditKind::ReorderEdge => "reorder edge",
            EditKind::AddPartialOrder => "add partial order",
            EditKind::RemovePartialOrder => "remove partial order",
            EditKind::NoOp => "noop",
        }
    }
}

impl fmt::Display for EditKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.phrase())
    }
}

/// The annotated error classes of the feedback data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorType {
    MissingStep,
    WrongStep,
    WrongOrder,
    AddPartialOrder,
    RemovePartialOrder,
}

impl ErrorType {
    pub const ALL: [ErrorType; 5] = [
        ErrorType::MissingStep,
        ErrorType::WrongStep,
        ErrorType::WrongOrder,
        ErrorType::AddPartialOrder,
        ErrorType::RemovePartialOrder,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorType::MissingStep => "missing_step",
            ErrorType::WrongStep => "wrong_step",
            ErrorType::WrongOrder => "wrong_order",
            ErrorType::AddPartialOrder => "add_partial_order",
            ErrorType::RemovePartialOrder => "remove_partial_order",
        }
    }

    /// The error class repaired by an edit of this kind; `None` for no-ops.
    pub fn for_kind(kind: EditKind) -> Option<ErrorType> {
        match kind {
            EditKind::InsertNodeBefore | EditKind::InsertNodeAfter => Some(ErrorType::MissingStep),
            EditKind::RemoveNode => Some(ErrorType::WrongStep),
            EditKind::ReorderEdge => Some(ErrorType::WrongOrder),
            EditKind::AddPartialOrder => Some(ErrorType::AddPartialOrder),
            EditKind::RemovePartialOrder => Some(ErrorType::RemovePartialOrder),
            EditKind::NoOp => None,
        }
    }
}

impl fmt::Display for ErrorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ErrorType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_lowercase().replace([' ', '-'], "_");
        ErrorType::ALL
            .into_iter()
            .find(|t| t.as_str() == key)
            .or(match key.as_str() {
                "wrong_ordering" => Some(ErrorType::WrongOrder),
                _ => None,
            })
            .ok_or_else(|| format!("unknown error type `{s}`"))
    }
}

/// A single graph edit. Nodes are addressed by label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub enum EditCommand {
    InsertNodeBefore { node: String, anchor: NodeRef },
    InsertNodeAfter { node: String, anchor: NodeRef },
    RemoveNode { target: NodeRef },
    /// Swaps the labels of two nodes, keeping the graph shape.
    ReorderEdge { first: NodeRef, second: NodeRef },
    /// Makes two consecutive steps unordered with respect to each other.
    AddPartialOrder { first: NodeRef, second: NodeRef },
    /// Orders two unordered steps, `first` before `second`.
    RemovePartialOrder { first: NodeRef, second: NodeRef },
    #[default]
    NoOp,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EditError {
    #[error("cannot parse edit at bytes {}..{}: {message}", span.start, span.end)]
    Parse { message: String, span: Range<usize> },
    #[error("invalid edit: {0}")]
    Invalid(String),
}

impl EditCommand {
    pub fn insert_before(node: impl AsRef<str>, anchor: impl AsRef<str>) -> Self {
        EditCommand::InsertNodeBefore {
            node: collapse_whitespace(node.as_ref()),
            anchor: NodeRef::new(anchor),
        }
    }

    pub fn insert_after(node: impl AsRef<str>, anchor: impl AsRef<str>) -> Self {
        EditCommand::InsertNodeAfter {
            node: collapse_whitespace(node.as_ref()),
            anchor: NodeRef::new(anchor),
        }
    }

    pub fn remove(target: impl AsRef<str>) -> Self {
        EditCommand::RemoveNode {
            target: NodeRef::new(target),
        }
    }

    pub fn reorder(first: impl AsRef<str>, second: impl AsRef<str>) -> Self {
        EditCommand::ReorderEdge {
            first: NodeRef::new(first),
            second: NodeRef::new(second),
        }
    }

    pub fn add_partial_order(first: impl AsRef<str>, second: impl AsRef<str>) -> Self {
        EditCommand::AddPartialOrder {
            first: NodeRef::new(first),
            second: NodeRef::new(second),
        }
    }

    pub fn remove_partial_order(first: impl AsRef<str>, second: impl AsRef<str>) -> Self {
        EditCommand::RemovePartialOrder {
            first: NodeRef::new(first),
            second: NodeRef::new(second),
        }
    }

    /// Builds a pair edit of the given kind. Panics on non-pair kinds.
    pub fn pair(kind: EditKind, first: impl AsRef<str>, second: impl AsRef<str>) -> Self {
        match kind {
            EditKind::ReorderEdge => EditCommand::reorder(first, second),
            EditKind::AddPartialOrder => EditCommand::add_partial_order(first, second),
            EditKind::RemovePartialOrder => EditCommand::remove_partial_order(first, second),
            other => panic!("{other} is not a pair edit"),
        }
    }

    pub fn kind(&self) -> EditKind {
        match self {
            EditCommand::InsertNodeBefore { .. } => EditKind::InsertNodeBefore,
            EditCommand::InsertNodeAfter { .. } => EditKind::InsertNodeAfter,
            EditCommand::RemoveNode { .. } => EditKind::RemoveNode,
            EditCommand::ReorderEdge { .. } => EditKind::ReorderEdge,
            EditCommand::AddPartialOrder { .. } => EditKind::AddPartialOrder,
            EditCommand::RemovePartialOrder { .. } => EditKind::RemovePartialOrder,
            EditCommand::NoOp => EditKind::NoOp,
        }
    }

    pub fn is_noop(&self) -> bool {
        matches!(self, EditCommand::NoOp)
    }

    /// The inserted step text, for insert edits.
    pub fn arg(&self) -> Option<&str> {
        match self {
            EditCommand::InsertNodeBefore { node, .. } | EditCommand::InsertNodeAfter { node, .. } => {
                Some(node)
            }
            _ => None,
        }
    }

    /// Node references in location order.
    pub fn locations(&self) -> Vec<&NodeRef> {
        match self {
            EditCommand::InsertNodeBefore { anchor, .. } | EditCommand::InsertNodeAfter { anchor, .. } => {
                vec![anchor]
            }
            EditCommand::RemoveNode { target } => vec![target],
            EditCommand::ReorderEdge { first, second }
            | EditCommand::AddPartialOrder { first, second }
            | EditCommand::RemovePartialOrder { first, second } => vec![first, second],
            EditCommand::NoOp => vec![],
        }
    }

    /// Rebuilds the edit with every location label passed through `f`.
    pub fn map_locations<F>(&self, mut f: F) -> EditCommand
    where
        F: FnMut(&NodeRef) -> NodeRef,
    {
        match self {
            EditCommand::InsertNodeBefore { node, anchor } => EditCommand::InsertNodeBefore {
                node: node.clone(),
                anchor: f(anchor),
            },
            EditCommand::InsertNodeAfter { node, anchor } => EditCommand::InsertNodeAfter {
                node: node.clone(),
                anchor: f(anchor),
            },
            EditCommand::RemoveNode { target } => EditCommand::RemoveNode { target: f(target) },
            EditCommand::ReorderEdge { first, second } => EditCommand::ReorderEdge {
                first: f(first),
                second: f(second),
            },
            EditCommand::AddPartialOrder { first, second } => EditCommand::AddPartialOrder {
                first: f(first),
                second: f(second),
            },
            EditCommand::RemovePartialOrder { first, second } => EditCommand::RemovePartialOrder {
                first: f(first),
                second: f(second),
            },
            EditCommand::NoOp => EditCommand::NoOp,
        }
    }

    /// Rebuilds the edit with every piece of text (argument and locations)
    /// passed through `f`.
    pub fn map_text<F>(&self, mut f: F) -> EditCommand
    where
        F: FnMut(&str) -> String,
    {
        let mapped = self.map_locations(|r| NodeRef {
            label: collapse_whitespace(&f(&r.label)),
            rule: r.rule,
        });
        match mapped {
            EditCommand::InsertNodeBefore { node, anchor } => EditCommand::InsertNodeBefore {
                node: collapse_whitespace(&f(&node)),
                anchor,
            },
            EditCommand::InsertNodeAfter { node, anchor } => EditCommand::InsertNodeAfter {
                node: collapse_whitespace(&f(&node)),
                anchor,
            },
            other => other,
        }
    }

    /// Checks the shape invariants: every text has a letter or digit, and
    /// pair locations are distinct.
    pub fn validate(&self) -> Result<(), EditError> {
        let texts = self.arg().into_iter().chain(self.locations().into_iter().map(|l| l.label.as_str()));
        for t in texts {
            if !t.trim().is_empty() && !t.chars().any(char::is_alphanumeric) {
                return Err(EditError::Invalid(format!("`{t}` is not a step")));
            }
        }
        if let Some(arg) = self.arg() {
            if arg.trim().is_empty() {
                return Err(EditError::Invalid("inserted step text is empty".into()));
            }
        }
        let locs = self.locations();
        if locs.iter().any(|l| l.label.trim().is_empty()) {
            return Err(EditError::Invalid("empty location".into()));
        }
        if let [a, b] = locs.as_slice() {
            if crate::text::normalize_label(&a.label) == crate::text::normalize_label(&b.label) {
                return Err(EditError::Invalid(format!(
                    "pair edit needs two distinct steps, got `{}` twice",
                    a.label
                )));
            }
        }
        Ok(())
    }

    pub fn decompose(&self) -> EditComponents {
        let loc_text = match self.locations().as_slice() {
            [one] => one.label.clone(),
            [a, b] => format!("{} , {}", a.label, b.label),
            _ => String::new(),
        };
        EditComponents {
            type_text: self.kind().phrase().to_owned(),
            arg_text: self.arg().map(str::to_owned),
            loc_text,
        }
    }
}

impl fmt::Display for EditCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EditCommand::InsertNodeBefore { node, anchor } => {
                write!(f, "insert node '{node}' before '{anchor}'")
            }
            EditCommand::InsertNodeAfter { node, anchor } => {
                write!(f, "insert node '{node}' after '{anchor}'")
            }
            EditCommand::RemoveNode { target } => write!(f, "remove node '{target}'"),
            EditCommand::ReorderEdge { first, second } => {
                write!(f, "reorder edge between '< {first} , {second} >'")
            }
            EditCommand::AddPartialOrder { first, second } => {
                write!(f, "add partial order between '< {first} , {second} >'")
            }
            EditCommand::RemovePartialOrder { first, second } => {
                write!(f, "remove partial order between '< {first} , {second} >'")
            }
            EditCommand::NoOp => f.write_str("noop"),
        }
    }
}

/// Canonical surface form of an edit.
pub fn serialize_edit(edit: &EditCommand) -> String {
    edit.to_string()
}

const QUOTES: &str = r#"['‘’`"“”]"#;

static KEYWORD: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^\s*(insert\s+node|remove\s+partial\s+order|remove\s+node|reorder\s+edge|add\s+partial\s+order|no-?\s*op|none)\b").unwrap()
});
static INSERT_QUOTED: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(
        r"(?i)^insert node {q}(?P<arg>.+?){q} (?P<dir>before|after) {q}(?P<loc>.+){q}$",
        q = QUOTES
    ))
    .unwrap()
});
static INSERT_BARE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(
        r"(?i)^insert node {q}?(?P<arg>.+?){q}? (?P<dir>before|after) {q}?(?P<loc>.+?){q}?$",
        q = QUOTES
    ))
    .unwrap()
});
static REMOVE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(r"(?i)^remove node {q}?(?P<loc>.+?){q}?$", q = QUOTES)).unwrap()
});
static PAIR_SPACED: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(
        r"(?i)^(?P<kind>reorder edge|add partial order|remove partial order)(?: between)? ?{q}? ?< ?(?P<a>.+?) , (?P<b>.+?) ?> ?{q}?$",
        q = QUOTES
    ))
    .unwrap()
});
static PAIR_LOOSE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(
        r"(?i)^(?P<kind>reorder edge|add partial order|remove partial order)(?: between)? ?{q}? ?< ?(?P<a>.+?) ?, ?(?P<b>.+?) ?> ?{q}?$",
        q = QUOTES
    ))
    .unwrap()
});
static NOOP: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^(no-?\s?op|none)$").unwrap());

fn surface_normalize(text: &str) -> String {
    let replaced = text
        .replace("$\\langle$", "<")
        .replace("$\\rangle$", ">")
        .replace(['⟨', '〈', '‹'], "<")
        .replace(['⟩', '〉', '›'], ">");
    collapse_whitespace(&replaced)
}

fn pair_kind(text: &str) -> EditKind {
    let lower = collapse_whitespace(&text.to_lowercase());
    match lower.as_str() {
        "reorder edge" => EditKind::ReorderEdge,
        "add partial order" => EditKind::AddPartialOrder,
        _ => EditKind::RemovePartialOrder,
    }
}

fn label_of(m: &str) -> String {
    collapse_whitespace(m)
}

/// Parses any accepted surface form into an [`EditCommand`].
pub fn parse_edit(text: &str) -> Result<EditCommand, EditError> {
    let fail = |message: &str| {
        let span = match KEYWORD.find(text) {
            Some(m) => {
                let body_start = m.end() + (text.len() - m.end() - text[m.end()..].trim_start().len());
                body_start..text.trim_end().len().max(body_start)
            }
            None => {
                let start = text.len() - text.trim_start().len();
                start..text.trim_end().len().max(start)
            }
        };
        EditError::Parse {
            message: message.to_owned(),
            span,
        }
    };
    let norm = surface_normalize(text);
    if norm.is_empty() {
        return Err(fail("empty edit"));
    }
    let edit = if NOOP.is_match(&norm) {
        EditCommand::NoOp
    } else if let Some(c) = INSERT_QUOTED.captures(&norm).or_else(|| INSERT_BARE.captures(&norm)) {
        let (node, loc) = (label_of(&c["arg"]), label_of(&c["loc"]));
        if c["dir"].eq_ignore_ascii_case("before") {
            EditCommand::insert_before(node, loc)
        } else {
            EditCommand::insert_after(node, loc)
        }
    } else if let Some(c) = PAIR_SPACED.captures(&norm).or_else(|| PAIR_LOOSE.captures(&norm)) {
        EditCommand::pair(pair_kind(&c["kind"]), label_of(&c["a"]), label_of(&c["b"]))
    } else if let Some(c) = REMOVE.captures(&norm) {
        EditCommand::remove(label_of(&c["loc"]))
    } else if KEYWORD.is_match(text) {
        return Err(fail("malformed arguments"));
    } else {
        return Err(fail("unknown edit type"));
    };
    edit.validate().map_err(|e| fail(&e.to_string()))?;
    Ok(edit)
}

impl FromStr for EditCommand {
    type Err = EditError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_edit(s)
    }
}

impl Serialize for EditCommand {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for EditCommand {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_edit(&text).map_err(serde::de::Error::custom)
    }
}

/// The template pieces of an edit: `<type> over [arg] at <location>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditComponents {
    pub type_text: String,
    pub arg_text: Option<String>,
    pub loc_text: String,
}

impl EditComponents {
    /// Reassembles the canonical edit from its components.
    pub fn recompose(&self) -> Result<EditCommand, EditError> {
        let invalid = || EditError::Invalid(format!("cannot recompose {self:?}"));
        let edit = match (self.type_text.as_str(), &self.arg_text) {
            ("insert node before", Some(arg)) => EditCommand::insert_before(arg, &self.loc_text),
            ("insert node after", Some(arg)) => EditCommand::insert_after(arg, &self.loc_text),
            ("remove node", None) => EditCommand::remove(&self.loc_text),
            ("noop", None) => EditCommand::NoOp,
            (kind @ ("reorder edge" | "add partial order" | "remove partial order"), None) => {
                let (a, b) = self.loc_text.split_once(" , ").ok_or_else(invalid)?;
                EditCommand::pair(pair_kind(kind), a, b)
            }
            _ => return Err(invalid()),
        };
        edit.validate()?;
        Ok(edit)
    }
}
