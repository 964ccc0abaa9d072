use std::sync::LazyLock;

use regex::Regex;

use super::{CorrectionRequest, Corrector, CorrectorError, Proposal, DEFAULT_JACCARD_THRESHOLD};
use crate::edit::{parse_edit, EditCommand};
use crate::script::{NodeId, Script};
use crate::text::{collapse_whitespace, content_jaccard, content_tokens, normalize_label};

/// Deterministic rule-based corrector.
///
/// Rules, first match wins:
/// 0. feedback that is itself an edit string is taken literally;
/// 1. "X before Y": reorder, order or insert depending on whether X names a step;
/// 2. a negation cue ("don't", "not right", "redundant", ...) removes the step it names;
/// 3. "after X, (then) Y" inserts Y after X;
/// 4. "X and Y can happen in any order" makes X and Y unordered;
/// otherwise `NoOp`.
#[derive(Debug, Clone)]
pub struct KeywordCorrector {
    pub threshold: f64,
}

impl Default for KeywordCorrector {
    fn default() -> Self {
        KeywordCorrector {
            threshold: DEFAULT_JACCARD_THRESHOLD,
        }
    }
}

const FILLERS: &[&str] = &[
    "the feedback is",
    "a person needs to",
    "a person has to",
    "a person should",
    "a person must",
    "people need to",
    "a person",
    "you will need to",
    "you'll need to",
    "you need to",
    "you have to",
    "you must",
    "you should",
    "they need to",
    "they have to",
    "they must",
    "they should",
    "make sure to",
    "make sure you",
    "remember to",
    "don't forget to",
    "it is necessary to",
    "need to",
    "needs to",
    "have to",
    "has to",
    "must",
    "should",
    "include",
    "first",
    "then",
    "they",
    "you",
    "we",
    "to",
];

const NEGATION_CUES: &[&str] = &[
    "not right",
    "not needed",
    "not necessary",
    "no need to",
    "unnecessary",
    "redundant",
    "shouldn't",
    "should not",
    "wouldn't",
    "would not",
    "don't",
    "do not",
    "doesn't",
    "does not",
    "can't",
    "cannot",
    "needn't",
];

const REDUNDANCY_CUES: &[&str] = &["redundant", "repeat", "twice", "duplicate", "already"];

const CLAUSE_BREAKS: &[&str] = &[
    " in order to ",
    " because ",
    " since ",
    " if ",
    " when ",
    " so ",
    " as ",
    ",",
    ".",
    ";",
    "!",
];

static AFTER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?:.*?\s)?after (?P<x>[^,]+?)(?:,\s*|\s+)(?:(?:they|you|we|a person) )?(?:should )?then (?P<y>.+)$").unwrap()
});
static AFTER_COMMA: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?:.*?\s)?after (?P<x>[^,]+), (?P<y>.+)$").unwrap());
static ANY_ORDER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?P<a>.+?) and (?P<b>.+?) (?:can|could|may|might) (?:happen|be done|occur|go) (?:in any order|in either order|at the same time|in parallel)").unwrap()
});

fn normalize_feedback(text: &str) -> String {
    collapse_whitespace(&text.to_lowercase().replace(['\u{2018}', '\u{2019}'], "'"))
}

/// Strips leading filler phrases and trailing punctuation.
fn clean_phrase(text: &str) -> String {
    let mut s = text.trim().trim_matches(|c: char| c.is_ascii_punctuation() && c != '\'').trim().to_owned();
    loop {
        let before = s.clone();
        for filler in FILLERS {
            if let Some(rest) = s.strip_prefix(filler) {
                if rest.is_empty() || rest.starts_with(' ') {
                    s = rest.trim_start().to_owned();
                }
            }
        }
        if let Some(rest) = s.strip_suffix(" first") {
            s = rest.to_owned();
        }
        if s == before {
            break;
        }
    }
    s.trim_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace()).to_owned()
}

fn cut_clause(text: &str) -> &str {
    let end = CLAUSE_BREAKS
        .iter()
        .filter_map(|b| text.find(b))
        .min()
        .unwrap_or(text.len());
    &text[..end]
}

impl KeywordCorrector {
    /// The step whose label best matches `phrase` by content-word Jaccard,
    /// if any reaches the threshold. Later steps win ties.
    pub fn best_match(&self, script: &Script, phrase: &str) -> Option<NodeId> {
        if content_tokens(phrase).is_empty() {
            return None;
        }
        let mut best: Option<(f64, NodeId)> = None;
        for id in script.topological_order() {
            let score = content_jaccard(phrase, script.label(*id));
            if best.is_none_or(|(s, _)| score >= s) {
                best = Some((score, *id));
            }
        }
        best.filter(|(s, _)| *s >= self.threshold).map(|(_, id)| id)
    }

    fn before_rule(&self, script: &Script, fb: &str) -> Option<Proposal> {
        let (left, right) = fb.split_once(" before ")?;
        let left = left.rsplit(',').next().unwrap_or(left);
        let x_text = clean_phrase(left);
        let y_text = clean_phrase(cut_clause(right));
        let y = self.best_match(script, &y_text)?;
        let label = |id: NodeId| script.label(id).to_owned();
        if x_text.is_empty() {
            return None;
        }
        match self.best_match(script, &x_text) {
            Some(x) if x != y => {
                if script.has_path(y, x) {
                    Some(Proposal::edit(EditCommand::reorder(label(y), label(x))))
                } else if !script.has_path(x, y) {
                    Some(Proposal::edit(EditCommand::remove_partial_order(label(x), label(y))))
                } else if !script.contains_label(&x_text) {
                    Some(Proposal::edit(EditCommand::insert_before(&x_text, label(y))))
                } else {
                    Some(Proposal::noop(format!("`{}` already precedes `{}`", label(x), label(y))))
                }
            }
            Some(_) => None,
            None => Some(Proposal::edit(EditCommand::insert_before(&x_text, label(y)))),
        }
    }

    fn negation_rule(&self, script: &Script, fb: &str) -> Option<Proposal> {
        let (pos, cue) = NEGATION_CUES
            .iter()
            .filter_map(|c| fb.find(c).map(|p| (p, *c)))
            .min_by_key(|(p, c)| (*p, std::cmp::Reverse(c.len())))?;
        let after = fb[pos + cue.len()..].trim_start_matches([':', ' ', '-']);
        let phrase = clean_phrase(cut_clause(after));
        if let Some(id) = self.best_match(script, &phrase) {
            return Some(Proposal::edit(EditCommand::remove(script.label(id))));
        }
        if REDUNDANCY_CUES.iter().any(|c| fb.contains(c)) {
            return self.redundant_step(script);
        }
        None
    }

    /// The later of the two most similar steps.
    fn redundant_step(&self, script: &Script) -> Option<Proposal> {
        let order = script.topological_order();
        let mut best: Option<(f64, NodeId)> = None;
        for (i, a) in order.iter().enumerate() {
            for b in &order[i + 1..] {
                let score = if normalize_label(script.label(*a)) == normalize_label(script.label(*b)) {
                    1.0
                } else {
                    content_jaccard(script.label(*a), script.label(*b))
                };
                if best.is_none_or(|(s, _)| score > s) {
                    best = Some((score, *b));
                }
            }
        }
        best.filter(|(s, _)| *s >= 0.5)
            .map(|(_, id)| Proposal::edit(EditCommand::remove(script.label(id))))
    }

    fn after_rule(&self, script: &Script, fb: &str) -> Option<Proposal> {
        let caps = AFTER.captures(fb).or_else(|| AFTER_COMMA.captures(fb))?;
        let x = self.best_match(script, &clean_phrase(&caps["x"]))?;
        let y_text = clean_phrase(cut_clause(&caps["y"]));
        if y_text.is_empty() || content_tokens(&y_text).is_empty() {
            return None;
        }
        Some(Proposal::edit(EditCommand::insert_after(y_text, script.label(x))))
    }

    fn any_order_rule(&self, script: &Script, fb: &str) -> Option<Proposal> {
        let caps = ANY_ORDER.captures(fb)?;
        let a = self.best_match(script, &clean_phrase(&caps["a"]))?;
        let b = self.best_match(script, &clean_phrase(&caps["b"]))?;
        let (a, b) = if script.has_edge(b, a) { (b, a) } else { (a, b) };
        Some(Proposal::edit(EditCommand::add_partial_order(script.label(a), script.label(b))))
    }
}

impl Corrector for KeywordCorrector {
    fn name(&self) -> &str {
        "keyword"
    }

    fn propose(&self, request: &CorrectionRequest) -> Result<Proposal, CorrectorError> {
        let Some(raw) = request.feedback().filter(|f| !f.trim().is_empty()) else {
            return Ok(Proposal::noop("no feedback"));
        };
        let script = request.script();
        let literal = raw.trim().trim_start_matches("The feedback is").trim();
        if let Ok(edit) = parse_edit(literal) {
            return Ok(Proposal::edit(edit));
        }
        let fb = normalize_feedback(raw);
        let proposal = self
            .before_rule(script, &fb)
            .or_else(|| self.negation_rule(script, &fb))
            .or_else(|| self.after_rule(script, &fb))
            .or_else(|| self.any_order_rule(script, &fb))
            .unwrap_or_else(|| Proposal::noop("no rule matched the feedback"));
        Ok(proposal)
    }
}
