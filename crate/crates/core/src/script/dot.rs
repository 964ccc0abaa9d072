//! A small DOT subset: one `digraph` with node statements (optionally carrying
//! a `label` attribute) and `->` edge chains.

use std::collections::{HashMap, HashSet};

use super::{clean_label, Draft, Script, ScriptError};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Id(String),
    Quoted(String),
    Arrow,
    UndirectedEdge,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Equals,
    Semi,
    Comma,
    Eof,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    column: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            chars: src.chars().peekable(),
            line: 1,
            column: 1,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn error(&self, line: usize, column: usize, message: impl Into<String>) -> ScriptError {
        ScriptError::Syntax {
            line,
            column,
            message: message.into(),
        }
    }

    fn tokens(mut self) -> Result<Vec<Spanned>, ScriptError> {
        let mut out = Vec::new();
        loop {
            self.skip_trivia()?;
            let (line, column) = (self.line, self.column);
            let Some(c) = self.bump() else {
                out.push(Spanned {
                    tok: Tok::Eof,
                    line,
                    column,
                });
                return Ok(out);
            };
            let tok = match c {
                '{' => Tok::LBrace,
                '}' => Tok::RBrace,
                '[' => Tok::LBracket,
                ']' => Tok::RBracket,
                '=' => Tok::Equals,
                ';' => Tok::Semi,
                ',' => Tok::Comma,
                '-' => match self.chars.peek() {
                    Some('>') => {
                        self.bump();
                        Tok::Arrow
                    }
                    Some('-') => {
                        self.bump();
                        Tok::UndirectedEdge
                    }
                    _ => return Err(self.error(line, column, "expected `->`")),
                },
                '"' => Tok::Quoted(self.quoted(line, column)?),
                c if is_id_char(c) => {
                    let mut id = String::from(c);
                    while let Some(&n) = self.chars.peek() {
                        if !is_id_char(n) {
                            break;
                        }
                        id.push(n);
                        self.bump();
                    }
                    Tok::Id(id)
                }
                other => return Err(self.error(line, column, format!("unexpected character {other:?}"))),
            };
            out.push(Spanned { tok, line, column });
        }
    }

    fn skip_trivia(&mut self) -> Result<(), ScriptError> {
        loop {
            match self.chars.peek() {
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some('/') => {
                    let (line, column) = (self.line, self.column);
                    let mut ahead = self.chars.clone();
                    ahead.next();
                    match ahead.next() {
                        Some('/') => {
                            while let Some(c) = self.bump() {
                                if c == '\n' {
                                    break;
                                }
                            }
                        }
                        Some('*') => {
                            self.bump();
                            self.bump();
                            let mut prev = '\0';
                            loop {
                                match self.bump() {
                                    Some('/') if prev == '*' => break,
                                    Some(c) => prev = c,
                                    None => return Err(self.error(line, column, "unterminated comment")),
                                }
                            }
                        }
                        _ => return Err(self.error(line, column, "unexpected `/`")),
                    }
                }
                _ => return Ok(()),
            }
        }
    }

    fn quoted(&mut self, line: usize, column: usize) -> Result<String, ScriptError> {
        let mut s = String::new();
        loop {
            match self.bump() {
                Some('"') => return Ok(s),
                Some('\\') => match self.bump() {
                    Some('"') => s.push('"'),
                    Some('\\') => s.push('\\'),
                    Some('n') => s.push('\n'),
                    Some(other) => {
                        s.push('\\');
                        s.push(other);
                    }
                    None => break,
                },
                Some(c) => s.push(c),
                None => break,
            }
        }
        Err(self.error(line, column, "unterminated string"))
    }
}

fn is_id_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '.'
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

#[derive(Default)]
struct Graph {
    ids: HashMap<String, usize>,
    labels: Vec<String>,
    declared: HashSet<usize>,
    edges: Vec<(usize, usize)>,
    labeled_declarations: bool,
}

impl Graph {
    fn node(&mut self, id: &str) -> usize {
        if let Some(&i) = self.ids.get(id) {
            return i;
        }
        let i = self.labels.len();
        self.ids.insert(id.to_owned(), i);
        self.labels.push(id.to_owned());
        i
    }
}

impl Parser {
    fn peek(&self) -> &Spanned {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn syntax(at: &Spanned, message: impl Into<String>) -> ScriptError {
        ScriptError::Syntax {
            line: at.line,
            column: at.column,
            message: message.into(),
        }
    }

    fn unsupported(at: &Spanned, what: impl Into<String>) -> ScriptError {
        ScriptError::Unsupported {
            line: at.line,
            column: at.column,
            what: what.into(),
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<Spanned, ScriptError> {
        let t = self.next();
        if t.tok == tok {
            Ok(t)
        } else {
            Err(Self::syntax(&t, format!("expected {what}")))
        }
    }

    fn identifier(&mut self) -> Result<Option<String>, ScriptError> {
        match &self.peek().tok {
            Tok::Id(s) | Tok::Quoted(s) => {
                let s = s.clone();
                self.next();
                Ok(Some(s))
            }
            _ => Ok(None),
        }
    }

    fn parse(mut self) -> Result<Script, ScriptError> {
        let head = self.next();
        match &head.tok {
            Tok::Id(k) if k.eq_ignore_ascii_case("digraph") => {}
            Tok::Id(k) if k.eq_ignore_ascii_case("graph") => {
                return Err(Self::unsupported(&head, "undirected graph"))
            }
            Tok::Id(k) if k.eq_ignore_ascii_case("strict") => {
                return Err(Self::unsupported(&head, "strict graph"))
            }
            _ => return Err(Self::syntax(&head, "expected `digraph`")),
        }
        let goal = self.identifier()?.unwrap_or_default();
        self.expect(Tok::LBrace, "`{`")?;
        let mut graph = Graph::default();
        loop {
            let t = self.peek().clone();
            match &t.tok {
                Tok::RBrace => {
                    self.next();
                    break;
                }
                Tok::Semi => {
                    self.next();
                }
                Tok::Id(k)
                    if ["subgraph", "node", "edge", "graph"]
                        .iter()
                        .any(|kw| k.eq_ignore_ascii_case(kw)) =>
                {
                    return Err(Self::unsupported(&t, format!("`{k}` statement")));
                }
                Tok::Id(_) | Tok::Quoted(_) => self.statement(&mut graph)?,
                Tok::LBrace => return Err(Self::unsupported(&t, "anonymous subgraph")),
                Tok::Eof => return Err(Self::syntax(&t, "unexpected end of input, expected `}`")),
                _ => return Err(Self::syntax(&t, "expected a node or edge statement")),
            }
        }
        let tail = self.next();
        if tail.tok != Tok::Eof {
            return Err(Self::syntax(&tail, "trailing input after `}`"));
        }
        if graph.labeled_declarations {
            let mut dangling: Vec<(&String, &usize)> = graph
                .ids
                .iter()
                .filter(|(_, i)| !graph.declared.contains(i))
                .collect();
            dangling.sort_by_key(|(_, i)| **i);
            if let Some((id, _)) = dangling.first() {
                return Err(ScriptError::DanglingEdge((*id).clone()));
            }
        }
        let labels = graph
            .labels
            .iter()
            .map(|l| clean_label(l))
            .collect::<Result<Vec<_>, _>>()?;
        Draft {
            goal,
            labels,
            edges: graph.edges.into_iter().collect(),
        }
        .build()
    }

    fn statement(&mut self, graph: &mut Graph) -> Result<(), ScriptError> {
        let first_tok = self.peek().clone();
        let first = self.identifier()?.expect("caller checked identifier");
        match self.peek().tok {
            Tok::Arrow => {
                let mut from = graph.node(&first);
                while self.peek().tok == Tok::Arrow {
                    self.next();
                    let at = self.peek().clone();
                    let to_id = self
                        .identifier()?
                        .ok_or_else(|| Self::syntax(&at, "expected a node after `->`"))?;
                    let to = graph.node(&to_id);
                    graph.edges.push((from, to));
                    from = to;
                }
                if self.peek().tok == Tok::LBracket {
                    return Err(Self::unsupported(self.peek(), "edge attributes"));
                }
            }
            Tok::UndirectedEdge => return Err(Self::unsupported(self.peek(), "undirected edge `--`")),
            Tok::Equals => return Err(Self::unsupported(&first_tok, "graph attribute")),
            _ => {
                let index = graph.node(&first);
                if !graph.declared.insert(index) {
                    return Err(ScriptError::DuplicateNodeId(first));
                }
                if self.peek().tok == Tok::LBracket {
                    self.next();
                    if let Some(label) = self.attributes()? {
                        graph.labels[index] = label;
                        graph.labeled_declarations = true;
                    }
                }
            }
        }
        if self.peek().tok == Tok::Semi {
            self.next();
        }
        Ok(())
    }

    /// Parses `label = "..." ]`; the opening bracket is already consumed.
    fn attributes(&mut self) -> Result<Option<String>, ScriptError> {
        let mut label = None;
        loop {
            let t = self.next();
            match &t.tok {
                Tok::RBracket => return Ok(label),
                Tok::Comma | Tok::Semi => {}
                Tok::Id(key) if key == "label" => {
                    self.expect(Tok::Equals, "`=`")?;
                    let at = self.peek().clone();
                    label = Some(
                        self.identifier()?
                            .ok_or_else(|| Self::syntax(&at, "expected a label value"))?,
                    );
                }
                Tok::Id(key) | Tok::Quoted(key) => {
                    return Err(Self::unsupported(&t, format!("attribute `{key}`")))
                }
                _ => return Err(Self::syntax(&t, "expected an attribute or `]`")),
            }
        }
    }
}

/// Parses the supported DOT subset into a validated [`Script`]. The graph
/// name, when present, becomes the goal.
pub fn parse_dot(text: &str) -> Result<Script, ScriptError> {
    let toks = Lexer::new(text).tokens()?;
    Parser { toks, pos: 0 }.parse()
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

/// Canonical DOT text. Nodes are declared in declaration order, then edges
/// sorted by endpoint ids. Scripts with duplicate labels fall back to
/// `nK [label="..."]` declarations so every node keeps its identity.
pub fn serialize_dot(s: &Script) -> String {
    let mut head = String::from("digraph ");
    if !s.goal().is_empty() {
        head.push_str(&quote(s.goal()));
        head.push(' ');
    }
    head.push('{');
    if s.is_empty() {
        head.push_str(" }");
        return head;
    }
    let by_id = s.has_duplicate_labels();
    let name = |i: usize| {
        if by_id {
            format!("n{i}")
        } else {
            quote(s.label(super::NodeId(i)))
        }
    };
    let mut out = head;
    out.push('\n');
    for node in s.nodes() {
        if by_id {
            out.push_str(&format!("  n{} [label={}];\n", node.id().0, quote(node.label())));
        } else {
            out.push_str(&format!("  {};\n", quote(node.label())));
        }
    }
    for (a, b) in s.edges() {
        out.push_str(&format!("  {} -> {};\n", name(a.0), name(b.0)));
    }
    out.push('}');
    out
}
