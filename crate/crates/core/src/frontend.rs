//! Textual grammar format: parsing, pretty-printing, desugaring to the
//! expression graph, and validation.
//!
//! ```text
//! grammar  := rule+                 rule := NAME '=' expr
//! expr     := alt (('|' | '/') alt)*      (no mixing within one chain)
//! alt      := term+                 term := prefix? atom postfix? binding?
//! prefix   := '&' | '~'             postfix := '*' | '+' | '*?'
//! binding  := ':' NAME
//! atom     := STRING | '.' | '[' class ']' | NAME | '(' expr ')'
//!           | 'nested' '(' expr ',' expr ',' expr ')'
//!           | '{' action '}' | '&' '{' action '}' | atom '[' expr ']'
//! ```
//!
//! Strings take single or double quotes with escapes `\' \" \\ \n \t`.
//! An enter bracket must follow its atom without whitespace; a `[` after
//! whitespace starts a character class. `#` comments run to end of line.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::action::{parse_action, unescape_quoted, ActionExpr};
use crate::analysis::{detect_left_recursion, LeftRecReport, SizeTable};
use crate::expr::{
    class_to_string, CharClass, ExprId, ExprNode, ExprPool, Grammar, GrammarBuilder, Merge,
};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RepeatKind {
    Star,
    Plus,
    Lazy,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SurfaceExpr {
    Literal(String),
    Any,
    Class(CharClass),
    Rule(String),
    Seq(Vec<SurfaceExpr>),
    /// `ordered` is PEG `/`; otherwise backtracking `|`.
    Choice {
        ordered: bool,
        alts: Vec<SurfaceExpr>,
    },
    Repeat {
        kind: RepeatKind,
        body: Box<SurfaceExpr>,
    },
    Look {
        negative: bool,
        body: Box<SurfaceExpr>,
    },
    Action(ActionExpr),
    Pred(ActionExpr),
    Bind {
        body: Box<SurfaceExpr>,
        name: String,
    },
    Nested(Box<SurfaceExpr>, Box<SurfaceExpr>, Box<SurfaceExpr>),
    Enter(Box<SurfaceExpr>, Box<SurfaceExpr>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Span {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SurfaceRule {
    pub name: String,
    pub body: SurfaceExpr,
    pub span: Span,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SurfaceGrammar {
    pub rules: Vec<SurfaceRule>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: &'static str,
    pub message: String,
    pub rule: Option<String>,
    pub span: Option<Span>,
}

impl Diagnostic {
    fn error(code: &'static str, message: impl Into<String>) -> Diagnostic {
        Diagnostic {
            severity: Severity::Error,
            code,
            message: message.into(),
            rule: None,
            span: None,
        }
    }

    fn warning(code: &'static str, message: impl Into<String>) -> Diagnostic {
        Diagnostic {
            severity: Severity::Warning,
            code,
            message: message.into(),
            rule: None,
            span: None,
        }
    }

    fn in_rule(mut self, rule: &str) -> Diagnostic {
        self.rule = Some(rule.to_owned());
        self
    }

    fn at(mut self, span: Span) -> Diagnostic {
        self.span = Some(span);
        self
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev}[{}]", self.code)?;
        if let Some(span) = self.span {
            write!(f, " at {span}")?;
        }
        if let Some(rule) = &self.rule {
            write!(f, " in rule `{rule}`")?;
        }
        write!(f, ": {}", self.message)
    }
}

pub fn has_errors(diags: &[Diagnostic]) -> bool {
    diags.iter().any(Diagnostic::is_error)
}

// ---------------------------------------------------------------------------
// Parsing

struct SyntaxError {
    pos: usize,
    message: String,
}

type PResult<T> = Result<T, SyntaxError>;

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

/// Parses grammar text. Syntax errors stop parsing; the rules read so far
/// are returned with the diagnostics.
pub fn parse_grammar(text: &str) -> (SurfaceGrammar, Vec<Diagnostic>) {
    let mut p = Parser { src: text, pos: 0 };
    let mut grammar = SurfaceGrammar::default();
    let mut diags = Vec::new();
    let mut seen = HashSet::new();
    loop {
        p.skip_ws();
        if p.at_end() {
            break;
        }
        let start = p.pos;
        match p.rule() {
            Ok((name, body)) => {
                let span = p.span_of(start);
                if !seen.insert(name.clone()) {
                    diags.push(
                        Diagnostic::error(
                            "duplicate-rule",
                            format!("rule `{name}` is defined twice"),
                        )
                        .in_rule(&name)
                        .at(span),
                    );
                }
                grammar.rules.push(SurfaceRule { name, body, span });
            }
            Err(e) => {
                diags.push(Diagnostic::error("syntax", e.message).at(p.span_of(e.pos)));
                break;
            }
        }
    }
    if grammar.rules.is_empty() && !has_errors(&diags) {
        diags.push(Diagnostic::error(
            "no-start-rule",
            "no start rule: the grammar defines no rules",
        ));
    }
    (grammar, diags)
}

impl<'a> Parser<'a> {
    fn span_of(&self, pos: usize) -> Span {
        let before = &self.src[..pos.min(self.src.len())];
        let line = before.matches('\n').count() + 1;
        let col = before
            .rfind('\n')
            .map_or(before.chars().count(), |i| before[i + 1..].chars().count())
            + 1;
        Span { line, col }
    }

    fn err<T>(&self, message: impl Into<String>) -> PResult<T> {
        Err(SyntaxError {
            pos: self.pos,
            message: message.into(),
        })
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn skip_ws(&mut self) {
        loop {
            let rest = self.rest();
            let trimmed = rest.trim_start();
            self.pos += rest.len() - trimmed.len();
            if trimmed.starts_with('#') {
                self.pos += trimmed.find('\n').unwrap_or(trimmed.len());
            } else {
                return;
            }
        }
    }

    fn eat(&mut self, tok: &str) -> bool {
        self.skip_ws();
        if self.rest().starts_with(tok) {
            self.pos += tok.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: &str) -> PResult<()> {
        if self.eat(tok) {
            Ok(())
        } else {
            self.err(format!("expected `{tok}`"))
        }
    }

    fn name_len(&self) -> usize {
        let rest = self.rest();
        let mut chars = rest.char_indices();
        match chars.next() {
            Some((_, c)) if c.is_ascii_alphabetic() || c == '_' => {}
            _ => return 0,
        }
        chars
            .find(|(_, c)| !(c.is_ascii_alphanumeric() || *c == '_'))
            .map_or(rest.len(), |(i, _)| i)
    }

    fn name(&mut self) -> PResult<String> {
        self.skip_ws();
        let len = self.name_len();
        if len == 0 {
            return self.err("expected a name");
        }
        let name = self.rest()[..len].to_owned();
        self.pos += len;
        Ok(name)
    }

    /// A NAME followed by `=` (but not `==`) starts the next rule.
    fn at_rule_start(&mut self) -> bool {
        self.skip_ws();
        let len = self.name_len();
        if len == 0 {
            return false;
        }
        let after = self.rest()[len..].trim_start();
        after.starts_with('=') && !after.starts_with("==")
    }

    fn rule(&mut self) -> PResult<(String, SurfaceExpr)> {
        let name = self.name()?;
        self.expect("=")?;
        let body = self.expr()?;
        Ok((name, body))
    }

    fn expr(&mut self) -> PResult<SurfaceExpr> {
        let first = self.alt()?;
        let mut alts = vec![first];
        let mut kind: Option<bool> = None;
        loop {
            self.skip_ws();
            let ordered = match self.peek() {
                Some('|') => false,
                Some('/') => true,
                _ => break,
            };
            if kind.is_some_and(|k| k != ordered) {
                return self.err("`|` and `/` cannot be mixed in one choice; use parentheses");
            }
            kind = Some(ordered);
            self.pos += 1;
            alts.push(self.alt()?);
        }
        Ok(match kind {
            None => alts.pop().expect("one alternative"),
            Some(ordered) => SurfaceExpr::Choice { ordered, alts },
        })
    }

    fn alt(&mut self) -> PResult<SurfaceExpr> {
        let mut terms = Vec::new();
        loop {
            self.skip_ws();
            match self.peek() {
                None | Some('|' | '/' | ')' | ',' | ']') => break,
                _ if self.at_rule_start() => break,
                _ => terms.push(self.term()?),
            }
        }
        match terms.len() {
            0 => self.err("expected an expression"),
            1 => Ok(terms.pop().expect("one term")),
            _ => Ok(SurfaceExpr::Seq(terms)),
        }
    }

    fn term(&mut self) -> PResult<SurfaceExpr> {
        self.skip_ws();
        let look = if self.rest().starts_with("&{") {
            None
        } else if self.eat("&") {
            Some(false)
        } else if self.eat("~") {
            Some(true)
        } else {
            None
        };
        let mut e = self.atom()?;
        while self.rest().starts_with('[') {
            self.pos += 1;
            let inner = self.expr()?;
            self.expect("]")?;
            e = SurfaceExpr::Enter(Box::new(e), Box::new(inner));
        }
        let kind = if self.eat("*?") {
            Some(RepeatKind::Lazy)
        } else if self.eat("*") {
            Some(RepeatKind::Star)
        } else if self.eat("+") {
            Some(RepeatKind::Plus)
        } else {
            None
        };
        if let Some(kind) = kind {
            e = SurfaceExpr::Repeat {
                kind,
                body: Box::new(e),
            };
        }
        if let Some(negative) = look {
            e = SurfaceExpr::Look {
                negative,
                body: Box::new(e),
            };
        }
        if self.eat(":") {
            let name = self.name()?;
            e = SurfaceExpr::Bind {
                body: Box::new(e),
                name,
            };
        }
        Ok(e)
    }

    fn atom(&mut self) -> PResult<SurfaceExpr> {
        self.skip_ws();
        let Some(c) = self.peek() else {
            return self.err("unexpected end of grammar");
        };
        match c {
            '\'' | '"' => {
                let Some((s, len)) = unescape_quoted(self.rest()) else {
                    return self.err("unterminated string");
                };
                self.pos += len;
                Ok(SurfaceExpr::Literal(s))
            }
            '.' => {
                self.pos += 1;
                Ok(SurfaceExpr::Any)
            }
            '[' => self.class(),
            '(' => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(")")?;
                Ok(e)
            }
            '{' => Ok(SurfaceExpr::Action(self.action_body(false)?)),
            '&' => {
                self.pos += 1;
                Ok(SurfaceExpr::Pred(self.action_body(true)?))
            }
            _ if self.name_len() > 0 => {
                let name = self.name()?;
                if name == "nested" && self.rest().trim_start().starts_with('(') {
                    self.expect("(")?;
                    let a = self.expr()?;
                    self.expect(",")?;
                    let b = self.expr()?;
                    self.expect(",")?;
                    let c = self.expr()?;
                    self.expect(")")?;
                    return Ok(SurfaceExpr::Nested(Box::new(a), Box::new(b), Box::new(c)));
                }
                Ok(SurfaceExpr::Rule(name))
            }
            other => self.err(format!("unexpected character `{other}`")),
        }
    }

    fn action_body(&mut self, predicate: bool) -> PResult<ActionExpr> {
        debug_assert!(self.rest().starts_with('{'));
        let open = self.pos;
        let rest = self.rest();
        let mut depth = 0;
        let mut end = None;
        let mut iter = rest.char_indices();
        while let Some((i, c)) = iter.next() {
            match c {
                '{' => depth += 1,
                '}' => {
                    depth -= 1;
                    if depth == 0 {
                        end = Some(i);
                        break;
                    }
                }
                '\'' | '"' => {
                    let Some((_, len)) = unescape_quoted(&rest[i..]) else {
                        return self.err("unterminated string in action");
                    };
                    let stop = i + len;
                    while iter.clone().next().is_some_and(|(j, _)| j < stop) {
                        iter.next();
                    }
                }
                _ => {}
            }
        }
        let Some(end) = end else {
            return self.err("unterminated action");
        };
        let body = &rest[1..end];
        self.pos += end + 1;
        parse_action(body, predicate).map_err(|e| SyntaxError {
            pos: open + 1 + e.offset,
            message: e.message,
        })
    }

    fn class(&mut self) -> PResult<SurfaceExpr> {
        self.pos += 1;
        let negated = if self.rest().starts_with('^') {
            self.pos += 1;
            true
        } else {
            false
        };
        let mut ranges = Vec::new();
        loop {
            let lo = match self.class_char()? {
                None => break,
                Some(c) => c,
            };
            let hi = if self.rest().starts_with('-') && !self.rest().starts_with("-]") {
                self.pos += 1;
                match self.class_char()? {
                    Some(c) => c,
                    None => return self.err("unterminated range in character class"),
                }
            } else {
                lo
            };
            if hi < lo {
                return self.err("empty range in character class");
            }
            ranges.push((lo, hi));
        }
        Ok(SurfaceExpr::Class(CharClass { ranges, negated }))
    }

    /// Next class member, or `None` at the closing bracket.
    fn class_char(&mut self) -> PResult<Option<char>> {
        let mut chars = self.rest().chars();
        match chars.next() {
            None => self.err("unterminated character class"),
            Some(']') => {
                self.pos += 1;
                Ok(None)
            }
            Some('\\') => {
                let Some(esc) = chars.next() else {
                    return self.err("unterminated character class");
                };
                self.pos += 1 + esc.len_utf8();
                Ok(Some(match esc {
                    'n' => '\n',
                    't' => '\t',
                    other => other,
                }))
            }
            Some(c) => {
                self.pos += c.len_utf8();
                Ok(Some(c))
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Printing

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Level {
    Atom,
    Postfix,
    Prefix,
    Term,
    Seq,
    Choice,
}

fn level(e: &SurfaceExpr) -> Level {
    match e {
        SurfaceExpr::Repeat { .. } => Level::Postfix,
        SurfaceExpr::Look { .. } => Level::Prefix,
        SurfaceExpr::Bind { .. } => Level::Term,
        SurfaceExpr::Seq(_) => Level::Seq,
        SurfaceExpr::Choice { .. } => Level::Choice,
        _ => Level::Atom,
    }
}

fn quote(s: &str) -> String {
    let mut out = String::from("'");
    for c in s.chars() {
        match c {
            '\'' => out.push_str("\\'"),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('\'');
    out
}

fn print_at(e: &SurfaceExpr, max: Level, out: &mut String) {
    if level(e) > max {
        out.push('(');
        print_expr(e, out);
        out.push(')');
    } else {
        print_expr(e, out);
    }
}

fn print_expr(e: &SurfaceExpr, out: &mut String) {
    match e {
        SurfaceExpr::Literal(s) => out.push_str(&quote(s)),
        SurfaceExpr::Any => out.push('.'),
        SurfaceExpr::Class(c) => out.push_str(&class_to_string(c)),
        SurfaceExpr::Rule(r) => out.push_str(r),
        SurfaceExpr::Seq(items) => {
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                print_at(item, Level::Term, out);
            }
        }
        SurfaceExpr::Choice { ordered, alts } => {
            let sep = if *ordered { " / " } else { " | " };
            for (i, alt) in alts.iter().enumerate() {
                if i > 0 {
                    out.push_str(sep);
                }
                print_at(alt, Level::Seq, out);
            }
        }
        SurfaceExpr::Repeat { kind, body } => {
            print_at(body, Level::Atom, out);
            out.push_str(match kind {
                RepeatKind::Star => "*",
                RepeatKind::Plus => "+",
                RepeatKind::Lazy => "*?",
            });
        }
        SurfaceExpr::Look { negative, body } => {
            out.push(if *negative { '~' } else { '&' });
            print_at(body, Level::Postfix, out);
        }
        SurfaceExpr::Action(a) => out.push_str(&format!("{{{a}}}")),
        SurfaceExpr::Pred(a) => out.push_str(&format!("&{{{a}}}")),
        SurfaceExpr::Bind { body, name } => {
            print_at(body, Level::Prefix, out);
            out.push(':');
            out.push_str(name);
        }
        SurfaceExpr::Nested(a, b, c) => {
            out.push_str("nested(");
            print_expr(a, out);
            out.push_str(", ");
            print_expr(b, out);
            out.push_str(", ");
            print_expr(c, out);
            out.push(')');
        }
        SurfaceExpr::Enter(src, inner) => {
            print_at(src, Level::Atom, out);
            out.push('[');
            print_expr(inner, out);
            out.push(']');
        }
    }
}

impl fmt::Display for SurfaceExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        print_expr(self, &mut s);
        f.write_str(&s)
    }
}

impl fmt::Display for SurfaceGrammar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for rule in &self.rules {
            writeln!(f, "{} = {}", rule.name, rule.body)?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Desugaring

#[derive(Clone, Copy, Debug, Default)]
pub struct DesugarOptions {
    /// Treat `|` as `/` and make iteration possessive, as in PEG.
    pub peg: bool,
}

pub fn desugar(e: &SurfaceExpr, b: &mut GrammarBuilder, opts: DesugarOptions) -> ExprId {
    match e {
        SurfaceExpr::Literal(s) => b.pool.literal(s),
        SurfaceExpr::Any => b.pool.intern(ExprNode::AnyChar),
        SurfaceExpr::Class(c) => b.pool.intern(ExprNode::Class(c.clone())),
        SurfaceExpr::Rule(r) => b.pool.rule_ref(r),
        SurfaceExpr::Seq(items) => {
            let ids: Vec<_> = items.iter().map(|i| desugar(i, b, opts)).collect();
            b.pool.seq_all(&ids)
        }
        SurfaceExpr::Choice { ordered, alts } => {
            let ids: Vec<_> = alts.iter().map(|a| desugar(a, b, opts)).collect();
            let choice = b.pool.choice_all(&ids);
            if *ordered || opts.peg {
                commit(b, choice)
            } else {
                choice
            }
        }
        SurfaceExpr::Repeat { kind, body } => {
            let e = desugar(body, b, opts);
            let star = |b: &mut GrammarBuilder| {
                if opts.peg {
                    possessive_star(b, e)
                } else {
                    b.star(e)
                }
            };
            match kind {
                RepeatKind::Star => star(b),
                RepeatKind::Plus => {
                    let rest = star(b);
                    b.pool.seq(e, rest)
                }
                RepeatKind::Lazy => b.lazy_star(e),
            }
        }
        SurfaceExpr::Look { negative, body } => {
            let e = desugar(body, b, opts);
            lookahead(&mut b.pool, e, *negative)
        }
        SurfaceExpr::Action(a) => b.pool.intern(ExprNode::Act(a.clone())),
        SurfaceExpr::Pred(a) => b.pool.intern(ExprNode::Pred(a.clone())),
        SurfaceExpr::Bind { body, name } => {
            let e = desugar(body, b, opts);
            b.pool.intern(ExprNode::Bind {
                var: Arc::from(name.as_str()),
                body: e,
            })
        }
        SurfaceExpr::Nested(x, y, z) => {
            let (start, mid, end) = (
                desugar(x, b, opts),
                desugar(y, b, opts),
                desugar(z, b, opts),
            );
            b.pool.intern(ExprNode::Nested { start, mid, end })
        }
        SurfaceExpr::Enter(x, y) => {
            let (source, inner) = (desugar(x, b, opts), desugar(y, b, opts));
            b.pool.intern(ExprNode::Enter { source, inner })
        }
    }
}

/// Empty-delimited nesting: the first success of `e` is final.
fn commit(b: &mut GrammarBuilder, e: ExprId) -> ExprId {
    b.pool.intern(ExprNode::Nested {
        start: ExprPool::EPSILON,
        mid: e,
        end: ExprPool::EPSILON,
    })
}

fn possessive_star(b: &mut GrammarBuilder, e: ExprId) -> ExprId {
    let st = b.fresh_stop();
    let stop = b.pool.intern(ExprNode::Stop(st));
    let choice = b.pool.choice(e, stop);
    let body = commit(b, choice);
    b.pool.intern(ExprNode::Many { stop: st, body })
}

/// `&e` / `~e` as a switch over `Seq(e, success)`.
pub fn lookahead(pool: &mut ExprPool, e: ExprId, negative: bool) -> ExprId {
    let head = pool.seq(e, ExprPool::SUCCESS);
    let (on_success, on_fail) = if negative {
        (ExprPool::FAIL, ExprPool::EPSILON)
    } else {
        (ExprPool::EPSILON, ExprPool::FAIL)
    };
    pool.intern(ExprNode::Switch {
        head,
        on_success,
        on_fail,
        merge: Merge::Identity,
    })
}

/// Desugars every rule of `surface`. `start` defaults to the first rule.
pub fn build_grammar(
    surface: &SurfaceGrammar,
    start: Option<&str>,
    opts: DesugarOptions,
) -> Grammar {
    let mut b = GrammarBuilder::new();
    for rule in surface.rules.iter() {
        if b.rules.contains_key(rule.name.as_str()) {
            continue;
        }
        let body = desugar(&rule.body, &mut b, opts);
        b.define(&rule.name, body);
    }
    let start = start
        .map(str::to_owned)
        .or_else(|| surface.rules.first().map(|r| r.name.clone()));
    b.finish(start.as_deref().unwrap_or(""))
}

/// Parse, desugar and validate in one step. Returns the grammar when no
/// error was reported, with all diagnostics either way.
pub fn load_grammar(
    text: &str,
    start: Option<&str>,
    opts: DesugarOptions,
) -> (Option<Grammar>, Vec<Diagnostic>) {
    let (surface, mut diags) = parse_grammar(text);
    if has_errors(&diags) {
        return (None, diags);
    }
    let g = build_grammar(&surface, start, opts);
    diags.extend(validate(&g));
    let ok = !has_errors(&diags);
    (ok.then_some(g), diags)
}

// ---------------------------------------------------------------------------
// Validation

/// Static checks on a desugared grammar:
///
/// * `no-start-rule`, `unresolved-rule` errors;
/// * `nullable-iteration` error for loops whose body can match nothing;
/// * `lookahead-left-recursion` error when a lookahead reaches a possibly
///   left-recursive rule on its leftmost frontier;
/// * `left-recursion` warning (the caller decides whether to rewrite);
/// * `non-structured` warning for recursion that is neither leftmost, in
///   tail position, nor inside `nested`.
pub fn validate(g: &Grammar) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    if g.rule(g.start()).is_none() {
        diags.push(Diagnostic::error(
            "no-start-rule",
            format!("start rule `{}` is not defined", g.start()),
        ));
    }
    let mut unresolved = false;
    let sizes = SizeTable::new(g);
    for (name, &body) in g.rules() {
        let mut seen = HashSet::new();
        for id in reachable_in_rule(g, body) {
            match g.node(id) {
                ExprNode::RuleRef(target)
                    if g.rule(target).is_none() && seen.insert(target.clone()) =>
                {
                    unresolved = true;
                    diags.push(
                        Diagnostic::error(
                            "unresolved-rule",
                            format!("rule `{target}` is not defined"),
                        )
                        .in_rule(name),
                    );
                }
                ExprNode::Many { stop, body } => {
                    for alt in loop_alternatives(g, *body) {
                        if !matches!(g.node(alt), ExprNode::Stop(s) if s == stop)
                            && sizes.nullable(alt)
                        {
                            diags.push(
                                Diagnostic::error(
                                    "nullable-iteration",
                                    format!(
                                        "iterated expression `{}` can match the empty string",
                                        g.display(alt)
                                    ),
                                )
                                .in_rule(name),
                            );
                        }
                    }
                }
                _ => {}
            }
        }
    }
    if unresolved {
        return diags;
    }
    let report = detect_left_recursion(g);
    check_lookaheads(g, &report, &mut diags);
    for (name, info) in &report.rules {
        if info.direct || !info.cycle.is_empty() {
            diags.push(
                Diagnostic::warning("left-recursion", format!("rule `{name}` is left recursive"))
                    .in_rule(name),
            );
        }
    }
    check_structure(g, &sizes, &mut diags);
    diags
}

/// Nodes reachable from `body` without following rule references.
pub(crate) fn reachable_in_rule(g: &Grammar, body: ExprId) -> Vec<ExprId> {
    let mut seen = HashSet::new();
    let mut stack = vec![body];
    let mut out = Vec::new();
    while let Some(id) = stack.pop() {
        if seen.insert(id) {
            out.push(id);
            stack.extend(g.node(id).children());
        }
    }
    out.sort();
    out
}

fn loop_alternatives(g: &Grammar, body: ExprId) -> Vec<ExprId> {
    let body = match g.node(body) {
        ExprNode::Nested { start, mid, end }
            if *start == ExprPool::EPSILON && *end == ExprPool::EPSILON =>
        {
            *mid
        }
        _ => body,
    };
    g.pool().choice_items(body)
}

fn check_lookaheads(g: &Grammar, report: &LeftRecReport, diags: &mut Vec<Diagnostic>) {
    let left_recursive: HashSet<&str> = report
        .rules
        .iter()
        .filter(|(_, i)| i.direct || !i.cycle.is_empty() || i.paradox)
        .map(|(n, _)| n.as_str())
        .collect();
    if left_recursive.is_empty() {
        return;
    }
    for (name, &body) in g.rules() {
        for id in reachable_in_rule(g, body) {
            let ExprNode::Switch { head, .. } = g.node(id) else {
                continue;
            };
            if !g.is_lookahead_head(*head) {
                continue;
            }
            let reached = report.leftmost_closure(g, *head);
            if let Some(bad) = reached.iter().find(|r| left_recursive.contains(r.as_str())) {
                diags.push(
                    Diagnostic::error(
                        "lookahead-left-recursion",
                        format!(
                            "paradox: lookahead `{}` reaches possibly left-recursive rule `{bad}`",
                            g.display(id)
                        ),
                    )
                    .in_rule(name),
                );
            }
        }
    }
}

fn check_structure(g: &Grammar, sizes: &SizeTable, diags: &mut Vec<Diagnostic>) {
    let sccs = call_graph_sccs(g);
    for (index, (name, &body)) in g.rules().iter().enumerate() {
        let mut bad = Vec::new();
        let ctx = Ctx {
            tail: true,
            leftmost: true,
            nested: false,
        };
        walk_structure(g, sizes, body, ctx, sccs[index], &sccs, &mut bad);
        bad.sort();
        bad.dedup();
        for target in bad {
            diags.push(
                Diagnostic::warning(
                    "non-structured",
                    format!(
                        "recursive call to `{target}` is neither iteration nor inside `nested`; \
                         the linear-time guarantee does not apply"
                    ),
                )
                .in_rule(name),
            );
        }
    }
}

#[derive(Clone, Copy)]
struct Ctx {
    tail: bool,
    leftmost: bool,
    nested: bool,
}

/// Only actions and predicates: nothing is consumed, nothing can follow.
fn transparent(g: &Grammar, e: ExprId) -> bool {
    match g.node(e) {
        ExprNode::Act(_) | ExprNode::Pred(_) | ExprNode::Epsilon => true,
        ExprNode::Seq(a, b) => transparent(g, *a) && transparent(g, *b),
        _ => false,
    }
}

fn walk_structure(
    g: &Grammar,
    sizes: &SizeTable,
    e: ExprId,
    ctx: Ctx,
    scc: usize,
    sccs: &[usize],
    bad: &mut Vec<String>,
) {
    let mut go = |e: ExprId, ctx: Ctx| walk_structure(g, sizes, e, ctx, scc, sccs, bad);
    match g.node(e) {
        ExprNode::RuleRef(name) => {
            if let Some((target, _)) = g.rule_target(e) {
                if sccs[target] == scc
                    && !(ctx.tail || ctx.leftmost || ctx.nested)
                    && is_recursive(g, target, sccs)
                {
                    bad.push(name.to_string());
                }
            }
        }
        ExprNode::Seq(h, t) => {
            let h_tail = ctx.tail && transparent(g, *t);
            go(
                *h,
                Ctx {
                    tail: h_tail,
                    ..ctx
                },
            );
            let t_left = ctx.leftmost && sizes.nullable(*h);
            go(
                *t,
                Ctx {
                    leftmost: t_left,
                    ..ctx
                },
            );
        }
        ExprNode::Choice(a, b) => {
            go(*a, ctx);
            go(*b, ctx);
        }
        ExprNode::Switch {
            head,
            on_success,
            on_fail,
            ..
        } => {
            go(*head, Ctx { tail: false, ..ctx });
            go(*on_success, ctx);
            go(*on_fail, ctx);
        }
        ExprNode::Many { body, .. } => go(*body, Ctx { tail: false, ..ctx }),
        ExprNode::Nested { start, mid, end } => {
            let inner = Ctx {
                nested: true,
                ..ctx
            };
            go(*start, inner);
            go(*mid, inner);
            go(*end, inner);
        }
        ExprNode::Bind { body, .. } | ExprNode::Reduce { body, .. } => go(*body, ctx),
        ExprNode::Enter { source, inner } => {
            go(*source, Ctx { tail: false, ..ctx });
            go(
                *inner,
                Ctx {
                    tail: false,
                    leftmost: false,
                    ..ctx
                },
            );
        }
        _ => {}
    }
}

fn is_recursive(g: &Grammar, rule: usize, sccs: &[usize]) -> bool {
    let scc = sccs[rule];
    sccs.iter().filter(|&&s| s == scc).count() > 1 || rule_calls(g, rule).contains(&rule)
}

fn rule_calls(g: &Grammar, rule: usize) -> Vec<usize> {
    reachable_in_rule(g, g.rule_body(rule))
        .into_iter()
        .filter_map(|id| g.rule_target(id).map(|(r, _)| r))
        .collect()
}

/// Strongly connected component index of every rule in the call graph.
pub(crate) fn call_graph_sccs(g: &Grammar) -> Vec<usize> {
    let edges: Vec<Vec<usize>> = (0..g.rules().len()).map(|r| rule_calls(g, r)).collect();
    tarjan(&edges)
}

/// Tarjan's algorithm; returns the component index of each vertex.
pub(crate) fn tarjan(edges: &[Vec<usize>]) -> Vec<usize> {
    struct St<'a> {
        edges: &'a [Vec<usize>],
        index: Vec<Option<usize>>,
        low: Vec<usize>,
        on_stack: Vec<bool>,
        stack: Vec<usize>,
        comp: Vec<usize>,
        next: usize,
        ncomp: usize,
    }
    fn visit(s: &mut St<'_>, v: usize) {
        s.index[v] = Some(s.next);
        s.low[v] = s.next;
        s.next += 1;
        s.stack.push(v);
        s.on_stack[v] = true;
        for &w in &s.edges[v] {
            match s.index[w] {
                None => {
                    visit(s, w);
                    s.low[v] = s.low[v].min(s.low[w]);
                }
                Some(iw) if s.on_stack[w] => s.low[v] = s.low[v].min(iw),
                _ => {}
            }
        }
        if Some(s.low[v]) == s.index[v] {
            loop {
                let w = s.stack.pop().expect("tarjan stack");
                s.on_stack[w] = false;
                s.comp[w] = s.ncomp;
                if w == v {
                    break;
                }
            }
            s.ncomp += 1;
        }
    }
    let n = edges.len();
    let mut s = St {
        edges,
        index: vec![None; n],
        low: vec![0; n],
        on_stack: vec![false; n],
        stack: Vec::new(),
        comp: vec![0; n],
        next: 0,
        ncomp: 0,
    };
    for v in 0..n {
        if s.index[v].is_none() {
            visit(&mut s, v);
        }
    }
    s.comp
}

/// Rules in definition order with their surface bodies, for lookups by name.
pub fn rule_map(g: &SurfaceGrammar) -> HashMap<&str, &SurfaceExpr> {
    g.rules.iter().map(|r| (r.name.as_str(), &r.body)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn codes(diags: &[Diagnostic]) -> Vec<&'static str> {
        diags.iter().map(|d| d.code).collect()
    }

    #[test]
    fn calculator_rules() {
        let text = "add = mul:x '+' add:y {x+y}\n    | mul\nmul = number:x '*' mul:y {x*y}\n    | number\n";
        let (g, diags) = parse_grammar(text);
        assert!(diags.is_empty(), "{diags:?}");
        let names: Vec<_> = g.rules.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, ["add", "mul"]);
    }

    #[test]
    fn empty_grammar_has_no_start_rule() {
        let (g, diags) = parse_grammar("  # nothing\n");
        assert!(g.rules.is_empty());
        assert_eq!(codes(&diags), ["no-start-rule"]);
    }

    #[test]
    fn right_recursive_rule() {
        let (g, diags) = parse_grammar("R = 'a' R | 'b'");
        assert!(diags.is_empty());
        assert_eq!(g.rules.len(), 1);
        let built = build_grammar(&g, None, DesugarOptions::default());
        assert!(validate(&built).is_empty(), "{:?}", validate(&built));
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let (_, diags) = parse_grammar("A = 'a' |\n  'b' / 'c'");
        assert_eq!(codes(&diags), ["syntax"]);
        assert_eq!(diags[0].span, Some(Span { line: 2, col: 7 }));
        let (_, diags) = parse_grammar("A = 'a\n");
        assert_eq!(codes(&diags), ["syntax"]);
        let (_, diags) = parse_grammar("A = 'a'\nA = 'b'");
        assert_eq!(codes(&diags), ["duplicate-rule"]);
    }

    #[test]
    fn terms_and_operators() {
        let (g, d) = parse_grammar(
            r#"S = &'a' ~"b" [a-z\]]* .+ x*? e:v {1} &{v.size>1} nested('(', S, ')') t['x']"#,
        );
        assert!(d.is_empty(), "{d:?}");
        let SurfaceExpr::Seq(items) = &g.rules[0].body else {
            panic!()
        };
        assert_eq!(items.len(), 10);
        assert!(matches!(
            &items[0],
            SurfaceExpr::Look {
                negative: false,
                ..
            }
        ));
        assert!(matches!(
            &items[1],
            SurfaceExpr::Look { negative: true, .. }
        ));
        assert!(matches!(
            &items[2],
            SurfaceExpr::Repeat {
                kind: RepeatKind::Star,
                ..
            }
        ));
        assert!(matches!(
            &items[3],
            SurfaceExpr::Repeat {
                kind: RepeatKind::Plus,
                ..
            }
        ));
        assert!(matches!(
            &items[4],
            SurfaceExpr::Repeat {
                kind: RepeatKind::Lazy,
                ..
            }
        ));
        assert!(matches!(&items[5], SurfaceExpr::Bind { .. }));
        assert!(matches!(&items[6], SurfaceExpr::Action(_)));
        assert!(matches!(&items[7], SurfaceExpr::Pred(_)));
        assert!(matches!(&items[8], SurfaceExpr::Nested(..)));
        assert!(matches!(&items[9], SurfaceExpr::Enter(..)));
    }

    #[test]
    fn enter_needs_adjacent_bracket() {
        let (g, _) = parse_grammar("S = t [x]");
        assert!(
            matches!(&g.rules[0].body, SurfaceExpr::Seq(items) if matches!(items[1], SurfaceExpr::Class(_)))
        );
    }

    #[test]
    fn star_desugars_to_many_over_choice_with_stop() {
        let (s, _) = parse_grammar("S = 'a'*");
        let g = build_grammar(&s, None, DesugarOptions::default());
        let body = g.rule("S").unwrap();
        let ExprNode::Many { stop, body } = g.node(body) else {
            panic!()
        };
        let ExprNode::Choice(e, st) = g.node(*body) else {
            panic!()
        };
        assert_eq!(g.node(*e), &ExprNode::Literal("a".into()));
        assert_eq!(g.node(*st), &ExprNode::Stop(*stop));
    }

    #[test]
    fn lazy_star_puts_stop_first() {
        let (s, _) = parse_grammar("S = 'a'*?");
        let g = build_grammar(&s, None, DesugarOptions::default());
        let ExprNode::Many { stop, body } = g.node(g.rule("S").unwrap()) else {
            panic!()
        };
        let ExprNode::Choice(st, _) = g.node(*body) else {
            panic!()
        };
        assert_eq!(g.node(*st), &ExprNode::Stop(*stop));
    }

    #[test]
    fn negative_lookahead_switch() {
        let (s, _) = parse_grammar("S = ~'a'");
        let g = build_grammar(&s, None, DesugarOptions::default());
        let ExprNode::Switch {
            head,
            on_success,
            on_fail,
            ..
        } = g.node(g.rule("S").unwrap())
        else {
            panic!()
        };
        assert_eq!(*on_success, ExprPool::FAIL);
        assert_eq!(*on_fail, ExprPool::EPSILON);
        assert!(g.is_lookahead_head(*head));
    }

    #[test]
    fn ordered_choice_is_empty_delimited_nesting() {
        let (s, _) = parse_grammar("S = 'a' / 'b'");
        let g = build_grammar(&s, None, DesugarOptions::default());
        let ExprNode::Nested { start, mid, end } = g.node(g.rule("S").unwrap()) else {
            panic!()
        };
        assert_eq!((*start, *end), (ExprPool::EPSILON, ExprPool::EPSILON));
        assert!(matches!(g.node(*mid), ExprNode::Choice(..)));
    }

    #[test]
    fn each_loop_gets_its_own_stop_token() {
        let (s, _) = parse_grammar("S = 'a'* 'b'* ('c'*)+");
        let g = build_grammar(&s, None, DesugarOptions::default());
        let stops: Vec<_> = g
            .pool()
            .ids()
            .filter_map(|id| match g.node(id) {
                ExprNode::Many { stop, .. } => Some(*stop),
                _ => None,
            })
            .collect();
        let unique: HashSet<_> = stops.iter().collect();
        assert_eq!(stops.len(), unique.len());
        assert!(stops.len() >= 3);
    }

    #[test]
    fn paradox_is_rejected() {
        let (g, d) = load_grammar("L = ~L", None, DesugarOptions::default());
        assert!(g.is_none());
        assert!(codes(&d).contains(&"lookahead-left-recursion"), "{d:?}");
    }

    #[test]
    fn unresolved_rule() {
        let (_, d) = load_grammar("A = B", None, DesugarOptions::default());
        assert_eq!(codes(&d), ["unresolved-rule"]);
    }

    #[test]
    fn nested_parens_are_structured() {
        let (g, d) = load_grammar(
            "exp = nested('(', exp*, ')')",
            None,
            DesugarOptions::default(),
        );
        assert!(g.is_some());
        assert!(d.is_empty(), "{d:?}");
    }

    #[test]
    fn unannotated_nesting_warns() {
        let (g, d) = load_grammar("exp = '(' exp* ')'", None, DesugarOptions::default());
        assert!(g.is_some());
        assert_eq!(codes(&d), ["non-structured"]);
    }

    #[test]
    fn nullable_iteration_is_an_error() {
        let (_, d) = load_grammar("S = ('a'*)*", None, DesugarOptions::default());
        assert!(codes(&d).contains(&"nullable-iteration"));
    }

    #[test]
    fn left_recursion_warns() {
        let (g, d) = load_grammar("L = L 'a' | 'b'", None, DesugarOptions::default());
        assert!(g.is_some());
        assert_eq!(codes(&d), ["left-recursion"]);
    }
}
