//! The matcher: continuation-passing evaluation of grammar expressions with
//! state-dispatching switches, stop-token loops, nested boundaries and
//! memoization keyed by continuation shape.

mod cont;
mod session;
mod split;

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::action::{ActionError, Value};
use crate::expr::{ExprId, Grammar};
use crate::memo::MemoStats;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EngineOptions {
    pub memoize: bool,
    /// Drop memo entries left of the watermark when the table fills up.
    pub compact: bool,
    /// Require the start rule to consume the whole input.
    pub full_match: bool,
    /// Check nested boundaries for ambiguous or non-injective ends.
    pub validate_structured: bool,
    /// Fail early when the remaining input is shorter than the minimum the
    /// expression and its continuation need.
    pub fail_fast_bound: bool,
    /// Split choices at commit points so the alternatives counter drops
    /// before the choice returns.
    pub commit_points: bool,
    pub trace: bool,
    /// Bound on rule invocations plus loop iterations on the current path.
    /// `None` means `10 * input length + 1000`.
    pub depth_limit: Option<usize>,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions {
            memoize: true,
            compact: true,
            full_match: true,
            validate_structured: false,
            fail_fast_bound: false,
            commit_points: true,
            trace: false,
            depth_limit: None,
        }
    }
}

impl EngineOptions {
    pub fn without_memo() -> EngineOptions {
        EngineOptions {
            memoize: false,
            ..EngineOptions::default()
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Statistics {
    pub match_calls: u64,
    pub memo_hits: u64,
    pub memo_misses: u64,
    pub peak_memo_entries: usize,
    pub compactions: u64,
    /// Successful memo hits outside lookaheads that were matched again to
    /// run their actions.
    pub recalculations: u64,
}

impl Statistics {
    pub(crate) fn absorb(&mut self, other: &Statistics) {
        self.match_calls += other.match_calls;
        self.memo_hits += other.memo_hits;
        self.memo_misses += other.memo_misses;
        self.peak_memo_entries = self.peak_memo_entries.max(other.peak_memo_entries);
        self.compactions += other.compactions;
        self.recalculations += other.recalculations;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WarningKind {
    /// One start position produced two different ends.
    Ambiguous,
    /// Two start positions produced the same end.
    NotInjective,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StructureWarning {
    pub kind: WarningKind,
    pub expr: String,
    pub start: usize,
    pub end: usize,
    /// The conflicting end (ambiguous) or start (not injective).
    pub other: usize,
}

impl fmt::Display for StructureWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            WarningKind::Ambiguous => write!(
                f,
                "nested `{}` from {} ended at both {} and {}",
                self.expr, self.start, self.other, self.end
            ),
            WarningKind::NotInjective => write!(
                f,
                "nested `{}` ended at {} from both {} and {}",
                self.expr, self.end, self.other, self.start
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("unknown start rule `{0}`")]
    UnknownRule(String),
    #[error("recursion limit of {limit} exceeded at position {pos}")]
    DepthExceeded { limit: usize, pos: usize },
    #[error("action failed at position {pos}: {source}")]
    Action { pos: usize, source: ActionError },
    #[error("enter at position {pos} received a value without text")]
    EnterNotText { pos: usize },
}

#[derive(Clone, Debug)]
pub struct ParseOutcome {
    pub matched: bool,
    /// End of the match; the input length for a full match.
    pub end: Option<usize>,
    /// Value of the start rule. Text values are spans of the input.
    pub value: Option<Value>,
    pub stats: Statistics,
    pub memo: MemoStats,
    /// Deepest rule-call plus loop-iteration path.
    pub max_depth: usize,
    pub warnings: Vec<StructureWarning>,
    pub trace: Vec<String>,
}

/// Matches the grammar's start rule against `input`.
pub fn parse(g: &Grammar, input: &str, opts: &EngineOptions) -> Result<ParseOutcome, EngineError> {
    parse_rule(g, g.start(), input, opts)
}

pub fn parse_rule(
    g: &Grammar,
    rule: &str,
    input: &str,
    opts: &EngineOptions,
) -> Result<ParseOutcome, EngineError> {
    let index = g
        .rules()
        .get_index_of(rule)
        .ok_or_else(|| EngineError::UnknownRule(rule.to_owned()))?;
    session::run_rule(g, index, input, opts)
}

/// Whether `e` matches a prefix of `input`, as a bare expression: no rule
/// value wraps the result.
pub fn match_expr(
    g: &Grammar,
    e: ExprId,
    input: &str,
    opts: &EngineOptions,
) -> Result<Option<usize>, EngineError> {
    session::run_expr(g, e, input, opts)
}
