//! Relativized regular expressions: a linear-time memoizing
//! continuation-passing parser for structured grammars, static grammar
//! analysis, and a fully backtracking reference parser.

pub mod action;
pub mod analysis;
pub mod bench_suite;
pub mod engine;
pub mod expr;
pub mod fixtures;
pub mod frontend;
pub mod memo;
pub mod oracle;

pub use action::{ActionExpr, Closure, Node, Value};
pub use engine::{parse, parse_rule, EngineError, EngineOptions, ParseOutcome, Statistics};
pub use expr::{
    CharClass, ExprId, ExprNode, ExprPool, Grammar, GrammarBuilder, State, StopSet, StopToken,
};
pub use frontend::{load_grammar, parse_grammar, validate, DesugarOptions, Diagnostic, Severity};
pub use memo::{MemoStats, MemoStore};
pub use oracle::{oracle_match, OracleError, OracleOptions, OracleOutcome};
