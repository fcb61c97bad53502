//! Grammars used by tests, benchmarks and the command line.

use crate::expr::{ExprNode, ExprPool, Grammar, GrammarBuilder};
use crate::frontend::{load_grammar, DesugarOptions};

pub const CALCULATOR: &str = "\
add = mul:x '+' add:y {x+y}
    | mul
mul = number:x '*' mul:y {x*y}
    | number
number = [0-9]+
";

pub const NESTED_PARENS: &str = "\
doc = item*
item = nested('(', item*, ')')
     | [a-z]
";

pub const C_WHILE: &str = "\
prog = ws stmt*
stmt = 'while' ws '(' ws cond ')' ws stmt
     | nested('{' ws, stmt*, '}' ws)
     | id:v ws '=' ws expr ';' ws
cond = expr '<' ws expr
     | expr
expr = atom ('+' ws atom)*
atom = (id | num) ws
id = [a-z]+
num = [0-9]+
ws = ' '*
";

/// `S = N 'x' | 'a' N` with `N = nested(('a' | ''), '', 'b')`: `N` ends at
/// the same position from two different starts on `ab`.
pub const NON_MONOTONE: &str = "\
S = N 'x' | 'a' N
N = nested(('a' | ''), '', 'b')
";

pub const EXPONENTIAL: &str = "R = 'aa' R | 'a' R | ''\n";

pub const MEMORY_COUNTEREXAMPLE: &str = "\
S = exp* 'x' | exp* 'y'
exp = 'e'
";

/// Loops nested `k` deep, each level a local commit: `((('a')* 'b' / 'a')*
/// 'c' / 'a')* 'd'` for `k = 3`.
pub fn pathological_text(k: usize) -> String {
    let mut e = "'a'".to_string();
    for level in 0..k {
        let terminator = (b'b' + level as u8) as char;
        e = if level + 1 < k {
            format!("(({e})* '{terminator}' / 'a')")
        } else {
            format!("({e})* '{terminator}'")
        };
    }
    format!("S = {e}\n")
}

/// Loads grammar text in backtracking mode; panics on diagnostics with
/// error severity, which would be a bug in a fixture.
pub fn load(text: &str) -> Grammar {
    let (g, diags) = load_grammar(text, None, DesugarOptions::default());
    g.unwrap_or_else(|| panic!("fixture grammar rejected: {diags:?}"))
}

pub fn calculator() -> Grammar {
    load(CALCULATOR)
}

pub fn nested_parens() -> Grammar {
    load(NESTED_PARENS)
}

pub fn c_while() -> Grammar {
    load(C_WHILE)
}

pub fn non_monotone() -> Grammar {
    load(NON_MONOTONE)
}

pub fn exponential() -> Grammar {
    load(EXPONENTIAL)
}

pub fn memory_counterexample() -> Grammar {
    load(MEMORY_COUNTEREXAMPLE)
}

pub fn pathological(k: usize) -> Grammar {
    load(&pathological_text(k))
}

/// `R = ('a' | 'b' Stop)**`: a loop that may only exit after a `b`.
pub fn stop_after_b() -> Grammar {
    let mut b = GrammarBuilder::new();
    let st = b.fresh_stop();
    let a = b.pool.literal("a");
    let bb = b.pool.literal("b");
    let stop = b.pool.intern(ExprNode::Stop(st));
    let exit = b.pool.seq(bb, stop);
    let body = b.pool.choice(a, exit);
    let many = b.pool.intern(ExprNode::Many { stop: st, body });
    b.define("R", many);
    b.finish("R")
}

/// `R = ('x' Stop | 'a' | 'b')** ('a' | ε)`: the exit is tried first.
pub fn stop_first() -> Grammar {
    let mut b = GrammarBuilder::new();
    let st = b.fresh_stop();
    let x = b.pool.literal("x");
    let a = b.pool.literal("a");
    let bb = b.pool.literal("b");
    let stop = b.pool.intern(ExprNode::Stop(st));
    let exit = b.pool.seq(x, stop);
    let items = b.pool.choice(a, bb);
    let body = b.pool.choice(exit, items);
    let many = b.pool.intern(ExprNode::Many { stop: st, body });
    let tail = b.pool.choice(a, ExprPool::EPSILON);
    let whole = b.pool.seq(many, tail);
    b.define("R", whole);
    b.finish("R")
}

pub const STAR_ENCODINGS: &str = "\
S = A:a B:b {a + b}
A = 'a'* 'a'
B = 'b'*? 'b' 'c'*
";

/// A structured grammar with the alphabet its random inputs draw from.
pub struct Fixture {
    pub name: &'static str,
    pub grammar: Grammar,
    /// Input fragments; random inputs concatenate them.
    pub alphabet: &'static [&'static str],
}

/// The structured corpus compared against the reference matcher.
pub fn structured_corpus() -> Vec<Fixture> {
    vec![
        Fixture {
            name: "calculator",
            grammar: calculator(),
            alphabet: &["1", "2", "3", "+", "*", "0", "9"],
        },
        Fixture {
            name: "nested-parens",
            grammar: nested_parens(),
            alphabet: &["(", ")", "a", "b", "(", ")"],
        },
        Fixture {
            name: "c-while",
            grammar: c_while(),
            alphabet: &[
                "while", "(", ")", "{", "}", "x", "y", "=", "1", "2", ";", "<", "+", " ", "w",
            ],
        },
        Fixture {
            name: "stop-after-b",
            grammar: stop_after_b(),
            alphabet: &["a", "b", "b"],
        },
        Fixture {
            name: "stop-first",
            grammar: stop_first(),
            alphabet: &["a", "b", "x"],
        },
        Fixture {
            name: "star-encodings",
            grammar: load(STAR_ENCODINGS),
            alphabet: &["a", "b", "c"],
        },
    ]
}
