//! Built-in benchmark families: generated grammars and inputs, so counters
//! are reproducible across runs.

use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{parse, EngineError, EngineOptions};
use crate::expr::Grammar;
use crate::fixtures;
use crate::oracle::{oracle_match, OracleError, OracleOptions};

pub const CSV_HEADER: &str = "benchmark,n,match_calls,oracle_steps,peak_memo,wall_ms";

/// Largest input handed to the reference matcher by default.
const ORACLE_MAX_N: usize = 64;

pub struct Family {
    pub name: String,
    pub grammar: Grammar,
    generate: fn(usize) -> String,
    pub default_sizes: Vec<usize>,
}

impl Family {
    pub fn input(&self, n: usize) -> String {
        (self.generate)(n)
    }
}

pub const FAMILY_NAMES: &[&str] = &[
    "pathological-k",
    "exponential-R",
    "calc-linear",
    "memory-counterexample",
];

/// Looks a family up by name; `pathological-3` selects the nesting depth.
pub fn family(name: &str) -> Option<Family> {
    let f = |name: &str, grammar, generate, sizes: &[usize]| Family {
        name: name.to_owned(),
        grammar,
        generate,
        default_sizes: sizes.to_vec(),
    };
    if let Some(k) = name.strip_prefix("pathological-") {
        let k: usize = if k == "k" {
            3
        } else {
            k.parse().ok().filter(|k| (1..=8).contains(k))?
        };
        return Some(f(
            &format!("pathological-{k}"),
            fixtures::pathological(k),
            a_n,
            &[32, 64, 128, 256],
        ));
    }
    match name {
        "exponential-R" => Some(f(
            name,
            fixtures::exponential(),
            a_n_b,
            &[8, 12, 16, 64, 256],
        )),
        "calc-linear" => Some(f(
            name,
            fixtures::calculator(),
            calc_expression,
            &[1 << 12, 1 << 13, 1 << 14],
        )),
        "memory-counterexample" => Some(f(
            name,
            fixtures::memory_counterexample(),
            e_n_y,
            &[1000, 10_000],
        )),
        _ => None,
    }
}

pub fn a_n(n: usize) -> String {
    "a".repeat(n)
}

pub fn a_n_b(n: usize) -> String {
    format!("{}b", "a".repeat(n))
}

pub fn e_n_y(n: usize) -> String {
    format!("{}y", "e".repeat(n))
}

/// A sum of products of at most three numbers, exactly `n` characters
/// long, seeded by `n`.
pub fn calc_expression(n: usize) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
    let mut out = String::with_capacity(n);
    let mut factors = 1;
    loop {
        let rem = n.saturating_sub(out.len());
        if rem <= 3 {
            for _ in 0..rem.max(1) {
                out.push(rng.gen_range(b'0'..=b'9') as char);
            }
            return out;
        }
        let len = rng.gen_range(1..=3.min(rem - 2));
        for _ in 0..len {
            out.push(rng.gen_range(b'0'..=b'9') as char);
        }
        if factors < 3 && rng.gen_bool(0.4) {
            out.push('*');
            factors += 1;
        } else {
            out.push('+');
            factors = 1;
        }
    }
}

/// Balanced parentheses around letters, at most `max_len` characters.
pub fn nested_parens_input(rng: &mut impl Rng, max_len: usize) -> String {
    let mut out = String::new();
    let mut open = 0usize;
    while out.len() + open < max_len {
        match rng.gen_range(0..4) {
            0 => {
                out.push('(');
                open += 1;
            }
            1 if open > 0 => {
                out.push(')');
                open -= 1;
            }
            _ => out.push(if rng.gen_bool(0.5) { 'a' } else { 'b' }),
        }
    }
    out.extend(std::iter::repeat_n(')', open));
    out
}

/// Concatenation of random fragments, at most `max_len` characters.
pub fn random_input(rng: &mut impl Rng, alphabet: &[&str], max_len: usize) -> String {
    let target = rng.gen_range(0..=max_len);
    let mut out = String::new();
    loop {
        let piece = alphabet[rng.gen_range(0..alphabet.len())];
        if out.len() + piece.len() > target {
            return out;
        }
        out.push_str(piece);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleSteps {
    Steps(u64),
    Exhausted,
    Skipped,
}

impl fmt::Display for OracleSteps {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleSteps::Steps(n) => write!(f, "{n}"),
            OracleSteps::Exhausted => f.write_str("exhausted"),
            OracleSteps::Skipped => f.write_str("skipped"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub benchmark: String,
    pub n: usize,
    pub match_calls: u64,
    pub oracle_steps: OracleSteps,
    pub peak_memo: usize,
    pub wall_ms: f64,
}

impl BenchRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{:.3}",
            self.benchmark,
            self.n,
            self.match_calls,
            self.oracle_steps,
            self.peak_memo,
            self.wall_ms
        )
    }
}

/// Runs one size. The reference matcher runs for inputs up to
/// `oracle_max_n` (default 64) characters.
pub fn run(
    family: &Family,
    n: usize,
    opts: &EngineOptions,
    oracle_max_n: Option<usize>,
) -> Result<BenchRow, EngineError> {
    let input = family.input(n);
    let started = Instant::now();
    let out = parse(&family.grammar, &input, opts)?;
    let wall_ms = started.elapsed().as_secs_f64() * 1000.0;
    let oracle_steps = if input.len() <= oracle_max_n.unwrap_or(ORACLE_MAX_N) {
        match oracle_match(
            &family.grammar,
            family.grammar.start(),
            &input,
            &OracleOptions::default(),
        ) {
            Ok(o) => OracleSteps::Steps(o.derivations_tried),
            Err(OracleError::BudgetExhausted(_)) => OracleSteps::Exhausted,
            Err(_) => OracleSteps::Skipped,
        }
    } else {
        OracleSteps::Skipped
    };
    Ok(BenchRow {
        benchmark: family.name.clone(),
        n,
        match_calls: out.stats.match_calls,
        oracle_steps,
        peak_memo: out.stats.peak_memo_entries,
        wall_ms,
    })
}

/// A random walk through the grammar from its start rule, cut off at
/// `max_len` characters. Loop exits and predicates are ignored, so the
/// result is likely, not certain, to match.
pub fn random_sentence(g: &Grammar, rng: &mut impl Rng, max_len: usize) -> String {
    let mut out = String::new();
    if let Some(body) = g.rule(g.start()) {
        walk(g, body, rng, max_len, 0, &mut out);
    }
    out.chars().take(max_len).collect()
}

fn walk(
    g: &Grammar,
    e: crate::ExprId,
    rng: &mut impl Rng,
    max_len: usize,
    depth: usize,
    out: &mut String,
) {
    use crate::expr::ExprNode;
    if out.len() >= max_len || depth > 40 {
        return;
    }
    match g.node(e) {
        ExprNode::Literal(s) => out.push_str(s),
        ExprNode::AnyChar => out.push('a'),
        ExprNode::Class(cls) => {
            let pick = if cls.negated {
                None
            } else {
                cls.ranges.get(rng.gen_range(0..cls.ranges.len().max(1)))
            };
            match pick {
                Some(&(lo, hi)) => {
                    out.push(char::from_u32(rng.gen_range(lo as u32..=hi as u32)).unwrap_or(lo))
                }
                None => out.push('#'),
            }
        }
        ExprNode::Seq(a, b) => {
            walk(g, *a, rng, max_len, depth + 1, out);
            walk(g, *b, rng, max_len, depth + 1, out);
        }
        ExprNode::Choice(a, b) => {
            // Deep in the walk, prefer the later (usually shorter) branch.
            let second = if depth > 20 {
                rng.gen_bool(0.8)
            } else {
                rng.gen_bool(0.5)
            };
            walk(
                g,
                if second { *b } else { *a },
                rng,
                max_len,
                depth + 1,
                out,
            );
        }
        ExprNode::Switch { on_success, .. } => walk(g, *on_success, rng, max_len, depth + 1, out),
        ExprNode::Many { body, .. } => {
            for _ in 0..rng.gen_range(0..4) {
                walk(g, *body, rng, max_len, depth + 1, out);
            }
        }
        ExprNode::Nested { start, mid, end } => {
            walk(g, *start, rng, max_len, depth + 1, out);
            walk(g, *mid, rng, max_len, depth + 1, out);
            walk(g, *end, rng, max_len, depth + 1, out);
        }
        ExprNode::RuleRef(_) => {
            if let Some((_, body)) = g.rule_target(e) {
                walk(g, body, rng, max_len, depth + 1, out);
            }
        }
        ExprNode::Bind { body, .. } | ExprNode::Reduce { body, .. } => {
            walk(g, *body, rng, max_len, depth + 1, out)
        }
        ExprNode::Enter { source, .. } => walk(g, *source, rng, max_len, depth + 1, out),
        ExprNode::Stop(_)
        | ExprNode::Act(_)
        | ExprNode::Pred(_)
        | ExprNode::SuccessState
        | ExprNode::FailState
        | ExprNode::Epsilon => {}
    }
}

/// Deletes or inserts one fragment at a random place.
pub fn mutate(rng: &mut impl Rng, input: &str, alphabet: &[&str]) -> String {
    let chars: Vec<char> = input.chars().collect();
    let at = rng.gen_range(0..=chars.len());
    let (head, tail) = chars.split_at(at);
    let mut out: String = head.iter().collect();
    if rng.gen_bool(0.5) && !tail.is_empty() {
        out.extend(&tail[1..]);
    } else {
        out.push_str(alphabet[rng.gen_range(0..alphabet.len())]);
        out.extend(tail);
    }
    out
}
