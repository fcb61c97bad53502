//! Interned, immutable expression graph.
//!
//! Every node is hash-consed: building a node that is structurally equal to
//! an existing one returns the existing [`ExprId`]. A handful of algebraic
//! identities are applied before lookup (see [`ExprPool::intern`]).

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use indexmap::IndexMap;
use smallvec::SmallVec;

use crate::action::ActionExpr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ExprId(u32);

impl ExprId {
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn from_index(i: usize) -> ExprId {
        ExprId(i as u32)
    }
}

impl fmt::Display for ExprId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Stop token of one `Many` node. Tokens are allocated densely per grammar.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StopToken(pub u32);

/// Fixed-width bit set of stop tokens. Trailing zero words are never stored,
/// so equal sets compare and hash equal.
#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct StopSet {
    words: SmallVec<[u64; 2]>,
}

impl StopSet {
    pub fn new() -> StopSet {
        StopSet::default()
    }

    pub fn single(tok: StopToken) -> StopSet {
        StopSet::new().with(tok)
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains(&self, tok: StopToken) -> bool {
        let (w, b) = (tok.0 as usize / 64, tok.0 % 64);
        self.words.get(w).is_some_and(|word| word & (1 << b) != 0)
    }

    pub fn with(&self, tok: StopToken) -> StopSet {
        let mut out = self.clone();
        let (w, b) = (tok.0 as usize / 64, tok.0 % 64);
        if out.words.len() <= w {
            out.words.resize(w + 1, 0);
        }
        out.words[w] |= 1 << b;
        out
    }

    pub fn without(&self, tok: StopToken) -> StopSet {
        let mut out = self.clone();
        let (w, b) = (tok.0 as usize / 64, tok.0 % 64);
        if let Some(word) = out.words.get_mut(w) {
            *word &= !(1 << b);
        }
        out.trim();
        out
    }

    pub fn union(&self, other: &StopSet) -> StopSet {
        let len = self.words.len().max(other.words.len());
        let words = (0..len)
            .map(|i| {
                self.words.get(i).copied().unwrap_or(0) | other.words.get(i).copied().unwrap_or(0)
            })
            .collect();
        StopSet { words }
    }

    pub fn intersection(&self, other: &StopSet) -> StopSet {
        let mut out = StopSet {
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(a, b)| a & b)
                .collect(),
        };
        out.trim();
        out
    }

    pub fn difference(&self, other: &StopSet) -> StopSet {
        let mut out = StopSet {
            words: self
                .words
                .iter()
                .enumerate()
                .map(|(i, a)| a & !other.words.get(i).copied().unwrap_or(0))
                .collect(),
        };
        out.trim();
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = StopToken> + '_ {
        self.words.iter().enumerate().flat_map(|(w, word)| {
            (0..64)
                .filter(move |b| word & (1 << b) != 0)
                .map(move |b| StopToken((w * 64 + b) as u32))
        })
    }

    fn trim(&mut self) {
        while self.words.last() == Some(&0) {
            self.words.pop();
        }
    }
}

impl fmt::Debug for StopSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter().map(|t| t.0)).finish()
    }
}

/// Explicit character class, e.g. `[a-z_]` or `[^)]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CharClass {
    pub ranges: Vec<(char, char)>,
    pub negated: bool,
}

impl CharClass {
    pub fn matches(&self, c: char) -> bool {
        self.ranges.iter().any(|&(lo, hi)| lo <= c && c <= hi) != self.negated
    }
}

/// Result state of a match, dispatched on by `Switch`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum State {
    Success,
    Fail,
}

/// How a `Switch` combines head and tail states. Only the identity merge
/// (final state is the tail's) exists.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum Merge {
    #[default]
    Identity,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ExprNode {
    Literal(Arc<str>),
    AnyChar,
    Class(CharClass),
    Seq(ExprId, ExprId),
    /// Backtracking priorized choice.
    Choice(ExprId, ExprId),
    /// Match `head`, then match the tail for the state it reached, at the
    /// original position.
    Switch {
        head: ExprId,
        on_success: ExprId,
        on_fail: ExprId,
        merge: Merge,
    },
    /// Repeat `body` until an iteration passes `Stop(stop)`.
    Many {
        stop: StopToken,
        body: ExprId,
    },
    Stop(StopToken),
    Nested {
        start: ExprId,
        mid: ExprId,
        end: ExprId,
    },
    RuleRef(Arc<str>),
    Act(ActionExpr),
    Bind {
        var: Arc<str>,
        body: ExprId,
    },
    Pred(ActionExpr),
    /// Match `inner` against the text value returned by `source`.
    Enter {
        source: ExprId,
        inner: ExprId,
    },
    /// One step of a rewritten left-recursive rule: builds the value of
    /// `rule` from the value so far (bound to `var` when given) and `body`.
    /// `seed` marks the non-recursive first step.
    Reduce {
        rule: Arc<str>,
        var: Option<Arc<str>>,
        body: ExprId,
        seed: bool,
    },
    SuccessState,
    FailState,
    Epsilon,
}

impl ExprNode {
    pub fn children(&self) -> SmallVec<[ExprId; 3]> {
        use ExprNode::*;
        match self {
            Seq(a, b) | Choice(a, b) => SmallVec::from_slice(&[*a, *b]),
            Switch {
                head,
                on_success,
                on_fail,
                ..
            } => SmallVec::from_slice(&[*head, *on_success, *on_fail]),
            Many { body, .. } | Bind { body, .. } | Reduce { body, .. } => {
                SmallVec::from_slice(&[*body])
            }
            Nested { start, mid, end } => SmallVec::from_slice(&[*start, *mid, *end]),
            Enter { source, inner } => SmallVec::from_slice(&[*source, *inner]),
            _ => SmallVec::new(),
        }
    }
}

/// Append-only interning pool.
#[derive(Clone, Default)]
pub struct ExprPool {
    nodes: Vec<ExprNode>,
    index: HashMap<ExprNode, ExprId>,
    /// Node is free of actions, bindings, predicates, enters and rule calls.
    pure: Vec<bool>,
}

impl ExprPool {
    pub fn new() -> ExprPool {
        let mut pool = ExprPool::default();
        // Fixed ids for the constants keep printing and tests predictable.
        pool.insert(ExprNode::Epsilon);
        pool.insert(ExprNode::FailState);
        pool.insert(ExprNode::SuccessState);
        pool
    }

    pub const EPSILON: ExprId = ExprId(0);
    pub const FAIL: ExprId = ExprId(1);
    pub const SUCCESS: ExprId = ExprId(2);

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn get(&self, id: ExprId) -> &ExprNode {
        &self.nodes[id.index()]
    }

    pub fn ids(&self) -> impl Iterator<Item = ExprId> {
        (0..self.nodes.len() as u32).map(ExprId)
    }

    fn insert(&mut self, node: ExprNode) -> ExprId {
        if let Some(&id) = self.index.get(&node) {
            return id;
        }
        let pure = match &node {
            ExprNode::Act(_)
            | ExprNode::Bind { .. }
            | ExprNode::Pred(_)
            | ExprNode::Enter { .. }
            | ExprNode::Reduce { .. }
            | ExprNode::RuleRef(_) => false,
            other => other.children().iter().all(|c| self.pure[c.index()]),
        };
        let id = ExprId(self.nodes.len() as u32);
        self.nodes.push(node.clone());
        self.pure.push(pure);
        self.index.insert(node, id);
        id
    }

    /// Interns `node` after applying these identities:
    /// `Seq(ε,e)=e`, `Seq(e,ε)=e`, `Choice(fail,e)=e`, `Choice(e,fail)=e`,
    /// and a `Switch` with equal tails and a side-effect-free head
    /// collapses to the tail.
    pub fn intern(&mut self, node: ExprNode) -> ExprId {
        match node {
            ExprNode::Seq(a, b) if a == Self::EPSILON => b,
            ExprNode::Seq(a, b) if b == Self::EPSILON => a,
            ExprNode::Choice(a, b) if a == Self::FAIL => b,
            ExprNode::Choice(a, b) if b == Self::FAIL => a,
            ExprNode::Switch {
                head,
                on_success,
                on_fail,
                ..
            } if on_success == on_fail && self.pure[head.index()] => on_success,
            ExprNode::Literal(s) if s.is_empty() => Self::EPSILON,
            node => self.insert(node),
        }
    }

    pub fn literal(&mut self, s: &str) -> ExprId {
        self.intern(ExprNode::Literal(Arc::from(s)))
    }

    pub fn seq(&mut self, a: ExprId, b: ExprId) -> ExprId {
        self.intern(ExprNode::Seq(a, b))
    }

    /// Right-nested sequence of `items`.
    pub fn seq_all(&mut self, items: &[ExprId]) -> ExprId {
        items
            .iter()
            .rev()
            .fold(Self::EPSILON, |acc, &e| self.seq(e, acc))
    }

    pub fn choice(&mut self, a: ExprId, b: ExprId) -> ExprId {
        self.intern(ExprNode::Choice(a, b))
    }

    /// Right-nested priorized choice of `items`; empty means failure.
    pub fn choice_all(&mut self, items: &[ExprId]) -> ExprId {
        match items.split_last() {
            None => Self::FAIL,
            Some((&last, init)) => init.iter().rev().fold(last, |acc, &e| self.choice(e, acc)),
        }
    }

    pub fn rule_ref(&mut self, name: &str) -> ExprId {
        self.intern(ExprNode::RuleRef(Arc::from(name)))
    }

    /// `Seq` spine of `e`: `Seq(a, Seq(b, c))` gives `[a, b, c]`.
    pub fn seq_items(&self, mut e: ExprId) -> Vec<ExprId> {
        let mut out = Vec::new();
        while let ExprNode::Seq(h, t) = self.get(e) {
            out.push(*h);
            e = *t;
        }
        if e != Self::EPSILON {
            out.push(e);
        }
        out
    }

    /// Alternatives of a right-nested `Choice` chain.
    pub fn choice_items(&self, mut e: ExprId) -> Vec<ExprId> {
        let mut out = Vec::new();
        while let ExprNode::Choice(a, b) = self.get(e) {
            out.push(*a);
            e = *b;
        }
        out.push(e);
        out
    }
}

/// Rule table under construction.
#[derive(Clone)]
pub struct GrammarBuilder {
    pub pool: ExprPool,
    pub rules: IndexMap<Arc<str>, ExprId>,
    stop_count: u32,
}

impl Default for GrammarBuilder {
    fn default() -> Self {
        GrammarBuilder {
            pool: ExprPool::new(),
            rules: IndexMap::new(),
            stop_count: 0,
        }
    }
}

impl GrammarBuilder {
    pub fn new() -> GrammarBuilder {
        GrammarBuilder::default()
    }

    pub fn fresh_stop(&mut self) -> StopToken {
        let t = StopToken(self.stop_count);
        self.stop_count += 1;
        t
    }

    pub fn stop_count(&self) -> u32 {
        self.stop_count
    }

    /// `e*` as `Many(st, Choice(e, Stop(st)))`.
    pub fn star(&mut self, e: ExprId) -> ExprId {
        let st = self.fresh_stop();
        let stop = self.pool.intern(ExprNode::Stop(st));
        let body = self.pool.choice(e, stop);
        self.pool.intern(ExprNode::Many { stop: st, body })
    }

    /// `e*?` as `Many(st, Choice(Stop(st), e))`.
    pub fn lazy_star(&mut self, e: ExprId) -> ExprId {
        let st = self.fresh_stop();
        let stop = self.pool.intern(ExprNode::Stop(st));
        let body = self.pool.choice(stop, e);
        self.pool.intern(ExprNode::Many { stop: st, body })
    }

    pub fn define(&mut self, name: &str, body: ExprId) {
        self.rules.insert(Arc::from(name), body);
    }

    pub fn finish(self, start: &str) -> Grammar {
        Grammar::finalize(self, Arc::from(start))
    }
}

/// A finalized grammar: rule table plus per-node tables derived once so
/// parse sessions never mutate the pool.
#[derive(Clone)]
pub struct Grammar {
    pool: ExprPool,
    rules: IndexMap<Arc<str>, ExprId>,
    start: Arc<str>,
    stop_count: u32,
    forgotten: Vec<ExprId>,
    forgotten_bodies: Vec<ExprId>,
    rule_target: Vec<Option<u32>>,
    nested_inner: HashMap<ExprId, ExprId>,
    has_pred: Vec<bool>,
    value_dep: Vec<bool>,
    rule_has_pred: Vec<bool>,
}

impl fmt::Debug for Grammar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut m = f.debug_map();
        for (name, &body) in &self.rules {
            m.entry(name, &self.display(body));
        }
        m.finish()
    }
}

impl Grammar {
    fn finalize(builder: GrammarBuilder, start: Arc<str>) -> Grammar {
        let GrammarBuilder {
            mut pool,
            rules,
            stop_count,
        } = builder;
        let mut forgotten: Vec<ExprId> = Vec::new();
        let mut nested_inner = HashMap::new();
        // Newly interned nodes land past `i` and are visited by this loop.
        let mut i = 0;
        while i < pool.len() {
            let id = ExprId(i as u32);
            let node = pool.get(id).clone();
            let f = forget_node(&mut pool, &forgotten, id, &node);
            forgotten.push(f);
            if let ExprNode::Nested { start, mid, end } = node {
                let tail = pool.seq(mid, end);
                nested_inner.insert(id, pool.seq(start, tail));
            }
            i += 1;
        }
        let forgotten_bodies = rules.values().map(|b| forgotten[b.index()]).collect();
        let rule_target = pool
            .nodes
            .iter()
            .map(|n| match n {
                ExprNode::RuleRef(name) => rules.get_index_of(name).map(|i| i as u32),
                _ => None,
            })
            .collect();
        let mut g = Grammar {
            pool,
            rules,
            start,
            stop_count,
            forgotten,
            forgotten_bodies,
            rule_target,
            nested_inner,
            has_pred: Vec::new(),
            value_dep: Vec::new(),
            rule_has_pred: Vec::new(),
        };
        let (has_pred, rule_has_pred) = g.reachability(|n| matches!(n, ExprNode::Pred(_)));
        let (value_dep, _) =
            g.reachability(|n| matches!(n, ExprNode::Pred(_) | ExprNode::Enter { .. }));
        g.has_pred = has_pred;
        g.rule_has_pred = rule_has_pred;
        g.value_dep = value_dep;
        g
    }

    /// Least fixpoint of "a node satisfying `base` is reachable", following
    /// children and rule references.
    fn reachability(&self, base: impl Fn(&ExprNode) -> bool) -> (Vec<bool>, Vec<bool>) {
        let mut rule_flag = vec![false; self.rules.len()];
        loop {
            let mut flags = vec![false; self.pool.len()];
            for id in self.pool.ids() {
                let node = self.pool.get(id);
                flags[id.index()] = base(node)
                    || node.children().iter().any(|c| flags[c.index()])
                    || self.rule_target[id.index()].is_some_and(|r| rule_flag[r as usize]);
            }
            let next: Vec<bool> = self.rules.values().map(|b| flags[b.index()]).collect();
            if next == rule_flag {
                return (flags, rule_flag);
            }
            rule_flag = next;
        }
    }

    pub fn pool(&self) -> &ExprPool {
        &self.pool
    }

    pub fn node(&self, id: ExprId) -> &ExprNode {
        self.pool.get(id)
    }

    pub fn rules(&self) -> &IndexMap<Arc<str>, ExprId> {
        &self.rules
    }

    pub fn rule(&self, name: &str) -> Option<ExprId> {
        self.rules.get(name).copied()
    }

    pub fn start(&self) -> &str {
        &self.start
    }

    pub fn stop_count(&self) -> u32 {
        self.stop_count
    }

    /// Same rules, different start rule.
    pub fn with_start(&self, start: &str) -> Grammar {
        let mut g = self.clone();
        g.start = Arc::from(start);
        g
    }

    /// Copy of the rule table for rewriting; existing ids stay valid.
    pub fn to_builder(&self) -> GrammarBuilder {
        GrammarBuilder {
            pool: self.pool.clone(),
            rules: self.rules.clone(),
            stop_count: self.stop_count,
        }
    }

    /// Index and body of the rule a `RuleRef` node resolves to.
    pub fn rule_target(&self, id: ExprId) -> Option<(usize, ExprId)> {
        self.rule_target[id.index()].map(|r| (r as usize, self.rules[r as usize]))
    }

    pub fn rule_body(&self, index: usize) -> ExprId {
        self.rules[index]
    }

    pub fn rule_name(&self, index: usize) -> &Arc<str> {
        self.rules.get_index(index).expect("rule index").0
    }

    pub fn forgotten_rule_body(&self, index: usize) -> ExprId {
        self.forgotten_bodies[index]
    }

    /// `e` with every action and binding erased; predicates are kept.
    pub fn forget_semantic_actions(&self, e: ExprId) -> ExprId {
        self.forgotten[e.index()]
    }

    /// Whether a predicate is reachable from `e`, rule calls included.
    pub fn has_predicate(&self, e: ExprId) -> bool {
        self.has_pred[e.index()]
    }

    pub fn rule_has_predicate(&self, index: usize) -> bool {
        self.rule_has_pred[index]
    }

    /// Whether matching `e` can depend on semantic values: a predicate or
    /// an enter operator is reachable.
    pub fn value_dependent(&self, e: ExprId) -> bool {
        self.value_dep[e.index()]
    }

    /// `Seq(start, mid, end)` of a `Nested` node.
    pub fn nested_inner(&self, nested: ExprId) -> ExprId {
        self.nested_inner[&nested]
    }

    /// A `Switch` whose head ends in `SuccessState` never reaches its
    /// continuation: it is a lookahead.
    pub fn is_lookahead_head(&self, mut head: ExprId) -> bool {
        loop {
            match self.node(head) {
                ExprNode::SuccessState => return true,
                ExprNode::Seq(_, t) => head = *t,
                _ => return false,
            }
        }
    }

    pub fn display(&self, e: ExprId) -> String {
        let mut out = String::new();
        write_expr(&self.pool, e, Prec::Choice, &mut out);
        out
    }
}

fn forget_node(pool: &mut ExprPool, forgotten: &[ExprId], id: ExprId, node: &ExprNode) -> ExprId {
    let f = |c: ExprId| forgotten[c.index()];
    match node {
        ExprNode::Act(_) => ExprPool::EPSILON,
        ExprNode::Bind { body, .. } | ExprNode::Reduce { body, .. } => f(*body),
        // The entered text is a value, so the source keeps its actions.
        ExprNode::Enter { .. } => id,
        ExprNode::Seq(a, b) => pool.intern(ExprNode::Seq(f(*a), f(*b))),
        ExprNode::Choice(a, b) => pool.intern(ExprNode::Choice(f(*a), f(*b))),
        ExprNode::Switch {
            head,
            on_success,
            on_fail,
            merge,
        } => pool.intern(ExprNode::Switch {
            head: f(*head),
            on_success: f(*on_success),
            on_fail: f(*on_fail),
            merge: *merge,
        }),
        ExprNode::Many { stop, body } => pool.intern(ExprNode::Many {
            stop: *stop,
            body: f(*body),
        }),
        ExprNode::Nested { start, mid, end } => pool.intern(ExprNode::Nested {
            start: f(*start),
            mid: f(*mid),
            end: f(*end),
        }),
        _ => id,
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Prec {
    Choice,
    Seq,
    Postfix,
}

/// Surface-like rendering. Desugared forms print as their sugar: star loops
/// as `e*`, lookahead switches as `&e`/`~e`, reduce steps transparently.
fn write_expr(pool: &ExprPool, e: ExprId, ctx: Prec, out: &mut String) {
    let paren = |p: Prec, out: &mut String, f: &mut dyn FnMut(&mut String)| {
        if p < ctx {
            out.push('(');
            f(out);
            out.push(')');
        } else {
            f(out);
        }
    };
    match pool.get(e) {
        ExprNode::Literal(s) => {
            out.push('\'');
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
        }
        ExprNode::AnyChar => out.push('.'),
        ExprNode::Class(cls) => out.push_str(&class_to_string(cls)),
        ExprNode::Seq(..) => {
            let items = pool.seq_items(e);
            paren(Prec::Seq, out, &mut |out| {
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(' ');
                    }
                    write_expr(pool, *item, Prec::Postfix, out);
                }
            });
        }
        ExprNode::Choice(..) => {
            let items = pool.choice_items(e);
            paren(Prec::Choice, out, &mut |out| {
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push_str(" | ");
                    }
                    write_expr(pool, *item, Prec::Seq, out);
                }
            });
        }
        ExprNode::Switch {
            head,
            on_success,
            on_fail,
            ..
        } => {
            let inner = match pool.get(*head) {
                ExprNode::Seq(h, t) if *t == ExprPool::SUCCESS => Some(*h),
                _ => None,
            };
            match inner {
                Some(h) if *on_success == ExprPool::EPSILON && *on_fail == ExprPool::FAIL => {
                    out.push('&');
                    write_expr(pool, h, Prec::Postfix, out);
                }
                Some(h) if *on_success == ExprPool::FAIL && *on_fail == ExprPool::EPSILON => {
                    out.push('~');
                    write_expr(pool, h, Prec::Postfix, out);
                }
                _ => {
                    out.push_str("switch(");
                    write_expr(pool, *head, Prec::Choice, out);
                    out.push_str(", ");
                    write_expr(pool, *on_success, Prec::Choice, out);
                    out.push_str(", ");
                    write_expr(pool, *on_fail, Prec::Choice, out);
                    out.push(')');
                }
            }
        }
        ExprNode::Many { stop, body } => {
            let st = pool.intern_lookup(&ExprNode::Stop(*stop));
            match pool.get(*body) {
                ExprNode::Choice(x, s) if Some(*s) == st => {
                    write_expr(pool, *x, Prec::Postfix, out);
                    out.push('*');
                }
                ExprNode::Choice(s, x) if Some(*s) == st => {
                    write_expr(pool, *x, Prec::Postfix, out);
                    out.push_str("*?");
                }
                _ => {
                    out.push('(');
                    write_expr(pool, *body, Prec::Choice, out);
                    out.push_str(")**");
                }
            }
        }
        ExprNode::Stop(t) => out.push_str(&format!("stop{}", t.0)),
        ExprNode::Nested { start, mid, end } => {
            if *start == ExprPool::EPSILON && *end == ExprPool::EPSILON {
                if let ExprNode::Choice(..) = pool.get(*mid) {
                    let items = pool.choice_items(*mid);
                    paren(Prec::Choice, out, &mut |out| {
                        for (i, item) in items.iter().enumerate() {
                            if i > 0 {
                                out.push_str(" / ");
                            }
                            write_expr(pool, *item, Prec::Seq, out);
                        }
                    });
                    return;
                }
            }
            out.push_str("nested(");
            write_expr(pool, *start, Prec::Choice, out);
            out.push_str(", ");
            write_expr(pool, *mid, Prec::Choice, out);
            out.push_str(", ");
            write_expr(pool, *end, Prec::Choice, out);
            out.push(')');
        }
        ExprNode::RuleRef(name) => out.push_str(name),
        ExprNode::Act(a) => out.push_str(&format!("{{{a}}}")),
        ExprNode::Pred(a) => out.push_str(&format!("&{{{a}}}")),
        ExprNode::Bind { var, body } => {
            write_expr(pool, *body, Prec::Postfix, out);
            out.push(':');
            out.push_str(var);
        }
        ExprNode::Enter { source, inner } => {
            write_expr(pool, *source, Prec::Postfix, out);
            out.push('[');
            write_expr(pool, *inner, Prec::Choice, out);
            out.push(']');
        }
        ExprNode::Reduce { body, .. } => write_expr(pool, *body, ctx, out),
        ExprNode::SuccessState => out.push_str("success"),
        ExprNode::FailState => out.push_str("fail"),
        ExprNode::Epsilon => out.push_str("''"),
    }
}

impl ExprPool {
    fn intern_lookup(&self, node: &ExprNode) -> Option<ExprId> {
        self.index.get(node).copied()
    }
}

pub(crate) fn class_to_string(cls: &CharClass) -> String {
    let mut s = String::from("[");
    if cls.negated {
        s.push('^');
    }
    let esc = |c: char, s: &mut String| match c {
        ']' | '\\' | '-' | '^' => {
            s.push('\\');
            s.push(c);
        }
        '\n' => s.push_str("\\n"),
        '\t' => s.push_str("\\t"),
        c => s.push(c),
    };
    for &(lo, hi) in &cls.ranges {
        esc(lo, &mut s);
        if hi != lo {
            s.push('-');
            esc(hi, &mut s);
        }
    }
    s.push(']');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interning_is_identity_on_equal_nodes() {
        let mut p = ExprPool::new();
        let a1 = p.literal("a");
        let a2 = p.literal("a");
        assert_eq!(a1, a2);
        let b = p.literal("b");
        assert_ne!(a1, b);
        let s1 = p.seq(a1, b);
        let s2 = p.seq(a2, b);
        assert_eq!(s1, s2);
    }

    #[test]
    fn simplification_identities() {
        let mut p = ExprPool::new();
        let a = p.literal("a");
        assert_eq!(p.seq(ExprPool::EPSILON, a), a);
        assert_eq!(p.seq(a, ExprPool::EPSILON), a);
        assert_eq!(p.choice(ExprPool::FAIL, a), a);
        assert_eq!(p.choice(a, ExprPool::FAIL), a);
        assert_eq!(p.literal(""), ExprPool::EPSILON);
        let b = p.literal("b");
        let sw = p.intern(ExprNode::Switch {
            head: a,
            on_success: b,
            on_fail: b,
            merge: Merge::Identity,
        });
        assert_eq!(sw, b);
        // Impure heads are kept.
        let act = p.intern(ExprNode::Act(ActionExpr::Int(1)));
        let sw = p.intern(ExprNode::Switch {
            head: act,
            on_success: b,
            on_fail: b,
            merge: Merge::Identity,
        });
        assert_ne!(sw, b);
    }

    #[test]
    fn stop_set_operations() {
        let a = StopSet::single(StopToken(1));
        let b = StopSet::single(StopToken(70));
        let u = a.union(&b);
        assert!(u.contains(StopToken(1)) && u.contains(StopToken(70)));
        assert_eq!(u.difference(&b), a);
        assert_eq!(u.intersection(&a), a);
        assert_eq!(u.without(StopToken(70)), a);
        assert_eq!(a.union(&StopSet::new()), a);
        assert!(a.intersection(&b).is_empty());
        assert_eq!(u.iter().map(|t| t.0).collect::<Vec<_>>(), vec![1, 70]);
    }

    #[test]
    fn forgetting_actions() {
        let mut b = GrammarBuilder::new();
        let a = b.pool.literal("a");
        let act = b.pool.intern(ExprNode::Act(ActionExpr::Int(1)));
        let body = b.pool.seq(act, a);
        let bound = b.pool.intern(ExprNode::Bind {
            var: "x".into(),
            body,
        });
        let pred = b.pool.intern(ExprNode::Pred(ActionExpr::Int(1)));
        let with_pred = b.pool.seq(bound, pred);
        b.define("S", with_pred);
        let g = b.finish("S");
        assert_eq!(g.forget_semantic_actions(act), ExprPool::EPSILON);
        assert_eq!(g.forget_semantic_actions(body), a);
        let f = g.forget_semantic_actions(with_pred);
        assert_eq!(g.node(f), &ExprNode::Seq(a, pred));
        assert_eq!(g.forget_semantic_actions(f), f);
    }

    #[test]
    fn predicate_reachability_through_rules() {
        let mut b = GrammarBuilder::new();
        let a = b.pool.literal("a");
        let pred = b.pool.intern(ExprNode::Pred(ActionExpr::Int(1)));
        let bref = b.pool.rule_ref("B");
        b.define("A", bref);
        let body = b.pool.seq(a, pred);
        b.define("B", body);
        let g = b.finish("A");
        assert!(!g.has_predicate(a));
        assert!(g.has_predicate(body));
        assert!(g.has_predicate(bref));
    }
}
