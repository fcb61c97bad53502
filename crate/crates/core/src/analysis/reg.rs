//! The `reg` functor: a regular over-approximation of what an expression
//! can consume.

use std::collections::{HashMap, HashSet};

use super::reglang::{CharSet, NfaBuilder, RegLang};
use crate::expr::{ExprId, ExprNode, ExprPool, Grammar};

/// Above this many automaton states, remaining subexpressions are
/// approximated by `Σ*`.
const STATE_BUDGET: usize = 20_000;

struct RuleFrame {
    rule: usize,
    entry: u32,
    exit: u32,
    /// States equivalent to `exit` up to rule-exit ε edges.
    tail: HashSet<u32>,
    /// States equivalent to `entry` up to rule-entry ε edges.
    head: HashSet<u32>,
}

struct Builder<'g> {
    g: &'g Grammar,
    nfa: NfaBuilder,
    stack: Vec<RuleFrame>,
}

/// `reg(e)`. Recursive rule references in tail position loop back to the
/// rule's entry, references in leftmost position loop from the rule's exit;
/// any other recursive reference becomes `Σ*`.
pub fn reg(g: &Grammar, e: ExprId) -> RegLang {
    let mut b = Builder {
        g,
        nfa: NfaBuilder::new(),
        stack: Vec::new(),
    };
    let (s, a) = (b.nfa.state(), b.nfa.state());
    b.build(e, s, a);
    b.nfa.finish(s, a)
}

impl Builder<'_> {
    fn build(&mut self, e: ExprId, from: u32, to: u32) {
        if self.nfa.len() > STATE_BUDGET {
            self.nfa.any_string(from, to);
            return;
        }
        match self.g.node(e) {
            ExprNode::Literal(s) => {
                let mut cur = from;
                let mut chars = s.chars().peekable();
                while let Some(c) = chars.next() {
                    let next = if chars.peek().is_some() {
                        self.nfa.state()
                    } else {
                        to
                    };
                    self.nfa.edge(cur, CharSet::single(c), next);
                    cur = next;
                }
            }
            ExprNode::AnyChar => self.nfa.edge(from, CharSet::full(), to),
            ExprNode::Class(cls) => {
                let set = CharSet::from_ranges(cls.ranges.iter().copied());
                let set = if cls.negated { set.complement() } else { set };
                self.nfa.edge(from, set, to);
            }
            ExprNode::Seq(head, tail) => {
                if let Some(look) = positive_lookahead(self.g, *head) {
                    self.lookahead_seq(look, *tail, from, to);
                    return;
                }
                let mid = self.nfa.state();
                self.inherit(*head, *tail, from, mid, to);
                self.build(*head, from, mid);
                self.build(*tail, mid, to);
            }
            ExprNode::Choice(a, b) => {
                self.build(*a, from, to);
                self.build(*b, from, to);
            }
            // Tails run at the original position; the head consumes nothing.
            ExprNode::Switch {
                on_success,
                on_fail,
                ..
            } => {
                self.build(*on_success, from, to);
                self.build(*on_fail, from, to);
            }
            ExprNode::Many { body, .. } => {
                let hub = self.nfa.state();
                self.nfa.eps(from, hub);
                self.nfa.eps(hub, to);
                self.build(*body, hub, hub);
            }
            ExprNode::Nested { start, end, .. } => {
                let (m1, m2) = (self.nfa.state(), self.nfa.state());
                self.build(*start, from, m1);
                self.nfa.any_string(m1, m2);
                self.build(*end, m2, to);
            }
            ExprNode::RuleRef(_) => self.rule(e, from, to),
            ExprNode::Bind { body, .. } | ExprNode::Reduce { body, .. } => {
                self.build(*body, from, to)
            }
            ExprNode::Enter { source, .. } => self.build(*source, from, to),
            ExprNode::Stop(_) | ExprNode::Act(_) | ExprNode::Pred(_) | ExprNode::Epsilon => {
                self.nfa.eps(from, to)
            }
            ExprNode::SuccessState => self.nfa.any_string(from, to),
            ExprNode::FailState => {}
        }
    }

    /// Carries head/tail equivalence across a sequence midpoint when the
    /// side in between consumes nothing.
    fn inherit(&mut self, head: ExprId, tail: ExprId, from: u32, mid: u32, to: u32) {
        let head_empty = self.g.forget_semantic_actions(head) == ExprPool::EPSILON;
        let tail_empty = self.g.forget_semantic_actions(tail) == ExprPool::EPSILON;
        for f in &mut self.stack {
            if head_empty && f.head.contains(&from) {
                f.head.insert(mid);
            }
            if tail_empty && f.tail.contains(&to) {
                f.tail.insert(mid);
            }
        }
    }

    /// `&e t`: words of `t` that are prefixes of, or extended by, a word of `e`.
    fn lookahead_seq(&mut self, look: ExprId, tail: ExprId, from: u32, to: u32) {
        if !self.stack.is_empty() {
            // Inside a rule the tail may close recursive loops through the
            // active frames, so it is built in place and left unrestricted.
            self.build(tail, from, to);
            return;
        }
        let e = reg(self.g, look);
        let guard = e.prefix_closure().union(&e.concat(&RegLang::any_string()));
        let both = reg(self.g, tail).intersect(&guard);
        self.nfa.embed(&both, from, to);
    }

    fn rule(&mut self, e: ExprId, from: u32, to: u32) {
        let Some((rule, body)) = self.g.rule_target(e) else {
            return;
        };
        if let Some(frame) = self.stack.iter().find(|f| f.rule == rule) {
            let (entry, exit) = (frame.entry, frame.exit);
            let tail = frame.tail.contains(&to);
            let head = frame.head.contains(&from);
            if tail {
                self.nfa.eps(from, entry);
            }
            if head {
                self.nfa.eps(exit, to);
            }
            if !tail && !head {
                self.nfa.any_string(from, to);
            }
            return;
        }
        let (entry, exit) = (self.nfa.state(), self.nfa.state());
        self.nfa.eps(from, entry);
        self.nfa.eps(exit, to);
        for f in &mut self.stack {
            if f.tail.contains(&to) {
                f.tail.insert(exit);
            }
            if f.head.contains(&from) {
                f.head.insert(entry);
            }
        }
        self.stack.push(RuleFrame {
            rule,
            entry,
            exit,
            tail: HashSet::from([exit]),
            head: HashSet::from([entry]),
        });
        self.build(body, entry, exit);
        self.stack.pop();
    }
}

/// The body `e` of a `&e` switch.
fn positive_lookahead(g: &Grammar, id: ExprId) -> Option<ExprId> {
    let ExprNode::Switch {
        head,
        on_success,
        on_fail,
        ..
    } = g.node(id)
    else {
        return None;
    };
    if *on_success != ExprPool::EPSILON || *on_fail != ExprPool::FAIL {
        return None;
    }
    match g.node(*head) {
        ExprNode::Seq(e, s) if *s == ExprPool::SUCCESS => Some(*e),
        _ => None,
    }
}

/// Memoizing front end for repeated queries on one grammar.
pub struct RegCache<'g> {
    g: &'g Grammar,
    langs: HashMap<ExprId, RegLang>,
}

impl<'g> RegCache<'g> {
    pub fn new(g: &'g Grammar) -> RegCache<'g> {
        RegCache {
            g,
            langs: HashMap::new(),
        }
    }

    pub fn grammar(&self) -> &'g Grammar {
        self.g
    }

    pub fn get(&mut self, e: ExprId) -> &RegLang {
        let g = self.g;
        self.langs.entry(e).or_insert_with(|| reg(g, e))
    }
}

/// Whether `e` may match the empty string.
pub fn empty(g: &Grammar, e: ExprId) -> bool {
    reg(g, e).nullable()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FirstChars {
    pub chars: CharSet,
    /// `e` may match the empty string.
    pub nullable: bool,
}

pub fn first_chars(g: &Grammar, e: ExprId) -> FirstChars {
    let l = reg(g, e);
    FirstChars {
        chars: l.first_chars(),
        nullable: l.nullable(),
    }
}

/// Whether `reg(e1)Σ*` and `reg(e2)Σ*` intersect. When they do not, the
/// order of `e1 | e2` does not matter.
pub fn overlap(g: &Grammar, e1: ExprId, e2: ExprId) -> bool {
    let any = RegLang::any_string();
    let a = reg(g, e1).concat(&any);
    let b = reg(g, e2).concat(&any);
    !a.disjoint(&b)
}
