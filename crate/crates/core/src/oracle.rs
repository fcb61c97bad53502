//! Reference matcher: plain backtracking in continuation-passing style.
//! `nested` is an ordinary sequence here and nothing is memoized, so every
//! derivation is reachable in priority order.

use std::sync::Arc;

use thiserror::Error;

use crate::action::{eval_action, ActionEnv, ActionError, Closure, Node, Value};
use crate::expr::{ExprId, ExprNode, Grammar, StopSet, StopToken};

pub const DEFAULT_BUDGET: u64 = 10_000_000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OracleOptions {
    /// Maximum number of match invocations.
    pub budget: u64,
    pub full_match: bool,
    /// Keep enumerating after the first success, collecting up to this many
    /// derivations.
    pub all_derivations: Option<usize>,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            budget: DEFAULT_BUDGET,
            full_match: true,
            all_derivations: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OracleOutcome {
    pub matched: bool,
    pub end: Option<usize>,
    pub value: Option<Value>,
    /// Match invocations performed.
    pub derivations_tried: u64,
    /// `(end, value)` of every derivation found, in priority order. Empty
    /// unless all derivations were requested.
    pub derivations: Vec<(usize, Value)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("unknown start rule `{0}`")]
    UnknownRule(String),
    #[error("budget of {0} match calls exhausted")]
    BudgetExhausted(u64),
    #[error("action failed at position {pos}: {source}")]
    Action { pos: usize, source: ActionError },
    #[error("enter at position {pos} received a value without text")]
    EnterNotText { pos: usize },
}

#[derive(Clone)]
struct St {
    pos: usize,
    stops: StopSet,
    closure: Closure,
    returned: Option<Value>,
    last: Value,
    children: Vec<(Value, usize, usize)>,
    scope: usize,
}

impl St {
    fn at(pos: usize) -> St {
        St {
            pos,
            stops: StopSet::new(),
            closure: Closure::default(),
            returned: None,
            last: Value::None,
            children: Vec::new(),
            scope: pos,
        }
    }
}

/// Continuation: returns true to stop the search.
type Cont<'a, 'g, 'i> = dyn FnMut(&mut Oracle<'g, 'i>, St) -> bool + 'a;

struct Oracle<'g, 'i> {
    g: &'g Grammar,
    input: &'i str,
    budget: u64,
    steps: u64,
    error: Option<OracleError>,
}

fn rule_value(rule: &Arc<str>, start: usize, s: &St) -> Value {
    if let Some(v) = &s.returned {
        return v.clone();
    }
    if let [(v, a, b)] = s.children.as_slice() {
        if *a == start && *b == s.pos {
            return v.clone();
        }
    }
    Value::Node(Arc::new(Node {
        rule: rule.clone(),
        start,
        end: s.pos,
        children: s.children.iter().map(|(v, _, _)| v.clone()).collect(),
    }))
}

impl<'g, 'i> Oracle<'g, 'i> {
    fn abort(&mut self, err: OracleError) -> bool {
        self.error.get_or_insert(err);
        true
    }

    fn m(&mut self, e: ExprId, s: St, k: &mut Cont<'_, 'g, 'i>) -> bool {
        stacker::maybe_grow(64 * 1024, 8 * 1024 * 1024, || self.m_inner(e, s, k))
    }

    fn m_inner(&mut self, e: ExprId, mut s: St, k: &mut Cont<'_, 'g, 'i>) -> bool {
        if self.error.is_some() {
            return true;
        }
        self.steps += 1;
        if self.steps > self.budget {
            return self.abort(OracleError::BudgetExhausted(self.budget));
        }
        let g = self.g;
        let rest = &self.input[s.pos..];
        match g.node(e) {
            ExprNode::Literal(lit) => {
                if !rest.starts_with(&**lit) {
                    return false;
                }
                s.pos += lit.len();
                k(self, s)
            }
            ExprNode::AnyChar => match rest.chars().next() {
                Some(c) => {
                    s.pos += c.len_utf8();
                    k(self, s)
                }
                None => false,
            },
            ExprNode::Class(cls) => match rest.chars().next() {
                Some(c) if cls.matches(c) => {
                    s.pos += c.len_utf8();
                    k(self, s)
                }
                _ => false,
            },
            ExprNode::Seq(a, b) => {
                let b = *b;
                self.m(*a, s, &mut |o, s2| o.m(b, s2, k))
            }
            ExprNode::Choice(a, b) => self.m(*a, s.clone(), k) || self.m(*b, s, k),
            ExprNode::Switch {
                head,
                on_success,
                on_fail,
                ..
            } => {
                // The head ends at its continuation or at a state node.
                let ok = self.m(*head, s.clone(), &mut |_, _| true);
                if self.error.is_some() {
                    return true;
                }
                self.m(if ok { *on_success } else { *on_fail }, s, k)
            }
            ExprNode::Many { stop, body } => self.many(*stop, *body, s, k),
            ExprNode::Stop(t) => {
                s.stops = s.stops.with(*t);
                k(self, s)
            }
            ExprNode::Nested { start, mid, end } => {
                let (mid, end) = (*mid, *end);
                self.m(*start, s, &mut |o, s2| {
                    o.m(mid, s2, &mut |o, s3| o.m(end, s3, k))
                })
            }
            ExprNode::RuleRef(_) => match g.rule_target(e) {
                Some((rule, _)) => self.call(rule, s, k),
                None => false,
            },
            ExprNode::Act(a) => {
                let env = ActionEnv {
                    input: self.input,
                    closure: &s.closure,
                    scope: (s.scope, s.pos),
                };
                match eval_action(a, &env) {
                    Ok(v) => {
                        s.returned = Some(v.clone());
                        s.last = v;
                        k(self, s)
                    }
                    Err(source) => self.abort(OracleError::Action { pos: s.pos, source }),
                }
            }
            ExprNode::Pred(a) => {
                let env = ActionEnv {
                    input: self.input,
                    closure: &s.closure,
                    scope: (s.scope, s.pos),
                };
                match eval_action(a, &env) {
                    Ok(Value::Bool(true)) => k(self, s),
                    Ok(Value::Bool(false)) => false,
                    Ok(_) => self.abort(OracleError::Action {
                        pos: s.pos,
                        source: ActionError::NotBoolean,
                    }),
                    Err(source) => self.abort(OracleError::Action { pos: s.pos, source }),
                }
            }
            ExprNode::Bind { var, body } => {
                let (start, scope) = (s.pos, s.scope);
                s.last = Value::None;
                s.scope = s.pos;
                self.m(*body, s, &mut |o, mut s2| {
                    let v = if s2.last.is_none() {
                        Value::Text { start, end: s2.pos }
                    } else {
                        s2.last.clone()
                    };
                    s2.closure = s2.closure.bind(var.clone(), v.clone());
                    s2.last = v;
                    s2.scope = scope;
                    k(o, s2)
                })
            }
            ExprNode::Enter { source, inner } => {
                let (start, inner) = (s.pos, *inner);
                s.last = Value::None;
                self.m(*source, s, &mut |o, s2| o.enter(inner, start, s2, k))
            }
            ExprNode::Reduce {
                rule,
                var,
                body,
                seed,
            } => {
                let start = s.scope;
                let caller = s.clone();
                let prev = s.returned.clone().unwrap_or_default();
                let mut inner = St {
                    closure: Closure::default(),
                    returned: None,
                    last: Value::None,
                    children: Vec::new(),
                    ..s
                };
                if !*seed {
                    if let Some(var) = var {
                        inner.closure = inner.closure.bind(var.clone(), prev.clone());
                    }
                    inner.children.push((prev, start, inner.pos));
                }
                self.m(*body, inner, &mut |o, s2| {
                    let v = rule_value(rule, start, &s2);
                    let back = St {
                        pos: s2.pos,
                        stops: s2.stops,
                        returned: Some(v.clone()),
                        last: v,
                        ..caller.clone()
                    };
                    k(o, back)
                })
            }
            ExprNode::SuccessState => true,
            ExprNode::FailState => false,
            ExprNode::Epsilon => k(self, s),
        }
    }

    fn many(&mut self, stop: StopToken, body: ExprId, mut s: St, k: &mut Cont<'_, 'g, 'i>) -> bool {
        if s.stops.contains(stop) {
            s.stops = s.stops.without(stop);
            return k(self, s);
        }
        self.m(body, s, &mut |o, s2| o.many(stop, body, s2, k))
    }

    fn call(&mut self, rule: usize, s: St, k: &mut Cont<'_, 'g, 'i>) -> bool {
        let start = s.pos;
        let caller = s.clone();
        let callee = St {
            pos: s.pos,
            stops: s.stops,
            ..St::at(start)
        };
        let name = self.g.rule_name(rule).clone();
        self.m(self.g.rule_body(rule), callee, &mut |o, s2| {
            let v = rule_value(&name, start, &s2);
            let mut back = St {
                pos: s2.pos,
                stops: s2.stops,
                last: v.clone(),
                ..caller.clone()
            };
            back.children.push((v, start, back.pos));
            k(o, back)
        })
    }

    /// The first full match of `inner` on the produced text; no retries.
    fn enter(&mut self, inner: ExprId, start: usize, mut s: St, k: &mut Cont<'_, 'g, 'i>) -> bool {
        let v = if s.last.is_none() {
            Value::Text { start, end: s.pos }
        } else {
            s.last.clone()
        };
        let Some(text) = v.as_text(self.input).map(str::to_owned) else {
            return self.abort(OracleError::EnterNotText { pos: start });
        };
        let mut sub = Oracle {
            g: self.g,
            input: &text,
            budget: self.budget - self.steps,
            steps: 0,
            error: None,
        };
        let len = text.len();
        let mut produced = None;
        sub.m(inner, St::at(0), &mut |_, s2| {
            if s2.pos != len {
                return false;
            }
            produced = Some(match s2.returned {
                Some(v) => v,
                None if !s2.last.is_none() => s2.last,
                None => Value::Text { start: 0, end: len },
            });
            true
        });
        self.steps += sub.steps;
        if let Some(err) = sub.error {
            return self.abort(err);
        }
        match produced {
            Some(v) => {
                s.last = v.detach(&text);
                k(self, s)
            }
            None => false,
        }
    }
}

/// Matches rule `start` against `input` by exhaustive backtracking.
pub fn oracle_match(
    g: &Grammar,
    start: &str,
    input: &str,
    opts: &OracleOptions,
) -> Result<OracleOutcome, OracleError> {
    let rule = g
        .rules()
        .get_index_of(start)
        .ok_or_else(|| OracleError::UnknownRule(start.to_owned()))?;
    let mut o = Oracle {
        g,
        input,
        budget: opts.budget.max(1),
        steps: 0,
        error: None,
    };
    let limit = opts.all_derivations.unwrap_or(1).max(1);
    let mut found: Vec<(usize, Value)> = Vec::new();
    o.call(rule, St::at(0), &mut |_, s| {
        if opts.full_match && s.pos != input.len() {
            return false;
        }
        found.push((s.pos, s.last));
        found.len() >= limit
    });
    if let Some(err) = o.error {
        return Err(err);
    }
    let first = found.first().cloned();
    Ok(OracleOutcome {
        matched: first.is_some(),
        end: first.as_ref().map(|d| d.0),
        value: first.map(|d| d.1),
        derivations_tried: o.steps,
        derivations: if opts.all_derivations.is_some() {
            found
        } else {
            Vec::new()
        },
    })
}
