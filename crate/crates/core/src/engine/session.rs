use std::cell::Cell;
use std::collections::hash_map::Entry;
use std::collections::{HashMap, HashSet};
use std::rc::Rc;
use std::sync::Arc;

use super::cont::{Children, Cont, Cursor, Frame, FrameKey, Saved, Shapes, K, NO_SHAPE};
use super::split::CommitPoints;
use super::{EngineError, EngineOptions, ParseOutcome, Statistics, StructureWarning, WarningKind};
use crate::action::{eval_action, ActionEnv, ActionError, ActionExpr, Closure, Node, Value};
use crate::analysis::SizeTable;
use crate::expr::{ExprId, ExprNode, ExprPool, Grammar, State};
use crate::memo::{ChoiceEvent, MemoEntry, MemoKey, MemoStore};

const RED_ZONE: usize = 256 * 1024;
const STACK_SEGMENT: usize = 16 * 1024 * 1024;

enum Work {
    /// `raw` skips the memo check of the node itself.
    Eval {
        e: ExprId,
        c: Cursor,
        k: K,
        raw: bool,
    },
    Resume(K, Cursor),
}

enum Step {
    Go(Work),
    Done(Option<Cursor>),
}

fn eval(e: ExprId, c: Cursor, k: K) -> Step {
    Step::Go(Work::Eval {
        e,
        c,
        k,
        raw: false,
    })
}

fn resume(k: K, c: Cursor) -> Step {
    Step::Go(Work::Resume(k, c))
}

pub(crate) struct Session<'g, 'i> {
    g: &'g Grammar,
    input: &'i str,
    opts: EngineOptions,
    memo: MemoStore,
    stats: Statistics,
    shapes: Shapes,
    commits: Option<CommitPoints<'g>>,
    sizes: Option<Rc<SizeTable>>,
    value_free: HashMap<ExprId, bool>,
    local_accept: Option<K>,
    depth: usize,
    limit: usize,
    max_depth: usize,
    error: Option<EngineError>,
    ends: HashMap<(ExprId, usize), usize>,
    starts: HashMap<(ExprId, usize), usize>,
    warned: HashSet<(ExprId, WarningKind)>,
    warnings: Vec<StructureWarning>,
    trace: Vec<String>,
}

impl<'g, 'i> Session<'g, 'i> {
    fn new(
        g: &'g Grammar,
        input: &'i str,
        opts: EngineOptions,
        sizes: Option<Rc<SizeTable>>,
    ) -> Session<'g, 'i> {
        let limit = opts.depth_limit.unwrap_or(10 * input.len() + 1000);
        let sizes = if opts.fail_fast_bound {
            sizes.or_else(|| Some(Rc::new(SizeTable::new(g))))
        } else {
            None
        };
        let commits = (opts.commit_points && opts.memoize).then(|| CommitPoints::new(g));
        Session {
            g,
            input,
            memo: MemoStore::new(opts.compact),
            opts,
            stats: Statistics::default(),
            shapes: Shapes::default(),
            commits,
            sizes,
            value_free: HashMap::new(),
            local_accept: None,
            depth: 0,
            limit,
            max_depth: 0,
            error: None,
            ends: HashMap::new(),
            starts: HashMap::new(),
            warned: HashSet::new(),
            warnings: Vec::new(),
            trace: Vec::new(),
        }
    }

    fn accept(&mut self, end: bool) -> K {
        let shape = self.shapes.intern(FrameKey::Accept { end }, NO_SHAPE, 0);
        Rc::new(Cont {
            frame: Frame::Accept { end },
            next: None,
            shape,
            dependent: false,
        })
    }

    /// Continuation of a nested interior or switch head.
    fn local_accept(&mut self) -> K {
        if let Some(k) = &self.local_accept {
            return k.clone();
        }
        let k = self.accept(false);
        self.local_accept = Some(k.clone());
        k
    }

    fn min_size(&self, e: ExprId) -> u64 {
        self.sizes.as_ref().map_or(0, |s| s.min(e))
    }

    fn push(&mut self, frame: Frame, next: K) -> K {
        let (shape, dependent) = match &frame {
            Frame::Seq(t) => {
                let f = self.g.forget_semantic_actions(*t);
                // Action-only tails do not change what can match.
                let shape = if f == ExprPool::EPSILON {
                    next.shape
                } else {
                    self.shapes
                        .intern(FrameKey::Seq(f), next.shape, self.min_size(*t))
                };
                (shape, self.g.value_dependent(*t))
            }
            Frame::Loop { stop, body } => {
                let key = FrameKey::Loop(*stop, self.g.forget_semantic_actions(*body));
                (
                    self.shapes.intern(key, next.shape, 0),
                    self.g.value_dependent(*body),
                )
            }
            Frame::EnterEnd { .. } => (next.shape, true),
            _ => (next.shape, false),
        };
        let dependent = dependent || next.dependent;
        Rc::new(Cont {
            frame,
            next: Some(next),
            shape,
            dependent,
        })
    }

    /// Counts one rule invocation or loop iteration on the current path.
    fn bump(&mut self, pos: usize) -> bool {
        self.depth += 1;
        self.max_depth = self.max_depth.max(self.depth);
        if self.depth > self.limit {
            self.error.get_or_insert(EngineError::DepthExceeded {
                limit: self.limit,
                pos,
            });
            return false;
        }
        true
    }

    fn fail(&mut self, err: EngineError) -> Step {
        self.error.get_or_insert(err);
        Step::Done(None)
    }

    fn eval_with(&mut self, e: ExprId, c: Cursor, k: K, raw: bool) -> Option<Cursor> {
        stacker::maybe_grow(RED_ZONE, STACK_SEGMENT, || {
            self.run(Work::Eval { e, c, k, raw })
        })
    }

    fn eval(&mut self, e: ExprId, c: Cursor, k: K) -> Option<Cursor> {
        self.eval_with(e, c, k, false)
    }

    /// Runs tail calls in a loop; only non-tail sub-matches recurse.
    fn run(&mut self, mut work: Work) -> Option<Cursor> {
        let depth = self.depth;
        let out = loop {
            if self.error.is_some() {
                break None;
            }
            let step = match work {
                Work::Eval { e, c, k, raw } => self.step(e, c, k, raw),
                Work::Resume(k, c) => self.resume(k, c),
            };
            match step {
                Step::Go(w) => work = w,
                Step::Done(r) => break r,
            }
        };
        self.depth = depth;
        out
    }

    /// Whether `e` produces no values and runs no actions, not looking into
    /// called rules.
    fn value_free(&mut self, e: ExprId) -> bool {
        if let Some(&v) = self.value_free.get(&e) {
            return v;
        }
        let v = match self.g.node(e) {
            ExprNode::RuleRef(_)
            | ExprNode::Act(_)
            | ExprNode::Bind { .. }
            | ExprNode::Reduce { .. }
            | ExprNode::Enter { .. } => false,
            ExprNode::Switch {
                on_success,
                on_fail,
                ..
            } => {
                let (s, f) = (*on_success, *on_fail);
                self.value_free(s) && self.value_free(f)
            }
            node => node.children().into_iter().all(|c| self.value_free(c)),
        };
        self.value_free.insert(e, v);
        v
    }

    /// Matches `e` under `k` through the memo table.
    fn memo_eval(&mut self, e: ExprId, c: Cursor, k: K) -> Option<Cursor> {
        if !self.opts.memoize || k.dependent || self.g.value_dependent(e) {
            return self.eval_with(e, c, k, true);
        }
        let key = MemoKey {
            expr: self.g.forget_semantic_actions(e),
            pos: c.pos,
            cont: k.shape,
            stops: c.stops.clone(),
        };
        if let Some(entry) = self.memo.lookup(&key).cloned() {
            if entry.state == State::Fail {
                return None;
            }
            let local = self
                .local_accept
                .as_ref()
                .is_some_and(|l| Rc::ptr_eq(l, &k));
            if c.lookahead || (local && self.value_free(e)) {
                let mut stub = c;
                stub.pos = entry.end;
                stub.stops = entry.stops;
                return Some(stub);
            }
            self.stats.recalculations += 1;
            return self.eval_with(e, c, k, true);
        }
        let r = self.eval_with(e, c, k, true);
        if self.error.is_none() {
            let entry = match &r {
                Some(r) => MemoEntry {
                    state: State::Success,
                    end: r.pos,
                    stops: r.stops.clone(),
                },
                None => MemoEntry {
                    state: State::Fail,
                    end: key.pos,
                    stops: key.stops.clone(),
                },
            };
            self.memo.insert(key, entry);
        }
        r
    }

    fn action(&mut self, a: &ActionExpr, c: &Cursor) -> Result<Value, ActionError> {
        let env = ActionEnv {
            input: self.input,
            closure: &c.closure,
            scope: (c.scope, c.pos),
        };
        eval_action(a, &env)
    }

    fn next_char(&self, pos: usize) -> Option<char> {
        self.input[pos..].chars().next()
    }

    fn step(&mut self, e: ExprId, mut c: Cursor, k: K, raw: bool) -> Step {
        if !raw && matches!(self.g.node(e), ExprNode::Choice(..)) {
            return Step::Done(self.memo_eval(e, c, k));
        }
        self.stats.match_calls += 1;
        if self.opts.trace {
            self.trace.push(format!(
                "{:>6} {:>4}  {}",
                c.pos,
                self.depth,
                self.g.display(e)
            ));
        }
        if let Some(sizes) = &self.sizes {
            let need = sizes.min(e).saturating_add(self.shapes.info(k.shape).min);
            if (c.pos as u64).saturating_add(need) > self.input.len() as u64 {
                return Step::Done(None);
            }
        }
        let g = self.g;
        match g.node(e) {
            ExprNode::Literal(s) => {
                if self.input[c.pos..].starts_with(&**s) {
                    c.pos += s.len();
                    resume(k, c)
                } else {
                    Step::Done(None)
                }
            }
            ExprNode::AnyChar => match self.next_char(c.pos) {
                Some(ch) => {
                    c.pos += ch.len_utf8();
                    resume(k, c)
                }
                None => Step::Done(None),
            },
            ExprNode::Class(cls) => match self.next_char(c.pos) {
                Some(ch) if cls.matches(ch) => {
                    c.pos += ch.len_utf8();
                    resume(k, c)
                }
                _ => Step::Done(None),
            },
            ExprNode::Seq(a, b) => {
                let k = self.push(Frame::Seq(*b), k);
                eval(*a, c, k)
            }
            ExprNode::Choice(f, alt) => self.choice(e, *f, *alt, c, k),
            ExprNode::Switch {
                head,
                on_success,
                on_fail,
                ..
            } => {
                let lookahead = c.lookahead || g.is_lookahead_head(*head);
                let head = if lookahead && !g.value_dependent(*head) {
                    g.forget_semantic_actions(*head)
                } else {
                    *head
                };
                let mut hc = c.clone();
                hc.lookahead = lookahead;
                // The original position stays live while the head runs.
                self.memo.on_choice(ChoiceEvent::Open, c.pos);
                let local = self.local_accept();
                let r = self.memo_eval(head, hc, local);
                self.memo.on_choice(ChoiceEvent::Discard, c.pos);
                let tail = if r.is_some() { *on_success } else { *on_fail };
                eval(tail, c, k)
            }
            ExprNode::Many { stop, body } => {
                let k = self.push(
                    Frame::Loop {
                        stop: *stop,
                        body: *body,
                    },
                    k,
                );
                resume(k, c)
            }
            ExprNode::Stop(st) => {
                c.stops = c.stops.with(*st);
                resume(k, c)
            }
            ExprNode::Nested { .. } => {
                let inner = g.nested_inner(e);
                let start = c.pos;
                let local = self.local_accept();
                match self.memo_eval(inner, c, local) {
                    Some(r) => {
                        if self.opts.validate_structured {
                            self.record(e, start, r.pos);
                        }
                        resume(k, r)
                    }
                    None => Step::Done(None),
                }
            }
            ExprNode::RuleRef(_) => {
                let Some((rule, body)) = g.rule_target(e) else {
                    return Step::Done(None);
                };
                if !self.bump(c.pos) {
                    return Step::Done(None);
                }
                if c.lookahead && !g.value_dependent(body) {
                    return eval(g.forgotten_rule_body(rule), c, k);
                }
                let saved = Saved::take(&mut c);
                let k = self.push(
                    Frame::RuleReturn {
                        rule,
                        start: c.pos,
                        saved,
                    },
                    k,
                );
                c.last = Value::None;
                c.scope = c.pos;
                eval(body, c, k)
            }
            ExprNode::Act(a) => {
                if c.lookahead {
                    return resume(k, c);
                }
                match self.action(a, &c) {
                    Ok(v) => {
                        c.returned = Some(v.clone());
                        c.last = v;
                        resume(k, c)
                    }
                    Err(source) => self.fail(EngineError::Action { pos: c.pos, source }),
                }
            }
            ExprNode::Pred(a) => match self.action(a, &c) {
                Ok(Value::Bool(true)) => resume(k, c),
                Ok(Value::Bool(false)) => Step::Done(None),
                Ok(_) => self.fail(EngineError::Action {
                    pos: c.pos,
                    source: ActionError::NotBoolean,
                }),
                Err(source) => self.fail(EngineError::Action { pos: c.pos, source }),
            },
            ExprNode::Bind { var, body } => {
                let k = self.push(
                    Frame::BindEnd {
                        var: var.clone(),
                        start: c.pos,
                        scope: c.scope,
                    },
                    k,
                );
                c.last = Value::None;
                c.scope = c.pos;
                eval(*body, c, k)
            }
            ExprNode::Enter { source, inner } => {
                let k = self.push(
                    Frame::EnterEnd {
                        inner: *inner,
                        start: c.pos,
                    },
                    k,
                );
                c.last = Value::None;
                eval(*source, c, k)
            }
            ExprNode::Reduce {
                rule,
                var,
                body,
                seed,
            } => {
                if c.lookahead {
                    return eval(*body, c, k);
                }
                let start = c.scope;
                let prev = c.returned.clone().unwrap_or_default();
                let saved = Saved::take(&mut c);
                if !*seed {
                    if let Some(var) = var {
                        c.closure = Closure::default().bind(var.clone(), prev.clone());
                    }
                    c.children = Children::single(prev, start, c.pos);
                }
                c.last = Value::None;
                let k = self.push(
                    Frame::ReduceEnd {
                        rule: rule.clone(),
                        start,
                        saved,
                    },
                    k,
                );
                eval(*body, c, k)
            }
            ExprNode::SuccessState => Step::Done(Some(c)),
            ExprNode::FailState => Step::Done(None),
            ExprNode::Epsilon => resume(k, c),
        }
    }

    fn choice(&mut self, e: ExprId, f: ExprId, alt: ExprId, c: Cursor, k: K) -> Step {
        let pos = c.pos;
        if let Some(cp) = &mut self.commits {
            if let Some(d) = cp.dispatch(&self.shapes, e, k.shape) {
                let next = self.input[pos..].chars().next();
                if !d.first.admits(next) {
                    return eval(alt, c, k);
                }
                if !d.second.admits(next) {
                    return eval(f, c, k);
                }
            }
        }
        self.memo.on_choice(ChoiceEvent::Open, pos);
        let committed = Rc::new(Cell::new(false));
        let split = match &mut self.commits {
            Some(cp) => cp.get(&self.shapes, e, k.shape),
            None => None,
        };
        let (first, kf) = match split {
            Some(j) => self.split_cont(f, j, committed.clone(), k.clone()),
            None => (f, k.clone()),
        };
        let r = self.eval(first, c.clone(), kf);
        if committed.get() {
            return Step::Done(r);
        }
        self.memo.on_choice(ChoiceEvent::Discard, pos);
        match r {
            Some(r) => Step::Done(Some(r)),
            None => eval(alt, c, k),
        }
    }

    /// `f = f₁ … fₙ` runs as `f₁ … fⱼ` then a commit frame, then the rest.
    fn split_cont(&mut self, f: ExprId, j: usize, flag: Rc<Cell<bool>>, k: K) -> (ExprId, K) {
        let items = self.g.pool().seq_items(f);
        let mut k = k;
        if j < items.len() {
            let rest = seq_suffix(self.g.pool(), f, items.len() - j);
            k = self.push(Frame::Seq(rest), k);
        }
        k = self.push(Frame::Commit(flag), k);
        for &item in items[1..j].iter().rev() {
            k = self.push(Frame::Seq(item), k);
        }
        (items[0], k)
    }

    fn resume(&mut self, k: K, mut c: Cursor) -> Step {
        self.memo.note_frontier(c.pos);
        match &k.frame {
            Frame::Accept { end } => {
                if *end && c.pos != self.input.len() {
                    Step::Done(None)
                } else {
                    debug_assert!(!*end || c.stops.is_empty(), "stop token escaped its loop");
                    Step::Done(Some(c))
                }
            }
            Frame::Seq(t) => eval(*t, c, k.next()),
            Frame::Loop { stop, body } => {
                if c.stops.contains(*stop) {
                    c.stops = c.stops.without(*stop);
                    return resume(k.next(), c);
                }
                if !self.bump(c.pos) {
                    return Step::Done(None);
                }
                let body = *body;
                eval(body, c, k)
            }
            Frame::RuleReturn { rule, start, saved } => {
                let v = rule_value(self.g.rule_name(*rule), *start, &c);
                saved.restore(&mut c);
                c.children = c.children.push(v.clone(), *start, c.pos);
                c.last = v;
                resume(k.next(), c)
            }
            Frame::BindEnd { var, start, scope } => {
                let v = if c.last.is_none() {
                    Value::Text {
                        start: *start,
                        end: c.pos,
                    }
                } else {
                    c.last.clone()
                };
                c.closure = c.closure.bind(var.clone(), v.clone());
                c.last = v;
                c.scope = *scope;
                resume(k.next(), c)
            }
            Frame::ReduceEnd { rule, start, saved } => {
                let v = rule_value(rule, *start, &c);
                saved.restore(&mut c);
                c.returned = Some(v.clone());
                c.last = v;
                resume(k.next(), c)
            }
            Frame::EnterEnd { inner, start } => {
                let (inner, start) = (*inner, *start);
                self.enter(inner, start, c, k.next())
            }
            Frame::Commit(flag) => {
                if !flag.replace(true) {
                    self.memo.on_choice(ChoiceEvent::Commit, c.pos);
                }
                resume(k.next(), c)
            }
        }
    }

    /// Matches `inner` against the text of the value just produced, as a
    /// separate session that must consume all of it.
    fn enter(&mut self, inner: ExprId, start: usize, mut c: Cursor, next: K) -> Step {
        let v = if c.last.is_none() {
            Value::Text { start, end: c.pos }
        } else {
            c.last.clone()
        };
        let Some(text) = v.as_text(self.input).map(str::to_owned) else {
            return self.fail(EngineError::EnterNotText { pos: start });
        };
        let opts = EngineOptions {
            full_match: true,
            depth_limit: None,
            trace: false,
            ..self.opts.clone()
        };
        let mut sub = Session::new(self.g, &text, opts, self.sizes.clone());
        let accept = sub.accept(true);
        let mut sc = Cursor::at(0);
        sc.lookahead = c.lookahead;
        let r = sub.eval(inner, sc, accept);
        let stats = sub.statistics();
        self.stats.absorb(&stats);
        if let Some(err) = sub.error.take() {
            return self.fail(err);
        }
        match r {
            Some(rc) => {
                let produced = match rc.returned {
                    Some(v) => v,
                    None if !rc.last.is_none() => rc.last,
                    None => Value::Text {
                        start: 0,
                        end: text.len(),
                    },
                };
                c.last = produced.detach(&text);
                resume(next, c)
            }
            None => Step::Done(None),
        }
    }

    fn record(&mut self, e: ExprId, start: usize, end: usize) {
        let id = self.g.forget_semantic_actions(e);
        let mut found = Vec::new();
        match self.ends.entry((id, start)) {
            Entry::Occupied(o) if *o.get() != end => found.push((WarningKind::Ambiguous, *o.get())),
            Entry::Occupied(_) => {}
            Entry::Vacant(v) => {
                v.insert(end);
            }
        }
        match self.starts.entry((id, end)) {
            Entry::Occupied(o) if *o.get() != start => {
                found.push((WarningKind::NotInjective, *o.get()))
            }
            Entry::Occupied(_) => {}
            Entry::Vacant(v) => {
                v.insert(start);
            }
        }
        for (kind, other) in found {
            if self.warned.insert((id, kind)) {
                let expr = self.g.display(e);
                self.warnings.push(StructureWarning {
                    kind,
                    expr,
                    start,
                    end,
                    other,
                });
            }
        }
    }

    fn statistics(&self) -> Statistics {
        let m = self.memo.stats();
        Statistics {
            match_calls: self.stats.match_calls,
            memo_hits: self.stats.memo_hits + m.hits,
            memo_misses: self.stats.memo_misses + m.misses,
            peak_memo_entries: self.stats.peak_memo_entries.max(m.peak),
            compactions: self.stats.compactions + m.compactions,
            recalculations: self.stats.recalculations,
        }
    }

    fn outcome(mut self, r: Option<Cursor>) -> Result<ParseOutcome, EngineError> {
        if let Some(err) = self.error.take() {
            return Err(err);
        }
        Ok(ParseOutcome {
            matched: r.is_some(),
            end: r.as_ref().map(|c| c.pos),
            value: r.map(|c| c.last),
            stats: self.statistics(),
            memo: self.memo.stats(),
            max_depth: self.max_depth,
            warnings: std::mem::take(&mut self.warnings),
            trace: std::mem::take(&mut self.trace),
        })
    }
}

/// Value of a finished rule invocation: the value set by an action, else
/// the only sub-value when it spans the whole match, else a tree node.
fn rule_value(rule: &Arc<str>, start: usize, c: &Cursor) -> Value {
    if let Some(v) = &c.returned {
        return v.clone();
    }
    let mut kids = c.children.to_vec();
    if kids.len() == 1 && kids[0].1 == start && kids[0].2 == c.pos {
        return kids.pop().expect("one child").0;
    }
    Value::Node(Arc::new(Node {
        rule: rule.clone(),
        start,
        end: c.pos,
        children: kids.into_iter().map(|(v, _, _)| v).collect(),
    }))
}

/// The last `count` items of a sequence spine, as one expression.
fn seq_suffix(pool: &ExprPool, mut e: ExprId, count: usize) -> ExprId {
    loop {
        if pool.seq_items(e).len() <= count {
            return e;
        }
        match pool.get(e) {
            ExprNode::Seq(_, t) => e = *t,
            _ => return e,
        }
    }
}

pub(crate) fn run_rule(
    g: &Grammar,
    rule: usize,
    input: &str,
    opts: &EngineOptions,
) -> Result<ParseOutcome, EngineError> {
    let mut s = Session::new(g, input, opts.clone(), None);
    let accept = s.accept(opts.full_match);
    let k = s.push(
        Frame::RuleReturn {
            rule,
            start: 0,
            saved: Saved::default(),
        },
        accept,
    );
    let r = if s.bump(0) {
        s.eval(g.rule_body(rule), Cursor::at(0), k)
    } else {
        None
    };
    s.outcome(r)
}

pub(crate) fn run_expr(
    g: &Grammar,
    e: ExprId,
    input: &str,
    opts: &EngineOptions,
) -> Result<Option<usize>, EngineError> {
    let mut s = Session::new(g, input, opts.clone(), None);
    let accept = s.accept(opts.full_match);
    let r = s.eval(e, Cursor::at(0), accept);
    Ok(s.outcome(r)?.end)
}
