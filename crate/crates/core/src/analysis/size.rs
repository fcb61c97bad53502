//! Bounds on the length of matched strings, by fixpoint over the rule graph.

use crate::expr::{ExprId, ExprNode, Grammar};

/// Stands for "matches nothing" in minimum sizes.
pub const NEVER: u64 = u64::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SizeBounds {
    pub min: u64,
    /// `None` when unbounded.
    pub max: Option<u64>,
}

impl SizeBounds {
    pub fn contains(&self, len: u64) -> bool {
        self.min <= len && self.max.is_none_or(|m| len <= m)
    }
}

/// Bounds for every node of a grammar's pool.
#[derive(Clone, Debug)]
pub struct SizeTable {
    min: Vec<u64>,
    max: Vec<Option<u64>>,
}

impl SizeTable {
    pub fn new(g: &Grammar) -> SizeTable {
        let n = g.pool().len();
        let rules = g.rules().len();

        // Minimum: start every rule at NEVER and lower to the fixpoint.
        let mut rule_min = vec![NEVER; rules];
        let mut min = vec![NEVER; n];
        loop {
            for id in g.pool().ids() {
                min[id.index()] = min_node(g, id, &min, &rule_min);
            }
            let next: Vec<u64> = (0..rules).map(|r| min[g.rule_body(r).index()]).collect();
            if next == rule_min {
                break;
            }
            rule_min = next;
        }

        // Maximum: raise from zero; rules still growing after enough rounds
        // sit on a cycle that consumes input and are unbounded.
        let mut rule_max: Vec<Option<u64>> = vec![Some(0); rules];
        let mut max = vec![Some(0); n];
        let mut rounds = 0;
        loop {
            for id in g.pool().ids() {
                max[id.index()] = max_node(g, id, &max, &rule_max, &min);
            }
            let next: Vec<Option<u64>> = (0..rules).map(|r| max[g.rule_body(r).index()]).collect();
            if next == rule_max {
                break;
            }
            rounds += 1;
            if rounds > rules + 1 {
                rule_max = rule_max
                    .iter()
                    .zip(&next)
                    .map(|(old, new)| if old != new { None } else { *new })
                    .collect();
            } else {
                rule_max = next;
            }
        }
        SizeTable { min, max }
    }

    pub fn min(&self, e: ExprId) -> u64 {
        self.min[e.index()]
    }

    pub fn max(&self, e: ExprId) -> Option<u64> {
        self.max[e.index()]
    }

    pub fn bounds(&self, e: ExprId) -> SizeBounds {
        SizeBounds {
            min: self.min(e),
            max: self.max(e),
        }
    }

    pub fn nullable(&self, e: ExprId) -> bool {
        self.min(e) == 0
    }
}

fn min_node(g: &Grammar, id: ExprId, min: &[u64], rule_min: &[u64]) -> u64 {
    let m = |c: &ExprId| min[c.index()];
    match g.node(id) {
        ExprNode::Literal(s) => s.chars().count() as u64,
        ExprNode::AnyChar | ExprNode::Class(_) => 1,
        ExprNode::Seq(a, b) => m(a).saturating_add(m(b)),
        ExprNode::Choice(a, b) => m(a).min(m(b)),
        ExprNode::Switch {
            on_success,
            on_fail,
            ..
        } => m(on_success).min(m(on_fail)),
        // Zero iterations are possible only through the stop branch.
        ExprNode::Many { body, .. } => m(body),
        ExprNode::Nested { start, mid, end } => {
            m(start).saturating_add(m(mid)).saturating_add(m(end))
        }
        ExprNode::RuleRef(_) => g.rule_target(id).map_or(NEVER, |(r, _)| rule_min[r]),
        ExprNode::Bind { body, .. } | ExprNode::Reduce { body, .. } => m(body),
        ExprNode::Enter { source, .. } => m(source),
        ExprNode::FailState => NEVER,
        ExprNode::Stop(_)
        | ExprNode::Act(_)
        | ExprNode::Pred(_)
        | ExprNode::Epsilon
        | ExprNode::SuccessState => 0,
    }
}

fn max_node(
    g: &Grammar,
    id: ExprId,
    max: &[Option<u64>],
    rule_max: &[Option<u64>],
    min: &[u64],
) -> Option<u64> {
    let m = |c: &ExprId| max[c.index()];
    let add = |a: Option<u64>, b: Option<u64>| Some(a?.saturating_add(b?));
    let either = |a: Option<u64>, b: Option<u64>| Some(a?.max(b?));
    // Branches that match nothing do not widen the bound.
    let alt = |a: &ExprId, b: &ExprId| match (min[a.index()] == NEVER, min[b.index()] == NEVER) {
        (true, _) => m(b),
        (_, true) => m(a),
        _ => either(m(a), m(b)),
    };
    match g.node(id) {
        ExprNode::Literal(s) => Some(s.chars().count() as u64),
        ExprNode::AnyChar | ExprNode::Class(_) => Some(1),
        ExprNode::Seq(a, b) => add(m(a), m(b)),
        ExprNode::Choice(a, b) => alt(a, b),
        ExprNode::Switch {
            on_success,
            on_fail,
            ..
        } => alt(on_success, on_fail),
        ExprNode::Many { body, .. } => match m(body) {
            Some(0) => Some(0),
            _ => None,
        },
        ExprNode::Nested { start, mid, end } => add(add(m(start), m(mid)), m(end)),
        ExprNode::RuleRef(_) => g.rule_target(id).map_or(Some(0), |(r, _)| rule_max[r]),
        ExprNode::Bind { body, .. } | ExprNode::Reduce { body, .. } => m(body),
        ExprNode::Enter { source, .. } => m(source),
        ExprNode::Stop(_)
        | ExprNode::Act(_)
        | ExprNode::Pred(_)
        | ExprNode::Epsilon
        | ExprNode::SuccessState
        | ExprNode::FailState => Some(0),
    }
}

/// Bounds of a single expression. Builds the whole table; use
/// [`SizeTable`] for repeated queries.
pub fn size_bounds(g: &Grammar, e: ExprId) -> SizeBounds {
    SizeTable::new(g).bounds(e)
}

/// Lower bound on the input consumed by `e` followed by `continuation`.
pub fn continuation_min_bound(table: &SizeTable, e: ExprId, continuation: &[ExprId]) -> u64 {
    continuation
        .iter()
        .fold(table.min(e), |acc, c| acc.saturating_add(table.min(*c)))
}
