//! Left recursion: detection over the leftmost-call relation.

use std::collections::BTreeSet;

use indexmap::IndexMap;
use serde::Serialize;

use super::size::SizeTable;
use crate::expr::{ExprId, ExprNode, Grammar};
use crate::frontend::tarjan;

/// One leftmost call: `to` may run before `from` consumes anything.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LeftEdge {
    pub to: usize,
    /// Reached through a lookahead head.
    pub lookahead: bool,
    /// Reached through the start operand of `nested`.
    pub nested: bool,
    /// The call is bound to a variable.
    pub bound: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct RuleLeftRec {
    /// The rule calls itself leftmost, outside lookaheads.
    pub direct: bool,
    /// Other rules on a leftmost cycle through this one, in definition
    /// order and including this rule; empty when there is none.
    pub cycle: Vec<String>,
    /// The rule reaches itself leftmost through a lookahead.
    pub paradox: bool,
}

impl RuleLeftRec {
    pub fn is_left_recursive(&self) -> bool {
        self.direct || !self.cycle.is_empty() || self.paradox
    }
}

#[derive(Clone, Debug)]
pub struct LeftRecReport {
    pub rules: IndexMap<String, RuleLeftRec>,
    /// Leftmost-call edges per rule index.
    pub edges: Vec<Vec<LeftEdge>>,
    sizes: SizeTable,
}

impl LeftRecReport {
    pub fn any(&self) -> bool {
        self.rules.values().any(RuleLeftRec::is_left_recursive)
    }

    pub fn any_paradox(&self) -> bool {
        self.rules.values().any(|r| r.paradox)
    }

    /// Names of the rules reachable through leftmost calls from `e`.
    pub fn leftmost_closure(&self, g: &Grammar, e: ExprId) -> Vec<String> {
        let mut first = Vec::new();
        leftmost_calls(g, &self.sizes, e, Flags::default(), &mut first);
        let mut seen = vec![false; g.rules().len()];
        let mut stack: Vec<usize> = first.iter().map(|e| e.to).collect();
        while let Some(r) = stack.pop() {
            if !std::mem::replace(&mut seen[r], true) {
                stack.extend(self.edges[r].iter().map(|e| e.to));
            }
        }
        (0..seen.len())
            .filter(|&r| seen[r])
            .map(|r| g.rule_name(r).to_string())
            .collect()
    }
}

#[derive(Clone, Copy, Default)]
struct Flags {
    lookahead: bool,
    nested: bool,
    bound: bool,
}

fn leftmost_calls(
    g: &Grammar,
    sizes: &SizeTable,
    e: ExprId,
    flags: Flags,
    out: &mut Vec<LeftEdge>,
) {
    match g.node(e) {
        ExprNode::RuleRef(_) => {
            if let Some((to, _)) = g.rule_target(e) {
                out.push(LeftEdge {
                    to,
                    lookahead: flags.lookahead,
                    nested: flags.nested,
                    bound: flags.bound,
                });
            }
        }
        ExprNode::Seq(a, b) => {
            leftmost_calls(g, sizes, *a, flags, out);
            if sizes.nullable(*a) {
                leftmost_calls(g, sizes, *b, flags, out);
            }
        }
        ExprNode::Choice(a, b) => {
            leftmost_calls(g, sizes, *a, flags, out);
            leftmost_calls(g, sizes, *b, flags, out);
        }
        ExprNode::Switch {
            head,
            on_success,
            on_fail,
            ..
        } => {
            leftmost_calls(
                g,
                sizes,
                *head,
                Flags {
                    lookahead: true,
                    ..flags
                },
                out,
            );
            leftmost_calls(g, sizes, *on_success, flags, out);
            leftmost_calls(g, sizes, *on_fail, flags, out);
        }
        ExprNode::Many { body, .. } => leftmost_calls(g, sizes, *body, flags, out),
        ExprNode::Nested { start, mid, end } => {
            let inner = Flags {
                nested: true,
                ..flags
            };
            leftmost_calls(g, sizes, *start, inner, out);
            if sizes.nullable(*start) {
                leftmost_calls(g, sizes, *mid, inner, out);
                if sizes.nullable(*mid) {
                    leftmost_calls(g, sizes, *end, inner, out);
                }
            }
        }
        ExprNode::Bind { body, .. } => leftmost_calls(
            g,
            sizes,
            *body,
            Flags {
                bound: true,
                ..flags
            },
            out,
        ),
        ExprNode::Reduce { body, .. } => leftmost_calls(g, sizes, *body, flags, out),
        ExprNode::Enter { source, .. } => leftmost_calls(g, sizes, *source, flags, out),
        _ => {}
    }
}

/// Direct loops, leftmost cycles and lookahead paradoxes per rule.
pub fn detect_left_recursion(g: &Grammar) -> LeftRecReport {
    let sizes = SizeTable::new(g);
    let n = g.rules().len();
    let edges: Vec<Vec<LeftEdge>> = (0..n)
        .map(|r| {
            let mut out = Vec::new();
            leftmost_calls(g, &sizes, g.rule_body(r), Flags::default(), &mut out);
            out
        })
        .collect();

    let plain: Vec<Vec<usize>> = edges
        .iter()
        .map(|es| es.iter().filter(|e| !e.lookahead).map(|e| e.to).collect())
        .collect();
    let comp = tarjan(&plain);
    let all: Vec<Vec<usize>> = edges
        .iter()
        .map(|es| es.iter().map(|e| e.to).collect())
        .collect();
    let reach = reachability(&all);

    let mut rules = IndexMap::new();
    for r in 0..n {
        let direct = edges[r].iter().any(|e| e.to == r && !e.lookahead);
        let members: BTreeSet<usize> = (0..n).filter(|&o| comp[o] == comp[r]).collect();
        let cycle = if members.len() > 1 {
            members
                .iter()
                .map(|&m| g.rule_name(m).to_string())
                .collect()
        } else {
            Vec::new()
        };
        let paradox = edges.iter().enumerate().any(|(x, es)| {
            es.iter()
                .any(|e| e.lookahead && (x == r || reach[r][x]) && (e.to == r || reach[e.to][r]))
        });
        rules.insert(
            g.rule_name(r).to_string(),
            RuleLeftRec {
                direct,
                cycle,
                paradox,
            },
        );
    }
    LeftRecReport {
        rules,
        edges,
        sizes,
    }
}

/// `reach[a][b]`: a path of one or more edges leads from `a` to `b`.
fn reachability(edges: &[Vec<usize>]) -> Vec<Vec<bool>> {
    let n = edges.len();
    let mut reach = vec![vec![false; n]; n];
    for (a, row) in reach.iter_mut().enumerate() {
        let mut stack: Vec<usize> = edges[a].clone();
        while let Some(x) = stack.pop() {
            if !row[x] {
                row[x] = true;
                stack.extend(&edges[x]);
            }
        }
    }
    reach
}
