//! Paull's rewrite: indirect left recursion is inlined into direct left
//! recursion, which becomes `L = (b₁ | b₂ …) (a₁ | a₂ …)*`.

use std::sync::Arc;

use thiserror::Error;

use super::leftrec::detect_left_recursion;
use crate::expr::{ExprId, ExprNode, ExprPool, Grammar, GrammarBuilder};

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum RewriteError {
    #[error("rule `{0}` reaches itself through its own lookahead")]
    Paradox(String),
    #[error("left recursion of rule `{0}` passes through a nested boundary")]
    ThroughNested(String),
    #[error("left recursion of rule `{rule}` cannot be rewritten: {reason}")]
    Unsupported { rule: String, reason: String },
}

impl RewriteError {
    pub fn rule(&self) -> &str {
        match self {
            RewriteError::Paradox(r) | RewriteError::ThroughNested(r) => r,
            RewriteError::Unsupported { rule, .. } => rule,
        }
    }
}

fn unsupported(rule: &str, reason: &str) -> RewriteError {
    RewriteError::Unsupported {
        rule: rule.to_owned(),
        reason: reason.to_owned(),
    }
}

/// Removes left recursion. A grammar without left recursion is returned
/// unchanged, with identical ids.
pub fn paull_rewrite(g: &Grammar) -> Result<Grammar, RewriteError> {
    let report = detect_left_recursion(g);
    if !report.any() {
        return Ok(g.clone());
    }
    if let Some((name, _)) = report.rules.iter().find(|(_, r)| r.paradox) {
        return Err(RewriteError::Paradox(name.clone()));
    }

    let n = g.rules().len();
    // Rules on a leftmost cycle, grouped by cycle; a self-loop is its own group.
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut grouped = vec![false; n];
    for (r, info) in report.rules.values().enumerate() {
        if grouped[r] || !info.is_left_recursive() {
            continue;
        }
        let members: Vec<usize> = if info.cycle.is_empty() {
            vec![r]
        } else {
            info.cycle
                .iter()
                .map(|m| g.rules().get_index_of(m.as_str()).expect("cycle member"))
                .collect()
        };
        for &m in &members {
            grouped[m] = true;
        }
        groups.push(members);
    }
    for members in &groups {
        for &m in members {
            if report.edges[m]
                .iter()
                .any(|e| e.nested && members.contains(&e.to))
            {
                return Err(RewriteError::ThroughNested(g.rule_name(m).to_string()));
            }
        }
    }

    let mut b = g.to_builder();
    for members in &groups {
        for (i, &ai) in members.iter().enumerate() {
            let name = g.rule_name(ai).clone();
            let mut alts = b.pool.choice_items(b.rules[ai]);
            for &aj in &members[..i] {
                let mut next = Vec::new();
                for alt in alts {
                    match leading_call(&b, alt) {
                        Some((target, var, rest)) if target == aj => {
                            if var.is_some() {
                                return Err(unsupported(
                                    &name,
                                    "a bound call on an indirect left-recursive path",
                                ));
                            }
                            for aj_alt in b.pool.choice_items(b.rules[aj]) {
                                next.push(b.pool.seq(aj_alt, rest));
                            }
                        }
                        _ => next.push(alt),
                    }
                }
                alts = next;
            }
            alts = alts
                .into_iter()
                .flat_map(|alt| unroll_leading_star(&mut b, ai, alt))
                .collect();
            let body = rewrite_direct(&mut b, ai, &name, &alts)?;
            b.rules[ai] = body;
        }
    }

    let rewritten = b.finish(g.start());
    let check = detect_left_recursion(&rewritten);
    if let Some((name, _)) = check.rules.iter().find(|(_, r)| r.is_left_recursive()) {
        return Err(unsupported(
            name,
            "the left call is not in leading position",
        ));
    }
    Ok(rewritten)
}

fn rule_index(b: &GrammarBuilder, e: ExprId) -> Option<usize> {
    match b.pool.get(e) {
        ExprNode::RuleRef(name) => b.rules.get_index_of(name),
        _ => None,
    }
}

/// `alt = R rest` or `alt = R:x rest`: the called rule, binding and rest.
fn leading_call(b: &GrammarBuilder, alt: ExprId) -> Option<(usize, Option<Arc<str>>, ExprId)> {
    let items = b.pool.seq_items(alt);
    let (first, rest) = items.split_first()?;
    let rest = rest_of(b, alt, rest.len());
    if let Some(r) = rule_index(b, *first) {
        return Some((r, None, rest));
    }
    match b.pool.get(*first) {
        ExprNode::Bind { var, body } => rule_index(b, *body).map(|r| (r, Some(var.clone()), rest)),
        _ => None,
    }
}

/// The last `count` items of a sequence spine, as one expression.
fn rest_of(b: &GrammarBuilder, mut e: ExprId, count: usize) -> ExprId {
    if count == 0 {
        return ExprPool::EPSILON;
    }
    loop {
        let items = b.pool.seq_items(e);
        if items.len() <= count {
            return e;
        }
        match b.pool.get(e) {
            ExprNode::Seq(_, t) => e = *t,
            _ => return e,
        }
    }
}

/// `e* rest` where `e` can start with a call to `rule` becomes the two
/// alternatives `e e* rest` and `rest` (in the loop's preference order).
fn unroll_leading_star(b: &mut GrammarBuilder, rule: usize, alt: ExprId) -> Vec<ExprId> {
    let items = b.pool.seq_items(alt);
    let Some((&first, tail)) = items.split_first() else {
        return vec![alt];
    };
    let rest = rest_of(b, alt, tail.len());
    let ExprNode::Many { stop, body } = b.pool.get(first).clone() else {
        return vec![alt];
    };
    let choices = b.pool.choice_items(body);
    let stop_first = matches!(b.pool.get(choices[0]), ExprNode::Stop(s) if *s == stop);
    let iterations: Vec<ExprId> = choices
        .into_iter()
        .filter(|c| !matches!(b.pool.get(*c), ExprNode::Stop(s) if *s == stop))
        .collect();
    if !iterations
        .iter()
        .any(|c| leading_call(b, *c).is_some_and(|(r, _, _)| r == rule))
    {
        return vec![alt];
    }
    let again = b.pool.seq(first, rest);
    let mut once: Vec<ExprId> = iterations.iter().map(|c| b.pool.seq(*c, again)).collect();
    if stop_first {
        once.insert(0, rest);
    } else {
        once.push(rest);
    }
    once
}

fn rewrite_direct(
    b: &mut GrammarBuilder,
    rule: usize,
    name: &Arc<str>,
    alts: &[ExprId],
) -> Result<ExprId, RewriteError> {
    let mut steps = Vec::new();
    let mut bases = Vec::new();
    for &alt in alts {
        match leading_call(b, alt) {
            Some((r, var, rest)) if r == rule => steps.push((var, rest)),
            _ => bases.push(alt),
        }
    }
    if steps.is_empty() {
        return Ok(b.pool.choice_all(alts));
    }
    if bases.is_empty() {
        return Err(unsupported(name, "every alternative is left recursive"));
    }
    let base = b.pool.choice_all(&bases);
    let seed = b.pool.intern(ExprNode::Reduce {
        rule: name.clone(),
        var: None,
        body: base,
        seed: true,
    });
    let step_ids: Vec<ExprId> = steps
        .into_iter()
        .map(|(var, rest)| {
            b.pool.intern(ExprNode::Reduce {
                rule: name.clone(),
                var,
                body: rest,
                seed: false,
            })
        })
        .collect();
    let step = b.pool.choice_all(&step_ids);
    let tail = b.star(step);
    Ok(b.pool.seq(seed, tail))
}
