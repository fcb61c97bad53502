//! Engine-level invariants on the fixture corpus and on small exhaustive
//! instances.

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regreg::bench_suite::{calc_expression, random_input, random_sentence};
use regreg::engine::{match_expr, parse, parse_rule, EngineError, EngineOptions};
use regreg::fixtures::{self, structured_corpus};
use regreg::frontend::{build_grammar, has_errors, load_grammar, parse_grammar, validate};
use regreg::{oracle_match, DesugarOptions, ExprNode, Grammar, OracleOptions};

fn corpus_inputs(g: &Grammar, alphabet: &[&str], seed: u64, count: usize) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            if i % 2 == 0 {
                random_input(&mut rng, alphabet, 24)
            } else {
                random_sentence(g, &mut rng, 24)
            }
        })
        .collect()
}

fn words(alphabet: &[char], max_len: usize) -> Vec<String> {
    let mut all = vec![String::new()];
    let mut layer = vec![String::new()];
    for _ in 0..max_len {
        layer = layer
            .iter()
            .flat_map(|w| alphabet.iter().map(move |c| format!("{w}{c}")))
            .collect();
        all.extend(layer.iter().cloned());
    }
    all
}

fn load(text: &str, peg: bool) -> Grammar {
    let (g, diags) = load_grammar(text, None, DesugarOptions { peg });
    assert!(!has_errors(&diags), "{diags:?}");
    g.unwrap()
}

#[test]
fn forgetting_actions_keeps_match_and_end() {
    for f in structured_corpus() {
        let g = &f.grammar;
        for input in corpus_inputs(g, f.alphabet, 11, 60) {
            for (i, _) in g.rules().iter().enumerate() {
                let e = g.rule_body(i);
                let forgotten = g.forget_semantic_actions(e);
                assert_eq!(
                    g.forget_semantic_actions(forgotten),
                    forgotten,
                    "forget is idempotent"
                );
                let plain = match_expr(g, forgotten, &input, &EngineOptions::default()).unwrap();
                match match_expr(g, e, &input, &EngineOptions::default()) {
                    Ok(with_values) => {
                        assert_eq!(with_values, plain, "{} rule {i} on {input:?}", f.name)
                    }
                    Err(EngineError::Action { .. }) => {}
                    Err(e) => panic!("{e}"),
                }
            }
        }
    }
}

#[test]
fn forgotten_bodies_have_no_actions_but_keep_predicates() {
    let g = load("s = 'a':x &{x == 'a'} {1} 'b'\n", false);
    let f = g.forgotten_rule_body(0);
    let mut stack = vec![f];
    let mut saw_pred = false;
    while let Some(e) = stack.pop() {
        match g.node(e) {
            ExprNode::Act(_) | ExprNode::Bind { .. } => panic!("action survived forgetting"),
            ExprNode::Pred(_) => saw_pred = true,
            n => stack.extend(n.children()),
        }
    }
    assert!(saw_pred);
}

#[test]
fn lookahead_is_transparent() {
    let cases = [
        (fixtures::CALCULATOR, "add", "1+2*3"),
        (fixtures::CALCULATOR, "add", "12*3+4"),
        (fixtures::NESTED_PARENS, "doc", "a(b(c))d"),
        (fixtures::C_WHILE, "prog", "while (x < 3) { x = x + 1; }"),
    ];
    for (text, rule, input) in cases {
        let g = load(&format!("{text}probe = &{rule} {rule}\n"), false);
        let opts = EngineOptions::default();
        let direct = parse_rule(&g, rule, input, &opts).unwrap();
        let probed = parse_rule(&g, "probe", input, &opts).unwrap();
        assert!(direct.matched, "{input}");
        assert_eq!((probed.matched, probed.end), (direct.matched, direct.end));
        assert_eq!(probed.value, direct.value, "{input}");
    }
}

#[test]
fn every_loop_has_its_own_stop_token() {
    for f in structured_corpus() {
        let g = &f.grammar;
        let mut seen = HashSet::new();
        for id in g.pool().ids() {
            if let ExprNode::Many { stop, .. } = g.node(id) {
                assert!(
                    seen.insert(stop.0),
                    "{}: stop token {} shared",
                    f.name,
                    stop.0
                );
            }
        }
        assert!(seen.len() as u32 <= g.stop_count());
    }
}

#[test]
fn parsing_does_not_grow_the_pool() {
    let g = fixtures::calculator();
    let before = g.pool().len();
    for n in [100, 1000] {
        let out = parse(&g, &calc_expression(n), &EngineOptions::default()).unwrap();
        assert!(out.matched);
        assert_eq!(g.pool().len(), before);
    }
}

#[test]
fn recalculations_bounded_by_forgotten_pass() {
    for f in structured_corpus() {
        let mut b = f.grammar.to_builder();
        for i in 0..f.grammar.rules().len() {
            b.rules[i] = f.grammar.forgotten_rule_body(i);
        }
        let forgotten = b.finish(f.grammar.start());
        for input in corpus_inputs(&f.grammar, f.alphabet, 12, 60) {
            let Ok(with_values) = parse(&f.grammar, &input, &EngineOptions::default()) else {
                continue;
            };
            let plain = parse(&forgotten, &input, &EngineOptions::default()).unwrap();
            assert_eq!(plain.matched, with_values.matched);
            assert!(
                with_values.stats.recalculations <= plain.stats.match_calls,
                "{} on {input:?}: {} > {}",
                f.name,
                with_values.stats.recalculations,
                plain.stats.match_calls
            );
        }
    }
}

#[test]
fn oracle_is_deterministic() {
    let g = fixtures::exponential();
    let opts = OracleOptions {
        full_match: true,
        ..OracleOptions::default()
    };
    let a = oracle_match(&g, g.start(), "aaaaaaaab", &opts).unwrap();
    let b = oracle_match(&g, g.start(), "aaaaaaaab", &opts).unwrap();
    assert_eq!(a.derivations_tried, b.derivations_tried);
    assert!(!a.matched);
}

/// One grammar per surface operator, plus combinations.
const OPERATOR_GRAMMARS: &[&str] = &[
    "s = 'ab' | 'a' 'b'*\n",
    "s = 'a' / 'ab' / 'b' .\n",
    "s = 'a'* 'ab'\n",
    "s = 'a'+ 'b'?\n",
    "s = 'a'*? 'b' .*\n",
    "s = [a] [^a]* | .\n",
    "s = &'a' . 'b'* | ~'a' .+\n",
    "s = t t | t\nt = 'a' 'b' | 'b'\n",
    "s = .:x t:y {x}\nt = 'b'*\n",
    "s = .:x &{x == 'a'} .* | 'b' .\n",
    "s = t* | 'b' t\nt = nested('a', t*, 'b')\n",
    "s = ('a' | 'ab')* 'b'\n",
    "s = ('ab' / 'a')* 'b'\n",
    "s = .*:x {x}\n",
];

#[test]
fn desugared_operators_agree_with_oracle_exhaustively() {
    let all = words(&['a', 'b'], 4);
    for text in OPERATOR_GRAMMARS {
        let (surface, diags) = parse_grammar(text);
        if has_errors(&diags) {
            // `?` is not an operator; the grammar must be rejected, not misread.
            assert!(
                text.contains('?') && !text.contains("*?"),
                "{text}: {diags:?}"
            );
            continue;
        }
        for peg in [false, true] {
            let g = build_grammar(&surface, None, DesugarOptions { peg });
            assert!(!has_errors(&validate(&g)), "{text}");
            // Committed choice is a non-structured nested expression, which
            // the oracle reads as a plain sequence; there the reference is
            // the engine without memo or commit points.
            let committed = peg || text.contains('/');
            let plain = EngineOptions {
                memoize: false,
                commit_points: false,
                ..EngineOptions::default()
            };
            let oracle_opts = OracleOptions {
                full_match: true,
                ..OracleOptions::default()
            };
            for memoize in [true, false] {
                let opts = EngineOptions {
                    memoize,
                    ..EngineOptions::default()
                };
                for w in &all {
                    let e = parse(&g, w, &opts).unwrap();
                    let expected = if committed {
                        let r = parse(&g, w, &plain).unwrap();
                        (r.matched, r.end, r.value)
                    } else {
                        let o = oracle_match(&g, g.start(), w, &oracle_opts).unwrap();
                        (o.matched, o.end, o.value)
                    };
                    assert_eq!(
                        (e.matched, e.end, e.value),
                        expected,
                        "{text} peg={peg} on {w:?}"
                    );
                }
            }
        }
    }
}

#[test]
fn committed_choice_hides_longer_alternatives() {
    let g = load("s = 'ab' | 'a' 'b'*\n", true);
    assert!(!parse(&g, "abb", &EngineOptions::default()).unwrap().matched);
    assert!(parse(&g, "ab", &EngineOptions::default()).unwrap().matched);
    let g = load("s = 'ab' | 'a' 'b'*\n", false);
    assert!(parse(&g, "abb", &EngineOptions::default()).unwrap().matched);
}

#[test]
fn flagged_paradoxes_are_stopped_by_the_guard() {
    for text in [
        "L = ~L 'a' | 'b'\n",
        "L = &M 'a'\nM = L 'b' | 'c'\n",
        "L = ~(L) .\n",
    ] {
        let (surface, diags) = parse_grammar(text);
        assert!(!has_errors(&diags));
        let g = build_grammar(&surface, None, DesugarOptions::default());
        let report = validate(&g);
        assert!(
            report.iter().any(|d| d.code == "lookahead-left-recursion"),
            "{text}"
        );
        let opts = EngineOptions {
            depth_limit: Some(200),
            ..EngineOptions::default()
        };
        assert!(
            matches!(
                parse(&g, "aab", &opts),
                Err(EngineError::DepthExceeded { .. })
            ),
            "{text}"
        );
    }
}

#[test]
fn guard_failures_are_flagged_left_recursive() {
    let grammars = [
        "L = L 'a' | 'b'\n",
        "A = B 'x' | 'a'\nB = A 'y' | 'b'\n",
        "S = T\nT = ''* S | 'a'\n",
        "S = 'a' S | 'b'\n",
        "S = nested('a', S, 'b') | ''\n",
    ];
    for text in grammars {
        let (surface, _) = parse_grammar(text);
        let g = build_grammar(&surface, None, DesugarOptions::default());
        let opts = EngineOptions {
            depth_limit: Some(500),
            ..EngineOptions::default()
        };
        let mut diverged = false;
        for w in words(&['a', 'b', 'x', 'y'], 3) {
            diverged |= matches!(parse(&g, &w, &opts), Err(EngineError::DepthExceeded { .. }));
        }
        if diverged {
            assert!(regreg::analysis::detect_left_recursion(&g).any(), "{text}");
        }
    }
}
