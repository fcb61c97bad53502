//! Acceptance criteria. Each criterion prints one PASS or FAIL line; the
//! process exits non-zero if any failed.

use std::io::Write;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regreg::analysis::{detect_left_recursion, overlap, paull_rewrite, reg, SizeTable};
use regreg::bench_suite::{
    self, a_n_b, calc_expression, mutate, nested_parens_input, random_input, random_sentence,
};
use regreg::engine::{parse, parse_rule, EngineOptions, ParseOutcome};
use regreg::fixtures::{self, structured_corpus};
use regreg::{oracle_match, ExprId, ExprNode, Grammar, OracleOptions};
use tempfile::NamedTempFile;

// Pinned tolerances.
const EQUIVALENCE_CASES: usize = 1200;
const EQUIVALENCE_MAX_LEN: usize = 40;
const EQUIVALENCE_BUDGET: Duration = Duration::from_secs(60);
const LINEAR_CALLS_RATIO: (f64, f64) = (1.7, 2.5);
const LINEAR_PEAK_RATIO: f64 = 2.5;
const PATHOLOGICAL_MEMO_RATIO: f64 = 2.5;
const PATHOLOGICAL_PLAIN_RATIO: f64 = 3.5;
const EXPONENTIAL_BASE: f64 = 1.4;
const EXPONENTIAL_CALLS_PER_CHAR: u64 = 200;
const COMPACTION_PEAK_RATIO: f64 = 1.2;
const COUNTEREXAMPLE_PEAK_RATIO: f64 = 5.0;
const SOUNDNESS_BUDGET: Duration = Duration::from_secs(120);
const STRUCTURED_INPUTS: usize = 500;

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn regreg_cli(grammar: &str, args: &[&str]) -> Output {
    let mut f = NamedTempFile::new().unwrap();
    f.write_all(grammar.as_bytes()).unwrap();
    let mut all = vec![args[0], "-g", f.path().to_str().unwrap()];
    all.extend_from_slice(&args[1..]);
    Command::new(env!("CARGO_BIN_EXE_regreg"))
        .args(&all)
        .output()
        .unwrap()
}

fn json_end(out: &Output) -> Option<u64> {
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).ok()?;
    doc["end"].as_u64()
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

fn run(g: &Grammar, input: &str, opts: &EngineOptions) -> ParseOutcome {
    parse(g, input, opts).unwrap_or_else(|e| panic!("engine error on {} chars: {e}", input.len()))
}

fn ratio(a: u64, b: u64) -> f64 {
    b as f64 / a as f64
}

fn prefix_hiding() -> Verdict {
    let choice = "S = 'a' | 'ab'\n";
    let peg = regreg_cli(choice, &["parse", "-e", "ab", "--peg"]);
    let reg = regreg_cli(choice, &["parse", "-e", "ab"]);
    let spaces = "S = ' '* ' foo'\n";
    let peg_sp = regreg_cli(spaces, &["parse", "-e", " foo", "--peg"]);
    let reg_sp = regreg_cli(spaces, &["parse", "-e", " foo"]);
    let codes = [
        peg.status.code(),
        reg.status.code(),
        peg_sp.status.code(),
        reg_sp.status.code(),
    ];
    check(
        codes == [Some(1), Some(0), Some(1), Some(0)]
            && json_end(&reg) == Some(2)
            && json_end(&reg_sp) == Some(4),
        format!(
            "exit codes {codes:?}, backtracking ends {:?} and {:?}",
            json_end(&reg),
            json_end(&reg_sp)
        ),
    )
}

fn equivalence() -> Verdict {
    let started = Instant::now();
    let corpus = structured_corpus();
    let per_fixture = EQUIVALENCE_CASES.div_ceil(corpus.len());
    let oracle_opts = OracleOptions {
        full_match: true,
        ..OracleOptions::default()
    };
    let mut cases = 0;
    let mut matched = 0;
    for (i, f) in corpus.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + i as u64);
        for j in 0..per_fixture {
            let input: String = match j % 4 {
                0 => random_input(&mut rng, f.alphabet, EQUIVALENCE_MAX_LEN),
                1 if f.name == "nested-parens" => {
                    nested_parens_input(&mut rng, EQUIVALENCE_MAX_LEN)
                }
                3 => {
                    let s = random_sentence(&f.grammar, &mut rng, EQUIVALENCE_MAX_LEN);
                    mutate(&mut rng, &s, f.alphabet)
                }
                _ => random_sentence(&f.grammar, &mut rng, EQUIVALENCE_MAX_LEN),
            };
            let input: String = input.chars().take(EQUIVALENCE_MAX_LEN).collect();
            let expected = oracle_match(&f.grammar, f.grammar.start(), &input, &oracle_opts)
                .map(|o| (o.matched, o.end, o.value))
                .map_err(|e| e.to_string());
            for memoize in [true, false] {
                let opts = EngineOptions {
                    memoize,
                    ..EngineOptions::default()
                };
                let got = parse(&f.grammar, &input, &opts)
                    .map(|o| (o.matched, o.end, o.value))
                    .map_err(|e| e.to_string());
                // Both sides fail the same action on arithmetic overflow.
                let agree = match (&got, &expected) {
                    (Ok(a), Ok(b)) => a == b,
                    (Err(a), Err(b)) => a.contains("action") && b.contains("action"),
                    _ => false,
                };
                if !agree {
                    return Err(format!(
                        "{} memo={memoize} on {input:?}: engine {got:?}, oracle {expected:?}",
                        f.name
                    ));
                }
            }
            cases += 1;
            matched += usize::from(matches!(expected, Ok((true, _, _))));
        }
    }
    let elapsed = started.elapsed();
    check(
        cases >= 1000 && elapsed < EQUIVALENCE_BUDGET,
        format!(
            "{cases} inputs ({matched} matching) agree with memo on and off in {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn linear_time() -> Verdict {
    let g = fixtures::calculator();
    let rows: Vec<(u64, u64)> = [1 << 14, 1 << 15, 1 << 16]
        .iter()
        .map(|&n| {
            let out = run(&g, &calc_expression(n), &EngineOptions::default());
            assert!(out.matched, "generated expression of length {n} must parse");
            (out.stats.match_calls, out.stats.peak_memo_entries as u64)
        })
        .collect();
    let calls: Vec<f64> = rows.windows(2).map(|w| ratio(w[0].0, w[1].0)).collect();
    let peaks: Vec<f64> = rows.windows(2).map(|w| ratio(w[0].1, w[1].1)).collect();
    let ok = calls
        .iter()
        .all(|r| (LINEAR_CALLS_RATIO.0..=LINEAR_CALLS_RATIO.1).contains(r))
        && peaks.iter().all(|&r| r <= LINEAR_PEAK_RATIO);
    check(
        ok,
        format!("match_calls ratios {calls:.2?}, peak ratios {peaks:.2?}"),
    )
}

fn pathological() -> Verdict {
    let family = bench_suite::family("pathological-3").expect("built-in family");
    let calls = |sizes: &[usize], memoize: bool| -> Vec<u64> {
        let opts = EngineOptions {
            memoize,
            ..EngineOptions::default()
        };
        sizes
            .iter()
            .map(|&n| {
                bench_suite::run(&family, n, &opts, None)
                    .unwrap()
                    .match_calls
            })
            .collect()
    };
    let with_memo = calls(&[64, 128, 256], true);
    let without = calls(&[32, 64], false);
    let memo_ratios: Vec<f64> = with_memo.windows(2).map(|w| ratio(w[0], w[1])).collect();
    let plain_ratio = ratio(without[0], without[1]);
    check(
        memo_ratios.iter().all(|&r| r <= PATHOLOGICAL_MEMO_RATIO)
            && plain_ratio >= PATHOLOGICAL_PLAIN_RATIO,
        format!("memo on ratios {memo_ratios:.2?}, memo off ratio {plain_ratio:.2}"),
    )
}

fn exponential_oracle() -> Verdict {
    let g = fixtures::exponential();
    let opts = OracleOptions {
        full_match: true,
        ..OracleOptions::default()
    };
    let mut worst_margin = f64::INFINITY;
    let mut worst_calls = 0.0f64;
    for n in 8..=16 {
        let input = a_n_b(n);
        let tried = oracle_match(&g, g.start(), &input, &opts)
            .map_err(|e| e.to_string())?
            .derivations_tried;
        let floor = EXPONENTIAL_BASE.powi(n as i32);
        if tried as f64 <= floor {
            return Err(format!("oracle tried {tried} ≤ {floor:.0} at n={n}"));
        }
        worst_margin = worst_margin.min(tried as f64 / floor);
        let calls = run(&g, &input, &EngineOptions::default()).stats.match_calls;
        if calls > EXPONENTIAL_CALLS_PER_CHAR * n as u64 {
            return Err(format!("engine used {calls} match calls at n={n}"));
        }
        worst_calls = worst_calls.max(calls as f64 / n as f64);
    }
    Ok(format!("oracle ≥ {worst_margin:.1}× the exponential floor, engine ≤ {worst_calls:.1} calls per char"))
}

fn memory_compaction() -> Verdict {
    let calc = fixtures::calculator();
    let peak = |g: &Grammar, input: &str| {
        run(g, input, &EngineOptions::default())
            .stats
            .peak_memo_entries as f64
    };
    let small = peak(&calc, &calc_expression(10_000));
    let large = peak(&calc, &calc_expression(100_000));
    let counter = fixtures::memory_counterexample();
    let family = bench_suite::family("memory-counterexample").unwrap();
    let c_small = peak(&counter, &family.input(1_000));
    let c_large = peak(&counter, &family.input(10_000));

    let mut inputs: Vec<(Grammar, String)> = vec![
        (calc.clone(), calc_expression(5_000)),
        (counter.clone(), family.input(3_000)),
    ];
    for f in structured_corpus() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..40 {
            let s = random_sentence(&f.grammar, &mut rng, 40);
            inputs.push((f.grammar.clone(), s));
        }
    }
    for (g, input) in &inputs {
        let on = parse(g, input, &EngineOptions::default());
        let off = parse(
            g,
            input,
            &EngineOptions {
                compact: false,
                ..EngineOptions::default()
            },
        );
        let same = match (on, off) {
            (Ok(a), Ok(b)) => {
                (a.matched, a.end, &a.value, &a.warnings, a.max_depth)
                    == (b.matched, b.end, &b.value, &b.warnings, b.max_depth)
            }
            (Err(a), Err(b)) => a == b,
            _ => false,
        };
        if !same {
            return Err(format!(
                "compaction changed the outcome on an input of length {}",
                input.len()
            ));
        }
    }
    check(
        large <= COMPACTION_PEAK_RATIO * small && c_large >= COUNTEREXAMPLE_PEAK_RATIO * c_small,
        format!(
            "calculator peak {small} → {large} ({:.2}×); counterexample {c_small} → {c_large} ({:.1}×); {} outcomes unchanged",
            large / small,
            c_large / c_small,
            inputs.len()
        ),
    )
}

/// Alternatives of a choice tree, flattened in priority order.
fn alternatives(g: &Grammar, e: ExprId) -> Vec<ExprId> {
    match g.node(e) {
        ExprNode::Choice(a, b) => {
            let mut v = alternatives(g, *a);
            v.extend(alternatives(g, *b));
            v
        }
        _ => vec![e],
    }
}

fn literal(g: &Grammar, e: ExprId) -> Option<String> {
    match g.node(e) {
        ExprNode::Literal(s) => Some(s.to_string()),
        _ => None,
    }
}

/// `seed(b | d) (step(a) | step(c))*` for the four-alternative rule.
fn rewritten_shape(g: &Grammar) -> Result<(Vec<String>, Vec<String>), String> {
    let body = g.rule_body(0);
    let ExprNode::Seq(seed, tail) = g.node(body) else {
        return Err(format!("rewritten body is `{}`", g.display(body)));
    };
    let ExprNode::Reduce {
        body: base,
        seed: true,
        ..
    } = g.node(*seed)
    else {
        return Err(format!("no seed step in `{}`", g.display(body)));
    };
    let ExprNode::Many {
        stop,
        body: loop_body,
    } = g.node(*tail)
    else {
        return Err(format!("no loop in `{}`", g.display(body)));
    };
    let bases = alternatives(g, *base)
        .into_iter()
        .filter_map(|e| literal(g, e))
        .collect();
    let mut steps = Vec::new();
    for alt in alternatives(g, *loop_body) {
        match g.node(alt) {
            ExprNode::Reduce {
                body, seed: false, ..
            } => steps.extend(literal(g, *body)),
            ExprNode::Stop(s) if s == stop => {}
            _ => return Err(format!("unexpected loop alternative `{}`", g.display(alt))),
        }
    }
    Ok((bases, steps))
}

/// End positions of `L = L 'bc' | L 'c' | 'ab' | 'a'` from 0, by ascending
/// from the base matches.
fn ascend_ends(input: &str) -> Vec<usize> {
    let mut ends: Vec<usize> = ["ab", "a"]
        .iter()
        .filter(|b| input.starts_with(*b))
        .map(|b| b.len())
        .collect();
    let mut i = 0;
    while i < ends.len() {
        for step in ["bc", "c"] {
            let next = ends[i] + step.len();
            if input[ends[i]..].starts_with(step) && !ends.contains(&next) {
                ends.push(next);
            }
        }
        i += 1;
    }
    ends
}

fn left_recursion() -> Verdict {
    let text = "L = L 'bc' | L 'c' | 'ab' | 'a'\n";
    let out = regreg_cli(
        text,
        &["parse", "-e", "abc", "--left-rec=rewrite", "--emit=sexpr"],
    );
    let tree = String::from_utf8_lossy(&out.stdout).trim().to_owned();
    if out.status.code() != Some(0) || tree != "(L 0 3 (L 0 2))" {
        return Err(format!(
            "`abc` gave exit {:?} and tree {tree}",
            out.status.code()
        ));
    }
    let json = regreg_cli(text, &["parse", "-e", "abc", "--left-rec=rewrite"]);
    if json_end(&json) != Some(3) {
        return Err("`abc` did not end at 3".into());
    }

    let g = regreg::fixtures::load(text);
    let rewritten = paull_rewrite(&g).map_err(|e| e.to_string())?;
    if detect_left_recursion(&rewritten).any() {
        return Err("rewrite left recursion behind".into());
    }
    let oracle_opts = OracleOptions {
        full_match: true,
        ..OracleOptions::default()
    };
    for w in words(&['a', 'b', 'c'], 6) {
        let e = run(&rewritten, &w, &EngineOptions::default());
        let o = oracle_match(&rewritten, "L", &w, &oracle_opts).unwrap();
        if (e.matched, e.end, &e.value) != (o.matched, o.end, &o.value) {
            return Err(format!(
                "rewritten grammar: engine and oracle differ on {w:?}"
            ));
        }
        if e.matched != ascend_ends(&w).contains(&w.len()) {
            return Err(format!("rewritten grammar disagrees with ascent on {w:?}"));
        }
    }

    let g = regreg::fixtures::load("L = L 'a' | 'b' | L 'c' | 'd'\n");
    let shape = rewritten_shape(&paull_rewrite(&g).map_err(|e| e.to_string())?)?;
    let expected = (
        vec!["b".to_owned(), "d".to_owned()],
        vec!["a".to_owned(), "c".to_owned()],
    );
    if shape != expected {
        return Err(format!(
            "rewrite has bases {:?} and steps {:?}",
            shape.0, shape.1
        ));
    }

    let paradox = regreg_cli("L = ~L\n", &["parse", "-e", "", "--left-rec=rewrite"]);
    let stderr = String::from_utf8_lossy(&paradox.stderr);
    check(
        paradox.status.code() == Some(2) && stderr.contains("paradox"),
        format!(
            "((ab)c) tree, (b|d)(a|c)* shape, paradox exit {:?}",
            paradox.status.code()
        ),
    )
}

/// Grammars over `a b ( )` exercising every operator.
const SOUNDNESS_GRAMMARS: &[&str] = &[
    fixtures::NESTED_PARENS,
    "s = 'a' s 'b' | '(' ')' | ''\n",
    "s = t* 'b' | t '(' \nt = 'a' | '(' 'a'* ')'\n",
    "s = ('a' | 'ab')* ('b' | ')')\n",
    "s = 'a'*? 'b'+ | ~'a' . s\n",
    "s = &('a' 'b') . . | [()] s | 'b'\n",
    "s = nested('(', s*, ')') | [ab]+\n",
    "s = .:x t {x} | (')' / '(' .)\nt = 'b' | ''\n",
    "s = ('a' / 'ab') 'b'* | 'b' 'a' ')'\n",
];

fn analysis_soundness() -> Verdict {
    let started = Instant::now();
    let long = words(&['a', 'b', '(', ')'], 6);
    let full = OracleOptions {
        full_match: true,
        ..OracleOptions::default()
    };
    let mut accepted = 0;
    let mut disjoint_pairs = 0;
    for text in SOUNDNESS_GRAMMARS {
        let g = fixtures::load(text);
        let sizes = SizeTable::new(&g);
        for (i, name) in g.rules().keys().enumerate() {
            let e = g.rule_body(i);
            let lang = reg(&g, e);
            let (min, max) = (sizes.min(e), sizes.max(e));
            for w in &long {
                if !oracle_match(&g, name, w, &full)
                    .map_err(|e| e.to_string())?
                    .matched
                {
                    continue;
                }
                accepted += 1;
                let len = w.chars().count() as u64;
                if w.len() <= 5 && !lang.accepts(w) {
                    return Err(format!("reg of `{name}` rejects {w:?}"));
                }
                if len < min || max.is_some_and(|m| len > m) {
                    return Err(format!(
                        "`{name}` accepted length {len} outside [{min}, {max:?}]"
                    ));
                }
            }
        }

        let alts: Vec<(usize, Vec<ExprId>)> = (0..g.rules().len())
            .map(|i| (i, alternatives(&g, g.rule_body(i))))
            .collect();
        for (rule, items) in alts {
            for x in 0..items.len() {
                for y in x + 1..items.len() {
                    let (ex, ey) = (items[x], items[y]);
                    if overlap(&g, ex, ey) {
                        continue;
                    }
                    disjoint_pairs += 1;
                    let mut b = g.to_builder();
                    let xy = b.pool.choice(ex, ey);
                    let yx = b.pool.choice(ey, ex);
                    b.define("flip-xy", xy);
                    b.define("flip-yx", yx);
                    let flipped = b.finish(g.start());
                    for full_match in [true, false] {
                        let opts = EngineOptions {
                            full_match,
                            ..EngineOptions::default()
                        };
                        for w in &long {
                            let a = parse_rule(&flipped, "flip-xy", w, &opts)
                                .map_err(|e| e.to_string())?;
                            let c = parse_rule(&flipped, "flip-yx", w, &opts)
                                .map_err(|e| e.to_string())?;
                            if (a.matched, a.end) != (c.matched, c.end) {
                                let r = g.rule_name(rule);
                                return Err(format!(
                                    "flipping disjoint alternatives {x},{y} of `{r}` changed {w:?}"
                                ));
                            }
                        }
                    }
                }
            }
        }
    }
    let elapsed = started.elapsed();
    check(
        elapsed < SOUNDNESS_BUDGET && disjoint_pairs > 0,
        format!(
            "{accepted} accepted strings within reg and size bounds, {disjoint_pairs} disjoint pairs flip-invariant, {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn structured_validation() -> Verdict {
    let g = fixtures::nested_parens();
    let opts = EngineOptions {
        validate_structured: true,
        ..EngineOptions::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut warnings = 0;
    let mut matched = 0;
    for _ in 0..STRUCTURED_INPUTS {
        let out = run(&g, &nested_parens_input(&mut rng, 60), &opts);
        warnings += out.warnings.len();
        matched += usize::from(out.matched);
    }
    let bad = run(&fixtures::non_monotone(), "ab", &opts);
    check(
        warnings == 0 && !bad.warnings.is_empty(),
        format!(
            "{warnings} warnings on {STRUCTURED_INPUTS} nested-parens inputs ({matched} matching), {} on the non-monotone fixture",
            bad.warnings.len()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("prefix hiding", prefix_hiding),
        ("equivalence with the oracle", equivalence),
        ("linear time", linear_time),
        ("pathological family", pathological),
        ("exponential oracle", exponential_oracle),
        ("memory compaction", memory_compaction),
        ("left recursion", left_recursion),
        ("analysis soundness", analysis_soundness),
        ("structured validation", structured_validation),
    ];
    let mut failed = 0;
    for (i, (name, criterion)) in criteria.iter().enumerate() {
        let verdict = std::panic::catch_unwind(criterion).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match verdict {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
