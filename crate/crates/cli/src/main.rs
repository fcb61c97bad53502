//! `regreg`: parse inputs, analyze grammars and run the built-in benchmarks.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value as Json};

use regreg::analysis::{detect_left_recursion, first_chars, overlap, paull_rewrite, SizeTable};
use regreg::bench_suite::{self, CSV_HEADER};
use regreg::engine::{parse_rule, EngineOptions};
use regreg::frontend::{
    build_grammar, has_errors, parse_grammar, validate, DesugarOptions, Diagnostic, Severity,
};
use regreg::Grammar;

const NO_MATCH: u8 = 1;
const FAILURE: u8 = 2;

#[derive(Parser)]
#[command(
    name = "regreg",
    version,
    about = "Memoizing parser for relativized regular grammars"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Match an input against a grammar and print the result as JSON.
    Parse(ParseArgs),
    /// Print the static analysis of a grammar as JSON.
    Analyze(GrammarArgs),
    /// Run a built-in benchmark and print CSV rows.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GrammarArgs {
    /// Grammar file.
    #[arg(short, long)]
    grammar: PathBuf,
    /// Start rule; defaults to the first rule.
    #[arg(long)]
    start: Option<String>,
    /// Treat `|` as ordered choice and make iteration possessive.
    #[arg(long)]
    peg: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum LeftRec {
    Rewrite,
    Error,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Emit {
    Json,
    Sexpr,
}

#[derive(Args)]
struct ParseArgs {
    #[command(flatten)]
    grammar: GrammarArgs,
    /// Input text.
    #[arg(
        short,
        long,
        conflicts_with = "input",
        required_unless_present = "input"
    )]
    expr: Option<String>,
    /// Input file.
    #[arg(short, long)]
    input: Option<PathBuf>,
    #[arg(long)]
    no_memo: bool,
    #[arg(long)]
    no_compact: bool,
    /// Accept a match of any prefix of the input.
    #[arg(long)]
    prefix: bool,
    #[arg(long, value_enum, default_value = "error")]
    left_rec: LeftRec,
    #[arg(long)]
    fail_fast_bound: bool,
    /// Warn when a nested expression ends ambiguously or non-injectively.
    #[arg(long)]
    validate_structured: bool,
    /// Log every match call to standard error.
    #[arg(long)]
    trace: bool,
    #[arg(long, value_enum, default_value = "json")]
    emit: Emit,
}

#[derive(Args)]
struct BenchArgs {
    /// pathological-K (K = 1..8), exponential-R, calc-linear or
    /// memory-counterexample.
    name: String,
    /// Comma-separated input sizes.
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<usize>,
    #[arg(long)]
    no_memo: bool,
    #[arg(long)]
    no_compact: bool,
    /// Run the reference matcher on inputs up to this length.
    #[arg(long, default_value_t = 64)]
    oracle_max_n: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Parse(args) => cmd_parse(&args),
        Command::Analyze(args) => cmd_analyze(&args),
        Command::Bench(args) => cmd_bench(&args),
    };
    ExitCode::from(code)
}

fn print_diagnostics(diags: &[Diagnostic]) {
    for d in diags {
        eprintln!("{d}");
    }
}

/// Reads, parses, desugars and validates. Returns the grammar (even when
/// validation failed) with its diagnostics, or `None` when unreadable.
fn load(args: &GrammarArgs) -> Option<(Grammar, Vec<Diagnostic>)> {
    let text = match fs::read_to_string(&args.grammar) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.grammar.display());
            return None;
        }
    };
    let (surface, mut diags) = parse_grammar(&text);
    if has_errors(&diags) {
        print_diagnostics(&diags);
        return None;
    }
    let g = build_grammar(
        &surface,
        args.start.as_deref(),
        DesugarOptions { peg: args.peg },
    );
    diags.extend(validate(&g));
    Some((g, diags))
}

fn engine_options(args: &ParseArgs) -> EngineOptions {
    EngineOptions {
        memoize: !args.no_memo,
        compact: !args.no_compact,
        full_match: !args.prefix,
        validate_structured: args.validate_structured,
        fail_fast_bound: args.fail_fast_bound,
        trace: args.trace,
        ..EngineOptions::default()
    }
}

fn cmd_parse(args: &ParseArgs) -> u8 {
    let Some((g, diags)) = load(&args.grammar) else {
        return FAILURE;
    };
    print_diagnostics(&diags);
    if has_errors(&diags) {
        return FAILURE;
    }
    let g = if diags.iter().any(|d| d.code == "left-recursion") {
        match args.left_rec {
            LeftRec::Error => {
                eprintln!("error: left recursion; pass --left-rec=rewrite to remove it");
                return FAILURE;
            }
            LeftRec::Rewrite => match paull_rewrite(&g) {
                Ok(g) => g,
                Err(e) => {
                    eprintln!("error: {e}");
                    return FAILURE;
                }
            },
        }
    } else {
        g
    };
    let input = match (&args.expr, &args.input) {
        (Some(e), _) => e.clone(),
        (None, Some(path)) => match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("error: cannot read {}: {e}", path.display());
                return FAILURE;
            }
        },
        (None, None) => unreachable!("clap requires an input"),
    };
    let out = match parse_rule(&g, g.start(), &input, &engine_options(args)) {
        Ok(out) => out,
        Err(e) => {
            eprintln!("error: {e}");
            return FAILURE;
        }
    };
    for line in &out.trace {
        eprintln!("{line}");
    }
    for w in &out.warnings {
        eprintln!("warning[structure]: {w}");
    }
    match args.emit {
        Emit::Json => {
            let doc = json!({
                "matched": out.matched,
                "end": out.end,
                "value": out.value.as_ref().map_or(Json::Null, |v| v.to_json(&input)),
                "stats": out.stats,
            });
            println!("{doc}");
        }
        Emit::Sexpr => {
            if let Some(v) = &out.value {
                println!("{}", v.to_sexpr(&input));
            }
        }
    }
    if out.matched {
        0
    } else {
        NO_MATCH
    }
}

fn diagnostic_json(d: &Diagnostic) -> Json {
    json!({ "severity": d.severity, "code": d.code, "message": d.message, "rule": d.rule })
}

fn cmd_analyze(args: &GrammarArgs) -> u8 {
    let Some((g, diags)) = load(args) else {
        return FAILURE;
    };
    let sizes = SizeTable::new(&g);
    let leftrec = detect_left_recursion(&g);
    let mut rules = Map::new();
    for (i, name) in g.rules().keys().enumerate() {
        let body = g.rule_body(i);
        let first = first_chars(&g, body);
        let alts = g.pool().choice_items(body);
        let mut overlaps = Vec::new();
        for a in 0..alts.len() {
            for b in a + 1..alts.len() {
                overlaps.push(
                    json!({ "left": a, "right": b, "overlap": overlap(&g, alts[a], alts[b]) }),
                );
            }
        }
        rules.insert(
            name.to_string(),
            json!({
                "nullable": first.nullable,
                "first_chars": first.chars.to_string(),
                "min_size": sizes.min(body),
                "max_size": sizes.max(body),
                "left_recursion": leftrec.rules.get(name.as_ref()),
                "alternatives": alts.len(),
                "overlaps": overlaps,
            }),
        );
    }
    let report = json!({
        "start": g.start(),
        "rules": rules,
        "diagnostics": diags.iter().map(diagnostic_json).collect::<Vec<_>>(),
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("report serializes")
    );
    let unresolved = diags.iter().any(|d| d.severity == Severity::Error);
    if unresolved || leftrec.any_paradox() {
        FAILURE
    } else {
        0
    }
}

fn cmd_bench(args: &BenchArgs) -> u8 {
    let Some(family) = bench_suite::family(&args.name) else {
        eprintln!("error: unknown benchmark `{}`", args.name);
        eprintln!("known: {}", bench_suite::FAMILY_NAMES.join(", "));
        return FAILURE;
    };
    let sizes = if args.sizes.is_empty() {
        family.default_sizes.clone()
    } else {
        args.sizes.clone()
    };
    let opts = EngineOptions {
        memoize: !args.no_memo,
        compact: !args.no_compact,
        ..EngineOptions::default()
    };
    println!("{CSV_HEADER}");
    for n in sizes {
        match bench_suite::run(&family, n, &opts, Some(args.oracle_max_n)) {
            Ok(row) => println!("{}", row.csv()),
            Err(e) => {
                eprintln!("error: {} n={n}: {e}", family.name);
                return FAILURE;
            }
        }
    }
    0
}
