//! Workloads for the criterion benchmarks: each built-in family at a few
//! sizes, with its generated input.

use regreg::bench_suite::{family, Family};
use regreg::engine::EngineOptions;

pub struct Workload {
    pub family: Family,
    pub sizes: Vec<usize>,
    pub opts: EngineOptions,
    /// Label for the engine configuration.
    pub config: &'static str,
}

impl Workload {
    fn new(name: &str, sizes: &[usize], config: &'static str, opts: EngineOptions) -> Workload {
        let family = family(name).unwrap_or_else(|| panic!("unknown family {name}"));
        Workload {
            family,
            sizes: sizes.to_vec(),
            opts,
            config,
        }
    }
}

pub fn workloads() -> Vec<Workload> {
    let memo = EngineOptions::default();
    vec![
        Workload::new(
            "calc-linear",
            &[1 << 10, 1 << 12, 1 << 14],
            "memo",
            memo.clone(),
        ),
        Workload::new("pathological-3", &[64, 128, 256], "memo", memo.clone()),
        Workload::new(
            "pathological-3",
            &[16, 32],
            "no-memo",
            EngineOptions::without_memo(),
        ),
        Workload::new("exponential-R", &[16, 64, 256], "memo", memo.clone()),
        Workload::new(
            "memory-counterexample",
            &[1_000, 10_000],
            "memo",
            memo.clone(),
        ),
        Workload::new(
            "memory-counterexample",
            &[1_000, 10_000],
            "no-compact",
            EngineOptions {
                compact: false,
                ..memo
            },
        ),
    ]
}
