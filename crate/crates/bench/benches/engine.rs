use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use regreg::bench_suite::a_n_b;
use regreg::engine::parse;
use regreg::{fixtures, oracle_match, OracleOptions};
use regreg_bench::workloads;

fn engine(c: &mut Criterion) {
    for w in workloads() {
        let mut group = c.benchmark_group(format!("{}/{}", w.family.name, w.config));
        group.sample_size(20);
        for &n in &w.sizes {
            let input = w.family.input(n);
            group.throughput(Throughput::Bytes(input.len() as u64));
            group.bench_with_input(BenchmarkId::from_parameter(n), &input, |b, input| {
                b.iter(|| parse(&w.family.grammar, input, &w.opts).unwrap())
            });
        }
        group.finish();
    }
}

fn oracle(c: &mut Criterion) {
    let g = fixtures::exponential();
    let opts = OracleOptions {
        full_match: true,
        ..OracleOptions::default()
    };
    let mut group = c.benchmark_group("exponential-R/oracle");
    group.sample_size(10);
    for n in [8, 12, 16] {
        let input = a_n_b(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &input, |b, input| {
            b.iter(|| oracle_match(&g, g.start(), input, &opts).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, engine, oracle);
criterion_main!(benches);
