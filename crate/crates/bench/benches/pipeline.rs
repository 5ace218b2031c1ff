use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};

use optimake_forge_core::convert::{
    build_entries, convert_dataset, jsonl, read_jsonl, JsonLinesArchive,
};
use optimake_forge_core::filter::parse_filter;
use optimake_forge_core::store::load_snapshot;
use optimake_forge_core::synthetic::{mixed_sources, write_xyz_dataset};

const FILTER: &str = "(nelements >= 2 AND elements HAS ANY \"O\",\"Si\",\"Fe\") OR NOT (chemical_formula_anonymous = \"AB\")";

fn archive(n: usize) -> JsonLinesArchive {
    let (entries, _) = build_entries(&mixed_sources(n, 1)).unwrap();
    JsonLinesArchive {
        description: "bench".into(),
        info: Vec::new(),
        entries,
    }
}

fn filter(c: &mut Criterion) {
    c.bench_function("parse_filter", |b| {
        b.iter(|| parse_filter(black_box(FILTER)).unwrap())
    });
    let snapshot = load_snapshot(archive(10_000), "bench").unwrap();
    let ast = parse_filter(FILTER).unwrap();
    c.bench_function("query_10k_filtered", |b| {
        b.iter(|| {
            snapshot
                .query(Some(&ast), 0, 20, None)
                .unwrap()
                .total_matching
        })
    });
    c.bench_function("query_10k_sorted", |b| {
        b.iter(|| {
            snapshot
                .query(Some(&ast), 100, 20, Some("-nsites"))
                .unwrap()
                .total_matching
        })
    });
}

fn convert(c: &mut Criterion) {
    let mut group = c.benchmark_group("convert");
    group.sample_size(10);
    let sources = mixed_sources(1_000, 2);
    group.bench_function("build_entries_1k", |b| {
        b.iter(|| build_entries(black_box(&sources)).unwrap().0.len())
    });
    let tmp = tempfile::tempdir().unwrap();
    write_xyz_dataset(tmp.path(), 2_000, 3).unwrap();
    group.bench_function("convert_dataset_2k_xyz", |b| {
        b.iter(|| convert_dataset(tmp.path()).unwrap().1.entries.len())
    });
    let a = archive(2_000);
    let bytes = jsonl::to_bytes(&a);
    group.bench_function("jsonl_write_2k", |b| {
        b.iter(|| jsonl::to_bytes(black_box(&a)).len())
    });
    group.bench_function("jsonl_read_2k", |b| {
        b.iter_batched(
            || bytes.clone(),
            |bytes| read_jsonl(bytes.as_slice()).unwrap().entries.len(),
            BatchSize::LargeInput,
        )
    });
    group.finish();
}

criterion_group!(benches, filter, convert);
criterion_main!(benches);
