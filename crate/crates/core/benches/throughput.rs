//! Sequential versus data-parallel throughput.
//!
//! Each group runs the same workload on one worker and on every available
//! worker. Building with `--no-default-features` turns the parallel maps
//! into plain iterators, so both arms then measure the fallback path.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;

use kdqe::corpus::Dataset;
use kdqe::model::{ModelConfig, Student, Vocabs};
use kdqe::par;
use kdqe::synthetic_bench::{generate_scenario, PoolSizes, Scenario};
use kdqe::teacher::{label_dataset, TeacherSource};
use kdqe::trainer::{train, TrainConfig};

struct Fixture {
    train: Dataset,
    validation: Dataset,
    pool: Dataset,
    student: Student,
    teacher: TeacherSource,
}

fn fixture() -> Fixture {
    let scenario = Scenario {
        sizes: PoolSizes {
            train: 512,
            validation: 64,
            test: 64,
            unlabeled: 1024,
            shifted: 64,
        },
        ..Scenario::default()
    };
    let d = generate_scenario(&scenario).expect("scenario");
    let vocabs = Vocabs::build(&[&d.train, &d.unlabeled], 10_000).expect("vocab");
    let model = ModelConfig {
        embedding_dim: 32,
        hidden_dim: 16,
        attention_dim: 32,
        max_len: 24,
        ..ModelConfig::new(0, 0)
    };
    let student = Student::init(&model, &vocabs, 0).expect("init");
    Fixture {
        teacher: TeacherSource::Synthetic(d.oracles.teacher.clone()),
        train: d.train,
        validation: d.validation,
        pool: d.unlabeled,
        student,
    }
}

fn arms() -> Vec<(&'static str, usize)> {
    let all = std::thread::available_parallelism().map_or(1, usize::from);
    vec![("sequential", 1), ("parallel", all)]
}

fn bench_predict(c: &mut Criterion) {
    let f = fixture();
    let mut g = c.benchmark_group("predict_pool");
    g.throughput(Throughput::Elements(f.pool.len() as u64));
    for (name, threads) in arms() {
        g.bench_with_input(BenchmarkId::new(name, threads), &threads, |b, &t| {
            b.iter(|| par::with_threads(t, || black_box(f.student.predict_all(&f.pool.examples).unwrap())))
        });
    }
    g.finish();
}

fn bench_label(c: &mut Criterion) {
    let f = fixture();
    let mut g = c.benchmark_group("label_pool");
    g.throughput(Throughput::Elements(f.pool.len() as u64));
    for (name, threads) in arms() {
        g.bench_with_input(BenchmarkId::new(name, threads), &threads, |b, &t| {
            b.iter(|| par::with_threads(t, || black_box(label_dataset(&f.pool, &f.teacher, true).unwrap())))
        });
    }
    g.finish();
}

fn bench_train_epoch(c: &mut Criterion) {
    let f = fixture();
    let config = TrainConfig {
        max_epochs: 1,
        patience: 1,
        ..TrainConfig::default()
    };
    let mut g = c.benchmark_group("train_epoch");
    g.sample_size(10);
    g.throughput(Throughput::Elements(f.train.len() as u64));
    for (name, threads) in arms() {
        g.bench_with_input(BenchmarkId::new(name, threads), &threads, |b, &t| {
            b.iter(|| {
                par::with_threads(t, || {
                    black_box(train(&f.train, &f.validation, &config, f.student.clone()).unwrap())
                })
            })
        });
    }
    g.finish();
}

criterion_group!(benches, bench_predict, bench_label, bench_train_epoch);
criterion_main!(benches);
