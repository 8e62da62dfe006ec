use kdqe::corpus::{read_pairs, write_pairs, Dataset, Origin, ReadOptions};
use kdqe::distill::{manifest_path_for, run_pipeline, FilterMode, PipelineOptions};
use kdqe::manifest::Manifest;
use kdqe::model::{load_model, save_model, ModelConfig, Student, Vocabs};
use kdqe::par;
use kdqe::synthetic_bench::{generate_scenario, PoolSizes, Scenario};
use kdqe::teacher::{label_dataset, train_ensemble, PredictionTable, TeacherSource};
use kdqe::trainer::{train, TrainConfig};

fn small_scenario() -> Scenario {
    Scenario {
        vocab_size: 300,
        junk_size: 300,
        tail_rank: 60,
        sizes: PoolSizes {
            train: 240,
            validation: 60,
            test: 60,
            unlabeled: 200,
            shifted: 120,
        },
        ..Scenario::default()
    }
}

fn tiny_model() -> ModelConfig {
    ModelConfig {
        embedding_dim: 8,
        hidden_dim: 6,
        attention_dim: 8,
        max_len: 16,
        ..ModelConfig::new(0, 0)
    }
}

fn quick() -> TrainConfig {
    TrainConfig {
        max_epochs: 3,
        patience: 2,
        batch_size: 16,
        ..TrainConfig::default()
    }
}

#[test]
fn ensemble_labels_filter_and_write_manifest() {
    let d = generate_scenario(&small_scenario()).unwrap();
    let vocabs = Vocabs::build(&[&d.train, &d.unlabeled], 5000).unwrap();
    let (ensemble, reports) = train_ensemble(&d.train, &d.validation, 3, 11, &quick(), &tiny_model(), &vocabs).unwrap();
    assert_eq!(reports.len(), 3);

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("distilled.tsv");
    let teacher = TeacherSource::Ensemble(ensemble);
    let result = run_pipeline(
        &d.unlabeled,
        &teacher,
        &PipelineOptions {
            filter: Some(FilterMode::OneSided),
            overwrite_labels: false,
            seed: 4,
        },
        &out,
    )
    .unwrap();
    let stats = result.stats.unwrap();
    assert_eq!(stats.kept + stats.dropped, d.unlabeled.len());
    assert_eq!(result.dataset.len(), stats.kept);
    assert!(result
        .dataset
        .examples
        .iter()
        .all(|e| e.variance.unwrap() <= stats.threshold && e.origin == Origin::Distilled));

    let written = read_pairs(&out, &ReadOptions::default()).unwrap();
    assert_eq!(written.len(), stats.kept);
    let manifest = Manifest::parse(&std::fs::read_to_string(manifest_path_for(&out)).unwrap()).unwrap();
    assert_eq!(manifest.get("K"), Some("3"));
    assert_eq!(manifest.get("filter"), Some("one-sided"));
    assert_eq!(manifest.get("kept"), Some(stats.kept.to_string().as_str()));

    // the written file works as a file teacher with variances
    let table = PredictionTable::read(&out).unwrap();
    assert!(table.has_variances());
    let relabeled = label_dataset(&written, &TeacherSource::File(table), true).unwrap();
    for (a, b) in relabeled.examples.iter().zip(&written.examples) {
        assert!((a.label.unwrap() - b.label.unwrap()).abs() < 1e-12);
    }
}

#[test]
fn training_is_identical_across_thread_counts() {
    let d = generate_scenario(&small_scenario()).unwrap();
    let vocabs = Vocabs::build(&[&d.train], 5000).unwrap();
    let run = |threads| {
        par::with_threads(threads, || {
            let init = Student::init(&tiny_model(), &vocabs, 3).unwrap();
            train(&d.train, &d.validation, &quick(), init).unwrap().0
        })
    };
    let one = run(1);
    let four = run(4);
    assert_eq!(kdqe::model::to_bytes(&one), kdqe::model::to_bytes(&four));
}

#[test]
fn saved_student_predicts_identically() {
    let d = generate_scenario(&small_scenario()).unwrap();
    let vocabs = Vocabs::build(&[&d.train], 5000).unwrap();
    let (student, _) = train(&d.train, &d.validation, &quick(), Student::init(&tiny_model(), &vocabs, 1).unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.bqe");
    save_model(&student, &path).unwrap();
    let back = load_model(&path).unwrap();
    assert_eq!(back, student);
    let a = student.predict_all(&d.test.examples).unwrap();
    let b = back.predict_all(&d.test.examples).unwrap();
    assert_eq!(a, b);
}

#[test]
fn tsv_roundtrip_keeps_scores_and_variances() {
    let d = generate_scenario(&small_scenario()).unwrap();
    let mut ds: Dataset = d.train.clone();
    for (i, e) in ds.examples.iter_mut().enumerate() {
        e.variance = Some(i as f64 * 1.234_567e-4);
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pairs.tsv");
    write_pairs(&ds, &path).unwrap();
    let back = read_pairs(&path, &ReadOptions::default()).unwrap();
    assert_eq!(back.len(), ds.len());
    for (a, b) in back.examples.iter().zip(&ds.examples) {
        assert_eq!((&a.source, &a.mt), (&b.source, &b.mt));
        assert!((a.label.unwrap() - b.label.unwrap()).abs() < 1e-9);
        assert_eq!(a.variance, b.variance);
    }
}
