//! Mini-batch MSE training of the student with early stopping.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::Dataset;
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport};
use crate::model::{build_prediction, register, EncodedPair, Student};
use crate::numerics::{AdamConfig, AdamState, Gradients, ParamId, Tape, Tensor};
use crate::par;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ValidationMetric {
    /// Maximize Pearson correlation.
    #[default]
    Pearson,
    /// Minimize mean squared error.
    Mse,
}

impl ValidationMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            ValidationMetric::Pearson => "pearson",
            ValidationMetric::Mse => "mse",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "pearson" => Ok(ValidationMetric::Pearson),
            "mse" => Ok(ValidationMetric::Mse),
            other => Err(Error::Config(format!("unknown validation metric {other:?}"))),
        }
    }

    /// Larger is better; an undefined Pearson scores negative infinity.
    fn score(self, report: &EvalReport) -> f64 {
        match self {
            ValidationMetric::Pearson => report.pearson.or_worst(),
            ValidationMetric::Mse => -report.mse,
        }
    }

    fn reported(self, report: &EvalReport) -> Option<f64> {
        match self {
            ValidationMetric::Pearson => report.pearson.value(),
            ValidationMetric::Mse => Some(report.mse),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub validation_metric: ValidationMetric,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            max_epochs: 50,
            patience: 5,
            seed: 0,
            validation_metric: ValidationMetric::Pearson,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        let a = &self.adam;
        if !(a.learning_rate > 0.0 && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.epsilon > 0.0) {
            return Err(Error::Config(format!("invalid Adam settings {a:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub validation: EvalReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub metric: ValidationMetric,
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose weights were returned.
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub wall_time: Duration,
}

impl TrainReport {
    pub fn best(&self) -> &EpochRecord {
        &self.epochs[self.best_epoch - 1]
    }

    /// `epoch,train_loss,val_<metric>`; an undefined Pearson is written as
    /// `undefined`. Wall time is left out so reruns compare byte for byte.
    pub fn to_csv(&self) -> String {
        let mut out = format!("epoch,train_loss,val_{}\n", self.metric.as_str());
        for e in &self.epochs {
            let v = self
                .metric
                .reported(&e.validation)
                .map_or_else(|| "undefined".to_string(), |v| v.to_string());
            out.push_str(&format!("{},{},{}\n", e.epoch, e.train_loss, v));
        }
        out
    }
}

/// Pearson, MSE and MAE of `student` on a labeled dataset, in file order.
pub fn evaluate_epoch(student: &Student, dataset: &Dataset) -> Result<EvalReport> {
    let labels = dataset.labels()?;
    let predictions = student.predict_all(&dataset.examples)?;
    evaluate(&predictions, &labels)
}

fn example_gradients(student: &Student, pair: &EncodedPair, target: f64) -> Result<(f64, Gradients)> {
    let mut tape = Tape::new();
    let ids = register(&mut tape, &student.params);
    let pred = build_prediction(&mut tape, &ids, student.config(), pair)?;
    let y = tape.constant(Tensor::scalar(target));
    let y = tape.reshape(y, vec![1, 1])?;
    let loss = tape.mse(pred, y)?;
    let value = tape.value(loss).data()[0];
    Ok((value, tape.backward(loss)?))
}

/// Trains `init` on `train`, selecting the epoch with the best validation
/// metric. Returns the restored best weights and the per-epoch report.
pub fn train(
    train: &Dataset,
    validation: &Dataset,
    config: &TrainConfig,
    init: Student,
) -> Result<(Student, TrainReport)> {
    config.validate()?;
    train.check_trainable()?;
    validation.check_trainable()?;
    if train.is_empty() {
        return Err(Error::Contract("training set is empty".into()));
    }
    if validation.len() < 2 {
        return Err(Error::Metric(format!(
            "validation set has {} examples; Pearson needs at least 2",
            validation.len()
        )));
    }
    let started = Instant::now();
    let targets = train.labels()?;
    let pairs: Vec<EncodedPair> = train.examples.iter().map(|e| init.encode(e)).collect();

    let mut student = init;
    let mut adam = AdamState::new(config.adam, student.params.tensors());
    let shapes: Vec<Vec<usize>> = student.params.tensors().iter().map(|t| t.shape().to_vec()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();

    let mut epochs = Vec::new();
    let mut best: Option<(f64, usize, Student)> = None;
    let mut since_best = 0;
    let mut stopped_early = false;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let results = par::map(batch, |&i| example_gradients(&student, &pairs[i], targets[i]));
            let scale = 1.0 / batch.len() as f64;
            let mut acc: Vec<Vec<f64>> = shapes.iter().map(|s| vec![0.0; s.iter().product()]).collect();
            for r in results {
                let (loss, grads) = r.map_err(|e| match e {
                    Error::Numeric(msg) => Error::Numeric(format!("epoch {epoch}, batch {b}: {msg}")),
                    other => other,
                })?;
                if !loss.is_finite() {
                    return Err(Error::Numeric(format!("non-finite loss at epoch {epoch}, batch {b}")));
                }
                loss_sum += loss;
                for (k, slot) in acc.iter_mut().enumerate() {
                    grads.add_scaled_into(ParamId(k), scale, slot);
                }
            }
            let grads = acc
                .into_iter()
                .zip(&shapes)
                .map(|(data, shape)| Tensor::new(shape.clone(), data))
                .collect::<Result<Vec<_>>>()?;
            adam.update(student.params.tensors_mut(), &grads)?;
            if !student.params.is_finite() {
                return Err(Error::Numeric(format!(
                    "parameters became non-finite at epoch {epoch}, batch {b}"
                )));
            }
        }

        let report = evaluate_epoch(&student, validation)?;
        let score = config.validation_metric.score(&report);
        epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / pairs.len() as f64,
            validation: report,
        });
        let improved = best.as_ref().is_none_or(|(s, _, _)| score > *s);
        if improved {
            best = Some((score, epoch, student.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                stopped_early = epoch < config.max_epochs;
                break;
            }
        }
    }

    let (_, best_epoch, best_student) = best.expect("at least one epoch runs");
    let report = TrainReport {
        metric: config.validation_metric,
        epochs,
        best_epoch,
        stopped_early,
        wall_time: started.elapsed(),
    };
    Ok((best_student, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Example;
    use crate::model::{ModelConfig, Vocabs};

    fn base() -> ModelConfig {
        ModelConfig {
            source_vocab_size: 0,
            mt_vocab_size: 0,
            embedding_dim: 8,
            hidden_dim: 6,
            max_len: 10,
            attention_dim: 8,
        }
    }

    fn dataset(rows: &[(&str, &str, f64)]) -> Dataset {
        Dataset::new(
            "d",
            rows.iter()
                .map(|(s, m, y)| Example::new(*s, *m).with_label(*y))
                .collect(),
        )
    }

    fn memorization_set() -> Dataset {
        let words = ["a", "b", "c", "d", "e", "f", "g", "h", "i", "j"];
        let rows: Vec<(String, String, f64)> = (0..10)
            .map(|i| {
                (
                    format!("{} {}", words[i], words[(i + 3) % 10]),
                    format!("{} {} {}", words[(i + 1) % 10], words[i], words[(i + 7) % 10]),
                    0.05 + 0.09 * i as f64,
                )
            })
            .collect();
        Dataset::new(
            "memo",
            rows.iter()
                .map(|(s, m, y)| Example::new(s.as_str(), m.as_str()).with_label(*y))
                .collect(),
        )
    }

    fn student_for(ds: &Dataset, seed: u64) -> Student {
        let vocabs = Vocabs::build(&[ds], 100).unwrap();
        Student::init(&base(), &vocabs, seed).unwrap()
    }

    #[test]
    fn memorizes_ten_examples() {
        let ds = memorization_set();
        let config = TrainConfig {
            batch_size: 10,
            max_epochs: 200,
            patience: 200,
            validation_metric: ValidationMetric::Mse,
            adam: AdamConfig {
                learning_rate: 0.01,
                ..AdamConfig::default()
            },
            ..TrainConfig::default()
        };
        let (_, report) = train(&ds, &ds, &config, student_for(&ds, 1)).unwrap();
        let final_loss = report.epochs.last().unwrap().train_loss;
        assert!(final_loss < 1e-3, "train loss {final_loss}");
        assert!(report.best().validation.mse < 1e-3);
    }

    #[test]
    fn overfits_a_single_example() {
        let ds = dataset(&[("x y z", "u v", 0.9)]);
        let config = TrainConfig {
            batch_size: 1,
            max_epochs: 300,
            patience: 300,
            validation_metric: ValidationMetric::Mse,
            adam: AdamConfig {
                learning_rate: 0.01,
                ..AdamConfig::default()
            },
            ..TrainConfig::default()
        };
        let val = dataset(&[("x y z", "u v", 0.9), ("x y z", "u v", 0.9)]);
        let (s, _) = train(&ds, &val, &config, student_for(&ds, 2)).unwrap();
        let p = s.predict(&ds.examples[0]).unwrap();
        assert!((p - 0.9).abs() < 0.02, "{p}");
    }

    #[test]
    fn constant_labels_give_constant_predictions() {
        let rows: Vec<(String, String, f64)> = (0..24)
            .map(|i| (format!("w{} w{}", i % 7, i % 5), format!("v{} v{}", i % 3, i % 11), 0.5))
            .collect();
        let ds = Dataset::new(
            "c",
            rows.iter().map(|(s, m, y)| Example::new(s.as_str(), m.as_str()).with_label(*y)).collect(),
        );
        let config = TrainConfig {
            batch_size: 8,
            max_epochs: 30,
            validation_metric: ValidationMetric::Mse,
            adam: AdamConfig {
                learning_rate: 0.01,
                ..AdamConfig::default()
            },
            ..TrainConfig::default()
        };
        let (s, _) = train(&ds, &ds, &config, student_for(&ds, 3)).unwrap();
        for ex in [Example::new("w1 w9", "v2 v0 v4"), Example::new("unseen", "words")] {
            let p = s.predict(&ex).unwrap();
            assert!((p - 0.5).abs() < 0.05, "{p}");
        }
    }

    #[test]
    fn stops_after_patience_and_restores_best() {
        // constant validation labels keep Pearson undefined, so only the
        // first epoch ever counts as an improvement
        let ds = memorization_set();
        let val = dataset(&[("a b", "c", 0.3), ("d", "e f", 0.3)]);
        let config = TrainConfig {
            batch_size: 4,
            patience: 1,
            ..TrainConfig::default()
        };
        let init = student_for(&ds, 4);
        let (s, report) = train(&ds, &val, &config, init.clone()).unwrap();
        assert_eq!(report.epochs.len(), 2);
        assert!(report.stopped_early);
        assert_eq!(report.best_epoch, 1);

        let one = TrainConfig { max_epochs: 1, ..config };
        let (after_one, _) = train(&ds, &val, &one, init).unwrap();
        assert_eq!(s.params, after_one.params);
        assert!(report.to_csv().contains("2,"));
        assert!(report.to_csv().lines().nth(1).unwrap().ends_with(",undefined"));
    }

    #[test]
    fn best_epoch_has_the_best_metric() {
        let ds = memorization_set();
        let config = TrainConfig {
            batch_size: 3,
            max_epochs: 12,
            patience: 3,
            ..TrainConfig::default()
        };
        let (s, report) = train(&ds, &ds, &config, student_for(&ds, 5)).unwrap();
        let best = report.best().validation.pearson.or_worst();
        assert!(report.epochs.iter().all(|e| e.validation.pearson.or_worst() <= best));
        assert_eq!(evaluate_epoch(&s, &ds).unwrap(), report.best().validation);
    }

    #[test]
    fn training_is_deterministic() {
        let ds = memorization_set();
        let config = TrainConfig {
            batch_size: 4,
            max_epochs: 3,
            seed: 9,
            ..TrainConfig::default()
        };
        let (a, ra) = train(&ds, &ds, &config, student_for(&ds, 6)).unwrap();
        let (b, rb) = train(&ds, &ds, &config, student_for(&ds, 6)).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(ra.to_csv(), rb.to_csv());
        #[cfg(feature = "parallel")]
        {
            let (c, _) = par::with_threads(3, || train(&ds, &ds, &config, student_for(&ds, 6)).unwrap());
            assert_eq!(a.params, c.params);
        }
    }

    #[test]
    fn preconditions() {
        let ds = memorization_set();
        let s = student_for(&ds, 0);
        let mut unlabeled = ds.clone();
        unlabeled.examples[3].label = None;
        let err = train(&unlabeled, &ds, &TrainConfig::default(), s.clone()).unwrap_err();
        assert_eq!(err.category(), "contract");
        assert!(err.to_string().contains('3'));
        let bad = TrainConfig { patience: 0, ..TrainConfig::default() };
        assert_eq!(train(&ds, &ds, &bad, s.clone()).unwrap_err().category(), "config");
        let tiny_val = dataset(&[("a", "b", 0.1)]);
        assert_eq!(train(&ds, &tiny_val, &TrainConfig::default(), s.clone()).unwrap_err().category(), "metric");
        assert_eq!(evaluate_epoch(&s, &tiny_val).unwrap_err().category(), "metric");
    }

    #[test]
    fn diverging_optimizer_reports_numeric_error() {
        let ds = memorization_set();
        let config = TrainConfig {
            adam: AdamConfig {
                learning_rate: 1e300,
                ..AdamConfig::default()
            },
            batch_size: 2,
            ..TrainConfig::default()
        };
        let err = train(&ds, &ds, &config, student_for(&ds, 0)).unwrap_err();
        assert_eq!(err.category(), "numeric");
        assert!(err.to_string().contains("epoch 1"), "{err}");
    }
}
