use crate::corpus::Dataset;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, Student, Vocabs};
use crate::par;
use crate::trainer::{evaluate_epoch, train, TrainConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub size: usize,
    pub mean_pearson: f64,
    /// Largest distance of any run from the mean: a range, not a
    /// parametric interval.
    pub half_width: f64,
    pub runs: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("size,mean_pearson,range_half_width,runs\n");
        for r in &self.rows {
            let runs: Vec<String> = r.runs.iter().map(f64::to_string).collect();
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.size,
                r.mean_pearson,
                r.half_width,
                runs.join(";")
            ));
        }
        out
    }
}

/// Trains `repeats` students per subset (seeds `train_config.seed + r`) and
/// reports test Pearson per subset size.
pub fn sweep(
    subsets: &[Dataset],
    validation: &Dataset,
    test: &Dataset,
    repeats: usize,
    train_config: &TrainConfig,
    model: &ModelConfig,
    vocabs: &Vocabs,
) -> Result<SweepTable> {
    if repeats < 1 {
        return Err(Error::Config("repeats must be at least 1".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..subsets.len())
        .flat_map(|s| (0..repeats).map(move |r| (s, r)))
        .collect();
    let results = par::map(&jobs, |&(s, r)| -> Result<f64> {
        let seed = train_config.seed.wrapping_add(r as u64);
        let config = TrainConfig { seed, ..*train_config };
        let init = Student::init(model, vocabs, seed)?;
        let (student, _) = train(&subsets[s], validation, &config, init)?;
        evaluate_epoch(&student, test)?.pearson.value().ok_or_else(|| {
            Error::Metric(format!(
                "undefined test Pearson for subset size {} with seed {seed}",
                subsets[s].len()
            ))
        })
    });
    let mut values = results.into_iter();
    let mut rows = Vec::with_capacity(subsets.len());
    for subset in subsets {
        let runs = values.by_ref().take(repeats).collect::<Result<Vec<f64>>>()?;
        let mean = runs.iter().sum::<f64>() / repeats as f64;
        let half_width = runs.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
        rows.push(SweepRow {
            size: subset.len(),
            mean_pearson: mean,
            half_width,
            runs,
        });
    }
    Ok(SweepTable { rows })
}
