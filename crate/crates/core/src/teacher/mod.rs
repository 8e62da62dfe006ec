//! Teachers: file-backed prediction tables, ensembles of trained students
//! and synthetic planted oracles.

mod oracle;

pub use oracle::{planted_quality, synthetic_quality, Oracle, TokenMap};

use std::collections::HashMap;
use std::path::Path;

use crate::corpus::{read_pairs, write_pairs, Dataset, Example, Origin, ReadOptions};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, Student, Vocabs};
use crate::par;
use crate::trainer::{train, TrainConfig, TrainReport};

/// Teacher scores keyed by whitespace-trimmed `(source, mt)` strings.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PredictionTable {
    entries: HashMap<(String, String), (f64, Option<f64>)>,
    pub provenance: String,
}

fn key(e: &Example) -> (String, String) {
    (e.source.trim().to_string(), e.mt.trim().to_string())
}

impl PredictionTable {
    /// Every example must carry a score. A pair listed twice must agree.
    pub fn from_dataset(ds: &Dataset) -> Result<Self> {
        let mut entries = HashMap::with_capacity(ds.len());
        for (i, e) in ds.examples.iter().enumerate() {
            let value = (e.require_label(i)?, e.variance);
            if let Some(prev) = entries.insert(key(e), value) {
                if prev != value {
                    return Err(Error::Contract(format!(
                        "prediction {i} conflicts with an earlier entry for the same pair"
                    )));
                }
            }
        }
        Ok(PredictionTable {
            entries,
            provenance: ds.provenance.clone(),
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_dataset(&read_pairs(path, &ReadOptions::default())?)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn has_variances(&self) -> bool {
        !self.entries.is_empty() && self.entries.values().all(|(_, v)| v.is_some())
    }

    pub fn lookup(&self, e: &Example) -> Result<(f64, Option<f64>)> {
        self.entries.get(&key(e)).copied().ok_or_else(|| Error::Lookup {
            src_text: e.source.clone(),
            mt_text: e.mt.clone(),
        })
    }
}

/// Member predictions for one example.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsemblePrediction {
    pub mean: f64,
    /// Population variance of `member_values`.
    pub variance: f64,
    pub member_values: Vec<f64>,
}

impl EnsemblePrediction {
    pub fn from_values(member_values: Vec<f64>) -> Self {
        let n = member_values.len() as f64;
        let mean = member_values.iter().sum::<f64>() / n;
        let variance = member_values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        EnsemblePrediction {
            mean,
            variance,
            member_values,
        }
    }
}

/// Independently trained students sharing vocabularies and dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    members: Vec<Student>,
}

impl Ensemble {
    pub fn new(members: Vec<Student>) -> Result<Self> {
        if members.len() < 2 {
            return Err(Error::Config(format!(
                "an ensemble needs at least 2 members, got {}",
                members.len()
            )));
        }
        let first = &members[0];
        for (k, m) in members.iter().enumerate().skip(1) {
            if m.config() != first.config()
                || m.source_vocab != first.source_vocab
                || m.mt_vocab != first.mt_vocab
            {
                return Err(Error::Contract(format!(
                    "ensemble member {k} has a different vocabulary or configuration than member 0"
                )));
            }
        }
        Ok(Ensemble { members })
    }

    pub fn members(&self) -> &[Student] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn predict(&self, example: &Example) -> Result<EnsemblePrediction> {
        ensemble_predict(&self.members, example)
    }
}

pub fn ensemble_predict(members: &[Student], example: &Example) -> Result<EnsemblePrediction> {
    if members.len() < 2 {
        return Err(Error::Config("ensemble prediction needs at least 2 members".into()));
    }
    if members
        .iter()
        .any(|m| m.source_vocab != members[0].source_vocab || m.mt_vocab != members[0].mt_vocab)
    {
        return Err(Error::Contract("ensemble members use different vocabularies".into()));
    }
    let values = members
        .iter()
        .map(|m| m.predict(example))
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsemblePrediction::from_values(values))
}

/// Trains `k` students that differ only in seed (`base_seed + i`).
pub fn train_ensemble(
    train_set: &Dataset,
    validation: &Dataset,
    k: usize,
    base_seed: u64,
    train_config: &TrainConfig,
    model: &ModelConfig,
    vocabs: &Vocabs,
) -> Result<(Ensemble, Vec<TrainReport>)> {
    if k < 2 {
        return Err(Error::Config(format!("ensemble size must be at least 2, got {k}")));
    }
    let results = par::map_range(k, |i| {
        let seed = base_seed.wrapping_add(i as u64);
        let init = Student::init(model, vocabs, seed)?;
        train(train_set, validation, &TrainConfig { seed, ..*train_config }, init)
    });
    let (members, reports): (Vec<Student>, Vec<TrainReport>) =
        results.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();
    Ok((Ensemble::new(members)?, reports))
}

/// Where labels (and optionally variances) come from.
#[derive(Clone, Debug)]
pub enum TeacherSource {
    File(PredictionTable),
    /// Labels from member 0, variance over all members.
    Ensemble(Ensemble),
    Synthetic(Oracle),
    /// Labels from one teacher, variance from a separate ensemble.
    WithUncertainty {
        labels: Box<TeacherSource>,
        ensemble: Ensemble,
    },
}

impl TeacherSource {
    /// Whether labeling fills in a variance for every example.
    pub fn provides_variance(&self) -> bool {
        match self {
            TeacherSource::File(t) => t.has_variances(),
            TeacherSource::Ensemble(_) | TeacherSource::WithUncertainty { .. } => true,
            TeacherSource::Synthetic(_) => false,
        }
    }

    /// Ensemble size, when there is one.
    pub fn ensemble_size(&self) -> Option<usize> {
        match self {
            TeacherSource::Ensemble(e) | TeacherSource::WithUncertainty { ensemble: e, .. } => Some(e.len()),
            _ => None,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            TeacherSource::File(t) => format!("file:{}", t.provenance),
            TeacherSource::Ensemble(e) => format!("ensemble:{}", e.len()),
            TeacherSource::Synthetic(o) => format!("synthetic:sigma={}", o.sigma),
            TeacherSource::WithUncertainty { labels, ensemble } => {
                format!("{}+ensemble:{}", labels.describe(), ensemble.len())
            }
        }
    }

    /// Label and optional variance for one example.
    pub fn score(&self, example: &Example) -> Result<(f64, Option<f64>)> {
        match self {
            TeacherSource::File(t) => t.lookup(example),
            TeacherSource::Ensemble(e) => {
                let p = e.predict(example)?;
                Ok((p.member_values[0], Some(p.variance)))
            }
            TeacherSource::Synthetic(o) => Ok((o.quality(&example.source_tokens, &example.mt_tokens), None)),
            TeacherSource::WithUncertainty { labels, ensemble } => {
                let (label, _) = labels.score(example)?;
                Ok((label, Some(ensemble.predict(example)?.variance)))
            }
        }
    }
}

/// Labels every pool example with the teacher, in order. Existing labels
/// are kept unless `overwrite` is set; variances are filled in whenever the
/// teacher provides them.
pub fn label_dataset(pool: &Dataset, teacher: &TeacherSource, overwrite: bool) -> Result<Dataset> {
    let scored = par::map(&pool.examples, |e| teacher.score(e));
    let mut examples = Vec::with_capacity(pool.len());
    for (e, s) in pool.examples.iter().zip(scored) {
        let (label, variance) = s?;
        let mut out = e.clone();
        if out.label.is_none() || overwrite {
            out.label = Some(label);
            out.origin = Origin::Distilled;
        }
        if variance.is_some() {
            out.variance = variance;
        }
        examples.push(out);
    }
    Ok(pool.with_examples(examples))
}

/// Writes teacher predictions in the pair TSV format.
pub fn write_predictions(labeled: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    labeled.labels()?;
    write_pairs(labeled, path)
}
