//! Tokenization, vocabularies, datasets and corpus sampling.

mod sampling;
mod tsv;
mod vocab;

pub use sampling::{exclude_overlap, parse_documents, sample_corpus, CorpusSample, Document, SampleConfig};
pub use tsv::{format_pairs, parse_pairs, read_pairs, write_pairs, ReadOptions};
pub use vocab::{build_side_vocab, build_vocab, encode, Encoded, Vocabulary, PAD, UNK};

use crate::error::{Error, Result};

/// Which sentence of a pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Source,
    Mt,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Origin {
    #[default]
    Gold,
    Distilled,
    Augmented,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Gold => "gold",
            Origin::Distilled => "distilled",
            Origin::Augmented => "augmented",
        }
    }
}

/// One source sentence, its machine translation and an optional quality
/// label on the normalized `[0, 1]` scale.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub source: String,
    pub mt: String,
    pub source_tokens: Vec<String>,
    pub mt_tokens: Vec<String>,
    pub label: Option<f64>,
    pub variance: Option<f64>,
    pub origin: Origin,
}

impl Example {
    pub fn new(source: impl Into<String>, mt: impl Into<String>) -> Self {
        let source = source.into();
        let mt = mt.into();
        Example {
            source_tokens: tokenize(&source),
            mt_tokens: tokenize(&mt),
            source,
            mt,
            label: None,
            variance: None,
            origin: Origin::Gold,
        }
    }

    pub fn with_label(mut self, label: f64) -> Self {
        self.label = Some(label);
        self
    }

    pub fn tokens(&self, side: Side) -> &[String] {
        match side {
            Side::Source => &self.source_tokens,
            Side::Mt => &self.mt_tokens,
        }
    }

    /// Label, or a contract error naming `index` when absent.
    pub fn require_label(&self, index: usize) -> Result<f64> {
        self.label
            .ok_or_else(|| Error::Contract(format!("example {index} has no label")))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub examples: Vec<Example>,
    pub name: String,
    pub domain: String,
    pub provenance: String,
}

impl Dataset {
    pub fn new(name: impl Into<String>, examples: Vec<Example>) -> Self {
        Dataset {
            examples,
            name: name.into(),
            ..Dataset::default()
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn labels(&self) -> Result<Vec<f64>> {
        self.examples
            .iter()
            .enumerate()
            .map(|(i, e)| e.require_label(i))
            .collect()
    }

    /// Same metadata, different examples.
    pub fn with_examples(&self, examples: Vec<Example>) -> Dataset {
        Dataset {
            examples,
            name: self.name.clone(),
            domain: self.domain.clone(),
            provenance: self.provenance.clone(),
        }
    }

    /// Checks that every example can enter training or evaluation.
    pub fn check_trainable(&self) -> Result<()> {
        for (i, e) in self.examples.iter().enumerate() {
            e.require_label(i)?;
            if e.source_tokens.is_empty() || e.mt_tokens.is_empty() {
                return Err(Error::Contract(format!(
                    "example {i} in {:?} has an empty sentence",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

/// Lowercases, splits on whitespace and detaches punctuation characters as
/// their own tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let mut word = String::new();
        for c in chunk.chars() {
            if is_punctuation(c) {
                if !word.is_empty() {
                    tokens.push(std::mem::take(&mut word));
                }
                tokens.push(c.to_string());
            } else {
                word.extend(c.to_lowercase());
            }
        }
        if !word.is_empty() {
            tokens.push(word);
        }
    }
    tokens
}

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '“' | '”' | '‘' | '’' | '«' | '»' | '„' | '—' | '–' | '…' | '¿' | '¡' | '·' | '、' | '。'
        )
}

/// Maps a 0–100 quality score onto `[0, 1]`.
pub fn normalize_score(raw: f64) -> Result<f64> {
    if !(0.0..=100.0).contains(&raw) {
        return Err(Error::Range {
            value: raw,
            line: None,
        });
    }
    Ok(raw / 100.0)
}

pub fn denormalize_score(normalized: f64) -> f64 {
    normalized * 100.0
}
