//! The student: per-side embeddings, a bidirectional GRU, additive
//! attention pooling and a sigmoid regressor over the two pooled vectors.

mod check;
mod graph;
mod io;
mod params;

pub use graph::{
    attention_pool, build_batch_loss, build_prediction, encode_sentence, predict, register,
    EncodedPair,
};
pub use check::{check_gradients, gradcheck_config};
pub use io::{from_bytes, load_model, save_model, to_bytes};
pub use params::{Direction, Gate, ModelConfig, ModelParams};

use crate::corpus::{build_side_vocab, encode, Dataset, Example, Side, Vocabulary};
use crate::error::{Error, Result};
use crate::par;

/// Trained parameters together with the vocabularies they were built for.
#[derive(Clone, Debug, PartialEq)]
pub struct Student {
    pub params: ModelParams,
    pub source_vocab: Vocabulary,
    pub mt_vocab: Vocabulary,
}

impl Student {
    pub fn new(params: ModelParams, source_vocab: Vocabulary, mt_vocab: Vocabulary) -> Result<Self> {
        let c = params.config();
        if source_vocab.len() != c.source_vocab_size || mt_vocab.len() != c.mt_vocab_size {
            return Err(Error::Config(format!(
                "vocabulary sizes {}/{} do not match the model's {}/{}",
                source_vocab.len(),
                mt_vocab.len(),
                c.source_vocab_size,
                c.mt_vocab_size
            )));
        }
        Ok(Student {
            params,
            source_vocab,
            mt_vocab,
        })
    }

    /// Fresh parameters sized for `vocabs`, other dimensions from `base`.
    pub fn init(base: &ModelConfig, vocabs: &Vocabs, seed: u64) -> Result<Self> {
        let config = config_for(&vocabs.source, &vocabs.mt, base);
        Student::new(
            ModelParams::init(&config, seed)?,
            vocabs.source.clone(),
            vocabs.mt.clone(),
        )
    }

    pub fn config(&self) -> &ModelConfig {
        self.params.config()
    }

    pub fn vocabs(&self) -> Vocabs {
        Vocabs {
            source: self.source_vocab.clone(),
            mt: self.mt_vocab.clone(),
        }
    }

    pub fn encode(&self, example: &Example) -> EncodedPair {
        let max_len = self.config().max_len;
        EncodedPair {
            source: encode(example.tokens(Side::Source), &self.source_vocab, max_len),
            mt: encode(example.tokens(Side::Mt), &self.mt_vocab, max_len),
        }
    }

    pub fn predict(&self, example: &Example) -> Result<f64> {
        predict(&self.params, &self.encode(example))
    }

    /// Predictions for every example, in input order.
    pub fn predict_all(&self, examples: &[Example]) -> Result<Vec<f64>> {
        par::map(examples, |e| self.predict(e)).into_iter().collect()
    }
}

/// One vocabulary per side.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabs {
    pub source: Vocabulary,
    pub mt: Vocabulary,
}

impl Vocabs {
    pub fn build(datasets: &[&Dataset], max_size: usize) -> Result<Self> {
        Ok(Vocabs {
            source: build_side_vocab(datasets, Side::Source, max_size)?,
            mt: build_side_vocab(datasets, Side::Mt, max_size)?,
        })
    }

    /// `#max_size=<n>` header lines per side, then `side<TAB>token` lines in
    /// id order (specials excluded).
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "#source_max_size={}\n#mt_max_size={}\n",
            self.source.max_size(),
            self.mt.max_size()
        );
        for (side, v) in [("source", &self.source), ("mt", &self.mt)] {
            for w in v.words() {
                out.push_str(side);
                out.push('\t');
                out.push_str(w);
                out.push('\n');
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (mut src_max, mut mt_max) = (None, None);
        let (mut src, mut mt) = (Vec::new(), Vec::new());
        for (i, line) in text.lines().enumerate() {
            let parse_err = |msg: String| Error::Parse { line: i + 1, msg };
            if let Some(h) = line.strip_prefix('#') {
                let (k, v) = h.split_once('=').ok_or_else(|| parse_err(format!("bad header {line:?}")))?;
                let n: usize = v.parse().map_err(|_| parse_err(format!("bad size {v:?}")))?;
                match k {
                    "source_max_size" => src_max = Some(n),
                    "mt_max_size" => mt_max = Some(n),
                    _ => return Err(parse_err(format!("unknown header {k:?}"))),
                }
                continue;
            }
            match line.split_once('\t') {
                Some(("source", w)) => src.push(w.to_string()),
                Some(("mt", w)) => mt.push(w.to_string()),
                _ => return Err(parse_err(format!("expected source|mt<TAB>token, found {line:?}"))),
            }
        }
        let missing = || Error::Parse {
            line: 1,
            msg: "missing max_size header".into(),
        };
        Ok(Vocabs {
            source: Vocabulary::from_words(src, src_max.ok_or_else(missing)?)?,
            mt: Vocabulary::from_words(mt, mt_max.ok_or_else(missing)?)?,
        })
    }
}

/// Vocabulary-derived model dimensions with the remaining sizes from `base`.
pub fn config_for(source_vocab: &Vocabulary, mt_vocab: &Vocabulary, base: &ModelConfig) -> ModelConfig {
    ModelConfig {
        source_vocab_size: source_vocab.len(),
        mt_vocab_size: mt_vocab.len(),
        ..*base
    }
}
