use std::collections::HashMap;

use super::{Dataset, Side};
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub(crate) const PAD_TOKEN: &str = "<pad>";
pub(crate) const UNK_TOKEN: &str = "<unk>";

/// Frequency-ranked token→id map. Ids 0 and 1 are PAD and UNK; the
/// remaining ids follow descending corpus frequency with ties broken by
/// ascending token text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    max_size: usize,
}

impl Vocabulary {
    /// Rebuilds a vocabulary from its ranked words (specials excluded).
    pub fn from_words(words: Vec<String>, max_size: usize) -> Result<Self> {
        if words.len() > max_size {
            return Err(Error::Config(format!(
                "{} words exceed the vocabulary cap {max_size}",
                words.len()
            )));
        }
        let mut tokens = Vec::with_capacity(words.len() + 2);
        tokens.push(PAD_TOKEN.to_string());
        tokens.push(UNK_TOKEN.to_string());
        tokens.extend(words);
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Contract(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Vocabulary {
            tokens,
            index,
            max_size,
        })
    }

    /// Id of `token`, UNK when out of vocabulary.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// All tokens in id order, specials first.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Ranked words without the two specials.
    pub fn words(&self) -> &[String] {
        &self.tokens[2..]
    }

    /// Size including specials.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 2
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }
}

/// Vocabulary over the source and MT tokens of `datasets`, keeping the
/// `max_size` most frequent words.
pub fn build_vocab(datasets: &[&Dataset], max_size: usize) -> Result<Vocabulary> {
    let lists = datasets
        .iter()
        .flat_map(|d| d.examples.iter())
        .flat_map(|e| [&e.source_tokens, &e.mt_tokens]);
    from_token_lists(lists, max_size)
}

/// Vocabulary over one side of the pairs only.
pub fn build_side_vocab(datasets: &[&Dataset], side: Side, max_size: usize) -> Result<Vocabulary> {
    let lists = datasets
        .iter()
        .flat_map(|d| d.examples.iter())
        .map(|e| match side {
            Side::Source => &e.source_tokens,
            Side::Mt => &e.mt_tokens,
        });
    from_token_lists(lists, max_size)
}

fn from_token_lists<'a>(
    lists: impl Iterator<Item = &'a Vec<String>>,
    max_size: usize,
) -> Result<Vocabulary> {
    if max_size == 0 {
        return Err(Error::Config("vocabulary max_size must be at least 1".into()));
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for list in lists {
        for t in list {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    if counts.is_empty() {
        return Err(Error::Contract("cannot build a vocabulary from an empty corpus".into()));
    }
    let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(max_size);
    Vocabulary::from_words(ranked.into_iter().map(|(t, _)| t.to_string()).collect(), max_size)
}

/// Token ids padded or truncated to a fixed length, with a mask that is
/// `true` on real tokens.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Encoded {
    pub ids: Vec<usize>,
    pub mask: Vec<bool>,
}

impl Encoded {
    /// Number of real (unmasked) positions.
    pub fn real_len(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

pub fn encode(tokens: &[String], vocab: &Vocabulary, max_len: usize) -> Encoded {
    let mut ids: Vec<usize> = tokens.iter().take(max_len).map(|t| vocab.id(t)).collect();
    let mut mask = vec![true; ids.len()];
    ids.resize(max_len, PAD);
    mask.resize(max_len, false);
    Encoded { ids, mask }
}
