use std::collections::HashSet;

use super::Dataset;
use crate::error::{Error, Result};
use crate::par;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub sentences: Vec<String>,
}

/// Selection rule for monolingual sentences. Character bounds are inclusive
/// and count the characters of the raw sentence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleConfig {
    pub min_chars: usize,
    pub max_chars: usize,
    pub top_docs: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            min_chars: 50,
            max_chars: 150,
            top_docs: 100,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CorpusSample {
    /// Selected documents with their qualifying-sentence counts, best first.
    pub documents: Vec<(String, usize)>,
    /// Qualifying sentences of the selected documents, in selection order.
    pub sentences: Vec<String>,
}

/// Keeps the `top_docs` documents with the most sentences that pass
/// `langid` and the length bounds (ties by ascending document id), and
/// returns their qualifying sentences.
pub fn sample_corpus<L>(documents: &[Document], langid: L, config: &SampleConfig) -> Result<CorpusSample>
where
    L: Fn(&str) -> bool + Sync + Send,
{
    if config.top_docs < 1 {
        return Err(Error::Config("top_docs must be at least 1".into()));
    }
    if config.min_chars > config.max_chars {
        return Err(Error::Config(format!(
            "min_chars {} exceeds max_chars {}",
            config.min_chars, config.max_chars
        )));
    }
    let qualifying: Vec<Vec<usize>> = par::map(documents, |doc| {
        doc.sentences
            .iter()
            .enumerate()
            .filter(|(_, s)| {
                let n = s.chars().count();
                n >= config.min_chars && n <= config.max_chars && langid(s)
            })
            .map(|(i, _)| i)
            .collect()
    });

    let mut ranked: Vec<usize> = (0..documents.len())
        .filter(|&i| !qualifying[i].is_empty())
        .collect();
    ranked.sort_by(|&a, &b| {
        qualifying[b]
            .len()
            .cmp(&qualifying[a].len())
            .then_with(|| documents[a].id.cmp(&documents[b].id))
    });
    ranked.truncate(config.top_docs);

    let mut sample = CorpusSample::default();
    for i in ranked {
        sample
            .documents
            .push((documents[i].id.clone(), qualifying[i].len()));
        sample
            .sentences
            .extend(qualifying[i].iter().map(|&k| documents[i].sentences[k].clone()));
    }
    Ok(sample)
}

/// Parses `doc_id<TAB>sentence` lines. Documents keep the order of their
/// first line; blank lines are skipped.
pub fn parse_documents(text: &str) -> Result<Vec<Document>> {
    let mut docs: Vec<Document> = Vec::new();
    let mut index = std::collections::HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        if raw.trim().is_empty() {
            continue;
        }
        let (id, sentence) = raw.split_once('\t').ok_or_else(|| Error::Parse {
            line: i + 1,
            msg: "expected doc_id<TAB>sentence".into(),
        })?;
        let k = *index.entry(id.to_string()).or_insert_with(|| {
            docs.push(Document {
                id: id.to_string(),
                sentences: Vec::new(),
            });
            docs.len() - 1
        });
        docs[k].sentences.push(sentence.to_string());
    }
    Ok(docs)
}

/// Drops pool pairs that also occur in any forbidden dataset, comparing the
/// lowercased token sequences of both sentences.
pub fn exclude_overlap(pool: &Dataset, forbidden: &[&Dataset]) -> Dataset {
    let key = |s: &[String], m: &[String]| (s.join(" "), m.join(" "));
    let seen: HashSet<(String, String)> = forbidden
        .iter()
        .flat_map(|d| d.examples.iter())
        .map(|e| key(&e.source_tokens, &e.mt_tokens))
        .collect();
    pool.with_examples(
        pool.examples
            .iter()
            .filter(|e| !seen.contains(&key(&e.source_tokens, &e.mt_tokens)))
            .cloned()
            .collect(),
    )
}
