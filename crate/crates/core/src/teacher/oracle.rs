use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

/// Planted bilingual map from source tokens to target tokens. Tokens
/// missing from a table map to themselves.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum TokenMap {
    #[default]
    Identity,
    Table(HashMap<String, String>),
}

impl TokenMap {
    pub fn apply<'a>(&'a self, token: &'a str) -> &'a str {
        match self {
            TokenMap::Identity => token,
            TokenMap::Table(t) => t.get(token).map_or(token, String::as_str),
        }
    }
}

/// Noise-free planted quality: F1 of the multiset overlap between the
/// mapped source tokens and the MT tokens.
pub fn planted_quality(source_tokens: &[String], mt_tokens: &[String], map: &TokenMap) -> f64 {
    if source_tokens.is_empty() || mt_tokens.is_empty() {
        return 0.0;
    }
    let mut wanted: HashMap<&str, usize> = HashMap::new();
    for t in source_tokens {
        *wanted.entry(map.apply(t)).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in mt_tokens {
        if let Some(c) = wanted.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / mt_tokens.len() as f64;
    let recall = overlap as f64 / source_tokens.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Planted function plus Gaussian noise, clamped to `[0, 1]`.
///
/// The noise draw depends only on the token sequences and `seed`, so a pair
/// gets the same label wherever it appears. With `hard_tokens` set, the
/// standard deviation grows to `sigma · (1 + hard_boost · f)` where `f` is
/// the fraction of MT tokens in the set.
#[derive(Clone, Debug, PartialEq)]
pub struct Oracle {
    pub map: Arc<TokenMap>,
    pub sigma: f64,
    pub seed: u64,
    pub hard_tokens: Option<Arc<HashSet<String>>>,
    pub hard_boost: f64,
}

impl Oracle {
    pub fn new(map: Arc<TokenMap>, sigma: f64, seed: u64) -> Self {
        Oracle {
            map,
            sigma,
            seed,
            hard_tokens: None,
            hard_boost: 0.0,
        }
    }

    pub fn noise_scale(&self, mt_tokens: &[String]) -> f64 {
        match &self.hard_tokens {
            Some(hard) if !mt_tokens.is_empty() => {
                let f = mt_tokens.iter().filter(|t| hard.contains(t.as_str())).count() as f64
                    / mt_tokens.len() as f64;
                self.sigma * (1.0 + self.hard_boost * f)
            }
            _ => self.sigma,
        }
    }

    pub fn quality(&self, source_tokens: &[String], mt_tokens: &[String]) -> f64 {
        synthetic_quality(source_tokens, mt_tokens, self)
    }
}

fn pair_rng(source_tokens: &[String], mt_tokens: &[String], seed: u64) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for side in [source_tokens, mt_tokens] {
        h.update((side.len() as u64).to_le_bytes());
        for t in side {
            h.update((t.len() as u64).to_le_bytes());
            h.update(t.as_bytes());
        }
    }
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

pub fn synthetic_quality(source_tokens: &[String], mt_tokens: &[String], oracle: &Oracle) -> f64 {
    let clean = planted_quality(source_tokens, mt_tokens, &oracle.map);
    let scale = oracle.noise_scale(mt_tokens);
    if scale == 0.0 {
        return clean;
    }
    let z: f64 = StandardNormal.sample(&mut pair_rng(source_tokens, mt_tokens, oracle.seed));
    (clean + scale * z).clamp(0.0, 1.0)
}
