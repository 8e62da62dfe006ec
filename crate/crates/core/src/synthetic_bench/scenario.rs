use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

use crate::corpus::{Dataset, Example};
use crate::error::{Error, Result};
use crate::teacher::{planted_quality, Oracle, TokenMap};

/// Sizes of the generated pools.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PoolSizes {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub unlabeled: usize,
    pub shifted: usize,
}

/// A planted translation task.
///
/// Source token `s<i>` translates to `t<i>`. A translation copies the mapped
/// source and then replaces each position, with a per-sentence probability
/// drawn from `[0, max_corruption]`, by a junk token `j<k>` that is never a
/// translation. Token ranks follow a Zipf law; the shifted domain reverses
/// the ranking, so its frequent tokens are the in-domain tail, and its
/// teacher is noisier on those tail tokens.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub vocab_size: usize,
    pub junk_size: usize,
    pub zipf_exponent: f64,
    pub min_len: usize,
    pub max_len: usize,
    pub min_corruption: f64,
    pub max_corruption: f64,
    /// Per-sentence corruption rates are `min + (max − min)·u^corruption_skew`
    /// with `u` uniform; values above 1 make most translations good.
    pub corruption_skew: f64,
    pub sigma_gold: f64,
    pub sigma_teacher: f64,
    /// Base teacher noise on the shifted pool.
    pub sigma_teacher_shifted: f64,
    /// Noise multiplier slope on in-domain tail tokens for the shifted teacher.
    pub shifted_tail_boost: f64,
    /// Tokens at in-domain rank `>= tail_rank` count as tail tokens.
    pub tail_rank: usize,
    pub sizes: PoolSizes,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            vocab_size: 1500,
            junk_size: 1500,
            zipf_exponent: 1.0,
            min_len: 6,
            max_len: 14,
            min_corruption: 0.15,
            max_corruption: 0.7,
            corruption_skew: 3.0,
            sigma_gold: 0.15,
            sigma_teacher: 0.05,
            sigma_teacher_shifted: 0.08,
            shifted_tail_boost: 2.0,
            tail_rank: 300,
            sizes: PoolSizes {
                train: 5000,
                validation: 1000,
                test: 1000,
                unlabeled: 20_000,
                shifted: 5000,
            },
            seed: 0,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let s = &self.sizes;
        for (name, v) in [
            ("train", s.train),
            ("validation", s.validation),
            ("test", s.test),
            ("unlabeled", s.unlabeled),
            ("shifted", s.shifted),
        ] {
            if v < 2 {
                return Err(Error::Config(format!("{name} pool needs at least 2 pairs, got {v}")));
            }
        }
        if self.vocab_size < 2 || self.junk_size < 1 {
            return Err(Error::Config("vocabulary and junk sets must be non-empty".into()));
        }
        if self.min_len < 1 || self.min_len > self.max_len {
            return Err(Error::Config(format!(
                "invalid sentence length range {}..={}",
                self.min_len, self.max_len
            )));
        }
        for (name, v) in [
            ("sigma_gold", self.sigma_gold),
            ("sigma_teacher", self.sigma_teacher),
            ("sigma_teacher_shifted", self.sigma_teacher_shifted),
            ("shifted_tail_boost", self.shifted_tail_boost),
            ("corruption_skew", self.corruption_skew),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and non-negative")));
            }
        }
        if !(0.0 <= self.min_corruption && self.min_corruption <= self.max_corruption && self.max_corruption <= 1.0) {
            return Err(Error::Config("corruption rates need 0 <= min <= max <= 1".into()));
        }
        if !(self.zipf_exponent.is_finite() && self.zipf_exponent >= 0.0) {
            return Err(Error::Config("zipf_exponent must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn token_map(&self) -> TokenMap {
        TokenMap::Table(
            (0..self.vocab_size)
                .map(|i| (format!("s{i}"), format!("t{i}")))
                .collect(),
        )
    }

    /// Target and junk tokens in the in-domain tail.
    pub fn tail_tokens(&self) -> HashSet<String> {
        (self.tail_rank..self.vocab_size)
            .map(|i| format!("t{i}"))
            .chain((self.tail_rank..self.junk_size).map(|i| format!("j{i}")))
            .collect()
    }
}

/// Labelers of one scenario. Each uses its own noise seed.
#[derive(Clone, Debug)]
pub struct Oracles {
    pub gold: Oracle,
    pub teacher: Oracle,
    pub shifted_teacher: Oracle,
}

impl Oracles {
    /// Gold and teacher oracles whose noise streams depend on `round`.
    pub fn for_round(scenario: &Scenario, map: Arc<TokenMap>, round: u64) -> Self {
        let base = scenario.seed.wrapping_mul(1_000_003).wrapping_add(round * 3);
        Oracles {
            gold: Oracle::new(map.clone(), scenario.sigma_gold, base),
            teacher: Oracle::new(map.clone(), scenario.sigma_teacher, base + 1),
            shifted_teacher: Oracle {
                hard_tokens: Some(Arc::new(scenario.tail_tokens())),
                hard_boost: scenario.shifted_tail_boost,
                ..Oracle::new(map, scenario.sigma_teacher_shifted, base + 2)
            },
        }
    }
}

#[derive(Clone, Debug)]
pub struct ScenarioData {
    pub map: Arc<TokenMap>,
    pub oracles: Oracles,
    /// Gold (noisy) labels.
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
    /// Test pairs labeled with the noiseless planted function.
    pub test_truth: Dataset,
    pub unlabeled: Dataset,
    pub shifted: Dataset,
}

struct Sampler {
    src: Zipf<f64>,
    junk: Zipf<f64>,
    reversed: bool,
    vocab: usize,
    junk_size: usize,
}

impl Sampler {
    fn rank(&self, z: f64, n: usize) -> usize {
        let r = (z as usize).clamp(1, n) - 1;
        if self.reversed {
            n - 1 - r
        } else {
            r
        }
    }

    fn pair(&self, s: &Scenario, rng: &mut ChaCha8Rng) -> (String, String) {
        let len = rng.random_range(s.min_len..=s.max_len);
        let u: f64 = rng.random_range(0.0..=1.0);
        let rate = s.min_corruption + (s.max_corruption - s.min_corruption) * u.powf(s.corruption_skew);
        let mut src = Vec::with_capacity(len);
        let mut mt = Vec::with_capacity(len);
        for _ in 0..len {
            let i = self.rank(self.src.sample(rng), self.vocab);
            src.push(format!("s{i}"));
            if rng.random_bool(rate) {
                mt.push(format!("j{}", self.rank(self.junk.sample(rng), self.junk_size)));
            } else {
                mt.push(format!("t{i}"));
            }
        }
        (src.join(" "), mt.join(" "))
    }
}

fn unlabeled(pairs: Vec<(String, String)>, name: &str, domain: &str) -> Dataset {
    let mut d = Dataset::new(name, pairs.into_iter().map(|(s, m)| Example::new(s, m)).collect());
    d.domain = domain.into();
    d.provenance = "synthetic".into();
    d
}

fn labeled_with(d: &Dataset, label: impl Fn(&Example) -> f64) -> Dataset {
    d.with_examples(
        d.examples
            .iter()
            .map(|e| {
                let y = label(e);
                e.clone().with_label(y)
            })
            .collect(),
    )
}

/// Builds every pool of the scenario. All pools are pairwise disjoint on
/// `(source, mt)`.
pub fn generate_scenario(scenario: &Scenario) -> Result<ScenarioData> {
    scenario.validate()?;
    let zipf = |n: usize| {
        Zipf::new(n as f64, scenario.zipf_exponent).map_err(|e| Error::Config(format!("zipf: {e}")))
    };
    let in_domain = Sampler {
        src: zipf(scenario.vocab_size)?,
        junk: zipf(scenario.junk_size)?,
        reversed: false,
        vocab: scenario.vocab_size,
        junk_size: scenario.junk_size,
    };
    let shifted = Sampler {
        src: zipf(scenario.vocab_size)?,
        junk: zipf(scenario.junk_size)?,
        reversed: true,
        vocab: scenario.vocab_size,
        junk_size: scenario.junk_size,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let mut seen = HashSet::new();
    let s = &scenario.sizes;
    let mut draw = |sampler: &Sampler, n: usize| -> Result<Vec<(String, String)>> {
        let mut out = Vec::with_capacity(n);
        let mut attempts = 0usize;
        while out.len() < n {
            attempts += 1;
            if attempts > 50 * n + 1000 {
                return Err(Error::Config(
                    "cannot draw enough distinct pairs; enlarge the vocabulary or sentence lengths".into(),
                ));
            }
            let p = sampler.pair(scenario, &mut rng);
            if seen.insert(p.clone()) {
                out.push(p);
            }
        }
        Ok(out)
    };
    let train = unlabeled(draw(&in_domain, s.train)?, "train", "in-domain");
    let validation = unlabeled(draw(&in_domain, s.validation)?, "validation", "in-domain");
    let test = unlabeled(draw(&in_domain, s.test)?, "test", "in-domain");
    let pool = unlabeled(draw(&in_domain, s.unlabeled)?, "unlabeled", "in-domain");
    let shifted_pool = unlabeled(draw(&shifted, s.shifted)?, "shifted", "shifted");

    let map = Arc::new(scenario.token_map());
    let oracles = Oracles::for_round(scenario, map.clone(), 0);
    let gold = |e: &Example| oracles.gold.quality(&e.source_tokens, &e.mt_tokens);
    let truth = |e: &Example| planted_quality(&e.source_tokens, &e.mt_tokens, &map);
    Ok(ScenarioData {
        train: labeled_with(&train, gold),
        validation: labeled_with(&validation, gold),
        test: labeled_with(&test, gold),
        test_truth: labeled_with(&test, truth),
        unlabeled: pool,
        shifted: shifted_pool,
        map,
        oracles,
    })
}

/// Token counts per pool, for reports.
pub fn token_frequencies(d: &Dataset) -> HashMap<String, usize> {
    let mut counts = HashMap::new();
    for e in &d.examples {
        for t in e.source_tokens.iter().chain(&e.mt_tokens) {
            *counts.entry(t.clone()).or_insert(0) += 1;
        }
    }
    counts
}
