use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::graph::{build_batch_loss, EncodedPair};
use super::params::{ModelConfig, ModelParams};
use crate::corpus::{Encoded, PAD};
use crate::error::Result;
use crate::numerics::{gradient_check, GradCheckConfig, GradCheckReport};

/// Vocabulary and layer sizes small enough for finite differences.
pub fn gradcheck_config() -> ModelConfig {
    ModelConfig {
        source_vocab_size: 9,
        mt_vocab_size: 7,
        embedding_dim: 4,
        hidden_dim: 3,
        max_len: 6,
        attention_dim: 5,
    }
}

fn random_side(rng: &mut ChaCha8Rng, vocab: usize, max_len: usize) -> Encoded {
    let n = rng.random_range(1..=max_len);
    let mut ids: Vec<usize> = (0..n).map(|_| rng.random_range(1..vocab)).collect();
    let mut mask = vec![true; n];
    ids.resize(max_len, PAD);
    mask.resize(max_len, false);
    Encoded { ids, mask }
}

/// Checks the full student's gradients on a random 2-example batch. Biases
/// get small random values so that every array influences the loss.
pub fn check_gradients(config: &ModelConfig, seed: u64, gc: &GradCheckConfig) -> Result<GradCheckReport> {
    let mut params = ModelParams::init(config, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    for t in params.tensors_mut() {
        for v in t.data_mut() {
            if *v == 0.0 {
                *v = rng.random_range(-0.3..0.3);
            }
        }
    }
    let pairs: Vec<EncodedPair> = (0..2)
        .map(|_| EncodedPair {
            source: random_side(&mut rng, config.source_vocab_size, config.max_len),
            mt: random_side(&mut rng, config.mt_vocab_size, config.max_len),
        })
        .collect();
    let targets: Vec<f64> = (0..2).map(|_| rng.random_range(0.0..1.0)).collect();
    let cfg = *params.config();
    gradient_check(
        params.names(),
        params.tensors(),
        |tape, ids| build_batch_loss(tape, ids, &cfg, &pairs, &targets),
        &GradCheckConfig { seed, ..gc.clone() },
    )
}
