use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::Side;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Student dimensions. Defaults: 300-d embeddings, 50 hidden units per
/// direction, attention width twice the hidden size, 70 tokens per sentence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub source_vocab_size: usize,
    pub mt_vocab_size: usize,
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub max_len: usize,
    pub attention_dim: usize,
}

impl ModelConfig {
    pub const DEFAULT_EMBEDDING_DIM: usize = 300;
    pub const DEFAULT_HIDDEN_DIM: usize = 50;
    pub const DEFAULT_MAX_LEN: usize = 70;

    pub fn new(source_vocab_size: usize, mt_vocab_size: usize) -> Self {
        ModelConfig {
            source_vocab_size,
            mt_vocab_size,
            embedding_dim: Self::DEFAULT_EMBEDDING_DIM,
            hidden_dim: Self::DEFAULT_HIDDEN_DIM,
            max_len: Self::DEFAULT_MAX_LEN,
            attention_dim: 2 * Self::DEFAULT_HIDDEN_DIM,
        }
    }

    /// Sets the hidden size and resets the attention width to `2 · hidden`.
    pub fn with_hidden(mut self, hidden_dim: usize) -> Self {
        self.hidden_dim = hidden_dim;
        self.attention_dim = 2 * hidden_dim;
        self
    }

    pub fn vocab_size(&self, side: Side) -> usize {
        match side {
            Side::Source => self.source_vocab_size,
            Side::Mt => self.mt_vocab_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("source_vocab_size", self.source_vocab_size),
            ("mt_vocab_size", self.mt_vocab_size),
            ("embedding_dim", self.embedding_dim),
            ("hidden_dim", self.hidden_dim),
            ("max_len", self.max_len),
            ("attention_dim", self.attention_dim),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }

    /// Closed-form trainable parameter count:
    ///
    /// ```text
    /// (V_src + V_mt)·E                 embeddings
    /// + 4 · 3 · (E·H + H·H + H)        2 sides × 2 directions × 3 GRU gates
    /// + 2 · (2H·A + A)                 attention projection and vector per side
    /// + 4H + 1                         output layer
    /// ```
    pub fn parameter_count(&self) -> usize {
        let (e, h, a) = (self.embedding_dim, self.hidden_dim, self.attention_dim);
        (self.source_vocab_size + self.mt_vocab_size) * e
            + 4 * 3 * (e * h + h * h + h)
            + 2 * (2 * h * a + a)
            + 4 * h
            + 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Arrays of one GRU cell: input weights, recurrent weights and biases for
/// the update (z), reset (r) and candidate (n) gates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gate {
    Z,
    R,
    N,
}

pub(crate) const CELL_ARRAYS: usize = 9;
pub(crate) const NUM_ARRAYS: usize = 2 + 4 * CELL_ARRAYS + 4 + 2;

/// Position of each array in the flat parameter list.
pub(crate) mod layout {
    use super::*;

    pub fn embedding(side: Side) -> usize {
        match side {
            Side::Source => 0,
            Side::Mt => 1,
        }
    }

    fn cell_base(side: Side, dir: Direction) -> usize {
        let s = matches!(side, Side::Mt) as usize;
        let d = matches!(dir, Direction::Backward) as usize;
        2 + (2 * s + d) * CELL_ARRAYS
    }

    fn gate(g: Gate) -> usize {
        match g {
            Gate::Z => 0,
            Gate::R => 1,
            Gate::N => 2,
        }
    }

    pub fn input_weight(side: Side, dir: Direction, g: Gate) -> usize {
        cell_base(side, dir) + gate(g)
    }

    pub fn recurrent_weight(side: Side, dir: Direction, g: Gate) -> usize {
        cell_base(side, dir) + 3 + gate(g)
    }

    pub fn bias(side: Side, dir: Direction, g: Gate) -> usize {
        cell_base(side, dir) + 6 + gate(g)
    }

    pub fn attention_projection(side: Side) -> usize {
        2 + 4 * CELL_ARRAYS + 2 * matches!(side, Side::Mt) as usize
    }

    pub fn attention_vector(side: Side) -> usize {
        attention_projection(side) + 1
    }

    pub fn output_weight() -> usize {
        NUM_ARRAYS - 2
    }

    pub fn output_bias() -> usize {
        NUM_ARRAYS - 1
    }
}

/// Name, shape and whether the array is a bias, in layout order.
pub(crate) fn array_specs(config: &ModelConfig) -> Vec<(String, Vec<usize>, bool)> {
    let (e, h, a) = (config.embedding_dim, config.hidden_dim, config.attention_dim);
    let mut specs = vec![
        ("source.embedding".to_string(), vec![config.source_vocab_size, e], false),
        ("mt.embedding".to_string(), vec![config.mt_vocab_size, e], false),
    ];
    for side in ["source", "mt"] {
        for dir in ["fwd", "bwd"] {
            for g in ["z", "r", "n"] {
                specs.push((format!("{side}.{dir}.input_{g}"), vec![e, h], false));
            }
            for g in ["z", "r", "n"] {
                specs.push((format!("{side}.{dir}.recurrent_{g}"), vec![h, h], false));
            }
            for g in ["z", "r", "n"] {
                specs.push((format!("{side}.{dir}.bias_{g}"), vec![1, h], true));
            }
        }
    }
    for side in ["source", "mt"] {
        specs.push((format!("{side}.attention.projection"), vec![2 * h, a], false));
        specs.push((format!("{side}.attention.vector"), vec![a, 1], false));
    }
    specs.push(("output.weight".to_string(), vec![4 * h, 1], false));
    specs.push(("output.bias".to_string(), vec![1, 1], true));
    debug_assert_eq!(specs.len(), NUM_ARRAYS);
    specs
}

/// Every trainable array of the student, in a fixed layout.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    config: ModelConfig,
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ModelParams {
    /// Glorot-uniform matrices and zero biases, deterministic in `seed`.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut names = Vec::with_capacity(NUM_ARRAYS);
        let mut tensors = Vec::with_capacity(NUM_ARRAYS);
        for (name, shape, is_bias) in array_specs(config) {
            let n: usize = shape.iter().product();
            let data = if is_bias {
                vec![0.0; n]
            } else {
                let limit = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
                (0..n).map(|_| rng.random_range(-limit..limit)).collect()
            };
            names.push(name);
            tensors.push(Tensor::new(shape, data)?);
        }
        Ok(ModelParams {
            config: *config,
            names,
            tensors,
        })
    }

    /// Wraps existing arrays after checking them against the layout.
    pub fn from_tensors(config: &ModelConfig, tensors: Vec<Tensor>) -> Result<Self> {
        config.validate()?;
        let specs = array_specs(config);
        if tensors.len() != specs.len() {
            return Err(Error::dim(
                "model",
                format!("expected {} arrays, got {}", specs.len(), tensors.len()),
            ));
        }
        for ((name, shape, _), t) in specs.iter().zip(&tensors) {
            if t.shape() != shape.as_slice() {
                return Err(Error::dim(
                    "model",
                    format!("{name}: expected shape {shape:?}, got {:?}", t.shape()),
                ));
            }
        }
        Ok(ModelParams {
            config: *config,
            names: specs.into_iter().map(|s| s.0).collect(),
            tensors,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn output_weight_mut(&mut self) -> &mut Tensor {
        &mut self.tensors[layout::output_weight()]
    }

    pub fn output_bias_mut(&mut self) -> &mut Tensor {
        &mut self.tensors[layout::output_bias()]
    }

    /// Total scalar count, measured from the arrays.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelConfig {
        ModelConfig {
            source_vocab_size: 11,
            mt_vocab_size: 13,
            embedding_dim: 5,
            hidden_dim: 3,
            max_len: 6,
            attention_dim: 4,
        }
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let a = ModelParams::init(&small(), 7).unwrap();
        let b = ModelParams::init(&small(), 7).unwrap();
        let c = ModelParams::init(&small(), 8).unwrap();
        let bits = |p: &ModelParams| {
            p.tensors()
                .iter()
                .flat_map(|t| t.data().iter().map(|v| v.to_bits()))
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(&a), bits(&b));
        assert_ne!(bits(&a), bits(&c));
        assert!(a.is_finite());
    }

    #[test]
    fn biases_start_at_zero_and_weights_within_glorot_limit() {
        let p = ModelParams::init(&small(), 1).unwrap();
        for ((name, shape, is_bias), t) in array_specs(&small()).iter().zip(p.tensors()) {
            if *is_bias {
                assert!(t.data().iter().all(|v| *v == 0.0), "{name}");
            } else {
                let limit = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
                assert!(t.data().iter().all(|v| v.abs() <= limit), "{name}");
            }
        }
    }

    #[test]
    fn parameter_count_at_default_dimensions() {
        // embeddings 2·30002·300 = 18_001_200
        // GRU cells  4·3·(300·50 + 50·50 + 50) = 210_600
        // attention  2·(100·100 + 100) = 20_200
        // output     4·50 + 1 = 201
        let config = ModelConfig::new(30_002, 30_002);
        assert_eq!(config.attention_dim, 100);
        assert_eq!(config.parameter_count(), 18_232_201);
        let p = ModelParams::init(&config, 0).unwrap();
        assert_eq!(p.count(), config.parameter_count());
    }

    #[test]
    fn count_matches_formula_for_uneven_sizes() {
        let config = small();
        let p = ModelParams::init(&config, 0).unwrap();
        assert_eq!(p.count(), config.parameter_count());
        assert_eq!(p.names().len(), NUM_ARRAYS);
        assert_eq!(p.names()[layout::input_weight(Side::Mt, Direction::Backward, Gate::R)], "mt.bwd.input_r");
        assert_eq!(p.names()[layout::recurrent_weight(Side::Source, Direction::Forward, Gate::N)], "source.fwd.recurrent_n");
        assert_eq!(p.names()[layout::bias(Side::Mt, Direction::Forward, Gate::Z)], "mt.fwd.bias_z");
        assert_eq!(p.names()[layout::attention_vector(Side::Mt)], "mt.attention.vector");
    }

    #[test]
    fn zero_dimensions_are_rejected() {
        let mut c = small();
        c.hidden_dim = 0;
        assert_eq!(ModelParams::init(&c, 0).unwrap_err().category(), "config");
        let p = ModelParams::init(&small(), 0).unwrap();
        let mut bad = p.tensors().to_vec();
        bad.pop();
        assert!(ModelParams::from_tensors(&small(), bad).is_err());
    }
}
