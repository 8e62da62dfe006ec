use super::params::{layout, Direction, Gate, ModelConfig, ModelParams};
use crate::corpus::{Encoded, Side};
use crate::error::{Error, Result};
use crate::numerics::{masked_softmax, NodeId, ParamId, Tape, Tensor};

/// Both sentences of a pair after encoding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedPair {
    pub source: Encoded,
    pub mt: Encoded,
}

impl EncodedPair {
    pub fn side(&self, side: Side) -> &Encoded {
        match side {
            Side::Source => &self.source,
            Side::Mt => &self.mt,
        }
    }
}

/// Registers every array of `params` on the tape, in layout order.
pub fn register<'p>(tape: &mut Tape<'p>, params: &'p ModelParams) -> Vec<NodeId> {
    params
        .tensors()
        .iter()
        .enumerate()
        .map(|(i, t)| tape.param(ParamId(i), t))
        .collect()
}

fn real_positions(enc: &Encoded) -> (Vec<usize>, Vec<usize>) {
    enc.mask
        .iter()
        .zip(&enc.ids)
        .enumerate()
        .filter(|(_, (m, _))| **m)
        .map(|(pos, (_, id))| (pos, *id))
        .unzip()
}

fn gru_direction(
    tape: &mut Tape<'_>,
    p: &[NodeId],
    side: Side,
    dir: Direction,
    x: NodeId,
    n: usize,
    hidden: usize,
) -> Result<NodeId> {
    let mut projected = [x; 3];
    for (slot, g) in [Gate::Z, Gate::R, Gate::N].into_iter().enumerate() {
        let xw = tape.matmul(x, p[layout::input_weight(side, dir, g)])?;
        projected[slot] = tape.add(xw, p[layout::bias(side, dir, g)])?;
    }
    let [xz, xr, xn] = projected;
    let uz = p[layout::recurrent_weight(side, dir, Gate::Z)];
    let ur = p[layout::recurrent_weight(side, dir, Gate::R)];
    let un = p[layout::recurrent_weight(side, dir, Gate::N)];

    let order: Vec<usize> = match dir {
        Direction::Forward => (0..n).collect(),
        Direction::Backward => (0..n).rev().collect(),
    };
    let mut h = tape.constant(Tensor::zeros(&[1, hidden]));
    let mut states = vec![h; n];
    for t in order {
        let xz_t = tape.gather_rows(xz, vec![t])?;
        let xr_t = tape.gather_rows(xr, vec![t])?;
        let xn_t = tape.gather_rows(xn, vec![t])?;
        let hz = tape.matmul(h, uz)?;
        let z_in = tape.add(xz_t, hz)?;
        let z = tape.sigmoid(z_in)?;
        let hr = tape.matmul(h, ur)?;
        let r_in = tape.add(xr_t, hr)?;
        let r = tape.sigmoid(r_in)?;
        let rh = tape.mul(r, h)?;
        let rhu = tape.matmul(rh, un)?;
        let c_in = tape.add(xn_t, rhu)?;
        let c = tape.tanh(c_in)?;
        // h' = (1 - z)·c + z·h = c + z·(h - c)
        let diff = tape.sub(h, c)?;
        let gated = tape.mul(z, diff)?;
        h = tape.add(c, gated)?;
        states[t] = h;
    }
    tape.concat(&states, 0)
}

/// Encoder outputs for the real tokens of one sentence, `n × 2H`, forward
/// states in the first `H` columns. Padding never enters the recurrence.
pub(crate) fn encode_side(
    tape: &mut Tape<'_>,
    p: &[NodeId],
    config: &ModelConfig,
    side: Side,
    enc: &Encoded,
) -> Result<Option<NodeId>> {
    let (_, ids) = real_positions(enc);
    if ids.is_empty() {
        return Ok(None);
    }
    let n = ids.len();
    let x = tape.gather_rows(p[layout::embedding(side)], ids)?;
    let fwd = gru_direction(tape, p, side, Direction::Forward, x, n, config.hidden_dim)?;
    let bwd = gru_direction(tape, p, side, Direction::Backward, x, n, config.hidden_dim)?;
    Ok(Some(tape.concat(&[fwd, bwd], 1)?))
}

/// Additive attention `s_t = v · tanh(W h_t)` over encoder outputs, returning
/// the `1 × 2H` weighted sum.
pub(crate) fn attend(tape: &mut Tape<'_>, p: &[NodeId], side: Side, states: NodeId) -> Result<NodeId> {
    let n = tape.value(states).shape()[0];
    let proj = tape.matmul(states, p[layout::attention_projection(side)])?;
    let act = tape.tanh(proj)?;
    let scores = tape.matmul(act, p[layout::attention_vector(side)])?;
    let weights = tape.softmax_masked(scores, vec![true; n])?;
    let row = tape.reshape(weights, vec![1, n])?;
    tape.matmul(row, states)
}

/// Predicted quality in `(0, 1)` as a `1 × 1` node.
pub fn build_prediction(
    tape: &mut Tape<'_>,
    p: &[NodeId],
    config: &ModelConfig,
    pair: &EncodedPair,
) -> Result<NodeId> {
    let mut pooled = Vec::with_capacity(2);
    for side in [Side::Source, Side::Mt] {
        let states = encode_side(tape, p, config, side, pair.side(side))?.ok_or_else(|| {
            Error::Contract(format!(
                "{} sentence has no tokens to attend over",
                match side {
                    Side::Source => "source",
                    Side::Mt => "mt",
                }
            ))
        })?;
        pooled.push(attend(tape, p, side, states)?);
    }
    let joined = tape.concat(&pooled, 1)?;
    let logit = tape.matmul(joined, p[layout::output_weight()])?;
    let logit = tape.add(logit, p[layout::output_bias()])?;
    tape.sigmoid(logit)
}

/// Mean squared error of the predictions for `pairs` against `targets`.
pub fn build_batch_loss(
    tape: &mut Tape<'_>,
    p: &[NodeId],
    config: &ModelConfig,
    pairs: &[EncodedPair],
    targets: &[f64],
) -> Result<NodeId> {
    if pairs.is_empty() || pairs.len() != targets.len() {
        return Err(Error::dim(
            "loss",
            format!("{} pairs against {} targets", pairs.len(), targets.len()),
        ));
    }
    let preds = pairs
        .iter()
        .map(|pair| build_prediction(tape, p, config, pair))
        .collect::<Result<Vec<_>>>()?;
    let stacked = tape.concat(&preds, 0)?;
    let target = tape.constant(Tensor::new(vec![targets.len(), 1], targets.to_vec())?);
    tape.mse(stacked, target)
}

pub fn predict(params: &ModelParams, pair: &EncodedPair) -> Result<f64> {
    let mut tape = Tape::new();
    let p = register(&mut tape, params);
    let out = build_prediction(&mut tape, &p, params.config(), pair)?;
    Ok(tape.value(out).data()[0])
}

/// Encoder outputs placed at their original positions in a
/// `max_len × 2H` matrix; padded rows are zero.
pub fn encode_sentence(params: &ModelParams, side: Side, enc: &Encoded) -> Result<Tensor> {
    let config = params.config();
    if enc.ids.len() != enc.mask.len() {
        return Err(Error::dim("encode", "ids and mask lengths differ"));
    }
    let width = 2 * config.hidden_dim;
    let rows = enc.ids.len();
    let mut out = Tensor::zeros(&[rows.max(1), width]);
    let mut tape = Tape::new();
    let p = register(&mut tape, params);
    if let Some(states) = encode_side(&mut tape, &p, config, side, enc)? {
        let values = tape.value(states);
        let (positions, _) = real_positions(enc);
        for (k, pos) in positions.into_iter().enumerate() {
            out.data_mut()[pos * width..(pos + 1) * width].copy_from_slice(values.row_slice(k));
        }
    }
    Ok(out)
}

/// Attention pooling over a padded encoder matrix. Returns the pooled
/// `1 × 2H` vector and the weight of every position; masked positions get
/// weight zero, and a fully masked sentence is a contract error.
pub fn attention_pool(
    params: &ModelParams,
    side: Side,
    states: &Tensor,
    mask: &[bool],
) -> Result<(Tensor, Vec<f64>)> {
    let (rows, width) = states
        .dims2()
        .ok_or_else(|| Error::dim("attention", "states must be a matrix"))?;
    if rows != mask.len() {
        return Err(Error::dim(
            "attention",
            format!("{rows} rows against a mask of {}", mask.len()),
        ));
    }
    let t = params.tensors();
    let w = &t[layout::attention_projection(side)];
    let v = &t[layout::attention_vector(side)];
    let a = w.shape()[1];
    if w.shape()[0] != width {
        return Err(Error::dim(
            "attention",
            format!("states have width {width}, projection expects {}", w.shape()[0]),
        ));
    }
    let mut scores = vec![0.0; rows];
    for (r, score) in scores.iter_mut().enumerate() {
        let h = states.row_slice(r);
        let mut s = 0.0;
        for j in 0..a {
            let mut acc = 0.0;
            for (k, hk) in h.iter().enumerate() {
                acc += hk * w.data()[k * a + j];
            }
            s += acc.tanh() * v.data()[j];
        }
        *score = s;
    }
    let weights = masked_softmax(&scores, mask)?;
    let mut pooled = vec![0.0; width];
    for (r, wr) in weights.iter().enumerate() {
        if *wr != 0.0 {
            for (o, h) in pooled.iter_mut().zip(states.row_slice(r)) {
                *o += wr * h;
            }
        }
    }
    Ok((Tensor::new(vec![1, width], pooled)?, weights))
}
