//! Differentiable primitives.
//!
//! Every primitive has a pure forward function over tensors and a
//! vector-Jacobian product used by the tape. Broadcasting is limited to
//! adding a single bias row to every row of a matrix.

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Primitive {
    MatMul,
    /// Elementwise sum; the second operand may be a single row added to
    /// every row of the first.
    Add,
    Sub,
    Mul,
    Scale(f64),
    Tanh,
    Sigmoid,
    /// Softmax over all elements; `false` entries get probability 0.
    SoftmaxMasked(Vec<bool>),
    /// Concatenation of rank-2 tensors along `axis` (0 = rows, 1 = columns).
    Concat { axis: usize },
    GatherRows(Vec<usize>),
    Reshape(Vec<usize>),
    ReduceMean,
    Sum,
    /// Mean squared difference of two equally shaped tensors.
    Mse,
}

impl Primitive {
    pub fn name(&self) -> &'static str {
        match self {
            Primitive::MatMul => "matmul",
            Primitive::Add => "add",
            Primitive::Sub => "sub",
            Primitive::Mul => "mul",
            Primitive::Scale(_) => "scale",
            Primitive::Tanh => "tanh",
            Primitive::Sigmoid => "sigmoid",
            Primitive::SoftmaxMasked(_) => "softmax-with-mask",
            Primitive::Concat { .. } => "concat",
            Primitive::GatherRows(_) => "gather-rows",
            Primitive::Reshape(_) => "reshape",
            Primitive::ReduceMean => "reduce-mean",
            Primitive::Sum => "sum",
            Primitive::Mse => "mse",
        }
    }

    fn arity(&self) -> Option<usize> {
        match self {
            Primitive::MatMul | Primitive::Add | Primitive::Sub | Primitive::Mul | Primitive::Mse => {
                Some(2)
            }
            Primitive::Concat { .. } => None,
            _ => Some(1),
        }
    }

    fn check_arity(&self, n: usize) -> Result<()> {
        match self.arity() {
            Some(k) if k != n => Err(Error::dim(
                self.name(),
                format!("expected {k} inputs, got {n}"),
            )),
            None if n == 0 => Err(Error::dim(self.name(), "expected at least one input")),
            _ => Ok(()),
        }
    }

    /// Pure forward evaluation.
    pub fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        self.check_arity(inputs.len())?;
        let name = self.name();
        match self {
            Primitive::MatMul => {
                let (a, b) = (inputs[0], inputs[1]);
                let ((m, k), (k2, n)) = match (a.dims2(), b.dims2()) {
                    (Some(x), Some(y)) => (x, y),
                    _ => return Err(shape_err(name, a, b)),
                };
                if k != k2 {
                    return Err(shape_err(name, a, b));
                }
                let mut out = vec![0.0; m * n];
                matmul_into(a.data(), b.data(), &mut out, m, k, n);
                Ok(Tensor::from_parts(vec![m, n], out))
            }
            Primitive::Add | Primitive::Sub => {
                let (a, b) = (inputs[0], inputs[1]);
                let sign = if matches!(self, Primitive::Sub) { -1.0 } else { 1.0 };
                if a.shape() == b.shape() {
                    let data = a
                        .data()
                        .iter()
                        .zip(b.data())
                        .map(|(x, y)| x + sign * y)
                        .collect();
                    return Ok(Tensor::from_parts(a.shape().to_vec(), data));
                }
                if matches!(self, Primitive::Add) {
                    if let Some(cols) = bias_cols(a, b) {
                        let bias = b.data();
                        let data = a
                            .data()
                            .chunks(cols)
                            .flat_map(|row| row.iter().zip(bias).map(|(x, y)| x + y))
                            .collect();
                        return Ok(Tensor::from_parts(a.shape().to_vec(), data));
                    }
                }
                Err(shape_err(name, a, b))
            }
            Primitive::Mul => {
                let (a, b) = (inputs[0], inputs[1]);
                if a.shape() != b.shape() {
                    return Err(shape_err(name, a, b));
                }
                let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
                Ok(Tensor::from_parts(a.shape().to_vec(), data))
            }
            Primitive::Scale(c) => Ok(map(inputs[0], |x| c * x)),
            Primitive::Tanh => Ok(map(inputs[0], f64::tanh)),
            Primitive::Sigmoid => Ok(map(inputs[0], sigmoid)),
            Primitive::SoftmaxMasked(mask) => {
                let a = inputs[0];
                if mask.len() != a.len() {
                    return Err(Error::dim(
                        name,
                        format!("mask length {} for input shape {:?}", mask.len(), a.shape()),
                    ));
                }
                Ok(Tensor::from_parts(
                    a.shape().to_vec(),
                    masked_softmax(a.data(), mask)?,
                ))
            }
            Primitive::Concat { axis } => concat(inputs, *axis),
            Primitive::GatherRows(indices) => {
                let a = inputs[0];
                let (rows, cols) = a
                    .dims2()
                    .ok_or_else(|| Error::dim(name, format!("input shape {:?} is not rank 2", a.shape())))?;
                if indices.is_empty() {
                    return Err(Error::dim(name, "empty index list"));
                }
                let mut data = Vec::with_capacity(indices.len() * cols);
                for &i in indices {
                    if i >= rows {
                        return Err(Error::Index {
                            op: name,
                            index: i,
                            size: rows,
                        });
                    }
                    data.extend_from_slice(a.row_slice(i));
                }
                Ok(Tensor::from_parts(vec![indices.len(), cols], data))
            }
            Primitive::Reshape(shape) => {
                let a = inputs[0];
                let n: usize = shape.iter().product();
                if shape.is_empty() || shape.contains(&0) || n != a.len() {
                    return Err(Error::dim(
                        name,
                        format!("cannot reshape {:?} into {:?}", a.shape(), shape),
                    ));
                }
                Ok(Tensor::from_parts(shape.clone(), a.data().to_vec()))
            }
            Primitive::ReduceMean => {
                let a = inputs[0];
                Ok(Tensor::scalar(a.data().iter().sum::<f64>() / a.len() as f64))
            }
            Primitive::Sum => Ok(Tensor::scalar(inputs[0].data().iter().sum())),
            Primitive::Mse => {
                let (a, b) = (inputs[0], inputs[1]);
                if a.shape() != b.shape() {
                    return Err(shape_err(name, a, b));
                }
                let sq: f64 = a
                    .data()
                    .iter()
                    .zip(b.data())
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum();
                Ok(Tensor::scalar(sq / a.len() as f64))
            }
        }
    }

    /// Vector-Jacobian product: gradient of the loss with respect to input
    /// `which`, given the inputs, this primitive's output and the upstream
    /// gradient of that output.
    pub fn backward(
        &self,
        which: usize,
        inputs: &[&Tensor],
        output: &Tensor,
        upstream: &[f64],
    ) -> Vec<f64> {
        match self {
            Primitive::MatMul => {
                let (a, b) = (inputs[0], inputs[1]);
                let (m, k) = a.dims2().unwrap();
                let (_, n) = b.dims2().unwrap();
                if which == 0 {
                    // dA = dC · Bᵀ
                    let mut g = vec![0.0; m * k];
                    for i in 0..m {
                        let dc = &upstream[i * n..(i + 1) * n];
                        let gi = &mut g[i * k..(i + 1) * k];
                        for (p, gp) in gi.iter_mut().enumerate() {
                            let brow = &b.data()[p * n..(p + 1) * n];
                            *gp = dot(dc, brow);
                        }
                    }
                    g
                } else {
                    // dB = Aᵀ · dC
                    let mut g = vec![0.0; k * n];
                    for i in 0..m {
                        let dc = &upstream[i * n..(i + 1) * n];
                        for p in 0..k {
                            let s = a.data()[i * k + p];
                            if s != 0.0 {
                                axpy(s, dc, &mut g[p * n..(p + 1) * n]);
                            }
                        }
                    }
                    g
                }
            }
            Primitive::Add | Primitive::Sub => {
                let sign = if which == 1 && matches!(self, Primitive::Sub) {
                    -1.0
                } else {
                    1.0
                };
                if which == 1 && inputs[0].shape() != inputs[1].shape() {
                    // bias row: sum upstream over rows
                    let cols = inputs[1].len();
                    let mut g = vec![0.0; cols];
                    for row in upstream.chunks(cols) {
                        for (gj, r) in g.iter_mut().zip(row) {
                            *gj += r;
                        }
                    }
                    g
                } else {
                    upstream.iter().map(|u| sign * u).collect()
                }
            }
            Primitive::Mul => {
                let other = inputs[1 - which].data();
                upstream.iter().zip(other).map(|(u, o)| u * o).collect()
            }
            Primitive::Scale(c) => upstream.iter().map(|u| c * u).collect(),
            Primitive::Tanh => upstream
                .iter()
                .zip(output.data())
                .map(|(u, y)| u * (1.0 - y * y))
                .collect(),
            Primitive::Sigmoid => upstream
                .iter()
                .zip(output.data())
                .map(|(u, y)| u * y * (1.0 - y))
                .collect(),
            Primitive::SoftmaxMasked(mask) => {
                let y = output.data();
                let inner: f64 = upstream.iter().zip(y).map(|(u, p)| u * p).sum();
                upstream
                    .iter()
                    .zip(y)
                    .zip(mask)
                    .map(|((u, p), &m)| if m { p * (u - inner) } else { 0.0 })
                    .collect()
            }
            Primitive::Concat { axis } => {
                let (out_rows, out_cols) = output.dims2().unwrap();
                let (rows, cols) = inputs[which].dims2().unwrap();
                let offset: usize = inputs[..which]
                    .iter()
                    .map(|t| {
                        let (r, c) = t.dims2().unwrap();
                        if *axis == 0 {
                            r
                        } else {
                            c
                        }
                    })
                    .sum();
                let mut g = Vec::with_capacity(rows * cols);
                if *axis == 0 {
                    g.extend_from_slice(&upstream[offset * out_cols..(offset + rows) * out_cols]);
                } else {
                    for r in 0..out_rows {
                        let start = r * out_cols + offset;
                        g.extend_from_slice(&upstream[start..start + cols]);
                    }
                }
                g
            }
            Primitive::GatherRows(indices) => {
                let a = inputs[0];
                let (_, cols) = a.dims2().unwrap();
                let mut g = vec![0.0; a.len()];
                for (k, &i) in indices.iter().enumerate() {
                    let src = &upstream[k * cols..(k + 1) * cols];
                    for (gj, s) in g[i * cols..(i + 1) * cols].iter_mut().zip(src) {
                        *gj += s;
                    }
                }
                g
            }
            Primitive::Reshape(_) => upstream.to_vec(),
            Primitive::ReduceMean => {
                let n = inputs[0].len();
                vec![upstream[0] / n as f64; n]
            }
            Primitive::Sum => vec![upstream[0]; inputs[0].len()],
            Primitive::Mse => {
                let (a, b) = (inputs[0].data(), inputs[1].data());
                let scale = 2.0 * upstream[0] / a.len() as f64;
                let sign = if which == 0 { 1.0 } else { -1.0 };
                a.iter()
                    .zip(b)
                    .map(|(x, y)| sign * scale * (x - y))
                    .collect()
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Softmax over the unmasked entries, with max subtraction. Masked logits
/// are treated as −∞ and receive exactly zero probability.
pub fn masked_softmax(logits: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    if !mask.iter().any(|&m| m) {
        return Err(Error::Contract(
            "softmax-with-mask: every position is masked".into(),
        ));
    }
    let mut max = f64::NEG_INFINITY;
    for (&x, _) in logits.iter().zip(mask).filter(|(_, &m)| m) {
        if !x.is_finite() {
            return Err(Error::Numeric(format!("softmax-with-mask: logit {x}")));
        }
        max = max.max(x);
    }
    let mut out: Vec<f64> = logits
        .iter()
        .zip(mask)
        .map(|(&x, &m)| if m { (x - max).exp() } else { 0.0 })
        .collect();
    let total: f64 = out.iter().sum();
    for v in &mut out {
        *v /= total;
    }
    Ok(out)
}

pub(crate) fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let s = a[i * k + p];
            if s != 0.0 {
                axpy(s, &b[p * n..(p + 1) * n], row);
            }
        }
    }
}

#[inline]
fn axpy(s: f64, x: &[f64], y: &mut [f64]) {
    for (yj, xj) in y.iter_mut().zip(x) {
        *yj += s * xj;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn map(a: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::from_parts(a.shape().to_vec(), a.data().iter().map(|&x| f(x)).collect())
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::dim(op, format!("shapes {:?} and {:?}", a.shape(), b.shape()))
}

/// Column count if `b` is a bias row compatible with matrix `a`.
fn bias_cols(a: &Tensor, b: &Tensor) -> Option<usize> {
    let (_, cols) = a.dims2()?;
    let ok = match b.shape() {
        [n] => *n == cols,
        [1, n] => *n == cols,
        _ => false,
    };
    ok.then_some(cols)
}

fn concat(inputs: &[&Tensor], axis: usize) -> Result<Tensor> {
    let name = "concat";
    if axis > 1 {
        return Err(Error::dim(name, format!("axis {axis} not in {{0, 1}}")));
    }
    let dims: Vec<(usize, usize)> = inputs
        .iter()
        .map(|t| {
            t.dims2()
                .ok_or_else(|| Error::dim(name, format!("input shape {:?} is not rank 2", t.shape())))
        })
        .collect::<Result<_>>()?;
    let fixed = if axis == 0 { dims[0].1 } else { dims[0].0 };
    for (t, d) in inputs.iter().zip(&dims) {
        let other = if axis == 0 { d.1 } else { d.0 };
        if other != fixed {
            return Err(shape_err(name, inputs[0], t));
        }
    }
    if axis == 0 {
        let rows = dims.iter().map(|d| d.0).sum();
        let mut data = Vec::with_capacity(rows * fixed);
        for t in inputs {
            data.extend_from_slice(t.data());
        }
        Ok(Tensor::from_parts(vec![rows, fixed], data))
    } else {
        let cols: usize = dims.iter().map(|d| d.1).sum();
        let mut data = Vec::with_capacity(fixed * cols);
        for r in 0..fixed {
            for t in inputs {
                data.extend_from_slice(t.row_slice(r));
            }
        }
        Ok(Tensor::from_parts(vec![fixed, cols], data))
    }
}
