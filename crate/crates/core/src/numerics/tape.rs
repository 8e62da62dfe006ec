//! Reverse-mode differentiation over a linear tape.
//!
//! Nodes are appended in evaluation order, so every input id precedes its
//! consumer and a single reverse sweep suffices. Parameter leaves borrow
//! their tensors for the lifetime of the tape. Gradients reaching a
//! parameter through `gather-rows` are kept as sparse row lists so that an
//! embedding lookup does not materialise a full table-sized gradient.

use std::borrow::Cow;

use super::primitive::Primitive;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Index of a trainable array within its parameter set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Debug)]
enum Source {
    Constant,
    Param(ParamId),
    Op { prim: Primitive, inputs: Vec<NodeId> },
}

#[derive(Debug)]
struct Node<'p> {
    source: Source,
    value: Cow<'p, Tensor>,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape<'p> {
    nodes: Vec<Node<'p>>,
}

/// Gradient reaching one parameter.
#[derive(Clone, Debug, PartialEq)]
pub enum ParamGrad {
    Dense(Vec<f64>),
    /// Row contributions `(row, values)`; rows may repeat and are summed.
    Rows(Vec<(usize, Vec<f64>)>),
}

/// Gradients per parameter after a backward pass.
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    shapes: Vec<Option<Vec<usize>>>,
    grads: Vec<Option<ParamGrad>>,
}

impl Gradients {
    pub fn contains(&self, id: ParamId) -> bool {
        self.grads.get(id.0).is_some_and(|g| g.is_some())
    }

    pub fn raw(&self, id: ParamId) -> Option<&ParamGrad> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Dense gradient for `id`, or `None` if the loss does not depend on it.
    pub fn get(&self, id: ParamId) -> Option<Tensor> {
        let shape = self.shapes.get(id.0)?.as_ref()?;
        let mut data = vec![0.0; shape.iter().product()];
        self.add_scaled_into(id, 1.0, &mut data);
        Some(Tensor::from_parts(shape.clone(), data))
    }

    /// `target += scale * grad(id)`; no-op if there is no gradient.
    pub fn add_scaled_into(&self, id: ParamId, scale: f64, target: &mut [f64]) {
        let Some(g) = self.raw(id) else { return };
        match g {
            ParamGrad::Dense(values) => {
                for (t, v) in target.iter_mut().zip(values) {
                    *t += scale * v;
                }
            }
            ParamGrad::Rows(rows) => {
                for (row, values) in rows {
                    let cols = values.len();
                    for (t, v) in target[row * cols..(row + 1) * cols].iter_mut().zip(values) {
                        *t += scale * v;
                    }
                }
            }
        }
    }

    fn add(&mut self, id: ParamId, shape: &[usize], grad: ParamGrad) {
        if self.grads.len() <= id.0 {
            self.grads.resize(id.0 + 1, None);
            self.shapes.resize(id.0 + 1, None);
        }
        self.shapes[id.0] = Some(shape.to_vec());
        let slot = &mut self.grads[id.0];
        *slot = Some(match (slot.take(), grad) {
            (None, g) => g,
            (Some(ParamGrad::Dense(mut a)), ParamGrad::Dense(b)) => {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                ParamGrad::Dense(a)
            }
            (Some(ParamGrad::Rows(mut a)), ParamGrad::Rows(b)) => {
                a.extend(b);
                ParamGrad::Rows(a)
            }
            (Some(ParamGrad::Dense(mut a)), ParamGrad::Rows(rows))
            | (Some(ParamGrad::Rows(rows)), ParamGrad::Dense(mut a)) => {
                for (row, values) in rows {
                    let cols = values.len();
                    for (x, y) in a[row * cols..(row + 1) * cols].iter_mut().zip(&values) {
                        *x += y;
                    }
                }
                ParamGrad::Dense(a)
            }
        });
    }
}

impl<'p> Tape<'p> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Source::Constant, Cow::Owned(value), false)
    }

    /// Registers a trainable leaf that borrows `value`.
    pub fn param(&mut self, id: ParamId, value: &'p Tensor) -> NodeId {
        self.push(Source::Param(id), Cow::Borrowed(value), true)
    }

    /// Node ids in recording order.
    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len()).map(NodeId)
    }

    pub fn value(&self, node: NodeId) -> &Tensor {
        &self.nodes[node.0].value
    }

    /// Inputs recorded for `node` (empty for leaves).
    pub fn inputs(&self, node: NodeId) -> &[NodeId] {
        match &self.nodes[node.0].source {
            Source::Op { inputs, .. } => inputs,
            _ => &[],
        }
    }

    /// Evaluates `prim` on the given nodes and records the result.
    pub fn apply(&mut self, prim: Primitive, inputs: &[NodeId]) -> Result<NodeId> {
        let values: Vec<&Tensor> = inputs.iter().map(|&i| &*self.nodes[i.0].value).collect();
        let out = prim.forward(&values)?;
        let requires_grad = inputs.iter().any(|&i| self.nodes[i.0].requires_grad);
        Ok(self.push(
            Source::Op {
                prim,
                inputs: inputs.to_vec(),
            },
            Cow::Owned(out),
            requires_grad,
        ))
    }

    fn push(&mut self, source: Source, value: Cow<'p, Tensor>, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            source,
            value,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Primitive::MatMul, &[a, b])
    }
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Add, &[a, b])
    }
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Sub, &[a, b])
    }
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Mul, &[a, b])
    }
    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        self.apply(Primitive::Scale(c), &[a])
    }
    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Tanh, &[a])
    }
    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Sigmoid, &[a])
    }
    pub fn softmax_masked(&mut self, a: NodeId, mask: Vec<bool>) -> Result<NodeId> {
        self.apply(Primitive::SoftmaxMasked(mask), &[a])
    }
    pub fn concat(&mut self, parts: &[NodeId], axis: usize) -> Result<NodeId> {
        self.apply(Primitive::Concat { axis }, parts)
    }
    pub fn gather_rows(&mut self, a: NodeId, indices: Vec<usize>) -> Result<NodeId> {
        self.apply(Primitive::GatherRows(indices), &[a])
    }
    pub fn reshape(&mut self, a: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        self.apply(Primitive::Reshape(shape), &[a])
    }
    pub fn reduce_mean(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Primitive::ReduceMean, &[a])
    }
    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Sum, &[a])
    }
    pub fn mse(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Mse, &[a, b])
    }

    /// Gradients of the scalar `loss` with respect to every parameter leaf.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let mut params = Gradients::default();
        self.sweep(loss, true, |id, shape, g| params.add(id, shape, g))?;
        Ok(params)
    }

    /// Dense gradient of `loss` with respect to every node on the tape,
    /// `None` where the loss does not depend on the node.
    pub fn node_gradients(&self, loss: NodeId) -> Result<Vec<Option<Tensor>>> {
        let grads = self.sweep(loss, false, |_, _, _| {})?;
        Ok(grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, node)| g.map(|g| Tensor::from_parts(node.value.shape().to_vec(), g)))
            .collect())
    }

    fn sweep(
        &self,
        loss: NodeId,
        sparse_rows: bool,
        mut on_param: impl FnMut(ParamId, &[usize], ParamGrad),
    ) -> Result<Vec<Option<Vec<f64>>>> {
        let loss_value = &self.nodes[loss.0].value;
        if !loss_value.is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss_value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Source::Op { prim, inputs } = &node.source else {
                if let (Source::Param(id), Some(g)) = (&node.source, &grads[idx]) {
                    on_param(*id, node.value.shape(), ParamGrad::Dense(g.clone()));
                }
                continue;
            };
            let Some(upstream) = grads[idx].take() else {
                continue;
            };
            let values: Vec<&Tensor> = inputs.iter().map(|&i| &*self.nodes[i.0].value).collect();
            for (which, &input) in inputs.iter().enumerate() {
                let input_node = &self.nodes[input.0];
                if !input_node.requires_grad {
                    continue;
                }
                if sparse_rows {
                    if let (Primitive::GatherRows(indices), Source::Param(id)) =
                        (prim, &input_node.source)
                    {
                        let cols = input_node.value.dims2().unwrap().1;
                        let rows = indices
                            .iter()
                            .zip(upstream.chunks(cols))
                            .map(|(&r, g)| (r, g.to_vec()))
                            .collect();
                        on_param(*id, input_node.value.shape(), ParamGrad::Rows(rows));
                        continue;
                    }
                }
                let g = prim.backward(which, &values, &node.value, &upstream);
                match &mut grads[input.0] {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    slot @ None => *slot = Some(g),
                }
            }
            grads[idx] = Some(upstream);
        }
        Ok(grads)
    }
}
