//! Dense tensors, a reverse-mode tape and the Adam optimizer.

mod adam;
mod gradcheck;
mod primitive;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{gradient_check, relative_error, GradCheckConfig, GradCheckReport, GroupError};
pub use primitive::{masked_softmax, sigmoid, Primitive};
pub use tape::{Gradients, NodeId, ParamGrad, ParamId, Tape};
pub use tensor::Tensor;

/// Evaluates a primitive outside any tape.
pub fn apply_primitive(prim: &Primitive, inputs: &[&Tensor]) -> crate::Result<Tensor> {
    prim.forward(inputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rand_matrix(rows: usize, cols: usize, seed: u64) -> Tensor {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(-2.0..2.0)).collect())
            .unwrap()
    }

    #[test]
    fn matmul_identity() {
        let a = rand_matrix(3, 5, 1);
        let out = apply_primitive(&Primitive::MatMul, &[&Tensor::identity(3), &a]).unwrap();
        assert_eq!(out, a);
    }

    #[test]
    fn sigmoid_of_zero() {
        let out = apply_primitive(&Primitive::Sigmoid, &[&Tensor::row(vec![0.0])]).unwrap();
        assert_eq!(out.data(), &[0.5]);
    }

    #[test]
    fn softmax_symmetric_logits() {
        let out = apply_primitive(
            &Primitive::SoftmaxMasked(vec![true, true]),
            &[&Tensor::row(vec![0.0, 0.0])],
        )
        .unwrap();
        assert_eq!(out.data(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_rejects_fully_masked_input() {
        let err = apply_primitive(
            &Primitive::SoftmaxMasked(vec![false, false]),
            &[&Tensor::row(vec![1.0, 2.0])],
        )
        .unwrap_err();
        assert_eq!(err.category(), "contract");
    }

    #[test]
    fn shape_errors_name_the_primitive() {
        let err = apply_primitive(&Primitive::MatMul, &[&rand_matrix(2, 3, 0), &rand_matrix(2, 3, 1)])
            .unwrap_err();
        assert_eq!(err.category(), "dimension");
        assert!(err.to_string().contains("matmul"));
        assert!(err.to_string().contains("[2, 3]"));

        let err = apply_primitive(&Primitive::GatherRows(vec![0, 4]), &[&rand_matrix(3, 2, 0)])
            .unwrap_err();
        assert_eq!(err.category(), "index");
    }

    #[test]
    fn bias_row_broadcast() {
        let a = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::row(vec![10.0, 20.0]);
        let out = apply_primitive(&Primitive::Add, &[&a, &b]).unwrap();
        assert_eq!(out.data(), &[11.0, 22.0, 13.0, 24.0]);
        // no broadcasting in other directions
        assert!(apply_primitive(&Primitive::Add, &[&b, &a]).is_err());
        assert!(apply_primitive(&Primitive::Mul, &[&a, &b]).is_err());
    }

    #[test]
    fn backward_of_sum_of_squares() {
        let x = Tensor::row(vec![1.0, 2.0]);
        let mut tape = Tape::new();
        let xn = tape.param(ParamId(0), &x);
        let sq = tape.mul(xn, xn).unwrap();
        let loss = tape.sum(sq).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(ParamId(0)).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn backward_at_exact_fit_is_zero() {
        // sigmoid(w·x) == y when w·x = 0 and y = 0.5
        let w = Tensor::matrix(2, 1, vec![1.0, -1.0]).unwrap();
        let x = Tensor::row(vec![0.7, 0.7]);
        let mut tape = Tape::new();
        let wn = tape.param(ParamId(0), &w);
        let xn = tape.constant(x);
        let z = tape.matmul(xn, wn).unwrap();
        let p = tape.sigmoid(z).unwrap();
        let y = tape.constant(Tensor::row(vec![0.5]));
        let loss = tape.mse(p, y).unwrap();
        let g = tape.backward(loss).unwrap().get(ParamId(0)).unwrap();
        assert!(g.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn backward_requires_scalar_loss() {
        let x = Tensor::row(vec![1.0, 2.0]);
        let mut tape = Tape::new();
        let xn = tape.param(ParamId(0), &x);
        let t = tape.tanh(xn).unwrap();
        assert_eq!(tape.backward(t).unwrap_err().category(), "contract");
    }

    #[test]
    fn node_gradients_match_value_shapes() {
        let w = rand_matrix(3, 4, 2);
        let x = rand_matrix(2, 3, 3);
        let mut tape = Tape::new();
        let wn = tape.param(ParamId(0), &w);
        let xn = tape.param(ParamId(1), &x);
        let h = tape.matmul(xn, wn).unwrap();
        let h = tape.tanh(h).unwrap();
        let g = tape.gather_rows(h, vec![1, 0, 1]).unwrap();
        let loss = tape.reduce_mean(g).unwrap();
        let grads = tape.node_gradients(loss).unwrap();
        for node in tape.node_ids() {
            let g = grads[node.index()].as_ref().expect("every node reaches the loss");
            assert_eq!(g.shape(), tape.value(node).shape());
            // inputs precede consumers
            assert!(tape.inputs(node).iter().all(|inp| inp.index() < node.index()));
        }
    }

    #[test]
    fn sparse_and_dense_embedding_gradients_agree() {
        let table = rand_matrix(6, 3, 9);
        let mut tape = Tape::new();
        let t = tape.param(ParamId(0), &table);
        let rows = tape.gather_rows(t, vec![4, 1, 4]).unwrap();
        let th = tape.tanh(rows).unwrap();
        let loss = tape.sum(th).unwrap();
        let sparse = tape.backward(loss).unwrap();
        assert!(matches!(sparse.raw(ParamId(0)), Some(ParamGrad::Rows(_))));
        let dense = tape.node_gradients(loss).unwrap()[t.index()].clone().unwrap();
        assert_eq!(sparse.get(ParamId(0)).unwrap(), dense);
    }

    /// Builds a scalar loss through `prim` so every primitive can be
    /// checked against central differences.
    fn check_primitive(prim: Primitive, shapes: &[(usize, usize)], seed: u64) -> f64 {
        let params: Vec<Tensor> = shapes
            .iter()
            .enumerate()
            .map(|(i, &(r, c))| rand_matrix(r, c, seed * 31 + i as u64))
            .collect();
        let names: Vec<String> = (0..params.len()).map(|i| format!("x{i}")).collect();
        // weight the output with a fixed pattern so the loss is not symmetric
        let build = move |tape: &mut Tape<'_>, ids: &[NodeId]| {
            let out = tape.apply(prim.clone(), ids)?;
            let n = tape.value(out).len();
            let shape = tape.value(out).shape().to_vec();
            let weights: Vec<f64> = (0..n).map(|i| 0.3 + 0.17 * i as f64).collect();
            let w = tape.constant(Tensor::new(shape, weights)?);
            let prod = tape.mul(out, w)?;
            tape.sum(prod)
        };
        let report = gradient_check(&names, &params, build, &GradCheckConfig::default()).unwrap();
        report.max_rel_error
    }

    #[test]
    fn every_primitive_matches_finite_differences() {
        let cases: Vec<(Primitive, Vec<(usize, usize)>)> = vec![
            (Primitive::MatMul, vec![(3, 4), (4, 2)]),
            (Primitive::Add, vec![(3, 4), (3, 4)]),
            (Primitive::Add, vec![(3, 4), (1, 4)]),
            (Primitive::Sub, vec![(2, 5), (2, 5)]),
            (Primitive::Mul, vec![(2, 3), (2, 3)]),
            (Primitive::Scale(-1.7), vec![(2, 3)]),
            (Primitive::Tanh, vec![(3, 3)]),
            (Primitive::Sigmoid, vec![(3, 3)]),
            (
                Primitive::SoftmaxMasked(vec![true, false, true, true, false, true]),
                vec![(6, 1)],
            ),
            (Primitive::Concat { axis: 0 }, vec![(2, 3), (1, 3)]),
            (Primitive::Concat { axis: 1 }, vec![(2, 3), (2, 1), (2, 2)]),
            (Primitive::GatherRows(vec![2, 0, 2]), vec![(3, 4)]),
            (Primitive::Reshape(vec![1, 6]), vec![(3, 2)]),
            (Primitive::ReduceMean, vec![(3, 4)]),
            (Primitive::Sum, vec![(3, 4)]),
            (Primitive::Mse, vec![(2, 3), (2, 3)]),
        ];
        for seed in 0..5 {
            for (prim, shapes) in &cases {
                let err = check_primitive(prim.clone(), shapes, seed);
                assert!(err < 1e-4, "{} seed {seed}: {err}", prim.name());
            }
        }
    }

    proptest! {
        #[test]
        fn masked_softmax_is_a_distribution(
            logits in prop::collection::vec(-2.0f64..2.0, 1..20),
            mask_bits in prop::collection::vec(any::<bool>(), 20),
        ) {
            let mut mask: Vec<bool> = mask_bits[..logits.len()].to_vec();
            mask[0] = true;
            let p = masked_softmax(&logits, &mask).unwrap();
            let total: f64 = p.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            for (pi, m) in p.iter().zip(&mask) {
                if !m { prop_assert_eq!(*pi, 0.0); } else { prop_assert!(*pi > 0.0); }
            }
        }

        #[test]
        fn masked_softmax_shift_invariance(
            ticks in prop::collection::vec(-2048i32..2048, 1..16),
            shift in -50i32..50,
        ) {
            // dyadic logits and integer shifts keep every subtraction exact
            let logits: Vec<f64> = ticks.iter().map(|&t| t as f64 / 1024.0).collect();
            let shifted: Vec<f64> = logits.iter().map(|x| x + shift as f64).collect();
            let mask = vec![true; logits.len()];
            let a = masked_softmax(&logits, &mask).unwrap();
            let b = masked_softmax(&shifted, &mask).unwrap();
            prop_assert_eq!(
                a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }

        #[test]
        fn masked_softmax_shift_invariance_real(
            logits in prop::collection::vec(-2.0f64..2.0, 1..16),
            shift in -5.0f64..5.0,
        ) {
            let shifted: Vec<f64> = logits.iter().map(|x| x + shift).collect();
            let mask = vec![true; logits.len()];
            let a = masked_softmax(&logits, &mask).unwrap();
            let b = masked_softmax(&shifted, &mask).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn primitives_are_pure(seed in 0u64..1000) {
            let a = rand_matrix(3, 4, seed);
            let b = rand_matrix(4, 2, seed + 1);
            let x = apply_primitive(&Primitive::MatMul, &[&a, &b]).unwrap();
            let y = apply_primitive(&Primitive::MatMul, &[&a, &b]).unwrap();
            prop_assert_eq!(x, y);
        }
    }
}
