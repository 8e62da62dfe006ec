use serde::Serialize;

use crate::error::{Error, Result};

/// A correlation coefficient, or the explicit marker that it does not exist
/// because a vector is constant or too short.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "status", content = "value", rename_all = "lowercase")]
pub enum Correlation {
    Defined(f64),
    Undefined,
}

impl Correlation {
    pub fn value(self) -> Option<f64> {
        match self {
            Correlation::Defined(v) => Some(v),
            Correlation::Undefined => None,
        }
    }

    pub fn is_defined(self) -> bool {
        matches!(self, Correlation::Defined(_))
    }

    /// Value for comparisons where an undefined correlation ranks last.
    pub fn or_worst(self) -> f64 {
        self.value().unwrap_or(f64::NEG_INFINITY)
    }
}

impl std::fmt::Display for Correlation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Correlation::Defined(v) => write!(f, "{v}"),
            Correlation::Undefined => f.write_str("undefined"),
        }
    }
}

fn check_lengths(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Contract(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    Ok(())
}

/// Sample Pearson correlation with centred two-pass sums.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Correlation> {
    check_lengths(x, y)?;
    let n = x.len();
    if n < 2 {
        return Ok(Correlation::Undefined);
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 || !(sxx * syy).is_finite() {
        return Ok(Correlation::Undefined);
    }
    Ok(Correlation::Defined((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)))
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation: Pearson over average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Correlation> {
    check_lengths(x, y)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub n: usize,
    pub pearson: Correlation,
    pub mse: f64,
    pub mae: f64,
    pub rmse: f64,
}

/// Pearson, MSE, MAE and RMSE of `predictions` against `labels`, summed in
/// input order.
pub fn evaluate(predictions: &[f64], labels: &[f64]) -> Result<EvalReport> {
    check_lengths(predictions, labels)?;
    let n = predictions.len();
    if n < 2 {
        return Err(Error::Metric(format!(
            "{n} examples; Pearson needs at least 2"
        )));
    }
    let (mut se, mut ae) = (0.0, 0.0);
    for (p, y) in predictions.iter().zip(labels) {
        se += (p - y) * (p - y);
        ae += (p - y).abs();
    }
    let mse = se / n as f64;
    Ok(EvalReport {
        n,
        pearson: pearson(predictions, labels)?,
        mse,
        mae: ae / n as f64,
        rmse: mse.sqrt(),
    })
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn defined(c: Correlation) -> f64 {
        c.value().expect("defined correlation")
    }

    #[test]
    fn pearson_examples() {
        assert_eq!(defined(pearson(&[1., 2., 3.], &[1., 2., 3.]).unwrap()), 1.0);
        assert_eq!(defined(pearson(&[1., 2., 3.], &[3., 2., 1.]).unwrap()), -1.0);
        // covariance 4 over sqrt(5)·sqrt(5)
        let r = defined(pearson(&[1., 2., 3., 4.], &[1., 3., 2., 4.]).unwrap());
        assert!((r - 0.8).abs() < 1e-15);
    }

    #[test]
    fn pearson_degenerate_inputs() {
        assert_eq!(pearson(&[1., 1., 1.], &[1., 2., 3.]).unwrap(), Correlation::Undefined);
        assert_eq!(pearson(&[1.], &[2.]).unwrap(), Correlation::Undefined);
        assert_eq!(pearson(&[1., 2.], &[1.]).unwrap_err().category(), "contract");
    }

    /// Textbook single-expression formula, independent of the centred sums.
    fn oracle(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let sx: f64 = x.iter().sum();
        let sy: f64 = y.iter().sum();
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        let sxx: f64 = x.iter().map(|a| a * a).sum();
        let syy: f64 = y.iter().map(|b| b * b).sum();
        (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
    }

    #[test]
    fn pearson_matches_direct_formula_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..1000 {
            let n = rng.random_range(2..=1000);
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = x.iter().map(|a| 0.3 * a + rng.random_range(-1.0..1.0)).collect();
            let r = defined(pearson(&x, &y).unwrap());
            assert!((r - oracle(&x, &y)).abs() < 1e-10);
        }
    }

    #[test]
    fn spearman_uses_average_ranks() {
        assert_eq!(average_ranks(&[10., 20., 20., 5.]), vec![2., 3.5, 3.5, 1.]);
        let r = defined(spearman(&[1., 2., 3., 4.], &[1., 8., 27., 64.]).unwrap());
        assert_eq!(r, 1.0);
    }

    #[test]
    fn evaluate_identity_and_small_sets() {
        let r = evaluate(&[0.1, 0.5, 0.9], &[0.1, 0.5, 0.9]).unwrap();
        assert_eq!(r.pearson, Correlation::Defined(1.0));
        assert_eq!((r.mse, r.mae, r.rmse), (0.0, 0.0, 0.0));
        assert_eq!(evaluate(&[0.1], &[0.2]).unwrap_err().category(), "metric");
        let constant = evaluate(&[0.5, 0.5], &[0.1, 0.9]).unwrap();
        assert_eq!(constant.pearson, Correlation::Undefined);
        assert!((constant.mse - 0.16).abs() < 1e-15);
    }

    #[test]
    fn undefined_serializes_without_nan() {
        let json = serde_json::to_string(&Correlation::Undefined).unwrap();
        assert_eq!(json, r#"{"status":"undefined"}"#);
    }

    proptest! {
        #[test]
        fn affine_maps_give_unit_correlation(
            x in prop::collection::vec(-100.0f64..100.0, 2..60),
            a in 0.01f64..50.0,
            b in -10.0f64..10.0,
        ) {
            let spread = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - x.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assume!(spread > 1e-3);
            let up: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let down: Vec<f64> = x.iter().map(|v| -a * v + b).collect();
            prop_assert!((defined(pearson(&x, &up).unwrap()) - 1.0).abs() < 1e-9);
            prop_assert!((defined(pearson(&x, &down).unwrap()) + 1.0).abs() < 1e-9);
        }

        #[test]
        fn pearson_is_bounded_and_symmetric(
            pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 2..50)
        ) {
            let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let a = pearson(&x, &y).unwrap();
            prop_assert_eq!(a, pearson(&y, &x).unwrap());
            if let Correlation::Defined(r) = a {
                prop_assert!((-1.0..=1.0).contains(&r));
            }
        }
    }
}
