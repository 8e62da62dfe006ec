//! Central finite-difference validation of tape gradients.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tape::{NodeId, ParamId, Tape};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    /// Perturbation `h` of the central difference `(L(w+h) − L(w−h)) / 2h`.
    pub step: f64,
    pub tolerance: f64,
    /// Scalars checked per parameter array; smaller arrays are checked fully.
    pub samples_per_param: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-3,
            tolerance: 1e-4,
            samples_per_param: 24,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupError {
    pub name: String,
    pub max_rel_error: f64,
    pub checked: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub groups: Vec<GroupError>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// `|a − n| / max(1, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / f64::max(1.0, analytic.abs() + numeric.abs())
}

/// Compares analytic gradients of the scalar built by `build` against
/// central differences. `build` receives a fresh tape and the node ids of
/// `params` (registered in order) and must be deterministic.
pub fn gradient_check<F>(
    names: &[String],
    params: &[Tensor],
    build: F,
    config: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    F: for<'p> Fn(&mut Tape<'p>, &[NodeId]) -> Result<NodeId>,
{
    if names.len() != params.len() {
        return Err(Error::Contract(format!(
            "{} names for {} parameters",
            names.len(),
            params.len()
        )));
    }
    let evaluate = |values: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = values
            .iter()
            .enumerate()
            .map(|(i, t)| tape.param(ParamId(i), t))
            .collect();
        let loss = build(&mut tape, &ids)?;
        Ok(tape.value(loss).data()[0])
    };

    let analytic = {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = params
            .iter()
            .enumerate()
            .map(|(i, t)| tape.param(ParamId(i), t))
            .collect();
        let loss = build(&mut tape, &ids)?;
        let value = tape.value(loss).data()[0];
        if !value.is_finite() {
            return Err(Error::Numeric(format!(
                "gradient check: loss is {value} at the base point"
            )));
        }
        tape.backward(loss)?
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut work: Vec<Tensor> = params.to_vec();
    let mut groups = Vec::with_capacity(params.len());
    for (p, name) in names.iter().enumerate() {
        let grad = analytic
            .get(ParamId(p))
            .unwrap_or_else(|| Tensor::zeros(params[p].shape()));
        let picks = pick_indices(grad.data(), config.samples_per_param, &mut rng);
        let mut worst: f64 = 0.0;
        for &i in &picks {
            let base = params[p].data()[i];
            work[p].data_mut()[i] = base + config.step;
            let plus = evaluate(&work)?;
            work[p].data_mut()[i] = base - config.step;
            let minus = evaluate(&work)?;
            work[p].data_mut()[i] = base;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::Numeric(format!(
                    "gradient check: non-finite loss when perturbing {name}[{i}]"
                )));
            }
            let numeric = (plus - minus) / (2.0 * config.step);
            worst = worst.max(relative_error(grad.data()[i], numeric));
        }
        groups.push(GroupError {
            name: name.clone(),
            max_rel_error: worst,
            checked: picks.len(),
        });
    }
    let max_rel_error = groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        groups,
        max_rel_error,
        tolerance: config.tolerance,
        passed: max_rel_error < config.tolerance,
    })
}

/// Every index for small arrays; otherwise half the budget from entries with
/// a nonzero analytic gradient and the rest uniformly.
fn pick_indices(grad: &[f64], budget: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if grad.len() <= budget {
        return (0..grad.len()).collect();
    }
    let nonzero: Vec<usize> = (0..grad.len()).filter(|&i| grad[i] != 0.0).collect();
    let take = (budget / 2).min(nonzero.len());
    let mut picks: Vec<usize> = index::sample(rng, nonzero.len(), take)
        .into_iter()
        .map(|k| nonzero[k])
        .collect();
    picks.extend(index::sample(rng, grad.len(), budget - take).into_iter());
    picks.sort_unstable();
    picks.dedup();
    picks
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic<'p>(tape: &mut Tape<'p>, ids: &[NodeId]) -> Result<NodeId> {
        let sq = tape.mul(ids[0], ids[0])?;
        let s = tape.sum(sq)?;
        tape.scale(s, 0.5)
    }

    #[test]
    fn quadratic_loss_is_exact() {
        let params = vec![Tensor::row(vec![1.0, -2.0, 0.25, 3.5])];
        let report = gradient_check(
            &["w".to_string()],
            &params,
            quadratic,
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert!(report.passed);
        assert!(report.max_rel_error < 1e-8, "{report:?}");
        assert_eq!(report.groups[0].checked, 4);
    }

    #[test]
    fn zero_tolerance_fails_without_panicking() {
        let params = vec![Tensor::row(vec![0.3, 0.7])];
        let build = |tape: &mut Tape<'_>, ids: &[NodeId]| {
            let t = tape.tanh(ids[0])?;
            tape.sum(t)
        };
        let config = GradCheckConfig {
            tolerance: 0.0,
            ..GradCheckConfig::default()
        };
        let report = gradient_check(&["w".to_string()], &params, build, &config).unwrap();
        assert!(!report.passed);
        assert_eq!(report.tolerance, 0.0);
    }

    #[test]
    fn non_finite_loss_names_the_parameter() {
        // finite at w = 1, infinite once w is nudged upward
        let build = |tape: &mut Tape<'_>, ids: &[NodeId]| {
            let w = tape.value(ids[0]).data()[0];
            let k = tape.constant(Tensor::row(vec![if w > 1.0 { f64::INFINITY } else { 0.0 }]));
            let s = tape.add(ids[0], k)?;
            tape.sum(s)
        };
        let params = vec![Tensor::row(vec![1.0])];
        let err = gradient_check(
            &["weights".to_string()],
            &params,
            build,
            &GradCheckConfig::default(),
        )
        .unwrap_err();
        assert_eq!(err.category(), "numeric");
        assert!(err.to_string().contains("weights[0]"), "{err}");

        let params = vec![Tensor::row(vec![f64::INFINITY])];
        let err = gradient_check(&["w".to_string()], &params, quadratic, &GradCheckConfig::default())
            .unwrap_err();
        assert_eq!(err.category(), "numeric");
    }
}
