use std::fmt::Write as _;
use std::path::Path;

use super::scenario::{generate_scenario, Oracles, Scenario, ScenarioData};
use crate::corpus::Dataset;
use crate::distill::{filter_by_variance, size_subsets, FilterMode};
use crate::error::{Error, Result};
use crate::eval::{bin_variance_error, mean_std, spearman, sweep, Binning};
use crate::model::{ModelConfig, Student, Vocabs};
use crate::teacher::{label_dataset, train_ensemble, Ensemble, Oracle, TeacherSource};
use crate::trainer::{evaluate_epoch, train, TrainConfig};

/// Student and experiment settings for the findings suite.
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteConfig {
    /// Independent repetitions for averaged findings.
    pub seeds: usize,
    pub ensemble_size: usize,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub vocab_max: usize,
    /// Nested subset sizes as fractions of the unlabeled pool.
    pub subset_fractions: (f64, f64),
    pub bins: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            seeds: 3,
            ensemble_size: 5,
            model: ModelConfig {
                source_vocab_size: 0,
                mt_vocab_size: 0,
                embedding_dim: 32,
                hidden_dim: 16,
                max_len: 24,
                attention_dim: 32,
            },
            train: TrainConfig {
                batch_size: 32,
                max_epochs: 8,
                patience: 2,
                ..TrainConfig::default()
            },
            vocab_max: 100_000,
            subset_fractions: (0.1, 0.5),
            bins: 10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    /// Teacher and gold noise are equal, so no gap is expected.
    NoGap,
    /// Reported without a threshold.
    Info,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::NoGap => "no-gap",
            Status::Info => "info",
        }
    }

    fn of(ok: bool) -> Status {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Finding {
    pub id: &'static str,
    pub claim: &'static str,
    pub measured: f64,
    pub threshold: String,
    pub status: Status,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FindingsReport {
    pub rows: Vec<Finding>,
}

impl FindingsReport {
    pub fn get(&self, id: &str) -> Option<&Finding> {
        self.rows.iter().find(|r| r.id == id)
    }

    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(|r| r.status != Status::Fail)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,claim,measured,threshold,status,detail\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},\"{}\"",
                r.id,
                r.claim,
                r.measured,
                r.threshold,
                r.status.as_str(),
                r.detail.replace('"', "'")
            );
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

fn test_pearson(student: &Student, test_truth: &Dataset) -> Result<f64> {
    evaluate_epoch(student, test_truth)?
        .pearson
        .value()
        .ok_or_else(|| Error::Metric("student predictions are constant on the test set".into()))
}

fn fit(data: &Dataset, validation: &Dataset, suite: &SuiteConfig, vocabs: &Vocabs, seed: u64) -> Result<Student> {
    let init = Student::init(&suite.model, vocabs, seed)?;
    let config = TrainConfig { seed, ..suite.train };
    Ok(train(data, validation, &config, init)?.0)
}

fn relabel(d: &Dataset, oracle: &Oracle) -> Result<Dataset> {
    label_dataset(d, &TeacherSource::Synthetic(oracle.clone()), true)
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(";")
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Everything the experiments share.
pub struct SuiteContext<'a> {
    pub scenario: &'a Scenario,
    pub data: ScenarioData,
    pub vocabs: Vocabs,
    pub suite: &'a SuiteConfig,
}

impl<'a> SuiteContext<'a> {
    pub fn new(scenario: &'a Scenario, suite: &'a SuiteConfig) -> Result<Self> {
        if suite.seeds < 1 {
            return Err(Error::Config("the suite needs at least one seed".into()));
        }
        let data = generate_scenario(scenario)?;
        let vocabs = Vocabs::build(&[&data.train, &data.unlabeled, &data.shifted], suite.vocab_max)?;
        Ok(SuiteContext {
            scenario,
            data,
            vocabs,
            suite,
        })
    }

    fn oracles(&self, round: u64) -> Oracles {
        Oracles::for_round(self.scenario, self.data.map.clone(), round)
    }

    /// Students trained on gold versus teacher labels of the same inputs,
    /// one noise draw and student seed per round.
    pub fn gold_vs_distilled(&self) -> Result<Finding> {
        let (mut gold, mut dist) = (Vec::new(), Vec::new());
        for r in 0..self.suite.seeds as u64 {
            let o = self.oracles(r);
            let gold_train = relabel(&self.data.train, &o.gold)?;
            let dist_train = relabel(&self.data.train, &o.teacher)?;
            let validation = relabel(&self.data.validation, &o.gold)?;
            gold.push(test_pearson(&fit(&gold_train, &validation, self.suite, &self.vocabs, r)?, &self.data.test_truth)?);
            dist.push(test_pearson(&fit(&dist_train, &validation, self.suite, &self.vocabs, r)?, &self.data.test_truth)?);
        }
        let gap = mean(&dist) - mean(&gold);
        let status = if self.scenario.sigma_teacher == self.scenario.sigma_gold {
            Status::NoGap
        } else {
            Status::of(gap >= 0.03)
        };
        Ok(Finding {
            id: "distilled_vs_gold",
            claim: "students trained on teacher labels beat students trained on noisy gold labels",
            measured: gap,
            threshold: ">= 0.03".into(),
            status,
            detail: format!("gold={} distilled={}", fmt_list(&gold), fmt_list(&dist)),
        })
    }

    /// Nested 10% and 50% subsets of the teacher-labeled pool.
    pub fn size_sweep(&self) -> Result<Finding> {
        let pool = relabel(&self.data.unlabeled, &self.data.oracles.teacher)?;
        let n = pool.len() as f64;
        let (a, b) = self.suite.subset_fractions;
        let sizes = [(n * a).round() as usize, (n * b).round() as usize];
        let subsets = size_subsets(&pool, &sizes, self.scenario.seed)?;
        let table = sweep(
            &subsets,
            &self.data.validation,
            &self.data.test_truth,
            self.suite.seeds,
            &self.suite.train,
            &self.suite.model,
            &self.vocabs,
        )?;
        let (small, large) = (&table.rows[0], &table.rows[1]);
        let gain = large.mean_pearson - small.mean_pearson;
        Ok(Finding {
            id: "size_monotonicity",
            claim: "more distilled data gives higher test correlation",
            measured: gain,
            threshold: ">= 0.01".into(),
            status: Status::of(gain >= 0.01),
            detail: format!(
                "n={} mean={:.4}±{:.4} n={} mean={:.4}±{:.4} (± is the range half-width)",
                small.size, small.mean_pearson, small.half_width, large.size, large.mean_pearson, large.half_width
            ),
        })
    }

    /// Ensemble trained on the gold training set; variance uncertainty for
    /// the binning and filtering experiments.
    pub fn ensemble(&self) -> Result<Ensemble> {
        let base = 1000 + self.scenario.seed;
        Ok(train_ensemble(
            &self.data.train,
            &self.data.validation,
            self.suite.ensemble_size,
            base,
            &self.suite.train,
            &self.suite.model,
            &self.vocabs,
        )?
        .0)
    }

    /// Spearman correlation between variance-decile index and mean absolute
    /// error of the ensemble mean against the planted function.
    pub fn variance_error(&self, ensemble: &Ensemble) -> Result<Finding> {
        let preds = crate::par::map(&self.data.test_truth.examples, |e| ensemble.predict(e))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let means: Vec<f64> = preds.iter().map(|p| p.mean).collect();
        let vars: Vec<f64> = preds.iter().map(|p| p.variance).collect();
        let labels = self.data.test_truth.labels()?;
        let report = bin_variance_error(&means, &labels, &vars, self.suite.bins, Binning::EqualCount)?;
        let (idx, mae) = report.index_error_pairs();
        let rho = spearman(&idx, &mae)?.value().unwrap_or(0.0);
        Ok(Finding {
            id: "variance_error",
            claim: "higher ensemble variance goes with larger prediction error",
            measured: rho,
            threshold: ">= 0.5".into(),
            status: Status::of(rho >= 0.5),
            detail: format!("bin_mae={}", fmt_list(&mae)),
        })
    }

    /// Spread of teacher labels versus gold labels on the training inputs.
    pub fn smoothing(&self) -> Result<Finding> {
        let (mut teacher, mut gold) = (Vec::new(), Vec::new());
        for r in 0..self.suite.seeds as u64 {
            let o = self.oracles(r);
            teacher.push(mean_std(&relabel(&self.data.train, &o.teacher)?.labels()?).1);
            gold.push(mean_std(&relabel(&self.data.train, &o.gold)?.labels()?).1);
        }
        let ok = teacher.iter().zip(&gold).all(|(t, g)| t < g);
        let margin = teacher
            .iter()
            .zip(&gold)
            .map(|(t, g)| g - t)
            .fold(f64::INFINITY, f64::min);
        Ok(Finding {
            id: "smoothing",
            claim: "teacher labels have a smaller spread than gold labels",
            measured: margin,
            threshold: "> 0 every round".into(),
            status: Status::of(ok),
            detail: format!("teacher_std={} gold_std={}", fmt_list(&teacher), fmt_list(&gold)),
        })
    }

    /// Shifted-domain pool labeled by the shifted teacher, with and without
    /// variance filtering; plus an in-domain pool of the same size.
    pub fn shifted_filtering(&self, ensemble: &Ensemble) -> Result<Vec<Finding>> {
        let teacher = TeacherSource::WithUncertainty {
            labels: Box::new(TeacherSource::Synthetic(self.data.oracles.shifted_teacher.clone())),
            ensemble: ensemble.clone(),
        };
        let labeled = label_dataset(&self.data.shifted, &teacher, true)?;
        let (filtered, stats) = filter_by_variance(&labeled, FilterMode::OneSided)?;
        let in_domain = relabel(&self.data.unlabeled, &self.data.oracles.teacher)?;
        let in_domain = size_subsets(&in_domain, &[labeled.len().min(in_domain.len())], self.scenario.seed + 1)?
            .remove(0);

        let (mut unf, mut fil, mut ind) = (Vec::new(), Vec::new(), Vec::new());
        for r in 0..self.suite.seeds as u64 {
            let seed = 500 + r;
            unf.push(test_pearson(&fit(&labeled, &self.data.validation, self.suite, &self.vocabs, seed)?, &self.data.test_truth)?);
            fil.push(test_pearson(&fit(&filtered, &self.data.validation, self.suite, &self.vocabs, seed)?, &self.data.test_truth)?);
            ind.push(test_pearson(&fit(&in_domain, &self.data.validation, self.suite, &self.vocabs, seed)?, &self.data.test_truth)?);
        }
        let diff = mean(&fil) - mean(&unf);
        let dropped = stats.dropped as f64 / labeled.len() as f64;
        Ok(vec![
            Finding {
                id: "filter_non_inferiority",
                claim: "variance filtering on the shifted pool does not hurt",
                measured: diff,
                threshold: ">= -0.02".into(),
                status: Status::of(diff >= -0.02),
                detail: format!("unfiltered={} filtered={}", fmt_list(&unf), fmt_list(&fil)),
            },
            Finding {
                id: "filter_drop_rate",
                claim: "the filter drops a moderate share of shifted candidates",
                measured: dropped,
                threshold: "[0.05, 0.40]".into(),
                status: Status::of((0.05..=0.40).contains(&dropped)),
                detail: format!(
                    "mu_v={:.3e} sigma_v={:.3e} threshold={:.3e} kept={} dropped={}",
                    stats.mean_variance, stats.std_variance, stats.threshold, stats.kept, stats.dropped
                ),
            },
            Finding {
                id: "in_domain_vs_shifted",
                claim: "in-domain distilled data versus shifted distilled data of the same size",
                measured: mean(&ind) - mean(&unf),
                threshold: "none".into(),
                status: Status::Info,
                detail: format!("in_domain={} shifted={}", fmt_list(&ind), fmt_list(&unf)),
            },
        ])
    }
}

/// Runs every experiment of the suite on one scenario.
pub fn run_findings_suite(scenario: &Scenario, suite: &SuiteConfig) -> Result<FindingsReport> {
    let ctx = SuiteContext::new(scenario, suite)?;
    let mut rows = vec![ctx.gold_vs_distilled()?, ctx.size_sweep()?];
    let ensemble = ctx.ensemble()?;
    rows.push(ctx.variance_error(&ensemble)?);
    rows.push(ctx.smoothing()?);
    rows.extend(ctx.shifted_filtering(&ensemble)?);
    Ok(FindingsReport { rows })
}
