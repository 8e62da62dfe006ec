//! Pseudo-labeling with a teacher, variance filtering and nested subsets.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{write_pairs, Dataset};
use crate::error::{Error, Result};
use crate::eval::mean_std;
use crate::manifest::Manifest;
use crate::teacher::{label_dataset, TeacherSource};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FilterMode {
    /// Drop variances above `μ + σ`.
    #[default]
    OneSided,
    /// Also drop variances below `μ − σ`.
    TwoSided,
}

impl FilterMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FilterMode::OneSided => "one-sided",
            FilterMode::TwoSided => "two-sided",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterStats {
    pub mean_variance: f64,
    /// Population standard deviation over the candidates.
    pub std_variance: f64,
    pub threshold: f64,
    /// Lower cut, two-sided mode only.
    pub lower: Option<f64>,
    pub kept: usize,
    pub dropped: usize,
}

impl FilterStats {
    pub fn kept_fraction(&self) -> f64 {
        let n = self.kept + self.dropped;
        if n == 0 {
            0.0
        } else {
            self.kept as f64 / n as f64
        }
    }

    pub fn record(&self, m: &mut Manifest) {
        m.set("mu_v", self.mean_variance)
            .set("sigma_v", self.std_variance)
            .set("threshold", self.threshold)
            .set("kept", self.kept)
            .set("dropped", self.dropped);
        if let Some(lower) = self.lower {
            m.set("lower_threshold", lower);
        }
    }
}

/// Keeps candidates whose ensemble variance is within one standard deviation
/// of the mean variance, order preserved. Statistics come from the
/// candidates themselves (population standard deviation).
pub fn filter_by_variance(candidates: &Dataset, mode: FilterMode) -> Result<(Dataset, FilterStats)> {
    let variances = candidates
        .examples
        .iter()
        .enumerate()
        .map(|(i, e)| {
            e.variance
                .ok_or_else(|| Error::Contract(format!("example {i} has no variance")))
        })
        .collect::<Result<Vec<f64>>>()?;
    let (mean, std) = mean_std(&variances);
    let threshold = mean + std;
    let lower = match mode {
        FilterMode::OneSided => None,
        FilterMode::TwoSided => Some(mean - std),
    };
    let kept: Vec<_> = candidates
        .examples
        .iter()
        .zip(&variances)
        .filter(|(_, &v)| v <= threshold && lower.is_none_or(|lo| v >= lo))
        .map(|(e, _)| e.clone())
        .collect();
    let stats = FilterStats {
        mean_variance: mean,
        std_variance: std,
        threshold,
        lower,
        kept: kept.len(),
        dropped: candidates.len() - kept.len(),
    };
    Ok((candidates.with_examples(kept), stats))
}

#[derive(Clone, Debug)]
pub struct PipelineOptions {
    pub filter: Option<FilterMode>,
    pub overwrite_labels: bool,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub dataset: Dataset,
    pub stats: Option<FilterStats>,
    pub manifest: Manifest,
    pub manifest_path: PathBuf,
}

/// `<output>.manifest`
pub fn manifest_path_for(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".manifest");
    PathBuf::from(name)
}

/// Labels the pool, optionally filters by variance, writes the result as a
/// pair TSV and its manifest.
pub fn run_pipeline(
    pool: &Dataset,
    teacher: &TeacherSource,
    options: &PipelineOptions,
    output: impl AsRef<Path>,
) -> Result<PipelineOutput> {
    if options.filter.is_some() && !teacher.provides_variance() {
        return Err(Error::Config(format!(
            "filtering needs an ensemble teacher, got {}",
            teacher.describe()
        )));
    }
    let labeled = label_dataset(pool, teacher, options.overwrite_labels)?;
    let (dataset, stats) = match options.filter {
        Some(mode) => {
            let (d, s) = filter_by_variance(&labeled, mode)?;
            (d, Some(s))
        }
        None => (labeled, None),
    };
    let output = output.as_ref();
    write_pairs(&dataset, output)?;

    let mut manifest = Manifest::new();
    manifest
        .set("pool_size", pool.len())
        .set("teacher", teacher.describe())
        .set("K", teacher.ensemble_size().map_or("none".to_string(), |k| k.to_string()))
        .set("filter", options.filter.map_or("off", FilterMode::as_str))
        .set("overwrite_labels", options.overwrite_labels)
        .set("seed", options.seed)
        .set("output_size", dataset.len());
    if let Some(s) = &stats {
        s.record(&mut manifest);
    }
    let manifest_path = manifest_path_for(output);
    manifest.write(&manifest_path)?;
    Ok(PipelineOutput {
        dataset,
        stats,
        manifest,
        manifest_path,
    })
}

/// Shuffles once with `seed` and returns prefixes of the requested sizes,
/// so smaller subsets nest inside larger ones.
pub fn size_subsets(dataset: &Dataset, sizes: &[usize], seed: u64) -> Result<Vec<Dataset>> {
    if let Some(&too_big) = sizes.iter().find(|&&s| s > dataset.len()) {
        return Err(Error::Config(format!(
            "subset size {too_big} exceeds the {} available examples",
            dataset.len()
        )));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(sizes
        .iter()
        .map(|&s| {
            let mut d = dataset.with_examples(order[..s].iter().map(|&i| dataset.examples[i].clone()).collect());
            d.name = format!("{}-{s}", dataset.name);
            d
        })
        .collect())
}
