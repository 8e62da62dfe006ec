use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Binning {
    /// Sort by variance and split into groups of equal size.
    #[default]
    EqualCount,
    /// Split the observed variance range into equal-width intervals.
    EqualWidth,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Bin {
    pub index: usize,
    pub variance_min: f64,
    pub variance_max: f64,
    /// Mean absolute error; absent for an empty equal-width bin.
    pub mean_abs_error: Option<f64>,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BinReport {
    pub bins: Vec<Bin>,
}

impl BinReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin,variance_min,variance_max,mean_abs_error,count\n");
        for b in &self.bins {
            let mae = b.mean_abs_error.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                b.index, b.variance_min, b.variance_max, mae, b.count
            ));
        }
        out
    }

    pub fn to_jsonl(&self) -> String {
        self.bins
            .iter()
            .map(|b| serde_json::to_string(b).expect("bins serialize") + "\n")
            .collect()
    }

    /// Bin indices and mean errors of the non-empty bins.
    pub fn index_error_pairs(&self) -> (Vec<f64>, Vec<f64>) {
        self.bins
            .iter()
            .filter_map(|b| b.mean_abs_error.map(|e| (b.index as f64, e)))
            .unzip()
    }
}

/// Groups examples by prediction variance and reports the mean absolute
/// error of each group, lowest variance first.
pub fn bin_variance_error(
    predictions: &[f64],
    labels: &[f64],
    variances: &[f64],
    bins: usize,
    binning: Binning,
) -> Result<BinReport> {
    let n = predictions.len();
    if labels.len() != n || variances.len() != n {
        return Err(Error::Contract(format!(
            "length mismatch: {n} predictions, {} labels, {} variances",
            labels.len(),
            variances.len()
        )));
    }
    if bins < 2 {
        return Err(Error::Config(format!("bins must be at least 2, got {bins}")));
    }
    if n < bins {
        return Err(Error::Config(format!("{n} examples cannot fill {bins} bins")));
    }
    if variances.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite variance".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| variances[a].total_cmp(&variances[b]));

    let groups: Vec<&[usize]> = match binning {
        Binning::EqualCount => {
            let (base, extra) = (n / bins, n % bins);
            let mut start = 0;
            (0..bins)
                .map(|b| {
                    let len = base + usize::from(b < extra);
                    let g = &order[start..start + len];
                    start += len;
                    g
                })
                .collect()
        }
        Binning::EqualWidth => {
            let lo = variances[order[0]];
            let hi = variances[order[n - 1]];
            let width = (hi - lo) / bins as f64;
            let slot = |v: f64| {
                if width > 0.0 {
                    (((v - lo) / width) as usize).min(bins - 1)
                } else {
                    0
                }
            };
            let mut start = 0;
            (0..bins)
                .map(|b| {
                    let len = order[start..].iter().take_while(|&&i| slot(variances[i]) == b).count();
                    let g = &order[start..start + len];
                    start += len;
                    g
                })
                .collect()
        }
    };

    let bins = groups
        .into_iter()
        .enumerate()
        .map(|(index, g)| {
            let mean_abs_error = (!g.is_empty()).then(|| {
                g.iter().map(|&i| (predictions[i] - labels[i]).abs()).sum::<f64>() / g.len() as f64
            });
            Bin {
                index,
                variance_min: g.first().map_or(f64::NAN, |&i| variances[i]),
                variance_max: g.last().map_or(f64::NAN, |&i| variances[i]),
                mean_abs_error,
                count: g.len(),
            }
        })
        .map(|mut b| {
            if b.count == 0 {
                b.variance_min = 0.0;
                b.variance_max = 0.0;
            }
            b
        })
        .collect();
    Ok(BinReport { bins })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn to_jsonl(&self, label: &str) -> String {
        self.counts
            .iter()
            .enumerate()
            .map(|(i, c)| {
                serde_json::json!({
                    "series": label,
                    "bin": i,
                    "lo": self.edges[i],
                    "hi": self.edges[i + 1],
                    "count": c,
                })
                .to_string()
                    + "\n"
            })
            .collect()
    }
}

/// Fixed-width histogram over `[lo, hi]`; values outside the range land in
/// the edge bins.
pub fn histogram(values: &[f64], bin_count: usize, (lo, hi): (f64, f64)) -> Result<Histogram> {
    if bin_count < 1 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::Config(format!("invalid histogram range [{lo}, {hi}]")));
    }
    let width = (hi - lo) / bin_count as f64;
    let edges = (0..=bin_count).map(|i| lo + width * i as f64).collect();
    let mut counts = vec![0; bin_count];
    for &v in values {
        let slot = if v.is_nan() || v <= lo {
            0
        } else {
            (((v - lo) / width) as usize).min(bin_count - 1)
        };
        counts[slot] += 1;
    }
    Ok(Histogram { edges, counts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn counts(r: &BinReport) -> Vec<usize> {
        r.bins.iter().map(|b| b.count).collect()
    }

    #[test]
    fn remainder_goes_to_first_bins() {
        let v: Vec<f64> = (0..25).map(f64::from).collect();
        let r = bin_variance_error(&v, &v, &v, 10, Binning::EqualCount).unwrap();
        assert_eq!(counts(&r), vec![3, 3, 3, 3, 3, 2, 2, 2, 2, 2]);
    }

    #[test]
    fn error_growing_with_variance_gives_increasing_bins() {
        let var: Vec<f64> = (0..20).rev().map(|i| i as f64 * 0.1).collect();
        let preds: Vec<f64> = var.iter().map(|v| 0.5 + v).collect();
        let labels = vec![0.5; 20];
        let r = bin_variance_error(&preds, &labels, &var, 10, Binning::EqualCount).unwrap();
        let maes: Vec<f64> = r.bins.iter().map(|b| b.mean_abs_error.unwrap()).collect();
        assert!(maes.windows(2).all(|w| w[0] < w[1]), "{maes:?}");
        assert!(r.bins.windows(2).all(|w| w[0].variance_max <= w[1].variance_min));
    }

    #[test]
    fn ties_keep_file_order() {
        let preds: Vec<f64> = (0..6).map(f64::from).collect();
        let r = bin_variance_error(&preds, &[0.0; 6], &[1.0; 6], 3, Binning::EqualCount).unwrap();
        let maes: Vec<f64> = r.bins.iter().map(|b| b.mean_abs_error.unwrap()).collect();
        assert_eq!(maes, vec![0.5, 2.5, 4.5]);
    }

    #[test]
    fn binning_preconditions() {
        let v = [0.0; 5];
        assert_eq!(bin_variance_error(&v, &v, &v, 10, Binning::EqualCount).unwrap_err().category(), "config");
        assert_eq!(bin_variance_error(&v, &v, &v, 1, Binning::EqualCount).unwrap_err().category(), "config");
        assert_eq!(bin_variance_error(&v, &v[..4], &v, 2, Binning::EqualCount).unwrap_err().category(), "contract");
    }

    #[test]
    fn equal_width_bins_split_the_range() {
        let var = [0.0, 0.1, 0.2, 0.9, 1.0];
        let r = bin_variance_error(&var, &[0.0; 5], &var, 2, Binning::EqualWidth).unwrap();
        assert_eq!(counts(&r), vec![3, 2]);
        let r = bin_variance_error(&var, &[0.0; 5], &var, 4, Binning::EqualWidth).unwrap();
        assert_eq!(counts(&r), vec![3, 0, 0, 2]);
        assert_eq!(r.bins[1].mean_abs_error, None);
        assert!(r.to_csv().lines().nth(2).unwrap().contains(",,"));
    }

    #[test]
    fn histogram_examples() {
        let h = histogram(&[0.0, 1.0], 2, (0.0, 1.0)).unwrap();
        assert_eq!(h.counts, vec![1, 1]);
        assert_eq!(h.edges, vec![0.0, 0.5, 1.0]);
        assert_eq!(histogram(&[], 3, (0.0, 1.0)).unwrap().counts, vec![0, 0, 0]);
        assert_eq!(histogram(&[-5.0, 7.0], 4, (0.0, 1.0)).unwrap().counts, vec![1, 0, 0, 1]);
        assert!(histogram(&[], 0, (0.0, 1.0)).is_err());
        assert!(histogram(&[], 2, (1.0, 1.0)).is_err());
        assert_eq!(h.to_jsonl("gold").lines().count(), 2);
    }

    proptest! {
        #[test]
        fn bin_sizes_differ_by_at_most_one(
            var in prop::collection::vec(0.0f64..1.0, 10..200),
            bins in 2usize..10,
        ) {
            let zeros = vec![0.0; var.len()];
            let r = bin_variance_error(&zeros, &zeros, &var, bins, Binning::EqualCount).unwrap();
            let c = counts(&r);
            prop_assert_eq!(c.iter().sum::<usize>(), var.len());
            prop_assert!(c.iter().max().unwrap() - c.iter().min().unwrap() <= 1);
            let w = bin_variance_error(&zeros, &zeros, &var, bins, Binning::EqualWidth).unwrap();
            prop_assert_eq!(counts(&w).iter().sum::<usize>(), var.len());
        }

        #[test]
        fn histogram_conserves_count(
            values in prop::collection::vec(-2.0f64..3.0, 0..300),
            bins in 1usize..20,
        ) {
            let h = histogram(&values, bins, (0.0, 1.0)).unwrap();
            prop_assert_eq!(h.counts.iter().sum::<usize>(), values.len());
        }
    }
}
