//! Correlation metrics, variance–error binning, histograms and data-size
//! sweeps.

mod bins;
mod metrics;
mod sweep;

pub use bins::{bin_variance_error, histogram, Bin, BinReport, Binning, Histogram};
pub use metrics::{average_ranks, evaluate, mean_std, pearson, spearman, Correlation, EvalReport};
pub use sweep::{sweep, SweepRow, SweepTable};
