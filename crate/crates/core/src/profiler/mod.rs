//! Error sweeps, exponent-width exploration and value distributions.

mod grid;
mod histogram;
mod sweep;

pub use grid::{config_grid_search, empirical_exponent_bits, write_grid_csv, GridEntry};
pub use histogram::{distribution_histogram, Distribution, Histogram, HistogramOptions};
pub use sweep::{
    approx_discrepancy, error_reduction, interval_reductions, sweep_error, DiscrepancyStats, ErrorReport, IntervalStats, ReductionStats,
    Spacing, SweepSpec,
};
