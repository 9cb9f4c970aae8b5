use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backend::{Backend, Multiplier};
use crate::error::{Error, Result};
use crate::flexformat::{encode, FormatDescriptor};
use crate::mul::{multiply, MulMode};
use crate::par::{map_indexed, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    /// Interval edges equally spaced in `log10`.
    #[default]
    Log,
    Linear,
}

/// Operand range, split into intervals of independently seeded samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub lo: f64,
    pub hi: f64,
    pub intervals: usize,
    pub samples_per_interval: usize,
    pub seed: u64,
    #[serde(default)]
    pub spacing: Spacing,
}

impl SweepSpec {
    pub fn new(lo: f64, hi: f64, intervals: usize, samples_per_interval: usize, seed: u64) -> Result<Self> {
        let spec = Self { lo, hi, intervals, samples_per_interval, seed, spacing: Spacing::Log };
        spec.validate()?;
        Ok(spec)
    }

    /// 1000 intervals x 100 pairs over `(1e-4, 1e4)`.
    pub fn desk_scale(seed: u64) -> Self {
        Self { lo: 1e-4, hi: 1e4, intervals: 1000, samples_per_interval: 100, seed, spacing: Spacing::Log }
    }

    /// 10 000 intervals x 1000 pairs over `(1e-4, 1e4)`.
    pub fn full_scale(seed: u64) -> Self {
        Self { intervals: 10_000, samples_per_interval: 1000, ..Self::desk_scale(seed) }
    }

    pub fn with_spacing(self, spacing: Spacing) -> Self {
        Self { spacing, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo > 0.0 && self.lo < self.hi && self.hi.is_finite()) {
            return Err(Error::InvalidSweep(format!("need 0 < lo < hi, got ({}, {})", self.lo, self.hi)));
        }
        if self.intervals == 0 || self.samples_per_interval == 0 {
            return Err(Error::InvalidSweep("intervals and samples must be at least 1".into()));
        }
        Ok(())
    }

    pub fn interval_bounds(&self, i: usize) -> (f64, f64) {
        let n = self.intervals as f64;
        let edge = |j: usize| match self.spacing {
            Spacing::Linear => self.lo + (self.hi - self.lo) * j as f64 / n,
            Spacing::Log => {
                let (a, b) = (self.lo.log10(), self.hi.log10());
                10f64.powf(a + (b - a) * j as f64 / n)
            }
        };
        let lo = if i == 0 { self.lo } else { edge(i) };
        let hi = if i + 1 == self.intervals { self.hi } else { edge(i + 1) };
        (lo, hi)
    }

    /// Generator for interval `i`: one ChaCha stream per interval, so results
    /// do not depend on the order intervals are processed in.
    fn interval_rng(&self, i: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(i as u64);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntervalStats {
    pub lo: f64,
    pub hi: f64,
    pub mean_err_pct: f64,
    pub max_err_pct: f64,
    pub overflow_count: u64,
    pub adjust_events: u64,
}

/// Errors of one backend against binary32 products over a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    pub spec: SweepSpec,
    pub backend: String,
    pub intervals: Vec<IntervalStats>,
    pub mean_err_pct: f64,
    pub max_err_pct: f64,
}

impl ErrorReport {
    pub fn overflow_intervals(&self) -> usize {
        self.intervals.iter().filter(|s| s.overflow_count > 0).count()
    }

    pub fn total_overflows(&self) -> u64 {
        self.intervals.iter().map(|s| s.overflow_count).sum()
    }

    pub fn total_events(&self) -> u64 {
        self.intervals.iter().map(|s| s.adjust_events).sum()
    }

    /// CSV columns: `interval_lo,interval_hi,mean_err_pct,max_err_pct,overflow_count`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["interval_lo", "interval_hi", "mean_err_pct", "max_err_pct", "overflow_count"])?;
        for s in &self.intervals {
            w.write_record([
                s.lo.to_string(),
                s.hi.to_string(),
                s.mean_err_pct.to_string(),
                s.max_err_pct.to_string(),
                s.overflow_count.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Relative error of `value` against the binary32 `reference`, in percent.
/// Overflowed samples are charged 100%.
fn error_pct(value: f64, reference: f64, overflow: bool) -> f64 {
    if overflow || !value.is_finite() {
        100.0
    } else {
        ((value - reference) / reference).abs() * 100.0
    }
}

/// Draws operand pairs uniformly inside each interval (both operands from the
/// same interval) and measures the backend against the binary32 product.
///
/// Every interval gets a fresh backend instance; an adaptive R2F2 backend
/// starts each interval at the descriptor's initial `k`.
pub fn sweep_error(spec: &SweepSpec, backend: Backend, exec: Execution) -> Result<ErrorReport> {
    spec.validate()?;
    let intervals = map_indexed(spec.intervals, exec, |i| {
        let (lo, hi) = spec.interval_bounds(i);
        let mut rng = spec.interval_rng(i);
        let mut mult = Multiplier::new(backend);
        let (mut sum, mut max, mut overflow_count) = (0.0, 0.0f64, 0u64);
        for _ in 0..spec.samples_per_interval {
            let a = rng.random_range(lo..hi) as f32;
            let b = rng.random_range(lo..hi) as f32;
            let reference = (a * b) as f64;
            let p = mult.mul(a as f64, b as f64);
            let err = error_pct(p.value, reference, p.overflow);
            sum += err;
            max = max.max(err);
            overflow_count += p.overflow as u64;
        }
        IntervalStats {
            lo,
            hi,
            mean_err_pct: sum / spec.samples_per_interval as f64,
            max_err_pct: max,
            overflow_count,
            adjust_events: mult.events().len() as u64,
        }
    });
    let mean_err_pct = intervals.iter().map(|s| s.mean_err_pct).sum::<f64>() / intervals.len() as f64;
    let max_err_pct = intervals.iter().map(|s| s.max_err_pct).fold(0.0, f64::max);
    Ok(ErrorReport { spec: *spec, backend: backend.to_string(), intervals, mean_err_pct, max_err_pct })
}

/// Aggregate per-interval relative error reduction, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReductionStats {
    pub mean_pct: f64,
    pub max_pct: f64,
    pub min_pct: f64,
    pub intervals_used: usize,
    /// Intervals where the baseline error was zero (reduction undefined).
    pub intervals_excluded: usize,
}

/// Per-interval `(baseline - candidate) / baseline` in percent; `None` where
/// the baseline error is zero.
pub fn interval_reductions(candidate: &ErrorReport, baseline: &ErrorReport) -> Result<Vec<Option<f64>>> {
    if candidate.spec != baseline.spec || candidate.intervals.len() != baseline.intervals.len() {
        return Err(Error::SweepMismatch);
    }
    Ok(candidate
        .intervals
        .iter()
        .zip(&baseline.intervals)
        .map(|(c, f)| (f.mean_err_pct > 0.0).then(|| (f.mean_err_pct - c.mean_err_pct) / f.mean_err_pct * 100.0))
        .collect())
}

/// Aggregates [`interval_reductions`] over the intervals where it is defined.
pub fn error_reduction(candidate: &ErrorReport, baseline: &ErrorReport) -> Result<ReductionStats> {
    let all = interval_reductions(candidate, baseline)?;
    let reductions: Vec<f64> = all.iter().flatten().copied().collect();
    let used = reductions.len();
    if used == 0 {
        return Ok(ReductionStats { mean_pct: 0.0, max_pct: 0.0, min_pct: 0.0, intervals_used: 0, intervals_excluded: all.len() });
    }
    Ok(ReductionStats {
        mean_pct: reductions.iter().sum::<f64>() / used as f64,
        max_pct: reductions.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        min_pct: reductions.iter().copied().fold(f64::INFINITY, f64::min),
        intervals_used: used,
        intervals_excluded: all.len() - used,
    })
}

/// How often the truncated schedule disagrees with the exact product.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiscrepancyStats {
    pub pairs: u64,
    /// Pairs for which no split of the descriptor holds operands and product.
    pub skipped: u64,
    pub differing: u64,
    pub above_threshold: u64,
    pub max_rel: f64,
}

impl DiscrepancyStats {
    pub fn fraction_above(&self) -> f64 {
        self.above_threshold as f64 / (self.pairs - self.skipped).max(1) as f64
    }
}

/// Compares approximate and exact products on log-uniform operand pairs in
/// `(lo, hi)`. Each pair is evaluated at the smallest `k` where both operands
/// and the exact product are in range, which is where an adaptive unit
/// settles for it.
pub fn approx_discrepancy(
    base: FormatDescriptor,
    lo: f64,
    hi: f64,
    pairs: u64,
    seed: u64,
    threshold_rel: f64,
) -> Result<DiscrepancyStats> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a_log, b_log) = (lo.log10(), hi.log10());
    let mut stats = DiscrepancyStats { pairs, skipped: 0, differing: 0, above_threshold: 0, max_rel: 0.0 };
    'pairs: for _ in 0..pairs {
        let x = 10f64.powf(rng.random_range(a_log..b_log)) as f32 as f64;
        let y = 10f64.powf(rng.random_range(a_log..b_log)) as f32 as f64;
        for k in 0..=base.fx() {
            let d = base.with_k(k)?;
            let (a, fa) = encode(x, d);
            let (b, fb) = encode(y, d);
            if fa.out_of_range() || fb.out_of_range() {
                continue;
            }
            let exact = multiply(&a, &b, MulMode::Exact)?;
            if exact.overflow || exact.underflow {
                continue;
            }
            let approx = multiply(&a, &b, MulMode::Approx)?;
            let (e, p) = (exact.value.to_f64(), approx.value.to_f64());
            let rel = if approx.overflow || approx.underflow { 1.0 } else { ((p - e) / e).abs() };
            stats.differing += (rel > 0.0) as u64;
            stats.above_threshold += (rel > threshold_rel) as u64;
            stats.max_rel = stats.max_rel.max(rel);
            continue 'pairs;
        }
        stats.skipped += 1;
    }
    Ok(stats)
}
