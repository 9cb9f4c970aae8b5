use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub stage: String,
    /// `counts.len() + 1` ascending edges; the last bin is closed.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    fn build(stage: impl Into<String>, values: &[f64], bins: usize) -> Self {
        let (lo, hi) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let (lo, hi) = match (lo.is_finite(), lo < hi) {
            (false, _) => (0.0, 1.0),
            (true, true) => (lo, hi),
            (true, false) => (lo - 0.5, lo + 0.5),
        };
        let width = (hi - lo) / bins as f64;
        let mut edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
        edges[bins] = hi;
        let mut counts = vec![0u64; bins];
        for &v in values {
            let i = (((v - lo) / width) as usize).min(bins - 1);
            counts[i] += 1;
        }
        Self { stage: stage.into(), edges, counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Smallest and largest edge of an occupied bin.
    pub fn occupied_span(&self) -> Option<(f64, f64)> {
        let first = self.counts.iter().position(|&c| c > 0)?;
        let last = self.counts.iter().rposition(|&c| c > 0)?;
        Some((self.edges[first], self.edges[last + 1]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramOptions {
    pub stages: usize,
    pub bins: usize,
    /// Magnitude separating the "small" and "large" views.
    pub threshold: f64,
}

impl Default for HistogramOptions {
    fn default() -> Self {
        Self { stages: 4, bins: 50, threshold: 1.0 }
    }
}

/// Value distribution of a recorded field trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Distribution {
    pub whole: Histogram,
    pub stages: Vec<Histogram>,
    pub small: Histogram,
    pub large: Histogram,
    /// Value range per stage, `(min, max)`.
    pub stage_ranges: Vec<(f64, f64)>,
}

impl Distribution {
    pub fn all(&self) -> impl Iterator<Item = &Histogram> {
        std::iter::once(&self.whole).chain(&self.stages).chain([&self.small, &self.large])
    }

    /// CSV columns: `stage,bin_lo,bin_hi,count`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["stage", "bin_lo", "bin_hi", "count"])?;
        for h in self.all() {
            for (i, c) in h.counts.iter().enumerate() {
                w.write_record([h.stage.clone(), h.edges[i].to_string(), h.edges[i + 1].to_string(), c.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Splits `(step, value)` samples into equal step-index stages and bins
/// each stage on its own range.
pub fn distribution_histogram(trace: &[(u64, f64)], opts: HistogramOptions) -> Result<Distribution> {
    if trace.is_empty() {
        return Err(Error::Empty("trace"));
    }
    if opts.stages == 0 || opts.bins == 0 {
        return Err(Error::InvalidSweep("stages and bins must be at least 1".into()));
    }
    let values: Vec<f64> = trace.iter().map(|&(_, v)| v).collect();
    let first = trace.iter().map(|&(s, _)| s).min().unwrap_or(0);
    let last = trace.iter().map(|&(s, _)| s).max().unwrap_or(0);
    let span = (last - first + 1) as u128;
    let mut per_stage = vec![Vec::new(); opts.stages];
    for &(s, v) in trace {
        let i = ((s - first) as u128 * opts.stages as u128 / span) as usize;
        per_stage[i].push(v);
    }
    let stage_ranges = per_stage
        .iter()
        .map(|vs| vs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v))))
        .collect();
    let stages = per_stage
        .iter()
        .enumerate()
        .map(|(i, vs)| Histogram::build(format!("stage{}", i + 1), vs, opts.bins))
        .collect();
    let (small, large): (Vec<f64>, Vec<f64>) = values.iter().partition(|v| v.abs() < opts.threshold);
    Ok(Distribution {
        whole: Histogram::build("all", &values, opts.bins),
        stages,
        small: Histogram::build("small", &small, opts.bins),
        large: Histogram::build("large", &large, opts.bins),
        stage_ranges,
    })
}
