use std::io::Write;

use serde::Serialize;

use crate::backend::Backend;
use crate::error::{Error, Result};
use crate::fixedformat::FixedFormat;
use crate::par::{map_indexed, Execution};

use super::sweep::{sweep_error, Spacing, SweepSpec};

/// Exponent width suggested by the closed-form rule, using `log10`:
/// `ceil(log10(v^2)) + 1` with `v = v_max` when `v_max >= 1` and
/// `v = 1 / v_max` otherwise.
pub fn empirical_exponent_bits(v_max: f64) -> Result<u32> {
    if !(v_max > 0.0 && v_max.is_finite()) {
        return Err(Error::InvalidSweep(format!("v_max must be positive and finite, got {v_max}")));
    }
    let v = if v_max >= 1.0 { v_max } else { 1.0 / v_max };
    Ok((v * v).log10().ceil().max(0.0) as u32 + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridEntry {
    pub format: FixedFormat,
    pub mean_err_pct: f64,
}

/// Every representable `ExMy` with `1 + x + y == total_bits`, ranked by mean
/// error on pairs drawn from the single interval `(lo, hi)`. Ties keep the
/// narrower exponent first.
pub fn config_grid_search(
    lo: f64,
    hi: f64,
    total_bits: u32,
    samples: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<GridEntry>> {
    if total_bits < 6 {
        return Err(Error::InvalidSweep(format!("total_bits must be at least 6, got {total_bits}")));
    }
    let spec = SweepSpec::new(lo, hi, 1, samples, seed)?.with_spacing(Spacing::Linear);
    let formats: Vec<FixedFormat> = (2..total_bits)
        .filter_map(|e| FixedFormat::new(e, total_bits - 1 - e).ok())
        .collect();
    let errs = map_indexed(formats.len(), exec, |i| {
        sweep_error(&spec, Backend::Fixed(formats[i]), Execution::Sequential).map(|r| r.mean_err_pct)
    });
    let mut entries = formats
        .into_iter()
        .zip(errs)
        .map(|(format, e)| e.map(|mean_err_pct| GridEntry { format, mean_err_pct }))
        .collect::<Result<Vec<_>>>()?;
    entries.sort_by(|a, b| a.mean_err_pct.total_cmp(&b.mean_err_pct).then(a.format.exponent_bits().cmp(&b.format.exponent_bits())));
    Ok(entries)
}

/// CSV columns: `e,m,mean_err_pct`.
pub fn write_grid_csv<W: Write>(entries: &[GridEntry], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["e", "m", "mean_err_pct"])?;
    for g in entries {
        w.write_record([g.format.exponent_bits().to_string(), g.format.mantissa_bits().to_string(), g.mean_err_pct.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
