//! Heat and shallow water case studies with a pluggable multiplier.

mod heat;
mod swe;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::adjuster::{AdjustKind, AdjustmentEvent};
use crate::backend::Multiplier;
use crate::error::{Error, Result};

pub use heat::{heat1d_init, heat1d_run, heat1d_step, HeatConfig, HeatInit, Real, Storage, DEFAULT_AMPLITUDE, DEFAULT_WIDTH};
pub use swe::{swe2d_init, swe2d_run, swe2d_step, BumpInit, FluxUnits, SweConfig, SweState};

#[derive(Debug, Clone, PartialEq)]
pub enum Fields {
    Line(Vec<f64>),
    Grid { nx: usize, ny: usize, h: Vec<f64>, hu: Vec<f64>, hv: Vec<f64> },
}

impl Fields {
    /// The compared field: `u` for the heat equation, `h` for shallow water.
    pub fn primary(&self) -> &[f64] {
        match self {
            Fields::Line(u) => u,
            Fields::Grid { h, .. } => h,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.primary().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn shape(&self) -> (usize, usize) {
        match self {
            Fields::Line(u) => (u.len(), 1),
            Fields::Grid { nx, ny, .. } => (*nx, *ny),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: u64,
    pub fields: Fields,
}

/// Result of one simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimRun {
    pub equation: String,
    pub backend: String,
    pub steps: u64,
    pub snapshots: Vec<Snapshot>,
    pub events: Vec<AdjustmentEvent>,
    pub mult_count: u64,
    pub overflow_count: u64,
    pub underflow_count: u64,
}

impl SimRun {
    fn from_multiplier(equation: &str, steps: u64, snapshots: Vec<Snapshot>, mult: &Multiplier) -> Self {
        Self::from_multipliers(equation, steps, snapshots, &[mult])
    }

    fn from_multipliers(equation: &str, steps: u64, snapshots: Vec<Snapshot>, mults: &[&Multiplier]) -> Self {
        let mut events: Vec<AdjustmentEvent> = mults.iter().flat_map(|m| m.events().iter().copied()).collect();
        events.sort_by_key(|e| e.step_index);
        Self {
            equation: equation.to_string(),
            backend: mults[0].backend().to_string(),
            steps,
            snapshots,
            events,
            mult_count: mults.iter().map(|m| m.stats().count).sum(),
            overflow_count: mults.iter().map(|m| m.stats().overflows).sum(),
            underflow_count: mults.iter().map(|m| m.stats().underflows).sum(),
        }
    }

    pub fn final_fields(&self) -> Option<&Fields> {
        self.snapshots.last().map(|s| &s.fields)
    }

    pub fn count_events(&self, kind: AdjustKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    /// Adjustment events per multiplication.
    pub fn event_rate(&self) -> f64 {
        self.events.len() as f64 / self.mult_count.max(1) as f64
    }

    /// Every snapshot value tagged with its step.
    pub fn trace(&self) -> Vec<(u64, f64)> {
        self.snapshots.iter().flat_map(|s| s.fields.primary().iter().map(move |&v| (s.step, v))).collect()
    }

    pub fn write_snapshots_csv<W: Write>(&self, out: W) -> Result<()> {
        write_snapshots_csv(&self.snapshots, out)
    }
}

/// Requested snapshot steps, sorted and deduplicated, always ending with the
/// final step.
fn normalize_snapshots(requested: &[u64], steps: u64) -> Vec<u64> {
    let mut v: Vec<u64> = requested.iter().copied().filter(|&s| s <= steps).chain([steps]).collect();
    v.sort_unstable();
    v.dedup();
    v
}

/// Line fields as `step,index,value`; grids as `step,i,j,h,hu,hv`.
pub fn write_snapshots_csv<W: Write>(snapshots: &[Snapshot], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    match snapshots.first().map(|s| &s.fields) {
        Some(Fields::Grid { .. }) => w.write_record(["step", "i", "j", "h", "hu", "hv"])?,
        _ => w.write_record(["step", "index", "value"])?,
    }
    for s in snapshots {
        match &s.fields {
            Fields::Line(u) => {
                for (i, v) in u.iter().enumerate() {
                    w.write_record([s.step.to_string(), i.to_string(), v.to_string()])?;
                }
            }
            Fields::Grid { nx, ny, h, hu, hv } => {
                for j in 0..*ny {
                    for i in 0..*nx {
                        let k = j * nx + i;
                        w.write_record([
                            s.step.to_string(),
                            i.to_string(),
                            j.to_string(),
                            h[k].to_string(),
                            hu[k].to_string(),
                            hv[k].to_string(),
                        ])?;
                    }
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads what [`write_snapshots_csv`] wrote.
pub fn read_snapshots_csv<R: Read>(input: R) -> Result<Vec<Snapshot>> {
    let mut r = csv::Reader::from_reader(input);
    let grid = match r.headers()?.iter().collect::<Vec<_>>().as_slice() {
        ["step", "index", "value"] => false,
        ["step", "i", "j", "h", "hu", "hv"] => true,
        other => return Err(Error::MalformedValue(format!("unknown snapshot header {other:?}"))),
    };
    let bad = |what: &str| Error::MalformedValue(format!("snapshot row: bad {what}"));
    let mut rows: Vec<(u64, usize, usize, [f64; 3])> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |i: usize| rec.get(i).ok_or_else(|| bad("width"));
        let step: u64 = num(0)?.parse().map_err(|_| bad("step"))?;
        let i: usize = num(1)?.parse().map_err(|_| bad("index"))?;
        if grid {
            let j: usize = num(2)?.parse().map_err(|_| bad("index"))?;
            let mut v = [0.0; 3];
            for (c, slot) in v.iter_mut().enumerate() {
                *slot = num(3 + c)?.parse().map_err(|_| bad("value"))?;
            }
            rows.push((step, i, j, v));
        } else {
            rows.push((step, i, 0, [num(2)?.parse().map_err(|_| bad("value"))?, 0.0, 0.0]));
        }
    }
    let mut out: Vec<Snapshot> = Vec::new();
    let mut start = 0;
    while start < rows.len() {
        let step = rows[start].0;
        let end = start + rows[start..].iter().take_while(|r| r.0 == step).count();
        let chunk = &rows[start..end];
        let nx = chunk.iter().map(|r| r.1).max().unwrap_or(0) + 1;
        let ny = chunk.iter().map(|r| r.2).max().unwrap_or(0) + 1;
        if chunk.len() != nx * ny {
            return Err(bad("grid coverage"));
        }
        let fields = if grid {
            let (mut h, mut hu, mut hv) = (vec![0.0; nx * ny], vec![0.0; nx * ny], vec![0.0; nx * ny]);
            for &(_, i, j, v) in chunk {
                let k = j * nx + i;
                (h[k], hu[k], hv[k]) = (v[0], v[1], v[2]);
            }
            Fields::Grid { nx, ny, h, hu, hv }
        } else {
            let mut u = vec![0.0; nx];
            for &(_, i, _, v) in chunk {
                u[i] = v[0];
            }
            Fields::Line(u)
        };
        out.push(Snapshot { step, fields });
        start = end;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SnapshotMetrics {
    pub step: u64,
    pub rmse: f64,
    /// `max |a - b| / max |b|`.
    pub linf_rel: f64,
}

/// Field differences of `a` against reference `b` over matching steps.
pub fn compare_snapshots(a: &[Snapshot], b: &[Snapshot]) -> Result<Vec<SnapshotMetrics>> {
    let mut out = Vec::new();
    for sa in a {
        let Some(sb) = b.iter().find(|s| s.step == sa.step) else { continue };
        if sa.fields.shape() != sb.fields.shape() {
            return Err(Error::ShapeMismatch(format!(
                "step {}: {:?} vs {:?}",
                sa.step,
                sa.fields.shape(),
                sb.fields.shape()
            )));
        }
        let (x, y) = (sa.fields.primary(), sb.fields.primary());
        let sq: f64 = x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum();
        let diff = x.iter().zip(y).fold(0.0, |m: f64, (p, q)| m.max((p - q).abs()));
        let scale = sb.fields.max_abs();
        out.push(SnapshotMetrics {
            step: sa.step,
            rmse: (sq / x.len() as f64).sqrt(),
            linf_rel: if scale > 0.0 { diff / scale } else { diff },
        });
    }
    if out.is_empty() {
        return Err(Error::ShapeMismatch("no common snapshot steps".into()));
    }
    Ok(out)
}

/// CSV columns: `step,rmse,linf_rel`.
pub fn write_metrics_csv<W: Write>(metrics: &[SnapshotMetrics], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "rmse", "linf_rel"])?;
    for m in metrics {
        w.write_record([m.step.to_string(), m.rmse.to_string(), m.linf_rel.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub per_snapshot: Vec<SnapshotMetrics>,
    pub final_rmse: f64,
    pub final_linf_rel: f64,
    pub overflow_events: usize,
    pub underflow_events: usize,
    pub redundancy_events: usize,
}

/// Compares run `a` against reference run `b`; adjustment counts are `a`'s.
pub fn compare_runs(a: &SimRun, b: &SimRun) -> Result<Comparison> {
    if a.steps != b.steps || a.equation != b.equation {
        return Err(Error::ShapeMismatch(format!("{} x {} vs {} x {}", a.equation, a.steps, b.equation, b.steps)));
    }
    let per_snapshot = compare_snapshots(&a.snapshots, &b.snapshots)?;
    let last = *per_snapshot.last().expect("non-empty");
    Ok(Comparison {
        per_snapshot,
        final_rmse: last.rmse,
        final_linf_rel: last.linf_rel,
        overflow_events: a.count_events(AdjustKind::OverflowWiden),
        underflow_events: a.count_events(AdjustKind::UnderflowWiden),
        redundancy_events: a.count_events(AdjustKind::RedundancyNarrow),
    })
}

/// A simulation as read from JSON, selected by the `equation` key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "equation", rename_all = "lowercase")]
pub enum SimConfig {
    Heat(HeatConfig),
    Swe(SweConfig),
}

impl SimConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SimConfig = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SimConfig::Heat(c) => c.validate(),
            SimConfig::Swe(c) => swe2d_init(c).map(|_| ()),
        }
    }

    pub fn run(&self) -> Result<SimRun> {
        match self {
            SimConfig::Heat(c) => heat1d_run(c),
            SimConfig::Swe(c) => swe2d_run(c),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::Backend;

    fn heat_run() -> SimRun {
        let cfg = HeatConfig { n: 16, steps: 20, snapshots: vec![0, 5, 5, 10], ..HeatConfig::new(HeatInit::Sin, Backend::Binary32) };
        heat1d_run(&cfg).unwrap()
    }

    #[test]
    fn snapshot_steps_normalized() {
        assert_eq!(normalize_snapshots(&[7, 0, 7, 3], 10), vec![0, 3, 7, 10]);
        let run = heat_run();
        assert_eq!(run.snapshots.iter().map(|s| s.step).collect::<Vec<_>>(), vec![0, 5, 10, 20]);
    }

    #[test]
    fn self_comparison_is_zero() {
        let run = heat_run();
        let c = compare_runs(&run, &run).unwrap();
        assert!(c.per_snapshot.iter().all(|m| m.rmse == 0.0 && m.linf_rel == 0.0));
        assert_eq!(c.per_snapshot.len(), 4);
        let mut buf = Vec::new();
        write_metrics_csv(&c.per_snapshot, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().next(), Some("step,rmse,linf_rel"));
    }

    #[test]
    fn shape_mismatch() {
        let a = heat_run();
        let mut b = a.clone();
        b.snapshots[1].fields = Fields::Line(vec![0.0; 3]);
        assert!(matches!(compare_runs(&a, &b), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn line_csv_roundtrip() {
        let run = heat_run();
        let mut buf = Vec::new();
        run.write_snapshots_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"step,index,value\n"));
        assert_eq!(read_snapshots_csv(buf.as_slice()).unwrap(), run.snapshots);
    }

    #[test]
    fn grid_csv_roundtrip() {
        let cfg = SweConfig { nx: 5, ny: 4, steps: 3, snapshots: vec![1], ..SweConfig::new(Backend::Binary64) };
        let run = swe2d_run(&cfg).unwrap();
        let mut buf = Vec::new();
        run.write_snapshots_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"step,i,j,h,hu,hv\n"));
        assert_eq!(read_snapshots_csv(buf.as_slice()).unwrap(), run.snapshots);
        assert!(read_snapshots_csv(&b"a,b\n1,2\n"[..]).is_err());
    }

    #[test]
    fn json_config() {
        let heat = SimConfig::from_json(
            r#"{"equation":"heat","n":32,"steps":10,"r":0.2,"init":"exp","backend":"<3,9,3>+adaptive","snapshots":[5],"seed":3}"#,
        )
        .unwrap();
        let SimConfig::Heat(h) = &heat else { panic!("expected heat") };
        assert_eq!((h.n, h.steps, h.r, h.seed), (32, 10, 0.2, 3));
        assert!(h.backend.is_stateful());
        assert_eq!(heat.run().unwrap().snapshots.len(), 2);

        let swe = SimConfig::from_json(
            r#"{"equation":"swe","nx":8,"ny":6,"steps":2,"dt":0.5,"dx":100,"dy":100,"g":9.81,"init":{"depth":10,"amplitude":1},"backend":"E5M10"}"#,
        )
        .unwrap();
        let SimConfig::Swe(s) = &swe else { panic!("expected swe") };
        assert_eq!(s.init.sigma, 5.0);
        assert!(SimConfig::from_json(r#"{"equation":"heat","init":"exp","backend":"binary32","r":0.9}"#).is_err());
        assert!(SimConfig::from_json(r#"{"equation":"wave"}"#).is_err());
        assert!(matches!(SimConfig::from_json(r#"{"equation":"swe","dt":50,"backend":"binary64"}"#), Err(Error::Cfl(_))));
        assert!(SimConfig::from_json(r#"{"equation":"heat","init":"exp","backend":"binary32","bogus":1}"#).is_err());
    }
}
