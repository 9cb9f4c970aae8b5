use std::f64::consts::PI;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

use crate::backend::{Backend, Multiplier};
use crate::error::{Error, Result};

use super::{normalize_snapshots, Fields, SimRun, Snapshot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeatInit {
    Sin,
    Exp,
}

/// Arithmetic used for the additions and subtractions of the stencil.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Storage {
    #[default]
    Binary32,
    Binary64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatConfig {
    #[serde(default = "HeatConfig::default_n")]
    pub n: usize,
    #[serde(default = "HeatConfig::default_steps")]
    pub steps: u64,
    #[serde(default = "HeatConfig::default_r")]
    pub r: f64,
    pub init: HeatInit,
    #[serde(default = "HeatConfig::default_amplitude")]
    pub amplitude: f64,
    /// Coefficient `c` of the exponential profile `exp(-c (x - 1/2)^2)`.
    #[serde(default = "HeatConfig::default_width")]
    pub width: f64,
    pub backend: Backend,
    #[serde(default)]
    pub storage: Storage,
    #[serde(default)]
    pub snapshots: Vec<u64>,
    #[serde(default)]
    pub seed: u64,
}

impl HeatConfig {
    fn default_n() -> usize {
        512
    }
    fn default_steps() -> u64 {
        2000
    }
    fn default_r() -> f64 {
        0.25
    }
    fn default_amplitude() -> f64 {
        DEFAULT_AMPLITUDE
    }
    fn default_width() -> f64 {
        DEFAULT_WIDTH
    }

    pub fn new(init: HeatInit, backend: Backend) -> Self {
        Self {
            n: Self::default_n(),
            steps: Self::default_steps(),
            r: Self::default_r(),
            init,
            amplitude: DEFAULT_AMPLITUDE,
            width: DEFAULT_WIDTH,
            backend,
            storage: Storage::Binary32,
            snapshots: Vec::new(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return Err(Error::InvalidConfig(format!("n must be at least 3, got {}", self.n)));
        }
        if !(self.r > 0.0 && self.r <= 0.5) {
            return Err(Error::InvalidConfig(format!("r must lie in (0, 0.5], got {}", self.r)));
        }
        if !self.amplitude.is_finite() || !(self.width.is_finite() && self.width >= 0.0) {
            return Err(Error::InvalidConfig("amplitude and width must be finite, width non-negative".into()));
        }
        if let Some(&s) = self.snapshots.iter().find(|&&s| s > self.steps) {
            return Err(Error::InvalidConfig(format!("snapshot step {s} beyond {} steps", self.steps)));
        }
        Ok(())
    }
}

pub const DEFAULT_AMPLITUDE: f64 = 0.25;
/// Makes the exponential profile fall about 5e6 times from the peak to the
/// cells next to the walls.
pub const DEFAULT_WIDTH: f64 = 61.7;

/// Initial field with zero Dirichlet boundaries.
pub fn heat1d_init(kind: HeatInit, n: usize, amplitude: f64, width: f64) -> Result<Vec<f64>> {
    if n < 3 {
        return Err(Error::InvalidConfig(format!("n must be at least 3, got {n}")));
    }
    let last = (n - 1) as f64;
    let mut u: Vec<f64> = (0..n)
        .map(|i| {
            let x = i as f64 / last;
            match kind {
                HeatInit::Sin => amplitude * (2.0 * PI * x).sin(),
                HeatInit::Exp => amplitude * (-width * (x - 0.5) * (x - 0.5)).exp(),
            }
        })
        .collect();
    u[0] = 0.0;
    u[n - 1] = 0.0;
    Ok(u)
}

/// Stencil scalar: `f32` or `f64`.
pub trait Real: Copy + Add<Output = Self> + Sub<Output = Self> {
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Real for f32 {
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
}

/// One explicit step into `out`; only `r * lap` goes through `mult`.
pub fn heat1d_step<T: Real>(u: &[T], out: &mut [T], r: f64, mult: &mut Multiplier) {
    let n = u.len();
    out[0] = T::from_f64(0.0);
    out[n - 1] = T::from_f64(0.0);
    for i in 1..n - 1 {
        let lap = (u[i - 1] - (u[i] + u[i])) + u[i + 1];
        let du = mult.mul_saturating(r, lap.to_f64());
        out[i] = u[i] + T::from_f64(du);
    }
}

pub fn heat1d_run(cfg: &HeatConfig) -> Result<SimRun> {
    cfg.validate()?;
    let init = heat1d_init(cfg.init, cfg.n, cfg.amplitude, cfg.width)?;
    match cfg.storage {
        Storage::Binary32 => run_with::<f32>(cfg, &init),
        Storage::Binary64 => run_with::<f64>(cfg, &init),
    }
}

fn run_with<T: Real>(cfg: &HeatConfig, init: &[f64]) -> Result<SimRun> {
    let wanted = normalize_snapshots(&cfg.snapshots, cfg.steps);
    let mut u: Vec<T> = init.iter().map(|&x| T::from_f64(x)).collect();
    let mut next = u.clone();
    let mut mult = Multiplier::new(cfg.backend);
    let mut snapshots = Vec::with_capacity(wanted.len());
    let snap = |step, u: &[T]| Snapshot { step, fields: Fields::Line(u.iter().map(|x| x.to_f64()).collect()) };
    let mut pending = wanted.iter().peekable();
    if pending.next_if_eq(&&0).is_some() {
        snapshots.push(snap(0, &u));
    }
    for step in 1..=cfg.steps {
        mult.set_step(step);
        heat1d_step(&u, &mut next, cfg.r, &mut mult);
        std::mem::swap(&mut u, &mut next);
        if pending.next_if_eq(&&step).is_some() {
            snapshots.push(snap(step, &u));
        }
    }
    Ok(SimRun::from_multiplier("heat", cfg.steps, snapshots, &mult))
}
