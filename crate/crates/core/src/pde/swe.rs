use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::backend::{Backend, Multiplier};
use crate::error::{Error, Result};

use super::{normalize_snapshots, Fields, SimRun, Snapshot};

/// Gaussian bump on a lake of constant depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpInit {
    #[serde(default = "BumpInit::default_depth")]
    pub depth: f64,
    #[serde(default = "BumpInit::default_amplitude")]
    pub amplitude: f64,
    /// Standard deviation in cells.
    #[serde(default = "BumpInit::default_sigma")]
    pub sigma: f64,
    /// Centre as a fraction of the domain.
    #[serde(default = "BumpInit::default_centre")]
    pub cx: f64,
    #[serde(default = "BumpInit::default_centre")]
    pub cy: f64,
}

impl BumpInit {
    fn default_depth() -> f64 {
        100.0
    }
    fn default_amplitude() -> f64 {
        30.0
    }
    fn default_sigma() -> f64 {
        5.0
    }
    fn default_centre() -> f64 {
        0.5
    }
}

impl Default for BumpInit {
    fn default() -> Self {
        Self {
            depth: Self::default_depth(),
            amplitude: Self::default_amplitude(),
            sigma: Self::default_sigma(),
            cx: 0.5,
            cy: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweConfig {
    #[serde(default = "SweConfig::default_cells")]
    pub nx: usize,
    #[serde(default = "SweConfig::default_cells")]
    pub ny: usize,
    #[serde(default = "SweConfig::default_steps")]
    pub steps: u64,
    #[serde(default = "SweConfig::default_g")]
    pub g: f64,
    #[serde(default = "SweConfig::default_dt")]
    pub dt: f64,
    #[serde(default = "SweConfig::default_spacing")]
    pub dx: f64,
    #[serde(default = "SweConfig::default_spacing")]
    pub dy: f64,
    #[serde(default)]
    pub init: BumpInit,
    /// Multiplies only in the x-momentum flux at x midpoints.
    pub backend: Backend,
    #[serde(default)]
    pub snapshots: Vec<u64>,
    #[serde(default)]
    pub seed: u64,
}

impl SweConfig {
    fn default_cells() -> usize {
        64
    }
    fn default_steps() -> u64 {
        500
    }
    fn default_g() -> f64 {
        9.81
    }
    fn default_dt() -> f64 {
        0.5
    }
    fn default_spacing() -> f64 {
        100.0
    }

    pub fn new(backend: Backend) -> Self {
        Self {
            nx: Self::default_cells(),
            ny: Self::default_cells(),
            steps: Self::default_steps(),
            g: Self::default_g(),
            dt: Self::default_dt(),
            dx: Self::default_spacing(),
            dy: Self::default_spacing(),
            init: BumpInit::default(),
            backend,
            snapshots: Vec::new(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 3 || self.ny < 3 {
            return Err(Error::InvalidConfig(format!("grid must be at least 3x3, got {}x{}", self.nx, self.ny)));
        }
        let positive = [self.g, self.dt, self.dx, self.dy, self.init.sigma];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidConfig("g, dt, dx, dy and sigma must be positive".into()));
        }
        if !(self.init.depth > 0.0 && self.init.depth + self.init.amplitude.min(0.0) > 0.0) {
            return Err(Error::InvalidConfig("water depth must stay positive".into()));
        }
        if let Some(&s) = self.snapshots.iter().find(|&&s| s > self.steps) {
            return Err(Error::InvalidConfig(format!("snapshot step {s} beyond {} steps", self.steps)));
        }
        Ok(())
    }

    /// `dt * (sqrt(g h) + |u|) / min(dx, dy)` of a state.
    pub fn courant(&self, s: &SweState) -> f64 {
        let speed = (0..s.h.len())
            .map(|k| {
                let u = (s.hu[k] / s.h[k]).abs().max((s.hv[k] / s.h[k]).abs());
                (self.g * s.h[k]).sqrt() + u
            })
            .fold(0.0, f64::max);
        self.dt * speed / self.dx.min(self.dy)
    }

    /// `depth * area + amplitude * 2 pi sigma^2` in physical units.
    pub fn analytic_mass(&self) -> f64 {
        let area = self.nx as f64 * self.dx * self.ny as f64 * self.dy;
        let sx = self.init.sigma * self.dx;
        let sy = self.init.sigma * self.dy;
        self.init.depth * area + self.init.amplitude * 2.0 * PI * sx * sy
    }
}

/// Conserved variables on a doubly periodic grid, `index = j * nx + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweState {
    pub nx: usize,
    pub ny: usize,
    pub h: Vec<f64>,
    pub hu: Vec<f64>,
    pub hv: Vec<f64>,
}

impl SweState {
    pub fn mass(&self, dx: f64, dy: f64) -> f64 {
        self.h.iter().sum::<f64>() * dx * dy
    }

    fn fields(&self) -> Fields {
        Fields::Grid { nx: self.nx, ny: self.ny, h: self.h.clone(), hu: self.hu.clone(), hv: self.hv.clone() }
    }
}

/// Builds the initial state and rejects it if the Courant number is not
/// below one.
pub fn swe2d_init(cfg: &SweConfig) -> Result<SweState> {
    cfg.validate()?;
    let (nx, ny) = (cfg.nx, cfg.ny);
    let b = cfg.init;
    let (xc, yc) = (b.cx * nx as f64, b.cy * ny as f64);
    let mut h = vec![0.0; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let (x, y) = (i as f64 + 0.5 - xc, j as f64 + 0.5 - yc);
            h[j * nx + i] = b.depth + b.amplitude * (-(x * x + y * y) / (2.0 * b.sigma * b.sigma)).exp();
        }
    }
    let s = SweState { nx, ny, h, hu: vec![0.0; nx * ny], hv: vec![0.0; nx * ny] };
    let c = cfg.courant(&s);
    if c >= 1.0 {
        return Err(Error::Cfl(c));
    }
    Ok(s)
}

/// Multipliers for the three products of the substituted flux
/// `q1*q1/q3 + halfg*(q3*q3)`, one per product site.
#[derive(Debug, Clone)]
pub struct FluxUnits {
    pub q1q1: Multiplier,
    pub q3q3: Multiplier,
    pub halfg: Multiplier,
}

impl FluxUnits {
    pub fn new(backend: Backend) -> Self {
        Self { q1q1: Multiplier::new(backend), q3q3: Multiplier::new(backend), halfg: Multiplier::new(backend) }
    }

    pub fn set_step(&mut self, step: u64) {
        for m in self.all_mut() {
            m.set_step(step);
        }
    }

    fn all_mut(&mut self) -> [&mut Multiplier; 3] {
        [&mut self.q1q1, &mut self.q3q3, &mut self.halfg]
    }

    pub fn all(&self) -> [&Multiplier; 3] {
        [&self.q1q1, &self.q3q3, &self.halfg]
    }

    fn flux(&mut self, q1: f64, q3: f64, halfg: f64) -> f64 {
        let q1sq = self.q1q1.mul_saturating(q1, q1);
        let q3sq = self.q3q3.mul_saturating(q3, q3);
        q1sq / q3 + self.halfg.mul_saturating(halfg, q3sq)
    }
}

/// One two-stage Lax-Wendroff step on the periodic grid.
pub fn swe2d_step(s: &SweState, cfg: &SweConfig, units: &mut FluxUnits) -> SweState {
    let (nx, ny) = (s.nx, s.ny);
    let halfg = 0.5 * cfg.g;
    let (ax, ay) = (0.5 * cfg.dt / cfg.dx, 0.5 * cfg.dt / cfg.dy);
    let at = |i: usize, j: usize| j * nx + i;
    let n = nx * ny;
    let (h, hu, hv) = (&s.h, &s.hu, &s.hv);

    // Half step at x midpoints (i + 1/2, j) and y midpoints (i, j + 1/2).
    let (mut xh, mut xu, mut xv) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let (mut yh, mut yu, mut yv) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for j in 0..ny {
        for i in 0..nx {
            let (k, e) = (at(i, j), at((i + 1) % nx, j));
            xh[k] = 0.5 * (h[k] + h[e]) - ax * (hu[e] - hu[k]);
            xu[k] = 0.5 * (hu[k] + hu[e])
                - ax * ((hu[e] * hu[e] / h[e] + halfg * h[e] * h[e]) - (hu[k] * hu[k] / h[k] + halfg * h[k] * h[k]));
            xv[k] = 0.5 * (hv[k] + hv[e]) - ax * (hu[e] * hv[e] / h[e] - hu[k] * hv[k] / h[k]);

            let nb = at(i, (j + 1) % ny);
            yh[k] = 0.5 * (h[k] + h[nb]) - ay * (hv[nb] - hv[k]);
            yu[k] = 0.5 * (hu[k] + hu[nb]) - ay * (hv[nb] * hu[nb] / h[nb] - hv[k] * hu[k] / h[k]);
            yv[k] = 0.5 * (hv[k] + hv[nb])
                - ay * ((hv[nb] * hv[nb] / h[nb] + halfg * h[nb] * h[nb]) - (hv[k] * hv[k] / h[k] + halfg * h[k] * h[k]));
        }
    }

    let ux_mx: Vec<f64> = (0..n).map(|k| units.flux(xu[k], xh[k], halfg)).collect();

    let (bx, by) = (cfg.dt / cfg.dx, cfg.dt / cfg.dy);
    let mut out = s.clone();
    for j in 0..ny {
        for i in 0..nx {
            let k = at(i, j);
            let w = at((i + nx - 1) % nx, j);
            let sb = at(i, (j + ny - 1) % ny);
            out.h[k] -= bx * (xu[k] - xu[w]) + by * (yv[k] - yv[sb]);
            out.hu[k] -= bx * (ux_mx[k] - ux_mx[w]) + by * (yv[k] * yu[k] / yh[k] - yv[sb] * yu[sb] / yh[sb]);
            out.hv[k] -= bx * (xu[k] * xv[k] / xh[k] - xu[w] * xv[w] / xh[w])
                + by * ((yv[k] * yv[k] / yh[k] + halfg * yh[k] * yh[k]) - (yv[sb] * yv[sb] / yh[sb] + halfg * yh[sb] * yh[sb]));
        }
    }
    out
}

pub fn swe2d_run(cfg: &SweConfig) -> Result<SimRun> {
    let mut s = swe2d_init(cfg)?;
    let wanted = normalize_snapshots(&cfg.snapshots, cfg.steps);
    let mut pending = wanted.iter().peekable();
    let mut snapshots = Vec::with_capacity(wanted.len());
    if pending.next_if_eq(&&0).is_some() {
        snapshots.push(Snapshot { step: 0, fields: s.fields() });
    }
    let mut units = FluxUnits::new(cfg.backend);
    for step in 1..=cfg.steps {
        units.set_step(step);
        s = swe2d_step(&s, cfg, &mut units);
        if pending.next_if_eq(&&step).is_some() {
            snapshots.push(Snapshot { step, fields: s.fields() });
        }
    }
    Ok(SimRun::from_multipliers("swe", cfg.steps, snapshots, &units.all()))
}
