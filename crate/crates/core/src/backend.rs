//! Multiplication backends shared by the profiler and the PDE solvers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adjuster::{AdjustState, AdjustmentEvent};
use crate::error::{Error, Result};
use crate::fixedformat::{multiply_quantized, FixedFormat};
use crate::flexformat::{encode, FormatDescriptor};
use crate::mul::{multiply, MulMode};

/// Which arithmetic performs a multiplication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Backend {
    Binary64,
    Binary32,
    Fixed(FixedFormat),
    R2f2 { descriptor: FormatDescriptor, adaptive: bool, mode: MulMode },
}

impl Backend {
    pub fn r2f2_adaptive(descriptor: FormatDescriptor) -> Self {
        Backend::R2f2 { descriptor, adaptive: true, mode: MulMode::Approx }
    }

    pub fn r2f2_static(descriptor: FormatDescriptor) -> Self {
        Backend::R2f2 { descriptor, adaptive: false, mode: MulMode::Approx }
    }

    /// Parses `binary64`, `binary32`, `ExMy` or a descriptor `<EB,MB,FX>[@k]`.
    /// A descriptor may carry a `+adaptive` and/or `+exact` suffix.
    pub fn parse_with(s: &str, adaptive: bool, exact: bool) -> Result<Self> {
        let mut b: Backend = s.parse()?;
        if let Backend::R2f2 { adaptive: a, mode, .. } = &mut b {
            *a |= adaptive;
            if exact {
                *mode = MulMode::Exact;
            }
        }
        Ok(b)
    }

    pub fn is_stateful(&self) -> bool {
        matches!(self, Backend::R2f2 { adaptive: true, .. })
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Backend::Binary64 => f.write_str("binary64"),
            Backend::Binary32 => f.write_str("binary32"),
            Backend::Fixed(ff) => write!(f, "{ff}"),
            Backend::R2f2 { descriptor, adaptive, mode } => {
                write!(f, "{descriptor}")?;
                if *adaptive {
                    f.write_str("+adaptive")?;
                }
                if *mode == MulMode::Exact {
                    f.write_str("+exact")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.to_ascii_lowercase().as_str() {
            "binary64" | "f64" | "double" => return Ok(Backend::Binary64),
            "binary32" | "f32" | "single" => return Ok(Backend::Binary32),
            _ => {}
        }
        if s.starts_with('<') {
            let mut parts = s.split('+');
            let descriptor = parts.next().unwrap_or_default().parse()?;
            let mut b = Backend::r2f2_static(descriptor);
            for flag in parts {
                match (flag.trim(), &mut b) {
                    ("adaptive", Backend::R2f2 { adaptive, .. }) => *adaptive = true,
                    ("exact", Backend::R2f2 { mode, .. }) => *mode = MulMode::Exact,
                    _ => return Err(Error::Parse { what: "backend", input: s.to_string() }),
                }
            }
            return Ok(b);
        }
        s.parse::<FixedFormat>()
            .map(Backend::Fixed)
            .map_err(|_| Error::Parse { what: "backend", input: s.to_string() })
    }
}

impl TryFrom<String> for Backend {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Backend> for String {
    fn from(b: Backend) -> String {
        b.to_string()
    }
}

/// A single multiplication result as seen by a caller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Product {
    /// Signed infinity on overflow.
    pub value: f64,
    pub overflow: bool,
    pub underflow: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MulStats {
    pub count: u64,
    pub overflows: u64,
    pub underflows: u64,
}

/// A backend instance; adaptive R2F2 carries its own precision state.
#[derive(Debug, Clone)]
pub struct Multiplier {
    backend: Backend,
    state: Option<AdjustState>,
    stats: MulStats,
}

impl Multiplier {
    pub fn new(backend: Backend) -> Self {
        let state = match backend {
            Backend::R2f2 { descriptor, adaptive: true, mode } => Some(AdjustState::with_mode(descriptor, mode)),
            _ => None,
        };
        Self { backend, state, stats: MulStats::default() }
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn state(&self) -> Option<&AdjustState> {
        self.state.as_ref()
    }

    pub fn stats(&self) -> MulStats {
        self.stats
    }

    pub fn set_step(&mut self, step: u64) {
        if let Some(s) = &mut self.state {
            s.set_step(step);
        }
    }

    pub fn events(&self) -> &[AdjustmentEvent] {
        self.state.as_ref().map_or(&[], |s| s.events())
    }

    /// Largest finite magnitude the backend currently produces.
    pub fn max_finite(&self) -> f64 {
        match self.backend {
            Backend::Binary64 => f64::MAX,
            Backend::Binary32 => f32::MAX as f64,
            Backend::Fixed(f) => f.max_value(),
            Backend::R2f2 { descriptor, .. } => {
                self.state.as_ref().map_or(descriptor, |s| s.descriptor()).max_value()
            }
        }
    }

    pub fn mul(&mut self, a: f64, b: f64) -> Product {
        let p = match self.backend {
            Backend::Binary64 => Product { value: a * b, overflow: false, underflow: false },
            Backend::Binary32 => {
                let v = (a as f32) * (b as f32);
                Product { value: v as f64, overflow: v.is_infinite(), underflow: false }
            }
            Backend::Fixed(f) => {
                let (value, flags) = multiply_quantized(a, b, f);
                Product { value, overflow: flags.overflowed, underflow: flags.underflowed }
            }
            Backend::R2f2 { descriptor, mode, .. } => match &mut self.state {
                Some(state) => {
                    let p = state.multiply_adaptive(a, b).expect("single-descriptor stream");
                    Product { value: p.value, overflow: p.overflow, underflow: p.underflow }
                }
                None => {
                    let (x, fx) = encode(a, descriptor);
                    let (y, fy) = encode(b, descriptor);
                    let r = multiply(&x, &y, mode).expect("operands share the descriptor");
                    Product {
                        value: r.value.to_f64(),
                        overflow: r.overflow || fx.overflowed || fy.overflowed,
                        underflow: r.underflow || fx.underflowed || fy.underflowed,
                    }
                }
            },
        };
        self.stats.count += 1;
        self.stats.overflows += p.overflow as u64;
        self.stats.underflows += p.underflow as u64;
        p
    }

    /// Like [`Multiplier::mul`] but clamps an overflowed result to the
    /// largest finite magnitude, so a simulation keeps running.
    pub fn mul_saturating(&mut self, a: f64, b: f64) -> f64 {
        let p = self.mul(a, b);
        if p.value.is_infinite() {
            self.max_finite().copysign(p.value)
        } else {
            p.value
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        assert_eq!("binary64".parse::<Backend>().unwrap(), Backend::Binary64);
        assert_eq!("binary32".parse::<Backend>().unwrap(), Backend::Binary32);
        assert_eq!("E5M10".parse::<Backend>().unwrap(), Backend::Fixed(FixedFormat::E5M10));
        let b: Backend = "<3,9,3>+adaptive".parse().unwrap();
        assert!(b.is_stateful());
        assert_eq!(b.to_string(), "<3,9,3>@0+adaptive");
        assert_eq!(b.to_string().parse::<Backend>().unwrap(), b);
        assert_eq!(Backend::parse_with("<3,9,3>@1", true, true).unwrap().to_string(), "<3,9,3>@1+adaptive+exact");
        assert!("bogus".parse::<Backend>().is_err());
        assert!("<3,9,3>+fast".parse::<Backend>().is_err());
    }

    #[test]
    fn binary64_is_native() {
        let mut m = Multiplier::new(Backend::Binary64);
        assert_eq!(m.mul(0.1, 0.3).value, 0.1 * 0.3);
    }

    #[test]
    fn binary32_rounds_operands_and_product() {
        let mut m = Multiplier::new(Backend::Binary32);
        assert_eq!(m.mul(0.1, 0.3).value, (0.1f32 * 0.3f32) as f64);
    }

    #[test]
    fn fixed_overflow_saturates_on_request() {
        let mut m = Multiplier::new(Backend::Fixed(FixedFormat::E5M10));
        let p = m.mul(300.0, -300.0);
        assert!(p.overflow && p.value == f64::NEG_INFINITY);
        assert_eq!(m.mul_saturating(300.0, 300.0), 65504.0);
        assert_eq!(m.stats().overflows, 2);
    }

    #[test]
    fn adaptive_tracks_state() {
        let mut m = Multiplier::new("<3,9,3>+adaptive".parse().unwrap());
        m.set_step(4);
        let v = m.mul_saturating(300.0, 300.0);
        assert!((v - 90000.0).abs() / 90000.0 < 1e-3);
        assert_eq!(m.events().len(), 3);
        assert_eq!(m.events()[0].step_index, 4);
        assert_eq!(m.state().unwrap().descriptor().k(), 3);
    }

    #[test]
    fn static_r2f2_reports_operand_range() {
        let mut m = Multiplier::new("<3,9,3>@0".parse().unwrap());
        let p = m.mul(100.0, 0.01);
        assert!(p.overflow);
        assert_eq!(m.mul_saturating(100.0, 1.0), "<3,9,3>@0".parse::<FormatDescriptor>().unwrap().max_value());
    }
}
