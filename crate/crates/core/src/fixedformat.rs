//! Fixed-precision `ExMy` baselines (E5M10 is IEEE half without subnormals).
//!
//! The quantizer here works by exact power-of-two scaling of `f64` values
//! and shares no code with [`crate::flexformat::encode`], so it doubles as
//! an independent reference for the flexible encoder and, via
//! [`multiply_fixed`], for correctly rounded products.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flexformat::EncodeFlags;

pub const MAX_FIXED_EXPONENT_BITS: u32 = 10;
/// Keeps the product of two significands exact in an `f64`.
pub const MAX_FIXED_MANTISSA_BITS: u32 = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct FixedFormat {
    e: u32,
    m: u32,
}

impl FixedFormat {
    pub const E5M10: FixedFormat = FixedFormat { e: 5, m: 10 };
    pub const E5M9: FixedFormat = FixedFormat { e: 5, m: 9 };
    pub const E5M8: FixedFormat = FixedFormat { e: 5, m: 8 };

    pub fn new(e: u32, m: u32) -> Result<Self> {
        if !(2..=MAX_FIXED_EXPONENT_BITS).contains(&e) {
            return Err(Error::InvalidFixedFormat(format!(
                "exponent width {e} outside 2..={MAX_FIXED_EXPONENT_BITS}"
            )));
        }
        if !(1..=MAX_FIXED_MANTISSA_BITS).contains(&m) {
            return Err(Error::InvalidFixedFormat(format!(
                "mantissa width {m} outside 1..={MAX_FIXED_MANTISSA_BITS}"
            )));
        }
        Ok(Self { e, m })
    }

    pub fn exponent_bits(&self) -> u32 {
        self.e
    }

    pub fn mantissa_bits(&self) -> u32 {
        self.m
    }

    pub fn total_bits(&self) -> u32 {
        1 + self.e + self.m
    }

    pub fn bias(&self) -> i32 {
        (1i32 << (self.e - 1)) - 1
    }

    pub fn max_value(&self) -> f64 {
        let emax = (1i32 << self.e) - 2 - self.bias();
        2f64.powi(emax) * (2.0 - 2f64.powi(-(self.m as i32)))
    }

    pub fn min_normal(&self) -> f64 {
        2f64.powi(1 - self.bias())
    }
}

impl fmt::Display for FixedFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "E{}M{}", self.e, self.m)
    }
}

impl FromStr for FixedFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse { what: "fixed format", input: s.to_string() };
        let rest = s.trim().strip_prefix(['E', 'e']).ok_or_else(bad)?;
        let (e, m) = rest.split_once(['M', 'm']).ok_or_else(bad)?;
        let e = e.parse().map_err(|_| bad())?;
        let m = m.parse().map_err(|_| bad())?;
        Self::new(e, m)
    }
}

impl TryFrom<String> for FixedFormat {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<FixedFormat> for String {
    fn from(f: FixedFormat) -> Self {
        f.to_string()
    }
}

/// Rounds `x` to the nearest value of `f` (ties to even).
///
/// Overflow returns a signed infinity with `overflowed` set; nonzero
/// results below the smallest normal flush to a signed zero with
/// `underflowed` set.
pub fn quantize(x: f64, f: FixedFormat) -> (f64, EncodeFlags) {
    if !x.is_finite() {
        let flags = EncodeFlags { overflowed: true, inexact: true, ..Default::default() };
        return (if x.is_sign_negative() && !x.is_nan() { f64::NEG_INFINITY } else { f64::INFINITY }, flags);
    }
    if x == 0.0 {
        return (x, EncodeFlags::default());
    }
    let ax = x.abs();
    let ulp = exact_pow2(floor_log2(ax) - f.m as i32);
    // ax / ulp lies in [2^m, 2^(m+1)) and is exact
    let q = (ax / ulp).round_ties_even() * ulp;
    let signed = |v: f64| if x < 0.0 { -v } else { v };
    if q > f.max_value() {
        let flags = EncodeFlags { overflowed: true, inexact: true, ..Default::default() };
        return (signed(f64::INFINITY), flags);
    }
    if q < f.min_normal() {
        let flags = EncodeFlags { underflowed: true, inexact: true, ..Default::default() };
        return (signed(0.0), flags);
    }
    (signed(q), EncodeFlags { inexact: q != ax, ..Default::default() })
}

/// Correctly rounded product of two values already representable in `f`.
pub fn multiply_fixed(a: f64, b: f64, f: FixedFormat) -> (f64, EncodeFlags) {
    debug_assert!(representable(a, f) && representable(b, f), "operands must be quantized to {f}");
    // both significands fit in 26 bits, so the f64 product is exact
    quantize(a * b, f)
}

/// `quantize` then `multiply_fixed`, or-ing the operand and product flags.
pub fn multiply_quantized(a: f64, b: f64, f: FixedFormat) -> (f64, EncodeFlags) {
    let (qa, fa) = quantize(a, f);
    let (qb, fb) = quantize(b, f);
    if fa.overflowed || fb.overflowed {
        let negative = (qa < 0.0) != (qb < 0.0);
        let flags = EncodeFlags { overflowed: true, inexact: true, ..Default::default() };
        return (if negative { f64::NEG_INFINITY } else { f64::INFINITY }, flags);
    }
    let (p, fp) = multiply_fixed(qa, qb, f);
    let flags = EncodeFlags {
        overflowed: fp.overflowed,
        underflowed: fp.underflowed || fa.underflowed || fb.underflowed,
        inexact: fp.inexact || fa.inexact || fb.inexact,
    };
    (p, flags)
}

fn representable(x: f64, f: FixedFormat) -> bool {
    let (q, flags) = quantize(x, f);
    !flags.out_of_range() && q == x
}

fn floor_log2(ax: f64) -> i32 {
    let bits = ax.to_bits();
    let biased = ((bits >> 52) & 0x7ff) as i32;
    if biased == 0 {
        let frac = bits & ((1u64 << 52) - 1);
        -1074 + (63 - frac.leading_zeros() as i32)
    } else {
        biased - 1023
    }
}

fn exact_pow2(e: i32) -> f64 {
    // powi by squaring stays exact for powers of two inside the f64 range
    if e >= -1022 {
        2f64.powi(e)
    } else {
        2f64.powi(-1022) * 2f64.powi(e + 1022)
    }
}
