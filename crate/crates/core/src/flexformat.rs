//! Flexible floating-point representation.
//!
//! A word holds one sign bit, `eb` fixed exponent bits, `mb` fixed mantissa
//! bits and `fx` flexible bits. At any time `k` of the flexible bits extend
//! the exponent at its least-significant end and the remaining `fx - k`
//! extend the mantissa at its least-significant end, so the effective layout
//! is an IEEE-style format with `eb + k` exponent bits and `mb + fx - k`
//! fraction bits.
//!
//! Conventions shared with [`crate::fixedformat`]:
//! - biased exponent `0` is exact zero, there are no subnormals and results
//!   below the smallest normal flush to zero;
//! - the all-ones biased exponent is an overflow sentinel;
//! - conversion rounds to nearest, ties to even.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported effective exponent width (`eb + fx`). Keeps every
/// decoded value exactly representable as an `f64` normal number.
pub const MAX_EXPONENT_BITS: u32 = 11;

/// Largest supported effective mantissa width (`mb + fx`).
pub const MAX_MANTISSA_BITS: u32 = 52;

/// The `<EB, MB, FX>` layout plus the current flexible-bit split `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct FormatDescriptor {
    eb: u32,
    mb: u32,
    fx: u32,
    k: u32,
}

impl FormatDescriptor {
    pub fn new(eb: u32, mb: u32, fx: u32, k: u32) -> Result<Self> {
        if eb < 2 {
            return Err(Error::InvalidDescriptor(format!(
                "eb = {eb}: at least two exponent bits are needed for the bias and the reserved codes"
            )));
        }
        if mb < 1 {
            return Err(Error::InvalidDescriptor("mb must be at least 1".into()));
        }
        if k > fx {
            return Err(Error::InvalidDescriptor(format!("k = {k} exceeds fx = {fx}")));
        }
        if eb + fx > MAX_EXPONENT_BITS {
            return Err(Error::InvalidDescriptor(format!(
                "eb + fx = {} exceeds the supported exponent width {MAX_EXPONENT_BITS}",
                eb + fx
            )));
        }
        if mb + fx > MAX_MANTISSA_BITS {
            return Err(Error::InvalidDescriptor(format!(
                "mb + fx = {} exceeds the supported mantissa width {MAX_MANTISSA_BITS}",
                mb + fx
            )));
        }
        Ok(Self { eb, mb, fx, k })
    }

    pub fn eb(&self) -> u32 {
        self.eb
    }

    pub fn mb(&self) -> u32 {
        self.mb
    }

    pub fn fx(&self) -> u32 {
        self.fx
    }

    /// Flexible bits currently allocated to the exponent.
    pub fn k(&self) -> u32 {
        self.k
    }

    /// Effective exponent width `|e| = eb + k`.
    pub fn exponent_bits(&self) -> u32 {
        self.eb + self.k
    }

    /// Effective fraction width `|m| = mb + fx - k`.
    pub fn mantissa_bits(&self) -> u32 {
        self.mb + self.fx - self.k
    }

    /// Flexible bits currently allocated to the mantissa (`fx - k`).
    pub fn flexible_mantissa_bits(&self) -> u32 {
        self.fx - self.k
    }

    pub fn total_bits(&self) -> u32 {
        1 + self.eb + self.mb + self.fx
    }

    pub fn bias(&self) -> i32 {
        (1i32 << (self.exponent_bits() - 1)) - 1
    }

    /// The all-ones biased exponent, reserved for the overflow sentinel.
    pub fn exponent_all_ones(&self) -> u32 {
        (1u32 << self.exponent_bits()) - 1
    }

    /// Largest biased exponent of a normal number.
    pub fn max_biased_exponent(&self) -> u32 {
        self.exponent_all_ones() - 1
    }

    /// The FX-bit allocation mask, most significant flexible bit first:
    /// a set bit marks a flexible bit owned by the exponent. Allocation is
    /// contiguous, so the mask is always `k` ones followed by `fx - k` zeros.
    pub fn mask(&self) -> u32 {
        ((1u32 << self.k) - 1) << (self.fx - self.k)
    }

    pub fn with_k(&self, k: u32) -> Result<Self> {
        Self::new(self.eb, self.mb, self.fx, k)
    }

    /// Moves one flexible bit from the mantissa to the exponent.
    pub fn widen_exponent(&self) -> Result<Self> {
        if self.k == self.fx {
            return Err(Error::ExponentSaturated(self.fx));
        }
        Ok(Self { k: self.k + 1, ..*self })
    }

    /// Moves one flexible bit from the exponent back to the mantissa.
    pub fn narrow_exponent(&self) -> Result<Self> {
        if self.k == 0 {
            return Err(Error::ExponentAtMinimum);
        }
        Ok(Self { k: self.k - 1, ..*self })
    }

    /// `2^(emax - bias) * (2 - 2^-|m|)` with `emax = 2^|e| - 2`.
    pub fn max_value(&self) -> f64 {
        let emax = self.max_biased_exponent() as i32 - self.bias();
        pow2(emax) * (2.0 - pow2(-(self.mantissa_bits() as i32)))
    }

    /// Smallest positive normal value, `2^(1 - bias)`.
    pub fn min_normal(&self) -> f64 {
        pow2(1 - self.bias())
    }
}

impl fmt::Display for FormatDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{},{},{}>@{}", self.eb, self.mb, self.fx, self.k)
    }
}

impl FromStr for FormatDescriptor {
    type Err = Error;

    /// Accepts `<EB,MB,FX>` (k defaults to 0) or `<EB,MB,FX>@k`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse { what: "format descriptor", input: s.to_string() };
        let s = s.trim();
        let (body, k) = match s.split_once('@') {
            Some((body, k)) => (body.trim(), k.trim().parse::<u32>().map_err(|_| bad())?),
            None => (s, 0),
        };
        let inner = body
            .strip_prefix('<')
            .and_then(|b| b.strip_suffix('>'))
            .ok_or_else(bad)?;
        let parts = inner
            .split(',')
            .map(|p| p.trim().parse::<u32>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| bad())?;
        match parts.as_slice() {
            [eb, mb, fx] => Self::new(*eb, *mb, *fx, k),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for FormatDescriptor {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<FormatDescriptor> for String {
    fn from(d: FormatDescriptor) -> Self {
        d.to_string()
    }
}

/// Status of a conversion into a reduced format.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EncodeFlags {
    pub overflowed: bool,
    pub underflowed: bool,
    pub inexact: bool,
}

impl EncodeFlags {
    pub fn out_of_range(&self) -> bool {
        self.overflowed || self.underflowed
    }
}

/// The real value carried by a [`FlexValue`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decoded {
    Finite(f64),
    /// The all-ones exponent code; not a finite real.
    Overflow { negative: bool },
}

impl Decoded {
    /// Finite values as-is, the overflow marker as a signed infinity.
    pub fn to_f64(self) -> f64 {
        match self {
            Decoded::Finite(v) => v,
            Decoded::Overflow { negative: false } => f64::INFINITY,
            Decoded::Overflow { negative: true } => f64::NEG_INFINITY,
        }
    }
}

/// One number encoded under a [`FormatDescriptor`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FlexValue {
    sign: bool,
    efield: u32,
    mfield: u64,
    descriptor: FormatDescriptor,
}

impl FlexValue {
    pub fn from_fields(sign: bool, efield: u32, mfield: u64, descriptor: FormatDescriptor) -> Result<Self> {
        let ew = descriptor.exponent_bits();
        let mw = descriptor.mantissa_bits();
        if efield >> ew != 0 {
            return Err(Error::MalformedValue(format!("efield {efield:#b} wider than {ew} bits")));
        }
        if mfield >> mw != 0 {
            return Err(Error::MalformedValue(format!("mfield {mfield:#b} wider than {mw} bits")));
        }
        if efield == 0 && mfield != 0 {
            return Err(Error::MalformedValue("zero exponent with nonzero mantissa (no subnormals)".into()));
        }
        if efield == descriptor.exponent_all_ones() && mfield != 0 {
            return Err(Error::MalformedValue("overflow sentinel with nonzero mantissa".into()));
        }
        Ok(Self { sign, efield, mfield, descriptor })
    }

    /// Unpacks a `total_bits`-wide word laid out as sign, efield, mfield
    /// (most significant first).
    pub fn from_bits(word: u64, descriptor: FormatDescriptor) -> Result<Self> {
        let mw = descriptor.mantissa_bits();
        let ew = descriptor.exponent_bits();
        if word >> descriptor.total_bits() != 0 {
            return Err(Error::MalformedValue(format!("word {word:#x} wider than the format")));
        }
        let mfield = word & ((1u64 << mw) - 1);
        let efield = ((word >> mw) & ((1u64 << ew) - 1)) as u32;
        let sign = (word >> (mw + ew)) & 1 == 1;
        Self::from_fields(sign, efield, mfield, descriptor)
    }

    pub fn to_bits(&self) -> u64 {
        let mw = self.descriptor.mantissa_bits();
        let ew = self.descriptor.exponent_bits();
        ((self.sign as u64) << (mw + ew)) | ((self.efield as u64) << mw) | self.mfield
    }

    pub fn zero(descriptor: FormatDescriptor, negative: bool) -> Self {
        Self { sign: negative, efield: 0, mfield: 0, descriptor }
    }

    pub fn sentinel(descriptor: FormatDescriptor, negative: bool) -> Self {
        Self { sign: negative, efield: descriptor.exponent_all_ones(), mfield: 0, descriptor }
    }

    /// Largest finite magnitude with the given sign.
    pub fn max_normal(descriptor: FormatDescriptor, negative: bool) -> Self {
        Self {
            sign: negative,
            efield: descriptor.max_biased_exponent(),
            mfield: (1u64 << descriptor.mantissa_bits()) - 1,
            descriptor,
        }
    }

    pub fn sign(&self) -> bool {
        self.sign
    }

    pub fn efield(&self) -> u32 {
        self.efield
    }

    pub fn mfield(&self) -> u64 {
        self.mfield
    }

    pub fn descriptor(&self) -> FormatDescriptor {
        self.descriptor
    }

    pub fn is_zero(&self) -> bool {
        self.efield == 0
    }

    pub fn is_sentinel(&self) -> bool {
        self.efield == self.descriptor.exponent_all_ones()
    }

    pub fn is_normal(&self) -> bool {
        !self.is_zero() && !self.is_sentinel()
    }

    /// Significand with the implicit leading one, `|m| + 1` bits wide.
    /// Only meaningful for normal values.
    pub fn significand(&self) -> u64 {
        (1u64 << self.descriptor.mantissa_bits()) | self.mfield
    }

    pub fn unbiased_exponent(&self) -> i32 {
        self.efield as i32 - self.descriptor.bias()
    }

    pub fn decode(&self) -> Decoded {
        if self.is_sentinel() {
            return Decoded::Overflow { negative: self.sign };
        }
        let magnitude = if self.is_zero() {
            0.0
        } else {
            let mw = self.descriptor.mantissa_bits() as i32;
            // both factors are exact: the significand has at most 53 bits
            self.significand() as f64 * pow2(self.unbiased_exponent() - mw)
        };
        Decoded::Finite(if self.sign { -magnitude } else { magnitude })
    }

    pub fn to_f64(&self) -> f64 {
        self.decode().to_f64()
    }

    /// Re-expresses the value under another split of the same word width.
    pub fn reencode(&self, target: FormatDescriptor) -> Result<(FlexValue, EncodeFlags)> {
        let (from, to) = (self.descriptor.total_bits(), target.total_bits());
        if from != to {
            return Err(Error::WidthMismatch { from, to });
        }
        if self.is_zero() {
            return Ok((FlexValue::zero(target, self.sign), EncodeFlags::default()));
        }
        if self.is_sentinel() {
            let flags = EncodeFlags { overflowed: true, ..Default::default() };
            return Ok((FlexValue::sentinel(target, self.sign), flags));
        }
        Ok(encode(self.to_f64(), target))
    }
}

/// Bit-exact dump: sign, efield and mfield as binary strings, MSB first.
impl fmt::Display for FlexValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ew = self.descriptor.exponent_bits() as usize;
        let mw = self.descriptor.mantissa_bits() as usize;
        write!(
            f,
            "{} {:0ew$b} {:0mw$b}",
            self.sign as u8,
            self.efield,
            self.mfield,
            ew = ew,
            mw = mw
        )
    }
}

/// Converts a real to the nearest representable value (ties to even).
///
/// Magnitudes that round above [`FormatDescriptor::max_value`] return the
/// sentinel with `overflowed`; nonzero magnitudes that round below the
/// smallest normal return zero with `underflowed`. NaN and infinities are
/// treated as overflow.
pub fn encode(x: f64, d: FormatDescriptor) -> (FlexValue, EncodeFlags) {
    let negative = x.is_sign_negative();
    if !x.is_finite() {
        let flags = EncodeFlags { overflowed: true, inexact: true, ..Default::default() };
        return (FlexValue::sentinel(d, negative && !x.is_nan()), flags);
    }
    if x == 0.0 {
        return (FlexValue::zero(d, negative), EncodeFlags::default());
    }
    let (sig, mut exp) = split_f64(x);
    let mw = d.mantissa_bits();
    let (mut rounded, inexact) = round_nearest_even(sig as u128, 52 - mw);
    if rounded >> (mw + 1) != 0 {
        rounded >>= 1;
        exp += 1;
    }
    let biased = exp + d.bias();
    if biased >= d.exponent_all_ones() as i32 {
        let flags = EncodeFlags { overflowed: true, inexact: true, ..Default::default() };
        return (FlexValue::sentinel(d, negative), flags);
    }
    if biased <= 0 {
        let flags = EncodeFlags { underflowed: true, inexact: true, ..Default::default() };
        return (FlexValue::zero(d, negative), flags);
    }
    let value = FlexValue {
        sign: negative,
        efield: biased as u32,
        mfield: (rounded as u64) & ((1u64 << mw) - 1),
        descriptor: d,
    };
    (value, EncodeFlags { inexact, ..Default::default() })
}

/// Splits a finite nonzero `f64` magnitude into a 53-bit significand with
/// its top bit set and the unbiased exponent of that top bit.
fn split_f64(x: f64) -> (u64, i32) {
    let bits = x.to_bits();
    let biased = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & ((1u64 << 52) - 1);
    if biased == 0 {
        let shift = frac.leading_zeros() - 11;
        (frac << shift, -1022 - shift as i32)
    } else {
        (frac | (1u64 << 52), biased - 1023)
    }
}

/// Drops the low `discard` bits of `value`, rounding to nearest with ties
/// to even. Returns the rounded integer and whether anything nonzero was
/// dropped.
pub(crate) fn round_nearest_even(value: u128, discard: u32) -> (u128, bool) {
    if discard == 0 {
        return (value, false);
    }
    let kept = value >> discard;
    let tail = value & ((1u128 << discard) - 1);
    let half = 1u128 << (discard - 1);
    let up = tail > half || (tail == half && kept & 1 == 1);
    (kept + up as u128, tail != 0)
}

/// Exact `2^e` for `e` in the `f64` normal and subnormal range.
pub(crate) fn pow2(e: i32) -> f64 {
    if e > 1023 {
        f64::INFINITY
    } else if e >= -1022 {
        f64::from_bits(((e + 1023) as u64) << 52)
    } else if e >= -1074 {
        f64::from_bits(1u64 << (e + 1074))
    } else {
        0.0
    }
}
