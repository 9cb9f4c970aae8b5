//! Reference multiplication in exact rational arithmetic.
//!
//! Operands are unpacked straight from their bit patterns, the significand
//! product is formed as a [`BigRational`] and rounded to nearest even by
//! rational comparison. Nothing here calls into [`crate::mul`].

use std::collections::HashMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::Result;
use crate::flexformat::{FlexValue, FormatDescriptor};
use crate::mul::{multiply, MulMode};
use crate::par::{map_indexed, Execution};

fn pow2(n: i64) -> BigRational {
    let p = BigRational::from_integer(BigInt::one() << n.unsigned_abs());
    if n >= 0 {
        p
    } else {
        p.recip()
    }
}

/// Rounds `x > 0` to `m` fraction bits: returns the fraction field and the
/// binary exponent `e` with `2^e <= rounded < 2^(e + 1)`.
pub fn round_rational(x: &BigRational, m: u32) -> (u64, i64) {
    assert!(x > &BigRational::zero());
    let two = BigRational::from_integer(BigInt::from(2));
    let mut e = 0i64;
    let mut scaled = x.clone();
    while scaled >= two {
        scaled /= &two;
        e += 1;
    }
    while scaled < BigRational::one() {
        scaled *= &two;
        e -= 1;
    }
    let scaled = scaled * pow2(m as i64);
    let mut fl = scaled.floor();
    let rem = &scaled - &fl;
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    let odd = fl.to_integer().bit(0);
    if rem > half || (rem == half && odd) {
        fl += BigRational::one();
    }
    let mut sig = fl.to_integer().to_u64().expect("at most 53 bits");
    if sig == 1u64 << (m + 1) {
        sig = 1u64 << m;
        e += 1;
    }
    (sig - (1u64 << m), e)
}

struct Fields {
    sign: u64,
    e: u64,
    m: u64,
}

/// Correctly rounded products for one descriptor, memoized per significand
/// pair.
pub struct Reference {
    d: FormatDescriptor,
    rounded: HashMap<(u64, u64), (u64, i64)>,
}

impl Reference {
    pub fn new(d: FormatDescriptor) -> Self {
        Self { d, rounded: HashMap::new() }
    }

    fn unpack(&self, word: u64) -> Option<Fields> {
        let (ew, mw) = (self.d.exponent_bits() as u64, self.d.mantissa_bits() as u64);
        if word >> (1 + ew + mw) != 0 {
            return None;
        }
        let f = Fields { sign: word >> (ew + mw), e: (word >> mw) & ((1 << ew) - 1), m: word & ((1 << mw) - 1) };
        let all_ones = (1 << ew) - 1;
        ((f.e != 0 && f.e != all_ones) || f.m == 0).then_some(f)
    }

    fn pack(&self, sign: u64, e: u64, m: u64) -> u64 {
        let (ew, mw) = (self.d.exponent_bits() as u64, self.d.mantissa_bits() as u64);
        (sign << (ew + mw)) | (e << mw) | m
    }

    /// Expected product word, or `None` if an operand is not a valid
    /// encoding.
    pub fn multiply_bits(&mut self, a: u64, b: u64) -> Option<u64> {
        let (x, y) = (self.unpack(a)?, self.unpack(b)?);
        let ew = self.d.exponent_bits();
        let mw = self.d.mantissa_bits();
        let all_ones = (1u64 << ew) - 1;
        let sign = x.sign ^ y.sign;
        if x.e == 0 || y.e == 0 {
            return Some(self.pack(sign, 0, 0));
        }
        if x.e == all_ones || y.e == all_ones {
            return Some(self.pack(sign, all_ones, 0));
        }
        let (mf, inc) = *self.rounded.entry((x.m, y.m)).or_insert_with(|| {
            let one = 1u64 << mw;
            let p = BigRational::new(BigInt::from(one + x.m) * BigInt::from(one + y.m), BigInt::one() << (2 * mw));
            round_rational(&p, mw)
        });
        let bias = (1i64 << (ew - 1)) - 1;
        let e = x.e as i64 + y.e as i64 - bias + inc;
        Some(if e >= all_ones as i64 {
            self.pack(sign, all_ones, 0)
        } else if e <= 0 {
            self.pack(sign, 0, 0)
        } else {
            self.pack(sign, e as u64, mf)
        })
    }
}

/// Every descriptor (at every `k`) whose total width is at most `max_width`.
pub fn descriptors_up_to(max_width: u32) -> Vec<FormatDescriptor> {
    let mut out = Vec::new();
    for eb in 2..max_width {
        for mb in 1..max_width {
            for fx in 0..max_width {
                if 1 + eb + mb + fx > max_width {
                    continue;
                }
                out.extend((0..=fx).filter_map(|k| FormatDescriptor::new(eb, mb, fx, k).ok()));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub descriptors: usize,
    pub pairs: u64,
    pub mismatches: u64,
    /// First few disagreements as `descriptor a b expected got` lines.
    pub examples: Vec<String>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.mismatches == 0 && self.pairs > 0
    }
}

/// Compares exact-mode [`multiply`] with [`Reference`] on all pairs of valid
/// encodings of `d`.
pub fn check_descriptor(d: FormatDescriptor) -> Result<OracleReport> {
    let mut reference = Reference::new(d);
    let words: Vec<FlexValue> = (0..1u64 << d.total_bits()).filter_map(|w| FlexValue::from_bits(w, d).ok()).collect();
    let mut report = OracleReport { descriptors: 1, pairs: 0, mismatches: 0, examples: Vec::new() };
    for a in &words {
        for b in &words {
            let expected = reference.multiply_bits(a.to_bits(), b.to_bits()).expect("valid encodings");
            let got = multiply(a, b, MulMode::Exact)?.value.to_bits();
            report.pairs += 1;
            if got != expected {
                report.mismatches += 1;
                if report.examples.len() < 8 {
                    report.examples.push(format!("{d} {a} * {b}: expected {expected:#b} got {got:#b}"));
                }
            }
        }
    }
    Ok(report)
}

/// Runs [`check_descriptor`] over [`descriptors_up_to`]`(max_width)`.
pub fn exhaustive_check(max_width: u32, exec: Execution) -> Result<OracleReport> {
    let ds = descriptors_up_to(max_width);
    let parts = map_indexed(ds.len(), exec, |i| check_descriptor(ds[i]));
    let mut total = OracleReport { descriptors: ds.len(), pairs: 0, mismatches: 0, examples: Vec::new() };
    for p in parts {
        let p = p?;
        total.pairs += p.pairs;
        total.mismatches += p.mismatches;
        total.examples.extend(p.examples.into_iter().take(8usize.saturating_sub(total.examples.len())));
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn rational_rounding() {
        assert_eq!(round_rational(&r(1, 1), 3), (0, 0));
        assert_eq!(round_rational(&r(3, 1), 1), (1, 1));
        // 1.0625 is a tie between 1.0 and 1.125 at three bits: even wins
        assert_eq!(round_rational(&r(17, 16), 3), (0, 0));
        assert_eq!(round_rational(&r(19, 16), 3), (2, 0));
        assert_eq!(round_rational(&r(31, 16), 3), (0, 1));
        assert_eq!(round_rational(&r(3, 32), 2), (2, -4));
    }

    #[test]
    fn descriptor_enumeration() {
        let ds = descriptors_up_to(9);
        assert!(ds.iter().all(|d| d.total_bits() <= 9));
        assert_eq!(ds.iter().filter(|d| d.total_bits() == 9).count(), 56);
        assert!(ds.contains(&FormatDescriptor::new(2, 2, 2, 1).unwrap()));
    }

    #[test]
    fn reference_special_cases() {
        let d = FormatDescriptor::new(2, 2, 2, 0).unwrap();
        let mut o = Reference::new(d);
        let one = FlexValue::from_fields(false, 1, 0, d).unwrap().to_bits();
        let neg_zero = FlexValue::zero(d, true).to_bits();
        let sentinel = FlexValue::sentinel(d, false).to_bits();
        assert_eq!(o.multiply_bits(one, one), Some(one));
        assert_eq!(o.multiply_bits(one, neg_zero), Some(neg_zero));
        assert_eq!(o.multiply_bits(sentinel, one), Some(sentinel));
        assert_eq!(o.multiply_bits(0b000_0001, one), None);
    }

    #[test]
    fn small_widths_agree() {
        let r = exhaustive_check(7, Execution::Sequential).unwrap();
        assert!(r.passed(), "{:?}", r.examples);
    }
}
