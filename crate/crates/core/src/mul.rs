//! The flexible multiplier datapath.
//!
//! A product is assembled from three independent pieces, mirroring the
//! hardware: the XOR of the signs, a significand product computed by
//! [`mantissa_mul_approx`] (or exactly), and an exponent sum computed by
//! [`exponent_add`] once the normalisation carry is known.
//!
//! In approximate mode each significand is split as `A * 2^F + P`, where
//! `A` is the implicit one plus the fixed mantissa bits and `P` holds the
//! `F = fx - k` flexible mantissa bits. The fixed parts multiply in one
//! step; the flexible bits are consumed one per cycle and only the cross
//! term of the two leading flexible bits survives, so the raw product is
//! `2*(mb+1) + F` bits wide instead of `2*(mb+1) + 2F`.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::flexformat::{round_nearest_even, FlexValue, FormatDescriptor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum MulMode {
    /// Truncated bit-serial flexible-mantissa schedule.
    #[default]
    Approx,
    /// Full double-width significand product.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MulResult {
    pub value: FlexValue,
    pub overflow: bool,
    pub underflow: bool,
    /// Normalisation carry fed into the exponent sum (product in `[2, 4)`).
    pub mantissa_carry: bool,
    /// The truncated schedule produced this result.
    pub approx_mode: bool,
}

/// One addition into the flexible accumulator `res'`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CycleTerm {
    pub cycle: u32,
    pub term: u128,
    pub shift: u32,
}

/// Raw significand product under the truncated schedule.
///
/// `sig_a` and `sig_b` carry the implicit one; `flex` is the number of
/// flexible mantissa bits `F` at their low end.
pub fn mantissa_mul_approx(sig_a: u64, sig_b: u64, flex: u32) -> u128 {
    let (fixed_a, fixed_b) = (sig_a >> flex, sig_b >> flex);
    let res = fixed_a as u128 * fixed_b as u128;
    let res_flex: u128 = mantissa_cycles(sig_a, sig_b, flex)
        .iter()
        .map(|c| c.term << c.shift)
        .sum();
    (res << flex) + res_flex
}

/// The per-cycle contributions to `res'`, in schedule order.
///
/// Cycle `j` adds `(q_j & A) + (p_j & B)` shifted by `F - j`, where `p_j`,
/// `q_j` are the `j`-th flexible bits (most significant first) of the two
/// operands and `A`, `B` their fixed parts. Cycle 1 additionally adds
/// `p_1 & q_1` at shift `F - 2` when `F >= 2`.
pub fn mantissa_cycles(sig_a: u64, sig_b: u64, flex: u32) -> Vec<CycleTerm> {
    let (fixed_a, fixed_b) = ((sig_a >> flex) as u128, (sig_b >> flex) as u128);
    let bit = |sig: u64, j: u32| ((sig >> (flex - j)) & 1) as u128;
    let mut out = Vec::with_capacity(flex as usize + 1);
    for j in 1..=flex {
        let (p, q) = (bit(sig_a, j), bit(sig_b, j));
        out.push(CycleTerm { cycle: j, term: q * fixed_a + p * fixed_b, shift: flex - j });
        if j == 1 && flex >= 2 {
            out.push(CycleTerm { cycle: 1, term: p & q, shift: flex - 2 });
        }
    }
    out
}

/// Renders a schedule as `cycle j: + (term) << s`, terms in binary.
pub fn format_trace(cycles: &[CycleTerm]) -> String {
    let mut s = String::new();
    for c in cycles {
        let _ = writeln!(s, "cycle {}: + ({:b}) << {}", c.cycle, c.term, c.shift);
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NormalizedMantissa {
    pub mfield: u64,
    /// The product was in `[2, 4)`; the exponent gains one.
    pub carry: bool,
    /// Rounding overflowed the mantissa; the exponent gains one more.
    pub round_up_propagated: bool,
}

/// Normalises and rounds a `width`-bit raw significand product to the
/// descriptor's `|m|` fraction bits (ties to even on the dropped tail).
pub fn normalize_round(raw: u128, width: u32, d: FormatDescriptor) -> NormalizedMantissa {
    debug_assert!(raw >> (width - 2) != 0 && raw >> width == 0, "raw product not normalised");
    let mw = d.mantissa_bits();
    let carry = (raw >> (width - 1)) & 1 == 1;
    let lead = if carry { width - 1 } else { width - 2 };
    let (mut rounded, _) = round_nearest_even(raw, lead - mw);
    let round_up_propagated = rounded >> (mw + 1) != 0;
    if round_up_propagated {
        rounded >>= 1;
    }
    NormalizedMantissa {
        mfield: (rounded as u64) & ((1u64 << mw) - 1),
        carry,
        round_up_propagated,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExponentSum {
    /// Biased result exponent; meaningful only without overflow/underflow.
    pub e_res: u32,
    pub overflow: bool,
    pub underflow: bool,
}

/// `e1 + e2 + carry - BIAS`, computed the way the hardware does it.
///
/// The fixed and flexible exponent regions are summed separately, the
/// flexible region gated by the allocation mask. The bias is removed as
/// `- 2^(|e|-1) + 1`: the single set bit of `2^(|e|-1)` always sits on
/// the most significant bit of the fixed region, whatever `k` is.
/// `carry` is the total exponent increment from normalisation and
/// rounding, at most 2.
pub fn exponent_add(e1: u32, e2: u32, d: FormatDescriptor, carry: u32) -> ExponentSum {
    debug_assert!(carry <= 2);
    let (k, fx, eb) = (d.k(), d.fx(), d.eb());
    let mask = d.mask() as u64;
    // the flexible region of an operand: k exponent bits, then fx - k
    // (don't care) mantissa bits, masked away before the add
    let flex_region = |e: u32| ((e as u64) & ((1u64 << k) - 1)) << (fx - k);
    let fixed_sum = ((e1 >> k) as u64) + ((e2 >> k) as u64);
    let flex_sum = ((flex_region(e1) & mask) >> (fx - k)) + ((flex_region(e2) & mask) >> (fx - k));
    let sum = ((fixed_sum << k) + flex_sum + carry as u64) as i64;
    let leading = 1i64 << (eb - 1);
    let e_res = (sum - (leading << k)) + 1;
    let all_ones = d.exponent_all_ones() as i64;
    ExponentSum {
        e_res: e_res.clamp(0, all_ones) as u32,
        overflow: e_res >= all_ones,
        underflow: e_res <= 0,
    }
}

/// Multiplies two values that share one descriptor.
pub fn multiply(a: &FlexValue, b: &FlexValue, mode: MulMode) -> Result<MulResult> {
    let d = a.descriptor();
    if b.descriptor() != d {
        return Err(Error::DescriptorMismatch(d.to_string(), b.descriptor().to_string()));
    }
    let sign = a.sign() ^ b.sign();
    let approx_mode = mode == MulMode::Approx;
    let result = |value, overflow, underflow, mantissa_carry| MulResult {
        value,
        overflow,
        underflow,
        mantissa_carry,
        approx_mode,
    };
    if a.is_zero() || b.is_zero() {
        return Ok(result(FlexValue::zero(d, sign), false, false, false));
    }
    if a.is_sentinel() || b.is_sentinel() {
        return Ok(result(FlexValue::sentinel(d, sign), true, false, false));
    }

    let (raw, width) = match mode {
        MulMode::Approx => {
            let flex = d.flexible_mantissa_bits();
            (mantissa_mul_approx(a.significand(), b.significand(), flex), 2 * (d.mb() + 1) + flex)
        }
        MulMode::Exact => (
            a.significand() as u128 * b.significand() as u128,
            2 * (d.mantissa_bits() + 1),
        ),
    };
    let norm = normalize_round(raw, width, d);
    let carry = norm.carry as u32 + norm.round_up_propagated as u32;
    let exp = exponent_add(a.efield(), b.efield(), d, carry);
    if exp.overflow {
        return Ok(result(FlexValue::sentinel(d, sign), true, false, norm.carry));
    }
    if exp.underflow {
        return Ok(result(FlexValue::zero(d, sign), false, true, norm.carry));
    }
    let value = FlexValue::from_fields(sign, exp.e_res, norm.mfield, d)?;
    Ok(result(value, false, false, norm.carry))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flexformat::encode;
    use proptest::prelude::*;

    fn d(eb: u32, mb: u32, fx: u32, k: u32) -> FormatDescriptor {
        FormatDescriptor::new(eb, mb, fx, k).unwrap()
    }

    fn v(x: f64, desc: FormatDescriptor) -> FlexValue {
        let (v, flags) = encode(x, desc);
        assert!(!flags.inexact, "{x} not representable under {desc}");
        v
    }

    #[test]
    fn one_times_one() {
        for mode in [MulMode::Approx, MulMode::Exact] {
            let desc = d(3, 9, 3, 0);
            let r = multiply(&v(1.0, desc), &v(1.0, desc), mode).unwrap();
            assert_eq!(r.value.to_f64(), 1.0);
            assert!(!r.overflow && !r.underflow && !r.mantissa_carry);
            assert_eq!(r.approx_mode, mode == MulMode::Approx);
        }
    }

    #[test]
    fn zero_short_circuits() {
        let desc = d(3, 9, 3, 1);
        for x in [1.0, -3.5, 100.0] {
            let r = multiply(&FlexValue::zero(desc, false), &v(x, desc), MulMode::Approx).unwrap();
            assert!(r.value.is_zero());
            assert_eq!(r.value.sign(), x < 0.0);
            assert!(!r.overflow && !r.underflow);
        }
    }

    #[test]
    fn descriptor_mismatch() {
        let a = v(1.0, d(3, 9, 3, 0));
        let b = v(1.0, d(3, 9, 3, 1));
        assert!(matches!(multiply(&a, &b, MulMode::Exact), Err(Error::DescriptorMismatch(..))));
    }

    #[test]
    fn no_flexible_mantissa_bits_is_exact_product() {
        assert_eq!(mantissa_mul_approx(0b1011, 0b1101, 0), 0b1011 * 0b1101);
        let desc = d(3, 9, 3, 3);
        for (x, y) in [(1.5, 1.5), (1.998046875, 1.75), (3.0, 7.0)] {
            let exact = multiply(&v(x, desc), &v(y, desc), MulMode::Exact).unwrap();
            let approx = multiply(&v(x, desc), &v(y, desc), MulMode::Approx).unwrap();
            assert_eq!(exact, MulResult { approx_mode: false, ..approx });
        }
    }

    #[test]
    fn three_cycle_schedule() {
        // <1|abc|mpt> x <1|def|nqk> with abc = 101, mpt = 110, def = 011, nqk = 101
        let sig_a = 0b110_1110_u64;
        let sig_b = 0b101_1101_u64;
        let (op1, op2) = (0b1101u128, 0b1011u128);
        let cycles = mantissa_cycles(sig_a, sig_b, 3);
        let (m, p, t) = (1u128, 1u128, 0u128);
        let (n, q, k) = (1u128, 0u128, 1u128);
        assert_eq!(
            cycles,
            vec![
                CycleTerm { cycle: 1, term: n * op1 + m * op2, shift: 2 },
                CycleTerm { cycle: 1, term: m & n, shift: 1 },
                CycleTerm { cycle: 2, term: q * op1 + p * op2, shift: 1 },
                CycleTerm { cycle: 3, term: k * op1 + t * op2, shift: 0 },
            ]
        );
        let res_flex = ((n * op1 + m * op2) << 2) + ((m & n) << 1) + ((q * op1 + p * op2) << 1) + (k * op1 + t * op2);
        assert_eq!(mantissa_mul_approx(sig_a, sig_b, 3), ((op1 * op2) << 3) + res_flex);
        assert_eq!(
            format_trace(&cycles),
            "cycle 1: + (11000) << 2\ncycle 1: + (1) << 1\ncycle 2: + (1011) << 1\ncycle 3: + (1101) << 0\n"
        );
    }

    #[test]
    fn one_flexible_bit_drops_cross_term() {
        // both flexible bits set: exact adds p*q = 1 at weight 2^-1, approx drops it
        let (sig_a, sig_b) = (0b111u64, 0b101u64);
        let approx = mantissa_mul_approx(sig_a, sig_b, 1);
        assert_eq!(approx, ((0b11 * 0b10) << 1) + 0b11 + 0b10);
        assert_eq!(approx * 2 + 1, (sig_a * sig_b) as u128);
    }

    #[test]
    fn bias_of_four_bit_exponent() {
        let desc = d(3, 9, 3, 1);
        assert_eq!(desc.bias(), 7);
        assert_eq!(desc.bias(), (1 << 3) - 1);
        let e = desc.bias() as u32;
        assert_eq!(exponent_add(e, e, desc, 0), ExponentSum { e_res: e, overflow: false, underflow: false });
    }

    #[test]
    fn exponent_add_limits() {
        for k in 0..=3 {
            let desc = d(3, 9, 3, k);
            let emax = desc.max_biased_exponent();
            assert!(exponent_add(emax, emax, desc, 0).overflow);
            assert!(exponent_add(1, 1, desc, 0).underflow);
            // e1 + e2 - bias across the whole range
            for e1 in 1..=emax {
                for e2 in 1..=emax {
                    for carry in 0..=2 {
                        let want = e1 as i64 + e2 as i64 + carry as i64 - desc.bias() as i64;
                        let got = exponent_add(e1, e2, desc, carry);
                        assert_eq!(got.overflow, want >= desc.exponent_all_ones() as i64);
                        assert_eq!(got.underflow, want <= 0);
                        if !got.overflow && !got.underflow {
                            assert_eq!(got.e_res as i64, want);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn normalize_cases() {
        let desc = d(3, 9, 3, 3); // |m| = 9, F = 0
        let width = 2 * 10;
        let one = 1u128 << 9;
        assert_eq!(
            normalize_round(one * one, width, desc),
            NormalizedMantissa { mfield: 0, carry: false, round_up_propagated: false }
        );
        let one_and_half = 3u128 << 8;
        let n = normalize_round(one_and_half * one_and_half, width, desc);
        assert!(n.carry && !n.round_up_propagated);
        assert_eq!(n.mfield, 1 << 6); // 2.25 = 2 * 1.125
        // (2 - 2^-9)^2 = 4 - 2^-7 + 2^-18 sits on the grid below 4: no carry chain
        let all_ones = (1u128 << 10) - 1;
        let n = normalize_round(all_ones * all_ones, width, desc);
        assert!(n.carry && !n.round_up_propagated);
        assert_eq!(n.mfield, (1 << 9) - 2);
        // (1 + 212/512)^2 = 2 - 0.000427 is within half an ulp of 2
        let sig = 512u128 + 212;
        let n = normalize_round(sig * sig, width, desc);
        assert!(!n.carry && n.round_up_propagated);
        assert_eq!(n.mfield, 0);
        let x = 1.0 + 212.0 / 512.0;
        let r = multiply(&v(x, desc), &v(x, desc), MulMode::Exact).unwrap();
        assert_eq!(r.value.to_f64(), 2.0);
        assert!(!r.mantissa_carry);
    }

    fn arb_desc() -> impl Strategy<Value = FormatDescriptor> {
        (2u32..=4, 2u32..=10, 0u32..=4)
            .prop_flat_map(|(eb, mb, fx)| (Just(eb), Just(mb), Just(fx), 0..=fx))
            .prop_map(|(eb, mb, fx, k)| d(eb, mb, fx, k))
    }

    fn arb_pair() -> impl Strategy<Value = (FlexValue, FlexValue)> {
        arb_desc().prop_flat_map(|desc| {
            let word = 0u64..(1u64 << desc.total_bits());
            (word.clone(), word).prop_filter_map("well-formed", move |(x, y)| {
                Some((FlexValue::from_bits(x, desc).ok()?, FlexValue::from_bits(y, desc).ok()?))
            })
        })
    }

    proptest! {
        #[test]
        fn sign_is_xor((a, b) in arb_pair()) {
            for mode in [MulMode::Approx, MulMode::Exact] {
                let r = multiply(&a, &b, mode).unwrap();
                prop_assert_eq!(r.value.sign(), a.sign() ^ b.sign());
            }
        }

        #[test]
        fn commutative((a, b) in arb_pair()) {
            for mode in [MulMode::Approx, MulMode::Exact] {
                prop_assert_eq!(multiply(&a, &b, mode).unwrap(), multiply(&b, &a, mode).unwrap());
            }
        }

        #[test]
        fn approx_never_exceeds_exact((a, b) in arb_pair()) {
            let desc = a.descriptor();
            if a.is_normal() && b.is_normal() {
                let flex = desc.flexible_mantissa_bits();
                let raw = mantissa_mul_approx(a.significand(), b.significand(), flex);
                let full = a.significand() as u128 * b.significand() as u128;
                prop_assert!(raw << flex <= full);
                // the dropped cross terms are worth less than 2^F units of the raw product
                prop_assert!(full - (raw << flex) < 1u128 << (2 * flex));
            }
            let ex = multiply(&a, &b, MulMode::Exact).unwrap().value.to_f64().abs();
            let ap = multiply(&a, &b, MulMode::Approx).unwrap().value.to_f64().abs();
            prop_assert!(ap <= ex);
        }

        #[test]
        fn approx_close_to_exact((a, b) in arb_pair()) {
            let ex = multiply(&a, &b, MulMode::Exact).unwrap();
            let ap = multiply(&a, &b, MulMode::Approx).unwrap();
            if !ex.overflow && !ex.underflow && !ap.underflow && !ex.value.is_zero() {
                let (e, p) = (ex.value.to_f64(), ap.value.to_f64());
                let bound = 2f64.powi(-(a.descriptor().mb() as i32 - 1));
                prop_assert!(((e - p) / e).abs() <= bound, "{} vs {}", e, p);
            }
        }
    }
}
