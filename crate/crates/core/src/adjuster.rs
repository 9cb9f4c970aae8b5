//! Runtime precision adjustment.
//!
//! One [`AdjustState`] models one hardware multiplier whose mask register
//! persists across operations. After every product it either widens the
//! exponent by one flexible bit and retries (overflow or underflow), narrows
//! it by one bit for subsequent operations (all three values redundant), or
//! keeps the current split.
//!
//! Values are not stored in the flexible format between operations: each
//! product re-encodes its operands under the current descriptor, so a narrow
//! decision takes effect lazily on the next use.

use std::fmt;
use std::io::Write;

use crate::error::Result;
use crate::flexformat::{encode, FlexValue, FormatDescriptor};
use crate::mul::{multiply, MulMode, MulResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AdjustKind {
    OverflowWiden,
    UnderflowWiden,
    RedundancyNarrow,
}

impl fmt::Display for AdjustKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AdjustKind::OverflowWiden => "overflow-widen",
            AdjustKind::UnderflowWiden => "underflow-widen",
            AdjustKind::RedundancyNarrow => "redundancy-narrow",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdjustmentEvent {
    pub kind: AdjustKind,
    pub step_index: u64,
    pub old_k: u32,
    pub new_k: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    RetryWider,
    Narrow,
    Keep,
}

/// Precision state of one arithmetic stream.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjustState {
    descriptor: FormatDescriptor,
    mode: MulMode,
    step_index: u64,
    pub overflow_events: u64,
    pub underflow_events: u64,
    pub redundancy_events: u64,
    pub retry_count: u64,
    pub mult_count: u64,
    /// Out-of-range products at `k == fx` that could not be widened.
    pub saturation_count: u64,
    events: Vec<AdjustmentEvent>,
}

/// Outcome of one logical adaptive multiplication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveProduct {
    /// Decoded product; the overflow sentinel decodes to a signed infinity.
    pub value: f64,
    pub overflow: bool,
    pub underflow: bool,
    /// The product stayed out of range with no flexible bit left.
    pub saturated: bool,
    /// Events appended to the log by this multiplication.
    pub new_events: usize,
}

/// True when the two bits below the exponent MSB both differ from it, i.e.
/// the biased exponent is close enough to the bias that one exponent bit can
/// be removed without leaving the narrower normal range.
pub fn detect_redundancy(v: &FlexValue) -> bool {
    let width = v.descriptor().exponent_bits();
    if width < 3 || !v.is_normal() {
        return false;
    }
    let e = v.efield();
    let msb = (e >> (width - 1)) & 1;
    let next = (e >> (width - 3)) & 0b11;
    next == if msb == 1 { 0b00 } else { 0b11 }
}

impl AdjustState {
    pub fn new(descriptor: FormatDescriptor) -> Self {
        Self::with_mode(descriptor, MulMode::Approx)
    }

    pub fn with_mode(descriptor: FormatDescriptor, mode: MulMode) -> Self {
        Self {
            descriptor,
            mode,
            step_index: 0,
            overflow_events: 0,
            underflow_events: 0,
            redundancy_events: 0,
            retry_count: 0,
            mult_count: 0,
            saturation_count: 0,
            events: Vec::new(),
        }
    }

    pub fn descriptor(&self) -> FormatDescriptor {
        self.descriptor
    }

    pub fn mode(&self) -> MulMode {
        self.mode
    }

    /// Tags subsequently logged events with a simulation step.
    pub fn set_step(&mut self, step: u64) {
        self.step_index = step;
    }

    pub fn events(&self) -> &[AdjustmentEvent] {
        &self.events
    }

    pub fn take_events(&mut self) -> Vec<AdjustmentEvent> {
        std::mem::take(&mut self.events)
    }

    pub fn event_count(&self) -> u64 {
        self.overflow_events + self.underflow_events + self.redundancy_events
    }

    fn log(&mut self, kind: AdjustKind, old: FormatDescriptor) {
        match kind {
            AdjustKind::OverflowWiden => self.overflow_events += 1,
            AdjustKind::UnderflowWiden => self.underflow_events += 1,
            AdjustKind::RedundancyNarrow => self.redundancy_events += 1,
        }
        self.events.push(AdjustmentEvent {
            kind,
            step_index: self.step_index,
            old_k: old.k(),
            new_k: self.descriptor.k(),
        });
    }

    /// Widens on a range violation; `false` when already at `k == fx`.
    fn try_widen(&mut self, kind: AdjustKind) -> bool {
        match self.descriptor.widen_exponent() {
            Ok(wider) => {
                let old = std::mem::replace(&mut self.descriptor, wider);
                self.log(kind, old);
                true
            }
            Err(_) => {
                self.saturation_count += 1;
                false
            }
        }
    }

    /// Applies the adjustment rules to one product computed under the
    /// current descriptor.
    pub fn adjust_after_multiply(&mut self, a: &FlexValue, b: &FlexValue, r: &MulResult) -> Decision {
        if r.overflow || r.underflow {
            let kind = if r.overflow { AdjustKind::OverflowWiden } else { AdjustKind::UnderflowWiden };
            return if self.try_widen(kind) {
                self.retry_count += 1;
                Decision::RetryWider
            } else {
                Decision::Keep
            };
        }
        if self.descriptor.k() > 0 && detect_redundancy(a) && detect_redundancy(b) && detect_redundancy(&r.value) {
            let old = self.descriptor;
            self.descriptor = old.narrow_exponent().expect("k > 0");
            self.log(AdjustKind::RedundancyNarrow, old);
            return Decision::Narrow;
        }
        Decision::Keep
    }

    /// Encodes both operands under the current precision, multiplies, and
    /// widens and retries until the product fits or no flexible bit is left.
    ///
    /// An operand that itself leaves the range on encoding counts as an
    /// overflow/underflow of the multiplication.
    pub fn multiply_adaptive(&mut self, x: f64, y: f64) -> Result<AdaptiveProduct> {
        self.mult_count += 1;
        let logged = self.events.len();
        loop {
            let d = self.descriptor;
            let (a, fa) = encode(x, d);
            let (b, fb) = encode(y, d);
            let operand_overflow = fa.overflowed || fb.overflowed;
            let operand_underflow = (fa.underflowed || fb.underflowed) && x != 0.0 && y != 0.0;
            if operand_overflow || operand_underflow {
                let kind = if operand_overflow { AdjustKind::OverflowWiden } else { AdjustKind::UnderflowWiden };
                if self.try_widen(kind) {
                    self.retry_count += 1;
                    continue;
                }
                let r = multiply(&a, &b, self.mode)?;
                return Ok(AdaptiveProduct {
                    value: r.value.to_f64(),
                    overflow: operand_overflow,
                    underflow: !operand_overflow,
                    saturated: true,
                    new_events: self.events.len() - logged,
                });
            }
            let r = multiply(&a, &b, self.mode)?;
            let decision = self.adjust_after_multiply(&a, &b, &r);
            if decision == Decision::RetryWider {
                continue;
            }
            return Ok(AdaptiveProduct {
                value: r.value.to_f64(),
                overflow: r.overflow,
                underflow: r.underflow,
                saturated: r.overflow || r.underflow,
                new_events: self.events.len() - logged,
            });
        }
    }
}

/// Writes an event log as CSV: `step_index,kind,old_k,new_k`.
pub fn write_events_csv<W: Write>(events: &[AdjustmentEvent], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step_index", "kind", "old_k", "new_k"])?;
    for e in events {
        w.write_record([e.step_index.to_string(), e.kind.to_string(), e.old_k.to_string(), e.new_k.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(eb: u32, mb: u32, fx: u32, k: u32) -> FormatDescriptor {
        FormatDescriptor::new(eb, mb, fx, k).unwrap()
    }

    fn with_efield(efield: u32, desc: FormatDescriptor) -> FlexValue {
        FlexValue::from_fields(false, efield, 0, desc).unwrap()
    }

    #[test]
    fn redundancy_rule() {
        assert!(detect_redundancy(&with_efield(0b1000_0111, d(5, 4, 3, 3))));
        assert!(!detect_redundancy(&with_efield(0b10111, d(5, 4, 3, 0))));
        assert!(detect_redundancy(&with_efield(0b011110, d(3, 9, 3, 3))));
        assert!(!detect_redundancy(&FlexValue::zero(d(3, 9, 3, 3), false)));
        assert!(!detect_redundancy(&FlexValue::sentinel(d(3, 9, 3, 3), false)));
        // two-bit exponents never qualify
        assert!(!detect_redundancy(&with_efield(0b10, d(2, 4, 2, 0))));
    }

    #[test]
    fn redundant_exponent_fits_one_bit_narrower() {
        for width_k in 1..=3 {
            let desc = d(3, 9, 3, width_k);
            let narrower = desc.narrow_exponent().unwrap();
            for efield in 1..desc.exponent_all_ones() {
                let v = with_efield(efield, desc);
                if detect_redundancy(&v) {
                    let (w, flags) = v.reencode(narrower).unwrap();
                    assert!(!flags.out_of_range() && !flags.inexact);
                    assert_eq!(w.to_f64(), v.to_f64());
                }
            }
        }
    }

    #[test]
    fn overflow_widens_and_retries() {
        let desc = d(3, 9, 3, 0);
        let mut s = AdjustState::new(desc);
        let a = encode(8.0, desc).0;
        let r = multiply(&a, &a, MulMode::Approx).unwrap();
        assert!(r.overflow);
        assert_eq!(s.adjust_after_multiply(&a, &a, &r), Decision::RetryWider);
        assert_eq!(s.descriptor().k(), 1);
        assert_eq!(s.events()[0], AdjustmentEvent { kind: AdjustKind::OverflowWiden, step_index: 0, old_k: 0, new_k: 1 });
    }

    #[test]
    fn narrow_requires_all_three() {
        let desc = d(3, 9, 3, 2);
        let one = encode(1.0, desc).0;
        let r = multiply(&one, &one, MulMode::Approx).unwrap();
        let mut s = AdjustState::new(desc);
        assert_eq!(s.adjust_after_multiply(&one, &one, &r), Decision::Narrow);
        assert_eq!(s.descriptor().k(), 1);
        assert_eq!(s.redundancy_events, 1);

        // operands redundant (|e| = 5 band is [-3, 4]) but the product 2^6 is not
        let mut s = AdjustState::new(desc);
        let eight = encode(8.0, desc).0;
        let r = multiply(&eight, &eight, MulMode::Approx).unwrap();
        assert!(detect_redundancy(&eight) && !detect_redundancy(&r.value));
        assert_eq!(s.adjust_after_multiply(&eight, &eight, &r), Decision::Keep);
        assert_eq!(s.descriptor().k(), 2);

        // nothing to narrow at k = 0
        let desc0 = d(3, 9, 3, 0);
        let one0 = encode(1.0, desc0).0;
        let r = multiply(&one0, &one0, MulMode::Approx).unwrap();
        let mut s = AdjustState::new(desc0);
        assert_eq!(s.adjust_after_multiply(&one0, &one0, &r), Decision::Keep);
    }

    #[test]
    fn saturation_keeps_k_and_counts() {
        let desc = d(3, 9, 3, 3);
        let mut s = AdjustState::new(desc);
        let p = s.multiply_adaptive(1e6, 1e6).unwrap();
        assert!(p.saturated && p.overflow && p.value.is_infinite());
        assert_eq!(s.descriptor().k(), 3);
        assert_eq!(s.saturation_count, 1);
        assert!(s.events().is_empty());
    }

    #[test]
    fn adaptive_one_times_one() {
        let mut s = AdjustState::new(d(3, 9, 3, 0));
        let p = s.multiply_adaptive(1.0, 1.0).unwrap();
        assert_eq!(p.value, 1.0);
        assert_eq!(p.new_events, 0);
        assert_eq!(s.mult_count, 1);
    }

    #[test]
    fn adaptive_widens_until_product_fits() {
        let mut s = AdjustState::new(d(3, 9, 3, 0));
        let p = s.multiply_adaptive(300.0, 300.0).unwrap();
        // 300 needs |e| = 5 to encode, 90000 = 2^16.46 needs bias >= 16: |e| = 6
        assert_eq!(s.descriptor().k(), 3);
        assert!(!p.overflow && !p.saturated);
        let rel = (p.value - 90000.0).abs() / 90000.0;
        assert!(rel <= 2f64.powi(-9), "{}", p.value);
        assert_eq!(p.new_events, 3);
        assert!(s.events().iter().all(|e| e.kind == AdjustKind::OverflowWiden && e.new_k == e.old_k + 1));
        assert_eq!((s.mult_count, s.retry_count), (1, 3));
    }

    #[test]
    fn stream_near_one_narrows_again() {
        let mut s = AdjustState::new(d(3, 9, 3, 0));
        s.multiply_adaptive(300.0, 300.0).unwrap();
        let mut x = 0.9;
        let mut narrowed = 0;
        for i in 0..200 {
            s.set_step(i);
            let p = s.multiply_adaptive(x, 2.0 - x).unwrap();
            assert!(!p.overflow);
            narrowed += s.events()[s.events().len() - p.new_events..]
                .iter()
                .filter(|e| e.kind == AdjustKind::RedundancyNarrow)
                .count();
            x += 0.001;
        }
        assert!(narrowed > 0);
        assert_eq!(s.descriptor().k(), 0);
    }

    #[test]
    fn underflow_widens() {
        let mut s = AdjustState::new(d(3, 9, 3, 0));
        let p = s.multiply_adaptive(0.3, 0.3).unwrap();
        // 0.09 is below 2^-2, the smallest normal at |e| = 3
        assert_eq!(s.events()[0].kind, AdjustKind::UnderflowWiden);
        assert!((p.value - 0.09).abs() < 1e-4);
    }

    #[test]
    fn events_csv() {
        let mut s = AdjustState::new(d(3, 9, 3, 0));
        s.set_step(7);
        s.multiply_adaptive(300.0, 300.0).unwrap();
        let mut buf = Vec::new();
        write_events_csv(s.events(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "step_index,kind,old_k,new_k\n7,overflow-widen,0,1\n7,overflow-widen,1,2\n7,overflow-widen,2,3\n"
        );
    }

    proptest! {
        #[test]
        fn k_bounded_and_deterministic(stream in prop::collection::vec((-30.0f64..30.0, -30.0f64..30.0), 1..200)) {
            let run = || {
                let mut s = AdjustState::new(d(3, 9, 3, 0));
                let mut ks = Vec::new();
                for (i, (ex, ey)) in stream.iter().enumerate() {
                    s.set_step(i as u64);
                    s.multiply_adaptive(2f64.powf(*ex), -(2f64.powf(*ey))).unwrap();
                    ks.push(s.descriptor().k());
                }
                (s, ks)
            };
            let (s1, ks) = run();
            let (s2, _) = run();
            prop_assert_eq!(s1.events(), s2.events());
            prop_assert!(ks.iter().all(|&k| k <= 3));
            for e in s1.events() {
                prop_assert_eq!(e.old_k.abs_diff(e.new_k), 1);
            }
        }
    }
}
