//! Bit-accurate model of a runtime-reconfigurable floating point multiplier.
//!
//! A [`FormatDescriptor`] `<EB,MB,FX>@k` splits `FX` flexible bits between
//! exponent (`k`) and mantissa (`FX - k`). [`mul::multiply`] evaluates the
//! truncated multi-cycle mantissa product, and [`AdjustState`] moves the
//! split at runtime on overflow, underflow and exponent redundancy.

pub mod adjuster;
pub mod backend;
pub mod error;
pub mod fixedformat;
pub mod flexformat;
pub mod mul;
pub mod oracle;
pub mod par;
pub mod pde;
pub mod profiler;
pub mod selftest;

pub use adjuster::{AdjustState, AdjustmentEvent, AdjustKind};
pub use backend::{Backend, Multiplier, Product};
pub use error::{Error, Result};
pub use fixedformat::FixedFormat;
pub use flexformat::{encode, FlexValue, FormatDescriptor};
pub use mul::{multiply, MulMode, MulResult};
pub use par::Execution;
