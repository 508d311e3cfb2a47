//! Exact dyadic ReLU networks whose behaviour on a target function is
//! carried by a handful of *intrinsic* parameters.
//!
//! Every weight and bias is a dyadic rational tagged either
//! [`ParamOrigin::Fixed`] (independent of the target) or
//! [`ParamOrigin::Intrinsic`] (depends on the target). The crate builds the
//! fixed gadgets ([`blocks`]), encodes a target into intrinsic values
//! ([`encoder`]), wires the two together ([`assembler`]) and measures the
//! result against closed-form error bounds ([`certify`]).
//!
//! The crate is `no_std` and needs only `alloc`. File formats, timing and
//! parallel evaluation live in the companion `fewparam` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod assembler;
pub mod blocks;
pub mod certify;
pub mod dyadic;
pub mod encoder;
mod error;
pub mod net;
pub mod targets;

pub use dyadic::Dyadic;
pub use error::Error;
pub use net::{AffineLayer, InputBox, Interval, Junction, ParamOrigin, ReluNetwork, ShapeAudit};

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;
