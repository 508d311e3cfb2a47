use alloc::string::String;

/// Everything that can go wrong while building, evaluating or certifying.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[non_exhaustive]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("delta out of range: {0}")]
    InvalidDelta(String),

    #[error("junction shift unavailable: output {index} of the inner network is unbounded below")]
    JunctionShift { index: usize },

    #[error("network list is empty")]
    EmptyNetworkList,

    #[error("input boxes of stacked networks differ")]
    InputBoxMismatch,

    #[error("non-finite value {0}")]
    NonFinite(String),

    #[error("normalized target leaves [0,1] at sample {index}: value {value}")]
    ModulusViolation { index: usize, value: String },

    #[error("packing needs {required_breakpoints} breakpoints per copy, above the cap of 2^{cap_bits}")]
    PackingCapExceeded { required_breakpoints: u128, cap_bits: u32 },

    #[error("configuration exceeds the size guard: {0}")]
    SizeGuard(String),

    #[error("unknown target `{0}`")]
    UnknownTarget(String),

    #[error("infeasible configuration: {0}")]
    Infeasible(String),
}
