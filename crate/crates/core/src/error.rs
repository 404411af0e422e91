use thiserror::Error;

/// Errors surfaced by the modeling library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown machine preset `{0}` (shipped: mi355x, mi325x)")]
    UnknownPreset(String),

    #[error("unknown instruction descriptor `{0}`")]
    UnknownInstruction(String),

    #[error("unknown layout `{0}`")]
    UnknownLayout(String),

    #[error("no shipped layout for shape {shape} operand {operand} orientation {orientation}")]
    UnknownLayoutCombination {
        shape: String,
        operand: String,
        orientation: String,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(
        "lane {lane} owns a run of {run_bytes} bytes which is not a multiple of {instr} \
         bytes_per_lane {bytes_per_lane}"
    )]
    AccessSizeMismatch {
        lane: u32,
        run_bytes: u32,
        instr: String,
        bytes_per_lane: u32,
    },

    #[error(
        "lane {lane} access at byte {offset} violates {instr} required alignment of {alignment} bytes"
    )]
    Misaligned {
        lane: u32,
        offset: u32,
        instr: String,
        alignment: u32,
    },

    #[error("swizzle splits the {len}-byte access of lane {lane} at byte {offset} into non-contiguous pieces")]
    SwizzleSplitsAccess { lane: u32, offset: u32, len: u32 },

    #[error("swizzle is not a bijection on the tile: offsets {a} and {b} both map to {image}")]
    SwizzleNotBijective { a: u32, b: u32, image: u32 },

    #[error(
        "oracle conflict relation is not an equivalence: lanes {a} and {b} conflict, lanes {b} and {c} \
         conflict, but lanes {a} and {c} do not"
    )]
    InconsistentOracle { a: u32, b: u32, c: u32 },

    #[error("no re-conflict observed within the probe horizon of {horizon} strides")]
    ProbeHorizonExhausted { horizon: u32 },

    #[error(
        "swizzle parameter space has {size} candidates, above the cap of {cap}; narrow the ranges"
    )]
    SearchSpaceTooLarge { size: u64, cap: u64 },

    #[error("grid is ragged: {0}")]
    RaggedGrid(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {reason}")]
    Parse { path: String, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
