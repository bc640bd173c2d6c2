use thiserror::Error;

/// Errors raised by model construction, table building and the CVT search.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CvtError {
    #[error("parameter {name} = {value} is outside the open interval (0, 1)")]
    ParamOutOfRange { name: &'static str, value: f64 },

    #[error("contraction ratios sum to {sum}; cylinders overlap (a sum of exactly 1 needs the degenerate-gap flag)")]
    OverlappingCylinders { sum: f64 },

    #[error("index {index} outside 1..={max}")]
    IndexOutOfRange { index: usize, max: usize },

    #[error("level {level} outside the supported range 1..={cap}")]
    LevelTooLarge { level: u32, cap: u32 },

    #[error("partition does not tile 1..={cells}: {reason}")]
    PartitionMismatch { cells: usize, reason: String },

    #[error("{n} generators requested but level {level} only has {cells} cylinders")]
    NTooLarge { n: usize, level: u32, cells: usize },

    #[error("symmetry pruning requested for a measure that is not reflection symmetric")]
    SymmetryPruningInvalid,

    #[error("no CVT found up to level {last_level}")]
    NoCvtFoundUpToMMax { last_level: u32 },

    #[error("empty result list")]
    EmptyList,

    #[error("Lloyd iteration left cell {index} without atoms")]
    EmptyCell { index: usize },

    #[error("invalid generalized specification: {0}")]
    SpecInvalid(String),

    #[error("invalid search configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, CvtError>;
