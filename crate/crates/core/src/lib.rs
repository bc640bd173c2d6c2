//! Centroidal Voronoi tessellations of self-similar Cantor measures on the
//! line.
//!
//! The measure generated by `S1(x) = r1 x`, `S2(x) = r2 x + 1 - r2` with
//! weights `p1, p2` is cut into its `2^m` level-`m` cylinders. Every CVT with
//! `n` generators that is a union of such cylinders is found by
//! [`cvt_search::enumerate_cvts`]; [`cvt_search::find_cvts`] raises `m` until
//! one exists. [`oracle`] holds independent checks and [`generalized`]
//! handles level-dependent alphabets.

pub mod cli;
pub mod cvt_search;
pub mod error;
pub mod generalized;
pub mod ifs_model;
pub mod oracle;
pub mod scalar;

pub use cvt_search::{
    best_cvt, enumerate_cvts, find_cvts, gap_condition, lift_partition, reflect_partition,
    BlockPartition, CvtResult, FoundCvts, SearchConfig,
};
pub use error::{CvtError, Result};
pub use generalized::{
    build_table_generalized, find_cvts_generalized, tail_moments, GeneralizedIfsSpec, TailMoments,
};
pub use ifs_model::{ContractionMap, CylinderTable, IfsModel, Word};
pub use scalar::Scalar;
