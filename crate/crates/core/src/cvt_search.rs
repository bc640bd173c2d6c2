//! Enumeration of centroidal Voronoi tessellations at a fixed level.
//!
//! A candidate tessellation is a partition of the cylinders `1..=N` into `n`
//! runs of consecutive indices. It is a CVT when, at every boundary, the
//! midpoint of the two neighbouring block centroids falls in the closed gap
//! between the last cylinder of the left block and the first cylinder of the
//! right block.
//!
//! The search fixes boundaries left to right. Once the previous block's
//! centroid is known, the midpoint at the current boundary is strictly
//! increasing in the end of the next block, so the admissible ends form an
//! interval that is located by two binary searches instead of a scan.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CvtError, Result};
use crate::ifs_model::{CylinderTable, IfsModel, DEFAULT_LEVEL_CAP};
use crate::scalar::Scalar;

/// `n` contiguous blocks tiling `1..=cells`. Block `ℓ` is
/// `[i_ℓ + 1, i_{ℓ+1}]` with `i_0 = 0` and `i_n = cells`; only the interior
/// boundaries `i_1 < … < i_{n-1}` are stored.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BlockPartition {
    level: u32,
    cells: usize,
    boundaries: Vec<usize>,
}

impl BlockPartition {
    pub fn new(level: u32, cells: usize, boundaries: Vec<usize>) -> Result<Self> {
        if cells == 0 {
            return Err(CvtError::PartitionMismatch {
                cells,
                reason: "no cells".into(),
            });
        }
        let mut previous = 0;
        for &b in &boundaries {
            if b <= previous || b >= cells {
                return Err(CvtError::PartitionMismatch {
                    cells,
                    reason: format!(
                        "boundaries {boundaries:?} are not strictly increasing inside 1..{cells}"
                    ),
                });
            }
            previous = b;
        }
        Ok(Self {
            level,
            cells,
            boundaries,
        })
    }

    /// The single block `[1, cells]`.
    pub fn whole(level: u32, cells: usize) -> Self {
        Self {
            level,
            cells,
            boundaries: Vec::new(),
        }
    }

    /// Builds a partition from 1-based inclusive `(first, last)` blocks.
    pub fn from_blocks(level: u32, cells: usize, blocks: &[(usize, usize)]) -> Result<Self> {
        let mismatch = |reason: String| CvtError::PartitionMismatch { cells, reason };
        let mut expected = 1;
        for &(first, last) in blocks {
            if first != expected || last < first {
                return Err(mismatch(format!(
                    "block [{first}, {last}] does not start at {expected}"
                )));
            }
            expected = last + 1;
        }
        if expected != cells + 1 {
            return Err(mismatch(format!("blocks end at {}", expected - 1)));
        }
        let boundaries = blocks[..blocks.len() - 1]
            .iter()
            .map(|&(_, last)| last)
            .collect();
        Self::new(level, cells, boundaries)
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    /// Number of blocks.
    pub fn len(&self) -> usize {
        self.boundaries.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// 1-based inclusive `(first, last)` pairs.
    pub fn blocks(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let starts = std::iter::once(0).chain(self.boundaries.iter().copied());
        let ends = self
            .boundaries
            .iter()
            .copied()
            .chain(std::iter::once(self.cells));
        starts.zip(ends).map(|(s, e)| (s + 1, e))
    }

    pub fn block_list(&self) -> Vec<(usize, usize)> {
        self.blocks().collect()
    }

    /// Mirror image under `x ↦ 1 - x`: boundary `i ↦ cells - i`.
    pub fn reflect(&self) -> Self {
        Self {
            level: self.level,
            cells: self.cells,
            boundaries: self
                .boundaries
                .iter()
                .rev()
                .map(|&b| self.cells - b)
                .collect(),
        }
    }

    /// The same partition expressed at level `level + extra_levels` of a
    /// two-map measure: every cylinder splits into `2^extra_levels` children.
    pub fn lift(&self, extra_levels: u32) -> Result<Self> {
        lift_partition(self, extra_levels, DEFAULT_LEVEL_CAP)
    }

    /// Refines every cell into `factor` consecutive children.
    pub fn refine(&self, level: u32, factor: usize) -> Self {
        Self {
            level,
            cells: self.cells * factor,
            boundaries: self.boundaries.iter().map(|&b| b * factor).collect(),
        }
    }
}

pub fn lift_partition(
    partition: &BlockPartition,
    extra_levels: u32,
    cap: u32,
) -> Result<BlockPartition> {
    let level = partition.level + extra_levels;
    if level > cap || level >= usize::BITS {
        return Err(CvtError::LevelTooLarge { level, cap });
    }
    Ok(partition.refine(level, 1usize << extra_levels))
}

pub fn reflect_partition(partition: &BlockPartition) -> BlockPartition {
    partition.reflect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvtResult<T> {
    pub partition: BlockPartition,
    /// Block centroids `a[i_ℓ + 1, i_{ℓ+1}]`, increasing.
    pub centroids: Vec<T>,
    pub distortion: T,
    /// Voronoi boundaries `(c_ℓ + c_{ℓ+1}) / 2`.
    pub boundary_points: Vec<T>,
}

impl<T: Scalar> CvtResult<T> {
    /// Evaluates a partition on a table without checking the gap condition.
    pub fn evaluate(table: &CylinderTable<T>, partition: BlockPartition) -> Result<Self> {
        table.check_partition(&partition)?;
        let centroids: Vec<T> = partition
            .blocks()
            .map(|(i, j)| table.centroid_unchecked(i, j))
            .collect();
        let distortion = partition
            .blocks()
            .map(|(i, j)| table.centroid_cost_unchecked(i, j))
            .fold(T::zero(), |acc, x| acc + x);
        let boundary_points = centroids
            .windows(2)
            .map(|w| (w[0].clone() + w[1].clone()) * T::half())
            .collect();
        Ok(Self {
            partition,
            centroids,
            distortion,
            boundary_points,
        })
    }

    pub fn centroids_f64(&self) -> Vec<f64> {
        self.centroids.iter().map(Scalar::to_f64).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Slack on the gap inequalities; `0` gives exact comparisons.
    pub tolerance: f64,
    /// Only valid for reflection-symmetric measures.
    pub symmetry_pruning: bool,
    pub m_start: u32,
    pub m_max: u32,
    /// Split the first boundary across threads.
    pub parallel: bool,
    pub level_cap: u32,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-12,
            symmetry_pruning: false,
            m_start: 1,
            m_max: 16,
            parallel: false,
            level_cap: DEFAULT_LEVEL_CAP,
        }
    }
}

impl SearchConfig {
    /// Exact comparisons, as used with the rational back-end.
    pub fn exact() -> Self {
        Self {
            tolerance: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tolerance.is_nan() || self.tolerance < 0.0 {
            return Err(CvtError::InvalidConfig(format!(
                "tolerance {} is negative",
                self.tolerance
            )));
        }
        if self.m_start < 1 || self.m_start > self.m_max || self.m_max > self.level_cap {
            return Err(CvtError::InvalidConfig(format!(
                "level range {}..={} not inside 1..={}",
                self.m_start, self.m_max, self.level_cap
            )));
        }
        Ok(())
    }
}

/// `S_b(1) - ε ≤ (c_left + c_right)/2 ≤ S_{b+1}(0) + ε`.
///
/// # Panics
///
/// If `boundary` is not in `1..table.len()`.
pub fn gap_condition<T: Scalar>(
    table: &CylinderTable<T>,
    c_left: &T,
    c_right: &T,
    boundary: usize,
    eps: &T,
) -> bool {
    assert!(
        boundary >= 1 && boundary < table.len(),
        "boundary {boundary} outside 1..{}",
        table.len()
    );
    let mid = (c_left.clone() + c_right.clone()) * T::half();
    gap_holds(table, &mid, boundary, eps)
}

fn gap_holds<T: Scalar>(table: &CylinderTable<T>, mid: &T, boundary: usize, eps: &T) -> bool {
    above_gap_start(table, mid, boundary, eps) && below_gap_end(table, mid, boundary, eps)
}

fn above_gap_start<T: Scalar>(table: &CylinderTable<T>, mid: &T, boundary: usize, eps: &T) -> bool {
    *mid >= table.right_unchecked(boundary).clone() - eps.clone()
}

fn below_gap_end<T: Scalar>(table: &CylinderTable<T>, mid: &T, boundary: usize, eps: &T) -> bool {
    *mid <= table.left_unchecked(boundary + 1).clone() + eps.clone()
}

/// True when every boundary of `partition` satisfies the gap condition.
pub fn is_cvt<T: Scalar>(table: &CylinderTable<T>, partition: &BlockPartition, eps: &T) -> bool {
    let centroids: Vec<T> = partition
        .blocks()
        .map(|(i, j)| table.centroid_unchecked(i, j))
        .collect();
    partition
        .boundaries()
        .iter()
        .zip(centroids.windows(2))
        .all(|(&b, w)| gap_condition(table, &w[0], &w[1], b, eps))
}

/// First `x` in `lo..hi` with `pred(x) == false`, assuming `pred` is true on
/// a prefix of the range; `hi` if there is none.
fn partition_point(mut lo: usize, mut hi: usize, pred: impl Fn(usize) -> bool) -> usize {
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if pred(mid) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}

struct Search<'a, T> {
    table: &'a CylinderTable<T>,
    blocks: usize,
    eps: T,
    prune_reflections: bool,
}

impl<T: Scalar> Search<'_, T> {
    fn cells(&self) -> usize {
        self.table.len()
    }

    fn midpoint(&self, previous: &T, start: usize, end: usize) -> T {
        (previous.clone() + self.table.centroid_unchecked(start, end)) * T::half()
    }

    fn starting_at(&self, first: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut boundaries = vec![first];
        let centroid = self.table.centroid_unchecked(1, first);
        self.descend(&mut boundaries, &centroid, &mut out);
        out
    }

    /// Extends `boundaries` (whose last block has centroid `previous`) by one
    /// more block.
    fn descend(&self, boundaries: &mut Vec<usize>, previous: &T, out: &mut Vec<Vec<usize>>) {
        let n = self.cells();
        let p = *boundaries.last().expect("at least one boundary");
        let next_block = boundaries.len() + 1;
        if next_block == self.blocks {
            let mid = self.midpoint(previous, p + 1, n);
            if gap_holds(self.table, &mid, p, &self.eps) && self.keeps(boundaries) {
                out.push(boundaries.clone());
            }
            return;
        }

        let lowest = p + 1;
        let mut highest = n - (self.blocks - next_block);
        if self.prune_reflections && next_block == self.blocks - 1 {
            // the last block may not be smaller than the first
            highest = highest.min(n - boundaries[0]);
        }
        if lowest > highest {
            return;
        }
        // midpoint(end) increases with `end`, so both conditions carve an interval
        let from = partition_point(lowest, highest + 1, |end| {
            !above_gap_start(
                self.table,
                &self.midpoint(previous, p + 1, end),
                p,
                &self.eps,
            )
        });
        let to = partition_point(from, highest + 1, |end| {
            below_gap_end(
                self.table,
                &self.midpoint(previous, p + 1, end),
                p,
                &self.eps,
            )
        });

        for end in from..to {
            let centroid = self.table.centroid_unchecked(p + 1, end);
            let mid = (previous.clone() + centroid.clone()) * T::half();
            if !gap_holds(self.table, &mid, p, &self.eps) {
                continue;
            }
            boundaries.push(end);
            self.descend(boundaries, &centroid, out);
            boundaries.pop();
        }
    }

    /// With reflection pruning, keep only the lexicographically smaller of a
    /// partition and its mirror image.
    fn keeps(&self, boundaries: &[usize]) -> bool {
        if !self.prune_reflections {
            return true;
        }
        let n = self.cells();
        let mirrored = boundaries.iter().rev().map(|&b| n - b);
        boundaries.iter().copied().le(mirrored)
    }
}

/// All CVTs with `n` generators at the table's level, sorted by boundary
/// vector.
pub fn enumerate_cvts<T: Scalar>(
    table: &CylinderTable<T>,
    n: usize,
    config: &SearchConfig,
) -> Result<Vec<CvtResult<T>>> {
    if config.tolerance.is_nan() || config.tolerance < 0.0 {
        return Err(CvtError::InvalidConfig(format!(
            "tolerance {} is negative",
            config.tolerance
        )));
    }
    let cells = table.len();
    if n == 0 || n > cells {
        return Err(CvtError::NTooLarge {
            n,
            level: table.level(),
            cells,
        });
    }
    if config.symmetry_pruning && !table.is_reflection_symmetric() {
        return Err(CvtError::SymmetryPruningInvalid);
    }
    if n == 1 {
        return Ok(vec![CvtResult::evaluate(
            table,
            BlockPartition::whole(table.level(), cells),
        )?]);
    }

    let search = Search {
        table,
        blocks: n,
        eps: T::from_f64(config.tolerance),
        prune_reflections: config.symmetry_pruning,
    };
    let mut last_first = cells - (n - 1);
    if config.symmetry_pruning {
        last_first = last_first.min(cells / 2);
    }
    let found: Vec<Vec<usize>> = if config.parallel {
        (1..=last_first)
            .into_par_iter()
            .map(|first| search.starting_at(first))
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    } else {
        (1..=last_first)
            .flat_map(|first| search.starting_at(first))
            .collect()
    };

    let found: BTreeSet<Vec<usize>> = if config.symmetry_pruning {
        found
            .into_iter()
            .flat_map(|b| {
                let mirrored = b.iter().rev().map(|&x| cells - x).collect();
                [b, mirrored]
            })
            .collect()
    } else {
        found.into_iter().collect()
    };

    found
        .into_iter()
        .map(|boundaries| {
            let partition = BlockPartition {
                level: table.level(),
                cells,
                boundaries,
            };
            CvtResult::evaluate(table, partition)
        })
        .collect()
}

/// Outcome of level escalation: the first level with a nonempty CVT set.
#[derive(Clone, Debug, PartialEq)]
pub struct FoundCvts<T> {
    pub level: u32,
    pub cvts: Vec<CvtResult<T>>,
}

/// Runs the level escalation loop: start at `max(config.m_start, min_level)`
/// and go up one level at a time until some level has a CVT.
pub fn escalate<T, F>(
    n: usize,
    config: &SearchConfig,
    min_level: u32,
    mut build: F,
) -> Result<FoundCvts<T>>
where
    T: Scalar,
    F: FnMut(u32) -> Result<CylinderTable<T>>,
{
    config.validate()?;
    let start = config.m_start.max(min_level);
    if start > config.m_max {
        return Err(CvtError::NoCvtFoundUpToMMax {
            last_level: config.m_max,
        });
    }
    for level in start..=config.m_max {
        let table = build(level)?;
        let cvts = enumerate_cvts(&table, n, config)?;
        if !cvts.is_empty() {
            return Ok(FoundCvts { level, cvts });
        }
    }
    Err(CvtError::NoCvtFoundUpToMMax {
        last_level: config.m_max,
    })
}

/// Smallest level with at least `n` dyadic cylinders.
pub fn min_dyadic_level(n: usize) -> u32 {
    (n.max(2) - 1).ilog2() + 1
}

pub fn find_cvts<T: Scalar>(
    model: &IfsModel<T>,
    n: usize,
    config: &SearchConfig,
) -> Result<FoundCvts<T>> {
    if n == 0 {
        return Err(CvtError::NTooLarge {
            n,
            level: 0,
            cells: 0,
        });
    }
    escalate(n, config, min_dyadic_level(n), |level| {
        model.build_table_with_cap(level, config.level_cap)
    })
}

/// Minimum-distortion result; near-ties (within the back-end's tie
/// tolerance) go to the lexicographically smallest boundary vector.
pub fn best_cvt<T: Scalar>(results: &[CvtResult<T>]) -> Result<&CvtResult<T>> {
    let minimum = results
        .iter()
        .map(|r| &r.distortion)
        .min_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal))
        .ok_or(CvtError::EmptyList)?;
    let cutoff = minimum.clone() + T::tie_tolerance();
    results
        .iter()
        .filter(|r| r.distortion <= cutoff)
        .min_by(|a, b| a.partition.boundaries().cmp(b.partition.boundaries()))
        .ok_or(CvtError::EmptyList)
}
