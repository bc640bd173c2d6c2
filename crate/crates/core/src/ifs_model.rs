//! Two-map self-similar measures on `[0, 1]`.
//!
//! The measure `P = p1 P∘S1⁻¹ + p2 P∘S2⁻¹` with `S1(x) = r1 x` and
//! `S2(x) = r2 x + (1 - r2)` is described by [`IfsModel`]. A
//! [`CylinderTable`] lists every level-`m` cylinder `J_σ = S_σ([0, 1])` in
//! spatial order together with three prefix sums, so that the conditional
//! mean and the quantization cost of any run of consecutive cylinders is an
//! O(1) query.

use crate::cvt_search::BlockPartition;
use crate::error::{CvtError, Result};
use crate::scalar::Scalar;

pub const DEFAULT_LEVEL_CAP: u32 = 26;

/// One contraction `x ↦ scale·x + offset` chosen with probability `prob`.
#[derive(Clone, Debug, PartialEq)]
pub struct ContractionMap<T> {
    pub scale: T,
    pub offset: T,
    pub prob: T,
}

impl<T: Scalar> ContractionMap<T> {
    pub fn new(scale: T, offset: T, prob: T) -> Self {
        Self {
            scale,
            offset,
            prob,
        }
    }

    pub fn apply(&self, x: &T) -> T {
        self.offset.clone() + self.scale.clone() * x.clone()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IfsModel<T> {
    r1: T,
    r2: T,
    p1: T,
    p2: T,
    mean: T,
    second_moment: T,
    variance: T,
    degenerate_gaps: bool,
}

impl<T: Scalar> IfsModel<T> {
    /// Validates the parameters and derives the moments.
    ///
    /// `r1 + r2 = 1` (touching cylinders) is only accepted when
    /// `allow_degenerate_gaps` is set.
    pub fn new(r1: T, r2: T, p1: T, allow_degenerate_gaps: bool) -> Result<Self> {
        let zero = T::zero();
        let one = T::one();
        for (name, value) in [("r1", &r1), ("r2", &r2), ("p1", &p1)] {
            if !(*value > zero && *value < one) {
                return Err(CvtError::ParamOutOfRange {
                    name,
                    value: value.to_f64(),
                });
            }
        }
        let sum = r1.clone() + r2.clone();
        if sum > one || (sum == one && !allow_degenerate_gaps) {
            return Err(CvtError::OverlappingCylinders { sum: sum.to_f64() });
        }
        let p2 = one - p1.clone();
        let mean = mean_formula(&r1, &r2, &p1, &p2);
        let second_moment = second_moment_formula(&r1, &r2, &p1, &p2);
        let variance = second_moment.clone() - mean.square();
        Ok(Self {
            r1,
            r2,
            p1,
            p2,
            mean,
            second_moment,
            variance,
            degenerate_gaps: sum == T::one(),
        })
    }

    /// Symmetric family `r1 = r2 = r`, `p1 = p2 = 1/2`.
    pub fn symmetric(r: T, allow_degenerate_gaps: bool) -> Result<Self> {
        Self::new(r.clone(), r, T::half(), allow_degenerate_gaps)
    }

    pub fn r1(&self) -> &T {
        &self.r1
    }

    pub fn r2(&self) -> &T {
        &self.r2
    }

    pub fn p1(&self) -> &T {
        &self.p1
    }

    pub fn p2(&self) -> &T {
        &self.p2
    }

    pub fn expectation(&self) -> &T {
        &self.mean
    }

    pub fn second_moment(&self) -> &T {
        &self.second_moment
    }

    pub fn variance(&self) -> &T {
        &self.variance
    }

    /// True when `r1 + r2 = 1`, i.e. neighbouring cylinders touch.
    pub fn has_degenerate_gaps(&self) -> bool {
        self.degenerate_gaps
    }

    pub fn is_reflection_symmetric(&self) -> bool {
        self.r1 == self.r2 && self.p1 == self.p2
    }

    /// `S1` and `S2` in spatial order.
    pub fn maps(&self) -> [ContractionMap<T>; 2] {
        [
            ContractionMap::new(self.r1.clone(), T::zero(), self.p1.clone()),
            ContractionMap::new(self.r2.clone(), T::one() - self.r2.clone(), self.p2.clone()),
        ]
    }

    /// Geometry of the cylinder `J_σ`.
    pub fn cylinder(&self, word: &Word) -> Cylinder<T> {
        let maps = self.maps();
        let cell = word.digits().iter().fold(Cell::unit(), |cell, &d| {
            cell.compose(&maps[usize::from(d - 1)])
        });
        Cylinder {
            left: cell.offset.clone(),
            right: cell.offset.clone() + cell.scale.clone(),
            centroid: cell.offset.clone() + cell.scale.clone() * self.mean.clone(),
            scale: cell.scale,
            weight: cell.weight,
        }
    }

    pub fn build_table(&self, level: u32) -> Result<CylinderTable<T>> {
        self.build_table_with_cap(level, DEFAULT_LEVEL_CAP)
    }

    pub fn build_table_with_cap(&self, level: u32, cap: u32) -> Result<CylinderTable<T>> {
        if level == 0 || level > cap || level >= usize::BITS {
            return Err(CvtError::LevelTooLarge { level, cap });
        }
        let maps = self.maps();
        let mut cells = vec![Cell::unit()];
        for _ in 0..level {
            cells = expand_cells(&cells, &maps);
        }
        Ok(CylinderTable::from_cells(
            level,
            &cells,
            &self.mean,
            &self.variance,
            self.is_reflection_symmetric(),
        ))
    }
}

/// `E(X) = p2 (1 - r2) / (1 - p1 r1 - p2 r2)`.
fn mean_formula<T: Scalar>(r1: &T, r2: &T, p1: &T, p2: &T) -> T {
    let one = T::one();
    p2.clone() * (one.clone() - r2.clone())
        / (one - p1.clone() * r1.clone() - p2.clone() * r2.clone())
}

/// `E(X²) = p2 (r2 - 1)² (1 - p1 r1 + p2 r2) / ((p1 r1 + p2 r2 - 1)(p1 r1² + p2 r2² - 1))`.
fn second_moment_formula<T: Scalar>(r1: &T, r2: &T, p1: &T, p2: &T) -> T {
    let one = T::one();
    let numerator = p2.clone()
        * (r2.clone() - one.clone()).square()
        * (one.clone() - p1.clone() * r1.clone() + p2.clone() * r2.clone());
    let mean_contraction = p1.clone() * r1.clone() + p2.clone() * r2.clone() - one.clone();
    let square_contraction = p1.clone() * r1.square() + p2.clone() * r2.square() - one;
    numerator / (mean_contraction * square_contraction)
}

pub fn validate_params<T: Scalar>(
    r1: T,
    r2: T,
    p1: T,
    allow_degenerate_gaps: bool,
) -> Result<IfsModel<T>> {
    IfsModel::new(r1, r2, p1, allow_degenerate_gaps)
}

pub fn expectation<T: Scalar>(model: &IfsModel<T>) -> T {
    model.expectation().clone()
}

pub fn second_moment<T: Scalar>(model: &IfsModel<T>) -> T {
    model.second_moment().clone()
}

pub fn variance<T: Scalar>(model: &IfsModel<T>) -> T {
    model.variance().clone()
}

/// A finite word over `{1, 2}`. Digit `1` selects `S1`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Word {
    digits: Vec<u8>,
}

impl Word {
    pub fn new(digits: Vec<u8>) -> Option<Self> {
        digits
            .iter()
            .all(|&d| d == 1 || d == 2)
            .then_some(Self { digits })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn digits(&self) -> &[u8] {
        &self.digits
    }

    pub fn len(&self) -> usize {
        self.digits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.digits.is_empty()
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut digits = self.digits.clone();
        digits.extend_from_slice(&other.digits);
        Word { digits }
    }

    /// 1-based spatial index of this word among all words of its length.
    pub fn index(&self) -> usize {
        self.digits
            .iter()
            .fold(0usize, |acc, &d| (acc << 1) | usize::from(d - 1))
            + 1
    }
}

/// The `index`-th word (1-based, spatial order) of length `level`.
pub fn word_from_index(level: u32, index: usize) -> Result<Word> {
    if level >= usize::BITS {
        return Err(CvtError::LevelTooLarge {
            level,
            cap: usize::BITS - 1,
        });
    }
    let count = 1usize << level;
    if index == 0 || index > count {
        return Err(CvtError::IndexOutOfRange { index, max: count });
    }
    let bits = index - 1;
    let digits = (0..level)
        .rev()
        .map(|shift| 1 + ((bits >> shift) & 1) as u8)
        .collect();
    Ok(Word { digits })
}

pub fn index_from_word(word: &Word) -> usize {
    word.index()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cylinder<T> {
    pub left: T,
    pub right: T,
    pub scale: T,
    pub weight: T,
    pub centroid: T,
}

pub fn cylinder<T: Scalar>(model: &IfsModel<T>, word: &Word) -> Cylinder<T> {
    model.cylinder(word)
}

/// Affine map `x ↦ offset + scale·x` together with its probability weight.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Cell<T> {
    pub offset: T,
    pub scale: T,
    pub weight: T,
}

impl<T: Scalar> Cell<T> {
    pub fn unit() -> Self {
        Self {
            offset: T::zero(),
            scale: T::one(),
            weight: T::one(),
        }
    }

    /// `self ∘ map`.
    pub fn compose(&self, map: &ContractionMap<T>) -> Self {
        Self {
            offset: self.offset.clone() + self.scale.clone() * map.offset.clone(),
            scale: self.scale.clone() * map.scale.clone(),
            weight: self.weight.clone() * map.prob.clone(),
        }
    }
}

/// Refines every cell by one level, keeping spatial order.
pub(crate) fn expand_cells<T: Scalar>(
    cells: &[Cell<T>],
    family: &[ContractionMap<T>],
) -> Vec<Cell<T>> {
    let mut next = Vec::with_capacity(cells.len() * family.len());
    for cell in cells {
        next.extend(family.iter().map(|map| cell.compose(map)));
    }
    next
}

/// Level-`m` cylinders in spatial order with prefix sums of
/// `p_σ`, `p_σ·a(σ)` and `p_σ·(s_σ²V + a(σ)²)` where `a(σ)` is the
/// cylinder's conditional mean. Indices in the public API are 1-based.
#[derive(Clone, Debug, PartialEq)]
pub struct CylinderTable<T> {
    level: u32,
    left: Vec<T>,
    right: Vec<T>,
    weight_prefix: Vec<T>,
    first_moment_prefix: Vec<T>,
    quadratic_prefix: Vec<T>,
    reflection_symmetric: bool,
}

impl<T: Scalar> CylinderTable<T> {
    pub(crate) fn from_cells(
        level: u32,
        cells: &[Cell<T>],
        tail_mean: &T,
        tail_variance: &T,
        reflection_symmetric: bool,
    ) -> Self {
        let len = cells.len();
        let mut left = Vec::with_capacity(len);
        let mut right = Vec::with_capacity(len);
        let mut weight_prefix = Vec::with_capacity(len + 1);
        let mut first_moment_prefix = Vec::with_capacity(len + 1);
        let mut quadratic_prefix = Vec::with_capacity(len + 1);
        let (mut a, mut b, mut c) = (T::zero(), T::zero(), T::zero());
        weight_prefix.push(a.clone());
        first_moment_prefix.push(b.clone());
        quadratic_prefix.push(c.clone());
        for cell in cells {
            let centroid = cell.offset.clone() + cell.scale.clone() * tail_mean.clone();
            let spread = cell.scale.square() * tail_variance.clone();
            a = a + cell.weight.clone();
            b = b + cell.weight.clone() * centroid.clone();
            c = c + cell.weight.clone() * (spread + centroid.square());
            left.push(cell.offset.clone());
            right.push(cell.offset.clone() + cell.scale.clone());
            weight_prefix.push(a.clone());
            first_moment_prefix.push(b.clone());
            quadratic_prefix.push(c.clone());
        }
        Self {
            level,
            left,
            right,
            weight_prefix,
            first_moment_prefix,
            quadratic_prefix,
            reflection_symmetric,
        }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Number of cylinders.
    pub fn len(&self) -> usize {
        self.left.len()
    }

    pub fn is_empty(&self) -> bool {
        self.left.is_empty()
    }

    pub fn is_reflection_symmetric(&self) -> bool {
        self.reflection_symmetric
    }

    /// `S_i(0)`.
    pub fn left(&self, index: usize) -> Result<&T> {
        self.check_index(index)?;
        Ok(&self.left[index - 1])
    }

    /// `S_i(1)`.
    pub fn right(&self, index: usize) -> Result<&T> {
        self.check_index(index)?;
        Ok(&self.right[index - 1])
    }

    pub fn lefts(&self) -> &[T] {
        &self.left
    }

    pub fn rights(&self) -> &[T] {
        &self.right
    }

    /// `P(J_i ∪ … ∪ J_j)`.
    pub fn block_weight(&self, i: usize, j: usize) -> Result<T> {
        self.check_block(i, j)?;
        Ok(self.weight_unchecked(i, j))
    }

    pub fn block_first_moment(&self, i: usize, j: usize) -> Result<T> {
        self.check_block(i, j)?;
        Ok(self.first_moment_unchecked(i, j))
    }

    pub fn block_quadratic(&self, i: usize, j: usize) -> Result<T> {
        self.check_block(i, j)?;
        Ok(self.quadratic_unchecked(i, j))
    }

    /// `a[i, j] = E(X | X ∈ J_i ∪ … ∪ J_j)`.
    pub fn block_centroid(&self, i: usize, j: usize) -> Result<T> {
        self.check_block(i, j)?;
        Ok(self.centroid_unchecked(i, j))
    }

    /// `∫_{J_i ∪ … ∪ J_j} (x - x0)² dP`.
    pub fn block_distortion(&self, i: usize, j: usize, x0: &T) -> Result<T> {
        self.check_block(i, j)?;
        let two = T::from_int(2);
        Ok(
            self.quadratic_unchecked(i, j) - two * x0.clone() * self.first_moment_unchecked(i, j)
                + x0.square() * self.weight_unchecked(i, j),
        )
    }

    /// Total distortion of the block partition with every block quantized to
    /// its own centroid.
    pub fn partition_distortion(&self, partition: &BlockPartition) -> Result<T> {
        self.check_partition(partition)?;
        Ok(partition
            .blocks()
            .map(|(i, j)| self.centroid_cost_unchecked(i, j))
            .fold(T::zero(), |acc, x| acc + x))
    }

    pub(crate) fn check_partition(&self, partition: &BlockPartition) -> Result<()> {
        if partition.cells() != self.len() {
            return Err(CvtError::PartitionMismatch {
                cells: self.len(),
                reason: format!("partition covers {} cells", partition.cells()),
            });
        }
        Ok(())
    }

    fn check_index(&self, index: usize) -> Result<()> {
        if index == 0 || index > self.len() {
            return Err(CvtError::IndexOutOfRange {
                index,
                max: self.len(),
            });
        }
        Ok(())
    }

    fn check_block(&self, i: usize, j: usize) -> Result<()> {
        self.check_index(i)?;
        self.check_index(j)?;
        if i > j {
            return Err(CvtError::IndexOutOfRange { index: i, max: j });
        }
        Ok(())
    }

    pub(crate) fn weight_unchecked(&self, i: usize, j: usize) -> T {
        self.weight_prefix[j].clone() - self.weight_prefix[i - 1].clone()
    }

    pub(crate) fn first_moment_unchecked(&self, i: usize, j: usize) -> T {
        self.first_moment_prefix[j].clone() - self.first_moment_prefix[i - 1].clone()
    }

    pub(crate) fn quadratic_unchecked(&self, i: usize, j: usize) -> T {
        self.quadratic_prefix[j].clone() - self.quadratic_prefix[i - 1].clone()
    }

    pub(crate) fn centroid_unchecked(&self, i: usize, j: usize) -> T {
        self.first_moment_unchecked(i, j) / self.weight_unchecked(i, j)
    }

    /// Block cost at the block's own centroid: `C - B²/A`.
    pub(crate) fn centroid_cost_unchecked(&self, i: usize, j: usize) -> T {
        let b = self.first_moment_unchecked(i, j);
        self.quadratic_unchecked(i, j) - b.square() / self.weight_unchecked(i, j)
    }

    pub(crate) fn left_unchecked(&self, index: usize) -> &T {
        &self.left[index - 1]
    }

    pub(crate) fn right_unchecked(&self, index: usize) -> &T {
        &self.right[index - 1]
    }
}

pub fn build_table<T: Scalar>(model: &IfsModel<T>, level: u32) -> Result<CylinderTable<T>> {
    model.build_table(level)
}

pub fn block_centroid<T: Scalar>(table: &CylinderTable<T>, i: usize, j: usize) -> Result<T> {
    table.block_centroid(i, j)
}

pub fn block_distortion<T: Scalar>(
    table: &CylinderTable<T>,
    i: usize,
    j: usize,
    x0: &T,
) -> Result<T> {
    table.block_distortion(i, j, x0)
}

pub fn partition_distortion<T: Scalar>(
    table: &CylinderTable<T>,
    partition: &BlockPartition,
) -> Result<T> {
    table.partition_distortion(partition)
}
