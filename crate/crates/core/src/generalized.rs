//! Cantor-like measures whose alphabet and maps change from level to level.
//!
//! Level `k` (1-based) uses its own ordered family of contractions. The
//! sequence of families is eventually periodic: a finite preamble followed by
//! a period repeated forever, which makes the moments of every tail measure
//! the solution of a small linear fixed point.

use crate::cvt_search::{enumerate_cvts, escalate, FoundCvts, SearchConfig};
use crate::error::{CvtError, Result};
use crate::ifs_model::{
    expand_cells, Cell, ContractionMap, CylinderTable, IfsModel, DEFAULT_LEVEL_CAP,
};
use crate::scalar::Scalar;

pub type LevelFamily<T> = Vec<ContractionMap<T>>;

#[derive(Clone, Debug, PartialEq)]
pub struct GeneralizedIfsSpec<T> {
    preamble: Vec<LevelFamily<T>>,
    period: Vec<LevelFamily<T>>,
}

impl<T: Scalar> GeneralizedIfsSpec<T> {
    pub fn new(preamble: Vec<LevelFamily<T>>, period: Vec<LevelFamily<T>>) -> Result<Self> {
        if period.is_empty() {
            return Err(CvtError::SpecInvalid(
                "period must contain at least one level".into(),
            ));
        }
        for (k, family) in preamble.iter().chain(&period).enumerate() {
            validate_family(family)
                .map_err(|reason| CvtError::SpecInvalid(format!("level {}: {reason}", k + 1)))?;
        }
        Ok(Self { preamble, period })
    }

    /// The same family at every level.
    pub fn constant(family: LevelFamily<T>) -> Result<Self> {
        Self::new(Vec::new(), vec![family])
    }

    /// The two-map measure of `model` as a constant sequence.
    pub fn from_model(model: &IfsModel<T>) -> Result<Self> {
        Self::constant(model.maps().to_vec())
    }

    pub fn preamble(&self) -> &[LevelFamily<T>] {
        &self.preamble
    }

    pub fn period(&self) -> &[LevelFamily<T>] {
        &self.period
    }

    /// Family used at level `k ≥ 1`.
    pub fn family(&self, k: usize) -> &LevelFamily<T> {
        assert!(k >= 1, "levels are 1-based");
        if k <= self.preamble.len() {
            &self.preamble[k - 1]
        } else {
            &self.period[(k - 1 - self.preamble.len()) % self.period.len()]
        }
    }

    /// `N_m = n_1 ⋯ n_m`, or `None` on overflow.
    pub fn cell_count(&self, level: u32) -> Option<usize> {
        (1..=level as usize).try_fold(1usize, |acc, k| acc.checked_mul(self.family(k).len()))
    }

    /// Every level is symmetric under `x ↦ 1 - x` with matching weights.
    pub fn is_reflection_symmetric(&self) -> bool {
        self.preamble.iter().chain(&self.period).all(|family| {
            family.iter().zip(family.iter().rev()).all(|(a, b)| {
                a.scale == b.scale
                    && a.prob == b.prob
                    && a.offset.clone() + a.scale.clone() + b.offset.clone() == T::one()
            })
        })
    }
}

fn validate_family<T: Scalar>(family: &[ContractionMap<T>]) -> std::result::Result<(), String> {
    let (zero, one) = (T::zero(), T::one());
    if family.len() < 2 {
        return Err(format!("needs at least two maps, found {}", family.len()));
    }
    let mut prob_sum = T::zero();
    let mut scale_sum = T::zero();
    for (j, map) in family.iter().enumerate() {
        if !(map.prob > zero && map.prob < one) {
            return Err(format!(
                "map {} has probability {} outside (0, 1)",
                j + 1,
                map.prob
            ));
        }
        if !(map.scale > zero && map.scale < one) {
            return Err(format!(
                "map {} has scale {} outside (0, 1)",
                j + 1,
                map.scale
            ));
        }
        let right = map.offset.clone() + map.scale.clone();
        if map.offset < zero || right > one {
            return Err(format!("map {} sends [0, 1] outside [0, 1]", j + 1));
        }
        prob_sum = prob_sum + map.prob.clone();
        scale_sum = scale_sum + map.scale.clone();
    }
    for (j, pair) in family.windows(2).enumerate() {
        if pair[0].offset.clone() + pair[0].scale.clone() > pair[1].offset {
            return Err(format!(
                "images of maps {} and {} overlap or are out of order",
                j + 1,
                j + 2
            ));
        }
    }
    if (prob_sum.clone() - one.clone()).abs() > T::tie_tolerance() {
        return Err(format!("probabilities sum to {prob_sum}"));
    }
    if scale_sum >= one {
        return Err(format!("scales sum to {scale_sum}, not below 1"));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Moments<T> {
    pub mean: T,
    pub second_moment: T,
    pub variance: T,
}

impl<T: Scalar> Moments<T> {
    fn new(mean: T, second_moment: T) -> Self {
        let variance = second_moment.clone() - mean.square();
        Self {
            mean,
            second_moment,
            variance,
        }
    }
}

/// Moments of the tail measure generated by levels `k+1, k+2, …`, for every
/// depth `k`: preamble depths `0..P` then one period's worth of depths.
#[derive(Clone, Debug, PartialEq)]
pub struct TailMoments<T> {
    pub preamble: Vec<Moments<T>>,
    pub period: Vec<Moments<T>>,
}

impl<T: Scalar> TailMoments<T> {
    pub fn at_depth(&self, depth: usize) -> &Moments<T> {
        if depth < self.preamble.len() {
            &self.preamble[depth]
        } else {
            &self.period[(depth - self.preamble.len()) % self.period.len()]
        }
    }
}

/// Affine action of one level on `(E, E(X²))` of the next tail:
/// `E' = e_scale·E + e_shift`, `M' = m_scale·M + m_cross·E + m_shift`.
#[derive(Clone, Debug)]
struct MomentMap<T> {
    e_scale: T,
    e_shift: T,
    m_scale: T,
    m_cross: T,
    m_shift: T,
}

impl<T: Scalar> MomentMap<T> {
    fn identity() -> Self {
        Self {
            e_scale: T::one(),
            e_shift: T::zero(),
            m_scale: T::one(),
            m_cross: T::zero(),
            m_shift: T::zero(),
        }
    }

    fn of_family(family: &[ContractionMap<T>]) -> Self {
        let two = T::from_int(2);
        let mut map = Self {
            e_scale: T::zero(),
            e_shift: T::zero(),
            m_scale: T::zero(),
            m_cross: T::zero(),
            m_shift: T::zero(),
        };
        for m in family {
            let (c, b, p) = (m.scale.clone(), m.offset.clone(), m.prob.clone());
            map.e_scale = map.e_scale + p.clone() * c.clone();
            map.e_shift = map.e_shift + p.clone() * b.clone();
            map.m_scale = map.m_scale + p.clone() * c.square();
            map.m_cross = map.m_cross + p.clone() * two.clone() * c * b.clone();
            map.m_shift = map.m_shift + p * b.square();
        }
        map
    }

    fn apply(&self, e: &T, m: &T) -> (T, T) {
        (
            self.e_scale.clone() * e.clone() + self.e_shift.clone(),
            self.m_scale.clone() * m.clone()
                + self.m_cross.clone() * e.clone()
                + self.m_shift.clone(),
        )
    }

    /// `self ∘ inner`.
    fn compose(&self, inner: &Self) -> Self {
        Self {
            e_scale: self.e_scale.clone() * inner.e_scale.clone(),
            e_shift: self.e_scale.clone() * inner.e_shift.clone() + self.e_shift.clone(),
            m_scale: self.m_scale.clone() * inner.m_scale.clone(),
            m_cross: self.m_scale.clone() * inner.m_cross.clone()
                + self.m_cross.clone() * inner.e_scale.clone(),
            m_shift: self.m_scale.clone() * inner.m_shift.clone()
                + self.m_cross.clone() * inner.e_shift.clone()
                + self.m_shift.clone(),
        }
    }

    /// Unique fixed point; both scales are below 1 for a valid spec.
    fn fixed_point(&self) -> (T, T) {
        let one = T::one();
        let e = self.e_shift.clone() / (one.clone() - self.e_scale.clone());
        let m = (self.m_cross.clone() * e.clone() + self.m_shift.clone())
            / (one - self.m_scale.clone());
        (e, m)
    }
}

pub fn tail_moments<T: Scalar>(spec: &GeneralizedIfsSpec<T>) -> TailMoments<T> {
    let period_maps: Vec<MomentMap<T>> = spec
        .period
        .iter()
        .map(|f| MomentMap::of_family(f))
        .collect();
    let whole_period = period_maps
        .iter()
        .fold(MomentMap::identity(), |acc, level| acc.compose(level));
    let (e0, m0) = whole_period.fixed_point();

    // depth P + t for t = Q-1 down to 1, from depth P + Q ≡ P
    let q = period_maps.len();
    let mut period = vec![Moments::new(e0.clone(), m0.clone()); q];
    let (mut e, mut m) = (e0.clone(), m0.clone());
    for t in (1..q).rev() {
        (e, m) = period_maps[t].apply(&e, &m);
        period[t] = Moments::new(e.clone(), m.clone());
    }

    let mut preamble = Vec::with_capacity(spec.preamble.len());
    let (mut e, mut m) = (e0, m0);
    for family in spec.preamble.iter().rev() {
        (e, m) = MomentMap::of_family(family).apply(&e, &m);
        preamble.push(Moments::new(e.clone(), m.clone()));
    }
    preamble.reverse();
    TailMoments { preamble, period }
}

pub(crate) fn build_cells<T: Scalar>(
    spec: &GeneralizedIfsSpec<T>,
    level: u32,
    cell_cap: usize,
) -> Result<Vec<Cell<T>>> {
    let cap_level = cell_cap.ilog2();
    match spec.cell_count(level) {
        Some(count) if level >= 1 && count <= cell_cap => {}
        _ => {
            return Err(CvtError::LevelTooLarge {
                level,
                cap: cap_level,
            })
        }
    }
    let mut cells = vec![Cell::unit()];
    for k in 1..=level as usize {
        cells = expand_cells(&cells, spec.family(k));
    }
    Ok(cells)
}

pub fn build_table_generalized<T: Scalar>(
    spec: &GeneralizedIfsSpec<T>,
    level: u32,
) -> Result<CylinderTable<T>> {
    build_table_generalized_with_cap(spec, level, 1usize << DEFAULT_LEVEL_CAP)
}

/// Mixed-radix table with at most `cell_cap` cylinders.
pub fn build_table_generalized_with_cap<T: Scalar>(
    spec: &GeneralizedIfsSpec<T>,
    level: u32,
    cell_cap: usize,
) -> Result<CylinderTable<T>> {
    let cells = build_cells(spec, level, cell_cap)?;
    let tails = tail_moments(spec);
    let tail = tails.at_depth(level as usize);
    Ok(CylinderTable::from_cells(
        level,
        &cells,
        &tail.mean,
        &tail.variance,
        spec.is_reflection_symmetric(),
    ))
}

pub fn enumerate_cvts_generalized<T: Scalar>(
    spec: &GeneralizedIfsSpec<T>,
    level: u32,
    n: usize,
    config: &SearchConfig,
) -> Result<Vec<crate::cvt_search::CvtResult<T>>> {
    let table = build_table_generalized_with_cap(spec, level, cell_cap(config))?;
    enumerate_cvts(&table, n, config)
}

pub fn find_cvts_generalized<T: Scalar>(
    spec: &GeneralizedIfsSpec<T>,
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
    let min_level = (1..=config.m_max.max(1))
        .find(|&m| spec.cell_count(m).is_none_or(|count| count >= n))
        .unwrap_or(config.m_max.max(1));
    let cap = cell_cap(config);
    escalate(n, config, min_level, |level| {
        build_table_generalized_with_cap(spec, level, cap)
    })
}

fn cell_cap(config: &SearchConfig) -> usize {
    1usize << config.level_cap.min(usize::BITS - 2)
}
