//! Independent cross-checks for the analytic search: discrete Lloyd
//! iteration on the level-`M` conditional means, an exact dynamic program
//! over contiguous block partitions, and truncated-sum moment estimates that
//! never use the closed-form mean.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cvt_search::BlockPartition;
use crate::error::{CvtError, Result};
use crate::generalized::{build_cells, tail_moments, GeneralizedIfsSpec};
use crate::ifs_model::{expand_cells, Cell, CylinderTable, IfsModel, DEFAULT_LEVEL_CAP};
use crate::scalar::Scalar;

pub const DEFAULT_DP_LEVEL_CAP: u32 = 12;

/// The measure collapsed onto its level-`M` cylinder means. Quantizing the
/// atoms costs exactly `within_cell_offset` less than quantizing the
/// original measure with the same block structure.
#[derive(Clone, Debug, PartialEq)]
pub struct AtomMeasure {
    pub positions: Vec<f64>,
    pub weights: Vec<f64>,
    /// `Σ_σ p_σ s_σ² V`.
    pub within_cell_offset: f64,
}

impl AtomMeasure {
    fn from_cells<T: Scalar>(cells: &[Cell<T>], mean: &T, variance: &T) -> Self {
        let mut offset = T::zero();
        let mut positions = Vec::with_capacity(cells.len());
        let mut weights = Vec::with_capacity(cells.len());
        for cell in cells {
            positions.push((cell.offset.clone() + cell.scale.clone() * mean.clone()).to_f64());
            weights.push(cell.weight.to_f64());
            offset = offset + cell.weight.clone() * cell.scale.square() * variance.clone();
        }
        Self {
            positions,
            weights,
            within_cell_offset: offset.to_f64(),
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Weighted k-means cost of contiguous atom blocks (same boundary
    /// convention as [`BlockPartition`]) plus the within-cell offset, summed
    /// directly over atoms.
    pub fn partition_cost(&self, boundaries: &[usize]) -> f64 {
        let mut start = 0;
        let mut total = self.within_cell_offset;
        for end in boundaries
            .iter()
            .copied()
            .chain(std::iter::once(self.len()))
        {
            let (mass, moment) = (start..end).fold((0.0, 0.0), |(m, s), k| {
                (m + self.weights[k], s + self.weights[k] * self.positions[k])
            });
            let centre = moment / mass;
            total += (start..end)
                .map(|k| self.weights[k] * (self.positions[k] - centre).powi(2))
                .sum::<f64>();
            start = end;
        }
        total
    }
}

pub fn discretize<T: Scalar>(model: &IfsModel<T>, level: u32) -> Result<AtomMeasure> {
    if level == 0 || level > DEFAULT_LEVEL_CAP {
        return Err(CvtError::LevelTooLarge {
            level,
            cap: DEFAULT_LEVEL_CAP,
        });
    }
    let maps = model.maps();
    let mut cells = vec![Cell::unit()];
    for _ in 0..level {
        cells = expand_cells(&cells, &maps);
    }
    Ok(AtomMeasure::from_cells(
        &cells,
        model.expectation(),
        model.variance(),
    ))
}

/// Level-`M` atoms of a level-dependent measure, centred with the tail
/// moments at depth `M`.
pub fn discretize_generalized<T: Scalar>(
    spec: &GeneralizedIfsSpec<T>,
    level: u32,
) -> Result<AtomMeasure> {
    let cells = build_cells(spec, level, 1usize << DEFAULT_LEVEL_CAP)?;
    let tails = tail_moments(spec);
    let tail = tails.at_depth(level as usize);
    Ok(AtomMeasure::from_cells(&cells, &tail.mean, &tail.variance))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LloydOutcome {
    pub centroids: Vec<f64>,
    /// Atom split points: cell `k` holds atoms `boundaries[k-1]..boundaries[k]`.
    pub boundaries: Vec<usize>,
    /// Includes the within-cell offset.
    pub cost: f64,
    pub iterations: usize,
    /// Cost after each assignment/update round.
    pub cost_history: Vec<f64>,
}

/// Nearest-centroid assignment of sorted atoms: split points between cells.
fn assign(atoms: &AtomMeasure, centroids: &[f64]) -> Result<Vec<usize>> {
    let splits: Vec<usize> = centroids
        .windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            atoms.positions.partition_point(|&x| x <= mid)
        })
        .collect();
    let mut start = 0;
    for (index, end) in splits
        .iter()
        .copied()
        .chain(std::iter::once(atoms.len()))
        .enumerate()
    {
        if end <= start {
            return Err(CvtError::EmptyCell { index });
        }
        start = end;
    }
    Ok(splits)
}

fn update(atoms: &AtomMeasure, splits: &[usize]) -> (Vec<f64>, f64) {
    let mut centroids = Vec::with_capacity(splits.len() + 1);
    let mut cost = atoms.within_cell_offset;
    let mut start = 0;
    for end in splits.iter().copied().chain(std::iter::once(atoms.len())) {
        let range = start..end;
        let mass: f64 = atoms.weights[range.clone()].iter().sum();
        let moment: f64 = range
            .clone()
            .map(|k| atoms.weights[k] * atoms.positions[k])
            .sum();
        let centre = moment / mass;
        cost += range
            .map(|k| atoms.weights[k] * (atoms.positions[k] - centre).powi(2))
            .sum::<f64>();
        centroids.push(centre);
        start = end;
    }
    (centroids, cost)
}

/// Lloyd iteration from `init` until no centroid moves by `tol` or more.
pub fn lloyd(atoms: &AtomMeasure, init: &[f64], tol: f64, max_iter: usize) -> Result<LloydOutcome> {
    if init.is_empty() || init.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CvtError::InvalidConfig(
            "Lloyd start must be strictly increasing".into(),
        ));
    }
    let mut centroids = init.to_vec();
    let mut cost_history = Vec::new();
    let mut splits = Vec::new();
    let mut iterations = 0;
    while iterations < max_iter.max(1) {
        iterations += 1;
        splits = assign(atoms, &centroids)?;
        let (next, cost) = update(atoms, &splits);
        let movement = next
            .iter()
            .zip(&centroids)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        centroids = next;
        cost_history.push(cost);
        if movement < tol {
            break;
        }
    }
    Ok(LloydOutcome {
        cost: *cost_history.last().expect("at least one round"),
        centroids,
        boundaries: splits,
        iterations,
        cost_history,
    })
}

/// Positions of the `(k + 1/2)/n` weighted quantiles, forced onto distinct
/// atoms.
pub fn quantile_init(atoms: &AtomMeasure, n: usize) -> Vec<f64> {
    let mut cumulative = 0.0;
    let mut indices = Vec::with_capacity(n);
    let mut next_atom = 0;
    for k in 0..n {
        let target = (k as f64 + 0.5) / n as f64;
        while next_atom < atoms.len() - 1 && cumulative + atoms.weights[next_atom] < target {
            cumulative += atoms.weights[next_atom];
            next_atom += 1;
        }
        let floor = indices.last().map_or(0, |&i: &usize| i + 1);
        let ceiling = atoms.len() - (n - k);
        indices.push(next_atom.clamp(floor, ceiling));
    }
    indices.into_iter().map(|i| atoms.positions[i]).collect()
}

/// Quantile start plus `restarts` random starts on distinct atoms; returns
/// the cheapest converged run (earliest on ties).
pub fn lloyd_with_restarts(
    atoms: &AtomMeasure,
    n: usize,
    restarts: usize,
    seed: u64,
    tol: f64,
    max_iter: usize,
) -> Result<LloydOutcome> {
    if n == 0 || n > atoms.len() {
        return Err(CvtError::NTooLarge {
            n,
            level: 0,
            cells: atoms.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts = vec![quantile_init(atoms, n)];
    for _ in 0..restarts {
        let mut picked = sample(&mut rng, atoms.len(), n).into_vec();
        picked.sort_unstable();
        starts.push(picked.into_iter().map(|i| atoms.positions[i]).collect());
    }
    let mut best: Option<LloydOutcome> = None;
    let mut last_error = None;
    for start in &starts {
        match lloyd(atoms, start, tol, max_iter) {
            Ok(run) => {
                if best.as_ref().is_none_or(|b| run.cost < b.cost) {
                    best = Some(run);
                }
            }
            Err(e) => last_error = Some(e),
        }
    }
    best.ok_or_else(|| last_error.unwrap_or(CvtError::EmptyList))
}

/// Exact minimum of the total distortion over all partitions of the table
/// into `n` contiguous blocks, ties going to the lexicographically smallest
/// boundary vector.
pub fn dp_optimal_blocks<T: Scalar>(
    table: &CylinderTable<T>,
    n: usize,
) -> Result<(BlockPartition, T)> {
    dp_optimal_blocks_with_cap(table, n, DEFAULT_DP_LEVEL_CAP)
}

pub fn dp_optimal_blocks_with_cap<T: Scalar>(
    table: &CylinderTable<T>,
    n: usize,
    cap: u32,
) -> Result<(BlockPartition, T)> {
    if table.level() > cap {
        return Err(CvtError::LevelTooLarge {
            level: table.level(),
            cap,
        });
    }
    let cells = table.len();
    if n == 0 || n > cells {
        return Err(CvtError::NTooLarge {
            n,
            level: table.level(),
            cells,
        });
    }
    // suffix[k][i]: cheapest split of cells i+1..=N into k blocks
    let mut suffix: Vec<Vec<Option<T>>> = vec![vec![None; cells + 1]; n + 1];
    for (i, slot) in suffix[1].iter_mut().take(cells).enumerate() {
        *slot = Some(table.centroid_cost_unchecked(i + 1, cells));
    }
    for k in 2..=n {
        let (done, todo) = suffix.split_at_mut(k);
        let (prev, current) = (&done[k - 1], &mut todo[0]);
        for (i, slot) in current.iter_mut().take(cells - k + 1).enumerate() {
            let mut best: Option<T> = None;
            for (j, rest) in prev.iter().enumerate().take(cells - k + 2).skip(i + 1) {
                let Some(rest) = rest else { continue };
                let candidate = table.centroid_cost_unchecked(i + 1, j) + rest.clone();
                if best.as_ref().is_none_or(|b| candidate < *b) {
                    best = Some(candidate);
                }
            }
            *slot = best;
        }
    }
    let total = suffix[n][0].clone().expect("n <= cells");

    let tie = T::tie_tolerance();
    let mut boundaries = Vec::with_capacity(n - 1);
    let mut i = 0;
    for k in (2..=n).rev() {
        let target = suffix[k][i].clone().expect("reachable state");
        let j = (i + 1..=cells - k + 1)
            .find(|&j| {
                suffix[k - 1][j].as_ref().is_some_and(|rest| {
                    table.centroid_cost_unchecked(i + 1, j) + rest.clone()
                        <= target.clone() + tie.clone()
                })
            })
            .expect("optimum is attained");
        boundaries.push(j);
        i = j;
    }
    Ok((
        BlockPartition::new(table.level(), cells, boundaries)?,
        total,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncatedMoments {
    pub mean: f64,
    pub second_moment: f64,
    pub variance: f64,
}

/// Moments of the measure that puts mass `p_σ` at the midpoint of every
/// level-`M` cylinder. Needs only the maps, never the closed-form mean;
/// the mean is off by at most `max_σ s_σ / 2`.
pub fn moments_by_truncation<T: Scalar>(
    model: &IfsModel<T>,
    level: u32,
) -> Result<TruncatedMoments> {
    if level > DEFAULT_LEVEL_CAP {
        return Err(CvtError::LevelTooLarge {
            level,
            cap: DEFAULT_LEVEL_CAP,
        });
    }
    let [s1, s2] = model.maps();
    let family = [
        (s1.scale.to_f64(), s1.offset.to_f64(), s1.prob.to_f64()),
        (s2.scale.to_f64(), s2.offset.to_f64(), s2.prob.to_f64()),
    ];
    Ok(truncated_midpoint_moments(level as usize, |_| &family[..]))
}

/// Mixed-radix version of [`moments_by_truncation`] for level-dependent
/// measures, truncated at `depth` levels.
pub fn generalized_moments_by_truncation<T: Scalar>(
    spec: &GeneralizedIfsSpec<T>,
    depth: usize,
) -> TruncatedMoments {
    let families: Vec<Vec<(f64, f64, f64)>> = (1..=depth)
        .map(|k| {
            spec.family(k)
                .iter()
                .map(|m| (m.scale.to_f64(), m.offset.to_f64(), m.prob.to_f64()))
                .collect()
        })
        .collect();
    truncated_midpoint_moments(depth, |k| &families[k][..])
}

/// Depth-first walk over all words of length `depth`, with an explicit stack.
/// `family(k)` gives the `(scale, offset, prob)` maps applied at depth `k`
/// (0-based).
fn truncated_midpoint_moments<'a>(
    depth: usize,
    family: impl Fn(usize) -> &'a [(f64, f64, f64)],
) -> TruncatedMoments {
    let mut mean = 0.0;
    let mut second = 0.0;
    // (depth, offset, scale, weight)
    let mut stack = vec![(0usize, 0.0f64, 1.0f64, 1.0f64)];
    while let Some((k, offset, scale, weight)) = stack.pop() {
        if k == depth {
            let mid = offset + 0.5 * scale;
            mean += weight * mid;
            second += weight * mid * mid;
            continue;
        }
        for &(c, b, p) in family(k).iter().rev() {
            stack.push((k + 1, offset + scale * b, scale * c, weight * p));
        }
    }
    TruncatedMoments {
        mean,
        second_moment: second,
        variance: second - mean * mean,
    }
}
