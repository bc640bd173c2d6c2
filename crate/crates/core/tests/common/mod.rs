//! Published worked examples and the checks built on them. Shared by the
//! acceptance runner and the ordinary test targets.

#![allow(dead_code, clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

use std::time::{Duration, Instant};

use cantor_cvt::cli::{execute, Command, RunManifest, SweepGrid};
use cantor_cvt::cvt_search::{
    best_cvt, enumerate_cvts, find_cvts, is_cvt, CvtResult, SearchConfig,
};
use cantor_cvt::generalized::{build_table_generalized, tail_moments, GeneralizedIfsSpec};
use cantor_cvt::ifs_model::{ContractionMap, IfsModel};
use cantor_cvt::oracle::{discretize, dp_optimal_blocks, lloyd, moments_by_truncation};
use cantor_cvt::Scalar;
use num_rational::BigRational;

pub type Blocks = Vec<(usize, usize)>;
pub type Check = Result<String, String>;
pub type LevelRows = Vec<(u32, Vec<(Blocks, [f64; 3], f64)>)>;
pub type AsymmetricRows = Vec<(usize, u32, Vec<(Vec<f64>, f64)>)>;

pub fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

/// Rounds to six significant digits, the precision of the printed tables.
pub fn sig6(x: f64) -> f64 {
    format!("{x:.5e}").parse().unwrap()
}

pub fn matches6(x: f64, printed: f64) -> bool {
    (sig6(x) - printed).abs() <= 1e-9 * printed.abs().max(1e-300)
}

pub fn blocks<T>(results: &[CvtResult<T>]) -> Vec<Blocks> {
    results.iter().map(|r| r.partition.block_list()).collect()
}

fn within(started: Instant, budget: Duration) -> Result<Duration, String> {
    let elapsed = started.elapsed();
    ensure!(elapsed <= budget, "took {elapsed:?}, budget {budget:?}");
    Ok(elapsed)
}

pub fn symmetric(r: BigRational) -> IfsModel<BigRational> {
    IfsModel::symmetric(r, false).unwrap()
}

pub fn asymmetric() -> IfsModel<BigRational> {
    IfsModel::new(q(1, 4), q(1, 2), q(1, 4), false).unwrap()
}

pub fn to_f64(model: &IfsModel<BigRational>) -> IfsModel<f64> {
    IfsModel::new(
        model.r1().to_f64(),
        model.r2().to_f64(),
        model.p1().to_f64(),
        false,
    )
    .unwrap()
}

pub fn cvts<T: Scalar>(model: &IfsModel<T>, n: usize, m: u32) -> Vec<CvtResult<T>> {
    let config = if T::is_exact() {
        SearchConfig::exact()
    } else {
        SearchConfig::default()
    };
    enumerate_cvts(&model.build_table(m).unwrap(), n, &config).unwrap()
}

fn check_centroids6(result: &CvtResult<BigRational>, printed: &[f64]) -> Result<(), String> {
    let got = result.centroids_f64();
    ensure!(
        got.len() == printed.len() && got.iter().zip(printed).all(|(g, p)| matches6(*g, *p)),
        "centroids {got:?} do not round to {printed:?}"
    );
    Ok(())
}

/// (n, m, block lists) for the classical Cantor measure.
pub fn cantor_tables() -> Vec<(usize, u32, Vec<Blocks>)> {
    vec![
        (
            3,
            2,
            vec![vec![(1, 1), (2, 2), (3, 4)], vec![(1, 2), (3, 3), (4, 4)]],
        ),
        (
            3,
            3,
            vec![vec![(1, 2), (3, 4), (5, 8)], vec![(1, 4), (5, 6), (7, 8)]],
        ),
        (
            3,
            4,
            vec![
                vec![(1, 4), (5, 8), (9, 16)],
                vec![(1, 8), (9, 12), (13, 16)],
            ],
        ),
        (
            3,
            5,
            vec![
                vec![(1, 8), (9, 16), (17, 32)],
                vec![(1, 15), (16, 17), (18, 32)],
                vec![(1, 16), (17, 24), (25, 32)],
            ],
        ),
        (4, 2, vec![vec![(1, 1), (2, 2), (3, 3), (4, 4)]]),
        (
            4,
            3,
            vec![
                vec![(1, 1), (2, 2), (3, 4), (5, 8)],
                vec![(1, 2), (3, 3), (4, 4), (5, 8)],
                vec![(1, 2), (3, 4), (5, 6), (7, 8)],
                vec![(1, 4), (5, 5), (6, 6), (7, 8)],
                vec![(1, 4), (5, 6), (7, 7), (8, 8)],
            ],
        ),
        (
            4,
            4,
            vec![
                vec![(1, 2), (3, 4), (5, 8), (9, 16)],
                vec![(1, 4), (5, 6), (7, 8), (9, 16)],
                vec![(1, 4), (5, 8), (9, 12), (13, 16)],
                vec![(1, 8), (9, 10), (11, 12), (13, 16)],
                vec![(1, 8), (9, 12), (13, 14), (15, 16)],
            ],
        ),
        (
            4,
            5,
            vec![
                vec![(1, 4), (5, 8), (9, 16), (17, 32)],
                vec![(1, 8), (9, 12), (13, 16), (17, 32)],
                vec![(1, 8), (9, 16), (17, 24), (25, 32)],
                vec![(1, 16), (17, 20), (21, 24), (25, 32)],
                vec![(1, 16), (17, 24), (25, 28), (29, 32)],
            ],
        ),
    ]
}

/// (blocks, centroids, distortion) per level for r = 0.4375.
pub fn r4375_tables() -> LevelRows {
    let left = [0.0957031, 0.341797, 0.78125];
    let right = [0.21875, 0.658203, 0.904297];
    let middle = [0.15979, 0.5, 0.84021];
    vec![
        (
            2,
            vec![
                (vec![(1, 1), (2, 2), (3, 4)], left, 0.0111543),
                (vec![(1, 2), (3, 3), (4, 4)], right, 0.0111543),
            ],
        ),
        (
            3,
            vec![
                (vec![(1, 2), (3, 4), (5, 8)], left, 0.0111543),
                (vec![(1, 3), (4, 5), (6, 8)], middle, 0.011019),
                (vec![(1, 4), (5, 6), (7, 8)], right, 0.0111543),
            ],
        ),
        (
            4,
            vec![
                (vec![(1, 4), (5, 8), (9, 16)], left, 0.0111543),
                (
                    vec![(1, 4), (5, 9), (10, 16)],
                    [0.0957031, 0.389601, 0.809883],
                    0.0111413,
                ),
                (vec![(1, 6), (7, 10), (11, 16)], middle, 0.011019),
                (
                    vec![(1, 7), (8, 12), (13, 16)],
                    [0.190117, 0.610399, 0.904297],
                    0.0111413,
                ),
                (vec![(1, 8), (9, 12), (13, 16)], right, 0.0111543),
            ],
        ),
        (
            5,
            vec![
                (vec![(1, 8), (9, 16), (17, 32)], left, 0.0111543),
                (
                    vec![(1, 8), (9, 17), (18, 32)],
                    [0.0957031, 0.36721, 0.795299],
                    0.011127,
                ),
                (
                    vec![(1, 8), (9, 18), (19, 32)],
                    [0.0957031, 0.389601, 0.809883],
                    0.0111413,
                ),
                (
                    vec![(1, 11), (12, 20), (21, 32)],
                    [0.14506, 0.480202, 0.84021],
                    0.0110059,
                ),
                (vec![(1, 12), (13, 20), (21, 32)], middle, 0.011019),
                (
                    vec![(1, 12), (13, 21), (22, 32)],
                    [0.15979, 0.519798, 0.85494],
                    0.0110059,
                ),
                (
                    vec![(1, 14), (15, 24), (25, 32)],
                    [0.190117, 0.610399, 0.904297],
                    0.0111413,
                ),
                (
                    vec![(1, 15), (16, 24), (25, 32)],
                    [0.204701, 0.63279, 0.904297],
                    0.011127,
                ),
                (vec![(1, 16), (17, 24), (25, 32)], right, 0.0111543),
            ],
        ),
    ]
}

/// (n, m, centroids, distortion) for r1 = 1/4, r2 = 1/2, p1 = 1/4.
pub fn asymmetric_tables() -> AsymmetricRows {
    let optimal3 = vec![0.166667, 0.583333, 0.916667];
    vec![
        (3, 2, vec![(optimal3.clone(), 0.00561683)]),
        (
            3,
            3,
            vec![
                (optimal3.clone(), 0.00561683),
                (vec![0.166667, 0.672619, 0.958333], 0.00617487),
            ],
        ),
        (
            3,
            4,
            vec![
                (optimal3, 0.00561683),
                (vec![0.166667, 0.611294, 0.927083], 0.00562968),
                (vec![0.166667, 0.672619, 0.958333], 0.00617487),
            ],
        ),
        (
            4,
            3,
            vec![
                (vec![0.0416667, 0.208333, 0.583333, 0.916667], 0.00431475),
                (vec![0.0416667, 0.208333, 0.672619, 0.958333], 0.00487278),
                (vec![0.0863095, 0.229167, 0.583333, 0.916667], 0.00436125),
                (vec![0.0863095, 0.229167, 0.672619, 0.958333], 0.00491929),
                (vec![0.166667, 0.583333, 0.791667, 0.958333], 0.00268714),
            ],
        ),
    ]
}

pub fn classical_cantor() -> Check {
    let started = Instant::now();
    let model = symmetric(q(1, 3));
    let float = to_f64(&model);

    let exact = cvts(&model, 3, 2);
    ensure!(exact.len() == 2, "C(3,4) has {} elements", exact.len());
    let expected = [
        [q(1, 18), q(5, 18), q(5, 6)],
        [q(1, 6), q(13, 18), q(17, 18)],
    ];
    for (result, want) in exact.iter().zip(&expected) {
        ensure!(
            result.centroids == want,
            "exact centroids {:?}",
            result.centroids
        );
    }
    let approx = cvts(&float, 3, 2);
    ensure!(
        approx.len() == 2,
        "float C(3,4) has {} elements",
        approx.len()
    );
    for (result, want) in approx.iter().zip(&expected) {
        for (c, w) in result.centroids.iter().zip(want) {
            ensure!((c - w.to_f64()).abs() <= 1e-12, "float centroid {c} vs {w}");
        }
    }

    for (n, m, want) in cantor_tables() {
        let got = blocks(&cvts(&model, n, m));
        ensure!(got == want, "C({n},2^{m}) = {got:?}");
        let got_float = blocks(&cvts(&float, n, m));
        ensure!(got_float == want, "float C({n},2^{m}) = {got_float:?}");
    }
    let counts: Vec<usize> = (2..=5).map(|m| cvts(&model, 4, m).len()).collect();
    ensure!(counts == [1, 5, 5, 5], "C(4,2^m) counts {counts:?}");
    let elapsed = within(started, Duration::from_secs(1))?;
    Ok(format!(
        "C(3,2^m) sizes 2,2,2,3; C(4,2^m) sizes {counts:?}; {elapsed:.2?}"
    ))
}

pub fn empty_then_found() -> Check {
    let started = Instant::now();
    let model = symmetric(q(4, 9));
    for m in [2, 3] {
        ensure!(cvts(&model, 3, m).is_empty(), "C(3,2^{m}) is not empty");
    }
    let config = SearchConfig {
        m_start: 2,
        ..SearchConfig::exact()
    };
    let found = find_cvts(&model, 3, &config).map_err(|e| e.to_string())?;
    ensure!(found.level == 4, "m_found = {}", found.level);
    let at4: [(Blocks, [f64; 3]); 2] = [
        (
            vec![(1, 4), (5, 9), (10, 16)],
            [0.0987654, 0.391556, 0.806737],
        ),
        (
            vec![(1, 7), (8, 12), (13, 16)],
            [0.193263, 0.608444, 0.901235],
        ),
    ];
    ensure!(
        found.cvts.len() == 2,
        "C(3,16) has {} elements",
        found.cvts.len()
    );
    for (result, (b, c)) in found.cvts.iter().zip(&at4) {
        ensure!(
            result.partition.block_list() == *b,
            "blocks {:?}",
            result.partition.block_list()
        );
        check_centroids6(result, c)?;
    }

    let at5: [(Blocks, [f64; 3]); 4] = [
        (
            vec![(1, 8), (9, 18), (19, 32)],
            [0.0987654, 0.391556, 0.806737],
        ),
        (
            vec![(1, 11), (12, 20), (21, 32)],
            [0.147939, 0.48067, 0.83722],
        ),
        (
            vec![(1, 12), (13, 21), (22, 32)],
            [0.16278, 0.51933, 0.852061],
        ),
        (
            vec![(1, 14), (15, 24), (25, 32)],
            [0.193263, 0.608444, 0.901235],
        ),
    ];
    let level5 = cvts(&model, 3, 5);
    ensure!(level5.len() == 4, "C(3,32) has {} elements", level5.len());
    for (result, (b, c)) in level5.iter().zip(&at5) {
        ensure!(
            result.partition.block_list() == *b,
            "blocks {:?}",
            result.partition.block_list()
        );
        check_centroids6(result, c)?;
    }
    let elapsed = within(started, Duration::from_secs(1))?;
    Ok(format!(
        "empty at m=2,3; m_found=4 with 2 CVTs; 4 CVTs at m=5; {elapsed:.2?}"
    ))
}

pub fn distortion_fixtures() -> Check {
    let started = Instant::now();
    let model = symmetric(q(7, 16));
    let mut counts = Vec::new();
    let mut minima = Vec::new();
    for (m, rows) in r4375_tables() {
        let found = cvts(&model, 3, m);
        counts.push(found.len());
        ensure!(
            found.len() == rows.len(),
            "C(3,2^{m}) has {} elements",
            found.len()
        );
        for (result, (b, c, d)) in found.iter().zip(&rows) {
            ensure!(
                result.partition.block_list() == *b,
                "m={m} blocks {:?}",
                result.partition.block_list()
            );
            check_centroids6(result, c)?;
            let got = result.distortion.to_f64();
            ensure!(matches6(got, *d), "m={m} {b:?} distortion {got} vs {d}");
        }
        let best = best_cvt(&found).map_err(|e| e.to_string())?;
        minima.push(sig6(best.distortion.to_f64()));
    }
    ensure!(counts == [2, 3, 5, 9], "counts {counts:?}");
    ensure!(
        minima == [0.0111543, 0.011019, 0.011019, 0.0110059],
        "per-level minima {minima:?}"
    );
    let elapsed = within(started, Duration::from_secs(5))?;
    Ok(format!(
        "counts {counts:?}; minima {minima:?}; {elapsed:.2?}"
    ))
}

pub fn asymmetric_fixtures() -> Check {
    let started = Instant::now();
    let model = asymmetric();
    for (n, m, rows) in asymmetric_tables() {
        let found = cvts(&model, n, m);
        ensure!(
            found.len() == rows.len(),
            "C({n},2^{m}) has {} elements",
            found.len()
        );
        for (result, (c, d)) in found.iter().zip(&rows) {
            check_centroids6(result, c)?;
            let got = result.distortion.to_f64();
            ensure!(
                (got - d).abs() <= 1e-6,
                "C({n},2^{m}) distortion {got} vs {d}"
            );
        }
    }
    let four = cvts(&model, 4, 3);
    let best = best_cvt(&four).map_err(|e| e.to_string())?;
    let best_distortion = best.distortion.to_f64();
    ensure!(
        (best_distortion - 0.00268714).abs() <= 1e-6,
        "best {best_distortion}"
    );
    ensure!(
        best.partition.block_list() == vec![(1, 4), (5, 6), (7, 7), (8, 8)],
        "best blocks {:?}",
        best.partition.block_list()
    );
    let elapsed = within(started, Duration::from_secs(1))?;
    Ok(format!(
        "singleton at m=2, five CVTs for n=4, best {best_distortion:.8}; {elapsed:.2?}"
    ))
}

pub fn moment_formulas() -> Check {
    let started = Instant::now();
    let cantor = symmetric(q(1, 3));
    let asym = asymmetric();
    ensure!(
        *cantor.variance() == q(1, 8),
        "Cantor variance {}",
        cantor.variance()
    );
    ensure!(
        *asym.variance() == q(16, 153),
        "asymmetric variance {}",
        asym.variance()
    );
    let mut worst = Vec::new();
    for model in [&cantor, &asym] {
        let truncated = moments_by_truncation(model, 25).map_err(|e| e.to_string())?;
        let bound = 2.0 * model.r1().to_f64().max(model.r2().to_f64()).powi(25);
        let errors = [
            (truncated.mean - model.expectation().to_f64()).abs(),
            (truncated.second_moment - model.second_moment().to_f64()).abs(),
            (truncated.variance - model.variance().to_f64()).abs(),
        ];
        ensure!(
            errors.iter().all(|e| *e <= bound),
            "errors {errors:?} exceed {bound:e}"
        );
        worst.push(errors.iter().copied().fold(0.0, f64::max));
    }
    let elapsed = within(started, Duration::from_secs(5))?;
    Ok(format!(
        "V = 1/8 and 16/153; truncation errors {:.1e} and {:.1e}; {elapsed:.2?}",
        worst[0], worst[1]
    ))
}

pub const PROPERTY_RATIOS: [(i64, i64); 4] = [(3, 10), (1, 3), (7, 16), (4, 9)];

/// Every emitted CVT is a fixed point of one Lloyd round on the level-`m`
/// atoms.
pub fn is_lloyd_fixed_point(
    model: &IfsModel<f64>,
    m: u32,
    result: &CvtResult<f64>,
) -> Result<(), String> {
    let atoms = discretize(model, m).map_err(|e| e.to_string())?;
    let run = lloyd(&atoms, &result.centroids, 0.0, 1).map_err(|e| e.to_string())?;
    ensure!(
        run.boundaries == result.partition.boundaries(),
        "Lloyd reassigned {:?} to {:?}",
        result.partition.boundaries(),
        run.boundaries
    );
    let moved = run
        .centroids
        .iter()
        .zip(&result.centroids)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    ensure!(moved <= 1e-12, "centroids moved by {moved:e}");
    let cost_gap = (run.cost - result.distortion).abs();
    ensure!(cost_gap <= 1e-12, "Lloyd cost differs by {cost_gap:e}");
    Ok(())
}

pub fn property_suite() -> Check {
    let started = Instant::now();
    let plain = SearchConfig::default();
    let pruned = SearchConfig {
        symmetry_pruning: true,
        ..plain.clone()
    };
    let parallel = SearchConfig {
        symmetry_pruning: true,
        parallel: true,
        ..plain.clone()
    };
    let mut checked = 0usize;
    for (num, den) in PROPERTY_RATIOS {
        let model = IfsModel::symmetric(num as f64 / den as f64, false).unwrap();
        for n in 2..=4usize {
            for m in 1..=8u32 {
                if n > 1 << m {
                    continue;
                }
                let table = model.build_table(m).unwrap();
                let naive = enumerate_cvts(&table, n, &plain).unwrap();
                // (a) pruned enumeration
                let fast = enumerate_cvts(&table, n, &pruned).unwrap();
                let threaded = enumerate_cvts(&table, n, &parallel).unwrap();
                ensure!(
                    blocks(&naive) == blocks(&fast) && blocks(&naive) == blocks(&threaded),
                    "r={num}/{den} n={n} m={m}: pruned search disagrees"
                );
                // (e) reflection closure
                let all = blocks(&naive);
                for result in &naive {
                    let mirror = result.partition.reflect().block_list();
                    ensure!(
                        all.contains(&mirror),
                        "r={num}/{den} n={n} m={m}: {mirror:?} missing"
                    );
                }
                // (b) nesting
                if m < 8 {
                    let finer = model.build_table(m + 1).unwrap();
                    let eps = plain.tolerance;
                    for result in &naive {
                        let lifted = result.partition.lift(1).unwrap();
                        ensure!(
                            is_cvt(&finer, &lifted, &eps),
                            "r={num}/{den} n={n} m={m}: lift of {:?} is not a CVT",
                            result.partition.block_list()
                        );
                    }
                }
                // (c) Lloyd fixed points
                for result in &naive {
                    is_lloyd_fixed_point(&model, m, result)
                        .map_err(|e| format!("r={num}/{den} n={n} m={m}: {e}"))?;
                }
                // (d) DP lower bound
                let (_, dp_cost) = dp_optimal_blocks(&table, n).unwrap();
                if let Ok(best) = best_cvt(&naive) {
                    ensure!(
                        dp_cost <= best.distortion + 1e-12,
                        "r={num}/{den} n={n} m={m}: DP {dp_cost} above best CVT {}",
                        best.distortion
                    );
                }
                checked += naive.len();
            }
        }
    }
    dp_matches_fixtures()?;
    let elapsed = within(started, Duration::from_secs(180))?;
    Ok(format!(
        "{checked} CVTs checked across the grid; {elapsed:.2?}"
    ))
}

/// DP optimum equals the best CVT on the r = 0.4375 and asymmetric fixtures.
pub fn dp_matches_fixtures() -> Result<(), String> {
    let cases: Vec<(IfsModel<BigRational>, usize, Vec<u32>)> = vec![
        (symmetric(q(7, 16)), 3, vec![2, 3, 4, 5]),
        (asymmetric(), 3, vec![2, 3, 4]),
        (asymmetric(), 4, vec![3, 6]),
    ];
    for (model, n, levels) in cases {
        for m in levels {
            let table = model.build_table(m).unwrap();
            let (partition, cost) = dp_optimal_blocks(&table, n).unwrap();
            let found = enumerate_cvts(&table, n, &SearchConfig::exact()).unwrap();
            let best = best_cvt(&found).map_err(|e| e.to_string())?;
            ensure!(
                cost == best.distortion,
                "n={n} m={m}: DP {} vs best CVT {}",
                cost.to_f64(),
                best.distortion.to_f64()
            );
            ensure!(
                partition == best.partition,
                "n={n} m={m}: DP picked {:?}",
                partition.block_list()
            );
        }
    }
    Ok(())
}

pub struct SweepRow {
    pub r: f64,
    pub boundary_1: f64,
    pub distortion: f64,
    pub is_optimal: bool,
    pub blocks: Vec<usize>,
}

pub fn parse_sweep(csv: &str) -> Vec<SweepRow> {
    csv.lines()
        .skip(1)
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            SweepRow {
                r: f[0].parse().unwrap(),
                boundary_1: f[3].parse().unwrap(),
                distortion: f[4].parse().unwrap(),
                is_optimal: f[5] == "1",
                blocks: f[6].split(';').map(|b| b.parse().unwrap()).collect(),
            }
        })
        .collect()
}

pub fn sweep_structure() -> Check {
    let started = Instant::now();
    let mut manifest = RunManifest::new(Command::Sweep, 3);
    manifest.m = Some(12);
    manifest.sweep = Some(SweepGrid {
        r_min: "0.30".into(),
        r_max: "0.50".into(),
        step: "0.005".into(),
    });
    manifest.allow_degenerate_gaps = true;
    manifest.parallel = true;
    let csv = execute(&manifest).map_err(|e| e.message)?;
    let rows = parse_sweep(&csv);
    let cells = 1usize << 12;
    let half_quarter = [vec![cells / 4, cells / 2], vec![cells / 2, 3 * cells / 4]];
    let is_half_quarter = |row: &SweepRow| half_quarter.contains(&row.blocks);
    let grid: Vec<f64> = (0..=40).map(|k| 0.30 + 0.005 * k as f64).collect();
    let at = |r: f64| rows.iter().filter(move |row| (row.r - r).abs() < 1e-9);

    for &r in grid.iter().filter(|r| **r <= 0.42 + 1e-9) {
        let mut optimal: Vec<Vec<usize>> = at(r)
            .filter(|row| row.is_optimal)
            .map(|row| row.blocks.clone())
            .collect();
        optimal.sort();
        ensure!(
            optimal == half_quarter,
            "r={r:.3}: optimal blocks {optimal:?}"
        );
    }
    let upper: Vec<f64> = grid.iter().copied().filter(|r| *r >= 0.44 - 1e-9).collect();
    let extra_in_upper = rows
        .iter()
        .filter(|row| row.r >= 0.44 - 1e-9 && !is_half_quarter(row))
        .count();
    ensure!(
        extra_in_upper > 0,
        "no CVT beyond the half/quarter split for r >= 0.44"
    );
    let without_cvts: Vec<String> = upper
        .iter()
        .filter(|r| at(**r).next().is_none())
        .map(|r| format!("{r:.3}"))
        .collect();
    let switched: Vec<String> = grid
        .iter()
        .filter(|r| **r >= 0.43 - 1e-9 && **r <= 0.45 + 1e-9)
        .filter(|r| at(**r).any(|row| row.is_optimal && !is_half_quarter(row)))
        .map(|r| format!("{r:.3}"))
        .collect();
    ensure!(
        !switched.is_empty(),
        "half/quarter split optimal throughout [0.43, 0.45]"
    );
    let elapsed = within(started, Duration::from_secs(300))?;
    Ok(format!(
        "{} rows; half/quarter optimal for r <= 0.42; {extra_in_upper} other CVTs for r >= 0.44 \
         (none at level 12 for r = {}); other optimum at r = {}; {elapsed:.2?}",
        rows.len(),
        without_cvts.join(", "),
        switched.join(", ")
    ))
}

pub fn constant_spec(model: &IfsModel<BigRational>) -> GeneralizedIfsSpec<BigRational> {
    GeneralizedIfsSpec::from_model(model).unwrap()
}

/// Cantor thirds at odd levels, three equal fifths at even levels.
pub fn two_level_spec() -> GeneralizedIfsSpec<BigRational> {
    let map = |s: (i64, i64), b: (i64, i64), p: (i64, i64)| {
        ContractionMap::new(q(s.0, s.1), q(b.0, b.1), q(p.0, p.1))
    };
    let thirds = vec![map((1, 3), (0, 1), (1, 2)), map((1, 3), (2, 3), (1, 2))];
    let fifths = vec![
        map((1, 5), (0, 1), (1, 4)),
        map((1, 5), (2, 5), (1, 2)),
        map((1, 5), (4, 5), (1, 4)),
    ];
    GeneralizedIfsSpec::new(Vec::new(), vec![thirds, fifths]).unwrap()
}

/// Largest residual of the one-level moment recursion over two periods.
pub fn tail_residual(spec: &GeneralizedIfsSpec<f64>) -> f64 {
    let tails = tail_moments(spec);
    let depths = spec.preamble().len() + 2 * spec.period().len();
    let mut worst: f64 = 0.0;
    for k in 0..depths {
        let inner = tails.at_depth(k + 1);
        let (mut e, mut m) = (0.0, 0.0);
        for map in spec.family(k + 1) {
            e += map.prob * (map.scale * inner.mean + map.offset);
            m += map.prob
                * (map.scale * map.scale * inner.second_moment
                    + 2.0 * map.scale * map.offset * inner.mean
                    + map.offset * map.offset);
        }
        let outer = tails.at_depth(k);
        worst = worst
            .max((e - outer.mean).abs())
            .max((m - outer.second_moment).abs())
            .max((m - e * e - outer.variance).abs());
    }
    worst
}

pub fn generalized_reduction() -> Check {
    let started = Instant::now();
    let exact = SearchConfig::exact();
    let mut compared = 0usize;
    let fixtures: Vec<(IfsModel<BigRational>, Vec<(usize, u32)>)> = vec![
        (
            symmetric(q(1, 3)),
            cantor_tables().iter().map(|(n, m, _)| (*n, *m)).collect(),
        ),
        (symmetric(q(4, 9)), vec![(3, 2), (3, 3), (3, 4), (3, 5)]),
        (symmetric(q(7, 16)), vec![(3, 2), (3, 3), (3, 4), (3, 5)]),
        (
            asymmetric(),
            asymmetric_tables()
                .iter()
                .map(|(n, m, _)| (*n, *m))
                .collect(),
        ),
    ];
    for (model, cases) in &fixtures {
        let spec = constant_spec(model);
        for &(n, m) in cases {
            let direct = enumerate_cvts(&model.build_table(m).unwrap(), n, &exact).unwrap();
            let general =
                enumerate_cvts(&build_table_generalized(&spec, m).unwrap(), n, &exact).unwrap();
            ensure!(direct == general, "n={n} m={m}: constant spec differs");
            compared += direct.len();
        }
    }
    let spec = two_level_spec();
    let float_spec = GeneralizedIfsSpec::new(
        Vec::new(),
        spec.period()
            .iter()
            .map(|f| {
                f.iter()
                    .map(|c| {
                        ContractionMap::new(c.scale.to_f64(), c.offset.to_f64(), c.prob.to_f64())
                    })
                    .collect()
            })
            .collect(),
    )
    .unwrap();
    let residual = tail_residual(&float_spec);
    ensure!(residual < 1e-12, "tail recursion residual {residual:e}");
    let elapsed = within(started, Duration::from_secs(10))?;
    Ok(format!(
        "{compared} CVTs identical under the constant spec; residual {residual:.1e}; {elapsed:.2?}"
    ))
}
