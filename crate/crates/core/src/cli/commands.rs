use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::cvt_search::{
    best_cvt, enumerate_cvts, find_cvts, is_cvt, CvtResult, FoundCvts, SearchConfig,
};
use crate::generalized::{
    build_table_generalized_with_cap, find_cvts_generalized, GeneralizedIfsSpec,
};
use crate::ifs_model::{CylinderTable, IfsModel};
use crate::oracle::{discretize, dp_optimal_blocks, lloyd_with_restarts, moments_by_truncation};
use crate::scalar::{parse_ratio, Scalar};

use super::format::{decimal, fixed_significant, json_number, json_numbers};
use super::manifest::{Command, NumericMode, OracleParams, OutputFormat, RunManifest, SweepGrid};
use super::CliError;

/// Runs a manifest and returns the report text.
pub fn execute(manifest: &RunManifest) -> Result<String, CliError> {
    match manifest.numeric {
        NumericMode::Float => execute_in::<f64>(manifest),
        NumericMode::Rational => execute_in::<BigRational>(manifest),
    }
}

fn execute_in<T: Scalar>(manifest: &RunManifest) -> Result<String, CliError> {
    match manifest.command {
        Command::Cvt => cvt::<T>(manifest),
        Command::Optimal => optimal::<T>(manifest),
        Command::Sweep => sweep::<T>(manifest),
        Command::OracleLloyd => oracle_lloyd::<T>(manifest),
        Command::OracleDp => oracle_dp::<T>(manifest),
        Command::OracleMoments => oracle_moments::<T>(manifest),
        Command::GeneralizedCvt => generalized_cvt::<T>(manifest),
        Command::GeneralizedOptimal => generalized_optimal::<T>(manifest),
    }
}

fn search_config(manifest: &RunManifest) -> SearchConfig {
    let mut config = SearchConfig {
        tolerance: manifest.tolerance,
        symmetry_pruning: manifest.symmetry_pruning,
        parallel: manifest.parallel,
        ..SearchConfig::default()
    };
    if let Some(m) = manifest.m {
        config.m_start = m;
        config.m_max = m;
    }
    if let Some(m) = manifest.m_start {
        config.m_start = m;
    }
    if let Some(m) = manifest.m_max {
        config.m_max = m;
    }
    config
}

fn embedded(manifest: &RunManifest) -> Value {
    let mut manifest = manifest.clone();
    manifest.out = None;
    serde_json::to_value(manifest).expect("manifest serializes")
}

fn render(report: &Value) -> String {
    let mut text = serde_json::to_string_pretty(report).expect("report serializes");
    text.push('\n');
    text
}

fn cvt_json<T: Scalar>(result: &CvtResult<T>) -> Value {
    let mut value = json!({
        "blocks": result.partition.block_list(),
        "boundaries": result.partition.boundaries(),
        "centroids": json_numbers(result.centroids.iter().map(Scalar::to_f64)),
        "boundary_points": json_numbers(result.boundary_points.iter().map(Scalar::to_f64)),
        "distortion": json_number(result.distortion.to_f64()),
    });
    if T::is_exact() {
        value["exact"] = json!({
            "centroids": result.centroids.iter().map(ToString::to_string).collect::<Vec<_>>(),
            "distortion": result.distortion.to_string(),
        });
    }
    value
}

fn joined(values: impl IntoIterator<Item = String>) -> String {
    values.into_iter().collect::<Vec<_>>().join(";")
}

fn cvt_csv<T: Scalar>(rows: &[(u32, &CvtResult<T>)], n: usize) -> String {
    let mut text = String::from("m,n,blocks,centroids,boundary_points,distortion\n");
    for (level, result) in rows {
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            level,
            n,
            joined(
                result
                    .partition
                    .boundaries()
                    .iter()
                    .map(ToString::to_string)
            ),
            joined(result.centroids.iter().map(|c| decimal(c.to_f64()))),
            joined(result.boundary_points.iter().map(|c| decimal(c.to_f64()))),
            decimal(result.distortion.to_f64()),
        ));
    }
    text
}

/// Recomputes every stored quantity and rechecks the gap condition.
fn verify<T: Scalar>(
    table: &CylinderTable<T>,
    results: &[CvtResult<T>],
    tolerance: f64,
) -> Result<(), CliError> {
    let eps = T::from_f64(tolerance);
    for result in results {
        let fresh = CvtResult::evaluate(table, result.partition.clone())?;
        let increasing = result.centroids.windows(2).all(|w| w[0] < w[1]);
        if fresh != *result || !increasing || !is_cvt(table, &result.partition, &eps) {
            return Err(CliError::invariant(format!(
                "result {:?} failed its soundness check",
                result.partition.block_list()
            )));
        }
    }
    Ok(())
}

fn summary<T: Scalar>(results: &[CvtResult<T>]) -> Value {
    match best_cvt(results) {
        Ok(best) => json!({
            "count": results.len(),
            "min_distortion": json_number(best.distortion.to_f64()),
            "best_blocks": best.partition.block_list(),
        }),
        Err(_) => json!({ "count": 0, "min_distortion": Value::Null, "best_blocks": Value::Null }),
    }
}

fn level_report<T: Scalar>(
    manifest: &RunManifest,
    table: &CylinderTable<T>,
    config: &SearchConfig,
) -> Result<String, CliError> {
    let results = enumerate_cvts(table, manifest.n, config)?;
    verify(table, &results, config.tolerance)?;
    if manifest.format == OutputFormat::Csv {
        let rows: Vec<_> = results.iter().map(|r| (table.level(), r)).collect();
        return Ok(cvt_csv(&rows, manifest.n));
    }
    Ok(render(&json!({
        "manifest": embedded(manifest),
        "level": table.level(),
        "cells": table.len(),
        "n": manifest.n,
        "summary": summary(&results),
        "cvts": results.iter().map(cvt_json).collect::<Vec<_>>(),
    })))
}

fn cvt<T: Scalar>(manifest: &RunManifest) -> Result<String, CliError> {
    let model: IfsModel<T> = manifest
        .model_params()?
        .build(manifest.allow_degenerate_gaps)?;
    let config = search_config(manifest);
    let table = model.build_table_with_cap(manifest.level()?, config.level_cap)?;
    level_report(manifest, &table, &config)
}

fn generalized_cvt<T: Scalar>(manifest: &RunManifest) -> Result<String, CliError> {
    let spec: GeneralizedIfsSpec<T> = manifest.spec_document()?.build()?;
    let config = search_config(manifest);
    let table =
        build_table_generalized_with_cap(&spec, manifest.level()?, 1usize << config.level_cap)?;
    level_report(manifest, &table, &config)
}

fn optimal_report<T: Scalar>(
    manifest: &RunManifest,
    found: FoundCvts<T>,
    config: &SearchConfig,
    build: impl Fn(u32) -> Result<CylinderTable<T>, CliError>,
) -> Result<String, CliError> {
    verify(&build(found.level)?, &found.cvts, config.tolerance)?;
    let best = best_cvt(&found.cvts)?;
    let mut per_level = Vec::new();
    let mut csv_rows = vec![];
    if manifest.per_level {
        for level in found.level..=config.m_max {
            let table = build(level)?;
            let results = enumerate_cvts(&table, manifest.n, config)?;
            verify(&table, &results, config.tolerance)?;
            let mut entry = summary(&results);
            entry["level"] = json!(level);
            per_level.push(entry);
            if let Ok(b) = best_cvt(&results) {
                csv_rows.push((level, b.clone()));
            }
        }
    }
    if manifest.format == OutputFormat::Csv {
        let rows: Vec<(u32, &CvtResult<T>)> = if manifest.per_level {
            csv_rows.iter().map(|(l, r)| (*l, r)).collect()
        } else {
            found.cvts.iter().map(|r| (found.level, r)).collect()
        };
        return Ok(cvt_csv(&rows, manifest.n));
    }
    let mut report = json!({
        "manifest": embedded(manifest),
        "m_found": found.level,
        "n": manifest.n,
        "summary": summary(&found.cvts),
        "best": cvt_json(best),
        "cvts": found.cvts.iter().map(cvt_json).collect::<Vec<_>>(),
    });
    if manifest.per_level {
        report["per_level"] = Value::Array(per_level);
        // earliest level wins near-ties
        let mut overall: Option<&(u32, CvtResult<T>)> = None;
        for row in &csv_rows {
            if overall
                .is_none_or(|(_, b)| row.1.distortion.clone() + T::tie_tolerance() < b.distortion)
            {
                overall = Some(row);
            }
        }
        if let Some((level, result)) = overall {
            let mut entry = cvt_json(result);
            entry["level"] = json!(level);
            report["best_overall"] = entry;
        }
    }
    Ok(render(&report))
}

fn optimal<T: Scalar>(manifest: &RunManifest) -> Result<String, CliError> {
    let model: IfsModel<T> = manifest
        .model_params()?
        .build(manifest.allow_degenerate_gaps)?;
    let config = search_config(manifest);
    let found = find_cvts(&model, manifest.n, &config)?;
    optimal_report(manifest, found, &config, |level| {
        model
            .build_table_with_cap(level, config.level_cap)
            .map_err(CliError::from)
    })
}

fn generalized_optimal<T: Scalar>(manifest: &RunManifest) -> Result<String, CliError> {
    let spec: GeneralizedIfsSpec<T> = manifest.spec_document()?.build()?;
    let config = search_config(manifest);
    let found = find_cvts_generalized(&spec, manifest.n, &config)?;
    let cap = 1usize << config.level_cap;
    optimal_report(manifest, found, &config, |level| {
        build_table_generalized_with_cap(&spec, level, cap).map_err(CliError::from)
    })
}

/// Grid points `r_min + k·step ≤ r_max`, computed exactly.
pub(crate) fn sweep_grid(
    grid: &SweepGrid,
    allow_degenerate_gaps: bool,
) -> Result<Vec<BigRational>, CliError> {
    let parse = |name: &str, text: &str| {
        parse_ratio(text).ok_or_else(|| CliError::usage(format!("cannot parse {name} = {text:?}")))
    };
    let r_min = parse("r-min", &grid.r_min)?;
    let r_max = parse("r-max", &grid.r_max)?;
    let step = parse("step", &grid.step)?;
    let half = BigRational::new(1.into(), 2.into());
    if r_min <= BigRational::zero() || r_min > r_max || r_max > half || step <= BigRational::zero()
    {
        return Err(CliError::usage(format!(
            "invalid grid: need 0 < r-min <= r-max <= 1/2 and step > 0 (got {}, {}, {})",
            grid.r_min, grid.r_max, grid.step
        )));
    }
    if r_max == half && !allow_degenerate_gaps {
        return Err(CliError::usage(
            "r = 1/2 is on the grid; pass --allow-degenerate-gaps",
        ));
    }
    let count = ((r_max.clone() - r_min.clone()) / step.clone())
        .floor()
        .to_usize()
        .unwrap_or(0);
    Ok((0..=count)
        .map(|k| r_min.clone() + step.clone() * BigRational::from_integer(k.into()))
        .collect())
}

fn trimmed(x: f64) -> String {
    let text = fixed_significant(x, 12);
    if text.contains('.') {
        text.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        text
    }
}

#[derive(Debug)]
struct SweepRow {
    r: String,
    boundary_1: Option<f64>,
    distortion: f64,
    is_optimal: bool,
    boundaries: Vec<usize>,
}

fn sweep_one<T: Scalar>(
    r: &BigRational,
    manifest: &RunManifest,
    config: &SearchConfig,
) -> Result<Vec<SweepRow>, CliError> {
    let level = manifest.level()?;
    let model = IfsModel::symmetric(T::from_ratio(r), manifest.allow_degenerate_gaps)?;
    let table = model.build_table_with_cap(level, config.level_cap)?;
    let results = enumerate_cvts(&table, manifest.n, config)?;
    verify(&table, &results, config.tolerance)?;
    let cutoff = best_cvt(&results)
        .ok()
        .map(|best| best.distortion.clone() + T::tie_tolerance());
    let r_text = trimmed(ToPrimitive::to_f64(r).unwrap_or(f64::NAN));
    Ok(results
        .iter()
        .map(|result| SweepRow {
            r: r_text.clone(),
            boundary_1: result.boundary_points.first().map(Scalar::to_f64),
            distortion: result.distortion.to_f64(),
            is_optimal: cutoff.as_ref().is_some_and(|c| result.distortion <= *c),
            boundaries: result.partition.boundaries().to_vec(),
        })
        .collect())
}

fn sweep<T: Scalar>(manifest: &RunManifest) -> Result<String, CliError> {
    let grid = manifest
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::usage("sweep grid missing from manifest"))?;
    let points = sweep_grid(grid, manifest.allow_degenerate_gaps)?;
    let mut config = search_config(manifest);
    // parallelism goes across grid points
    config.parallel = false;
    let per_point: Vec<Result<Vec<SweepRow>, CliError>> = if manifest.parallel {
        points
            .par_iter()
            .map(|r| sweep_one::<T>(r, manifest, &config))
            .collect()
    } else {
        points
            .iter()
            .map(|r| sweep_one::<T>(r, manifest, &config))
            .collect()
    };
    let rows: Vec<SweepRow> = per_point
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();
    let level = manifest.level()?;

    if manifest.format == OutputFormat::Json {
        let rows: Vec<Value> = rows
            .iter()
            .map(|row| {
                json!({
                    "r": row.r,
                    "m": level,
                    "n": manifest.n,
                    "boundary_1": row.boundary_1.map_or(Value::Null, json_number),
                    "distortion": json_number(row.distortion),
                    "is_optimal": row.is_optimal,
                    "blocks": row.boundaries,
                })
            })
            .collect();
        return Ok(render(
            &json!({ "manifest": embedded(manifest), "rows": rows }),
        ));
    }
    let mut text = String::from("r,m,n,boundary_1,distortion,is_optimal,blocks\n");
    for row in &rows {
        text.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.r,
            level,
            manifest.n,
            row.boundary_1.map(decimal).unwrap_or_default(),
            decimal(row.distortion),
            u8::from(row.is_optimal),
            joined(row.boundaries.iter().map(ToString::to_string)),
        ));
    }
    Ok(text)
}

fn oracle_lloyd<T: Scalar>(manifest: &RunManifest) -> Result<String, CliError> {
    let model: IfsModel<T> = manifest
        .model_params()?
        .build(manifest.allow_degenerate_gaps)?;
    let level = manifest.level()?;
    let params = manifest.oracle.clone().unwrap_or_default();
    let OracleParams {
        restarts,
        seed,
        max_iter,
        lloyd_tolerance,
    } = params;
    let atoms = discretize(&model, level)?;
    let run = lloyd_with_restarts(
        &atoms,
        manifest.n,
        restarts,
        seed,
        lloyd_tolerance,
        max_iter,
    )?;
    let config = search_config(manifest);
    let table = model.build_table_with_cap(level, config.level_cap)?;
    let cvts = enumerate_cvts(&table, manifest.n, &config)?;
    let analytic = best_cvt(&cvts).ok();
    Ok(render(&json!({
        "manifest": embedded(manifest),
        "oracle": {
            "centroids": json_numbers(run.centroids.iter().copied()),
            "boundaries": run.boundaries,
            "cost": json_number(run.cost),
            "iterations": run.iterations,
        },
        "analytic": analytic.map_or(Value::Null, cvt_json),
        "difference": analytic.map_or(Value::Null, |a| json_number(run.cost - a.distortion.to_f64())),
    })))
}

fn oracle_dp<T: Scalar>(manifest: &RunManifest) -> Result<String, CliError> {
    let model: IfsModel<T> = manifest
        .model_params()?
        .build(manifest.allow_degenerate_gaps)?;
    let config = search_config(manifest);
    let table = model.build_table_with_cap(manifest.level()?, config.level_cap)?;
    let (partition, cost) = dp_optimal_blocks(&table, manifest.n)?;
    let eps = T::from_f64(config.tolerance);
    let dp_is_cvt = is_cvt(&table, &partition, &eps);
    let cvts = enumerate_cvts(&table, manifest.n, &config)?;
    let analytic = best_cvt(&cvts).ok();
    if let Some(best) = analytic {
        if cost.clone() > best.distortion.clone() + T::tie_tolerance() {
            return Err(CliError::invariant(
                "dynamic-programming optimum exceeds the best CVT distortion",
            ));
        }
    }
    Ok(render(&json!({
        "manifest": embedded(manifest),
        "oracle": {
            "blocks": partition.block_list(),
            "cost": json_number(cost.to_f64()),
            "satisfies_gap_condition": dp_is_cvt,
        },
        "analytic": analytic.map_or(Value::Null, cvt_json),
        "difference": analytic.map_or(Value::Null, |a| json_number((cost.clone() - a.distortion.clone()).to_f64())),
    })))
}

fn oracle_moments<T: Scalar>(manifest: &RunManifest) -> Result<String, CliError> {
    let model: IfsModel<T> = manifest
        .model_params()?
        .build(manifest.allow_degenerate_gaps)?;
    let level = manifest.level()?;
    let truncated = moments_by_truncation(&model, level)?;
    let (mean, second, variance) = (
        model.expectation().to_f64(),
        model.second_moment().to_f64(),
        model.variance().to_f64(),
    );
    let largest = model.r1().to_f64().max(model.r2().to_f64());
    Ok(render(&json!({
        "manifest": embedded(manifest),
        "oracle": {
            "mean": json_number(truncated.mean),
            "second_moment": json_number(truncated.second_moment),
            "variance": json_number(truncated.variance),
        },
        "analytic": {
            "mean": json_number(mean),
            "second_moment": json_number(second),
            "variance": json_number(variance),
        },
        "difference": {
            "mean": json_number(truncated.mean - mean),
            "second_moment": json_number(truncated.second_moment - second),
            "variance": json_number(truncated.variance - variance),
        },
        "bound": json_number(2.0 * largest.powi(level as i32)),
    })))
}
