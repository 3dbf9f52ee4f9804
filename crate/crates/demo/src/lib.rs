//! Browser bindings for the min-space solver. Every export takes and returns
//! JSON strings so the page needs no generated type glue.

use minspace::harness::{fraction_trend, random_polyhedron, run_benchmark, summarize, BenchConfig};
use minspace::report::{convex_result, nonconvex_result, to_json_string};
use minspace::{
    certify_empty, optimize_convex, optimize_nonconvex, FaceLattice, Objective, Polyhedron, Schedule, ScheduleKind,
    SolveOptions, Workers, DEFAULT_TOL,
};
use serde_json::json;
use wasm_bindgen::prelude::*;

fn fail(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn schedule(kind: &str) -> Result<Schedule, JsError> {
    Ok(Schedule {
        kind: kind.parse::<ScheduleKind>().map_err(fail)?,
        workers: Workers::Fixed(1),
    })
}

/// Projects `(x, y)` onto the polyhedron. With `trace` every affine space is
/// examined and the per-space cone records are included.
#[wasm_bindgen]
pub fn project(polyhedron_json: &str, x: f64, y: f64, schedule_kind: &str, trace: bool) -> Result<String, JsError> {
    let p = Polyhedron::parse(polyhedron_json).map_err(fail)?;
    let obj = Objective::projection(&[x, y]).map_err(fail)?;
    let mut options = SolveOptions::default().with_schedule(schedule(schedule_kind)?);
    if trace {
        options = options.exhaustive();
    }
    let report = optimize_convex(&p, &obj, &options).map_err(fail)?;
    let mut json = convex_result(&report, false);
    if json.point.is_none() {
        json.empty = Some(certify_empty(&p, DEFAULT_TOL).map_err(fail)?);
    }
    to_json_string(&json).map_err(fail)
}

/// `r` random half-planes `⟨v, x⟩ ≤ 1`.
#[wasm_bindgen]
pub fn random_polygon(r: usize, seed: u64) -> Result<String, JsError> {
    to_json_string(&random_polyhedron(r, 2, seed).map_err(fail)?.to_json()).map_err(fail)
}

/// Every nearest point of a union of boxes, given as `[[x0,y0,x1,y1],...]`.
#[wasm_bindgen]
pub fn project_boxes(boxes_json: &str, x: f64, y: f64) -> Result<String, JsError> {
    let raw: Vec<[f64; 4]> = serde_json::from_str(boxes_json).map_err(fail)?;
    let boxes: Vec<([f64; 2], [f64; 2])> = raw.iter().map(|b| ([b[0], b[1]], [b[2], b[3]])).collect();
    let lattice = FaceLattice::rectilinear_union(&boxes).map_err(fail)?;
    let obj = Objective::projection(&[x, y]).map_err(fail)?;
    let report = optimize_nonconvex(&lattice, &obj, &schedule("level")?, DEFAULT_TOL).map_err(fail)?;
    to_json_string(&nonconvex_result(&report, false)).map_err(fail)
}

/// Mean fraction of affine spaces minimized for each `(r, n)` cell, plus the
/// rank correlation of fraction against `r` for each `n`.
#[wasm_bindgen]
pub fn fraction_grid(r_values: &[usize], n_values: &[usize], trials: usize, seed: u64) -> Result<String, JsError> {
    let config = BenchConfig {
        r_values: r_values.to_vec(),
        n_values: n_values.to_vec(),
        trials,
        seed,
        ..BenchConfig::default()
    };
    let cells = summarize(&run_benchmark(&config).map_err(fail)?);
    let out = json!({
        "cells": cells.iter().map(|c| json!({
            "r": c.r,
            "n": c.n,
            "fraction": c.mean_fraction,
            "affine_minimizations": c.mean_affine_minimizations,
        })).collect::<Vec<_>>(),
        "trend": fraction_trend(&cells).iter().map(|(n, rho)| json!({"n": n, "spearman": rho})).collect::<Vec<_>>(),
    });
    Ok(out.to_string())
}
