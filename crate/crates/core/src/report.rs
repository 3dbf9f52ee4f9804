//! JSON rendering of solver results.
//!
//! Canonical output drops counters and rounds coordinates and values to a
//! 1e-9 grid, so runs that differ only in schedule or thread count print the
//! same bytes.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::Vector;
use crate::nonconvex::{NonconvexOutcome, NonconvexReport};
use crate::solver::{ConeMinRecord, Counters, Outcome, Provenance, SolveReport};

pub const STATUS_MINIMIZER: &str = "minimizer";
pub const STATUS_EMPTY: &str = "empty_or_no_min";
pub const STATUS_MINIMIZERS: &str = "minimizers";
pub const STATUS_NO_MINIMUM: &str = "no_minimum";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultJson {
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_space: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counters: Option<Counters>,
    /// For an empty-or-no-minimum status: whether the polyhedron is empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub empty: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_match: Option<bool>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub records: Vec<RecordJson>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordJson {
    pub key: Vec<usize>,
    pub generators: Vec<usize>,
    pub codim: usize,
    pub minimizer: Option<Vec<f64>>,
    pub value: Option<f64>,
    /// `computed`, `shortcut`, or `inherited`.
    pub provenance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inherited_from: Option<Vec<usize>>,
    pub candidate: bool,
}

impl From<&ConeMinRecord> for RecordJson {
    fn from(r: &ConeMinRecord) -> Self {
        let (provenance, inherited_from) = match &r.provenance {
            Provenance::ComputedOnAffine => ("computed", None),
            Provenance::OnBoundaryShortcut => ("shortcut", None),
            Provenance::InheritedFrom(k) => ("inherited", Some(k.indices().to_vec())),
        };
        Self {
            key: r.key.indices().to_vec(),
            generators: r.generators.clone(),
            codim: r.codim,
            minimizer: r.minimizer.as_ref().map(|m| m.iter().copied().collect()),
            value: r.value,
            provenance: provenance.into(),
            inherited_from,
            candidate: r.is_candidate(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonconvexResultJson {
    pub status: String,
    pub points: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counters: Option<Counters>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pruned_faces: Vec<usize>,
}

/// Rounds to the nearest multiple of 1e-9 and clears negative zero.
pub fn canonical_f64(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    let r = (x * 1e9).round() / 1e9;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn coords(v: &Vector, canonical: bool) -> Vec<f64> {
    v.iter()
        .map(|&x| if canonical { canonical_f64(x) } else { x })
        .collect()
}

fn scalar(x: f64, canonical: bool) -> f64 {
    if canonical {
        canonical_f64(x)
    } else {
        x
    }
}

/// Result JSON; the records are included when the report kept them.
pub fn convex_result(report: &SolveReport, canonical: bool) -> ResultJson {
    let counters = (!canonical).then_some(report.counters);
    let records = report.records.iter().map(RecordJson::from).collect();
    match &report.outcome {
        Outcome::Minimizer {
            point,
            value,
            min_space,
        } => ResultJson {
            status: STATUS_MINIMIZER.into(),
            point: Some(coords(point, canonical)),
            value: Some(scalar(*value, canonical)),
            min_space: Some(min_space.indices().to_vec()),
            counters,
            empty: None,
            oracle_match: None,
            records,
        },
        Outcome::NoMinimumOrEmpty => ResultJson {
            status: STATUS_EMPTY.into(),
            point: None,
            value: None,
            min_space: None,
            counters,
            empty: None,
            oracle_match: None,
            records,
        },
    }
}

pub fn nonconvex_result(report: &NonconvexReport, canonical: bool) -> NonconvexResultJson {
    let counters = (!canonical).then_some(report.counters);
    match &report.outcome {
        NonconvexOutcome::Minimizers { points, value } => NonconvexResultJson {
            status: STATUS_MINIMIZERS.into(),
            points: points.iter().map(|p| coords(p, canonical)).collect(),
            value: Some(scalar(*value, canonical)),
            counters,
            pruned_faces: report.pruned_faces.clone(),
        },
        NonconvexOutcome::NoMinimum => NonconvexResultJson {
            status: STATUS_NO_MINIMUM.into(),
            points: Vec::new(),
            value: None,
            counters,
            pruned_faces: report.pruned_faces.clone(),
        },
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}
