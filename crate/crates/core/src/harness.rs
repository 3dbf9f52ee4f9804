//! Random instances, the brute-force oracle and the benchmark grid.

use std::fmt::Write as _;
use std::io::Write;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{affine_space_bound, check_dim, check_tol, solve_within, HalfSpace, Polyhedron, Vector};
use crate::objective::{Objective, QuadraticObjective, StrictlyConvexObjective};
use crate::schedule::{Schedule, Workers};
use crate::solver::{build_pool, optimize_convex, Counters, Outcome, SolveOptions};
use crate::subsets::Combinations;

pub const QUERY_RADIUS: f64 = 10.0;
pub const ORACLE_BUDGET: u128 = 1_000_000;

pub const CSV_HEADER: &str = "r,n,trial,seed,time_ns,spaces_enumerated,affine_minimizations,fraction,status,oracle_match";
pub const SUMMARY_HEADER: &str = "r,n,trials,mean_time_ns,mean_fraction,mean_affine_minimizations,mean_spaces_enumerated,oracle_mismatches,failures";

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one cell of the grid, independent of evaluation order.
pub fn trial_seed(master: u64, r: usize, n: usize, trial: usize) -> u64 {
    [r as u64, n as u64, trial as u64]
        .iter()
        .fold(splitmix64(master), |h, &v| splitmix64(h ^ v))
}

/// Seed of the query point that goes with the polyhedron of `seed`.
pub fn query_seed(seed: u64) -> u64 {
    splitmix64(seed ^ 0x5155_4552_5950_5453)
}

fn unit_vector(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    loop {
        let v = Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

/// `r` half-spaces `⟨v, x⟩ ≤ 1` with unit normals uniform on the sphere.
pub fn random_polyhedron(r: usize, n: usize, seed: u64) -> Result<Polyhedron> {
    if n == 0 {
        return Err(Error::ZeroDimension);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hs = (0..r)
        .map(|_| HalfSpace::new(unit_vector(&mut rng, n), 1.0))
        .collect::<Result<Vec<_>>>()?;
    Polyhedron::new(n, hs)
}

/// Uniform point in the open ball of radius 10.
pub fn random_query_point(n: usize, seed: u64) -> Result<Vector> {
    if n == 0 {
        return Err(Error::ZeroDimension);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dir = unit_vector(&mut rng, n);
    let u: f64 = rng.random();
    Ok(dir * (QUERY_RADIUS * u.powf(1.0 / n as f64)))
}

/// Random symmetric positive-definite matrix with eigenvalues in roughly [0.5, 5].
pub fn random_spd(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let q = &a * a.transpose() + DMatrix::identity(n, n) * 0.5;
    (&q + q.transpose()) * 0.5
}

/// Minimizes over every subset of at most `min(n, r)` hyperplanes and keeps
/// the best feasible minimizer. Ties in value go to the lexicographically
/// smaller point.
pub fn brute_force_optimize<O: StrictlyConvexObjective + ?Sized>(
    p: &Polyhedron,
    obj: &O,
    tol: f64,
) -> Result<Outcome> {
    check_tol(tol)?;
    check_dim(p.dimension(), obj.dimension())?;
    let r = p.len();
    let n = p.dimension();
    let subsets = affine_space_bound(r, n);
    if subsets > ORACLE_BUDGET {
        return Err(Error::SubsetBudgetExceeded {
            subsets,
            budget: ORACLE_BUDGET,
        });
    }
    let mut best: Option<(f64, Vector, Vec<usize>)> = None;
    for k in 0..=r.min(n) {
        for subset in Combinations::new(r, k) {
            let Some(space) = solve_within(p.halfspaces(), n, &subset, 0..r, tol) else {
                continue;
            };
            let Some(m) = obj.argmin_affine(&space) else {
                continue;
            };
            if !p.contains_unchecked(&m, tol) {
                continue;
            }
            let v = obj.eval(&m);
            let better = match &best {
                None => true,
                Some((bv, bp, _)) => v < *bv || (v == *bv && lex_less(&m, bp)),
            };
            if better {
                best = Some((v, m, space.canonical_key().indices().to_vec()));
            }
        }
    }
    Ok(match best {
        Some((value, point, key)) => Outcome::Minimizer {
            point,
            value,
            min_space: crate::geometry::SpaceKey::new(key),
        },
        None => Outcome::NoMinimumOrEmpty,
    })
}

pub(crate) fn lex_less(a: &Vector, b: &Vector) -> bool {
    for (x, y) in a.iter().zip(b.iter()) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            std::cmp::Ordering::Equal => {}
        }
    }
    false
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ObjectiveKind {
    #[default]
    Projection,
    Quadratic,
}

impl std::str::FromStr for ObjectiveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "projection" => Ok(Self::Projection),
            "quadratic" => Ok(Self::Quadratic),
            other => Err(Error::InvalidConfig(format!("unknown objective kind '{other}'"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub r_values: Vec<usize>,
    pub n_values: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub schedule: Schedule,
    pub objective: ObjectiveKind,
    pub oracle_check: bool,
    pub tol: f64,
    /// Trials run concurrently on this many threads.
    pub trial_workers: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            r_values: (3..=30).step_by(3).collect(),
            n_values: (2..=6).collect(),
            trials: 100,
            seed: 0,
            schedule: Schedule::level(Workers::Fixed(1)),
            objective: ObjectiveKind::Projection,
            oracle_check: false,
            tol: crate::geometry::DEFAULT_TOL,
            trial_workers: 1,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        check_tol(self.tol)?;
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be at least 1".into()));
        }
        if self.r_values.is_empty() || self.n_values.is_empty() {
            return Err(Error::InvalidConfig("empty r or n grid".into()));
        }
        if self.r_values.contains(&0) || self.n_values.contains(&0) {
            return Err(Error::InvalidConfig("r and n must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TrialStatus {
    Minimizer,
    EmptyOrNoMin,
    Failed(String),
}

impl TrialStatus {
    pub fn as_str(&self) -> &str {
        match self {
            Self::Minimizer => "minimizer",
            Self::EmptyOrNoMin => "empty_or_no_min",
            Self::Failed(_) => "error",
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrialResult {
    pub r: usize,
    pub n: usize,
    pub trial: usize,
    pub seed: u64,
    pub time_ns: u64,
    pub counters: Counters,
    pub fraction: f64,
    pub status: TrialStatus,
    pub oracle_match: Option<bool>,
    pub point: Option<Vector>,
}

impl TrialResult {
    pub fn spaces_enumerated(&self) -> u64 {
        self.counters.spaces_enumerated
    }

    pub fn affine_minimizations(&self) -> u64 {
        self.counters.affine_minimizations
    }

    /// One CSV line without the trailing newline. `canonical` blanks the
    /// timing and counter fields.
    pub fn csv_row(&self, canonical: bool) -> String {
        let oracle = match self.oracle_match {
            Some(true) => "true",
            Some(false) => "false",
            None => "",
        };
        if canonical {
            format!(
                "{},{},{},{},,,,,{},{}",
                self.r,
                self.n,
                self.trial,
                self.seed,
                self.status.as_str(),
                oracle
            )
        } else {
            format!(
                "{},{},{},{},{},{},{},{},{},{}",
                self.r,
                self.n,
                self.trial,
                self.seed,
                self.time_ns,
                self.counters.spaces_enumerated,
                self.counters.affine_minimizations,
                self.fraction,
                self.status.as_str(),
                oracle
            )
        }
    }
}

/// The objective for one trial: projection of the query point, or a random
/// positive-definite quadratic centred on it.
pub fn trial_objective(kind: ObjectiveKind, n: usize, seed: u64) -> Result<Objective> {
    let y = random_query_point(n, query_seed(seed))?;
    Ok(match kind {
        ObjectiveKind::Projection => Objective::Projection(crate::objective::ProjectionObjective::new(y)?),
        ObjectiveKind::Quadratic => {
            Objective::Quadratic(QuadraticObjective::new(random_spd(n, splitmix64(seed ^ 0x51)), y)?)
        }
    })
}

#[cfg(not(target_arch = "wasm32"))]
fn now() -> Option<std::time::Instant> {
    Some(std::time::Instant::now())
}

#[cfg(target_arch = "wasm32")]
fn now() -> Option<std::time::Instant> {
    None
}

fn elapsed_ns(start: Option<std::time::Instant>) -> u64 {
    start.map_or(0, |s| s.elapsed().as_nanos().min(u64::MAX as u128) as u64)
}

/// Points agree when every coordinate is within `1e-6`.
pub fn points_match(a: &Vector, b: &Vector) -> bool {
    a.len() == b.len() && a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() <= 1e-6)
}

pub fn outcomes_match(a: &Outcome, b: &Outcome) -> bool {
    match (a.point(), b.point()) {
        (Some(x), Some(y)) => points_match(x, y),
        (None, None) => true,
        _ => false,
    }
}

pub fn run_trial(config: &BenchConfig, r: usize, n: usize, trial: usize) -> TrialResult {
    let seed = trial_seed(config.seed, r, n, trial);
    let mut result = TrialResult {
        r,
        n,
        trial,
        seed,
        time_ns: 0,
        counters: Counters::default(),
        fraction: 0.0,
        status: TrialStatus::Failed(String::new()),
        oracle_match: None,
        point: None,
    };
    let setup = random_polyhedron(r, n, seed).and_then(|p| Ok((p, trial_objective(config.objective, n, seed)?)));
    let (p, obj) = match setup {
        Ok(v) => v,
        Err(e) => {
            result.status = TrialStatus::Failed(e.to_string());
            return result;
        }
    };
    let options = SolveOptions::default().with_tol(config.tol).with_schedule(config.schedule);
    let start = now();
    let solved = optimize_convex(&p, &obj, &options);
    result.time_ns = elapsed_ns(start);
    let report = match solved {
        Ok(rep) => rep,
        Err(e) => {
            result.status = TrialStatus::Failed(e.to_string());
            return result;
        }
    };
    result.counters = report.counters;
    result.fraction = report.counters.affine_minimizations as f64 / affine_space_bound(r, n) as f64;
    result.status = match &report.outcome {
        Outcome::Minimizer { .. } => TrialStatus::Minimizer,
        Outcome::NoMinimumOrEmpty => TrialStatus::EmptyOrNoMin,
    };
    result.point = report.outcome.point().cloned();
    if config.oracle_check && affine_space_bound(r, n) <= ORACLE_BUDGET {
        result.oracle_match = brute_force_optimize(&p, &obj, config.tol)
            .ok()
            .map(|o| outcomes_match(&o, &report.outcome));
    }
    result
}

/// Runs every `(r, n, trial)` of the grid. Rows come back ordered by
/// `(r, n, trial)` whatever the number of trial workers.
pub fn run_benchmark(config: &BenchConfig) -> Result<Vec<TrialResult>> {
    config.validate()?;
    let mut cells = Vec::new();
    for &r in &config.r_values {
        for &n in &config.n_values {
            for t in 0..config.trials {
                cells.push((r, n, t));
            }
        }
    }
    let pool = build_pool(config.trial_workers)?;
    let run = |&(r, n, t): &(usize, usize, usize)| run_trial(config, r, n, t);
    Ok(match pool.as_deref() {
        Some(p) => p.install(|| cells.par_iter().map(run).collect()),
        None => cells.iter().map(run).collect(),
    })
}

pub fn write_csv<W: Write>(rows: &[TrialResult], canonical: bool, mut out: W) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for row in rows {
        writeln!(out, "{}", row.csv_row(canonical))?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellSummary {
    pub r: usize,
    pub n: usize,
    pub trials: usize,
    pub mean_time_ns: f64,
    pub mean_fraction: f64,
    pub mean_affine_minimizations: f64,
    pub mean_spaces_enumerated: f64,
    pub oracle_mismatches: usize,
    pub failures: usize,
}

/// Per-cell means in first-appearance order of `(r, n)`.
pub fn summarize(rows: &[TrialResult]) -> Vec<CellSummary> {
    let mut cells: Vec<CellSummary> = Vec::new();
    for row in rows {
        let idx = match cells.iter().position(|c| c.r == row.r && c.n == row.n) {
            Some(i) => i,
            None => {
                cells.push(CellSummary {
                    r: row.r,
                    n: row.n,
                    trials: 0,
                    mean_time_ns: 0.0,
                    mean_fraction: 0.0,
                    mean_affine_minimizations: 0.0,
                    mean_spaces_enumerated: 0.0,
                    oracle_mismatches: 0,
                    failures: 0,
                });
                cells.len() - 1
            }
        };
        let c = &mut cells[idx];
        c.trials += 1;
        c.mean_time_ns += row.time_ns as f64;
        c.mean_fraction += row.fraction;
        c.mean_affine_minimizations += row.counters.affine_minimizations as f64;
        c.mean_spaces_enumerated += row.counters.spaces_enumerated as f64;
        c.oracle_mismatches += usize::from(row.oracle_match == Some(false));
        c.failures += usize::from(matches!(row.status, TrialStatus::Failed(_)));
    }
    for c in &mut cells {
        let t = c.trials as f64;
        c.mean_time_ns /= t;
        c.mean_fraction /= t;
        c.mean_affine_minimizations /= t;
        c.mean_spaces_enumerated /= t;
    }
    cells
}

pub fn summary_csv(cells: &[CellSummary], canonical: bool) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{SUMMARY_HEADER}");
    for c in cells {
        if canonical {
            let _ = writeln!(s, "{},{},{},,,,,{},{}", c.r, c.n, c.trials, c.oracle_mismatches, c.failures);
        } else {
            let _ = writeln!(
                s,
                "{},{},{},{:.1},{:.6},{:.3},{:.3},{},{}",
                c.r,
                c.n,
                c.trials,
                c.mean_time_ns,
                c.mean_fraction,
                c.mean_affine_minimizations,
                c.mean_spaces_enumerated,
                c.oracle_mismatches,
                c.failures
            );
        }
    }
    s
}

/// Mean fraction as a grid: rows are r, columns n.
pub fn fraction_table(cells: &[CellSummary]) -> String {
    let mut rs: Vec<usize> = cells.iter().map(|c| c.r).collect();
    let mut ns: Vec<usize> = cells.iter().map(|c| c.n).collect();
    rs.sort_unstable();
    rs.dedup();
    ns.sort_unstable();
    ns.dedup();
    let mut s = String::from("r\\n");
    for n in &ns {
        let _ = write!(s, "\t{n}");
    }
    s.push('\n');
    for r in &rs {
        let _ = write!(s, "{r}");
        for n in &ns {
            match cells.iter().find(|c| c.r == *r && c.n == *n) {
                Some(c) => {
                    let _ = write!(s, "\t{:.5}", c.mean_fraction);
                }
                None => s.push('\t'),
            }
        }
        s.push('\n');
    }
    s
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut out = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for k in i..=j {
                out[idx[k]] = avg;
            }
            i = j + 1;
        }
        out
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let m = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / m, ry.iter().sum::<f64>() / m);
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx).powi(2);
        vy += (b - my).powi(2);
    }
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

/// Spearman correlation of `(r, mean fraction)` for each `n` with at least
/// three `r` values.
pub fn fraction_trend(cells: &[CellSummary]) -> Vec<(usize, f64)> {
    let mut ns: Vec<usize> = cells.iter().map(|c| c.n).collect();
    ns.sort_unstable();
    ns.dedup();
    ns.into_iter()
        .filter_map(|n| {
            let mut pts: Vec<(f64, f64)> = cells
                .iter()
                .filter(|c| c.n == n)
                .map(|c| (c.r as f64, c.mean_fraction))
                .collect();
            if pts.len() < 3 {
                return None;
            }
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            Some((n, spearman(&xs, &ys)))
        })
        .collect()
}
