//! Min-space search over a convex polyhedron.
//!
//! Every affine space `A` of the polyhedron carries a memoized record `m_A`,
//! the minimizer of the objective over its P-cone (the intersection of the
//! half-spaces whose boundaries contain `A`). Records are derived from the
//! records of immediate superspaces: a superspace minimizer that already lies
//! in the cone of `A` but off `A` disqualifies `A` and is inherited;
//! otherwise `A` is a candidate and its minimizer is computed on `A` itself.
//! The first candidate minimizer that lies in the polyhedron is the answer.

use std::collections::{BTreeSet, HashMap};

use rustc_hash::FxHashMap;
use std::ops::AddAssign;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use rayon::ThreadPool;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    check_dim, check_tol, normal_rank, extend_space, solve_within, AffineSpace, HalfSpace, Polyhedron, Side,
    SpaceKey, Vector, DEFAULT_TOL,
};
use crate::objective::{ProjectionObjective, StrictlyConvexObjective};
use crate::schedule::{HalfspaceOrdering, Schedule, ScheduleKind};
use crate::subsets::subsets_of;

/// How a cone minimizer was obtained.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Minimized directly over the affine space.
    ComputedOnAffine,
    /// Taken from a superspace whose cone minimizer lies in this cone.
    InheritedFrom(SpaceKey),
    /// A superspace minimizer lies on this space, so it is reused as is.
    OnBoundaryShortcut,
}

/// Memoized minimizer of the objective over the P-cone of one affine space.
#[derive(Clone, Debug)]
pub struct ConeMinRecord {
    pub key: SpaceKey,
    pub generators: Vec<usize>,
    pub codim: usize,
    pub minimizer: Option<Vector>,
    pub value: Option<f64>,
    pub provenance: Provenance,
    pub examined: bool,
}

impl ConeMinRecord {
    pub fn is_candidate(&self) -> bool {
        !matches!(self.provenance, Provenance::InheritedFrom(_))
    }
}

#[derive(Clone, Debug)]
pub enum FilterOutcome {
    Candidate(ConeMinRecord),
    Disqualified(ConeMinRecord),
}

impl FilterOutcome {
    pub fn record(&self) -> &ConeMinRecord {
        match self {
            Self::Candidate(r) | Self::Disqualified(r) => r,
        }
    }

    pub fn into_record(self) -> ConeMinRecord {
        match self {
            Self::Candidate(r) | Self::Disqualified(r) => r,
        }
    }

    pub fn is_candidate(&self) -> bool {
        matches!(self, Self::Candidate(_))
    }
}

/// Work counters. Only work committed by the search is counted, so the
/// values do not depend on the number of worker threads.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub inner_products: u64,
    pub affine_minimizations: u64,
    pub spaces_enumerated: u64,
    pub affine_solves: u64,
    pub degenerate_aliases: u64,
    pub ordering_minimizations: u64,
}

impl AddAssign for Counters {
    fn add_assign(&mut self, o: Self) {
        self.inner_products += o.inner_products;
        self.affine_minimizations += o.affine_minimizations;
        self.spaces_enumerated += o.spaces_enumerated;
        self.affine_solves += o.affine_solves;
        self.degenerate_aliases += o.degenerate_aliases;
        self.ordering_minimizations += o.ordering_minimizations;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Outcome {
    Minimizer {
        point: Vector,
        value: f64,
        min_space: SpaceKey,
    },
    NoMinimumOrEmpty,
}

impl Outcome {
    pub fn point(&self) -> Option<&Vector> {
        match self {
            Self::Minimizer { point, .. } => Some(point),
            Self::NoMinimumOrEmpty => None,
        }
    }

    pub fn is_empty_or_no_min(&self) -> bool {
        matches!(self, Self::NoMinimumOrEmpty)
    }
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub outcome: Outcome,
    pub counters: Counters,
    /// Published records ordered by `(codim, key)`; empty unless requested.
    pub records: Vec<ConeMinRecord>,
}

impl SolveReport {
    pub fn record(&self, key: &[usize]) -> Option<&ConeMinRecord> {
        self.records.iter().find(|r| r.key.indices() == key)
    }
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub tol: f64,
    pub schedule: Schedule,
    /// Return every published record in the report.
    pub keep_records: bool,
    /// Examine every affine space instead of stopping at the first
    /// sufficiency hit (level-synchronous only).
    pub exhaustive: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            schedule: Schedule::default(),
            keep_records: false,
            exhaustive: false,
        }
    }
}

impl SolveOptions {
    pub fn with_schedule(mut self, schedule: Schedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn keep_records(mut self) -> Self {
        self.keep_records = true;
        self
    }

    pub fn exhaustive(mut self) -> Self {
        self.exhaustive = true;
        self.keep_records = true;
        self
    }
}

/// Decides whether the superspace records disqualify `space`, producing the
/// cone record for `space` either way.
///
/// `space.canonical_key()` indexes into `halfspaces`. Each superspace record
/// must already be examined.
pub fn filter_candidate<O: StrictlyConvexObjective + ?Sized>(
    space: &AffineSpace,
    halfspaces: &[HalfSpace],
    superspaces: &[&ConeMinRecord],
    obj: &O,
    tol: f64,
    counters: &mut Counters,
) -> FilterOutcome {
    let key = space.canonical_key();
    for b in superspaces {
        let Some(m_b) = b.minimizer.as_ref() else {
            continue;
        };
        // m_B already satisfies B's half-spaces; only the new ones can fail.
        let mut outside = false;
        let mut on_all_new = true;
        for i in key.difference(&b.key) {
            counters.inner_products += 1;
            match halfspaces[i].side(m_b, tol) {
                Side::Outside => {
                    outside = true;
                    break;
                }
                Side::Inside => on_all_new = false,
                Side::OnBoundary => {}
            }
        }
        if outside {
            continue;
        }
        // m_B ∈ P_A. It lies on A iff it is on every hyperplane of the key.
        let on_space = on_all_new
            && b.key.indices().iter().all(|&i| {
                counters.inner_products += 1;
                halfspaces[i].side(m_b, tol) == Side::OnBoundary
            });
        let record = ConeMinRecord {
            key: key.clone(),
            generators: space.generators().to_vec(),
            codim: space.codim(),
            minimizer: Some(m_b.clone()),
            value: b.value,
            provenance: if on_space {
                Provenance::OnBoundaryShortcut
            } else {
                Provenance::InheritedFrom(b.key.clone())
            },
            examined: true,
        };
        return if on_space {
            FilterOutcome::Candidate(record)
        } else {
            FilterOutcome::Disqualified(record)
        };
    }
    counters.affine_minimizations += 1;
    let minimizer = obj.argmin_affine(space);
    let value = minimizer.as_ref().map(|m| obj.eval(m));
    FilterOutcome::Candidate(ConeMinRecord {
        key: key.clone(),
        generators: space.generators().to_vec(),
        codim: space.codim(),
        minimizer,
        value,
        provenance: Provenance::ComputedOnAffine,
        examined: true,
    })
}

/// Generator subsets of size `codim` inside `key` whose normals have full
/// rank, ordered lexicographically by `position`.
pub(crate) fn generating_subsets(
    halfspaces: &[HalfSpace],
    dim: usize,
    key: &SpaceKey,
    codim: usize,
    position: &[usize],
) -> Vec<Vec<usize>> {
    if key.len() == codim {
        return vec![key.indices().to_vec()];
    }
    let mut by_pos = key.indices().to_vec();
    by_pos.sort_by_key(|&i| position[i]);
    subsets_of(&by_pos, codim)
        .filter(|s| normal_rank(halfspaces, dim, s) == codim)
        .map(|mut s| {
            s.sort_unstable();
            s
        })
        .collect()
}

/// Keys of the immediate superspaces of `space`, sorted.
pub fn immediate_superspaces(p: &Polyhedron, space: &AffineSpace, tol: f64) -> Result<Vec<SpaceKey>> {
    check_tol(tol)?;
    let identity: Vec<usize> = (0..p.len()).collect();
    let codim = space.codim();
    let mut out = BTreeSet::new();
    if codim == 0 {
        return Ok(Vec::new());
    }
    for g in generating_subsets(p.halfspaces(), p.dimension(), space.canonical_key(), codim, &identity) {
        for skip in 0..g.len() {
            let u: Vec<usize> = g.iter().enumerate().filter(|&(i, _)| i != skip).map(|(_, &x)| x).collect();
            if let Some(b) = solve_within(p.halfspaces(), p.dimension(), &u, 0..p.len(), tol) {
                out.insert(b.canonical_key().clone());
            }
        }
    }
    Ok(out.into_iter().collect())
}

/// Result of examining one generator subset.
enum TaskOutcome {
    /// Inconsistent or rank-deficient; the space, if any, lives at a lower level.
    Skip,
    /// Belongs to a later ordering group.
    Deferred(SpaceKey),
    /// Another generator subset owns this space.
    Alias(SpaceKey),
    Space { record: ConeMinRecord, hit: bool },
}

struct TaskResult {
    subset: Vec<usize>,
    space: Option<AffineSpace>,
    outcome: TaskOutcome,
    counters: Counters,
}

/// A generator subset that produced a space, kept so the next level can
/// extend it. The space is dropped once it can no longer be extended.
type Found = (Vec<usize>, Option<AffineSpace>);

pub(crate) fn par_map<T, U, F>(pool: Option<&ThreadPool>, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    match pool {
        Some(p) => p.install(|| items.par_iter().map(&f).collect()),
        None => items.iter().map(f).collect(),
    }
}

/// Shared pool for `workers` threads; `None` runs inline on the caller.
pub(crate) fn build_pool(workers: usize) -> Result<Option<Arc<ThreadPool>>> {
    static POOLS: OnceLock<Mutex<HashMap<usize, Arc<ThreadPool>>>> = OnceLock::new();
    if workers <= 1 {
        return Ok(None);
    }
    let mut pools = POOLS.get_or_init(Default::default).lock().unwrap_or_else(|e| e.into_inner());
    if let Some(p) = pools.get(&workers) {
        return Ok(Some(Arc::clone(p)));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::ThreadPool(e.to_string()))?;
    let pool = Arc::new(pool);
    pools.insert(workers, Arc::clone(&pool));
    Ok(Some(pool))
}

pub(crate) struct Search<'a, O: ?Sized> {
    poly: &'a Polyhedron,
    obj: &'a O,
    tol: f64,
    position: Vec<usize>,
    memo: FxHashMap<SpaceKey, ConeMinRecord>,
    /// Keys of generator subsets that differ from the subset itself.
    subset_keys: FxHashMap<Vec<usize>, SpaceKey>,
    counters: Counters,
    pool: Option<Arc<ThreadPool>>,
}

const CHUNK_PER_WORKER: usize = 64;

impl<'a, O: StrictlyConvexObjective + ?Sized> Search<'a, O> {
    pub(crate) fn new(poly: &'a Polyhedron, obj: &'a O, tol: f64, workers: usize) -> Result<Self> {
        check_tol(tol)?;
        check_dim(poly.dimension(), obj.dimension())?;
        Ok(Self {
            poly,
            obj,
            tol,
            position: (0..poly.len()).collect(),
            memo: FxHashMap::default(),
            subset_keys: FxHashMap::default(),
            counters: Counters::default(),
            pool: build_pool(workers)?,
        })
    }

    fn workers(&self) -> usize {
        self.pool.as_ref().map_or(1, |p| p.current_num_threads())
    }

    /// Examines ℝⁿ. Returns the outcome if its minimizer is feasible.
    fn examine_root(&mut self) -> Option<Outcome> {
        self.counters.affine_minimizations += 1;
        self.counters.spaces_enumerated += 1;
        let minimizer = self.obj.argmin_global();
        let value = minimizer.as_ref().map(|m| self.obj.eval(m));
        let record = ConeMinRecord {
            key: SpaceKey::root(),
            generators: Vec::new(),
            codim: 0,
            minimizer,
            value,
            provenance: Provenance::ComputedOnAffine,
            examined: true,
        };
        let hit = self.check_sufficient(&record, &mut Counters::default());
        self.counters.inner_products += self.poly.len() as u64;
        let out = hit.then(|| self.outcome_of(&record));
        self.memo.insert(SpaceKey::root(), record);
        out
    }

    fn check_sufficient(&self, record: &ConeMinRecord, counters: &mut Counters) -> bool {
        if !record.is_candidate() {
            return false;
        }
        match &record.minimizer {
            Some(m) => {
                counters.inner_products += self.poly.len() as u64;
                self.poly.contains_unchecked(m, self.tol)
            }
            None => false,
        }
    }

    fn outcome_of(&self, record: &ConeMinRecord) -> Outcome {
        let point = record.minimizer.clone().expect("hit records carry a minimizer");
        Outcome::Minimizer {
            value: record.value.unwrap_or_else(|| self.obj.eval(&point)),
            point,
            min_space: record.key.clone(),
        }
    }

    fn key_of_subset(&self, subset: &[usize], counters: &mut Counters) -> Option<SpaceKey> {
        if subset.is_empty() {
            return Some(SpaceKey::root());
        }
        if let Some(k) = self.subset_keys.get(subset) {
            return Some(k.clone());
        }
        if self.memo.contains_key(subset) {
            return Some(SpaceKey::from_sorted(subset.to_vec()));
        }
        counters.affine_solves += 1;
        solve_within(self.poly.halfspaces(), self.poly.dimension(), subset, 0..self.poly.len(), self.tol)
            .map(|s| s.canonical_key().clone())
    }

    /// Examines one generator subset of size `codim`, the space of `parent`
    /// cut by hyperplane `added`. With `group`, the subset belongs to the
    /// ordered schedule's group for that position and must contain the
    /// half-space at that position.
    fn process(
        &self,
        subset: &[usize],
        parent: &AffineSpace,
        added: usize,
        group: Option<usize>,
    ) -> Result<TaskResult> {
        let mut counters = Counters::default();
        let codim = subset.len();
        let hs = self.poly.halfspaces();
        counters.affine_solves += 1;
        let space = match extend_space(hs, parent, added, subset, 0..self.poly.len(), self.tol) {
            Some(s) if s.codim() == codim => s,
            _ => {
                return Ok(TaskResult {
                    subset: subset.to_vec(),
                    space: None,
                    outcome: TaskOutcome::Skip,
                    counters,
                })
            }
        };
        let key = space.canonical_key().clone();
        let dim = self.poly.dimension();
        let done = |outcome, counters, space| {
            Ok(TaskResult {
                subset: subset.to_vec(),
                space: Some(space),
                outcome,
                counters,
            })
        };

        let owner_pos = group;
        if let Some(k) = owner_pos {
            let max_pos = key.indices().iter().map(|&i| self.position[i]).max().unwrap_or(0);
            if max_pos > k {
                return done(TaskOutcome::Deferred(key), counters, space);
            }
        }

        let gens = generating_subsets(hs, dim, &key, codim, &self.position);
        let owner = match owner_pos {
            Some(k) => gens.iter().find(|g| g.iter().any(|&i| self.position[i] == k)),
            None => gens.first(),
        };
        if owner.map(|g| g.as_slice()) != Some(subset) {
            return done(TaskOutcome::Alias(key), counters, space);
        }

        let mut super_keys = BTreeSet::new();
        for g in &gens {
            for skip in 0..g.len() {
                let u: Vec<usize> = g
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != skip)
                    .map(|(_, &x)| x)
                    .collect();
                if let Some(k) = self.key_of_subset(&u, &mut counters) {
                    super_keys.insert(k);
                }
            }
        }
        let mut supers = Vec::with_capacity(super_keys.len());
        for k in &super_keys {
            match self.memo.get(k) {
                Some(r) if r.examined => supers.push(r),
                _ => return Err(Error::MissingSuperspaceRecord(k.indices().to_vec())),
            }
        }

        debug_assert_eq!(space.generators(), subset);
        let outcome = filter_candidate(&space, hs, &supers, self.obj, self.tol, &mut counters);
        let record = outcome.into_record();
        let hit = self.check_sufficient(&record, &mut counters);
        done(TaskOutcome::Space { record, hit }, counters, space)
    }

    /// Publishes one task's result. Returns the record key when it is a
    /// sufficiency hit.
    fn commit(&mut self, result: TaskResult, found: &mut Vec<Found>, extendable: bool) -> Option<SpaceKey> {
        self.counters += result.counters;
        let space = if extendable { result.space } else { None };
        match result.outcome {
            TaskOutcome::Skip => None,
            TaskOutcome::Deferred(key) => {
                self.subset_keys.insert(result.subset.clone(), key);
                found.push((result.subset, space));
                None
            }
            TaskOutcome::Alias(key) => {
                self.counters.degenerate_aliases += 1;
                self.subset_keys.insert(result.subset.clone(), key);
                found.push((result.subset, space));
                None
            }
            TaskOutcome::Space { record, hit } => {
                self.counters.spaces_enumerated += 1;
                let key = record.key.clone();
                if key.indices() != result.subset.as_slice() {
                    self.subset_keys.insert(result.subset.clone(), key.clone());
                }
                found.push((result.subset, space));
                self.memo.insert(key.clone(), record);
                hit.then_some(key)
            }
        }
    }

    fn finish(self, outcome: Outcome, keep_records: bool) -> SolveReport {
        let records = if keep_records {
            let mut v: Vec<ConeMinRecord> = self.memo.into_values().collect();
            v.sort_by(|a, b| (a.codim, &a.key).cmp(&(b.codim, &b.key)));
            v
        } else {
            Vec::new()
        };
        SolveReport {
            outcome,
            counters: self.counters,
            records,
        }
    }

    /// Codimension levels in order; within a level, generator subsets in
    /// lexicographic order, processed in fixed-size chunks.
    pub(crate) fn run_level_sync(mut self, keep_records: bool, exhaustive: bool) -> Result<SolveReport> {
        let mut first_hit: Option<Outcome> = self.examine_root();
        if !exhaustive {
            if let Some(hit) = first_hit.take() {
                return Ok(self.finish(hit, keep_records));
            }
        }
        let r = self.poly.len();
        let max_level = r.min(self.poly.dimension());
        let chunk_len = CHUNK_PER_WORKER * self.workers();
        let mut prev: Vec<Found> = vec![(Vec::new(), Some(AffineSpace::whole(self.poly.dimension())))];
        for level in 1..=max_level {
            let mut found = Vec::new();
            let mut chunk: Vec<(Vec<usize>, &AffineSpace, usize)> = Vec::with_capacity(chunk_len);
            let candidates = prev.iter().flat_map(|(t, space)| {
                let start = t.last().map_or(0, |&l| l + 1);
                let space = space.as_ref().expect("lower levels keep their spaces");
                (start..r).map(move |j| {
                    let mut s = t.clone();
                    s.push(j);
                    (s, space, j)
                })
            });
            let mut candidates = candidates.peekable();
            while candidates.peek().is_some() {
                chunk.clear();
                chunk.extend(candidates.by_ref().take(chunk_len));
                let results = par_map(self.pool.as_deref(), &chunk, |(s, parent, j)| self.process(s, parent, *j, None));
                for result in results {
                    if let Some(key) = self.commit(result?, &mut found, level < max_level) {
                        if first_hit.is_none() {
                            first_hit = Some(self.outcome_of(&self.memo[&key]));
                        }
                        if !exhaustive {
                            return Ok(self.finish(first_hit.unwrap(), keep_records));
                        }
                    }
                }
            }
            if found.is_empty() {
                break;
            }
            prev = found;
        }
        let outcome = first_hit.unwrap_or(Outcome::NoMinimumOrEmpty);
        Ok(self.finish(outcome, keep_records))
    }

    /// Ordered-half-space schedule: spaces are grouped by the largest
    /// ordering position among their hyperplanes; a group is dispatched level
    /// by level once every earlier group is examined, and the first hit is
    /// returned after its whole group is examined.
    pub(crate) fn run_ordered(mut self, ordering: &HalfspaceOrdering, keep_records: bool) -> Result<SolveReport> {
        self.counters.ordering_minimizations += ordering.boundary_minima.len() as u64;
        self.position = ordering.positions();
        if let Some(out) = self.examine_root() {
            return Ok(self.finish(out, keep_records));
        }
        let r = self.poly.len();
        let n = self.poly.dimension();
        let mut found: Vec<Vec<Found>> = vec![vec![(Vec::new(), Some(AffineSpace::whole(n)))]];
        for (k, &h) in ordering.permutation.iter().enumerate() {
            let prefix: Vec<usize> = found.iter().map(Vec::len).collect();
            let mut hits: Vec<SpaceKey> = Vec::new();
            for c in 1..=n.min(k + 1) {
                if found.len() <= c {
                    found.push(Vec::new());
                }
                let batch: Vec<(Vec<usize>, &AffineSpace)> = found[c - 1][..prefix.get(c - 1).copied().unwrap_or(0)]
                    .iter()
                    .map(|(t, space)| {
                        let mut s = t.clone();
                        let at = s.partition_point(|&x| x < h);
                        s.insert(at, h);
                        (s, space.as_ref().expect("lower levels keep their spaces"))
                    })
                    .collect();
                if batch.is_empty() {
                    break;
                }
                let results = par_map(self.pool.as_deref(), &batch, |(s, parent)| self.process(s, parent, h, Some(k)));
                let mut level_found = Vec::new();
                for result in results {
                    if let Some(key) = self.commit(result?, &mut level_found, c < n) {
                        hits.push(key);
                    }
                }
                found[c].extend(level_found);
            }
            if let Some(key) = hits.first() {
                let out = self.outcome_of(&self.memo[key]);
                return Ok(self.finish(out, keep_records));
            }
            debug_assert!(k < r);
        }
        Ok(self.finish(Outcome::NoMinimumOrEmpty, keep_records))
    }
}

/// Minimizes `obj` over `p` with the configured schedule.
pub fn optimize_convex<O: StrictlyConvexObjective + ?Sized>(
    p: &Polyhedron,
    obj: &O,
    options: &SolveOptions,
) -> Result<SolveReport> {
    crate::schedule::execute(p, obj, options)
}

/// True iff `p` is empty, decided by projecting the origin onto it.
pub fn certify_empty(p: &Polyhedron, tol: f64) -> Result<bool> {
    let origin = ProjectionObjective::new(Vector::zeros(p.dimension()))?;
    let options = SolveOptions::default().with_tol(tol).with_schedule(Schedule {
        kind: ScheduleKind::LevelSync,
        ..Schedule::default()
    });
    Ok(optimize_convex(p, &origin, &options)?.outcome.is_empty_or_no_min())
}
