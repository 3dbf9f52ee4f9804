//! Linear geometry in ℝⁿ: half-spaces, convex polyhedra, and the affine
//! spaces cut out by intersecting boundary hyperplanes.
//!
//! All predicates use a relative tolerance `tol · scale`, where the scale
//! grows with the magnitude of the quantities being compared. Normals are
//! kept exactly as supplied; nothing is renormalized on ingestion.

use std::fmt;

use nalgebra::{ColPivQR, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::subsets::Combinations;

pub type Vector = DVector<f64>;

/// Default tolerance for every geometric predicate.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Relative singular-value cutoff used for rank decisions (scaled by `σ_max · n`).
pub const RANK_EPS: f64 = 1e-12;

pub(crate) fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidTolerance(tol))
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// Where a point sits relative to a closed half-space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Inside,
    OnBoundary,
    Outside,
}

/// Closed half-space `{x : ⟨normal, x⟩ ≤ offset}`.
#[derive(Clone, Debug, PartialEq)]
pub struct HalfSpace {
    normal: Vector,
    offset: f64,
    norm: f64,
}

impl HalfSpace {
    pub fn new(normal: Vector, offset: f64) -> Result<Self> {
        if normal.iter().any(|v| !v.is_finite()) || !offset.is_finite() {
            return Err(Error::NonFinite("half-space"));
        }
        if normal.is_empty() {
            return Err(Error::ZeroDimension);
        }
        let norm = normal.norm();
        if norm == 0.0 {
            return Err(Error::ZeroNormal);
        }
        Ok(Self {
            normal,
            offset,
            norm,
        })
    }

    pub fn from_slice(normal: &[f64], offset: f64) -> Result<Self> {
        Self::new(Vector::from_column_slice(normal), offset)
    }

    pub fn normal(&self) -> &Vector {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn normal_norm(&self) -> f64 {
        self.norm
    }

    pub fn dimension(&self) -> usize {
        self.normal.len()
    }

    /// Classifies `x` against the half-space; `OnBoundary` when
    /// `|⟨n, x⟩ − b| ≤ tol · max(1, ‖n‖‖x‖)`.
    pub fn classify(&self, x: &Vector, tol: f64) -> Result<Side> {
        check_dim(self.dimension(), x.len())?;
        check_tol(tol)?;
        Ok(self.side(x, tol))
    }

    #[inline]
    pub(crate) fn side(&self, x: &Vector, tol: f64) -> Side {
        self.side_scaled(x, x.norm(), tol)
    }

    /// [`Self::side`] with `‖x‖` supplied by the caller.
    #[inline]
    pub(crate) fn side_scaled(&self, x: &Vector, x_norm: f64, tol: f64) -> Side {
        let slack = self.normal.dot(x) - self.offset;
        let scale = (self.norm * x_norm).max(1.0);
        if slack.abs() <= tol * scale {
            Side::OnBoundary
        } else if slack < 0.0 {
            Side::Inside
        } else {
            Side::Outside
        }
    }
}

/// Free-function form of [`HalfSpace::classify`].
pub fn halfspace_contains(h: &HalfSpace, x: &Vector, tol: f64) -> Result<Side> {
    h.classify(x, tol)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HalfSpaceJson {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl From<&HalfSpace> for HalfSpaceJson {
    fn from(h: &HalfSpace) -> Self {
        Self {
            normal: h.normal.iter().copied().collect(),
            offset: h.offset,
        }
    }
}

impl TryFrom<&HalfSpaceJson> for HalfSpace {
    type Error = Error;

    fn try_from(h: &HalfSpaceJson) -> Result<Self> {
        HalfSpace::from_slice(&h.normal, h.offset)
    }
}

/// Intersection of finitely many closed half-spaces. With no half-spaces it
/// is the whole of ℝⁿ.
#[derive(Clone, Debug, PartialEq)]
pub struct Polyhedron {
    dimension: usize,
    halfspaces: Vec<HalfSpace>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolyhedronJson {
    pub dimension: usize,
    pub halfspaces: Vec<HalfSpaceJson>,
}

impl Polyhedron {
    pub fn new(dimension: usize, halfspaces: Vec<HalfSpace>) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::ZeroDimension);
        }
        for h in &halfspaces {
            check_dim(dimension, h.dimension())?;
        }
        Ok(Self {
            dimension,
            halfspaces,
        })
    }

    pub fn whole(dimension: usize) -> Result<Self> {
        Self::new(dimension, Vec::new())
    }

    /// Builds from rows of `(normal, offset)` pairs.
    pub fn from_rows(dimension: usize, rows: &[(&[f64], f64)]) -> Result<Self> {
        let hs = rows
            .iter()
            .map(|(n, b)| HalfSpace::from_slice(n, *b))
            .collect::<Result<Vec<_>>>()?;
        Self::new(dimension, hs)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn halfspaces(&self) -> &[HalfSpace] {
        &self.halfspaces
    }

    pub fn len(&self) -> usize {
        self.halfspaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.halfspaces.is_empty()
    }

    /// True iff no half-space classifies `x` as `Outside`.
    pub fn contains(&self, x: &Vector, tol: f64) -> Result<bool> {
        check_dim(self.dimension, x.len())?;
        check_tol(tol)?;
        Ok(self.contains_unchecked(x, tol))
    }

    pub(crate) fn contains_unchecked(&self, x: &Vector, tol: f64) -> bool {
        self.halfspaces
            .iter()
            .all(|h| h.side(x, tol) != Side::Outside)
    }

    pub fn from_json(json: &PolyhedronJson) -> Result<Self> {
        let hs = json
            .halfspaces
            .iter()
            .map(HalfSpace::try_from)
            .collect::<Result<Vec<_>>>()?;
        Self::new(json.dimension, hs)
    }

    pub fn to_json(&self) -> PolyhedronJson {
        PolyhedronJson {
            dimension: self.dimension,
            halfspaces: self.halfspaces.iter().map(HalfSpaceJson::from).collect(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_json(&serde_json::from_str(text)?)
    }
}

/// Free-function form of [`Polyhedron::contains`].
pub fn polyhedron_contains(p: &Polyhedron, x: &Vector, tol: f64) -> Result<bool> {
    p.contains(x, tol)
}

/// Sorted set of half-space indices identifying an affine space: every
/// index whose boundary hyperplane contains the space.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpaceKey(Vec<usize>);

impl std::borrow::Borrow<[usize]> for SpaceKey {
    fn borrow(&self) -> &[usize] {
        &self.0
    }
}

impl SpaceKey {
    pub fn new(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Self(indices)
    }

    pub(crate) fn from_sorted(indices: Vec<usize>) -> Self {
        debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
        Self(indices)
    }

    pub fn root() -> Self {
        Self(Vec::new())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    /// Indices of `self` that are not in `other`.
    pub fn difference<'a>(&'a self, other: &'a SpaceKey) -> impl Iterator<Item = usize> + 'a {
        self.0.iter().copied().filter(move |i| !other.contains(*i))
    }

    pub fn is_subset(&self, other: &SpaceKey) -> bool {
        self.0.iter().all(|i| other.contains(*i))
    }
}

impl fmt::Debug for SpaceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

/// An intersection of boundary hyperplanes in parametric form
/// `anchor + span(directions)`.
#[derive(Clone, Debug)]
pub struct AffineSpace {
    generators: Vec<usize>,
    canonical_key: SpaceKey,
    anchor: Vector,
    /// Orthonormal direction basis, one column per direction.
    directions: DMatrix<f64>,
    /// Orthonormal basis of the orthogonal complement of `directions`.
    normals: DMatrix<f64>,
}

impl AffineSpace {
    /// ℝⁿ itself: anchor at the origin, standard basis directions.
    pub fn whole(dimension: usize) -> Self {
        Self {
            generators: Vec::new(),
            canonical_key: SpaceKey::root(),
            anchor: Vector::zeros(dimension),
            directions: DMatrix::identity(dimension, dimension),
            normals: DMatrix::zeros(dimension, 0),
        }
    }

    pub fn generators(&self) -> &[usize] {
        &self.generators
    }

    pub fn canonical_key(&self) -> &SpaceKey {
        &self.canonical_key
    }

    pub fn anchor(&self) -> &Vector {
        &self.anchor
    }

    /// The direction basis as separate vectors.
    pub fn directions(&self) -> Vec<Vector> {
        self.directions.column_iter().map(|c| c.into_owned()).collect()
    }

    pub fn ambient_dimension(&self) -> usize {
        self.anchor.len()
    }

    pub fn dimension(&self) -> usize {
        self.directions.ncols()
    }

    pub fn codim(&self) -> usize {
        self.ambient_dimension() - self.dimension()
    }

    /// Nearest point of the space to `y`.
    pub fn project(&self, y: &Vector) -> Vector {
        let rel = y - &self.anchor;
        let coeffs = self.normals.tr_mul(&rel);
        y - &self.normals * coeffs
    }

    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        let p = self.project(x);
        (x - p).norm() <= tol * x.norm().max(1.0)
    }

    /// Direction basis as an `n × d` matrix.
    pub fn direction_matrix(&self) -> &DMatrix<f64> {
        &self.directions
    }

    /// True when every direction is parallel to the boundary of `h`.
    pub(crate) fn parallel_to(&self, h: &HalfSpace, tol: f64) -> bool {
        self.directions.column_iter().all(|d| h.normal.dot(&d).abs() <= tol * h.norm)
    }
}

/// Free-function form of [`AffineSpace::project`].
pub fn project_affine(space: &AffineSpace, y: &Vector) -> Result<Vector> {
    check_dim(space.ambient_dimension(), y.len())?;
    Ok(space.project(y))
}

fn validate_generators(count: usize, generators: &[usize]) -> Result<Vec<usize>> {
    let mut g = generators.to_vec();
    g.sort_unstable();
    g.dedup();
    if let Some(&bad) = g.iter().find(|&&i| i >= count) {
        return Err(Error::IndexOutOfRange { index: bad, count });
    }
    Ok(g)
}

/// Solves the intersection of the boundary hyperplanes indexed by
/// `generators`. Returns `None` when the system is inconsistent.
///
/// The anchor is the minimum-norm solution; directions are an orthonormal
/// basis of the null space of the stacked normals. The canonical key adds
/// every other half-space whose boundary contains the result.
pub fn affine_solve(p: &Polyhedron, generators: &[usize], tol: f64) -> Result<Option<AffineSpace>> {
    check_tol(tol)?;
    let g = validate_generators(p.len(), generators)?;
    Ok(solve_within(
        p.halfspaces(),
        p.dimension(),
        &g,
        0..p.len(),
        tol,
    ))
}

/// Core affine solve. `generators` must be sorted, unique, and valid;
/// the canonical key is drawn from `universe`.
pub(crate) fn solve_within(
    halfspaces: &[HalfSpace],
    dim: usize,
    generators: &[usize],
    universe: impl IntoIterator<Item = usize>,
    tol: f64,
) -> Option<AffineSpace> {
    if generators.is_empty() {
        let mut space = AffineSpace::whole(dim);
        // Nonzero normals never contain all of ℝⁿ, so the key stays empty.
        space.canonical_key = SpaceKey::root();
        return Some(space);
    }
    let k = generators.len();
    let f = factor_normals(halfspaces, dim, generators);
    // Minimum-norm solution in the span of the first `rank` columns of Q:
    // with Mᵀ P = Q R, the pivoted equations read R₁₁ᵀ z = (Pᵀ b)₁.
    let mut rhs = Vector::from_iterator(k, generators.iter().map(|&gi| halfspaces[gi].offset));
    f.qr.p().permute_rows(&mut rhs);
    let r = f.qr.r();
    let mut z = Vector::zeros(f.rank);
    for i in 0..f.rank {
        let mut acc = rhs[i];
        for j in 0..i {
            acc -= r[(j, i)] * z[j];
        }
        z[i] = acc / r[(i, i)];
    }
    let row_space = f.qt.rows(0, f.rank).transpose();
    let directions = f.qt.rows(f.rank, dim - f.rank).transpose();
    let anchor = &row_space * z;

    finish_space(halfspaces, generators, anchor, directions, row_space, universe, tol)
}

/// `parent ∩ ∂H_j`, built from the parent's parametrization. `None` when the
/// hyperplane is parallel to `parent`. `generators` is the child's sorted
/// generator set.
pub(crate) fn extend_space(
    halfspaces: &[HalfSpace],
    parent: &AffineSpace,
    j: usize,
    generators: &[usize],
    universe: impl IntoIterator<Item = usize>,
    tol: f64,
) -> Option<AffineSpace> {
    let h = &halfspaces[j];
    let dim = parent.ambient_dimension();
    let d = parent.dimension();
    let w = parent.directions.tr_mul(&h.normal);
    let wn = w.norm();
    if d == 0 || wn <= h.norm * dim as f64 * RANK_EPS {
        return None;
    }
    let unit = &parent.directions * (&w / wn);
    let slack = h.offset - h.normal.dot(&parent.anchor);
    let anchor = &parent.anchor + &unit * (slack / wn);

    // Householder reflection sending w to a multiple of e₀; its other
    // columns span w⊥ inside the parent's direction space.
    let mut v = w.clone();
    v[0] += w[0].signum() * wn;
    let vv = v.norm_squared();
    let reflect = DMatrix::from_fn(d, d - 1, |i, k| {
        let delta = if i == k + 1 { 1.0 } else { 0.0 };
        delta - 2.0 * v[i] * v[k + 1] / vv
    });
    let directions = &parent.directions * reflect;
    let k = parent.normals.ncols();
    let mut normals = parent.normals.clone().insert_column(k, 0.0);
    normals.set_column(k, &unit);
    finish_space(halfspaces, generators, anchor, directions, normals, universe, tol)
}

// Rejects inconsistent generators and builds the canonical key.
fn finish_space(
    halfspaces: &[HalfSpace],
    generators: &[usize],
    anchor: Vector,
    directions: DMatrix<f64>,
    normals: DMatrix<f64>,
    universe: impl IntoIterator<Item = usize>,
    tol: f64,
) -> Option<AffineSpace> {
    let anchor_norm = anchor.norm();
    if generators
        .iter()
        .any(|&gi| halfspaces[gi].side_scaled(&anchor, anchor_norm, tol) != Side::OnBoundary)
    {
        return None;
    }
    let mut space = AffineSpace {
        generators: generators.to_vec(),
        canonical_key: SpaceKey::root(),
        anchor,
        directions,
        normals,
    };

    let mut key = generators.to_vec();
    for j in universe {
        if generators.binary_search(&j).is_ok() {
            continue;
        }
        let h = &halfspaces[j];
        if h.side_scaled(&space.anchor, anchor_norm, tol) == Side::OnBoundary && space.parallel_to(h, tol) {
            key.push(j);
        }
    }
    key.sort_unstable();
    key.dedup();
    space.canonical_key = SpaceKey::from_sorted(key);
    Some(space)
}

struct FactoredNormals {
    qr: ColPivQR<f64, Dyn, Dyn>,
    /// Full `Qᵀ`; its first `rank` rows span the normals.
    qt: DMatrix<f64>,
    rank: usize,
}

// Column-pivoted QR of the transposed normals. nalgebra's SVD sometimes
// stops at around 1e-9 relative accuracy, which is too coarse here.
fn factor_normals(halfspaces: &[HalfSpace], dim: usize, subset: &[usize]) -> FactoredNormals {
    let mut mt = DMatrix::<f64>::zeros(dim, subset.len());
    for (c, &gi) in subset.iter().enumerate() {
        mt.set_column(c, &halfspaces[gi].normal);
    }
    let qr = mt.col_piv_qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..r.nrows().min(r.ncols())).map(|i| r[(i, i)]).collect();
    let cutoff = diag.first().map_or(0.0, |d| d.abs()) * dim as f64 * RANK_EPS;
    let rank = diag.iter().take_while(|d| d.abs() > cutoff).count();
    let mut qt = DMatrix::<f64>::identity(dim, dim);
    qr.q_tr_mul(&mut qt);
    FactoredNormals { qr, qt, rank }
}

/// Numerical rank of the normals indexed by `subset`.
pub(crate) fn normal_rank(halfspaces: &[HalfSpace], dim: usize, subset: &[usize]) -> usize {
    if subset.is_empty() {
        return 0;
    }
    factor_normals(halfspaces, dim, subset).rank
}

/// `Σ_{i ≤ min(n, r)} C(r, i)`: the combinatorial bound on the number of
/// affine spaces of a polyhedron with `r` half-spaces in ℝⁿ.
pub fn affine_space_bound(r: usize, n: usize) -> u128 {
    let mut total: u128 = 0;
    let mut c: u128 = 1;
    for i in 0..=r.min(n) {
        if i > 0 {
            c = c * (r - i + 1) as u128 / i as u128;
        }
        total += c;
    }
    total
}

/// Every distinct nonempty affine space of `p`, keyed canonically, ordered
/// by codimension then key.
pub fn enumerate_affine_spaces(p: &Polyhedron, tol: f64) -> Result<Vec<AffineSpace>> {
    check_tol(tol)?;
    let r = p.len();
    let mut seen = std::collections::BTreeMap::new();
    for size in 0..=r.min(p.dimension()) {
        for subset in Combinations::new(r, size) {
            if let Some(space) = solve_within(p.halfspaces(), p.dimension(), &subset, 0..r, tol) {
                if space.codim() == size {
                    seen.entry((space.codim(), space.canonical_key.clone()))
                        .or_insert(space);
                }
            }
        }
    }
    Ok(seen.into_values().collect())
}
