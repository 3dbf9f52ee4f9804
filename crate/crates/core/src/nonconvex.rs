//! Non-convex polyhedra described by a face lattice.
//!
//! Every face is convex. Faces of dimension `n - 1` (facets) carry a
//! supporting half-space oriented so that the polyhedron lies locally inside;
//! every lower face lists the facets that meet in it. The search visits the
//! affine hull of each face, minimizes over the cone cut out by that face's
//! facets, and keeps the minimizers that land in their own face.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    check_dim, check_tol, solve_within, AffineSpace, HalfSpace, HalfSpaceJson, Polyhedron, Side, SpaceKey, Vector,
    DEFAULT_TOL,
};
use crate::harness::lex_less;
use crate::objective::StrictlyConvexObjective;
use crate::schedule::Schedule;
use crate::solver::{build_pool, filter_candidate, generating_subsets, par_map, ConeMinRecord, Counters, Provenance};

/// One face as supplied by the caller.
#[derive(Clone, Debug)]
pub struct FaceSpec {
    pub id: usize,
    pub dim: usize,
    pub halfspace: Option<HalfSpace>,
    /// Facet ids meeting in this face. A facet may list itself or nothing.
    pub generators: Vec<usize>,
    pub local_halfspaces: Vec<HalfSpace>,
}

#[derive(Clone, Debug)]
pub struct Face {
    id: usize,
    dim: usize,
    halfspace: Option<HalfSpace>,
    generators: Vec<usize>,
    local_halfspaces: Vec<HalfSpace>,
    affine_hull: AffineSpace,
    facet_key: Vec<usize>,
}

impl Face {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn halfspace(&self) -> Option<&HalfSpace> {
        self.halfspace.as_ref()
    }

    /// Ids of the facets meeting in this face; a facet lists itself.
    pub fn generators(&self) -> &[usize] {
        &self.generators
    }

    pub fn local_halfspaces(&self) -> &[HalfSpace] {
        &self.local_halfspaces
    }

    pub fn affine_hull(&self) -> &AffineSpace {
        &self.affine_hull
    }

    fn is_top(&self) -> bool {
        self.dim == self.affine_hull.ambient_dimension()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FaceJson {
    pub id: usize,
    pub dim: usize,
    #[serde(default)]
    pub halfspace: Option<HalfSpaceJson>,
    #[serde(default)]
    pub generators: Vec<usize>,
    #[serde(default)]
    pub local_halfspaces: Vec<HalfSpaceJson>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FaceLatticeJson {
    pub dimension: usize,
    pub faces: Vec<FaceJson>,
    /// Optional convex pieces whose union is the polyhedron, used for
    /// membership of the top face.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pieces: Option<Vec<Vec<HalfSpaceJson>>>,
}

#[derive(Clone, Debug)]
pub struct FaceLattice {
    dimension: usize,
    faces: Vec<Face>,
    by_id: HashMap<usize, usize>,
    top: usize,
    /// Face position of each facet, in facet-table order.
    facets: Vec<usize>,
    facet_halfspaces: Vec<HalfSpace>,
    pieces: Option<Vec<Polyhedron>>,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidLattice(msg.into())
}

impl FaceLattice {
    pub fn new(dimension: usize, specs: Vec<FaceSpec>, pieces: Option<Vec<Polyhedron>>) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::ZeroDimension);
        }
        let n = dimension;
        let mut by_id = HashMap::new();
        for (pos, f) in specs.iter().enumerate() {
            if by_id.insert(f.id, pos).is_some() {
                return Err(invalid(format!("duplicate face id {}", f.id)));
            }
            if f.dim > n {
                return Err(invalid(format!("face {} has dimension {} > {n}", f.id, f.dim)));
            }
            for h in f.halfspace.iter().chain(&f.local_halfspaces) {
                check_dim(n, h.dimension())?;
            }
        }
        let tops: Vec<usize> = (0..specs.len()).filter(|&p| specs[p].dim == n).collect();
        if tops.len() != 1 {
            return Err(invalid(format!("expected one top face, found {}", tops.len())));
        }
        let top = tops[0];
        if specs[top].halfspace.is_some() {
            return Err(invalid("the top face has no supporting half-space"));
        }

        let facets: Vec<usize> = (0..specs.len()).filter(|&p| specs[p].dim + 1 == n).collect();
        let mut facet_index = HashMap::new();
        let mut facet_halfspaces = Vec::with_capacity(facets.len());
        for (k, &pos) in facets.iter().enumerate() {
            let f = &specs[pos];
            let h = f
                .halfspace
                .clone()
                .ok_or_else(|| invalid(format!("facet {} has no half-space", f.id)))?;
            if !(f.generators.is_empty() || f.generators == [f.id]) {
                return Err(invalid(format!("facet {} may only list itself as generator", f.id)));
            }
            facet_index.insert(f.id, k);
            facet_halfspaces.push(h);
        }

        let mut faces = Vec::with_capacity(specs.len());
        for (pos, spec) in specs.into_iter().enumerate() {
            let (generators, facet_key) = if pos == top {
                if !spec.generators.is_empty() {
                    return Err(invalid("the top face has no generators"));
                }
                (Vec::new(), Vec::new())
            } else if spec.dim + 1 == n {
                (vec![spec.id], vec![facet_index[&spec.id]])
            } else {
                if spec.halfspace.is_some() {
                    return Err(invalid(format!("face {} is not a facet but has a half-space", spec.id)));
                }
                if spec.generators.is_empty() {
                    return Err(invalid(format!("face {} lists no generators", spec.id)));
                }
                let mut key = Vec::with_capacity(spec.generators.len());
                for g in &spec.generators {
                    match facet_index.get(g) {
                        Some(&k) => key.push(k),
                        None => return Err(invalid(format!("face {} lists {g}, which is not a facet", spec.id))),
                    }
                }
                key.sort_unstable();
                key.dedup();
                let mut gens = spec.generators.clone();
                gens.sort_unstable();
                gens.dedup();
                (gens, key)
            };
            let hull = solve_within(&facet_halfspaces, n, &facet_key, facet_key.iter().copied(), DEFAULT_TOL)
                .ok_or_else(|| invalid(format!("facets of face {} do not intersect", spec.id)))?;
            if hull.dimension() != spec.dim {
                return Err(invalid(format!(
                    "face {} has dimension {} but its facets meet in dimension {}",
                    spec.id,
                    spec.dim,
                    hull.dimension()
                )));
            }
            faces.push(Face {
                id: spec.id,
                dim: spec.dim,
                halfspace: spec.halfspace,
                generators,
                local_halfspaces: spec.local_halfspaces,
                affine_hull: hull,
                facet_key,
            });
        }
        if let Some(ps) = &pieces {
            for p in ps {
                check_dim(n, p.dimension())?;
            }
        }
        let lattice = Self {
            dimension,
            faces,
            by_id,
            top,
            facets,
            facet_halfspaces,
            pieces,
        };
        lattice.check_orientation()?;
        Ok(lattice)
    }

    /// Each facet with known vertices must have the polyhedron on its inner
    /// side just next to the facet centre.
    fn check_orientation(&self) -> Result<()> {
        for (k, &pos) in self.facets.iter().enumerate() {
            let verts: Vec<&Vector> = self
                .faces
                .iter()
                .filter(|f| f.dim == 0 && f.facet_key.contains(&k))
                .map(|f| f.affine_hull.anchor())
                .collect();
            if verts.is_empty() {
                continue;
            }
            let mut centre = Vector::zeros(self.dimension);
            for v in &verts {
                centre += *v;
            }
            centre /= verts.len() as f64;
            let h = &self.facet_halfspaces[k];
            let unit = h.normal() / h.normal_norm();
            let step = 1e-6 * (1.0 + centre.norm());
            let inner = &centre - &unit * step;
            let outer = &centre + &unit * step;
            if !self.top_contains(&inner, DEFAULT_TOL) || self.top_contains(&outer, DEFAULT_TOL) {
                return Err(invalid(format!(
                    "facet {} is not oriented with the polyhedron on its inner side",
                    self.faces[pos].id
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(json: &FaceLatticeJson) -> Result<Self> {
        let mut specs = Vec::with_capacity(json.faces.len());
        for f in &json.faces {
            specs.push(FaceSpec {
                id: f.id,
                dim: f.dim,
                halfspace: f.halfspace.as_ref().map(HalfSpace::try_from).transpose()?,
                generators: f.generators.clone(),
                local_halfspaces: f
                    .local_halfspaces
                    .iter()
                    .map(HalfSpace::try_from)
                    .collect::<Result<_>>()?,
            });
        }
        let pieces = match &json.pieces {
            Some(ps) => Some(
                ps.iter()
                    .map(|hs| Polyhedron::new(json.dimension, hs.iter().map(HalfSpace::try_from).collect::<Result<_>>()?))
                    .collect::<Result<Vec<_>>>()?,
            ),
            None => None,
        };
        Self::new(json.dimension, specs, pieces)
    }

    pub fn to_json(&self) -> FaceLatticeJson {
        FaceLatticeJson {
            dimension: self.dimension,
            faces: self
                .faces
                .iter()
                .map(|f| FaceJson {
                    id: f.id,
                    dim: f.dim,
                    halfspace: f.halfspace.as_ref().map(HalfSpaceJson::from),
                    generators: if f.dim + 1 == self.dimension { Vec::new() } else { f.generators.clone() },
                    local_halfspaces: f.local_halfspaces.iter().map(HalfSpaceJson::from).collect(),
                })
                .collect(),
            pieces: self.pieces.as_ref().map(|ps| {
                ps.iter()
                    .map(|p| p.halfspaces().iter().map(HalfSpaceJson::from).collect())
                    .collect()
            }),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_json(&serde_json::from_str(text)?)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn face(&self, id: usize) -> Option<&Face> {
        self.by_id.get(&id).map(|&p| &self.faces[p])
    }

    pub fn top(&self) -> &Face {
        &self.faces[self.top]
    }

    pub fn facet_halfspaces(&self) -> &[HalfSpace] {
        &self.facet_halfspaces
    }

    /// Face ids of the facets in facet-table order.
    pub fn facet_ids(&self) -> Vec<usize> {
        self.facets.iter().map(|&p| self.faces[p].id).collect()
    }

    fn face_or_err(&self, id: usize) -> Result<&Face> {
        self.face(id).ok_or(Error::IndexOutOfRange {
            index: id,
            count: self.faces.len(),
        })
    }

    /// Membership in the whole polyhedron.
    pub fn top_contains(&self, x: &Vector, tol: f64) -> bool {
        if let Some(ps) = &self.pieces {
            return ps.iter().any(|p| p.contains_unchecked(x, tol));
        }
        if self.facets.iter().any(|&p| self.in_face(&self.faces[p], x, tol)) {
            return true;
        }
        self.ray_parity(x, tol)
    }

    /// Parity of facet crossings along a ray. Rays grazing a facet's
    /// relative boundary are retried in another direction.
    fn ray_parity(&self, x: &Vector, tol: f64) -> bool {
        let mut rng = ChaCha8Rng::seed_from_u64(0x7261_7963);
        let mut inside = false;
        for _ in 0..32 {
            let d = Vector::from_fn(self.dimension, |_, _| rng.random_range(-1.0..1.0));
            if d.norm() < 1e-3 {
                continue;
            }
            let mut crossings = 0usize;
            let mut grazing = false;
            for (k, &pos) in self.facets.iter().enumerate() {
                let h = &self.facet_halfspaces[k];
                let denom = h.normal().dot(&d);
                if denom.abs() <= 1e-12 * h.normal_norm() * d.norm() {
                    continue;
                }
                let t = (h.offset() - h.normal().dot(x)) / denom;
                if t <= 0.0 {
                    continue;
                }
                let hit = x + &d * t;
                let mut outside = false;
                for l in &self.faces[pos].local_halfspaces {
                    match l.side(&hit, tol.max(1e-9)) {
                        Side::Outside => {
                            outside = true;
                            break;
                        }
                        Side::OnBoundary => grazing = true,
                        Side::Inside => {}
                    }
                }
                if !outside {
                    crossings += 1;
                }
            }
            inside = crossings % 2 == 1;
            if !grazing {
                break;
            }
        }
        inside
    }

    fn in_face(&self, face: &Face, x: &Vector, tol: f64) -> bool {
        face.facet_key
            .iter()
            .all(|&k| self.facet_halfspaces[k].side(x, tol) == Side::OnBoundary)
            && face.local_halfspaces.iter().all(|l| l.side(x, tol) != Side::Outside)
    }

    /// A single convex polygon in the plane, vertices counter-clockwise.
    pub fn convex_polygon(vertices: &[[f64; 2]]) -> Result<Self> {
        let m = vertices.len();
        if m < 3 {
            return Err(invalid("a polygon needs at least three vertices"));
        }
        let vs: Vec<Vector> = vertices.iter().map(|v| Vector::from_vec(v.to_vec())).collect();
        for i in 0..m {
            let (a, b, c) = (&vs[i], &vs[(i + 1) % m], &vs[(i + 2) % m]);
            let cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]);
            if cross <= 0.0 {
                return Err(invalid("vertices must be strictly convex and counter-clockwise"));
            }
        }
        let mut specs = vec![FaceSpec {
            id: 0,
            dim: 2,
            halfspace: None,
            generators: Vec::new(),
            local_halfspaces: Vec::new(),
        }];
        let mut polygon = Vec::with_capacity(m);
        for i in 0..m {
            let (a, b) = (&vs[i], &vs[(i + 1) % m]);
            let t = b - a;
            let normal = Vector::from_vec(vec![t[1], -t[0]]);
            let h = HalfSpace::new(normal.clone(), normal.dot(a))?;
            polygon.push(h.clone());
            specs.push(FaceSpec {
                id: i + 1,
                dim: 1,
                halfspace: Some(h),
                generators: Vec::new(),
                local_halfspaces: vec![HalfSpace::new(-&t, -t.dot(a))?, HalfSpace::new(t.clone(), t.dot(b))?],
            });
        }
        for i in 0..m {
            let prev = (i + m - 1) % m;
            specs.push(FaceSpec {
                id: m + 1 + i,
                dim: 0,
                halfspace: None,
                generators: vec![prev + 1, i + 1],
                local_halfspaces: Vec::new(),
            });
        }
        Self::new(2, specs, Some(vec![Polyhedron::new(2, polygon)?]))
    }

    /// Union of axis-aligned boxes `(lo, hi)` in the plane. Boundary edges
    /// along one line are merged; unions that touch only at a corner are
    /// rejected.
    pub fn rectilinear_union(boxes: &[([f64; 2], [f64; 2])]) -> Result<Self> {
        if boxes.is_empty() {
            return Err(invalid("no boxes"));
        }
        for (lo, hi) in boxes {
            if !(lo.iter().chain(hi).all(|v| v.is_finite())) {
                return Err(Error::NonFinite("box"));
            }
            if !(lo[0] < hi[0] && lo[1] < hi[1]) {
                return Err(invalid("each box needs lo < hi in both coordinates"));
            }
        }
        let grid = |axis: usize| {
            let mut c: Vec<f64> = boxes.iter().flat_map(|(lo, hi)| [lo[axis], hi[axis]]).collect();
            c.sort_by(f64::total_cmp);
            c.dedup();
            c
        };
        let (xs, ys) = (grid(0), grid(1));
        let (nx, ny) = (xs.len() - 1, ys.len() - 1);
        let filled_cells: Vec<bool> = (0..nx * ny)
            .map(|c| {
                let (i, j) = (c % nx, c / nx);
                let (cx, cy) = ((xs[i] + xs[i + 1]) / 2.0, (ys[j] + ys[j + 1]) / 2.0);
                boxes
                    .iter()
                    .any(|(lo, hi)| lo[0] < cx && cx < hi[0] && lo[1] < cy && cy < hi[1])
            })
            .collect();
        let filled = |i: isize, j: isize| {
            i >= 0 && j >= 0 && (i as usize) < nx && (j as usize) < ny && filled_cells[j as usize * nx + i as usize]
        };

        // (horizontal, line index, start, end, outward sign), in grid indices
        let mut segs: Vec<(bool, usize, usize, usize, f64)> = Vec::new();
        for j in 0..=ny {
            let mut run: Option<(usize, f64)> = None;
            for i in 0..=nx {
                let sign = if i < nx {
                    let (below, above) = (filled(i as isize, j as isize - 1), filled(i as isize, j as isize));
                    (below != above).then_some(if below { 1.0 } else { -1.0 })
                } else {
                    None
                };
                if let Some((start, s)) = run {
                    if sign != Some(s) {
                        segs.push((true, j, start, i, s));
                        run = None;
                    }
                }
                if run.is_none() {
                    run = sign.map(|s| (i, s));
                }
            }
        }
        for i in 0..=nx {
            let mut run: Option<(usize, f64)> = None;
            for j in 0..=ny {
                let sign = if j < ny {
                    let (left, right) = (filled(i as isize - 1, j as isize), filled(i as isize, j as isize));
                    (left != right).then_some(if left { 1.0 } else { -1.0 })
                } else {
                    None
                };
                if let Some((start, s)) = run {
                    if sign != Some(s) {
                        segs.push((false, i, start, j, s));
                        run = None;
                    }
                }
                if run.is_none() {
                    run = sign.map(|s| (j, s));
                }
            }
        }

        let mut specs = vec![FaceSpec {
            id: 0,
            dim: 2,
            halfspace: None,
            generators: Vec::new(),
            local_halfspaces: Vec::new(),
        }];
        let mut corners: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (k, &(horizontal, line, a, b, s)) in segs.iter().enumerate() {
            let id = k + 1;
            let (h, local, ends) = if horizontal {
                let c = ys[line];
                (
                    HalfSpace::from_slice(&[0.0, s], s * c)?,
                    vec![HalfSpace::from_slice(&[-1.0, 0.0], -xs[a])?, HalfSpace::from_slice(&[1.0, 0.0], xs[b])?],
                    [(a, line), (b, line)],
                )
            } else {
                let c = xs[line];
                (
                    HalfSpace::from_slice(&[s, 0.0], s * c)?,
                    vec![HalfSpace::from_slice(&[0.0, -1.0], -ys[a])?, HalfSpace::from_slice(&[0.0, 1.0], ys[b])?],
                    [(line, a), (line, b)],
                )
            };
            for e in ends {
                corners.entry(e).or_default().push(id);
            }
            specs.push(FaceSpec {
                id,
                dim: 1,
                halfspace: Some(h),
                generators: Vec::new(),
                local_halfspaces: local,
            });
        }
        for (id, ((i, j), ids)) in (segs.len() + 1..).zip(corners) {
            if ids.len() != 2 {
                return Err(invalid(format!("boxes touch only at the corner ({}, {})", xs[i], ys[j])));
            }
            specs.push(FaceSpec {
                id,
                dim: 0,
                halfspace: None,
                generators: ids,
                local_halfspaces: Vec::new(),
            });
        }
        let pieces = boxes
            .iter()
            .map(|(lo, hi)| {
                Polyhedron::from_rows(
                    2,
                    &[(&[1.0, 0.0], hi[0]), (&[-1.0, 0.0], -lo[0]), (&[0.0, 1.0], hi[1]), (&[0.0, -1.0], -lo[1])],
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(2, specs, Some(pieces))
    }
}

/// An affine space searched for a non-convex polyhedron, with the face it
/// belongs to.
#[derive(Clone, Debug)]
pub struct CuratedSpace {
    pub face: usize,
    /// Canonical key and generators index the facet table.
    pub space: AffineSpace,
}

/// ℝⁿ followed by the affine hull of every other face, ordered by
/// codimension, facet key and face id.
pub fn curated_affine_spaces(l: &FaceLattice) -> Vec<CuratedSpace> {
    let mut out: Vec<CuratedSpace> = l
        .faces
        .iter()
        .map(|f| CuratedSpace {
            face: f.id,
            space: f.affine_hull.clone(),
        })
        .collect();
    out.sort_by(|a, b| {
        (a.space.codim(), a.space.canonical_key(), a.face).cmp(&(b.space.codim(), b.space.canonical_key(), b.face))
    });
    out
}

/// Half-spaces of the facets meeting in `face`; empty for the top face.
pub fn pcone_nonconvex(l: &FaceLattice, face: usize) -> Result<Vec<HalfSpace>> {
    let f = l.face_or_err(face)?;
    Ok(f.facet_key.iter().map(|&k| l.facet_halfspaces[k].clone()).collect())
}

/// Membership of `x` in face `face`.
pub fn face_contains(l: &FaceLattice, face: usize, x: &Vector, tol: f64) -> Result<bool> {
    check_tol(tol)?;
    check_dim(l.dimension, x.len())?;
    let f = l.face_or_err(face)?;
    Ok(if f.is_top() { l.top_contains(x, tol) } else { l.in_face(f, x, tol) })
}

/// True when facets `f` and `g` may both generate a face: the polyhedron
/// turns through less than a straight angle where they meet.
pub fn angle_prefilter(l: &FaceLattice, f: usize, g: usize, tol: f64) -> Result<bool> {
    check_tol(tol)?;
    let (ff, gf) = (l.face_or_err(f)?, l.face_or_err(g)?);
    if ff.dim + 1 != l.dimension || gf.dim + 1 != l.dimension {
        return Err(invalid(format!("faces {f} and {g} must both be facets")));
    }
    let (kf, kg) = (ff.facet_key[0], gf.facet_key[0]);
    if kf == kg {
        return Err(Error::FacesNotAdjacent(f, g));
    }
    let mut pair = [kf, kg];
    pair.sort_unstable();
    let ridge = match solve_within(&l.facet_halfspaces, l.dimension, &pair, pair, tol) {
        None => return Err(Error::FacesNotAdjacent(f, g)),
        // same hyperplane: a straight angle
        Some(s) if s.codim() < 2 => return Ok(false),
        Some(s) => s,
    };
    if !l.faces.iter().any(|x| x.facet_key.contains(&kf) && x.facet_key.contains(&kg)) {
        return Err(Error::FacesNotAdjacent(f, g));
    }
    let bound = ff
        .local_halfspaces
        .iter()
        .find(|h| h.side(ridge.anchor(), tol) == Side::OnBoundary && ridge.parallel_to(h, tol))
        .ok_or_else(|| invalid(format!("facet {f} has no local bound along its ridge with {g}")))?;
    let mut inward = Vector::zeros(l.dimension);
    for d in ff.affine_hull.directions() {
        inward -= &d * bound.normal().dot(&d);
    }
    let ng = l.facet_halfspaces[kg].normal();
    Ok(ng.dot(&inward) < -tol * ng.norm() * inward.norm())
}

fn face_admissible(l: &FaceLattice, face: &Face, tol: f64) -> Result<bool> {
    let codim = face.affine_hull.codim();
    if codim < 2 {
        return Ok(true);
    }
    let identity: Vec<usize> = (0..l.facets.len()).collect();
    let key = SpaceKey::new(face.facet_key.clone());
    let id_of = |k: usize| l.faces[l.facets[k]].id;
    for g in generating_subsets(&l.facet_halfspaces, l.dimension, &key, codim, &identity) {
        let mut ok = true;
        'pairs: for a in 0..g.len() {
            for b in a + 1..g.len() {
                if !angle_prefilter(l, id_of(g[a]), id_of(g[b]), tol)? {
                    ok = false;
                    break 'pairs;
                }
            }
        }
        if ok {
            return Ok(true);
        }
    }
    Ok(false)
}

#[derive(Clone, Debug, PartialEq)]
pub enum NonconvexOutcome {
    /// Every global minimizer, ordered lexicographically.
    Minimizers { points: Vec<Vector>, value: f64 },
    NoMinimum,
}

impl NonconvexOutcome {
    pub fn points(&self) -> &[Vector] {
        match self {
            Self::Minimizers { points, .. } => points,
            Self::NoMinimum => &[],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PotentialMin {
    pub face: usize,
    pub point: Vector,
    pub value: f64,
}

#[derive(Clone, Debug)]
pub struct NonconvexReport {
    pub outcome: NonconvexOutcome,
    pub counters: Counters,
    pub potential_min: Vec<PotentialMin>,
    /// Faces skipped because every generating set has a reflex pair.
    pub pruned_faces: Vec<usize>,
}

/// Keys within `key` of the immediate superspaces of its affine space.
fn super_keys(hs: &[HalfSpace], n: usize, key: &[usize], space: &AffineSpace, tol: f64) -> Vec<Vec<usize>> {
    let identity: Vec<usize> = (0..hs.len()).collect();
    let mut out = BTreeSet::new();
    for g in generating_subsets(hs, n, space.canonical_key(), space.codim(), &identity) {
        for skip in 0..g.len() {
            let u: Vec<usize> = g.iter().enumerate().filter(|&(i, _)| i != skip).map(|(_, &x)| x).collect();
            if u.is_empty() {
                out.insert(Vec::new());
            } else if let Some(b) = solve_within(hs, n, &u, key.iter().copied(), tol) {
                out.insert(b.canonical_key().indices().to_vec());
            }
        }
    }
    out.into_iter().collect()
}

/// A searched space with the keys of its immediate superspaces.
type SpaceEntry = (AffineSpace, Vec<Vec<usize>>);

/// Minimizes `obj` over the polyhedron of `l`, returning every global
/// minimizer.
pub fn optimize_nonconvex<O: StrictlyConvexObjective + ?Sized>(
    l: &FaceLattice,
    obj: &O,
    schedule: &Schedule,
    tol: f64,
) -> Result<NonconvexReport> {
    check_tol(tol)?;
    check_dim(l.dimension, obj.dimension())?;
    let n = l.dimension;
    let hs = &l.facet_halfspaces;
    let mut counters = Counters {
        affine_minimizations: 1,
        spaces_enumerated: 1,
        ..Counters::default()
    };
    let global = obj.argmin_global();
    if let Some(m) = &global {
        if l.top_contains(m, tol) {
            let value = obj.eval(m);
            return Ok(NonconvexReport {
                outcome: NonconvexOutcome::Minimizers {
                    points: vec![m.clone()],
                    value,
                },
                counters,
                potential_min: vec![PotentialMin {
                    face: l.top().id,
                    point: m.clone(),
                    value,
                }],
                pruned_faces: Vec::new(),
            });
        }
    }

    let mut searched = Vec::new();
    let mut pruned = Vec::new();
    for c in curated_affine_spaces(l) {
        let face = l.face(c.face).expect("curated faces exist");
        if face.is_top() {
            continue;
        }
        if face_admissible(l, face, tol)? {
            searched.push(face);
        } else {
            pruned.push(face.id);
        }
    }

    // Close the searched keys under immediate superspaces.
    let mut spaces: BTreeMap<(usize, Vec<usize>), SpaceEntry> = BTreeMap::new();
    let mut stack: Vec<Vec<usize>> = searched.iter().map(|f| f.facet_key.clone()).collect();
    let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();
    while let Some(key) = stack.pop() {
        if key.is_empty() || !seen.insert(key.clone()) {
            continue;
        }
        let space = solve_within(hs, n, &key, key.iter().copied(), tol)
            .ok_or_else(|| invalid(format!("facets {key:?} do not intersect")))?;
        let supers = super_keys(hs, n, &key, &space, tol);
        stack.extend(supers.iter().cloned());
        spaces.insert((space.codim(), key), (space, supers));
    }

    let mut memo: HashMap<Vec<usize>, ConeMinRecord> = HashMap::new();
    memo.insert(
        Vec::new(),
        ConeMinRecord {
            key: SpaceKey::root(),
            generators: Vec::new(),
            codim: 0,
            value: global.as_ref().map(|m| obj.eval(m)),
            minimizer: global,
            provenance: Provenance::ComputedOnAffine,
            examined: true,
        },
    );
    let pool = build_pool(schedule.workers.resolve())?;
    let mut levels: BTreeMap<usize, Vec<(&Vec<usize>, &SpaceEntry)>> = BTreeMap::new();
    for ((codim, key), entry) in &spaces {
        levels.entry(*codim).or_default().push((key, entry));
    }
    for batch in levels.values() {
        let results = par_map(pool.as_deref(), batch, |(_, (space, supers))| {
            let records: Option<Vec<&ConeMinRecord>> = supers.iter().map(|k| memo.get(k)).collect();
            let records = records.ok_or_else(|| Error::MissingSuperspaceRecord(supers.concat()))?;
            let mut c = Counters::default();
            let out = filter_candidate(space, hs, &records, obj, tol, &mut c);
            Ok::<_, Error>((out.into_record(), c))
        });
        for ((key, _), result) in batch.iter().zip(results) {
            let (record, c) = result?;
            counters += c;
            counters.spaces_enumerated += 1;
            memo.insert((*key).clone(), record);
        }
    }

    let mut potential = Vec::new();
    for face in &searched {
        let record = &memo[&face.facet_key];
        if !record.is_candidate() {
            continue;
        }
        if let Some(m) = &record.minimizer {
            counters.inner_products += (face.facet_key.len() + face.local_halfspaces.len()) as u64;
            if l.in_face(face, m, tol) {
                potential.push(PotentialMin {
                    face: face.id,
                    point: m.clone(),
                    value: record.value.unwrap_or_else(|| obj.eval(m)),
                });
            }
        }
    }

    let outcome = match potential.iter().map(|p| p.value).min_by(f64::total_cmp) {
        None => NonconvexOutcome::NoMinimum,
        Some(best) => {
            let slack = tol * best.abs().max(1.0);
            let mut points: Vec<Vector> = Vec::new();
            for p in potential.iter().filter(|p| p.value <= best + slack) {
                if !points.iter().any(|q| (q - &p.point).norm() <= tol * q.norm().max(1.0)) {
                    points.push(p.point.clone());
                }
            }
            points.sort_by(|a, b| {
                if lex_less(a, b) {
                    std::cmp::Ordering::Less
                } else if lex_less(b, a) {
                    std::cmp::Ordering::Greater
                } else {
                    std::cmp::Ordering::Equal
                }
            });
            NonconvexOutcome::Minimizers { points, value: best }
        }
    };
    Ok(NonconvexReport {
        outcome,
        counters,
        potential_min: potential,
        pruned_faces: pruned,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::ProjectionObjective;
    use crate::schedule::Workers;
    use rand::Rng;
    use crate::solver::{optimize_convex, SolveOptions};
    use proptest::prelude::*;

    fn v(x: &[f64]) -> Vector {
        Vector::from_vec(x.to_vec())
    }

    fn assert_points(got: &[Vector], want: &[&[f64]]) {
        assert_eq!(got.len(), want.len(), "{got:?}");
        for (g, w) in got.iter().zip(want) {
            assert!((g - v(w)).norm() < 1e-12, "{g} vs {w:?}");
        }
    }

    fn l_shape() -> FaceLattice {
        FaceLattice::rectilinear_union(&[([0.0, 0.0], [2.0, 1.0]), ([0.0, 0.0], [1.0, 2.0])]).unwrap()
    }

    fn solve(l: &FaceLattice, y: &[f64]) -> NonconvexReport {
        let obj = ProjectionObjective::new(v(y)).unwrap();
        optimize_nonconvex(l, &obj, &Schedule::level(Workers::Fixed(1)), DEFAULT_TOL).unwrap()
    }

    fn find_facet(l: &FaceLattice, normal: &[f64], offset: f64) -> usize {
        l.faces()
            .iter()
            .find(|f| {
                f.halfspace()
                    .is_some_and(|h| (h.normal() - v(normal)).norm() < 1e-12 && (h.offset() - offset).abs() < 1e-12)
            })
            .unwrap()
            .id()
    }

    fn find_vertex(l: &FaceLattice, p: &[f64]) -> usize {
        l.faces()
            .iter()
            .find(|f| f.dim() == 0 && (f.affine_hull().anchor() - v(p)).norm() < 1e-12)
            .unwrap()
            .id()
    }

    /// Nearest points over the boxes by clamping, ties kept.
    fn box_oracle(boxes: &[([f64; 2], [f64; 2])], y: &Vector) -> (Vec<Vector>, f64) {
        let mut best = f64::INFINITY;
        let mut points: Vec<Vector> = Vec::new();
        for (lo, hi) in boxes {
            let p = v(&[y[0].clamp(lo[0], hi[0]), y[1].clamp(lo[1], hi[1])]);
            let d = (&p - y).norm();
            if d < best - 1e-9 {
                best = d;
                points = vec![p];
            } else if (d - best).abs() <= 1e-9 && !points.iter().any(|q| (q - &p).norm() < 1e-9) {
                points.push(p);
            }
        }
        (points, best)
    }

    fn same_sets(a: &[Vector], b: &[Vector], tol: f64) -> bool {
        a.len() == b.len() && a.iter().all(|p| b.iter().any(|q| (p - q).norm() <= tol))
    }

    #[test]
    fn l_shape_has_thirteen_curated_spaces() {
        let l = l_shape();
        let curated = curated_affine_spaces(&l);
        assert_eq!(curated.len(), 13);
        assert_eq!(curated[0].space.codim(), 0);
        assert_eq!(curated.iter().filter(|c| c.space.codim() == 1).count(), 6);
        assert_eq!(curated.iter().filter(|c| c.space.codim() == 2).count(), 6);
    }

    #[test]
    fn half_plane_lattice() {
        let json = r#"{"dimension":2,"faces":[
            {"id":0,"dim":2,"halfspace":null,"generators":[],"local_halfspaces":[]},
            {"id":1,"dim":1,"halfspace":{"normal":[0,1],"offset":0},"generators":[],"local_halfspaces":[]}],
            "pieces":[[{"normal":[0,1],"offset":0}]]}"#;
        let l = FaceLattice::parse(json).unwrap();
        assert_eq!(curated_affine_spaces(&l).len(), 2);
        let rep = solve(&l, &[3.0, 2.0]);
        assert_points(rep.outcome.points(), &[&[3.0, 0.0]]);
    }

    #[test]
    fn convex_curated_subset_of_enumeration() {
        let l = FaceLattice::convex_polygon(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap();
        let p = Polyhedron::new(2, l.facet_halfspaces().to_vec()).unwrap();
        let all: Vec<SpaceKey> = crate::geometry::enumerate_affine_spaces(&p, DEFAULT_TOL)
            .unwrap()
            .into_iter()
            .map(|s| s.canonical_key().clone())
            .collect();
        for c in curated_affine_spaces(&l) {
            assert!(all.contains(c.space.canonical_key()), "{:?}", c.space.canonical_key());
        }
    }

    #[test]
    fn angles_at_l_corners() {
        let l = l_shape();
        let bottom = find_facet(&l, &[0.0, -1.0], 0.0);
        let left = find_facet(&l, &[-1.0, 0.0], 0.0);
        assert!(angle_prefilter(&l, bottom, left, DEFAULT_TOL).unwrap());
        assert!(angle_prefilter(&l, left, bottom, DEFAULT_TOL).unwrap());
        let inner_h = find_facet(&l, &[0.0, 1.0], 1.0);
        let inner_v = find_facet(&l, &[1.0, 0.0], 1.0);
        assert!(!angle_prefilter(&l, inner_h, inner_v, DEFAULT_TOL).unwrap());
        assert!(!angle_prefilter(&l, inner_v, inner_h, DEFAULT_TOL).unwrap());
        assert!(matches!(
            angle_prefilter(&l, left, inner_h, DEFAULT_TOL),
            Err(Error::FacesNotAdjacent(_, _))
        ));
    }

    #[test]
    fn collinear_edges_are_not_admissible() {
        // rectangle [0, 2] × [0, 1] with its bottom split at (1, 0)
        let json = r#"{"dimension":2,"faces":[
            {"id":0,"dim":2},
            {"id":1,"dim":1,"halfspace":{"normal":[0,-1],"offset":0},"local_halfspaces":[{"normal":[-1,0],"offset":0},{"normal":[1,0],"offset":1}]},
            {"id":2,"dim":1,"halfspace":{"normal":[0,-1],"offset":0},"local_halfspaces":[{"normal":[-1,0],"offset":-1},{"normal":[1,0],"offset":2}]},
            {"id":3,"dim":1,"halfspace":{"normal":[1,0],"offset":2},"local_halfspaces":[{"normal":[0,-1],"offset":0},{"normal":[0,1],"offset":1}]},
            {"id":4,"dim":1,"halfspace":{"normal":[0,1],"offset":1},"local_halfspaces":[{"normal":[-1,0],"offset":0},{"normal":[1,0],"offset":2}]},
            {"id":5,"dim":1,"halfspace":{"normal":[-1,0],"offset":0},"local_halfspaces":[{"normal":[0,-1],"offset":0},{"normal":[0,1],"offset":1}]},
            {"id":6,"dim":0,"generators":[5,1]},
            {"id":7,"dim":0,"generators":[2,3]},
            {"id":8,"dim":0,"generators":[3,4]},
            {"id":9,"dim":0,"generators":[4,5]}]}"#;
        let l = FaceLattice::parse(json).unwrap();
        assert!(!angle_prefilter(&l, 1, 2, DEFAULT_TOL).unwrap());
        assert!(angle_prefilter(&l, 2, 3, DEFAULT_TOL).unwrap());
        let rep = solve(&l, &[1.0, -3.0]);
        assert_points(rep.outcome.points(), &[&[1.0, 0.0]]);
    }

    #[test]
    fn pcone_examples() {
        let l = l_shape();
        let corner = find_vertex(&l, &[2.0, 0.0]);
        let mut cone: Vec<(Vec<f64>, f64)> = pcone_nonconvex(&l, corner)
            .unwrap()
            .iter()
            .map(|h| (h.normal().iter().copied().collect(), h.offset()))
            .collect();
        cone.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(cone, vec![(vec![0.0, -1.0], 0.0), (vec![1.0, 0.0], 2.0)]);
        let edge = find_facet(&l, &[0.0, -1.0], 0.0);
        assert_eq!(pcone_nonconvex(&l, edge).unwrap().len(), 1);
        assert!(pcone_nonconvex(&l, l.top().id()).unwrap().is_empty());
    }

    #[test]
    fn face_membership() {
        let l = l_shape();
        let bottom = find_facet(&l, &[0.0, -1.0], 0.0);
        assert!(face_contains(&l, bottom, &v(&[1.0, 0.0]), DEFAULT_TOL).unwrap());
        assert!(!face_contains(&l, bottom, &v(&[3.0, 0.0]), DEFAULT_TOL).unwrap());
        assert!(!face_contains(&l, bottom, &v(&[1.0, 0.5]), DEFAULT_TOL).unwrap());
        let top = l.top().id();
        assert!(face_contains(&l, top, &v(&[0.5, 0.5]), DEFAULT_TOL).unwrap());
        assert!(!face_contains(&l, top, &v(&[1.5, 1.5]), DEFAULT_TOL).unwrap());
    }

    #[test]
    fn ray_casting_matches_pieces() {
        let l = l_shape();
        let mut json = l.to_json();
        json.pieces = None;
        let bare = FaceLattice::from_json(&json).unwrap();
        for (x, y) in [(0.5, 0.5), (1.5, 0.5), (0.5, 1.5), (1.5, 1.5), (2.5, 0.5), (-0.1, 1.0), (1.0, 1.0), (0.3, 2.0)] {
            let p = v(&[x, y]);
            assert_eq!(bare.top_contains(&p, DEFAULT_TOL), l.top_contains(&p, DEFAULT_TOL), "({x}, {y})");
        }
    }

    #[test]
    fn l_shape_suite() {
        let l = l_shape();
        let rep = solve(&l, &[2.5, 2.0]);
        match &rep.outcome {
            NonconvexOutcome::Minimizers { points, value } => {
                assert_eq!(points.len(), 1);
                assert!((&points[0] - v(&[2.0, 1.0])).norm() < 1e-9);
                assert!((value - 1.25f64.sqrt()).abs() < 1e-9);
            }
            other => panic!("{other:?}"),
        }
        let rep = solve(&l, &[2.0, 2.0]);
        match &rep.outcome {
            NonconvexOutcome::Minimizers { points, value } => {
                assert_eq!(points.len(), 2);
                assert!((&points[0] - v(&[1.0, 2.0])).norm() < 1e-9);
                assert!((&points[1] - v(&[2.0, 1.0])).norm() < 1e-9);
                assert!((value - 1.0).abs() < 1e-9);
            }
            other => panic!("{other:?}"),
        }
        let rep = solve(&l, &[0.5, 0.5]);
        assert_eq!(rep.outcome.points(), &[v(&[0.5, 0.5])]);
    }

    #[test]
    fn reflex_vertex_is_pruned() {
        let l = l_shape();
        let rep = solve(&l, &[1.5, 1.5]);
        assert_eq!(rep.pruned_faces, vec![find_vertex(&l, &[1.0, 1.0])]);
        assert!(same_sets(rep.outcome.points(), &[v(&[1.0, 1.5]), v(&[1.5, 1.0])], 1e-9));
    }

    #[test]
    fn pinched_union_rejected() {
        let err = FaceLattice::rectilinear_union(&[([0.0, 0.0], [1.0, 1.0]), ([1.0, 1.0], [2.0, 2.0])]);
        assert!(matches!(err, Err(Error::InvalidLattice(_))));
    }

    #[test]
    fn misoriented_facet_rejected() {
        let l = FaceLattice::convex_polygon(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        let mut json = l.to_json();
        let h = json.faces[1].halfspace.as_mut().unwrap();
        h.normal = h.normal.iter().map(|x| -x).collect();
        h.offset = -h.offset;
        assert!(matches!(FaceLattice::from_json(&json), Err(Error::InvalidLattice(_))));
    }

    #[test]
    fn invalid_lattices_rejected() {
        let two_tops = r#"{"dimension":2,"faces":[{"id":0,"dim":2},{"id":1,"dim":2}]}"#;
        assert!(FaceLattice::parse(two_tops).is_err());
        let facet_without_halfspace = r#"{"dimension":2,"faces":[{"id":0,"dim":2},{"id":1,"dim":1}]}"#;
        assert!(FaceLattice::parse(facet_without_halfspace).is_err());
        let dangling = r#"{"dimension":2,"faces":[{"id":0,"dim":2},{"id":1,"dim":0,"generators":[7]}]}"#;
        assert!(FaceLattice::parse(dangling).is_err());
        let parallel = r#"{"dimension":2,"faces":[{"id":0,"dim":2},
            {"id":1,"dim":1,"halfspace":{"normal":[0,1],"offset":0}},
            {"id":2,"dim":1,"halfspace":{"normal":[0,-1],"offset":-1}},
            {"id":3,"dim":0,"generators":[1,2]}]}"#;
        assert!(FaceLattice::parse(parallel).is_err());
        assert!(FaceLattice::convex_polygon(&[[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]]).is_err());
    }

    #[test]
    fn json_roundtrip() {
        let l = l_shape();
        let text = serde_json::to_string(&l.to_json()).unwrap();
        let back = FaceLattice::parse(&text).unwrap();
        assert_eq!(back.faces().len(), l.faces().len());
        let a = solve(&l, &[2.5, 2.0]);
        let b = solve(&back, &[2.5, 2.0]);
        assert_eq!(a.outcome, b.outcome);
    }

    type Boxes = Vec<([f64; 2], [f64; 2])>;

    fn random_boxes(seed: u64) -> Option<(Boxes, FaceLattice)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let count = rng.random_range(2..=3);
        let boxes: Vec<([f64; 2], [f64; 2])> = (0..count)
            .map(|_| {
                let x0 = rng.random_range(0..5) as f64;
                let y0 = rng.random_range(0..5) as f64;
                let w = rng.random_range(1..4) as f64;
                let h = rng.random_range(1..4) as f64;
                ([x0, y0], [x0 + w, y0 + h])
            })
            .collect();
        FaceLattice::rectilinear_union(&boxes).ok().map(|l| (boxes, l))
    }

    #[test]
    fn random_box_unions_match_decomposition() {
        let mut checked = 0;
        let mut seed = 0;
        while checked < 20 {
            seed += 1;
            let Some((boxes, l)) = random_boxes(seed) else {
                continue;
            };
            checked += 1;
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xff);
            for _ in 0..25 {
                let y = v(&[rng.random_range(-2.0..10.0), rng.random_range(-2.0..10.0)]);
                let rep = solve(&l, &[y[0], y[1]]);
                let (want, best) = box_oracle(&boxes, &y);
                match &rep.outcome {
                    NonconvexOutcome::Minimizers { points, value } => {
                        assert!((value - best).abs() < 1e-6, "seed {seed} y {y}");
                        assert!(same_sets(points, &want, 1e-6), "seed {seed} y {y}: {points:?} vs {want:?}");
                        for p in points {
                            assert!(boxes.iter().any(|(lo, hi)| (0..2).all(|i| lo[i] - 1e-9 <= p[i] && p[i] <= hi[i] + 1e-9)));
                        }
                    }
                    NonconvexOutcome::NoMinimum => panic!("seed {seed}: no minimum"),
                }
            }
        }
    }

    #[test]
    fn ties_on_symmetric_targets() {
        let l = l_shape();
        for (y, want) in [
            ([2.0, 2.0], vec![v(&[1.0, 2.0]), v(&[2.0, 1.0])]),
            ([1.5, 1.5], vec![v(&[1.0, 1.5]), v(&[1.5, 1.0])]),
        ] {
            assert!(same_sets(solve(&l, &y).outcome.points(), &want, 1e-9));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn convex_polygon_matches_convex_solver(
            m in 3usize..=8,
            phase in 0.0f64..1.0,
            x in -6.0f64..6.0,
            y in -6.0f64..6.0,
        ) {
            let verts: Vec<[f64; 2]> = (0..m)
                .map(|i| {
                    let t = std::f64::consts::TAU * (i as f64 + phase) / m as f64;
                    [2.0 * t.cos(), 1.5 * t.sin()]
                })
                .collect();
            let l = FaceLattice::convex_polygon(&verts).unwrap();
            let p = Polyhedron::new(2, l.facet_halfspaces().to_vec()).unwrap();
            let obj = ProjectionObjective::new(v(&[x, y])).unwrap();
            let convex = optimize_convex(&p, &obj, &SolveOptions::default()).unwrap();
            let rep = optimize_nonconvex(&l, &obj, &Schedule::level(Workers::Fixed(2)), DEFAULT_TOL).unwrap();
            let pts = rep.outcome.points();
            prop_assert_eq!(pts.len(), 1);
            prop_assert!((&pts[0] - convex.outcome.point().unwrap()).norm() < 1e-9);
        }
    }
}
