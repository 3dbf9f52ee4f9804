//! Search schedules and worker configuration.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::{affine_solve, check_tol, Polyhedron, SpaceKey};
use crate::objective::StrictlyConvexObjective;
use crate::solver::{Search, SolveOptions, SolveReport};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ScheduleKind {
    /// Codimension levels with a barrier between levels.
    #[default]
    LevelSync,
    /// Half-spaces sorted by the objective's minimum on their boundary.
    Ordered,
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "level" | "level-sync" => Ok(Self::LevelSync),
            "ordered" => Ok(Self::Ordered),
            other => Err(Error::InvalidConfig(format!("unknown schedule '{other}'"))),
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::LevelSync => "level",
            Self::Ordered => "ordered",
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Workers {
    #[default]
    Auto,
    Fixed(usize),
}

impl Workers {
    pub fn resolve(self) -> usize {
        match self {
            Self::Fixed(n) => n.max(1),
            Self::Auto => {
                if cfg!(target_arch = "wasm32") {
                    1
                } else {
                    std::thread::available_parallelism().map_or(1, |n| n.get())
                }
            }
        }
    }
}

impl FromStr for Workers {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(Self::Auto);
        }
        match s.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Self::Fixed(n)),
            _ => Err(Error::InvalidConfig(format!("threads must be 'auto' or a positive integer, got '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub workers: Workers,
}

impl Schedule {
    pub fn level(workers: Workers) -> Self {
        Self {
            kind: ScheduleKind::LevelSync,
            workers,
        }
    }

    pub fn ordered(workers: Workers) -> Self {
        Self {
            kind: ScheduleKind::Ordered,
            workers,
        }
    }
}

/// Half-spaces sorted by decreasing objective minimum over their boundary
/// hyperplane, ties broken by index.
#[derive(Clone, Debug, PartialEq)]
pub struct HalfspaceOrdering {
    /// `permutation[k]` is the half-space at position `k`.
    pub permutation: Vec<usize>,
    /// Objective minimum over each boundary hyperplane, by half-space index.
    pub boundary_minima: Vec<Option<f64>>,
}

impl HalfspaceOrdering {
    /// Position of each half-space, by index.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.permutation.len()];
        for (k, &i) in self.permutation.iter().enumerate() {
            pos[i] = k;
        }
        pos
    }
}

pub fn order_halfspaces<O: StrictlyConvexObjective + ?Sized>(
    p: &Polyhedron,
    obj: &O,
    tol: f64,
) -> Result<HalfspaceOrdering> {
    check_tol(tol)?;
    let mut minima = Vec::with_capacity(p.len());
    for i in 0..p.len() {
        let value = affine_solve(p, &[i], tol)?
            .and_then(|s| obj.argmin_affine(&s))
            .map(|m| obj.eval(&m));
        minima.push(value);
    }
    // Minima are compared on a grid of spacing `tol · max(1, max |value|)`
    // so values equal up to rounding tie and fall back to index order.
    let scale = minima.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs())) * tol;
    let rank = |v: Option<f64>| v.map_or(i64::MAX, |v| (v / scale).round() as i64);
    let mut permutation: Vec<usize> = (0..p.len()).collect();
    permutation.sort_by(|&a, &b| rank(minima[b]).cmp(&rank(minima[a])).then(a.cmp(&b)));
    Ok(HalfspaceOrdering {
        permutation,
        boundary_minima: minima,
    })
}

/// Largest ordering position among the hyperplanes of `key`; `None` for ℝⁿ.
pub fn affine_order_key(ordering: &HalfspaceOrdering, key: &SpaceKey) -> Option<usize> {
    let pos = ordering.positions();
    key.indices().iter().map(|&i| pos[i]).max()
}

/// Runs the min-space search with the schedule in `options`.
pub fn execute<O: StrictlyConvexObjective + ?Sized>(
    p: &Polyhedron,
    obj: &O,
    options: &SolveOptions,
) -> Result<SolveReport> {
    let workers = options.schedule.workers.resolve();
    let search = Search::new(p, obj, options.tol, workers)?;
    match options.schedule.kind {
        ScheduleKind::LevelSync => search.run_level_sync(options.keep_records, options.exhaustive),
        ScheduleKind::Ordered => {
            if options.exhaustive {
                return Err(Error::InvalidConfig(
                    "exhaustive search is only available with the level schedule".into(),
                ));
            }
            let ordering = order_halfspaces(p, obj, options.tol)?;
            search.run_ordered(&ordering, options.keep_records)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::ProjectionObjective;
    use crate::solver::optimize_convex;
    use crate::geometry::Vector;

    fn a_shape() -> Polyhedron {
        Polyhedron::from_rows(2, &[(&[0.0, 1.0], 0.5), (&[1.0, 1.0], 1.0), (&[-1.0, 1.0], 1.0)]).unwrap()
    }

    #[test]
    fn parse_flags() {
        assert_eq!("level".parse::<ScheduleKind>().unwrap(), ScheduleKind::LevelSync);
        assert_eq!("ordered".parse::<ScheduleKind>().unwrap(), ScheduleKind::Ordered);
        assert!("bogus".parse::<ScheduleKind>().is_err());
        assert_eq!("auto".parse::<Workers>().unwrap(), Workers::Auto);
        assert_eq!("4".parse::<Workers>().unwrap(), Workers::Fixed(4));
        assert!("0".parse::<Workers>().is_err());
        assert!("x".parse::<Workers>().is_err());
    }

    #[test]
    fn ordering_sorts_by_boundary_minimum() {
        let p = a_shape();
        let obj = ProjectionObjective::new(Vector::from_vec(vec![0.3, 0.0])).unwrap();
        let ord = order_halfspaces(&p, &obj, 1e-9).unwrap();
        // distances to the three lines: 0.5, 0.7/√2, 1.3/√2
        assert_eq!(ord.permutation, vec![2, 0, 1]);
        assert_eq!(ord.positions(), vec![1, 2, 0]);
        assert_eq!(affine_order_key(&ord, &SpaceKey::new(vec![0, 1])), Some(2));
        assert_eq!(affine_order_key(&ord, &SpaceKey::root()), None);
    }

    #[test]
    fn ordering_of_a_shape_about_one_one() {
        let p = a_shape();
        let obj = ProjectionObjective::new(Vector::from_vec(vec![1.0, 1.0])).unwrap();
        let ord = order_halfspaces(&p, &obj, 1e-9).unwrap();
        assert_eq!(ord.permutation, vec![1, 2, 0]);
        let m = &ord.boundary_minima;
        assert!((m[0].unwrap() - 0.5).abs() < 1e-12);
        assert!((m[1].unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
        assert!((m[2].unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(affine_order_key(&ord, &SpaceKey::new(vec![1, 2])), Some(1));
        assert_eq!(affine_order_key(&ord, &SpaceKey::new(vec![0])), Some(2));
    }

    #[test]
    fn single_halfspace_ordering() {
        let p = Polyhedron::from_rows(3, &[(&[1.0, 2.0, 3.0], 1.0)]).unwrap();
        let obj = ProjectionObjective::new(Vector::zeros(3)).unwrap();
        assert_eq!(order_halfspaces(&p, &obj, 1e-9).unwrap().permutation, vec![0]);
    }

    #[test]
    fn ordering_ties_by_index() {
        let p = Polyhedron::from_rows(2, &[(&[1.0, 0.0], 1.0), (&[0.0, 1.0], 1.0), (&[-1.0, 0.0], 1.0)]).unwrap();
        let obj = ProjectionObjective::new(Vector::zeros(2)).unwrap();
        let ord = order_halfspaces(&p, &obj, 1e-9).unwrap();
        assert_eq!(ord.permutation, vec![0, 1, 2]);
    }

    #[test]
    fn ordered_matches_level() {
        let p = a_shape();
        for target in [[0.25, 1.0], [0.0, 0.0], [3.0, -2.0], [0.0, 5.0], [-4.0, 0.2]] {
            let obj = ProjectionObjective::new(Vector::from_vec(target.to_vec())).unwrap();
            let level = optimize_convex(&p, &obj, &SolveOptions::default()).unwrap();
            let ordered = optimize_convex(
                &p,
                &obj,
                &SolveOptions::default().with_schedule(Schedule::ordered(Workers::Fixed(1))),
            )
            .unwrap();
            let a = level.outcome.point().unwrap();
            let b = ordered.outcome.point().unwrap();
            assert!((a - b).norm() < 1e-9, "{target:?}: {a} vs {b}");
        }
    }

    #[test]
    fn exhaustive_ordered_rejected() {
        let p = a_shape();
        let obj = ProjectionObjective::new(Vector::zeros(2)).unwrap();
        let opts = SolveOptions::default()
            .with_schedule(Schedule::ordered(Workers::Fixed(1)))
            .exhaustive();
        assert!(matches!(optimize_convex(&p, &obj, &opts), Err(Error::InvalidConfig(_))));
    }
}
