//! Exact min-space search for strictly convex objectives over polyhedra.
//!
//! A convex polyhedron is given as an intersection of half-spaces; the
//! minimizer of a strictly convex objective over it lies in the relative
//! interior of exactly one affine space cut out by its boundary hyperplanes.
//! [`optimize_convex`] finds that space by examining affine spaces from the
//! largest down, pruning with memoized cone minimizers. Non-convex polyhedra
//! described by a face lattice are handled by [`optimize_nonconvex`].

pub mod error;
pub mod geometry;
pub mod harness;
pub mod nonconvex;
pub mod objective;
pub mod report;
pub mod schedule;
pub mod solver;
pub mod subsets;

pub use error::{Error, Result};
pub use geometry::{
    affine_solve, affine_space_bound, enumerate_affine_spaces, halfspace_contains, polyhedron_contains,
    project_affine, AffineSpace, HalfSpace, Polyhedron, Side, SpaceKey, Vector, DEFAULT_TOL,
};
pub use objective::{
    argmin_affine, Objective, ObjectiveSpec, ProjectionObjective, QuadraticObjective, StrictlyConvexObjective,
};
pub use schedule::{order_halfspaces, Schedule, ScheduleKind, Workers};
pub use nonconvex::{
    angle_prefilter, curated_affine_spaces, face_contains, optimize_nonconvex, pcone_nonconvex, FaceLattice,
    NonconvexOutcome, NonconvexReport,
};
pub use solver::{
    certify_empty, filter_candidate, immediate_superspaces, optimize_convex, ConeMinRecord, Counters,
    FilterOutcome, Outcome, Provenance, SolveOptions, SolveReport,
};
