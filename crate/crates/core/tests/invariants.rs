use minspace::harness::{brute_force_optimize, outcomes_match, random_polyhedron, trial_objective, ObjectiveKind};
use minspace::report::{canonical_f64, convex_result};
use minspace::{
    affine_space_bound, optimize_convex, optimize_nonconvex, FaceLattice, Objective, Polyhedron, Schedule,
    SolveOptions, StrictlyConvexObjective, Vector, Workers, DEFAULT_TOL,
};
use proptest::prelude::*;

fn solve(p: &Polyhedron, obj: &Objective, schedule: Schedule) -> minspace::SolveReport {
    optimize_convex(p, obj, &SolveOptions::default().with_schedule(schedule)).unwrap()
}

fn strictly_inside(p: &Polyhedron, x: &Vector, margin: f64) -> bool {
    p.halfspaces().iter().all(|h| h.normal().dot(x) < h.offset() - margin)
}

fn instance() -> impl Strategy<Value = (usize, usize, u64, bool)> {
    (1usize..=10, 2usize..=4, any::<u64>(), any::<bool>())
}

fn objective(n: usize, seed: u64, quadratic: bool) -> Objective {
    let kind = if quadratic { ObjectiveKind::Quadratic } else { ObjectiveKind::Projection };
    trial_objective(kind, n, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn matches_brute_force((r, n, seed, quadratic) in instance()) {
        let p = random_polyhedron(r, n, seed).unwrap();
        let obj = objective(n, seed, quadratic);
        let rep = solve(&p, &obj, Schedule::level(Workers::Fixed(1)));
        let oracle = brute_force_optimize(&p, &obj, DEFAULT_TOL).unwrap();
        prop_assert!(outcomes_match(&oracle, &rep.outcome));
    }

    #[test]
    fn minimizer_is_feasible_and_beats_sampled_points((r, n, seed, quadratic) in instance(), samples in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 4), 20)) {
        let p = random_polyhedron(r, n, seed).unwrap();
        let obj = objective(n, seed, quadratic);
        let rep = solve(&p, &obj, Schedule::level(Workers::Fixed(1)));
        let x = rep.outcome.point().expect("random polyhedra contain the origin");
        prop_assert!(p.contains(x, 1e-9).unwrap());
        let fx = obj.eval(x);
        for s in samples {
            let z = Vector::from_iterator(n, s.into_iter().take(n));
            if strictly_inside(&p, &z, 0.0) {
                prop_assert!(fx <= obj.eval(&z) + 1e-9);
            }
        }
    }

    #[test]
    fn counters_are_bounded((r, n, seed, quadratic) in instance()) {
        let p = random_polyhedron(r, n, seed).unwrap();
        let obj = objective(n, seed, quadratic);
        for schedule in [Schedule::level(Workers::Fixed(1)), Schedule::ordered(Workers::Fixed(1))] {
            let c = solve(&p, &obj, schedule).counters;
            prop_assert!(c.affine_minimizations <= c.spaces_enumerated);
            prop_assert!(c.spaces_enumerated as u128 <= affine_space_bound(r, n));
        }
    }

    #[test]
    fn schedules_and_workers_agree((r, n, seed, quadratic) in instance()) {
        let p = random_polyhedron(r, n, seed).unwrap();
        let obj = objective(n, seed, quadratic);
        let base = convex_result(&solve(&p, &obj, Schedule::level(Workers::Fixed(1))), true);
        for schedule in [
            Schedule::level(Workers::Fixed(3)),
            Schedule::ordered(Workers::Fixed(1)),
            Schedule::ordered(Workers::Fixed(3)),
        ] {
            prop_assert_eq!(&convex_result(&solve(&p, &obj, schedule), true), &base);
        }
    }

    #[test]
    fn polyhedron_json_round_trips((r, n, seed, _q) in instance()) {
        let p = random_polyhedron(r, n, seed).unwrap();
        let text = serde_json::to_string(&p.to_json()).unwrap();
        let back = Polyhedron::parse(&text).unwrap();
        prop_assert_eq!(back, p);
    }

    #[test]
    fn inside_points_project_to_themselves((r, n, seed, _q) in instance(), scale in 0.0f64..1.0) {
        let p = random_polyhedron(r, n, seed).unwrap();
        let y = objective(n, seed, false);
        let Objective::Projection(proj) = &y else { unreachable!() };
        // shrink the query toward the origin until it is strictly inside
        let mut t = proj.target() * scale;
        while !strictly_inside(&p, &t, 1e-6) {
            t *= 0.5;
        }
        let obj = Objective::projection(t.as_slice()).unwrap();
        let rep = solve(&p, &obj, Schedule::level(Workers::Fixed(1)));
        let x = rep.outcome.point().unwrap();
        prop_assert!((x - &t).amax() <= 1e-12);
        prop_assert_eq!(rep.outcome.clone(), solve(&p, &obj, Schedule::ordered(Workers::Fixed(1))).outcome);
    }

    #[test]
    fn box_union_minimizers_are_on_the_union(y0 in -2.0f64..8.0, y1 in -2.0f64..8.0) {
        let boxes = [([0.0, 0.0], [4.0, 1.0]), ([0.0, 0.0], [1.0, 3.0]), ([3.0, 0.0], [4.0, 5.0])];
        let l = FaceLattice::rectilinear_union(&boxes).unwrap();
        let obj = Objective::projection(&[y0, y1]).unwrap();
        let rep = optimize_nonconvex(&l, &obj, &Schedule::default(), DEFAULT_TOL).unwrap();
        let points = rep.outcome.points();
        prop_assert!(!points.is_empty());
        let clamp = |lo: [f64; 2], hi: [f64; 2]| Vector::from_vec(vec![y0.clamp(lo[0], hi[0]), y1.clamp(lo[1], hi[1])]);
        let best = boxes.iter().map(|(lo, hi)| obj.eval(&clamp(*lo, *hi))).fold(f64::INFINITY, f64::min);
        for x in points {
            prop_assert!(l.top_contains(x, 1e-9));
            prop_assert!((obj.eval(x) - best).abs() <= 1e-9);
        }
    }
}

#[test]
fn canonical_rounding_is_idempotent() {
    for x in [0.1 + 0.2, -1e-12, 1.0 / 3.0, 123456.789_000_000_4] {
        let c = canonical_f64(x);
        assert_eq!(canonical_f64(c), c);
        assert!((c - x).abs() <= 5e-10);
    }
    assert!(canonical_f64(-1e-12).is_sign_positive());
}
