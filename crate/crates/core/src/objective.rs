//! Strictly convex objectives with exact minimization over affine spaces.

use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{check_dim, AffineSpace, Vector};

/// A strictly convex function on ℝⁿ that can be minimized exactly over any
/// affine space.
///
/// Strict convexity guarantees that a minimizer over a convex set, if it
/// exists, is unique; the search relies on that to carry single points
/// between affine spaces.
pub trait StrictlyConvexObjective: Send + Sync {
    fn dimension(&self) -> usize;

    fn eval(&self, x: &Vector) -> f64;

    /// The unique minimizer over `space`, or `None` if no minimum is attained.
    fn argmin_affine(&self, space: &AffineSpace) -> Option<Vector>;

    /// Minimizer over all of ℝⁿ.
    fn argmin_global(&self) -> Option<Vector> {
        self.argmin_affine(&AffineSpace::whole(self.dimension()))
    }
}

/// `f(x) = ‖x − target‖`; minimizing over a set is orthogonal projection.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionObjective {
    target: Vector,
}

impl ProjectionObjective {
    pub fn new(target: Vector) -> Result<Self> {
        if target.is_empty() {
            return Err(Error::ZeroDimension);
        }
        if target.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("projection target"));
        }
        Ok(Self { target })
    }

    pub fn target(&self) -> &Vector {
        &self.target
    }
}

impl StrictlyConvexObjective for ProjectionObjective {
    fn dimension(&self) -> usize {
        self.target.len()
    }

    fn eval(&self, x: &Vector) -> f64 {
        (x - &self.target).norm()
    }

    fn argmin_affine(&self, space: &AffineSpace) -> Option<Vector> {
        Some(space.project(&self.target))
    }

    fn argmin_global(&self) -> Option<Vector> {
        Some(self.target.clone())
    }
}

/// `f(x) = (x − center)ᵀ Q (x − center)` with `Q` symmetric positive definite.
#[derive(Clone, Debug)]
pub struct QuadraticObjective {
    q: DMatrix<f64>,
    center: Vector,
}

impl QuadraticObjective {
    pub fn new(q: DMatrix<f64>, center: Vector) -> Result<Self> {
        let n = center.len();
        if n == 0 {
            return Err(Error::ZeroDimension);
        }
        check_dim(n, q.nrows())?;
        check_dim(n, q.ncols())?;
        if q.iter().chain(center.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("quadratic objective"));
        }
        let scale = q.amax().max(1.0);
        for i in 0..n {
            for j in i + 1..n {
                if (q[(i, j)] - q[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::NotSymmetric);
                }
            }
        }
        if Cholesky::new(q.clone()).is_none() {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(Self { q, center })
    }

    pub fn from_rows(rows: &[Vec<f64>], center: &[f64]) -> Result<Self> {
        let n = center.len();
        check_dim(n, rows.len())?;
        for row in rows {
            check_dim(n, row.len())?;
        }
        let q = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        Self::new(q, Vector::from_column_slice(center))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn center(&self) -> &Vector {
        &self.center
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        (&self.q * (x - &self.center)) * 2.0
    }
}

impl StrictlyConvexObjective for QuadraticObjective {
    fn dimension(&self) -> usize {
        self.center.len()
    }

    fn eval(&self, x: &Vector) -> f64 {
        let d = x - &self.center;
        d.dot(&(&self.q * &d))
    }

    // Reduced problem in direction coordinates:
    // (DᵀQD) u = −DᵀQ(anchor − center), x = anchor + D u.
    fn argmin_affine(&self, space: &AffineSpace) -> Option<Vector> {
        if space.dimension() == 0 {
            return Some(space.anchor().clone());
        }
        let d = space.direction_matrix();
        let qd = &self.q * d;
        let reduced = d.transpose() * &qd;
        let rhs = -(qd.transpose() * (space.anchor() - &self.center));
        let u = Cholesky::new(reduced)?.solve(&rhs);
        Some(space.anchor() + d * u)
    }

    fn argmin_global(&self) -> Option<Vector> {
        Some(self.center.clone())
    }
}

/// JSON form of an objective.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ObjectiveSpec {
    Projection {
        target: Vec<f64>,
    },
    Quadratic {
        #[serde(rename = "Q")]
        q: Vec<Vec<f64>>,
        center: Vec<f64>,
    },
}

/// Either concrete objective, built from an [`ObjectiveSpec`].
#[derive(Clone, Debug)]
pub enum Objective {
    Projection(ProjectionObjective),
    Quadratic(QuadraticObjective),
}

impl Objective {
    pub fn projection(target: &[f64]) -> Result<Self> {
        Ok(Self::Projection(ProjectionObjective::new(
            Vector::from_column_slice(target),
        )?))
    }

    pub fn from_spec(spec: &ObjectiveSpec) -> Result<Self> {
        match spec {
            ObjectiveSpec::Projection { target } => Self::projection(target),
            ObjectiveSpec::Quadratic { q, center } => {
                Ok(Self::Quadratic(QuadraticObjective::from_rows(q, center)?))
            }
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_spec(&serde_json::from_str(text)?)
    }

    fn inner(&self) -> &dyn StrictlyConvexObjective {
        match self {
            Self::Projection(p) => p,
            Self::Quadratic(q) => q,
        }
    }
}

impl StrictlyConvexObjective for Objective {
    fn dimension(&self) -> usize {
        self.inner().dimension()
    }

    fn eval(&self, x: &Vector) -> f64 {
        self.inner().eval(x)
    }

    fn argmin_affine(&self, space: &AffineSpace) -> Option<Vector> {
        self.inner().argmin_affine(space)
    }

    fn argmin_global(&self) -> Option<Vector> {
        self.inner().argmin_global()
    }
}

/// Free-function form of [`StrictlyConvexObjective::argmin_affine`].
pub fn argmin_affine<O: StrictlyConvexObjective + ?Sized>(
    obj: &O,
    space: &AffineSpace,
) -> Result<Option<Vector>> {
    check_dim(space.ambient_dimension(), obj.dimension())?;
    Ok(obj.argmin_affine(space))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{affine_solve, Polyhedron, DEFAULT_TOL};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn line_x_plus_y_eq_1() -> AffineSpace {
        let p = Polyhedron::from_rows(2, &[(&[1.0, 1.0], 1.0)]).unwrap();
        affine_solve(&p, &[0], DEFAULT_TOL).unwrap().unwrap()
    }

    #[test]
    fn projection_examples() {
        let obj = ProjectionObjective::new(v(&[1.0, 1.0])).unwrap();
        let m = argmin_affine(&obj, &line_x_plus_y_eq_1()).unwrap().unwrap();
        assert_abs_diff_eq!(m, v(&[0.5, 0.5]), epsilon = 1e-12);
        let y = v(&[-2.0, 4.0, 0.5]);
        let obj = ProjectionObjective::new(y.clone()).unwrap();
        assert_eq!(obj.argmin_affine(&AffineSpace::whole(3)).unwrap(), y);
    }

    #[test]
    fn quadratic_on_line() {
        // minimize x² + 4y² on x + y = 1: Lagrange gives 2x = λ, 8y = λ, so x = 4y → (4/5, 1/5)
        let obj =
            QuadraticObjective::from_rows(&[vec![1.0, 0.0], vec![0.0, 4.0]], &[0.0, 0.0]).unwrap();
        let m = obj.argmin_affine(&line_x_plus_y_eq_1()).unwrap();
        assert_abs_diff_eq!(m, v(&[0.8, 0.2]), epsilon = 1e-12);
    }

    #[test]
    fn quadratic_rejects_bad_matrices() {
        assert!(matches!(
            QuadraticObjective::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]], &[0.0, 0.0]),
            Err(Error::NotSymmetric)
        ));
        assert!(matches!(
            QuadraticObjective::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]], &[0.0, 0.0]),
            Err(Error::NotPositiveDefinite)
        ));
        assert!(QuadraticObjective::from_rows(&[vec![1.0]], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn spec_parsing() {
        let o = Objective::parse(r#"{"type":"projection","target":[1,2]}"#).unwrap();
        assert_eq!(o.dimension(), 2);
        let o = Objective::parse(r#"{"type":"quadratic","Q":[[2,0],[0,1]],"center":[1,1]}"#)
            .unwrap();
        assert_abs_diff_eq!(o.eval(&v(&[2.0, 1.0])), 2.0);
        assert!(Objective::parse(r#"{"type":"cubic"}"#).is_err());
    }

    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        a.transpose() * a + DMatrix::identity(n, n) * 0.5
    }

    fn random_space(rng: &mut ChaCha8Rng, n: usize, k: usize) -> AffineSpace {
        let rows: Vec<(Vec<f64>, f64)> = (0..k)
            .map(|_| {
                (
                    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    rng.random_range(-1.0..1.0),
                )
            })
            .collect();
        let refs: Vec<(&[f64], f64)> = rows.iter().map(|(a, b)| (a.as_slice(), *b)).collect();
        let p = Polyhedron::from_rows(n, &refs).unwrap();
        let gens: Vec<usize> = (0..k).collect();
        affine_solve(&p, &gens, DEFAULT_TOL).unwrap().unwrap()
    }

    proptest! {
        #[test]
        fn affine_minimizer_beats_random_points(seed in any::<u64>(), n in 1usize..5, k_frac in 0.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = ((n as f64) * k_frac) as usize;
            let space = random_space(&mut rng, n, k);
            let center = Vector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
            let objs: Vec<Objective> = vec![
                Objective::Projection(ProjectionObjective::new(center.clone()).unwrap()),
                Objective::Quadratic(QuadraticObjective::new(random_spd(&mut rng, n), center).unwrap()),
            ];
            for obj in &objs {
                let m = obj.argmin_affine(&space).unwrap();
                prop_assert!(space.contains(&m, 1e-8));
                let fm = obj.eval(&m);
                for _ in 0..100 {
                    let mut z = space.anchor().clone();
                    for d in space.directions() {
                        z.axpy(rng.random_range(-5.0..5.0), &d, 1.0);
                    }
                    prop_assert!(fm <= obj.eval(&z) + 1e-9);
                }
            }
        }

        #[test]
        fn projection_agrees_with_project_affine(seed in any::<u64>(), n in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = rng.random_range(0..=n);
            let space = random_space(&mut rng, n, k);
            let y = Vector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
            let obj = ProjectionObjective::new(y.clone()).unwrap();
            prop_assert_eq!(obj.argmin_affine(&space).unwrap(), space.project(&y));
        }

        #[test]
        fn quadratic_gradient_matches_finite_differences(seed in any::<u64>(), n in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let center = Vector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
            let obj = QuadraticObjective::new(random_spd(&mut rng, n), center).unwrap();
            let x = Vector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
            let grad = obj.gradient(&x);
            let dir = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)).normalize();
            let h = 1e-5;
            let fd = (obj.eval(&(&x + &dir * h)) - obj.eval(&(&x - &dir * h))) / (2.0 * h);
            let exact = grad.dot(&dir);
            prop_assert!((fd - exact).abs() <= 1e-5 * exact.abs().max(1.0));
        }

        #[test]
        fn strict_convexity_spot_check(seed in any::<u64>(), n in 1usize..5, t in 0.01f64..0.99) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let center = Vector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
            let obj = QuadraticObjective::new(random_spd(&mut rng, n), center).unwrap();
            let x = Vector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
            let y = Vector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
            prop_assume!((&x - &y).norm() > 1e-3);
            let mid = &x * t + &y * (1.0 - t);
            prop_assert!(obj.eval(&mid) < t * obj.eval(&x) + (1.0 - t) * obj.eval(&y));
        }
    }
}
