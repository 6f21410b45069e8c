use crate::error::{Error, Result};
use crate::functionals::{parse_expr, FunctionalExpr, Point};
use crate::geometry::SeparatingSet;
use crate::scalar::Scalar;

/// Known solution of a benchmark.
#[derive(Clone, Debug, PartialEq)]
pub struct Reference<T> {
    pub critical_point: Point<T>,
    pub critical_value: T,
}

/// A mountain-pass problem: functional, endpoints and separating set.
#[derive(Clone, Debug)]
pub struct MinMaxProblem<T> {
    pub name: String,
    pub phi: FunctionalExpr<T>,
    pub z0: Point<T>,
    pub z1: Point<T>,
    pub separator: SeparatingSet<T>,
    pub reference: Option<Reference<T>>,
}

impl<T: Scalar> MinMaxProblem<T> {
    pub fn new(
        name: impl Into<String>,
        phi: FunctionalExpr<T>,
        z0: Point<T>,
        z1: Point<T>,
        separator: SeparatingSet<T>,
    ) -> Result<Self> {
        let n = phi.dim();
        for (label, d) in [
            ("z0", z0.dim()),
            ("z1", z1.dim()),
            ("separator", separator.dim()),
        ] {
            if d != n {
                return Err(Error::Usage(format!(
                    "{label} has dimension {d}, functional has {n}"
                )));
            }
        }
        if z0 == z1 {
            return Err(Error::Usage("z0 and z1 must differ".into()));
        }
        if !separator.separates(&z0, &z1) {
            return Err(Error::Topology(
                "separator does not place z0 and z1 on strictly opposite sides".into(),
            ));
        }
        Ok(MinMaxProblem {
            name: name.into(),
            phi,
            z0,
            z1,
            separator,
            reference: None,
        })
    }

    pub fn with_reference(mut self, critical_point: Point<T>, critical_value: T) -> Self {
        self.reference = Some(Reference {
            critical_point,
            critical_value,
        });
        self
    }

    pub fn dim(&self) -> usize {
        self.phi.dim()
    }
}

/// Registered benchmark names; `double_well_nd_<n>` accepts n in 2..=10.
pub const LIBRARY_NAMES: &[&str] = &[
    "smooth_double_well",
    "nonsmooth_twin_paraboloid",
    "tilted_abs_well",
    "smooth_double_well_ring",
    "kinked_ridge",
    "double_well_nd_<n>",
];

const DOUBLE_WELL: &str = "add(pow(sub(sq(x0),1),2),sq(x1))";
// Concave kink along x0 = 0: the two wells meet in a ridge of value 1 + x1^2.
const TWIN_PARABOLOID: &str = "min(add(sq(sub(x0,1)),sq(x1)),add(sq(add(x0,1)),sq(x1)))";
// Ridge x0 = 0 with a kink across it: |x1| keeps every off-axis crossing
// far from critical however close it is to the saddle.
const KINKED_RIDGE: &str = "add(min(sq(sub(x0,1)),sq(add(x0,1))),abs(x1))";
const TILTED_ABS: &str = "add(min(abs(sub(x0,1)),abs(add(x0,1))),mul(0.25,x0),sq(x1))";

fn on_axis<T: Scalar>(n: usize, x0: f64) -> Point<T> {
    let mut c = vec![T::zero(); n];
    c[0] = T::lit(x0);
    Point::from_vec(c)
}

fn axis_problem<T: Scalar>(name: &str, src: &str, n: usize) -> Result<MinMaxProblem<T>> {
    let phi = parse_expr(src, n)?;
    let sep = SeparatingSet::hyperplane(on_axis::<T>(n, 1.0).into_vec(), T::zero())?;
    Ok(
        MinMaxProblem::new(name, phi, on_axis(n, -1.0), on_axis(n, 1.0), sep)?
            .with_reference(Point::origin(n), T::one()),
    )
}

/// Looks up a benchmark problem by name.
pub fn problem_library<T: Scalar>(name: &str) -> Result<MinMaxProblem<T>> {
    match name {
        "smooth_double_well" => axis_problem(name, DOUBLE_WELL, 2),
        "nonsmooth_twin_paraboloid" => axis_problem(name, TWIN_PARABOLOID, 2),
        "tilted_abs_well" => axis_problem(name, TILTED_ABS, 2),
        "kinked_ridge" => axis_problem(name, KINKED_RIDGE, 2),
        "smooth_double_well_ring" => {
            // bounded separator: the unit circle around z0, through the saddle
            let phi = parse_expr(DOUBLE_WELL, 2)?;
            let sep = SeparatingSet::sphere(vec![T::lit(-1.0), T::zero()], T::one())?;
            Ok(
                MinMaxProblem::new(name, phi, on_axis(2, -1.0), on_axis(2, 1.0), sep)?
                    .with_reference(Point::origin(2), T::one()),
            )
        }
        _ => {
            let n = name
                .strip_prefix("double_well_nd_")
                .and_then(|s| s.parse::<usize>().ok())
                .filter(|n| (2..=10).contains(n))
                .ok_or_else(|| Error::UnknownProblem(name.to_string()))?;
            let tail: Vec<String> = (1..n).map(|i| format!("sq(x{i})")).collect();
            let src = format!("add(pow(sub(sq(x0),1),2),{})", tail.join(","));
            axis_problem(name, &src, n)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all() -> Vec<MinMaxProblem<f64>> {
        let mut names: Vec<String> = LIBRARY_NAMES[..5].iter().map(|s| s.to_string()).collect();
        names.extend((2..=10).map(|n| format!("double_well_nd_{n}")));
        names.iter().map(|n| problem_library(n).unwrap()).collect()
    }

    #[test]
    fn references_sit_above_endpoints() {
        for p in all() {
            let r = p.reference.as_ref().unwrap();
            let f0 = p.phi.evaluate(&p.z0).unwrap();
            let f1 = p.phi.evaluate(&p.z1).unwrap();
            assert!(f0 < r.critical_value && f1 < r.critical_value, "{}", p.name);
            assert!(p.separator.side(&p.z0) < 0.0 && p.separator.side(&p.z1) > 0.0);
            assert_eq!(p.phi.evaluate(&r.critical_point).unwrap(), r.critical_value);
        }
    }

    #[test]
    fn reference_points_are_clarke_critical() {
        use crate::clarke::{min_norm_element, subdifferential};
        for p in all() {
            let r = p.reference.as_ref().unwrap();
            let poly = subdifferential(&p.phi, &r.critical_point, 1e-9).unwrap();
            assert!(min_norm_element(&poly).1 < 1e-12, "{}", p.name);
        }
    }

    #[test]
    fn twin_paraboloid_subdifferential_at_saddle() {
        let p = problem_library::<f64>("nonsmooth_twin_paraboloid").unwrap();
        let g = p.phi.active_pieces(&Point::origin(2), 0.0).unwrap();
        assert_eq!(g, vec![vec![-2.0, 0.0], vec![2.0, 0.0]]);
    }

    #[test]
    fn unknown_names_are_rejected() {
        for bad in ["foo", "double_well_nd_1", "double_well_nd_11", "double_well_nd_x"] {
            assert!(matches!(
                problem_library::<f64>(bad),
                Err(Error::UnknownProblem(_))
            ));
        }
    }
}
