//! Nonsmooth mountain-pass toolkit.
//!
//! The building blocks are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix `f64`, which the solver and CLI use.
//!
//! ```
//! use mpass::{find_critical_point, problem_library, CriticalOutcome, Params, Problem};
//!
//! let problem: Problem = problem_library("nonsmooth_twin_paraboloid").unwrap();
//! let params = Params { n_max: 8, grid_m: 16, tail: 3, ..Params::default() };
//! match find_critical_point(&problem, &params).unwrap() {
//!     CriticalOutcome::Converged(c) => assert!(c.x.norm() < 1e-2),
//!     CriticalOutcome::NoConvergence(r) => panic!("{}", r.reason),
//! }
//! ```

pub mod bench;
pub mod clarke;
pub mod cli;
pub mod error;
pub mod functionals;
pub mod geometry;
pub mod paths;
pub mod scalar;
pub mod solver;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use clarke::{descent_direction, gen_dir_derivative, min_norm_element, subdifferential};
pub use functionals::{parse_expr, parse_point, problem_library};
pub use geometry::{crossing_window, delta_distance, dist_delta_to_set, DeltaOptions, DistOptions};
pub use paths::{path_max, rho};
pub use solver::{
    check_cps, cps_sequence, cps_step, ekeland_select, find_critical_point,
    minimize_max_over_paths, CriticalOutcome, DistanceMode, SolverParams,
};

pub type Real = f64;
pub type Point = functionals::Point<f64>;
pub type Expr = functionals::FunctionalExpr<f64>;
pub type Problem = functionals::MinMaxProblem<f64>;
pub type Polytope = clarke::SubdiffPolytope<f64>;
pub type Separator = geometry::SeparatingSet<f64>;
pub type Path = paths::Path<f64>;
pub type SubPath = paths::SubPath<f64>;
pub type Certificate = solver::CpsCertificate<f64>;
pub type CpsRun = solver::CpsRun<f64>;
pub type Params = SolverParams;
