//! Locally Lipschitz functionals: representation, evaluation, active pieces
//! and the benchmark library.

mod expr;
mod library;
mod parse;

pub use expr::{FunctionalExpr, Node, Point, UnaryFn, DEFAULT_ACTIVITY_TOL};
pub use library::{problem_library, MinMaxProblem, Reference, LIBRARY_NAMES};
pub use parse::{parse_expr, parse_point};
