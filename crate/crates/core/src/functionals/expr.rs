//! Expression trees for locally Lipschitz functionals of max-of-smooth type.

use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::{vecops, Scalar};

/// A point of ℝⁿ.
#[derive(Clone, Debug, PartialEq)]
pub struct Point<T> {
    coords: Vec<T>,
}

impl<T: Scalar> Point<T> {
    pub fn new(coords: Vec<T>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Usage("a point needs at least one coordinate".into()));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::Usage("point coordinates must be finite".into()));
        }
        Ok(Point { coords })
    }

    /// Builds a point without checking finiteness. Callers own the invariant.
    pub(crate) fn from_vec(coords: Vec<T>) -> Self {
        debug_assert!(!coords.is_empty());
        Point { coords }
    }

    pub fn origin(dim: usize) -> Self {
        Point {
            coords: vec![T::zero(); dim.max(1)],
        }
    }

    pub fn from_f64(coords: &[f64]) -> Result<Self> {
        Self::new(coords.iter().map(|&c| T::lit(c)).collect())
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[T] {
        &self.coords
    }

    pub fn norm(&self) -> T {
        vecops::norm(&self.coords)
    }

    pub fn dist(&self, other: &Point<T>) -> T {
        vecops::dist(&self.coords, &other.coords)
    }

    pub fn into_vec(self) -> Vec<T> {
        self.coords
    }
}

impl<T: Scalar> fmt::Display for Point<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.coords.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryFn {
    Exp,
    Sin,
    Cos,
}

impl UnaryFn {
    fn apply<T: Scalar>(self, v: T) -> T {
        match self {
            UnaryFn::Exp => v.exp(),
            UnaryFn::Sin => v.sin(),
            UnaryFn::Cos => v.cos(),
        }
    }

    fn derivative<T: Scalar>(self, v: T) -> T {
        match self {
            UnaryFn::Exp => v.exp(),
            UnaryFn::Sin => v.cos(),
            UnaryFn::Cos => -v.sin(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            UnaryFn::Exp => "exp",
            UnaryFn::Sin => "sin",
            UnaryFn::Cos => "cos",
        }
    }
}

/// AST node. Every node is locally Lipschitz, so every tree is too.
#[derive(Clone, Debug, PartialEq)]
pub enum Node<T> {
    Const(T),
    Coord(usize),
    Sum(Vec<Node<T>>),
    Product(Vec<Node<T>>),
    /// Integer power `p >= 1`.
    Pow(Box<Node<T>>, u32),
    Unary(UnaryFn, Box<Node<T>>),
    Max(Vec<Node<T>>),
    Min(Vec<Node<T>>),
    Abs(Box<Node<T>>),
}

/// Upper bound on the number of selection gradients kept per node.
const MAX_PIECES: usize = 256;

impl<T: Scalar> Node<T> {
    fn max_coord(&self) -> Option<usize> {
        match self {
            Node::Const(_) => None,
            Node::Coord(i) => Some(*i),
            Node::Sum(c) | Node::Product(c) | Node::Max(c) | Node::Min(c) => {
                c.iter().filter_map(Node::max_coord).max()
            }
            Node::Pow(c, _) | Node::Unary(_, c) | Node::Abs(c) => c.max_coord(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Node::Const(c) if !c.is_finite() => {
                Err(Error::Usage("constants must be finite".into()))
            }
            Node::Sum(c) | Node::Product(c) | Node::Max(c) | Node::Min(c) => {
                if c.is_empty() {
                    return Err(Error::Usage("n-ary node with no children".into()));
                }
                c.iter().try_for_each(Node::validate)
            }
            Node::Pow(_, 0) => Err(Error::Usage("power exponent must be >= 1".into())),
            Node::Pow(c, _) | Node::Unary(_, c) | Node::Abs(c) => c.validate(),
            _ => Ok(()),
        }
    }

    fn is_smooth(&self) -> bool {
        match self {
            Node::Const(_) | Node::Coord(_) => true,
            Node::Sum(c) | Node::Product(c) => c.iter().all(Node::is_smooth),
            Node::Pow(c, _) | Node::Unary(_, c) => c.is_smooth(),
            Node::Max(_) | Node::Min(_) | Node::Abs(_) => false,
        }
    }

    fn eval(&self, x: &[T]) -> T {
        match self {
            Node::Const(c) => *c,
            Node::Coord(i) => x[*i],
            Node::Sum(c) => c.iter().map(|n| n.eval(x)).sum(),
            Node::Product(c) => c.iter().fold(T::one(), |acc, n| acc * n.eval(x)),
            Node::Pow(c, p) => c.eval(x).powi(*p as i32),
            Node::Unary(f, c) => f.apply(c.eval(x)),
            Node::Max(c) => c
                .iter()
                .map(|n| n.eval(x))
                .fold(T::neg_infinity(), T::max),
            Node::Min(c) => c.iter().map(|n| n.eval(x)).fold(T::infinity(), T::min),
            Node::Abs(c) => c.eval(x).abs(),
        }
    }

    /// Value and the gradients of every active smooth selection at `x`.
    fn pieces(&self, x: &[T], tol: T) -> (T, Vec<Vec<T>>) {
        let n = x.len();
        match self {
            Node::Const(c) => (*c, vec![vec![T::zero(); n]]),
            Node::Coord(i) => {
                let mut g = vec![T::zero(); n];
                g[*i] = T::one();
                (x[*i], vec![g])
            }
            Node::Sum(children) => {
                let parts: Vec<_> = children.iter().map(|c| c.pieces(x, tol)).collect();
                let value = parts.iter().map(|p| p.0).sum();
                let grads = combine(&parts, |_, sel| {
                    let mut g = vec![T::zero(); n];
                    for s in sel {
                        for (gi, si) in g.iter_mut().zip(s.iter()) {
                            *gi = *gi + *si;
                        }
                    }
                    g
                });
                (value, grads)
            }
            Node::Product(children) => {
                let parts: Vec<_> = children.iter().map(|c| c.pieces(x, tol)).collect();
                let values: Vec<T> = parts.iter().map(|p| p.0).collect();
                let value = values.iter().fold(T::one(), |a, &b| a * b);
                let grads = combine(&parts, |vals, sel| {
                    let mut g = vec![T::zero(); n];
                    for (k, s) in sel.iter().enumerate() {
                        let others = vals
                            .iter()
                            .enumerate()
                            .filter(|(j, _)| *j != k)
                            .fold(T::one(), |a, (_, &v)| a * v);
                        for (gi, si) in g.iter_mut().zip(s.iter()) {
                            *gi = *gi + others * *si;
                        }
                    }
                    g
                });
                (value, grads)
            }
            Node::Pow(c, p) => {
                let (v, gs) = c.pieces(x, tol);
                let coef = T::lit(*p as f64) * v.powi(*p as i32 - 1);
                (
                    v.powi(*p as i32),
                    gs.into_iter().map(|g| vecops::scale(&g, coef)).collect(),
                )
            }
            Node::Unary(f, c) => {
                let (v, gs) = c.pieces(x, tol);
                let d = f.derivative(v);
                (
                    f.apply(v),
                    gs.into_iter().map(|g| vecops::scale(&g, d)).collect(),
                )
            }
            Node::Max(children) | Node::Min(children) => {
                let is_max = matches!(self, Node::Max(_));
                let parts: Vec<_> = children.iter().map(|c| c.pieces(x, tol)).collect();
                let best = parts.iter().map(|p| p.0).fold(
                    if is_max { T::neg_infinity() } else { T::infinity() },
                    |a, b| if is_max { a.max(b) } else { a.min(b) },
                );
                let node_tol = tol * (T::one() + best.abs());
                let mut out = Vec::new();
                for (v, gs) in parts {
                    if (v - best).abs() <= node_tol {
                        for g in gs {
                            push_unique(&mut out, g);
                        }
                    }
                }
                (best, out)
            }
            Node::Abs(c) => {
                let (v, gs) = c.pieces(x, tol);
                let node_tol = tol * (T::one() + v.abs());
                let mut out = Vec::new();
                for g in gs {
                    if v.abs() <= node_tol {
                        push_unique(&mut out, g.clone());
                        push_unique(&mut out, vecops::scale(&g, -T::one()));
                    } else if v > T::zero() {
                        push_unique(&mut out, g);
                    } else {
                        push_unique(&mut out, vecops::scale(&g, -T::one()));
                    }
                }
                (v.abs(), out)
            }
        }
    }

    fn fmt_into(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |f: &mut fmt::Formatter<'_>, name: &str, c: &[Node<T>]| -> fmt::Result {
            write!(f, "{name}(")?;
            for (i, n) in c.iter().enumerate() {
                if i > 0 {
                    write!(f, ",")?;
                }
                n.fmt_into(f)?;
            }
            write!(f, ")")
        };
        match self {
            Node::Const(c) => write!(f, "{c}"),
            Node::Coord(i) => write!(f, "x{i}"),
            Node::Sum(c) => list(f, "add", c),
            Node::Product(c) => list(f, "mul", c),
            Node::Max(c) => list(f, "max", c),
            Node::Min(c) => list(f, "min", c),
            Node::Pow(c, p) => {
                write!(f, "pow(")?;
                c.fmt_into(f)?;
                write!(f, ",{p})")
            }
            Node::Unary(u, c) => {
                write!(f, "{}(", u.name())?;
                c.fmt_into(f)?;
                write!(f, ")")
            }
            Node::Abs(c) => {
                write!(f, "abs(")?;
                c.fmt_into(f)?;
                write!(f, ")")
            }
        }
    }
}

/// Cartesian product over child selections, mapped through `f(values, selection)`.
fn combine<T: Scalar>(
    parts: &[(T, Vec<Vec<T>>)],
    f: impl Fn(&[T], &[&Vec<T>]) -> Vec<T>,
) -> Vec<Vec<T>> {
    let values: Vec<T> = parts.iter().map(|p| p.0).collect();
    let mut out: Vec<Vec<T>> = Vec::new();
    let mut idx = vec![0usize; parts.len()];
    loop {
        let sel: Vec<&Vec<T>> = parts.iter().zip(&idx).map(|(p, &i)| &p.1[i]).collect();
        push_unique(&mut out, f(&values, &sel));
        if out.len() >= MAX_PIECES {
            break;
        }
        // odometer increment
        let mut k = 0;
        loop {
            if k == parts.len() {
                return out;
            }
            idx[k] += 1;
            if idx[k] < parts[k].1.len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
    out
}

fn push_unique<T: Scalar>(out: &mut Vec<Vec<T>>, g: Vec<T>) {
    if !out.contains(&g) {
        out.push(g);
    }
}

/// A functional Φ: ℝⁿ → ℝ given as an expression tree over `dim` coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct FunctionalExpr<T> {
    root: Node<T>,
    dim: usize,
}

impl<T: Scalar> FunctionalExpr<T> {
    pub fn new(root: Node<T>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Usage("dimension must be >= 1".into()));
        }
        root.validate()?;
        if let Some(i) = root.max_coord() {
            if i >= dim {
                return Err(Error::Usage(format!(
                    "coordinate x{i} out of range for dimension {dim}"
                )));
            }
        }
        Ok(FunctionalExpr { root, dim })
    }

    pub fn constant(value: T, dim: usize) -> Result<Self> {
        Self::new(Node::Const(value), dim)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn root(&self) -> &Node<T> {
        &self.root
    }

    /// True when the tree has no max, min or abs node.
    pub fn is_smooth(&self) -> bool {
        self.root.is_smooth()
    }

    fn check_dim(&self, x: &[T]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn evaluate(&self, x: &Point<T>) -> Result<T> {
        self.evaluate_slice(x.coords())
    }

    pub fn evaluate_slice(&self, x: &[T]) -> Result<T> {
        self.check_dim(x)?;
        Ok(self.root.eval(x))
    }

    /// Evaluation for callers that already validated the dimension.
    pub(crate) fn eval_unchecked(&self, x: &[T]) -> T {
        debug_assert_eq!(x.len(), self.dim);
        self.root.eval(x)
    }

    /// Gradients of all smooth selections active at `x`.
    ///
    /// At every max/min/abs node a branch is active when its value lies within
    /// `activity_tol * (1 + |node value|)` of the attained value. For smooth
    /// trees the result is exactly one gradient.
    pub fn active_pieces(&self, x: &Point<T>, activity_tol: T) -> Result<Vec<Vec<T>>> {
        self.active_pieces_slice(x.coords(), activity_tol)
    }

    pub fn active_pieces_slice(&self, x: &[T], activity_tol: T) -> Result<Vec<Vec<T>>> {
        self.check_dim(x)?;
        if activity_tol < T::zero() || activity_tol.is_nan() {
            return Err(Error::Usage("activity_tol must be >= 0".into()));
        }
        Ok(self.root.pieces(x, activity_tol).1)
    }
}

impl<T: Scalar> fmt::Display for FunctionalExpr<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.fmt_into(f)
    }
}

/// Default relative activity tolerance.
pub const DEFAULT_ACTIVITY_TOL: f64 = 1e-9;
