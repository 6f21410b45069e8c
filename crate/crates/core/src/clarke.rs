//! Clarke generalized gradients for max-of-smooth functionals.
//!
//! The subdifferential at `x` is the convex hull of the active selection
//! gradients. Everything downstream consumes it through three operations:
//! the support function (generalized directional derivative), the min-norm
//! element, and the descent direction built from the min-norm element.

use crate::error::{Error, Result};
use crate::functionals::{FunctionalExpr, Point};
use crate::scalar::{vecops, Scalar};

/// `conv(generators)`, computed at `base_point`.
#[derive(Clone, Debug, PartialEq)]
pub struct SubdiffPolytope<T> {
    generators: Vec<Vec<T>>,
    base_point: Point<T>,
}

impl<T: Scalar> SubdiffPolytope<T> {
    pub fn new(generators: Vec<Vec<T>>, base_point: Point<T>) -> Result<Self> {
        if generators.is_empty() {
            return Err(Error::Usage("a polytope needs at least one generator".into()));
        }
        let n = base_point.dim();
        for g in &generators {
            if g.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: g.len(),
                });
            }
            if g.iter().any(|c| !c.is_finite()) {
                return Err(Error::Usage("generators must be finite".into()));
            }
        }
        Ok(SubdiffPolytope {
            generators,
            base_point,
        })
    }

    pub fn generators(&self) -> &[Vec<T>] {
        &self.generators
    }

    pub fn base_point(&self) -> &Point<T> {
        &self.base_point
    }
}

/// Outcome of the descent-direction construction.
#[derive(Clone, Debug, PartialEq)]
pub enum DescentResult<T> {
    /// `direction` has norm `1 + |x|` and `Φ⁰(x, direction) <= slope_bound < -margin`.
    Direction {
        direction: Vec<T>,
        slope_bound: T,
        min_norm: T,
    },
    /// `(1 + |x|) * min_norm <= margin`.
    NearCritical { min_norm: T, scaled_min_norm: T },
}

impl<T: Scalar> DescentResult<T> {
    pub fn is_near_critical(&self) -> bool {
        matches!(self, DescentResult::NearCritical { .. })
    }
}

pub fn subdifferential<T: Scalar>(
    expr: &FunctionalExpr<T>,
    x: &Point<T>,
    activity_tol: T,
) -> Result<SubdiffPolytope<T>> {
    let generators = expr.active_pieces(x, activity_tol)?;
    SubdiffPolytope::new(generators, x.clone())
}

/// `Φ⁰(x, v) = max_g <g, v>`. Ties resolve to the lowest generator index.
pub fn gen_dir_derivative<T: Scalar>(poly: &SubdiffPolytope<T>, v: &[T]) -> Result<T> {
    Ok(argmax_generator(poly, v)?.1)
}

/// Index and value of the maximizing generator of `<g, v>`.
pub fn argmax_generator<T: Scalar>(poly: &SubdiffPolytope<T>, v: &[T]) -> Result<(usize, T)> {
    let n = poly.base_point.dim();
    if v.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: v.len(),
        });
    }
    let mut best = (0, vecops::dot(&poly.generators[0], v));
    for (i, g) in poly.generators.iter().enumerate().skip(1) {
        let s = vecops::dot(g, v);
        if s > best.1 {
            best = (i, s);
        }
    }
    Ok(best)
}

/// Element of least Euclidean norm in `conv(generators)` and its norm.
///
/// Wolfe's nearest-point algorithm on the active-set of barycentric weights.
pub fn min_norm_element<T: Scalar>(poly: &SubdiffPolytope<T>) -> (Vec<T>, T) {
    let g = min_norm_weights(&poly.generators);
    let x = combination(&poly.generators, &g);
    let val = vecops::norm(&x);
    (x, val)
}

fn combination<T: Scalar>(pts: &[Vec<T>], w: &[T]) -> Vec<T> {
    let n = pts[0].len();
    let mut x = vec![T::zero(); n];
    for (p, &wi) in pts.iter().zip(w) {
        if wi != T::zero() {
            for (xi, &pi) in x.iter_mut().zip(p) {
                *xi = *xi + wi * pi;
            }
        }
    }
    x
}

/// Barycentric weights of the min-norm point of `conv(pts)`.
pub fn min_norm_weights<T: Scalar>(pts: &[Vec<T>]) -> Vec<T> {
    let m = pts.len();
    let scale = pts
        .iter()
        .map(|p| vecops::dot(p, p))
        .fold(T::zero(), T::max)
        .max(T::min_positive_value());
    let tol = T::lit(1e-12) * scale;
    let wtol = T::lit(1e-13);

    let start = (0..m)
        .min_by(|&a, &b| {
            vecops::dot(&pts[a], &pts[a])
                .partial_cmp(&vecops::dot(&pts[b], &pts[b]))
                .unwrap()
        })
        .unwrap();
    // active set and its weights
    let mut set = vec![start];
    let mut lam = vec![T::one()];
    let mut x = pts[start].clone();

    for _major in 0..(50 * m + 50) {
        let xx = vecops::dot(&x, &x);
        if xx <= tol * T::lit(1e-6) {
            break;
        }
        let (j, xj) = (0..m)
            .map(|i| (i, vecops::dot(&x, &pts[i])))
            .fold((0, T::infinity()), |b, c| if c.1 < b.1 { c } else { b });
        if xj >= xx - tol || set.contains(&j) {
            break;
        }
        set.push(j);
        lam.push(T::zero());

        loop {
            let alpha = match affine_min(pts, &set) {
                Some(a) => a,
                None => {
                    // degenerate affine hull: drop the newest point and stop
                    set.pop();
                    lam.pop();
                    let full = expand(&set, &lam, m);
                    return full;
                }
            };
            if alpha.iter().all(|&a| a > wtol) {
                lam = alpha;
                x = combination_sel(pts, &set, &lam);
                break;
            }
            // move toward the affine minimizer until a weight hits zero
            let mut theta = T::one();
            for (l, a) in lam.iter().zip(&alpha) {
                if *a <= wtol {
                    let d = *l - *a;
                    if d > T::zero() {
                        theta = theta.min(*l / d);
                    }
                }
            }
            for (l, a) in lam.iter_mut().zip(&alpha) {
                *l = *l + theta * (*a - *l);
            }
            let mut k = 0;
            while k < set.len() {
                if lam[k] <= wtol {
                    set.remove(k);
                    lam.remove(k);
                } else {
                    k += 1;
                }
            }
            let s: T = lam.iter().copied().sum();
            for l in lam.iter_mut() {
                *l = *l / s;
            }
            x = combination_sel(pts, &set, &lam);
            if set.len() == 1 {
                break;
            }
        }
    }
    expand(&set, &lam, m)
}

fn expand<T: Scalar>(set: &[usize], lam: &[T], m: usize) -> Vec<T> {
    let mut w = vec![T::zero(); m];
    for (&i, &l) in set.iter().zip(lam) {
        w[i] = l;
    }
    w
}

fn combination_sel<T: Scalar>(pts: &[Vec<T>], set: &[usize], lam: &[T]) -> Vec<T> {
    let n = pts[0].len();
    let mut x = vec![T::zero(); n];
    for (&i, &l) in set.iter().zip(lam) {
        for (xi, &pi) in x.iter_mut().zip(&pts[i]) {
            *xi = *xi + l * pi;
        }
    }
    x
}

/// Weights (summing to 1) of the min-norm point of the affine hull of `pts[set]`.
fn affine_min<T: Scalar>(pts: &[Vec<T>], set: &[usize]) -> Option<Vec<T>> {
    let k = set.len();
    // [G 1; 1' 0] [a; mu] = [0; 1]
    let dim = k + 1;
    let mut a = vec![vec![T::zero(); dim + 1]; dim];
    for r in 0..k {
        for c in 0..k {
            a[r][c] = vecops::dot(&pts[set[r]], &pts[set[c]]);
        }
        a[r][k] = T::one();
        a[k][r] = T::one();
    }
    a[k][dim] = T::one();
    let sol = solve_dense(a)?;
    Some(sol[..k].to_vec())
}

/// Gaussian elimination with partial pivoting on an augmented matrix.
fn solve_dense<T: Scalar>(mut a: Vec<Vec<T>>) -> Option<Vec<T>> {
    let n = a.len();
    let scale = a
        .iter()
        .flat_map(|r| r[..n].iter())
        .fold(T::zero(), |m, v| m.max(v.abs()));
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
        if a[piv][col].abs() <= T::lit(1e-14) * scale.max(T::one()) {
            return None;
        }
        a.swap(col, piv);
        for r in (col + 1)..n {
            let f = a[r][col] / a[col][col];
            if f != T::zero() {
                for c in col..=n {
                    let v = a[col][c];
                    a[r][c] = a[r][c] - f * v;
                }
            }
        }
    }
    let mut x = vec![T::zero(); n];
    for r in (0..n).rev() {
        let mut s = a[r][n];
        for c in (r + 1)..n {
            s = s - a[r][c] * x[c];
        }
        x[r] = s / a[r][r];
    }
    Some(x)
}

/// Certified descent direction of norm `1 + |x|`, or a near-critical marker.
pub fn descent_direction<T: Scalar>(
    poly: &SubdiffPolytope<T>,
    x: &Point<T>,
    margin: T,
) -> Result<DescentResult<T>> {
    if margin.is_nan() || margin <= T::zero() {
        return Err(Error::Usage("margin must be > 0".into()));
    }
    if x.dim() != poly.base_point.dim() {
        return Err(Error::DimensionMismatch {
            expected: poly.base_point.dim(),
            got: x.dim(),
        });
    }
    let (g, val) = min_norm_element(poly);
    let scale = T::one() + x.norm();
    if scale * val > margin {
        let direction = vecops::scale(&g, -scale / val);
        Ok(DescentResult::Direction {
            direction,
            slope_bound: -scale * val,
            min_norm: val,
        })
    } else {
        Ok(DescentResult::NearCritical {
            min_norm: val,
            scaled_min_norm: scale * val,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::parse_expr;

    fn pt(c: &[f64]) -> Point<f64> {
        Point::from_f64(c).unwrap()
    }

    fn poly(gens: &[&[f64]]) -> SubdiffPolytope<f64> {
        let n = gens[0].len();
        SubdiffPolytope::new(gens.iter().map(|g| g.to_vec()).collect(), Point::origin(n)).unwrap()
    }

    #[test]
    fn subdifferential_examples() {
        let a = parse_expr::<f64>("abs(x0)", 1).unwrap();
        let p = subdifferential(&a, &pt(&[0.0]), 0.0).unwrap();
        assert_eq!(p.generators(), &[vec![1.0], vec![-1.0]]);
        let dw = parse_expr::<f64>("add(pow(sub(sq(x0),1),2),sq(x1))", 2).unwrap();
        let p = subdifferential(&dw, &pt(&[0.0, 0.0]), 1e-9).unwrap();
        assert_eq!(p.generators(), &[vec![0.0, 0.0]]);
    }

    #[test]
    fn directional_derivative_examples() {
        assert_eq!(gen_dir_derivative(&poly(&[&[-1.0], &[1.0]]), &[1.0]).unwrap(), 1.0);
        assert_eq!(
            gen_dir_derivative(&poly(&[&[-2.0, 0.0], &[2.0, 0.0]]), &[1.0, 0.0]).unwrap(),
            2.0
        );
        assert_eq!(
            gen_dir_derivative(&poly(&[&[3.0, -1.0]]), &[0.5, 2.0]).unwrap(),
            -0.5
        );
        assert!(gen_dir_derivative(&poly(&[&[3.0, -1.0]]), &[0.5]).is_err());
    }

    #[test]
    fn twin_kink_one_sided_quotients_match_support_function() {
        let twin =
            parse_expr::<f64>("max(add(sq(sub(x0,1)),sq(x1)),add(sq(add(x0,1)),sq(x1)))", 2)
                .unwrap();
        let p = subdifferential(&twin, &pt(&[0.0, 0.0]), 0.0).unwrap();
        let d = gen_dir_derivative(&p, &[1.0, 0.0]).unwrap();
        let h = 1e-7;
        for s in [1.0, -1.0] {
            let q = (twin.evaluate(&pt(&[s * h, 0.0])).unwrap() - 1.0) / h;
            assert!((q - d).abs() < 1e-5);
        }
    }

    #[test]
    fn min_norm_examples() {
        let (g, v) = min_norm_element(&poly(&[&[1.0, 0.0], &[0.0, 1.0]]));
        assert!((g[0] - 0.5).abs() < 1e-12 && (g[1] - 0.5).abs() < 1e-12);
        assert!((v - 0.5f64.sqrt()).abs() < 1e-12);
        // brute force over the segment
        let brute = (0..=1000)
            .map(|i| {
                let t = i as f64 / 1000.0;
                (t * t + (1.0 - t) * (1.0 - t)).sqrt()
            })
            .fold(f64::INFINITY, f64::min);
        assert!((v - brute).abs() < 1e-9);

        let (g, v) = min_norm_element(&poly(&[&[-2.0, 0.0], &[2.0, 0.0]]));
        assert_eq!(v, 0.0);
        assert_eq!(g, vec![0.0, 0.0]);

        let (g, _) = min_norm_element(&poly(&[&[3.0, -4.0]]));
        assert_eq!(g, vec![3.0, -4.0]);
    }

    #[test]
    fn min_norm_with_duplicates_and_interior_points() {
        let p = poly(&[&[1.0, 1.0], &[1.0, 1.0], &[2.0, 2.0], &[1.0, -1.0], &[1.5, 0.0]]);
        let (g, v) = min_norm_element(&p);
        assert!((g[0] - 1.0).abs() < 1e-12 && g[1].abs() < 1e-12);
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn descent_examples() {
        // the max form at x0 = 0.5: only (x+1)^2 is active
        let twin_max =
            parse_expr::<f64>("max(add(sq(sub(x0,1)),sq(x1)),add(sq(add(x0,1)),sq(x1)))", 2)
                .unwrap();
        let x = pt(&[0.5, 0.0]);
        let p = subdifferential(&twin_max, &x, 1e-9).unwrap();
        assert_eq!(p.generators(), &[vec![3.0, 0.0]]);
        match descent_direction(&p, &x, 1.0).unwrap() {
            DescentResult::Direction { direction, .. } => {
                assert!((direction[0] + 1.5).abs() < 1e-12 && direction[1] == 0.0);
                let t = 1e-6;
                let moved = pt(&[0.5 + t * direction[0], 0.0]);
                assert!(twin_max.evaluate(&moved).unwrap() < twin_max.evaluate(&x).unwrap());
            }
            other => panic!("{other:?}"),
        }
        assert!(descent_direction(&p, &x, 4.6).unwrap().is_near_critical());

        let dw = parse_expr::<f64>("add(pow(sub(sq(x0),1),2),sq(x1))", 2).unwrap();
        let o = pt(&[0.0, 0.0]);
        let p = subdifferential(&dw, &o, 1e-9).unwrap();
        assert!(descent_direction(&p, &o, 1e-3).unwrap().is_near_critical());

        let p = poly(&[&[2.0, 0.0]]);
        match descent_direction(&p, &o, 1.0).unwrap() {
            DescentResult::Direction {
                direction,
                slope_bound,
                ..
            } => {
                assert_eq!(direction, vec![-1.0, 0.0]);
                assert_eq!(slope_bound, -2.0);
                assert_eq!(gen_dir_derivative(&p, &direction).unwrap(), -2.0);
            }
            other => panic!("{other:?}"),
        }
        assert!(descent_direction(&p, &o, 0.0).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let p = SubdiffPolytope::<f32>::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], Point::origin(2))
            .unwrap();
        let (_, v) = min_norm_element(&p);
        assert!((v - 0.5f32.sqrt()).abs() < 1e-6);
    }
}
