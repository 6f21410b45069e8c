//! Discretized path spaces: full paths joining the endpoints and windowed
//! sub-paths, with the sup-metric ρ, max sets and deformations.

use std::io::Write;

use crate::error::{Error, Result};
use crate::functionals::{FunctionalExpr, Point};
use crate::geometry::{
    delta_slices, dist_delta_capped, psi_from_distance, segment_length, DeltaOptions, DistOptions,
    LevelRestrictedSet,
};
use crate::scalar::{vecops, Scalar};

fn check_nodes<T: Scalar>(nodes: &[Point<T>]) -> Result<()> {
    if nodes.len() < 3 {
        return Err(Error::Usage(format!(
            "a path needs at least 3 nodes (m >= 2), got {}",
            nodes.len()
        )));
    }
    let n = nodes[0].dim();
    if let Some(p) = nodes.iter().find(|p| p.dim() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: p.dim(),
        });
    }
    Ok(())
}

fn interpolate<T: Scalar>(nodes: &[Point<T>], s: T) -> Point<T> {
    let m = nodes.len() - 1;
    let s = s.max(T::zero()).min(T::one());
    let pos = s * T::lit(m as f64);
    let j = pos.floor().to_usize().unwrap_or(0).min(m - 1);
    let frac = pos - T::lit(j as f64);
    if frac == T::zero() {
        return nodes[j].clone();
    }
    Point::from_vec(vecops::lerp(
        nodes[j].coords(),
        nodes[j + 1].coords(),
        frac,
    ))
}

/// Element of Γ: a polyline on the uniform grid `t_j = j/m` with locked endpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct Path<T> {
    nodes: Vec<Point<T>>,
}

impl<T: Scalar> Path<T> {
    pub fn from_nodes(nodes: Vec<Point<T>>) -> Result<Self> {
        check_nodes(&nodes)?;
        Ok(Path { nodes })
    }

    pub fn straight(z0: Point<T>, z1: Point<T>, m: usize) -> Result<Self> {
        Self::arc(z0, z1, None, m)
    }

    /// Straight path plus `sin(π t) * bulge`.
    pub fn arc(z0: Point<T>, z1: Point<T>, bulge: Option<&[T]>, m: usize) -> Result<Self> {
        if z0.dim() != z1.dim() {
            return Err(Error::DimensionMismatch {
                expected: z0.dim(),
                got: z1.dim(),
            });
        }
        if m < 2 {
            return Err(Error::Usage("m must be >= 2".into()));
        }
        let mut nodes: Vec<Point<T>> = (0..=m)
            .map(|j| {
                let t = T::lit(j as f64) / T::lit(m as f64);
                let mut c = vecops::lerp(z0.coords(), z1.coords(), t);
                if let Some(b) = bulge {
                    let w = (T::lit(std::f64::consts::PI) * t).sin();
                    c = vecops::axpy(&c, w, b);
                }
                Point::from_vec(c)
            })
            .collect();
        nodes[0] = z0;
        nodes[m] = z1;
        Path::from_nodes(nodes)
    }

    pub fn nodes(&self) -> &[Point<T>] {
        &self.nodes
    }

    pub fn m(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn param(&self, j: usize) -> T {
        T::lit(j as f64) / T::lit(self.m() as f64)
    }

    /// Linear interpolation at `t ∈ [0, 1]`.
    pub fn at(&self, t: T) -> Point<T> {
        interpolate(&self.nodes, t)
    }

    /// Moves interior node `j`. Endpoints are locked.
    pub fn set_interior(&mut self, j: usize, p: Point<T>) -> Result<()> {
        if j == 0 || j >= self.m() {
            return Err(Error::Usage(format!("node {j} is not an interior node")));
        }
        if p.dim() != self.nodes[0].dim() {
            return Err(Error::DimensionMismatch {
                expected: self.nodes[0].dim(),
                got: p.dim(),
            });
        }
        self.nodes[j] = p;
        Ok(())
    }

    /// Restriction to `[t0, t1]` resampled on `m_sub` cells.
    pub fn restrict(&self, t0: T, t1: T, m_sub: usize) -> Result<SubPath<T>> {
        self.restrict_aligned(t0, t1, m_sub, None)
    }

    /// Like [`Path::restrict`], but the interior node nearest to `anchor` is
    /// moved onto it, so a known maximizer of the parent is a grid node.
    pub fn restrict_aligned(
        &self,
        t0: T,
        t1: T,
        m_sub: usize,
        anchor: Option<T>,
    ) -> Result<SubPath<T>> {
        if !(T::zero() <= t0 && t0 < t1 && t1 <= T::one()) {
            return Err(Error::Usage(format!("invalid window [{t0}, {t1}]")));
        }
        if m_sub < 2 {
            return Err(Error::Usage("m must be >= 2".into()));
        }
        let anchor = anchor.filter(|&a| t0 < a && a < t1);
        let params = aligned_grid(t0, t1, m_sub, anchor);
        let nodes = params.iter().map(|&t| self.at(t)).collect();
        Ok(SubPath {
            params,
            anchor,
            nodes,
        })
    }
}

fn aligned_grid<T: Scalar>(t0: T, t1: T, m: usize, anchor: Option<T>) -> Vec<T> {
    let mut params: Vec<T> = (0..=m)
        .map(|k| t0 + (t1 - t0) * T::lit(k as f64) / T::lit(m as f64))
        .collect();
    params[m] = t1;
    if let Some(a) = anchor {
        let j = ((a - t0) / (t1 - t0) * T::lit(m as f64))
            .round()
            .to_usize()
            .unwrap_or(1)
            .clamp(1, m - 1);
        params[j] = a;
    }
    params
}

/// Element of Γ(t₀, t₁): endpoints locked to the parent path at `t0`, `t1`.
#[derive(Clone, Debug, PartialEq)]
pub struct SubPath<T> {
    params: Vec<T>,
    anchor: Option<T>,
    nodes: Vec<Point<T>>,
}

impl<T: Scalar> SubPath<T> {
    /// Sub-path on the uniform grid of `[t0, t1]`.
    pub fn new(t0: T, t1: T, nodes: Vec<Point<T>>) -> Result<Self> {
        check_nodes(&nodes)?;
        if !(t0 < t1) {
            return Err(Error::Usage("window needs t0 < t1".into()));
        }
        let params = aligned_grid(t0, t1, nodes.len() - 1, None);
        Ok(SubPath {
            params,
            anchor: None,
            nodes,
        })
    }

    pub fn window(&self) -> (T, T) {
        (self.params[0], self.params[self.m()])
    }

    pub fn nodes(&self) -> &[Point<T>] {
        &self.nodes
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    /// Parameter kept on the grid across refinements, if any.
    pub fn anchor(&self) -> Option<T> {
        self.anchor
    }

    pub fn m(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn param(&self, j: usize) -> T {
        self.params[j]
    }

    /// Interpolated point at a window parameter `t ∈ [t0, t1]`.
    pub fn at(&self, t: T) -> Point<T> {
        let m = self.m();
        let t = t.max(self.params[0]).min(self.params[m]);
        let j = self.params[1..m].partition_point(|&p| p <= t).min(m - 1);
        let (a, b) = (self.params[j], self.params[j + 1]);
        let s = (t - a) / (b - a);
        if s == T::zero() {
            return self.nodes[j].clone();
        }
        if s == T::one() {
            return self.nodes[j + 1].clone();
        }
        Point::from_vec(vecops::lerp(
            self.nodes[j].coords(),
            self.nodes[j + 1].coords(),
            s,
        ))
    }

    /// Same window, endpoints and anchor, resampled on `m_sub` cells.
    pub fn refine(&self, m_sub: usize) -> Result<SubPath<T>> {
        if m_sub < 2 {
            return Err(Error::Usage("m must be >= 2".into()));
        }
        let (t0, t1) = self.window();
        let params = aligned_grid(t0, t1, m_sub, self.anchor);
        let mut nodes: Vec<Point<T>> = params.iter().map(|&t| self.at(t)).collect();
        nodes[0] = self.nodes[0].clone();
        nodes[m_sub] = self.nodes[self.m()].clone();
        Ok(SubPath {
            params,
            anchor: self.anchor,
            nodes,
        })
    }

    pub(crate) fn with_node(&self, j: usize, p: Vec<T>) -> SubPath<T> {
        let mut out = self.clone();
        out.nodes[j] = Point::from_vec(p);
        out
    }

    /// Largest Euclidean cell length.
    pub fn max_cell(&self) -> T {
        self.nodes
            .windows(2)
            .map(|w| w[0].dist(&w[1]))
            .fold(T::zero(), T::max)
    }
}

/// `Φ + Ψ_ε` with `Ψ_ε(x) = max{0, ε² − ε dist_δ(x, F_γ)}`.
#[derive(Clone, Debug)]
pub struct PenalizedFunctional<'a, T> {
    pub phi: &'a FunctionalExpr<T>,
    pub fg: LevelRestrictedSet<'a, T>,
    pub eps: T,
    pub dist: DistOptions,
}

impl<'a, T: Scalar> PenalizedFunctional<'a, T> {
    /// `(Φ(x), Ψ(x))`.
    pub fn parts(&self, x: &[T]) -> Result<(T, T)> {
        let phi = self.phi.evaluate_slice(x)?;
        let d = dist_delta_capped(x, &self.fg, &self.dist, Some(self.eps))?;
        Ok((phi, psi_from_distance(d.value, self.eps)))
    }

    pub fn value(&self, x: &[T]) -> Result<T> {
        let (a, b) = self.parts(x)?;
        Ok(a + b)
    }
}

/// Near-max set of `Φ + Ψ` along a sub-path.
#[derive(Clone, Debug, PartialEq)]
pub struct MaxSet<T> {
    pub level: T,
    /// Grid indices, ascending.
    pub members: Vec<usize>,
    pub params: Vec<T>,
}

impl<T: Scalar> MaxSet<T> {
    /// Index of the exact maximum (lowest index on ties).
    pub fn argmax(&self, values: &[T]) -> usize {
        argmax(values)
    }

    pub fn touches_endpoints(&self, m: usize) -> bool {
        self.members.first() == Some(&0) || self.members.last() == Some(&m)
    }
}

/// Node values of `Φ`, `Ψ` and the resulting max along a sub-path.
#[derive(Clone, Debug, PartialEq)]
pub struct PathMax<T> {
    pub value: T,
    pub max_set: MaxSet<T>,
    pub phi: Vec<T>,
    pub psi: Vec<T>,
}

impl<T: Scalar> PathMax<T> {
    pub fn totals(&self) -> Vec<T> {
        self.phi.iter().zip(&self.psi).map(|(&a, &b)| a + b).collect()
    }
}

pub(crate) fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (j, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = j;
        }
    }
    best
}

/// `φ(f) = max_j (Φ + Ψ)(f(t_j))` and the near-max set within `near_tol`.
pub fn path_max<T: Scalar>(
    f: &SubPath<T>,
    pf: &PenalizedFunctional<'_, T>,
    near_tol: T,
) -> Result<PathMax<T>> {
    if near_tol.is_nan() || near_tol < T::zero() {
        return Err(Error::Usage("near_tol must be >= 0".into()));
    }
    let mut phi = Vec::with_capacity(f.nodes.len());
    let mut psi = Vec::with_capacity(f.nodes.len());
    for p in &f.nodes {
        let (a, b) = pf.parts(p.coords())?;
        phi.push(a);
        psi.push(b);
    }
    Ok(path_max_from_parts(f, phi, psi, near_tol))
}

pub(crate) fn path_max_from_parts<T: Scalar>(
    f: &SubPath<T>,
    phi: Vec<T>,
    psi: Vec<T>,
    near_tol: T,
) -> PathMax<T> {
    let totals: Vec<T> = phi.iter().zip(&psi).map(|(&a, &b)| a + b).collect();
    let value = totals[argmax(&totals)];
    let members: Vec<usize> = (0..totals.len())
        .filter(|&j| totals[j] >= value - near_tol)
        .collect();
    let params = members.iter().map(|&j| f.param(j)).collect();
    PathMax {
        value,
        max_set: MaxSet {
            level: value,
            members,
            params,
        },
        phi,
        psi,
    }
}

/// `ρ(f1, f2) = max_j δ(f1(t_j), f2(t_j))`.
pub fn rho<T: Scalar>(f1: &SubPath<T>, f2: &SubPath<T>, opts: &DeltaOptions) -> Result<T> {
    if f1.params != f2.params {
        return Err(Error::Usage(
            "ρ needs sub-paths on the same window and grid".into(),
        ));
    }
    Ok(f1
        .nodes
        .iter()
        .zip(&f2.nodes)
        .map(|(a, b)| delta_slices(a.coords(), b.coords(), opts))
        .fold(T::zero(), T::max))
}

/// Node-wise `f + h v`. The field must vanish at both window endpoints.
pub fn deform<T: Scalar>(f: &SubPath<T>, v_field: &[Vec<T>], h: T) -> Result<SubPath<T>> {
    if v_field.len() != f.nodes.len() {
        return Err(Error::Usage(format!(
            "field has {} vectors for {} nodes",
            v_field.len(),
            f.nodes.len()
        )));
    }
    let m = f.m();
    for j in [0, m] {
        if v_field[j].iter().any(|c| *c != T::zero()) {
            return Err(Error::Usage(format!(
                "deformation field must vanish at window endpoint {j}"
            )));
        }
    }
    let mut out = f.clone();
    for (node, v) in out.nodes.iter_mut().zip(v_field).take(m).skip(1) {
        if v.len() != node.dim() {
            return Err(Error::DimensionMismatch {
                expected: node.dim(),
                got: v.len(),
            });
        }
        *node = Point::from_vec(vecops::axpy(node.coords(), h, v));
    }
    Ok(out)
}

/// Resamples nodes to uniform δ-arclength spacing along the same polyline.
pub fn reparametrize<T: Scalar>(p: &Path<T>, target_m: usize, quad_points: usize) -> Result<Path<T>> {
    if target_m < 2 {
        return Err(Error::Usage("target_m must be >= 2".into()));
    }
    let seg: Vec<T> = p
        .nodes
        .windows(2)
        .map(|w| segment_length(w[0].coords(), w[1].coords(), quad_points))
        .collect();
    let mut cum = vec![T::zero()];
    for &l in &seg {
        let last = *cum.last().unwrap();
        cum.push(last + l);
    }
    let total = *cum.last().unwrap();
    if total == T::zero() {
        return Err(Error::Usage("cannot reparametrize a constant path".into()));
    }
    let mut nodes = Vec::with_capacity(target_m + 1);
    nodes.push(p.nodes[0].clone());
    let mut j = 0;
    for k in 1..target_m {
        let target = total * T::lit(k as f64) / T::lit(target_m as f64);
        while j + 1 < seg.len() && cum[j + 1] < target {
            j += 1;
        }
        let a = p.nodes[j].coords();
        let b = p.nodes[j + 1].coords();
        let want = target - cum[j];
        // bisection on the partial length of segment j
        let (mut lo, mut hi) = (T::zero(), T::one());
        for _ in 0..60 {
            let mid = (lo + hi) * T::lit(0.5);
            let part = segment_length(a, &vecops::lerp(a, b, mid), quad_points);
            if part < want {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let s = (lo + hi) * T::lit(0.5);
        nodes.push(Point::from_vec(vecops::lerp(a, b, s)));
    }
    nodes.push(p.nodes[p.m()].clone());
    Path::from_nodes(nodes)
}

/// Largest value of `Φ` along the polyline (not only at nodes).
///
/// Each cell is sampled and the best sample is refined by golden-section
/// search. Returns `(value, t, point)`.
pub fn polyline_max<T: Scalar>(p: &Path<T>, phi: &FunctionalExpr<T>) -> Result<(T, T, Point<T>)> {
    const SAMPLES: usize = 8;
    let m = p.m();
    let mut best = (T::neg_infinity(), T::zero(), p.nodes[0].clone());
    for j in 0..m {
        let a = p.nodes[j].coords();
        let b = p.nodes[j + 1].coords();
        let f = |s: T| phi.evaluate_slice(&vecops::lerp(a, b, s));
        let mut vals = Vec::with_capacity(SAMPLES + 1);
        for i in 0..=SAMPLES {
            vals.push(f(T::lit(i as f64 / SAMPLES as f64))?);
        }
        let i = argmax(&vals);
        let mut lo = T::lit(i.saturating_sub(1) as f64 / SAMPLES as f64);
        let mut hi = T::lit((i + 1).min(SAMPLES) as f64 / SAMPLES as f64);
        let g = T::lit(0.618_033_988_749_894_9);
        let mut c = hi - g * (hi - lo);
        let mut d = lo + g * (hi - lo);
        let (mut fc, mut fd) = (f(c)?, f(d)?);
        for _ in 0..60 {
            if fc >= fd {
                hi = d;
                d = c;
                fd = fc;
                c = hi - g * (hi - lo);
                fc = f(c)?;
            } else {
                lo = c;
                c = d;
                fc = fd;
                d = lo + g * (hi - lo);
                fd = f(d)?;
            }
        }
        let (mut s, mut v) = (T::lit(i as f64 / SAMPLES as f64), vals[i]);
        let mid = (lo + hi) * T::lit(0.5);
        let fm = f(mid)?;
        if fm > v {
            s = mid;
            v = fm;
        }
        if v > best.0 {
            let t = (T::lit(j as f64) + s) / T::lit(m as f64);
            best = (v, t, Point::from_vec(vecops::lerp(a, b, s)));
        }
    }
    Ok(best)
}

/// One CSV row per node: `t, x0..x{n-1}, phi, psi, phi_plus_psi`.
pub fn write_path_csv<T: Scalar, W: Write>(
    out: W,
    params: &[T],
    nodes: &[Point<T>],
    phi: &[T],
    psi: &[T],
) -> Result<()> {
    let io = |e: csv::Error| Error::Usage(format!("csv write failed: {e}"));
    let mut w = csv::Writer::from_writer(out);
    let n = nodes.first().map_or(0, Point::dim);
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("x{i}")));
    header.extend(["phi", "psi", "phi_plus_psi"].map(String::from));
    w.write_record(&header).map_err(io)?;
    for j in 0..nodes.len() {
        let mut row = vec![params[j].to_string()];
        row.extend(nodes[j].coords().iter().map(|c| c.to_string()));
        row.push(phi[j].to_string());
        row.push(psi[j].to_string());
        row.push((phi[j] + psi[j]).to_string());
        w.write_record(&row).map_err(io)?;
    }
    w.flush()
        .map_err(|e| Error::Usage(format!("csv write failed: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::parse_expr;
    use crate::geometry::SeparatingSet;

    fn pt(c: &[f64]) -> Point<f64> {
        Point::from_f64(c).unwrap()
    }

    fn unit_path(m: usize) -> Path<f64> {
        Path::straight(pt(&[-1.0, 0.0]), pt(&[1.0, 0.0]), m).unwrap()
    }

    #[test]
    fn endpoints_are_locked() {
        let mut p = unit_path(4);
        assert!(p.set_interior(0, pt(&[0.0, 1.0])).is_err());
        assert!(p.set_interior(4, pt(&[0.0, 1.0])).is_err());
        p.set_interior(2, pt(&[0.0, 1.0])).unwrap();
        assert_eq!(p.at(0.5), pt(&[0.0, 1.0]));
        assert!(Path::straight(pt(&[0.0]), pt(&[1.0]), 1).is_err());
    }

    #[test]
    fn restriction_matches_parent() {
        let p = unit_path(8);
        let s = p.restrict(0.25, 0.75, 4).unwrap();
        assert_eq!(s.nodes()[0], p.at(0.25));
        assert_eq!(s.nodes()[4], p.at(0.75));
        assert!((s.param(2) - 0.5).abs() < 1e-15);
    }

    fn flat_functional<'a>(
        sep: &'a SeparatingSet<f64>,
        phi: &'a FunctionalExpr<f64>,
        eps: f64,
    ) -> PenalizedFunctional<'a, f64> {
        PenalizedFunctional {
            phi,
            fg: LevelRestrictedSet::new(sep, phi, 1.0),
            eps,
            dist: DistOptions::default(),
        }
    }

    #[test]
    fn path_max_of_zero_functional_is_whole_grid() {
        let sep = SeparatingSet::hyperplane(vec![1.0, 0.0], 0.0).unwrap();
        let phi = FunctionalExpr::constant(0.0, 2).unwrap();
        // F_γ empty at level 1 would error; use the unrestricted set far away instead
        let far = SeparatingSet::hyperplane(vec![1.0, 0.0], 100.0).unwrap();
        let pf = PenalizedFunctional {
            phi: &phi,
            fg: LevelRestrictedSet::whole(&far, &phi),
            eps: 0.1,
            dist: DistOptions::default(),
        };
        let s = unit_path(4).restrict(0.0, 1.0, 4).unwrap();
        let pm = path_max(&s, &pf, 0.0).unwrap();
        assert_eq!(pm.value, 0.0);
        assert_eq!(pm.max_set.members, vec![0, 1, 2, 3, 4]);
        let _ = sep;
    }

    #[test]
    fn twin_ridge_path_max() {
        let phi = parse_expr::<f64>(
            "min(add(sq(sub(x0,1)),sq(x1)),add(sq(add(x0,1)),sq(x1)))",
            2,
        )
        .unwrap();
        let sep = SeparatingSet::hyperplane(vec![1.0, 0.0], 0.0).unwrap();
        let eps = 0.1;
        let pf = flat_functional(&sep, &phi, eps);
        let s = unit_path(4).restrict(0.0, 1.0, 4).unwrap();
        let pm = path_max(&s, &pf, 0.0).unwrap();
        // nodes at x = -1, -0.5, 0, 0.5, 1: Φ = 0, 0.25, 1, 0.25, 0; Ψ = ε² only at the ridge
        assert!((pm.value - (1.0 + eps * eps)).abs() < 1e-12);
        assert_eq!(pm.max_set.members, vec![2]);
        assert!((pm.max_set.params[0] - 0.5).abs() < 1e-15);
        let all = path_max(&s, &pf, f64::INFINITY).unwrap();
        assert_eq!(all.max_set.members.len(), 5);
        assert!(path_max(&s, &pf, -1.0).is_err());
    }

    #[test]
    fn rho_cases() {
        let o = DeltaOptions::default();
        let s = unit_path(4).restrict(0.0, 1.0, 4).unwrap();
        assert_eq!(rho(&s, &s, &o).unwrap(), 0.0);
        // the ridge node sits at the origin; push it to a·e2
        for a in [0.5, 2.0] {
            let moved = s.with_node(2, vec![0.0, a]);
            let r = rho(&s, &moved, &o).unwrap();
            assert!(((r - (1.0f64 + a).ln()) / (1.0f64 + a).ln()).abs() < 0.01);
        }
        let other = unit_path(4).restrict(0.0, 0.9, 4).unwrap();
        assert!(rho(&s, &other, &o).is_err());
    }

    #[test]
    fn deform_cases() {
        let s = unit_path(4).restrict(0.0, 1.0, 4).unwrap();
        let zero = vec![vec![0.0, 0.0]; 5];
        assert_eq!(deform(&s, &zero, 0.3).unwrap(), s);
        let mut bump = zero.clone();
        bump[2] = vec![0.0, 1.0];
        assert_eq!(deform(&s, &bump, 0.0).unwrap(), s);
        let d = deform(&s, &bump, 0.1).unwrap();
        for j in 0..5 {
            let moved = d.nodes()[j].dist(&s.nodes()[j]);
            assert!((moved - if j == 2 { 0.1 } else { 0.0 }).abs() < 1e-15);
        }
        let mut bad = zero.clone();
        bad[0] = vec![1.0, 0.0];
        assert!(deform(&s, &bad, 0.1).is_err());
        assert!(rho(&d, &s, &DeltaOptions::default()).unwrap() <= 0.1 + 1e-15);
    }

    #[test]
    fn reparametrize_circle_is_fixed_point() {
        let m = 6;
        let nodes: Vec<_> = (0..=m)
            .map(|j| {
                let a = std::f64::consts::PI * j as f64 / m as f64;
                pt(&[2.0 * a.cos(), 2.0 * a.sin()])
            })
            .collect();
        let p = Path::from_nodes(nodes).unwrap();
        let r = reparametrize(&p, m, 16).unwrap();
        for (a, b) in p.nodes().iter().zip(r.nodes()) {
            assert!(a.dist(b) < 1e-12);
        }
    }

    #[test]
    fn reparametrize_midpoint_splits_length() {
        let p = Path::from_nodes(vec![pt(&[0.0, 0.0]), pt(&[1.0, 0.0]), pt(&[1.0, 3.0])]).unwrap();
        let r = reparametrize(&p, 2, 16).unwrap();
        let c = |a: &Point<f64>, b: &Point<f64>| segment_length(a.coords(), b.coords(), 16);
        let total = c(&p.nodes()[0], &p.nodes()[1]) + c(&p.nodes()[1], &p.nodes()[2]);
        let mid = &r.nodes()[1];
        // midpoint lies on the second leg and halves the δ-length
        let first = c(&p.nodes()[0], &p.nodes()[1]) + c(&p.nodes()[1], mid);
        assert!((mid.coords()[0] - 1.0).abs() < 1e-12);
        assert!((first - total / 2.0).abs() < 1e-9);
    }

    #[test]
    fn reparametrize_dog_leg_distributes_nodes_by_length() {
        let p = Path::from_nodes(vec![pt(&[0.0, 0.0]), pt(&[0.5, 0.0]), pt(&[0.5, 4.0])]).unwrap();
        let l1 = segment_length(&[0.0, 0.0], &[0.5, 0.0], 16);
        let l2 = segment_length(&[0.5, 0.0], &[0.5, 4.0], 16);
        let m = 20;
        let r = reparametrize(&p, m, 16).unwrap();
        let on_first = r.nodes()[1..m]
            .iter()
            .filter(|q| q.coords()[1] == 0.0 && q.coords()[0] < 0.5)
            .count() as f64;
        let expected = (m as f64) * l1 / (l1 + l2);
        assert!((on_first - expected).abs() <= 1.0, "{on_first} vs {expected}");
    }

    #[test]
    fn polyline_max_finds_interior_kink() {
        let phi = parse_expr::<f64>(
            "min(add(sq(sub(x0,1)),sq(x1)),add(sq(add(x0,1)),sq(x1)))",
            2,
        )
        .unwrap();
        // odd grid: no node on the ridge
        let p = Path::straight(pt(&[-1.0, 0.0]), pt(&[1.0, 0.0]), 5).unwrap();
        let (v, t, x) = polyline_max(&p, &phi).unwrap();
        assert!((v - 1.0).abs() < 1e-9);
        assert!((t - 0.5).abs() < 1e-9);
        assert!(x.norm() < 1e-9);
    }

    #[test]
    fn csv_dump_has_one_row_per_node() {
        let s = unit_path(4).restrict(0.0, 1.0, 4).unwrap();
        let params: Vec<f64> = (0..5).map(|j| s.param(j)).collect();
        let mut buf = Vec::new();
        write_path_csv(&mut buf, &params, s.nodes(), &[0.0; 5], &[0.0; 5]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert!(text.starts_with("t,x0,x1,phi,psi,phi_plus_psi"));
    }
}
