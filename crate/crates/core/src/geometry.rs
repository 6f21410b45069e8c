//! The conformal length metric δ, separating sets and the distance penalty.
//!
//! Lengths use the element `|dx| / (1 + |x|)`. Distances are upper estimates:
//! a geodesic is solved in the plane through the origin and both endpoints and
//! its polyline length measured; [`delta_lower_bound`] gives a rigorous lower
//! bound used for pruning.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::functionals::{FunctionalExpr, Node, Point};
use crate::paths::Path;
use crate::scalar::{vecops, Scalar};

/// Discretization knobs for δ-length and δ-distance estimates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DeltaOptions {
    /// Interior polyline nodes; 0 means the straight segment only.
    pub interior_nodes: usize,
    /// Newton iterations for the node positions.
    pub iters: usize,
    /// Simpson panels per polyline segment.
    pub quad_points: usize,
}

impl Default for DeltaOptions {
    fn default() -> Self {
        DeltaOptions {
            interior_nodes: 64,
            iters: 100,
            quad_points: 16,
        }
    }
}

impl DeltaOptions {
    /// Straight segments only; used for short distances inside the solver.
    pub fn straight(quad_points: usize) -> Self {
        DeltaOptions {
            interior_nodes: 0,
            iters: 0,
            quad_points,
        }
    }
}

/// Polyline `c(s)` with uniformly spaced parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Curve<T> {
    nodes: Vec<Point<T>>,
}

impl<T: Scalar> Curve<T> {
    pub fn new(nodes: Vec<Point<T>>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::Usage("a curve needs at least two nodes".into()));
        }
        let n = nodes[0].dim();
        if let Some(p) = nodes.iter().find(|p| p.dim() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: p.dim(),
            });
        }
        Ok(Curve { nodes })
    }

    pub fn nodes(&self) -> &[Point<T>] {
        &self.nodes
    }
}

/// Simpson weights and abscissae on [0, 1] with `2 * panels` subintervals.
fn simpson<T: Scalar>(panels: usize) -> Vec<(T, T)> {
    let k = 2 * panels.max(1);
    let h = T::one() / T::lit(k as f64);
    (0..=k)
        .map(|i| {
            let w = if i == 0 || i == k {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            (T::lit(i as f64) * h, T::lit(w) * h / T::lit(3.0))
        })
        .collect()
}

/// δ-length of the straight segment `a -> b`.
pub fn segment_length<T: Scalar>(a: &[T], b: &[T], quad_points: usize) -> T {
    segment_length_with(a, b, &simpson(quad_points))
}

fn segment_length_with<T: Scalar>(a: &[T], b: &[T], rule: &[(T, T)]) -> T {
    let d = vecops::sub(b, a);
    let len = vecops::norm(&d);
    if len == T::zero() {
        return T::zero();
    }
    let s: T = rule
        .iter()
        .map(|&(s, w)| w / (T::one() + vecops::norm(&vecops::axpy(a, s, &d))))
        .sum();
    len * s
}

/// `l(c) = ∫ |c'(s)| / (1 + |c(s)|) ds` by composite Simpson per segment.
pub fn curve_length<T: Scalar>(c: &Curve<T>, quad_points_per_segment: usize) -> Result<T> {
    if quad_points_per_segment == 0 {
        return Err(Error::Usage("quad_points_per_segment must be >= 1".into()));
    }
    let rule = simpson(quad_points_per_segment);
    Ok(c
        .nodes
        .windows(2)
        .map(|w| segment_length_with(w[0].coords(), w[1].coords(), &rule))
        .sum())
}

fn polyline_length<T: Scalar>(nodes: &[Vec<T>], rule: &[(T, T)]) -> T {
    nodes
        .windows(2)
        .map(|w| segment_length_with(&w[0], &w[1], rule))
        .sum()
}

/// Rigorous lower bound on the true δ-distance between `x` and `y`.
pub fn delta_lower_bound<T: Scalar>(x: &[T], y: &[T]) -> T {
    let nx = vecops::norm(x);
    let ny = vecops::norm(y);
    let e = vecops::dist(x, y);
    let chord = (e / (T::one() + nx.min(ny))).ln_1p();
    let radial = (nx.ln_1p() - ny.ln_1p()).abs();
    chord.max(radial)
}

/// Upper estimate of δ(x1, x2) from the planar geodesic polyline.
///
/// Starts from the straight segment and from a few bulged arcs, then runs
/// node-wise descent on the interior nodes. Never exceeds the straight
/// segment's length.
pub fn delta_distance<T: Scalar>(x1: &Point<T>, x2: &Point<T>, opts: &DeltaOptions) -> Result<T> {
    if x1.dim() != x2.dim() {
        return Err(Error::DimensionMismatch {
            expected: x1.dim(),
            got: x2.dim(),
        });
    }
    Ok(delta_slices(x1.coords(), x2.coords(), opts))
}

pub(crate) fn delta_slices<T: Scalar>(a: &[T], b: &[T], opts: &DeltaOptions) -> T {
    let rule = simpson(opts.quad_points.max(1));
    let straight = segment_length_with(a, b, &rule);
    let k = opts.interior_nodes;
    if k == 0 || straight == T::zero() || a.len() < 2 {
        return straight;
    }
    // radial and short-chord cases: the straight segment already meets the lower bound
    if straight <= delta_lower_bound(a, b) * (T::one() + T::lit(1e-12)) {
        return straight;
    }
    // The metric is rotation invariant, so a shortest curve stays in the plane
    // spanned by a and b. There it is a graph σ(θ) with σ = ln(1 + r), or it
    // runs through the origin, which the constraint σ >= 0 admits.
    let (ra, rb) = (vecops::norm(a), vecops::norm(b));
    let e1 = vecops::scale(a, T::one() / ra);
    let along = vecops::dot(b, &e1);
    let mut perp = vecops::axpy(b, -along, &e1);
    let pn = vecops::norm(&perp);
    if pn <= T::lit(1e-14) * rb {
        // antiparallel (parallel was caught by the lower bound)
        perp = vec![T::zero(); a.len()];
        let i = if e1[0].abs() < T::lit(0.9) { 0 } else { 1 };
        perp[i] = T::one();
        perp = vecops::axpy(&perp, -vecops::dot(&perp, &e1), &e1);
    }
    let e2 = vecops::scale(&perp, T::one() / vecops::norm(&perp));
    let alpha = pn.atan2(along);
    let sigma = planar_geodesic(ra.ln_1p(), rb.ln_1p(), alpha, k + 1, opts.iters);
    let nodes: Vec<Vec<T>> = sigma
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let th = alpha * T::lit(i as f64 / (k + 1) as f64);
            let r = s.exp_m1();
            vecops::axpy(&vecops::scale(&e1, r * th.cos()), r * th.sin(), &e2)
        })
        .collect();
    let mut nodes = nodes;
    nodes[0] = a.to_vec();
    nodes[k + 1] = b.to_vec();
    straight.min(polyline_length(&nodes, &rule))
}

/// Minimizes the discrete length `Σ sqrt(Δσ² + f(σ̄)² h²)`, `f(σ) = 1 − e^-σ`,
/// over `σ >= 0` on `cells` uniform θ-cells of `[0, alpha]` by damped Newton
/// with a tridiagonal Hessian. Returns all node values.
fn planar_geodesic<T: Scalar>(sa: T, sb: T, alpha: T, cells: usize, iters: usize) -> Vec<T> {
    let h = alpha / T::lit(cells as f64);
    let mut s: Vec<T> = (0..=cells)
        .map(|i| {
            let w = T::lit(i as f64 / cells as f64);
            sa + (sb - sa) * w
        })
        .collect();
    let n = cells - 1;
    if n == 0 {
        return s;
    }
    let length = |s: &[T]| -> T {
        s.windows(2)
            .map(|w| {
                let f = T::one() - (-(w[0] + w[1]) * T::lit(0.5)).exp();
                ((w[1] - w[0]).powi(2) + f * f * h * h).sqrt()
            })
            .sum()
    };
    let mut cur = length(&s);
    let mut mu = T::lit(1e-3);
    let tiny = T::lit(1e-15);
    for _ in 0..iters {
        // gradient and tridiagonal Hessian over the interior nodes 1..=n
        let mut g = vec![T::zero(); n];
        let mut diag = vec![T::zero(); n];
        let mut off = vec![T::zero(); n.saturating_sub(1)];
        for c in 0..cells {
            let (u, v) = (s[c], s[c + 1]);
            let d = v - u;
            let e = (-(u + v) * T::lit(0.5)).exp();
            let f = h * (T::one() - e);
            let f1 = h * e;
            let f2 = -h * e;
            let q = d * d + f * f;
            let l = q.sqrt().max(tiny);
            let qu = -T::lit(2.0) * d + f * f1;
            let qv = T::lit(2.0) * d + f * f1;
            let c2 = (f1 * f1 + f * f2) * T::lit(0.5);
            let quu = T::lit(2.0) + c2;
            let quv = -T::lit(2.0) + c2;
            let l3 = T::lit(4.0) * l * l * l;
            let (luu, lvv, luv) = (
                quu / (T::lit(2.0) * l) - qu * qu / l3,
                quu / (T::lit(2.0) * l) - qv * qv / l3,
                quv / (T::lit(2.0) * l) - qu * qv / l3,
            );
            if c >= 1 {
                g[c - 1] = g[c - 1] + qu / (T::lit(2.0) * l);
                diag[c - 1] = diag[c - 1] + luu;
            }
            if c < n {
                g[c] = g[c] + qv / (T::lit(2.0) * l);
                diag[c] = diag[c] + lvv;
            }
            if c >= 1 && c < n {
                off[c - 1] = off[c - 1] + luv;
            }
        }
        let gnorm = g.iter().map(|&x| x * x).sum::<T>().sqrt();
        if gnorm < T::lit(1e-13) {
            break;
        }
        let mut improved = false;
        for _ in 0..30 {
            let Some(mut step) = solve_tridiagonal(&diag, &off, &g, mu) else {
                mu = mu * T::lit(10.0);
                continue;
            };
            // fraction to the boundary: never more than halve a node's σ,
            // so the degenerate through-origin configuration is only approached
            let ratio = (0..n)
                .map(|i| step[i] / s[i + 1].max(tiny))
                .fold(T::zero(), T::max);
            if ratio > T::lit(0.5) {
                let shrink = T::lit(0.5) / ratio;
                step.iter_mut().for_each(|x| *x = *x * shrink);
            }
            let mut trial = s.clone();
            for i in 0..n {
                trial[i + 1] = (s[i + 1] - step[i]).max(T::zero());
            }
            let l = length(&trial);
            if l < cur {
                let gain = cur - l;
                s = trial;
                cur = l;
                mu = (mu * T::lit(0.25)).max(T::lit(1e-12));
                improved = true;
                if gain <= T::lit(1e-15) * cur {
                    return s;
                }
                break;
            }
            mu = mu * T::lit(10.0);
        }
        if !improved {
            break;
        }
    }
    s
}

/// Solves `(H + mu I) x = g` for symmetric tridiagonal `H`; `None` unless
/// every pivot is positive.
fn solve_tridiagonal<T: Scalar>(diag: &[T], off: &[T], g: &[T], mu: T) -> Option<Vec<T>> {
    let n = diag.len();
    let mut c = vec![T::zero(); n];
    let mut x = vec![T::zero(); n];
    let mut piv = diag[0] + mu;
    if !(piv > T::zero()) {
        return None;
    }
    x[0] = g[0] / piv;
    for i in 1..n {
        c[i - 1] = off[i - 1] / piv;
        piv = diag[i] + mu - off[i - 1] * c[i - 1];
        if !(piv > T::zero()) {
            return None;
        }
        x[i] = (g[i] - off[i - 1] * x[i - 1]) / piv;
    }
    for i in (0..n - 1).rev() {
        x[i] = x[i] - c[i] * x[i + 1];
    }
    Some(x)
}

/// Parameterized description of the separating surface, when one is known.
#[derive(Clone, Debug, PartialEq)]
pub enum SurfaceSampler<T> {
    /// `{x : <normal, x> = offset}`
    Hyperplane { normal: Vec<T>, offset: T },
    /// `{x : |x - center| = radius}`
    Sphere { center: Vec<T>, radius: T },
}

/// Closed set `F = {s = 0}` with sides `Ω₀ = {s < 0}` and `Ω₁ = {s > 0}`.
#[derive(Clone, Debug)]
pub struct SeparatingSet<T> {
    implicit: FunctionalExpr<T>,
    bounded: bool,
    sampler: Option<SurfaceSampler<T>>,
}

impl<T: Scalar> SeparatingSet<T> {
    pub fn implicit(implicit: FunctionalExpr<T>, bounded: bool) -> Self {
        SeparatingSet {
            implicit,
            bounded,
            sampler: None,
        }
    }

    pub fn hyperplane(normal: Vec<T>, offset: T) -> Result<Self> {
        let n = normal.len();
        if vecops::norm(&normal) == T::zero() {
            return Err(Error::Usage("hyperplane normal must be nonzero".into()));
        }
        let mut terms: Vec<Node<T>> = normal
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != T::zero())
            .map(|(i, &c)| Node::Product(vec![Node::Const(c), Node::Coord(i)]))
            .collect();
        terms.push(Node::Const(-offset));
        Ok(SeparatingSet {
            implicit: FunctionalExpr::new(Node::Sum(terms), n)?,
            bounded: false,
            sampler: Some(SurfaceSampler::Hyperplane { normal, offset }),
        })
    }

    pub fn sphere(center: Vec<T>, radius: T) -> Result<Self> {
        let n = center.len();
        if radius.is_nan() || radius <= T::zero() {
            return Err(Error::Usage("sphere radius must be > 0".into()));
        }
        let mut terms: Vec<Node<T>> = center
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                Node::Pow(
                    Box::new(Node::Sum(vec![Node::Coord(i), Node::Const(-c)])),
                    2,
                )
            })
            .collect();
        terms.push(Node::Const(-radius * radius));
        Ok(SeparatingSet {
            implicit: FunctionalExpr::new(Node::Sum(terms), n)?,
            bounded: true,
            sampler: Some(SurfaceSampler::Sphere { center, radius }),
        })
    }

    pub fn dim(&self) -> usize {
        self.implicit.dim()
    }

    pub fn implicit_fn(&self) -> &FunctionalExpr<T> {
        &self.implicit
    }

    pub fn is_bounded(&self) -> bool {
        self.bounded
    }

    pub fn sampler(&self) -> Option<&SurfaceSampler<T>> {
        self.sampler.as_ref()
    }

    /// Value of the implicit function; its sign tells the side.
    pub fn side(&self, x: &Point<T>) -> T {
        self.implicit.eval_unchecked(x.coords())
    }

    pub(crate) fn side_slice(&self, x: &[T]) -> T {
        self.implicit.eval_unchecked(x)
    }

    pub fn separates(&self, z0: &Point<T>, z1: &Point<T>) -> bool {
        self.side(z0) < T::zero() && T::zero() < self.side(z1)
    }

    pub fn surface_tol(x: &[T]) -> T {
        T::lit(1e-8) * (T::one() + vecops::norm(x))
    }

    pub fn on_surface(&self, x: &[T]) -> bool {
        self.side_slice(x).abs() <= Self::surface_tol(x)
    }

    /// Euclidean distance to `F`, when the surface is parameterized.
    pub fn euclidean_distance(&self, x: &[T]) -> Option<T> {
        match self.sampler.as_ref()? {
            SurfaceSampler::Hyperplane { normal, offset } => {
                Some((vecops::dot(normal, x) - *offset).abs() / vecops::norm(normal))
            }
            SurfaceSampler::Sphere { center, radius } => {
                Some((vecops::dist(x, center) - *radius).abs())
            }
        }
    }

    /// A point of `F` near `x`: exact projection when parameterized,
    /// Newton steps on the implicit function otherwise.
    pub fn project(&self, x: &[T]) -> Option<Vec<T>> {
        match &self.sampler {
            Some(SurfaceSampler::Hyperplane { normal, offset }) => {
                let t = (vecops::dot(normal, x) - *offset) / vecops::dot(normal, normal);
                Some(vecops::axpy(x, -t, normal))
            }
            Some(SurfaceSampler::Sphere { center, radius }) => {
                let mut d = vecops::sub(x, center);
                let dn = vecops::norm(&d);
                if dn == T::zero() {
                    d = vec![T::zero(); x.len()];
                    d[0] = T::one();
                    return Some(vecops::axpy(center, *radius, &d));
                }
                Some(vecops::axpy(center, *radius / dn, &d))
            }
            None => self.newton_project(x),
        }
    }

    fn newton_project(&self, x: &[T]) -> Option<Vec<T>> {
        let mut y = x.to_vec();
        for _ in 0..100 {
            let s = self.side_slice(&y);
            if s.abs() <= Self::surface_tol(&y) * T::lit(0.01) {
                return Some(y);
            }
            let g = self.implicit.active_pieces_slice(&y, T::zero()).ok()?;
            let g = &g[0];
            let gg = vecops::dot(g, g);
            if gg == T::zero() || !gg.is_finite() {
                return None;
            }
            y = vecops::axpy(&y, -s / gg, g);
        }
        self.on_surface(&y).then_some(y)
    }

    /// Finds `{s = 0}` along the ray `x + r u` by bracketing and bisection.
    fn ray_hit(&self, x: &[T], u: &[T]) -> Option<Vec<T>> {
        let s0 = self.side_slice(x);
        if s0 == T::zero() {
            return Some(x.to_vec());
        }
        let mut lo = T::zero();
        let mut hi = T::lit(0.01) * (T::one() + vecops::norm(x));
        let limit = T::lit(1e3) * (T::one() + vecops::norm(x));
        while (self.side_slice(&vecops::axpy(x, hi, u)) * s0) > T::zero() {
            lo = hi;
            hi = hi * T::lit(2.0);
            if hi > limit {
                return None;
            }
        }
        for _ in 0..80 {
            let mid = (lo + hi) * T::lit(0.5);
            if self.side_slice(&vecops::axpy(x, mid, u)) * s0 > T::zero() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let y = vecops::axpy(x, hi, u);
        // polish onto the surface when possible
        match &self.sampler {
            Some(_) => self.project(&y),
            None => Some(self.newton_project(&y).unwrap_or(y)),
        }
    }
}

/// `F_γ = F ∩ {Φ ≥ γ}`.
#[derive(Clone, Debug)]
pub struct LevelRestrictedSet<'a, T> {
    pub base: &'a SeparatingSet<T>,
    pub phi: &'a FunctionalExpr<T>,
    pub level: T,
    pub level_tol: T,
}

impl<'a, T: Scalar> LevelRestrictedSet<'a, T> {
    pub fn new(base: &'a SeparatingSet<T>, phi: &'a FunctionalExpr<T>, level: T) -> Self {
        LevelRestrictedSet {
            base,
            phi,
            level,
            level_tol: T::lit(1e-8) * (T::one() + level.abs()),
        }
    }

    /// The unrestricted set `F` (level `-∞`).
    pub fn whole(base: &'a SeparatingSet<T>, phi: &'a FunctionalExpr<T>) -> Self {
        LevelRestrictedSet {
            base,
            phi,
            level: T::neg_infinity(),
            level_tol: T::zero(),
        }
    }

    pub fn contains(&self, x: &[T]) -> bool {
        self.base.on_surface(x) && self.phi.eval_unchecked(x) >= self.level - self.level_tol
    }
}

/// Sampling controls for set distances.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistOptions {
    pub sample_budget: usize,
    pub seed: u64,
    pub delta: DeltaOptions,
    /// Local surface search iterations around the best sample.
    pub refine_iters: usize,
}

impl Default for DistOptions {
    fn default() -> Self {
        DistOptions {
            sample_budget: 32,
            seed: 0,
            delta: DeltaOptions::default(),
            refine_iters: 24,
        }
    }
}

/// Estimated distance to a set.
#[derive(Clone, Debug, PartialEq)]
pub struct DistEstimate<T> {
    pub value: T,
    /// Best admissible point found (absent when the estimate was capped).
    pub nearest: Option<Vec<T>>,
    /// True when the true distance is only known to be `>= value`.
    pub capped: bool,
}

fn random_unit<T: Scalar>(rng: &mut StdRng, n: usize) -> Vec<T> {
    loop {
        let v: Vec<T> = (0..n).map(|_| T::lit(rng.gen_range(-1.0..1.0))).collect();
        let r = vecops::norm(&v);
        if r > T::lit(1e-3) && r <= T::one() {
            return vecops::scale(&v, T::one() / r);
        }
    }
}

/// Upper estimate of `dist_δ(x, F_γ)`.
pub fn dist_delta_to_set<T: Scalar>(
    x: &Point<T>,
    fg: &LevelRestrictedSet<'_, T>,
    opts: &DistOptions,
) -> Result<DistEstimate<T>> {
    dist_delta_capped(x.coords(), fg, opts, None)
}

/// Like [`dist_delta_to_set`] but returns early with `capped = true` once the
/// distance is provably at least `cap`.
pub fn dist_delta_capped<T: Scalar>(
    x: &[T],
    fg: &LevelRestrictedSet<'_, T>,
    opts: &DistOptions,
    cap: Option<T>,
) -> Result<DistEstimate<T>> {
    if x.len() != fg.base.dim() {
        return Err(Error::DimensionMismatch {
            expected: fg.base.dim(),
            got: x.len(),
        });
    }
    if opts.sample_budget == 0 {
        return Err(Error::SetEmpty("sample budget is zero".into()));
    }
    if fg.contains(x) {
        return Ok(DistEstimate {
            value: T::zero(),
            nearest: Some(x.to_vec()),
            capped: false,
        });
    }
    let xn = vecops::norm(x);
    if let (Some(cap), Some(de)) = (cap, fg.base.euclidean_distance(x)) {
        let lb = (de / (T::one() + xn)).ln_1p();
        if lb >= cap {
            return Ok(DistEstimate {
                value: cap,
                nearest: None,
                capped: true,
            });
        }
    }

    let n = x.len();
    let mut rng = StdRng::seed_from_u64(opts.seed);
    let mut cands: Vec<Vec<T>> = Vec::with_capacity(opts.sample_budget);
    let anchor = fg.base.project(x);
    if let Some(p) = &anchor {
        cands.push(p.clone());
    }
    let base_r = anchor
        .as_ref()
        .map_or(T::one() + xn, |p| vecops::dist(x, p))
        .max(T::lit(1e-3) * (T::one() + xn));
    const SCALES: [f64; 7] = [0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 32.0];
    let mut i = 0usize;
    while cands.len() < opts.sample_budget {
        let u = random_unit::<T>(&mut rng, n);
        let y = match &anchor {
            Some(p) => {
                // alternate between radii relative to the gap and to the point's scale
                let base = if i.is_multiple_of(2) { base_r } else { T::one() + xn };
                let r = base * T::lit(SCALES[(i / 2) % SCALES.len()]) * T::lit(rng.gen_range(0.1..1.0));
                fg.base.project(&vecops::axpy(p, r, &u))
            }
            None => fg.base.ray_hit(x, &u),
        };
        i += 1;
        if let Some(y) = y {
            cands.push(y);
        } else if i > 4 * opts.sample_budget {
            break;
        }
    }
    let mut admissible: Vec<(T, Vec<T>)> = cands
        .into_iter()
        .filter(|y| fg.contains(y))
        .map(|y| (delta_lower_bound(x, &y), y))
        .collect();
    if admissible.is_empty() {
        return Err(Error::SetEmpty(format!(
            "no sampled point of F satisfies Φ >= {}",
            fg.level
        )));
    }
    admissible.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    // screening and surface search use a coarse polyline; the winner gets the full one
    let coarse = DeltaOptions {
        interior_nodes: opts.delta.interior_nodes.min(16),
        iters: opts.delta.iters.min(30),
        quad_points: opts.delta.quad_points.min(8),
    };
    let limit = cap.unwrap_or(T::infinity());
    let mut best = T::infinity();
    let mut best_y: Option<Vec<T>> = None;
    for (lb, y) in &admissible {
        if *lb >= best || *lb >= limit {
            break;
        }
        let d = delta_slices(x, y, &coarse);
        if d < best {
            best = d;
            best_y = Some(y.clone());
        }
    }
    let Some(mut y) = best_y else {
        return Ok(DistEstimate {
            value: limit,
            nearest: None,
            capped: true,
        });
    };

    // pattern search along the surface around the best sample
    let mut step = vecops::dist(x, &y).max(T::lit(1e-6)) * T::lit(0.5);
    let floor = T::lit(1e-9) * (T::one() + xn);
    for _ in 0..opts.refine_iters {
        if step < floor {
            break;
        }
        let u = random_unit::<T>(&mut rng, n);
        let mut improved = false;
        for sgn in [T::one(), -T::one()] {
            let Some(c) = fg.base.project(&vecops::axpy(&y, sgn * step, &u)) else {
                continue;
            };
            if !fg.contains(&c) || delta_lower_bound(x, &c) >= best {
                continue;
            }
            let d = delta_slices(x, &c, &coarse);
            if d < best {
                best = d;
                y = c;
                improved = true;
                break;
            }
        }
        if !improved {
            step = step * T::lit(0.6);
        }
    }
    if coarse != opts.delta {
        best = best.min(delta_slices(x, &y, &opts.delta));
    }
    if best >= limit {
        return Ok(DistEstimate {
            value: limit,
            nearest: Some(y),
            capped: true,
        });
    }
    Ok(DistEstimate {
        value: best,
        nearest: Some(y),
        capped: false,
    })
}

/// `Ψ = max(0, ε² − ε·d)` for a δ-distance `d`.
pub fn psi_from_distance<T: Scalar>(d: T, eps: T) -> T {
    (eps * eps - eps * d).max(T::zero())
}

/// Penalty `Ψ(x) = max{0, ε² − ε dist_δ(x, F_γ)}`.
pub fn psi_penalty<T: Scalar>(
    x: &Point<T>,
    fg: &LevelRestrictedSet<'_, T>,
    eps: T,
    opts: &DistOptions,
) -> Result<T> {
    if eps.is_nan() || eps <= T::zero() {
        return Err(Error::Usage("ε must be > 0".into()));
    }
    let d = dist_delta_capped(x.coords(), fg, opts, Some(eps))?;
    Ok(psi_from_distance(d.value, eps))
}

/// Crossing times of a path through the ε-neighbourhood of `F_γ`.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossingWindow<T> {
    pub t0: T,
    pub t1: T,
    /// δ-distance of `c(t0)` and `c(t1)` to `F_γ`.
    pub dist_at_t0: T,
    pub dist_at_t1: T,
    /// Largest node distance to `F_γ` strictly inside the window.
    pub max_inside_dist: T,
    pub grid_tol: T,
}

/// Largest admissible ε, `½·min{1, dist_δ(z0, F_γ), dist_δ(z1, F_γ)}`.
pub fn epsilon_bound<T: Scalar>(
    z0: &Point<T>,
    z1: &Point<T>,
    fg: &LevelRestrictedSet<'_, T>,
    opts: &DistOptions,
) -> Result<T> {
    let d0 = dist_delta_to_set(z0, fg, opts)?.value;
    let d1 = dist_delta_to_set(z1, fg, opts)?.value;
    Ok(T::lit(0.5) * T::one().min(d0).min(d1))
}

/// `t0 = sup{t : c(t) ∈ Ω₀, dist_δ ≥ ε}`, `t1 = inf{t ≥ t0 : c(t) ∈ Ω₁, dist_δ ≥ ε}`
/// on the path grid, with linear interpolation of the distance between nodes.
pub fn crossing_window<T: Scalar>(
    path: &Path<T>,
    fg: &LevelRestrictedSet<'_, T>,
    eps: T,
    opts: &DistOptions,
) -> Result<CrossingWindow<T>> {
    let nodes = path.nodes();
    let m = nodes.len() - 1;
    let z0 = &nodes[0];
    let z1 = &nodes[m];
    if !fg.base.separates(z0, z1) {
        return Err(Error::Topology(
            "path endpoints are not on opposite sides of F".into(),
        ));
    }
    let bound = epsilon_bound(z0, z1, fg, opts)?;
    if !(eps > T::zero() && eps < bound) {
        return Err(Error::Precondition(format!(
            "ε = {eps} must satisfy 0 < ε < ½·min{{1, dist_δ(z0,F_γ), dist_δ(z1,F_γ)}} = {bound}"
        )));
    }
    // distances only matter relative to ε; cap well above it
    let cap = Some(eps * T::lit(4.0));
    let side: Vec<T> = nodes.iter().map(|p| fg.base.side(p)).collect();
    let dist: Vec<T> = nodes
        .iter()
        .map(|p| dist_delta_capped(p.coords(), fg, opts, cap).map(|d| d.value))
        .collect::<Result<_>>()?;
    let far = |j: usize| dist[j] >= eps;

    let j0 = (0..=m)
        .rev()
        .find(|&j| side[j] < T::zero() && far(j))
        .ok_or_else(|| Error::Topology("path never leaves the ε-tube on the z0 side".into()))?;
    if j0 == m {
        return Err(Error::Topology("path ends inside Ω₀".into()));
    }
    if side[j0 + 1] >= T::zero() && far(j0 + 1) {
        return Err(Error::Topology(format!(
            "path crosses F between nodes {j0} and {} away from F_γ; F ∩ {{Φ ≥ γ}} does not separate z0 and z1",
            j0 + 1
        )));
    }
    let k1 = ((j0 + 1)..=m)
        .find(|&k| side[k] > T::zero() && far(k))
        .ok_or_else(|| Error::Topology("path never reaches the far side of F_γ in Ω₁".into()))?;
    let h = T::one() / T::lit(m as f64);
    let frac = |da: T, db: T| -> T {
        if da == db {
            T::zero()
        } else {
            ((da - eps) / (da - db)).max(T::zero()).min(T::one())
        }
    };
    let t0 = (T::lit(j0 as f64) + frac(dist[j0], dist[j0 + 1])) * h;
    let t1 = (T::lit(k1 as f64) - frac(dist[k1], dist[k1 - 1])) * h;
    if !(T::zero() < t0 && t0 < t1 && t1 < T::one()) {
        return Err(Error::Topology(format!(
            "degenerate window t0 = {t0}, t1 = {t1}"
        )));
    }
    let c0 = path.at(t0);
    let c1 = path.at(t1);
    let d0 = dist_delta_capped(c0.coords(), fg, opts, cap)?.value;
    let d1 = dist_delta_capped(c1.coords(), fg, opts, cap)?.value;
    let max_inside = (j0 + 1..k1).map(|j| dist[j]).fold(T::zero(), T::max);
    // linear interpolation error of the distance along one grid cell
    let cell = nodes
        .windows(2)
        .map(|w| w[0].dist(&w[1]))
        .fold(T::zero(), T::max);
    Ok(CrossingWindow {
        t0,
        t1,
        dist_at_t0: d0,
        dist_at_t1: d1,
        max_inside_dist: max_inside,
        grid_tol: cell,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::parse_expr;

    fn pt(c: &[f64]) -> Point<f64> {
        Point::from_f64(c).unwrap()
    }

    fn straight(a: &[f64], b: &[f64]) -> Curve<f64> {
        Curve::new(vec![pt(a), pt(b)]).unwrap()
    }

    #[test]
    fn curve_length_examples() {
        assert_eq!(curve_length(&straight(&[1.0, 2.0], &[1.0, 2.0]), 16).unwrap(), 0.0);
        let l = curve_length(&straight(&[0.0, 0.0], &[1.0, 0.0]), 64).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-5);
        let l = curve_length(&straight(&[0.0, 0.0], &[3.0, 0.0]), 16).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-4);
        assert!(curve_length(&straight(&[0.0], &[1.0]), 0).is_err());
    }

    #[test]
    fn delta_examples() {
        let o = DeltaOptions::default();
        let x = pt(&[0.3, 0.4]);
        assert_eq!(delta_distance(&x, &x, &o).unwrap(), 0.0);
        for a in [1.0, 3.0, 10.0] {
            let d = delta_distance(&pt(&[0.0, 0.0]), &pt(&[a, 0.0]), &o).unwrap();
            assert!(((d - (1.0 + a).ln()) / (1.0 + a).ln()).abs() < 0.01, "a={a} d={d}");
        }
    }

    #[test]
    fn opposite_points_take_the_outer_arc() {
        // straight through the origin costs 2 ln 6; a half circle of radius 5 costs 5π/6
        let d = delta_distance(&pt(&[5.0, 0.0]), &pt(&[-5.0, 0.0]), &DeltaOptions::default())
            .unwrap();
        assert!(d < 5.0 * std::f64::consts::PI / 6.0 + 1e-2, "{d}");
        assert!(d < 2.0 * 6f64.ln());
    }

    #[test]
    fn lower_bound_is_below_estimate() {
        let o = DeltaOptions::default();
        let pairs = [
            ([0.0, 0.0], [1.0, 0.0]),
            ([2.0, -1.0], [-3.0, 0.5]),
            ([0.1, 0.1], [0.2, 0.3]),
        ];
        for (a, b) in pairs {
            let d = delta_distance(&pt(&a), &pt(&b), &o).unwrap();
            assert!(delta_lower_bound(&a, &b) <= d + 1e-9);
        }
    }

    #[test]
    fn psi_formula_cases() {
        let e = 0.2f64;
        assert!((psi_from_distance(0.0, e) - e * e).abs() < 1e-15);
        assert_eq!(psi_from_distance(e, e), 0.0);
        assert_eq!(psi_from_distance(3.0 * e, e), 0.0);
        assert!((psi_from_distance(e / 2.0, e) - e * e / 2.0).abs() < 1e-15);
    }

    fn plane_setup() -> (SeparatingSet<f64>, FunctionalExpr<f64>) {
        (
            SeparatingSet::hyperplane(vec![1.0, 0.0], 0.0).unwrap(),
            FunctionalExpr::constant(1.0, 2).unwrap(),
        )
    }

    #[test]
    fn distance_to_plane() {
        let (sep, phi) = plane_setup();
        let fg = LevelRestrictedSet::new(&sep, &phi, 1.0);
        let o = DistOptions::default();
        let d = dist_delta_to_set(&pt(&[0.0, 0.7]), &fg, &o).unwrap();
        assert_eq!(d.value, 0.0);
        // The origin-ward projection is not the δ-nearest point: bending toward
        // (0, y) with y > 0 is shorter than ln(1+a). Compare against a dense scan.
        let fine = DeltaOptions {
            interior_nodes: 12,
            iters: 400,
            quad_points: 16,
        };
        for a in [0.5, 1.0, 2.0] {
            let x = pt(&[a, 0.0]);
            let d = dist_delta_to_set(&x, &fg, &o).unwrap();
            let scan = (0..=120)
                .map(|k| delta_distance(&x, &pt(&[0.0, a * k as f64 / 100.0]), &fine).unwrap())
                .fold(f64::INFINITY, f64::min);
            assert!(d.value <= (1.0f64 + a).ln() + 1e-9, "{a}: {}", d.value);
            assert!(((d.value - scan) / scan).abs() < 0.02, "{a}: {} vs {scan}", d.value);
        }
        let zero = DistOptions {
            sample_budget: 0,
            ..o
        };
        assert!(matches!(
            dist_delta_to_set(&pt(&[1.0, 0.0]), &fg, &zero),
            Err(Error::SetEmpty(_))
        ));
    }

    #[test]
    fn level_restriction_can_empty_the_set() {
        let (sep, phi) = plane_setup();
        let fg = LevelRestrictedSet::new(&sep, &phi, 2.0);
        assert!(matches!(
            dist_delta_to_set(&pt(&[1.0, 0.0]), &fg, &DistOptions::default()),
            Err(Error::SetEmpty(_))
        ));
    }

    #[test]
    fn implicit_surface_without_sampler() {
        let s = parse_expr::<f64>("add(sq(x0),sq(x1),-1)", 2).unwrap();
        let sep = SeparatingSet::implicit(s, true);
        let phi = FunctionalExpr::constant(0.0, 2).unwrap();
        let fg = LevelRestrictedSet::whole(&sep, &phi);
        let d = dist_delta_to_set(&pt(&[3.0, 0.0]), &fg, &DistOptions::default()).unwrap();
        let want = 4f64.ln() - 2f64.ln();
        assert!((d.value - want).abs() < 1e-3, "{}", d.value);
    }

    #[test]
    fn crossing_window_straight_path() {
        let (sep, phi) = plane_setup();
        let fg = LevelRestrictedSet::new(&sep, &phi, 1.0);
        let path = Path::straight(pt(&[-1.0, 0.0]), pt(&[1.0, 0.0]), 200).unwrap();
        let o = DistOptions::default();
        let w = crossing_window(&path, &fg, 0.2, &o).unwrap();
        let xs = 0.2f64.exp() - 1.0;
        assert!((w.t0 - (1.0 - xs) / 2.0).abs() < 2e-3, "{}", w.t0);
        assert!((w.t1 - (1.0 + xs) / 2.0).abs() < 2e-3, "{}", w.t1);
        assert!(w.dist_at_t0 >= 0.2 - w.grid_tol);
        match crossing_window(&path, &fg, 0.6, &o) {
            Err(Error::Precondition(_)) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn crossing_window_rejects_path_staying_in_omega0() {
        let (sep, phi) = plane_setup();
        let fg = LevelRestrictedSet::new(&sep, &phi, 1.0);
        let path = Path::straight(pt(&[-1.0, 0.0]), pt(&[-0.5, 0.0]), 10).unwrap();
        assert!(matches!(
            crossing_window(&path, &fg, 0.1, &DistOptions::default()),
            Err(Error::Topology(_))
        ));
    }
}
