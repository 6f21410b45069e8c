use crate::clarke::{descent_direction, gen_dir_derivative, subdifferential, DescentResult, SubdiffPolytope};
use crate::error::{Error, Result};
use crate::functionals::FunctionalExpr;
use crate::paths::{deform, MaxSet, PathMax, PenalizedFunctional, SubPath};
use crate::scalar::{vecops, Scalar};

use super::ekeland::Evaluated;
use super::SolverParams;

/// Blended descent field on the sub-path grid.
#[derive(Clone, Debug, PartialEq)]
pub struct DeformationField<T> {
    /// `v_j`, one per grid node; zero at both window endpoints.
    pub vectors: Vec<Vec<T>>,
    /// Cover centers (grid indices).
    pub centers: Vec<usize>,
    /// Unit directions `û_k` at the centers.
    pub directions: Vec<Vec<T>>,
    /// `ξ_k(t_j)`, one row per center.
    pub weights: Vec<Vec<T>>,
    /// `(j, Φ⁰(f(t_j), v_j))` for every near-max node.
    pub slopes: Vec<(usize, T)>,
}

impl<T: Scalar> DeformationField<T> {
    /// `|v_j| <= 1 + |f(t_j)|` at every node and `v = 0` at both ends.
    pub fn bounds_hold(&self, f: &SubPath<T>) -> bool {
        let m = f.m();
        let ends = [0, m]
            .iter()
            .all(|&j| self.vectors[j].iter().all(|c| *c == T::zero()));
        let slack = T::lit(1e-12);
        let norms = self.vectors.iter().zip(f.nodes()).all(|(v, x)| {
            let cap = T::one() + x.norm();
            vecops::norm(v) <= cap * (T::one() + slack)
        });
        ends && norms
    }

    /// Every recorded slope is below `-(3/2)ε + pou_tol`.
    pub fn slopes_hold(&self, eps: T, pou_tol: T) -> bool {
        let bound = -T::lit(1.5) * eps + pou_tol;
        self.slopes.iter().all(|&(_, s)| s < bound)
    }
}

/// Either a deformation field or a near-critical node of the max set.
#[derive(Clone, Debug, PartialEq)]
pub enum FieldOutcome<T> {
    Field(DeformationField<T>),
    NearCritical {
        node: usize,
        min_norm: T,
        scaled_min_norm: T,
    },
}

/// Builds the partition-of-unity field over the near-max set `max_set`.
///
/// Each node of M gets a certified direction with margin `3ε/2`. Centers are
/// picked greedily (highest value first); the cover of a center holds every
/// M node where its direction keeps slope below `-3ε/2`. Weights are hats in
/// grid index, restricted to cover members on M and normalized there.
pub fn build_deformation_field<T: Scalar>(
    f: &SubPath<T>,
    max_set: &MaxSet<T>,
    totals: &[T],
    eps: T,
    phi: &FunctionalExpr<T>,
    params: &SolverParams,
) -> Result<FieldOutcome<T>> {
    let m = f.m();
    let members = &max_set.members;
    if members.is_empty() {
        return Err(Error::Usage("near-max set is empty".into()));
    }
    if max_set.touches_endpoints(m) {
        return Err(Error::Window(
            "near-max set touches a window endpoint".into(),
        ));
    }
    let margin = T::lit(1.5) * eps;
    let atol = T::lit(params.activity_tol);
    let mut polys: Vec<SubdiffPolytope<T>> = Vec::with_capacity(members.len());
    let mut dirs: Vec<Vec<T>> = Vec::with_capacity(members.len());
    let mut critical: Option<(usize, T, T)> = None;
    for &j in members {
        let x = &f.nodes()[j];
        let poly = subdifferential(phi, x, atol)?;
        match descent_direction(&poly, x, margin)? {
            DescentResult::Direction { direction, .. } => {
                let n = vecops::norm(&direction);
                dirs.push(vecops::scale(&direction, T::one() / n));
            }
            DescentResult::NearCritical {
                min_norm,
                scaled_min_norm,
            } => {
                let better = critical.is_none_or(|(c, _, _)| totals[j] > totals[c]);
                if better {
                    critical = Some((j, min_norm, scaled_min_norm));
                }
                dirs.push(Vec::new());
            }
        }
        polys.push(poly);
    }
    if let Some((node, min_norm, scaled_min_norm)) = critical {
        return Ok(FieldOutcome::NearCritical {
            node,
            min_norm,
            scaled_min_norm,
        });
    }

    // greedy cover, highest value first, lowest index on ties
    let mut order: Vec<usize> = (0..members.len()).collect();
    order.sort_by(|&a, &b| {
        totals[members[b]]
            .partial_cmp(&totals[members[a]])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let scale_at = |i: usize| T::one() + f.nodes()[members[i]].norm();
    let mut covered = vec![false; members.len()];
    let mut centers = Vec::new();
    let mut directions = Vec::new();
    let mut covers: Vec<Vec<bool>> = Vec::new();
    for &c in &order {
        if covered[c] {
            continue;
        }
        let u = dirs[c].clone();
        let cover: Vec<bool> = (0..members.len())
            .map(|i| {
                let w = vecops::scale(&u, scale_at(i));
                gen_dir_derivative(&polys[i], &w).map(|s| s < -margin)
            })
            .collect::<Result<_>>()?;
        for (i, &inside) in cover.iter().enumerate() {
            covered[i] |= inside;
        }
        centers.push(members[c]);
        directions.push(u);
        covers.push(cover);
    }

    let hat = |k: usize, j: usize, width: T| -> T {
        let d = T::lit((j as f64 - centers[k] as f64).abs());
        (T::one() - d / width).max(T::zero())
    };
    let widths: Vec<T> = (0..centers.len())
        .map(|k| {
            let reach = members
                .iter()
                .zip(&covers[k])
                .filter(|(_, &inside)| inside)
                .map(|(&j, _)| (j as f64 - centers[k] as f64).abs())
                .fold(0.0, f64::max);
            T::lit(reach + 1.0)
        })
        .collect();
    let mut weights = vec![vec![T::zero(); m + 1]; centers.len()];
    for j in 1..m {
        match members.binary_search(&j) {
            Ok(i) => {
                let raw: Vec<T> = (0..centers.len())
                    .map(|k| if covers[k][i] { hat(k, j, widths[k]) } else { T::zero() })
                    .collect();
                let sum = raw.iter().copied().fold(T::zero(), |a, b| a + b);
                for k in 0..centers.len() {
                    weights[k][j] = raw[k] / sum;
                }
            }
            Err(_) => {
                let raw: Vec<T> = (0..centers.len()).map(|k| hat(k, j, widths[k])).collect();
                let sum = raw.iter().copied().fold(T::zero(), |a, b| a + b);
                let norm = sum.max(T::one());
                for k in 0..centers.len() {
                    weights[k][j] = raw[k] / norm;
                }
            }
        }
    }
    let n = f.nodes()[0].dim();
    let mut vectors = vec![vec![T::zero(); n]; m + 1];
    for (j, v) in vectors.iter_mut().enumerate().take(m).skip(1) {
        let s = T::one() + f.nodes()[j].norm();
        for k in 0..centers.len() {
            if weights[k][j] != T::zero() {
                *v = vecops::axpy(v, s * weights[k][j], &directions[k]);
            }
        }
    }
    let slopes = members
        .iter()
        .zip(&polys)
        .map(|(&j, poly)| gen_dir_derivative(poly, &vectors[j]).map(|s| (j, s)))
        .collect::<Result<_>>()?;
    Ok(FieldOutcome::Field(DeformationField {
        vectors,
        centers,
        directions,
        weights,
        slopes,
    }))
}

/// Accepted step of [`deformation_round`].
#[derive(Clone, Debug)]
pub(crate) struct RoundStep<T> {
    pub next: Evaluated<T>,
    pub h: T,
}

/// Backtracking `h ← βh` from `h0` until `φ(f + hv) < φ(f) − (ε/2)ρ(f + hv, f)`.
pub fn deformation_round<T: Scalar>(
    f: &SubPath<T>,
    current: &PathMax<T>,
    field: &DeformationField<T>,
    pf: &PenalizedFunctional<'_, T>,
    params: &SolverParams,
) -> Result<(SubPath<T>, PathMax<T>, T)> {
    let cur = Evaluated {
        path: f.clone(),
        max: current.clone(),
    };
    let step = round(&cur, field, pf, params)?;
    Ok((step.next.path, step.next.max, step.h))
}

pub(crate) fn round<T: Scalar>(
    cur: &Evaluated<T>,
    field: &DeformationField<T>,
    pf: &PenalizedFunctional<'_, T>,
    params: &SolverParams,
) -> Result<RoundStep<T>> {
    let m = cur.path.m();
    if field.vectors.iter().all(|v| v.iter().all(|c| *c == T::zero())) {
        return Err(Error::Usage("deformation field is identically zero".into()));
    }
    let changed: Vec<usize> = (1..m)
        .filter(|&j| field.vectors[j].iter().any(|c| *c != T::zero()))
        .collect();
    let opts = params.rho_delta();
    let near_tol = params.near_tol(pf.eps);
    let half = T::lit(0.5) * pf.eps;
    let mut h = T::lit(params.h0);
    let h_min = T::lit(params.h_min);
    let mut best_margin = T::neg_infinity();
    while h >= h_min {
        let moved = deform(&cur.path, &field.vectors, h)?;
        let rho = changed
            .iter()
            .map(|&j| {
                crate::geometry::delta_slices(
                    moved.nodes()[j].coords(),
                    cur.path.nodes()[j].coords(),
                    &opts,
                )
            })
            .fold(T::zero(), T::max);
        let next = cur.with_changes(moved, &changed, pf, near_tol)?;
        let margin = cur.value() - half * rho - next.value();
        if margin > T::zero() {
            return Ok(RoundStep { next, h });
        }
        best_margin = best_margin.max(margin);
        h = h * T::lit(params.beta);
    }
    Err(Error::SlopeParadox {
        grid_m: m,
        h_min: params.h_min,
        best_margin: best_margin.to_f64_lossy(),
    })
}
