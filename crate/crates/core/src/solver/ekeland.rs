use crate::clarke::{min_norm_element, subdifferential};
use crate::error::Result;
use crate::geometry::{delta_slices, DeltaOptions};
use crate::paths::{path_max, path_max_from_parts, PathMax, PenalizedFunctional, SubPath};
use crate::scalar::{vecops, Scalar};

use super::deform::{build_deformation_field, FieldOutcome};
use super::SolverParams;

/// A sub-path together with its node values.
#[derive(Clone, Debug)]
pub(crate) struct Evaluated<T> {
    pub path: SubPath<T>,
    pub max: PathMax<T>,
}

impl<T: Scalar> Evaluated<T> {
    pub fn new(path: SubPath<T>, pf: &PenalizedFunctional<'_, T>, near_tol: T) -> Result<Self> {
        let max = path_max(&path, pf, near_tol)?;
        Ok(Evaluated { path, max })
    }

    /// Re-evaluates only the nodes listed in `changed`.
    pub fn with_changes(
        &self,
        path: SubPath<T>,
        changed: &[usize],
        pf: &PenalizedFunctional<'_, T>,
        near_tol: T,
    ) -> Result<Self> {
        let mut phi = self.max.phi.clone();
        let mut psi = self.max.psi.clone();
        for &j in changed {
            let (a, b) = pf.parts(path.nodes()[j].coords())?;
            phi[j] = a;
            psi[j] = b;
        }
        let max = path_max_from_parts(&path, phi, psi, near_tol);
        Ok(Evaluated { path, max })
    }

    pub fn value(&self) -> T {
        self.max.value
    }
}

/// Kind of a candidate move in the Ekeland move set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Move<T> {
    /// `f + h v` for the deformation field `v` of `f`.
    Field { h: T },
    /// Node `j` moved by `h` along its min-norm descent direction.
    Node { j: usize, h: T },
}

/// Candidate moves from `f`: deformation-field steps and single-node steps at
/// sizes `ε·2^-k`, `k = 0..=ekeland_levels`. Returns each move with the
/// moved path and the indices of the nodes that changed.
pub fn ekeland_moves<T: Scalar>(
    f: &SubPath<T>,
    pm: &PathMax<T>,
    pf: &PenalizedFunctional<'_, T>,
    params: &SolverParams,
) -> Result<Vec<(Move<T>, SubPath<T>, Vec<usize>)>> {
    let eps = pf.eps;
    let m = f.m();
    let hs: Vec<T> = (0..=params.ekeland_levels)
        .map(|k| eps * T::lit(0.5f64.powi(k as i32)))
        .collect();
    let mut out = Vec::new();
    let touches = pm.max_set.touches_endpoints(m);
    if !touches {
        let totals = pm.totals();
        if let FieldOutcome::Field(field) =
            build_deformation_field(f, &pm.max_set, &totals, eps, pf.phi, params)?
        {
            let changed: Vec<usize> = (1..m)
                .filter(|&j| field.vectors[j].iter().any(|c| *c != T::zero()))
                .collect();
            for &h in &hs {
                let g = crate::paths::deform(f, &field.vectors, h)?;
                out.push((Move::Field { h }, g, changed.clone()));
            }
        }
    }
    let atol = T::lit(params.activity_tol);
    for &j in &pm.max_set.members {
        if j == 0 || j == m {
            continue;
        }
        let x = &f.nodes()[j];
        let poly = subdifferential(pf.phi, x, atol)?;
        let (g, n) = min_norm_element(&poly);
        if n <= T::zero() {
            continue;
        }
        let d = vecops::scale(&g, -(T::one() + x.norm()) / n);
        for &h in &hs {
            let moved = f.with_node(j, vecops::axpy(x.coords(), h, &d));
            out.push((Move::Node { j, h }, moved, vec![j]));
        }
    }
    Ok(out)
}

/// Ekeland admissibility of `cand` relative to `cur`: a strict decrease by
/// more than `(ε/2)·ρ(cand, cur)` while staying within `ε/2` of `anchor`.
pub fn is_admissible<T: Scalar>(
    phi_cand: T,
    phi_cur: T,
    rho_cand_cur: T,
    rho_cand_anchor: T,
    eps: T,
) -> bool {
    let half = T::lit(0.5) * eps;
    phi_cand < phi_cur - half * rho_cand_cur && rho_cand_anchor <= half
}

/// Result of [`ekeland_select`].
#[derive(Clone, Debug)]
pub struct EkelandOutcome<T> {
    pub path: SubPath<T>,
    pub max: PathMax<T>,
    pub phi_start: T,
    pub rho_to_start: T,
    pub accepted_moves: usize,
    pub budget_exhausted: bool,
    /// (i) `φ(f̂) <= φ(ĉ)`, (ii) `ρ(f̂, ĉ) <= ε/2`, (iii) no admissible move.
    pub conclusions: [bool; 3],
}

fn node_rho<T: Scalar>(a: &SubPath<T>, b: &SubPath<T>, j: usize, opts: &DeltaOptions) -> T {
    delta_slices(a.nodes()[j].coords(), b.nodes()[j].coords(), opts)
}

/// Best admissible move from `cur`, if any: `(φ', ρ to anchor per node, evaluated path)`.
fn best_move<T: Scalar>(
    cur: &Evaluated<T>,
    anchor: &SubPath<T>,
    rho_anchor: &[T],
    pf: &PenalizedFunctional<'_, T>,
    params: &SolverParams,
) -> Result<Option<(Evaluated<T>, Vec<T>)>> {
    let opts = params.rho_delta();
    let near_tol = params.near_tol(pf.eps);
    let mut best: Option<(Evaluated<T>, Vec<T>)> = None;
    for (_, cand, changed) in ekeland_moves(&cur.path, &cur.max, pf, params)? {
        let rho_step = changed
            .iter()
            .map(|&j| node_rho(&cand, &cur.path, j, &opts))
            .fold(T::zero(), T::max);
        let mut ra = rho_anchor.to_vec();
        for &j in &changed {
            ra[j] = node_rho(&cand, anchor, j, &opts);
        }
        let ra_max = ra.iter().copied().fold(T::zero(), T::max);
        // cheap rejection before evaluating Ψ
        if ra_max > T::lit(0.5) * pf.eps {
            continue;
        }
        let ev = cur.with_changes(cand, &changed, pf, near_tol)?;
        if !is_admissible(ev.value(), cur.value(), rho_step, ra_max, pf.eps) {
            continue;
        }
        if best.as_ref().is_none_or(|(b, _)| ev.value() < b.value()) {
            best = Some((ev, ra));
        }
    }
    Ok(best)
}

/// Constructive Ekeland selection over the finite move set, started at `ĉ`.
///
/// Repeatedly takes the admissible move with the lowest path value (first on
/// ties) until none is left or the move budget is spent.
pub fn ekeland_select<T: Scalar>(
    c_hat: &SubPath<T>,
    pf: &PenalizedFunctional<'_, T>,
    params: &SolverParams,
) -> Result<EkelandOutcome<T>> {
    let near_tol = params.near_tol(pf.eps);
    let start = Evaluated::new(c_hat.clone(), pf, near_tol)?;
    let phi_start = start.value();
    let mut cur = start;
    let mut rho_anchor = vec![T::zero(); c_hat.nodes().len()];
    let mut accepted = 0;
    let mut exhausted = false;
    loop {
        match best_move(&cur, c_hat, &rho_anchor, pf, params)? {
            None => break,
            Some(_) if accepted >= params.ekeland_budget => {
                exhausted = true;
                break;
            }
            Some((next, ra)) => {
                cur = next;
                rho_anchor = ra;
                accepted += 1;
            }
        }
    }
    let rho_to_start = rho_anchor.iter().copied().fold(T::zero(), T::max);
    let conclusions = [
        cur.value() <= phi_start,
        rho_to_start <= T::lit(0.5) * pf.eps,
        !exhausted,
    ];
    Ok(EkelandOutcome {
        path: cur.path,
        max: cur.max,
        phi_start,
        rho_to_start,
        accepted_moves: accepted,
        budget_exhausted: exhausted,
        conclusions,
    })
}

/// Independent re-check of the three Ekeland conclusions for `f_hat`.
pub fn check_ekeland<T: Scalar>(
    c_hat: &SubPath<T>,
    f_hat: &SubPath<T>,
    pf: &PenalizedFunctional<'_, T>,
    params: &SolverParams,
) -> Result<[bool; 3]> {
    let near_tol = params.near_tol(pf.eps);
    let opts = params.rho_delta();
    let start = Evaluated::new(c_hat.clone(), pf, near_tol)?;
    let hat = Evaluated::new(f_hat.clone(), pf, near_tol)?;
    let rho_anchor: Vec<T> = (0..f_hat.nodes().len())
        .map(|j| node_rho(f_hat, c_hat, j, &opts))
        .collect();
    let rho = rho_anchor.iter().copied().fold(T::zero(), T::max);
    let none_left = best_move(&hat, c_hat, &rho_anchor, pf, params)?.is_none();
    Ok([
        hat.value() <= start.value(),
        rho <= T::lit(0.5) * pf.eps,
        none_left,
    ])
}
