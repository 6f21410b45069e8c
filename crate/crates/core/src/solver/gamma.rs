use crate::clarke::{descent_direction, subdifferential, DescentResult};
use crate::error::{Error, Result};
use crate::functionals::{MinMaxProblem, Point};
use crate::paths::{argmax, polyline_max, reparametrize, Path};
use crate::scalar::{vecops, Scalar};

use super::SolverParams;

/// Upper estimate of the min-max level with a path attaining it.
#[derive(Clone, Debug, PartialEq)]
pub struct GammaEstimate<T> {
    pub value: T,
    pub witness: Path<T>,
    /// Parameter where the witness attains `value`.
    pub argmax_t: T,
    /// Best upper bound after each accepted step (nonincreasing).
    pub history: Vec<T>,
    /// True when every near-max node of the witness is near-critical.
    pub converged: bool,
    pub iterations: usize,
}

/// Lowers `max Φ` along a path from the straight initial guess.
///
/// Near-max nodes move along certified descent directions with a hat-shaped
/// taper onto their neighbours and a backtracking line search.
pub fn minimize_max_over_paths<T: Scalar>(
    problem: &MinMaxProblem<T>,
    params: &SolverParams,
) -> Result<GammaEstimate<T>> {
    params.validate()?;
    start_from(
        problem,
        Path::straight(problem.z0.clone(), problem.z1.clone(), params.grid_m)?,
        params,
    )
}

pub(crate) fn start_from<T: Scalar>(
    problem: &MinMaxProblem<T>,
    mut path: Path<T>,
    params: &SolverParams,
) -> Result<GammaEstimate<T>> {
    let phi = &problem.phi;
    let m = path.m();
    let end_max = phi
        .evaluate(&problem.z0)?
        .max(phi.evaluate(&problem.z1)?);
    let (mut best_val, mut best_t, _) = polyline_max(&path, phi)?;
    if best_val <= end_max {
        return Err(Error::Precondition(format!(
            "endpoints are not below the path maximum: max(Φ(z0), Φ(z1)) = {end_max}, max along path = {best_val}"
        )));
    }
    let mut witness = path.clone();
    let mut history = vec![best_val];
    let atol = T::lit(params.activity_tol);
    let tiny = T::lit(1e-12);
    let mut converged = false;
    let mut iterations = 0;

    for it in 0..params.gamma_iters {
        iterations = it + 1;
        let vals: Vec<T> = path
            .nodes()
            .iter()
            .map(|p| phi.evaluate(p))
            .collect::<Result<_>>()?;
        let top = vals[argmax(&vals)];
        let band = T::lit(1e-3) * (top - end_max);
        let near: Vec<usize> = (1..m).filter(|&j| vals[j] >= top - band).collect();
        let mut field = vec![vec![T::zero(); problem.dim()]; m + 1];
        let mut any = false;
        for &j in &near {
            let x = &path.nodes()[j];
            let poly = subdifferential(phi, x, atol)?;
            if let DescentResult::Direction { direction, .. } = descent_direction(&poly, x, tiny)? {
                any = true;
                for (k, w) in [(j - 1, 0.5), (j, 1.0), (j + 1, 0.5)] {
                    if k == 0 || k == m {
                        continue;
                    }
                    field[k] = vecops::axpy(&field[k], T::lit(w), &direction);
                }
            }
        }
        if !any {
            converged = true;
            break;
        }
        let mut h = T::lit(params.h0);
        let mut accepted = None;
        while h >= T::lit(params.h_min) {
            let trial: Vec<Point<T>> = path
                .nodes()
                .iter()
                .zip(&field)
                .map(|(p, v)| Point::from_vec(vecops::axpy(p.coords(), h, v)))
                .collect();
            let tmax = trial
                .iter()
                .map(|p| phi.evaluate(p))
                .collect::<Result<Vec<T>>>()?
                .into_iter()
                .fold(T::neg_infinity(), T::max);
            if tmax < top {
                accepted = Some((Path::from_nodes(trial)?, tmax));
                break;
            }
            h = h * T::lit(params.beta);
        }
        let Some((next, new_top)) = accepted else {
            break;
        };
        path = if (it + 1) % 10 == 0 {
            reparametrize(&next, m, params.psi_quad)?
        } else {
            next
        };
        let (v, t, _) = polyline_max(&path, phi)?;
        if v < best_val {
            best_val = v;
            best_t = t;
            witness = path.clone();
        }
        history.push(best_val);
        if top - new_top < T::lit(1e-10) * (T::one() + top.abs()) {
            break;
        }
    }
    Ok(GammaEstimate {
        value: best_val,
        witness,
        argmax_t: best_t,
        history,
        converged,
        iterations,
    })
}
