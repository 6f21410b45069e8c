use crate::clarke::{min_norm_element, subdifferential};
use crate::error::{Error, Result};
use crate::functionals::{MinMaxProblem, Point};
use crate::geometry::{crossing_window, dist_delta_to_set, epsilon_bound, CrossingWindow, LevelRestrictedSet};
use crate::paths::{PathMax, PenalizedFunctional, SubPath};
use crate::scalar::{vecops, Scalar};

use super::deform::{build_deformation_field, round, FieldOutcome};
use super::ekeland::{ekeland_select, Evaluated};
use super::gamma::{minimize_max_over_paths, GammaEstimate};
use super::{InvariantTally, SolverParams};

/// Outcome of the three certificate inequalities.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CertChecks {
    /// `(1 + |x|)·min_norm <= (3/2)ε + tol`
    pub min_norm: bool,
    /// `γ − tol <= Φ(x) <= γ + (5/4)ε² + tol`
    pub phi: bool,
    /// `dist_δ(x, F_γ) <= (3/2)ε + tol`
    pub dist: bool,
}

impl CertChecks {
    pub fn all(&self) -> bool {
        self.min_norm && self.phi && self.dist
    }
}

/// Almost-critical point produced at one ε.
#[derive(Clone, Debug, PartialEq)]
pub struct CpsCertificate<T> {
    pub n: usize,
    pub eps: T,
    pub x: Point<T>,
    pub phi_val: T,
    pub min_norm: T,
    pub scaled_min_norm: T,
    /// δ-distance to `F_γ`.
    pub dist_delta_f: T,
    /// Euclidean distance to `F` (NaN when no projection was found).
    pub dist_norm_f: T,
    pub gamma_est: T,
    pub cert_tol: T,
    /// Window parameter of `x` on the final sub-path.
    pub t_bar: T,
    pub checks: CertChecks,
}

/// Everything recorded by one [`cps_step`].
#[derive(Clone, Debug)]
pub struct StepReport<T> {
    pub cert: CpsCertificate<T>,
    pub window: CrossingWindow<T>,
    /// `φ(ĉ)` and the barrier `γ + (5/4)ε²` it is checked against.
    pub phi_c_hat: T,
    /// `ρ(f̂, ĉ)` after the Ekeland selection.
    pub rho_hat_c_hat: T,
    pub ekeland_moves: usize,
    pub ekeland_conclusions: [bool; 3],
    pub rounds: usize,
    pub refinements: usize,
    pub final_path: SubPath<T>,
    pub final_max: PathMax<T>,
    pub tally: InvariantTally,
}

fn crossing_present<T: Scalar>(f: &SubPath<T>, problem: &MinMaxProblem<T>) -> bool {
    let side: Vec<T> = f.nodes().iter().map(|p| problem.separator.side(p)).collect();
    side.windows(2)
        .any(|w| (w[0] <= T::zero() && w[1] >= T::zero()) || (w[0] >= T::zero() && w[1] <= T::zero()))
}

/// `γ + ε² − L·cell`, with `L` the largest generator norm along `f` plus ε.
fn lower_barrier<T: Scalar>(
    f: &SubPath<T>,
    problem: &MinMaxProblem<T>,
    gamma: T,
    eps: T,
    params: &SolverParams,
) -> Result<T> {
    let atol = T::lit(params.activity_tol);
    let mut lip = T::zero();
    for p in f.nodes() {
        for g in problem.phi.active_pieces(p, atol)? {
            lip = lip.max(vecops::norm(&g));
        }
    }
    Ok(gamma + eps * eps - (lip + eps) * f.max_cell())
}

fn check_accepted<T: Scalar>(
    cur: &Evaluated<T>,
    problem: &MinMaxProblem<T>,
    gamma: T,
    eps: T,
    params: &SolverParams,
    tally: &mut InvariantTally,
) -> Result<()> {
    tally.crossing_checks += 1;
    if !crossing_present(&cur.path, problem) {
        tally.crossing_violations += 1;
    }
    tally.barrier_checks += 1;
    if cur.value() < lower_barrier(&cur.path, problem, gamma, eps, params)? {
        tally.barrier_violations += 1;
    }
    tally.endpoint_checks += 1;
    if cur.max.max_set.touches_endpoints(cur.path.m()) {
        tally.endpoint_violations += 1;
        return Err(Error::Window(format!(
            "near-max set {:?} touches a window endpoint (m = {})",
            cur.max.max_set.members,
            cur.path.m()
        )));
    }
    Ok(())
}

/// Certificate at node `node` of `f`.
fn certify<T: Scalar>(
    f: &SubPath<T>,
    node: usize,
    n: usize,
    eps: T,
    problem: &MinMaxProblem<T>,
    fg: &LevelRestrictedSet<'_, T>,
    gamma: T,
    params: &SolverParams,
) -> Result<CpsCertificate<T>> {
    let x = f.nodes()[node].clone();
    let phi_val = problem.phi.evaluate(&x)?;
    let poly = subdifferential(&problem.phi, &x, T::lit(params.activity_tol))?;
    let (_, min_norm) = min_norm_element(&poly);
    let scaled_min_norm = (T::one() + x.norm()) * min_norm;
    // both estimates are upper bounds on the true distance
    let full = dist_delta_to_set(&x, fg, &params.cert_dist())?.value;
    let cheap = dist_delta_to_set(&x, fg, &params.psi_dist())?.value;
    let dist_delta_f = full.min(cheap);
    let dist_norm_f = problem
        .separator
        .euclidean_distance(x.coords())
        .unwrap_or_else(T::nan);
    let tol = params.cert_tol(gamma);
    let checks = CertChecks {
        min_norm: scaled_min_norm <= T::lit(1.5) * eps + tol,
        phi: gamma - tol <= phi_val && phi_val <= gamma + T::lit(1.25) * eps * eps + tol,
        dist: dist_delta_f <= T::lit(1.5) * eps + tol,
    };
    Ok(CpsCertificate {
        n,
        eps,
        x,
        phi_val,
        min_norm,
        scaled_min_norm,
        dist_delta_f,
        dist_norm_f,
        gamma_est: gamma,
        cert_tol: tol,
        t_bar: f.param(node),
        checks,
    })
}

/// One ε-stage: window, Ekeland selection, deformation rounds until a
/// near-critical node of the max set appears, then its certificate.
pub fn cps_step<T: Scalar>(
    problem: &MinMaxProblem<T>,
    gamma: &GammaEstimate<T>,
    eps: T,
    params: &SolverParams,
) -> Result<StepReport<T>> {
    params.validate()?;
    step_tallied(problem, gamma, eps, params, &mut InvariantTally::default())
}

/// [`cps_step`] that also records its checks in `total`, even when it fails.
pub(crate) fn step_tallied<T: Scalar>(
    problem: &MinMaxProblem<T>,
    gamma: &GammaEstimate<T>,
    eps: T,
    params: &SolverParams,
    total: &mut InvariantTally,
) -> Result<StepReport<T>> {
    let mut tally = InvariantTally::default();
    let out = step_inner(problem, gamma, eps, params, &mut tally);
    total.merge(&tally);
    out.map(|mut r| {
        r.tally = tally;
        r
    })
}

fn step_inner<T: Scalar>(
    problem: &MinMaxProblem<T>,
    gamma: &GammaEstimate<T>,
    eps: T,
    params: &SolverParams,
    tally: &mut InvariantTally,
) -> Result<StepReport<T>> {
    let g = gamma.value;
    let fg = LevelRestrictedSet::new(&problem.separator, &problem.phi, g);
    let psi = params.psi_dist();

    tally.window_checks += 1;
    let window =
        crossing_window(&gamma.witness, &fg, eps, &psi).map_err(|e| e.at("crossing_window"))?;
    if !(T::zero() < window.t0 && window.t0 < window.t1 && window.t1 < T::one()) {
        tally.window_violations += 1;
        return Err(Error::Window(format!("degenerate window [{}, {}]", window.t0, window.t1)).at("crossing_window"));
    }
    let c_hat = gamma
        .witness
        .restrict_aligned(window.t0, window.t1, params.grid_m, Some(gamma.argmax_t))
        .map_err(|e| e.at("crossing_window"))?;
    let pf = PenalizedFunctional {
        phi: &problem.phi,
        fg: fg.clone(),
        eps,
        dist: psi,
    };
    let near_tol = params.near_tol(eps);
    let tol = params.cert_tol(g);
    let start = Evaluated::new(c_hat.clone(), &pf, near_tol).map_err(|e| e.at("path_max"))?;
    let phi_c_hat = start.value();
    if phi_c_hat > g + T::lit(1.25) * eps * eps + tol {
        return Err(Error::Precondition(format!(
            "φ(ĉ) = {phi_c_hat} exceeds γ + (5/4)ε² = {}",
            g + T::lit(1.25) * eps * eps
        ))
        .at("ekeland_select"));
    }
    let ek = ekeland_select(&c_hat, &pf, params).map_err(|e| e.at("ekeland_select"))?;
    let mut cur = Evaluated {
        path: ek.path.clone(),
        max: ek.max.clone(),
    };
    let mut rounds = 0;
    let mut refinements = 0;
    let n = (T::one() / eps).round().to_usize().unwrap_or(0);
    loop {
        check_accepted(&cur, problem, g, eps, params, tally)
            .map_err(|e| e.at("build_deformation_field"))?;
        let totals = cur.max.totals();
        let outcome = build_deformation_field(&cur.path, &cur.max.max_set, &totals, eps, &problem.phi, params)
            .map_err(|e| e.at("build_deformation_field"))?;
        let field = match outcome {
            FieldOutcome::NearCritical { node, .. } => {
                let cert = certify(&cur.path, node, n, eps, problem, &fg, g, params)
                    .map_err(|e| e.at("certificate"))?;
                return Ok(StepReport {
                    cert,
                    window,
                    phi_c_hat,
                    rho_hat_c_hat: ek.rho_to_start,
                    ekeland_moves: ek.accepted_moves,
                    ekeland_conclusions: ek.conclusions,
                    rounds,
                    refinements,
                    final_path: cur.path,
                    final_max: cur.max,
                    tally: *tally,
                });
            }
            FieldOutcome::Field(field) => field,
        };
        tally.field_checks += 1;
        if !(field.bounds_hold(&cur.path) && field.slopes_hold(eps, T::lit(params.pou_tol))) {
            tally.field_violations += 1;
        }
        if rounds >= params.max_rounds {
            return Err(Error::NoCertificate { rounds }.at("deformation_round"));
        }
        match round(&cur, &field, &pf, params) {
            Ok(step) => {
                cur = step.next;
                rounds += 1;
            }
            Err(Error::SlopeParadox { .. }) if refinements < params.max_refinements => {
                refinements += 1;
                let refined = cur.path.refine(2 * cur.path.m()).map_err(|e| e.at("refine"))?;
                cur = Evaluated::new(refined, &pf, near_tol).map_err(|e| e.at("path_max"))?;
            }
            Err(e) => return Err(e.at("deformation_round")),
        }
    }
}

/// Per-ε entry of a run; failures are kept with their stage labels.
#[derive(Clone, Debug)]
pub struct CpsEntry<T> {
    pub n: usize,
    pub eps: T,
    pub result: std::result::Result<StepReport<T>, Error>,
}

/// Output of [`cps_sequence`].
#[derive(Clone, Debug)]
pub struct CpsRun<T> {
    pub gamma: GammaEstimate<T>,
    /// `½·min{1, dist_δ(z0, F_γ), dist_δ(z1, F_γ)}`.
    pub eps_bound: T,
    pub n_min: usize,
    pub entries: Vec<CpsEntry<T>>,
    pub tally: InvariantTally,
    /// Explanation when no ε of the schedule is admissible.
    pub note: Option<String>,
}

impl<T: Scalar> CpsRun<T> {
    pub fn certificates(&self) -> Vec<CpsCertificate<T>> {
        self.entries
            .iter()
            .filter_map(|e| e.result.as_ref().ok().map(|r| r.cert.clone()))
            .collect()
    }
}

/// Certificates for `ε_n = 1/n`, `n = n_min..=n_max`.
///
/// Topology and empty-set errors do not depend on n and end the run
/// immediately; other per-n failures are recorded and the run continues.
pub fn cps_sequence<T: Scalar>(
    problem: &MinMaxProblem<T>,
    params: &SolverParams,
) -> Result<CpsRun<T>> {
    params.validate()?;
    let gamma = minimize_max_over_paths(problem, params).map_err(|e| e.at("minimize_max_over_paths"))?;
    run_with_gamma(problem, gamma, params)
}

pub(crate) fn run_with_gamma<T: Scalar>(
    problem: &MinMaxProblem<T>,
    gamma: GammaEstimate<T>,
    params: &SolverParams,
) -> Result<CpsRun<T>> {
    if !problem.separator.separates(&problem.z0, &problem.z1) {
        return Err(Error::Topology("F does not separate z0 and z1".into()).at("crossing_window"));
    }
    let fg = LevelRestrictedSet::new(&problem.separator, &problem.phi, gamma.value);
    let eps_bound = epsilon_bound(&problem.z0, &problem.z1, &fg, &params.psi_dist())
        .map_err(|e| e.at("epsilon_bound"))?;
    let n_min = (T::one() / eps_bound).floor().to_usize().unwrap_or(usize::MAX - 1) + 1;
    let mut run = CpsRun {
        gamma,
        eps_bound,
        n_min,
        entries: Vec::new(),
        tally: InvariantTally::default(),
        note: None,
    };
    if params.n_max < n_min {
        run.note = Some(format!(
            "n_max = {} is below n_min = {n_min}: no ε = 1/n satisfies ε < {eps_bound}",
            params.n_max
        ));
        return Ok(run);
    }
    for n in n_min..=params.n_max {
        let eps = T::one() / T::lit(n as f64);
        let result = step_tallied(problem, &run.gamma, eps, params, &mut run.tally);
        if let Err(e) = &result {
            if matches!(e.root(), Error::Topology(_) | Error::SetEmpty(_)) {
                return Err(e.clone());
            }
        }
        run.entries.push(CpsEntry { n, eps, result });
    }
    Ok(run)
}

/// Converged critical point.
#[derive(Clone, Debug)]
pub struct CriticalPoint<T> {
    pub x: Point<T>,
    pub gamma: T,
    pub phi: T,
    pub min_norm: T,
    pub run: CpsRun<T>,
}

/// Why the tail of the sequence was not accepted, with candidate clusters.
#[derive(Clone, Debug)]
pub struct NoConvergenceReport<T> {
    pub reason: String,
    /// Cluster centers and member counts of the certified iterates.
    pub clusters: Vec<(Point<T>, usize)>,
    pub run: CpsRun<T>,
}

#[derive(Clone, Debug)]
pub enum CriticalOutcome<T> {
    Converged(CriticalPoint<T>),
    NoConvergence(NoConvergenceReport<T>),
}

fn clusters<T: Scalar>(xs: &[Point<T>], radius: T) -> Vec<(Point<T>, usize)> {
    let mut out: Vec<(Point<T>, usize)> = Vec::new();
    for x in xs {
        match out.iter_mut().find(|(c, _)| c.dist(x) <= radius) {
            Some((_, k)) => *k += 1,
            None => out.push((x.clone(), 1)),
        }
    }
    out.sort_by(|a, b| b.1.cmp(&a.1));
    out
}

/// Runs the sequence and accepts its last iterate when the tail is Cauchy
/// within `conv_tol` and the final point is critical within `conv_tol`.
pub fn find_critical_point<T: Scalar>(
    problem: &MinMaxProblem<T>,
    params: &SolverParams,
) -> Result<CriticalOutcome<T>> {
    let run = cps_sequence(problem, params)?;
    Ok(judge(problem, run, params))
}

pub(crate) fn judge<T: Scalar>(
    problem: &MinMaxProblem<T>,
    run: CpsRun<T>,
    params: &SolverParams,
) -> CriticalOutcome<T> {
    let certs = run.certificates();
    let xs: Vec<Point<T>> = certs.iter().map(|c| c.x.clone()).collect();
    let tol = T::lit(params.conv_tol);
    let fail = |reason: String, run: CpsRun<T>| {
        CriticalOutcome::NoConvergence(NoConvergenceReport {
            reason,
            clusters: clusters(&xs, tol.sqrt()),
            run,
        })
    };
    if certs.len() < params.tail {
        let reason = run.note.clone().unwrap_or_else(|| {
            format!(
                "only {} certificates; the Cauchy test needs {}",
                certs.len(),
                params.tail
            )
        });
        return fail(reason, run);
    }
    let tail = &xs[xs.len() - params.tail..];
    let mut spread = T::zero();
    for (i, a) in tail.iter().enumerate() {
        for b in &tail[i + 1..] {
            spread = spread.max(a.dist(b));
        }
    }
    if spread >= tol {
        return fail(format!("tail spread {spread} >= conv_tol {tol}"), run);
    }
    let x = tail[tail.len() - 1].clone();
    let phi = match problem.phi.evaluate(&x) {
        Ok(v) => v,
        Err(e) => return fail(e.to_string(), run),
    };
    let min_norm = match subdifferential(&problem.phi, &x, T::lit(params.activity_tol)) {
        Ok(p) => min_norm_element(&p).1,
        Err(e) => return fail(e.to_string(), run),
    };
    let gamma = run.gamma.value;
    if (phi - gamma).abs() >= tol {
        return fail(format!("|Φ(x̄) − γ| = {} >= conv_tol", (phi - gamma).abs()), run);
    }
    if min_norm >= tol {
        return fail(format!("min_norm(∂Φ(x̄)) = {min_norm} >= conv_tol"), run);
    }
    CriticalOutcome::Converged(CriticalPoint {
        x,
        gamma,
        phi,
        min_norm,
        run,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::problem_library;

    fn quick() -> SolverParams {
        SolverParams {
            n_max: 12,
            ..SolverParams::default()
        }
    }

    #[test]
    fn step_on_smooth_benchmark() {
        let p = problem_library::<f64>("smooth_double_well").unwrap();
        let params = quick();
        let g = minimize_max_over_paths(&p, &params).unwrap();
        let r = cps_step(&p, &g, 0.1, &params).unwrap();
        let c = &r.cert;
        assert!(c.checks.all(), "{c:?}");
        assert!(c.scaled_min_norm <= 0.15);
        assert!(c.phi_val >= 1.0 - 1e-6 && c.phi_val <= 1.0125 + 1e-6);
        assert_eq!(r.tally.structural_violations(), 0);
    }

    #[test]
    fn step_on_nonsmooth_benchmark() {
        let p = problem_library::<f64>("nonsmooth_twin_paraboloid").unwrap();
        let params = quick();
        let g = minimize_max_over_paths(&p, &params).unwrap();
        let r = cps_step(&p, &g, 0.1, &params).unwrap();
        assert!(r.cert.checks.all(), "{:?}", r.cert);
        assert!(r.cert.dist_delta_f <= 0.1);
    }

    #[test]
    fn oversized_eps_is_a_precondition_error() {
        let p = problem_library::<f64>("smooth_double_well").unwrap();
        let params = quick();
        let g = minimize_max_over_paths(&p, &params).unwrap();
        let e = cps_step(&p, &g, 0.45, &params).unwrap_err();
        assert!(matches!(e.root(), Error::Precondition(_)), "{e}");
    }

    #[test]
    fn n_max_below_n_min_gives_empty_run() {
        let p = problem_library::<f64>("smooth_double_well").unwrap();
        let params = SolverParams {
            n_max: 1,
            ..SolverParams::default()
        };
        let run = cps_sequence(&p, &params).unwrap();
        assert!(run.entries.is_empty());
        assert_eq!(run.n_min, 3);
        assert!(run.note.is_some());
    }

    #[test]
    fn offset_separator_is_a_topology_error() {
        let mut p = problem_library::<f64>("smooth_double_well").unwrap();
        p.separator = crate::geometry::SeparatingSet::hyperplane(vec![1.0, 0.0], 0.5).unwrap();
        let e = cps_sequence(&p, &quick()).unwrap_err();
        assert!(matches!(e.root(), Error::Topology(_)), "{e}");
    }
}
