//! Min-max level estimation, Ekeland selection, deformation and the
//! certified sequence of almost-critical points.

mod cps;
mod deform;
mod diagnostics;
mod ekeland;
mod gamma;

pub use cps::{
    cps_sequence, cps_step, find_critical_point, CertChecks, CpsCertificate, CpsEntry, CpsRun,
    CriticalOutcome, CriticalPoint, NoConvergenceReport, StepReport,
};
pub use deform::{build_deformation_field, deformation_round, DeformationField, FieldOutcome};
pub use diagnostics::{check_cps, ConditionReport, CpsDiagnostics, DistanceMode};
pub use ekeland::{check_ekeland, ekeland_moves, ekeland_select, is_admissible, EkelandOutcome, Move};
pub use gamma::{minimize_max_over_paths, GammaEstimate};

pub(crate) use cps::{judge, step_tallied};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DeltaOptions, DistOptions};
use crate::scalar::Scalar;

/// Knobs for the whole pipeline. The ε schedule is `ε_n = 1/n`; λ is `ε/2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverParams {
    pub n_max: usize,
    pub grid_m: usize,
    /// Line-search shrink factor.
    pub beta: f64,
    pub h0: f64,
    pub h_min: f64,
    /// Step sizes `ε·2^-k` for `k = 0..=ekeland_levels`.
    pub ekeland_levels: usize,
    /// Accepted-move budget per Ekeland selection.
    pub ekeland_budget: usize,
    pub max_rounds: usize,
    pub max_refinements: usize,
    /// Near-max tolerance is `near_tol_factor · ε²`.
    pub near_tol_factor: f64,
    pub activity_tol: f64,
    /// Full δ discretization, used for certificates.
    pub delta_nodes: usize,
    pub delta_iters: usize,
    pub delta_quad: usize,
    /// Simpson panels of the straight-segment δ used inside the solver.
    pub psi_quad: usize,
    pub sample_budget: usize,
    pub refine_iters: usize,
    pub seed: u64,
    pub gamma_iters: usize,
    /// Certificate tolerance is `cert_tol_rel · (1 + |γ|)`.
    pub cert_tol_rel: f64,
    pub conv_tol: f64,
    pub pou_tol: f64,
    /// Iterates inspected by the Cauchy test.
    pub tail: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            n_max: 50,
            grid_m: 64,
            beta: 0.5,
            h0: 1.0,
            h_min: 1e-10,
            ekeland_levels: 12,
            ekeland_budget: 400,
            max_rounds: 50,
            max_refinements: 3,
            near_tol_factor: 0.125,
            activity_tol: 1e-9,
            delta_nodes: 64,
            delta_iters: 100,
            delta_quad: 16,
            psi_quad: 16,
            sample_budget: 24,
            refine_iters: 24,
            seed: 0,
            gamma_iters: 500,
            cert_tol_rel: 1e-6,
            conv_tol: 1e-4,
            pou_tol: 1e-9,
            tail: 5,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Usage(format!("invalid parameter: {what}")));
        if self.n_max < 1 {
            return bad("n_max must be >= 1");
        }
        if self.grid_m < 2 {
            return bad("grid_m must be >= 2");
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad("beta must lie in (0, 1)");
        }
        if !(self.h0 > 0.0 && self.h_min > 0.0 && self.h_min <= self.h0) {
            return bad("need 0 < h_min <= h0");
        }
        if self.ekeland_budget < 1
            || self.max_rounds < 1
            || self.sample_budget < 1
            || self.gamma_iters < 1
            || self.psi_quad < 1
            || self.delta_quad < 1
            || self.tail < 2
        {
            return bad("budgets must be >= 1 (tail >= 2)");
        }
        if !(self.near_tol_factor >= 0.0 && self.near_tol_factor < 1.0) {
            return bad("near_tol_factor must lie in [0, 1)");
        }
        if !(self.activity_tol >= 0.0
            && self.cert_tol_rel >= 0.0
            && self.conv_tol > 0.0
            && self.pou_tol >= 0.0)
        {
            return bad("tolerances must be non-negative (conv_tol > 0)");
        }
        Ok(())
    }

    /// Full δ options, used for certificates.
    pub fn delta(&self) -> DeltaOptions {
        DeltaOptions {
            interior_nodes: self.delta_nodes,
            iters: self.delta_iters,
            quad_points: self.delta_quad,
        }
    }

    /// Cheap straight-segment δ used for Ψ, ρ and the crossing window.
    pub fn rho_delta(&self) -> DeltaOptions {
        DeltaOptions::straight(self.psi_quad)
    }

    pub fn psi_dist(&self) -> DistOptions {
        DistOptions {
            sample_budget: self.sample_budget,
            seed: self.seed,
            delta: self.rho_delta(),
            refine_iters: self.refine_iters,
        }
    }

    pub fn cert_dist(&self) -> DistOptions {
        DistOptions {
            delta: self.delta(),
            ..self.psi_dist()
        }
    }

    pub fn near_tol<T: Scalar>(&self, eps: T) -> T {
        T::lit(self.near_tol_factor) * eps * eps
    }

    pub fn cert_tol<T: Scalar>(&self, gamma: T) -> T {
        T::lit(self.cert_tol_rel) * (T::one() + gamma.abs())
    }
}

/// Counts of structural checks made during a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvariantTally {
    /// `0 < t0 < t1 < 1` with the ε precondition enforced.
    pub window_checks: usize,
    pub window_violations: usize,
    /// Near-max set of accepted paths avoids the window endpoints.
    pub endpoint_checks: usize,
    pub endpoint_violations: usize,
    /// `|v_j| <= 1 + |f(t_j)|`, `v = 0` at window endpoints, slope bound on M.
    pub field_checks: usize,
    pub field_violations: usize,
    /// Separator changes sign between adjacent nodes.
    pub crossing_checks: usize,
    pub crossing_violations: usize,
    /// `φ >= γ + ε² − grid slack`.
    pub barrier_checks: usize,
    pub barrier_violations: usize,
}

impl InvariantTally {
    pub fn merge(&mut self, o: &InvariantTally) {
        self.window_checks += o.window_checks;
        self.window_violations += o.window_violations;
        self.endpoint_checks += o.endpoint_checks;
        self.endpoint_violations += o.endpoint_violations;
        self.field_checks += o.field_checks;
        self.field_violations += o.field_violations;
        self.crossing_checks += o.crossing_checks;
        self.crossing_violations += o.crossing_violations;
        self.barrier_checks += o.barrier_checks;
        self.barrier_violations += o.barrier_violations;
    }

    /// Violations of the window, endpoint and field invariants.
    pub fn structural_violations(&self) -> usize {
        self.window_violations + self.endpoint_violations + self.field_violations
    }
}
