use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::MinMaxProblem;
use crate::scalar::Scalar;

use super::cps::CpsCertificate;

/// Which distance to `F` condition (1) is measured with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMode {
    Norm,
    Delta,
}

impl FromStr for DistanceMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "norm" => Ok(DistanceMode::Norm),
            "delta" => Ok(DistanceMode::Delta),
            _ => Err(Error::Usage(format!("mode must be `norm` or `delta`, got `{s}`"))),
        }
    }
}

impl std::fmt::Display for DistanceMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DistanceMode::Norm => "norm",
            DistanceMode::Delta => "delta",
        })
    }
}

/// One (CPS) condition along the sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionReport<T> {
    pub name: &'static str,
    pub values: Vec<T>,
    /// Explicit bound at each n.
    pub bounds: Vec<T>,
    /// `max_{j >= k} values_j`: the smallest nonincreasing upper envelope.
    pub monotone_envelope: Vec<T>,
    /// Smallest `C` with `values_n <= C / n^p` (p = 1, or 2 for the value gap).
    pub rate_constant: T,
    pub within_bounds: Vec<bool>,
    pub passed: bool,
}

/// Report of [`check_cps`].
#[derive(Clone, Debug, PartialEq)]
pub struct CpsDiagnostics<T> {
    pub mode: DistanceMode,
    /// Distance to F, value gap `Φ − γ`, scaled min-norm.
    pub conditions: [ConditionReport<T>; 3],
    /// `min dist_δ / dist_norm` over iterates off F, when F is bounded.
    pub bounded_ratio: Option<T>,
    pub warnings: Vec<String>,
}

impl<T: Scalar> CpsDiagnostics<T> {
    pub fn passed(&self) -> bool {
        self.conditions.iter().all(|c| c.passed)
    }
}

fn condition<T: Scalar>(
    name: &'static str,
    ns: &[usize],
    values: Vec<T>,
    bounds: Vec<T>,
    lower: Option<Vec<T>>,
    power: i32,
) -> ConditionReport<T> {
    let mut env = values.clone();
    for k in (0..env.len().saturating_sub(1)).rev() {
        env[k] = env[k].max(env[k + 1]);
    }
    let rate_constant = values
        .iter()
        .zip(ns)
        .map(|(&v, &n)| v.abs() * T::lit((n as f64).powi(power)))
        .fold(T::zero(), T::max);
    let within: Vec<bool> = values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let low_ok = lower.as_ref().is_none_or(|l| v >= l[i]);
            low_ok && v <= bounds[i] && !v.is_nan()
        })
        .collect();
    ConditionReport {
        name,
        passed: within.iter().all(|&b| b),
        values,
        bounds,
        monotone_envelope: env,
        rate_constant,
        within_bounds: within,
    }
}

/// Checks the three (CPS) conditions against their explicit envelopes.
pub fn check_cps<T: Scalar>(
    certs: &[CpsCertificate<T>],
    problem: &MinMaxProblem<T>,
    mode: DistanceMode,
) -> Result<CpsDiagnostics<T>> {
    if certs.len() < 2 {
        return Err(Error::Usage(format!(
            "check_cps needs at least 2 certificates, got {}",
            certs.len()
        )));
    }
    let ns: Vec<usize> = certs.iter().map(|c| c.n).collect();
    let three_halves = T::lit(1.5);
    let dist: Vec<T> = certs
        .iter()
        .map(|c| match mode {
            DistanceMode::Norm => c.dist_norm_f,
            DistanceMode::Delta => c.dist_delta_f,
        })
        .collect();
    let dist_bounds = certs.iter().map(|c| three_halves * c.eps + c.cert_tol).collect();
    let gap: Vec<T> = certs.iter().map(|c| c.phi_val - c.gamma_est).collect();
    let gap_hi = certs
        .iter()
        .map(|c| T::lit(1.25) * c.eps * c.eps + c.cert_tol)
        .collect();
    let gap_lo = certs.iter().map(|c| -c.cert_tol).collect();
    let norm: Vec<T> = certs.iter().map(|c| c.scaled_min_norm).collect();
    let norm_bounds = certs.iter().map(|c| three_halves * c.eps + c.cert_tol).collect();

    let mut warnings = Vec::new();
    let bounded = problem.separator.is_bounded();
    if mode == DistanceMode::Norm && !bounded {
        warnings.push(
            "WARNING: norm mode needs a bounded separating set for the norm and δ distances to be equivalent; F here is unbounded"
                .to_string(),
        );
    }
    // iterates on F itself carry no ratio information
    let bounded_ratio = certs
        .iter()
        .filter(|c| bounded && c.dist_norm_f > T::zero())
        .map(|c| c.dist_delta_f / c.dist_norm_f)
        .reduce(T::min);
    Ok(CpsDiagnostics {
        mode,
        conditions: [
            condition("dist_to_F", &ns, dist, dist_bounds, None, 1),
            condition("value_gap", &ns, gap, gap_hi, Some(gap_lo), 2),
            condition("scaled_min_norm", &ns, norm, norm_bounds, None, 1),
        ],
        bounded_ratio,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{problem_library, Point};
    use crate::solver::CertChecks;

    fn cert(n: usize, x: f64, dist: f64) -> CpsCertificate<f64> {
        CpsCertificate {
            n,
            eps: 1.0 / n as f64,
            x: Point::from_f64(&[x, 0.0]).unwrap(),
            phi_val: 1.0,
            min_norm: 0.0,
            scaled_min_norm: 0.0,
            dist_delta_f: dist,
            dist_norm_f: dist,
            gamma_est: 1.0,
            cert_tol: 2e-6,
            t_bar: 0.5,
            checks: CertChecks {
                min_norm: true,
                phi: true,
                dist: true,
            },
        }
    }

    #[test]
    fn fake_sequence_far_from_f_fails_condition_one() {
        let p = problem_library::<f64>("smooth_double_well").unwrap();
        let certs: Vec<_> = (3..8).map(|n| cert(n, 5.0, 2.0)).collect();
        let d = check_cps(&certs, &p, DistanceMode::Delta).unwrap();
        assert!(!d.conditions[0].passed);
        assert!(d.conditions[1].passed && d.conditions[2].passed);
        assert!(!d.passed());
    }

    #[test]
    fn norm_mode_on_unbounded_f_warns() {
        let p = problem_library::<f64>("smooth_double_well").unwrap();
        let certs: Vec<_> = (3..6).map(|n| cert(n, 0.0, 0.0)).collect();
        let d = check_cps(&certs, &p, DistanceMode::Norm).unwrap();
        assert!(d.passed());
        assert!(d.warnings[0].starts_with("WARNING"));
        assert!(d.bounded_ratio.is_none());
        let ring = problem_library::<f64>("smooth_double_well_ring").unwrap();
        let d = check_cps(&certs, &ring, DistanceMode::Norm).unwrap();
        assert!(d.warnings.is_empty());
    }

    #[test]
    fn single_certificate_is_a_usage_error() {
        let p = problem_library::<f64>("smooth_double_well").unwrap();
        assert!(matches!(
            check_cps(&[cert(3, 0.0, 0.0)], &p, DistanceMode::Delta),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn monotone_envelope_is_suffix_max() {
        let p = problem_library::<f64>("smooth_double_well").unwrap();
        let certs = vec![cert(3, 0.0, 0.1), cert(4, 0.0, 0.05), cert(5, 0.0, 0.2)];
        let d = check_cps(&certs, &p, DistanceMode::Delta).unwrap();
        assert_eq!(d.conditions[0].monotone_envelope, vec![0.2, 0.2, 0.2]);
        assert!((d.conditions[0].rate_constant - 1.0).abs() < 1e-12);
    }
}
