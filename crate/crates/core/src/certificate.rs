//! Scalar stabilizability certificate.
//!
//! With `a = m(p+q)` and `b = mN`, the certificate asks for a rate `lambda > 0`
//! such that
//!
//! ```text
//! rho e^{lambda a} < 1
//! rho e^{lambda a} + N m(m+1)/2 M1^{mN-1} M2^{m-1} eps e^{lambda (a + b)} <= 1
//! ```
//!
//! where `M1 = max ||A_l||`, `M2 = ||A_i^p A_j^q||` and `eps` bounds every
//! commutator `||A_l combo - combo A_l||`.
//!
//! The second term is evaluated in log space: `M1^{mN-1}` overflows a double
//! long before the product itself stops being meaningful.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{commutator, mat_power, operator_norm};
use crate::search::{MatrixFamily, StableCombination};

/// Default absolute tolerance for the bisection on `lambda`.
pub const LAMBDA_TOL: f64 = 1e-13;
/// Certified rate is `lambda* (1 - LAMBDA_BACKOFF)`.
pub const LAMBDA_BACKOFF: f64 = 1e-6;
/// `lhs` within this distance above 1 counts as a boundary tie.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// Largest natural log representable as a finite double.
const LN_MAX: f64 = 709.782_712_893_384;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateInputs {
    pub m1: f64,
    pub m2: f64,
    pub epsilon: f64,
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub q: usize,
    pub rho: f64,
}

impl CertificateInputs {
    /// `m (p + q)`: length of `m` stable blocks.
    pub fn rate_exponent(&self) -> f64 {
        (self.m * (self.p + self.q)) as f64
    }

    /// `m N`: the plain steps that may separate `m` stable blocks.
    pub fn chain_exponent(&self) -> f64 {
        (self.m * self.n) as f64
    }

    /// `N m(m+1)/2 M1^{mN-1} M2^{m-1} eps`, the coupling coefficient, in log
    /// space. `None` when `eps == 0`.
    pub fn ln_coupling(&self) -> Option<f64> {
        if self.epsilon == 0.0 {
            return None;
        }
        let m = self.m as f64;
        let n = self.n as f64;
        Some(
            n.ln()
                + (m * (m + 1.0) / 2.0).ln()
                + (m * n - 1.0) * self.m1.ln()
                + (m - 1.0) * self.m2.ln()
                + self.epsilon.ln(),
        )
    }

    /// Coupling coefficient at `lambda = 0`; may be `+inf`.
    pub fn coupling(&self) -> f64 {
        self.ln_coupling().map_or(0.0, f64::exp)
    }

    fn validate(&self) -> Result<()> {
        let ok = self.m1.is_finite()
            && self.m2.is_finite()
            && self.m2 > 0.0
            && self.epsilon.is_finite()
            && self.epsilon >= 0.0
            && self.rho > 0.0
            && self.rho < 1.0
            && self.n >= 1
            && self.m >= 1
            && self.p >= 1
            && self.q >= 1;
        if !ok {
            return Err(Error::Precondition(format!("invalid certificate inputs {self:?}")));
        }
        Ok(())
    }
}

/// `M1`, `M2` and the exact maximal commutator norm `eps`.
pub fn compute_constants(family: &MatrixFamily, comb: &StableCombination) -> Result<CertificateInputs> {
    let mut m1 = 0.0_f64;
    let mut epsilon = 0.0_f64;
    for a in family.matrices() {
        m1 = m1.max(operator_norm(a)?);
        epsilon = epsilon.max(operator_norm(&commutator(a, &comb.combo)?)?);
    }
    Ok(CertificateInputs {
        m1,
        m2: operator_norm(&comb.combo)?,
        epsilon,
        n: family.len(),
        m: comb.m,
        p: comb.p,
        q: comb.q,
        rho: comb.rho,
    })
}

/// The rate term `rho e^{lambda m(p+q)}`.
pub fn rate_term(inputs: &CertificateInputs, lambda: f64) -> Result<f64> {
    let ln = inputs.rho.ln() + lambda * inputs.rate_exponent();
    if ln > LN_MAX {
        return Err(Error::Overflow("rate term"));
    }
    Ok(ln.exp())
}

/// Left-hand side of the certificate inequality at `lambda`.
pub fn certificate_lhs(inputs: &CertificateInputs, lambda: f64) -> Result<f64> {
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::InvalidInput(format!("lambda must be non-negative, got {lambda}")));
    }
    let first = rate_term(inputs, lambda)?;
    let second = match inputs.ln_coupling() {
        None => 0.0,
        Some(ln_c) => {
            let ln = ln_c + lambda * (inputs.rate_exponent() + inputs.chain_exponent());
            if ln > LN_MAX {
                return Err(Error::Overflow("coupling term"));
            }
            ln.exp()
        }
    };
    let lhs = first + second;
    if !lhs.is_finite() {
        return Err(Error::Overflow("certificate sum"));
    }
    Ok(lhs)
}

// Overflow means the value exceeds f64::MAX, hence exceeds 1.
fn lhs_exceeds_one(inputs: &CertificateInputs, lambda: f64) -> Result<bool> {
    match certificate_lhs(inputs, lambda) {
        Ok(v) => Ok(v > 1.0),
        Err(Error::Overflow(_)) => Ok(true),
        Err(e) => Err(e),
    }
}

/// Outcome of [`max_feasible_lambda`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum LambdaSearch {
    Feasible {
        /// Supremum of admissible rates, to within the bisection tolerance,
        /// reported from the feasible side.
        lambda: f64,
        /// True when the rate condition `rho e^{lambda m(p+q)} < 1` is what
        /// limits `lambda` (always the case when `eps == 0`).
        on_rate_boundary: bool,
    },
    Infeasible,
}

/// Supremum of `lambda > 0` satisfying both certificate inequalities.
///
/// `certificate_lhs` is strictly increasing in `lambda`, so the admissible
/// set is an interval `(0, lambda*]` capped by `-ln(rho) / m(p+q)`.
pub fn max_feasible_lambda(inputs: &CertificateInputs, tol: f64) -> Result<LambdaSearch> {
    inputs.validate()?;
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidInput("bisection tolerance must be positive".into()));
    }
    if lhs_exceeds_one(inputs, 0.0)? {
        return Ok(LambdaSearch::Infeasible);
    }
    let rate_cap = -inputs.rho.ln() / inputs.rate_exponent();
    if !lhs_exceeds_one(inputs, rate_cap)? {
        return Ok(LambdaSearch::Feasible { lambda: rate_cap, on_rate_boundary: true });
    }
    let (mut lo, mut hi) = (0.0_f64, rate_cap);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if lhs_exceeds_one(inputs, mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let on_rate_boundary = rate_cap - lo <= tol;
    Ok(LambdaSearch::Feasible { lambda: lo, on_rate_boundary })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CertifyOptions {
    /// Rate to certify; `None` certifies at `lambda* (1 - 1e-6)`.
    pub lambda: Option<f64>,
    /// Replaces the computed maximal commutator norm with a user bound.
    pub epsilon_override: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub inputs: CertificateInputs,
    /// Rate the inequalities were evaluated at.
    pub lambda: f64,
    /// Supremum rate, when any rate is admissible.
    pub lambda_star: Option<f64>,
    /// `rho e^{lambda m(p+q)}`.
    pub rate_value: f64,
    /// Left-hand side; `+inf` when it overflows.
    pub lhs_value: f64,
    pub feasible: bool,
    /// Feasible with `lhs` within `1e-12` of 1.
    pub boundary: bool,
    /// `1 - lhs_value`.
    pub margin: f64,
    /// Envelope constant from exhaustive enumeration, filled in by the caller.
    pub c_induction: Option<f64>,
}

/// Evaluates the certificate for a family and its stable combination.
pub fn check_certificate(
    family: &MatrixFamily,
    comb: &StableCombination,
    options: CertifyOptions,
) -> Result<Certificate> {
    let mut inputs = compute_constants(family, comb)?;
    if let Some(eps) = options.epsilon_override {
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(Error::InvalidInput(format!("epsilon override must be finite and >= 0, got {eps}")));
        }
        inputs.epsilon = eps;
    }
    certify_inputs(&inputs, options.lambda)
}

/// Certificate from precomputed inputs.
pub fn certify_inputs(inputs: &CertificateInputs, lambda: Option<f64>) -> Result<Certificate> {
    inputs.validate()?;
    let lambda_star = match max_feasible_lambda(inputs, LAMBDA_TOL)? {
        LambdaSearch::Feasible { lambda, .. } => Some(lambda),
        LambdaSearch::Infeasible => None,
    };
    let lambda = match lambda {
        Some(l) if !(l >= 0.0 && l.is_finite()) => {
            return Err(Error::InvalidInput(format!("lambda must be finite and >= 0, got {l}")));
        }
        Some(l) => l,
        None => lambda_star.map_or(0.0, |l| l * (1.0 - LAMBDA_BACKOFF)),
    };
    let rate_value = rate_term(inputs, lambda).unwrap_or(f64::INFINITY);
    let lhs_value = match certificate_lhs(inputs, lambda) {
        Ok(v) => v,
        Err(Error::Overflow(_)) => f64::INFINITY,
        Err(e) => return Err(e),
    };
    let within = lhs_value <= 1.0 + BOUNDARY_TOL;
    let feasible = lambda > 0.0 && rate_value < 1.0 && within;
    Ok(Certificate {
        inputs: *inputs,
        lambda,
        lambda_star,
        rate_value,
        lhs_value,
        feasible,
        boundary: feasible && lhs_value > 1.0 - BOUNDARY_TOL,
        margin: 1.0 - lhs_value,
        c_induction: None,
    })
}

/// Re-derives the contraction pair for every `m` in `comb.m..=m_sweep_max`
/// and keeps the one with the largest `lambda*`. Ties keep the smaller `m`.
pub fn sweep_contraction(
    family: &MatrixFamily,
    comb: &StableCombination,
    m_sweep_max: usize,
) -> Result<StableCombination> {
    let base = compute_constants(family, comb)?;
    let mut best = comb.clone();
    let mut best_lambda = lambda_star_or_neg(&base)?;
    let mut power = mat_power(&comb.combo, comb.m)?;
    for m in comb.m + 1..=m_sweep_max {
        power = crate::linalg::mat_mul(&comb.combo, &power)?;
        let rho = operator_norm(&power)?;
        if rho >= 1.0 {
            continue;
        }
        let rho = rho.max(f64::MIN_POSITIVE);
        let inputs = CertificateInputs { m, rho, ..base };
        let lambda = lambda_star_or_neg(&inputs)?;
        if lambda > best_lambda {
            best_lambda = lambda;
            best = StableCombination { m, rho, ..comb.clone() };
        }
    }
    Ok(best)
}

fn lambda_star_or_neg(inputs: &CertificateInputs) -> Result<f64> {
    Ok(match max_feasible_lambda(inputs, LAMBDA_TOL)? {
        LambdaSearch::Feasible { lambda, .. } => lambda,
        LambdaSearch::Infeasible => f64::NEG_INFINITY,
    })
}
