//! Trajectories and product norms of the switched system
//! `x(t+1) = A_{sigma(t)} x(t)`, plus exponential-envelope checks and fits.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SwitchingSignal;
use crate::linalg::{mat_mul, operator_norm, Matrix, Vector};
use crate::search::MatrixFamily;

pub const DEFAULT_HORIZON: usize = 200;
pub const DEFAULT_TRIALS: usize = 100;
/// Norms below this are dropped before taking logs in [`fit_decay`].
pub const FIT_FLOOR: f64 = 1e-300;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<Vector>,
    pub norms: Vec<f64>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.states.len() - 1
    }

    /// CSV with header `t,norm` (or `t,norm,x1..xd`), 17 significant digits.
    pub fn to_csv(&self, with_states: bool) -> String {
        let mut out = String::from("t,norm");
        if with_states {
            for k in 1..=self.states[0].dim() {
                let _ = write!(out, ",x{k}");
            }
        }
        out.push('\n');
        for (t, (x, n)) in self.states.iter().zip(&self.norms).enumerate() {
            let _ = write!(out, "{t},{}", fmt17(*n));
            if with_states {
                for v in x.as_slice() {
                    let _ = write!(out, ",{}", fmt17(*v));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// A double with 17 significant digits, enough to round-trip.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// CSV with header `t,norm` for a bare norm sequence.
pub fn norms_to_csv(norms: &[f64]) -> String {
    let mut out = String::from("t,norm\n");
    for (t, n) in norms.iter().enumerate() {
        let _ = writeln!(out, "{t},{}", fmt17(*n));
    }
    out
}

fn check_horizon<'a>(family: &'a MatrixFamily, signal: &SwitchingSignal, horizon: usize) -> Result<Vec<&'a Matrix>> {
    if horizon > signal.duration() {
        return Err(Error::TimeOutOfRange { t: horizon, duration: signal.duration() });
    }
    signal.expand()[..horizon].iter().map(|&s| family.get(s)).collect()
}

/// States `x(0..=horizon)`, one left-multiplication per step.
pub fn simulate(family: &MatrixFamily, signal: &SwitchingSignal, x0: &Vector, horizon: usize) -> Result<Trajectory> {
    if x0.dim() != family.dim() {
        return Err(Error::DimensionMismatch { expected: family.dim(), found: x0.dim() });
    }
    let steps = check_horizon(family, signal, horizon)?;
    let mut states = Vec::with_capacity(horizon + 1);
    states.push(x0.clone());
    for a in steps {
        let next = a.mul_vec(states.last().unwrap())?;
        states.push(next);
    }
    let norms = states.iter().map(Vector::norm).collect();
    Ok(Trajectory { states, norms })
}

/// `||A_{sigma(t-1)} ... A_{sigma(0)}||` for `t = 0..=horizon`; entry 0 is 1.
pub fn product_norms(family: &MatrixFamily, signal: &SwitchingSignal, horizon: usize) -> Result<Vec<f64>> {
    let steps = check_horizon(family, signal, horizon)?;
    let mut product = Matrix::identity(family.dim());
    let mut norms = Vec::with_capacity(horizon + 1);
    norms.push(1.0);
    for a in steps {
        product = mat_mul(a, &product)?;
        norms.push(operator_norm(&product)?);
    }
    Ok(norms)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GesCheck {
    pub holds: bool,
    /// `min_t (c e^{-lambda t} - norms[t])` over `t >= 1`; `+inf` if there is
    /// no such `t`.
    pub worst_margin: f64,
    pub worst_t: usize,
}

/// Checks `norms[t] <= c e^{-lambda t}` for every `t >= 1`.
pub fn verify_ges(norms: &[f64], c: f64, lambda: f64) -> Result<GesCheck> {
    if !(c > 0.0 && lambda > 0.0) {
        return Err(Error::InvalidInput(format!("need c > 0 and lambda > 0, got c = {c}, lambda = {lambda}")));
    }
    let mut check = GesCheck { holds: true, worst_margin: f64::INFINITY, worst_t: 0 };
    for (t, &n) in norms.iter().enumerate().skip(1) {
        let margin = c * (-lambda * t as f64).exp() - n;
        if margin < check.worst_margin {
            check.worst_margin = margin;
            check.worst_t = t;
        }
    }
    check.holds = check.worst_margin >= 0.0;
    Ok(check)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub c_hat: f64,
    pub lambda_hat: f64,
}

/// Least-squares line through `(t, ln norms[t])`; `c_hat = e^{intercept}`,
/// `lambda_hat = -slope`.
pub fn fit_decay(norms: &[f64]) -> Result<DecayFit> {
    let points: Vec<(f64, f64)> = norms
        .iter()
        .enumerate()
        .filter(|(_, &n)| n >= FIT_FLOOR && n.is_finite())
        .map(|(t, &n)| (t as f64, n.ln()))
        .collect();
    if points.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "decay fit needs at least 2 positive norms, got {}",
            points.len()
        )));
    }
    let k = points.len() as f64;
    let mean_t = points.iter().map(|p| p.0).sum::<f64>() / k;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_t).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_t) * (p.1 - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_t;
    Ok(DecayFit { c_hat: intercept.exp(), lambda_hat: -slope })
}
