//! Subsystem families, the all-unstable check and the bounded search for a
//! Schur-stable two-subsystem product `A_i^p A_j^q`.
//!
//! Subsystem indices are 1-based throughout the public API.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, mat_mul, mat_power, operator_norm, Matrix, SCHUR_MARGIN};

pub const DEFAULT_P_MAX: usize = 10;
pub const DEFAULT_Q_MAX: usize = 10;
pub const DEFAULT_M_MAX: usize = 512;

/// The subsystem matrices `A_1 .. A_N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixFamily {
    dim: usize,
    subsystems: Vec<Matrix>,
}

impl MatrixFamily {
    pub fn new(subsystems: Vec<Matrix>) -> Result<Self> {
        if subsystems.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "a family needs at least 2 subsystems, got {}",
                subsystems.len()
            )));
        }
        let dim = subsystems[0].dim();
        if let Some(bad) = subsystems.iter().find(|a| a.dim() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: bad.dim() });
        }
        Ok(Self { dim, subsystems })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of subsystems `N`.
    pub fn len(&self) -> usize {
        self.subsystems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsystems.is_empty()
    }

    /// Subsystem `A_index` for a 1-based index.
    pub fn get(&self, index: usize) -> Result<&Matrix> {
        index
            .checked_sub(1)
            .and_then(|k| self.subsystems.get(k))
            .ok_or(Error::VertexOutOfRange { vertex: index, max: self.subsystems.len() })
    }

    pub fn matrices(&self) -> &[Matrix] {
        &self.subsystems
    }

    pub fn transposed(&self) -> Self {
        Self { dim: self.dim, subsystems: self.subsystems.iter().map(Matrix::transpose).collect() }
    }
}

/// A Schur-stable product `combo = A_i^p A_j^q` and its contraction pair
/// `(m, rho)` with `||combo^m|| = rho < 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StableCombination {
    pub i: usize,
    pub j: usize,
    pub p: usize,
    pub q: usize,
    pub combo: Matrix,
    pub m: usize,
    pub rho: f64,
}

impl StableCombination {
    /// Builds the combination for a given tuple, checking stability and
    /// computing the contraction pair.
    pub fn new(family: &MatrixFamily, i: usize, j: usize, p: usize, q: usize, m_max: usize) -> Result<Self> {
        if i == j {
            return Err(Error::Precondition(format!("i and j must differ, both are {i}")));
        }
        if p == 0 || q == 0 {
            return Err(Error::Precondition("p and q must be positive".into()));
        }
        let combo = combination_product(family, i, j, p, q)?;
        let (m, rho) = compute_contraction(&combo, m_max)?;
        Ok(Self { i, j, p, q, combo, m, rho })
    }

    /// Dwell of the stable block, `p + q`.
    pub fn block_len(&self) -> usize {
        self.p + self.q
    }

    /// Re-checks the type invariants from scratch.
    pub fn validate(&self, family: &MatrixFamily) -> Result<()> {
        if self.i == self.j {
            return Err(Error::Precondition("i == j".into()));
        }
        let recomputed = combination_product(family, self.i, self.j, self.p, self.q)?;
        if recomputed != self.combo {
            return Err(Error::Precondition("combo does not equal A_i^p A_j^q".into()));
        }
        if !linalg::is_schur_stable(&self.combo, SCHUR_MARGIN)? {
            return Err(Error::Precondition("combo is not Schur stable".into()));
        }
        let norm = operator_norm(&mat_power(&self.combo, self.m)?)?;
        if !(self.rho > 0.0 && self.rho < 1.0 && norm <= self.rho) {
            return Err(Error::Precondition(format!(
                "contraction pair invalid: ||combo^{}|| = {norm}, rho = {}",
                self.m, self.rho
            )));
        }
        Ok(())
    }
}

/// `A_i^p A_j^q` for 1-based `i, j`.
pub fn combination_product(family: &MatrixFamily, i: usize, j: usize, p: usize, q: usize) -> Result<Matrix> {
    mat_mul(&mat_power(family.get(i)?, p)?, &mat_power(family.get(j)?, q)?)
}

/// 1-based indices of subsystems whose spectral radius is below `1 - tol`.
/// Empty means every subsystem is unstable.
pub fn assert_all_unstable(family: &MatrixFamily, tol: f64) -> Result<Vec<usize>> {
    let mut violating = Vec::new();
    for (k, a) in family.matrices().iter().enumerate() {
        if linalg::spectral_radius(a)? < 1.0 - tol {
            violating.push(k + 1);
        }
    }
    Ok(violating)
}

/// Bounds for [`find_stable_combination`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchBounds {
    pub p_max: usize,
    pub q_max: usize,
    pub m_max: usize,
}

impl Default for SearchBounds {
    fn default() -> Self {
        Self { p_max: DEFAULT_P_MAX, q_max: DEFAULT_Q_MAX, m_max: DEFAULT_M_MAX }
    }
}

/// Finds the first `(i, j, p, q)` with `A_i^p A_j^q` Schur stable.
///
/// Candidates are visited by total exponent `p + q` ascending, then `p`
/// ascending, then ordered pairs `(i, j)` with `i != j` lexicographically.
/// Pairs with `i == j` never qualify: `rho(A^k) = rho(A)^k >= 1` for an
/// unstable `A`. Returns `Ok(None)` when the grid is exhausted.
pub fn find_stable_combination(
    family: &MatrixFamily,
    bounds: SearchBounds,
    margin: f64,
) -> Result<Option<StableCombination>> {
    if bounds.p_max == 0 || bounds.q_max == 0 {
        return Err(Error::InvalidInput("p_max and q_max must be at least 1".into()));
    }
    let n = family.len();
    // powers[k][e] = A_{k+1}^e
    let max_exp = bounds.p_max.max(bounds.q_max);
    let mut powers = Vec::with_capacity(n);
    for a in family.matrices() {
        let mut row = vec![Matrix::identity(family.dim())];
        for e in 1..=max_exp {
            row.push(mat_mul(a, &row[e - 1])?);
        }
        powers.push(row);
    }
    for total in 2..=bounds.p_max + bounds.q_max {
        for p in 1..=bounds.p_max {
            let Some(q) = total.checked_sub(p) else { break };
            if q == 0 || q > bounds.q_max {
                continue;
            }
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let combo = mat_mul(&powers[i][p], &powers[j][q])?;
                    if linalg::is_schur_stable(&combo, margin)? {
                        let (m, rho) = compute_contraction(&combo, bounds.m_max)?;
                        return Ok(Some(StableCombination { i: i + 1, j: j + 1, p, q, combo, m, rho }));
                    }
                }
            }
        }
    }
    Ok(None)
}

/// Smallest `m` in `1..=m_max` with `||combo^m|| < 1`, and that norm.
///
/// A norm that is exactly zero (nilpotent combos) is reported as the
/// smallest positive double so that `rho` stays in `(0, 1)`.
pub fn compute_contraction(combo: &Matrix, m_max: usize) -> Result<(usize, f64)> {
    if !linalg::is_schur_stable(combo, SCHUR_MARGIN)? {
        return Err(Error::Precondition("combination is not Schur stable".into()));
    }
    let mut power = Matrix::identity(combo.dim());
    for m in 1..=m_max {
        power = mat_mul(combo, &power)?;
        let norm = operator_norm(&power)?;
        if norm < 1.0 {
            return Ok((m, norm.max(f64::MIN_POSITIVE)));
        }
    }
    Err(Error::ContractionNotFound { m_max })
}
