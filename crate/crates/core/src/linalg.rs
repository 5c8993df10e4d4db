//! Dense real-matrix kernels for small square systems.
//!
//! Products and powers are hand-written so that their evaluation order is
//! fixed (the simulator relies on it). Spectra and singular values are
//! delegated to `nalgebra` with an explicit tolerance and iteration cap.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance handed to the eigenvalue and singular-value iterations.
pub const SPECTRAL_TOL: f64 = 1e-12;
/// Iteration cap for the eigenvalue and singular-value iterations.
pub const SPECTRAL_MAX_ITER: usize = 10_000;
/// Margin below 1 that a spectral radius must clear to count as Schur stable.
pub const SCHUR_MARGIN: f64 = 1e-9;

/// Square matrix stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    dim: usize,
    data: Vec<f64>,
}

/// Column vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vector {
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major entries. Rejects empty, non-square or
    /// non-finite input.
    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("matrix dimension must be at least 1".into()));
        }
        if data.len() != dim * dim {
            return Err(Error::InvalidInput(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                data.len()
            )));
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "entry ({}, {}) is {}",
                k / dim,
                k % dim,
                data[k]
            )));
        }
        Ok(Self { dim, data })
    }

    /// Builds a matrix from nested rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for (r, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::InvalidInput(format!(
                    "row {r} has {} entries, expected {dim}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Self::from_row_major(dim, data)
    }

    pub fn identity(dim: usize) -> Self {
        let mut data = vec![0.0; dim * dim];
        for k in 0..dim {
            data[k * dim + k] = 1.0;
        }
        Self { dim, data }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![0.0; dim * dim] }
    }

    pub fn diag(entries: &[f64]) -> Result<Self> {
        let dim = entries.len();
        let mut data = vec![0.0; dim * dim];
        for (k, v) in entries.iter().enumerate() {
            data[k * dim + k] = *v;
        }
        Self::from_row_major(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.dim + col]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.dim).map(<[f64]>::to_vec).collect()
    }

    pub fn transpose(&self) -> Self {
        let n = self.dim;
        let mut data = vec![0.0; n * n];
        for r in 0..n {
            for c in 0..n {
                data[c * n + r] = self.data[r * n + c];
            }
        }
        Self { dim: n, data }
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        check_dims(self, other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Matrix { dim: self.dim, data })
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        check_dims(self, other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Matrix { dim: self.dim, data })
    }

    pub fn scale(&self, factor: f64) -> Matrix {
        Matrix { dim: self.dim, data: self.data.iter().map(|v| v * factor).collect() }
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn mul_vec(&self, x: &Vector) -> Result<Vector> {
        if x.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: x.dim() });
        }
        let n = self.dim;
        let data = (0..n)
            .map(|r| {
                let row = &self.data[r * n..(r + 1) * n];
                row.iter().zip(&x.data).map(|(a, b)| a * b).sum()
            })
            .collect();
        Ok(Vector { data })
    }

    fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.data)
    }
}

impl Vector {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::InvalidInput("vector dimension must be at least 1".into()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("vector has a non-finite entry".into()));
        }
        Ok(Self { data })
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Euclidean norm.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

fn check_dims(a: &Matrix, b: &Matrix) -> Result<()> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch { expected: a.dim, found: b.dim });
    }
    Ok(())
}

/// Matrix product `a * b`.
pub fn mat_mul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    check_dims(a, b)?;
    let n = a.dim;
    let mut out = vec![0.0; n * n];
    for r in 0..n {
        for k in 0..n {
            let lhs = a.data[r * n + k];
            for c in 0..n {
                out[r * n + c] += lhs * b.data[k * n + c];
            }
        }
    }
    let out = Matrix { dim: n, data: out };
    if !out.is_finite() {
        return Err(Error::NonFinite("matrix product overflowed".into()));
    }
    Ok(out)
}

/// `a^k` by iterated left multiplication, `a^k = a * a^(k-1)`.
///
/// Repeated squaring is deliberately not used: the result must agree with the
/// step-by-step products formed by the simulator.
pub fn mat_power(a: &Matrix, k: usize) -> Result<Matrix> {
    let mut acc = Matrix::identity(a.dim);
    for _ in 0..k {
        acc = mat_mul(a, &acc)?;
    }
    Ok(acc)
}

/// `a * b - b * a`.
pub fn commutator(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    mat_mul(a, b)?.sub(&mat_mul(b, a)?)
}

/// Spectral radius with the default tolerance and iteration cap.
pub fn spectral_radius(a: &Matrix) -> Result<f64> {
    spectral_radius_with(a, SPECTRAL_TOL, SPECTRAL_MAX_ITER)
}

/// Largest eigenvalue modulus, computed from a real Schur decomposition.
pub fn spectral_radius_with(a: &Matrix, tol: f64, max_iter: usize) -> Result<f64> {
    if !a.is_finite() {
        return Err(Error::NonFinite("spectral radius of a non-finite matrix".into()));
    }
    if a.dim == 1 {
        return Ok(a.data[0].abs());
    }
    let schur = nalgebra::linalg::Schur::try_new(a.to_nalgebra(), tol, max_iter)
        .ok_or(Error::NoConvergence("eigenvalue iteration"))?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .fold(0.0_f64, |acc, z| acc.max(z.norm())))
}

/// Stability class of a matrix relative to the unit circle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    /// `rho < 1 - margin`.
    Stable,
    /// `rho` within `margin` of 1 on either side.
    Marginal,
    /// `rho > 1 + margin`.
    Unstable,
}

pub fn classify(a: &Matrix, margin: f64) -> Result<Stability> {
    let rho = spectral_radius(a)?;
    Ok(if rho < 1.0 - margin {
        Stability::Stable
    } else if rho <= 1.0 + margin {
        Stability::Marginal
    } else {
        Stability::Unstable
    })
}

/// True iff the spectral radius is below `1 - margin`.
pub fn is_schur_stable(a: &Matrix, margin: f64) -> Result<bool> {
    Ok(classify(a, margin)? == Stability::Stable)
}

/// Induced 2-norm (largest singular value).
pub fn operator_norm(a: &Matrix) -> Result<f64> {
    if !a.is_finite() {
        return Err(Error::NonFinite("norm of a non-finite matrix".into()));
    }
    if a.dim == 1 {
        return Ok(a.data[0].abs());
    }
    if a.dim == 2 {
        return Ok(norm_2x2(&a.data));
    }
    let svd = nalgebra::linalg::SVD::try_new(a.to_nalgebra(), false, false, f64::EPSILON, SPECTRAL_MAX_ITER)
        .ok_or(Error::NoConvergence("singular value iteration"))?;
    Ok(svd.singular_values.iter().fold(0.0_f64, |acc, s| acc.max(*s)))
}

// Closed form for 2x2: sigma_max = (sqrt((a+d)^2+(c-b)^2) + sqrt((a-d)^2+(b+c)^2)) / 2.
// Uses hypot throughout so tiny and huge entries stay accurate.
fn norm_2x2(m: &[f64]) -> f64 {
    let (a, b, c, d) = (m[0], m[1], m[2], m[3]);
    let s = (a + d).hypot(c - b);
    let t = (a - d).hypot(b + c);
    0.5 * (s + t)
}
