//! Instance files and random instances.
//!
//! An instance is a JSON document:
//!
//! ```json
//! { "dim": 2, "matrices": [[[1.2, 0.0], [0.0, 0.4]], [[0.4, 0.0], [0.0, 1.2]]],
//!   "name": "diagonal", "seed": null }
//! ```
//!
//! Matrices are row-major nested arrays. Doubles are written in shortest
//! round-trip form, so write-then-parse is bit-exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{spectral_radius, Matrix, SCHUR_MARGIN};
use crate::rng;
use crate::search::MatrixFamily;

/// Draw cap per matrix in [`generate_random_instance`].
pub const RESAMPLE_CAP: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub dim: usize,
    pub matrices: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl InstanceFile {
    pub fn from_family(family: &MatrixFamily, name: Option<String>, seed: Option<u64>) -> Self {
        Self { dim: family.dim(), matrices: family.matrices().iter().map(Matrix::rows).collect(), name, seed }
    }

    /// Validates shapes and builds the family. Errors name the matrix and row.
    pub fn to_family(&self) -> Result<MatrixFamily> {
        if self.dim == 0 {
            return Err(Error::Parse("dim must be at least 1".into()));
        }
        let mut out = Vec::with_capacity(self.matrices.len());
        for (k, rows) in self.matrices.iter().enumerate() {
            if rows.len() != self.dim {
                return Err(Error::Parse(format!(
                    "matrix {k}: {} rows, expected dim = {}",
                    rows.len(),
                    self.dim
                )));
            }
            let mut data = Vec::with_capacity(self.dim * self.dim);
            for (r, row) in rows.iter().enumerate() {
                if row.len() != self.dim {
                    return Err(Error::Parse(format!(
                        "matrix {k}, row {r}: {} entries, expected dim = {}",
                        row.len(),
                        self.dim
                    )));
                }
                if let Some(c) = row.iter().position(|v| !v.is_finite()) {
                    return Err(Error::Parse(format!("matrix {k}, row {r}, column {c}: non-finite entry")));
                }
                data.extend_from_slice(row);
            }
            out.push(Matrix::from_row_major(self.dim, data)?);
        }
        MatrixFamily::new(out).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serialization is infallible") + "\n"
    }
}

/// Parses instance text. JSON syntax errors carry line and column.
pub fn parse_instance_str(text: &str) -> Result<MatrixFamily> {
    let file: InstanceFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    file.to_family()
}

pub fn parse_instance(path: impl AsRef<Path>) -> Result<MatrixFamily> {
    parse_instance_str(&std::fs::read_to_string(path)?)
}

pub fn write_instance(path: impl AsRef<Path>, file: &InstanceFile) -> Result<()> {
    std::fs::write(path, file.to_json())?;
    Ok(())
}

/// A random family plus how many draws it took.
#[derive(Clone, Debug, PartialEq)]
pub struct RandomInstance {
    pub family: MatrixFamily,
    pub draws: usize,
}

impl RandomInstance {
    /// Fraction of draws that were unstable.
    pub fn acceptance_rate(&self) -> f64 {
        self.family.len() as f64 / self.draws as f64
    }
}

/// `n` matrices of size `d x d`, entries uniform on `[-1, 1)`, each redrawn
/// until its spectral radius is at least `1 - 1e-9`.
pub fn generate_random_instance(n: usize, d: usize, seed: u64) -> Result<RandomInstance> {
    if n < 2 || d < 1 {
        return Err(Error::InvalidInput(format!("need N >= 2 and d >= 1, got N = {n}, d = {d}")));
    }
    let mut rng = rng::seeded(seed);
    let mut matrices = Vec::with_capacity(n);
    let mut draws = 0;
    for index in 0..n {
        let mut accepted = None;
        for _ in 0..RESAMPLE_CAP {
            draws += 1;
            let data: Vec<f64> = (0..d * d).map(|_| rng::symmetric_f64(&mut rng)).collect();
            let a = Matrix::from_row_major(d, data)?;
            if spectral_radius(&a)? >= 1.0 - SCHUR_MARGIN {
                accepted = Some(a);
                break;
            }
        }
        matrices.push(accepted.ok_or(Error::ResampleCap { index, cap: RESAMPLE_CAP })?);
    }
    Ok(RandomInstance { family: MatrixFamily::new(matrices)?, draws })
}
