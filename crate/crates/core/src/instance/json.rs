//! JSON instance files:
//! `{ "n": int, "projectors": [ { "support": [int], "matrix": [[[re, im], ...], ...] } ] }`
//! with row-major matrices and an optional declared rank `"r"`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{InstanceError, LocalProjector, QsatInstance};
use crate::linalg::CMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectorFile {
    pub support: Vec<usize>,
    pub matrix: Vec<Vec<[f64; 2]>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub n: usize,
    pub projectors: Vec<ProjectorFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
}

impl InstanceFile {
    pub fn from_instance(inst: &QsatInstance) -> Self {
        let projectors = inst
            .projectors()
            .iter()
            .map(|p| {
                let m = p.matrix();
                ProjectorFile {
                    support: p.support().to_vec(),
                    matrix: (0..m.nrows())
                        .map(|row| {
                            (0..m.ncols())
                                .map(|col| [m[(row, col)].re, m[(row, col)].im])
                                .collect()
                        })
                        .collect(),
                }
            })
            .collect();
        Self {
            n: inst.n(),
            projectors,
            r: inst.declared_rank(),
        }
    }

    pub fn into_instance(self) -> Result<QsatInstance, InstanceError> {
        let projectors = self
            .projectors
            .into_iter()
            .map(|p| {
                let rows = p.matrix.len();
                let cols = p.matrix.first().map_or(0, Vec::len);
                if p.matrix.iter().any(|row| row.len() != cols) {
                    return Err(InstanceError::DimensionMismatch {
                        rows,
                        cols,
                        k: p.support.len(),
                        dim: 1 << p.support.len(),
                    });
                }
                let entries: Vec<Complex64> = p
                    .matrix
                    .iter()
                    .flatten()
                    .map(|&[re, im]| Complex64::new(re, im))
                    .collect();
                LocalProjector::new(p.support, CMatrix::from_row_slice(rows, cols, &entries))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let inst = QsatInstance::new(self.n, projectors)?;
        Ok(match self.r {
            Some(r) => inst.with_declared_rank(r),
            None => inst,
        })
    }
}

impl QsatInstance {
    pub fn from_json_str(text: &str) -> Result<Self, InstanceError> {
        let file: InstanceFile = serde_json::from_str(text)?;
        file.into_instance()
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(InstanceFile::from_instance(self)).expect("instance serializes")
    }
}
