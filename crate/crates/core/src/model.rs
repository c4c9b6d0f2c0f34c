use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// A completed-matrix estimate, stored densely or as factors `U Vᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub enum CompletionModel {
    Dense(Matrix),
    Factored { u: Matrix, v: Matrix },
}

impl CompletionModel {
    pub fn factored(u: Matrix, v: Matrix) -> Result<Self> {
        if u.ncols() != v.ncols() {
            return Err(Error::ShapeMismatch { expected: (u.nrows(), u.ncols()), found: (v.nrows(), v.ncols()) });
        }
        if u.ncols() > u.nrows().min(v.nrows()) {
            return Err(Error::InvalidParameter(format!("factor rank {} exceeds min(n, m) = {}", u.ncols(), u.nrows().min(v.nrows()))));
        }
        Ok(Self::Factored { u, v })
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            Self::Dense(x) => x.shape(),
            Self::Factored { u, v } => (u.nrows(), v.nrows()),
        }
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match self {
            Self::Dense(x) => x[(i, j)],
            Self::Factored { u, v } => u.row(i).dot(&v.row(j)),
        }
    }

    pub fn to_dense(&self) -> Matrix {
        match self {
            Self::Dense(x) => x.clone(),
            Self::Factored { u, v } => u * v.transpose(),
        }
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer(writer, &ModelJson::from(self))?;
        Ok(())
    }

    pub fn read_json<R: Read>(reader: R) -> Result<Self> {
        let doc: ModelJson = serde_json::from_reader(reader)?;
        doc.try_into()
    }
}

/// Wire form: `{"dense": [[row], …]}` or `{"U": [[row], …], "V": [[row], …]}`,
/// with matrices as row-major nested arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelJson {
    Dense {
        dense: Vec<Vec<f64>>,
    },
    Factored {
        #[serde(rename = "U")]
        u: Vec<Vec<f64>>,
        #[serde(rename = "V")]
        v: Vec<Vec<f64>>,
    },
}

fn rows_of(x: &Matrix) -> Vec<Vec<f64>> {
    (0..x.nrows()).map(|i| x.row(i).iter().copied().collect()).collect()
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().find(|r| r.len() != m) {
        return Err(Error::ShapeMismatch { expected: (n, m), found: (n, bad.len()) });
    }
    Ok(Matrix::from_fn(n, m, |i, j| rows[i][j]))
}

impl From<&CompletionModel> for ModelJson {
    fn from(model: &CompletionModel) -> Self {
        match model {
            CompletionModel::Dense(x) => ModelJson::Dense { dense: rows_of(x) },
            CompletionModel::Factored { u, v } => ModelJson::Factored { u: rows_of(u), v: rows_of(v) },
        }
    }
}

impl TryFrom<ModelJson> for CompletionModel {
    type Error = Error;

    fn try_from(doc: ModelJson) -> Result<Self> {
        match doc {
            ModelJson::Dense { dense } => Ok(CompletionModel::Dense(matrix_from_rows(&dense)?)),
            ModelJson::Factored { u, v } => CompletionModel::factored(matrix_from_rows(&u)?, matrix_from_rows(&v)?),
        }
    }
}
