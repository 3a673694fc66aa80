//! Observations, design matrices and rank diagnostics.
//!
//! A [`Dataset`] holds `n` tuples `(Y_i, X_i)` with named regressors. The
//! [`DesignMatrix`] built from it prepends the intercept column, so column 0
//! is identically one and coefficient index 0 always means the intercept.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::RANK_TOLERANCE;

pub const INTERCEPT_LABEL: &str = "(Intercept)";

/// Observed response and regressors, validated on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    response_name: String,
    names: Vec<String>,
    response: DVector<f64>,
    regressors: DMatrix<f64>,
}

/// JSON fixture form: `{response_name, names, response, regressors: [[row]..]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct DatasetJson {
    response_name: String,
    names: Vec<String>,
    response: Vec<f64>,
    regressors: Vec<Vec<f64>>,
}

impl Dataset {
    /// Builds a dataset from row-major regressor values.
    pub fn new(
        response_name: impl Into<String>,
        names: Vec<String>,
        response: Vec<f64>,
        rows: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let response_name = response_name.into();
        let n = response.len();
        if n == 0 {
            return Err(Error::EmptyInput("dataset has no observations".into()));
        }
        if rows.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: rows.len(),
            });
        }
        let p = names.len();
        let mut seen = HashSet::new();
        for name in names.iter().chain(std::iter::once(&response_name)) {
            if name.is_empty() || !seen.insert(name.as_str()) {
                return Err(Error::BadColumnName(name.clone()));
            }
        }
        let mut regressors = DMatrix::<f64>::zeros(n, p);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(Error::Dimension {
                    expected: p,
                    got: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        row: i + 1,
                        column: names[j].clone(),
                    });
                }
                regressors[(i, j)] = v;
            }
        }
        if let Some(i) = response.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: i + 1,
                column: response_name,
            });
        }
        Ok(Dataset {
            response_name,
            names,
            response: DVector::from_vec(response),
            regressors,
        })
    }

    pub fn n(&self) -> usize {
        self.response.len()
    }

    pub fn p(&self) -> usize {
        self.names.len()
    }

    pub fn response(&self) -> &DVector<f64> {
        &self.response
    }

    pub fn regressors(&self) -> &DMatrix<f64> {
        &self.regressors
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn response_name(&self) -> &str {
        &self.response_name
    }

    /// Row `i` of the regressor matrix.
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.regressors.row(i).iter().copied().collect()
    }

    /// Dataset made of the given rows, in the given order (repeats allowed).
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let p = self.p();
        let response = DVector::from_iterator(indices.len(), indices.iter().map(|&i| self.response[i]));
        let regressors = DMatrix::from_fn(indices.len(), p, |r, c| self.regressors[(indices[r], c)]);
        Dataset {
            response_name: self.response_name.clone(),
            names: self.names.clone(),
            response,
            regressors,
        }
    }

    /// Same regressors, different response.
    pub fn with_response(&self, response: DVector<f64>) -> Result<Dataset> {
        if response.len() != self.n() {
            return Err(Error::Dimension {
                expected: self.n(),
                got: response.len(),
            });
        }
        Ok(Dataset {
            response,
            ..self.clone()
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let rows = (0..self.n()).map(|i| self.row(i)).collect();
        let doc = DatasetJson {
            response_name: self.response_name.clone(),
            names: self.names.clone(),
            response: self.response.iter().copied().collect(),
            regressors: rows,
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Dataset> {
        let doc: DatasetJson = serde_json::from_str(text)?;
        Dataset::new(doc.response_name, doc.names, doc.response, doc.regressors)
    }

    /// Writes the dataset as CSV (response first). Values use the shortest
    /// round-trip decimal form, so reloading is bit-identical.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![self.response_name.clone()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec = vec![self.response[i].to_string()];
            rec.extend(self.regressors.row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

/// Reads `response` and `regressors` columns from a headed CSV file.
pub fn load_csv(path: impl AsRef<Path>, response: &str, regressors: &[&str]) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, response, regressors)
}

/// [`load_csv`] over any reader.
pub fn read_csv<R: std::io::Read>(input: R, response: &str, regressors: &[&str]) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = reader.headers()?.clone();
    if headers.is_empty() {
        return Err(Error::EmptyInput("no header row".into()));
    }
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let y_col = find(response)?;
    let x_cols = regressors.iter().map(|r| find(r)).collect::<Result<Vec<_>>>()?;

    let mut ys = Vec::new();
    let mut rows = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record?;
        let row_no = k + 1;
        let cell = |col: usize, name: &str| -> Result<f64> {
            let raw = record.get(col).unwrap_or("");
            let v: f64 = raw.trim().parse().map_err(|_| Error::Parse {
                row: row_no,
                column: name.to_string(),
                value: raw.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    row: row_no,
                    column: name.to_string(),
                });
            }
            Ok(v)
        };
        ys.push(cell(y_col, response)?);
        rows.push(
            x_cols
                .iter()
                .zip(regressors)
                .map(|(&c, name)| cell(c, name))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    if ys.is_empty() {
        return Err(Error::EmptyInput("no data rows".into()));
    }
    Dataset::new(
        response,
        regressors.iter().map(|s| s.to_string()).collect(),
        ys,
        rows,
    )
}

/// `n × (p+1)` matrix whose first column is all ones.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    matrix: DMatrix<f64>,
    labels: Vec<String>,
}

impl DesignMatrix {
    /// Wraps a matrix that already carries the intercept column.
    pub fn from_matrix(matrix: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        if labels.len() != matrix.ncols() {
            return Err(Error::Dimension {
                expected: matrix.ncols(),
                got: labels.len(),
            });
        }
        if matrix.ncols() == 0 || matrix.column(0).iter().any(|&v| v != 1.0) {
            return Err(Error::Invalid("design column 0 must be all ones".into()));
        }
        Ok(DesignMatrix { matrix, labels })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    /// Number of columns, `p + 1`.
    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.matrix.row(i).iter().copied().collect()
    }

    /// The regressor block, i.e. the design without its intercept column.
    pub fn regressors(&self) -> DMatrix<f64> {
        self.matrix.columns(1, self.ncols() - 1).into_owned()
    }

    /// Copy with column `j` multiplied by `c`.
    pub fn scale_column(&self, j: usize, c: f64) -> DesignMatrix {
        let mut m = self.matrix.clone();
        m.column_mut(j).scale_mut(c);
        DesignMatrix {
            matrix: m,
            labels: self.labels.clone(),
        }
    }
}

pub fn build_design(ds: &Dataset) -> DesignMatrix {
    let n = ds.n();
    let p = ds.p();
    let mut matrix = DMatrix::<f64>::from_element(n, p + 1, 1.0);
    matrix.columns_mut(1, p).copy_from(ds.regressors());
    let mut labels = Vec::with_capacity(p + 1);
    labels.push(INTERCEPT_LABEL.to_string());
    labels.extend(ds.names().iter().cloned());
    DesignMatrix { matrix, labels }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankReport {
    pub rank: usize,
    pub min_eigenvalue: f64,
    pub full_rank: bool,
}

/// Rank of `(1/n) Σ X_i X_i'` using a relative eigenvalue cutoff.
pub fn check_rank(dm: &DesignMatrix) -> RankReport {
    let n = dm.n() as f64;
    let second_moment = dm.matrix().tr_mul(dm.matrix()) / n;
    let eig = SymmetricEigen::new(second_moment);
    let max = eig.eigenvalues.iter().copied().fold(0.0_f64, f64::max);
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let cutoff = RANK_TOLERANCE * max;
    let rank = eig.eigenvalues.iter().filter(|&&v| v > cutoff).count();
    RankReport {
        rank,
        min_eigenvalue: min,
        full_rank: rank == dm.ncols(),
    }
}
