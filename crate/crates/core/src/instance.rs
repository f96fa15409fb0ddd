//! Regression data: CSV ingestion, standardization, Gram matrices and the
//! diagonal-dominance statistic.

use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::conic::{self, linalg, ConeProgram, ConeSpec, SolveStatus, SparseMatrix};
use crate::error::{Error, Result};

/// Design matrix and response of a least-squares problem.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionInstance {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub standardized: bool,
    /// Norms used to scale each centered column (ones when unstandardized).
    pub column_norms: Vec<f64>,
    /// Means subtracted from each column (zeros when unstandardized).
    pub column_means: Vec<f64>,
    pub y_mean: f64,
    pub column_names: Vec<String>,
    pub response_name: String,
}

/// Tikhonov weight, ℓ1 weight and cardinality bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub lambda: f64,
    pub mu: f64,
    pub k: usize,
}

impl HyperParams {
    pub fn new(lambda: f64, mu: f64, k: usize) -> Self {
        HyperParams { lambda, mu, k }
    }

    /// Checks `λ, μ ≥ 0` and `1 ≤ k ≤ p`.
    pub fn validate(&self, p: usize) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("lambda must be a finite value >= 0, got {}", self.lambda)));
        }
        if !(self.mu >= 0.0) || !self.mu.is_finite() {
            return Err(Error::InvalidArgument(format!("mu must be a finite value >= 0, got {}", self.mu)));
        }
        if self.k < 1 || self.k > p {
            return Err(Error::InvalidArgument(format!("k must lie in [1, {p}], got {}", self.k)));
        }
        Ok(())
    }
}

/// Which CSV column holds the response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResponseColumn {
    Name(String),
    Index(usize),
    Last,
}

impl FromStr for ResponseColumn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.is_empty() {
            return Err(Error::InvalidArgument("empty response column".into()));
        }
        if s == "last" {
            return Ok(ResponseColumn::Last);
        }
        if let Some(rest) = s.strip_prefix('#') {
            return rest
                .parse()
                .map(ResponseColumn::Index)
                .map_err(|_| Error::InvalidArgument(format!("bad column index '{s}'")));
        }
        Ok(ResponseColumn::Name(s.to_string()))
    }
}

/// Reproducibility record written next to experiment outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceManifest {
    pub n: usize,
    pub p: usize,
    pub standardized: bool,
    pub response: String,
    pub columns: Vec<String>,
    pub column_norms: Vec<f64>,
    pub column_means: Vec<f64>,
    pub y_mean: f64,
}

fn detect_delimiter(header: &str) -> u8 {
    b",;\t"
        .iter()
        .copied()
        .max_by_key(|&d| (header.bytes().filter(|&b| b == d).count(), d == b','))
        .unwrap_or(b',')
}

fn is_missing(cell: &str) -> bool {
    matches!(cell.to_ascii_lowercase().as_str(), "" | "na" | "nan" | "?" | "null")
}

impl RegressionInstance {
    /// Builds an unstandardized instance from raw arrays.
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::Dimension(format!("X has {} rows but y has {} entries", x.nrows(), y.len())));
        }
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::Dimension("instance needs at least one row and one column".into()));
        }
        let p = x.ncols();
        Ok(RegressionInstance {
            x,
            y,
            standardized: false,
            column_norms: vec![1.0; p],
            column_means: vec![0.0; p],
            y_mean: 0.0,
            column_names: (0..p).map(|j| format!("x{j}")).collect(),
            response_name: "y".into(),
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Parses delimited text with a header row.
    pub fn from_csv_str(text: &str, response: &ResponseColumn) -> Result<Self> {
        let header_line = text.lines().next().unwrap_or("");
        let delimiter = detect_delimiter(header_line);
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers: Vec<String> = reader
            .headers()
            .map_err(|e| Error::Parse { row: 1, column: 0, message: e.to_string() })?
            .iter()
            .map(str::to_string)
            .collect();
        if headers.len() < 2 {
            return Err(Error::Parse { row: 1, column: 0, message: "need at least two columns".into() });
        }
        let resp = match response {
            ResponseColumn::Last => headers.len() - 1,
            ResponseColumn::Index(i) if *i < headers.len() => *i,
            ResponseColumn::Index(i) => {
                return Err(Error::InvalidArgument(format!("response index {i} out of range ({} columns)", headers.len())))
            }
            ResponseColumn::Name(name) => headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::InvalidArgument(format!("response column '{name}' not found")))?,
        };
        let mut values: Vec<Vec<f64>> = Vec::new();
        for (r, record) in reader.records().enumerate() {
            // row numbers are 1-based and count the header
            let row = r + 2;
            let record = record.map_err(|e| Error::Parse { row, column: 0, message: e.to_string() })?;
            if record.len() != headers.len() {
                return Err(Error::Parse {
                    row,
                    column: record.len().min(headers.len()) + 1,
                    message: format!("expected {} fields, found {}", headers.len(), record.len()),
                });
            }
            let mut parsed = Vec::with_capacity(record.len());
            for (c, cell) in record.iter().enumerate() {
                if is_missing(cell) {
                    return Err(Error::MissingValue { row, column: c + 1 });
                }
                let v: f64 = cell.parse().map_err(|_| Error::Parse {
                    row,
                    column: c + 1,
                    message: format!("'{cell}' is not numeric"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse { row, column: c + 1, message: format!("'{cell}' is not finite") });
                }
                parsed.push(v);
            }
            values.push(parsed);
        }
        if values.is_empty() {
            return Err(Error::Parse { row: 2, column: 0, message: "no data rows".into() });
        }
        let n = values.len();
        let p = headers.len() - 1;
        let cols: Vec<usize> = (0..headers.len()).filter(|&c| c != resp).collect();
        let x = DMatrix::from_fn(n, p, |i, j| values[i][cols[j]]);
        let y = DVector::from_fn(n, |i, _| values[i][resp]);
        let mut inst = RegressionInstance::new(x, y)?;
        inst.column_names = cols.iter().map(|&c| headers[c].clone()).collect();
        inst.response_name = headers[resp].clone();
        Ok(inst)
    }

    /// Centers every column and the response, then scales columns to unit norm.
    pub fn standardize(&self) -> Result<Self> {
        let (n, p) = (self.n(), self.p());
        let mut x = self.x.clone();
        let mut norms = Vec::with_capacity(p);
        let mut means = Vec::with_capacity(p);
        for j in 0..p {
            let raw_norm = x.column(j).norm();
            let mean = x.column(j).sum() / n as f64;
            let mut col = x.column_mut(j);
            col.add_scalar_mut(-mean);
            let norm = col.norm();
            if !(norm > 1e-12 * raw_norm.max(1.0)) {
                return Err(Error::ZeroVariance(self.column_names[j].clone()));
            }
            col /= norm;
            norms.push(norm);
            means.push(mean);
        }
        let y_shift = self.y.sum() / n as f64;
        let y = self.y.add_scalar(-y_shift);
        Ok(RegressionInstance {
            x,
            y,
            standardized: true,
            // compose with any earlier standardization so back-transforms stay exact
            column_norms: self.column_norms.iter().zip(&norms).map(|(a, b)| a * b).collect(),
            column_means: (0..p).map(|j| self.column_means[j] + self.column_norms[j] * means[j]).collect(),
            y_mean: self.y_mean + y_shift,
            column_names: self.column_names.clone(),
            response_name: self.response_name.clone(),
        })
    }

    /// Maps coefficients on standardized columns back to raw units,
    /// returning `(coefficients, intercept)`.
    pub fn back_transform(&self, beta: &[f64]) -> (Vec<f64>, f64) {
        let raw: Vec<f64> = beta.iter().zip(&self.column_norms).map(|(b, s)| b / s).collect();
        let intercept = self.y_mean - raw.iter().zip(&self.column_means).map(|(b, m)| b * m).sum::<f64>();
        (raw, intercept)
    }

    /// Keeps only the listed rows.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let x = DMatrix::from_fn(rows.len(), self.p(), |i, j| self.x[(rows[i], j)]);
        let y = DVector::from_fn(rows.len(), |i, _| self.y[rows[i]]);
        RegressionInstance { x, y, ..self.clone() }
    }

    /// Writes the raw values as comma-separated text, response last.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let header: Vec<&str> = self.column_names.iter().map(String::as_str).chain([self.response_name.as_str()]).collect();
        w.write_record(&header).map_err(csv_error)?;
        for i in 0..self.n() {
            let row: Vec<String> = (0..self.p()).map(|j| self.x[(i, j)].to_string()).chain([self.y[i].to_string()]).collect();
            w.write_record(&row).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn manifest(&self) -> InstanceManifest {
        InstanceManifest {
            n: self.n(),
            p: self.p(),
            standardized: self.standardized,
            response: self.response_name.clone(),
            columns: self.column_names.clone(),
            column_norms: self.column_norms.clone(),
            column_means: self.column_means.clone(),
            y_mean: self.y_mean,
        }
    }
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidArgument(format!("csv output: {other:?}")),
    }
}

/// Reads a CSV file with a header row; see [`RegressionInstance::from_csv_str`].
pub fn load_csv(path: impl AsRef<Path>, response: &ResponseColumn) -> Result<RegressionInstance> {
    let text = std::fs::read_to_string(path)?;
    RegressionInstance::from_csv_str(&text, response)
}

/// `XᵀX + λI`.
pub fn gram(instance: &RegressionInstance, lambda: f64) -> DMatrix<f64> {
    let mut q = instance.x.tr_mul(&instance.x);
    q = linalg::symmetrize(&q);
    for i in 0..q.nrows() {
        q[(i, i)] += lambda;
    }
    q
}

/// Program `max eᵀd s.t. Q − diag(d) ⪰ 0, d ≥ 0` with `Q` scaled to unit trace.
pub fn diagonal_dominance_program(q: &DMatrix<f64>) -> Result<ConeProgram> {
    let p = q.nrows();
    if p == 0 || q.ncols() != p {
        return Err(Error::Dimension(format!("expected a nonempty square matrix, got {}x{}", q.nrows(), q.ncols())));
    }
    let trace = q.trace();
    if !(trace > 0.0) {
        return Err(Error::InvalidArgument("matrix must have positive trace".into()));
    }
    let qn = q / trace;
    let mut triplets = Vec::with_capacity(2 * p);
    for i in 0..p {
        triplets.push((i, i, -1.0));
        triplets.push((p + linalg::svec_index(p, i, i), i, 1.0));
    }
    let m = p + linalg::svec_len(p);
    let mut b = vec![0.0; p];
    b.extend(linalg::svec(&qn));
    Ok(ConeProgram {
        c: vec![-1.0; p],
        a: SparseMatrix::from_triplets(m, p, &triplets)?,
        b,
        cones: vec![ConeSpec::Nonnegative(p), ConeSpec::Psd(p)],
        var_names: Some((0..p).map(|i| format!("d[{i}]")).collect()),
    })
}

/// Largest extractable diagonal of a PSD matrix as a fraction of its trace.
pub fn diagonal_dominance(q: &DMatrix<f64>) -> Result<f64> {
    diagonal_dominance_with(q, conic::DEFAULT_TOL)
}

pub fn diagonal_dominance_with(q: &DMatrix<f64>, tol: f64) -> Result<f64> {
    let program = diagonal_dominance_program(q)?;
    let sol = conic::solve(&program, tol, conic::DEFAULT_MAX_ITERS)?;
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::MaxIters if sol.residuals.max() <= 10.0 * tol => {
            log::warn!("diagonal dominance accepted at residual {:.2e}", sol.residuals.max());
        }
        SolveStatus::MaxIters => return Err(Error::IterationLimit { residual: sol.residuals.max(), iterations: sol.iterations }),
        other => return Err(Error::Solver(format!("diagonal dominance SDP ended with status {other:?}"))),
    }
    Ok((-sol.primal_obj).clamp(0.0, 1.0))
}
