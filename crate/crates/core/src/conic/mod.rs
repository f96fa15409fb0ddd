//! Conic programs in standard form and the interior-point solver behind them.
//!
//! A program is `min cᵀx  s.t.  Ax + s = b, s ∈ K` where `K` is a product of
//! zero, nonnegative, second-order, rotated second-order and PSD cones. The
//! dual is `max −bᵀy  s.t.  Aᵀy + c = 0, y ∈ K*`.

mod cones;
mod ipm;
pub mod linalg;
pub mod model;
mod sparse;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use linalg::{eigendecompose, psd_project};
pub use sparse::SparseMatrix;

/// One block of the cone product.
///
/// `Psd(n)` holds an order-`n` matrix as `n(n+1)/2` slack entries: the
/// column-major lower triangle with off-diagonals scaled by √2.
/// `RotatedSecondOrder(n)` is `{(u, v, w) : 2uv ≥ ‖w‖², u, v ≥ 0}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "dim", rename_all = "snake_case")]
pub enum ConeSpec {
    Zero(usize),
    Nonnegative(usize),
    SecondOrder(usize),
    RotatedSecondOrder(usize),
    Psd(usize),
}

impl ConeSpec {
    pub fn dim(&self) -> usize {
        match *self {
            ConeSpec::Zero(d)
            | ConeSpec::Nonnegative(d)
            | ConeSpec::SecondOrder(d)
            | ConeSpec::RotatedSecondOrder(d)
            | ConeSpec::Psd(d) => d,
        }
    }

    /// Number of rows the block occupies.
    pub fn rows(&self) -> usize {
        match *self {
            ConeSpec::Psd(n) => linalg::svec_len(n),
            other => other.dim(),
        }
    }

    fn name(&self) -> &'static str {
        match self {
            ConeSpec::Zero(_) => "zero",
            ConeSpec::Nonnegative(_) => "nonnegative",
            ConeSpec::SecondOrder(_) => "second_order",
            ConeSpec::RotatedSecondOrder(_) => "rotated_second_order",
            ConeSpec::Psd(_) => "psd",
        }
    }
}

/// A conic program in standard form.
#[derive(Debug, Clone)]
pub struct ConeProgram {
    pub c: Vec<f64>,
    pub a: SparseMatrix,
    pub b: Vec<f64>,
    pub cones: Vec<ConeSpec>,
    pub var_names: Option<Vec<String>>,
}

impl ConeProgram {
    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    /// Checks the shape invariants.
    pub fn validate(&self) -> Result<()> {
        if self.a.ncols() != self.c.len() {
            return Err(Error::Dimension(format!(
                "A has {} columns but c has length {}",
                self.a.ncols(),
                self.c.len()
            )));
        }
        if self.a.nrows() != self.b.len() {
            return Err(Error::Dimension(format!(
                "A has {} rows but b has length {}",
                self.a.nrows(),
                self.b.len()
            )));
        }
        let total: usize = self.cones.iter().map(ConeSpec::rows).sum();
        if total != self.b.len() {
            return Err(Error::Dimension(format!(
                "cones cover {} rows but the program has {}",
                total,
                self.b.len()
            )));
        }
        for cone in &self.cones {
            let ok = match *cone {
                ConeSpec::RotatedSecondOrder(d) => d >= 2,
                other => other.dim() >= 1,
            };
            if !ok {
                return Err(Error::Dimension(format!("invalid cone {cone:?}")));
            }
        }
        if let Some(names) = &self.var_names {
            if names.len() != self.c.len() {
                return Err(Error::Dimension(format!(
                    "{} variable names for {} variables",
                    names.len(),
                    self.c.len()
                )));
            }
        }
        if self.c.iter().chain(&self.b).any(|v| !v.is_finite())
            || self.a.values().iter().any(|v| !v.is_finite())
        {
            return Err(Error::InvalidArgument("program data contains non-finite values".into()));
        }
        Ok(())
    }

    /// Text dump: a cone-list header followed by one `row col value` triplet per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "vars {} rows {} nnz {}", self.num_vars(), self.num_rows(), self.a.nnz());
        let cones: Vec<String> = self.cones.iter().map(|c| format!("{}:{}", c.name(), c.dim())).collect();
        let _ = writeln!(out, "cones {}", cones.join(" "));
        let c: Vec<String> = self.c.iter().map(|v| format!("{v:e}")).collect();
        let _ = writeln!(out, "c {}", c.join(" "));
        let b: Vec<String> = self.b.iter().map(|v| format!("{v:e}")).collect();
        let _ = writeln!(out, "b {}", b.join(" "));
        for (r, col, v) in self.a.row_major_triplets() {
            let _ = writeln!(out, "{r} {col} {v:e}");
        }
        out
    }

    /// Parses the format written by [`ConeProgram::to_text`].
    pub fn from_text(text: &str) -> Result<ConeProgram> {
        let bad = |line: usize, msg: &str| Error::Parse { row: line + 1, column: 0, message: msg.to_string() };
        let mut lines = text.lines().enumerate();
        let (l0, header) = lines.next().ok_or_else(|| bad(0, "empty input"))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 6 || parts[0] != "vars" || parts[2] != "rows" || parts[4] != "nnz" {
            return Err(bad(l0, "malformed header"));
        }
        let parse_usize = |s: &str, line| s.parse::<usize>().map_err(|_| bad(line, "expected an integer"));
        let parse_f64 = |s: &str, line| s.parse::<f64>().map_err(|_| bad(line, "expected a number"));
        let n = parse_usize(parts[1], l0)?;
        let m = parse_usize(parts[3], l0)?;

        let (l1, cone_line) = lines.next().ok_or_else(|| bad(1, "missing cone list"))?;
        let mut cones = Vec::new();
        for item in cone_line.split_whitespace().skip(1) {
            let (kind, dim) = item.split_once(':').ok_or_else(|| bad(l1, "malformed cone"))?;
            let dim = parse_usize(dim, l1)?;
            cones.push(match kind {
                "zero" => ConeSpec::Zero(dim),
                "nonnegative" => ConeSpec::Nonnegative(dim),
                "second_order" => ConeSpec::SecondOrder(dim),
                "rotated_second_order" => ConeSpec::RotatedSecondOrder(dim),
                "psd" => ConeSpec::Psd(dim),
                _ => return Err(bad(l1, "unknown cone kind")),
            });
        }
        let mut vector = |tag: &str| -> Result<Vec<f64>> {
            let (l, line) = lines.next().ok_or_else(|| bad(0, "truncated input"))?;
            let mut it = line.split_whitespace();
            if it.next() != Some(tag) {
                return Err(bad(l, "unexpected line"));
            }
            it.map(|s| parse_f64(s, l)).collect()
        };
        let c = vector("c")?;
        let b = vector("b")?;
        let mut triplets = Vec::new();
        for (l, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let p: Vec<&str> = line.split_whitespace().collect();
            if p.len() != 3 {
                return Err(bad(l, "expected a triplet"));
            }
            triplets.push((parse_usize(p[0], l)?, parse_usize(p[1], l)?, parse_f64(p[2], l)?));
        }
        let program = ConeProgram { c, a: SparseMatrix::from_triplets(m, n, &triplets)?, b, cones, var_names: None };
        program.validate()?;
        Ok(program)
    }
}

/// Termination status of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    InfeasibleCertificate,
    UnboundedCertificate,
    MaxIters,
}

/// Relative residuals measured on the original (unscaled) program.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// `‖Ax + s − b‖ / (1 + ‖b‖)`
    pub primal_res: f64,
    /// `‖Aᵀy + c‖ / (1 + ‖c‖)`
    pub dual_res: f64,
    /// `|cᵀx + bᵀy| / (1 + |cᵀx|)`
    pub gap_res: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.primal_res.max(self.dual_res).max(self.gap_res)
    }
}

/// Result of [`solve`].
///
/// For `InfeasibleCertificate`, `y_dual` holds `y ∈ K*` with `Aᵀy ≈ 0` and
/// `bᵀy = −1`. For `UnboundedCertificate`, `(x, s)` holds `Ax + s ≈ 0`,
/// `s ∈ K` and `cᵀx = −1`.
#[derive(Debug, Clone)]
pub struct ConeSolution {
    pub x: Vec<f64>,
    pub s: Vec<f64>,
    pub y_dual: Vec<f64>,
    pub primal_obj: f64,
    pub dual_obj: f64,
    pub status: SolveStatus,
    pub residuals: Residuals,
    pub iterations: usize,
}

/// Solver options.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iters: usize,
    /// Rounds of Ruiz equilibration; zero disables it.
    pub equilibration_rounds: usize,
}

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITERS: usize = 200_000;

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings { tol: DEFAULT_TOL, max_iters: DEFAULT_MAX_ITERS, equilibration_rounds: 15 }
    }
}

/// Solves `program` to relative tolerance `tol`.
pub fn solve(program: &ConeProgram, tol: f64, max_iters: usize) -> Result<ConeSolution> {
    solve_with(program, &SolverSettings { tol, max_iters, ..SolverSettings::default() })
}

/// Solves `program` with explicit settings.
pub fn solve_with(program: &ConeProgram, settings: &SolverSettings) -> Result<ConeSolution> {
    program.validate()?;
    if !(settings.tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    ipm::solve(program, settings)
}

/// Residuals of `(x, s, y)` against `program`.
pub fn residuals(program: &ConeProgram, x: &[f64], s: &[f64], y: &[f64]) -> Residuals {
    let ax = program.a.mul_vec(x);
    let p: f64 = ax.iter().zip(s).zip(&program.b).map(|((a, s), b)| (a + s - b).powi(2)).sum::<f64>().sqrt();
    let aty = program.a.tmul_vec(y);
    let d: f64 = aty.iter().zip(&program.c).map(|(a, c)| (a + c).powi(2)).sum::<f64>().sqrt();
    let cx = dot(&program.c, x);
    let by = dot(&program.b, y);
    Residuals {
        primal_res: p / (1.0 + norm(&program.b)),
        dual_res: d / (1.0 + norm(&program.c)),
        gap_res: (cx + by).abs() / (1.0 + cx.abs()),
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn program(c: Vec<f64>, rows: usize, triplets: &[(usize, usize, f64)], b: Vec<f64>, cones: Vec<ConeSpec>) -> ConeProgram {
        let a = SparseMatrix::from_triplets(rows, c.len(), triplets).unwrap();
        ConeProgram { c, a, b, cones, var_names: None }
    }

    #[test]
    fn lower_bound_is_tight() {
        // x − 1 ≥ 0  ⇔  −x + s = −1
        let p = program(vec![1.0], 1, &[(0, 0, -1.0)], vec![-1.0], vec![ConeSpec::Nonnegative(1)]);
        let sol = solve(&p, 1e-8, 100).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-6);
        assert!((sol.primal_obj - 1.0).abs() < 1e-6);
    }

    #[test]
    fn euclidean_norm_epigraph() {
        // (t, 3, 4) ∈ SOC
        let p = program(vec![1.0], 3, &[(0, 0, -1.0)], vec![0.0, 3.0, 4.0], vec![ConeSpec::SecondOrder(3)]);
        let sol = solve(&p, 1e-8, 100).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.x[0] - 5.0).abs() < 1e-6);
    }

    #[test]
    fn trace_minimization_over_psd_shift() {
        // X ⪰ vvᵀ with X = [[x0, x1], [x1, x2]], minimize x0 + x2.
        let r2 = std::f64::consts::SQRT_2;
        let p = program(
            vec![1.0, 0.0, 1.0],
            3,
            &[(0, 0, -1.0), (1, 1, -r2), (2, 2, -1.0)],
            vec![-1.0, -r2, -1.0],
            vec![ConeSpec::Psd(2)],
        );
        let sol = solve(&p, 1e-9, 100).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.primal_obj - 2.0).abs() < 1e-6);
        for (got, want) in sol.x.iter().zip([1.0, 1.0, 1.0]) {
            assert!((got - want).abs() < 1e-4);
        }
    }

    #[test]
    fn rotated_cone() {
        // minimize t s.t. 2·t·(1/2) ≥ 3²  → t = 9
        let p = program(
            vec![1.0],
            3,
            &[(0, 0, -1.0)],
            vec![0.0, 0.5, 3.0],
            vec![ConeSpec::RotatedSecondOrder(3)],
        );
        let sol = solve(&p, 1e-9, 100).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal, "{sol:?}");
        assert!((sol.x[0] - 9.0).abs() < 1e-6);
    }

    #[test]
    fn equality_rows() {
        // min x0 + 2 x1 s.t. x0 + x1 = 1, x ≥ 0
        let p = program(
            vec![1.0, 2.0],
            3,
            &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, -1.0), (2, 1, -1.0)],
            vec![1.0, 0.0, 0.0],
            vec![ConeSpec::Zero(1), ConeSpec::Nonnegative(2)],
        );
        let sol = solve(&p, 1e-9, 100).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-6 && sol.x[1].abs() < 1e-6);
        assert!((sol.dual_obj - 1.0).abs() < 1e-6);
    }

    #[test]
    fn infeasible_program_gets_certificate() {
        // x ≥ 1 and x ≤ 0
        let p = program(
            vec![1.0],
            2,
            &[(0, 0, -1.0), (1, 0, 1.0)],
            vec![-1.0, 0.0],
            vec![ConeSpec::Nonnegative(2)],
        );
        let sol = solve(&p, 1e-8, 200).unwrap();
        assert_eq!(sol.status, SolveStatus::InfeasibleCertificate);
        let aty = p.a.tmul_vec(&sol.y_dual);
        assert!(norm(&aty) < 1e-6);
        assert!(dot(&p.b, &sol.y_dual) < 0.0);
        assert!(sol.y_dual.iter().all(|&v| v >= -1e-9));
    }

    #[test]
    fn unbounded_program_gets_certificate() {
        // min −x s.t. x ≥ 0
        let p = program(vec![-1.0], 1, &[(0, 0, -1.0)], vec![0.0], vec![ConeSpec::Nonnegative(1)]);
        let sol = solve(&p, 1e-8, 200).unwrap();
        assert_eq!(sol.status, SolveStatus::UnboundedCertificate);
        assert!(dot(&p.c, &sol.x) < 0.0);
    }

    #[test]
    fn malformed_program_is_rejected() {
        let p = program(vec![1.0], 1, &[(0, 0, -1.0)], vec![-1.0], vec![ConeSpec::Nonnegative(2)]);
        assert!(matches!(solve(&p, 1e-6, 10), Err(Error::Dimension(_))));
    }

    #[test]
    fn text_roundtrip() {
        let p = program(
            vec![1.0, 0.0, 1.0],
            4,
            &[(0, 0, -1.0), (1, 1, -1.5), (2, 2, -1.0), (3, 0, 2.0)],
            vec![-1.0, -1.0, -1.0, 0.25],
            vec![ConeSpec::Psd(2), ConeSpec::Zero(1)],
        );
        let q = ConeProgram::from_text(&p.to_text()).unwrap();
        assert_eq!(q.cones, p.cones);
        assert_eq!(q.c, p.c);
        assert_eq!(q.b, p.b);
        assert_eq!(q.a.to_dense(), p.a.to_dense());
    }
}
