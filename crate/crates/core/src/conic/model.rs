//! Small modeling layer: named variables, affine expressions and cone
//! constraints compiled into a [`ConeProgram`].

use std::ops::{Add, Mul, Neg, Sub};

use super::{linalg, ConeProgram, ConeSpec, SparseMatrix};
use crate::error::Result;

/// `constant + Σ coef·x[var]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Expr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl Expr {
    pub fn var(index: usize) -> Self {
        Expr { terms: vec![(index, 1.0)], constant: 0.0 }
    }

    pub fn constant(value: f64) -> Self {
        Expr { terms: Vec::new(), constant: value }
    }

    pub fn zero() -> Self {
        Expr::default()
    }

    /// Adds `coef·x[var]` in place.
    pub fn push(&mut self, var: usize, coef: f64) {
        self.terms.push((var, coef));
    }

    pub fn sum<I: IntoIterator<Item = Expr>>(items: I) -> Self {
        items.into_iter().fold(Expr::zero(), |a, b| a + b)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(i, c)| c * x[i]).sum::<f64>()
    }
}

impl From<f64> for Expr {
    fn from(v: f64) -> Self {
        Expr::constant(v)
    }
}

impl Add for Expr {
    type Output = Expr;
    fn add(mut self, rhs: Expr) -> Expr {
        self.terms.extend(rhs.terms);
        self.constant += rhs.constant;
        self
    }
}

impl Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        self + (-rhs)
    }
}

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        self * -1.0
    }
}

impl Mul<f64> for Expr {
    type Output = Expr;
    fn mul(mut self, f: f64) -> Expr {
        for t in &mut self.terms {
            t.1 *= f;
        }
        self.constant *= f;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Group {
    Zero,
    Nonneg,
    Other,
}

/// Accumulates variables, a linear objective and cone constraints.
///
/// Each constraint states that a vector of affine expressions lies in a
/// cone; equality and nonnegativity rows are gathered into leading blocks.
#[derive(Debug, Clone, Default)]
pub struct ProgramBuilder {
    names: Vec<String>,
    cost: Vec<f64>,
    blocks: Vec<(Group, ConeSpec, Vec<Expr>)>,
}

impl ProgramBuilder {
    pub fn new() -> Self {
        ProgramBuilder::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>) -> usize {
        self.names.push(name.into());
        self.cost.push(0.0);
        self.names.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.names.len()
    }

    pub fn add_cost(&mut self, var: usize, coef: f64) {
        self.cost[var] += coef;
    }

    /// `expr = 0`.
    pub fn equal(&mut self, expr: Expr) {
        self.blocks.push((Group::Zero, ConeSpec::Zero(1), vec![expr]));
    }

    /// `expr ≥ 0`.
    pub fn nonneg(&mut self, expr: Expr) {
        self.blocks.push((Group::Nonneg, ConeSpec::Nonnegative(1), vec![expr]));
    }

    /// `‖x‖ ≤ t`.
    pub fn second_order(&mut self, t: Expr, x: Vec<Expr>) {
        let mut rows = vec![t];
        rows.extend(x);
        self.blocks.push((Group::Other, ConeSpec::SecondOrder(rows.len()), rows));
    }

    /// `2uv ≥ ‖w‖²` with `u, v ≥ 0`.
    pub fn rotated(&mut self, u: Expr, v: Expr, w: Vec<Expr>) {
        let mut rows = vec![u, v];
        rows.extend(w);
        self.blocks.push((Group::Other, ConeSpec::RotatedSecondOrder(rows.len()), rows));
    }

    /// `uv ≥ w²` with `u, v ≥ 0`.
    pub fn hyperbolic(&mut self, u: Expr, v: Expr, w: Expr) {
        self.rotated(u, v, vec![w * std::f64::consts::SQRT_2]);
    }

    /// Symmetric matrix of expressions is PSD; only `m[i][j]` with `i ≥ j` is read.
    pub fn psd(&mut self, m: &[Vec<Expr>]) {
        let n = m.len();
        let mut rows = Vec::with_capacity(linalg::svec_len(n));
        for j in 0..n {
            for i in j..n {
                let e = m[i][j].clone();
                rows.push(if i == j { e } else { e * std::f64::consts::SQRT_2 });
            }
        }
        self.blocks.push((Group::Other, ConeSpec::Psd(n), rows));
    }

    /// Compiles to `min cᵀx s.t. b − Ax ∈ K`.
    pub fn build(&self) -> Result<ConeProgram> {
        let n = self.names.len();
        let mut triplets = Vec::new();
        let mut b = Vec::new();
        let mut cones = Vec::new();
        let emit = |rows: &[Expr], triplets: &mut Vec<(usize, usize, f64)>, b: &mut Vec<f64>| {
            for e in rows {
                let r = b.len();
                for &(v, coef) in &e.terms {
                    triplets.push((r, v, -coef));
                }
                b.push(e.constant);
            }
        };
        for (group, spec) in [(Group::Zero, ConeSpec::Zero as fn(usize) -> ConeSpec), (Group::Nonneg, ConeSpec::Nonnegative)] {
            let start = b.len();
            for (_, _, rows) in self.blocks.iter().filter(|blk| blk.0 == group) {
                emit(rows, &mut triplets, &mut b);
            }
            if b.len() > start {
                cones.push(spec(b.len() - start));
            }
        }
        for (_, spec, rows) in self.blocks.iter().filter(|blk| blk.0 == Group::Other) {
            emit(rows, &mut triplets, &mut b);
            cones.push(*spec);
        }
        let program = ConeProgram {
            c: self.cost.clone(),
            a: SparseMatrix::from_triplets(b.len(), n, &triplets)?,
            b,
            cones,
            var_names: Some(self.names.clone()),
        };
        program.validate()?;
        Ok(program)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::{solve, SolveStatus};

    #[test]
    fn expressions_evaluate() {
        let e = Expr::var(0) * 2.0 - Expr::var(1) + Expr::constant(3.0);
        assert_eq!(e.eval(&[1.0, 4.0]), 1.0);
    }

    #[test]
    fn groups_come_first() {
        let mut m = ProgramBuilder::new();
        let x = m.add_var("x");
        let t = m.add_var("t");
        m.second_order(Expr::var(t), vec![Expr::var(x)]);
        m.nonneg(Expr::var(x) - Expr::constant(1.0));
        m.equal(Expr::var(t) - Expr::var(x) * 2.0);
        let p = m.build().unwrap();
        assert_eq!(p.cones, vec![ConeSpec::Zero(1), ConeSpec::Nonnegative(1), ConeSpec::SecondOrder(2)]);
    }

    #[test]
    fn hyperbolic_constraint_solves() {
        // min t s.t. t·1 ≥ 3², t free
        let mut m = ProgramBuilder::new();
        let t = m.add_var("t");
        m.add_cost(t, 1.0);
        m.hyperbolic(Expr::var(t), Expr::constant(1.0), Expr::constant(3.0));
        let sol = solve(&m.build().unwrap(), 1e-8, 500).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.x[0] - 9.0).abs() < 1e-6);
    }

    #[test]
    fn psd_block_matches_matrix_inner_product() {
        // min x s.t. [[x, 1], [1, 1]] ⪰ 0 gives x = 1
        let mut m = ProgramBuilder::new();
        let x = m.add_var("x");
        m.add_cost(x, 1.0);
        let one = || Expr::constant(1.0);
        m.psd(&[vec![Expr::var(x), one()], vec![one(), one()]]);
        let sol = solve(&m.build().unwrap(), 1e-8, 500).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-6);
    }
}
