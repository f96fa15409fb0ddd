//! Objective evaluation, greedy rounding, exhaustive search and gap certificates.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formulations::{solve_relaxation, RelaxationSpec, RelaxedSolution, SolveOptions};
use crate::instance::{HyperParams, RegressionInstance};

/// Entries with magnitude above this count as nonzero.
pub const NONZERO_THRESHOLD: f64 = 1e-5;
/// Largest number of supports [`brute_force_opt`] will enumerate.
pub const MAX_SUPPORTS: u128 = 1_000_000;
const SINGULAR_RIDGE: f64 = 1e-10;

/// `‖y − Xβ‖² + λ‖β‖² + μ‖β‖₁`.
pub fn objective(beta: &[f64], instance: &RegressionInstance, hyper: &HyperParams) -> Result<f64> {
    if beta.len() != instance.p() {
        return Err(Error::Dimension(format!("beta has {} entries, expected {}", beta.len(), instance.p())));
    }
    let b = DVector::from_column_slice(beta);
    let r = &instance.y - &instance.x * &b;
    Ok(r.dot(&r) + hyper.lambda * b.dot(&b) + hyper.mu * b.lp_norm(1))
}

pub fn count_nonzeros(beta: &[f64]) -> usize {
    beta.iter().filter(|v| v.abs() > NONZERO_THRESHOLD).count()
}

/// Indices of the `k` largest magnitudes; the lower index wins ties.
pub fn top_k(values: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()).then(a.cmp(&b)));
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

fn restricted(instance: &RegressionInstance, support: &[usize]) -> (DMatrix<f64>, DVector<f64>) {
    let g = DMatrix::from_fn(support.len(), support.len(), |a, b| {
        instance.x.column(support[a]).dot(&instance.x.column(support[b]))
    });
    let r = DVector::from_fn(support.len(), |a, _| instance.x.column(support[a]).dot(&instance.y));
    (g, r)
}

/// `(X_Tᵀ X_T + λI)⁻¹ X_Tᵀ y` scattered back to length `p`.
pub fn ridge_on_support(instance: &RegressionInstance, support: &[usize], lambda: f64) -> Vec<f64> {
    let mut beta = vec![0.0; instance.p()];
    if support.is_empty() {
        return beta;
    }
    let (mut g, r) = restricted(instance, support);
    for i in 0..support.len() {
        g[(i, i)] += lambda;
    }
    let sol = match g.clone().cholesky() {
        Some(ch) => ch.solve(&r),
        None => {
            log::warn!("restricted system on {support:?} is singular; adding a {SINGULAR_RIDGE:e} ridge");
            let scale = (0..support.len()).map(|i| g[(i, i)]).fold(0.0, f64::max).max(1.0);
            for i in 0..support.len() {
                g[(i, i)] += SINGULAR_RIDGE * scale;
            }
            g.cholesky().map(|ch| ch.solve(&r)).unwrap_or_else(|| DVector::zeros(support.len()))
        }
    };
    for (a, &i) in support.iter().enumerate() {
        beta[i] = sol[a];
    }
    beta
}

/// Exact minimizer of `‖y − X_Tβ‖² + λ‖β‖² + μ‖β‖₁` on a support by cyclic
/// coordinate descent (each coordinate step is an exact soft-threshold).
fn elastic_on_support(instance: &RegressionInstance, support: &[usize], lambda: f64, mu: f64) -> Vec<f64> {
    if mu == 0.0 {
        return ridge_on_support(instance, support, lambda);
    }
    let (g, r) = restricted(instance, support);
    let m = support.len();
    let mut b = vec![0.0; m];
    for _ in 0..100_000 {
        let mut change = 0.0f64;
        for i in 0..m {
            let rho = r[i] - (0..m).filter(|&j| j != i).map(|j| g[(i, j)] * b[j]).sum::<f64>();
            let denom = g[(i, i)] + lambda;
            let new = if denom > 0.0 { rho.signum() * (rho.abs() - mu / 2.0).max(0.0) / denom } else { 0.0 };
            change = change.max((new - b[i]).abs());
            b[i] = new;
        }
        if change <= 1e-15 * (1.0 + b.iter().fold(0.0f64, |a, v| a.max(v.abs()))) {
            break;
        }
    }
    let mut beta = vec![0.0; instance.p()];
    for (a, &i) in support.iter().enumerate() {
        beta[i] = b[a];
    }
    beta
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rounded {
    pub beta: Vec<f64>,
    pub nu_ub: f64,
    pub support: Vec<usize>,
}

/// Ridge refit on the `k` largest relaxed magnitudes; `ν_u` includes the ℓ1 term.
pub fn greedy_round(beta_relaxed: &[f64], instance: &RegressionInstance, hyper: &HyperParams) -> Result<Rounded> {
    let p = instance.p();
    if beta_relaxed.len() != p {
        return Err(Error::Dimension(format!("beta has {} entries, expected {p}", beta_relaxed.len())));
    }
    if beta_relaxed.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("relaxed coefficients are not finite".into()));
    }
    if hyper.k > p {
        return Err(Error::InvalidArgument(format!("k = {} exceeds p = {p}", hyper.k)));
    }
    let support = top_k(beta_relaxed, hyper.k);
    let beta = ridge_on_support(instance, &support, hyper.lambda);
    let nu_ub = objective(&beta, instance, hyper)?;
    Ok(Rounded { beta, nu_ub, support })
}

/// `(ν_u − ν_ℓ)/ν_ℓ × 100`.
pub fn gap(nu_lb: f64, nu_ub: f64) -> Result<f64> {
    if !(nu_lb > 0.0) {
        return Err(Error::UndefinedGap { abs_diff: nu_ub - nu_lb });
    }
    Ok((nu_ub - nu_lb) / nu_lb * 100.0)
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k as u128).fold(1u128, |acc, i| acc * (n as u128 - i) / (i + 1))
}

fn combinations(p: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k == 0 {
        out.push(Vec::new());
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let mut t = k;
        while t > 0 && idx[t - 1] == p - k + t - 1 {
            t -= 1;
        }
        if t == 0 {
            return out;
        }
        idx[t - 1] += 1;
        for s in t..k {
            idx[s] = idx[s - 1] + 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BruteForce {
    pub beta: Vec<f64>,
    pub nu: f64,
    pub support: Vec<usize>,
}

/// Global optimum over `‖β‖₀ ≤ k` by enumerating every support of size `k`
/// (supports are nested, so smaller sizes never do better).
pub fn brute_force_opt(instance: &RegressionInstance, hyper: &HyperParams) -> Result<BruteForce> {
    let p = instance.p();
    hyper.validate(p)?;
    let k = hyper.k.min(p);
    let count = binomial(p, k);
    if count > MAX_SUPPORTS {
        return Err(Error::TooManySupports { count, limit: MAX_SUPPORTS });
    }
    let supports = combinations(p, k);
    let eval = |s: &Vec<usize>| -> (f64, Vec<f64>) {
        let beta = elastic_on_support(instance, s, hyper.lambda, hyper.mu);
        let b = DVector::from_column_slice(&beta);
        let r = &instance.y - &instance.x * &b;
        (r.dot(&r) + hyper.lambda * b.dot(&b) + hyper.mu * b.lp_norm(1), beta)
    };
    let pick = |a: (usize, f64), b: (usize, f64)| if b.1 < a.1 || (b.1 == a.1 && b.0 < a.0) { b } else { a };
    #[cfg(feature = "parallel")]
    let best = {
        use rayon::prelude::*;
        supports.par_iter().enumerate().map(|(i, s)| (i, eval(s).0)).reduce(|| (usize::MAX, f64::INFINITY), pick)
    };
    #[cfg(not(feature = "parallel"))]
    let best = supports.iter().enumerate().map(|(i, s)| (i, eval(s).0)).fold((usize::MAX, f64::INFINITY), pick);
    let (nu, beta) = eval(&supports[best.0]);
    Ok(BruteForce { beta, nu, support: supports[best.0].clone() })
}

/// Relaxation bound, rounded estimator and gap for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCertificate {
    pub relaxation: String,
    pub lambda: f64,
    pub mu: f64,
    pub k: usize,
    pub nu_lb: f64,
    pub nu_ub: f64,
    /// Absent when `ν_ℓ ≤ 0`.
    pub gap_percent: Option<f64>,
    pub support: Vec<usize>,
    pub nonzeros: usize,
    pub beta_rounded: Vec<f64>,
    pub solve_seconds: Option<f64>,
}

impl BoundCertificate {
    pub fn from_solution(sol: &RelaxedSolution, instance: &RegressionInstance, solve_seconds: Option<f64>) -> Result<Self> {
        let hyper = sol.spec.hyper;
        let rounded = greedy_round(&sol.beta, instance, &hyper)?;
        let gap_percent = match gap(sol.nu_lb, rounded.nu_ub) {
            Ok(g) => Some(g),
            Err(Error::UndefinedGap { abs_diff }) => {
                log::warn!("lower bound is not positive; absolute gap {abs_diff:.6e}");
                None
            }
            Err(e) => return Err(e),
        };
        Ok(BoundCertificate {
            relaxation: sol.spec.kind.label(),
            lambda: hyper.lambda,
            mu: hyper.mu,
            k: hyper.k,
            nu_lb: sol.nu_lb,
            nu_ub: rounded.nu_ub,
            gap_percent,
            nonzeros: count_nonzeros(&rounded.beta),
            support: rounded.support,
            beta_rounded: rounded.beta,
            solve_seconds,
        })
    }
}

/// Solves the relaxation, rounds it and reports the gap.
pub fn certify(instance: &RegressionInstance, spec: RelaxationSpec, opts: &SolveOptions) -> Result<(BoundCertificate, RelaxedSolution)> {
    let start = Instant::now();
    let sol = solve_relaxation(instance, spec, opts)?;
    let secs = start.elapsed().as_secs_f64();
    Ok((BoundCertificate::from_solution(&sol, instance, Some(secs))?, sol))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn orthonormal() -> RegressionInstance {
        // columns of a scaled Hadamard matrix
        let h = [[1.0, 1.0, 1.0, 1.0], [1.0, -1.0, 1.0, -1.0], [1.0, 1.0, -1.0, -1.0], [1.0, -1.0, -1.0, 1.0]];
        let x = DMatrix::from_fn(4, 3, |i, j| h[i][j + 1] / 2.0);
        let y = DVector::from_column_slice(&[3.0, -1.0, 0.5, 2.0]);
        RegressionInstance::new(x, y).unwrap()
    }

    #[test]
    fn objective_at_zero_is_yty() {
        let inst = orthonormal();
        let v = objective(&[0.0; 3], &inst, &HyperParams::new(1.0, 1.0, 1)).unwrap();
        assert_eq!(v, inst.y.dot(&inst.y));
    }

    #[test]
    fn objective_term_by_term() {
        let inst = orthonormal();
        let beta = [0.3, -1.2, 0.7];
        let h = HyperParams::new(0.4, 0.9, 2);
        let mut rss = 0.0;
        for i in 0..4 {
            let fit: f64 = (0..3).map(|j| inst.x[(i, j)] * beta[j]).sum();
            rss += (inst.y[i] - fit) * (inst.y[i] - fit);
        }
        let expected = rss + 0.4 * (0.09 + 1.44 + 0.49) + 0.9 * (0.3 + 1.2 + 0.7);
        assert!((objective(&beta, &inst, &h).unwrap() - expected).abs() < 1e-10);
    }

    #[test]
    fn orthonormal_design_closed_form() {
        let inst = orthonormal();
        let xty = inst.x.tr_mul(&inst.y);
        let h = HyperParams::new(0.0, 0.0, 2);
        let top = top_k(xty.as_slice(), 2);
        let expected = inst.y.dot(&inst.y) - top.iter().map(|&i| xty[i] * xty[i]).sum::<f64>();
        let r = greedy_round(xty.as_slice(), &inst, &h).unwrap();
        assert_eq!(r.support, top);
        assert!((r.nu_ub - expected).abs() < 1e-12);
        let bf = brute_force_opt(&inst, &h).unwrap();
        assert_eq!(bf.support, top);
        assert!((bf.nu - expected).abs() < 1e-12);
    }

    #[test]
    fn rounding_fixed_point() {
        let inst = orthonormal();
        let h = HyperParams::new(0.1, 0.0, 2);
        let first = greedy_round(&[1.0, 0.0, -2.0], &inst, &h).unwrap();
        let again = greedy_round(&first.beta, &inst, &h).unwrap();
        assert_eq!(first, again);
        assert!(count_nonzeros(&again.beta) <= 2);
    }

    #[test]
    fn ties_prefer_lower_index() {
        assert_eq!(top_k(&[1.0, -2.0, 2.0, 0.5], 1), vec![1]);
        assert_eq!(top_k(&[1.0, 1.0, 1.0], 2), vec![0, 1]);
    }

    #[test]
    fn gap_values() {
        assert!((gap(99.6, 100.1).unwrap() - 0.502).abs() < 5e-4);
        assert_eq!(gap(100.0, 100.0).unwrap(), 0.0);
        assert!((gap(80.7, 154.4).unwrap() - 91.3).abs() < 0.05);
        assert!(matches!(gap(0.0, 1.0), Err(Error::UndefinedGap { .. })));
        assert!((gap(996.0, 1001.0).unwrap() - gap(99.6, 100.1).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn brute_force_full_support_is_convex_optimum() {
        let inst = orthonormal();
        let h = HyperParams::new(0.5, 0.0, 3);
        let bf = brute_force_opt(&inst, &h).unwrap();
        let ridge = ridge_on_support(&inst, &[0, 1, 2], 0.5);
        assert!((bf.nu - objective(&ridge, &inst, &h).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn brute_force_l1_matches_soft_threshold() {
        // orthonormal columns decouple: βᵢ = soft(xᵢᵀy, μ/2)/(1 + λ)
        let inst = orthonormal();
        let h = HyperParams::new(0.2, 1.5, 3);
        let bf = brute_force_opt(&inst, &h).unwrap();
        let xty = inst.x.tr_mul(&inst.y);
        for i in 0..3 {
            let v = xty[i].signum() * (xty[i].abs() - 0.75).max(0.0) / 1.2;
            assert!((bf.beta[i] - v).abs() < 1e-12);
        }
    }

    #[test]
    fn enumeration_guard() {
        let x = DMatrix::from_fn(3, 40, |i, j| ((i + 1) * (j + 2)) as f64);
        let inst = RegressionInstance::new(x, DVector::from_element(3, 1.0)).unwrap();
        let err = brute_force_opt(&inst, &HyperParams::new(0.0, 0.0, 20)).unwrap_err();
        assert!(matches!(err, Error::TooManySupports { .. }));
    }

    #[test]
    fn singular_support_falls_back_to_ridge() {
        let x = DMatrix::from_column_slice(3, 2, &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
        let inst = RegressionInstance::new(x, DVector::from_column_slice(&[1.0, 2.0, 3.0])).unwrap();
        let beta = ridge_on_support(&inst, &[0, 1], 0.0);
        assert!(beta.iter().all(|v| v.is_finite()));
        assert!(objective(&beta, &inst, &HyperParams::new(0.0, 0.0, 2)).unwrap() < 1e-6);
    }
}
