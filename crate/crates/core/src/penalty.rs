//! Penalties induced by the relaxations: closed forms in two dimensions and
//! a conic evaluation of the rank-one penalty in any dimension.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formulations::{build_lifted, solve_compiled, RelaxationKind, RelaxationSpec, SolveOptions, Structure};
use crate::instance::{gram, HyperParams, RegressionInstance};

/// Quadratic form `[[1+δ₁, 1], [1, 1+δ₂]]` with Lagrange weight `κ` on `‖z‖₁`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Penalty2DParams {
    pub delta1: f64,
    pub delta2: f64,
    pub kappa: f64,
}

impl Penalty2DParams {
    pub fn new(delta1: f64, delta2: f64, kappa: f64) -> Result<Self> {
        for (name, v) in [("delta1", delta1), ("delta2", delta2), ("kappa", kappa)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(Penalty2DParams { delta1, delta2, kappa })
    }

    pub fn q2(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[1.0 + self.delta1, 1.0, 1.0, 1.0 + self.delta2])
    }

    /// `βᵀQ₂β`.
    pub fn quad(&self, beta: [f64; 2]) -> f64 {
        let [b1, b2] = beta;
        (b1 + b2) * (b1 + b2) + self.delta1 * b1 * b1 + self.delta2 * b2 * b2
    }
}

/// Substitution `β̄₁ = αβ₁`, `β̄₂ = (a₁₂/α)β₂` turning `a₁β₁² + 2a₁₂β₁β₂ + a₂β₂²`
/// into the normalized form with unit cross term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub alpha: f64,
    /// Sign of `a₁₂`; negative means `β̄₂` flips sign relative to `β₂`.
    pub sign: f64,
    pub delta1: f64,
    pub delta2: f64,
    /// Admissible range for `α`: `[|a₁₂|/√a₂, √a₁]`.
    pub alpha_range: (f64, f64),
    a12: f64,
}

impl Normalization {
    pub fn params(&self, kappa: f64) -> Result<Penalty2DParams> {
        Penalty2DParams::new(self.delta1, self.delta2, kappa)
    }

    /// Maps original coefficients to normalized ones.
    pub fn forward(&self, beta: [f64; 2]) -> [f64; 2] {
        [self.alpha * beta[0], self.a12 / self.alpha * beta[1]]
    }

    pub fn backward(&self, beta_bar: [f64; 2]) -> [f64; 2] {
        [beta_bar[0] / self.alpha, self.alpha / self.a12 * beta_bar[1]]
    }
}

fn admissible_range(a1: f64, a12: f64, a2: f64) -> Result<(f64, f64)> {
    if !(a1 > 0.0 && a2 > 0.0) || !a1.is_finite() || !a2.is_finite() || !a12.is_finite() {
        return Err(Error::InvalidArgument(format!("diagonal entries must be positive and finite, got {a1} and {a2}")));
    }
    if a12 == 0.0 {
        return Err(Error::Unsupported(
            "the quadratic form is separable (zero cross term); only the perspective penalty applies".into(),
        ));
    }
    if a1 * a2 < a12 * a12 {
        return Err(Error::InvalidArgument(format!("form ({a1}, {a12}, {a2}) is not positive semidefinite")));
    }
    let lo = a12.abs() / a2.sqrt();
    Ok((lo, a1.sqrt().max(lo)))
}

/// Normalizes with `α` at the geometric midpoint of the admissible range.
pub fn normalize_2d(a1: f64, a12: f64, a2: f64) -> Result<Normalization> {
    let (lo, hi) = admissible_range(a1, a12, a2)?;
    normalize_2d_with_alpha(a1, a12, a2, (lo * hi).sqrt())
}

/// Normalizes with a caller-chosen `α` from the admissible range.
pub fn normalize_2d_with_alpha(a1: f64, a12: f64, a2: f64, alpha: f64) -> Result<Normalization> {
    let (lo, hi) = admissible_range(a1, a12, a2)?;
    let slack = 1e-12 * hi;
    if !(alpha >= lo - slack && alpha <= hi + slack) {
        return Err(Error::InvalidArgument(format!("alpha = {alpha} lies outside the admissible range [{lo}, {hi}]")));
    }
    Ok(Normalization {
        alpha,
        sign: a12.signum(),
        delta1: (a1 / (alpha * alpha) - 1.0).max(0.0),
        delta2: (a2 * alpha * alpha / (a12 * a12) - 1.0).max(0.0),
        alpha_range: (lo, hi),
        a12,
    })
}

/// Per-coordinate perspective penalty `min_z δβ²/z + κz − δβ²`.
fn separable_term(delta: f64, beta: f64, kappa: f64) -> f64 {
    let q = delta * beta * beta;
    if q <= kappa {
        2.0 * (kappa * delta).sqrt() * beta.abs() - q
    } else {
        kappa
    }
}

/// Separable penalty induced by the perspective relaxation in two dimensions.
pub fn rho_mc_plus_2d(beta: [f64; 2], params: &Penalty2DParams) -> f64 {
    separable_term(params.delta1, beta[0], params.kappa) + separable_term(params.delta2, beta[1], params.kappa)
}

/// Which closed-form branch of the rank-one penalty applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum R1Branch {
    /// `z₁ + z₂ < 1`.
    Interior,
    /// `z₁ + z₂ = 1`.
    Simplex,
    /// `z₁ + z₂ > 1`, falls back to the separable penalty.
    Separable,
}

pub fn rho_r1_branch(beta: [f64; 2], params: &Penalty2DParams) -> R1Branch {
    let [b1, b2] = beta;
    let cross = 2.0 * (params.delta1 * params.delta2).sqrt() * (b1 * b2).abs();
    let s = params.quad(beta) + cross;
    let d = (params.delta1.sqrt() * b1.abs() + params.delta2.sqrt() * b2.abs()).powi(2);
    if s < params.kappa {
        R1Branch::Interior
    } else if d <= params.kappa {
        R1Branch::Simplex
    } else {
        R1Branch::Separable
    }
}

/// Non-separable penalty induced by the full rank-one strengthening in two dimensions.
pub fn rho_r1_2d(beta: [f64; 2], params: &Penalty2DParams) -> f64 {
    let [b1, b2] = beta;
    let cross = 2.0 * (params.delta1 * params.delta2).sqrt() * (b1 * b2).abs();
    match rho_r1_branch(beta, params) {
        R1Branch::Interior => {
            let s = params.quad(beta) + cross;
            2.0 * (params.kappa * s).sqrt() - params.quad(beta)
        }
        R1Branch::Simplex => params.kappa + cross,
        R1Branch::Separable => rho_mc_plus_2d(beta, params),
    }
}

/// Rank-one penalty `min φ(z, β) − βᵀQβ` over `z ∈ [0,1]ᵖ`, `eᵀz ≤ k`,
/// with rank-one strengthening on every subset of size at most `r`.
pub fn rho_r1_general(
    beta: &[f64],
    instance: &RegressionInstance,
    hyper: &HyperParams,
    r: usize,
    opts: &SolveOptions,
) -> Result<f64> {
    let p = instance.p();
    if beta.len() != p {
        return Err(Error::Dimension(format!("beta has {} entries, expected {p}", beta.len())));
    }
    if beta.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("beta must be finite".into()));
    }
    if r >= 3 && !opts.allow_high_order {
        return Err(Error::Unsupported(format!("r = {r} needs high-order relaxations enabled explicitly")));
    }
    if beta.iter().all(|&v| v == 0.0) {
        hyper.validate(p)?;
        return Ok(0.0);
    }
    let spec = RelaxationSpec::new(RelaxationKind::SdpR(r), HyperParams { mu: 0.0, ..*hyper });
    let structure = Structure::for_kind(spec.kind, p)?;
    let compiled = build_lifted(instance, spec, &structure, Some(beta))?;
    let sol = solve_compiled(&compiled, opts)?;
    let q = gram(instance, hyper.lambda);
    let b = DVector::from_column_slice(beta);
    Ok(sol.nu_lb - b.dot(&(&q * &b)))
}

/// One row of a penalty surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub beta1: f64,
    pub beta2: f64,
    pub rho_mc_plus: f64,
    pub rho_r1: f64,
}

/// Both penalties on a square grid of `steps × steps` points over `[-extent, extent]²`.
pub fn penalty_surface(params: &Penalty2DParams, extent: f64, steps: usize) -> Result<Vec<SurfacePoint>> {
    if !(extent > 0.0 && extent.is_finite()) || steps < 2 {
        return Err(Error::InvalidArgument("surface needs a positive extent and at least 2 steps".into()));
    }
    let coord = |i: usize| -extent + 2.0 * extent * i as f64 / (steps - 1) as f64;
    let mut out = Vec::with_capacity(steps * steps);
    for i in 0..steps {
        for j in 0..steps {
            let beta = [coord(i), coord(j)];
            out.push(SurfacePoint {
                beta1: beta[0],
                beta2: beta[1],
                rho_mc_plus: rho_mc_plus_2d(beta, params),
                rho_r1: rho_r1_2d(beta, params),
            });
        }
    }
    Ok(out)
}

pub fn write_surface_csv<W: Write>(points: &[SurfacePoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for pt in points {
        w.serialize(pt).map_err(|e| Error::InvalidArgument(format!("csv write failed: {e}")))?;
    }
    w.flush()?;
    Ok(())
}
