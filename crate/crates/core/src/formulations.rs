//! Conic relaxations of cardinality-constrained least squares.
//!
//! Every builder works on a copy of the data with `y` scaled to unit norm
//! (coefficients scale by `‖y‖`, objective values by `‖y‖²`, and the ℓ1
//! weight by `1/‖y‖`); extraction undoes the scaling. The constant `yᵀy`
//! is kept out of the conic program and added back at extraction.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::conic::model::{Expr, ProgramBuilder};
use crate::conic::{self, linalg, ConeProgram, ConeSolution, Residuals, SolveStatus};
use crate::error::{Error, Result};
use crate::instance::{gram, HyperParams, RegressionInstance};

/// Family of relaxation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "r", rename_all = "snake_case")]
pub enum RelaxationKind {
    /// Perspective relaxation with `λ Σ βᵢ²/zᵢ`; requires `λ > 0`.
    Persp,
    /// Rank-one strengthening over every subset of size at most `r`.
    SdpR(usize),
    /// `SdpR(2)` with the full PSD block replaced by eigenvector cuts.
    SdpLb,
    /// Diagonally dominant decomposition with pairwise rank-one terms.
    SdpDd,
    /// Conic-quadratic outer approximation refined by separation rounds.
    Cuts,
}

impl RelaxationKind {
    pub fn label(&self) -> String {
        match self {
            RelaxationKind::Persp => "persp".into(),
            RelaxationKind::SdpR(r) => format!("sdp{r}"),
            RelaxationKind::SdpLb => "sdplb".into(),
            RelaxationKind::SdpDd => "sdpdd".into(),
            RelaxationKind::Cuts => "cuts".into(),
        }
    }
}

impl std::str::FromStr for RelaxationKind {
    type Err = Error;

    /// Inverse of [`RelaxationKind::label`].
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "persp" => Ok(RelaxationKind::Persp),
            "sdplb" => Ok(RelaxationKind::SdpLb),
            "sdpdd" => Ok(RelaxationKind::SdpDd),
            "cuts" => Ok(RelaxationKind::Cuts),
            _ => s
                .strip_prefix("sdp")
                .and_then(|r| r.parse().ok())
                .filter(|&r: &usize| r >= 1)
                .map(RelaxationKind::SdpR)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown relaxation '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelaxationSpec {
    pub kind: RelaxationKind,
    pub hyper: HyperParams,
}

impl RelaxationSpec {
    pub fn new(kind: RelaxationKind, hyper: HyperParams) -> Self {
        RelaxationSpec { kind, hyper }
    }
}

/// Knobs shared by the builders and the solve wrapper.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iters: usize,
    /// Permits `SdpR(r)` with `r ≥ 3`, whose block count grows as `C(p, r)`.
    pub allow_high_order: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol: conic::DEFAULT_TOL, max_iters: conic::DEFAULT_MAX_ITERS, allow_high_order: false }
    }
}

/// How `(zᵢ, βᵢ, Bᵢᵢ)` is coupled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SingletonForm {
    /// Order-2 PSD block `[[zᵢ, βᵢ], [βᵢ, Bᵢᵢ]]`.
    Psd,
    /// Rotated cone `zᵢBᵢᵢ ≥ βᵢ²`.
    Rotated,
}

/// Treatment of the `B − ββᵀ ⪰ 0` constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsdMode {
    /// One order-`p+1` PSD block.
    FullPsd,
    /// `VⱼᵀBVⱼ ≥ (Vⱼᵀβ)²` for the leading `min(n, p)` eigenvectors of `XᵀX`.
    EigenCuts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutSign {
    Plus,
    Minus,
}

impl CutSign {
    pub fn factor(self) -> f64 {
        match self {
            CutSign::Plus => 1.0,
            CutSign::Minus => -1.0,
        }
    }
}

/// `(√α βᵢ ± βⱼ/√α)² ≤ wᵢⱼ (αBᵢᵢ + Bⱼⱼ/α ± 2Bᵢⱼ)` for a pair `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairCut {
    pub i: usize,
    pub j: usize,
    pub alpha: f64,
    pub sign: CutSign,
}

/// Constraint layout of a lifted relaxation in `(β, z, u, B, w)` space.
#[derive(Debug, Clone, PartialEq)]
pub struct Structure {
    pub singleton: SingletonForm,
    /// Subsets with `|T| ≥ 2` that get a PSD block and a `w_T` variable.
    pub subsets: Vec<Vec<usize>>,
    /// Pairs that get a `wᵢⱼ` variable without a PSD block.
    pub pair_weights: Vec<(usize, usize)>,
    pub cuts: Vec<PairCut>,
    pub psd_mode: PsdMode,
}

/// Subsets of `{0..p}` with sizes in `[lo, hi]`, in colexicographic order.
pub fn colex_subsets(p: usize, lo: usize, hi: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for size in lo.max(1)..=hi.min(p) {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            out.push(idx.clone());
            let mut t = size;
            while t > 0 && idx[t - 1] == p - size + t - 1 {
                t -= 1;
            }
            if t == 0 {
                break;
            }
            idx[t - 1] += 1;
            for s in t..size {
                idx[s] = idx[s - 1] + 1;
            }
        }
    }
    out.sort_by(|a, b| a.iter().rev().cmp(b.iter().rev()).then(a.len().cmp(&b.len())));
    out
}

fn n_choose(p: usize, r: usize) -> u128 {
    (0..r as u128).fold(1u128, |acc, i| acc * (p as u128 - i) / (i + 1))
}

impl Structure {
    /// Layout of `SdpR(r)`, `SdpLb` or `SdpDd`.
    pub fn for_kind(kind: RelaxationKind, p: usize) -> Result<Structure> {
        let pairs = || colex_subsets(p, 2, 2).into_iter().map(|t| (t[0], t[1])).collect::<Vec<_>>();
        Ok(match kind {
            RelaxationKind::SdpR(r) => {
                if r == 0 || r > p {
                    return Err(Error::InvalidArgument(format!("sdp order r must lie in [1, {p}], got {r}")));
                }
                Structure {
                    singleton: SingletonForm::Psd,
                    subsets: colex_subsets(p, 2, r),
                    pair_weights: Vec::new(),
                    cuts: Vec::new(),
                    psd_mode: PsdMode::FullPsd,
                }
            }
            RelaxationKind::SdpLb => Structure {
                singleton: SingletonForm::Psd,
                subsets: colex_subsets(p, 2, 2),
                pair_weights: Vec::new(),
                cuts: Vec::new(),
                psd_mode: PsdMode::EigenCuts,
            },
            RelaxationKind::SdpDd => Structure {
                singleton: SingletonForm::Rotated,
                subsets: Vec::new(),
                pair_weights: pairs(),
                cuts: pairs()
                    .into_iter()
                    .flat_map(|(i, j)| {
                        [CutSign::Plus, CutSign::Minus].map(|sign| PairCut { i, j, alpha: 1.0, sign })
                    })
                    .collect(),
                psd_mode: PsdMode::FullPsd,
            },
            RelaxationKind::Persp | RelaxationKind::Cuts => {
                return Err(Error::Unsupported(format!("{} has no fixed lifted layout", kind.label())))
            }
        })
    }
}

/// Conic program plus what is needed to map its solution back.
#[derive(Debug, Clone)]
pub struct CompiledRelaxation {
    pub program: ConeProgram,
    pub spec: RelaxationSpec,
    /// Coefficients are divided by this before building.
    pub scale: f64,
    /// Constant `yᵀy` in original units.
    pub offset: f64,
    /// `β` when it is data rather than a variable.
    pub fixed_beta: Option<Vec<f64>>,
    pub p: usize,
}

/// Weight attached to a subset (`w_T`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetWeight {
    pub subset: Vec<usize>,
    pub value: f64,
}

/// Relaxation optimum in original units.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedSolution {
    pub spec: RelaxationSpec,
    pub beta: Vec<f64>,
    pub z: Vec<f64>,
    /// ℓ1 epigraph; equals `|β|` when `μ = 0` and the variables are dropped.
    pub u: Vec<f64>,
    /// Lifted surrogate of `ββᵀ` (absent for the perspective relaxation).
    pub b: Option<DMatrix<f64>>,
    /// Perspective epigraph `tᵢ ≥ βᵢ²/zᵢ` (perspective relaxation only).
    pub t: Option<Vec<f64>>,
    pub w: Vec<SubsetWeight>,
    /// Lower bound `ν_ℓ`.
    pub nu_lb: f64,
    pub status: SolveStatus,
    pub residuals: Residuals,
    pub iterations: usize,
}

impl RelaxedSolution {
    /// Value of the relaxation objective at the extracted point.
    pub fn objective(&self, instance: &RegressionInstance) -> f64 {
        let hyper = self.spec.hyper;
        let xty = instance.x.tr_mul(&instance.y);
        let beta = DVector::from_column_slice(&self.beta);
        let mut v = instance.y.dot(&instance.y) - 2.0 * xty.dot(&beta);
        if hyper.mu > 0.0 {
            v += hyper.mu * self.u.iter().sum::<f64>();
        }
        match (&self.b, &self.t) {
            (Some(b), _) => v += gram(instance, hyper.lambda).dot(b),
            (None, Some(t)) => {
                let xb = &instance.x * &beta;
                v += xb.dot(&xb) + hyper.lambda * t.iter().sum::<f64>();
            }
            (None, None) => {}
        }
        v
    }

    pub fn weight(&self, subset: &[usize]) -> Option<f64> {
        self.w.iter().find(|w| w.subset == subset).map(|w| w.value)
    }
}

fn scale_of(v: f64) -> f64 {
    if v > 0.0 && v.is_finite() {
        v
    } else {
        1.0
    }
}

fn name_b(i: usize, j: usize) -> String {
    format!("B[{},{}]", i.min(j), i.max(j))
}

fn subset_name(t: &[usize]) -> String {
    let parts: Vec<String> = t.iter().map(|i| i.to_string()).collect();
    format!("w[{}]", parts.join(","))
}

struct Lifted {
    beta: Vec<Expr>,
    z: Vec<usize>,
    b: DMatrix<usize>,
}

impl Lifted {
    fn b(&self, i: usize, j: usize) -> Expr {
        Expr::var(self.b[(i.min(j), i.max(j))])
    }
}

/// Builds the lifted relaxation for an arbitrary [`Structure`].
///
/// With `fixed_beta`, `β` is data and the objective reduces to `⟨Q, B⟩`.
pub fn build_lifted(
    instance: &RegressionInstance,
    spec: RelaxationSpec,
    structure: &Structure,
    fixed_beta: Option<&[f64]>,
) -> Result<CompiledRelaxation> {
    let p = instance.p();
    let hyper = spec.hyper;
    hyper.validate(p)?;
    for cut in &structure.cuts {
        if !(cut.alpha > 0.0 && cut.alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("cut multiplier must be positive and finite, got {}", cut.alpha)));
        }
        if cut.i >= cut.j || cut.j >= p {
            return Err(Error::InvalidArgument(format!("cut pair ({}, {}) is not an ordered pair below {p}", cut.i, cut.j)));
        }
    }
    let scale = match fixed_beta {
        Some(beta) => {
            if beta.len() != p {
                return Err(Error::Dimension(format!("beta has {} entries, expected {p}", beta.len())));
            }
            scale_of(beta.iter().map(|v| v * v).sum::<f64>().sqrt())
        }
        None => scale_of(instance.y.norm()),
    };
    let q = gram(instance, hyper.lambda);
    let mut m = ProgramBuilder::new();

    let beta: Vec<Expr> = match fixed_beta {
        Some(b) => b.iter().map(|v| Expr::constant(v / scale)).collect(),
        None => (0..p).map(|i| Expr::var(m.add_var(format!("beta[{i}]")))).collect(),
    };
    let z: Vec<usize> = (0..p).map(|i| m.add_var(format!("z[{i}]"))).collect();
    let with_u = fixed_beta.is_none() && hyper.mu > 0.0;
    let u: Vec<usize> = if with_u { (0..p).map(|i| m.add_var(format!("u[{i}]"))).collect() } else { Vec::new() };
    let mut bidx = DMatrix::zeros(p, p);
    for j in 0..p {
        for i in 0..=j {
            let v = m.add_var(name_b(i, j));
            bidx[(i, j)] = v;
            bidx[(j, i)] = v;
        }
    }
    let lifted = Lifted { beta, z, b: bidx };

    if fixed_beta.is_none() {
        let xty = instance.x.tr_mul(&instance.y) / scale;
        for i in 0..p {
            if let Some((v, _)) = lifted.beta[i].terms.first() {
                m.add_cost(*v, -2.0 * xty[i]);
            }
        }
    }
    for &ui in &u {
        m.add_cost(ui, hyper.mu / scale);
    }
    for j in 0..p {
        for i in 0..=j {
            let coef = if i == j { q[(i, i)] } else { 2.0 * q[(i, j)] };
            m.add_cost(lifted.b[(i, j)], coef);
        }
    }

    m.nonneg(Expr::constant(hyper.k as f64) - Expr::sum(lifted.z.iter().map(|&v| Expr::var(v))));
    for &zi in &lifted.z {
        m.nonneg(Expr::var(zi));
        m.nonneg(Expr::constant(1.0) - Expr::var(zi));
    }
    for (i, &ui) in u.iter().enumerate() {
        m.nonneg(Expr::var(ui) - lifted.beta[i].clone());
        m.nonneg(Expr::var(ui) + lifted.beta[i].clone());
    }

    for i in 0..p {
        let (zi, bi) = (Expr::var(lifted.z[i]), lifted.b(i, i));
        match structure.singleton {
            SingletonForm::Psd => m.psd(&[vec![zi.clone(), Expr::zero()], vec![lifted.beta[i].clone(), bi]]),
            SingletonForm::Rotated => m.hyperbolic(zi, bi, lifted.beta[i].clone()),
        }
    }

    let mut weight_of: HashMap<(usize, usize), usize> = HashMap::new();
    let add_weight = |m: &mut ProgramBuilder, t: &[usize]| -> usize {
        let w = m.add_var(subset_name(t));
        m.nonneg(Expr::var(w));
        m.nonneg(Expr::constant(1.0) - Expr::var(w));
        m.nonneg(Expr::sum(t.iter().map(|&i| Expr::var(lifted.z[i]))) - Expr::var(w));
        w
    };
    for t in &structure.subsets {
        let w = add_weight(&mut m, t);
        if t.len() == 2 {
            weight_of.insert((t[0], t[1]), w);
        }
        let order = t.len() + 1;
        let mut mat = vec![vec![Expr::zero(); order]; order];
        mat[0][0] = Expr::var(w);
        for (a, &i) in t.iter().enumerate() {
            mat[a + 1][0] = lifted.beta[i].clone();
            for (c, &j) in t.iter().enumerate().take(a + 1) {
                mat[a + 1][c + 1] = lifted.b(i, j);
            }
        }
        m.psd(&mat);
    }
    for &(i, j) in &structure.pair_weights {
        weight_of.entry((i, j)).or_insert_with(|| add_weight(&mut m, &[i, j]));
    }
    for cut in &structure.cuts {
        let w = *weight_of.get(&(cut.i, cut.j)).ok_or_else(|| {
            Error::InvalidArgument(format!("cut on pair ({}, {}) has no weight variable", cut.i, cut.j))
        })?;
        // divide through by max(α, 1/α) so coefficients stay in [0, 1]
        let s = cut.sign.factor();
        let (ci, cj) = if cut.alpha >= 1.0 { (1.0, 1.0 / cut.alpha) } else { (cut.alpha, 1.0) };
        let rhs = lifted.b(cut.i, cut.i) * (ci * ci) + lifted.b(cut.j, cut.j) * (cj * cj) + lifted.b(cut.i, cut.j) * (2.0 * s * ci * cj);
        let lhs = lifted.beta[cut.i].clone() * ci + lifted.beta[cut.j].clone() * (s * cj);
        m.hyperbolic(Expr::var(w), rhs, lhs);
    }

    match structure.psd_mode {
        PsdMode::FullPsd => {
            let mut mat = vec![vec![Expr::zero(); p + 1]; p + 1];
            mat[0][0] = Expr::constant(1.0);
            for i in 0..p {
                mat[i + 1][0] = lifted.beta[i].clone();
                for j in 0..=i {
                    mat[i + 1][j + 1] = lifted.b(i, j);
                }
            }
            m.psd(&mat);
        }
        PsdMode::EigenCuts => {
            let (_, vecs) = linalg::eigendecompose(&instance.x.tr_mul(&instance.x))?;
            for c in 0..instance.n().min(p) {
                let v = vecs.column(c);
                let mut vbv = Expr::zero();
                let mut vb = Expr::zero();
                for i in 0..p {
                    vb = vb + lifted.beta[i].clone() * v[i];
                    for j in 0..p {
                        vbv = vbv + lifted.b(i, j) * (v[i] * v[j]);
                    }
                }
                m.hyperbolic(vbv, Expr::constant(1.0), vb);
            }
        }
    }

    Ok(CompiledRelaxation {
        program: m.build()?,
        spec,
        scale,
        offset: instance.y.dot(&instance.y),
        fixed_beta: fixed_beta.map(<[f64]>::to_vec),
        p,
    })
}

/// Continuous perspective relaxation with `λ Σ βᵢ²/zᵢ`.
pub fn build_persp(instance: &RegressionInstance, hyper: HyperParams) -> Result<CompiledRelaxation> {
    let p = instance.p();
    hyper.validate(p)?;
    if !(hyper.lambda > 0.0) {
        return Err(Error::Unsupported("the perspective relaxation may only be used with lambda > 0".into()));
    }
    let scale = scale_of(instance.y.norm());
    let mut m = ProgramBuilder::new();
    let beta: Vec<usize> = (0..p).map(|i| m.add_var(format!("beta[{i}]"))).collect();
    let z: Vec<usize> = (0..p).map(|i| m.add_var(format!("z[{i}]"))).collect();
    let t: Vec<usize> = (0..p).map(|i| m.add_var(format!("t[{i}]"))).collect();
    let s = m.add_var("s");
    let u: Vec<usize> = if hyper.mu > 0.0 { (0..p).map(|i| m.add_var(format!("u[{i}]"))).collect() } else { Vec::new() };

    let xty = instance.x.tr_mul(&instance.y) / scale;
    for i in 0..p {
        m.add_cost(beta[i], -2.0 * xty[i]);
        m.add_cost(t[i], hyper.lambda);
    }
    m.add_cost(s, 1.0);
    for &ui in &u {
        m.add_cost(ui, hyper.mu / scale);
    }

    m.nonneg(Expr::constant(hyper.k as f64) - Expr::sum(z.iter().map(|&v| Expr::var(v))));
    for i in 0..p {
        m.nonneg(Expr::var(z[i]));
        m.nonneg(Expr::constant(1.0) - Expr::var(z[i]));
        m.hyperbolic(Expr::var(t[i]), Expr::var(z[i]), Expr::var(beta[i]));
    }
    for (i, &ui) in u.iter().enumerate() {
        m.nonneg(Expr::var(ui) - Expr::var(beta[i]));
        m.nonneg(Expr::var(ui) + Expr::var(beta[i]));
    }
    // ‖Fβ‖² ≤ s with FᵀF = XᵀX
    let (vals, vecs) = linalg::eigendecompose(&instance.x.tr_mul(&instance.x))?;
    let top = vals.iter().copied().fold(0.0, f64::max);
    let rows: Vec<Expr> = (0..p)
        .filter(|&c| vals[c] > 1e-12 * top)
        .map(|c| Expr::sum((0..p).map(|i| Expr::var(beta[i]) * (vals[c].sqrt() * vecs[(i, c)]))))
        .collect();
    m.rotated(Expr::var(s), Expr::constant(0.5), rows);

    Ok(CompiledRelaxation {
        program: m.build()?,
        spec: RelaxationSpec::new(RelaxationKind::Persp, hyper),
        scale,
        offset: instance.y.dot(&instance.y),
        fixed_beta: None,
        p,
    })
}

/// `SdpR(r)`: one PSD block per subset of size at most `r` plus the full block.
pub fn build_sdp_r(instance: &RegressionInstance, hyper: HyperParams, r: usize, opts: &SolveOptions) -> Result<CompiledRelaxation> {
    let p = instance.p();
    if r == 0 || r > p {
        return Err(Error::InvalidArgument(format!("sdp order r must lie in [1, {p}], got {r}")));
    }
    if r >= 3 {
        let blocks: u128 = (1..=r).map(|s| n_choose(p, s)).sum();
        if !opts.allow_high_order {
            return Err(Error::Unsupported(format!(
                "sdp{r} needs {blocks} PSD blocks at p = {p}; enable high-order relaxations explicitly"
            )));
        }
        log::warn!("sdp{r} at p = {p} builds {blocks} PSD blocks");
    }
    let spec = RelaxationSpec::new(RelaxationKind::SdpR(r), hyper);
    build_lifted(instance, spec, &Structure::for_kind(spec.kind, p)?, None)
}

pub fn build_sdp_lb(instance: &RegressionInstance, hyper: HyperParams) -> Result<CompiledRelaxation> {
    let spec = RelaxationSpec::new(RelaxationKind::SdpLb, hyper);
    build_lifted(instance, spec, &Structure::for_kind(spec.kind, instance.p())?, None)
}

pub fn build_sdp_dd(instance: &RegressionInstance, hyper: HyperParams) -> Result<CompiledRelaxation> {
    let spec = RelaxationSpec::new(RelaxationKind::SdpDd, hyper);
    build_lifted(instance, spec, &Structure::for_kind(spec.kind, instance.p())?, None)
}

/// Dispatches on the relaxation kind.
pub fn build(instance: &RegressionInstance, spec: RelaxationSpec, opts: &SolveOptions) -> Result<CompiledRelaxation> {
    match spec.kind {
        RelaxationKind::Persp => build_persp(instance, spec.hyper),
        RelaxationKind::SdpR(r) => build_sdp_r(instance, spec.hyper, r, opts),
        RelaxationKind::SdpLb => build_sdp_lb(instance, spec.hyper),
        RelaxationKind::SdpDd => build_sdp_dd(instance, spec.hyper),
        RelaxationKind::Cuts => {
            let pool = crate::cutting::CutPool::sdd_start(instance.p());
            crate::cutting::build_cut_relaxation(instance, spec.hyper, &pool, PsdMode::FullPsd)
        }
    }
}

fn parse_name(name: &str) -> Option<(&str, Vec<usize>)> {
    let open = name.find('[')?;
    let inner = name[open + 1..].strip_suffix(']')?;
    let idx: Option<Vec<usize>> = inner.split(',').map(|s| s.parse().ok()).collect();
    Some((&name[..open], idx?))
}

/// Checks the solver status against `tol` (accepting `max_iters` within `10·tol`).
pub fn check_status(sol: &ConeSolution, tol: f64) -> Result<()> {
    match sol.status {
        SolveStatus::Optimal => Ok(()),
        SolveStatus::MaxIters if sol.residuals.max() <= 10.0 * tol => {
            log::warn!("accepting unconverged relaxation at residual {:.2e}", sol.residuals.max());
            Ok(())
        }
        SolveStatus::MaxIters => Err(Error::IterationLimit { residual: sol.residuals.max(), iterations: sol.iterations }),
        SolveStatus::InfeasibleCertificate => Err(Error::Infeasible { ray: sol.y_dual.clone() }),
        SolveStatus::UnboundedCertificate => Err(Error::Unbounded { ray: sol.x.clone() }),
    }
}

/// Maps a conic solution back to named relaxation variables in original units.
pub fn extract(compiled: &CompiledRelaxation, sol: &ConeSolution, tol: f64) -> Result<RelaxedSolution> {
    check_status(sol, tol)?;
    let p = compiled.p;
    let c = compiled.scale;
    let names = compiled
        .program
        .var_names
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("program carries no variable names".into()))?;
    let mut beta = compiled.fixed_beta.clone().unwrap_or_else(|| vec![0.0; p]);
    let mut z = vec![0.0; p];
    let mut u: Option<Vec<f64>> = None;
    let mut t: Option<Vec<f64>> = None;
    let mut b: Option<DMatrix<f64>> = None;
    let mut w = Vec::new();
    for (name, &v) in names.iter().zip(&sol.x) {
        let Some((prefix, idx)) = parse_name(name) else { continue };
        match (prefix, idx.as_slice()) {
            ("beta", [i]) => beta[*i] = v * c,
            ("z", [i]) => {
                if v < -tol || v > 1.0 + tol {
                    log::warn!("z[{i}] = {v:.3e} lies outside [0, 1] beyond tolerance");
                }
                z[*i] = v.clamp(0.0, 1.0);
            }
            ("u", [i]) => u.get_or_insert_with(|| vec![0.0; p])[*i] = v * c,
            ("t", [i]) => t.get_or_insert_with(|| vec![0.0; p])[*i] = v * c * c,
            ("B", [i, j]) => {
                let m = b.get_or_insert_with(|| DMatrix::zeros(p, p));
                m[(*i, *j)] = v * c * c;
                m[(*j, *i)] = v * c * c;
            }
            ("w", subset) => w.push(SubsetWeight { subset: subset.to_vec(), value: v.clamp(0.0, 1.0) }),
            _ => {}
        }
    }
    let u = u.unwrap_or_else(|| beta.iter().map(|v| v.abs()).collect());
    let nu_lb = match &compiled.fixed_beta {
        Some(_) => sol.primal_obj * c * c,
        None => compiled.offset + sol.primal_obj * c * c,
    };
    Ok(RelaxedSolution {
        spec: compiled.spec,
        beta,
        z,
        u,
        b: b.map(|m| linalg::symmetrize(&m)),
        t,
        w,
        nu_lb,
        status: sol.status,
        residuals: sol.residuals,
        iterations: sol.iterations,
    })
}

/// Builds, solves and extracts in one call.
///
/// `Cuts` runs the separation loop with default settings.
pub fn solve_relaxation(instance: &RegressionInstance, spec: RelaxationSpec, opts: &SolveOptions) -> Result<RelaxedSolution> {
    if spec.kind == RelaxationKind::Cuts {
        let settings = crate::cutting::CutLoopSettings { solve: *opts, ..Default::default() };
        let pool = crate::cutting::CutPool::sdd_start(instance.p());
        return Ok(crate::cutting::cut_loop(instance, spec.hyper, pool, PsdMode::FullPsd, &settings)?.solution);
    }
    let compiled = build(instance, spec, opts)?;
    solve_compiled(&compiled, opts)
}

pub fn solve_compiled(compiled: &CompiledRelaxation, opts: &SolveOptions) -> Result<RelaxedSolution> {
    let sol = conic::solve(&compiled.program, opts.tol, opts.max_iters)?;
    extract(compiled, &sol, opts.tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> RegressionInstance {
        RegressionInstance::new(DMatrix::from_element(1, 1, 1.0), DVector::from_element(1, 1.0)).unwrap()
    }

    fn opts() -> SolveOptions {
        SolveOptions { tol: 1e-8, ..SolveOptions::default() }
    }

    fn random_instance(n: usize, p: usize, seed: u64) -> RegressionInstance {
        // small LCG keeps the test independent of the generator module
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let x = DMatrix::from_fn(n, p, |_, _| next());
        let y = DVector::from_fn(n, |i, _| x[(i, 0)] - 0.5 * x[(i, p - 1)] + 0.3 * next());
        RegressionInstance::new(x, y).unwrap().standardize().unwrap()
    }

    #[test]
    fn labels_parse_back() {
        for kind in [RelaxationKind::Persp, RelaxationKind::SdpR(1), RelaxationKind::SdpR(3), RelaxationKind::SdpLb, RelaxationKind::SdpDd, RelaxationKind::Cuts] {
            assert_eq!(kind.label().parse::<RelaxationKind>().unwrap(), kind);
        }
        for bad in ["sdp0", "sdp", "sdpx", "SDP2", ""] {
            assert!(bad.parse::<RelaxationKind>().is_err(), "{bad}");
        }
    }

    #[test]
    fn colex_order_and_counts() {
        let s = colex_subsets(4, 2, 3);
        assert_eq!(s.len(), 6 + 4);
        assert_eq!(&s[..4], &[vec![0, 1], vec![0, 2], vec![1, 2], vec![0, 1, 2]]);
        assert_eq!(s[4], vec![0, 3]);
        assert_eq!(colex_subsets(3, 1, 1), vec![vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn sdp2_block_counts_for_three_variables() {
        let inst = random_instance(6, 3, 1);
        let c = build_sdp_r(&inst, HyperParams::new(0.0, 0.0, 2), 2, &opts()).unwrap();
        let psd: Vec<usize> = c
            .program
            .cones
            .iter()
            .filter_map(|k| if let conic::ConeSpec::Psd(n) = k { Some(*n) } else { None })
            .collect();
        assert_eq!(psd.iter().filter(|&&n| n == 2).count(), 3);
        assert_eq!(psd.iter().filter(|&&n| n == 3).count(), 3);
        assert_eq!(psd.iter().filter(|&&n| n == 4).count(), 1);
        let names = c.program.var_names.as_ref().unwrap();
        assert_eq!(names.iter().filter(|n| n.starts_with("w[")).count(), 3);
    }

    #[test]
    fn persp_one_dimensional_calculus() {
        // min 1 − 2β + β² + β²/z over z ∈ [0, 1]: z = 1, β = 1/2, value 1/2
        let sol = solve_relaxation(&tiny(), RelaxationSpec::new(RelaxationKind::Persp, HyperParams::new(1.0, 0.0, 1)), &opts()).unwrap();
        assert!((sol.nu_lb - 0.5).abs() < 1e-6, "{}", sol.nu_lb);
        assert!((sol.beta[0] - 0.5).abs() < 1e-5);
        assert!((sol.z[0] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn persp_rejects_zero_lambda() {
        let err = build_persp(&tiny(), HyperParams::new(0.0, 0.0, 1)).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
    }

    #[test]
    fn high_order_requires_flag() {
        let inst = random_instance(8, 4, 2);
        let h = HyperParams::new(0.0, 0.0, 2);
        assert!(matches!(build_sdp_r(&inst, h, 3, &opts()), Err(Error::Unsupported(_))));
        let o = SolveOptions { allow_high_order: true, ..opts() };
        assert!(build_sdp_r(&inst, h, 3, &o).is_ok());
        assert!(build_sdp_r(&inst, h, 5, &o).is_err());
    }

    #[test]
    fn ridge_when_cardinality_is_slack() {
        let inst = random_instance(12, 4, 3);
        let lambda = 0.1;
        let q = gram(&inst, lambda);
        let rhs = inst.x.tr_mul(&inst.y);
        let beta = q.clone().cholesky().unwrap().solve(&rhs);
        let ridge = inst.y.dot(&inst.y) - rhs.dot(&beta);
        for kind in [RelaxationKind::SdpR(1), RelaxationKind::SdpR(2), RelaxationKind::SdpDd, RelaxationKind::Persp] {
            let sol = solve_relaxation(&inst, RelaxationSpec::new(kind, HyperParams::new(lambda, 0.0, 4)), &opts()).unwrap();
            assert!((sol.nu_lb - ridge).abs() < 1e-6 * (1.0 + ridge), "{kind:?}: {} vs {ridge}", sol.nu_lb);
        }
    }

    #[test]
    fn extracted_point_reproduces_bound() {
        let inst = random_instance(10, 4, 4);
        for (kind, mu) in [(RelaxationKind::SdpR(2), 0.05), (RelaxationKind::SdpDd, 0.0), (RelaxationKind::Persp, 0.02), (RelaxationKind::SdpLb, 0.0)] {
            let spec = RelaxationSpec::new(kind, HyperParams::new(0.05, mu, 2));
            let sol = solve_relaxation(&inst, spec, &opts()).unwrap();
            let again = sol.objective(&inst);
            assert!((again - sol.nu_lb).abs() < 1e-6 * (1.0 + sol.nu_lb.abs()), "{kind:?}: {again} vs {}", sol.nu_lb);
            assert!(sol.z.iter().sum::<f64>() <= 2.0 + 1e-6);
            if let Some(b) = &sol.b {
                let beta = DVector::from_column_slice(&sol.beta);
                let resid = b - &beta * beta.transpose();
                assert!(linalg::min_eigenvalue(&resid).unwrap() > -1e-5);
                assert_eq!(b, &b.transpose());
            }
        }
    }

    #[test]
    fn sdp1_matches_dd_on_one_variable() {
        let x = DMatrix::from_column_slice(3, 1, &[1.0, -1.0, 0.5]);
        let inst = RegressionInstance::new(x, DVector::from_column_slice(&[1.0, 0.0, 2.0])).unwrap();
        let h = HyperParams::new(0.2, 0.0, 1);
        let a = solve_relaxation(&inst, RelaxationSpec::new(RelaxationKind::SdpR(1), h), &opts()).unwrap();
        let b = solve_relaxation(&inst, RelaxationSpec::new(RelaxationKind::SdpDd, h), &opts()).unwrap();
        assert!((a.nu_lb - b.nu_lb).abs() < 1e-7 * (1.0 + a.nu_lb));
    }

    #[test]
    fn text_format_roundtrips_a_relaxation() {
        let inst = random_instance(6, 3, 5);
        let c = build_sdp_dd(&inst, HyperParams::new(0.0, 0.0, 1)).unwrap();
        let back = ConeProgram::from_text(&c.program.to_text()).unwrap();
        assert_eq!(back.cones, c.program.cones);
        assert_eq!(back.b, c.program.b);
    }

    #[test]
    fn rejects_bad_cut() {
        let inst = random_instance(6, 3, 6);
        let mut s = Structure::for_kind(RelaxationKind::SdpDd, 3).unwrap();
        s.cuts[0].alpha = 0.0;
        let spec = RelaxationSpec::new(RelaxationKind::SdpDd, HyperParams::new(0.0, 0.0, 1));
        assert!(build_lifted(&inst, spec, &s, None).is_err());
    }
}
