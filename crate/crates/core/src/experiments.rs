//! Synthetic instances, estimation metrics, the elastic-net baseline and
//! validation-based model selection.

use std::io::Write;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{count_nonzeros, BoundCertificate, NONZERO_THRESHOLD};
use crate::conic::linalg;
use crate::error::{Error, Result};
use crate::formulations::{solve_relaxation, RelaxationKind, RelaxationSpec, SolveOptions};
use crate::instance::{HyperParams, RegressionInstance};

/// Parameters of a synthetic regression instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub p: usize,
    /// The first `s` true coefficients are one, the rest zero.
    pub s: usize,
    /// Autocorrelation: `Σᵢⱼ = ρ^|i−j|`.
    pub rho: f64,
    pub snr: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 {
            return Err(Error::InvalidArgument("n and p must be positive".into()));
        }
        if self.s > self.p {
            return Err(Error::InvalidArgument(format!("s = {} exceeds p = {}", self.s, self.p)));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::InvalidArgument(format!("rho must lie in [0, 1), got {}", self.rho)));
        }
        if !(self.snr > 0.0 && self.snr.is_finite()) {
            return Err(Error::InvalidArgument(format!("snr must be positive, got {}", self.snr)));
        }
        Ok(())
    }

    pub fn sigma(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.p, self.p, |i, j| self.rho.powi(i.abs_diff(j) as i32))
    }

    pub fn beta0(&self) -> DVector<f64> {
        DVector::from_fn(self.p, |i, _| if i < self.s { 1.0 } else { 0.0 })
    }

    /// Noise variance `β₀ᵀΣβ₀ / SNR`.
    pub fn sigma2(&self) -> f64 {
        let b = self.beta0();
        b.dot(&(self.sigma() * &b)) / self.snr
    }
}

/// Gaussian stream from a seeded ChaCha generator via the polar method.
pub struct GaussianSource {
    rng: ChaCha20Rng,
    spare: Option<f64>,
}

impl GaussianSource {
    pub fn new(seed: u64) -> Self {
        GaussianSource { rng: ChaCha20Rng::seed_from_u64(seed), spare: None }
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(v) = self.spare.take() {
            return v;
        }
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let f = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * f);
                return u * f;
            }
        }
    }
}

/// `Σ^{1/2}` from the eigendecomposition, with negative eigenvalues clipped.
pub fn sqrt_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (vals, vecs) = linalg::eigendecompose(m)?;
    let d = DMatrix::from_diagonal(&vals.map(|v| v.max(0.0).sqrt()));
    Ok(&vecs * d * vecs.transpose())
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub train: RegressionInstance,
    /// Independent sample of the same size from the same model.
    pub validation: RegressionInstance,
    pub beta0: DVector<f64>,
    pub sigma2: f64,
    pub sigma: DMatrix<f64>,
}

fn draw(spec: &SyntheticSpec, root: &DMatrix<f64>, beta0: &DVector<f64>, sigma2: f64, g: &mut GaussianSource) -> Result<RegressionInstance> {
    let (n, p) = (spec.n, spec.p);
    let z = DMatrix::from_fn(p, n, |_, _| g.standard_normal());
    let x = (root * z).transpose();
    let noise = DVector::from_fn(n, |_, _| g.standard_normal() * sigma2.sqrt());
    let y = &x * beta0 + noise;
    let mut inst = RegressionInstance::new(x, y)?;
    inst.column_names = (0..p).map(|j| format!("x{}", j + 1)).collect();
    inst.response_name = "y".into();
    Ok(inst)
}

/// Training and validation samples; bit-reproducible for a fixed spec.
pub fn generate(spec: &SyntheticSpec) -> Result<Synthetic> {
    spec.validate()?;
    let sigma = spec.sigma();
    let root = sqrt_psd(&sigma)?;
    let beta0 = spec.beta0();
    let sigma2 = spec.sigma2();
    let mut g = GaussianSource::new(spec.seed);
    let train = draw(spec, &root, &beta0, sigma2, &mut g)?;
    let validation = draw(spec, &root, &beta0, sigma2, &mut g)?;
    Ok(Synthetic { train, validation, beta0, sigma2, sigma })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Relative risk, 0 for a perfect fit and 1 for the null fit.
    pub rr: f64,
    /// Relative test error, 1 for a perfect fit and SNR + 1 for the null fit.
    pub rte: f64,
    /// Proportion of variance explained.
    pub pve: f64,
    pub nonzeros: usize,
    pub correct_nonzeros: usize,
}

pub fn metrics(beta_hat: &[f64], beta0: &DVector<f64>, sigma: &DMatrix<f64>, sigma2: f64) -> Result<MetricReport> {
    let p = beta0.len();
    if beta_hat.len() != p || sigma.nrows() != p || sigma.ncols() != p {
        return Err(Error::Dimension(format!("metrics need p = {p} throughout")));
    }
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidArgument(format!("noise variance must be positive, got {sigma2}")));
    }
    let signal = beta0.dot(&(sigma * beta0));
    if !(signal > 0.0) {
        return Err(Error::InvalidArgument("relative risk is undefined for a zero true coefficient vector".into()));
    }
    let d = DVector::from_column_slice(beta_hat) - beta0;
    let risk = d.dot(&(sigma * &d));
    let correct = beta_hat
        .iter()
        .zip(beta0.iter())
        .filter(|(b, t)| b.abs() > NONZERO_THRESHOLD && **t != 0.0)
        .count();
    Ok(MetricReport {
        rr: risk / signal,
        rte: (risk + sigma2) / sigma2,
        pve: 1.0 - (risk + sigma2) / (signal + sigma2),
        nonzeros: count_nonzeros(beta_hat),
        correct_nonzeros: correct,
    })
}

pub const EN_MAX_ITERS: usize = 50_000;
const EN_REL_TOL: f64 = 1e-10;

fn en_objective(x: &DMatrix<f64>, y: &DVector<f64>, b: &DVector<f64>, l1: f64, l2: f64) -> f64 {
    let r = y - x * b;
    r.dot(&r) + l1 * b.lp_norm(1) + l2 * b.dot(b)
}

/// `min ‖y − Xβ‖² + λ(α‖β‖₁ + (1−α)‖β‖²)` by accelerated proximal gradient
/// with adaptive restart; `λ = 0` returns the minimum-norm least-squares fit.
pub fn elastic_net(instance: &RegressionInstance, alpha: f64, lambda: f64) -> Result<DVector<f64>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let (x, y) = (&instance.x, &instance.y);
    if lambda == 0.0 {
        return x
            .clone()
            .svd(true, true)
            .solve(y, 1e-12 * x.norm().max(1.0))
            .map_err(|e| Error::Numerical(format!("least-squares solve failed: {e}")));
    }
    let (l1, l2) = (lambda * alpha, lambda * (1.0 - alpha));
    let gram = x.tr_mul(x);
    let xty = x.tr_mul(y);
    let top = linalg::eigendecompose(&gram)?.0.iter().copied().fold(0.0, f64::max);
    let step = 1.0 / (2.0 * (top + l2)).max(f64::MIN_POSITIVE);
    let p = instance.p();
    let mut b = DVector::zeros(p);
    let mut v = b.clone();
    let mut t = 1.0f64;
    let mut obj = en_objective(x, y, &b, l1, l2);
    let grad_scale = 1.0 + xty.amax();
    for _ in 0..EN_MAX_ITERS {
        let grad = 2.0 * (&gram * &v - &xty) + 2.0 * l2 * &v;
        let u = &v - step * grad;
        let next = u.map(|c| c.signum() * (c.abs() - step * l1).max(0.0));
        let next_obj = en_objective(x, y, &next, l1, l2);
        let mapping = (&next - &v).norm() / step;
        if next_obj > obj {
            // restart momentum
            v = b.clone();
            t = 1.0;
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        v = &next + ((t - 1.0) / t_next) * (&next - &b);
        t = t_next;
        let change = (obj - next_obj).abs() / obj.abs().max(f64::MIN_POSITIVE);
        b = next;
        obj = next_obj;
        if change <= EN_REL_TOL && mapping <= 1e-8 * grad_scale {
            break;
        }
    }
    Ok(b)
}

/// Squared prediction error `‖y − Xβ‖²`.
pub fn prediction_error(instance: &RegressionInstance, beta: &[f64]) -> f64 {
    let r = &instance.y - &instance.x * DVector::from_column_slice(beta);
    r.dot(&r)
}

pub const EN_ALPHAS: usize = 11;
pub const EN_LAMBDAS: usize = 50;
pub const EN_LAMBDA_RATIO: f64 = 200.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub alpha: f64,
    pub lambda: f64,
    pub validation_error: f64,
    pub nonzeros: usize,
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnGridResult {
    pub best: usize,
    pub points: Vec<GridPoint>,
}

impl EnGridResult {
    pub fn selected(&self) -> &GridPoint {
        &self.points[self.best]
    }
}

/// `λ` from `‖Xᵀy‖∞` down to `‖Xᵀy‖∞/200`, log-spaced with both endpoints.
pub fn lambda_grid(instance: &RegressionInstance) -> Vec<f64> {
    let lmax = instance.x.tr_mul(&instance.y).amax();
    (0..EN_LAMBDAS)
        .map(|i| lmax * EN_LAMBDA_RATIO.powf(-(i as f64) / (EN_LAMBDAS - 1) as f64))
        .collect()
}

/// Fits every `(α, λ)` with `α ∈ {0, 0.1, …, 1}` and keeps the lowest validation error.
pub fn en_grid(train: &RegressionInstance, validation: &RegressionInstance) -> Result<EnGridResult> {
    if train.p() != validation.p() {
        return Err(Error::Dimension(format!("train has p = {}, validation has p = {}", train.p(), validation.p())));
    }
    let lambdas = lambda_grid(train);
    let grid: Vec<(f64, f64)> = (0..EN_ALPHAS)
        .flat_map(|a| lambdas.iter().map(move |&l| (a as f64 / (EN_ALPHAS - 1) as f64, l)))
        .collect();
    let fit = |&(alpha, lambda): &(f64, f64)| -> Result<GridPoint> {
        let beta = elastic_net(train, alpha, lambda)?;
        let beta: Vec<f64> = beta.iter().copied().collect();
        Ok(GridPoint {
            alpha,
            lambda,
            validation_error: prediction_error(validation, &beta),
            nonzeros: count_nonzeros(&beta),
            beta,
        })
    };
    #[cfg(feature = "parallel")]
    let points: Vec<GridPoint> = {
        use rayon::prelude::*;
        grid.par_iter().map(fit).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let points: Vec<GridPoint> = grid.iter().map(fit).collect::<Result<_>>()?;
    let best = argmin(points.iter().map(|p| p.validation_error));
    Ok(EnGridResult { best, points })
}

/// Index of the smallest value; the lowest index wins ties.
fn argmin(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpGridEntry {
    pub k: usize,
    pub certificate: Option<BoundCertificate>,
    pub training_objective: Option<f64>,
    pub validation_error: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpGridResult {
    pub best_k: usize,
    pub beta: Vec<f64>,
    pub certificate: BoundCertificate,
    pub entries: Vec<SdpGridEntry>,
}

fn zero_certificate(train: &RegressionInstance) -> BoundCertificate {
    let yy = train.y.dot(&train.y);
    BoundCertificate {
        relaxation: RelaxationKind::SdpR(2).label(),
        lambda: 0.0,
        mu: 0.0,
        k: 0,
        nu_lb: yy,
        nu_ub: yy,
        gap_percent: Some(0.0),
        support: Vec::new(),
        nonzeros: 0,
        beta_rounded: vec![0.0; train.p()],
        solve_seconds: None,
    }
}

/// Solves the pairwise relaxation with `λ = μ = 0` for `k = 0..=k_max`,
/// rounds each solution and keeps the lowest validation error.
pub fn sdp2_grid(train: &RegressionInstance, validation: &RegressionInstance, k_max: usize, opts: &SolveOptions) -> Result<SdpGridResult> {
    if train.p() != validation.p() {
        return Err(Error::Dimension(format!("train has p = {}, validation has p = {}", train.p(), validation.p())));
    }
    let order = 2.min(train.p());
    let mut entries = Vec::new();
    let zero = zero_certificate(train);
    entries.push(SdpGridEntry {
        k: 0,
        training_objective: Some(zero.nu_ub),
        validation_error: Some(prediction_error(validation, &zero.beta_rounded)),
        certificate: Some(zero),
        error: None,
    });
    for k in 1..=k_max.min(train.p()) {
        let spec = RelaxationSpec::new(RelaxationKind::SdpR(order), HyperParams::new(0.0, 0.0, k));
        let start = Instant::now();
        let outcome = solve_relaxation(train, spec, opts)
            .and_then(|sol| BoundCertificate::from_solution(&sol, train, Some(start.elapsed().as_secs_f64())));
        entries.push(match outcome {
            Ok(cert) => SdpGridEntry {
                k,
                training_objective: Some(cert.nu_ub),
                validation_error: Some(prediction_error(validation, &cert.beta_rounded)),
                certificate: Some(cert),
                error: None,
            },
            Err(e) => {
                log::warn!("k = {k} skipped: {e}");
                SdpGridEntry { k, certificate: None, training_objective: None, validation_error: None, error: Some(e.to_string()) }
            }
        });
    }
    let best = argmin(entries.iter().map(|e| e.validation_error.unwrap_or(f64::INFINITY)));
    let certificate = entries[best].certificate.clone().expect("k = 0 always succeeds");
    Ok(SdpGridResult { best_k: entries[best].k, beta: certificate.beta_rounded.clone(), certificate, entries })
}

/// One JSON-lines record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub spec: SyntheticSpec,
    pub method: String,
    pub grid_point: serde_json::Value,
    pub metrics: MetricReport,
    pub seconds: Option<f64>,
}

pub fn write_jsonl<W: Write>(records: &[ExperimentRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Elastic-net and pairwise-relaxation selection on one synthetic draw.
///
/// Emits one record per elastic-net grid point and per relaxation `k`,
/// followed by one record per method for the selected fit.
pub fn run_synthetic(spec: &SyntheticSpec, k_max: usize, opts: &SolveOptions, timing: bool) -> Result<Vec<ExperimentRecord>> {
    let data = generate(spec)?;
    let m = |beta: &[f64]| metrics(beta, &data.beta0, &data.sigma, data.sigma2);
    let mut out = Vec::new();
    let start = Instant::now();
    let en = en_grid(&data.train, &data.validation)?;
    let en_secs = timing.then(|| start.elapsed().as_secs_f64());
    for (i, pt) in en.points.iter().enumerate() {
        out.push(ExperimentRecord {
            spec: *spec,
            method: "elastic_net".into(),
            grid_point: serde_json::json!({"index": i, "alpha": pt.alpha, "lambda": pt.lambda, "validation_error": pt.validation_error}),
            metrics: m(&pt.beta)?,
            seconds: None,
        });
    }
    let start = Instant::now();
    let sdp = sdp2_grid(&data.train, &data.validation, k_max, opts)?;
    let sdp_secs = timing.then(|| start.elapsed().as_secs_f64());
    for e in &sdp.entries {
        if let Some(cert) = &e.certificate {
            out.push(ExperimentRecord {
                spec: *spec,
                method: "sdp2".into(),
                grid_point: serde_json::json!({"k": e.k, "nu_lb": cert.nu_lb, "nu_ub": cert.nu_ub, "gap_percent": cert.gap_percent, "validation_error": e.validation_error}),
                metrics: m(&cert.beta_rounded)?,
                seconds: timing.then_some(cert.solve_seconds).flatten(),
            });
        }
    }
    let sel = en.selected();
    out.push(ExperimentRecord {
        spec: *spec,
        method: "elastic_net_selected".into(),
        grid_point: serde_json::json!({"index": en.best, "alpha": sel.alpha, "lambda": sel.lambda}),
        metrics: m(&sel.beta)?,
        seconds: en_secs,
    });
    out.push(ExperimentRecord {
        spec: *spec,
        method: "sdp2_selected".into(),
        grid_point: serde_json::json!({"k": sdp.best_k, "support": sdp.certificate.support}),
        metrics: m(&sdp.beta)?,
        seconds: sdp_secs,
    });
    Ok(out)
}
