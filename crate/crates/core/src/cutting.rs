//! Conic-quadratic outer approximation of the pairwise 3×3 PSD blocks,
//! refined by separating the most violated multiplier `α` per pair.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::conic::SolveStatus;
use crate::error::{Error, Result};
use crate::formulations::{
    build_lifted, solve_compiled, CompiledRelaxation, CutSign, PairCut, PsdMode, RelaxationKind, RelaxationSpec,
    RelaxedSolution, SingletonForm, SolveOptions, Structure,
};
use crate::instance::{HyperParams, RegressionInstance};

pub const DEFAULT_VIOLATION_TOL: f64 = 1e-6;
pub const DEFAULT_ROUND_LIMIT: usize = 50;
/// Range that separated multipliers are clamped to when a pair is degenerate.
pub const ALPHA_RANGE: (f64, f64) = (1e-6, 1e6);
const DEDUP_REL: f64 = 1e-9;
const DENOM_GUARD: f64 = 1e-10;

/// Multipliers in use for each pair `i < j`, split by sign family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutPool {
    pub p: usize,
    pub plus: BTreeMap<(usize, usize), Vec<f64>>,
    pub minus: BTreeMap<(usize, usize), Vec<f64>>,
    pub violation_tol: f64,
    pub round_limit: usize,
}

impl CutPool {
    /// Pool with no cuts.
    pub fn empty(p: usize) -> Self {
        CutPool {
            p,
            plus: BTreeMap::new(),
            minus: BTreeMap::new(),
            violation_tol: DEFAULT_VIOLATION_TOL,
            round_limit: DEFAULT_ROUND_LIMIT,
        }
    }

    /// `α = 1` in both families for every pair.
    pub fn sdd_start(p: usize) -> Self {
        let mut pool = CutPool::empty(p);
        for j in 0..p {
            for i in 0..j {
                pool.plus.insert((i, j), vec![1.0]);
                pool.minus.insert((i, j), vec![1.0]);
            }
        }
        pool
    }

    /// Inserts `α` unless an entry within relative `1e-9` exists; returns whether it was added.
    pub fn add(&mut self, i: usize, j: usize, sign: CutSign, alpha: f64) -> Result<bool> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("cut multiplier must be positive and finite, got {alpha}")));
        }
        if i >= j || j >= self.p {
            return Err(Error::InvalidArgument(format!("pair ({i}, {j}) is not an ordered pair below {}", self.p)));
        }
        let set = match sign {
            CutSign::Plus => self.plus.entry((i, j)).or_default(),
            CutSign::Minus => self.minus.entry((i, j)).or_default(),
        };
        if set.iter().any(|&a| (a - alpha).abs() <= DEDUP_REL * a.max(alpha)) {
            return Ok(false);
        }
        set.push(alpha);
        Ok(true)
    }

    pub fn len(&self) -> usize {
        self.plus.values().chain(self.minus.values()).map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cuts(&self) -> Vec<PairCut> {
        let mut out = Vec::with_capacity(self.len());
        for (sign, map) in [(CutSign::Plus, &self.plus), (CutSign::Minus, &self.minus)] {
            for (&(i, j), alphas) in map {
                out.extend(alphas.iter().map(|&alpha| PairCut { i, j, alpha, sign }));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        for cut in self.cuts() {
            if !(cut.alpha > 0.0 && cut.alpha.is_finite()) {
                return Err(Error::InvalidArgument(format!("cut multiplier must be positive and finite, got {}", cut.alpha)));
            }
            if cut.i >= cut.j || cut.j >= self.p {
                return Err(Error::InvalidArgument(format!("pair ({}, {}) is not an ordered pair below {}", cut.i, cut.j, self.p)));
            }
        }
        Ok(())
    }
}

/// Relaxation with rotated singleton rows, a weight per pair and one cut per pool entry.
pub fn build_cut_relaxation(
    instance: &RegressionInstance,
    hyper: HyperParams,
    pool: &CutPool,
    psd_mode: PsdMode,
) -> Result<CompiledRelaxation> {
    let p = instance.p();
    if pool.p != p {
        return Err(Error::Dimension(format!("cut pool is for {} variables, instance has {p}", pool.p)));
    }
    pool.validate()?;
    let structure = Structure {
        singleton: SingletonForm::Rotated,
        subsets: Vec::new(),
        pair_weights: (0..p).flat_map(|j| (0..j).map(move |i| (i, j))).collect(),
        cuts: pool.cuts(),
        psd_mode,
    };
    build_lifted(instance, RelaxationSpec::new(RelaxationKind::Cuts, hyper), &structure, None)
}

/// Most violated multiplier for one pair and the violation of each family.
///
/// A violation is `±(βᵢβⱼ − wBᵢⱼ) − √((wBᵢᵢ − βᵢ²)(wBⱼⱼ − βⱼ²))`; a cut
/// is useful when it is positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Separation {
    pub alpha_plus: Option<f64>,
    pub alpha_minus: Option<f64>,
    pub violation_plus: f64,
    pub violation_minus: f64,
}

/// Separation on raw quantities; `None` flags a degenerate pair with `w ≤ 0`.
pub fn separate_values(beta_i: f64, beta_j: f64, b_ii: f64, b_jj: f64, b_ij: f64, w: f64) -> Option<Separation> {
    if !(w > 0.0) {
        return None;
    }
    let a = (b_ii * w - beta_i * beta_i).max(0.0);
    let c = (b_jj * w - beta_j * beta_j).max(0.0);
    let cross = beta_i * beta_j - b_ij * w;
    let root = (a * c).sqrt();
    let alpha = match (a > DENOM_GUARD, c > DENOM_GUARD) {
        (true, _) => (c / a).sqrt(),
        // α → ∞ drops the j-term
        (false, true) => ALPHA_RANGE.1,
        (false, false) => 1.0,
    }
    .clamp(ALPHA_RANGE.0, ALPHA_RANGE.1);
    Some(Separation {
        alpha_plus: Some(alpha),
        alpha_minus: Some(alpha),
        violation_plus: cross - root,
        violation_minus: -cross - root,
    })
}

/// Separation for pair `(i, j)` of a relaxed solution with pair weights.
pub fn separate_alpha(sol: &RelaxedSolution, i: usize, j: usize) -> Result<Option<Separation>> {
    let b = sol.b.as_ref().ok_or_else(|| Error::InvalidArgument("solution carries no lifted matrix".into()))?;
    let (lo, hi) = (i.min(j), i.max(j));
    let w = sol
        .weight(&[lo, hi])
        .ok_or_else(|| Error::InvalidArgument(format!("solution has no weight for pair ({lo}, {hi})")))?;
    Ok(separate_values(sol.beta[lo], sol.beta[hi], b[(lo, lo)], b[(hi, hi)], b[(lo, hi)], w))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutLoopSettings {
    pub solve: SolveOptions,
    /// Stop once every pairwise violation, relative to `‖y‖²`, is at most this.
    pub violation_tol: f64,
    /// Number of relaxations solved, including the first.
    pub max_rounds: usize,
}

impl Default for CutLoopSettings {
    fn default() -> Self {
        CutLoopSettings {
            solve: SolveOptions::default(),
            violation_tol: DEFAULT_VIOLATION_TOL,
            max_rounds: DEFAULT_ROUND_LIMIT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutRound {
    pub round: usize,
    pub objective: f64,
    pub max_violation: f64,
    pub cuts_added: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "message", rename_all = "snake_case")]
pub enum LoopStatus {
    Converged,
    RoundLimit,
    /// A later solve failed; the last successful iterate is returned.
    SolverFailure(String),
}

#[derive(Debug, Clone)]
pub struct CutLoopResult {
    pub solution: RelaxedSolution,
    pub pool: CutPool,
    pub trace: Vec<CutRound>,
    pub status: LoopStatus,
}

impl CutLoopResult {
    pub fn trace_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.trace)?)
    }
}

/// Largest relative violation over all pairs and the cuts that would remove it.
fn separate_all(sol: &RelaxedSolution, scale2: f64, tol: f64) -> Result<(f64, Vec<PairCut>)> {
    let p = sol.beta.len();
    let pairs: Vec<(usize, usize)> = (0..p).flat_map(|j| (0..j).map(move |i| (i, j))).collect();
    let separate = |&(i, j): &(usize, usize)| separate_alpha(sol, i, j);
    #[cfg(feature = "parallel")]
    let seps: Vec<Result<Option<Separation>>> = {
        use rayon::prelude::*;
        pairs.par_iter().map(separate).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let seps: Vec<Result<Option<Separation>>> = pairs.iter().map(separate).collect();
    let mut worst = 0.0f64;
    let mut cuts = Vec::new();
    for (&(i, j), sep) in pairs.iter().zip(seps) {
        let Some(sep) = sep? else {
            log::debug!("pair ({i}, {j}) has zero weight; skipped");
            continue;
        };
        for (alpha, viol, sign) in [
            (sep.alpha_plus, sep.violation_plus, CutSign::Plus),
            (sep.alpha_minus, sep.violation_minus, CutSign::Minus),
        ] {
            let rel = viol / scale2;
            worst = worst.max(rel);
            if let (Some(alpha), true) = (alpha, rel > tol) {
                cuts.push(PairCut { i, j, alpha, sign });
            }
        }
    }
    Ok((worst, cuts))
}

/// Alternates solving the cut relaxation and adding the most violated cut
/// per family and pair until no violation exceeds the tolerance.
pub fn cut_loop(
    instance: &RegressionInstance,
    hyper: HyperParams,
    mut pool: CutPool,
    psd_mode: PsdMode,
    settings: &CutLoopSettings,
) -> Result<CutLoopResult> {
    if settings.max_rounds == 0 {
        return Err(Error::InvalidArgument("the cut loop needs at least one round".into()));
    }
    let scale2 = instance.y.dot(&instance.y).max(f64::MIN_POSITIVE);
    let mut trace = Vec::new();
    let mut last: Option<RelaxedSolution> = None;
    let mut status = LoopStatus::RoundLimit;
    for round in 1..=settings.max_rounds {
        let attempt = build_cut_relaxation(instance, hyper, &pool, psd_mode).and_then(|c| solve_compiled(&c, &settings.solve));
        let sol = match (attempt, &last) {
            (Ok(sol), _) => sol,
            (Err(e), None) => return Err(e),
            (Err(e), Some(_)) => {
                log::warn!("cut round {round} failed: {e}; keeping the previous iterate");
                status = LoopStatus::SolverFailure(e.to_string());
                break;
            }
        };
        let (worst, cuts) = separate_all(&sol, scale2, settings.violation_tol)?;
        let mut added = 0;
        let done = worst <= settings.violation_tol || round == settings.max_rounds;
        if !done {
            for cut in &cuts {
                if pool.add(cut.i, cut.j, cut.sign, cut.alpha)? {
                    added += 1;
                }
            }
        }
        log::info!("cut round {round}: objective {:.10e}, max violation {worst:.3e}, {added} cuts added", sol.nu_lb);
        trace.push(CutRound { round, objective: sol.nu_lb, max_violation: worst, cuts_added: added });
        last = Some(sol);
        if worst <= settings.violation_tol {
            status = LoopStatus::Converged;
            break;
        }
        if added == 0 {
            // every violated α is already in the pool; more rounds cannot change the program
            break;
        }
    }
    let mut solution = last.expect("at least one round ran");
    if matches!(status, LoopStatus::SolverFailure(_)) && solution.status == SolveStatus::Optimal {
        solution.status = SolveStatus::MaxIters;
    }
    Ok(CutLoopResult { solution, pool, trace, status })
}
