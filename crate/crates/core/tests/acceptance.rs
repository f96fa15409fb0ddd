//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p rank1-sparse --test acceptance`.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use rank1_sparse::bounds::{brute_force_opt, certify, greedy_round};
use rank1_sparse::cutting::{cut_loop, CutLoopSettings, CutPool};
use rank1_sparse::experiments::{generate, metrics, sdp2_grid, GaussianSource, SyntheticSpec};
use rank1_sparse::formulations::{solve_relaxation, PsdMode, RelaxationKind, RelaxationSpec, SolveOptions};
use rank1_sparse::instance::{diagonal_dominance, gram, load_csv, ResponseColumn};
use rank1_sparse::penalty::{rho_mc_plus_2d, rho_r1_2d, rho_r1_general, Penalty2DParams};
use rank1_sparse::{HyperParams, RegressionInstance};

const TOL: f64 = 1e-7;

enum Outcome {
    Pass(String),
    Fail(String),
    /// Reported but never fails the run.
    Review(String),
}

fn opts(tol: f64) -> SolveOptions {
    SolveOptions { tol, allow_high_order: true, ..SolveOptions::default() }
}

fn random_instance(n: usize, p: usize, seed: u64) -> RegressionInstance {
    let spec = SyntheticSpec { n, p, s: (p / 2).max(1), rho: 0.5, snr: 2.0, seed };
    generate(&spec).unwrap().train.standardize().unwrap()
}

fn kind_value(inst: &RegressionInstance, kind: RelaxationKind, h: HyperParams, tol: f64) -> f64 {
    solve_relaxation(inst, RelaxationSpec::new(kind, h), &opts(tol)).unwrap().nu_lb
}

fn dominance_chain() -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    let mut count = 0;
    let start = Instant::now();
    for seed in 0..20u64 {
        let p = if seed % 2 == 0 { 6 } else { 8 };
        let lambda = if (seed / 2) % 2 == 0 { 0.0 } else { 0.05 };
        let k = if (seed / 4) % 2 == 0 { 2 } else { 3 };
        let inst = random_instance(50, p, 1000 + seed);
        let h = HyperParams::new(lambda, 0.0, k);
        let slack = 2.0 * TOL * inst.y.dot(&inst.y);
        let mut chain = Vec::new();
        if lambda > 0.0 {
            chain.push(("persp", kind_value(&inst, RelaxationKind::Persp, h, TOL)));
        }
        for (name, kind) in [
            ("sdp1", RelaxationKind::SdpR(1)),
            ("sdpdd", RelaxationKind::SdpDd),
            ("sdp2", RelaxationKind::SdpR(2)),
            ("sdp3", RelaxationKind::SdpR(3)),
        ] {
            chain.push((name, kind_value(&inst, kind, h, TOL)));
        }
        chain.push(("opt", brute_force_opt(&inst, &h).unwrap().nu));
        for w in chain.windows(2) {
            let excess = (w[0].1 - w[1].1) / slack;
            worst = worst.max(excess);
            if w[0].1 > w[1].1 + slack {
                return Outcome::Fail(format!("seed {seed}: {} = {} exceeds {} = {}", w[0].0, w[0].1, w[1].0, w[1].1));
            }
        }
        count += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    let msg = format!("{count} instances ordered; worst violation {worst:.2} of the 2·tol slack; {secs:.1} s");
    if secs < 300.0 {
        Outcome::Pass(msg)
    } else {
        Outcome::Fail(format!("{msg} (over the 5 minute budget)"))
    }
}

fn zero_penalty() -> Outcome {
    let mut g = GaussianSource::new(77);
    let mut worst = 0.0f64;
    for case in 0..100u64 {
        let p = 3 + (case % 8) as usize;
        let inst = random_instance(20, p, 2000 + case);
        let k = 1 + (g.uniform() * p as f64) as usize % p;
        let lambda = if case % 2 == 0 { 0.0 } else { 0.05 };
        let nnz = 1 + (g.uniform() * k as f64) as usize % k;
        let mut idx: Vec<usize> = (0..p).collect();
        for i in 0..nnz {
            let j = i + (g.uniform() * (p - i) as f64) as usize % (p - i);
            idx.swap(i, j);
        }
        let mut beta = vec![0.0; p];
        for &i in &idx[..nnz] {
            beta[i] = g.standard_normal();
        }
        let v = rho_r1_general(&beta, &inst, &HyperParams::new(lambda, 0.0, k), 2, &opts(1e-9)).unwrap();
        worst = worst.max(v.abs());
    }
    let msg = format!("100 sparse points, max |ρ| = {worst:.2e} (limit 1e-5)");
    if worst <= 1e-5 {
        Outcome::Pass(msg)
    } else {
        Outcome::Fail(msg)
    }
}

/// Minimizes a function of `z ∈ [0,1]²` on a grid, then on successively finer grids around the best point.
fn grid_minimize(f: impl Fn(f64, f64) -> f64) -> f64 {
    let mut lo = [0.0, 0.0];
    let mut hi = [1.0, 1.0];
    let n = 200;
    let mut best = (f64::INFINITY, [0.0, 0.0]);
    for _ in 0..12 {
        for a in 0..=n {
            for b in 0..=n {
                let z1 = lo[0] + (hi[0] - lo[0]) * a as f64 / n as f64;
                let z2 = lo[1] + (hi[1] - lo[1]) * b as f64 / n as f64;
                let v = f(z1, z2);
                if v < best.0 {
                    best = (v, [z1, z2]);
                }
            }
        }
        for d in 0..2 {
            let w = (hi[d] - lo[d]) / 8.0;
            lo[d] = (best.1[d] - w).max(0.0);
            hi[d] = (best.1[d] + w).min(1.0);
        }
    }
    best.0
}

fn ratio(num: f64, z: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else if z <= 0.0 {
        f64::INFINITY
    } else {
        num / z
    }
}

fn closed_forms() -> Outcome {
    let mut g = GaussianSource::new(5);
    let mut worst_r1 = 0.0f64;
    let mut worst_mc = 0.0f64;
    let mut worst_dom = f64::NEG_INFINITY;
    for _ in 0..200 {
        let (d1, d2) = (2.0 * g.uniform(), 2.0 * g.uniform());
        let kappa = 0.1 + 2.9 * g.uniform();
        let b = [4.0 * g.uniform() - 2.0, 4.0 * g.uniform() - 2.0];
        let params = Penalty2DParams::new(d1, d2, kappa).unwrap();
        let quad = params.quad(b);
        let s2 = (b[0] + b[1]).powi(2);
        let sep = |z1: f64, z2: f64| ratio(d1 * b[0] * b[0], z1) + ratio(d2 * b[1] * b[1], z2) + kappa * (z1 + z2);
        let r1 = grid_minimize(|z1, z2| ratio(s2, (z1 + z2).min(1.0)) + sep(z1, z2)) - quad;
        let mc = grid_minimize(|z1, z2| s2 + sep(z1, z2)) - quad;
        let (cr1, cmc) = (rho_r1_2d(b, &params), rho_mc_plus_2d(b, &params));
        worst_r1 = worst_r1.max((cr1 - r1).abs());
        worst_mc = worst_mc.max((cmc - mc).abs());
        worst_dom = worst_dom.max(cmc - cr1);
    }
    let msg = format!(
        "200 points: max |R1 − numeric| = {worst_r1:.2e}, max |MC+ − numeric| = {worst_mc:.2e}, max (MC+ − R1) = {worst_dom:.2e}"
    );
    if worst_r1 <= 1e-4 && worst_mc <= 1e-4 && worst_dom <= 1e-9 {
        Outcome::Pass(msg)
    } else {
        Outcome::Fail(msg)
    }
}

fn cut_convergence() -> Outcome {
    let mut worst_gap = 0.0f64;
    let mut worst_dd = 0.0f64;
    let mut rounds = 0;
    for seed in 0..10u64 {
        let p = 4 + (seed % 5) as usize;
        let inst = random_instance(30, p, 3000 + seed);
        let h = HyperParams::new(if seed % 2 == 0 { 0.0 } else { 0.05 }, 0.0, 2);
        let settings = CutLoopSettings { solve: opts(1e-8), ..Default::default() };
        let out = cut_loop(&inst, h, CutPool::sdd_start(p), PsdMode::FullPsd, &settings).unwrap();
        rounds = rounds.max(out.trace.len());
        let sdp2 = kind_value(&inst, RelaxationKind::SdpR(2), h, 1e-8);
        worst_gap = worst_gap.max((sdp2 - out.solution.nu_lb).abs() / sdp2);
        let once = CutLoopSettings { max_rounds: 1, ..settings };
        let first = cut_loop(&inst, h, CutPool::sdd_start(p), PsdMode::FullPsd, &once).unwrap();
        let dd = kind_value(&inst, RelaxationKind::SdpDd, h, 1e-8);
        worst_dd = worst_dd.max((first.solution.nu_lb - dd).abs() / inst.y.dot(&inst.y));
    }
    let msg = format!(
        "10 instances: max relative distance to sdp2 {worst_gap:.2e} (limit 1e-3) within {rounds} rounds; unit pool vs sdpdd {worst_dd:.2e}"
    );
    if worst_gap <= 1e-3 && worst_dd <= 1e-7 {
        Outcome::Pass(msg)
    } else {
        Outcome::Fail(msg)
    }
}

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn paper_tables() -> Outcome {
    let housing = load_csv(data("housing.csv"), &ResponseColumn::Last).unwrap().standardize().unwrap();
    let diabetes = load_csv(data("diabetes64.csv"), &ResponseColumn::Last).unwrap().standardize().unwrap();
    let dd_h = 100.0 * diagonal_dominance(&gram(&housing, 0.0)).unwrap();
    let dd_d = 100.0 * diagonal_dominance(&gram(&diabetes, 0.0)).unwrap();
    let o = opts(1e-8);
    let (c3, _) = certify(&housing, RelaxationSpec::new(RelaxationKind::SdpR(2), HyperParams::new(0.0, 0.0, 3)), &o).unwrap();
    let (c5, _) = certify(&housing, RelaxationSpec::new(RelaxationKind::SdpR(1), HyperParams::new(0.0, 0.0, 5)), &o).unwrap();
    let (g3, g5) = (c3.gap_percent.unwrap(), c5.gap_percent.unwrap());
    let ok = (dd_h - 26.7).abs() <= 0.5 && dd_d.abs() <= 0.5 && g3 <= 0.5 && g5 <= 0.2;
    let msg = format!(
        "housing dd {dd_h:.2}% (26.7±0.5), diabetes dd {dd_d:.2}% (0.0±0.5), housing sdp2 k=3 gap {g3:.4}% (≤0.5), housing sdp1 k=5 gap {g5:.4}% (≤0.2); servo not run: dataset not available offline, criterion 6 is its designated substitute"
    );
    if ok {
        Outcome::Pass(msg)
    } else {
        Outcome::Fail(msg)
    }
}

fn oracle_sandwich() -> Outcome {
    let mut within = 0;
    let mut worst_lb = f64::NEG_INFINITY;
    let mut worst_ub = f64::NEG_INFINITY;
    let mut mean_gap = 0.0;
    for seed in 0..50u64 {
        let p = 5 + (seed % 8) as usize;
        let k = 1 + (seed % 4) as usize;
        let inst = random_instance(40, p, 4000 + seed);
        let h = HyperParams::new(0.05, 0.0, k);
        let sol = solve_relaxation(&inst, RelaxationSpec::new(RelaxationKind::SdpR(2), h), &opts(TOL)).unwrap();
        let opt = brute_force_opt(&inst, &h).unwrap().nu;
        let ub = greedy_round(&sol.beta, &inst, &h).unwrap().nu_ub;
        let scale = TOL * inst.y.dot(&inst.y);
        worst_lb = worst_lb.max(sol.nu_lb - opt - 2.0 * scale);
        worst_ub = worst_ub.max(opt - ub - 1e-9 * opt);
        let rel = (opt - sol.nu_lb) / opt;
        mean_gap += rel / 50.0;
        if rel <= 0.05 {
            within += 1;
        }
    }
    let msg = format!(
        "50 instances: lower bound within 5% of optimum on {within}/50 (need ≥ 40); mean distance {:.3}%; sandwich excess lb {worst_lb:.2e}, ub {worst_ub:.2e}",
        100.0 * mean_gap
    );
    if within >= 40 && worst_lb <= 0.0 && worst_ub <= 0.0 {
        Outcome::Pass(msg)
    } else {
        Outcome::Fail(msg)
    }
}

fn metric_identities() -> Outcome {
    let mut g = GaussianSource::new(17);
    let mut worst = 0.0f64;
    for trial in 0..200 {
        let p = 2 + trial % 9;
        let s = 1 + trial % p;
        let spec = SyntheticSpec { n: 1, p, s, rho: 0.9 * g.uniform(), snr: 0.05 + 10.0 * g.uniform(), seed: 0 };
        let (b0, sig, s2) = (spec.beta0(), spec.sigma(), spec.sigma2());
        let hat: Vec<f64> = (0..p).map(|_| g.standard_normal()).collect();
        let m = metrics(&hat, &b0, &sig, s2).unwrap();
        worst = worst.max((m.rte - (m.rr * spec.snr + 1.0)).abs());
    }
    let spec = SyntheticSpec { n: 1, p: 8, s: 3, rho: 0.35, snr: 6.0, seed: 0 };
    let (b0, sig, s2) = (spec.beta0(), spec.sigma(), spec.sigma2());
    let perfect = metrics(b0.as_slice(), &b0, &sig, s2).unwrap();
    let null = metrics(&[0.0; 8], &b0, &sig, s2).unwrap();
    let exact = perfect.rr == 0.0
        && perfect.rte == 1.0
        && (perfect.pve - 6.0 / 7.0).abs() <= 1e-15
        && null.rr == 1.0
        && (null.rte - 7.0).abs() <= 1e-12
        && null.pve.abs() <= 1e-15;
    let msg = format!("max |RTE − (RR·SNR + 1)| = {worst:.2e} over 200 draws; perfect/null scores exact: {exact}");
    if worst <= 1e-12 && exact {
        Outcome::Pass(msg)
    } else {
        Outcome::Fail(msg)
    }
}

fn synthetic_desk() -> Outcome {
    let mut picked_five = 0;
    let mut recovered = 0;
    let mut ks = Vec::new();
    let start = Instant::now();
    for seed in 0..10u64 {
        let spec = SyntheticSpec { n: 100, p: 20, s: 5, rho: 0.35, snr: 6.0, seed };
        let d = generate(&spec).unwrap();
        let res = sdp2_grid(&d.train, &d.validation, 7, &opts(1e-6)).unwrap();
        ks.push(res.best_k);
        if res.best_k == 5 {
            picked_five += 1;
        }
        if res.certificate.support == vec![0, 1, 2, 3, 4] {
            recovered += 1;
        }
    }
    let msg = format!(
        "selected k per seed {ks:?}; k = 5 on {picked_five}/10, true support recovered on {recovered}/10 (target ≥ 8); {:.1} s",
        start.elapsed().as_secs_f64()
    );
    if picked_five >= 8 && recovered >= 8 {
        Outcome::Pass(msg)
    } else {
        Outcome::Review(format!("{msg}; below target, flagged for review"))
    }
}

fn main() -> ExitCode {
    // the harness is invoked for every test filter; only run when selected or unfiltered
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !filter.is_empty() && !filter.iter().any(|f| "acceptance".contains(f.as_str())) {
        return ExitCode::SUCCESS;
    }
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 8] = [
        ("1 relaxation dominance chain", dominance_chain),
        ("2 zero penalty on sparse points", zero_penalty),
        ("3 two-dimensional closed forms", closed_forms),
        ("4 cut loop convergence", cut_convergence),
        ("5 benchmark data reproduction", paper_tables),
        ("6 oracle sandwich", oracle_sandwich),
        ("7 metric identities", metric_identities),
        ("8 synthetic support recovery", synthetic_desk),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Outcome::Pass(m) => println!("PASS   {name}: {m}"),
            Outcome::Fail(m) => {
                failed += 1;
                println!("FAIL   {name}: {m}");
            }
            Outcome::Review(m) => println!("REVIEW {name}: {m}"),
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
