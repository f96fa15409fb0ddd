use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use rank1_sparse::bounds::{brute_force_opt, gap, greedy_round};
use rank1_sparse::conic::linalg::{eigendecompose, psd_project};
use rank1_sparse::conic::model::{Expr, ProgramBuilder};
use rank1_sparse::conic::{residuals, solve, SolveStatus};
use rank1_sparse::experiments::{generate, metrics, SyntheticSpec};
use rank1_sparse::formulations::{solve_relaxation, RelaxationKind, RelaxationSpec, SolveOptions};
use rank1_sparse::instance::{diagonal_dominance, gram};
use rank1_sparse::penalty::{rho_mc_plus_2d, rho_r1_2d, Penalty2DParams};
use rank1_sparse::{HyperParams, RegressionInstance};

fn symmetric(n: usize, entries: &[f64]) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |i, j| entries[(i * n + j) % entries.len()]);
    (&m + m.transpose()) * 0.5
}

fn sym_matrix(max: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (1..=max).prop_flat_map(|n| prop::collection::vec(-5.0..5.0f64, n * n).prop_map(move |v| symmetric(n, &v)))
}

fn synthetic(n: usize, p: usize, seed: u64) -> RegressionInstance {
    let spec = SyntheticSpec { n, p, s: (p / 2).max(1), rho: 0.4, snr: 3.0, seed };
    generate(&spec).unwrap().train.standardize().unwrap()
}

/// `min cᵀx` over `‖x‖ ≤ r`, `lo ≤ x ≤ hi`; bounded and feasible.
fn box_ball(c: &[f64], r: f64) -> rank1_sparse::conic::ConeProgram {
    let mut m = ProgramBuilder::new();
    let xs: Vec<usize> = (0..c.len()).map(|i| m.add_var(format!("x[{i}]"))).collect();
    for (&x, &ci) in xs.iter().zip(c) {
        m.add_cost(x, ci);
        m.nonneg(Expr::var(x) + Expr::constant(1.0));
        m.nonneg(Expr::constant(2.0) - Expr::var(x));
    }
    m.second_order(Expr::constant(r), xs.iter().map(|&x| Expr::var(x)).collect());
    m.build().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn projection_is_idempotent_and_nonexpansive(a in sym_matrix(30), seed in any::<u64>()) {
        let n = a.nrows();
        let b = symmetric(n, &(0..n * n).map(|i| ((i as u64 ^ seed) % 97) as f64 / 10.0 - 4.8).collect::<Vec<_>>());
        let pa = psd_project(&a).unwrap();
        let ppa = psd_project(&pa).unwrap();
        let scale = 1.0 + a.norm();
        prop_assert!((&ppa - &pa).norm() <= 1e-9 * scale);
        let pb = psd_project(&b).unwrap();
        prop_assert!((&pa - &pb).norm() <= (&a - &b).norm() + 1e-9 * scale);
    }

    #[test]
    fn eigendecomposition_reconstructs(a in sym_matrix(12)) {
        let (vals, vecs) = eigendecompose(&a).unwrap();
        let rebuilt = &vecs * DMatrix::from_diagonal(&vals) * vecs.transpose();
        prop_assert!((rebuilt - &a).norm() <= 1e-10 * (1.0 + a.norm()));
        prop_assert!((vecs.transpose() * &vecs - DMatrix::identity(a.nrows(), a.nrows())).norm() <= 1e-10);
        for w in vals.as_slice().windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn stored_residuals_are_reproducible(c in prop::collection::vec(-3.0..3.0f64, 1..6), r in 0.5..3.0f64) {
        let prog = box_ball(&c, r);
        let sol = solve(&prog, 1e-8, 500).unwrap();
        prop_assert_eq!(sol.status, SolveStatus::Optimal);
        let again = residuals(&prog, &sol.x, &sol.s, &sol.y_dual);
        prop_assert!((again.primal_res - sol.residuals.primal_res).abs() <= 1e-12);
        prop_assert!((again.dual_res - sol.residuals.dual_res).abs() <= 1e-12);
        prop_assert!((again.gap_res - sol.residuals.gap_res).abs() <= 1e-12);
        prop_assert!(sol.residuals.max() <= 1e-8);
    }

    #[test]
    fn objective_scaling_scales_value(c in prop::collection::vec(-3.0..3.0f64, 1..6), gamma in 0.01..100.0f64) {
        let prog = box_ball(&c, 1.5);
        let mut scaled = prog.clone();
        scaled.c.iter_mut().for_each(|v| *v *= gamma);
        let a = solve(&prog, 1e-9, 500).unwrap();
        let b = solve(&scaled, 1e-9, 500).unwrap();
        prop_assert!((b.primal_obj - gamma * a.primal_obj).abs() <= 1e-6 * (1.0 + gamma * a.primal_obj.abs()));
        // unique minimizer unless the cost vanishes
        if c.iter().map(|v| v * v).sum::<f64>() > 1e-2 {
            for (x, y) in a.x.iter().zip(&b.x) {
                prop_assert!((x - y).abs() <= 1e-4);
            }
        }
    }

    #[test]
    fn gram_shift_is_exact(seed in any::<u64>(), l1 in 0.0..5.0f64, l2 in 0.0..5.0f64) {
        let inst = synthetic(12, 4, seed);
        let d = gram(&inst, l2) - gram(&inst, l1);
        let base = gram(&inst, 0.0).norm();
        prop_assert!((d - DMatrix::identity(4, 4) * (l2 - l1)).norm() <= 1e-14 * (base + l1 + l2));
    }

    #[test]
    fn gap_is_scale_invariant(lb in 0.1..1e4f64, extra in 0.0..1e3f64, s in 1e-3..1e3f64) {
        let a = gap(lb, lb + extra).unwrap();
        let b = gap(s * lb, s * (lb + extra)).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn penalty_symmetries(b1 in -3.0..3.0f64, b2 in -3.0..3.0f64, d1 in 0.0..3.0f64, d2 in 0.0..3.0f64, k in 0.0..4.0f64, dk in 0.0..2.0f64) {
        let p = Penalty2DParams::new(d1, d2, k).unwrap();
        let swapped = Penalty2DParams::new(d2, d1, k).unwrap();
        let more = Penalty2DParams::new(d1, d2, k + dk).unwrap();
        for f in [rho_r1_2d as fn([f64; 2], &Penalty2DParams) -> f64, rho_mc_plus_2d] {
            let v = f([b1, b2], &p);
            prop_assert!((f([-b1, -b2], &p) - v).abs() <= 1e-12 * (1.0 + v.abs()));
            prop_assert!((f([b2, b1], &swapped) - v).abs() <= 1e-12 * (1.0 + v.abs()));
            prop_assert!(f([b1, b2], &more) >= v - 1e-12 * (1.0 + v.abs()));
        }
        prop_assert!(rho_r1_2d([b1, b2], &p) >= rho_mc_plus_2d([b1, b2], &p) - 1e-9);
    }

    #[test]
    fn rte_identity(hat in prop::collection::vec(-3.0..3.0f64, 6), s in 1usize..6, rho in 0.0..0.95f64, snr in 0.05..20.0f64) {
        let spec = SyntheticSpec { n: 1, p: 6, s, rho, snr, seed: 0 };
        let m = metrics(&hat, &spec.beta0(), &spec.sigma(), spec.sigma2()).unwrap();
        prop_assert!((m.rte - (m.rr * snr + 1.0)).abs() <= 1e-12 * (1.0 + m.rte));
        prop_assert!(m.correct_nonzeros <= m.nonzeros.min(s));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn dominance_is_invariant_to_permutation_and_scale(seed in any::<u64>(), scale in 0.1..10.0f64) {
        let inst = synthetic(15, 5, seed);
        let q = gram(&inst, 0.1);
        let perm = [3, 0, 4, 1, 2];
        let qp = DMatrix::from_fn(5, 5, |i, j| q[(perm[i], perm[j])]);
        let a = diagonal_dominance(&q).unwrap();
        prop_assert!((diagonal_dominance(&qp).unwrap() - a).abs() <= 1e-5);
        prop_assert!((diagonal_dominance(&(q * scale)).unwrap() - a).abs() <= 1e-5);
    }

    #[test]
    fn sandwich_and_hierarchy(seed in any::<u64>(), p in 3usize..9, k in 1usize..4, ridge in prop::bool::ANY) {
        let k = k.min(p);
        let inst = synthetic(25, p, seed);
        let h = HyperParams::new(if ridge { 0.05 } else { 0.0 }, 0.0, k);
        let opts = SolveOptions { tol: 1e-8, allow_high_order: true, ..SolveOptions::default() };
        let slack = 2e-8 * inst.y.dot(&inst.y);
        let value = |kind| solve_relaxation(&inst, RelaxationSpec::new(kind, h), &opts).unwrap();
        let sdp2 = value(RelaxationKind::SdpR(2));
        let lb = value(RelaxationKind::SdpLb).nu_lb;
        let r1 = value(RelaxationKind::SdpR(1)).nu_lb;
        let r3 = value(RelaxationKind::SdpR(3.min(p))).nu_lb;
        let opt = brute_force_opt(&inst, &h).unwrap().nu;
        let ub = greedy_round(&sdp2.beta, &inst, &h).unwrap().nu_ub;
        prop_assert!(lb <= sdp2.nu_lb + slack);
        prop_assert!(r1 <= sdp2.nu_lb + slack && sdp2.nu_lb <= r3 + slack && r3 <= opt + slack);
        prop_assert!(opt <= ub + 1e-9 * opt);
        let z_sum: f64 = sdp2.z.iter().sum();
        prop_assert!(z_sum <= k as f64 + 1e-6);
        for w in &sdp2.w {
            let zt: f64 = w.subset.iter().map(|&i| sdp2.z[i]).sum();
            prop_assert!(w.value <= zt.min(1.0) + 1e-6);
        }
    }
}

#[test]
fn rank_one_exactness() {
    // Q = aaᵀ with every aᵢ ≠ 0: the full-order relaxation is exact
    for (seed, a) in [(1u64, [1.0, -2.0, 0.5]), (2, [0.3, 0.9, -1.4]), (3, [2.0, 1.0, 1.0])] {
        let mut x = DMatrix::zeros(3, 3);
        x.row_mut(0).copy_from(&DVector::from_column_slice(&a).transpose());
        let y = DVector::from_column_slice(&[1.0 + seed as f64 * 0.3, 0.0, 0.0]);
        let inst = RegressionInstance::new(x, y).unwrap();
        for mu in [0.1, 0.5] {
            let h = HyperParams::new(0.0, mu, 1);
            let opts = SolveOptions { tol: 1e-9, allow_high_order: true, ..SolveOptions::default() };
            let lb = solve_relaxation(&inst, RelaxationSpec::new(RelaxationKind::SdpR(3), h), &opts).unwrap().nu_lb;
            let opt = brute_force_opt(&inst, &h).unwrap().nu;
            assert!((lb - opt).abs() <= 1e-6 * (1.0 + opt), "a = {a:?}, mu = {mu}: {lb} vs {opt}");
        }
    }
}

#[test]
fn order_three_relaxation_converges_for_every_equilibration() {
    let inst = synthetic(25, 7, 4516762753189858418);
    let opts = SolveOptions { tol: 1e-8, allow_high_order: true, ..SolveOptions::default() };
    let spec = RelaxationSpec::new(RelaxationKind::SdpR(3), HyperParams::new(0.05, 0.0, 3));
    let compiled = rank1_sparse::formulations::build(&inst, spec, &opts).unwrap();
    for rounds in [0, 1, 5, 15, 30] {
        let settings = rank1_sparse::conic::SolverSettings { tol: 1e-8, max_iters: 500, equilibration_rounds: rounds };
        let sol = rank1_sparse::conic::solve_with(&compiled.program, &settings).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal, "{rounds} rounds: residual {:.2e}", sol.residuals.max());
    }
}
