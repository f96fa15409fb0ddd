//! Primal-dual interior-point method on the homogeneous self-dual embedding.
//!
//! Zero-cone rows become equalities `Âx = b̂`; the remaining rows become
//! `Gx + s = h, s ∈ K` with rotated cones mapped to second-order cones by an
//! orthogonal change of coordinates. Each iteration computes Nesterov-Todd
//! scalings, factors the reduced KKT matrix once and takes a Mehrotra
//! predictor-corrector step.

use nalgebra::{DMatrix, DVector};

use super::cones::{Kind, Op, Scaling};
use super::{dot, norm, residuals, ConeProgram, ConeSolution, ConeSpec, Residuals, SolveStatus, SolverSettings};
use crate::error::{Error, Result};

const STEP_FRACTION: f64 = 0.99;
const STALL_WINDOW: usize = 25;
const REFINE_STEPS: usize = 4;
const SIGMA_MIN: f64 = 1e-4;

struct Block {
    kind: Kind,
    off: usize,
    len: usize,
    cols: Vec<usize>,
    g: DMatrix<f64>,
}

enum Target {
    Eq(usize),
    Cone { off: usize, rotated: bool },
}

struct Segment {
    orig_off: usize,
    len: usize,
    target: Target,
}

struct Internal {
    n: usize,
    m: usize,
    c: Vec<f64>,
    a: DMatrix<f64>,
    b: Vec<f64>,
    h: Vec<f64>,
    blocks: Vec<Block>,
    segments: Vec<Segment>,
    row_scale_eq: Vec<f64>,
    row_scale_cone: Vec<f64>,
    col_scale: Vec<f64>,
    degree: usize,
}

type Rows = Vec<Vec<(usize, f64)>>;

impl Internal {
    fn new(program: &ConeProgram, rounds: usize) -> Internal {
        let n = program.num_vars();
        let orig_rows = program.a.rows();
        let mut eq_rows: Rows = Vec::new();
        let mut eq_b = Vec::new();
        let mut cone_rows: Rows = Vec::new();
        let mut cone_h = Vec::new();
        let mut kinds: Vec<(Kind, usize, usize)> = Vec::new();
        let mut segments = Vec::new();
        let mut off = 0;
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for cone in &program.cones {
            let len = cone.rows();
            match *cone {
                ConeSpec::Zero(_) => {
                    segments.push(Segment { orig_off: off, len, target: Target::Eq(eq_rows.len()) });
                    for r in off..off + len {
                        eq_rows.push(orig_rows[r].clone());
                        eq_b.push(program.b[r]);
                    }
                }
                _ => {
                    let rotated = matches!(cone, ConeSpec::RotatedSecondOrder(_));
                    segments.push(Segment { orig_off: off, len, target: Target::Cone { off: cone_rows.len(), rotated } });
                    let start = cone_rows.len();
                    for r in off..off + len {
                        cone_rows.push(orig_rows[r].clone());
                        cone_h.push(program.b[r]);
                    }
                    if rotated {
                        let (u, v) = (cone_rows[start].clone(), cone_rows[start + 1].clone());
                        cone_rows[start] = combine(&u, &v, h, h);
                        cone_rows[start + 1] = combine(&u, &v, h, -h);
                        let (hu, hv) = (cone_h[start], cone_h[start + 1]);
                        cone_h[start] = h * (hu + hv);
                        cone_h[start + 1] = h * (hu - hv);
                    }
                    match *cone {
                        ConeSpec::Nonnegative(d) => {
                            for i in 0..d {
                                kinds.push((Kind::NonNeg, start + i, 1));
                            }
                        }
                        ConeSpec::SecondOrder(d) | ConeSpec::RotatedSecondOrder(d) => kinds.push((Kind::Soc, start, d)),
                        ConeSpec::Psd(d) => kinds.push((Kind::Psd(d), start, len)),
                        ConeSpec::Zero(_) => unreachable!(),
                    }
                }
            }
            off += len;
        }

        let (row_scale_eq, row_scale_cone, col_scale) = ruiz(&mut eq_rows, &mut cone_rows, &kinds, n, rounds);
        let c: Vec<f64> = program.c.iter().zip(&col_scale).map(|(c, e)| c * e).collect();
        let b: Vec<f64> = eq_b.iter().zip(&row_scale_eq).map(|(b, d)| b * d).collect();
        let hv: Vec<f64> = cone_h.iter().zip(&row_scale_cone).map(|(h, d)| h * d).collect();

        let mut a = DMatrix::zeros(eq_rows.len(), n);
        for (i, row) in eq_rows.iter().enumerate() {
            for &(j, v) in row {
                a[(i, j)] += v;
            }
        }

        let mut blocks = Vec::with_capacity(kinds.len());
        let mut degree = 0;
        for (kind, off, len) in kinds {
            let mut cols: Vec<usize> = cone_rows[off..off + len].iter().flat_map(|r| r.iter().map(|&(j, _)| j)).collect();
            cols.sort_unstable();
            cols.dedup();
            let mut g = DMatrix::zeros(len, cols.len());
            for (i, row) in cone_rows[off..off + len].iter().enumerate() {
                for &(j, v) in row {
                    let k = cols.binary_search(&j).unwrap();
                    g[(i, k)] += v;
                }
            }
            degree += kind.degree(len);
            blocks.push(Block { kind, off, len, cols, g });
        }

        Internal {
            n,
            m: cone_rows.len(),
            c,
            a,
            b,
            h: hv,
            blocks,
            segments,
            row_scale_eq,
            row_scale_cone,
            col_scale,
            degree,
        }
    }

    fn gx(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        for blk in &self.blocks {
            for (k, &j) in blk.cols.iter().enumerate() {
                let xj = x[j];
                if xj != 0.0 {
                    for i in 0..blk.len {
                        out[blk.off + i] += blk.g[(i, k)] * xj;
                    }
                }
            }
        }
        out
    }

    fn gtv(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for blk in &self.blocks {
            for (k, &j) in blk.cols.iter().enumerate() {
                let mut acc = 0.0;
                for i in 0..blk.len {
                    acc += blk.g[(i, k)] * v[blk.off + i];
                }
                out[j] += acc;
            }
        }
        out
    }

    fn ax(&self, x: &[f64]) -> Vec<f64> {
        (&self.a * DVector::from_column_slice(x)).as_slice().to_vec()
    }

    fn aty(&self, y: &[f64]) -> Vec<f64> {
        (self.a.transpose() * DVector::from_column_slice(y)).as_slice().to_vec()
    }

    fn each_block<F: FnMut(&Block, std::ops::Range<usize>)>(&self, mut f: F) {
        for blk in &self.blocks {
            f(blk, blk.off..blk.off + blk.len);
        }
    }

    fn identity(&self) -> Vec<f64> {
        let mut e = vec![0.0; self.m];
        self.each_block(|blk, r| blk.kind.identity(&mut e[r]));
        e
    }

    fn interior_shift(&self, v: &[f64]) -> f64 {
        let mut t = f64::NEG_INFINITY;
        self.each_block(|blk, r| t = t.max(blk.kind.interior_shift(&v[r])));
        t
    }

    fn product(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        self.each_block(|blk, r| blk.kind.product(&u[r.clone()], &v[r.clone()], &mut out[r]));
        out
    }

    fn inverse_product(&self, lambda: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        self.each_block(|blk, r| blk.kind.inverse_product(&lambda[r.clone()], &v[r.clone()], &mut out[r]));
        out
    }

    fn max_step(&self, lambda: &[f64], d: &[f64]) -> f64 {
        let mut a = f64::INFINITY;
        self.each_block(|blk, r| a = a.min(blk.kind.max_step(&lambda[r.clone()], &d[r])));
        a
    }

    /// Maps an internal iterate back to the original program's coordinates.
    fn recover(&self, program: &ConeProgram, x: &[f64], s: &[f64], y: &[f64], z: &[f64], scale: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let xo: Vec<f64> = x.iter().zip(&self.col_scale).map(|(x, e)| x * e / scale).collect();
        let mut so = vec![0.0; program.num_rows()];
        let mut yo = vec![0.0; program.num_rows()];
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for seg in &self.segments {
            match seg.target {
                Target::Eq(off) => {
                    for i in 0..seg.len {
                        yo[seg.orig_off + i] = y[off + i] * self.row_scale_eq[off + i] / scale;
                    }
                }
                Target::Cone { off, rotated } => {
                    for i in 0..seg.len {
                        let d = self.row_scale_cone[off + i];
                        so[seg.orig_off + i] = s[off + i] / d / scale;
                        yo[seg.orig_off + i] = z[off + i] * d / scale;
                    }
                    if rotated {
                        for v in [&mut so, &mut yo] {
                            let (a, b) = (v[seg.orig_off], v[seg.orig_off + 1]);
                            v[seg.orig_off] = h * (a + b);
                            v[seg.orig_off + 1] = h * (a - b);
                        }
                    }
                }
            }
        }
        (xo, so, yo)
    }
}

fn combine(u: &[(usize, f64)], v: &[(usize, f64)], a: f64, b: f64) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = u.iter().map(|&(j, x)| (j, a * x)).chain(v.iter().map(|&(j, x)| (j, b * x))).collect();
    out.sort_by_key(|e| e.0);
    let mut merged: Vec<(usize, f64)> = Vec::with_capacity(out.len());
    for (j, x) in out {
        match merged.last_mut() {
            Some(last) if last.0 == j => last.1 += x,
            _ => merged.push((j, x)),
        }
    }
    merged
}

/// Ruiz equilibration with one scalar per second-order or PSD block.
fn ruiz(eq: &mut Rows, cone: &mut Rows, kinds: &[(Kind, usize, usize)], n: usize, rounds: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut d_eq = vec![1.0; eq.len()];
    let mut d_cone = vec![1.0; cone.len()];
    let mut e = vec![1.0; n];
    let row_max = |r: &[(usize, f64)]| r.iter().fold(0.0f64, |m, &(_, v)| m.max(v.abs()));
    let factor = |m: f64| if m > 0.0 { (1.0 / m.sqrt()).clamp(1e-4, 1e4) } else { 1.0 };
    for _ in 0..rounds {
        let fe: Vec<f64> = eq.iter().map(|r| factor(row_max(r))).collect();
        let mut fc = vec![1.0; cone.len()];
        for &(_, off, len) in kinds {
            let m = cone[off..off + len].iter().map(|r| row_max(r)).fold(0.0, f64::max);
            let f = factor(m);
            fc[off..off + len].fill(f);
        }
        let mut colmax = vec![0.0f64; n];
        for (rows, f) in [(&*eq, &fe), (&*cone, &fc)] {
            for (r, &fr) in rows.iter().zip(f.iter()) {
                for &(j, v) in r {
                    colmax[j] = colmax[j].max((v * fr).abs());
                }
            }
        }
        let fcol: Vec<f64> = colmax.iter().map(|&m| factor(m)).collect();
        for (rows, f, d) in [(&mut *eq, &fe, &mut d_eq), (&mut *cone, &fc, &mut d_cone)] {
            for ((r, &fr), di) in rows.iter_mut().zip(f.iter()).zip(d.iter_mut()) {
                for (j, v) in r.iter_mut() {
                    *v *= fr * fcol[*j];
                }
                *di *= fr;
            }
        }
        for (ej, f) in e.iter_mut().zip(&fcol) {
            *ej *= f;
        }
    }
    (d_eq, d_cone, e)
}

/// Factored reduced KKT system `[[H, Aᵀ], [A, 0]]`.
struct Kkt {
    h: DMatrix<f64>,
    a: DMatrix<f64>,
    chol: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
    lu: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    delta: f64,
}

impl Kkt {
    fn factor(h: DMatrix<f64>, a: &DMatrix<f64>) -> Option<Kkt> {
        let n = h.nrows();
        let scale = (0..n).map(|i| h[(i, i)].abs()).fold(1.0, f64::max);
        let mut delta = 1e-13 * scale;
        for _ in 0..8 {
            if a.nrows() == 0 {
                let mut hr = h.clone();
                for i in 0..n {
                    hr[(i, i)] += delta;
                }
                if let Some(chol) = hr.cholesky() {
                    return Some(Kkt { h, a: a.clone(), chol: Some(chol), lu: None, delta });
                }
            } else {
                let me = a.nrows();
                let mut k = DMatrix::zeros(n + me, n + me);
                k.view_mut((0, 0), (n, n)).copy_from(&h);
                for i in 0..n {
                    k[(i, i)] += delta;
                }
                k.view_mut((n, 0), (me, n)).copy_from(a);
                k.view_mut((0, n), (n, me)).copy_from(&a.transpose());
                for i in 0..me {
                    k[(n + i, n + i)] = -delta;
                }
                let lu = k.lu();
                if lu.is_invertible() {
                    return Some(Kkt { h, a: a.clone(), chol: None, lu: Some(lu), delta });
                }
            }
            delta *= 100.0;
        }
        None
    }

    fn solve_reg(&self, rx: &DVector<f64>, ry: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        if let Some(chol) = &self.chol {
            (chol.solve(rx), DVector::zeros(0))
        } else {
            let n = rx.len();
            let mut rhs = DVector::zeros(n + ry.len());
            rhs.rows_mut(0, n).copy_from(rx);
            rhs.rows_mut(n, ry.len()).copy_from(ry);
            let sol = self.lu.as_ref().unwrap().solve(&rhs).unwrap_or(rhs);
            (sol.rows(0, n).into_owned(), sol.rows(n, ry.len()).into_owned())
        }
    }

    fn solve(&self, rx: &[f64], ry: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let rx = DVector::from_column_slice(rx);
        let ry = DVector::from_column_slice(ry);
        let (mut x, mut y) = self.solve_reg(&rx, &ry);
        if self.delta > 0.0 {
            for _ in 0..REFINE_STEPS {
                let ex = &rx - &self.h * &x - self.a.transpose() * &y;
                let ey = &ry - &self.a * &x;
                let err = ex.amax().max(if ey.is_empty() { 0.0 } else { ey.amax() });
                if err <= 1e-15 * (1.0 + rx.amax()) {
                    break;
                }
                let (dx, dy) = self.solve_reg(&ex, &ey);
                x += dx;
                y += dy;
            }
        }
        (x.as_slice().to_vec(), y.as_slice().to_vec())
    }
}

struct Iterate {
    x: Vec<f64>,
    y: Vec<f64>,
    s: Vec<f64>,
    z: Vec<f64>,
    tau: f64,
    kappa: f64,
}

struct Direction {
    dx: Vec<f64>,
    dy: Vec<f64>,
    ds: Vec<f64>,
    dz: Vec<f64>,
    dst: Vec<f64>,
    dzt: Vec<f64>,
    dtau: f64,
    dkappa: f64,
}

struct Scaled<'a> {
    prob: &'a Internal,
    w: Vec<Scaling>,
}

impl Scaled<'_> {
    fn apply(&self, op: Op, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for (blk, w) in self.prob.blocks.iter().zip(&self.w) {
            let r = blk.off..blk.off + blk.len;
            w.apply(op, &v[r.clone()], &mut out[r]);
        }
        out
    }

    /// `H = Σ (W⁻ᵀG_b)ᵀ(W⁻ᵀG_b)` assembled block by block.
    fn hessian(&self) -> DMatrix<f64> {
        let n = self.prob.n;
        let mut h = DMatrix::zeros(n, n);
        let mut col = Vec::new();
        let mut out = Vec::new();
        for (blk, w) in self.prob.blocks.iter().zip(&self.w) {
            let k = blk.cols.len();
            let mut m = DMatrix::zeros(blk.len, k);
            col.resize(blk.len, 0.0);
            out.resize(blk.len, 0.0);
            for j in 0..k {
                col.copy_from_slice(blk.g.column(j).as_slice());
                w.apply(Op::WinvT, &col, &mut out);
                m.column_mut(j).copy_from_slice(&out);
            }
            let local = m.transpose() * &m;
            for (a, &ja) in blk.cols.iter().enumerate() {
                for (b, &jb) in blk.cols.iter().enumerate() {
                    h[(ja, jb)] += local[(a, b)];
                }
            }
        }
        h
    }
}

struct Residual4 {
    f1: Vec<f64>,
    f2: Vec<f64>,
    f3: Vec<f64>,
    f4: f64,
}

pub(super) fn solve(program: &ConeProgram, settings: &SolverSettings) -> Result<ConeSolution> {
    let prob = Internal::new(program, settings.equilibration_rounds);
    let n = prob.n;

    let ident = Scaled {
        prob: &prob,
        w: prob
            .blocks
            .iter()
            .map(|blk| {
                let e = {
                    let mut e = vec![0.0; blk.len];
                    blk.kind.identity(&mut e);
                    e
                };
                Scaling::compute(blk.kind, &e, &e).expect("identity is interior").0
            })
            .collect(),
    };
    let kkt0 = Kkt::factor(ident.hessian(), &prob.a)
        .ok_or_else(|| Error::Numerical("initial KKT system is singular".into()))?;
    let (x0, _) = kkt0.solve(&prob.gtv(&prob.h), &prob.b);
    let gx0 = prob.gx(&x0);
    let mut s0: Vec<f64> = prob.h.iter().zip(&gx0).map(|(h, g)| h - g).collect();
    let negc: Vec<f64> = prob.c.iter().map(|v| -v).collect();
    let (xd, y0) = kkt0.solve(&negc, &vec![0.0; prob.b.len()]);
    let mut z0 = prob.gx(&xd);
    let e = prob.identity();
    for v in [&mut s0, &mut z0] {
        let t = prob.interior_shift(v);
        if t >= -1e-8 {
            for (vi, ei) in v.iter_mut().zip(&e) {
                *vi += (1.0 + t.max(0.0)) * ei;
            }
        }
    }
    let mut it = Iterate { x: x0, y: y0, s: s0, z: z0, tau: 1.0, kappa: 1.0 };

    let mut best: Option<(f64, ConeSolution)> = None;
    let mut since_best = 0;
    let theta = prob.degree as f64;
    let c_norm = norm(&program.c);
    let b_norm = norm(&program.b);

    for iter in 0..settings.max_iters {
        let res = embedding_residuals(&prob, &it);

        // termination tests on the original program
        let (xo, so, yo) = prob.recover(program, &it.x, &it.s, &it.y, &it.z, it.tau);
        let r = residuals(program, &xo, &so, &yo);
        let cand = finish(program, xo, so, yo, r, SolveStatus::Optimal, iter);
        if r.max() <= settings.tol {
            return Ok(cand);
        }
        let score = r.max();
        if best.as_ref().is_none_or(|(b, _)| score < 0.9 * *b) {
            best = Some((score, cand));
            since_best = 0;
        } else {
            since_best += 1;
        }

        let hz_by = dot(&prob.h, &it.z) + dot(&prob.b, &it.y);
        if hz_by < 0.0 {
            let (_, _, yc) = prob.recover(program, &it.x, &it.s, &it.y, &it.z, -hz_by);
            let aty = program.a.tmul_vec(&yc);
            if norm(&aty) / c_norm.max(1.0) <= settings.tol {
                return Ok(certificate(program, SolveStatus::InfeasibleCertificate, vec![0.0; n], vec![0.0; program.num_rows()], yc, iter));
            }
        }
        let cx = dot(&prob.c, &it.x);
        if cx < 0.0 {
            let (xc, sc, _) = prob.recover(program, &it.x, &it.s, &it.y, &it.z, -cx);
            let axs: Vec<f64> = program.a.mul_vec(&xc).iter().zip(&sc).map(|(a, s)| a + s).collect();
            if norm(&axs) / b_norm.max(1.0) <= settings.tol {
                return Ok(certificate(program, SolveStatus::UnboundedCertificate, xc, sc, vec![0.0; program.num_rows()], iter));
            }
        }
        if since_best > STALL_WINDOW {
            break;
        }

        if !(it.tau > 0.0) || !(it.kappa > 0.0) {
            break;
        }
        // accumulated scaling updates drift on PSD blocks; recompute from the iterate
        let Some((scal, lambda)) = scale_from_iterate(&prob, &it) else { break };
        let sc = Scaled { prob: &prob, w: scal };
        let Some(kkt) = Kkt::factor(sc.hessian(), &prob.a) else { break };

        let htilde = sc.apply(Op::WinvT, &prob.h);
        let rx2: Vec<f64> = {
            let t = prob.gtv(&sc.apply(Op::Winv, &htilde));
            t.iter().zip(&prob.c).map(|(t, c)| t - c).collect()
        };
        let (dx2, dy2) = kkt.solve(&rx2, &prob.b);
        let gdx2 = prob.gx(&dx2);
        let dzt2 = sc.apply(Op::WinvT, &gdx2.iter().zip(&prob.h).map(|(g, h)| g - h).collect::<Vec<_>>());
        let denom = -dot(&dzt2, &dzt2) - it.kappa / it.tau;
        let sys2 = (dx2, dy2, dzt2, htilde, denom);

        let mu = (dot(&lambda, &lambda) + it.tau * it.kappa) / (theta + 1.0);
        let ll = prob.product(&lambda, &lambda);

        // predictor
        let neg = |v: &[f64], f: f64| v.iter().map(|x| -f * x).collect::<Vec<f64>>();
        let r5a: Vec<f64> = neg(&ll, 1.0);
        let aff = newton(&prob, &sc, &kkt, &it, &lambda, &sys2, (&neg(&res.f1, 1.0), &neg(&res.f2, 1.0), &neg(&res.f3, 1.0), -res.f4, &r5a, -it.tau * it.kappa));
        let alpha_aff = step_length(&prob, &it, &lambda, &aff).min(1.0);
        let sigma = (1.0 - alpha_aff).powi(3).clamp(SIGMA_MIN, 1.0);

        // corrector
        let corr = prob.product(&aff.dst, &aff.dzt);
        let r5: Vec<f64> = ll.iter().zip(&corr).zip(&e).map(|((l, c), e)| -l - c + sigma * mu * e).collect();
        let r6 = -it.tau * it.kappa - aff.dtau * aff.dkappa + sigma * mu;
        let f = 1.0 - sigma;
        let dir = newton(&prob, &sc, &kkt, &it, &lambda, &sys2, (&neg(&res.f1, f), &neg(&res.f2, f), &neg(&res.f3, f), -f * res.f4, &r5, r6));
        let alpha = (STEP_FRACTION * step_length(&prob, &it, &lambda, &dir)).min(1.0);
        if !(alpha > 1e-12) {
            break;
        }

        axpy(&mut it.x, alpha, &dir.dx);
        axpy(&mut it.y, alpha, &dir.dy);
        axpy(&mut it.s, alpha, &dir.ds);
        axpy(&mut it.z, alpha, &dir.dz);
        it.tau += alpha * dir.dtau;
        it.kappa += alpha * dir.dkappa;
        if it.x.iter().chain(&it.s).chain(&it.z).any(|v| !v.is_finite()) {
            break;
        }
    }

    let (_, mut sol) = best.ok_or_else(|| Error::Numerical("solver produced no iterate".into()))?;
    sol.status = SolveStatus::MaxIters;
    Ok(sol)
}

/// NT scalings computed directly from the current `(s, z)`.
fn scale_from_iterate(prob: &Internal, it: &Iterate) -> Option<(Vec<Scaling>, Vec<f64>)> {
    let mut scal = Vec::with_capacity(prob.blocks.len());
    let mut lambda = vec![0.0; prob.m];
    for blk in &prob.blocks {
        let r = blk.off..blk.off + blk.len;
        let (w, l) = Scaling::compute(blk.kind, &it.s[r.clone()], &it.z[r.clone()])?;
        scal.push(w);
        lambda[r].copy_from_slice(&l);
    }
    Some((scal, lambda))
}

fn embedding_residuals(prob: &Internal, it: &Iterate) -> Residual4 {
    let aty = prob.aty(&it.y);
    let gtz = prob.gtv(&it.z);
    let f1 = (0..prob.n).map(|j| aty[j] + gtz[j] + prob.c[j] * it.tau).collect();
    let ax = prob.ax(&it.x);
    let f2 = (0..prob.b.len()).map(|i| -ax[i] + prob.b[i] * it.tau).collect();
    let gx = prob.gx(&it.x);
    let f3 = (0..prob.m).map(|i| it.s[i] + gx[i] - prob.h[i] * it.tau).collect();
    let f4 = it.kappa + dot(&prob.c, &it.x) + dot(&prob.b, &it.y) + dot(&prob.h, &it.z);
    Residual4 { f1, f2, f3, f4 }
}

type Sys2 = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, f64);

/// Right-hand sides `(r₁, r₂, r₃, r₄, r₅, r₆)` of the embedding's Newton system.
type NewtonRhs<'a> = (&'a [f64], &'a [f64], &'a [f64], f64, &'a [f64], f64);

fn newton(
    prob: &Internal,
    sc: &Scaled,
    kkt: &Kkt,
    it: &Iterate,
    lambda: &[f64],
    sys2: &Sys2,
    rhs: NewtonRhs,
) -> Direction {
    let (r1, r2, r3, r4, r5, r6) = rhs;
    let (dx2, dy2, dzt2, htilde, denom) = sys2;
    let lr = prob.inverse_product(lambda, r5);
    let wr3 = sc.apply(Op::WinvT, r3);
    let q: Vec<f64> = wr3.iter().zip(&lr).map(|(a, b)| a - b).collect();
    let t = prob.gtv(&sc.apply(Op::Winv, &q));
    let rx: Vec<f64> = r1.iter().zip(&t).map(|(a, b)| a + b).collect();
    let ry: Vec<f64> = r2.iter().map(|v| -v).collect();
    let (dx1, dy1) = kkt.solve(&rx, &ry);
    let gdx1 = sc.apply(Op::WinvT, &prob.gx(&dx1));
    let dzt1: Vec<f64> = gdx1.iter().zip(&q).map(|(g, r)| g - r).collect();
    let num = r4 - r6 / it.tau - (dot(&prob.c, &dx1) + dot(&prob.b, &dy1) + dot(htilde, &dzt1));
    let dtau = num / denom;
    let dx: Vec<f64> = dx1.iter().zip(dx2).map(|(a, b)| a + dtau * b).collect();
    let dy: Vec<f64> = dy1.iter().zip(dy2).map(|(a, b)| a + dtau * b).collect();
    let dzt: Vec<f64> = dzt1.iter().zip(dzt2).map(|(a, b)| a + dtau * b).collect();
    let dkappa = (r6 - it.kappa * dtau) / it.tau;
    let dst: Vec<f64> = lr.iter().zip(&dzt).map(|(a, b)| a - b).collect();
    let ds = sc.apply(Op::Wt, &dst);
    let dz = sc.apply(Op::Winv, &dzt);
    Direction { dx, dy, ds, dz, dst, dzt, dtau, dkappa }
}

fn step_length(prob: &Internal, it: &Iterate, lambda: &[f64], d: &Direction) -> f64 {
    let mut a = prob.max_step(lambda, &d.dst).min(prob.max_step(lambda, &d.dzt));
    if d.dtau < 0.0 {
        a = a.min(-it.tau / d.dtau);
    }
    if d.dkappa < 0.0 {
        a = a.min(-it.kappa / d.dkappa);
    }
    a
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn finish(program: &ConeProgram, x: Vec<f64>, s: Vec<f64>, y: Vec<f64>, r: Residuals, status: SolveStatus, iterations: usize) -> ConeSolution {
    let primal_obj = dot(&program.c, &x);
    let dual_obj = -dot(&program.b, &y);
    ConeSolution { x, s, y_dual: y, primal_obj, dual_obj, status, residuals: r, iterations }
}

fn certificate(program: &ConeProgram, status: SolveStatus, x: Vec<f64>, s: Vec<f64>, y: Vec<f64>, iterations: usize) -> ConeSolution {
    let r = residuals(program, &x, &s, &y);
    finish(program, x, s, y, r, status, iterations)
}
