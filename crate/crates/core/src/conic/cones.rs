//! Per-block cone operations: Nesterov-Todd scaling, Jordan products and step lengths.

use nalgebra::{DMatrix, DVector};

use super::linalg::{smat, svec, svec_index, svec_len};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Kind {
    NonNeg,
    Soc,
    Psd(usize),
}

impl Kind {
    pub(crate) fn degree(self, len: usize) -> usize {
        match self {
            Kind::NonNeg => len,
            Kind::Soc => 1,
            Kind::Psd(n) => n,
        }
    }

    pub(crate) fn identity(self, out: &mut [f64]) {
        out.fill(0.0);
        match self {
            Kind::NonNeg => out.fill(1.0),
            Kind::Soc => out[0] = 1.0,
            Kind::Psd(n) => {
                for i in 0..n {
                    out[svec_index(n, i, i)] = 1.0;
                }
            }
        }
    }

    /// Smallest `t` with `v + t·e` in the cone; `v` is interior iff `t < 0`.
    pub(crate) fn interior_shift(self, v: &[f64]) -> f64 {
        match self {
            Kind::NonNeg => v.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(-x)),
            Kind::Soc => norm(&v[1..]) - v[0],
            Kind::Psd(n) => {
                let m = smat(v, n);
                match m.clone().try_symmetric_eigen(f64::EPSILON, 10_000) {
                    Some(e) => -e.eigenvalues.min(),
                    None => f64::INFINITY,
                }
            }
        }
    }

    /// Jordan product `u ∘ v`.
    pub(crate) fn product(self, u: &[f64], v: &[f64], out: &mut [f64]) {
        match self {
            Kind::NonNeg => {
                for i in 0..u.len() {
                    out[i] = u[i] * v[i];
                }
            }
            Kind::Soc => {
                out[0] = dot(u, v);
                for i in 1..u.len() {
                    out[i] = u[0] * v[i] + v[0] * u[i];
                }
            }
            Kind::Psd(n) => {
                let (a, b) = (smat(u, n), smat(v, n));
                let p = (&a * &b + &b * &a) * 0.5;
                out.copy_from_slice(&svec(&p));
            }
        }
    }

    /// Solves `lambda ∘ x = r` for `x`, where `lambda` is a scaled point
    /// (diagonal for PSD blocks).
    pub(crate) fn inverse_product(self, lambda: &[f64], r: &[f64], out: &mut [f64]) {
        match self {
            Kind::NonNeg => {
                for i in 0..r.len() {
                    out[i] = r[i] / lambda[i];
                }
            }
            Kind::Soc => {
                let l0 = lambda[0];
                let det = jnorm_sq(lambda);
                let x0 = (l0 * r[0] - dot(&lambda[1..], &r[1..])) / det;
                out[0] = x0;
                for i in 1..r.len() {
                    out[i] = (r[i] - x0 * lambda[i]) / l0;
                }
            }
            Kind::Psd(n) => {
                let mut k = 0;
                for j in 0..n {
                    for i in j..n {
                        let li = lambda[svec_index(n, i, i)];
                        let lj = lambda[svec_index(n, j, j)];
                        out[k] = 2.0 * r[k] / (li + lj);
                        k += 1;
                    }
                }
            }
        }
    }

    /// Largest `α ≥ 0` with `lambda + α·d` in the cone (infinite when unbounded).
    pub(crate) fn max_step(self, lambda: &[f64], d: &[f64]) -> f64 {
        match self {
            Kind::NonNeg => {
                let mut a = f64::INFINITY;
                for i in 0..d.len() {
                    if d[i] < 0.0 {
                        a = a.min(-lambda[i] / d[i]);
                    }
                }
                a
            }
            Kind::Soc => soc_max_step(lambda, d),
            Kind::Psd(n) => {
                let mut m = smat(d, n);
                for i in 0..n {
                    let si = lambda[svec_index(n, i, i)].sqrt();
                    for j in 0..n {
                        m[(i, j)] /= si;
                        m[(j, i)] /= si;
                    }
                }
                match m.try_symmetric_eigen(f64::EPSILON, 10_000) {
                    Some(e) => {
                        let lo = e.eigenvalues.min();
                        if lo < 0.0 {
                            -1.0 / lo
                        } else {
                            f64::INFINITY
                        }
                    }
                    None => 0.0,
                }
            }
        }
    }
}

/// Largest step keeping `l + α d` in the second-order cone, given `l` interior.
fn soc_max_step(l: &[f64], d: &[f64]) -> f64 {
    let a = d[0] * d[0] - dot(&d[1..], &d[1..]);
    let b = 2.0 * (l[0] * d[0] - dot(&l[1..], &d[1..]));
    let c = jnorm_sq(l);
    let mut best = f64::INFINITY;
    let mut consider = |t: f64| {
        if t.is_finite() && t > 0.0 && t < best {
            best = t;
        }
    };
    if a.abs() <= 1e-300 {
        if b < 0.0 {
            consider(-c / b);
        }
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            let q = -0.5 * (b + b.signum() * disc.sqrt());
            if q != 0.0 {
                consider(q / a);
                consider(c / q);
            } else {
                consider((-c / a).max(0.0).sqrt());
            }
        }
    }
    if d[0] < 0.0 {
        consider(-l[0] / d[0]);
    }
    best
}

/// Nesterov-Todd scaling `W` of one block, with `W z = W⁻ᵀ s = λ`.
#[derive(Debug, Clone)]
pub(crate) enum Scaling {
    NonNeg { w: Vec<f64> },
    Soc { w: DMatrix<f64>, winv: DMatrix<f64> },
    Psd { n: usize, r: DMatrix<f64>, rinv: DMatrix<f64> },
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Op {
    W,
    Wt,
    Winv,
    WinvT,
}

impl Scaling {
    /// Computes the scaling and `λ`; `None` when either point is not interior.
    pub(crate) fn compute(kind: Kind, s: &[f64], z: &[f64]) -> Option<(Scaling, Vec<f64>)> {
        match kind {
            Kind::NonNeg => {
                if s.iter().chain(z).any(|&v| !(v > 0.0)) {
                    return None;
                }
                let w: Vec<f64> = s.iter().zip(z).map(|(s, z)| (s / z).sqrt()).collect();
                let lambda = s.iter().zip(z).map(|(s, z)| (s * z).sqrt()).collect();
                Some((Scaling::NonNeg { w }, lambda))
            }
            Kind::Soc => {
                let sjs = jnorm_sq(s);
                let zjz = jnorm_sq(z);
                if !(sjs > 0.0 && zjz > 0.0 && s[0] > 0.0 && z[0] > 0.0) {
                    return None;
                }
                let (sn, zn) = (sjs.sqrt(), zjz.sqrt());
                let sbar: Vec<f64> = s.iter().map(|v| v / sn).collect();
                let zbar: Vec<f64> = z.iter().map(|v| v / zn).collect();
                let gamma = ((1.0 + dot(&sbar, &zbar)) / 2.0).sqrt();
                let mut wbar = vec![0.0; s.len()];
                wbar[0] = (sbar[0] + zbar[0]) / (2.0 * gamma);
                for i in 1..s.len() {
                    wbar[i] = (sbar[i] - zbar[i]) / (2.0 * gamma);
                }
                let eta = (sjs / zjz).powf(0.25);
                let m = s.len();
                let mut w = DMatrix::zeros(m, m);
                w[(0, 0)] = wbar[0];
                for i in 1..m {
                    w[(0, i)] = wbar[i];
                    w[(i, 0)] = wbar[i];
                    for j in 1..m {
                        w[(i, j)] = wbar[i] * wbar[j] / (1.0 + wbar[0]);
                    }
                    w[(i, i)] += 1.0;
                }
                let mut winv = w.clone();
                for i in 1..m {
                    winv[(0, i)] = -winv[(0, i)];
                    winv[(i, 0)] = -winv[(i, 0)];
                }
                let scaling = Scaling::Soc { w: w * eta, winv: winv / eta };
                let mut lambda = vec![0.0; s.len()];
                scaling.apply(Op::W, z, &mut lambda);
                Some((scaling, lambda))
            }
            Kind::Psd(n) => {
                let l1 = smat(s, n).cholesky()?.l();
                let l2 = smat(z, n).cholesky()?.l();
                let svd = (l2.transpose() * &l1).svd(true, true);
                let u = svd.u?;
                let vt = svd.v_t?;
                let sv = svd.singular_values;
                if sv.iter().any(|&x| !(x > 0.0)) {
                    return None;
                }
                let inv_sqrt = DVector::from_iterator(n, sv.iter().map(|x| 1.0 / x.sqrt()));
                let mut r = l1 * vt.transpose();
                let mut rinv = u.transpose() * l2.transpose();
                for k in 0..n {
                    r.column_mut(k).scale_mut(inv_sqrt[k]);
                    rinv.row_mut(k).scale_mut(inv_sqrt[k]);
                }
                let mut lambda = vec![0.0; svec_len(n)];
                for i in 0..n {
                    lambda[svec_index(n, i, i)] = sv[i];
                }
                Some((Scaling::Psd { n, r, rinv }, lambda))
            }
        }
    }

    pub(crate) fn apply(&self, op: Op, x: &[f64], out: &mut [f64]) {
        match self {
            Scaling::NonNeg { w } => match op {
                Op::W | Op::Wt => {
                    for i in 0..x.len() {
                        out[i] = w[i] * x[i];
                    }
                }
                Op::Winv | Op::WinvT => {
                    for i in 0..x.len() {
                        out[i] = x[i] / w[i];
                    }
                }
            },
            Scaling::Soc { w, winv } => {
                let x = DVector::from_column_slice(x);
                let y = match op {
                    Op::W => w * x,
                    Op::Wt => w.tr_mul(&x),
                    Op::Winv => winv * x,
                    Op::WinvT => winv.tr_mul(&x),
                };
                out.copy_from_slice(y.as_slice());
            }
            Scaling::Psd { n, r, rinv } => {
                let m = smat(x, *n);
                let y = match op {
                    Op::W => r.transpose() * m * r,
                    Op::Wt => r * m * r.transpose(),
                    Op::Winv => rinv.transpose() * m * rinv,
                    Op::WinvT => rinv * m * rinv.transpose(),
                };
                out.copy_from_slice(&svec(&y));
            }
        }
    }
}

/// `v₀² − ‖v₁‖²` evaluated as a product to limit cancellation.
fn jnorm_sq(v: &[f64]) -> f64 {
    let t = norm(&v[1..]);
    (v[0] - t) * (v[0] + t)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
