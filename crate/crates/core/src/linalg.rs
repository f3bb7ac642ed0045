//! Matrix-free Krylov kernels used by the certificate and the Newton polish.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KrylovOutcome {
    #[serde(skip)]
    pub x: DVector<f64>,
    pub iterations: usize,
    /// Final residual `|b − Ax|₂`, recomputed from `x`.
    pub residual: f64,
    pub converged: bool,
}

/// Conjugate gradients for symmetric positive definite `apply`.
///
/// Stops when `|r|₂ ≤ tol·max(1, |b|₂)`.
pub fn conjugate_gradient<F>(apply: F, b: &DVector<f64>, tol: f64, max_iter: usize) -> KrylovOutcome
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let target = tol * b.norm().max(1.0);
    let mut x = DVector::zeros(b.len());
    let mut r = b.clone();
    let mut rr = r.norm_squared();
    let mut p = r.clone();
    let mut iterations = 0;
    while rr.sqrt() > target && iterations < max_iter {
        let ap = apply(&p);
        let pap = p.dot(&ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rr / pap;
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        let rr_next = r.norm_squared();
        p = &r + &p * (rr_next / rr);
        rr = rr_next;
        iterations += 1;
    }
    let residual = (b - apply(&x)).norm();
    KrylovOutcome {
        converged: residual <= target,
        x,
        iterations,
        residual,
    }
}

/// MINRES for symmetric, possibly indefinite `apply`.
///
/// Stops when the recurrence residual drops to `tol·|b|₂`.
pub fn minres<F>(apply: F, b: &DVector<f64>, tol: f64, max_iter: usize) -> KrylovOutcome
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = b.len();
    let mut x = DVector::zeros(n);
    let beta1 = b.norm();
    if beta1 == 0.0 {
        return KrylovOutcome {
            x,
            iterations: 0,
            residual: 0.0,
            converged: true,
        };
    }
    let mut r1 = b.clone();
    let mut r2 = b.clone();
    let mut y = b.clone();
    let mut w = DVector::zeros(n);
    let mut w2 = DVector::zeros(n);
    let (mut oldb, mut beta) = (0.0, beta1);
    let (mut dbar, mut epsln, mut phibar) = (0.0, 0.0, beta1);
    let (mut cs, mut sn) = (-1.0, 0.0);
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        let v = &y / beta;
        y = apply(&v);
        if iterations >= 2 {
            y.axpy(-beta / oldb, &r1, 1.0);
        }
        let alfa = v.dot(&y);
        y.axpy(-alfa / beta, &r2, 1.0);
        r1 = std::mem::replace(&mut r2, y.clone());
        oldb = beta;
        beta = r2.norm();

        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;

        let w1 = std::mem::replace(&mut w2, w.clone());
        w = (&v - &w1 * oldeps - &w2 * delta) / gamma;
        x.axpy(phi, &w, 1.0);

        if phibar <= tol * beta1 || beta == 0.0 {
            break;
        }
    }
    let residual = (b - apply(&x)).norm();
    KrylovOutcome {
        // the recurrence can stall a little above the true residual
        converged: residual <= 10.0 * tol * beta1,
        x,
        iterations,
        residual,
    }
}

/// Smallest and largest eigenvalue of a symmetric operator.
///
/// Dense symmetric eigendecomposition up to `dense_limit`, Lanczos with full
/// reorthogonalisation beyond it.
pub fn extreme_eigenvalues<F>(apply: F, n: usize, dense_limit: usize) -> (f64, f64)
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    if n <= dense_limit {
        let mut h = DMatrix::zeros(n, n);
        for k in 0..n {
            let mut e = DVector::zeros(n);
            e[k] = 1.0;
            h.set_column(k, &apply(&e));
        }
        let h = (&h + h.transpose()) * 0.5;
        let eig = SymmetricEigen::new(h).eigenvalues;
        return (eig.min(), eig.max());
    }
    lanczos_extremes(apply, n, n.min(160))
}

fn lanczos_extremes<F>(apply: F, n: usize, steps: usize) -> (f64, f64)
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    // fixed, non-symmetric start so sign-symmetric extremal vectors are not missed
    let mut q = DVector::from_fn(n, |k, _| 1.0 + 0.5 * ((k as f64 + 1.0) * 0.618).sin());
    q /= q.norm();
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(steps);
    let mut alphas = Vec::with_capacity(steps);
    let mut betas: Vec<f64> = Vec::with_capacity(steps);
    for _ in 0..steps {
        let mut z = apply(&q);
        let a = q.dot(&z);
        z.axpy(-a, &q, 1.0);
        if let (Some(prev), Some(&b)) = (basis.last(), betas.last()) {
            z.axpy(-b, prev, 1.0);
        }
        basis.push(q.clone());
        alphas.push(a);
        for _ in 0..2 {
            for v in &basis {
                let c = v.dot(&z);
                z.axpy(-c, v, 1.0);
            }
        }
        let b = z.norm();
        if b < 1e-12 * a.abs().max(1.0) {
            break;
        }
        betas.push(b);
        q = z / b;
    }
    let k = alphas.len();
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = SymmetricEigen::new(t).eigenvalues;
    (eig.min(), eig.max())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize) -> DMatrix<f64> {
        let m = DMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 3) as f64 * 0.37).sin());
        &m * m.transpose() + DMatrix::identity(n, n) * 0.5
    }

    #[test]
    fn cg_solves_spd() {
        let a = spd(12);
        let b = DVector::from_fn(12, |i, _| i as f64 - 3.0);
        let out = conjugate_gradient(|x| &a * x, &b, 1e-12, 500);
        assert!(out.converged);
        let exact = a.clone().lu().solve(&b).unwrap();
        assert!((out.x - exact).norm() < 1e-8);
    }

    #[test]
    fn cg_zero_rhs() {
        let a = spd(4);
        let out = conjugate_gradient(|x| &a * x, &DVector::zeros(4), 1e-12, 10);
        assert_eq!(out.iterations, 0);
        assert_eq!(out.x, DVector::zeros(4));
    }

    #[test]
    fn minres_solves_indefinite() {
        let n = 30;
        let d = DMatrix::from_diagonal(&DVector::from_fn(n, |i, _| i as f64 - 9.5));
        let q = spd(n).qr().q();
        let a = &q * d * q.transpose();
        let b = DVector::from_fn(n, |i, _| (i as f64).cos());
        let out = minres(|x| &a * x, &b, 1e-13, 500);
        assert!(out.converged, "{out:?}");
        let exact = a.clone().lu().solve(&b).unwrap();
        assert!((&out.x - &exact).norm() < 1e-8 * exact.norm());
    }

    #[test]
    fn lanczos_matches_dense_extremes() {
        let n = 80;
        let a = {
            let s = spd(n);
            s - DMatrix::identity(n, n) * 20.0
        };
        let dense = extreme_eigenvalues(|x| &a * x, n, n);
        let lz = lanczos_extremes(|x| &a * x, n, 80);
        assert!((dense.0 - lz.0).abs() < 1e-8 * dense.0.abs().max(1.0));
        assert!((dense.1 - lz.1).abs() < 1e-8 * dense.1.abs().max(1.0));
    }
}
