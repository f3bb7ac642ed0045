use nalgebra::DVector;

use crate::error::Result;
use crate::linalg::minres;
use crate::problem::GridProblem;

/// Dense LU for the Newton system up to this dimension, MINRES above.
const DENSE_NEWTON_LIMIT: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome {
    pub x: DVector<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Undamped Newton on `∇J = 0` until `|∇J| ≤ tol·(1 + |x|₂)`.
///
/// Converges to whichever critical point is nearest; callers decide whether
/// the limit is acceptable.
pub fn newton_polish(
    p: &GridProblem,
    x0: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<NewtonOutcome> {
    let mut x = x0.clone();
    let mut g = p.gradient_vec(&x);
    let mut res = g.norm();
    let mut iterations = 0;
    let mut worse = 0;
    while res > tol * (1.0 + x.norm()) && iterations < max_iter {
        let Some(step) = newton_step(p, &x, &g)? else {
            break;
        };
        let next = &x - step;
        let g_next = p.gradient_vec(&next);
        let res_next = g_next.norm();
        if !res_next.is_finite() {
            break;
        }
        worse = if res_next >= res { worse + 1 } else { 0 };
        x = next;
        g = g_next;
        res = res_next;
        iterations += 1;
        if worse >= 3 {
            break;
        }
    }
    Ok(NewtonOutcome {
        converged: res <= tol * (1.0 + x.norm()),
        x,
        residual: res,
        iterations,
    })
}

/// Solve `H(x)·s = g`; `None` when the Hessian is numerically singular.
fn newton_step(p: &GridProblem, x: &DVector<f64>, g: &DVector<f64>) -> Result<Option<DVector<f64>>> {
    if x.len() <= DENSE_NEWTON_LIMIT {
        let h = p.hessian_dense(x)?;
        return Ok(h.lu().solve(g).filter(|s| s.iter().all(|v| v.is_finite())));
    }
    let curv = p.curvature_vec(x)?;
    let lambda = p.lambda();
    let op = p.operator();
    let out = minres(
        |w| {
            let mut out = op.apply_vec(w);
            for k in 0..w.len() {
                out[k] -= lambda * curv[k] * w[k];
            }
            out
        },
        g,
        1e-13,
        20 * x.len(),
    );
    Ok(out.converged.then_some(out.x))
}
