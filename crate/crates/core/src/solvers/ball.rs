use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{better_min, newton_polish, CriticalPoint, PointKind, SolverOptions, TraceRow};
use crate::dc::CertifyTolerances;
use crate::error::{Error, Result};
use crate::grid::GridVector;
use crate::linalg::conjugate_gradient;
use crate::problem::GridProblem;
use crate::seeds;

/// Minimize `J` over the closed ball `|x|₂ ≤ ρ`.
///
/// Projected gradient descent with backtracking from `0` and `opts.starts`
/// random points of the ball; the lowest value wins (ties: lexicographically
/// smallest vector). Interior limits are Newton-polished.
pub fn ball_minimize(p: &GridProblem, rho: f64, opts: &SolverOptions) -> Result<CriticalPoint> {
    let dim = p.dim();
    let mut rng = seeds::stream(opts.seed, "ball", 0);
    let mut starts = vec![DVector::zeros(dim)];
    for _ in 0..opts.starts {
        let dir = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let r = rho * rng.random::<f64>().powf(1.0 / dim as f64);
        starts.push(dir.normalize() * r);
    }
    ball_minimize_from(p, rho, &starts, opts)
}

/// [`ball_minimize`] with explicit start points (projected onto the ball first).
pub fn ball_minimize_from(
    p: &GridProblem,
    rho: f64,
    starts: &[DVector<f64>],
    opts: &SolverOptions,
) -> Result<CriticalPoint> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::InvalidInput(format!("ball radius must be positive (got {rho})")));
    }
    if starts.is_empty() {
        return Err(Error::InvalidInput("no start points".into()));
    }
    for s in starts {
        p.shape().check_len(s.len())?;
    }
    let runs: Vec<Descent> = starts
        .par_iter()
        .map(|x0| projected_descent(p, rho, project(x0.clone(), rho), opts))
        .collect();
    let best = runs
        .into_iter()
        .reduce(|best, cand| {
            if better_min((cand.value, &cand.x), (best.value, &best.x)) {
                cand
            } else {
                best
            }
        })
        .expect("non-empty");

    let mut x = best.x;
    let mut converged = best.converged;
    let mut iterations = best.iterations;
    if opts.newton_polish && x.norm() < rho * (1.0 - 1e-8) {
        let value = p.energy_vec(&x);
        let residual = p.residual_vec(&x);
        let polished = newton_polish(p, &x, opts.tol * 1e-2, 50)?;
        let keep = polished.x.norm() <= rho
            && polished.residual < residual
            && p.energy_vec(&polished.x) <= value + 1e-12 * (1.0 + value.abs());
        if keep {
            converged |= polished.converged;
            iterations += polished.iterations;
            x = polished.x;
        }
    }
    CriticalPoint::build(p, x, PointKind::BallMin, converged, iterations, best.trace)
}

/// `v = argmin ½vᵀAv − λ⟨f(u), v⟩`, i.e. the solution of `Av = λf(u)`.
pub fn convex_subproblem(p: &GridProblem, u: &GridVector) -> Result<GridVector> {
    p.shape().check(&u.shape())?;
    let tol = CertifyTolerances::default();
    let rhs = p.nonlinear_term(u.values()) * p.lambda();
    let op = p.operator();
    let out = conjugate_gradient(|x| op.apply_vec(x), &rhs, tol.tol_linear, tol.max_iter);
    if !out.converged {
        return Err(Error::NotConverged {
            what: "conjugate gradients".into(),
            iterations: out.iterations,
        });
    }
    Ok(p.wrap(out.x))
}

fn project(mut x: DVector<f64>, rho: f64) -> DVector<f64> {
    let nrm = x.norm();
    if nrm > rho {
        x *= rho / nrm;
    }
    x
}

struct Descent {
    x: DVector<f64>,
    value: f64,
    converged: bool,
    iterations: usize,
    trace: Vec<TraceRow>,
}

/// First-order measure: `|∇J|` inside, the tangential part on the sphere when
/// `−∇J` points outward. Also reports the KKT angle test.
fn stationarity(x: &DVector<f64>, g: &DVector<f64>, rho: f64) -> (f64, bool) {
    let nx = x.norm();
    if nx >= rho * (1.0 - 1e-10) && nx > 0.0 {
        let radial = g.dot(x) / nx;
        if radial <= 0.0 {
            let tangential = (g - x * (radial / nx)).norm();
            let gn = g.norm();
            let kkt = gn > 0.0 && -radial / gn >= 1.0 - 1e-8;
            return (tangential, kkt);
        }
    }
    (g.norm(), false)
}

fn projected_descent(p: &GridProblem, rho: f64, mut x: DVector<f64>, opts: &SolverOptions) -> Descent {
    let mut value = p.energy_vec(&x);
    let mut t = 1.0 / p.operator().alpha_max();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        let g = p.gradient_vec(&x);
        let (measure, kkt) = stationarity(&x, &g, rho);
        if opts.record_traces {
            trace.push(TraceRow {
                iteration: iterations,
                value,
                residual: measure,
                norm: x.norm(),
            });
        }
        if measure <= opts.tol * (1.0 + x.norm()) || kkt {
            converged = true;
            break;
        }
        let mut moved = false;
        for _ in 0..80 {
            let y = project(&x - &g * t, rho);
            let d = &y - &x;
            let dn2 = d.norm_squared();
            if dn2 == 0.0 {
                break;
            }
            let vy = p.energy_vec(&y);
            if vy <= value + g.dot(&d) + dn2 / (2.0 * t) && vy <= value {
                x = y;
                value = vy;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        iterations += 1;
        if !moved {
            break;
        }
        t = (t * 2.0).min(1e8);
    }
    Descent {
        x,
        value,
        converged,
        iterations,
        trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridShape;
    use crate::nonlinearity::Nonlinearity;

    fn quartic(m: usize, n: usize, lambda: f64) -> GridProblem {
        GridProblem::on_grid(m, n, Nonlinearity::power(1.0, 4.0, 0.0), lambda).unwrap()
    }

    #[test]
    fn minimizer_of_scalar_quartic_is_zero() {
        // J(u) = 2u² − 0.5u⁴ ≥ 0 on [−1, 1]
        let p = quartic(1, 1, 0.5);
        let cp = ball_minimize(&p, 1.0, &SolverOptions::default()).unwrap();
        assert!(cp.converged);
        assert!(cp.point.norm() < 1e-8);
        assert!(cp.value.abs() < 1e-15);
        // independent grid scan
        let scan = (0..=2000)
            .map(|k| -1.0 + k as f64 / 1000.0)
            .map(|u: f64| 2.0 * u * u - 0.5 * u.powi(4))
            .fold(f64::INFINITY, f64::min);
        assert!(cp.value <= scan + 1e-12);
    }

    #[test]
    fn zero_nonlinearity_minimizer() {
        let p = GridProblem::on_grid(3, 2, Nonlinearity::zero(), 1.0).unwrap();
        let cp = ball_minimize(&p, 2.0, &SolverOptions::default()).unwrap();
        assert!(cp.point.norm() < 1e-8 && cp.value.abs() < 1e-14);
    }

    #[test]
    fn two_site_minimizer() {
        let p = quartic(2, 1, 0.5);
        let cp = ball_minimize(&p, 1.0, &SolverOptions::default()).unwrap();
        assert!(cp.point.norm() < 1e-8 && cp.value.abs() < 1e-14);
        assert_eq!(cp.kind, PointKind::BallMin);
    }

    #[test]
    fn boundary_minimizer_passes_kkt() {
        // large λ pushes the minimizer onto the sphere: J(±ρ) < J(interior)
        let p = quartic(1, 1, 3.0);
        let opts = SolverOptions::default();
        let cp = ball_minimize(&p, 1.0, &opts).unwrap();
        assert!(cp.converged);
        assert!((cp.point.norm() - 1.0).abs() < 1e-12);
        assert_eq!(cp.value, 2.0 - 3.0);
    }

    #[test]
    fn convex_subproblem_examples() {
        let p = quartic(1, 1, 0.5);
        let u = GridVector::from_vec(GridShape::new(1, 1).unwrap(), vec![2.0_f64.sqrt()]).unwrap();
        let v = convex_subproblem(&p, &u).unwrap();
        assert!((v.values()[0] - 2.0_f64.sqrt()).abs() < 1e-14);

        let zero = GridVector::zeros(GridShape::new(1, 1).unwrap());
        assert_eq!(convex_subproblem(&p, &zero).unwrap(), zero);

        // f(u) = (3, 3) with λ = 1: choose u with 4u³ = 3
        let p = quartic(2, 1, 1.0);
        let s = (0.75_f64).cbrt();
        let u = GridVector::from_vec(GridShape::new(2, 1).unwrap(), vec![s, s]).unwrap();
        let v = convex_subproblem(&p, &u).unwrap();
        assert!((v.values()[0] - 1.0).abs() < 1e-12 && (v.values()[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_radius() {
        let p = quartic(1, 1, 0.5);
        assert!(ball_minimize(&p, 0.0, &SolverOptions::default()).is_err());
    }
}
