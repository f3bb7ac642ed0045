use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{better_max, newton_polish, CriticalPoint, PointKind, SolverOptions, TraceRow};
use crate::error::{Error, Result};
use crate::grid::ground_state;
use crate::problem::GridProblem;
use crate::seeds;

/// Iterates beyond this norm count as divergence.
const BLOW_UP: f64 = 1e12;

fn probe_directions(p: &GridProblem, random: usize, label: &str, seed: u64) -> Vec<DVector<f64>> {
    let dim = p.dim();
    let mut dirs = Vec::new();
    let phi = ground_state(p.shape());
    dirs.push(phi.clone());
    dirs.push(-phi);
    for k in 0..dim.min(8) {
        let mut e = DVector::zeros(dim);
        e[k] = 1.0;
        dirs.push(e.clone());
        dirs.push(-e);
    }
    let mut rng = seeds::stream(seed, label, 0);
    for _ in 0..random {
        let d = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        dirs.push(d.normalize());
    }
    dirs
}

/// Checks `t ↦ J(t·d)` is eventually decreasing on sampled rays, probing
/// `t = 2^k`, `k = 0..40`.
pub fn anti_coercivity_check(p: &GridProblem, seed: u64) -> Result<()> {
    for d in probe_directions(p, 16, "anti-coercive", seed) {
        let mut tail = Vec::new();
        for k in 0..=40 {
            let v = p.energy_vec(&(&d * 2f64.powi(k)));
            if v.is_nan() || v == f64::INFINITY {
                return Err(Error::NotAntiCoercive(format!(
                    "J grows without bound along a sampled ray (J(2^{k}·d) = {v})"
                )));
            }
            tail.push(v);
            if v == f64::NEG_INFINITY {
                break;
            }
        }
        let n = tail.len();
        if n >= 3 && !(tail[n - 1] < tail[n - 2] && tail[n - 2] < tail[n - 3]) {
            return Err(Error::NotAntiCoercive(format!(
                "J is not decreasing along a sampled ray (last values {:.3e}, {:.3e})",
                tail[n - 2],
                tail[n - 1]
            )));
        }
    }
    Ok(())
}

/// Maximum of `t ↦ J(t·d)` over `t ∈ {0} ∪ {2^(k/8)}` with a golden-section
/// refinement around the best grid point.
fn ray_maximum(p: &GridProblem, d: &DVector<f64>) -> DVector<f64> {
    let ts: Vec<f64> = std::iter::once(0.0)
        .chain((-160..=160).map(|k| 2f64.powf(k as f64 / 8.0)))
        .collect();
    let vals: Vec<f64> = ts.iter().map(|&t| p.energy_vec(&(d * t))).collect();
    let mut best = 0;
    for i in 1..ts.len() {
        if vals[i] > vals[best] {
            best = i;
        }
    }
    let (mut a, mut b) = (ts[best.saturating_sub(1)], ts[(best + 1).min(ts.len() - 1)]);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let f = |t: f64| p.energy_vec(&(d * t));
    for _ in 0..80 {
        let c = b - g * (b - a);
        let e = a + g * (b - a);
        if f(c) >= f(e) {
            b = e;
        } else {
            a = c;
        }
    }
    let t = 0.5 * (a + b);
    if f(t) >= vals[best] {
        d * t
    } else {
        d * ts[best]
    }
}

/// Global maximizer of `J` over the whole space.
///
/// Requires anti-coercivity (checked on rays). Starts are the maxima of `J`
/// along `±φ₁`, `±e_k` and `opts.starts` random rays; each is refined by
/// gradient ascent and Newton.
pub fn global_maximize(p: &GridProblem, opts: &SolverOptions) -> Result<CriticalPoint> {
    anti_coercivity_check(p, opts.seed)?;
    let starts: Vec<DVector<f64>> = probe_directions(p, opts.starts, "global-max", opts.seed)
        .iter()
        .map(|d| ray_maximum(p, d))
        .collect();
    global_maximize_from(p, &starts, opts)
}

/// [`global_maximize`] from explicit start points (no ray search, no
/// anti-coercivity probe).
pub fn global_maximize_from(
    p: &GridProblem,
    starts: &[DVector<f64>],
    opts: &SolverOptions,
) -> Result<CriticalPoint> {
    if starts.is_empty() {
        return Err(Error::InvalidInput("no start points".into()));
    }
    for s in starts {
        p.shape().check_len(s.len())?;
    }
    let runs: Vec<Result<Ascent>> = starts.par_iter().map(|x0| ascend(p, x0.clone(), opts)).collect();
    let mut best: Option<Ascent> = None;
    for run in runs {
        let run = run?;
        best = Some(match best {
            None => run,
            Some(b) => {
                // converged candidates always beat unconverged ones
                let wins = if run.converged != b.converged {
                    run.converged
                } else {
                    better_max((run.value, &run.x), (b.value, &b.x))
                };
                if wins {
                    run
                } else {
                    b
                }
            }
        });
    }
    let best = best.expect("non-empty");
    CriticalPoint::build(p, best.x, PointKind::GlobalMax, best.converged, best.iterations, best.trace)
}

struct Ascent {
    x: DVector<f64>,
    value: f64,
    converged: bool,
    iterations: usize,
    trace: Vec<TraceRow>,
}

fn ascend(p: &GridProblem, mut x: DVector<f64>, opts: &SolverOptions) -> Result<Ascent> {
    let mut value = p.energy_vec(&x);
    let mut t = 1.0 / p.operator().alpha_max();
    let mut handoff = opts.handoff_tol.max(opts.tol);
    let mut trace = Vec::new();
    let mut iterations = 0;
    while iterations < opts.max_iter {
        let g = p.gradient_vec(&x);
        let gn = g.norm();
        let scale = 1.0 + x.norm();
        if opts.record_traces {
            trace.push(TraceRow {
                iteration: iterations,
                value,
                residual: gn,
                norm: x.norm(),
            });
        }
        if gn <= opts.tol * scale {
            return Ok(Ascent { x, value, converged: true, iterations, trace });
        }
        if opts.newton_polish && gn <= handoff * scale {
            let out = newton_polish(p, &x, opts.tol, 50)?;
            let nv = p.energy_vec(&out.x);
            if out.converged && nv >= value - 1e-10 * (1.0 + value.abs()) && (&out.x - &x).norm() <= 0.1 * scale {
                return Ok(Ascent {
                    x: out.x,
                    value: nv,
                    converged: true,
                    iterations: iterations + out.iterations,
                    trace,
                });
            }
            handoff = (handoff * 0.1).max(opts.tol);
        }
        let mut moved = false;
        for _ in 0..80 {
            let y = &x + &g * t;
            let vy = p.energy_vec(&y);
            if vy >= value + 0.5 * t * gn * gn {
                x = y;
                value = vy;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        iterations += 1;
        if !value.is_finite() || x.norm() > BLOW_UP {
            return Err(Error::NotAntiCoercive(format!(
                "gradient ascent diverged (|x| = {:.3e})",
                x.norm()
            )));
        }
        if !moved {
            break;
        }
        t = (t * 2.0).min(1e8);
    }
    let converged = p.residual_vec(&x) <= opts.tol * (1.0 + x.norm());
    Ok(Ascent { x, value, converged, iterations, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::Nonlinearity;

    #[test]
    fn scalar_quartic_maximum() {
        let p = GridProblem::on_grid(1, 1, Nonlinearity::power(1.0, 4.0, 0.0), 0.5).unwrap();
        let w = global_maximize(&p, &SolverOptions::default()).unwrap();
        assert!(w.converged);
        assert!((w.value - 2.0).abs() < 1e-12);
        // tie between ±√2 goes to the smaller vector
        assert!((w.point.values()[0] + 2.0_f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn antisymmetric_branch_wins_on_two_sites() {
        let p = GridProblem::on_grid(2, 1, Nonlinearity::power(1.0, 4.0, 0.0), 0.5).unwrap();
        let w = global_maximize(&p, &SolverOptions::default()).unwrap();
        assert!((w.value - 6.25).abs() < 1e-10);
        let s = 2.5_f64.sqrt();
        let v = w.point.values();
        assert!((v[0].abs() - s).abs() < 1e-9 && (v[0] + v[1]).abs() < 1e-9);
    }

    #[test]
    fn concave_quadratic_maximum_at_zero() {
        // J = 2u² − 10u²
        let p = GridProblem::on_grid(1, 1, Nonlinearity::power(1.0, 2.0, 0.0), 10.0).unwrap();
        let w = global_maximize(&p, &SolverOptions::default()).unwrap();
        assert!(w.point.norm() < 1e-12);
        assert_eq!(w.value, 0.0);
    }

    #[test]
    fn convex_energy_is_rejected() {
        let p = GridProblem::on_grid(2, 2, Nonlinearity::zero(), 1.0).unwrap();
        let err = global_maximize(&p, &SolverOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NotAntiCoercive(_)));
    }
}
