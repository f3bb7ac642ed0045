use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ground_state, GridVector};
use crate::problem::GridProblem;
use crate::seeds;

/// Radii probed for the `(κ, ξ)` pair, as fractions of `ρ₁`.
const RADIUS_STEPS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MountainGeometryReport {
    pub rho1: f64,
    /// Sampled estimate `b` of `inf_{|x|=ρ₁} J(x)`.
    pub inf_sphere_estimate: Option<f64>,
    pub endpoint_max: f64,
    /// `b − max{J(x₀), J(x₁)}`.
    pub margin: Option<f64>,
    /// Radius with the largest sampled sphere infimum `ξ` above `J(0)`.
    pub kappa: Option<f64>,
    pub xi: Option<f64>,
    pub samples: usize,
    pub degenerate: bool,
    pub verdict: bool,
}

/// Directions probed on every sphere: `±φ₁`, `±e_k`, then antipodal random pairs,
/// `samples` in total.
fn sphere_directions(dim: usize, phi: DVector<f64>, samples: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut dirs = Vec::with_capacity(samples);
    dirs.push(phi.clone());
    dirs.push(-phi);
    for k in 0..dim {
        let mut e = DVector::zeros(dim);
        e[k] = 1.0;
        dirs.push(e.clone());
        dirs.push(-e);
    }
    dirs.truncate(samples);
    let mut rng = seeds::stream(seed, "geometry", 0);
    while dirs.len() < samples {
        let d = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal)).normalize();
        dirs.push(d.clone());
        if dirs.len() < samples {
            dirs.push(-d);
        }
    }
    dirs
}

/// Gradient descent restricted to the sphere `|x| = r` (normalising retraction).
fn sphere_descent(p: &GridProblem, mut x: DVector<f64>, r: f64, max_iter: usize) -> f64 {
    let mut value = p.energy_vec(&x);
    let mut t = 1.0 / p.operator().alpha_max();
    for _ in 0..max_iter {
        let g = p.gradient_vec(&x);
        let radial = g.dot(&x) / (r * r);
        let gt = &g - &x * radial;
        let gn2 = gt.norm_squared();
        if gn2.sqrt() <= 1e-12 * (1.0 + g.norm()) {
            break;
        }
        let mut moved = false;
        for _ in 0..60 {
            let y = &x - &gt * t;
            let y = &y * (r / y.norm());
            let vy = p.energy_vec(&y);
            if vy <= value - 1e-4 * t * gn2 {
                x = y;
                value = vy;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
        t *= 2.0;
    }
    value
}

/// Sampled infimum of `J` on `|x| = r`: every direction is evaluated, the
/// best few are refined by descent on the sphere.
fn sphere_infimum(p: &GridProblem, dirs: &[DVector<f64>], r: f64) -> f64 {
    let mut scored: Vec<(f64, usize)> = dirs
        .iter()
        .enumerate()
        .map(|(k, d)| (p.energy_vec(&(d * r)), k))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut best = scored[0].0;
    for &(_, k) in scored.iter().take(4) {
        best = best.min(sphere_descent(p, &dirs[k] * r, r, 500));
    }
    best
}

/// Sampled check of the mountain-pass geometry on the sphere `|x| = ρ₁`
/// separating `x0` from `x1`.
pub fn mountain_geometry_check(
    p: &GridProblem,
    rho1: f64,
    x0: &GridVector,
    x1: &GridVector,
    samples: usize,
    seed: u64,
) -> Result<MountainGeometryReport> {
    p.shape().check(&x0.shape())?;
    p.shape().check(&x1.shape())?;
    if !(x0.norm() < rho1 && rho1 < x1.norm()) {
        return Err(Error::InvalidInput(format!(
            "need |x0| < rho1 < |x1| (got {:.6e}, {:.6e}, {:.6e})",
            x0.norm(),
            rho1,
            x1.norm()
        )));
    }
    let endpoint_max = p.energy_vec(x0.values()).max(p.energy_vec(x1.values()));
    if samples == 0 {
        return Ok(MountainGeometryReport {
            rho1,
            inf_sphere_estimate: None,
            endpoint_max,
            margin: None,
            kappa: None,
            xi: None,
            samples: 0,
            degenerate: true,
            verdict: false,
        });
    }
    let dirs = sphere_directions(p.dim(), ground_state(p.shape()), samples, seed);
    let b = sphere_infimum(p, &dirs, rho1);
    let margin = b - endpoint_max;

    let j0 = p.energy_at_zero();
    let mut pair: Option<(f64, f64)> = None;
    for k in 1..=RADIUS_STEPS {
        let r = rho1 * k as f64 / RADIUS_STEPS as f64;
        let xi = if k == RADIUS_STEPS { b } else { sphere_infimum(p, &dirs, r) };
        if xi > j0 && pair.is_none_or(|(_, best)| xi > best) {
            pair = Some((r, xi));
        }
    }

    Ok(MountainGeometryReport {
        rho1,
        inf_sphere_estimate: Some(b),
        endpoint_max,
        margin: Some(margin),
        kappa: pair.map(|q| q.0),
        xi: pair.map(|q| q.1),
        samples,
        degenerate: false,
        verdict: margin > 0.0,
    })
}
