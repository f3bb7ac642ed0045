//! Numerical mountain pass on a discretised path `γ(s)`, `s = k/(K−1)`.
//!
//! The path starts as the segment `x₀ → x₁`. Every sweep moves each interior
//! node against the component of `∇J` normal to the path. The current maximum
//! node additionally climbs along the tangent (its tangential gradient is
//! reflected), so it tracks the path maximum instead of sliding off it. Nodes
//! are then redistributed by arclength on both sides of the climbing node.
//! Nodes below the endpoint level stay put. Once the climbing node is nearly stationary it is handed to Newton.

use nalgebra::DVector;
use super::{newton_polish, CriticalPoint, PointKind, SolverOptions, TraceRow};
use crate::error::{Error, Result};
use crate::grid::GridVector;
use crate::problem::GridProblem;

/// Ordered path nodes with fixed endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    nodes: Vec<DVector<f64>>,
}

impl Path {
    /// `K ≥ 3` equally spaced nodes on the segment `x0 → x1`.
    pub fn straight(x0: &DVector<f64>, x1: &DVector<f64>, nodes: usize) -> Result<Self> {
        if nodes < 3 {
            return Err(Error::InvalidInput(format!("path needs at least 3 nodes (got {nodes})")));
        }
        if x0.len() != x1.len() {
            return Err(Error::InvalidInput("path endpoints differ in dimension".into()));
        }
        let last = (nodes - 1) as f64;
        Ok(Self {
            nodes: (0..nodes)
                .map(|k| {
                    let s = k as f64 / last;
                    x0 * (1.0 - s) + x1 * s
                })
                .collect(),
        })
    }

    pub fn nodes(&self) -> &[DVector<f64>] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn first(&self) -> &DVector<f64> {
        &self.nodes[0]
    }

    pub fn last(&self) -> &DVector<f64> {
        &self.nodes[self.nodes.len() - 1]
    }

    /// Resample `nodes[from..=to]` uniformly by arclength, keeping both ends.
    fn resample_range(&mut self, from: usize, to: usize) {
        if to <= from + 1 {
            return;
        }
        let piece = &self.nodes[from..=to];
        let mut cum = vec![0.0];
        for w in piece.windows(2) {
            let l = cum.last().unwrap() + (&w[1] - &w[0]).norm();
            cum.push(l);
        }
        let total = *cum.last().unwrap();
        if total == 0.0 {
            return;
        }
        let segments = to - from;
        let mut fresh = Vec::with_capacity(segments - 1);
        let mut seg = 0;
        for q in 1..segments {
            let target = total * q as f64 / segments as f64;
            while seg + 1 < cum.len() - 1 && cum[seg + 1] < target {
                seg += 1;
            }
            let len = cum[seg + 1] - cum[seg];
            let s = if len > 0.0 { (target - cum[seg]) / len } else { 0.0 };
            fresh.push(&piece[seg] * (1.0 - s) + &piece[seg + 1] * s);
        }
        for (q, node) in fresh.into_iter().enumerate() {
            self.nodes[from + 1 + q] = node;
        }
    }

    /// Arclength redistribution on each side of the pinned node.
    fn redistribute_around(&mut self, pinned: usize) {
        let last = self.nodes.len() - 1;
        self.resample_range(0, pinned);
        self.resample_range(pinned, last);
    }
}

/// Mountain-pass point between `x0` and `x1`.
///
/// Fails with [`Error::GeometryViolated`] when the path maximum sits at an
/// endpoint (no barrier separates them). When the budget runs out the
/// climbing node is returned flagged unconverged.
pub fn mountain_pass(
    p: &GridProblem,
    x0: &GridVector,
    x1: &GridVector,
    opts: &SolverOptions,
) -> Result<CriticalPoint> {
    p.shape().check(&x0.shape())?;
    p.shape().check(&x1.shape())?;
    let mut path = Path::straight(x0.values(), x1.values(), opts.path_nodes)?;
    let k_last = path.len() - 1;
    let endpoint_max = p.energy_vec(path.first()).max(p.energy_vec(path.last()));
    let floor = endpoint_max + 1e-12 * (1.0 + endpoint_max.abs());
    let alpha_max = p.operator().alpha_max();
    let lambda = p.lambda();

    let mut handoff = opts.handoff_tol.max(opts.tol);
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut last_climber = None;

    while iterations < opts.max_iter {
        let values: Vec<f64> = path.nodes.iter().map(|x| p.energy_vec(x)).collect();
        let k = (1..k_last)
            .reduce(|best, i| if values[i] > values[best] { i } else { best })
            .expect("at least one interior node");
        if values[k] <= floor {
            return Err(Error::GeometryViolated(format!(
                "path maximum {:.6e} does not exceed the endpoint level {:.6e}",
                values[k], endpoint_max
            )));
        }
        let xk = path.nodes[k].clone();
        let gk = p.gradient_vec(&xk);
        let gn = gk.norm();
        let scale = 1.0 + xk.norm();
        last_climber = Some(xk.clone());
        if opts.record_traces {
            trace.push(TraceRow {
                iteration: iterations,
                value: values[k],
                residual: gn,
                norm: xk.norm(),
            });
        }

        if gn <= opts.tol * scale {
            return CriticalPoint::build(p, xk, PointKind::MountainPass, true, iterations, trace);
        }
        if gn <= handoff * scale {
            if opts.newton_polish {
                let out = newton_polish(p, &xk, opts.tol, 50)?;
                let accept = out.converged
                    && p.energy_vec(&out.x) >= endpoint_max - 1e-10 * (1.0 + endpoint_max.abs())
                    && (&out.x - &xk).norm() <= 0.1 * scale;
                if accept {
                    return CriticalPoint::build(
                        p,
                        out.x,
                        PointKind::MountainPass,
                        true,
                        iterations + out.iterations,
                        trace,
                    );
                }
            }
            handoff = (handoff * 0.1).max(opts.tol);
        }

        // relax every interior node; the climbing node reflects its tangential part
        let mut moved = Vec::with_capacity(k_last - 1);
        for i in 1..k_last {
            let x = &path.nodes[i];
            // nodes below the endpoint level stay put
            if i != k && values[i] <= floor {
                moved.push(x.clone());
                continue;
            }
            let g = if i == k { gk.clone() } else { p.gradient_vec(x) };
            let tangent = &path.nodes[i + 1] - &path.nodes[i - 1];
            let tn = tangent.norm();
            let along = if tn > 0.0 { g.dot(&tangent) / tn } else { 0.0 };
            let mut dir = -g;
            if tn > 0.0 {
                let factor = if i == k { 2.0 } else { 1.0 };
                dir.axpy(factor * along / tn, &tangent, 1.0);
            }
            let curv = p.curvature_vec(x)?;
            let lip = alpha_max + lambda * curv.amax();
            moved.push(x + dir * (opts.damping / lip));
        }
        for (i, x) in moved.into_iter().enumerate() {
            path.nodes[i + 1] = x;
        }
        path.redistribute_around(k);
        iterations += 1;
    }

    let x = last_climber.unwrap_or_else(|| path.nodes[1].clone());
    CriticalPoint::build(p, x, PointKind::MountainPass, false, iterations, trace)
}
