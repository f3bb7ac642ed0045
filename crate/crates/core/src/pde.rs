//! Finite-difference realisation of `−Δu = λf(x, y, u)` on `(0,a)×(0,b)` with
//! zero Dirichlet data: mesh width `h`, operator `A/h²`, nonlinearity sampled
//! at the nodes `(ih, jh)`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dc::StructureConstants;
use crate::error::{Error, Result};
use crate::grid::{GridShape, OperatorA};
use crate::nonlinearity::{Family, Nonlinearity};
use crate::problem::GridProblem;
use crate::solvers::{newton_polish, three_point_pipeline, CriticalPoint, SolveReport, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RectDomain {
    pub width: f64,
    pub height: f64,
    pub h: f64,
}

fn cells(len: f64, h: f64) -> Result<usize> {
    let q = len / h;
    let r = q.round();
    if !(q.is_finite() && r >= 1.0 && (q - r).abs() <= 1e-9 * q.max(1.0)) {
        return Err(Error::InvalidInput(format!(
            "side {len} is not an integer multiple of h = {h}"
        )));
    }
    Ok(r as usize)
}

impl RectDomain {
    pub fn new(width: f64, height: f64, h: f64) -> Result<Self> {
        if !(width > 0.0 && height > 0.0 && h > 0.0) || !(width * height * h).is_finite() {
            return Err(Error::InvalidInput(format!(
                "domain needs positive sides and mesh width (got {width} x {height}, h = {h})"
            )));
        }
        let dom = Self { width, height, h };
        let (cx, cy) = (cells(width, h)?, cells(height, h)?);
        if cx < 2 || cy < 2 {
            return Err(Error::MeshTooCoarse(format!(
                "h = {h} leaves no interior nodes on {width} x {height}"
            )));
        }
        Ok(dom)
    }

    pub fn unit_square(h: f64) -> Result<Self> {
        Self::new(1.0, 1.0, h)
    }

    pub fn with_h(&self, h: f64) -> Result<Self> {
        Self::new(self.width, self.height, h)
    }

    /// Interior grid `(a/h − 1) × (b/h − 1)`.
    pub fn interior(&self) -> GridShape {
        let m = (self.width / self.h).round() as usize - 1;
        let n = (self.height / self.h).round() as usize - 1;
        GridShape { m, n }
    }

    /// Physical coordinates of interior node `(i, j)`, 1-based.
    pub fn node(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.h, j as f64 * self.h)
    }

    /// `(x, y, u)` rows in canonical order.
    pub fn snapshot_rows(&self, values: &DVector<f64>) -> Vec<(f64, f64, f64)> {
        let shape = self.interior();
        (0..shape.dim())
            .map(|k| {
                let (i, j) = shape.site(k);
                let (x, y) = self.node(i, j);
                (x, y, values[k])
            })
            .collect()
    }
}

/// Grid problem with operator scale `1/h²` and `f(x_i, y_j, ·)` per node. A
/// table whose entries all agree collapses to a uniform nonlinearity.
pub fn discretize<F>(dom: &RectDomain, family_at: F, lambda: f64) -> Result<GridProblem>
where
    F: Fn(f64, f64) -> Family,
{
    let shape = dom.interior();
    let table: Vec<Family> = (0..shape.dim())
        .map(|k| {
            let (i, j) = shape.site(k);
            let (x, y) = dom.node(i, j);
            family_at(x, y)
        })
        .collect();
    let nl = if table.windows(2).all(|w| w[0] == w[1]) {
        Nonlinearity::Uniform(table.into_iter().next().expect("nonempty interior"))
    } else {
        Nonlinearity::SiteDependent(table)
    };
    let op = OperatorA::new(shape, 1.0 / (dom.h * dom.h))?;
    GridProblem::new(op, nl, lambda)
}

/// `α₁/h²` on the domain at mesh width `h`.
fn scaled_alpha1(dom: &RectDomain) -> f64 {
    let shape = dom.interior();
    let cx = crate::grid::cos_pi_ratio(1, shape.m + 1);
    let cy = crate::grid::cos_pi_ratio(1, shape.n + 1);
    (4.0 - 2.0 * cx - 2.0 * cy) / (dom.h * dom.h)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoincareEstimate {
    /// `1/√λ₁`.
    pub c: f64,
    pub lambda1: f64,
    pub ladder: Vec<f64>,
    /// `α₁/h²` per level.
    pub levels: Vec<f64>,
    pub extrapolated: bool,
    /// `α₁/h²` increases as `h` decreases.
    pub monotone: bool,
}

/// Poincaré constant from `λ₁ ≈ α₁/h²`, Richardson-extrapolated (order 2) on the
/// two finest levels.
pub fn poincare_estimate(width: f64, height: f64, ladder: &[f64]) -> Result<PoincareEstimate> {
    if ladder.is_empty() {
        return Err(Error::InvalidInput("empty mesh ladder".into()));
    }
    let mut sorted = ladder.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let levels = sorted
        .iter()
        .map(|&h| RectDomain::new(width, height, h).map(|d| scaled_alpha1(&d)))
        .collect::<Result<Vec<f64>>>()?;
    let monotone = levels.windows(2).all(|w| w[1] > w[0]);
    let (lambda1, extrapolated) = if levels.len() >= 2 {
        let k = levels.len() - 1;
        let r2 = (sorted[k - 1] / sorted[k]).powi(2);
        ((r2 * levels[k] - levels[k - 1]) / (r2 - 1.0), true)
    } else {
        (levels[0], false)
    };
    Ok(PoincareEstimate {
        c: 1.0 / lambda1.sqrt(),
        lambda1,
        ladder: sorted,
        levels,
        extrapolated,
        monotone,
    })
}

/// `α = 2`, `γ = 1`, `c` the Poincaré constant.
pub fn pde_constants(c: f64, rho: f64) -> Result<StructureConstants> {
    StructureConstants::new(2.0, 1.0, c, rho)
}

/// Bilinear interpolation of interior values on `from` onto the nodes of `to`,
/// reading the boundary as zero.
pub fn interpolate(from: &RectDomain, values: &DVector<f64>, to: &RectDomain) -> DVector<f64> {
    let src = from.interior();
    let dst = to.interior();
    let at = |i: isize, j: isize| -> f64 {
        if i < 1 || j < 1 || i > src.m as isize || j > src.n as isize {
            0.0
        } else {
            values[src.index(i as usize, j as usize)]
        }
    };
    DVector::from_fn(dst.dim(), |k, _| {
        let (i, j) = dst.site(k);
        let (x, y) = to.node(i, j);
        let (sx, sy) = (x / from.h, y / from.h);
        let (ix, iy) = (sx.floor(), sy.floor());
        let (fx, fy) = (sx - ix, sy - iy);
        let (ix, iy) = (ix as isize, iy as isize);
        (1.0 - fx) * (1.0 - fy) * at(ix, iy)
            + fx * (1.0 - fy) * at(ix + 1, iy)
            + (1.0 - fx) * fy * at(ix, iy + 1)
            + fx * fy * at(ix + 1, iy + 1)
    })
}

/// Values of a fine-level vector at the coarse nodes (fine spacing divides the coarse one).
fn inject(fine: &RectDomain, values: &DVector<f64>, coarse: &RectDomain) -> Vec<f64> {
    let f = fine.interior();
    let c = coarse.interior();
    let ratio = (coarse.h / fine.h).round() as usize;
    (0..c.dim())
        .map(|k| {
            let (i, j) = c.site(k);
            values[f.index(i * ratio, j * ratio)]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchLevel {
    pub h: f64,
    /// `h²·J_h`, comparable across levels.
    pub energy: f64,
    pub residual: f64,
    pub converged: bool,
    /// Values at the coarsest grid's nodes.
    pub snapshot: Vec<f64>,
    /// Full solution at this level.
    #[serde(skip)]
    pub solution: Option<DVector<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub name: String,
    pub levels: Vec<BranchLevel>,
    /// Discrete L² (coarse `h`) distance of successive snapshots.
    pub differences: Vec<f64>,
    /// `differences[k] / differences[k+1]`; `None` when the denominator vanishes.
    pub ratios: Vec<Option<f64>>,
    pub order: Option<f64>,
    pub energy_differences: Vec<f64>,
    /// Mesh width at which continuation failed.
    pub lost_at: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementReport {
    pub width: f64,
    pub height: f64,
    pub lambda: f64,
    pub ladder: Vec<f64>,
    pub poincare: PoincareEstimate,
    pub constants: StructureConstants,
    pub coarse: SolveReport,
    pub branches: Vec<Branch>,
}

/// Three-point pipeline on the coarsest mesh, then each found branch is
/// continued to the finer meshes by bilinear warm start plus Newton.
#[allow(clippy::too_many_arguments)]
pub fn refinement_study<F>(
    width: f64,
    height: f64,
    family_at: F,
    lambda: f64,
    ladder: &[f64],
    rho: f64,
    opts: &SolverOptions,
) -> Result<RefinementReport>
where
    F: Fn(f64, f64) -> Family + Copy,
{
    if ladder.is_empty() {
        return Err(Error::InvalidInput("empty mesh ladder".into()));
    }
    for w in ladder.windows(2) {
        if ((w[0] / w[1]) - 2.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "mesh ladder must halve at every level (got {} then {})",
                w[0], w[1]
            )));
        }
    }
    let doms = ladder
        .iter()
        .map(|&h| RectDomain::new(width, height, h))
        .collect::<Result<Vec<_>>>()?;
    let poincare = poincare_estimate(width, height, ladder)?;
    let constants = pde_constants(poincare.c, rho)?;

    let coarse_dom = doms[0];
    let p0 = discretize(&coarse_dom, family_at, lambda)?;
    let coarse = three_point_pipeline(&p0, &StructureConstants::discrete(p0.operator(), rho)?, opts)?;

    let seeds: Vec<(&str, &CriticalPoint)> = [
        ("ball_min", &coarse.ball_min),
        ("mountain_pass", &coarse.mountain_pass),
        ("global_max", &coarse.global_max),
    ]
    .into_iter()
    .filter_map(|(n, c)| c.as_ref().map(|c| (n, c)))
    .collect();

    let finer: Vec<GridProblem> = doms[1..]
        .iter()
        .map(|d| discretize(d, family_at, lambda))
        .collect::<Result<_>>()?;

    let mut branches = Vec::new();
    for (name, cp) in seeds {
        let h0 = coarse_dom.h;
        let mut levels = vec![BranchLevel {
            h: h0,
            energy: h0 * h0 * cp.value,
            residual: cp.residual,
            converged: cp.converged,
            snapshot: cp.point.values().iter().copied().collect(),
            solution: Some(cp.point.values().clone()),
        }];
        let mut lost_at = None;
        for (l, p) in finer.iter().enumerate() {
            let (prev_dom, dom) = (&doms[l], &doms[l + 1]);
            let prev = levels.last().and_then(|lv| lv.solution.clone()).expect("tracked level");
            let start = interpolate(prev_dom, &prev, dom);
            let out = newton_polish(p, &start, opts.tol, 50)?;
            let drift = (&out.x - &start).norm();
            if !out.converged || drift > 0.5 * (1.0 + start.norm()) {
                lost_at = Some(dom.h);
                break;
            }
            levels.push(BranchLevel {
                h: dom.h,
                energy: dom.h * dom.h * p.energy_vec(&out.x),
                residual: out.residual,
                converged: true,
                snapshot: inject(dom, &out.x, &coarse_dom),
                solution: Some(out.x),
            });
        }
        let differences: Vec<f64> = levels
            .windows(2)
            .map(|w| {
                let s: f64 = w[0].snapshot.iter().zip(&w[1].snapshot).map(|(a, b)| (a - b).powi(2)).sum();
                coarse_dom.h * s.sqrt()
            })
            .collect();
        let ratios: Vec<Option<f64>> = differences
            .windows(2)
            .map(|w| (w[1] > 0.0).then(|| w[0] / w[1]))
            .collect();
        let order = ratios.last().copied().flatten().filter(|r| *r > 0.0).map(f64::log2);
        let energy_differences = levels.windows(2).map(|w| (w[1].energy - w[0].energy).abs()).collect();
        branches.push(Branch {
            name: name.into(),
            levels,
            differences,
            ratios,
            order,
            energy_differences,
            lost_at,
        });
    }

    Ok(RefinementReport {
        width,
        height,
        lambda,
        ladder: ladder.to_vec(),
        poincare,
        constants,
        coarse,
        branches,
    })
}
