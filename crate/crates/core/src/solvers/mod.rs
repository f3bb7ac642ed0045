//! Solvers for the three critical points: ball minimizer, mountain-pass point
//! and global maximizer, plus the sampled mountain-geometry check.

mod ball;
mod geometry;
mod maximize;
mod mountain;
mod newton;
mod pipeline;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dc::{lex_less, CertificateReport, CertifyTolerances};
use crate::grid::GridVector;
use crate::linalg::extreme_eigenvalues;
use crate::problem::GridProblem;

pub use ball::{ball_minimize, ball_minimize_from, convex_subproblem};
pub use geometry::{mountain_geometry_check, MountainGeometryReport};
pub use maximize::{anti_coercivity_check, global_maximize, global_maximize_from};
pub use mountain::{mountain_pass, Path};
pub use newton::{newton_polish, NewtonOutcome};
pub use pipeline::{three_point_pipeline, StageFailure, StageFailureKind, SolveReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Residual tolerance, relative to `1 + |x|₂`.
    pub tol: f64,
    pub max_iter: usize,
    /// Random starts in addition to the deterministic ones.
    pub starts: usize,
    pub seed: u64,
    pub path_nodes: usize,
    /// Fraction of the stable explicit step used by the path relaxation.
    pub damping: f64,
    /// Relative gradient level at which path and ascent iterates are handed to Newton.
    pub handoff_tol: f64,
    pub geometry_samples: usize,
    /// Test sphere radius; `None` means `max(ρ, 2|u|)`.
    pub rho1: Option<f64>,
    pub certify: CertifyTolerances,
    pub newton_polish: bool,
    pub record_traces: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 20_000,
            starts: 8,
            seed: 0,
            path_nodes: 41,
            damping: 0.5,
            handoff_tol: 1e-3,
            geometry_samples: 256,
            rho1: None,
            certify: CertifyTolerances::default(),
            newton_polish: true,
            record_traces: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointKind {
    BallMin,
    MountainPass,
    GlobalMax,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    LocalMin,
    Saddle,
    LocalMax,
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub value: f64,
    pub residual: f64,
    /// `|x|₂` of the iterate.
    pub norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub point: GridVector,
    /// `J(point)`.
    pub value: f64,
    /// `J(point) − J(0)`.
    pub value_shifted: f64,
    /// `|∇J(point)|₂`.
    pub residual: f64,
    pub kind: PointKind,
    pub classification: Classification,
    pub hessian_min: f64,
    pub hessian_max: f64,
    /// For a ball minimizer on the sphere this is KKT convergence: `−∇J` is
    /// parallel to the outward normal and the residual need not vanish.
    pub converged: bool,
    pub iterations: usize,
    pub certificate: Option<CertificateReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TraceRow>,
}

impl CriticalPoint {
    pub(crate) fn build(
        p: &GridProblem,
        x: DVector<f64>,
        kind: PointKind,
        converged: bool,
        iterations: usize,
        trace: Vec<TraceRow>,
    ) -> crate::Result<Self> {
        let (classification, hessian_min, hessian_max) = classify(p, &x)?;
        let value = p.energy_vec(&x);
        Ok(Self {
            residual: p.residual_vec(&x),
            value,
            value_shifted: value - p.energy_at_zero(),
            point: p.wrap(x),
            kind,
            classification,
            hessian_min,
            hessian_max,
            converged,
            iterations,
            certificate: None,
            trace,
        })
    }

    /// Whether the stored residual meets `tol·(1 + |x|₂)`.
    pub fn meets(&self, tol: f64) -> bool {
        self.residual <= tol * (1.0 + self.point.norm())
    }
}

/// Dense Hessian spectrum below this dimension, Lanczos above.
const DENSE_SPECTRUM_LIMIT: usize = 256;

/// Classify by the extreme Hessian eigenvalues at relative tolerance `1e-8`.
pub fn classify(p: &GridProblem, x: &DVector<f64>) -> crate::Result<(Classification, f64, f64)> {
    let curv = p.curvature_vec(x)?;
    let lambda = p.lambda();
    let op = p.operator();
    let (lo, hi) = extreme_eigenvalues(
        |w| {
            let mut out = op.apply_vec(w);
            for k in 0..w.len() {
                out[k] -= lambda * curv[k] * w[k];
            }
            out
        },
        x.len(),
        DENSE_SPECTRUM_LIMIT,
    );
    Ok((classification_from(lo, hi), lo, hi))
}

pub(crate) fn classification_from(lo: f64, hi: f64) -> Classification {
    let tol = 1e-8 * lo.abs().max(hi.abs()).max(1.0);
    if lo > tol {
        Classification::LocalMin
    } else if hi < -tol {
        Classification::LocalMax
    } else if lo < -tol && hi > tol {
        Classification::Saddle
    } else {
        Classification::Degenerate
    }
}

fn ties(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()))
}

/// Lower value wins; near-ties go to the lexicographically smaller vector.
pub(crate) fn better_min(a: (f64, &DVector<f64>), b: (f64, &DVector<f64>)) -> bool {
    if ties(a.0, b.0) {
        lex_less(a.1, b.1)
    } else {
        a.0 < b.0
    }
}

/// Higher value wins; near-ties go to the lexicographically smaller vector.
pub(crate) fn better_max(a: (f64, &DVector<f64>), b: (f64, &DVector<f64>)) -> bool {
    if ties(a.0, b.0) {
        lex_less(a.1, b.1)
    } else {
        a.0 > b.0
    }
}
