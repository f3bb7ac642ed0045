//! Critical points of difference-of-convex energies `J(u) = Φ(u) − λH(u)` on
//! closed balls, instantiated on the five-point Dirichlet system `Au = λf(u)`.
//!
//! The crate is organised bottom-up:
//!
//! * [`grid`] and [`nonlinearity`] assemble the discrete operator and the
//!   site-wise nonlinearity, [`problem`] combines them into the energy.
//! * [`dc`] holds the structure constants, the `β`/`λ*` threshold and the
//!   convexity certificate for ball minimizers.
//! * [`solvers`] finds the ball minimizer, the mountain-pass point and the
//!   global maximizer, and checks the mountain geometry.
//! * [`hypotheses`] gives sampled verdicts on the growth/convexity hypotheses.
//! * [`pde`] realises the continuous problem on rectangles with mesh width `h`.

pub mod dc;
pub mod error;
pub mod grid;
pub mod hypotheses;
pub mod linalg;
pub mod nonlinearity;
pub mod pde;
pub mod problem;
pub mod seeds;
pub mod solvers;

pub use dc::{
    beta_sup, certify, h3_check, lambda_star, BetaMethod, CertificateReport, CertifyTolerances,
    H3Report, LambdaStarResult, StructureConstants, Verdict,
};
pub use error::{Error, Result};
pub use grid::{eigen_analytic, GridShape, GridVector, OperatorA, DEFAULT_DENSE_CAP};
pub use nonlinearity::{Family, Nonlinearity};
pub use problem::GridProblem;
pub use solvers::{
    ball_minimize, convex_subproblem, global_maximize, mountain_geometry_check, mountain_pass,
    three_point_pipeline, Classification, CriticalPoint, MountainGeometryReport, PointKind,
    SolveReport, SolverOptions,
};
