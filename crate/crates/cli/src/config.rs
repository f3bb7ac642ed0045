//! TOML run configuration.

use std::path::{Path, PathBuf};

use ballcrit::hypotheses::HypothesisParams;
use ballcrit::{CertifyTolerances, Family, SolverOptions};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSection,
    pub ball: BallSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub certify: CertifySection,
    #[serde(default)]
    pub hypotheses: HypothesesSection,
    #[serde(default)]
    pub refine: RefineSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub m: Option<usize>,
    pub n: Option<usize>,
    /// Continuous rectangle `(0, width) × (0, height)`; used with `h`.
    pub domain: Option<Domain>,
    pub h: Option<f64>,
    pub nonlinearity: Family,
    /// Fixed λ.
    pub lambda: Option<f64>,
    pub lambda_sweep: Option<Sweep>,
    /// `λ = fraction · λ*`. This is the mode used when no λ key is given,
    /// with fraction 1.
    pub lambda_fraction: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub from: f64,
    pub to: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallSection {
    pub rho: f64,
    /// Test sphere radius for the mountain geometry; default `max(ρ, 2|u|)`.
    pub rho1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub tol: f64,
    pub max_iter: usize,
    pub starts: usize,
    pub path_nodes: usize,
    pub damping: f64,
    pub handoff_tol: f64,
    pub geometry_samples: usize,
    pub newton_polish: bool,
    pub seed: u64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverOptions::default();
        Self {
            tol: d.tol,
            max_iter: d.max_iter,
            starts: d.starts,
            path_nodes: d.path_nodes,
            damping: d.damping,
            handoff_tol: d.handoff_tol,
            geometry_samples: d.geometry_samples,
            newton_polish: d.newton_polish,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CertifySection {
    pub tol_energy: f64,
    pub tol_linear: f64,
    pub max_iter: usize,
    /// Candidate vector for the `certify` command.
    pub vector: Option<PathBuf>,
}

impl Default for CertifySection {
    fn default() -> Self {
        let d = CertifyTolerances::default();
        Self {
            tol_energy: d.tol_energy,
            tol_linear: d.tol_linear,
            max_iter: d.max_iter,
            vector: None,
        }
    }
}

/// Constants for the hypothesis checks; unset values fall back to the
/// checker defaults with the sampling range `10ρ`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HypothesesSection {
    pub mu: Option<f64>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub d: Option<f64>,
    pub theta: Option<f64>,
    pub beta1: Option<f64>,
    pub eta: Option<f64>,
    pub beta2: Option<f64>,
    pub x_max: Option<f64>,
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineSection {
    /// Mesh widths, coarsest first, halving at each level.
    pub ladder: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// JSON run report.
    pub report: Option<PathBuf>,
    /// CSV of solver iterations.
    pub trace: Option<PathBuf>,
    /// Directory for solution CSVs.
    pub csv_dir: Option<PathBuf>,
}

/// How λ is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaMode {
    Fixed(f64),
    Sweep(Sweep),
    Fraction(f64),
}

impl LambdaMode {
    /// The λ values for a known `λ*` (ignored unless the mode is a fraction).
    pub fn values(&self, lambda_star: f64) -> Vec<f64> {
        match *self {
            LambdaMode::Fixed(l) => vec![l],
            LambdaMode::Fraction(f) => vec![f * lambda_star],
            LambdaMode::Sweep(s) if s.steps == 1 => vec![s.from],
            LambdaMode::Sweep(s) => (0..s.steps)
                .map(|k| s.from + (s.to - s.from) * k as f64 / (s.steps - 1) as f64)
                .collect(),
        }
    }

    pub fn needs_lambda_star(&self) -> bool {
        matches!(self, LambdaMode::Fraction(_))
    }
}

/// Grid geometry of the configured problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Geometry {
    Grid { m: usize, n: usize },
    Rect { width: f64, height: f64, h: Option<f64> },
}

fn invalid(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{field}: {msg}"))
}

fn positive(field: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be a positive finite number (got {v})")))
    }
}

fn positive_opt(field: &str, v: Option<f64>) -> Result<(), CliError> {
    v.map_or(Ok(()), |v| positive(field, v))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Malformed(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Checks every invariant; the error names the offending field.
    pub fn validate(&self) -> Result<(), CliError> {
        let p = &self.problem;
        self.geometry()?;
        p.nonlinearity
            .validate()
            .map_err(|e| invalid("problem.nonlinearity", e))?;
        self.lambda_mode()?;
        positive("ball.rho", self.ball.rho)?;
        positive_opt("ball.rho1", self.ball.rho1)?;

        let s = &self.solver;
        positive("solver.tol", s.tol)?;
        positive("solver.damping", s.damping)?;
        positive("solver.handoff_tol", s.handoff_tol)?;
        if s.max_iter == 0 {
            return Err(invalid("solver.max_iter", "must be at least 1"));
        }
        if s.path_nodes < 3 {
            return Err(invalid("solver.path_nodes", format!("need at least 3 nodes (got {})", s.path_nodes)));
        }

        let c = &self.certify;
        positive("certify.tol_energy", c.tol_energy)?;
        positive("certify.tol_linear", c.tol_linear)?;
        if c.max_iter == 0 {
            return Err(invalid("certify.max_iter", "must be at least 1"));
        }

        self.hypothesis_params()
            .validate()
            .map_err(|e| invalid("hypotheses", e))?;

        for (k, &h) in self.refine.ladder.iter().enumerate() {
            positive(&format!("refine.ladder[{k}]"), h)?;
        }
        for (k, w) in self.refine.ladder.windows(2).enumerate() {
            if ((w[0] / w[1]) - 2.0).abs() > 1e-12 {
                return Err(invalid(
                    &format!("refine.ladder[{}]", k + 1),
                    format!("each width must halve the previous one ({} then {})", w[0], w[1]),
                ));
            }
        }
        Ok(())
    }

    pub fn geometry(&self) -> Result<Geometry, CliError> {
        let p = &self.problem;
        match (p.m, p.n, p.domain) {
            (Some(m), Some(n), None) => {
                if m == 0 || n == 0 {
                    let field = if m == 0 { "problem.m" } else { "problem.n" };
                    return Err(invalid(field, "grid dimensions must be at least 1"));
                }
                if p.h.is_some() {
                    return Err(invalid("problem.h", "only valid together with problem.domain"));
                }
                Ok(Geometry::Grid { m, n })
            }
            (None, None, Some(d)) => {
                positive("problem.domain.width", d.width)?;
                positive("problem.domain.height", d.height)?;
                positive_opt("problem.h", p.h)?;
                Ok(Geometry::Rect { width: d.width, height: d.height, h: p.h })
            }
            (None, None, None) => Err(invalid("problem", "give either m and n or domain")),
            (Some(_), None, None) => Err(invalid("problem.n", "missing (m is set)")),
            (None, Some(_), None) => Err(invalid("problem.m", "missing (n is set)")),
            _ => Err(invalid("problem.domain", "cannot be combined with m and n")),
        }
    }

    pub fn lambda_mode(&self) -> Result<LambdaMode, CliError> {
        let p = &self.problem;
        let set = [p.lambda.is_some(), p.lambda_sweep.is_some(), p.lambda_fraction.is_some()];
        if set.iter().filter(|&&b| b).count() > 1 {
            return Err(invalid(
                "problem.lambda",
                "exactly one of lambda, lambda_sweep, lambda_fraction may be set",
            ));
        }
        if let Some(l) = p.lambda {
            positive("problem.lambda", l)?;
            return Ok(LambdaMode::Fixed(l));
        }
        if let Some(s) = p.lambda_sweep {
            positive("problem.lambda_sweep.from", s.from)?;
            positive("problem.lambda_sweep.to", s.to)?;
            if s.steps == 0 {
                return Err(invalid("problem.lambda_sweep.steps", "must be at least 1"));
            }
            if s.to < s.from {
                return Err(invalid("problem.lambda_sweep.to", "must not be below from"));
            }
            return Ok(LambdaMode::Sweep(s));
        }
        let f = p.lambda_fraction.unwrap_or(1.0);
        positive("problem.lambda_fraction", f)?;
        Ok(LambdaMode::Fraction(f))
    }

    pub fn solver_options(&self) -> SolverOptions {
        let s = &self.solver;
        SolverOptions {
            tol: s.tol,
            max_iter: s.max_iter,
            starts: s.starts,
            seed: s.seed,
            path_nodes: s.path_nodes,
            damping: s.damping,
            handoff_tol: s.handoff_tol,
            geometry_samples: s.geometry_samples,
            rho1: self.ball.rho1,
            certify: self.certify_tolerances(),
            newton_polish: s.newton_polish,
            record_traces: self.output.trace.is_some(),
        }
    }

    pub fn certify_tolerances(&self) -> CertifyTolerances {
        CertifyTolerances {
            tol_energy: self.certify.tol_energy,
            tol_linear: self.certify.tol_linear,
            max_iter: self.certify.max_iter,
        }
    }

    pub fn hypothesis_params(&self) -> HypothesisParams {
        let h = &self.hypotheses;
        let d = HypothesisParams::for_radius(self.ball.rho);
        HypothesisParams {
            mu: h.mu.unwrap_or(d.mu),
            c1: h.c1.unwrap_or(d.c1),
            c2: h.c2.unwrap_or(d.c2),
            d: h.d.unwrap_or(d.d),
            theta: h.theta.unwrap_or(d.theta),
            beta1: h.beta1.unwrap_or(d.beta1),
            eta: h.eta.unwrap_or(d.eta),
            beta2: h.beta2.unwrap_or(d.beta2),
            x_max: h.x_max.unwrap_or(d.x_max),
            samples: h.samples.unwrap_or(d.samples),
            seed: self.solver.seed,
            ..d
        }
    }
}
