use serde::{Deserialize, Serialize};

use super::{
    ball_minimize, global_maximize, mountain_geometry_check, mountain_pass, CriticalPoint,
    MountainGeometryReport, SolverOptions,
};
use crate::dc::{beta_sup, certify, BetaBudget, LambdaStarResult, StructureConstants};
use crate::error::{Error, Result};
use crate::grid::{ground_state, GridVector};
use crate::problem::GridProblem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageFailureKind {
    GeometryViolated,
    NotConverged,
    NotAntiCoercive,
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: String,
    pub kind: StageFailureKind,
    pub message: String,
}

impl StageFailure {
    fn from_error(stage: &str, err: &Error) -> Self {
        let kind = match err {
            Error::GeometryViolated(_) => StageFailureKind::GeometryViolated,
            Error::NotConverged { .. } => StageFailureKind::NotConverged,
            Error::NotAntiCoercive(_) => StageFailureKind::NotAntiCoercive,
            _ => StageFailureKind::Invalid,
        };
        Self {
            stage: stage.into(),
            kind,
            message: err.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub lambda: f64,
    pub constants: StructureConstants,
    pub lambda_star: Option<LambdaStarResult>,
    pub rho1: Option<f64>,
    /// `ρ₁ > |u|₂`.
    pub rho1_exceeds_minimizer: Option<bool>,
    /// `ρ₁ ≥ ρ`.
    pub rho1_at_least_rho: Option<bool>,
    pub ball_min: Option<CriticalPoint>,
    pub mountain_pass: Option<CriticalPoint>,
    pub global_max: Option<CriticalPoint>,
    /// Far endpoint of the mountain-pass path.
    pub far_point: Option<GridVector>,
    pub geometry: Option<MountainGeometryReport>,
    /// Pairwise distances between the found points, in the order ball_min,
    /// mountain_pass, global_max (missing stages skipped).
    pub distances: Vec<Vec<f64>>,
    pub distinct_count: usize,
    pub notes: Vec<String>,
    pub stage_failures: Vec<StageFailure>,
}

impl SolveReport {
    pub fn points(&self) -> Vec<&CriticalPoint> {
        [&self.ball_min, &self.mountain_pass, &self.global_max]
            .into_iter()
            .flatten()
            .collect()
    }

    pub fn geometry_violated(&self) -> bool {
        self.stage_failures
            .iter()
            .any(|f| f.kind == StageFailureKind::GeometryViolated)
    }

    /// Every found point converged and no stage stopped on its budget.
    pub fn all_converged(&self) -> bool {
        self.points().iter().all(|c| c.converged)
            && !self
                .stage_failures
                .iter()
                .any(|f| f.kind == StageFailureKind::NotConverged)
    }
}

/// Far endpoint `t·φ₁`, `t = 2^k·ρ₁`, with `J(t·φ₁) < J(u)`.
fn far_endpoint(p: &GridProblem, rho1: f64, level: f64) -> Option<GridVector> {
    let phi = ground_state(p.shape());
    (1..=60)
        .map(|k| &phi * (rho1 * 2f64.powi(k)))
        .find(|x| p.energy_vec(x) < level)
        .map(|x| p.wrap(x))
}

/// Ball minimizer, certificate, mountain geometry, mountain-pass point and
/// global maximizer, in that order. Stage errors are recorded and later
/// stages still run when they have their inputs.
pub fn three_point_pipeline(
    p: &GridProblem,
    constants: &StructureConstants,
    opts: &SolverOptions,
) -> Result<SolveReport> {
    constants.validate()?;
    let rho = constants.rho;
    let mut report = SolveReport {
        lambda: p.lambda(),
        constants: *constants,
        lambda_star: None,
        rho1: None,
        rho1_exceeds_minimizer: None,
        rho1_at_least_rho: None,
        ball_min: None,
        mountain_pass: None,
        global_max: None,
        far_point: None,
        geometry: None,
        distances: Vec::new(),
        distinct_count: 0,
        notes: Vec::new(),
        stage_failures: Vec::new(),
    };

    let budget = BetaBudget {
        seed: opts.seed,
        ..BetaBudget::default()
    };
    match beta_sup(p.shape(), p.nonlinearity(), constants, &budget) {
        Ok(ls) => {
            if p.lambda() > ls.lambda_star {
                report.notes.push(format!(
                    "lambda = {} exceeds lambda* = {}; the ball minimizer may sit on the sphere",
                    p.lambda(),
                    ls.lambda_star
                ));
            }
            report.lambda_star = Some(ls);
        }
        Err(e) => report.stage_failures.push(StageFailure::from_error("lambda_star", &e)),
    }

    let mut u = match ball_minimize(p, rho, opts) {
        Ok(u) => u,
        Err(e) => {
            report.stage_failures.push(StageFailure::from_error("ball_min", &e));
            return Ok(report);
        }
    };
    match certify(p, &u.point, &opts.certify, Some(rho)) {
        Ok(c) => u.certificate = Some(c),
        Err(e) => report.stage_failures.push(StageFailure::from_error("certify", &e)),
    }
    let u_norm = u.point.norm();
    let j_u = u.value;
    let x0 = u.point.clone();
    report.ball_min = Some(u);

    let rho1 = opts.rho1.unwrap_or_else(|| rho.max(2.0 * u_norm));
    report.rho1 = Some(rho1);
    report.rho1_exceeds_minimizer = Some(rho1 > u_norm);
    report.rho1_at_least_rho = Some(rho1 >= rho);

    match far_endpoint(p, rho1, j_u) {
        Some(x1) => {
            match mountain_geometry_check(p, rho1, &x0, &x1, opts.geometry_samples, opts.seed) {
                Ok(g) => {
                    if !g.verdict && !g.degenerate {
                        report.stage_failures.push(StageFailure {
                            stage: "geometry".into(),
                            kind: StageFailureKind::GeometryViolated,
                            message: format!(
                                "sampled sphere infimum does not exceed the endpoint level (margin {:e})",
                                g.margin.unwrap_or(f64::NAN)
                            ),
                        });
                    }
                    report.geometry = Some(g);
                }
                Err(e) => report.stage_failures.push(StageFailure::from_error("geometry", &e)),
            }
            match mountain_pass(p, &x0, &x1, opts) {
                Ok(mut z) => {
                    if !z.converged {
                        report.notes.push("mountain-pass iteration hit its budget".into());
                    }
                    match certify(p, &z.point, &opts.certify, None) {
                        Ok(c) => z.certificate = Some(c),
                        Err(e) => report.stage_failures.push(StageFailure::from_error("certify", &e)),
                    }
                    report.mountain_pass = Some(z);
                }
                Err(e) => report.stage_failures.push(StageFailure::from_error("mountain_pass", &e)),
            }
            report.far_point = Some(x1);
        }
        None => report.stage_failures.push(StageFailure {
            stage: "geometry".into(),
            kind: StageFailureKind::GeometryViolated,
            message: "no point below J(u) found along the ground-state ray".into(),
        }),
    }

    match global_maximize(p, opts) {
        Ok(mut w) => {
            if !w.converged {
                report.notes.push("global ascent hit its budget".into());
            }
            match certify(p, &w.point, &opts.certify, None) {
                Ok(c) => w.certificate = Some(c),
                Err(e) => report.stage_failures.push(StageFailure::from_error("certify", &e)),
            }
            report.global_max = Some(w);
        }
        Err(e) => report.stage_failures.push(StageFailure::from_error("global_max", &e)),
    }

    summarize(&mut report);
    Ok(report)
}

fn summarize(report: &mut SolveReport) {
    let named: Vec<(&str, &CriticalPoint)> = [
        ("ball_min", &report.ball_min),
        ("mountain_pass", &report.mountain_pass),
        ("global_max", &report.global_max),
    ]
    .into_iter()
    .filter_map(|(name, c)| c.as_ref().map(|c| (name, c)))
    .collect();

    let max_norm = named.iter().map(|(_, c)| c.point.norm()).fold(0.0, f64::max);
    let threshold = 1e-4 * (1.0 + max_norm);
    let distances: Vec<Vec<f64>> = named
        .iter()
        .map(|(_, a)| {
            named
                .iter()
                .map(|(_, b)| (a.point.values() - b.point.values()).norm())
                .collect()
        })
        .collect();

    let mut representatives: Vec<usize> = Vec::new();
    let mut notes = Vec::new();
    for i in 0..named.len() {
        match representatives.iter().find(|&&r| distances[r][i] <= threshold) {
            Some(&r) => {
                let mut note = format!(
                    "{} coincides with {} (distance {:e} ≤ {:e})",
                    named[i].0, named[r].0, distances[r][i], threshold
                );
                if named[i].0 == "global_max" && named[r].0 == "mountain_pass" {
                    note.push_str(
                        "; when the minimax level is also the global maximum, that level holds \
                         a continuum of critical points rather than a third isolated one",
                    );
                }
                notes.push(note);
            }
            None => representatives.push(i),
        }
    }
    report.distinct_count = representatives.len();
    report.distances = distances;
    report.notes.extend(notes);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::Nonlinearity;

    fn constants(p: &GridProblem, rho: f64) -> StructureConstants {
        StructureConstants::discrete(p.operator(), rho).unwrap()
    }

    #[test]
    fn scalar_quartic_three_points() {
        let p = GridProblem::on_grid(1, 1, Nonlinearity::power(1.0, 4.0, 0.0), 0.5).unwrap();
        let r = three_point_pipeline(&p, &constants(&p, 1.0), &SolverOptions::default()).unwrap();
        let values: Vec<f64> = r.points().iter().map(|c| c.value).collect();
        assert_eq!(values.len(), 3);
        assert!(values[0].abs() < 1e-14 && (values[1] - 2.0).abs() < 1e-12 && (values[2] - 2.0).abs() < 1e-12);
        let z = r.mountain_pass.as_ref().unwrap().point.values()[0];
        let w = r.global_max.as_ref().unwrap().point.values()[0];
        if z * w < 0.0 {
            assert_eq!(r.distinct_count, 3);
        } else {
            assert_eq!(r.distinct_count, 2);
            assert!(r.notes.iter().any(|n| n.contains("coincides")));
        }
        assert!(r.stage_failures.is_empty());
    }

    #[test]
    fn zero_nonlinearity_reports_one_point() {
        let p = GridProblem::on_grid(2, 2, Nonlinearity::zero(), 1.0).unwrap();
        let r = three_point_pipeline(&p, &constants(&p, 1.0), &SolverOptions::default()).unwrap();
        assert_eq!(r.distinct_count, 1);
        assert!(r.geometry_violated());
        let cert = r.ball_min.as_ref().unwrap().certificate.as_ref().unwrap();
        assert_eq!(cert.verdict, crate::dc::Verdict::Certified);
    }
}
