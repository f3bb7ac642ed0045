//! Command dispatch.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use ballcrit::dc::BetaBudget;
use ballcrit::hypotheses::{CheckVerdict, HypothesisChecker, Outcome};
use ballcrit::pde::{discretize, refinement_study, RectDomain};
use ballcrit::seeds::derive_seed;
use ballcrit::solvers::{SolveReport, StageFailureKind};
use ballcrit::{
    ball_minimize, beta_sup, certify, three_point_pipeline, CriticalPoint, GridProblem, LambdaStarResult,
    Nonlinearity, StructureConstants, Verdict,
};
use rayon::prelude::*;

use crate::config::{Geometry, LambdaMode, RunConfig};
use crate::error::CliError;
use crate::export::{export_snapshot, export_solution, export_traces, read_vector, TraceBlock};
use crate::report::{LambdaResult, RunReport};

pub const COMMANDS: [&str; 8] = [
    "eigen",
    "lambda-star",
    "solve",
    "pipeline",
    "sweep",
    "certify",
    "check-hypotheses",
    "refine",
];

/// Result of a command that ran to the end. `exit_code` may still be nonzero
/// (non-convergence or geometry violation recorded in the report).
#[derive(Debug)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub report: RunReport,
    /// Human-readable summary for stdout.
    pub summary: String,
}

/// Runs `command` on a rayon pool of `jobs` workers (all cores when `None`).
pub fn run_with_jobs(command: &str, config: &RunConfig, jobs: Option<usize>) -> Result<RunOutcome, CliError> {
    match jobs {
        None => run(command, config),
        Some(0) => Err(CliError::Validation("--jobs: must be at least 1".into())),
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| CliError::Io(format!("cannot start worker pool: {e}")))?
            .install(|| run(command, config)),
    }
}

/// Runs one command, writing every configured artifact.
pub fn run(command: &str, config: &RunConfig) -> Result<RunOutcome, CliError> {
    if !COMMANDS.contains(&command) {
        return Err(CliError::UnknownCommand(command.to_string()));
    }
    config.validate()?;
    let start = Instant::now();
    let mut report = RunReport::new(command, config);
    let mut summary = String::new();
    let ctx = Context::new(config)?;
    let code = match command {
        "eigen" => eigen(&ctx, &mut report, &mut summary),
        "lambda-star" => lambda_star_cmd(&ctx, &mut report, &mut summary)?,
        "solve" => solve(&ctx, &mut report, &mut summary)?,
        "pipeline" | "sweep" => pipelines(&ctx, command == "sweep", &mut report, &mut summary)?,
        "certify" => certify_cmd(&ctx, &mut report, &mut summary)?,
        "check-hypotheses" => hypotheses_cmd(&ctx, &mut report, &mut summary)?,
        "refine" => refine(&ctx, &mut report, &mut summary)?,
        _ => unreachable!("command list checked above"),
    };
    report.exit_code = code;
    report.timing.total_seconds = start.elapsed().as_secs_f64();
    if let Some(path) = &config.output.report {
        let text = report.to_json()?;
        std::fs::write(path, text).map_err(|e| CliError::Io(format!("cannot write report {}: {e}", path.display())))?;
    }
    Ok(RunOutcome { exit_code: code, report, summary })
}

struct Context<'a> {
    cfg: &'a RunConfig,
    /// The problem at λ = 1; commands rescale it.
    base: GridProblem,
    domain: Option<RectDomain>,
    constants: StructureConstants,
}

impl<'a> Context<'a> {
    fn new(cfg: &'a RunConfig) -> Result<Self, CliError> {
        let family = cfg.problem.nonlinearity.clone();
        let (base, domain) = match cfg.geometry()? {
            Geometry::Grid { m, n } => (GridProblem::on_grid(m, n, Nonlinearity::uniform(family), 1.0)?, None),
            Geometry::Rect { width, height, h } => {
                let h = h.or(cfg.refine.ladder.first().copied()).ok_or_else(|| {
                    CliError::Validation("problem.h: required with problem.domain (or give refine.ladder)".into())
                })?;
                let dom = RectDomain::new(width, height, h)?;
                (discretize(&dom, |_, _| family.clone(), 1.0)?, Some(dom))
            }
        };
        let constants = StructureConstants::discrete(base.operator(), cfg.ball.rho)?;
        Ok(Self { cfg, base, domain, constants })
    }

    fn seed(&self) -> u64 {
        self.cfg.solver.seed
    }

    fn lambda_star(&self, seed: u64) -> Result<LambdaStarResult, CliError> {
        let budget = BetaBudget { seed, ..BetaBudget::default() };
        Ok(beta_sup(self.base.shape(), self.base.nonlinearity(), &self.constants, &budget)?)
    }

    fn lambdas(&self) -> Result<Vec<f64>, CliError> {
        let mode = self.cfg.lambda_mode()?;
        let star = if mode.needs_lambda_star() {
            self.lambda_star(self.seed())?.lambda_star
        } else {
            f64::NAN
        };
        let values = mode.values(star);
        if values.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(CliError::Validation(format!(
                "problem.lambda_fraction: lambda* = {star} gives no usable lambda"
            )));
        }
        Ok(values)
    }

    fn single_lambda(&self, command: &str) -> Result<f64, CliError> {
        if matches!(self.cfg.lambda_mode()?, LambdaMode::Sweep(_)) {
            return Err(CliError::Validation(format!(
                "problem.lambda_sweep: {command} takes a single lambda; use the sweep command"
            )));
        }
        Ok(self.lambdas()?[0])
    }

    fn hypotheses(&self) -> Result<Vec<CheckVerdict>, CliError> {
        let mut checker = HypothesisChecker::new(self.cfg.hypothesis_params())?;
        Ok(checker.check_all(self.base.nonlinearity()))
    }
}

/// Shortest rendering after rounding to 12 significant digits.
fn display_num(x: f64) -> String {
    let rounded: f64 = format!("{x:.11e}").parse().unwrap_or(x);
    format!("{rounded}")
}

/// Plain decimals for moderate magnitudes, scientific notation otherwise.
fn display_value(x: f64) -> String {
    if x == 0.0 || (1e-4..1e9).contains(&x.abs()) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn eigen(ctx: &Context, report: &mut RunReport, out: &mut String) -> i32 {
    let ev = ctx.base.operator().eigenvalues();
    let line: Vec<String> = ev.iter().map(|&x| display_num(x)).collect();
    writeln!(out, "{}", line.join(" ")).unwrap();
    report.eigenvalues = Some(ev);
    0
}

fn method_name(ls: &LambdaStarResult) -> String {
    serde_json::to_value(ls.method)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_else(|| format!("{:?}", ls.method))
}

fn lambda_star_cmd(ctx: &Context, report: &mut RunReport, out: &mut String) -> Result<i32, CliError> {
    let ls = ctx.lambda_star(ctx.seed())?;
    writeln!(out, "beta = {} ({})", ls.beta, method_name(&ls)).unwrap();
    writeln!(out, "lambda_star = {}", ls.lambda_star).unwrap();
    report.constants = Some(ctx.constants);
    report.lambda_star = Some(ls);
    Ok(0)
}

fn solve(ctx: &Context, report: &mut RunReport, out: &mut String) -> Result<i32, CliError> {
    let lambda = ctx.single_lambda("solve")?;
    let p = ctx.base.with_lambda(lambda)?;
    let opts = ctx.cfg.solver_options();
    let mut u = ball_minimize(&p, ctx.cfg.ball.rho, &opts)?;
    let cert = certify(&p, &u.point, &opts.certify, Some(ctx.cfg.ball.rho))?;
    u.certificate = Some(cert);
    let code = if u.converged { 0 } else { 3 };
    let solve = SolveReport {
        lambda,
        constants: ctx.constants,
        lambda_star: None,
        rho1: None,
        rho1_exceeds_minimizer: None,
        rho1_at_least_rho: None,
        ball_min: Some(u),
        mountain_pass: None,
        global_max: None,
        far_point: None,
        geometry: None,
        distances: vec![vec![0.0]],
        distinct_count: 1,
        notes: Vec::new(),
        stage_failures: Vec::new(),
    };
    writeln!(out, "lambda = {lambda}").unwrap();
    describe(&solve, out);
    report.constants = Some(ctx.constants);
    finish_results(ctx, vec![(0, lambda, ctx.seed(), solve, 0.0)], report)?;
    Ok(code)
}

/// Index, λ, seed, result and seconds of one λ.
type LambdaRun = (usize, f64, u64, SolveReport, f64);

/// Exit code of one pipeline run.
pub fn pipeline_exit_code(r: &SolveReport) -> i32 {
    if r.geometry_violated() {
        4
    } else if !r.all_converged()
        || r.stage_failures.iter().any(|f| f.kind == StageFailureKind::NotAntiCoercive)
    {
        3
    } else {
        0
    }
}

fn pipelines(ctx: &Context, sweep: bool, report: &mut RunReport, out: &mut String) -> Result<i32, CliError> {
    let lambdas = if sweep { ctx.lambdas()? } else { vec![ctx.single_lambda("pipeline")?] };
    let master = ctx.seed();
    let base_opts = ctx.cfg.solver_options();
    let runs: Vec<Result<LambdaRun, CliError>> = lambdas
        .par_iter()
        .enumerate()
        .map(|(k, &lambda)| {
            let seed = if sweep { derive_seed(master, "sweep", k as u64) } else { master };
            let opts = ballcrit::SolverOptions { seed, ..base_opts.clone() };
            let t = Instant::now();
            let p = ctx.base.with_lambda(lambda)?;
            let r = three_point_pipeline(&p, &ctx.constants, &opts)?;
            Ok((k, lambda, seed, r, t.elapsed().as_secs_f64()))
        })
        .collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut code = 0;
    for (k, lambda, _, r, _) in &runs {
        code = code.max(pipeline_exit_code(r));
        writeln!(out, "[{k}] lambda = {lambda}").unwrap();
        describe(r, out);
    }
    report.constants = Some(ctx.constants);
    report.lambda_star = runs.first().and_then(|r| r.3.lambda_star.clone());
    report.hypotheses = ctx.hypotheses()?;
    finish_results(ctx, runs, report)?;
    Ok(code)
}

fn describe(r: &SolveReport, out: &mut String) {
    for c in r.points() {
        let cert = match c.certificate.as_ref().map(|c| c.verdict) {
            Some(Verdict::Certified) => "certified",
            Some(Verdict::Inconclusive) => "inconclusive",
            None => "-",
        };
        writeln!(
            out,
            "  {:<13} J = {:<24} |u| = {:<24} residual = {:<10.3e} {}",
            stage_name(c),
            display_value(c.value),
            display_value(c.point.norm()),
            c.residual,
            cert
        )
        .unwrap();
    }
    writeln!(out, "  distinct critical points: {}", r.distinct_count).unwrap();
    for n in &r.notes {
        writeln!(out, "  note: {n}").unwrap();
    }
    for f in &r.stage_failures {
        writeln!(out, "  {} failed: {}", f.stage, f.message).unwrap();
    }
}

fn stage_name(c: &CriticalPoint) -> &'static str {
    match c.kind {
        ballcrit::PointKind::BallMin => "ball_min",
        ballcrit::PointKind::MountainPass => "mountain_pass",
        ballcrit::PointKind::GlobalMax => "global_max",
        ballcrit::PointKind::Other => "other",
    }
}

/// Writes CSV artifacts, strips traces and stores the per-λ results.
fn finish_results(
    ctx: &Context,
    runs: Vec<LambdaRun>,
    report: &mut RunReport,
) -> Result<(), CliError> {
    let multi = runs.len() > 1;
    if let Some(dir) = &ctx.cfg.output.csv_dir {
        create_dir(dir)?;
        for (k, _, _, r, _) in &runs {
            let prefix = if multi { format!("lambda{k:03}_") } else { String::new() };
            for c in r.points() {
                export_solution(c, c.point.shape(), &dir.join(format!("{prefix}{}.csv", stage_name(c))))?;
            }
        }
    }
    if let Some(path) = &ctx.cfg.output.trace {
        let blocks: Vec<TraceBlock> = runs
            .iter()
            .flat_map(|(k, _, _, r, _)| {
                r.points().into_iter().map(move |c| TraceBlock {
                    lambda_index: *k,
                    stage: stage_name(c),
                    rows: &c.trace,
                })
            })
            .collect();
        export_traces(&blocks, path)?;
    }
    for (index, lambda, seed, mut solve, secs) in runs {
        for c in [&mut solve.ball_min, &mut solve.mountain_pass, &mut solve.global_max]
            .into_iter()
            .flatten()
        {
            c.trace.clear();
        }
        report.timing.per_lambda_seconds.push(secs);
        report.results.push(LambdaResult { index, lambda, seed, solve });
    }
    Ok(())
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))
}

fn certify_cmd(ctx: &Context, report: &mut RunReport, out: &mut String) -> Result<i32, CliError> {
    let path = ctx
        .cfg
        .certify
        .vector
        .as_ref()
        .ok_or_else(|| CliError::Validation("certify.vector: required by the certify command".into()))?;
    let lambda = ctx.single_lambda("certify")?;
    let p = ctx.base.with_lambda(lambda)?;
    let u = read_vector(path, p.shape())?;
    let r = certify(&p, &u, &ctx.cfg.certify_tolerances(), Some(ctx.cfg.ball.rho))?;
    let verdict = match r.verdict {
        Verdict::Certified => "certified",
        Verdict::Inconclusive => "inconclusive",
    };
    writeln!(out, "verdict = {verdict}").unwrap();
    writeln!(out, "J(u) = {}  J(v) = {}  residual = {:e}", r.j_u, r.j_v, r.residual).unwrap();
    if let Some(d) = &r.diagnostic {
        writeln!(out, "note: {d}").unwrap();
    }
    report.constants = Some(ctx.constants);
    report.certificate = Some(r);
    Ok(0)
}

fn hypotheses_cmd(ctx: &Context, report: &mut RunReport, out: &mut String) -> Result<i32, CliError> {
    let verdicts = ctx.hypotheses()?;
    writeln!(out, "{:<4} {:<14} {:>8}  witness", "id", "verdict", "samples").unwrap();
    for v in &verdicts {
        let verdict = match v.verdict {
            Outcome::PassSampled => "pass (sampled)",
            Outcome::FailWitnessed => "fail",
        };
        let witness = v.witness.as_ref().map_or(String::from("-"), |w| {
            let y = w.y.map_or(String::new(), |y| format!(" y = {y}"));
            format!("site {} x = {}{y}: {} > {}", w.site, w.x, w.lhs, w.rhs)
        });
        writeln!(out, "{:<4} {:<14} {:>8}  {}", v.hypothesis.to_string(), verdict, v.samples, witness).unwrap();
    }
    report.hypotheses = verdicts;
    Ok(0)
}

fn refine(ctx: &Context, report: &mut RunReport, out: &mut String) -> Result<i32, CliError> {
    let dom = ctx
        .domain
        .ok_or_else(|| CliError::Validation("problem.domain: the refine command needs a domain".into()))?;
    let lambda = match ctx.cfg.lambda_mode()? {
        LambdaMode::Fixed(l) => l,
        _ => {
            return Err(CliError::Validation(
                "problem.lambda: the refine command needs a fixed lambda".into(),
            ))
        }
    };
    let ladder = if ctx.cfg.refine.ladder.is_empty() { vec![dom.h] } else { ctx.cfg.refine.ladder.clone() };
    let family = &ctx.cfg.problem.nonlinearity;
    let opts = ctx.cfg.solver_options();
    let mut r = refinement_study(dom.width, dom.height, |_, _| family.clone(), lambda, &ladder, ctx.cfg.ball.rho, &opts)?;
    for b in &mut r.branches {
        for l in &mut b.levels {
            l.solution = None;
        }
    }
    for c in [&mut r.coarse.ball_min, &mut r.coarse.mountain_pass, &mut r.coarse.global_max]
        .into_iter()
        .flatten()
    {
        c.trace.clear();
    }
    if let Some(dir) = &ctx.cfg.output.csv_dir {
        create_dir(dir)?;
        let coarse = RectDomain::new(dom.width, dom.height, ladder[0])?;
        for b in &r.branches {
            for (k, l) in b.levels.iter().enumerate() {
                export_snapshot(&coarse, &l.snapshot, &dir.join(format!("{}_level{k}.csv", b.name)))?;
            }
        }
    }
    writeln!(
        out,
        "lambda_1 = {} (Poincare constant {}, extrapolated: {})",
        r.poincare.lambda1, r.poincare.c, r.poincare.extrapolated
    )
    .unwrap();
    for b in &r.branches {
        let ratios: Vec<String> = b.ratios.iter().map(|x| x.map_or("-".into(), |x| format!("{x:.3}"))).collect();
        write!(out, "{}: differences {:?}, ratios [{}]", b.name, b.differences, ratios.join(", ")).unwrap();
        if let Some(o) = b.order {
            write!(out, ", order {o:.3}").unwrap();
        }
        if let Some(h) = b.lost_at {
            write!(out, ", lost at h = {h}").unwrap();
        }
        writeln!(out).unwrap();
    }
    let code = pipeline_exit_code(&r.coarse);
    report.constants = Some(r.constants);
    report.refinement = Some(r);
    Ok(code)
}
