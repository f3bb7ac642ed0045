//! End-to-end acceptance suite. Prints one line per criterion and exits
//! nonzero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use ballcrit::dc::{beta_multistart, BetaBudget};
use ballcrit::hypotheses::{recheck, HypothesisId, Outcome};
use ballcrit::solvers::{ball_minimize_from, global_maximize_from, mountain_pass};
use ballcrit::{
    eigen_analytic, mountain_geometry_check, GridProblem, GridShape, GridVector, Nonlinearity, OperatorA,
    SolverOptions, Verdict,
};
use ballcrit_cli::{run, RunConfig, RunReport};
use nalgebra::{DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<(), String>;

/// Name, time limit in seconds, check.
type Criterion = (&'static str, u64, Box<dyn Fn() -> Check>);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if $cond {
        } else {
            return Err(format!($($fmt)+));
        }
    };
}

fn config(text: &str) -> RunConfig {
    RunConfig::from_toml(text).unwrap_or_else(|e| panic!("bad test config: {e}\n{text}"))
}

fn quartic_config(m: usize, n: usize, lambda: &str, rho: f64, extra: &str) -> String {
    format!(
        "[problem]\nm = {m}\nn = {n}\nnonlinearity = {{ family = \"power\", c1 = 1.0, mu = 4.0 }}\n{lambda}\n\
         [ball]\nrho = {rho}\n{extra}"
    )
}

fn c1_spectrum() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("eigen.toml");
    std::fs::write(&path, quartic_config(2, 2, "lambda = 0.5", 1.0, "")).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_ballcrit"))
        .args(["--config", path.to_str().unwrap(), "--command", "eigen"])
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(out.status.code() == Some(0), "eigen exited with {:?}", out.status.code());
    let stdout = String::from_utf8_lossy(&out.stdout);
    ensure!(stdout.trim() == "2 4 4 6", "eigen printed {stdout:?}");

    for m in 1..=8 {
        for n in 1..=8 {
            let shape = GridShape::new(m, n).unwrap();
            let dense = OperatorA::assemble_dense(shape, 1.0).unwrap().dense().unwrap().clone();
            let mut oracle: Vec<f64> = SymmetricEigen::new(dense).eigenvalues.iter().copied().collect();
            oracle.sort_by(f64::total_cmp);
            for (a, b) in eigen_analytic(shape, 1.0).iter().zip(&oracle) {
                ensure!((a - b).abs() <= 1e-10, "{m}x{n}: analytic {a} vs dense {b}");
            }
        }
    }
    Ok(())
}

fn c2_lambda_star() -> Check {
    let out = run("lambda-star", &config(&quartic_config(2, 2, "lambda = 0.5", 1.0, ""))).map_err(|e| e.to_string())?;
    let ls = out.report.lambda_star.ok_or("no lambda* in report")?;
    ensure!(ls.beta == 4.0, "beta = {}", ls.beta);
    ensure!(!ls.estimate, "closed form expected, got an estimate ({:?})", ls.method);
    ensure!(ls.lambda_star == 0.5, "lambda* = {} is not exactly 0.5", ls.lambda_star);
    let (ascent, _) = beta_multistart(GridShape::new(2, 2).unwrap(), &Nonlinearity::power(1.0, 4.0, 0.0), 1.0, &BetaBudget::default());
    ensure!((ascent - 4.0).abs() <= 1e-6 * 4.0, "multistart beta = {ascent}");
    ensure!(out.summary.contains("lambda_star = 0.5\n"), "summary: {}", out.summary);
    Ok(())
}

fn c3_certificate() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let cases = [(0.0, Verdict::Certified), (2f64.sqrt(), Verdict::Certified), (1.0, Verdict::Inconclusive)];
    for (u, expected) in cases {
        let vec_path = dir.path().join("u.txt");
        std::fs::write(&vec_path, format!("{u}\n")).unwrap();
        let extra = format!("[certify]\nvector = {:?}\n", vec_path.to_str().unwrap());
        let out = run("certify", &config(&quartic_config(1, 1, "lambda = 0.5", 2.0, &extra))).map_err(|e| e.to_string())?;
        let c = out.report.certificate.ok_or("no certificate")?;
        ensure!(c.verdict == expected, "u = {u}: verdict {:?}, expected {expected:?}", c.verdict);
        // independent residual |4u − 2u³|
        let r = (4.0 * u - 2.0 * u * u * u).abs();
        if expected == Verdict::Certified {
            ensure!(c.residual <= 1e-10 && r <= 1e-10, "u = {u}: residual {} / {r}", c.residual);
        }
    }
    Ok(())
}

/// Roots of `Au = 2λu³` on the 2×1 grid by plain Newton from a lattice.
fn enumerate_two_site_roots(lambda: f64) -> Vec<[f64; 2]> {
    let grad = |u: [f64; 2]| {
        [
            4.0 * u[0] - u[1] - 4.0 * lambda * u[0].powi(3),
            4.0 * u[1] - u[0] - 4.0 * lambda * u[1].powi(3),
        ]
    };
    let mut roots: Vec<[f64; 2]> = Vec::new();
    for a in -12..=12 {
        for b in -12..=12 {
            let mut u = [a as f64 * 0.25, b as f64 * 0.25];
            for _ in 0..100 {
                let g = grad(u);
                let d0 = 4.0 - 12.0 * lambda * u[0] * u[0];
                let d1 = 4.0 - 12.0 * lambda * u[1] * u[1];
                let det = d0 * d1 - 1.0;
                if det == 0.0 {
                    break;
                }
                u = [u[0] - (d1 * g[0] + g[1]) / det, u[1] - (g[0] + d0 * g[1]) / det];
            }
            let g = grad(u);
            if g[0].hypot(g[1]) < 1e-12 && !roots.iter().any(|r| (r[0] - u[0]).hypot(r[1] - u[1]) < 1e-8) {
                roots.push(u);
            }
        }
    }
    roots
}

fn c4_three_points() -> Check {
    let out = run("pipeline", &config(&quartic_config(2, 1, "lambda = 0.5", 1.0, ""))).map_err(|e| e.to_string())?;
    ensure!(out.exit_code == 0, "exit code {}", out.exit_code);
    let r = &out.report.results[0].solve;
    ensure!(r.distinct_count == 3, "distinct count {}", r.distinct_count);
    let roots = enumerate_two_site_roots(0.5);
    ensure!(roots.len() == 9, "oracle found {} roots", roots.len());
    let points = r.points();
    for (c, target) in points.iter().zip([0.0, 2.25, 6.25]) {
        ensure!((c.value - target).abs() <= 1e-6, "{:?}: J = {} (expected {target})", c.kind, c.value);
        ensure!(c.residual <= 1e-8, "{:?}: residual {}", c.kind, c.residual);
        let v = c.point.values();
        ensure!(
            roots.iter().any(|q| (q[0] - v[0]).abs() <= 1e-6 && (q[1] - v[1]).abs() <= 1e-6),
            "{:?} at {:?} not among the enumerated roots",
            c.kind,
            v.as_slice()
        );
    }
    ensure!(points.len() == 3, "{} points", points.len());
    Ok(())
}

fn c5_coincidence() -> Check {
    let out = run("pipeline", &config(&quartic_config(1, 1, "lambda = 0.5", 1.0, ""))).map_err(|e| e.to_string())?;
    let r = &out.report.results[0].solve;
    let pts = r.points();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-4 * (1.0 + a.abs().max(b.abs()));
    let duplicates = (0..pts.len())
        .flat_map(|i| (i + 1..pts.len()).map(move |j| (i, j)))
        .filter(|&(i, j)| close(pts[i].point.values()[0], pts[j].point.values()[0]))
        .count();
    match r.distinct_count {
        3 => {
            ensure!(duplicates == 0, "three distinct claimed but {duplicates} pairs coincide");
            let mp = r.mountain_pass.as_ref().ok_or("no mountain pass")?.point.values()[0];
            let gm = r.global_max.as_ref().ok_or("no global max")?.point.values()[0];
            ensure!(mp * gm < 0.0, "expected opposite signs, got {mp} and {gm}");
        }
        2 => {
            ensure!(duplicates == 1, "two distinct claimed with {duplicates} coinciding pairs");
            ensure!(r.notes.iter().any(|n| n.contains("coincides with")), "missing coincidence note: {:?}", r.notes);
        }
        k => return Err(format!("distinct count {k}")),
    }
    Ok(())
}

fn c6_geometry() -> Check {
    let p = GridProblem::on_grid(1, 1, Nonlinearity::power(1.0, 4.0, 0.0), 0.5).unwrap();
    let shape = p.shape();
    let x0 = GridVector::zeros(shape);
    let x1 = GridVector::from_vec(shape, vec![3.0]).unwrap();
    let g = mountain_geometry_check(&p, 1.0, &x0, &x1, 256, 0).map_err(|e| e.to_string())?;
    let margin = g.margin.ok_or("no margin")?;
    ensure!((margin - 1.5).abs() <= 1e-3, "margin {margin}");
    ensure!(g.verdict, "geometry verdict false");
    Ok(())
}

fn c7_properties() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    // gradient against central differences
    for case in 0..100 {
        let (m, n) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let mu = rng.random_range(2.0..6.0);
        let p = GridProblem::on_grid(m, n, Nonlinearity::power(rng.random_range(0.1..2.0), mu, 0.0), rng.random_range(0.05..2.0)).unwrap();
        let u = DVector::from_fn(p.dim(), |_, _| rng.random_range(-2.0..2.0));
        let g = p.gradient_vec(&u);
        for k in 0..p.dim() {
            let h = 1e-5 * (1.0 + u[k].abs());
            let (mut up, mut dn) = (u.clone(), u.clone());
            up[k] += h;
            dn[k] -= h;
            let fd = (p.energy_vec(&up) - p.energy_vec(&dn)) / (2.0 * h);
            ensure!((fd - g[k]).abs() <= 1e-6 * g[k].abs().max(1.0), "case {case} site {k}: fd {fd} vs {}", g[k]);
        }
    }
    // descent monotonicity and ball containment
    let traced = SolverOptions { record_traces: true, newton_polish: false, ..SolverOptions::default() };
    for case in 0..20 {
        let (m, n) = (rng.random_range(1..=3), rng.random_range(1..=3));
        let p = GridProblem::on_grid(m, n, Nonlinearity::power(1.0, 4.0, 0.0), rng.random_range(0.05..4.0)).unwrap();
        let rho = rng.random_range(0.2..2.5);
        let start = DVector::from_fn(p.dim(), |_, _| rng.random_range(-2.0 * rho..2.0 * rho));
        let c = ball_minimize_from(&p, rho, &[start], &traced).map_err(|e| e.to_string())?;
        for w in c.trace.windows(2) {
            ensure!(w[1].value <= w[0].value, "case {case}: energy rose {} -> {}", w[0].value, w[1].value);
        }
        ensure!(c.trace.iter().all(|r| r.norm <= rho + 1e-12), "case {case}: iterate left the ball");
    }
    // odd symmetry: u* ↦ −u* for each solver
    let opts = SolverOptions::default();
    for case in 0..10 {
        let m = rng.random_range(1..=2);
        let p = GridProblem::on_grid(m, 1, Nonlinearity::power(1.0, 4.0, 0.0), 0.5).unwrap();
        let s = DVector::from_fn(p.dim(), |_, _| rng.random_range(-1.0..1.0));
        let a = ball_minimize_from(&p, 1.5, std::slice::from_ref(&s), &opts).map_err(|e| e.to_string())?;
        let b = ball_minimize_from(&p, 1.5, &[-&s], &opts).map_err(|e| e.to_string())?;
        ensure!((a.point.values() + b.point.values()).amax() <= 1e-12, "case {case}: ball minimizer not odd");
        let g = &s * 3.0;
        let a = global_maximize_from(&p, std::slice::from_ref(&g), &opts).map_err(|e| e.to_string())?;
        let b = global_maximize_from(&p, &[-&g], &opts).map_err(|e| e.to_string())?;
        ensure!((a.point.values() + b.point.values()).amax() <= 1e-12, "case {case}: global max not odd");
        let x1 = DVector::from_element(p.dim(), 4.0);
        let zero = GridVector::zeros(p.shape());
        let a = mountain_pass(&p, &zero, &p.wrap(x1.clone()), &opts).map_err(|e| e.to_string())?;
        let b = mountain_pass(&p, &zero, &p.wrap(-x1), &opts).map_err(|e| e.to_string())?;
        ensure!((a.point.values() + b.point.values()).amax() <= 1e-12, "case {case}: mountain pass not odd");
    }
    Ok(())
}

fn c8_hypotheses() -> Check {
    let params = "[hypotheses]\nmu = 4.0\nc1 = 1.0\nc2 = 0.0\ntheta = 4.0\nbeta1 = 4.0\neta = 4.0\nbeta2 = 0.0\n";
    let quartic = config(&quartic_config(1, 1, "lambda = 0.5", 1.0, params));
    let out = run("check-hypotheses", &quartic).map_err(|e| e.to_string())?;
    for id in [HypothesisId::H4, HypothesisId::H5, HypothesisId::H7, HypothesisId::H8, HypothesisId::H9] {
        let v = out.report.hypotheses.iter().find(|v| v.hypothesis == id).ok_or(format!("{id} missing"))?;
        ensure!(v.verdict == Outcome::PassSampled, "x^4 fails {id}: {:?}", v.witness);
    }
    let square_text = quartic_config(1, 1, "lambda = 0.5", 1.0, params).replace("mu = 4.0 }", "mu = 2.0 }");
    let square = config(&square_text);
    let out = run("check-hypotheses", &square).map_err(|e| e.to_string())?;
    let nl = Nonlinearity::power(1.0, 2.0, 0.0);
    for id in [HypothesisId::H7, HypothesisId::H9] {
        let v = out.report.hypotheses.iter().find(|v| v.hypothesis == id).ok_or(format!("{id} missing"))?;
        ensure!(v.verdict == Outcome::FailWitnessed, "x^2 passes {id}");
        let w = v.witness.as_ref().ok_or(format!("{id}: no witness"))?;
        ensure!(recheck(&nl, &square.hypothesis_params(), id, w), "{id}: witness {w:?} does not recheck");
    }
    Ok(())
}

fn c9_pde() -> Check {
    let text = "[problem]\ndomain = { width = 1.0, height = 1.0 }\n\
                nonlinearity = { family = \"power\", c1 = 1.0, mu = 4.0 }\nlambda = 1.0\n\
                [ball]\nrho = 1.0\n[refine]\nladder = [0.125, 0.0625, 0.03125]\n";
    let out = run("refine", &config(text)).map_err(|e| e.to_string())?;
    let r = out.report.refinement.ok_or("no refinement report")?;
    let target = 2.0 * std::f64::consts::PI.powi(2);
    ensure!(r.poincare.extrapolated, "lambda_1 not extrapolated");
    ensure!(((r.poincare.lambda1 - target) / target).abs() <= 5e-3, "lambda_1 = {}", r.poincare.lambda1);
    let good = r.branches.iter().find(|b| {
        b.lost_at.is_none()
            && b.levels.iter().all(|l| l.converged && l.snapshot.iter().any(|&x| x != 0.0))
            && b.ratios.iter().any(|q| q.is_some_and(|q| (2.5..=6.0).contains(&q)))
    });
    let b = good.ok_or_else(|| {
        let summary: Vec<String> = r.branches.iter().map(|b| format!("{}: {:?}", b.name, b.ratios)).collect();
        format!("no nonzero branch with ratio in [2.5, 6]: {summary:?}")
    })?;
    ensure!(b.levels.len() == 3, "branch {} tracked on {} levels", b.name, b.levels.len());
    Ok(())
}

fn c10_large(dir: &Path) -> Check {
    let report = dir.join("report.json");
    let extra = format!("[output]\nreport = {:?}\n", report.to_str().unwrap());
    let cfg_path = dir.join("large.toml");
    std::fs::write(&cfg_path, quartic_config(10, 10, "lambda_fraction = 0.9", 1.0, &extra)).unwrap();
    let mut reports = Vec::new();
    for jobs in ["1", "4"] {
        let out = Command::new(env!("CARGO_BIN_EXE_ballcrit"))
            .args(["--config", cfg_path.to_str().unwrap(), "--command", "pipeline", "--seed", "11", "--jobs", jobs, "--quiet"])
            .output()
            .map_err(|e| e.to_string())?;
        ensure!(out.status.success(), "run with {jobs} jobs exited with {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
        reports.push(std::fs::read_to_string(&report).map_err(|e| e.to_string())?);
    }
    let r = RunReport::from_json(&reports[0]).map_err(|e| e.to_string())?;
    let solve = &r.results[0].solve;
    let ls = solve.lambda_star.as_ref().ok_or("no lambda*")?;
    ensure!((solve.lambda - 0.9 * ls.lambda_star).abs() <= 1e-15 * ls.lambda_star, "lambda = {}", solve.lambda);
    let good = solve
        .points()
        .iter()
        .filter(|c| {
            let certified = c.certificate.as_ref().is_some_and(|x| x.verdict == Verdict::Certified);
            (certified || c.converged) && c.residual <= 1e-6
        })
        .count();
    ensure!(good >= 2, "only {good} verified points");
    let a = RunReport::without_timing(&reports[0]).map_err(|e| e.to_string())?;
    let b = RunReport::without_timing(&reports[1]).map_err(|e| e.to_string())?;
    ensure!(a == b, "reports differ between runs");
    // the raw files agree up to the timing section, which comes last
    let cut = |s: &str| s[..s.find("\"timing\"").unwrap_or(s.len())].to_string();
    ensure!(cut(&reports[0]) == cut(&reports[1]), "report bytes differ before the timing section");
    Ok(())
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let criteria: Vec<Criterion> = vec![
        ("spectral ground truth", 1, Box::new(c1_spectrum)),
        ("lambda* reproduction", 5, Box::new(c2_lambda_star)),
        ("certificate soundness", 1, Box::new(c3_certificate)),
        ("three-point reproduction", 10, Box::new(c4_three_points)),
        ("coincidence honesty", 5, Box::new(c5_coincidence)),
        ("mountain geometry margin", 5, Box::new(c6_geometry)),
        ("property suites", 60, Box::new(c7_properties)),
        ("hypothesis checkers", 5, Box::new(c8_hypotheses)),
        ("PDE bridge", 120, Box::new(c9_pde)),
        ("larger-instance smoke", 300, Box::new(move || c10_large(dir.path()))),
    ];
    let mut failed = 0;
    for (k, (name, limit, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(check))
            .unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = t.elapsed();
        let result = result.and_then(|()| {
            if elapsed <= Duration::from_secs(*limit) {
                Ok(())
            } else {
                Err(format!("took {:.2} s, limit {limit} s", elapsed.as_secs_f64()))
            }
        });
        match result {
            Ok(()) => println!("criterion {:>2} PASS  {name} ({:.2} s)", k + 1, elapsed.as_secs_f64()),
            Err(e) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name} ({:.2} s): {e}", k + 1, elapsed.as_secs_f64());
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
