//! Difference-of-convex structure `J = Φ − λH` with `Φ = ½uᵀAu`, `H = ΣF`.
//!
//! Holds the growth constants `(α, γ, c, ρ)`, the bound `β` of `|f(x)|₂` on
//! the ball `B_ρ`, the threshold `λ* = γρ^(α−1)/(βc)` and the companion
//! certificate: with `v` solving `Av = λf(u)`, the inequality `J(u) ≤ J(v)`
//! forces `u` to be a critical point.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridShape, GridVector, OperatorA};
use crate::linalg::conjugate_gradient;
use crate::nonlinearity::Nonlinearity;
use crate::problem::GridProblem;
use crate::seeds;

/// Growth exponent `α`, coercivity `γ`, embedding constant `c`, ball radius `ρ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructureConstants {
    pub alpha: f64,
    pub gamma: f64,
    pub c: f64,
    pub rho: f64,
}

impl StructureConstants {
    pub fn new(alpha: f64, gamma: f64, c: f64, rho: f64) -> Result<Self> {
        let k = Self { alpha, gamma, c, rho };
        k.validate()?;
        Ok(k)
    }

    /// `α = 2`, `γ = α₁`, `c = 1`: the quadratic energy on Euclidean space.
    pub fn discrete(op: &OperatorA, rho: f64) -> Result<Self> {
        Self::new(2.0, op.alpha_1(), 1.0, rho)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| {
            Err(Error::InvalidInput(format!("structure constant {what} invalid: {v}")))
        };
        if !(self.alpha > 1.0 && self.alpha.is_finite()) {
            return bad("alpha (needs > 1)", self.alpha);
        }
        for (name, v) in [("gamma", self.gamma), ("c", self.c), ("rho", self.rho)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(name, v);
            }
        }
        Ok(())
    }
}

/// `γρ^(α−1)/(βc)`, or `+∞` when `β = 0`.
pub fn lambda_star(constants: &StructureConstants, beta: f64) -> f64 {
    if beta == 0.0 {
        return f64::INFINITY;
    }
    constants.gamma * constants.rho.powf(constants.alpha - 1.0) / (beta * constants.c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BetaMethod {
    ClosedForm,
    MultistartAscent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaStarResult {
    pub beta: f64,
    /// `None` encodes `+∞` (every `λ > 0` admissible).
    #[serde(with = "infinite_as_null")]
    pub lambda_star: f64,
    pub maximizer: GridVector,
    pub method: BetaMethod,
    /// True when `β` comes from the heuristic ascent, making `λ*` an estimate.
    pub estimate: bool,
}

mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() { Some(*v) } else { None }.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Multistart settings for the ascent estimate of `β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaBudget {
    pub starts: usize,
    pub max_iter: usize,
    pub seed: u64,
    /// Skip the closed form even when it applies.
    pub force_multistart: bool,
}

impl Default for BetaBudget {
    fn default() -> Self {
        Self {
            starts: 16,
            max_iter: 3000,
            seed: 0,
            force_multistart: false,
        }
    }
}

/// `β = max_{|x|₂ ≤ ρ} |f(x)|₂` together with `λ*`.
pub fn beta_sup(
    shape: GridShape,
    nonlinearity: &Nonlinearity,
    constants: &StructureConstants,
    budget: &BetaBudget,
) -> Result<LambdaStarResult> {
    constants.validate()?;
    nonlinearity.validate(shape.dim())?;
    let rho = constants.rho;
    let closed = !budget.force_multistart
        && nonlinearity
            .families()
            .iter()
            .all(|f| f.squared_value_concentrates());

    let (beta, witness, method) = if closed {
        let (beta, witness) = beta_closed_form(shape, nonlinearity, rho);
        (beta, witness, BetaMethod::ClosedForm)
    } else {
        let (beta, witness) = beta_multistart(shape, nonlinearity, rho, budget);
        (beta, witness, BetaMethod::MultistartAscent)
    };
    Ok(LambdaStarResult {
        beta,
        lambda_star: lambda_star(constants, beta),
        maximizer: GridVector::from_dvector(shape, witness)?,
        method,
        estimate: method == BetaMethod::MultistartAscent,
    })
}

/// Vertex maximum `max_k max(|f_k(ρ)|, |f_k(−ρ)|)`, valid when every site's
/// `f²(±√s)` is convex, nondecreasing and vanishes at 0.
fn beta_closed_form(shape: GridShape, nl: &Nonlinearity, rho: f64) -> (f64, DVector<f64>) {
    let mut best = (0.0_f64, 0usize, 1.0_f64);
    for k in 0..shape.dim() {
        for sign in [1.0, -1.0] {
            let v = nl.value(k, sign * rho).abs();
            if v > best.0 {
                best = (v, k, sign);
            }
        }
    }
    let mut witness = DVector::zeros(shape.dim());
    witness[best.1] = best.2 * rho;
    (best.0, witness)
}

fn squared_norm_of_f(nl: &Nonlinearity, x: &DVector<f64>) -> f64 {
    x.iter()
        .enumerate()
        .map(|(k, &v)| nl.value(k, v).powi(2))
        .sum()
}

fn project_ball(mut x: DVector<f64>, rho: f64) -> DVector<f64> {
    let nrm = x.norm();
    if nrm > rho {
        x *= rho / nrm;
    }
    x
}

/// Multistart projected gradient ascent of `Σf(x_k)²` over `|x|₂ ≤ ρ`.
///
/// Returns a lower bound on `β` attained at the returned witness.
pub fn beta_multistart(
    shape: GridShape,
    nl: &Nonlinearity,
    rho: f64,
    budget: &BetaBudget,
) -> (f64, DVector<f64>) {
    let dim = shape.dim();
    let mut rng = seeds::stream(budget.seed, "beta", 0);
    let starts: Vec<DVector<f64>> = (0..budget.starts.max(1))
        .map(|s| {
            let dir = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
            let dir = &dir / dir.norm().max(f64::MIN_POSITIVE);
            // even starts on the sphere, odd ones in the interior
            let r = if s % 2 == 0 {
                rho
            } else {
                rho * rng.random::<f64>().powf(1.0 / dim as f64)
            };
            dir * r
        })
        .collect();

    let grad = |x: &DVector<f64>| {
        DVector::from_fn(dim, |k, _| {
            let d = nl.derivative(k, x[k]).unwrap_or_else(|| nl.derivative_fd(k, x[k]));
            2.0 * nl.value(k, x[k]) * d
        })
    };

    let results: Vec<(f64, DVector<f64>)> = starts
        .into_par_iter()
        .map(|mut x| {
            let mut val = squared_norm_of_f(nl, &x);
            let mut t = 1.0 / (1.0 + val.sqrt());
            for _ in 0..budget.max_iter {
                let g = grad(&x);
                if g.norm() == 0.0 {
                    break;
                }
                let mut accepted = false;
                for _ in 0..60 {
                    let cand = project_ball(&x + &g * t, rho);
                    let cv = squared_norm_of_f(nl, &cand);
                    if cv >= val + 1e-4 * g.dot(&(&cand - &x)) && cv >= val {
                        let moved = (&cand - &x).norm();
                        x = cand;
                        val = cv;
                        accepted = moved > 1e-15 * (1.0 + rho);
                        t *= 2.0;
                        break;
                    }
                    t *= 0.5;
                }
                if !accepted {
                    break;
                }
            }
            (val, x)
        })
        .collect();

    let (val, x) = results
        .into_iter()
        .reduce(|best, cand| if better_max(&cand, &best) { cand } else { best })
        .expect("at least one start");
    (val.sqrt(), x)
}

/// Deterministic order for maximisation: larger value, then lexicographically
/// smaller vector.
fn better_max(a: &(f64, DVector<f64>), b: &(f64, DVector<f64>)) -> bool {
    let tie = 1e-12 * (1.0 + a.0.abs().max(b.0.abs()));
    if (a.0 - b.0).abs() > tie {
        return a.0 > b.0;
    }
    lex_less(&a.1, &b.1)
}

pub(crate) fn lex_less(a: &DVector<f64>, b: &DVector<f64>) -> bool {
    for (x, y) in a.iter().zip(b.iter()) {
        if x != y {
            return x < y;
        }
    }
    false
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifyTolerances {
    /// Energy slack relative to `max(1, |J(u)|)`.
    pub tol_energy: f64,
    /// Companion solve tolerance relative to `max(1, |λf(u)|₂)`.
    pub tol_linear: f64,
    pub max_iter: usize,
}

impl Default for CertifyTolerances {
    fn default() -> Self {
        Self {
            tol_energy: 1e-10,
            tol_linear: 1e-10,
            max_iter: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Certified,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub candidate: GridVector,
    pub companion: GridVector,
    pub j_u: f64,
    pub j_v: f64,
    /// `J(v) − J(u)`; never positive in exact arithmetic, zero iff `u` is critical.
    pub energy_gap: f64,
    /// `|Au − λf(u)|₂`.
    pub residual: f64,
    /// `|Av − λf(u)|₂`.
    pub companion_residual: f64,
    pub companion_norm: f64,
    /// `ρ − |v|₂` when a radius was supplied.
    pub ball_margin: Option<f64>,
    pub companion_in_ball: Option<bool>,
    pub cg_iterations: usize,
    pub verdict: Verdict,
    pub diagnostic: Option<String>,
}

/// Solve `Av = λf(u)` and compare `J(u)` with `J(v)`.
pub fn certify(
    p: &GridProblem,
    u: &GridVector,
    tol: &CertifyTolerances,
    rho: Option<f64>,
) -> Result<CertificateReport> {
    p.shape().check(&u.shape())?;
    if u.values().iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("candidate has non-finite entries".into()));
    }
    let uv = u.values();
    let rhs = p.nonlinear_term(uv) * p.lambda();
    let op = p.operator();
    let cg = conjugate_gradient(|x| op.apply_vec(x), &rhs, tol.tol_linear, tol.max_iter);
    let v = cg.x;
    let j_u = p.energy_vec(uv);
    let j_v = p.energy_vec(&v);
    let energy_gap = j_v - j_u;
    let companion_norm = v.norm();
    let ball_margin = rho.map(|r| r - companion_norm);

    let energy_ok = energy_gap >= -tol.tol_energy * j_u.abs().max(1.0);
    let verdict = if cg.converged && energy_ok {
        Verdict::Certified
    } else {
        Verdict::Inconclusive
    };
    let diagnostic = if !cg.converged {
        Some(format!(
            "companion solve stopped after {} iterations with residual {:e}",
            cg.iterations, cg.residual
        ))
    } else if !energy_ok {
        Some(format!("J(u) exceeds J(v) by {:e}", -energy_gap))
    } else {
        None
    };
    Ok(CertificateReport {
        candidate: u.clone(),
        companion: p.wrap(v),
        j_u,
        j_v,
        energy_gap,
        residual: p.residual_vec(uv),
        companion_residual: cg.residual,
        companion_norm,
        ball_margin,
        companion_in_ball: ball_margin.map(|m| m >= -1e-12),
        cg_iterations: cg.iterations,
        verdict,
        diagnostic,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct H3Report {
    pub pass: bool,
    /// Smallest sampled `vᵀAv / |v|^α`.
    pub worst_ratio: Option<f64>,
    pub samples: usize,
    /// No samples were drawn; the pass is vacuous.
    pub degenerate: bool,
}

/// Sample `vᵀAv ≥ γ|v|^α` on random nonzero `v`.
pub fn h3_check(
    op: &OperatorA,
    constants: &StructureConstants,
    samples: usize,
    seed: u64,
) -> H3Report {
    if samples == 0 {
        return H3Report {
            pass: true,
            worst_ratio: None,
            samples: 0,
            degenerate: true,
        };
    }
    let dim = op.shape().dim();
    let mut rng = seeds::stream(seed, "h3", 0);
    let mut worst = f64::INFINITY;
    for _ in 0..samples {
        let v = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let nrm = v.norm();
        if nrm == 0.0 {
            continue;
        }
        worst = worst.min(op.quadratic_form(&v) / nrm.powf(constants.alpha));
    }
    H3Report {
        pass: worst >= constants.gamma * (1.0 - 1e-12),
        worst_ratio: Some(worst),
        samples,
        degenerate: false,
    }
}
