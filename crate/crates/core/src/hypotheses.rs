//! Sampled verdicts on growth, superlinearity and convexity hypotheses for a
//! nonlinearity. Sampling can only refute: a pass means "no violation found".
//!
//! | id  | condition |
//! |-----|-----------|
//! | H4  | `F(x) ≥ c₁|x|^μ + c₂` for `|x| ≥ d` |
//! | H5  | `F` convex (midpoint test) |
//! | H7  | `0 < θ(F(v) − F(0)) ≤ v·f(v)`, `v ≠ 0` |
//! | H8  | `|f(v)| ≤ β₁|v|^(η−1) + β₂` |
//! | H9  | `|f(v)|/|v| → 0` as `v → 0` |
//! | H10 | `F` convex, site-dependent setting (same test as H5) |

use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nonlinearity::{Family, Nonlinearity};
use crate::seeds;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HypothesisId {
    H4,
    H5,
    H7,
    H8,
    H9,
    H10,
}

impl std::fmt::Display for HypothesisId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisParams {
    pub mu: f64,
    pub c1: f64,
    pub c2: f64,
    pub d: f64,
    pub theta: f64,
    pub beta1: f64,
    pub eta: f64,
    pub beta2: f64,
    /// Largest sampled magnitude, by default `10ρ`.
    pub x_max: f64,
    /// Log-spaced and uniform samples per site (each).
    pub samples: usize,
    pub seed: u64,
    /// H9 passes when the ratio at the smallest rung is at most this.
    pub vanishing_threshold: f64,
    pub ladder_rungs: u32,
}

impl Default for HypothesisParams {
    fn default() -> Self {
        Self {
            mu: 4.0,
            c1: 1.0,
            c2: 0.0,
            d: 1.0,
            theta: 4.0,
            beta1: 4.0,
            eta: 4.0,
            beta2: 0.0,
            x_max: 10.0,
            samples: 200,
            seed: 0,
            vanishing_threshold: 1e-4,
            ladder_rungs: 40,
        }
    }
}

impl HypothesisParams {
    /// Sampling range tied to the ball radius.
    pub fn for_radius(rho: f64) -> Self {
        Self {
            x_max: 10.0 * rho,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("mu", self.mu > 2.0, self.mu),
            ("theta", self.theta > 2.0, self.theta),
            ("eta", self.eta > 2.0, self.eta),
            ("d", self.d > 0.0, self.d),
            ("c1", self.c1 > 0.0, self.c1),
            ("x_max", self.x_max > 0.0, self.x_max),
        ];
        for (name, ok, v) in checks {
            if !ok || !v.is_finite() {
                return Err(Error::InvalidInput(format!("hypothesis parameter {name} invalid: {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    PassSampled,
    FailWitnessed,
}

/// A concrete violation: `lhs` should not exceed `rhs` but does.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub site: usize,
    pub x: f64,
    /// Second point (other end of a midpoint pair, or the previous ladder rung).
    pub y: Option<f64>,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckVerdict {
    pub hypothesis: HypothesisId,
    pub verdict: Outcome,
    pub witness: Option<Witness>,
    pub samples: usize,
}

fn exceeds(lhs: f64, rhs: f64) -> bool {
    lhs > rhs + 1e-12 * (1.0 + rhs.abs())
}

/// `(lhs, rhs)` of the inequality `lhs ≤ rhs` claimed by `id` at the sample.
fn sides(id: HypothesisId, fam: &Family, p: &HypothesisParams, x: f64, y: Option<f64>) -> (f64, f64) {
    match id {
        HypothesisId::H4 => (p.c1 * x.abs().powf(p.mu) + p.c2, fam.primitive(x)),
        HypothesisId::H5 | HypothesisId::H10 => {
            let y = y.unwrap_or(x);
            (fam.primitive(0.5 * (x + y)), 0.5 * (fam.primitive(x) + fam.primitive(y)))
        }
        HypothesisId::H7 => (p.theta * (fam.primitive(x) - fam.primitive(0.0)), x * fam.value(x)),
        HypothesisId::H8 => (fam.value(x).abs(), p.beta1 * x.abs().powf(p.eta - 1.0) + p.beta2),
        HypothesisId::H9 => {
            let ratio = |v: f64| fam.value(v).abs() / v.abs();
            match y {
                // tail monotonicity: the ratio at x should not exceed the ratio at the larger rung y
                Some(y) => (ratio(x), ratio(y)),
                None => (ratio(x), p.vanishing_threshold),
            }
        }
    }
}

fn violated(id: HypothesisId, fam: &Family, p: &HypothesisParams, x: f64, y: Option<f64>) -> Option<Witness> {
    let (lhs, rhs) = sides(id, fam, p, x, y);
    // H7 also needs θ(F − F(0)) > 0
    let broken = exceeds(lhs, rhs) || (id == HypothesisId::H7 && lhs <= 0.0) || lhs.is_nan() || rhs.is_nan();
    broken.then_some(Witness { site: 0, x, y, lhs, rhs })
}

/// Recompute a witness against `nl`; true when it is still a strict violation.
pub fn recheck(nl: &Nonlinearity, params: &HypothesisParams, id: HypothesisId, w: &Witness) -> bool {
    if w.site >= nl.families().len() {
        return false;
    }
    violated(id, &nl.families()[w.site], params, w.x, w.y).is_some()
}

/// Magnitudes in `[lo, hi]`: powers of two from 2 upward, then downward from 1,
/// then `n` log-spaced and `n` uniform random values.
fn magnitudes(lo: f64, hi: f64, n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut out = Vec::new();
    let mut t = 2.0;
    while t <= hi {
        if t >= lo {
            out.push(t);
        }
        t *= 2.0;
    }
    let mut t = 1.0;
    while t >= lo {
        if t <= hi {
            out.push(t);
        }
        t *= 0.5;
    }
    if n > 1 {
        let (a, b) = (lo.ln(), hi.ln());
        out.extend((0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()));
    }
    out.extend((0..n).map(|_| rng.random_range(lo..=hi)));
    out
}

/// Sampling checker with a per-hypothesis witness cache: once a violation is
/// found it is reported again (after re-verification) regardless of the
/// sample budget.
#[derive(Debug, Clone, Default)]
pub struct HypothesisChecker {
    pub params: HypothesisParams,
    cache: HashMap<HypothesisId, Witness>,
}

impl HypothesisChecker {
    pub fn new(params: HypothesisParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            cache: HashMap::new(),
        })
    }

    pub fn cached(&self, id: HypothesisId) -> Option<&Witness> {
        self.cache.get(&id)
    }

    fn run<F>(&mut self, id: HypothesisId, nl: &Nonlinearity, per_site: F) -> CheckVerdict
    where
        F: Fn(usize, &Family, &HypothesisParams) -> (Option<Witness>, usize) + Sync,
    {
        if let Some(w) = self.cache.get(&id) {
            if recheck(nl, &self.params, id, w) {
                return CheckVerdict {
                    hypothesis: id,
                    verdict: Outcome::FailWitnessed,
                    witness: Some(w.clone()),
                    samples: 0,
                };
            }
        }
        let params = &self.params;
        let results: Vec<(Option<Witness>, usize)> = nl
            .families()
            .par_iter()
            .enumerate()
            .map(|(site, fam)| {
                let (w, n) = per_site(site, fam, params);
                (w.map(|w| Witness { site, ..w }), n)
            })
            .collect();
        let samples = results.iter().map(|r| r.1).sum();
        let witness = results.into_iter().find_map(|r| r.0);
        if let Some(w) = &witness {
            self.cache.insert(id, w.clone());
        }
        CheckVerdict {
            hypothesis: id,
            verdict: if witness.is_some() { Outcome::FailWitnessed } else { Outcome::PassSampled },
            witness,
            samples,
        }
    }

    fn scan(&mut self, id: HypothesisId, nl: &Nonlinearity, lo: f64, hi: f64) -> CheckVerdict {
        let seed = self.params.seed;
        self.run(id, nl, move |site, fam, p| {
            let mut rng = seeds::stream(seed, &format!("hypothesis-{id}"), site as u64);
            let mags = magnitudes(lo, hi, p.samples, &mut rng);
            let mut n = 0;
            for m in &mags {
                for x in [*m, -*m] {
                    n += 1;
                    if let Some(w) = violated(id, fam, p, x, None) {
                        return (Some(w), n);
                    }
                }
            }
            (None, n)
        })
    }

    /// Growth from below on `|x| ∈ [d, x_max]`.
    pub fn check_growth_h4(&mut self, nl: &Nonlinearity) -> CheckVerdict {
        let d = self.params.d;
        let hi = self.params.x_max.max(10.0 * d);
        self.scan(HypothesisId::H4, nl, d, hi)
    }

    /// Superlinearity with exponent `θ`.
    pub fn check_ar_h7(&mut self, nl: &Nonlinearity) -> CheckVerdict {
        let hi = self.params.x_max;
        self.scan(HypothesisId::H7, nl, hi * 1e-4, hi)
    }

    /// Growth from above.
    pub fn check_growth_h8(&mut self, nl: &Nonlinearity) -> CheckVerdict {
        let hi = self.params.x_max;
        self.scan(HypothesisId::H8, nl, hi * 1e-4, hi)
    }

    /// `|f(v)|/|v|` along `v = ±2^(−k)`, `k = 1..=rungs`: the last ratio must be
    /// below the threshold and the ratios non-increasing over the last quarter.
    pub fn check_vanishing_h9(&mut self, nl: &Nonlinearity) -> CheckVerdict {
        self.run(HypothesisId::H9, nl, |_, fam, p| {
            let rungs = p.ladder_rungs.max(2);
            let tail_from = rungs - (rungs / 4).max(1);
            let mut n = 0;
            for sign in [1.0, -1.0] {
                let v = |k: u32| sign * 0.5f64.powi(k as i32);
                for k in tail_from + 1..=rungs {
                    n += 1;
                    if let Some(w) = violated(HypothesisId::H9, fam, p, v(k), Some(v(k - 1))) {
                        return (Some(w), n);
                    }
                }
                n += 1;
                if let Some(w) = violated(HypothesisId::H9, fam, p, v(rungs), None) {
                    return (Some(w), n);
                }
            }
            (None, n)
        })
    }

    /// Midpoint convexity of `F` on symmetric pairs `(−s, s)` and random pairs.
    /// `id` is [`HypothesisId::H5`] or [`HypothesisId::H10`].
    pub fn check_convexity(&mut self, nl: &Nonlinearity, id: HypothesisId) -> CheckVerdict {
        let id = if id == HypothesisId::H10 { id } else { HypothesisId::H5 };
        let seed = self.params.seed;
        self.run(id, nl, move |site, fam, p| {
            let mut rng = seeds::stream(seed, &format!("hypothesis-{id}"), site as u64);
            let hi = p.x_max;
            let mut pairs: Vec<(f64, f64)> = std::iter::once(1.0)
                .chain(magnitudes(hi * 1e-6, hi, p.samples, &mut rng))
                .map(|s| (-s, s))
                .collect();
            for _ in 0..p.samples {
                pairs.push((rng.random_range(-hi..=hi), rng.random_range(-hi..=hi)));
            }
            for (k, &(x, y)) in pairs.iter().enumerate() {
                if let Some(w) = violated(id, fam, p, x, Some(y)) {
                    return (Some(w), k + 1);
                }
            }
            (None, pairs.len())
        })
    }

    /// H4, H5, H7, H8, H9, H10 in that order.
    pub fn check_all(&mut self, nl: &Nonlinearity) -> Vec<CheckVerdict> {
        vec![
            self.check_growth_h4(nl),
            self.check_convexity(nl, HypothesisId::H5),
            self.check_ar_h7(nl),
            self.check_growth_h8(nl),
            self.check_vanishing_h9(nl),
            self.check_convexity(nl, HypothesisId::H10),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn checker(params: HypothesisParams) -> HypothesisChecker {
        HypothesisChecker::new(params).unwrap()
    }

    fn quartic() -> Nonlinearity {
        Nonlinearity::power(1.0, 4.0, 0.0)
    }

    fn square() -> Nonlinearity {
        Nonlinearity::power(1.0, 2.0, 0.0)
    }

    #[test]
    fn h4_examples() {
        let mut c = checker(HypothesisParams::default());
        assert_eq!(c.check_growth_h4(&quartic()).verdict, Outcome::PassSampled);
        assert_eq!(c.check_growth_h4(&Nonlinearity::power(1.0, 4.0, 1.0)).verdict, Outcome::PassSampled);

        let mut c = checker(HypothesisParams { mu: 3.0, ..HypothesisParams::default() });
        let v = c.check_growth_h4(&square());
        let w = v.witness.unwrap();
        assert_eq!(w.x.abs(), 2.0);
        assert_eq!((w.rhs, w.lhs), (4.0, 8.0));
    }

    #[test]
    fn h7_examples() {
        let mut c = checker(HypothesisParams::default());
        assert_eq!(c.check_ar_h7(&quartic()).verdict, Outcome::PassSampled);
        let mut c = checker(HypothesisParams { theta: 4.5, ..HypothesisParams::default() });
        assert_eq!(c.check_ar_h7(&quartic()).verdict, Outcome::FailWitnessed);
        let mut c = checker(HypothesisParams { theta: 3.0, ..HypothesisParams::default() });
        let v = c.check_ar_h7(&square());
        assert_eq!(v.verdict, Outcome::FailWitnessed);
        let w = v.witness.unwrap();
        assert!(w.lhs > w.rhs);
    }

    #[test]
    fn h8_examples() {
        let mut c = checker(HypothesisParams::default());
        assert_eq!(c.check_growth_h8(&quartic()).verdict, Outcome::PassSampled);
        assert_eq!(c.check_growth_h8(&Nonlinearity::zero()).verdict, Outcome::PassSampled);
        let mut c = checker(HypothesisParams { beta1: 1.0, eta: 3.0, ..HypothesisParams::default() });
        let w = c.check_growth_h8(&quartic()).witness.unwrap();
        assert_eq!(w.x.abs(), 2.0);
        assert_eq!((w.lhs, w.rhs), (32.0, 4.0));
    }

    #[test]
    fn h9_examples() {
        let mut c = checker(HypothesisParams::default());
        assert_eq!(c.check_vanishing_h9(&quartic()).verdict, Outcome::PassSampled);
        // f = |x|^1.5·sign(x) from F = 0.4|x|^2.5
        assert_eq!(
            c.check_vanishing_h9(&Nonlinearity::power(0.4, 2.5, 0.0)).verdict,
            Outcome::PassSampled
        );
        // f = x
        let v = c.check_vanishing_h9(&Nonlinearity::power(0.5, 2.0, 0.0));
        assert_eq!(v.verdict, Outcome::FailWitnessed);
    }

    #[test]
    fn convexity_examples() {
        let mut c = checker(HypothesisParams::default());
        assert_eq!(c.check_convexity(&quartic(), HypothesisId::H5).verdict, Outcome::PassSampled);
        let v = c.check_convexity(&Nonlinearity::polynomial(vec![0.0, 0.0, -1.0]), HypothesisId::H5);
        let w = v.witness.unwrap();
        assert_eq!((w.x, w.y), (-1.0, Some(1.0)));

        let v = c.check_convexity(&Nonlinearity::polynomial(vec![0.0, 0.0, -0.01, 0.0, 1.0]), HypothesisId::H10);
        let w = v.witness.unwrap();
        assert!(w.x.abs() < 0.1);
    }

    #[test]
    fn witnesses_recheck() {
        let nl = square();
        let params = HypothesisParams { theta: 3.0, ..HypothesisParams::default() };
        let mut c = checker(params.clone());
        for v in c.check_all(&nl) {
            if let Some(w) = &v.witness {
                assert!(recheck(&nl, &params, v.hypothesis, w), "{}", v.hypothesis);
            }
        }
    }

    #[test]
    fn cached_witness_survives_larger_budgets() {
        let nl = Nonlinearity::polynomial(vec![0.0, 0.0, -0.01, 0.0, 1.0]);
        let mut c = checker(HypothesisParams { samples: 5, ..HypothesisParams::default() });
        let first = c.check_convexity(&nl, HypothesisId::H5);
        c.params.samples = 500;
        let second = c.check_convexity(&nl, HypothesisId::H5);
        assert_eq!(first.verdict, Outcome::FailWitnessed);
        assert_eq!(second.witness, first.witness);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(HypothesisChecker::new(HypothesisParams { theta: 2.0, ..HypothesisParams::default() }).is_err());
        assert!(HypothesisChecker::new(HypothesisParams { d: 0.0, ..HypothesisParams::default() }).is_err());
    }
}
