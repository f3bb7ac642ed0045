//! Site-wise nonlinearities `f((i,j),·)` with their primitives `F((i,j),·)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One scalar family. `primitive` is `F`, `value` is `f = F′`, `derivative` is `f′`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Family {
    /// `F = c₁|x|^μ + c₂`, `f = c₁μ|x|^(μ−1)·sign(x)`.
    Power {
        c1: f64,
        mu: f64,
        #[serde(default)]
        c2: f64,
    },
    /// `f = a·x^(2k+1)`, `F = a·x^(2k+2)/(2k+2)`.
    OddPower { a: f64, k: u32 },
    /// `F = Σ coeffs[p]·x^p`.
    Polynomial { coeffs: Vec<f64> },
}

impl Family {
    pub fn zero() -> Self {
        Family::Polynomial { coeffs: vec![] }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |x: f64, name: &str| {
            if x.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!("{name} must be finite")))
            }
        };
        match self {
            Family::Power { c1, mu, c2 } => {
                finite(*c1, "c1")?;
                finite(*c2, "c2")?;
                if !(*mu > 1.0 && mu.is_finite()) {
                    return Err(Error::InvalidInput(format!(
                        "power family needs mu > 1 for a continuous f (got {mu})"
                    )));
                }
            }
            Family::OddPower { a, .. } => finite(*a, "a")?,
            Family::Polynomial { coeffs } => {
                for c in coeffs {
                    finite(*c, "polynomial coefficient")?;
                }
            }
        }
        Ok(())
    }

    pub fn primitive(&self, x: f64) -> f64 {
        match self {
            Family::Power { c1, mu, c2 } => c1 * x.abs().powf(*mu) + c2,
            Family::OddPower { a, k } => {
                let p = 2 * k + 2;
                a * x.powi(p as i32) / p as f64
            }
            Family::Polynomial { coeffs } => horner(coeffs.iter().rev().copied(), x),
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match self {
            Family::Power { c1, mu, .. } => {
                if x == 0.0 {
                    0.0
                } else {
                    c1 * mu * x.abs().powf(mu - 1.0) * x.signum()
                }
            }
            Family::OddPower { a, k } => a * x.powi(2 * *k as i32 + 1),
            Family::Polynomial { coeffs } => horner(
                coeffs
                    .iter()
                    .enumerate()
                    .skip(1)
                    .rev()
                    .map(|(p, c)| p as f64 * c),
                x,
            ),
        }
    }

    /// `f′(x)` when a closed form exists at `x`.
    pub fn derivative(&self, x: f64) -> Option<f64> {
        match self {
            Family::Power { c1, mu, .. } => {
                if *mu >= 2.0 {
                    if *mu == 2.0 {
                        Some(2.0 * c1)
                    } else {
                        Some(c1 * mu * (mu - 1.0) * x.abs().powf(mu - 2.0))
                    }
                } else if x != 0.0 {
                    Some(c1 * mu * (mu - 1.0) * x.abs().powf(mu - 2.0))
                } else {
                    None
                }
            }
            Family::OddPower { a, k } => {
                let p = 2 * *k + 1;
                Some(if p == 1 {
                    *a
                } else {
                    a * p as f64 * x.powi(p as i32 - 1)
                })
            }
            Family::Polynomial { coeffs } => Some(horner(
                coeffs
                    .iter()
                    .enumerate()
                    .skip(2)
                    .rev()
                    .map(|(p, c)| (p * (p - 1)) as f64 * c),
                x,
            )),
        }
    }

    /// True when `f` is odd (equivalently `F − F(0)` is even).
    pub fn is_odd(&self) -> bool {
        match self {
            Family::Power { .. } | Family::OddPower { .. } => true,
            Family::Polynomial { coeffs } => {
                coeffs.iter().skip(1).step_by(2).all(|&c| c == 0.0)
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Family::Power { c1, .. } => *c1 == 0.0,
            Family::OddPower { a, .. } => *a == 0.0,
            Family::Polynomial { coeffs } => coeffs.iter().skip(1).all(|&c| c == 0.0),
        }
    }

    /// Whether `s ↦ f(±√s)²` is convex, nondecreasing and zero at `s = 0`.
    /// Then `Σ f(x_k)²` over a Euclidean ball peaks at a vertex `±ρe_k`.
    pub(crate) fn squared_value_concentrates(&self) -> bool {
        match self {
            Family::Power { mu, .. } => *mu >= 2.0,
            Family::OddPower { .. } => true,
            Family::Polynomial { .. } => self.is_zero(),
        }
    }
}

fn horner(coeffs_high_to_low: impl Iterator<Item = f64>, x: f64) -> f64 {
    coeffs_high_to_low.fold(0.0, |acc, c| acc * x + c)
}

/// A nonlinearity over all grid sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Nonlinearity {
    /// Same family at every site.
    Uniform(Family),
    /// One family per site in canonical flattening.
    SiteDependent(Vec<Family>),
}

impl Nonlinearity {
    pub fn uniform(family: Family) -> Self {
        Nonlinearity::Uniform(family)
    }

    /// `F = c₁|x|^μ + c₂`.
    pub fn power(c1: f64, mu: f64, c2: f64) -> Self {
        Nonlinearity::Uniform(Family::Power { c1, mu, c2 })
    }

    /// `F = Σ coeffs[p]·x^p`.
    pub fn polynomial(coeffs: Vec<f64>) -> Self {
        Nonlinearity::Uniform(Family::Polynomial { coeffs })
    }

    pub fn zero() -> Self {
        Nonlinearity::Uniform(Family::zero())
    }

    /// Validate the families and, for site tables, the table length.
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Nonlinearity::Uniform(f) => f.validate(),
            Nonlinearity::SiteDependent(table) => {
                if table.len() != dim {
                    return Err(Error::ShapeMismatch {
                        expected: format!("{dim} site families"),
                        found: format!("{} site families", table.len()),
                    });
                }
                table.iter().try_for_each(Family::validate)
            }
        }
    }

    pub fn family(&self, site: usize) -> &Family {
        match self {
            Nonlinearity::Uniform(f) => f,
            Nonlinearity::SiteDependent(table) => &table[site],
        }
    }

    /// Distinct families, one per site for tables.
    pub fn families(&self) -> &[Family] {
        match self {
            Nonlinearity::Uniform(f) => std::slice::from_ref(f),
            Nonlinearity::SiteDependent(table) => table,
        }
    }

    pub fn value(&self, site: usize, x: f64) -> f64 {
        self.family(site).value(x)
    }

    pub fn primitive(&self, site: usize, x: f64) -> f64 {
        self.family(site).primitive(x)
    }

    pub fn derivative(&self, site: usize, x: f64) -> Option<f64> {
        self.family(site).derivative(x)
    }

    /// Central finite difference of `f`, step `max(1e-6, 1e-6·|x|)`.
    pub fn derivative_fd(&self, site: usize, x: f64) -> f64 {
        let h = (1e-6 * x.abs()).max(1e-6);
        (self.value(site, x + h) - self.value(site, x - h)) / (2.0 * h)
    }

    /// True if every family has a closed-form `f′` on all of ℝ.
    pub fn derivative_available(&self) -> bool {
        self.families().iter().all(|f| match f {
            Family::Power { mu, .. } => *mu >= 2.0,
            _ => true,
        })
    }

    pub fn is_odd(&self) -> bool {
        self.families().iter().all(Family::is_odd)
    }

    pub fn is_zero(&self) -> bool {
        self.families().iter().all(Family::is_zero)
    }
}
