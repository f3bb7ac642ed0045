//! The discrete variational problem `J(u) = ½(u,Au) − λΣF((i,j),u(i,j))`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::{GridShape, GridVector, OperatorA};
use crate::nonlinearity::Nonlinearity;

/// Energy, gradient and Hessian action of the system `Au = λf(u)`.
///
/// Immutable after construction; cheap to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct GridProblem {
    shape: GridShape,
    operator: OperatorA,
    nonlinearity: Nonlinearity,
    lambda: f64,
    fd_fallback: bool,
}

impl GridProblem {
    pub fn new(operator: OperatorA, nonlinearity: Nonlinearity, lambda: f64) -> Result<Self> {
        let shape = operator.shape();
        nonlinearity.validate(shape.dim())?;
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "lambda must be positive and finite (got {lambda})"
            )));
        }
        Ok(Self {
            shape,
            operator,
            nonlinearity,
            lambda,
            fd_fallback: true,
        })
    }

    /// Unscaled grid problem on an `m × n` grid.
    pub fn on_grid(m: usize, n: usize, nonlinearity: Nonlinearity, lambda: f64) -> Result<Self> {
        let op = OperatorA::new(GridShape::new(m, n)?, 1.0)?;
        Self::new(op, nonlinearity, lambda)
    }

    /// Toggle the finite-difference fallback for `f′`.
    pub fn with_fd_fallback(mut self, enabled: bool) -> Self {
        self.fd_fallback = enabled;
        self
    }

    /// Same problem at another `λ`.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(self.operator.clone(), self.nonlinearity.clone(), lambda)
            .map(|p| p.with_fd_fallback(self.fd_fallback))
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn dim(&self) -> usize {
        self.shape.dim()
    }

    pub fn operator(&self) -> &OperatorA {
        &self.operator
    }

    pub fn nonlinearity(&self) -> &Nonlinearity {
        &self.nonlinearity
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn wrap(&self, values: DVector<f64>) -> GridVector {
        GridVector::from_dvector(self.shape, values).expect("dimension owned by problem")
    }

    /// `f(u)` componentwise.
    pub fn nonlinear_term(&self, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(u.len(), |k, _| self.nonlinearity.value(k, u[k]))
    }

    /// `ΣF((i,j), u(i,j))`.
    pub fn potential(&self, u: &DVector<f64>) -> f64 {
        u.iter()
            .enumerate()
            .map(|(k, &x)| self.nonlinearity.primitive(k, x))
            .sum()
    }

    pub fn energy_vec(&self, u: &DVector<f64>) -> f64 {
        0.5 * self.operator.quadratic_form(u) - self.lambda * self.potential(u)
    }

    /// `J(0) = −λΣF(·,0)`; nonzero only through constant offsets in `F`.
    pub fn energy_at_zero(&self) -> f64 {
        self.energy_vec(&DVector::zeros(self.dim()))
    }

    pub fn gradient_vec(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut g = self.operator.apply_vec(u);
        for (k, gk) in g.iter_mut().enumerate() {
            *gk -= self.lambda * self.nonlinearity.value(k, u[k]);
        }
        g
    }

    /// Euler–Lagrange residual `|Au − λf(u)|₂`.
    pub fn residual_vec(&self, u: &DVector<f64>) -> f64 {
        self.gradient_vec(u).norm()
    }

    /// `f′((i,j), u(i,j))` for every site, with the finite-difference fallback
    /// where no closed form applies.
    pub fn curvature_vec(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        let mut d = DVector::zeros(u.len());
        for k in 0..u.len() {
            d[k] = match self.nonlinearity.derivative(k, u[k]) {
                Some(v) => v,
                None if self.fd_fallback => self.nonlinearity.derivative_fd(k, u[k]),
                None => return Err(Error::DerivativeUnavailable),
            };
        }
        Ok(d)
    }

    pub fn hessian_apply_vec(&self, u: &DVector<f64>, w: &DVector<f64>) -> Result<DVector<f64>> {
        let curv = self.curvature_vec(u)?;
        let mut out = self.operator.apply_vec(w);
        for k in 0..w.len() {
            out[k] -= self.lambda * curv[k] * w[k];
        }
        Ok(out)
    }

    /// Dense Hessian `A − λ·diag(f′(u))`, subject to the dense cap.
    pub fn hessian_dense(&self, u: &DVector<f64>) -> Result<DMatrix<f64>> {
        let curv = self.curvature_vec(u)?;
        let mut h = self.operator.to_dense()?;
        for k in 0..u.len() {
            h[(k, k)] -= self.lambda * curv[k];
        }
        Ok(h)
    }

    pub fn energy(&self, u: &GridVector) -> Result<f64> {
        self.shape.check(&u.shape())?;
        Ok(self.energy_vec(u.values()))
    }

    pub fn gradient(&self, u: &GridVector) -> Result<GridVector> {
        self.shape.check(&u.shape())?;
        Ok(self.wrap(self.gradient_vec(u.values())))
    }

    pub fn hessian_apply(&self, u: &GridVector, w: &GridVector) -> Result<GridVector> {
        self.shape.check(&u.shape())?;
        self.shape.check(&w.shape())?;
        Ok(self.wrap(self.hessian_apply_vec(u.values(), w.values())?))
    }
}
