use nalgebra::DMatrix;

use super::{fd_metric_derivs, Chart, Polynomial};

/// Flat metric `g = I` on R^n.
#[derive(Debug, Clone)]
pub struct Euclidean {
    pub n: usize,
}

impl Euclidean {
    pub fn new(n: usize) -> Self {
        Self { n }
    }
}

impl Chart for Euclidean {
    fn dim(&self) -> usize {
        self.n
    }
    fn name(&self) -> &str {
        "euclidean"
    }
    fn metric(&self, _x: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(self.n, self.n)
    }
    fn metric_derivs(&self, _x: &[f64]) -> Vec<DMatrix<f64>> {
        vec![DMatrix::zeros(self.n, self.n); self.n]
    }
    fn metric_second_derivs(&self, _x: &[f64]) -> Vec<Vec<DMatrix<f64>>> {
        vec![vec![DMatrix::zeros(self.n, self.n); self.n]; self.n]
    }
}

/// The flat plane in polar coordinates `(r, θ)`, `g = diag(1, r²)`.
#[derive(Debug, Clone, Copy)]
pub struct PolarFlat;

impl Chart for PolarFlat {
    fn dim(&self) -> usize {
        2
    }
    fn name(&self) -> &str {
        "polar-flat"
    }
    fn metric(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::dvector![1.0, x[0] * x[0]])
    }
    fn metric_derivs(&self, x: &[f64]) -> Vec<DMatrix<f64>> {
        vec![
            DMatrix::from_diagonal(&nalgebra::dvector![0.0, 2.0 * x[0]]),
            DMatrix::zeros(2, 2),
        ]
    }
    fn metric_second_derivs(&self, _x: &[f64]) -> Vec<Vec<DMatrix<f64>>> {
        let z = DMatrix::zeros(2, 2);
        vec![
            vec![DMatrix::from_diagonal(&nalgebra::dvector![0.0, 2.0]), z.clone()],
            vec![z.clone(), z],
        ]
    }
}

/// Unit sphere in polar coordinates `(θ, φ)`, `g = diag(1, sin²θ)`.
#[derive(Debug, Clone, Copy)]
pub struct SpherePolar;

impl Chart for SpherePolar {
    fn dim(&self) -> usize {
        2
    }
    fn name(&self) -> &str {
        "sphere-polar"
    }
    fn metric(&self, x: &[f64]) -> DMatrix<f64> {
        let s = x[0].sin();
        DMatrix::from_diagonal(&nalgebra::dvector![1.0, s * s])
    }
    fn metric_derivs(&self, x: &[f64]) -> Vec<DMatrix<f64>> {
        vec![
            DMatrix::from_diagonal(&nalgebra::dvector![0.0, (2.0 * x[0]).sin()]),
            DMatrix::zeros(2, 2),
        ]
    }
    fn metric_second_derivs(&self, x: &[f64]) -> Vec<Vec<DMatrix<f64>>> {
        let z = DMatrix::zeros(2, 2);
        vec![
            vec![DMatrix::from_diagonal(&nalgebra::dvector![0.0, 2.0 * (2.0 * x[0]).cos()]), z.clone()],
            vec![z.clone(), z],
        ]
    }
}

/// Conformally flat metric `g = e^{2φ(x)} I` with polynomial `φ`.
#[derive(Debug, Clone)]
pub struct Conformal {
    pub n: usize,
    pub phi: Polynomial,
}

impl Conformal {
    pub fn new(n: usize, phi: Polynomial) -> Self {
        Self { n, phi }
    }

    pub fn factor(&self, x: &[f64]) -> f64 {
        (2.0 * self.phi.value(x)).exp()
    }
}

impl Chart for Conformal {
    fn dim(&self) -> usize {
        self.n
    }
    fn name(&self) -> &str {
        "conformal"
    }
    fn metric(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(self.n, self.n) * self.factor(x)
    }
    fn metric_derivs(&self, x: &[f64]) -> Vec<DMatrix<f64>> {
        let f = self.factor(x);
        let dphi = self.phi.grad(x);
        (0..self.n).map(|k| DMatrix::identity(self.n, self.n) * (2.0 * dphi[k] * f)).collect()
    }
    fn metric_second_derivs(&self, x: &[f64]) -> Vec<Vec<DMatrix<f64>>> {
        let f = self.factor(x);
        let dphi = self.phi.grad(x);
        let hphi = self.phi.hess(x);
        (0..self.n)
            .map(|k| {
                (0..self.n)
                    .map(|l| {
                        DMatrix::identity(self.n, self.n)
                            * ((4.0 * dphi[k] * dphi[l] + 2.0 * hphi[(k, l)]) * f)
                    })
                    .collect()
            })
            .collect()
    }
}

/// Wraps a chart and discards its closed-form derivatives, so that every
/// derivative comes from central differences.
#[derive(Debug, Clone)]
pub struct FdOnly<C>(pub C);

impl<C: Chart> Chart for FdOnly<C> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn name(&self) -> &str {
        self.0.name()
    }
    fn metric(&self, x: &[f64]) -> DMatrix<f64> {
        self.0.metric(x)
    }
    fn metric_derivs(&self, x: &[f64]) -> Vec<DMatrix<f64>> {
        fd_metric_derivs(&self.0, x)
    }
}
