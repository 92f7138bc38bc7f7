use nalgebra::{DMatrix, DVector};

use super::{Hypersurface, Polynomial, Side};
use crate::error::{Error, Result};

/// Potential energy, possibly with independent polynomials on the two sides
/// of the hypersurface. Derivatives are with respect to chart coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    pub kind: String,
    pub plus: Polynomial,
    /// `None` means the same polynomial on both sides.
    pub minus: Option<Polynomial>,
}

impl Potential {
    pub fn zero(_n: usize) -> Self {
        Self { kind: "zero".into(), plus: Polynomial::zero(), minus: None }
    }

    /// `V = ½ k |x|²`.
    pub fn harmonic(n: usize, k: f64) -> Self {
        Self { kind: "harmonic".into(), plus: Polynomial::quadratic(n, k), minus: None }
    }

    pub fn polynomial(p: Polynomial) -> Self {
        Self { kind: "polynomial".into(), plus: p, minus: None }
    }

    pub fn piecewise(plus: Polynomial, minus: Polynomial) -> Self {
        Self { kind: "piecewise-polynomial".into(), plus, minus: Some(minus) }
    }

    fn poly(&self, side: Side) -> &Polynomial {
        match (side, &self.minus) {
            (Side::Minus, Some(m)) => m,
            _ => &self.plus,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.plus.is_zero() && self.minus.as_ref().is_none_or(|m| m.is_zero())
    }

    pub fn value(&self, x: &[f64], side: Side) -> f64 {
        self.poly(side).value(x)
    }

    /// Differential `dV` (a covector).
    pub fn grad(&self, x: &[f64], side: Side) -> DVector<f64> {
        self.poly(side).grad(x)
    }

    /// Coordinate second derivatives `∂_i ∂_j V` on the given side.
    pub fn hess(&self, x: &[f64], side: Side) -> DMatrix<f64> {
        self.poly(side).hess(x)
    }

    /// Checks that value and gradient agree from both sides at the given
    /// points of the hypersurface.
    pub fn check_c1(&self, points: &[Vec<f64>], tol: f64) -> Result<()> {
        let Some(minus) = &self.minus else { return Ok(()) };
        for y in points {
            let dv = (self.plus.value(y) - minus.value(y)).abs();
            let dg = (self.plus.grad(y) - minus.grad(y)).amax();
            if dv > tol || dg > tol {
                return Err(Error::NotC1(format!(
                    "at {y:?}: value jump {dv:e}, gradient jump {dg:e}"
                )));
            }
        }
        Ok(())
    }

    /// C¹ check at `count` sample points of `surface`.
    pub fn check_c1_on(&self, surface: &dyn Hypersurface, dim: usize, count: usize) -> Result<()> {
        if self.minus.is_none() {
            return Ok(());
        }
        let pts = surface.sample_points(dim, count);
        if pts.is_empty() {
            return Err(Error::NotC1("could not sample the hypersurface".into()));
        }
        self.check_c1(&pts, 1e-10)
    }
}

#[cfg(test)]
mod tests {
    use super::super::surface::LevelSet;
    use super::*;

    #[test]
    fn piecewise_c1_detection() {
        let wall = LevelSet::hyperplane(&[1.0, 0.0], 0.0);
        // x² on one side, x² + x³ on the other: C² break, C¹ fine
        let ok = Potential::piecewise(
            Polynomial::new(vec![(1.0, vec![2, 0])]),
            Polynomial::new(vec![(1.0, vec![2, 0]), (1.0, vec![3, 0])]),
        );
        ok.check_c1_on(&wall, 2, 16).unwrap();
        let bad = Potential::piecewise(
            Polynomial::new(vec![(1.0, vec![2, 0])]),
            Polynomial::new(vec![(1.0, vec![2, 0]), (0.3, vec![1, 0])]),
        );
        assert!(matches!(bad.check_c1_on(&wall, 2, 16), Err(Error::NotC1(_))));
    }

    #[test]
    fn one_sided_hessians() {
        let p = Potential::piecewise(
            Polynomial::new(vec![(1.0, vec![2, 0])]),
            Polynomial::new(vec![(1.0, vec![2, 0]), (1.0, vec![3, 0])]),
        );
        let x = [-0.5, 0.0];
        assert_eq!(p.hess(&x, Side::Plus)[(0, 0)], 2.0);
        assert!((p.hess(&x, Side::Minus)[(0, 0)] - (2.0 - 3.0)).abs() < 1e-15);
        let h = Potential::harmonic(2, 1.0).hess(&[0.3, 0.2], Side::Plus);
        assert_eq!(h, DMatrix::identity(2, 2));
    }
}
