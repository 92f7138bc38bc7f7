use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// One monomial `coeff * x_0^p_0 * ... * x_{n-1}^p_{n-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coeff: f64,
    pub powers: Vec<u32>,
}

/// Multivariate polynomial in chart coordinates.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Polynomial {
    pub terms: Vec<Term>,
}

fn pow_and_derivs(x: f64, p: u32) -> (f64, f64, f64) {
    match p {
        0 => (1.0, 0.0, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (x * x, 2.0 * x, 2.0),
        _ => {
            let pf = p as f64;
            (x.powi(p as i32), pf * x.powi(p as i32 - 1), pf * (pf - 1.0) * x.powi(p as i32 - 2))
        }
    }
}

impl Polynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn new(terms: Vec<(f64, Vec<u32>)>) -> Self {
        Self { terms: terms.into_iter().map(|(coeff, powers)| Term { coeff, powers }).collect() }
    }

    /// `0.5 * k * |x|^2` in `n` variables.
    pub fn quadratic(n: usize, k: f64) -> Self {
        let mut terms = Vec::with_capacity(n);
        for i in 0..n {
            let mut p = vec![0; n];
            p[i] = 2;
            terms.push(Term { coeff: 0.5 * k, powers: p });
        }
        Self { terms }
    }

    /// Affine polynomial `<a, x> - c`.
    pub fn affine(a: &[f64], c: f64) -> Self {
        let n = a.len();
        let mut terms = vec![Term { coeff: -c, powers: vec![0; n] }];
        for (i, &ai) in a.iter().enumerate() {
            if ai != 0.0 {
                let mut p = vec![0; n];
                p[i] = 1;
                terms.push(Term { coeff: ai, powers: p });
            }
        }
        Self { terms }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.coeff == 0.0)
    }

    pub fn max_dim(&self) -> usize {
        self.terms.iter().map(|t| t.powers.len()).max().unwrap_or(0)
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Polynomial { terms }
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        Polynomial {
            terms: self.terms.iter().map(|t| Term { coeff: s * t.coeff, powers: t.powers.clone() }).collect(),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                t.coeff
                    * t.powers.iter().enumerate().map(|(i, &p)| pow_and_derivs(x[i], p).0).product::<f64>()
            })
            .sum()
    }

    pub fn grad(&self, x: &[f64]) -> DVector<f64> {
        let n = x.len();
        let mut g = DVector::zeros(n);
        for t in &self.terms {
            let f: Vec<(f64, f64, f64)> =
                (0..n).map(|i| pow_and_derivs(x[i], t.powers.get(i).copied().unwrap_or(0))).collect();
            for k in 0..n {
                let mut prod = t.coeff;
                for (i, fi) in f.iter().enumerate() {
                    prod *= if i == k { fi.1 } else { fi.0 };
                }
                g[k] += prod;
            }
        }
        g
    }

    pub fn hess(&self, x: &[f64]) -> DMatrix<f64> {
        let n = x.len();
        let mut h = DMatrix::zeros(n, n);
        for t in &self.terms {
            let f: Vec<(f64, f64, f64)> =
                (0..n).map(|i| pow_and_derivs(x[i], t.powers.get(i).copied().unwrap_or(0))).collect();
            for k in 0..n {
                for l in k..n {
                    let mut prod = t.coeff;
                    for (i, fi) in f.iter().enumerate() {
                        prod *= if k == l && i == k {
                            fi.2
                        } else if i == k || i == l {
                            fi.1
                        } else {
                            fi.0
                        };
                    }
                    h[(k, l)] += prod;
                    if l != k {
                        h[(l, k)] += prod;
                    }
                }
            }
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_match_finite_differences() {
        let p = Polynomial::new(vec![
            (1.5, vec![3, 1]),
            (-0.7, vec![0, 2]),
            (0.2, vec![1, 0]),
            (2.0, vec![2, 2]),
        ]);
        let x = [0.3, -0.8];
        let g = p.grad(&x);
        let h = p.hess(&x);
        let e = 1e-6;
        for k in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[k] += e;
            xm[k] -= e;
            let fd = (p.value(&xp) - p.value(&xm)) / (2.0 * e);
            assert!((fd - g[k]).abs() < 1e-8);
            let gd = (p.grad(&xp) - p.grad(&xm)) / (2.0 * e);
            for l in 0..2 {
                assert!((gd[l] - h[(l, k)]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn quadratic_has_identity_hessian() {
        let p = Polynomial::quadratic(3, 2.0);
        assert_eq!(p.hess(&[1.0, 2.0, 3.0]), DMatrix::identity(3, 3) * 2.0);
        assert!((p.value(&[1.0, 1.0, 1.0]) - 3.0).abs() < 1e-15);
    }
}
