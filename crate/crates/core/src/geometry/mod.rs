//! Metric, connection and curvature on a single coordinate chart, plus the
//! reflecting hypersurface and the potential.
//!
//! Curvature convention: `R(u,v)w` is chosen so that the Jacobi equation reads
//! `D²W + R(α̇,W)α̇ + ∇²V W = 0` and, on the unit sphere, `R(u,v)u = v` for
//! orthonormal `u, v`. In components
//! `(R(u,v)w)^l = v^i u^j w^k (∂_iΓ^l_jk − ∂_jΓ^l_ik + Γ^l_im Γ^m_jk − Γ^l_jm Γ^m_ik)`.

pub mod charts;
pub mod polynomial;
pub mod potential;
pub mod surface;

use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
pub use charts::{Conformal, Euclidean, FdOnly, PolarFlat, SpherePolar};
pub use polynomial::Polynomial;
pub use potential::Potential;
pub use surface::{Hypersurface, SurfaceFrame};

/// Finite-difference step for metric derivatives when no closed form exists.
pub const H_G: f64 = 1e-5;
/// Distance from the hypersurface accepted as "on the surface".
pub const TOL_Y: f64 = 1e-9;

/// A Riemannian metric on an open subset of R^n.
pub trait Chart: Send + Sync + Debug {
    fn dim(&self) -> usize;
    fn name(&self) -> &str;
    fn metric(&self, x: &[f64]) -> DMatrix<f64>;

    /// `out[k] = ∂_k g`.
    fn metric_derivs(&self, x: &[f64]) -> Vec<DMatrix<f64>> {
        fd_metric_derivs(self, x)
    }

    /// `out[k][l] = ∂_k ∂_l g`.
    fn metric_second_derivs(&self, x: &[f64]) -> Vec<Vec<DMatrix<f64>>> {
        let n = self.dim();
        let mut out = vec![vec![DMatrix::zeros(n, n); n]; n];
        let mut xp = x.to_vec();
        for l in 0..n {
            xp[l] = x[l] + H_G;
            let dp = self.metric_derivs(&xp);
            xp[l] = x[l] - H_G;
            let dm = self.metric_derivs(&xp);
            xp[l] = x[l];
            for k in 0..n {
                out[k][l] = (&dp[k] - &dm[k]) / (2.0 * H_G);
            }
        }
        out
    }
}

/// Central differences of the metric with step [`H_G`].
pub fn fd_metric_derivs<C: Chart + ?Sized>(chart: &C, x: &[f64]) -> Vec<DMatrix<f64>> {
    let n = chart.dim();
    let mut xp = x.to_vec();
    (0..n)
        .map(|k| {
            xp[k] = x[k] + H_G;
            let gp = chart.metric(&xp);
            xp[k] = x[k] - H_G;
            let gm = chart.metric(&xp);
            xp[k] = x[k];
            (gp - gm) / (2.0 * H_G)
        })
        .collect()
}

/// Which side of the hypersurface a segment lives on (`ρ > 0` is `Plus`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Plus => 1.0,
            Side::Minus => -1.0,
        }
    }

    pub fn flip(self) -> Side {
        match self {
            Side::Plus => Side::Minus,
            Side::Minus => Side::Plus,
        }
    }

    pub fn of(rho: f64) -> Side {
        if rho >= 0.0 { Side::Plus } else { Side::Minus }
    }
}

/// Metric, inverse metric and Christoffel symbols at one point.
/// `gamma[k][(i, j)] = Γ^k_ij`.
#[derive(Debug, Clone)]
pub struct Connection {
    pub g: DMatrix<f64>,
    pub g_inv: DMatrix<f64>,
    pub gamma: Vec<DMatrix<f64>>,
}

impl Connection {
    pub fn at(chart: &dyn Chart, x: &[f64]) -> Result<Self> {
        let g = chart.metric(x);
        let g_inv = invert_metric(&g, x)?;
        let dg = chart.metric_derivs(x);
        let gamma = gamma_from(&g_inv, &dg);
        Ok(Self { g, g_inv, gamma })
    }

    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn inner(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        (u.transpose() * &self.g * v)[0]
    }

    pub fn norm(&self, u: &DVector<f64>) -> f64 {
        self.inner(u, u).max(0.0).sqrt()
    }

    /// `Γ(u, v)^k = Γ^k_ij u^i v^j`.
    pub fn contract(&self, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.gamma.iter().map(|gk| (u.transpose() * gk * v)[0]))
    }

    /// Matrix `G` with `G w = Γ(v, w)`.
    pub fn along(&self, v: &DVector<f64>) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for k in 0..n {
            let row = v.transpose() * &self.gamma[k];
            for j in 0..n {
                m[(k, j)] = row[j];
            }
        }
        m
    }

    /// Raises a covector.
    pub fn sharp(&self, w: &DVector<f64>) -> DVector<f64> {
        &self.g_inv * w
    }
}

fn invert_metric(g: &DMatrix<f64>, x: &[f64]) -> Result<DMatrix<f64>> {
    let chol = g.clone().cholesky().ok_or_else(|| Error::DegenerateMetric { x: x.to_vec() })?;
    Ok(chol.inverse())
}

fn gamma_from(g_inv: &DMatrix<f64>, dg: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
    let n = g_inv.nrows();
    // lowered[l][(i, j)] = ½(∂_i g_jl + ∂_j g_il − ∂_l g_ij)
    let lowered: Vec<DMatrix<f64>> = (0..n)
        .map(|l| {
            DMatrix::from_fn(n, n, |i, j| 0.5 * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)]))
        })
        .collect();
    (0..n)
        .map(|k| {
            let mut m = DMatrix::zeros(n, n);
            for l in 0..n {
                let c = g_inv[(k, l)];
                if c != 0.0 {
                    m += &lowered[l] * c;
                }
            }
            m
        })
        .collect()
}

/// Christoffel symbols `Γ^k_ij` at `x`, as `out[k][(i, j)]`.
pub fn christoffel(chart: &dyn Chart, x: &[f64]) -> Result<Vec<DMatrix<f64>>> {
    Ok(Connection::at(chart, x)?.gamma)
}

/// `out[m][k][(i, j)] = ∂_m Γ^k_ij`, from the chart's second metric derivatives.
pub fn christoffel_derivs(chart: &dyn Chart, x: &[f64]) -> Result<Vec<Vec<DMatrix<f64>>>> {
    let n = chart.dim();
    let g = chart.metric(x);
    let g_inv = invert_metric(&g, x)?;
    let dg = chart.metric_derivs(x);
    let ddg = chart.metric_second_derivs(x);
    let lowered = |d: &[DMatrix<f64>], l: usize| -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |i, j| 0.5 * (d[i][(j, l)] + d[j][(i, l)] - d[l][(i, j)]))
    };
    let low0: Vec<DMatrix<f64>> = (0..n).map(|l| lowered(&dg, l)).collect();
    let mut out = Vec::with_capacity(n);
    for m in 0..n {
        let dginv = -(&g_inv * &dg[m] * &g_inv);
        let dd: Vec<DMatrix<f64>> = (0..n).map(|k| ddg[k][m].clone()).collect();
        let low1: Vec<DMatrix<f64>> = (0..n).map(|l| lowered(&dd, l)).collect();
        let per_k = (0..n)
            .map(|k| {
                let mut acc = DMatrix::zeros(n, n);
                for l in 0..n {
                    acc += &low0[l] * dginv[(k, l)] + &low1[l] * g_inv[(k, l)];
                }
                acc
            })
            .collect();
        out.push(per_k);
    }
    Ok(out)
}

/// Central-difference version of [`christoffel_derivs`] with step [`H_G`].
pub fn christoffel_derivs_fd(chart: &dyn Chart, x: &[f64]) -> Result<Vec<Vec<DMatrix<f64>>>> {
    let n = chart.dim();
    let mut xp = x.to_vec();
    let mut out = Vec::with_capacity(n);
    for m in 0..n {
        xp[m] = x[m] + H_G;
        let gp = christoffel(chart, &xp)?;
        xp[m] = x[m] - H_G;
        let gm = christoffel(chart, &xp)?;
        xp[m] = x[m];
        out.push(gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * H_G)).collect());
    }
    Ok(out)
}

/// Curvature data at a point: connection plus `∂Γ`.
#[derive(Debug, Clone)]
pub struct CurvaturePoint {
    pub conn: Connection,
    pub dgamma: Vec<Vec<DMatrix<f64>>>,
}

impl CurvaturePoint {
    pub fn at(chart: &dyn Chart, x: &[f64]) -> Result<Self> {
        Ok(Self { conn: Connection::at(chart, x)?, dgamma: christoffel_derivs(chart, x)? })
    }

    /// `R(u, v) w` in the convention of the module docs.
    pub fn riemann(&self, u: &DVector<f64>, v: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        let n = self.conn.dim();
        let gam = &self.conn.gamma;
        let d = &self.dgamma;
        let mut out = DVector::zeros(n);
        for l in 0..n {
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let c = v[i] * u[j] - u[i] * v[j];
                    if c == 0.0 {
                        continue;
                    }
                    let mut t = 0.0;
                    for k in 0..n {
                        let mut e = d[i][l][(j, k)];
                        for m in 0..n {
                            e += gam[l][(i, m)] * gam[m][(j, k)];
                        }
                        t += e * w[k];
                    }
                    s += c * t;
                }
            }
            out[l] = s;
        }
        out
    }

    /// Matrix `A` with `A w = R(v, w) v`.
    pub fn jacobi_operator(&self, v: &DVector<f64>) -> DMatrix<f64> {
        let n = self.conn.dim();
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            let mut e = DVector::zeros(n);
            e[i] = 1.0;
            a.set_column(i, &self.riemann(v, &e, v));
        }
        a
    }
}

/// `R(u, v) w` at `x`.
pub fn riemann(
    chart: &dyn Chart,
    x: &[f64],
    u: &DVector<f64>,
    v: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<DVector<f64>> {
    Ok(CurvaturePoint::at(chart, x)?.riemann(u, v, w))
}

/// Covariant Hessian of `V` as a (1,1) tensor: `g^{-1}(∂²V − Γ^m ∂_m V)`.
pub fn covariant_hessian(conn: &Connection, dv: &DVector<f64>, ddv: &DMatrix<f64>) -> DMatrix<f64> {
    let mut h = ddv.clone();
    for m in 0..conn.dim() {
        h -= &conn.gamma[m] * dv[m];
    }
    &conn.g_inv * h
}

/// Everything that defines the mechanical system.
#[derive(Debug, Clone)]
pub struct System {
    pub chart: Arc<dyn Chart>,
    pub surface: Option<Arc<dyn Hypersurface>>,
    /// When true the hypersurface is a boundary and transmission is forbidden.
    pub boundary: bool,
    pub potential: Potential,
}

impl System {
    pub fn new(chart: Arc<dyn Chart>) -> Self {
        let n = chart.dim();
        Self { chart, surface: None, boundary: false, potential: Potential::zero(n) }
    }

    pub fn with_surface(mut self, surface: Arc<dyn Hypersurface>, boundary: bool) -> Self {
        self.surface = Some(surface);
        self.boundary = boundary;
        self
    }

    pub fn with_potential(mut self, potential: Potential) -> Self {
        self.potential = potential;
        self
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    pub fn rho(&self, x: &[f64]) -> Option<f64> {
        self.surface.as_ref().map(|s| s.rho(x))
    }

    pub fn connection(&self, x: &[f64]) -> Result<Connection> {
        Connection::at(self.chart.as_ref(), x)
    }

    pub fn frame(&self, y: &[f64]) -> Result<SurfaceFrame> {
        let s = self.surface.as_ref().ok_or(Error::NoSurface)?;
        SurfaceFrame::at(self.chart.as_ref(), s.as_ref(), y)
    }

    /// `∇V` as a vector.
    pub fn grad_potential(&self, conn: &Connection, x: &[f64], side: Side) -> DVector<f64> {
        conn.sharp(&self.potential.grad(x, side))
    }

    pub fn hess_potential(&self, conn: &Connection, x: &[f64], side: Side) -> DMatrix<f64> {
        covariant_hessian(conn, &self.potential.grad(x, side), &self.potential.hess(x, side))
    }

    pub fn energy(&self, x: &[f64], v: &[f64], side: Side) -> Result<f64> {
        let conn = self.connection(x)?;
        let v = DVector::from_column_slice(v);
        Ok(0.5 * conn.inner(&v, &v) + self.potential.value(x, side))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn charts() -> Vec<(Arc<dyn Chart>, Vec<f64>)> {
        vec![
            (Arc::new(PolarFlat), vec![1.7, 0.4]),
            (Arc::new(SpherePolar), vec![1.1, 0.3]),
            (
                Arc::new(Conformal::new(
                    2,
                    Polynomial::new(vec![(0.1, vec![1, 0]), (-0.2, vec![1, 2]), (0.05, vec![3, 0])]),
                )),
                vec![0.3, -0.2],
            ),
        ]
    }

    #[test]
    fn euclidean_christoffels_vanish() {
        let g = christoffel(&Euclidean::new(3), &[0.3, 1.0, -2.0]).unwrap();
        assert!(g.iter().all(|m| m.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn polar_christoffels() {
        let g = christoffel(&PolarFlat, &[2.0, 0.7]).unwrap();
        assert!((g[0][(1, 1)] + 2.0).abs() < 1e-14);
        assert!((g[1][(0, 1)] - 0.5).abs() < 1e-14);
        assert!((g[1][(1, 0)] - 0.5).abs() < 1e-14);
        let fd = christoffel(&charts::FdOnly(PolarFlat), &[2.0, 0.7]).unwrap();
        assert!((fd[0][(1, 1)] + 2.0).abs() < 1e-8);
    }

    #[test]
    fn sphere_christoffel_at_equator() {
        let g = christoffel(&SpherePolar, &[std::f64::consts::FRAC_PI_2, 0.2]).unwrap();
        assert!(g[0][(1, 1)].abs() < 1e-15);
        let g = christoffel(&SpherePolar, &[1.0, 0.2]).unwrap();
        assert!((g[0][(1, 1)] + 1f64.sin() * 1f64.cos()).abs() < 1e-14);
    }

    #[test]
    fn degenerate_metric_is_reported() {
        let err = christoffel(&SpherePolar, &[0.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::DegenerateMetric { .. }));
    }

    #[test]
    fn analytic_gamma_derivatives_match_fd() {
        for (chart, x) in charts() {
            let a = christoffel_derivs(chart.as_ref(), &x).unwrap();
            let f = christoffel_derivs_fd(chart.as_ref(), &x).unwrap();
            for m in 0..2 {
                for k in 0..2 {
                    let d = (&a[m][k] - &f[m][k]).amax();
                    assert!(d < 1e-8, "{} m={m} k={k} d={d}", chart.name());
                }
            }
        }
    }

    #[test]
    fn metric_derivs_consistent() {
        for (chart, x) in charts() {
            let a = chart.metric_derivs(&x);
            let f = fd_metric_derivs(chart.as_ref(), &x);
            for k in 0..2 {
                let scale = a[k].amax().max(1.0);
                assert!((&a[k] - &f[k]).amax() / scale < 10.0 * H_G * H_G);
            }
        }
    }

    #[test]
    fn sphere_sectional_curvature_is_one() {
        let x = [0.9, 0.1];
        let cp = CurvaturePoint::at(&SpherePolar, &x).unwrap();
        let u = DVector::from_vec(vec![1.0, 0.0]);
        let v = DVector::from_vec(vec![0.0, 1.0 / x[0].sin()]);
        let r = cp.riemann(&u, &v, &u);
        assert!((&r - &v).amax() < 1e-12);
        // same check with finite-difference Γ derivatives
        let cfd = CurvaturePoint {
            conn: cp.conn.clone(),
            dgamma: christoffel_derivs_fd(&SpherePolar, &x).unwrap(),
        };
        let r = cfd.riemann(&u, &v, &u);
        assert!((cfd.conn.inner(&r, &v) - 1.0).abs() < 5e-6);
    }

    #[test]
    fn flat_curvature_vanishes() {
        let cp = CurvaturePoint::at(&PolarFlat, &[1.3, 0.2]).unwrap();
        let u = DVector::from_vec(vec![0.3, -1.0]);
        let v = DVector::from_vec(vec![1.2, 0.5]);
        let w = DVector::from_vec(vec![-0.4, 2.0]);
        assert!(cp.riemann(&u, &v, &w).amax() < 1e-12);
    }

    #[test]
    fn jacobi_operator_matches_riemann() {
        let cp = CurvaturePoint::at(&SpherePolar, &[1.2, 0.0]).unwrap();
        let v = DVector::from_vec(vec![0.6, 0.8]);
        let w = DVector::from_vec(vec![-0.3, 0.9]);
        let a = cp.jacobi_operator(&v);
        assert!((&a * &w - cp.riemann(&v, &w, &v)).amax() < 1e-14);
    }

    proptest! {
        #[test]
        fn gamma_symmetric_and_r_antisymmetric(
            r in 0.5f64..3.0, th in -3.0f64..3.0,
            u in proptest::collection::vec(-2.0f64..2.0, 2),
            v in proptest::collection::vec(-2.0f64..2.0, 2),
            w in proptest::collection::vec(-2.0f64..2.0, 2),
        ) {
            let pts: Vec<(Arc<dyn Chart>, Vec<f64>)> = vec![
                (Arc::new(PolarFlat), vec![r, th]),
                (Arc::new(SpherePolar), vec![0.3 + r * 0.8, th]),
                (Arc::new(Conformal::new(2, Polynomial::new(vec![(0.04, vec![1, 0]), (-0.03, vec![1, 2])]))), vec![r - 1.5, th / 3.0]),
            ];
            let (u, v, w) = (DVector::from_vec(u), DVector::from_vec(v), DVector::from_vec(w));
            for (chart, x) in pts {
                let cp = CurvaturePoint::at(chart.as_ref(), &x).unwrap();
                for gk in &cp.conn.gamma {
                    prop_assert!((gk - gk.transpose()).amax() == 0.0);
                }
                let s = cp.riemann(&u, &v, &w) + cp.riemann(&v, &u, &w);
                prop_assert!(s.amax() < 1e-12);
                prop_assert!(cp.riemann(&u, &u, &w).amax() < 1e-12);
            }
        }
    }
}
