//! Hypersurfaces `Y = {ρ = 0}` and their normal geometry.
//!
//! Orientation: `N = g⁻¹dρ / |dρ|_g` points toward `ρ > 0`. The shape
//! operator is `S(u) = −∇_u N` and `II(u, v) = ⟨S(u), v⟩_g`. With this choice
//! the unit circle with `ρ = 1 − |x|` (inward normal) has `S(u) = u` and
//! `II(u, u) = +1` for unit tangent `u`.

use std::fmt::Debug;

use nalgebra::{DMatrix, DVector};

use super::{Chart, Connection, Polynomial, TOL_Y};
use crate::error::{Error, Result};

pub trait Hypersurface: Send + Sync + Debug {
    fn name(&self) -> &str;
    fn rho(&self, x: &[f64]) -> f64;
    fn grad_rho(&self, x: &[f64]) -> DVector<f64>;
    fn hess_rho(&self, x: &[f64]) -> DMatrix<f64>;

    /// Deterministic points of `Y` obtained by projecting a lattice onto it.
    fn sample_points(&self, dim: usize, count: usize) -> Vec<Vec<f64>> {
        lattice_samples(self, dim, count)
    }
}

fn lattice_samples<S: Hypersurface + ?Sized>(surf: &S, dim: usize, count: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(count);
    let mut seed = 0u64;
    while out.len() < count && seed < 64 * count as u64 {
        seed += 1;
        // low-discrepancy start points in [-2, 2]^n
        let mut x: Vec<f64> = (0..dim)
            .map(|i| {
                let a = ((seed as f64) * (0.618_033_988_75 + 0.414_213_562_37 * i as f64)).fract();
                4.0 * a - 2.0
            })
            .collect();
        let mut ok = false;
        for _ in 0..50 {
            let r = surf.rho(&x);
            if r.abs() < 1e-13 {
                ok = true;
                break;
            }
            let g = surf.grad_rho(&x);
            let gg = g.norm_squared();
            if gg < 1e-20 {
                break;
            }
            for i in 0..dim {
                x[i] -= r * g[i] / gg;
            }
        }
        if ok && x.iter().all(|v| v.abs() < 10.0) {
            out.push(x);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    Polynomial(Polynomial),
    /// `ρ = r0 − |x − c|`
    Sphere { center: Vec<f64>, r0: f64 },
}

/// Level set of a polynomial or of the distance to a point.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSet {
    kind: String,
    shape: Shape,
    orientation: f64,
}

impl LevelSet {
    /// `ρ = ⟨a, x⟩ − c`.
    pub fn hyperplane(a: &[f64], c: f64) -> Self {
        Self { kind: "hyperplane".into(), shape: Shape::Polynomial(Polynomial::affine(a, c)), orientation: 1.0 }
    }

    /// `ρ = r0 − |x − center|`, so the inside of the ball is `ρ > 0`.
    pub fn sphere(center: &[f64], r0: f64) -> Self {
        Self {
            kind: if center.len() == 2 { "circle" } else { "sphere-level" }.into(),
            shape: Shape::Sphere { center: center.to_vec(), r0 },
            orientation: 1.0,
        }
    }

    pub fn polynomial(p: Polynomial) -> Self {
        Self { kind: "polynomial".into(), shape: Shape::Polynomial(p), orientation: 1.0 }
    }

    /// Replaces `ρ` by `−ρ`, flipping the normal.
    pub fn flipped(mut self) -> Self {
        self.orientation = -self.orientation;
        self
    }
}

impl Hypersurface for LevelSet {
    fn name(&self) -> &str {
        &self.kind
    }

    fn rho(&self, x: &[f64]) -> f64 {
        self.orientation
            * match &self.shape {
                Shape::Polynomial(p) => p.value(x),
                Shape::Sphere { center, r0 } => {
                    r0 - x.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
                }
            }
    }

    fn grad_rho(&self, x: &[f64]) -> DVector<f64> {
        self.orientation
            * match &self.shape {
                Shape::Polynomial(p) => p.grad(x),
                Shape::Sphere { center, .. } => {
                    let d = DVector::from_iterator(x.len(), x.iter().zip(center).map(|(a, b)| a - b));
                    let r = d.norm();
                    -d / r
                }
            }
    }

    fn hess_rho(&self, x: &[f64]) -> DMatrix<f64> {
        self.orientation
            * match &self.shape {
                Shape::Polynomial(p) => p.hess(x),
                Shape::Sphere { center, .. } => {
                    let n = x.len();
                    let d = DVector::from_iterator(n, x.iter().zip(center).map(|(a, b)| a - b));
                    let r = d.norm();
                    let u = &d / r;
                    -(DMatrix::identity(n, n) - &u * u.transpose()) / r
                }
            }
    }

    fn sample_points(&self, dim: usize, count: usize) -> Vec<Vec<f64>> {
        match &self.shape {
            Shape::Sphere { center, r0 } => (0..count)
                .map(|k| {
                    let mut x = center.clone();
                    let a = std::f64::consts::TAU * (k as f64 + 0.5) / count as f64;
                    x[0] += r0 * a.cos();
                    if dim > 1 {
                        x[1] += r0 * a.sin();
                    }
                    x
                })
                .collect(),
            Shape::Polynomial(_) => lattice_samples(self, dim, count),
        }
    }
}

/// Normal geometry of `Y` at one of its points.
#[derive(Debug, Clone)]
pub struct SurfaceFrame {
    pub y: Vec<f64>,
    pub conn: Connection,
    pub normal: DVector<f64>,
    /// Matrix of the shape operator, `S(u) = shape * u` for tangent `u`.
    pub shape: DMatrix<f64>,
}

impl SurfaceFrame {
    pub fn at(chart: &dyn Chart, surf: &dyn Hypersurface, y: &[f64]) -> Result<Self> {
        let rho = surf.rho(y);
        if rho.abs() > TOL_Y {
            return Err(Error::OffSurface { rho });
        }
        Self::at_level(chart, surf, y)
    }

    /// Frame of the level set of `ρ` through `y`, without the on-surface check.
    pub fn at_level(chart: &dyn Chart, surf: &dyn Hypersurface, y: &[f64]) -> Result<Self> {
        let n = chart.dim();
        let conn = Connection::at(chart, y)?;
        let drho = surf.grad_rho(y);
        let hrho = surf.hess_rho(y);
        let un = &conn.g_inv * &drho;
        let s2 = drho.dot(&un);
        if !(s2 > 1e-24) {
            return Err(Error::DegenerateSurface { x: y.to_vec() });
        }
        let s = s2.sqrt();
        let normal = &un / s;
        let dg = chart.metric_derivs(y);
        // columns: ∂_k N
        let mut dn = DMatrix::zeros(n, n);
        for k in 0..n {
            let dun = -(&conn.g_inv * (&dg[k] * &un)) + &conn.g_inv * hrho.column(k);
            let ds2 = hrho.column(k).dot(&un) + drho.dot(&dun);
            let col = &dun / s - &un * (ds2 / (2.0 * s * s2));
            dn.set_column(k, &col);
        }
        let shape = -(dn + conn.along(&normal));
        Ok(Self { y: y.to_vec(), conn, normal, shape })
    }

    pub fn normal_component(&self, w: &DVector<f64>) -> f64 {
        self.conn.inner(w, &self.normal)
    }

    /// `(w_⊥, w_⊤)` with `w_⊥ = ⟨w, N⟩ N`.
    pub fn split(&self, w: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let perp = &self.normal * self.normal_component(w);
        let top = w - &perp;
        (perp, top)
    }

    pub fn tangent_part(&self, w: &DVector<f64>) -> DVector<f64> {
        w - &self.normal * self.normal_component(w)
    }

    pub fn shape_op(&self, u: &DVector<f64>) -> DVector<f64> {
        self.tangent_part(&(&self.shape * u))
    }

    pub fn second_form(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        self.conn.inner(&self.shape_op(u), v)
    }

    /// `v − 2⟨v, N⟩N`.
    pub fn reflect(&self, v: &DVector<f64>) -> DVector<f64> {
        v - &self.normal * (2.0 * self.normal_component(v))
    }

    /// Matrix of [`reflect`](Self::reflect).
    pub fn reflection_matrix(&self) -> DMatrix<f64> {
        let n = self.normal.len();
        DMatrix::identity(n, n) - 2.0 * &self.normal * (self.normal.transpose() * &self.conn.g)
    }

    fn check_tangent(&self, u: &DVector<f64>) -> Result<()> {
        let c = self.normal_component(u);
        if c.abs() > 1e-10 * self.conn.norm(u).max(1.0) {
            return Err(Error::NotTangent { normal: c });
        }
        Ok(())
    }
}

pub fn split_normal_tangent(
    chart: &dyn Chart,
    surf: &dyn Hypersurface,
    y: &[f64],
    w: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    Ok(SurfaceFrame::at(chart, surf, y)?.split(w))
}

pub fn second_fundamental_form(
    chart: &dyn Chart,
    surf: &dyn Hypersurface,
    y: &[f64],
    u: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<f64> {
    let f = SurfaceFrame::at(chart, surf, y)?;
    f.check_tangent(u)?;
    f.check_tangent(v)?;
    Ok(f.second_form(u, v))
}

pub fn shape_operator(
    chart: &dyn Chart,
    surf: &dyn Hypersurface,
    y: &[f64],
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    let f = SurfaceFrame::at(chart, surf, y)?;
    f.check_tangent(v)?;
    Ok(f.shape_op(v))
}
