//! The second variation `J''` of the action along a reflected path, and its
//! index and nullity on spaces of broken Jacobi fields.
//!
//! `J''(W, Z)` is evaluated in differentiated form,
//!
//! ```text
//! −∫ ⟨D_t²W + R(α̇, W)α̇ + ∇²V W, Z⟩
//!   + Σ_refl [ −⟨ΔD_tW, Z̄⟩ + 2 (D_tW)̄₁ Z₁⁻ + 2 W₁⁻ Z₁⁻ (∇V)₁ / α̇₁⁻
//!              + 2 α̇₁⁻ ⟨S(∂c), Z̄⟩ − 2 II(∂c, α̇_⊤) Z₁⁻ ]
//!   − Σ_kinks,breaks ⟨ΔD_tW, Z⟩
//! ```
//!
//! with the extra term `−⟨D_tW(0) − D_tW(T), Z(0)⟩` for closed paths. The
//! energy form, `∫ ⟨D_tW, D_tZ⟩ − ⟨(R_α̇ + ∇²V) W, Z⟩` plus
//! `Σ_refl [2 W₁ Z₁ (∇V)₁ / α̇₁ + 2 α̇₁ II(∂c_W, ∂c_Z)]`, agrees with it on
//! admissible fields and is used for positivity checks.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize, Serializer};

use crate::dynamics::{EventKind, Limit, ReflectedPath};
use crate::error::{Error, Result};
use crate::fields::{mirror_frames, quadrature_cells, Jet, PathPoint, VectorField};
use crate::geometry::SurfaceFrame;
use crate::jacobi::{conjugate_points, ConjugatePoint, JacobiField, JacobiFlow};
use crate::ode::GAUSS4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    Fixed,
    Periodic,
}

/// Default number of node gaps.
pub const K0: usize = 8;

/// Quadrature cells are at most `T / CELLS_PER_PATH` long.
const CELLS_PER_PATH: f64 = 200.0;

struct Reflection {
    frame: SurfaceFrame,
    a: f64,
    v_top: DVector<f64>,
    grad_v1: f64,
}

impl Reflection {
    fn impact(&self, w_minus: &DVector<f64>) -> (f64, DVector<f64>) {
        let w1 = self.frame.normal_component(w_minus);
        (w1, self.frame.tangent_part(w_minus) - &self.v_top * (w1 / self.a))
    }
}

struct Cut {
    left: PathPoint,
    right: PathPoint,
    reflection: Option<Reflection>,
}

/// Path data at every quadrature node and every break or event time in
/// `[0, end]`, shared by all fields evaluated on one partition.
pub struct Sampler {
    quad: Vec<(f64, PathPoint)>,
    cuts: Vec<Cut>,
    start: PathPoint,
    finish: PathPoint,
}

/// Jets of one field at the sample points of a [`Sampler`].
pub struct Samples {
    quad: Vec<Option<Jet>>,
    cuts: Vec<(Jet, Jet)>,
    start: Jet,
    finish: Jet,
}

impl Sampler {
    pub fn new(path: &ReflectedPath, end: f64, breaks: &[f64]) -> Result<Self> {
        let tol = 1e-12 * end.max(1.0);
        let cells = quadrature_cells(path, breaks, Some((0.0, end)), path.total_time / CELLS_PER_PATH);
        let mut quad = Vec::with_capacity(4 * cells.len());
        for (a, b) in cells {
            let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
            for (xi, w) in GAUSS4 {
                quad.push((w * half, PathPoint::at(path, mid + half * xi, Limit::Right)?));
            }
        }
        let mut times: Vec<f64> = breaks.iter().copied().chain(path.event_times()).filter(|t| *t > tol && *t < end - tol).collect();
        times.sort_by(|a, b| a.total_cmp(b));
        times.dedup_by(|a, b| (*a - *b).abs() < tol);
        let mut cuts = Vec::with_capacity(times.len());
        for t in times {
            let event = path.events.iter().find(|e| (e.time - t).abs() < tol);
            let (t, reflection) = match event {
                Some(e) if e.kind == EventKind::Reflection => {
                    let frame = path.system.frame(&e.point)?;
                    let a = frame.normal_component(&e.v_in);
                    let v_top = frame.tangent_part(&e.v_in);
                    let g = path.system.grad_potential(&frame.conn, &e.point, e.side_before);
                    let grad_v1 = frame.normal_component(&g);
                    (e.time, Some(Reflection { frame, a, v_top, grad_v1 }))
                }
                Some(e) => (e.time, None),
                None => (t, None),
            };
            cuts.push(Cut { left: PathPoint::at(path, t, Limit::Left)?, right: PathPoint::at(path, t, Limit::Right)?, reflection });
        }
        Ok(Self {
            quad,
            cuts,
            start: PathPoint::at(path, 0.0, Limit::Right)?,
            finish: PathPoint::at(path, end, Limit::Left)?,
        })
    }

    pub fn sample(&self, field: &dyn VectorField) -> Samples {
        let sup = field.support();
        let inside = |t: f64| sup.is_none_or(|(a, b)| t >= a - 1e-12 && t <= b + 1e-12);
        let n = self.start.x.len();
        let at = |pp: &PathPoint| if inside(pp.t) { field.jet(pp) } else { Jet::zeros(n) };
        Samples {
            quad: self.quad.iter().map(|(_, pp)| inside(pp.t).then(|| field.jet(pp))).collect(),
            cuts: self.cuts.iter().map(|c| (at(&c.left), at(&c.right))).collect(),
            start: at(&self.start),
            finish: at(&self.finish),
        }
    }

    /// `J''(W, Z)` in differentiated form.
    pub fn second_variation(&self, w: &Samples, z: &Samples, bc: Boundary) -> f64 {
        let mut integral = 0.0;
        for (((wt, pp), wj), zj) in self.quad.iter().zip(&w.quad).zip(&z.quad) {
            if let (Some(wj), Some(zj)) = (wj, zj) {
                let r = &wj.ddw + (&pp.jac_op + &pp.hess) * &wj.w;
                integral += wt * pp.inner(&r, &zj.w);
            }
        }
        let mut boundary = 0.0;
        for (c, ((wl, wr), (zl, zr))) in self.cuts.iter().zip(w.cuts.iter().zip(&z.cuts)) {
            let zbar = 0.5 * (&zl.w + &zr.w);
            let jump = &wr.dw - &wl.dw;
            boundary -= c.left.inner(&jump, &zbar);
            if let Some(r) = &c.reflection {
                let f = &r.frame;
                let (w1, dc) = r.impact(&wl.w);
                let z1 = f.normal_component(&zl.w);
                let dbar1 = 0.5 * f.normal_component(&(&wl.dw + &wr.dw));
                boundary += 2.0 * dbar1 * z1 + 2.0 * w1 * z1 * r.grad_v1 / r.a + 2.0 * r.a * f.conn.inner(&f.shape_op(&dc), &zbar)
                    - 2.0 * f.second_form(&dc, &r.v_top) * z1;
            }
        }
        if bc == Boundary::Periodic {
            boundary -= self.start.inner(&(&w.start.dw - &w.finish.dw), &z.start.w);
        }
        -integral + boundary
    }

    /// The energy form.
    pub fn energy(&self, w: &Samples, z: &Samples) -> f64 {
        let mut total = 0.0;
        for (((wt, pp), wj), zj) in self.quad.iter().zip(&w.quad).zip(&z.quad) {
            if let (Some(wj), Some(zj)) = (wj, zj) {
                let aw = (&pp.jac_op + &pp.hess) * &wj.w;
                total += wt * (pp.inner(&wj.dw, &zj.dw) - pp.inner(&aw, &zj.w));
            }
        }
        for (c, ((wl, _), (zl, _))) in self.cuts.iter().zip(w.cuts.iter().zip(&z.cuts)) {
            if let Some(r) = &c.reflection {
                let (w1, dcw) = r.impact(&wl.w);
                let (z1, dcz) = r.impact(&zl.w);
                total += 2.0 * w1 * z1 * r.grad_v1 / r.a + 2.0 * r.a * r.frame.second_form(&dcw, &dcz);
            }
        }
        total
    }

    /// Largest violation of the admissibility conditions: `Z⁺ = Q Z⁻` at
    /// reflections, continuity elsewhere, and the boundary condition.
    pub fn admissibility_defect(&self, s: &Samples, bc: Boundary) -> f64 {
        let mut worst: f64 = 0.0;
        for (c, (l, r)) in self.cuts.iter().zip(&s.cuts) {
            let expected = match &c.reflection {
                Some(refl) => refl.frame.reflect(&l.w),
                None => l.w.clone(),
            };
            worst = worst.max((expected - &r.w).amax());
        }
        match bc {
            Boundary::Fixed => worst.max(s.start.w.amax()).max(s.finish.w.amax()),
            Boundary::Periodic => worst.max((&s.start.w - &s.finish.w).amax()),
        }
    }

    fn scale(&self, s: &Samples) -> f64 {
        s.quad.iter().flatten().map(|j| j.w.amax()).fold(1.0, f64::max)
    }
}

fn sampler_for(path: &ReflectedPath, fields: &[&dyn VectorField], bc: Boundary) -> Result<(Sampler, Vec<Samples>)> {
    if bc == Boundary::Periodic {
        let gap = (path.position(0.0) - path.position(path.total_time)).amax();
        if gap > 1e-6 {
            return Err(Error::InvalidField(format!("periodic boundary condition on an open path (closure gap {gap:e})")));
        }
    }
    let mut breaks: Vec<f64> = fields.iter().flat_map(|f| f.breaks()).collect();
    breaks.sort_by(|a, b| a.total_cmp(b));
    let sampler = Sampler::new(path, path.total_time, &breaks)?;
    let samples: Vec<Samples> = fields.iter().map(|f| sampler.sample(*f)).collect();
    for s in &samples {
        let defect = sampler.admissibility_defect(s, bc);
        if defect > 1e-7 * sampler.scale(s) {
            return Err(Error::InvalidField(format!("field violates the {bc:?} admissibility conditions by {defect:e}")));
        }
    }
    Ok((sampler, samples))
}

/// `J''(W, Z)` for admissible fields under the boundary condition `bc`.
pub fn second_variation(path: &ReflectedPath, w: &dyn VectorField, z: &dyn VectorField, bc: Boundary) -> Result<f64> {
    let (sampler, s) = sampler_for(path, &[w, z], bc)?;
    Ok(sampler.second_variation(&s[0], &s[1], bc))
}

/// The energy form of `W, Z`; equal to [`second_variation`] on admissible fields.
pub fn energy_form(path: &ReflectedPath, w: &dyn VectorField, z: &dyn VectorField, bc: Boundary) -> Result<f64> {
    let (sampler, s) = sampler_for(path, &[w, z], bc)?;
    Ok(sampler.energy(&s[0], &s[1]))
}

/// Uniform nodes on `[0, end]`, with interior nodes moved away from events.
pub fn place_nodes(path: &ReflectedPath, end: f64, k: usize) -> Vec<f64> {
    let h = end / k as f64;
    let events = path.event_times();
    let mut nodes: Vec<f64> = (0..=k).map(|j| end * j as f64 / k as f64).collect();
    for node in nodes.iter_mut().take(k).skip(1) {
        for _ in 0..4 {
            match events.iter().find(|e| (*node - **e).abs() < 0.1 * h) {
                Some(e) => *node = if *node >= *e { e + 0.25 * h } else { e - 0.25 * h },
                None => break,
            }
        }
    }
    nodes
}

/// Map from boundary values `[W(s); W(e)]` to the coefficient vector of the
/// Jacobi field on `[s, e]` taking them.
pub fn gap_map(flow: &JacobiFlow, s: f64, e: f64) -> Result<DMatrix<f64>> {
    let n = flow.dim();
    let p = flow.propagator(s, e)?;
    let pwd = p.view((0, n), (n, n)).into_owned();
    let scale = p.view((0, n), (2 * n, n)).into_owned().singular_values().max();
    let ratio = pwd.clone().singular_values().min() / scale;
    if ratio < 1e-6 {
        return Err(Error::RefineNodes { gap: 0, reason: format!("conjugate point inside the gap (relative singular value {ratio:e})") });
    }
    let inv = pwd.try_inverse().ok_or_else(|| Error::RefineNodes { gap: 0, reason: "singular boundary map".into() })?;
    let pww = p.view((0, 0), (n, n)).into_owned();
    // [ws; we] ↦ (W(s), D_tW(s)) = (ws, P_WD⁻¹ (we − P_WW ws))
    let mut data = DMatrix::zeros(2 * n, 2 * n);
    data.view_mut((0, 0), (n, n)).fill_with_identity();
    data.view_mut((n, 0), (n, n)).copy_from(&(-(&inv * &pww)));
    data.view_mut((n, n), (n, n)).copy_from(&inv);
    let psi_inv = flow.fundamental(s, Limit::Right).try_inverse().ok_or_else(|| Error::Numerical("singular Jacobi flow".into()))?;
    Ok(psi_inv * data)
}

/// Fields that are Jacobi on each gap between consecutive nodes and
/// continuous at the nodes. Coordinates are the nodal values: at the
/// interior nodes for fixed endpoints, and additionally at the shared end
/// node `t = 0 ≅ T` for closed paths.
#[derive(Debug, Clone)]
pub struct BrokenJacobiSpace {
    pub flow: Arc<JacobiFlow>,
    pub bc: Boundary,
    pub nodes: Vec<f64>,
    /// Per gap, the map from `[W(t_j); W(t_{j+1})]` to the coefficient vector.
    gap_maps: Vec<DMatrix<f64>>,
}

impl BrokenJacobiSpace {
    /// `k` gaps on `[0, end]` (default `end = T`).
    pub fn new(flow: Arc<JacobiFlow>, k: usize, bc: Boundary, end: Option<f64>) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidField("need at least two gaps".into()));
        }
        let end = end.unwrap_or(flow.path.total_time);
        let nodes = place_nodes(&flow.path, end, k);
        Self::with_nodes(flow, nodes, bc)
    }

    pub fn with_nodes(flow: Arc<JacobiFlow>, nodes: Vec<f64>, bc: Boundary) -> Result<Self> {
        let gap_maps = nodes
            .windows(2)
            .enumerate()
            .map(|(g, w)| {
                gap_map(&flow, w[0], w[1]).map_err(|e| match e {
                    Error::RefineNodes { reason, .. } => Error::RefineNodes { gap: g, reason },
                    e => e,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { flow, bc, nodes, gap_maps })
    }

    pub fn gaps(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn end(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn dim(&self) -> usize {
        let n = self.flow.dim();
        match self.bc {
            Boundary::Fixed => n * (self.gaps() - 1),
            Boundary::Periodic => n * self.gaps(),
        }
    }

    /// Value at node `j` encoded by the coordinate vector.
    fn nodal(&self, coeffs: &DVector<f64>, j: usize) -> DVector<f64> {
        let n = self.flow.dim();
        let k = self.gaps();
        let slot = match self.bc {
            Boundary::Fixed if j == 0 || j == k => None,
            Boundary::Fixed => Some(j - 1),
            Boundary::Periodic => Some(j % k),
        };
        match slot {
            Some(s) => coeffs.rows(n * s, n).into_owned(),
            None => DVector::zeros(n),
        }
    }

    /// The field with the given nodal values.
    pub fn field(&self, coeffs: &DVector<f64>) -> JacobiField {
        let n = self.flow.dim();
        let mut pieces = Vec::new();
        for (g, m) in self.gap_maps.iter().enumerate() {
            let ws = self.nodal(coeffs, g);
            let we = self.nodal(coeffs, g + 1);
            if ws.amax() == 0.0 && we.amax() == 0.0 {
                continue;
            }
            let mut both = DVector::zeros(2 * n);
            both.rows_mut(0, n).copy_from(&ws);
            both.rows_mut(n, n).copy_from(&we);
            pieces.push((self.nodes[g], self.nodes[g + 1], m * both));
        }
        JacobiField { flow: self.flow.clone(), pieces }
    }

    pub fn basis(&self) -> Vec<JacobiField> {
        let d = self.dim();
        (0..d)
            .map(|a| {
                let mut e = DVector::zeros(d);
                e[a] = 1.0;
                self.field(&e)
            })
            .collect()
    }
}

/// `sin(mπ(t − a)/(b − a)) e_i` in the mirror frame on `[a, b]`, zero elsewhere.
struct GapBump {
    frames: Arc<Vec<DMatrix<f64>>>,
    a: f64,
    b: f64,
    m: u32,
    dir: usize,
}

impl VectorField for GapBump {
    fn jet(&self, pp: &PathPoint) -> Jet {
        let n = pp.x.len();
        if pp.t < self.a || pp.t > self.b {
            return Jet::zeros(n);
        }
        let w = self.m as f64 * std::f64::consts::PI / (self.b - self.a);
        let ph = w * (pp.t - self.a);
        let fr = self.frames[pp.seg].column(self.dir).into_owned();
        pp.covariant_jet(&fr * ph.sin(), &(&fr * (w * ph.cos())), &(&fr * (-w * w * ph.sin())))
    }

    fn support(&self) -> Option<(f64, f64)> {
        Some((self.a, self.b))
    }
}

/// Rayleigh-Ritz check that the energy form is positive definite on fields
/// supported in each single gap.
fn validate_gaps(space: &BrokenJacobiSpace, sampler: &Sampler) -> Result<()> {
    let path = &space.flow.path;
    let frames = Arc::new(mirror_frames(path)?);
    let n = path.dim();
    for (g, w) in space.nodes.windows(2).enumerate() {
        let fields: Vec<GapBump> = (1..=3u32)
            .flat_map(|m| (0..n).map(move |dir| (m, dir)))
            .map(|(m, dir)| GapBump { frames: frames.clone(), a: w[0], b: w[1], m, dir })
            .collect();
        let samples: Vec<Samples> = fields.iter().map(|f| sampler.sample(f)).collect();
        let d = samples.len();
        let e = DMatrix::from_fn(d, d, |i, j| sampler.energy(&samples[i], &samples[j]));
        let e = 0.5 * (&e + e.transpose());
        let eig = e.symmetric_eigenvalues();
        let (lo, hi) = (eig.min(), eig.amax());
        if lo <= 1e-10 * hi {
            return Err(Error::RefineNodes { gap: g, reason: format!("energy form not positive on the gap (eigenvalue {lo:e})") });
        }
    }
    Ok(())
}

fn serialize_rows<S: Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
    rows.serialize(s)
}

#[derive(Debug, Clone, Serialize)]
pub struct IndexReport {
    pub bc: Boundary,
    pub k: usize,
    pub end: f64,
    pub nodes: Vec<f64>,
    #[serde(serialize_with = "serialize_rows")]
    pub matrix: DMatrix<f64>,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub index: usize,
    pub nullity: usize,
    pub positive: usize,
    pub tol_eig: f64,
    /// `max |M − Mᵀ| / max(1, max |M|)` before symmetrization.
    pub asymmetry: f64,
    /// Conjugate points to `α(0)` in `(0, end]`.
    pub conjugate_points: Vec<ConjugatePoint>,
}

/// Signature counts `(index, nullity, positive)` of a symmetric matrix with
/// zero tolerance `rel · max |λ|`; returns the sorted eigenvalues too.
pub fn inertia(m: &DMatrix<f64>, rel: f64) -> (Vec<f64>, usize, usize, usize, f64) {
    if m.nrows() == 0 {
        return (Vec::new(), 0, 0, 0, 0.0);
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    let tol = rel * ev.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let neg = ev.iter().filter(|l| **l < -tol).count();
    let zero = ev.iter().filter(|l| l.abs() <= tol).count();
    let pos = ev.len() - neg - zero;
    (ev, neg, zero, pos, tol)
}

/// Matrix of `J''` on a broken Jacobi space and its eigenvalues.
pub fn assemble_on(space: &BrokenJacobiSpace) -> Result<IndexReport> {
    let path = &space.flow.path;
    let end = space.end();
    let sampler = Sampler::new(path, end, &space.nodes)?;
    validate_gaps(space, &sampler)?;
    let basis = space.basis();
    let samples = crate::par::map(&basis, |f| sampler.sample(f));
    let d = basis.len();
    let rows = crate::par::map(&(0..d).collect::<Vec<_>>(), |&a| {
        (0..d).map(|b| sampler.second_variation(&samples[a], &samples[b], space.bc)).collect::<Vec<f64>>()
    });
    let m = DMatrix::from_fn(d, d, |a, b| rows[a][b]);
    let asymmetry = (&m - m.transpose()).amax() / m.amax().max(1.0);
    if asymmetry >= 1e-8 {
        return Err(Error::Numerical(format!("index form asymmetric by {asymmetry:e}")));
    }
    let m = 0.5 * (&m + m.transpose());
    let (eigenvalues, index, nullity, positive, tol_eig) = inertia(&m, 1e-7);
    let scan = conjugate_points(&space.flow, None, None)?;
    let conjugate_points = scan.points.into_iter().filter(|p| p.time <= end * (1.0 + 1e-9)).collect();
    Ok(IndexReport {
        bc: space.bc,
        k: space.gaps(),
        end,
        nodes: space.nodes.clone(),
        matrix: m,
        eigenvalues,
        index,
        nullity,
        positive,
        tol_eig,
        asymmetry,
        conjugate_points,
    })
}

/// Index form on `k` gaps over the whole path.
pub fn assemble_index_form(flow: &Arc<JacobiFlow>, k: usize, bc: Boundary) -> Result<IndexReport> {
    assemble_on(&BrokenJacobiSpace::new(flow.clone(), k, bc, None)?)
}

/// Reports for each `k`; fails unless index and nullity agree across them.
pub fn index_stability_scan(flow: &Arc<JacobiFlow>, ks: &[usize], bc: Boundary) -> Result<Vec<IndexReport>> {
    let reports = ks.iter().map(|&k| assemble_index_form(flow, k, bc)).collect::<Result<Vec<_>>>()?;
    let stable = reports.windows(2).all(|w| w[0].index == w[1].index && w[0].nullity == w[1].nullity);
    if !stable {
        return Err(Error::InconclusiveIndex { table: reports.iter().map(|r| (r.k, r.index, r.nullity)).collect() });
    }
    Ok(reports)
}

/// `(τ, index, nullity)` of `J''` with fixed endpoints on `[0, τ]`.
pub fn index_function(flow: &Arc<JacobiFlow>, taus: &[f64], k: usize) -> Result<Vec<(f64, usize, usize)>> {
    taus.iter()
        .map(|&tau| {
            let r = assemble_on(&BrokenJacobiSpace::new(flow.clone(), k, Boundary::Fixed, Some(tau))?)?;
            Ok((tau, r.index, r.nullity))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use nalgebra::dvector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::dynamics::{shoot, EventPolicy, ShootOptions};
    use crate::fields::{random_frame_field, FrameField, Profile};
    use crate::geometry::surface::LevelSet;
    use crate::geometry::{Conformal, Euclidean, Polynomial, Potential, SpherePolar, System};
    use crate::jacobi::propagate_jacobi;

    fn flow(sys: &System, x: &[f64], v: &[f64], t: f64) -> Arc<JacobiFlow> {
        let p = shoot(sys, x, v, t, &EventPolicy::always_reflect(), &ShootOptions::default()).unwrap();
        Arc::new(JacobiFlow::new(&p).unwrap())
    }

    fn sphere(t: f64) -> Arc<JacobiFlow> {
        flow(&System::new(Arc::new(SpherePolar)), &[PI / 2.0, 0.0], &[0.0, 1.0], t)
    }

    fn curved() -> Arc<JacobiFlow> {
        let sys = System::new(Arc::new(Conformal::new(2, Polynomial::new(vec![(0.1, vec![1, 0]), (0.05, vec![0, 2])]))))
            .with_surface(Arc::new(LevelSet::sphere(&[0.0, 0.0], 1.0)), true)
            .with_potential(Potential::harmonic(2, 0.3));
        flow(&sys, &[0.1, 0.2], &[0.7, 0.4], 3.0)
    }

    fn sine_field(path: &ReflectedPath, e: DVector<f64>) -> FrameField {
        let frames = Arc::new(mirror_frames(path).unwrap());
        let t = path.total_time;
        let z = DVector::zeros(e.len());
        FrameField::new(frames, Profile { nodes: vec![0.0, t], nodal: vec![z.clone(), z], modes: vec![(0, 1, e)] }).unwrap()
    }

    #[test]
    fn flat_sine_closed_form() {
        let f = flow(&System::new(Arc::new(Euclidean::new(2))), &[0.0, 0.0], &[1.0, 0.5], 2.0);
        let w = sine_field(&f.path, dvector![0.6, -0.8]);
        let j = second_variation(&f.path, &w, &w, Boundary::Fixed).unwrap();
        assert!((j - PI * PI / 4.0).abs() < 1e-10, "{j}");
    }

    #[test]
    fn differentiated_and_energy_forms_agree() {
        let f = curved();
        assert!(f.path.reflection_count() >= 1);
        let frames = Arc::new(mirror_frames(&f.path).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..3 {
            let w = random_frame_field(&f.path, frames.clone(), &mut rng, 4, 2, true).unwrap();
            let z = random_frame_field(&f.path, frames.clone(), &mut rng, 3, 2, true).unwrap();
            let a = second_variation(&f.path, &w, &z, Boundary::Fixed).unwrap();
            let b = second_variation(&f.path, &z, &w, Boundary::Fixed).unwrap();
            let e = energy_form(&f.path, &w, &z, Boundary::Fixed).unwrap();
            assert!((a - b).abs() < 1e-8 * a.abs().max(1.0), "{a} {b}");
            assert!((a - e).abs() < 1e-8 * a.abs().max(1.0), "{a} {e}");
        }
    }

    #[test]
    fn jacobi_fields_vanishing_at_ends_are_null() {
        let f = sphere(PI);
        let w = propagate_jacobi(&f, &dvector![0.0, 0.0], &dvector![1.0, 0.0]);
        let frames = Arc::new(mirror_frames(&f.path).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let z = random_frame_field(&f.path, frames.clone(), &mut rng, 4, 2, true).unwrap();
            assert!(second_variation(&f.path, &w, &z, Boundary::Fixed).unwrap().abs() < 1e-7);
        }
    }

    #[test]
    fn inadmissible_fields_are_rejected() {
        let f = sphere(2.0);
        let w = propagate_jacobi(&f, &dvector![0.0, 0.0], &dvector![1.0, 0.0]);
        let z = sine_field(&f.path, dvector![1.0, 0.0]);
        assert!(matches!(second_variation(&f.path, &w, &z, Boundary::Fixed), Err(Error::InvalidField(_))));
        assert!(matches!(second_variation(&f.path, &z, &z, Boundary::Periodic), Err(Error::InvalidField(_))));
    }

    #[test]
    fn index_oracles() {
        let flat = flow(&System::new(Arc::new(Euclidean::new(2))), &[0.0, 0.0], &[1.0, 0.2], 3.0);
        let r = assemble_index_form(&flat, 8, Boundary::Fixed).unwrap();
        assert_eq!((r.index, r.nullity), (0, 0));
        assert!(r.eigenvalues[0] > 0.0);

        let r = assemble_index_form(&sphere(1.5 * PI), 8, Boundary::Fixed).unwrap();
        assert_eq!((r.index, r.nullity), (1, 0));

        let harmonic = System::new(Arc::new(Euclidean::new(2))).with_potential(Potential::harmonic(2, 1.0));
        let r = assemble_index_form(&flow(&harmonic, &[0.0, 0.0], &[1.0, 0.0], 2.5 * PI), 16, Boundary::Fixed).unwrap();
        assert_eq!((r.index, r.nullity), (4, 0));
    }

    #[test]
    fn conjugate_endpoint_gives_nullity() {
        let r = assemble_index_form(&sphere(PI), 8, Boundary::Fixed).unwrap();
        assert_eq!((r.index, r.nullity), (0, 1));
    }

    #[test]
    fn stability_and_monotonicity() {
        let f = sphere(1.5 * PI);
        let reports = index_stability_scan(&f, &[8, 16, 32], Boundary::Fixed).unwrap();
        assert!(reports.iter().all(|r| r.index == 1));
        let table = index_function(&f, &[0.5, 2.0, 3.0, 3.3, 4.5], 8).unwrap();
        let idx: Vec<usize> = table.iter().map(|r| r.1).collect();
        assert_eq!(idx, vec![0, 0, 0, 1, 1]);
    }

    #[test]
    fn basis_is_broken_jacobi() {
        let f = curved();
        let space = BrokenJacobiSpace::new(f.clone(), 8, Boundary::Fixed, None).unwrap();
        for b in space.basis() {
            assert!(b.jump_residuals().unwrap().max() < 1e-8);
            for (j, t) in space.nodes.iter().enumerate() {
                let (wl, _) = b.state(*t, Limit::Left);
                let (wr, _) = b.state(*t, Limit::Right);
                assert!((wl - wr).amax() < 1e-9, "node {j}");
            }
        }
    }

    #[test]
    fn broken_jacobi_fields_split_off_node_vanishing_fields() {
        let f = curved();
        let space = BrokenJacobiSpace::new(f.clone(), 8, Boundary::Fixed, None).unwrap();
        let frames = Arc::new(mirror_frames(&f.path).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..3 {
            let c = DVector::from_fn(space.dim(), |_, _| rand::Rng::random_range(&mut rng, -1.0..1.0));
            let w = space.field(&c);
            let z = random_frame_field(&f.path, frames.clone(), &mut rng, 8, 2, true).unwrap();
            let mut prof = z.profile.clone();
            prof.nodes = space.nodes.clone();
            prof.nodal.iter_mut().for_each(|v| v.fill(0.0));
            let z = FrameField::new(frames.clone(), prof).unwrap();
            assert!(second_variation(&f.path, &w, &z, Boundary::Fixed).unwrap().abs() < 1e-7);
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(8))]
        #[test]
        fn symmetric_and_bilinear(seed in 0u64..1000, s in -2.0f64..2.0) {
            let f = curved();
            let frames = Arc::new(mirror_frames(&f.path).unwrap());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = random_frame_field(&f.path, frames.clone(), &mut rng, 3, 2, true).unwrap();
            let u = random_frame_field(&f.path, frames.clone(), &mut rng, 5, 1, true).unwrap();
            let z = random_frame_field(&f.path, frames, &mut rng, 4, 2, true).unwrap();
            let p = &f.path;
            let wz = second_variation(p, &w, &z, Boundary::Fixed).unwrap();
            let zw = second_variation(p, &z, &w, Boundary::Fixed).unwrap();
            proptest::prop_assert!((wz - zw).abs() < 1e-8 * wz.abs().max(1.0));
            let comb = crate::fields::Combination { terms: vec![(1.0, &w), (s, &u)] };
            let lhs = second_variation(p, &comb, &z, Boundary::Fixed).unwrap();
            let rhs = wz + s * second_variation(p, &u, &z, Boundary::Fixed).unwrap();
            proptest::prop_assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn long_gaps_need_refinement() {
        let r = BrokenJacobiSpace::new(sphere(7.0), 2, Boundary::Fixed, None).and_then(|s| assemble_on(&s));
        assert!(matches!(r, Err(Error::RefineNodes { .. })), "{r:?}");
    }
}
