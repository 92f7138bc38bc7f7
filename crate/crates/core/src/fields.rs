//! Vector fields along a reflected path, evaluated as covariant jets
//! `(W, D_tW, D_t²W)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{EventKind, Limit, ReflectedPath};
use crate::error::{Error, Result};
use crate::geometry::{CurvaturePoint, Side};

/// Path data at one time, shared by all fields evaluated there.
#[derive(Debug, Clone)]
pub struct PathPoint {
    pub t: f64,
    pub lim: Limit,
    pub seg: usize,
    pub side: Side,
    pub x: DVector<f64>,
    pub v: DVector<f64>,
    /// Coordinate acceleration `dv/dt`.
    pub a: DVector<f64>,
    pub curv: CurvaturePoint,
    /// `∇V` as a vector.
    pub grad_v: DVector<f64>,
    /// Covariant Hessian of `V` as a (1,1) tensor.
    pub hess: DMatrix<f64>,
    /// `A w = R(α̇, w) α̇`.
    pub jac_op: DMatrix<f64>,
}

impl PathPoint {
    pub fn at(path: &ReflectedPath, t: f64, lim: Limit) -> Result<Self> {
        let seg = path.segment_index(t, lim);
        let side = path.segments[seg].side;
        let (x, v) = path.state(t, lim);
        let a = path.acceleration(t, lim);
        let sys = &path.system;
        let curv = CurvaturePoint::at(sys.chart.as_ref(), x.as_slice())?;
        let grad_v = sys.grad_potential(&curv.conn, x.as_slice(), side);
        let hess = sys.hess_potential(&curv.conn, x.as_slice(), side);
        let jac_op = curv.jacobi_operator(&v);
        Ok(Self { t, lim, seg, side, x, v, a, curv, grad_v, hess, jac_op })
    }

    pub fn inner(&self, u: &DVector<f64>, w: &DVector<f64>) -> f64 {
        self.curv.conn.inner(u, w)
    }

    /// Covariant acceleration `D_t α̇`.
    pub fn covariant_accel(&self) -> DVector<f64> {
        &self.a + self.curv.conn.contract(&self.v, &self.v)
    }

    /// Converts coordinate derivatives of a field into its covariant jet.
    pub fn covariant_jet(&self, z: DVector<f64>, zd: &DVector<f64>, zdd: &DVector<f64>) -> Jet {
        let conn = &self.curv.conn;
        let n = z.len();
        let dw = zd + conn.contract(&self.v, &z);
        // d/dt Γ(v, z) = (∂_v Γ)(v, z) + Γ(a, z) + Γ(v, ż)
        let mut dgam = DVector::zeros(n);
        for k in 0..n {
            let mut s = 0.0;
            for m in 0..n {
                if self.v[m] != 0.0 {
                    s += self.v[m] * (self.v.transpose() * &self.curv.dgamma[m][k] * &z)[0];
                }
            }
            dgam[k] = s;
        }
        let ddw = zdd + dgam + conn.contract(&self.a, &z) + conn.contract(&self.v, zd) + conn.contract(&self.v, &dw);
        Jet { w: z, dw, ddw }
    }
}

/// Value and first two covariant derivatives of a field.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub w: DVector<f64>,
    pub dw: DVector<f64>,
    pub ddw: DVector<f64>,
}

impl Jet {
    pub fn zeros(n: usize) -> Self {
        Self { w: DVector::zeros(n), dw: DVector::zeros(n), ddw: DVector::zeros(n) }
    }

    pub fn axpy(&mut self, c: f64, other: &Jet) {
        self.w += c * &other.w;
        self.dw += c * &other.dw;
        self.ddw += c * &other.ddw;
    }
}

pub trait VectorField: Send + Sync {
    fn jet(&self, pp: &PathPoint) -> Jet;

    /// Times in `(0, T)` other than path events where the field is not smooth.
    fn breaks(&self) -> Vec<f64> {
        Vec::new()
    }

    /// Closed interval outside of which the field vanishes identically.
    fn support(&self) -> Option<(f64, f64)> {
        None
    }
}

/// Scalar profile on a partition: nodal values (piecewise linear) plus sine
/// bumps on individual cells.
#[derive(Debug, Clone)]
pub struct Profile {
    pub nodes: Vec<f64>,
    pub nodal: Vec<DVector<f64>>,
    /// `(cell, k, c)`: adds `c sin(kπ(t − t_cell)/h_cell)` on that cell.
    pub modes: Vec<(usize, u32, DVector<f64>)>,
}

impl Profile {
    fn cell(&self, t: f64, lim: Limit) -> usize {
        let m = self.nodes.len() - 1;
        let mut c = 0;
        for j in 1..m {
            let after = match lim {
                Limit::Left => t > self.nodes[j],
                Limit::Right => t >= self.nodes[j],
            };
            if after {
                c = j;
            }
        }
        c
    }

    /// `(f, f', f'')` at `t`.
    pub fn eval(&self, t: f64, lim: Limit) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let c = self.cell(t, lim);
        let (a, b) = (self.nodes[c], self.nodes[c + 1]);
        let h = b - a;
        let s = (t - a) / h;
        let f0 = &self.nodal[c];
        let f1 = &self.nodal[c + 1];
        let mut f = f0 * (1.0 - s) + f1 * s;
        let mut fd = (f1 - f0) / h;
        let mut fdd = DVector::zeros(f.len());
        for (cell, k, coef) in &self.modes {
            if *cell != c {
                continue;
            }
            let w = *k as f64 * std::f64::consts::PI / h;
            let ph = w * (t - a);
            f += coef * ph.sin();
            fd += coef * (w * ph.cos());
            fdd -= coef * (w * w * ph.sin());
        }
        (f, fd, fdd)
    }
}

/// Admissible variation field `Z(t) = F(t) f(t)`, where `F` is the coordinate
/// mirror frame that flips by the reflection at every reflection event, so
/// that `Z⁺ = Q Z⁻` there and `Z` is continuous at kinks.
#[derive(Debug, Clone)]
pub struct FrameField {
    pub frames: Arc<Vec<DMatrix<f64>>>,
    pub profile: Profile,
}

/// Mirror frames, one per path segment.
pub fn mirror_frames(path: &ReflectedPath) -> Result<Vec<DMatrix<f64>>> {
    let n = path.dim();
    let mut out = vec![DMatrix::identity(n, n)];
    for e in &path.events {
        let last = out.last().unwrap().clone();
        let next = match e.kind {
            EventKind::Reflection => path.system.frame(&e.point)?.reflection_matrix() * last,
            EventKind::Kink => last,
        };
        out.push(next);
    }
    Ok(out)
}

impl FrameField {
    pub fn new(frames: Arc<Vec<DMatrix<f64>>>, profile: Profile) -> Result<Self> {
        let n = frames[0].nrows();
        if profile.nodes.len() < 2 || profile.nodal.len() != profile.nodes.len() {
            return Err(Error::InvalidField("profile partition and nodal values disagree".into()));
        }
        if profile.nodal.iter().chain(profile.modes.iter().map(|m| &m.2)).any(|v| v.len() != n) {
            return Err(Error::InvalidField("coefficient dimension mismatch".into()));
        }
        Ok(Self { frames, profile })
    }

    pub fn value(&self, path: &ReflectedPath, t: f64, lim: Limit) -> DVector<f64> {
        let seg = path.segment_index(t, lim);
        &self.frames[seg] * self.profile.eval(t, lim).0
    }
}

impl VectorField for FrameField {
    fn jet(&self, pp: &PathPoint) -> Jet {
        let (f, fd, fdd) = self.profile.eval(pp.t, pp.lim);
        let fr = &self.frames[pp.seg];
        pp.covariant_jet(fr * f, &(fr * fd), &(fr * fdd))
    }

    fn breaks(&self) -> Vec<f64> {
        let m = self.profile.nodes.len();
        self.profile.nodes[1..m - 1].to_vec()
    }
}

/// Zero field.
#[derive(Debug, Clone, Copy)]
pub struct ZeroField(pub usize);

impl VectorField for ZeroField {
    fn jet(&self, _pp: &PathPoint) -> Jet {
        Jet::zeros(self.0)
    }
    fn support(&self) -> Option<(f64, f64)> {
        Some((0.0, 0.0))
    }
}

/// Finite linear combination of fields.
pub struct Combination<'a> {
    pub terms: Vec<(f64, &'a dyn VectorField)>,
}

impl VectorField for Combination<'_> {
    fn jet(&self, pp: &PathPoint) -> Jet {
        let mut j = Jet::zeros(pp.x.len());
        for (c, f) in &self.terms {
            j.axpy(*c, &f.jet(pp));
        }
        j
    }

    fn breaks(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.terms.iter().flat_map(|(_, f)| f.breaks()).collect();
        b.sort_by(|a, c| a.total_cmp(c));
        b.dedup();
        b
    }

    fn support(&self) -> Option<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (_, f) in &self.terms {
            let (a, b) = f.support()?;
            if b > a {
                lo = lo.min(a);
                hi = hi.max(b);
            }
        }
        Some(if hi > lo { (lo, hi) } else { (0.0, 0.0) })
    }
}

/// Cells for composite quadrature along `path`: dense-output steps split at
/// `breaks`, clipped to `support` and refined to at most `max_len`.
pub fn quadrature_cells(path: &ReflectedPath, breaks: &[f64], support: Option<(f64, f64)>, max_len: f64) -> Vec<(f64, f64)> {
    let (lo, hi) = support.unwrap_or((0.0, path.total_time));
    let mut cuts: Vec<f64> = vec![lo, hi];
    for (a, b) in path.step_intervals() {
        cuts.push(a);
        cuts.push(b);
    }
    cuts.extend_from_slice(breaks);
    cuts.extend(path.event_times());
    cuts.retain(|t| *t >= lo && *t <= hi);
    cuts.sort_by(|a, b| a.total_cmp(b));
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    let mut out = Vec::new();
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b - a <= 1e-14 {
            continue;
        }
        let pieces = ((b - a) / max_len).ceil().max(1.0) as usize;
        for p in 0..pieces {
            out.push((a + (b - a) * p as f64 / pieces as f64, a + (b - a) * (p + 1) as f64 / pieces as f64));
        }
    }
    out
}

/// Draws a random admissible field with `cells` profile cells and up to
/// `max_mode` sine modes per cell. `fixed` forces zero endpoint values;
/// otherwise the endpoint values satisfy the periodic matching
/// `F_last f(T) = f(0)`.
pub fn random_frame_field<R: rand::Rng>(
    path: &ReflectedPath,
    frames: Arc<Vec<DMatrix<f64>>>,
    rng: &mut R,
    cells: usize,
    max_mode: u32,
    fixed: bool,
) -> Result<FrameField> {
    let n = path.dim();
    let t_end = path.total_time;
    let events = path.event_times();
    let mut nodes: Vec<f64> = (0..=cells).map(|j| t_end * j as f64 / cells as f64).collect();
    // keep interior nodes away from events
    let h = t_end / cells as f64;
    for node in nodes.iter_mut().take(cells).skip(1) {
        for e in &events {
            if (*node - e).abs() < 0.05 * h {
                *node += if *node > *e { 0.1 * h } else { -0.1 * h };
            }
        }
    }
    let draw = |rng: &mut R| DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let mut nodal: Vec<DVector<f64>> = (0..=cells).map(|_| draw(rng)).collect();
    if fixed {
        nodal[0].fill(0.0);
        nodal[cells].fill(0.0);
    } else {
        let last = frames.last().unwrap();
        let inv = last.clone().try_inverse().ok_or_else(|| Error::InvalidField("singular frame".into()))?;
        nodal[cells] = inv * &nodal[0];
    }
    let mut modes = Vec::new();
    for c in 0..cells {
        for k in 1..=max_mode {
            modes.push((c, k, draw(rng) / k as f64));
        }
    }
    FrameField::new(frames, Profile { nodes, nodal, modes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{shoot, EventPolicy, ShootOptions};
    use crate::geometry::surface::LevelSet;
    use crate::geometry::{Conformal, Polynomial, Potential, System};
    use rand::SeedableRng;

    fn curved_path() -> ReflectedPath {
        let sys = System::new(Arc::new(Conformal::new(2, Polynomial::new(vec![(0.1, vec![1, 0]), (0.05, vec![0, 2])]))))
            .with_surface(Arc::new(LevelSet::sphere(&[0.0, 0.0], 1.0)), true)
            .with_potential(Potential::harmonic(2, 0.3));
        shoot(&sys, &[0.1, 0.2], &[0.7, 0.4], 3.0, &EventPolicy::always_reflect(), &ShootOptions::default()).unwrap()
    }

    #[test]
    fn jet_derivatives_are_consistent() {
        // D_t of W and DW checked by differencing along the path
        let p = curved_path();
        let frames = Arc::new(mirror_frames(&p).unwrap());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let z = random_frame_field(&p, frames, &mut rng, 3, 2, true).unwrap();
        let t = 0.37;
        let h = 1e-5;
        let pp = PathPoint::at(&p, t, Limit::Right).unwrap();
        let jp = z.jet(&PathPoint::at(&p, t + h, Limit::Right).unwrap());
        let jm = z.jet(&PathPoint::at(&p, t - h, Limit::Right).unwrap());
        let j = z.jet(&pp);
        let g = pp.curv.conn.contract(&pp.v, &j.dw);
        let fd = (&jp.dw - &jm.dw) / (2.0 * h) + g;
        assert!((fd - &j.ddw).amax() < 1e-5);
    }

    #[test]
    fn frame_field_is_admissible() {
        let p = curved_path();
        assert!(!p.events.is_empty());
        let frames = Arc::new(mirror_frames(&p).unwrap());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let z = random_frame_field(&p, frames, &mut rng, 4, 2, true).unwrap();
        for e in &p.events {
            let f = p.system.frame(&e.point).unwrap();
            let zm = z.value(&p, e.time, Limit::Left);
            let zp = z.value(&p, e.time, Limit::Right);
            assert!((f.reflect(&zm) - zp).amax() < 1e-12);
        }
        assert!(z.value(&p, 0.0, Limit::Right).amax() == 0.0);
        assert!(z.value(&p, p.total_time, Limit::Left).amax() < 1e-15);
    }
}
