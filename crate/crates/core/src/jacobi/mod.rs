//! Reflected Jacobi fields: propagation along a path, jumps at events, the
//! endpoint map and conjugate points.
//!
//! A Jacobi field is stored through its covariant Cauchy data `(W, D_tW)`.
//! Between events it solves `D_t²W + R(α̇, W)α̇ + ∇²V W = 0`, in coordinates
//! `Ẇ = D − Γ(α̇, W)`, `Ḋ = −R(α̇, W)α̇ − ∇²V W − Γ(α̇, D)`.

pub mod conjugate;
pub mod consistency;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{EventKind, EventRecord, Limit, ReflectedPath};
use crate::error::{Error, Result};
use crate::fields::{Jet, PathPoint, VectorField};
use crate::geometry::{CurvaturePoint, System};
use crate::ode::{integrate, DenseSolution, OdeOptions};

pub use conjugate::{conjugate_points, ConjugatePoint, ConjugateScan};
pub use consistency::variation_consistency_check;

/// Data of the jump of a Jacobi field at one event.
#[derive(Debug, Clone)]
pub struct JumpRecord {
    pub w_minus: DVector<f64>,
    pub dw_minus: DVector<f64>,
    pub w_plus: DVector<f64>,
    pub dw_plus: DVector<f64>,
    /// Variation of the impact point, `∂c = −(W₁⁻/α̇₁⁻) α̇_⊤ + W_⊤⁻`.
    pub dc: DVector<f64>,
}

/// `∂c` at a reflection.
pub fn impact_variation(system: &System, event: &EventRecord, w_minus: &DVector<f64>) -> Result<DVector<f64>> {
    let f = system.frame(&event.point)?;
    let a = f.normal_component(&event.v_in);
    if a.abs() <= crate::dynamics::V_MIN {
        return Err(Error::Tangency { time: event.time, normal_speed: a });
    }
    let w1 = f.normal_component(w_minus);
    let w_top = f.tangent_part(w_minus);
    let v_top = f.tangent_part(&event.v_in);
    Ok(w_top - v_top * (w1 / a))
}

/// Applies the reflection or kink jump conditions to `(W⁻, D_tW⁻)`.
pub fn jacobi_jump(
    system: &System,
    event: &EventRecord,
    w_minus: &DVector<f64>,
    dw_minus: &DVector<f64>,
) -> Result<JumpRecord> {
    if event.kind == EventKind::Kink {
        return Ok(JumpRecord {
            w_minus: w_minus.clone(),
            dw_minus: dw_minus.clone(),
            w_plus: w_minus.clone(),
            dw_plus: dw_minus.clone(),
            dc: DVector::zeros(w_minus.len()),
        });
    }
    let f = system.frame(&event.point)?;
    let a = f.normal_component(&event.v_in);
    if a.abs() <= crate::dynamics::V_MIN {
        return Err(Error::Tangency { time: event.time, normal_speed: a });
    }
    let v_top = f.tangent_part(&event.v_in);
    let w1 = f.normal_component(w_minus);
    let w_top = f.tangent_part(w_minus);
    let dc = &w_top - &v_top * (w1 / a);
    let w_plus = &w_top - &f.normal * w1;

    let grad_v = system.grad_potential(&f.conn, &event.point, event.side_before);
    let gv1 = f.normal_component(&grad_v);
    let d1 = f.normal_component(dw_minus);
    let d_top = f.tangent_part(dw_minus);
    let d_top_plus = d_top + f.shape_op(&dc) * (2.0 * a);
    let d1_plus = 2.0 * (-(w1 / a) * gv1 + f.second_form(&dc, &v_top)) - d1;
    let dw_plus = d_top_plus + &f.normal * d1_plus;
    Ok(JumpRecord { w_minus: w_minus.clone(), dw_minus: dw_minus.clone(), w_plus, dw_plus, dc })
}

/// Matrix of the jump map `(W⁻, D⁻) ↦ (W⁺, D⁺)`.
pub fn jump_matrix(system: &System, event: &EventRecord) -> Result<DMatrix<f64>> {
    let n = system.dim();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for c in 0..2 * n {
        let mut e = DVector::zeros(2 * n);
        e[c] = 1.0;
        let r = jacobi_jump(system, event, &e.rows(0, n).into_owned(), &e.rows(n, n).into_owned())?;
        m.view_mut((0, c), (n, 1)).copy_from(&r.w_plus);
        m.view_mut((n, c), (n, 1)).copy_from(&r.dw_plus);
    }
    Ok(m)
}

/// Fundamental solution of the reflected Jacobi equation along a path.
#[derive(Debug, Clone)]
pub struct JacobiFlow {
    pub path: Arc<ReflectedPath>,
    /// Per segment, the propagator from the segment start (identity there).
    seg_flows: Vec<DenseSolution>,
    /// Fundamental matrix just after each segment start.
    starts: Vec<DMatrix<f64>>,
    /// Jump matrix at each event.
    pub jumps: Vec<DMatrix<f64>>,
}

fn segment_matrix(path: &ReflectedPath, seg: usize, t: f64) -> Result<DMatrix<f64>> {
    let s = &path.segments[seg];
    let n = path.dim();
    let y = s.sol.eval(t.clamp(s.t0, s.t1));
    let x = &y[..n];
    let v = DVector::from_column_slice(&y[n..]);
    let sys = &path.system;
    let curv = CurvaturePoint::at(sys.chart.as_ref(), x)?;
    let hess = sys.hess_potential(&curv.conn, x, s.side);
    let a = curv.jacobi_operator(&v);
    let g = curv.conn.along(&v);
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&(-&g));
    m.view_mut((0, n), (n, n)).copy_from(&DMatrix::identity(n, n));
    m.view_mut((n, 0), (n, n)).copy_from(&(-(a + hess)));
    m.view_mut((n, n), (n, n)).copy_from(&(-g));
    Ok(m)
}

impl JacobiFlow {
    pub fn new(path: &ReflectedPath) -> Result<Self> {
        Self::from_arc(Arc::new(path.clone()))
    }

    pub fn from_arc(path: Arc<ReflectedPath>) -> Result<Self> {
        Self::with_options(path, &OdeOptions::default())
    }

    pub fn with_options(path: Arc<ReflectedPath>, opts: &OdeOptions) -> Result<Self> {
        let n = path.dim();
        let m = 2 * n;
        let mut seg_flows = Vec::with_capacity(path.segments.len());
        let mut starts = Vec::with_capacity(path.segments.len());
        let mut jumps = Vec::with_capacity(path.events.len());
        let mut current = DMatrix::identity(m, m);
        for (i, seg) in path.segments.iter().enumerate() {
            if i > 0 {
                let j = jump_matrix(&path.system, &path.events[i - 1])?;
                current = &j * current;
                jumps.push(j);
            }
            starts.push(current.clone());
            let id = DMatrix::<f64>::identity(m, m);
            let mut err = None;
            let rhs = |t: f64, y: &[f64], dy: &mut [f64]| match segment_matrix(&path, i, t) {
                Ok(a) => {
                    let phi = DMatrix::from_column_slice(m, m, y);
                    dy.copy_from_slice((a * phi).as_slice());
                }
                Err(e) => {
                    err = Some(e);
                    dy.iter_mut().for_each(|d| *d = 0.0);
                }
            };
            let (sol, _) = integrate(rhs, seg.t0, id.as_slice(), seg.t1, opts, None)?;
            if let Some(e) = err {
                return Err(e);
            }
            let end = DMatrix::from_column_slice(m, m, &sol.eval(seg.t1));
            current = end * &current;
            seg_flows.push(sol);
        }
        Ok(Self { path, seg_flows, starts, jumps })
    }

    pub fn dim(&self) -> usize {
        self.path.dim()
    }

    /// `Ψ(t)`: maps `(W(0), D_tW(0))` to `(W(t), D_tW(t))`.
    pub fn fundamental(&self, t: f64, lim: Limit) -> DMatrix<f64> {
        let m = 2 * self.dim();
        let seg = self.path.segment_index(t, lim);
        let s = &self.path.segments[seg];
        let local = DMatrix::from_column_slice(m, m, &self.seg_flows[seg].eval(t.clamp(s.t0, s.t1)));
        local * &self.starts[seg]
    }

    /// Time derivative of `Ψ` from the dense output.
    pub fn fundamental_derivative(&self, t: f64, lim: Limit) -> DMatrix<f64> {
        let m = 2 * self.dim();
        let seg = self.path.segment_index(t, lim);
        let s = &self.path.segments[seg];
        let local = DMatrix::from_column_slice(m, m, &self.seg_flows[seg].derivative(t.clamp(s.t0, s.t1)));
        local * &self.starts[seg]
    }

    /// `Ψ(t) Ψ(s)⁻¹`, computed without inverting `Ψ(s)` when both lie in one segment.
    pub fn propagator(&self, s: f64, t: f64) -> Result<DMatrix<f64>> {
        let ps = self.fundamental(s, Limit::Right);
        let pt = self.fundamental(t, Limit::Left);
        let inv = ps.try_inverse().ok_or_else(|| Error::Numerical("singular Jacobi flow".into()))?;
        Ok(pt * inv)
    }

    /// The endpoint map `Φ = Ψ(T)`.
    pub fn endpoint_map(&self) -> DMatrix<f64> {
        self.fundamental(self.path.total_time, Limit::Left)
    }

    /// `B(t)`: columns are `W(t)` for `W(0) = 0`, `D_tW(0) = e_j`.
    pub fn b_block(&self, t: f64, lim: Limit) -> DMatrix<f64> {
        let n = self.dim();
        self.fundamental(t, lim).view((0, n), (n, n)).into_owned()
    }

    /// Maximum of `|Ψ' − MΨ| / |Ψ|` over sample points of every segment.
    pub fn ode_residual(&self, samples_per_segment: usize) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for (i, s) in self.path.segments.iter().enumerate() {
            for k in 1..samples_per_segment {
                let t = s.t0 + (s.t1 - s.t0) * k as f64 / samples_per_segment as f64;
                let lim = Limit::Right;
                let psi = self.fundamental(t, lim);
                let dpsi = self.fundamental_derivative(t, lim);
                let m = segment_matrix(&self.path, i, t)?;
                let r = (dpsi - m * &psi).amax() / psi.amax().max(1.0);
                worst = worst.max(r);
            }
        }
        Ok(worst)
    }
}

/// Endpoint map of `path`.
pub fn endpoint_map(path: &ReflectedPath) -> Result<DMatrix<f64>> {
    Ok(JacobiFlow::new(path)?.endpoint_map())
}

/// A (possibly broken) Jacobi field: on each piece `[s, e]` it equals
/// `Ψ(t) c` for the piece's coefficient vector `c`, and it is zero outside
/// the pieces.
#[derive(Debug, Clone)]
pub struct JacobiField {
    pub flow: Arc<JacobiFlow>,
    pub pieces: Vec<(f64, f64, DVector<f64>)>,
}

impl JacobiField {
    /// Unbroken field with the given initial data on the whole path.
    pub fn from_initial(flow: Arc<JacobiFlow>, w0: &DVector<f64>, dw0: &DVector<f64>) -> Self {
        let t_end = flow.path.total_time;
        let c = DVector::from_iterator(2 * w0.len(), w0.iter().chain(dw0.iter()).copied());
        Self { flow, pieces: vec![(0.0, t_end, c)] }
    }

    fn piece(&self, t: f64, lim: Limit) -> Option<&(f64, f64, DVector<f64>)> {
        let t_end = self.flow.path.total_time;
        self.pieces.iter().find(|(s, e, _)| match lim {
            Limit::Right => (*s <= t && t < *e) || (t == *e && t >= t_end),
            Limit::Left => (*s < t && t <= *e) || (t == *s && t <= 0.0),
        })
    }

    /// `(W, D_tW)` at `t`.
    pub fn state(&self, t: f64, lim: Limit) -> (DVector<f64>, DVector<f64>) {
        let n = self.flow.dim();
        match self.piece(t, lim) {
            Some((_, _, c)) => {
                let s = self.flow.fundamental(t, lim) * c;
                (s.rows(0, n).into_owned(), s.rows(n, n).into_owned())
            }
            None => (DVector::zeros(n), DVector::zeros(n)),
        }
    }

    /// Jump data at every event.
    pub fn jump_records(&self) -> Result<Vec<JumpRecord>> {
        let path = &self.flow.path;
        let mut out = Vec::with_capacity(path.events.len());
        for e in &path.events {
            let (wm, dm) = self.state(e.time, Limit::Left);
            let (wp, dp) = self.state(e.time, Limit::Right);
            let dc = match e.kind {
                EventKind::Reflection => impact_variation(&path.system, e, &wm)?,
                EventKind::Kink => DVector::zeros(wm.len()),
            };
            out.push(JumpRecord { w_minus: wm, dw_minus: dm, w_plus: wp, dw_plus: dp, dc });
        }
        Ok(out)
    }

    /// Largest residual of the jump conditions over all events.
    pub fn jump_residuals(&self) -> Result<JumpResiduals> {
        let path = &self.flow.path;
        let mut r = JumpResiduals::default();
        for (e, j) in path.events.iter().zip(self.jump_records()?) {
            let f = path.system.frame(&e.point)?;
            match e.kind {
                EventKind::Reflection => {
                    let a = f.normal_component(&e.v_in);
                    let v_top = f.tangent_part(&e.v_in);
                    let dw = &j.w_plus - &j.w_minus;
                    let wbar = 0.5 * (&j.w_plus + &j.w_minus);
                    r.tangent_value = r.tangent_value.max(f.conn.norm(&f.tangent_part(&dw)));
                    r.normal_mean = r.normal_mean.max(f.normal_component(&wbar).abs());
                    let ddw = &j.dw_plus - &j.dw_minus;
                    let b1 = f.tangent_part(&ddw) - 2.0 * a * f.shape_op(&j.dc);
                    r.first_condition = r.first_condition.max(f.conn.norm(&b1));
                    let dbar1 = 0.5 * f.normal_component(&(&j.dw_plus + &j.dw_minus));
                    let grad_v = path.system.grad_potential(&f.conn, &e.point, e.side_before);
                    let w1 = f.normal_component(&j.w_minus);
                    let b2 = dbar1 + (w1 / a) * f.normal_component(&grad_v) - f.second_form(&j.dc, &v_top);
                    r.second_condition = r.second_condition.max(b2.abs());
                    r.impact_normal = r.impact_normal.max(f.normal_component(&j.dc).abs());
                }
                EventKind::Kink => {
                    r.kink = r.kink.max((&j.w_plus - &j.w_minus).amax()).max((&j.dw_plus - &j.dw_minus).amax());
                }
            }
        }
        Ok(r)
    }
}

/// Residuals of the reflection and kink conditions.
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize)]
pub struct JumpResiduals {
    /// `|ΔW_⊤|`
    pub tangent_value: f64,
    /// `|W̄_⊥|`
    pub normal_mean: f64,
    /// `|ΔD_tW_⊤ − 2α̇₁⁻ S(∂c)|`
    pub first_condition: f64,
    /// `|(D_tW)̄_⊥ + (W₁⁻/α̇₁⁻)(∇V)₁ − II(∂c, α̇_⊤)|`
    pub second_condition: f64,
    /// `|⟨∂c, N⟩|`
    pub impact_normal: f64,
    /// `|ΔW|`, `|ΔD_tW|` at kinks
    pub kink: f64,
}

impl JumpResiduals {
    pub fn max(&self) -> f64 {
        [self.tangent_value, self.normal_mean, self.first_condition, self.second_condition, self.impact_normal, self.kink]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// Propagates `(W0, D_tW0)` along the path.
pub fn propagate_jacobi(flow: &Arc<JacobiFlow>, w0: &DVector<f64>, dw0: &DVector<f64>) -> JacobiField {
    JacobiField::from_initial(flow.clone(), w0, dw0)
}

impl VectorField for JacobiField {
    fn jet(&self, pp: &PathPoint) -> Jet {
        let (w, dw) = self.state(pp.t, pp.lim);
        let ddw = -(&pp.jac_op + &pp.hess) * &w;
        Jet { w, dw, ddw }
    }

    fn breaks(&self) -> Vec<f64> {
        let mut b = Vec::new();
        let (first, last) = (self.pieces.first().map(|p| p.0), self.pieces.last().map(|p| p.1));
        for (s, e, _) in &self.pieces {
            if Some(*s) != first {
                b.push(*s);
            }
            if Some(*e) != last {
                b.push(*e);
            }
        }
        b.sort_by(|a, c| a.total_cmp(c));
        b.dedup();
        b
    }

    fn support(&self) -> Option<(f64, f64)> {
        Some((self.pieces.first()?.0, self.pieces.last()?.1))
    }
}
