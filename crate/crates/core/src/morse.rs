//! Morse index theorems for reflected paths: fixed endpoints (index equals
//! the number of conjugate points) and closed orbits (periodic index equals
//! fixed index plus the index of the Hessian of `x ↦ S(x, x)`).

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Serialize, Serializer};

use crate::dynamics::{shoot, two_point_solve, EventPolicy, Limit, NewtonOptions, ReflectedPath, ShootOptions};
use crate::error::{Error, Result};
use crate::fields::{mirror_frames, random_frame_field};
use crate::geometry::surface::LevelSet;
use crate::geometry::{Conformal, Polynomial, System};
use crate::index_form::{index_stability_scan, inertia, second_variation, Boundary, IndexReport, K0};
use crate::jacobi::{conjugate_points, propagate_jacobi, ConjugateScan, JacobiField, JacobiFlow};
use crate::ode::OdeOptions;

/// Relative singular value of `B(T)` below which `α(0)` counts as conjugate
/// to `α(T)`.
pub const TOL_RANK: f64 = 1e-7;

fn serialize_rows<S: Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
    rows.serialize(s)
}

/// `σ_min(B(T)) / |Ψ_D(T)|`.
pub fn endpoint_sigma_ratio(flow: &JacobiFlow) -> f64 {
    let n = flow.dim();
    let psi = flow.endpoint_map();
    let scale = psi.view((0, n), (2 * n, n)).into_owned().singular_values().max();
    psi.view((0, n), (n, n)).into_owned().singular_values().min() / scale
}

#[derive(Debug, Clone, Serialize)]
pub struct FixedReport {
    pub index: usize,
    pub nullity: usize,
    /// Conjugate points in `(0, T)`, with multiplicity.
    pub conjugate_count: usize,
    pub endpoint_multiplicity: usize,
    pub conjugate_times: Vec<f64>,
    /// `(k, index, nullity)` for each node count.
    pub table: Vec<(usize, usize, usize)>,
    pub pass: bool,
    #[serde(skip)]
    pub reports: Vec<IndexReport>,
}

/// Fixed-endpoint theorem: the index of `J''` equals the number of
/// conjugate points in `(0, T)`, and the nullity equals the multiplicity of
/// `α(T)` as a conjugate point.
pub fn fixed_endpoint_index_theorem(flow: &Arc<JacobiFlow>, ks: &[usize]) -> Result<FixedReport> {
    fixed_endpoint_index_theorem_with(flow, ks, &conjugate_points(flow, None, None)?)
}

/// As [`fixed_endpoint_index_theorem`], with a conjugate-point scan computed
/// by the caller.
pub fn fixed_endpoint_index_theorem_with(flow: &Arc<JacobiFlow>, ks: &[usize], scan: &ConjugateScan) -> Result<FixedReport> {
    let reports = index_stability_scan(flow, ks, Boundary::Fixed)?;
    let t_end = flow.path.total_time;
    let conjugate_count = scan.interior_count(t_end);
    let endpoint_multiplicity = scan.endpoint_multiplicity(t_end);
    let r = &reports[0];
    Ok(FixedReport {
        index: r.index,
        nullity: r.nullity,
        conjugate_count,
        endpoint_multiplicity,
        conjugate_times: scan.points.iter().map(|p| p.time).collect(),
        table: reports.iter().map(|r| (r.k, r.index, r.nullity)).collect(),
        pass: r.index == conjugate_count && r.nullity == endpoint_multiplicity,
        reports,
    })
}

/// Largest of the closure defects `|α(T) − α(0)|`, `|α̇(T) − α̇(0)|`.
pub fn closure_defect(path: &ReflectedPath) -> f64 {
    let (x0, v0) = path.state(0.0, Limit::Right);
    let (x1, v1) = path.endpoint();
    (x1 - x0).amax().max((v1 - v0).amax())
}

/// Midpoint of the first event-free interval.
pub fn default_base_time(path: &ReflectedPath) -> f64 {
    0.5 * path.events.first().map_or(path.total_time, |e| e.time)
}

/// The same closed orbit started at `α(t)`.
pub fn rebase(path: &ReflectedPath, t: f64) -> Result<ReflectedPath> {
    if t == 0.0 {
        return Ok(path.clone());
    }
    let (x, v) = path.state(t, Limit::Right);
    let before = path.events.iter().filter(|e| e.time < t).count();
    let mut decisions = path.decisions_taken();
    decisions.rotate_left(before);
    let mut opts = path.options;
    opts.start_side = Some(path.side_at(t, Limit::Right));
    let mut p = shoot(&path.system, x.as_slice(), v.as_slice(), path.total_time, &EventPolicy::exact(decisions), &opts)?;
    p.periodic = true;
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum HessianMethod {
    /// Central differences of the gradient `g(x)(α̇_x(T) − α̇_x(0))` of `x ↦ S(x, x)`.
    Gradient,
    /// Second differences of `S(x, x)` itself.
    Action,
}

#[derive(Debug, Clone, Serialize)]
pub struct ActionHessian {
    pub base_point: Vec<f64>,
    pub h: f64,
    pub method: HessianMethod,
    #[serde(serialize_with = "serialize_rows")]
    pub matrix: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    pub asymmetry: f64,
    /// Zero tolerance for eigenvalues: the larger of `1e-7 max |λ|` and ten
    /// times the change of the matrix when `h` is halved.
    pub tol: f64,
    pub index: usize,
    pub nullity: usize,
    /// Index with step `h / 2`.
    pub index_half: usize,
}

fn tight_newton() -> NewtonOptions {
    let mut o = NewtonOptions { tol: 1e-12, ..NewtonOptions::default() };
    o.shoot.ode = OdeOptions { rtol: 1e-12, atol: 1e-14, ..OdeOptions::default() };
    o
}

/// The closed path of period `T` through `x`, or the path from `x` to `y`.
fn solve_from(path: &ReflectedPath, x: &[f64], y: &[f64], opts: &NewtonOptions) -> Result<ReflectedPath> {
    let (_, v0) = path.state(0.0, Limit::Right);
    let policy = EventPolicy::exact(path.decisions_taken());
    two_point_solve(&path.system, x, y, v0.as_slice(), path.total_time, &policy, opts)
}

fn action_at(path: &ReflectedPath, x: &[f64], opts: &NewtonOptions) -> Result<f64> {
    let q = solve_from(path, x, x, opts)?;
    // first-order correction for the endpoint miss
    let (xe, ve) = q.endpoint();
    let conn = q.system.connection(xe.as_slice())?;
    let miss = DVector::from_column_slice(x) - xe;
    Ok(crate::dynamics::action(&q)? + conn.inner(&ve, &miss))
}

fn gradient_at(path: &ReflectedPath, x: &[f64], opts: &NewtonOptions) -> Result<DVector<f64>> {
    let q = solve_from(path, x, x, opts)?;
    let (_, v0) = q.state(0.0, Limit::Right);
    let (_, v1) = q.endpoint();
    let g = q.system.chart.metric(x);
    Ok(g * (v1 - v0))
}

fn hessian_matrix(path: &ReflectedPath, h: f64, method: HessianMethod, opts: &NewtonOptions) -> Result<(DMatrix<f64>, f64)> {
    let n = path.dim();
    let p = path.position(0.0);
    let shifted = |steps: &[(usize, f64)]| {
        let mut x = p.clone();
        for (i, s) in steps {
            x[*i] += s * h;
        }
        x
    };
    let raw = match method {
        HessianMethod::Gradient => {
            let pts: Vec<DVector<f64>> = (0..n).flat_map(|j| [shifted(&[(j, 1.0)]), shifted(&[(j, -1.0)])]).collect();
            let grads = crate::par::map(&pts, |x| gradient_at(path, x.as_slice(), opts));
            let grads = grads.into_iter().collect::<Result<Vec<_>>>()?;
            DMatrix::from_fn(n, n, |i, j| (grads[2 * j][i] - grads[2 * j + 1][i]) / (2.0 * h))
        }
        HessianMethod::Action => {
            let mut stencil: Vec<Vec<(usize, f64)>> = vec![vec![]];
            for i in 0..n {
                stencil.push(vec![(i, 1.0)]);
                stencil.push(vec![(i, -1.0)]);
                for j in 0..i {
                    for (a, b) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                        stencil.push(vec![(i, a), (j, b)]);
                    }
                }
            }
            let pts: Vec<DVector<f64>> = stencil.iter().map(|s| shifted(s)).collect();
            let vals = crate::par::map(&pts, |x| action_at(path, x.as_slice(), opts));
            let vals = vals.into_iter().collect::<Result<Vec<f64>>>()?;
            let find = |key: &[(usize, f64)]| vals[stencil.iter().position(|s| s.as_slice() == key).unwrap()];
            let f0 = find(&[]);
            DMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    (find(&[(i, 1.0)]) - 2.0 * f0 + find(&[(i, -1.0)])) / (h * h)
                } else {
                    let (i, j) = if i > j { (i, j) } else { (j, i) };
                    (find(&[(i, 1.0), (j, 1.0)]) - find(&[(i, 1.0), (j, -1.0)]) - find(&[(i, -1.0), (j, 1.0)])
                        + find(&[(i, -1.0), (j, -1.0)]))
                        / (4.0 * h * h)
                }
            })
        }
    };
    let asymmetry = (&raw - raw.transpose()).amax();
    Ok((0.5 * (&raw + raw.transpose()), asymmetry))
}

/// Hessian of `x ↦ S(x, x)` at `p = α(0)` for a closed orbit, where `S(x, y)`
/// is the action of the path from `x` to `y` in time `T` near `α`.
pub fn action_hessian(path: &ReflectedPath, h: f64, method: HessianMethod) -> Result<ActionHessian> {
    let flow = JacobiFlow::new(path)?;
    let ratio = endpoint_sigma_ratio(&flow);
    if ratio < TOL_RANK {
        return Err(Error::SelfConjugate { sigma_ratio: ratio });
    }
    let opts = tight_newton();
    let (m, asymmetry) = hessian_matrix(path, h, method, &opts)?;
    let (m_half, _) = hessian_matrix(path, 0.5 * h, method, &opts)?;
    let (eigenvalues, _, _, _, rel_tol) = inertia(&m, 1e-7);
    let tol = rel_tol.max(10.0 * (&m - &m_half).amax());
    let count = |ev: &[f64]| (ev.iter().filter(|l| **l < -tol).count(), ev.iter().filter(|l| l.abs() <= tol).count());
    let (index, nullity) = count(&eigenvalues);
    let (ev_half, ..) = inertia(&m_half, 1e-7);
    let (index_half, _) = count(&ev_half);
    Ok(ActionHessian {
        base_point: path.position(0.0).iter().copied().collect(),
        h,
        method,
        matrix: m,
        eigenvalues,
        asymmetry,
        tol,
        index,
        nullity,
        index_half,
    })
}

/// Inertia additivity of the periodic index-form matrix split into the
/// interior-node block and its Schur complement on the end-node block. All
/// blocks use the zero tolerance of the whole matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Haynsworth {
    /// `(index, nullity, positive)` of the whole matrix.
    pub whole: (usize, usize, usize),
    pub interior: (usize, usize, usize),
    pub schur: (usize, usize, usize),
    pub holds: bool,
}

pub fn haynsworth_check(periodic: &IndexReport, n: usize) -> Result<Haynsworth> {
    let m = &periodic.matrix;
    let d = m.nrows();
    let a = m.view((0, 0), (n, n)).into_owned();
    let b = m.view((0, n), (n, d - n)).into_owned();
    let c = m.view((n, n), (d - n, d - n)).into_owned();
    let c_inv = c.clone().try_inverse().ok_or(Error::SelfConjugate { sigma_ratio: 0.0 })?;
    let schur = &a - &b * c_inv * b.transpose();
    let schur = 0.5 * (&schur + schur.transpose());
    let sig = |x: &DMatrix<f64>| {
        let ev = x.symmetric_eigenvalues();
        let tol = periodic.tol_eig;
        let (i, z) = (ev.iter().filter(|l| **l < -tol).count(), ev.iter().filter(|l| l.abs() <= tol).count());
        (i, z, ev.len() - i - z)
    };
    let whole = (periodic.index, periodic.nullity, periodic.positive);
    let interior = sig(&c);
    let schur = sig(&schur);
    let holds = whole.0 == interior.0 + schur.0 && whole.1 == interior.1 + schur.1;
    Ok(Haynsworth { whole, interior, schur, holds })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PeriodicStatus {
    Pass,
    Fail,
    /// `α(0)` is conjugate to itself; the identity is not asserted.
    Degenerate,
}

#[derive(Debug, Clone, Serialize)]
pub struct PeriodicReport {
    pub base_time: f64,
    pub base_point: Vec<f64>,
    pub periodic_index: usize,
    pub periodic_nullity: usize,
    pub periodic_table: Vec<(usize, usize, usize)>,
    pub fixed: FixedReport,
    pub concavity: Option<ActionHessian>,
    pub haynsworth: Option<Haynsworth>,
    pub self_conjugate: bool,
    pub sigma_ratio: f64,
    pub status: PeriodicStatus,
    #[serde(skip)]
    pub periodic_reports: Vec<IndexReport>,
}

impl PeriodicReport {
    pub fn concavity_index(&self) -> Option<usize> {
        self.concavity.as_ref().map(|h| h.index)
    }
}

#[derive(Debug, Clone)]
pub struct PeriodicOptions {
    pub ks: Vec<usize>,
    pub h: f64,
    /// Time along the orbit of the base point; defaults to the midpoint of
    /// the first event-free interval.
    pub base_time: Option<f64>,
    pub method: HessianMethod,
}

impl Default for PeriodicOptions {
    fn default() -> Self {
        Self { ks: vec![K0, 2 * K0, 4 * K0], h: 1e-4, base_time: None, method: HessianMethod::Gradient }
    }
}

/// Periodic theorem for a closed orbit: computes the periodic index, the
/// fixed-endpoint index and the concavity index independently and compares.
pub fn periodic_index_theorem(path: &ReflectedPath, opts: &PeriodicOptions) -> Result<PeriodicReport> {
    let gap = closure_defect(path);
    if gap > 1e-7 {
        return Err(Error::Numerical(format!("path is not closed (defect {gap:e})")));
    }
    let base_time = opts.base_time.unwrap_or_else(|| default_base_time(path));
    let base = rebase(path, base_time)?;
    let flow = Arc::new(JacobiFlow::new(&base)?);
    let sigma_ratio = endpoint_sigma_ratio(&flow);
    let self_conjugate = sigma_ratio < TOL_RANK;
    let fixed = fixed_endpoint_index_theorem(&flow, &opts.ks)?;
    let periodic = index_stability_scan(&flow, &opts.ks, Boundary::Periodic)?;
    let p0 = periodic[0].clone();
    let periodic_table = periodic.iter().map(|r| (r.k, r.index, r.nullity)).collect();
    let (concavity, haynsworth, status) = if self_conjugate {
        (None, None, PeriodicStatus::Degenerate)
    } else {
        let hess = action_hessian(&base, opts.h, opts.method)?;
        let hw = haynsworth_check(&p0, base.dim())?;
        let ok = p0.index == fixed.index + hess.index;
        (Some(hess), Some(hw), if ok { PeriodicStatus::Pass } else { PeriodicStatus::Fail })
    };
    Ok(PeriodicReport {
        base_time,
        base_point: base.position(0.0).iter().copied().collect(),
        periodic_index: p0.index,
        periodic_nullity: p0.nullity,
        periodic_table,
        fixed,
        concavity,
        haynsworth,
        self_conjugate,
        sigma_ratio,
        status,
        periodic_reports: periodic,
    })
}

/// The Jacobi field with `W(0) = W(T) = w`.
pub fn closed_jacobi_field(flow: &Arc<JacobiFlow>, w: &DVector<f64>) -> Result<JacobiField> {
    let n = flow.dim();
    let phi = flow.endpoint_map();
    let a = phi.view((0, 0), (n, n)).into_owned();
    let b = phi.view((0, n), (n, n)).into_owned();
    let ratio = endpoint_sigma_ratio(flow);
    if ratio < TOL_RANK {
        return Err(Error::SelfConjugate { sigma_ratio: ratio });
    }
    let d = b.lu().solve(&(w - a * w)).ok_or(Error::SelfConjugate { sigma_ratio: 0.0 })?;
    Ok(propagate_jacobi(flow, w, &d))
}

/// `max |J''(W, Z)|` over random closed Jacobi fields `W` and random fields
/// `Z` vanishing at both ends.
pub fn splitting_orthogonality_check<R: Rng>(path: &ReflectedPath, pairs: usize, rng: &mut R) -> Result<f64> {
    let flow = Arc::new(JacobiFlow::new(path)?);
    let frames = Arc::new(mirror_frames(path)?);
    let n = path.dim();
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let w = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let wf = closed_jacobi_field(&flow, &w)?;
        let z = random_frame_field(path, frames.clone(), rng, 6, 2, true)?;
        worst = worst.max(second_variation(path, &wf, &z, Boundary::Periodic)?.abs());
    }
    Ok(worst)
}

/// Unit-disk billiard with the conformal metric `e^{2φ}|dx|²`, where `φ` is
/// even in `y`; the diameter along the `x`-axis is a closed orbit.
pub fn conformal_disk(phi: Polynomial) -> System {
    System::new(Arc::new(Conformal::new(2, phi))).with_surface(Arc::new(LevelSet::sphere(&[0.0, 0.0], 1.0)), true)
}

/// Monomials of the random conformal factor, all even in `y`.
pub const SWEEP_MONOMIALS: [[u32; 2]; 5] = [[1, 0], [2, 0], [3, 0], [0, 2], [1, 2]];

/// Draws `φ = Σ c_i m_i` with `|c_i| ≤ amplitude`.
pub fn random_phi<R: Rng>(rng: &mut R, amplitude: f64) -> Polynomial {
    Polynomial::new(SWEEP_MONOMIALS.iter().map(|m| (rng.random_range(-amplitude..=amplitude), m.to_vec())).collect())
}

/// The unit-speed two-bounce orbit along the `x`-axis, started at the origin
/// and closed after one period.
pub fn diameter_orbit(system: &System) -> Result<ReflectedPath> {
    let x0 = [0.0, 0.0];
    let speed = 1.0 / system.connection(&x0)?.g[(0, 0)].sqrt();
    let v0 = [speed, 0.0];
    let probe = shoot(system, &x0, &v0, 12.0, &EventPolicy::always_reflect(), &ShootOptions::default())?;
    if probe.events.len() < 3 {
        return Err(Error::Numerical("diameter orbit did not bounce".into()));
    }
    let period = probe.events[2].time - probe.events[0].time;
    let mut p = shoot(system, &x0, &v0, period, &EventPolicy::always_reflect(), &ShootOptions::default())?;
    p.periodic = true;
    Ok(p)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRun {
    pub draw: usize,
    pub coefficients: Vec<f64>,
    pub status: Option<PeriodicStatus>,
    pub periodic_index: Option<usize>,
    pub fixed_index: Option<usize>,
    pub concavity_index: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub seed: u64,
    pub amplitude: f64,
    pub runs: Vec<SweepRun>,
    pub passed: usize,
    pub failed: usize,
    pub degenerate: usize,
    pub errors: usize,
}

/// Periodic theorem on `count` random conformal disks drawn from `seed`.
pub fn periodic_sweep(count: usize, seed: u64, amplitude: f64, opts: &PeriodicOptions) -> SweepReport {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let phis: Vec<Polynomial> = (0..count).map(|_| random_phi(&mut rng, amplitude)).collect();
    let draws: Vec<(usize, Polynomial)> = phis.into_iter().enumerate().collect();
    let runs = crate::par::map(&draws, |(i, phi)| {
        let coefficients = phi.terms.iter().map(|t| t.coeff).collect();
        let res = diameter_orbit(&conformal_disk(phi.clone())).and_then(|p| periodic_index_theorem(&p, opts));
        match res {
            Ok(r) => SweepRun {
                draw: *i,
                coefficients,
                status: Some(r.status),
                periodic_index: Some(r.periodic_index),
                fixed_index: Some(r.fixed.index),
                concavity_index: r.concavity_index(),
                error: None,
            },
            Err(e) => SweepRun {
                draw: *i,
                coefficients,
                status: None,
                periodic_index: None,
                fixed_index: None,
                concavity_index: None,
                error: Some(e.to_string()),
            },
        }
    });
    let count_status = |s: PeriodicStatus| runs.iter().filter(|r| r.status == Some(s)).count();
    SweepReport {
        seed,
        amplitude,
        passed: count_status(PeriodicStatus::Pass),
        failed: count_status(PeriodicStatus::Fail),
        degenerate: count_status(PeriodicStatus::Degenerate),
        errors: runs.iter().filter(|r| r.error.is_some()).count(),
        runs,
    }
}
