use std::sync::Arc;
use std::time::Duration;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use super::{Orbit, RunKind, Scenario};
use crate::dynamics::{shoot, two_point_solve, EventKind, Limit, NewtonOptions, PathDiagnostics, ReflectedPath};
use crate::error::{Error, Result};
use crate::index_form::{Boundary, IndexReport};
use crate::jacobi::{conjugate_points, propagate_jacobi, ConjugatePoint, ConjugateScan, JacobiFlow};
use crate::morse::{
    diameter_orbit, fixed_endpoint_index_theorem_with, TOL_RANK, periodic_index_theorem, periodic_sweep, FixedReport, HessianMethod,
    PeriodicOptions, PeriodicReport, PeriodicStatus, SweepReport,
};

/// Tolerance on the relative energy drift of a path.
pub const ENERGY_TOL: f64 = 1e-8;
/// Tolerance on the Jacobi jump-condition residuals.
pub const JUMP_TOL: f64 = 1e-8;
/// Tolerance on the asymmetry of the index-form matrix.
pub const ASYMMETRY_TOL: f64 = 1e-8;
/// Relative tolerance for positivity of the smallest eigenvalue.
pub const POSITIVITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
    Degenerate,
    InputError,
    Inconclusive,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::Fail => 2,
            Status::Degenerate => 3,
            Status::InputError => 4,
            Status::Inconclusive => 5,
        }
    }

    /// Status of a batch: input errors first, then failures, then
    /// inconclusive and degenerate runs.
    pub fn worst(all: impl IntoIterator<Item = Status>) -> Status {
        let rank = |s: &Status| match s {
            Status::Pass => 0,
            Status::Degenerate => 1,
            Status::Inconclusive => 2,
            Status::Fail => 3,
            Status::InputError => 4,
        };
        all.into_iter().max_by_key(rank).unwrap_or(Status::Pass)
    }
}

fn classify(e: &Error) -> (&'static str, Status) {
    use Status::*;
    match e {
        Error::Scenario(_) => ("scenario", InputError),
        Error::NotC1(_) => ("not-c1", InputError),
        Error::DimensionMismatch { .. } => ("dimension-mismatch", InputError),
        Error::TransmitThroughBoundary => ("transmit-through-boundary", InputError),
        Error::PolicyExhausted { .. } => ("policy-exhausted", InputError),
        Error::NoSurface => ("no-surface", InputError),
        Error::MaxEventsExceeded { .. } => ("max-events-exceeded", InputError),
        Error::SelfConjugate { .. } => ("self-conjugate", Degenerate),
        Error::ConjugateEndpoint { .. } => ("conjugate-endpoint", Degenerate),
        Error::Tangency { .. } => ("tangency", Degenerate),
        Error::DegenerateMetric { .. } => ("degenerate-metric", Degenerate),
        Error::DegenerateSurface { .. } => ("degenerate-surface", Degenerate),
        Error::InconclusiveIndex { .. } => ("inconclusive-index", Inconclusive),
        Error::GridTooCoarse { .. } => ("grid-too-coarse", Inconclusive),
        Error::RefineNodes { .. } => ("refine-nodes", Inconclusive),
        Error::NewtonDivergence { .. } => ("newton-divergence", Inconclusive),
        Error::StepSizeCollapse { .. } => ("step-size-collapse", Inconclusive),
        Error::OffSurface { .. } => ("off-surface", Inconclusive),
        Error::NotTangent { .. } => ("not-tangent", Inconclusive),
        Error::InvalidField(_) => ("invalid-field", Inconclusive),
        Error::Numerical(_) => ("numerical", Inconclusive),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorEntry {
    pub kind: String,
    pub message: String,
}

/// One pass/fail flag together with the two quantities it compares.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub left: Value,
    pub relation: &'static str,
    pub right: Value,
}

impl Check {
    pub fn equal<T: Serialize + PartialEq>(name: impl Into<String>, left: T, right: T) -> Self {
        Self { name: name.into(), pass: left == right, left: json!(left), relation: "==", right: json!(right) }
    }

    pub fn below(name: impl Into<String>, left: f64, bound: f64) -> Self {
        Self { name: name.into(), pass: left < bound, left: json!(left), relation: "<", right: json!(bound) }
    }

    pub fn above(name: impl Into<String>, left: f64, bound: f64) -> Self {
        Self { name: name.into(), pass: left > bound, left: json!(left), relation: ">", right: json!(bound) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventRow {
    pub time: f64,
    pub kind: EventKind,
    pub point: Vec<f64>,
    /// Angle between the incoming velocity and the inward normal, degrees.
    pub incidence_deg: f64,
    pub normal_speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathSummary {
    pub total_time: f64,
    pub reflections: usize,
    pub kinks: usize,
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
    pub x_end: Vec<f64>,
    pub v_end: Vec<f64>,
    pub events: Vec<EventRow>,
    pub diagnostics: PathDiagnostics,
}

fn summarize(path: &ReflectedPath) -> Result<PathSummary> {
    let mut events = Vec::with_capacity(path.events.len());
    for e in &path.events {
        let f = path.system.frame(&e.point)?;
        let a = f.normal_component(&e.v_in);
        let cos = (-a / f.conn.norm(&e.v_in)).clamp(-1.0, 1.0);
        events.push(EventRow {
            time: e.time,
            kind: e.kind,
            point: e.point.clone(),
            incidence_deg: cos.abs().acos().to_degrees(),
            normal_speed: a,
        });
    }
    let vec = |v: DVector<f64>| v.iter().copied().collect::<Vec<_>>();
    let (x_end, v_end) = path.endpoint();
    Ok(PathSummary {
        total_time: path.total_time,
        reflections: path.reflection_count(),
        kinks: path.events.len() - path.reflection_count(),
        x0: vec(path.position(0.0)),
        v0: vec(path.velocity(0.0, Limit::Right)),
        x_end: vec(x_end),
        v_end: vec(v_end),
        events,
        diagnostics: path.validate()?,
    })
}

/// Eigenvalues of one assembled index form.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenTable {
    pub bc: Boundary,
    pub k: usize,
    pub index: usize,
    pub nullity: usize,
    pub positive: usize,
    pub tol_eig: f64,
    pub asymmetry: f64,
    pub eigenvalues: Vec<f64>,
}

impl From<&IndexReport> for EigenTable {
    fn from(r: &IndexReport) -> Self {
        Self {
            bc: r.bc,
            k: r.k,
            index: r.index,
            nullity: r.nullity,
            positive: r.positive,
            tol_eig: r.tol_eig,
            asymmetry: r.asymmetry,
            eigenvalues: r.eigenvalues.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub scenario: Scenario,
    pub status: Status,
    pub exit_code: i32,
    pub error: Option<ErrorEntry>,
    pub checks: Vec<Check>,
    pub path: Option<PathSummary>,
    pub conjugate_points: Vec<ConjugatePoint>,
    pub fixed: Option<FixedReport>,
    pub periodic: Option<PeriodicReport>,
    pub sweep: Option<SweepReport>,
    pub eigen: Vec<EigenTable>,
    /// `(t, (−1)^k det B(t), σ ratio)` from the conjugate-point scan.
    #[serde(skip)]
    pub scan_samples: Vec<(f64, f64, f64)>,
    /// Wall-clock time; kept out of the JSON so reports stay reproducible.
    #[serde(skip)]
    pub elapsed: Duration,
}

impl RunReport {
    fn new(scenario: Scenario) -> Self {
        Self {
            scenario,
            status: Status::Pass,
            exit_code: 0,
            error: None,
            checks: Vec::new(),
            path: None,
            conjugate_points: Vec::new(),
            fixed: None,
            periodic: None,
            sweep: None,
            eigen: Vec::new(),
            scan_samples: Vec::new(),
            elapsed: Duration::ZERO,
        }
    }

    /// Report for a scenario that failed to load.
    pub fn from_load_error(name: &str, e: &Error) -> Value {
        let (kind, status) = classify(e);
        json!({
            "scenario": { "name": name },
            "status": status,
            "exit_code": status.exit_code(),
            "error": { "kind": kind, "message": e.to_string() },
            "checks": [],
        })
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }

    fn finish(&mut self, outcome: Result<bool>) {
        self.status = match outcome {
            Err(e) => {
                let (kind, status) = classify(&e);
                self.error = Some(ErrorEntry { kind: kind.into(), message: e.to_string() });
                status
            }
            Ok(_) if self.checks.iter().any(|c| !c.pass) => Status::Fail,
            Ok(true) => Status::Degenerate,
            Ok(false) => Status::Pass,
        };
        self.exit_code = self.status.exit_code();
    }
}

#[cfg(not(target_arch = "wasm32"))]
fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = std::time::Instant::now();
    let out = f();
    (out, start.elapsed())
}

// no monotonic clock on wasm32-unknown-unknown
#[cfg(target_arch = "wasm32")]
fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    (f(), Duration::ZERO)
}

/// Runs a validated scenario. Errors are recorded in the report.
pub fn run(scenario: &Scenario) -> RunReport {
    let mut report = RunReport::new(scenario.clone());
    let (outcome, elapsed) = timed(|| match scenario.run {
        RunKind::Shoot => run_shoot(scenario, &mut report),
        RunKind::Solve => run_solve(scenario, &mut report),
        RunKind::IndexFixed => run_index_fixed(scenario, &mut report),
        RunKind::IndexPeriodic => run_index_periodic(scenario, &mut report),
        RunKind::PeriodicSweep => run_sweep(scenario, &mut report),
    });
    report.finish(outcome);
    report.elapsed = elapsed;
    report
}

impl Scenario {
    /// The path a run works on: shot from `[initial]`, or solved from
    /// `[endpoints]` for solve runs.
    pub fn path(&self) -> Result<ReflectedPath> {
        let system = self.system();
        if self.run == RunKind::Solve {
            let e = self.endpoints.as_ref().ok_or_else(|| Error::Scenario("missing [endpoints] table".into()))?;
            return two_point_solve(&system, &e.x, &e.y, &e.v_guess, e.t, &self.policy(), &self.newton_options());
        }
        let init = self.initial.as_ref().ok_or_else(|| Error::Scenario("missing [initial] table".into()))?;
        if init.orbit == Some(Orbit::DiskDiameter) {
            return diameter_orbit(&system);
        }
        let (Some(x), Some(v), Some(t)) = (&init.x, &init.v, init.t) else {
            return Err(Error::Scenario("[initial] needs x, v and t".into()));
        };
        shoot(&system, x, v, t, &self.policy(), &self.shoot_options())
    }

    pub fn newton_options(&self) -> NewtonOptions {
        NewtonOptions {
            tol: self.numerics.newton_tol,
            tol_rank: self.numerics.tol_rank,
            shoot: self.shoot_options(),
            ..NewtonOptions::default()
        }
    }
}

fn path_checks(s: &Scenario, path: &ReflectedPath, report: &mut RunReport) -> Result<Arc<JacobiFlow>> {
    let summary = summarize(path)?;
    report.checks.push(Check::below("energy drift", summary.diagnostics.energy_drift, ENERGY_TOL));
    if let Some(r) = s.expect.reflections {
        report.checks.push(Check::equal("reflections", summary.reflections, r));
    }
    report.path = Some(summary);
    let flow = Arc::new(JacobiFlow::new(path)?);
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let n = path.dim();
    let mut worst: f64 = 0.0;
    for _ in 0..s.numerics.jacobi_samples {
        let w0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let dw0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        worst = worst.max(propagate_jacobi(&flow, &w0, &dw0).jump_residuals()?.max());
    }
    if !path.events.is_empty() && s.numerics.jacobi_samples > 0 {
        report.checks.push(Check::below("jacobi jump residual", worst, JUMP_TOL));
    }
    Ok(flow)
}

fn scan(s: &Scenario, flow: &JacobiFlow, report: &mut RunReport) -> Result<ConjugateScan> {
    let sc = conjugate_points(flow, s.numerics.grid_dt, Some(s.numerics.tol_rank))?;
    report.conjugate_points = sc.points.clone();
    report.scan_samples = sc.samples.clone();
    Ok(sc)
}

fn conjugate_expectations(s: &Scenario, points: &[ConjugatePoint], report: &mut RunReport) {
    let e = &s.expect;
    if e.conjugate_times.is_empty() {
        return;
    }
    report.checks.push(Check::equal("conjugate point count", points.len(), e.conjugate_times.len()));
    for (i, &t) in e.conjugate_times.iter().enumerate() {
        let err = points.iter().map(|p| (p.time - t).abs()).fold(f64::INFINITY, f64::min);
        report.checks.push(Check::below(format!("conjugate time {i} error"), err, e.time_tol));
        if let Some(&m) = e.multiplicities.get(i) {
            let got = points.iter().find(|p| (p.time - t).abs() <= e.time_tol).map_or(0, |p| p.multiplicity);
            report.checks.push(Check::equal(format!("conjugate time {i} multiplicity"), got, m));
        }
    }
}

fn run_shoot(s: &Scenario, report: &mut RunReport) -> Result<bool> {
    let path = s.path()?;
    let flow = path_checks(s, &path, report)?;
    let sc = scan(s, &flow, report)?;
    conjugate_expectations(s, &sc.points, report);
    Ok(false)
}

fn run_solve(s: &Scenario, report: &mut RunReport) -> Result<bool> {
    let e = s.endpoints.as_ref().ok_or_else(|| Error::Scenario("missing [endpoints] table".into()))?;
    let path = s.path()?;
    let miss = (path.endpoint().0 - DVector::from_column_slice(&e.y)).amax();
    report.checks.push(Check::below("endpoint miss", miss, s.numerics.newton_tol));
    let flow = path_checks(s, &path, report)?;
    let sc = scan(s, &flow, report)?;
    conjugate_expectations(s, &sc.points, report);
    Ok(false)
}

fn index_expectations(s: &Scenario, index: usize, nullity: usize, first: &IndexReport, report: &mut RunReport) {
    let e = &s.expect;
    if let Some(i) = e.index {
        report.checks.push(Check::equal("expected index", index, i));
    }
    if let Some(z) = e.nullity {
        report.checks.push(Check::equal("expected nullity", nullity, z));
    }
    if e.positive_definite {
        let min = first.eigenvalues.first().copied().unwrap_or(0.0);
        let max = first.eigenvalues.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        report.checks.push(Check::above("smallest eigenvalue / largest |eigenvalue|", min / max, POSITIVITY_TOL));
    }
}

fn fixed_checks(fixed: &FixedReport, prefix: &str, report: &mut RunReport) {
    report.checks.push(Check::equal(format!("{prefix}index = interior conjugate points"), fixed.index, fixed.conjugate_count));
    report.checks.push(Check::equal(
        format!("{prefix}nullity = endpoint multiplicity"),
        fixed.nullity,
        fixed.endpoint_multiplicity,
    ));
}

fn table_checks(reports: &[IndexReport], report: &mut RunReport) {
    let first = &reports[0];
    for r in reports {
        let tag = match r.bc {
            Boundary::Fixed => "fixed",
            Boundary::Periodic => "periodic",
        };
        report.checks.push(Check::below(format!("{tag} asymmetry k={}", r.k), r.asymmetry, ASYMMETRY_TOL));
        if r.k != first.k {
            report.checks.push(Check::equal(format!("{tag} (index, nullity) k={} vs k={}", r.k, first.k), (r.index, r.nullity), (first.index, first.nullity)));
        }
        report.eigen.push(EigenTable::from(r));
    }
}

fn run_index_fixed(s: &Scenario, report: &mut RunReport) -> Result<bool> {
    let path = s.path()?;
    let flow = path_checks(s, &path, report)?;
    let sc = scan(s, &flow, report)?;
    conjugate_expectations(s, &sc.points, report);
    let fixed = fixed_endpoint_index_theorem_with(&flow, &s.numerics.ks, &sc)?;
    fixed_checks(&fixed, "", report);
    table_checks(&fixed.reports, report);
    index_expectations(s, fixed.index, fixed.nullity, &fixed.reports[0], report);
    report.fixed = Some(fixed);
    Ok(false)
}

fn periodic_options(s: &Scenario) -> PeriodicOptions {
    PeriodicOptions { ks: s.numerics.ks.clone(), h: s.numerics.h, base_time: s.numerics.base_time, method: HessianMethod::Gradient }
}

fn run_index_periodic(s: &Scenario, report: &mut RunReport) -> Result<bool> {
    let path = s.path()?;
    let flow = path_checks(s, &path, report)?;
    scan(s, &flow, report)?;
    let p = periodic_index_theorem(&path, &periodic_options(s))?;
    table_checks(&p.fixed.reports, report);
    table_checks(&p.periodic_reports, report);
    let degenerate = p.status == PeriodicStatus::Degenerate;
    fixed_checks(&p.fixed, "fixed ", report);
    if degenerate {
        report.checks.push(Check::below("base point self-conjugate (sigma ratio)", p.sigma_ratio, TOL_RANK));
    } else {
        let conc = p.concavity.as_ref().expect("non-degenerate run has a Hessian");
        report.checks.push(Check::equal("periodic index = fixed index + concavity index", p.periodic_index, p.fixed.index + conc.index));
        report.checks.push(Check::equal("concavity index at h and h/2", conc.index, conc.index_half));
        if let Some(hw) = &p.haynsworth {
            report.checks.push(Check::equal("Haynsworth inertia additivity (index)", hw.whole.0, hw.interior.0 + hw.schur.0));
            report.checks.push(Check::equal("Haynsworth inertia additivity (nullity)", hw.whole.1, hw.interior.1 + hw.schur.1));
        }
        let e = &s.expect;
        if let Some(i) = e.periodic_index {
            report.checks.push(Check::equal("expected periodic index", p.periodic_index, i));
        }
        if let Some(i) = e.concavity_index {
            report.checks.push(Check::equal("expected concavity index", conc.index, i));
        }
    }
    index_expectations(s, p.fixed.index, p.fixed.nullity, &p.fixed.reports[0], report);
    report.periodic = Some(p);
    Ok(degenerate)
}

fn run_sweep(s: &Scenario, report: &mut RunReport) -> Result<bool> {
    let spec = s.sweep.clone().unwrap_or_default();
    let r = periodic_sweep(spec.count, s.seed, spec.amplitude, &periodic_options(s));
    report.checks.push(Check::equal("failed draws", r.failed, 0));
    report.checks.push(Check::equal("draws with errors", r.errors, 0));
    report.checks.push(Check::below("degenerate fraction", r.degenerate as f64 / spec.count as f64, 0.1));
    report.sweep = Some(r);
    Ok(false)
}
