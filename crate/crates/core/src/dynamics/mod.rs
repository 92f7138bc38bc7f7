//! Reflected physical paths: integration between events, the reflection law,
//! shooting, and path diagnostics.

pub mod action;
pub mod two_point;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Side, System, TOL_Y};
use crate::ode::{integrate, DenseSolution, OdeOptions};

pub use action::{action, criticality_residual};
pub use two_point::{two_point_solve, NewtonOptions};

/// Smallest normal speed accepted at a crossing.
pub const V_MIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    Reflection,
    Kink,
}

#[derive(Debug, Clone)]
pub struct EventRecord {
    pub time: f64,
    pub point: Vec<f64>,
    pub v_in: DVector<f64>,
    pub v_out: DVector<f64>,
    pub kind: EventKind,
    /// Side of the segment that ends at this event.
    pub side_before: Side,
}

impl EventRecord {
    pub fn side_after(&self) -> Side {
        match self.kind {
            EventKind::Reflection => self.side_before,
            EventKind::Kink => self.side_before.flip(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Reflect,
    Transmit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Overflow {
    ErrorOnExtra,
    AlwaysReflect,
    AlwaysTransmit,
}

/// Reflect/transmit choices consumed at successive crossings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventPolicy {
    pub decisions: Vec<Decision>,
    pub overflow: Overflow,
}

impl EventPolicy {
    pub fn always_reflect() -> Self {
        Self { decisions: vec![], overflow: Overflow::AlwaysReflect }
    }

    pub fn always_transmit() -> Self {
        Self { decisions: vec![], overflow: Overflow::AlwaysTransmit }
    }

    pub fn exact(decisions: Vec<Decision>) -> Self {
        Self { decisions, overflow: Overflow::ErrorOnExtra }
    }

    pub fn decision(&self, crossing: usize) -> Result<Decision> {
        if let Some(d) = self.decisions.get(crossing) {
            return Ok(*d);
        }
        match self.overflow {
            Overflow::ErrorOnExtra => Err(Error::PolicyExhausted { crossing }),
            Overflow::AlwaysReflect => Ok(Decision::Reflect),
            Overflow::AlwaysTransmit => Ok(Decision::Transmit),
        }
    }

    pub fn has_transmit(&self) -> bool {
        self.decisions.contains(&Decision::Transmit) || self.overflow == Overflow::AlwaysTransmit
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootOptions {
    pub ode: OdeOptions,
    pub max_events: usize,
    pub v_min: f64,
    /// Scales the outgoing velocity at reflections. Anything but 1 produces a
    /// non-physical path; used as a negative control.
    pub reflection_gain: f64,
    /// Side of the hypersurface at `t = 0`; inferred from `ρ(x0)` when absent.
    pub start_side: Option<Side>,
}

impl Default for ShootOptions {
    fn default() -> Self {
        Self { ode: OdeOptions::default(), max_events: 64, v_min: V_MIN, reflection_gain: 1.0, start_side: None }
    }
}

/// Smooth piece of a path; the dense state is `(x, v)`.
#[derive(Debug, Clone)]
pub struct Segment {
    pub t0: f64,
    pub t1: f64,
    pub side: Side,
    pub sol: DenseSolution,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Limit {
    Left,
    Right,
}

#[derive(Debug, Clone)]
pub struct ReflectedPath {
    pub system: System,
    pub segments: Vec<Segment>,
    pub events: Vec<EventRecord>,
    pub total_time: f64,
    pub periodic: bool,
    pub policy: EventPolicy,
    pub options: ShootOptions,
}

fn path_rhs(system: &System, side: Side) -> impl FnMut(f64, &[f64], &mut [f64]) + '_ {
    let n = system.dim();
    move |_t, y, dy| {
        let x = &y[..n];
        let v = DVector::from_column_slice(&y[n..]);
        dy[..n].copy_from_slice(&y[n..]);
        match system.connection(x) {
            Ok(conn) => {
                let acc = -conn.contract(&v, &v) - system.grad_potential(&conn, x, side);
                dy[n..].copy_from_slice(acc.as_slice());
            }
            Err(_) => dy[n..].iter_mut().for_each(|d| *d = f64::NAN),
        }
    }
}

/// Integrates the equations of motion from `(x, v)` at `t0` until `t_end` or
/// the first crossing of the hypersurface out of `side`.
pub fn integrate_segment(
    system: &System,
    x: &[f64],
    v: &[f64],
    t0: f64,
    t_end: f64,
    side: Side,
    opts: &OdeOptions,
) -> Result<(DenseSolution, Option<(f64, Vec<f64>, DVector<f64>)>)> {
    let n = system.dim();
    if x.len() != n || v.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x.len().max(v.len()) });
    }
    system.connection(x)?;
    let y0: Vec<f64> = x.iter().chain(v).copied().collect();
    let rhs = path_rhs(system, side);
    let surf = system.surface.clone();
    let ev = move |y: &[f64]| side.sign() * surf.as_ref().map_or(1.0, |s| s.rho(&y[..n]));
    let event: Option<&dyn Fn(&[f64]) -> f64> = if system.surface.is_some() { Some(&ev) } else { None };
    let (sol, crossing) = integrate(rhs, t0, &y0, t_end, opts, event)?;
    if sol.eval(sol.t1()).iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateMetric { x: sol.eval(sol.t1())[..n].to_vec() });
    }
    Ok((sol, crossing.map(|c| (c.t, c.y[..n].to_vec(), DVector::from_column_slice(&c.y[n..])))))
}

/// `v_out = v_in − 2⟨v_in, N⟩N` at the point `y` of the hypersurface.
pub fn reflect_velocity(system: &System, y: &[f64], v_in: &DVector<f64>) -> Result<DVector<f64>> {
    let frame = system.frame(y)?;
    let vn = frame.normal_component(v_in);
    if vn.abs() <= V_MIN {
        return Err(Error::Tangency { time: f64::NAN, normal_speed: vn });
    }
    Ok(frame.reflect(v_in))
}

/// Shoots the reflected path with initial data `(x0, v0)` on `[0, T]`.
pub fn shoot(
    system: &System,
    x0: &[f64],
    v0: &[f64],
    total_time: f64,
    policy: &EventPolicy,
    opts: &ShootOptions,
) -> Result<ReflectedPath> {
    let n = system.dim();
    if x0.len() != n || v0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x0.len().max(v0.len()) });
    }
    if !(total_time > 0.0 && total_time.is_finite()) || x0.iter().chain(v0).any(|c| !c.is_finite()) {
        return Err(Error::Scenario(format!("initial data must be finite and the total time positive (T = {total_time})")));
    }
    if system.boundary && policy.has_transmit() {
        return Err(Error::TransmitThroughBoundary);
    }
    let rho0 = system.rho(x0);
    let mut side = opts.start_side.unwrap_or_else(|| rho0.map_or(Side::Plus, Side::of));
    if let Some(r) = rho0 {
        if side.sign() * r < -TOL_Y {
            return Err(Error::Scenario(format!("start point lies on the wrong side of the hypersurface (rho = {r:e})")));
        }
    }
    let mut segments = Vec::new();
    let mut events: Vec<EventRecord> = Vec::new();
    let mut t = 0.0;
    let mut x = x0.to_vec();
    let mut v = v0.to_vec();
    let t_tol = 1e-12 * total_time.max(1.0);
    loop {
        let (sol, crossing) = integrate_segment(system, &x, &v, t, total_time, side, &opts.ode)?;
        let t1 = sol.t1();
        segments.push(Segment { t0: t, t1, side, sol });
        let Some((tc, c, v_in)) = crossing else { break };
        if tc >= total_time - t_tol {
            // crossing at the final time: not an event
            let last = segments.last_mut().unwrap();
            last.t1 = total_time;
            break;
        }
        if events.len() >= opts.max_events {
            return Err(Error::MaxEventsExceeded { limit: opts.max_events });
        }
        let frame = system.frame(&c)?;
        let vn = frame.normal_component(&v_in);
        if vn.abs() <= opts.v_min {
            return Err(Error::Tangency { time: tc, normal_speed: vn });
        }
        let decision = policy.decision(events.len())?;
        let (kind, v_out) = match decision {
            Decision::Reflect => (EventKind::Reflection, frame.reflect(&v_in) * opts.reflection_gain),
            Decision::Transmit => {
                if system.boundary {
                    return Err(Error::TransmitThroughBoundary);
                }
                (EventKind::Kink, v_in.clone())
            }
        };
        let rec = EventRecord { time: tc, point: c.clone(), v_in, v_out: v_out.clone(), kind, side_before: side };
        side = rec.side_after();
        events.push(rec);
        t = tc;
        x = c;
        v = v_out.as_slice().to_vec();
    }
    Ok(ReflectedPath {
        system: system.clone(),
        segments,
        events,
        total_time,
        periodic: false,
        policy: policy.clone(),
        options: *opts,
    })
}

/// Path diagnostics gathered by [`ReflectedPath::validate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathDiagnostics {
    pub max_position_jump: f64,
    pub max_rho_at_events: f64,
    pub max_reflection_residual: f64,
    pub max_kink_residual: f64,
    pub min_normal_speed: f64,
    pub energy_drift: f64,
}

impl ReflectedPath {
    pub fn dim(&self) -> usize {
        self.system.dim()
    }

    pub fn event_times(&self) -> Vec<f64> {
        self.events.iter().map(|e| e.time).collect()
    }

    pub fn reflection_count(&self) -> usize {
        self.events.iter().filter(|e| e.kind == EventKind::Reflection).count()
    }

    /// Index of the segment containing `t`; at an event time `Left` picks the
    /// segment ending there and `Right` the one starting there.
    pub fn segment_index(&self, t: f64, lim: Limit) -> usize {
        let mut idx = 0;
        for (i, e) in self.events.iter().enumerate() {
            let after = match lim {
                Limit::Left => t > e.time,
                Limit::Right => t >= e.time,
            };
            if after {
                idx = i + 1;
            }
        }
        idx
    }

    pub fn state(&self, t: f64, lim: Limit) -> (DVector<f64>, DVector<f64>) {
        let n = self.dim();
        let seg = &self.segments[self.segment_index(t, lim)];
        let y = seg.sol.eval(t.clamp(seg.t0, seg.t1));
        (DVector::from_column_slice(&y[..n]), DVector::from_column_slice(&y[n..]))
    }

    pub fn position(&self, t: f64) -> DVector<f64> {
        self.state(t, Limit::Right).0
    }

    pub fn velocity(&self, t: f64, lim: Limit) -> DVector<f64> {
        self.state(t, lim).1
    }

    /// Coordinate time derivative of the velocity from the dense output.
    pub fn acceleration(&self, t: f64, lim: Limit) -> DVector<f64> {
        let n = self.dim();
        let seg = &self.segments[self.segment_index(t, lim)];
        let d = seg.sol.derivative(t.clamp(seg.t0, seg.t1));
        DVector::from_column_slice(&d[n..])
    }

    pub fn side_at(&self, t: f64, lim: Limit) -> Side {
        self.segments[self.segment_index(t, lim)].side
    }

    pub fn endpoint(&self) -> (DVector<f64>, DVector<f64>) {
        self.state(self.total_time, Limit::Left)
    }

    /// Union of all dense-output step intervals.
    pub fn step_intervals(&self) -> Vec<(f64, f64)> {
        self.segments.iter().flat_map(|s| s.sol.step_intervals()).collect()
    }

    pub fn energy(&self, t: f64, lim: Limit) -> Result<f64> {
        let (x, v) = self.state(t, lim);
        self.system.energy(x.as_slice(), v.as_slice(), self.side_at(t, lim))
    }

    /// Largest relative deviation of the energy from its initial value.
    pub fn energy_drift(&self) -> Result<f64> {
        let e0 = self.energy(0.0, Limit::Right)?;
        let scale = e0.abs().max(1e-300);
        let mut worst: f64 = 0.0;
        for seg in &self.segments {
            for k in 0..=20 {
                let t = seg.t0 + (seg.t1 - seg.t0) * k as f64 / 20.0;
                let (x, v) = {
                    let y = seg.sol.eval(t);
                    let n = self.dim();
                    (y[..n].to_vec(), y[n..].to_vec())
                };
                let e = self.system.energy(&x, &v, seg.side)?;
                worst = worst.max((e - e0).abs() / scale);
            }
        }
        Ok(worst)
    }

    pub fn validate(&self) -> Result<PathDiagnostics> {
        let mut d = PathDiagnostics {
            max_position_jump: 0.0,
            max_rho_at_events: 0.0,
            max_reflection_residual: 0.0,
            max_kink_residual: 0.0,
            min_normal_speed: f64::INFINITY,
            energy_drift: self.energy_drift()?,
        };
        for (i, e) in self.events.iter().enumerate() {
            let (a, b) = (&self.segments[i], &self.segments[i + 1]);
            let n = self.dim();
            let xa = a.sol.eval(e.time);
            let xb = b.sol.eval(e.time);
            let jump = (0..n).map(|k| (xa[k] - xb[k]).abs()).fold(0.0, f64::max);
            d.max_position_jump = d.max_position_jump.max(jump);
            let f = self.system.frame(&e.point)?;
            d.max_rho_at_events = d.max_rho_at_events.max(self.system.rho(&e.point).unwrap_or(0.0).abs());
            d.min_normal_speed = d.min_normal_speed.min(f.normal_component(&e.v_in).abs());
            match e.kind {
                EventKind::Reflection => {
                    let sum_n = f.normal_component(&(&e.v_in + &e.v_out)).abs();
                    let dtop = f.conn.norm(&f.tangent_part(&(&e.v_in - &e.v_out)));
                    d.max_reflection_residual = d.max_reflection_residual.max(sum_n).max(dtop);
                }
                EventKind::Kink => {
                    d.max_kink_residual = d.max_kink_residual.max(f.conn.norm(&(&e.v_in - &e.v_out)));
                }
            }
        }
        Ok(d)
    }

    /// Decisions actually taken, in order.
    pub fn decisions_taken(&self) -> Vec<Decision> {
        self.events
            .iter()
            .map(|e| match e.kind {
                EventKind::Reflection => Decision::Reflect,
                EventKind::Kink => Decision::Transmit,
            })
            .collect()
    }

    /// The path traversed backwards, obtained by shooting from `(α(T), −α̇(T))`.
    pub fn reversed(&self) -> Result<ReflectedPath> {
        let (x, v) = self.endpoint();
        let mut decisions = self.decisions_taken();
        decisions.reverse();
        let mut opts = self.options;
        opts.start_side = Some(self.segments.last().unwrap().side);
        shoot(&self.system, x.as_slice(), (-v).as_slice(), self.total_time, &EventPolicy::exact(decisions), &opts)
    }

    /// Re-shoots with the same policy and options from perturbed data.
    pub fn reshoot(&self, x0: &[f64], v0: &[f64]) -> Result<ReflectedPath> {
        let mut opts = self.options;
        opts.start_side = Some(self.segments[0].side);
        let policy = EventPolicy::exact(self.decisions_taken());
        let mut p = shoot(&self.system, x0, v0, self.total_time, &policy, &opts)?;
        p.policy = self.policy.clone();
        Ok(p)
    }
}
