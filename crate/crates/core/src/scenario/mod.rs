//! Scenario files: one TOML document per run, describing the chart, the
//! hypersurface, the potential, initial or endpoint data, the event policy
//! and numeric overrides.
//!
//! ```toml
//! name = "sphere-oracle"
//! run = "index-fixed"
//!
//! [chart]
//! kind = "sphere"
//!
//! [initial]
//! x = [1.5707963267948966, 0.0]
//! v = [0.0, 1.0]
//! t = 4.71238898038469
//!
//! [expect]
//! index = 1
//! conjugate_times = [3.141592653589793]
//! ```

mod emit;
mod report;
mod suite;

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::{Decision, EventPolicy, Overflow, ShootOptions};
use crate::error::{Error, Result};
use crate::geometry::polynomial::Term;
use crate::geometry::surface::LevelSet;
use crate::geometry::{Chart, Conformal, Euclidean, Hypersurface, PolarFlat, Polynomial, Potential, SpherePolar, System};
use crate::ode::OdeOptions;

pub use emit::{emit_batch_csv, emit_csv, emit_plot, to_json, to_json_value};
pub use report::{run, Check, EigenTable, ErrorEntry, EventRow, PathSummary, RunReport, Status};
pub use suite::{builtin_suite, BUILTIN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RunKind {
    #[default]
    Shoot,
    Solve,
    IndexFixed,
    IndexPeriodic,
    PeriodicSweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ChartSpec {
    Euclidean { dim: usize },
    /// Flat plane in polar coordinates `(r, θ)`.
    Polar,
    /// Unit sphere in coordinates `(θ, φ)`.
    Sphere,
    /// `e^{2φ} |dx|²`.
    Conformal { dim: usize, phi: Vec<Term> },
}

impl RunKind {
    pub fn name(self) -> &'static str {
        match self {
            RunKind::Shoot => "shoot",
            RunKind::Solve => "solve",
            RunKind::IndexFixed => "index-fixed",
            RunKind::IndexPeriodic => "index-periodic",
            RunKind::PeriodicSweep => "periodic-sweep",
        }
    }
}

impl ChartSpec {
    pub fn dim(&self) -> usize {
        match self {
            ChartSpec::Euclidean { dim } | ChartSpec::Conformal { dim, .. } => *dim,
            ChartSpec::Polar | ChartSpec::Sphere => 2,
        }
    }

    fn build(&self) -> Arc<dyn Chart> {
        match self {
            ChartSpec::Euclidean { dim } => Arc::new(Euclidean::new(*dim)),
            ChartSpec::Polar => Arc::new(PolarFlat),
            ChartSpec::Sphere => Arc::new(SpherePolar),
            ChartSpec::Conformal { dim, phi } => Arc::new(Conformal::new(*dim, Polynomial { terms: phi.clone() })),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ShapeSpec {
    /// `ρ = ⟨normal, x⟩ − offset`.
    Hyperplane { normal: Vec<f64>, offset: f64 },
    /// `ρ = radius − |x − center|`, positive inside.
    Sphere { center: Vec<f64>, radius: f64 },
    Polynomial { terms: Vec<Term> },
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSpec {
    #[serde(flatten)]
    pub shape: ShapeSpec,
    /// Boundary hypersurfaces only reflect.
    #[serde(default = "yes")]
    pub boundary: bool,
    /// Reverses the sign of `ρ`.
    #[serde(default)]
    pub flip: bool,
}

impl SurfaceSpec {
    fn build(&self) -> Arc<dyn Hypersurface> {
        let s = match &self.shape {
            ShapeSpec::Hyperplane { normal, offset } => LevelSet::hyperplane(normal, *offset),
            ShapeSpec::Sphere { center, radius } => LevelSet::sphere(center, *radius),
            ShapeSpec::Polynomial { terms } => LevelSet::polynomial(Polynomial { terms: terms.clone() }),
        };
        Arc::new(if self.flip { s.flipped() } else { s })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialSpec {
    #[default]
    Zero,
    /// `½ k |x|²`.
    Harmonic { k: f64 },
    Polynomial { terms: Vec<Term> },
    /// Independent polynomials on the sides `ρ > 0` and `ρ < 0`.
    Piecewise { plus: Vec<Term>, minus: Vec<Term> },
}

impl PotentialSpec {
    fn build(&self, n: usize) -> Potential {
        match self {
            PotentialSpec::Zero => Potential::zero(n),
            PotentialSpec::Harmonic { k } => Potential::harmonic(n, *k),
            PotentialSpec::Polynomial { terms } => Potential::polynomial(Polynomial { terms: terms.clone() }),
            PotentialSpec::Piecewise { plus, minus } => {
                Potential::piecewise(Polynomial { terms: plus.clone() }, Polynomial { terms: minus.clone() })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orbit {
    /// Unit-speed bounce along the `x`-axis of the unit disk, started at the
    /// origin, closed after one period.
    DiskDiameter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub x: Option<Vec<f64>>,
    pub v: Option<Vec<f64>>,
    pub t: Option<f64>,
    /// Replaces `x`, `v`, `t` by a built-in closed orbit.
    pub orbit: Option<Orbit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointSpec {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub t: f64,
    pub v_guess: Vec<f64>,
}

fn always_reflect() -> Overflow {
    Overflow::AlwaysReflect
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    #[serde(default)]
    pub decisions: Vec<Decision>,
    #[serde(default = "always_reflect")]
    pub overflow: Overflow,
}

impl Default for PolicySpec {
    fn default() -> Self {
        Self { decisions: Vec::new(), overflow: Overflow::AlwaysReflect }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    pub rtol: f64,
    pub atol: f64,
    pub max_events: usize,
    /// Base node count of the broken Jacobi space.
    pub k0: usize,
    /// Node counts of the stability scan; `[k0, 2 k0, 4 k0]` when empty.
    pub ks: Vec<usize>,
    /// Finite-difference step of the action Hessian.
    pub h: f64,
    /// Conjugate-point scan spacing; `T / 2000` when absent.
    pub grid_dt: Option<f64>,
    pub tol_rank: f64,
    pub newton_tol: f64,
    /// Base point of periodic runs as a time along the orbit.
    pub base_time: Option<f64>,
    /// Random Jacobi initial conditions used for jump-residual checks.
    pub jacobi_samples: usize,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            max_events: 64,
            k0: 8,
            ks: Vec::new(),
            h: 1e-4,
            grid_dt: None,
            tol_rank: 1e-7,
            newton_tol: 1e-10,
            base_time: None,
            jacobi_samples: 20,
        }
    }
}

fn time_tol() -> f64 {
    1e-8
}

/// Optional oracle values; each present field becomes a check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expect {
    pub index: Option<usize>,
    pub nullity: Option<usize>,
    #[serde(default)]
    pub conjugate_times: Vec<f64>,
    #[serde(default)]
    pub multiplicities: Vec<usize>,
    #[serde(default = "time_tol")]
    pub time_tol: f64,
    pub reflections: Option<usize>,
    pub periodic_index: Option<usize>,
    pub concavity_index: Option<usize>,
    /// Smallest eigenvalue of the index form must be positive.
    #[serde(default)]
    pub positive_definite: bool,
}

impl Default for Expect {
    fn default() -> Self {
        Self {
            index: None,
            nullity: None,
            conjugate_times: Vec::new(),
            multiplicities: Vec::new(),
            time_tol: time_tol(),
            reflections: None,
            periodic_index: None,
            concavity_index: None,
            positive_definite: false,
        }
    }
}

fn sweep_count() -> usize {
    50
}

fn sweep_amplitude() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default = "sweep_count")]
    pub count: usize,
    #[serde(default = "sweep_amplitude")]
    pub amplitude: f64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self { count: sweep_count(), amplitude: sweep_amplitude() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub run: RunKind,
    #[serde(default)]
    pub seed: u64,
    pub chart: ChartSpec,
    pub surface: Option<SurfaceSpec>,
    #[serde(default)]
    pub potential: PotentialSpec,
    pub initial: Option<InitialSpec>,
    pub endpoints: Option<EndpointSpec>,
    #[serde(default)]
    pub policy: PolicySpec,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub expect: Expect,
    pub sweep: Option<SweepSpec>,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Scenario(msg.into())
}

fn check_len(what: &str, v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(invalid(format!("{what} has {} components, chart dimension is {n}", v.len())));
    }
    if v.iter().any(|c| !c.is_finite()) {
        return Err(invalid(format!("{what} has non-finite components")));
    }
    Ok(())
}

fn check_terms(what: &str, terms: &[Term], n: usize) -> Result<()> {
    for t in terms {
        if t.powers.len() > n {
            return Err(invalid(format!("{what}: monomial with {} exponents in dimension {n}", t.powers.len())));
        }
        if !t.coeff.is_finite() {
            return Err(invalid(format!("{what}: non-finite coefficient")));
        }
    }
    Ok(())
}

impl Scenario {
    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    /// Checks the invariants of a scenario and fills defaults.
    pub fn validate(mut self) -> Result<Self> {
        let n = self.dim();
        if n == 0 {
            return Err(invalid("chart dimension must be positive"));
        }
        if let ChartSpec::Conformal { phi, .. } = &self.chart {
            check_terms("chart.phi", phi, n)?;
        }
        if let Some(s) = &self.surface {
            match &s.shape {
                ShapeSpec::Hyperplane { normal, .. } => {
                    check_len("surface.normal", normal, n)?;
                    if normal.iter().all(|c| *c == 0.0) {
                        return Err(invalid("surface.normal must be nonzero"));
                    }
                }
                ShapeSpec::Sphere { center, radius } => {
                    check_len("surface.center", center, n)?;
                    if !(*radius > 0.0) {
                        return Err(invalid("surface.radius must be positive"));
                    }
                }
                ShapeSpec::Polynomial { terms } => check_terms("surface.terms", terms, n)?,
            }
            let transmits = s.boundary && (self.policy.decisions.contains(&Decision::Transmit) || self.policy.overflow == Overflow::AlwaysTransmit);
            if transmits {
                return Err(invalid("policy: transmit decisions are not allowed at a boundary hypersurface"));
            }
        }
        match &self.potential {
            PotentialSpec::Piecewise { plus, minus } => {
                check_terms("potential.plus", plus, n)?;
                check_terms("potential.minus", minus, n)?;
                let Some(s) = &self.surface else {
                    return Err(invalid("a piecewise potential needs a hypersurface"));
                };
                self.potential.build(n).check_c1_on(s.build().as_ref(), n, 16)?;
            }
            PotentialSpec::Polynomial { terms } => check_terms("potential.terms", terms, n)?,
            PotentialSpec::Harmonic { k } if !k.is_finite() => return Err(invalid("potential.k must be finite")),
            _ => {}
        }
        let nm = &mut self.numerics;
        if !(nm.rtol > 0.0 && nm.atol > 0.0 && nm.h > 0.0 && nm.tol_rank > 0.0 && nm.newton_tol > 0.0) {
            return Err(invalid("numerics: tolerances and steps must be positive"));
        }
        if nm.k0 < 2 {
            return Err(invalid("numerics.k0 must be at least 2"));
        }
        if nm.ks.is_empty() {
            nm.ks = vec![nm.k0, 2 * nm.k0, 4 * nm.k0];
        }
        if nm.ks.iter().any(|k| *k < 2) {
            return Err(invalid("numerics.ks entries must be at least 2"));
        }
        match self.run {
            RunKind::Shoot | RunKind::IndexFixed | RunKind::IndexPeriodic => {
                let Some(init) = &self.initial else {
                    return Err(invalid(format!("run {} needs an [initial] table", self.run.name())));
                };
                match init.orbit {
                    Some(Orbit::DiskDiameter) => {
                        let disk = matches!(&self.surface, Some(SurfaceSpec { shape: ShapeSpec::Sphere { .. }, .. }));
                        if n != 2 || !disk {
                            return Err(invalid("orbit disk-diameter needs a two-dimensional chart and a sphere surface"));
                        }
                    }
                    None => {
                        let (Some(x), Some(v), Some(t)) = (&init.x, &init.v, init.t) else {
                            return Err(invalid("[initial] needs x, v and t, or an orbit"));
                        };
                        check_len("initial.x", x, n)?;
                        check_len("initial.v", v, n)?;
                        if !(t > 0.0 && t.is_finite()) {
                            return Err(invalid("initial.t must be positive"));
                        }
                        if self.numerics.grid_dt.is_none() {
                            self.numerics.grid_dt = Some(t / 2000.0);
                        }
                    }
                }
            }
            RunKind::Solve => {
                let Some(e) = &self.endpoints else {
                    return Err(invalid("run solve needs an [endpoints] table"));
                };
                check_len("endpoints.x", &e.x, n)?;
                check_len("endpoints.y", &e.y, n)?;
                check_len("endpoints.v_guess", &e.v_guess, n)?;
                if !(e.t > 0.0 && e.t.is_finite()) {
                    return Err(invalid("endpoints.t must be positive"));
                }
            }
            RunKind::PeriodicSweep => {
                let s = self.sweep.get_or_insert_with(SweepSpec::default);
                if s.count == 0 || !(s.amplitude >= 0.0) {
                    return Err(invalid("sweep: count must be positive and amplitude nonnegative"));
                }
            }
        }
        Ok(self)
    }

    pub fn system(&self) -> System {
        let n = self.dim();
        let mut sys = System::new(self.chart.build()).with_potential(self.potential.build(n));
        if let Some(s) = &self.surface {
            sys = sys.with_surface(s.build(), s.boundary);
        }
        sys
    }

    pub fn policy(&self) -> EventPolicy {
        EventPolicy { decisions: self.policy.decisions.clone(), overflow: self.policy.overflow }
    }

    pub fn shoot_options(&self) -> ShootOptions {
        ShootOptions {
            ode: OdeOptions { rtol: self.numerics.rtol, atol: self.numerics.atol, ..OdeOptions::default() },
            max_events: self.numerics.max_events,
            ..ShootOptions::default()
        }
    }
}

fn parse_raw(text: &str) -> Result<Scenario> {
    toml::from_str(text).map_err(|e| invalid(e.to_string().trim_end().to_string()))
}

/// Parses and validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    parse_raw(text)?.validate()
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    load_scenario_as(path, None)
}

/// Loads a scenario, replacing its run kind by `run` before validation. A
/// sweep file keeps its kind when asked for a periodic run.
pub fn load_scenario_as(path: &Path, run: Option<RunKind>) -> Result<Scenario> {
    let located = |e: Error| match e {
        Error::Scenario(m) => Error::Scenario(format!("{}: {m}", path.display())),
        e => e,
    };
    let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{e}"))).map_err(located)?;
    let mut s = parse_raw(&text).map_err(located)?;
    match run {
        Some(RunKind::IndexPeriodic) if s.run == RunKind::PeriodicSweep => {}
        Some(k) => s.run = k,
        None => {}
    }
    s.validate().map_err(located)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gets_defaults() {
        let s = parse_scenario(
            r#"
name = "free"
[chart]
kind = "euclidean"
dim = 2
[initial]
x = [0.0, 0.0]
v = [1.0, 0.0]
t = 2.0
"#,
        )
        .unwrap();
        assert_eq!(s.run, RunKind::Shoot);
        assert_eq!(s.potential, PotentialSpec::Zero);
        assert_eq!(s.numerics.ks, vec![8, 16, 32]);
        assert_eq!(s.numerics.grid_dt, Some(1e-3));
        assert_eq!(s.policy.overflow, Overflow::AlwaysReflect);
    }

    #[test]
    fn transmit_at_boundary_is_rejected() {
        let r = parse_scenario(
            r#"
name = "bad"
[chart]
kind = "euclidean"
dim = 2
[surface]
kind = "hyperplane"
normal = [1.0, 0.0]
offset = 0.0
[policy]
decisions = ["transmit"]
[initial]
x = [1.0, 0.0]
v = [-1.0, 0.0]
t = 2.0
"#,
        );
        assert!(matches!(r, Err(Error::Scenario(m)) if m.contains("transmit")));
    }

    #[test]
    fn mismatched_piecewise_potential_is_rejected() {
        let r = parse_scenario(
            r#"
name = "kinked"
[chart]
kind = "euclidean"
dim = 2
[surface]
kind = "hyperplane"
normal = [1.0, 0.0]
offset = 0.0
boundary = false
[potential]
kind = "piecewise"
plus = [{ coeff = 1.0, powers = [1, 0] }]
minus = [{ coeff = -1.0, powers = [1, 0] }]
[initial]
x = [1.0, 0.0]
v = [-1.0, 0.0]
t = 2.0
"#,
        );
        assert!(matches!(r, Err(Error::NotC1(_))), "{r:?}");
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let r = parse_scenario("name = \"x\"\n[chart]\nkind = \n");
        assert!(matches!(r, Err(Error::Scenario(m)) if m.contains("line 3")));
        let r = parse_scenario("name = \"x\"\n[chart]\nkind = \"torus\"\n");
        assert!(matches!(r, Err(Error::Scenario(m)) if m.contains("torus")));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let r = parse_scenario("name = \"x\"\n[chart]\nkind = \"sphere\"\n[initial]\nx = [1.0]\nv = [0.0, 1.0]\nt = 1.0\n");
        assert!(matches!(r, Err(Error::Scenario(m)) if m.contains("initial.x")));
    }
}
