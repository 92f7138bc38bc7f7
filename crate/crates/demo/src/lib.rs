//! WebAssembly bindings for the browser demo. Every export returns a JSON
//! string; failures come back as `{"error": "..."}`.

use std::sync::Arc;

use reflected_morse::dynamics::{shoot, EventPolicy, Limit, ReflectedPath, ShootOptions};
use reflected_morse::geometry::Polynomial;
use reflected_morse::jacobi::{conjugate_points, JacobiFlow};
use reflected_morse::morse::{conformal_disk, fixed_endpoint_index_theorem};
use reflected_morse::scenario::{parse_scenario, run, to_json, BUILTIN};
use reflected_morse::Result;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn respond(r: Result<Value>) -> String {
    match r {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e.to_string() }).to_string(),
    }
}

/// Unit-disk billiard with metric `e^{2 tilt x}|dx|²`, started at `(x0, y0)`
/// with unit speed in direction `heading` (degrees).
fn disk_path(x0: f64, y0: f64, heading: f64, duration: f64, tilt: f64) -> Result<ReflectedPath> {
    let phi = if tilt == 0.0 { Polynomial::zero() } else { Polynomial::new(vec![(tilt, vec![1, 0])]) };
    let sys = conformal_disk(phi);
    let speed = 1.0 / sys.connection(&[x0, y0])?.g[(0, 0)].sqrt();
    let (s, c) = heading.to_radians().sin_cos();
    shoot(&sys, &[x0, y0], &[speed * c, speed * s], duration, &EventPolicy::always_reflect(), &ShootOptions::default())
}

fn xy(p: &ReflectedPath, t: f64) -> [f64; 2] {
    let x = p.position(t);
    [x[0], x[1]]
}

/// Path samples, reflections, conjugate points and the `det B` scan.
#[wasm_bindgen]
pub fn trace(x0: f64, y0: f64, heading: f64, duration: f64, tilt: f64) -> String {
    respond((|| {
        let path = disk_path(x0, y0, heading, duration, tilt)?;
        let flow = JacobiFlow::new(&path)?;
        let scan = conjugate_points(&flow, None, None)?;
        let n = 600;
        let points: Vec<[f64; 2]> = (0..=n).map(|i| xy(&path, duration * i as f64 / n as f64)).collect();
        let events: Vec<Value> = path
            .events
            .iter()
            .map(|e| {
                let v = path.velocity(e.time, Limit::Left);
                let incidence = (v[0] * e.point[0] + v[1] * e.point[1]) / (v.norm() * e.point[0].hypot(e.point[1]));
                json!({ "t": e.time, "x": e.point[0], "y": e.point[1], "incidence_deg": incidence.clamp(-1.0, 1.0).acos().to_degrees() })
            })
            .collect();
        let conjugate: Vec<Value> = scan
            .points
            .iter()
            .map(|c| {
                let [x, y] = xy(&path, c.time);
                json!({ "t": c.time, "x": x, "y": y, "multiplicity": c.multiplicity })
            })
            .collect();
        let stride = (scan.samples.len() / 400).max(1);
        let samples: Vec<[f64; 3]> = scan.samples.iter().step_by(stride).map(|&(t, d, r)| [t, d, r]).collect();
        Ok(json!({ "points": points, "events": events, "conjugate": conjugate, "scan": samples }))
    })())
}

/// Fixed-endpoint index theorem on the same path with `k`, `2k`, `4k` nodes.
#[wasm_bindgen]
pub fn index(x0: f64, y0: f64, heading: f64, duration: f64, tilt: f64, k: usize) -> String {
    respond((|| {
        let path = disk_path(x0, y0, heading, duration, tilt)?;
        let flow = Arc::new(JacobiFlow::new(&path)?);
        let r = fixed_endpoint_index_theorem(&flow, &[k, 2 * k, 4 * k])?;
        Ok(json!({
            "index": r.index,
            "nullity": r.nullity,
            "conjugate_count": r.conjugate_count,
            "endpoint_multiplicity": r.endpoint_multiplicity,
            "table": r.table,
            "pass": r.pass,
            "eigenvalues": r.reports[0].eigenvalues,
        }))
    })())
}

#[wasm_bindgen]
pub fn builtin_names() -> String {
    json!(BUILTIN.iter().map(|(n, _)| *n).collect::<Vec<_>>()).to_string()
}

#[wasm_bindgen]
pub fn builtin_scenario(name: &str) -> String {
    BUILTIN.iter().find(|(n, _)| *n == name).map_or(String::new(), |(_, t)| t.to_string())
}

/// Runs a scenario document and returns its report.
#[wasm_bindgen]
pub fn run_scenario(text: &str) -> String {
    match parse_scenario(text) {
        Ok(s) => to_json(&run(&s)).unwrap_or_else(|e| json!({ "error": e.to_string() }).to_string()),
        Err(e) => json!({ "error": e.to_string() }).to_string(),
    }
}
