use std::fmt::Write as _;
use std::io;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter, Serializer};
use serde_json::Value;

use super::report::RunReport;
use super::RunKind;
use crate::error::{Error, Result};

/// Pretty JSON with every float written as `{:.16e}`, i.e. 17 significant
/// digits, so equal reports are byte-identical.
struct Fixed17<'a>(PrettyFormatter<'a>);

impl Formatter for Fixed17<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Serializes any value with the fixed float format.
pub fn to_json_value<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = Serializer::with_formatter(&mut buf, Fixed17(PrettyFormatter::new()));
    value.serialize(&mut ser).map_err(|e| Error::Numerical(e.to_string()))?;
    buf.push(b'\n');
    String::from_utf8(buf).map_err(|e| Error::Numerical(e.to_string()))
}

pub fn to_json(report: &RunReport) -> Result<String> {
    to_json_value(report)
}

fn f(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_err(e: impl std::fmt::Display) -> Error {
    Error::Numerical(format!("csv: {e}"))
}

/// The main table of a run: events for path runs, index tables for index
/// runs and draws for sweeps.
pub fn emit_csv(report: &RunReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut row = |r: Vec<String>| w.write_record(&r).map_err(csv_err);
    match report.scenario.run {
        RunKind::Shoot | RunKind::Solve => {
            row(["time", "kind", "incidence_deg", "normal_speed", "point"].map(String::from).to_vec())?;
            for e in report.path.iter().flat_map(|p| &p.events) {
                let pt = e.point.iter().map(|x| f(*x)).collect::<Vec<_>>().join(" ");
                row(vec![f(e.time), format!("{:?}", e.kind).to_lowercase(), f(e.incidence_deg), f(e.normal_speed), pt])?;
            }
        }
        RunKind::IndexFixed | RunKind::IndexPeriodic => {
            row(["bc", "k", "index", "nullity", "positive", "tol_eig", "asymmetry", "min_eigenvalue"].map(String::from).to_vec())?;
            for t in &report.eigen {
                row(vec![
                    format!("{:?}", t.bc).to_lowercase(),
                    t.k.to_string(),
                    t.index.to_string(),
                    t.nullity.to_string(),
                    t.positive.to_string(),
                    f(t.tol_eig),
                    f(t.asymmetry),
                    t.eigenvalues.first().map_or(String::new(), |l| f(*l)),
                ])?;
            }
        }
        RunKind::PeriodicSweep => {
            row(["draw", "status", "periodic_index", "fixed_index", "concavity_index", "error"].map(String::from).to_vec())?;
            let opt = |x: Option<usize>| x.map_or(String::new(), |v| v.to_string());
            for r in report.sweep.iter().flat_map(|s| &s.runs) {
                let status = r.status.map_or("error".to_string(), |s| format!("{s:?}").to_lowercase());
                row(vec![
                    r.draw.to_string(),
                    status,
                    opt(r.periodic_index),
                    opt(r.fixed_index),
                    opt(r.concavity_index),
                    r.error.clone().unwrap_or_default(),
                ])?;
            }
        }
    }
    let bytes = w.into_inner().map_err(csv_err)?;
    String::from_utf8(bytes).map_err(csv_err)
}

/// Summary rows of a batch of reports.
pub fn emit_batch_csv(reports: &[Value]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["scenario", "status", "exit_code", "checks_passed", "checks_total"]).map_err(csv_err)?;
    for r in reports {
        let checks = r["checks"].as_array().cloned().unwrap_or_default();
        let passed = checks.iter().filter(|c| c["pass"] == Value::Bool(true)).count();
        w.write_record([
            r["scenario"]["name"].as_str().unwrap_or("").to_string(),
            r["status"].as_str().unwrap_or("").to_string(),
            r["exit_code"].to_string(),
            passed.to_string(),
            checks.len().to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(csv_err)?;
    String::from_utf8(bytes).map_err(csv_err)
}

/// Whitespace-separated columns: the conjugate-point scan, then one block
/// per eigenvalue table. Blocks are separated by two blank lines.
pub fn emit_plot(report: &RunReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# scenario {}", report.scenario.name);
    if !report.scan_samples.is_empty() {
        let _ = writeln!(out, "# t signed_det_B sigma_ratio");
        for (t, d, r) in &report.scan_samples {
            let _ = writeln!(out, "{} {} {}", f(*t), f(*d), f(*r));
        }
    }
    for t in &report.eigen {
        let _ = write!(out, "\n\n# eigenvalues bc={} k={}\n# i lambda\n", format!("{:?}", t.bc).to_lowercase(), t.k);
        for (i, l) in t.eigenvalues.iter().enumerate() {
            let _ = writeln!(out, "{i} {}", f(*l));
        }
    }
    if let Some(s) = &report.sweep {
        let _ = write!(out, "\n\n# draw periodic_index fixed_index concavity_index\n");
        for r in &s.runs {
            if let (Some(p), Some(x), Some(c)) = (r.periodic_index, r.fixed_index, r.concavity_index) {
                let _ = writeln!(out, "{} {p} {x} {c}", r.draw);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_have_17_significant_digits() {
        let s = to_json_value(&serde_json::json!({"a": 0.1, "b": [1.0, -2.5e-300], "n": 3})).unwrap();
        assert!(s.contains("1.0000000000000001e-1"), "{s}");
        assert!(s.contains("-2.5000000000000000e-300"));
        assert!(s.contains("\"n\": 3"));
        let back: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["a"].as_f64(), Some(0.1));
    }
}
