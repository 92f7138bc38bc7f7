//! Conjugate points along a path.
//!
//! `B(t)` collects `W(t)` for the Jacobi fields with `W(0) = 0`,
//! `D_tW(0) = e_j`. Each reflection multiplies `B` by the reflection, whose
//! determinant is −1, so `(−1)^{#reflections} det B` is continuous and its
//! zeros are the conjugate times. Zeros of even multiplicity do not change
//! sign; they are found by minimising the relative smallest singular value
//! `σ_min(B(t)) / |Ψ_D(t)|`, where `Ψ_D` is the full `(W, D_tW)` block of
//! those fields.

use serde::Serialize;

use super::JacobiFlow;
use crate::dynamics::{EventKind, Limit};
use crate::error::{Error, Result};
use crate::ode::{brent_root, golden_min};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConjugatePoint {
    pub time: f64,
    pub multiplicity: usize,
    pub sigma_ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConjugateScan {
    pub points: Vec<ConjugatePoint>,
    /// `(t, (−1)^k det B(t), σ_min/|Ψ_D|)` on the scan grid.
    pub samples: Vec<(f64, f64, f64)>,
    /// Whether the final point is itself conjugate to the initial point.
    pub endpoint_conjugate: bool,
}

impl ConjugateScan {
    /// Sum of multiplicities strictly inside `(0, T)`.
    pub fn interior_count(&self, total_time: f64) -> usize {
        self.points
            .iter()
            .filter(|p| p.time < total_time - 1e-9 * total_time.max(1.0))
            .map(|p| p.multiplicity)
            .sum()
    }

    pub fn endpoint_multiplicity(&self, total_time: f64) -> usize {
        self.points
            .iter()
            .filter(|p| p.time >= total_time - 1e-9 * total_time.max(1.0))
            .map(|p| p.multiplicity)
            .sum()
    }
}

struct Probe<'a> {
    flow: &'a JacobiFlow,
    reflections: Vec<f64>,
}

impl Probe<'_> {
    fn parity(&self, t: f64, lim: Limit) -> f64 {
        let k = self
            .reflections
            .iter()
            .filter(|&&e| match lim {
                Limit::Right => e <= t,
                Limit::Left => e < t,
            })
            .count();
        if k % 2 == 0 { 1.0 } else { -1.0 }
    }

    fn signed_det(&self, t: f64, lim: Limit) -> f64 {
        self.parity(t, lim) * self.flow.b_block(t, lim).determinant()
    }

    /// Singular values of `B(t)` and the scale `|Ψ_D(t)|`.
    fn sigmas(&self, t: f64, lim: Limit) -> (Vec<f64>, f64) {
        let n = self.flow.dim();
        let psi = self.flow.fundamental(t, lim);
        let cols = psi.view((0, n), (2 * n, n)).into_owned();
        let scale = cols.singular_values().max();
        let b = psi.view((0, n), (n, n)).into_owned();
        let mut s: Vec<f64> = b.singular_values().iter().copied().collect();
        s.sort_by(|a, b| a.total_cmp(b));
        (s, scale)
    }

    fn ratio(&self, t: f64, lim: Limit) -> f64 {
        let (s, scale) = self.sigmas(t, lim);
        s[0] / scale
    }

    fn multiplicity(&self, t: f64, lim: Limit, tol_rank: f64) -> (usize, f64) {
        let (s, scale) = self.sigmas(t, lim);
        (s.iter().filter(|v| **v < tol_rank * scale).count(), s[0] / scale)
    }
}

/// Scans `(0, T]` for conjugate points. `grid_dt` defaults to `T/2000` and
/// `tol_rank` to `1e-7`.
pub fn conjugate_points(flow: &JacobiFlow, grid_dt: Option<f64>, tol_rank: Option<f64>) -> Result<ConjugateScan> {
    let path = &flow.path;
    let t_end = path.total_time;
    let tol_rank = tol_rank.unwrap_or(1e-7);
    let steps = grid_dt.map_or(2000, |dt| (t_end / dt).ceil().max(1.0) as usize);
    let probe = Probe {
        flow,
        reflections: path.events.iter().filter(|e| e.kind == EventKind::Reflection).map(|e| e.time).collect(),
    };
    let times: Vec<f64> = (1..=steps).map(|i| t_end * i as f64 / steps as f64).collect();
    let samples: Vec<(f64, f64, f64)> = times
        .iter()
        .map(|&t| {
            let lim = if t == t_end { Limit::Left } else { Limit::Right };
            (t, probe.signed_det(t, lim), probe.ratio(t, lim))
        })
        .collect();

    let mut points: Vec<ConjugatePoint> = Vec::new();
    let xtol = 1e-12 * t_end.max(1.0);
    let push = |points: &mut Vec<ConjugatePoint>, p: ConjugatePoint| {
        if !points.iter().any(|q| (q.time - p.time).abs() < 1e-6 * t_end.max(1.0)) {
            points.push(p);
        }
    };

    for w in samples.windows(2) {
        let ((ta, da, _), (tb, db, _)) = (w[0], w[1]);
        if da == 0.0 || (da > 0.0) == (db > 0.0) {
            continue;
        }
        let root = brent_root(|t| probe.signed_det(t, Limit::Right), ta, tb, da, db, xtol);
        let lim = if root >= t_end { Limit::Left } else { Limit::Right };
        let (m, r) = probe.multiplicity(root, lim, tol_rank);
        if m % 2 == 0 {
            return Err(Error::GridTooCoarse { t_lo: ta, t_hi: tb });
        }
        push(&mut points, ConjugatePoint { time: root, multiplicity: m, sigma_ratio: r });
    }

    // even-multiplicity zeros: local minima of the singular-value ratio
    for i in 0..samples.len() {
        let r = samples[i].2;
        let left = if i == 0 { f64::INFINITY } else { samples[i - 1].2 };
        let right = if i + 1 == samples.len() { f64::INFINITY } else { samples[i + 1].2 };
        if !(r <= left && r <= right) || r > 1e-2 {
            continue;
        }
        let lo = if i == 0 { 0.5 * samples[0].0 } else { samples[i - 1].0 };
        let hi = if i + 1 == samples.len() { t_end } else { samples[i + 1].0 };
        let (tm, rm) = golden_min(|t| probe.ratio(t, Limit::Right), lo, hi, xtol);
        if rm >= tol_rank {
            continue;
        }
        let tm = if (t_end - tm).abs() < 1e-9 * t_end.max(1.0) { t_end } else { tm };
        let lim = if tm >= t_end { Limit::Left } else { Limit::Right };
        let (m, r) = probe.multiplicity(tm, lim, tol_rank);
        if m > 0 {
            push(&mut points, ConjugatePoint { time: tm, multiplicity: m, sigma_ratio: r });
        }
    }

    let (m_end, r_end) = probe.multiplicity(t_end, Limit::Left, tol_rank);
    if m_end > 0 {
        push(&mut points, ConjugatePoint { time: t_end, multiplicity: m_end, sigma_ratio: r_end });
    }
    points.sort_by(|a, b| a.time.total_cmp(&b.time));
    let endpoint_conjugate = points.last().is_some_and(|p| p.time >= t_end - 1e-6 * t_end.max(1.0));
    Ok(ConjugateScan { points, samples, endpoint_conjugate })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;
    use std::sync::Arc;

    use super::*;
    use crate::dynamics::{shoot, EventPolicy, ShootOptions};
    use crate::geometry::surface::LevelSet;
    use crate::geometry::{Euclidean, Potential, SpherePolar, System};

    fn scan(sys: &System, x: &[f64], v: &[f64], t: f64) -> ConjugateScan {
        let p = shoot(sys, x, v, t, &EventPolicy::always_reflect(), &ShootOptions::default()).unwrap();
        conjugate_points(&JacobiFlow::new(&p).unwrap(), None, None).unwrap()
    }

    #[test]
    fn flat_has_none() {
        let s = scan(&System::new(Arc::new(Euclidean::new(2))), &[0.0, 0.0], &[1.0, 0.3], 5.0);
        assert!(s.points.is_empty());
    }

    #[test]
    fn sphere_conjugate_at_pi() {
        let s = scan(&System::new(Arc::new(SpherePolar)), &[PI / 2.0, 0.0], &[0.0, 1.0], 1.5 * PI);
        assert_eq!(s.points.len(), 1);
        assert!((s.points[0].time - PI).abs() < 1e-8);
        assert_eq!(s.points[0].multiplicity, 1);
    }

    #[test]
    fn harmonic_double_points() {
        let sys = System::new(Arc::new(Euclidean::new(2))).with_potential(Potential::harmonic(2, 1.0));
        let s = scan(&sys, &[0.0, 0.0], &[1.0, 0.0], 2.5 * PI);
        let got: Vec<(f64, usize)> = s.points.iter().map(|p| (p.time, p.multiplicity)).collect();
        assert_eq!(got.len(), 2, "{got:?}");
        assert!((got[0].0 - PI).abs() < 1e-8 && got[0].1 == 2);
        assert!((got[1].0 - 2.0 * PI).abs() < 1e-8 && got[1].1 == 2);
    }

    #[test]
    fn mirror_equation() {
        // 1/d1 + 1/d2 = 2/cos θ for the unit circle
        let disk = System::new(Arc::new(Euclidean::new(2))).with_surface(Arc::new(LevelSet::sphere(&[0.0, 0.0], 1.0)), true);
        for deg in [15.0f64, 30.0, 45.0] {
            let th = deg.to_radians();
            let d1 = th.cos();
            let d2 = 1.0 / (2.0 / th.cos() - 1.0 / d1);
            // impact at (1, 0); incoming direction makes angle θ with the inward normal (−1, 0)
            let u = [th.cos(), th.sin()];
            let x0 = [1.0 - d1 * u[0], -d1 * u[1]];
            let s = scan(&disk, &x0, &u, d1 + 1.5 * d2);
            assert_eq!(s.points.len(), 1, "{deg}");
            assert!((s.points[0].time - (d1 + d2)).abs() < 1e-6, "{deg}: {} vs {}", s.points[0].time, d1 + d2);
        }
    }

    #[test]
    fn reversal_of_a_conjugate_segment_is_conjugate() {
        let sys = System::new(Arc::new(SpherePolar));
        let p = shoot(&sys, &[1.2, 0.0], &[0.6, 0.8 / 1.2f64.sin()], PI, &EventPolicy::always_reflect(), &ShootOptions::default()).unwrap();
        let r = p.reversed().unwrap();
        let a = conjugate_points(&JacobiFlow::new(&p).unwrap(), None, None).unwrap();
        let b = conjugate_points(&JacobiFlow::new(&r).unwrap(), None, None).unwrap();
        assert!(a.endpoint_conjugate && b.endpoint_conjugate);
        assert_eq!(a.endpoint_multiplicity(PI), b.endpoint_multiplicity(PI));
    }
}
