//! Dormand–Prince 5(4) with the Hairer continuous extension, plus the scalar
//! root finders used for event location and conjugate-point refinement.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-10, atol: 1e-12, max_steps: 200_000 }
    }
}

// Butcher tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Continuous extension.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// One accepted step and its interpolation coefficients.
#[derive(Debug, Clone)]
pub struct DenseStep {
    pub t: f64,
    pub h: f64,
    rcont: Vec<f64>,
}

impl DenseStep {
    fn eval_into(&self, dim: usize, t: f64, out: &mut [f64]) {
        let theta = (t - self.t) / self.h;
        let theta1 = 1.0 - theta;
        let r = &self.rcont;
        for i in 0..dim {
            out[i] = r[i]
                + theta
                    * (r[dim + i]
                        + theta1
                            * (r[2 * dim + i]
                                + theta * (r[3 * dim + i] + theta1 * r[4 * dim + i])));
        }
    }

    fn derivative_into(&self, dim: usize, t: f64, out: &mut [f64]) {
        let theta = (t - self.t) / self.h;
        let theta1 = 1.0 - theta;
        let r = &self.rcont;
        for i in 0..dim {
            let (r2, r3, r4, r5) = (r[dim + i], r[2 * dim + i], r[3 * dim + i], r[4 * dim + i]);
            let inner = r4 + theta1 * r5;
            let q = r3 + theta * inner;
            let p = r2 + theta1 * q;
            let dq = inner - theta * r5;
            let dp = -q + theta1 * dq;
            out[i] = (p + theta * dp) / self.h;
        }
    }
}

/// Continuous solution on `[t0, t1]` assembled from accepted steps.
#[derive(Debug, Clone)]
pub struct DenseSolution {
    dim: usize,
    t0: f64,
    t1: f64,
    steps: Vec<DenseStep>,
}

impl DenseSolution {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    pub fn num_steps(&self) -> usize {
        self.steps.len()
    }

    fn locate(&self, t: f64) -> &DenseStep {
        let idx = self.steps.partition_point(|s| s.t <= t);
        &self.steps[idx.saturating_sub(1).min(self.steps.len() - 1)]
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let t = t.clamp(self.t0, self.t1);
        self.locate(t).eval_into(self.dim, t, out);
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out);
        out
    }

    /// Time derivative of the interpolant.
    pub fn derivative(&self, t: f64) -> Vec<f64> {
        let t = t.clamp(self.t0, self.t1);
        let mut out = vec![0.0; self.dim];
        self.locate(t).derivative_into(self.dim, t, &mut out);
        out
    }

    /// Step intervals clipped to `[t0, t1]`.
    pub fn step_intervals(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.steps.len());
        for s in &self.steps {
            let a = s.t.max(self.t0);
            let b = (s.t + s.h).min(self.t1);
            if b > a {
                out.push((a, b));
            }
        }
        out
    }
}

/// First crossing of an event function from positive to non-positive values.
#[derive(Debug, Clone)]
pub struct Crossing {
    pub t: f64,
    pub y: Vec<f64>,
}

fn wrms(err: &[f64], y0: &[f64], y1: &[f64], opts: &OdeOptions) -> f64 {
    let n = err.len() as f64;
    let s: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sk = opts.atol + opts.rtol * a.abs().max(b.abs());
            (e / sk).powi(2)
        })
        .sum();
    (s / n).sqrt()
}

fn initial_step<F>(rhs: &mut F, t0: f64, y0: &[f64], f0: &[f64], span: f64, opts: &OdeOptions) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let norm = |v: &[f64]| -> f64 {
        let s: f64 = v
            .iter()
            .zip(y0)
            .map(|(vi, yi)| (vi / (opts.atol + opts.rtol * yi.abs())).powi(2))
            .sum();
        (s / n as f64).sqrt()
    };
    let d0 = norm(y0);
    let d1 = norm(f0);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(span);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
    let mut f1 = vec![0.0; n];
    rhs(t0 + h0, &y1, &mut f1);
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = norm(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span)
}

/// Integrates `y' = rhs(t, y)` from `t0` to `t_end`. When `event` is given the
/// integration stops at the first time where `event(y)` passes from positive to
/// non-positive. A non-positive start value does not trigger; the event arms
/// once a positive value has been observed.
pub fn integrate<F>(
    mut rhs: F,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    opts: &OdeOptions,
    event: Option<&dyn Fn(&[f64]) -> f64>,
) -> Result<(DenseSolution, Option<Crossing>)>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let span = t_end - t0;
    let mut sol = DenseSolution { dim: n, t0, t1: t_end, steps: Vec::new() };
    if span <= 0.0 {
        sol.t1 = t0;
        sol.steps.push(DenseStep { t: t0, h: 1.0, rcont: constant_rcont(y0) });
        return Ok((sol, None));
    }

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    rhs(t, &y, &mut k1);
    let mut h = initial_step(&mut rhs, t0, y0, &k1, span, opts);
    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut ys = vec![0.0; n];
    let mut y1 = vec![0.0; n];
    let mut err = vec![0.0; n];
    // the event is armed only once the function has been seen positive
    let mut g_prev = event.map(|g| g(&y));
    let mut rejected = false;
    let h_floor = 1e-14 * span.max(t0.abs()).max(1.0);

    for _ in 0..opts.max_steps {
        let last = t + h >= t_end - 1e-14 * span;
        if last {
            h = t_end - t;
        }
        for i in 0..n {
            ys[i] = y[i] + h * A21 * k1[i];
        }
        rhs(t + C2 * h, &ys, &mut k2);
        for i in 0..n {
            ys[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        rhs(t + C3 * h, &ys, &mut k3);
        for i in 0..n {
            ys[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        rhs(t + C4 * h, &ys, &mut k4);
        for i in 0..n {
            ys[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        rhs(t + C5 * h, &ys, &mut k5);
        for i in 0..n {
            ys[i] = y[i]
                + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        rhs(t + h, &ys, &mut k6);
        for i in 0..n {
            y1[i] = y[i]
                + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        rhs(t + h, &y1, &mut k7);
        for i in 0..n {
            err[i] = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let e = wrms(&err, &y, &y1, opts);
        let fac = if e == 0.0 { 10.0 } else { (0.9 * e.powf(-0.2)).clamp(0.2, 10.0) };

        if e <= 1.0 {
            let mut rcont = vec![0.0; 5 * n];
            for i in 0..n {
                let ydiff = y1[i] - y[i];
                let bspl = h * k1[i] - ydiff;
                rcont[i] = y[i];
                rcont[n + i] = ydiff;
                rcont[2 * n + i] = bspl;
                rcont[3 * n + i] = ydiff - h * k7[i] - bspl;
                rcont[4 * n + i] = h
                    * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i]
                        + D7 * k7[i]);
            }
            let step = DenseStep { t, h, rcont };

            if let (Some(g), Some(gp)) = (event, g_prev.as_mut()) {
                let mut buf = vec![0.0; n];
                let mut t_a = t;
                let mut g_a = *gp;
                let probes = [0.25, 0.5, 0.75, 1.0];
                for &theta in &probes {
                    let t_b = if theta == 1.0 { t + h } else { t + theta * h };
                    let g_b = if theta == 1.0 {
                        g(&y1)
                    } else {
                        step.eval_into(n, t_b, &mut buf);
                        g(&buf)
                    };
                    if g_a > 0.0 && g_b <= 0.0 {
                        let f = |s: f64| {
                            let mut b = vec![0.0; n];
                            step.eval_into(n, s, &mut b);
                            g(&b)
                        };
                        let te = brent_root(f, t_a, t_b, g_a, g_b, 1e-14 * t_b.abs().max(1.0));
                        let mut ye = vec![0.0; n];
                        step.eval_into(n, te, &mut ye);
                        sol.steps.push(step);
                        sol.t1 = te;
                        return Ok((sol, Some(Crossing { t: te, y: ye })));
                    }
                    t_a = t_b;
                    g_a = g_b;
                }
                *gp = g_a;
            }

            sol.steps.push(step);
            t += h;
            std::mem::swap(&mut y, &mut y1);
            std::mem::swap(&mut k1, &mut k7);
            if last {
                sol.t1 = t_end;
                return Ok((sol, None));
            }
            let mut h_new = h * fac;
            if rejected {
                h_new = h_new.min(h);
            }
            rejected = false;
            h = h_new.min(t_end - t);
        } else {
            rejected = true;
            h *= fac.min(1.0);
        }
        if h < h_floor {
            return Err(Error::StepSizeCollapse { t, h });
        }
    }
    Err(Error::StepSizeCollapse { t, h })
}

fn constant_rcont(y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let mut r = vec![0.0; 5 * n];
    r[..n].copy_from_slice(y);
    r
}

/// Brent's method on a bracket with `fa * fb <= 0`.
pub fn brent_root<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, fa: f64, fb: f64, xtol: f64) -> f64 {
    let (mut a, mut b, mut fa, mut fb) = (a, b, fa, fb);
    if fa == 0.0 {
        return a;
    }
    if fb == 0.0 {
        return b;
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if (fb > 0.0) == (fc > 0.0) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return b;
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = d;
            }
        } else {
            d = m;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
    }
    b
}

/// Golden-section minimisation on `[a, b]`; returns `(argmin, min)`.
pub fn golden_min<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, xtol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (a, b);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while (b - a).abs() > xtol {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
    }
    if f1 <= f2 { (x1, f1) } else { (x2, f2) }
}

/// Four-point Gauss–Legendre nodes and weights on `[-1, 1]`.
pub const GAUSS4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
    (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
];

/// Integrates `f` over `[a, b]` with the four-point rule.
pub fn gauss4<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    GAUSS4.iter().map(|(x, w)| w * f(mid + half * x)).sum::<f64>() * half
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_matches_closed_form() {
        let opts = OdeOptions::default();
        let (sol, ev) = integrate(
            |_t, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
            },
            0.0,
            &[1.0, 0.0],
            10.0,
            &opts,
            None,
        )
        .unwrap();
        assert!(ev.is_none());
        for i in 0..=100 {
            let t = i as f64 * 0.1;
            let y = sol.eval(t);
            assert!((y[0] - t.cos()).abs() < 1e-8, "t={t} err={}", y[0] - t.cos());
            assert!((y[1] + t.sin()).abs() < 1e-8);
            let dy = sol.derivative(t);
            assert!((dy[0] - y[1]).abs() < 1e-6);
        }
    }

    #[test]
    fn event_located_on_dense_output() {
        let opts = OdeOptions::default();
        let g = |y: &[f64]| y[0];
        let (sol, ev) = integrate(
            |_t, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
            },
            0.0,
            &[1.0, 0.0],
            10.0,
            &opts,
            Some(&g),
        )
        .unwrap();
        let ev = ev.expect("crossing");
        assert!((ev.t - std::f64::consts::FRAC_PI_2).abs() < 1e-10);
        assert!((sol.t1() - ev.t).abs() < 1e-15);
    }

    #[test]
    fn brent_and_golden() {
        let r = brent_root(|x| x * x - 2.0, 0.0, 2.0, -2.0, 2.0, 1e-14);
        assert!((r - 2f64.sqrt()).abs() < 1e-13);
        let (m, v) = golden_min(|x| (x - 0.3).abs(), 0.0, 1.0, 1e-12);
        assert!((m - 0.3).abs() < 1e-11 && v < 1e-11);
        let i = gauss4(|x| x.powi(7) + x.powi(2), 0.0, 1.0);
        assert!((i - (1.0 / 8.0 + 1.0 / 3.0)).abs() < 1e-14);
    }
}
