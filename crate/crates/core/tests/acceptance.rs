//! Acceptance checks, one line per criterion.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reflected_morse::dynamics::{shoot, EventPolicy, Limit, ReflectedPath, ShootOptions};
use reflected_morse::fields::{mirror_frames, random_frame_field, Combination};
use reflected_morse::geometry::surface::LevelSet;
use reflected_morse::geometry::{Euclidean, System};
use reflected_morse::index_form::{energy_form, index_stability_scan, second_variation, Boundary};
use reflected_morse::jacobi::{conjugate_points, propagate_jacobi, variation_consistency_check, JacobiFlow};
use reflected_morse::morse::{fixed_endpoint_index_theorem, periodic_sweep, PeriodicOptions, PeriodicStatus};
use reflected_morse::scenario::{builtin_suite, parse_scenario, run, RunKind, Scenario, Status, BUILTIN};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn builtin(name: &str) -> Scenario {
    let (_, text) = BUILTIN.iter().find(|(n, _)| *n == name).expect("built-in scenario");
    parse_scenario(text).unwrap()
}

/// Suite scenarios that describe a single path.
fn suite_paths() -> Vec<(String, Scenario, ReflectedPath)> {
    builtin_suite()
        .unwrap()
        .into_iter()
        .filter(|s| s.run != RunKind::PeriodicSweep)
        .map(|s| {
            let p = s.path().unwrap_or_else(|e| panic!("{}: {e}", s.name));
            (s.name.clone(), s, p)
        })
        .collect()
}

fn flow_of(p: &ReflectedPath) -> Arc<JacobiFlow> {
    Arc::new(JacobiFlow::new(p).unwrap())
}

fn c1_flat_controls() -> Outcome {
    let mut cases: Vec<(Scenario, usize)> =
        vec![(builtin("flat-free"), 0), (builtin("flat-wall"), 1), (builtin("flat-strip-2"), 2), (builtin("flat-strip-4"), 4)];
    let mut three = builtin("flat-strip-2");
    three.name = "flat-strip-3".into();
    three.initial.as_mut().unwrap().t = Some(3.0);
    three.expect.reflections = Some(3);
    cases.insert(3, (three, 3));
    let mut worst = f64::INFINITY;
    for (s, refl) in &cases {
        let r = run(s);
        ensure(r.status == Status::Pass, || format!("{}: status {:?}", s.name, r.status))?;
        let f = r.fixed.as_ref().unwrap();
        let got = r.path.as_ref().unwrap().reflections;
        ensure(got == *refl, || format!("{}: {got} reflections", s.name))?;
        ensure(f.index == 0 && f.nullity == 0 && r.conjugate_points.is_empty(), || {
            format!("{}: index {} nullity {} conjugate {}", s.name, f.index, f.nullity, r.conjugate_points.len())
        })?;
        for t in &r.eigen {
            let max = t.eigenvalues.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            let rel = t.eigenvalues[0] / max;
            ensure(rel > 1e-9, || format!("{} k={}: smallest eigenvalue ratio {rel:e}", s.name, t.k))?;
            worst = worst.min(rel);
        }
    }
    Ok(format!("0..4 reflections: index 0, nullity 0, no conjugate points; min lambda/max|lambda| = {worst:.3e} > 1e-9"))
}

fn c2_sphere() -> Outcome {
    let r = run(&builtin("sphere-oracle"));
    let f = r.fixed.as_ref().ok_or("no fixed report")?;
    let cp = &r.conjugate_points;
    ensure(cp.len() == 1, || format!("{} conjugate points", cp.len()))?;
    let err = (cp[0].time - PI).abs();
    ensure(err < 1e-8 && cp[0].multiplicity == 1, || format!("t = {}, multiplicity {}", cp[0].time, cp[0].multiplicity))?;
    ensure(f.index == 1 && f.pass, || format!("index {} vs {} conjugate points", f.index, f.conjugate_count))?;
    Ok(format!("conjugate at pi with error {err:.2e} < 1e-8, multiplicity 1; index 1 = 1 conjugate point"))
}

fn c3_harmonic() -> Outcome {
    let r = run(&builtin("harmonic"));
    let f = r.fixed.as_ref().ok_or("no fixed report")?;
    let cp = &r.conjugate_points;
    ensure(cp.len() == 2, || format!("{} conjugate points", cp.len()))?;
    let mut worst: f64 = 0.0;
    for (p, t) in cp.iter().zip([PI, 2.0 * PI]) {
        worst = worst.max((p.time - t).abs());
        ensure(p.multiplicity == 2, || format!("multiplicity {} at {}", p.multiplicity, p.time))?;
    }
    ensure(worst < 1e-8, || format!("time error {worst:e}"))?;
    ensure(f.index == 4 && f.pass, || format!("index {} vs {} conjugate points", f.index, f.conjugate_count))?;
    Ok(format!("conjugate at pi, 2pi (multiplicity 2 each), error {worst:.2e} < 1e-8; index 4 = 4"))
}

fn c4_mirror() -> Outcome {
    let sys = System::new(Arc::new(Euclidean::new(2))).with_surface(Arc::new(LevelSet::sphere(&[0.0, 0.0], 1.0)), true);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for deg in [15.0f64, 30.0, 45.0] {
        let (s, c) = deg.to_radians().sin_cos();
        for d1 in [0.7, 1.0] {
            let d2 = 1.0 / (2.0 / c - 1.0 / d1);
            let chord = 2.0 * c;
            let x0 = [1.0 - d1 * c, -d1 * s];
            let path = shoot(&sys, &x0, &[c, s], d1 + 0.5 * (d2 + chord), &EventPolicy::always_reflect(), &ShootOptions::default())
                .map_err(|e| e.to_string())?;
            ensure(path.reflection_count() == 1, || format!("{deg} deg: {} reflections", path.reflection_count()))?;
            let scan = conjugate_points(&flow_of(&path), None, None).map_err(|e| e.to_string())?;
            ensure(scan.points.len() == 1, || format!("{deg} deg, d1 {d1}: {} conjugate points", scan.points.len()))?;
            let err = (scan.points[0].time - d1 - d2).abs();
            ensure(err < 1e-6, || format!("{deg} deg, d1 {d1}: d2 error {err:e}"))?;
            worst = worst.max(err);
            cases += 1;
        }
    }
    Ok(format!("{cases} cases (15, 30, 45 deg; d1 = 0.7, 1): max |d2 - d2_mirror| = {worst:.2e} < 1e-6"))
}

fn c5_jumps() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut events = 0;
    let paths = suite_paths();
    for (name, s, p) in &paths {
        let flow = flow_of(p);
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
        events += p.events.len();
        for _ in 0..20 {
            let w0 = DVector::from_fn(p.dim(), |_, _| rng.random_range(-1.0..1.0));
            let d0 = DVector::from_fn(p.dim(), |_, _| rng.random_range(-1.0..1.0));
            let r = propagate_jacobi(&flow, &w0, &d0).jump_residuals().map_err(|e| e.to_string())?.max();
            ensure(r < 1e-8, || format!("{name}: residual {r:e}"))?;
            worst = worst.max(r);
        }
    }
    Ok(format!("{} paths, {events} events, 20 fields each: max residual {worst:.2e} < 1e-8", paths.len()))
}

fn c6_variations() -> Outcome {
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    let mut err4: f64 = 0.0;
    let mut n = 0;
    for name in ["sphere-oracle", "mirror-disk-30", "harmonic-disk", "conformal-bounce", "transmit-kink"] {
        let p = builtin(name).path().map_err(|e| e.to_string())?;
        let flow = flow_of(&p);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..3 {
            let w0 = DVector::from_fn(p.dim(), |_, _| rng.random_range(-1.0..1.0));
            let d0 = DVector::from_fn(p.dim(), |_, _| rng.random_range(-1.0..1.0));
            let e3 = variation_consistency_check(&flow, &w0, &d0, 1e-3).map_err(|e| e.to_string())?;
            let e4 = variation_consistency_check(&flow, &w0, &d0, 1e-4).map_err(|e| e.to_string())?;
            let ratio = e3 / e4;
            ensure(e4 < 1e-3, || format!("{name}: error {e4:e} at eps 1e-4"))?;
            ensure((5.0..=20.0).contains(&ratio), || format!("{name}: ratio {ratio}"))?;
            lo = lo.min(ratio);
            hi = hi.max(ratio);
            err4 = err4.max(e4);
            n += 1;
        }
    }
    Ok(format!("{n} variations on curved paths: max error {err4:.2e} < 1e-3 at eps 1e-4; ratio eps 1e-3 / 1e-4 in [{lo:.2}, {hi:.2}]"))
}

fn c7_null_space() -> Outcome {
    let p = builtin("sphere-antipode").path().map_err(|e| e.to_string())?;
    let flow = flow_of(&p);
    let fixed = fixed_endpoint_index_theorem(&flow, &[8, 16, 32]).map_err(|e| e.to_string())?;
    ensure(fixed.nullity == 1, || format!("nullity {}", fixed.nullity))?;
    let svd = flow.b_block(p.total_time, Limit::Left).svd(false, true);
    let (imin, _) = svd.singular_values.argmin();
    let d0 = svd.v_t.unwrap().row(imin).transpose();
    let w = propagate_jacobi(&flow, &DVector::zeros(2), &d0);
    let w_end = w.state(p.total_time, Limit::Left).0.amax();
    let frames = Arc::new(mirror_frames(&p).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut worst, mut worst_e): (f64, f64) = (0.0, 0.0);
    for _ in 0..20 {
        let z = random_frame_field(&p, frames.clone(), &mut rng, 6, 2, true).map_err(|e| e.to_string())?;
        worst = worst.max(second_variation(&p, &w, &z, Boundary::Fixed).map_err(|e| e.to_string())?.abs());
        worst_e = worst_e.max(energy_form(&p, &w, &z, Boundary::Fixed).map_err(|e| e.to_string())?.abs());
    }
    ensure(worst < 1e-7 && worst_e < 1e-7, || format!("|J''(W, Z)| = {worst:e}, energy form {worst_e:e}"))?;
    Ok(format!(
        "nullity 1 from eigenvalues; |W(T)| = {w_end:.1e}; over 20 Z max |J''(W, Z)| = {worst:.2e}, max |E(W, Z)| = {worst_e:.2e} < 1e-7"
    ))
}

fn c8_periodic() -> Outcome {
    for name in ["disk-diameter", "conformal-diameter"] {
        let r = run(&builtin(name));
        let p = r.periodic.as_ref().ok_or_else(|| format!("{name}: {:?}", r.error))?;
        let conc = p.concavity_index().ok_or(format!("{name}: degenerate"))?;
        ensure(p.status == PeriodicStatus::Pass, || {
            format!("{name}: {} != {} + {conc}", p.periodic_index, p.fixed.index)
        })?;
    }
    let t0 = Instant::now();
    let sweep = periodic_sweep(50, 2024, 0.05, &PeriodicOptions::default());
    let secs = t0.elapsed().as_secs_f64();
    ensure(sweep.failed == 0 && sweep.errors == 0, || format!("{} failed, {} errors", sweep.failed, sweep.errors))?;
    ensure(sweep.degenerate * 10 < 50, || format!("{} degenerate of 50", sweep.degenerate))?;
    ensure(secs <= 600.0, || format!("sweep took {secs:.0} s"))?;
    Ok(format!(
        "disk diameter and conformal diameter pass; sweep seed 2024: {} pass, {} fail, {} degenerate of 50 in {secs:.1} s",
        sweep.passed, sweep.failed, sweep.degenerate
    ))
}

fn c9_discretization() -> Outcome {
    let mut rows = Vec::new();
    for (name, s, p) in suite_paths() {
        let ks = &s.numerics.ks;
        if p.periodic {
            let r = run(&s);
            ensure(r.status == Status::Pass, || format!("{name}: {:?} {:?}", r.status, r.error))?;
            let pr = r.periodic.unwrap();
            let stable = |t: &[(usize, usize, usize)]| t.windows(2).all(|w| (w[0].1, w[0].2) == (w[1].1, w[1].2));
            ensure(stable(&pr.periodic_table) && stable(&pr.fixed.table), || format!("{name}: {:?}", pr.periodic_table))?;
            rows.push(format!("{name} {}/{}", pr.periodic_index, pr.periodic_nullity));
        } else {
            let reports = index_stability_scan(&flow_of(&p), ks, Boundary::Fixed).map_err(|e| format!("{name}: {e}"))?;
            rows.push(format!("{name} {}/{}", reports[0].index, reports[0].nullity));
        }
    }
    Ok(format!("index/nullity identical for k0, 2k0, 4k0 on {} scenarios: {}", rows.len(), rows.join(", ")))
}

fn c10_symmetry() -> Outcome {
    let mut asym: f64 = 0.0;
    let mut lin: f64 = 0.0;
    let mut pairs = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for (name, _, p) in suite_paths() {
        let frames = Arc::new(mirror_frames(&p).map_err(|e| e.to_string())?);
        let bcs: &[Boundary] = if p.periodic { &[Boundary::Fixed, Boundary::Periodic] } else { &[Boundary::Fixed] };
        for &bc in bcs {
            let fixed = bc == Boundary::Fixed;
            for _ in 0..4 {
                let mut draw = |cells, modes| random_frame_field(&p, frames.clone(), &mut rng, cells, modes, fixed).unwrap();
                let (w, u, z) = (draw(4, 2), draw(5, 1), draw(3, 2));
                let s: f64 = rng.random_range(-2.0..2.0);
                let j = |a: &dyn reflected_morse::fields::VectorField, b: &dyn reflected_morse::fields::VectorField| {
                    second_variation(&p, a, b, bc).unwrap()
                };
                let wz = j(&w, &z);
                let a = (wz - j(&z, &w)).abs() / wz.abs().max(1.0);
                let comb = Combination { terms: vec![(1.0, &w), (s, &u)] };
                let lhs = j(&comb, &z);
                let l = (lhs - wz - s * j(&u, &z)).abs() / lhs.abs().max(1.0);
                ensure(a < 1e-8 && l < 1e-9, || format!("{name}: asymmetry {a:e}, bilinearity {l:e}"))?;
                asym = asym.max(a);
                lin = lin.max(l);
                pairs += 1;
            }
        }
    }
    Ok(format!("{pairs} random pairs on all suite paths: asymmetry {asym:.2e} < 1e-8, bilinearity defect {lin:.2e} < 1e-9"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("flat-space controls", c1_flat_controls),
        ("sphere oracle", c2_sphere),
        ("harmonic oscillator oracle", c3_harmonic),
        ("mirror equation", c4_mirror),
        ("Jacobi jump residuals", c5_jumps),
        ("variation consistency", c6_variations),
        ("null space", c7_null_space),
        ("periodic index theorem", c8_periodic),
        ("discretization independence", c9_discretization),
        ("symmetry and bilinearity", c10_symmetry),
    ];
    let only: Option<usize> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut failed = 0;
    for (i, (title, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let t0 = Instant::now();
        let out = std::panic::catch_unwind(f).unwrap_or_else(|e| {
            Err(e.downcast_ref::<String>().cloned().or(e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = t0.elapsed().as_secs_f64();
        match out {
            Ok(msg) => println!("criterion {n:>2} PASS  {title}: {msg} [{secs:.1} s]"),
            Err(msg) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {title}: {msg} [{secs:.1} s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
