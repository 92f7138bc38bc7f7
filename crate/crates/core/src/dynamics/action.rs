use crate::dynamics::{Limit, ReflectedPath};
use crate::error::Result;
use crate::fields::{quadrature_cells, PathPoint, VectorField};
use crate::ode::gauss4;

/// `J = Σ ∫ ½|α̇|²_g − V(α) dt`, four-point Gauss rule on every dense step.
pub fn action(path: &ReflectedPath) -> Result<f64> {
    let n = path.dim();
    let sys = &path.system;
    let mut total = 0.0;
    let mut err = None;
    for seg in &path.segments {
        for (a, b) in seg.sol.step_intervals() {
            total += gauss4(
                |t| {
                    let y = seg.sol.eval(t);
                    match sys.connection(&y[..n]) {
                        Ok(conn) => {
                            let v = nalgebra::DVector::from_column_slice(&y[n..]);
                            0.5 * conn.inner(&v, &v) - sys.potential.value(&y[..n], seg.side)
                        }
                        Err(e) => {
                            err = Some(e);
                            0.0
                        }
                    }
                },
                a,
                b,
            );
        }
    }
    match err {
        Some(e) => Err(e),
        None => Ok(total),
    }
}

/// First variation of the action in direction `z`:
/// `−∫⟨D_tα̇ + ∇V, Z⟩ dt − Σ_events ⟨Δα̇, Z̄⟩` (endpoint terms are absent for
/// fields vanishing at the ends).
pub fn first_variation(path: &ReflectedPath, z: &dyn VectorField) -> Result<f64> {
    let max_len = path.total_time / 200.0;
    let cells = quadrature_cells(path, &z.breaks(), z.support(), max_len);
    let mut integral = 0.0;
    for (a, b) in cells {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        for (xi, w) in crate::ode::GAUSS4 {
            let pp = PathPoint::at(path, mid + half * xi, Limit::Right)?;
            let r = pp.covariant_accel() + &pp.grad_v;
            integral += w * half * pp.inner(&r, &z.jet(&pp).w);
        }
    }
    let mut boundary = 0.0;
    for e in &path.events {
        let lm = PathPoint::at(path, e.time, Limit::Left)?;
        let lp = PathPoint::at(path, e.time, Limit::Right)?;
        let zbar = 0.5 * (z.jet(&lm).w + z.jet(&lp).w);
        let dv = &e.v_out - &e.v_in;
        boundary += lm.inner(&dv, &zbar);
    }
    Ok(-integral - boundary)
}

/// Largest `|J'(α)Z|` over the probe fields.
pub fn criticality_residual(path: &ReflectedPath, probes: &[&dyn VectorField]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for z in probes {
        worst = worst.max(first_variation(path, *z)?.abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;
    use std::sync::Arc;

    use rand::SeedableRng;

    use super::*;
    use crate::dynamics::{shoot, EventPolicy, ShootOptions};
    use crate::fields::{mirror_frames, random_frame_field, ZeroField};
    use crate::geometry::surface::LevelSet;
    use crate::geometry::{Euclidean, Polynomial, Potential, System};

    #[test]
    fn action_closed_forms() {
        let free = System::new(Arc::new(Euclidean::new(2)));
        let p = shoot(&free, &[0.0, 0.0], &[3.0, 4.0], 2.0, &EventPolicy::always_reflect(), &ShootOptions::default()).unwrap();
        // L = 10, T = 2
        assert!((action(&p).unwrap() - 25.0).abs() < 1e-9);

        let strip = free.clone().with_surface(
            Arc::new(LevelSet::polynomial(Polynomial::new(vec![(1.0, vec![1, 0]), (-1.0, vec![2, 0])]))),
            true,
        );
        let p = shoot(&strip, &[0.5, 0.0], &[1.0, 0.0], 2.0, &EventPolicy::always_reflect(), &ShootOptions::default()).unwrap();
        assert!((action(&p).unwrap() - 1.0).abs() < 1e-9);

        let osc = free.with_potential(Potential::harmonic(2, 1.0));
        let p = shoot(&osc, &[1.0, 0.0], &[0.0, 0.0], PI, &EventPolicy::always_reflect(), &ShootOptions::default()).unwrap();
        assert!(action(&p).unwrap().abs() < 1e-9);
    }

    #[test]
    fn physical_paths_are_critical_and_corrupted_ones_are_not() {
        let sys = System::new(Arc::new(Euclidean::new(2)))
            .with_surface(Arc::new(LevelSet::sphere(&[0.0, 0.0], 1.0)), true)
            .with_potential(Potential::harmonic(2, 0.4));
        let p = shoot(&sys, &[0.0, 0.3], &[0.8, 0.5], 2.5, &EventPolicy::always_reflect(), &ShootOptions::default()).unwrap();
        assert!(!p.events.is_empty());
        let frames = Arc::new(mirror_frames(&p).unwrap());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let probes: Vec<_> = (0..20).map(|_| random_frame_field(&p, frames.clone(), &mut rng, 3, 2, true).unwrap()).collect();
        let refs: Vec<&dyn VectorField> = probes.iter().map(|z| z as &dyn VectorField).collect();
        assert!(criticality_residual(&p, &refs).unwrap() < 1e-6);
        assert_eq!(criticality_residual(&p, &[&ZeroField(2)]).unwrap(), 0.0);

        let opts = ShootOptions { reflection_gain: 1.1, ..Default::default() };
        let bad = shoot(&sys, &[0.0, 0.3], &[0.8, 0.5], 2.5, &EventPolicy::always_reflect(), &opts).unwrap();
        let frames = Arc::new(mirror_frames(&bad).unwrap());
        let probes: Vec<_> = (0..20).map(|_| random_frame_field(&bad, frames.clone(), &mut rng, 3, 2, true).unwrap()).collect();
        let refs: Vec<&dyn VectorField> = probes.iter().map(|z| z as &dyn VectorField).collect();
        assert!(criticality_residual(&bad, &refs).unwrap() > 1e-2);
    }
}
