use std::sync::Arc;

use nalgebra::DVector;

use crate::dynamics::{shoot, EventPolicy, Limit, ReflectedPath, ShootOptions};
use crate::error::{Error, Result};
use crate::geometry::System;
use crate::jacobi::JacobiFlow;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Endpoint miss accepted, max-norm in chart coordinates.
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    /// Relative singular value of `B(T)` below which endpoints count as conjugate.
    pub tol_rank: f64,
    pub shoot: ShootOptions,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 50, max_halvings: 8, tol_rank: 1e-7, shoot: ShootOptions::default() }
    }
}

/// Finds the reflected path from `x` to `y` in time `T` by Newton's method on
/// the initial velocity, with `B(T)` from the Jacobi flow as derivative.
#[allow(clippy::too_many_arguments)]
pub fn two_point_solve(
    system: &System,
    x: &[f64],
    y: &[f64],
    v_guess: &[f64],
    total_time: f64,
    policy: &EventPolicy,
    opts: &NewtonOptions,
) -> Result<ReflectedPath> {
    let n = system.dim();
    let target = DVector::from_column_slice(y);
    let miss_of = |p: &ReflectedPath| p.endpoint().0 - &target;
    let mut v = DVector::from_column_slice(v_guess);
    let mut path = shoot(system, x, v.as_slice(), total_time, policy, &opts.shoot)?;
    let mut miss = miss_of(&path);
    for _ in 0..=opts.max_iter {
        let flow = JacobiFlow::from_arc(Arc::new(path.clone()))?;
        let psi = flow.fundamental(total_time, Limit::Left);
        let b = psi.view((0, n), (n, n)).into_owned();
        let scale = psi.view((0, n), (2 * n, n)).into_owned().singular_values().max();
        let sv = b.clone().singular_values();
        let ratio = sv.min() / scale;
        if ratio < opts.tol_rank {
            return Err(Error::ConjugateEndpoint { sigma_ratio: ratio });
        }
        if miss.amax() < opts.tol {
            return Ok(path);
        }
        let step = b.lu().solve(&(-&miss)).ok_or(Error::ConjugateEndpoint { sigma_ratio: 0.0 })?;
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let trial_v = &v + &step * lambda;
            if let Ok(p) = shoot(system, x, trial_v.as_slice(), total_time, policy, &opts.shoot) {
                let m = miss_of(&p);
                if m.norm() < miss.norm() {
                    accepted = Some((trial_v, p, m));
                    break;
                }
            }
            lambda *= 0.5;
        }
        match accepted {
            Some((tv, p, m)) => {
                v = tv;
                path = p;
                miss = m;
            }
            None => {
                return Err(Error::NewtonDivergence { iterations: opts.max_iter, residual: miss.amax() });
            }
        }
    }
    Err(Error::NewtonDivergence { iterations: opts.max_iter, residual: miss.amax() })
}
