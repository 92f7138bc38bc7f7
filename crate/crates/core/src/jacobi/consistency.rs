use nalgebra::DVector;

use super::{propagate_jacobi, JacobiFlow};
use crate::dynamics::Limit;
use crate::error::Result;

/// Sup-norm distance between the difference quotient of perturbed shots and
/// the Jacobi field with data `(W0, D_tW0)`, over sample times at least
/// `10 ε` away from every event of the base path.
///
/// The perturbed initial data are `x0 + ε W0`, `v0 + ε (D_tW0 − Γ(v0, W0))`.
pub fn variation_consistency_check(
    flow: &std::sync::Arc<JacobiFlow>,
    w0: &DVector<f64>,
    dw0: &DVector<f64>,
    eps: f64,
) -> Result<f64> {
    let path = &flow.path;
    if w0.amax() == 0.0 && dw0.amax() == 0.0 {
        return Ok(0.0);
    }
    let (x0, v0) = path.state(0.0, Limit::Right);
    let conn = path.system.connection(x0.as_slice())?;
    let dv = dw0 - conn.contract(&v0, w0);
    let xp = &x0 + eps * w0;
    let vp = &v0 + eps * dv;
    let pert = path.reshoot(xp.as_slice(), vp.as_slice())?;
    let field = propagate_jacobi(flow, w0, dw0);
    let events = path.event_times();
    let t_end = path.total_time;
    let samples = 400;
    let mut worst: f64 = 0.0;
    for k in 0..=samples {
        let t = t_end * k as f64 / samples as f64;
        if events.iter().chain(pert.event_times().iter()).any(|e| (t - e).abs() < 10.0 * eps) {
            continue;
        }
        let q = (pert.position(t) - path.position(t)) / eps;
        let (w, _) = field.state(t, if t == t_end { Limit::Left } else { Limit::Right });
        worst = worst.max((q - w).amax());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use nalgebra::dvector;

    use super::*;
    use crate::dynamics::{shoot, EventPolicy, ShootOptions};
    use crate::geometry::{SpherePolar, System};

    #[test]
    fn zero_data_gives_zero() {
        let sys = System::new(Arc::new(SpherePolar));
        let p = shoot(&sys, &[1.0, 0.0], &[0.0, 1.0], 2.0, &EventPolicy::always_reflect(), &ShootOptions::default()).unwrap();
        let f = Arc::new(JacobiFlow::new(&p).unwrap());
        assert_eq!(variation_consistency_check(&f, &dvector![0.0, 0.0], &dvector![0.0, 0.0], 1e-4).unwrap(), 0.0);
        let e = variation_consistency_check(&f, &dvector![0.1, 0.0], &dvector![0.0, 0.3], 1e-4).unwrap();
        assert!(e < 1e-4, "{e}");
    }
}
