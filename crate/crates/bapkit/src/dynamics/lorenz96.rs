//! Cyclic Lorenz-96 tendency and its RK4 integrator.

use nalgebra::DVector;

use super::{ModelKind, ModelSpec, SystemState};
use crate::error::{Error, Result};

/// Tendency `dy_i = y_{i-1} (y_{i+1} - y_{i-2}) - y_i + F` with cyclic
/// indices. Requires at least 4 components.
pub fn l96_rhs(y: &DVector<f64>, forcing: f64) -> Result<DVector<f64>> {
    let k = y.len();
    if k < 4 {
        return Err(Error::Precondition(format!(
            "Lorenz-96 tendency needs at least 4 components, got {k}"
        )));
    }
    let mut out = DVector::zeros(k);
    for i in 0..k {
        let im1 = (i + k - 1) % k;
        let im2 = (i + k - 2) % k;
        let ip1 = (i + 1) % k;
        out[i] = y[im1] * (y[ip1] - y[im2]) - y[i] + forcing;
    }
    Ok(out)
}

/// One classical RK4 step of size `spec.dt`. Errors if the result is not
/// finite (blowup) or the spec is not Lorenz-96.
pub fn rk4_step(state: &SystemState, spec: &ModelSpec) -> Result<SystemState> {
    let ModelKind::Lorenz96 { forcing, .. } = spec.kind else {
        return Err(Error::Precondition(
            "rk4_step drives the Lorenz-96 model only".into(),
        ));
    };
    let dt = spec.dt;
    let y = &state.values;
    let k1 = l96_rhs(y, forcing)?;
    let k2 = l96_rhs(&(y + &k1 * (dt / 2.0)), forcing)?;
    let k3 = l96_rhs(&(y + &k2 * (dt / 2.0)), forcing)?;
    let k4 = l96_rhs(&(y + &k3 * dt), forcing)?;
    let next = y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    if !next.iter().all(|x| x.is_finite()) {
        return Err(Error::Blowup {
            step: 0,
            context: "RK4 produced non-finite components".into(),
        });
    }
    Ok(SystemState::new(next))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Per-component tendency written out without the shared factorization,
    /// used as an independent oracle.
    fn rhs_oracle(y: &[f64], forcing: f64) -> Vec<f64> {
        let k = y.len();
        let mut out = vec![0.0; k];
        for i in 0..k {
            let ym2 = y[(i + k - 2) % k];
            let ym1 = y[(i + k - 1) % k];
            let yp1 = y[(i + 1) % k];
            out[i] = -ym2 * ym1 + ym1 * yp1 - y[i] + forcing;
        }
        out
    }

    #[test]
    fn rhs_vanishes_at_equilibrium() {
        let y = DVector::from_element(50, 8.0);
        let dy = l96_rhs(&y, 8.0).unwrap();
        for i in 0..50 {
            assert_eq!(dy[i], 0.0);
        }
    }

    #[test]
    fn rhs_of_zero_state_is_forcing() {
        let y = DVector::zeros(50);
        let dy = l96_rhs(&y, 8.0).unwrap();
        for i in 0..50 {
            assert_eq!(dy[i], 8.0);
        }
    }

    #[test]
    fn rhs_four_component_hand_value() {
        // y = (1,0,0,0), F = 0: every quadratic term has a zero factor, so
        // only the linear damping survives on the first component.
        let y = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        let dy = l96_rhs(&y, 0.0).unwrap();
        assert_eq!(dy.as_slice(), &[-1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn rhs_matches_componentwise_oracle() {
        let y: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin() * 3.0 + 1.0).collect();
        let dy = l96_rhs(&DVector::from_vec(y.clone()), 8.0).unwrap();
        let oracle = rhs_oracle(&y, 8.0);
        for i in 0..50 {
            // The oracle associates the quadratic terms differently, so
            // agreement is to a few ulps, not bitwise.
            assert_relative_eq!(dy[i], oracle[i], max_relative = 1e-13, epsilon = 1e-13);
        }
    }

    #[test]
    fn rhs_rejects_small_systems() {
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!(l96_rhs(&y, 8.0).is_err());
    }

    /// Straight-line RK4 oracle on plain slices, no nalgebra arithmetic.
    fn rk4_oracle(y: &[f64], forcing: f64, dt: f64) -> Vec<f64> {
        let k = y.len();
        let k1 = rhs_oracle(y, forcing);
        let mut y2 = vec![0.0; k];
        for i in 0..k {
            y2[i] = y[i] + 0.5 * dt * k1[i];
        }
        let k2 = rhs_oracle(&y2, forcing);
        let mut y3 = vec![0.0; k];
        for i in 0..k {
            y3[i] = y[i] + 0.5 * dt * k2[i];
        }
        let k3 = rhs_oracle(&y3, forcing);
        let mut y4 = vec![0.0; k];
        for i in 0..k {
            y4[i] = y[i] + dt * k3[i];
        }
        let k4 = rhs_oracle(&y4, forcing);
        let mut out = vec![0.0; k];
        for i in 0..k {
            out[i] = y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out
    }

    #[test]
    fn rk4_matches_independent_oracle() {
        let spec = ModelSpec::lorenz96(50, 8.0, 0.01).unwrap();
        let y: Vec<f64> = (0..50).map(|i| 8.0 + (i as f64 * 0.61).cos()).collect();
        let stepped = rk4_step(&SystemState::from_vec(y.clone()), &spec).unwrap();
        let oracle = rk4_oracle(&y, 8.0, 0.01);
        for i in 0..50 {
            assert_relative_eq!(stepped.values[i], oracle[i], max_relative = 1e-14);
        }
    }

    #[test]
    fn rk4_keeps_the_equilibrium_fixed() {
        let spec = ModelSpec::lorenz96(50, 8.0, 0.01).unwrap();
        let fixed = SystemState::from_vec(vec![8.0; 50]);
        let stepped = rk4_step(&fixed, &spec).unwrap();
        for i in 0..50 {
            assert_relative_eq!(stepped.values[i], 8.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn rk4_refuses_shallow_water_specs() {
        let spec = ModelSpec::shallow_water_default();
        let state = spec.initial_state();
        assert!(rk4_step(&state, &spec).is_err());
    }

    #[test]
    fn rk4_flags_blowup() {
        // Huge state, huge dt: the quadratic term overflows to infinity.
        let spec = ModelSpec::lorenz96(4, 8.0, 1e150).unwrap();
        let y = SystemState::from_vec(vec![1e150, -1e150, 1e150, -1e150]);
        assert!(matches!(
            rk4_step(&y, &spec),
            Err(Error::Blowup { .. })
        ));
    }

    #[test]
    fn rk4_fourth_order_convergence() {
        // One step of size dt vs two of size dt/2 against a tiny-step
        // reference; halving dt should shrink the error by about 16.
        let y0: Vec<f64> = (0..8).map(|i| 8.0 + (i as f64).sin()).collect();
        let reference = {
            let spec = ModelSpec::lorenz96(8, 8.0, 0.02 / 64.0).unwrap();
            let mut s = SystemState::from_vec(y0.clone());
            for _ in 0..64 {
                s = rk4_step(&s, &spec).unwrap();
            }
            s
        };
        let err = |parts: usize| -> f64 {
            let spec = ModelSpec::lorenz96(8, 8.0, 0.02 / parts as f64).unwrap();
            let mut s = SystemState::from_vec(y0.clone());
            for _ in 0..parts {
                s = rk4_step(&s, &spec).unwrap();
            }
            (&s.values - &reference.values).norm()
        };
        let ratio = err(1) / err(2);
        assert!(
            (8.0..32.0).contains(&ratio),
            "expected ~16x error reduction, got {ratio}"
        );
    }
}
