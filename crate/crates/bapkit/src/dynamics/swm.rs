//! Shallow water basin: Richtmyer two-step Lax-Wendroff on the conserved
//! variables `(h, hu, hv)` with reflective walls, plus the total-energy
//! coordinate transform.
//!
//! Walls are realized with mirror ghost cells (depth copied, normal momentum
//! negated, tangential momentum copied). The wall-face mass flux then cancels
//! algebraically, so the scheme conserves total depth to roundoff. Velocities
//! at the 4m-4 boundary points are projected to zero after every step.

use nalgebra::DVector;

use super::{ModelKind, ModelSpec, SystemState};
use crate::error::{Error, Result};

struct SwmParams {
    mesh: usize,
    g: f64,
    dz: f64,
}

fn params(spec: &ModelSpec) -> Result<SwmParams> {
    match spec.kind {
        ModelKind::ShallowWater {
            mesh,
            extent,
            gravity,
        } => Ok(SwmParams {
            mesh,
            g: gravity,
            dz: extent / (mesh - 1) as f64,
        }),
        _ => Err(Error::Precondition(
            "operation is defined for the shallow water model only".into(),
        )),
    }
}

/// Grid indices of the 4m-4 wall points.
pub fn boundary_points(mesh: usize) -> Vec<usize> {
    let mut pts = Vec::with_capacity(4 * mesh - 4);
    for i in 0..mesh {
        for j in 0..mesh {
            if i == 0 || j == 0 || i == mesh - 1 || j == mesh - 1 {
                pts.push(i * mesh + j);
            }
        }
    }
    pts
}

#[inline]
fn flux_x(h: f64, p: f64, q: f64, g: f64) -> (f64, f64, f64) {
    (p, p * p / h + 0.5 * g * h * h, p * q / h)
}

#[inline]
fn flux_y(h: f64, p: f64, q: f64, g: f64) -> (f64, f64, f64) {
    (q, p * q / h, q * q / h + 0.5 * g * h * h)
}

/// Advective CFL number `dt * max(|u| + c, |v| + c) / dz` with `c = sqrt(gh)`.
pub fn cfl_number(state: &SystemState, spec: &ModelSpec) -> Result<f64> {
    let p = params(spec)?;
    let cells = p.mesh * p.mesh;
    if state.dim() != 3 * cells {
        return Err(Error::Dimension {
            context: "shallow water state",
            expected: 3 * cells,
            got: state.dim(),
        });
    }
    let v = &state.values;
    let mut speed: f64 = 0.0;
    for k in 0..cells {
        let c = (p.g * v[k].max(0.0)).sqrt();
        speed = speed
            .max(v[cells + k].abs() + c)
            .max(v[2 * cells + k].abs() + c);
    }
    Ok(spec.dt * speed / p.dz)
}

/// One Richtmyer two-step Lax-Wendloff update. Errors with a blowup if any
/// depth (half-step or full-step) becomes nonpositive or non-finite.
pub fn lax_wendroff_step(state: &SystemState, spec: &ModelSpec) -> Result<SystemState> {
    let par = params(spec)?;
    let m = par.mesh;
    let g = par.g;
    let cells = m * m;
    if state.dim() != 3 * cells {
        return Err(Error::Dimension {
            context: "shallow water state",
            expected: 3 * cells,
            got: state.dim(),
        });
    }
    let dt = spec.dt;
    let half = dt / (2.0 * par.dz);
    let full = dt / par.dz;

    // Padded conserved fields, ghost index range -1..=m per axis.
    let ext = m + 2;
    let pad = |i: isize, j: isize| -> usize { ((i + 1) as usize) * ext + (j + 1) as usize };
    let mut ph = vec![0.0; ext * ext];
    let mut pp = vec![0.0; ext * ext];
    let mut pq = vec![0.0; ext * ext];
    let sv = &state.values;
    for i in 0..m {
        for j in 0..m {
            let k = i * m + j;
            let h = sv[k];
            if !(h > 0.0) || !h.is_finite() {
                return Err(Error::Blowup {
                    step: 0,
                    context: format!("nonpositive or non-finite depth h[{k}] = {h}"),
                });
            }
            let e = pad(i as isize, j as isize);
            ph[e] = h;
            pp[e] = h * sv[cells + k];
            pq[e] = h * sv[2 * cells + k];
        }
    }
    let mi = m as isize;
    for j in 0..mi {
        let (src, dst) = (pad(0, j), pad(-1, j));
        ph[dst] = ph[src];
        pp[dst] = -pp[src];
        pq[dst] = pq[src];
        let (src, dst) = (pad(mi - 1, j), pad(mi, j));
        ph[dst] = ph[src];
        pp[dst] = -pp[src];
        pq[dst] = pq[src];
    }
    for i in -1..=mi {
        let ic = i.clamp(0, mi - 1);
        let (src, dst) = (pad(ic, 0), pad(i, -1));
        ph[dst] = ph[src];
        pp[dst] = if i == ic { pp[src] } else { -pp[src] };
        pq[dst] = -pq[src];
        let (src, dst) = (pad(ic, mi - 1), pad(i, mi));
        ph[dst] = ph[src];
        pp[dst] = if i == ic { pp[src] } else { -pp[src] };
        pq[dst] = -pq[src];
    }

    // Half-step states on x-faces (between (fi-1, j) and (fi, j)), then their
    // x-fluxes. Index fi in 0..=m, j in 0..m.
    let xw = m + 1;
    let mut fxh = vec![0.0; xw * m];
    let mut fxp = vec![0.0; xw * m];
    let mut fxq = vec![0.0; xw * m];
    for fi in 0..=m {
        for j in 0..m {
            let l = pad(fi as isize - 1, j as isize);
            let r = pad(fi as isize, j as isize);
            let fl = flux_x(ph[l], pp[l], pq[l], g);
            let fr = flux_x(ph[r], pp[r], pq[r], g);
            let hs = 0.5 * (ph[l] + ph[r]) - half * (fr.0 - fl.0);
            let ps = 0.5 * (pp[l] + pp[r]) - half * (fr.1 - fl.1);
            let qs = 0.5 * (pq[l] + pq[r]) - half * (fr.2 - fl.2);
            if !(hs > 0.0) || !hs.is_finite() {
                return Err(Error::Blowup {
                    step: 0,
                    context: format!("half-step depth collapsed on x-face ({fi},{j}): {hs}"),
                });
            }
            let f = flux_x(hs, ps, qs, g);
            let k = fi * m + j;
            fxh[k] = f.0;
            fxp[k] = f.1;
            fxq[k] = f.2;
        }
    }

    // Same on y-faces (between (i, fj-1) and (i, fj)).
    let mut gyh = vec![0.0; m * xw];
    let mut gyp = vec![0.0; m * xw];
    let mut gyq = vec![0.0; m * xw];
    for i in 0..m {
        for fj in 0..=m {
            let l = pad(i as isize, fj as isize - 1);
            let r = pad(i as isize, fj as isize);
            let gl = flux_y(ph[l], pp[l], pq[l], g);
            let gr = flux_y(ph[r], pp[r], pq[r], g);
            let hs = 0.5 * (ph[l] + ph[r]) - half * (gr.0 - gl.0);
            let ps = 0.5 * (pp[l] + pp[r]) - half * (gr.1 - gl.1);
            let qs = 0.5 * (pq[l] + pq[r]) - half * (gr.2 - gl.2);
            if !(hs > 0.0) || !hs.is_finite() {
                return Err(Error::Blowup {
                    step: 0,
                    context: format!("half-step depth collapsed on y-face ({i},{fj}): {hs}"),
                });
            }
            let f = flux_y(hs, ps, qs, g);
            let k = i * xw + fj;
            gyh[k] = f.0;
            gyp[k] = f.1;
            gyq[k] = f.2;
        }
    }

    let mut out = DVector::zeros(3 * cells);
    for i in 0..m {
        for j in 0..m {
            let e = pad(i as isize, j as isize);
            let xk = i * m + j; // face (i, j) is left of cell (i, j)
            let xk1 = (i + 1) * m + j;
            let yk = i * xw + j;
            let yk1 = i * xw + j + 1;
            let hn = ph[e] - full * (fxh[xk1] - fxh[xk]) - full * (gyh[yk1] - gyh[yk]);
            let pn = pp[e] - full * (fxp[xk1] - fxp[xk]) - full * (gyp[yk1] - gyp[yk]);
            let qn = pq[e] - full * (fxq[xk1] - fxq[xk]) - full * (gyq[yk1] - gyq[yk]);
            if !(hn > 0.0) || !hn.is_finite() || !pn.is_finite() || !qn.is_finite() {
                return Err(Error::Blowup {
                    step: 0,
                    context: format!("depth or momentum failed after update at cell ({i},{j})"),
                });
            }
            let k = i * m + j;
            let wall = i == 0 || j == 0 || i == m - 1 || j == m - 1;
            out[k] = hn;
            out[cells + k] = if wall { 0.0 } else { pn / hn };
            out[2 * cells + k] = if wall { 0.0 } else { qn / hn };
        }
    }
    Ok(SystemState::new(out))
}

/// Total energy `0.5 * sum(h (u^2 + v^2) + g h^2)` over the grid.
pub fn total_energy(state: &SystemState, spec: &ModelSpec) -> Result<f64> {
    let p = params(spec)?;
    let cells = p.mesh * p.mesh;
    if state.dim() != 3 * cells {
        return Err(Error::Dimension {
            context: "shallow water state",
            expected: 3 * cells,
            got: state.dim(),
        });
    }
    let v = &state.values;
    let mut e = 0.0;
    for k in 0..cells {
        let h = v[k];
        let u = v[cells + k];
        let w = v[2 * cells + k];
        e += 0.5 * (h * (u * u + w * w) + p.g * h * h);
    }
    Ok(e)
}

/// Maps `(h, u, v)` to `(sqrt(g/2) h, sqrt(h/2) u, sqrt(h/2) v)`, so the
/// squared Euclidean norm of the image equals [`total_energy`]. Requires
/// positive depth everywhere.
pub fn energy_transform(state: &SystemState, spec: &ModelSpec) -> Result<SystemState> {
    let p = params(spec)?;
    let cells = p.mesh * p.mesh;
    if state.dim() != 3 * cells {
        return Err(Error::Dimension {
            context: "shallow water state",
            expected: 3 * cells,
            got: state.dim(),
        });
    }
    let v = &state.values;
    let hg = (p.g / 2.0).sqrt();
    let mut out = DVector::zeros(3 * cells);
    for k in 0..cells {
        let h = v[k];
        if !(h > 0.0) {
            return Err(Error::Domain(format!(
                "energy transform needs positive depth, h[{k}] = {h}"
            )));
        }
        let s = (h / 2.0).sqrt();
        out[k] = hg * h;
        out[cells + k] = s * v[cells + k];
        out[2 * cells + k] = s * v[2 * cells + k];
    }
    Ok(SystemState::new(out))
}

/// Inverse of [`energy_transform`]. Errors if any transformed depth is
/// nonpositive, i.e. the preimage has left the physical manifold.
pub fn inverse_energy_transform(state: &SystemState, spec: &ModelSpec) -> Result<SystemState> {
    let p = params(spec)?;
    let cells = p.mesh * p.mesh;
    if state.dim() != 3 * cells {
        return Err(Error::Dimension {
            context: "transformed shallow water state",
            expected: 3 * cells,
            got: state.dim(),
        });
    }
    let v = &state.values;
    let inv_hg = (2.0 / p.g).sqrt();
    let mut out = DVector::zeros(3 * cells);
    for k in 0..cells {
        let h = v[k] * inv_hg;
        if !(h > 0.0) {
            return Err(Error::Domain(format!(
                "inverse energy transform hit nonpositive depth at cell {k}: {h}"
            )));
        }
        let s = (2.0 / h).sqrt();
        out[k] = h;
        out[cells + k] = v[cells + k] * s;
        out[2 * cells + k] = v[2 * cells + k] * s;
    }
    Ok(SystemState::new(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Flow, Model};
    use approx::assert_relative_eq;

    fn random_wet_state(spec: &ModelSpec, seed: u64) -> SystemState {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let cells = spec.dim() / 3;
        let mut v = vec![0.0; 3 * cells];
        for k in 0..cells {
            v[k] = rng.gen_range(5.0..15.0);
            v[cells + k] = rng.gen_range(-3.0..3.0);
            v[2 * cells + k] = rng.gen_range(-3.0..3.0);
        }
        SystemState::from_vec(v)
    }

    #[test]
    fn uniform_lake_at_rest_is_stationary() {
        let spec = ModelSpec::shallow_water_default();
        let flat = SystemState::from_vec(
            [vec![7.0; 529], vec![0.0; 529], vec![0.0; 529]].concat(),
        );
        let next = lax_wendroff_step(&flat, &spec).unwrap();
        for k in 0..1587 {
            assert_relative_eq!(next.values[k], flat.values[k], max_relative = 1e-14);
        }
    }

    #[test]
    fn mass_is_conserved_over_thousand_steps() {
        let spec = ModelSpec::shallow_water_default();
        let model = Model::new(spec.clone());
        let x0 = spec.initial_state();
        let mass0: f64 = x0.values.iter().take(529).sum();
        let x = model.propagate(&x0, 10.0).unwrap();
        let mass: f64 = x.values.iter().take(529).sum();
        assert!(
            ((mass - mass0) / mass0).abs() < 1e-10,
            "relative mass drift {}",
            ((mass - mass0) / mass0).abs()
        );
    }

    #[test]
    fn boundary_velocities_stay_zero() {
        let spec = ModelSpec::shallow_water_default();
        let model = Model::new(spec.clone());
        let x = model.propagate(&spec.initial_state(), 2.0).unwrap();
        let cells = 529;
        let pts = boundary_points(23);
        assert_eq!(pts.len(), 88);
        for &k in &pts {
            assert_eq!(x.values[cells + k], 0.0);
            assert_eq!(x.values[2 * cells + k], 0.0);
        }
    }

    #[test]
    fn centered_bump_keeps_square_symmetry() {
        let spec = ModelSpec::shallow_water_default();
        let model = Model::new(spec.clone());
        let x = model.propagate(&spec.initial_state(), 1.0).unwrap();
        let m = 23;
        let cells = m * m;
        let at = |f: usize, i: usize, j: usize| x.values[f * cells + i * m + j];
        for i in 0..m {
            for j in 0..m {
                // Transpose swaps the velocity components.
                assert_relative_eq!(at(0, i, j), at(0, j, i), epsilon = 1e-8);
                assert_relative_eq!(at(1, i, j), at(2, j, i), epsilon = 1e-8);
                // Reflection across the x mid-plane negates u.
                assert_relative_eq!(at(0, i, j), at(0, m - 1 - i, j), epsilon = 1e-8);
                assert_relative_eq!(at(1, i, j), -at(1, m - 1 - i, j), epsilon = 1e-8);
                assert_relative_eq!(at(2, i, j), at(2, m - 1 - i, j), epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn cfl_stays_small_on_defaults_and_flags_fast_flow() {
        let spec = ModelSpec::shallow_water_default();
        let x0 = spec.initial_state();
        let cfl = cfl_number(&x0, &spec).unwrap();
        assert!(cfl > 0.0 && cfl < 0.2, "default CFL should be ~0.11, got {cfl}");

        let coarse = ModelSpec::shallow_water(23, 22.0, 9.81, 0.2).unwrap();
        let model = Model::new(coarse.clone());
        let _ = model.propagate(&coarse.initial_state(), 0.2);
        assert!(model.cfl_violations() >= 1);
    }

    #[test]
    fn blowup_is_reported_with_step_index() {
        let coarse = ModelSpec::shallow_water(23, 22.0, 9.81, 0.5).unwrap();
        let model = Model::new(coarse.clone());
        match model.propagate(&coarse.initial_state(), 50.0) {
            Err(Error::Blowup { step, .. }) => assert!(step > 0),
            other => panic!("expected blowup, got {other:?}"),
        }
    }

    #[test]
    fn flat_lake_energy_closed_form() {
        let spec = ModelSpec::shallow_water_default();
        let flat = SystemState::from_vec(
            [vec![1.0; 529], vec![0.0; 529], vec![0.0; 529]].concat(),
        );
        // 0.5 * 529 * 9.81
        assert_relative_eq!(
            total_energy(&flat, &spec).unwrap(),
            2594.745,
            max_relative = 1e-12
        );
    }

    #[test]
    fn transform_matches_hand_value_and_energy() {
        let spec = ModelSpec::shallow_water_default();
        let two = SystemState::from_vec(
            [vec![2.0; 529], vec![0.5; 529], vec![-0.25; 529]].concat(),
        );
        let t = energy_transform(&two, &spec).unwrap();
        assert_relative_eq!(t.values[0], (9.81f64 / 2.0).sqrt() * 2.0, max_relative = 1e-14);
        assert_relative_eq!(t.values[529], 0.5, max_relative = 1e-14);

        let state = random_wet_state(&spec, 7);
        let image = energy_transform(&state, &spec).unwrap();
        assert_relative_eq!(
            image.values.norm_squared(),
            total_energy(&state, &spec).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn transform_round_trips() {
        let spec = ModelSpec::shallow_water_default();
        let state = random_wet_state(&spec, 42);
        let back =
            inverse_energy_transform(&energy_transform(&state, &spec).unwrap(), &spec).unwrap();
        for k in 0..state.dim() {
            assert_relative_eq!(back.values[k], state.values[k], max_relative = 1e-13);
        }
    }

    #[test]
    fn transforms_reject_dry_states() {
        let spec = ModelSpec::shallow_water_default();
        let mut state = spec.initial_state();
        state.values[3] = 0.0;
        assert!(matches!(
            energy_transform(&state, &spec),
            Err(Error::Domain(_))
        ));
        let mut image = energy_transform(&spec.initial_state(), &spec).unwrap();
        image.values[3] = -1.0;
        assert!(matches!(
            inverse_energy_transform(&image, &spec),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn energy_drift_stays_bounded() {
        let spec = ModelSpec::shallow_water_default();
        let model = Model::new(spec.clone());
        let x0 = spec.initial_state();
        let e0 = total_energy(&x0, &spec).unwrap();
        let x = model.propagate(&x0, 10.0).unwrap();
        let e = total_energy(&x, &spec).unwrap();
        let drift = (e - e0) / e0;
        println!("energy drift over 1000 steps: {drift:.3e}");
        assert!(drift.abs() < 0.05, "energy drift {drift}");
    }

    #[test]
    fn swm_ops_reject_lorenz_specs() {
        let spec = ModelSpec::lorenz96_default();
        let s = spec.initial_state();
        assert!(lax_wendroff_step(&s, &spec).is_err());
        assert!(total_energy(&s, &spec).is_err());
        assert!(energy_transform(&s, &spec).is_err());
    }
}
