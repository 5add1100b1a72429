//! Test systems and the flow abstraction.
//!
//! A [`Model`] owns a [`ModelSpec`] and a shared step counter; it implements
//! [`Flow`], the only interface the perturbation machinery sees. Costs are
//! measured in integration steps, so every step of every trajectory passes
//! through [`Flow::propagate`].

mod lorenz96;
mod swm;

pub use lorenz96::{l96_rhs, rk4_step};
pub use swm::{
    boundary_points, cfl_number, energy_transform, inverse_energy_transform, lax_wendroff_step,
    total_energy,
};

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Dense state vector of one system. For the shallow water model the layout
/// is `[h | u | v]`, each field in row-major grid order.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub values: DVector<f64>,
}

impl SystemState {
    pub fn new(values: DVector<f64>) -> Self {
        SystemState { values }
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        SystemState {
            values: DVector::from_vec(values),
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }
}

/// Which system, with its physical parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    Lorenz96 { dim: usize, forcing: f64 },
    ShallowWater { mesh: usize, extent: f64, gravity: f64 },
}

/// A system plus the shared integrator step size.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub dt: f64,
}

impl ModelSpec {
    /// Cyclic Lorenz-96 with `dim` components. Requires `dim >= 4` so the
    /// three-point stencil never self-overlaps.
    pub fn lorenz96(dim: usize, forcing: f64, dt: f64) -> Result<Self> {
        if dim < 4 {
            return Err(Error::Precondition(format!(
                "Lorenz-96 needs at least 4 components, got {dim}"
            )));
        }
        check_dt(dt)?;
        Ok(ModelSpec {
            kind: ModelKind::Lorenz96 { dim, forcing },
            dt,
        })
    }

    /// Reference configuration: 50 components, forcing 8, dt 0.01.
    pub fn lorenz96_default() -> Self {
        ModelSpec::lorenz96(50, 8.0, 0.01).expect("defaults are valid")
    }

    /// Square shallow water basin, `mesh` points per side, grid spacing
    /// `extent / (mesh - 1)`.
    pub fn shallow_water(mesh: usize, extent: f64, gravity: f64, dt: f64) -> Result<Self> {
        if mesh < 3 {
            return Err(Error::Precondition(format!(
                "shallow water mesh needs at least 3 points per side, got {mesh}"
            )));
        }
        if !(extent > 0.0) || !(gravity > 0.0) {
            return Err(Error::Precondition(format!(
                "shallow water needs positive extent and gravity, got extent={extent}, g={gravity}"
            )));
        }
        check_dt(dt)?;
        Ok(ModelSpec {
            kind: ModelKind::ShallowWater {
                mesh,
                extent,
                gravity,
            },
            dt,
        })
    }

    /// Reference configuration: 23x23 grid on [0,22]^2 (spacing 1),
    /// g = 9.81, dt 0.01.
    pub fn shallow_water_default() -> Self {
        ModelSpec::shallow_water(23, 22.0, 9.81, 0.01).expect("defaults are valid")
    }

    /// State dimension: `dim` for Lorenz-96, `3 * mesh^2` for shallow water.
    pub fn dim(&self) -> usize {
        match self.kind {
            ModelKind::Lorenz96 { dim, .. } => dim,
            ModelKind::ShallowWater { mesh, .. } => 3 * mesh * mesh,
        }
    }

    pub fn is_shallow_water(&self) -> bool {
        matches!(self.kind, ModelKind::ShallowWater { .. })
    }

    /// Grid spacing; shallow water only.
    pub fn dz(&self) -> Result<f64> {
        match self.kind {
            ModelKind::ShallowWater { mesh, extent, .. } => Ok(extent / (mesh - 1) as f64),
            _ => Err(Error::Precondition(
                "grid spacing is only defined for the shallow water model".into(),
            )),
        }
    }

    /// Checks dimension, finiteness, and (shallow water) positive depth.
    /// Boundary velocities are not constrained here: perturbed states may
    /// carry nonzero boundary velocity and the integrator projects it away.
    pub fn validate_state(&self, state: &SystemState) -> Result<()> {
        if state.dim() != self.dim() {
            return Err(Error::Dimension {
                context: "state vector",
                expected: self.dim(),
                got: state.dim(),
            });
        }
        if !state.is_finite() {
            return Err(Error::Domain("state has non-finite entries".into()));
        }
        if let ModelKind::ShallowWater { mesh, .. } = self.kind {
            let cells = mesh * mesh;
            for k in 0..cells {
                if state.values[k] <= 0.0 {
                    return Err(Error::Domain(format!(
                        "water depth must be positive, h[{k}] = {}",
                        state.values[k]
                    )));
                }
            }
        }
        Ok(())
    }

    /// Canonical initial condition: for Lorenz-96 the equilibrium
    /// `(F, .., F)` nudged by 0.01 on the first component; for shallow water
    /// a resting Gaussian bump `h = 10 + 1.5 exp(-r^2 / 8)` centered in the
    /// basin.
    pub fn initial_state(&self) -> SystemState {
        match self.kind {
            ModelKind::Lorenz96 { dim, forcing } => {
                let mut y = vec![forcing; dim];
                y[0] += 0.01;
                SystemState::from_vec(y)
            }
            ModelKind::ShallowWater { mesh, extent, .. } => {
                let dz = extent / (mesh - 1) as f64;
                let c = extent / 2.0;
                let cells = mesh * mesh;
                let mut values = vec![0.0; 3 * cells];
                for i in 0..mesh {
                    for j in 0..mesh {
                        let dx = i as f64 * dz - c;
                        let dy = j as f64 * dz - c;
                        values[i * mesh + j] = 10.0 + 1.5 * (-(dx * dx + dy * dy) / 8.0).exp();
                    }
                }
                SystemState::from_vec(values)
            }
        }
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Precondition(format!(
            "step size must be positive and finite, got {dt}"
        )));
    }
    Ok(())
}

/// Number of steps covering time `t`: the nearest integer when `t` is within
/// 1e-9 of a multiple of `dt`, otherwise the ceiling.
pub fn steps_for(t: f64, dt: f64) -> Result<u64> {
    check_dt(dt)?;
    if !(t >= 0.0) {
        return Err(Error::Precondition(format!(
            "integration time must be nonnegative, got {t}"
        )));
    }
    let ratio = t / dt;
    let nearest = ratio.round();
    if (t - nearest * dt).abs() <= 1e-9 {
        Ok(nearest as u64)
    } else {
        Ok(ratio.ceil() as u64)
    }
}

/// Shared tally of integration steps. Clones observe the same count.
#[derive(Debug, Clone, Default)]
pub struct StepCounter(Arc<AtomicU64>);

impl StepCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.0.store(0, Ordering::Relaxed);
    }

    pub fn add(&self, n: u64) {
        self.0.fetch_add(n, Ordering::Relaxed);
    }
}

/// A time-`t` solution map. Implementations must be deterministic: equal
/// inputs produce bitwise equal outputs.
pub trait Flow: Sync {
    fn dim(&self) -> usize;

    fn dt(&self) -> f64;

    /// Advances `state` by time `t` (quantized to steps via [`steps_for`]).
    fn propagate(&self, state: &SystemState, t: f64) -> Result<SystemState>;
}

/// A concrete test system with step accounting.
pub struct Model {
    spec: ModelSpec,
    steps: StepCounter,
    cfl_violations: AtomicU64,
}

impl Model {
    pub fn new(spec: ModelSpec) -> Self {
        Model {
            spec,
            steps: StepCounter::new(),
            cfl_violations: AtomicU64::new(0),
        }
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Handle to the step tally; clone it to keep observing after moves.
    pub fn counter(&self) -> &StepCounter {
        &self.steps
    }

    /// Steps whose advective CFL number exceeded 1 (shallow water only).
    pub fn cfl_violations(&self) -> u64 {
        self.cfl_violations.load(Ordering::Relaxed)
    }

    fn step(&self, state: &SystemState) -> Result<SystemState> {
        match self.spec.kind {
            ModelKind::Lorenz96 { .. } => rk4_step(state, &self.spec),
            ModelKind::ShallowWater { .. } => {
                if cfl_number(state, &self.spec)? > 1.0 {
                    self.cfl_violations.fetch_add(1, Ordering::Relaxed);
                }
                lax_wendroff_step(state, &self.spec)
            }
        }
    }
}

impl Flow for Model {
    fn dim(&self) -> usize {
        self.spec.dim()
    }

    fn dt(&self) -> f64 {
        self.spec.dt
    }

    fn propagate(&self, state: &SystemState, t: f64) -> Result<SystemState> {
        self.spec.validate_state(state)?;
        let n = steps_for(t, self.spec.dt)?;
        let mut current = state.clone();
        for k in 0..n {
            current = self.step(&current).map_err(|e| match e {
                Error::Blowup { context, .. } => Error::Blowup { step: k, context },
                other => other,
            })?;
            self.steps.add(1);
        }
        Ok(current)
    }
}

/// Deterministic flow doubles for exercising the perturbation machinery
/// against closed-form answers.
#[cfg(test)]
pub(crate) mod doubles {
    use super::*;
    use nalgebra::DMatrix;

    /// `x -> A^k x` with one application per step.
    pub struct LinearFlow {
        pub a: DMatrix<f64>,
        pub dt: f64,
    }

    impl Flow for LinearFlow {
        fn dim(&self) -> usize {
            self.a.nrows()
        }

        fn dt(&self) -> f64 {
            self.dt
        }

        fn propagate(&self, state: &SystemState, t: f64) -> Result<SystemState> {
            let n = steps_for(t, self.dt)?;
            let mut v = state.values.clone();
            for _ in 0..n {
                v = &self.a * v;
            }
            Ok(SystemState::new(v))
        }
    }

    /// `x -> exp(lambda t) x`, stepped so growth is exactly exponential.
    pub struct ScalingFlow {
        pub lambda: f64,
        pub dim: usize,
        pub dt: f64,
    }

    impl Flow for ScalingFlow {
        fn dim(&self) -> usize {
            self.dim
        }

        fn dt(&self) -> f64 {
            self.dt
        }

        fn propagate(&self, state: &SystemState, t: f64) -> Result<SystemState> {
            let n = steps_for(t, self.dt)?;
            let factor = (self.lambda * self.dt).exp();
            let mut v = state.values.clone();
            for _ in 0..n {
                v *= factor;
            }
            Ok(SystemState::new(v))
        }
    }

    /// Plane rotation in R^2; an isometry, so all separations are constant.
    pub struct RotationFlow {
        pub omega: f64,
        pub dt: f64,
    }

    impl Flow for RotationFlow {
        fn dim(&self) -> usize {
            2
        }

        fn dt(&self) -> f64 {
            self.dt
        }

        fn propagate(&self, state: &SystemState, t: f64) -> Result<SystemState> {
            let n = steps_for(t, self.dt)?;
            let (s, c) = (self.omega * self.dt).sin_cos();
            let mut v = state.values.clone();
            for _ in 0..n {
                let (x, y) = (v[0], v[1]);
                v[0] = c * x - s * y;
                v[1] = s * x + c * y;
            }
            Ok(SystemState::new(v))
        }
    }
}
