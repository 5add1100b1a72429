//! Growth rate curves, their aggregation over sampled states, and cost
//! accounting for the experiments.

use std::collections::VecDeque;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bap::PerturbationContext;
use crate::dynamics::{steps_for, Flow, Model, SystemState};
use crate::error::{Error, Result};

/// Exponential growth rates on a strictly increasing positive time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthCurve {
    pub times: Vec<f64>,
    pub rates: Vec<f64>,
}

impl GrowthCurve {
    pub fn new(times: Vec<f64>, rates: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times.len() != rates.len() {
            return Err(Error::Dimension {
                context: "growth curve grids",
                expected: times.len(),
                got: rates.len(),
            });
        }
        if !(times[0] > 0.0) {
            return Err(Error::Precondition(format!(
                "growth curve must start after t = 0, got {}",
                times[0]
            )));
        }
        for w in times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::Precondition(format!(
                    "growth curve times must increase strictly, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        if times.iter().chain(rates.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Domain("growth curve has non-finite entries".into()));
        }
        Ok(GrowthCurve { times, rates })
    }

    /// Trapezoid integral over `[0, t_end]`. The `t = 0` node reuses the
    /// first rate (left-constant extension); `t_end` may fall between grid
    /// points (linear interpolation) but not beyond the last one.
    pub fn integral_to(&self, t_end: f64) -> Result<f64> {
        if !(t_end > 0.0) || !t_end.is_finite() {
            return Err(Error::Precondition(format!(
                "integration endpoint must be positive, got {t_end}"
            )));
        }
        let last = *self.times.last().expect("curve is nonempty");
        if t_end > last + 1e-9 {
            return Err(Error::Precondition(format!(
                "curve ends at {last}, cannot integrate to {t_end}"
            )));
        }
        let mut prev_t = 0.0;
        let mut prev_r = self.rates[0];
        let mut acc = 0.0;
        for (&t, &r) in self.times.iter().zip(self.rates.iter()) {
            if t <= t_end + 1e-12 {
                acc += (t - prev_t) * (prev_r + r) * 0.5;
                prev_t = t;
                prev_r = r;
            } else {
                if t_end > prev_t {
                    let frac = (t_end - prev_t) / (t - prev_t);
                    let r_end = prev_r + frac * (r - prev_r);
                    acc += (t_end - prev_t) * (prev_r + r_end) * 0.5;
                }
                return Ok(acc);
            }
        }
        Ok(acc)
    }

    /// Pointwise mean of curves on identical grids, summed in slice order so
    /// the result does not depend on scheduling.
    pub fn mean(curves: &[GrowthCurve]) -> Result<GrowthCurve> {
        let first = curves.first().ok_or_else(|| {
            Error::Precondition("cannot average an empty set of growth curves".into())
        })?;
        let len = first.times.len();
        let mut rates = vec![0.0; len];
        for curve in curves {
            if curve.times.len() != len {
                return Err(Error::Dimension {
                    context: "growth curve mean",
                    expected: len,
                    got: curve.times.len(),
                });
            }
            for (a, b) in curve.times.iter().zip(first.times.iter()) {
                if (a - b).abs() > 1e-12 {
                    return Err(Error::Precondition(
                        "growth curves live on different time grids".into(),
                    ));
                }
            }
            for (acc, r) in rates.iter_mut().zip(curve.rates.iter()) {
                *acc += r;
            }
        }
        let inv = 1.0 / curves.len() as f64;
        for r in rates.iter_mut() {
            *r *= inv;
        }
        GrowthCurve::new(first.times.clone(), rates)
    }
}

/// Base trajectory in working coordinates, one point per step including the
/// start. Computing it once lets several growth curves share the cost.
pub struct WorkingTrajectory {
    pub points: Vec<DVector<f64>>,
    pub dt: f64,
}

/// Integrates the context's base state over `horizon` and records every step
/// in working coordinates.
pub fn working_base_trajectory(
    ctx: &PerturbationContext,
    horizon: f64,
) -> Result<WorkingTrajectory> {
    let dt = ctx.flow().dt();
    let steps = steps_for(horizon, dt)?;
    if steps == 0 {
        return Err(Error::Precondition(format!(
            "growth horizon {horizon} is shorter than one step {dt}"
        )));
    }
    let mut points = Vec::with_capacity(steps as usize + 1);
    points.push(ctx.base_working().clone());
    let mut state = ctx.base_state().clone();
    for _ in 0..steps {
        state = ctx.flow().propagate(&state, dt)?;
        points.push(ctx.map().to_working(&state)?);
    }
    Ok(WorkingTrajectory { points, dt })
}

/// Exponential growth rate curve of direction `v`:
/// `rate(k dt) = ln(d_k / d_{k-1}) / dt` with `d_k` the working-space
/// separation after `k` steps between the base trajectory and the one
/// started from the amplitude-scaled perturbation.
pub fn egr_curve(
    ctx: &PerturbationContext,
    v: &DVector<f64>,
    base: &WorkingTrajectory,
) -> Result<GrowthCurve> {
    if v.len() != ctx.dim() {
        return Err(Error::Dimension {
            context: "growth direction",
            expected: ctx.dim(),
            got: v.len(),
        });
    }
    if !(v.norm() > 0.0) {
        return Err(Error::Precondition(
            "growth direction must be nonzero".into(),
        ));
    }
    let dt = base.dt;
    let steps = base.points.len() - 1;
    let start_working = ctx.base_working() + v * ctx.amplitude();
    let mut state = ctx.map().from_working(&start_working)?;
    let mut d_prev = (&start_working - &base.points[0]).norm();
    let mut times = Vec::with_capacity(steps);
    let mut rates = Vec::with_capacity(steps);
    for k in 1..=steps {
        state = ctx.flow().propagate(&state, dt)?;
        let d = (ctx.map().to_working(&state)? - &base.points[k]).norm();
        if d_prev <= 0.0 || d <= 0.0 {
            return Err(Error::Domain(format!(
                "perturbed and base trajectories coincide at step {k}"
            )));
        }
        times.push(k as f64 * dt);
        rates.push((d / d_prev).ln() / dt);
        d_prev = d;
    }
    GrowthCurve::new(times, rates)
}

/// Mean growth curve over sampled states with per-state failures excluded.
#[derive(Debug)]
pub struct MegrOutcome {
    pub curve: GrowthCurve,
    /// Samples that contributed to the mean.
    pub used: usize,
    /// `(sample index, error description)` of excluded samples.
    pub failures: Vec<(usize, String)>,
}

/// Runs `per_sample` for every index in parallel and averages the resulting
/// curves. Individual failures are tolerated and reported up to 10% of the
/// count; beyond that the whole aggregation fails.
pub fn megr<F>(count: usize, per_sample: F) -> Result<MegrOutcome>
where
    F: Fn(usize) -> Result<GrowthCurve> + Sync,
{
    if count == 0 {
        return Err(Error::Precondition(
            "mean growth rate needs at least one sample".into(),
        ));
    }
    let results: Vec<Result<GrowthCurve>> = (0..count).into_par_iter().map(&per_sample).collect();
    let mut curves = Vec::with_capacity(count);
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(c) => curves.push(c),
            Err(e) => failures.push((i, e.to_string())),
        }
    }
    if failures.len() * 10 > count {
        return Err(Error::Precondition(format!(
            "{} of {} sampled states failed, exceeding the 10% tolerance; first failure: {}",
            failures.len(),
            count,
            failures[0].1
        )));
    }
    Ok(MegrOutcome {
        curve: GrowthCurve::mean(&curves)?,
        used: curves.len(),
        failures,
    })
}

/// Relative growth integral: the perturbation's integrated mean growth over
/// `[0, t_end]` divided by the baseline's. The baseline integral must be
/// positive.
pub fn regi(perturbation: &GrowthCurve, baseline: &GrowthCurve, t_end: f64) -> Result<f64> {
    let num = perturbation.integral_to(t_end)?;
    let den = baseline.integral_to(t_end)?;
    if !(den > 0.0) {
        return Err(Error::Precondition(format!(
            "baseline growth integral must be positive, got {den}"
        )));
    }
    Ok(num / den)
}

/// Trajectory integrations consumed by one block Arnoldi run:
/// `loops * block_size * ceil(t / dt)` (the base run is accounted
/// separately).
pub fn ig_count(block_size: usize, loops: usize, t: f64, dt: f64) -> Result<u64> {
    if block_size == 0 || loops == 0 {
        return Err(Error::Precondition(format!(
            "cost formula needs positive block size and loops, got l={block_size}, m={loops}"
        )));
    }
    Ok((block_size * loops) as u64 * steps_for(t, dt)?)
}

/// Cost of the subspace run relative to the full increment matrix:
/// `l * m / n`.
pub fn cost_ratio(block_size: usize, loops: usize, n: usize) -> Result<f64> {
    if block_size == 0 || loops == 0 || n == 0 {
        return Err(Error::Precondition(format!(
            "cost ratio needs positive arguments, got l={block_size}, m={loops}, n={n}"
        )));
    }
    Ok((block_size * loops) as f64 / n as f64)
}

/// One state drawn from the sampling window, with enough trailing history
/// for chord construction.
#[derive(Debug, Clone)]
pub struct Sample {
    /// Steps from the initial condition to this state.
    pub step: u64,
    pub time: f64,
    pub state: SystemState,
    /// Oldest to newest; the last entry equals `state`.
    pub history: Vec<SystemState>,
}

#[derive(Debug)]
pub struct SampleSet {
    pub samples: Vec<Sample>,
    pub seed: u64,
}

/// Draws `count` states at seeded uniform step offsets within
/// `[spinup, spinup + window]`, marching the trajectory once. Requires a
/// spin-up of at least 1500 steps so sampling starts on the attractor, and
/// keeps `history_depth + 1` trailing states per sample.
pub fn sample_states(
    model: &Model,
    spinup_steps: u64,
    window_steps: u64,
    count: usize,
    history_depth: usize,
    seed: u64,
) -> Result<SampleSet> {
    if count == 0 {
        return Err(Error::Precondition("sample count must be positive".into()));
    }
    if spinup_steps < 1500 {
        return Err(Error::Precondition(format!(
            "spin-up must cover at least 1500 steps, got {spinup_steps}"
        )));
    }
    if history_depth as u64 > spinup_steps {
        return Err(Error::InsufficientHistory {
            required: history_depth,
            available: spinup_steps as usize,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut offsets: Vec<u64> = (0..count)
        .map(|_| rng.gen_range(0..=window_steps))
        .collect();
    offsets.sort_unstable();

    let dt = model.spec().dt;
    let mut state = model.spec().initial_state();
    let mut buffer: VecDeque<SystemState> = VecDeque::with_capacity(history_depth + 2);
    buffer.push_back(state.clone());
    let push = |buffer: &mut VecDeque<SystemState>, s: SystemState| {
        buffer.push_back(s);
        while buffer.len() > history_depth + 1 {
            buffer.pop_front();
        }
    };
    for _ in 0..spinup_steps {
        state = model.propagate(&state, dt)?;
        push(&mut buffer, state.clone());
    }

    let mut samples = Vec::with_capacity(count);
    let mut pending = offsets.iter().peekable();
    let last = *offsets.last().expect("count >= 1");
    for step in 0..=last {
        if step > 0 {
            state = model.propagate(&state, dt)?;
            push(&mut buffer, state.clone());
        }
        while pending.peek() == Some(&&step) {
            pending.next();
            let absolute = spinup_steps + step;
            samples.push(Sample {
                step: absolute,
                time: absolute as f64 * dt,
                state: state.clone(),
                history: buffer.iter().cloned().collect(),
            });
        }
    }
    Ok(SampleSet { samples, seed })
}
