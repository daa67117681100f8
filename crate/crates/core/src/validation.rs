//! Built-in physics checks run by `luvt validate` and the acceptance suite.
//!
//! Each check builds its own small experiment from a [`RunPlan`] (material,
//! grid spacing, pulse, transducer) and reports the measured quantity next
//! to its limit.

use std::fmt;
use std::time::{Duration, Instant};

use crate::config::RunPlan;
use crate::error::{Error, Result};
use crate::excitation::{
    first_arrival_time_interpolated, PulseWaveform, ReceiverQuantity, ReceiverSpec, SourceSpec,
};
use crate::fdtd::{AbsorbingLayerSpec, Solver, SolverParams, WavefieldState};
use crate::material::{insert_cavity, DefectSpec, MaterialField};

/// Result of one check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    /// Headline measurement compared against `limit`.
    pub value: f64,
    pub limit: f64,
    pub detail: String,
    pub elapsed: Duration,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {} [{:.1} s]",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

/// Arrival threshold as a fraction of each trace's peak.
pub const ARRIVAL_THRESHOLD: f64 = 0.1;
pub const WAVE_SPEED_TOLERANCE: f64 = 0.01;
pub const CFL_STEPS: usize = 5000;
pub const CFL_GROWTH_LIMIT: f64 = 2.0;
pub const ENERGY_QUIET_TIME: f64 = 2e-6;
pub const ENERGY_STEPS: usize = 2000;
pub const ENERGY_TOLERANCE: f64 = 1e-4;
pub const RECIPROCITY_TOLERANCE: f64 = 0.02;
pub const PRECURSOR_LIMIT: f64 = 1e-12;
pub const SCATTER_FLOOR: f64 = 1e-3;

fn vz_node(field: &MaterialField, x: f64, z: f64) -> (f64, f64) {
    let i = ((x / field.dx - 0.5).round().max(0.0) as usize).min(field.nx - 1);
    let j = ((z / field.dx).round().max(1.0) as usize).min(field.nz - 1);
    ((i as f64 + 0.5) * field.dx, j as f64 * field.dx)
}

fn steps_for(duration: f64, dt: f64) -> usize {
    (duration / dt).ceil() as usize
}

/// A 2 mm cavity half-way down under the transducer, used to make the
/// energy and reciprocity experiments heterogeneous.
fn probe_cavity(plan: &RunPlan) -> DefectSpec {
    let (_, depth) = plan.field.extent();
    DefectSpec::new(plan.transducer.center_x, 0.5 * depth, 2e-3)
}

/// Longitudinal time of flight between two on-axis probes at 40 % and 80 %
/// of the nominal depth, against the configured `c_L`.
pub fn check_wave_speed(plan: &RunPlan) -> Result<CheckOutcome> {
    let start = Instant::now();
    let field = &plan.field;
    let depth = field.geometry.depth;
    let c = field.max_longitudinal_speed();
    let x = plan.transducer.center_x;
    let (z1, z2) = (0.4 * depth, 0.8 * depth);
    let probes = [
        ReceiverSpec::new(x, z1, ReceiverQuantity::Vz),
        ReceiverSpec::new(x, z2, ReceiverQuantity::Vz),
    ];
    let params = SolverParams::from_courant(field, plan.params.courant_fraction, 0);
    let n_steps = steps_for(1.2 * (z2 / c + plan.source.pulse.duration()), params.dt);
    let params = SolverParams { n_steps, ..params };
    let traces =
        Solver::new(field, &params)?.run(Some(&plan.source), &probes, usize::MAX, |_, _| Ok(()))?;
    let t1 = first_arrival_time_interpolated(&traces[0], params.dt, ARRIVAL_THRESHOLD)?;
    let t2 = first_arrival_time_interpolated(&traces[1], params.dt, ARRIVAL_THRESHOLD)?;
    let expected = (z2 - z1) / c;
    let measured = t2 - t1;
    let error = (measured / expected - 1.0).abs();
    Ok(CheckOutcome {
        name: "wave_speed",
        passed: error < WAVE_SPEED_TOLERANCE,
        value: error,
        limit: WAVE_SPEED_TOLERANCE,
        detail: format!(
            "probes {:.1} mm apart, Δt = {:.4} µs vs {:.4} µs expected, error {:.3} % (limit {:.0} %)",
            (z2 - z1) * 1e3,
            measured * 1e6,
            expected * 1e6,
            100.0 * error,
            100.0 * WAVE_SPEED_TOLERANCE
        ),
        elapsed: start.elapsed(),
    })
}

/// Stepping statistics of one CFL run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundedRun {
    /// Largest `|v|` in the first 1000 steps after the source stops.
    pub early_max: f64,
    /// Largest `|v|` in the last 1000 steps.
    pub late_max: f64,
}

/// Runs `n_steps` with the transducer firing and tracks the velocity peak.
pub fn run_bounded(
    field: &MaterialField,
    source: &SourceSpec,
    courant_fraction: f64,
    n_steps: usize,
) -> Result<BoundedRun> {
    let params = SolverParams::from_courant(field, courant_fraction, n_steps);
    let solver = Solver::new(field, &params)?;
    let injection = source.injection(field, params.dt)?;
    let quiet = steps_for(source.pulse.duration(), params.dt);
    let window = 1000.min(n_steps / 4).max(1);
    let mut state = solver.new_state();
    let (mut early, mut late) = (0.0f64, 0.0f64);
    for k in 0..n_steps {
        let s = source.pulse.sample(state.time);
        injection.apply(&mut state, s);
        solver.step(&mut state)?;
        let v = state.max_abs_velocity();
        if k >= quiet && k < quiet + window {
            early = early.max(v);
        }
        if k + window >= n_steps {
            late = late.max(v);
        }
    }
    Ok(BoundedRun {
        early_max: early,
        late_max: late,
    })
}

/// 5000 steps at the configured Courant fraction stay bounded; twice the
/// stability bound is reported as an instability.
pub fn check_cfl(plan: &RunPlan) -> Result<CheckOutcome> {
    let start = Instant::now();
    let frac = plan.params.courant_fraction;
    let stable = run_bounded(&plan.field, &plan.source, frac, CFL_STEPS)?;
    let growth = stable.late_max / stable.early_max;
    let unstable = run_bounded(&plan.field, &plan.source, 2.0, CFL_STEPS);
    let (caught, how) = match &unstable {
        Err(e @ Error::NumericalInstability { .. }) => (true, e.to_string()),
        Err(e) => (false, format!("unexpected error: {e}")),
        Ok(r) => (
            false,
            format!("ran to completion, late max {:.3e} m/s", r.late_max),
        ),
    };
    let bounded = growth.is_finite() && growth <= CFL_GROWTH_LIMIT;
    Ok(CheckOutcome {
        name: "cfl",
        passed: bounded && caught,
        value: growth,
        limit: CFL_GROWTH_LIMIT,
        detail: format!(
            "fraction {frac}: {CFL_STEPS} steps, late/early peak {growth:.3} (limit {CFL_GROWTH_LIMIT}); fraction 2.0: {how}"
        ),
        elapsed: start.elapsed(),
    })
}

/// Relative energy drift over `ENERGY_STEPS` once the source is silent.
pub fn energy_drift(
    field: &MaterialField,
    source: &SourceSpec,
    courant_fraction: f64,
) -> Result<(f64, f64)> {
    let params = SolverParams::from_courant(field, courant_fraction, 0)
        .with_sponge(AbsorbingLayerSpec::disabled());
    let quiet = steps_for(ENERGY_QUIET_TIME.max(source.pulse.duration()), params.dt);
    let solver = Solver::new(field, &params)?;
    let injection = source.injection(field, params.dt)?;
    let mut state = solver.new_state();
    for _ in 0..quiet {
        let s = source.pulse.sample(state.time);
        injection.apply(&mut state, s);
        solver.step(&mut state)?;
    }
    let e0 = solver.total_energy(&state);
    let mut drift = 0.0f64;
    for _ in 0..ENERGY_STEPS {
        solver.step(&mut state)?;
        drift = drift.max((solver.total_energy(&state) - e0).abs() / e0);
    }
    Ok((drift, e0))
}

pub fn check_energy(plan: &RunPlan) -> Result<CheckOutcome> {
    let start = Instant::now();
    let field = insert_cavity(plan.field.clone(), &probe_cavity(plan))?;
    let (drift, e0) = energy_drift(&field, &plan.source, plan.params.courant_fraction)?;
    Ok(CheckOutcome {
        name: "energy",
        passed: drift < ENERGY_TOLERANCE,
        value: drift,
        limit: ENERGY_TOLERANCE,
        detail: format!(
            "E = {e0:.4e} J/m after the source, max relative drift {drift:.2e} over {ENERGY_STEPS} steps (limit {ENERGY_TOLERANCE:.0e})"
        ),
        elapsed: start.elapsed(),
    })
}

/// `‖a − b‖₂ / ‖a‖₂`.
pub fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = a.iter().map(|x| x * x).sum();
    (num / den).sqrt()
}

/// Vertical point force at `a` recorded as `vz` at `b`, and the swap.
pub fn reciprocal_traces(
    field: &MaterialField,
    pulse: PulseWaveform,
    a: (f64, f64),
    b: (f64, f64),
    params: &SolverParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let solver = Solver::new(field, params)?;
    let run = |from: (f64, f64), to: (f64, f64)| -> Result<Vec<f64>> {
        let source = SourceSpec::point_force(from.0, from.1, pulse);
        let probe = ReceiverSpec::new(to.0, to.1, ReceiverQuantity::Vz);
        Ok(solver
            .run(Some(&source), &[probe], usize::MAX, |_, _| Ok(()))?
            .remove(0))
    };
    Ok((run(a, b)?, run(b, a)?))
}

pub fn check_reciprocity(plan: &RunPlan) -> Result<CheckOutcome> {
    let start = Instant::now();
    let field = insert_cavity(plan.field.clone(), &probe_cavity(plan))?;
    let (_, depth) = field.extent();
    let xc = plan.transducer.center_x;
    let a = vz_node(&field, xc - 6e-3, 0.2 * depth);
    let b = vz_node(&field, xc + 4e-3, 0.7 * depth);
    let pulse = PulseWaveform::ricker(plan.source.pulse.center_frequency, 1e3);
    let distance = (a.0 - b.0).hypot(a.1 - b.1);
    let c_t = (field.mu(0, 0) / field.density(0, 0)).sqrt();
    let params = SolverParams::from_courant(&field, plan.params.courant_fraction, 0);
    let n_steps = steps_for(1.2 * (distance / c_t + pulse.duration()), params.dt);
    let params = SolverParams { n_steps, ..params };
    let (ab, ba) = reciprocal_traces(&field, pulse, a, b, &params)?;
    let err = relative_l2(&ab, &ba);
    Ok(CheckOutcome {
        name: "reciprocity",
        passed: err < RECIPROCITY_TOLERANCE,
        value: err,
        limit: RECIPROCITY_TOLERANCE,
        detail: format!(
            "source/receiver {:.1} mm apart across a cavity, relative L2 {err:.2e} over {n_steps} samples (limit {:.0} %)",
            distance * 1e3,
            100.0 * RECIPROCITY_TOLERANCE
        ),
        elapsed: start.elapsed(),
    })
}

/// Extremes of the defect-minus-baseline velocity difference, relative to
/// the baseline peak at the same step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterWindow {
    /// Straight-line arrival at the defect centre, s.
    pub arrival: f64,
    /// Largest relative difference for `t ≤ 0.9 · arrival`.
    pub before: f64,
    /// Smallest relative difference for `1.5 · arrival ≤ t ≤ 2 · arrival`.
    pub after: f64,
}

fn velocity_difference(a: &WavefieldState, b: &WavefieldState) -> f64 {
    a.vx.iter()
        .zip(&b.vx)
        .chain(a.vz.iter().zip(&b.vz))
        .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Steps a defect run and a defect-free run side by side up to twice the
/// arrival time at the defect.
pub fn scatter_window(plan: &RunPlan, defect: &DefectSpec) -> Result<ScatterWindow> {
    let base = &plan.field;
    let cavity = insert_cavity(base.clone(), defect)?;
    let (x0, z0) = (plan.transducer.center_x, 0.0);
    let arrival =
        (defect.center.0 - x0).hypot(defect.center.1 - z0) / base.max_longitudinal_speed();
    let params = SolverParams::from_courant(base, plan.params.courant_fraction, 0);
    let n_steps = steps_for(2.0 * arrival, params.dt);
    let params = SolverParams { n_steps, ..params };
    let sb = Solver::new(base, &params)?;
    let sd = Solver::new(&cavity, &params)?;
    let injection = plan.source.injection(base, params.dt)?;
    let (mut a, mut b) = (sb.new_state(), sd.new_state());
    let (mut before, mut after) = (0.0f64, f64::INFINITY);
    for _ in 0..=n_steps {
        let t = a.time;
        let peak = a.max_abs_velocity();
        let rel = if peak > 0.0 {
            velocity_difference(&a, &b) / peak
        } else {
            0.0
        };
        if t <= 0.9 * arrival {
            before = before.max(rel);
        }
        if t >= 1.5 * arrival && t <= 2.0 * arrival {
            after = after.min(rel);
        }
        let s = plan.source.pulse.sample(t);
        injection.apply(&mut a, s);
        injection.apply(&mut b, s);
        sb.step(&mut a)?;
        sd.step(&mut b)?;
    }
    Ok(ScatterWindow {
        arrival,
        before,
        after,
    })
}

/// Runs the four checks reported by `luvt validate`.
pub fn run_suite(plan: &RunPlan) -> Result<Vec<CheckOutcome>> {
    Ok(vec![
        check_wave_speed(plan)?,
        check_cfl(plan)?,
        check_energy(plan)?,
        check_reciprocity(plan)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;

    fn small_plan() -> RunPlan {
        let cfg: RunConfig = toml::from_str(
            "dx_mm = 0.25\n[geometry]\nwidth_mm = 30.0\ndepth_mm = 20.0\nview_width_mm = 10.0\nview_height_mm = 20.0\n[dataset]\nn_frames = 20",
        )
        .unwrap();
        cfg.plan().unwrap()
    }

    #[test]
    fn relative_l2_basics() {
        assert_eq!(relative_l2(&[1.0, 0.0], &[1.0, 0.0]), 0.0);
        assert!((relative_l2(&[3.0, 4.0], &[0.0, 0.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn reciprocity_on_a_small_grid() {
        let out = check_reciprocity(&small_plan()).unwrap();
        assert!(out.passed, "{out}");
    }

    #[test]
    fn energy_on_a_small_grid() {
        let out = check_energy(&small_plan()).unwrap();
        assert!(out.passed, "{out}");
    }

    #[test]
    fn outcome_line_format() {
        let o = CheckOutcome {
            name: "x",
            passed: false,
            value: 1.0,
            limit: 0.5,
            detail: "d".into(),
            elapsed: Duration::from_millis(1500),
        };
        assert_eq!(o.to_string(), "FAIL x: d [1.5 s]");
    }
}
