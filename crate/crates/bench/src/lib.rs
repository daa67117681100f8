//! Shared fixtures for the criterion benchmarks.

use luvt_core::{RunConfig, RunPlan, Solver, WavefieldState};

/// Plan for the built-in default configuration (667 × 333 cells).
pub fn default_plan() -> RunPlan {
    RunConfig::default().plan().expect("defaults are valid")
}

/// Plan for a 30 × 20 mm specimen at 0.25 mm spacing.
pub fn small_plan() -> RunPlan {
    let mut config = RunConfig {
        dx_mm: 0.25,
        ..RunConfig::default()
    };
    config.geometry.width_mm = 30.0;
    config.geometry.depth_mm = 20.0;
    config.geometry.view_width_mm = 10.0;
    config.geometry.view_height_mm = 20.0;
    config.plan().expect("small plan is valid")
}

/// State after `steps` source-driven steps, so benchmarks run on a
/// populated wavefield rather than zeros.
pub fn warmed_state(plan: &RunPlan, steps: usize) -> (Solver, WavefieldState) {
    let solver = Solver::new(&plan.field, &plan.params).expect("valid plan");
    let injection = plan
        .source
        .injection(&plan.field, plan.params.dt)
        .expect("valid source");
    let mut state = solver.new_state();
    for _ in 0..steps {
        let value = plan.source.pulse.sample(state.time);
        injection.apply(&mut state, value);
        solver.step(&mut state).expect("stable");
    }
    (solver, state)
}
