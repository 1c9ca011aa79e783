use dyngame::mpc::{mis_specification_run, MpcConfig};
use dyngame::scenarios::presets;
use dyngame::solver::SolverOptions;

#[test]
fn slow_pedestrian_is_never_hit() {
    let spec = presets::intersection(2, true);
    let cfg = MpcConfig {
        noise_scale: [0.0; 4],
        ..Default::default()
    };
    let trace = mis_specification_run(&spec, &cfg, &SolverOptions::default()).unwrap();
    let worst = trace.max_collision_value(spec.radius);
    assert!(trace.failures.is_empty());
    assert!(trace.diverged_at.is_none());
    assert!(worst <= 1e-3, "max collision value {worst}");
}
