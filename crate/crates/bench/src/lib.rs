//! Inputs shared by the criterion benchmarks.

use refvos_core::harness::{generate, CorruptionSpec, Scenario};
use refvos_core::MaskTrajectory;

/// Ground truth and jittered coarse trajectory for one seeded scenario.
pub fn scenario_pair(seed: u64, size: u32, frames: usize) -> (MaskTrajectory, MaskTrajectory) {
    let corruption = CorruptionSpec {
        boundary_jitter: 2.0,
        ..CorruptionSpec::none()
    };
    let scenario = Scenario::random(seed, frames, (size, size), true, corruption)
        .expect("benchmark scenario is valid");
    let generated = generate(&scenario).expect("benchmark scenario is valid");
    (generated.gt, generated.coarse)
}
