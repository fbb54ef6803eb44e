//! Shared fixtures for the criterion benches.

use rdlab::dataset::{SceneSimulator, SceneSpec};
use rdlab::mitigation::{detect_interfered_samples, InterferenceMask, DEFAULT_K_SIGMA};
use rdlab::signal_model::{
    scenario_preset, scenario_target, superimpose, synthesize_clean_beat, synthesize_interference,
};
use rdlab::BeatFrame;

/// Scenario-3 frame (ridge interference over one target) and its mask.
pub fn corrupted_frame() -> (BeatFrame, InterferenceMask) {
    let (cfg, aggressor) = scenario_preset(3).expect("preset");
    let clean = synthesize_clean_beat(&cfg, &[scenario_target()], 1, true).expect("clean frame");
    let interference = synthesize_interference(&cfg, &aggressor).expect("interference");
    let frame = superimpose(&clean, &[interference]).expect("superimpose");
    let mask = detect_interfered_samples(&frame, DEFAULT_K_SIGMA).expect("mask");
    (frame, mask)
}

/// Default desk scene.
pub fn scene() -> SceneSimulator {
    SceneSimulator::new(SceneSpec::default()).expect("default scene")
}
