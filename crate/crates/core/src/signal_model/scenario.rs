//! The seven aggressor/victim ramp relations of the qualitative
//! interference study.

use super::{InterfererConfig, RadarConfig, Target, SPEED_OF_LIGHT};
use crate::error::{domain, Result};

pub const SCENARIO_COUNT: usize = 7;

/// (bandwidth ratio, sweep-duration ratio, carrier offset in Hz), aggressor over victim.
const RAMP_RATIOS: [(f64, f64, f64); SCENARIO_COUNT] = [
    (1.0, 1.0, 0.0),
    (1.0, 1.1, 0.0),
    (1.0, 2.0, 0.0),
    (2.0, 1.0, 0.0),
    (1.0, 1.0, -20.0e6),
    (2.0, 1.1, 0.0),
    (2.0, 2.0, 0.0),
];

const AGGRESSOR_DISTANCE_M: f64 = 15.0;
const AGGRESSOR_VELOCITY_MPS: f64 = -5.0;
/// Range bin at which a commensurate aggressor shows up as a ghost.
const GHOST_RANGE_BIN: f64 = 20.0;

/// Victim and aggressor for scenario `id` in `1..=7`.
///
/// The victim is the default configuration. The aggressor clock offset is
/// chosen so that a ramp-identical aggressor lands as a ghost at range bin
/// 20; it approaches at 5 m/s from 15 m at free-space amplitude.
pub fn scenario_preset(id: usize) -> Result<(RadarConfig, InterfererConfig)> {
    if !(1..=SCENARIO_COUNT).contains(&id) {
        return Err(domain(format!("scenario id {id} outside 1..={SCENARIO_COUNT}")));
    }
    let victim = RadarConfig::default();
    let (bw_ratio, tc_ratio, offset_hz) = RAMP_RATIOS[id - 1];
    let ghost_delay = GHOST_RANGE_BIN * victim.range_bin_hz() / victim.chirp_rate();
    let aggressor = InterfererConfig {
        carrier_freq_hz: victim.carrier_freq_hz + offset_hz,
        sweep_bandwidth_hz: victim.sweep_bandwidth_hz * bw_ratio,
        sweep_duration_s: victim.sweep_duration_s * tc_ratio,
        distance_m: AGGRESSOR_DISTANCE_M,
        radial_velocity_mps: AGGRESSOR_VELOCITY_MPS,
        time_offset_s: ghost_delay - AGGRESSOR_DISTANCE_M / SPEED_OF_LIGHT,
        amplitude_scale: 1.0,
        target_sinr_db: None,
    };
    Ok((victim, aggressor))
}

/// The single reflector placed in every scenario scene.
pub fn scenario_target() -> Target {
    Target::new(30.0, 10.0, 10.0)
}
