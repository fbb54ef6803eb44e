use std::f64::consts::TAU;

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{BeatFrame, InterfererConfig, Provenance, RadarConfig, Target, SPEED_OF_LIGHT};
use crate::error::Result;
use crate::link_budget::{dbm_to_amplitude, echo_power, interference_power};
use crate::rng;

fn cis_cycles(cycles: f64) -> Complex64 {
    Complex64::from_polar(1.0, TAU * cycles.fract())
}

/// Noise-free or noisy victim beat frame for a set of point targets.
///
/// Each target contributes
/// `A * exp(j2pi alpha (2D/c) n T_s) * exp(j2pi f_c (2v/c) m T_r) * exp(j2pi f_c 2D/c)`
/// with `A` the amplitude of the radar-equation echo power. Range migration
/// inside a chirp is neglected. Noise, when enabled, is circular complex
/// Gaussian with the variance implied by [`super::thermal_noise_power`], drawn
/// from the substream of `noise_seed`.
pub fn synthesize_clean_beat(
    cfg: &RadarConfig,
    targets: &[Target],
    noise_seed: u64,
    include_noise: bool,
) -> Result<BeatFrame> {
    cfg.validate()?;
    let (n_fast, n_slow) = cfg.frame_shape();
    let ts = cfg.sample_period_s();
    let tr = cfg.chirp_repetition_s;
    let mut samples = Array2::<Complex64>::zeros((n_fast, n_slow));

    for target in targets {
        target.validate(cfg)?;
        let amplitude = dbm_to_amplitude(echo_power(cfg, target.range_m, target.rcs_m2)?);
        let delay = 2.0 * target.range_m / SPEED_OF_LIGHT;
        let beat_hz = cfg.chirp_rate() * delay;
        let doppler_hz = cfg.carrier_freq_hz * 2.0 * target.radial_velocity_mps / SPEED_OF_LIGHT;
        let constant = amplitude * cis_cycles(cfg.carrier_freq_hz * delay);

        let fast: Vec<Complex64> = (0..n_fast).map(|n| cis_cycles(beat_hz * n as f64 * ts)).collect();
        let slow: Vec<Complex64> = (0..n_slow).map(|m| cis_cycles(doppler_hz * m as f64 * tr)).collect();
        for ((n, m), s) in samples.indexed_iter_mut() {
            *s += constant * fast[n] * slow[m];
        }
    }

    if include_noise {
        let sigma = dbm_to_amplitude(super::thermal_noise_power(cfg)) / std::f64::consts::SQRT_2;
        add_noise(&mut samples, sigma, noise_seed);
    }
    Ok(BeatFrame::from_parts_unchecked(samples, *cfg, Provenance::Clean))
}

fn add_noise(samples: &mut Array2<Complex64>, sigma_per_component: f64, seed: u64) {
    let mut rng = rng::substream(seed, &[rng::tag::NOISE]);
    for s in samples.iter_mut() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *s += Complex64::new(re, im) * sigma_per_component;
    }
}

/// Circular complex Gaussian frame with unit variance per cell.
pub fn unit_noise_frame(cfg: &RadarConfig, seed: u64) -> BeatFrame {
    let mut samples = Array2::zeros(cfg.frame_shape());
    add_noise(&mut samples, std::f64::consts::FRAC_1_SQRT_2, seed);
    BeatFrame::from_parts_unchecked(samples, *cfg, Provenance::Clean)
}

struct MixerState {
    diff_hz: f64,
    phase_cycles: f64,
}

/// Victim and aggressor instantaneous state at absolute time `t` since the
/// start of the victim frame. `None` when either radar is between ramps.
fn mixer_state(victim: &RadarConfig, aggressor: &InterfererConfig, t: f64) -> Option<MixerState> {
    let tr = victim.chirp_repetition_s;
    let u = t - (t / tr).floor() * tr;
    if u >= victim.sweep_duration_s {
        return None;
    }

    let delay = aggressor.time_offset_s + (aggressor.distance_m + aggressor.radial_velocity_mps * t) / SPEED_OF_LIGHT;
    let t_agg = t - delay;
    let tr_agg = aggressor.repetition_s(victim);
    let u_agg = t_agg - (t_agg / tr_agg).floor() * tr_agg;
    if u_agg >= aggressor.sweep_duration_s {
        return None;
    }

    let alpha = victim.chirp_rate();
    let alpha_agg = aggressor.chirp_rate();
    let f_victim = victim.carrier_freq_hz + alpha * u;
    let f_agg = aggressor.carrier_freq_hz + alpha_agg * u_agg;

    // Phase in cycles; the aggressor side carries the conjugate.
    let victim_cycles = victim.carrier_freq_hz * u + 0.5 * alpha * u * u;
    let agg_cycles = aggressor.carrier_freq_hz * u_agg + 0.5 * alpha_agg * u_agg * u_agg;
    let phase_cycles = (victim_cycles - agg_cycles).fract() + victim.initial_phase_rad / TAU;

    Some(MixerState { diff_hz: f_victim - f_agg, phase_cycles })
}

/// Instantaneous frequency difference between the victim ramp and the
/// delayed aggressor ramp at absolute time `t`, or `None` when either is
/// idle.
pub fn frequency_difference_hz(victim: &RadarConfig, aggressor: &InterfererConfig, t: f64) -> Option<f64> {
    mixer_state(victim, aggressor, t).map(|s| s.diff_hz)
}

/// Aggressor contribution at the victim ADC output.
///
/// The victim ramp is mixed with the conjugate of the delayed aggressor
/// ramp; the anti-alias filter is an ideal mask that keeps a sample only
/// when the instantaneous difference frequency lies within `f_s / 2`. ADC
/// sampling starts at the beginning of every victim ramp.
///
/// The amplitude is `amplitude_scale` times the free-space interference
/// level at `distance_m`. When `target_sinr_db` is set the frame is
/// rendered at the free-space level and the caller rescales it (see
/// [`crate::link_budget::scale_to_sinr`]).
pub fn synthesize_interference(victim: &RadarConfig, aggressor: &InterfererConfig) -> Result<BeatFrame> {
    victim.validate()?;
    aggressor.validate()?;
    let scale = if aggressor.target_sinr_db.is_some() { 1.0 } else { aggressor.amplitude_scale };
    let (n_fast, n_slow) = victim.frame_shape();
    let mut samples = Array2::<Complex64>::zeros((n_fast, n_slow));
    if scale == 0.0 {
        return Ok(BeatFrame::from_parts_unchecked(samples, *victim, Provenance::InterferenceOnly));
    }

    let amplitude = scale * dbm_to_amplitude(interference_power(victim, aggressor.distance_m)?);
    let half_band = 0.5 * victim.sampling_freq_hz;
    let ts = victim.sample_period_s();
    for ((n, m), s) in samples.indexed_iter_mut() {
        let t = m as f64 * victim.chirp_repetition_s + n as f64 * ts;
        if let Some(state) = mixer_state(victim, aggressor, t) {
            if state.diff_hz.abs() <= half_band {
                *s = amplitude * cis_cycles(state.phase_cycles);
            }
        }
    }
    Ok(BeatFrame::from_parts_unchecked(samples, *victim, Provenance::InterferenceOnly))
}
