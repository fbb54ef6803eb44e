//! FMCW chirp-sequence signal model.
//!
//! The victim radar transmits `M` linear chirps per frame. After mixing with
//! the conjugated received signal and sampling, every chirp contributes one
//! column of `N` fast-time samples to a [`BeatFrame`]. Target echoes,
//! aggressor interference and receiver noise superimpose linearly at this
//! point.
//!
//! ```text
//! f(t) = f_c + (B_SW / T_c) t,   0 <= t < T_c
//! ```
//!
//! Power bookkeeping assumes a 1 ohm reference: a signal of `P` dBm has
//! complex amplitude `sqrt(2 * 10^((P - 30) / 10))`, and that same convention
//! sets the receiver noise variance.

mod scenario;
mod synth;

pub use scenario::{scenario_preset, scenario_target, SCENARIO_COUNT};
pub use synth::{frequency_difference_hz, synthesize_clean_beat, synthesize_interference, unit_noise_frame};

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Thermal noise density at room temperature (dBm/Hz).
pub const THERMAL_NOISE_DENSITY_DBM_HZ: f64 = -174.0;

/// Victim radar waveform, sampling, FFT and RF-gain parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadarConfig {
    pub carrier_freq_hz: f64,
    pub sweep_bandwidth_hz: f64,
    pub sweep_duration_s: f64,
    /// Chirp repetition interval; must cover the sweep.
    pub chirp_repetition_s: f64,
    pub sampling_freq_hz: f64,
    pub samples_per_chirp: usize,
    pub chirps_per_frame: usize,
    pub range_fft_points: usize,
    pub doppler_fft_points: usize,
    pub transmit_power_dbm: f64,
    pub tx_gain_db: f64,
    pub rx_gain_db: f64,
    pub noise_figure_db: f64,
    pub initial_phase_rad: f64,
}

impl Default for RadarConfig {
    /// TI AWR1843 settings used for the synthetic data set (77 GHz,
    /// 153.6 MHz over 21.12 us, 12.5 MS/s, 64 x 128) with the generic RF
    /// budget of the interference study. The repetition interval of
    /// 42.24 us reproduces the 23 m/s unambiguous velocity.
    fn default() -> Self {
        Self {
            carrier_freq_hz: 77.0e9,
            sweep_bandwidth_hz: 153.6e6,
            sweep_duration_s: 21.12e-6,
            chirp_repetition_s: 42.24e-6,
            sampling_freq_hz: 12.5e6,
            samples_per_chirp: 64,
            chirps_per_frame: 128,
            range_fft_points: 64,
            doppler_fft_points: 128,
            transmit_power_dbm: 5.0,
            tx_gain_db: 36.0,
            rx_gain_db: 42.0,
            noise_figure_db: 4.5,
            initial_phase_rad: 0.0,
        }
    }
}

impl RadarConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier_freq_hz", self.carrier_freq_hz),
            ("sweep_bandwidth_hz", self.sweep_bandwidth_hz),
            ("sweep_duration_s", self.sweep_duration_s),
            ("chirp_repetition_s", self.chirp_repetition_s),
            ("sampling_freq_hz", self.sampling_freq_hz),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        let counts = [
            ("samples_per_chirp", self.samples_per_chirp),
            ("chirps_per_frame", self.chirps_per_frame),
            ("range_fft_points", self.range_fft_points),
            ("doppler_fft_points", self.doppler_fft_points),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be nonzero")));
            }
        }
        let finite = [
            ("transmit_power_dbm", self.transmit_power_dbm),
            ("tx_gain_db", self.tx_gain_db),
            ("rx_gain_db", self.rx_gain_db),
            ("noise_figure_db", self.noise_figure_db),
            ("initial_phase_rad", self.initial_phase_rad),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite")));
            }
        }
        if self.adc_window_s() > self.sweep_duration_s * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "ADC window {:.3e} s exceeds sweep duration {:.3e} s",
                self.adc_window_s(),
                self.sweep_duration_s
            )));
        }
        if self.sweep_duration_s > self.chirp_repetition_s {
            return Err(Error::Config("chirp_repetition_s must be >= sweep_duration_s".into()));
        }
        if self.range_fft_points < self.samples_per_chirp {
            return Err(Error::Config("range_fft_points must be >= samples_per_chirp".into()));
        }
        if self.doppler_fft_points < self.chirps_per_frame {
            return Err(Error::Config("doppler_fft_points must be >= chirps_per_frame".into()));
        }
        Ok(())
    }

    /// Chirp rate `B_SW / T_c` in Hz/s.
    pub fn chirp_rate(&self) -> f64 {
        self.sweep_bandwidth_hz / self.sweep_duration_s
    }

    pub fn sample_period_s(&self) -> f64 {
        1.0 / self.sampling_freq_hz
    }

    pub fn adc_window_s(&self) -> f64 {
        self.samples_per_chirp as f64 / self.sampling_freq_hz
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq_hz
    }

    /// Combined transmit and receive antenna gain `G_trx` in dB.
    pub fn combined_gain_db(&self) -> f64 {
        self.tx_gain_db + self.rx_gain_db
    }

    pub fn frame_shape(&self) -> (usize, usize) {
        (self.samples_per_chirp, self.chirps_per_frame)
    }

    pub fn map_shape(&self) -> (usize, usize) {
        (self.range_fft_points, self.doppler_fft_points)
    }

    /// Width of one range bin in beat frequency.
    pub fn range_bin_hz(&self) -> f64 {
        self.sampling_freq_hz / self.range_fft_points as f64
    }

    /// Width of one Doppler bin.
    pub fn doppler_bin_hz(&self) -> f64 {
        1.0 / (self.doppler_fft_points as f64 * self.chirp_repetition_s)
    }

    pub fn range_bin_m(&self) -> f64 {
        self.range_bin_hz() * SPEED_OF_LIGHT / (2.0 * self.chirp_rate())
    }

    pub fn velocity_bin_mps(&self) -> f64 {
        self.doppler_bin_hz() * self.wavelength_m() / 2.0
    }

    /// Largest range whose beat frequency stays below the complex sampling rate.
    pub fn max_unambiguous_range_m(&self) -> f64 {
        self.sampling_freq_hz * SPEED_OF_LIGHT / (2.0 * self.chirp_rate())
    }

    /// `lambda / (4 T_r)`.
    pub fn max_unambiguous_velocity_mps(&self) -> f64 {
        self.wavelength_m() / (4.0 * self.chirp_repetition_s)
    }
}

/// Instantaneous victim frequency at fast time `t` (Hz).
pub fn chirp_frequency(cfg: &RadarConfig, t: f64) -> Result<f64> {
    if !(t >= 0.0 && t < cfg.sweep_duration_s) {
        return Err(domain(format!("fast time {t:e} s outside [0, {:e})", cfg.sweep_duration_s)));
    }
    Ok(cfg.carrier_freq_hz + cfg.chirp_rate() * t)
}

/// Receiver noise power over the sampling bandwidth (dBm).
pub fn thermal_noise_power(cfg: &RadarConfig) -> f64 {
    THERMAL_NOISE_DENSITY_DBM_HZ + 10.0 * cfg.sampling_freq_hz.log10() + cfg.noise_figure_db
}

/// A reflecting point target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Target {
    pub range_m: f64,
    /// Positive when the target recedes.
    pub radial_velocity_mps: f64,
    pub rcs_m2: f64,
}

impl Target {
    pub fn new(range_m: f64, radial_velocity_mps: f64, rcs_m2: f64) -> Self {
        Self { range_m, radial_velocity_mps, rcs_m2 }
    }

    pub fn validate(&self, cfg: &RadarConfig) -> Result<()> {
        if !(self.range_m.is_finite() && self.range_m > 0.0) {
            return Err(domain(format!("target range must be positive, got {}", self.range_m)));
        }
        if !(self.rcs_m2.is_finite() && self.rcs_m2 > 0.0) {
            return Err(domain(format!("target RCS must be positive, got {}", self.rcs_m2)));
        }
        let vmax = cfg.max_unambiguous_velocity_mps();
        if !(self.radial_velocity_mps.abs() < vmax) {
            return Err(domain(format!(
                "target velocity {} m/s outside unambiguous limit {vmax:.3} m/s",
                self.radial_velocity_mps
            )));
        }
        Ok(())
    }
}

/// Aggressor radar ramp parameters and geometry.
///
/// The aggressor repeats its chirps with the victim's duty cycle, i.e.
/// every `sweep_duration_s * T_r / T_c` seconds, and is silent between
/// ramps. `time_offset_s` is the clock offset of its first ramp relative to
/// the victim frame start; the propagation delay `distance / c` adds to it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterfererConfig {
    pub carrier_freq_hz: f64,
    pub sweep_bandwidth_hz: f64,
    pub sweep_duration_s: f64,
    pub distance_m: f64,
    pub radial_velocity_mps: f64,
    pub time_offset_s: f64,
    /// Linear amplitude relative to the free-space (Friis) level.
    pub amplitude_scale: f64,
    /// When set, the final amplitude is chosen to hit this SINR and
    /// `amplitude_scale` is ignored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_sinr_db: Option<f64>,
}

impl InterfererConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier_freq_hz", self.carrier_freq_hz),
            ("sweep_bandwidth_hz", self.sweep_bandwidth_hz),
            ("sweep_duration_s", self.sweep_duration_s),
            ("distance_m", self.distance_m),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(domain(format!("interferer {name} must be positive, got {v}")));
            }
        }
        if !(self.amplitude_scale.is_finite() && self.amplitude_scale >= 0.0) {
            return Err(domain("interferer amplitude_scale must be finite and >= 0"));
        }
        if !self.radial_velocity_mps.is_finite() || !self.time_offset_s.is_finite() {
            return Err(domain("interferer velocity and time offset must be finite"));
        }
        if let Some(s) = self.target_sinr_db {
            if !s.is_finite() {
                return Err(domain("interferer target_sinr_db must be finite"));
            }
        }
        Ok(())
    }

    pub fn chirp_rate(&self) -> f64 {
        self.sweep_bandwidth_hz / self.sweep_duration_s
    }

    /// Ramp repetition interval given the victim's duty cycle.
    pub fn repetition_s(&self, victim: &RadarConfig) -> f64 {
        self.sweep_duration_s * victim.chirp_repetition_s / victim.sweep_duration_s
    }
}

/// Which components a [`BeatFrame`] carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Clean,
    InterferenceOnly,
    Corrupted,
    /// Loaded from an external ADC recording.
    Recorded,
    /// Output of a time-domain mitigation.
    Mitigated,
}

/// `N x M` complex baseband samples: fast time along rows, chirps along columns.
#[derive(Debug, Clone, PartialEq)]
pub struct BeatFrame {
    samples: Array2<Complex64>,
    config: RadarConfig,
    provenance: Provenance,
}

impl BeatFrame {
    pub fn new(samples: Array2<Complex64>, config: RadarConfig, provenance: Provenance) -> Result<Self> {
        let expected = config.frame_shape();
        if samples.dim() != expected {
            return Err(Error::Shape { expected, actual: samples.dim() });
        }
        if samples.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(domain("beat frame contains non-finite samples"));
        }
        Ok(Self { samples, config, provenance })
    }

    pub fn zeros(config: RadarConfig, provenance: Provenance) -> Self {
        Self { samples: Array2::zeros(config.frame_shape()), config, provenance }
    }

    pub fn samples(&self) -> &Array2<Complex64> {
        &self.samples
    }

    pub fn into_samples(self) -> Array2<Complex64> {
        self.samples
    }

    pub fn config(&self) -> &RadarConfig {
        &self.config
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn dim(&self) -> (usize, usize) {
        self.samples.dim()
    }

    /// Mean of `|s|^2` over all cells.
    pub fn mean_power(&self) -> f64 {
        self.samples.iter().map(|v| v.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { samples: self.samples.mapv(|v| v * factor), config: self.config, provenance: self.provenance }
    }

    pub(crate) fn from_parts_unchecked(
        samples: Array2<Complex64>,
        config: RadarConfig,
        provenance: Provenance,
    ) -> Self {
        Self { samples, config, provenance }
    }
}

/// Element-wise sum of a clean frame and any number of interference frames.
pub fn superimpose(clean: &BeatFrame, interferences: &[BeatFrame]) -> Result<BeatFrame> {
    let mut samples = clean.samples.clone();
    for frame in interferences {
        if frame.dim() != clean.dim() {
            return Err(Error::Shape { expected: clean.dim(), actual: frame.dim() });
        }
        if frame.config != clean.config {
            return Err(Error::Config("superimposed frames use different radar configs".into()));
        }
        Zip::from(&mut samples).and(&frame.samples).for_each(|a, &b| *a += b);
    }
    Ok(BeatFrame { samples, config: clean.config, provenance: Provenance::Corrupted })
}
