//! Range-Doppler transform, dB conversion and dataset normalization.

use std::cell::RefCell;
use std::f64::consts::PI;

use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::signal_model::{BeatFrame, RadarConfig, Target, SPEED_OF_LIGHT};

/// Added to magnitudes before taking the logarithm; maps zero to -240 dB.
pub const DB_FLOOR_EPS: f64 = 1e-12;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    #[default]
    Rectangular,
    Hann,
}

impl Window {
    fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; len],
            Window::Hann => (0..len)
                .map(|i| {
                    let x = PI * (i as f64 + 0.5) / len as f64;
                    x.sin().powi(2)
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MapValues {
    Complex(Array2<Complex64>),
    Magnitude(Array2<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Linear,
    Db,
}

/// Global statistics of dB maps used for normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl NormStats {
    pub fn from_values<'a>(values: impl IntoIterator<Item = &'a f64>) -> Option<Self> {
        let mut acc = StatsAccumulator::default();
        for &v in values {
            acc.push(v);
        }
        acc.finish()
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.std > 0.0) || !(self.max > self.min)
    }

    fn z_range(&self) -> (f64, f64) {
        ((self.min - self.mean) / self.std, (self.max - self.mean) / self.std)
    }
}

/// Streaming mean/variance/min/max; partial accumulators merge exactly
/// (Chan et al.) so a fixed merge order gives reproducible results.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StatsAccumulator {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
    pub min: f64,
    pub max: f64,
}

impl StatsAccumulator {
    pub fn push(&mut self, x: f64) {
        if self.count == 0 {
            self.min = x;
            self.max = x;
        } else {
            self.min = self.min.min(x);
            self.max = self.max.max(x);
        }
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &StatsAccumulator) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.count as f64 / n;
        self.m2 += other.m2 + delta * delta * self.count as f64 * other.count as f64 / n;
        self.mean = mean;
        self.count += other.count;
        self.min = self.min.min(other.min);
        self.max = self.max.max(other.max);
    }

    /// Population statistics; `None` when empty.
    pub fn finish(&self) -> Option<NormStats> {
        (self.count > 0).then(|| NormStats {
            mean: self.mean,
            std: (self.m2 / self.count as f64).max(0.0).sqrt(),
            min: self.min,
            max: self.max,
        })
    }
}

/// How a map was normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationRecord {
    pub method: String,
    pub stats: NormStats,
    /// Zero spread; every cell was set to 0.5.
    pub degenerate: bool,
}

pub const NORMALIZATION_METHOD: &str = "standardize_then_minmax";

/// `P x Q` range-Doppler map with zero Doppler at column `Q / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct RdMap {
    values: MapValues,
    scale: Scale,
    config: RadarConfig,
    window: Window,
    normalization: Option<NormalizationRecord>,
}

impl RdMap {
    pub fn from_complex(values: Array2<Complex64>, config: RadarConfig) -> Result<Self> {
        check_shape(values.dim(), &config)?;
        Ok(Self {
            values: MapValues::Complex(values),
            scale: Scale::Linear,
            config,
            window: Window::Rectangular,
            normalization: None,
        })
    }

    pub fn from_magnitude(values: Array2<f64>, scale: Scale, config: RadarConfig) -> Result<Self> {
        check_shape(values.dim(), &config)?;
        if scale == Scale::Linear && values.iter().any(|v| *v < 0.0) {
            return Err(domain("linear magnitudes must be non-negative"));
        }
        Ok(Self {
            values: MapValues::Magnitude(values),
            scale,
            config,
            window: Window::Rectangular,
            normalization: None,
        })
    }

    /// Wrap normalized dB values produced elsewhere (e.g. read from disk).
    pub fn from_normalized(values: Array2<f64>, stats: NormStats, config: RadarConfig) -> Result<Self> {
        check_shape(values.dim(), &config)?;
        Ok(Self {
            values: MapValues::Magnitude(values),
            scale: Scale::Db,
            config,
            window: Window::Rectangular,
            normalization: Some(NormalizationRecord {
                method: NORMALIZATION_METHOD.into(),
                stats,
                degenerate: stats.is_degenerate(),
            }),
        })
    }

    pub fn values(&self) -> &MapValues {
        &self.values
    }

    pub fn complex_values(&self) -> Option<&Array2<Complex64>> {
        match &self.values {
            MapValues::Complex(v) => Some(v),
            MapValues::Magnitude(_) => None,
        }
    }

    pub fn magnitude_values(&self) -> Option<&Array2<f64>> {
        match &self.values {
            MapValues::Magnitude(v) => Some(v),
            MapValues::Complex(_) => None,
        }
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    pub fn config(&self) -> &RadarConfig {
        &self.config
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn normalization(&self) -> Option<&NormalizationRecord> {
        self.normalization.as_ref()
    }

    pub fn dim(&self) -> (usize, usize) {
        match &self.values {
            MapValues::Complex(v) => v.dim(),
            MapValues::Magnitude(v) => v.dim(),
        }
    }

    /// `|S|^2` in linear units regardless of representation.
    pub fn linear_power(&self) -> Array2<f64> {
        match (&self.values, self.scale) {
            (MapValues::Complex(v), _) => v.mapv(|c| c.norm_sqr()),
            (MapValues::Magnitude(v), Scale::Linear) => v.mapv(|m| m * m),
            (MapValues::Magnitude(_), Scale::Db) => self.db_values().mapv(|d| 10f64.powf(d / 10.0)),
        }
    }

    /// Linear magnitude map (phase dropped, normalization undone).
    pub fn linear_magnitude(&self) -> RdMap {
        let mags = match (&self.values, self.scale) {
            (MapValues::Complex(v), _) => v.mapv(|c| c.norm()),
            (MapValues::Magnitude(v), Scale::Linear) => v.clone(),
            (MapValues::Magnitude(_), Scale::Db) => self.db_values().mapv(|d| 10f64.powf(d / 20.0)),
        };
        RdMap {
            values: MapValues::Magnitude(mags),
            scale: Scale::Linear,
            config: self.config,
            window: self.window,
            normalization: None,
        }
    }

    /// Denormalized dB values for a dB map.
    fn db_values(&self) -> Array2<f64> {
        let v = match &self.values {
            MapValues::Magnitude(v) => v,
            MapValues::Complex(_) => unreachable!("complex maps are linear"),
        };
        match &self.normalization {
            Some(rec) => v.mapv(|y| denormalize_value(y, &rec.stats)),
            None => v.clone(),
        }
    }

    pub(crate) fn with_values(&self, values: MapValues) -> RdMap {
        RdMap {
            values,
            scale: self.scale,
            config: self.config,
            window: self.window,
            normalization: self.normalization.clone(),
        }
    }
}

fn check_shape(actual: (usize, usize), config: &RadarConfig) -> Result<()> {
    let expected = config.map_shape();
    if actual != expected {
        return Err(Error::Shape { expected, actual });
    }
    Ok(())
}

/// Complex RD map with a rectangular window.
pub fn range_doppler_map(frame: &BeatFrame) -> RdMap {
    range_doppler_map_with(frame, Window::Rectangular)
}

/// `P`-point DFT down every chirp, then `Q`-point DFT across chirps, with
/// zero padding and no scaling. The Doppler axis is rotated so that zero
/// Doppler lands at `Q / 2`.
pub fn range_doppler_map_with(frame: &BeatFrame, window: Window) -> RdMap {
    let cfg = *frame.config();
    let (n_fast, n_slow) = frame.dim();
    let (p_len, q_len) = cfg.map_shape();
    let fast_win = window.coefficients(n_fast);
    let slow_win = window.coefficients(n_slow);

    let mut range_profiles = Array2::<Complex64>::zeros((p_len, n_slow));
    let mut out = Array2::<Complex64>::zeros((p_len, q_len));
    PLANNER.with(|planner| {
        let mut planner = planner.borrow_mut();
        let range_fft = planner.plan_fft_forward(p_len);
        let doppler_fft = planner.plan_fft_forward(q_len);

        let mut buf = vec![Complex64::new(0.0, 0.0); p_len];
        for (m, chirp) in frame.samples().axis_iter(Axis(1)).enumerate() {
            buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
            for (n, s) in chirp.iter().enumerate() {
                buf[n] = s * fast_win[n] * slow_win[m];
            }
            range_fft.process(&mut buf);
            range_profiles.column_mut(m).iter_mut().zip(&buf).for_each(|(d, s)| *d = *s);
        }

        let mut buf = vec![Complex64::new(0.0, 0.0); q_len];
        let half = q_len / 2;
        for (p, row) in range_profiles.axis_iter(Axis(0)).enumerate() {
            buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
            buf[..n_slow].iter_mut().zip(row.iter()).for_each(|(d, s)| *d = *s);
            doppler_fft.process(&mut buf);
            for (q, v) in buf.iter().enumerate() {
                out[[p, (q + half) % q_len]] = *v;
            }
        }
    });

    RdMap { values: MapValues::Complex(out), scale: Scale::Linear, config: cfg, window, normalization: None }
}

/// `20 log10(|v| + eps)`.
pub fn to_db(map: &RdMap) -> Result<RdMap> {
    if map.scale == Scale::Db {
        return Err(domain("map is already in dB"));
    }
    let db = match &map.values {
        MapValues::Complex(v) => v.mapv(|c| 20.0 * (c.norm() + DB_FLOOR_EPS).log10()),
        MapValues::Magnitude(v) => v.mapv(|m| 20.0 * (m.abs() + DB_FLOOR_EPS).log10()),
    };
    Ok(RdMap {
        values: MapValues::Magnitude(db),
        scale: Scale::Db,
        config: map.config,
        window: map.window,
        normalization: None,
    })
}

fn normalize_value(x: f64, stats: &NormStats) -> f64 {
    if stats.is_degenerate() {
        return 0.5;
    }
    let (z_min, z_max) = stats.z_range();
    let z = (x - stats.mean) / stats.std;
    (z - z_min) / (z_max - z_min)
}

fn denormalize_value(y: f64, stats: &NormStats) -> f64 {
    if stats.is_degenerate() {
        return stats.mean;
    }
    let (z_min, z_max) = stats.z_range();
    (y * (z_max - z_min) + z_min) * stats.std + stats.mean
}

/// Standardize with `stats` (or the map's own statistics) and then min-max
/// scale into `[0, 1]`.
///
/// Values outside the stats range (e.g. held-out maps normalized with
/// training statistics) land slightly outside `[0, 1]`; they are not
/// clamped, so [`denormalize`] stays an exact inverse.
pub fn normalize(map: &RdMap, stats: Option<&NormStats>) -> Result<RdMap> {
    let values = match (&map.values, map.scale) {
        (MapValues::Magnitude(v), Scale::Db) => v,
        _ => return Err(domain("normalize expects a dB magnitude map")),
    };
    if let Some(existing) = &map.normalization {
        return match stats {
            Some(s) if *s != existing.stats => Err(domain("map is already normalized with different statistics")),
            _ => Ok(map.clone()),
        };
    }
    let stats = match stats {
        Some(s) => *s,
        None => NormStats::from_values(values.iter()).ok_or_else(|| domain("empty map"))?,
    };
    let out = values.mapv(|x| normalize_value(x, &stats));
    Ok(RdMap {
        values: MapValues::Magnitude(out),
        scale: Scale::Db,
        config: map.config,
        window: map.window,
        normalization: Some(NormalizationRecord {
            method: NORMALIZATION_METHOD.into(),
            stats,
            degenerate: stats.is_degenerate(),
        }),
    })
}

/// Inverse of [`normalize`]; returns the dB map.
pub fn denormalize(map: &RdMap) -> Result<RdMap> {
    let rec = map.normalization.as_ref().ok_or_else(|| domain("map is not normalized"))?;
    let values = map.magnitude_values().expect("normalized maps are real");
    Ok(RdMap {
        values: MapValues::Magnitude(values.mapv(|y| denormalize_value(y, &rec.stats))),
        scale: Scale::Db,
        config: map.config,
        window: map.window,
        normalization: None,
    })
}

/// Closed-form RD cell of a point target.
///
/// `p = round(f_b / (f_s / P))` with `f_b = 2 B D / (c T_c)` and
/// `q = Q/2 + round(f_D Q T_r)` with `f_D = 2 f_c v / c`, both wrapped onto
/// the map.
pub fn expected_peak_bin(cfg: &RadarConfig, target: &Target) -> Result<(usize, usize)> {
    if !(target.range_m >= 0.0 && target.range_m < cfg.max_unambiguous_range_m()) {
        return Err(domain(format!("range {} m outside [0, {:.2}) m", target.range_m, cfg.max_unambiguous_range_m())));
    }
    let vmax = cfg.max_unambiguous_velocity_mps();
    if !(target.radial_velocity_mps.abs() < vmax) {
        return Err(domain(format!(
            "velocity {} m/s outside unambiguous limit {vmax:.3} m/s",
            target.radial_velocity_mps
        )));
    }
    let (p_len, q_len) = cfg.map_shape();
    let beat_hz = 2.0 * cfg.sweep_bandwidth_hz * target.range_m / (SPEED_OF_LIGHT * cfg.sweep_duration_s);
    let doppler_hz = 2.0 * cfg.carrier_freq_hz * target.radial_velocity_mps / SPEED_OF_LIGHT;
    let p = (beat_hz / cfg.range_bin_hz()).round() as i64;
    let q = (q_len / 2) as i64 + (doppler_hz * q_len as f64 * cfg.chirp_repetition_s).round() as i64;
    Ok((p.rem_euclid(p_len as i64) as usize, q.rem_euclid(q_len as i64) as usize))
}

/// Cell of maximum power.
pub fn argmax(map: &RdMap) -> (usize, usize) {
    let power = map.linear_power();
    let mut best = ((0, 0), f64::NEG_INFINITY);
    for (idx, &v) in power.indexed_iter() {
        if v > best.1 {
            best = (idx, v);
        }
    }
    best.0
}
