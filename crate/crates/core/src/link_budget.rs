//! Free-space interference and radar-equation echo powers, and the amplitude
//! knob that sets a corrupted map to a requested SINR.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::detection_metrics::CellSet;
use crate::error::{domain, Error, Result};
use crate::rd_pipeline::{range_doppler_map_with, MapValues, RdMap};
use crate::signal_model::{BeatFrame, RadarConfig};

/// Complex amplitude of a `dbm` signal on a 1 ohm reference.
pub fn dbm_to_amplitude(dbm: f64) -> f64 {
    (2.0 * 10f64.powf((dbm - 30.0) / 10.0)).sqrt()
}

/// Inverse of [`dbm_to_amplitude`].
pub fn amplitude_to_dbm(amplitude: f64) -> f64 {
    10.0 * (amplitude * amplitude / 2.0).log10() + 30.0
}

/// One-way received interference power at distance `r` (dBm).
pub fn interference_power(cfg: &RadarConfig, r: f64) -> Result<f64> {
    if !(r.is_finite() && r > 0.0) {
        return Err(domain(format!("interferer distance must be positive, got {r}")));
    }
    let path = cfg.wavelength_m() / (4.0 * PI * r);
    Ok(cfg.transmit_power_dbm + cfg.combined_gain_db() + 20.0 * path.log10())
}

/// Two-way echo power of a target with RCS `rcs` at distance `d` (dBm).
pub fn echo_power(cfg: &RadarConfig, d: f64, rcs: f64) -> Result<f64> {
    if !(d.is_finite() && d > 0.0) {
        return Err(domain(format!("target distance must be positive, got {d}")));
    }
    if !(rcs.is_finite() && rcs > 0.0) {
        return Err(domain(format!("target RCS must be positive, got {rcs}")));
    }
    let lambda = cfg.wavelength_m();
    let ratio = rcs * lambda * lambda / ((4.0 * PI).powi(3) * d.powi(4));
    Ok(cfg.transmit_power_dbm + cfg.combined_gain_db() + 10.0 * ratio.log10())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerBudget {
    pub interference_power_dbm: f64,
    pub echo_power_dbm: f64,
    pub margin_db: f64,
}

impl PowerBudget {
    pub fn new(cfg: &RadarConfig, interferer_distance: f64, target_distance: f64, rcs: f64) -> Result<Self> {
        let interference_power_dbm = interference_power(cfg, interferer_distance)?;
        let echo_power_dbm = echo_power(cfg, target_distance, rcs)?;
        Ok(Self { interference_power_dbm, echo_power_dbm, margin_db: interference_power_dbm - echo_power_dbm })
    }
}

/// SINR of `clean + s * interference` as a function of `s`, evaluated on
/// the object and noise cells only.
pub struct SinrCurve {
    object: Vec<(Complex64, Complex64)>,
    noise: Vec<(Complex64, Complex64)>,
}

impl SinrCurve {
    pub fn new(clean: &RdMap, interference: &RdMap, objects: &CellSet, noise: &CellSet) -> Result<Self> {
        if clean.dim() != interference.dim() {
            return Err(Error::Shape { expected: clean.dim(), actual: interference.dim() });
        }
        if objects.is_empty() || noise.is_empty() {
            return Err(domain("SINR scaling needs non-empty object and noise cells"));
        }
        objects.check_bounds(clean.dim())?;
        noise.check_bounds(clean.dim())?;
        let (c, i) = match (clean.values(), interference.values()) {
            (MapValues::Complex(c), MapValues::Complex(i)) => (c, i),
            _ => return Err(domain("SINR scaling needs complex maps")),
        };
        let pick = |set: &CellSet| set.iter().map(|cell| (c[cell], i[cell])).collect();
        Ok(Self { object: pick(objects), noise: pick(noise) })
    }

    fn mean_power(cells: &[(Complex64, Complex64)], s: f64) -> f64 {
        cells.iter().map(|(c, i)| (c + i * s).norm_sqr()).sum::<f64>() / cells.len() as f64
    }

    pub fn sinr_db(&self, s: f64) -> f64 {
        10.0 * (Self::mean_power(&self.object, s) / Self::mean_power(&self.noise, s)).log10()
    }

    /// Scale that brings the curve to `target_db`.
    ///
    /// Starts from the closed-form power ratio that ignores clean x
    /// interference cross terms, brackets the crossing, and refines by
    /// bisection.
    pub fn solve(&self, target_db: f64) -> Result<f64> {
        let infeasible = |reason: &str| Error::InfeasibleSinr { target_db, reason: reason.into() };
        let clean_db = self.sinr_db(0.0);
        if !(target_db < clean_db) {
            return Err(infeasible(&format!("clean map SINR is only {clean_db:.2} dB")));
        }
        let mean = |cells: &[(Complex64, Complex64)], f: fn(&(Complex64, Complex64)) -> f64| {
            cells.iter().map(f).sum::<f64>() / cells.len() as f64
        };
        let o_c = mean(&self.object, |(c, _)| c.norm_sqr());
        let n_c = mean(&self.noise, |(c, _)| c.norm_sqr());
        let o_i = mean(&self.object, |(_, i)| i.norm_sqr());
        let n_i = mean(&self.noise, |(_, i)| i.norm_sqr());
        if n_i == 0.0 {
            return Err(infeasible("interference has no energy in the noise cells"));
        }
        let ratio = 10f64.powf(target_db / 10.0);
        let denom = ratio * n_i - o_i;
        let mut hi =
            if denom > 0.0 { ((o_c - ratio * n_c) / denom).sqrt().max(f64::MIN_POSITIVE) } else { (o_c / n_i).sqrt() };
        let mut lo = 0.0;
        let mut expansions = 0;
        while self.sinr_db(hi) > target_db {
            lo = hi;
            hi *= 2.0;
            expansions += 1;
            if expansions > 200 || !hi.is_finite() {
                return Err(infeasible("interference cannot pull the map down to this SINR"));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let v = self.sinr_db(mid);
            if (v - target_db).abs() <= 1e-3 {
                return Ok(mid);
            }
            if v > target_db {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let s = 0.5 * (lo + hi);
        if (self.sinr_db(s) - target_db).abs() <= 0.5 {
            Ok(s)
        } else {
            Err(infeasible("SINR curve has no crossing within 0.5 dB"))
        }
    }
}

/// Amplitude factor `s` such that the SINR of `RD(clean + s * interference)`
/// measured on `objects` / `noise` equals `target_sinr_db` (within 1e-3 dB
/// when the curve is continuous there).
pub fn scale_to_sinr(
    clean: &RdMap,
    interference: &BeatFrame,
    target_sinr_db: f64,
    objects: &CellSet,
    noise: &CellSet,
) -> Result<f64> {
    let interference_map = range_doppler_map_with(interference, clean.window());
    SinrCurve::new(clean, &interference_map, objects, noise)?.solve(target_sinr_db)
}
