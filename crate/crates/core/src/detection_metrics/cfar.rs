use serde::{Deserialize, Serialize};

use super::{Peak, PeakList};
use crate::error::{domain, Result};
use crate::rd_pipeline::RdMap;

/// Cross-shaped 2D cell-averaging CFAR window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CfarParams {
    pub guard_range: usize,
    pub guard_doppler: usize,
    pub train_range: usize,
    pub train_doppler: usize,
    pub probability_false_alarm: f64,
}

impl Default for CfarParams {
    fn default() -> Self {
        Self { guard_range: 2, guard_doppler: 2, train_range: 8, train_doppler: 8, probability_false_alarm: 1e-3 }
    }
}

impl CfarParams {
    pub fn validate(&self) -> Result<()> {
        if self.guard_range == 0 || self.guard_doppler == 0 || self.train_range == 0 || self.train_doppler == 0 {
            return Err(domain("CFAR guard and training counts must be >= 1"));
        }
        let pfa = self.probability_false_alarm;
        if !(pfa > 0.0 && pfa < 1.0) {
            return Err(domain(format!("CFAR Pfa must lie in (0, 1), got {pfa}")));
        }
        Ok(())
    }

    /// Training cells on both sides of both axes.
    pub fn training_cell_count(&self) -> usize {
        2 * (self.train_range + self.train_doppler)
    }

    /// `alpha = N_t (Pfa^(-1/N_t) - 1)`, exact for exponentially distributed power.
    pub fn threshold_factor(&self) -> f64 {
        threshold_factor(self.training_cell_count(), self.probability_false_alarm)
    }
}

pub fn threshold_factor(training_cells: usize, pfa: f64) -> f64 {
    let n = training_cells as f64;
    n * (pfa.powf(-1.0 / n) - 1.0)
}

/// Declare a cell when its power exceeds `alpha` times the mean power of its
/// training cells. Windows wrap around both map edges.
pub fn ca_cfar(map: &RdMap, params: &CfarParams) -> Result<PeakList> {
    params.validate()?;
    let (rows, cols) = map.dim();
    let span_r = 2 * (params.guard_range + params.train_range) + 1;
    let span_d = 2 * (params.guard_doppler + params.train_doppler) + 1;
    if span_r > rows || span_d > cols {
        return Err(domain(format!("CFAR window {span_r}x{span_d} larger than map {rows}x{cols}")));
    }
    let power = map.linear_power();
    let alpha = params.threshold_factor();
    let n_train = params.training_cell_count() as f64;

    let offsets_r: Vec<usize> = (params.guard_range + 1..=params.guard_range + params.train_range).collect();
    let offsets_d: Vec<usize> = (params.guard_doppler + 1..=params.guard_doppler + params.train_doppler).collect();

    let mut peaks = Vec::new();
    for p in 0..rows {
        for q in 0..cols {
            let mut sum = 0.0;
            for &k in &offsets_r {
                sum += power[[(p + k) % rows, q]] + power[[(p + rows - k) % rows, q]];
            }
            for &k in &offsets_d {
                sum += power[[p, (q + k) % cols]] + power[[p, (q + cols - k) % cols]];
            }
            let cell = power[[p, q]];
            if cell > alpha * sum / n_train && cell > 0.0 {
                peaks.push(Peak { p, q, magnitude: cell.sqrt() });
            }
        }
    }
    Ok(PeakList { peaks, params: Some(*params) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rd_pipeline::Scale;
    use crate::signal_model::RadarConfig;
    use ndarray::Array2;

    #[test]
    fn alpha_closed_form() {
        assert!((threshold_factor(16, 1e-3) - 8.64).abs() < 0.01);
    }

    #[test]
    fn forced_exceedance() {
        let cfg = RadarConfig::default();
        let mut v = Array2::from_elem(cfg.map_shape(), 1.0);
        v[[30, 17]] = 1000.0;
        let map = RdMap::from_magnitude(v, Scale::Linear, cfg).unwrap();
        let peaks = ca_cfar(&map, &CfarParams::default()).unwrap();
        assert_eq!(peaks.cells().collect::<Vec<_>>(), vec![(30, 17)]);
        assert!((peaks.peaks[0].magnitude - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn window_too_large() {
        let cfg = RadarConfig { samples_per_chirp: 16, range_fft_points: 16, ..RadarConfig::default() };
        let map = RdMap::from_magnitude(Array2::ones(cfg.map_shape()), Scale::Linear, cfg).unwrap();
        assert!(ca_cfar(&map, &CfarParams::default()).is_err());
    }

    #[test]
    fn invalid_params() {
        let p = CfarParams { guard_range: 0, ..Default::default() };
        assert!(p.validate().is_err());
        let p = CfarParams { probability_false_alarm: 1.0, ..Default::default() };
        assert!(p.validate().is_err());
    }

    #[test]
    fn wraps_at_edges() {
        let cfg = RadarConfig::default();
        let mut v = Array2::from_elem(cfg.map_shape(), 1.0);
        v[[0, 0]] = 500.0;
        v[[63, 127]] = 500.0;
        let map = RdMap::from_magnitude(v, Scale::Linear, cfg).unwrap();
        let cells: Vec<_> = ca_cfar(&map, &CfarParams::default()).unwrap().cells().collect();
        assert_eq!(cells, vec![(0, 0), (63, 127)]);
    }
}
