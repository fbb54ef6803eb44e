//! Classical time-domain mitigation: localize interfered samples, then null
//! them (Zeroing) or fill them in by sparse spectral reconstruction (IMAT).
//!
//! Both methods work chirp by chirp, i.e. on fast-time columns of the beat
//! frame, and never touch samples outside the mask.

use ndarray::{Array2, Axis, Zip};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::signal_model::{BeatFrame, Provenance};

/// Consistency constant turning a MAD into a Gaussian sigma.
const MAD_SCALE: f64 = 1.4826;

pub const DEFAULT_K_SIGMA: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceMask {
    pub flags: Array2<bool>,
    pub k_sigma: f64,
    /// Magnitude above which samples were flagged.
    pub threshold: f64,
}

impl InterferenceMask {
    pub fn empty(shape: (usize, usize)) -> Self {
        Self { flags: Array2::from_elem(shape, false), k_sigma: 0.0, threshold: f64::INFINITY }
    }

    pub fn full(shape: (usize, usize)) -> Self {
        Self { flags: Array2::from_elem(shape, true), k_sigma: 0.0, threshold: 0.0 }
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|f| **f).count()
    }

    pub fn fraction(&self) -> f64 {
        self.count() as f64 / self.flags.len() as f64
    }

    fn check(&self, frame: &BeatFrame) -> Result<()> {
        if self.flags.dim() != frame.dim() {
            return Err(Error::Shape { expected: frame.dim(), actual: self.flags.dim() });
        }
        Ok(())
    }
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mid = values.len() / 2;
    let (_, m, _) = values.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    let upper = *m;
    if values.len() % 2 == 1 {
        upper
    } else {
        let lower = values[..mid].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Flag samples whose magnitude exceeds `median + k_sigma * 1.4826 * MAD`
/// over the whole frame.
///
/// The robust spread is floored at `1e-6 * median` so that a constant
/// envelope (e.g. a single noise-free tone) does not flag rounding jitter.
pub fn detect_interfered_samples(frame: &BeatFrame, k_sigma: f64) -> Result<InterferenceMask> {
    if !(k_sigma > 0.0 && k_sigma.is_finite()) {
        return Err(domain(format!("k_sigma must be positive, got {k_sigma}")));
    }
    let mags: Vec<f64> = frame.samples().iter().map(|v| v.norm()).collect();
    let mut scratch = mags.clone();
    let med = median(&mut scratch);
    let mut dev: Vec<f64> = mags.iter().map(|m| (m - med).abs()).collect();
    let spread = (MAD_SCALE * median(&mut dev)).max(1e-6 * med);
    let threshold = med + k_sigma * spread;
    let flags = frame.samples().mapv(|v| v.norm() > threshold);
    Ok(InterferenceMask { flags, k_sigma, threshold })
}

/// Null every flagged sample.
pub fn zeroing(frame: &BeatFrame, mask: &InterferenceMask) -> Result<BeatFrame> {
    mask.check(frame)?;
    let mut samples = frame.samples().clone();
    Zip::from(&mut samples).and(&mask.flags).for_each(|s, &flag| {
        if flag {
            *s = Complex64::new(0.0, 0.0);
        }
    });
    BeatFrame::new(samples, *frame.config(), Provenance::Mitigated)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImatParams {
    pub iterations: usize,
    /// Per-iteration threshold decay, in (0, 1).
    pub decay: f64,
}

impl Default for ImatParams {
    fn default() -> Self {
        Self { iterations: 10, decay: 0.7 }
    }
}

impl ImatParams {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(domain("IMAT needs at least one iteration"));
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(domain(format!("IMAT decay must lie in (0, 1), got {}", self.decay)));
        }
        Ok(())
    }
}

/// Iterative method with adaptive thresholding.
///
/// For every chirp with flagged samples: start from the zeroed chirp; at
/// iteration `k` keep the DFT coefficients whose magnitude reaches
/// `max |X| * decay^k`, transform back, and overwrite only the flagged
/// samples with the reconstruction.
pub fn imat(frame: &BeatFrame, mask: &InterferenceMask, params: ImatParams) -> Result<BeatFrame> {
    params.validate()?;
    mask.check(frame)?;
    let n = frame.dim().0;
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);

    let chirps: Vec<(Vec<Complex64>, Vec<bool>)> = frame
        .samples()
        .axis_iter(Axis(1))
        .zip(mask.flags.axis_iter(Axis(1)))
        .map(|(chirp, flags)| (chirp.to_vec(), flags.to_vec()))
        .collect();
    let columns: Vec<Vec<Complex64>> = chirps
        .into_par_iter()
        .map(|(original, flagged)| {
            if !flagged.iter().any(|f| *f) {
                return original;
            }
            let mut x: Vec<Complex64> =
                original.iter().zip(&flagged).map(|(v, f)| if *f { Complex64::new(0.0, 0.0) } else { *v }).collect();
            let mut spec = vec![Complex64::new(0.0, 0.0); n];
            for k in 0..params.iterations {
                spec.copy_from_slice(&x);
                fwd.process(&mut spec);
                let peak = spec.iter().map(|c| c.norm()).fold(0.0, f64::max);
                if peak == 0.0 {
                    break;
                }
                let threshold = peak * params.decay.powi(k as i32);
                for c in spec.iter_mut() {
                    if c.norm() < threshold {
                        *c = Complex64::new(0.0, 0.0);
                    }
                }
                inv.process(&mut spec);
                let scale = 1.0 / n as f64;
                for ((xi, si), f) in x.iter_mut().zip(&spec).zip(&flagged) {
                    if *f {
                        *xi = si * scale;
                    }
                }
            }
            x
        })
        .collect();

    let mut samples = frame.samples().clone();
    for (m, col) in columns.into_iter().enumerate() {
        samples.column_mut(m).iter_mut().zip(col).for_each(|(d, s)| *d = s);
    }
    BeatFrame::new(samples, *frame.config(), Provenance::Mitigated)
}
