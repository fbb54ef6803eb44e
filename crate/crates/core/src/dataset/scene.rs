//! Simulated driving scenes: persistent targets, per-frame interferer
//! draws, clutter suppression and the object/noise cells every SINR
//! measurement uses.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::detection_metrics::{object_noise_cells_excluding, CellKind, CellSet, CfarParams, PeakList};
use crate::error::{domain, Error, Result};
use crate::link_budget::SinrCurve;
use crate::rd_pipeline::{expected_peak_bin, range_doppler_map, MapValues, RdMap};
use crate::rng::{self, tag};
use crate::signal_model::{
    superimpose, synthesize_clean_beat, synthesize_interference, BeatFrame, InterfererConfig, Provenance, RadarConfig,
    Target,
};

/// Interference levels applied to every frame, in dB.
pub const SINR_LEVELS_DB: [f64; 7] = [-5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0];

/// Largest accepted gap between a requested level and the SINR measured on
/// the rendered corrupted map.
pub const SINR_TOLERANCE_DB: f64 = 0.5;

const CARRIER_GRID_HZ: [f64; 5] = [76.8e9, 76.9e9, 77.0e9, 77.1e9, 77.2e9];
const BANDWIDTH_RANGE_HZ: (f64, f64) = (120.0e6, 400.0e6);
const SWEEP_RANGE_S: (f64, f64) = (4.0e-6, 30.0e-6);
const DISTANCE_RANGE_M: (f64, f64) = (2.0, 63.0);
const VELOCITY_RANGE_MPS: (f64, f64) = (-23.05, 0.0);

/// One Monte-Carlo aggressor draw.
///
/// Carrier on a 0.1 GHz grid in 76.8..=77.2 GHz, bandwidth, sweep time,
/// distance and closing velocity uniform over their intervals, clock offset
/// uniform over one aggressor ramp period, and an SINR level from
/// [`SINR_LEVELS_DB`].
pub fn sample_interferer<R: Rng + ?Sized>(rng: &mut R, victim: &RadarConfig) -> InterfererConfig {
    let carrier_freq_hz = CARRIER_GRID_HZ[rng.random_range(0..CARRIER_GRID_HZ.len())];
    let sweep_bandwidth_hz = rng.random_range(BANDWIDTH_RANGE_HZ.0..=BANDWIDTH_RANGE_HZ.1);
    let sweep_duration_s = rng.random_range(SWEEP_RANGE_S.0..=SWEEP_RANGE_S.1);
    let distance_m = rng.random_range(DISTANCE_RANGE_M.0..=DISTANCE_RANGE_M.1);
    let radial_velocity_mps = rng.random_range(VELOCITY_RANGE_MPS.0..=VELOCITY_RANGE_MPS.1);
    let period = sweep_duration_s * victim.chirp_repetition_s / victim.sweep_duration_s;
    let time_offset_s = rng.random_range(0.0..period);
    let level = SINR_LEVELS_DB[rng.random_range(0..SINR_LEVELS_DB.len())];
    InterfererConfig {
        carrier_freq_hz,
        sweep_bandwidth_hz,
        sweep_duration_s,
        distance_m,
        radial_velocity_mps,
        time_offset_s,
        amplitude_scale: 1.0,
        target_sinr_db: Some(level),
    }
}

/// Cross-shaped region around zero range and zero Doppler where engine and
/// hood returns live: range bins `0..range_bins` over all Doppler bins, and
/// Doppler bins `Q/2 - doppler_half_width ..= Q/2 + doppler_half_width` over
/// all range bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClutterMask {
    pub range_bins: usize,
    pub doppler_half_width: usize,
}

impl Default for ClutterMask {
    fn default() -> Self {
        Self { range_bins: 2, doppler_half_width: 1 }
    }
}

impl ClutterMask {
    pub fn contains(&self, (p, q): (usize, usize), (_, q_len): (usize, usize)) -> bool {
        p < self.range_bins || q.abs_diff(q_len / 2) <= self.doppler_half_width
    }

    pub fn cells(&self, shape: (usize, usize)) -> CellSet {
        let cells = (0..shape.0).flat_map(|p| (0..shape.1).map(move |q| (p, q))).filter(|c| self.contains(*c, shape));
        CellSet::from_cells(CellKind::Noise, cells)
    }

    fn validate(&self, shape: (usize, usize)) -> Result<()> {
        if self.range_bins > shape.0 || self.doppler_half_width > shape.1 / 2 {
            return Err(domain(format!("clutter mask {self:?} exceeds map shape {shape:?}")));
        }
        Ok(())
    }
}

fn lower_median(mut values: Vec<f64>) -> f64 {
    let mid = (values.len() - 1) / 2;
    *values.select_nth_unstable_by(mid, |a, b| a.total_cmp(b)).1
}

/// Replace cells inside `mask` whose magnitude exceeds the map median by
/// the median; everything else is copied unchanged.
///
/// The lower median is used, so the same cells are touched whatever
/// monotone scale (linear, dB, normalized) the map is in. Complex cells
/// keep their phase.
pub fn clutter_filter(map: &RdMap, mask: &ClutterMask) -> Result<RdMap> {
    let shape = map.dim();
    mask.validate(shape)?;
    let values = match map.values() {
        MapValues::Complex(v) => {
            let median = lower_median(v.iter().map(|c| c.norm()).collect());
            let mut out = v.clone();
            for (cell, c) in out.indexed_iter_mut() {
                let mag = c.norm();
                if mag > median && mask.contains(cell, shape) {
                    *c *= median / mag;
                }
            }
            MapValues::Complex(out)
        }
        MapValues::Magnitude(v) => {
            let median = lower_median(v.iter().copied().collect());
            let mut out = v.clone();
            for (cell, x) in out.indexed_iter_mut() {
                if *x > median && mask.contains(cell, shape) {
                    *x = median;
                }
            }
            MapValues::Magnitude(out)
        }
    };
    Ok(map.with_values(values))
}

/// Scene generator configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub radar: RadarConfig,
    pub sequences: usize,
    pub frames_per_sequence: usize,
    pub min_targets: usize,
    pub max_targets: usize,
    pub range_m: (f64, f64),
    /// Radial speed magnitude; the sign is drawn per target.
    pub speed_mps: (f64, f64),
    pub rcs_m2: (f64, f64),
    pub frame_interval_s: f64,
    pub interferers_per_frame: usize,
    /// Extra interferer draws after an infeasible one before a frame is
    /// skipped. Low levels are only reachable by draws whose interference
    /// avoids the object cells, so the default budget is generous.
    pub max_redraws: usize,
    /// Add receiver noise to the reference frames.
    pub reference_noise: bool,
    /// RCS of a static reflector just in front of the antenna (0 disables it).
    pub hood_clutter_rcs_m2: f64,
    pub clutter_mask: ClutterMask,
    pub cfar: CfarParams,
    pub guard_margin: usize,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            radar: RadarConfig::default(),
            sequences: 1,
            frames_per_sequence: 100,
            min_targets: 1,
            max_targets: 3,
            range_m: (8.0, 100.0),
            speed_mps: (2.0, 20.0),
            rcs_m2: (1.0, 20.0),
            frame_interval_s: 1.0 / 30.0,
            interferers_per_frame: 1,
            max_redraws: 4095,
            reference_noise: true,
            hood_clutter_rcs_m2: 0.0,
            clutter_mask: ClutterMask::default(),
            cfar: CfarParams::default(),
            guard_margin: 1,
            seed: 0,
        }
    }
}

const HOOD_RANGE_M: f64 = 0.5;

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        self.radar.validate()?;
        self.cfar.validate()?;
        self.clutter_mask.validate(self.radar.map_shape())?;
        if self.sequences == 0 || self.frames_per_sequence == 0 {
            return Err(Error::Config("sequences and frames_per_sequence must be >= 1".into()));
        }
        if self.min_targets == 0 || self.min_targets > self.max_targets {
            return Err(Error::Config("need 1 <= min_targets <= max_targets".into()));
        }
        if self.interferers_per_frame == 0 {
            return Err(Error::Config("interferers_per_frame must be >= 1".into()));
        }
        let ordered = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi;
        if !ordered(self.range_m) || !ordered(self.speed_mps) || !ordered(self.rcs_m2) {
            return Err(Error::Config("target ranges must be positive and ordered".into()));
        }
        if self.range_m.1 >= self.radar.max_unambiguous_range_m() {
            return Err(Error::Config(format!(
                "range_m upper bound {} exceeds unambiguous range {:.2} m",
                self.range_m.1,
                self.radar.max_unambiguous_range_m()
            )));
        }
        if self.speed_mps.1 >= self.radar.max_unambiguous_velocity_mps() {
            return Err(Error::Config(format!(
                "speed_mps upper bound {} exceeds unambiguous velocity {:.2} m/s",
                self.speed_mps.1,
                self.radar.max_unambiguous_velocity_mps()
            )));
        }
        if !(self.frame_interval_s.is_finite() && self.frame_interval_s > 0.0) {
            return Err(Error::Config("frame_interval_s must be positive".into()));
        }
        if !(self.hood_clutter_rcs_m2.is_finite() && self.hood_clutter_rcs_m2 >= 0.0) {
            return Err(Error::Config("hood_clutter_rcs_m2 must be >= 0".into()));
        }
        Ok(())
    }

    /// Complete triplets per (sequence, level).
    pub fn triplets_per_sequence(&self) -> usize {
        self.frames_per_sequence / 3
    }
}

/// Clean frame `t` with everything derived from it that scoring needs.
#[derive(Debug, Clone)]
pub struct Reference {
    pub frame: BeatFrame,
    /// Complex RD map of `frame`.
    pub map: RdMap,
    pub objects: CellSet,
    pub noise: CellSet,
    /// Ground-truth peak cells of the moving targets.
    pub peaks: PeakList,
}

/// A frame corrupted to a requested SINR.
#[derive(Debug, Clone)]
pub struct Corruption {
    /// Interferers with the solved amplitude in `amplitude_scale` and no SINR target.
    pub interferers: Vec<InterfererConfig>,
    pub frame: BeatFrame,
    pub measured_sinr_db: f64,
    /// Draws used, counting the successful one.
    pub attempts: usize,
}

/// Deterministic scene: target tracks for every sequence and the frame
/// and interference generators keyed on (seed, sequence, level, frame).
#[derive(Debug, Clone)]
pub struct SceneSimulator {
    spec: SceneSpec,
    tracks: Vec<Vec<Vec<Target>>>,
}

impl SceneSimulator {
    pub fn new(spec: SceneSpec) -> Result<Self> {
        spec.validate()?;
        let tracks = (0..spec.sequences).map(|s| simulate_tracks(&spec, s)).collect::<Result<_>>()?;
        Ok(Self { spec, tracks })
    }

    pub fn spec(&self) -> &SceneSpec {
        &self.spec
    }

    pub fn targets(&self, sequence: usize, frame: usize) -> &[Target] {
        &self.tracks[sequence][frame]
    }

    fn check_index(&self, sequence: usize, frame: usize) -> Result<()> {
        if sequence >= self.spec.sequences || frame >= self.spec.frames_per_sequence {
            return Err(domain(format!("frame ({sequence}, {frame}) outside the scene")));
        }
        Ok(())
    }

    /// Clean beat frame: moving targets, optional hood reflector, and noise
    /// when `reference_noise` is set.
    pub fn clean_frame(&self, sequence: usize, frame: usize) -> Result<BeatFrame> {
        self.check_index(sequence, frame)?;
        let mut targets = self.targets(sequence, frame).to_vec();
        if self.spec.hood_clutter_rcs_m2 > 0.0 {
            targets.push(Target::new(HOOD_RANGE_M, 0.0, self.spec.hood_clutter_rcs_m2));
        }
        let seed = rng::derive_seed(self.spec.seed, &[tag::NOISE, sequence as u64, frame as u64]);
        synthesize_clean_beat(&self.spec.radar, &targets, seed, self.spec.reference_noise)
    }

    pub fn reference(&self, sequence: usize, frame: usize) -> Result<Reference> {
        let clean = self.clean_frame(sequence, frame)?;
        let map = range_doppler_map(&clean);
        let shape = map.dim();
        let excluded = self.spec.clutter_mask.cells(shape);
        let (objects, noise) =
            object_noise_cells_excluding(&map, &self.spec.cfar, self.spec.guard_margin, Some(&excluded))?;
        let cells = self
            .targets(sequence, frame)
            .iter()
            .map(|t| expected_peak_bin(&self.spec.radar, t))
            .collect::<Result<Vec<_>>>()?;
        Ok(Reference { frame: clean, map, objects, noise, peaks: PeakList::from_cells(cells) })
    }

    /// Sum of the interferers' contributions at their own amplitudes.
    pub fn interference(&self, interferers: &[InterfererConfig]) -> Result<BeatFrame> {
        let parts =
            interferers.iter().map(|i| synthesize_interference(&self.spec.radar, i)).collect::<Result<Vec<_>>>()?;
        let zero = BeatFrame::zeros(self.spec.radar, Provenance::InterferenceOnly);
        Ok(superimpose(&zero, &parts)?.with_provenance(Provenance::InterferenceOnly))
    }

    /// `reference + interference` for already-resolved interferers.
    pub fn corrupted_frame(&self, reference: &Reference, interferers: &[InterfererConfig]) -> Result<BeatFrame> {
        let interference = self.interference(interferers)?;
        superimpose(&reference.frame, &[interference])
    }

    /// Draw interferers for (sequence, level, frame) and scale them so that
    /// the corrupted map sits at `level_db` on the reference's object and
    /// noise cells. Draws that are infeasible, render no interference, or
    /// miss the level by more than [`SINR_TOLERANCE_DB`] are redrawn up to
    /// `max_redraws` times; `Ok(None)` means every draw failed.
    pub fn corrupt(
        &self,
        reference: &Reference,
        sequence: usize,
        level_index: usize,
        frame: usize,
    ) -> Result<Option<Corruption>> {
        let level_db = *SINR_LEVELS_DB
            .get(level_index)
            .ok_or_else(|| domain(format!("SINR level index {level_index} out of range")))?;
        for attempt in 0..=self.spec.max_redraws {
            let mut rng = rng::substream(
                self.spec.seed,
                &[tag::INTERFERER, sequence as u64, level_index as u64, frame as u64, attempt as u64],
            );
            let mut drawn: Vec<InterfererConfig> =
                (0..self.spec.interferers_per_frame).map(|_| sample_interferer(&mut rng, &self.spec.radar)).collect();
            for i in drawn.iter_mut() {
                i.target_sinr_db = None;
            }
            let unit = self.interference(&drawn)?;
            if unit.samples().iter().all(|v| v.norm_sqr() == 0.0) {
                continue;
            }
            let unit_map = range_doppler_map(&unit);
            let curve = SinrCurve::new(&reference.map, &unit_map, &reference.objects, &reference.noise)?;
            let scale = match curve.solve(level_db) {
                Ok(s) => s,
                Err(Error::InfeasibleSinr { .. }) => continue,
                Err(e) => return Err(e),
            };
            for i in drawn.iter_mut() {
                i.amplitude_scale = scale;
            }
            let frame = self.corrupted_frame(reference, &drawn)?;
            let measured_sinr_db =
                crate::detection_metrics::sinr(&range_doppler_map(&frame), &reference.objects, &reference.noise)?;
            if (measured_sinr_db - level_db).abs() > SINR_TOLERANCE_DB {
                continue;
            }
            return Ok(Some(Corruption { interferers: drawn, frame, measured_sinr_db, attempts: attempt + 1 }));
        }
        Ok(None)
    }
}

fn simulate_tracks(spec: &SceneSpec, sequence: usize) -> Result<Vec<Vec<Target>>> {
    let mut rng = rng::substream(spec.seed, &[tag::TARGETS, sequence as u64]);
    let count = rng.random_range(spec.min_targets..=spec.max_targets);
    let mut targets: Vec<Target> = (0..count)
        .map(|_| {
            let speed = rng.random_range(spec.speed_mps.0..=spec.speed_mps.1);
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            Target::new(
                rng.random_range(spec.range_m.0..=spec.range_m.1),
                sign * speed,
                rng.random_range(spec.rcs_m2.0..=spec.rcs_m2.1),
            )
        })
        .collect();
    let (lo, hi) = spec.range_m;
    let mut frames = Vec::with_capacity(spec.frames_per_sequence);
    for _ in 0..spec.frames_per_sequence {
        for t in &targets {
            t.validate(&spec.radar)?;
        }
        frames.push(targets.clone());
        for t in targets.iter_mut() {
            let mut r = t.range_m + t.radial_velocity_mps * spec.frame_interval_s;
            if r > hi || r < lo {
                r = if r > hi { 2.0 * hi - r } else { 2.0 * lo - r };
                t.radial_velocity_mps = -t.radial_velocity_mps;
            }
            t.range_m = r.clamp(lo, hi);
        }
    }
    Ok(frames)
}
