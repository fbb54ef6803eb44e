//! Scoring of corrupted, mitigated or externally denoised maps against a
//! dataset's references.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cube::{read_rd_cube, write_rd_cube, Cube, CubeKind};
use super::manifest::{DatasetManifest, FrameRef, SampleRecord, Split};
use super::scene::{clutter_filter, Reference, SceneSimulator};
use super::stored_db_map;
use crate::detection_metrics::{
    average_precision, ca_cfar, cluster_peaks, evm, sinr, MetricRecord, DEFAULT_EPS, DEFAULT_MIN_PTS,
};
use crate::error::{Error, Result};
use crate::mitigation::{detect_interfered_samples, imat, zeroing, ImatParams, DEFAULT_K_SIGMA};
use crate::rd_pipeline::{range_doppler_map, RdMap, Scale};

/// AP matching tolerance in bins.
pub const AP_TOLERANCE_BINS: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MitigationSettings {
    pub k_sigma: f64,
    pub imat: ImatParams,
}

impl Default for MitigationSettings {
    fn default() -> Self {
        Self { k_sigma: DEFAULT_K_SIGMA, imat: ImatParams::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EvalMethod {
    /// The corrupted map itself.
    Corrupted,
    /// The clean reference (upper bound).
    Reference,
    Zeroing,
    Imat,
    /// One-frame dB magnitude cubes named `<sample_id>.rdc` in a directory.
    External(PathBuf),
}

impl EvalMethod {
    pub fn label(&self) -> &'static str {
        match self {
            EvalMethod::Corrupted => "corrupted",
            EvalMethod::Reference => "reference",
            EvalMethod::Zeroing => "zeroing",
            EvalMethod::Imat => "imat",
            EvalMethod::External(_) => "external",
        }
    }
}

/// Metrics of one test map against its reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleScore {
    pub sinr_db: f64,
    pub evm: f64,
    pub ap_percent: f64,
}

/// SINR on the reference's object/noise cells, EVM of linear magnitudes
/// on the object cells, and AP of CFAR + DBSCAN detections against the
/// target bins. Both maps are clutter-filtered first.
pub fn score_map(sim: &SceneSimulator, reference: &Reference, test: &RdMap) -> Result<SampleScore> {
    let mask = sim.spec().clutter_mask;
    let test = clutter_filter(test, &mask)?.linear_magnitude();
    let clean = clutter_filter(&reference.map, &mask)?.linear_magnitude();
    let detections = cluster_peaks(&ca_cfar(&test, &sim.spec().cfar)?, DEFAULT_EPS, DEFAULT_MIN_PTS)?;
    Ok(SampleScore {
        sinr_db: sinr(&test, &reference.objects, &reference.noise)?,
        evm: evm(&clean, &test, &reference.objects)?,
        ap_percent: average_precision(&reference.peaks, &detections, AP_TOLERANCE_BINS)?,
    })
}

/// Test map of `method` for frame t of `sample`.
pub fn method_map(
    sim: &SceneSimulator,
    reference: &Reference,
    sample: &SampleRecord,
    method: &EvalMethod,
    settings: &MitigationSettings,
) -> Result<RdMap> {
    let corrupted = || sim.corrupted_frame(reference, &sample.interferers());
    Ok(match method {
        EvalMethod::Corrupted => range_doppler_map(&corrupted()?),
        EvalMethod::Reference => reference.map.clone(),
        EvalMethod::Zeroing => {
            let frame = corrupted()?;
            let mask = detect_interfered_samples(&frame, settings.k_sigma)?;
            range_doppler_map(&zeroing(&frame, &mask)?)
        }
        EvalMethod::Imat => {
            let frame = corrupted()?;
            let mask = detect_interfered_samples(&frame, settings.k_sigma)?;
            range_doppler_map(&imat(&frame, &mask, settings.imat)?)
        }
        EvalMethod::External(dir) => {
            let path = external_path(dir, sample.sample_id);
            let cube = read_rd_cube(&path)?;
            if cube.kind() != CubeKind::Magnitude || cube.frame_count() != 1 {
                return Err(Error::Domain(format!(
                    "{}: expected one magnitude frame, found {} {:?} frames",
                    path.display(),
                    cube.frame_count(),
                    cube.kind()
                )));
            }
            RdMap::from_magnitude(cube.magnitude_frame(0)?, Scale::Db, sim.spec().radar)?
        }
    })
}

pub fn external_path(dir: &Path, sample_id: u64) -> PathBuf {
    dir.join(format!("{sample_id}.rdc"))
}

fn selected(manifest: &DatasetManifest, split: Option<Split>) -> Vec<&SampleRecord> {
    manifest.samples.iter().filter(|s| split.is_none_or(|sp| s.split == sp)).collect()
}

/// Score `method` on every sample of `split` (all samples when `None`),
/// in sample order.
pub fn evaluate_dataset(
    dataset_dir: impl AsRef<Path>,
    method: &EvalMethod,
    split: Option<Split>,
    settings: &MitigationSettings,
) -> Result<Vec<MetricRecord>> {
    let manifest = DatasetManifest::read_dir(dataset_dir)?;
    let sim = SceneSimulator::new(manifest.header.scene.clone())?;
    selected(&manifest, split)
        .par_iter()
        .map(|sample| {
            let reference = sim.reference(sample.sequence, sample.frame_t)?;
            let map = method_map(&sim, &reference, sample, method, settings)?;
            let score = score_map(&sim, &reference, &map)?;
            Ok(MetricRecord {
                sample_id: sample.sample_id,
                method: method.label().into(),
                sinr_db: Some(score.sinr_db),
                evm: Some(score.evm),
                ap_percent: Some(score.ap_percent),
            })
        })
        .collect()
}

/// Write the frame-t output of a classical method for every sample of
/// `split` as `<sample_id>.rdc` (one clutter-filtered dB frame each), the
/// layout `EvalMethod::External` reads.
pub fn export_mitigated(
    dataset_dir: impl AsRef<Path>,
    method: &EvalMethod,
    split: Option<Split>,
    settings: &MitigationSettings,
    out_dir: impl AsRef<Path>,
) -> Result<usize> {
    if matches!(method, EvalMethod::External(_)) {
        return Err(Error::Domain("cannot export an external method".into()));
    }
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir)?;
    let manifest = DatasetManifest::read_dir(dataset_dir)?;
    let sim = SceneSimulator::new(manifest.header.scene.clone())?;
    let samples = selected(&manifest, split);
    samples.par_iter().try_for_each(|sample| {
        let reference = sim.reference(sample.sequence, sample.frame_t)?;
        let map = method_map(&sim, &reference, sample, method, settings)?;
        let db = stored_db_map(&map, &sim.spec().clutter_mask)?;
        let (d0, d1) = db.dim();
        let mut cube = Cube::new(CubeKind::Magnitude, d0, d1);
        cube.push_map(&db)?;
        write_rd_cube(&cube, external_path(out_dir, sample.sample_id))
    })?;
    Ok(samples.len())
}

/// Normalized map stored for `frame`.
pub fn load_stored_map(dataset_dir: impl AsRef<Path>, manifest: &DatasetManifest, frame: &FrameRef) -> Result<RdMap> {
    let cube = read_rd_cube(dataset_dir.as_ref().join(&frame.file))?;
    RdMap::from_normalized(
        cube.magnitude_frame(frame.frame)?,
        manifest.header.normalization.stats,
        manifest.header.scene.radar,
    )
}
