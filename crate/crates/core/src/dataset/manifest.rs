//! Line-delimited JSON manifest: one header record, then one record per
//! sample.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::scene::SceneSpec;
use crate::error::{Error, Result};
use crate::rd_pipeline::NormalizationRecord;
use crate::signal_model::InterfererConfig;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Domain(format!("unknown split {other:?}"))),
        }
    }
}

/// One frame inside a cube file, relative to the dataset directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRef {
    pub file: String,
    pub frame: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleFiles {
    pub t: FrameRef,
    pub t1: FrameRef,
    pub t2: FrameRef,
    #[serde(rename = "ref")]
    pub reference: FrameRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: u64,
    pub split: Split,
    pub sequence: usize,
    pub frame_t: usize,
    pub level_index: usize,
    /// Requested SINR level.
    pub sinr_db: f64,
    /// SINR measured on the frame-t corrupted map before quantization.
    pub measured_sinr_db: f64,
    /// Frame-t interferer with its solved amplitude.
    pub interferer: InterfererConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub additional_interferers: Vec<InterfererConfig>,
    pub files: SampleFiles,
}

impl SampleRecord {
    pub fn interferers(&self) -> Vec<InterfererConfig> {
        std::iter::once(self.interferer).chain(self.additional_interferers.iter().copied()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub frames: usize,
    pub augmented_frames: usize,
    pub samples: usize,
    pub skipped_frames: usize,
    pub skipped_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<u64>,
    pub val: Vec<u64>,
    pub test: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skip {
    pub sequence: usize,
    pub level_index: usize,
    pub frame: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub format_version: u32,
    pub generator: String,
    pub counts: Counts,
    pub splits: Splits,
    pub normalization: NormalizationRecord,
    /// SHA-256 of the scene JSON.
    pub config_hash: String,
    pub scene: SceneSpec,
    pub sinr_levels_db: Vec<f64>,
    pub skips: Vec<Skip>,
    pub notes: BTreeMap<String, String>,
}

#[allow(clippy::large_enum_variant)]
#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Record {
    Header(Box<ManifestHeader>),
    Sample(SampleRecord),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub header: ManifestHeader,
    pub samples: Vec<SampleRecord>,
}

impl DatasetManifest {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut out, &Record::Header(Box::new(self.header.clone())))?;
        out.write_all(b"\n")?;
        for s in &self.samples {
            serde_json::to_writer(&mut out, &Record::Sample(s.clone()))?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let mut header = None;
        let mut samples = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str(&line)? {
                Record::Header(h) if header.is_none() => header = Some(*h),
                Record::Header(_) => return Err(Error::Domain(format!("second header record on line {}", i + 1))),
                Record::Sample(s) => samples.push(s),
            }
        }
        let header = header.ok_or_else(|| Error::Domain("manifest has no header record".into()))?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::Domain(format!("unsupported manifest version {}", header.format_version)));
        }
        Ok(Self { header, samples })
    }

    pub fn read_dir(dir: impl AsRef<Path>) -> Result<Self> {
        Self::read(dir.as_ref().join(MANIFEST_FILE))
    }

    pub fn sample(&self, id: u64) -> Option<&SampleRecord> {
        self.samples.iter().find(|s| s.sample_id == id)
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &SampleRecord> {
        self.samples.iter().filter(move |s| s.split == split)
    }
}

/// Hex SHA-256 of the scene's JSON form.
pub fn config_hash(scene: &SceneSpec) -> Result<String> {
    let digest = Sha256::digest(serde_json::to_vec(scene)?);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}
