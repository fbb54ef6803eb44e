//! Synthetic interference dataset: every frame of every simulated sequence
//! is corrupted at each SINR level, grouped into non-overlapping triplets
//! `(t-2, t-1, t)`, split 60/20/20 and stored as normalized dB cubes.

mod cube;
mod evaluate;
mod manifest;
mod scene;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rayon::prelude::*;

pub use cube::*;
pub use evaluate::*;
pub use manifest::*;
pub use scene::*;

use crate::error::{Error, Result};
use crate::rd_pipeline::{
    normalize, range_doppler_map, to_db, NormStats, NormalizationRecord, RdMap, Scale, StatsAccumulator,
    NORMALIZATION_METHOD,
};
use crate::rng::{self, tag};

/// Frames produced by `frames` recorded frames at every SINR level.
pub fn augmented_frame_count(frames: usize, levels: usize) -> usize {
    frames * levels
}

/// Non-overlapping triplets: `floor(frames / 3)` per sequence and level.
pub fn sample_count(frames_per_sequence: &[usize], levels: usize) -> usize {
    frames_per_sequence.iter().map(|f| f / 3).sum::<usize>() * levels
}

/// `(train, val, test)` sizes: val and test are `floor(n / 5)` each.
pub fn split_sizes(samples: usize) -> (usize, usize, usize) {
    let val = samples / 5;
    let test = samples / 5;
    (samples - val - test, val, test)
}

pub fn level_file(sequence: usize, level_index: usize) -> String {
    format!("seq{sequence}_lvl{level_index}.rdc")
}

pub fn reference_file(sequence: usize) -> String {
    format!("seq{sequence}_ref.rdc")
}

/// Clutter-filtered dB map as stored in the cubes (before normalization).
pub fn stored_db_map(map: &RdMap, mask: &ClutterMask) -> Result<RdMap> {
    to_db(&clutter_filter(map, mask)?)
}

struct FrameOutcome {
    reference_db: Array2<f64>,
    levels: Vec<LevelOutcome>,
}

enum LevelOutcome {
    Done { db: Array2<f64>, interferers: Vec<crate::signal_model::InterfererConfig>, measured_sinr_db: f64 },
    Skipped { db: Array2<f64>, reason: String },
}

fn db_values(map: &RdMap) -> Array2<f64> {
    map.magnitude_values().expect("dB maps are real").clone()
}

fn process_frame(sim: &SceneSimulator, sequence: usize, frame: usize) -> Result<FrameOutcome> {
    let mask = sim.spec().clutter_mask;
    let reference = match sim.reference(sequence, frame) {
        Ok(r) => r,
        Err(Error::NoObjects) => {
            let clean_map = range_doppler_map(&sim.clean_frame(sequence, frame)?);
            let clean_db = db_values(&stored_db_map(&clean_map, &mask)?);
            let levels = (0..SINR_LEVELS_DB.len())
                .map(|_| LevelOutcome::Skipped {
                    db: clean_db.clone(),
                    reason: "reference map has no object cells".into(),
                })
                .collect();
            return Ok(FrameOutcome { reference_db: clean_db, levels });
        }
        Err(e) => return Err(e),
    };
    let clean_db = db_values(&stored_db_map(&reference.map, &mask)?);
    let levels = (0..SINR_LEVELS_DB.len())
        .into_par_iter()
        .map(|level| {
            Ok(match sim.corrupt(&reference, sequence, level, frame)? {
                Some(c) => LevelOutcome::Done {
                    db: db_values(&stored_db_map(&range_doppler_map(&c.frame), &mask)?),
                    interferers: c.interferers,
                    measured_sinr_db: c.measured_sinr_db,
                },
                None => LevelOutcome::Skipped {
                    db: clean_db.clone(),
                    reason: format!("no feasible interferer in {} draws", sim.spec().max_redraws + 1),
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FrameOutcome { reference_db: clean_db, levels })
}

struct PendingSample {
    sequence: usize,
    level_index: usize,
    frame_t: usize,
    measured_sinr_db: f64,
    interferers: Vec<crate::signal_model::InterfererConfig>,
}

/// Generate the dataset described by `scene` into `out_dir`, using at most
/// `jobs` worker threads. Output files are identical for identical scenes
/// regardless of `jobs`.
pub fn synthesize_dataset(scene: &SceneSpec, out_dir: impl AsRef<Path>, jobs: usize) -> Result<DatasetManifest> {
    let out_dir = out_dir.as_ref();
    let sim = SceneSimulator::new(scene.clone())?;
    let triplets = scene.triplets_per_sequence();
    if triplets == 0 {
        return Err(Error::Config("frames_per_sequence must be >= 3 to form a triplet".into()));
    }
    fs::create_dir_all(out_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Domain(format!("thread pool: {e}")))?;
    let used = 3 * triplets;
    let shape = scene.radar.map_shape();
    let levels = SINR_LEVELS_DB.len();

    let mut pending = Vec::new();
    let mut skips = Vec::new();
    for sequence in 0..scene.sequences {
        log::info!("sequence {sequence}: synthesizing {used} frames x {levels} levels");
        let outcomes = pool.install(|| {
            (0..used).into_par_iter().map(|f| process_frame(&sim, sequence, f)).collect::<Result<Vec<_>>>()
        })?;

        let mut ref_writer =
            CubeWriter::create(out_dir.join(reference_file(sequence)), CubeKind::Magnitude, shape, used)?;
        for o in &outcomes {
            ref_writer.write_magnitude(&o.reference_db)?;
        }
        ref_writer.finish()?;

        for level in 0..levels {
            let mut writer =
                CubeWriter::create(out_dir.join(level_file(sequence, level)), CubeKind::Magnitude, shape, used)?;
            for (frame, o) in outcomes.iter().enumerate() {
                match &o.levels[level] {
                    LevelOutcome::Done { db, .. } => writer.write_magnitude(db)?,
                    LevelOutcome::Skipped { db, reason } => {
                        writer.write_magnitude(db)?;
                        log::warn!("skip: sequence {sequence} level {level} frame {frame}: {reason}");
                        skips.push(Skip { sequence, level_index: level, frame, reason: reason.clone() });
                    }
                }
            }
            writer.finish()?;

            for k in 0..triplets {
                let frames = [3 * k, 3 * k + 1, 3 * k + 2];
                if frames.iter().any(|&f| matches!(outcomes[f].levels[level], LevelOutcome::Skipped { .. })) {
                    continue;
                }
                if let LevelOutcome::Done { interferers, measured_sinr_db, .. } = &outcomes[3 * k + 2].levels[level] {
                    pending.push(PendingSample {
                        sequence,
                        level_index: level,
                        frame_t: 3 * k + 2,
                        measured_sinr_db: *measured_sinr_db,
                        interferers: interferers.clone(),
                    });
                }
            }
        }
    }

    let total = sample_count(&vec![scene.frames_per_sequence; scene.sequences], levels);
    let (n_train, n_val, n_test) = split_sizes(pending.len());
    let mut order: Vec<u64> = (0..pending.len() as u64).collect();
    order.shuffle(&mut rng::substream(scene.seed, &[tag::SPLIT]));
    let mut assignment = vec![Split::Train; pending.len()];
    let mut splits = Splits::default();
    for (rank, &id) in order.iter().enumerate() {
        let split = if rank < n_val {
            Split::Val
        } else if rank < n_val + n_test {
            Split::Test
        } else {
            Split::Train
        };
        assignment[id as usize] = split;
    }
    for (id, split) in assignment.iter().enumerate() {
        match split {
            Split::Train => splits.train.push(id as u64),
            Split::Val => splits.val.push(id as u64),
            Split::Test => splits.test.push(id as u64),
        }
    }
    debug_assert_eq!(splits.train.len(), n_train);

    let samples: Vec<SampleRecord> = pending
        .into_iter()
        .enumerate()
        .map(|(id, p)| {
            let corrupted = level_file(p.sequence, p.level_index);
            let at = |frame: usize| FrameRef { file: corrupted.clone(), frame };
            let mut interferers = p.interferers.into_iter();
            SampleRecord {
                sample_id: id as u64,
                split: assignment[id],
                sequence: p.sequence,
                frame_t: p.frame_t,
                level_index: p.level_index,
                sinr_db: SINR_LEVELS_DB[p.level_index],
                measured_sinr_db: p.measured_sinr_db,
                interferer: interferers.next().expect("at least one interferer"),
                additional_interferers: interferers.collect(),
                files: SampleFiles {
                    t: at(p.frame_t),
                    t1: at(p.frame_t - 1),
                    t2: at(p.frame_t - 2),
                    reference: FrameRef { file: reference_file(p.sequence), frame: p.frame_t },
                },
            }
        })
        .collect();

    let stats = pool.install(|| training_stats(out_dir, &samples))?;
    pool.install(|| normalize_cubes(out_dir, scene, &stats))?;

    let skipped_samples = total - samples.len();
    let mut notes = BTreeMap::new();
    notes.insert(
        "sinr_definition".into(),
        "sinr_db is the object-to-noise power ratio measured on the corrupted range-Doppler map of frame t, \
         on object and noise cells of the clean reference outside the clutter mask"
            .into(),
    );
    notes.insert("interferer_draw".into(), "independent draw per frame and level".into());
    notes.insert("triplets".into(), "non-overlapping (3k, 3k+1, 3k+2) per sequence and level; t = 3k+2".into());
    notes.insert("map_values".into(), "clutter-filtered 20 log10 |S| maps, then normalized".into());
    let header = ManifestHeader {
        format_version: FORMAT_VERSION,
        generator: format!("rdlab {}", env!("CARGO_PKG_VERSION")),
        counts: Counts {
            frames: scene.sequences * scene.frames_per_sequence,
            augmented_frames: augmented_frame_count(scene.sequences * scene.frames_per_sequence, levels),
            samples: samples.len(),
            skipped_frames: skips.len(),
            skipped_samples,
        },
        splits,
        normalization: NormalizationRecord {
            method: NORMALIZATION_METHOD.into(),
            stats,
            degenerate: stats.is_degenerate(),
        },
        config_hash: config_hash(scene)?,
        scene: scene.clone(),
        sinr_levels_db: SINR_LEVELS_DB.to_vec(),
        skips,
        notes,
    };
    let manifest = DatasetManifest { header, samples };
    manifest.write(out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// Statistics over every map a training sample touches (its three corrupted
/// frames and its reference), each counted once, accumulated per file in
/// file-name order.
fn training_stats(dir: &Path, samples: &[SampleRecord]) -> Result<NormStats> {
    let mut frames: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
    for s in samples.iter().filter(|s| s.split == Split::Train) {
        for r in [&s.files.t, &s.files.t1, &s.files.t2, &s.files.reference] {
            frames.entry(r.file.clone()).or_default().insert(r.frame);
        }
    }
    let partials = frames
        .par_iter()
        .map(|(file, idx)| {
            let cube = read_rd_cube(dir.join(file))?;
            let mut acc = StatsAccumulator::default();
            for &i in idx {
                for &v in cube.frame_data(i)? {
                    acc.push(v as f64);
                }
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = StatsAccumulator::default();
    for p in &partials {
        total.merge(p);
    }
    total.finish().ok_or_else(|| Error::Domain("training split is empty".into()))
}

fn normalize_cubes(dir: &Path, scene: &SceneSpec, stats: &NormStats) -> Result<()> {
    let files: Vec<String> = (0..scene.sequences)
        .flat_map(|s| {
            std::iter::once(reference_file(s)).chain((0..SINR_LEVELS_DB.len()).map(move |l| level_file(s, l)))
        })
        .collect();
    files.par_iter().try_for_each(|file| {
        let path = dir.join(file);
        let cube = read_rd_cube(&path)?;
        let mut out = Cube::new(CubeKind::Magnitude, cube.frame_shape().0, cube.frame_shape().1);
        for i in 0..cube.frame_count() {
            let db = RdMap::from_magnitude(cube.magnitude_frame(i)?, Scale::Db, scene.radar)?;
            out.push_map(&normalize(&db, Some(stats))?)?;
        }
        write_rd_cube(&out, &path)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counting_rules() {
        assert_eq!(augmented_frame_count(100, 7), 700);
        assert_eq!(sample_count(&[100], 7), 231);
        assert_eq!(split_sizes(231), (139, 46, 46));
        assert_eq!(augmented_frame_count(54_967, 7), 384_769);
        assert_eq!(split_sizes(0), (0, 0, 0));
        assert_eq!(split_sizes(4), (4, 0, 0));
    }
}
