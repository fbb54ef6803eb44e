//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Runs with `cargo test -p rdlab-core --test acceptance`.

use std::f64::consts::TAU;
use std::path::Path;
use std::time::{Duration, Instant};

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use rdlab::dataset::{
    augmented_frame_count, evaluate_dataset, export_mitigated, load_stored_map, read_rd_cube, score_map,
    synthesize_dataset, write_rd_cube, Cube, CubeKind, DatasetManifest, EvalMethod, MitigationSettings, SceneSimulator,
    SceneSpec, Split, SINR_LEVELS_DB, SINR_TOLERANCE_DB,
};
use rdlab::detection_metrics::{
    average_precision, ca_cfar, cluster_peaks, evm, object_noise_cells, sinr, CellKind, CellSet, CfarParams, PeakList,
    DEFAULT_EPS, DEFAULT_MIN_PTS,
};
use rdlab::mitigation::{detect_interfered_samples, imat, zeroing, ImatParams, InterferenceMask};
use rdlab::rd_pipeline::{argmax, expected_peak_bin, range_doppler_map, to_db, RdMap, Scale};
use rdlab::rng::{derive_seed, substream, tag};
use rdlab::signal_model::{
    scenario_preset, scenario_target, superimpose, synthesize_clean_beat, synthesize_interference, unit_noise_frame,
};
use rdlab::{BeatFrame, Error, Provenance, RadarConfig, Target};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn db_values(map: &RdMap) -> Array2<f64> {
    to_db(map).unwrap().magnitude_values().unwrap().clone()
}

// ---------------------------------------------------------------- physics

fn physics_oracle() -> Outcome {
    let cfg = RadarConfig::default();
    let mut rng = substream(1, &[tag::TARGETS]);
    let (p_len, q_len) = cfg.map_shape();
    let mut worst = (0usize, 0usize);
    for i in 0..100 {
        let target = Target::new(
            rng.random_range(1.0..0.95 * cfg.max_unambiguous_range_m()),
            rng.random_range(-0.95..0.95) * cfg.max_unambiguous_velocity_mps(),
            rng.random_range(1.0..20.0),
        );
        let frame = synthesize_clean_beat(&cfg, &[target], 0, false).map_err(err)?;
        let (p, q) = argmax(&range_doppler_map(&frame));
        let (ep, eq) = expected_peak_bin(&cfg, &target).map_err(err)?;
        let dp = p.abs_diff(ep).min(p_len - p.abs_diff(ep));
        let dq = q.abs_diff(eq).min(q_len - q.abs_diff(eq));
        worst = (worst.0.max(dp), worst.1.max(dq));
        if dp > 1 || dq > 1 {
            return Err(format!("target {i} {target:?}: argmax ({p},{q}) vs expected ({ep},{eq})"));
        }
    }
    Ok(format!("100 targets, worst offset {} range / {} Doppler bins", worst.0, worst.1))
}

// -------------------------------------------------------------- scenarios

struct ScenarioTrial {
    clean: RdMap,
    corrupted: RdMap,
}

fn scenario_trial(id: usize, seed: u64) -> Result<ScenarioTrial, String> {
    let (cfg, aggressor) = scenario_preset(id).map_err(err)?;
    let clean =
        synthesize_clean_beat(&cfg, &[scenario_target()], derive_seed(seed, &[tag::NOISE]), true).map_err(err)?;
    let interference = synthesize_interference(&cfg, &aggressor).map_err(err)?;
    let corrupted = superimpose(&clean, &[interference]).map_err(err)?;
    Ok(ScenarioTrial { clean: range_doppler_map(&clean), corrupted: range_doppler_map(&corrupted) })
}

fn detections(map: &RdMap) -> Result<PeakList, String> {
    let raw = ca_cfar(map, &CfarParams::default()).map_err(err)?;
    cluster_peaks(&raw, DEFAULT_EPS, DEFAULT_MIN_PTS).map_err(err)
}

fn ghost_count(t: &ScenarioTrial) -> Result<usize, String> {
    let clean: Vec<_> = detections(&t.clean)?.cells().collect();
    Ok(detections(&t.corrupted)?
        .cells()
        .filter(|&(p, q)| clean.iter().all(|&(cp, cq)| p.abs_diff(cp).max(q.abs_diff(cq)) > 1))
        .count())
}

fn floor_rise_db(t: &ScenarioTrial) -> f64 {
    median(db_values(&t.corrupted).into_iter().collect()) - median(db_values(&t.clean).into_iter().collect())
}

fn widest_ridge(t: &ScenarioTrial) -> usize {
    let floor = median(db_values(&t.clean).into_iter().collect());
    let corrupted = db_values(&t.corrupted);
    corrupted.rows().into_iter().map(|row| row.iter().filter(|&&v| v > floor + 6.0).count()).max().unwrap_or(0)
}

fn sinr_loss_db(t: &ScenarioTrial) -> Result<f64, String> {
    let (o, n) = object_noise_cells(&t.clean, &CfarParams::default(), 1).map_err(err)?;
    Ok(sinr(&t.clean, &o, &n).map_err(err)? - sinr(&t.corrupted, &o, &n).map_err(err)?)
}

fn scenario_suite() -> Outcome {
    let q_len = RadarConfig::default().map_shape().1;
    let mut notes = Vec::new();
    let mut failures = Vec::new();
    let mut min_ghosts = usize::MAX;
    let mut min_rise = f64::INFINITY;
    let mut min_ridge = usize::MAX;
    let mut max_loss = f64::NEG_INFINITY;
    for seed in 0..10 {
        let ghosts = ghost_count(&scenario_trial(1, seed)?)?;
        let rise = floor_rise_db(&scenario_trial(2, seed)?);
        let ridge = widest_ridge(&scenario_trial(3, seed)?);
        let loss = sinr_loss_db(&scenario_trial(5, seed)?)?;
        if ghosts < 1 {
            failures.push(format!("seed {seed}: scenario 1 has no ghost"));
        }
        if rise < 3.0 {
            failures.push(format!("seed {seed}: scenario 2 floor rise {rise:.2} dB"));
        }
        if ridge < q_len / 2 {
            failures.push(format!("seed {seed}: scenario 3 widest row {ridge} cells"));
        }
        if loss > 1.0 {
            failures.push(format!("seed {seed}: scenario 5 SINR loss {loss:.2} dB"));
        }
        min_ghosts = min_ghosts.min(ghosts);
        min_rise = min_rise.min(rise);
        min_ridge = min_ridge.min(ridge);
        max_loss = max_loss.max(loss);
    }
    notes.push(format!("(1) ghosts >= {min_ghosts}"));
    notes.push(format!("(2) floor rise >= {min_rise:.1} dB"));
    notes.push(format!("(3) ridge row >= {min_ridge}/{q_len} cells"));
    notes.push(format!("(5) SINR loss <= {max_loss:.3} dB"));
    let detail = format!("10 seeds; {}", notes.join(", "));
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", failures.join("; ")))
    }
}

// --------------------------------------------------------- metric oracles

fn random_map<R: Rng>(rng: &mut R, complex: bool) -> (RdMap, Vec<Vec<Complex64>>) {
    let cfg = RadarConfig::default();
    let (rows, cols) = cfg.map_shape();
    let cells: Vec<Vec<Complex64>> = (0..rows)
        .map(|_| {
            (0..cols)
                .map(|_| {
                    let mag = 10f64.powf(rng.random_range(-3.0..3.0));
                    if complex {
                        Complex64::from_polar(mag, rng.random_range(0.0..TAU))
                    } else {
                        Complex64::new(mag, 0.0)
                    }
                })
                .collect()
        })
        .collect();
    let map = if complex {
        RdMap::from_complex(Array2::from_shape_fn((rows, cols), |(p, q)| cells[p][q]), cfg)
    } else {
        RdMap::from_magnitude(Array2::from_shape_fn((rows, cols), |(p, q)| cells[p][q].re), Scale::Linear, cfg)
    }
    .unwrap();
    (map, cells)
}

type Cells = Vec<(usize, usize)>;

fn random_partition<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> (Cells, Cells) {
    let mut objects = Vec::new();
    let mut noise = Vec::new();
    for p in 0..rows {
        for q in 0..cols {
            match rng.random_range(0..10) {
                0 => objects.push((p, q)),
                1..=6 => noise.push((p, q)),
                _ => {}
            }
        }
    }
    if objects.is_empty() {
        objects.push(noise.pop().unwrap_or((0, 0)));
    }
    if noise.is_empty() {
        noise.push(if objects[0] == (0, 0) { (0, 1) } else { (0, 0) });
    }
    (objects, noise)
}

fn brute_sinr(cells: &[Vec<Complex64>], objects: &[(usize, usize)], noise: &[(usize, usize)]) -> f64 {
    let mut so = 0.0;
    for &(p, q) in objects {
        let v = cells[p][q];
        so += v.re * v.re + v.im * v.im;
    }
    let mut sn = 0.0;
    for &(p, q) in noise {
        let v = cells[p][q];
        sn += v.re * v.re + v.im * v.im;
    }
    10.0 * ((so / objects.len() as f64) / (sn / noise.len() as f64)).log10()
}

fn brute_evm(clean: &[Vec<Complex64>], test: &[Vec<Complex64>], objects: &[(usize, usize)]) -> f64 {
    let mut total = 0.0;
    for &(p, q) in objects {
        let d = clean[p][q] - test[p][q];
        total += d.re.hypot(d.im) / clean[p][q].re.hypot(clean[p][q].im);
    }
    total / objects.len() as f64
}

/// Largest one-to-one matching by exhaustive search.
fn brute_matching(refs: &[(usize, usize)], dets: &[(usize, usize)], tol: usize, used: &mut Vec<bool>) -> usize {
    let Some((&first, rest)) = refs.split_first() else {
        return 0;
    };
    let mut best = brute_matching(rest, dets, tol, used);
    for (j, &d) in dets.iter().enumerate() {
        if !used[j] && first.0.abs_diff(d.0).max(first.1.abs_diff(d.1)) <= tol {
            used[j] = true;
            best = best.max(1 + brute_matching(rest, dets, tol, used));
            used[j] = false;
        }
    }
    best
}

fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn metric_oracles() -> Outcome {
    let mut rng = substream(3, &[]);
    let mut worst_sinr = 0.0f64;
    let mut worst_evm = 0.0f64;
    for i in 0..1000 {
        let complex = i % 2 == 0;
        let (a, cells_a) = random_map(&mut rng, complex);
        let (rows, cols) = a.dim();
        let cells_b: Vec<Vec<Complex64>> = cells_a
            .iter()
            .map(|row| {
                row.iter()
                    .map(|v| {
                        let f = rng.random_range(0.5..1.5);
                        if complex {
                            v * Complex64::from_polar(f, rng.random_range(-0.5..0.5))
                        } else {
                            v * f
                        }
                    })
                    .collect()
            })
            .collect();
        let b = if complex {
            RdMap::from_complex(Array2::from_shape_fn((rows, cols), |(p, q)| cells_b[p][q]), *a.config())
        } else {
            RdMap::from_magnitude(
                Array2::from_shape_fn((rows, cols), |(p, q)| cells_b[p][q].re),
                Scale::Linear,
                *a.config(),
            )
        }
        .map_err(err)?;
        let (o, n) = random_partition(&mut rng, rows, cols);
        let objects = CellSet::from_cells(CellKind::Object, o.iter().copied());
        let noise = CellSet::from_cells(CellKind::Noise, n.iter().copied());

        let got = sinr(&a, &objects, &noise).map_err(err)?;
        worst_sinr = worst_sinr.max(relative_gap(got, brute_sinr(&cells_a, &o, &n)));
        let got = evm(&a, &b, &objects).map_err(err)?;
        worst_evm = worst_evm.max(relative_gap(got, brute_evm(&cells_a, &cells_b, &o)));
    }

    let mut ap_cases = 0;
    for _ in 0..1000 {
        let side = rng.random_range(3..12);
        let (n_refs, n_dets) = (rng.random_range(1..6), rng.random_range(0..7));
        let mut cell = || (rng.random_range(0..side), rng.random_range(0..side));
        let refs: Vec<_> = (0..n_refs).map(|_| cell()).collect();
        let dets: Vec<_> = (0..n_dets).map(|_| cell()).collect();
        for tol in 0..3 {
            let expected =
                100.0 * brute_matching(&refs, &dets, tol, &mut vec![false; dets.len()]) as f64 / refs.len() as f64;
            let got = average_precision(
                &PeakList::from_cells(refs.iter().copied()),
                &PeakList::from_cells(dets.iter().copied()),
                tol,
            )
            .map_err(err)?;
            if got != expected {
                return Err(format!("AP {got} vs brute force {expected} for refs {refs:?} dets {dets:?} tol {tol}"));
            }
            ap_cases += 1;
        }
    }
    check(
        worst_sinr <= 1e-9 && worst_evm <= 1e-9,
        format!("1000 maps: max rel err sinr {worst_sinr:.1e}, evm {worst_evm:.1e}; AP exact on {ap_cases} cases"),
    )
}

// ------------------------------------------------------------------- CFAR

fn cfar_calibration() -> Outcome {
    let cfg = RadarConfig::default();
    let params = CfarParams::default();
    let (rows, cols) = cfg.map_shape();
    let maps = 1_000_000usize.div_ceil(rows * cols);
    let alarms: usize = (0..maps as u64)
        .into_par_iter()
        .map(|i| {
            let map = range_doppler_map(&unit_noise_frame(&cfg, derive_seed(4, &[tag::NOISE, i])));
            ca_cfar(&map, &params).map(|p| p.len())
        })
        .sum::<rdlab::Result<usize>>()
        .map_err(err)?;
    let cells = maps * rows * cols;
    let rate = alarms as f64 / cells as f64;
    check(
        rate >= params.probability_false_alarm / 2.0 && rate <= params.probability_false_alarm * 2.0,
        format!(
            "{alarms} alarms on {cells} noise cells: Pfa {rate:.3e} (nominal {:.0e})",
            params.probability_false_alarm
        ),
    )
}

// ------------------------------------------------------------- mitigation

fn mitigation_ordering() -> Outcome {
    let sim = SceneSimulator::new(SceneSpec { seed: 21, ..SceneSpec::default() }).map_err(err)?;
    let settings = MitigationSettings::default();
    let levels = SINR_LEVELS_DB.len();
    let scored: Vec<Option<[(f64, f64); 3]>> = (0..200usize)
        .into_par_iter()
        .map(|i| -> rdlab::Result<_> {
            let (frame, level) = (i / levels, i % levels);
            let reference = sim.reference(0, frame)?;
            let Some(corruption) = sim.corrupt(&reference, 0, level, frame)? else {
                return Ok(None);
            };
            let mask = detect_interfered_samples(&corruption.frame, settings.k_sigma)?;
            let maps = [
                range_doppler_map(&corruption.frame),
                range_doppler_map(&zeroing(&corruption.frame, &mask)?),
                range_doppler_map(&imat(&corruption.frame, &mask, settings.imat)?),
            ];
            let mut out = [(0.0, 0.0); 3];
            for (slot, map) in out.iter_mut().zip(&maps) {
                let s = score_map(&sim, &reference, map)?;
                *slot = (s.sinr_db, s.evm);
            }
            Ok(Some(out))
        })
        .collect::<rdlab::Result<_>>()
        .map_err(err)?;
    let done: Vec<_> = scored.into_iter().flatten().collect();
    if done.len() < 200 {
        return Err(format!("only {} of 200 samples reached their SINR level", done.len()));
    }
    let med = |k: usize, sinr: bool| median(done.iter().map(|s| if sinr { s[k].0 } else { s[k].1 }).collect());
    let (corrupted, zero, im) = (med(0, true), med(1, true), med(2, true));
    let (evm_zero, evm_imat) = (med(1, false), med(2, false));
    check(
        im >= zero && zero >= corrupted && evm_imat <= evm_zero,
        format!(
            "200 samples, median SINR imat {im:.2} >= zeroing {zero:.2} >= corrupted {corrupted:.2} dB; \
             EVM imat {evm_imat:.3} <= zeroing {evm_zero:.3}"
        ),
    )
}

// ------------------------------------------------------------------- IMAT

fn imat_reconstruction() -> Outcome {
    let cfg = RadarConfig::default();
    let (n, m) = cfg.frame_shape();
    let masked = [5, 6, 7, 8, 40, 41, 42, 43];
    let mut worst = f64::NEG_INFINITY;
    for bin in [5.0, 9.37, 21.5] {
        let truth = Array2::from_shape_fn((n, m), |(i, _)| Complex64::from_polar(1.0, TAU * bin * i as f64 / n as f64));
        let mut mask = InterferenceMask::empty((n, m));
        for &r in &masked {
            mask.flags.row_mut(r).fill(true);
        }
        let frame = BeatFrame::new(truth.clone(), cfg, Provenance::Corrupted).map_err(err)?;
        let out = imat(&zeroing(&frame, &mask).map_err(err)?, &mask, ImatParams::default()).map_err(err)?;
        let e: f64 = out.samples().iter().zip(truth.iter()).map(|(a, b)| (a - b).norm_sqr()).sum();
        let s: f64 = truth.iter().map(|v| v.norm_sqr()).sum();
        worst = worst.max(10.0 * (e / s).log10());
    }
    check(worst <= -20.0, format!("8 of {n} fast-time samples masked; worst error {worst:.1} dB"))
}

// ---------------------------------------------------------------- dataset

fn dataset_bookkeeping(dir: &Path) -> Outcome {
    let scene = SceneSpec::default();
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let manifest = synthesize_dataset(&scene, dir, jobs).map_err(err)?;
    let count = |s: Split| manifest.split(s).count();
    let (train, val, test) = (count(Split::Train), count(Split::Val), count(Split::Test));

    let sim = SceneSimulator::new(manifest.header.scene.clone()).map_err(err)?;
    let reread = DatasetManifest::read_dir(dir).map_err(err)?;
    let worst = reread
        .samples
        .par_iter()
        .map(|s| -> rdlab::Result<f64> {
            let reference = sim.reference(s.sequence, s.frame_t)?;
            let stored = load_stored_map(dir, &reread, &s.files.t)?;
            Ok((sinr(&stored, &reference.objects, &reference.noise)? - s.sinr_db).abs())
        })
        .collect::<rdlab::Result<Vec<f64>>>()
        .map_err(err)?
        .into_iter()
        .fold(0.0, f64::max);
    let full_scale = augmented_frame_count(54_967, SINR_LEVELS_DB.len());
    check(
        manifest.samples.len() == 231
            && (train, val, test) == (139, 46, 46)
            && worst <= SINR_TOLERANCE_DB
            && full_scale == 384_769,
        format!(
            "{} samples split {train}/{val}/{test}, {} skipped; worst stored-SINR miss {worst:.3} dB; \
             54,967 x 7 -> {full_scale} frames",
            manifest.samples.len(),
            manifest.header.counts.skipped_samples
        ),
    )
}

// ----------------------------------------------------------------- format

fn format_error_offset(bytes: &[u8]) -> Option<u64> {
    match Cube::from_bytes(bytes) {
        Err(Error::Format { offset, .. }) => Some(offset),
        _ => None,
    }
}

fn format_checks(dataset: &Path) -> Outcome {
    let tmp = tempfile::tempdir().map_err(err)?;
    let mut rng = substream(8, &[]);
    let mut cube = Cube::new(CubeKind::Complex, 16, 8);
    for _ in 0..3 {
        cube.push_complex(&Array2::from_shape_fn((16, 8), |_| {
            Complex64::new(rng.random_range(-1e3..1e3), rng.random_range(-1e-3..1e-3))
        }))
        .map_err(err)?;
    }
    cube.frame_data_mut(1).map_err(err)?[5] = f32::from_bits(0x7fc0_0bad);
    cube.frame_data_mut(2).map_err(err)?[0] = f32::NEG_INFINITY;
    let path = tmp.path().join("c.rdc");
    write_rd_cube(&cube, &path).map_err(err)?;
    let back = read_rd_cube(&path).map_err(err)?;
    let bit_exact = back.to_bytes() == cube.to_bytes()
        && back.data().iter().zip(cube.data()).all(|(a, b)| a.to_bits() == b.to_bits());

    let good = cube.to_bytes();
    let corrupt = |at: usize, v: u8| {
        let mut b = good.clone();
        b[at] = v;
        b
    };
    let mut long = good.clone();
    long.extend_from_slice(&[0, 0]);
    let cases: [(Vec<u8>, u64); 6] = [
        (corrupt(1, b'X'), 0),
        (corrupt(4, 9), 4),
        (corrupt(8, 5), 8),
        (corrupt(12, 0), 12),
        (good[..good.len() - 3].to_vec(), (good.len() - 4) as u64),
        (long, good.len() as u64),
    ];
    let mut offsets_ok = true;
    for (bytes, expected) in &cases {
        offsets_ok &= format_error_offset(bytes) == Some(*expected);
    }

    // Classical outputs written to disk and scored as an external method.
    let settings = MitigationSettings::default();
    let mut external_gap = 0.0f64;
    for method in [EvalMethod::Zeroing, EvalMethod::Imat] {
        let out = tmp.path().join(method.label());
        let n = export_mitigated(dataset, &method, Some(Split::Test), &settings, &out).map_err(err)?;
        let direct = evaluate_dataset(dataset, &method, Some(Split::Test), &settings).map_err(err)?;
        let external =
            evaluate_dataset(dataset, &EvalMethod::External(out), Some(Split::Test), &settings).map_err(err)?;
        if n != direct.len() || external.len() != n {
            return Err(format!("{}: exported {n}, scored {}", method.label(), external.len()));
        }
        for (d, e) in direct.iter().zip(&external) {
            external_gap = external_gap.max((d.sinr_db.unwrap() - e.sinr_db.unwrap()).abs());
        }
    }
    check(
        bit_exact && offsets_ok && external_gap < 0.01,
        format!(
            "round trip bit-exact {bit_exact}; {} corruptions rejected at expected offsets {offsets_ok}; \
             external zeroing/imat maps rescored within {external_gap:.1e} dB",
            cases.len()
        ),
    )
}

// ------------------------------------------------------------------ driver

fn run(name: &str, limit: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = f();
    let elapsed = start.elapsed();
    let (ok, detail) = match outcome {
        Ok(d) if elapsed <= limit => (true, d),
        Ok(d) => (false, format!("{d}; over the {:.0} s budget", limit.as_secs_f64())),
        Err(d) => (false, d),
    };
    println!("{} {name}: {detail} [{:.1} s]", if ok { "PASS" } else { "FAIL" }, elapsed.as_secs_f64());
    ok
}

fn main() {
    let secs = Duration::from_secs;
    let dataset = tempfile::tempdir().expect("temp dir");
    let results = [
        run("physics oracle", secs(30), physics_oracle),
        run("scenario suite", secs(120), scenario_suite),
        run("metric oracles", secs(60), metric_oracles),
        run("CFAR calibration", secs(60), cfar_calibration),
        run("mitigation ordering", secs(300), mitigation_ordering),
        run("IMAT reconstruction", secs(5), imat_reconstruction),
        run("dataset bookkeeping", secs(300), || dataset_bookkeeping(dataset.path())),
        run("format", secs(60), || format_checks(dataset.path())),
    ];
    let failed = results.iter().filter(|ok| !**ok).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
