use ndarray::Array2;
use num_complex::Complex64;
use proptest::prelude::*;

use rdlab::dataset::{clutter_filter, ClutterMask, Cube, CubeKind, SINR_LEVELS_DB};
use rdlab::detection_metrics::{average_precision, ca_cfar, evm, object_noise_cells, sinr, CfarParams, PeakList};
use rdlab::link_budget::{scale_to_sinr, SinrCurve};
use rdlab::mitigation::{imat, ImatParams, InterferenceMask};
use rdlab::rd_pipeline::{argmax, denormalize, expected_peak_bin, normalize, range_doppler_map, to_db, RdMap, Scale};
use rdlab::signal_model::{
    frequency_difference_hz, scenario_preset, scenario_target, superimpose, synthesize_clean_beat,
    synthesize_interference,
};
use rdlab::{BeatFrame, InterfererConfig, Provenance, RadarConfig, Target};

fn cfg() -> RadarConfig {
    RadarConfig::default()
}

fn target() -> impl Strategy<Value = Target> {
    let c = cfg();
    let r_max = 0.95 * c.max_unambiguous_range_m();
    let v_max = 0.95 * c.max_unambiguous_velocity_mps();
    (1.0..r_max, -v_max..v_max, 0.5..30.0).prop_map(|(r, v, s)| Target::new(r, v, s))
}

fn interferer() -> impl Strategy<Value = InterfererConfig> {
    (76.5e9..77.5e9, 50e6..400e6, 5e-6..40e-6, 2.0..80.0, -20.0..20.0, 0.0..50e-6).prop_map(|(f, b, t, d, v, off)| {
        InterfererConfig {
            carrier_freq_hz: f,
            sweep_bandwidth_hz: b,
            sweep_duration_s: t,
            distance_m: d,
            radial_velocity_mps: v,
            time_offset_s: off,
            amplitude_scale: 1.0,
            target_sinr_db: None,
        }
    })
}

fn noise_map(seed: u64) -> RdMap {
    range_doppler_map(&synthesize_clean_beat(&cfg(), &[], seed, true).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn clean_beat_is_linear_in_targets(a in prop::collection::vec(target(), 1..4), b in prop::collection::vec(target(), 1..4)) {
        let c = cfg();
        let both: Vec<Target> = a.iter().chain(&b).copied().collect();
        let fa = synthesize_clean_beat(&c, &a, 0, false).unwrap();
        let fb = synthesize_clean_beat(&c, &b, 0, false).unwrap();
        let fab = synthesize_clean_beat(&c, &both, 0, false).unwrap();
        let sum = superimpose(&fa, &[fb]).unwrap();
        let scale = fab.samples().iter().map(|v| v.norm()).fold(0.0, f64::max);
        for (x, y) in fab.samples().iter().zip(sum.samples()) {
            prop_assert!((x - y).norm() <= 1e-12 * scale);
        }
    }

    #[test]
    fn synthesis_is_deterministic(t in prop::collection::vec(target(), 0..3), i in interferer(), seed in any::<u64>()) {
        let c = cfg();
        prop_assert_eq!(synthesize_clean_beat(&c, &t, seed, true).unwrap(), synthesize_clean_beat(&c, &t, seed, true).unwrap());
        prop_assert_eq!(synthesize_interference(&c, &i).unwrap(), synthesize_interference(&c, &i).unwrap());
    }

    #[test]
    fn interference_respects_if_band(i in interferer()) {
        let c = cfg();
        let frame = synthesize_interference(&c, &i).unwrap();
        let ts = c.sample_period_s();
        for ((n, m), v) in frame.samples().indexed_iter() {
            if v.norm() > 0.0 {
                let t = m as f64 * c.chirp_repetition_s + n as f64 * ts;
                let df = frequency_difference_hz(&c, &i, t);
                prop_assert!(df.is_some_and(|d| d.abs() <= 0.5 * c.sampling_freq_hz), "({n},{m}) {df:?}");
            }
        }
    }

    #[test]
    fn single_target_peaks_at_expected_bin(t in target()) {
        let c = cfg();
        let (p, q) = argmax(&range_doppler_map(&synthesize_clean_beat(&c, &[t], 0, false).unwrap()));
        let (ep, eq) = expected_peak_bin(&c, &t).unwrap();
        let (rows, cols) = c.map_shape();
        prop_assert!(p.abs_diff(ep).min(rows - p.abs_diff(ep)) <= 1);
        prop_assert!(q.abs_diff(eq).min(cols - q.abs_diff(eq)) <= 1);
    }

    /// Non-increasing from zero up to the scale that reaches the lowest
    /// feasible grid level. Beyond that the curve tends to the
    /// interference's own object/noise ratio and may turn back up.
    #[test]
    fn sinr_falls_with_interference_scale(id in prop::sample::select(vec![2usize, 3, 4, 6, 7]), seed in 0u64..1000) {
        let (c, aggressor) = scenario_preset(id).unwrap();
        let clean = range_doppler_map(&synthesize_clean_beat(&c, &[scenario_target()], seed, true).unwrap());
        let (o, n) = object_noise_cells(&clean, &CfarParams::default(), 1).unwrap();
        let unit = range_doppler_map(&synthesize_interference(&c, &aggressor).unwrap());
        let curve = SinrCurve::new(&clean, &unit, &o, &n).unwrap();
        let Some(s_max) = SINR_LEVELS_DB.iter().find_map(|&db| curve.solve(db).ok()) else {
            return Ok(());
        };
        let mut last = curve.sinr_db(0.0);
        for k in 0..=400 {
            let s = s_max * 10f64.powf(-6.0 + 6.0 * k as f64 / 400.0);
            let v = curve.sinr_db(s);
            prop_assert!(v <= last + 1e-9, "scale {s}: {v} after {last}");
            last = v;
        }
    }

    #[test]
    fn scale_to_sinr_round_trips(seed in 0u64..1000, margin in 3.0f64..20.0) {
        let (c, aggressor) = scenario_preset(3).unwrap();
        let clean_frame = synthesize_clean_beat(&c, &[scenario_target()], seed, true).unwrap();
        let clean = range_doppler_map(&clean_frame);
        let (o, n) = object_noise_cells(&clean, &CfarParams::default(), 1).unwrap();
        let goal = sinr(&clean, &o, &n).unwrap() - margin;
        let unit = synthesize_interference(&c, &aggressor).unwrap();
        let s = scale_to_sinr(&clean, &unit, goal, &o, &n).unwrap();
        let corrupted = range_doppler_map(&superimpose(&clean_frame, &[unit.scaled(s)]).unwrap());
        prop_assert!((sinr(&corrupted, &o, &n).unwrap() - goal).abs() < 1e-2);
    }

    #[test]
    fn cfar_ignores_global_gain(seed in any::<u64>(), exp in -20i32..20) {
        let map = noise_map(seed);
        let gain = 2f64.powi(exp);
        let scaled = RdMap::from_complex(map.complex_values().unwrap().mapv(|v| v * gain), cfg()).unwrap();
        let a: Vec<_> = ca_cfar(&map, &CfarParams::default()).unwrap().cells().collect();
        let b: Vec<_> = ca_cfar(&scaled, &CfarParams::default()).unwrap().cells().collect();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn evm_is_zero_on_identity_and_nonnegative(seed in any::<u64>(), other in any::<u64>()) {
        let clean_frame = synthesize_clean_beat(&cfg(), &[scenario_target()], seed, true).unwrap();
        let clean = range_doppler_map(&clean_frame);
        let (o, _) = object_noise_cells(&clean, &CfarParams::default(), 1).unwrap();
        prop_assert_eq!(evm(&clean, &clean, &o).unwrap(), 0.0);
        let test = noise_map(other);
        prop_assert!(evm(&clean, &test, &o).unwrap() >= 0.0);
    }

    #[test]
    fn object_and_noise_cells_are_disjoint(targets in prop::collection::vec(target(), 1..4), seed in any::<u64>()) {
        let map = range_doppler_map(&synthesize_clean_beat(&cfg(), &targets, seed, true).unwrap());
        if let Ok((o, n)) = object_noise_cells(&map, &CfarParams::default(), 1) {
            prop_assert!(o.iter().all(|c| !n.contains(c)));
            let (rows, cols) = map.dim();
            prop_assert!(o.len() + n.len() <= rows * cols);
        }
    }

    #[test]
    fn imat_keeps_unmasked_samples(seed in any::<u64>(), flags in prop::collection::vec(any::<bool>(), 64 * 128)) {
        let frame = synthesize_clean_beat(&cfg(), &[scenario_target()], seed, true).unwrap();
        let mut mask = InterferenceMask::empty(frame.dim());
        mask.flags = Array2::from_shape_vec(frame.dim(), flags).unwrap();
        let out = imat(&frame, &mask, ImatParams::default()).unwrap();
        for ((x, y), f) in frame.samples().iter().zip(out.samples()).zip(mask.flags.iter()) {
            if !f {
                prop_assert_eq!(x, y);
            }
        }
    }

    #[test]
    fn clutter_filter_is_local(seed in any::<u64>(), range_bins in 0usize..4, half_width in 0usize..3) {
        let map = noise_map(seed);
        let mask = ClutterMask { range_bins, doppler_half_width: half_width };
        let filtered = clutter_filter(&map, &mask).unwrap();
        let (a, b) = (map.complex_values().unwrap(), filtered.complex_values().unwrap());
        for ((idx, x), y) in a.indexed_iter().zip(b.iter()) {
            if !mask.contains(idx, map.dim()) {
                prop_assert_eq!(x, y);
            }
        }
    }

    #[test]
    fn normalization_inverts(seed in any::<u64>()) {
        let db = to_db(&noise_map(seed)).unwrap();
        let back = denormalize(&normalize(&db, None).unwrap()).unwrap();
        for (x, y) in db.magnitude_values().unwrap().iter().zip(back.magnitude_values().unwrap()) {
            prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn ap_is_bounded_and_monotone_in_tolerance(
        refs in prop::collection::vec((0usize..16, 0usize..16), 1..8),
        dets in prop::collection::vec((0usize..16, 0usize..16), 0..10),
    ) {
        let (r, d) = (PeakList::from_cells(refs), PeakList::from_cells(dets));
        let mut last = 0.0;
        for tol in 0..5 {
            let ap = average_precision(&r, &d, tol).unwrap();
            prop_assert!((0.0..=100.0).contains(&ap));
            prop_assert!(ap >= last);
            last = ap;
        }
    }

    #[test]
    fn sinr_ignores_global_gain(seed in 0u64..64, gain in 1e-6f64..1e6) {
        let clean = range_doppler_map(&synthesize_clean_beat(&cfg(), &[scenario_target()], seed, true).unwrap());
        let (o, n) = object_noise_cells(&clean, &CfarParams::default(), 1).unwrap();
        let scaled = RdMap::from_complex(clean.complex_values().unwrap().mapv(|v| v * gain), cfg()).unwrap();
        prop_assert!((sinr(&clean, &o, &n).unwrap() - sinr(&scaled, &o, &n).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn cube_round_trip_is_bit_exact(
        dims in (1usize..9, 1usize..9),
        bits in prop::collection::vec(any::<u32>(), 0..4 * 64),
        complex in any::<bool>(),
    ) {
        let (d0, d1) = dims;
        let kind = if complex { CubeKind::Complex } else { CubeKind::Magnitude };
        let per_frame = d0 * d1 * if complex { 2 } else { 1 };
        let frames = bits.len() / per_frame;
        let mut cube = Cube::new(kind, d0, d1);
        for f in 0..frames {
            if complex {
                cube.push_complex(&Array2::from_elem((d0, d1), Complex64::new(0.0, 0.0))).unwrap();
            } else {
                cube.push_magnitude(&Array2::zeros((d0, d1))).unwrap();
            }
            let chunk = &bits[f * per_frame..(f + 1) * per_frame];
            for (slot, b) in cube.frame_data_mut(f).unwrap().iter_mut().zip(chunk) {
                *slot = f32::from_bits(*b);
            }
        }
        let bytes = cube.to_bytes();
        let back = Cube::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.kind(), kind);
        prop_assert_eq!(back.frame_count(), frames);
        prop_assert_eq!(back.to_bytes(), bytes);
    }
}

#[test]
fn magnitude_map_sinr_matches_complex() {
    let clean = range_doppler_map(&synthesize_clean_beat(&cfg(), &[scenario_target()], 9, true).unwrap());
    let (o, n) = object_noise_cells(&clean, &CfarParams::default(), 1).unwrap();
    let mag = RdMap::from_magnitude(clean.complex_values().unwrap().mapv(|v| v.norm()), Scale::Linear, cfg()).unwrap();
    let db = to_db(&clean).unwrap();
    let a = sinr(&clean, &o, &n).unwrap();
    assert!((a - sinr(&mag, &o, &n).unwrap()).abs() < 1e-9);
    assert!((a - sinr(&db, &o, &n).unwrap()).abs() < 1e-6);
}

#[test]
fn recorded_frames_keep_provenance() {
    let frame = BeatFrame::zeros(cfg(), Provenance::Recorded);
    assert_eq!(frame.provenance(), Provenance::Recorded);
}
