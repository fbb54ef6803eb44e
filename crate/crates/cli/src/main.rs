//! `rdlab`: simulate interfered FMCW frames, build datasets, run classical
//! mitigation, score methods and export plot data.
//!
//! Every subcommand accepts `--seed`, `--config` and `--out`. Subcommands
//! without randomness accept `--seed` and ignore it. Exit status is 0 on
//! success, 2 on bad arguments and 1 on runtime failure. `RDLAB_LOG` sets the
//! log filter (`warn` by default).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::de::DeserializeOwned;

use rdlab::dataset::{
    cube_from_frames, cube_from_maps, evaluate_dataset, export_mitigated, ingest_adc_cube, read_rd_cube,
    synthesize_dataset, write_rd_cube, Cube, CubeKind, EvalMethod, MitigationSettings, SceneSpec, Split, MANIFEST_FILE,
};
use rdlab::detection_metrics::{object_noise_cells, write_csv, write_jsonl, CfarParams};
use rdlab::link_budget::scale_to_sinr;
use rdlab::mitigation::{detect_interfered_samples, imat, zeroing, ImatParams, DEFAULT_K_SIGMA};
use rdlab::rd_pipeline::{range_doppler_map, to_db};
use rdlab::rng::{derive_seed, tag};
use rdlab::signal_model::{
    scenario_preset, scenario_target, superimpose, synthesize_clean_beat, synthesize_interference, SCENARIO_COUNT,
};
use rdlab::{BeatFrame, InterfererConfig, RadarConfig, Target};

#[derive(Parser)]
#[command(name = "rdlab", version, about = "FMCW radar interference lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one (optionally interfered) frame and write it as RDC1.
    Simulate(SimulateArgs),
    /// Generate an RD-map dataset with a JSONL manifest.
    SynthesizeDataset(SynthesizeArgs),
    /// Apply zeroing or IMAT to beat frames, or export mitigated dataset maps.
    Mitigate(MitigateArgs),
    /// Score a method on a dataset and write per-sample metrics.
    Evaluate(EvaluateArgs),
    /// Write one frame of a cube as a 16-bit PGM plus axis scales.
    ExportMap(ExportMapArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SimOutput {
    /// Complex N x M beat samples.
    Beat,
    /// dB magnitude range-Doppler map.
    RdDb,
}

#[derive(Args)]
struct SimulateArgs {
    /// Radar configuration JSON (defaults to the built-in victim).
    #[arg(long, conflicts_with = "scenario")]
    config: Option<PathBuf>,
    /// JSON array of targets.
    #[arg(long)]
    targets: Option<PathBuf>,
    /// Preset interference scenario; sets victim, aggressor and a default target.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=SCENARIO_COUNT as i64))]
    scenario: Option<u8>,
    /// JSON interferer, or array of interferers.
    #[arg(long)]
    interferer: Option<PathBuf>,
    /// Scale the interference so the RD-map SINR hits this value (dB).
    #[arg(long, allow_hyphen_values = true)]
    sinr: Option<f64>,
    /// Leave out receiver noise.
    #[arg(long)]
    no_noise: bool,
    #[arg(long, value_enum, default_value = "beat")]
    output: SimOutput,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthesizeArgs {
    /// Scene JSON; missing fields take their defaults.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Radar configuration JSON overriding the scene's radar.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, alias = "out")]
    out_dir: PathBuf,
    /// Worker threads (defaults to the available cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Overrides the scene seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    sequences: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum MitigationMethod {
    Zeroing,
    Imat,
}

#[derive(Args)]
struct MitigationFlags {
    /// Outlier threshold in robust standard deviations.
    #[arg(long, default_value_t = DEFAULT_K_SIGMA)]
    k_sigma: f64,
    /// IMAT iterations.
    #[arg(long, default_value_t = ImatParams::default().iterations)]
    iters: usize,
    /// IMAT threshold decay per iteration.
    #[arg(long, default_value_t = ImatParams::default().decay)]
    decay: f64,
}

impl MitigationFlags {
    fn settings(&self) -> MitigationSettings {
        MitigationSettings { k_sigma: self.k_sigma, imat: ImatParams { iterations: self.iters, decay: self.decay } }
    }
}

#[derive(Args)]
struct MitigateArgs {
    /// Complex beat cube, or a dataset directory.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum)]
    method: MitigationMethod,
    #[command(flatten)]
    flags: MitigationFlags,
    /// Radar configuration JSON for a beat cube.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset split to export when `--in` is a dataset.
    #[arg(long, default_value = "test")]
    split: SplitArg,
    /// Accepted for uniformity; mitigation is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output cube, or output directory for a dataset.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum EvalMethodArg {
    Corrupted,
    Reference,
    Zeroing,
    Imat,
    External,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
    All,
}

impl SplitArg {
    fn split(self) -> Option<Split> {
        match self {
            SplitArg::Train => Some(Split::Train),
            SplitArg::Val => Some(Split::Val),
            SplitArg::Test => Some(Split::Test),
            SplitArg::All => None,
        }
    }
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Defaults to `external` with `--denoised-dir`, else `imat`.
    #[arg(long, value_enum)]
    method: Option<EvalMethodArg>,
    /// Directory of `<sample_id>.rdc` one-frame dB maps.
    #[arg(long)]
    denoised_dir: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    split: SplitArg,
    #[command(flatten)]
    flags: MitigationFlags,
    /// Mitigation settings JSON; overrides the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Accepted for uniformity; evaluation is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV report.
    #[arg(long, alias = "out")]
    report: PathBuf,
    /// Also write the records as JSON lines.
    #[arg(long)]
    jsonl: Option<PathBuf>,
}

#[derive(Args)]
struct ExportMapArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 0)]
    frame: usize,
    #[arg(long, alias = "out")]
    out_pgm: PathBuf,
    /// CSV of range and velocity bin centres plus the dB scale.
    #[arg(long)]
    out_axes: Option<PathBuf>,
    /// Radar configuration JSON for axes and beat cubes.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Accepted for uniformity; export is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_interferers(path: &Path) -> Result<Vec<InterfererConfig>> {
    let value: serde_json::Value = read_json(path)?;
    let list = if value.is_array() { value } else { serde_json::Value::Array(vec![value]) };
    serde_json::from_value(list).with_context(|| format!("parsing {}", path.display()))
}

fn radar_config(path: Option<&Path>) -> Result<RadarConfig> {
    let cfg = match path {
        Some(p) => read_json(p)?,
        None => RadarConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let (cfg, mut interferers, mut targets) = match args.scenario {
        Some(id) => {
            let (victim, aggressor) = scenario_preset(id.into())?;
            (victim, vec![aggressor], vec![scenario_target()])
        }
        None => (radar_config(args.config.as_deref())?, Vec::new(), Vec::new()),
    };
    if let Some(path) = &args.targets {
        targets = read_json::<Vec<Target>>(path)?;
    }
    if let Some(path) = &args.interferer {
        interferers = read_interferers(path)?;
    }
    if let Some(db) = args.sinr {
        if interferers.is_empty() {
            bail!("--sinr needs an interferer (--scenario or --interferer)");
        }
        interferers[0].target_sinr_db = Some(db);
    }

    let noise_seed = derive_seed(args.seed, &[tag::NOISE]);
    let clean = synthesize_clean_beat(&cfg, &targets, noise_seed, !args.no_noise)?;
    let mut rendered = Vec::with_capacity(interferers.len());
    for aggressor in &interferers {
        let mut frame = synthesize_interference(&cfg, aggressor)?;
        if let Some(db) = aggressor.target_sinr_db {
            let reference = range_doppler_map(&clean);
            let (objects, noise) = object_noise_cells(&reference, &CfarParams::default(), 1)?;
            let s = scale_to_sinr(&reference, &frame, db, &objects, &noise)?;
            info!("interferer scaled by {s:.6e} for {db} dB SINR");
            frame = frame.scaled(s);
        }
        rendered.push(frame);
    }
    let frame = if rendered.is_empty() { clean } else { superimpose(&clean, &rendered)? };

    let cube = match args.output {
        SimOutput::Beat => cube_from_frames(std::slice::from_ref(&frame))?,
        SimOutput::RdDb => cube_from_maps(&[to_db(&range_doppler_map(&frame))?])?,
    };
    write_rd_cube(&cube, &args.out)?;
    info!("wrote {}", args.out.display());
    Ok(())
}

fn synthesize(args: SynthesizeArgs) -> Result<()> {
    let mut scene: SceneSpec = match &args.scene {
        Some(p) => read_json(p)?,
        None => SceneSpec::default(),
    };
    if let Some(p) = &args.config {
        scene.radar = read_json(p)?;
    }
    if let Some(seed) = args.seed {
        scene.seed = seed;
    }
    if let Some(n) = args.sequences {
        scene.sequences = n;
    }
    if let Some(n) = args.frames {
        scene.frames_per_sequence = n;
    }
    let jobs = match args.jobs {
        Some(0) => bail!("--jobs must be at least 1"),
        Some(j) => j,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let manifest = synthesize_dataset(&scene, &args.out_dir, jobs)?;
    println!("{}", serde_json::to_string(&manifest.header.counts)?);
    Ok(())
}

fn mitigate_frame(frame: &BeatFrame, method: MitigationMethod, settings: &MitigationSettings) -> Result<BeatFrame> {
    let mask = detect_interfered_samples(frame, settings.k_sigma)?;
    info!("{} of {} samples flagged", mask.count(), frame.samples().len());
    Ok(match method {
        MitigationMethod::Zeroing => zeroing(frame, &mask)?,
        MitigationMethod::Imat => imat(frame, &mask, settings.imat)?,
    })
}

fn mitigate(args: MitigateArgs) -> Result<()> {
    let settings = args.flags.settings();
    settings.imat.validate()?;
    if args.input.join(MANIFEST_FILE).is_file() {
        let method = match args.method {
            MitigationMethod::Zeroing => EvalMethod::Zeroing,
            MitigationMethod::Imat => EvalMethod::Imat,
        };
        let n = export_mitigated(&args.input, &method, args.split.split(), &settings, &args.out)?;
        info!("exported {n} maps to {}", args.out.display());
        return Ok(());
    }
    let cfg = radar_config(args.config.as_deref())?;
    let frames = ingest_adc_cube(&args.input, &cfg)?;
    let out = frames.iter().map(|f| mitigate_frame(f, args.method, &settings)).collect::<Result<Vec<_>>>()?;
    write_rd_cube(&cube_from_frames(&out)?, &args.out)?;
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let settings = match &args.config {
        Some(p) => read_json(p)?,
        None => args.flags.settings(),
    };
    let method_arg =
        args.method.unwrap_or(if args.denoised_dir.is_some() { EvalMethodArg::External } else { EvalMethodArg::Imat });
    let method = match (method_arg, &args.denoised_dir) {
        (EvalMethodArg::External, Some(dir)) => EvalMethod::External(dir.clone()),
        (EvalMethodArg::External, None) => bail!("--method external needs --denoised-dir"),
        (_, Some(_)) => bail!("--denoised-dir is only valid with --method external"),
        (EvalMethodArg::Corrupted, None) => EvalMethod::Corrupted,
        (EvalMethodArg::Reference, None) => EvalMethod::Reference,
        (EvalMethodArg::Zeroing, None) => EvalMethod::Zeroing,
        (EvalMethodArg::Imat, None) => EvalMethod::Imat,
    };
    let records = evaluate_dataset(&args.dataset, &method, args.split.split(), &settings)?;
    if records.is_empty() {
        bail!("no samples in the selected split");
    }
    write_csv(&records, BufWriter::new(File::create(&args.report)?))?;
    if let Some(p) = &args.jsonl {
        write_jsonl(&records, BufWriter::new(File::create(p)?))?;
    }
    let median = |f: fn(&rdlab::detection_metrics::MetricRecord) -> Option<f64>| {
        let mut v: Vec<f64> = records.iter().filter_map(f).collect();
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    println!(
        "{} samples={} median_sinr_db={:.3} median_evm={:.4} median_ap_percent={:.2}",
        method.label(),
        records.len(),
        median(|r| r.sinr_db),
        median(|r| r.evm),
        median(|r| r.ap_percent)
    );
    Ok(())
}

/// dB values of one frame: beat cubes are range-Doppler processed first.
fn frame_db(cube: &Cube, frame: usize, cfg: &RadarConfig) -> Result<ndarray::Array2<f64>> {
    match cube.kind() {
        CubeKind::Magnitude => Ok(cube.magnitude_frame(frame)?),
        CubeKind::Complex => {
            let beat = BeatFrame::new(cube.complex_frame(frame)?, *cfg, rdlab::Provenance::Recorded)?;
            let map = to_db(&range_doppler_map(&beat))?;
            Ok(map.magnitude_values().context("dB map without magnitudes")?.clone())
        }
    }
}

fn export_map(args: ExportMapArgs) -> Result<()> {
    let cfg = radar_config(args.config.as_deref())?;
    let cube = read_rd_cube(&args.input)?;
    if args.frame >= cube.frame_count() {
        bail!("frame {} out of range ({} frames)", args.frame, cube.frame_count());
    }
    let db = frame_db(&cube, args.frame, &cfg)?;
    let (lo, hi) = db.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    let (rows, cols) = db.dim();

    let mut pgm = BufWriter::new(File::create(&args.out_pgm)?);
    write!(pgm, "P5\n{cols} {rows}\n65535\n")?;
    for &v in db.iter() {
        let level = if span > 0.0 { ((v - lo) / span * 65535.0).round() as u16 } else { 0 };
        pgm.write_all(&level.to_be_bytes())?;
    }
    pgm.flush()?;

    if let Some(path) = &args.out_axes {
        let mut csv = BufWriter::new(File::create(path)?);
        writeln!(csv, "axis,bin,value")?;
        for p in 0..rows {
            writeln!(csv, "range_m,{p},{}", p as f64 * cfg.range_bin_m())?;
        }
        for q in 0..cols {
            let v = (q as f64 - (cols / 2) as f64) * cfg.velocity_bin_mps();
            writeln!(csv, "velocity_mps,{q},{v}")?;
        }
        writeln!(csv, "db_black,0,{lo}")?;
        writeln!(csv, "db_white,0,{hi}")?;
        csv.flush()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::SynthesizeDataset(a) => synthesize(a),
        Command::Mitigate(a) => mitigate(a),
        Command::Evaluate(a) => evaluate(a),
        Command::ExportMap(a) => export_map(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RDLAB_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
