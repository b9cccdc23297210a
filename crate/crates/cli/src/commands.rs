use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;

use evstack_cgan::data::{toy_pairs, ToyDataSpec};
use evstack_cgan::{Checkpoint, Generator, TrainConfig};
use evstack_core::dataset::{
    build_pairs, filter_blurred, format_pair_manifest, pair_file_names, parse_pair_manifest, PairConfig, PairEntry,
    PairMode, TrainingPair, DEFAULT_SATURATION_HIGH, DEFAULT_SATURATION_LOW,
};
use evstack_core::events::{
    format_frame_index, format_text_events, load_aps_sequence, parse_text_events, read_binary, write_binary, ApsFrame,
    EventStream, Micros, BINARY_MAGIC,
};
use evstack_core::image::GrayImage;
use evstack_core::metrics::psnr::Psnr;
use evstack_core::metrics::{evaluate_pair, match_closest_timestamp, mean_std, BrisqueModel, BrisqueResult, MetricError};
use evstack_core::simulator::{generate_events, hdr_scene_report, Motion, Pattern, SceneSpec, SimConfig};
use evstack_core::stacking::{normalize_stack, render_pseudo_color, sbe_stack, sbt_stack, NormalizedStack};
use evstack_core::video::{plan_for_stream, IncrementalStacker, StackMode, VideoError};

use crate::error::CliError;
use crate::output::{ensure_dir, write_atomic};
use crate::settings::Settings;
use crate::{EvaluateArgs, InferArgs, ModeArgs, PrepArgs, SimulateArgs, StackArgs, StreamArgs, TrainArgs, VideoArgs};

const RUN_MANIFEST: &str = "run_manifest.txt";

fn load_stream(s: &mut Settings, a: &StreamArgs) -> Result<EventStream, CliError> {
    let path = s.path("events", a.events.clone())?;
    let bytes = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
    if bytes.starts_with(BINARY_MAGIC) {
        let stream = read_binary(&bytes)?;
        s.note("width", stream.width());
        s.note("height", stream.height());
        return Ok(stream);
    }
    let width = s.required("width", a.width)?;
    let height = s.required("height", a.height)?;
    let text = String::from_utf8(bytes).map_err(|_| CliError::new("MalformedLine", "event file is not UTF-8 text"))?;
    Ok(parse_text_events(&text, width, height)?)
}

enum Mode {
    Sbt { n: usize },
    Sbe { n: usize, events_per_frame: usize },
}

fn resolve_mode(s: &mut Settings, a: &ModeArgs) -> Result<Mode, CliError> {
    let mode: String = s.value("mode", a.mode.clone(), "sbt".to_string())?;
    let n = s.value("n", a.n, 3)?;
    match mode.as_str() {
        "sbt" => Ok(Mode::Sbt { n }),
        "sbe" => Ok(Mode::Sbe {
            n,
            events_per_frame: s.required("events_per_frame", a.events_per_frame)?,
        }),
        other => Err(CliError::usage(format!("--mode must be sbt or sbe, got {other:?}"))),
    }
}

fn finish(dir: &Path, s: &Settings, command: &str) -> Result<(), CliError> {
    write_atomic(&dir.join(RUN_MANIFEST), s.manifest(command).as_bytes())
}

pub fn stack(a: StackArgs, mut s: Settings) -> Result<(), CliError> {
    let stream = load_stream(&mut s, &a.stream)?;
    let mode = resolve_mode(&mut s, &a.mode)?;
    let out = s.path("out", a.out)?;
    let stack = match mode {
        Mode::Sbt { n } => {
            let span = stream.span().unwrap_or((0, 0));
            let t0 = s.value("t_start_us", a.t_start_us, span.0)?;
            let t1 = s.value("t_end_us", a.t_end_us, span.1 + 1)?;
            sbt_stack(&stream, t0, t1, n)?
        }
        Mode::Sbe { n, events_per_frame } => {
            let start = s.value("start_index", a.start_index, 0)?;
            sbe_stack(&stream, start, events_per_frame, n)?
        }
    };
    ensure_dir(&out)?;
    write_atomic(&out.join("stack.evns"), &normalize_stack(&stack).to_blob())?;
    write_atomic(&out.join("preview.ppm"), &render_pseudo_color(&stack).to_ppm_bytes())?;
    let mut sums = String::from("# frame net_polarity_sum max_abs\n");
    for i in 0..stack.n() {
        let f = stack.frame(i);
        let net: i64 = f.iter().map(|&v| v as i64).sum();
        let peak = f.iter().map(|v| v.unsigned_abs()).max().unwrap_or(0);
        writeln!(sums, "{i} {net} {peak}").unwrap();
    }
    write_atomic(&out.join("frames.txt"), sums.as_bytes())?;
    s.note("events_in_stream", stream.len());
    finish(&out, &s, "stack")
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Emit {
    None,
    Blobs,
    Ppm,
    Pgm,
}

pub fn video(a: VideoArgs, mut s: Settings, workers: usize) -> Result<(), CliError> {
    let stream = load_stream(&mut s, &a.stream)?;
    let mode = match resolve_mode(&mut s, &a.mode)? {
        Mode::Sbt { n } => StackMode::Sbt {
            window: s.required("window_us", a.window_us)?,
            n,
        },
        Mode::Sbe { n, events_per_frame } => StackMode::Sbe { events_per_frame, n },
    };
    let shift = s.required("shift_us", a.shift_us)?;
    let out = s.path("out", a.out)?;
    let checkpoint = s.optional_path("checkpoint", a.checkpoint)?;
    let emit = match (checkpoint.is_some(), s.value("emit", a.emit, "blobs".to_string())?.as_str()) {
        (true, _) => Emit::Pgm,
        (false, "none") => Emit::None,
        (false, "blobs") => Emit::Blobs,
        (false, "ppm") => Emit::Ppm,
        (false, other) => return Err(CliError::usage(format!("--emit must be none, blobs or ppm, got {other:?}"))),
    };
    let seed = s.value("seed", a.seed, 0u64)?;
    let generator: Option<Generator> = match &checkpoint {
        Some(p) => {
            let ck = Checkpoint::load(p)?;
            if ck.generator.n != mode.n() {
                return Err(CliError::new(
                    "ShapeMismatch",
                    format!("checkpoint expects n={}, video uses n={}", ck.generator.n, mode.n()),
                ));
            }
            Some(ck.generator)
        }
        None => None,
    };
    let plan = plan_for_stream(&stream, mode, shift)?;
    ensure_dir(&out)?;
    let mut manifest = String::from("# index t_end_us file\n");
    let mut skipped = 0usize;
    // Contiguous chunks per worker, processed block by block to bound memory.
    let block = 256 * workers;
    let mut start = 0;
    while start < plan.len() {
        let end = (start + block).min(plan.len());
        let per = (end - start).div_ceil(workers).max(1);
        let ranges: Vec<(usize, usize)> = (start..end).step_by(per).map(|b| (b, (b + per).min(end))).collect();
        let results: Vec<_> = ranges
            .into_par_iter()
            .map(|(b, e)| IncrementalStacker::with_range(&stream, &plan, b, e).collect::<Vec<_>>())
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect();
        let rendered: Vec<Result<Option<(String, Vec<u8>)>, CliError>> = results
            .into_par_iter()
            .map(|(spec, r)| match r {
                Ok(stack) => {
                    let k = spec.index;
                    Ok(Some(match emit {
                        Emit::None => ("-".to_string(), Vec::new()),
                        Emit::Blobs => (format!("window_{k:06}.evns"), normalize_stack(&stack).to_blob()),
                        Emit::Ppm => (format!("window_{k:06}.ppm"), render_pseudo_color(&stack).to_ppm_bytes()),
                        Emit::Pgm => {
                            let g = generator.as_ref().unwrap();
                            let img = evstack_cgan::infer(g, &normalize_stack(&stack), seed)?;
                            (format!("frame_{k:06}.pgm"), img.to_pgm_bytes())
                        }
                    }))
                }
                Err(VideoError::InsufficientEvents { .. }) => Ok(None),
                Err(e) => Err(e.into()),
            })
            .collect();
        for (k, r) in (start..end).zip(rendered) {
            match r? {
                Some((name, bytes)) => {
                    if emit != Emit::None {
                        write_atomic(&out.join(&name), &bytes)?;
                    }
                    writeln!(manifest, "{k} {} {name}", plan.window(k).t_end).unwrap();
                }
                None => skipped += 1,
            }
        }
        start = end;
    }
    if skipped > 0 {
        warn!("{skipped} windows skipped for lack of events");
    }
    write_atomic(&out.join("windows.txt"), manifest.as_bytes())?;
    s.note("frame_rate", plan.frame_rate());
    s.note("windows_planned", plan.len());
    s.note("windows_skipped", skipped);
    if let Some(o) = plan.overlap() {
        s.note("overlap_us", o);
    }
    finish(&out, &s, "video")
}

pub fn simulate(a: SimulateArgs, mut s: Settings) -> Result<(), CliError> {
    let d = SceneSpec::default();
    let pattern_name: String = s.value("pattern", a.pattern, "checkerboard".to_string())?;
    let pattern = match pattern_name.as_str() {
        "checkerboard" => Pattern::Checkerboard {
            cell: s.value("cell", a.cell, 8.0)?,
        },
        "gradient" => Pattern::Gradient,
        "star" => Pattern::Star {
            arms: s.value("arms", a.arms, 8)?,
        },
        other => return Err(CliError::usage(format!("unknown pattern {other:?}"))),
    };
    let motion_name: String = s.value("motion", a.motion, "translate".to_string())?;
    let motion = match motion_name.as_str() {
        "static" => Motion::Static,
        "translate" => Motion::Translate {
            vx: s.value("vx", a.vx, 200.0)?,
            vy: s.value("vy", a.vy, 80.0)?,
        },
        "rotate" => Motion::Rotate {
            rpm: s.value("rpm", a.rpm, 60.0)?,
        },
        other => return Err(CliError::usage(format!("unknown motion {other:?}"))),
    };
    let spec = SceneSpec {
        pattern,
        motion,
        low: s.value("low", a.low, d.low)?,
        high: s.value("high", a.high, d.high)?,
        radiance_scale: s.value("radiance_scale", a.radiance_scale, d.radiance_scale)?,
        duration: s.value("duration_us", a.duration_us, d.duration)?,
        width: s.value("width", a.width, d.width)?,
        height: s.value("height", a.height, d.height)?,
        seed: s.value("seed", a.seed, d.seed)?,
    };
    let dc = SimConfig::default();
    let config = SimConfig {
        contrast_threshold: s.value("contrast_threshold", a.contrast_threshold, dc.contrast_threshold)?,
        sampling_step: s.value("sampling_step_us", a.sampling_step_us, dc.sampling_step)?,
        frame_interval: s.value("frame_interval_us", a.frame_interval_us, dc.frame_interval)?,
    };
    let format: String = s.value("format", a.format, "text".to_string())?;
    let out = s.path("out", a.out)?;
    let (events_name, encode): (&str, fn(&EventStream) -> Result<Vec<u8>, CliError>) = match format.as_str() {
        "text" => ("events.txt", |st| Ok(format_text_events(st).into_bytes())),
        "binary" => ("events.bin", |st| Ok(write_binary(st)?)),
        other => return Err(CliError::usage(format!("--format must be text or binary, got {other:?}"))),
    };
    let sim = generate_events(&spec, &config)?;
    ensure_dir(&out)?;
    write_atomic(&out.join(events_name), &encode(&sim.stream)?)?;
    write_atomic(&out.join("scene.txt"), spec.to_manifest().as_bytes())?;
    write_frames(&out.join("aps"), &sim.aps_frames)?;
    write_frames(&out.join("gt"), &sim.gt_frames)?;
    let mut report = String::from("# kind pixels aps_variance event_count\n");
    for r in hdr_scene_report(&sim) {
        writeln!(report, "{:?} {} {} {}", r.kind, r.pixels.len(), r.aps_variance, r.event_count).unwrap();
    }
    write_atomic(&out.join("hdr_report.txt"), report.as_bytes())?;
    s.note("events", sim.stream.len());
    s.note("frames", sim.gt_frames.len());
    finish(&out, &s, "simulate")
}

fn write_frames(dir: &Path, frames: &[ApsFrame]) -> Result<(), CliError> {
    ensure_dir(dir)?;
    let mut index = Vec::with_capacity(frames.len());
    for (k, f) in frames.iter().enumerate() {
        let name = format!("frame_{k:06}.pgm");
        write_atomic(&dir.join(&name), &f.image.to_pgm_bytes())?;
        index.push((f.t, name));
    }
    write_atomic(&dir.join("index.txt"), format_frame_index(&index).as_bytes())
}

fn load_frames(s: &mut Settings, dir_key: &str, dir: Option<PathBuf>, index_key: &str, index: Option<PathBuf>) -> Result<Vec<ApsFrame>, CliError> {
    let dir = s.path(dir_key, dir)?;
    let index = s.value(index_key, index.map(|p| p.display().to_string()), dir.join("index.txt").display().to_string())?;
    Ok(load_aps_sequence(&dir, Path::new(&index))?)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("na".to_string(), |v| format!("{v:.6}"))
}

pub fn evaluate(a: EvaluateArgs, mut s: Settings) -> Result<(), CliError> {
    let gt = load_frames(&mut s, "gt_dir", a.gt_dir, "gt_index", a.gt_index)?;
    let recon = load_frames(&mut s, "recon_dir", a.recon_dir, "recon_index", a.recon_index)?;
    let model = match s.optional_path("brisque_model", a.brisque_model)? {
        Some(p) => Some(BrisqueModel::load(&p)?),
        None => None,
    };
    let out = s.path("out", a.out)?;
    if gt.is_empty() || recon.is_empty() {
        return Err(CliError::new("EmptyList", "no frames to evaluate"));
    }
    let recon_pairs: Vec<(Micros, GrayImage)> = recon.iter().map(|f| (f.t, f.image.clone())).collect();
    let matches = match_closest_timestamp(&gt, &recon_pairs)?;
    let reports = matches
        .par_iter()
        .map(|&(gi, ri)| evaluate_pair(&gt[gi].image, &recon[ri].image, model.as_ref()))
        .collect::<Result<Vec<_>, _>>()?;
    let mut text = String::from("# gt recon t_gt_us t_recon_us psnr_db ssim fsim brisque\n");
    let (mut psnrs, mut ssims, mut fsims, mut brisques) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut identical = 0usize;
    for (&(gi, ri), r) in matches.iter().zip(&reports) {
        match r.psnr {
            Psnr::Db(v) => psnrs.push(v),
            Psnr::Identical => identical += 1,
        }
        ssims.extend(r.ssim);
        fsims.extend(r.fsim);
        let b = match r.brisque {
            Some(BrisqueResult::Score(v)) => {
                brisques.push(v);
                format!("{v:.6}")
            }
            Some(BrisqueResult::FeaturesOnly) => "no_model".to_string(),
            None => "na".to_string(),
        };
        writeln!(
            text,
            "{gi} {ri} {} {} {} {} {} {b}",
            gt[gi].t,
            recon[ri].t,
            r.psnr,
            fmt_opt(r.ssim),
            fmt_opt(r.fsim)
        )
        .unwrap();
    }
    for (name, v) in [("psnr_db", &psnrs), ("ssim", &ssims), ("fsim", &fsims), ("brisque", &brisques)] {
        if v.is_empty() {
            writeln!(text, "# {name} mean=na std=na count=0").unwrap();
        } else {
            let (m, sd) = mean_std(v);
            writeln!(text, "# {name} mean={m:.6} std={sd:.6} count={}", v.len()).unwrap();
        }
    }
    writeln!(text, "# psnr_identical={identical}").unwrap();
    if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    write_atomic(&out, text.as_bytes())?;
    let manifest_path = out.with_extension("manifest.txt");
    write_atomic(&manifest_path, s.manifest("evaluate").as_bytes())
}

pub fn prep(a: PrepArgs, mut s: Settings) -> Result<(), CliError> {
    let stream = load_stream(&mut s, &a.stream)?;
    let mode = match resolve_mode(&mut s, &a.mode)? {
        Mode::Sbt { n } => PairMode::Sbt { n },
        Mode::Sbe { n, events_per_frame } => PairMode::Sbe { events_per_frame, n },
    };
    let frames = load_frames(&mut s, "aps_dir", a.aps_dir, "aps_index", a.aps_index)?;
    let threshold: String = s.required("blur_threshold", a.blur_threshold)?;
    let model = match s.optional_path("brisque_model", a.brisque_model)? {
        Some(p) => match BrisqueModel::load(&p) {
            Ok(m) => Some(m),
            Err(MetricError::ModelMissing(p)) => {
                warn!("BRISQUE model {} not found; scoring blur with the feature proxy", p.display());
                s.note("brisque_model_missing", "true");
                None
            }
            Err(e) => return Err(e.into()),
        },
        None => None,
    };
    let low = s.value("saturation_low", a.saturation_low, DEFAULT_SATURATION_LOW)?;
    let high = s.value("saturation_high", a.saturation_high, DEFAULT_SATURATION_HIGH)?;
    let hdr = s.value("hdr_refine", a.hdr_refine, true)?;
    let out = s.path("out", a.out)?;
    ensure_dir(&out)?;

    let (kept, blur_filtered) = if threshold == "off" {
        (frames, false)
    } else {
        let t: f64 = threshold
            .parse()
            .map_err(|_| CliError::usage(format!("--blur-threshold must be a number or `off`, got {threshold:?}")))?;
        let report = filter_blurred(&frames, t, model.as_ref())?;
        let mut text = format!("# source={:?} threshold={t}\n# t_us score kept\n", report.source);
        for (f, sc) in frames.iter().zip(&report.scores) {
            writeln!(text, "{} {sc:.6} {}", f.t, (*sc <= t) as u8).unwrap();
        }
        text.push_str(&score_histogram(&report.scores));
        write_atomic(&out.join("blur_scores.txt"), text.as_bytes())?;
        info!("blur filter kept {} of {} frames", report.kept.len(), frames.len());
        (report.kept, true)
    };
    let config = PairConfig {
        mode,
        saturation: hdr.then_some((low, high)),
        blur_filtered,
    };
    let set = build_pairs(&stream, &kept, &config)?;
    let mut entries = Vec::with_capacity(set.pairs.len());
    for (k, p) in set.pairs.iter().enumerate() {
        let (input, target) = pair_file_names(k);
        write_atomic(&out.join(&input), &p.input.to_blob())?;
        write_atomic(&out.join(&target), &p.target.to_pgm_bytes())?;
        entries.push(PairEntry {
            t: p.t,
            input,
            target,
            flags: p.flags,
        });
    }
    write_atomic(&out.join("pairs.txt"), format_pair_manifest(&entries).as_bytes())?;
    s.note("frames_kept", kept.len());
    s.note("pairs", set.pairs.len());
    s.note("pairs_skipped", set.skipped.len());
    finish(&out, &s, "prep")
}

/// Ten equal-width bins between the smallest and largest score.
fn score_histogram(scores: &[f64]) -> String {
    let finite: Vec<f64> = scores.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return String::new();
    }
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = ((hi - lo) / 10.0).max(f64::MIN_POSITIVE);
    let mut bins = [0usize; 10];
    for v in finite {
        bins[(((v - lo) / width) as usize).min(9)] += 1;
    }
    let mut out = String::from("# histogram bin_start count\n");
    for (i, c) in bins.iter().enumerate() {
        writeln!(out, "# {:.6} {c}", lo + i as f64 * width).unwrap();
    }
    out
}

fn load_pair_dir(dir: &Path) -> Result<Vec<TrainingPair>, CliError> {
    let manifest = dir.join("pairs.txt");
    let text = fs::read_to_string(&manifest).map_err(|e| CliError::io(&manifest, e))?;
    parse_pair_manifest(&text)?
        .into_iter()
        .map(|e| {
            let ip = dir.join(&e.input);
            let blob = fs::read(&ip).map_err(|err| CliError::io(&ip, err))?;
            let input = NormalizedStack::from_blob(&blob)
                .ok_or_else(|| CliError::new("MalformedBlob", format!("{}: not a stack blob", ip.display())))?;
            let tp = dir.join(&e.target);
            let target = GrayImage::parse_pgm(&fs::read(&tp).map_err(|err| CliError::io(&tp, err))?)?;
            Ok(TrainingPair {
                input,
                target,
                t: e.t,
                flags: e.flags,
            })
        })
        .collect()
}

pub fn train_toy(a: TrainArgs, mut s: Settings) -> Result<(), CliError> {
    let d = TrainConfig::default();
    let config = TrainConfig {
        lambda: s.value("lambda", a.lambda, d.lambda)?,
        lr_g: s.value("lr_g", a.lr_g, d.lr_g)?,
        lr_d: s.value("lr_d", a.lr_d, d.lr_d)?,
        momentum: s.value("momentum", a.momentum, d.momentum)?,
        epochs: s.value("epochs", a.epochs, d.epochs)?,
        batch_size: s.value("batch_size", a.batch_size, d.batch_size)?,
        seed: s.value("seed", a.seed, d.seed)?,
        holdout_fraction: s.value("holdout_fraction", a.holdout_fraction, d.holdout_fraction)?,
    };
    let pairs = match (s.optional_path("pairs", a.pairs)?, s.optional("synthetic_scenes", a.synthetic_scenes)?) {
        (Some(dir), None) => load_pair_dir(&dir)?,
        (None, Some(scenes)) => {
            let spec = ToyDataSpec {
                scenes,
                n: s.value("n", a.n, 3)?,
                seed: config.seed,
                ..ToyDataSpec::default()
            };
            toy_pairs(&spec)
        }
        _ => return Err(CliError::usage("give exactly one of --pairs or --synthetic-scenes")),
    };
    let out = s.path("out", a.out)?;
    ensure_dir(&out)?;
    let outcome = match evstack_cgan::train_toy(&pairs, &config) {
        Ok(o) => o,
        Err(halt) => {
            if let Some(last) = halt.last_good {
                let ck = Checkpoint {
                    generator: last.generator,
                    discriminator: last.discriminator,
                };
                write_atomic(&out.join("checkpoint.halted.evgn"), &ck.to_bytes())?;
            }
            return Err(halt.error.into());
        }
    };
    let ck = Checkpoint {
        generator: outcome.generator.clone(),
        discriminator: outcome.discriminator.clone(),
    };
    write_atomic(&out.join("checkpoint.evgn"), &ck.to_bytes())?;
    let mut hist = String::from("# epoch l_egan l_l1 lambda total holdout_l1\n");
    writeln!(hist, "# initial holdout_l1={:.9}", outcome.initial_holdout_l1).unwrap();
    for e in &outcome.epochs {
        writeln!(
            hist,
            "{} {:.9} {:.9} {} {:.9} {:.9}",
            e.epoch, e.loss.l_egan, e.loss.l_l1, e.loss.lambda, e.loss.total, e.holdout_l1
        )
        .unwrap();
    }
    write_atomic(&out.join("history.txt"), hist.as_bytes())?;
    write_atomic(&out.join("train_config.txt"), config.to_text().as_bytes())?;
    s.note("pairs_total", pairs.len());
    s.note("pairs_train", outcome.train_pairs);
    s.note("pairs_holdout", outcome.holdout_pairs);
    finish(&out, &s, "train-toy")
}

pub fn infer(a: InferArgs, mut s: Settings) -> Result<(), CliError> {
    let ck = Checkpoint::load(&s.path("checkpoint", a.checkpoint)?)?;
    let seed = s.value("seed", a.seed, 0u64)?;
    let inputs: Vec<(Micros, NormalizedStack)> = match (s.optional_path("pairs", a.pairs)?, s.optional_path("stack", a.stack)?) {
        (Some(dir), None) => load_pair_dir(&dir)?.into_iter().map(|p| (p.t, p.input)).collect(),
        (None, Some(path)) => {
            let blob = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
            let st = NormalizedStack::from_blob(&blob)
                .ok_or_else(|| CliError::new("MalformedBlob", format!("{}: not a stack blob", path.display())))?;
            vec![(0, st)]
        }
        _ => return Err(CliError::usage("give exactly one of --pairs or --stack")),
    };
    let out = s.path("out", a.out)?;
    ensure_dir(&out)?;
    let images = inputs
        .par_iter()
        .map(|(_, st)| evstack_cgan::infer(&ck.generator, st, seed))
        .collect::<Result<Vec<_>, _>>()?;
    let mut index = Vec::with_capacity(images.len());
    for (k, ((t, _), img)) in inputs.iter().zip(&images).enumerate() {
        let name = format!("recon_{k:06}.pgm");
        write_atomic(&out.join(&name), &img.to_pgm_bytes())?;
        index.push((*t, name));
    }
    write_atomic(&out.join("index.txt"), format_frame_index(&index).as_bytes())?;
    s.note("images", images.len());
    finish(&out, &s, "infer")
}
