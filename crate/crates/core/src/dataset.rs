//! Training-pair preparation: blur filtering of APS frames, removal of events
//! at saturated pixels, and stack/frame pairing.

use log::{info, warn};
use rayon::prelude::*;
use thiserror::Error;

use crate::events::{ApsFrame, Event, EventStream, Micros};
use crate::image::GrayImage;
use crate::metrics::{brisque_features, brisque_score, BrisqueModel, MetricError};
use crate::stacking::{normalize_stack, sbe_stack, sbt_stack, NormalizedStack, StackError};

pub const DEFAULT_SATURATION_LOW: u8 = 5;
pub const DEFAULT_SATURATION_HIGH: u8 = 250;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("frame {got:?} does not match the {expected:?} sensor grid")]
    DimensionMismatch { expected: (usize, usize), got: (usize, usize) },
    #[error("saturation thresholds must satisfy low < high (got {low}, {high})")]
    InvalidThresholds { low: u8, high: u8 },
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Stack(#[from] StackError),
    #[error("pair manifest line {line}: {reason}")]
    MalformedManifest { line: usize, reason: String },
}

impl DatasetError {
    pub fn kind(&self) -> &'static str {
        match self {
            DatasetError::DimensionMismatch { .. } => "DimensionMismatch",
            DatasetError::InvalidThresholds { .. } => "InvalidThresholds",
            DatasetError::Metric(e) => e.kind(),
            DatasetError::Stack(e) => e.kind(),
            DatasetError::MalformedManifest { .. } => "MalformedManifest",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PairFlags {
    pub blur_filtered: bool,
    pub hdr_refined: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub input: NormalizedStack,
    pub target: GrayImage,
    pub t: Micros,
    pub flags: PairFlags,
}

/// Where blur scores came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreSource {
    Brisque,
    /// No model: higher means smoother. See [`blur_proxy`].
    Proxy,
}

#[derive(Debug, Clone)]
pub struct BlurReport {
    pub kept: Vec<ApsFrame>,
    pub rejected: Vec<ApsFrame>,
    /// Score per input frame, in input order.
    pub scores: Vec<f64>,
    pub source: ScoreSource,
}

/// Model-free blur score from the BRISQUE feature vector: the reciprocal of
/// the first-scale MSCN variance. Higher means blurrier.
pub fn blur_proxy(img: &GrayImage) -> Result<f64, MetricError> {
    let f = brisque_features(img)?;
    Ok(proxy_from_features(f.values()))
}

fn proxy_from_features(f: &[f64; 36]) -> f64 {
    1.0 / (f[1] + 1e-3)
}

/// Splits frames into sharp (`score <= threshold`) and blurred ones.
/// Without a model the feature proxy is used and a warning is logged.
pub fn filter_blurred(
    frames: &[ApsFrame],
    threshold: f64,
    model: Option<&BrisqueModel>,
) -> Result<BlurReport, DatasetError> {
    let source = if model.is_some() {
        ScoreSource::Brisque
    } else {
        if !frames.is_empty() {
            warn!("no BRISQUE model supplied, scoring blur with the feature proxy");
        }
        ScoreSource::Proxy
    };
    let scores = frames
        .par_iter()
        .map(|f| -> Result<f64, MetricError> {
            let feats = brisque_features(&f.image)?;
            Ok(match model {
                Some(m) => brisque_score(&feats, m),
                None => proxy_from_features(feats.values()),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (mut kept, mut rejected) = (Vec::new(), Vec::new());
    for (frame, &s) in frames.iter().zip(&scores) {
        if s <= threshold {
            kept.push(frame.clone());
        } else {
            rejected.push(frame.clone());
        }
    }
    Ok(BlurReport {
        kept,
        rejected,
        scores,
        source,
    })
}

/// Per-pixel mask of APS values `<= low` or `>= high`.
pub fn saturation_mask(aps: &GrayImage, low: u8, high: u8) -> Result<Vec<bool>, DatasetError> {
    if low >= high {
        return Err(DatasetError::InvalidThresholds { low, high });
    }
    Ok(aps.data().iter().map(|&v| v <= low || v >= high).collect())
}

/// Drops events at pixels where `aps` is saturated; survivors keep their order.
pub fn remove_saturated_events(
    stream: &EventStream,
    aps: &GrayImage,
    low: u8,
    high: u8,
) -> Result<EventStream, DatasetError> {
    check_dims(stream, aps)?;
    let mask = saturation_mask(aps, low, high)?;
    let w = stream.width();
    Ok(stream.filtered(|e| !mask[e.pixel_index(w)]))
}

fn check_dims(stream: &EventStream, img: &GrayImage) -> Result<(), DatasetError> {
    let expected = (stream.width(), stream.height());
    if img.dims() != expected {
        return Err(DatasetError::DimensionMismatch {
            expected,
            got: img.dims(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairMode {
    /// Stack the interval since the previous frame into `n` sub-frames.
    Sbt { n: usize },
    /// Stack the `n * events_per_frame` most recent events.
    Sbe { events_per_frame: usize, n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairConfig {
    pub mode: PairMode,
    /// Remove events at pixels saturated in the target frame.
    pub saturation: Option<(u8, u8)>,
    /// Recorded on each pair; set when `frames` went through [`filter_blurred`].
    pub blur_filtered: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SkippedPair {
    pub frame_index: usize,
    pub t: Micros,
    pub needed: usize,
    pub available: usize,
}

#[derive(Debug, Clone)]
pub struct PairSet {
    pub pairs: Vec<TrainingPair>,
    /// Frame index of each pair.
    pub frame_indices: Vec<usize>,
    pub skipped: Vec<SkippedPair>,
}

/// Pairs every frame with the stack of the events leading up to it.
///
/// SBT uses `[t_{k-1}, t_k)`, so the first frame never forms a pair. SBE uses
/// the most recent `n * N_e` events with `t < t_k`. Frames without enough
/// events are skipped and logged.
pub fn build_pairs(stream: &EventStream, frames: &[ApsFrame], config: &PairConfig) -> Result<PairSet, DatasetError> {
    for f in frames {
        check_dims(stream, &f.image)?;
    }
    let masks = match config.saturation {
        Some((low, high)) => Some(
            frames
                .iter()
                .map(|f| saturation_mask(&f.image, low, high))
                .collect::<Result<Vec<_>, _>>()?,
        ),
        None => None,
    };
    let flags = PairFlags {
        blur_filtered: config.blur_filtered,
        hdr_refined: config.saturation.is_some(),
    };
    let first = match config.mode {
        PairMode::Sbt { .. } => 1,
        PairMode::Sbe { .. } => 0,
    };
    let results: Vec<(usize, Result<TrainingPair, SkippedPair>)> = (first..frames.len())
        .into_par_iter()
        .map(|k| {
            let mask = masks.as_ref().map(|m| m[k].as_slice());
            pair_for_frame(stream, frames, k, config.mode, mask, flags).map(|r| (k, r))
        })
        .collect::<Result<Vec<_>, DatasetError>>()?;

    let mut set = PairSet {
        pairs: Vec::new(),
        frame_indices: Vec::new(),
        skipped: Vec::new(),
    };
    for (k, r) in results {
        match r {
            Ok(pair) => {
                set.pairs.push(pair);
                set.frame_indices.push(k);
            }
            Err(skip) => {
                info!(
                    "skipping frame {} at t={}: {} events needed, {} available",
                    skip.frame_index, skip.t, skip.needed, skip.available
                );
                set.skipped.push(skip);
            }
        }
    }
    Ok(set)
}

type PairOutcome = Result<Result<TrainingPair, SkippedPair>, DatasetError>;

fn pair_for_frame(
    stream: &EventStream,
    frames: &[ApsFrame],
    k: usize,
    mode: PairMode,
    mask: Option<&[bool]>,
    flags: PairFlags,
) -> PairOutcome {
    let (w, h) = (stream.width(), stream.height());
    let keep = |e: &Event| mask.is_none_or(|m| !m[e.pixel_index(w)]);
    let t = frames[k].t;
    let skip = |needed, available| {
        Ok(Err(SkippedPair {
            frame_index: k,
            t,
            needed,
            available,
        }))
    };
    let stack = match mode {
        PairMode::Sbt { n } => {
            let t0 = frames[k - 1].t;
            let window = stream.events_between(t0, t).map_err(|_| StackError::InvalidWindow { start: t0, end: t })?;
            let evs: Vec<Event> = window.iter().copied().filter(|e| keep(e)).collect();
            let local = EventStream::new(w, h, evs).expect("subset of a valid stream");
            match sbt_stack(&local, t0, t, n) {
                Ok(s) => s,
                Err(StackError::WindowTooSmall { duration, .. }) => return skip(n, duration as usize),
                Err(e) => return Err(e.into()),
            }
        }
        PairMode::Sbe { events_per_frame, n } => {
            let needed = n.checked_mul(events_per_frame).ok_or(StackError::InvalidCount)?;
            if needed == 0 {
                return Err(StackError::InvalidCount.into());
            }
            let hi = stream.lower_bound(t);
            let mut picked: Vec<Event> = stream.events()[..hi]
                .iter()
                .rev()
                .copied()
                .filter(|e| keep(e))
                .take(needed)
                .collect();
            if picked.len() < needed {
                return skip(needed, picked.len());
            }
            picked.reverse();
            let local = EventStream::new(w, h, picked).expect("subset of a valid stream");
            sbe_stack(&local, 0, events_per_frame, n)?
        }
    };
    Ok(Ok(TrainingPair {
        input: normalize_stack(&stack),
        target: frames[k].image.clone(),
        t,
        flags,
    }))
}

/// File names used for pair `k` inside a prepared dataset directory.
pub fn pair_file_names(k: usize) -> (String, String) {
    (format!("input_{k:06}.evns"), format!("target_{k:06}.pgm"))
}

/// One entry of a pair manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairEntry {
    pub t: Micros,
    pub input: String,
    pub target: String,
    pub flags: PairFlags,
}

/// `t_us input target blur_filtered hdr_refined` per line, `#` comments allowed.
pub fn format_pair_manifest(entries: &[PairEntry]) -> String {
    let mut out = String::from("# t_us input target blur_filtered hdr_refined\n");
    for e in entries {
        out.push_str(&format!(
            "{} {} {} {} {}\n",
            e.t, e.input, e.target, e.flags.blur_filtered as u8, e.flags.hdr_refined as u8
        ));
    }
    out
}

pub fn parse_pair_manifest(text: &str) -> Result<Vec<PairEntry>, DatasetError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason: &str| DatasetError::MalformedManifest {
            line: i + 1,
            reason: reason.to_string(),
        };
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 5 {
            return Err(bad("expected 5 fields"));
        }
        let flag = |s: &str| match s {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(bad("flag must be 0 or 1")),
        };
        out.push(PairEntry {
            t: f[0].parse().map_err(|_| bad("bad timestamp"))?,
            input: f[1].to_string(),
            target: f[2].to_string(),
            flags: PairFlags {
                blur_filtered: flag(f[3])?,
                hdr_refined: flag(f[4])?,
            },
        });
    }
    Ok(out)
}
