//! Contrast-threshold event simulator over procedurally moving scenes.
//!
//! Each pixel keeps a reference log-radiance. Whenever the sampled log-radiance
//! moves a full threshold `C` away from it, one event of that sign is emitted,
//! timestamped by linear interpolation inside the sampling step, and the
//! reference moves by exactly `C`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::events::{ApsFrame, Event, EventStream, Micros};
use crate::image::GrayImage;

/// Lower bound applied to radiance before taking the log.
pub const RADIANCE_FLOOR: f64 = 1e-3;
pub const DEFAULT_CONTRAST_THRESHOLD: f64 = 0.2;
pub const DEFAULT_SAMPLING_STEP: Micros = 100;
/// 33 FPS, the APS rate of a DAVIS240.
pub const DEFAULT_FRAME_INTERVAL: Micros = 30_303;

const SUPERSAMPLE: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("time {t} us outside [0, {duration}]")]
    OutOfRange { t: Micros, duration: Micros },
    #[error("contrast threshold must be positive, got {0}")]
    InvalidThreshold(f64),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
}

impl SimError {
    pub fn kind(&self) -> &'static str {
        match self {
            SimError::OutOfRange { .. } => "OutOfRange",
            SimError::InvalidThreshold(_) => "InvalidThreshold",
            SimError::InvalidScene(_) => "InvalidScene",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pattern {
    /// Square cells of `cell` pixels.
    Checkerboard { cell: f64 },
    /// Horizontal triangle wave spanning the sensor width.
    Gradient,
    /// `arms` bright sectors around the image center.
    Star { arms: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Motion {
    Static,
    /// Pixels per second along each axis; the pattern wraps around.
    Translate { vx: f64, vy: f64 },
    /// Revolutions per minute about the image center.
    Rotate { rpm: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub pattern: Pattern,
    pub motion: Motion,
    /// Radiance of dark and bright pattern parts, in APS units.
    pub low: f64,
    pub high: f64,
    /// Exposure multiplier; values above 1 push bright parts past 255.
    pub radiance_scale: f64,
    pub duration: Micros,
    pub width: usize,
    pub height: usize,
    /// Selects the pattern phase.
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            pattern: Pattern::Checkerboard { cell: 8.0 },
            motion: Motion::Translate { vx: 200.0, vy: 80.0 },
            low: 40.0,
            high: 200.0,
            radiance_scale: 1.0,
            duration: 100_000,
            width: 64,
            height: 48,
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.duration < 1 {
            return Err(SimError::InvalidScene("duration must be at least 1 us".into()));
        }
        if self.width == 0 || self.height == 0 || self.width > u16::MAX as usize || self.height > u16::MAX as usize {
            return Err(SimError::InvalidScene(format!("resolution {}x{}", self.width, self.height)));
        }
        if !(self.low >= 0.0 && self.high >= 0.0 && self.radiance_scale >= 0.0) {
            return Err(SimError::InvalidScene("radiance levels and scale must be non-negative".into()));
        }
        match self.pattern {
            Pattern::Checkerboard { cell } if !(cell > 0.0) => {
                Err(SimError::InvalidScene("checkerboard cell must be positive".into()))
            }
            Pattern::Star { arms: 0 } => Err(SimError::InvalidScene("star needs at least one arm".into())),
            _ => Ok(()),
        }
    }

    /// `key=value` lines, one per field, in a fixed order.
    pub fn to_manifest(&self) -> String {
        let mut out = String::new();
        let (pattern, param) = match self.pattern {
            Pattern::Checkerboard { cell } => ("checkerboard", format!("cell={cell}")),
            Pattern::Gradient => ("gradient", String::new()),
            Pattern::Star { arms } => ("star", format!("arms={arms}")),
        };
        writeln!(out, "pattern={pattern}").unwrap();
        if !param.is_empty() {
            writeln!(out, "{param}").unwrap();
        }
        match self.motion {
            Motion::Static => writeln!(out, "motion=static").unwrap(),
            Motion::Translate { vx, vy } => writeln!(out, "motion=translate\nvx={vx}\nvy={vy}").unwrap(),
            Motion::Rotate { rpm } => writeln!(out, "motion=rotate\nrpm={rpm}").unwrap(),
        }
        writeln!(out, "low={}\nhigh={}", self.low, self.high).unwrap();
        writeln!(out, "radiance_scale={}", self.radiance_scale).unwrap();
        writeln!(out, "duration_us={}", self.duration).unwrap();
        writeln!(out, "width={}\nheight={}", self.width, self.height).unwrap();
        writeln!(out, "seed={}", self.seed).unwrap();
        out
    }

    /// Inverse of [`SceneSpec::to_manifest`]; unknown keys are ignored.
    pub fn from_manifest(text: &str) -> Result<Self, SimError> {
        let kv: BTreeMap<&str, &str> = text
            .lines()
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.trim(), v.trim()))
            .collect();
        let get = |k: &str| -> Result<&str, SimError> {
            kv.get(k).copied().ok_or_else(|| SimError::InvalidScene(format!("missing {k}")))
        };
        let num = |k: &str| -> Result<f64, SimError> {
            get(k)?.parse().map_err(|_| SimError::InvalidScene(format!("bad {k}")))
        };
        let int = |k: &str| -> Result<u64, SimError> {
            get(k)?.parse().map_err(|_| SimError::InvalidScene(format!("bad {k}")))
        };
        let pattern = match get("pattern")? {
            "checkerboard" => Pattern::Checkerboard { cell: num("cell")? },
            "gradient" => Pattern::Gradient,
            "star" => Pattern::Star { arms: int("arms")? as usize },
            other => return Err(SimError::InvalidScene(format!("unknown pattern {other}"))),
        };
        let motion = match get("motion")? {
            "static" => Motion::Static,
            "translate" => Motion::Translate { vx: num("vx")?, vy: num("vy")? },
            "rotate" => Motion::Rotate { rpm: num("rpm")? },
            other => return Err(SimError::InvalidScene(format!("unknown motion {other}"))),
        };
        let spec = SceneSpec {
            pattern,
            motion,
            low: num("low")?,
            high: num("high")?,
            radiance_scale: num("radiance_scale")?,
            duration: int("duration_us")? as Micros,
            width: int("width")? as usize,
            height: int("height")? as usize,
            seed: int("seed")?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Radiance texture rasterized once from the pattern, sampled bilinearly.
#[derive(Debug, Clone)]
pub struct Scene {
    spec: SceneSpec,
    texture: Vec<f64>,
}

impl Scene {
    pub fn new(spec: SceneSpec) -> Result<Self, SimError> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let phase_x: f64 = rng.random_range(0.0..spec.width as f64);
        let phase_y: f64 = rng.random_range(0.0..spec.height as f64);
        let phase_a: f64 = rng.random_range(0.0..2.0 * PI);
        let (w, h) = (spec.width, spec.height);
        let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
        let level = |u: f64, v: f64| -> f64 {
            let bright = match spec.pattern {
                Pattern::Checkerboard { cell } => {
                    let i = ((u + phase_x) / cell).floor() as i64;
                    let j = ((v + phase_y) / cell).floor() as i64;
                    (i + j).rem_euclid(2) == 0
                }
                Pattern::Gradient => {
                    let f = ((u + phase_x) / w as f64).rem_euclid(1.0);
                    let tri = 1.0 - (2.0 * f - 1.0).abs();
                    return spec.low + (spec.high - spec.low) * tri;
                }
                Pattern::Star { arms } => {
                    let a = (v - cy).atan2(u - cx) + phase_a;
                    let sector = (a / (PI / arms as f64)).floor() as i64;
                    sector.rem_euclid(2) == 0
                }
            };
            if bright {
                spec.high
            } else {
                spec.low
            }
        };
        let mut texture = Vec::with_capacity(w * h);
        let ss = SUPERSAMPLE as f64;
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for sy in 0..SUPERSAMPLE {
                    for sx in 0..SUPERSAMPLE {
                        let u = x as f64 - 0.5 + (sx as f64 + 0.5) / ss;
                        let v = y as f64 - 0.5 + (sy as f64 + 0.5) / ss;
                        acc += level(u, v);
                    }
                }
                texture.push(acc / (ss * ss));
            }
        }
        Ok(Scene { spec, texture })
    }

    pub fn spec(&self) -> &SceneSpec {
        &self.spec
    }

    fn texel_wrapped(&self, x: i64, y: i64) -> f64 {
        let (w, h) = (self.spec.width as i64, self.spec.height as i64);
        self.texture[(y.rem_euclid(h) * w + x.rem_euclid(w)) as usize]
    }

    fn texel_clamped(&self, x: i64, y: i64) -> f64 {
        let (w, h) = (self.spec.width as i64, self.spec.height as i64);
        self.texture[(y.clamp(0, h - 1) * w + x.clamp(0, w - 1)) as usize]
    }

    fn bilinear(&self, u: f64, v: f64, wrap: bool) -> f64 {
        let (x0, y0) = (u.floor(), v.floor());
        let (fx, fy) = (u - x0, v - y0);
        let (x0, y0) = (x0 as i64, y0 as i64);
        let t = |x, y| {
            if wrap {
                self.texel_wrapped(x, y)
            } else {
                self.texel_clamped(x, y)
            }
        };
        let top = t(x0, y0) * (1.0 - fx) + t(x0 + 1, y0) * fx;
        let bottom = t(x0, y0 + 1) * (1.0 - fx) + t(x0 + 1, y0 + 1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Scene radiance of one row at time `t`; no range check.
    fn render_row(&self, t: Micros, y: usize, out: &mut [f64]) {
        let secs = t as f64 * 1e-6;
        match self.spec.motion {
            Motion::Static => {
                let w = self.spec.width;
                out.copy_from_slice(&self.texture[y * w..(y + 1) * w]);
            }
            Motion::Translate { vx, vy } => {
                let (dx, dy) = (vx * secs, vy * secs);
                for (x, o) in out.iter_mut().enumerate() {
                    *o = self.bilinear(x as f64 - dx, y as f64 - dy, true);
                }
            }
            Motion::Rotate { rpm } => {
                let theta = 2.0 * PI * rpm / 60.0 * secs;
                let (s, c) = theta.sin_cos();
                let cx = (self.spec.width as f64 - 1.0) / 2.0;
                let cy = (self.spec.height as f64 - 1.0) / 2.0;
                let dy = y as f64 - cy;
                for (x, o) in out.iter_mut().enumerate() {
                    let dx = x as f64 - cx;
                    // Inverse rotation maps the output pixel back into the texture.
                    let u = c * dx + s * dy + cx;
                    let v = -s * dx + c * dy + cy;
                    *o = self.bilinear(u, v, false);
                }
            }
        }
    }

    /// Scene radiance (before `radiance_scale`) at time `t`, row-major.
    pub fn render(&self, t: Micros) -> Result<Vec<f64>, SimError> {
        if t < 0 || t > self.spec.duration {
            return Err(SimError::OutOfRange {
                t,
                duration: self.spec.duration,
            });
        }
        let w = self.spec.width;
        let mut out = vec![0.0; w * self.spec.height];
        out.par_chunks_mut(w)
            .enumerate()
            .for_each(|(y, row)| self.render_row(t, y, row));
        Ok(out.into_iter().map(|r| r.max(RADIANCE_FLOOR)).collect())
    }

    /// Log of exposed radiance, as seen by the event pixels.
    pub fn log_radiance(&self, t: Micros) -> Result<Vec<f64>, SimError> {
        let scale = self.spec.radiance_scale;
        Ok(self
            .render(t)?
            .into_iter()
            .map(|r| (r * scale).max(RADIANCE_FLOOR).ln())
            .collect())
    }
}

/// Renders `spec` at time `t`.
pub fn render_scene(spec: &SceneSpec, t: Micros) -> Result<Vec<f64>, SimError> {
    Scene::new(spec.clone())?.render(t)
}

/// Per-pixel contrast-threshold state. The reference is kept as
/// `initial + threshold * net_polarity` so it never drifts.
#[derive(Debug, Clone, Copy)]
pub struct ContrastPixel {
    initial: f64,
    threshold: f64,
    net: i64,
}

impl ContrastPixel {
    pub fn new(initial_log: f64, threshold: f64) -> Self {
        ContrastPixel {
            initial: initial_log,
            threshold,
            net: 0,
        }
    }

    pub fn reference(&self) -> f64 {
        self.initial + self.threshold * self.net as f64
    }

    pub fn net_polarity(&self) -> i64 {
        self.net
    }

    /// Consumes the linear segment `(t0, l0) -> (t1, l1)`, calling `emit`
    /// with `(t, polarity)` for every threshold crossing in time order.
    pub fn step(&mut self, t0: Micros, l0: f64, t1: Micros, l1: f64, mut emit: impl FnMut(Micros, i8)) {
        let span = (t1 - t0) as f64;
        let at = |level: f64| -> Micros {
            let frac = if l1 != l0 { (level - l0) / (l1 - l0) } else { 1.0 };
            let t = t0 as f64 + frac.clamp(0.0, 1.0) * span;
            (t.round() as Micros).clamp(t0, t1)
        };
        loop {
            let up = self.initial + self.threshold * (self.net + 1) as f64;
            if l1 >= up {
                self.net += 1;
                emit(at(up), 1);
                continue;
            }
            let down = self.initial + self.threshold * (self.net - 1) as f64;
            if l1 <= down {
                self.net -= 1;
                emit(at(down), -1);
                continue;
            }
            break;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub contrast_threshold: f64,
    pub sampling_step: Micros,
    /// Spacing of APS and ground-truth frames.
    pub frame_interval: Micros,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            contrast_threshold: DEFAULT_CONTRAST_THRESHOLD,
            sampling_step: DEFAULT_SAMPLING_STEP,
            frame_interval: DEFAULT_FRAME_INTERVAL,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub spec: SceneSpec,
    pub stream: EventStream,
    /// Full-range tone-mapped frames.
    pub gt_frames: Vec<ApsFrame>,
    /// Exposed radiance clamped to the 8-bit range.
    pub aps_frames: Vec<ApsFrame>,
    pub contrast_threshold: f64,
    /// Log-radiance at t = 0 and at the end of the run, per pixel.
    pub initial_log: Vec<f64>,
    pub final_log: Vec<f64>,
}

fn sample_times(duration: Micros, step: Micros) -> Vec<Micros> {
    let mut times: Vec<Micros> = (0..=duration / step).map(|k| k * step).collect();
    if *times.last().unwrap() != duration {
        times.push(duration);
    }
    times
}

/// Simulates events plus APS and ground-truth frames for `spec`.
pub fn generate_events(spec: &SceneSpec, config: &SimConfig) -> Result<SimOutput, SimError> {
    let c = config.contrast_threshold;
    if !(c > 0.0) || !c.is_finite() {
        return Err(SimError::InvalidThreshold(c));
    }
    if config.sampling_step < 1 || config.frame_interval < 1 {
        return Err(SimError::InvalidScene("sampling step and frame interval must be at least 1 us".into()));
    }
    let scene = Scene::new(spec.clone())?;
    let (w, h) = (spec.width, spec.height);

    let initial_log = scene.log_radiance(0)?;
    let mut pixels: Vec<ContrastPixel> = initial_log.iter().map(|&l| ContrastPixel::new(l, c)).collect();
    let mut prev_log = initial_log.clone();
    let mut prev_t = 0;
    let mut events: Vec<Event> = Vec::new();

    for &t in sample_times(spec.duration, config.sampling_step).iter().skip(1) {
        let log = scene.log_radiance(t)?;
        let row_events: Vec<Vec<Event>> = pixels
            .par_chunks_mut(w)
            .enumerate()
            .map(|(y, row)| {
                let mut out = Vec::new();
                for (x, px) in row.iter_mut().enumerate() {
                    let i = y * w + x;
                    px.step(prev_t, prev_log[i], t, log[i], |et, p| {
                        out.push(Event::new(et, x as u16, y as u16, p));
                    });
                }
                out
            })
            .collect();
        let mut step_events: Vec<Event> = row_events.into_iter().flatten().collect();
        step_events.sort_by_key(|e| e.t);
        events.extend(step_events);
        prev_log = log;
        prev_t = t;
    }

    let frame_times: Vec<Micros> = (0..=spec.duration / config.frame_interval)
        .map(|k| k * config.frame_interval)
        .collect();
    let exposed: Vec<Vec<f64>> = frame_times
        .iter()
        .map(|&t| {
            scene
                .render(t)
                .map(|r| r.into_iter().map(|v| v * spec.radiance_scale).collect())
        })
        .collect::<Result<_, _>>()?;
    let lo = exposed.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let hi = exposed.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut gt_frames = Vec::with_capacity(frame_times.len());
    let mut aps_frames = Vec::with_capacity(frame_times.len());
    for (&t, radiance) in frame_times.iter().zip(&exposed) {
        let aps = GrayImage::from_f64(w, h, radiance).expect("dims match");
        let tone: Vec<f64> = if hi > lo {
            radiance.iter().map(|v| 255.0 * (v - lo) / (hi - lo)).collect()
        } else {
            vec![0.0; radiance.len()]
        };
        gt_frames.push(ApsFrame {
            t,
            image: GrayImage::from_f64(w, h, &tone).expect("dims match"),
        });
        aps_frames.push(ApsFrame { t, image: aps });
    }

    let stream = EventStream::new(w, h, events).expect("simulator emits sorted in-bounds events");
    Ok(SimOutput {
        spec: spec.clone(),
        stream,
        gt_frames,
        aps_frames,
        contrast_threshold: c,
        initial_log,
        final_log: prev_log,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Saturation {
    Black,
    White,
}

/// A 4-connected set of pixels that are saturated in every APS frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SaturatedRegion {
    pub kind: Saturation,
    pub pixels: Vec<usize>,
    /// Variance of APS values over the region's pixels and all frames.
    pub aps_variance: f64,
    pub event_count: usize,
}

/// Finds regions that stay at 0 or 255 across all APS frames and counts the
/// events the sensor still produced there.
pub fn hdr_scene_report(sim: &SimOutput) -> Vec<SaturatedRegion> {
    let (w, h) = (sim.stream.width(), sim.stream.height());
    if sim.aps_frames.is_empty() {
        return Vec::new();
    }
    let class = |i: usize| -> Option<Saturation> {
        let first = sim.aps_frames[0].image.data()[i];
        let kind = match first {
            0 => Saturation::Black,
            255 => Saturation::White,
            _ => return None,
        };
        sim.aps_frames
            .iter()
            .all(|f| f.image.data()[i] == first)
            .then_some(kind)
    };
    let classes: Vec<Option<Saturation>> = (0..w * h).map(class).collect();
    let mut counts = vec![0usize; w * h];
    for e in sim.stream.events() {
        counts[e.pixel_index(w)] += 1;
    }

    let mut label = vec![usize::MAX; w * h];
    let mut regions = Vec::new();
    for seed in 0..w * h {
        let Some(kind) = classes[seed] else { continue };
        if label[seed] != usize::MAX {
            continue;
        }
        let id = regions.len();
        let mut stack = vec![seed];
        let mut pixels = Vec::new();
        label[seed] = id;
        while let Some(i) = stack.pop() {
            pixels.push(i);
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if label[j] == usize::MAX && classes[j] == Some(kind) {
                    label[j] = id;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        pixels.sort_unstable();
        let values: Vec<f64> = sim
            .aps_frames
            .iter()
            .flat_map(|f| pixels.iter().map(move |&i| f.image.data()[i] as f64))
            .collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let aps_variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64;
        let event_count = pixels.iter().map(|&i| counts[i]).sum();
        regions.push(SaturatedRegion {
            kind,
            pixels,
            aps_variance,
            event_count,
        });
    }
    regions
}
