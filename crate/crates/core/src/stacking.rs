//! Stacking based on time (SBT) and on event count (SBE).
//!
//! A [`Stack`] holds `n` polarity-sum frames. SBT splits a time window into
//! `n` sub-intervals; SBE splits a run of `n * N_e` consecutive events into
//! `n` groups of `N_e`.

use thiserror::Error;

use crate::events::{Event, EventStream, Micros};
use crate::image::RgbImage;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StackError {
    #[error("invalid window [{start}, {end})")]
    InvalidWindow { start: Micros, end: Micros },
    #[error("window of {duration} us cannot hold {n} sub-intervals of at least 1 us")]
    WindowTooSmall { duration: Micros, n: usize },
    #[error("frame count and events per frame must be at least 1")]
    InvalidCount,
    #[error("need {needed} events, only {available} available")]
    InsufficientEvents { needed: usize, available: usize },
}

impl StackError {
    pub fn kind(&self) -> &'static str {
        match self {
            StackError::InvalidWindow { .. } => "InvalidWindow",
            StackError::WindowTooSmall { .. } => "WindowTooSmall",
            StackError::InvalidCount => "InvalidCount",
            StackError::InsufficientEvents { .. } => "InsufficientEvents",
        }
    }
}

/// How a stack was built.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Sbt { t_start: Micros, t_end: Micros },
    Sbe { start_index: usize, events_per_frame: usize },
}

/// `n` row-major frames of signed polarity sums, frame-major in one buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stack {
    pub(crate) width: usize,
    pub(crate) height: usize,
    pub(crate) n: usize,
    pub(crate) frames: Vec<i32>,
    pub(crate) provenance: Provenance,
    /// Last covered instant: `t_end - 1` for SBT, the last event's time for SBE.
    pub(crate) last_t: Micros,
}

impl Stack {
    pub(crate) fn zeros(width: usize, height: usize, n: usize, provenance: Provenance, last_t: Micros) -> Self {
        Stack {
            width,
            height,
            n,
            frames: vec![0; n * width * height],
            provenance,
            last_t,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn last_t(&self) -> Micros {
        self.last_t
    }

    pub fn frame(&self, i: usize) -> &[i32] {
        let len = self.width * self.height;
        &self.frames[i * len..(i + 1) * len]
    }

    pub fn values(&self) -> &[i32] {
        &self.frames
    }

    pub fn get(&self, i: usize, x: usize, y: usize) -> i32 {
        self.frames[(i * self.height + y) * self.width + x]
    }

    /// Per-pixel sum over all frames.
    pub fn net_sum(&self) -> Vec<i32> {
        let len = self.width * self.height;
        let mut net = vec![0; len];
        for frame in self.frames.chunks_exact(len) {
            for (acc, v) in net.iter_mut().zip(frame) {
                *acc += v;
            }
        }
        net
    }

    pub fn max_abs(&self) -> i32 {
        self.frames.iter().map(|v| v.abs()).max().unwrap_or(0)
    }

    #[inline]
    pub(crate) fn accumulate(&mut self, frame: usize, e: &Event, sign: i32) {
        let idx = (frame * self.height + e.y as usize) * self.width + e.x as usize;
        self.frames[idx] += sign * e.p as i32;
    }
}

/// Start of each SBT sub-interval plus the window end (`n + 1` values).
///
/// Sub-intervals are `(t_end - t_start) / n` microseconds long; the
/// remainder goes to the last one.
pub fn sbt_boundaries(t_start: Micros, t_end: Micros, n: usize) -> Result<Vec<Micros>, StackError> {
    if n == 0 {
        return Err(StackError::InvalidCount);
    }
    if t_start >= t_end {
        return Err(StackError::InvalidWindow {
            start: t_start,
            end: t_end,
        });
    }
    let duration = t_end - t_start;
    if duration < n as Micros {
        return Err(StackError::WindowTooSmall { duration, n });
    }
    let step = duration / n as Micros;
    let mut b: Vec<Micros> = (0..n as Micros).map(|i| t_start + i * step).collect();
    b.push(t_end);
    Ok(b)
}

/// SBT stack over `[t_start, t_end)` with `n` frames.
pub fn sbt_stack(stream: &EventStream, t_start: Micros, t_end: Micros, n: usize) -> Result<Stack, StackError> {
    let bounds = sbt_boundaries(t_start, t_end, n)?;
    let mut stack = Stack::zeros(
        stream.width(),
        stream.height(),
        n,
        Provenance::Sbt { t_start, t_end },
        t_end - 1,
    );
    let events = stream.events();
    let mut idx = stream.lower_bound(t_start);
    for frame in 0..n {
        let hi = bounds[frame + 1];
        while idx < events.len() && events[idx].t < hi {
            stack.accumulate(frame, &events[idx], 1);
            idx += 1;
        }
    }
    Ok(stack)
}

/// SBE stack of events `[start_index, start_index + n * events_per_frame)`.
pub fn sbe_stack(
    stream: &EventStream,
    start_index: usize,
    events_per_frame: usize,
    n: usize,
) -> Result<Stack, StackError> {
    if n == 0 || events_per_frame == 0 {
        return Err(StackError::InvalidCount);
    }
    let needed = start_index
        .checked_add(n.saturating_mul(events_per_frame))
        .unwrap_or(usize::MAX);
    if needed > stream.len() {
        return Err(StackError::InsufficientEvents {
            needed,
            available: stream.len(),
        });
    }
    let events = &stream.events()[start_index..needed];
    let last_t = events.last().map(|e| e.t).unwrap_or(0);
    let mut stack = Stack::zeros(
        stream.width(),
        stream.height(),
        n,
        Provenance::Sbe {
            start_index,
            events_per_frame,
        },
        last_t,
    );
    for (frame, chunk) in events.chunks_exact(events_per_frame).enumerate() {
        for e in chunk {
            stack.accumulate(frame, e, 1);
        }
    }
    Ok(stack)
}

/// Stack values scaled into `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedStack {
    pub width: usize,
    pub height: usize,
    pub n: usize,
    pub values: Vec<f32>,
}

impl NormalizedStack {
    pub fn frame(&self, i: usize) -> &[f32] {
        let len = self.width * self.height;
        &self.values[i * len..(i + 1) * len]
    }

    pub const BLOB_MAGIC: &'static [u8; 4] = b"EVNS";
    pub const BLOB_HEADER_LEN: usize = 17;

    /// Little-endian blob: `EVNS`, version u8 (1), n u32, height u32,
    /// width u32, then `n * height * width` f32 values (frame-major, row-major).
    pub fn to_blob(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::BLOB_HEADER_LEN + 4 * self.values.len());
        out.extend_from_slice(Self::BLOB_MAGIC);
        out.push(1);
        out.extend_from_slice(&(self.n as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_blob(bytes: &[u8]) -> Option<Self> {
        if bytes.len() < Self::BLOB_HEADER_LEN || &bytes[..4] != Self::BLOB_MAGIC || bytes[4] != 1 {
            return None;
        }
        let word = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let (n, height, width) = (word(5), word(9), word(13));
        let count = n.checked_mul(height)?.checked_mul(width)?;
        let body = bytes.get(Self::BLOB_HEADER_LEN..Self::BLOB_HEADER_LEN + 4 * count)?;
        let values = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Some(NormalizedStack {
            width,
            height,
            n,
            values,
        })
    }
}

/// Divides by `max(1, max |value|)` over the whole stack.
pub fn normalize_stack(stack: &Stack) -> NormalizedStack {
    let scale = stack.max_abs().max(1) as f32;
    NormalizedStack {
        width: stack.width,
        height: stack.height,
        n: stack.n,
        values: stack.frames.iter().map(|&v| v as f32 / scale).collect(),
    }
}

/// Composites the per-pixel net sum into red (positive) / blue (negative),
/// scaled so the largest magnitude maps to 255.
pub fn render_pseudo_color(stack: &Stack) -> RgbImage {
    let net = stack.net_sum();
    let peak = net.iter().map(|v| v.abs()).max().unwrap_or(0).max(1);
    render_pseudo_color_with_gain(stack, 255.0 / peak as f64)
}

/// Same as [`render_pseudo_color`] with an explicit per-unit gain, capped at 255.
pub fn render_pseudo_color_with_gain(stack: &Stack, gain: f64) -> RgbImage {
    let net = stack.net_sum();
    let mut img = RgbImage::new(stack.width, stack.height);
    for (i, &s) in net.iter().enumerate() {
        let level = (s.abs() as f64 * gain).round().min(255.0) as u8;
        let rgb = match s.signum() {
            1 => [level, 0, 0],
            -1 => [0, 0, level],
            _ => [0, 0, 0],
        };
        img.set(i % stack.width, i / stack.width, rgb);
    }
    img
}
