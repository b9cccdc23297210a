//! Event and APS-frame containers plus their on-disk formats.
//!
//! Text events are one `t_seconds x y p` tuple per line with `p` in `{0, 1}`.
//! Binary events use the `EVST` container:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "EVST"
//! 4       1     version (1)
//! 5       2     width  (u16 LE)
//! 7       2     height (u16 LE)
//! 9       8     event count (u64 LE)
//! 17      16*N  records: t_us u64 LE, x u16 LE, y u16 LE, p i8, 3 zero bytes
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::image::{GrayImage, ImageError};

/// Timestamps and window bounds in integer microseconds.
pub type Micros = i64;

pub const BINARY_MAGIC: &[u8; 4] = b"EVST";
pub const BINARY_VERSION: u8 = 1;
pub const BINARY_HEADER_LEN: usize = 17;
pub const BINARY_RECORD_LEN: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EventError {
    #[error("line {line}: malformed event ({reason})")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: event at ({x}, {y}) outside {width}x{height} sensor")]
    OutOfBounds {
        line: usize,
        x: i64,
        y: i64,
        width: usize,
        height: usize,
    },
    #[error("line {line}: polarity {value:?} is not 0 or 1")]
    PolarityInvalid { line: usize, value: String },
    #[error("event {index}: timestamp {t} precedes previous timestamp {prev}")]
    NonMonotonicTime { index: usize, t: Micros, prev: Micros },
    #[error("bad magic, expected EVST")]
    BadMagic,
    #[error("unsupported EVST version {0}")]
    VersionUnsupported(u8),
    #[error("truncated record: expected {expected} bytes, found {found}")]
    TruncatedRecord { expected: usize, found: usize },
    #[error("invalid window [{start}, {end})")]
    InvalidWindow { start: Micros, end: Micros },
    #[error("sensor {width}x{height} does not fit the binary format")]
    SensorTooLarge { width: usize, height: usize },
}

impl EventError {
    pub fn kind(&self) -> &'static str {
        match self {
            EventError::MalformedLine { .. } => "MalformedLine",
            EventError::OutOfBounds { .. } => "OutOfBounds",
            EventError::PolarityInvalid { .. } => "PolarityInvalid",
            EventError::NonMonotonicTime { .. } => "NonMonotonicTime",
            EventError::BadMagic => "BadMagic",
            EventError::VersionUnsupported(_) => "VersionUnsupported",
            EventError::TruncatedRecord { .. } => "TruncatedRecord",
            EventError::InvalidWindow { .. } => "InvalidWindow",
            EventError::SensorTooLarge { .. } => "SensorTooLarge",
        }
    }
}

/// A single polarity impulse. `p` is always `+1` or `-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub t: Micros,
    pub x: u16,
    pub y: u16,
    pub p: i8,
}

impl Event {
    pub fn new(t: Micros, x: u16, y: u16, p: i8) -> Self {
        debug_assert!(p == 1 || p == -1, "polarity must be +/-1");
        Event { t, x, y, p }
    }

    #[inline]
    pub fn pixel_index(&self, width: usize) -> usize {
        self.y as usize * width + self.x as usize
    }
}

/// Time-ordered events on a fixed sensor grid. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    width: usize,
    height: usize,
    events: Vec<Event>,
}

impl EventStream {
    /// Validates bounds, polarity and time ordering.
    pub fn new(width: usize, height: usize, events: Vec<Event>) -> Result<Self, EventError> {
        let mut prev = 0;
        for (index, e) in events.iter().enumerate() {
            if e.x as usize >= width || e.y as usize >= height {
                return Err(EventError::OutOfBounds {
                    line: index + 1,
                    x: e.x as i64,
                    y: e.y as i64,
                    width,
                    height,
                });
            }
            if e.p != 1 && e.p != -1 {
                return Err(EventError::PolarityInvalid {
                    line: index + 1,
                    value: e.p.to_string(),
                });
            }
            if e.t < prev {
                return Err(EventError::NonMonotonicTime { index, t: e.t, prev });
            }
            prev = e.t;
        }
        Ok(EventStream { width, height, events })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        EventStream {
            width,
            height,
            events: Vec::new(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Timestamps of the first and last event.
    pub fn span(&self) -> Option<(Micros, Micros)> {
        Some((self.events.first()?.t, self.events.last()?.t))
    }

    /// Index of the first event with `t >= time`.
    pub fn lower_bound(&self, time: Micros) -> usize {
        self.events.partition_point(|e| e.t < time)
    }

    /// Events with `start <= t < end`, located by binary search.
    pub fn events_between(&self, start: Micros, end: Micros) -> Result<&[Event], EventError> {
        if start > end {
            return Err(EventError::InvalidWindow { start, end });
        }
        let lo = self.lower_bound(start);
        let hi = lo + self.events[lo..].partition_point(|e| e.t < end);
        Ok(&self.events[lo..hi])
    }

    /// Keeps the events for which `keep` returns true, preserving order.
    pub fn filtered(&self, mut keep: impl FnMut(&Event) -> bool) -> EventStream {
        EventStream {
            width: self.width,
            height: self.height,
            events: self.events.iter().copied().filter(|e| keep(e)).collect(),
        }
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }
}

/// Parses a non-negative decimal seconds value into microseconds, rounding
/// half-up at the seventh fractional digit. Exponent forms go through `f64`.
pub fn parse_seconds(text: &str) -> Option<Micros> {
    if text.is_empty() || text.starts_with('-') {
        return None;
    }
    let text = text.strip_prefix('+').unwrap_or(text);
    if text.contains(['e', 'E']) {
        let secs: f64 = text.parse().ok()?;
        if !secs.is_finite() || secs < 0.0 {
            return None;
        }
        return Some((secs * 1e6 + 0.5).floor() as Micros);
    }
    let (int_part, frac_part) = match text.split_once('.') {
        Some((i, f)) => (i, f),
        None => (text, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.bytes().all(|c| c.is_ascii_digit()) || !frac_part.bytes().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let whole: i64 = if int_part.is_empty() { 0 } else { int_part.parse().ok()? };
    let frac = frac_part.as_bytes();
    let mut micros: i64 = 0;
    for i in 0..6 {
        let d = frac.get(i).map_or(0, |c| (c - b'0') as i64);
        micros = micros * 10 + d;
    }
    if frac.get(6).is_some_and(|&c| c >= b'5') {
        micros += 1;
    }
    whole.checked_mul(1_000_000)?.checked_add(micros)
}

/// Formats microseconds as decimal seconds with six fractional digits.
pub fn format_seconds(t: Micros) -> String {
    format!("{}.{:06}", t / 1_000_000, t % 1_000_000)
}

/// Parses the text event format. Blank lines and `#` comments are skipped.
pub fn parse_text_events(source: &str, width: usize, height: usize) -> Result<EventStream, EventError> {
    let mut events = Vec::new();
    let mut prev: Micros = 0;
    for (lineno, raw) in source.lines().enumerate() {
        let line = lineno + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(EventError::MalformedLine {
                line,
                reason: format!("expected 4 fields, found {}", fields.len()),
            });
        }
        let t = parse_seconds(fields[0]).ok_or_else(|| EventError::MalformedLine {
            line,
            reason: format!("bad timestamp {:?}", fields[0]),
        })?;
        let coord = |s: &str| -> Result<i64, EventError> {
            s.parse::<i64>().map_err(|_| EventError::MalformedLine {
                line,
                reason: format!("bad coordinate {s:?}"),
            })
        };
        let x = coord(fields[1])?;
        let y = coord(fields[2])?;
        if x < 0 || y < 0 || x as usize >= width || y as usize >= height {
            return Err(EventError::OutOfBounds {
                line,
                x,
                y,
                width,
                height,
            });
        }
        let p = match fields[3] {
            "0" => -1,
            "1" => 1,
            other => {
                return Err(EventError::PolarityInvalid {
                    line,
                    value: other.to_string(),
                })
            }
        };
        if t < prev {
            return Err(EventError::NonMonotonicTime {
                index: events.len(),
                t,
                prev,
            });
        }
        prev = t;
        events.push(Event::new(t, x as u16, y as u16, p));
    }
    Ok(EventStream { width, height, events })
}

pub fn format_text_events(stream: &EventStream) -> String {
    let mut out = String::with_capacity(stream.len() * 24);
    for e in stream.events() {
        let p = if e.p > 0 { 1 } else { 0 };
        writeln!(out, "{} {} {} {}", format_seconds(e.t), e.x, e.y, p).unwrap();
    }
    out
}

pub fn write_binary(stream: &EventStream) -> Result<Vec<u8>, EventError> {
    if stream.width > u16::MAX as usize || stream.height > u16::MAX as usize {
        return Err(EventError::SensorTooLarge {
            width: stream.width,
            height: stream.height,
        });
    }
    let mut out = Vec::with_capacity(BINARY_HEADER_LEN + BINARY_RECORD_LEN * stream.len());
    out.extend_from_slice(BINARY_MAGIC);
    out.push(BINARY_VERSION);
    out.extend_from_slice(&(stream.width as u16).to_le_bytes());
    out.extend_from_slice(&(stream.height as u16).to_le_bytes());
    out.extend_from_slice(&(stream.len() as u64).to_le_bytes());
    for e in stream.events() {
        out.extend_from_slice(&(e.t as u64).to_le_bytes());
        out.extend_from_slice(&e.x.to_le_bytes());
        out.extend_from_slice(&e.y.to_le_bytes());
        out.push(e.p as u8);
        out.extend_from_slice(&[0, 0, 0]);
    }
    Ok(out)
}

pub fn read_binary(bytes: &[u8]) -> Result<EventStream, EventError> {
    if bytes.len() < 4 || &bytes[..4] != BINARY_MAGIC {
        return Err(EventError::BadMagic);
    }
    if bytes.len() < BINARY_HEADER_LEN {
        return Err(EventError::TruncatedRecord {
            expected: BINARY_HEADER_LEN,
            found: bytes.len(),
        });
    }
    if bytes[4] != BINARY_VERSION {
        return Err(EventError::VersionUnsupported(bytes[4]));
    }
    let width = u16::from_le_bytes([bytes[5], bytes[6]]) as usize;
    let height = u16::from_le_bytes([bytes[7], bytes[8]]) as usize;
    let count = u64::from_le_bytes(bytes[9..17].try_into().unwrap()) as usize;
    let expected = count
        .checked_mul(BINARY_RECORD_LEN)
        .and_then(|n| n.checked_add(BINARY_HEADER_LEN))
        .unwrap_or(usize::MAX);
    if bytes.len() < expected {
        return Err(EventError::TruncatedRecord {
            expected,
            found: bytes.len(),
        });
    }
    let mut events = Vec::with_capacity(count);
    for rec in bytes[BINARY_HEADER_LEN..expected].chunks_exact(BINARY_RECORD_LEN) {
        let t = u64::from_le_bytes(rec[0..8].try_into().unwrap());
        let x = u16::from_le_bytes([rec[8], rec[9]]);
        let y = u16::from_le_bytes([rec[10], rec[11]]);
        let p = rec[12] as i8;
        if t > i64::MAX as u64 {
            return Err(EventError::NonMonotonicTime {
                index: events.len(),
                t: i64::MAX,
                prev: 0,
            });
        }
        events.push(Event { t: t as Micros, x, y, p });
    }
    EventStream::new(width, height, events)
}

/// Reads either format, sniffing the `EVST` magic.
pub fn read_events_file(path: &Path, width: usize, height: usize) -> Result<EventStream, EventsFileError> {
    let bytes = fs::read(path).map_err(|e| EventsFileError::Io(path.to_path_buf(), e.to_string()))?;
    if bytes.starts_with(BINARY_MAGIC) {
        return Ok(read_binary(&bytes)?);
    }
    let text = String::from_utf8(bytes).map_err(|_| EventError::BadMagic)?;
    Ok(parse_text_events(&text, width, height)?)
}

#[derive(Debug, Error)]
pub enum EventsFileError {
    #[error("{0}: {1}")]
    Io(PathBuf, String),
    #[error(transparent)]
    Event(#[from] EventError),
}

impl EventsFileError {
    pub fn kind(&self) -> &'static str {
        match self {
            EventsFileError::Io(..) => "Io",
            EventsFileError::Event(e) => e.kind(),
        }
    }
}

/// A timestamped intensity frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApsFrame {
    pub t: Micros,
    pub image: GrayImage,
}

#[derive(Debug, Error)]
pub enum ApsError {
    #[error("index line {line}: malformed ({reason})")]
    MalformedIndex { line: usize, reason: String },
    #[error("missing image {0}")]
    MissingImage(PathBuf),
    #[error("{path}: dimensions {got:?} differ from {expected:?}")]
    DimensionMismatch {
        path: PathBuf,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("index line {line}: timestamp {t} precedes previous {prev}")]
    NonMonotonicTime { line: usize, t: Micros, prev: Micros },
    #[error("{path}: {source}")]
    Image { path: PathBuf, source: ImageError },
}

impl ApsError {
    pub fn kind(&self) -> &'static str {
        match self {
            ApsError::MalformedIndex { .. } => "MalformedIndex",
            ApsError::MissingImage(_) => "MissingImage",
            ApsError::DimensionMismatch { .. } => "DimensionMismatch",
            ApsError::NonMonotonicTime { .. } => "NonMonotonicTime",
            ApsError::Image { .. } => "ImageDecode",
        }
    }
}

/// Parses a `t_seconds filename` index into `(t, filename)` entries.
pub fn parse_frame_index(text: &str) -> Result<Vec<(Micros, String)>, ApsError> {
    let mut entries = Vec::new();
    let mut prev = 0;
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut parts = trimmed.split_whitespace();
        let (Some(ts), Some(name), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(ApsError::MalformedIndex {
                line,
                reason: "expected `t_seconds filename`".into(),
            });
        };
        let t = parse_seconds(ts).ok_or_else(|| ApsError::MalformedIndex {
            line,
            reason: format!("bad timestamp {ts:?}"),
        })?;
        if t < prev {
            return Err(ApsError::NonMonotonicTime { line, t, prev });
        }
        prev = t;
        entries.push((t, name.to_string()));
    }
    Ok(entries)
}

pub fn format_frame_index(entries: &[(Micros, String)]) -> String {
    let mut out = String::new();
    for (t, name) in entries {
        writeln!(out, "{} {}", format_seconds(*t), name).unwrap();
    }
    out
}

/// Loads the PGM frames listed in `index_path`, resolved against `image_dir`.
pub fn load_aps_sequence(image_dir: &Path, index_path: &Path) -> Result<Vec<ApsFrame>, ApsError> {
    let text = fs::read_to_string(index_path).map_err(|_| ApsError::MissingImage(index_path.to_path_buf()))?;
    let entries = parse_frame_index(&text)?;
    let mut frames: Vec<ApsFrame> = Vec::with_capacity(entries.len());
    for (t, name) in entries {
        let path = image_dir.join(&name);
        let bytes = fs::read(&path).map_err(|_| ApsError::MissingImage(path.clone()))?;
        let image = GrayImage::parse_pgm(&bytes).map_err(|source| ApsError::Image {
            path: path.clone(),
            source,
        })?;
        if let Some(first) = frames.first() {
            if first.image.dims() != image.dims() {
                return Err(ApsError::DimensionMismatch {
                    path,
                    expected: first.image.dims(),
                    got: image.dims(),
                });
            }
        }
        frames.push(ApsFrame { t, image });
    }
    Ok(frames)
}
