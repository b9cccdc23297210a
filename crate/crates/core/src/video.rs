//! High-frame-rate schedules: stacks whose end times advance by a fixed
//! shift `t_s`, giving an output rate of `10^6 / t_s` frames per second.
//!
//! [`IncrementalStacker`] walks a plan with a rolling window. Sub-frame
//! boundaries slide with the window, so every step only touches events that
//! cross a boundary instead of re-summing the whole window.

use rayon::prelude::*;
use thiserror::Error;

use crate::events::{EventStream, Micros};
use crate::stacking::{sbe_stack, sbt_boundaries, sbt_stack, Provenance, Stack, StackError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VideoError {
    #[error("time shift must be at least 1 us, got {0}")]
    InvalidShift(Micros),
    #[error("stream span is empty")]
    EmptySpan,
    #[error("window {index}: need {needed} events before t_end, only {available}")]
    InsufficientEvents {
        index: usize,
        needed: usize,
        available: usize,
    },
    #[error(transparent)]
    Stack(#[from] StackError),
}

impl VideoError {
    pub fn kind(&self) -> &'static str {
        match self {
            VideoError::InvalidShift(_) => "InvalidShift",
            VideoError::EmptySpan => "EmptySpan",
            VideoError::InsufficientEvents { .. } => "InsufficientEvents",
            VideoError::Stack(e) => e.kind(),
        }
    }
}

/// Stack construction parameters shared by every window in a plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StackMode {
    /// Window of `window` microseconds ending at `t_end`, split into `n` frames.
    Sbt { window: Micros, n: usize },
    /// The `n * events_per_frame` most recent events before `t_end`.
    Sbe { events_per_frame: usize, n: usize },
}

impl StackMode {
    pub fn n(&self) -> usize {
        match *self {
            StackMode::Sbt { n, .. } | StackMode::Sbe { n, .. } => n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub index: usize,
    /// Exclusive end of the window.
    pub t_end: Micros,
    pub mode: StackMode,
}

/// `count` windows whose ends are `first_t_end + k * shift`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VideoPlan {
    pub shift: Micros,
    pub mode: StackMode,
    pub first_t_end: Micros,
    pub count: usize,
}

impl VideoPlan {
    pub fn frame_rate(&self) -> f64 {
        1e6 / self.shift as f64
    }

    /// Duration shared by consecutive SBT windows; `None` for SBE.
    pub fn overlap(&self) -> Option<Micros> {
        match self.mode {
            StackMode::Sbt { window, .. } => Some((window - self.shift).max(0)),
            StackMode::Sbe { .. } => None,
        }
    }

    pub fn window(&self, index: usize) -> WindowSpec {
        WindowSpec {
            index,
            t_end: self.first_t_end + index as Micros * self.shift,
            mode: self.mode,
        }
    }

    pub fn windows(&self) -> impl ExactSizeIterator<Item = WindowSpec> + '_ {
        (0..self.count).map(|k| self.window(k))
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }
}

/// Plans windows whose ends step by `shift` across `[span_begin, span_end]`.
///
/// The first window ends at `span_begin + shift` and the last one is the
/// first to end past `span_end`, so every instant of the span is covered by
/// some window end. SBT windows may start before `span_begin`.
pub fn plan_video(span: (Micros, Micros), mode: StackMode, shift: Micros) -> Result<VideoPlan, VideoError> {
    if shift < 1 {
        return Err(VideoError::InvalidShift(shift));
    }
    let (begin, end) = span;
    if end < begin {
        return Err(VideoError::EmptySpan);
    }
    match mode {
        StackMode::Sbt { window, n } => {
            sbt_boundaries(0, window, n)?;
            if window < shift {
                log::warn!("SBT window {window} us is shorter than shift {shift} us; events between windows are dropped");
            }
        }
        StackMode::Sbe { events_per_frame, n } => {
            if events_per_frame == 0 || n == 0 {
                return Err(StackError::InvalidCount.into());
            }
        }
    }
    Ok(VideoPlan {
        shift,
        mode,
        first_t_end: begin + shift,
        count: ((end - begin) / shift) as usize + 1,
    })
}

/// Plans over the first and last event timestamps of `stream`.
pub fn plan_for_stream(stream: &EventStream, mode: StackMode, shift: Micros) -> Result<VideoPlan, VideoError> {
    let span = stream.span().ok_or(VideoError::EmptySpan)?;
    plan_video(span, mode, shift)
}

/// From-scratch stack for one window of a plan.
pub fn stack_window(stream: &EventStream, spec: &WindowSpec) -> Result<Stack, VideoError> {
    match spec.mode {
        StackMode::Sbt { window, n } => Ok(sbt_stack(stream, spec.t_end - window, spec.t_end, n)?),
        StackMode::Sbe { events_per_frame, n } => {
            sbe_window_at(stream, spec.t_end, events_per_frame, n).map_err(|e| match e {
                VideoError::InsufficientEvents { needed, available, .. } => VideoError::InsufficientEvents {
                    index: spec.index,
                    needed,
                    available,
                },
                other => other,
            })
        }
    }
}

/// SBE stack of the `n * events_per_frame` most recent events with `t < t_end`.
pub fn sbe_window_at(
    stream: &EventStream,
    t_end: Micros,
    events_per_frame: usize,
    n: usize,
) -> Result<Stack, VideoError> {
    if events_per_frame == 0 || n == 0 {
        return Err(StackError::InvalidCount.into());
    }
    let total = n * events_per_frame;
    let hi = stream.lower_bound(t_end);
    if hi < total {
        return Err(VideoError::InsufficientEvents {
            index: 0,
            needed: total,
            available: hi,
        });
    }
    Ok(sbe_stack(stream, hi - total, events_per_frame, n)?)
}

/// Rolling state: one event cursor per sub-frame boundary.
struct Rolling {
    stack: Stack,
    /// SBT: boundary times. SBE: boundary event indices (as `Micros`).
    bounds: Vec<Micros>,
    cursors: Vec<usize>,
}

/// Emits the stacks of a plan in index order. Each item is bit-identical to
/// [`stack_window`] for the same window.
pub struct IncrementalStacker<'a> {
    stream: &'a EventStream,
    plan: &'a VideoPlan,
    next: usize,
    end: usize,
    state: Option<Rolling>,
}

impl<'a> IncrementalStacker<'a> {
    pub fn new(stream: &'a EventStream, plan: &'a VideoPlan) -> Self {
        Self::with_range(stream, plan, 0, plan.count)
    }

    /// Walks windows `start..end` only; used to split a plan across workers.
    pub fn with_range(stream: &'a EventStream, plan: &'a VideoPlan, start: usize, end: usize) -> Self {
        IncrementalStacker {
            stream,
            plan,
            next: start,
            end: end.min(plan.count),
            state: None,
        }
    }

    fn seed(&self, spec: &WindowSpec) -> Result<Rolling, VideoError> {
        let stack = stack_window(self.stream, spec)?;
        let (bounds, cursors) = match spec.mode {
            StackMode::Sbt { window, n } => {
                let bounds = sbt_boundaries(spec.t_end - window, spec.t_end, n)?;
                let cursors = bounds.iter().map(|&b| self.stream.lower_bound(b)).collect();
                (bounds, cursors)
            }
            StackMode::Sbe { events_per_frame, n } => {
                let hi = self.stream.lower_bound(spec.t_end);
                let lo = hi - n * events_per_frame;
                let cursors: Vec<usize> = (0..=n).map(|j| lo + j * events_per_frame).collect();
                (cursors.iter().map(|&c| c as Micros).collect(), cursors)
            }
        };
        Ok(Rolling { stack, bounds, cursors })
    }

    /// Moves the rolling window to `spec`, or returns `false` when the jump
    /// is too large to be worth doing incrementally.
    fn advance(&self, state: &mut Rolling, spec: &WindowSpec) -> bool {
        let events = self.stream.events();
        match spec.mode {
            StackMode::Sbt { window, n } => {
                if self.plan.shift >= window {
                    return false;
                }
                for j in 0..=n {
                    let b = state.bounds[j] + self.plan.shift;
                    state.bounds[j] = b;
                    let mut c = state.cursors[j];
                    while c < events.len() && events[c].t < b {
                        let e = &events[c];
                        if j < n {
                            state.stack.accumulate(j, e, -1);
                        }
                        if j > 0 {
                            state.stack.accumulate(j - 1, e, 1);
                        }
                        c += 1;
                    }
                    state.cursors[j] = c;
                }
                state.stack.provenance = Provenance::Sbt {
                    t_start: spec.t_end - window,
                    t_end: spec.t_end,
                };
                state.stack.last_t = spec.t_end - 1;
                true
            }
            StackMode::Sbe { events_per_frame, n } => {
                let hi = self.stream.lower_bound(spec.t_end);
                let d = hi - state.cursors[n];
                if d >= n * events_per_frame {
                    return false;
                }
                for j in 0..=n {
                    let from = state.cursors[j];
                    for e in &events[from..from + d] {
                        if j < n {
                            state.stack.accumulate(j, e, -1);
                        }
                        if j > 0 {
                            state.stack.accumulate(j - 1, e, 1);
                        }
                    }
                    state.cursors[j] = from + d;
                    state.bounds[j] = (from + d) as Micros;
                }
                state.stack.provenance = Provenance::Sbe {
                    start_index: state.cursors[0],
                    events_per_frame,
                };
                state.stack.last_t = events[hi - 1].t;
                true
            }
        }
    }
}

impl Iterator for IncrementalStacker<'_> {
    type Item = (WindowSpec, Result<Stack, VideoError>);

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.end {
            return None;
        }
        let spec = self.plan.window(self.next);
        self.next += 1;

        if let StackMode::Sbe { events_per_frame, n } = spec.mode {
            let available = self.stream.lower_bound(spec.t_end);
            if available < n * events_per_frame {
                self.state = None;
                let err = VideoError::InsufficientEvents {
                    index: spec.index,
                    needed: n * events_per_frame,
                    available,
                };
                return Some((spec, Err(err)));
            }
        }

        let mut state = self.state.take();
        let advanced = match state.as_mut() {
            Some(s) => self.advance(s, &spec),
            None => false,
        };
        if !advanced {
            match self.seed(&spec) {
                Ok(s) => state = Some(s),
                Err(e) => return Some((spec, Err(e))),
            }
        }
        let stack = state.as_ref().map(|s| s.stack.clone()).expect("seeded above");
        self.state = state;
        Some((spec, Ok(stack)))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.end.saturating_sub(self.next);
        (left, Some(left))
    }
}

/// Splits the plan into `workers` contiguous chunks, each with its own
/// rolling window, and returns the results in index order.
pub fn stack_plan_chunked(
    stream: &EventStream,
    plan: &VideoPlan,
    workers: usize,
) -> Vec<(WindowSpec, Result<Stack, VideoError>)> {
    let workers = workers.max(1);
    let per = plan.count.div_ceil(workers).max(1);
    let chunks: Vec<(usize, usize)> = (0..plan.count)
        .step_by(per)
        .map(|s| (s, (s + per).min(plan.count)))
        .collect();
    chunks
        .into_par_iter()
        .map(|(s, e)| IncrementalStacker::with_range(stream, plan, s, e).collect::<Vec<_>>())
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::Event;

    fn ramp_stream(count: usize, gap: Micros) -> EventStream {
        let events = (0..count)
            .map(|i| Event::new(i as Micros * gap, (i % 4) as u16, (i / 4 % 4) as u16, if i % 3 == 0 { -1 } else { 1 }))
            .collect();
        EventStream::new(4, 4, events).unwrap()
    }

    #[test]
    fn rates_for_common_shifts() {
        let plan = plan_video((0, 100_000), StackMode::Sbt { window: 30_000, n: 3 }, 1_000).unwrap();
        assert_eq!(plan.frame_rate(), 1000.0);
        assert_eq!(plan.overlap(), Some(29_000));

        let plan = plan_video((0, 9_999), StackMode::Sbt { window: 30_000, n: 3 }, 1).unwrap();
        assert_eq!(plan.frame_rate(), 1_000_000.0);
        assert_eq!(plan.len(), 10_000);
    }

    #[test]
    fn shift_equal_to_window_tiles() {
        let plan = plan_video((0, 99), StackMode::Sbt { window: 10, n: 2 }, 10).unwrap();
        assert_eq!(plan.overlap(), Some(0));
        let w: Vec<_> = plan.windows().collect();
        assert_eq!(w.len(), 10);
        for pair in w.windows(2) {
            assert_eq!(pair[1].t_end - 10, pair[0].t_end);
        }
        // Window ends cover [10, 100], so the union is exactly [0, 100).
        assert_eq!(w[0].t_end, 10);
        assert_eq!(w[9].t_end, 100);
    }

    #[test]
    fn plan_errors() {
        let m = StackMode::Sbt { window: 10, n: 2 };
        assert_eq!(plan_video((0, 10), m, 0), Err(VideoError::InvalidShift(0)));
        assert_eq!(plan_video((10, 0), m, 1), Err(VideoError::EmptySpan));
        assert!(plan_for_stream(&EventStream::empty(2, 2), m, 1).is_err());
    }

    #[test]
    fn incremental_matches_batch_sbt() {
        let s = ramp_stream(400, 3);
        for (window, n, shift) in [(30, 3, 1), (31, 4, 2), (10, 2, 7), (12, 3, 12), (5, 1, 9)] {
            let plan = plan_for_stream(&s, StackMode::Sbt { window, n }, shift).unwrap();
            for (spec, got) in IncrementalStacker::new(&s, &plan) {
                assert_eq!(got.unwrap(), stack_window(&s, &spec).unwrap(), "{window} {n} {shift} {spec:?}");
            }
        }
    }

    #[test]
    fn incremental_matches_batch_sbe() {
        let s = ramp_stream(300, 2);
        let plan = plan_for_stream(&s, StackMode::Sbe { events_per_frame: 7, n: 3 }, 3).unwrap();
        let mut skipped = 0;
        for (spec, got) in IncrementalStacker::new(&s, &plan) {
            match got {
                Ok(st) => assert_eq!(st, stack_window(&s, &spec).unwrap()),
                Err(VideoError::InsufficientEvents { index, .. }) => {
                    assert_eq!(index, spec.index);
                    skipped += 1
                }
                Err(e) => panic!("{e}"),
            }
        }
        // 21 events are needed; event 20 sits at t = 40, so windows ending at or before 40 are skipped.
        assert_eq!(skipped, 13);
    }

    #[test]
    fn single_window_plan() {
        let s = ramp_stream(50, 1);
        let plan = plan_video((0, 0), StackMode::Sbt { window: 20, n: 2 }, 25).unwrap();
        assert_eq!(plan.len(), 1);
        let out: Vec<_> = IncrementalStacker::new(&s, &plan).collect();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].1.as_ref().unwrap(), &sbt_stack(&s, 5, 25, 2).unwrap());
    }

    #[test]
    fn sbe_window_at_whole_stream() {
        let s = ramp_stream(12, 5);
        let st = sbe_window_at(&s, 1_000, 4, 3).unwrap();
        assert_eq!(st, sbe_stack(&s, 0, 4, 3).unwrap());
        assert!(matches!(sbe_window_at(&s, 1_000, 5, 3), Err(VideoError::InsufficientEvents { .. })));
    }

    #[test]
    fn chunked_matches_sequential() {
        let s = ramp_stream(500, 2);
        let plan = plan_for_stream(&s, StackMode::Sbt { window: 40, n: 3 }, 3).unwrap();
        let seq: Vec<_> = IncrementalStacker::new(&s, &plan).collect();
        for workers in [1, 2, 3, 7] {
            assert_eq!(stack_plan_chunked(&s, &plan, workers), seq);
        }
    }
}
