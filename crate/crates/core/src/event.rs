//! Event and stream types shared by every sampler.
//!
//! Coordinates are 0-based pixel indices and timestamps are integer
//! microseconds. A stream is time ordered; events with equal timestamps keep
//! their original order.

use std::fmt;

/// One sensor event.
///
/// `p` is stored as a raw `i8` so that invalid polarities read from external
/// sources can be represented and reported by [`validate_stream`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub x: u16,
    pub y: u16,
    pub t: u64,
    pub p: i8,
}

impl Event {
    pub const fn new(x: u16, y: u16, t: u64, p: i8) -> Self {
        Event { x, y, t, p }
    }

    #[inline]
    pub fn is_positive(&self) -> bool {
        self.p > 0
    }
}

/// Sensor size in pixels. Timestamps are always microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamGeometry {
    pub width: u16,
    pub height: u16,
}

impl StreamGeometry {
    pub const fn new(width: u16, height: u16) -> Self {
        StreamGeometry { width, height }
    }

    #[inline]
    pub fn contains(&self, x: u16, y: u16) -> bool {
        x < self.width && y < self.height
    }

    #[inline]
    pub fn n_pixels(&self) -> usize {
        self.width as usize * self.height as usize
    }

    #[inline]
    pub(crate) fn index(&self, x: u16, y: u16) -> usize {
        y as usize * self.width as usize + x as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    pub geometry: StreamGeometry,
    pub events: Vec<Event>,
    pub source_id: String,
}

impl EventStream {
    pub fn new(geometry: StreamGeometry, events: Vec<Event>, source_id: impl Into<String>) -> Self {
        EventStream {
            geometry,
            events,
            source_id: source_id.into(),
        }
    }

    pub fn empty(geometry: StreamGeometry, source_id: impl Into<String>) -> Self {
        Self::new(geometry, Vec::new(), source_id)
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// A new stream with the same geometry and id, holding the events for
    /// which `keep` returns true.
    pub fn filtered<F>(&self, mut keep: F) -> EventStream
    where
        F: FnMut(usize, &Event) -> bool,
    {
        let events = self
            .events
            .iter()
            .enumerate()
            .filter(|(i, e)| keep(*i, e))
            .map(|(_, e)| *e)
            .collect();
        EventStream::new(self.geometry, events, self.source_id.clone())
    }

    /// Same geometry and id, events selected by a keep mask of equal length.
    pub fn masked(&self, mask: &[bool]) -> EventStream {
        debug_assert_eq!(mask.len(), self.events.len());
        self.filtered(|i, _| mask[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    OutOfBounds,
    InvalidPolarity,
    TimestampInversion,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ViolationKind::OutOfBounds => "out-of-bounds coordinate",
            ViolationKind::InvalidPolarity => "invalid polarity",
            ViolationKind::TimestampInversion => "timestamp inversion",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Violation {
    pub index: usize,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks a single event against the stream invariants. `prev_t` is the
/// timestamp of the preceding event, if any.
pub(crate) fn check_event(
    geometry: &StreamGeometry,
    e: &Event,
    prev_t: Option<u64>,
) -> impl Iterator<Item = ViolationKind> {
    let oob = (!geometry.contains(e.x, e.y)).then_some(ViolationKind::OutOfBounds);
    let pol = (e.p != 1 && e.p != -1).then_some(ViolationKind::InvalidPolarity);
    let inv = prev_t
        .is_some_and(|pt| e.t < pt)
        .then_some(ViolationKind::TimestampInversion);
    oob.into_iter().chain(pol).chain(inv)
}

/// Lists every invariant violation with the index of the offending event.
pub fn validate_stream(stream: &EventStream) -> ValidationReport {
    let mut violations = Vec::new();
    let mut prev_t = None;
    for (index, e) in stream.events.iter().enumerate() {
        violations.extend(
            check_event(&stream.geometry, e, prev_t).map(|kind| Violation { index, kind }),
        );
        prev_t = Some(e.t);
    }
    ValidationReport { violations }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamStats {
    pub n_events: usize,
    pub n_pos: usize,
    pub n_neg: usize,
    /// Last minus first timestamp, in microseconds.
    pub duration: u64,
    /// Events per second; 0 when the duration is 0.
    pub mean_rate: f64,
}

pub fn stream_stats(stream: &EventStream) -> StreamStats {
    let n_events = stream.events.len();
    let n_pos = stream.events.iter().filter(|e| e.is_positive()).count();
    let duration = match (stream.events.first(), stream.events.last()) {
        (Some(first), Some(last)) => last.t.saturating_sub(first.t),
        _ => 0,
    };
    let mean_rate = if duration > 0 {
        n_events as f64 / (duration as f64 * 1e-6)
    } else {
        0.0
    };
    StreamStats {
        n_events,
        n_pos,
        n_neg: n_events - n_pos,
        duration,
        mean_rate,
    }
}
