//! Seeded synthetic scenes with per-event signal/noise labels.
//!
//! Each signal shape and the background noise are independent homogeneous
//! Poisson processes. Signal events land uniformly on the boundary of the
//! shape at its position interpolated along a straight trajectory; noise
//! events land uniformly over the sensor. All processes draw from one
//! SplitMix64 generator, in declaration order, then the events are stably
//! sorted by timestamp.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::event::{Event, EventStream, StreamGeometry};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    /// Circle outline.
    Dot { radius: f64 },
    /// L shape: arms of equal length along +x and +y from the vertex.
    Corner { arm: f64 },
    /// Straight segment centered on the position, at `angle` radians from +x.
    Edge { length: f64, angle: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalSpec {
    pub shape: Shape,
    pub start: (f64, f64),
    pub end: (f64, f64),
    /// Events per microsecond.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub geometry: StreamGeometry,
    /// Microseconds.
    pub duration: u64,
    pub seed: u64,
    pub signals: Vec<SignalSpec>,
    /// Background events per microsecond over the whole array.
    pub noise_rate: f64,
    /// Probability that an event is positive.
    pub pos_fraction: f64,
    pub source_id: String,
}

impl SynthConfig {
    pub fn new(geometry: StreamGeometry, duration: u64, seed: u64) -> Self {
        SynthConfig {
            geometry,
            duration,
            seed,
            signals: Vec::new(),
            noise_rate: 0.0,
            pos_fraction: 0.5,
            source_id: format!("synth-{seed}"),
        }
    }

    pub fn with_signal(mut self, signal: SignalSpec) -> Self {
        self.signals.push(signal);
        self
    }

    pub fn with_noise(mut self, rate: f64) -> Self {
        self.noise_rate = rate;
        self
    }

    pub fn with_source_id(mut self, id: impl Into<String>) -> Self {
        self.source_id = id.into();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let rates = self.signals.iter().map(|s| s.rate).chain([self.noise_rate]);
        if rates.into_iter().any(|r| !(r >= 0.0 && r.is_finite())) {
            return Err(Error::InvalidConfig("rates must be finite and >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.pos_fraction) {
            return Err(Error::InvalidConfig(format!(
                "positive fraction must lie in [0, 1], got {}",
                self.pos_fraction
            )));
        }
        let (w, h) = (self.geometry.width as f64, self.geometry.height as f64);
        let inside = |(x, y): (f64, f64)| (0.0..w).contains(&x) && (0.0..h).contains(&y);
        if let Some(i) = self.signals.iter().position(|s| !inside(s.start) || !inside(s.end)) {
            return Err(Error::InvalidConfig(format!("signal {i} trajectory leaves the sensor")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    /// `shape` indexes `SynthConfig::signals`.
    Signal { shape: u16 },
    Noise,
}

impl Label {
    pub fn is_signal(&self) -> bool {
        matches!(self, Label::Signal { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledStream {
    pub stream: EventStream,
    pub labels: Vec<Label>,
}

impl LabeledStream {
    pub fn signal_fraction(&self) -> f64 {
        if self.labels.is_empty() {
            return 0.0;
        }
        self.labels.iter().filter(|l| l.is_signal()).count() as f64 / self.labels.len() as f64
    }

    /// Sidecar `index,label` file with `signal` / `noise` labels.
    pub fn write_labels<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "index,label")?;
        for (i, l) in self.labels.iter().enumerate() {
            writeln!(w, "{i},{}", if l.is_signal() { "signal" } else { "noise" })?;
        }
        Ok(())
    }
}

fn boundary_point(shape: &Shape, rng: &mut SplitMix64) -> (f64, f64) {
    match *shape {
        Shape::Dot { radius } => {
            let theta = rng.next_f64() * std::f64::consts::TAU;
            (radius * theta.cos(), radius * theta.sin())
        }
        Shape::Corner { arm } => {
            let s = rng.next_f64() * 2.0 * arm;
            if s < arm {
                (s, 0.0)
            } else {
                (0.0, s - arm)
            }
        }
        Shape::Edge { length, angle } => {
            let s = (rng.next_f64() - 0.5) * length;
            (s * angle.cos(), s * angle.sin())
        }
    }
}

fn to_pixel(x: f64, y: f64, geometry: StreamGeometry) -> (u16, u16) {
    let px = x.round().clamp(0.0, geometry.width as f64 - 1.0) as u16;
    let py = y.round().clamp(0.0, geometry.height as f64 - 1.0) as u16;
    (px, py)
}

/// Arrival times in microseconds of a Poisson process over `[0, duration)`.
fn poisson_times(rate: f64, duration: u64, rng: &mut SplitMix64) -> Vec<u64> {
    let mut times = Vec::new();
    if rate <= 0.0 {
        return times;
    }
    let mut t = rng.exponential(rate);
    while t < duration as f64 {
        times.push(t as u64);
        t += rng.exponential(rate);
    }
    times
}

pub fn synth_scene(cfg: &SynthConfig) -> Result<LabeledStream> {
    cfg.validate()?;
    let mut rng = SplitMix64::new(cfg.seed);
    let geo = cfg.geometry;
    let mut tagged: Vec<(Event, Label)> = Vec::new();
    let polarity = |rng: &mut SplitMix64| if rng.next_f64() < cfg.pos_fraction { 1 } else { -1 };

    for (k, sig) in cfg.signals.iter().enumerate() {
        for t in poisson_times(sig.rate, cfg.duration, &mut rng) {
            let a = if cfg.duration > 0 { t as f64 / cfg.duration as f64 } else { 0.0 };
            let cx = sig.start.0 + (sig.end.0 - sig.start.0) * a;
            let cy = sig.start.1 + (sig.end.1 - sig.start.1) * a;
            let (dx, dy) = boundary_point(&sig.shape, &mut rng);
            let (x, y) = to_pixel(cx + dx, cy + dy, geo);
            let p = polarity(&mut rng);
            tagged.push((Event::new(x, y, t, p), Label::Signal { shape: k as u16 }));
        }
    }
    for t in poisson_times(cfg.noise_rate, cfg.duration, &mut rng) {
        let x = rng.below(geo.width as u64) as u16;
        let y = rng.below(geo.height as u64) as u16;
        let p = polarity(&mut rng);
        tagged.push((Event::new(x, y, t, p), Label::Noise));
    }
    tagged.sort_by_key(|(e, _)| e.t);

    let (events, labels) = tagged.into_iter().unzip();
    Ok(LabeledStream {
        stream: EventStream::new(geo, events, cfg.source_id.clone()),
        labels,
    })
}

/// Fraction of `subsampled` events that are labeled signal. Events are matched
/// to the labeled stream in order, each labeled event used at most once.
pub fn signal_retention(labeled: &LabeledStream, subsampled: &EventStream) -> Result<f64> {
    if subsampled.is_empty() {
        return Ok(0.0);
    }
    let src = &labeled.stream.events;
    let mut cursor = 0;
    let mut signal = 0usize;
    for (index, e) in subsampled.events.iter().enumerate() {
        let offset = src[cursor..]
            .iter()
            .position(|s| s == e)
            .ok_or(Error::UnmatchedEvent { index })?;
        cursor += offset;
        if labeled.labels[cursor].is_signal() {
            signal += 1;
        }
        cursor += 1;
    }
    Ok(signal as f64 / subsampled.len() as f64)
}
