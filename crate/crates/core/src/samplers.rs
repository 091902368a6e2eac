//! Input-independent samplers (spatial, temporal, random) and the Event Count
//! spatial downscaler.

use crate::error::{Error, Result};
use crate::event::{Event, EventStream, StreamGeometry};
use crate::rng::SplitMix64;

/// Keeps every `r_x`-th column and `r_y`-th row, starting at the offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpatialConfig {
    pub r_x: u16,
    pub r_y: u16,
    pub r_x0: u16,
    pub r_y0: u16,
}

impl SpatialConfig {
    pub fn new(r_x: u16, r_y: u16, r_x0: u16, r_y0: u16) -> Result<Self> {
        if r_x == 0 || r_y == 0 {
            return Err(Error::InvalidConfig(format!(
                "spatial periods must be >= 1, got ({r_x}, {r_y})"
            )));
        }
        if r_x0 >= r_x || r_y0 >= r_y {
            return Err(Error::InvalidConfig(format!(
                "spatial offsets ({r_x0}, {r_y0}) must lie in [0, r-1] for periods ({r_x}, {r_y})"
            )));
        }
        Ok(SpatialConfig { r_x, r_y, r_x0, r_y0 })
    }

    /// `(x - r_x0) mod r_x == 0`, written without signed arithmetic.
    #[inline]
    pub fn keeps(&self, x: u16, y: u16) -> bool {
        x % self.r_x == self.r_x0 && y % self.r_y == self.r_y0
    }
}

/// Keeps events inside the first `Δt = w_t / r_t` of every window of length
/// `w_t`, shifted by `dt0`. All times are microseconds.
///
/// `Δt` need not be an integer number of microseconds; membership is decided
/// in exact integer arithmetic as `r_t · ((t - dt0) mod w_t) < w_t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TemporalConfig {
    pub w_t: u64,
    pub r_t: u64,
    pub dt0: u64,
}

impl TemporalConfig {
    pub fn new(w_t: u64, r_t: u64, dt0: u64) -> Result<Self> {
        if w_t == 0 || r_t == 0 {
            return Err(Error::InvalidConfig(format!(
                "temporal window and division factor must be >= 1, got w_t={w_t}, r_t={r_t}"
            )));
        }
        // dt0 <= w_t - w_t / r_t  <=>  r_t·dt0 <= w_t·(r_t - 1)
        if (r_t as u128) * (dt0 as u128) > (w_t as u128) * (r_t as u128 - 1) {
            return Err(Error::InvalidConfig(format!(
                "temporal offset {dt0} us exceeds w_t - dt = {} us",
                w_t as f64 - w_t as f64 / r_t as f64
            )));
        }
        Ok(TemporalConfig { w_t, r_t, dt0 })
    }

    /// Sampling interval in microseconds.
    pub fn interval(&self) -> f64 {
        self.w_t as f64 / self.r_t as f64
    }

    /// Offset of phase class `j` in `0..r_t`, rounded down to whole microseconds.
    pub fn phase_offset(w_t: u64, r_t: u64, j: u64) -> u64 {
        ((j as u128 * w_t as u128) / r_t as u128) as u64
    }

    #[inline]
    pub fn keeps(&self, t: u64) -> bool {
        if t < self.dt0 {
            return false;
        }
        let phase = (t - self.dt0) % self.w_t;
        (self.r_t as u128) * (phase as u128) < self.w_t as u128
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomConfig {
    pub rho: f64,
    pub seed: u64,
}

impl RandomConfig {
    pub fn new(rho: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::InvalidConfig(format!(
                "keep probability must lie in [0, 1], got {rho}"
            )));
        }
        Ok(RandomConfig { rho, seed })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventCountConfig {
    pub r_x: u16,
    pub r_y: u16,
    pub p_thresh: f64,
}

impl EventCountConfig {
    pub fn new(r_x: u16, r_y: u16, p_thresh: f64) -> Result<Self> {
        if r_x == 0 || r_y == 0 {
            return Err(Error::InvalidConfig(format!(
                "event count window must be >= 1, got ({r_x}, {r_y})"
            )));
        }
        if !(p_thresh > 0.0 && p_thresh.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "event count threshold must be positive and finite, got {p_thresh}"
            )));
        }
        Ok(EventCountConfig { r_x, r_y, p_thresh })
    }

    pub fn output_geometry(&self, input: StreamGeometry) -> StreamGeometry {
        StreamGeometry::new(
            input.width.div_ceil(self.r_x),
            input.height.div_ceil(self.r_y),
        )
    }
}

pub fn spatial_subsample(stream: &EventStream, cfg: &SpatialConfig) -> EventStream {
    stream.filtered(|_, e| cfg.keeps(e.x, e.y))
}

pub fn temporal_subsample(stream: &EventStream, cfg: &TemporalConfig) -> EventStream {
    stream.filtered(|_, e| cfg.keeps(e.t))
}

/// The per-event uniforms used by [`random_subsample`], in event order.
pub fn random_draws(stream: &EventStream, seed: u64) -> Vec<f64> {
    let mut rng = SplitMix64::for_stream(seed, &stream.source_id);
    (0..stream.len()).map(|_| rng.next_f64()).collect()
}

/// Bernoulli thinning: event `i` survives iff its uniform draw is below `rho`.
/// The generator is derived from `(seed, source_id)`.
pub fn random_subsample(stream: &EventStream, cfg: &RandomConfig) -> EventStream {
    let mut rng = SplitMix64::for_stream(cfg.seed, &stream.source_id);
    stream.filtered(|_, _| rng.next_f64() < cfg.rho)
}

/// Per-window integrate-and-fire downscaler.
///
/// Each window accumulates `p / (r_x·r_y)`; reaching `+p_thresh` emits a
/// positive event and subtracts the threshold, reaching `-p_thresh` emits a
/// negative one and adds it back. Partial edge windows still normalize by the
/// nominal `r_x·r_y`. Output events carry the triggering event's timestamp and
/// downscaled coordinates.
pub fn event_count_subsample(stream: &EventStream, cfg: &EventCountConfig) -> EventStream {
    event_count_with_counter(stream, cfg, &mut 0)
}

/// As [`event_count_subsample`], adding one multiply-accumulate per input
/// event to `macs`.
pub fn event_count_with_counter(
    stream: &EventStream,
    cfg: &EventCountConfig,
    macs: &mut u64,
) -> EventStream {
    let out_geo = cfg.output_geometry(stream.geometry);
    // Accumulators are kept in units of 1/(r_x·r_y) so that whole-event sums
    // stay exact integers in floating point.
    let area = cfg.r_x as f64 * cfg.r_y as f64;
    let thresh = cfg.p_thresh * area;
    let mut acc = vec![0.0f64; out_geo.n_pixels()];
    let mut out = Vec::new();

    for e in &stream.events {
        let (ox, oy) = (e.x / cfg.r_x, e.y / cfg.r_y);
        let c = &mut acc[out_geo.index(ox, oy)];
        *c += if e.is_positive() { 1.0 } else { -1.0 };
        *macs += 1;
        while *c >= thresh {
            *c -= thresh;
            out.push(Event::new(ox, oy, e.t, 1));
        }
        while *c <= -thresh {
            *c += thresh;
            out.push(Event::new(ox, oy, e.t, -1));
        }
    }
    EventStream::new(out_geo, out, stream.source_id.clone())
}
