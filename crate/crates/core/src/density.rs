//! Causal density-based subsampling.
//!
//! For event `i` with polarity `p` the density is
//!
//! ```text
//! f_i = Σ_{j ≤ i, p_j = p} K(x_i - x_j, y_i - y_j) · exp(-(t_i - t_j) / τ)
//! ```
//!
//! where `K` is an unnormalized Gaussian (`K(0, 0) = 1`, σ = w_d / 5)
//! truncated to a `w_d × w_d` window. Because the temporal factor is
//! exponential, each pixel only needs an accumulator and the time of its last
//! update; decay is applied lazily when the pixel is read. Events are added to
//! the accumulator whether or not they are kept.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::event::{Event, EventStream, StreamGeometry};
use crate::macs::MacCounter;
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThreshMode {
    /// Keep iff `f >= f_thresh`.
    Fixed,
    /// Keep iff `f >= u · f_thresh` with `u ~ U[0, 1)`.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityConfig {
    /// Odd spatial filter size in pixels.
    pub w_d: u16,
    /// Temporal decay constant in microseconds.
    pub tau: f64,
    pub f_thresh: f64,
    pub mode: ThreshMode,
    pub seed: u64,
}

impl DensityConfig {
    pub fn new(w_d: u16, tau: f64, f_thresh: f64, mode: ThreshMode, seed: u64) -> Result<Self> {
        if w_d == 0 || w_d % 2 == 0 {
            return Err(Error::InvalidConfig(format!(
                "density filter size must be odd and >= 1, got {w_d}"
            )));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "density decay tau must be positive, got {tau}"
            )));
        }
        // +inf is accepted as the keep-none sentinel.
        if !(f_thresh > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "density threshold must be positive, got {f_thresh}"
            )));
        }
        Ok(DensityConfig {
            w_d,
            tau,
            f_thresh,
            mode,
            seed,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.w_d as f64 / 5.0
    }

    pub fn with_thresh(mut self, f_thresh: f64) -> Self {
        self.f_thresh = f_thresh;
        self
    }

    pub fn with_mode(mut self, mode: ThreshMode) -> Self {
        self.mode = mode;
        self
    }
}

/// Spatial kernel value at offset `(dx, dy)` for filter size `w_d`.
pub fn kernel_value(w_d: u16, dx: i32, dy: i32) -> f64 {
    let sigma = w_d as f64 / 5.0;
    (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp()
}

#[derive(Debug, Clone)]
struct Plane {
    acc: Vec<f64>,
    last: Vec<u64>,
}

impl Plane {
    fn new(n: usize) -> Self {
        Plane {
            acc: vec![0.0; n],
            last: vec![0; n],
        }
    }
}

/// Per-polarity accumulator and last-update grids plus the kernel table.
#[derive(Debug, Clone)]
pub struct DensityState {
    geometry: StreamGeometry,
    radius: i32,
    inv_tau: f64,
    kernel: Vec<f64>,
    planes: [Plane; 2],
    pub macs: MacCounter,
}

impl DensityState {
    pub fn new(geometry: StreamGeometry, w_d: u16, tau: f64) -> Self {
        let radius = (w_d / 2) as i32;
        let kernel = (-radius..=radius)
            .flat_map(|dy| (-radius..=radius).map(move |dx| kernel_value(w_d, dx, dy)))
            .collect();
        let n = geometry.n_pixels();
        DensityState {
            geometry,
            radius,
            inv_tau: 1.0 / tau,
            kernel,
            planes: [Plane::new(n), Plane::new(n)],
            macs: MacCounter::default(),
        }
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    #[inline]
    fn decay(&self, now: u64, then: u64) -> f64 {
        (-((now.saturating_sub(then)) as f64) * self.inv_tau).exp()
    }

    /// Density of `e` including its own contribution, then folds `e` into
    /// the state.
    pub fn observe(&mut self, e: &Event) -> f64 {
        let plane_idx = if e.is_positive() { 0 } else { 1 };
        let side = 2 * self.radius + 1;
        let (w, h) = (self.geometry.width as i32, self.geometry.height as i32);
        let (cx, cy) = (e.x as i32, e.y as i32);
        let plane = &self.planes[plane_idx];

        let mut f = 1.0;
        let mut macs = 0u64;
        for dy in -self.radius..=self.radius {
            let y = cy + dy;
            if y < 0 || y >= h {
                continue;
            }
            let krow = ((dy + self.radius) * side) as usize;
            let row = (y * w) as usize;
            for dx in -self.radius..=self.radius {
                let x = cx + dx;
                if x < 0 || x >= w {
                    continue;
                }
                let q = row + x as usize;
                let a = plane.acc[q];
                if a == 0.0 {
                    continue;
                }
                // scale of the elapsed time, decay of the accumulator, kernel MAC
                f += self.kernel[krow + (dx + self.radius) as usize] * a * self.decay(e.t, plane.last[q]);
                macs += 3;
            }
        }

        let q = self.geometry.index(e.x, e.y);
        let decayed = self.decay(e.t, self.planes[plane_idx].last[q]);
        let plane = &mut self.planes[plane_idx];
        plane.acc[q] = plane.acc[q] * decayed + 1.0;
        plane.last[q] = e.t;
        macs += 1;

        self.macs.add(macs);
        self.macs.finish_event();
        f
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityTraceEntry {
    pub index: usize,
    pub f: f64,
    pub kept: bool,
    /// Uniform draw, present in random-threshold mode only.
    pub u: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DensityTrace {
    pub entries: Vec<DensityTraceEntry>,
}

impl DensityTrace {
    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.f).collect()
    }

    pub fn kept_mask(&self) -> Vec<bool> {
        self.entries.iter().map(|e| e.kept).collect()
    }

    pub fn kept_count(&self) -> usize {
        self.entries.iter().filter(|e| e.kept).count()
    }

    /// `index,f,kept,u` with an empty `u` column in fixed mode.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "index,f,kept,u")?;
        for e in &self.entries {
            match e.u {
                Some(u) => writeln!(w, "{},{},{},{}", e.index, e.f, e.kept as u8, u)?,
                None => writeln!(w, "{},{},{},", e.index, e.f, e.kept as u8)?,
            }
        }
        Ok(())
    }
}

/// Keep decisions in event order for an already computed density sequence.
/// Random mode draws exactly one uniform per event from the stream generator.
fn threshold_trace(
    values: impl IntoIterator<Item = f64>,
    cfg: &DensityConfig,
    source_id: &str,
) -> DensityTrace {
    let mut rng = SplitMix64::for_stream(cfg.seed, source_id);
    let entries = values
        .into_iter()
        .enumerate()
        .map(|(index, f)| {
            let (kept, u) = match cfg.mode {
                ThreshMode::Fixed => (f >= cfg.f_thresh, None),
                ThreshMode::Random => {
                    let u = rng.next_f64();
                    (f >= u * cfg.f_thresh, Some(u))
                }
            };
            DensityTraceEntry { index, f, kept, u }
        })
        .collect();
    DensityTrace { entries }
}

/// Recursive density evaluation with keep decisions, plus the MAC tally.
pub fn density_values_instrumented(
    stream: &EventStream,
    cfg: &DensityConfig,
) -> (DensityTrace, MacCounter) {
    let mut state = DensityState::new(stream.geometry, cfg.w_d, cfg.tau);
    let values: Vec<f64> = stream.events.iter().map(|e| state.observe(e)).collect();
    (threshold_trace(values, cfg, &stream.source_id), state.macs)
}

pub fn density_values(stream: &EventStream, cfg: &DensityConfig) -> DensityTrace {
    density_values_instrumented(stream, cfg).0
}

/// Direct O(N²) evaluation of the density sum, without any state.
pub fn brute_force_density(stream: &EventStream, cfg: &DensityConfig) -> DensityTrace {
    let radius = (cfg.w_d / 2) as i32;
    let ev = &stream.events;
    let values = (0..ev.len()).map(|i| {
        let ei = ev[i];
        let mut f = 0.0;
        for ej in &ev[..=i] {
            if ej.is_positive() != ei.is_positive() {
                continue;
            }
            let dx = ei.x as i32 - ej.x as i32;
            let dy = ei.y as i32 - ej.y as i32;
            if dx.abs() > radius || dy.abs() > radius {
                continue;
            }
            let dt = (ei.t - ej.t) as f64;
            f += kernel_value(cfg.w_d, dx, dy) * (-dt / cfg.tau).exp();
        }
        f
    });
    threshold_trace(values, cfg, &stream.source_id)
}

pub fn density_filter(stream: &EventStream, cfg: &DensityConfig) -> EventStream {
    stream.masked(&density_values(stream, cfg).kept_mask())
}

/// Two-pass, non-causal variant: densities are divided by their stream mean
/// before the threshold rule is applied.
pub fn density_filter_normalized(stream: &EventStream, cfg: &DensityConfig) -> EventStream {
    stream.masked(&normalized_trace(stream, cfg).kept_mask())
}

/// Trace of the normalized variant; `f` holds the normalized values.
pub fn normalized_trace(stream: &EventStream, cfg: &DensityConfig) -> DensityTrace {
    if stream.is_empty() {
        return DensityTrace::default();
    }
    let (raw, _) = density_values_instrumented(stream, cfg);
    let values = raw.values();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    threshold_trace(values.into_iter().map(|f| f / mean), cfg, &stream.source_id)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(w_d: u16, tau: f64, thresh: f64, mode: ThreshMode) -> DensityConfig {
        DensityConfig::new(w_d, tau, thresh, mode, 1).unwrap()
    }

    fn stream(events: Vec<Event>) -> EventStream {
        EventStream::new(StreamGeometry::new(32, 32), events, "d")
    }

    #[test]
    fn first_event_is_self_term() {
        let t = density_values(
            &stream(vec![Event::new(5, 5, 100, 1)]),
            &cfg(7, 30_000.0, 1.0, ThreshMode::Fixed),
        );
        assert_eq!(t.entries[0].f, 1.0);
    }

    #[test]
    fn same_pixel_one_tau_apart() {
        let c = cfg(7, 30_000.0, 1.0, ThreshMode::Fixed);
        let s = stream(vec![Event::new(5, 5, 0, 1), Event::new(5, 5, 30_000, 1)]);
        let f = density_values(&s, &c).entries[1].f;
        assert!((f - 1.367_879_441_171_442).abs() < 1e-12, "{f}");
    }

    #[test]
    fn horizontal_neighbor_simultaneous() {
        let c = cfg(7, 30_000.0, 1.0, ThreshMode::Fixed);
        let s = stream(vec![Event::new(5, 5, 0, 1), Event::new(6, 5, 0, 1)]);
        let f = density_values(&s, &c).entries[1].f;
        assert!((f - 1.774_837_428_883_249).abs() < 1e-12, "{f}");
    }

    #[test]
    fn opposite_polarity_is_isolated() {
        let c = cfg(7, 30_000.0, 1.0, ThreshMode::Fixed);
        let s = stream(vec![Event::new(5, 5, 0, 1), Event::new(5, 5, 0, -1)]);
        assert_eq!(density_values(&s, &c).entries[1].f, 1.0);
    }

    #[test]
    fn outside_window_contributes_nothing() {
        let c = cfg(3, 30_000.0, 1.0, ThreshMode::Fixed);
        let s = stream(vec![Event::new(5, 5, 0, 1), Event::new(7, 5, 0, 1)]);
        assert_eq!(density_values(&s, &c).entries[1].f, 1.0);
    }

    #[test]
    fn fixed_unit_threshold_keeps_all() {
        let s = stream((0..200).map(|i| Event::new(i % 32, (i * 7) % 32, i as u64 * 10, 1)).collect());
        let out = density_filter(&s, &cfg(7, 30_000.0, 1.0, ThreshMode::Fixed));
        assert_eq!(out, s);
    }

    #[test]
    fn random_tiny_threshold_keeps_all() {
        let s = stream((0..200).map(|i| Event::new(i % 32, 3, i as u64, -1)).collect());
        let out = density_filter(&s, &cfg(7, 30_000.0, 1e-300, ThreshMode::Random));
        assert_eq!(out, s);
    }

    #[test]
    fn fixed_mode_draws_nothing() {
        let s = stream(vec![Event::new(1, 1, 0, 1)]);
        let t = density_values(&s, &cfg(7, 1.0, 1.0, ThreshMode::Fixed));
        assert_eq!(t.entries[0].u, None);
        let t = density_values(&s, &cfg(7, 1.0, 1.0, ThreshMode::Random));
        assert!(t.entries[0].u.is_some());
    }

    #[test]
    fn brute_force_trivial_cases() {
        let c = cfg(7, 1000.0, 2.0, ThreshMode::Fixed);
        assert!(brute_force_density(&stream(vec![]), &c).entries.is_empty());
        assert_eq!(brute_force_density(&stream(vec![Event::new(0, 0, 0, 1)]), &c).entries[0].f, 1.0);
    }

    #[test]
    fn normalized_constant_density_matches_unit_values() {
        // Isolated events: every f is 1, so f / mean = 1.
        let s = stream((0..16).map(|i| Event::new((i % 4) * 8, (i / 4) * 8, i as u64, 1)).collect());
        let c = cfg(3, 10.0, 1.0, ThreshMode::Fixed);
        assert_eq!(density_filter_normalized(&s, &c), density_filter(&s, &c));
        assert!(normalized_trace(&s, &c).entries.iter().all(|e| e.f == 1.0));
    }

    #[test]
    fn normalized_empty_stream() {
        let c = cfg(3, 10.0, 1.0, ThreshMode::Fixed);
        assert!(density_filter_normalized(&stream(vec![]), &c).is_empty());
    }

    #[test]
    fn trace_csv_layout() {
        let s = stream(vec![Event::new(1, 1, 0, 1)]);
        let mut buf = Vec::new();
        density_values(&s, &cfg(7, 1.0, 1.0, ThreshMode::Fixed))
            .write_csv(&mut buf)
            .unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "index,f,kept,u\n0,1,1,\n");
    }

    #[test]
    fn config_validation() {
        assert!(DensityConfig::new(4, 1.0, 1.0, ThreshMode::Fixed, 0).is_err());
        assert!(DensityConfig::new(7, 0.0, 1.0, ThreshMode::Fixed, 0).is_err());
        assert!(DensityConfig::new(7, 1.0, 0.0, ThreshMode::Fixed, 0).is_err());
        assert!(DensityConfig::new(7, 1.0, f64::INFINITY, ThreshMode::Fixed, 0).is_ok());
    }

    #[test]
    fn per_event_macs_within_budget() {
        let s = stream((0..2000).map(|i| Event::new(i % 32, (i / 32) % 32, i as u64, 1)).collect());
        let (_, macs) = density_values_instrumented(&s, &cfg(7, 1e9, 1.0, ThreshMode::Fixed));
        assert!(macs.max_per_event <= 4 * 49);
        assert_eq!(macs.events, 2000);
    }
}
