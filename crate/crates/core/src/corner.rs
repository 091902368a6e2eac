//! Corner-based subsampling on a Threshold-Ordinal Surface (TOS).
//!
//! Every event refreshes an 8-bit surface: the `w_c × w_c` neighborhood is
//! decremented (saturating at 0) and the event pixel is set to 255. The patch
//! around the event is then thresholded, scaled to `[0, 1]` and scored with the
//! Harris response at its center. Events whose score exceeds `h_thresh` are
//! kept.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::event::{Event, EventStream, StreamGeometry};
use crate::macs::MacCounter;

pub const TOS_MAX: u8 = 255;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornerConfig {
    /// Odd patch size, also the TOS neighborhood size.
    pub w_c: u16,
    /// Sobel aperture. Only 3 is supported.
    pub ksize: u16,
    /// Structure-tensor box window.
    pub block_size: u16,
    pub k: f64,
    /// `-inf` keeps every event, `+inf` none.
    pub h_thresh: f64,
}

impl Default for CornerConfig {
    fn default() -> Self {
        CornerConfig {
            w_c: 7,
            ksize: 3,
            block_size: 2,
            k: 0.04,
            h_thresh: 0.0,
        }
    }
}

impl CornerConfig {
    pub fn new(w_c: u16, ksize: u16, block_size: u16, k: f64, h_thresh: f64) -> Result<Self> {
        if w_c < 3 || w_c % 2 == 0 {
            return Err(Error::InvalidConfig(format!(
                "corner patch size must be odd and >= 3, got {w_c}"
            )));
        }
        if ksize != 3 {
            return Err(Error::InvalidConfig(format!(
                "only a 3x3 Sobel aperture is supported, got {ksize}"
            )));
        }
        if block_size == 0 || block_size > w_c {
            return Err(Error::InvalidConfig(format!(
                "block size must lie in [1, w_c], got {block_size}"
            )));
        }
        if !k.is_finite() || h_thresh.is_nan() {
            return Err(Error::InvalidConfig("Harris k and threshold must be numbers".into()));
        }
        Ok(CornerConfig {
            w_c,
            ksize,
            block_size,
            k,
            h_thresh,
        })
    }

    pub fn with_thresh(mut self, h_thresh: f64) -> Self {
        self.h_thresh = h_thresh;
        self
    }

    /// Surface values below this are cleared before scoring.
    pub fn clear_level(&self) -> u8 {
        (TOS_MAX as i32 - 2 * self.w_c as i32).max(0) as u8
    }
}

#[derive(Debug, Clone)]
pub struct TosState {
    geometry: StreamGeometry,
    radius: i32,
    surface: Vec<u8>,
}

impl TosState {
    pub fn new(geometry: StreamGeometry, w_c: u16) -> Self {
        TosState {
            geometry,
            radius: (w_c / 2) as i32,
            surface: vec![0; geometry.n_pixels()],
        }
    }

    pub fn get(&self, x: u16, y: u16) -> u8 {
        self.surface[self.geometry.index(x, y)]
    }

    pub fn surface(&self) -> &[u8] {
        &self.surface
    }

    pub fn update(&mut self, e: &Event) {
        let (w, h) = (self.geometry.width as i32, self.geometry.height as i32);
        let (cx, cy) = (e.x as i32, e.y as i32);
        for y in (cy - self.radius).max(0)..=(cy + self.radius).min(h - 1) {
            let row = (y * w) as usize;
            for x in (cx - self.radius).max(0)..=(cx + self.radius).min(w - 1) {
                let v = &mut self.surface[row + x as usize];
                *v = v.saturating_sub(1);
            }
        }
        let q = self.geometry.index(e.x, e.y);
        self.surface[q] = TOS_MAX;
    }

    /// `side × side` patch centered at `(x, y)` with replicated borders,
    /// cleared below `clear_level` and scaled to `[0, 1]`.
    pub fn patch(&self, x: u16, y: u16, side: u16, clear_level: u8, macs: &mut MacCounter) -> Vec<f64> {
        let r = (side / 2) as i32;
        let (w, h) = (self.geometry.width as i32, self.geometry.height as i32);
        let mut out = Vec::with_capacity(side as usize * side as usize);
        for dy in -r..=r {
            let py = (y as i32 + dy).clamp(0, h - 1);
            for dx in -r..=r {
                let px = (x as i32 + dx).clamp(0, w - 1);
                let v = self.surface[(py * w + px) as usize];
                out.push(if v < clear_level { 0.0 } else { v as f64 / TOS_MAX as f64 });
            }
        }
        macs.add(out.len() as u64);
        out
    }
}

/// Applies the TOS update rule for one event.
pub fn tos_update(state: &mut TosState, event: &Event) {
    state.update(event);
}

/// Harris response `det(M) - k·trace(M)²` at the center of a square patch.
pub fn harris_score(patch: &[f64], cfg: &CornerConfig) -> f64 {
    harris_score_counted(patch, cfg, &mut MacCounter::default())
}

/// As [`harris_score`], tallying multiply-accumulates into `macs`.
///
/// Only the structure tensor at the center is needed, so gradients are
/// evaluated on the `block_size²` pixels of its box window. The window of an
/// even block starts `block_size / 2` pixels before the center.
pub fn harris_score_counted(patch: &[f64], cfg: &CornerConfig, macs: &mut MacCounter) -> f64 {
    let side = cfg.w_c as i32;
    debug_assert_eq!(patch.len(), (side * side) as usize);
    let at = |x: i32, y: i32| patch[(y.clamp(0, side - 1) * side + x.clamp(0, side - 1)) as usize];

    let center = side / 2;
    let b = cfg.block_size as i32;
    let start = center - b / 2;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for wy in start..start + b {
        for wx in start..start + b {
            let (cx, cy) = (wx.clamp(0, side - 1), wy.clamp(0, side - 1));
            let p = |dx: i32, dy: i32| at(cx + dx, cy + dy);
            // 3x3 Sobel written as symmetric differences, exact on flat input
            let gx = (p(1, -1) - p(-1, -1)) + 2.0 * (p(1, 0) - p(-1, 0)) + (p(1, 1) - p(-1, 1));
            let gy = (p(-1, 1) - p(-1, -1)) + 2.0 * (p(0, 1) - p(0, -1)) + (p(1, 1) - p(1, -1));
            sxx += gx * gx;
            sxy += gx * gy;
            syy += gy * gy;
            // two Sobel passes, three products, three box accumulations
            macs.add(2 * 9 + 3 + 3);
        }
    }
    macs.add(4);
    let trace = sxx + syy;
    sxx * syy - sxy * sxy - cfg.k * trace * trace
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornerTraceEntry {
    pub index: usize,
    pub score: f64,
    pub kept: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CornerTrace {
    pub entries: Vec<CornerTraceEntry>,
}

impl CornerTrace {
    pub fn kept_mask(&self) -> Vec<bool> {
        self.entries.iter().map(|e| e.kept).collect()
    }

    pub fn scores(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.score).collect()
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "index,score,kept")?;
        for e in &self.entries {
            writeln!(w, "{},{},{}", e.index, e.score, e.kept as u8)?;
        }
        Ok(())
    }
}

/// Per-event scores and keep decisions, plus the MAC tally.
pub fn corner_trace(stream: &EventStream, cfg: &CornerConfig) -> (CornerTrace, MacCounter) {
    let mut tos = TosState::new(stream.geometry, cfg.w_c);
    let mut macs = MacCounter::default();
    let clear = cfg.clear_level();
    let entries = stream
        .events
        .iter()
        .enumerate()
        .map(|(index, e)| {
            tos.update(e);
            let patch = tos.patch(e.x, e.y, cfg.w_c, clear, &mut macs);
            let score = harris_score_counted(&patch, cfg, &mut macs);
            macs.finish_event();
            CornerTraceEntry {
                index,
                score,
                kept: score > cfg.h_thresh,
            }
        })
        .collect();
    (CornerTrace { entries }, macs)
}

pub fn corner_subsample(stream: &EventStream, cfg: &CornerConfig) -> EventStream {
    stream.masked(&corner_trace(stream, cfg).0.kept_mask())
}
