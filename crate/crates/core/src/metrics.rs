//! Accuracy-vs-event-count summary, per-video histograms, offset sweeps and
//! the memory / MAC cost model.

use std::io::BufRead;

use rayon::prelude::*;

use crate::config::{Method, SamplerConfig};
use crate::error::{Error, Position, RecordErrorKind, Result};
use crate::event::{EventStream, StreamGeometry};
use crate::samplers::{spatial_subsample, temporal_subsample, SpatialConfig, TemporalConfig};

/// `(mean_count, accuracy)` samples with strictly increasing counts.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyCurve {
    points: Vec<(f64, f64)>,
}

impl AccuracyCurve {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::DegenerateCurve(format!(
                "need at least 2 points, got {}",
                points.len()
            )));
        }
        for (i, &(n, acc)) in points.iter().enumerate() {
            if !(n > 0.0 && n.is_finite()) {
                return Err(Error::DegenerateCurve(format!(
                    "point {i}: mean count must be positive, got {n}"
                )));
            }
            if !(0.0..=1.0).contains(&acc) {
                return Err(Error::DegenerateCurve(format!(
                    "point {i}: accuracy must lie in [0, 1], got {acc}"
                )));
            }
        }
        if points.windows(2).all(|w| w[0].0 == w[1].0) {
            return Err(Error::DegenerateCurve("all mean counts are equal".into()));
        }
        if let Some(i) = points.windows(2).position(|w| w[1].0 <= w[0].0) {
            return Err(Error::DegenerateCurve(format!(
                "mean counts must be strictly increasing (point {})",
                i + 1
            )));
        }
        Ok(AccuracyCurve { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Reads `mean_count,accuracy` rows. A non-numeric first line is taken as
    /// a header; rows need not be pre-sorted.
    pub fn from_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut points = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let line_no = i + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
            let parsed = match fields.as_slice() {
                [n, a] => n.parse::<f64>().ok().zip(a.parse::<f64>().ok()),
                _ => None,
            };
            match parsed {
                Some(p) => points.push(p),
                None if line_no == 1 => continue,
                None => {
                    return Err(Error::Record {
                        kind: RecordErrorKind::Malformed,
                        position: Position::Line(line_no),
                        detail: format!("expected `mean_count,accuracy`, got {trimmed:?}"),
                    })
                }
            }
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        AccuracyCurve::new(points)
    }
}

/// Trapezoidal area under accuracy against `log10(mean_count)`, divided by
/// the area of a constant accuracy of 1 over the same span.
pub fn nauc(curve: &AccuracyCurve) -> f64 {
    let pts = curve.points();
    let area: f64 = pts
        .windows(2)
        .map(|w| {
            let dx = w[1].0.log10() - w[0].0.log10();
            0.5 * (w[0].1 + w[1].1) * dx
        })
        .sum();
    let span = pts[pts.len() - 1].0.log10() - pts[0].0.log10();
    area / span
}

/// Counts per bin `[edges[i], edges[i+1])`; values outside the edges are
/// ignored.
pub fn count_histogram(counts: &[usize], edges: &[f64]) -> Result<Vec<usize>> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidConfig(
            "histogram needs at least two strictly increasing edges".into(),
        ));
    }
    let mut bins = vec![0usize; edges.len() - 1];
    for &c in counts {
        let v = c as f64;
        // partition_point gives the number of edges <= v
        let k = edges.partition_point(|&e| e <= v);
        if k >= 1 && k < edges.len() {
            bins[k - 1] += 1;
        }
    }
    Ok(bins)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OffsetRow {
    pub r_x0: u16,
    pub r_y0: u16,
    pub kept: usize,
    pub output: Option<EventStream>,
}

/// One row per `(r_x0, r_y0)` pair, row-major in `r_y0` then `r_x0`.
pub fn offset_sweep(stream: &EventStream, r_x: u16, r_y: u16, with_output: bool) -> Result<Vec<OffsetRow>> {
    // Validates the periods.
    SpatialConfig::new(r_x, r_y, 0, 0)?;
    let mut counts = vec![0usize; r_x as usize * r_y as usize];
    for e in &stream.events {
        counts[(e.y % r_y) as usize * r_x as usize + (e.x % r_x) as usize] += 1;
    }
    let offsets: Vec<(u16, u16)> = (0..r_y).flat_map(|y0| (0..r_x).map(move |x0| (x0, y0))).collect();
    Ok(offsets
        .into_par_iter()
        .map(|(r_x0, r_y0)| OffsetRow {
            r_x0,
            r_y0,
            kept: counts[r_y0 as usize * r_x as usize + r_x0 as usize],
            output: with_output.then(|| {
                spatial_subsample(stream, &SpatialConfig { r_x, r_y, r_x0, r_y0 })
            }),
        })
        .collect())
}

/// Temporal analog of [`offset_sweep`]: one output per phase offset
/// `floor(j·w_t / r_t)`, `j` in `0..r_t`. The classes partition the input
/// exactly when `r_t` divides `w_t`.
pub fn temporal_phase_sweep(stream: &EventStream, w_t: u64, r_t: u64) -> Result<Vec<(u64, EventStream)>> {
    (0..r_t)
        .map(|j| {
            let dt0 = TemporalConfig::phase_offset(w_t, r_t, j);
            let cfg = TemporalConfig::new(w_t, r_t, dt0)?;
            Ok((dt0, temporal_subsample(stream, &cfg)))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub method: Method,
    /// Asymptotic memory, e.g. `O(HW)`.
    pub memory_symbolic: String,
    /// Memory units for the given sensor size.
    pub memory_units: u64,
    pub macs_per_event: u64,
}

/// Closed-form memory and per-event MAC cost of a method on a `W × H` sensor.
///
/// Input-independent methods store a handful of parameters (reported as one
/// unit) and perform no MACs. Event Count keeps one accumulator per output
/// pixel and does one MAC per event. The corner method keeps one TOS frame and
/// costs `(2·ksize² + 3·block_size² + 10)·w_c²`; density keeps an
/// (accumulator, timestamp) pair per pixel and polarity and costs `4·w_d²`.
pub fn cost_model(method: &SamplerConfig, geometry: StreamGeometry) -> CostReport {
    let hw = geometry.n_pixels() as u64;
    let (memory_symbolic, memory_units, macs_per_event) = match method {
        SamplerConfig::Spatial(_) | SamplerConfig::Temporal(_) | SamplerConfig::Random(_) => {
            ("O(1)".to_string(), 1, 0)
        }
        SamplerConfig::EventCount(c) => {
            let out = c.output_geometry(geometry);
            ("O(HW/(r_y r_x))".to_string(), out.n_pixels() as u64, 1)
        }
        SamplerConfig::Corner(c) => {
            let (k, b, w) = (c.ksize as u64, c.block_size as u64, c.w_c as u64);
            ("O(HW)".to_string(), hw, (2 * k * k + 3 * b * b + 10) * w * w)
        }
        SamplerConfig::Density(c) => {
            let w = c.w_d as u64;
            ("O(HW)".to_string(), 2 * hw, 4 * w * w)
        }
        SamplerConfig::DensityNormalized(c) => {
            let w = c.w_d as u64;
            // The per-stream density buffer adds O(N) on top.
            ("O(HW + N)".to_string(), 2 * hw, 4 * w * w)
        }
    };
    CostReport {
        method: method.method(),
        memory_symbolic,
        memory_units,
        macs_per_event,
    }
}
