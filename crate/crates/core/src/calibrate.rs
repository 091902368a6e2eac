//! Bisection of a method's free parameter to hit a target mean event count
//! over a dataset.
//!
//! Thresholds are searched on a log scale (they span several decades), the
//! keep probability on a linear scale. The Harris threshold can be negative,
//! so it is searched on an `asinh` scale, which behaves like a log for large
//! magnitudes. Random-threshold methods use the template's seed for every
//! evaluation, so the mean count is a deterministic function of the parameter.

use rayon::prelude::*;

use crate::config::{FreeParameter, SamplerConfig};
use crate::corner::corner_trace;
use crate::density::{density_values, normalized_trace, ThreshMode};
use crate::error::{Error, Result};
use crate::event::EventStream;
use crate::samplers::random_draws;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchScale {
    Linear,
    Log,
    Asinh,
}

impl SearchScale {
    fn forward(&self, v: f64) -> f64 {
        match self {
            SearchScale::Linear => v,
            SearchScale::Log => v.ln(),
            SearchScale::Asinh => v.asinh(),
        }
    }

    fn inverse(&self, s: f64) -> f64 {
        match self {
            SearchScale::Linear => s,
            SearchScale::Log => s.exp(),
            SearchScale::Asinh => s.sinh(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CalibrationRequest<'a> {
    pub dataset: &'a [EventStream],
    /// Method template; its free parameter is overwritten during the search.
    pub template: SamplerConfig,
    pub target_mean: f64,
    pub rel_tol: f64,
    pub max_iters: usize,
    /// Search interval for the free parameter; defaults per method.
    pub bracket: Option<(f64, f64)>,
}

impl<'a> CalibrationRequest<'a> {
    pub fn new(dataset: &'a [EventStream], template: SamplerConfig, target_mean: f64) -> Self {
        CalibrationRequest {
            dataset,
            template,
            target_mean,
            rel_tol: 0.02,
            max_iters: 40,
            bracket: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub parameter: f64,
    pub config: SamplerConfig,
    pub achieved_mean: f64,
    /// Number of midpoint evaluations; endpoint probes are not counted.
    pub iterations: usize,
    pub per_stream_counts: Vec<usize>,
    /// False when `max_iters` ran out before the tolerance was met.
    pub converged: bool,
}

/// Default search interval and scale for a template.
pub fn default_bracket(template: &SamplerConfig) -> Option<(f64, f64, SearchScale)> {
    match template {
        SamplerConfig::Random(_) => Some((0.0, 1.0, SearchScale::Linear)),
        SamplerConfig::Density(_) | SamplerConfig::DensityNormalized(_) => {
            Some((1e-3, 1e6, SearchScale::Log))
        }
        SamplerConfig::Corner(_) => Some((-1e4, 1e4, SearchScale::Asinh)),
        SamplerConfig::EventCount(c) => {
            // Below 1/(r_x·r_y) a single event can fire more than once.
            Some((1.0 / (c.r_x as f64 * c.r_y as f64), 1e3, SearchScale::Log))
        }
        SamplerConfig::Spatial(_) | SamplerConfig::Temporal(_) => None,
    }
}

/// Per-stream quantities that do not depend on the free parameter, so that a
/// candidate can be scored without rerunning the sampler.
enum Precomputed {
    /// Keep iff draw < rho.
    Draws(Vec<Vec<f64>>),
    /// Keep iff f >= thresh.
    Fixed(Vec<Vec<f64>>),
    /// Keep iff f >= u·thresh.
    Randomized(Vec<Vec<(f64, f64)>>),
    /// Keep iff score > thresh.
    Scores(Vec<Vec<f64>>),
    /// Rerun the sampler for every candidate.
    Direct,
}

impl Precomputed {
    fn build(dataset: &[EventStream], template: &SamplerConfig) -> Precomputed {
        match template {
            SamplerConfig::Random(c) => {
                Precomputed::Draws(dataset.par_iter().map(|s| random_draws(s, c.seed)).collect())
            }
            SamplerConfig::Density(c) | SamplerConfig::DensityNormalized(c) => {
                let normalized = matches!(template, SamplerConfig::DensityNormalized(_));
                let traces: Vec<_> = dataset
                    .par_iter()
                    .map(|s| {
                        if normalized {
                            normalized_trace(s, c)
                        } else {
                            density_values(s, c)
                        }
                    })
                    .collect();
                match c.mode {
                    ThreshMode::Fixed => {
                        Precomputed::Fixed(traces.iter().map(|t| t.values()).collect())
                    }
                    ThreshMode::Random => Precomputed::Randomized(
                        traces
                            .iter()
                            .map(|t| {
                                t.entries
                                    .iter()
                                    .map(|e| (e.f, e.u.unwrap_or(0.0)))
                                    .collect()
                            })
                            .collect(),
                    ),
                }
            }
            SamplerConfig::Corner(c) => Precomputed::Scores(
                dataset
                    .par_iter()
                    .map(|s| corner_trace(s, c).0.scores())
                    .collect(),
            ),
            _ => Precomputed::Direct,
        }
    }

    fn counts(&self, dataset: &[EventStream], template: &SamplerConfig, v: f64) -> Vec<usize> {
        match self {
            Precomputed::Draws(d) => d.iter().map(|us| us.iter().filter(|&&u| u < v).count()).collect(),
            Precomputed::Fixed(d) => d.iter().map(|fs| fs.iter().filter(|&&f| f >= v).count()).collect(),
            Precomputed::Randomized(d) => d
                .iter()
                .map(|fu| fu.iter().filter(|&&(f, u)| f >= u * v).count())
                .collect(),
            Precomputed::Scores(d) => d.iter().map(|hs| hs.iter().filter(|&&h| h > v).count()).collect(),
            Precomputed::Direct => {
                let cfg = template.with_free_value(v);
                dataset.par_iter().map(|s| cfg.apply(s).len()).collect()
            }
        }
    }
}

fn mean(counts: &[usize]) -> f64 {
    if counts.is_empty() {
        0.0
    } else {
        counts.iter().sum::<usize>() as f64 / counts.len() as f64
    }
}

/// Mean kept count over the dataset when the sampler runs with free value `v`.
pub fn evaluate_mean(dataset: &[EventStream], template: &SamplerConfig, v: f64) -> f64 {
    let cfg = template.with_free_value(v);
    let counts: Vec<usize> = dataset.par_iter().map(|s| cfg.apply(s).len()).collect();
    mean(&counts)
}

pub fn calibrate_threshold(req: &CalibrationRequest) -> Result<CalibrationResult> {
    if !(req.target_mean > 0.0 && req.target_mean.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "target mean must be positive, got {}",
            req.target_mean
        )));
    }
    if !(req.rel_tol > 0.0 && req.rel_tol < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "relative tolerance must lie in (0, 1), got {}",
            req.rel_tol
        )));
    }
    let param = req.template.free_parameter().ok_or_else(|| {
        Error::InvalidConfig(format!(
            "method {} has no scalar parameter to calibrate",
            req.template.method()
        ))
    })?;
    let (def_lo, def_hi, scale) = default_bracket(&req.template).expect("free parameter implies a bracket");
    let (lo, hi) = req.bracket.unwrap_or((def_lo, def_hi));
    if !(lo < hi) || (scale == SearchScale::Log && lo <= 0.0) {
        return Err(Error::InvalidConfig(format!("invalid search bracket [{lo}, {hi}]")));
    }

    let pre = Precomputed::build(req.dataset, &req.template);
    let eval = |v: f64| {
        let counts = pre.counts(req.dataset, &req.template, v);
        (mean(&counts), counts)
    };
    let within = |m: f64| (m / req.target_mean - 1.0).abs() <= req.rel_tol;
    let finish = |v: f64, m: f64, counts: Vec<usize>, iterations: usize, converged: bool| CalibrationResult {
        parameter: v,
        config: req.template.with_free_value(v),
        achieved_mean: m,
        iterations,
        per_stream_counts: counts,
        converged,
    };

    let (m_lo, c_lo) = eval(lo);
    let (m_hi, c_hi) = eval(hi);
    // The mean rises with rho and falls with every threshold.
    let increasing = param == FreeParameter::Rho;
    if (increasing && m_lo > m_hi) || (!increasing && m_lo < m_hi) {
        return Err(Error::NotMonotone(format!(
            "{} = {lo} gives mean {m_lo}, {} = {hi} gives mean {m_hi}",
            param.name(),
            param.name()
        )));
    }
    let (m_min, m_max) = (m_lo.min(m_hi), m_lo.max(m_hi));
    if req.target_mean > m_max * (1.0 + req.rel_tol) || req.target_mean < m_min * (1.0 - req.rel_tol) {
        return Err(Error::Infeasible {
            target: req.target_mean,
            min: m_min,
            max: m_max,
        });
    }
    // Prefer the endpoint whose mean is closer to the target when both qualify.
    let mut ends = [(lo, m_lo, c_lo), (hi, m_hi, c_hi)];
    ends.sort_by(|a, b| {
        (a.1 - req.target_mean)
            .abs()
            .total_cmp(&(b.1 - req.target_mean).abs())
    });
    if let Some((v, m, c)) = ends.iter().find(|e| within(e.1)).cloned() {
        return Ok(finish(v, m, c, 0, true));
    }

    // Invariant: mean(s_low) is on the "too many" side for decreasing maps.
    let (mut s_a, mut s_b) = (scale.forward(lo), scale.forward(hi));
    let mut best = ends[0].clone();
    for iter in 1..=req.max_iters {
        let s_mid = 0.5 * (s_a + s_b);
        let v = scale.inverse(s_mid);
        let (m, counts) = eval(v);
        if within(m) {
            return Ok(finish(v, m, counts, iter, true));
        }
        if (m - req.target_mean).abs() < (best.1 - req.target_mean).abs() {
            best = (v, m, counts);
        }
        let too_many = m > req.target_mean;
        // Moving towards `hi` lowers a decreasing mean and raises an increasing one.
        if too_many != increasing {
            s_a = s_mid;
        } else {
            s_b = s_mid;
        }
    }
    let (v, m, c) = best;
    Ok(finish(v, m, c, req.max_iters, false))
}
