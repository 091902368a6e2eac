use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Deserializer, Serialize};

use evsub::corner::CornerConfig;
use evsub::density::{DensityConfig, ThreshMode};
use evsub::rng::SplitMix64;
use evsub::samplers::{EventCountConfig, RandomConfig, SpatialConfig, TemporalConfig};
use evsub::{Method, SamplerConfig};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Fixed,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OffsetArg {
    /// Use --rx0/--ry0 or --dt0-ms as given.
    Fixed,
    /// Draw the offset per file from the seeded generator.
    Random,
}

/// Parses a threshold: a number, `inf`, `-inf`, `keep-all` or `keep-none`.
pub fn parse_thresh(s: &str) -> Result<f64, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "keep-all" | "-inf" => Ok(f64::NEG_INFINITY),
        "keep-none" | "inf" | "+inf" => Ok(f64::INFINITY),
        other => other
            .parse::<f64>()
            .ok()
            .filter(|v| !v.is_nan())
            .ok_or_else(|| format!("expected a number, inf, keep-all or keep-none, got {s:?}")),
    }
}

fn de_thresh<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Int(i64),
        Word(String),
    }
    match Option::<Raw>::deserialize(d)? {
        None => Ok(None),
        Some(Raw::Num(v)) => Ok(Some(v)),
        Some(Raw::Int(v)) => Ok(Some(v as f64)),
        Some(Raw::Word(w)) => parse_thresh(&w).map(Some).map_err(serde::de::Error::custom),
    }
}

fn de_float<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Int(i64),
    }
    Ok(Option::<Raw>::deserialize(d)?.map(|r| match r {
        Raw::Num(v) => v,
        Raw::Int(v) => v as f64,
    }))
}

/// Method selection and every method parameter. The same keys are accepted
/// in a TOML config file; flags given on the command line take precedence.
#[derive(Args, Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct MethodParams {
    /// spatial, temporal, random, event-count, density, density-normalized or corner
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,

    /// Horizontal period (spatial) or window width (event-count)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rx: Option<u16>,
    /// Vertical period (spatial) or window height (event-count)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ry: Option<u16>,
    /// Horizontal spatial offset
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rx0: Option<u16>,
    /// Vertical spatial offset
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ry0: Option<u16>,
    /// How spatial and temporal offsets are chosen
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offset: Option<OffsetArg>,

    /// Temporal window in milliseconds
    #[arg(long)]
    #[serde(default, deserialize_with = "de_float", skip_serializing_if = "Option::is_none")]
    pub wt_ms: Option<f64>,
    /// Temporal subsampling ratio
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rt: Option<u64>,
    /// Temporal phase offset in milliseconds
    #[arg(long)]
    #[serde(default, deserialize_with = "de_float", skip_serializing_if = "Option::is_none")]
    pub dt0_ms: Option<f64>,

    /// Keep probability for random subsampling
    #[arg(long)]
    #[serde(default, deserialize_with = "de_float", skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,

    /// Event-count threshold
    #[arg(long)]
    #[serde(default, deserialize_with = "de_float", skip_serializing_if = "Option::is_none")]
    pub p_thresh: Option<f64>,

    /// Density neighborhood size (odd)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wd: Option<u16>,
    /// Density decay constant in milliseconds
    #[arg(long)]
    #[serde(default, deserialize_with = "de_float", skip_serializing_if = "Option::is_none")]
    pub tau_ms: Option<f64>,
    /// Density threshold (number or inf)
    #[arg(long, value_parser = parse_thresh)]
    #[serde(default, deserialize_with = "de_thresh", skip_serializing_if = "Option::is_none")]
    pub fthresh: Option<f64>,
    /// Density thresholding rule
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thresh_mode: Option<ModeArg>,

    /// Corner patch size (odd)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wc: Option<u16>,
    /// Sobel aperture
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ksize: Option<u16>,
    /// Structure tensor window
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub block_size: Option<u16>,
    /// Harris k
    #[arg(long)]
    #[serde(default, deserialize_with = "de_float", skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    /// Harris threshold (number, keep-all or keep-none)
    #[arg(long, value_parser = parse_thresh, allow_hyphen_values = true)]
    #[serde(default, deserialize_with = "de_thresh", skip_serializing_if = "Option::is_none")]
    pub hthresh: Option<f64>,

    /// Global seed; flags and EVSUB_SEED take precedence over the config file
    #[arg(skip)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,

    /// TOML file with the same keys as these flags
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

macro_rules! merge_fields {
    ($a:ident, $b:ident; $($f:ident),*) => {
        $( if $a.$f.is_none() { $a.$f = $b.$f; } )*
    };
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn ms_to_us(name: &str, ms: f64) -> Result<u64, CliError> {
    if !(ms >= 0.0 && ms.is_finite()) {
        return Err(usage(format!("--{name} must be a non-negative number, got {ms}")));
    }
    Ok((ms * 1000.0).round() as u64)
}

impl MethodParams {
    /// Fills unset fields from the config file named by `--config`.
    pub fn resolve(mut self, cli_seed: Option<u64>) -> Result<MethodParams, CliError> {
        if let Some(path) = self.config.clone() {
            let file = load_config(&path)?;
            merge_fields!(self, file; method, rx, ry, rx0, ry0, offset, wt_ms, rt, dt0_ms, rho,
                p_thresh, wd, tau_ms, fthresh, thresh_mode, wc, ksize, block_size, k, hthresh, seed);
        }
        if cli_seed.is_some() {
            self.seed = cli_seed;
        }
        Ok(self)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn method(&self) -> Result<Method, CliError> {
        let name = self.method.as_deref().ok_or_else(|| usage("--method is required"))?;
        name.parse::<Method>().map_err(|e| usage(e.to_string()))
    }

    pub fn random_offset(&self) -> bool {
        self.offset == Some(OffsetArg::Random)
    }

    /// Builds the sampler. With `need_free = false` a missing free parameter
    /// gets a placeholder (calibration and cost do not depend on it).
    pub fn build(&self, need_free: bool) -> Result<SamplerConfig, CliError> {
        let method = self.method()?;
        let seed = self.seed();
        let need = |v: Option<f64>, flag: &str, placeholder: f64| match v {
            Some(v) => Ok(v),
            None if !need_free => Ok(placeholder),
            None => Err(usage(format!("--{flag} is required for --method {method}"))),
        };
        let both = |a: Option<u16>, b: Option<u16>| match (a, b) {
            (Some(a), Some(b)) => Ok((a, b)),
            _ => Err(usage(format!("--rx and --ry are required for --method {method}"))),
        };
        let bad = |e: evsub::Error| usage(e.to_string());
        let cfg = match method {
            Method::Spatial => {
                let (rx, ry) = both(self.rx, self.ry)?;
                SamplerConfig::Spatial(
                    SpatialConfig::new(rx, ry, self.rx0.unwrap_or(0), self.ry0.unwrap_or(0)).map_err(bad)?,
                )
            }
            Method::Temporal => {
                let wt = self.wt_ms.ok_or_else(|| usage("--wt-ms is required for --method temporal"))?;
                let rt = self.rt.ok_or_else(|| usage("--rt is required for --method temporal"))?;
                let dt0 = ms_to_us("dt0-ms", self.dt0_ms.unwrap_or(0.0))?;
                SamplerConfig::Temporal(TemporalConfig::new(ms_to_us("wt-ms", wt)?, rt, dt0).map_err(bad)?)
            }
            Method::Random => {
                SamplerConfig::Random(RandomConfig::new(need(self.rho, "rho", 0.5)?, seed).map_err(bad)?)
            }
            Method::EventCount => {
                let (rx, ry) = both(self.rx, self.ry)?;
                let p = need(self.p_thresh, "p-thresh", 1.0)?;
                SamplerConfig::EventCount(EventCountConfig::new(rx, ry, p).map_err(bad)?)
            }
            Method::Density | Method::DensityNormalized => {
                let tau_ms = self.tau_ms.unwrap_or(30.0);
                if !(tau_ms > 0.0 && tau_ms.is_finite()) {
                    return Err(usage(format!("--tau-ms must be positive, got {tau_ms}")));
                }
                let mode = match self.thresh_mode.unwrap_or(ModeArg::Random) {
                    ModeArg::Fixed => ThreshMode::Fixed,
                    ModeArg::Random => ThreshMode::Random,
                };
                let f = need(self.fthresh, "fthresh", 1.0)?;
                let c = DensityConfig::new(self.wd.unwrap_or(7), tau_ms * 1000.0, f, mode, seed).map_err(bad)?;
                if method == Method::Density {
                    SamplerConfig::Density(c)
                } else {
                    SamplerConfig::DensityNormalized(c)
                }
            }
            Method::Corner => {
                let d = CornerConfig::default();
                SamplerConfig::Corner(
                    CornerConfig::new(
                        self.wc.unwrap_or(d.w_c),
                        self.ksize.unwrap_or(d.ksize),
                        self.block_size.unwrap_or(d.block_size),
                        self.k.unwrap_or(d.k),
                        need(self.hthresh, "hthresh", 0.0)?,
                    )
                    .map_err(bad)?,
                )
            }
        };
        Ok(cfg)
    }

    /// Parameters describing `cfg`, in the form read back by `--config`.
    pub fn from_config(cfg: &SamplerConfig, seed: u64) -> MethodParams {
        let mut p = MethodParams {
            method: Some(cfg.method().name().to_string()),
            seed: Some(seed),
            ..MethodParams::default()
        };
        match cfg {
            SamplerConfig::Spatial(c) => {
                (p.rx, p.ry, p.rx0, p.ry0) = (Some(c.r_x), Some(c.r_y), Some(c.r_x0), Some(c.r_y0));
            }
            SamplerConfig::Temporal(c) => {
                p.wt_ms = Some(c.w_t as f64 / 1000.0);
                p.rt = Some(c.r_t);
                p.dt0_ms = Some(c.dt0 as f64 / 1000.0);
            }
            SamplerConfig::Random(c) => {
                p.rho = Some(c.rho);
            }
            SamplerConfig::EventCount(c) => {
                (p.rx, p.ry, p.p_thresh) = (Some(c.r_x), Some(c.r_y), Some(c.p_thresh));
            }
            SamplerConfig::Density(c) | SamplerConfig::DensityNormalized(c) => {
                p.wd = Some(c.w_d);
                p.tau_ms = Some(c.tau / 1000.0);
                p.fthresh = Some(c.f_thresh);
                p.thresh_mode = Some(match c.mode {
                    ThreshMode::Fixed => ModeArg::Fixed,
                    ThreshMode::Random => ModeArg::Random,
                });
            }
            SamplerConfig::Corner(c) => {
                p.wc = Some(c.w_c);
                p.ksize = Some(c.ksize);
                p.block_size = Some(c.block_size);
                p.k = Some(c.k);
                p.hthresh = Some(c.h_thresh);
            }
        }
        p
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("parameters serialize to TOML")
    }
}

pub fn load_config(path: &Path) -> Result<MethodParams, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| usage(format!("invalid config {}: {e}", path.display())))
}

/// Replaces the offset of a spatial or temporal sampler with one drawn from
/// the per-file generator. Returns the new config and a description.
pub fn draw_offset(cfg: &SamplerConfig, seed: u64, source_id: &str) -> (SamplerConfig, String) {
    let mut rng = SplitMix64::for_stream(seed, &format!("{source_id}#offset"));
    match cfg {
        SamplerConfig::Spatial(c) => {
            let rx0 = rng.below(c.r_x as u64) as u16;
            let ry0 = rng.below(c.r_y as u64) as u16;
            (
                SamplerConfig::Spatial(SpatialConfig { r_x0: rx0, r_y0: ry0, ..*c }),
                format!("rx0={rx0} ry0={ry0}"),
            )
        }
        SamplerConfig::Temporal(c) => {
            let j = rng.below(c.r_t);
            let dt0 = TemporalConfig::phase_offset(c.w_t, c.r_t, j);
            (
                SamplerConfig::Temporal(TemporalConfig { dt0, ..*c }),
                format!("dt0={dt0}us"),
            )
        }
        other => (*other, String::new()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(method: &str) -> MethodParams {
        MethodParams {
            method: Some(method.into()),
            ..MethodParams::default()
        }
    }

    #[test]
    fn threshold_words() {
        assert_eq!(parse_thresh("keep-all").unwrap(), f64::NEG_INFINITY);
        assert_eq!(parse_thresh("keep-none").unwrap(), f64::INFINITY);
        assert_eq!(parse_thresh("inf").unwrap(), f64::INFINITY);
        assert_eq!(parse_thresh("-0.5").unwrap(), -0.5);
        assert!(parse_thresh("nan").is_err());
        assert!(parse_thresh("lots").is_err());
    }

    #[test]
    fn fragment_round_trips() {
        let mut p = params("density");
        p.fthresh = Some(12.345678901234567);
        p.wd = Some(5);
        p.thresh_mode = Some(ModeArg::Fixed);
        p.seed = Some(3);
        let cfg = p.build(true).unwrap();
        let text = MethodParams::from_config(&cfg, 3).to_toml();
        let back: MethodParams = toml::from_str(&text).unwrap();
        assert_eq!(back.build(true).unwrap(), cfg);
    }

    #[test]
    fn infinite_thresholds_in_config() {
        let p: MethodParams = toml::from_str("method = \"corner\"\nhthresh = \"keep-all\"\n").unwrap();
        assert_eq!(p.hthresh, Some(f64::NEG_INFINITY));
        let p: MethodParams = toml::from_str("method = \"density\"\nfthresh = inf\nwd = 7\n").unwrap();
        assert_eq!(p.fthresh, Some(f64::INFINITY));
    }

    #[test]
    fn missing_free_parameter() {
        assert!(matches!(params("random").build(true), Err(CliError::Usage(_))));
        assert!(params("random").build(false).is_ok());
        assert!(matches!(params("spatial").build(false), Err(CliError::Usage(_))));
        assert!(matches!(params("bogus").build(false), Err(CliError::Usage(_))));
    }

    #[test]
    fn offsets_stay_in_range() {
        let mut p = params("spatial");
        (p.rx, p.ry) = (Some(10), Some(8));
        let cfg = p.build(true).unwrap();
        for id in ["a", "b", "c", "d"] {
            let (c, _) = draw_offset(&cfg, 1, id);
            match c {
                SamplerConfig::Spatial(s) => assert!(s.r_x0 < 10 && s.r_y0 < 8),
                _ => unreachable!(),
            }
        }
    }
}
