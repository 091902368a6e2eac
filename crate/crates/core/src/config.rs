//! Tagged union over the six subsampling methods.

use std::fmt;
use std::str::FromStr;

use crate::corner::{corner_subsample, CornerConfig};
use crate::density::{density_filter, density_filter_normalized, DensityConfig};
use crate::error::Error;
use crate::event::EventStream;
use crate::samplers::{
    event_count_subsample, random_subsample, spatial_subsample, temporal_subsample,
    EventCountConfig, RandomConfig, SpatialConfig, TemporalConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Spatial,
    Temporal,
    Random,
    EventCount,
    Density,
    DensityNormalized,
    Corner,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Spatial,
        Method::Temporal,
        Method::Random,
        Method::EventCount,
        Method::Density,
        Method::DensityNormalized,
        Method::Corner,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Spatial => "spatial",
            Method::Temporal => "temporal",
            Method::Random => "random",
            Method::EventCount => "event-count",
            Method::Density => "density",
            Method::DensityNormalized => "density-normalized",
            Method::Corner => "corner",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SamplerConfig {
    Spatial(SpatialConfig),
    Temporal(TemporalConfig),
    Random(RandomConfig),
    EventCount(EventCountConfig),
    Density(DensityConfig),
    /// Non-causal variant dividing densities by their stream mean.
    DensityNormalized(DensityConfig),
    Corner(CornerConfig),
}

/// The scalar each method is calibrated on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FreeParameter {
    Rho,
    FThresh,
    HThresh,
    PThresh,
}

impl FreeParameter {
    pub fn name(&self) -> &'static str {
        match self {
            FreeParameter::Rho => "rho",
            FreeParameter::FThresh => "fthresh",
            FreeParameter::HThresh => "hthresh",
            FreeParameter::PThresh => "p-thresh",
        }
    }
}

impl SamplerConfig {
    pub fn method(&self) -> Method {
        match self {
            SamplerConfig::Spatial(_) => Method::Spatial,
            SamplerConfig::Temporal(_) => Method::Temporal,
            SamplerConfig::Random(_) => Method::Random,
            SamplerConfig::EventCount(_) => Method::EventCount,
            SamplerConfig::Density(_) => Method::Density,
            SamplerConfig::DensityNormalized(_) => Method::DensityNormalized,
            SamplerConfig::Corner(_) => Method::Corner,
        }
    }

    pub fn apply(&self, stream: &EventStream) -> EventStream {
        match self {
            SamplerConfig::Spatial(c) => spatial_subsample(stream, c),
            SamplerConfig::Temporal(c) => temporal_subsample(stream, c),
            SamplerConfig::Random(c) => random_subsample(stream, c),
            SamplerConfig::EventCount(c) => event_count_subsample(stream, c),
            SamplerConfig::Density(c) => density_filter(stream, c),
            SamplerConfig::DensityNormalized(c) => density_filter_normalized(stream, c),
            SamplerConfig::Corner(c) => corner_subsample(stream, c),
        }
    }

    pub fn free_parameter(&self) -> Option<FreeParameter> {
        match self {
            SamplerConfig::Spatial(_) | SamplerConfig::Temporal(_) => None,
            SamplerConfig::Random(_) => Some(FreeParameter::Rho),
            SamplerConfig::EventCount(_) => Some(FreeParameter::PThresh),
            SamplerConfig::Density(_) | SamplerConfig::DensityNormalized(_) => {
                Some(FreeParameter::FThresh)
            }
            SamplerConfig::Corner(_) => Some(FreeParameter::HThresh),
        }
    }

    pub fn free_value(&self) -> Option<f64> {
        match self {
            SamplerConfig::Random(c) => Some(c.rho),
            SamplerConfig::EventCount(c) => Some(c.p_thresh),
            SamplerConfig::Density(c) | SamplerConfig::DensityNormalized(c) => Some(c.f_thresh),
            SamplerConfig::Corner(c) => Some(c.h_thresh),
            _ => None,
        }
    }

    /// Copy with the free parameter replaced. Methods without one are
    /// returned unchanged.
    pub fn with_free_value(&self, v: f64) -> SamplerConfig {
        let mut out = *self;
        match &mut out {
            SamplerConfig::Random(c) => c.rho = v,
            SamplerConfig::EventCount(c) => c.p_thresh = v,
            SamplerConfig::Density(c) | SamplerConfig::DensityNormalized(c) => c.f_thresh = v,
            SamplerConfig::Corner(c) => c.h_thresh = v,
            _ => {}
        }
        out
    }

    /// Whether the output is a sub-multiset of the input.
    pub fn is_selective(&self) -> bool {
        !matches!(self, SamplerConfig::EventCount(_))
    }
}
