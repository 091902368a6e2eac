//! Streaming event-camera subsampling toolkit.
//!
//! Six hardware-friendly samplers (spatial, temporal, random, Event Count,
//! causal density and TOS/Harris corner), a bisection calibrator that matches
//! mean event counts across methods, the accuracy-vs-log-count summary metric,
//! a memory/MAC cost model and a seeded synthetic scene generator.

pub mod calibrate;
pub mod config;
pub mod corner;
pub mod density;
pub mod error;
pub mod event;
pub mod evio;
pub mod macs;
pub mod metrics;
pub mod rng;
pub mod samplers;
pub mod synth;

pub use crate::config::{FreeParameter, Method, SamplerConfig};
pub use crate::error::{Error, Result};
pub use crate::event::{
    stream_stats, validate_stream, Event, EventStream, StreamGeometry, StreamStats,
    ValidationReport, Violation, ViolationKind,
};
