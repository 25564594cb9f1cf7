//! Danmaku generation and evaluation.
//!
//! Danmakus (bullet-hell shooting patterns) are encoded as fixed-length
//! sequences of normalized bullet-builder calls, simulated frame by frame to
//! compute shooting frequency, mean momentum and coverage, and generated by
//! three GAN families trained on a small autodiff core.

pub mod agent;
pub mod codec;
pub mod corpus;
pub mod error;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod sim;
pub mod tensor;
pub mod trainer;

pub use codec::{DanmakuProgram, ParametricSequence, ShotEvent};
pub use error::{Error, Result};
pub use metrics::MetricsReport;
pub use sim::{SimConfig, SimTrace};
