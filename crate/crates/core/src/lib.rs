//! Capacity-cost functions of continuous memoryless channels, computed by
//! moving particles along the Wasserstein gradient of the Lagrangian with
//! importance-sampled integrals. Includes the rate-distortion counterpart and
//! a discrete Blahut-Arimoto reference solver.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`particles`] | [`ParticleSet`], initial measures |
//! | [`channels`] | AWGN, MIMO-AWGN and fading channels, quantization |
//! | [`estimator`] | importance-sampled potential and objective estimates |
//! | [`wgd`] | transport step, dual ascent, the solve loop |
//! | [`rd`] | rate-distortion on continuous sources |
//! | [`ba`] | finite-alphabet Blahut-Arimoto |
//! | [`diagnostics`] | 1-D `W_2`, gradient checks, clustering, water-filling |
//!
//! All rates are in nats.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ba;
pub mod channels;
pub mod config;
pub mod cost;
pub mod diagnostics;
pub mod error;
pub mod estimator;
pub mod numeric;
pub mod particles;
pub mod rd;
pub mod rng;
pub mod wgd;

pub use channels::{
    ChannelModel, ChannelSpec, DiscreteChannel, FadingCsirChannel, FadingNoCsirChannel, MimoAwgnChannel,
};
pub use config::{DualConfig, DualMode, IterationRecord, SolverConfig};
pub use cost::{CostModel, CostSpec, PowerCost, ZeroCost};
pub use error::{Error, Result};
pub use estimator::{ImportanceConfig, Proposal};
pub use particles::{InitSpec, ParticleSet};
pub use wgd::{solve, solve_with_sink, SolveFailure, SolveResult, StepSchedule, StopReason};
