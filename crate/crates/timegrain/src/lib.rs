//! Library for desk-scale time-series modeling with a decoder-only
//! backbone that mixes temporal self-attention with granularity-gated
//! frequency-domain knowledge attention, trained by autoregressive blank
//! infilling, plus the spectral-distribution measurement tooling (2D KDE
//! of amplitude/phase vs frequency) that motivates the gating.
//!
//! Start with the runnable programs in `examples/`; each one exercises a
//! major capability end to end. The `timegrain` binary wraps the same
//! library behind config-driven `analyze | pretrain | forecast | impute |
//! detect` subcommands.

pub mod analysis;
pub mod attention;
pub mod backbone;
pub mod cli;
pub mod config;
pub mod data;
pub mod embedding;
pub mod error;
pub mod numerics;
pub mod pretrain;
pub mod spectral;
pub mod tasks;

pub use error::{Error, Result};
