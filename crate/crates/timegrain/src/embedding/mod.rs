//! Input pipeline: reversible instance normalization, channel-independent
//! windowing and patching, span sampling, blank-infilling instance
//! construction with permutation and special tokens, linear + two-level
//! positional embedding, and time-granularity encoding.
//!
//! Channel independence holds by construction: every function here takes a
//! single channel's data and never sees another channel.

mod embed;
mod granularity;
mod instance;
mod patching;
mod revin;
mod spans;

pub use embed::{embed_tokens, EmbedVars};
pub use granularity::{
    encode_granularity, encode_granularity_value, scale_quintuple, GranularityQuintuple,
    GranularityScaling,
};
pub use instance::{build_infilling_instance, tail_instance, InfillingInstance, Target, Token};
pub use patching::{window_and_patch, PatchMatrix};
pub use revin::{destandardize, revin_denormalize, revin_normalize, standardize, RevinStats};
pub use spans::{sample_spans, SpanSet};
