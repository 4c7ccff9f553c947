//! Group-relative policy optimisation for fine-grained sub-score evaluation.
//!
//! The crate covers the whole pipeline at desk scale:
//!
//! - [`parser`]: structured completion grammar (think block, step cues, six
//!   sub-score tags).
//! - [`rewards`]: reasoning, format and Gaussian accuracy rewards.
//! - [`sdw`]: F1-driven per-aspect reward weights.
//! - [`mgas`]: majority-vote difficulty and advantage scaling.
//! - [`policy`], [`grpo`], [`train`]: a seven-token linear-softmax policy
//!   trained with the KL-regularised group-relative objective.
//! - [`synth`]: the synthetic error-injection corpus.
//! - [`metrics`]: Kendall tau-b, Spearman rho and per-aspect reports.
//! - [`config`] and [`cli`]: run configuration and the `sgrpo` command line.

pub mod aspect;
pub mod cli;
pub mod config;
pub mod error;
pub mod grpo;
pub mod metrics;
pub mod mgas;
pub mod parser;
pub mod policy;
pub mod rewards;
pub mod sdw;
pub mod synth;
pub mod train;

pub use aspect::{canonical_tag, ErrorAspect, SubScoreVector, NUM_ASPECTS};
pub use error::{Error, Result};
pub use parser::{parse_completion, ParsedCompletion, Violation};
pub use rewards::{RewardBreakdown, RewardParams};
pub use sdw::AspectWeights;
pub use train::{TrainConfig, Trainer};
