//! Reward computation and evaluation for timestamp-anchored temporal video
//! grounding.
//!
//! A grounding model answers a query about a video with a reasoning trace
//! that embeds intermediate `<timestamp>` anchors and ends with an
//! `<answer>` interval. This crate parses such traces, scores them with a
//! rule-based reward stack (format, soft IoU and anchor rewards), optimizes
//! a toy policy against those rewards with group-relative policy
//! optimization, filters scored traces into supervised fine-tuning data and
//! computes the usual grounding metrics.
//!
//! ```
//! use tvg_anchor::{parse_trace, total_reward, RewardConfig, TimeInterval};
//!
//! let trace = parse_trace(
//!     "<think>scan <timestamp>8.6s to 18.5s</timestamp> narrow \
//!      <timestamp>11.3s to 16.2s</timestamp></think><answer>11.3s to 16.2s</answer>",
//! );
//! let gt = TimeInterval::new(11.3, 16.6).unwrap();
//! let reward = total_reward(&trace, gt, &RewardConfig::default()).unwrap();
//! assert!((reward.total - 7.308).abs() < 1e-3);
//! ```

pub mod error;
pub mod eval;
pub mod grpo;
pub mod ingest;
pub mod interval;
pub mod pipeline;
pub mod rewards;
pub mod trace;

pub use error::{
    EvalError, GrpoError, IngestError, IntervalError, PipelineError, RewardError, TraceError,
};
pub use eval::{evaluate, EvalReport, RecallAt, DEFAULT_THRESHOLDS};
pub use grpo::{
    group_advantages, grpo_objective, kl_divergence, sample_group, train_loop, train_step,
    GridPolicy, GroundingTask, GrpoConfig, Rollout, StepReport, TrainingLog,
};
pub use ingest::{gen_synthetic, load_charades_style, load_jsonl, DatasetRecord};
pub use interval::TimeInterval;
pub use pipeline::{
    apply_filter, corpus_stats, export_sft_dataset, score_corpus, CorpusEntry, CorpusStats,
    FilterCriteria, RejectReason, ScoredRecord,
};
pub use rewards::{
    format_reward, score_text, soft_iou, standard_iou, tar1, tar2, tar3, total_reward,
    RewardBreakdown, RewardConfig,
};
pub use trace::{
    check_format, parse_interval, parse_trace, render_trace, FormatFailure, FormatVerdict,
    ParsedTrace, TraceBuilder,
};

// Compiles the guide's code listings as doctests.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/traces.md")]
    mod traces {}
    #[doc = include_str!("../../../book/src/rewards.md")]
    mod rewards {}
    #[doc = include_str!("../../../book/src/grpo.md")]
    mod grpo {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
}
