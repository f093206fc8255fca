//! Rule-based rewards for anchored grounding traces.
//!
//! The overall reward of a trace `o` against ground truth `g` is
//!
//! ```text
//! r(o) = format(o) + sIoU(answer, g) + TAR1(o) - beta * TAR2(o) + gamma * TAR3(o)
//! TAR1 = sum_i i * sIoU(anchor_i, g)            (1-based i)
//! TAR2 = (s - target)^2                          (s = anchor count)
//! TAR3 = sum_{i>=2} (+1 if sIoU_i > sIoU_{i-1} else -1)
//! ```
//!
//! Soft IoU drops the `max(0, ·)` clamp of standard IoU, so disjoint
//! segments receive a negative score proportional to their gap.

use serde::{Deserialize, Serialize};

use crate::error::RewardError;
use crate::interval::TimeInterval;
use crate::trace::{FormatVerdict, ParsedTrace};

/// Unions shorter than this are treated as degenerate.
pub const DEGENERATE_UNION: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    /// Weight on the anchor-count penalty.
    pub beta: f64,
    /// Weight on the progressive-refinement bonus.
    pub gamma: f64,
    pub target_anchor_count: usize,
    pub format_score: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            beta: 5.0,
            gamma: 1.0,
            target_anchor_count: 2,
            format_score: 3.0,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), RewardError> {
        for (field, value) in [
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("format_score", self.format_score),
        ] {
            if !value.is_finite() {
                return Err(RewardError::InvalidConfig { field });
            }
        }
        Ok(())
    }
}

/// Per-component rewards for one trace against one ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub format: f64,
    /// Soft IoU of the `<answer>` interval; 0 when no answer parsed.
    pub siou_answer: f64,
    /// Soft IoU of the last anchor, reported alongside the answer score.
    pub siou_last_anchor: Option<f64>,
    pub tar1: f64,
    pub tar2: f64,
    pub tar3: f64,
    pub total: f64,
    pub per_anchor_siou: Vec<f64>,
}

impl RewardBreakdown {
    /// `tar1 - beta * tar2 + gamma * tar3`.
    pub fn anchor_reward(&self, cfg: &RewardConfig) -> f64 {
        self.tar1 - cfg.beta * self.tar2 + cfg.gamma * self.tar3
    }
}

struct Overlap {
    intersection: f64,
    union: f64,
}

fn overlap(pred: TimeInterval, gt: TimeInterval) -> Result<Overlap, RewardError> {
    let union = pred.end().max(gt.end()) - pred.start().min(gt.start());
    if union <= DEGENERATE_UNION {
        return Err(RewardError::DegenerateUnion {
            pred: pred.to_string(),
            gt: gt.to_string(),
            union,
        });
    }
    Ok(Overlap {
        intersection: pred.end().min(gt.end()) - pred.start().max(gt.start()),
        union,
    })
}

/// Standard temporal IoU in `[0, 1]`.
pub fn standard_iou(pred: TimeInterval, gt: TimeInterval) -> Result<f64, RewardError> {
    let o = overlap(pred, gt)?;
    Ok(o.intersection.max(0.0) / o.union)
}

/// Soft IoU in `(-1, 1]`: standard IoU without the clamp at zero.
///
/// ```
/// use tvg_anchor::{soft_iou, TimeInterval};
///
/// let pred = TimeInterval::new(15.4, 18.0).unwrap();
/// let gt = TimeInterval::new(3.4, 12.2).unwrap();
/// let s = soft_iou(pred, gt).unwrap();
/// assert!((s - (-3.2 / 14.6)).abs() < 1e-12);
/// ```
pub fn soft_iou(pred: TimeInterval, gt: TimeInterval) -> Result<f64, RewardError> {
    let o = overlap(pred, gt)?;
    Ok(o.intersection / o.union)
}

pub fn format_reward(verdict: &FormatVerdict, cfg: &RewardConfig) -> f64 {
    if verdict.matches {
        cfg.format_score
    } else {
        0.0
    }
}

fn anchor_sious(anchors: &[TimeInterval], gt: TimeInterval) -> Result<Vec<f64>, RewardError> {
    if anchors.is_empty() {
        return Err(RewardError::EmptyAnchors);
    }
    anchors.iter().map(|a| soft_iou(*a, gt)).collect()
}

fn weighted_sum(sious: &[f64]) -> f64 {
    sious
        .iter()
        .enumerate()
        .map(|(i, s)| (i + 1) as f64 * s)
        .sum()
}

/// Position-weighted sum of anchor soft IoUs; the i-th anchor weighs `i`.
pub fn tar1(anchors: &[TimeInterval], gt: TimeInterval) -> Result<f64, RewardError> {
    Ok(weighted_sum(&anchor_sious(anchors, gt)?))
}

/// Squared deviation of the anchor count from the target.
pub fn tar2(anchor_count: usize, cfg: &RewardConfig) -> f64 {
    let d = anchor_count as f64 - cfg.target_anchor_count as f64;
    d * d
}

/// Progressive-refinement score of a sequence of soft IoUs.
///
/// Each step contributes +1 when it strictly improves on its predecessor
/// and -1 otherwise, ties included.
pub fn refinement_score(sious: &[f64]) -> f64 {
    sious
        .windows(2)
        .map(|w| if w[1] > w[0] { 1.0 } else { -1.0 })
        .sum()
}

pub fn tar3(anchors: &[TimeInterval], gt: TimeInterval) -> Result<f64, RewardError> {
    Ok(refinement_score(&anchor_sious(anchors, gt)?))
}

/// Scores a parsed trace against a ground-truth interval.
///
/// The format component is 0 for template failures, but anchors and answer
/// recovered by best-effort parsing still contribute their graded terms.
/// A trace with no recovered anchors gets 0 from all three anchor terms.
pub fn total_reward(
    trace: &ParsedTrace,
    gt: TimeInterval,
    cfg: &RewardConfig,
) -> Result<RewardBreakdown, RewardError> {
    let format = format_reward(trace.verdict(), cfg);
    let siou_answer = match trace.answer() {
        Some(answer) => soft_iou(answer, gt)?,
        None => 0.0,
    };
    let anchors = trace.anchors();
    let (per_anchor_siou, tar1, tar2, tar3) = if anchors.is_empty() {
        (Vec::new(), 0.0, 0.0, 0.0)
    } else {
        let sious = anchor_sious(anchors, gt)?;
        let t1 = weighted_sum(&sious);
        let t3 = refinement_score(&sious);
        (sious, t1, tar2(anchors.len(), cfg), t3)
    };
    let total = format + siou_answer + (tar1 - cfg.beta * tar2 + cfg.gamma * tar3);
    Ok(RewardBreakdown {
        format,
        siou_answer,
        siou_last_anchor: per_anchor_siou.last().copied(),
        tar1,
        tar2,
        tar3,
        total,
        per_anchor_siou,
    })
}

/// Parses and scores raw text in one call.
pub fn score_text(
    raw: &str,
    gt: TimeInterval,
    cfg: &RewardConfig,
) -> Result<(ParsedTrace, RewardBreakdown), RewardError> {
    let trace = crate::trace::parse_trace(raw);
    let breakdown = total_reward(&trace, gt, cfg)?;
    Ok((trace, breakdown))
}
