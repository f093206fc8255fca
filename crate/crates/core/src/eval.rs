//! Grounding metrics: mean IoU and recall at IoU thresholds.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::EvalError;
use crate::interval::TimeInterval;
use crate::rewards::standard_iou;

/// The customary `R1@{0.3, 0.5, 0.7}` thresholds.
pub const DEFAULT_THRESHOLDS: [f64; 3] = [0.3, 0.5, 0.7];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallAt {
    pub threshold: f64,
    pub recall: f64,
}

/// Metrics as fractions in `[0, 1]`; multiply by 100 for the usual table scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub miou: f64,
    /// Sorted by ascending threshold.
    pub r1_at: Vec<RecallAt>,
    pub count: usize,
}

impl EvalReport {
    pub fn recall(&self, threshold: f64) -> Option<f64> {
        self.r1_at
            .iter()
            .find(|r| r.threshold == threshold)
            .map(|r| r.recall)
    }

    /// Single `key=value` line for scripted checks.
    pub fn machine_line(&self) -> String {
        let mut line = format!("EVAL count={} miou={}", self.count, self.miou);
        for r in &self.r1_at {
            line.push_str(&format!(" r1@{}={}", r.threshold, r.recall));
        }
        line
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "pairs   {}", self.count)?;
        writeln!(f, "mIoU    {:.1}", self.miou * 100.0)?;
        for r in &self.r1_at {
            writeln!(f, "R1@{:<4} {:.1}", r.threshold, r.recall * 100.0)?;
        }
        Ok(())
    }
}

/// Mean standard IoU and the fraction of pairs with IoU `>= τ` for each threshold.
///
/// ```
/// use tvg_anchor::{evaluate, TimeInterval};
///
/// let gt = TimeInterval::new(11.3, 16.6).unwrap();
/// let pairs = [
///     (TimeInterval::new(11.3, 16.2).unwrap(), gt),
///     (TimeInterval::new(13.0, 19.0).unwrap(), gt),
/// ];
/// let report = evaluate(&pairs, &[0.3, 0.5, 0.7]).unwrap();
/// assert!((report.miou - 0.696).abs() < 1e-3);
/// assert_eq!(report.recall(0.5), Some(0.5));
/// ```
pub fn evaluate(
    pairs: &[(TimeInterval, TimeInterval)],
    thresholds: &[f64],
) -> Result<EvalReport, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if let Some(t) = thresholds.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
        return Err(EvalError::InvalidThreshold(*t));
    }
    let ious = pairs
        .iter()
        .map(|(pred, gt)| standard_iou(*pred, *gt))
        .collect::<Result<Vec<_>, _>>()?;
    let n = ious.len() as f64;
    let mut sorted = thresholds.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let r1_at = sorted
        .into_iter()
        .map(|threshold| RecallAt {
            threshold,
            recall: ious.iter().filter(|iou| **iou >= threshold).count() as f64 / n,
        })
        .collect();
    Ok(EvalReport {
        miou: ious.iter().sum::<f64>() / n,
        r1_at,
        count: ious.len(),
    })
}
