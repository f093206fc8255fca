//! Scoring, filtering and export of trace corpora for supervised distillation.
//!
//! A corpus is a stream of [`CorpusEntry`] lines. Each entry is parsed and
//! scored, then checked against [`FilterCriteria`]. Accepted traces are
//! written out in canonical form as an SFT dataset.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::PipelineError;
use crate::interval::TimeInterval;
use crate::rewards::{total_reward, RewardBreakdown, RewardConfig};
use crate::trace::{parse_trace, render_trace, ParsedTrace};

/// One line of an input corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub raw_text: String,
    pub gt_start: f64,
    pub gt_end: f64,
    #[serde(default)]
    pub query: String,
    #[serde(default)]
    pub video_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
}

impl CorpusEntry {
    fn ground_truth(&self) -> Result<TimeInterval, String> {
        let gt = TimeInterval::new(self.gt_start, self.gt_end).map_err(|e| e.to_string())?;
        if gt.length() <= 0.0 {
            return Err(format!("ground truth {gt} has zero length"));
        }
        Ok(gt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterCriteria {
    pub min_total_reward: f64,
    pub min_anchor_count: usize,
    pub min_siou_anchor1: f64,
    pub min_siou_anchor2: f64,
}

impl Default for FilterCriteria {
    fn default() -> Self {
        Self {
            min_total_reward: 6.4,
            min_anchor_count: 2,
            min_siou_anchor1: 0.5,
            min_siou_anchor2: 0.7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    /// The record could not be scored at all.
    Unscorable,
    AnchorCount,
    TotalReward,
    Anchor1Quality,
    Anchor2Quality,
}

impl FilterCriteria {
    /// First failing criterion, checked in the order anchor count, total
    /// reward, first-anchor and second-anchor quality. All bounds are strict
    /// except the anchor count, which is a minimum.
    pub fn check(&self, breakdown: &RewardBreakdown) -> Option<RejectReason> {
        let sious = &breakdown.per_anchor_siou;
        if sious.len() < self.min_anchor_count {
            return Some(RejectReason::AnchorCount);
        }
        if breakdown.total.is_nan() || breakdown.total <= self.min_total_reward {
            return Some(RejectReason::TotalReward);
        }
        if !sious.first().is_some_and(|s| *s > self.min_siou_anchor1) {
            return Some(RejectReason::Anchor1Quality);
        }
        if !sious.get(1).is_some_and(|s| *s > self.min_siou_anchor2) {
            return Some(RejectReason::Anchor2Quality);
        }
        None
    }
}

/// A corpus entry with its parse, reward and filter decision.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredRecord {
    pub index: usize,
    pub entry: CorpusEntry,
    pub trace: ParsedTrace,
    pub breakdown: Option<RewardBreakdown>,
    pub error: Option<String>,
    pub accepted: bool,
    pub reject_reason: Option<RejectReason>,
}

/// Re-applies `criteria` to an already scored record.
pub fn apply_filter(
    record: &ScoredRecord,
    criteria: &FilterCriteria,
) -> (bool, Option<RejectReason>) {
    match &record.breakdown {
        None => (false, Some(RejectReason::Unscorable)),
        Some(b) => match criteria.check(b) {
            None => (true, None),
            Some(reason) => (false, Some(reason)),
        },
    }
}

pub fn score_entry(
    index: usize,
    entry: CorpusEntry,
    cfg: &RewardConfig,
    criteria: &FilterCriteria,
) -> ScoredRecord {
    let trace = parse_trace(&entry.raw_text);
    let scored = entry
        .ground_truth()
        .and_then(|gt| total_reward(&trace, gt, cfg).map_err(|e| e.to_string()));
    let (breakdown, error) = match scored {
        Ok(b) => (Some(b), None),
        Err(e) => (None, Some(e)),
    };
    let mut record = ScoredRecord {
        index,
        entry,
        trace,
        breakdown,
        error,
        accepted: false,
        reject_reason: None,
    };
    let (accepted, reason) = apply_filter(&record, criteria);
    record.accepted = accepted;
    record.reject_reason = reason;
    record
}

/// Lazily scores a stream of entries, one record per entry, order kept.
pub fn score_corpus<'a, I>(
    entries: I,
    cfg: &'a RewardConfig,
    criteria: &'a FilterCriteria,
) -> impl Iterator<Item = ScoredRecord> + 'a
where
    I: IntoIterator<Item = CorpusEntry>,
    I::IntoIter: 'a,
{
    entries
        .into_iter()
        .enumerate()
        .map(move |(i, e)| score_entry(i, e, cfg, criteria))
}

/// A line of an input file that could not be decoded.
#[derive(Debug, Clone, PartialEq)]
pub struct BadLine {
    pub line: usize,
    pub message: String,
}

/// Streams corpus entries from a line-delimited JSON file; blank lines are skipped.
pub fn read_corpus(
    path: &Path,
) -> Result<impl Iterator<Item = Result<CorpusEntry, BadLine>>, PipelineError> {
    let file = File::open(path).map_err(|e| PipelineError::io(path, e))?;
    let reader = BufReader::new(file);
    Ok(reader.split(b'\n').enumerate().filter_map(|(i, line)| {
        let line = match line {
            Ok(bytes) => String::from_utf8_lossy(&bytes).into_owned(),
            Err(e) => {
                return Some(Err(BadLine {
                    line: i + 1,
                    message: e.to_string(),
                }))
            }
        };
        if line.trim().is_empty() {
            return None;
        }
        Some(serde_json::from_str(&line).map_err(|e| BadLine {
            line: i + 1,
            message: e.to_string(),
        }))
    }))
}

/// One line of an exported SFT dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftExample {
    pub video_id: String,
    pub query: String,
    pub duration: Option<f64>,
    pub gt_start: f64,
    pub gt_end: f64,
    pub target_text: String,
}

impl SftExample {
    pub fn to_entry(&self) -> CorpusEntry {
        CorpusEntry {
            raw_text: self.target_text.clone(),
            gt_start: self.gt_start,
            gt_end: self.gt_end,
            query: self.query.clone(),
            video_id: self.video_id.clone(),
            duration: self.duration,
        }
    }
}

pub fn to_sft_example(record: &ScoredRecord) -> Result<SftExample, PipelineError> {
    if !record.accepted {
        return Err(PipelineError::NotAccepted {
            index: record.index,
        });
    }
    Ok(SftExample {
        video_id: record.entry.video_id.clone(),
        query: record.entry.query.clone(),
        duration: record.entry.duration,
        gt_start: record.entry.gt_start,
        gt_end: record.entry.gt_end,
        target_text: render_trace(&record.trace)?,
    })
}

/// Writes accepted records as an SFT dataset and returns the line count.
///
/// The file is written to a temporary sibling and moved into place only on
/// success, so a failed export leaves no partial output.
pub fn export_sft_dataset<'a, I>(records: I, path: &Path) -> Result<usize, PipelineError>
where
    I: IntoIterator<Item = &'a ScoredRecord>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| PipelineError::io(dir, e))?;
    let mut out = BufWriter::new(tmp);
    let mut count = 0;
    for record in records {
        let example = to_sft_example(record)?;
        serde_json::to_writer(&mut out, &example)?;
        out.write_all(b"\n")
            .map_err(|e| PipelineError::io(path, e))?;
        count += 1;
    }
    let tmp = out
        .into_inner()
        .map_err(|e| PipelineError::io(path, e.into_error()))?;
    tmp.persist(path)
        .map_err(|e| PipelineError::io(path, e.error))?;
    Ok(count)
}

pub fn load_sft_dataset(path: &Path) -> Result<Vec<SftExample>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(PipelineError::from))
        .collect()
}

/// Aggregate statistics over a scored corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total: usize,
    pub format_failure_rate: f64,
    pub acceptance_rate: f64,
    /// Mean whitespace word count of the think text.
    pub mean_thinking_length: f64,
    pub answer_equals_last_anchor_rate: f64,
}

/// Mergeable running totals behind [`CorpusStats`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StatsAccumulator {
    total: usize,
    format_failures: usize,
    accepted: usize,
    thinking_words: usize,
    answer_equals_last: usize,
}

impl StatsAccumulator {
    pub fn push(&mut self, record: &ScoredRecord) {
        self.total += 1;
        if !record.trace.matches() {
            self.format_failures += 1;
        }
        if record.accepted {
            self.accepted += 1;
        }
        self.thinking_words += record.trace.thinking_length();
        if record.trace.answer_equals_last_anchor() {
            self.answer_equals_last += 1;
        }
    }

    pub fn merge(mut self, other: StatsAccumulator) -> Self {
        self.total += other.total;
        self.format_failures += other.format_failures;
        self.accepted += other.accepted;
        self.thinking_words += other.thinking_words;
        self.answer_equals_last += other.answer_equals_last;
        self
    }

    pub fn finish(&self) -> CorpusStats {
        let rate = |n: usize| {
            if self.total == 0 {
                0.0
            } else {
                n as f64 / self.total as f64
            }
        };
        CorpusStats {
            total: self.total,
            format_failure_rate: rate(self.format_failures),
            acceptance_rate: rate(self.accepted),
            mean_thinking_length: rate(self.thinking_words),
            answer_equals_last_anchor_rate: rate(self.answer_equals_last),
        }
    }
}

pub fn corpus_stats<'a, I>(records: I) -> CorpusStats
where
    I: IntoIterator<Item = &'a ScoredRecord>,
{
    let mut acc = StatsAccumulator::default();
    for r in records {
        acc.push(r);
    }
    acc.finish()
}
