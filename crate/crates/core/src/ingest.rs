//! Annotation loaders and synthetic task generation.
//!
//! Two line-oriented formats are supported:
//!
//! * Charades-STA style: `VIDEO_ID START END##QUERY`
//! * JSON lines: `{"video_id", "duration", "query", "gt_start", "gt_end"}`
//!
//! Loaders never abort on bad content. Every line either becomes a
//! [`DatasetRecord`] or a [`LineReject`] carrying its line number and reason.

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::IngestError;
use crate::grpo::GroundingTask;
use crate::interval::{format_seconds, TimeInterval};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub video_id: String,
    pub duration: Option<f64>,
    pub query: String,
    pub gt: TimeInterval,
}

impl DatasetRecord {
    /// Requires a known duration.
    pub fn to_task(&self) -> Option<GroundingTask> {
        GroundingTask::new(self.video_id.clone(), self.duration?, self.gt).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RejectKind {
    MissingSeparator,
    Malformed(String),
    Reversed,
    EmptySpan,
    OutOfRange,
}

impl fmt::Display for RejectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectKind::MissingSeparator => write!(f, "missing '##' separator"),
            RejectKind::Malformed(msg) => write!(f, "malformed: {msg}"),
            RejectKind::Reversed => write!(f, "reversed: end precedes start"),
            RejectKind::EmptySpan => write!(f, "empty span: end equals start"),
            RejectKind::OutOfRange => write!(f, "ground truth extends past the duration"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineReject {
    /// 1-based line number.
    pub line: usize,
    pub kind: RejectKind,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Loaded {
    pub records: Vec<DatasetRecord>,
    pub rejects: Vec<LineReject>,
}

fn read_lossy(path: &Path) -> Result<String, IngestError> {
    let bytes = std::fs::read(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

fn check_span(start: f64, end: f64, duration: Option<f64>) -> Result<TimeInterval, RejectKind> {
    if !start.is_finite() || !end.is_finite() || start < 0.0 {
        return Err(RejectKind::Malformed(format!(
            "timestamps {start} and {end} must be finite and non-negative"
        )));
    }
    if end < start {
        return Err(RejectKind::Reversed);
    }
    if end == start {
        return Err(RejectKind::EmptySpan);
    }
    if let Some(d) = duration {
        if !(d.is_finite() && d > 0.0) {
            return Err(RejectKind::Malformed(format!(
                "duration {d} must be positive"
            )));
        }
        if end > d {
            return Err(RejectKind::OutOfRange);
        }
    }
    Ok(TimeInterval::new(start, end).expect("checked above"))
}

fn parse_lines(
    text: &str,
    mut parse: impl FnMut(&str) -> Result<DatasetRecord, RejectKind>,
) -> Loaded {
    let mut loaded = Loaded::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match parse(line) {
            Ok(record) => loaded.records.push(record),
            Err(kind) => loaded.rejects.push(LineReject {
                line: i + 1,
                kind,
                text: line.to_string(),
            }),
        }
    }
    loaded
}

fn parse_charades_line(line: &str) -> Result<DatasetRecord, RejectKind> {
    let (head, query) = line.split_once("##").ok_or(RejectKind::MissingSeparator)?;
    let fields: Vec<&str> = head.split_whitespace().collect();
    let [video_id, start, end] = fields.as_slice() else {
        return Err(RejectKind::Malformed(format!(
            "expected VIDEO_ID START END before '##', found {} fields",
            fields.len()
        )));
    };
    let number = |s: &str| {
        s.parse::<f64>()
            .map_err(|_| RejectKind::Malformed(format!("{s:?} is not a number")))
    };
    let gt = check_span(number(start)?, number(end)?, None)?;
    Ok(DatasetRecord {
        video_id: video_id.to_string(),
        duration: None,
        query: query.trim().to_string(),
        gt,
    })
}

/// Parses Charades-STA style annotation text.
///
/// ```
/// use tvg_anchor::ingest::parse_charades_style;
///
/// let loaded = parse_charades_style("AO8RW 0.0 6.9##a person opens a door\nbroken line\n");
/// assert_eq!(loaded.records[0].video_id, "AO8RW");
/// assert_eq!(loaded.records[0].query, "a person opens a door");
/// assert_eq!(loaded.rejects[0].line, 2);
/// ```
pub fn parse_charades_style(text: &str) -> Loaded {
    parse_lines(text, parse_charades_line)
}

pub fn load_charades_style(path: &Path) -> Result<Loaded, IngestError> {
    Ok(parse_charades_style(&read_lossy(path)?))
}

pub fn write_charades_style(records: &[DatasetRecord]) -> String {
    records
        .iter()
        .map(|r| {
            format!(
                "{} {} {}##{}\n",
                r.video_id,
                format_seconds(r.gt.start()),
                format_seconds(r.gt.end()),
                r.query
            )
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonLine {
    video_id: String,
    #[serde(default)]
    duration: Option<f64>,
    query: String,
    gt_start: f64,
    gt_end: f64,
}

fn parse_json_line(line: &str) -> Result<DatasetRecord, RejectKind> {
    let raw: JsonLine =
        serde_json::from_str(line).map_err(|e| RejectKind::Malformed(e.to_string()))?;
    let gt = check_span(raw.gt_start, raw.gt_end, raw.duration)?;
    Ok(DatasetRecord {
        video_id: raw.video_id,
        duration: raw.duration,
        query: raw.query,
        gt,
    })
}

pub fn parse_jsonl(text: &str) -> Loaded {
    parse_lines(text, parse_json_line)
}

pub fn load_jsonl(path: &Path) -> Result<Loaded, IngestError> {
    Ok(parse_jsonl(&read_lossy(path)?))
}

pub fn write_jsonl(records: &[DatasetRecord]) -> String {
    records
        .iter()
        .map(|r| {
            let line = JsonLine {
                video_id: r.video_id.clone(),
                duration: r.duration,
                query: r.query.clone(),
                gt_start: r.gt.start(),
                gt_end: r.gt.end(),
            };
            let mut s = serde_json::to_string(&line).expect("records serialize");
            s.push('\n');
            s
        })
        .collect()
}

/// Generates `n` synthetic tasks.
///
/// Durations are uniform on `duration_range`. Each ground-truth center is
/// uniform on `[m/2, D - m/2]` and its half-length uniform on
/// `[m/2, min(c, D - c)]`, where `m = min_segment`; segments therefore have
/// length at least `m` and lie inside the video.
pub fn gen_synthetic(
    n: usize,
    duration_range: (f64, f64),
    min_segment: f64,
    seed: u64,
) -> Result<Vec<GroundingTask>, IngestError> {
    let (lo, hi) = duration_range;
    let invalid = |msg: String| Err(IngestError::InvalidRange(msg));
    if n == 0 {
        return invalid("n must be positive".into());
    }
    if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
        return invalid(format!(
            "duration range ({lo}, {hi}) must satisfy 0 < lo <= hi"
        ));
    }
    if !(min_segment.is_finite() && min_segment > 0.0 && min_segment <= lo) {
        return invalid(format!(
            "min_segment {min_segment} must be positive and at most the shortest duration {lo}"
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half_min = min_segment / 2.0;
    (0..n)
        .map(|i| {
            let duration = rng.gen_range(lo..=hi);
            let center = rng.gen_range(half_min..=duration - half_min);
            let half = rng.gen_range(half_min..=center.min(duration - center));
            let start = (center - half).max(0.0);
            let end = (center + half).min(duration);
            let gt = TimeInterval::new(start, end).expect("span is ordered");
            GroundingTask::new(format!("synth-{i:05}"), duration, gt)
                .map_err(|e| IngestError::InvalidRange(e.to_string()))
        })
        .collect()
}

/// Converts synthetic tasks into records that [`write_jsonl`] can store.
pub fn tasks_to_records(tasks: &[GroundingTask]) -> Vec<DatasetRecord> {
    tasks
        .iter()
        .map(|t| DatasetRecord {
            video_id: t.task_id.clone(),
            duration: Some(t.duration),
            query: format!("synthetic event in {}", t.task_id),
            gt: t.gt,
        })
        .collect()
}
