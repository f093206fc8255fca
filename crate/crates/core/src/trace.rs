//! Parsing and rendering of anchored reasoning traces.
//!
//! A well-formed trace is one `<think>` block followed by one `<answer>`
//! block. The think block carries one or more `<timestamp>` anchors, each
//! holding an interval, and the answer block holds the final interval:
//!
//! ```text
//! <think>... <timestamp>8.6s to 18.5s</timestamp> ... <timestamp>11.3s to 16.2s</timestamp> ...</think>
//! <answer>11.3s to 16.2s</answer>
//! ```
//!
//! Parsing is total. Malformed input produces a [`FormatVerdict`] with a
//! [`FormatFailure`] reason, and whatever anchors and answer could still be
//! recovered are kept so downstream statistics and graded rewards can run.

use std::ops::Range;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::TraceError;
use crate::interval::TimeInterval;

const THINK_OPEN: &str = "<think>";
const ANSWER_OPEN: &str = "<answer>";

/// Why a trace failed the output template.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormatFailure {
    MissingThink,
    MissingAnswer,
    NoAnchor,
    MalformedInterval,
    StrayTextOutsideBlocks,
    NestingViolation,
}

impl FormatFailure {
    pub fn as_str(&self) -> &'static str {
        match self {
            FormatFailure::MissingThink => "missing-think",
            FormatFailure::MissingAnswer => "missing-answer",
            FormatFailure::NoAnchor => "no-anchor",
            FormatFailure::MalformedInterval => "malformed-interval",
            FormatFailure::StrayTextOutsideBlocks => "stray-text-outside-blocks",
            FormatFailure::NestingViolation => "nesting-violation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormatVerdict {
    pub matches: bool,
    pub anchor_count: usize,
    pub failure_reason: Option<FormatFailure>,
}

impl FormatVerdict {
    fn pass(anchor_count: usize) -> Self {
        Self {
            matches: true,
            anchor_count,
            failure_reason: None,
        }
    }

    fn fail(anchor_count: usize, reason: FormatFailure) -> Self {
        Self {
            matches: false,
            anchor_count,
            failure_reason: Some(reason),
        }
    }
}

/// A raw model output decomposed into reasoning text, anchors and answer.
///
/// `anchors` are in document order and always have length
/// `verdict.anchor_count`. When the verdict fails, anchors and answer hold
/// whatever could still be recovered.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParsedTrace {
    think_text: String,
    anchors: Vec<TimeInterval>,
    answer: Option<TimeInterval>,
    verdict: FormatVerdict,
}

impl ParsedTrace {
    /// Inner text of the think block, timestamp tags included.
    pub fn think_text(&self) -> &str {
        &self.think_text
    }

    pub fn anchors(&self) -> &[TimeInterval] {
        &self.anchors
    }

    pub fn answer(&self) -> Option<TimeInterval> {
        self.answer
    }

    pub fn verdict(&self) -> &FormatVerdict {
        &self.verdict
    }

    pub fn matches(&self) -> bool {
        self.verdict.matches
    }

    /// Number of whitespace-delimited words in the think text.
    pub fn thinking_length(&self) -> usize {
        self.think_text.split_whitespace().count()
    }

    /// Whether the answer equals the last anchor exactly.
    pub fn answer_equals_last_anchor(&self) -> bool {
        matches!((self.answer, self.anchors.last()), (Some(a), Some(l)) if a == *l)
    }
}

/// Assembles a well-formed trace from reasoning steps and anchors.
///
/// ```
/// use tvg_anchor::{TimeInterval, TraceBuilder};
///
/// let coarse = TimeInterval::new(8.6, 18.5).unwrap();
/// let fine = TimeInterval::new(11.3, 16.2).unwrap();
/// let trace = TraceBuilder::new()
///     .reason("the lights switch on in the second half")
///     .anchor(coarse)
///     .reason("the hand reaches the switch")
///     .anchor(fine)
///     .answer(fine)
///     .build();
/// assert!(trace.matches());
/// assert_eq!(trace.anchors(), &[coarse, fine]);
/// ```
#[derive(Debug, Clone, Default)]
pub struct TraceBuilder {
    think: String,
    answer: Option<TimeInterval>,
}

impl TraceBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reason(mut self, text: &str) -> Self {
        self.push_piece(text);
        self
    }

    pub fn anchor(mut self, interval: TimeInterval) -> Self {
        self.push_piece(&format!("<timestamp>{interval}</timestamp>"));
        self
    }

    pub fn answer(mut self, interval: TimeInterval) -> Self {
        self.answer = Some(interval);
        self
    }

    /// Renders the trace text.
    pub fn render(&self) -> String {
        let answer = self.answer.map(|a| a.to_string()).unwrap_or_default();
        format!("<think>{}</think>\n<answer>{}</answer>", self.think, answer)
    }

    /// Renders and re-parses, so the result is always internally consistent.
    pub fn build(&self) -> ParsedTrace {
        parse_trace(&self.render())
    }

    fn push_piece(&mut self, piece: &str) {
        if !self.think.is_empty() {
            self.think.push(' ');
        }
        self.think.push_str(piece);
    }
}

fn tag_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"</?(think|answer|timestamp)>").unwrap())
}

fn interval_forms() -> &'static [Regex; 4] {
    static RE: OnceLock<[Regex; 4]> = OnceLock::new();
    RE.get_or_init(|| {
        let num = r"(\d+(?:\.\d+)?|\.\d+)";
        let unit = r"(?:\s*(?:seconds|sec|s))?";
        let n = format!("{num}{unit}");
        [
            Regex::new(&format!(r"^(?:from\s+)?{n}\s+to\s+{n}$")).unwrap(),
            Regex::new(&format!(r"^{n}\s*-\s*{n}$")).unwrap(),
            Regex::new(&format!(r"^{n}\s*,\s*{n}$")).unwrap(),
            Regex::new(&format!(r"^\[\s*{n}\s*,\s*{n}\s*\]$")).unwrap(),
        ]
    })
}

/// Parses an interval written in one of the accepted surface forms:
/// `A to B`, `A - B`, `A, B`, `[A, B]` or `from A to B`, where each number
/// may carry an `s`, `sec` or `seconds` suffix.
///
/// ```
/// use tvg_anchor::parse_interval;
///
/// let iv = parse_interval("11.3s to 16.2s").unwrap();
/// assert_eq!((iv.start(), iv.end()), (11.3, 16.2));
/// assert!(parse_interval("16.2 to 11.3").is_err());
/// ```
pub fn parse_interval(text: &str) -> Result<TimeInterval, TraceError> {
    let malformed = || TraceError::MalformedInterval {
        text: text.to_string(),
    };
    let trimmed = text.trim();
    let caps = interval_forms()
        .iter()
        .find_map(|re| re.captures(trimmed))
        .ok_or_else(malformed)?;
    let start: f64 = caps[1].parse().map_err(|_| malformed())?;
    let end: f64 = caps[2].parse().map_err(|_| malformed())?;
    TimeInterval::new(start, end).map_err(|_| malformed())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TagKind {
    Think,
    Answer,
    Timestamp,
}

#[derive(Debug, Clone)]
struct Tag {
    kind: TagKind,
    open: bool,
    span: Range<usize>,
}

fn scan_tags(text: &str) -> Vec<Tag> {
    tag_regex()
        .captures_iter(text)
        .map(|caps| {
            let whole = caps.get(0).unwrap();
            let kind = match &caps[1] {
                "think" => TagKind::Think,
                "answer" => TagKind::Answer,
                _ => TagKind::Timestamp,
            };
            Tag {
                kind,
                open: !whole.as_str().starts_with("</"),
                span: whole.range(),
            }
        })
        .collect()
}

/// Content ranges of `<timestamp>…</timestamp>` pairs in document order.
///
/// A close tag pairs with the most recent unmatched open tag; unmatched tags
/// are skipped. Returns the ranges and whether the tags strictly alternated.
fn timestamp_pairs(tags: &[Tag], region: Range<usize>) -> (Vec<Range<usize>>, bool) {
    let mut pairs = Vec::new();
    let mut pending: Option<usize> = None;
    let mut alternating = true;
    for tag in tags
        .iter()
        .filter(|t| t.kind == TagKind::Timestamp)
        .filter(|t| t.span.start >= region.start && t.span.end <= region.end)
    {
        match (tag.open, pending) {
            (true, None) => pending = Some(tag.span.end),
            (true, Some(_)) => {
                alternating = false;
                pending = Some(tag.span.end);
            }
            (false, Some(open_end)) => {
                pairs.push(open_end..tag.span.start);
                pending = None;
            }
            (false, None) => alternating = false,
        }
    }
    if pending.is_some() {
        alternating = false;
    }
    (pairs, alternating)
}

/// First open tag of `kind` and the first matching close tag after it.
fn block(tags: &[Tag], kind: TagKind) -> Option<(Range<usize>, Range<usize>)> {
    let open = tags.iter().find(|t| t.kind == kind && t.open)?;
    let close = tags
        .iter()
        .find(|t| t.kind == kind && !t.open && t.span.start >= open.span.end)?;
    Some((open.span.clone(), close.span.clone()))
}

/// Checks `raw` against the output template.
pub fn check_format(raw: &str) -> FormatVerdict {
    parse_trace(raw).verdict
}

/// Parses a raw model output. Never fails.
///
/// ```
/// use tvg_anchor::parse_trace;
///
/// let trace = parse_trace(
///     "<think>scan video <timestamp>8.6 to 18.5</timestamp> narrow \
///      <timestamp>11.3 to 16.2</timestamp></think><answer>11.3 to 16.2</answer>",
/// );
/// assert!(trace.matches());
/// assert_eq!(trace.verdict().anchor_count, 2);
/// ```
pub fn parse_trace(raw: &str) -> ParsedTrace {
    let tags = scan_tags(raw);
    let think = block(&tags, TagKind::Think);
    let answer_block = block(&tags, TagKind::Answer);

    let think_text = think
        .as_ref()
        .map(|(open, close)| raw[open.end..close.start].to_string())
        .unwrap_or_default();
    let anchor_region = think
        .as_ref()
        .map(|(open, close)| open.end..close.start)
        .unwrap_or(0..raw.len());
    let (pairs, alternating) = timestamp_pairs(&tags, anchor_region);
    let parsed_pairs: Vec<Result<TimeInterval, TraceError>> = pairs
        .iter()
        .map(|range| parse_interval(&raw[range.clone()]))
        .collect();
    let anchors: Vec<TimeInterval> = parsed_pairs.iter().filter_map(|r| r.clone().ok()).collect();
    let answer_parse = answer_block
        .as_ref()
        .map(|(open, close)| parse_interval(&raw[open.end..close.start]));
    let answer = answer_parse.as_ref().and_then(|r| r.clone().ok());

    let failure = template_failure(raw, &tags, alternating, &parsed_pairs, &answer_parse);
    let verdict = match failure {
        None => FormatVerdict::pass(anchors.len()),
        Some(reason) => FormatVerdict::fail(anchors.len(), reason),
    };

    ParsedTrace {
        think_text,
        anchors,
        answer,
        verdict,
    }
}

fn template_failure(
    raw: &str,
    tags: &[Tag],
    think_alternating: bool,
    anchor_parses: &[Result<TimeInterval, TraceError>],
    answer_parse: &Option<Result<TimeInterval, TraceError>>,
) -> Option<FormatFailure> {
    let find = |kind: TagKind, open: bool| -> Vec<&Tag> {
        tags.iter()
            .filter(|t| t.kind == kind && t.open == open)
            .collect()
    };
    let think_open = find(TagKind::Think, true);
    let think_close = find(TagKind::Think, false);
    let answer_open = find(TagKind::Answer, true);
    let answer_close = find(TagKind::Answer, false);

    if think_open.is_empty() || think_close.is_empty() {
        return Some(FormatFailure::MissingThink);
    }
    if answer_open.is_empty() || answer_close.is_empty() {
        return Some(FormatFailure::MissingAnswer);
    }
    if [&think_open, &think_close, &answer_open, &answer_close]
        .iter()
        .any(|v| v.len() > 1)
    {
        return Some(FormatFailure::NestingViolation);
    }
    let (to, tc, ao, ac) = (
        &think_open[0].span,
        &think_close[0].span,
        &answer_open[0].span,
        &answer_close[0].span,
    );
    if !(to.start < tc.start && tc.start < ao.start && ao.start < ac.start) {
        return Some(FormatFailure::NestingViolation);
    }
    let outside = [&raw[..to.start], &raw[tc.end..ao.start], &raw[ac.end..]];
    if outside.iter().any(|s| !s.trim().is_empty()) {
        return Some(FormatFailure::StrayTextOutsideBlocks);
    }
    if tags
        .iter()
        .any(|t| t.kind == TagKind::Timestamp && t.span.start >= ao.end && t.span.end <= ac.start)
    {
        return Some(FormatFailure::NestingViolation);
    }
    if !think_alternating {
        return Some(FormatFailure::NestingViolation);
    }
    if anchor_parses.is_empty() {
        return Some(FormatFailure::NoAnchor);
    }
    if anchor_parses.iter().any(Result::is_err) {
        return Some(FormatFailure::MalformedInterval);
    }
    match answer_parse {
        Some(Ok(_)) => None,
        _ => Some(FormatFailure::MalformedInterval),
    }
}

/// Renders a well-formed trace in canonical form.
///
/// The think text is kept verbatim except that each timestamp block's
/// content is replaced by the canonical rendering of the corresponding
/// anchor, so `parse_trace(render_trace(t))` reproduces anchors and answer
/// exactly.
pub fn render_trace(trace: &ParsedTrace) -> Result<String, TraceError> {
    let answer = match (trace.verdict.matches, trace.answer) {
        (true, Some(answer)) => answer,
        _ => return Err(TraceError::NotRenderable),
    };
    let think = &trace.think_text;
    let tags = scan_tags(think);
    let (pairs, _) = timestamp_pairs(&tags, 0..think.len());
    if pairs.len() != trace.anchors.len() {
        return Err(TraceError::AnchorMismatch {
            expected: trace.anchors.len(),
            found: pairs.len(),
        });
    }
    let mut body = String::with_capacity(think.len() + 32);
    let mut cursor = 0;
    for (range, anchor) in pairs.iter().zip(&trace.anchors) {
        body.push_str(&think[cursor..range.start]);
        body.push_str(&anchor.to_string());
        cursor = range.end;
    }
    body.push_str(&think[cursor..]);
    Ok(format!(
        "{THINK_OPEN}{body}</think>\n{ANSWER_OPEN}{answer}</answer>"
    ))
}
