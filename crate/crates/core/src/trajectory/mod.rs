//! Trajectory data model and the bidirectional mapping between tagged TIR
//! text and structured trajectories.
//!
//! A trajectory is an ordered list of [`Segment`]s: free-form thinking,
//! tool calls, tool results, and a final answer. The tagged wire format uses
//! five tag pairs: `<think>`, `<search>`, `<python>`, `<result>`, `<answer>`.

mod parse;

pub use parse::{parse_trajectory, parse_trajectory_with, ParseError, ParseMode, ParseReport};
pub(crate) use parse::parse_segments;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which external tool a call targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToolKind {
    Search,
    Python,
}

impl ToolKind {
    pub fn tag(self) -> &'static str {
        match self {
            ToolKind::Search => "search",
            ToolKind::Python => "python",
        }
    }
}

/// One tagged span of a trajectory.
///
/// Tool results remember the kind of the call that produced them; the tagged
/// format does not distinguish them, but downstream consumers can.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Segment {
    Think(String),
    ToolCall { kind: ToolKind, text: String },
    ToolResult { kind: ToolKind, text: String },
    Answer(String),
}

impl Segment {
    pub fn text(&self) -> &str {
        match self {
            Segment::Think(t) | Segment::Answer(t) => t,
            Segment::ToolCall { text, .. } | Segment::ToolResult { text, .. } => text,
        }
    }

    pub fn is_tool_call(&self) -> bool {
        matches!(self, Segment::ToolCall { .. })
    }

    pub fn is_tool_result(&self) -> bool {
        matches!(self, Segment::ToolResult { .. })
    }

    pub fn is_answer(&self) -> bool {
        matches!(self, Segment::Answer(_))
    }

    /// The segment's canonical tagged text.
    pub fn render(&self) -> String {
        serialize_segment(self)
    }
}

/// Violations of the structural trajectory invariants.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TrajectoryError {
    #[error("tool call at segment {0} is not immediately followed by a tool result")]
    OrphanCall(usize),
    #[error("tool result at segment {0} is not preceded by a tool call")]
    OrphanResult(usize),
    #[error("more than one answer segment")]
    MultipleAnswers,
    #[error("answer segment is not the last segment")]
    AnswerNotLast,
    #[error("empty {0} segment")]
    EmptySegment(&'static str),
}

/// An ordered, validated sequence of segments with an optional boxed answer.
///
/// Invariants enforced at construction:
/// * every tool call is immediately followed by a tool result of the same kind;
/// * at most one answer segment, and if present it is last;
/// * tool-call and answer texts are non-empty after trimming;
/// * `final_answer` is present iff the answer segment contains a `\boxed{}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    segments: Vec<Segment>,
    final_answer: Option<String>,
}

impl Trajectory {
    /// Validates the invariants and derives `final_answer` from the answer
    /// segment, if any.
    pub fn from_segments(segments: Vec<Segment>) -> Result<Self, TrajectoryError> {
        let mut answer_seen = false;
        for (i, seg) in segments.iter().enumerate() {
            match seg {
                Segment::ToolCall { kind, text } => {
                    if text.trim().is_empty() {
                        return Err(TrajectoryError::EmptySegment("tool call"));
                    }
                    match segments.get(i + 1) {
                        Some(Segment::ToolResult { kind: rk, .. }) if rk == kind => {}
                        _ => return Err(TrajectoryError::OrphanCall(i)),
                    }
                }
                Segment::ToolResult { .. } => {
                    if !matches!(segments.get(i.wrapping_sub(1)), Some(Segment::ToolCall { .. }))
                        || i == 0
                    {
                        return Err(TrajectoryError::OrphanResult(i));
                    }
                }
                Segment::Answer(text) => {
                    if text.trim().is_empty() {
                        return Err(TrajectoryError::EmptySegment("answer"));
                    }
                    if answer_seen {
                        return Err(TrajectoryError::MultipleAnswers);
                    }
                    answer_seen = true;
                    if i + 1 != segments.len() {
                        return Err(TrajectoryError::AnswerNotLast);
                    }
                }
                Segment::Think(_) => {}
            }
        }
        let final_answer = segments
            .last()
            .and_then(|s| match s {
                Segment::Answer(text) => extract_boxed(text),
                _ => None,
            });
        Ok(Trajectory { segments, final_answer })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Innermost content of the last `\boxed{...}` in the answer segment.
    pub fn final_answer(&self) -> Option<&str> {
        self.final_answer.as_deref()
    }

    pub fn has_answer(&self) -> bool {
        self.segments.last().map(Segment::is_answer).unwrap_or(false)
    }

    /// Number of tool calls, both kinds combined.
    pub fn tool_call_count(&self) -> usize {
        self.segments.iter().filter(|s| s.is_tool_call()).count()
    }

    pub fn tool_call_count_of(&self, kind: ToolKind) -> usize {
        self.segments
            .iter()
            .filter(|s| matches!(s, Segment::ToolCall { kind: k, .. } if *k == kind))
            .count()
    }

    /// Token count over think, tool-call, and answer segments. Tool results
    /// are environment-produced and excluded.
    pub fn reasoning_length(&self) -> usize {
        self.reasoning_length_with(&WhitespaceTokenizer)
    }

    pub fn reasoning_length_with(&self, tokenizer: &dyn Tokenizer) -> usize {
        self.segments
            .iter()
            .filter(|s| !s.is_tool_result())
            .map(|s| tokenizer.count(s.text()))
            .sum()
    }

    /// Canonical tagged text: segments joined with a single space inside a
    /// step and a single newline between steps.
    pub fn serialize(&self) -> String {
        let steps = self.split_steps();
        steps
            .iter()
            .map(|step| {
                step.segments
                    .iter()
                    .map(serialize_segment)
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Partition of the segment list into steps. A step spans from just after
    /// a tool result (or the start) up to and including the next
    /// call+result pair or the answer. Trailing segments that complete no
    /// step are attached to the last step (or form a single step when the
    /// trajectory contains no completed step at all).
    pub fn split_steps(&self) -> Vec<Step<'_>> {
        let mut steps = Vec::new();
        let mut start = 0usize;
        let mut i = 0usize;
        while i < self.segments.len() {
            match &self.segments[i] {
                Segment::ToolResult { .. } | Segment::Answer(_) => {
                    steps.push(start..i + 1);
                    start = i + 1;
                }
                _ => {}
            }
            i += 1;
        }
        if start < self.segments.len() {
            // dangling thinks or an unterminated call
            if let Some(last) = steps.last_mut() {
                last.end = self.segments.len();
            } else {
                steps.push(start..self.segments.len());
            }
        }
        steps
            .into_iter()
            .enumerate()
            .map(|(idx, range)| Step {
                index: idx + 1,
                segments: &self.segments[range],
            })
            .collect()
    }
}

/// One step of a trajectory: a 1-based index and a contiguous slice of the
/// parent's segments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Step<'a> {
    pub index: usize,
    pub segments: &'a [Segment],
}

fn serialize_segment(seg: &Segment) -> String {
    match seg {
        Segment::Think(t) => format!("<think>{t}</think>"),
        Segment::ToolCall { kind, text } => {
            format!("<{0}>{1}</{0}>", kind.tag(), text)
        }
        Segment::ToolResult { text, .. } => format!("<result>{text}</result>"),
        Segment::Answer(t) => format!("<answer>{t}</answer>"),
    }
}

/// Injectable token counter. The default counts whitespace-delimited words,
/// which keeps every pipeline stage deterministic without a model dependency.
pub trait Tokenizer {
    fn count(&self, text: &str) -> usize;
}

pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn count(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }
}

/// Extracts the innermost content of the last `\boxed{...}` with brace
/// balancing, unwrapping a single full-width command such as `\text{...}`.
pub fn extract_boxed(text: &str) -> Option<String> {
    let start = text.rfind("\\boxed{")?;
    let body_start = start + "\\boxed{".len();
    let bytes = text.as_bytes();
    let mut depth = 1usize;
    let mut end = None;
    for (i, &b) in bytes.iter().enumerate().skip(body_start) {
        match b {
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    end = Some(i);
                    break;
                }
            }
            _ => {}
        }
    }
    let mut inner = text[body_start..end?].trim();
    // unwrap e.g. \text{...} when the braces span the whole remainder
    loop {
        let Some(cmd_brace) = inner.strip_prefix('\\').and_then(|rest| {
            let brace = rest.find('{')?;
            rest[..brace]
                .chars()
                .all(|c| c.is_ascii_alphabetic())
                .then_some(brace + 1)
        }) else {
            break;
        };
        let rest = &inner[1 + cmd_brace..];
        let mut depth = 1usize;
        let mut close = None;
        for (i, b) in rest.bytes().enumerate() {
            match b {
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        close = Some(i);
                        break;
                    }
                }
                _ => {}
            }
        }
        match close {
            Some(i) if rest[i + 1..].trim().is_empty() => inner = rest[..i].trim(),
            _ => break,
        }
    }
    Some(inner.to_string())
}

/// Which correctness scorer a task uses: binary boxed match for math,
/// token-level F1 for knowledge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Math,
    Knowledge,
}

/// A question with its gold answer and the trajectories rolled out for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub id: String,
    pub question: String,
    pub gold_answer: String,
    pub kind: TaskKind,
    #[serde(default)]
    pub trajectories: Vec<String>,
}
