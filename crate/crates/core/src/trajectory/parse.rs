//! Parser for the tagged TIR text format.

use thiserror::Error;

use super::{Segment, ToolKind, Trajectory, TrajectoryError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("empty input")]
    EmptyInput,
    #[error("unbalanced tag <{0}>")]
    UnbalancedTag(String),
    #[error("tool call at segment {0} is not followed by a <result>")]
    OrphanCall(usize),
    #[error("<result> is not preceded by a tool call")]
    OrphanResult,
    #[error("more than one <answer> segment")]
    MultipleAnswers,
    #[error("content after the <answer> segment")]
    ContentAfterAnswer,
    #[error("empty <{0}> segment")]
    EmptySegment(&'static str),
    #[error("untagged text outside any tag pair (strict mode)")]
    StrayText,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    /// Untagged text runs become think segments, recorded in the report.
    #[default]
    Tolerant,
    /// Untagged non-whitespace text is rejected.
    Strict,
}

/// What the parser had to repair in tolerant mode.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParseReport {
    /// Byte offsets of untagged text runs that were promoted to think segments.
    pub promoted_think_offsets: Vec<usize>,
}

impl ParseReport {
    pub fn is_clean(&self) -> bool {
        self.promoted_think_offsets.is_empty()
    }
}

const TAGS: [&str; 5] = ["think", "search", "python", "result", "answer"];

/// Parses tagged TIR text into a validated [`Trajectory`] (tolerant mode).
pub fn parse_trajectory(text: &str) -> Result<Trajectory, ParseError> {
    parse_trajectory_with(text, ParseMode::Tolerant).map(|(t, _)| t)
}

pub fn parse_trajectory_with(
    text: &str,
    mode: ParseMode,
) -> Result<(Trajectory, ParseReport), ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError::EmptyInput);
    }
    let (raw, report) = scan_segments(text, mode)?;
    let segments = assign_result_kinds(raw)?;
    let trajectory = Trajectory::from_segments(segments).map_err(|e| match e {
        TrajectoryError::OrphanCall(i) => ParseError::OrphanCall(i),
        TrajectoryError::OrphanResult(_) => ParseError::OrphanResult,
        TrajectoryError::MultipleAnswers => ParseError::MultipleAnswers,
        TrajectoryError::AnswerNotLast => ParseError::ContentAfterAnswer,
        TrajectoryError::EmptySegment(tag) => ParseError::EmptySegment(tag),
    })?;
    Ok((trajectory, report))
}

/// Parses a trajectory fragment: a segment sequence that need not satisfy the
/// whole-trajectory invariants (used when splicing enhancement responses).
pub(crate) fn parse_segments(text: &str) -> Result<Vec<Segment>, ParseError> {
    let (raw, _) = scan_segments(text, ParseMode::Tolerant)?;
    assign_result_kinds(raw)
}

enum RawSegment {
    Tagged { tag: &'static str, text: String },
}

fn scan_segments(text: &str, mode: ParseMode) -> Result<(Vec<RawSegment>, ParseReport), ParseError> {
    let mut report = ParseReport::default();
    let mut out = Vec::new();
    let mut pos = 0usize;
    let mut free_start = 0usize;

    let flush_free = |out: &mut Vec<RawSegment>,
                      report: &mut ParseReport,
                      range: &str,
                      offset: usize|
     -> Result<(), ParseError> {
        if range.trim().is_empty() {
            return Ok(());
        }
        match mode {
            ParseMode::Strict => Err(ParseError::StrayText),
            ParseMode::Tolerant => {
                report.promoted_think_offsets.push(offset);
                out.push(RawSegment::Tagged {
                    tag: "think",
                    text: range.trim().to_string(),
                });
                Ok(())
            }
        }
    };

    while pos < text.len() {
        let Some(rel) = text[pos..].find('<') else {
            break;
        };
        let lt = pos + rel;
        let mut matched = None;
        for tag in TAGS {
            let open = format!("<{tag}>");
            if text[lt..].starts_with(&open) {
                matched = Some((tag, open));
                break;
            }
        }
        // A stray close tag with no matching open.
        if matched.is_none() {
            for tag in TAGS {
                if text[lt..].starts_with(&format!("</{tag}>")) {
                    return Err(ParseError::UnbalancedTag(tag.to_string()));
                }
            }
        }
        let Some((tag, open)) = matched else {
            pos = lt + 1;
            continue;
        };
        flush_free(&mut out, &mut report, &text[free_start..lt], free_start)?;
        let close = format!("</{tag}>");
        let body_start = lt + open.len();
        let Some(rel_close) = text[body_start..].find(&close) else {
            return Err(ParseError::UnbalancedTag(tag.to_string()));
        };
        let body = &text[body_start..body_start + rel_close];
        out.push(RawSegment::Tagged {
            tag,
            text: body.trim().to_string(),
        });
        pos = body_start + rel_close + close.len();
        free_start = pos;
    }
    flush_free(&mut out, &mut report, &text[free_start..], free_start)?;
    Ok((out, report))
}

fn assign_result_kinds(raw: Vec<RawSegment>) -> Result<Vec<Segment>, ParseError> {
    let mut segments = Vec::with_capacity(raw.len());
    let mut pending_call: Option<ToolKind> = None;
    for seg in raw {
        let RawSegment::Tagged { tag, text } = seg;
        match tag {
            "think" => segments.push(Segment::Think(text)),
            "search" | "python" => {
                let kind = if tag == "search" {
                    ToolKind::Search
                } else {
                    ToolKind::Python
                };
                pending_call = Some(kind);
                segments.push(Segment::ToolCall { kind, text });
            }
            "result" => {
                let Some(kind) = pending_call.take() else {
                    return Err(ParseError::OrphanResult);
                };
                segments.push(Segment::ToolResult { kind, text });
            }
            "answer" => segments.push(Segment::Answer(text)),
            _ => unreachable!(),
        }
    }
    Ok(segments)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_well_formed() {
        let t = parse_trajectory(
            "<think>x</think> <answer>The final answer is \\[ \\boxed{5} \\]</answer>",
        )
        .unwrap();
        assert_eq!(t.segments().len(), 2);
        assert_eq!(t.final_answer(), Some("5"));
    }

    #[test]
    fn orphan_call_error() {
        assert_eq!(
            parse_trajectory("<search>q</search>"),
            Err(ParseError::OrphanCall(0))
        );
    }

    #[test]
    fn orphan_result_error() {
        assert_eq!(parse_trajectory("<result>r</result>"), Err(ParseError::OrphanResult));
    }

    #[test]
    fn unbalanced_open_tag() {
        assert_eq!(
            parse_trajectory("<think>never closed"),
            Err(ParseError::UnbalancedTag("think".into()))
        );
    }

    #[test]
    fn stray_close_tag() {
        assert_eq!(
            parse_trajectory("</think> <answer>\\boxed{1}</answer>"),
            Err(ParseError::UnbalancedTag("think".into()))
        );
    }

    #[test]
    fn multiple_answers_error() {
        // The second answer makes the first non-last, which is reported as
        // content after the answer.
        assert_eq!(
            parse_trajectory("<answer>\\boxed{1}</answer><answer>\\boxed{2}</answer>"),
            Err(ParseError::ContentAfterAnswer)
        );
    }

    #[test]
    fn empty_input_error() {
        assert_eq!(parse_trajectory(""), Err(ParseError::EmptyInput));
        assert_eq!(parse_trajectory("  \n "), Err(ParseError::EmptyInput));
    }

    #[test]
    fn tolerant_leading_text_becomes_think() {
        let (t, report) =
            parse_trajectory_with("preamble <answer>\\boxed{1}</answer>", ParseMode::Tolerant)
                .unwrap();
        assert!(matches!(&t.segments()[0], Segment::Think(s) if s == "preamble"));
        assert_eq!(report.promoted_think_offsets, vec![0]);
    }

    #[test]
    fn strict_rejects_leading_text() {
        assert_eq!(
            parse_trajectory_with("preamble <answer>\\boxed{1}</answer>", ParseMode::Strict),
            Err(ParseError::StrayText)
        );
    }

    #[test]
    fn result_kind_follows_call() {
        let t = parse_trajectory(
            "<python>1+1</python><result>2</result><answer>\\boxed{2}</answer>",
        )
        .unwrap();
        assert!(matches!(
            &t.segments()[1],
            Segment::ToolResult { kind: ToolKind::Python, .. }
        ));
    }

    #[test]
    fn angle_brackets_inside_body_are_text() {
        let t = parse_trajectory(
            "<think>a < b and x <notatag></think><answer>\\boxed{1}</answer>",
        )
        .unwrap();
        assert!(matches!(&t.segments()[0], Segment::Think(s) if s.contains("<notatag>")));
    }

    #[test]
    fn roundtrip_parse_serialize() {
        let text = "<think>a</think> <search>q</search> <result>r</result>\n<think>b</think> <answer>\\boxed{1}</answer>";
        let t = parse_trajectory(text).unwrap();
        assert_eq!(t.serialize(), text);
        assert_eq!(parse_trajectory(&t.serialize()).unwrap(), t);
    }
}
