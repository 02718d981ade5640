//! Error-pattern detectors and behavioral metrics over scored trajectories.

use std::collections::HashMap;
use std::sync::Mutex;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::templates;
use crate::trajectory::{Segment, TaskRecord, Trajectory};

/// One detected erroneous behavior, annotated with the 1-based step it
/// occurred in where that is meaningful.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ErrorPattern {
    RedundantToolCall { step_index: usize },
    AbortedToolExecution { step_index: usize },
    InsufficientToolCalls,
    ErroneousReasoning { step_index: usize },
}

/// A trajectory with the per-sample quantities the metrics consume:
/// correctness `P_i`, tool calls `T_i`, wrong executions `Wrong_i`, reasoning
/// tokens `L_i`, and the redundancy flag.
#[derive(Debug, Clone)]
pub struct ScoredTrajectory {
    pub trajectory: Trajectory,
    pub correctness: f64,
    pub tool_calls: usize,
    pub wrong_executions: usize,
    pub reasoning_tokens: usize,
    pub redundant: bool,
}

impl ScoredTrajectory {
    /// Derives the counted fields from the trajectory itself.
    pub fn new(trajectory: Trajectory, correctness: f64, redundant: bool) -> Self {
        let tool_calls = trajectory.tool_call_count();
        let wrong_executions = detect_aborted_executions(&trajectory).len();
        let reasoning_tokens = trajectory.reasoning_length();
        ScoredTrajectory {
            trajectory,
            correctness,
            tool_calls,
            wrong_executions,
            reasoning_tokens,
            redundant,
        }
    }
}

/// Default substrings marking a tool result as a failed execution. An empty
/// or whitespace-only result is always treated as failed.
pub const DEFAULT_FAILURE_SIGNATURES: [&str; 3] = ["Traceback", "Error:", "error:"];

/// Steps whose tool result matches the default failure-signature set.
pub fn detect_aborted_executions(t: &Trajectory) -> Vec<usize> {
    detect_aborted_executions_with(t, &DEFAULT_FAILURE_SIGNATURES)
}

pub fn detect_aborted_executions_with(t: &Trajectory, signatures: &[&str]) -> Vec<usize> {
    let mut hits = Vec::new();
    for step in t.split_steps() {
        let aborted = step.segments.iter().any(|seg| match seg {
            Segment::ToolResult { text, .. } => {
                text.trim().is_empty() || signatures.iter().any(|sig| text.contains(sig))
            }
            _ => false,
        });
        if aborted {
            hits.push(step.index);
        }
    }
    hits
}

/// Steps whose tool call repeats an earlier call of the same kind after
/// case folding and whitespace collapsing. A deterministic syntactic lower
/// bound for redundancy; semantic redundancy needs [`judge_redundancy`].
pub fn detect_duplicate_tool_calls(t: &Trajectory) -> Vec<usize> {
    let mut seen: Vec<(crate::ToolKind, String)> = Vec::new();
    let mut hits = Vec::new();
    for step in t.split_steps() {
        let mut duplicated = false;
        for seg in step.segments {
            if let Segment::ToolCall { kind, text } = seg {
                let norm = normalize_call(text);
                if seen.iter().any(|(k, s)| k == kind && *s == norm) {
                    duplicated = true;
                } else {
                    seen.push((*kind, norm));
                }
            }
        }
        if duplicated {
            hits.push(step.index);
        }
    }
    hits
}

fn normalize_call(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("judge response lacks an <answer>yes|no</answer> tag: {0:?}")]
    JudgeUnparseable(String),
    #[error("judge transport failure: {0}")]
    JudgeUnavailable(String),
}

/// A caller-supplied prompt-to-response function: a live LLM client or a
/// deterministic stub.
pub trait Judge {
    fn respond(&self, prompt: &str) -> Result<String, JudgeError>;
}

impl<F> Judge for F
where
    F: Fn(&str) -> Result<String, JudgeError>,
{
    fn respond(&self, prompt: &str) -> Result<String, JudgeError> {
        self(prompt)
    }
}

/// Caches judge responses by prompt hash so pipelines are reproducible and
/// repeated judgments are free. Safe to share across threads.
pub struct JudgeCache {
    entries: Mutex<HashMap<[u8; 32], String>>,
}

impl Default for JudgeCache {
    fn default() -> Self {
        Self::new()
    }
}

impl JudgeCache {
    pub fn new() -> Self {
        JudgeCache {
            entries: Mutex::new(HashMap::new()),
        }
    }

    fn get_or_call(&self, judge: &dyn Judge, prompt: &str) -> Result<String, JudgeError> {
        let key: [u8; 32] = Sha256::digest(prompt.as_bytes()).into();
        if let Some(hit) = self.entries.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let response = judge.respond(prompt)?;
        self.entries
            .lock()
            .unwrap()
            .insert(key, response.clone());
        Ok(response)
    }
}

/// Renders the redundancy-judgment prompt over the task and trajectory,
/// submits it, and parses the `<answer>yes|no</answer>` verdict.
pub fn judge_redundancy(
    t: &Trajectory,
    task: &TaskRecord,
    judge: &dyn Judge,
    cache: &JudgeCache,
) -> Result<bool, JudgeError> {
    let prompt = templates::render_judge_redundancy(&task.question, &task.gold_answer, &t.serialize());
    let response = cache.get_or_call(judge, &prompt)?;
    parse_yes_no(&response).ok_or(JudgeError::JudgeUnparseable(response))
}

fn parse_yes_no(response: &str) -> Option<bool> {
    let start = response.find("<answer>")? + "<answer>".len();
    let end = response[start..].find("</answer>")? + start;
    match response[start..end].trim().to_lowercase().as_str() {
        "yes" => Some(true),
        "no" => Some(false),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("metric over an empty set")]
    EmptySet,
    #[error("reasoning length metric over a zero-length trajectory")]
    ZeroLength,
}

/// Average correctness per tool call: `(1/N) sum P_i / max(T_i, 1)`.
/// The denominator is clamped to 1 so a correct no-tool answer reads as
/// maximally efficient.
pub fn compute_effi(set: &[ScoredTrajectory]) -> Result<f64, MetricError> {
    if set.is_empty() {
        return Err(MetricError::EmptySet);
    }
    let sum: f64 = set
        .iter()
        .map(|s| s.correctness / (s.tool_calls.max(1) as f64))
        .sum();
    Ok(sum / set.len() as f64)
}

/// Fraction of trajectories without redundant tool calls: `N_nr / N`.
pub fn compute_conciseness(set: &[ScoredTrajectory]) -> Result<f64, MetricError> {
    if set.is_empty() {
        return Err(MetricError::EmptySet);
    }
    let non_redundant = set.iter().filter(|s| !s.redundant).count();
    Ok(non_redundant as f64 / set.len() as f64)
}

/// Reliability of tool calls: `(1/N) sum P_i / max(Wrong_i, 1)`, with the
/// same denominator clamp as [`compute_effi`].
pub fn compute_successful_execution(set: &[ScoredTrajectory]) -> Result<f64, MetricError> {
    if set.is_empty() {
        return Err(MetricError::EmptySet);
    }
    let sum: f64 = set
        .iter()
        .map(|s| s.correctness / (s.wrong_executions.max(1) as f64))
        .sum();
    Ok(sum / set.len() as f64)
}

/// Compactness of the thought process: `(1/N) sum P_i / L_i`. Raw value;
/// the CLI reports it per thousand tokens.
pub fn compute_reasoning_length_metric(set: &[ScoredTrajectory]) -> Result<f64, MetricError> {
    if set.is_empty() {
        return Err(MetricError::EmptySet);
    }
    if set.iter().any(|s| s.reasoning_tokens == 0) {
        return Err(MetricError::ZeroLength);
    }
    let sum: f64 = set
        .iter()
        .map(|s| s.correctness / s.reasoning_tokens as f64)
        .sum();
    Ok(sum / set.len() as f64)
}
