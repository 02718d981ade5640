//! The self-evolving data flywheel: iterative trajectory enhancement via
//! correct-set refinement and incorrect-set reflection, a quality filter,
//! and SFT-dataset export.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::detect_aborted_executions;
use crate::reward::correctness_reward;
use crate::templates::{InsertionPoint, TemplateSet};
use crate::trajectory::{
    parse_segments, parse_trajectory, Segment, TaskKind, TaskRecord, Trajectory,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeneratorError {
    #[error("generator unavailable: {0}")]
    Unavailable(String),
}

/// A text-completion provider: a live model client, the simulated agent, or
/// a scripted stub. `continuation_of` carries a serialized trajectory prefix
/// the completion must extend.
pub trait Generator {
    fn complete(&self, prompt: &str, continuation_of: Option<&str>)
        -> Result<String, GeneratorError>;
    fn name(&self) -> &str;
}

/// Which operation produced a pool entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Initial,
    RedundantModification,
    GlobalRefinement,
    SelfCorrection,
    HintInjection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub raw: String,
    /// Absent when the raw text failed to parse; such entries feed the
    /// quality filter but never the enhancers.
    #[serde(skip)]
    pub trajectory: Option<Trajectory>,
    pub provenance: Provenance,
    pub round: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutPool {
    pub question_id: String,
    pub entries: Vec<PoolEntry>,
    /// Human-readable notes about per-entry enhancement failures that were
    /// skipped rather than aborting the run.
    pub failures: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct FlywheelConfig {
    pub rounds: usize,
    pub initial_rollouts_per_question: usize,
    pub max_tool_calls: usize,
    /// Per-question pool size cap; the newest entries are kept.
    pub pool_cap: usize,
    /// When false, only round-0 entries are eligible for enhancement in
    /// later rounds.
    pub enhance_all_rounds: bool,
    pub templates: TemplateSet,
}

impl Default for FlywheelConfig {
    fn default() -> Self {
        FlywheelConfig {
            rounds: 1,
            initial_rollouts_per_question: 8,
            max_tool_calls: 6,
            pool_cap: 64,
            enhance_all_rounds: true,
            templates: TemplateSet::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum FlywheelError {
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error("unparseable enhancer response: {0}")]
    ResponseUnparseable(String),
    #[error("step {step} out of range for a {steps}-step trajectory")]
    StepOutOfRange { step: usize, steps: usize },
    #[error("no hint configured for task kind {0:?}")]
    NoMatchingHint(TaskKind),
    #[error("empty dataset, nothing to export")]
    EmptyDataset,
    #[error("io failure: {0}")]
    Io(#[from] std::io::Error),
}

/// The partition threshold: Math answers must match exactly; Knowledge
/// answers need near-exact token F1.
pub fn is_correct(t: &Trajectory, gold: &str, kind: TaskKind) -> bool {
    let predicted = t.final_answer().unwrap_or("");
    let score = correctness_reward(predicted, gold, kind);
    match kind {
        TaskKind::Math => score == 1.0,
        TaskKind::Knowledge => score >= 0.99,
    }
}

/// Samples the initial rollout pool for one question. Unparseable outputs
/// are retained with a parse-failure mark.
pub fn initialize_rollouts(
    task: &TaskRecord,
    generator: &dyn Generator,
    cfg: &FlywheelConfig,
) -> Result<RolloutPool, FlywheelError> {
    let prompt = cfg.templates.render_i1(&task.question);
    let mut entries = Vec::with_capacity(cfg.initial_rollouts_per_question);
    for _ in 0..cfg.initial_rollouts_per_question {
        let raw = generator.complete(&prompt, None)?;
        let trajectory = parse_trajectory(&raw).ok();
        entries.push(PoolEntry {
            raw,
            trajectory,
            provenance: Provenance::Initial,
            round: 0,
        });
    }
    Ok(RolloutPool {
        question_id: task.id.clone(),
        entries,
        failures: Vec::new(),
    })
}

/// Splits the pool's parseable entries into correct and incorrect index
/// sets. Unparseable entries belong to neither.
pub fn partition_by_correctness(
    pool: &RolloutPool,
    gold: &str,
    kind: TaskKind,
) -> (Vec<usize>, Vec<usize>) {
    let mut correct = Vec::new();
    let mut incorrect = Vec::new();
    for (i, entry) in pool.entries.iter().enumerate() {
        if let Some(t) = &entry.trajectory {
            if is_correct(t, gold, kind) {
                correct.push(i);
            } else {
                incorrect.push(i);
            }
        }
    }
    (correct, incorrect)
}

fn parse_step_line(line: &str) -> Option<&str> {
    line.trim().strip_prefix("Step:").map(str::trim)
}

/// Serializes steps `1..=upto` of the trajectory.
fn serialize_prefix(t: &Trajectory, upto: usize) -> String {
    t.split_steps()
        .iter()
        .take(upto)
        .map(|step| {
            step.segments
                .iter()
                .map(Segment::render)
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn complete_from_prefix(
    generator: &dyn Generator,
    cfg: &FlywheelConfig,
    task: &TaskRecord,
    prefix: &str,
) -> Result<Option<Trajectory>, FlywheelError> {
    let prompt = cfg.templates.render_i1(&task.question);
    let continuation = generator.complete(&prompt, Some(prefix))?;
    let combined = format!("{prefix}\n{continuation}");
    // model-side failures of the enhancement itself are dropped, not kept raw
    Ok(parse_trajectory(&combined).ok())
}

/// Correct-set enhancement: asks the generator to locate and simplify the
/// first redundant step, then regenerates the suffix. Absent when the
/// generator reports no redundancy or the regenerated result is unparseable.
pub fn redundant_modification(
    t: &Trajectory,
    task: &TaskRecord,
    generator: &dyn Generator,
    cfg: &FlywheelConfig,
) -> Result<Option<Trajectory>, FlywheelError> {
    let prompt = cfg.templates.render_i2(&task.question, &t.serialize());
    let response = generator.complete(&prompt, None)?;
    let trimmed = response.trim();
    if trimmed.eq_ignore_ascii_case("Step: no") {
        return Ok(None);
    }
    let mut lines = trimmed.lines();
    let step: usize = lines
        .next()
        .and_then(parse_step_line)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| FlywheelError::ResponseUnparseable(response.clone()))?;
    let corrected = lines
        .find_map(|l| l.trim().strip_prefix("Corrected Step:"))
        .map(str::trim)
        .ok_or_else(|| FlywheelError::ResponseUnparseable(response.clone()))?;
    let steps = t.split_steps().len();
    if step == 0 || step > steps {
        return Err(FlywheelError::StepOutOfRange { step, steps });
    }
    let corrected_segments = parse_segments(corrected)
        .map_err(|_| FlywheelError::ResponseUnparseable(corrected.to_string()))?;
    let mut prefix = serialize_prefix(t, step - 1);
    let corrected_text = corrected_segments
        .iter()
        .map(Segment::render)
        .collect::<Vec<_>>()
        .join(" ");
    if prefix.is_empty() {
        prefix = corrected_text;
    } else {
        prefix.push('\n');
        prefix.push_str(&corrected_text);
    }
    complete_from_prefix(generator, cfg, task, &prefix)
}

/// Correct-set enhancement: rewrites only the Think texts. The response is
/// accepted only if tag order, tool-call texts, tool-result texts, and the
/// answer are byte-identical to the input's.
pub fn global_refinement(
    t: &Trajectory,
    task: &TaskRecord,
    generator: &dyn Generator,
    cfg: &FlywheelConfig,
) -> Result<Option<Trajectory>, FlywheelError> {
    let prompt = cfg.templates.render_i3(&task.question, &t.serialize());
    let response = generator.complete(&prompt, None)?;
    let refined = match parse_trajectory(&response) {
        Ok(r) => r,
        Err(_) => return Err(FlywheelError::ResponseUnparseable(response)),
    };
    let original = t.segments();
    let new = refined.segments();
    if original.len() != new.len() {
        return Ok(None);
    }
    for (a, b) in original.iter().zip(new) {
        let ok = match (a, b) {
            (Segment::Think(_), Segment::Think(_)) => true,
            (Segment::ToolCall { kind: ka, text: ta }, Segment::ToolCall { kind: kb, text: tb }) => {
                ka == kb && ta == tb
            }
            (
                Segment::ToolResult { kind: ka, text: ta },
                Segment::ToolResult { kind: kb, text: tb },
            ) => ka == kb && ta == tb,
            (Segment::Answer(ta), Segment::Answer(tb)) => ta == tb,
            _ => false,
        };
        if !ok {
            return Ok(None);
        }
    }
    Ok(Some(refined))
}

/// Incorrect-set reflection: a two-phase repair. Phase one locates the first
/// flawed step with an analysis; phase two replaces that step; the suffix is
/// regenerated as a continuation.
pub fn self_correction(
    t: &Trajectory,
    task: &TaskRecord,
    generator: &dyn Generator,
    cfg: &FlywheelConfig,
) -> Result<Option<Trajectory>, FlywheelError> {
    let identify = cfg.templates.render_i4_identify(&task.question, &t.serialize());
    let response = generator.complete(&identify, None)?;
    let mut step = None;
    let mut analysis = None;
    for line in response.lines() {
        if let Some(s) = parse_step_line(line) {
            step = s.parse::<usize>().ok();
        } else if let Some(a) = line.trim().strip_prefix("Analysis:") {
            analysis = Some(a.trim().to_string());
        }
    }
    let (step, analysis) = match (step, analysis) {
        (Some(s), Some(a)) => (s, a),
        _ => return Err(FlywheelError::ResponseUnparseable(response)),
    };
    let steps = t.split_steps().len();
    if step == 0 || step > steps {
        return Err(FlywheelError::StepOutOfRange { step, steps });
    }
    let truncated = serialize_prefix(t, step);
    let modify = cfg.templates.render_i4_modify(&task.question, &truncated, &analysis);
    let replacement = generator.complete(&modify, None)?;
    let replacement_segments = parse_segments(replacement.trim())
        .map_err(|_| FlywheelError::ResponseUnparseable(replacement.clone()))?;
    let mut prefix = serialize_prefix(t, step - 1);
    let replacement_text = replacement_segments
        .iter()
        .map(Segment::render)
        .collect::<Vec<_>>()
        .join(" ");
    if prefix.is_empty() {
        prefix = replacement_text;
    } else {
        prefix.push('\n');
        prefix.push_str(&replacement_text);
    }
    complete_from_prefix(generator, cfg, task, &prefix)
}

/// Incorrect-set reflection: splices the task-kind hint as a Think segment
/// at its configured insertion point and lets the generator continue.
/// `error_step` locates the AfterErrorStep point; when absent that hint
/// falls back to the trajectory end.
pub fn hint_injection(
    t: &Trajectory,
    task: &TaskRecord,
    generator: &dyn Generator,
    cfg: &FlywheelConfig,
    error_step: Option<usize>,
) -> Result<Option<Trajectory>, FlywheelError> {
    let hint = cfg
        .templates
        .hints
        .iter()
        .find(|h| h.task_kind == task.kind)
        .ok_or(FlywheelError::NoMatchingHint(task.kind))?;
    let prefix_steps = match (hint.insertion_point, error_step) {
        (InsertionPoint::AfterErrorStep, Some(step)) => step.min(t.split_steps().len()),
        _ => {
            // everything before the final answer step
            let steps = t.split_steps();
            match steps.last() {
                Some(last) if last.segments.iter().any(|s| matches!(s, Segment::Answer(_))) => {
                    steps.len() - 1
                }
                _ => steps.len(),
            }
        }
    };
    let mut prefix = serialize_prefix(t, prefix_steps);
    let hint_text = Segment::Think(hint.text.clone()).render();
    if prefix.is_empty() {
        prefix = hint_text;
    } else {
        prefix.push('\n');
        prefix.push_str(&hint_text);
    }
    complete_from_prefix(generator, cfg, task, &prefix)
}

/// Runs the full flywheel: per question, `rounds` rounds of partitioning,
/// correct-set enhancement, and incorrect-set reflection, appending every
/// successful product. Per-entry failures are recorded and skipped.
pub fn run_flywheel(
    tasks: &[TaskRecord],
    generator: &dyn Generator,
    cfg: &FlywheelConfig,
) -> Result<Vec<RolloutPool>, FlywheelError> {
    let mut pools = Vec::with_capacity(tasks.len());
    for task in tasks {
        let mut pool = initialize_rollouts(task, generator, cfg)?;
        for round in 1..=cfg.rounds {
            let (correct, incorrect) = partition_by_correctness(&pool, &task.gold_answer, task.kind);
            let eligible = |idx: &usize| cfg.enhance_all_rounds || pool.entries[*idx].round == 0;
            let correct: Vec<usize> = correct.into_iter().filter(|i| eligible(i)).collect();
            let incorrect: Vec<usize> = incorrect.into_iter().filter(|i| eligible(i)).collect();
            let mut produced: Vec<PoolEntry> = Vec::new();
            let note = |pool_failures: &mut Vec<String>, op: &str, idx: usize, e: FlywheelError| {
                pool_failures.push(format!("round {round} {op} on entry {idx}: {e}"));
            };
            for &i in &correct {
                let t = pool.entries[i].trajectory.as_ref().unwrap();
                match redundant_modification(t, task, generator, cfg) {
                    Ok(Some(new)) => produced.push(PoolEntry {
                        raw: new.serialize(),
                        trajectory: Some(new),
                        provenance: Provenance::RedundantModification,
                        round,
                    }),
                    Ok(None) => {}
                    Err(e) => note(&mut pool.failures, "redundant_modification", i, e),
                }
                match global_refinement(t, task, generator, cfg) {
                    Ok(Some(new)) => produced.push(PoolEntry {
                        raw: new.serialize(),
                        trajectory: Some(new),
                        provenance: Provenance::GlobalRefinement,
                        round,
                    }),
                    Ok(None) => {}
                    Err(e) => note(&mut pool.failures, "global_refinement", i, e),
                }
            }
            for &i in &incorrect {
                let t = pool.entries[i].trajectory.as_ref().unwrap();
                match self_correction(t, task, generator, cfg) {
                    Ok(Some(new)) => produced.push(PoolEntry {
                        raw: new.serialize(),
                        trajectory: Some(new),
                        provenance: Provenance::SelfCorrection,
                        round,
                    }),
                    Ok(None) => {}
                    Err(e) => note(&mut pool.failures, "self_correction", i, e),
                }
                let error_step = detect_aborted_executions(t).first().copied();
                match hint_injection(t, task, generator, cfg, error_step) {
                    Ok(Some(new)) => produced.push(PoolEntry {
                        raw: new.serialize(),
                        trajectory: Some(new),
                        provenance: Provenance::HintInjection,
                        round,
                    }),
                    Ok(None) => {}
                    Err(e) => note(&mut pool.failures, "hint_injection", i, e),
                }
            }
            pool.entries.extend(produced);
            if pool.entries.len() > cfg.pool_cap {
                let excess = pool.entries.len() - cfg.pool_cap;
                pool.entries.drain(..excess);
            }
        }
        pools.push(pool);
    }
    Ok(pools)
}

/// Keeps only entries that parsed, answered correctly, and contain no
/// aborted tool execution.
pub fn quality_filter(pool: &RolloutPool, gold: &str, kind: TaskKind) -> Vec<PoolEntry> {
    pool.entries
        .iter()
        .filter(|entry| match &entry.trajectory {
            Some(t) => is_correct(t, gold, kind) && detect_aborted_executions(t).is_empty(),
            None => false,
        })
        .cloned()
        .collect()
}

/// Writes the filtered pools as supervised fine-tuning data: one JSON line
/// of {prompt, completion} per surviving trajectory, deterministically
/// ordered by (question id, round, provenance).
pub fn export_sft_dataset(
    filtered: &[(TaskRecord, Vec<PoolEntry>)],
    path: &Path,
    templates: &TemplateSet,
) -> Result<usize, FlywheelError> {
    #[derive(Serialize)]
    struct SftLine<'a> {
        prompt: String,
        completion: &'a str,
    }
    let mut rows: Vec<(&TaskRecord, &PoolEntry)> = filtered
        .iter()
        .flat_map(|(task, entries)| entries.iter().map(move |e| (task, e)))
        .collect();
    if rows.is_empty() {
        return Err(FlywheelError::EmptyDataset);
    }
    rows.sort_by(|(ta, ea), (tb, eb)| {
        (&ta.id, ea.round, ea.provenance).cmp(&(&tb.id, eb.round, eb.provenance))
    });
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    let count = rows.len();
    for (task, entry) in rows {
        let line = SftLine {
            prompt: templates.render_i1(&task.question),
            completion: &entry.raw,
        };
        serde_json::to_writer(&mut file, &line).map_err(std::io::Error::from)?;
        file.write_all(b"\n")?;
    }
    file.flush()?;
    Ok(count)
}
