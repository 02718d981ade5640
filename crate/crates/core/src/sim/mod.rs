//! Deterministic synthetic TIR environment: generated tasks with known
//! answers, executable tool semantics, and simulated agents with injectable
//! error patterns. Every pipeline stage can run against it without a model.

pub mod arith;

use std::collections::HashMap;
use std::sync::Mutex;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::flywheel::{Generator, GeneratorError};
use crate::policy::{Action, ActionToken, ToyPolicy, NUM_ACTIONS};
use crate::trajectory::{parse_trajectory, Segment, TaskKind, ToolKind, Trajectory};

/// Per-tool invocation cap, applied to each kind separately.
pub const MAX_CALLS_PER_KIND: usize = 6;

/// Cap on policy decisions per rollout; a forced answer is appended when hit.
pub const MAX_POLICY_ACTIONS: usize = 24;

const PAD_CAP: usize = 4;

/// One planned tool invocation with its pre-verified result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub kind: ToolKind,
    pub payload: String,
    pub expected_result: String,
    pub think: String,
}

/// A generated task whose minimal tool sequence provably reaches the gold
/// answer through the backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTask {
    pub id: String,
    pub kind: TaskKind,
    pub question: String,
    pub gold: String,
    pub solution_plan: Vec<PlanStep>,
}

/// Deterministic tool semantics: an exact arithmetic evaluator and an
/// exact-key fact lookup. Failures are in-band result texts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ToolBackend {
    pub facts: HashMap<String, String>,
}

impl ToolBackend {
    pub fn execute(&self, kind: ToolKind, payload: &str) -> String {
        match kind {
            ToolKind::Python => match arith::evaluate(payload) {
                Ok(v) => v,
                Err(e) => format!("Error: {e}"),
            },
            ToolKind::Search => {
                let query = payload.trim();
                if query.is_empty() {
                    return "Error: empty query.".to_string();
                }
                if !query
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || matches!(c, ' ' | '-' | '_' | '\''))
                {
                    return "Error: malformed query.".to_string();
                }
                match self.facts.get(query) {
                    Some(v) => v.clone(),
                    None => "No results found.".to_string(),
                }
            }
        }
    }
}

/// Error-injection knobs for the scripted simulated agent. A fixed seed
/// yields byte-identical trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimAgentConfig {
    pub seed: u64,
    pub p_redundant_call: f64,
    pub p_malformed_call: f64,
    pub p_premature_answer: f64,
    pub p_reasoning_error: f64,
    /// Inclusive range of extra padding words appended to think segments.
    pub verbosity_tokens: (usize, usize),
}

impl Default for SimAgentConfig {
    fn default() -> Self {
        SimAgentConfig {
            seed: 0,
            p_redundant_call: 0.0,
            p_malformed_call: 0.0,
            p_premature_answer: 0.0,
            p_reasoning_error: 0.0,
            verbosity_tokens: (0, 0),
        }
    }
}

/// A generated task set together with the backend that can execute it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimWorld {
    pub tasks: Vec<SyntheticTask>,
    pub backend: ToolBackend,
}

impl SimWorld {
    /// Generates `n` tasks of one kind. Hop counts cycle 1,2,3 so the
    /// hop-count histogram is exact rather than sampled.
    pub fn generate(n: usize, kind: TaskKind, seed: u64) -> SimWorld {
        let mut world = SimWorld {
            tasks: Vec::new(),
            backend: ToolBackend::default(),
        };
        world.extend(n, kind, seed);
        world
    }

    /// Generates a mixed task set: `n_math` math tasks then `n_knowledge`
    /// knowledge tasks, sharing one fact table.
    pub fn generate_mixed(n_math: usize, n_knowledge: usize, seed: u64) -> SimWorld {
        let mut world = SimWorld {
            tasks: Vec::new(),
            backend: ToolBackend::default(),
        };
        world.extend(n_math, TaskKind::Math, seed);
        world.extend(n_knowledge, TaskKind::Knowledge, seed.wrapping_add(1));
        world
    }

    fn extend(&mut self, n: usize, kind: TaskKind, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7431_6361_6c5f_7631);
        for i in 0..n {
            let hops = 1 + i % 3;
            let task = match kind {
                TaskKind::Math => make_math_task(&mut rng, i, hops, &self.backend),
                TaskKind::Knowledge => make_knowledge_task(&mut rng, i, hops, &mut self.backend),
            };
            // construction invariant: the plan reaches gold through the backend
            for step in &task.solution_plan {
                debug_assert_eq!(self.backend.execute(step.kind, &step.payload), step.expected_result);
            }
            self.tasks.push(task);
        }
    }

    pub fn task_by_id(&self, id: &str) -> Option<&SyntheticTask> {
        self.tasks.iter().find(|t| t.id == id)
    }

    /// Finds the task whose question appears in the given prompt.
    pub fn task_for_prompt(&self, prompt: &str) -> Option<&SyntheticTask> {
        self.tasks.iter().find(|t| prompt.contains(&t.question))
    }
}

fn make_math_task(rng: &mut ChaCha8Rng, index: usize, hops: usize, backend: &ToolBackend) -> SyntheticTask {
    let mut value: i64 = rng.gen_range(2..40);
    let mut plan = Vec::new();
    let mut sentences = vec![format!("Start with {value}.")];
    for h in 0..hops {
        let operand: i64 = rng.gen_range(2..12);
        let (expr, sentence, next) = match rng.gen_range(0..3u8) {
            0 => (
                format!("{value}+{operand}"),
                format!("Add {operand}."),
                value + operand,
            ),
            1 => (
                format!("{value}-{operand}"),
                format!("Subtract {operand}."),
                value - operand,
            ),
            _ => (
                format!("{value}*{operand}"),
                format!("Multiply the result by {operand}."),
                value * operand,
            ),
        };
        let expected = backend.execute(ToolKind::Python, &expr);
        plan.push(PlanStep {
            kind: ToolKind::Python,
            payload: expr,
            expected_result: expected,
            think: format!("Compute stage {} of the calculation.", h + 1),
        });
        sentences.push(sentence);
        value = next;
    }
    sentences.push("What is the final value?".to_string());
    SyntheticTask {
        id: format!("math-{index:04}"),
        kind: TaskKind::Math,
        question: sentences.join(" "),
        gold: value.to_string(),
        solution_plan: plan,
    }
}

const ENTITY_WORDS: [&str; 12] = [
    "river", "bridge", "valley", "garden", "castle", "harbor", "meadow", "tower", "canyon",
    "island", "forest", "summit",
];

fn make_knowledge_task(
    rng: &mut ChaCha8Rng,
    index: usize,
    hops: usize,
    backend: &mut ToolBackend,
) -> SyntheticTask {
    let chain: Vec<String> = (0..=hops)
        .map(|j| {
            let word = ENTITY_WORDS[rng.gen_range(0..ENTITY_WORDS.len())];
            format!("{word} {index:04}-{j}")
        })
        .collect();
    let mut plan = Vec::new();
    for j in 0..hops {
        backend
            .facts
            .insert(chain[j].clone(), format!("{} links to {}.", chain[j], chain[j + 1]));
        plan.push(PlanStep {
            kind: ToolKind::Search,
            payload: chain[j].clone(),
            expected_result: format!("{} links to {}.", chain[j], chain[j + 1]),
            think: format!("Look up hop {} of the chain.", j + 1),
        });
    }
    SyntheticTask {
        id: format!("know-{index:04}"),
        kind: TaskKind::Knowledge,
        question: format!(
            "Follow the link chain starting at {} for {} hop{}. Which entity do you reach?",
            chain[0],
            hops,
            if hops == 1 { "" } else { "s" }
        ),
        gold: chain[hops].clone(),
        solution_plan: plan,
    }
}

/// Executes one tool call against a backend; a convenience over
/// [`ToolBackend::execute`].
pub fn execute_tool(backend: &ToolBackend, kind: ToolKind, payload: &str) -> String {
    backend.execute(kind, payload)
}

fn pad_words(rng: &mut ChaCha8Rng, range: (usize, usize)) -> String {
    let n = if range.1 > range.0 {
        rng.gen_range(range.0..=range.1)
    } else {
        range.0
    };
    (0..n).map(|_| "indeed").collect::<Vec<_>>().join(" ")
}

fn wrong_answer_for(task: &SyntheticTask) -> String {
    match task.kind {
        TaskKind::Math => "incomplete".to_string(),
        TaskKind::Knowledge => "Insufficient information".to_string(),
    }
}

fn answer_segment(text: &str) -> Segment {
    Segment::Answer(format!("The final answer is \\[ \\boxed{{{text}}} \\]"))
}

/// Scripted rollout following the task's solution plan with configured error
/// injections. Output is always parseable.
pub fn rollout_simulated_agent(
    task: &SyntheticTask,
    backend: &ToolBackend,
    cfg: &SimAgentConfig,
    rng: &mut ChaCha8Rng,
) -> Trajectory {
    let mut segments: Vec<Segment> = Vec::new();
    let mut calls: HashMap<ToolKind, usize> = HashMap::new();
    let mut reasoning_error = false;
    let mut premature = false;

    for step in &task.solution_plan {
        if rng.gen_bool(cfg.p_premature_answer) {
            premature = true;
            break;
        }
        let mut think = step.think.clone();
        let pad = pad_words(rng, cfg.verbosity_tokens);
        if !pad.is_empty() {
            think.push(' ');
            think.push_str(&pad);
        }
        segments.push(Segment::Think(think));

        let used = calls.entry(step.kind).or_insert(0);
        if rng.gen_bool(cfg.p_malformed_call) && *used + 2 <= MAX_CALLS_PER_KIND {
            let corrupted = match step.kind {
                ToolKind::Python => format!("{} ++", step.payload),
                ToolKind::Search => format!("{} @@", step.payload),
            };
            let result = backend.execute(step.kind, &corrupted);
            segments.push(Segment::ToolCall { kind: step.kind, text: corrupted });
            segments.push(Segment::ToolResult { kind: step.kind, text: result });
            segments.push(Segment::Think("That failed; retry the call correctly.".to_string()));
            *used += 1;
        }
        if *used >= MAX_CALLS_PER_KIND {
            premature = true;
            break;
        }
        let result = backend.execute(step.kind, &step.payload);
        segments.push(Segment::ToolCall { kind: step.kind, text: step.payload.clone() });
        segments.push(Segment::ToolResult { kind: step.kind, text: result });
        *used += 1;

        if rng.gen_bool(cfg.p_reasoning_error) {
            reasoning_error = true;
        }
        if rng.gen_bool(cfg.p_redundant_call) && *used < MAX_CALLS_PER_KIND {
            let result = backend.execute(step.kind, &step.payload);
            segments.push(Segment::Think("Double-check the previous call.".to_string()));
            segments.push(Segment::ToolCall { kind: step.kind, text: step.payload.clone() });
            segments.push(Segment::ToolResult { kind: step.kind, text: result });
            *used += 1;
        }
    }

    let answer_text = if premature {
        wrong_answer_for(task)
    } else if reasoning_error {
        format!("{} approximately", task.gold)
    } else {
        task.gold.clone()
    };
    segments.push(Segment::Think(if premature {
        "The available information seems sufficient; answer now.".to_string()
    } else {
        "All stages are done; state the final answer.".to_string()
    }));
    segments.push(answer_segment(&answer_text));
    Trajectory::from_segments(segments).expect("simulated rollout is well-formed")
}

/// One policy-driven rollout: the produced trajectory plus the per-decision
/// tokens needed to evaluate log-probabilities later.
#[derive(Debug, Clone)]
pub struct PolicyRollout {
    pub trajectory: Trajectory,
    pub tokens: Vec<ActionToken>,
}

/// Rollout driven by the toy policy over the template action space.
pub fn rollout_with_policy(
    task: &SyntheticTask,
    backend: &ToolBackend,
    policy: &ToyPolicy,
    verbosity: (usize, usize),
    rng: &mut ChaCha8Rng,
) -> PolicyRollout {
    let mut segments: Vec<Segment> = Vec::new();
    let mut tokens: Vec<ActionToken> = Vec::new();
    let mut calls: HashMap<ToolKind, usize> = HashMap::new();
    let mut next_plan = 0usize;
    let mut last_call: Option<(ToolKind, String)> = None;
    let mut pads = 0usize;
    let mut answered = false;

    for _ in 0..MAX_POLICY_ACTIONS {
        let plan_done = next_plan >= task.solution_plan.len();
        let state = usize::from(plan_done);
        let mut mask = [false; NUM_ACTIONS];
        if !plan_done {
            let kind = task.solution_plan[next_plan].kind;
            mask[Action::PlanStep as usize] = *calls.get(&kind).unwrap_or(&0) < MAX_CALLS_PER_KIND;
        }
        if let Some((kind, _)) = &last_call {
            mask[Action::RepeatCall as usize] = *calls.get(kind).unwrap_or(&0) < MAX_CALLS_PER_KIND;
        }
        mask[Action::AnswerNow as usize] = true;
        mask[Action::PadThink as usize] = pads < PAD_CAP;

        let action = policy.sample(state, &mask, rng);
        tokens.push(ActionToken { state, mask, action });

        match Action::from_index(action) {
            Action::PlanStep => {
                let step = &task.solution_plan[next_plan];
                let mut think = step.think.clone();
                let pad = pad_words(rng, verbosity);
                if !pad.is_empty() {
                    think.push(' ');
                    think.push_str(&pad);
                }
                let result = backend.execute(step.kind, &step.payload);
                segments.push(Segment::Think(think));
                segments.push(Segment::ToolCall { kind: step.kind, text: step.payload.clone() });
                segments.push(Segment::ToolResult { kind: step.kind, text: result });
                *calls.entry(step.kind).or_insert(0) += 1;
                last_call = Some((step.kind, step.payload.clone()));
                next_plan += 1;
            }
            Action::RepeatCall => {
                let (kind, payload) = last_call.clone().expect("masked when no prior call");
                let result = backend.execute(kind, &payload);
                segments.push(Segment::Think("Double-check the previous call.".to_string()));
                segments.push(Segment::ToolCall { kind, text: payload });
                segments.push(Segment::ToolResult { kind, text: result });
                *calls.entry(kind).or_insert(0) += 1;
            }
            Action::AnswerNow => {
                let text = if plan_done {
                    task.gold.clone()
                } else {
                    wrong_answer_for(task)
                };
                segments.push(Segment::Think("State the final answer.".to_string()));
                segments.push(answer_segment(&text));
                answered = true;
            }
            Action::PadThink => {
                let pad = pad_words(rng, (verbosity.0.max(3), verbosity.1.max(6)));
                segments.push(Segment::Think(format!("Reconsider the problem. {pad}")));
                pads += 1;
            }
        }
        if answered {
            break;
        }
    }
    if !answered {
        // environment-forced termination, not a policy token
        let text = if next_plan >= task.solution_plan.len() {
            task.gold.clone()
        } else {
            wrong_answer_for(task)
        };
        segments.push(Segment::Think("State the final answer.".to_string()));
        segments.push(answer_segment(&text));
    }
    PolicyRollout {
        trajectory: Trajectory::from_segments(segments).expect("policy rollout is well-formed"),
        tokens,
    }
}

/// Reconstructs the policy-action sequence a trajectory corresponds to, for
/// likelihood training on flywheel output.
pub fn actions_from_trajectory(
    task: &SyntheticTask,
    trajectory: &Trajectory,
) -> Result<Vec<ActionToken>, UnrepresentableTrajectory> {
    let mut tokens = Vec::new();
    let mut calls: HashMap<ToolKind, usize> = HashMap::new();
    let mut next_plan = 0usize;
    let mut last_call: Option<(ToolKind, String)> = None;
    let mut pads = 0usize;

    let mut push = |state: usize,
                    action: Action,
                    calls: &HashMap<ToolKind, usize>,
                    last_call: &Option<(ToolKind, String)>,
                    next_plan: usize,
                    pads: usize| {
        let mut mask = [false; NUM_ACTIONS];
        if next_plan < task.solution_plan.len() {
            let kind = task.solution_plan[next_plan].kind;
            mask[Action::PlanStep as usize] = *calls.get(&kind).unwrap_or(&0) < MAX_CALLS_PER_KIND;
        }
        if let Some((kind, _)) = last_call {
            mask[Action::RepeatCall as usize] = *calls.get(kind).unwrap_or(&0) < MAX_CALLS_PER_KIND;
        }
        mask[Action::AnswerNow as usize] = true;
        mask[Action::PadThink as usize] = pads < PAD_CAP;
        tokens.push(ActionToken {
            state,
            mask,
            action: action as usize,
        });
    };

    let segments = trajectory.segments();
    let mut i = 0usize;
    while i < segments.len() {
        let plan_done = next_plan >= task.solution_plan.len();
        let state = usize::from(plan_done);
        match &segments[i] {
            Segment::ToolCall { kind, text } => {
                if !plan_done
                    && task.solution_plan[next_plan].kind == *kind
                    && task.solution_plan[next_plan].payload == *text
                {
                    push(state, Action::PlanStep, &calls, &last_call, next_plan, pads);
                    next_plan += 1;
                } else if last_call.as_ref().is_some_and(|(k, p)| k == kind && p == text) {
                    push(state, Action::RepeatCall, &calls, &last_call, next_plan, pads);
                } else {
                    return Err(UnrepresentableTrajectory);
                }
                *calls.entry(*kind).or_insert(0) += 1;
                last_call = Some((*kind, text.clone()));
                i += 2; // skip the paired result
            }
            Segment::Answer(_) => {
                push(state, Action::AnswerNow, &calls, &last_call, next_plan, pads);
                i += 1;
            }
            Segment::Think(_) => {
                // a think directly before a call or answer belongs to that
                // action; a standalone think is a padding action
                let attached = matches!(
                    segments.get(i + 1),
                    Some(Segment::ToolCall { .. }) | Some(Segment::Answer(_))
                );
                if !attached {
                    push(state, Action::PadThink, &calls, &last_call, next_plan, pads);
                    pads += 1;
                }
                i += 1;
            }
            Segment::ToolResult { .. } => {
                i += 1;
            }
        }
    }
    Ok(tokens)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("trajectory contains actions outside the toy action space")]
pub struct UnrepresentableTrajectory;

/// A generator backed by substring-matched scripted responses. Unmatched
/// prompts get the fallback.
pub struct ScriptedGenerator {
    script: Vec<(String, String)>,
    fallback: String,
}

impl ScriptedGenerator {
    pub fn new(script: Vec<(String, String)>, fallback: impl Into<String>) -> Self {
        ScriptedGenerator {
            script,
            fallback: fallback.into(),
        }
    }
}

impl Generator for ScriptedGenerator {
    fn complete(&self, prompt: &str, _continuation_of: Option<&str>) -> Result<String, GeneratorError> {
        for (pattern, response) in &self.script {
            if prompt.contains(pattern.as_str()) {
                return Ok(response.clone());
            }
        }
        Ok(self.fallback.clone())
    }

    fn name(&self) -> &str {
        "scripted"
    }
}

/// Convenience constructor matching the script-map shape used in tests.
pub fn scripted_generator(script: Vec<(String, String)>, fallback: &str) -> ScriptedGenerator {
    ScriptedGenerator::new(script, fallback)
}

/// A [`Generator`] backed by the simulated agent: prompts are matched to
/// tasks by question text, continuations complete the remaining plan.
pub struct SimGenerator {
    world: SimWorld,
    cfg: SimAgentConfig,
    rng: Mutex<ChaCha8Rng>,
}

impl SimGenerator {
    pub fn new(world: SimWorld, cfg: SimAgentConfig) -> Self {
        let rng = Mutex::new(ChaCha8Rng::seed_from_u64(cfg.seed));
        SimGenerator {
            world,
            cfg,
            rng,
        }
    }

    pub fn world(&self) -> &SimWorld {
        &self.world
    }

    /// Completes the remaining plan after the given prefix trajectory.
    fn continue_from(&self, task: &SyntheticTask, prefix: &str) -> String {
        let executed: Vec<(ToolKind, String)> = match parse_trajectory(prefix) {
            Ok(t) => t
                .segments()
                .iter()
                .filter_map(|s| match s {
                    Segment::ToolCall { kind, text } => Some((*kind, text.clone())),
                    _ => None,
                })
                .collect(),
            Err(_) => Vec::new(),
        };
        let mut next_plan = 0usize;
        for (kind, text) in &executed {
            if next_plan < task.solution_plan.len()
                && task.solution_plan[next_plan].kind == *kind
                && task.solution_plan[next_plan].payload == *text
            {
                next_plan += 1;
            }
        }
        let mut segments: Vec<Segment> = Vec::new();
        for step in &task.solution_plan[next_plan..] {
            segments.push(Segment::Think(step.think.clone()));
            segments.push(Segment::ToolCall { kind: step.kind, text: step.payload.clone() });
            segments.push(Segment::ToolResult {
                kind: step.kind,
                text: self.world.backend.execute(step.kind, &step.payload),
            });
        }
        segments.push(Segment::Think("All stages are done; state the final answer.".to_string()));
        segments.push(answer_segment(&task.gold));
        Trajectory::from_segments(segments)
            .expect("continuation is well-formed")
            .serialize()
    }
}

impl Generator for SimGenerator {
    fn complete(&self, prompt: &str, continuation_of: Option<&str>) -> Result<String, GeneratorError> {
        let task = self
            .world
            .task_for_prompt(prompt)
            .ok_or_else(|| GeneratorError::Unavailable("no task matches the prompt".to_string()))?;
        match continuation_of {
            Some(prefix) => Ok(self.continue_from(task, prefix)),
            None => {
                let mut rng = self.rng.lock().unwrap();
                Ok(rollout_simulated_agent(task, &self.world.backend, &self.cfg, &mut rng).serialize())
            }
        }
    }

    fn name(&self) -> &str {
        "simulated"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{detect_aborted_executions, detect_duplicate_tool_calls};
    use crate::reward::correctness_reward;

    #[test]
    fn task_generation_is_deterministic() {
        let a = SimWorld::generate(5, TaskKind::Math, 0);
        let b = SimWorld::generate(5, TaskKind::Math, 0);
        assert_eq!(a, b);
        let c = SimWorld::generate(5, TaskKind::Math, 1);
        assert_ne!(a.tasks, c.tasks);
    }

    #[test]
    fn plans_reach_gold() {
        let world = SimWorld::generate_mixed(20, 20, 1);
        for task in &world.tasks {
            for step in &task.solution_plan {
                assert_eq!(world.backend.execute(step.kind, &step.payload), step.expected_result);
            }
            match task.kind {
                TaskKind::Math => {
                    let last = task.solution_plan.last().unwrap();
                    assert_eq!(last.expected_result, task.gold);
                }
                TaskKind::Knowledge => {
                    let last = task.solution_plan.last().unwrap();
                    assert!(last.expected_result.contains(&task.gold));
                }
            }
        }
    }

    #[test]
    fn hop_histogram_is_stratified() {
        let world = SimWorld::generate(100, TaskKind::Knowledge, 1);
        let mut histogram = [0usize; 4];
        for t in &world.tasks {
            histogram[t.solution_plan.len()] += 1;
        }
        assert_eq!(histogram, [0, 34, 33, 33]);
    }

    #[test]
    fn tool_semantics() {
        let mut backend = ToolBackend::default();
        backend.facts.insert("river 0000-0".to_string(), "a fact".to_string());
        assert_eq!(backend.execute(ToolKind::Python, "2+3*4"), "14");
        assert_eq!(backend.execute(ToolKind::Python, "import os"), "Error: unsupported construct");
        assert_eq!(backend.execute(ToolKind::Search, "river 0000-0"), "a fact");
        assert_eq!(backend.execute(ToolKind::Search, "unknown thing"), "No results found.");
        assert_eq!(backend.execute(ToolKind::Search, ""), "Error: empty query.");
        assert_eq!(backend.execute(ToolKind::Search, "x @@"), "Error: malformed query.");
    }

    #[test]
    fn clean_rollout_is_correct() {
        let world = SimWorld::generate_mixed(10, 10, 2);
        let cfg = SimAgentConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for task in &world.tasks {
            let t = rollout_simulated_agent(task, &world.backend, &cfg, &mut rng);
            let correctness = correctness_reward(t.final_answer().unwrap(), &task.gold, task.kind);
            assert_eq!(correctness, 1.0, "task {}", task.id);
            assert!(detect_aborted_executions(&t).is_empty());
            assert!(detect_duplicate_tool_calls(&t).is_empty());
            assert_eq!(t.tool_call_count(), task.solution_plan.len());
        }
    }

    #[test]
    fn injection_fidelity() {
        let world = SimWorld::generate_mixed(10, 10, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let redundant = SimAgentConfig { p_redundant_call: 1.0, ..Default::default() };
        for task in &world.tasks {
            let t = rollout_simulated_agent(task, &world.backend, &redundant, &mut rng);
            assert!(!detect_duplicate_tool_calls(&t).is_empty(), "task {}", task.id);
        }
        let malformed = SimAgentConfig { p_malformed_call: 1.0, ..Default::default() };
        for task in &world.tasks {
            let t = rollout_simulated_agent(task, &world.backend, &malformed, &mut rng);
            assert!(!detect_aborted_executions(&t).is_empty(), "task {}", task.id);
        }
        let premature = SimAgentConfig { p_premature_answer: 1.0, ..Default::default() };
        for task in &world.tasks {
            let t = rollout_simulated_agent(task, &world.backend, &premature, &mut rng);
            assert_eq!(correctness_reward(t.final_answer().unwrap(), &task.gold, task.kind), 0.0);
            assert_eq!(t.tool_call_count(), 0);
        }
        let erroneous = SimAgentConfig { p_reasoning_error: 1.0, ..Default::default() };
        for task in &world.tasks {
            let t = rollout_simulated_agent(task, &world.backend, &erroneous, &mut rng);
            assert!(correctness_reward(t.final_answer().unwrap(), &task.gold, task.kind) < 1.0);
        }
    }

    #[test]
    fn rollouts_are_seed_deterministic() {
        let world = SimWorld::generate(3, TaskKind::Math, 4);
        let cfg = SimAgentConfig { p_redundant_call: 0.5, p_malformed_call: 0.3, verbosity_tokens: (1, 5), ..Default::default() };
        let one: Vec<String> = {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            world.tasks.iter().map(|t| rollout_simulated_agent(t, &world.backend, &cfg, &mut rng).serialize()).collect()
        };
        let two: Vec<String> = {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            world.tasks.iter().map(|t| rollout_simulated_agent(t, &world.backend, &cfg, &mut rng).serialize()).collect()
        };
        assert_eq!(one, two);
    }

    #[test]
    fn tool_cap_respected() {
        let world = SimWorld::generate(12, TaskKind::Math, 5);
        let cfg = SimAgentConfig {
            p_redundant_call: 1.0,
            p_malformed_call: 1.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for task in &world.tasks {
            let t = rollout_simulated_agent(task, &world.backend, &cfg, &mut rng);
            assert!(t.tool_call_count_of(ToolKind::Python) <= MAX_CALLS_PER_KIND);
            assert!(t.tool_call_count_of(ToolKind::Search) <= MAX_CALLS_PER_KIND);
        }
    }

    #[test]
    fn malformed_rate_near_half() {
        let world = SimWorld::generate(1, TaskKind::Math, 9);
        let task = &world.tasks[0];
        let cfg = SimAgentConfig { p_malformed_call: 0.5, seed: 9, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut flagged = 0usize;
        let n = 1000;
        for _ in 0..n {
            let t = rollout_simulated_agent(task, &world.backend, &cfg, &mut rng);
            if !detect_aborted_executions(&t).is_empty() {
                flagged += 1;
            }
        }
        let rate = flagged as f64 / n as f64;
        assert!((rate - 0.5).abs() <= 0.03, "rate {rate}");
    }

    #[test]
    fn scripted_generator_matching() {
        let g = scripted_generator(
            vec![("locate".to_string(), "Step: no".to_string())],
            "fallback",
        );
        assert_eq!(g.complete("please locate redundancy", None).unwrap(), "Step: no");
        assert_eq!(g.complete("something else", None).unwrap(), "fallback");
    }
}
