//! The toy calibration policy and its optimization machinery: masked
//! categorical policy with exact log-probabilities, group-normalized
//! advantages, the clipped group-relative surrogate and its analytic
//! gradient, a max-likelihood imitation step, and the curriculum loop.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{compute_effi, ScoredTrajectory};
use crate::pareto::{compute_group_stats, pareto_select, population_std, GroupStats};
use crate::reward::{correctness_reward, group_rewards, RewardConfig};
use crate::sim::{rollout_with_policy, PolicyRollout, SimWorld};

pub const NUM_ACTIONS: usize = 4;
pub const NUM_STATES: usize = 2;
pub const THETA_LEN: usize = NUM_STATES * NUM_ACTIONS;

/// The template action space the policy chooses from at each decision point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    /// Execute the next planned tool call.
    PlanStep = 0,
    /// Re-issue the most recent tool call (a redundant behavior).
    RepeatCall = 1,
    /// Emit the final answer now, complete or not.
    AnswerNow = 2,
    /// Emit a padding think segment.
    PadThink = 3,
}

impl Action {
    pub fn from_index(i: usize) -> Action {
        match i {
            0 => Action::PlanStep,
            1 => Action::RepeatCall,
            2 => Action::AnswerNow,
            3 => Action::PadThink,
            _ => panic!("action index {i} out of range"),
        }
    }
}

/// One recorded policy decision: the state it was made in, the legal-action
/// mask at that moment, and the action taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionToken {
    /// 0 while the solution plan is incomplete, 1 once it is complete.
    pub state: usize,
    pub mask: [bool; NUM_ACTIONS],
    pub action: usize,
}

/// A masked-softmax categorical policy over two states and four actions,
/// with exact log-probabilities and closed-form gradients in its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyPolicy {
    pub theta: [f64; THETA_LEN],
    pub theta_old: [f64; THETA_LEN],
}

impl ToyPolicy {
    pub fn new(theta: [f64; THETA_LEN]) -> Self {
        ToyPolicy {
            theta,
            theta_old: theta,
        }
    }

    /// Builds a policy whose unmasked per-state action probabilities match
    /// the given rows.
    pub fn from_probs(probs: [[f64; NUM_ACTIONS]; NUM_STATES]) -> Self {
        let mut theta = [0.0; THETA_LEN];
        for s in 0..NUM_STATES {
            for a in 0..NUM_ACTIONS {
                theta[s * NUM_ACTIONS + a] = probs[s][a].max(1e-12).ln();
            }
        }
        ToyPolicy::new(theta)
    }

    /// A deliberately miscalibrated initial policy: repeats calls with
    /// probability `p_redundant`, answers prematurely with `p_premature`.
    pub fn over_caller(p_redundant: f64, p_premature: f64) -> Self {
        let pad = 0.05;
        let plan = (1.0 - p_redundant - p_premature - pad).max(0.01);
        ToyPolicy::from_probs([
            [plan, p_redundant, p_premature, pad],
            [0.01, p_redundant.max(0.01), (1.0 - p_redundant - pad).max(0.01), pad],
        ])
    }

    pub fn refresh_old(&mut self) {
        self.theta_old = self.theta;
    }

    fn masked_probs(theta: &[f64; THETA_LEN], state: usize, mask: &[bool; NUM_ACTIONS]) -> [f64; NUM_ACTIONS] {
        let row = &theta[state * NUM_ACTIONS..(state + 1) * NUM_ACTIONS];
        let max = row
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(v, _)| *v)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut probs = [0.0; NUM_ACTIONS];
        let mut z = 0.0;
        for a in 0..NUM_ACTIONS {
            if mask[a] {
                probs[a] = (row[a] - max).exp();
                z += probs[a];
            }
        }
        for p in &mut probs {
            *p /= z;
        }
        probs
    }

    pub fn probs(&self, state: usize, mask: &[bool; NUM_ACTIONS]) -> [f64; NUM_ACTIONS] {
        Self::masked_probs(&self.theta, state, mask)
    }

    pub fn log_prob(&self, token: &ActionToken) -> f64 {
        Self::masked_probs(&self.theta, token.state, &token.mask)[token.action].ln()
    }

    pub fn log_prob_old(&self, token: &ActionToken) -> f64 {
        Self::masked_probs(&self.theta_old, token.state, &token.mask)[token.action].ln()
    }

    /// Gradient of `log pi_theta(action | state, mask)` in theta: the usual
    /// indicator-minus-probability form, restricted to the state's row and
    /// the unmasked entries.
    pub fn grad_log_prob(&self, token: &ActionToken) -> [f64; THETA_LEN] {
        let probs = Self::masked_probs(&self.theta, token.state, &token.mask);
        let mut grad = [0.0; THETA_LEN];
        for a in 0..NUM_ACTIONS {
            if token.mask[a] {
                let indicator = if a == token.action { 1.0 } else { 0.0 };
                grad[token.state * NUM_ACTIONS + a] = indicator - probs[a];
            }
        }
        grad
    }

    pub fn sample(&self, state: usize, mask: &[bool; NUM_ACTIONS], rng: &mut ChaCha8Rng) -> usize {
        let probs = Self::masked_probs(&self.theta, state, mask);
        let mut u: f64 = rng.gen();
        for a in 0..NUM_ACTIONS {
            if mask[a] {
                u -= probs[a];
                if u <= 0.0 {
                    return a;
                }
            }
        }
        // numerical leftover: return the last legal action
        (0..NUM_ACTIONS).rev().find(|&a| mask[a]).expect("mask has a legal action")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("groups and advantages have mismatched shapes")]
    MismatchedShapes,
    #[error("invalid curriculum schedule: {0}")]
    BadSchedule(String),
    #[error("corrupted checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("checkpoint io: {0}")]
    CheckpointIo(String),
}

/// Group-normalized advantages. With positive reward dispersion they have
/// zero mean and unit population standard deviation; a homogeneous group
/// yields all zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvantageVector {
    pub values: Vec<f64>,
}

pub fn group_advantages(rewards: &[f64]) -> AdvantageVector {
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let std = population_std(rewards);
    let values = if std == 0.0 {
        vec![0.0; rewards.len()]
    } else {
        rewards.iter().map(|r| (r - mean) / std).collect()
    };
    AdvantageVector { values }
}

/// The clipped group-relative surrogate: mean over groups of
/// `(1/G) sum_i (1/|o_i|) sum_t min(r_t A_i, clip(r_t, 1-eps, 1+eps) A_i)`
/// with `r_t` the new/old probability ratio of the i-th trajectory's t-th
/// policy action. Environment-produced content carries no tokens.
pub fn clipped_surrogate_objective(
    policy: &ToyPolicy,
    groups: &[Vec<Vec<ActionToken>>],
    advantages: &[AdvantageVector],
    epsilon: f64,
) -> Result<f64, PolicyError> {
    check_shapes(groups, advantages)?;
    let mut total = 0.0;
    for (group, adv) in groups.iter().zip(advantages) {
        let mut group_sum = 0.0;
        for (tokens, &a) in group.iter().zip(&adv.values) {
            if tokens.is_empty() {
                continue;
            }
            let mut traj_sum = 0.0;
            for token in tokens {
                let r = (policy.log_prob(token) - policy.log_prob_old(token)).exp();
                let clipped = r.clamp(1.0 - epsilon, 1.0 + epsilon);
                traj_sum += (r * a).min(clipped * a);
            }
            group_sum += traj_sum / tokens.len() as f64;
        }
        total += group_sum / group.len() as f64;
    }
    Ok(total / groups.len() as f64)
}

/// Exact analytic gradient of [`clipped_surrogate_objective`] in theta. The
/// min's piecewise structure follows the active branch: when the clipped
/// branch is active and saturated the contribution is flat, so zero.
pub fn objective_gradient(
    policy: &ToyPolicy,
    groups: &[Vec<Vec<ActionToken>>],
    advantages: &[AdvantageVector],
    epsilon: f64,
) -> Result<[f64; THETA_LEN], PolicyError> {
    check_shapes(groups, advantages)?;
    let mut grad = [0.0; THETA_LEN];
    for (group, adv) in groups.iter().zip(advantages) {
        for (tokens, &a) in group.iter().zip(&adv.values) {
            if tokens.is_empty() || a == 0.0 {
                continue;
            }
            let weight = 1.0 / (groups.len() as f64 * group.len() as f64 * tokens.len() as f64);
            for token in tokens {
                let r = (policy.log_prob(token) - policy.log_prob_old(token)).exp();
                let clipped = r.clamp(1.0 - epsilon, 1.0 + epsilon);
                // the unclipped branch is active (or tied) unless the
                // clipped branch is strictly smaller, which requires
                // saturation
                if r * a <= clipped * a {
                    let g = policy.grad_log_prob(token);
                    for (slot, gi) in grad.iter_mut().zip(g) {
                        *slot += weight * a * r * gi;
                    }
                }
            }
        }
    }
    Ok(grad)
}

fn check_shapes(groups: &[Vec<Vec<ActionToken>>], advantages: &[AdvantageVector]) -> Result<(), PolicyError> {
    if groups.is_empty()
        || groups.len() != advantages.len()
        || groups.iter().zip(advantages).any(|(g, a)| g.len() != a.values.len())
    {
        return Err(PolicyError::MismatchedShapes);
    }
    Ok(())
}

fn dataset_log_likelihood(policy: &ToyPolicy, dataset: &[Vec<ActionToken>]) -> f64 {
    dataset
        .iter()
        .flat_map(|tokens| tokens.iter())
        .map(|t| policy.log_prob(t))
        .sum()
}

/// One gradient-ascent step on the summed log-likelihood of the dataset's
/// actions, with step halving (up to 10 times) so the likelihood never
/// decreases. An empty dataset leaves theta unchanged.
pub fn mle_imitation_step(policy: &mut ToyPolicy, dataset: &[Vec<ActionToken>], learning_rate: f64) {
    if dataset.iter().all(|t| t.is_empty()) {
        return;
    }
    let mut grad = [0.0; THETA_LEN];
    for tokens in dataset {
        for token in tokens {
            let g = policy.grad_log_prob(token);
            for (slot, gi) in grad.iter_mut().zip(g) {
                *slot += gi;
            }
        }
    }
    let before = dataset_log_likelihood(policy, dataset);
    let base = policy.theta;
    let mut lr = learning_rate;
    for _ in 0..=10 {
        let mut candidate = base;
        for (c, g) in candidate.iter_mut().zip(grad) {
            *c += lr * g;
        }
        let trial = ToyPolicy { theta: candidate, theta_old: policy.theta_old };
        if dataset_log_likelihood(&trial, dataset) >= before {
            policy.theta = candidate;
            return;
        }
        lr *= 0.5;
    }
}

/// The curriculum: per round, how sharp the behavior sigmas are, how many
/// questions Pareto selection keeps, and how many ascent epochs run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumSchedule {
    pub rounds: usize,
    pub sigma_tool_per_round: Vec<f64>,
    pub sigma_len_per_round: Vec<f64>,
    pub selection_size: usize,
    pub epochs_per_round: usize,
    pub rollouts_per_question: usize,
    pub epsilon: f64,
    pub learning_rate: f64,
}

impl Default for CurriculumSchedule {
    fn default() -> Self {
        CurriculumSchedule {
            rounds: 3,
            sigma_tool_per_round: vec![0.1, 0.05, 0.025],
            sigma_len_per_round: vec![0.1, 0.05, 0.025],
            selection_size: 64,
            epochs_per_round: 20,
            rollouts_per_question: 16,
            epsilon: 0.2,
            learning_rate: 1.0,
        }
    }
}

impl CurriculumSchedule {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.rounds == 0 {
            return Err(PolicyError::BadSchedule("rounds must be positive".into()));
        }
        for (name, sigmas) in [
            ("sigma_tool_per_round", &self.sigma_tool_per_round),
            ("sigma_len_per_round", &self.sigma_len_per_round),
        ] {
            if sigmas.len() != self.rounds {
                return Err(PolicyError::BadSchedule(format!(
                    "{name} must have one value per round"
                )));
            }
            if sigmas.iter().any(|&s| s <= 0.0) {
                return Err(PolicyError::BadSchedule(format!("{name} must be positive")));
            }
            if sigmas.windows(2).any(|w| w[1] >= w[0]) {
                return Err(PolicyError::BadSchedule(format!(
                    "{name} must strictly decrease"
                )));
            }
        }
        if self.rollouts_per_question < 2 {
            return Err(PolicyError::BadSchedule(
                "rollouts_per_question must be at least 2".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.epsilon) || self.epsilon == 0.0 {
            return Err(PolicyError::BadSchedule("epsilon must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// One evaluation row of the training report. Row `round` reflects the
/// policy before that round's update; the final row is a fresh evaluation
/// after the last round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub mean_reward: f64,
    pub mean_tool_calls: f64,
    pub mean_tool_calls_correct: f64,
    pub accuracy: f64,
    pub effi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub rounds: Vec<RoundReport>,
    pub final_theta: [f64; THETA_LEN],
}

struct RoundRollouts {
    /// Per task: the K rollouts with scores.
    groups: Vec<Vec<(PolicyRollout, ScoredTrajectory)>>,
    stats: Vec<GroupStats>,
}

fn roll_round(
    world: &SimWorld,
    policy: &ToyPolicy,
    k: usize,
    seed: u64,
    round: usize,
) -> RoundRollouts {
    use rand::SeedableRng;
    let mut groups = Vec::with_capacity(world.tasks.len());
    let mut stats = Vec::with_capacity(world.tasks.len());
    for (idx, task) in world.tasks.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(
            seed ^ (round as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (idx as u64) << 20,
        );
        let mut group = Vec::with_capacity(k);
        for _ in 0..k {
            let rollout = rollout_with_policy(task, &world.backend, policy, (0, 0), &mut rng);
            let correctness = correctness_reward(
                rollout.trajectory.final_answer().unwrap_or(""),
                &task.gold,
                task.kind,
            );
            let scored = ScoredTrajectory::new(rollout.trajectory.clone(), correctness, false);
            group.push((rollout, scored));
        }
        let scored: Vec<ScoredTrajectory> = group.iter().map(|(_, s)| s.clone()).collect();
        stats.push(compute_group_stats(&scored, &task.id).expect("k >= 2"));
        groups.push(group);
    }
    RoundRollouts { groups, stats }
}

fn report_row(round: usize, rollouts: &RoundRollouts, rewards: &[Vec<f64>]) -> RoundReport {
    let all: Vec<&ScoredTrajectory> = rollouts
        .groups
        .iter()
        .flat_map(|g| g.iter().map(|(_, s)| s))
        .collect();
    let n = all.len() as f64;
    let owned: Vec<ScoredTrajectory> = all.iter().map(|s| (*s).clone()).collect();
    let correct: Vec<&ScoredTrajectory> = all.iter().copied().filter(|s| s.correctness >= 0.99).collect();
    let mean_tool_calls_correct = if correct.is_empty() {
        0.0
    } else {
        correct.iter().map(|s| s.tool_calls as f64).sum::<f64>() / correct.len() as f64
    };
    RoundReport {
        round,
        mean_reward: rewards.iter().flatten().sum::<f64>() / n,
        mean_tool_calls: all.iter().map(|s| s.tool_calls as f64).sum::<f64>() / n,
        mean_tool_calls_correct,
        accuracy: all.iter().map(|s| s.correctness).sum::<f64>() / n,
        effi: compute_effi(&owned).expect("non-empty evaluation set"),
    }
}

/// Alternates Pareto question selection with clipped-surrogate ascent under
/// the round's sigmas. The report carries `rounds + 1` rows: a pre-training
/// baseline and one row after each round.
pub fn curriculum_train(
    policy: &mut ToyPolicy,
    world: &SimWorld,
    schedule: &CurriculumSchedule,
    reward_cfg: &RewardConfig,
    seed: u64,
) -> Result<TrainingReport, PolicyError> {
    schedule.validate()?;
    let k = schedule.rollouts_per_question;
    let n = schedule.selection_size.min(world.tasks.len());
    let mut rows = Vec::with_capacity(schedule.rounds + 1);

    for round in 0..schedule.rounds {
        let rollouts = roll_round(world, policy, k, seed, round);
        let cfg = RewardConfig {
            sigma_tool: schedule.sigma_tool_per_round[round],
            sigma_len: schedule.sigma_len_per_round[round],
            ..reward_cfg.clone()
        };
        let rewards: Vec<Vec<f64>> = rollouts
            .groups
            .iter()
            .map(|g| {
                let scored: Vec<ScoredTrajectory> = g.iter().map(|(_, s)| s.clone()).collect();
                group_rewards(&scored, &cfg)
                    .expect("non-empty group")
                    .into_iter()
                    .map(|b| b.r_total)
                    .collect()
            })
            .collect();
        rows.push(report_row(round, &rollouts, &rewards));

        let selected = pareto_select(&rollouts.stats, n).expect("n bounded by task count");
        let mut groups: Vec<Vec<Vec<ActionToken>>> = Vec::with_capacity(n);
        let mut advantages: Vec<AdvantageVector> = Vec::with_capacity(n);
        for id in &selected {
            let idx = world.tasks.iter().position(|t| t.id == *id).expect("selected id exists");
            groups.push(
                rollouts.groups[idx]
                    .iter()
                    .map(|(r, _)| r.tokens.clone())
                    .collect(),
            );
            advantages.push(group_advantages(&rewards[idx]));
        }
        for _ in 0..schedule.epochs_per_round {
            policy.refresh_old();
            let grad = objective_gradient(policy, &groups, &advantages, schedule.epsilon)?;
            for (t, g) in policy.theta.iter_mut().zip(grad) {
                *t += schedule.learning_rate * g;
            }
        }
    }

    let final_rollouts = roll_round(world, policy, k, seed, schedule.rounds);
    let cfg = RewardConfig {
        sigma_tool: *schedule.sigma_tool_per_round.last().unwrap(),
        sigma_len: *schedule.sigma_len_per_round.last().unwrap(),
        ..reward_cfg.clone()
    };
    let rewards: Vec<Vec<f64>> = final_rollouts
        .groups
        .iter()
        .map(|g| {
            let scored: Vec<ScoredTrajectory> = g.iter().map(|(_, s)| s.clone()).collect();
            group_rewards(&scored, &cfg)
                .expect("non-empty group")
                .into_iter()
                .map(|b| b.r_total)
                .collect()
        })
        .collect();
    rows.push(report_row(schedule.rounds, &final_rollouts, &rewards));

    Ok(TrainingReport {
        rounds: rows,
        final_theta: policy.theta,
    })
}

const CHECKPOINT_HEADER: &str = "tircal-theta-v1";

/// Writes theta as a small text checkpoint with a version header. Values are
/// formatted so they round-trip exactly through parsing.
pub fn save_checkpoint(path: &Path, theta: &[f64; THETA_LEN]) -> Result<(), PolicyError> {
    let mut out = String::from(CHECKPOINT_HEADER);
    out.push('\n');
    for v in theta {
        // {:?} prints the shortest representation that parses back exactly
        out.push_str(&format!("{v:?}\n"));
    }
    std::fs::write(path, out).map_err(|e| PolicyError::CheckpointIo(e.to_string()))
}

pub fn load_checkpoint(path: &Path) -> Result<[f64; THETA_LEN], PolicyError> {
    let text = std::fs::read_to_string(path).map_err(|e| PolicyError::CheckpointIo(e.to_string()))?;
    let mut lines = text.lines();
    if lines.next() != Some(CHECKPOINT_HEADER) {
        return Err(PolicyError::CorruptCheckpoint("bad version header".into()));
    }
    let values: Vec<f64> = lines
        .map(|l| l.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| PolicyError::CorruptCheckpoint(e.to_string()))?;
    values
        .try_into()
        .map_err(|_| PolicyError::CorruptCheckpoint("wrong parameter count".into()))
}
