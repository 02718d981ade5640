//! Multi-objective group-wise reward mechanism: correctness, format, and
//! sigmoid-shaped tool/length behavior scores aggregated per trajectory.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::ScoredTrajectory;
use crate::pareto::population_std;
use crate::trajectory::TaskKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub sigma_tool: f64,
    pub sigma_len: f64,
    pub format_penalty: f64,
    pub format_ok_reward: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            sigma_tool: 0.1,
            sigma_len: 0.1,
            format_penalty: -1.0,
            format_ok_reward: 0.0,
        }
    }
}

/// Per-trajectory reward components and their aggregate
/// `r_total = r_corr * f_tool * f_len + r_format`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_corr: f64,
    pub r_format: f64,
    pub f_tool: f64,
    pub f_len: f64,
    pub r_total: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RewardError {
    #[error("empty group")]
    EmptyGroup,
}

/// Binary boxed match for math; token-level F1 after normalization for
/// knowledge tasks.
pub fn correctness_reward(predicted: &str, gold: &str, kind: TaskKind) -> f64 {
    match kind {
        TaskKind::Math => {
            if normalize_math(predicted) == normalize_math(gold) {
                1.0
            } else {
                0.0
            }
        }
        TaskKind::Knowledge => token_f1(predicted, gold),
    }
}

fn normalize_math(s: &str) -> String {
    let s = s
        .replace("\\left", "")
        .replace("\\right", "")
        .replace("\\!", "")
        .replace("\\,", "")
        .replace("\\text", "");
    let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    s.trim_matches(|c| c == '{' || c == '}' || c == '.' || c == '$')
        .to_lowercase()
}

/// Open-domain QA normalization: lowercase, strip punctuation and articles,
/// whitespace split.
fn normalize_qa_tokens(s: &str) -> Vec<String> {
    s.to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .filter(|t| !matches!(*t, "a" | "an" | "the"))
        .map(str::to_string)
        .collect()
}

/// Token-level F1 over normalized token multisets.
pub fn token_f1(predicted: &str, gold: &str) -> f64 {
    let pred = normalize_qa_tokens(predicted);
    let gold = normalize_qa_tokens(gold);
    if pred.is_empty() || gold.is_empty() {
        return if pred == gold { 1.0 } else { 0.0 };
    }
    let mut counts = std::collections::HashMap::new();
    for t in &gold {
        *counts.entry(t.as_str()).or_insert(0i64) += 1;
    }
    let mut overlap = 0i64;
    for t in &pred {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / pred.len() as f64;
    let recall = overlap as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Format reward over a parse result: the penalty when parsing failed or the
/// answer lacks a boxed expression, the ok reward otherwise.
pub fn format_reward<E>(parsed: &Result<crate::Trajectory, E>, cfg: &RewardConfig) -> f64 {
    match parsed {
        Ok(t) if t.final_answer().is_some() => cfg.format_ok_reward,
        _ => cfg.format_penalty,
    }
}

/// Tool-behavior sigmoid: `1 / (1 + exp(sigma * (v_i - mean)))` with the
/// mean taken over the group's raw tool counts.
pub fn tool_behavior_score(v_i: f64, group_counts: &[f64], sigma_tool: f64) -> f64 {
    let mean = group_counts.iter().sum::<f64>() / group_counts.len() as f64;
    sigmoid(-sigma_tool * (v_i - mean))
}

/// Length-behavior sigmoid applied to the z-score of the i-th length within
/// its group. A zero-std group yields 0.5 for everyone.
pub fn length_behavior_score(lengths: &[f64], index: usize, sigma_len: f64) -> f64 {
    let z = z_scores(lengths)[index];
    sigmoid(-sigma_len * z)
}

fn z_scores(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = population_std(values);
    if std == 0.0 {
        vec![0.0; values.len()]
    } else {
        values.iter().map(|v| (v - mean) / std).collect()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Aggregates pre-computed components: `r_corr * f_tool * f_len + r_format`.
pub fn aggregate_reward(r_corr: f64, r_format: f64, f_tool: f64, f_len: f64) -> RewardBreakdown {
    RewardBreakdown {
        r_corr,
        r_format,
        f_tool,
        f_len,
        r_total: r_corr * f_tool * f_len + r_format,
    }
}

/// Computes one breakdown per trajectory with group-shared means and stds.
/// A singleton group gets `f_tool = f_len = 0.5`.
pub fn group_rewards(
    group: &[ScoredTrajectory],
    cfg: &RewardConfig,
) -> Result<Vec<RewardBreakdown>, RewardError> {
    if group.is_empty() {
        return Err(RewardError::EmptyGroup);
    }
    let counts: Vec<f64> = group.iter().map(|s| s.tool_calls as f64).collect();
    let lengths: Vec<f64> = group.iter().map(|s| s.reasoning_tokens as f64).collect();
    Ok(group
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let (f_tool, f_len) = if group.len() == 1 {
                (0.5, 0.5)
            } else {
                (
                    tool_behavior_score(counts[i], &counts, cfg.sigma_tool),
                    length_behavior_score(&lengths, i, cfg.sigma_len),
                )
            };
            let r_format = if s.trajectory.final_answer().is_some() {
                cfg.format_ok_reward
            } else {
                cfg.format_penalty
            };
            aggregate_reward(s.correctness, r_format, f_tool, f_len)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn math_binary_match() {
        assert_eq!(correctness_reward("-8", "-8", TaskKind::Math), 1.0);
        assert_eq!(correctness_reward("-8.0", "-8", TaskKind::Math), 0.0);
        assert_eq!(correctness_reward("\\text{27}", "27", TaskKind::Math), 1.0);
    }

    #[test]
    fn knowledge_f1_values() {
        assert_eq!(
            correctness_reward("Limpopo River", "Limpopo River", TaskKind::Knowledge),
            1.0
        );
        let f1 = correctness_reward("the Limpopo", "Limpopo River", TaskKind::Knowledge);
        assert!((f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(
            correctness_reward("Insufficient information", "Bernard-Roger, Count of Bigorre", TaskKind::Knowledge),
            0.0
        );
    }

    #[test]
    fn format_reward_rules() {
        let cfg = RewardConfig::default();
        let bad: Result<crate::Trajectory, ()> = Err(());
        assert_eq!(format_reward(&bad, &cfg), -1.0);
        let ok = crate::parse_trajectory("<think>x</think><answer>\\boxed{1}</answer>").unwrap();
        assert_eq!(format_reward::<()>(&Ok(ok), &cfg), 0.0);
        let unboxed = crate::parse_trajectory("<think>x</think><answer>five</answer>").unwrap();
        assert_eq!(format_reward::<()>(&Ok(unboxed), &cfg), -1.0);
    }

    #[test]
    fn tool_score_values() {
        assert_eq!(tool_behavior_score(4.0, &[2.0, 4.0, 6.0], 0.1), 0.5);
        let f = tool_behavior_score(6.0, &[2.0, 4.0, 6.0], 0.1);
        assert!((f - 1.0 / (1.0 + 0.2f64.exp())).abs() < 1e-12);
        assert!((f - 0.450166).abs() < 1e-6);
        // sigma -> 0 limit
        assert!((tool_behavior_score(6.0, &[2.0, 4.0, 6.0], 1e-12) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn length_score_values() {
        assert_eq!(length_behavior_score(&[7.0, 7.0, 7.0], 1, 0.1), 0.5);
        let f = length_behavior_score(&[100.0, 200.0, 300.0], 2, 0.1);
        let z = (300.0 - 200.0) / (20000.0f64 / 3.0).sqrt();
        assert!((z - 1.224745).abs() < 1e-6);
        assert!((f - 1.0 / (1.0 + (0.1 * z).exp())).abs() < 1e-12);
        assert!((f - 0.4694196).abs() < 1e-6);
    }

    #[test]
    fn aggregate_values() {
        assert_eq!(aggregate_reward(0.0, -1.0, 0.9, 0.9).r_total, -1.0);
        assert_eq!(aggregate_reward(1.0, 0.0, 0.5, 0.5).r_total, 0.25);
        let b = aggregate_reward(1.0, 0.0, 0.450166, 0.469420);
        assert!((b.r_total - 0.211317).abs() < 1e-5);
    }

    #[test]
    fn group_rewards_symmetry_and_singleton() {
        use crate::analysis::ScoredTrajectory;
        let t = crate::parse_trajectory("<think>a b</think><answer>\\boxed{1}</answer>").unwrap();
        let s = ScoredTrajectory::new(t, 1.0, false);
        let cfg = RewardConfig::default();
        let pair = group_rewards(&[s.clone(), s.clone()], &cfg).unwrap();
        assert_eq!(pair[0], pair[1]);
        let single = group_rewards(&[s], &cfg).unwrap();
        assert_eq!(single[0].f_tool, 0.5);
        assert_eq!(single[0].f_len, 0.5);
        assert!(matches!(group_rewards(&[], &cfg), Err(RewardError::EmptyGroup)));
    }
}
