//! Group dispersion statistics, Pareto dominance, fast non-dominated
//! sorting, and crowding-distance truncation for question selection.
//!
//! Both objectives are maximized: higher correctness dispersion and higher
//! tool-count dispersion mean a question carries more training signal.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::ScoredTrajectory;

/// Per-question dispersion statistics over its K sampled trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub question_id: String,
    pub s_corr: f64,
    pub s_tool: f64,
    pub k: usize,
}

/// Pareto frontiers in dominance order; frontier 1 is the non-dominated set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrontierPartition {
    pub frontiers: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParetoError {
    #[error("group statistics need at least 2 trajectories, got {0}")]
    TooFewTrajectories(usize),
    #[error("selection target {target} exceeds available {available}")]
    TargetTooLarge { target: usize, available: usize },
    #[error("empty input")]
    EmptyInput,
}

/// Population standard deviations of correctness scores and tool counts
/// over a question's trajectory group.
pub fn compute_group_stats(
    trajectories: &[ScoredTrajectory],
    question_id: &str,
) -> Result<GroupStats, ParetoError> {
    if trajectories.len() < 2 {
        return Err(ParetoError::TooFewTrajectories(trajectories.len()));
    }
    let corr: Vec<f64> = trajectories.iter().map(|t| t.correctness).collect();
    let tool: Vec<f64> = trajectories.iter().map(|t| t.tool_calls as f64).collect();
    Ok(GroupStats {
        question_id: question_id.to_string(),
        s_corr: population_std(&corr),
        s_tool: population_std(&tool),
        k: trajectories.len(),
    })
}

pub fn population_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// `p` dominates `q` iff `p` is non-inferior in both dispersions and
/// strictly superior in at least one.
pub fn dominates(p: &GroupStats, q: &GroupStats) -> bool {
    p.s_corr >= q.s_corr
        && p.s_tool >= q.s_tool
        && (p.s_corr > q.s_corr || p.s_tool > q.s_tool)
}

/// Partitions the stats into Pareto frontiers using the standard
/// domination-count sweep.
pub fn fast_nondominated_sort(stats: &[GroupStats]) -> FrontierPartition {
    let n = stats.len();
    let mut dominated_by: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut domination_count = vec![0usize; n];
    for p in 0..n {
        for q in 0..n {
            if p == q {
                continue;
            }
            if dominates(&stats[p], &stats[q]) {
                dominated_by[p].push(q);
            } else if dominates(&stats[q], &stats[p]) {
                domination_count[p] += 1;
            }
        }
    }
    let mut frontiers = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| domination_count[i] == 0).collect();
    while !current.is_empty() {
        frontiers.push(
            current
                .iter()
                .map(|&i| stats[i].question_id.clone())
                .collect(),
        );
        let mut next = Vec::new();
        for &p in &current {
            for &q in &dominated_by[p] {
                domination_count[q] -= 1;
                if domination_count[q] == 0 {
                    next.push(q);
                }
            }
        }
        next.sort_unstable();
        current = next;
    }
    FrontierPartition { frontiers }
}

/// NSGA-II crowding distance over the two objectives. Boundary members get
/// infinity; a zero objective range contributes nothing for that objective.
pub fn crowding_distance(front: &[GroupStats]) -> HashMap<String, f64> {
    let n = front.len();
    let mut distances = vec![0.0f64; n];
    for objective in [|s: &GroupStats| s.s_corr, |s: &GroupStats| s.s_tool] {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            objective(&front[a])
                .partial_cmp(&objective(&front[b]))
                .unwrap()
        });
        let range = objective(&front[order[n - 1]]) - objective(&front[order[0]]);
        distances[order[0]] = f64::INFINITY;
        distances[order[n - 1]] = f64::INFINITY;
        if range > 0.0 {
            for w in 1..n - 1 {
                let gap = objective(&front[order[w + 1]]) - objective(&front[order[w - 1]]);
                distances[order[w]] += gap / range;
            }
        }
    }
    front
        .iter()
        .zip(distances)
        .map(|(s, d)| (s.question_id.clone(), d))
        .collect()
}

/// Selects the `target` most training-useful question ids: frontiers are
/// admitted whole from the top; the first overflowing frontier is truncated
/// by descending crowding distance, ties broken by input order.
pub fn pareto_select(stats: &[GroupStats], target: usize) -> Result<Vec<String>, ParetoError> {
    if stats.is_empty() {
        return Err(ParetoError::EmptyInput);
    }
    if target == 0 || target > stats.len() {
        return Err(ParetoError::TargetTooLarge {
            target,
            available: stats.len(),
        });
    }
    let by_id: HashMap<&str, &GroupStats> =
        stats.iter().map(|s| (s.question_id.as_str(), s)).collect();
    let partition = fast_nondominated_sort(stats);
    let mut selected = Vec::with_capacity(target);
    for frontier in &partition.frontiers {
        let remaining = target - selected.len();
        if frontier.len() <= remaining {
            selected.extend(frontier.iter().cloned());
        } else {
            let members: Vec<GroupStats> =
                frontier.iter().map(|id| by_id[id.as_str()].clone()).collect();
            let distances = crowding_distance(&members);
            let mut order: Vec<usize> = (0..members.len()).collect();
            // stable sort keeps input order among distance ties
            order.sort_by(|&a, &b| {
                distances[&members[b].question_id]
                    .partial_cmp(&distances[&members[a].question_id])
                    .unwrap()
            });
            selected.extend(
                order[..remaining]
                    .iter()
                    .map(|&i| members[i].question_id.clone()),
            );
        }
        if selected.len() == target {
            break;
        }
    }
    Ok(selected)
}

#[cfg(test)]
pub(crate) fn stats(id: &str, s_corr: f64, s_tool: f64) -> GroupStats {
    GroupStats {
        question_id: id.to_string(),
        s_corr,
        s_tool,
        k: 16,
    }
}
