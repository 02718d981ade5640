//! Prompt and hint templates. Defaults are compiled in; a templates
//! directory can override any of them file by file.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::trajectory::TaskKind;

pub const DEFAULT_I1_ROLLOUT: &str = include_str!("../templates/i1_rollout.txt");
pub const DEFAULT_I2_REDUNDANT_MODIFICATION: &str =
    include_str!("../templates/i2_redundant_modification.txt");
pub const DEFAULT_I3_GLOBAL_REFINEMENT: &str =
    include_str!("../templates/i3_global_refinement.txt");
pub const DEFAULT_I4_FLAW_IDENTIFICATION: &str =
    include_str!("../templates/i4_flaw_identification.txt");
pub const DEFAULT_I4_FLAW_MODIFICATION: &str =
    include_str!("../templates/i4_flaw_modification.txt");
pub const DEFAULT_JUDGE_REDUNDANCY: &str = include_str!("../templates/judge_redundancy.txt");
pub const DEFAULT_HINT_MATH: &str = include_str!("../templates/hint_math.txt");
pub const DEFAULT_HINT_KNOWLEDGE: &str = include_str!("../templates/hint_knowledge.txt");

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("failed to read template {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("template {0} is empty")]
    Empty(String),
}

/// Where a hint is spliced into an incorrect trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InsertionPoint {
    AfterErrorStep,
    TrajectoryEnd,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HintTemplate {
    pub task_kind: TaskKind,
    pub insertion_point: InsertionPoint,
    pub text: String,
}

/// The full set of prompt slots used by the flywheel and the judge.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    pub i1_rollout: String,
    pub i2_redundant_modification: String,
    pub i3_global_refinement: String,
    pub i4_flaw_identification: String,
    pub i4_flaw_modification: String,
    pub judge_redundancy: String,
    pub hints: Vec<HintTemplate>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        TemplateSet {
            i1_rollout: DEFAULT_I1_ROLLOUT.to_string(),
            i2_redundant_modification: DEFAULT_I2_REDUNDANT_MODIFICATION.to_string(),
            i3_global_refinement: DEFAULT_I3_GLOBAL_REFINEMENT.to_string(),
            i4_flaw_identification: DEFAULT_I4_FLAW_IDENTIFICATION.to_string(),
            i4_flaw_modification: DEFAULT_I4_FLAW_MODIFICATION.to_string(),
            judge_redundancy: DEFAULT_JUDGE_REDUNDANCY.to_string(),
            hints: vec![
                HintTemplate {
                    task_kind: TaskKind::Math,
                    insertion_point: InsertionPoint::TrajectoryEnd,
                    text: DEFAULT_HINT_MATH.trim().to_string(),
                },
                HintTemplate {
                    task_kind: TaskKind::Knowledge,
                    insertion_point: InsertionPoint::TrajectoryEnd,
                    text: DEFAULT_HINT_KNOWLEDGE.trim().to_string(),
                },
            ],
        }
    }
}

impl TemplateSet {
    /// Loads templates from a directory, falling back to the compiled-in
    /// default for any file that is absent.
    pub fn load(dir: &Path) -> Result<Self, TemplateError> {
        let mut set = TemplateSet::default();
        let slots: [(&str, &mut String); 6] = [
            ("i1_rollout.txt", &mut set.i1_rollout),
            ("i2_redundant_modification.txt", &mut set.i2_redundant_modification),
            ("i3_global_refinement.txt", &mut set.i3_global_refinement),
            ("i4_flaw_identification.txt", &mut set.i4_flaw_identification),
            ("i4_flaw_modification.txt", &mut set.i4_flaw_modification),
            ("judge_redundancy.txt", &mut set.judge_redundancy),
        ];
        for (name, slot) in slots {
            let path = dir.join(name);
            if path.exists() {
                let text = fs::read_to_string(&path).map_err(|source| TemplateError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                if text.trim().is_empty() {
                    return Err(TemplateError::Empty(name.to_string()));
                }
                *slot = text;
            }
        }
        for (name, kind) in [("hint_math.txt", TaskKind::Math), ("hint_knowledge.txt", TaskKind::Knowledge)] {
            let path = dir.join(name);
            if path.exists() {
                let text = fs::read_to_string(&path).map_err(|source| TemplateError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                if text.trim().is_empty() {
                    return Err(TemplateError::Empty(name.to_string()));
                }
                for hint in set.hints.iter_mut().filter(|h| h.task_kind == kind) {
                    hint.text = text.trim().to_string();
                }
            }
        }
        Ok(set)
    }

    pub fn render_i1(&self, question: &str) -> String {
        self.i1_rollout.replace("{question}", question)
    }

    pub fn render_i2(&self, question: &str, trajectory: &str) -> String {
        self.i2_redundant_modification
            .replace("{question}", question)
            .replace("{trajectory}", trajectory)
    }

    pub fn render_i3(&self, question: &str, trajectory: &str) -> String {
        self.i3_global_refinement
            .replace("{question}", question)
            .replace("{trajectory}", trajectory)
    }

    pub fn render_i4_identify(&self, question: &str, trajectory: &str) -> String {
        self.i4_flaw_identification
            .replace("{question}", question)
            .replace("{trajectory}", trajectory)
    }

    pub fn render_i4_modify(&self, question: &str, trajectory: &str, analysis: &str) -> String {
        self.i4_flaw_modification
            .replace("{question}", question)
            .replace("{trajectory}", trajectory)
            .replace("{analysis}", analysis)
    }
}

pub fn render_judge_redundancy(question: &str, answer: &str, trajectory: &str) -> String {
    DEFAULT_JUDGE_REDUNDANCY
        .replace("{question}", question)
        .replace("{answer}", answer)
        .replace("{trajectory}", trajectory)
}
