//! End-to-end pipeline wiring: configuration, dataset IO, external clients,
//! run directories, and the subcommand implementations behind the CLI.

pub mod config;
pub mod dataset;
pub mod http;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::{
    compute_conciseness, compute_effi, compute_reasoning_length_metric,
    compute_successful_execution, detect_duplicate_tool_calls, ScoredTrajectory,
};
use crate::flywheel::{
    export_sft_dataset, quality_filter, run_flywheel, FlywheelConfig, Generator, Provenance,
};
use crate::pareto::pareto_select;
use crate::policy::{curriculum_train, save_checkpoint, ToyPolicy, TrainingReport};
use crate::reward::correctness_reward;
use crate::sim::{SimGenerator, SimWorld};
use crate::templates::TemplateSet;
use crate::trajectory::{parse_trajectory_with, ParseMode, TaskRecord};

use config::{Binding, PipelineConfig};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Dataset(#[from] dataset::DatasetError),
    #[error("data: {0}")]
    Data(String),
    #[error("external service: {0}")]
    External(String),
    #[error("io failure: {0}")]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    /// The CLI exit-code contract: 1 usage/config, 2 data, 3 external.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Usage(_) | PipelineError::Io(_) => 1,
            PipelineError::Dataset(_) | PipelineError::Data(_) => 2,
            PipelineError::External(_) => 3,
        }
    }
}

/// A run directory exclusively owned via a lock file; the lock is released
/// on drop.
pub struct RunDir {
    pub path: PathBuf,
    lock_path: PathBuf,
}

impl RunDir {
    pub fn claim(path: &Path) -> Result<RunDir, PipelineError> {
        std::fs::create_dir_all(path)?;
        let lock_path = path.join(".lock");
        match std::fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&lock_path)
        {
            Ok(_) => Ok(RunDir {
                path: path.to_path_buf(),
                lock_path,
            }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(PipelineError::Usage(
                format!("run directory {} is locked by another run", path.display()),
            )),
            Err(e) => Err(e.into()),
        }
    }

    pub fn write_manifest(
        &self,
        command: &str,
        cfg: &PipelineConfig,
        seed: u64,
    ) -> Result<(), PipelineError> {
        #[derive(Serialize)]
        struct Manifest<'a> {
            command: &'a str,
            config_sha256: String,
            seed: u64,
            version: &'a str,
        }
        let hash = Sha256::digest(cfg.to_toml().as_bytes());
        let manifest = Manifest {
            command,
            config_sha256: format!("{hash:x}"),
            seed,
            version: env!("CARGO_PKG_VERSION"),
        };
        std::fs::write(
            self.path.join("manifest.json"),
            serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
        )?;
        Ok(())
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.lock_path);
    }
}

fn load_templates(cfg: &PipelineConfig) -> Result<TemplateSet, PipelineError> {
    match &cfg.paths.templates_dir {
        Some(dir) => TemplateSet::load(dir).map_err(|e| PipelineError::Data(e.to_string())),
        None => Ok(TemplateSet::default()),
    }
}

fn build_generator(cfg: &PipelineConfig, run_dir: Option<&Path>) -> Result<Box<dyn Generator>, PipelineError> {
    match &cfg.generator {
        Binding::Simulated { seed } => {
            let world = SimWorld::generate_mixed(cfg.sim.n_math, cfg.sim.n_knowledge, cfg.sim.seed);
            let mut agent = cfg.sim.agent_config();
            agent.seed = *seed;
            Ok(Box::new(SimGenerator::new(world, agent)))
        }
        Binding::Http {
            base_url,
            model,
            key_env_var,
            temperature,
            timeout_secs,
        } => {
            let transcript = run_dir.map(|d| d.join("transcript.jsonl"));
            let client = http::HttpClient::new(
                base_url,
                model,
                key_env_var,
                *temperature,
                *timeout_secs,
                transcript,
            )
            .map_err(|e| PipelineError::External(e.to_string()))?;
            Ok(Box::new(client))
        }
    }
}

fn sim_task_records(cfg: &PipelineConfig) -> Vec<TaskRecord> {
    let world = SimWorld::generate_mixed(cfg.sim.n_math, cfg.sim.n_knowledge, cfg.sim.seed);
    world
        .tasks
        .iter()
        .map(|t| TaskRecord {
            id: t.id.clone(),
            question: t.question.clone(),
            gold_answer: t.gold.clone(),
            kind: t.kind,
            trajectories: vec![],
        })
        .collect()
}

fn load_tasks(cfg: &PipelineConfig) -> Result<Vec<TaskRecord>, PipelineError> {
    match (&cfg.generator, &cfg.paths.data_dir) {
        (Binding::Simulated { .. }, _) => Ok(sim_task_records(cfg)),
        (Binding::Http { .. }, Some(dir)) => Ok(dataset::read_task_records(&dir.join("tasks.jsonl"))?),
        (Binding::Http { .. }, None) => Err(PipelineError::Usage(
            "an http generator needs paths.data_dir with tasks.jsonl".into(),
        )),
    }
}

/// Per-file parse outcome counts with the failing locations.
#[derive(Debug, Default, PartialEq, Eq)]
pub struct ParseSummary {
    pub ok: usize,
    pub tolerant: usize,
    /// (1-based line, trajectory index within the line, error text)
    pub failed: Vec<(usize, usize, String)>,
}

pub fn cmd_parse(input: &Path, strict: bool) -> Result<ParseSummary, PipelineError> {
    let records = dataset::read_task_records(input)?;
    let mode = if strict { ParseMode::Strict } else { ParseMode::Tolerant };
    let mut summary = ParseSummary::default();
    let mut line = 0usize;
    for record in &records {
        line += 1;
        for (idx, text) in record.trajectories.iter().enumerate() {
            match parse_trajectory_with(text, mode) {
                Ok((_, report)) => {
                    if report.promoted_think_offsets.is_empty() {
                        summary.ok += 1;
                    } else {
                        summary.tolerant += 1;
                    }
                }
                Err(e) => summary.failed.push((line, idx, e.to_string())),
            }
        }
    }
    Ok(summary)
}

fn score_records(records: &[TaskRecord]) -> Result<Vec<ScoredTrajectory>, PipelineError> {
    let mut scored = Vec::new();
    for record in records {
        for (idx, text) in record.trajectories.iter().enumerate() {
            let trajectory = crate::parse_trajectory(text).map_err(|e| {
                PipelineError::Data(format!("task {} trajectory {idx}: {e}", record.id))
            })?;
            let correctness = correctness_reward(
                trajectory.final_answer().unwrap_or(""),
                &record.gold_answer,
                record.kind,
            );
            let redundant = !detect_duplicate_tool_calls(&trajectory).is_empty();
            scored.push(ScoredTrajectory::new(trajectory, correctness, redundant));
        }
    }
    if scored.is_empty() {
        return Err(PipelineError::Data("dataset contains no trajectories".into()));
    }
    Ok(scored)
}

pub fn cmd_analyze(input: &Path, out: &Path) -> Result<Vec<(&'static str, f64)>, PipelineError> {
    let records = dataset::read_task_records(input)?;
    let scored = score_records(&records)?;
    let n = scored.len() as f64;
    let accuracy = scored.iter().map(|s| s.correctness).sum::<f64>() / n;
    let effi = compute_effi(&scored).map_err(|e| PipelineError::Data(e.to_string()))?;
    let conciseness =
        compute_conciseness(&scored).map_err(|e| PipelineError::Data(e.to_string()))?;
    let successful = compute_successful_execution(&scored)
        .map_err(|e| PipelineError::Data(e.to_string()))?;
    let reasoning = compute_reasoning_length_metric(&scored)
        .map_err(|e| PipelineError::Data(e.to_string()))?;
    let metrics: Vec<(&'static str, f64)> = vec![
        ("accuracy", accuracy),
        ("effi", effi),
        ("conciseness", conciseness),
        ("successful_execution", successful),
        ("reasoning_length_per_kilotoken", reasoning * 1000.0),
    ];
    let name = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    dataset::write_metric_csv(out, &name, &metrics)?;
    Ok(metrics)
}

#[derive(Debug, Serialize)]
pub struct FlywheelSummary {
    pub questions: usize,
    pub pool_size: usize,
    pub kept_after_filter: usize,
    pub exported: usize,
    /// (round, provenance, count), sorted.
    pub provenance_counts: Vec<(usize, Provenance, usize)>,
    pub failures: usize,
}

pub fn cmd_flywheel(cfg: &PipelineConfig, out: &Path) -> Result<FlywheelSummary, PipelineError> {
    let run = RunDir::claim(out)?;
    run.write_manifest("flywheel", cfg, cfg.sim.seed)?;
    let templates = load_templates(cfg)?;
    let generator = build_generator(cfg, Some(&run.path))?;
    let tasks = load_tasks(cfg)?;
    let fly_cfg = FlywheelConfig {
        rounds: cfg.flywheel.rounds,
        initial_rollouts_per_question: cfg.flywheel.initial_rollouts_per_question,
        max_tool_calls: cfg.flywheel.max_tool_calls,
        pool_cap: cfg.flywheel.pool_cap,
        enhance_all_rounds: cfg.flywheel.enhance_all_rounds,
        templates: templates.clone(),
    };
    let pools = run_flywheel(&tasks, generator.as_ref(), &fly_cfg)
        .map_err(|e| PipelineError::External(e.to_string()))?;

    let mut counts: std::collections::BTreeMap<(usize, Provenance), usize> = Default::default();
    let mut augmented = Vec::new();
    let mut filtered = Vec::new();
    let mut failures = 0usize;
    for (task, pool) in tasks.iter().zip(&pools) {
        for entry in &pool.entries {
            *counts.entry((entry.round, entry.provenance)).or_insert(0) += 1;
        }
        failures += pool.failures.len();
        let mut record = task.clone();
        record.trajectories = pool.entries.iter().map(|e| e.raw.clone()).collect();
        augmented.push(record);
        filtered.push((
            task.clone(),
            quality_filter(pool, &task.gold_answer, task.kind),
        ));
    }
    dataset::write_task_records(&run.path.join("d_aug.jsonl"), &augmented)?;

    let mut summary_csv = String::from("round,provenance,count\n");
    for ((round, provenance), count) in &counts {
        let name = serde_json::to_value(provenance).unwrap();
        writeln!(summary_csv, "{round},{},{count}", name.as_str().unwrap()).unwrap();
    }
    std::fs::write(run.path.join("provenance_summary.csv"), summary_csv)?;
    if failures > 0 {
        let mut log = String::new();
        for pool in &pools {
            for f in &pool.failures {
                writeln!(log, "{}: {f}", pool.question_id).unwrap();
            }
        }
        std::fs::write(run.path.join("failures.log"), log)?;
    }

    let kept: usize = filtered.iter().map(|(_, e)| e.len()).sum();
    let exported = if kept > 0 {
        export_sft_dataset(&filtered, &run.path.join("sft.jsonl"), &templates)
            .map_err(|e| PipelineError::Data(e.to_string()))?
    } else {
        0
    };
    Ok(FlywheelSummary {
        questions: tasks.len(),
        pool_size: pools.iter().map(|p| p.entries.len()).sum(),
        kept_after_filter: kept,
        exported,
        provenance_counts: counts.into_iter().map(|((r, p), c)| (r, p, c)).collect(),
        failures,
    })
}

pub fn cmd_sample(stats_csv: &Path, target: usize, out: &Path) -> Result<Vec<String>, PipelineError> {
    let stats = dataset::read_stats_csv(stats_csv)?;
    let selected =
        pareto_select(&stats, target).map_err(|e| PipelineError::Data(e.to_string()))?;
    std::fs::write(out, selected.join("\n") + "\n")?;
    Ok(selected)
}

pub fn cmd_train(
    cfg: &PipelineConfig,
    out: &Path,
    seed: u64,
) -> Result<TrainingReport, PipelineError> {
    let run = RunDir::claim(out)?;
    run.write_manifest("train", cfg, seed)?;
    let world = SimWorld::generate_mixed(cfg.sim.n_math, cfg.sim.n_knowledge, cfg.sim.seed);
    let mut policy = ToyPolicy::over_caller(cfg.sim.p_redundant_call, cfg.sim.p_premature_answer);
    let mut schedule = cfg.curriculum.to_schedule(&cfg.sampler);
    schedule.selection_size = schedule.selection_size.min(world.tasks.len());
    let report = curriculum_train(&mut policy, &world, &schedule, &cfg.rewards, seed)
        .map_err(|e| PipelineError::Data(e.to_string()))?;
    dataset::write_training_csv(&run.path.join("report.csv"), &report.rounds)?;
    std::fs::write(
        run.path.join("summary.json"),
        serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;
    save_checkpoint(&run.path.join("theta.ckpt"), &report.final_theta)
        .map_err(|e| PipelineError::Data(e.to_string()))?;
    Ok(report)
}

/// Renders the per-round curve of a completed training run as an aligned
/// text table, flagging the monotonic columns.
pub fn cmd_report(run_dir: &Path) -> Result<String, PipelineError> {
    let path = run_dir.join("report.csv");
    if !path.exists() {
        return Err(PipelineError::Data(format!(
            "{} has no report.csv",
            run_dir.display()
        )));
    }
    let text = std::fs::read_to_string(&path)?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| PipelineError::Data("empty report".into()))?
        .split(',')
        .collect();
    let rows: Vec<Vec<String>> = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split(',')
                .map(|v| match v.parse::<f64>() {
                    Ok(x) if v.contains('.') => format!("{x:.4}"),
                    _ => v.to_string(),
                })
                .collect()
        })
        .collect();
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    for (w, h) in widths.iter().zip(&header) {
        write!(out, "{h:>w$}  ").unwrap();
    }
    out.push('\n');
    for row in &rows {
        for (w, cell) in widths.iter().zip(row) {
            write!(out, "{cell:>w$}  ").unwrap();
        }
        out.push('\n');
    }
    // flag columns that move monotonically across rounds
    for (col, name) in header.iter().enumerate().skip(1) {
        let values: Vec<f64> = rows
            .iter()
            .filter_map(|r| r.get(col).and_then(|v| v.parse().ok()))
            .collect();
        if values.len() >= 2 {
            if values.windows(2).all(|w| w[1] > w[0]) {
                writeln!(out, "{name}: strictly increasing").unwrap();
            } else if values.windows(2).all(|w| w[1] < w[0]) {
                writeln!(out, "{name}: strictly decreasing").unwrap();
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::TaskKind;

    fn write_dataset(dir: &Path, lines: &[TaskRecord]) -> PathBuf {
        let path = dir.join("tasks.jsonl");
        dataset::write_task_records(&path, lines).unwrap();
        path
    }

    fn record(id: &str, gold: &str, trajectories: Vec<String>) -> TaskRecord {
        TaskRecord {
            id: id.into(),
            question: format!("What is {id}?"),
            gold_answer: gold.into(),
            kind: TaskKind::Math,
            trajectories,
        }
    }

    #[test]
    fn parse_counts_and_failures() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_dataset(
            dir.path(),
            &[
                record("a", "5", vec![
                    "<think>x</think> <answer>\\boxed{5}</answer>".into(),
                    "free text <think>x</think> <answer>\\boxed{5}</answer>".into(),
                    "<think>never closed".into(),
                ]),
            ],
        );
        let summary = cmd_parse(&path, false).unwrap();
        assert_eq!(summary.ok, 1);
        assert_eq!(summary.tolerant, 1);
        assert_eq!(summary.failed.len(), 1);
        assert_eq!(summary.failed[0].0, 1);

        let strict = cmd_parse(&path, true).unwrap();
        assert_eq!(strict.ok, 1);
        assert_eq!(strict.failed.len(), 2);

        let empty = write_dataset(dir.path(), &[]);
        assert_eq!(cmd_parse(&empty, false).unwrap(), ParseSummary::default());
    }

    #[test]
    fn analyze_clamp_and_all_incorrect() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_dataset(
            dir.path(),
            &[record("a", "5", vec!["<think>x y</think> <answer>\\boxed{5}</answer>".into()])],
        );
        let out = dir.path().join("metrics.csv");
        let metrics = cmd_analyze(&path, &out).unwrap();
        let get = |name: &str| metrics.iter().find(|(n, _)| *n == name).unwrap().1;
        assert_eq!(get("accuracy"), 1.0);
        assert_eq!(get("effi"), 1.0);
        assert!(out.exists());

        let path = write_dataset(
            dir.path(),
            &[record("a", "5", vec!["<think>x y</think> <answer>\\boxed{6}</answer>".into()])],
        );
        let metrics = cmd_analyze(&path, &out).unwrap();
        assert!(metrics.iter().all(|(n, v)| *n == "conciseness" || *v == 0.0));
    }

    #[test]
    fn sample_round_trips_selection() {
        let dir = tempfile::tempdir().unwrap();
        let stats = dir.path().join("stats.csv");
        std::fs::write(&stats, "question_id,s_corr,s_tool\na,2,2\nb,1,1\nc,2,1\nd,1,2\n").unwrap();
        let out = dir.path().join("selected.txt");
        let selected = cmd_sample(&stats, 3, &out).unwrap();
        assert_eq!(selected, vec!["a", "c", "d"]);
        assert_eq!(std::fs::read_to_string(&out).unwrap(), "a\nc\nd\n");
    }

    #[test]
    fn run_dir_lock_is_exclusive() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run");
        let first = RunDir::claim(&path).unwrap();
        assert!(matches!(RunDir::claim(&path), Err(PipelineError::Usage(_))));
        drop(first);
        RunDir::claim(&path).unwrap();
    }

    #[test]
    fn flywheel_command_simulated_end_to_end() {
        let mut cfg = PipelineConfig::default();
        cfg.sim.n_math = 3;
        cfg.sim.n_knowledge = 2;
        cfg.sim.p_redundant_call = 0.5;
        cfg.sim.p_premature_answer = 0.2;
        cfg.flywheel.initial_rollouts_per_question = 4;
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let summary = cmd_flywheel(&cfg, &out).unwrap();
        assert_eq!(summary.questions, 5);
        // 5 questions x 4 initial rollouts, plus whatever the hint/correction
        // continuations repaired
        assert!(summary.pool_size >= 20);
        assert!(out.join("d_aug.jsonl").exists());
        assert!(out.join("provenance_summary.csv").exists());
        assert!(out.join("manifest.json").exists());
        if summary.exported > 0 {
            assert!(out.join("sft.jsonl").exists());
        }
    }

    #[test]
    fn train_command_reproducible() {
        let mut cfg = PipelineConfig::default();
        cfg.sim.n_math = 6;
        cfg.sim.n_knowledge = 0;
        cfg.sampler.k = 4;
        cfg.sampler.n = 4;
        cfg.curriculum.rounds = 2;
        cfg.curriculum.sigma_tool_per_round = vec![0.1, 0.05];
        cfg.curriculum.sigma_len_per_round = vec![0.1, 0.05];
        cfg.curriculum.epochs_per_round = 2;
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        cmd_train(&cfg, &a, 9).unwrap();
        cmd_train(&cfg, &b, 9).unwrap();
        for file in ["report.csv", "theta.ckpt"] {
            assert_eq!(
                std::fs::read(a.join(file)).unwrap(),
                std::fs::read(b.join(file)).unwrap(),
                "{file}"
            );
        }
        let table = cmd_report(&a).unwrap();
        assert!(table.contains("round"));
        assert!(cmd_report(&dir.path().join("missing")).is_err());
    }
}
