//! Behavior calibration for tool-integrated reasoning (TIR) agents.
//!
//! The library is organized around the stages of the pipeline:
//!
//! * [`trajectory`] — the tagged-text trajectory data model and parser.
//! * [`analysis`] — error-pattern detectors and behavioral metrics.
//! * [`flywheel`] — iterative trajectory enhancement and SFT export.
//! * [`pareto`] — group dispersion statistics and Pareto selection.
//! * [`reward`] — the multi-objective group-wise reward mechanism.
//! * [`policy`] — the toy policy, clipped surrogate objective, and the
//!   curriculum training loop.
//! * [`sim`] — a deterministic synthetic TIR environment used to exercise
//!   every stage without a live model.
//! * [`pipeline`] — configuration, dataset IO, and external clients backing
//!   the `tircal` CLI.

pub mod analysis;
pub mod flywheel;
pub mod pareto;
pub mod pipeline;
pub mod policy;
pub mod reward;
pub mod sim;
pub mod templates;
pub mod trajectory;

pub use trajectory::{parse_trajectory, Segment, TaskKind, TaskRecord, ToolKind, Trajectory};
