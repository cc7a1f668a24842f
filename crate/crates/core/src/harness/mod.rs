//! Experiment driver: replicate fan-out, configuration, outputs, regression
//! goldens and the end-to-end blowup pipeline.

use std::cell::Cell;
use std::sync::atomic::{AtomicBool, Ordering};

use rayon::prelude::*;

use crate::error::Result;

pub mod config;
pub mod golden;
pub mod output;
pub mod pipeline;
pub mod run;

pub use crate::stats::{merge_all as merge, McEstimate};
pub use config::ExperimentConfig;
pub use golden::golden_check;
pub use output::ExperimentOutput;
pub use pipeline::{run_blowup_pipeline, PipelineConfig, PipelineReport};
pub use run::run_experiment;

static PARALLEL: AtomicBool = AtomicBool::new(true);

thread_local! {
    static OVERRIDE: Cell<Option<ExecMode>> = const { Cell::new(None) };
}

/// Replicate execution strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Serial,
    Parallel,
}

/// Sets the process-wide default used by [`replicate_map`].
pub fn set_exec_mode(mode: ExecMode) {
    PARALLEL.store(mode == ExecMode::Parallel, Ordering::SeqCst);
}

pub fn exec_mode() -> ExecMode {
    if let Some(m) = OVERRIDE.with(Cell::get) {
        return m;
    }
    if PARALLEL.load(Ordering::SeqCst) {
        ExecMode::Parallel
    } else {
        ExecMode::Serial
    }
}

/// Runs `f` with `mode` as this thread's replicate schedule.
pub fn with_exec_mode<R>(mode: ExecMode, f: impl FnOnce() -> R) -> R {
    let prev = OVERRIDE.with(|c| c.replace(Some(mode)));
    let out = f();
    OVERRIDE.with(|c| c.set(prev));
    out
}

/// `f(0), …, f(reps−1)` in replicate order, whatever the schedule.
pub fn replicate_map<T, F>(reps: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    replicate_map_with(exec_mode(), reps, f)
}

pub fn replicate_map_with<T, F>(mode: ExecMode, reps: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    match mode {
        ExecMode::Serial => (0..reps).map(f).collect(),
        ExecMode::Parallel => (0..reps).into_par_iter().map(f).collect(),
    }
}
