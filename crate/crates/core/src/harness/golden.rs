//! Regression goldens: summary CSVs recorded at a pinned seed.
//!
//! A golden `<id>` is the pair `goldens/<id>.toml` (the config, whose seed is
//! the pinned seed) and `goldens/<id>.summary.csv` (the recorded summary).

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::output::parse_summary_csv;
use crate::harness::run::run_experiment;

/// The goldens shipped with the crate.
pub fn default_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("goldens")
}

pub fn golden_ids(dir: &Path) -> Result<Vec<String>> {
    let mut ids: Vec<String> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            name.strip_suffix(".toml").map(str::to_string)
        })
        .collect();
    ids.sort();
    Ok(ids)
}

pub fn load_config(dir: &Path, id: &str) -> Result<ExperimentConfig> {
    let cfg = ExperimentConfig::load(&dir.join(format!("{id}.toml")))?;
    if cfg.id != id {
        return Err(Error::Config(format!(
            "golden file `{id}` declares id `{}`",
            cfg.id
        )));
    }
    Ok(cfg)
}

/// Runs golden `id` at `seed` and returns its summary CSV.
pub fn golden_run(dir: &Path, id: &str, seed: u64) -> Result<String> {
    let mut cfg = load_config(dir, id)?;
    cfg.seed = seed;
    run_experiment(&cfg)?.summary_csv()
}

/// Re-records golden `id` at its pinned seed.
pub fn record_golden(dir: &Path, id: &str) -> Result<PathBuf> {
    let cfg = load_config(dir, id)?;
    let csv = golden_run(dir, id, cfg.seed)?;
    let p = dir.join(format!("{id}.summary.csv"));
    std::fs::write(&p, csv)?;
    Ok(p)
}

/// First differing field between two summary CSVs, as
/// `(field, expected, actual)`.
pub fn first_divergence(expected: &str, actual: &str) -> Result<Option<(String, String, String)>> {
    if expected == actual {
        return Ok(None);
    }
    let e = parse_summary_csv(expected)?;
    let a = parse_summary_csv(actual)?;
    for (i, (x, y)) in e.iter().zip(&a).enumerate() {
        let fields = [
            ("experiment", x.experiment.clone(), y.experiment.clone()),
            ("parameter", x.parameter.clone(), y.parameter.clone()),
            ("value", x.value.to_string(), y.value.to_string()),
            (
                "stderr",
                format!("{:?}", x.stderr),
                format!("{:?}", y.stderr),
            ),
        ];
        for (name, ex, ac) in fields {
            if ex != ac {
                return Ok(Some((format!("row {i} ({}).{name}", x.parameter), ex, ac)));
            }
        }
    }
    if e.len() != a.len() {
        return Ok(Some((
            "row count".into(),
            e.len().to_string(),
            a.len().to_string(),
        )));
    }
    Ok(Some((
        "bytes".into(),
        expected.len().to_string(),
        actual.len().to_string(),
    )))
}

/// Passes iff golden `id` run at `seed` reproduces the recorded summary
/// byte for byte.
pub fn golden_check(dir: &Path, id: &str, seed: u64) -> Result<()> {
    let expected = std::fs::read_to_string(dir.join(format!("{id}.summary.csv")))?;
    let actual = golden_run(dir, id, seed)?;
    match first_divergence(&expected, &actual)? {
        None => Ok(()),
        Some((field, expected, actual)) => Err(Error::GoldenMismatch {
            field,
            expected,
            actual,
        }),
    }
}
