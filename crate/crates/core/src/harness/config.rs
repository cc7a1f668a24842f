//! Declarative experiment configuration (TOML).
//!
//! ```toml
//! id = "lattice-mean"
//! seed = 7
//! reps = 200
//!
//! [params]
//! kind = "lattice"
//! profile = "const:1"
//! drift = "zero"
//! j = [0.0]
//! t = 0.25
//! dt = 0.0078125
//! window = 8
//! probes = [0]
//! walk = "srw"
//! ```
//!
//! Drifts are builtin names or `expr:<source>`; walks are presets or
//! `custom:z=p,z=p,...`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::drift::DriftSpec;
use crate::error::{Error, Result};
use crate::kernel::WalkSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub id: String,
    pub seed: u64,
    pub reps: u64,
    #[serde(default)]
    pub output: OutputPaths,
    pub params: Params,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    /// Directory for the CSV/JSON outputs; nothing is written when absent.
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Params {
    Sde1d {
        drift: String,
        x0: f64,
        dt: f64,
        horizon: f64,
        xmax: f64,
    },
    Lattice {
        profile: String,
        drift: String,
        j: Vec<f64>,
        t: f64,
        dt: f64,
        window: usize,
        probes: Vec<i64>,
        walk: String,
        #[serde(default)]
        boundary: Option<String>,
    },
    Splitting {
        n: Vec<u32>,
        j: f64,
        drift: String,
        profile: String,
        t: f64,
        dt: f64,
        window: usize,
        probes: Vec<i64>,
        walk: String,
    },
    Picard {
        beta: f64,
        iters: u32,
        t: f64,
        time_grid: f64,
        sites: Vec<i64>,
        walk: String,
    },
    Moments {
        k: u32,
        t: f64,
        walk: String,
    },
    Pipeline {
        delta: f64,
        l: f64,
        #[serde(default)]
        epsilon: Option<f64>,
        drift: String,
        walk: String,
        window: usize,
        dt: f64,
    },
}

impl Params {
    pub fn kind(&self) -> &'static str {
        match self {
            Params::Sde1d { .. } => "sde1d",
            Params::Lattice { .. } => "lattice",
            Params::Splitting { .. } => "splitting",
            Params::Picard { .. } => "picard",
            Params::Moments { .. } => "moments",
            Params::Pipeline { .. } => "pipeline",
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(src: &str) -> Result<Self> {
        toml::from_str(src).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        // TOML integers are signed 64-bit
        if i64::try_from(self.seed).is_err() {
            return Err(Error::Config(format!(
                "seed {} does not fit a TOML integer",
                self.seed
            )));
        }
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

pub fn parse_drift(s: &str) -> Result<DriftSpec> {
    match s.strip_prefix("expr:") {
        Some(src) => DriftSpec::from_expr(s, src, None, false),
        None => DriftSpec::builtin(s),
    }
}

pub fn parse_walk(s: &str) -> Result<WalkSpec> {
    let Some(body) = s.strip_prefix("custom:") else {
        return WalkSpec::preset(s);
    };
    let mut pmf = Vec::new();
    for item in body.split(',') {
        let (z, p) = item
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("walk entry `{item}` is not z=p")))?;
        let z: i64 = z
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad jump `{z}`")))?;
        let p: f64 = p
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad probability `{p}`")))?;
        pmf.push((z, p));
    }
    let range = pmf
        .iter()
        .map(|(z, _)| z.unsigned_abs() as usize)
        .max()
        .unwrap_or(0);
    WalkSpec::new(range, &pmf)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
id = "demo"
seed = 3
reps = 10

[params]
kind = "moments"
k = 2
t = 0.25
walk = "srw"
"#;

    #[test]
    fn round_trip() {
        let c = ExperimentConfig::from_toml(SAMPLE).unwrap();
        let back = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(c, back);
        assert_eq!(c.params.kind(), "moments");
    }

    #[test]
    fn unknown_fields_rejected() {
        let top = SAMPLE.replace("reps = 10", "reps = 10\ncolour = 1");
        assert!(ExperimentConfig::from_toml(&top).is_err());
        let inner = SAMPLE.replace("k = 2", "k = 2\nlambda = 1");
        assert!(ExperimentConfig::from_toml(&inner).is_err());
    }

    #[test]
    fn drift_and_walk_strings() {
        assert_eq!(parse_drift("square").unwrap().eval(3.0), 9.0);
        assert!((parse_drift("expr:pow(x,2)").unwrap().eval(3.0) - 9.0).abs() < 1e-12);
        assert!(parse_drift("cube").is_err());
        let w = parse_walk("custom:-1=0.5,1=0.5").unwrap();
        assert_eq!(w.range(), 1);
        assert!(parse_walk("custom:1=0.7").is_err());
    }
}
