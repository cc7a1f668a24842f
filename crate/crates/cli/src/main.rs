use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use latticeblow::harness::config::{ExperimentConfig, OutputPaths, Params};
use latticeblow::harness::{golden, run_experiment, set_exec_mode, ExecMode};

#[derive(Parser)]
#[command(
    name = "latticeblow",
    version,
    about = "Blowup experiments for interacting lattice SDEs"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long, default_value_t = 100)]
    reps: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory for CSV/JSON files.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run replicates on one thread.
    #[arg(long)]
    serial: bool,
    /// Experiment id used in file names.
    #[arg(long)]
    id: Option<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Explosion of the one-site SDE.
    Sde1d {
        #[arg(long, default_value = "square")]
        drift: String,
        #[arg(long, default_value_t = 1.0)]
        x0: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, default_value_t = 1.0)]
        horizon: f64,
        #[arg(long, default_value_t = 1e8)]
        xmax: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Direct Euler scheme for the truncated system.
    Lattice {
        #[arg(long, default_value = "const:1")]
        profile: String,
        #[arg(long, default_value = "zero")]
        drift: String,
        /// Truncation level; repeat for a coupled ladder.
        #[arg(long = "J", default_values_t = [0.0])]
        j: Vec<f64>,
        #[arg(long = "T", default_value_t = 0.25)]
        t: f64,
        #[arg(long, default_value_t = 1.0 / 128.0)]
        dt: f64,
        /// Half-width of the reported region.
        #[arg(long, default_value_t = 4)]
        window: usize,
        #[arg(long = "probe", default_values_t = [0])]
        probes: Vec<i64>,
        #[arg(long, default_value = "srw")]
        walk: String,
        #[arg(long)]
        boundary: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Alternating convolution/SDE scheme against the direct scheme.
    Splitting {
        #[arg(long = "n", default_values_t = [4, 8, 16, 32])]
        n: Vec<u32>,
        #[arg(long = "J", default_value_t = 0.0)]
        j: f64,
        #[arg(long, default_value = "zero")]
        drift: String,
        #[arg(long, default_value = "const:1")]
        profile: String,
        #[arg(long = "T", default_value_t = 0.5)]
        t: f64,
        #[arg(long, default_value_t = 1.0 / 1024.0)]
        dt: f64,
        #[arg(long, default_value_t = 2)]
        window: usize,
        #[arg(long = "probe", default_values_t = [0])]
        probes: Vec<i64>,
        #[arg(long, default_value = "srw")]
        walk: String,
        #[command(flatten)]
        common: Common,
    },
    /// Localized Picard iterates.
    Picard {
        #[arg(long, default_value_t = 64.0)]
        beta: f64,
        #[arg(long, default_value_t = 4)]
        iters: u32,
        #[arg(long, default_value_t = 0.25)]
        t: f64,
        #[arg(long, default_value_t = 1.0 / 64.0)]
        time_grid: f64,
        #[arg(long, value_delimiter = ',', default_values_t = [0, 1])]
        sites: Vec<i64>,
        #[arg(long, default_value = "srw")]
        walk: String,
        #[command(flatten)]
        common: Common,
    },
    /// Feynman–Kac moments from exact walk collisions.
    Moments {
        #[arg(long, default_value_t = 2)]
        k: u32,
        #[arg(long, default_value_t = 0.25)]
        t: f64,
        #[arg(long, default_value = "srw")]
        walk: String,
        #[command(flatten)]
        common: Common,
    },
    /// Three-stage blowup pipeline.
    Pipeline {
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long = "L", default_value_t = 10.0)]
        l: f64,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long, default_value = "square")]
        drift: String,
        #[arg(long, default_value = "srw")]
        walk: String,
        #[arg(long, default_value_t = 64)]
        window: usize,
        #[arg(long, default_value_t = 1.0 / 1024.0)]
        dt: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Run an experiment from a TOML config.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        serial: bool,
    },
    /// Regression goldens.
    Golden {
        #[command(subcommand)]
        action: GoldenCmd,
    },
}

#[derive(Subcommand)]
enum GoldenCmd {
    List {
        #[arg(long)]
        dir: Option<PathBuf>,
    },
    /// Check one golden (or all) at its pinned seed or `--seed`.
    Check {
        id: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        dir: Option<PathBuf>,
    },
    Record {
        id: String,
        #[arg(long)]
        dir: Option<PathBuf>,
    },
}

fn config_from(kind: &str, common: Common, params: Params) -> ExperimentConfig {
    ExperimentConfig {
        id: common.id.unwrap_or_else(|| kind.to_string()),
        seed: common.seed,
        reps: common.reps,
        output: OutputPaths { dir: common.out },
        params,
    }
}

fn execute(cfg: &ExperimentConfig, serial: bool) -> Result<()> {
    if serial {
        set_exec_mode(ExecMode::Serial);
    }
    let out = run_experiment(cfg).with_context(|| format!("experiment `{}`", cfg.id))?;
    if let Some(dir) = &cfg.output.dir {
        for p in out.write_to(dir)? {
            eprintln!("wrote {}", p.display());
        }
    }
    println!("{}", out.summary_json()?);
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let (cfg, serial) = match cli.cmd {
        Cmd::Sde1d {
            drift,
            x0,
            dt,
            horizon,
            xmax,
            common,
        } => {
            let s = common.serial;
            (
                config_from(
                    "sde1d",
                    common,
                    Params::Sde1d {
                        drift,
                        x0,
                        dt,
                        horizon,
                        xmax,
                    },
                ),
                s,
            )
        }
        Cmd::Lattice {
            profile,
            drift,
            j,
            t,
            dt,
            window,
            probes,
            walk,
            boundary,
            common,
        } => {
            let s = common.serial;
            let p = Params::Lattice {
                profile,
                drift,
                j,
                t,
                dt,
                window,
                probes,
                walk,
                boundary,
            };
            (config_from("lattice", common, p), s)
        }
        Cmd::Splitting {
            n,
            j,
            drift,
            profile,
            t,
            dt,
            window,
            probes,
            walk,
            common,
        } => {
            let s = common.serial;
            let p = Params::Splitting {
                n,
                j,
                drift,
                profile,
                t,
                dt,
                window,
                probes,
                walk,
            };
            (config_from("splitting", common, p), s)
        }
        Cmd::Picard {
            beta,
            iters,
            t,
            time_grid,
            sites,
            walk,
            common,
        } => {
            let s = common.serial;
            let p = Params::Picard {
                beta,
                iters,
                t,
                time_grid,
                sites,
                walk,
            };
            (config_from("picard", common, p), s)
        }
        Cmd::Moments { k, t, walk, common } => {
            let s = common.serial;
            (
                config_from("moments", common, Params::Moments { k, t, walk }),
                s,
            )
        }
        Cmd::Pipeline {
            delta,
            l,
            epsilon,
            drift,
            walk,
            window,
            dt,
            common,
        } => {
            let s = common.serial;
            let p = Params::Pipeline {
                delta,
                l,
                epsilon,
                drift,
                walk,
                window,
                dt,
            };
            (config_from("pipeline", common, p), s)
        }
        Cmd::Run {
            config,
            out,
            serial,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if out.is_some() {
                cfg.output.dir = out;
            }
            (cfg, serial)
        }
        Cmd::Golden { action } => return golden_cmd(action),
    };
    execute(&cfg, serial)
}

fn golden_cmd(action: GoldenCmd) -> Result<()> {
    match action {
        GoldenCmd::List { dir } => {
            for id in golden::golden_ids(&dir.unwrap_or_else(golden::default_dir))? {
                println!("{id}");
            }
        }
        GoldenCmd::Check { id, seed, dir } => {
            let dir = dir.unwrap_or_else(golden::default_dir);
            let ids = match id {
                Some(id) => vec![id],
                None => golden::golden_ids(&dir)?,
            };
            let mut failed = 0;
            for id in ids {
                let seed = match seed {
                    Some(s) => s,
                    None => golden::load_config(&dir, &id)?.seed,
                };
                match golden::golden_check(&dir, &id, seed) {
                    Ok(()) => println!("PASS {id}"),
                    Err(e) => {
                        failed += 1;
                        println!("FAIL {id}: {e}");
                    }
                }
            }
            if failed > 0 {
                bail!("{failed} golden(s) failed");
            }
        }
        GoldenCmd::Record { id, dir } => {
            let p = golden::record_golden(&dir.unwrap_or_else(golden::default_dir), &id)?;
            println!("recorded {}", p.display());
        }
    }
    Ok(())
}
