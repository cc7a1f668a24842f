//! Config-driven experiment runs. Each run is a pure function of its config.

use crate::error::{Error, Result};
use crate::harness::config::{parse_drift, parse_walk, ExperimentConfig, Params};
use crate::harness::output::{ExperimentOutput, Table};
use crate::harness::pipeline::{run_blowup_pipeline, PipelineConfig};
use crate::harness::replicate_map;
use crate::lattice::{InitialProfile, LatticeExperiment, TruncatedSystem, Window};
use crate::moments::{feynman_kac_moment, moment_bracket, sample_collision};
use crate::noise::NoiseField;
use crate::picard::{PicardConfig, PicardExperiment};
use crate::sde1d::explodes_within;
use crate::splitting::{
    domination_experiment, l2_distance_to_direct, window_for, CoupledSetup, DominationSetup,
};
use crate::stats::{correlation, McEstimate};

fn s(x: impl ToString) -> String {
    x.to_string()
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    if cfg.reps == 0 {
        return Err(Error::Config("reps must be at least 1".into()));
    }
    let mut out = ExperimentOutput::new(&cfg.id, cfg.params.kind(), cfg.seed, cfg.reps);
    let reps = cfg.reps;
    match &cfg.params {
        Params::Sde1d {
            drift,
            x0,
            dt,
            horizon,
            xmax,
        } => {
            let drift = parse_drift(drift)?;
            let base = NoiseField::new(cfg.seed, *dt)?;
            let times = replicate_map(reps, |r| {
                explodes_within(&drift, *x0, *dt, *horizon, *xmax, &base.for_replicate(r), 0)
            })?;
            let mut t = Table::new("replicates", &["replicate", "exploded", "explosion_time"]);
            for (r, e) in times.iter().enumerate() {
                t.push(vec![s(r), s(e.is_some()), e.map(s).unwrap_or_default()]);
            }
            let flags: Vec<f64> = times
                .iter()
                .map(|e| f64::from(u8::from(e.is_some())))
                .collect();
            out.estimate("explosion_frequency", &McEstimate::from_samples(&flags));
            let when: Vec<f64> = times.iter().flatten().copied().collect();
            out.estimate(
                "explosion_time_given_exploded",
                &McEstimate::from_samples(&when),
            );
            out.tables.push(t);
        }
        Params::Lattice {
            profile,
            drift,
            j,
            t,
            dt,
            window,
            probes,
            walk,
            boundary,
        } => {
            let profile: InitialProfile = profile.parse()?;
            let walk = parse_walk(walk)?;
            let boundary = match boundary {
                Some(b) => b.parse()?,
                None => profile.natural_boundary(),
            };
            if j.is_empty() {
                return Err(Error::Config("lattice needs at least one J".into()));
            }
            let exp = LatticeExperiment {
                system: TruncatedSystem::new(parse_drift(drift)?, walk.clone(), j[0], *dt)?,
                profile,
                window: Window::for_horizon(&walk, *t, *window),
                boundary,
                noise: NoiseField::new(cfg.seed, *dt)?,
                reps,
            };
            let v = exp.minimal_solution_ladder(j, *t, probes)?;
            let mut tab = Table::new("replicates", &["replicate", "probe", "J", "value"]);
            for (r, per_j) in v.iter().enumerate() {
                for (ji, per_p) in per_j.iter().enumerate() {
                    for (pi, x) in per_p.iter().enumerate() {
                        tab.push(vec![s(r), s(probes[pi]), s(j[ji]), s(x)]);
                    }
                }
            }
            for (ji, jv) in j.iter().enumerate() {
                for (pi, p) in probes.iter().enumerate() {
                    let xs: Vec<f64> = v.iter().map(|r| r[ji][pi]).collect();
                    let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
                    out.estimate(
                        format!("mean[J={jv},x={p}]"),
                        &McEstimate::from_samples(&xs),
                    );
                    out.estimate(
                        format!("second_moment[J={jv},x={p}]"),
                        &McEstimate::from_samples(&sq),
                    );
                }
            }
            out.tables.push(tab);
        }
        Params::Splitting {
            n,
            j,
            drift,
            profile,
            t,
            dt,
            window,
            probes,
            walk,
        } => {
            let drift = parse_drift(drift)?;
            let walk = parse_walk(walk)?;
            let profile: InitialProfile = profile.parse()?;
            let noise = NoiseField::new(cfg.seed, *dt)?;
            let setup = CoupledSetup {
                drift: drift.clone(),
                walk: walk.clone(),
                j: *j,
                boundary: profile.natural_boundary(),
                profile,
                window: window_for(&walk, n, *t, *window)?,
                t: *t,
                noise,
                reps,
                probes: probes.clone(),
            };
            let rep = l2_distance_to_direct(&setup, n)?;
            let mut conv = Table::new("convergence", &["n", "l2_gap", "stderr"]);
            for (nn, g) in rep.ns.iter().zip(&rep.gaps) {
                conv.push(vec![s(nn), s(g.mean), s(g.stderr)]);
                out.estimate(format!("l2_gap[n={nn}]"), g);
            }
            out.estimate("direct_dt_floor", &rep.floor);
            out.tables.push(conv);
            if !drift.is_zero() && j.is_finite() && *j > 0.0 {
                let growth = drift.find_growth_constants(1e6)?;
                let n_top = *n.iter().max().unwrap_or(&growth.n0);
                if n_top >= growth.n0 && *j > growth.k_b.ceil() + 1.0 {
                    let m = growth.k_b.floor() + 1.0;
                    let (freq, recs) = domination_experiment(&DominationSetup {
                        m,
                        drift: drift.clone(),
                        walk: walk.clone(),
                        growth,
                        j: *j,
                        n: n_top,
                        delta: *t,
                        noise,
                        window: Window::for_horizon(&walk, *t, 0),
                        reps,
                    })?;
                    let mut dom = Table::new(
                        "domination",
                        &["replicate", "violated", "checked", "worst_gap", "exit_time"],
                    );
                    for (r, d) in recs.iter().enumerate() {
                        dom.push(vec![
                            s(r),
                            s(d.violated),
                            s(d.checked),
                            s(d.worst_gap),
                            d.exit_time.map(s).unwrap_or_default(),
                        ]);
                    }
                    out.estimate(format!("domination_violation[n={n_top}]"), &freq);
                    out.tables.push(dom);
                }
            }
        }
        Params::Picard {
            beta,
            iters,
            t,
            time_grid,
            sites,
            walk,
        } => {
            let pc = PicardConfig::new(*beta, *iters, *t, *time_grid)?;
            let exp = PicardExperiment {
                cfg: pc,
                walk: parse_walk(walk)?,
                noise: NoiseField::new(cfg.seed, *time_grid)?,
                reps,
            };
            let v = exp.sample(sites)?;
            let mut tab = Table::new("replicates", &["replicate", "site", "iter", "value"]);
            for (r, per_m) in v.iter().enumerate() {
                for (m, per_i) in per_m.iter().enumerate() {
                    for (i, x) in per_i.iter().enumerate() {
                        tab.push(vec![s(r), s(sites[i]), s(m), s(x)]);
                    }
                }
            }
            let top = *iters as usize;
            for (i, x) in sites.iter().enumerate() {
                let col: Vec<f64> = v.iter().map(|r| r[top][i]).collect();
                out.estimate(format!("mean[x={x}]"), &McEstimate::from_samples(&col));
            }
            if let Some(z) = sites.iter().position(|&y| y == 0) {
                for m in 0..top {
                    let d: Vec<f64> = v.iter().map(|r| (r[m + 1][z] - r[m][z]).powi(2)).collect();
                    out.estimate(format!("contraction[m={m}]"), &McEstimate::from_samples(&d));
                }
            }
            if sites.len() >= 2 {
                let a: Vec<f64> = v.iter().map(|r| r[top][0]).collect();
                let b: Vec<f64> = v.iter().map(|r| r[top][1]).collect();
                out.scalar(
                    format!("correlation[{},{}]", sites[0], sites[1]),
                    correlation(&a, &b),
                );
            }
            out.scalar("radius", exp.cfg.radius() as f64);
            out.scalar("independence_spacing", exp.cfg.independence_spacing());
            out.tables.push(tab);
        }
        Params::Moments { k, t, walk } => {
            let walk = parse_walk(walk)?;
            let est = feynman_kac_moment(&walk, *k as usize, *t, reps, cfg.seed)?;
            let mut tab = Table::new("replicates", &["replicate", "collision_time"]);
            let starts = vec![0; *k as usize];
            for r in 0..reps {
                tab.push(vec![
                    s(r),
                    s(sample_collision(&walk, &starts, *t, cfg.seed, r).collision_time),
                ]);
            }
            let (lo, hi) = moment_bracket(*k, *t);
            out.estimate(format!("moment[k={k}]"), &est);
            out.scalar("bracket_lo", lo);
            out.scalar("bracket_hi", hi);
            out.tables.push(tab);
        }
        Params::Pipeline {
            delta,
            l,
            epsilon,
            drift,
            walk,
            window,
            dt,
        } => {
            let sum = run_blowup_pipeline(&PipelineConfig {
                delta: *delta,
                l: *l,
                epsilon: *epsilon,
                drift: parse_drift(drift)?,
                walk: parse_walk(walk)?,
                half_width: *window,
                dt: *dt,
                reps,
                seed: cfg.seed,
                assume_site: None,
            })?;
            let mut tab = Table::new(
                "replicates",
                &[
                    "replicate",
                    "stage1_site",
                    "stage1_value",
                    "m",
                    "tau",
                    "stage3_sup",
                    "success",
                ],
            );
            for r in &sum.reports {
                tab.push(vec![
                    s(r.replicate),
                    r.stage1.site.map(s).unwrap_or_default(),
                    s(r.stage1.value),
                    r.stage2.map(|x| s(x.m)).unwrap_or_default(),
                    r.stage2.and_then(|x| x.tau).map(s).unwrap_or_default(),
                    r.stage3.map(|x| s(x.sup_at_origin)).unwrap_or_default(),
                    s(r.success),
                ]);
            }
            out.scalar("k_exponent", sum.k_exponent as f64);
            out.estimate("success", &sum.success);
            out.estimate("stage2", &sum.stage2);
            out.estimate("stage3", &sum.stage3);
            out.scalar("product_bound", sum.paper_bound);
            out.tables.push(tab);
        }
    }
    Ok(out)
}
