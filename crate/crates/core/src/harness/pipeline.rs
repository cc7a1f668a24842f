//! The three-stage blowup argument as an experiment.
//!
//! 1. Driftless run from `U_0 ≡ 1` to `δ`; `p` is the site closest to the
//!    origin with `Ũ_δ(p) ≥ K`, where `log₂ K` comes from the explosion bound
//!    for `Z` (drift `b/n₀`).
//! 2. Truncated system `\bar U^{(2M)}` from `K·1_{p}` on `[δ, 2δ]`, with
//!    `M = 2L/G_δ(p)`; `τ` is the first time `\bar U(p) ≥ M`.
//! 3. Driftless run from `M·1_{p}` on `[τ, τ+δ]`; success if the value at
//!    the origin reaches `L`.

use serde::{Deserialize, Serialize};

use crate::drift::{DriftSpec, GrowthConstants};
use crate::error::{Error, Result};
use crate::harness::replicate_map;
use crate::kernel::{kernel_slice, WalkSpec, DEFAULT_TOL};
use crate::lattice::{
    Boundary, InitialProfile, LatticeState, TruncatedSystem, Window, BOUNDARY_BUDGET,
};
use crate::noise::NoiseField;
use crate::sde1d::find_k;
use crate::stats::McEstimate;

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub delta: f64,
    pub l: f64,
    /// Explosion-bound tolerance; `δ` when absent.
    pub epsilon: Option<f64>,
    pub drift: DriftSpec,
    pub walk: WalkSpec,
    pub half_width: usize,
    pub dt: f64,
    pub reps: u64,
    pub seed: u64,
    /// Skip stage 1 and start stage 2 at this site (diagnostics only).
    pub assume_site: Option<i64>,
}

/// Stage-1 outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage1 {
    pub site: Option<i64>,
    /// `Ũ_δ(p)`, or the window maximum when no site qualified.
    pub value: f64,
    pub widened: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage2 {
    pub m: f64,
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage3 {
    pub sup_at_origin: f64,
    pub reached: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub replicate: u64,
    pub stage1: Stage1,
    pub stage2: Option<Stage2>,
    pub stage3: Option<Stage3>,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub k_exponent: i32,
    pub k_level: f64,
    pub s: f64,
    pub growth: GrowthConstants,
    pub success: McEstimate,
    /// Frequency of `τ ≤ 2δ` among replicates that passed stage 1.
    pub stage2: McEstimate,
    /// Frequency of stage-3 success among replicates that passed stage 2.
    pub stage3: McEstimate,
    /// `(1 − δ)(1 − 4δe^δ)`.
    pub paper_bound: f64,
    pub reports: Vec<PipelineReport>,
}

pub fn product_bound(delta: f64) -> f64 {
    (1.0 - delta) * (1.0 - 4.0 * delta * delta.exp())
}

fn grid(t: f64, dt: f64) -> f64 {
    (t / dt).round() * dt
}

fn window(walk: &WalkSpec, half_width: usize, t: f64) -> Result<Window> {
    let margin = crate::kernel::margin_for_budget(walk, t, BOUNDARY_BUDGET);
    if margin >= half_width {
        return Err(Error::WindowTooNarrow {
            required: margin + 1,
            available: half_width,
        });
    }
    Window::new(half_width, margin)
}

/// Closest interior site to the origin with value `≥ level` (ties to the
/// negative side).
fn closest_at_least(state: &LatticeState, w: Window, level: f64) -> Option<i64> {
    let r = (w.half_width - w.margin) as i64;
    (0..=r)
        .flat_map(|d| if d == 0 { vec![0] } else { vec![-d, d] })
        .find(|&x| state.get(x) >= level)
}

pub fn run_blowup_pipeline(cfg: &PipelineConfig) -> Result<PipelineSummary> {
    let delta = cfg.delta;
    if !(delta > 0.0 && delta < 0.25) {
        return Err(Error::Config(format!(
            "delta must be in (0, 1/4), got {delta}"
        )));
    }
    if !(cfg.l > 0.0 && cfg.l.is_finite()) {
        return Err(Error::Config(format!("L must be positive, got {}", cfg.l)));
    }
    if cfg.reps == 0 {
        return Err(Error::Config("reps must be at least 1".into()));
    }
    let eps = cfg.epsilon.unwrap_or(delta);
    let growth = cfg.drift.find_growth_constants(1e6)?;
    let z_drift = cfg.drift.scaled(1.0 / growth.n0 as f64)?;
    let (mut k, mut s) = find_k(&z_drift, eps, delta)?;
    // the level must also clear 2·K_b
    while 2f64.powi(k) <= 2.0 * growth.k_b {
        k += 1;
        s = s.min(crate::sde1d::s_max(&z_drift, k)? * 0.9);
    }
    let k_level = 2f64.powi(k);
    let dt = cfg.dt;
    let base = NoiseField::new(cfg.seed, dt)?;
    let driftless = TruncatedSystem::driftless(cfg.walk.clone(), dt)?;
    let t1 = grid(delta, dt);
    let one = InitialProfile::Constant(1.0);

    let reports = replicate_map(cfg.reps, |r| {
        let noise = base.for_replicate(r);
        let stage1 = match cfg.assume_site {
            Some(p) => Stage1 {
                site: Some(p),
                value: k_level,
                widened: false,
            },
            None => {
                let mut out = Stage1 {
                    site: None,
                    value: 0.0,
                    widened: false,
                };
                for (i, hw) in [cfg.half_width, 2 * cfg.half_width].into_iter().enumerate() {
                    let w = window(&cfg.walk, hw, t1)?;
                    let st = driftless.run(&one, w, Boundary::CopyExtension, t1, &noise)?;
                    out.widened = i == 1;
                    if let Some(p) = closest_at_least(&st, w, k_level) {
                        out.site = Some(p);
                        out.value = st.get(p);
                        break;
                    }
                    let rr = (w.half_width - w.margin) as i64;
                    out.value = (-rr..=rr).map(|x| st.get(x)).fold(0.0, f64::max);
                }
                out
            }
        };
        let Some(p) = stage1.site else {
            return Ok(PipelineReport {
                replicate: r,
                stage1,
                stage2: None,
                stage3: None,
                success: false,
            });
        };

        // stage 2
        let g = kernel_slice(&cfg.walk, delta, DEFAULT_TOL)?.value(p);
        let m = 2.0 * cfg.l / g;
        let reach = p.unsigned_abs() as usize;
        let w2 = Window::for_horizon(&cfg.walk, 2.0 * delta, reach);
        let sys = TruncatedSystem::new(cfg.drift.clone(), cfg.walk.clone(), 2.0 * m, dt)?;
        let mut st = LatticeState::new(
            &InitialProfile::Spike {
                mass: k_level,
                site: p,
            },
            w2,
            Boundary::Absorbing,
        );
        st.t = t1;
        let mut tau = (st.get(p) >= m).then_some(t1);
        if tau.is_none() {
            let mut seen = None;
            sys.advance(&mut st, grid(2.0 * delta, dt), &noise, |s| {
                if seen.is_none() && s.get(p) >= m {
                    seen = Some(s.t);
                }
            })?;
            tau = seen;
        }
        let stage2 = Stage2 { m, tau };
        let Some(tau) = tau else {
            return Ok(PipelineReport {
                replicate: r,
                stage1,
                stage2: Some(stage2),
                stage3: None,
                success: false,
            });
        };

        // stage 3
        let mut st = LatticeState::new(
            &InitialProfile::Spike { mass: m, site: p },
            w2,
            Boundary::Absorbing,
        );
        st.t = tau;
        let mut sup = st.get(0);
        driftless.advance(&mut st, grid(tau + delta, dt), &noise, |s| {
            sup = sup.max(s.get(0))
        })?;
        let reached = sup >= cfg.l;
        Ok(PipelineReport {
            replicate: r,
            stage1,
            stage2: Some(stage2),
            stage3: Some(Stage3 {
                sup_at_origin: sup,
                reached,
            }),
            success: reached,
        })
    })?;

    if cfg.assume_site.is_none() && reports.iter().all(|r| r.stage1.site.is_none()) {
        return Err(Error::Stage1Exhausted {
            level: k_level,
            delta,
            replicates: cfg.reps as usize,
        });
    }
    let flag = |b: bool| f64::from(u8::from(b));
    let success =
        McEstimate::from_samples(&reports.iter().map(|r| flag(r.success)).collect::<Vec<_>>());
    let stage2 = McEstimate::from_samples(
        &reports
            .iter()
            .filter_map(|r| r.stage2.map(|s| flag(s.tau.is_some())))
            .collect::<Vec<_>>(),
    );
    let stage3 = McEstimate::from_samples(
        &reports
            .iter()
            .filter_map(|r| r.stage3.map(|s| flag(s.reached)))
            .collect::<Vec<_>>(),
    );
    Ok(PipelineSummary {
        k_exponent: k,
        k_level,
        s,
        growth,
        success,
        stage2,
        stage3,
        paper_bound: product_bound(delta),
        reports,
    })
}

/// Per-replicate driftless maxima `max_x Ũ_δ(x)` over the window interior
/// (the stage-1 statistic), for diagnostics.
pub fn stage1_window_maxima(cfg: &PipelineConfig) -> Result<Vec<f64>> {
    let dt = cfg.dt;
    let t1 = grid(cfg.delta, dt);
    let base = NoiseField::new(cfg.seed, dt)?;
    let sys = TruncatedSystem::driftless(cfg.walk.clone(), dt)?;
    let w = window(&cfg.walk, cfg.half_width, t1)?;
    replicate_map(cfg.reps, |r| {
        let st = sys.run(
            &InitialProfile::Constant(1.0),
            w,
            Boundary::CopyExtension,
            t1,
            &base.for_replicate(r),
        )?;
        let rr = (w.half_width - w.margin) as i64;
        Ok((-rr..=rr).map(|x| st.get(x)).fold(0.0, f64::max))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_bound_value() {
        let b = product_bound(0.1);
        assert!((b - 0.9 * (1.0 - 0.4 * 0.1f64.exp())).abs() < 1e-15);
        assert!((b - 0.502).abs() < 1e-3);
        assert!(product_bound(0.05) > b);
    }

    #[test]
    fn closest_site_tie_break() {
        let w = Window::new(6, 1).unwrap();
        let mut st = LatticeState::constant(6, 1, 0.0, Boundary::Absorbing);
        st.values[6 + 2] = 5.0;
        st.values[6 - 2] = 5.0;
        assert_eq!(closest_at_least(&st, w, 4.0), Some(-2));
        assert_eq!(closest_at_least(&st, w, 6.0), None);
    }

    #[test]
    fn assumed_site_runs_later_stages() {
        let cfg = PipelineConfig {
            delta: 0.1,
            l: 10.0,
            epsilon: None,
            drift: DriftSpec::builtin("square").unwrap(),
            walk: WalkSpec::preset("srw").unwrap(),
            half_width: 16,
            dt: 1.0 / 256.0,
            reps: 4,
            seed: 1,
            assume_site: Some(0),
        };
        let s = run_blowup_pipeline(&cfg).unwrap();
        assert_eq!(s.reports.len(), 4);
        assert!(s.reports.iter().all(|r| r.stage2.is_some()));
    }
}
