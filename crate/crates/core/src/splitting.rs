//! The Alternating Process `V^{(n,J)}`: on each block `[k/n, (k+1)/n)` every
//! site evolves by its own SDE `dV = b(V∧J)dt + V dB(x)`, then the profile is
//! mixed by exact convolution with `G_{1/n}`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::drift::{DriftSpec, GrowthConstants};
use crate::error::{Error, Result};
use crate::harness::replicate_map;
use crate::kernel::{convolve, Kernel, WalkSpec, DEFAULT_TOL};
use crate::lattice::{Boundary, InitialProfile, LatticeState, TruncatedSystem, Window};
use crate::noise::{Cell, NoiseField};
use crate::sde1d::{self, DRIFT_FRACTION};
use crate::stats::McEstimate;

const MAX_REFINE: i32 = 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlternatingConfig {
    pub n: u32,
    pub j: f64,
    pub inner_dt: f64,
}

impl AlternatingConfig {
    pub fn new(n: u32, j: f64, inner_dt: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config(
                "splits per unit time must be positive".into(),
            ));
        }
        if !(j >= 0.0) {
            return Err(Error::Config(format!("truncation J must be >= 0, got {j}")));
        }
        if !(inner_dt > 0.0 && inner_dt <= 1.0 / (10.0 * n as f64) * (1.0 + 1e-12)) {
            return Err(Error::Config(format!(
                "inner_dt {inner_dt} must be in (0, 1/(10n)] for n={n}"
            )));
        }
        Ok(AlternatingConfig { n, j, inner_dt })
    }

    /// Largest dyadic `2^{-m}` not exceeding `1/(20n)`.
    pub fn default_inner_dt(n: u32) -> f64 {
        let target = 1.0 / (20.0 * n as f64);
        target.log2().floor().exp2()
    }

    pub fn block(&self) -> f64 {
        1.0 / self.n as f64
    }
}

/// What an observer is shown.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// After an SDE substep inside a block.
    Inner,
    /// `V_{k/n−}`, just before mixing.
    LeftLimit,
    /// `V_{k/n}`, just after mixing.
    Mixed,
}

#[derive(Debug, Clone)]
pub struct AlternatingScheme {
    pub drift: DriftSpec,
    pub kernel: Arc<Kernel>,
    pub cfg: AlternatingConfig,
}

impl AlternatingScheme {
    pub fn new(drift: DriftSpec, walk: WalkSpec, cfg: AlternatingConfig) -> Self {
        AlternatingScheme {
            drift,
            kernel: Arc::new(Kernel::new(walk)),
            cfg,
        }
    }

    pub fn with_kernel(drift: DriftSpec, kernel: Arc<Kernel>, cfg: AlternatingConfig) -> Self {
        AlternatingScheme { drift, kernel, cfg }
    }

    fn has_drift(&self) -> bool {
        self.cfg.j > 0.0 && !self.drift.is_zero()
    }

    fn site_step(&self, v: &mut f64, site: i64, cell: Cell, noise: &NoiseField) {
        let h = cell.len(noise.dt());
        let b = if self.has_drift() {
            self.drift.eval(v.min(self.cfg.j))
        } else {
            0.0
        };
        if *v == 0.0 && b == 0.0 {
            return;
        }
        let refine = cell.level < MAX_REFINE;
        if refine && b * h > DRIFT_FRACTION * *v {
            for c in cell.children() {
                self.site_step(v, site, c, noise);
            }
            return;
        }
        let update = b * h + *v * noise.cell_increment(site, cell);
        if refine && update.abs() > 0.5 * v.max(1.0) {
            for c in cell.children() {
                self.site_step(v, site, c, noise);
            }
            return;
        }
        *v = (*v + update).max(0.0);
    }

    /// Window margin needed for mixing steps (series support of `G_{1/n}`).
    pub fn mixing_margin(&self) -> Result<usize> {
        Ok(self.kernel.slice(self.cfg.block(), DEFAULT_TOL)?.half_width)
    }

    /// Advances `state` from `state.t` to `t_end`. `observe` sees every
    /// substep, left limit and mixed profile; returning `false` stops early.
    pub fn advance(
        &self,
        state: &mut LatticeState,
        t_end: f64,
        noise: &NoiseField,
        mut observe: impl FnMut(Phase, &LatticeState) -> bool,
    ) -> Result<()> {
        let h = self.cfg.inner_dt;
        let level = noise.level_for(h)?;
        let per_block = (self.cfg.block() / h).round() as u64;
        if ((per_block as f64) * h - self.cfg.block()).abs() > 1e-9 * h {
            return Err(Error::Alignment {
                t: self.cfg.block(),
                dt: h,
            });
        }
        let first = (state.t / h).round() as u64;
        let last = (t_end / h).round() as u64;
        if ((last as f64) * h - t_end).abs() > 1e-9 * h.max(t_end) {
            return Err(Error::Alignment { t: t_end, dt: h });
        }
        let slice = self.kernel.slice(self.cfg.block(), DEFAULT_TOL)?;
        for idx in first..last {
            let cell = Cell::new(level, idx);
            let lo = state.lo;
            for (i, v) in state.values.iter_mut().enumerate() {
                self.site_step(v, lo + i as i64, cell, noise);
            }
            state.t = cell.end(noise.dt());
            if (idx + 1) % per_block == 0 {
                if !observe(Phase::LeftLimit, state) {
                    return Ok(());
                }
                *state = convolve(&slice, state)?;
                if !observe(Phase::Mixed, state) {
                    return Ok(());
                }
            } else if !observe(Phase::Inner, state) {
                return Ok(());
            }
        }
        Ok(())
    }

    pub fn run(
        &self,
        profile: &InitialProfile,
        window: Window,
        boundary: Boundary,
        t: f64,
        noise: &NoiseField,
    ) -> Result<LatticeState> {
        let mut state = LatticeState::new(profile, window, boundary);
        self.check_window(window)?;
        self.advance(&mut state, t, noise, |_, _| true)?;
        Ok(state)
    }

    pub fn check_window(&self, window: Window) -> Result<()> {
        let need = self.mixing_margin()?;
        if window.margin < need {
            return Err(Error::WindowTooNarrow {
                required: need,
                available: window.margin,
            });
        }
        Ok(())
    }
}

/// `run_alternating` with every mixed profile (and the final one) recorded.
pub fn run_alternating(
    scheme: &AlternatingScheme,
    profile: &InitialProfile,
    window: Window,
    boundary: Boundary,
    t: f64,
    noise: &NoiseField,
) -> Result<Vec<(Phase, LatticeState)>> {
    if t > 1.0 + 1e-12 {
        return Err(Error::Domain(format!(
            "alternating runs stop at time 1, got {t}"
        )));
    }
    scheme.check_window(window)?;
    let mut state = LatticeState::new(profile, window, boundary);
    let mut out = vec![(Phase::Mixed, state.clone())];
    scheme.advance(&mut state, t, noise, |ph, s| {
        if ph != Phase::Inner {
            out.push((ph, s.clone()));
        }
        true
    })?;
    if out.last().map(|(_, s)| s.t) != Some(state.t) {
        out.push((Phase::Inner, state));
    }
    Ok(out)
}

/// Window margin covering both the boundary budget over `t` and the mixing
/// support for every `n` in `ns`.
pub fn window_for(walk: &WalkSpec, ns: &[u32], t: f64, extent: usize) -> Result<Window> {
    let base = Window::for_horizon(walk, t, extent);
    let mut margin = base.margin;
    for &n in ns {
        let s = crate::kernel::kernel_slice(walk, 1.0 / n as f64, DEFAULT_TOL)?;
        margin = margin.max(s.half_width);
    }
    Window::new(extent + margin, margin)
}

/// Shared inputs for the coupled splitting-vs-direct experiments.
#[derive(Debug, Clone)]
pub struct CoupledSetup {
    pub drift: DriftSpec,
    pub walk: WalkSpec,
    pub j: f64,
    pub profile: InitialProfile,
    pub window: Window,
    pub boundary: Boundary,
    pub t: f64,
    /// Base noise; its dt is both the direct step and the inner SDE step.
    pub noise: NoiseField,
    pub reps: u64,
    pub probes: Vec<i64>,
}

/// Per-`n` gap `sup_probe E[(V^{(n,J)}_T − U^{(J)}_T)²]` and the direct
/// scheme's own refinement floor `sup_probe E[(U_dt − U_{dt/2})²]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L2Report {
    pub ns: Vec<u32>,
    pub gaps: Vec<McEstimate>,
    pub floor: McEstimate,
}

fn sup_estimate(per_probe: Vec<McEstimate>) -> McEstimate {
    per_probe
        .into_iter()
        .max_by(|a, b| a.mean.total_cmp(&b.mean))
        .unwrap_or_default()
}

pub fn l2_distance_to_direct(setup: &CoupledSetup, n_ladder: &[u32]) -> Result<L2Report> {
    if n_ladder.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("n ladder must be strictly increasing".into()));
    }
    let dt = setup.noise.dt();
    let direct = TruncatedSystem::new(setup.drift.clone(), setup.walk.clone(), setup.j, dt)?;
    let half = direct.with_dt(dt / 2.0);
    direct.check_window(setup.window, setup.t)?;
    let kernel = Arc::new(Kernel::new(setup.walk.clone()));
    let schemes: Vec<AlternatingScheme> = n_ladder
        .iter()
        .map(|&n| {
            let cfg = AlternatingConfig::new(n, setup.j, dt)?;
            let s = AlternatingScheme::with_kernel(setup.drift.clone(), kernel.clone(), cfg);
            s.check_window(setup.window)?;
            Ok(s)
        })
        .collect::<Result<_>>()?;
    let np = setup.probes.len();
    // per replicate: [floor per probe, gap per probe for each n]
    let rows = replicate_map(setup.reps, |r| {
        let noise = setup.noise.for_replicate(r);
        let u = direct.run(
            &setup.profile,
            setup.window,
            setup.boundary,
            setup.t,
            &noise,
        )?;
        let u2 = half.run(
            &setup.profile,
            setup.window,
            setup.boundary,
            setup.t,
            &noise,
        )?;
        let mut row: Vec<f64> = setup
            .probes
            .iter()
            .map(|&p| (u.get(p) - u2.get(p)).powi(2))
            .collect();
        for s in &schemes {
            let v = s.run(
                &setup.profile,
                setup.window,
                setup.boundary,
                setup.t,
                &noise,
            )?;
            row.extend(setup.probes.iter().map(|&p| (v.get(p) - u.get(p)).powi(2)));
        }
        Ok(row)
    })?;
    let col = |c: usize| McEstimate::from_samples(&rows.iter().map(|r| r[c]).collect::<Vec<_>>());
    let floor = sup_estimate((0..np).map(col).collect());
    let gaps = (0..n_ladder.len())
        .map(|i| sup_estimate((0..np).map(|j| col(np * (i + 1) + j)).collect()))
        .collect();
    Ok(L2Report {
        ns: n_ladder.to_vec(),
        gaps,
        floor,
    })
}

/// `E[V^{(n,J)}_T(probe)^2]` for each `n`.
pub fn second_moment_by_n(
    setup: &CoupledSetup,
    n_ladder: &[u32],
    probe: i64,
) -> Result<Vec<McEstimate>> {
    let dt = setup.noise.dt();
    let kernel = Arc::new(Kernel::new(setup.walk.clone()));
    let schemes: Vec<AlternatingScheme> = n_ladder
        .iter()
        .map(|&n| {
            let cfg = AlternatingConfig::new(n, setup.j, dt)?;
            Ok(AlternatingScheme::with_kernel(
                setup.drift.clone(),
                kernel.clone(),
                cfg,
            ))
        })
        .collect::<Result<_>>()?;
    let rows = replicate_map(setup.reps, |r| {
        let noise = setup.noise.for_replicate(r);
        schemes
            .iter()
            .map(|s| {
                let v = s.run(
                    &setup.profile,
                    setup.window,
                    setup.boundary,
                    setup.t,
                    &noise,
                )?;
                Ok(v.get(probe).powi(2))
            })
            .collect::<Result<Vec<f64>>>()
    })?;
    Ok((0..n_ladder.len())
        .map(|i| McEstimate::from_samples(&rows.iter().map(|r| r[i]).collect::<Vec<_>>()))
        .collect())
}

/// `10·inner_dt·b(J ∧ level)`.
pub fn tol_dom(drift: &DriftSpec, inner_dt: f64, j: f64, level: f64) -> f64 {
    10.0 * inner_dt * drift.eval(level.min(j))
}

/// Per-replicate outcome of a domination check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominationRecord {
    pub violated: bool,
    /// Grid times at which the inequality was checked.
    pub checked: u64,
    /// Largest `Z − V` seen while checking.
    pub worst_gap: f64,
    /// Time at which `Z` left `(K_b, J)`, if it did.
    pub exit_time: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct DominationSetup {
    pub m: f64,
    pub drift: DriftSpec,
    pub walk: WalkSpec,
    pub growth: GrowthConstants,
    pub j: f64,
    pub n: u32,
    pub delta: f64,
    pub noise: NoiseField,
    pub window: Window,
    pub reps: u64,
}

/// `V` from the spike `M·1_{0}`, `Z` from `M`, both on site 0's Brownian
/// motion; checks `V_t(0) ≥ Z_t − tol_dom` on the inner grid while
/// `K_b < Z_t < J`.
pub fn domination_experiment(
    setup: &DominationSetup,
) -> Result<(McEstimate, Vec<DominationRecord>)> {
    if setup.n < setup.growth.n0 {
        return Err(Error::Config(format!(
            "splits n={} must be at least n0={}",
            setup.n, setup.growth.n0
        )));
    }
    let inner = setup.noise.dt();
    let cfg = AlternatingConfig::new(setup.n, setup.j, inner)?;
    let scheme = AlternatingScheme::new(setup.drift.clone(), setup.walk.clone(), cfg);
    scheme.check_window(setup.window)?;
    let profile = InitialProfile::Spike {
        mass: setup.m,
        site: 0,
    };
    let records = replicate_map(setup.reps, |r| {
        let noise = setup.noise.for_replicate(r);
        let z = sde1d::simulate_z(
            &setup.drift,
            setup.growth,
            setup.j,
            setup.m,
            &noise,
            0,
            inner,
            setup.delta,
        )?;
        let mut rec = DominationRecord {
            violated: false,
            checked: 0,
            worst_gap: f64::NEG_INFINITY,
            exit_time: None,
        };
        let inside = |zv: f64| setup.growth.k_b < zv && zv < setup.j;
        if !inside(setup.m) {
            rec.exit_time = Some(0.0);
            return Ok(rec);
        }
        let mut state = LatticeState::new(&profile, setup.window, Boundary::Absorbing);
        scheme.advance(&mut state, setup.delta, &noise, |_, s| {
            let k = (s.t / inner).round() as usize;
            let zt = z.values[k];
            if !inside(zt) {
                rec.exit_time = Some(s.t);
                return false;
            }
            let v0 = s.get(0);
            rec.checked += 1;
            rec.worst_gap = rec.worst_gap.max(zt - v0);
            if v0 < zt - tol_dom(&setup.drift, inner, setup.j, v0.max(zt)) {
                rec.violated = true;
            }
            true
        })?;
        Ok(rec)
    })?;
    let freq: Vec<f64> = records
        .iter()
        .map(|r| f64::from(u8::from(r.violated)))
        .collect();
    Ok((McEstimate::from_samples(&freq), records))
}

#[derive(Debug, Clone)]
pub struct HitLevelSetup {
    pub m_target: f64,
    pub k_start: f64,
    pub p: i64,
    pub drift: DriftSpec,
    pub walk: WalkSpec,
    pub n: u32,
    pub j: f64,
    pub horizon: f64,
    pub noise: NoiseField,
    pub window: Window,
    pub reps: u64,
}

impl HitLevelSetup {
    /// Truncation `J = 2·M_target`.
    #[allow(clippy::too_many_arguments)]
    pub fn standard(
        m_target: f64,
        k_start: f64,
        p: i64,
        drift: DriftSpec,
        walk: WalkSpec,
        n: u32,
        delta: f64,
        noise: NoiseField,
        window: Window,
        reps: u64,
    ) -> Self {
        HitLevelSetup {
            m_target,
            k_start,
            p,
            drift,
            walk,
            n,
            j: 2.0 * m_target,
            horizon: 2.0 * delta,
            noise,
            window,
            reps,
        }
    }
}

/// Frequency of `sup_{t ≤ horizon} V_t(p) ≥ M_target` from the spike
/// `K_start·1_{p}`, with per-replicate hitting times.
pub fn hit_level_experiment(setup: &HitLevelSetup) -> Result<(McEstimate, Vec<Option<f64>>)> {
    let cfg = AlternatingConfig::new(setup.n, setup.j, setup.noise.dt())?;
    let scheme = AlternatingScheme::new(setup.drift.clone(), setup.walk.clone(), cfg);
    scheme.check_window(setup.window)?;
    if !setup.window.interior().contains(&setup.p) {
        return Err(Error::Config(format!(
            "site {} outside the window interior",
            setup.p
        )));
    }
    let profile = InitialProfile::Spike {
        mass: setup.k_start,
        site: setup.p,
    };
    let hits = replicate_map(setup.reps, |r| {
        let noise = setup.noise.for_replicate(r);
        let mut state = LatticeState::new(&profile, setup.window, Boundary::Absorbing);
        let mut hit = None;
        scheme.advance(&mut state, setup.horizon, &noise, |_, s| {
            if s.get(setup.p) >= setup.m_target {
                hit = Some(s.t);
                return false;
            }
            true
        })?;
        Ok(hit)
    })?;
    let xs: Vec<f64> = hits
        .iter()
        .map(|h| f64::from(u8::from(h.is_some())))
        .collect();
    Ok((McEstimate::from_samples(&xs), hits))
}
