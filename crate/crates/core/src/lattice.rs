//! Direct Euler–Maruyama integration of the drift-truncated lattice system
//!
//! ```text
//! dU_t(x) = (ℒU_t)(x) dt + b(U_t(x) ∧ J) dt + U_t(x) dB_t(x)
//! ```
//!
//! on a finite window `[-W, W]` whose outer `margin` sites are a truncation
//! buffer.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::drift::DriftSpec;
use crate::error::{Error, Result};
use crate::harness::replicate_map;
use crate::kernel::{margin_for_budget, WalkSpec};
use crate::noise::{Cell, NoiseField};
use crate::stats::McEstimate;

/// Budget on `P(N_T > margin/R)` used to size window buffers.
pub const BOUNDARY_BUDGET: f64 = 1e-6;

/// How values beyond the window edge are supplied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    /// Edge value repeated outwards.
    #[default]
    CopyExtension,
    /// Zero outside the window.
    Absorbing,
}

impl FromStr for Boundary {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "copy-extension" | "copy" => Ok(Boundary::CopyExtension),
            "absorbing" => Ok(Boundary::Absorbing),
            other => Err(Error::Config(format!("unknown boundary `{other}`"))),
        }
    }
}

/// `[-half_width, half_width]` with `margin` buffer sites at each end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub half_width: usize,
    pub margin: usize,
}

impl Window {
    pub fn new(half_width: usize, margin: usize) -> Result<Self> {
        if margin > half_width {
            return Err(Error::Config(format!(
                "margin {margin} exceeds window half-width {half_width}"
            )));
        }
        Ok(Window { half_width, margin })
    }

    /// Window whose interior covers `[-extent, extent]` with a buffer large
    /// enough for horizon `t` under [`BOUNDARY_BUDGET`].
    pub fn for_horizon(walk: &WalkSpec, t: f64, extent: usize) -> Self {
        let margin = margin_for_budget(walk, t, BOUNDARY_BUDGET);
        Window {
            half_width: extent + margin,
            margin,
        }
    }

    pub fn len(&self) -> usize {
        2 * self.half_width + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, site: i64) -> bool {
        site.unsigned_abs() as usize <= self.half_width
    }

    pub fn interior(&self) -> std::ops::RangeInclusive<i64> {
        let r = (self.half_width - self.margin) as i64;
        -r..=r
    }
}

/// Initial data `U_0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialProfile {
    Constant(f64),
    Spike {
        mass: f64,
        site: i64,
    },
    /// Listed sites; zero elsewhere.
    Custom(Vec<(i64, f64)>),
}

impl InitialProfile {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v >= 0.0 && v.is_finite();
        let good = match self {
            InitialProfile::Constant(c) => ok(*c),
            InitialProfile::Spike { mass, .. } => ok(*mass),
            InitialProfile::Custom(v) => v.iter().all(|(_, x)| ok(*x)),
        };
        if good {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "initial profile must be finite and nonnegative: {self:?}"
            )))
        }
    }

    pub fn value_at(&self, site: i64) -> f64 {
        match self {
            InitialProfile::Constant(c) => *c,
            InitialProfile::Spike { mass, site: p } => {
                if site == *p {
                    *mass
                } else {
                    0.0
                }
            }
            InitialProfile::Custom(v) => {
                v.iter().filter(|(s, _)| *s == site).map(|(_, x)| *x).sum()
            }
        }
    }

    /// Boundary rule that keeps the profile's far field: copy-extension for
    /// constants, absorbing for compactly supported data.
    pub fn natural_boundary(&self) -> Boundary {
        match self {
            InitialProfile::Constant(_) => Boundary::CopyExtension,
            _ => Boundary::Absorbing,
        }
    }
}

impl FromStr for InitialProfile {
    type Err = Error;

    /// `const:c`, `spike:M@p` or `custom:x=v,x=v,...`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::Config(format!(
                "cannot parse profile `{s}` (const:c | spike:M@p | custom:x=v,...)"
            ))
        };
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
        let site = |t: &str| t.trim().parse::<i64>().map_err(|_| bad());
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        let p = match kind {
            "const" => InitialProfile::Constant(num(rest)?),
            "spike" => {
                let (m, at) = rest.split_once('@').ok_or_else(bad)?;
                InitialProfile::Spike {
                    mass: num(m)?,
                    site: site(at)?,
                }
            }
            "custom" => {
                let mut v = Vec::new();
                for item in rest.split(',') {
                    let (x, val) = item.split_once('=').ok_or_else(bad)?;
                    v.push((site(x)?, num(val)?));
                }
                InitialProfile::Custom(v)
            }
            _ => return Err(bad()),
        };
        p.validate()?;
        Ok(p)
    }
}

/// Solution profile on a window at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeState {
    /// Leftmost site (`-W`).
    pub lo: i64,
    pub values: Vec<f64>,
    pub t: f64,
    pub margin: usize,
    pub boundary: Boundary,
}

impl LatticeState {
    pub fn new(profile: &InitialProfile, window: Window, boundary: Boundary) -> Self {
        let w = window.half_width as i64;
        LatticeState {
            lo: -w,
            values: (-w..=w).map(|x| profile.value_at(x)).collect(),
            t: 0.0,
            margin: window.margin,
            boundary,
        }
    }

    pub fn constant(half_width: usize, margin: usize, c: f64, boundary: Boundary) -> Self {
        Self::new(
            &InitialProfile::Constant(c),
            Window { half_width, margin },
            boundary,
        )
    }

    pub fn window(&self) -> Window {
        Window {
            half_width: (self.values.len() - 1) / 2,
            margin: self.margin,
        }
    }

    pub fn hi(&self) -> i64 {
        self.lo + self.values.len() as i64 - 1
    }

    pub fn index(&self, site: i64) -> Option<usize> {
        (site >= self.lo && site <= self.hi()).then(|| (site - self.lo) as usize)
    }

    /// Value at `site`, extended beyond the window by the boundary rule.
    pub fn get(&self, site: i64) -> f64 {
        match self.index(site) {
            Some(i) => self.values[i],
            None => match self.boundary {
                Boundary::Absorbing => 0.0,
                Boundary::CopyExtension => {
                    if site < self.lo {
                        self.values[0]
                    } else {
                        *self.values.last().unwrap()
                    }
                }
            },
        }
    }

    pub fn sites(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(move |(i, v)| (self.lo + i as i64, *v))
    }

    /// Same geometry, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        LatticeState {
            values,
            ..self.clone()
        }
    }
}

/// Argmax closest to the origin: ties go to the smaller `|site|`, then to the
/// negative site.
pub fn sup_site(state: &LatticeState) -> (i64, f64) {
    let mut best = (state.lo, f64::NEG_INFINITY);
    for (x, v) in state.sites() {
        let better = v > best.1
            || (v == best.1 && (x.abs() < best.0.abs() || (x.abs() == best.0.abs() && x < best.0)));
        if better {
            best = (x, v);
        }
    }
    best
}

/// The truncated system with its time-stepping parameters.
#[derive(Debug, Clone)]
pub struct TruncatedSystem {
    pub drift: DriftSpec,
    pub walk: WalkSpec,
    pub j: f64,
    pub dt: f64,
    pub dt_min: f64,
}

impl TruncatedSystem {
    pub fn new(drift: DriftSpec, walk: WalkSpec, j: f64, dt: f64) -> Result<Self> {
        if !(j >= 0.0) {
            return Err(Error::Config(format!("truncation J must be >= 0, got {j}")));
        }
        if !(dt > 0.0 && dt <= 0.1) {
            return Err(Error::Config(format!(
                "lattice dt must be in (0, 0.1], got {dt}"
            )));
        }
        Ok(TruncatedSystem {
            drift,
            walk,
            j,
            dt,
            dt_min: 1e-6,
        })
    }

    pub fn driftless(walk: WalkSpec, dt: f64) -> Result<Self> {
        Self::new(DriftSpec::builtin("zero")?, walk, 0.0, dt)
    }

    pub fn with_j(&self, j: f64) -> Self {
        TruncatedSystem { j, ..self.clone() }
    }

    pub fn with_dt(&self, dt: f64) -> Self {
        TruncatedSystem { dt, ..self.clone() }
    }

    #[inline]
    fn has_drift(&self) -> bool {
        self.j > 0.0 && !self.drift.is_zero()
    }

    fn step_values(
        &self,
        state: &LatticeState,
        cell: Cell,
        noise: &NoiseField,
        out: &mut Vec<f64>,
    ) -> Result<()> {
        let h = cell.len(noise.dt());
        let r = self.walk.range();
        let moves = self.walk.moves();
        let padded = state.padded(r);
        let drift = self.has_drift();
        out.clear();
        for (i, &u) in state.values.iter().enumerate() {
            let c = i + r;
            let mut lu = 0.0;
            for &(z, p) in &moves {
                lu += p * (padded[(c as i64 + z) as usize] - u);
            }
            let mut update = lu * h;
            if drift {
                update += self.drift.eval(u.min(self.j)) * h;
            }
            if u != 0.0 {
                update += u * noise.cell_increment(state.lo + i as i64, cell);
            }
            let bound = 0.5 * u.max(1.0);
            if update.abs() > bound {
                return Err(Error::StepRejected {
                    t: state.t,
                    update,
                    bound,
                });
            }
            out.push((u + update).max(0.0));
        }
        Ok(())
    }

    /// One Euler–Maruyama step over `cell`, or `StepRejected`.
    pub fn step_cell(
        &self,
        state: &LatticeState,
        cell: Cell,
        noise: &NoiseField,
    ) -> Result<LatticeState> {
        let mut out = Vec::with_capacity(state.values.len());
        self.step_values(state, cell, noise, &mut out)?;
        Ok(LatticeState {
            values: out,
            t: cell.end(noise.dt()),
            ..state.clone()
        })
    }

    /// Step over `cell`, halving into child cells on rejection down to `dt_min`.
    fn step_refined(
        &self,
        state: &mut LatticeState,
        cell: Cell,
        noise: &NoiseField,
        scratch: &mut Vec<f64>,
    ) -> Result<()> {
        match self.step_values(state, cell, noise, scratch) {
            Ok(()) => {
                std::mem::swap(&mut state.values, scratch);
                state.t = cell.end(noise.dt());
                Ok(())
            }
            Err(Error::StepRejected { .. }) if 0.5 * cell.len(noise.dt()) >= self.dt_min => {
                for child in cell.children() {
                    self.step_refined(state, child, noise, scratch)?;
                }
                Ok(())
            }
            Err(e) => Err(e),
        }
    }

    /// Advances `state` to `t_end` in steps of `dt`, calling `observe` after
    /// every step.
    pub fn advance(
        &self,
        state: &mut LatticeState,
        t_end: f64,
        noise: &NoiseField,
        mut observe: impl FnMut(&LatticeState),
    ) -> Result<()> {
        let level = noise.level_for(self.dt)?;
        let h = self.dt;
        let first = (state.t / h).round();
        let last = (t_end / h).round();
        if (first * h - state.t).abs() > 1e-9 * h || (last * h - t_end).abs() > 1e-9 * h.max(t_end)
        {
            return Err(Error::Alignment { t: t_end, dt: h });
        }
        let mut scratch = Vec::with_capacity(state.values.len());
        for idx in first as u64..last as u64 {
            self.step_refined(state, Cell::new(level, idx), noise, &mut scratch)?;
            observe(state);
        }
        Ok(())
    }

    /// Full run with snapshots every `snapshot_every` time units (and at `t`).
    pub fn simulate(
        &self,
        profile: &InitialProfile,
        window: Window,
        boundary: Boundary,
        t: f64,
        noise: &NoiseField,
        snapshot_every: f64,
    ) -> Result<Vec<LatticeState>> {
        self.check_window(window, t)?;
        let mut state = LatticeState::new(profile, window, boundary);
        let stride = ((snapshot_every / self.dt).round() as u64).max(1);
        let mut snaps = vec![state.clone()];
        let mut k = 0u64;
        self.advance(&mut state, t, noise, |s| {
            k += 1;
            if k.is_multiple_of(stride) {
                snaps.push(s.clone());
            }
        })?;
        if snaps.last().map(|s| s.t) != Some(state.t) {
            snaps.push(state);
        }
        Ok(snaps)
    }

    /// Final state only.
    pub fn run(
        &self,
        profile: &InitialProfile,
        window: Window,
        boundary: Boundary,
        t: f64,
        noise: &NoiseField,
    ) -> Result<LatticeState> {
        self.check_window(window, t)?;
        let mut state = LatticeState::new(profile, window, boundary);
        self.advance(&mut state, t, noise, |_| {})?;
        Ok(state)
    }

    /// The window buffer must meet [`BOUNDARY_BUDGET`] over horizon `t`.
    pub fn check_window(&self, window: Window, t: f64) -> Result<()> {
        let need = margin_for_budget(&self.walk, t, BOUNDARY_BUDGET);
        if window.margin < need {
            return Err(Error::WindowTooNarrow {
                required: need,
                available: window.margin,
            });
        }
        Ok(())
    }
}

/// One explicit step of size `dt` from `state.t` (no substepping).
pub fn step_truncated(
    state: &LatticeState,
    drift: &DriftSpec,
    walk: &WalkSpec,
    j: f64,
    dt: f64,
    noise: &NoiseField,
) -> Result<LatticeState> {
    let sys = TruncatedSystem::new(drift.clone(), walk.clone(), j, dt)?;
    let level = noise.level_for(dt)?;
    let idx = (state.t / dt).round() as u64;
    sys.step_cell(state, Cell::new(level, idx), noise)
}

/// A replicated lattice experiment: system, geometry, initial data, noise.
#[derive(Debug, Clone)]
pub struct LatticeExperiment {
    pub system: TruncatedSystem,
    pub profile: InitialProfile,
    pub window: Window,
    pub boundary: Boundary,
    pub noise: NoiseField,
    pub reps: u64,
}

impl LatticeExperiment {
    /// `values[r][i][j]` = `U_{times[i]}(probes[j])` for replicate `r`.
    pub fn sample(&self, times: &[f64], probes: &[i64]) -> Result<Vec<Vec<Vec<f64>>>> {
        let t_max = times.iter().cloned().fold(0.0, f64::max);
        self.system.check_window(self.window, t_max)?;
        for &p in probes {
            if !self.window.interior().contains(&p) {
                return Err(Error::Config(format!(
                    "probe {p} outside the window interior"
                )));
            }
        }
        replicate_map(self.reps, |r| {
            let noise = self.noise.for_replicate(r);
            let mut state = LatticeState::new(&self.profile, self.window, self.boundary);
            let mut out = Vec::with_capacity(times.len());
            let mut order: Vec<usize> = (0..times.len()).collect();
            order.sort_by(|a, b| times[*a].total_cmp(&times[*b]));
            let mut rows = vec![Vec::new(); times.len()];
            for i in order {
                self.system.advance(&mut state, times[i], &noise, |_| {})?;
                rows[i] = probes.iter().map(|&p| state.get(p)).collect();
            }
            out.extend(rows);
            Ok(out)
        })
    }

    /// `E[U_t(probe)^k]`.
    pub fn estimate_moment(&self, k: u32, t: f64, probe: i64) -> Result<McEstimate> {
        if !(1..=4).contains(&k) {
            return Err(Error::Domain(format!(
                "moment order must be 1..=4, got {k}"
            )));
        }
        let s = self.sample(&[t], &[probe])?;
        let xs: Vec<f64> = s.iter().map(|r| r[0][0].powi(k as i32)).collect();
        Ok(McEstimate::from_samples(&xs))
    }

    /// `P(U_t(probe) ≥ λ)` for each λ on one coupled sample.
    pub fn estimate_tail(&self, lambdas: &[f64], t: f64, probe: i64) -> Result<Vec<McEstimate>> {
        let s = self.sample(&[t], &[probe])?;
        Ok(lambdas
            .iter()
            .map(|&l| {
                let xs: Vec<f64> = s
                    .iter()
                    .map(|r| if r[0][0] >= l { 1.0 } else { 0.0 })
                    .collect();
                McEstimate::from_samples(&xs)
            })
            .collect())
    }

    /// `U^{(J_i)}_T(probe)` per replicate, per J, per probe; all J-runs share
    /// the replicate's noise.
    pub fn minimal_solution_ladder(
        &self,
        j_ladder: &[f64],
        t: f64,
        probes: &[i64],
    ) -> Result<Vec<Vec<Vec<f64>>>> {
        if j_ladder.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("J ladder must be strictly increasing".into()));
        }
        self.system.check_window(self.window, t)?;
        replicate_map(self.reps, |r| {
            let noise = self.noise.for_replicate(r);
            j_ladder
                .iter()
                .map(|&j| {
                    let st = self.system.with_j(j).run(
                        &self.profile,
                        self.window,
                        self.boundary,
                        t,
                        &noise,
                    )?;
                    Ok(probes.iter().map(|&p| st.get(p)).collect())
                })
                .collect()
        })
    }
}

/// Tolerance for pathwise J-monotonicity checks: `10·dt·b(J₂)`.
pub fn tol_mono(drift: &DriftSpec, dt: f64, j2: f64) -> f64 {
    10.0 * dt * drift.eval(j2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn srw() -> WalkSpec {
        WalkSpec::preset("srw").unwrap()
    }

    #[test]
    fn profile_parsing() {
        assert_eq!(
            "const:1".parse::<InitialProfile>().unwrap(),
            InitialProfile::Constant(1.0)
        );
        assert_eq!(
            "spike:16@-3".parse::<InitialProfile>().unwrap(),
            InitialProfile::Spike {
                mass: 16.0,
                site: -3
            }
        );
        let c: InitialProfile = "custom:0=2,1=0.5".parse().unwrap();
        assert_eq!(c.value_at(1), 0.5);
        assert_eq!(c.value_at(2), 0.0);
        assert!("spike:-1@0".parse::<InitialProfile>().is_err());
        assert!("wave:1".parse::<InitialProfile>().is_err());
    }

    #[test]
    fn sup_site_tie_breaks() {
        let st = LatticeState::constant(5, 0, 1.0, Boundary::CopyExtension);
        assert_eq!(sup_site(&st).0, 0);
        let mut st = LatticeState::constant(5, 0, 0.0, Boundary::CopyExtension);
        st.values[5 + 3] = 2.0;
        st.values[5 - 3] = 2.0;
        assert_eq!(sup_site(&st), (-3, 2.0));
        st.values[5 + 4] = 3.0;
        assert_eq!(sup_site(&st), (4, 3.0));
    }

    #[test]
    fn constants_and_zero_fixed() {
        let noise = NoiseField::silent(1e-3).unwrap();
        let sys = TruncatedSystem::driftless(srw(), 1e-3).unwrap();
        let st = LatticeState::constant(10, 2, 1.0, Boundary::CopyExtension);
        let next = sys.step_cell(&st, Cell::new(0, 0), &noise).unwrap();
        assert!(next.values.iter().all(|&v| v == 1.0));

        let sq =
            TruncatedSystem::new(DriftSpec::builtin("square").unwrap(), srw(), 4.0, 1e-3).unwrap();
        let noisy = NoiseField::new(5, 1e-3).unwrap();
        let zero = LatticeState::constant(10, 2, 0.0, Boundary::CopyExtension);
        let next = sq.step_cell(&zero, Cell::new(0, 0), &noisy).unwrap();
        assert!(next.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejection_and_refinement() {
        let noise = NoiseField::silent(0.1).unwrap();
        let sq =
            TruncatedSystem::new(DriftSpec::builtin("square").unwrap(), srw(), 100.0, 0.1).unwrap();
        let st = LatticeState::constant(4, 0, 10.0, Boundary::CopyExtension);
        assert!(matches!(
            sq.step_cell(&st, Cell::new(0, 0), &noise),
            Err(Error::StepRejected { .. })
        ));
        let mut s = st.clone();
        sq.advance(&mut s, 0.1, &noise, |_| {}).unwrap();
        assert!((s.t - 0.1).abs() < 1e-15);
        assert!(s.values[0] > 10.0);
    }

    #[test]
    fn narrow_window_rejected() {
        let sys = TruncatedSystem::driftless(srw(), 1e-3).unwrap();
        let noise = NoiseField::new(1, 1e-3).unwrap();
        let w = Window::new(5, 1).unwrap();
        let r = sys.run(
            &InitialProfile::Constant(1.0),
            w,
            Boundary::CopyExtension,
            1.0,
            &noise,
        );
        assert!(matches!(r, Err(Error::WindowTooNarrow { .. })));
    }
}
