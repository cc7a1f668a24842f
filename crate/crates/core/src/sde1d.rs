//! The one-dimensional SDE `dX = b(X) dt + X dB`: explosion simulation,
//! dyadic level crossings, the geometric comparison process
//! `Y^{(k)}_t = 2^k exp(B_t + (f(2^{k-1}) − ½) t)`, the scale-function exit
//! probability, the first-passage MGF and the explosion lower bound.

use serde::{Deserialize, Serialize};

use crate::drift::{DriftSpec, GrowthConstants};
use crate::error::{domain, Error, Result};
use crate::noise::{Cell, NoiseField};

/// Default explosion threshold.
pub const X_MAX: f64 = 1e8;

/// Substeps are refined while `b(X)·h > DRIFT_FRACTION·X`.
pub const DRIFT_FRACTION: f64 = 0.1;

const MAX_REFINE: i32 = 40;

/// Sampled path on the base grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdePath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub exploded: bool,
    pub explosion_time: Option<f64>,
}

impl SdePath {
    pub fn last(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// First grid time at which the path is `≥ level`.
    pub fn first_at_or_above(&self, level: f64) -> Option<f64> {
        self.times
            .iter()
            .zip(&self.values)
            .find(|(_, v)| **v >= level)
            .map(|(t, _)| *t)
    }
}

/// Sequence of dyadic exponents visited from a start at `2^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelCrossingRecord {
    pub levels_visited: Vec<i32>,
    pub backtracked: bool,
    pub total_time: f64,
}

struct Integrator<'a> {
    drift: &'a dyn Fn(f64) -> f64,
    noise: &'a NoiseField,
    site: i64,
    x_max: f64,
}

impl Integrator<'_> {
    /// Advances `x` over `cell`, splitting while the drift is stiff. Returns
    /// the explosion time if `x_max` is crossed inside the cell.
    fn step(&self, x: &mut f64, cell: Cell) -> Option<f64> {
        let dt = self.noise.dt();
        let h = cell.len(dt);
        let b = (self.drift)(*x);
        if b * h > DRIFT_FRACTION * *x && cell.level < MAX_REFINE {
            for child in cell.children() {
                if let Some(t) = self.step(x, child) {
                    return Some(t);
                }
            }
            return None;
        }
        if *x == 0.0 && b == 0.0 {
            return None;
        }
        let dw = self.noise.cell_increment(self.site, cell);
        *x = (*x + b * h + *x * dw).max(0.0);
        (*x >= self.x_max).then(|| cell.end(dt))
    }

    fn run(&self, x0: f64, dt: f64, horizon: f64, record: bool) -> Result<SdePath> {
        let level = self.noise.level_for(dt)?;
        let steps = (horizon / dt).round() as u64;
        let mut x = x0;
        let mut path = SdePath {
            times: vec![0.0],
            values: vec![x0],
            exploded: x0 >= self.x_max,
            explosion_time: (x0 >= self.x_max).then_some(0.0),
        };
        if path.exploded {
            return Ok(path);
        }
        for i in 0..steps {
            let cell = Cell::new(level, i);
            let hit = self.step(&mut x, cell);
            if record || hit.is_some() || i + 1 == steps {
                path.times.push(cell.end(self.noise.dt()));
                path.values.push(x);
            }
            if let Some(t) = hit {
                path.exploded = true;
                path.explosion_time = Some(t);
                break;
            }
        }
        Ok(path)
    }
}

fn check_start(x0: f64, dt: f64) -> Result<()> {
    if !(x0 >= 0.0 && x0.is_finite()) {
        return domain(format!("initial value must be finite and >= 0, got {x0}"));
    }
    if !(dt > 0.0) {
        return domain(format!("dt must be positive, got {dt}"));
    }
    Ok(())
}

/// Euler–Maruyama for `dX = b(X)dt + X dB(site)` with adaptive halving;
/// `exploded` once `X ≥ x_max`.
pub fn simulate_underlying(
    drift: &DriftSpec,
    x0: f64,
    dt: f64,
    horizon: f64,
    x_max: f64,
    noise: &NoiseField,
    site: i64,
) -> Result<SdePath> {
    check_start(x0, dt)?;
    if !(x_max > x0) {
        return domain(format!("x_max {x_max} must exceed x0 {x0}"));
    }
    let b = |x: f64| drift.eval(x);
    Integrator {
        drift: &b,
        noise,
        site,
        x_max,
    }
    .run(x0, dt, horizon, true)
}

/// Explosion flag and time only (no path storage).
pub fn explodes_within(
    drift: &DriftSpec,
    x0: f64,
    dt: f64,
    horizon: f64,
    x_max: f64,
    noise: &NoiseField,
    site: i64,
) -> Result<Option<f64>> {
    check_start(x0, dt)?;
    let b = |x: f64| drift.eval(x);
    let p = Integrator {
        drift: &b,
        noise,
        site,
        x_max,
    }
    .run(x0, dt, horizon, false)?;
    Ok(p.explosion_time)
}

/// `dZ = b(Z∧J)/n₀ dt + Z dB(site)`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_z(
    drift: &DriftSpec,
    growth: GrowthConstants,
    j: f64,
    z0: f64,
    noise: &NoiseField,
    site: i64,
    dt: f64,
    horizon: f64,
) -> Result<SdePath> {
    check_start(z0, dt)?;
    let n0 = growth.n0 as f64;
    let b = move |x: f64| drift.eval(x.min(j)) / n0;
    Integrator {
        drift: &b,
        noise,
        site,
        x_max: f64::INFINITY,
    }
    .run(z0, dt, horizon, true)
}

/// Dyadic level crossings of `X` started at `2^k`, observed on the base grid,
/// until the path leaves `[2^{k_lo}, 2^{k_hi}]`, explodes, or hits `horizon`.
#[allow(clippy::too_many_arguments)]
pub fn level_crossings(
    drift: &DriftSpec,
    k: i32,
    k_lo: i32,
    k_hi: i32,
    dt: f64,
    horizon: f64,
    noise: &NoiseField,
    site: i64,
) -> Result<LevelCrossingRecord> {
    if !(k_lo < k && k < k_hi) {
        return domain(format!("need k_lo < k < k_hi, got {k_lo}, {k}, {k_hi}"));
    }
    let x_max = 2f64.powi(k_hi + 1);
    let b = |x: f64| drift.eval(x);
    let integ = Integrator {
        drift: &b,
        noise,
        site,
        x_max,
    };
    let level = noise.level_for(dt)?;
    let steps = (horizon / dt).round() as u64;
    let mut x = 2f64.powi(k);
    let mut cur = k;
    let mut rec = LevelCrossingRecord {
        levels_visited: vec![k],
        backtracked: false,
        total_time: 0.0,
    };
    for i in 0..steps {
        let cell = Cell::new(level, i);
        let hit = integ.step(&mut x, cell);
        rec.total_time = cell.end(noise.dt());
        loop {
            if x >= 2f64.powi(cur + 1) {
                cur += 1;
            } else if x <= 2f64.powi(cur - 1) {
                cur -= 1;
                rec.backtracked = true;
            } else {
                break;
            }
            rec.levels_visited.push(cur);
            if cur <= k_lo || cur >= k_hi {
                return Ok(rec);
            }
        }
        if hit.is_some() {
            break;
        }
    }
    Ok(rec)
}

/// `Y^{(k)}` evaluated in closed form on the grid of `dt`.
pub fn simulate_geometric_level(
    drift: &DriftSpec,
    k: i32,
    noise: &NoiseField,
    site: i64,
    dt: f64,
    horizon: f64,
) -> Result<SdePath> {
    let mu = drift.f_dyadic(k as i64 - 1)? - 0.5;
    let level = noise.level_for(dt)?;
    let steps = (horizon / dt).round() as u64;
    let y0 = 2f64.powi(k);
    let mut b = 0.0;
    let mut path = SdePath {
        times: vec![0.0],
        values: vec![y0],
        exploded: false,
        explosion_time: None,
    };
    for i in 0..steps {
        let cell = Cell::new(level, i);
        b += noise.cell_increment(site, cell);
        let t = cell.end(noise.dt());
        path.times.push(t);
        path.values.push(y0 * (b + mu * t).exp());
    }
    Ok(path)
}

/// `1/(1 + 2^{1−2f(2^{k−1})})`: probability that `Y^{(k)}` leaves
/// `[2^{k−1}, 2^{k+1}]` through the top.
pub fn hitting_probability_closed_form(drift: &DriftSpec, k: i32) -> Result<f64> {
    let f = drift.f_dyadic(k as i64 - 1)?;
    if !(f > 0.0) {
        return domain(format!("f(2^{}) = {f} must be positive", k - 1));
    }
    Ok(1.0 / (1.0 + (1.0 - 2.0 * f).exp2()))
}

/// Outcome of a first exit of `y0 + B_t + μt` from `(lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exit {
    pub upper: bool,
    pub time: f64,
}

/// Exit of the drifted Brownian motion `y0 + B_t + μ t` from `(lo, hi)`,
/// monitored on the `dt` grid with the Brownian-bridge crossing correction.
/// `None` if no exit by `max_time`.
#[allow(clippy::too_many_arguments)]
pub fn drifted_bm_exit(
    y0: f64,
    mu: f64,
    lo: f64,
    hi: f64,
    noise: &NoiseField,
    site: i64,
    dt: f64,
    max_time: f64,
) -> Result<Option<Exit>> {
    if !(lo < y0 && y0 < hi) {
        return domain(format!("start {y0} must lie inside ({lo}, {hi})"));
    }
    let level = noise.level_for(dt)?;
    let steps = (max_time / dt).ceil() as u64;
    let mut y = y0;
    for i in 0..steps {
        let cell = Cell::new(level, i);
        let next = y + mu * dt + noise.cell_increment(site, cell);
        let t = cell.end(noise.dt());
        if next >= hi {
            return Ok(Some(Exit {
                upper: true,
                time: t,
            }));
        }
        if next <= lo {
            return Ok(Some(Exit {
                upper: false,
                time: t,
            }));
        }
        let p_hi = (-2.0 * (hi - y) * (hi - next) / dt).exp();
        let p_lo = (-2.0 * (y - lo) * (next - lo) / dt).exp();
        if noise.cell_uniform(site, cell, 0) < p_hi {
            return Ok(Some(Exit {
                upper: true,
                time: t,
            }));
        }
        if noise.cell_uniform(site, cell, 1) < p_lo {
            return Ok(Some(Exit {
                upper: false,
                time: t,
            }));
        }
        y = next;
    }
    Ok(None)
}

/// Exit of `Y^{(k)}` from `[2^{k−1}, 2^{k+1}]`, simulated on `ln Y`.
pub fn geometric_exit(
    drift: &DriftSpec,
    k: i32,
    noise: &NoiseField,
    site: i64,
    dt: f64,
    max_time: f64,
) -> Result<Option<Exit>> {
    let mu = drift.f_dyadic(k as i64 - 1)? - 0.5;
    let ln2 = std::f64::consts::LN_2;
    drifted_bm_exit(0.0, mu, -ln2, ln2, noise, site, dt, max_time)
}

/// `E[exp(s·σ)]` for `σ = inf{t : B_t = slope·t − a}`:
/// `exp(−a·slope·(√(1 − 2s/slope²) − 1))`.
pub fn sigma_mgf(a: f64, slope: f64, s: f64) -> Result<f64> {
    if !(a > 0.0 && slope > 0.0) {
        return domain(format!("need a, slope > 0, got a={a}, slope={slope}"));
    }
    let q = s / (slope * slope);
    if !(q < 0.5) {
        return domain(format!("s/slope² = {q} must be below 1/2"));
    }
    Ok((-a * slope * ((1.0 - 2.0 * q).sqrt() - 1.0)).exp())
}

/// Sample of `σ_{a,slope}` (first time `B_t − slope·t` reaches `−a`), or
/// `None` if beyond `max_time`.
pub fn sample_sigma(
    a: f64,
    slope: f64,
    noise: &NoiseField,
    site: i64,
    dt: f64,
    max_time: f64,
) -> Result<Option<f64>> {
    Ok(drifted_bm_exit(0.0, -slope, -a, f64::INFINITY, noise, site, dt, max_time)?.map(|e| e.time))
}

/// Default cutoff for the explosion-bound series.
pub const SERIES_CUTOFF: f64 = 1e-15;

/// Smallest `k` index the dyadic series may reach (`f(2^{k−1})` finite).
const SERIES_K_MAX: i32 = 1024;

struct BoundSeries {
    hit: f64,
    slack: f64,
    min_gap: f64,
}

fn bound_series(drift: &DriftSpec, k0: i32, cutoff: f64) -> Result<BoundSeries> {
    let mut hit = 0.0;
    let mut slack = 0.0;
    let mut min_gap = f64::INFINITY;
    let mut k = k0;
    loop {
        let gap = drift.f_dyadic(k as i64 - 1)? - 0.5;
        if !(gap > 0.0) {
            return domain(format!("f(2^{}) must exceed 1/2", k - 1));
        }
        min_gap = min_gap.min(gap);
        let t1 = (1.0 - 2.0 * (gap + 0.5)).exp2();
        let t2 = 1.0 / gap;
        hit += t1;
        slack += t2;
        if t1 < cutoff && t2 < cutoff {
            break;
        }
        k += 1;
        if k > SERIES_K_MAX {
            return Err(Error::NotFound(format!(
                "explosion-bound series from K={k0} not converged by k={SERIES_K_MAX}"
            )));
        }
    }
    Ok(BoundSeries {
        hit,
        slack,
        min_gap,
    })
}

/// Largest admissible `s` (exclusive): `½·min_{k≥K}(f(2^{k−1}) − ½)²`.
pub fn s_max(drift: &DriftSpec, k: i32) -> Result<f64> {
    let s = bound_series(drift, k, SERIES_CUTOFF)?;
    Ok(0.5 * s.min_gap * s.min_gap)
}

/// `1 − Σ_{k≥K} 2^{1−2f(2^{k−1})} − e^{−sδ}·exp(2s·ln2·Σ_{k≥K} 1/(f(2^{k−1}) − ½))`.
pub fn explosion_lower_bound(drift: &DriftSpec, k: i32, delta: f64, s: f64) -> Result<f64> {
    explosion_lower_bound_with_cutoff(drift, k, delta, s, SERIES_CUTOFF)
}

pub fn explosion_lower_bound_with_cutoff(
    drift: &DriftSpec,
    k: i32,
    delta: f64,
    s: f64,
    cutoff: f64,
) -> Result<f64> {
    if !(s >= 0.0) {
        return domain(format!("s must be >= 0, got {s}"));
    }
    let ser = bound_series(drift, k, cutoff)?;
    if !(s < 0.5 * ser.min_gap * ser.min_gap) {
        return domain(format!(
            "s={s} violates s < {}",
            0.5 * ser.min_gap * ser.min_gap
        ));
    }
    let ln2 = std::f64::consts::LN_2;
    Ok(1.0 - ser.hit - (-s * delta + 2.0 * s * ln2 * ser.slack).exp())
}

/// Points of the `s` search grid for level `K`.
pub fn s_grid(smax: f64) -> Vec<f64> {
    let top = 0.9 * smax;
    (0..32)
        .map(|i| top * 10f64.powf(-4.0 * (31 - i) as f64 / 31.0))
        .collect()
}

/// Smallest `K ≤ 64` (with the best `s` on the grid) whose explosion bound is
/// at least `1 − ε`.
pub fn find_k(drift: &DriftSpec, epsilon: f64, delta: f64) -> Result<(i32, f64)> {
    if !(epsilon > 0.0 && epsilon < 1.0 && delta > 0.0) {
        return domain(format!(
            "need 0 < ε < 1 and δ > 0, got ε={epsilon}, δ={delta}"
        ));
    }
    for k in 1..=64 {
        let Ok(smax) = s_max(drift, k) else {
            continue;
        };
        let best = s_grid(smax)
            .into_iter()
            .filter_map(|s| {
                explosion_lower_bound(drift, k, delta, s)
                    .ok()
                    .map(|b| (b, s))
            })
            .max_by(|a, b| a.0.total_cmp(&b.0));
        if let Some((bound, s)) = best {
            if bound >= 1.0 - epsilon {
                return Ok((k, s));
            }
        }
    }
    Err(Error::NotFound(format!(
        "no K <= 64 gives an explosion bound >= {} for drift `{}`",
        1.0 - epsilon,
        drift.name()
    )))
}
