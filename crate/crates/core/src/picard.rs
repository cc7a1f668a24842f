//! β-localized mild solutions of the driftless system and their Picard
//! iterates
//!
//! ```text
//! U^{(β,0)} ≡ 1,
//! U^{(β,m+1)}_t(x) = 1 + Σ_{|j−x| ≤ r(t)} Σ_{s<t} G_{t−s}(j−x) U^{(β,m)}_s(j) ΔB_s(j),
//! ```
//!
//! with `r(t) = ⌊√(βt)⌋` and a left-point (Itô) sum over the time grid.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::replicate_map;
use crate::kernel::{kernel_slice, WalkSpec, DEFAULT_TOL};
use crate::lattice::{Boundary, InitialProfile, TruncatedSystem, Window};
use crate::noise::{Cell, NoiseField};
use crate::stats::{correlation, McEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicardConfig {
    pub beta: f64,
    pub n_iter: u32,
    pub t: f64,
    pub time_grid: f64,
}

impl PicardConfig {
    pub fn new(beta: f64, n_iter: u32, t: f64, time_grid: f64) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(Error::Config(format!("beta must be positive, got {beta}")));
        }
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Config(format!("t must be in [0, 1], got {t}")));
        }
        if t > 0.0 && (beta * t).sqrt() < 1.0 {
            return Err(Error::Config(format!(
                "localization radius √(βt) = {} is below 1",
                (beta * t).sqrt()
            )));
        }
        if !(time_grid > 0.0) {
            return Err(Error::Config(format!(
                "time grid must be positive, got {time_grid}"
            )));
        }
        let steps = (t / time_grid).round();
        if (steps * time_grid - t).abs() > 1e-9 * time_grid.max(t) {
            return Err(Error::Alignment { t, dt: time_grid });
        }
        Ok(PicardConfig {
            beta,
            n_iter,
            t,
            time_grid,
        })
    }

    pub fn steps(&self) -> usize {
        (self.t / self.time_grid).round() as usize
    }

    /// `⌊√(β s)⌋`.
    pub fn radius_at(&self, s: f64) -> usize {
        ((self.beta * s).sqrt() + 1e-12).floor() as usize
    }

    pub fn radius(&self) -> usize {
        self.radius_at(self.t)
    }

    /// Minimal spacing making iterates at distinct sites independent:
    /// `2·n_iter·(√(βt) + 1)`.
    pub fn independence_spacing(&self) -> f64 {
        2.0 * self.n_iter as f64 * ((self.beta * self.t).sqrt() + 1.0)
    }
}

/// `G_{l·g}(z)` for lags `l = 1..=steps` and `|z| ≤ radius`.
#[derive(Debug, Clone)]
pub struct LagTable {
    radius: usize,
    rows: Vec<Vec<f64>>,
}

impl LagTable {
    pub fn new(walk: &WalkSpec, cfg: &PicardConfig) -> Result<Self> {
        let radius = cfg.radius();
        let mut rows = vec![vec![0.0; 2 * radius + 1]];
        for l in 1..=cfg.steps() {
            let s = kernel_slice(walk, l as f64 * cfg.time_grid, DEFAULT_TOL)?;
            rows.push(
                (-(radius as i64)..=radius as i64)
                    .map(|z| s.value(z))
                    .collect(),
            );
        }
        Ok(LagTable { radius, rows })
    }

    #[inline]
    fn get(&self, lag: usize, z: i64) -> f64 {
        self.rows[lag][(z + self.radius as i64) as usize]
    }
}

/// One iterate level: values on `sites` at grid times `0..=steps`.
struct Level {
    sites: Vec<i64>,
    values: Vec<Vec<f64>>,
}

impl Level {
    fn index(&self, site: i64) -> usize {
        self.sites.binary_search(&site).expect("site in level")
    }
}

fn neighbourhood(targets: &[i64], reach: usize) -> Vec<i64> {
    let r = reach as i64;
    let set: BTreeSet<i64> = targets.iter().flat_map(|&x| x - r..=x + r).collect();
    set.into_iter().collect()
}

/// `out[m][i]` = `U^{(β,m)}_t(sites[i])` for `m = 0..=n_iter`.
pub fn build_iterates(
    cfg: &PicardConfig,
    table: &LagTable,
    sites: &[i64],
    noise: &NoiseField,
) -> Result<Vec<Vec<f64>>> {
    let n = cfg.steps();
    let r = cfg.radius();
    let iters = cfg.n_iter as usize;
    let mut out = vec![vec![1.0; sites.len()]];
    if iters == 0 {
        return Ok(out);
    }
    let level = noise.level_for(cfg.time_grid)?;
    let radii: Vec<usize> = (0..=n)
        .map(|i| cfg.radius_at(i as f64 * cfg.time_grid))
        .collect();

    // increments on the widest site set, reused by every level
    let widest = neighbourhood(sites, iters.saturating_sub(1) * r + r);
    let db: Vec<Vec<f64>> = widest
        .iter()
        .map(|&j| {
            (0..n)
                .map(|l| noise.cell_increment(j, Cell::new(level, l as u64)))
                .collect()
        })
        .collect();
    let db_index = |j: i64| widest.binary_search(&j).expect("site has increments");

    // level m (1 ≤ m < iters) is needed at all grid times on sites within
    // (iters − m)·r of the targets
    let mut prev = Level {
        sites: neighbourhood(sites, iters * r),
        values: Vec::new(),
    };
    prev.values = vec![vec![1.0; n + 1]; prev.sites.len()];
    for m in 1..=iters {
        let top = m == iters;
        let sites_m = if top {
            sites.to_vec()
        } else {
            neighbourhood(sites, (iters - m) * r)
        };
        // W_l(j) = U^{(m−1)}_{s_l}(j)·ΔB_l(j)
        let weights: Vec<Vec<f64>> = prev
            .sites
            .iter()
            .enumerate()
            .map(|(pi, &j)| {
                let d = &db[db_index(j)];
                (0..n).map(|l| prev.values[pi][l] * d[l]).collect()
            })
            .collect();
        let mut values = Vec::with_capacity(sites_m.len());
        for &x in &sites_m {
            let times: Vec<usize> = if top { vec![n] } else { (0..=n).collect() };
            let mut row = vec![1.0; if top { 1 } else { n + 1 }];
            for (slot, &i) in times.iter().enumerate() {
                let ri = radii[i] as i64;
                let mut acc = 0.0;
                for z in -ri..=ri {
                    let w = &weights[prev.index(x + z)];
                    for (l, wl) in w.iter().enumerate().take(i) {
                        acc += table.get(i - l, z) * wl;
                    }
                }
                row[slot] = 1.0 + acc;
            }
            values.push(row);
        }
        if top {
            out.push(values.iter().map(|v| v[0]).collect());
        } else {
            let idx: Vec<usize> = sites
                .iter()
                .map(|&x| sites_m.binary_search(&x).unwrap())
                .collect();
            out.push(idx.iter().map(|&k| values[k][n]).collect());
            prev = Level {
                sites: sites_m,
                values,
            };
        }
    }
    Ok(out)
}

/// A replicated Picard experiment.
#[derive(Debug, Clone)]
pub struct PicardExperiment {
    pub cfg: PicardConfig,
    pub walk: WalkSpec,
    pub noise: NoiseField,
    pub reps: u64,
}

impl PicardExperiment {
    /// `values[r][m][i]` for replicate `r`.
    pub fn sample(&self, sites: &[i64]) -> Result<Vec<Vec<Vec<f64>>>> {
        let table = LagTable::new(&self.walk, &self.cfg)?;
        replicate_map(self.reps, |r| {
            build_iterates(&self.cfg, &table, sites, &self.noise.for_replicate(r))
        })
    }

    /// `E[(U^{(β,m+1)}_t(0) − U^{(β,m)}_t(0))²]` for `m = 0..n_iter`.
    pub fn iterate_contraction_curve(&self) -> Result<Vec<McEstimate>> {
        let s = self.sample(&[0])?;
        Ok((0..self.cfg.n_iter as usize)
            .map(|m| {
                McEstimate::from_samples(
                    &s.iter()
                        .map(|r| (r[m + 1][0] - r[m][0]).powi(2))
                        .collect::<Vec<_>>(),
                )
            })
            .collect())
    }

    /// Max pairwise `|ρ̂|` of the top iterate at `site_count` sites spaced by
    /// `max(1, ⌈spacing·multiplier⌉)`.
    pub fn independence_check(&self, separation_multiplier: f64, site_count: usize) -> Result<f64> {
        if site_count < 2 {
            return Ok(0.0);
        }
        let d = ((self.cfg.independence_spacing() * separation_multiplier).ceil() as i64).max(1);
        let sites: Vec<i64> = (0..site_count as i64).map(|i| i * d).collect();
        let top = self.cfg.n_iter as usize;
        let s = self.sample(&sites)?;
        let cols: Vec<Vec<f64>> = (0..site_count)
            .map(|i| s.iter().map(|r| r[top][i]).collect())
            .collect();
        let mut worst: f64 = 0.0;
        for i in 0..site_count {
            for j in i + 1..site_count {
                worst = worst.max(correlation(&cols[i], &cols[j]).abs());
            }
        }
        Ok(worst)
    }

    /// Correlation of the top iterate at sites 0 and 1.
    pub fn adjacent_correlation(&self) -> Result<f64> {
        let top = self.cfg.n_iter as usize;
        let s = self.sample(&[0, 1])?;
        let a: Vec<f64> = s.iter().map(|r| r[top][0]).collect();
        let b: Vec<f64> = s.iter().map(|r| r[top][1]).collect();
        Ok(correlation(&a, &b))
    }

    /// `P(max_i U^{(β,n)}_t(x_i) < Ξ)` over `n_probes` independent-spaced
    /// probes, against the factorized `(1 − q̂)^N`.
    pub fn spatial_growth_experiment(&self, xi: f64, n_probes: usize) -> Result<SpatialGrowth> {
        let d = self.cfg.independence_spacing().ceil() as i64;
        let sites: Vec<i64> = (0..n_probes as i64).map(|i| i * d.max(1)).collect();
        let top = self.cfg.n_iter as usize;
        let s = self.sample(&sites)?;
        let all_below: Vec<f64> = s
            .iter()
            .map(|r| f64::from(u8::from(r[top].iter().all(|&v| v < xi))))
            .collect();
        let exceed: Vec<f64> = s
            .iter()
            .flat_map(|r| r[top].iter().map(|&v| f64::from(u8::from(v >= xi))))
            .collect();
        let p_max_below = McEstimate::from_samples(&all_below);
        let q = McEstimate::from_samples(&exceed);
        let nf = n_probes as f64;
        let factorized = (1.0 - q.mean).powf(nf);
        let factorized_stderr = nf * (1.0 - q.mean).powf(nf - 1.0) * q.stderr;
        Ok(SpatialGrowth {
            n_probes,
            xi,
            p_max_below,
            single_site_exceed: q,
            factorized,
            factorized_stderr,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrowth {
    pub n_probes: usize,
    pub xi: f64,
    pub p_max_below: McEstimate,
    pub single_site_exceed: McEstimate,
    pub factorized: f64,
    pub factorized_stderr: f64,
}

impl SpatialGrowth {
    pub fn combined_stderr(&self) -> f64 {
        (self.p_max_below.stderr.powi(2) + self.factorized_stderr.powi(2)).sqrt()
    }
}

/// `(𝓡 e √t/√β)^{2√(βt)/𝓡}`; values ≥ 1 mean the bound is vacuous.
pub fn locality_bound(range: usize, t: f64, beta: f64) -> f64 {
    let r = range as f64;
    (r * std::f64::consts::E * t.sqrt() / beta.sqrt()).powf(2.0 * (beta * t).sqrt() / r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalityGap {
    pub betas: Vec<f64>,
    pub gaps: Vec<McEstimate>,
    pub bounds: Vec<f64>,
    pub dt_floor: McEstimate,
}

/// `E[(U_t(0) − U^{(β,n)}_t(0))²]` per β, with `U` from the direct driftless
/// lattice scheme on the same noise and step `time_grid`, plus that scheme's
/// own floor `E[(U_dt − U_{dt/2})²]`.
pub fn locality_gap(
    cfg: &PicardConfig,
    walk: &WalkSpec,
    beta_ladder: &[f64],
    noise: &NoiseField,
    reps: u64,
) -> Result<LocalityGap> {
    let dt = cfg.time_grid;
    let direct = TruncatedSystem::driftless(walk.clone(), dt)?;
    let half = direct.with_dt(dt / 2.0);
    let window = Window::for_horizon(walk, cfg.t, 0);
    let cfgs: Vec<PicardConfig> = beta_ladder
        .iter()
        .map(|&b| PicardConfig::new(b, cfg.n_iter, cfg.t, dt))
        .collect::<Result<_>>()?;
    let tables: Vec<LagTable> = cfgs
        .iter()
        .map(|c| LagTable::new(walk, c))
        .collect::<Result<_>>()?;
    let one = InitialProfile::Constant(1.0);
    let rows = replicate_map(reps, |r| {
        let nz = noise.for_replicate(r);
        let u = direct
            .run(&one, window, Boundary::CopyExtension, cfg.t, &nz)?
            .get(0);
        let u2 = half
            .run(&one, window, Boundary::CopyExtension, cfg.t, &nz)?
            .get(0);
        let mut row = vec![(u - u2).powi(2)];
        for (c, tab) in cfgs.iter().zip(&tables) {
            let it = build_iterates(c, tab, &[0], &nz)?;
            row.push((u - it[c.n_iter as usize][0]).powi(2));
        }
        Ok(row)
    })?;
    let col = |i: usize| McEstimate::from_samples(&rows.iter().map(|r| r[i]).collect::<Vec<_>>());
    Ok(LocalityGap {
        betas: beta_ladder.to_vec(),
        gaps: (1..=beta_ladder.len()).map(col).collect(),
        bounds: beta_ladder
            .iter()
            .map(|&b| locality_bound(walk.range(), cfg.t, b))
            .collect(),
        dt_floor: col(0),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetVsNoise {
    pub p: i64,
    pub m: f64,
    pub t: f64,
    pub g: f64,
    /// `P(|noise| > (M/2)·G_t(p))`.
    pub exceed: McEstimate,
    /// `E[noise²]`.
    pub second_moment: McEstimate,
    /// `min(1, 4t·e^t)`.
    pub exceed_bound: f64,
    /// `M²·G_t(p)²·t·e^t`.
    pub second_moment_bound: f64,
    /// `noise/M` per replicate (scale-free).
    pub normalized: Vec<f64>,
}

/// Driftless direct run from `M·1_{p}`; the noise term is `U_t(0) − M·G_t(p)`.
pub fn det_vs_noise_experiment(
    walk: &WalkSpec,
    p: i64,
    m: f64,
    t: f64,
    noise: &NoiseField,
    reps: u64,
) -> Result<DetVsNoise> {
    let dt = noise.dt();
    let sys = TruncatedSystem::driftless(walk.clone(), dt)?;
    let window = Window::for_horizon(walk, t, p.unsigned_abs() as usize);
    let g = kernel_slice(walk, t, DEFAULT_TOL)?.value(p);
    let profile = InitialProfile::Spike { mass: m, site: p };
    let noise_terms = replicate_map(reps, |r| {
        let st = sys.run(
            &profile,
            window,
            Boundary::Absorbing,
            t,
            &noise.for_replicate(r),
        )?;
        Ok(st.get(0) - m * g)
    })?;
    let thr = 0.5 * m * g;
    let exceed = McEstimate::from_samples(
        &noise_terms
            .iter()
            .map(|&x| f64::from(u8::from(x.abs() > thr)))
            .collect::<Vec<_>>(),
    );
    let second_moment =
        McEstimate::from_samples(&noise_terms.iter().map(|x| x * x).collect::<Vec<_>>());
    Ok(DetVsNoise {
        p,
        m,
        t,
        g,
        exceed,
        second_moment,
        exceed_bound: (4.0 * t * t.exp()).min(1.0),
        second_moment_bound: m * m * g * g * t * t.exp(),
        normalized: noise_terms.iter().map(|x| x / m).collect(),
    })
}
