//! Counter-based Gaussian noise keyed by `(seed, site, step)`.
//!
//! Every increment is a pure function of its key, so two schemes that walk
//! the same Brownian motions in different orders (site-major vs. time-major,
//! coarse steps vs. refined substeps) see the identical paths.
//!
//! Time is addressed through [`Cell`]s: a cell at `level` ℓ covers
//! `[index·h, (index+1)·h)` with `h = dt·2^{-ℓ}`. Non-positive levels are
//! unions of base steps; positive levels are Brownian-bridge refinements of a
//! single base step (Lévy midpoint construction), so refining a cell never
//! changes the increment of its parent.

use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};

const BRIDGE_TAG: u64 = 1 << 62;
const UNIFORM_TAG: u64 = 2 << 62;

/// Deepest dyadic refinement of a base step.
pub const MAX_LEVEL: i32 = 48;

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Splittable seed derivation: replicate `r` of `seed`.
pub fn mix(seed: u64, r: u64) -> u64 {
    splitmix(
        splitmix(seed ^ 0x6A09_E667_F3BC_C908)
            .wrapping_add(splitmix(r.wrapping_add(0xBB67_AE85_84CA_A73B))),
    )
}

/// Uniform on the open interval (0, 1) from the top 53 bits.
#[inline]
fn to_open_unit(h: u64) -> f64 {
    ((h >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
}

/// Standard normal quantile.
#[inline]
pub fn normal_quantile(u: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * u)
}

/// A dyadic time cell `[index·h, (index+1)·h)`, `h = dt·2^{-level}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Cell {
    pub level: i32,
    pub index: u64,
}

impl Cell {
    pub fn new(level: i32, index: u64) -> Self {
        Cell { level, index }
    }

    pub fn len(&self, dt: f64) -> f64 {
        dt * (-self.level as f64).exp2()
    }

    pub fn start(&self, dt: f64) -> f64 {
        self.index as f64 * self.len(dt)
    }

    pub fn end(&self, dt: f64) -> f64 {
        (self.index + 1) as f64 * self.len(dt)
    }

    pub fn children(&self) -> [Cell; 2] {
        [
            Cell::new(self.level + 1, 2 * self.index),
            Cell::new(self.level + 1, 2 * self.index + 1),
        ]
    }
}

/// Reproducible field of Brownian motions `B_t(site)` sampled on a grid of
/// spacing `dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseField {
    seed: u64,
    dt: f64,
    silent: bool,
}

impl NoiseField {
    pub fn new(seed: u64, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!(
                "noise dt must be positive, got {dt}"
            )));
        }
        Ok(NoiseField {
            seed,
            dt,
            silent: false,
        })
    }

    /// A field whose increments are all zero (the `ΔB ≡ 0` test configuration).
    pub fn silent(dt: f64) -> Result<Self> {
        let mut f = Self::new(0, dt)?;
        f.silent = true;
        Ok(f)
    }

    /// Field for replicate `r`; distinct replicates get disjoint streams.
    pub fn for_replicate(&self, r: u64) -> Self {
        NoiseField {
            seed: mix(self.seed, r),
            ..*self
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn is_silent(&self) -> bool {
        self.silent
    }

    /// Same seed, different base spacing.
    pub fn with_dt(&self, dt: f64) -> Result<Self> {
        let mut f = Self::new(self.seed, dt)?;
        f.silent = self.silent;
        Ok(f)
    }

    #[inline]
    fn key(&self, site: i64, a: u64, b: u64) -> u64 {
        let mut h = splitmix(self.seed);
        h = splitmix(h ^ site as u64);
        h = splitmix(h ^ a);
        splitmix(h ^ b)
    }

    #[inline]
    fn normal(&self, site: i64, step: u64, lane: u64) -> f64 {
        normal_quantile(to_open_unit(self.key(site, step, lane)))
    }

    /// Standard-normal variate for base step `step` at `site`.
    #[inline]
    pub fn standard_normal(&self, site: i64, step: u64) -> f64 {
        if self.silent {
            return 0.0;
        }
        self.normal(site, step, 0)
    }

    /// `B_{(step+1)dt}(site) − B_{step·dt}(site)`, an N(0, dt) variate.
    #[inline]
    pub fn increment(&self, site: i64, step: u64) -> f64 {
        if self.silent {
            return 0.0;
        }
        self.dt.sqrt() * self.normal(site, step, 0)
    }

    /// Brownian increment over a dyadic cell.
    pub fn cell_increment(&self, site: i64, cell: Cell) -> f64 {
        if self.silent {
            return 0.0;
        }
        if cell.level <= 0 {
            let span = 1u64 << (-cell.level) as u32;
            let first = cell.index * span;
            return (first..first + span).map(|s| self.increment(site, s)).sum();
        }
        let level = cell.level.min(MAX_LEVEL) as u32;
        let step = cell.index >> level;
        let within = cell.index & ((1u64 << level) - 1);
        let mut d = self.increment(site, step);
        let mut h = self.dt;
        for l in 1..=level {
            let child = within >> (level - l);
            let parent = child >> 1;
            let z = self.normal(site, step, BRIDGE_TAG | ((l as u64) << 40) | parent);
            let half = 0.5 * h.sqrt() * z;
            d = if child & 1 == 0 {
                0.5 * d + half
            } else {
                0.5 * d - half
            };
            h *= 0.5;
        }
        d
    }

    /// Auxiliary uniform attached to a cell, independent of every Gaussian.
    pub fn cell_uniform(&self, site: i64, cell: Cell, tag: u32) -> f64 {
        let lane = UNIFORM_TAG | (((cell.level + 1024) as u64) << 32) | tag as u64;
        to_open_unit(self.key(site, cell.index, lane))
    }

    /// Level ℓ with `h = dt·2^{-ℓ}`, or an alignment error.
    pub fn level_for(&self, h: f64) -> Result<i32> {
        let ratio = self.dt / h;
        let level = ratio.log2().round();
        if !h.is_finite() || h <= 0.0 || ((level.exp2() - ratio) / ratio).abs() > 1e-9 {
            return Err(Error::Alignment { t: h, dt: self.dt });
        }
        Ok(level as i32)
    }

    /// Number of base steps covering `[0, t)`, or an alignment error.
    pub fn steps_for(&self, t: f64) -> Result<u64> {
        let k = (t / self.dt).round();
        if t < 0.0 || (k * self.dt - t).abs() > 1e-9 * self.dt.max(t) {
            return Err(Error::Alignment { t, dt: self.dt });
        }
        Ok(k as u64)
    }

    /// `B_t(site)` for `t` on the grid; `B_0 = 0`.
    pub fn brownian_at(&self, site: i64, t: f64) -> Result<f64> {
        let n = self.steps_for(t)?;
        Ok((0..n).map(|s| self.increment(site, s)).sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_key() {
        let f = NoiseField::new(7, 1e-3).unwrap();
        assert_eq!(f.increment(3, 11), f.increment(3, 11));
        assert_ne!(f.increment(3, 11), f.increment(3, 12));
        assert_ne!(f.increment(3, 11), f.increment(4, 11));
        let g = NoiseField::new(7, 1e-3).unwrap();
        assert_eq!(f.increment(-5, 0), g.increment(-5, 0));
    }

    #[test]
    fn replicate_streams_differ() {
        let f = NoiseField::new(1, 1e-2).unwrap();
        let a = f.for_replicate(0);
        let b = f.for_replicate(1);
        assert_ne!(a.seed(), b.seed());
        assert_ne!(a.increment(0, 0), b.increment(0, 0));
    }

    #[test]
    fn refinement_preserves_parent() {
        let f = NoiseField::new(99, 0.01).unwrap();
        for level in 0..6 {
            for idx in 0..(1u64 << level) {
                let parent = Cell::new(level, 5 * (1u64 << level) + idx);
                let [l, r] = parent.children();
                let sum = f.cell_increment(2, l) + f.cell_increment(2, r);
                assert!((sum - f.cell_increment(2, parent)).abs() < 1e-14);
            }
        }
        let coarse = Cell::new(-2, 3);
        let direct: f64 = (12..16).map(|s| f.increment(2, s)).sum();
        assert_eq!(f.cell_increment(2, coarse), direct);
    }

    #[test]
    fn silent_field_is_zero() {
        let f = NoiseField::silent(0.1).unwrap();
        assert_eq!(f.increment(1, 1), 0.0);
        assert_eq!(f.cell_increment(1, Cell::new(3, 17)), 0.0);
        assert_eq!(f.brownian_at(0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn brownian_alignment() {
        let f = NoiseField::new(3, 0.25).unwrap();
        assert_eq!(f.brownian_at(0, 0.0).unwrap(), 0.0);
        assert!(matches!(
            f.brownian_at(0, 0.3),
            Err(Error::Alignment { .. })
        ));
        let b = f.brownian_at(0, 0.5).unwrap();
        assert_eq!(b, f.increment(0, 0) + f.increment(0, 1));
        assert_eq!(f.level_for(0.0625).unwrap(), 2);
        assert_eq!(f.level_for(1.0).unwrap(), -2);
        assert!(f.level_for(0.1).is_err());
    }

    #[test]
    fn quantile_symmetry() {
        assert!(normal_quantile(0.5).abs() < 1e-15);
        assert!((normal_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-12);
        assert!((normal_quantile(0.1) + normal_quantile(0.9)).abs() < 1e-13);
    }
}
