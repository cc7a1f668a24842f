//! Feynman–Kac moments of the driftless system started from `U_0 ≡ 1`:
//!
//! ```text
//! E[Π_i U_t(x_i)] = E exp( Σ_{i<j} ∫_0^t 1{X^i_s = X^j_s} ds )
//! ```
//!
//! for independent walks `X^i` started at `x_i` (Itô normalization; the
//! Stratonovich version would carry an extra `e^{kt/2}`). Walks are simulated
//! exactly from exponential holding times, so the only error is Monte Carlo.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::harness::replicate_map;
use crate::kernel::WalkSpec;
use crate::lattice::LatticeExperiment;
use crate::noise::mix;
use crate::stats::McEstimate;

/// Total pairwise time-at-equality of `k` walks over `[0, t]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionSample {
    pub k: usize,
    pub collision_time: f64,
}

/// Jump skeleton `(time, position)` of one rate-1 walk on `[0, t]`.
fn walk_skeleton(walk: &WalkSpec, start: i64, t: f64, rng: &mut ChaCha8Rng) -> Vec<(f64, i64)> {
    let r = walk.range() as i64;
    let pmf = walk.pmf();
    let mut out = vec![(0.0, start)];
    let mut now = 0.0;
    let mut x = start;
    loop {
        let u: f64 = rng.gen();
        now += -(1.0 - u).ln();
        if now >= t {
            return out;
        }
        let mut v: f64 = rng.gen();
        let mut z = r;
        for (i, &p) in pmf.iter().enumerate() {
            if v < p {
                z = i as i64 - r;
                break;
            }
            v -= p;
        }
        x += z;
        out.push((now, x));
    }
}

/// Exact pairwise collision time from the merged jump skeletons.
pub fn collision_time(paths: &[Vec<(f64, i64)>], t: f64) -> f64 {
    let k = paths.len();
    let mut pos: Vec<i64> = paths.iter().map(|p| p[0].1).collect();
    let mut next: Vec<usize> = vec![1; k];
    let mut now = 0.0;
    let mut total = 0.0;
    loop {
        let (mut who, mut when) = (usize::MAX, t);
        for i in 0..k {
            if let Some(&(s, _)) = paths[i].get(next[i]) {
                if s < when {
                    when = s;
                    who = i;
                }
            }
        }
        let mut pairs = 0usize;
        for i in 0..k {
            for j in i + 1..k {
                pairs += usize::from(pos[i] == pos[j]);
            }
        }
        total += pairs as f64 * (when - now);
        if who == usize::MAX {
            return total;
        }
        pos[who] = paths[who][next[who]].1;
        next[who] += 1;
        now = when;
    }
}

/// One replicate's collision time for walks from `starts`. Walk `i` of
/// replicate `r` always uses the same stream, so samples are coupled across
/// `t` and across the number of walks.
pub fn sample_collision(
    walk: &WalkSpec,
    starts: &[i64],
    t: f64,
    seed: u64,
    r: u64,
) -> CollisionSample {
    let rep = mix(seed, r);
    let paths: Vec<_> = starts
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix(rep, i as u64));
            walk_skeleton(walk, x, t, &mut rng)
        })
        .collect();
    CollisionSample {
        k: starts.len(),
        collision_time: collision_time(&paths, t),
    }
}

/// `E exp(Σ_{i<j} L^{ij}_t)` for walks from `starts`, i.e. `E[Π U_t(x_i)]`.
pub fn feynman_kac_mixed(
    walk: &WalkSpec,
    starts: &[i64],
    t: f64,
    reps: u64,
    seed: u64,
) -> Result<McEstimate> {
    if !(t >= 0.0 && t.is_finite()) {
        return domain(format!("time must be finite and >= 0, got {t}"));
    }
    if starts.is_empty() || starts.len() > 4 {
        return domain(format!(
            "between 1 and 4 walks supported, got {}",
            starts.len()
        ));
    }
    let xs = replicate_map(reps, |r| {
        Ok(sample_collision(walk, starts, t, seed, r)
            .collision_time
            .exp())
    })?;
    Ok(McEstimate::from_samples(&xs))
}

/// `E[U_t(x)^k]` for `U_0 ≡ 1`: `k` walks from the same site.
pub fn feynman_kac_moment(
    walk: &WalkSpec,
    k: usize,
    t: f64,
    reps: u64,
    seed: u64,
) -> Result<McEstimate> {
    if !(1..=4).contains(&k) {
        return domain(format!("moment order must be 1..=4, got {k}"));
    }
    feynman_kac_mixed(walk, &vec![0; k], t, reps, seed)
}

/// `[e^{k(k−3)t/2}, 2^{k/2} e^{4k²t}]`.
pub fn moment_bracket(k: u32, t: f64) -> (f64, f64) {
    let kf = k as f64;
    (
        (kf * (kf - 3.0) * t / 2.0).exp(),
        2f64.powf(kf / 2.0) * (4.0 * kf * kf * t).exp(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub k: u32,
    pub t: f64,
    pub oracle: McEstimate,
    pub lattice: McEstimate,
    /// `|E U_dt^k − E U_{dt/2}^k|` on coupled noise.
    pub dt_floor: f64,
    pub combined_stderr: f64,
    pub agree: bool,
    /// Set when the disagreement exceeds five combined standard errors.
    pub advice: Option<String>,
}

/// Compares the exact-jump oracle with the lattice estimator of
/// `E[U_t(0)^k]` (driftless, `U_0 ≡ 1`).
pub fn cross_validate(
    k: u32,
    t: f64,
    walk_reps: u64,
    seed: u64,
    lattice: &LatticeExperiment,
) -> Result<CrossValidation> {
    let oracle = feynman_kac_moment(&lattice.system.walk, k as usize, t, walk_reps, seed)?;
    let fine = LatticeExperiment {
        system: lattice.system.with_dt(lattice.system.dt / 2.0),
        ..lattice.clone()
    };
    let coarse_s = lattice.sample(&[t], &[0])?;
    let fine_s = fine.sample(&[t], &[0])?;
    let kk = k as i32;
    let lat = McEstimate::from_samples(
        &coarse_s
            .iter()
            .map(|r| r[0][0].powi(kk))
            .collect::<Vec<_>>(),
    );
    let diff = McEstimate::from_samples(
        &coarse_s
            .iter()
            .zip(&fine_s)
            .map(|(a, b)| a[0][0].powi(kk) - b[0][0].powi(kk))
            .collect::<Vec<_>>(),
    );
    let dt_floor = diff.mean.abs();
    let combined = (oracle.stderr.powi(2) + lat.stderr.powi(2)).sqrt();
    let gap = (oracle.mean - lat.mean).abs();
    let agree = gap <= 3.0 * combined + dt_floor;
    let advice = (gap > 5.0 * combined + dt_floor).then(|| {
        format!(
            "lattice and oracle differ by {gap:.3e} (> 5 combined stderr); halve dt from {}",
            lattice.system.dt
        )
    });
    Ok(CrossValidation {
        k,
        t,
        oracle,
        lattice: lat,
        dt_floor,
        combined_stderr: combined,
        agree,
        advice,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_walk_is_exactly_one() {
        let w = WalkSpec::preset("srw").unwrap();
        let e = feynman_kac_moment(&w, 1, 0.7, 50, 3).unwrap();
        assert_eq!(e.mean, 1.0);
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn collision_time_by_hand() {
        let a = vec![(0.0, 0), (0.5, 1)];
        let b = vec![(0.0, 0), (0.25, -1), (0.75, 1)];
        // equal on [0, 0.25) and [0.75, 1)
        assert!((collision_time(&[a, b], 1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn collision_time_in_range() {
        let w = WalkSpec::preset("lazy-srw").unwrap();
        for r in 0..50 {
            let s = sample_collision(&w, &[0, 0, 0], 0.5, 9, r);
            assert!(s.collision_time >= 0.0 && s.collision_time <= 3.0 * 0.5 + 1e-12);
        }
    }

    #[test]
    fn bracket_values() {
        let (lo, hi) = moment_bracket(2, 0.25);
        assert!((lo - (-0.25f64).exp()).abs() < 1e-15);
        assert!((hi - 2.0 * 4f64.exp()).abs() < 1e-12);
        assert_eq!(moment_bracket(3, 0.1).0, 1.0);
    }
}
