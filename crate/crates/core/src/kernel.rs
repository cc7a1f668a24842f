//! The finite-range continuous-time random walk and its transition kernel
//! `G_t(z) = P(X_t = z)`, computed by the Poisson series of convolution powers
//! `G_t = Σ_m e^{-t} t^m/m! · p^{*m}`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::lattice::{Boundary, LatticeState};

/// Default series truncation tolerance.
pub const DEFAULT_TOL: f64 = 1e-12;

/// Jump law of the walk: `pmf[z + range]` is `P(Z₁ = z)` for `|z| ≤ range`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkSpec {
    range: usize,
    pmf: Vec<f64>,
}

impl WalkSpec {
    /// `entries` are `(z, P(Z₁ = z))`; unlisted steps have probability 0.
    pub fn new(range: usize, entries: &[(i64, f64)]) -> Result<Self> {
        if range == 0 {
            return Err(Error::Config("walk range must be positive".into()));
        }
        let mut pmf = vec![0.0; 2 * range + 1];
        for &(z, p) in entries {
            if z.unsigned_abs() as usize > range {
                return Err(Error::Config(format!("step {z} outside range {range}")));
            }
            if !(p >= 0.0) {
                return Err(Error::Config(format!(
                    "negative probability {p} for step {z}"
                )));
            }
            pmf[(z + range as i64) as usize] += p;
        }
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("jump probabilities sum to {total}")));
        }
        Ok(WalkSpec { range, pmf })
    }

    /// `"srw"`, `"lazy-srw"` or `"range2"`.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "srw" => Self::new(1, &[(-1, 0.5), (1, 0.5)]),
            "lazy-srw" => Self::new(1, &[(-1, 0.25), (0, 0.5), (1, 0.25)]),
            "range2" => Self::new(2, &[(-2, 0.125), (-1, 0.375), (1, 0.375), (2, 0.125)]),
            other => Err(Error::Config(format!(
                "unknown walk preset `{other}` (srw, lazy-srw, range2)"
            ))),
        }
    }

    pub fn range(&self) -> usize {
        self.range
    }

    pub fn prob(&self, z: i64) -> f64 {
        let r = self.range as i64;
        if z.abs() > r {
            0.0
        } else {
            self.pmf[(z + r) as usize]
        }
    }

    /// Non-zero `(z, p)` pairs with `z ≠ 0`; the generator ignores `z = 0`.
    pub fn moves(&self) -> Vec<(i64, f64)> {
        let r = self.range as i64;
        (-r..=r)
            .filter(|&z| z != 0 && self.prob(z) > 0.0)
            .map(|z| (z, self.prob(z)))
            .collect()
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }
}

/// `G_t` on offsets `[-half_width, half_width]` plus the truncated mass.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSlice {
    pub t: f64,
    pub half_width: usize,
    pub values: Vec<f64>,
    pub tail_mass: f64,
    /// Series cutoff `M`.
    pub cutoff: usize,
}

impl KernelSlice {
    #[inline]
    pub fn value(&self, offset: i64) -> f64 {
        let hw = self.half_width as i64;
        if offset.abs() > hw {
            0.0
        } else {
            self.values[(offset + hw) as usize]
        }
    }

    pub fn offsets(&self) -> std::ops::RangeInclusive<i64> {
        -(self.half_width as i64)..=self.half_width as i64
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum()
    }
}

fn convolve_pmfs(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Poisson(t) weights `w_0..=w_M` for the smallest `M` with `P(N_t > M) < tol`,
/// and that tail probability.
fn poisson_weights(t: f64, tol: f64) -> (Vec<f64>, f64) {
    let mut weights = vec![(-t).exp()];
    let mut cdf = weights[0];
    loop {
        let m = weights.len();
        let tail = poisson_tail_after(t, m - 1, weights[m - 1]);
        if tail < tol {
            let _ = cdf;
            return (weights, tail);
        }
        let next = weights[m - 1] * t / m as f64;
        cdf += next;
        weights.push(next);
    }
}

/// `Σ_{m > M} e^{-t} t^m/m!` summed directly from `w_M`.
fn poisson_tail_after(t: f64, m_cut: usize, w_cut: f64) -> f64 {
    let mut term = w_cut;
    let mut sum = 0.0;
    let mut m = m_cut;
    loop {
        m += 1;
        term *= t / m as f64;
        sum += term;
        if term < 1e-30 || (m as f64 > t && term < sum * 1e-18) {
            return sum;
        }
    }
}

fn validate_time(t: f64, tol: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite() && t <= 700.0) {
        return domain(format!("kernel time must be in [0, 700], got {t}"));
    }
    if !(tol > 0.0 && tol < 1.0) {
        return domain(format!("kernel tolerance must be in (0, 1), got {tol}"));
    }
    Ok(())
}

fn assemble(walk: &WalkSpec, t: f64, tol: f64, powers: &[Vec<f64>]) -> KernelSlice {
    let (weights, tail_mass) = poisson_weights(t, tol);
    let cutoff = weights.len() - 1;
    let hw = cutoff * walk.range;
    let mut values = vec![0.0; 2 * hw + 1];
    for (m, w) in weights.iter().enumerate() {
        let p = &powers[m];
        let off = hw - m * walk.range;
        for (i, v) in p.iter().enumerate() {
            values[off + i] += w * v;
        }
    }
    KernelSlice {
        t,
        half_width: hw,
        values,
        tail_mass,
        cutoff,
    }
}

fn powers_up_to(walk: &WalkSpec, m: usize) -> Vec<Vec<f64>> {
    let mut powers = vec![vec![1.0]];
    while powers.len() <= m {
        let next = convolve_pmfs(powers.last().unwrap(), walk.pmf());
        powers.push(next);
    }
    powers
}

/// Uncached kernel slice.
pub fn kernel_slice(walk: &WalkSpec, t: f64, tol: f64) -> Result<KernelSlice> {
    validate_time(t, tol)?;
    let (weights, _) = poisson_weights(t, tol);
    let powers = powers_up_to(walk, weights.len() - 1);
    Ok(assemble(walk, t, tol, &powers))
}

/// A walk together with its convolution-power and slice caches.
#[derive(Debug)]
pub struct Kernel {
    walk: WalkSpec,
    powers: Mutex<Vec<Vec<f64>>>,
    slices: RwLock<HashMap<(u64, u64), Arc<KernelSlice>>>,
}

impl Kernel {
    pub fn new(walk: WalkSpec) -> Self {
        Kernel {
            walk,
            powers: Mutex::new(vec![vec![1.0]]),
            slices: RwLock::new(HashMap::new()),
        }
    }

    pub fn walk(&self) -> &WalkSpec {
        &self.walk
    }

    /// Cached `G_t`; identical keys always produce identical slices.
    pub fn slice(&self, t: f64, tol: f64) -> Result<Arc<KernelSlice>> {
        validate_time(t, tol)?;
        let key = (t.to_bits(), tol.to_bits());
        if let Some(s) = self.slices.read().unwrap().get(&key) {
            return Ok(s.clone());
        }
        let (weights, _) = poisson_weights(t, tol);
        let slice = {
            let mut powers = self.powers.lock().unwrap();
            while powers.len() < weights.len() {
                let next = convolve_pmfs(powers.last().unwrap(), self.walk.pmf());
                powers.push(next);
            }
            assemble(&self.walk, t, tol, &powers)
        };
        let slice = Arc::new(slice);
        self.slices.write().unwrap().insert(key, slice.clone());
        Ok(slice)
    }
}

/// `(G_t * u)(x) = Σ_z G_t(z) u(x + z)` over the whole window, with values
/// beyond the window supplied by the state's boundary rule.
pub fn convolve(slice: &KernelSlice, profile: &LatticeState) -> Result<LatticeState> {
    if slice.half_width > profile.margin {
        return Err(Error::WindowTooNarrow {
            required: slice.half_width,
            available: profile.margin,
        });
    }
    let hw = slice.half_width;
    let n = profile.values.len();
    let padded = profile.padded(hw);
    let mut out = vec![0.0; n];
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (k, g) in slice.values.iter().enumerate() {
            acc += g * padded[i + k];
        }
        *o = acc;
    }
    Ok(LatticeState {
        values: out,
        ..profile.clone()
    })
}

/// `G_a * G_b` as a plain offset array (Chapman–Kolmogorov checks).
pub fn compose(a: &KernelSlice, b: &KernelSlice) -> Vec<f64> {
    convolve_pmfs(&a.values, &b.values)
}

/// `Σ_x |G_{t+h}(x) − G_t(x)|`.
pub fn l1_time_difference(walk: &WalkSpec, t: f64, h: f64, tol: f64) -> Result<f64> {
    if !(t >= 0.0 && h >= 0.0 && t + h <= 1.0) {
        return domain(format!("need 0 <= t < t+h <= 1, got t={t}, h={h}"));
    }
    if h == 0.0 {
        return Ok(0.0);
    }
    let a = kernel_slice(walk, t + h, tol)?;
    let b = kernel_slice(walk, t, tol)?;
    let hw = a.half_width.max(b.half_width) as i64;
    Ok((-hw..=hw).map(|z| (a.value(z) - b.value(z)).abs()).sum())
}

/// Chernoff bound `exp(θ − t − θ ln(θ/t))` on `P(N_t > θ)`.
pub fn poisson_jump_tail(t: f64, threshold: f64) -> Result<f64> {
    if !(threshold > t) || t < 0.0 {
        return domain(format!(
            "Chernoff bound needs threshold > t >= 0, got t={t}, threshold={threshold}"
        ));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    Ok((threshold - t - threshold * (threshold / t).ln()).exp())
}

/// Smallest margin `m` (in sites) with `poisson_jump_tail(t, m/R) < budget`.
pub fn margin_for_budget(walk: &WalkSpec, t: f64, budget: f64) -> usize {
    let r = walk.range() as f64;
    let mut m = walk.range();
    loop {
        let theta = m as f64 / r;
        if theta > t
            && poisson_jump_tail(t, theta)
                .map(|b| b < budget)
                .unwrap_or(false)
        {
            return m;
        }
        m += 1;
    }
}

impl LatticeState {
    /// Values extended by `pad` sites on each side per the boundary rule.
    pub(crate) fn padded(&self, pad: usize) -> Vec<f64> {
        let n = self.values.len();
        let mut out = Vec::with_capacity(n + 2 * pad);
        let (left, right) = match self.boundary {
            Boundary::CopyExtension => (self.values[0], self.values[n - 1]),
            Boundary::Absorbing => (0.0, 0.0),
        };
        out.extend(std::iter::repeat_n(left, pad));
        out.extend_from_slice(&self.values);
        out.extend(std::iter::repeat_n(right, pad));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_mass_at_time_zero() {
        let w = WalkSpec::preset("srw").unwrap();
        let s = kernel_slice(&w, 0.0, DEFAULT_TOL).unwrap();
        assert_eq!(s.value(0), 1.0);
        assert_eq!(s.half_width, 0);
        assert_eq!(s.tail_mass, 0.0);
    }

    #[test]
    fn symmetric_walk_symmetric_kernel() {
        let w = WalkSpec::preset("srw").unwrap();
        let s = kernel_slice(&w, 1.0, DEFAULT_TOL).unwrap();
        for z in 1..=s.half_width as i64 {
            assert!((s.value(z) - s.value(-z)).abs() < 1e-16);
        }
    }

    #[test]
    fn walk_validation() {
        assert!(WalkSpec::new(1, &[(1, 0.5), (-1, 0.4)]).is_err());
        assert!(WalkSpec::new(1, &[(2, 1.0)]).is_err());
        assert!(WalkSpec::new(0, &[]).is_err());
        assert!(WalkSpec::preset("nope").is_err());
        let lazy = WalkSpec::preset("lazy-srw").unwrap();
        assert_eq!(lazy.moves(), vec![(-1, 0.25), (1, 0.25)]);
    }

    #[test]
    fn stay_probability_dominates_no_jump() {
        for name in ["srw", "lazy-srw", "range2"] {
            let w = WalkSpec::preset(name).unwrap();
            for n in [1, 2, 4, 8, 32] {
                let h = 1.0 / n as f64;
                let s = kernel_slice(&w, h, DEFAULT_TOL).unwrap();
                assert!(s.value(0) >= (-h).exp());
            }
        }
    }

    #[test]
    fn chernoff_domain() {
        assert!(poisson_jump_tail(1.0, 1.0).is_err());
        assert!(poisson_jump_tail(1.0, 0.5).is_err());
        let near = poisson_jump_tail(1.0, 1.0 + 1e-9).unwrap();
        assert!((near - 1.0).abs() < 1e-8);
    }

    #[test]
    fn narrow_window_is_rejected() {
        let w = WalkSpec::preset("srw").unwrap();
        let s = kernel_slice(&w, 0.5, DEFAULT_TOL).unwrap();
        let st = LatticeState::constant(20, 2, 1.0, Boundary::CopyExtension);
        assert!(matches!(
            convolve(&s, &st),
            Err(Error::WindowTooNarrow { .. })
        ));
    }

    #[test]
    fn cache_returns_same_slice() {
        let k = Kernel::new(WalkSpec::preset("range2").unwrap());
        let a = k.slice(0.25, DEFAULT_TOL).unwrap();
        let b = k.slice(0.25, DEFAULT_TOL).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        let direct = kernel_slice(k.walk(), 0.25, DEFAULT_TOL).unwrap();
        assert_eq!(*a, direct);
    }
}
