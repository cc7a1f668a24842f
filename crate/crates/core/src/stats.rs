//! Monte Carlo estimators and the small statistical toolbox used by the
//! experiment checks.

use serde::{Deserialize, Serialize};

/// Monte Carlo mean with its standard error and 95% interval.
///
/// `m2` is the sum of squared deviations from the mean; it makes partial
/// estimates mergeable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub reps: u64,
    pub ci95: (f64, f64),
    pub m2: f64,
}

impl Default for McEstimate {
    fn default() -> Self {
        Self::empty()
    }
}

impl McEstimate {
    pub fn empty() -> Self {
        McEstimate {
            mean: 0.0,
            stderr: 0.0,
            reps: 0,
            ci95: (0.0, 0.0),
            m2: 0.0,
        }
    }

    fn from_parts(reps: u64, mean: f64, m2: f64) -> Self {
        if reps == 0 {
            return Self::empty();
        }
        let stderr = if reps > 1 {
            (m2 / (reps - 1) as f64 / reps as f64).sqrt()
        } else {
            0.0
        };
        McEstimate {
            mean,
            stderr,
            reps,
            ci95: (mean - 1.96 * stderr, mean + 1.96 * stderr),
            m2,
        }
    }

    /// Estimate from a sample, accumulated left to right (Welford).
    pub fn from_samples(samples: &[f64]) -> Self {
        let mut acc = Accumulator::default();
        for &x in samples {
            acc.push(x);
        }
        acc.estimate()
    }

    /// Pools two partial estimates (Chan et al. update).
    pub fn merge(&self, other: &McEstimate) -> McEstimate {
        if self.reps == 0 {
            return *other;
        }
        if other.reps == 0 {
            return *self;
        }
        let n = self.reps + other.reps;
        let (na, nb) = (self.reps as f64, other.reps as f64);
        let delta = other.mean - self.mean;
        let mean = (na * self.mean + nb * other.mean) / n as f64;
        let m2 = self.m2 + other.m2 + delta * delta * na * nb / n as f64;
        Self::from_parts(n, mean, m2)
    }

    pub fn sample_std(&self) -> f64 {
        if self.reps > 1 {
            (self.m2 / (self.reps - 1) as f64).sqrt()
        } else {
            0.0
        }
    }

    /// `|self − target| ≤ k·stderr + slack`.
    pub fn within(&self, target: f64, k: f64, slack: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr + slack
    }
}

/// Associative merge of any number of partial estimates.
pub fn merge_all<'a>(parts: impl IntoIterator<Item = &'a McEstimate>) -> McEstimate {
    parts
        .into_iter()
        .fold(McEstimate::empty(), |acc, p| acc.merge(p))
}

/// Streaming mean/variance accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct Accumulator {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Accumulator {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn estimate(&self) -> McEstimate {
        McEstimate::from_parts(self.n, self.mean, self.m2)
    }
}

/// Sample Pearson correlation; 0 when either side is constant.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    if a.len() < 2 {
        return 0.0;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

/// Ordinary least squares `y ≈ intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    if x.len() != y.len() || x.len() < 2 || y.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Some(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Mann–Kendall trend statistic with its one-sided p-value for an upward
/// trend. Exact permutation distribution for `n ≤ 10`, normal approximation
/// with continuity correction beyond.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannKendall {
    pub s: i64,
    pub p_upward: f64,
}

impl MannKendall {
    pub fn upward_trend(&self, alpha: f64) -> bool {
        self.p_upward < alpha
    }
}

fn kendall_s(values: &[f64]) -> i64 {
    let mut s = 0i64;
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            s += match values[j].partial_cmp(&values[i]) {
                Some(std::cmp::Ordering::Greater) => 1,
                Some(std::cmp::Ordering::Less) => -1,
                _ => 0,
            };
        }
    }
    s
}

/// Distribution of S over all permutations of `n` distinct values
/// (counts of inversions, shifted).
fn exact_s_counts(n: usize) -> Vec<u64> {
    // counts[k] = permutations with k inversions
    let max_inv = n * (n - 1) / 2;
    let mut counts = vec![0u64; max_inv + 1];
    counts[0] = 1;
    for m in 2..=n {
        let mut next = vec![0u64; max_inv + 1];
        for (k, &c) in counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            for add in 0..m {
                if k + add <= max_inv {
                    next[k + add] += c;
                }
            }
        }
        counts = next;
    }
    counts
}

pub fn mann_kendall(values: &[f64]) -> MannKendall {
    let n = values.len();
    let s = kendall_s(values);
    if n < 2 {
        return MannKendall { s, p_upward: 1.0 };
    }
    if n <= 10 {
        // S = pairs_up − pairs_down = max_inv − 2·inversions
        let counts = exact_s_counts(n);
        let total: u64 = counts.iter().sum();
        let max_inv = (n * (n - 1) / 2) as i64;
        let tail: u64 = counts
            .iter()
            .enumerate()
            .filter(|(k, _)| max_inv - 2 * (*k as i64) >= s)
            .map(|(_, c)| *c)
            .sum();
        return MannKendall {
            s,
            p_upward: tail as f64 / total as f64,
        };
    }
    let nf = n as f64;
    let var = nf * (nf - 1.0) * (2.0 * nf + 5.0) / 18.0;
    let z = if s > 0 {
        (s as f64 - 1.0) / var.sqrt()
    } else if s < 0 {
        (s as f64 + 1.0) / var.sqrt()
    } else {
        0.0
    };
    let p = 0.5 * statrs::function::erf::erfc(z / std::f64::consts::SQRT_2);
    MannKendall { s, p_upward: p }
}

/// Sample median (mean of the two central order statistics for even length).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
