//! Drift functions `b` and the quantities built from them: `f(x) = b(x)/(4x)`,
//! the dyadic Osgood series and the growth constants `(K_b, n₀)`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::expr::Expr;

type DriftFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type LipschitzFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Names accepted by [`DriftSpec::builtin`].
pub const BUILTIN_DRIFTS: [&str; 4] = ["square", "xlog2", "linear2", "zero"];

/// Geometric sampling grid `x = 2^{k/per_octave}` used for every invariant
/// check.
pub fn geometric_grid(lo_exp: i32, hi: f64, per_octave: u32) -> Vec<f64> {
    let mut out = Vec::new();
    let mut k = lo_exp * per_octave as i32;
    loop {
        let x = (k as f64 / per_octave as f64).exp2();
        if x > hi {
            break;
        }
        out.push(x);
        k += 1;
    }
    if out.last().is_none_or(|&last| last < hi) {
        out.push(hi);
    }
    out
}

/// `b(x)/x ≥ 1 + eta` for every `x ≥ x_growth`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthCondition {
    pub eta: f64,
    pub x_growth: f64,
}

/// A non-decreasing drift with `b(0) = 0`, extended by 0 to negative states.
#[derive(Clone)]
pub struct DriftSpec {
    name: String,
    b: DriftFn,
    growth: Option<GrowthCondition>,
    osgood: bool,
    zero: bool,
    lipschitz: LipschitzFn,
}

impl fmt::Debug for DriftSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DriftSpec")
            .field("name", &self.name)
            .field("growth", &self.growth)
            .field("osgood", &self.osgood)
            .finish()
    }
}

const CHECK_GRID_HI: f64 = 1e12;

impl DriftSpec {
    /// Builds and validates a drift. Invariants are checked on the grid
    /// `2^{k/8}` covering `[2^-10, 10^12]`.
    pub fn new(
        name: impl Into<String>,
        b: impl Fn(f64) -> f64 + Send + Sync + 'static,
        growth: Option<GrowthCondition>,
        osgood: bool,
    ) -> Result<Self> {
        let b: DriftFn = Arc::new(b);
        let probe = b.clone();
        let lipschitz: LipschitzFn = Arc::new(move |lo, hi| sampled_lipschitz(&*probe, lo, hi));
        let spec = DriftSpec {
            name: name.into(),
            b,
            growth,
            osgood,
            zero: false,
            lipschitz,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Drift from the expression language of [`crate::expr`].
    pub fn from_expr(
        name: impl Into<String>,
        src: &str,
        growth: Option<GrowthCondition>,
        osgood: bool,
    ) -> Result<Self> {
        let e = Expr::parse(src)?;
        Self::new(name, move |x| e.eval(x), growth, osgood)
    }

    pub fn builtin(name: &str) -> Result<Self> {
        let growth = Some(GrowthCondition {
            eta: 1.0,
            x_growth: 2.0,
        });
        let mut spec = match name {
            "square" => Self::new(name, |x| x * x, growth, true)?,
            "xlog2" => Self::new(
                name,
                |x| x * (std::f64::consts::E + x).ln().powi(2),
                growth,
                true,
            )?,
            "linear2" => Self::new(
                name,
                |x| 2.0 * x,
                Some(GrowthCondition {
                    eta: 1.0,
                    x_growth: 0.0,
                }),
                false,
            )?,
            "zero" => {
                let mut z = Self::new(name, |_| 0.0, None, false)?;
                z.zero = true;
                z
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown drift `{other}`; builtins are {BUILTIN_DRIFTS:?}"
                )))
            }
        };
        spec.lipschitz = match name {
            "square" => Arc::new(|lo: f64, hi: f64| 2.0 * lo.abs().max(hi.abs())),
            "xlog2" => Arc::new(|_lo: f64, hi: f64| {
                // b' is increasing on [0, ∞)
                let x = hi.max(0.0);
                let l = (std::f64::consts::E + x).ln();
                l * l + 2.0 * x * l / (std::f64::consts::E + x)
            }),
            "linear2" => Arc::new(|_, _| 2.0),
            _ => Arc::new(|_, _| 0.0),
        };
        Ok(spec)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn growth(&self) -> Option<GrowthCondition> {
        self.growth
    }

    pub fn is_osgood(&self) -> bool {
        self.osgood
    }

    /// True for the driftless control, which lets schemes skip drift work.
    pub fn is_zero(&self) -> bool {
        self.zero
    }

    /// `b(x)`, with `b(x) = 0` for `x ≤ 0`.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        if x <= 0.0 || self.zero {
            0.0
        } else {
            (self.b)(x)
        }
    }

    /// Lipschitz constant of `b` on `[lo, hi]`.
    pub fn lipschitz_on(&self, lo: f64, hi: f64) -> f64 {
        (self.lipschitz)(lo, hi)
    }

    /// `c·b`, e.g. the `b/n₀` drift of the comparison SDE.
    pub fn scaled(&self, factor: f64) -> Result<DriftSpec> {
        if !(factor > 0.0) {
            return domain(format!("drift scale factor must be positive, got {factor}"));
        }
        let inner = self.b.clone();
        let lip = self.lipschitz.clone();
        Ok(DriftSpec {
            name: format!("{}*{factor}", self.name),
            b: Arc::new(move |x| factor * inner(x)),
            growth: None,
            osgood: self.osgood,
            zero: self.zero,
            lipschitz: Arc::new(move |lo, hi| factor * lip(lo, hi)),
        })
    }

    fn validate(&self) -> Result<()> {
        let b0 = (self.b)(0.0);
        if b0 != 0.0 {
            return domain(format!("{}: b(0) = {b0}, must be exactly 0", self.name));
        }
        let grid = geometric_grid(-10, CHECK_GRID_HI, 8);
        let mut prev = 0.0;
        for &x in &grid {
            let v = (self.b)(x);
            if !(v >= 0.0) {
                return domain(format!("{}: b({x}) = {v} is negative", self.name));
            }
            if v < prev {
                return domain(format!("{}: b decreases before x = {x}", self.name));
            }
            prev = v;
            if let Some(g) = self.growth {
                if x >= g.x_growth && v / x < 1.0 + g.eta {
                    return domain(format!(
                        "{}: b({x})/x = {} < 1 + eta = {}",
                        self.name,
                        v / x,
                        1.0 + g.eta
                    ));
                }
            }
        }
        if let Some(g) = self.growth {
            if !(g.eta > 0.0) {
                return domain(format!("{}: eta must be positive", self.name));
            }
        }
        Ok(())
    }

    /// `f(x) = b(x) / (4x)`.
    pub fn eval_f(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return domain(format!("f(x) needs x > 0, got {x}"));
        }
        Ok(self.eval(x) / (4.0 * x))
    }

    /// `f(2^k)`.
    pub fn f_dyadic(&self, k: i64) -> Result<f64> {
        if !(-1074..=1023).contains(&k) {
            return domain(format!("2^{k} is outside the f64 range"));
        }
        self.eval_f((k as f64).exp2())
    }

    fn reciprocal_f(&self, k: i64) -> Result<f64> {
        let f = self.f_dyadic(k)?;
        if !(f > 0.0) {
            return domain(format!("f(2^{k}) = {f} is not positive"));
        }
        Ok(1.0 / f)
    }

    /// `Σ_{k=0}^{K} 1/f(2^k)`.
    pub fn osgood_partial_sum(&self, k_max: u32) -> Result<f64> {
        (0..=k_max as i64).map(|k| self.reciprocal_f(k)).sum()
    }

    /// Bracket `((1/8)Σ_{k=1}^{K+1} 1/f(2^k), (1/4)Σ_{k=0}^{K} 1/f(2^k))` for
    /// `∫_1^{2^{K+1}} dx/b(x)`.
    pub fn osgood_integral_bracket(&self, k_max: u32) -> Result<(f64, f64)> {
        let lower: f64 = (1..=k_max as i64 + 1)
            .map(|k| self.reciprocal_f(k))
            .sum::<Result<f64>>()?
            / 8.0;
        let upper = self.osgood_partial_sum(k_max)? / 4.0;
        Ok((lower, upper))
    }

    /// Smallest `n₀ ≥ 2` (and for it the smallest grid `K_b ≤ search_cap`)
    /// with `e^{-1/n}b(x) − x ≥ b(x)/n₀` for all `n ≥ n₀`, `x ∈ [K_b, cap]`.
    pub fn find_growth_constants(&self, search_cap: f64) -> Result<GrowthConstants> {
        const MAX_N0: u32 = 4096;
        let grid = geometric_grid(-10, search_cap, 8);
        for n0 in 2..=MAX_N0 {
            // the inequality is tightest at n = n₀
            let ok = |x: f64| growth_margin(self, n0, x) >= 0.0;
            let Some(first_good) = grid
                .iter()
                .rposition(|&x| !ok(x))
                .map_or(Some(0), |bad| (bad + 1 < grid.len()).then_some(bad + 1))
            else {
                continue;
            };
            return Ok(GrowthConstants {
                k_b: grid[first_good],
                n0,
            });
        }
        Err(Error::NotFound(format!(
            "{}: no (K_b, n0) with K_b <= {search_cap} and n0 <= {MAX_N0}",
            self.name
        )))
    }
}

fn growth_margin(drift: &DriftSpec, n0: u32, x: f64) -> f64 {
    let b = drift.eval(x);
    (-1.0 / n0 as f64).exp() * b - x - b / n0 as f64
}

fn sampled_lipschitz(b: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    const PIECES: usize = 64;
    let h = (hi - lo) / PIECES as f64;
    let mut best: f64 = 0.0;
    let mut prev = b(lo.max(0.0));
    for i in 1..=PIECES {
        let x = (lo + i as f64 * h).max(0.0);
        let v = b(x);
        best = best.max((v - prev).abs() / h);
        prev = v;
    }
    1.25 * best
}

/// The pair `(K_b, n₀)` controlling the comparison with the 1-D SDE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthConstants {
    pub k_b: f64,
    pub n0: u32,
}

impl GrowthConstants {
    /// Checks the defining inequality at `n = n₀` (the binding case) on the
    /// grid `2^{k/per_octave}` restricted to `[K_b, cap]`.
    pub fn validate(&self, drift: &DriftSpec, cap: f64, per_octave: u32) -> bool {
        geometric_grid(-10, cap, per_octave)
            .into_iter()
            .filter(|&x| x >= self.k_b)
            .chain(std::iter::once(self.k_b))
            .all(|x| growth_margin(drift, self.n0, x) >= 0.0)
    }
}
