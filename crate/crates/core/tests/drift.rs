use latticeblow::drift::{DriftSpec, GrowthConstants};
use latticeblow::expr::Expr;
use proptest::prelude::*;

/// Adaptive Simpson quadrature.
fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    rec(
        f,
        a,
        b,
        fa,
        fm,
        fb,
        (b - a) / 6.0 * (fa + 4.0 * fm + fb),
        tol,
        50,
    )
}

/// `∫_1^{2^{K+1}} dx / b(x)`, integrated octave by octave.
fn osgood_integral(b: &dyn Fn(f64) -> f64, k_max: u32) -> f64 {
    (0..=k_max)
        .map(|k| {
            simpson(
                &|x| 1.0 / b(x),
                2f64.powi(k as i32),
                2f64.powi(k as i32 + 1),
                1e-13,
            )
        })
        .sum()
}

#[test]
fn f_matches_direct_formula() {
    let d = DriftSpec::builtin("xlog2").unwrap();
    let direct = 2.0 * (std::f64::consts::E + 2.0).ln().powi(2) / 8.0;
    assert!((d.eval_f(2.0).unwrap() - direct).abs() < 1e-15);
    assert!(d.eval_f(0.0).is_err());
    assert!((DriftSpec::builtin("square").unwrap().f_dyadic(3).unwrap() - 2.0).abs() < 1e-15);
}

#[test]
fn partial_sum_matches_term_by_term() {
    let d = DriftSpec::builtin("xlog2").unwrap();
    let s = d.osgood_partial_sum(20).unwrap();
    // reverse-order compensated summation of the closed-form terms
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for k in (0..=20).rev() {
        let x = 2f64.powi(k);
        let term = 4.0 * x / (x * (std::f64::consts::E + x).ln().powi(2));
        let y = term - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    assert!(s.is_finite());
    assert!((s - sum).abs() < 1e-13 * sum);
}

#[test]
fn integral_bracket_contains_quadrature() {
    let sq = DriftSpec::builtin("square").unwrap();
    let (lo, hi) = sq.osgood_integral_bracket(10).unwrap();
    let exact = 1.0 - 2f64.powi(-11);
    assert!((osgood_integral(&|x| x * x, 10) - exact).abs() < 1e-10);
    assert!(lo <= exact && exact <= hi, "[{lo}, {hi}] vs {exact}");
    let xl = DriftSpec::builtin("xlog2").unwrap();
    let q = osgood_integral(&|x| xl.eval(x), 12);
    let (lo, hi) = xl.osgood_integral_bracket(12).unwrap();
    assert!(lo <= q && q <= hi, "[{lo}, {hi}] vs {q}");
}

#[test]
fn growth_constants() {
    let sq = DriftSpec::builtin("square").unwrap();
    let g = sq.find_growth_constants(100.0).unwrap();
    assert!(g.validate(&sq, 100.0, 64));
    assert!(GrowthConstants { k_b: 2.0, n0: 4 }.validate(&sq, 100.0, 64));
    // e^{-1/4}x² − x − x²/4 ≥ 0 fails just below x = 2
    assert!(!GrowthConstants { k_b: 1.5, n0: 4 }.validate(&sq, 100.0, 64));
    let lin = DriftSpec::builtin("linear2").unwrap();
    let gl = lin.find_growth_constants(10.0).unwrap();
    assert!(gl.validate(&lin, 10.0, 64));
    assert!(DriftSpec::builtin("zero")
        .unwrap()
        .find_growth_constants(10.0)
        .is_err());
}

#[test]
fn non_osgood_partial_sums_grow_linearly() {
    let lin = DriftSpec::builtin("linear2").unwrap();
    let a = lin.osgood_partial_sum(10).unwrap();
    let b = lin.osgood_partial_sum(20).unwrap();
    assert!((b - a - 10.0 * 2.0).abs() < 1e-12);
    assert!(!lin.is_osgood());
}

#[test]
fn expression_drifts() {
    let e = Expr::parse("x*pow(ln(e+x), 2)").unwrap();
    let b = DriftSpec::builtin("xlog2").unwrap();
    for x in [0.0, 0.5, 3.0, 1e6] {
        assert!((e.eval(x) - b.eval(x)).abs() <= 1e-12 * (1.0 + b.eval(x)));
    }
    assert_eq!(Expr::parse("min(x, 4) + 1").unwrap().eval(9.0), 5.0);
    assert!(Expr::parse("x +").is_err());
    assert!(DriftSpec::from_expr("shifted", "x+1", None, false).is_err());
}

proptest! {
    #[test]
    fn scaling_scales_f(factor in 0.01f64..100.0, k in -5i64..30) {
        let sq = DriftSpec::builtin("square").unwrap();
        let s = sq.scaled(factor).unwrap();
        let a = s.f_dyadic(k).unwrap();
        let b = factor * sq.f_dyadic(k).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300));
    }

    #[test]
    fn builtins_are_nonnegative_and_vanish_at_zero(x in 0.0f64..1e9, which in 0usize..4) {
        let name = ["square", "xlog2", "linear2", "zero"][which];
        let d = DriftSpec::builtin(name).unwrap();
        prop_assert_eq!(d.eval(0.0), 0.0);
        prop_assert!(d.eval(x) >= 0.0);
    }
}
