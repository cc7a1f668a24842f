use latticeblow::kernel::{
    compose, convolve, kernel_slice, l1_time_difference, margin_for_budget, poisson_jump_tail,
    Kernel, WalkSpec, DEFAULT_TOL,
};
use latticeblow::lattice::{Boundary, InitialProfile, LatticeState, Window};
use proptest::prelude::*;

fn walks() -> Vec<WalkSpec> {
    ["srw", "lazy-srw", "range2"]
        .iter()
        .map(|n| WalkSpec::preset(n).unwrap())
        .collect()
}

/// `e^{-t} I_|x|(t)`, the simple-walk kernel, from the Bessel power series.
fn srw_oracle(t: f64, x: u32) -> f64 {
    let half = t / 2.0;
    let mut term = half.powi(x as i32) / (1..=x).map(f64::from).product::<f64>();
    let mut sum = term;
    for m in 1..60 {
        term *= half * half / (m as f64 * (m + x) as f64);
        sum += term;
    }
    (-t).exp() * sum
}

/// `P(Poisson(t) > k)` by direct summation.
fn poisson_tail(t: f64, k: u32) -> f64 {
    let mut p = (-t).exp();
    let mut cdf = p;
    for j in 1..=k {
        p *= t / j as f64;
        cdf += p;
    }
    1.0 - cdf
}

#[test]
fn simple_walk_matches_bessel_series() {
    let w = WalkSpec::preset("srw").unwrap();
    assert!((srw_oracle(1.0, 0) - 0.465_759_607_593_640_4).abs() < 1e-15);
    for t in [0.05, 0.5, 1.0, 2.5] {
        let s = kernel_slice(&w, t, DEFAULT_TOL).unwrap();
        for x in 0..6 {
            let o = srw_oracle(t, x);
            assert!((s.value(x as i64) - o).abs() < 1e-10, "t={t} x={x}");
            assert!((s.value(-(x as i64)) - o).abs() < 1e-10);
        }
    }
}

#[test]
fn spike_convolution_is_scaled_kernel() {
    let w = WalkSpec::preset("srw").unwrap();
    let s = kernel_slice(&w, 1.0, DEFAULT_TOL).unwrap();
    let win = Window::new(s.half_width + 4, s.half_width + 1).unwrap();
    let st = LatticeState::new(
        &InitialProfile::Spike { mass: 7.0, site: 0 },
        win,
        Boundary::Absorbing,
    );
    let out = convolve(&s, &st).unwrap();
    assert!((out.get(0) - 7.0 * srw_oracle(1.0, 0)).abs() < 1e-10);
    assert!((out.get(2) - 7.0 * srw_oracle(1.0, 2)).abs() < 1e-10);
}

#[test]
fn l1_difference_examples() {
    let w = WalkSpec::preset("srw").unwrap();
    for h in [1e-2, 1e-3, 1e-4] {
        let r = l1_time_difference(&w, 0.0, h, DEFAULT_TOL).unwrap() / h;
        assert!((1.5..=2.5).contains(&r), "h={h}: {r}");
        // at t = 0 the difference is 2·(1 − G_h(0))
        let exact = 2.0 * (1.0 - srw_oracle(h, 0)) / h;
        assert!((r - exact).abs() < 1e-8);
    }
    let a = l1_time_difference(&w, 0.5, 0.01, DEFAULT_TOL).unwrap();
    let b = l1_time_difference(&w, 0.5, 0.005, DEFAULT_TOL).unwrap();
    assert!((1.6..=2.4).contains(&(a / b)), "{}", a / b);
    assert!(l1_time_difference(&w, 0.9, 0.2, DEFAULT_TOL).is_err());
}

#[test]
fn chernoff_bound_dominates_exact_tail() {
    let b = poisson_jump_tail(1.0, 10.0).unwrap();
    let frozen = (std::f64::consts::E / 10.0).powi(10) * (-1f64).exp();
    assert!((b - frozen).abs() < 1e-20);
    let exact = poisson_tail(1.0, 10);
    assert!(exact < b && (exact - 1.0e-8).abs() < 1e-9);
    assert!(poisson_tail(0.25, 5) <= poisson_jump_tail(0.25, 5.0).unwrap());
    assert!(poisson_jump_tail(1.0, 0.5).is_err());
}

#[test]
fn margin_meets_budget() {
    for w in walks() {
        for t in [0.1, 0.5, 1.0] {
            let m = margin_for_budget(&w, t, 1e-6);
            let jumps = m / w.range();
            assert!(poisson_jump_tail(t, jumps as f64).unwrap() < 1e-6);
        }
    }
}

#[test]
fn cached_kernel_matches_direct() {
    let w = WalkSpec::preset("range2").unwrap();
    let k = Kernel::new(w.clone());
    let a = k.slice(0.375, DEFAULT_TOL).unwrap();
    let b = kernel_slice(&w, 0.375, DEFAULT_TOL).unwrap();
    assert_eq!(a.values, b.values);
    assert!(std::sync::Arc::ptr_eq(
        &a,
        &k.slice(0.375, DEFAULT_TOL).unwrap()
    ));
}

proptest! {
    #[test]
    fn mass_conserved(t in 0.0f64..20.0, which in 0usize..3) {
        let s = kernel_slice(&walks()[which], t, DEFAULT_TOL).unwrap();
        prop_assert!(s.values.iter().all(|&v| v >= 0.0));
        prop_assert!(s.tail_mass <= DEFAULT_TOL);
        prop_assert!((s.mass() + s.tail_mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chapman_kolmogorov(a in 0.0f64..2.0, b in 0.0f64..2.0, which in 0usize..3) {
        let w = &walks()[which];
        let ab = compose(&kernel_slice(w, a, DEFAULT_TOL).unwrap(), &kernel_slice(w, b, DEFAULT_TOL).unwrap());
        let direct = kernel_slice(w, a + b, DEFAULT_TOL).unwrap();
        let hw = ((ab.len() - 1) / 2) as i64;
        for z in -hw..=hw {
            prop_assert!((ab[(z + hw) as usize] - direct.value(z)).abs() <= 10.0 * DEFAULT_TOL);
        }
    }

    #[test]
    fn symmetric_walks_have_symmetric_kernels(t in 0.0f64..5.0, which in 0usize..3, z in 0i64..8) {
        let s = kernel_slice(&walks()[which], t, DEFAULT_TOL).unwrap();
        prop_assert!((s.value(z) - s.value(-z)).abs() < 1e-15);
    }

    #[test]
    fn l1_difference_is_lipschitz(t in 0.0f64..0.9, h in 1e-5f64..0.1) {
        let w = WalkSpec::preset("srw").unwrap();
        prop_assert!(l1_time_difference(&w, t, h, DEFAULT_TOL).unwrap() <= 4.0 * h);
    }

    #[test]
    fn convolution_preserves_constants(c in 0.0f64..100.0, t in 0.0f64..1.0) {
        let w = WalkSpec::preset("lazy-srw").unwrap();
        let s = kernel_slice(&w, t, DEFAULT_TOL).unwrap();
        let st = LatticeState::constant(s.half_width + 5, s.half_width, c, Boundary::CopyExtension);
        let out = convolve(&s, &st).unwrap();
        for (_, v) in out.sites() {
            prop_assert!((v - c).abs() <= c * (s.tail_mass + 1e-13));
        }
    }
}
