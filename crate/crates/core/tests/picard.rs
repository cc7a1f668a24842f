use latticeblow::kernel::WalkSpec;
use latticeblow::moments::{feynman_kac_mixed, feynman_kac_moment};
use latticeblow::noise::NoiseField;
use latticeblow::picard::{locality_bound, locality_gap, PicardConfig, PicardExperiment};
use latticeblow::stats::McEstimate;
use proptest::prelude::*;

fn experiment(beta: f64, iters: u32, t: f64, reps: u64, seed: u64) -> PicardExperiment {
    let grid = 1.0 / 64.0;
    PicardExperiment {
        cfg: PicardConfig::new(beta, iters, t, grid).unwrap(),
        walk: WalkSpec::preset("srw").unwrap(),
        noise: NoiseField::new(seed, grid).unwrap(),
        reps,
    }
}

#[test]
fn first_iterate_variance_is_at_most_t() {
    let t = 0.25;
    let ex = experiment(16.0, 1, t, 4000, 51);
    let s = ex.sample(&[0]).unwrap();
    assert!(s.iter().all(|r| r[0][0] == 1.0));
    let e = McEstimate::from_samples(
        &s.iter()
            .map(|r| (r[1][0] - 1.0).powi(2))
            .collect::<Vec<_>>(),
    );
    assert!(e.mean <= t + 3.0 * e.stderr, "{}", e.mean);
    assert!(e.mean > 0.5 * t);
}

#[test]
fn iterates_contract() {
    let curve = experiment(16.0, 4, 0.25, 2000, 52)
        .iterate_contraction_curve()
        .unwrap();
    assert_eq!(curve.len(), 4);
    for pair in curve.windows(2) {
        assert!(
            pair[1].mean < pair[0].mean,
            "{} !< {}",
            pair[1].mean,
            pair[0].mean
        );
    }
}

#[test]
fn adjacent_correlation_matches_the_walk_oracle() {
    let t = 0.25;
    let w = WalkSpec::preset("srw").unwrap();
    let cross = feynman_kac_mixed(&w, &[0, 1], t, 200_000, 53).unwrap();
    let diag = feynman_kac_moment(&w, 2, t, 200_000, 54).unwrap();
    let rho = (cross.mean - 1.0) / (diag.mean - 1.0);
    let est = experiment(64.0, 4, t, 4000, 55)
        .adjacent_correlation()
        .unwrap();
    assert!((est - rho).abs() < 0.06, "{est} vs {rho}");
}

#[test]
fn far_sites_factorize() {
    let g = experiment(16.0, 2, 0.25, 3000, 56)
        .spatial_growth_experiment(2.0, 16)
        .unwrap();
    assert!(
        (g.p_max_below.mean - g.factorized).abs() <= 3.0 * g.combined_stderr() + 1e-3,
        "{} vs {}",
        g.p_max_below.mean,
        g.factorized
    );
}

#[test]
fn locality_gap_shrinks_with_beta() {
    let cfg = PicardConfig::new(16.0, 4, 0.25, 1.0 / 64.0).unwrap();
    let w = WalkSpec::preset("srw").unwrap();
    let r = locality_gap(
        &cfg,
        &w,
        &[4.0, 16.0, 64.0],
        &NoiseField::new(57, 1.0 / 64.0).unwrap(),
        500,
    )
    .unwrap();
    assert!(r.gaps[0].mean > r.gaps[2].mean);
    assert!(r.bounds.windows(2).all(|p| p[1] < p[0]));
    // (e/8)^16
    assert!((locality_bound(1, 1.0, 64.0) / 3.156_980_6e-8 - 1.0).abs() < 1e-6);
    assert!((r.bounds[2] / 6.940_583_67e-7 - 1.0).abs() < 1e-6);
    assert!(locality_bound(1, 1.0, 4.0) >= 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn config_radius_is_floor_sqrt(beta in 1.0f64..400.0, t in 0.01f64..1.0) {
        if let Ok(c) = PicardConfig::new(beta, 2, (t * 64.0).round().max(1.0) / 64.0, 1.0 / 64.0) {
            let r = c.radius() as f64;
            prop_assert!(r * r <= c.beta * c.t + 1e-9 && (r + 1.0) * (r + 1.0) > c.beta * c.t);
            prop_assert!(c.independence_spacing() >= 2.0 * c.n_iter as f64);
        }
    }

    #[test]
    fn iterates_stay_finite(seed in any::<u64>()) {
        let s = experiment(16.0, 3, 0.25, 1, seed).sample(&[0, 3]).unwrap();
        prop_assert!(s[0].iter().flatten().all(|v| v.is_finite()));
    }
}
