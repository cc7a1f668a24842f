use latticeblow::drift::DriftSpec;
use latticeblow::harness::replicate_map;
use latticeblow::noise::NoiseField;
use latticeblow::sde1d::{
    explodes_within, explosion_lower_bound, explosion_lower_bound_with_cutoff, find_k,
    level_crossings, s_max, simulate_geometric_level, simulate_underlying, simulate_z,
};
use latticeblow::stats::McEstimate;
use proptest::prelude::*;

fn square() -> DriftSpec {
    DriftSpec::builtin("square").unwrap()
}

fn freq(xs: &[bool]) -> McEstimate {
    McEstimate::from_samples(
        &xs.iter()
            .map(|&b| f64::from(u8::from(b)))
            .collect::<Vec<_>>(),
    )
}

/// The explosion bound for `b(x) = x²` summed in closed form.
fn square_bound(k: i32, delta: f64, s: f64) -> f64 {
    let ln2 = std::f64::consts::LN_2;
    let (mut hit, mut slack) = (0.0f64, 0.0f64);
    for j in (k..k + 200).rev() {
        // f(2^{j−1}) = 2^{j−3}
        let f = 2f64.powi(j - 3);
        hit += 2f64.powf(1.0 - 2.0 * f);
        slack += 1.0 / (f - 0.5);
    }
    1.0 - hit - (-s * delta + 2.0 * s * ln2 * slack).exp()
}

#[test]
fn bound_matches_closed_form_sum() {
    let b = explosion_lower_bound(&square(), 10, 0.1, 50.0).unwrap();
    let oracle = square_bound(10, 0.1, 50.0);
    assert!((b - oracle).abs() < 1e-12, "{b} vs {oracle}");
    assert!((b - (1.0 - (-3.91f64).exp())).abs() < 1e-3);
    assert!(b > 0.97);
}

#[test]
fn find_k_desk_scale() {
    let d = square();
    let (k, s) = find_k(&d, 0.05, 0.1).unwrap();
    assert!(k <= 12);
    assert!(s < s_max(&d, k).unwrap());
    let again = explosion_lower_bound_with_cutoff(&d, k, 0.1, s, 1e-30).unwrap();
    assert!(again >= 0.95, "re-evaluated bound {again}");
    // K is minimal
    if k > 1 {
        if let Ok(sm) = s_max(&d, k - 1) {
            let best = latticeblow::sde1d::s_grid(sm)
                .into_iter()
                .filter_map(|s| explosion_lower_bound(&d, k - 1, 0.1, s).ok())
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(best < 0.95);
        }
    }
}

#[test]
fn explosion_from_two_to_ten() {
    let d = square();
    let bound = (0..32)
        .map(|i| 0.9 * s_max(&d, 10).unwrap() * 10f64.powf(-4.0 * i as f64 / 31.0))
        .filter_map(|s| explosion_lower_bound(&d, 10, 0.1, s).ok())
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(bound >= 0.9);
    let dt = 1e-4;
    let base = NoiseField::new(21, dt).unwrap();
    let hits: Vec<bool> = replicate_map(1000, |r| {
        Ok(explodes_within(&d, 1024.0, dt, 0.1, 1e8, &base.for_replicate(r), 0)?.is_some())
    })
    .unwrap();
    let e = freq(&hits);
    assert!(
        e.mean >= 0.9 && e.mean >= bound - 3.0 * e.stderr,
        "{}",
        e.mean
    );
}

#[test]
fn geometric_level_has_lognormal_mean() {
    let d = square();
    let k = 3;
    let t = 0.5;
    let base = NoiseField::new(22, 1.0 / 64.0).unwrap();
    let ys: Vec<f64> = replicate_map(20_000, |r| {
        Ok(simulate_geometric_level(&d, k, &base.for_replicate(r), 0, 1.0 / 64.0, t)?.last())
    })
    .unwrap();
    let e = McEstimate::from_samples(&ys);
    let target = 8.0 * (d.f_dyadic(2).unwrap() * t).exp();
    assert!(
        (e.mean - target).abs() <= 3.0 * e.stderr,
        "{} vs {target}",
        e.mean
    );
}

#[test]
fn z_reaches_j_at_least_as_often_as_the_bound() {
    let d = square();
    let g = d.find_growth_constants(1e6).unwrap();
    let zd = d.scaled(1.0 / g.n0 as f64).unwrap();
    let (k, s) = find_k(&zd, 0.1, 0.1).unwrap();
    let bound = explosion_lower_bound(&zd, k, 0.1, s).unwrap();
    let j = 1e8;
    let dt = 1e-4;
    let base = NoiseField::new(23, dt).unwrap();
    let hits: Vec<bool> = replicate_map(500, |r| {
        let p = simulate_z(&d, g, j, 2f64.powi(k), &base.for_replicate(r), 0, dt, 0.1)?;
        Ok(p.first_at_or_above(j).is_some())
    })
    .unwrap();
    let e = freq(&hits);
    assert!(e.mean >= bound - 3.0 * e.stderr, "{} vs {bound}", e.mean);
}

#[test]
fn z_stays_below_x_on_shared_noise() {
    let d = square();
    let g = d.find_growth_constants(1e6).unwrap();
    let dt = 1.0 / 1024.0;
    let base = NoiseField::new(24, dt).unwrap();
    for r in 0..200 {
        let nz = base.for_replicate(r);
        let x = simulate_underlying(&d, 4.0, dt, 0.25, f64::INFINITY, &nz, 0).unwrap();
        let z = simulate_z(&d, g, 1e6, 4.0, &nz, 0, dt, 0.25).unwrap();
        for (i, (&zv, &xv)) in z.values.iter().zip(&x.values).enumerate() {
            if zv >= 1e6 || !xv.is_finite() {
                break;
            }
            assert!(zv <= xv * (1.0 + 1e-9), "rep {r} step {i}: Z={zv} X={xv}");
        }
    }
}

#[test]
fn level_crossings_are_nearest_neighbour() {
    let d = square();
    let base = NoiseField::new(25, 1e-3).unwrap();
    for r in 0..50 {
        let rec = level_crossings(&d, 3, -2, 12, 1e-3, 1.0, &base.for_replicate(r), 0).unwrap();
        assert_eq!(rec.levels_visited[0], 3);
        let first_down = rec.levels_visited.windows(2).any(|w| w[1] < w[0]);
        assert_eq!(first_down, rec.backtracked);
    }
}

proptest! {
    #[test]
    fn paths_stay_nonnegative(seed in any::<u64>(), x0 in 0.0f64..50.0) {
        let nz = NoiseField::new(seed, 1.0 / 256.0).unwrap();
        let p = simulate_underlying(&square(), x0, 1.0 / 256.0, 0.5, 1e8, &nz, 0).unwrap();
        prop_assert!(p.values.iter().all(|&v| v >= 0.0));
        prop_assert_eq!(p.exploded, p.explosion_time.is_some());
    }

    #[test]
    fn larger_start_explodes_no_later(seed in any::<u64>(), x0 in 1.0f64..100.0) {
        let d = square();
        let nz = NoiseField::new(seed, 1.0 / 1024.0).unwrap();
        let a = explodes_within(&d, x0, 1.0 / 1024.0, 1.0, 1e8, &nz, 0).unwrap();
        let b = explodes_within(&d, 2.0 * x0, 1.0 / 1024.0, 1.0, 1e8, &nz, 0).unwrap();
        if let Some(ta) = a {
            prop_assert!(b.is_some_and(|tb| tb <= ta + 1e-12));
        }
    }

    #[test]
    fn bound_increases_with_k(k in 4i32..20) {
        let d = square();
        let s = 0.5 * s_max(&d, k).unwrap().min(200.0);
        let a = explosion_lower_bound(&d, k, 0.1, s).unwrap();
        let b = explosion_lower_bound(&d, k + 1, 0.1, s).unwrap();
        prop_assert!(b >= a);
    }
}
