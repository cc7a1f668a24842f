use latticeblow::kernel::WalkSpec;
use latticeblow::lattice::{Boundary, InitialProfile, LatticeExperiment, TruncatedSystem, Window};
use latticeblow::moments::{
    collision_time, cross_validate, feynman_kac_mixed, feynman_kac_moment, moment_bracket,
    sample_collision,
};
use latticeblow::noise::NoiseField;
use proptest::prelude::*;

#[test]
fn second_moment_matches_the_lattice() {
    let w = WalkSpec::preset("srw").unwrap();
    let t = 0.125;
    let dt = 1.0 / 256.0;
    let lat = LatticeExperiment {
        system: TruncatedSystem::driftless(w.clone(), dt).unwrap(),
        profile: InitialProfile::Constant(1.0),
        window: Window::for_horizon(&w, t, 0),
        boundary: Boundary::CopyExtension,
        noise: NoiseField::new(61, dt).unwrap(),
        reps: 8000,
    };
    let cv = cross_validate(2, t, 100_000, 62, &lat).unwrap();
    assert!(cv.agree, "{cv:?}");
    assert!(cv.advice.is_none());
    let (lo, hi) = moment_bracket(2, t);
    assert!(cv.oracle.mean >= lo && cv.oracle.mean <= hi);
}

#[test]
fn bracket_values() {
    let (lo, hi) = moment_bracket(3, 0.5);
    assert_eq!(lo, 1.0);
    assert!((hi - 2f64.powf(1.5) * 18f64.exp()).abs() < 1e-6 * hi);
    assert!((moment_bracket(5, 0.1).0 - 0.5f64.exp()).abs() < 1e-15);
}

#[test]
fn mixed_moment_is_symmetric_in_the_starts() {
    let w = WalkSpec::preset("lazy-srw").unwrap();
    let a = feynman_kac_mixed(&w, &[0, 2], 0.5, 50_000, 63).unwrap();
    let b = feynman_kac_mixed(&w, &[2, 0], 0.5, 50_000, 64).unwrap();
    let se = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
    assert!((a.mean - b.mean).abs() <= 4.0 * se);
    // starting together collides more than starting apart
    let together = feynman_kac_moment(&w, 2, 0.5, 50_000, 65).unwrap();
    assert!(together.mean > a.mean);
}

proptest! {
    #[test]
    fn collision_times_lie_in_range(seed in any::<u64>(), r in 0u64..1000, t in 0.0f64..2.0) {
        let w = WalkSpec::preset("srw").unwrap();
        let s = sample_collision(&w, &[0, 0, 1], t, seed, r);
        prop_assert!(s.collision_time >= 0.0 && s.collision_time <= 3.0 * t + 1e-12);
        let single = sample_collision(&w, &[4], t, seed, r);
        prop_assert_eq!(single.collision_time, 0.0);
    }

    #[test]
    fn identical_paths_collide_all_the_time(t in 0.01f64..3.0, jumps in proptest::collection::vec((0.0f64..1.0, -3i64..3), 0..6)) {
        let mut path = vec![(0.0, 0i64)];
        let mut ts: Vec<f64> = jumps.iter().map(|(u, _)| u * t).collect();
        ts.sort_by(f64::total_cmp);
        for (s, (_, z)) in ts.iter().zip(&jumps) {
            path.push((*s, *z));
        }
        let c = collision_time(&[path.clone(), path], t);
        prop_assert!((c - t).abs() < 1e-12);
    }
}
