use proptest::prelude::*;

use rovella_core::map::{derivative_unchecked, value_unchecked, PowerFixture};
use rovella_core::orbit::OrbitEngine;
use rovella_core::NoiseStream;

fn fixture() -> PowerFixture {
    PowerFixture::new(2.0, 0.1).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn shift_composes(seed in any::<u64>(), i in -1000i64..1000, j in -1000i64..1000, k in -1000i64..1000) {
        let s = NoiseStream::new(seed, 0.05);
        prop_assert_eq!(s.shift(j).shift(k).get(i), s.get(i + j + k));
    }

    #[test]
    fn window_matches_pointwise(seed in any::<u64>(), start in -200i64..200, len in 0usize..300) {
        let s = NoiseStream::new(seed, 0.05);
        let w = s.window(start, len);
        for (k, v) in w.iter().enumerate() {
            prop_assert_eq!(*v, s.get(start + k as i64));
        }
    }

    #[test]
    fn orbits_stay_in_the_interval(seed in any::<u64>(), x0 in -1.0f64..1.0, n in 1usize..200) {
        prop_assume!(x0 != 0.0);
        let f = fixture();
        let engine = OrbitEngine::new(&f, 0.01).unwrap();
        if let Ok(trace) = engine.iterate(&NoiseStream::new(seed, 0.01), x0, n) {
            prop_assert!(trace.points.iter().all(|x| (-1.0..=1.0).contains(x) && *x != 0.0));
            prop_assert_eq!(trace.points.len(), n + 1);
        }
    }

    #[test]
    fn trace_matches_direct_iteration(seed in any::<u64>(), x0 in 0.001f64..1.0, n in 1usize..80) {
        let f = fixture();
        let s = NoiseStream::new(seed, 0.01);
        let engine = OrbitEngine::new(&f, 0.01).unwrap();
        let trace = engine.iterate(&s, x0, n).unwrap();
        let mut x = x0;
        let mut log_der = 0.0;
        for j in 0..n {
            log_der += derivative_unchecked(&f, s.get(j as i64), x).ln();
            x = value_unchecked(&f, s.get(j as i64), x);
            prop_assert_eq!(trace.points[j + 1], x);
        }
        prop_assert!((trace.log_der[n] - log_der).abs() <= 1e-9 * log_der.abs().max(1.0));
    }
}
