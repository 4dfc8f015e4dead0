use rovella_core::NoiseStream;

// Kolmogorov-Smirnov distance of a sample to U[-eps, eps].
fn ks_uniform(mut v: Vec<f64>, eps: f64) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let cdf = (x + eps) / (2.0 * eps);
            (cdf - i as f64 / n).abs().max(((i + 1) as f64 / n - cdf).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn marginals_are_uniform_on_both_sides_of_zero() {
    let eps = 0.01;
    let s = NoiseStream::new(1, eps);
    let n = 100_000;
    let forward = s.window(0, n);
    let backward = s.window(-(n as i64), n);
    // 1.63 / sqrt(n) is the 1% critical value.
    let crit = 1.63 / (n as f64).sqrt();
    for v in [forward, backward] {
        assert!(v.iter().all(|x| x.abs() <= eps));
        let mean = v.iter().sum::<f64>() / n as f64;
        // sd of the mean is eps / sqrt(3n).
        assert!(mean.abs() < 4.0 * eps / (3.0 * n as f64).sqrt(), "mean {mean}");
        assert!(ks_uniform(v, eps) < crit);
    }
}

#[test]
fn lag_one_correlation_is_small() {
    let s = NoiseStream::new(9, 1.0);
    let v = s.window(-50_000, 100_000);
    let c: f64 = v.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / (v.len() - 1) as f64;
    // Var(U[-1,1]) = 1/3; the estimate has sd about 1/(3 sqrt(n)).
    assert!(c.abs() < 4.0 / (3.0 * (v.len() as f64).sqrt()), "{c}");
}

#[test]
fn distinct_seeds_give_distinct_streams() {
    let a = NoiseStream::new(1, 0.01).window(0, 64);
    let b = NoiseStream::new(2, 0.01).window(0, 64);
    assert!(a.iter().zip(&b).all(|(x, y)| x != y));
}
