//! Grid-sampled checks of the structural conditions on a family.

use serde::{Deserialize, Serialize};

use super::{derivative_unchecked, schwarzian, tilde_b, value_unchecked, MapFamily, Side};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Total number of x samples (half per side, log-spaced toward 0).
    pub n_x: usize,
    /// Number of t samples, uniform on `[-eps_max, eps_max]`.
    pub n_t: usize,
    /// Horizon for the critical-orbit conditions.
    pub horizon: usize,
    /// Smallest sampled `|x|`.
    pub x_min: f64,
    /// Threshold `δ_*` of the lower derivative bound near the singularity, if supplied.
    pub delta_star: Option<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            n_x: 10_000,
            n_t: 41,
            horizon: 20,
            x_min: 1e-6,
            delta_star: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: String) -> Self {
        Verdict { pass, detail }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub c1_limits: Verdict,
    pub c2_monotone: Verdict,
    pub c2_envelope: Verdict,
    pub c3_schwarzian: Verdict,
    pub range: Verdict,
    pub admissible_t_lipschitz: Verdict,
    pub r1_expansion: Verdict,
    pub r2_slow_recurrence: Verdict,
    pub r3_dense_critical_orbits: Verdict,
    /// Empirical `min DT / |x|^{s-1}` over the grid.
    pub k1_fitted: f64,
    /// Empirical `max DT / |x|^{s-1}` over the grid.
    pub k2_fitted: f64,
    /// Empirical `min_n (DT^n(±1))^{1/n}`.
    pub lambda_fitted: f64,
    /// Empirical `max_n -log|T^{n-1}(±1)| / n` (0 if the orbit never approaches 0).
    pub alpha_fitted: f64,
    /// Empirical sup of `|log(DT(x)/DT(y))| · |x| / |x - y|` over pairs with `2|x - y| < |x|`.
    pub distortion_constant: f64,
    /// Partial sums `Σ_{k<=n} 1/DT^k(v)` along the critical values `v = -1, +1`.
    pub summability_partial_sums: [Vec<f64>; 2],
    /// Lower derivative bound on `B̃(δ_*)`; `None` when `δ_*` was not supplied.
    pub delta_star_bound: Option<Verdict>,
}

impl ConditionReport {
    /// C1–C3, range and admissibility; R1–R3 are reported separately.
    pub fn structural_pass(&self) -> bool {
        [
            &self.c1_limits,
            &self.c2_monotone,
            &self.c2_envelope,
            &self.c3_schwarzian,
            &self.range,
            &self.admissible_t_lipschitz,
        ]
        .iter()
        .all(|v| v.pass)
    }
}

fn x_grid(spec: &GridSpec) -> Vec<f64> {
    let half = (spec.n_x / 2).max(2);
    let (lmin, lmax) = (spec.x_min.ln(), 0.0f64);
    let mut xs = Vec::with_capacity(2 * half);
    for i in 0..half {
        let x = (lmin + (lmax - lmin) * i as f64 / (half - 1) as f64)
            .exp()
            .min(1.0);
        xs.push(-x);
        xs.push(x);
    }
    xs
}

fn t_grid<M: MapFamily + ?Sized>(family: &M, spec: &GridSpec) -> Vec<f64> {
    let e = family.eps_max();
    if spec.n_t <= 1 {
        return vec![0.0];
    }
    (0..spec.n_t)
        .map(|j| -e + 2.0 * e * j as f64 / (spec.n_t - 1) as f64)
        .collect()
}

/// Samples the family on a grid and reports each condition.
pub fn verify_conditions<M: MapFamily + ?Sized>(family: &M, spec: &GridSpec) -> ConditionReport {
    let s = family.order();
    let (k1_decl, k2_decl) = family.envelope();
    let xs = x_grid(spec);
    let ts = t_grid(family, spec);

    // C1: one-sided limits at 0 on a shrinking grid.
    let mut c1_worst: f64 = 0.0;
    let mut c1_monotone = true;
    for &t in &ts {
        for side in [Side::Neg, Side::Pos] {
            let mut prev = f64::INFINITY;
            for k in 1..=12 {
                let x = side.sign() * 10f64.powi(-k);
                let dev = (value_unchecked(family, t, x) - side.limit_at_zero()).abs();
                if dev > prev + 1e-15 {
                    c1_monotone = false;
                }
                prev = dev;
            }
            c1_worst = c1_worst.max(prev);
        }
    }
    let c1 = Verdict::new(
        c1_monotone && c1_worst <= 1e-6,
        format!("max deviation from ∓1 at |x| = 1e-12: {c1_worst:.3e}"),
    );

    let mut min_der = f64::INFINITY;
    let mut k1_fit = f64::INFINITY;
    let mut k2_fit: f64 = 0.0;
    let mut max_schw = f64::NEG_INFINITY;
    let mut range_ok = true;
    let mut lip: f64 = 0.0;
    for &t in &ts {
        for &x in &xs {
            let d = derivative_unchecked(family, t, x);
            min_der = min_der.min(d);
            let ratio = d / x.abs().powf(s - 1.0);
            k1_fit = k1_fit.min(ratio);
            k2_fit = k2_fit.max(ratio);
            if let Ok(sw) = schwarzian(family, t, x) {
                max_schw = max_schw.max(sw);
            }
            let side = Side::of(x);
            let raw = side.sign() * family.profile(side, t, x.abs());
            if !(-1.0..=1.0).contains(&raw) {
                range_ok = false;
            }
        }
    }
    for w in ts.windows(2) {
        for &x in &xs {
            let dv = (value_unchecked(family, w[1], x) - value_unchecked(family, w[0], x)).abs();
            lip = lip.max(dv / (w[1] - w[0]));
        }
    }
    let c2m = Verdict::new(min_der > 0.0, format!("min DT over grid: {min_der:.6e}"));
    let tol = 1e-9;
    let c2e = Verdict::new(
        k1_fit >= k1_decl * (1.0 - tol) && k2_fit <= k2_decl * (1.0 + tol),
        format!(
            "fitted K1 = {k1_fit:.6}, K2 = {k2_fit:.6}; declared K1 = {k1_decl}, K2 = {k2_decl}"
        ),
    );
    let c3 = Verdict::new(
        max_schw < 0.0,
        format!("max Schwarzian over grid: {max_schw:.6e}"),
    );
    let range = Verdict::new(
        range_ok,
        "values within [-1, 1] before clipping".to_string(),
    );
    let adm = Verdict::new(lip <= 1.0 + 1e-12, format!("max |ΔT| / |Δt| = {lip:.6}"));

    // Admissibility distortion constant over pairs y = x(1 - h), 2|x - y| < |x|.
    let mut dist_c: f64 = 0.0;
    for &t in &ts {
        for &x in xs.iter().step_by(7) {
            for &h in &[0.49, 0.3, 0.1, 1e-2, 1e-4] {
                for y in [x * (1.0 - h), x * (1.0 + h)] {
                    if y.abs() > 1.0 || y == 0.0 {
                        continue;
                    }
                    let lr = (derivative_unchecked(family, t, x)
                        / derivative_unchecked(family, t, y))
                    .ln()
                    .abs();
                    dist_c = dist_c.max(lr * x.abs() / (x - y).abs());
                }
            }
        }
    }

    // R1/R2 and summability along the unperturbed orbits of the critical values ±1.
    let n = spec.horizon.max(1);
    let mut lambda = f64::INFINITY;
    let mut alpha: f64 = 0.0;
    let mut r2_ok = true;
    let mut sums: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let bins = (n / 2).max(4);
    let mut hit = vec![false; bins];
    for (idx, v) in [-1.0f64, 1.0].into_iter().enumerate() {
        let mut x = v;
        let mut log_d: f64 = 0.0;
        let mut partial = 0.0;
        for k in 1..=n {
            // x = T^{k-1}(v) here.
            if x == 0.0 {
                r2_ok = false;
                break;
            }
            alpha = alpha.max(-(x.abs().ln()) / k as f64);
            partial += (-log_d).exp();
            sums[idx].push(partial);
            let cell = (((x + 1.0) / 2.0) * bins as f64)
                .floor()
                .clamp(0.0, (bins - 1) as f64) as usize;
            hit[cell] = true;
            log_d += derivative_unchecked(family, 0.0, x).ln();
            lambda = lambda.min((log_d / k as f64).exp());
            x = value_unchecked(family, 0.0, x);
        }
    }
    let r1 = Verdict::new(lambda > 1.0, format!("λ = {lambda:.6} over horizon {n}"));
    let r2 = Verdict::new(r2_ok && alpha.is_finite(), format!("α = {alpha:.6}"));
    let covered = hit.iter().filter(|&&h| h).count();
    let r3 = Verdict::new(
        covered == bins,
        format!("critical orbits visit {covered} of {bins} cells within horizon {n}"),
    );

    let delta_star_bound = spec.delta_star.map(|ds| check_delta_star(family, &ts, ds));

    ConditionReport {
        c1_limits: c1,
        c2_monotone: c2m,
        c2_envelope: c2e,
        c3_schwarzian: c3,
        range,
        admissible_t_lipschitz: adm,
        r1_expansion: r1,
        r2_slow_recurrence: r2,
        r3_dense_critical_orbits: r3,
        k1_fitted: k1_fit,
        k2_fitted: k2_fit,
        lambda_fitted: lambda,
        alpha_fitted: alpha,
        distortion_constant: dist_c,
        summability_partial_sums: sums,
        delta_star_bound,
    }
}

/// `DT_t(x) >= D(max{|x|, δ_*})` for sampled `x ∈ B̃(δ_*)`.
fn check_delta_star<M: MapFamily + ?Sized>(family: &M, ts: &[f64], delta_star: f64) -> Verdict {
    let nb = match tilde_b(family, 0.0, delta_star) {
        Ok(nb) => nb,
        Err(e) => return Verdict::new(false, e.to_string()),
    };
    let mut worst = f64::INFINITY;
    for side in [Side::Neg, Side::Pos] {
        let edge = match side {
            Side::Neg => nb.neg.lo,
            Side::Pos => nb.pos.hi,
        };
        for i in 1..=50 {
            let x = edge * i as f64 / 50.0;
            let delta = x.abs().max(delta_star);
            let d = match tilde_b(family, 0.0, delta) {
                Ok(nbx) => nbx.d_ratio,
                Err(_) => continue,
            };
            for &t in ts {
                let dt = family.profile_slope(side, t, x.abs());
                worst = worst.min(dt - d);
            }
        }
    }
    Verdict::new(
        worst >= 0.0,
        format!("min DT - D(δ) on B̃(δ_*): {worst:.6e}"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::PowerFixture;

    #[test]
    fn fixture_report() {
        let f = PowerFixture::new(2.0, 0.01).unwrap();
        let rep = verify_conditions(&f, &GridSpec::default());
        assert!(rep.structural_pass(), "{rep:#?}");
        assert!(rep.r1_expansion.pass);
        assert!((rep.lambda_fitted - 4.0).abs() < 1e-12);
        assert!(rep.r2_slow_recurrence.pass);
        assert_eq!(rep.alpha_fitted, 0.0);
        assert!(!rep.r3_dense_critical_orbits.pass);
        // Partial sums of 4^{-k}: 1, 1.25, 1.3125, ... → 4/3.
        let last = *rep.summability_partial_sums[1].last().unwrap();
        assert!((last - 4.0 / 3.0).abs() < 1e-10);
        assert!(
            rep.k1_fitted >= f.envelope().0 * (1.0 - 1e-12)
                && rep.k2_fitted <= f.envelope().1 * (1.0 + 1e-12)
        );
        assert!(rep.distortion_constant > 0.9 && rep.distortion_constant < 1.4);
    }

    #[test]
    fn envelope_holds_pointwise() {
        let f = PowerFixture::new(2.5, 0.05).unwrap();
        let spec = GridSpec {
            n_x: 400,
            n_t: 5,
            ..GridSpec::default()
        };
        let rep = verify_conditions(&f, &spec);
        for &t in &t_grid(&f, &spec) {
            for &x in &x_grid(&spec) {
                let r = derivative_unchecked(&f, t, x) / x.abs().powf(1.5);
                assert!(rep.k1_fitted <= r * (1.0 + 1e-12) && r <= rep.k2_fitted * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn delta_star_fails_for_flat_singularity() {
        let f = PowerFixture::new(2.0, 0.01).unwrap();
        let spec = GridSpec {
            n_x: 200,
            n_t: 3,
            delta_star: Some(0.01),
            ..GridSpec::default()
        };
        let rep = verify_conditions(&f, &spec);
        assert!(!rep.delta_star_bound.unwrap().pass);
    }
}
