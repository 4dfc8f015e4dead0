use serde::{Deserialize, Serialize};

use super::{MapError, MapFamily, Side};

/// Shape-preserving piecewise cubic Hermite interpolant (Fritsch–Carlson
/// slopes) of strictly increasing data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneSpline {
    knots: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneSpline {
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self, MapError> {
        let n = knots.len();
        if n < 2 || values.len() != n {
            return Err(MapError::InvalidFamily(
                "spline needs at least two (knot, value) pairs".into(),
            ));
        }
        if knots.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(MapError::InvalidFamily("spline data must be finite".into()));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) || values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(MapError::InvalidFamily(
                "spline knots and values must be strictly increasing".into(),
            ));
        }
        let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1)
            .map(|i| (values[i + 1] - values[i]) / h[i])
            .collect();
        let mut slopes = vec![0.0; n];
        if n == 2 {
            slopes[0] = delta[0];
            slopes[1] = delta[0];
        } else {
            for i in 1..n - 1 {
                let w1 = 2.0 * h[i] + h[i - 1];
                let w2 = h[i] + 2.0 * h[i - 1];
                slopes[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
            }
            slopes[0] = end_slope(h[0], h[1], delta[0], delta[1]);
            slopes[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        Ok(MonotoneSpline {
            knots,
            values,
            slopes,
        })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[0], *self.knots.last().unwrap())
    }

    fn segment(&self, u: f64) -> usize {
        match self.knots.binary_search_by(|k| k.partial_cmp(&u).unwrap()) {
            Ok(i) => i.min(self.knots.len() - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(self.knots.len() - 2),
        }
    }

    /// Value and first three derivatives at `u` (clamped to the knot range).
    pub fn eval(&self, u: f64) -> [f64; 4] {
        let (lo, hi) = self.domain();
        let u = u.clamp(lo, hi);
        let i = self.segment(u);
        let h = self.knots[i + 1] - self.knots[i];
        let s = (u - self.knots[i]) / h;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.slopes[i] * h, self.slopes[i + 1] * h);
        // Cubic in s: a + b s + c s² + d s³.
        let a = y0;
        let b = m0;
        let c = 3.0 * (y1 - y0) - 2.0 * m0 - m1;
        let d = 2.0 * (y0 - y1) + m0 + m1;
        let v = a + s * (b + s * (c + s * d));
        let d1 = (b + s * (2.0 * c + 3.0 * s * d)) / h;
        let d2 = (2.0 * c + 6.0 * s * d) / (h * h);
        let d3 = 6.0 * d / (h * h * h);
        [v, d1, d2, d3]
    }
}

fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if m.signum() != d0.signum() {
        0.0
    } else if d0.signum() != d1.signum() && m.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        m
    }
}

/// Family built from a tabulated regular part per branch:
///
/// ```text
/// F_side(0, y) = φ_side(y^s) - 1,    F_side(t, y) = (1 - |t|/2) F_side(0, y) - |t|/2
/// ```
///
/// with `φ_side` a monotone spline on `[0, 1]`, `φ(0) = 0`. The noise enters
/// as an affine contraction toward `-1`, which keeps `|∂_t T| <= 1`, the
/// branch monotonicity and the sign of the Schwarzian. With
/// `φ(u) = 2u` this reproduces [`super::PowerFixture`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedFamily {
    pub s: f64,
    pub eps_max: f64,
    pub k1: f64,
    pub k2: f64,
    pub pos: MonotoneSpline,
    pub neg: MonotoneSpline,
}

impl TabulatedFamily {
    pub fn new(
        s: f64,
        eps_max: f64,
        k1: f64,
        k2: f64,
        pos: MonotoneSpline,
        neg: MonotoneSpline,
    ) -> Result<Self, MapError> {
        if !(s > 1.0 && s.is_finite()) {
            return Err(MapError::InvalidFamily(format!(
                "order s = {s} must exceed 1"
            )));
        }
        if !(eps_max > 0.0 && eps_max <= 1.0) {
            return Err(MapError::InvalidFamily(format!(
                "eps_max = {eps_max} must lie in (0, 1]"
            )));
        }
        if !(k1 > 0.0 && k2 >= k1) {
            return Err(MapError::InvalidFamily(
                "envelope needs 0 < K1 <= K2".into(),
            ));
        }
        for (name, sp) in [("pos", &pos), ("neg", &neg)] {
            let (lo, hi) = sp.domain();
            if lo != 0.0 || hi != 1.0 {
                return Err(MapError::InvalidFamily(format!(
                    "{name} spline must span u in [0, 1]"
                )));
            }
            if sp.eval(0.0)[0] != 0.0 {
                return Err(MapError::InvalidFamily(format!(
                    "{name} spline must start at 0"
                )));
            }
            if sp.eval(1.0)[0] > 2.0 {
                return Err(MapError::InvalidFamily(format!(
                    "{name} spline exceeds 2 at u = 1"
                )));
            }
        }
        Ok(TabulatedFamily {
            s,
            eps_max,
            k1,
            k2,
            pos,
            neg,
        })
    }

    fn spline(&self, side: Side) -> &MonotoneSpline {
        match side {
            Side::Pos => &self.pos,
            Side::Neg => &self.neg,
        }
    }
}

impl MapFamily for TabulatedFamily {
    fn order(&self) -> f64 {
        self.s
    }

    fn eps_max(&self) -> f64 {
        self.eps_max
    }

    fn envelope(&self) -> (f64, f64) {
        (self.k1, self.k2)
    }

    fn profile(&self, side: Side, t: f64, y: f64) -> f64 {
        let phi = self.spline(side).eval(y.powf(self.s))[0];
        let a = 1.0 - 0.5 * t.abs();
        a * (phi - 1.0) - 0.5 * t.abs()
    }

    fn profile_derivs(&self, side: Side, t: f64, y: f64) -> [f64; 3] {
        let s = self.s;
        let u = y.powf(s);
        let [_, p1, p2, p3] = self.spline(side).eval(u);
        let u1 = s * y.powf(s - 1.0);
        let u2 = s * (s - 1.0) * y.powf(s - 2.0);
        let u3 = s * (s - 1.0) * (s - 2.0) * y.powf(s - 3.0);
        let a = 1.0 - 0.5 * t.abs();
        [
            a * p1 * u1,
            a * (p2 * u1 * u1 + p1 * u2),
            a * (p3 * u1 * u1 * u1 + 3.0 * p2 * u1 * u2 + p1 * u3),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{derivative, evaluate, schwarzian, PowerFixture};

    #[test]
    fn linear_profile_reproduces_fixture() {
        let lin = MonotoneSpline::new(vec![0.0, 0.5, 1.0], vec![0.0, 1.0, 2.0]).unwrap();
        let tab = TabulatedFamily::new(2.0, 0.1, 3.8, 4.0, lin.clone(), lin).unwrap();
        let fix = PowerFixture::new(2.0, 0.1).unwrap();
        for &t in &[-0.1, -0.02, 0.0, 0.05] {
            for &x in &[-0.9, -0.4, -1e-3, 2e-3, 0.3, 1.0] {
                let a = evaluate(&tab, t, x).unwrap();
                let b = evaluate(&fix, t, x).unwrap();
                assert!((a - b).abs() < 1e-14, "t={t} x={x}");
                let da = derivative(&tab, t, x).unwrap();
                let db = derivative(&fix, t, x).unwrap();
                assert!((da - db).abs() < 1e-12);
                let sa = schwarzian(&tab, t, x).unwrap();
                let sb = schwarzian(&fix, t, x).unwrap();
                assert!(((sa - sb) / sb).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn spline_interpolates_and_stays_monotone() {
        let sp = MonotoneSpline::new(vec![0.0, 0.1, 0.5, 1.0], vec![0.0, 0.3, 1.2, 1.9]).unwrap();
        assert!((sp.eval(0.1)[0] - 0.3).abs() < 1e-15);
        assert!((sp.eval(0.5)[0] - 1.2).abs() < 1e-15);
        let mut prev = -1.0;
        for i in 0..=1000 {
            let v = sp.eval(i as f64 / 1000.0)[0];
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn rejects_bad_tables() {
        assert!(MonotoneSpline::new(vec![0.0, 1.0], vec![1.0, 0.5]).is_err());
        let sp = MonotoneSpline::new(vec![0.0, 1.0], vec![0.1, 1.0]).unwrap();
        let ok = MonotoneSpline::new(vec![0.0, 1.0], vec![0.0, 2.0]).unwrap();
        assert!(TabulatedFamily::new(2.0, 0.1, 1.0, 4.0, sp, ok).is_err());
    }
}
