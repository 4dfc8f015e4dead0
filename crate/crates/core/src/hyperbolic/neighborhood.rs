//! The neighborhoods `V_{x,n}` attached to hyperbolic times.
//!
//! `V_{x,n}` is the component of `(T_ω^n)^{-1} B(T_ω^n x, δ_0)` containing
//! `x`, intersected with `B(x, C^{-1} δ_0 e^{-λ′n/2})`. Along it `T_ω^n` is a
//! diffeomorphism with backward contraction and bounded distortion; the
//! certificate checks those properties on a sample grid.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{is_hyperbolic_time, HyperbolicConfig};
use crate::map::{MapFamily, Side};
use crate::noise::NoiseStream;
use crate::orbit::{cylinder_of, iterate, OrbitError};
use crate::Interval;

const CERT_SAMPLES: usize = 201;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VError {
    #[error("n = {n} is not a hyperbolic time of the orbit")]
    NotHyperbolic { n: usize },
    #[error("B(T^n x, δ0) is not contained in the image of the branch of T^n through x")]
    BranchStraddle,
    #[error(transparent)]
    Orbit(#[from] OrbitError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VCertificate {
    /// `T_ω^n` strictly increasing on the sample grid of `V`.
    pub diffeomorphism: bool,
    /// Smallest ratio `DT^{n-k}(T^k y) / (C e^{λ′(n-k)/2})` over `k` and samples.
    pub expansion_margin: f64,
    /// Largest `Σ_{i=k}^{n-1} sup |D²T/DT| · |T^i V|` over `k`.
    pub distortion: f64,
}

impl VCertificate {
    pub fn pass(&self) -> bool {
        self.diffeomorphism && self.expansion_margin >= 1.0 && self.distortion < 1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VNeighborhood {
    pub x: f64,
    pub n: usize,
    pub interval: Interval,
    /// `T_ω^n(V)`.
    pub image: Interval,
    /// True when the ball constraint did not cut the branch preimage, so that
    /// `T_ω^n` maps `V` onto `B(T_ω^n x, δ_0) ∩ I`.
    pub onto: bool,
    pub certificate: VCertificate,
}

/// Builds `V_{x,n}` and its certificate.
pub fn v_neighborhood<M: MapFamily + ?Sized>(
    family: &M,
    stream: &NoiseStream,
    x: f64,
    n: usize,
    cfg: &HyperbolicConfig,
) -> Result<VNeighborhood, VError> {
    let trace = iterate(family, stream, x, n, cfg.delta)?;
    if !is_hyperbolic_time(&trace.depths, n, cfg.c_prime) {
        return Err(VError::NotHyperbolic { n });
    }
    let cyl = cylinder_of(family, stream, x, n)?;
    let xn = trace.points[n];
    let target = Interval::ball(xn, cfg.delta0)
        .intersect(&Interval { lo: -1.0, hi: 1.0 })
        .expect("x_n lies in I");
    let tol = 1e-12;
    if target.lo < cyl.image.lo - tol || target.hi > cyl.image.hi + tol {
        return Err(VError::BranchStraddle);
    }
    let w = cyl
        .preimage(family, target)
        .ok_or(OrbitError::EmptyIntersection)?;
    let lambda_p = cfg.lambda_prime();
    let radius = cfg.delta0 / cfg.expansion_const * (-0.5 * lambda_p * n as f64).exp();
    let ball = Interval::ball(x, radius);
    let interval = w.intersect(&ball).ok_or(OrbitError::EmptyIntersection)?;
    let onto = interval == w;
    let image = Interval {
        lo: cyl.eval(family, interval.lo),
        hi: cyl.eval(family, interval.hi),
    };

    // Certificate on an interior sample grid.
    let ys: Vec<f64> = (0..CERT_SAMPLES)
        .map(|i| interval.lo + interval.len() * (i as f64 + 0.5) / CERT_SAMPLES as f64)
        .collect();
    // orbit[i][k] = T^k(y_i) along the cylinder.
    let orbits: Vec<Vec<f64>> = ys
        .iter()
        .map(|&y| {
            let mut pts = Vec::with_capacity(n + 1);
            let mut z = y;
            pts.push(z);
            for k in 0..n {
                z = crate::map::value_on(family, cyl.id.side(k), cyl.noise[k], z);
                pts.push(z);
            }
            pts
        })
        .collect();
    let diffeomorphism = orbits.windows(2).all(|w| w[0][n] < w[1][n])
        && orbits
            .iter()
            .all(|o| (0..n).all(|k| Side::of(o[k]) == cyl.id.side(k) && o[k] != 0.0));

    let log_slope = |k: usize, z: f64| {
        let side = cyl.id.side(k);
        family
            .profile_slope(side, cyl.noise[k], (side.sign() * z).max(0.0))
            .ln()
    };
    let mut expansion_margin = f64::INFINITY;
    for o in &orbits {
        let mut suffix = 0.0;
        for k in (0..n).rev() {
            suffix += log_slope(k, o[k]);
            let need = cfg.expansion_const.ln() + 0.5 * lambda_p * (n - k) as f64;
            expansion_margin = expansion_margin.min((suffix - need).exp());
        }
    }

    // N_k = Σ_{i>=k} sup_{T^i V} |D²T/DT| · |T^i V|; the largest is N_0.
    let mut distortion = 0.0;
    for k in (0..n).rev() {
        let side = cyl.id.side(k);
        let seg = Interval {
            lo: orbits.first().unwrap()[k],
            hi: orbits.last().unwrap()[k],
        };
        let sup = orbits
            .iter()
            .map(|o| {
                let [d1, d2, _] =
                    family.profile_derivs(side, cyl.noise[k], (side.sign() * o[k]).abs());
                (d2 / d1).abs()
            })
            .fold(0.0, f64::max);
        distortion += sup * seg.len();
    }

    Ok(VNeighborhood {
        x,
        n,
        interval,
        image,
        onto,
        certificate: VCertificate {
            diffeomorphism,
            expansion_margin,
            distortion,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{value_unchecked, PowerFixture};

    fn cfg() -> HyperbolicConfig {
        HyperbolicConfig {
            delta0: 0.05,
            ..HyperbolicConfig::default()
        }
    }

    #[test]
    fn one_step_image_is_ball() {
        let f = PowerFixture::new(2.0, 0.1).unwrap();
        let s = NoiseStream::new(1, 0.0);
        let v = v_neighborhood(&f, &s, 0.6, 1, &cfg()).unwrap();
        let y = value_unchecked(&f, 0.0, 0.6);
        assert!(v.onto);
        assert!((v.image.lo - (y - 0.05)).abs() < 1e-12 && (v.image.hi - (y + 0.05)).abs() < 1e-12);
        assert!(v.interval.contains(0.6));
    }

    #[test]
    fn three_step_certificate() {
        let f = PowerFixture::new(2.0, 0.1).unwrap();
        let s = NoiseStream::new(1, 0.0);
        let v = v_neighborhood(&f, &s, 0.9, 3, &cfg()).unwrap();
        assert!(v.certificate.pass(), "{:?}", v.certificate);
        let y3 = (0..3).fold(0.9, |z, _| value_unchecked(&f, 0.0, z));
        assert!((v.image.mid() - y3).abs() < 1e-9);
        assert!((v.image.len() - 0.1).abs() < 1e-9);
    }

    #[test]
    fn non_hyperbolic_time_rejected() {
        let f = PowerFixture::new(2.0, 0.1).unwrap();
        let s = NoiseStream::new(1, 0.0);
        // x = 0.001 has a deep first step.
        let c = HyperbolicConfig {
            c_prime: 0.4,
            ..cfg()
        };
        assert!(matches!(
            v_neighborhood(&f, &s, 0.001, 1, &c),
            Err(VError::NotHyperbolic { n: 1 })
        ));
    }
}
