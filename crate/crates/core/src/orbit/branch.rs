//! Branch (cylinder) structure of `T_ω^n`.
//!
//! Every map `T_t` is increasing on each side of the singularity, so `T_ω^n`
//! is increasing on each cylinder `{x : sign(T_ω^i x) = s_i, i < n}`. The
//! cylinder's closure carries a continuous extension of `T_ω^n` (using the
//! one-sided limits `T_t(0±) = ∓1`), which is what [`Cylinder::eval`]
//! computes; preimages inside a cylinder are therefore plain monotone
//! bisections.

use serde::{Deserialize, Serialize};

use super::OrbitError;
use crate::map::{value_on, value_unchecked, MapFamily, Side};
use crate::noise::NoiseStream;
use crate::numerics::bisect_monotone;
use crate::Interval;

/// Cut points closer than this to a query point make the query ambiguous.
pub const CUT_MARGIN: f64 = 1e-12;

/// Itinerary of a cylinder: bit `k` set iff the `k`-th iterate is positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BranchId {
    pub len: u8,
    pub bits: u64,
}

impl BranchId {
    pub const EMPTY: BranchId = BranchId { len: 0, bits: 0 };

    pub fn push(self, side: Side) -> BranchId {
        assert!(self.len < 64, "itineraries are limited to 64 symbols");
        let bit = matches!(side, Side::Pos) as u64;
        BranchId {
            len: self.len + 1,
            bits: self.bits | (bit << self.len),
        }
    }

    pub fn side(&self, k: usize) -> Side {
        if (self.bits >> k) & 1 == 1 {
            Side::Pos
        } else {
            Side::Neg
        }
    }

    pub fn from_points(points: &[f64]) -> BranchId {
        points
            .iter()
            .fold(BranchId::EMPTY, |id, &x| id.push(Side::of(x)))
    }
}

/// One cylinder of `T_ω^n` together with the noise it was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cylinder {
    pub id: BranchId,
    pub noise: Vec<f64>,
    pub domain: Interval,
    /// `T_ω^n(domain)` (closure).
    pub image: Interval,
}

#[inline]
fn eval_itinerary<M: MapFamily + ?Sized>(family: &M, id: BranchId, noise: &[f64], x: f64) -> f64 {
    let mut y = x;
    for (k, &t) in noise.iter().enumerate().take(id.len as usize) {
        y = value_on(family, id.side(k), t, y);
    }
    y
}

fn side_domain(side: Side) -> Interval {
    match side {
        Side::Neg => Interval { lo: -1.0, hi: 0.0 },
        Side::Pos => Interval { lo: 0.0, hi: 1.0 },
    }
}

/// Preimage of `target` under one branch of `T_t`, clipped to its image.
fn pull_one<M: MapFamily + ?Sized>(
    family: &M,
    side: Side,
    t: f64,
    target: Interval,
) -> Option<Interval> {
    let dom = side_domain(side);
    let img = Interval {
        lo: value_on(family, side, t, dom.lo),
        hi: value_on(family, side, t, dom.hi),
    };
    let lo_t = target.lo.max(img.lo);
    let hi_t = target.hi.min(img.hi);
    if lo_t >= hi_t {
        return None;
    }
    let f = |x: f64| value_on(family, side, t, x);
    let lo = if target.lo <= img.lo {
        dom.lo
    } else {
        bisect_monotone(f, dom.lo, dom.hi, lo_t, true, 0.0)
    };
    let hi = if target.hi >= img.hi {
        dom.hi
    } else {
        bisect_monotone(f, dom.lo, dom.hi, hi_t, true, 0.0)
    };
    (lo < hi).then_some(Interval { lo, hi })
}

impl Cylinder {
    /// Builds the cylinder with itinerary `id` for the given noise prefix.
    pub fn new<M: MapFamily + ?Sized>(
        family: &M,
        id: BranchId,
        noise: Vec<f64>,
    ) -> Option<Cylinder> {
        assert!(noise.len() >= id.len as usize);
        let mut noise = noise;
        noise.truncate(id.len as usize);
        let mut cyl = Cylinder {
            id,
            noise,
            domain: Interval { lo: -1.0, hi: 1.0 },
            image: Interval { lo: -1.0, hi: 1.0 },
        };
        let domain = cyl.pullback(family, Interval { lo: -1.0, hi: 1.0 })?;
        cyl.domain = domain;
        cyl.image = Interval {
            lo: cyl.eval(family, domain.lo),
            hi: cyl.eval(family, domain.hi),
        };
        Some(cyl)
    }

    pub fn len(&self) -> usize {
        self.id.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.id.len == 0
    }

    /// Continuous extension of `T_ω^n` on the closure of the cylinder.
    #[inline]
    pub fn eval<M: MapFamily + ?Sized>(&self, family: &M, x: f64) -> f64 {
        eval_itinerary(family, self.id, &self.noise, x)
    }

    /// `T_ω^k` for `k <= n` along the cylinder.
    pub fn eval_prefix<M: MapFamily + ?Sized>(&self, family: &M, x: f64, k: usize) -> f64 {
        let mut y = x;
        for j in 0..k {
            y = value_on(family, self.id.side(j), self.noise[j], y);
        }
        y
    }

    /// `log DT_{σ^k ω}^{n-k}` evaluated at `T_ω^k(x)`.
    pub fn log_derivative_from<M: MapFamily + ?Sized>(&self, family: &M, x: f64, k: usize) -> f64 {
        let mut y = self.eval_prefix(family, x, k);
        let mut acc = 0.0;
        for j in k..self.len() {
            let side = self.id.side(j);
            acc += family
                .profile_slope(side, self.noise[j], (side.sign() * y).max(0.0))
                .ln();
            y = value_on(family, side, self.noise[j], y);
        }
        acc
    }

    /// Preimage of `target` inside the cylinder by successive one-step pullbacks.
    pub fn pullback<M: MapFamily + ?Sized>(
        &self,
        family: &M,
        target: Interval,
    ) -> Option<Interval> {
        let mut cur = target.intersect(&Interval { lo: -1.0, hi: 1.0 })?;
        for k in (0..self.len()).rev() {
            cur = pull_one(family, self.id.side(k), self.noise[k], cur)?;
        }
        Some(cur)
    }

    /// Preimage of `target` with endpoints refined against the composed map,
    /// so that `T_ω^n` of each interior endpoint lands on the target endpoint
    /// as closely as float resolution allows.
    pub fn preimage<M: MapFamily + ?Sized>(
        &self,
        family: &M,
        target: Interval,
    ) -> Option<Interval> {
        let rough = self.pullback(family, target)?;
        let lo = if target.lo > self.image.lo {
            self.polish(family, rough.lo, target.lo)
        } else {
            rough.lo
        };
        let hi = if target.hi < self.image.hi {
            self.polish(family, rough.hi, target.hi)
        } else {
            rough.hi
        };
        (lo < hi).then_some(Interval { lo, hi })
    }

    fn polish<M: MapFamily + ?Sized>(&self, family: &M, guess: f64, value: f64) -> f64 {
        let f = |x: f64| self.eval(family, x);
        let mut h = guess.abs().max(1e-300) * 1e-14;
        for _ in 0..80 {
            let lo = (guess - h).max(self.domain.lo);
            let hi = (guess + h).min(self.domain.hi);
            if f(lo) <= value && value <= f(hi) {
                return bisect_monotone(f, lo, hi, value, true, 0.0);
            }
            if lo == self.domain.lo && hi == self.domain.hi {
                break;
            }
            h *= 4.0;
        }
        guess
    }
}

/// A branch of `T_ω^n`: maximal open interval of monotonicity and its image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub id: BranchId,
    pub interval: Interval,
    pub image: Interval,
}

/// Exact branch structure of `T_ω^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchPartition {
    pub n: usize,
    /// Sorted cut points, including `-1`, `0` and `1`.
    pub cut_points: Vec<f64>,
    /// Branches sorted left to right.
    pub branches: Vec<Branch>,
    pub noise: Vec<f64>,
}

impl BranchPartition {
    pub fn cylinder(&self, index: usize) -> Cylinder {
        let b = &self.branches[index];
        Cylinder {
            id: b.id,
            noise: self.noise.clone(),
            domain: b.interval,
            image: b.image,
        }
    }

    /// Index of the branch containing `x`; `None` within [`CUT_MARGIN`] of a cut.
    pub fn locate(&self, x: f64) -> Option<usize> {
        let i = self.branches.partition_point(|b| b.interval.hi <= x);
        let b = self.branches.get(i)?;
        (x - b.interval.lo > CUT_MARGIN && b.interval.hi - x > CUT_MARGIN).then_some(i)
    }
}

/// Enumerates all branches of `T_ω^n` by splitting each branch of `T_ω^k` at
/// the preimage of 0.
pub fn branch_partition<M: MapFamily + ?Sized>(
    family: &M,
    stream: &NoiseStream,
    n: usize,
    cap: usize,
) -> Result<BranchPartition, OrbitError> {
    if n == 0 || n > cap || n > 63 {
        return Err(OrbitError::CapExceeded {
            n,
            cap: cap.min(63),
        });
    }
    let noise = stream.window(0, n);
    // (itinerary, domain, image under T^k)
    let mut level: Vec<(BranchId, Interval, Interval)> = vec![(
        BranchId::EMPTY,
        Interval { lo: -1.0, hi: 1.0 },
        Interval { lo: -1.0, hi: 1.0 },
    )];
    let mut cuts = vec![-1.0, 1.0];
    for (k, &t) in noise.iter().enumerate() {
        let mut next = Vec::with_capacity(level.len() * 2);
        for (id, dom, img) in level {
            let push_neg = |next: &mut Vec<_>, d: Interval| {
                let lo = value_on(family, Side::Neg, t, img.lo);
                let hi = value_on(family, Side::Neg, t, img.hi.min(0.0));
                next.push((id.push(Side::Neg), d, Interval { lo, hi }));
            };
            let push_pos = |next: &mut Vec<_>, d: Interval| {
                let lo = value_on(family, Side::Pos, t, img.lo.max(0.0));
                let hi = value_on(family, Side::Pos, t, img.hi);
                next.push((id.push(Side::Pos), d, Interval { lo, hi }));
            };
            if img.lo < 0.0 && 0.0 < img.hi {
                let c = if k == 0 {
                    0.0
                } else {
                    bisect_monotone(
                        |x| eval_itinerary(family, id, &noise, x),
                        dom.lo,
                        dom.hi,
                        0.0,
                        true,
                        0.0,
                    )
                };
                cuts.push(c);
                push_neg(&mut next, Interval { lo: dom.lo, hi: c });
                push_pos(&mut next, Interval { lo: c, hi: dom.hi });
            } else if img.hi <= 0.0 {
                push_neg(&mut next, dom);
            } else {
                push_pos(&mut next, dom);
            }
        }
        level = next;
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup();
    let mut branches: Vec<Branch> = level
        .into_iter()
        .map(|(id, interval, image)| Branch {
            id,
            interval,
            image,
        })
        .collect();
    branches.sort_by(|a, b| a.interval.lo.partial_cmp(&b.interval.lo).unwrap());
    Ok(BranchPartition {
        n,
        cut_points: cuts,
        branches,
        noise,
    })
}

/// Preimage of `target` under `T_ω^n` restricted to one branch.
pub fn preimage_in_branch<M: MapFamily + ?Sized>(
    family: &M,
    partition: &BranchPartition,
    branch: usize,
    target: Interval,
) -> Result<Interval, OrbitError> {
    let cyl = partition.cylinder(branch);
    let clipped = target
        .intersect(&cyl.image)
        .ok_or(OrbitError::EmptyIntersection)?;
    if clipped.lo <= cyl.image.lo && clipped.hi >= cyl.image.hi {
        return Ok(cyl.domain);
    }
    cyl.preimage(family, clipped)
        .ok_or(OrbitError::EmptyIntersection)
}

/// The cylinder of `T_ω^n` containing `x`.
pub fn cylinder_of<M: MapFamily + ?Sized>(
    family: &M,
    stream: &NoiseStream,
    x: f64,
    n: usize,
) -> Result<Cylinder, OrbitError> {
    let noise = stream.window(0, n);
    let mut y = x;
    let mut id = BranchId::EMPTY;
    for (k, &t) in noise.iter().enumerate() {
        if y == 0.0 {
            return Err(OrbitError::SingularHit { x0: x, step: k });
        }
        id = id.push(Side::of(y));
        y = value_unchecked(family, t, y);
    }
    Cylinder::new(family, id, noise).ok_or(OrbitError::EmptyIntersection)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::PowerFixture;

    fn fixture() -> PowerFixture {
        PowerFixture::new(2.0, 0.1).unwrap()
    }

    #[test]
    fn one_step_partition() {
        let f = fixture();
        let p = branch_partition(&f, &NoiseStream::new(1, 0.0), 1, 40).unwrap();
        assert_eq!(p.branches.len(), 2);
        assert_eq!(p.branches[0].interval, Interval { lo: -1.0, hi: 0.0 });
        assert_eq!(p.branches[1].interval, Interval { lo: 0.0, hi: 1.0 });
        assert_eq!(p.cut_points, vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn two_step_partition() {
        let f = fixture();
        let p = branch_partition(&f, &NoiseStream::new(1, 0.0), 2, 40).unwrap();
        assert_eq!(p.branches.len(), 4);
        let r = 0.5f64.sqrt();
        let expect = [-1.0, -r, 0.0, r, 1.0];
        assert_eq!(p.cut_points.len(), 5);
        for (a, b) in p.cut_points.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn three_step_partition_has_eight_branches() {
        let f = fixture();
        let p = branch_partition(&f, &NoiseStream::new(1, 0.0), 3, 40).unwrap();
        assert_eq!(p.branches.len(), 8);
    }

    #[test]
    fn cap_enforced() {
        let f = fixture();
        assert!(matches!(
            branch_partition(&f, &NoiseStream::new(1, 0.0), 41, 40),
            Err(OrbitError::CapExceeded { .. })
        ));
    }

    #[test]
    fn preimage_one_step() {
        let f = fixture();
        let p = branch_partition(&f, &NoiseStream::new(1, 0.0), 1, 40).unwrap();
        let j = preimage_in_branch(&f, &p, 1, Interval { lo: -0.9, hi: -0.8 }).unwrap();
        assert!((j.lo - 0.05f64.sqrt()).abs() < 1e-12);
        assert!((j.hi - 0.1f64.sqrt()).abs() < 1e-12);
        let full = preimage_in_branch(&f, &p, 1, p.branches[1].image).unwrap();
        assert_eq!(full, p.branches[1].interval);
        assert!(matches!(
            preimage_in_branch(&f, &p, 1, Interval { lo: 1.5, hi: 2.0 }),
            Err(OrbitError::EmptyIntersection)
        ));
    }

    #[test]
    fn cylinder_of_matches_partition() {
        let f = fixture();
        let s = NoiseStream::new(3, 0.05);
        let p = branch_partition(&f, &s, 6, 40).unwrap();
        for &x in &[-0.93, -0.41, 0.07, 0.333, 0.8] {
            let c = cylinder_of(&f, &s, x, 6).unwrap();
            let i = p.locate(x).unwrap();
            assert_eq!(c.id, p.branches[i].id);
            assert!((c.domain.lo - p.branches[i].interval.lo).abs() < 1e-9);
            assert!((c.domain.hi - p.branches[i].interval.hi).abs() < 1e-9);
        }
    }

    #[test]
    fn locate_rejects_points_on_cuts() {
        let f = fixture();
        let p = branch_partition(&f, &NoiseStream::new(1, 0.0), 2, 40).unwrap();
        assert!(p.locate(0.0).is_none());
        assert!(p.locate(0.5f64.sqrt()).is_none());
        assert_eq!(p.locate(0.9), Some(3));
    }
}
