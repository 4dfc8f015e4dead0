//! Small numeric helpers shared across modules.

/// Solves `f(x) = target` for a monotone `f` on `[a, b]` by bisection.
///
/// `increasing` fixes the orientation so the endpoints never need to be
/// evaluated (they may sit on a singularity). Bisection stops when the
/// bracket is narrower than `width` or when the midpoint is no longer
/// representable between the bracket ends. With `width == 0.0` the search runs
/// to float adjacency and returns whichever evaluated bracket end has the
/// smaller residual.
pub fn bisect_monotone<F>(
    mut f: F,
    a: f64,
    b: f64,
    target: f64,
    increasing: bool,
    width: f64,
) -> f64
where
    F: FnMut(f64) -> f64,
{
    let (mut lo, mut hi) = (a.min(b), a.max(b));
    let (mut f_lo, mut f_hi): (Option<f64>, Option<f64>) = (None, None);
    for _ in 0..2000 {
        if hi - lo <= width {
            break;
        }
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        let below = if increasing { fm < target } else { fm > target };
        if below {
            lo = mid;
            f_lo = Some(fm);
        } else {
            hi = mid;
            f_hi = Some(fm);
        }
    }
    if width > 0.0 {
        return lo + 0.5 * (hi - lo);
    }
    match (f_lo, f_hi) {
        (Some(fl), Some(fh)) => {
            if (fl - target).abs() <= (fh - target).abs() {
                lo
            } else {
                hi
            }
        }
        (Some(_), None) => lo,
        (None, Some(_)) => hi,
        (None, None) => lo + 0.5 * (hi - lo),
    }
}

/// Ordinary least squares `y = a + b x`, returning `(a, b, r²)`.
///
/// `r²` is reported as 0 when `y` has no variance.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - mx;
        let dy = y - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 && sxx > 0.0 {
        let ss_res: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| {
                let e = y - (intercept + slope * x);
                e * e
            })
            .sum();
        (1.0 - ss_res / syy).max(0.0)
    } else {
        0.0
    };
    (intercept, slope, r2)
}

pub fn gcd(a: u64, b: u64) -> u64 {
    let (mut a, mut b) = (a, b);
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_square_root() {
        let r = bisect_monotone(|x| x * x, 0.0, 2.0, 2.0, true, 1e-14);
        assert!((r - 2f64.sqrt()).abs() < 1e-13);
        let r = bisect_monotone(|x| -x * x, 0.0, 2.0, -2.0, false, 0.0);
        assert!((r - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn exact_line() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 1.5 - 0.25 * x).collect();
        let (a, b, r2) = linear_fit(&xs, &ys);
        assert!((a - 1.5).abs() < 1e-12 && (b + 0.25).abs() < 1e-12);
        assert!((r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gcd_basics() {
        assert_eq!(gcd(12, 18), 6);
        assert_eq!(gcd(7, 0), 7);
        assert_eq!(gcd(5, 6), 1);
    }
}
