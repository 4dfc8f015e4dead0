//! Test observables with declared regularity.

use serde::{Deserialize, Serialize};

/// Built-in observables, addressable by name from configs and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObservableKind {
    Constant {
        value: f64,
    },
    /// `x`.
    Identity,
    /// `sign(x)` (bounded, not continuous).
    Sign,
    /// `|x|^η`.
    AbsPower {
        eta: f64,
    },
    /// `cos(π k x)`.
    Cosine {
        k: f64,
    },
}

impl ObservableKind {
    /// Parses `const:<v>`, `x`, `sign`, `abs:<eta>` or `cos:<k>`.
    pub fn parse(s: &str) -> Option<ObservableKind> {
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a.parse::<f64>().ok()?)),
            None => (s, None),
        };
        match (head, arg) {
            ("const", Some(value)) => Some(ObservableKind::Constant { value }),
            ("const", None) => Some(ObservableKind::Constant { value: 1.0 }),
            ("x", None) => Some(ObservableKind::Identity),
            ("sign", None) => Some(ObservableKind::Sign),
            ("abs", Some(eta)) if eta > 0.0 && eta <= 1.0 => Some(ObservableKind::AbsPower { eta }),
            ("cos", Some(k)) => Some(ObservableKind::Cosine { k }),
            _ => None,
        }
    }

    pub fn name(&self) -> String {
        match self {
            ObservableKind::Constant { value } => format!("const:{value}"),
            ObservableKind::Identity => "x".into(),
            ObservableKind::Sign => "sign".into(),
            ObservableKind::AbsPower { eta } => format!("abs:{eta}"),
            ObservableKind::Cosine { k } => format!("cos:{k}"),
        }
    }
}

/// An observable together with its declared Hölder exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observable {
    pub kind: ObservableKind,
    pub eta: f64,
}

impl Observable {
    pub fn new(kind: ObservableKind) -> Self {
        let eta = match kind {
            ObservableKind::AbsPower { eta } => eta,
            _ => 1.0,
        };
        Observable { kind, eta }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self.kind {
            ObservableKind::Constant { value } => value,
            ObservableKind::Identity => x,
            ObservableKind::Sign => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            ObservableKind::AbsPower { eta } => x.abs().powf(eta),
            ObservableKind::Cosine { k } => (std::f64::consts::PI * k * x).cos(),
        }
    }

    /// Exact cell averages on `m` equal cells of `[-1, 1]`.
    pub fn cell_averages(&self, m: usize) -> Vec<f64> {
        let w = 2.0 / m as f64;
        (0..m)
            .map(|i| {
                let a = -1.0 + w * i as f64;
                let b = a + w;
                match self.kind {
                    ObservableKind::Constant { value } => value,
                    ObservableKind::Identity => 0.5 * (a + b),
                    ObservableKind::Sign => {
                        if a >= 0.0 {
                            1.0
                        } else if b <= 0.0 {
                            -1.0
                        } else {
                            (b + a) / w
                        }
                    }
                    ObservableKind::AbsPower { eta } => {
                        let prim = |x: f64| x.signum() * x.abs().powf(eta + 1.0) / (eta + 1.0);
                        (prim(b) - prim(a)) / w
                    }
                    ObservableKind::Cosine { k } => {
                        if k == 0.0 {
                            1.0
                        } else {
                            let c = std::f64::consts::PI * k;
                            ((c * b).sin() - (c * a).sin()) / (c * w)
                        }
                    }
                }
            })
            .collect()
    }

    /// Sup norm on a grid of `n` points.
    pub fn sup_norm(&self, n: usize) -> f64 {
        (0..=n)
            .map(|i| self.eval(-1.0 + 2.0 * i as f64 / n as f64).abs())
            .fold(0.0, f64::max)
    }

    /// Grid estimate of the Hölder seminorm `sup |f(x) - f(y)| / |x - y|^η`
    /// over pairs at dyadic separations.
    pub fn holder_seminorm(&self, n: usize) -> f64 {
        let xs: Vec<f64> = (0..=n).map(|i| -1.0 + 2.0 * i as f64 / n as f64).collect();
        let mut best = 0.0f64;
        let mut step = 1;
        while step <= n {
            for i in 0..=(n - step) {
                let d = (xs[i + step] - xs[i]).abs();
                let q = (self.eval(xs[i + step]) - self.eval(xs[i])).abs() / d.powf(self.eta);
                best = best.max(q);
            }
            step *= 2;
        }
        best
    }
}
