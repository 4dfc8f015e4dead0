//! Experiment configuration: one TOML file, every field defaulted, flag
//! overrides applied on top and the whole tree re-validated.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use rovella_core::hyperbolic::{Delta0Constraints, HyperbolicConfig};
use rovella_core::map::{Family, MapFamily, MonotoneSpline, PowerFixture, TabulatedFamily};
use rovella_core::measures::{Direction, Grid, Method, ObservableKind};
use rovella_core::tower::TowerConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilySpec {
    Fixture {
        s: f64,
        eps_max: f64,
    },
    /// Monotone spline profiles `φ_side(u)` on knots in `[0, 1]`.
    Table {
        s: f64,
        eps_max: f64,
        k1: f64,
        k2: f64,
        knots: Vec<f64>,
        pos: Vec<f64>,
        neg: Vec<f64>,
    },
}

impl Default for FamilySpec {
    fn default() -> Self {
        FamilySpec::Fixture { s: 2.0, eps_max: 0.1 }
    }
}

impl FamilySpec {
    pub fn eps_max(&self) -> f64 {
        match self {
            FamilySpec::Fixture { eps_max, .. } | FamilySpec::Table { eps_max, .. } => *eps_max,
        }
    }

    pub fn build(&self) -> Result<Family, ConfigError> {
        let err = |e: rovella_core::MapError| invalid(format!("family: {e}"));
        match self {
            FamilySpec::Fixture { s, eps_max } => Ok(Family::Fixture(PowerFixture::new(*s, *eps_max).map_err(err)?)),
            FamilySpec::Table { s, eps_max, k1, k2, knots, pos, neg } => {
                let pos = MonotoneSpline::new(knots.clone(), pos.clone()).map_err(err)?;
                let neg = MonotoneSpline::new(knots.clone(), neg.clone()).map_err(err)?;
                Ok(Family::Table(TabulatedFamily::new(*s, *eps_max, *k1, *k2, pos, neg).map_err(err)?))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub seed: u64,
    pub eps: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection { seed: 1, eps: 0.01 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrbitSection {
    pub x0: f64,
    pub n: usize,
}

impl Default for OrbitSection {
    fn default() -> Self {
        OrbitSection { x0: 0.3, n: 1000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSection {
    pub samples: usize,
    pub n_max: usize,
    /// Survival rows with fewer survivors are left out of the fits.
    pub min_survivors: u64,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        EnsembleSection { samples: 100_000, n_max: 60, min_survivors: 100 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TowerSection {
    /// Must equal `delta0 / 2` when given.
    pub delta_prime: Option<f64>,
    pub n_max: usize,
    pub seed_grid: usize,
    pub gap_seeds: usize,
    pub aperiodic_scan: usize,
    /// Pairs sampled by the distortion check of `certify-tower`.
    pub pairs: usize,
}

impl Default for TowerSection {
    fn default() -> Self {
        let t = TowerConfig::default();
        TowerSection {
            delta_prime: None,
            n_max: t.n_max,
            seed_grid: t.seed_grid,
            gap_seeds: t.gap_seeds,
            aperiodic_scan: t.aperiodic_scan,
            pairs: 16_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasuresSection {
    pub grid_m: usize,
    pub m_past: usize,
    pub n_max: usize,
    pub burn_in: usize,
    pub phi: String,
    pub psi: String,
    pub method: Method,
    pub direction: Direction,
    /// Monte Carlo ensemble size.
    pub samples: usize,
}

impl Default for MeasuresSection {
    fn default() -> Self {
        MeasuresSection {
            grid_m: 2048,
            m_past: 200,
            n_max: 40,
            burn_in: 5,
            phi: "x".into(),
            psi: "sign".into(),
            method: Method::Ulam,
            direction: Direction::Forward,
            samples: 100_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub directory: String,
    pub formats: Vec<Format>,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { directory: "out".into(), formats: vec![Format::Csv, Format::Json] }
    }
}

impl OutputSection {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub family: FamilySpec,
    pub noise: NoiseSection,
    pub hyperbolic: HyperbolicConfig,
    pub orbit: OrbitSection,
    pub ensemble: EnsembleSection,
    pub tower: TowerSection,
    pub measures: MeasuresSection,
    pub output: OutputSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &str) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        Self::from_toml(&text)
    }

    /// Canonical serialization, hashed into the manifest.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn tower_config(&self) -> TowerConfig {
        TowerConfig {
            hyperbolic: self.hyperbolic,
            n_max: self.tower.n_max,
            seed_grid: self.tower.seed_grid,
            gap_seeds: self.tower.gap_seeds,
            aperiodic_scan: self.tower.aperiodic_scan,
            ..TowerConfig::default()
        }
    }

    pub fn grid(&self) -> Grid {
        Grid { m: self.measures.grid_m }
    }

    pub fn observables(&self) -> Result<(ObservableKind, ObservableKind), ConfigError> {
        let parse = |name: &str, s: &str| {
            ObservableKind::parse(s).ok_or_else(|| invalid(format!("measures.{name} = {s:?} is not a known observable")))
        };
        Ok((parse("phi", &self.measures.phi)?, parse("psi", &self.measures.psi)?))
    }

    /// Checks every constraint chain. Returns the built family and the
    /// status of the `δ_0` smallness conditions, which are reported but do
    /// not block a run.
    pub fn validate(&self) -> Result<(Family, Delta0Constraints), ConfigError> {
        let family = self.family.build()?;
        self.hyperbolic.validate().map_err(|e| invalid(format!("hyperbolic: {e}")))?;
        if !(self.noise.eps >= 0.0 && self.noise.eps <= self.family.eps_max()) {
            return Err(invalid(format!(
                "need 0 <= eps <= eps_max (got eps = {}, eps_max = {})",
                self.noise.eps,
                self.family.eps_max()
            )));
        }
        if let Some(dp) = self.tower.delta_prime {
            if (dp - 0.5 * self.hyperbolic.delta0).abs() > 1e-12 * dp.abs().max(1.0) {
                return Err(invalid(format!(
                    "need delta_prime = delta0 / 2 (got delta_prime = {dp}, delta0 = {})",
                    self.hyperbolic.delta0
                )));
            }
        }
        rovella_core::map::tilde_b(&family, 0.0, self.hyperbolic.delta)
            .and_then(|_| rovella_core::map::tilde_b(&family, 0.0, 0.5 * self.hyperbolic.delta0))
            .map_err(|e| invalid(format!("hyperbolic: {e}")))?;
        if self.tower.n_max > 63 || self.tower.aperiodic_scan > 63 {
            return Err(invalid("tower horizons are limited to 63 (itinerary width)"));
        }
        if self.measures.grid_m < 16 || self.measures.grid_m % 2 != 0 {
            return Err(invalid(format!("measures.grid_m = {} must be even and at least 16", self.measures.grid_m)));
        }
        if self.ensemble.samples == 0 || self.ensemble.n_max == 0 || self.orbit.n == 0 {
            return Err(invalid("sample counts and horizons must be positive"));
        }
        if !(-1.0..=1.0).contains(&self.orbit.x0) || self.orbit.x0 == 0.0 {
            return Err(invalid(format!("orbit.x0 = {} must lie in [-1, 1] \\ {{0}}", self.orbit.x0)));
        }
        if self.output.formats.is_empty() {
            return Err(invalid("output.formats is empty"));
        }
        self.observables()?;
        let (_, k2) = family.envelope();
        let constraints = self.hyperbolic.delta0_constraints(family.order(), k2, 1.0);
        Ok((family, constraints))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = ExperimentConfig::from_toml("[noise]\nseed = 7\n[hyperbolic]\nc = 0.1\n").unwrap();
        assert_eq!(cfg.noise.seed, 7);
        assert_eq!(cfg.noise.eps, 0.01);
        assert_eq!(cfg.hyperbolic.c, 0.1);
        assert_eq!(cfg.hyperbolic.c_prime, HyperbolicConfig::default().c_prime);
    }

    #[test]
    fn chain_violations_are_named() {
        let mut cfg = ExperimentConfig::default();
        cfg.hyperbolic.c_prime = cfg.hyperbolic.c;
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("c < c_prime"), "{msg}");
        let mut cfg = ExperimentConfig::default();
        cfg.noise.eps = 0.5;
        assert!(cfg.validate().unwrap_err().to_string().contains("eps_max"));
        let mut cfg = ExperimentConfig::default();
        cfg.tower.delta_prime = Some(0.2);
        assert!(cfg.validate().unwrap_err().to_string().contains("delta0 / 2"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml("[noise]\nsede = 1\n").is_err());
    }

    #[test]
    fn table_family_parses() {
        let text = r#"
[family]
kind = "table"
s = 2.0
eps_max = 0.1
k1 = 4.0
k2 = 4.0
knots = [0.0, 0.5, 1.0]
pos = [0.0, 1.0, 2.0]
neg = [0.0, 1.0, 2.0]
"#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert!(matches!(cfg.validate().unwrap().0, Family::Table(_)));
    }
}
