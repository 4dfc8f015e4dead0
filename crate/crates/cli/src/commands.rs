//! Subcommand bodies. Each returns its artifacts as bytes so the caller can
//! hash, write and compare them.

use clap::{Args, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use rovella_core::hyperbolic::{fit_survival, preferred_binding, run_ensemble, BindingParams, EnsembleSpec, TailTable};
use rovella_core::map::{verify_conditions, Family, GridSpec, Side};
use rovella_core::measures::{
    fit_exponential_points, quenched_correlation, CorrelationParams, DensityVector, Direction,
    Method, Observable, OperatorCache,
};
use rovella_core::noise::NoiseStream;
use rovella_core::orbit::{BranchId, OrbitEngine};
use rovella_core::tower::{build_return_partition, certify_axioms, CertifyOptions, ReturnPartition};

use crate::config::{ExperimentConfig, Format};
use crate::RunError;

/// Singular-hit rate above which an ensemble run counts as a numeric failure.
pub const SINGULAR_LIMIT: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Dump one random orbit with derivatives and return depths.
    SimulateOrbit(OrbitArgs),
    /// Grid checks of the structural conditions on the family.
    VerifyFamily,
    /// Survival of the first hyperbolic time and first hyperbolic return.
    HyperbolicTails,
    /// Survival of the bad sets `E_n`.
    BadSetTails,
    /// Return partition over the base for the configured noise.
    BuildPartition,
    /// Numeric verdicts on the tower axioms.
    CertifyTower,
    /// Equivariant sample density on the Ulam grid.
    Density(MeasureArgs),
    /// Quenched correlation series and its exponential fit.
    Correlation(CorrelationArgs),
    /// Exponential fit of a column of a CSV file.
    Fit(FitArgs),
    /// Rerun a recorded command from its manifest.
    #[serde(skip)]
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::SimulateOrbit(_) => "simulate-orbit",
            Command::VerifyFamily => "verify-family",
            Command::HyperbolicTails => "hyperbolic-tails",
            Command::BadSetTails => "bad-set-tails",
            Command::BuildPartition => "build-partition",
            Command::CertifyTower => "certify-tower",
            Command::Density(_) => "density",
            Command::Correlation(_) => "correlation",
            Command::Fit(_) => "fit",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct OrbitArgs {
    #[arg(long)]
    pub x0: Option<f64>,
    /// Number of steps.
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct MeasureArgs {
    #[arg(long)]
    pub m_past: Option<usize>,
    /// Number of Ulam cells.
    #[arg(long)]
    pub grid: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct CorrelationArgs {
    #[command(flatten)]
    pub measure: MeasureArgs,
    /// Observable applied at time n: x, sign, const:v, abs:eta, cos:k.
    #[arg(long)]
    pub phi: Option<String>,
    /// Observable applied at time 0.
    #[arg(long)]
    pub psi: Option<String>,
    /// ulam or monte-carlo.
    #[arg(long, value_parser = parse_method)]
    pub method: Option<Method>,
    /// forward or backward.
    #[arg(long, value_parser = parse_direction)]
    pub direction: Option<Direction>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    match s {
        "ulam" => Ok(Method::Ulam),
        "monte-carlo" | "monte_carlo" | "mc" => Ok(Method::MonteCarlo),
        _ => Err(format!("unknown method {s:?} (ulam, monte-carlo)")),
    }
}

fn parse_direction(s: &str) -> Result<Direction, String> {
    match s {
        "forward" => Ok(Direction::Forward),
        "backward" => Ok(Direction::Backward),
        _ => Err(format!("unknown direction {s:?} (forward, backward)")),
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct FitArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub input: String,
    #[arg(long, default_value = "n")]
    pub x_column: String,
    #[arg(long, default_value = "C_n")]
    pub y_column: String,
    /// Rows with x below this are ignored.
    #[arg(long, default_value_t = 0.0)]
    pub burn_in: f64,
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct ReplayArgs {
    /// Path to a manifest.json written by an earlier run.
    #[arg(long)]
    pub manifest: String,
    /// Fail unless every artifact hashes to the recorded value.
    #[arg(long)]
    pub check: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

/// Artifacts plus an optional numeric-failure message (exit code 3).
#[derive(Debug, Default)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub numeric_failure: Option<String>,
}

struct Sink<'a> {
    cfg: &'a ExperimentConfig,
    out: Outcome,
}

impl Sink<'_> {
    fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), RunError> {
        if !self.cfg.output.wants(Format::Csv) {
            return Ok(());
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).map_err(RunError::io)?;
        for row in rows {
            w.write_record(&row).map_err(RunError::io)?;
        }
        let bytes = w.into_inner().map_err(|e| RunError::io(e.into_error()))?;
        self.out.artifacts.push(Artifact { name: name.into(), bytes });
        Ok(())
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<(), RunError> {
        if !self.cfg.output.wants(Format::Json) {
            return Ok(());
        }
        let mut bytes = serde_json::to_vec_pretty(value).map_err(RunError::io)?;
        bytes.push(b'\n');
        self.out.artifacts.push(Artifact { name: name.into(), bytes });
        Ok(())
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn itinerary(id: &BranchId) -> String {
    (0..id.len as usize).map(|k| if id.side(k) == Side::Pos { '+' } else { '-' }).collect()
}

/// Applies the subcommand's own flags to the config before validation.
pub fn apply_args(cmd: &Command, cfg: &mut ExperimentConfig) {
    let measure = |m: &MeasureArgs, cfg: &mut ExperimentConfig| {
        if let Some(v) = m.m_past {
            cfg.measures.m_past = v;
        }
        if let Some(v) = m.grid {
            cfg.measures.grid_m = v;
        }
    };
    match cmd {
        Command::SimulateOrbit(a) => {
            if let Some(v) = a.x0 {
                cfg.orbit.x0 = v;
            }
            if let Some(v) = a.n {
                cfg.orbit.n = v;
            }
        }
        Command::Density(m) => measure(m, cfg),
        Command::Correlation(a) => {
            measure(&a.measure, cfg);
            if let Some(v) = &a.phi {
                cfg.measures.phi = v.clone();
            }
            if let Some(v) = &a.psi {
                cfg.measures.psi = v.clone();
            }
            if let Some(v) = a.method {
                cfg.measures.method = v;
            }
            if let Some(v) = a.direction {
                cfg.measures.direction = v;
            }
        }
        _ => {}
    }
}

pub fn execute(cmd: &Command, cfg: &ExperimentConfig, family: &Family) -> Result<Outcome, RunError> {
    let mut sink = Sink { cfg, out: Outcome::default() };
    let stream = NoiseStream::new(cfg.noise.seed, cfg.noise.eps);
    match cmd {
        Command::SimulateOrbit(_) => simulate_orbit(&mut sink, family, &stream)?,
        Command::VerifyFamily => verify_family(&mut sink, family)?,
        Command::HyperbolicTails => tails(&mut sink, family, false)?,
        Command::BadSetTails => tails(&mut sink, family, true)?,
        Command::BuildPartition => partition(&mut sink, family, &stream)?,
        Command::CertifyTower => certify(&mut sink, family, &stream)?,
        Command::Density(_) => density(&mut sink, family, &stream)?,
        Command::Correlation(_) => correlation(&mut sink, family, &stream)?,
        Command::Fit(a) => fit(&mut sink, a)?,
        Command::Replay(_) => unreachable!("replay is dispatched by the runner"),
    }
    Ok(sink.out)
}

fn simulate_orbit(sink: &mut Sink, family: &Family, stream: &NoiseStream) -> Result<(), RunError> {
    let cfg = sink.cfg;
    let engine = OrbitEngine::new(family, cfg.hyperbolic.delta).map_err(RunError::numeric)?;
    let trace = engine.iterate(stream, cfg.orbit.x0, cfg.orbit.n).map_err(RunError::numeric)?;
    let rows = (0..=trace.len()).map(|i| {
        vec![
            i.to_string(),
            num(trace.points[i]),
            num(trace.log_der[i]),
            trace.depths.get(i).map_or(String::new(), |d| d.to_string()),
            (trace.visits[i] as u8).to_string(),
        ]
    });
    sink.csv("orbit.csv", &["i", "x_i", "log_der_i", "depth_i", "in_tilde_B"], rows)
}

fn verify_family(sink: &mut Sink, family: &Family) -> Result<(), RunError> {
    let cfg = sink.cfg;
    let report = verify_conditions(family, &GridSpec::default());
    let binding = [Side::Neg, Side::Pos].map(|side| {
        preferred_binding(family, side, cfg.hyperbolic.delta, &BindingParams::default())
            .map_err(|e| e.to_string())
    });
    let (_, k2) = rovella_core::MapFamily::envelope(family);
    let doc = json!({
        "structural_pass": report.structural_pass(),
        "conditions": report,
        "delta0_constraints": cfg.hyperbolic.delta0_constraints(rovella_core::MapFamily::order(family), k2, 1.0),
        "binding": { "neg": binding[0], "pos": binding[1] },
    });
    sink.json("family_report.json", &doc)
}

fn tail_rows(t: &TailTable) -> Vec<Vec<String>> {
    t.rows
        .iter()
        .map(|r| vec![r.n.to_string(), r.count.to_string(), r.total.to_string(), num(r.fraction)])
        .collect()
}

fn tails(sink: &mut Sink, family: &Family, bad_set: bool) -> Result<(), RunError> {
    let cfg = sink.cfg;
    let spec = EnsembleSpec {
        samples: cfg.ensemble.samples,
        n_max: cfg.ensemble.n_max,
        seed: cfg.noise.seed,
        eps: cfg.noise.eps,
    };
    let summary = run_ensemble(family, &cfg.hyperbolic, &spec).map_err(RunError::numeric)?;
    let header = ["n", "survivors", "total", "fraction"];
    let tables: Vec<(&str, &TailTable)> = if bad_set {
        vec![("bad_set", &summary.bad_set)]
    } else {
        vec![("first_hyperbolic", &summary.first_hyperbolic), ("first_return", &summary.first_return)]
    };
    let mut fits = serde_json::Map::new();
    for (name, table) in &tables {
        sink.csv(&format!("tails_{name}.csv"), &header, tail_rows(table))?;
        let fit = fit_survival(table, cfg.ensemble.min_survivors).ok();
        fits.insert(name.to_string(), json!(fit));
    }
    let total = summary.valid + summary.singular;
    let rate = if total == 0 { 0.0 } else { summary.singular as f64 / total as f64 };
    let doc = json!({
        "samples": spec.samples,
        "n_max": spec.n_max,
        "valid": summary.valid,
        "singular": summary.singular,
        "singular_rate": rate,
        "min_survivors": cfg.ensemble.min_survivors,
        "fits": fits,
    });
    sink.json(if bad_set { "bad_set.json" } else { "tails.json" }, &doc)?;
    if rate > SINGULAR_LIMIT {
        sink.out.numeric_failure =
            Some(format!("{} of {total} orbits hit the singularity (limit {SINGULAR_LIMIT})", summary.singular));
    }
    Ok(())
}

fn partition_summary(p: &ReturnPartition, family: &Family) -> serde_json::Value {
    let tails: Vec<f64> = (1..=p.horizon).map(|n| p.tail_measure(n)).collect();
    let ns: Vec<f64> = (1..=p.horizon).map(|n| n as f64).collect();
    let max_residual = (0..p.elements.len()).map(|i| p.markov_residual(family, i)).fold(0.0, f64::max);
    json!({
        "base": p.base,
        "delta_prime": p.delta_prime,
        "elements": p.elements.len(),
        "horizon": p.horizon,
        "uncovered": p.uncovered,
        "gcd": p.gcd_of_times(),
        "seeded_times": p.seeded().map(|e| e.tau).collect::<Vec<_>>(),
        "max_markov_residual": max_residual,
        "tail_measure": tails,
        "tail_fit": fit_exponential_points(&ns, &tails).ok(),
    })
}

fn partition(sink: &mut Sink, family: &Family, stream: &NoiseStream) -> Result<(), RunError> {
    let p = build_return_partition(family, stream, &sink.cfg.tower_config()).map_err(RunError::numeric)?;
    let rows = p.elements.iter().map(|e| {
        vec![num(e.interval.lo), num(e.interval.hi), e.tau.to_string(), itinerary(&e.branch)]
    });
    sink.csv("partition.csv", &["left", "right", "tau", "branch_id"], rows)?;
    sink.json("partition.json", &partition_summary(&p, family))
}

fn certify(sink: &mut Sink, family: &Family, stream: &NoiseStream) -> Result<(), RunError> {
    let cfg = sink.cfg;
    let tower_cfg = cfg.tower_config();
    let p = build_return_partition(family, stream, &tower_cfg).map_err(RunError::numeric)?;
    let opts = CertifyOptions { pairs: cfg.tower.pairs, seed: cfg.noise.seed, ..CertifyOptions::default() };
    let report = certify_axioms(family, stream, &p, &tower_cfg, &opts).map_err(RunError::numeric)?;
    let doc = json!({
        "all_pass": report.all_pass(),
        "verdicts": report.verdicts().iter().map(|(k, v)| (k.to_string(), *v)).collect::<std::collections::BTreeMap<_, _>>(),
        "axioms": report,
        "partition": partition_summary(&p, family),
    });
    sink.json("axioms.json", &doc)
}

fn density(sink: &mut Sink, family: &Family, stream: &NoiseStream) -> Result<(), RunError> {
    let cfg = sink.cfg;
    let grid = cfg.grid();
    let m = cfg.measures.m_past as i64;
    let cache = OperatorCache::build(family, stream, grid, -m, 0);
    let push = |from: i64| {
        let mut d = cache.push(&DensityVector::uniform(grid), from, 0);
        d.normalize();
        d
    };
    let h = push(-m);
    let half = push(-m / 2);
    let rows = h
        .weights
        .iter()
        .enumerate()
        .map(|(i, w)| vec![num(grid.left(i)), num(grid.right(i)), num(*w)]);
    sink.csv("density.csv", &["cell_left", "cell_right", "weight"], rows)?;
    let doc = json!({
        "grid_m": grid.m,
        "m_past": cfg.measures.m_past,
        "mass": h.mass(),
        "l1_to_half_depth": h.l1_distance(&half),
        "stochasticity_error": cache.ops.iter().map(|op| op.stochasticity_error()).fold(0.0, f64::max),
    });
    sink.json("density.json", &doc)
}

fn correlation(sink: &mut Sink, family: &Family, stream: &NoiseStream) -> Result<(), RunError> {
    let cfg = sink.cfg;
    let (phi, psi) = cfg.observables().map_err(RunError::Config)?;
    let params = CorrelationParams {
        grid: cfg.grid(),
        m_past: cfg.measures.m_past,
        n_max: cfg.measures.n_max,
        burn_in: cfg.measures.burn_in,
        samples: cfg.measures.samples,
        sample_seed: cfg.noise.seed,
    };
    let series = quenched_correlation(
        family,
        stream,
        &Observable::new(phi),
        &Observable::new(psi),
        cfg.measures.direction,
        cfg.measures.method,
        &params,
    );
    let dir = match series.direction {
        Direction::Forward => "forward",
        Direction::Backward => "backward",
    };
    let rows = series.values.iter().enumerate().map(|(n, c)| vec![n.to_string(), num(*c), dir.to_string()]);
    sink.csv("correlation.csv", &["n", "C_n", "direction"], rows)?;
    let doc = json!({
        "phi": phi.name(),
        "psi": psi.name(),
        "direction": series.direction,
        "method": series.method,
        "burn_in": series.burn_in,
        "fit": series.fit,
        "values": series.values,
    });
    sink.json("correlation.json", &doc)
}

/// Reads `(x, y)` pairs from two named columns of a CSV file.
pub fn read_columns(path: &str, x: &str, y: &str) -> Result<(Vec<f64>, Vec<f64>), RunError> {
    let mut r = csv::Reader::from_path(path).map_err(RunError::io)?;
    let headers = r.headers().map_err(RunError::io)?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| RunError::Usage(format!("{path} has no column {name:?}")))
    };
    let (ix, iy) = (col(x)?, col(y)?);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec.map_err(RunError::io)?;
        let parse = |i: usize| {
            rec[i].parse::<f64>().map_err(|e| RunError::Usage(format!("{path}: bad number {:?}: {e}", &rec[i])))
        };
        xs.push(parse(ix)?);
        ys.push(parse(iy)?);
    }
    Ok((xs, ys))
}

fn fit(sink: &mut Sink, a: &FitArgs) -> Result<(), RunError> {
    let (xs, ys) = read_columns(&a.input, &a.x_column, &a.y_column)?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = xs.into_iter().zip(ys).filter(|(x, _)| *x >= a.burn_in).unzip();
    let fit = fit_exponential_points(&xs, &ys);
    let doc = json!({
        "input": a.input,
        "x_column": a.x_column,
        "y_column": a.y_column,
        "burn_in": a.burn_in,
        "rows": xs.len(),
        "fit": fit.as_ref().ok(),
        "error": fit.as_ref().err().map(|e| e.to_string()),
    });
    sink.json("fit.json", &doc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orbit_csv_shape() {
        let mut cfg = ExperimentConfig::default();
        cfg.orbit.n = 5;
        let (family, _) = cfg.validate().unwrap();
        let out = execute(&Command::SimulateOrbit(OrbitArgs { x0: None, n: None }), &cfg, &family).unwrap();
        let text = String::from_utf8(out.artifacts[0].bytes.clone()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "i,x_i,log_der_i,depth_i,in_tilde_B");
        assert_eq!(lines.len(), 7);
        assert!(lines[6].ends_with(",,0") || lines[6].ends_with(",,1"));
    }
}
