//! Experiment configs and the `run` driver behind the binary.
//!
//! A config is a JSON object with a `mode` field:
//!
//! ```json
//! { "mode": "rates", "alpha": 0.5, "cloud": { "kind": "grid", "k": [8, 16, 32, 64] } }
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::convexity::TransportMapPWC;
use crate::error::{Error, Result};
use crate::geom::ConvexPolygon;
use crate::laguerre::LaguerreDiagram;
use crate::measures::{grid_cloud, random_cloud, random_points};
use crate::periodic::{self, TorusCloud, TorusProblem};
use crate::reference::{self, MassRule, RateReport, RateRow, SeparableProblem, StabilityReport};
use crate::solver::{SolveReport, SolveSettings};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const SEED_ENV: &str = "MA_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Solve,
    Rates,
    Stability,
    PeriodicRates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum CloudSpec {
    /// Cell-centred `k x k` grids.
    Grid { k: Vec<usize> },
    /// Uniform random clouds of each size, all from `seed`.
    Random {
        n: Vec<usize>,
        #[serde(default)]
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    /// Separable problem parameter (`solve`, `rates`).
    #[serde(default)]
    pub alpha: f64,
    /// Torus problem parameter (`periodic-rates`).
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub cloud: Option<CloudSpec>,
    /// Site masses for `solve` and `rates`.
    #[serde(default)]
    pub masses: MassRule,
    /// Parameter pairs (`stability`).
    #[serde(default)]
    pub pairs: Vec<(f64, f64)>,
    /// Quadrature intervals per axis (`stability`).
    #[serde(default = "default_intervals")]
    pub quadrature_intervals: usize,
    #[serde(default)]
    pub solver: SolveSettings,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Write diagram and map dumps; always on in `solve` mode.
    #[serde(default)]
    pub dump: bool,
}

fn default_intervals() -> usize {
    64
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn config_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn increasing(v: &[usize]) -> bool {
    !v.is_empty() && v.windows(2).all(|w| w[0] < w[1])
}

impl ExperimentConfig {
    /// Parses and validates; errors name the line and field.
    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let inner = e.inner();
            config_error(
                path,
                format!("line {} column {}: field `{}`: {}", inner.line(), inner.column(), e.path(), inner),
            )
        })?;
        cfg.validate(path)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| config_error(path, format!("cannot read: {e}")))?;
        Self::from_json(&text, path)
    }

    fn validate(&self, path: &Path) -> Result<()> {
        let bad = |m: String| Err(config_error(path, m));
        self.solver
            .validate()
            .map_err(|e| config_error(path, format!("field `solver`: {e}")))?;
        match self.mode {
            Mode::Solve | Mode::Rates => {
                if SeparableProblem::new(self.alpha).is_err() {
                    return bad(format!("field `alpha`: {} is outside [-0.9, 0.9]", self.alpha));
                }
                if self.masses == MassRule::Equal && self.alpha != 0.0 {
                    return bad("field `masses`: \"equal\" needs alpha = 0".into());
                }
            }
            Mode::PeriodicRates => {
                if TorusProblem::new(self.beta).is_err() {
                    return bad(format!("field `beta`: {} is outside (-1, 1)", self.beta));
                }
            }
            Mode::Stability => {
                if self.pairs.is_empty() {
                    return bad("field `pairs`: must be nonempty".into());
                }
                if let Some(p) = self.pairs.iter().find(|(a, b)| !(a.abs() <= 0.9 && b.abs() <= 0.9)) {
                    return bad(format!("field `pairs`: ({}, {}) is outside [-0.9, 0.9]", p.0, p.1));
                }
                if self.quadrature_intervals == 0 {
                    return bad("field `quadrature_intervals`: must be positive".into());
                }
                return Ok(());
            }
        }
        match &self.cloud {
            None => bad("field `cloud`: required for this mode".into()),
            Some(CloudSpec::Grid { k }) => {
                if !increasing(k) || k[0] < 2 {
                    return bad("field `cloud.k`: must be nonempty, increasing and at least 2".into());
                }
                Ok(())
            }
            Some(CloudSpec::Random { n, .. }) => {
                if !increasing(n) || n[0] < 3 {
                    return bad("field `cloud.n`: must be nonempty, increasing and at least 3".into());
                }
                Ok(())
            }
        }
    }
}

/// What a run produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub output: PathBuf,
    pub report: Option<RateReport>,
    pub stability: Option<StabilityReport>,
    /// Instances whose map failed the duality checks, by label.
    pub duality_violations: Vec<(String, usize, f64)>,
}

/// Reads `MA_SEED` if set.
pub fn seed_from_env() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s.trim().parse().map(Some).map_err(|_| Error::Config {
            path: PathBuf::from(SEED_ENV),
            message: format!("not an unsigned integer: {s:?}"),
        }),
        Err(_) => Ok(None),
    }
}

/// Runs the experiment in `config`. `out` overrides the configured output
/// directory and `seed` the configured random seed.
pub fn run(config: &Path, out: Option<PathBuf>, seed: Option<u64>) -> Result<RunOutput> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let (Some(s), Some(CloudSpec::Random { seed, .. })) = (seed, cfg.cloud.as_mut()) {
        *seed = s;
    }
    if let Some(o) = out {
        cfg.output = o;
    }
    run_config(&cfg)
}

pub fn run_config(cfg: &ExperimentConfig) -> Result<RunOutput> {
    fs::create_dir_all(&cfg.output)?;
    let dump = cfg.dump || cfg.mode == Mode::Solve;
    let mut out = RunOutput {
        output: cfg.output.clone(),
        report: None,
        stability: None,
        duality_violations: Vec::new(),
    };
    match cfg.mode {
        Mode::Stability => {
            let r = reference::stability_experiment(&cfg.pairs, cfg.quadrature_intervals)?;
            let mut w = csv::Writer::from_path(cfg.output.join("stability.csv"))?;
            for row in &r.rows {
                w.serialize(row)?;
            }
            w.flush()?;
            out.stability = Some(r);
        }
        Mode::Solve | Mode::Rates => {
            let problem = SeparableProblem::new(cfg.alpha)?;
            let mut rows = Vec::new();
            for (label, cloud) in planar_clouds(cfg.cloud.as_ref().expect("validated"))? {
                let inst = reference::solve_reference_instance(&problem, cloud?, cfg.masses, &cfg.solver);
                let inst = traced(inst.map(|i| (i.solution.report.clone(), i)), &cfg.output, &label)?;
                if let Some((facet, d)) = inst.duality_violation {
                    out.duality_violations.push((label.clone(), facet, d));
                }
                if dump {
                    write_dumps(&cfg.output, &label, &inst.solution.diagram, &inst.map, false)?;
                }
                rows.push(inst.rate_row()?);
            }
            out.report = Some(write_report(&cfg.output, rows)?);
        }
        Mode::PeriodicRates => {
            let problem = TorusProblem::new(cfg.beta)?;
            let mut rows = Vec::new();
            for (label, cloud) in torus_clouds(&problem, cfg.cloud.as_ref().expect("validated"))? {
                let inst = periodic::solve_torus_instance_on(&problem, cloud?, &cfg.solver);
                let inst = traced(inst.map(|i| (i.solution.report.clone(), i)), &cfg.output, &label)?;
                if dump {
                    write_dumps(&cfg.output, &label, &inst.solution.diagram, &inst.map, true)?;
                }
                rows.push(inst.rate_row()?);
            }
            out.report = Some(write_report(&cfg.output, rows)?);
        }
    }
    Ok(out)
}

type Labeled<T> = Vec<(String, Result<T>)>;

fn planar_clouds(spec: &CloudSpec) -> Result<Labeled<crate::measures::SourceCloud>> {
    let sq = ConvexPolygon::unit_square();
    Ok(match spec {
        CloudSpec::Grid { k } => k.iter().map(|&k| (format!("k{k}"), grid_cloud(&sq, k))).collect(),
        CloudSpec::Random { n, seed } => n
            .iter()
            .map(|&n| (format!("n{n}"), random_cloud(&sq, n, *seed)))
            .collect(),
    })
}

fn torus_clouds(problem: &TorusProblem, spec: &CloudSpec) -> Result<Labeled<TorusCloud>> {
    let source = problem.source()?;
    Ok(match spec {
        CloudSpec::Grid { k } => k.iter().map(|&k| (format!("k{k}"), problem.grid_cloud(k))).collect(),
        CloudSpec::Random { n, seed } => n
            .iter()
            .map(|&n| {
                let pts = random_points(&ConvexPolygon::unit_square(), n, *seed)
                    .map(|p| p.into_iter().map(periodic::wrap).collect::<Vec<_>>());
                (format!("n{n}"), pts.and_then(|p| TorusCloud::discretize(p, &source)))
            })
            .collect(),
    })
}

/// Writes `trace_<label>.csv` for successful and failed solves alike.
fn traced<T>(r: Result<(SolveReport, T)>, dir: &Path, label: &str) -> Result<T> {
    let path = dir.join(format!("trace_{label}.csv"));
    match r {
        Ok((report, v)) => {
            report.write_trace(&path)?;
            Ok(v)
        }
        Err(Error::Solve { kind, report }) => {
            report.write_trace(&path)?;
            Err(Error::Solve { kind, report })
        }
        Err(e) => Err(e),
    }
}

fn write_dumps(dir: &Path, label: &str, d: &LaguerreDiagram, map: &TransportMapPWC, periodic: bool) -> Result<()> {
    d.write_csv(
        &dir.join(format!("diagram_{label}_cells.csv")),
        &dir.join(format!("diagram_{label}_masses.csv")),
        periodic,
    )?;
    map.write_csv(
        &dir.join(format!("map_{label}_facets.csv")),
        &dir.join(format!("map_{label}_targets.csv")),
        periodic,
    )
}

fn write_report(dir: &Path, rows: Vec<RateRow>) -> Result<RateReport> {
    let r = RateReport::new(rows)?;
    r.write_csv(&dir.join("report.csv"))?;
    Ok(r)
}

/// Process exit status for a run error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } => EXIT_CONFIG,
        Error::Solve { .. } => EXIT_SOLVER,
        _ => 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::from_json(s, Path::new("cfg.json"))
    }

    #[test]
    fn parses_rates_config() {
        let c = parse(r#"{"mode":"rates","alpha":0.5,"cloud":{"kind":"grid","k":[8,16]},"solver":{"max_iters":40}}"#)
            .unwrap();
        assert_eq!(c.mode, Mode::Rates);
        assert_eq!(c.solver.max_iters, 40);
        assert_eq!(c.solver.tol_residual, 1e-10);
    }

    #[test]
    fn rejects_bad_configs() {
        for s in [
            r#"{"mode":"rates","cloud":{"kind":"grid","k":[]}}"#,
            r#"{"mode":"rates","cloud":{"kind":"grid","k":[16,8]}}"#,
            r#"{"mode":"rates","alpha":2.0,"cloud":{"kind":"grid","k":[8]}}"#,
            r#"{"mode":"rates"}"#,
            r#"{"mode":"fly"}"#,
            r#"{"mode":"stability","pairs":[]}"#,
            r#"{"mode":"solve","cloud":{"kind":"random","n":[10]},"colour":1}"#,
            r#"{"mode":"solve","#,
            r#"{"mode":"solve","alpha":0.3,"masses":"equal","cloud":{"kind":"random","n":[10]}}"#,
        ] {
            let e = parse(s).unwrap_err();
            assert_eq!(exit_code(&e), EXIT_CONFIG, "{s}");
        }
    }

    #[test]
    fn error_names_line_and_field() {
        let e = parse("{\n  \"mode\": \"rates\",\n  \"alpha\": \"x\"\n}").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("line 3") && msg.contains("`alpha`"), "{msg}");
    }
}
