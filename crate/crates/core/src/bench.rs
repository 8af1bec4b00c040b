//! Benchmark cases read from a TOML file and the results table.
//!
//! ```toml
//! [[case]]
//! name = "blob-noise"
//! source = "blob.ply"          # relative to the cases file
//! seed = 0
//! repeats = 10
//! icp = true
//! [case.perturbation]
//! angle_max_deg = 30.0
//! noise = 0.004
//!
//! [[case]]
//! name = "scan-pair"
//! source = "a.ply"
//! target = "b.ply"
//! ground_truth = [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]]
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::Matrix4;
use serde::Deserialize;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::geometry::{PointCloud, RigidTransform};
use crate::io::{fmt17, read_cloud};
use crate::pipeline::{icp_baseline, run, RegistrationReport};
use crate::synth::{synthesize_pair, Perturbation};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkCase {
    pub name: String,
    pub source_path: PathBuf,
    /// Required unless the pair is synthesized from the source.
    pub target_path: Option<PathBuf>,
    pub ground_truth: Option<RigidTransform>,
    pub perturbation: Option<Perturbation>,
    /// First seed; run `i` uses `seed + i`.
    pub seed: u64,
    pub repeats: usize,
    /// Also run the ICP baseline.
    pub icp: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCase {
    name: String,
    source: PathBuf,
    target: Option<PathBuf>,
    ground_truth: Option<[[f64; 4]; 4]>,
    perturbation: Option<Perturbation>,
    #[serde(default)]
    seed: u64,
    #[serde(default = "one")]
    repeats: usize,
    #[serde(default)]
    icp: bool,
}

fn one() -> usize {
    1
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CasesFile {
    #[serde(default)]
    case: Vec<RawCase>,
}

impl BenchmarkCase {
    pub fn validate(&self) -> Result<()> {
        let name = &self.name;
        match (&self.perturbation, &self.ground_truth, &self.target_path) {
            (Some(_), Some(_), _) => Err(Error::invalid(format!(
                "case `{name}`: perturbation and ground_truth are mutually exclusive"
            ))),
            (Some(_), None, Some(_)) => Err(Error::invalid(format!(
                "case `{name}`: a perturbed case is synthesized from its source; drop `target`"
            ))),
            (None, _, None) => Err(Error::invalid(format!("case `{name}`: `target` is required"))),
            _ if self.repeats == 0 => Err(Error::invalid(format!("case `{name}`: repeats must be at least 1"))),
            (Some(p), None, None) => p.validate(),
            _ => Ok(()),
        }
    }
}

/// Parses a cases file; relative paths are resolved against `base`.
pub fn parse_cases(text: &str, base: &Path) -> Result<Vec<BenchmarkCase>> {
    let file: CasesFile = toml::from_str(text).map_err(|e| {
        let location = match e.span() {
            Some(span) => format!("line {}", text[..span.start].matches('\n').count() + 1),
            None => "cases file".into(),
        };
        Error::parse(location, e.message().to_string())
    })?;
    file.case
        .into_iter()
        .map(|raw| {
            let ground_truth = match raw.ground_truth {
                Some(rows) => Some(RigidTransform::from_homogeneous(&Matrix4::from_fn(|r, c| rows[r][c]))?),
                None => None,
            };
            let case = BenchmarkCase {
                name: raw.name,
                source_path: base.join(raw.source),
                target_path: raw.target.map(|t| base.join(t)),
                ground_truth,
                perturbation: raw.perturbation,
                seed: raw.seed,
                repeats: raw.repeats,
                icp: raw.icp,
            };
            case.validate()?;
            Ok(case)
        })
        .collect()
}

pub fn load_cases(path: impl AsRef<Path>) -> Result<Vec<BenchmarkCase>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_cases(&text, path.parent().unwrap_or(Path::new(".")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    GraphReg,
    Icp,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::GraphReg => "graphreg",
            Method::Icp => "icp",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub case: String,
    pub method: Method,
    pub seed: u64,
    /// The failure message when the run could not complete.
    pub outcome: std::result::Result<RegistrationReport, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub case: String,
    pub method: Method,
    pub runs: usize,
    pub failures: usize,
    /// Means over the successful runs that have the metric.
    pub mean_ang_err: Option<f64>,
    pub mean_rmsd: Option<f64>,
    pub mean_runtime: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchTable {
    pub rows: Vec<BenchRow>,
    pub aggregates: Vec<Aggregate>,
}

impl BenchTable {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.outcome.is_err()).count()
    }

    /// Tab-separated rows, then the aggregates. Per-run values carry 17
    /// significant digits, means 4 decimals.
    pub fn to_text(&self) -> String {
        let mut out = String::from("case\tmethod\tseed\tstatus\tang_err\trmsd\truntime\titerations\n");
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), fmt17);
        for row in &self.rows {
            let _ = match &row.outcome {
                Ok(r) => writeln!(
                    out,
                    "{}\t{}\t{}\tok\t{}\t{}\t{}\t{}",
                    row.case,
                    row.method.name(),
                    row.seed,
                    opt(r.ang_err),
                    opt(r.rmsd),
                    fmt17(r.runtime),
                    r.iterations
                ),
                Err(msg) => writeln!(
                    out,
                    "{}\t{}\t{}\tFAILED: {}\t-\t-\t-\t-",
                    row.case,
                    row.method.name(),
                    row.seed,
                    msg.replace(['\t', '\n'], " ")
                ),
            };
        }
        out.push_str("\ncase\tmethod\truns\tfailures\tmean_ang_err\tmean_rmsd\tmean_runtime\n");
        let mean = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
        for a in &self.aggregates {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                a.case,
                a.method.name(),
                a.runs,
                a.failures,
                mean(a.mean_ang_err),
                mean(a.mean_rmsd),
                mean(a.mean_runtime)
            );
        }
        out
    }
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn aggregate(case: &str, method: Method, rows: &[BenchRow]) -> Aggregate {
    let mine: Vec<&BenchRow> = rows.iter().filter(|r| r.case == case && r.method == method).collect();
    let ok: Vec<&RegistrationReport> = mine.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
    Aggregate {
        case: case.to_string(),
        method,
        runs: mine.len(),
        failures: mine.len() - ok.len(),
        mean_ang_err: mean_of(ok.iter().filter_map(|r| r.ang_err)),
        mean_rmsd: mean_of(ok.iter().filter_map(|r| r.rmsd)),
        mean_runtime: mean_of(ok.iter().map(|r| r.runtime)),
    }
}

struct Inputs {
    source: PointCloud,
    target: PointCloud,
    ground_truth: Option<RigidTransform>,
}

fn prepare(case: &BenchmarkCase, source: &PointCloud, target: Option<&PointCloud>, seed: u64) -> Result<Inputs> {
    match (&case.perturbation, target) {
        (Some(p), _) => {
            let pair = synthesize_pair(source, p, seed)?;
            Ok(Inputs {
                source: pair.source,
                target: pair.target,
                ground_truth: Some(pair.ground_truth),
            })
        }
        (None, Some(t)) => Ok(Inputs {
            source: source.clone(),
            target: t.clone(),
            ground_truth: case.ground_truth,
        }),
        (None, None) => Err(Error::invalid("case has neither target nor perturbation")),
    }
}

/// Runs every case and seed. Failures are recorded per row and the run
/// continues. Each run's config uses the row seed as its `rng_seed`.
pub fn run_bench(cases: &[BenchmarkCase], config: &Config) -> BenchTable {
    let mut table = BenchTable::default();
    for case in cases {
        let mut methods = vec![Method::GraphReg];
        if case.icp {
            methods.push(Method::Icp);
        }
        let loaded = read_cloud(&case.source_path).and_then(|s| {
            let t = case.target_path.as_ref().map(read_cloud).transpose()?;
            Ok((s, t))
        });
        for i in 0..case.repeats {
            let seed = case.seed + i as u64;
            let inputs = loaded
                .as_ref()
                .map_err(|e| e.to_string())
                .and_then(|(s, t)| prepare(case, s, t.as_ref(), seed).map_err(|e| e.to_string()));
            let cfg = Config {
                rng_seed: seed,
                ..config.clone()
            };
            for &method in &methods {
                let outcome = inputs.as_ref().map_err(Clone::clone).and_then(|inp| {
                    let gt = inp.ground_truth.as_ref();
                    match method {
                        Method::GraphReg => run(&inp.source, &inp.target, &cfg, gt),
                        Method::Icp => icp_baseline(&inp.source, &inp.target, &cfg, gt),
                    }
                    .map_err(|e| e.to_string())
                });
                table.rows.push(BenchRow {
                    case: case.name.clone(),
                    method,
                    seed,
                    outcome,
                });
            }
        }
        for &method in &methods {
            table.aggregates.push(aggregate(&case.name, method, &table.rows));
        }
    }
    table
}
