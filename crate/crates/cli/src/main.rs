mod settings;

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dynreg::bench::{load_cases, run_bench};
use dynreg::config::Config;
use dynreg::features::{estimate_normals_curvatures, geometric_invariant, resample};
use dynreg::geometry::PointCloud;
use dynreg::graph::{build_graph, response_intensity};
use dynreg::io::{read_cloud, write_cloud, xyz_text};
use dynreg::pipeline::{icp_baseline, run};
use dynreg::report::{append_summary, format_report, format_transform, read_transform, write_report};
use dynreg::robust::x84_filter;
use dynreg::synth::{blob, bumpy_sphere, synthesize_pair, OutlierDist, Perturbation};
use dynreg::voxel::voxel_downsample;
use dynreg::{Error, Result};
use toml::Value;

const EXIT_INVALID: u8 = 1;
const EXIT_PARSE: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(name = "dynreg", version, about = "Rigid point cloud registration")]
struct Cli {
    #[command(flatten)]
    settings: Settings,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Settings {
    /// Config file of `key = value` lines.
    #[arg(long, global = true, env = settings::CONFIG_ENV)]
    config: Option<PathBuf>,
    /// Start from the formulas-as-written preset instead of the defaults.
    #[arg(long, global = true)]
    literal: bool,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
    #[arg(long, global = true)]
    max_iterations: Option<usize>,
    #[arg(long, global = true)]
    beta: Option<f64>,
    #[arg(long, global = true, value_enum)]
    annealer: Option<AnnealerArg>,
    #[arg(long, global = true)]
    resample_rate: Option<f64>,
    /// Neighbours per point in the k-NN graph.
    #[arg(long, global = true)]
    knn_k: Option<usize>,
    /// X84 rejection multiplier.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Seed of the optimizer's random stream.
    #[arg(long, global = true)]
    rng_seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AnnealerArg {
    Asa,
    Sa,
}

#[derive(Clone, Copy, ValueEnum)]
enum DistArg {
    Gaussian,
    Uniform,
}

#[derive(Clone, Copy, ValueEnum)]
enum ShapeArg {
    Blob,
    BumpySphere,
}

#[derive(Subcommand)]
enum Command {
    /// Register a source cloud onto a target cloud.
    Register {
        source: PathBuf,
        target: PathBuf,
        /// Ground-truth transform: a 4x4 matrix file or a report.
        #[arg(long)]
        gt: Option<PathBuf>,
        /// Write the full report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Append a one-line summary to this results table.
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Run point-to-point ICP instead.
        #[arg(long)]
        icp: bool,
    },
    /// Make a perturbed source from a cloud, which becomes the target.
    Synth {
        cloud: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        angle_max: f64,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0.0)]
        outliers: f64,
        #[arg(long, value_enum, default_value = "gaussian")]
        dist: DistArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Translation as a fraction of the bounding-box diagonal.
        #[arg(long, default_value_t = 0.0)]
        translation: f64,
        /// Writes `<prefix>_source.ply`, `_target.ply`, `_gt.txt` and
        /// `_labels.txt`; defaults to the cloud path without extension.
        #[arg(long)]
        prefix: Option<PathBuf>,
    },
    /// Run a benchmark cases file.
    Bench {
        cases: PathBuf,
        /// Also write the table here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Drop X84 outliers by response intensity.
    Filter {
        cloud: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Keep the highest-intensity fraction of the points.
    Resample {
        cloud: PathBuf,
        #[arg(long)]
        rate: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump response intensity and V_g per point.
    Invariants {
        cloud: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Voxel-grid downsampling, grid anchored at the bounding-box minimum.
    Voxel {
        cloud: PathBuf,
        #[arg(long)]
        step: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample a built-in test shape.
    Shape {
        #[arg(value_enum)]
        shape: ShapeArg,
        #[arg(long, default_value_t = 10_000)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

impl Settings {
    fn resolve(&self) -> Result<Config> {
        let mut overrides = settings::parse_sets(&self.sets)?;
        let mut flag = |key: &str, v: Option<Value>| {
            if let Some(v) = v {
                overrides.push((key.to_string(), v));
            }
        };
        flag("max_iterations", self.max_iterations.map(|v| Value::Integer(v as i64)));
        flag("beta", self.beta.map(Value::Float));
        flag(
            "annealer",
            self.annealer.map(|a| {
                Value::String(match a {
                    AnnealerArg::Asa => "asa".into(),
                    AnnealerArg::Sa => "sa".into(),
                })
            }),
        );
        flag("resample_rate", self.resample_rate.map(Value::Float));
        flag("knn_k", self.knn_k.map(|v| Value::Integer(v as i64)));
        flag("alpha", self.alpha.map(Value::Float));
        flag("rng_seed", self.rng_seed.map(|v| Value::Integer(v as i64)));
        settings::resolve(self.config.as_deref(), self.literal, &overrides)
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => match std::io::stdout().write_all(text.as_bytes()) {
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
            r => r?,
        },
    }
    Ok(())
}

fn load(path: &Path) -> Result<PointCloud> {
    read_cloud(path).map_err(|e| match e {
        Error::Io(io) => Error::InvalidInput(format!("{}: {io}", path.display())),
        other => other,
    })
}

fn emit_cloud(cloud: &PointCloud, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => write_cloud(cloud, p),
        None => emit(None, &xyz_text(cloud)),
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn execute(cli: Cli) -> Result<u8> {
    let config = cli.settings.resolve()?;
    match cli.command {
        Command::Register {
            source,
            target,
            gt,
            out,
            summary,
            icp,
        } => {
            let src = load(&source)?;
            let tgt = load(&target)?;
            let gt = gt.map(read_transform).transpose()?;
            let report = if icp {
                icp_baseline(&src, &tgt, &config, gt.as_ref())?
            } else {
                run(&src, &tgt, &config, gt.as_ref())?
            };
            match &out {
                Some(p) => {
                    write_report(&report, p)?;
                    let mut text = format_transform(&report.transform);
                    if let (Some(a), Some(r)) = (report.ang_err, report.rmsd) {
                        text.push_str(&format!("ang_err {a:.6} rmsd {r:.6e}\n"));
                    }
                    emit(None, &text)?;
                }
                None => emit(None, &format_report(&report))?,
            }
            if let Some(path) = summary {
                let name = source.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
                append_summary(path, &name, &report)?;
            }
        }
        Command::Synth {
            cloud,
            angle_max,
            noise,
            outliers,
            dist,
            seed,
            translation,
            prefix,
        } => {
            let input = load(&cloud)?;
            let spec = Perturbation {
                angle_max_deg: angle_max,
                translation,
                noise,
                outliers,
                dist: match dist {
                    DistArg::Gaussian => OutlierDist::Gaussian,
                    DistArg::Uniform => OutlierDist::Uniform,
                },
            };
            spec.validate()?;
            let pair = synthesize_pair(&input, &spec, seed)?;
            let prefix = prefix.unwrap_or_else(|| cloud.with_extension(""));
            write_cloud(&pair.source, with_suffix(&prefix, "_source.ply"))?;
            write_cloud(&pair.target, with_suffix(&prefix, "_target.ply"))?;
            std::fs::write(with_suffix(&prefix, "_gt.txt"), format_transform(&pair.ground_truth))?;
            let labels: String = pair
                .source_outliers
                .iter()
                .map(|&o| if o { "1\n" } else { "0\n" })
                .collect();
            std::fs::write(with_suffix(&prefix, "_labels.txt"), labels)?;
        }
        Command::Bench { cases, out } => {
            let cases = load_cases(&cases)?;
            let table = run_bench(&cases, &config);
            let text = table.to_text();
            emit(None, &text)?;
            if let Some(p) = out {
                std::fs::write(p, &text)?;
            }
            let failed = table.failures();
            if failed > 0 {
                eprintln!("{failed} of {} runs failed", table.rows.len());
                return Ok(EXIT_PARTIAL);
            }
        }
        Command::Filter { cloud, out } => {
            let input = load(&cloud)?;
            let graph = build_graph(&input, config.knn_k)?;
            let intensity = response_intensity(&input, &graph)?;
            let rep = x84_filter(&intensity, config.alpha, config.x84_rule)?;
            eprintln!(
                "kept {} removed {} threshold {:e}{}",
                rep.kept_indices.len(),
                rep.removed_indices.len(),
                rep.threshold,
                if rep.degenerate { " (zero MAD)" } else { "" }
            );
            emit_cloud(&input.select(&rep.kept_indices), out.as_deref())?;
        }
        Command::Resample { cloud, rate, out } => {
            let input = load(&cloud)?;
            let graph = build_graph(&input, config.knn_k)?;
            let intensity = response_intensity(&input, &graph)?;
            let (sampled, _) = resample(&input, &intensity, rate)?;
            emit_cloud(&sampled, out.as_deref())?;
        }
        Command::Invariants { cloud, out } => {
            let input = load(&cloud)?;
            let graph = build_graph(&input, config.knn_k)?;
            let intensity = response_intensity(&input, &graph)?;
            let with_normals = estimate_normals_curvatures(&input, config.knn_k)?;
            let vg = geometric_invariant(&with_normals, &graph)?;
            let mut text = String::from("# x y z intensity vg\n");
            for ((p, i), v) in input.positions().iter().zip(&intensity).zip(&vg) {
                text.push_str(&format!("{} {} {} {i:e} {v:e}\n", p.x, p.y, p.z));
            }
            emit(out.as_deref(), &text)?;
        }
        Command::Voxel { cloud, step, out } => {
            let input = load(&cloud)?;
            emit_cloud(&voxel_downsample(&input, step)?, out.as_deref())?;
        }
        Command::Shape {
            shape,
            points,
            seed,
            out,
        } => {
            if points < 10 {
                return Err(Error::InvalidInput("at least 10 points are needed".into()));
            }
            let cloud = match shape {
                ShapeArg::Blob => blob(points, seed),
                ShapeArg::BumpySphere => bumpy_sphere(points, 10, seed),
            };
            write_cloud(&cloud, out)?;
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.root() {
                Error::Parse { .. } => EXIT_PARSE,
                _ => EXIT_INVALID,
            })
        }
    }
}
