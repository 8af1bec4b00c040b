//! Preprocessing (graph, intensity, X84, resampling, invariants) and the
//! end-to-end registration run.

use std::time::Instant;

use crate::config::Config;
use crate::error::{Error, Result, Stage};
use crate::features::{estimate_normals_curvatures, geometric_invariant, resample, FeatureCloud};
use crate::geometry::{ang_err, kabsch, rmsd, AxisAngle, PointCloud, RigidTransform};
use crate::graph::{build_graph, response_intensity};
use crate::knn::KnnIndex;
use crate::optimizer::{register, IterationRecord, IterationTrace};
use crate::robust::{x84_filter, OutlierReport};

/// Preprocessed cloud plus what the outlier filter did.
#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub features: FeatureCloud,
    pub outliers: OutlierReport,
}

/// Graph, intensity, X84, resampling, then normals, intensities and `V_g`
/// on a graph rebuilt over the resampled points.
pub fn preprocess(cloud: &PointCloud, config: &Config) -> Result<Preprocessed> {
    config.validate()?;
    let k = config.knn_k;
    let graph = build_graph(cloud, k).map_err(|e| e.at(Stage::Graph))?;
    let intensity = response_intensity(cloud, &graph).map_err(|e| e.at(Stage::Intensity))?;
    let outliers = x84_filter(&intensity, config.alpha, config.x84_rule).map_err(|e| e.at(Stage::OutlierFilter))?;
    let kept = cloud.select(&outliers.kept_indices);
    let kept_intensity: Vec<f64> = outliers.kept_indices.iter().map(|&i| intensity[i]).collect();
    let (sampled, picked) =
        resample(&kept, &kept_intensity, config.resample_rate).map_err(|e| e.at(Stage::Resample))?;
    let source_indices: Vec<usize> = picked.iter().map(|&i| outliers.kept_indices[i]).collect();

    let graph = build_graph(&sampled, k).map_err(|e| e.at(Stage::Graph))?;
    let with_normals = estimate_normals_curvatures(&sampled, k).map_err(|e| e.at(Stage::Normals))?;
    let intensity = response_intensity(&with_normals, &graph).map_err(|e| e.at(Stage::Intensity))?;
    let cloud = with_normals
        .with_intensities(intensity)
        .map_err(|e| e.at(Stage::Intensity))?;
    let vg = geometric_invariant(&cloud, &graph).map_err(|e| e.at(Stage::Invariants))?;
    Ok(Preprocessed {
        features: FeatureCloud {
            cloud,
            graph,
            vg,
            source_indices,
        },
        outliers,
    })
}

/// Outcome of one registration, with accuracy metrics when a ground truth
/// is known.
#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationReport {
    /// Maps original source coordinates onto the target.
    pub transform: RigidTransform,
    /// Degrees.
    pub ang_err: Option<f64>,
    pub rmsd: Option<f64>,
    /// Seconds.
    pub runtime: f64,
    pub iterations: usize,
    /// (source, target).
    pub outliers_removed: (usize, usize),
    /// (source, target).
    pub resampled_sizes: (usize, usize),
    pub trace: IterationTrace,
    /// Settings the run used.
    pub config: Config,
}

fn metrics(
    transform: &RigidTransform,
    ground_truth: Option<&RigidTransform>,
    source: &PointCloud,
) -> Result<(Option<f64>, Option<f64>)> {
    match ground_truth {
        None => Ok((None, None)),
        Some(gt) => Ok((
            Some(ang_err(transform.rotation(), gt.rotation())?),
            Some(rmsd(transform, gt, source)?),
        )),
    }
}

fn elapsed(start: Instant) -> f64 {
    start.elapsed().as_secs_f64().max(f64::MIN_POSITIVE)
}

/// Preprocesses both clouds, runs the optimizer on the resampled ones and
/// reports the transform for the full-resolution source.
pub fn run(
    source: &PointCloud,
    target: &PointCloud,
    config: &Config,
    ground_truth: Option<&RigidTransform>,
) -> Result<RegistrationReport> {
    let start = Instant::now();
    let src = preprocess(source, config)?;
    let tgt = preprocess(target, config)?;
    let reg = register(&src.features, &tgt.features, config)?;
    let (ang_err, rmsd) = metrics(&reg.transform, ground_truth, source)?;
    Ok(RegistrationReport {
        transform: reg.transform,
        ang_err,
        rmsd,
        runtime: elapsed(start),
        iterations: reg.trace.len(),
        outliers_removed: (src.outliers.removed_indices.len(), tgt.outliers.removed_indices.len()),
        resampled_sizes: (src.features.len(), tgt.features.len()),
        trace: reg.trace,
        config: config.clone(),
    })
}

/// Point-to-point ICP on the raw clouds: nearest neighbours, then a
/// least-squares rigid fit, for at most `config.max_iterations` rounds.
///
/// Stops early once an update moves no point by more than `1e-12` of the
/// target's bounding-box diagonal. Trace energies are mean squared
/// matching distances.
pub fn icp_baseline(
    source: &PointCloud,
    target: &PointCloud,
    config: &Config,
    ground_truth: Option<&RigidTransform>,
) -> Result<RegistrationReport> {
    config.validate()?;
    if source.is_empty() || target.is_empty() {
        return Err(Error::invalid("cannot register an empty cloud"));
    }
    let start = Instant::now();
    let index = KnnIndex::new(target.positions());
    let tol = 1e-12 * target.bbox_diagonal().max(f64::MIN_POSITIVE);
    let mut moving = source.positions().to_vec();
    let mut composite = RigidTransform::identity();
    let mut trace = IterationTrace::default();
    for _ in 0..config.max_iterations {
        let mut partners = Vec::with_capacity(moving.len());
        let mut sq = 0.0;
        for p in &moving {
            let (j, d2) = index.nearest_one(p);
            partners.push(target.positions()[j]);
            sq += d2;
        }
        let step = kabsch(&moving, &partners)?;
        let shift = moving
            .iter()
            .map(|p| (step.transform_point(p) - p).norm())
            .fold(0.0, f64::max);
        moving = step.transform_points(&moving);
        composite = step.compose(&composite);
        trace.records.push(IterationRecord {
            energy: sq / moving.len() as f64,
            temperature: 0.0,
            accept_rate: 1.0,
            lam_rate: 0.0,
            accepted: true,
            angle: AxisAngle::from_matrix(step.rotation()).angle(),
            translation: step.translation().norm(),
        });
        if shift <= tol {
            break;
        }
    }
    let transform = composite.renormalized();
    let (ang_err, rmsd) = metrics(&transform, ground_truth, source)?;
    Ok(RegistrationReport {
        transform,
        ang_err,
        rmsd,
        runtime: elapsed(start),
        iterations: trace.len(),
        outliers_removed: (0, 0),
        resampled_sizes: (source.len(), target.len()),
        trace,
        config: config.clone(),
    })
}
