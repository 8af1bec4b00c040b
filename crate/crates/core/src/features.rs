//! Intensity-driven resampling, PCA normals and curvature, the graph
//! gradient of the (normal, curvature) signal and the geometric invariant
//! `V_g(x_i) = sum_j W_ij |s(x_i) - s(x_j)|^2`.

use nalgebra::{SVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::geometry::{Mat3, PointCloud, Vec3};
use crate::graph::NeighborGraph;
use crate::knn::KnnIndex;

/// Per-point `(n_x, n_y, n_z, c)`.
pub type Signal4 = SVector<f64, 4>;

/// Smallest cloud the resampler may return.
pub const MIN_RESAMPLED: usize = 4;

/// Resampled cloud with normals, curvatures, intensities, its graph and the
/// raw geometric invariant.
#[derive(Debug, Clone)]
pub struct FeatureCloud {
    pub cloud: PointCloud,
    pub graph: NeighborGraph,
    pub vg: Vec<f64>,
    /// Index of each point in the cloud handed to preprocessing.
    pub source_indices: Vec<usize>,
}

impl FeatureCloud {
    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }

    pub fn intensities(&self) -> &[f64] {
        self.cloud.intensities().expect("feature cloud carries intensities")
    }
}

/// Number of points kept at `rate`, i.e. `ceil(rate * n)`.
pub fn resample_count(n: usize, rate: f64) -> usize {
    // Guard against 0.1 * 10_000 landing a hair above 1000.
    ((rate * n as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Keeps the `ceil(rate * N)` points of highest intensity, ties going to the
/// lower index. Returns the sub-cloud (in original order) and the original
/// index of each kept point.
pub fn resample(cloud: &PointCloud, intensities: &[f64], rate: f64) -> Result<(PointCloud, Vec<usize>)> {
    if intensities.len() != cloud.len() {
        return Err(Error::invalid("one intensity per point is required"));
    }
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::invalid(format!("resampling rate {rate} outside (0, 1]")));
    }
    let count = resample_count(cloud.len(), rate);
    if count < MIN_RESAMPLED {
        return Err(Error::invalid(format!(
            "resampling {} points at rate {rate} leaves {count}, need at least {MIN_RESAMPLED}",
            cloud.len()
        )));
    }
    let picked = top_indices(intensities, count);
    Ok((cloud.select(&picked), picked))
}

/// Indices of the `count` largest values (ties to the lower index), in
/// ascending index order.
pub fn top_indices(values: &[f64], count: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order.truncate(count);
    order.sort_unstable();
    order
}

/// Fills normals and curvatures by PCA over each point and its `k` nearest
/// neighbours.
///
/// The normal is the eigenvector of the smallest covariance eigenvalue and
/// the curvature is `l0 / (l0 + l1 + l2)`. Normals are oriented away from the
/// cloud centroid; a normal orthogonal to that direction takes the sign whose
/// first non-zero component is positive.
pub fn estimate_normals_curvatures(cloud: &PointCloud, k: usize) -> Result<PointCloud> {
    let pts = cloud.positions();
    if k == 0 || pts.len() < k + 1 {
        return Err(Error::invalid(format!(
            "normal estimation with k = {k} needs at least {} points, got {}",
            k + 1,
            pts.len()
        )));
    }
    let index = KnnIndex::new(pts);
    let centroid = cloud.centroid();
    let mut normals = Vec::with_capacity(pts.len());
    let mut curvatures = Vec::with_capacity(pts.len());
    let mut degenerate = Vec::new();

    for (i, p) in pts.iter().enumerate() {
        let nb = index.neighbors_of(pts, i, k);
        let count = (nb.len() + 1) as f64;
        let mean = (nb.iter().map(|&(j, _)| pts[j]).sum::<Vec3>() + p) / count;
        let mut cov = (p - mean) * (p - mean).transpose();
        for &(j, _) in &nb {
            let d = pts[j] - mean;
            cov += d * d.transpose();
        }
        cov /= count;
        let (normal, curvature) = match plane_fit(&cov) {
            Some(v) => v,
            None => {
                degenerate.push(i);
                (Vec3::z(), 0.0)
            }
        };
        normals.push(orient(normal, &(p - centroid)));
        curvatures.push(curvature);
    }
    if !degenerate.is_empty() {
        return Err(Error::DegenerateNeighborhood {
            indices: degenerate,
            reason: "neighbourhood collapses to a single location".into(),
        });
    }
    cloud.clone().with_normals(normals)?.with_curvatures(curvatures)
}

fn plane_fit(cov: &Mat3) -> Option<(Vec3, f64)> {
    let eig = SymmetricEigen::new(*cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let lambda: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = lambda.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let n: Vec3 = eig.eigenvectors.column(order[0]).into();
    Some((n.normalize(), (lambda[0] / total).clamp(0.0, 1.0 / 3.0)))
}

fn orient(n: Vec3, outward: &Vec3) -> Vec3 {
    let d = n.dot(outward);
    if d > 0.0 {
        return n;
    }
    if d < 0.0 {
        return -n;
    }
    match n.iter().find(|c| **c != 0.0) {
        Some(c) if *c < 0.0 => -n,
        _ => n,
    }
}

/// Stacks normals and curvatures into the 4-vector signal.
pub fn signal_of(cloud: &PointCloud) -> Result<Vec<Signal4>> {
    let (Some(normals), Some(curv)) = (cloud.normals(), cloud.curvatures()) else {
        return Err(Error::invalid("normals and curvatures are required"));
    };
    Ok(normals
        .iter()
        .zip(curv)
        .map(|(n, c)| Signal4::new(n.x, n.y, n.z, *c))
        .collect())
}

/// `sum_j sqrt(W_ij) (s_i - s_j)` at point `i`.
pub fn graph_gradient(signal: &[Signal4], graph: &NeighborGraph, i: usize) -> Result<Signal4> {
    if signal.len() != graph.len() {
        return Err(Error::invalid("signal length differs from graph size"));
    }
    if i >= graph.len() {
        return Err(Error::invalid(format!("index {i} out of range for {} points", graph.len())));
    }
    Ok(graph
        .edges(i)
        .fold(Signal4::zeros(), |acc, (j, w)| acc + (signal[i] - signal[j]) * w.sqrt()))
}

/// `V_g` for every point of a cloud carrying normals and curvatures.
pub fn geometric_invariant(cloud: &PointCloud, graph: &NeighborGraph) -> Result<Vec<f64>> {
    let signal = signal_of(cloud)?;
    geometric_invariant_signal(&signal, graph)
}

pub fn geometric_invariant_signal(signal: &[Signal4], graph: &NeighborGraph) -> Result<Vec<f64>> {
    if signal.len() != graph.len() {
        return Err(Error::invalid("signal length differs from graph size"));
    }
    Ok((0..graph.len())
        .map(|i| {
            graph
                .edges(i)
                .map(|(j, w)| w * (signal[i] - signal[j]).norm_squared())
                .sum()
        })
        .collect())
}
