//! Synthetic test shapes and perturbed registration pairs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AxisAngle, PointCloud, RigidTransform, Vec3};

/// Bump directions, amplitudes and widths of [`blob`].
const BUMPS: [([f64; 3], f64, f64); 6] = [
    ([0.9, 0.3, 0.2], 0.35, 0.45),
    ([-0.4, 0.8, 0.3], 0.22, 0.35),
    ([0.1, -0.6, 0.8], 0.28, 0.5),
    ([-0.7, -0.5, -0.4], 0.18, 0.3),
    ([0.3, 0.2, -0.9], 0.25, 0.4),
    ([-0.2, 0.9, -0.5], -0.15, 0.35),
];

/// Radius of the blob surface in unit direction `u`.
fn blob_radius(u: &Vec3) -> f64 {
    let mut r = 1.0;
    for (c, amp, width) in BUMPS {
        let c = Vec3::from(c).normalize();
        r += amp * (-(1.0 - u.dot(&c)) / (width * width)).exp();
    }
    r + 0.04 * (5.0 * u.x).sin() * (4.0 * u.y + 1.0).sin() + 0.03 * (6.0 * u.z).cos()
}

/// Closed, asymmetric bumpy surface of roughly unit size, sampled at `n`
/// random directions.
pub fn blob(n: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = Vec3::new(1.0, 0.72, 0.55);
    let positions = (0..n)
        .map(|_| {
            let u = Vec3::from(UnitSphere.sample(&mut rng));
            (u * blob_radius(&u)).component_mul(&scale)
        })
        .collect();
    PointCloud::new(positions).expect("blob points are finite")
}

/// Unit sphere with `bumps` small Gaussian bumps at random directions,
/// sampled at `n` random directions. Nearly round, so closest-point
/// matching has little to hold on to.
pub fn bumpy_sphere(n: usize, bumps: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<(Vec3, f64)> = (0..bumps)
        .map(|_| (Vec3::from(UnitSphere.sample(&mut rng)), 0.06 + 0.08 * rng.random::<f64>()))
        .collect();
    let positions = (0..n)
        .map(|_| {
            let u = Vec3::from(UnitSphere.sample(&mut rng));
            let r = 1.0 + centers.iter().map(|(c, amp)| amp * (-(1.0 - u.dot(c)) / 0.02).exp()).sum::<f64>();
            u * r
        })
        .collect();
    PointCloud::new(positions).expect("sphere points are finite")
}

/// Points of `cloud` on the side facing `view`: those whose offset from the
/// centroid has a component along `view` of at least `-cut` times the
/// cloud's extent in that direction.
pub fn partial_view(cloud: &PointCloud, view: &Vec3, cut: f64) -> PointCloud {
    let dir = view.normalize();
    let c = cloud.centroid();
    let proj: Vec<f64> = cloud.positions().iter().map(|p| (p - c).dot(&dir)).collect();
    let extent = proj.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let keep: Vec<usize> = (0..proj.len()).filter(|&i| proj[i] >= -cut * extent).collect();
    cloud.select(&keep)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutlierDist {
    /// Zero mean about the bounding-box center, per-axis standard deviation
    /// equal to the box side lengths.
    #[default]
    Gaussian,
    /// Uniform inside the bounding box.
    Uniform,
}

impl std::str::FromStr for OutlierDist {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Self::Gaussian),
            "uniform" => Ok(Self::Uniform),
            other => Err(Error::invalid(format!("unknown outlier distribution `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Perturbation {
    /// Rotation angle is drawn uniformly from `[0, angle_max_deg]`.
    pub angle_max_deg: f64,
    /// Translation magnitude as a fraction of the bounding-box diagonal.
    pub translation: f64,
    /// Per-axis Gaussian noise, as a fraction of that axis' box extent.
    pub noise: f64,
    /// Number of outliers as a fraction of the point count.
    pub outliers: f64,
    pub dist: OutlierDist,
}

impl Perturbation {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !(ok(self.angle_max_deg) && self.angle_max_deg <= 180.0) {
            return Err(Error::invalid("angle_max_deg must lie in [0, 180]"));
        }
        if !(ok(self.translation) && ok(self.noise) && ok(self.outliers)) {
            return Err(Error::invalid("perturbation fractions must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticPair {
    pub source: PointCloud,
    pub target: PointCloud,
    /// Maps source coordinates onto the target.
    pub ground_truth: RigidTransform,
    /// `true` for injected outliers in the source.
    pub source_outliers: Vec<bool>,
}

/// Target is `cloud`; source is a random rigid motion of it, then noise,
/// then outliers appended after the moved points.
///
/// The rotation axis is uniform on the sphere and acts about the cloud
/// centroid.
pub fn synthesize_pair(cloud: &PointCloud, spec: &Perturbation, seed: u64) -> Result<SyntheticPair> {
    spec.validate()?;
    if cloud.is_empty() {
        return Err(Error::invalid("cannot perturb an empty cloud"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let axis = Vec3::from(UnitSphere.sample(&mut rng));
    let angle = rng.random::<f64>() * spec.angle_max_deg.to_radians();
    let dir = Vec3::from(UnitSphere.sample(&mut rng));
    let shift = dir * (spec.translation * cloud.bbox_diagonal());
    let motion = RigidTransform::about_pivot(
        AxisAngle::wrapped(axis, angle).to_matrix(),
        &cloud.centroid(),
        shift,
    );
    let moved = motion.transform_points(cloud.positions());
    let noisy = add_noise(&moved, cloud, spec.noise, &mut rng);
    let (positions, source_outliers) = add_outliers(&noisy, spec.outliers, spec.dist, &mut rng);
    Ok(SyntheticPair {
        source: PointCloud::new(positions)?,
        target: cloud.clone(),
        ground_truth: motion.inverse(),
        source_outliers,
    })
}

/// Per-axis Gaussian noise with standard deviation `frac` times the
/// reference cloud's box extent along that axis.
pub fn add_noise(points: &[Vec3], reference: &PointCloud, frac: f64, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
    if frac == 0.0 {
        return points.to_vec();
    }
    let (lo, hi) = reference.bounding_box();
    let sd = (hi - lo) * frac;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    points
        .iter()
        .map(|p| p + Vec3::from_fn(|k, _| normal.sample(rng) * sd[k]))
        .collect()
}

/// Appends `round(ratio * n)` outliers drawn around the bounding box of
/// `points`; the mask marks them.
pub fn add_outliers(points: &[Vec3], ratio: f64, dist: OutlierDist, rng: &mut ChaCha8Rng) -> (Vec<Vec3>, Vec<bool>) {
    let count = (ratio * points.len() as f64).round() as usize;
    let (lo, hi) = crate::geometry::bounding_box(points);
    let side = hi - lo;
    let center = (lo + hi) / 2.0;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut out = points.to_vec();
    out.extend((0..count).map(|_| match dist {
        OutlierDist::Gaussian => center + Vec3::from_fn(|k, _| normal.sample(rng) * side[k]),
        OutlierDist::Uniform => lo + Vec3::from_fn(|k, _| rng.random::<f64>() * side[k]),
    }));
    let mut mask = vec![false; points.len()];
    mask.resize(out.len(), true);
    (out, mask)
}

/// Seeded generator shared by the synthetic helpers.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
