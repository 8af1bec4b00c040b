//! Point clouds, rigid transforms, axis-angle rotations and the two
//! registration-quality metrics (angular error and RMSD).

use nalgebra::{Matrix3, Matrix4, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Tolerance used when validating unit vectors and rotation matrices.
pub const UNIT_TOL: f64 = 1e-9;

/// Ordered point set with optional per-point attributes.
///
/// Optional attributes always have one entry per position.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    positions: Vec<Vec3>,
    normals: Option<Vec<Vec3>>,
    curvatures: Option<Vec<f64>>,
    intensities: Option<Vec<f64>>,
}

impl PointCloud {
    pub fn new(positions: Vec<Vec3>) -> Result<Self> {
        if let Some(i) = positions.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid(format!("position {i} is not finite")));
        }
        Ok(Self {
            positions,
            ..Default::default()
        })
    }

    pub fn from_xyz(points: &[[f64; 3]]) -> Result<Self> {
        Self::new(points.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect())
    }

    pub fn with_normals(mut self, normals: Vec<Vec3>) -> Result<Self> {
        self.check_len("normals", normals.len())?;
        if let Some(i) = normals
            .iter()
            .position(|n| (n.norm() - 1.0).abs() > UNIT_TOL)
        {
            return Err(Error::invalid(format!("normal {i} is not unit length")));
        }
        self.normals = Some(normals);
        Ok(self)
    }

    pub fn with_curvatures(mut self, curvatures: Vec<f64>) -> Result<Self> {
        self.check_len("curvatures", curvatures.len())?;
        check_non_negative("curvature", &curvatures)?;
        self.curvatures = Some(curvatures);
        Ok(self)
    }

    pub fn with_intensities(mut self, intensities: Vec<f64>) -> Result<Self> {
        self.check_len("intensities", intensities.len())?;
        check_non_negative("intensity", &intensities)?;
        self.intensities = Some(intensities);
        Ok(self)
    }

    fn check_len(&self, what: &str, len: usize) -> Result<()> {
        if len != self.positions.len() {
            return Err(Error::invalid(format!(
                "{what} has {len} entries for {} points",
                self.positions.len()
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn normals(&self) -> Option<&[Vec3]> {
        self.normals.as_deref()
    }

    pub fn curvatures(&self) -> Option<&[f64]> {
        self.curvatures.as_deref()
    }

    pub fn intensities(&self) -> Option<&[f64]> {
        self.intensities.as_deref()
    }

    /// Sub-cloud made of the given indices, attributes included.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        let pick = |v: &Vec<Vec3>| indices.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let pick_s = |v: &Vec<f64>| indices.iter().map(|&i| v[i]).collect::<Vec<_>>();
        PointCloud {
            positions: pick(&self.positions),
            normals: self.normals.as_ref().map(pick),
            curvatures: self.curvatures.as_ref().map(pick_s),
            intensities: self.intensities.as_ref().map(pick_s),
        }
    }

    /// Axis-aligned bounding box as `(min, max)`. Zero box for an empty cloud.
    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        bounding_box(&self.positions)
    }

    pub fn bbox_diagonal(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        (hi - lo).norm()
    }

    pub fn centroid(&self) -> Vec3 {
        if self.positions.is_empty() {
            return Vec3::zeros();
        }
        self.positions.iter().sum::<Vec3>() / self.positions.len() as f64
    }
}

fn check_non_negative(what: &str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
        Some(i) => Err(Error::invalid(format!("{what} {i} is negative or not finite"))),
        None => Ok(()),
    }
}

pub fn bounding_box(points: &[Vec3]) -> (Vec3, Vec3) {
    let mut it = points.iter();
    let Some(first) = it.next() else {
        return (Vec3::zeros(), Vec3::zeros());
    };
    it.fold((*first, *first), |(lo, hi), p| (lo.inf(p), hi.sup(p)))
}

/// Unit rotation axis and an angle in `[0, π]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisAngle {
    axis: Vec3,
    angle: f64,
}

impl AxisAngle {
    pub fn new(axis: Vec3, angle: f64) -> Result<Self> {
        if (axis.norm() - 1.0).abs() > UNIT_TOL {
            return Err(Error::invalid(format!(
                "rotation axis has norm {}, expected 1",
                axis.norm()
            )));
        }
        if !(0.0..=std::f64::consts::PI).contains(&angle) {
            return Err(Error::invalid(format!("rotation angle {angle} outside [0, pi]")));
        }
        Ok(Self { axis, angle })
    }

    /// No rotation, with `+z` standing in for the undefined axis.
    pub fn identity() -> Self {
        Self {
            axis: Vec3::z(),
            angle: 0.0,
        }
    }

    /// Canonical axis-angle for rotation by `angle` (any real) about `axis`
    /// (any non-zero direction). The angle is wrapped into `[0, π]`, flipping
    /// the axis where needed.
    pub fn wrapped(axis: Vec3, angle: f64) -> Self {
        let norm = axis.norm();
        if norm == 0.0 || !norm.is_finite() || !angle.is_finite() {
            return Self::identity();
        }
        let mut axis = axis / norm;
        let tau = std::f64::consts::TAU;
        let mut a = angle.rem_euclid(tau);
        if a > std::f64::consts::PI {
            a = tau - a;
            axis = -axis;
        }
        Self { axis, angle: a }
    }

    /// Rotation vector `axis * angle`.
    pub fn from_rotation_vector(v: Vec3) -> Self {
        Self::wrapped(v, v.norm())
    }

    /// Inverse of [`rodrigues`] for a rotation matrix.
    pub fn from_matrix(r: &Mat3) -> Self {
        let cos = ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        let skew = Vec3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
        let angle = (skew.norm() / 2.0).atan2(cos);
        if angle < 1e-12 {
            return Self::identity();
        }
        if std::f64::consts::PI - angle > 1e-6 {
            return Self {
                axis: skew.normalize(),
                angle,
            };
        }
        // Near pi the skew part vanishes; read the axis off R + I = 2 a a^T
        // (up to cos terms), using the largest diagonal entry for stability.
        let b = ((r + r.transpose()) / 2.0 + Mat3::identity()) / 2.0;
        let k = (0..3)
            .max_by(|&i, &j| b[(i, i)].total_cmp(&b[(j, j)]))
            .unwrap_or(0);
        let mut axis: Vec3 = b.column(k).into();
        axis /= axis.norm();
        // Pick the sign consistent with the (small) skew part.
        if axis.dot(&skew) < 0.0 {
            axis = -axis;
        }
        Self { axis, angle }
    }

    pub fn axis(&self) -> Vec3 {
        self.axis
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn rotation_vector(&self) -> Vec3 {
        self.axis * self.angle
    }

    pub fn to_matrix(&self) -> Mat3 {
        rodrigues_unchecked(&self.axis, self.angle)
    }
}

/// Rotation matrix for an axis-angle pair via the Rodrigues formula.
pub fn rodrigues(aa: &AxisAngle) -> Result<Mat3> {
    if (aa.axis.norm() - 1.0).abs() > UNIT_TOL {
        return Err(Error::invalid("rodrigues: rotation axis is not unit length"));
    }
    Ok(rodrigues_unchecked(&aa.axis, aa.angle))
}

fn rodrigues_unchecked(axis: &Vec3, angle: f64) -> Mat3 {
    let k = axis.cross_matrix();
    let (s, c) = angle.sin_cos();
    Mat3::identity() + k * s + k * k * (1.0 - c)
}

/// Checks orthonormality and `det = +1` within `tol`.
pub fn is_rotation(r: &Mat3, tol: f64) -> bool {
    r.iter().all(|v| v.is_finite())
        && (r.transpose() * r - Mat3::identity()).abs().max() <= tol
        && (r.determinant() - 1.0).abs() <= tol
}

/// Nearest rotation in the Frobenius sense (polar factor via SVD).
pub fn orthonormalize(r: &Mat3) -> Mat3 {
    let svd = r.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut d = Mat3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    u * d * v_t
}

/// Proper rigid motion `x -> R x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Mat3,
    translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        if !is_rotation(&rotation, UNIT_TOL) {
            return Err(Error::invalid("matrix is not a proper rotation"));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("translation is not finite"));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// Builds a transform whose rotation is trusted to be in SO(3) up to
    /// round-off, e.g. a product of valid rotations.
    pub(crate) fn from_parts(rotation: Mat3, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: t,
        }
    }

    pub fn from_axis_angle(aa: &AxisAngle, translation: Vec3) -> Self {
        Self {
            rotation: aa.to_matrix(),
            translation,
        }
    }

    /// Rotation by `rotation` about `pivot`, followed by `translation`.
    pub fn about_pivot(rotation: Mat3, pivot: &Vec3, translation: Vec3) -> Self {
        Self {
            rotation,
            translation: pivot - rotation * pivot + translation,
        }
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn transform_points(&self, points: &[Vec3]) -> Vec<Vec3> {
        points.iter().map(|p| self.transform_point(p)).collect()
    }

    /// Applies the motion to positions and rotates normals; scalar
    /// attributes are copied.
    pub fn apply(&self, cloud: &PointCloud) -> PointCloud {
        PointCloud {
            positions: self.transform_points(&cloud.positions),
            normals: cloud
                .normals
                .as_ref()
                .map(|ns| ns.iter().map(|n| (self.rotation * n).normalize()).collect()),
            curvatures: cloud.curvatures.clone(),
            intensities: cloud.intensities.clone(),
        }
    }

    /// `self ∘ inner`: apply `inner` first, then `self`.
    pub fn compose(&self, inner: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * inner.rotation,
            translation: self.rotation * inner.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Row-major 4x4 homogeneous matrix.
    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn from_homogeneous(m: &Matrix4<f64>) -> Result<Self> {
        let bottom = [m[(3, 0)], m[(3, 1)], m[(3, 2)], m[(3, 3)]];
        if bottom != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::invalid("homogeneous matrix bottom row must be 0 0 0 1"));
        }
        Self::new(
            m.fixed_view::<3, 3>(0, 0).into_owned(),
            m.fixed_view::<3, 1>(0, 3).into_owned(),
        )
    }

    /// Same transform with the rotation projected back onto SO(3).
    pub fn renormalized(&self) -> RigidTransform {
        RigidTransform {
            rotation: orthonormalize(&self.rotation),
            translation: self.translation,
        }
    }
}

/// Least-squares rigid motion taking `from[i]` onto `to[i]` (Kabsch).
pub fn kabsch(from: &[Vec3], to: &[Vec3]) -> Result<RigidTransform> {
    if from.len() != to.len() || from.is_empty() {
        return Err(Error::invalid("kabsch needs two equally sized, non-empty point lists"));
    }
    let n = from.len() as f64;
    let cf = from.iter().sum::<Vec3>() / n;
    let ct = to.iter().sum::<Vec3>() / n;
    let h = from
        .iter()
        .zip(to)
        .fold(Mat3::zeros(), |acc, (a, b)| acc + (b - ct) * (a - cf).transpose());
    let rotation = orthonormalize(&h);
    Ok(RigidTransform::from_parts(rotation, ct - rotation * cf))
}

/// Tolerance for accepting a matrix as a rotation in the metrics.
const METRIC_ROTATION_TOL: f64 = 1e-6;

/// Angular difference in degrees between two rotations, in `[0, 180]`.
pub fn ang_err(r_hat: &Mat3, r_true: &Mat3) -> Result<f64> {
    if !is_rotation(r_hat, METRIC_ROTATION_TOL) || !is_rotation(r_true, METRIC_ROTATION_TOL) {
        return Err(Error::invalid("ang_err: input is not a rotation matrix"));
    }
    // Swapping the arguments transposes `m` exactly, which flips the sign of
    // the skew part and keeps the trace, so the result is exactly symmetric.
    // atan2 keeps full precision near 0 and 180 degrees, unlike acos.
    let m = r_hat * r_true.transpose();
    let skew = Vec3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
    let cos = 0.5 * (r_hat.component_mul(r_true).sum() - 1.0);
    Ok((0.5 * skew.norm()).atan2(cos).to_degrees())
}

/// Root-mean-squared distance between two placements of the same cloud.
pub fn rmsd(t_hat: &RigidTransform, t_true: &RigidTransform, cloud: &PointCloud) -> Result<f64> {
    rmsd_points(t_hat, t_true, cloud.positions())
}

pub fn rmsd_points(t_hat: &RigidTransform, t_true: &RigidTransform, points: &[Vec3]) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::invalid("rmsd: empty cloud"));
    }
    let sum: f64 = points
        .iter()
        .map(|p| (t_hat.transform_point(p) - t_true.transform_point(p)).norm_squared())
        .sum();
    Ok((sum / points.len() as f64).sqrt())
}
