//! Particle systems, feature-space correspondences, Coulomb-style forces and
//! the rigid-body step that turns forces into an incremental motion.
//!
//! A step starts from rest: with time step `dt` the translation is
//! `phi = a dt^2 / 2` with `a = f / G`, and the rotation vector is
//! `sigma = alpha dt^2 / 2` with `alpha = M / J`, where `M` is the torque
//! about the mass center and `J` the scalar moment of inertia about it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AxisAngle, RigidTransform, Vec3};

/// Masses, mass center and scalar inertia of a point set.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSystem {
    pub positions: Vec<Vec3>,
    pub masses: Vec<f64>,
    pub total_mass: f64,
    pub mass_center: Vec3,
    /// `J = sum_i m_i |x_i - c|^2`.
    pub inertia: f64,
}

pub fn build_particle_system(positions: &[Vec3], masses: &[f64]) -> Result<ParticleSystem> {
    if positions.len() != masses.len() {
        return Err(Error::invalid("one mass per particle is required"));
    }
    if positions.is_empty() {
        return Err(Error::invalid("particle system needs at least one particle"));
    }
    if let Some(i) = masses.iter().position(|m| !(m.is_finite() && *m > 0.0)) {
        return Err(Error::invalid(format!(
            "particle {i} has non-positive mass {}",
            masses[i]
        )));
    }
    let total_mass: f64 = masses.iter().sum();
    let mass_center = positions
        .iter()
        .zip(masses)
        .map(|(p, m)| p * *m)
        .sum::<Vec3>()
        / total_mass;
    let inertia = positions
        .iter()
        .zip(masses)
        .map(|(p, m)| m * (p - mass_center).norm_squared())
        .sum();
    Ok(ParticleSystem {
        positions: positions.to_vec(),
        masses: masses.to_vec(),
        total_mass,
        mass_center,
        inertia,
    })
}

/// Raises zero or tiny intensities to the 1st percentile of the positive
/// ones so every particle has positive mass.
pub fn floor_masses(intensities: &[f64]) -> Result<Vec<f64>> {
    let mut positive: Vec<f64> = intensities
        .iter()
        .copied()
        .filter(|v| v.is_finite() && *v > 0.0)
        .collect();
    if positive.is_empty() {
        return Err(Error::invalid("all intensities are zero"));
    }
    positive.sort_by(f64::total_cmp);
    let floor = positive[(positive.len() - 1) / 100];
    Ok(intensities.iter().map(|v| v.max(floor)).collect())
}

/// Maps a feature distance to the force coefficient `k_ij`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    /// `2 exp(-d^2 / 2) - 1`, spanning `(-1, 1]`.
    #[default]
    Corrected,
    /// `sqrt(2)/pi * exp(-d^2 / 2) - 1`, always repulsive.
    Literal,
}

impl Kernel {
    pub fn coefficient(self, feature_distance: f64) -> f64 {
        let g = (-feature_distance * feature_distance / 2.0).exp();
        match self {
            Kernel::Corrected => 2.0 * g - 1.0,
            Kernel::Literal => std::f64::consts::SQRT_2 / std::f64::consts::PI * g - 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub source: usize,
    pub target: usize,
    pub k: f64,
}

/// Exactly one target per source point, in source order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorrespondenceSet {
    pub pairs: Vec<Correspondence>,
}

impl CorrespondenceSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Nearest neighbour of each source feature among the target features
/// (ties to the smallest target index), with its kernel coefficient.
pub fn match_features(vg_source: &[f64], vg_target: &[f64], kernel: Kernel) -> Result<CorrespondenceSet> {
    if vg_source.is_empty() || vg_target.is_empty() {
        return Err(Error::invalid("feature lists must be non-empty"));
    }
    if vg_source.iter().chain(vg_target).any(|v| !v.is_finite()) {
        return Err(Error::invalid("features must be finite"));
    }
    // Sorted by value then index, so the first hit in a run of equal values
    // is the smallest index.
    let mut sorted: Vec<(f64, usize)> = vg_target.iter().copied().zip(0..).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let pairs = vg_source
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let pos = sorted.partition_point(|&(t, _)| t < v);
            let mut best: Option<(f64, usize)> = None;
            let mut consider = |p: usize| {
                let (t, j) = sorted[p];
                let d = (v - t).abs();
                let better = match best {
                    None => true,
                    Some((bd, bj)) => d < bd || (d == bd && j < bj),
                };
                if better {
                    best = Some((d, j));
                }
            };
            // Right side: the run of equal values starting at `pos`.
            if pos < sorted.len() {
                let first = sorted[pos].0;
                let mut p = pos;
                while p < sorted.len() && sorted[p].0 == first {
                    consider(p);
                    p += 1;
                }
            }
            // Left side: the run of equal values ending at `pos - 1`.
            if pos > 0 {
                let last = sorted[pos - 1].0;
                let mut p = pos;
                while p > 0 && sorted[p - 1].0 == last {
                    consider(p - 1);
                    p -= 1;
                }
            }
            let (d, j) = best.expect("target list is non-empty");
            Correspondence {
                source: i,
                target: j,
                k: kernel.coefficient(d),
            }
        })
        .collect();
    Ok(CorrespondenceSet { pairs })
}

/// Per-point forces on the source and their sum.
#[derive(Debug, Clone, PartialEq)]
pub struct Forces {
    pub per_point: Vec<Vec3>,
    pub total: Vec3,
}

/// `f_i = k_ij (y_j - x_i) / max(|y_j - x_i|, eps)^3`, summed in source
/// order.
pub fn compute_forces(source: &[Vec3], target: &[Vec3], corr: &CorrespondenceSet, epsilon: f64) -> Result<Forces> {
    if corr.len() != source.len() {
        return Err(Error::invalid(format!(
            "{} correspondences for {} source points",
            corr.len(),
            source.len()
        )));
    }
    let mut per_point = vec![Vec3::zeros(); source.len()];
    for c in &corr.pairs {
        let (Some(x), Some(y)) = (source.get(c.source), target.get(c.target)) else {
            return Err(Error::invalid("correspondence index out of range"));
        };
        let d = y - x;
        let r = d.norm().max(epsilon);
        per_point[c.source] = d * (c.k / (r * r * r));
    }
    let total = per_point.iter().fold(Vec3::zeros(), |acc, f| acc + f);
    Ok(Forces { per_point, total })
}

/// Like [`compute_forces`], but each force is blended towards its
/// component along the target normal at the matched point:
/// `f_i = k_ij P_j (y_j - x_i) / max(|y_j - x_i|, eps)^3` with
/// `P_j = (1 - eta) I + eta n_j n_j^T`.
///
/// `eta = 0` is the plain Coulomb force; `eta = 1` keeps only the part that
/// pulls the point onto the target's local tangent plane.
pub fn compute_surface_forces(
    source: &[Vec3],
    target: &[Vec3],
    target_normals: &[Vec3],
    corr: &CorrespondenceSet,
    epsilon: f64,
    eta: f64,
) -> Result<Forces> {
    if target_normals.len() != target.len() {
        return Err(Error::invalid("one normal per target point is required"));
    }
    let mut forces = compute_forces(source, target, corr, epsilon)?;
    if eta == 0.0 {
        return Ok(forces);
    }
    for c in &corr.pairs {
        let n = target_normals[c.target];
        let f = forces.per_point[c.source];
        forces.per_point[c.source] = f * (1.0 - eta) + n * (eta * n.dot(&f));
    }
    forces.total = forces.per_point.iter().fold(Vec3::zeros(), |acc, f| acc + f);
    Ok(forces)
}

/// Outcome of one rigid-body step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub axis_angle: AxisAngle,
    /// Translation `phi` of the mass center.
    pub translation: Vec3,
    /// Kinetic energy `G |a dt|^2 / 2 + J |alpha dt|^2 / 2`.
    pub energy: f64,
    pub acceleration: Vec3,
    pub angular_acceleration: Vec3,
    pub torque: Vec3,
}

impl StepResult {
    pub fn identity() -> Self {
        Self {
            axis_angle: AxisAngle::identity(),
            translation: Vec3::zeros(),
            energy: 0.0,
            acceleration: Vec3::zeros(),
            angular_acceleration: Vec3::zeros(),
            torque: Vec3::zeros(),
        }
    }
}

/// Integrates one step of length `dt` from rest.
///
/// With `J = 0` the rotation is suppressed; with zero torque the rotation is
/// the identity about `+z`.
pub fn dynamics_step(system: &ParticleSystem, forces: &Forces, dt: f64) -> Result<StepResult> {
    dynamics_step_split(system, forces, dt, dt)
}

/// [`dynamics_step`] with separate step lengths for translation and
/// rotation.
pub fn dynamics_step_split(
    system: &ParticleSystem,
    forces: &Forces,
    dt_translation: f64,
    dt_rotation: f64,
) -> Result<StepResult> {
    if forces.per_point.len() != system.positions.len() {
        return Err(Error::invalid("one force per particle is required"));
    }
    let acceleration = forces.total / system.total_mass;
    let torque = system
        .positions
        .iter()
        .zip(&forces.per_point)
        .fold(Vec3::zeros(), |acc, (p, f)| acc + (p - system.mass_center).cross(f));
    let angular_acceleration = if system.inertia > 0.0 {
        torque / system.inertia
    } else {
        Vec3::zeros()
    };
    let translation = acceleration * (0.5 * dt_translation * dt_translation);
    let sigma = angular_acceleration * (0.5 * dt_rotation * dt_rotation);
    let axis_angle = if torque.norm() > 0.0 && system.inertia > 0.0 {
        AxisAngle::wrapped(torque, sigma.norm())
    } else {
        AxisAngle::identity()
    };
    let energy = 0.5 * system.total_mass * (acceleration * dt_translation).norm_squared()
        + 0.5 * system.inertia * (angular_acceleration * dt_rotation).norm_squared();
    Ok(StepResult {
        axis_angle,
        translation,
        energy,
        acceleration,
        angular_acceleration,
        torque,
    })
}

/// Spring constants of a force field along one translation direction and
/// about one rotation axis through `pivot`.
///
/// Each pair acts as a spring of stiffness `|k| / max(d, eps)^3`, projected
/// like [`compute_surface_forces`]. Directions must be unit vectors.
#[allow(clippy::too_many_arguments)]
pub fn directional_stiffness(
    source: &[Vec3],
    target: &[Vec3],
    target_normals: &[Vec3],
    corr: &CorrespondenceSet,
    epsilon: f64,
    eta: f64,
    pivot: &Vec3,
    direction: &Vec3,
    axis: &Vec3,
) -> (f64, f64) {
    let mut k_t = 0.0;
    let mut k_r = 0.0;
    for c in &corr.pairs {
        let x = source[c.source];
        let d = (target[c.target] - x).norm().max(epsilon);
        let w = c.k.abs() / (d * d * d);
        let n = target_normals[c.target];
        let v = axis.cross(&(x - pivot));
        k_t += w * ((1.0 - eta) + eta * n.dot(direction).powi(2));
        k_r += w * ((1.0 - eta) * v.norm_squared() + eta * n.dot(&v).powi(2));
    }
    (k_t, k_r)
}

/// Rigid transform of a step: rotation about `pivot`, then translation.
pub fn step_to_transform(step: &StepResult, pivot: &Vec3) -> RigidTransform {
    step_transform_scaled(&step.axis_angle, &step.translation, 1.0, pivot)
}

/// Like [`step_to_transform`] with angle and translation multiplied by
/// `scale`.
pub fn step_transform_scaled(aa: &AxisAngle, translation: &Vec3, scale: f64, pivot: &Vec3) -> RigidTransform {
    let rot = AxisAngle::wrapped(aa.axis(), aa.angle() * scale).to_matrix();
    RigidTransform::about_pivot(rot, pivot, translation * scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn particle_system_examples() {
        let ps = build_particle_system(&[Vec3::x(), -Vec3::x()], &[1.0, 1.0]).unwrap();
        assert_eq!(ps.mass_center, Vec3::zeros());
        assert_eq!(ps.total_mass, 2.0);
        assert_eq!(ps.inertia, 2.0);
        let ps = build_particle_system(&[Vec3::zeros(), Vec3::x() * 4.0], &[3.0, 1.0]).unwrap();
        assert_eq!(ps.mass_center, Vec3::x());
        assert_eq!(ps.total_mass, 4.0);
        assert_eq!(ps.inertia, 12.0);
        assert!(build_particle_system(&[Vec3::zeros()], &[0.0]).is_err());
    }

    #[test]
    fn uniform_masses_give_centroid() {
        let pts = [Vec3::new(1.0, 2.0, 0.0), Vec3::new(-3.0, 0.5, 1.0), Vec3::new(0.0, 0.0, 4.0)];
        let ps = build_particle_system(&pts, &[0.7; 3]).unwrap();
        let centroid = pts.iter().sum::<Vec3>() / 3.0;
        assert_abs_diff_eq!(ps.mass_center, centroid, epsilon = 1e-15);
    }

    #[test]
    fn mass_floor() {
        let v: Vec<f64> = (0..200).map(|i| if i < 5 { 0.0 } else { i as f64 }).collect();
        let m = floor_masses(&v).unwrap();
        assert!(m.iter().all(|x| *x >= 5.0));
        assert_eq!(m[100], 100.0);
        assert!(floor_masses(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn matching_examples() {
        let c = match_features(&[0.0, 2.0], &[1.9, 0.1], Kernel::Corrected).unwrap();
        assert_eq!(c.pairs[0].target, 1);
        assert_eq!(c.pairs[1].target, 0);
        let same = match_features(&[3.0, -1.0, 0.5], &[3.0, -1.0, 0.5], Kernel::Corrected).unwrap();
        for p in &same.pairs {
            assert_eq!(p.source, p.target);
            assert_eq!(p.k, 1.0);
        }
        // Equal distance on both sides: smallest index wins.
        let tie = match_features(&[1.0], &[2.0, 0.0, 2.0], Kernel::Corrected).unwrap();
        assert_eq!(tie.pairs[0].target, 0);
    }

    #[test]
    fn kernel_ranges() {
        assert_eq!(Kernel::Corrected.coefficient(0.0), 1.0);
        assert!(Kernel::Corrected.coefficient(50.0) >= -1.0);
        let lit = Kernel::Literal.coefficient(0.0);
        assert_abs_diff_eq!(lit, std::f64::consts::SQRT_2 / std::f64::consts::PI - 1.0);
        assert!(lit < 0.0);
    }

    #[test]
    fn force_examples() {
        let corr = CorrespondenceSet {
            pairs: vec![Correspondence { source: 0, target: 0, k: 1.0 }],
        };
        let f = compute_forces(&[Vec3::zeros()], &[Vec3::x() * 2.0], &corr, 1e-12).unwrap();
        assert_abs_diff_eq!(f.total, Vec3::new(0.25, 0.0, 0.0), epsilon = 1e-15);
        let rep = CorrespondenceSet {
            pairs: vec![Correspondence { source: 0, target: 0, k: -1.0 }],
        };
        let g = compute_forces(&[Vec3::zeros()], &[Vec3::x() * 2.0], &rep, 1e-12).unwrap();
        assert_eq!(g.total, -f.total);
        // Coincident pair: the clamp keeps the force finite (here exactly zero).
        let h = compute_forces(&[Vec3::x()], &[Vec3::x()], &corr, 1e-9).unwrap();
        assert_eq!(h.total, Vec3::zeros());
    }

    #[test]
    fn surface_forces_project_onto_normal() {
        let corr = CorrespondenceSet {
            pairs: vec![Correspondence { source: 0, target: 0, k: 1.0 }],
        };
        let x = [Vec3::zeros()];
        let y = [Vec3::new(1.0, 0.0, 1.0)];
        let n = [Vec3::z()];
        let plain = compute_forces(&x, &y, &corr, 1e-12).unwrap();
        let same = compute_surface_forces(&x, &y, &n, &corr, 1e-12, 0.0).unwrap();
        assert_eq!(plain, same);
        let proj = compute_surface_forces(&x, &y, &n, &corr, 1e-12, 1.0).unwrap();
        let mag = 1.0 / 2f64.sqrt().powi(3);
        assert_abs_diff_eq!(proj.total, Vec3::new(0.0, 0.0, mag), epsilon = 1e-15);
    }

    #[test]
    fn zero_forces_give_identity_step() {
        let ps = build_particle_system(&[Vec3::x(), Vec3::y()], &[1.0, 2.0]).unwrap();
        let f = Forces {
            per_point: vec![Vec3::zeros(); 2],
            total: Vec3::zeros(),
        };
        let s = dynamics_step(&ps, &f, 1.0).unwrap();
        assert_eq!(s.axis_angle.angle(), 0.0);
        assert_eq!(s.translation, Vec3::zeros());
        assert_eq!(s.energy, 0.0);
        let t = step_to_transform(&s, &ps.mass_center);
        assert_eq!(t, RigidTransform::identity());
    }

    #[test]
    fn couple_rotates_about_z() {
        let ps = build_particle_system(&[Vec3::x(), -Vec3::x()], &[1.0, 1.0]).unwrap();
        let per_point = vec![Vec3::y(), -Vec3::y()];
        let f = Forces {
            total: per_point.iter().sum(),
            per_point,
        };
        let s = dynamics_step(&ps, &f, 1.0).unwrap();
        assert_eq!(s.torque, Vec3::new(0.0, 0.0, 2.0));
        assert_eq!(s.angular_acceleration, Vec3::z());
        assert_eq!(s.translation, Vec3::zeros());
        assert_abs_diff_eq!(s.axis_angle.angle(), 0.5);
        assert_eq!(s.axis_angle.axis(), Vec3::z());
        assert_abs_diff_eq!(s.energy, 1.0);
    }

    #[test]
    fn mass_proportional_force_translates_only() {
        let pts = [Vec3::new(1.0, 2.0, 0.0), Vec3::new(-3.0, 0.5, 1.0), Vec3::new(0.0, 0.0, 4.0)];
        let masses = [1.0, 2.5, 0.5];
        let ps = build_particle_system(&pts, &masses).unwrap();
        let per_point: Vec<Vec3> = masses.iter().map(|m| Vec3::x() * *m).collect();
        let f = Forces {
            total: per_point.iter().sum(),
            per_point,
        };
        let s = dynamics_step(&ps, &f, 1.0).unwrap();
        assert_abs_diff_eq!(s.acceleration, Vec3::x(), epsilon = 1e-15);
        assert_abs_diff_eq!(s.translation, Vec3::new(0.5, 0.0, 0.0), epsilon = 1e-15);
        assert_abs_diff_eq!(s.torque, Vec3::zeros(), epsilon = 1e-14);
    }

    #[test]
    fn step_transforms() {
        let aa = AxisAngle::new(Vec3::z(), std::f64::consts::FRAC_PI_2).unwrap();
        let pivot = Vec3::x();
        let t = step_transform_scaled(&aa, &Vec3::zeros(), 1.0, &pivot);
        assert_abs_diff_eq!(t.transform_point(&pivot), pivot, epsilon = 1e-15);
        let mut s = StepResult::identity();
        s.translation = Vec3::new(1.0, 2.0, 3.0);
        let t = step_to_transform(&s, &Vec3::new(5.0, -1.0, 0.0));
        assert_eq!(*t.translation(), Vec3::new(1.0, 2.0, 3.0));
    }
}
