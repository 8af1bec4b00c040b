//! Adaptive simulated annealing and the iterative registration loop.
//!
//! Every iteration computes a rigid-body step from the current forces, asks
//! the annealer whether to accept its kinetic energy, falls back to the
//! previous step on rejection, scales the step by the temperature and moves
//! the source.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{Annealer, Config, Matching, TimeStep};
use crate::dynamics::{
    build_particle_system, compute_surface_forces, directional_stiffness, dynamics_step, dynamics_step_split, floor_masses, match_features, step_transform_scaled,
    Correspondence, CorrespondenceSet, Kernel,
};
use crate::error::{Error, Result, Stage};
use crate::features::FeatureCloud;
use crate::geometry::{AxisAngle, RigidTransform, Vec3};
use crate::knn::JointIndex;
use crate::robust::{median, standardize, x84_filter};

/// Cool-down rates with a reliable convergence basin; runs outside it are flagged.
pub const BETA_BASIN: (f64, f64) = (0.7, 0.9);

#[derive(Debug, Clone, PartialEq)]
pub struct AnnealState {
    pub temperature: f64,
    pub accept_rate: f64,
    pub beta: f64,
    /// Completed updates.
    pub iteration: usize,
    pub max_iterations: usize,
}

impl AnnealState {
    pub fn new(beta: f64, max_iterations: usize) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::invalid(format!("beta must lie in (0, 1), got {beta}")));
        }
        if max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be at least 1"));
        }
        Ok(Self {
            temperature: 1.0,
            accept_rate: 0.5,
            beta,
            iteration: 0,
            max_iterations,
        })
    }
}

/// Target acceptance rate at iteration `k` of `max`.
pub fn lam_rate(k: usize, max: usize) -> f64 {
    let x = k as f64 / max as f64;
    if x < 0.15 {
        0.44 + 0.56 * 560f64.powf(-x / 0.15)
    } else if x < 0.65 {
        0.44
    } else {
        0.44 * 440f64.powf(-(x - 0.65) / 0.35)
    }
}

/// `min(1, exp(-dE / T))`.
pub fn acceptance_probability(delta_e: f64, temperature: f64) -> f64 {
    if delta_e <= 0.0 {
        1.0
    } else {
        (-delta_e / temperature).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnealOutcome {
    pub rejected: bool,
    pub lam_rate: f64,
    /// Only set by [`sa_update`]: the temperature fell below epsilon.
    pub converged: bool,
}

/// Metropolis test plus the acceptance-rate moving average. Draws exactly
/// one uniform number.
fn metropolis<R: Rng>(state: &mut AnnealState, e_k: f64, e_prev: f64, rng: &mut R) -> bool {
    let u: f64 = rng.random();
    let delta = e_k - e_prev;
    let accepted = delta < 0.0 || u < acceptance_probability(delta, state.temperature);
    state.accept_rate = if accepted {
        (499.0 * state.accept_rate + 1.0) / 500.0
    } else {
        499.0 * state.accept_rate / 500.0
    };
    !accepted
}

/// One step of adaptive annealing: accept or reject, then cool if the
/// acceptance rate beats the LamRate schedule and heat otherwise.
pub fn asa_update<R: Rng>(state: &mut AnnealState, e_k: f64, e_prev: f64, rng: &mut R) -> AnnealOutcome {
    let rejected = metropolis(state, e_k, e_prev, rng);
    let lam = lam_rate(state.iteration.min(state.max_iterations), state.max_iterations);
    if state.accept_rate > lam {
        state.temperature *= state.beta;
    } else {
        state.temperature /= state.beta;
    }
    state.iteration += 1;
    AnnealOutcome {
        rejected,
        lam_rate: lam,
        converged: false,
    }
}

/// One step of plain annealing with geometric cooling `T <- beta T`.
pub fn sa_update<R: Rng>(state: &mut AnnealState, e_k: f64, e_prev: f64, rng: &mut R, epsilon: f64) -> AnnealOutcome {
    let rejected = metropolis(state, e_k, e_prev, rng);
    state.temperature *= state.beta;
    state.iteration += 1;
    AnnealOutcome {
        rejected,
        lam_rate: f64::NAN,
        converged: state.temperature < epsilon,
    }
}

/// Iterations SA needs to cool from 1 below `epsilon`.
pub fn sa_iterations(beta: f64, epsilon: f64) -> usize {
    let mut t = 1.0f64;
    let mut n = 0;
    while t >= epsilon {
        t *= beta;
        n += 1;
    }
    n
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub energy: f64,
    pub temperature: f64,
    pub accept_rate: f64,
    pub lam_rate: f64,
    pub accepted: bool,
    /// Applied rotation angle (after temperature scaling), radians.
    pub angle: f64,
    /// Norm of the applied translation.
    pub translation: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
    /// The cool-down rate lies outside [`BETA_BASIN`].
    pub beta_outside_basin: bool,
}

impl IterationTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Registration {
    /// Maps source coordinates onto the target.
    pub transform: RigidTransform,
    pub trace: IterationTrace,
    /// Per-iteration transforms, in application order.
    pub steps: Vec<RigidTransform>,
}

/// Standardized features of both clouds.
fn standardized(source: &FeatureCloud, target: &FeatureCloud) -> Result<(Vec<f64>, Vec<f64>)> {
    Ok((standardize(&source.vg)?, standardize(&target.vg)?))
}

/// Matches every moving point to a target point in (position, scaled
/// feature) space and fills the kernel coefficients from the feature gap,
/// faded towards 1 as `eta` goes from 0 to 1.
fn match_joint(
    moving: &[Vec3],
    vs: &[f64],
    index: &JointIndex,
    vt: &[f64],
    kernel: Kernel,
    eta: f64,
) -> CorrespondenceSet {
    let pairs = moving
        .iter()
        .zip(vs)
        .enumerate()
        .map(|(i, (x, v))| {
            let j = index.nearest_one(x, *v);
            Correspondence {
                source: i,
                target: j,
                k: (1.0 - eta) * kernel.coefficient((v - vt[j]).abs()) + eta,
            }
        })
        .collect();
    CorrespondenceSet { pairs }
}

/// `max(softening * median match distance, softening_min * diag)`.
fn softening_length(
    moving: &[Vec3],
    target: &[Vec3],
    corr: &CorrespondenceSet,
    diag: f64,
    config: &Config,
) -> Result<f64> {
    let floor = diag * config.softening_min;
    if config.softening == 0.0 {
        return Ok(floor);
    }
    let d: Vec<f64> = corr
        .pairs
        .iter()
        .map(|c| (target[c.target] - moving[c.source]).norm())
        .collect();
    Ok((config.softening * median(&d)?).max(floor))
}

/// Kinetic energy of a step executed over one iteration, for unit total
/// mass and lengths measured in `length` units. From rest the end velocity
/// is twice the displacement.
fn step_energy(phi: &Vec3, sigma: f64, total_mass: f64, inertia: f64, length: f64) -> f64 {
    let gyration = inertia / (total_mass * length * length);
    2.0 * ((phi / length).norm_squared() + gyration * sigma * sigma)
}

/// Runs the annealed dynamics of `source` towards `target`.
pub fn register(source: &FeatureCloud, target: &FeatureCloud, config: &Config) -> Result<Registration> {
    config.validate()?;
    run_loop(source, target, config).map_err(|e| e.at(Stage::Optimize))
}

fn run_loop(source: &FeatureCloud, target: &FeatureCloud, config: &Config) -> Result<Registration> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::invalid("cannot register an empty cloud"));
    }
    let (vs, vt) = standardized(source, target)?;
    let target_pts = target.cloud.positions();
    let diag = target.cloud.bbox_diagonal().max(source.cloud.bbox_diagonal());
    if !(diag > 0.0) {
        return Err(Error::invalid("target has zero extent"));
    }
    let mut masses = floor_masses(source.intensities())?;
    if config.cap_masses {
        let cap = x84_filter(&masses, config.alpha, config.x84_rule)?.threshold;
        masses.iter_mut().for_each(|m| *m = m.min(cap));
    }
    let target_normals = target
        .cloud
        .normals()
        .ok_or_else(|| Error::invalid("target features lack normals"))?;

    let mut moving: Vec<Vec3> = source.cloud.positions().to_vec();
    let mut composite = RigidTransform::identity();
    if config.center_first {
        let shift = target.cloud.centroid() - source.cloud.centroid();
        composite = RigidTransform::from_translation(shift);
        moving = composite.transform_points(&moving);
    }
    let fixed_matches = match config.matching {
        Matching::Features => Some(match_features(&vs, &vt, config.kernel)?),
        Matching::Joint => None,
    };

    let mut state = AnnealState::new(config.beta, config.max_iterations)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut trace = IterationTrace {
        records: Vec::new(),
        beta_outside_basin: config.beta < BETA_BASIN.0 || config.beta > BETA_BASIN.1,
    };
    let mut steps = Vec::new();
    let budget = match config.annealer {
        Annealer::Asa => config.max_iterations,
        Annealer::Sa => config.sa_max_iterations,
    };
    // (axis-angle, translation, energy) of the last applied step.
    let mut previous: Option<(AxisAngle, Vec3, f64)> = None;

    for _ in 0..budget {
        let t_now = state.temperature;
        let (corr, eta) = match &fixed_matches {
            Some(c) => (c.clone(), 0.0),
            None => {
                let rel = config.feature_scale * t_now.powf(config.feature_power);
                let index = JointIndex::new(target_pts, &vt, diag * rel);
                let eta = config.normal_projection * (1.0 - rel.min(1.0));
                (match_joint(&moving, &vs, &index, &vt, config.kernel, eta), eta)
            }
        };
        let soft = softening_length(&moving, target_pts, &corr, diag, config)?;
        let forces = compute_surface_forces(&moving, target_pts, target_normals, &corr, soft, eta)?;
        let system = build_particle_system(&moving, &masses)?;
        let step = match config.time_step {
            TimeStep::Unit => dynamics_step(&system, &forces, 1.0)?,
            TimeStep::Normalized => {
                let probe = dynamics_step(&system, &forces, 1.0)?;
                let dir = probe.acceleration.try_normalize(0.0).unwrap_or_else(Vec3::x);
                let axis = probe.torque.try_normalize(0.0).unwrap_or_else(Vec3::z);
                let (k_t, k_r) = directional_stiffness(
                    &moving,
                    target_pts,
                    target_normals,
                    &corr,
                    soft,
                    eta,
                    &system.mass_center,
                    &dir,
                    &axis,
                );
                let dt_t = if k_t > 0.0 { (system.total_mass / k_t).sqrt() } else { 1.0 };
                let dt_r = if k_r > 0.0 { (system.inertia / k_r).sqrt() } else { 1.0 };
                dynamics_step_split(&system, &forces, dt_t, dt_r)?
            }
        };
        let energy = step_energy(
            &step.translation,
            step.axis_angle.angle(),
            system.total_mass,
            system.inertia,
            diag,
        );

        let e_prev = previous.as_ref().map_or(energy, |p| p.2);
        let outcome = match config.annealer {
            Annealer::Asa => asa_update(&mut state, energy, e_prev, &mut rng),
            Annealer::Sa => sa_update(&mut state, energy, e_prev, &mut rng, config.sa_epsilon),
        };
        let (aa, phi, e_k) = match (&previous, outcome.rejected) {
            (Some(p), true) => p.clone(),
            _ => (step.axis_angle, step.translation, energy),
        };
        let t_scale = state.temperature;
        let applied_aa = AxisAngle::wrapped(aa.axis(), aa.angle() * t_scale);
        let applied_phi = phi * t_scale;
        let tk = step_transform_scaled(&applied_aa, &applied_phi, 1.0, &system.mass_center);
        moving = tk.transform_points(&moving);
        composite = tk.compose(&composite);
        steps.push(tk);
        // A rejected step reuses the previous temperature-scaled step.
        previous = Some((applied_aa, applied_phi, e_k));

        trace.records.push(IterationRecord {
            energy: e_k,
            temperature: state.temperature,
            accept_rate: state.accept_rate,
            lam_rate: outcome.lam_rate,
            accepted: !outcome.rejected,
            angle: applied_aa.angle(),
            translation: applied_phi.norm(),
        });
        if outcome.converged {
            break;
        }
        if config.early_exit
            && state.temperature < config.sa_epsilon
            && applied_aa.angle() < 1e-12
            && applied_phi.norm() < 1e-12
        {
            break;
        }
    }
    Ok(Registration {
        transform: composite.renormalized(),
        trace,
        steps,
    })
}
