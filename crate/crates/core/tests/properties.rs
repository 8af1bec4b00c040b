use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

use dynreg::config::Config;
use dynreg::dynamics::{
    build_particle_system, compute_forces, dynamics_step, step_to_transform, Correspondence, CorrespondenceSet,
    Forces, Kernel, StepResult,
};
use dynreg::features::{estimate_normals_curvatures, geometric_invariant, resample, signal_of};
use dynreg::geometry::{ang_err, rmsd_points, rodrigues, AxisAngle, PointCloud, RigidTransform, Vec3};
use dynreg::graph::{apply_filter, build_graph, response_intensity, GraphFilter, Shift};
use dynreg::io::{parse_cloud, ply_bytes, xyz_text, PlyFormat};
use dynreg::optimizer::{asa_update, lam_rate, register, AnnealState};
use dynreg::pipeline::{preprocess, run};
use dynreg::robust::{mad, x84_filter, X84Rule};
use dynreg::synth::{blob, rng, synthesize_pair, Perturbation};

fn random_cloud(n: usize, seed: u64) -> PointCloud {
    let mut r = rng(seed);
    let pts: Vec<Vec3> = (0..n)
        .map(|_| Vec3::new(r.random_range(-1.0..1.0), r.random_range(-2.0..2.0), r.random_range(-0.5..0.5)))
        .collect();
    PointCloud::new(pts).unwrap()
}

fn motion() -> impl Strategy<Value = RigidTransform> {
    (
        prop::array::uniform3(-1.0f64..1.0),
        0.0f64..std::f64::consts::PI,
        prop::array::uniform3(-10.0f64..10.0),
    )
        .prop_filter("non-zero axis", |(a, _, _)| Vec3::from(*a).norm() > 1e-3)
        .prop_map(|(a, angle, t)| RigidTransform::from_axis_angle(&AxisAngle::wrapped(Vec3::from(a), angle), Vec3::from(t)))
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

/// `W` built by brute force: all pairwise distances, the k nearest, and
/// `exp(-2 d^2 / tau^2)` with `tau` the k-th distance.
fn dense_weights(points: &[Vec3], k: usize) -> DMatrix<f64> {
    let n = points.len();
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut d: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| ((points[j] - points[i]).norm_squared(), j))
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0));
        let tau_sq = d[k - 1].0;
        for &(d2, j) in &d[..k] {
            w[(i, j)] = (-2.0 * d2 / tau_sq).exp();
        }
    }
    w
}

fn column(points: &[Vec3], axis: usize) -> DVector<f64> {
    DVector::from_iterator(points.len(), points.iter().map(|p| p[axis]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rodrigues_round_trip(a in prop::array::uniform3(-1.0f64..1.0), angle in 1e-6f64..(std::f64::consts::PI - 1e-6)) {
        let axis = Vec3::from(a);
        prop_assume!(axis.norm() > 1e-3);
        let aa = AxisAngle::new(axis.normalize(), angle).unwrap();
        let back = AxisAngle::from_matrix(&rodrigues(&aa).unwrap());
        prop_assert!((back.rotation_vector() - aa.rotation_vector()).norm() <= 1e-9);
    }

    #[test]
    fn ang_err_zero_and_symmetric(a in motion(), b in motion()) {
        prop_assert!(ang_err(a.rotation(), a.rotation()).unwrap().abs() <= 1e-12 * 180.0);
        let ab = ang_err(a.rotation(), b.rotation()).unwrap();
        let ba = ang_err(b.rotation(), a.rotation()).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12 * 180.0);
    }

    #[test]
    fn compose_is_associative(a in motion(), b in motion(), c in motion()) {
        let left = a.compose(&b).compose(&c).to_homogeneous();
        let right = a.compose(&b.compose(&c)).to_homogeneous();
        prop_assert!((left - right).abs().max() <= 1e-9);
    }

    #[test]
    fn apply_preserves_distances(t in motion(), seed in any::<u64>()) {
        let cloud = random_cloud(30, seed);
        let moved = t.apply(&cloud);
        for i in 0..cloud.len() {
            for j in (i + 1)..cloud.len() {
                let d0 = (cloud.positions()[i] - cloud.positions()[j]).norm();
                let d1 = (moved.positions()[i] - moved.positions()[j]).norm();
                prop_assert!(rel_close(d0, d1, 1e-9));
            }
        }
    }

    #[test]
    fn intensity_is_rigid_invariant(t in motion(), seed in any::<u64>(), n in 20usize..200) {
        let cloud = random_cloud(n, seed);
        let moved = t.apply(&cloud);
        let a = response_intensity(&cloud, &build_graph(&cloud, 10).unwrap()).unwrap();
        let b = response_intensity(&moved, &build_graph(&moved, 10).unwrap()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!(rel_close(*x, *y, 1e-9) || (x - y).abs() <= 1e-15, "{x} vs {y}");
        }
    }

    #[test]
    fn transition_shift_is_row_stochastic(seed in any::<u64>(), n in 12usize..60, k in 1usize..10) {
        let cloud = random_cloud(n, seed);
        let graph = build_graph(&cloud, k).unwrap();
        let ones = vec![nalgebra::SVector::<f64, 1>::new(1.0); n];
        let out = apply_filter(&GraphFilter::new(vec![0.0, 1.0]).unwrap(), &graph, &ones, Shift::Transition).unwrap();
        for v in out {
            prop_assert!((v[0] - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn sparse_filter_matches_dense_polynomial(
        seed in any::<u64>(),
        n in 6usize..=20,
        k in 1usize..5,
        h in prop::collection::vec(-2.0f64..2.0, 1..5),
        laplacian in any::<bool>(),
    ) {
        let cloud = random_cloud(n, seed);
        let pts = cloud.positions();
        let graph = build_graph(&cloud, k).unwrap();
        let w = dense_weights(pts, k);
        let deg = DMatrix::from_diagonal(&DVector::from_iterator(n, (0..n).map(|i| w.row(i).sum())));
        let shift = if laplacian {
            &deg - &w
        } else {
            deg.try_inverse().unwrap() * &w
        };
        let filter = GraphFilter::new(h.clone()).unwrap();
        let sparse = apply_filter(&filter, &graph, pts, if laplacian { Shift::Laplacian } else { Shift::Transition }).unwrap();
        let mut power = DMatrix::identity(n, n);
        let mut poly = DMatrix::zeros(n, n);
        for c in &h {
            poly += &power * *c;
            power = &shift * power;
        }
        for axis in 0..3 {
            let dense = &poly * column(pts, axis);
            let scale = dense.amax().max(1.0);
            for i in 0..n {
                prop_assert!((dense[i] - sparse[i][axis]).abs() <= 1e-12 * scale * 10.0,
                    "axis {axis} point {i}: {} vs {}", dense[i], sparse[i][axis]);
            }
        }
    }

    #[test]
    fn intensity_is_distance_to_weighted_mean(seed in any::<u64>(), n in 12usize..80) {
        let cloud = random_cloud(n, seed);
        let pts = cloud.positions();
        let intensity = response_intensity(&cloud, &build_graph(&cloud, 10).unwrap()).unwrap();
        let w = dense_weights(pts, 10);
        for i in 0..n {
            let total: f64 = w.row(i).sum();
            let mean = (0..n).fold(Vec3::zeros(), |acc, j| acc + pts[j] * w[(i, j)]) / total;
            let expect = (pts[i] - mean).norm_squared();
            prop_assert!(intensity[i] >= 0.0);
            prop_assert!((intensity[i] - expect).abs() <= 1e-12 * (1.0 + expect));
        }
    }

    #[test]
    fn mad_matches_sort_oracle(values in prop::collection::vec(-1e6f64..1e6, 1..1000)) {
        let med = |v: &mut Vec<f64>| {
            v.sort_by(|a, b| a.total_cmp(b));
            let m = v.len() / 2;
            if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 }
        };
        let mut v = values.clone();
        let m = med(&mut v);
        let mut dev: Vec<f64> = values.iter().map(|x| (x - m).abs()).collect();
        prop_assert_eq!(mad(&values).unwrap(), med(&mut dev));
    }

    #[test]
    fn x84_scale_invariant(values in prop::collection::vec(0.0f64..100.0, 1..300), exp in -20i32..20, literal in any::<bool>()) {
        // Power-of-two scaling keeps every quantity exact.
        let s = 2f64.powi(exp);
        let rule = if literal { X84Rule::Literal } else { X84Rule::MedianCentered };
        let scaled: Vec<f64> = values.iter().map(|v| v * s).collect();
        let a = x84_filter(&values, 5.2, rule).unwrap();
        let b = x84_filter(&scaled, 5.2, rule).unwrap();
        prop_assert_eq!(a.kept_indices, b.kept_indices);
        prop_assert_eq!(a.removed_indices, b.removed_indices);
    }

    #[test]
    fn x84_scale_invariant_any_factor(values in prop::collection::vec(0.0f64..100.0, 1..300), s in 1e-3f64..1e3, literal in any::<bool>()) {
        let rule = if literal { X84Rule::Literal } else { X84Rule::MedianCentered };
        let a = x84_filter(&values, 5.2, rule).unwrap();
        // Skip lists with a value within rounding of the threshold.
        prop_assume!(values.iter().all(|v| (v - a.threshold).abs() > 1e-9 * a.threshold.abs().max(1.0)));
        let scaled: Vec<f64> = values.iter().map(|v| v * s).collect();
        let b = x84_filter(&scaled, 5.2, rule).unwrap();
        prop_assert_eq!(a.removed_indices, b.removed_indices);
    }

    #[test]
    fn x84_monotone_in_alpha(values in prop::collection::vec(0.0f64..100.0, 1..300), a1 in 0.1f64..10.0, extra in 0.0f64..10.0, literal in any::<bool>()) {
        let rule = if literal { X84Rule::Literal } else { X84Rule::MedianCentered };
        let small = x84_filter(&values, a1, rule).unwrap();
        let large = x84_filter(&values, a1 + extra, rule).unwrap();
        prop_assert!(large.removed_indices.iter().all(|i| small.removed_indices.contains(i)));
    }

    #[test]
    fn x84_report_survives_rigid_motion(t in motion(), seed in any::<u64>()) {
        let cloud = random_cloud(150, seed);
        let moved = t.apply(&cloud);
        let ia = response_intensity(&cloud, &build_graph(&cloud, 10).unwrap()).unwrap();
        let ib = response_intensity(&moved, &build_graph(&moved, 10).unwrap()).unwrap();
        let a = x84_filter(&ia, 5.2, X84Rule::MedianCentered).unwrap();
        prop_assume!(ia.iter().all(|v| (v - a.threshold).abs() > 1e-8 * a.threshold));
        let b = x84_filter(&ib, 5.2, X84Rule::MedianCentered).unwrap();
        prop_assert_eq!(a.kept_indices, b.kept_indices);
        prop_assert_eq!(a.removed_indices, b.removed_indices);
    }

    #[test]
    fn vg_matches_dense_laplacian_form(seed in any::<u64>(), n in 8usize..=20, k in 2usize..6) {
        let cloud = estimate_normals_curvatures(&random_cloud(n, seed), k).unwrap();
        let graph = build_graph(&cloud, k).unwrap();
        let vg = geometric_invariant(&cloud, &graph).unwrap();
        let signal = signal_of(&cloud).unwrap();
        let w = dense_weights(cloud.positions(), k);
        let out_deg = DVector::from_iterator(n, (0..n).map(|i| w.row(i).sum()));
        let in_deg = DVector::from_iterator(n, (0..n).map(|j| w.column(j).sum()));
        // Per point: D s^2 - 2 s (W s) + W s^2, summed over the 4 channels.
        let mut per_point = DVector::zeros(n);
        let mut total_form = 0.0;
        let lap = DMatrix::from_diagonal(&(&out_deg + &in_deg)) - &w - w.transpose();
        for c in 0..4 {
            let s = DVector::from_iterator(n, signal.iter().map(|v| v[c]));
            let s2 = s.component_mul(&s);
            per_point += out_deg.component_mul(&s2) - 2.0 * s.component_mul(&(&w * &s)) + &w * &s2;
            total_form += (s.transpose() * &lap * &s)[(0, 0)];
        }
        for i in 0..n {
            prop_assert!((vg[i] - per_point[i]).abs() <= 1e-12 * (1.0 + per_point[i].abs()) * 10.0);
        }
        let sum: f64 = vg.iter().sum();
        prop_assert!((sum - total_form).abs() <= 1e-12 * (1.0 + total_form.abs()) * 10.0);
    }

    #[test]
    fn vg_invariant_with_transformed_normals(t in motion(), seed in any::<u64>()) {
        let cloud = estimate_normals_curvatures(&random_cloud(80, seed), 10).unwrap();
        let moved = t.apply(&cloud);
        let a = geometric_invariant(&cloud, &build_graph(&cloud, 10).unwrap()).unwrap();
        let b = geometric_invariant(&moved, &build_graph(&moved, 10).unwrap()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!(rel_close(*x, *y, 1e-12) || (x - y).abs() <= 1e-14);
        }
    }

    #[test]
    fn curvature_bounded_and_zero_on_planes(seed in any::<u64>(), t in motion()) {
        let cloud = estimate_normals_curvatures(&random_cloud(60, seed), 10).unwrap();
        prop_assert!(cloud.curvatures().unwrap().iter().all(|c| (0.0..=1.0 / 3.0).contains(c)));
        let mut r = rng(seed);
        let plane: Vec<Vec3> = (0..60).map(|_| Vec3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), 0.0)).collect();
        let plane = t.apply(&PointCloud::new(plane).unwrap());
        let fitted = estimate_normals_curvatures(&plane, 10).unwrap();
        prop_assert!(fitted.curvatures().unwrap().iter().all(|c| *c <= 1e-12));
    }

    #[test]
    fn resample_takes_exact_top_fraction(values in prop::collection::vec(0.0f64..1.0, 8..200), rate in 0.05f64..1.0) {
        let n = values.len();
        prop_assume!((rate * n as f64).ceil() >= 4.0);
        let cloud = random_cloud(n, 1);
        let (out, picked) = resample(&cloud, &values, rate).unwrap();
        prop_assert_eq!(out.len(), (rate * n as f64).ceil() as usize);
        let low = picked.iter().map(|&i| values[i]).fold(f64::INFINITY, f64::min);
        for i in (0..n).filter(|i| !picked.contains(i)) {
            prop_assert!(values[i] <= low);
        }
    }

    #[test]
    fn corrected_kernel_shape(d1 in 0.0f64..30.0, gap in 1e-6f64..10.0) {
        let k = |d: f64| Kernel::Corrected.coefficient(d);
        prop_assert!((-1.0..=1.0).contains(&k(d1)));
        prop_assert!(k(d1 + gap) < k(d1) || k(d1) == -1.0);
        prop_assert_eq!(k(0.0), 1.0);
        prop_assert!(d1 == 0.0 || k(d1) < 1.0);
        prop_assert!((k(1e3) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_field_has_no_torque(seed in any::<u64>(), g in prop::array::uniform3(-5.0f64..5.0)) {
        let cloud = random_cloud(50, seed);
        let mut r = rng(seed ^ 1);
        let masses: Vec<f64> = (0..50).map(|_| r.random_range(0.1..3.0)).collect();
        let system = build_particle_system(cloud.positions(), &masses).unwrap();
        let per_point: Vec<Vec3> = masses.iter().map(|m| Vec3::from(g) * *m).collect();
        let total = per_point.iter().sum();
        let step = dynamics_step(&system, &Forces { per_point, total }, 1.0).unwrap();
        prop_assert!(step.torque.norm() <= 1e-9);
    }

    #[test]
    fn step_energy_zero_iff_at_rest(seed in any::<u64>(), zero in any::<bool>()) {
        let cloud = random_cloud(40, seed);
        let system = build_particle_system(cloud.positions(), &[1.0; 40]).unwrap();
        let mut r = rng(seed ^ 2);
        let per_point: Vec<Vec3> = if zero {
            vec![Vec3::zeros(); 40]
        } else {
            (0..40).map(|_| Vec3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))).collect()
        };
        let total = per_point.iter().sum();
        let step = dynamics_step(&system, &Forces { per_point, total }, 1.0).unwrap();
        prop_assert!(step.energy >= 0.0);
        let at_rest = step.acceleration == Vec3::zeros() && step.angular_acceleration == Vec3::zeros();
        prop_assert_eq!(step.energy == 0.0, at_rest);
        prop_assert_eq!(zero, at_rest);
    }

    #[test]
    fn pure_rotation_step_fixes_pivot(a in prop::array::uniform3(-1.0f64..1.0), angle in 0.0f64..3.0, pivot in prop::array::uniform3(-100.0f64..100.0)) {
        prop_assume!(Vec3::from(a).norm() > 1e-3);
        let step = StepResult { axis_angle: AxisAngle::wrapped(Vec3::from(a), angle), ..StepResult::identity() };
        let p = Vec3::from(pivot);
        let t = step_to_transform(&step, &p);
        prop_assert!((t.transform_point(&p) - p).norm() <= 1e-12 * (1.0 + p.norm()));
    }

    #[test]
    fn force_total_is_ordered_sum(seed in any::<u64>()) {
        let src = random_cloud(40, seed);
        let tgt = random_cloud(40, seed ^ 3);
        let mut r = rng(seed);
        let pairs = (0..40).map(|i| Correspondence { source: i, target: r.random_range(0..40), k: r.random_range(-1.0..1.0) }).collect();
        let f = compute_forces(src.positions(), tgt.positions(), &CorrespondenceSet { pairs }, 1e-9).unwrap();
        let mut sum = Vec3::zeros();
        for p in &f.per_point {
            sum += p;
        }
        prop_assert_eq!(f.total, sum);
    }

    #[test]
    fn accept_rate_stays_open(seed in any::<u64>(), beta in 0.5f64..0.99, energies in prop::collection::vec(0.0f64..10.0, 1..400)) {
        let mut state = AnnealState::new(beta, energies.len()).unwrap();
        let mut r = rng(seed);
        let (mut up, mut down) = (0i32, 0i32);
        let mut prev = 1.0;
        for e in energies {
            let before = state.temperature;
            asa_update(&mut state, e, prev, &mut r);
            prev = e;
            prop_assert!(state.accept_rate > 0.0 && state.accept_rate < 1.0);
            prop_assert!(state.temperature > 0.0);
            if state.temperature < before { up += 1 } else { down += 1 }
        }
        let expect = beta.powi(up - down);
        prop_assert!(rel_close(state.temperature, expect, 1e-9));
    }

    #[test]
    fn lam_rate_plateau_and_join(max in 20usize..100_000) {
        for k in 0..=max {
            let x = k as f64 / max as f64;
            if (0.15..0.65).contains(&x) {
                prop_assert_eq!(lam_rate(k, max), 0.44);
            }
            if k > 0 && ((k - 1) as f64 / max as f64) < 0.15 && x >= 0.15 {
                prop_assert!((lam_rate(k - 1, max) - lam_rate(k, max)).abs() <= 1e-3 + 0.56 * 560f64.ln() / (0.15 * max as f64) + 1e-12);
            }
            if max > 2000 { break; }
        }
    }

    #[test]
    fn round_trips_through_files(seed in any::<u64>(), n in 1usize..100) {
        let mut r = rng(seed);
        let pts: Vec<Vec3> = (0..n).map(|_| Vec3::new(r.random::<f64>() * 1e3 - 500.0, r.random::<f64>() * 1e-3, r.random::<f64>())).collect();
        let cloud = PointCloud::new(pts).unwrap();
        let binary = parse_cloud(&ply_bytes(&cloud, PlyFormat::BinaryLittleEndian)).unwrap();
        prop_assert_eq!(binary.positions(), cloud.positions());
        let ascii = parse_cloud(&ply_bytes(&cloud, PlyFormat::Ascii)).unwrap();
        prop_assert_eq!(ascii.positions(), cloud.positions());
        let xyz = parse_cloud(xyz_text(&cloud).as_bytes()).unwrap();
        prop_assert_eq!(xyz.positions(), cloud.positions());
    }

    #[test]
    fn clean_pair_ground_truth_is_exact(seed in any::<u64>(), angle in 0.0f64..180.0, translation in 0.0f64..2.0) {
        let cloud = random_cloud(200, seed);
        let spec = Perturbation { angle_max_deg: angle, translation, ..Perturbation::default() };
        let pair = synthesize_pair(&cloud, &spec, seed).unwrap();
        let moved = pair.ground_truth.transform_points(pair.source.positions());
        let err = moved.iter().zip(pair.target.positions()).map(|(a, b)| (a - b).norm_squared()).sum::<f64>() / 200.0;
        prop_assert!(err.sqrt() <= 1e-12 * 10.0);
        let again = synthesize_pair(&cloud, &spec, seed).unwrap();
        prop_assert_eq!(again.source.positions(), pair.source.positions());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn vg_invariant_with_reestimated_normals(t in motion(), seed in 0u64..1000) {
        let cloud = blob(2000, seed);
        let moved = t.apply(&cloud);
        let vg = |c: &PointCloud| {
            let g = build_graph(c, 10).unwrap();
            geometric_invariant(&estimate_normals_curvatures(c, 10).unwrap(), &g).unwrap()
        };
        let (a, b) = (vg(&cloud), vg(&moved));
        for (x, y) in a.iter().zip(&b) {
            prop_assert!(rel_close(*x, *y, 1e-5), "{x} vs {y}");
        }
    }

    #[test]
    fn registration_is_deterministic_and_folds_its_steps(seed in 0u64..1000) {
        let cloud = blob(1500, seed);
        let pair = synthesize_pair(&cloud, &Perturbation { angle_max_deg: 25.0, noise: 0.003, ..Perturbation::default() }, seed).unwrap();
        let cfg = Config { max_iterations: 40, rng_seed: seed, ..Config::default() };
        let src = preprocess(&pair.source, &cfg).unwrap();
        let tgt = preprocess(&pair.target, &cfg).unwrap();
        let a = register(&src.features, &tgt.features, &cfg).unwrap();
        let b = register(&src.features, &tgt.features, &cfg).unwrap();
        prop_assert_eq!(&a.trace, &b.trace);
        prop_assert_eq!(a.transform, b.transform);

        // Stepping the points one transform at a time lands where the
        // composite sends them.
        let mut pts = pair.source.positions().to_vec();
        for s in &a.steps {
            pts = s.transform_points(&pts);
        }
        let direct = a.transform.transform_points(pair.source.positions());
        let scale = pair.source.bbox_diagonal();
        for (p, q) in pts.iter().zip(&direct) {
            prop_assert!((p - q).norm() <= 1e-9 * scale);
        }
    }

    #[test]
    fn run_is_deterministic_and_rmsd_reproducible(seed in 0u64..1000) {
        let cloud = blob(1500, seed);
        let pair = synthesize_pair(&cloud, &Perturbation { angle_max_deg: 20.0, ..Perturbation::default() }, seed).unwrap();
        let cfg = Config { max_iterations: 30, ..Config::default() };
        let mut a = run(&pair.source, &pair.target, &cfg, Some(&pair.ground_truth)).unwrap();
        let mut b = run(&pair.source, &pair.target, &cfg, Some(&pair.ground_truth)).unwrap();
        a.runtime = 0.0;
        b.runtime = 0.0;
        prop_assert_eq!(&a, &b);

        let est = a.transform.transform_points(pair.source.positions());
        let truth = pair.ground_truth.transform_points(pair.source.positions());
        let independent = (est.iter().zip(&truth).map(|(p, q)| (p - q).norm_squared()).sum::<f64>() / est.len() as f64).sqrt();
        prop_assert!((independent - a.rmsd.unwrap()).abs() <= 1e-9);
        prop_assert!((rmsd_points(&a.transform, &pair.ground_truth, pair.source.positions()).unwrap() - independent).abs() <= 1e-9);
    }
}

#[test]
fn half_turn_keeps_x84_report_bitwise() {
    // (x, y, z) -> (-x, -y, z) is exact in floating point.
    let cloud = random_cloud(300, 11);
    let flipped = PointCloud::new(cloud.positions().iter().map(|p| Vec3::new(-p.x, -p.y, p.z)).collect()).unwrap();
    let ia = response_intensity(&cloud, &build_graph(&cloud, 10).unwrap()).unwrap();
    let ib = response_intensity(&flipped, &build_graph(&flipped, 10).unwrap()).unwrap();
    let a = x84_filter(&ia, 5.2, X84Rule::MedianCentered).unwrap();
    let b = x84_filter(&ib, 5.2, X84Rule::MedianCentered).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.threshold.to_bits(), b.threshold.to_bits());
}
