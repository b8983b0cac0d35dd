mod common;

use epivo::field::ScalarField;
use epivo::fivepoint::{decompose_essential, five_point, ransac_essential, sampson_error};
use epivo::geometry::{
    epipolar_residual, essential_from_pose, so3_exp, so3_log, Correspondence, PixelCoord, Pose, PoseTangent,
};
use epivo::losses::{normalize_inverse_depth, smoothness_loss, total_loss, LossConfig};
use epivo::synth::{presets, render_pair};
use epivo::warp::{bilinear_sample, project_pixel};
use nalgebra::Vector3;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn vec3(r: f64) -> impl Strategy<Value = Vector3<f64>> {
    (-r..r, -r..r, -r..r).prop_map(|(a, b, c)| Vector3::new(a, b, c))
}

fn pose_strategy() -> impl Strategy<Value = Pose> {
    (vec3(1.0), vec3(2.0)).prop_map(|(w, t)| Pose::from_axis_angle(w, t))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn so3_log_inverts_exp(w in vec3(1.5)) {
        prop_assert!((so3_log(&so3_exp(&w)) - w).norm() < 1e-9);
    }

    #[test]
    fn se3_log_inverts_exp(w in vec3(1.5), v in vec3(3.0)) {
        let xi = PoseTangent::from_parts(w, v);
        let back = Pose::exp(&xi).log();
        for i in 0..6 {
            prop_assert!((back.0[i] - xi.0[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn compose_with_inverse_is_identity(p in pose_strategy()) {
        let id = p.compose(&p.inverse());
        prop_assert!(id.rotation_angle() < 1e-12);
        prop_assert!(id.translation.norm() < 1e-12);
    }

    #[test]
    fn essential_from_pose_annihilates_true_correspondences(p in pose_strategy(), seed in 0u64..1000) {
        prop_assume!(p.translation.norm() > 0.1);
        let e = essential_from_pose(&p).unwrap();
        let [s0, s1, s2] = e.singular_values();
        prop_assert!((s0 - s1).abs() < 1e-12 && s2 < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for c in common::random_correspondences(&p, 10, &mut rng) {
            prop_assert!(epipolar_residual(&c, &e).abs() < 1e-12);
            prop_assert!(sampson_error(&e, &c) < 1e-20);
        }
    }

    #[test]
    fn five_point_set_contains_truth_and_decomposes(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pose = common::random_pose(&mut rng);
        let truth = essential_from_pose(&pose).unwrap();
        let cs = common::random_correspondences(&pose, 5, &mut rng);
        let arr: [Correspondence; 5] = cs.clone().try_into().unwrap();
        let set = five_point(&arr).unwrap();
        prop_assert!(set.len() <= 10);
        for e in set.iter() {
            prop_assert!(e.constraint_violation() < 1e-8);
            for c in &cs {
                prop_assert!(epipolar_residual(c, e).abs() < 1e-8);
            }
        }
        let best = set.iter().min_by(|a, b| a.distance(&truth).total_cmp(&b.distance(&truth))).unwrap();
        prop_assert!(best.distance(&truth) < 1e-6);
        let h = decompose_essential(best, &cs).unwrap();
        prop_assert_eq!(h.cheirality_votes, 5);
        prop_assert!(h.pose.rotation_distance(&pose) < 1e-6);
    }

    #[test]
    fn ransac_is_deterministic_per_seed(seed in 0u64..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pose = common::random_pose(&mut rng);
        let mut cs = common::random_correspondences(&pose, 30, &mut rng);
        cs.extend((0..10).map(|_| common::random_outlier(&mut rng)));
        let a = ransac_essential(&cs, 1e-6, 200, seed).unwrap();
        let b = ransac_essential(&cs, 1e-6, 200, seed).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn bilinear_reproduces_grid_values(vals in prop::collection::vec(0.0f64..1.0, 20), x in 0usize..5, y in 0usize..4) {
        let img = ScalarField::new(5, 4, 1, vals).unwrap();
        let s = bilinear_sample(&img, PixelCoord::new(x as f64, y as f64));
        prop_assert!(s.in_bounds);
        prop_assert_eq!(s.values[0].to_bits(), img.get(x, y, 0).to_bits());
    }

    #[test]
    fn projection_roundtrips_through_inverse_pose(p in pose_strategy(), x in 0.0f64..63.0, y in 0.0f64..63.0, d in 1.0f64..20.0) {
        let k = epivo::synth::SceneSpec::default_intrinsics(64, 64);
        let fwd = project_pixel(PixelCoord::new(x, y), d, &k, &p);
        prop_assume!(fwd.in_front());
        let back = project_pixel(fwd.pixel, fwd.z_source, &k, &p.inverse());
        prop_assert!((back.pixel.x - x).abs() < 1e-8 && (back.pixel.y - y).abs() < 1e-8);
        prop_assert!((back.z_source - d).abs() < 1e-9 * d);
    }

    #[test]
    fn normalized_inverse_depth_has_unit_mean_and_is_scale_free(vals in prop::collection::vec(0.01f64..10.0, 36), s in 0.01f64..100.0) {
        let d = ScalarField::new(6, 6, 1, vals).unwrap();
        let n = normalize_inverse_depth(&d).unwrap();
        let mean = n.data().iter().sum::<f64>() / 36.0;
        prop_assert!((mean - 1.0).abs() < 1e-12);
        let ns = normalize_inverse_depth(&d.map(|v| v * s)).unwrap();
        for (a, b) in n.data().iter().zip(ns.data()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn smoothness_is_nonnegative_and_zero_for_constant_depth(vals in prop::collection::vec(0.0f64..1.0, 36), c in 0.1f64..5.0) {
        let img = ScalarField::new(6, 6, 1, vals.clone()).unwrap();
        let d = ScalarField::new(6, 6, 1, vals.iter().map(|v| v + 0.5).collect()).unwrap();
        prop_assert!(smoothness_loss(&d, &img).unwrap() >= 0.0);
        prop_assert_eq!(smoothness_loss(&ScalarField::filled(6, 6, 1, c), &img).unwrap(), 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Weighted warp loss never undercuts the plain one: every weight is ≥ 1.
    #[test]
    fn epipolar_weight_only_increases_warp_loss(seed in 0u64..50, w in vec3(0.05), t in vec3(0.3)) {
        let spec = presets::smooth_random(32, seed);
        let pair = render_pair(&spec).unwrap();
        let gt = pair.normalized_pose();
        let e = pair.essential.unwrap();
        let pose = gt.retract_left(&PoseTangent::from_parts(w, t));
        let plain = total_loss(&pair.target, &pair.source, &pair.inv_depth, &pose, &spec.intrinsics, &LossConfig::default()).unwrap();
        let cfg = LossConfig::default().with_epipolar(e);
        let weighted = total_loss(&pair.target, &pair.source, &pair.inv_depth, &pose, &spec.intrinsics, &cfg).unwrap();
        for (a, b) in weighted.warp_loss.iter().zip(&plain.warp_loss) {
            prop_assert!(a >= b);
        }
        prop_assert_eq!(weighted.smooth_loss, plain.smooth_loss);
    }
}
