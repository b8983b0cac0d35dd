//! Acceptance suite: one PASS/FAIL line per criterion; exits non-zero if any fail.

mod common;

use std::time::{Duration, Instant};

use epivo::eval::{ate, atde, depth_metrics, TrajectorySnippet};
use epivo::field::{ScalarField, ValidityMask};
use epivo::fivepoint::{decompose_essential, five_point, ransac_essential};
use epivo::geometry::{essential_from_pose, Correspondence, Pose};
use epivo::losses::{
    epipolar_weight_map, epipolar_weight_map_from_flow, lambda_smooth, photometric_loss, LossConfig, PreparedPair,
    DEFAULT_LAMBDA_SMOOTH,
};
use epivo::optim::{gradcheck, optimize_direct, random_configuration, AdamConfig, GradcheckConfig, OptimizeOptions};
use epivo::synth::{presets, render_pair, sample_correspondences};
use epivo::warp::warp_image;
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

struct Outcome {
    pass: bool,
    detail: String,
}

type Criterion = (&'static str, fn() -> Outcome);

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn c1_warp_identity() -> Outcome {
    let spec = presets::smooth_random(128, 1);
    let pair = render_pair(&spec).unwrap();
    let t0 = Instant::now();
    let (out, mask) = warp_image(&pair.target, &pair.depth, &spec.intrinsics, &Pose::identity()).unwrap();
    let dt = t0.elapsed();
    let exact = out.data().iter().zip(pair.target.data()).all(|(a, b)| a.to_bits() == b.to_bits());
    let all_valid = mask.count() == 128 * 128;
    outcome(
        exact && all_valid && dt < Duration::from_secs(1),
        format!("bit-exact {exact}, all valid {all_valid}, {:.4} s at 128x128", secs(dt)),
    )
}

fn mean_residual(size: usize, seed: u64) -> f64 {
    let spec = presets::plane_pair(size, seed);
    let pair = render_pair(&spec).unwrap();
    let (warped, mask) = warp_image(&pair.source, &pair.depth, &spec.intrinsics, &spec.pose).unwrap();
    photometric_loss(&pair.target, &warped, &mask).unwrap().value
}

fn c2_warp_oracle() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for seed in 0..5 {
        let r64 = mean_residual(64, seed);
        let r128 = mean_residual(128, seed);
        let ratio = r128 / r64;
        ok &= r64 < 2e-3 && (0.4..=0.6).contains(&ratio);
        parts.push(format!("{r64:.2e}→{ratio:.3}"));
    }
    outcome(ok, format!("residual@64→ratio 128/64 per seed: {}", parts.join(", ")))
}

fn c3_five_point() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let t0 = Instant::now();
    let trials = 1000;
    let mut ok = 0;
    for _ in 0..trials {
        let pose = random_pose(&mut rng);
        let truth = essential_from_pose(&pose).unwrap();
        let cs = random_correspondences(&pose, 5, &mut rng);
        let arr: [Correspondence; 5] = cs.clone().try_into().unwrap();
        let Ok(set) = five_point(&arr) else { continue };
        let Some(best) = set.iter().min_by(|a, b| a.distance(&truth).total_cmp(&b.distance(&truth))) else {
            continue;
        };
        if best.distance(&truth) >= 1e-6 {
            continue;
        }
        let Ok(h) = decompose_essential(best, &cs) else { continue };
        if atde(&h.pose.translation, &pose.translation).is_ok_and(|a| a < 1e-6) {
            ok += 1;
        }
    }
    let dt = t0.elapsed();
    outcome(
        ok * 100 >= trials * 99 && dt < Duration::from_secs(60),
        format!("{ok}/{trials} recovered, {:.2} s", secs(dt)),
    )
}

fn c4_ransac() -> Outcome {
    let mut good_seeds = 0;
    let mut parts = Vec::new();
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let pose = random_pose(&mut rng);
        let mut cs = random_correspondences(&pose, 80, &mut rng);
        cs.extend((0..20).map(|_| random_outlier(&mut rng)));
        let Ok(r) = ransac_essential(&cs, 1e-6, 500, seed) else {
            parts.push("err".to_string());
            continue;
        };
        let true_in = r.inlier_mask[..80].iter().filter(|&&m| m).count();
        let false_in = r.inlier_mask[80..].iter().filter(|&&m| m).count();
        if true_in >= 78 && false_in <= 2 {
            good_seeds += 1;
        }
        parts.push(format!("{true_in}/{false_in}"));
    }
    outcome(good_seeds >= 18, format!("{good_seeds}/20 seeds good (true/false inliers: {})", parts.join(" ")))
}

fn c5_gradcheck() -> Outcome {
    let t0 = Instant::now();
    let gc = GradcheckConfig::default();
    let mut failures = 0;
    let mut worst = 0.0f64;
    for seed in 0..50 {
        let (pair, inv, pose, cfg) = random_configuration(seed, 64).unwrap();
        let prepared = PreparedPair::new(&pair.target, &pair.source, &pair.spec.intrinsics, cfg.num_scales).unwrap();
        let report = gradcheck(&prepared, &inv, &pose, &cfg, &gc, seed).unwrap();
        worst = worst.max(report.max_rel_error());
        failures += usize::from(!report.passed());
    }
    let dt = t0.elapsed();
    outcome(
        failures == 0 && worst < 1e-4 && dt < Duration::from_secs(120),
        format!("50 configs, {failures} failing, worst rel error {worst:.2e}, {:.1} s", secs(dt)),
    )
}

fn c6_constants() -> Outcome {
    let lambdas: Vec<f64> = (0..4).map(|l| lambda_smooth(DEFAULT_LAMBDA_SMOOTH, l)).collect();
    let lam_ok = lambdas == [0.2, 0.1, 0.05, 0.025] && (0..4).all(|l| LossConfig::default().lambda_smooth(l) == lambdas[l]);
    let adam = AdamConfig::default();
    let adam_ok = adam.beta1 == 0.9 && adam.beta2 == 0.999;
    let mut dev = 0.0f64;
    for seed in 0..3 {
        let spec = presets::plane_pair(64, seed);
        let pair = render_pair(&spec).unwrap();
        let e = essential_from_pose(&spec.pose).unwrap();
        let w = epipolar_weight_map(&pair.depth, &spec.intrinsics, &spec.pose, &e);
        dev = w.data().iter().map(|v| (v - 1.0).abs()).fold(dev, f64::max);
    }
    outcome(
        lam_ok && adam_ok && dev < 1e-6,
        format!("λ = {lambdas:?}, β = ({}, {}), max |w−1| = {dev:.2e}", adam.beta1, adam.beta2),
    )
}

fn c7_direct() -> Outcome {
    let t0 = Instant::now();
    let seed = 0;
    let spec = presets::optimization_pair(64, seed);
    let pair = render_pair(&spec).unwrap();
    let gt = pair.normalized_pose();
    let init = perturb_pose(&gt, seed);
    let opts = OptimizeOptions {
        iters: 500,
        adam: AdamConfig {
            learning_rate: 1e-3,
            ..Default::default()
        },
        optimize_pose: true,
        optimize_depth: false,
    };
    let res = optimize_direct(&pair.target, &pair.source, &pair.inv_depth, &init, &spec.intrinsics, &LossConfig::default(), &opts)
        .unwrap();
    let a = atde(&res.pose.translation, &gt.translation).unwrap();
    let r = res.pose.rotation_distance(&gt).to_degrees();
    let dt = t0.elapsed();
    let a0 = atde(&init.translation, &gt.translation).unwrap();
    outcome(
        a < 0.01 && r < 0.2 && dt < Duration::from_secs(120),
        format!("ATDE {a:.2e} rad (init {a0:.2e}), rotation error {r:.4}°, {:.1} s", secs(dt)),
    )
}

fn pose_error(p: &Pose, gt: &Pose) -> f64 {
    atde(&p.translation, &gt.translation).unwrap() + p.rotation_distance(gt)
}

fn c8_epipolar_benefit() -> Outcome {
    let opts = OptimizeOptions {
        iters: 500,
        adam: AdamConfig {
            learning_rate: 1e-3,
            ..Default::default()
        },
        optimize_pose: true,
        optimize_depth: false,
    };
    let mut on = Vec::new();
    let mut off = Vec::new();
    for seed in 0..10 {
        let spec = presets::repeated_texture(64, seed);
        let pair = render_pair(&spec).unwrap();
        let gt = pair.normalized_pose();
        let init = perturb_pose(&gt, seed);
        let samples = sample_correspondences(&pair, 200, 1e-4, 0.0, seed).unwrap();
        let e = ransac_essential(&samples.correspondences, 1e-6, 1000, seed).unwrap().best;
        for (cfg, sink) in [
            (LossConfig::default(), &mut off),
            (LossConfig::default().with_epipolar(e), &mut on),
        ] {
            let res = optimize_direct(&pair.target, &pair.source, &pair.inv_depth, &init, &spec.intrinsics, &cfg, &opts).unwrap();
            sink.push(pose_error(&res.pose, &gt));
        }
    }
    let (m_on, m_off) = (median(on), median(off));
    outcome(
        m_on < m_off,
        format!("median pose error (ATDE + rotation, rad): weighted {m_on:.4}, unweighted {m_off:.4}"),
    )
}

fn c9_mover() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (seed, shift) in (0..5u64).zip([0.05, 0.06, 0.08, 0.1, 0.15]) {
        let spec = presets::mover_scene(64, seed, shift);
        let pair = render_pair(&spec).unwrap();
        let e = pair.essential.expect("scene has a baseline");
        let w = epipolar_weight_map_from_flow(&pair.correspondences, &pair.correspondence_valid, &spec.intrinsics, &e).unwrap();
        let (mut inside, mut outside) = (Vec::new(), Vec::new());
        for y in 0..spec.height {
            for x in 0..spec.width {
                if !pair.correspondence_valid.get(x, y) {
                    continue;
                }
                let v = w.get(x, y, 0);
                if pair.mover_mask.get(x, y) {
                    inside.push(v)
                } else {
                    outside.push(v)
                }
            }
        }
        let (mi, mo) = (median(inside), median(outside));
        ok &= mi > mo;
        parts.push(format!("shift {shift}: {mi:.4} vs {mo:.4}"));
    }
    outcome(ok, format!("median weight inside vs outside mover: {}", parts.join("; ")))
}

fn c10_metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (w, h) = (16, 12);
    let gt_v: Vec<f64> = (0..w * h).map(|_| rng.random_range(1.0..60.0)).collect();
    let pred_v: Vec<f64> = gt_v.iter().map(|g| g * rng.random_range(0.7..1.4)).collect();
    let gt = ScalarField::new(w, h, 1, gt_v).unwrap();
    let pred = ScalarField::new(w, h, 1, pred_v).unwrap();
    let mask = ValidityMask::all(w, h, true);
    let base = depth_metrics(&pred, &gt, &mask, 80.0).unwrap();
    let mut scale_drift = 0.0f64;
    for s in [1e-3, 0.37, 3.0, 250.0] {
        let m = depth_metrics(&pred.map(|v| v * s), &gt, &mask, 80.0).unwrap();
        for (a, b) in [
            (m.abs_rel, base.abs_rel),
            (m.sq_rel, base.sq_rel),
            (m.rmse, base.rmse),
            (m.rmse_log, base.rmse_log),
            (m.delta1, base.delta1),
            (m.delta2, base.delta2),
            (m.delta3, base.delta3),
        ] {
            scale_drift = scale_drift.max((a - b).abs());
        }
    }

    let poses_gt: Vec<Pose> = (0..3)
        .map(|i| Pose::from_axis_angle(Vector3::new(0.0, 0.01 * i as f64, 0.0), Vector3::new(0.1 * i as f64, 0.02, 0.8 * i as f64)))
        .collect();
    let poses_pred: Vec<Pose> = poses_gt
        .iter()
        .enumerate()
        .map(|(i, p)| Pose::from_axis_angle(Vector3::zeros(), Vector3::new(0.01 * i as f64, 0.0, 0.0)).compose(p))
        .collect();
    let gt_s = TrajectorySnippet::from_absolute(&poses_gt).unwrap();
    let pred_s = TrajectorySnippet::from_absolute(&poses_pred).unwrap();
    let ate0 = ate(&pred_s, &gt_s).unwrap();
    let mut ate_drift = 0.0f64;
    for s in [0.01, 0.5, 7.0] {
        let scaled: Vec<Pose> = pred_s.poses().iter().map(|p| p.with_translation_scaled(s)).collect();
        let a = ate(&TrajectorySnippet::new(scaled).unwrap(), &gt_s).unwrap();
        ate_drift = ate_drift.max((a - ate0).abs());
    }

    let t = Vector3::new(0.3, -1.2, 2.0);
    let par = atde(&(t * 3.5), &t).unwrap();
    let perp = atde(&Vector3::new(1.2, 0.3, 0.0), &t).unwrap();
    let atde_ok = par.abs() <= 1e-12 && (perp - std::f64::consts::FRAC_PI_2).abs() <= 1e-12;

    // gt [10,20,40,80], pred [12,18,50,60]: median scale 30/34; scaled errors
    // (10,−70,70,−460)/17
    let gt2 = ScalarField::new(2, 2, 1, vec![10.0, 20.0, 40.0, 80.0]).unwrap();
    let pr2 = ScalarField::new(2, 2, 1, vec![12.0, 18.0, 50.0, 60.0]).unwrap();
    let m = depth_metrics(&pr2, &gt2, &ValidityMask::all(2, 2, true), 80.0).unwrap();
    let log_sq: f64 = [18.0 / 17.0, 27.0 / 34.0, 75.0 / 68.0, 45.0 / 68.0].iter().map(|r: &f64| r.ln().powi(2)).sum();
    let hand = [
        (m.abs_rel, 3.0 / 17.0),
        (m.sq_rel, 3022.5 / 1156.0),
        (m.rmse, (221500.0f64 / 1156.0).sqrt()),
        (m.rmse_log, (log_sq / 4.0).sqrt()),
        (m.delta1, 0.5),
        (m.delta2, 1.0),
        (m.delta3, 1.0),
    ];
    let hand_err = hand.iter().map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    outcome(
        scale_drift <= 1e-12 && ate_drift <= 1e-12 && atde_ok && hand_err <= 1e-12,
        format!(
            "depth scale drift {scale_drift:.1e}, ATE drift {ate_drift:.1e}, ATDE ∥ {par:.1e} ⊥ {perp:.15}, 2x2 max err {hand_err:.1e}"
        ),
    )
}

fn c11_determinism() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let p = |s: &str| root.path().join(s).to_string_lossy().into_owned();
    std::fs::write(
        p("scene.txt"),
        "width = 32\nheight = 32\nintrinsics = 16 16 15.5 15.5\nrotation = 0.02 -0.03 0.01\n\
         translation = 1.0 -0.2 0.3\nseed = 5\nplane = 0.3 -0.45 1 4 smooth\n\
         mover = 0.3 0.2 3 0.4 edge 0 0 0 0 0.2 0\n",
    )
    .unwrap();
    assert_eq!(run_cli(&["synth", "--scene", &p("scene.txt"), "--out", &p("base"), "--noise", "1e-4"]), 0);
    let b = |f: &str| format!("{}/{f}", p("base"));
    let traj = format!("{}{}{}", "1 0 0 0 0 1 0 0 0 0 1 0\n", std::fs::read_to_string(b("pose.txt")).unwrap(),
        "1 0 0 0.9 0 1 0 -0.1 0 0 1 0.7\n");
    std::fs::write(p("traj.txt"), traj).unwrap();

    let commands: Vec<(&str, Vec<String>)> = vec![
        ("synth", vec!["--scene".into(), p("scene.txt"), "--noise".into(), "1e-4".into(), "--outliers".into(), "0.1".into(), "--seed".into(), "3".into()]),
        ("fivepoint", vec!["--corr".into(), b("correspondences.csv"), "--seed".into(), "7".into()]),
        (
            "optimize",
            vec![
                "--target".into(), b("target.pfm"), "--source".into(), b("source.pfm"),
                "--intrinsics".into(), b("intrinsics.txt"), "--flat-depth".into(), "4".into(),
                "--corr".into(), b("correspondences.csv"), "--gt-pose".into(), b("pose.txt"),
                "--iters".into(), "25".into(),
            ],
        ),
        (
            "eval",
            vec![
                "--pred-depth".into(), b("inv_depth.pfm"), "--gt-depth".into(), b("depth.pfm"),
                "--cap".into(), "80".into(), "--cap".into(), "5".into(),
                "--pred-poses".into(), p("traj.txt"), "--gt-poses".into(), p("traj.txt"),
            ],
        ),
        ("gradcheck", vec!["--configs".into(), "2".into(), "--size".into(), "24".into()]),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, args) in &commands {
        let mut runs = Vec::new();
        for rep in 0..2 {
            let out = p(&format!("{name}_{rep}"));
            let mut full: Vec<&str> = vec![name];
            full.extend(args.iter().map(String::as_str));
            full.extend(["--out", &out]);
            let code = run_cli(&full);
            runs.push((code, dir_contents(std::path::Path::new(&out))));
        }
        let same = runs[0] == runs[1] && runs[0].0 == 0 && !runs[0].1.is_empty();
        ok &= same;
        parts.push(format!("{name} {}", if same { "identical" } else { "DIFFERS" }));
    }
    outcome(ok, parts.join(", "))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("1 warp identity", c1_warp_identity),
        ("2 warp oracle", c2_warp_oracle),
        ("3 five-point recovery", c3_five_point),
        ("4 RANSAC robustness", c4_ransac),
        ("5 gradient checks", c5_gradcheck),
        ("6 loss constants", c6_constants),
        ("7 direct optimization", c7_direct),
        ("8 epipolar-weighting benefit", c8_epipolar_benefit),
        ("9 motion-mask property", c9_mover),
        ("10 metric invariances", c10_metrics),
        ("11 determinism", c11_determinism),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let o = f();
        println!("[{}] criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {}/11 passed", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
