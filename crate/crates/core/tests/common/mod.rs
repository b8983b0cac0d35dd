#![allow(dead_code)]

use epivo::geometry::{Correspondence, NormalizedCoord, Pose};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn unit_vector(rng: &mut impl Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Random pose with rotation up to ~0.5 rad and a unit-scale baseline.
pub fn random_pose(rng: &mut impl Rng) -> Pose {
    let w = Vector3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
    let t = unit_vector(rng) * rng.random_range(0.3..1.0);
    Pose::from_axis_angle(w, t)
}

/// Noise-free correspondences of random points in front of both cameras.
pub fn random_correspondences(pose: &Pose, n: usize, rng: &mut impl Rng) -> Vec<Correspondence> {
    let mut cs = Vec::with_capacity(n);
    while cs.len() < n {
        let x = Vector3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(4.0..12.0));
        let xs = pose.transform_point(&x);
        if xs.z < 0.5 {
            continue;
        }
        cs.push(
            Correspondence::new(NormalizedCoord::from_ray(&x).unwrap(), NormalizedCoord::from_ray(&xs).unwrap()).unwrap(),
        );
    }
    cs
}

/// Correspondence between two independent random points in the field of view.
pub fn random_outlier(rng: &mut impl Rng) -> Correspondence {
    let mut c = || NormalizedCoord::new(rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6));
    Correspondence::new(c(), c()).unwrap()
}

/// `gt` rotated by 2° about a random axis, translation moved by 10% of its
/// length in a random direction.
pub fn perturb_pose(gt: &Pose, seed: u64) -> Pose {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let axis = unit_vector(&mut rng);
    let dir = unit_vector(&mut rng);
    let r = epivo::geometry::so3_exp(&(axis * 2f64.to_radians())) * gt.rotation;
    Pose::new(r, gt.translation + dir * 0.1 * gt.translation.norm()).unwrap()
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// All files under `dir` with their bytes, sorted by name.
pub fn dir_contents(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

pub fn run_cli(args: &[&str]) -> i32 {
    epivo::cli::run_from(std::iter::once("epivo").chain(args.iter().copied()))
}
