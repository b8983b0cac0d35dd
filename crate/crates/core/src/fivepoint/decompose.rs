use nalgebra::{Matrix3, Vector3, SVD};

use crate::error::{Error, Result};
use crate::geometry::{Correspondence, EssentialMatrix, Pose};

/// A cheirality-resolved relative pose with unit-norm translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseHypothesis {
    pub pose: Pose,
    pub cheirality_votes: usize,
}

/// Midpoint of the common perpendicular between the target ray through `p̃`
/// and the source ray through `q̃`, expressed in the target frame. `None` when
/// the rays are (numerically) parallel.
pub fn triangulate_midpoint(pose: &Pose, c: &Correspondence) -> Option<Vector3<f64>> {
    let d1 = c.target.homogeneous();
    let rt = pose.rotation.transpose();
    let center = -(rt * pose.translation);
    let d2 = rt * c.source.homogeneous();
    let a = d1.dot(&d1);
    let b = d1.dot(&d2);
    let cc = d2.dot(&d2);
    let d = d1.dot(&center);
    let e = d2.dot(&center);
    let det = b * b - a * cc;
    if det.abs() < 1e-12 * a * cc {
        return None;
    }
    let lambda = (b * e - d * cc) / det;
    let mu = (a * e - b * d) / det;
    Some((d1 * lambda + center + d2 * mu) * 0.5)
}

fn cheirality_votes(pose: &Pose, cs: &[Correspondence]) -> usize {
    cs.iter()
        .filter(|c| match triangulate_midpoint(pose, c) {
            Some(x) => x.z > 0.0 && pose.transform_point(&x).z > 0.0,
            None => false,
        })
        .count()
}

/// The four `(R, ±t)` factorizations of `E`, in a fixed order.
pub fn factorizations(e: &EssentialMatrix) -> [Pose; 4] {
    let m = *e.canonical_sign().matrix();
    let svd = SVD::new(m, true, true);
    let mut u = svd.u.unwrap();
    let mut vt = svd.v_t.unwrap();
    // nalgebra does not guarantee ordering; move the smallest singular value last.
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| svd.singular_values[j].partial_cmp(&svd.singular_values[i]).unwrap());
    let u_sorted = Matrix3::from_columns(&[u.column(order[0]), u.column(order[1]), u.column(order[2])]);
    let vt_sorted = Matrix3::from_rows(&[vt.row(order[0]), vt.row(order[1]), vt.row(order[2])]);
    u = u_sorted;
    vt = vt_sorted;
    if u.determinant() < 0.0 {
        u = -u;
    }
    if vt.determinant() < 0.0 {
        vt = -vt;
    }
    let w = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let r1 = u * w * vt;
    let r2 = u * w.transpose() * vt;
    let t: Vector3<f64> = u.column(2).into_owned().normalize();
    [
        Pose { rotation: r1, translation: t },
        Pose { rotation: r1, translation: -t },
        Pose { rotation: r2, translation: t },
        Pose { rotation: r2, translation: -t },
    ]
}

/// Chooses the factorization that places the most triangulated points in
/// front of both cameras.
pub fn decompose_essential(e: &EssentialMatrix, cs: &[Correspondence]) -> Result<PoseHypothesis> {
    if cs.is_empty() {
        return Err(Error::InsufficientCorrespondences { needed: 1, got: 0 });
    }
    let mut scored: Vec<(usize, Pose)> = factorizations(e)
        .into_iter()
        .map(|p| (cheirality_votes(&p, cs), p))
        .collect();
    // stable: equal votes keep factorization order
    scored.sort_by_key(|s| std::cmp::Reverse(s.0));
    if scored[0].0 == scored[1].0 {
        return Err(Error::AmbiguousCheirality);
    }
    Ok(PoseHypothesis {
        pose: scored[0].1,
        cheirality_votes: scored[0].0,
    })
}
