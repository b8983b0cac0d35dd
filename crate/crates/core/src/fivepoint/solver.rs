//! Minimal five-point solver for the essential matrix.
//!
//! The five epipolar equations leave a four-dimensional null space
//! `E = x·E₁ + y·E₂ + z·E₃ + E₄`. The rank and trace constraints give ten cubic
//! equations in `(x, y, z)`; after Gauss-Jordan elimination three pairs of
//! rows combine into a 3×3 matrix whose entries are polynomials in `z`, and its
//! determinant is a degree-10 polynomial whose real roots yield the candidates.

use nalgebra::{Matrix3, SMatrix, Vector3, SVD};

use super::poly;
use crate::error::{Error, Result};
use crate::geometry::{epipolar_residual, Correspondence, EssentialMatrix};

/// Null-space conditioning threshold: σ₅/σ₁ of the 5×9 design matrix.
pub const NULL_SPACE_RATIO: f64 = 1e-6;
/// Each returned candidate must fit all five inputs to this residual.
pub const CANDIDATE_RESIDUAL_TOL: f64 = 1e-6;
/// Each returned candidate must satisfy the essential-matrix constraints to this level.
pub const CANDIDATE_CONSTRAINT_TOL: f64 = 1e-6;

/// Real solutions of a minimal problem (at most ten).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CandidateSet(pub Vec<EssentialMatrix>);

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &EssentialMatrix> {
        self.0.iter()
    }
}

// Dense trivariate polynomial of total degree ≤ 3, indexed [x][y][z] by exponent.
type Cubic = [[[f64; 4]; 4]; 4];

fn cubic_zero() -> Cubic {
    [[[0.0; 4]; 4]; 4]
}

fn cubic_mul(a: &Cubic, b: &Cubic) -> Cubic {
    let mut out = cubic_zero();
    for (ai, ax) in a.iter().enumerate() {
        for (aj, ay) in ax.iter().enumerate() {
            for (ak, &av) in ay.iter().enumerate() {
                if av == 0.0 {
                    continue;
                }
                for (bi, bx) in b.iter().enumerate() {
                    for (bj, by) in bx.iter().enumerate() {
                        for (bk, &bv) in by.iter().enumerate() {
                            if bv == 0.0 {
                                continue;
                            }
                            let (i, j, k) = (ai + bi, aj + bj, ak + bk);
                            debug_assert!(i + j + k <= 3, "degree overflow");
                            if i + j + k <= 3 {
                                out[i][j][k] += av * bv;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn cubic_axpy(out: &mut Cubic, s: f64, a: &Cubic) {
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                out[i][j][k] += s * a[i][j][k];
            }
        }
    }
}

/// Column order of the 10×20 constraint matrix; the first ten are eliminated.
const MONOMIALS: [(usize, usize, usize); 20] = [
    (3, 0, 0), // x³
    (0, 3, 0), // y³
    (2, 1, 0), // x²y
    (1, 2, 0), // xy²
    (2, 0, 1), // x²z
    (2, 0, 0), // x²
    (0, 2, 1), // y²z
    (0, 2, 0), // y²
    (1, 1, 1), // xyz
    (1, 1, 0), // xy
    (1, 0, 2), // xz²
    (1, 0, 1), // xz
    (1, 0, 0), // x
    (0, 1, 2), // yz²
    (0, 1, 1), // yz
    (0, 1, 0), // y
    (0, 0, 3), // z³
    (0, 0, 2), // z²
    (0, 0, 1), // z
    (0, 0, 0), // 1
];

/// Four null-space basis matrices of the epipolar design matrix.
fn null_space_basis(cs: &[Correspondence; 5]) -> Result<[Matrix3<f64>; 4]> {
    let mut a = SMatrix::<f64, 9, 9>::zeros();
    for (r, c) in cs.iter().enumerate() {
        let p = c.target.homogeneous();
        let q = c.source.homogeneous();
        for i in 0..3 {
            for j in 0..3 {
                a[(r, 3 * i + j)] = q[i] * p[j];
            }
        }
    }
    let svd = SVD::new(a, false, true);
    let vt = svd.v_t.ok_or(Error::DegenerateConfiguration)?;
    let mut order: Vec<usize> = (0..9).collect();
    order.sort_by(|&i, &j| {
        svd.singular_values[j]
            .partial_cmp(&svd.singular_values[i])
            .unwrap()
    });
    let s1 = svd.singular_values[order[0]];
    let s5 = svd.singular_values[order[4]];
    if !(s1 > 0.0) || s5 / s1 < NULL_SPACE_RATIO {
        return Err(Error::DegenerateConfiguration);
    }
    let mut basis = [Matrix3::zeros(); 4];
    for (b, &idx) in basis.iter_mut().zip(order[5..].iter()) {
        let row = vt.row(idx);
        *b = Matrix3::from_row_slice(&row.iter().copied().collect::<Vec<_>>());
    }
    Ok(basis)
}

/// 10×20 coefficient matrix of `det E = 0` and `2EEᵀE − tr(EEᵀ)E = 0`.
fn constraint_matrix(basis: &[Matrix3<f64>; 4]) -> [[f64; 20]; 10] {
    let mut e: [[Cubic; 3]; 3] = [[cubic_zero(); 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            e[r][c][1][0][0] = basis[0][(r, c)];
            e[r][c][0][1][0] = basis[1][(r, c)];
            e[r][c][0][0][1] = basis[2][(r, c)];
            e[r][c][0][0][0] = basis[3][(r, c)];
        }
    }

    let minor = |r0: usize, r1: usize, c0: usize, c1: usize| {
        let mut m = cubic_mul(&e[r0][c0], &e[r1][c1]);
        cubic_axpy(&mut m, -1.0, &cubic_mul(&e[r0][c1], &e[r1][c0]));
        m
    };
    let mut det = cubic_mul(&e[0][0], &minor(1, 2, 1, 2));
    cubic_axpy(&mut det, -1.0, &cubic_mul(&e[0][1], &minor(1, 2, 0, 2)));
    cubic_axpy(&mut det, 1.0, &cubic_mul(&e[0][2], &minor(1, 2, 0, 1)));

    let mut eet: [[Cubic; 3]; 3] = [[cubic_zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                cubic_axpy(&mut eet[i][j], 1.0, &cubic_mul(&e[i][k], &e[j][k]));
            }
        }
    }
    let mut trace = cubic_zero();
    for (i, row) in eet.iter().enumerate() {
        cubic_axpy(&mut trace, 1.0, &row[i]);
    }

    let mut rows = [[0.0; 20]; 10];
    let extract = |p: &Cubic| {
        let mut row = [0.0; 20];
        for (slot, &(a, b, c)) in row.iter_mut().zip(MONOMIALS.iter()) {
            *slot = p[a][b][c];
        }
        row
    };
    rows[0] = extract(&det);
    for i in 0..3 {
        for j in 0..3 {
            let mut p = cubic_zero();
            for k in 0..3 {
                cubic_axpy(&mut p, 2.0, &cubic_mul(&eet[i][k], &e[k][j]));
            }
            cubic_axpy(&mut p, -1.0, &cubic_mul(&trace, &e[i][j]));
            rows[1 + 3 * i + j] = extract(&p);
        }
    }
    rows
}

/// Gauss-Jordan elimination with partial pivoting on the leading 10×10 block.
fn gauss_jordan(m: &mut [[f64; 20]; 10]) -> Result<()> {
    let scale = m
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |a, v| a.max(v.abs()));
    if !(scale > 0.0) {
        return Err(Error::DegenerateConfiguration);
    }
    for col in 0..10 {
        let pivot = (col..10)
            .max_by(|&a, &b| m[a][col].abs().partial_cmp(&m[b][col].abs()).unwrap())
            .unwrap();
        if m[pivot][col].abs() < 1e-13 * scale {
            return Err(Error::DegenerateConfiguration);
        }
        m.swap(col, pivot);
        let inv = 1.0 / m[col][col];
        for v in m[col].iter_mut() {
            *v *= inv;
        }
        let pivot_row = m[col];
        for (r, row) in m.iter_mut().enumerate() {
            if r == col {
                continue;
            }
            let f = row[col];
            if f != 0.0 {
                for (v, p) in row.iter_mut().zip(pivot_row.iter()) {
                    *v -= f * p;
                }
            }
        }
    }
    Ok(())
}

/// Row `r` of the reduced system as `(x-part, y-part, 1-part)` polynomials in z (ascending).
fn row_parts(m: &[[f64; 20]; 10], r: usize) -> [Vec<f64>; 3] {
    let b = &m[r][10..];
    [
        vec![b[2], b[1], b[0]],
        vec![b[5], b[4], b[3]],
        vec![b[9], b[8], b[7], b[6]],
    ]
}

fn times_z(p: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0];
    out.extend_from_slice(p);
    out
}

/// `row(with z) − z·row(without z)`: cancels the leading monomial pair.
fn combine(m: &[[f64; 20]; 10], with_z: usize, without_z: usize) -> [Vec<f64>; 3] {
    let a = row_parts(m, with_z);
    let b = row_parts(m, without_z);
    [
        poly::sub(&a[0], &times_z(&b[0])),
        poly::sub(&a[1], &times_z(&b[1])),
        poly::sub(&a[2], &times_z(&b[2])),
    ]
}

fn det3_poly(b: &[[Vec<f64>; 3]; 3]) -> Vec<f64> {
    let m = |r0: usize, r1: usize, c0: usize, c1: usize| {
        poly::sub(
            &poly::mul(&b[r0][c0], &b[r1][c1]),
            &poly::mul(&b[r0][c1], &b[r1][c0]),
        )
    };
    let t0 = poly::mul(&b[0][0], &m(1, 2, 1, 2));
    let t1 = poly::mul(&b[0][1], &m(1, 2, 0, 2));
    let t2 = poly::mul(&b[0][2], &m(1, 2, 0, 1));
    poly::add(&poly::sub(&t0, &t1), &t2)
}

/// Values and (x, y, z)-gradients of the 20 monomials at a point.
fn monomials_with_gradient(v: [f64; 3]) -> ([f64; 20], [[f64; 3]; 20]) {
    let pow = |b: f64, e: usize| if e == 0 { 1.0 } else { b.powi(e as i32) };
    let mut val = [0.0; 20];
    let mut grad = [[0.0; 3]; 20];
    for (k, &(a, b, c)) in MONOMIALS.iter().enumerate() {
        let exps = [a, b, c];
        val[k] = pow(v[0], a) * pow(v[1], b) * pow(v[2], c);
        for d in 0..3 {
            if exps[d] == 0 {
                continue;
            }
            let mut g = exps[d] as f64;
            for (o, &e) in exps.iter().enumerate() {
                g *= if o == d { pow(v[o], e - 1) } else { pow(v[o], e) };
            }
            grad[k][d] = g;
        }
    }
    (val, grad)
}

fn constraint_residual(m: &[[f64; 20]; 10], v: [f64; 3]) -> (f64, [f64; 10], [[f64; 3]; 10]) {
    let (val, grad) = monomials_with_gradient(v);
    let mut f = [0.0; 10];
    let mut j = [[0.0; 3]; 10];
    for r in 0..10 {
        for k in 0..20 {
            f[r] += m[r][k] * val[k];
            for d in 0..3 {
                j[r][d] += m[r][k] * grad[k][d];
            }
        }
    }
    (f.iter().map(|x| x * x).sum(), f, j)
}

/// Gauss-Newton polishing of a root on the full (unreduced) cubic system;
/// a step is kept only when it lowers the residual.
fn refine(m: &[[f64; 20]; 10], mut v: [f64; 3]) -> (f64, f64, f64) {
    let (mut cost, mut f, mut j) = constraint_residual(m, v);
    for _ in 0..6 {
        let mut jtj = Matrix3::<f64>::zeros();
        let mut jtf = Vector3::<f64>::zeros();
        for r in 0..10 {
            for a in 0..3 {
                jtf[a] += j[r][a] * f[r];
                for b in 0..3 {
                    jtj[(a, b)] += j[r][a] * j[r][b];
                }
            }
        }
        let Some(step) = jtj.try_inverse().map(|inv| inv * jtf) else {
            break;
        };
        let next = [v[0] - step[0], v[1] - step[1], v[2] - step[2]];
        let (c2, f2, j2) = constraint_residual(m, next);
        if !(c2 < cost) {
            break;
        }
        v = next;
        cost = c2;
        f = f2;
        j = j2;
    }
    (v[0], v[1], v[2])
}

fn poly_norm(p: &[f64]) -> f64 {
    p.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

/// Solves the minimal relative-pose problem from five calibrated correspondences.
///
/// Returns every real solution that fits all five inputs; an empty set means
/// the polynomial had no admissible real root.
pub fn five_point(cs: &[Correspondence; 5]) -> Result<CandidateSet> {
    let basis = null_space_basis(cs)?;
    let constraints = constraint_matrix(&basis);
    let mut m = constraints;
    gauss_jordan(&mut m)?;

    // leading monomials: 4 = x²z, 5 = x², 6 = y²z, 7 = y², 8 = xyz, 9 = xy
    let b = [combine(&m, 4, 5), combine(&m, 6, 7), combine(&m, 8, 9)];
    let det = det3_poly(&b);

    if poly_norm(&det) == 0.0 {
        return Err(Error::DegenerateConfiguration);
    }

    let mut out = Vec::new();
    for z in poly::real_roots(&det) {
        let rows: Vec<Vector3<f64>> = b
            .iter()
            .map(|row| {
                Vector3::new(
                    poly::eval(&row[0], z),
                    poly::eval(&row[1], z),
                    poly::eval(&row[2], z),
                )
            })
            .collect();
        let crosses = [
            rows[0].cross(&rows[1]),
            rows[0].cross(&rows[2]),
            rows[1].cross(&rows[2]),
        ];
        let v = crosses
            .iter()
            .max_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap())
            .unwrap();
        if v.z.abs() < 1e-14 * v.norm() || !v.iter().all(|c| c.is_finite()) {
            continue;
        }
        let (x, y, z) = refine(&constraints, [v.x / v.z, v.y / v.z, z]);
        let e = basis[0] * x + basis[1] * y + basis[2] * z + basis[3];
        let Ok(e) = EssentialMatrix::from_matrix(e) else {
            continue;
        };
        if e.constraint_violation() > CANDIDATE_CONSTRAINT_TOL {
            continue;
        }
        if cs.iter().any(|c| epipolar_residual(c, &e) > CANDIDATE_RESIDUAL_TOL) {
            continue;
        }
        out.push(e);
    }
    out.truncate(10);
    Ok(CandidateSet(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{essential_from_pose, NormalizedCoord, Pose};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn exact_five(pose: &Pose, rng: &mut ChaCha8Rng) -> [Correspondence; 5] {
        let mut out = Vec::new();
        while out.len() < 5 {
            let x = Vector3::new(
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(4.0..12.0),
            );
            let xs = pose.transform_point(&x);
            if xs.z < 0.5 {
                continue;
            }
            out.push(
                Correspondence::new(
                    NormalizedCoord::from_ray(&x).unwrap(),
                    NormalizedCoord::from_ray(&xs).unwrap(),
                )
                .unwrap(),
            );
        }
        out.try_into().unwrap()
    }

    fn best_distance(set: &CandidateSet, truth: &EssentialMatrix) -> f64 {
        set.iter().map(|e| e.distance(truth)).fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn sideways_translation() {
        let pose = Pose::from_axis_angle(Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0));
        let truth = essential_from_pose(&pose).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let set = five_point(&exact_five(&pose, &mut rng)).unwrap();
            assert!(set.len() <= 10);
            assert!(best_distance(&set, &truth) < 1e-6);
        }
    }

    #[test]
    fn sideways_with_yaw() {
        let pose = Pose::from_axis_angle(
            Vector3::new(0.0, 10f64.to_radians(), 0.0),
            Vector3::new(1.0, 0.0, 0.0),
        );
        let truth = essential_from_pose(&pose).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let set = five_point(&exact_five(&pose, &mut rng)).unwrap();
            assert!(best_distance(&set, &truth) < 1e-6);
        }
    }

    #[test]
    fn candidates_satisfy_invariants() {
        let pose = Pose::from_axis_angle(Vector3::new(0.1, -0.2, 0.05), Vector3::new(0.2, 0.3, 1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cs = exact_five(&pose, &mut rng);
        let set = five_point(&cs).unwrap();
        assert!(!set.is_empty());
        for e in set.iter() {
            assert!(e.constraint_violation() < 1e-6);
            assert!((e.matrix().norm() - 1.0).abs() < 1e-12);
            for c in &cs {
                assert!(epipolar_residual(c, e) < 1e-6);
            }
        }
    }

    #[test]
    fn repeated_points_are_degenerate() {
        let pose = Pose::from_axis_angle(Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut cs = exact_five(&pose, &mut rng);
        cs[3] = cs[1];
        assert_eq!(five_point(&cs), Err(Error::DegenerateConfiguration));
    }
}
