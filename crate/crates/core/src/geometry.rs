//! Camera model, rigid transforms, essential-matrix algebra and epipolar residuals.
//!
//! Conventions used throughout the crate:
//!
//! * A [`Pose`] maps points from the *target* camera frame into the *source*
//!   camera frame: `X_s = R·X_t + t`.
//! * The essential matrix is `E = [t]ₓ·R`, so for a target point `p̃` the
//!   epipolar line in the source view is `E·p̃`, and every exact
//!   correspondence satisfies `q̃ᵀ·E·p̃ = 0`.
//! * Pixel centers sit at integer coordinates, `x` is the column and `y` the row.

use nalgebra::{Matrix3, Vector3, SVD};

use crate::error::{Error, Result};

/// Pinhole calibration `K = [[fx, 0, cx], [0, fy, cy], [0, 0, 1]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx.is_finite() && fy.is_finite() && cx.is_finite() && cy.is_finite()) {
            return Err(Error::InvalidIntrinsics("non-finite parameter".into()));
        }
        if fx <= 0.0 || fy <= 0.0 {
            return Err(Error::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx={fx}, fy={fy})"
            )));
        }
        Ok(Self { fx, fy, cx, cy })
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Closed-form inverse of the upper-triangular calibration matrix.
    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }

    pub fn normalize(&self, p: PixelCoord) -> NormalizedCoord {
        NormalizedCoord {
            x: (p.x - self.cx) / self.fx,
            y: (p.y - self.cy) / self.fy,
        }
    }

    pub fn denormalize(&self, q: NormalizedCoord) -> PixelCoord {
        PixelCoord {
            x: q.x * self.fx + self.cx,
            y: q.y * self.fy + self.cy,
        }
    }

    /// Intrinsics of pyramid level `level`, where each level is a 2×2 box
    /// average of the previous one. Pixel `i` of a coarse level covers fine
    /// pixels `2i` and `2i+1`, so its center sits at fine coordinate `2i + 0.5`.
    pub fn at_level(&self, level: u32) -> Self {
        let s = 0.5f64.powi(level as i32);
        Self {
            fx: self.fx * s,
            fy: self.fy * s,
            cx: (self.cx + 0.5) * s - 0.5,
            cy: (self.cy + 0.5) * s - 0.5,
        }
    }

    /// Same camera for an image resampled by `factor` (e.g. 2.0 for 64 → 128).
    pub fn rescaled(&self, factor: f64) -> Self {
        Self {
            fx: self.fx * factor,
            fy: self.fy * factor,
            cx: (self.cx + 0.5) * factor - 0.5,
            cy: (self.cy + 0.5) * factor - 0.5,
        }
    }
}

/// Continuous pixel coordinate; the homogeneous form is `(x, y, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelCoord {
    pub x: f64,
    pub y: f64,
}

impl PixelCoord {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn homogeneous(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, 1.0)
    }
}

/// Coordinate on the `z = 1` plane of a camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedCoord {
    pub x: f64,
    pub y: f64,
}

impl NormalizedCoord {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn homogeneous(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, 1.0)
    }

    /// Dehomogenizes a ray direction; `None` when the ray is parallel to the image plane.
    pub fn from_ray(v: &Vector3<f64>) -> Option<Self> {
        if v.z.abs() < 1e-300 || !v.iter().all(|c| c.is_finite()) {
            return None;
        }
        Some(Self {
            x: v.x / v.z,
            y: v.y / v.z,
        })
    }
}

/// A target/source pair of normalized coordinates believed to image the same 3D point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub target: NormalizedCoord,
    pub source: NormalizedCoord,
}

impl Correspondence {
    pub fn new(target: NormalizedCoord, source: NormalizedCoord) -> Result<Self> {
        let all = [target.x, target.y, source.x, source.y];
        if !all.iter().all(|v| v.is_finite()) {
            return Err(Error::Parse("correspondence coordinates must be finite".into()));
        }
        Ok(Self { target, source })
    }
}

pub fn normalize(p: PixelCoord, k: &CameraIntrinsics) -> NormalizedCoord {
    k.normalize(p)
}

pub fn denormalize(q: NormalizedCoord, k: &CameraIntrinsics) -> PixelCoord {
    k.denormalize(q)
}

/// Skew-symmetric cross-product matrix: `skew(a)·b = a × b`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rodrigues' formula with a Taylor expansion near zero.
pub fn so3_exp(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = omega.norm_squared();
    let k = skew(omega);
    let (a, b) = if theta2 < 1e-10 {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        let theta = theta2.sqrt();
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Matrix3::identity() + k * a + k * k * b
}

/// Rotation logarithm through the unit quaternion, which stays well conditioned
/// near angle π where the trace formula loses precision.
pub fn so3_log(r: &Matrix3<f64>) -> Vector3<f64> {
    let (w, v) = rotation_to_quaternion(r);
    let vn = v.norm();
    if vn < 1e-300 {
        return Vector3::zeros();
    }
    // w ≥ 0 after canonicalization, so the angle lies in [0, π].
    let angle = 2.0 * vn.atan2(w);
    if vn < 1e-8 {
        // angle/vn → 2/w as vn → 0
        v * (2.0 / w) * (1.0 + vn * vn / (3.0 * w * w))
    } else {
        v * (angle / vn)
    }
}

/// Shepperd's method; returns `(w, (x, y, z))` with `w ≥ 0`.
fn rotation_to_quaternion(r: &Matrix3<f64>) -> (f64, Vector3<f64>) {
    let tr = r.trace();
    let (w, x, y, z);
    if tr > r[(0, 0)] && tr > r[(1, 1)] && tr > r[(2, 2)] {
        let s = (1.0 + tr).sqrt() * 2.0;
        w = 0.25 * s;
        x = (r[(2, 1)] - r[(1, 2)]) / s;
        y = (r[(0, 2)] - r[(2, 0)]) / s;
        z = (r[(1, 0)] - r[(0, 1)]) / s;
    } else if r[(0, 0)] > r[(1, 1)] && r[(0, 0)] > r[(2, 2)] {
        let s = (1.0 + r[(0, 0)] - r[(1, 1)] - r[(2, 2)]).sqrt() * 2.0;
        w = (r[(2, 1)] - r[(1, 2)]) / s;
        x = 0.25 * s;
        y = (r[(0, 1)] + r[(1, 0)]) / s;
        z = (r[(0, 2)] + r[(2, 0)]) / s;
    } else if r[(1, 1)] > r[(2, 2)] {
        let s = (1.0 + r[(1, 1)] - r[(0, 0)] - r[(2, 2)]).sqrt() * 2.0;
        w = (r[(0, 2)] - r[(2, 0)]) / s;
        x = (r[(0, 1)] + r[(1, 0)]) / s;
        y = 0.25 * s;
        z = (r[(1, 2)] + r[(2, 1)]) / s;
    } else {
        let s = (1.0 + r[(2, 2)] - r[(0, 0)] - r[(1, 1)]).sqrt() * 2.0;
        w = (r[(1, 0)] - r[(0, 1)]) / s;
        x = (r[(0, 2)] + r[(2, 0)]) / s;
        y = (r[(1, 2)] + r[(2, 1)]) / s;
        z = 0.25 * s;
    }
    let n = (w * w + x * x + y * y + z * z).sqrt();
    let sign = if w < 0.0 { -1.0 } else { 1.0 };
    (sign * w / n, Vector3::new(x, y, z) * (sign / n))
}

/// `V(ω) = I + (1−cosθ)/θ²·[ω]ₓ + (θ−sinθ)/θ³·[ω]ₓ²`, the SO(3) left Jacobian.
fn so3_left_jacobian(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = omega.norm_squared();
    let k = skew(omega);
    let (b, c) = if theta2 < 1e-10 {
        (0.5 - theta2 / 24.0, 1.0 / 6.0 - theta2 / 120.0)
    } else {
        let theta = theta2.sqrt();
        (
            (1.0 - theta.cos()) / theta2,
            (theta - theta.sin()) / (theta2 * theta),
        )
    };
    Matrix3::identity() + k * b + k * k * c
}

fn so3_left_jacobian_inverse(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = omega.norm_squared();
    let k = skew(omega);
    let c = if theta2 < 1e-10 {
        1.0 / 12.0 + theta2 / 720.0
    } else {
        let theta = theta2.sqrt();
        (1.0 - theta * theta.sin() / (2.0 * (1.0 - theta.cos()))) / theta2
    };
    Matrix3::identity() - k * 0.5 + k * k * c
}

/// Tangent 6-vector `(ω, v)`: rotation (axis-angle) followed by translation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PoseTangent(pub [f64; 6]);

impl PoseTangent {
    pub fn zero() -> Self {
        Self([0.0; 6])
    }

    pub fn from_parts(omega: Vector3<f64>, v: Vector3<f64>) -> Self {
        Self([omega.x, omega.y, omega.z, v.x, v.y, v.z])
    }

    pub fn omega(&self) -> Vector3<f64> {
        Vector3::new(self.0[0], self.0[1], self.0[2])
    }

    pub fn v(&self) -> Vector3<f64> {
        Vector3::new(self.0[3], self.0[4], self.0[5])
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(self.0.map(|x| x * s))
    }
}

/// Rigid transform from the target camera frame to the source camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Validates orthonormality (`RᵀR = I`, `det R = 1`, both to 1e-9).
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !rotation.iter().chain(translation.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("pose".into()));
        }
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        let det = rotation.determinant();
        if ortho > 1e-9 || (det - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "rotation is not orthonormal (|RᵀR−I|={ortho:.3e}, det={det})"
            )));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn from_axis_angle(omega: Vector3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: so3_exp(&omega),
            translation,
        }
    }

    /// SE(3) exponential: `R = exp(ω)`, `t = V(ω)·v`.
    pub fn exp(xi: &PoseTangent) -> Self {
        let omega = xi.omega();
        Self {
            rotation: so3_exp(&omega),
            translation: so3_left_jacobian(&omega) * xi.v(),
        }
    }

    pub fn log(&self) -> PoseTangent {
        let omega = so3_log(&self.rotation);
        let v = so3_left_jacobian_inverse(&omega) * self.translation;
        PoseTangent::from_parts(omega, v)
    }

    pub fn transform_point(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * x + self.translation
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Left-multiplicative update `exp(δξ)·self`.
    pub fn retract_left(&self, delta: &PoseTangent) -> Pose {
        Pose::exp(delta).compose(self)
    }

    pub fn rotation_angle(&self) -> f64 {
        so3_log(&self.rotation).norm()
    }

    /// Geodesic angle between the rotations of two poses, in radians.
    pub fn rotation_distance(&self, other: &Pose) -> f64 {
        so3_log(&(self.rotation.transpose() * other.rotation)).norm()
    }

    /// Re-orthonormalizes the rotation via SVD (drift control after many updates).
    pub fn orthonormalized(&self) -> Pose {
        let svd = SVD::new(self.rotation, true, true);
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut r = u * vt;
        if r.determinant() < 0.0 {
            let mut u2 = u;
            u2.column_mut(2).neg_mut();
            r = u2 * vt;
        }
        Pose {
            rotation: r,
            translation: self.translation,
        }
    }

    /// Same rotation, translation rescaled by `s`.
    pub fn with_translation_scaled(&self, s: f64) -> Pose {
        Pose {
            rotation: self.rotation,
            translation: self.translation * s,
        }
    }
}

/// Essential matrix stored at unit Frobenius norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EssentialMatrix(Matrix3<f64>);

impl EssentialMatrix {
    /// Wraps and rescales `m` to unit Frobenius norm. No rank check is made;
    /// use [`EssentialMatrix::constraint_violation`] to test the algebraic invariants.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidEssential("non-finite entry".into()));
        }
        let n = m.norm();
        if n < 1e-300 {
            return Err(Error::InvalidEssential("zero matrix".into()));
        }
        // already unit norm up to rounding: keep the bits (text round trips)
        if (n - 1.0).abs() <= 1e-14 {
            return Ok(Self(m));
        }
        Ok(Self(m / n))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// Sign-canonical copy: the entry of largest magnitude (first in row-major
    /// order on ties) is made positive. `E` and `−E` map to the same matrix.
    pub fn canonical_sign(&self) -> Self {
        let mut best = 0usize;
        let mut best_abs = -1.0;
        for r in 0..3 {
            for c in 0..3 {
                let a = self.0[(r, c)].abs();
                if a > best_abs {
                    best_abs = a;
                    best = r * 3 + c;
                }
            }
        }
        if self.0[(best / 3, best % 3)] < 0.0 {
            Self(-self.0)
        } else {
            *self
        }
    }

    /// Largest of `|det E|` and the entries of `2·E·Eᵀ·E − tr(E·Eᵀ)·E`.
    pub fn constraint_violation(&self) -> f64 {
        let e = &self.0;
        let eet = e * e.transpose();
        let cubic = 2.0 * eet * e - eet.trace() * e;
        cubic.abs().max().max(e.determinant().abs())
    }

    /// Singular values in descending order.
    pub fn singular_values(&self) -> [f64; 3] {
        let mut s: Vec<f64> = self.0.singular_values().iter().copied().collect();
        s.sort_by(|a, b| b.partial_cmp(a).unwrap());
        [s[0], s[1], s[2]]
    }

    /// Frobenius distance to `other`, minimized over the sign ambiguity.
    pub fn distance(&self, other: &EssentialMatrix) -> f64 {
        (self.0 - other.0).norm().min((self.0 + other.0).norm())
    }
}

/// `E = [t]ₓ·R`, unit-Frobenius normalized.
pub fn essential_from_pose(pose: &Pose) -> Result<EssentialMatrix> {
    if pose.translation.norm() < 1e-12 {
        return Err(Error::ZeroTranslation);
    }
    EssentialMatrix::from_matrix(skew(&pose.translation) * pose.rotation)
}

/// Epipolar line `E·p̃` in the source view.
pub fn epipolar_line(e: &EssentialMatrix, p: &NormalizedCoord) -> Vector3<f64> {
    e.matrix() * p.homogeneous()
}

/// Algebraic epipolar residual `|q̃ᵀ·E·p̃|`.
pub fn epipolar_residual(c: &Correspondence, e: &EssentialMatrix) -> f64 {
    c.source.homogeneous().dot(&epipolar_line(e, &c.target)).abs()
}

/// Source-view epipole: the left null vector of `E` (all source lines pass through it).
/// Returned as a unit 3-vector since the epipole may lie at infinity.
pub fn source_epipole(e: &EssentialMatrix) -> Vector3<f64> {
    null_vector(&e.matrix().transpose())
}

/// Target-view epipole: the right null vector of `E`.
pub fn target_epipole(e: &EssentialMatrix) -> Vector3<f64> {
    null_vector(e.matrix())
}

fn null_vector(m: &Matrix3<f64>) -> Vector3<f64> {
    let svd = SVD::new(*m, false, true);
    let vt = svd.v_t.unwrap();
    let mut idx = 0;
    for i in 1..3 {
        if svd.singular_values[i] < svd.singular_values[idx] {
            idx = i;
        }
    }
    vt.row(idx).transpose().normalize()
}
