//! Depth-image-based warping: projection of target pixels into the source view
//! and bilinear resampling with validity tracking.

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::Result;
use crate::field::{ScalarField, ValidityMask};
use crate::geometry::{CameraIntrinsics, PixelCoord, Pose};

/// Source-frame depths at or below this are treated as behind the camera.
pub const BEHIND_CAMERA_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub pixel: PixelCoord,
    /// Depth of the point in the source frame (before perspective division).
    pub z_source: f64,
}

impl Projection {
    pub fn in_front(&self) -> bool {
        self.z_source > BEHIND_CAMERA_EPS
    }
}

/// Intermediate quantities of a projection parameterized by inverse depth.
///
/// With `p̃ = K⁻¹p` and inverse depth `d`, the source-frame point is
/// `X_s = (R·p̃ + t·d) / d`; `ray` holds `R·p̃ + t·d`, which has the same
/// direction and stays finite as `d → 0`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RayProjection {
    pub ray: Vector3<f64>,
    pub pixel: PixelCoord,
    pub in_front: bool,
}

#[inline]
pub(crate) fn project_inverse_depth(
    x: f64,
    y: f64,
    inv_depth: f64,
    k: &CameraIntrinsics,
    pose: &Pose,
) -> RayProjection {
    let u = (x - k.cx) / k.fx;
    let v = (y - k.cy) / k.fy;
    let p_norm = Vector3::new(u, v, 1.0);
    let ray = pose.rotation * p_norm + pose.translation * inv_depth;
    let qu = ray.x / ray.z;
    let qv = ray.y / ray.z;
    // Written as a displacement from p so the identity pose maps p onto itself exactly.
    let pixel = PixelCoord::new(x + k.fx * (qu - u), y + k.fy * (qv - v));
    RayProjection {
        ray,
        pixel,
        in_front: ray.z > BEHIND_CAMERA_EPS * inv_depth && ray.z > 0.0,
    }
}

/// Projects target pixel `p` with depth `depth` into the source view:
/// `K·(R·depth·K⁻¹p + t)` followed by the perspective division.
pub fn project_pixel(p: PixelCoord, depth: f64, k: &CameraIntrinsics, pose: &Pose) -> Projection {
    let inv = 1.0 / depth;
    let r = project_inverse_depth(p.x, p.y, inv, k, pose);
    Projection {
        pixel: r.pixel,
        z_source: r.ray.z * depth,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub values: Vec<f64>,
    pub in_bounds: bool,
}

#[inline]
pub(crate) fn in_bounds(width: usize, height: usize, x: f64, y: f64) -> bool {
    x >= 0.0 && y >= 0.0 && x <= (width - 1) as f64 && y <= (height - 1) as f64
}

/// Lower corner and fractional offset of the interpolation cell. Integer
/// coordinates use the cell to their right, except on the last row/column.
#[inline]
pub(crate) fn cell(coord: f64, size: usize) -> (usize, usize, f64) {
    if size == 1 {
        return (0, 0, 0.0);
    }
    let c0 = (coord.floor() as usize).min(size - 2);
    (c0, c0 + 1, coord - c0 as f64)
}

/// Bilinear value and spatial derivatives at `(x, y)`; returns `false` (and
/// zeros) outside `[0, W−1]×[0, H−1]`.
#[inline]
pub(crate) fn sample_with_gradient(
    img: &ScalarField,
    x: f64,
    y: f64,
    value: &mut [f64],
    dx: &mut [f64],
    dy: &mut [f64],
) -> bool {
    let (w, h) = (img.width(), img.height());
    if !in_bounds(w, h, x, y) {
        value.fill(0.0);
        dx.fill(0.0);
        dy.fill(0.0);
        return false;
    }
    let (x0, x1, fx) = cell(x, w);
    let (y0, y1, fy) = cell(y, h);
    let (p00, p10, p01, p11) = (img.pixel(x0, y0), img.pixel(x1, y0), img.pixel(x0, y1), img.pixel(x1, y1));
    for c in 0..img.channels() {
        let (a, b, cc, d) = (p00[c], p10[c], p01[c], p11[c]);
        value[c] = a * (1.0 - fx) * (1.0 - fy) + b * fx * (1.0 - fy) + cc * (1.0 - fx) * fy + d * fx * fy;
        dx[c] = (b - a) * (1.0 - fy) + (d - cc) * fy;
        dy[c] = (cc - a) * (1.0 - fx) + (d - b) * fx;
    }
    true
}

/// Weighted average of the four integer neighbors of `q`.
pub fn bilinear_sample(img: &ScalarField, q: PixelCoord) -> Sample {
    let n = img.channels();
    let mut values = vec![0.0; n];
    let mut dx = vec![0.0; n];
    let mut dy = vec![0.0; n];
    let in_bounds = sample_with_gradient(img, q.x, q.y, &mut values, &mut dx, &mut dy);
    Sample { values, in_bounds }
}

/// Synthesizes the source image at target pixels using the target depth map.
/// Pixels that land behind the source camera or outside the image are masked out.
pub fn warp_image(
    src: &ScalarField,
    target_depth: &ScalarField,
    k: &CameraIntrinsics,
    pose: &Pose,
) -> Result<(ScalarField, ValidityMask)> {
    src.check_same_size(target_depth)?;
    let (w, h, ch) = (src.width(), src.height(), src.channels());
    let rows: Vec<(Vec<f64>, Vec<bool>)> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut vals = vec![0.0; w * ch];
            let mut valid = vec![false; w];
            let mut dx = vec![0.0; ch];
            let mut dy = vec![0.0; ch];
            for x in 0..w {
                let depth = target_depth.get(x, y, 0);
                if !(depth > 0.0) {
                    continue;
                }
                let r = project_inverse_depth(x as f64, y as f64, 1.0 / depth, k, pose);
                if !r.in_front {
                    continue;
                }
                let out = &mut vals[x * ch..(x + 1) * ch];
                valid[x] = sample_with_gradient(src, r.pixel.x, r.pixel.y, out, &mut dx, &mut dy);
            }
            (vals, valid)
        })
        .collect();
    let mut data = Vec::with_capacity(w * h * ch);
    let mut mask = Vec::with_capacity(w * h);
    for (v, m) in rows {
        data.extend(v);
        mask.extend(m);
    }
    Ok((ScalarField::new(w, h, ch, data)?, ValidityMask::new(w, h, mask)?))
}
