//! Photometric, epipolar-weighted photometric and edge-aware smoothness
//! losses, inverse-depth normalization and the multi-scale total.
//!
//! The total loss is evaluated by a single per-level routine that can also
//! produce analytic gradients (see [`crate::optim`]), so the reported loss
//! and its gradient always come from the same arithmetic.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{ScalarField, ValidityMask};
use crate::geometry::{CameraIntrinsics, EssentialMatrix, Pose};
use crate::warp::{cell, project_inverse_depth, sample_with_gradient};

pub const DEFAULT_NUM_SCALES: usize = 4;
pub const DEFAULT_LAMBDA_SMOOTH: f64 = 0.2;

/// `base / 2^level`.
pub fn lambda_smooth(base: f64, level: usize) -> f64 {
    base / (1u64 << level) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub num_scales: usize,
    pub lambda_smooth_base: f64,
    pub use_epipolar_weight: bool,
    pub epipolar_e: Option<EssentialMatrix>,
    /// Treat the epipolar weight as a constant when differentiating.
    pub stop_grad_weight: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            num_scales: DEFAULT_NUM_SCALES,
            lambda_smooth_base: DEFAULT_LAMBDA_SMOOTH,
            use_epipolar_weight: false,
            epipolar_e: None,
            stop_grad_weight: false,
        }
    }
}

impl LossConfig {
    pub fn with_epipolar(mut self, e: EssentialMatrix) -> Self {
        self.use_epipolar_weight = true;
        self.epipolar_e = Some(e);
        self
    }

    pub fn with_scales(mut self, num_scales: usize) -> Self {
        self.num_scales = num_scales;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_scales == 0 || self.num_scales > 16 {
            return Err(Error::InvalidConfig(format!("num_scales must be in 1..=16, got {}", self.num_scales)));
        }
        if !(self.lambda_smooth_base >= 0.0) || !self.lambda_smooth_base.is_finite() {
            return Err(Error::InvalidConfig("lambda_smooth_base must be finite and ≥ 0".into()));
        }
        if self.use_epipolar_weight && self.epipolar_e.is_none() {
            return Err(Error::InvalidConfig("epipolar weighting requires an essential matrix".into()));
        }
        Ok(())
    }

    pub fn lambda_smooth(&self, level: usize) -> f64 {
        lambda_smooth(self.lambda_smooth_base, level)
    }

    fn weight_matrix(&self) -> Option<Matrix3<f64>> {
        if self.use_epipolar_weight {
            self.epipolar_e.map(|e| *e.matrix())
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub warp_loss: Vec<f64>,
    pub smooth_loss: Vec<f64>,
    pub lambda: Vec<f64>,
    pub valid_pixel_counts: Vec<usize>,
    pub total: f64,
}

impl LossReport {
    /// True when some scale had no valid pixel (its warp loss is reported as 0).
    pub fn has_empty_scale(&self) -> bool {
        self.valid_pixel_counts.contains(&0)
    }
}

/// Mean over valid pixels, with the number of pixels that contributed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskedMean {
    pub value: f64,
    pub valid_count: usize,
}

impl MaskedMean {
    /// No pixel was valid; `value` is 0.
    pub fn is_empty(&self) -> bool {
        self.valid_count == 0
    }
}

pub fn photometric_loss(target: &ScalarField, warped: &ScalarField, mask: &ValidityMask) -> Result<MaskedMean> {
    weighted_photometric_loss(target, warped, mask, None)
}

/// `mean_valid(|I_t − Î_s|·w)`; `weights = None` means all ones.
pub fn weighted_photometric_loss(
    target: &ScalarField,
    warped: &ScalarField,
    mask: &ValidityMask,
    weights: Option<&ScalarField>,
) -> Result<MaskedMean> {
    target.check_same_shape(warped)?;
    mask.check_matches(target)?;
    if let Some(w) = weights {
        target.check_same_size(w)?;
        if w.channels() != 1 {
            return Err(Error::DimensionMismatch {
                expected: "1 channel".into(),
                got: format!("{} channels", w.channels()),
            });
        }
    }
    let c = target.channels();
    let mut sum = 0.0;
    let mut count = 0usize;
    for (i, &valid) in mask.data().iter().enumerate() {
        if !valid {
            continue;
        }
        let t = &target.data()[i * c..(i + 1) * c];
        let s = &warped.data()[i * c..(i + 1) * c];
        let diff: f64 = t.iter().zip(s).map(|(a, b)| (a - b).abs()).sum();
        sum += diff * weights.map_or(1.0, |w| w.data()[i]);
        count += 1;
    }
    Ok(MaskedMean {
        value: if count == 0 { 0.0 } else { sum / (count * c) as f64 },
        valid_count: count,
    })
}

/// `exp(|p̂̃ᵀ E p̃|)` per target pixel, with `p̂` the projection of the pixel
/// under `(depth, pose)`. Pixels with non-positive depth or projecting behind
/// the source camera get weight 1.
pub fn epipolar_weight_map(depth: &ScalarField, k: &CameraIntrinsics, pose: &Pose, e: &EssentialMatrix) -> ScalarField {
    let (w, h) = (depth.width(), depth.height());
    let em = e.matrix();
    ScalarField::from_fn(w, h, |x, y| {
        let d = depth.get(x, y, 0);
        if !(d > 0.0) {
            return 1.0;
        }
        let r = project_inverse_depth(x as f64, y as f64, 1.0 / d, k, pose);
        if !r.in_front {
            return 1.0;
        }
        let p = Vector3::new((x as f64 - k.cx) / k.fx, (y as f64 - k.cy) / k.fy, 1.0);
        let l = em * p;
        (l.x * r.ray.x / r.ray.z + l.y * r.ray.y / r.ray.z + l.z).abs().exp()
    })
}

/// Weight map from a dense field of source pixel coordinates (2 channels)
/// instead of a projection; pixels outside `valid` get weight 1.
pub fn epipolar_weight_map_from_flow(
    source_pixels: &ScalarField,
    valid: &ValidityMask,
    k: &CameraIntrinsics,
    e: &EssentialMatrix,
) -> Result<ScalarField> {
    if source_pixels.channels() != 2 {
        return Err(Error::DimensionMismatch {
            expected: "2 channels".into(),
            got: format!("{} channels", source_pixels.channels()),
        });
    }
    valid.check_matches(source_pixels)?;
    let em = e.matrix();
    Ok(ScalarField::from_fn(source_pixels.width(), source_pixels.height(), |x, y| {
        if !valid.get(x, y) {
            return 1.0;
        }
        let p = Vector3::new((x as f64 - k.cx) / k.fx, (y as f64 - k.cy) / k.fy, 1.0);
        let q = Vector3::new(
            (source_pixels.get(x, y, 0) - k.cx) / k.fx,
            (source_pixels.get(x, y, 1) - k.cy) / k.fy,
            1.0,
        );
        q.dot(&(em * p)).abs().exp()
    }))
}

/// `exp(−|∂I|)` for forward differences of the channel-mean image; zero on the
/// last column (x) / last row (y).
fn smoothness_weights(image: &ScalarField) -> (Vec<f64>, Vec<f64>) {
    let g = image.channel_mean();
    let (w, h) = (g.width(), g.height());
    let mut wx = vec![0.0; w * h];
    let mut wy = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w {
                wx[i] = (-(g.get(x + 1, y, 0) - g.get(x, y, 0)).abs()).exp();
            }
            if y + 1 < h {
                wy[i] = (-(g.get(x, y + 1, 0) - g.get(x, y, 0)).abs()).exp();
            }
        }
    }
    (wx, wy)
}

/// Edge-aware smoothness: mean over all pixels of
/// `|∂x d|·e^{−|∂x I|} + |∂y d|·e^{−|∂y I|}` with forward differences.
pub fn smoothness_loss(inv_depth: &ScalarField, image: &ScalarField) -> Result<f64> {
    inv_depth.check_same_size(image)?;
    let (wx, wy) = smoothness_weights(image);
    let (w, h) = (inv_depth.width(), inv_depth.height());
    let d = inv_depth.data();
    let mut sum = 0.0;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w {
                sum += (d[i + 1] - d[i]).abs() * wx[i];
            }
            if y + 1 < h {
                sum += (d[i + w] - d[i]).abs() * wy[i];
            }
        }
    }
    Ok(sum / (w * h) as f64)
}

const MIN_MEAN_INV_DEPTH: f64 = 1e-12;

pub fn normalize_inverse_depth(inv_depth: &ScalarField) -> Result<ScalarField> {
    let m = inv_depth.mean();
    if !(m > MIN_MEAN_INV_DEPTH) {
        return Err(Error::DegenerateDepth(m));
    }
    Ok(inv_depth.map(|v| v / m))
}

/// Target/source pyramids and smoothness weights, reusable across evaluations.
#[derive(Debug, Clone)]
pub struct PreparedPair {
    levels: Vec<PreparedLevel>,
    width: usize,
    height: usize,
}

#[derive(Debug, Clone)]
struct PreparedLevel {
    target: ScalarField,
    source: ScalarField,
    k: CameraIntrinsics,
    wx: Vec<f64>,
    wy: Vec<f64>,
}

impl PreparedPair {
    pub fn new(target: &ScalarField, source: &ScalarField, k: &CameraIntrinsics, num_scales: usize) -> Result<Self> {
        target.check_same_shape(source)?;
        if num_scales == 0 {
            return Err(Error::InvalidConfig("num_scales must be ≥ 1".into()));
        }
        let mut levels = Vec::with_capacity(num_scales);
        let (mut t, mut s) = (target.clone(), source.clone());
        for l in 0..num_scales {
            if l > 0 {
                t = t.downsample2()?;
                s = s.downsample2()?;
            }
            let (wx, wy) = smoothness_weights(&t);
            levels.push(PreparedLevel {
                target: t.clone(),
                source: s.clone(),
                k: k.at_level(l as u32),
                wx,
                wy,
            });
        }
        Ok(Self {
            levels,
            width: target.width(),
            height: target.height(),
        })
    }

    pub fn num_scales(&self) -> usize {
        self.levels.len()
    }

    pub fn level_size(&self, l: usize) -> (usize, usize) {
        (self.levels[l].target.width(), self.levels[l].target.height())
    }
}

#[derive(Debug, Clone, Default)]
pub(crate) struct EvalOptions<'a> {
    pub gradient: bool,
    /// Per level, pixels whose warp and smoothness terms are kept.
    pub include: Option<&'a [Vec<bool>]>,
    /// Record per-pixel kink signatures and projections.
    pub signatures: bool,
}

#[derive(Debug, Clone)]
pub(crate) struct Evaluation {
    pub report: LossReport,
    /// Gradient w.r.t. a left perturbation `exp(δξ)·pose` at δξ = 0, (ω, v).
    pub d_pose: [f64; 6],
    pub d_inv_depth: Option<Vec<f64>>,
    /// Per level, per pixel: 0 for invalid pixels, else a code of the bilinear
    /// cell, residual/epipolar signs and smoothness difference signs.
    pub signatures: Vec<Vec<u64>>,
    /// Per level, per pixel projected source position (NaN when invalid).
    pub projections: Vec<Vec<(f64, f64)>>,
}

#[derive(Default)]
struct RowOut {
    warp: f64,
    count: usize,
    d_pose: [f64; 6],
    dn: Vec<f64>,
    sig: Vec<u64>,
    proj: Vec<(f64, f64)>,
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[inline]
fn sign_code(v: f64) -> u64 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        2
    } else {
        3
    }
}

pub(crate) fn evaluate(
    pair: &PreparedPair,
    inv_depth: &ScalarField,
    pose: &Pose,
    config: &LossConfig,
    opts: &EvalOptions,
) -> Result<Evaluation> {
    config.validate()?;
    if pair.num_scales() != config.num_scales {
        return Err(Error::InvalidConfig(format!(
            "prepared pair has {} scales, config {}",
            pair.num_scales(),
            config.num_scales
        )));
    }
    if inv_depth.width() != pair.width || inv_depth.height() != pair.height || inv_depth.channels() != 1 {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}x1", pair.width, pair.height),
            got: inv_depth.shape_string(),
        });
    }
    let e_mat = config.weight_matrix();
    let mut report = LossReport {
        warp_loss: Vec::new(),
        smooth_loss: Vec::new(),
        lambda: Vec::new(),
        valid_pixel_counts: Vec::new(),
        total: 0.0,
    };
    let mut d_pose = [0.0; 6];
    let mut level_grads: Vec<Vec<f64>> = Vec::new();
    let mut level_inv: Vec<ScalarField> = Vec::new();
    let mut signatures = Vec::new();
    let mut projections = Vec::new();
    let mut d = inv_depth.clone();
    for (l, lv) in pair.levels.iter().enumerate() {
        if l > 0 {
            d = d.downsample2()?;
        }
        let m = d.mean();
        if !(m > MIN_MEAN_INV_DEPTH) {
            return Err(Error::DegenerateDepth(m));
        }
        let n: Vec<f64> = d.data().iter().map(|v| v / m).collect();
        let (w, h, c) = (lv.target.width(), lv.target.height(), lv.target.channels());
        let k = lv.k;
        let include = opts.include.map(|inc| &inc[l]);
        let rows: Vec<RowOut> = (0..h)
            .into_par_iter()
            .map(|y| {
                let mut out = RowOut::default();
                if opts.gradient {
                    out.dn = vec![0.0; w];
                }
                if opts.signatures {
                    out.sig = vec![0; w];
                    out.proj = vec![(f64::NAN, f64::NAN); w];
                }
                let mut val = vec![0.0; c];
                let mut gx = vec![0.0; c];
                let mut gy = vec![0.0; c];
                for x in 0..w {
                    let i = y * w + x;
                    let ni = n[i];
                    if !(ni > 0.0) {
                        continue;
                    }
                    let r = project_inverse_depth(x as f64, y as f64, ni, &k, pose);
                    if !r.in_front {
                        continue;
                    }
                    if !sample_with_gradient(&lv.source, r.pixel.x, r.pixel.y, &mut val, &mut gx, &mut gy) {
                        continue;
                    }
                    let (qu, qv) = (r.ray.x / r.ray.z, r.ray.y / r.ray.z);
                    let (wt, e, line) = match &e_mat {
                        Some(em) => {
                            let p = Vector3::new((x as f64 - k.cx) / k.fx, (y as f64 - k.cy) / k.fy, 1.0);
                            let line = em * p;
                            let e = line.x * qu + line.y * qv + line.z;
                            (e.abs().exp(), e, line)
                        }
                        None => (1.0, 0.0, Vector3::zeros()),
                    };
                    let t = lv.target.pixel(x, y);
                    let mut abs_sum = 0.0;
                    let (mut gqx, mut gqy) = (0.0, 0.0);
                    let mut sig_r = 0u64;
                    for ch in 0..c {
                        let res = t[ch] - val[ch];
                        abs_sum += res.abs();
                        let s = sign(res);
                        gqx -= s * gx[ch];
                        gqy -= s * gy[ch];
                        sig_r = (sig_r << 2) | sign_code(res);
                    }
                    if opts.signatures {
                        let (cx0, _, _) = cell(r.pixel.x, lv.source.width());
                        let (cy0, _, _) = cell(r.pixel.y, lv.source.height());
                        out.sig[x] = 1 | (cx0 as u64) << 1 | (cy0 as u64) << 17 | sign_code(e) << 33 | sig_r << 39;
                        out.proj[x] = (r.pixel.x, r.pixel.y);
                    }
                    if include.is_some_and(|inc| !inc[i]) {
                        continue;
                    }
                    out.warp += abs_sum * wt;
                    out.count += 1;
                    if opts.gradient {
                        let ge = if config.stop_grad_weight { 0.0 } else { abs_sum * wt * sign(e) };
                        let g0 = k.fx * gqx * wt + ge * line.x;
                        let g1 = k.fy * gqy * wt + ge * line.y;
                        let a = r.ray;
                        let iz = 1.0 / a.z;
                        let ga = Vector3::new(g0 * iz, g1 * iz, -(g0 * a.x + g1 * a.y) * iz * iz);
                        let dw = a.cross(&ga);
                        out.d_pose[0] += dw.x;
                        out.d_pose[1] += dw.y;
                        out.d_pose[2] += dw.z;
                        out.d_pose[3] += ni * ga.x;
                        out.d_pose[4] += ni * ga.y;
                        out.d_pose[5] += ni * ga.z;
                        out.dn[x] = ga.dot(&pose.translation);
                    }
                }
                out
            })
            .collect();

        let mut warp_sum = 0.0;
        let mut count = 0usize;
        let mut dp = [0.0; 6];
        for r in &rows {
            warp_sum += r.warp;
            count += r.count;
            for j in 0..6 {
                dp[j] += r.d_pose[j];
            }
        }
        let scale = if count == 0 { 0.0 } else { 1.0 / (count * c) as f64 };
        let warp = warp_sum * scale;
        for j in 0..6 {
            d_pose[j] += dp[j] * scale;
        }

        // smoothness on the normalized, unclamped inverse depth
        let lambda = config.lambda_smooth(l);
        let npx = (w * h) as f64;
        let mut smooth_sum = 0.0;
        let mut dn = if opts.gradient {
            let mut g = Vec::with_capacity(w * h);
            for r in &rows {
                g.extend(r.dn.iter().map(|v| v * scale));
            }
            g
        } else {
            Vec::new()
        };
        let mut sig: Vec<u64> = if opts.signatures {
            rows.iter().flat_map(|r| r.sig.iter().copied()).collect()
        } else {
            Vec::new()
        };
        let sg = lambda / npx;
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let keep = include.is_none_or(|inc| inc[i]);
                if x + 1 < w {
                    let diff = n[i + 1] - n[i];
                    if opts.signatures {
                        sig[i] |= sign_code(diff) << 35 | 1 << 63;
                    }
                    if keep {
                        smooth_sum += diff.abs() * lv.wx[i];
                        if opts.gradient {
                            let g = sign(diff) * lv.wx[i] * sg;
                            dn[i + 1] += g;
                            dn[i] -= g;
                        }
                    }
                }
                if y + 1 < h {
                    let diff = n[i + w] - n[i];
                    if opts.signatures {
                        sig[i] |= sign_code(diff) << 37 | 1 << 63;
                    }
                    if keep {
                        smooth_sum += diff.abs() * lv.wy[i];
                        if opts.gradient {
                            let g = sign(diff) * lv.wy[i] * sg;
                            dn[i + w] += g;
                            dn[i] -= g;
                        }
                    }
                }
            }
        }
        let smooth = smooth_sum / npx;
        report.warp_loss.push(warp);
        report.smooth_loss.push(smooth);
        report.lambda.push(lambda);
        report.valid_pixel_counts.push(count);
        report.total += warp + lambda * smooth;

        if opts.gradient {
            // adjoint of n = d / mean(d)
            let dot: f64 = dn.iter().zip(d.data()).map(|(g, v)| g * v).sum();
            let corr = dot / (m * m * npx);
            level_grads.push(dn.iter().map(|g| g / m - corr).collect());
            level_inv.push(d.clone());
        }
        if opts.signatures {
            signatures.push(sig);
            projections.push(rows.iter().flat_map(|r| r.proj.iter().copied()).collect());
        }
    }

    let d_inv_depth = if opts.gradient {
        // adjoint of the 2×2 box pyramid, coarsest to finest
        let mut acc = level_grads.pop().unwrap();
        let mut l = level_grads.len();
        while l > 0 {
            let (wc, hc) = pair.level_size(l);
            let (wf, _) = pair.level_size(l - 1);
            let mut fine = level_grads.pop().unwrap();
            for y in 0..hc {
                for x in 0..wc {
                    let g = 0.25 * acc[y * wc + x];
                    for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                        fine[(2 * y + dy) * wf + 2 * x + dx] += g;
                    }
                }
            }
            acc = fine;
            l -= 1;
        }
        Some(acc)
    } else {
        None
    };
    Ok(Evaluation {
        report,
        d_pose,
        d_inv_depth,
        signatures,
        projections,
    })
}

/// Multi-scale loss: per level, box-downsample, normalize inverse depth to
/// unit mean, warp, and add `warp + λ_smooth(l)·smooth`.
pub fn total_loss(
    target: &ScalarField,
    source: &ScalarField,
    inv_depth: &ScalarField,
    pose: &Pose,
    k: &CameraIntrinsics,
    config: &LossConfig,
) -> Result<LossReport> {
    config.validate()?;
    let pair = PreparedPair::new(target, source, k, config.num_scales)?;
    Ok(evaluate(&pair, inv_depth, pose, config, &EvalOptions::default())?.report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::essential_from_pose;
    use crate::synth::{presets, render_pair, TextureKind};
    use crate::warp::warp_image;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(w: usize, h: usize, c: usize, seed: u64) -> ScalarField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ScalarField::new(w, h, c, (0..w * h * c).map(|_| rng.random()).collect()).unwrap()
    }

    #[test]
    fn photometric_examples() {
        let t = random_field(4, 4, 3, 1);
        let full = ValidityMask::all(4, 4, true);
        assert_eq!(photometric_loss(&t, &t, &full).unwrap().value, 0.0);
        let a = ScalarField::filled(4, 4, 1, 0.25);
        let b = ScalarField::filled(4, 4, 1, 0.75);
        assert_eq!(photometric_loss(&a, &b, &full).unwrap().value, 0.5);
        let empty = photometric_loss(&a, &b, &ValidityMask::all(4, 4, false)).unwrap();
        assert!(empty.is_empty() && empty.value == 0.0);
        assert!(photometric_loss(&a, &ScalarField::filled(4, 3, 1, 0.0), &full).is_err());
    }

    #[test]
    fn photometric_matches_reference_loop() {
        let t = random_field(4, 4, 2, 2);
        let s = random_field(4, 4, 2, 3);
        let mask = ValidityMask::new(4, 4, (0..16).map(|i| i % 2 == 0).collect()).unwrap();
        let wts = random_field(4, 4, 1, 4).map(|v| 1.0 + v);
        let (mut plain, mut weighted, mut n) = (0.0, 0.0, 0);
        for y in 0..4 {
            for x in 0..4 {
                if !mask.get(x, y) {
                    continue;
                }
                n += 1;
                for c in 0..2 {
                    let d = (t.get(x, y, c) - s.get(x, y, c)).abs();
                    plain += d;
                    weighted += d * wts.get(x, y, 0);
                }
            }
        }
        let n = (2 * n) as f64;
        assert!((photometric_loss(&t, &s, &mask).unwrap().value - plain / n).abs() < 1e-15);
        assert!((weighted_photometric_loss(&t, &s, &mask, Some(&wts)).unwrap().value - weighted / n).abs() < 1e-15);
        let ones = ScalarField::filled(4, 4, 1, 1.0);
        assert_eq!(
            weighted_photometric_loss(&t, &s, &mask, Some(&ones)).unwrap(),
            photometric_loss(&t, &s, &mask).unwrap()
        );
    }

    #[test]
    fn doubling_a_weight_doubles_its_contribution() {
        let t = random_field(3, 3, 1, 5);
        let s = random_field(3, 3, 1, 6);
        let mask = ValidityMask::all(3, 3, true);
        let ones = ScalarField::filled(3, 3, 1, 1.0);
        let mut two = ones.clone();
        two.set(1, 2, 0, 2.0);
        let base = weighted_photometric_loss(&t, &s, &mask, Some(&ones)).unwrap().value;
        let doubled = weighted_photometric_loss(&t, &s, &mask, Some(&two)).unwrap().value;
        let contrib = (t.get(1, 2, 0) - s.get(1, 2, 0)).abs() / 9.0;
        assert!((doubled - base - contrib).abs() < 1e-15);
    }

    #[test]
    fn smoothness_examples() {
        let img = random_field(5, 4, 1, 7);
        assert_eq!(smoothness_loss(&ScalarField::filled(5, 4, 1, 3.0), &img).unwrap(), 0.0);
        // two columns: unit depth step, image step G
        let g = 0.4;
        let d = ScalarField::new(2, 1, 1, vec![1.0, 2.0]).unwrap();
        let edge = ScalarField::new(2, 1, 1, vec![0.1, 0.1 + g]).unwrap();
        let flat = ScalarField::new(2, 1, 1, vec![0.3, 0.3]).unwrap();
        let with_edge = smoothness_loss(&d, &edge).unwrap();
        assert!((with_edge - (-g).exp() / 2.0).abs() < 1e-15);
        let without = smoothness_loss(&d, &flat).unwrap();
        assert_eq!(without, 0.5);
        assert!(without > with_edge);
        // multi-channel images use the channel mean
        let rgb = ScalarField::new(2, 1, 3, vec![0.0, 0.2, 0.1, 0.3, 0.5, 0.7]).unwrap();
        let gray = rgb.channel_mean();
        assert_eq!(smoothness_loss(&d, &rgb).unwrap(), smoothness_loss(&d, &gray).unwrap());
    }

    #[test]
    fn normalization() {
        let n = normalize_inverse_depth(&ScalarField::filled(3, 2, 1, 4.0)).unwrap();
        assert!(n.data().iter().all(|&v| v == 1.0));
        let n = normalize_inverse_depth(&ScalarField::new(2, 1, 1, vec![1.0, 3.0]).unwrap()).unwrap();
        assert_eq!(n.data(), &[0.5, 1.5]);
        let r = random_field(7, 5, 1, 8).map(|v| v + 0.1);
        let n = normalize_inverse_depth(&r).unwrap();
        assert!((n.mean() - 1.0).abs() < 1e-12);
        let m = r.mean();
        for (a, b) in n.data().iter().zip(r.data()) {
            assert!((a * m - b).abs() < 1e-14);
        }
        assert!(matches!(
            normalize_inverse_depth(&ScalarField::filled(2, 2, 1, 0.0)),
            Err(Error::DegenerateDepth(_))
        ));
    }

    #[test]
    fn lambda_schedule() {
        let expected = [0.2, 0.1, 0.05, 0.025];
        for (l, &e) in expected.iter().enumerate() {
            assert_eq!(lambda_smooth(0.2, l), e);
        }
    }

    #[test]
    fn single_scale_total_is_sum_of_terms() {
        let spec = presets::smooth_random(32, 3);
        let pair = render_pair(&spec).unwrap();
        let pose = pair.normalized_pose();
        let inv = pair.inv_depth.clone();
        let cfg = LossConfig::default().with_scales(1);
        let report = total_loss(&pair.target, &pair.source, &inv, &pose, &spec.intrinsics, &cfg).unwrap();
        let n = normalize_inverse_depth(&inv).unwrap();
        let depth = n.map(|v| 1.0 / v);
        let (warped, mask) = warp_image(&pair.source, &depth, &spec.intrinsics, &pose).unwrap();
        let expected = photometric_loss(&pair.target, &warped, &mask).unwrap().value + 0.2 * smoothness_loss(&n, &pair.target).unwrap();
        assert!((report.total - expected).abs() < 1e-12, "{} vs {}", report.total, expected);
    }

    #[test]
    fn report_invariants_and_ground_truth_floor() {
        let pose = Pose::from_axis_angle(nalgebra::Vector3::new(0.0, 0.01, 0.0), nalgebra::Vector3::new(0.3, 0.02, 0.05));
        let spec = presets::fronto_parallel(64, 5.0, TextureKind::Smooth, pose, 11);
        let pair = render_pair(&spec).unwrap();
        let pose = pair.normalized_pose();
        let cfg = LossConfig::default();
        let r = total_loss(&pair.target, &pair.source, &pair.inv_depth, &pose, &spec.intrinsics, &cfg).unwrap();
        let sum: f64 = (0..4).map(|l| r.warp_loss[l] + r.lambda[l] * r.smooth_loss[l]).sum();
        assert!((r.total - sum).abs() < 1e-12);
        assert!(r.warp_loss.iter().chain(&r.smooth_loss).all(|&v| v >= 0.0));
        assert!(r.total < 0.01, "{r:?}");
        assert!(!r.has_empty_scale());
    }

    #[test]
    fn invariant_to_inverse_depth_scale() {
        let spec = presets::smooth_random(32, 12);
        let pair = render_pair(&spec).unwrap();
        let pose = pair.normalized_pose().retract_left(&crate::geometry::PoseTangent([0.01, 0.0, -0.01, 0.02, 0.0, 0.01]));
        let cfg = LossConfig::default();
        let base = total_loss(&pair.target, &pair.source, &pair.inv_depth, &pose, &spec.intrinsics, &cfg).unwrap().total;
        for s in [0.1, 0.37, 2.0, 10.0] {
            let scaled = pair.inv_depth.map(|v| v * s);
            let v = total_loss(&pair.target, &pair.source, &scaled, &pose, &spec.intrinsics, &cfg).unwrap().total;
            assert!(((v - base) / base).abs() < 1e-9);
        }
    }

    #[test]
    fn consistent_weights_reduce_to_plain_loss() {
        let spec = presets::smooth_random(32, 13);
        let pair = render_pair(&spec).unwrap();
        let pose = pair.normalized_pose();
        let e = essential_from_pose(&pose).unwrap();
        let wmap = epipolar_weight_map(&pair.depth, &spec.intrinsics, &spec.pose, &e);
        let (lo, hi) = wmap.min_max();
        assert!(lo >= 1.0 && hi - 1.0 < 1e-6);
        let plain = LossConfig::default();
        let weighted = LossConfig::default().with_epipolar(e);
        let a = total_loss(&pair.target, &pair.source, &pair.inv_depth, &pose, &spec.intrinsics, &plain).unwrap().total;
        let b = total_loss(&pair.target, &pair.source, &pair.inv_depth, &pose, &spec.intrinsics, &weighted).unwrap().total;
        assert!((a - b).abs() < 1e-6 * (1.0 + a));
    }

    #[test]
    fn perturbed_pose_weights_exceed_one() {
        let spec = presets::smooth_random(32, 14);
        let pair = render_pair(&spec).unwrap();
        let e = pair.essential.unwrap();
        let wrong = spec.pose.retract_left(&crate::geometry::PoseTangent([0.0, 0.02, 0.0, 0.0, 0.1, 0.0]));
        let wmap = epipolar_weight_map(&pair.depth, &spec.intrinsics, &wrong, &e);
        assert!(wmap.data().iter().all(|&v| v >= 1.0));
        assert!(wmap.data().iter().filter(|&&v| v > 1.0).count() > 900);
    }

    #[test]
    fn mover_weights_exceed_background() {
        let spec = presets::mover_scene(64, 1, 0.08);
        let pair = render_pair(&spec).unwrap();
        let e = pair.essential.unwrap();
        let wmap = epipolar_weight_map_from_flow(&pair.correspondences, &pair.correspondence_valid, &spec.intrinsics, &e).unwrap();
        let (mut inside, mut outside): (Vec<f64>, Vec<f64>) = (Vec::new(), Vec::new());
        for (i, &v) in wmap.data().iter().enumerate() {
            if pair.mover_mask.data()[i] {
                inside.push(v)
            } else {
                outside.push(v)
            }
        }
        let med = |v: &mut Vec<f64>| {
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v[v.len() / 2]
        };
        assert!(med(&mut inside) > med(&mut outside));
    }

    #[test]
    fn monotone_in_single_pixel_residual() {
        let t = random_field(3, 3, 1, 9);
        let s = t.map(|v| v + 0.1);
        let mask = ValidityMask::all(3, 3, true);
        let mut w = ScalarField::filled(3, 3, 1, 1.0);
        let mut prev = weighted_photometric_loss(&t, &s, &mask, Some(&w)).unwrap().value;
        for e in [0.01, 0.1, 0.5] {
            w.set(2, 1, 0, f64::exp(e));
            let v = weighted_photometric_loss(&t, &s, &mask, Some(&w)).unwrap().value;
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn rejects_bad_config() {
        let t = ScalarField::filled(8, 8, 1, 0.5);
        let d = ScalarField::filled(8, 8, 1, 1.0);
        let k = CameraIntrinsics::new(8.0, 8.0, 3.5, 3.5).unwrap();
        let mut cfg = LossConfig::default();
        cfg.use_epipolar_weight = true;
        assert!(total_loss(&t, &t, &d, &Pose::identity(), &k, &cfg).is_err());
        assert!(total_loss(&t, &t, &d, &Pose::identity(), &k, &LossConfig::default().with_scales(0)).is_err());
        assert!(total_loss(&t, &t, &ScalarField::filled(4, 8, 1, 1.0), &Pose::identity(), &k, &LossConfig::default()).is_err());
    }
}
