//! Depth and trajectory metrics: median-scaled depth errors/accuracies,
//! scale-aligned ATE and translational direction error (ATDE).

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::field::{ScalarField, ValidityMask};
use crate::geometry::Pose;

pub const MIN_DEPTH: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthMetrics {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
}

impl DepthMetrics {
    pub const CSV_HEADER: &'static str = "abs_rel,sq_rel,rmse,rmse_log,delta1,delta2,delta3";

    pub fn csv_row(&self) -> String {
        format!(
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            self.abs_rel, self.sq_rel, self.rmse, self.rmse_log, self.delta1, self.delta2, self.delta3
        )
    }
}

/// Median of a non-empty slice; even lengths average the two middle values.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Eigen-protocol depth metrics over masked pixels, after scaling `pred` by
/// `median(gt)/median(pred)` and clamping both to `[1e-3, cap]`.
pub fn depth_metrics(pred: &ScalarField, gt: &ScalarField, gt_mask: &ValidityMask, cap: f64) -> Result<DepthMetrics> {
    pred.check_same_shape(gt)?;
    gt_mask.check_matches(gt)?;
    if !(cap > MIN_DEPTH) || !cap.is_finite() {
        return Err(Error::InvalidConfig(format!("depth cap must exceed {MIN_DEPTH}, got {cap}")));
    }
    let idx: Vec<usize> = (0..gt.len_pixels())
        .filter(|&i| gt_mask.data()[i] && gt.data()[i] > 0.0)
        .collect();
    if idx.is_empty() {
        return Err(Error::EmptyMask);
    }
    let p: Vec<f64> = idx.iter().map(|&i| pred.data()[i]).collect();
    let g: Vec<f64> = idx.iter().map(|&i| gt.data()[i]).collect();
    let mp = median(&p);
    if !(mp > 0.0) {
        return Err(Error::DegenerateScale);
    }
    let scale = median(&g) / mp;
    let n = idx.len() as f64;
    let (mut abs_rel, mut sq_rel, mut sq, mut sq_log) = (0.0, 0.0, 0.0, 0.0);
    let mut within = [0usize; 3];
    for (&pv, &gv) in p.iter().zip(&g) {
        let pv = (pv * scale).clamp(MIN_DEPTH, cap);
        let gv = gv.clamp(MIN_DEPTH, cap);
        let d = pv - gv;
        abs_rel += d.abs() / gv;
        sq_rel += d * d / gv;
        sq += d * d;
        let dl = pv.ln() - gv.ln();
        sq_log += dl * dl;
        let ratio = (pv / gv).max(gv / pv);
        for (k, count) in within.iter_mut().enumerate() {
            if ratio < 1.25f64.powi(k as i32 + 1) {
                *count += 1;
            }
        }
    }
    Ok(DepthMetrics {
        abs_rel: abs_rel / n,
        sq_rel: sq_rel / n,
        rmse: (sq / n).sqrt(),
        rmse_log: (sq_log / n).sqrt(),
        delta1: within[0] as f64 / n,
        delta2: within[1] as f64 / n,
        delta3: within[2] as f64 / n,
    })
}

/// Consecutive poses relative to the first one (which is the identity).
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySnippet {
    poses: Vec<Pose>,
}

pub const SNIPPET_LEN: usize = 3;

impl TrajectorySnippet {
    pub fn new(poses: Vec<Pose>) -> Result<Self> {
        let Some(first) = poses.first() else {
            return Err(Error::EmptyInput);
        };
        let id = Pose::identity();
        if (first.rotation - id.rotation).norm() > 1e-9 || first.translation.norm() > 1e-9 {
            return Err(Error::InvalidConfig("snippet must start at the identity".into()));
        }
        Ok(Self { poses })
    }

    /// Re-expresses absolute (camera-to-world) poses relative to the first.
    pub fn from_absolute(poses: &[Pose]) -> Result<Self> {
        let Some(first) = poses.first() else {
            return Err(Error::EmptyInput);
        };
        let inv = first.inverse();
        let mut rel: Vec<Pose> = poses.iter().map(|p| inv.compose(p)).collect();
        rel[0] = Pose::identity();
        Self::new(rel)
    }

    /// Sliding windows of `len` frames (stride 1) over an absolute trajectory.
    pub fn windows(poses: &[Pose], len: usize) -> Result<Vec<Self>> {
        if len == 0 || poses.len() < len {
            return Err(Error::EmptyInput);
        }
        poses.windows(len).map(Self::from_absolute).collect()
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }
}

/// Mean translation error after least-squares scale alignment of `pred`.
pub fn ate(pred: &TrajectorySnippet, gt: &TrajectorySnippet) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::ShapeMismatch {
            expected: gt.len(),
            got: pred.len(),
        });
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (p, g) in pred.poses.iter().zip(&gt.poses) {
        num += p.translation.dot(&g.translation);
        den += p.translation.norm_squared();
    }
    if den < 1e-18 {
        return Err(Error::DegenerateScale);
    }
    let s = num / den;
    let total: f64 = pred
        .poses
        .iter()
        .zip(&gt.poses)
        .map(|(p, g)| (p.translation * s - g.translation).norm())
        .sum();
    Ok(total / pred.len() as f64)
}

/// Angle between translation directions, in radians.
pub fn atde(pred_t: &Vector3<f64>, gt_t: &Vector3<f64>) -> Result<f64> {
    let (np, ng) = (pred_t.norm(), gt_t.norm());
    if np <= 1e-12 || ng <= 1e-12 {
        return Err(Error::ZeroTranslation);
    }
    Ok((pred_t.dot(gt_t) / (np * ng)).clamp(-1.0, 1.0).acos())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseMetrics {
    pub ate_mean: f64,
    pub ate_std: f64,
    pub atde_mean: f64,
    pub atde_std: f64,
}

impl PoseMetrics {
    pub const CSV_HEADER: &'static str = "ate_mean,ate_std,atde_mean,atde_std";

    pub fn csv_row(&self) -> String {
        format!("{:e},{:e},{:e},{:e}", self.ate_mean, self.ate_std, self.atde_mean, self.atde_std)
    }
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-snippet ATE and per-frame ATDE (frame i vs frame 0 of each snippet),
/// summarized as mean ± population std. Frames where either translation is
/// zero carry no direction and are skipped for ATDE.
pub fn snippet_metrics(pred: &[TrajectorySnippet], gt: &[TrajectorySnippet]) -> Result<PoseMetrics> {
    if pred.is_empty() {
        return Err(Error::EmptyInput);
    }
    if pred.len() != gt.len() {
        return Err(Error::ShapeMismatch {
            expected: gt.len(),
            got: pred.len(),
        });
    }
    let mut ates = Vec::with_capacity(pred.len());
    let mut atdes = Vec::new();
    for (p, g) in pred.iter().zip(gt) {
        ates.push(ate(p, g)?);
        for (pp, gp) in p.poses.iter().zip(&g.poses).skip(1) {
            match atde(&pp.translation, &gp.translation) {
                Ok(v) => atdes.push(v),
                Err(Error::ZeroTranslation) => {}
                Err(e) => return Err(e),
            }
        }
    }
    let (ate_mean, ate_std) = mean_std(&ates);
    let (atde_mean, atde_std) = if atdes.is_empty() { (0.0, 0.0) } else { mean_std(&atdes) };
    Ok(PoseMetrics {
        ate_mean,
        ate_std,
        atde_mean,
        atde_std,
    })
}
