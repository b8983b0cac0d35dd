use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::solver::five_point;
use crate::error::{Error, Result};
use crate::geometry::{Correspondence, EssentialMatrix};

/// First-order geometric error
/// `(q̃ᵀEp̃)² / ((Ep̃)₁² + (Ep̃)₂² + (Eᵀq̃)₁² + (Eᵀq̃)₂²)`, or `+∞` when
/// both points sit at their epipoles.
pub fn sampson_error(e: &EssentialMatrix, c: &Correspondence) -> f64 {
    let m = e.matrix();
    let p = c.target.homogeneous();
    let q = c.source.homogeneous();
    let ep = m * p;
    let etq = m.transpose() * q;
    let num = q.dot(&ep);
    let den = ep.x * ep.x + ep.y * ep.y + etq.x * etq.x + etq.y * etq.y;
    if den < 1e-18 {
        return f64::INFINITY;
    }
    num * num / den
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacConfig {
    /// Inlier threshold on the Sampson error (normalized units, squared).
    pub threshold: f64,
    pub max_iters: usize,
    pub seed: u64,
    /// When set, stop once the standard RANSAC bound for this confidence is
    /// met. Trials are processed in fixed-size batches, so the stopping point
    /// still depends only on the seed.
    pub adaptive_confidence: Option<f64>,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            threshold: 1e-6,
            max_iters: 1000,
            seed: 0,
            adaptive_confidence: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacResult {
    pub best: EssentialMatrix,
    pub inlier_mask: Vec<bool>,
    pub inlier_count: usize,
    pub iterations_run: usize,
}

impl RansacResult {
    pub fn inliers<'a>(&'a self, cs: &'a [Correspondence]) -> impl Iterator<Item = &'a Correspondence> {
        cs.iter()
            .zip(self.inlier_mask.iter())
            .filter(|(_, &m)| m)
            .map(|(c, _)| c)
    }
}

#[derive(Debug, Clone, Copy)]
struct Scored {
    e: EssentialMatrix,
    count: usize,
    total: f64,
}

impl Scored {
    fn beats(&self, other: &Scored) -> bool {
        self.count > other.count || (self.count == other.count && self.total < other.total)
    }
}

fn score(e: &EssentialMatrix, cs: &[Correspondence], threshold: f64) -> Scored {
    let mut count = 0;
    let mut total = 0.0;
    for c in cs {
        let err = sampson_error(e, c);
        if err < threshold {
            count += 1;
            total += err;
        }
    }
    Scored { e: *e, count, total }
}

/// Best model of one trial; the sample is drawn from a per-trial stream so the
/// result does not depend on evaluation order.
fn run_trial(cs: &[Correspondence], cfg: &RansacConfig, trial: u64) -> Option<Scored> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(trial);
    let idx = index::sample(&mut rng, cs.len(), 5);
    let sample: [Correspondence; 5] = std::array::from_fn(|i| cs[idx.index(i)]);
    let candidates = five_point(&sample).ok()?;
    let mut best: Option<Scored> = None;
    for e in candidates.iter() {
        let s = score(e, cs, cfg.threshold);
        if best.as_ref().is_none_or(|b| s.beats(b)) {
            best = Some(s);
        }
    }
    best
}

pub fn ransac_essential(
    cs: &[Correspondence],
    threshold: f64,
    max_iters: usize,
    seed: u64,
) -> Result<RansacResult> {
    ransac_essential_with(
        cs,
        &RansacConfig {
            threshold,
            max_iters,
            seed,
            adaptive_confidence: None,
        },
    )
}

const ADAPTIVE_BATCH: usize = 64;

pub fn ransac_essential_with(cs: &[Correspondence], cfg: &RansacConfig) -> Result<RansacResult> {
    if cs.len() < 5 {
        return Err(Error::InsufficientCorrespondences {
            needed: 5,
            got: cs.len(),
        });
    }
    if !(cfg.threshold > 0.0) {
        return Err(Error::InvalidConfig("RANSAC threshold must be positive".into()));
    }
    let batch = if cfg.adaptive_confidence.is_some() {
        ADAPTIVE_BATCH
    } else {
        cfg.max_iters.max(1)
    };

    let mut best: Option<Scored> = None;
    let mut done = 0usize;
    let mut needed = cfg.max_iters;
    while done < needed.min(cfg.max_iters) {
        let end = (done + batch).min(cfg.max_iters);
        let results: Vec<Option<Scored>> = (done..end)
            .into_par_iter()
            .map(|t| run_trial(cs, cfg, t as u64))
            .collect();
        for s in results.into_iter().flatten() {
            if best.as_ref().is_none_or(|b| s.beats(b)) {
                best = Some(s);
            }
        }
        done = end;
        if let (Some(conf), Some(b)) = (cfg.adaptive_confidence, best.as_ref()) {
            let ratio = b.count as f64 / cs.len() as f64;
            let p_good = ratio.powi(5);
            if p_good >= 1.0 - 1e-15 {
                needed = done;
            } else if p_good > 0.0 {
                let n = ((1.0 - conf).ln() / (1.0 - p_good).ln()).ceil();
                if n.is_finite() && (n as usize) < needed {
                    needed = n as usize;
                }
            }
        }
    }

    let best = best.ok_or(Error::NoModelFound)?;
    if best.count < 5 {
        return Err(Error::NoModelFound);
    }
    let inlier_mask: Vec<bool> = cs
        .iter()
        .map(|c| sampson_error(&best.e, c) < cfg.threshold)
        .collect();
    Ok(RansacResult {
        best: best.e,
        inlier_count: inlier_mask.iter().filter(|&&m| m).count(),
        inlier_mask,
        iterations_run: done,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{epipolar_line, essential_from_pose, NormalizedCoord, Pose};
    use nalgebra::Vector3;

    #[test]
    fn sampson_examples() {
        // Symmetric geometry: pure x translation, points on the optical axis row.
        let pose = Pose::from_axis_angle(Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0));
        let e = essential_from_pose(&pose).unwrap();
        let x = Vector3::new(0.2, 0.1, 4.0);
        let p = NormalizedCoord::from_ray(&x).unwrap();
        let q = NormalizedCoord::from_ray(&pose.transform_point(&x)).unwrap();
        let exact = Correspondence::new(p, q).unwrap();
        assert!(sampson_error(&e, &exact) < 1e-18);

        // oracle: perpendicular point-to-line distance δ; with |Ep̃|₁₂ = |Eᵀq̃|₁₂
        // the first-order error is δ²/2
        let l = epipolar_line(&e, &p);
        let n = Vector3::new(l.x, l.y, 0.0).normalize();
        for delta in [1e-5, 1e-4, 1e-3] {
            let off = NormalizedCoord::new(q.x + delta * n.x, q.y + delta * n.y);
            let c = Correspondence::new(p, off).unwrap();
            let dist = (off.homogeneous().dot(&l)).abs() / (l.x * l.x + l.y * l.y).sqrt();
            assert!((dist - delta).abs() < 1e-12);
            let s = sampson_error(&e, &c);
            assert!((s - delta * delta / 2.0).abs() < 1e-9 * delta * delta, "{s}");
        }

        let e7 = EssentialMatrix::from_matrix(e.matrix() * 7.0).unwrap();
        let c = Correspondence::new(p, NormalizedCoord::new(q.x, q.y + 0.01)).unwrap();
        assert_eq!(sampson_error(&e, &c), sampson_error(&e7, &c));
    }

    #[test]
    fn sampson_infinite_at_epipoles() {
        let pose = Pose::from_axis_angle(Vector3::zeros(), Vector3::new(0.0, 0.0, 1.0));
        let e = essential_from_pose(&pose).unwrap();
        let c = Correspondence::new(NormalizedCoord::new(0.0, 0.0), NormalizedCoord::new(0.0, 0.0)).unwrap();
        assert_eq!(sampson_error(&e, &c), f64::INFINITY);
    }

    #[test]
    fn too_few_correspondences() {
        let c = Correspondence::new(NormalizedCoord::new(0.0, 0.0), NormalizedCoord::new(0.1, 0.0)).unwrap();
        assert_eq!(
            ransac_essential(&[c; 4], 1e-6, 10, 0),
            Err(Error::InsufficientCorrespondences { needed: 5, got: 4 })
        );
    }
}
