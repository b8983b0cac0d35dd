//! Analytic gradients against central finite differences of the total loss.
//!
//! The loss is only piecewise smooth: bilinear cells, `|r|`, `|e|` and the
//! smoothness `|∂d|` all have kinks, and validity can flip. For every checked
//! component the pixels whose kink signature differs between the base point
//! and either finite-difference point are dropped from all three evaluations,
//! so both sides differentiate the same smooth piece.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::field::ScalarField;
use crate::geometry::{Pose, PoseTangent};
use crate::losses::{evaluate, EvalOptions, Evaluation, LossConfig, PreparedPair};
use crate::synth::{presets, render_pair, RenderedPair};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckConfig {
    pub step: f64,
    pub tolerance: f64,
    pub depth_pixels: usize,
    /// Depth pixels whose projection lies within this distance of an integer
    /// grid line (at any scale) are not selected.
    pub grid_margin: f64,
    /// Denominator floor of the relative error.
    pub abs_floor: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-4,
            depth_pixels: 20,
            grid_margin: 1e-3,
            abs_floor: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentCheck {
    pub label: String,
    pub analytic: f64,
    pub numeric: f64,
    /// `|a − n| / max(|a|, |n|, abs_floor)`.
    pub rel_error: f64,
    /// Pixels (summed over scales) dropped as kink crossings.
    pub excluded: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub pose: Vec<ComponentCheck>,
    pub depth: Vec<ComponentCheck>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.pose.iter().chain(&self.depth).all(|c| c.passed)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.pose.iter().chain(&self.depth).map(|c| c.rel_error).fold(0.0, f64::max)
    }

    pub fn components(&self) -> impl Iterator<Item = &ComponentCheck> {
        self.pose.iter().chain(&self.depth)
    }
}

fn with_signatures(pair: &PreparedPair, inv: &ScalarField, pose: &Pose, cfg: &LossConfig) -> Result<Evaluation> {
    evaluate(
        pair,
        inv,
        pose,
        cfg,
        &EvalOptions {
            signatures: true,
            ..Default::default()
        },
    )
}

fn stable_pixels(a: &Evaluation, b: &Evaluation, c: &Evaluation) -> (Vec<Vec<bool>>, usize) {
    let mut excluded = 0;
    let include = (0..a.signatures.len())
        .map(|l| {
            (0..a.signatures[l].len())
                .map(|i| {
                    let same = a.signatures[l][i] == b.signatures[l][i] && a.signatures[l][i] == c.signatures[l][i];
                    excluded += usize::from(!same);
                    same
                })
                .collect()
        })
        .collect();
    (include, excluded)
}

#[allow(clippy::too_many_arguments)]
fn check_component(
    label: String,
    pair: &PreparedPair,
    cfg: &LossConfig,
    gc: &GradcheckConfig,
    base: (&ScalarField, &Pose),
    plus: (&ScalarField, &Pose),
    minus: (&ScalarField, &Pose),
    analytic_of: impl Fn(&Evaluation) -> f64,
) -> Result<ComponentCheck> {
    let sb = with_signatures(pair, base.0, base.1, cfg)?;
    let sp = with_signatures(pair, plus.0, plus.1, cfg)?;
    let sm = with_signatures(pair, minus.0, minus.1, cfg)?;
    let (include, excluded) = stable_pixels(&sb, &sp, &sm);
    let opts = EvalOptions {
        gradient: false,
        include: Some(&include),
        signatures: false,
    };
    let lp = evaluate(pair, plus.0, plus.1, cfg, &opts)?.report.total;
    let lm = evaluate(pair, minus.0, minus.1, cfg, &opts)?.report.total;
    let numeric = (lp - lm) / (2.0 * gc.step);
    let grad = evaluate(
        pair,
        base.0,
        base.1,
        cfg,
        &EvalOptions {
            gradient: true,
            ..opts
        },
    )?;
    let analytic = analytic_of(&grad);
    let rel_error = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(gc.abs_floor);
    Ok(ComponentCheck {
        label,
        analytic,
        numeric,
        rel_error,
        excluded,
        passed: rel_error < gc.tolerance,
    })
}

fn near_grid(v: f64, margin: f64) -> bool {
    (v - v.round()).abs() < margin
}

/// Checks all six pose components and `gc.depth_pixels` randomly drawn
/// inverse-depth pixels (drawn deterministically from `seed`).
pub fn gradcheck(
    pair: &PreparedPair,
    inv_depth: &ScalarField,
    pose: &Pose,
    cfg: &LossConfig,
    gc: &GradcheckConfig,
    seed: u64,
) -> Result<GradcheckReport> {
    let h = gc.step;
    let mut pose_checks = Vec::with_capacity(6);
    for j in 0..6 {
        let mut e = [0.0; 6];
        e[j] = h;
        let pp = pose.retract_left(&PoseTangent(e));
        e[j] = -h;
        let pm = pose.retract_left(&PoseTangent(e));
        let label = ["omega_x", "omega_y", "omega_z", "v_x", "v_y", "v_z"][j].to_string();
        pose_checks.push(check_component(
            label,
            pair,
            cfg,
            gc,
            (inv_depth, pose),
            (inv_depth, &pp),
            (inv_depth, &pm),
            |ev| ev.d_pose[j],
        )?);
    }

    let base = with_signatures(pair, inv_depth, pose, cfg)?;
    let (w, hgt) = (inv_depth.width(), inv_depth.height());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut depth_checks = Vec::with_capacity(gc.depth_pixels);
    let mut tried = 0;
    while depth_checks.len() < gc.depth_pixels && tried < 200 * gc.depth_pixels.max(1) {
        tried += 1;
        let (x, y) = (rng.random_range(0..w), rng.random_range(0..hgt));
        let mut ok = base.signatures[0][y * w + x] & 1 == 1;
        for l in 0..pair.num_scales() {
            let (lw, lh) = pair.level_size(l);
            let (lx, ly) = (x >> l, y >> l);
            if lx >= lw || ly >= lh {
                continue;
            }
            let (px, py) = base.projections[l][ly * lw + lx];
            if px.is_finite() && (near_grid(px, gc.grid_margin) || near_grid(py, gc.grid_margin)) {
                ok = false;
            }
        }
        if !ok {
            continue;
        }
        let i = y * w + x;
        let mut dp = inv_depth.clone();
        dp.data_mut()[i] += h;
        let mut dm = inv_depth.clone();
        dm.data_mut()[i] -= h;
        depth_checks.push(check_component(
            format!("inv_depth({x},{y})"),
            pair,
            cfg,
            gc,
            (inv_depth, pose),
            (&dp, pose),
            (&dm, pose),
            |ev| ev.d_inv_depth.as_ref().unwrap()[i],
        )?);
    }
    Ok(GradcheckReport {
        pose: pose_checks,
        depth: depth_checks,
    })
}

/// A random smooth scene, evaluation pose `exp(ξ)·pose_gt` with ‖ω‖, ‖v‖ ≤ 0.2,
/// and a smoothly modulated ground-truth inverse depth. Odd seeds enable the
/// epipolar weight.
pub fn random_configuration(seed: u64, size: usize) -> Result<(RenderedPair, ScalarField, Pose, LossConfig)> {
    let pair = render_pair(&presets::smooth_random(size, seed))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let mut ball = |r: f64| {
        let v = Vector3::<f64>::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm().max(1e-12);
        v * (r * rng.random_range(0.0..1.0) / n)
    };
    let xi = PoseTangent::from_parts(ball(0.2), ball(0.2));
    let pose = pair.normalized_pose().retract_left(&xi);
    let (fx, fy, ph): (f64, f64, f64) = (rng.random_range(0.05..0.2), rng.random_range(0.05..0.2), rng.random_range(0.0..std::f64::consts::TAU));
    let amp = rng.random_range(0.02..0.1);
    let scale = rng.random_range(0.5..2.0);
    let w = pair.inv_depth.width();
    let inv = ScalarField::from_fn(w, pair.inv_depth.height(), |x, y| {
        scale * pair.inv_depth.get(x, y, 0) * (1.0 + amp * (fx * x as f64 + fy * y as f64 + ph).sin())
    });
    let mut cfg = LossConfig::default();
    if seed % 2 == 1 {
        cfg = cfg.with_epipolar(pair.essential.expect("scene has translation"));
    }
    Ok((pair, inv, pose, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_configurations_pass() {
        for seed in 0..4 {
            let (pair, inv, pose, cfg) = random_configuration(seed, 32).unwrap();
            let prepared = PreparedPair::new(&pair.target, &pair.source, &pair.spec.intrinsics, cfg.num_scales).unwrap();
            let report = gradcheck(&prepared, &inv, &pose, &cfg, &GradcheckConfig::default(), seed).unwrap();
            assert_eq!(report.pose.len(), 6);
            assert_eq!(report.depth.len(), 20);
            for c in report.components() {
                assert!(c.passed, "seed {seed}: {c:?}");
            }
        }
    }
}
