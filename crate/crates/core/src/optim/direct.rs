use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::{CameraIntrinsics, Pose, PoseTangent};
use crate::losses::{evaluate, EvalOptions, LossConfig, LossReport, PreparedPair};

use super::adam::{adam_update, AdamConfig, AdamState};
use super::gradients::loss_and_gradients_prepared;

/// Raw inverse depth is projected onto this interval after every update.
pub const INV_DEPTH_RANGE: (f64, f64) = (1e-3, 1e3);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizeOptions {
    pub iters: usize,
    pub adam: AdamConfig,
    pub optimize_pose: bool,
    pub optimize_depth: bool,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            iters: 500,
            adam: AdamConfig::default(),
            optimize_pose: true,
            optimize_depth: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeResult {
    pub inv_depth: ScalarField,
    pub pose: Pose,
    /// Loss before each update.
    pub trace: Vec<LossReport>,
    /// Loss at the returned state.
    pub final_report: LossReport,
}

/// Adam on (left pose perturbation, raw inverse depth): each iteration
/// evaluates the loss and gradients, then applies `pose ← exp(δξ)·pose` and
/// `d ← clamp(d + δd)`.
pub fn optimize_direct(
    target: &ScalarField,
    source: &ScalarField,
    init_inv_depth: &ScalarField,
    init_pose: &Pose,
    k: &CameraIntrinsics,
    config: &LossConfig,
    options: &OptimizeOptions,
) -> Result<OptimizeResult> {
    if options.iters == 0 {
        return Err(Error::InvalidConfig("iters must be ≥ 1".into()));
    }
    config.validate()?;
    let pair = PreparedPair::new(target, source, k, config.num_scales)?;
    let npx = init_inv_depth.len_pixels();
    let mut state = AdamState::new(options.adam, 6 + npx);
    let mut pose = *init_pose;
    let mut inv = init_inv_depth.map(|v| v.clamp(INV_DEPTH_RANGE.0, INV_DEPTH_RANGE.1));
    let mut trace = Vec::with_capacity(options.iters);
    let mut grads = vec![0.0; 6 + npx];
    for _ in 0..options.iters {
        let g = loss_and_gradients_prepared(&pair, &inv, &pose, config)?;
        if !g.loss.is_finite() {
            return Err(Error::NonFinite(format!("loss at iteration {}", trace.len())));
        }
        if options.optimize_pose {
            grads[..6].copy_from_slice(&g.d_pose.0);
        }
        if options.optimize_depth {
            grads[6..].copy_from_slice(g.d_inv_depth.data());
        }
        trace.push(g.report);
        let (next, update) = adam_update(&state, &grads)?;
        state = next;
        if options.optimize_pose {
            let delta = PoseTangent(update[..6].try_into().unwrap());
            pose = pose.retract_left(&delta);
        }
        if options.optimize_depth {
            for (d, u) in inv.data_mut().iter_mut().zip(&update[6..]) {
                *d = (*d + u).clamp(INV_DEPTH_RANGE.0, INV_DEPTH_RANGE.1);
            }
        }
    }
    let final_report = evaluate(&pair, &inv, &pose, config, &EvalOptions::default())?.report;
    Ok(OptimizeResult {
        inv_depth: inv,
        pose,
        trace,
        final_report,
    })
}

/// `iter,total,warp_0..,smooth_0..` with one row per iteration.
pub fn format_trace_csv(trace: &[LossReport]) -> String {
    let mut s = String::from("iter,total");
    let levels = trace.first().map_or(0, |r| r.warp_loss.len());
    for l in 0..levels {
        let _ = write!(s, ",warp_{l}");
    }
    for l in 0..levels {
        let _ = write!(s, ",smooth_{l}");
    }
    s.push('\n');
    for (i, r) in trace.iter().enumerate() {
        let _ = write!(s, "{i},{:e}", r.total);
        for v in r.warp_loss.iter().chain(&r.smooth_loss) {
            let _ = write!(s, ",{v:e}");
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{presets, render_pair};

    #[test]
    fn stationary_at_zero_residual() {
        let spec = presets::smooth_random(32, 1);
        let pair = render_pair(&spec).unwrap();
        let inv = ScalarField::filled(32, 32, 1, 0.2);
        let opts = OptimizeOptions {
            iters: 20,
            ..Default::default()
        };
        let r = optimize_direct(&pair.target, &pair.target, &inv, &Pose::identity(), &spec.intrinsics, &LossConfig::default(), &opts).unwrap();
        assert!(r.trace.iter().all(|t| t.total == 0.0));
        assert_eq!(r.pose, Pose::identity());
        assert_eq!(r.inv_depth, inv);
    }

    #[test]
    fn descent_with_small_learning_rate() {
        let spec = presets::smooth_random(64, 2);
        let pair = render_pair(&spec).unwrap();
        let gt = pair.normalized_pose();
        let init = gt.retract_left(&PoseTangent([0.01, -0.02, 0.005, 0.05, 0.03, -0.02]));
        let opts = OptimizeOptions {
            iters: 50,
            adam: AdamConfig {
                learning_rate: 1e-4,
                ..Default::default()
            },
            optimize_depth: false,
            ..Default::default()
        };
        let r = optimize_direct(&pair.target, &pair.source, &pair.inv_depth, &init, &spec.intrinsics, &LossConfig::default(), &opts).unwrap();
        for w in r.trace.windows(2) {
            assert!(w[1].total <= w[0].total + 1e-9, "{} -> {}", w[0].total, w[1].total);
        }
        assert!(r.final_report.total < r.trace[0].total);
    }

    #[test]
    fn trace_csv_layout() {
        let spec = presets::smooth_random(32, 3);
        let pair = render_pair(&spec).unwrap();
        let opts = OptimizeOptions {
            iters: 3,
            ..Default::default()
        };
        let r = optimize_direct(&pair.target, &pair.source, &pair.inv_depth, &Pose::identity(), &spec.intrinsics, &LossConfig::default().with_scales(2), &opts).unwrap();
        let csv = format_trace_csv(&r.trace);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "iter,total,warp_0,warp_1,smooth_0,smooth_1");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0,"));
        assert!(optimize_direct(&pair.target, &pair.source, &pair.inv_depth, &Pose::identity(), &spec.intrinsics, &LossConfig::default(), &OptimizeOptions { iters: 0, ..Default::default() }).is_err());
    }
}
