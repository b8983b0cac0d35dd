use crate::error::Result;
use crate::field::ScalarField;
use crate::geometry::{CameraIntrinsics, Pose, PoseTangent};
use crate::losses::{evaluate, EvalOptions, LossConfig, LossReport, PreparedPair};

#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    /// Gradient w.r.t. a left perturbation `exp(δξ)·pose` at δξ = 0.
    pub d_pose: PoseTangent,
    /// Gradient w.r.t. the raw (unnormalized) inverse depth.
    pub d_inv_depth: ScalarField,
    pub loss: f64,
    pub report: LossReport,
}

/// Total loss at `(inv_depth, pose)` and its gradients.
///
/// Differentiates bilinear sampling (right-limit cell at integer
/// coordinates), the projection with its perspective division, the epipolar
/// weight (unless `config.stop_grad_weight`), the smoothness term, the
/// per-scale unit-mean normalization and the box pyramid.
pub fn loss_and_gradients(
    target: &ScalarField,
    source: &ScalarField,
    inv_depth: &ScalarField,
    pose: &Pose,
    k: &CameraIntrinsics,
    config: &LossConfig,
) -> Result<GradientBundle> {
    config.validate()?;
    let pair = PreparedPair::new(target, source, k, config.num_scales)?;
    loss_and_gradients_prepared(&pair, inv_depth, pose, config)
}

/// As [`loss_and_gradients`], reusing precomputed image pyramids.
pub fn loss_and_gradients_prepared(
    pair: &PreparedPair,
    inv_depth: &ScalarField,
    pose: &Pose,
    config: &LossConfig,
) -> Result<GradientBundle> {
    let ev = evaluate(
        pair,
        inv_depth,
        pose,
        config,
        &EvalOptions {
            gradient: true,
            ..Default::default()
        },
    )?;
    let d = ev.d_inv_depth.expect("gradient requested");
    Ok(GradientBundle {
        d_pose: PoseTangent(ev.d_pose),
        d_inv_depth: ScalarField::new(inv_depth.width(), inv_depth.height(), 1, d)?,
        loss: ev.report.total,
        report: ev.report,
    })
}
