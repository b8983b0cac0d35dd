//! Command-line front end: `fivepoint`, `optimize`, `eval`, `gradcheck`,
//! `synth`. Every subcommand prints its full flag set first and writes only
//! inside `--out`; outputs are byte-identical for identical flags.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::eval::{depth_metrics, snippet_metrics, DepthMetrics, PoseMetrics, TrajectorySnippet, SNIPPET_LEN};
use crate::field::{ScalarField, ValidityMask};
use crate::fivepoint::{decompose_essential, RansacConfig};
use crate::geometry::{CameraIntrinsics, EssentialMatrix, Pose};
use crate::io;
use crate::losses::{epipolar_weight_map, normalize_inverse_depth, LossConfig, PreparedPair};
use crate::optim::{
    format_trace_csv, gradcheck, optimize_direct, random_configuration, AdamConfig, GradcheckConfig, OptimizeOptions,
};
use crate::synth::{format_scene_header, parse_scene, render_pair, sample_correspondences};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "epivo", version, about = "Epipolar-weighted direct depth and pose estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Essential matrix and relative pose from correspondences (RANSAC + five-point).
    Fivepoint(FivepointArgs),
    /// Direct optimization of pose and inverse depth for one image pair.
    Optimize(OptimizeArgs),
    /// Depth and trajectory metrics.
    Eval(EvalArgs),
    /// Analytic vs finite-difference gradients on random synthetic scenes.
    Gradcheck(GradcheckArgs),
    /// Render a synthetic scene with exact ground truth.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct RansacArgs {
    /// Sampson-error inlier threshold (normalized units squared).
    #[arg(long, default_value_t = 1e-6)]
    pub ransac_thresh: f64,
    #[arg(long, default_value_t = 1000)]
    pub ransac_iters: usize,
}

#[derive(Debug, Args)]
pub struct FivepointArgs {
    /// CSV `tx,ty,sx,sy` in normalized coordinates.
    #[arg(long)]
    pub corr: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub ransac: RansacArgs,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    /// Target image (PGM/PPM, or PFM).
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long)]
    pub source: PathBuf,
    /// One line `fx fy cx cy`.
    #[arg(long)]
    pub intrinsics: PathBuf,
    /// Initial depth map (PFM).
    #[arg(long, conflicts_with = "flat_depth", required_unless_present = "flat_depth")]
    pub depth_init: Option<PathBuf>,
    /// Initialize with a constant depth instead of a depth map.
    #[arg(long)]
    pub flat_depth: Option<f64>,
    /// Correspondences for the essential matrix (required unless --no-epi).
    #[arg(long, required_unless_present = "no_epi")]
    pub corr: Option<PathBuf>,
    /// Initial target→source pose (one KITTI line); identity by default.
    #[arg(long)]
    pub pose_init: Option<PathBuf>,
    /// Ground-truth pose (one KITTI line) for the summary errors.
    #[arg(long)]
    pub gt_pose: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 500)]
    pub iters: usize,
    #[arg(long, default_value_t = 2e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 4)]
    pub scales: usize,
    #[arg(long, default_value_t = 0.2)]
    pub lambda_smooth: f64,
    #[command(flatten)]
    pub ransac: RansacArgs,
    /// Disable the epipolar weight.
    #[arg(long)]
    pub no_epi: bool,
    /// Do not differentiate through the epipolar weight.
    #[arg(long)]
    pub stop_grad_weight: bool,
    /// Keep the inverse depth at its initial value.
    #[arg(long)]
    pub fix_depth: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, requires = "gt_depth")]
    pub pred_depth: Option<PathBuf>,
    #[arg(long, requires = "pred_depth")]
    pub gt_depth: Option<PathBuf>,
    /// PGM validity mask for the ground truth (0 = missing); default: gt > 0.
    #[arg(long)]
    pub gt_mask: Option<PathBuf>,
    /// Depth cap in meters; repeat to report several caps.
    #[arg(long, default_values_t = vec![80.0])]
    pub cap: Vec<f64>,
    /// Predicted trajectory, KITTI pose lines.
    #[arg(long, requires = "gt_poses")]
    pub pred_poses: Option<PathBuf>,
    #[arg(long, requires = "pred_poses")]
    pub gt_poses: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of random configurations.
    #[arg(long, default_value_t = 50)]
    pub configs: u64,
    /// Image size of the random scenes.
    #[arg(long, default_value_t = 32)]
    pub size: usize,
    /// Optional directory for a per-component CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scene description (`key = value` lines).
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Seed for correspondence sampling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub corr_count: usize,
    /// Noise std of sampled source coordinates (normalized units).
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.0)]
    pub outliers: f64,
}

/// Failure of a subcommand with its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io(_) | Error::Parse(_) => EXIT_IO,
            _ => EXIT_FAILURE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn io_failure(e: Error) -> Failure {
    Failure {
        code: EXIT_IO,
        message: e.to_string(),
    }
}

fn require_file(path: &Path) -> CmdResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_IO,
            message: format!("input file not found: {}", path.display()),
        })
    }
}

fn prepare_out(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir).map_err(|e| io_failure(e.into()))
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> CmdResult {
    fs::write(dir.join(name), contents).map_err(|e| io_failure(e.into()))
}

fn read_single_pose(path: &Path) -> Result<Pose> {
    let poses = io::parse_poses(&io::read_text(path)?)?;
    match poses.as_slice() {
        [p] => Ok(*p),
        _ => Err(Error::Parse(format!("{}: expected exactly one pose line", path.display()))),
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var("EPIVO_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // fails harmlessly if the pool was already built in this process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) => {
            let _ = e.print();
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> i32 {
    configure_threads();
    println!("# epivo {:?}", cli.command);
    let result = match &cli.command {
        Command::Fivepoint(a) => cmd_fivepoint(a),
        Command::Optimize(a) => cmd_optimize(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn estimate_essential(corr: &Path, ransac: &RansacArgs, seed: u64) -> std::result::Result<(Vec<crate::geometry::Correspondence>, crate::fivepoint::RansacResult), Failure> {
    let cs = io::parse_correspondences(&io::read_text(corr).map_err(io_failure)?).map_err(io_failure)?;
    if cs.len() < 5 {
        return Err(Failure {
            code: EXIT_FAILURE,
            message: format!("insufficient correspondences: need at least 5, got {}", cs.len()),
        });
    }
    let cfg = RansacConfig {
        threshold: ransac.ransac_thresh,
        max_iters: ransac.ransac_iters,
        seed,
        adaptive_confidence: None,
    };
    let r = crate::fivepoint::ransac_essential_with(&cs, &cfg)?;
    Ok((cs, r))
}

fn cmd_fivepoint(a: &FivepointArgs) -> CmdResult {
    require_file(&a.corr)?;
    prepare_out(&a.out)?;
    let (cs, r) = estimate_essential(&a.corr, &a.ransac, a.seed)?;
    let inliers: Vec<_> = r.inliers(&cs).copied().collect();
    let hyp = decompose_essential(&r.best, &inliers)?;
    let mut mask = String::from("index,inlier\n");
    for (i, &m) in r.inlier_mask.iter().enumerate() {
        let _ = writeln!(mask, "{i},{}", u8::from(m));
    }
    write(&a.out, "essential.txt", io::format_essential(&r.best))?;
    write(&a.out, "inliers.csv", mask)?;
    write(&a.out, "pose.txt", io::format_pose(&hyp.pose))?;
    let t = hyp.pose.translation;
    println!(
        "inliers {}/{}  t_dir [{:.6} {:.6} {:.6}]  rotation {:.6} deg",
        r.inlier_count,
        cs.len(),
        t.x,
        t.y,
        t.z,
        hyp.pose.rotation_angle().to_degrees()
    );
    Ok(())
}

fn cmd_optimize(a: &OptimizeArgs) -> CmdResult {
    for p in [Some(&a.target), Some(&a.source), Some(&a.intrinsics), a.depth_init.as_ref(), a.corr.as_ref(), a.pose_init.as_ref(), a.gt_pose.as_ref()]
        .into_iter()
        .flatten()
    {
        require_file(p)?;
    }
    prepare_out(&a.out)?;
    let target = io::read_field(&a.target).map_err(io_failure)?;
    let source = io::read_field(&a.source).map_err(io_failure)?;
    let k = io::parse_intrinsics(&io::read_text(&a.intrinsics).map_err(io_failure)?).map_err(io_failure)?;
    let init_inv = match (&a.depth_init, a.flat_depth) {
        (Some(p), _) => {
            let d = io::read_pfm(p).map_err(io_failure)?;
            if d.data().iter().any(|&v| !(v > 0.0)) {
                return Err(Error::InvalidField("initial depth must be positive".into()).into());
            }
            d.map(|v| 1.0 / v)
        }
        (None, Some(v)) if v > 0.0 => ScalarField::filled(target.width(), target.height(), 1, 1.0 / v),
        _ => return Err(Error::InvalidConfig("--flat-depth must be positive".into()).into()),
    };
    let init_pose = match &a.pose_init {
        Some(p) => read_single_pose(p).map_err(io_failure)?,
        None => Pose::identity(),
    };
    let gt_pose = a.gt_pose.as_deref().map(read_single_pose).transpose().map_err(io_failure)?;

    let mut e: Option<EssentialMatrix> = None;
    if !a.no_epi {
        let corr = a.corr.as_ref().expect("required unless --no-epi");
        let (_, r) = estimate_essential(corr, &a.ransac, a.seed)?;
        println!("five-point: {} inliers", r.inlier_count);
        e = Some(r.best);
    }
    let mut cfg = LossConfig {
        num_scales: a.scales,
        lambda_smooth_base: a.lambda_smooth,
        stop_grad_weight: a.stop_grad_weight,
        ..Default::default()
    };
    if let Some(e) = e {
        cfg = cfg.with_epipolar(e);
    }
    let opts = OptimizeOptions {
        iters: a.iters,
        adam: AdamConfig {
            learning_rate: a.lr,
            ..Default::default()
        },
        optimize_pose: true,
        optimize_depth: !a.fix_depth,
    };
    let res = optimize_direct(&target, &source, &init_inv, &init_pose, &k, &cfg, &opts)?;

    write(&a.out, "pose.txt", io::format_pose(&res.pose))?;
    io::write_pfm(&a.out.join("inv_depth.pfm"), &res.inv_depth).map_err(io_failure)?;
    write(&a.out, "trace.csv", format_trace_csv(&res.trace))?;
    if let Some(e) = e {
        let n = normalize_inverse_depth(&res.inv_depth)?;
        let wmap = epipolar_weight_map(&n.map(|v| 1.0 / v), &k, &res.pose, &e);
        io::write_pfm(&a.out.join("weights.pfm"), &wmap).map_err(io_failure)?;
        io::write_image(&a.out.join("weights.pgm"), &io::heatmap(&wmap)).map_err(io_failure)?;
        write(&a.out, "essential.txt", io::format_essential(&e))?;
    }
    let mut summary = format!(
        "iterations {} initial_loss {:e} final_loss {:e}",
        res.trace.len(),
        res.trace[0].total,
        res.final_report.total
    );
    if let Some(gt) = gt_pose {
        match crate::eval::atde(&res.pose.translation, &gt.translation) {
            Ok(v) => {
                let _ = write!(summary, " atde_rad {v:e}");
            }
            Err(_) => summary.push_str(" atde_rad undefined"),
        }
        let _ = write!(summary, " rotation_error_deg {:e}", res.pose.rotation_distance(&gt).to_degrees());
    }
    println!("{summary}");
    summary.push('\n');
    write(&a.out, "summary.txt", summary)
}

fn cmd_eval(a: &EvalArgs) -> CmdResult {
    if a.pred_depth.is_none() && a.pred_poses.is_none() {
        return Err(Error::InvalidConfig("nothing to evaluate: pass --pred-depth/--gt-depth and/or --pred-poses/--gt-poses".into()).into());
    }
    for p in [a.pred_depth.as_ref(), a.gt_depth.as_ref(), a.gt_mask.as_ref(), a.pred_poses.as_ref(), a.gt_poses.as_ref()]
        .into_iter()
        .flatten()
    {
        require_file(p)?;
    }
    prepare_out(&a.out)?;
    let mut table = String::new();
    if let (Some(pp), Some(gp)) = (&a.pred_depth, &a.gt_depth) {
        let pred = io::read_field(pp).map_err(io_failure)?;
        let gt = io::read_field(gp).map_err(io_failure)?;
        let mask = match &a.gt_mask {
            Some(m) => io::read_mask(m).map_err(io_failure)?,
            None => ValidityMask::new(gt.width(), gt.height(), gt.data().iter().map(|&v| v > 0.0).collect())?,
        };
        let mut csv = format!("cap,{}\n", DepthMetrics::CSV_HEADER);
        let _ = writeln!(
            table,
            "{:>6} {:>10} {:>10} {:>10} {:>10} {:>8} {:>8} {:>8}",
            "cap", "abs_rel", "sq_rel", "rmse", "rmse_log", "d<1.25", "d<1.25^2", "d<1.25^3"
        );
        for &cap in &a.cap {
            let m = depth_metrics(&pred, &gt, &mask, cap)?;
            let _ = writeln!(csv, "{cap},{}", m.csv_row());
            let _ = writeln!(
                table,
                "{:>6} {:>10.6} {:>10.6} {:>10.6} {:>10.6} {:>8.4} {:>8.4} {:>8.4}",
                cap, m.abs_rel, m.sq_rel, m.rmse, m.rmse_log, m.delta1, m.delta2, m.delta3
            );
        }
        write(&a.out, "depth_metrics.csv", csv)?;
    }
    if let (Some(pp), Some(gp)) = (&a.pred_poses, &a.gt_poses) {
        let pred = io::parse_poses(&io::read_text(pp).map_err(io_failure)?).map_err(io_failure)?;
        let gt = io::parse_poses(&io::read_text(gp).map_err(io_failure)?).map_err(io_failure)?;
        if pred.len() != gt.len() {
            return Err(Error::ShapeMismatch {
                expected: gt.len(),
                got: pred.len(),
            }
            .into());
        }
        let m: PoseMetrics = snippet_metrics(
            &TrajectorySnippet::windows(&pred, SNIPPET_LEN)?,
            &TrajectorySnippet::windows(&gt, SNIPPET_LEN)?,
        )?;
        write(&a.out, "pose_metrics.csv", format!("{}\n{}\n", PoseMetrics::CSV_HEADER, m.csv_row()))?;
        let _ = writeln!(
            table,
            "ATE {:.6} ± {:.6} m   ATDE {:.6} ± {:.6} rad",
            m.ate_mean, m.ate_std, m.atde_mean, m.atde_std
        );
    }
    print!("{table}");
    write(&a.out, "metrics.txt", table)
}

fn cmd_gradcheck(a: &GradcheckArgs) -> CmdResult {
    if let Some(out) = &a.out {
        prepare_out(out)?;
    }
    let gc = GradcheckConfig::default();
    let mut csv = String::from("config,component,analytic,numeric,rel_error,excluded,passed\n");
    let mut worst: Vec<(String, f64, bool)> = Vec::new();
    let mut all_pass = true;
    for i in 0..a.configs {
        let seed = a.seed.wrapping_add(i);
        let (pair, inv, pose, cfg) = random_configuration(seed, a.size)?;
        let prepared = PreparedPair::new(&pair.target, &pair.source, &pair.spec.intrinsics, cfg.num_scales)?;
        let report = gradcheck(&prepared, &inv, &pose, &cfg, &gc, seed)?;
        for c in report.components() {
            let _ = writeln!(
                csv,
                "{seed},{},{:e},{:e},{:e},{},{}",
                c.label,
                c.analytic,
                c.numeric,
                c.rel_error,
                c.excluded,
                u8::from(c.passed)
            );
            // pose components by name; depth pixels pooled
            let key = if c.label.starts_with("inv_depth") { "inv_depth".to_string() } else { c.label.clone() };
            match worst.iter_mut().find(|w| w.0 == key) {
                Some(w) => {
                    w.1 = w.1.max(c.rel_error);
                    w.2 &= c.passed;
                }
                None => worst.push((key, c.rel_error, c.passed)),
            }
            all_pass &= c.passed;
        }
    }
    for (name, err, ok) in &worst {
        println!("{name:<10} max rel error {err:.3e}  {}", if *ok { "PASS" } else { "FAIL" });
    }
    if let Some(out) = &a.out {
        write(out, "gradcheck.csv", csv)?;
    }
    if all_pass {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_FAILURE,
            message: "gradient check failed".into(),
        })
    }
}

fn cmd_synth(a: &SynthArgs) -> CmdResult {
    require_file(&a.scene)?;
    prepare_out(&a.out)?;
    let spec = parse_scene(&io::read_text(&a.scene).map_err(io_failure)?).map_err(io_failure)?;
    let pair = render_pair(&spec)?;
    let samples = sample_correspondences(&pair, a.corr_count, a.noise, a.outliers, a.seed)?;
    let out = &a.out;
    let wr = |name: &str, f: &ScalarField| -> CmdResult { io::write_field(&out.join(name), f).map_err(io_failure) };
    wr("target.pgm", &pair.target)?;
    wr("source.pgm", &pair.source)?;
    wr("target.pfm", &pair.target)?;
    wr("source.pfm", &pair.source)?;
    wr("depth.pfm", &pair.depth)?;
    wr("inv_depth.pfm", &pair.inv_depth)?;
    io::write_mask(&out.join("mover_mask.pgm"), &pair.mover_mask).map_err(io_failure)?;
    write(out, "intrinsics.txt", io::format_intrinsics(&spec.intrinsics))?;
    write(out, "pose.txt", io::format_pose(&spec.pose))?;
    write(out, "pose_normalized.txt", io::format_pose(&pair.normalized_pose()))?;
    if let Some(e) = &pair.essential {
        write(out, "essential.txt", io::format_essential(e))?;
    }
    write(out, "correspondences.csv", io::format_correspondences(&samples.correspondences))?;
    let mut labels = String::from("index,inlier\n");
    for (i, &l) in samples.is_inlier.iter().enumerate() {
        let _ = writeln!(labels, "{i},{}", u8::from(l));
    }
    write(out, "labels.csv", labels)?;
    write(out, "scene.txt", format_scene_header(&spec))?;
    println!(
        "rendered {}x{}; depth range [{:.4}, {:.4}]; {} mover pixels; {} correspondences",
        spec.width,
        spec.height,
        pair.depth.min_max().0,
        pair.depth.min_max().1,
        pair.mover_mask.count(),
        samples.correspondences.len()
    );
    Ok(())
}

/// Intrinsics shared by tests and examples that need a quick default camera.
pub fn default_intrinsics(width: usize, height: usize) -> CameraIntrinsics {
    crate::synth::SceneSpec::default_intrinsics(width, height)
}
