//! Analytic ground truth: textured planar scenes rendered from known
//! intrinsics and relative pose, with exact depth, dense correspondences and
//! an optional independently moving patch.
//!
//! Every pixel is a point sample of a procedural texture evaluated at the
//! exact ray-plane intersection, so target and source are photometrically
//! consistent by construction and depth carries no sampling error.
//!
//! # Scene text format
//!
//! `key = value` lines; `#` starts a comment. Vectors are space separated.
//!
//! ```text
//! width = 64
//! height = 64
//! intrinsics = 51.2 51.2 31.5 31.5        # fx fy cx cy (default: 0.8·width, centered)
//! rotation = 0.0 0.02 0.0                 # axis-angle of the target→source pose, radians
//! translation = 0.3 0.0 0.05
//! seed = 7
//! plane = 0 0.2 0.98 6.0 smooth           # normal (normalized on load), offset, texture
//! plane = 0 0 1 20 stripes
//! mover = 0 0 4 0.8 edge 0 0 0 0 0.3 0    # center, half size, texture, motion ω, motion t
//! ```
//!
//! Planes satisfy `n·X = offset` in the target camera frame. Textures are
//! `smooth` (≤ 8 band-limited sinusoids), `stripes` (one sinusoid, repeated
//! pattern) or `edge` (one sharp, oblique albedo step);
//! their parameters are drawn from `seed`.

use std::fmt::Write as _;

use nalgebra::Vector3;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::field::{ScalarField, ValidityMask};
use crate::geometry::{
    essential_from_pose, CameraIntrinsics, Correspondence, EssentialMatrix, NormalizedCoord,
    PixelCoord, Pose,
};
use crate::warp::{in_bounds, project_pixel, BEHIND_CAMERA_EPS};

/// `amplitude · sin(2π(f_u·u + f_v·v) + phase)`, frequencies in cycles per meter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sinusoid {
    pub amplitude: f64,
    pub freq_u: f64,
    pub freq_v: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TextureKind {
    Smooth,
    Stripes,
    Edge,
}

impl TextureKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "smooth" => Ok(Self::Smooth),
            "stripes" => Ok(Self::Stripes),
            "edge" => Ok(Self::Edge),
            _ => Err(Error::Parse(format!("unknown texture {s:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Smooth => "smooth",
            Self::Stripes => "stripes",
            Self::Edge => "edge",
        }
    }
}

/// Albedo step: `contrast` is added where `normal·(u, v) > position`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepEdge {
    pub normal: [f64; 2],
    pub position: f64,
    pub contrast: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Texture {
    pub kind: TextureKind,
    pub base: f64,
    pub sinusoids: Vec<Sinusoid>,
    pub step: Option<StepEdge>,
}

impl Texture {
    /// Draws texture parameters. `px_per_meter` converts the cycles-per-pixel
    /// budget into world frequencies at the plane's reference depth.
    pub fn generate(kind: TextureKind, px_per_meter: f64, rng: &mut impl Rng) -> Self {
        let random_wave = |f_lo: f64, f_hi: f64, amp: f64, rng: &mut dyn rand::RngCore| {
            let f = rng.random_range(f_lo..f_hi) * px_per_meter;
            let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
            Sinusoid {
                amplitude: amp,
                freq_u: f * angle.cos(),
                freq_v: f * angle.sin(),
                phase: rng.random_range(0.0..std::f64::consts::TAU),
            }
        };
        match kind {
            TextureKind::Smooth => {
                let n = 6;
                let sinusoids = (0..n)
                    .map(|_| {
                        let amp = rng.random_range(0.03..0.07);
                        random_wave(0.01, 0.04, amp, rng)
                    })
                    .collect();
                Self {
                    kind,
                    base: 0.5,
                    sinusoids,
                    step: None,
                }
            }
            TextureKind::Stripes => Self {
                kind,
                base: 0.5,
                sinusoids: vec![Sinusoid {
                    amplitude: 0.35,
                    freq_u: px_per_meter / 6.0,
                    freq_v: 0.0,
                    phase: rng.random_range(0.0..std::f64::consts::TAU),
                }],
                step: None,
            },
            TextureKind::Edge => {
                // oblique to both texture axes, so the edge crosses pixels at
                // all sub-pixel phases
                let angle: f64 = rng.random_range(0.45..1.1);
                Self {
                    kind,
                    base: 0.45,
                    sinusoids: Vec::new(),
                    step: Some(StepEdge {
                        normal: [angle.cos(), angle.sin()],
                        position: rng.random_range(-0.1..0.1) * 64.0 / px_per_meter,
                        contrast: 0.1,
                    }),
                }
            }
        }
    }

    pub fn eval(&self, u: f64, v: f64) -> f64 {
        let mut s = self.base;
        for w in &self.sinusoids {
            s += w.amplitude * (std::f64::consts::TAU * (w.freq_u * u + w.freq_v * v) + w.phase).sin();
        }
        if let Some(step) = self.step {
            if step.normal[0] * u + step.normal[1] * v > step.position {
                s += step.contrast;
            }
        }
        s.clamp(0.0, 1.0)
    }
}

/// Plane `n·X = offset` (target camera frame) with an in-plane texture.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub normal: Vector3<f64>,
    pub offset: f64,
    pub texture: Texture,
}

impl Plane {
    fn axes(&self) -> (Vector3<f64>, Vector3<f64>) {
        plane_axes(&self.normal)
    }
}

fn plane_axes(n: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if n.y.abs() < 0.9 {
        Vector3::new(0.0, 1.0, 0.0)
    } else {
        Vector3::new(1.0, 0.0, 0.0)
    };
    let u = n.cross(&helper).normalize();
    (u, n.cross(&u))
}

/// Square textured patch with its own rigid motion between the two frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Mover {
    /// Patch center in the target frame; the patch faces the target camera.
    pub center: Vector3<f64>,
    pub half_size: f64,
    pub texture: Texture,
    /// Motion of the patch, expressed in the target camera frame.
    pub motion: Pose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub intrinsics: CameraIntrinsics,
    /// Target → source camera motion.
    pub pose: Pose,
    pub planes: Vec<Plane>,
    pub mover: Option<Mover>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Surface {
    Plane(usize),
    Mover,
}

#[derive(Debug, Clone)]
pub struct RenderedPair {
    pub spec: SceneSpec,
    pub target: ScalarField,
    pub source: ScalarField,
    pub depth: ScalarField,
    pub inv_depth: ScalarField,
    /// Two channels: exact source pixel coordinate of every target pixel.
    pub correspondences: ScalarField,
    /// True where the corresponding point lies in front of the source camera.
    pub correspondence_valid: ValidityMask,
    /// `None` for a pure rotation.
    pub essential: Option<EssentialMatrix>,
    pub mover_mask: ValidityMask,
}

impl RenderedPair {
    /// Ground-truth pose in the scale fixed by unit-mean inverse depth:
    /// the losses rescale depth by `mean(inv_depth)`, so translation scales alike.
    pub fn normalized_pose(&self) -> Pose {
        self.spec.pose.with_translation_scaled(self.inv_depth.mean())
    }
}

impl SceneSpec {
    /// Same scene observed at `factor`× the resolution (textures unchanged).
    pub fn rescaled(&self, factor: usize) -> SceneSpec {
        SceneSpec {
            width: self.width * factor,
            height: self.height * factor,
            intrinsics: self.intrinsics.rescaled(factor as f64),
            ..self.clone()
        }
    }

    pub fn default_intrinsics(width: usize, height: usize) -> CameraIntrinsics {
        let f = 0.8 * width as f64;
        CameraIntrinsics {
            fx: f,
            fy: f,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
        }
    }

    fn check(&self) -> Result<()> {
        if self.width < 2 || self.height < 2 {
            return Err(Error::InvalidScene("image must be at least 2x2".into()));
        }
        if self.planes.is_empty() && self.mover.is_none() {
            return Err(Error::InvalidScene("scene has no surfaces".into()));
        }
        for p in &self.planes {
            if (p.normal.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidScene("plane normals must be unit length".into()));
            }
        }
        Ok(())
    }

    fn placement(&self, s: Surface) -> Pose {
        match (s, &self.mover) {
            (Surface::Mover, Some(m)) => self.pose.compose(&m.motion),
            _ => self.pose,
        }
    }

    /// Nearest surface hit by the ray `origin + λ·dir` in target-time
    /// coordinates of each surface. `placement` maps those coordinates into
    /// the viewing camera frame.
    fn intersect(&self, dir_cam: &Vector3<f64>, view_from_surface: impl Fn(Surface) -> Pose) -> Option<(f64, Surface, Vector3<f64>)> {
        let mut best: Option<(f64, Surface, Vector3<f64>)> = None;
        let mut consider = |lambda: f64, s: Surface, point: Vector3<f64>| {
            if lambda > 1e-9 && best.as_ref().is_none_or(|b| lambda < b.0) {
                best = Some((lambda, s, point));
            }
        };
        for (i, plane) in self.planes.iter().enumerate() {
            let t = view_from_surface(Surface::Plane(i));
            let rt = t.rotation.transpose();
            let o = -(rt * t.translation);
            let d = rt * dir_cam;
            let denom = plane.normal.dot(&d);
            if denom.abs() < 1e-15 {
                continue;
            }
            let lambda = (plane.offset - plane.normal.dot(&o)) / denom;
            consider(lambda, Surface::Plane(i), o + d * lambda);
        }
        if let Some(m) = &self.mover {
            let t = view_from_surface(Surface::Mover);
            let rt = t.rotation.transpose();
            let o = -(rt * t.translation);
            let d = rt * dir_cam;
            let n = Vector3::new(0.0, 0.0, 1.0);
            let denom = n.dot(&d);
            if denom.abs() > 1e-15 {
                let lambda = (m.center.z - n.dot(&o)) / denom;
                let y = o + d * lambda;
                if (y.x - m.center.x).abs() <= m.half_size && (y.y - m.center.y).abs() <= m.half_size {
                    consider(lambda, Surface::Mover, y);
                }
            }
        }
        best
    }

    fn shade(&self, s: Surface, point: &Vector3<f64>) -> f64 {
        match s {
            Surface::Plane(i) => {
                let p = &self.planes[i];
                let (ua, va) = p.axes();
                let rel = point - p.normal * p.offset;
                p.texture.eval(rel.dot(&ua), rel.dot(&va))
            }
            Surface::Mover => {
                let m = self.mover.as_ref().unwrap();
                let rel = point - m.center;
                // texture axes of a patch facing the camera
                m.texture.eval(-rel.x, -rel.y)
            }
        }
    }

    fn ray(&self, x: f64, y: f64) -> Vector3<f64> {
        let k = &self.intrinsics;
        Vector3::new((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0)
    }

    /// Exact correspondence for a (possibly sub-pixel) target position.
    /// Returns the surface, target depth and the source-frame point.
    fn trace_target(&self, x: f64, y: f64) -> Option<(Surface, f64, Vector3<f64>)> {
        let dir = self.ray(x, y);
        let (lambda, s, point) = self.intersect(&dir, |_| Pose::identity())?;
        let xs = self.placement(s).transform_point(&point);
        Some((s, lambda, xs))
    }
}

pub fn render_pair(spec: &SceneSpec) -> Result<RenderedPair> {
    spec.check()?;
    let (w, h) = (spec.width, spec.height);
    let k = spec.intrinsics;
    let n = w * h;
    let mut target = Vec::with_capacity(n);
    let mut depth = Vec::with_capacity(n);
    let mut corr = Vec::with_capacity(2 * n);
    let mut corr_valid = Vec::with_capacity(n);
    let mut mover = Vec::with_capacity(n);
    for y in 0..h {
        for x in 0..w {
            let dir = spec.ray(x as f64, y as f64);
            let (lambda, s, point) = spec
                .intersect(&dir, |_| Pose::identity())
                .ok_or_else(|| Error::InvalidScene(format!("target ray ({x},{y}) misses every surface")))?;
            target.push(spec.shade(s, &point));
            depth.push(lambda);
            mover.push(s == Surface::Mover);
            let (px, ok) = match s {
                Surface::Plane(_) => {
                    let pr = project_pixel(PixelCoord::new(x as f64, y as f64), lambda, &k, &spec.pose);
                    (pr.pixel, pr.in_front())
                }
                Surface::Mover => {
                    let xs = spec.placement(s).transform_point(&point);
                    let q = k.denormalize(NormalizedCoord::new(xs.x / xs.z, xs.y / xs.z));
                    (q, xs.z > BEHIND_CAMERA_EPS)
                }
            };
            corr.push(if ok { px.x } else { 0.0 });
            corr.push(if ok { px.y } else { 0.0 });
            corr_valid.push(ok);
        }
    }
    let mut source = Vec::with_capacity(n);
    for y in 0..h {
        for x in 0..w {
            let dir = spec.ray(x as f64, y as f64);
            let (_, s, point) = spec
                .intersect(&dir, |s| spec.placement(s))
                .ok_or_else(|| Error::InvalidScene(format!("source ray ({x},{y}) misses every surface")))?;
            source.push(spec.shade(s, &point));
        }
    }
    let inv: Vec<f64> = depth.iter().map(|d| 1.0 / d).collect();
    let essential = match essential_from_pose(&spec.pose) {
        Ok(e) => Some(e),
        Err(Error::ZeroTranslation) => None,
        Err(e) => return Err(e),
    };
    Ok(RenderedPair {
        spec: spec.clone(),
        target: ScalarField::new(w, h, 1, target)?,
        source: ScalarField::new(w, h, 1, source)?,
        depth: ScalarField::new(w, h, 1, depth)?,
        inv_depth: ScalarField::new(w, h, 1, inv)?,
        correspondences: ScalarField::new(w, h, 2, corr)?,
        correspondence_valid: ValidityMask::new(w, h, corr_valid)?,
        essential,
        mover_mask: ValidityMask::new(w, h, mover)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledCorrespondences {
    pub correspondences: Vec<Correspondence>,
    pub is_inlier: Vec<bool>,
}

/// Draws `n` static-scene correspondences at random sub-pixel target positions,
/// adds isotropic Gaussian noise of std `noise_sigma` (normalized units) to the
/// source coordinates and replaces `⌊outlier_frac·n⌋` of them with uniform
/// draws over the source image.
pub fn sample_correspondences(
    pair: &RenderedPair,
    n: usize,
    noise_sigma: f64,
    outlier_frac: f64,
    seed: u64,
) -> Result<SampledCorrespondences> {
    if n < 5 {
        return Err(Error::InvalidConfig("need at least 5 correspondences".into()));
    }
    if !(0.0..1.0).contains(&outlier_frac) || !(noise_sigma >= 0.0) {
        return Err(Error::InvalidConfig("outlier fraction must be in [0, 1) and noise ≥ 0".into()));
    }
    let spec = &pair.spec;
    let (w, h) = (spec.width, spec.height);
    let k = spec.intrinsics;
    let static_pixels: Vec<usize> = (0..w * h)
        .filter(|&i| {
            let (x, y) = (i % w, i / w);
            !pair.mover_mask.get(x, y)
                && pair.correspondence_valid.get(x, y)
                && in_bounds(w, h, pair.correspondences.get(x, y, 0), pair.correspondences.get(x, y, 1))
        })
        .collect();
    if static_pixels.len() < n {
        return Err(Error::InsufficientStaticArea {
            available: static_pixels.len(),
            requested: n,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while out.len() < n {
        attempts += 1;
        if attempts > 100 * n + 1000 {
            return Err(Error::InsufficientStaticArea {
                available: out.len(),
                requested: n,
            });
        }
        let i = static_pixels[rng.random_range(0..static_pixels.len())];
        let x = (i % w) as f64 + rng.random_range(-0.5..0.5);
        let y = (i / w) as f64 + rng.random_range(-0.5..0.5);
        let Some((surface, _, xs)) = spec.trace_target(x, y) else {
            continue;
        };
        if surface == Surface::Mover || xs.z <= BEHIND_CAMERA_EPS {
            continue;
        }
        let src = NormalizedCoord::new(xs.x / xs.z, xs.y / xs.z);
        let q = k.denormalize(src);
        if !in_bounds(w, h, q.x, q.y) {
            continue;
        }
        let tgt = k.normalize(PixelCoord::new(x, y));
        let src = if noise_sigma > 0.0 {
            NormalizedCoord::new(src.x + noise.sample(&mut rng), src.y + noise.sample(&mut rng))
        } else {
            src
        };
        out.push(Correspondence::new(tgt, src)?);
    }
    let n_out = (outlier_frac * n as f64).floor() as usize;
    let mut is_inlier = vec![true; n];
    let lo = k.normalize(PixelCoord::new(0.0, 0.0));
    let hi = k.normalize(PixelCoord::new((w - 1) as f64, (h - 1) as f64));
    for i in index::sample(&mut rng, n, n_out).into_iter() {
        is_inlier[i] = false;
        out[i].source = NormalizedCoord::new(rng.random_range(lo.x..hi.x), rng.random_range(lo.y..hi.y));
    }
    Ok(SampledCorrespondences {
        correspondences: out,
        is_inlier,
    })
}

fn parse_vec(s: &[&str], what: &str) -> Result<Vec<f64>> {
    s.iter()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::Parse(format!("{what}: invalid number {t:?}")))
        })
        .collect()
}

struct PendingSurface {
    values: Vec<f64>,
    texture: TextureKind,
}

/// Parses the scene text format (see module docs). Texture parameters are
/// drawn deterministically from `seed` in declaration order.
pub fn parse_scene(text: &str) -> Result<SceneSpec> {
    let mut width = None;
    let mut height = None;
    let mut intr = None;
    let mut rotation = Vector3::zeros();
    let mut translation = Vector3::zeros();
    let mut seed = 0u64;
    let mut planes = Vec::new();
    let mut mover = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", lineno + 1)))?;
        let key = key.trim();
        let toks: Vec<&str> = value.split_whitespace().collect();
        let want = |n: usize| -> Result<()> {
            if toks.len() != n {
                Err(Error::Parse(format!("line {}: {key} expects {n} values", lineno + 1)))
            } else {
                Ok(())
            }
        };
        match key {
            "width" | "height" => {
                want(1)?;
                let v: usize = toks[0]
                    .parse()
                    .map_err(|_| Error::Parse(format!("line {}: invalid {key}", lineno + 1)))?;
                if key == "width" {
                    width = Some(v)
                } else {
                    height = Some(v)
                }
            }
            "intrinsics" => {
                want(4)?;
                let v = parse_vec(&toks, key)?;
                intr = Some(CameraIntrinsics::new(v[0], v[1], v[2], v[3])?);
            }
            "rotation" | "translation" => {
                want(3)?;
                let v = parse_vec(&toks, key)?;
                let vec = Vector3::new(v[0], v[1], v[2]);
                if key == "rotation" {
                    rotation = vec
                } else {
                    translation = vec
                }
            }
            "seed" => {
                want(1)?;
                seed = toks[0]
                    .parse()
                    .map_err(|_| Error::Parse(format!("line {}: invalid seed", lineno + 1)))?;
            }
            "plane" => {
                want(5)?;
                planes.push(PendingSurface {
                    values: parse_vec(&toks[..4], key)?,
                    texture: TextureKind::parse(toks[4])?,
                });
            }
            "mover" => {
                want(11)?;
                let mut values = parse_vec(&toks[..4], key)?;
                values.extend(parse_vec(&toks[5..], key)?);
                mover = Some(PendingSurface {
                    values,
                    texture: TextureKind::parse(toks[4])?,
                });
            }
            _ => return Err(Error::Parse(format!("line {}: unknown key {key:?}", lineno + 1))),
        }
    }
    let width = width.ok_or_else(|| Error::Parse("missing width".into()))?;
    let height = height.ok_or_else(|| Error::Parse("missing height".into()))?;
    let intrinsics = intr.unwrap_or_else(|| SceneSpec::default_intrinsics(width, height));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let planes = planes
        .into_iter()
        .map(|p| {
            let n = Vector3::new(p.values[0], p.values[1], p.values[2]);
            if n.norm() < 1e-12 {
                return Err(Error::InvalidScene("zero plane normal".into()));
            }
            let n = n.normalize();
            let offset = p.values[3];
            // reference depth: where the optical axis meets the plane
            let z_ref = (offset / n.z).abs().max(1e-6);
            Ok(Plane {
                normal: n,
                offset,
                texture: Texture::generate(p.texture, intrinsics.fx / z_ref, &mut rng),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mover = mover.map(|m| {
        let v = &m.values;
        let center = Vector3::new(v[0], v[1], v[2]);
        Mover {
            center,
            half_size: v[3],
            texture: Texture::generate(m.texture, intrinsics.fx / center.z.abs().max(1e-6), &mut rng),
            motion: Pose::from_axis_angle(Vector3::new(v[4], v[5], v[6]), Vector3::new(v[7], v[8], v[9])),
        }
    });
    Ok(SceneSpec {
        width,
        height,
        intrinsics,
        pose: Pose::from_axis_angle(rotation, translation),
        planes,
        mover,
        seed,
    })
}

/// Ready-made scenes used by the tests, the acceptance suite and the CLI.
pub mod presets {
    use super::*;

    fn pose_from(omega: [f64; 3], t: [f64; 3]) -> Pose {
        Pose::from_axis_angle(Vector3::from(omega), Vector3::from(t))
    }

    fn plane(normal: [f64; 3], offset: f64, kind: TextureKind, fx: f64, rng: &mut ChaCha8Rng) -> Plane {
        let n = Vector3::from(normal).normalize();
        let z_ref = offset / n.z;
        Plane {
            normal: n,
            offset,
            texture: Texture::generate(kind, fx / z_ref, rng),
        }
    }

    /// Single fronto-parallel plane.
    pub fn fronto_parallel(size: usize, depth: f64, kind: TextureKind, pose: Pose, seed: u64) -> SceneSpec {
        let k = SceneSpec::default_intrinsics(size, size);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SceneSpec {
            width: size,
            height: size,
            intrinsics: k,
            pose,
            planes: vec![plane([0.0, 0.0, 1.0], depth, kind, k.fx, &mut rng)],
            mover: None,
            seed,
        }
    }

    /// Slanted textured plane with a sharp albedo edge, seen under a generic
    /// small motion: the plane pair used for the warping oracle.
    pub fn plane_pair(size: usize, seed: u64) -> SceneSpec {
        let k = SceneSpec::default_intrinsics(size, size);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SceneSpec {
            width: size,
            height: size,
            intrinsics: k,
            pose: pose_from([0.01, -0.02, 0.005], [0.25, 0.04, 0.05]),
            planes: vec![plane([0.15, -0.25, 1.0], 5.0, TextureKind::Edge, k.fx, &mut rng)],
            mover: None,
            seed,
        }
    }

    /// Slanted smooth plane under a wide-baseline generic motion, seen with a
    /// 90° field of view: the scene for direct pose optimization. The wide
    /// field of view separates rotation from translation.
    pub fn optimization_pair(size: usize, seed: u64) -> SceneSpec {
        let f = 0.5 * size as f64;
        let c = (size as f64 - 1.0) / 2.0;
        let k = CameraIntrinsics { fx: f, fy: f, cx: c, cy: c };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SceneSpec {
            width: size,
            height: size,
            intrinsics: k,
            pose: pose_from([0.02, -0.03, 0.01], [1.0, -0.2, 0.3]),
            planes: vec![plane([0.3, -0.45, 1.0], 4.0, TextureKind::Smooth, k.fx, &mut rng)],
            mover: None,
            seed,
        }
    }

    /// Randomized smooth scene for gradient checks.
    pub fn smooth_random(size: usize, seed: u64) -> SceneSpec {
        let k = SceneSpec::default_intrinsics(size, size);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let n = [rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), 1.0];
        let depth = rng.random_range(3.0..6.0);
        let pose = pose_from(
            [rng.random_range(-0.02..0.02), rng.random_range(-0.02..0.02), rng.random_range(-0.02..0.02)],
            [rng.random_range(-0.3..0.3), rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)],
        );
        SceneSpec {
            width: size,
            height: size,
            intrinsics: k,
            pose,
            planes: vec![plane(n, depth, TextureKind::Smooth, k.fx, &mut rng)],
            mover: None,
            seed,
        }
    }

    /// Repeated stripe pattern on a fronto-parallel plane: the photometric loss
    /// is flat along the stripes and aliased across them.
    pub fn repeated_texture(size: usize, seed: u64) -> SceneSpec {
        let k = SceneSpec::default_intrinsics(size, size);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SceneSpec {
            width: size,
            height: size,
            intrinsics: k,
            pose: pose_from([0.0, 0.01, 0.0], [0.3, 0.0, 0.05]),
            planes: vec![plane([0.0, 0.0, 1.0], 4.0, TextureKind::Stripes, k.fx, &mut rng)],
            mover: None,
            seed,
        }
    }

    /// Static background plus a square patch moving with its own motion.
    /// `mover_shift` is the patch's vertical displacement in normalized units.
    pub fn mover_scene(size: usize, seed: u64, mover_shift: f64) -> SceneSpec {
        let k = SceneSpec::default_intrinsics(size, size);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bg = plane([0.05, -0.1, 1.0], 8.0, TextureKind::Smooth, k.fx, &mut rng);
        let depth = rng.random_range(3.5..4.5);
        let center = Vector3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), depth);
        let texture = Texture::generate(TextureKind::Smooth, k.fx / depth, &mut rng);
        SceneSpec {
            width: size,
            height: size,
            intrinsics: k,
            pose: pose_from([0.0, 0.01, 0.0], [0.3, 0.0, 0.05]),
            planes: vec![bg],
            mover: Some(Mover {
                center,
                half_size: 0.8,
                texture,
                motion: pose_from([0.0, 0.0, 0.0], [0.0, mover_shift * depth, 0.0]),
            }),
            seed,
        }
    }
}

/// Writes a scene spec in the text format. Texture parameters are not
/// serialized; they are re-drawn from the seed on load.
pub fn format_scene_header(spec: &SceneSpec) -> String {
    let mut s = String::new();
    let k = &spec.intrinsics;
    let _ = writeln!(s, "width = {}", spec.width);
    let _ = writeln!(s, "height = {}", spec.height);
    let _ = writeln!(s, "intrinsics = {} {} {} {}", k.fx, k.fy, k.cx, k.cy);
    let w = crate::geometry::so3_log(&spec.pose.rotation);
    let t = spec.pose.translation;
    let _ = writeln!(s, "rotation = {} {} {}", w.x, w.y, w.z);
    let _ = writeln!(s, "translation = {} {} {}", t.x, t.y, t.z);
    let _ = writeln!(s, "seed = {}", spec.seed);
    for p in &spec.planes {
        let _ = writeln!(
            s,
            "plane = {} {} {} {} {}",
            p.normal.x,
            p.normal.y,
            p.normal.z,
            p.offset,
            p.texture.kind.name()
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::epipolar_residual;
    use crate::warp::warp_image;

    #[test]
    fn identity_pose_reproduces_target() {
        let spec = presets::fronto_parallel(32, 10.0, TextureKind::Smooth, Pose::identity(), 1);
        let pair = render_pair(&spec).unwrap();
        assert_eq!(pair.target, pair.source);
        assert!(pair.depth.data().iter().all(|&d| (d - 10.0).abs() < 1e-12));
        assert!(pair.essential.is_none());
    }

    #[test]
    fn translation_disparity() {
        let b = 0.5;
        let spec = presets::fronto_parallel(32, 10.0, TextureKind::Smooth, Pose::from_axis_angle(Vector3::zeros(), Vector3::new(b, 0.0, 0.0)), 2);
        let pair = render_pair(&spec).unwrap();
        let fx = spec.intrinsics.fx;
        for y in 0..32 {
            for x in 0..32 {
                let qx = pair.correspondences.get(x, y, 0);
                let qy = pair.correspondences.get(x, y, 1);
                assert!((qx - x as f64 - fx * b / 10.0).abs() < 1e-10);
                assert!((qy - y as f64).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn slanted_plane_depth() {
        let mut spec = presets::fronto_parallel(32, 6.0, TextureKind::Smooth, Pose::identity(), 3);
        let n = Vector3::new(0.0, 0.2, 0.98).normalize();
        spec.planes[0].normal = n;
        let pair = render_pair(&spec).unwrap();
        let k = spec.intrinsics;
        for y in 0..32 {
            for x in 0..32 {
                // oracle: symbolic ray-plane intersection Z = offset / (n·K⁻¹p)
                let r = Vector3::new((x as f64 - k.cx) / k.fx, (y as f64 - k.cy) / k.fy, 1.0);
                let z = 6.0 / n.dot(&r);
                assert!((pair.depth.get(x, y, 0) - z).abs() < 1e-12 * z);
            }
        }
        // inverse depth is affine in the row index and constant along rows
        let inv = &pair.inv_depth;
        let step = inv.get(0, 1, 0) - inv.get(0, 0, 0);
        for y in 1..32 {
            assert!((inv.get(5, y, 0) - inv.get(5, y - 1, 0) - step).abs() < 1e-12);
            assert!((inv.get(0, y, 0) - inv.get(31, y, 0)).abs() < 1e-12);
        }
    }

    #[test]
    fn correspondences_reproject_and_satisfy_epipolar_constraint() {
        let spec = presets::mover_scene(48, 4, 0.08);
        let pair = render_pair(&spec).unwrap();
        let e = pair.essential.unwrap();
        assert_eq!(e, essential_from_pose(&spec.pose).unwrap());
        let k = spec.intrinsics;
        for y in 0..48 {
            for x in 0..48 {
                if pair.mover_mask.get(x, y) || !pair.correspondence_valid.get(x, y) {
                    continue;
                }
                let pr = project_pixel(PixelCoord::new(x as f64, y as f64), pair.depth.get(x, y, 0), &k, &spec.pose);
                let q = PixelCoord::new(pair.correspondences.get(x, y, 0), pair.correspondences.get(x, y, 1));
                assert!((pr.pixel.x - q.x).abs() < 1e-10 && (pr.pixel.y - q.y).abs() < 1e-10);
                let c = Correspondence::new(k.normalize(PixelCoord::new(x as f64, y as f64)), k.normalize(q)).unwrap();
                assert!(epipolar_residual(&c, &e) < 1e-10);
            }
        }
        assert!(pair.mover_mask.count() > 0);
    }

    #[test]
    fn sampled_correspondences() {
        let spec = presets::mover_scene(64, 5, 0.08);
        let pair = render_pair(&spec).unwrap();
        let e = pair.essential.unwrap();
        let s = sample_correspondences(&pair, 100, 0.0, 0.0, 1).unwrap();
        assert_eq!(s.correspondences.len(), 100);
        assert!(s.correspondences.iter().all(|c| epipolar_residual(c, &e) < 1e-10));
        let s2 = sample_correspondences(&pair, 100, 0.0, 0.0, 1).unwrap();
        assert_eq!(s, s2);

        let s = sample_correspondences(&pair, 100, 0.0, 0.2, 2).unwrap();
        assert_eq!(s.is_inlier.iter().filter(|&&v| !v).count(), 20);

        // band frozen from a direct Sampson evaluation at σ = 1e-3
        let s = sample_correspondences(&pair, 200, 1e-3, 0.0, 3).unwrap();
        let mut errs: Vec<f64> = s.correspondences.iter().map(|c| crate::fivepoint::sampson_error(&e, c)).collect();
        errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = errs[100];
        assert!((1e-7..1e-5).contains(&median), "median Sampson {median:e}");

        assert!(matches!(
            sample_correspondences(&pair, 100_000, 0.0, 0.0, 1),
            Err(Error::InsufficientStaticArea { .. })
        ));
    }

    #[test]
    fn ground_truth_warp_is_photometrically_consistent() {
        let spec = presets::plane_pair(64, 6);
        let pair = render_pair(&spec).unwrap();
        let (warped, mask) = warp_image(&pair.source, &pair.depth, &spec.intrinsics, &spec.pose).unwrap();
        let mut sum = 0.0;
        for i in 0..64 * 64 {
            if mask.data()[i] {
                sum += (warped.data()[i] - pair.target.data()[i]).abs();
            }
        }
        let mean = sum / mask.count() as f64;
        assert!(mean < 2e-3, "{mean}");
    }

    #[test]
    fn scene_text_format() {
        let text = "width = 32\nheight = 24\nrotation = 0 0.01 0\ntranslation = 0.2 0 0\nseed = 3\nplane = 0 0 1 5 smooth # bg\nmover = 0 0 3 0.5 edge 0 0 0 0 0.2 0\n";
        let spec = parse_scene(text).unwrap();
        assert_eq!((spec.width, spec.height), (32, 24));
        assert_eq!(spec.planes.len(), 1);
        assert!(spec.mover.is_some());
        assert_eq!(spec, parse_scene(text).unwrap());
        let pair = render_pair(&spec).unwrap();
        assert!(pair.mover_mask.count() > 0);
        let header = format_scene_header(&spec);
        let again = parse_scene(&header).unwrap();
        assert_eq!(again.planes[0].normal, spec.planes[0].normal);
        assert!(parse_scene("width = 3\nfoo = 1\n").is_err());
        assert!(parse_scene("height = 3\n").is_err());
    }

    #[test]
    fn missing_surface_is_invalid() {
        let mut spec = presets::fronto_parallel(16, 5.0, TextureKind::Smooth, Pose::identity(), 1);
        spec.planes[0].normal = Vector3::new(0.0, 1.0, 0.0);
        spec.planes[0].offset = 1.0;
        assert!(matches!(render_pair(&spec), Err(Error::InvalidScene(_))));
    }
}
