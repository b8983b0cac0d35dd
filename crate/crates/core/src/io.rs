//! File formats: 8-bit PGM/PPM images, little-endian PFM float maps, intrinsics
//! and KITTI-style pose text, correspondence CSV.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::field::{ScalarField, ValidityMask};
use crate::geometry::{CameraIntrinsics, Correspondence, EssentialMatrix, NormalizedCoord, Pose};

/// Splits a binary Netpbm/PFM header into `count` whitespace-separated tokens
/// (skipping `#` comments) and returns them with the offset of the raster.
fn header_tokens(bytes: &[u8], count: usize) -> Result<(Vec<String>, usize)> {
    let mut tokens = Vec::new();
    let mut i = 0;
    while tokens.len() < count {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(Error::Parse("truncated image header".into()));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    // exactly one whitespace byte separates the header from the raster
    Ok((tokens, i + 1))
}

fn parse_usize(s: &str, what: &str) -> Result<usize> {
    s.parse()
        .map_err(|_| Error::Parse(format!("invalid {what}: {s:?}")))
}

/// Decodes binary PGM (P5) or PPM (P6) with maxval ≤ 255, scaled to `[0, 1]`.
pub fn decode_netpbm(bytes: &[u8]) -> Result<ScalarField> {
    let (tok, offset) = header_tokens(bytes, 4)?;
    let channels = match tok[0].as_str() {
        "P5" => 1,
        "P6" => 3,
        m => return Err(Error::Parse(format!("unsupported image magic {m:?}"))),
    };
    let w = parse_usize(&tok[1], "width")?;
    let h = parse_usize(&tok[2], "height")?;
    let maxval = parse_usize(&tok[3], "maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::Parse(format!("unsupported maxval {maxval}")));
    }
    let n = w * h * channels;
    let raster = bytes
        .get(offset..offset + n)
        .ok_or_else(|| Error::Parse("truncated raster".into()))?;
    let scale = 1.0 / maxval as f64;
    ScalarField::new(w, h, channels, raster.iter().map(|&b| b as f64 * scale).collect())
}

/// Encodes a 1- or 3-channel field as P5/P6, clamping to `[0, 1]` and rounding to 8 bits.
pub fn encode_netpbm(field: &ScalarField) -> Result<Vec<u8>> {
    let magic = match field.channels() {
        1 => "P5",
        3 => "P6",
        c => return Err(Error::InvalidField(format!("cannot encode {c} channels as PGM/PPM"))),
    };
    let mut out = format!("{magic}\n{} {}\n255\n", field.width(), field.height()).into_bytes();
    out.extend(
        field
            .data()
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    Ok(out)
}

pub fn read_image(path: &Path) -> Result<ScalarField> {
    decode_netpbm(&fs::read(path)?)
}

pub fn write_image(path: &Path, field: &ScalarField) -> Result<()> {
    fs::write(path, encode_netpbm(field)?)?;
    Ok(())
}

/// Decodes PFM (`Pf` grayscale or `PF` RGB). Rows are stored bottom-to-top;
/// the sign of the scale selects the byte order.
pub fn decode_pfm(bytes: &[u8]) -> Result<ScalarField> {
    let (tok, offset) = header_tokens(bytes, 4)?;
    let channels = match tok[0].as_str() {
        "Pf" => 1,
        "PF" => 3,
        m => return Err(Error::Parse(format!("unsupported PFM magic {m:?}"))),
    };
    let w = parse_usize(&tok[1], "width")?;
    let h = parse_usize(&tok[2], "height")?;
    let scale: f64 = tok[3]
        .parse()
        .map_err(|_| Error::Parse(format!("invalid PFM scale {:?}", tok[3])))?;
    let little = scale < 0.0;
    let n = w * h * channels;
    let raster = bytes
        .get(offset..offset + 4 * n)
        .ok_or_else(|| Error::Parse("truncated PFM raster".into()))?;
    let mut data = vec![0.0; n];
    let row_len = w * channels;
    for (i, chunk) in raster.chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (file_row, col) = (i / row_len, i % row_len);
        data[(h - 1 - file_row) * row_len + col] = v as f64;
    }
    ScalarField::new(w, h, channels, data)
}

/// Encodes as little-endian PFM (scale −1.0), bottom row first.
pub fn encode_pfm(field: &ScalarField) -> Result<Vec<u8>> {
    let magic = match field.channels() {
        1 => "Pf",
        3 => "PF",
        c => return Err(Error::InvalidField(format!("cannot encode {c} channels as PFM"))),
    };
    let mut out = format!("{magic}\n{} {}\n-1.0\n", field.width(), field.height()).into_bytes();
    let row_len = field.width() * field.channels();
    for row in field.data().chunks_exact(row_len).rev() {
        for &v in row {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn read_pfm(path: &Path) -> Result<ScalarField> {
    decode_pfm(&fs::read(path)?)
}

pub fn write_pfm(path: &Path, field: &ScalarField) -> Result<()> {
    fs::write(path, encode_pfm(field)?)?;
    Ok(())
}

fn is_pfm(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pfm"))
}

/// Image or float map by extension: `.pfm` is read as PFM, anything else as
/// 8-bit PGM/PPM.
pub fn read_field(path: &Path) -> Result<ScalarField> {
    if is_pfm(path) {
        read_pfm(path)
    } else {
        read_image(path)
    }
}

pub fn write_field(path: &Path, field: &ScalarField) -> Result<()> {
    if is_pfm(path) {
        write_pfm(path, field)
    } else {
        write_image(path, field)
    }
}

/// Validity mask from an 8-bit PGM: zero means missing.
pub fn read_mask(path: &Path) -> Result<ValidityMask> {
    let img = read_image(path)?;
    ValidityMask::new(
        img.width(),
        img.height(),
        img.channel_mean().data().iter().map(|&v| v > 0.0).collect(),
    )
}

pub fn write_mask(path: &Path, mask: &ValidityMask) -> Result<()> {
    let field = ScalarField::new(
        mask.width(),
        mask.height(),
        1,
        mask.data().iter().map(|&m| if m { 1.0 } else { 0.0 }).collect(),
    )?;
    write_image(path, &field)
}

/// Linear min-max normalization to `[0, 1]` (constant maps become 0).
pub fn heatmap(field: &ScalarField) -> ScalarField {
    let (lo, hi) = field.min_max();
    let span = hi - lo;
    field.map(|v| if span > 0.0 { (v - lo) / span } else { 0.0 })
}

fn numbers(line: &str) -> Result<Vec<f64>> {
    line.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::Parse(format!("invalid number {s:?}")))
        })
        .collect()
}

fn content_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
}

/// One line `fx fy cx cy`.
pub fn parse_intrinsics(text: &str) -> Result<CameraIntrinsics> {
    let line = content_lines(text)
        .next()
        .ok_or_else(|| Error::Parse("empty intrinsics file".into()))?;
    let v = numbers(line)?;
    if v.len() != 4 {
        return Err(Error::Parse(format!("expected 4 intrinsics values, got {}", v.len())));
    }
    CameraIntrinsics::new(v[0], v[1], v[2], v[3])
}

pub fn format_intrinsics(k: &CameraIntrinsics) -> String {
    format!("{} {} {} {}\n", k.fx, k.fy, k.cx, k.cy)
}

/// KITTI odometry pose text: one row-major 3×4 `[R | t]` per line.
pub fn parse_poses(text: &str) -> Result<Vec<Pose>> {
    content_lines(text)
        .map(|line| {
            let v = numbers(line)?;
            if v.len() != 12 {
                return Err(Error::Parse(format!("expected 12 pose values, got {}", v.len())));
            }
            let r = Matrix3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]);
            let t = Vector3::new(v[3], v[7], v[11]);
            // KITTI files are stored at limited precision; re-orthonormalize
            Ok(Pose {
                rotation: r,
                translation: t,
            }
            .orthonormalized())
        })
        .collect()
}

fn fmt_num(v: f64) -> String {
    // shortest representation that round-trips exactly
    format!("{v:e}")
}

pub fn format_pose(p: &Pose) -> String {
    let r = &p.rotation;
    let t = &p.translation;
    let vals = [
        r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x,
        r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y,
        r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z,
    ];
    let mut s = vals.iter().map(|&v| fmt_num(v)).collect::<Vec<_>>().join(" ");
    s.push('\n');
    s
}

pub fn format_poses(poses: &[Pose]) -> String {
    poses.iter().map(format_pose).collect()
}

/// Three lines of three values.
pub fn format_essential(e: &EssentialMatrix) -> String {
    let m = e.matrix();
    let mut s = String::new();
    for r in 0..3 {
        let _ = writeln!(s, "{} {} {}", fmt_num(m[(r, 0)]), fmt_num(m[(r, 1)]), fmt_num(m[(r, 2)]));
    }
    s
}

pub fn parse_essential(text: &str) -> Result<EssentialMatrix> {
    let v: Vec<f64> = content_lines(text)
        .map(numbers)
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    if v.len() != 9 {
        return Err(Error::Parse(format!("expected 9 essential values, got {}", v.len())));
    }
    EssentialMatrix::from_matrix(Matrix3::from_row_slice(&v))
}

pub const CORRESPONDENCE_HEADER: &str = "tx,ty,sx,sy";

/// CSV with header `tx,ty,sx,sy` in normalized coordinates.
pub fn parse_correspondences(text: &str) -> Result<Vec<Correspondence>> {
    let mut lines = content_lines(text);
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty correspondence file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols != ["tx", "ty", "sx", "sy"] {
        return Err(Error::Parse(format!(
            "expected header {CORRESPONDENCE_HEADER:?}, got {header:?}"
        )));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let v = numbers(line)?;
            if v.len() != 4 {
                return Err(Error::Parse(format!("row {}: expected 4 values", i + 1)));
            }
            Correspondence::new(NormalizedCoord::new(v[0], v[1]), NormalizedCoord::new(v[2], v[3]))
        })
        .collect()
}

pub fn format_correspondences(cs: &[Correspondence]) -> String {
    let mut s = String::from(CORRESPONDENCE_HEADER);
    s.push('\n');
    for c in cs {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            fmt_num(c.target.x),
            fmt_num(c.target.y),
            fmt_num(c.source.x),
            fmt_num(c.source.y)
        );
    }
    s
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}
