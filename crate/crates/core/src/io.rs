//! On-disk formats.
//!
//! A dataset is a directory holding `manifest.json` plus one image per view
//! and frame. Views are 16-bit PNG by default (intensity `k / 65535`; 8-bit
//! inputs are read as `k / 255`) or PFM. Ground-truth central inverse depth
//! (1/m) is stored as little-endian PFM, rows bottom to top.
//!
//! Poses are CSV with header [`POSE_CSV_HEADER`]: a timestamp followed by the
//! row-major 3x4 camera-to-world matrix.
//!
//! Binary files are little-endian. Encoder weights: magic `SLFENC01`, then
//! `u32` N, C_in, C_out, then `f64` tall kernel, tall bias, wide kernel,
//! wide bias. Kernels are laid out `[c_out][c_in][ky][kx]`. Stacks: magic
//! `SLFSTK01`, then `u32` kind code, channels, height, width, then `f64`
//! channels-first data.

use std::fs;
use std::path::{Path, PathBuf};

use image::codecs::png::PngEncoder;
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageFormat as PngFormat};
use serde::{Deserialize, Serialize};

use crate::encodings::{EncodedStack, EpiEncoderWeights, StackKind};
use crate::error::{Error, Result};
use crate::eval::Trajectory;
use crate::geometry::{Intrinsics, RigidTransform};
use crate::image::Image;
use crate::lightfield::{plus_pattern, InverseDepthMap, SparseLightField, ViewIndex};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const POSE_CSV_HEADER: &str = "timestamp,r00,r01,r02,tx,r10,r11,r12,ty,r20,r21,r22,tz";

const WEIGHTS_MAGIC: &[u8; 8] = b"SLFENC01";
const STACK_MAGIC: &[u8; 8] = b"SLFSTK01";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewFormat {
    #[default]
    Png16,
    Pfm,
}

impl ViewFormat {
    fn extension(self) -> &'static str {
        match self {
            ViewFormat::Png16 => "png",
            ViewFormat::Pfm => "pfm",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewFile {
    pub s: i32,
    pub t: i32,
    pub path: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameEntry {
    pub timestamp: f64,
    pub views: Vec<ViewFile>,
    /// Row-major 3x4 camera-to-world pose.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_pose: Option<[f64; 12]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_inverse_depth: Option<String>,
}

/// Contents of `manifest.json`. Paths are relative to the dataset directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: u32,
    pub arm_length: usize,
    pub baseline: f64,
    pub intrinsics: Intrinsics,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub view_format: ViewFormat,
    pub frames: Vec<FrameEntry>,
}

/// A light-field sequence with optional ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub intrinsics: Intrinsics,
    pub timestamps: Vec<f64>,
    pub frames: Vec<SparseLightField>,
    pub gt_poses: Option<Vec<RigidTransform>>,
    pub gt_inverse_depths: Option<Vec<InverseDepthMap>>,
}

impl Dataset {
    pub fn gt_trajectory(&self) -> Option<Result<Trajectory>> {
        self.gt_poses
            .as_ref()
            .map(|p| Trajectory::new(self.timestamps.clone(), p.clone()))
    }

    /// Checks everything `save_dataset` relies on.
    pub fn validate(&self, format: ViewFormat) -> Result<()> {
        let first = self
            .frames
            .first()
            .ok_or_else(|| Error::InvalidLightField("dataset has no frames".into()))?;
        if self.timestamps.len() != self.frames.len() {
            return Err(Error::LengthMismatch(self.timestamps.len(), self.frames.len()));
        }
        Trajectory::new(self.timestamps.clone(), vec![RigidTransform::identity(); self.frames.len()])?;
        self.intrinsics.validate_for(first.width(), first.height())?;
        for (i, lf) in self.frames.iter().enumerate() {
            if lf.arm_length() != first.arm_length()
                || lf.baseline() != first.baseline()
                || lf.central().dims() != first.central().dims()
            {
                return Err(Error::InvalidLightField(format!(
                    "frame {i} differs from frame 0 in arm length, baseline or dimensions"
                )));
            }
            if !matches!(lf.channels(), 1 | 3) {
                return Err(Error::InvalidImage(format!("frame {i} has {} channels", lf.channels())));
            }
            if format == ViewFormat::Png16 {
                for (idx, img) in lf.iter() {
                    if img.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
                        return Err(Error::InvalidImage(format!(
                            "frame {i} view {idx} has intensities outside [0, 1]"
                        )));
                    }
                }
            }
        }
        if let Some(p) = &self.gt_poses {
            if p.len() != self.frames.len() {
                return Err(Error::LengthMismatch(p.len(), self.frames.len()));
            }
        }
        if let Some(d) = &self.gt_inverse_depths {
            if d.len() != self.frames.len() {
                return Err(Error::LengthMismatch(d.len(), self.frames.len()));
            }
            if let Some(i) = d
                .iter()
                .position(|m| m.width() != first.width() || m.height() != first.height())
            {
                return Err(Error::DimensionMismatch(format!("ground-truth depth {i} does not match the views")));
            }
        }
        Ok(())
    }
}

fn view_path(frame: usize, idx: ViewIndex, format: ViewFormat) -> String {
    format!("frames/{frame:04}/view_{}_{}.{}", idx.s, idx.t, format.extension())
}

/// Writes `dataset` under `dir`, the manifest last.
pub fn save_dataset(dir: &Path, dataset: &Dataset, format: ViewFormat) -> Result<DatasetManifest> {
    dataset.validate(format)?;
    let first = &dataset.frames[0];
    let mut entries = Vec::with_capacity(dataset.frames.len());
    for (i, lf) in dataset.frames.iter().enumerate() {
        let mut views = Vec::with_capacity(lf.len());
        for idx in plus_pattern(lf.arm_length()) {
            let rel = view_path(i, idx, format);
            let img = lf.view(idx)?;
            match format {
                ViewFormat::Png16 => write_png16(&dir.join(&rel), img)?,
                ViewFormat::Pfm => write_pfm(&dir.join(&rel), img.width(), img.height(), img.channels(), img.data())?,
            }
            views.push(ViewFile { s: idx.s, t: idx.t, path: rel });
        }
        let gt_inverse_depth = match &dataset.gt_inverse_depths {
            Some(maps) => {
                let rel = format!("frames/{i:04}/gt_inverse_depth.pfm");
                let m = &maps[i];
                write_pfm(&dir.join(&rel), m.width(), m.height(), 1, m.data())?;
                Some(rel)
            }
            None => None,
        };
        entries.push(FrameEntry {
            timestamp: dataset.timestamps[i],
            views,
            gt_pose: dataset.gt_poses.as_ref().map(|p| p[i].to_row_major_3x4()),
            gt_inverse_depth,
        });
    }
    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        arm_length: first.arm_length(),
        baseline: first.baseline(),
        intrinsics: dataset.intrinsics,
        width: first.width(),
        height: first.height(),
        channels: first.channels(),
        view_format: format,
        frames: entries,
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    write_file(&dir.join(MANIFEST_FILE), text.as_bytes())?;
    Ok(manifest)
}

/// Accepts the dataset directory or the manifest file itself.
pub fn load_dataset(path: &Path) -> Result<(DatasetManifest, Dataset)> {
    let (dir, manifest_path) = if path.is_dir() {
        (path.to_path_buf(), path.join(MANIFEST_FILE))
    } else {
        (path.parent().map(Path::to_path_buf).unwrap_or_default(), path.to_path_buf())
    };
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let bad = |message: String| Error::Manifest {
        path: manifest_path.clone(),
        message,
    };
    let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    if manifest.version != MANIFEST_VERSION {
        return Err(bad(format!("unsupported version {}", manifest.version)));
    }
    if manifest.frames.is_empty() {
        return Err(bad("no frames".into()));
    }
    let intrinsics = Intrinsics::new(
        manifest.intrinsics.fx,
        manifest.intrinsics.fy,
        manifest.intrinsics.cx,
        manifest.intrinsics.cy,
    )
    .map_err(|e| bad(e.to_string()))?;
    intrinsics
        .validate_for(manifest.width, manifest.height)
        .map_err(|e| bad(e.to_string()))?;
    let has_poses = manifest.frames[0].gt_pose.is_some();
    let has_depth = manifest.frames[0].gt_inverse_depth.is_some();
    let expected_dims = (manifest.width, manifest.height, manifest.channels);

    let mut frames = Vec::with_capacity(manifest.frames.len());
    let mut poses = Vec::new();
    let mut depths = Vec::new();
    for (i, entry) in manifest.frames.iter().enumerate() {
        if entry.gt_pose.is_some() != has_poses || entry.gt_inverse_depth.is_some() != has_depth {
            return Err(bad(format!("frame {i} ground truth differs from frame 0")));
        }
        let mut views = Vec::with_capacity(entry.views.len());
        for v in &entry.views {
            let idx = ViewIndex::new(v.s, v.t);
            if !idx.on_plus(manifest.arm_length) {
                return Err(bad(format!("frame {i} lists view {idx} outside the plus pattern")));
            }
            let file = dir.join(&v.path);
            let img = match file.extension().and_then(|e| e.to_str()) {
                Some("pfm") => {
                    let (w, h, c, data) = read_pfm(&file)?;
                    Image::new(w, h, c, data)?
                }
                _ => read_png(&file)?,
            };
            if img.dims() != expected_dims {
                return Err(Error::DimMismatch {
                    path: file,
                    frame: i,
                    message: format!("view {idx} is {:?}, manifest says {expected_dims:?}", img.dims()),
                });
            }
            views.push((idx, img));
        }
        let lf = SparseLightField::new(manifest.arm_length, manifest.baseline, views)
            .map_err(|e| bad(format!("frame {i}: {e}")))?;
        frames.push(lf);
        if let Some(p) = &entry.gt_pose {
            poses.push(RigidTransform::from_row_major_3x4(p).map_err(|e| bad(format!("frame {i}: {e}")))?);
        }
        if let Some(rel) = &entry.gt_inverse_depth {
            let file = dir.join(rel);
            let (w, h, c, data) = read_pfm(&file)?;
            if (w, h, c) != (manifest.width, manifest.height, 1) {
                return Err(Error::DimMismatch {
                    path: file,
                    frame: i,
                    message: format!("depth is {w}x{h}x{c}, expected {}x{}x1", manifest.width, manifest.height),
                });
            }
            depths.push(InverseDepthMap::new(w, h, data).map_err(|e| Error::Format {
                path: file.clone(),
                message: e.to_string(),
            })?);
        }
    }
    let dataset = Dataset {
        intrinsics,
        timestamps: manifest.frames.iter().map(|f| f.timestamp).collect(),
        frames,
        gt_poses: has_poses.then_some(poses),
        gt_inverse_depths: has_depth.then_some(depths),
    };
    Trajectory::new(dataset.timestamps.clone(), vec![RigidTransform::identity(); dataset.frames.len()])
        .map_err(|e| bad(e.to_string()))?;
    Ok((manifest, dataset))
}

/// Creates parent directories as needed.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn format_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// PNG bytes of `img` at 16 bits per sample. Values must lie in `[0, 1]`.
pub fn encode_png16(img: &Image) -> Result<Vec<u8>> {
    let color = match img.channels() {
        1 => ExtendedColorType::L16,
        3 => ExtendedColorType::Rgb16,
        c => return Err(Error::InvalidImage(format!("cannot store {c} channels as PNG"))),
    };
    let mut raw = Vec::with_capacity(img.data().len() * 2);
    for &v in img.data() {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidImage(format!("intensity {v} outside [0, 1]")));
        }
        raw.extend_from_slice(&((v * 65535.0).round() as u16).to_ne_bytes());
    }
    let mut out = Vec::new();
    PngEncoder::new(&mut out)
        .write_image(&raw, img.width() as u32, img.height() as u32, color)
        .map_err(|e| Error::InvalidImage(e.to_string()))?;
    Ok(out)
}

pub fn write_png16(path: &Path, img: &Image) -> Result<()> {
    write_file(path, &encode_png16(img)?)
}

/// Reads 8- or 16-bit grayscale or RGB PNG into `[0, 1]`.
pub fn read_png(path: &Path) -> Result<Image> {
    let bytes = read_file(path)?;
    let decoded =
        image::load_from_memory_with_format(&bytes, PngFormat::Png).map_err(|e| format_error(path, e.to_string()))?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let (channels, data): (usize, Vec<f64>) = match decoded {
        DynamicImage::ImageLuma8(b) => (1, b.into_raw().into_iter().map(|v| f64::from(v) / 255.0).collect()),
        DynamicImage::ImageRgb8(b) => (3, b.into_raw().into_iter().map(|v| f64::from(v) / 255.0).collect()),
        DynamicImage::ImageLuma16(b) => (1, b.into_raw().into_iter().map(|v| f64::from(v) / 65535.0).collect()),
        DynamicImage::ImageRgb16(b) => (3, b.into_raw().into_iter().map(|v| f64::from(v) / 65535.0).collect()),
        other => {
            return Err(format_error(
                path,
                format!("unsupported PNG color type {:?}", other.color()),
            ))
        }
    };
    Image::new(w, h, channels, data).map_err(|e| format_error(path, e.to_string()))
}

/// PFM bytes, little-endian `f32`, rows bottom to top.
pub fn encode_pfm(width: usize, height: usize, channels: usize, data: &[f64]) -> Result<Vec<u8>> {
    let tag = match channels {
        1 => "Pf",
        3 => "PF",
        c => return Err(Error::InvalidImage(format!("cannot store {c} channels as PFM"))),
    };
    if data.len() != width * height * channels {
        return Err(Error::DimensionMismatch(format!(
            "{} values for a {width}x{height}x{channels} map",
            data.len()
        )));
    }
    let mut out = format!("{tag}\n{width} {height}\n-1.0\n").into_bytes();
    let row = width * channels;
    for y in (0..height).rev() {
        for &v in &data[y * row..(y + 1) * row] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn write_pfm(path: &Path, width: usize, height: usize, channels: usize, data: &[f64]) -> Result<()> {
    write_file(path, &encode_pfm(width, height, channels, data)?)
}

/// Returns `(width, height, channels, data)` with rows top to bottom.
pub fn read_pfm(path: &Path) -> Result<(usize, usize, usize, Vec<f64>)> {
    let bytes = read_file(path)?;
    decode_pfm(&bytes).map_err(|m| format_error(path, m))
}

fn decode_pfm(bytes: &[u8]) -> std::result::Result<(usize, usize, usize, Vec<f64>), String> {
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| "non-ASCII header")?);
    }
    // Exactly one whitespace byte separates the header from the data.
    pos += 1;
    let channels = match fields[0] {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(format!("bad magic {other:?}")),
    };
    let width: usize = fields[1].parse().map_err(|_| "bad width")?;
    let height: usize = fields[2].parse().map_err(|_| "bad height")?;
    let scale: f64 = fields[3].parse().map_err(|_| "bad scale")?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(format!("bad scale {scale}"));
    }
    let little = scale < 0.0;
    let row = width * channels;
    let need = row * height * 4;
    let body = bytes.get(pos..).unwrap_or_default();
    if body.len() != need {
        return Err(format!("expected {need} data bytes, found {}", body.len()));
    }
    let mut data = vec![0.0; row * height];
    for (k, chunk) in body.chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (file_row, col) = (k / row, k % row);
        data[(height - 1 - file_row) * row + col] = f64::from(v);
    }
    Ok((width, height, channels, data))
}

pub fn format_poses(trajectory: &Trajectory) -> String {
    let mut out = String::from(POSE_CSV_HEADER);
    out.push('\n');
    for (t, p) in trajectory.timestamps().iter().zip(trajectory.poses()) {
        out.push_str(&t.to_string());
        for v in p.to_row_major_3x4() {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    out
}

pub fn write_poses(path: &Path, trajectory: &Trajectory) -> Result<()> {
    write_file(path, format_poses(trajectory).as_bytes())
}

pub fn parse_poses(text: &str, path: &Path) -> Result<Trajectory> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == POSE_CSV_HEADER => {}
        _ => return Err(format_error(path, format!("first line must be {POSE_CSV_HEADER:?}"))),
    }
    let mut timestamps = Vec::new();
    let mut poses = Vec::new();
    for (n, line) in lines {
        let values: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| format_error(path, format!("line {}: {e}", n + 1)))?;
        if values.len() != 13 {
            return Err(format_error(path, format!("line {}: expected 13 fields, found {}", n + 1, values.len())));
        }
        let m: [f64; 12] = values[1..].try_into().expect("12 values");
        let pose =
            RigidTransform::from_row_major_3x4(&m).map_err(|e| format_error(path, format!("line {}: {e}", n + 1)))?;
        timestamps.push(values[0]);
        poses.push(pose);
    }
    Trajectory::new(timestamps, poses).map_err(|e| format_error(path, e.to_string()))
}

pub fn read_poses(path: &Path) -> Result<Trajectory> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes).map_err(|_| format_error(path, "not UTF-8"))?;
    parse_poses(&text, path)
}

fn push_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&u32::try_from(v).expect("dimension fits in u32").to_le_bytes());
}

fn push_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format_error(self.path, "truncated file"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn magic(&mut self, magic: &[u8; 8]) -> Result<()> {
        if self.take(8)? != magic {
            return Err(format_error(self.path, "bad magic"));
        }
        Ok(())
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let b = self.take(n.checked_mul(8).ok_or_else(|| format_error(self.path, "size overflow"))?)?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(format_error(self.path, "trailing bytes"));
        }
        Ok(())
    }
}

pub fn encode_weights(w: &EpiEncoderWeights) -> Vec<u8> {
    let mut out = WEIGHTS_MAGIC.to_vec();
    push_u32(&mut out, w.n);
    push_u32(&mut out, w.c_in);
    push_u32(&mut out, w.c_out);
    push_f64s(&mut out, &w.tall_kernel);
    push_f64s(&mut out, &w.tall_bias);
    push_f64s(&mut out, &w.wide_kernel);
    push_f64s(&mut out, &w.wide_bias);
    out
}

pub fn decode_weights(bytes: &[u8], path: &Path) -> Result<EpiEncoderWeights> {
    let mut r = Reader { bytes, pos: 0, path };
    r.magic(WEIGHTS_MAGIC)?;
    let (n, c_in, c_out) = (r.u32()?, r.u32()?, r.u32()?);
    let k = c_out
        .checked_mul(c_in)
        .and_then(|v| v.checked_mul(n))
        .and_then(|v| v.checked_mul(n))
        .ok_or_else(|| format_error(path, "size overflow"))?;
    let tall_kernel = r.f64s(k)?;
    let tall_bias = r.f64s(c_out)?;
    let wide_kernel = r.f64s(k)?;
    let wide_bias = r.f64s(c_out)?;
    r.finish()?;
    EpiEncoderWeights::new(n, c_in, c_out, tall_kernel, tall_bias, wide_kernel, wide_bias)
        .map_err(|e| format_error(path, e.to_string()))
}

pub fn write_weights(path: &Path, w: &EpiEncoderWeights) -> Result<()> {
    write_file(path, &encode_weights(w))
}

pub fn read_weights(path: &Path) -> Result<EpiEncoderWeights> {
    decode_weights(&read_file(path)?, path)
}

pub fn encode_stack(stack: &EncodedStack) -> Vec<u8> {
    let mut out = STACK_MAGIC.to_vec();
    push_u32(&mut out, stack.kind().code() as usize);
    push_u32(&mut out, stack.channels());
    push_u32(&mut out, stack.height());
    push_u32(&mut out, stack.width());
    push_f64s(&mut out, stack.data());
    out
}

pub fn decode_stack(bytes: &[u8], path: &Path) -> Result<EncodedStack> {
    let mut r = Reader { bytes, pos: 0, path };
    r.magic(STACK_MAGIC)?;
    let code = r.u32()?;
    let kind = StackKind::from_code(code as u32).ok_or_else(|| format_error(path, format!("unknown kind {code}")))?;
    let (c, h, w) = (r.u32()?, r.u32()?, r.u32()?);
    let n = c
        .checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .ok_or_else(|| format_error(path, "size overflow"))?;
    let data = r.f64s(n)?;
    r.finish()?;
    EncodedStack::new(kind, c, h, w, data).map_err(|e| format_error(path, e.to_string()))
}

pub fn write_stack(path: &Path, stack: &EncodedStack) -> Result<()> {
    write_file(path, &encode_stack(stack))
}

pub fn read_stack(path: &Path) -> Result<EncodedStack> {
    decode_stack(&read_file(path)?, path)
}

/// 8-bit grayscale PNG of `values`, linearly mapped from `[lo, hi]`.
pub fn write_preview(path: &Path, width: usize, height: usize, values: &[f64], lo: f64, hi: f64) -> Result<()> {
    if values.len() != width * height {
        return Err(Error::DimensionMismatch(format!("{} values for {width}x{height}", values.len())));
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    let raw: Vec<u8> = values
        .iter()
        .map(|v| (((v - lo) / span).clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let mut out = Vec::new();
    PngEncoder::new(&mut out)
        .write_image(&raw, width as u32, height as u32, ExtendedColorType::L8)
        .map_err(|e| Error::InvalidImage(e.to_string()))?;
    write_file(path, &out)
}

/// Paths listed by `manifest`, relative to `dir`.
pub fn manifest_files(dir: &Path, manifest: &DatasetManifest) -> Vec<PathBuf> {
    let mut files = vec![dir.join(MANIFEST_FILE)];
    for f in &manifest.frames {
        files.extend(f.views.iter().map(|v| dir.join(&v.path)));
        files.extend(f.gt_inverse_depth.iter().map(|p| dir.join(p)));
    }
    files
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pfm_round_trip_and_row_order() {
        let data: Vec<f64> = (0..12).map(|i| i as f64 * 0.25).collect();
        let bytes = encode_pfm(4, 3, 1, &data).unwrap();
        assert!(bytes.starts_with(b"Pf\n4 3\n-1.0\n"));
        // First stored row is the bottom image row.
        let body = &bytes[b"Pf\n4 3\n-1.0\n".len()..];
        assert_eq!(f32::from_le_bytes(body[0..4].try_into().unwrap()), 2.0);
        let (w, h, c, back) = decode_pfm(&bytes).unwrap();
        assert_eq!((w, h, c), (4, 3, 1));
        assert_eq!(back, data);
    }

    #[test]
    fn pfm_rejects_truncation() {
        let mut bytes = encode_pfm(2, 2, 1, &[1.0; 4]).unwrap();
        bytes.pop();
        assert!(decode_pfm(&bytes).is_err());
        assert!(decode_pfm(b"P6\n1 1\n-1.0\n\0\0\0\0").is_err());
    }

    #[test]
    fn png16_quantized_values_are_exact() {
        let img = Image::from_fn(5, 4, |x, y| ((x * 7919 + y * 104729) % 65536) as f64 / 65535.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.png");
        write_png16(&p, &img).unwrap();
        assert_eq!(read_png(&p).unwrap(), img);
        let bad = Image::constant(2, 2, 1, 1.5).unwrap();
        assert!(matches!(encode_png16(&bad), Err(Error::InvalidImage(_))));
    }

    #[test]
    fn pose_csv_round_trip() {
        let poses = vec![
            RigidTransform::identity(),
            RigidTransform::exp(&crate::geometry::Twist::new(0.1, -0.2, 0.3, 0.01, 0.02, -0.03)),
        ];
        let traj = Trajectory::new(vec![0.5, 1.25], poses).unwrap();
        let text = format_poses(&traj);
        assert!(text.starts_with(POSE_CSV_HEADER));
        let back = parse_poses(&text, Path::new("p.csv")).unwrap();
        assert_eq!(back, traj);
        let err = parse_poses("timestamp\n", Path::new("p.csv")).unwrap_err();
        assert_eq!(err.kind(), "FormatError");
    }

    #[test]
    fn weights_and_stack_round_trip() {
        let w = EpiEncoderWeights::seeded_random(9, 1, 3, 4).unwrap();
        let bytes = encode_weights(&w);
        assert_eq!(&bytes[8..12], &9u32.to_le_bytes());
        assert_eq!(decode_weights(&bytes, Path::new("w")).unwrap(), w);
        assert!(decode_weights(&bytes[..bytes.len() - 1], Path::new("w")).is_err());

        let s = EncodedStack::new(StackKind::Focal, 2, 3, 4, (0..24).map(|i| i as f64 / 7.0).collect()).unwrap();
        assert_eq!(decode_stack(&encode_stack(&s), Path::new("s")).unwrap(), s);
    }
}
