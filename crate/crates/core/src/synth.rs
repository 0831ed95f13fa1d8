//! Ray-cast renderer for textured planar scenes, used as a ground-truth
//! oracle for light fields, inverse depth and camera motion.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{so3_exp, Intrinsics, RigidTransform};
use crate::image::{bilinear_sample, Image};
use crate::lightfield::{plus_pattern, InverseDepthMap, SparseLightField, SubApertureLayout, ViewIndex};

pub const TEXTURE_SIGMA: f64 = 1.5;
const TEXTURE_MEAN: f64 = 0.5;
const TEXTURE_STD: f64 = 0.15;

/// Band-limited noise: uniform samples blurred with a Gaussian of `sigma`
/// texels, then normalized to mean 0.5 and standard deviation 0.15 and
/// clamped to `[0, 1]`.
pub fn noise_texture(width: usize, height: usize, sigma: f64, seed: u64) -> Result<Image> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..width * height).map(|_| rng.random::<f64>()).collect();
    let blurred = gaussian_blur(&raw, width, height, sigma);
    let n = blurred.len() as f64;
    let mean = blurred.iter().sum::<f64>() / n;
    let std = (blurred.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    let scale = if std > 0.0 { TEXTURE_STD / std } else { 0.0 };
    let data = blurred
        .iter()
        .map(|v| (TEXTURE_MEAN + (v - mean) * scale).clamp(0.0, 1.0))
        .collect();
    Image::new(width, height, 1, data)
}

/// Separable Gaussian blur with mirrored borders.
fn gaussian_blur(data: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return data.to_vec();
    }
    let r = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);
    let mirror = |i: isize, n: usize| -> usize {
        let n = n as isize;
        let mut i = i;
        while i < 0 || i >= n {
            i = if i < 0 { -i - 1 } else { 2 * n - i - 1 };
        }
        i as usize
    };
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = (-r..=r)
                .map(|i| kernel[(i + r) as usize] * data[y * w + mirror(x as isize + i, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = (-r..=r)
                .map(|i| kernel[(i + r) as usize] * tmp[mirror(y as isize + i, h) * w + x])
                .sum();
        }
    }
    out
}

/// Rectangle in the local `z = 0` plane of `pose` (plane-to-world),
/// covering `[-hx, hx] x [-hy, hy]` meters, textured with one texel per
/// `texel_size` meters and texel `(0, 0)` at the `(-hx, -hy)` corner.
#[derive(Clone, Debug, PartialEq)]
pub struct TexturedPlane {
    pub pose: RigidTransform,
    pub half_extent: (f64, f64),
    pub texel_size: f64,
    pub texture: Image,
}

impl TexturedPlane {
    /// Noise-textured rectangle; the texture is sized to cover the extent.
    pub fn new(pose: RigidTransform, half_extent: (f64, f64), texel_size: f64, seed: u64) -> Result<Self> {
        if !(half_extent.0 > 0.0 && half_extent.1 > 0.0 && texel_size > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "plane extent {half_extent:?} and texel size {texel_size} must be positive"
            )));
        }
        let tw = (2.0 * half_extent.0 / texel_size).ceil() as usize + 1;
        let th = (2.0 * half_extent.1 / texel_size).ceil() as usize + 1;
        if tw * th > 50_000_000 {
            return Err(Error::InvalidConfig(format!("texture of {tw}x{th} texels is too large")));
        }
        let texture = noise_texture(tw, th, TEXTURE_SIGMA, seed)?;
        Ok(TexturedPlane {
            pose,
            half_extent,
            texel_size,
            texture,
        })
    }

    /// Fronto-parallel rectangle centred on the optical axis at `depth`.
    pub fn fronto_parallel(depth: f64, half_extent: (f64, f64), texel_size: f64, seed: u64) -> Result<Self> {
        Self::new(
            RigidTransform::from_translation(Vector3::new(0.0, 0.0, depth)),
            half_extent,
            texel_size,
            seed,
        )
    }

    pub fn with_texture(mut self, texture: Image) -> Self {
        self.texture = texture;
        self
    }

    /// Ray parameter and intensity of the hit along `origin + l * dir`.
    fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(f64, f64)> {
        let rt = self.pose.rotation().transpose();
        let o = rt * (origin - self.pose.translation());
        let d = rt * dir;
        if d.z == 0.0 {
            return None;
        }
        let l = -o.z / d.z;
        if !(l > 0.0) {
            return None;
        }
        let a = o.x + l * d.x;
        let b = o.y + l * d.y;
        if a.abs() > self.half_extent.0 || b.abs() > self.half_extent.1 {
            return None;
        }
        let tx = (a + self.half_extent.0) / self.texel_size;
        let ty = (b + self.half_extent.1) / self.texel_size;
        bilinear_sample(&self.texture, tx, ty, 0).map(|v| (l, v))
    }
}

/// A set of textured planes in world coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanarScene {
    pub planes: Vec<TexturedPlane>,
}

impl PlanarScene {
    pub fn new(planes: Vec<TexturedPlane>) -> Result<Self> {
        if planes.is_empty() {
            return Err(Error::InvalidConfig("scene has no planes".into()));
        }
        Ok(PlanarScene { planes })
    }

    /// Fronto-parallel planes at strictly increasing depths.
    pub fn fronto_parallel(planes: Vec<TexturedPlane>) -> Result<Self> {
        for p in &planes {
            if *p.pose.rotation() != Matrix3::identity() || !(p.pose.translation().z > 0.0) {
                return Err(Error::InvalidConfig(
                    "fronto-parallel planes need identity rotation and positive depth".into(),
                ));
            }
        }
        for pair in planes.windows(2) {
            if pair[0].pose.translation().z >= pair[1].pose.translation().z {
                return Err(Error::InvalidConfig("plane depths must increase front to back".into()));
            }
        }
        Self::new(planes)
    }

    /// Moves every plane by `t` (applied in world coordinates).
    pub fn transformed(&self, t: &RigidTransform) -> PlanarScene {
        PlanarScene {
            planes: self
                .planes
                .iter()
                .map(|p| TexturedPlane {
                    pose: t.compose(&p.pose),
                    ..p.clone()
                })
                .collect(),
        }
    }
}

/// Pinhole light-field camera: shared intrinsics, image size and the
/// sub-aperture layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    pub intrinsics: Intrinsics,
    pub width: usize,
    pub height: usize,
    pub arm_length: usize,
    pub layout: SubApertureLayout,
}

impl Camera {
    pub fn new(intrinsics: Intrinsics, width: usize, height: usize, arm_length: usize, baseline: f64) -> Result<Self> {
        intrinsics.validate_for(width, height)?;
        Ok(Camera {
            intrinsics,
            width,
            height,
            arm_length,
            layout: SubApertureLayout::plus(arm_length, baseline)?,
        })
    }

    pub fn baseline(&self) -> f64 {
        self.layout.baseline()
    }
}

/// JSON description of the camera.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraSpec {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub arm_length: usize,
    pub baseline: f64,
}

impl Default for CameraSpec {
    fn default() -> Self {
        CameraSpec {
            width: 224,
            height: 160,
            fx: 200.0,
            fy: 200.0,
            cx: 111.5,
            cy: 79.5,
            arm_length: 4,
            baseline: 0.01,
        }
    }
}

impl CameraSpec {
    pub fn build(&self) -> Result<Camera> {
        let k = Intrinsics::new(self.fx, self.fy, self.cx, self.cy)?;
        Camera::new(k, self.width, self.height, self.arm_length, self.baseline)
    }
}

/// JSON description of one plane. `rotation_deg` is an axis-angle vector
/// in degrees applied about the plane centre.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaneSpec {
    pub depth: f64,
    #[serde(default)]
    pub center: [f64; 2],
    pub half_extent: [f64; 2],
    /// Defaults to four image pixels at `depth` for the scene's camera.
    #[serde(default)]
    pub texel_size: Option<f64>,
    #[serde(default)]
    pub rotation_deg: [f64; 3],
}

/// JSON scene description consumed by the `render` command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    #[serde(default)]
    pub camera: CameraSpec,
    pub planes: Vec<PlaneSpec>,
    #[serde(default)]
    pub seed: u64,
}

impl SceneSpec {
    /// Builds the scene; plane `i` draws its texture from `seed + i`.
    pub fn build(&self, camera: &Camera) -> Result<PlanarScene> {
        let mut planes = Vec::with_capacity(self.planes.len());
        for (i, p) in self.planes.iter().enumerate() {
            if !(p.depth > 0.0 && p.depth.is_finite()) {
                return Err(Error::InvalidConfig(format!("plane {i} has depth {}", p.depth)));
            }
            let phi = Vector3::from(p.rotation_deg).map(f64::to_radians);
            let pose = RigidTransform::new(so3_exp(&phi), Vector3::new(p.center[0], p.center[1], p.depth))?;
            let texel = p.texel_size.unwrap_or(4.0 * p.depth / camera.intrinsics.fx);
            planes.push(TexturedPlane::new(
                pose,
                (p.half_extent[0], p.half_extent[1]),
                texel,
                self.seed.wrapping_add(i as u64),
            )?);
        }
        PlanarScene::new(planes)
    }
}

/// Renders one pinhole view with camera-to-world pose `pose`.
pub fn render_view(
    scene: &PlanarScene,
    k: &Intrinsics,
    width: usize,
    height: usize,
    pose: &RigidTransform,
) -> Result<(Image, InverseDepthMap)> {
    let origin = *pose.translation();
    let rot = *pose.rotation();
    let pixels: Vec<Option<(f64, f64)>> = (0..height)
        .into_par_iter()
        .flat_map_iter(|y| {
            (0..width).map(move |x| {
                let dir = rot * k.ray(x as f64, y as f64);
                scene
                    .planes
                    .iter()
                    .filter_map(|p| p.intersect(&origin, &dir))
                    .min_by(|a, b| a.0.total_cmp(&b.0))
            })
        })
        .collect();
    if let Some(i) = pixels.iter().position(Option::is_none) {
        return Err(Error::SceneBehindCamera(format!(
            "pixel ({}, {}) sees no plane in front of the camera",
            i % width,
            i / width
        )));
    }
    let (depth, value): (Vec<f64>, Vec<f64>) = pixels.into_iter().map(|p| {
        let (l, v) = p.expect("checked above");
        // Rays have unit z in the camera frame, so the ray parameter is depth.
        (1.0 / l, v)
    }).unzip();
    Ok((Image::new(width, height, 1, value)?, InverseDepthMap::new(width, height, depth)?))
}

/// A rendered light field with per-view ground-truth inverse depth.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedLightField {
    pub lightfield: SparseLightField,
    pub inverse_depths: BTreeMap<ViewIndex, InverseDepthMap>,
}

impl RenderedLightField {
    pub fn central_inverse_depth(&self) -> &InverseDepthMap {
        &self.inverse_depths[&ViewIndex::CENTER]
    }
}

/// Renders every sub-aperture for central camera-to-world pose `pose`.
pub fn render_lf(scene: &PlanarScene, camera: &Camera, pose: &RigidTransform) -> Result<RenderedLightField> {
    let mut views = Vec::new();
    let mut inverse_depths = BTreeMap::new();
    for idx in plus_pattern(camera.arm_length) {
        let view_pose = pose.compose(camera.layout.offset(idx)?);
        let (img, inv) = render_view(scene, &camera.intrinsics, camera.width, camera.height, &view_pose)?;
        views.push((idx, img));
        inverse_depths.insert(idx, inv);
    }
    Ok(RenderedLightField {
        lightfield: SparseLightField::new(camera.arm_length, camera.baseline(), views)?,
        inverse_depths,
    })
}

/// Rendered frames and ground-truth relative poses `P_{i-1}^-1 P_i`.
#[derive(Clone, Debug)]
pub struct RenderedSequence {
    pub frames: Vec<RenderedLightField>,
    pub poses: Vec<RigidTransform>,
}

impl RenderedSequence {
    pub fn relative_poses(&self) -> Vec<RigidTransform> {
        self.poses.windows(2).map(|w| w[0].inverse().compose(&w[1])).collect()
    }

    pub fn lightfields(&self) -> Vec<SparseLightField> {
        self.frames.iter().map(|f| f.lightfield.clone()).collect()
    }
}

pub fn render_trajectory(scene: &PlanarScene, camera: &Camera, poses: &[RigidTransform]) -> Result<RenderedSequence> {
    if poses.is_empty() {
        return Err(Error::InvalidTrajectory("no poses to render".into()));
    }
    let frames = poses
        .iter()
        .map(|p| render_lf(scene, camera, p))
        .collect::<Result<Vec<_>>>()?;
    Ok(RenderedSequence {
        frames,
        poses: poses.to_vec(),
    })
}

/// `frames` camera-to-world poses moving `step` per frame (camera frame
/// axes) from the identity.
pub fn dolly(frames: usize, step: Vector3<f64>) -> Vec<RigidTransform> {
    (0..frames)
        .map(|i| RigidTransform::from_translation(step * i as f64))
        .collect()
}

/// Camera orbiting about the vertical axis through `(0, 0, radius)`,
/// `step_deg` per frame, always facing the orbit centre.
pub fn arc(frames: usize, step_deg: f64, radius: f64) -> Vec<RigidTransform> {
    let c = Vector3::new(0.0, 0.0, radius);
    (0..frames)
        .map(|i| {
            let r = so3_exp(&Vector3::new(0.0, (step_deg * i as f64).to_radians(), 0.0));
            RigidTransform::new(r, c - r * c).expect("rotation from exp is valid")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encodings::{epi_slope, extract_epis};

    fn camera(fx: f64) -> Camera {
        Camera::new(Intrinsics::new(fx, fx, 31.5, 23.5).unwrap(), 64, 48, 2, 0.01).unwrap()
    }

    fn plane_scene(depth: f64, fx: f64) -> PlanarScene {
        let p = TexturedPlane::fronto_parallel(depth, (0.5, 0.5), 2.0 * depth / fx, 7).unwrap();
        PlanarScene::fronto_parallel(vec![p]).unwrap()
    }

    #[test]
    fn texture_statistics() {
        let t = noise_texture(200, 200, TEXTURE_SIGMA, 1).unwrap();
        assert!((t.mean() - 0.5).abs() < 0.01);
        assert!((t.variance().sqrt() - 0.15).abs() < 0.01);
        assert_eq!(t, noise_texture(200, 200, TEXTURE_SIGMA, 1).unwrap());
        assert_ne!(t, noise_texture(200, 200, TEXTURE_SIGMA, 2).unwrap());
    }

    #[test]
    fn fronto_parallel_depth_is_constant() {
        let cam = camera(100.0);
        let r = render_lf(&plane_scene(0.5, 100.0), &cam, &RigidTransform::identity()).unwrap();
        for inv in r.inverse_depths.values() {
            assert!(inv.data().iter().all(|&v| (v - 2.0).abs() < 1e-12));
        }
    }

    #[test]
    fn adjacent_views_shift_by_disparity() {
        // fx * b / Z = 100 * 0.01 / 0.5 = 2 px.
        let cam = camera(100.0);
        let r = render_lf(&plane_scene(0.5, 100.0), &cam, &RigidTransform::identity()).unwrap();
        let lf = &r.lightfield;
        let c = lf.central();
        let right = lf.view(ViewIndex::new(1, 0)).unwrap();
        for y in 0..48 {
            for x in 0..62 {
                assert!((right.get(x, y, 0) - c.get(x + 2, y, 0)).abs() < 1e-9);
            }
        }
        let d = epi_slope(&extract_epis(lf).unwrap().horizontal, 4.0).unwrap();
        assert!((d - 2.0).abs() < 0.05, "{d}");
    }

    #[test]
    fn constant_texture_gives_identical_views() {
        let cam = camera(100.0);
        let p = TexturedPlane::fronto_parallel(0.5, (0.5, 0.5), 0.01, 1)
            .unwrap()
            .with_texture(Image::constant(101, 101, 1, 0.4).unwrap());
        let r = render_lf(&PlanarScene::new(vec![p]).unwrap(), &cam, &RigidTransform::identity()).unwrap();
        for (_, img) in r.lightfield.iter() {
            assert_eq!(img, r.lightfield.central());
        }
    }

    #[test]
    fn pose_scene_duality() {
        let cam = camera(100.0);
        let scene = plane_scene(0.6, 100.0);
        let q = RigidTransform::exp(&crate::geometry::Twist::new(0.01, -0.005, 0.02, 0.01, -0.02, 0.03));
        let a = render_lf(&scene, &cam, &q).unwrap();
        let b = render_lf(&scene.transformed(&q.inverse()), &cam, &RigidTransform::identity()).unwrap();
        for ((_, x), (_, y)) in a.lightfield.iter().zip(b.lightfield.iter()) {
            for (u, v) in x.data().iter().zip(y.data()) {
                assert!((u - v).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn identical_poses_identical_frames() {
        let cam = camera(100.0);
        let seq = render_trajectory(&plane_scene(0.5, 100.0), &cam, &dolly(2, Vector3::zeros())).unwrap();
        assert_eq!(seq.frames[0], seq.frames[1]);
    }

    #[test]
    fn trajectory_generators() {
        let d = dolly(10, Vector3::new(0.0, 0.0, 0.005));
        let seq_rel: Vec<_> = d.windows(2).map(|w| w[0].inverse().compose(&w[1])).collect();
        assert!(seq_rel.iter().all(|t| (t.translation().norm() - 0.005).abs() < 1e-15));
        let a = arc(10, 0.5, 0.6);
        for w in a.windows(2) {
            let rel = w[0].inverse().compose(&w[1]);
            assert!((rel.rotation_angle().to_degrees() - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn uncovered_pixels_are_reported() {
        let cam = camera(100.0);
        let p = TexturedPlane::fronto_parallel(0.5, (0.01, 0.01), 0.01, 1).unwrap();
        let scene = PlanarScene::new(vec![p]).unwrap();
        assert!(matches!(
            render_lf(&scene, &cam, &RigidTransform::identity()),
            Err(Error::SceneBehindCamera(_))
        ));
    }

    #[test]
    fn spec_round_trip() {
        let spec = SceneSpec {
            camera: CameraSpec::default(),
            planes: vec![PlaneSpec {
                depth: 0.5,
                center: [0.0, 0.0],
                half_extent: [0.4, 0.3],
                texel_size: None,
                rotation_deg: [0.0, 10.0, 0.0],
            }],
            seed: 3,
        };
        let text = serde_json::to_string(&spec).unwrap();
        let back: SceneSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
        let cam = spec.camera.build().unwrap();
        let scene = spec.build(&cam).unwrap();
        assert!((scene.planes[0].texel_size - 0.01).abs() < 1e-15);
    }
}
