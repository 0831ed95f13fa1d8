//! Differentiable view synthesis.
//!
//! Target pixels are back-projected with their inverse depth, moved by the
//! relative pose `T = c,t-1 T c,t` (possibly conjugated by a sub-aperture
//! offset), projected into the source image and bilinearly resampled.
//!
//! Pose derivatives are taken with respect to a left perturbation of the
//! frame pose, `T <- exp(δ) T`, with `δ = (ρ, φ)`. Inverse-depth
//! derivatives are taken with respect to the *central* inverse-depth map,
//! so gradients from every view accumulate onto the same parameters.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{skew, Intrinsics, RigidTransform};
use crate::image::{Cell, Image};
use crate::lightfield::{InverseDepthMap, SparseLightField, SubApertureLayout, ViewIndex};

/// Transformed points with `z` at or below this (meters) are invalid.
pub const CHEIRALITY_EPSILON: f64 = 1e-6;

/// How a non-central view obtains its inverse depth from the central map.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NonCentralDepth {
    /// Reuse the central value at the same pixel.
    #[default]
    Central,
    /// Forward-splat the central map into the view with a z-buffer.
    Splatted,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DepthSample {
    pub inverse_depth: f64,
    /// Index of the central pixel this value derives from.
    pub source: usize,
    /// `d inverse_depth / d central[source]`.
    pub d_source: f64,
}

/// Inverse depth for each pixel of one view; `None` marks splatting holes.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewInverseDepth {
    width: usize,
    height: usize,
    samples: Vec<Option<DepthSample>>,
}

impl ViewInverseDepth {
    pub fn from_map(map: &InverseDepthMap) -> Self {
        let samples = map
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                Some(DepthSample {
                    inverse_depth: v,
                    source: i,
                    d_source: 1.0,
                })
            })
            .collect();
        ViewInverseDepth {
            width: map.width(),
            height: map.height(),
            samples,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn samples(&self) -> &[Option<DepthSample>] {
        &self.samples
    }

    pub fn hole_count(&self) -> usize {
        self.samples.iter().filter(|s| s.is_none()).count()
    }
}

/// Inverse depth of `view`, derived from the central map according to `mode`.
pub fn view_inverse_depth(
    k: &Intrinsics,
    layout: &SubApertureLayout,
    view: ViewIndex,
    central: &InverseDepthMap,
    mode: NonCentralDepth,
) -> Result<ViewInverseDepth> {
    let offset = layout.offset(view)?;
    if view.is_center() || mode == NonCentralDepth::Central {
        return Ok(ViewInverseDepth::from_map(central));
    }
    let (w, h) = (central.width(), central.height());
    // Points move from the central frame into the view frame by cTs^-1.
    let to_view = offset.inverse();
    let r3 = to_view.rotation().row(2).transpose();
    let mut samples: Vec<Option<DepthSample>> = vec![None; w * h];
    for y in 0..h {
        for x in 0..w {
            let j = y * w + x;
            let rho = central.data()[j];
            let ray = k.ray(x as f64, y as f64);
            let p = to_view.transform_point(&(ray / rho));
            if p.z <= CHEIRALITY_EPSILON {
                continue;
            }
            let u = (k.fx * p.x / p.z + k.cx).round();
            let v = (k.fy * p.y / p.z + k.cy).round();
            if u < 0.0 || v < 0.0 || u > (w - 1) as f64 || v > (h - 1) as f64 {
                continue;
            }
            let i = v as usize * w + u as usize;
            let rho_view = 1.0 / p.z;
            if samples[i].is_none_or(|s| rho_view > s.inverse_depth) {
                let d_source = r3.dot(&ray) / (rho * rho * p.z * p.z);
                samples[i] = Some(DepthSample {
                    inverse_depth: rho_view,
                    source: j,
                    d_source,
                });
            }
        }
    }
    Ok(ViewInverseDepth {
        width: w,
        height: h,
        samples,
    })
}

/// Source-image coordinates of one target pixel and their derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectedPixel {
    pub x: f64,
    pub y: f64,
    pub jacobian: Option<CoordJacobian>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoordJacobian {
    /// Rows `d x / d δ` and `d y / d δ`.
    pub pose: [[f64; 6]; 2],
    /// `(d x, d y) / d central[source]`.
    pub inverse_depth: [f64; 2],
    pub source: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectedCoords {
    width: usize,
    height: usize,
    pixels: Vec<Option<ProjectedPixel>>,
}

impl ProjectedCoords {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// `None` where the target pixel has no depth or fails the cheirality test.
    pub fn pixels(&self) -> &[Option<ProjectedPixel>] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> Option<&ProjectedPixel> {
        self.pixels[y * self.width + x].as_ref()
    }
}

/// `outer ∘ pose ∘ inner` applied to every back-projected target pixel.
fn project_grid(
    k: &Intrinsics,
    outer: &RigidTransform,
    pose: &RigidTransform,
    inner: &RigidTransform,
    depth: &ViewInverseDepth,
    with_jacobians: bool,
) -> ProjectedCoords {
    let (w, h) = (depth.width, depth.height);
    let inner_pose = pose.compose(inner);
    let effective = outer.compose(&inner_pose);
    let m: Matrix3<f64> = *effective.rotation();
    let c = *effective.translation();
    let ra: Matrix3<f64> = *outer.rotation();
    let pixels = (0..h)
        .into_par_iter()
        .flat_map_iter(|y| {
            let inner_pose = &inner_pose;
            (0..w).map(move |x| {
                let sample = depth.samples[y * w + x]?;
                let rho = sample.inverse_depth;
                let ray = k.ray(x as f64, y as f64);
                let xt = ray / rho;
                let z = m * xt + c;
                if z.z <= CHEIRALITY_EPSILON {
                    return None;
                }
                let iz = 1.0 / z.z;
                // Offsets from the pixel itself keep the identity exact.
                let zh = m * ray + c * rho;
                let px = x as f64 + k.fx * (zh.x / zh.z - ray.x);
                let py = y as f64 + k.fy * (zh.y / zh.z - ray.y);
                let jacobian = with_jacobians.then(|| {
                    // d(px, py) / dZ
                    let jp = [
                        [k.fx * iz, 0.0, -k.fx * z.x * iz * iz],
                        [0.0, k.fy * iz, -k.fy * z.y * iz * iz],
                    ];
                    let yv = inner_pose.transform_point(&xt);
                    // dZ/dδ = R_outer [I | -[Y]x]
                    let neg_skew = -skew(&yv);
                    let mut pose_rows = [[0.0; 6]; 2];
                    let dz_drho: Vector3<f64> = m * (-xt / rho);
                    let mut depth_row = [0.0; 2];
                    for r in 0..2 {
                        let jr = Vector3::new(jp[r][0], jp[r][1], jp[r][2]);
                        let g = ra.transpose() * jr; // row vector jr * R_outer
                        let rot = neg_skew.transpose() * g;
                        pose_rows[r] = [g.x, g.y, g.z, rot.x, rot.y, rot.z];
                        depth_row[r] = jr.dot(&dz_drho) * sample.d_source;
                    }
                    CoordJacobian {
                        pose: pose_rows,
                        inverse_depth: depth_row,
                        source: sample.source,
                    }
                });
                Some(ProjectedPixel {
                    x: px,
                    y: py,
                    jacobian,
                })
            })
        })
        .collect();
    ProjectedCoords {
        width: w,
        height: h,
        pixels,
    }
}

/// Source coordinates for the central view: `p_{t-1} ~ K T D K^-1 p_t`.
pub fn project_pixels_single(
    k: &Intrinsics,
    pose: &RigidTransform,
    inverse_depth: &InverseDepthMap,
    with_jacobians: bool,
) -> ProjectedCoords {
    let id = RigidTransform::identity();
    project_grid(
        k,
        &id,
        pose,
        &id,
        &ViewInverseDepth::from_map(inverse_depth),
        with_jacobians,
    )
}

/// Source coordinates for sub-aperture `view`: `p_{s,t-1} ~ K cTs^-1 T cTs D_s K^-1 p_{s,t}`.
pub fn project_pixels_multi(
    k: &Intrinsics,
    layout: &SubApertureLayout,
    view: ViewIndex,
    pose: &RigidTransform,
    depth: &ViewInverseDepth,
    with_jacobians: bool,
) -> Result<ProjectedCoords> {
    let offset = layout.offset(view)?;
    Ok(project_grid(
        k,
        &offset.inverse(),
        pose,
        offset,
        depth,
        with_jacobians,
    ))
}

/// Per-sample derivatives of a warped image.
#[derive(Clone, Debug, PartialEq)]
pub struct WarpJacobians {
    /// `d value / d δ`, one entry per pixel and channel.
    pub pose: Vec<[f64; 6]>,
    /// `d value / d central[source]`, one entry per pixel and channel.
    pub inverse_depth: Vec<f64>,
    /// Central pixel each target pixel's depth derives from.
    pub source: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WarpResult {
    /// Resampled image; invalid pixels hold zero and are flagged in `validity`.
    pub warped: Image,
    pub validity: Vec<bool>,
    pub jacobians: Option<WarpJacobians>,
}

impl WarpResult {
    pub fn valid_count(&self) -> usize {
        self.validity.iter().filter(|v| **v).count()
    }

    /// Intersects the validity mask with `mask`.
    pub fn restrict(&mut self, mask: &[bool]) {
        for (v, m) in self.validity.iter_mut().zip(mask) {
            *v &= *m;
        }
    }
}

/// Resamples `src` at `coords`; validity requires both a valid projection
/// and an in-bounds bilinear sample.
pub fn warp_image(src: &Image, coords: &ProjectedCoords) -> Result<WarpResult> {
    let (w, h, ch) = src.dims();
    if coords.width != w || coords.height != h {
        return Err(Error::DimensionMismatch(format!(
            "coordinates are {}x{}, source image is {w}x{h}",
            coords.width, coords.height
        )));
    }
    let with_jac = coords
        .pixels
        .iter()
        .flatten()
        .next()
        .is_some_and(|p| p.jacobian.is_some());
    let n = w * h;
    let mut values = vec![0.0; n * ch];
    let mut validity = vec![false; n];
    let mut jac = with_jac.then(|| WarpJacobians {
        pose: vec![[0.0; 6]; n * ch],
        inverse_depth: vec![0.0; n * ch],
        source: (0..n).collect(),
    });
    for (i, p) in coords.pixels.iter().enumerate() {
        let Some(p) = p else { continue };
        let Some(cell) = Cell::locate(p.x, p.y, w, h) else {
            continue;
        };
        validity[i] = true;
        match (&mut jac, &p.jacobian) {
            (Some(jac), Some(cj)) => {
                jac.source[i] = cj.source;
                for c in 0..ch {
                    let (v, gx, gy) = cell.value_and_gradient(src, c);
                    values[i * ch + c] = v;
                    let row = &mut jac.pose[i * ch + c];
                    for (k, r) in row.iter_mut().enumerate() {
                        *r = gx * cj.pose[0][k] + gy * cj.pose[1][k];
                    }
                    jac.inverse_depth[i * ch + c] =
                        gx * cj.inverse_depth[0] + gy * cj.inverse_depth[1];
                }
            }
            _ => {
                for c in 0..ch {
                    values[i * ch + c] = cell.value(src, c);
                }
            }
        }
    }
    Ok(WarpResult {
        warped: Image::new(w, h, ch, values)?,
        validity,
        jacobians: jac,
    })
}

/// Warps each view of `prev` in `view_set` into frame `t`.
#[allow(clippy::too_many_arguments)]
pub fn warp_lightfield(
    prev: &SparseLightField,
    k: &Intrinsics,
    layout: &SubApertureLayout,
    pose: &RigidTransform,
    depths: &BTreeMap<ViewIndex, ViewInverseDepth>,
    view_set: &[ViewIndex],
    with_jacobians: bool,
) -> Result<BTreeMap<ViewIndex, WarpResult>> {
    let mut out = BTreeMap::new();
    for &view in view_set {
        let src = prev.view(view)?;
        let depth = depths.get(&view).ok_or(Error::MissingView(view))?;
        let coords = project_pixels_multi(k, layout, view, pose, depth, with_jacobians)?;
        out.insert(view, warp_image(src, &coords)?);
    }
    Ok(out)
}

/// Inverse-depth maps of every view in `view_set`.
pub fn view_inverse_depths(
    k: &Intrinsics,
    layout: &SubApertureLayout,
    central: &InverseDepthMap,
    view_set: &[ViewIndex],
    mode: NonCentralDepth,
) -> Result<BTreeMap<ViewIndex, ViewInverseDepth>> {
    view_set
        .iter()
        .map(|&v| view_inverse_depth(k, layout, v, central, mode).map(|d| (v, d)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{se3_exp, Twist};
    use approx::assert_relative_eq;
    use nalgebra::Matrix4;

    fn k() -> Intrinsics {
        Intrinsics::new(100.0, 100.0, 15.5, 11.5).unwrap()
    }

    fn ramp(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |x, y| {
            0.5 + 0.3 * (0.37 * x as f64).sin() * (0.23 * y as f64 + 0.4).cos()
        })
        .unwrap()
    }

    #[test]
    fn identity_pose_maps_pixels_to_themselves() {
        let d = InverseDepthMap::constant(32, 24, 2.0).unwrap();
        let c = project_pixels_single(&k(), &RigidTransform::identity(), &d, false);
        for y in 0..24 {
            for x in 0..32 {
                let p = c.get(x, y).unwrap();
                assert_eq!((p.x, p.y), (x as f64, y as f64));
            }
        }
    }

    #[test]
    fn x_translation_shifts_by_disparity() {
        let d = InverseDepthMap::constant(32, 24, 2.0).unwrap();
        let pose = RigidTransform::from_translation(Vector3::new(0.05, 0.0, 0.0));
        let c = project_pixels_single(&k(), &pose, &d, false);
        for y in 0..24 {
            for x in 0..32 {
                let p = c.get(x, y).unwrap();
                assert_relative_eq!(p.x, x as f64 + 10.0, epsilon = 1e-9);
                assert_relative_eq!(p.y, y as f64, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn optical_axis_rotation_rotates_about_principal_point() {
        let theta = 0.1;
        let pose = se3_exp(&Twist::new(0.0, 0.0, 0.0, 0.0, 0.0, theta));
        let d = InverseDepthMap::constant(32, 24, 1.3).unwrap();
        let c = project_pixels_single(&k(), &pose, &d, false);
        let kk = k();
        for &(x, y) in &[(0usize, 0usize), (31, 5), (10, 20)] {
            let (dx, dy) = (x as f64 - kk.cx, y as f64 - kk.cy);
            let ex = kk.cx + theta.cos() * dx - theta.sin() * dy;
            let ey = kk.cy + theta.sin() * dx + theta.cos() * dy;
            let p = c.get(x, y).unwrap();
            assert_relative_eq!(p.x, ex, epsilon = 1e-9);
            assert_relative_eq!(p.y, ey, epsilon = 1e-9);
        }
    }

    #[test]
    fn cheirality_masks_points_behind() {
        let d = InverseDepthMap::constant(8, 6, 2.0).unwrap();
        let pose = RigidTransform::from_translation(Vector3::new(0.0, 0.0, -0.6));
        let c = project_pixels_single(&k(), &pose, &d, false);
        assert!(c.pixels().iter().all(|p| p.is_none()));
    }

    #[test]
    fn multi_center_reduces_to_single() {
        let layout = SubApertureLayout::plus(2, 0.01).unwrap();
        let d = InverseDepthMap::constant(16, 12, 1.7).unwrap();
        let pose = se3_exp(&Twist::new(0.01, -0.02, 0.005, 0.01, 0.02, -0.01));
        let single = project_pixels_single(&k(), &pose, &d, true);
        let multi = project_pixels_multi(
            &k(),
            &layout,
            ViewIndex::CENTER,
            &pose,
            &ViewInverseDepth::from_map(&d),
            true,
        )
        .unwrap();
        assert_eq!(single, multi);
    }

    #[test]
    fn multi_identity_pose_is_identity_for_every_view() {
        let layout = SubApertureLayout::plus(2, 0.01).unwrap();
        let d = InverseDepthMap::constant(16, 12, 1.7).unwrap();
        for view in layout.views() {
            let c = project_pixels_multi(
                &k(),
                &layout,
                view,
                &RigidTransform::identity(),
                &ViewInverseDepth::from_map(&d),
                false,
            )
            .unwrap();
            for y in 0..12 {
                for x in 0..16 {
                    let p = c.get(x, y).unwrap();
                    assert_relative_eq!(p.x, x as f64, epsilon = 1e-12);
                    assert_relative_eq!(p.y, y as f64, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn multi_matches_homogeneous_matrix_oracle() {
        let layout = SubApertureLayout::plus(2, 0.01).unwrap();
        let view = ViewIndex::new(0, -2);
        let d = InverseDepthMap::new(
            16,
            12,
            (0..16 * 12).map(|i| 1.5 + 0.01 * (i % 7) as f64).collect(),
        )
        .unwrap();
        let pose = se3_exp(&Twist::new(0.02, 0.01, -0.03, 0.05, -0.02, 0.03));
        let c = project_pixels_multi(
            &k(),
            &layout,
            view,
            &pose,
            &ViewInverseDepth::from_map(&d),
            false,
        )
        .unwrap();
        let off = layout.offset(view).unwrap().to_homogeneous();
        let e: Matrix4<f64> = off.try_inverse().unwrap() * pose.to_homogeneous() * off;
        let kk = k();
        for y in 0..12 {
            for x in 0..16 {
                let kinv = kk.matrix().try_inverse().unwrap();
                let ray = kinv * Vector3::new(x as f64, y as f64, 1.0) / d.get(x, y);
                let ph = e * ray.push(1.0);
                let proj = kk.matrix() * ph.xyz();
                let p = c.get(x, y).unwrap();
                assert_relative_eq!(p.x, proj.x / proj.z, epsilon = 1e-9);
                assert_relative_eq!(p.y, proj.y / proj.z, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn identity_warp_is_bit_exact() {
        let img = ramp(20, 14);
        let d = InverseDepthMap::constant(20, 14, 2.0).unwrap();
        let coords = project_pixels_single(&k(), &RigidTransform::identity(), &d, false);
        let r = warp_image(&img, &coords).unwrap();
        assert_eq!(r.warped, img);
        assert!(r.validity.iter().all(|v| *v));
    }

    #[test]
    fn translated_constant_image_stays_constant() {
        let img = Image::constant(20, 14, 1, 0.42).unwrap();
        let d = InverseDepthMap::constant(20, 14, 2.0).unwrap();
        let pose = RigidTransform::from_translation(Vector3::new(0.013, -0.004, 0.0));
        let r = warp_image(&img, &project_pixels_single(&k(), &pose, &d, false)).unwrap();
        assert!(r.valid_count() > 0 && r.valid_count() < 20 * 14);
        for (i, v) in r.validity.iter().enumerate() {
            if *v {
                assert!((r.warped.data()[i] - 0.42).abs() < 1e-15);
            } else {
                assert_eq!(r.warped.data()[i], 0.0);
            }
        }
    }

    #[test]
    fn warped_values_are_bounded_by_source() {
        let img = ramp(20, 14);
        let (lo, hi) = img.min_max();
        let d = InverseDepthMap::constant(20, 14, 2.5).unwrap();
        let pose = se3_exp(&Twist::new(0.01, 0.003, 0.02, 0.01, -0.02, 0.05));
        let r = warp_image(&img, &project_pixels_single(&k(), &pose, &d, false)).unwrap();
        for (i, v) in r.validity.iter().enumerate() {
            if *v {
                let x = r.warped.data()[i];
                assert!(x >= lo - 1e-15 && x <= hi + 1e-15);
            }
        }
    }

    /// Central differences of individual warped samples against the
    /// analytic chain rule.
    #[test]
    fn warp_jacobians_match_finite_differences() {
        let (w, h) = (24, 18);
        let img = ramp(w, h);
        let d = InverseDepthMap::new(
            w,
            h,
            (0..w * h)
                .map(|i| 1.8 + 0.2 * ((i % w) as f64 / w as f64) + 0.1 * ((i / w) as f64 / h as f64))
                .collect(),
        )
        .unwrap();
        let layout = SubApertureLayout::plus(1, 0.02).unwrap();
        let view = ViewIndex::new(1, 0);
        let xi = Twist::new(0.004, -0.002, 0.003, 0.01, -0.008, 0.012);
        let pose = se3_exp(&xi);
        let warp_with = |pose: &RigidTransform, d: &InverseDepthMap, jac: bool| {
            let c = project_pixels_multi(&k(), &layout, view, pose, &ViewInverseDepth::from_map(d), jac)
                .unwrap();
            warp_image(&img, &c).unwrap()
        };
        let base = warp_with(&pose, &d, true);
        let jac = base.jacobians.as_ref().unwrap();
        let hstep = 1e-6;
        let mut checked = 0;
        for i in (0..w * h).step_by(7) {
            if !base.validity[i] {
                continue;
            }
            for kk in 0..6 {
                let mut e = Twist::zeros();
                e[kk] = hstep;
                let p = warp_with(&(se3_exp(&e) * pose), &d, false);
                let m = warp_with(&(se3_exp(&-e) * pose), &d, false);
                if !(p.validity[i] && m.validity[i]) {
                    continue;
                }
                let fd = (p.warped.data()[i] - m.warped.data()[i]) / (2.0 * hstep);
                let an = jac.pose[i][kk];
                assert!(
                    (fd - an).abs() <= 1e-3 * an.abs().max(fd.abs()) + 1e-7,
                    "pixel {i} param {kk}: analytic {an} vs fd {fd}"
                );
            }
            let mut dp = d.data().to_vec();
            dp[i] += hstep;
            let mut dm = d.data().to_vec();
            dm[i] -= hstep;
            let p = warp_with(&pose, &InverseDepthMap::new(w, h, dp).unwrap(), false);
            let m = warp_with(&pose, &InverseDepthMap::new(w, h, dm).unwrap(), false);
            let fd = (p.warped.data()[i] - m.warped.data()[i]) / (2.0 * hstep);
            let an = jac.inverse_depth[i];
            assert!(
                (fd - an).abs() <= 1e-3 * an.abs().max(fd.abs()) + 1e-7,
                "pixel {i} depth: analytic {an} vs fd {fd}"
            );
            checked += 1;
        }
        assert!(checked > 20);
    }

    #[test]
    fn splatted_depth_of_fronto_parallel_plane_is_constant() {
        let layout = SubApertureLayout::plus(2, 0.01).unwrap();
        let d = InverseDepthMap::constant(32, 24, 2.0).unwrap();
        let v = view_inverse_depth(&k(), &layout, ViewIndex::new(2, 0), &d, NonCentralDepth::Splatted)
            .unwrap();
        // fx * 2b * rho = 100 * 0.02 * 2 = 4 px of disparity leaves a 4-column hole strip.
        assert_eq!(v.hole_count(), 4 * 24);
        for s in v.samples().iter().flatten() {
            assert_relative_eq!(s.inverse_depth, 2.0, epsilon = 1e-12);
            assert_relative_eq!(s.d_source, 1.0, epsilon = 1e-12);
        }
        let approx = view_inverse_depth(&k(), &layout, ViewIndex::new(2, 0), &d, NonCentralDepth::Central)
            .unwrap();
        assert_eq!(approx.hole_count(), 0);
    }

    #[test]
    fn splatted_depth_keeps_nearest_surface() {
        let layout = SubApertureLayout::plus(1, 0.01).unwrap();
        // Near strip in the middle of a far background.
        let d = InverseDepthMap::new(
            32,
            4,
            (0..32 * 4).map(|i| if (12..16).contains(&(i % 32)) { 4.0 } else { 1.0 }).collect(),
        )
        .unwrap();
        let v = view_inverse_depth(&k(), &layout, ViewIndex::new(1, 0), &d, NonCentralDepth::Splatted)
            .unwrap();
        // Near pixels shift by 4 px, far pixels by 1 px; the near strip wins overlaps.
        let row: Vec<f64> = (0..32)
            .map(|x| v.samples()[x].map_or(0.0, |s| s.inverse_depth))
            .collect();
        assert_eq!(&row[8..12], &[4.0, 4.0, 4.0, 4.0]);
    }
}
