//! Sparse plus-pattern light fields, sub-aperture layouts and inverse-depth maps.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::RigidTransform;
use crate::image::Image;

/// Sub-aperture coordinate on the plus pattern. `s` runs along the
/// horizontal arm (image u axis), `t` along the vertical arm (image v axis).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ViewIndex {
    pub s: i32,
    pub t: i32,
}

impl ViewIndex {
    pub const CENTER: ViewIndex = ViewIndex { s: 0, t: 0 };

    pub const fn new(s: i32, t: i32) -> Self {
        ViewIndex { s, t }
    }

    pub fn is_center(&self) -> bool {
        *self == Self::CENTER
    }

    pub fn on_plus(&self, arm_length: usize) -> bool {
        let a = arm_length as i32;
        (self.s == 0 || self.t == 0) && self.s.abs() <= a && self.t.abs() <= a
    }
}

impl fmt::Display for ViewIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.s, self.t)
    }
}

/// Plus-pattern view indices: the horizontal arm left to right, then the
/// vertical arm top to bottom without repeating the center.
pub fn plus_pattern(arm_length: usize) -> Vec<ViewIndex> {
    let a = arm_length as i32;
    let horizontal = (-a..=a).map(|s| ViewIndex::new(s, 0));
    let vertical = (-a..=a).filter(|&t| t != 0).map(|t| ViewIndex::new(0, t));
    horizontal.chain(vertical).collect()
}

/// The center and its four nearest neighbours, in plus-pattern order.
pub fn five_view_set() -> Vec<ViewIndex> {
    plus_pattern(1)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SparseLightField {
    arm_length: usize,
    baseline: f64,
    width: usize,
    height: usize,
    channels: usize,
    views: BTreeMap<ViewIndex, Image>,
}

impl SparseLightField {
    /// Accepts exactly the plus-pattern view set for `arm_length`.
    pub fn new(
        arm_length: usize,
        baseline: f64,
        views: impl IntoIterator<Item = (ViewIndex, Image)>,
    ) -> Result<Self> {
        if !(baseline > 0.0 && baseline.is_finite()) {
            return Err(Error::InvalidLightField(format!(
                "baseline must be positive, got {baseline}"
            )));
        }
        let mut map = BTreeMap::new();
        for (idx, img) in views {
            if !idx.on_plus(arm_length) {
                return Err(Error::InvalidLightField(format!(
                    "view {idx} is not on the plus pattern with arm length {arm_length}"
                )));
            }
            if map.insert(idx, img).is_some() {
                return Err(Error::InvalidLightField(format!("duplicate view {idx}")));
            }
        }
        let expected = plus_pattern(arm_length);
        if map.len() != expected.len() {
            let missing: Vec<String> = expected
                .iter()
                .filter(|v| !map.contains_key(v))
                .map(|v| v.to_string())
                .collect();
            return Err(Error::InvalidLightField(format!(
                "missing views {}",
                missing.join(", ")
            )));
        }
        let center = map
            .get(&ViewIndex::CENTER)
            .ok_or(Error::MissingView(ViewIndex::CENTER))?;
        let dims = center.dims();
        if let Some((idx, img)) = map.iter().find(|(_, img)| img.dims() != dims) {
            return Err(Error::InvalidLightField(format!(
                "view {idx} has dims {:?}, center has {:?}",
                img.dims(),
                dims
            )));
        }
        Ok(SparseLightField {
            arm_length,
            baseline,
            width: dims.0,
            height: dims.1,
            channels: dims.2,
            views: map,
        })
    }

    pub fn arm_length(&self) -> usize {
        self.arm_length
    }

    /// Views per arm, `2 * arm_length + 1`.
    pub fn views_per_arm(&self) -> usize {
        2 * self.arm_length + 1
    }

    pub fn baseline(&self) -> f64 {
        self.baseline
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }

    pub fn view(&self, idx: ViewIndex) -> Result<&Image> {
        self.views.get(&idx).ok_or(Error::MissingView(idx))
    }

    pub fn contains(&self, idx: ViewIndex) -> bool {
        self.views.contains_key(&idx)
    }

    pub fn central(&self) -> &Image {
        &self.views[&ViewIndex::CENTER]
    }

    /// Views in plus-pattern order.
    pub fn iter(&self) -> impl Iterator<Item = (ViewIndex, &Image)> + '_ {
        plus_pattern(self.arm_length)
            .into_iter()
            .map(move |idx| (idx, &self.views[&idx]))
    }

    /// Applies `f` to every view, keeping the pattern and baseline.
    pub fn try_map(&self, mut f: impl FnMut(ViewIndex, &Image) -> Result<Image>) -> Result<Self> {
        let views = self
            .iter()
            .map(|(idx, img)| f(idx, img).map(|out| (idx, out)))
            .collect::<Result<Vec<_>>>()?;
        SparseLightField::new(self.arm_length, self.baseline, views)
    }
}

/// Rigid offsets `cTs` of each sub-aperture relative to the central one.
#[derive(Clone, Debug, PartialEq)]
pub struct SubApertureLayout {
    baseline: f64,
    offsets: BTreeMap<ViewIndex, RigidTransform>,
}

impl SubApertureLayout {
    /// Pure in-plane translations `(s * b, t * b, 0)`.
    pub fn plus(arm_length: usize, baseline: f64) -> Result<Self> {
        let offsets = plus_pattern(arm_length).into_iter().map(|idx| {
            let t = Vector3::new(idx.s as f64 * baseline, idx.t as f64 * baseline, 0.0);
            (idx, RigidTransform::from_translation(t))
        });
        SubApertureLayout::from_offsets(baseline, offsets)
    }

    pub fn from_offsets(
        baseline: f64,
        offsets: impl IntoIterator<Item = (ViewIndex, RigidTransform)>,
    ) -> Result<Self> {
        if !(baseline > 0.0 && baseline.is_finite()) {
            return Err(Error::InvalidLightField(format!(
                "baseline must be positive, got {baseline}"
            )));
        }
        let offsets: BTreeMap<_, _> = offsets.into_iter().collect();
        match offsets.get(&ViewIndex::CENTER) {
            Some(c) if *c == RigidTransform::identity() => {}
            Some(_) => {
                return Err(Error::InvalidLightField(
                    "central sub-aperture offset must be the identity".into(),
                ))
            }
            None => return Err(Error::MissingView(ViewIndex::CENTER)),
        }
        Ok(SubApertureLayout { baseline, offsets })
    }

    pub fn baseline(&self) -> f64 {
        self.baseline
    }

    pub fn offset(&self, idx: ViewIndex) -> Result<&RigidTransform> {
        self.offsets.get(&idx).ok_or(Error::MissingView(idx))
    }

    pub fn contains(&self, idx: ViewIndex) -> bool {
        self.offsets.contains_key(&idx)
    }

    pub fn views(&self) -> impl Iterator<Item = ViewIndex> + '_ {
        self.offsets.keys().copied()
    }
}

/// Per-pixel positive inverse depth (1/m), row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct InverseDepthMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl InverseDepthMap {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "inverse depth map {width}x{height} with {} values",
                data.len()
            )));
        }
        if let Some(&bad) = data.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::NonPositiveInverseDepth(bad));
        }
        Ok(InverseDepthMap {
            width,
            height,
            data,
        })
    }

    pub fn constant(width: usize, height: usize, inverse_depth: f64) -> Result<Self> {
        InverseDepthMap::new(width, height, vec![inverse_depth; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Multiplies every value by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        InverseDepthMap::new(
            self.width,
            self.height,
            self.data.iter().map(|v| v * factor).collect(),
        )
    }

    pub fn depths(&self) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().map(|v| 1.0 / v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn lf(arm: usize) -> SparseLightField {
        let views = plus_pattern(arm)
            .into_iter()
            .map(|v| (v, Image::constant(4, 3, 1, 0.5).unwrap()));
        SparseLightField::new(arm, 0.01, views).unwrap()
    }

    #[test]
    fn plus_pattern_sizes() {
        assert_eq!(plus_pattern(4).len(), 17);
        assert_eq!(plus_pattern(0), vec![ViewIndex::CENTER]);
        let one: BTreeSet<_> = plus_pattern(1).into_iter().collect();
        let expected: BTreeSet<_> = [(-1, 0), (0, 0), (1, 0), (0, -1), (0, 1)]
            .into_iter()
            .map(|(s, t)| ViewIndex::new(s, t))
            .collect();
        assert_eq!(one, expected);
        assert_eq!(plus_pattern(1).len(), 5);
    }

    #[test]
    fn plus_pattern_order() {
        let p = plus_pattern(2);
        let expected = [(-2, 0), (-1, 0), (0, 0), (1, 0), (2, 0), (0, -2), (0, -1), (0, 1), (0, 2)];
        let got: Vec<_> = p.iter().map(|v| (v.s, v.t)).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn plus_pattern_closed_under_negation() {
        for a in 0..6 {
            let p = plus_pattern(a);
            assert_eq!(p.len(), 4 * a + 1);
            let set: BTreeSet<_> = p.iter().copied().collect();
            assert_eq!(set.len(), p.len());
            assert!(p.iter().all(|v| set.contains(&ViewIndex::new(-v.s, -v.t))));
        }
    }

    #[test]
    fn rejects_non_plus_view_sets() {
        let img = || Image::constant(4, 3, 1, 0.5).unwrap();
        let mut views: Vec<_> = plus_pattern(1).into_iter().map(|v| (v, img())).collect();
        views.pop();
        assert!(SparseLightField::new(1, 0.01, views.clone()).is_err());
        views.push((ViewIndex::new(1, 1), img()));
        assert!(SparseLightField::new(1, 0.01, views).is_err());
        let views: Vec<_> = plus_pattern(1).into_iter().map(|v| (v, img())).collect();
        assert!(SparseLightField::new(1, 0.0, views).is_err());
    }

    #[test]
    fn rejects_mismatched_dims() {
        let views = plus_pattern(1).into_iter().map(|v| {
            let w = if v.s == 1 { 5 } else { 4 };
            (v, Image::constant(w, 3, 1, 0.5).unwrap())
        });
        assert!(SparseLightField::new(1, 0.01, views).is_err());
    }

    #[test]
    fn accessors() {
        let l = lf(4);
        assert_eq!(l.len(), 17);
        assert_eq!(l.views_per_arm(), 9);
        assert!(l.view(ViewIndex::new(0, -4)).is_ok());
        assert!(matches!(l.view(ViewIndex::new(1, 1)), Err(Error::MissingView(_))));
        assert_eq!(l.iter().count(), 17);
    }

    #[test]
    fn default_layout_offsets() {
        let layout = SubApertureLayout::plus(4, 0.01).unwrap();
        assert_eq!(*layout.offset(ViewIndex::CENTER).unwrap(), RigidTransform::identity());
        let off = layout.offset(ViewIndex::new(-3, 0)).unwrap();
        assert_eq!(*off.translation(), Vector3::new(-0.03, 0.0, 0.0));
        assert_eq!(*off.rotation(), nalgebra::Matrix3::identity());
        assert_eq!(layout.views().count(), 17);
    }

    #[test]
    fn inverse_depth_validation() {
        assert!(InverseDepthMap::new(2, 1, vec![1.0, 0.0]).is_err());
        assert!(InverseDepthMap::new(2, 1, vec![1.0, f64::INFINITY]).is_err());
        assert!(InverseDepthMap::new(2, 2, vec![1.0]).is_err());
        let m = InverseDepthMap::constant(2, 2, 2.0).unwrap();
        assert!(m.depths().all(|d| d == 0.5));
    }
}
