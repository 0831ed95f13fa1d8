//! Photometric L1 reconstruction losses and inverse-depth regularizers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::lightfield::{InverseDepthMap, SparseLightField, ViewIndex};
use crate::warp::WarpResult;

/// A loss value with gradients.
///
/// `grad_pose` is taken w.r.t. a left perturbation of the frame pose;
/// `grad_inverse_depth` w.r.t. each pixel of the central inverse-depth map
/// (empty when the loss carried no depth derivatives).
#[derive(Clone, Debug, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub grad_pose: [f64; 6],
    pub grad_inverse_depth: Vec<f64>,
    pub valid_count: usize,
}

impl LossValue {
    pub fn zero(pixels: usize) -> Self {
        LossValue {
            value: 0.0,
            grad_pose: [0.0; 6],
            grad_inverse_depth: vec![0.0; pixels],
            valid_count: 0,
        }
    }

    /// `self + weight * other`, gradients included.
    pub fn add_scaled(&mut self, other: &LossValue, weight: f64) {
        self.value += weight * other.value;
        for (a, b) in self.grad_pose.iter_mut().zip(other.grad_pose) {
            *a += weight * b;
        }
        if self.grad_inverse_depth.is_empty() {
            self.grad_inverse_depth = vec![0.0; other.grad_inverse_depth.len()];
        }
        for (a, b) in self
            .grad_inverse_depth
            .iter_mut()
            .zip(&other.grad_inverse_depth)
        {
            *a += weight * b;
        }
        self.valid_count = self.valid_count.max(other.valid_count);
    }

    fn scale(&mut self, factor: f64) {
        self.value *= factor;
        self.grad_pose.iter_mut().for_each(|g| *g *= factor);
        self.grad_inverse_depth.iter_mut().for_each(|g| *g *= factor);
    }
}

#[inline]
fn sign(r: f64) -> f64 {
    if r > 0.0 {
        1.0
    } else if r < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Masked mean absolute difference between `a` and `b`.
pub fn masked_l1(a: &Image, b: &Image, mask: &[bool]) -> Result<f64> {
    if a.dims() != b.dims() || mask.len() != a.width() * a.height() {
        return Err(Error::DimensionMismatch(format!(
            "images {:?} vs {:?}, mask of {}",
            a.dims(),
            b.dims(),
            mask.len()
        )));
    }
    let ch = a.channels();
    let (mut sum, mut n) = (0.0, 0usize);
    for (i, _) in mask.iter().enumerate().filter(|(_, m)| **m) {
        for c in 0..ch {
            sum += (a.data()[i * ch + c] - b.data()[i * ch + c]).abs();
        }
        n += ch;
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(sum / n as f64)
}

/// Mean absolute intensity difference over valid pixels.
///
/// The subgradient at exact ties is zero.
pub fn photometric_single(target: &Image, warp: &WarpResult) -> Result<LossValue> {
    if target.dims() != warp.warped.dims() {
        return Err(Error::DimensionMismatch(format!(
            "target {:?} vs warped {:?}",
            target.dims(),
            warp.warped.dims()
        )));
    }
    let ch = target.channels();
    let pixels = target.width() * target.height();
    let valid_count = warp.valid_count();
    if valid_count == 0 {
        return Err(Error::EmptyMask);
    }
    let n = (valid_count * ch) as f64;
    let t = target.data();
    let p = warp.warped.data();
    let mut sum = 0.0;
    let mut grad_pose = [0.0; 6];
    let mut grad_depth = match warp.jacobians {
        Some(_) => vec![0.0; pixels],
        None => Vec::new(),
    };
    for i in (0..pixels).filter(|&i| warp.validity[i]) {
        for c in 0..ch {
            let j = i * ch + c;
            let r = t[j] - p[j];
            sum += r.abs();
            if let Some(jac) = &warp.jacobians {
                // d|t - p| = -sign(r) dp
                let s = -sign(r);
                if s != 0.0 {
                    for (g, d) in grad_pose.iter_mut().zip(jac.pose[j]) {
                        *g += s * d;
                    }
                    grad_depth[jac.source[i]] += s * jac.inverse_depth[j];
                }
            }
        }
    }
    let mut out = LossValue {
        value: sum,
        grad_pose,
        grad_inverse_depth: grad_depth,
        valid_count,
    };
    out.scale(1.0 / n);
    Ok(out)
}

/// Mean over views of the per-view masked L1 losses.
pub fn photometric_multi(
    target: &SparseLightField,
    warps: &BTreeMap<ViewIndex, WarpResult>,
) -> Result<LossValue> {
    if warps.is_empty() {
        return Err(Error::EmptyMask);
    }
    let pixels = target.width() * target.height();
    let mut total = LossValue::zero(pixels);
    let mut valid = 0;
    for (view, warp) in warps {
        let l = photometric_single(target.view(*view)?, warp)?;
        valid += l.valid_count;
        total.add_scaled(&l, 1.0 / warps.len() as f64);
    }
    if warps.values().all(|w| w.jacobians.is_none()) {
        total.grad_inverse_depth.clear();
    }
    total.valid_count = valid;
    Ok(total)
}

/// Inverse-depth grid as plain values, used for the pyramid levels.
#[derive(Clone, Debug)]
struct Grid {
    w: usize,
    h: usize,
    v: Vec<f64>,
}

impl Grid {
    fn down(&self) -> Option<Grid> {
        if self.w < 6 || self.h < 6 || self.w % 2 != 0 || self.h % 2 != 0 {
            return None;
        }
        let (w, h) = (self.w / 2, self.h / 2);
        let mut v = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let a = |xx: usize, yy: usize| self.v[yy * self.w + xx];
                v.push(0.25 * (a(2 * x, 2 * y) + a(2 * x + 1, 2 * y) + a(2 * x, 2 * y + 1) + a(2 * x + 1, 2 * y + 1)));
            }
        }
        Some(Grid { w, h, v })
    }

    /// Adjoint of `down`: spreads a coarse gradient over the 2x2 blocks.
    fn up_gradient(coarse: &[f64], w: usize, h: usize) -> Vec<f64> {
        let (cw, _) = (w / 2, h / 2);
        let mut out = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                out[y * w + x] = 0.25 * coarse[(y / 2) * cw + x / 2];
            }
        }
        out
    }
}

/// Mean L1 of second-order differences and its gradient on one level.
fn second_order(g: &Grid) -> (f64, Vec<f64>) {
    let (w, h) = (g.w, g.h);
    let mut grad = vec![0.0; w * h];
    let mut sum = 0.0;
    let terms = h * w.saturating_sub(2) + w * h.saturating_sub(2);
    if terms == 0 {
        return (0.0, grad);
    }
    let at = |x: usize, y: usize| y * w + x;
    for y in 0..h {
        for x in 1..w.saturating_sub(1) {
            let d = g.v[at(x - 1, y)] - 2.0 * g.v[at(x, y)] + g.v[at(x + 1, y)];
            sum += d.abs();
            let s = sign(d);
            grad[at(x - 1, y)] += s;
            grad[at(x, y)] -= 2.0 * s;
            grad[at(x + 1, y)] += s;
        }
    }
    for y in 1..h.saturating_sub(1) {
        for x in 0..w {
            let d = g.v[at(x, y - 1)] - 2.0 * g.v[at(x, y)] + g.v[at(x, y + 1)];
            sum += d.abs();
            let s = sign(d);
            grad[at(x, y - 1)] += s;
            grad[at(x, y)] -= 2.0 * s;
            grad[at(x, y + 1)] += s;
        }
    }
    let n = terms as f64;
    grad.iter_mut().for_each(|v| *v /= n);
    (sum / n, grad)
}

/// Multi-scale second-order smoothness of inverse depth.
///
/// Level 0 is the map itself; each further level is a 2x2 box
/// downsampling of the previous one, stopping early when a level would
/// drop below 3x3 or have odd dimensions. Level `l` is weighted `1 / 2^l`.
pub fn smoothness_loss(inverse_depth: &InverseDepthMap, levels: usize) -> LossValue {
    let (w, h) = (inverse_depth.width(), inverse_depth.height());
    let mut pyramid = vec![Grid {
        w,
        h,
        v: inverse_depth.data().to_vec(),
    }];
    while pyramid.len() < levels.max(1) {
        match pyramid.last().and_then(Grid::down) {
            Some(g) => pyramid.push(g),
            None => break,
        }
    }
    let mut value = 0.0;
    let mut back: Option<Vec<f64>> = None;
    for (l, g) in pyramid.iter().enumerate().rev() {
        let weight = 0.5f64.powi(l as i32);
        let (v, mut grad) = second_order(g);
        value += weight * v;
        grad.iter_mut().for_each(|x| *x *= weight);
        if let Some(coarse) = back.take() {
            for (a, b) in grad.iter_mut().zip(Grid::up_gradient(&coarse, g.w, g.h)) {
                *a += b;
            }
        }
        back = Some(grad);
    }
    LossValue {
        value,
        grad_pose: [0.0; 6],
        grad_inverse_depth: back.unwrap_or_default(),
        valid_count: w * h,
    }
}

/// Mean anisotropic L1 of first-order forward differences.
pub fn tv_loss(inverse_depth: &InverseDepthMap) -> LossValue {
    let (w, h) = (inverse_depth.width(), inverse_depth.height());
    let v = inverse_depth.data();
    let mut grad = vec![0.0; w * h];
    let terms = h * (w - 1) + (h - 1) * w;
    let mut sum = 0.0;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w {
                let d = v[i + 1] - v[i];
                sum += d.abs();
                grad[i + 1] += sign(d);
                grad[i] -= sign(d);
            }
            if y + 1 < h {
                let d = v[i + w] - v[i];
                sum += d.abs();
                grad[i + w] += sign(d);
                grad[i] -= sign(d);
            }
        }
    }
    let n = terms.max(1) as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    LossValue {
        value: sum / n,
        grad_pose: [0.0; 6],
        grad_inverse_depth: grad,
        valid_count: w * h,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regularizer {
    Smoothness,
    TotalVariation,
}

/// Smoothness for the first `switch_fraction` of the iterations, total
/// variation afterwards.
pub fn regularizer_schedule(iteration: usize, total_iterations: usize, switch_fraction: f64) -> Regularizer {
    let switch = (switch_fraction * total_iterations as f64).round() as usize;
    if iteration < switch {
        Regularizer::Smoothness
    } else {
        Regularizer::TotalVariation
    }
}

/// `photometric + weight * regularizer`.
pub fn total_loss(photometric: &LossValue, regularizer: &LossValue, weight: f64) -> Result<LossValue> {
    if !(weight >= 0.0 && weight.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "regularizer weight must be non-negative, got {weight}"
        )));
    }
    let mut out = photometric.clone();
    out.add_scaled(regularizer, weight);
    Ok(out)
}
