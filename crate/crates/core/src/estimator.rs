//! Direct coarse-to-fine estimation of relative pose and central inverse
//! depth by Adam on the photometric objective.
//!
//! The pose is parameterized by the twist `ξ` of `T = exp(ξ)`, mapping
//! points of the current central frame into the previous one. Inverse
//! depth is optimized as `λ = ln ρ` per pixel.
//!
//! In multi-warp mode the objective is the mean over the view set of the
//! per-view temporal losses, plus `intra_frame_weight` times the mean
//! cross-view loss within the current frame (each non-central view warped
//! onto the central one through the known offsets). The temporal term
//! alone cannot fix metric scale for purely translational motion.

use nalgebra::Vector6;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{se3_left_jacobian, Intrinsics, RigidTransform, Twist};
use crate::lightfield::{five_view_set, InverseDepthMap, SparseLightField, SubApertureLayout, ViewIndex};
use crate::losses::{
    photometric_multi, photometric_single, regularizer_schedule, smoothness_loss, total_loss, tv_loss,
    LossValue, Regularizer,
};
use crate::warp::{
    project_pixels_single, view_inverse_depths, warp_image, warp_lightfield, NonCentralDepth, WarpResult,
};

/// Images with intensity variance below this carry no usable gradient.
pub const MIN_INTENSITY_VARIANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WarpMode {
    #[serde(alias = "single")]
    SingleWarp,
    #[default]
    #[serde(alias = "multi")]
    MultiWarp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    pub mode: WarpMode,
    pub view_set: Vec<ViewIndex>,
    pub pyramid_levels: usize,
    /// Iterations per level, coarsest first.
    pub iterations: Vec<usize>,
    pub pose_learning_rate: f64,
    pub depth_learning_rate: f64,
    /// Rates are multiplied by this once per level above the finest, so
    /// they halve on each step toward full resolution for the default 2.
    pub level_rate_factor: f64,
    /// Within a level the rate decays on a cosine to this fraction.
    pub final_rate_fraction: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub regularizer_weight: f64,
    /// Fraction of all iterations that use smoothness before switching to
    /// total variation.
    pub regularizer_switch: f64,
    pub smoothness_levels: usize,
    pub intra_frame_weight: f64,
    pub init_inverse_depth: f64,
    pub non_central_depth: NonCentralDepth,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            mode: WarpMode::MultiWarp,
            view_set: five_view_set(),
            pyramid_levels: 4,
            iterations: vec![150, 120, 100, 60],
            pose_learning_rate: 1e-3,
            depth_learning_rate: 1e-2,
            level_rate_factor: 2.0,
            final_rate_fraction: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            regularizer_weight: 0.3,
            regularizer_switch: 0.3,
            smoothness_levels: 4,
            intra_frame_weight: 1.0,
            init_inverse_depth: 1.0 / 0.55,
            non_central_depth: NonCentralDepth::Central,
        }
    }
}

impl EstimatorConfig {
    pub fn single() -> Self {
        EstimatorConfig {
            mode: WarpMode::SingleWarp,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.pyramid_levels == 0 {
            return bad("pyramid_levels must be at least 1".into());
        }
        if self.iterations.len() != self.pyramid_levels {
            return bad(format!(
                "iterations lists {} levels, pyramid has {}",
                self.iterations.len(),
                self.pyramid_levels
            ));
        }
        if self.iterations.last() == Some(&0) {
            return bad("the finest level needs at least one iteration".into());
        }
        let positive = [
            ("pose_learning_rate", self.pose_learning_rate),
            ("depth_learning_rate", self.depth_learning_rate),
            ("level_rate_factor", self.level_rate_factor),
            ("adam_epsilon", self.adam_epsilon),
            ("init_inverse_depth", self.init_inverse_depth),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        let unit = [
            ("beta1", self.beta1),
            ("beta2", self.beta2),
        ];
        for (name, v) in unit {
            if !(0.0..1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1), got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.final_rate_fraction) {
            return bad(format!("final_rate_fraction must lie in [0, 1], got {}", self.final_rate_fraction));
        }
        if !(0.0..=1.0).contains(&self.regularizer_switch) {
            return bad(format!("regularizer_switch must lie in [0, 1], got {}", self.regularizer_switch));
        }
        for (name, v) in [("regularizer_weight", self.regularizer_weight), ("intra_frame_weight", self.intra_frame_weight)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        if self.smoothness_levels == 0 {
            return bad("smoothness_levels must be at least 1".into());
        }
        if self.mode == WarpMode::MultiWarp {
            if self.view_set.len() < 2 {
                return bad("multi-warp needs at least two views".into());
            }
            let mut sorted = self.view_set.clone();
            sorted.sort();
            sorted.dedup();
            if sorted.len() != self.view_set.len() {
                return bad("view_set contains duplicates".into());
            }
        }
        Ok(())
    }
}

/// Starting point for an estimate; the depth map is at full resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct Initialization {
    pub pose: RigidTransform,
    pub inverse_depth: InverseDepthMap,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimateResult {
    pub pose: RigidTransform,
    pub inverse_depth: InverseDepthMap,
    /// Best objective reached at the finest level.
    pub final_loss: f64,
    /// Photometric part of `final_loss`.
    pub photometric_loss: f64,
    /// Best-so-far objective after each finest-level iteration; the first
    /// entry is the objective at the parameters handed over from the
    /// coarser levels.
    pub loss_trace: Vec<f64>,
    /// Whether the best objective improved by less than 1e-3 (relative)
    /// over the last fifth of the finest level.
    pub converged: bool,
}

/// Per-view 2x2 box pyramid, finest first.
pub fn build_pyramid(lf: &SparseLightField, levels: usize) -> Result<Vec<SparseLightField>> {
    if levels == 0 {
        return Err(Error::InvalidConfig("pyramid needs at least one level".into()));
    }
    let f = 1usize << (levels - 1);
    if lf.width() % f != 0 || lf.height() % f != 0 {
        return Err(Error::IndivisibleDims {
            width: lf.width(),
            height: lf.height(),
            exponent: levels - 1,
        });
    }
    let mut out = vec![lf.clone()];
    for _ in 1..levels {
        let next = out.last().expect("non-empty").try_map(|_, img| img.downsample2())?;
        out.push(next);
    }
    Ok(out)
}

fn downsample_map(map: &InverseDepthMap) -> Result<InverseDepthMap> {
    let (w, h) = (map.width() / 2, map.height() / 2);
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let s = map.get(2 * x, 2 * y) + map.get(2 * x + 1, 2 * y) + map.get(2 * x, 2 * y + 1) + map.get(2 * x + 1, 2 * y + 1);
            data.push(0.25 * s);
        }
    }
    InverseDepthMap::new(w, h, data)
}

/// Bilinear 2x upsampling with pixel-centre alignment and clamped borders.
fn upsample2(v: &[f64], w: usize, h: usize) -> Vec<f64> {
    let (fw, fh) = (2 * w, 2 * h);
    let mut out = Vec::with_capacity(fw * fh);
    let coord = |i: usize, n: usize| -> (usize, usize, f64) {
        let c = ((i as f64 + 0.5) * 0.5 - 0.5).clamp(0.0, (n - 1) as f64);
        let i0 = (c.floor() as usize).min(n - 1);
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, c - i0 as f64)
    };
    for y in 0..fh {
        let (y0, y1, ty) = coord(y, h);
        for x in 0..fw {
            let (x0, x1, tx) = coord(x, w);
            let top = v[y0 * w + x0] * (1.0 - tx) + v[y0 * w + x1] * tx;
            let bottom = v[y1 * w + x0] * (1.0 - tx) + v[y1 * w + x1] * tx;
            out.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    out
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], rates: impl Fn(usize) -> f64, cfg: &EstimatorConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * grad[i];
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= rates(i) * mh / (vh.sqrt() + cfg.adam_epsilon);
        }
    }
}

/// The objective at one pyramid level.
pub struct Objective<'a> {
    pub prev: &'a SparseLightField,
    pub cur: &'a SparseLightField,
    pub intrinsics: Intrinsics,
    pub layout: &'a SubApertureLayout,
    pub config: &'a EstimatorConfig,
}

/// Objective value split into its parts, with gradients of the total.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub total: LossValue,
    pub photometric: f64,
    pub intra_frame: f64,
    pub regularizer: f64,
}

impl Objective<'_> {
    /// Photometric part: temporal loss plus (multi-warp) the weighted
    /// intra-frame loss. Gradients are w.r.t. a left pose perturbation and
    /// the central inverse depth.
    pub fn data_term(&self, pose: &RigidTransform, inverse_depth: &InverseDepthMap, with_gradients: bool) -> Result<(LossValue, f64, f64)> {
        let (l, temporal, intra, _) = self.data_term_masked(pose, inverse_depth, with_gradients, None)?;
        Ok((l, temporal, intra))
    }

    /// As [`Objective::data_term`], with the validity mask of every warp
    /// intersected with the matching entry of `masks` when given. Also
    /// returns the masks that were used, temporal views first.
    pub fn data_term_masked(
        &self,
        pose: &RigidTransform,
        inverse_depth: &InverseDepthMap,
        with_gradients: bool,
        masks: Option<&[Vec<bool>]>,
    ) -> Result<(LossValue, f64, f64, Vec<Vec<bool>>)> {
        let k = &self.intrinsics;
        let mut used = Vec::new();
        let mut apply = |warp: &mut WarpResult| -> Result<()> {
            if let Some(m) = masks {
                let m = m
                    .get(used.len())
                    .ok_or_else(|| Error::DimensionMismatch("too few fixed masks".into()))?;
                warp.restrict(m);
            }
            used.push(warp.validity.clone());
            Ok(())
        };
        match self.config.mode {
            WarpMode::SingleWarp => {
                let coords = project_pixels_single(k, pose, inverse_depth, with_gradients);
                let mut warp = warp_image(self.prev.central(), &coords)?;
                apply(&mut warp)?;
                let l = photometric_single(self.cur.central(), &warp)?;
                let v = l.value;
                Ok((l, v, 0.0, used))
            }
            WarpMode::MultiWarp => {
                let views = &self.config.view_set;
                let depths = view_inverse_depths(k, self.layout, inverse_depth, views, self.config.non_central_depth)?;
                let mut warps = warp_lightfield(self.prev, k, self.layout, pose, &depths, views, with_gradients)?;
                for &v in views {
                    apply(warps.get_mut(&v).expect("warped every view"))?;
                }
                let mut total = photometric_multi(self.cur, &warps)?;
                let temporal = total.value;
                let intra = self.intra_frame(inverse_depth, with_gradients, &mut apply)?;
                let intra_value = intra.as_ref().map_or(0.0, |l| l.value);
                if let Some(l) = intra {
                    total.add_scaled(&l, self.config.intra_frame_weight);
                }
                Ok((total, temporal, intra_value, used))
            }
        }
    }

    /// Mean loss of the non-central views of the current frame warped onto
    /// its central view; carries depth gradients only.
    fn intra_frame(
        &self,
        inverse_depth: &InverseDepthMap,
        with_gradients: bool,
        apply: &mut impl FnMut(&mut WarpResult) -> Result<()>,
    ) -> Result<Option<LossValue>> {
        if self.config.intra_frame_weight == 0.0 {
            return Ok(None);
        }
        let others: Vec<ViewIndex> = self.config.view_set.iter().copied().filter(|v| !v.is_center()).collect();
        if others.is_empty() {
            return Ok(None);
        }
        let pixels = inverse_depth.width() * inverse_depth.height();
        let mut total = LossValue::zero(pixels);
        for &s in &others {
            let to_view = self.layout.offset(s)?.inverse();
            let coords = project_pixels_single(&self.intrinsics, &to_view, inverse_depth, with_gradients);
            let mut warp = warp_image(self.cur.view(s)?, &coords)?;
            apply(&mut warp)?;
            let l = photometric_single(self.cur.central(), &warp)?;
            total.add_scaled(&l, 1.0 / others.len() as f64);
        }
        total.grad_pose = [0.0; 6];
        if !with_gradients {
            total.grad_inverse_depth.clear();
        }
        Ok(Some(total))
    }

    pub fn evaluate(&self, pose: &RigidTransform, inverse_depth: &InverseDepthMap, regularizer: Regularizer, with_gradients: bool) -> Result<Evaluation> {
        let (data, photometric, intra_frame) = self.data_term(pose, inverse_depth, with_gradients)?;
        let reg = match regularizer {
            Regularizer::Smoothness => smoothness_loss(inverse_depth, self.config.smoothness_levels),
            Regularizer::TotalVariation => tv_loss(inverse_depth),
        };
        let mut total = total_loss(&data, &reg, self.config.regularizer_weight)?;
        if !with_gradients {
            total.grad_inverse_depth.clear();
        }
        Ok(Evaluation {
            total,
            photometric,
            intra_frame,
            regularizer: reg.value,
        })
    }
}

fn check_inputs(prev: &SparseLightField, cur: &SparseLightField, k: &Intrinsics, layout: &SubApertureLayout, config: &EstimatorConfig) -> Result<()> {
    config.validate()?;
    if (prev.width(), prev.height(), prev.channels()) != (cur.width(), cur.height(), cur.channels())
        || prev.arm_length() != cur.arm_length()
    {
        return Err(Error::DimensionMismatch(format!(
            "frames differ: {}x{}x{} arm {} vs {}x{}x{} arm {}",
            prev.width(),
            prev.height(),
            prev.channels(),
            prev.arm_length(),
            cur.width(),
            cur.height(),
            cur.channels(),
            cur.arm_length()
        )));
    }
    k.validate_for(cur.width(), cur.height())?;
    if config.mode == WarpMode::MultiWarp {
        for &v in &config.view_set {
            layout.offset(v)?;
            prev.view(v)?;
            cur.view(v)?;
        }
    }
    for lf in [prev, cur] {
        let var = lf.central().variance();
        if var < MIN_INTENSITY_VARIANCE {
            return Err(Error::EmptyGradient(var));
        }
    }
    Ok(())
}

/// Estimates `T` (current central frame to previous) and the current
/// central inverse depth, starting from the identity pose and a constant
/// depth.
pub fn estimate_pair(
    prev: &SparseLightField,
    cur: &SparseLightField,
    k: &Intrinsics,
    layout: &SubApertureLayout,
    config: &EstimatorConfig,
) -> Result<EstimateResult> {
    config.validate()?;
    let init = Initialization {
        pose: RigidTransform::identity(),
        inverse_depth: InverseDepthMap::constant(cur.width(), cur.height(), config.init_inverse_depth)?,
    };
    estimate_pair_from(prev, cur, k, layout, config, &init)
}

pub fn estimate_pair_from(
    prev: &SparseLightField,
    cur: &SparseLightField,
    k: &Intrinsics,
    layout: &SubApertureLayout,
    config: &EstimatorConfig,
    init: &Initialization,
) -> Result<EstimateResult> {
    check_inputs(prev, cur, k, layout, config)?;
    if (init.inverse_depth.width(), init.inverse_depth.height()) != (cur.width(), cur.height()) {
        return Err(Error::DimensionMismatch(format!(
            "initial depth is {}x{}, frames are {}x{}",
            init.inverse_depth.width(),
            init.inverse_depth.height(),
            cur.width(),
            cur.height()
        )));
    }
    let levels = config.pyramid_levels;
    let prev_pyr = build_pyramid(prev, levels)?;
    let cur_pyr = build_pyramid(cur, levels)?;
    let mut init_depth = init.inverse_depth.clone();
    for _ in 1..levels {
        init_depth = downsample_map(&init_depth)?;
    }

    let total_iterations: usize = config.iterations.iter().sum();
    let mut global_iter = 0usize;
    let mut xi: Twist = init.pose.log();
    let mut lambda: Vec<f64> = init_depth.data().iter().map(|v| v.ln()).collect();
    let (mut w, mut h) = (init_depth.width(), init_depth.height());

    let mut result = None;
    for (step, level) in (0..levels).rev().enumerate() {
        if step > 0 {
            lambda = upsample2(&lambda, w, h);
            w *= 2;
            h *= 2;
        }
        let finest = level == 0;
        let objective = Objective {
            prev: &prev_pyr[level],
            cur: &cur_pyr[level],
            intrinsics: k.downscaled(level),
            layout,
            config,
        };
        let factor = config.level_rate_factor.powi(level as i32);
        let pose_rate = config.pose_learning_rate * factor;
        let depth_rate = config.depth_learning_rate * factor;
        let n_iter = config.iterations[step];
        let mut adam = Adam::new(6 + w * h);
        let mut params: Vec<f64> = xi.iter().copied().chain(lambda.iter().copied()).collect();

        let mut best: Option<(f64, f64, Vec<f64>)> = None;
        let mut trace = Vec::new();
        let unpack = |p: &[f64]| -> Result<(Twist, RigidTransform, InverseDepthMap)> {
            let xi = Twist::from_iterator(p[..6].iter().copied());
            let map = InverseDepthMap::new(w, h, p[6..].iter().map(|l| l.exp()).collect())?;
            Ok((xi, RigidTransform::exp(&xi), map))
        };
        for i in 0..=n_iter {
            let (xi_i, pose, map) = unpack(&params).map_err(|_| Error::Diverged {
                level,
                iteration: i,
            })?;
            let reg = regularizer_schedule(global_iter.min(total_iterations.saturating_sub(1)), total_iterations, config.regularizer_switch);
            let eval = objective.evaluate(&pose, &map, reg, i < n_iter)?;
            if !eval.total.value.is_finite() {
                return Err(Error::Diverged { level, iteration: i });
            }
            if finest {
                // Track the final objective, which uses total variation.
                let (value, photometric) = if reg == Regularizer::TotalVariation {
                    (eval.total.value, eval.photometric + config.intra_frame_weight * eval.intra_frame)
                } else {
                    let data = eval.total.value - config.regularizer_weight * eval.regularizer;
                    (data + config.regularizer_weight * tv_loss(&map).value, data)
                };
                if best.as_ref().is_none_or(|b| value < b.0) {
                    best = Some((value, photometric, params.clone()));
                }
                trace.push(best.as_ref().expect("set above").0);
            }
            if i == n_iter {
                break;
            }
            let cosine = 0.5 * (1.0 + (std::f64::consts::PI * i as f64 / n_iter as f64).cos());
            let decay = config.final_rate_fraction + (1.0 - config.final_rate_fraction) * cosine;
            let g_delta = Vector6::from_row_slice(&eval.total.grad_pose);
            let g_xi = se3_left_jacobian(&xi_i).transpose() * g_delta;
            let mut grad = Vec::with_capacity(params.len());
            grad.extend(g_xi.iter().copied());
            grad.extend(eval.total.grad_inverse_depth.iter().zip(map.data()).map(|(g, r)| g * r));
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { level, iteration: i });
            }
            adam.step(
                &mut params,
                &grad,
                |j| if j < 6 { pose_rate * decay } else { depth_rate * decay },
                config,
            );
            global_iter += 1;
        }
        xi = Twist::from_iterator(params[..6].iter().copied());
        lambda = params[6..].to_vec();
        if finest {
            let (value, photometric, p) = best.expect("finest level ran at least once");
            let (_, pose, map) = unpack(&p)?;
            let tail = (trace.len() / 5).max(1);
            let before = trace[trace.len() - 1 - tail];
            let converged = before - value <= 1e-3 * value.abs().max(f64::MIN_POSITIVE);
            result = Some(EstimateResult {
                pose,
                inverse_depth: map,
                final_loss: value,
                photometric_loss: photometric,
                loss_trace: trace,
                converged,
            });
        }
    }
    Ok(result.expect("levels >= 1"))
}

/// Pairwise estimates along a sequence and the chained absolute poses
/// (first frame at the identity).
#[derive(Clone, Debug)]
pub struct TrajectoryEstimate {
    pub pairs: Vec<EstimateResult>,
    pub poses: Vec<RigidTransform>,
}

impl TrajectoryEstimate {
    pub fn relative_poses(&self) -> Vec<RigidTransform> {
        self.pairs.iter().map(|p| p.pose).collect()
    }
}

/// Estimates every consecutive pair, warm-starting each pair from the
/// previous pair's pose and depth.
pub fn estimate_trajectory(
    frames: &[SparseLightField],
    k: &Intrinsics,
    layout: &SubApertureLayout,
    config: &EstimatorConfig,
) -> Result<TrajectoryEstimate> {
    if frames.len() < 2 {
        return Err(Error::InvalidTrajectory(format!(
            "need at least two frames, got {}",
            frames.len()
        )));
    }
    config.validate()?;
    let mut pairs: Vec<EstimateResult> = Vec::with_capacity(frames.len() - 1);
    let mut poses = vec![RigidTransform::identity()];
    for i in 1..frames.len() {
        let wrap = |e: Error| Error::Pair {
            prev: i - 1,
            cur: i,
            source: Box::new(e),
        };
        let r = match pairs.last() {
            None => estimate_pair(&frames[i - 1], &frames[i], k, layout, config),
            Some(last) => {
                let init = Initialization {
                    pose: last.pose,
                    inverse_depth: last.inverse_depth.clone(),
                };
                estimate_pair_from(&frames[i - 1], &frames[i], k, layout, config, &init)
            }
        }
        .map_err(wrap)?;
        poses.push(poses.last().expect("non-empty").compose(&r.pose));
        pairs.push(r);
    }
    Ok(TrajectoryEstimate { pairs, poses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Image;
    use crate::lightfield::plus_pattern;

    fn lf(w: usize, h: usize, f: impl Fn(usize, usize) -> f64) -> SparseLightField {
        let views: Vec<_> = plus_pattern(1).into_iter().map(|idx| (idx, Image::from_fn(w, h, &f).unwrap())).collect();
        SparseLightField::new(1, 0.01, views).unwrap()
    }

    #[test]
    fn pyramid_sizes() {
        let l = lf(224, 160, |x, y| ((x + y) % 5) as f64 / 5.0);
        let p = build_pyramid(&l, 4).unwrap();
        assert_eq!((p[3].width(), p[3].height()), (28, 20));
        assert_eq!(build_pyramid(&l, 1).unwrap(), vec![l.clone()]);
        let c = lf(16, 8, |_, _| 0.3);
        for level in build_pyramid(&c, 3).unwrap() {
            assert!(level.central().data().iter().all(|&v| v == 0.3));
        }
        let odd = lf(20, 12, |_, _| 0.3);
        assert!(matches!(build_pyramid(&odd, 4), Err(Error::IndivisibleDims { .. })));
    }

    #[test]
    fn upsample_constant_and_ramp() {
        let v = vec![2.0; 12];
        assert!(upsample2(&v, 4, 3).iter().all(|&x| x == 2.0));
        let r: Vec<f64> = (0..4).map(|x| x as f64).collect();
        let up = upsample2(&r, 4, 1);
        assert_eq!(up[1], 0.25);
        assert_eq!(up[2], 0.75);
    }

    #[test]
    fn config_validation() {
        assert!(EstimatorConfig::default().validate().is_ok());
        let mut c = EstimatorConfig::default();
        c.view_set = vec![ViewIndex::CENTER];
        assert!(c.validate().is_err());
        let mut c = EstimatorConfig::default();
        c.iterations = vec![10];
        assert!(c.validate().is_err());
        let mut c = EstimatorConfig::default();
        c.regularizer_weight = -0.3;
        assert!(c.validate().is_err());
        let text = serde_json::to_string(&EstimatorConfig::default()).unwrap();
        let back: EstimatorConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, EstimatorConfig::default());
        let m: EstimatorConfig = serde_json::from_str(r#"{"mode": "single"}"#).unwrap();
        assert_eq!(m.mode, WarpMode::SingleWarp);
    }

    #[test]
    fn textureless_input_is_rejected() {
        let l = lf(32, 16, |_, _| 0.5);
        let k = Intrinsics::new(30.0, 30.0, 15.5, 7.5).unwrap();
        let layout = SubApertureLayout::plus(1, 0.01).unwrap();
        let r = estimate_pair(&l, &l, &k, &layout, &EstimatorConfig::default());
        assert!(matches!(r, Err(Error::EmptyGradient(_))));
    }
}
