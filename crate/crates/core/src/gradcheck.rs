//! Finite-difference checks of the analytic objective gradients.
//!
//! The photometric objectives are piecewise smooth: the L1 residual, the
//! bilinear cell and the validity mask all switch discretely. Masks are
//! held at their values at the evaluation point, and each central
//! difference is accepted only once halving the step leaves it unchanged,
//! which rejects brackets that straddle a kink.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::{EstimatorConfig, Objective, WarpMode};
use crate::geometry::{se3_exp, Intrinsics, RigidTransform, Twist};
use crate::lightfield::{InverseDepthMap, SparseLightField, SubApertureLayout};
use crate::synth::{render_lf, Camera, PlanarScene, TexturedPlane};

/// Which data term to check.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckedObjective {
    /// Central-view photometric loss.
    Single,
    /// Mean photometric loss over the warped view set.
    Multi,
    /// The multi-warp data term the estimator minimizes, intra-frame term included.
    MultiWithIntraFrame,
}

impl CheckedObjective {
    pub const ALL: [CheckedObjective; 3] = [
        CheckedObjective::Single,
        CheckedObjective::Multi,
        CheckedObjective::MultiWithIntraFrame,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckedObjective::Single => "single",
            CheckedObjective::Multi => "multi",
            CheckedObjective::MultiWithIntraFrame => "multi-intra",
        }
    }

    fn config(self) -> EstimatorConfig {
        match self {
            CheckedObjective::Single => EstimatorConfig::single(),
            CheckedObjective::Multi => EstimatorConfig {
                mode: WarpMode::MultiWarp,
                intra_frame_weight: 0.0,
                ..Default::default()
            },
            CheckedObjective::MultiWithIntraFrame => EstimatorConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckConfig {
    pub scenes: usize,
    pub depth_pixels: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            scenes: 5,
            depth_pixels: 100,
            tolerance: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComponentCheck {
    /// `pose[k]` or `depth[i]`.
    pub parameter: String,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
    pub step: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub objective: CheckedObjective,
    pub scene: usize,
    pub checks: Vec<ComponentCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn max_relative_error(&self) -> f64 {
        self.checks.iter().map(|c| c.relative_error).fold(0.0, f64::max)
    }
}

/// A random textured planar scene viewed by two light-field frames.
#[derive(Clone, Debug)]
pub struct CheckScene {
    pub prev: SparseLightField,
    pub cur: SparseLightField,
    pub intrinsics: Intrinsics,
    pub layout: SubApertureLayout,
    /// Ground-truth current-to-previous pose.
    pub pose: RigidTransform,
    /// Ground-truth current central inverse depth.
    pub inverse_depth: InverseDepthMap,
}

/// 112x80 five-view light fields of a tilted background plane and a
/// smaller foreground plane, related by a random motion of up to 1 cm
/// and 1 degree.
pub fn random_scene(seed: u64) -> Result<CheckScene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = Intrinsics::new(100.0, 100.0, 55.5, 39.5)?;
    let camera = Camera::new(k, 112, 80, 1, 0.01)?;
    let back_depth = rng.random_range(0.6..0.8);
    let tilt = Vector3::new(rng.random_range(-0.25..0.25), rng.random_range(-0.25..0.25), 0.0);
    let back = TexturedPlane::new(
        RigidTransform::new(crate::geometry::so3_exp(&tilt), Vector3::new(0.0, 0.0, back_depth))?,
        (1.2 * back_depth, 1.0 * back_depth),
        4.0 * back_depth / k.fx,
        rng.random(),
    )?;
    let front_depth = rng.random_range(0.4..0.55);
    let front = TexturedPlane::new(
        RigidTransform::from_translation(Vector3::new(
            rng.random_range(-0.05..0.05),
            rng.random_range(-0.03..0.03),
            front_depth,
        )),
        (0.08, 0.06),
        4.0 * front_depth / k.fx,
        rng.random(),
    )?;
    let scene = PlanarScene::new(vec![back, front])?;
    let mut v = [0.0; 6];
    for x in &mut v[..3] {
        *x = rng.random_range(-0.01..0.01);
    }
    for x in &mut v[3..] {
        *x = rng.random_range(-1.0f64..1.0).to_radians();
    }
    let pose = se3_exp(&Twist::from(v));
    let prev = render_lf(&scene, &camera, &RigidTransform::identity())?;
    let cur = render_lf(&scene, &camera, &pose)?;
    Ok(CheckScene {
        prev: prev.lightfield,
        cur: cur.lightfield.clone(),
        intrinsics: k,
        layout: camera.layout,
        pose,
        inverse_depth: cur.central_inverse_depth().clone(),
    })
}

const POSE_STEP: f64 = 1e-6;
const DEPTH_STEP: f64 = 1e-5;
const HALVINGS: usize = 6;
const SMOOTH_AGREEMENT: f64 = 1e-4;

/// Compares analytic data-term gradients with central differences at
/// `pose` and `inverse_depth` for the six pose components and the
/// inverse-depth pixels in `pixels`.
pub fn check_gradients(
    objective: &Objective<'_>,
    pose: &RigidTransform,
    inverse_depth: &InverseDepthMap,
    pixels: &[usize],
    tolerance: f64,
) -> Result<Vec<ComponentCheck>> {
    let (base, _, _, masks) = objective.data_term_masked(pose, inverse_depth, true, None)?;
    let value = |p: &RigidTransform, d: &InverseDepthMap| -> Result<Option<f64>> {
        let (l, _, _, used) = objective.data_term_masked(p, d, false, Some(&masks))?;
        // A mask that shrank means the bracket left the fixed-mask region.
        Ok((used == masks).then_some(l.value))
    };
    let mut out = Vec::with_capacity(6 + pixels.len());
    for kk in 0..6 {
        let eval = |h: f64| -> Result<Option<f64>> {
            let mut e = [0.0; 6];
            e[kk] = h;
            let e = Twist::from(e);
            let plus = value(&(se3_exp(&e) * *pose), inverse_depth)?;
            let minus = value(&(se3_exp(&-e) * *pose), inverse_depth)?;
            Ok(plus.zip(minus).map(|(p, m)| (p - m) / (2.0 * h)))
        };
        out.push(compare(format!("pose[{kk}]"), base.grad_pose[kk], POSE_STEP, eval, tolerance)?);
    }
    let (w, h) = (inverse_depth.width(), inverse_depth.height());
    for &i in pixels {
        if i >= w * h {
            return Err(Error::DimensionMismatch(format!("pixel {i} outside a {w}x{h} map")));
        }
        let step = DEPTH_STEP * inverse_depth.data()[i];
        let eval = |s: f64| -> Result<Option<f64>> {
            let shifted = |delta: f64| {
                let mut v = inverse_depth.data().to_vec();
                v[i] += delta;
                InverseDepthMap::new(w, h, v)
            };
            let plus = value(pose, &shifted(s)?)?;
            let minus = value(pose, &shifted(-s)?)?;
            Ok(plus.zip(minus).map(|(p, m)| (p - m) / (2.0 * s)))
        };
        let analytic = base.grad_inverse_depth.get(i).copied().unwrap_or(0.0);
        out.push(compare(format!("depth[{i}]"), analytic, step, eval, tolerance)?);
    }
    Ok(out)
}

fn relative(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn compare(
    parameter: String,
    analytic: f64,
    step: f64,
    eval: impl Fn(f64) -> Result<Option<f64>>,
    tolerance: f64,
) -> Result<ComponentCheck> {
    // Halve until two successive differences agree; the last available
    // difference is reported if none do.
    let mut h = step;
    let mut last: Option<f64> = None;
    let mut chosen = None;
    for _ in 0..HALVINGS {
        if let Some(fd) = eval(h)? {
            if last.is_some_and(|prev| relative(prev, fd) <= SMOOTH_AGREEMENT) {
                chosen = Some((fd, h));
                break;
            }
            last = Some(fd);
        }
        h *= 0.5;
    }
    let (numeric, used_step) = chosen.or(last.map(|fd| (fd, 2.0 * h))).unwrap_or((f64::NAN, h));
    let err = relative(analytic, numeric);
    Ok(ComponentCheck {
        parameter,
        analytic,
        numeric,
        relative_error: err,
        step: used_step,
        passed: err <= tolerance,
    })
}

/// The evaluation point for scene checks: the ground truth moved off the
/// optimum so residuals are not all zero.
pub fn perturbed_point(scene: &CheckScene, seed: u64) -> Result<(RigidTransform, InverseDepthMap)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut v = [0.0; 6];
    for x in &mut v[..3] {
        *x = rng.random_range(-0.002..0.002);
    }
    for x in &mut v[3..] {
        *x = rng.random_range(-0.2f64..0.2).to_radians();
    }
    let pose = se3_exp(&Twist::from(v)) * scene.pose;
    let d = &scene.inverse_depth;
    let data = d.data().iter().map(|r| r * (1.0 + rng.random_range(-0.05..0.05))).collect();
    Ok((pose, InverseDepthMap::new(d.width(), d.height(), data)?))
}

/// Runs `objective` on `config.scenes` random scenes.
pub fn run_suite(config: &GradCheckConfig, objective: CheckedObjective) -> Result<Vec<GradCheckReport>> {
    let est = objective.config();
    let mut reports = Vec::with_capacity(config.scenes);
    for s in 0..config.scenes {
        let seed = config.seed.wrapping_add(s as u64);
        let scene = random_scene(seed)?;
        let (pose, depth) = perturbed_point(&scene, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31).wrapping_add(7));
        let n = depth.width() * depth.height();
        let pixels: Vec<usize> = rand::seq::index::sample(&mut rng, n, config.depth_pixels.min(n)).into_vec();
        let obj = Objective {
            prev: &scene.prev,
            cur: &scene.cur,
            intrinsics: scene.intrinsics,
            layout: &scene.layout,
            config: &est,
        };
        reports.push(GradCheckReport {
            objective,
            scene: s,
            checks: check_gradients(&obj, &pose, &depth, &pixels, config.tolerance)?,
        });
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_scene_is_reproducible() {
        let a = random_scene(3).unwrap();
        let b = random_scene(3).unwrap();
        assert_eq!(a.cur, b.cur);
        assert_eq!(a.pose, b.pose);
        assert_ne!(random_scene(4).unwrap().cur, a.cur);
    }

    #[test]
    fn compare_rejects_a_wrong_gradient() {
        let eval = |_: f64| Ok(Some(2.0));
        assert!(compare("x".into(), 2.0, 1e-3, eval, 1e-3).unwrap().passed);
        assert!(!compare("x".into(), 2.1, 1e-3, eval, 1e-3).unwrap().passed);
    }
}
