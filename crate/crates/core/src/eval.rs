//! Frame-to-frame relative pose error and planar depth statistics.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::RigidTransform;
use crate::lightfield::InverseDepthMap;

/// Timestamped absolute camera-to-world poses.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    timestamps: Vec<f64>,
    poses: Vec<RigidTransform>,
}

impl Trajectory {
    pub fn new(timestamps: Vec<f64>, poses: Vec<RigidTransform>) -> Result<Self> {
        if timestamps.len() != poses.len() {
            return Err(Error::LengthMismatch(timestamps.len(), poses.len()));
        }
        if timestamps.iter().any(|t| !t.is_finite()) || timestamps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidTrajectory("timestamps must be finite and strictly increasing".into()));
        }
        Ok(Trajectory { timestamps, poses })
    }

    /// Poses stamped `0, 1, 2, ...`.
    pub fn from_poses(poses: Vec<RigidTransform>) -> Self {
        let timestamps = (0..poses.len()).map(|i| i as f64).collect();
        Trajectory { timestamps, poses }
    }

    /// Chains relative poses from the identity.
    pub fn from_relative(relative: &[RigidTransform]) -> Self {
        let mut poses = vec![RigidTransform::identity()];
        for r in relative {
            poses.push(poses.last().expect("non-empty").compose(r));
        }
        Self::from_poses(poses)
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn poses(&self) -> &[RigidTransform] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// `P_i^-1 P_{i+1}` for each consecutive pair.
    pub fn relative_poses(&self) -> Vec<RigidTransform> {
        self.poses.windows(2).map(|w| w[0].inverse().compose(&w[1])).collect()
    }

    /// Applies `t` on the left of every pose.
    pub fn left_transformed(&self, t: &RigidTransform) -> Trajectory {
        Trajectory {
            timestamps: self.timestamps.clone(),
            poses: self.poses.iter().map(|p| t.compose(p)).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Stats {
    pub mean: f64,
    pub stddev: f64,
    pub rmse: f64,
}

impl Stats {
    /// Population statistics; all zero for an empty sample.
    pub fn of(samples: &[f64]) -> Stats {
        if samples.is_empty() {
            return Stats::default();
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let ms = samples.iter().map(|x| x * x).sum::<f64>() / n;
        Stats {
            mean,
            stddev: var.sqrt(),
            rmse: ms.sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RpeReport {
    /// Meters, one per consecutive pair.
    pub translation_errors: Vec<f64>,
    /// Degrees, one per consecutive pair.
    pub rotation_errors_deg: Vec<f64>,
    pub translation: Stats,
    pub rotation: Stats,
}

/// Error transform of one pair: `(Q_i^-1 Q_{i+1})^-1 (P_i^-1 P_{i+1})`.
pub fn relative_error(estimated: &RigidTransform, reference: &RigidTransform) -> RigidTransform {
    reference.inverse().compose(estimated)
}

/// Frame-to-frame relative pose error of `estimated` against `reference`.
pub fn rpe(estimated: &Trajectory, reference: &Trajectory) -> Result<RpeReport> {
    if estimated.len() != reference.len() {
        return Err(Error::LengthMismatch(estimated.len(), reference.len()));
    }
    if estimated.len() < 2 {
        return Err(Error::InvalidTrajectory(format!(
            "need at least two poses, got {}",
            estimated.len()
        )));
    }
    let (mut te, mut re) = (Vec::new(), Vec::new());
    for (p, q) in estimated.relative_poses().iter().zip(reference.relative_poses()) {
        let e = relative_error(p, &q);
        te.push(e.translation().norm());
        re.push(e.rotation_angle().to_degrees());
    }
    Ok(RpeReport {
        translation: Stats::of(&te),
        rotation: Stats::of(&re),
        translation_errors: te,
        rotation_errors_deg: re,
    })
}

/// Aggregates over several trajectories: jointly over all pairs, and as the
/// mean of the per-trajectory values.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RpeAggregate {
    pub joint_translation: Stats,
    pub joint_rotation: Stats,
    pub per_trajectory_translation: Stats,
    pub per_trajectory_rotation: Stats,
}

pub fn aggregate_rpe(reports: &[RpeReport]) -> RpeAggregate {
    let all_t: Vec<f64> = reports.iter().flat_map(|r| r.translation_errors.iter().copied()).collect();
    let all_r: Vec<f64> = reports.iter().flat_map(|r| r.rotation_errors_deg.iter().copied()).collect();
    let avg = |f: &dyn Fn(&RpeReport) -> Stats| -> Stats {
        if reports.is_empty() {
            return Stats::default();
        }
        let n = reports.len() as f64;
        Stats {
            mean: reports.iter().map(|r| f(r).mean).sum::<f64>() / n,
            stddev: reports.iter().map(|r| f(r).stddev).sum::<f64>() / n,
            rmse: reports.iter().map(|r| f(r).rmse).sum::<f64>() / n,
        }
    };
    RpeAggregate {
        joint_translation: Stats::of(&all_t),
        joint_rotation: Stats::of(&all_r),
        per_trajectory_translation: avg(&|r| r.translation),
        per_trajectory_rotation: avg(&|r| r.rotation),
    }
}

pub const RPE_CSV_HEADER: &str = "pair,translation_error_m,rotation_error_deg";

/// One row per pair.
pub fn rpe_csv(report: &RpeReport) -> String {
    let mut out = String::from(RPE_CSV_HEADER);
    out.push('\n');
    for (i, (t, r)) in report.translation_errors.iter().zip(&report.rotation_errors_deg).enumerate() {
        out.push_str(&format!("{i},{t},{r}\n"));
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DepthStats {
    pub true_depth: f64,
    pub count: usize,
    pub mean: f64,
    pub stddev: f64,
    pub rmse: f64,
}

/// Masked depth statistics of `1 / inverse_depth` against `true_depth`.
pub fn planar_depth_stats(inverse_depth: &InverseDepthMap, mask: &[bool], true_depth: f64) -> Result<DepthStats> {
    let depths = masked_depths(inverse_depth, mask)?;
    let s = Stats::of(&depths);
    let errors: Vec<f64> = depths.iter().map(|d| d - true_depth).collect();
    Ok(DepthStats {
        true_depth,
        count: depths.len(),
        mean: s.mean,
        stddev: s.stddev,
        rmse: Stats::of(&errors).rmse,
    })
}

fn masked_depths(inverse_depth: &InverseDepthMap, mask: &[bool]) -> Result<Vec<f64>> {
    if mask.len() != inverse_depth.data().len() {
        return Err(Error::DimensionMismatch(format!(
            "mask has {} entries, depth map {}",
            mask.len(),
            inverse_depth.data().len()
        )));
    }
    let depths: Vec<f64> = inverse_depth
        .data()
        .iter()
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|(r, _)| 1.0 / r)
        .collect();
    if depths.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(depths)
}

/// Masked statistics of `1 / inverse_depth` against a per-pixel reference.
/// `true_depth` is the mean reference depth; for a fronto-parallel plane
/// this equals [`planar_depth_stats`].
pub fn depth_stats(inverse_depth: &InverseDepthMap, reference: &InverseDepthMap, mask: &[bool]) -> Result<DepthStats> {
    if (reference.width(), reference.height()) != (inverse_depth.width(), inverse_depth.height()) {
        return Err(Error::DimensionMismatch(format!(
            "estimate is {}x{}, reference {}x{}",
            inverse_depth.width(),
            inverse_depth.height(),
            reference.width(),
            reference.height()
        )));
    }
    let depths = masked_depths(inverse_depth, mask)?;
    let truth = masked_depths(reference, mask)?;
    let s = Stats::of(&depths);
    let errors: Vec<f64> = depths.iter().zip(&truth).map(|(d, t)| d - t).collect();
    Ok(DepthStats {
        true_depth: Stats::of(&truth).mean,
        count: depths.len(),
        mean: s.mean,
        stddev: s.stddev,
        rmse: Stats::of(&errors).rmse,
    })
}

/// Pooled RMSE of several [`DepthStats`] rows.
pub fn pooled_rmse(stats: &[DepthStats]) -> f64 {
    let n: usize = stats.iter().map(|s| s.count).sum();
    if n == 0 {
        return 0.0;
    }
    (stats.iter().map(|s| s.rmse * s.rmse * s.count as f64).sum::<f64>() / n as f64).sqrt()
}

/// Root mean squared depth error over the masked pixels of every entry.
pub fn overall_depth_rmse(entries: &[(&InverseDepthMap, &[bool], f64)]) -> Result<f64> {
    let mut sq = 0.0;
    let mut n = 0usize;
    for (map, mask, truth) in entries {
        for d in masked_depths(map, mask)? {
            sq += (d - truth) * (d - truth);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    Ok((sq / n as f64).sqrt())
}

/// Mask excluding a `margin`-pixel border.
pub fn interior_mask(width: usize, height: usize, margin: usize) -> Vec<bool> {
    (0..height)
        .flat_map(|y| {
            (0..width).map(move |x| x >= margin && y >= margin && x + margin < width && y + margin < height)
        })
        .collect()
}

pub const DEPTH_CSV_HEADER: &str = "true_depth_m,count,mean_m,stddev_m,rmse_m";

/// One row per distance followed by an `overall` row carrying the RMSE.
pub fn depth_csv(stats: &[DepthStats], overall_rmse: f64) -> String {
    let mut out = String::from(DEPTH_CSV_HEADER);
    out.push('\n');
    for s in stats {
        out.push_str(&format!("{},{},{},{},{}\n", s.true_depth, s.count, s.mean, s.stddev, s.rmse));
    }
    let total: usize = stats.iter().map(|s| s.count).sum();
    out.push_str(&format!("overall,{total},,,{overall_rmse}\n"));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix3, Vector3};

    #[test]
    fn per_pixel_stats_agree_with_planar_stats() {
        let est = InverseDepthMap::new(3, 2, vec![2.0, 2.5, 1.6, 2.0, 2.2, 1.9]).unwrap();
        let gt = InverseDepthMap::constant(3, 2, 2.0).unwrap();
        let mask = [true, true, false, true, true, true];
        let a = depth_stats(&est, &gt, &mask).unwrap();
        let b = planar_depth_stats(&est, &mask, 0.5).unwrap();
        assert_eq!(a.count, b.count);
        assert!((a.true_depth - 0.5).abs() < 1e-15);
        assert!((a.rmse - b.rmse).abs() < 1e-15);
        assert!((pooled_rmse(&[a, a]) - a.rmse).abs() < 1e-15);
    }

    fn rz(deg: f64) -> RigidTransform {
        let (s, c) = deg.to_radians().sin_cos();
        RigidTransform::new(Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0), Vector3::zeros()).unwrap()
    }

    fn tr(x: f64, y: f64, z: f64) -> RigidTransform {
        RigidTransform::from_translation(Vector3::new(x, y, z))
    }

    #[test]
    fn identical_trajectories_have_zero_error() {
        let t = Trajectory::from_poses(vec![tr(0.0, 0.0, 0.0), tr(0.1, 0.0, 0.0), rz(30.0)]);
        let r = rpe(&t, &t).unwrap();
        assert!(r.translation_errors.iter().chain(&r.rotation_errors_deg).all(|&e| e == 0.0));
    }

    #[test]
    fn static_reference_stepping_estimate() {
        let reference = Trajectory::from_poses(vec![RigidTransform::identity(); 4]);
        let est = Trajectory::from_poses((0..4).map(|i| tr(0.01 * i as f64, 0.0, 0.0)).collect());
        let r = rpe(&est, &reference).unwrap();
        for (t, a) in r.translation_errors.iter().zip(&r.rotation_errors_deg) {
            assert!((t - 0.01).abs() < 1e-15);
            assert_eq!(*a, 0.0);
        }
    }

    #[test]
    fn hand_computed_three_pose_case() {
        // Reference steps: +1 m in x, then a 90 degree yaw. Estimate steps:
        // +1.1 m in x, then a 95 degree yaw. Errors: 0.1 m / 0 deg, then
        // 0 m / 5 deg.
        let reference = Trajectory::from_poses(vec![tr(0.0, 0.0, 0.0), tr(1.0, 0.0, 0.0), tr(1.0, 0.0, 0.0) * rz(90.0)]);
        let est = Trajectory::from_poses(vec![tr(0.0, 0.0, 0.0), tr(1.1, 0.0, 0.0), tr(1.1, 0.0, 0.0) * rz(95.0)]);
        let r = rpe(&est, &reference).unwrap();
        assert!((r.translation_errors[0] - 0.1).abs() < 1e-12);
        assert!(r.translation_errors[1].abs() < 1e-12);
        assert!(r.rotation_errors_deg[0].abs() < 1e-12);
        assert!((r.rotation_errors_deg[1] - 5.0).abs() < 1e-12);
        assert!((r.translation.rmse - (0.01f64 / 2.0).sqrt()).abs() < 1e-12);
        assert!((r.translation.mean - 0.05).abs() < 1e-12);
        assert!((r.translation.stddev - 0.05).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch() {
        let a = Trajectory::from_poses(vec![RigidTransform::identity(); 3]);
        let b = Trajectory::from_poses(vec![RigidTransform::identity(); 2]);
        assert!(matches!(rpe(&a, &b), Err(Error::LengthMismatch(3, 2))));
        assert!(Trajectory::new(vec![0.0, 0.0], vec![RigidTransform::identity(); 2]).is_err());
    }

    #[test]
    fn depth_stats_examples() {
        let m = InverseDepthMap::constant(4, 3, 2.0).unwrap();
        let s = planar_depth_stats(&m, &vec![true; 12], 0.5).unwrap();
        assert_eq!((s.mean, s.stddev, s.rmse), (0.5, 0.0, 0.0));
        let two = InverseDepthMap::new(2, 1, vec![1.0 / 0.4, 1.0 / 0.6]).unwrap();
        let s = planar_depth_stats(&two, &[true, true], 0.5).unwrap();
        assert!((s.rmse - 0.1).abs() < 1e-12);
        assert!(matches!(planar_depth_stats(&two, &[false, false], 0.5), Err(Error::EmptyMask)));
        let overall = overall_depth_rmse(&[(&m, &vec![true; 12], 0.5), (&two, &[true, true], 0.5)]).unwrap();
        assert!((overall - (0.02f64 / 14.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn csv_layout() {
        let est = Trajectory::from_poses(vec![tr(0.0, 0.0, 0.0), tr(0.5, 0.0, 0.0)]);
        let reference = Trajectory::from_poses(vec![tr(0.0, 0.0, 0.0), tr(0.25, 0.0, 0.0)]);
        let csv = rpe_csv(&rpe(&est, &reference).unwrap());
        assert_eq!(csv, "pair,translation_error_m,rotation_error_deg\n0,0.25,0\n");
    }

    proptest::proptest! {
        #[test]
        fn rpe_is_left_invariant(a in proptest::array::uniform6(-0.5f64..0.5), b in proptest::array::uniform6(-0.5f64..0.5), g in proptest::array::uniform6(-2.0f64..2.0)) {
            use crate::geometry::Twist;
            let p = |v: [f64; 6]| RigidTransform::exp(&Twist::from_row_slice(&v));
            let est = Trajectory::from_poses(vec![p(a), p(b), p(a) * p(b)]);
            let reference = Trajectory::from_poses(vec![p(b), p(a), p(b) * p(b)]);
            let r0 = rpe(&est, &reference).unwrap();
            let r1 = rpe(&est.left_transformed(&p(g)), &reference.left_transformed(&p(g))).unwrap();
            for (x, y) in r0.translation_errors.iter().zip(&r1.translation_errors) {
                proptest::prop_assert!((x - y).abs() < 1e-9);
            }
            for (x, y) in r0.rotation_errors_deg.iter().zip(&r1.rotation_errors_deg) {
                proptest::prop_assert!((x - y).abs() < 1e-9);
            }
            let swapped = rpe(&reference, &est).unwrap();
            for (x, y) in r0.translation_errors.iter().zip(&swapped.translation_errors) {
                proptest::prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
