//! Pinhole intrinsics and SE(3) rigid transforms.
//!
//! Twists are ordered `(rho, phi)`: translational part first, rotational
//! part second. Transforms map points from their source frame into their
//! target frame, `x_target = R * x_source + t`.

use nalgebra::{Matrix3, Matrix4, Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Twist = Vector6<f64>;

const ORTHONORMAL_TOL: f64 = 1e-9;
const SMALL_ANGLE: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        let k = Intrinsics { fx, fy, cx, cy };
        k.check()?;
        Ok(k)
    }

    fn check(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(Error::InvalidIntrinsics(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(Error::InvalidIntrinsics("non-finite principal point".into()));
        }
        Ok(())
    }

    /// Checks the principal point lies inside a `width` x `height` image.
    pub fn validate_for(&self, width: usize, height: usize) -> Result<()> {
        self.check()?;
        let inside = |c: f64, n: usize| c >= 0.0 && c <= (n as f64 - 1.0);
        if !inside(self.cx, width) || !inside(self.cy, height) {
            return Err(Error::InvalidIntrinsics(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, width, height
            )));
        }
        Ok(())
    }

    /// Intrinsics of an image downsampled `levels` times by 2x2 box filtering.
    ///
    /// Focal lengths halve per level; the principal point follows the
    /// zero-based pixel-center convention, `c' = (c + 0.5) / 2 - 0.5`.
    pub fn downscaled(&self, levels: usize) -> Intrinsics {
        let mut k = *self;
        for _ in 0..levels {
            k = Intrinsics {
                fx: k.fx * 0.5,
                fy: k.fy * 0.5,
                cx: (k.cx + 0.5) * 0.5 - 0.5,
                cy: (k.cy + 0.5) * 0.5 - 0.5,
            };
        }
        k
    }

    /// Projects a camera-frame point, returning pixel coordinates and depth.
    pub fn project(&self, point: &Vector3<f64>) -> Result<(f64, f64, f64)> {
        if !(point.z > 0.0) {
            return Err(Error::NonPositiveDepth(point.z));
        }
        let u = self.fx * point.x / point.z + self.cx;
        let v = self.fy * point.y / point.z + self.cy;
        Ok((u, v, point.z))
    }

    /// Camera-frame point seen at pixel `(u, v)` with the given inverse depth.
    pub fn backproject(&self, u: f64, v: f64, inverse_depth: f64) -> Result<Vector3<f64>> {
        if !(inverse_depth > 0.0 && inverse_depth.is_finite()) {
            return Err(Error::NonPositiveInverseDepth(inverse_depth));
        }
        Ok(self.ray(u, v) / inverse_depth)
    }

    /// `K^-1 [u, v, 1]`.
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a transform, rejecting rotations that are not proper and
    /// orthonormal to 1e-9.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if rotation.iter().chain(translation.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidTransform("non-finite entries".into()));
        }
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        if ortho > ORTHONORMAL_TOL {
            return Err(Error::InvalidTransform(format!(
                "rotation is not orthonormal (max |R^T R - I| = {ortho:e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(Error::InvalidTransform(format!(
                "rotation determinant is {det}, expected +1"
            )));
        }
        Ok(RigidTransform {
            rotation,
            translation,
        })
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Parses a row-major 3x4 `[R | t]` matrix.
    pub fn from_row_major_3x4(values: &[f64; 12]) -> Result<Self> {
        let rotation = Matrix3::new(
            values[0], values[1], values[2], values[4], values[5], values[6], values[8],
            values[9], values[10],
        );
        let translation = Vector3::new(values[3], values[7], values[11]);
        Self::new(rotation, translation)
    }

    pub fn to_row_major_3x4(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            t.x,
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            t.y,
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t.z,
        ]
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Same rotation, translation multiplied by `alpha`.
    pub fn with_scaled_translation(&self, alpha: f64) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation,
            translation: self.translation * alpha,
        }
    }

    /// Rotation angle in radians, from the trace with a clamped arccos.
    pub fn rotation_angle(&self) -> f64 {
        let c = ((self.rotation.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
        c.acos()
    }

    pub fn exp(twist: &Twist) -> RigidTransform {
        se3_exp(twist)
    }

    pub fn log(&self) -> Twist {
        se3_log(self)
    }
}

impl std::ops::Mul for RigidTransform {
    type Output = RigidTransform;
    fn mul(self, rhs: RigidTransform) -> RigidTransform {
        self.compose(&rhs)
    }
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Coefficients `(sin θ / θ, (1 - cos θ) / θ², (θ - sin θ) / θ³)`.
fn rodrigues_coefficients(theta: f64) -> (f64, f64, f64) {
    if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0, 0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0)
    } else {
        let t2 = theta * theta;
        (
            theta.sin() / theta,
            (1.0 - theta.cos()) / t2,
            (theta - theta.sin()) / (t2 * theta),
        )
    }
}

pub fn so3_exp(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let (a, b, _) = rodrigues_coefficients(theta);
    let w = skew(phi);
    Matrix3::identity() + w * a + w * w * b
}

pub fn so3_log(r: &Matrix3<f64>) -> Vector3<f64> {
    let cos_theta = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = cos_theta.acos();
    let vee = Vector3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    );
    if theta < SMALL_ANGLE {
        return vee * (0.5 + theta * theta / 12.0);
    }
    if std::f64::consts::PI - theta > 1e-6 {
        return vee * (theta / (2.0 * theta.sin()));
    }
    // Near π the antisymmetric part vanishes; recover the axis from R + I.
    let b = (r + Matrix3::identity()) * 0.5;
    let (mut best, mut best_diag) = (0, b[(0, 0)]);
    for i in 1..3 {
        if b[(i, i)] > best_diag {
            best = i;
            best_diag = b[(i, i)];
        }
    }
    let mut axis: Vector3<f64> = b.column(best).into();
    axis /= best_diag.max(0.0).sqrt().max(f64::MIN_POSITIVE);
    axis.normalize_mut();
    if axis.dot(&vee) < 0.0 {
        axis = -axis;
    }
    axis * theta
}

/// Left Jacobian of SO(3).
pub fn so3_left_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let (_, b, c) = rodrigues_coefficients(theta);
    let w = skew(phi);
    Matrix3::identity() + w * b + w * w * c
}

pub fn so3_left_jacobian_inverse(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let w = skew(phi);
    let coeff = if theta < SMALL_ANGLE {
        1.0 / 12.0 + theta * theta / 720.0
    } else {
        (1.0 - theta * theta.sin() / (2.0 * (1.0 - theta.cos()))) / (theta * theta)
    };
    Matrix3::identity() - w * 0.5 + w * w * coeff
}

pub fn se3_exp(twist: &Twist) -> RigidTransform {
    let rho = Vector3::new(twist[0], twist[1], twist[2]);
    let phi = Vector3::new(twist[3], twist[4], twist[5]);
    RigidTransform {
        rotation: so3_exp(&phi),
        translation: so3_left_jacobian(&phi) * rho,
    }
}

pub fn se3_log(t: &RigidTransform) -> Twist {
    let phi = so3_log(&t.rotation);
    let rho = so3_left_jacobian_inverse(&phi) * t.translation;
    Twist::new(rho.x, rho.y, rho.z, phi.x, phi.y, phi.z)
}

/// Left Jacobian of SE(3): `exp(ξ + dξ) ≈ exp(J dξ) exp(ξ)`.
pub fn se3_left_jacobian(twist: &Twist) -> Matrix6<f64> {
    let rho = Vector3::new(twist[0], twist[1], twist[2]);
    let phi = Vector3::new(twist[3], twist[4], twist[5]);
    let jl = so3_left_jacobian(&phi);
    let q = se3_q_block(&rho, &phi);
    let mut j = Matrix6::zeros();
    j.fixed_view_mut::<3, 3>(0, 0).copy_from(&jl);
    j.fixed_view_mut::<3, 3>(0, 3).copy_from(&q);
    j.fixed_view_mut::<3, 3>(3, 3).copy_from(&jl);
    j
}

fn se3_q_block(rho: &Vector3<f64>, phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let p = skew(phi);
    let r = skew(rho);
    let (c1, c2, c3) = if theta < 1e-3 {
        let t2 = theta * theta;
        (
            1.0 / 6.0 - t2 / 120.0,
            1.0 / 24.0 - t2 / 720.0,
            1.0 / 120.0 - t2 / 2520.0,
        )
    } else {
        let (s, c) = theta.sin_cos();
        let t2 = theta * theta;
        (
            (theta - s) / (t2 * theta),
            (t2 + 2.0 * c - 2.0) / (2.0 * t2 * t2),
            (2.0 * theta - 3.0 * s + theta * c) / (2.0 * t2 * t2 * theta),
        )
    };
    let pr = p * r;
    let rp = r * p;
    let prp = pr * p;
    r * 0.5 + (pr + rp + prp) * c1 + (p * pr + rp * p - prp * 3.0) * c2
        + (prp * p + p * prp) * c3
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn k() -> Intrinsics {
        Intrinsics::new(100.0, 100.0, 112.0, 80.0).unwrap()
    }

    fn twist_strategy(max_angle: f64) -> impl Strategy<Value = Twist> {
        (
            prop::array::uniform3(-1.0f64..1.0),
            prop::array::uniform3(-1.0f64..1.0),
            0.0..max_angle,
        )
            .prop_map(|(rho, axis, angle)| {
                let a = Vector3::from(axis);
                let a = if a.norm() < 1e-3 { Vector3::x() } else { a.normalize() };
                let phi = a * angle;
                Twist::new(rho[0], rho[1], rho[2], phi.x, phi.y, phi.z)
            })
    }

    #[test]
    fn project_principal_ray() {
        let (u, v, z) = k().project(&Vector3::new(0.0, 0.0, 0.5)).unwrap();
        assert_eq!((u, v, z), (112.0, 80.0, 0.5));
        let (u, v, _) = k().project(&Vector3::new(0.05, 0.0, 0.5)).unwrap();
        assert_relative_eq!(u, 122.0, epsilon = 1e-12);
        assert_eq!(v, 80.0);
    }

    #[test]
    fn project_rejects_points_behind() {
        assert!(matches!(
            k().project(&Vector3::new(0.0, 0.0, 0.0)),
            Err(Error::NonPositiveDepth(_))
        ));
        assert!(k().project(&Vector3::new(0.0, 0.0, -1.0)).is_err());
    }

    #[test]
    fn backproject_examples() {
        let p = k().backproject(112.0, 80.0, 2.0).unwrap();
        assert_eq!(p, Vector3::new(0.0, 0.0, 0.5));
        let p = k().backproject(122.0, 80.0, 2.0).unwrap();
        assert_relative_eq!(p, Vector3::new(0.05, 0.0, 0.5), epsilon = 1e-12);
        assert!(matches!(
            k().backproject(1.0, 1.0, 0.0),
            Err(Error::NonPositiveInverseDepth(_))
        ));
        assert!(k().backproject(1.0, 1.0, -3.0).is_err());
    }

    #[test]
    fn intrinsics_validation() {
        assert!(Intrinsics::new(0.0, 1.0, 0.0, 0.0).is_err());
        assert!(k().validate_for(224, 160).is_ok());
        assert!(k().validate_for(100, 160).is_err());
    }

    #[test]
    fn downscaling_follows_pixel_centers() {
        let k = Intrinsics::new(200.0, 200.0, 111.5, 79.5).unwrap();
        let k1 = k.downscaled(1);
        assert_eq!(k1.fx, 100.0);
        assert_eq!(k1.cx, 55.5);
        assert_eq!(k1.cy, 39.5);
    }

    #[test]
    fn exp_of_zero_is_identity() {
        assert_eq!(se3_exp(&Twist::zeros()), RigidTransform::identity());
    }

    #[test]
    fn quarter_turn_about_z_maps_x_to_y() {
        let t = se3_exp(&Twist::new(0.0, 0.0, 0.0, 0.0, 0.0, std::f64::consts::FRAC_PI_2));
        let y = t.transform_point(&Vector3::x());
        assert_relative_eq!(y, Vector3::y(), epsilon = 1e-15);
    }

    #[test]
    fn rejects_non_orthonormal_rotation() {
        let mut r = Matrix3::identity();
        r[(0, 0)] = 1.0 + 1e-6;
        assert!(RigidTransform::new(r, Vector3::zeros()).is_err());
        let mut r = Matrix3::identity();
        r[(2, 2)] = -1.0;
        assert!(RigidTransform::new(r, Vector3::zeros()).is_err());
    }

    #[test]
    fn log_near_pi() {
        let phi = Vector3::new(0.0, 1.0, 0.0) * (std::f64::consts::PI - 1e-8);
        let back = so3_log(&so3_exp(&phi));
        assert_relative_eq!(back, phi, epsilon = 1e-6);
    }

    #[test]
    fn row_major_round_trip() {
        let t = se3_exp(&Twist::new(0.1, -0.2, 0.3, 0.2, 0.1, -0.4));
        let back = RigidTransform::from_row_major_3x4(&t.to_row_major_3x4()).unwrap();
        assert_eq!(back, t);
    }

    fn matrix_oracle_compose(a: &RigidTransform, b: &RigidTransform) -> Matrix4<f64> {
        a.to_homogeneous() * b.to_homogeneous()
    }

    proptest! {
        #[test]
        fn exp_log_round_trip(w in twist_strategy(std::f64::consts::PI - 1e-3)) {
            let back = se3_log(&se3_exp(&w));
            prop_assert!((back - w).amax() < 1e-9, "{:?} vs {:?}", back, w);
        }

        #[test]
        fn compose_matches_homogeneous_product(a in twist_strategy(3.0), b in twist_strategy(3.0)) {
            let (ta, tb) = (se3_exp(&a), se3_exp(&b));
            let diff = (ta.compose(&tb).to_homogeneous() - matrix_oracle_compose(&ta, &tb)).amax();
            prop_assert!(diff < 1e-12);
        }

        #[test]
        fn group_axioms(a in twist_strategy(3.0), b in twist_strategy(3.0), c in twist_strategy(3.0)) {
            let (ta, tb, tc) = (se3_exp(&a), se3_exp(&b), se3_exp(&c));
            let lhs = ta.compose(&tb).compose(&tc).to_homogeneous();
            let rhs = ta.compose(&tb.compose(&tc)).to_homogeneous();
            prop_assert!((lhs - rhs).amax() < 1e-12);
            let id = ta.compose(&ta.inverse()).to_homogeneous();
            prop_assert!((id - Matrix4::identity()).amax() < 1e-12);
            let twice = ta.inverse().inverse().to_homogeneous();
            prop_assert!((twice - ta.to_homogeneous()).amax() < 1e-12);
            prop_assert_eq!(RigidTransform::identity().compose(&tb), tb);
        }

        #[test]
        fn project_backproject_round_trip(
            u in 0.0f64..224.0, v in 0.0f64..160.0, inv in 0.1f64..10.0,
        ) {
            let p = k().backproject(u, v, inv).unwrap();
            prop_assert!((p.z - 1.0 / inv).abs() < 1e-12);
            let (pu, pv, _) = k().project(&p).unwrap();
            prop_assert!((pu - u).abs() < 1e-9 && (pv - v).abs() < 1e-9);
        }

        #[test]
        fn left_jacobian_matches_finite_differences(w in twist_strategy(2.5)) {
            let j = se3_left_jacobian(&w);
            let base = se3_exp(&w);
            let h = 1e-6;
            for k in 0..6 {
                let mut wp = w;
                wp[k] += h;
                let mut wm = w;
                wm[k] -= h;
                // exp(w + h e_k) exp(w)^-1 ≈ exp(h J e_k)
                let dp = se3_log(&se3_exp(&wp).compose(&base.inverse()));
                let dm = se3_log(&se3_exp(&wm).compose(&base.inverse()));
                let fd = (dp - dm) / (2.0 * h);
                let col = j.column(k);
                prop_assert!((fd - col).amax() < 1e-6, "column {k}: {fd:?} vs {col:?}");
            }
        }
    }
}
