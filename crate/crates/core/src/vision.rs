//! Stereo pinhole model and the anchored inverse-depth reprojection error.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, SMatrix, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::lie::so3::wedge;
use crate::state::{landmark_to_world, CameraSide, ImuState, Landmark, LandmarkId, Parameterization, StateId};
use crate::Rotation;

/// Points closer than this (camera z, metres) cannot be projected.
pub const Z_MIN: f64 = 1e-3;

/// Camera pose in the body frame: rotation `C_bc` and translation `t_b^{cz}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extrinsics {
    pub rotation: Rotation,
    pub translation: Vector3<f64>,
}

impl Extrinsics {
    pub fn identity() -> Self {
        Self {
            rotation: Rotation::identity(),
            translation: Vector3::zeros(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub fu: f64,
    pub fv: f64,
    pub cu: f64,
    pub cv: f64,
    pub width: f64,
    pub height: f64,
    pub extrinsics: Extrinsics,
}

impl Camera {
    pub fn to_pixels(&self, y: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new(self.fu * y.x + self.cu, self.fv * y.y + self.cv)
    }

    pub fn in_image(&self, pixel: &Vector2<f64>) -> bool {
        pixel.x >= 0.0 && pixel.x < self.width && pixel.y >= 0.0 && pixel.y < self.height
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraRig {
    pub left: Camera,
    pub right: Camera,
    pub pixel_sigma: f64,
}

impl CameraRig {
    /// Forward-looking stereo pair: camera z along body x, camera x along
    /// body −y, with the given baseline split symmetrically about the body
    /// origin.
    pub fn forward_stereo(f: f64, cu: f64, cv: f64, width: f64, height: f64, baseline: f64) -> Self {
        let c_bc = Rotation::from_matrix_unchecked(Matrix3::new(
            0.0, 0.0, 1.0, //
            -1.0, 0.0, 0.0, //
            0.0, -1.0, 0.0,
        ));
        let cam = |y: f64| Camera {
            fu: f,
            fv: f,
            cu,
            cv,
            width,
            height,
            extrinsics: Extrinsics {
                rotation: c_bc,
                translation: Vector3::new(0.0, y, 0.0),
            },
        };
        Self {
            left: cam(0.5 * baseline),
            right: cam(-0.5 * baseline),
            pixel_sigma: 1.0,
        }
    }

    pub fn camera(&self, side: CameraSide) -> &Camera {
        match side {
            CameraSide::Left => &self.left,
            CameraSide::Right => &self.right,
        }
    }

    /// Measurement covariance in normalized coordinates.
    pub fn normalized_cov(&self, side: CameraSide) -> Matrix2<f64> {
        let c = self.camera(side);
        let s2 = self.pixel_sigma * self.pixel_sigma;
        Matrix2::new(s2 / (c.fu * c.fu), 0.0, 0.0, s2 / (c.fv * c.fv))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisualMeasurement {
    /// Normalized image coordinates.
    pub y: Vector2<f64>,
    pub landmark: LandmarkId,
    pub camera: CameraSide,
    pub state: StateId,
    pub cov: Matrix2<f64>,
}

/// `C_bcᵀ(C_kᵀ(r_w − r_k) − t)`
pub fn to_camera_frame(world: &Vector3<f64>, x_k: &ImuState, ext: &Extrinsics) -> Vector3<f64> {
    let body = x_k.rotation().transpose() * (world - x_k.position());
    ext.rotation.transpose() * (body - ext.translation)
}

pub fn project(r_c: &Vector3<f64>) -> Result<Vector2<f64>> {
    if r_c.z <= Z_MIN {
        return Err(Error::BehindCamera(r_c.z));
    }
    Ok(Vector2::new(r_c.x / r_c.z, r_c.y / r_c.z))
}

pub fn projection_jacobian(r_c: &Vector3<f64>) -> Result<Matrix2x3<f64>> {
    if r_c.z <= Z_MIN {
        return Err(Error::BehindCamera(r_c.z));
    }
    let iz = 1.0 / r_c.z;
    Ok(Matrix2x3::new(
        iz,
        0.0,
        -r_c.x * iz * iz,
        0.0,
        iz,
        -r_c.y * iz * iz,
    ))
}

/// Jacobian blocks of the reprojection error.
#[derive(Debug, Clone, PartialEq)]
pub struct VisualJacobians {
    pub observer: SMatrix<f64, 2, 15>,
    pub anchor: SMatrix<f64, 2, 15>,
    pub landmark: Matrix2x3<f64>,
}

/// `e = y − g(r_c)` for a landmark anchored at `anchor` and observed from
/// `observer`. When both are the same state, use the sum of the two blocks.
pub fn visual_error(
    meas: &VisualMeasurement,
    z: &Landmark,
    anchor: &ImuState,
    observer: &ImuState,
    rig: &CameraRig,
) -> Result<(Vector2<f64>, Matrix2<f64>, VisualJacobians)> {
    if anchor.param != observer.param {
        return Err(Error::ParameterizationMismatch);
    }
    let anchor_ext = &rig.camera(z.anchor_camera).extrinsics;
    let obs_ext = &rig.camera(meas.camera).extrinsics;
    let r_w = landmark_to_world(z, anchor, anchor_ext)?;
    let r_c = to_camera_frame(&r_w, observer, obs_ext);
    let e = meas.y - project(&r_c)?;
    let g = projection_jacobian(&r_c)?;
    let weight = meas
        .cov
        .try_inverse()
        .ok_or(Error::NotPositiveDefinite)?;

    let ck_t = observer.rotation().transpose();
    let d_rc_d_rw: Matrix3<f64> = obs_ext.rotation.matrix().transpose() * ck_t.matrix();

    let mut d_rc_d_xk = SMatrix::<f64, 3, 15>::zeros();
    let rot_arm = match observer.param {
        Parameterization::Separate => r_w - observer.position(),
        Parameterization::Grouped => r_w,
    };
    d_rc_d_xk
        .fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(d_rc_d_rw * wedge(&rot_arm)));
    d_rc_d_xk.fixed_view_mut::<3, 3>(0, 6).copy_from(&(-d_rc_d_rw));

    let mut d_rw_d_xi = SMatrix::<f64, 3, 15>::zeros();
    let lever = match anchor.param {
        Parameterization::Separate => r_w - anchor.position(),
        Parameterization::Grouped => r_w,
    };
    d_rw_d_xi.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-wedge(&lever)));
    d_rw_d_xi
        .fixed_view_mut::<3, 3>(0, 6)
        .copy_from(&Matrix3::identity());

    let il = 1.0 / z.lambda;
    let d_p_d_z = Matrix3::new(
        il,
        0.0,
        -z.alpha * il * il,
        0.0,
        il,
        -z.beta * il * il,
        0.0,
        0.0,
        -il * il,
    );
    let d_rw_d_z = anchor.rotation().matrix() * anchor_ext.rotation.matrix() * d_p_d_z;

    let jac = VisualJacobians {
        observer: -(g * d_rc_d_xk),
        anchor: -(g * d_rc_d_rw * d_rw_d_xi),
        landmark: -(g * d_rc_d_rw * d_rw_d_z),
    };
    Ok((e, weight, jac))
}

/// Two-view triangulation of a stereo pair into `(α, β, λ)` in the left
/// camera frame. `α, β` are taken from the left measurement; the depth solves
/// the right camera's epipolar constraint in least squares.
pub fn triangulate(
    y_left: &Vector2<f64>,
    y_right: &Vector2<f64>,
    rig: &CameraRig,
) -> Result<Vector3<f64>> {
    let l = &rig.left.extrinsics;
    let r = &rig.right.extrinsics;
    let m = Vector3::new(y_left.x, y_left.y, 1.0);
    let rt = r.rotation.transpose();
    let a = rt * (l.rotation * m);
    let c = rt * (l.translation - r.translation);
    let row = |u: f64| (a.x - u * a.z, c.x - u * c.z);
    let (a0, c0) = row(y_right.x);
    let (a1, c1) = (a.y - y_right.y * a.z, c.y - y_right.y * c.z);
    let denom = a0 * a0 + a1 * a1;
    if denom < 1e-18 {
        return Err(Error::BehindCamera(0.0));
    }
    let depth = -(a0 * c0 + a1 * c1) / denom;
    if depth <= Z_MIN {
        return Err(Error::BehindCamera(depth));
    }
    Ok(Vector3::new(y_left.x, y_left.y, 1.0 / depth))
}
