use nalgebra::{Matrix3, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pinhole intrinsics of a rectified view, in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::invalid(
                "intrinsics",
                format!("focal lengths must be positive (fx={}, fy={})", self.fx, self.fy),
            ));
        }
        if !(self.cx > 0.0 && self.cx < self.width as f64) {
            return Err(Error::invalid(
                "intrinsics",
                format!("cx={} outside (0, {})", self.cx, self.width),
            ));
        }
        if !(self.cy > 0.0 && self.cy < self.height as f64) {
            return Err(Error::invalid(
                "intrinsics",
                format!("cy={} outside (0, {})", self.cy, self.height),
            ));
        }
        Ok(())
    }

    pub fn size(&self) -> (usize, usize) {
        (self.width as usize, self.height as usize)
    }

    /// Projects a camera-frame point to continuous pixel coordinates.
    /// Returns `None` for points at or behind the image plane.
    #[inline]
    pub fn project(&self, p: &Point3<f64>) -> Option<(f64, f64)> {
        if p.z <= 0.0 {
            return None;
        }
        Some((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    /// Camera-frame point at pixel `(u, v)` with z-depth `depth`.
    #[inline]
    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Point3<f64> {
        Point3::new(
            (u - self.cx) / self.fx * depth,
            (v - self.cy) / self.fy * depth,
            depth,
        )
    }
}

/// A rectified stereo pair sharing one set of intrinsics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StereoRig {
    pub intrinsics: CameraIntrinsics,
    /// Distance between the two optical centres, meters.
    pub baseline: f64,
}

impl StereoRig {
    pub fn new(intrinsics: CameraIntrinsics, baseline: f64) -> Result<Self> {
        let rig = Self {
            intrinsics,
            baseline,
        };
        rig.validate()?;
        Ok(rig)
    }

    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        if !(self.baseline > 0.0) {
            return Err(Error::invalid(
                "stereo rig",
                format!("baseline must be positive, got {}", self.baseline),
            ));
        }
        Ok(())
    }

    /// Disparity in pixels of a point at z-depth `depth`.
    pub fn disparity_for_depth(&self, depth: f64) -> f64 {
        self.intrinsics.fx * self.baseline / depth
    }
}

/// On-disk form of the calibration file.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub(crate) struct CalibrationFile {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub baseline_m: f64,
}

impl From<&StereoRig> for CalibrationFile {
    fn from(rig: &StereoRig) -> Self {
        let k = &rig.intrinsics;
        Self {
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            width: k.width,
            height: k.height,
            baseline_m: rig.baseline,
        }
    }
}

impl TryFrom<CalibrationFile> for StereoRig {
    type Error = Error;

    fn try_from(c: CalibrationFile) -> Result<Self> {
        StereoRig::new(
            CameraIntrinsics::new(c.fx, c.fy, c.cx, c.cy, c.width, c.height)?,
            c.baseline_m,
        )
    }
}

const ROTATION_TOLERANCE: f64 = 1e-6;

/// Rigid camera-to-world transform.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let orthogonality = rotation.transpose() * rotation - Matrix3::identity();
        if orthogonality.amax() > ROTATION_TOLERANCE {
            return Err(Error::invalid(
                "pose",
                format!("rotation is not orthonormal (max deviation {:e})", orthogonality.amax()),
            ));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(Error::invalid(
                "pose",
                format!("rotation determinant is {det}, expected +1"),
            ));
        }
        if translation.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("pose", "non-finite translation"));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Camera at `eye` looking at `target`, with image "up" as close to
    /// `up` as possible. Camera axes: x right, y down, z forward.
    pub fn look_at(eye: Point3<f64>, target: Point3<f64>, up: Vector3<f64>) -> Result<Self> {
        let forward = (target - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::invalid("pose", "eye and target coincide"))?;
        let right = forward
            .cross(&up)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::invalid("pose", "view direction parallel to up"))?;
        let down = forward.cross(&right);
        let rotation = Matrix3::from_columns(&[right, down, forward]);
        Self::new(rotation, eye.coords)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Camera centre in world coordinates.
    pub fn center(&self) -> Point3<f64> {
        Point3::from(self.translation)
    }

    #[inline]
    pub fn camera_to_world(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    #[inline]
    pub fn world_to_camera(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation.transpose() * (p.coords - self.translation))
    }

    /// Row-major 3×4 `[R | t]`.
    pub fn to_row_major(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        for r in 0..3 {
            for c in 0..3 {
                out[r * 4 + c] = self.rotation[(r, c)];
            }
            out[r * 4 + 3] = self.translation[r];
        }
        out
    }

    pub fn from_row_major(m: &[f64; 12]) -> Result<Self> {
        let rotation = Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
        let translation = Vector3::new(m[3], m[7], m[11]);
        Self::new(rotation, translation)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intrinsics_reject_bad_principal_point() {
        assert!(CameraIntrinsics::new(100.0, 100.0, 0.0, 10.0, 20, 20).is_err());
        assert!(CameraIntrinsics::new(100.0, 100.0, 10.0, 20.0, 20, 20).is_err());
        assert!(CameraIntrinsics::new(-1.0, 100.0, 10.0, 10.0, 20, 20).is_err());
        assert!(CameraIntrinsics::new(100.0, 100.0, 10.0, 10.0, 20, 20).is_ok());
    }

    #[test]
    fn rig_rejects_non_positive_baseline() {
        let k = CameraIntrinsics::new(100.0, 100.0, 10.0, 10.0, 20, 20).unwrap();
        assert!(StereoRig::new(k, 0.0).is_err());
        assert!(StereoRig::new(k, 0.1).is_ok());
    }

    #[test]
    fn pose_rejects_reflection_and_shear() {
        let reflect = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(Pose::new(reflect, Vector3::zeros()).is_err());
        let mut shear = Matrix3::identity();
        shear[(0, 1)] = 0.01;
        assert!(Pose::new(shear, Vector3::zeros()).is_err());
    }

    #[test]
    fn look_at_points_z_axis_at_target() {
        let eye = Point3::new(1.0, 2.0, 3.0);
        let target = Point3::new(4.0, -2.0, 3.0);
        let pose = Pose::look_at(eye, target, Vector3::z()).unwrap();
        let in_cam = pose.world_to_camera(&target);
        assert!(in_cam.x.abs() < 1e-12 && in_cam.y.abs() < 1e-12);
        assert!((in_cam.z - 5.0).abs() < 1e-12);
        // world up maps to image "up" (negative y)
        let above = pose.world_to_camera(&Point3::new(4.0, -2.0, 4.0));
        assert!(above.y < 0.0);
        let back = pose.camera_to_world(&in_cam);
        assert!((back - target).norm() < 1e-12);
    }

    #[test]
    fn row_major_round_trip() {
        let pose = Pose::look_at(
            Point3::new(0.5, -1.0, 0.8),
            Point3::origin(),
            Vector3::z(),
        )
        .unwrap();
        let back = Pose::from_row_major(&pose.to_row_major()).unwrap();
        assert_eq!(pose, back);
    }
}
