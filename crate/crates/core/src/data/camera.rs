use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Calibrated pinhole camera. Extrinsics map world meters to camera meters
/// (`x` right, `y` down, `z` forward); intrinsics are in pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    /// Row-major world-to-camera rotation.
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub focal: [f64; 2],
    pub principal: [f64; 2],
    pub image_size: [u32; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub pixel: [f64; 2],
    pub depth: f64,
}

impl Camera {
    pub fn identity(focal: [f64; 2], principal: [f64; 2], image_size: [u32; 2]) -> Self {
        Camera {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
            focal,
            principal,
            image_size,
        }
    }

    /// Camera at `eye` looking at `target`, with `up` the world up vector.
    pub fn look_at(eye: [f64; 3], target: [f64; 3], up: [f64; 3], focal: [f64; 2], principal: [f64; 2], image_size: [u32; 2]) -> Self {
        let eye = Vector3::from(eye);
        let fwd = (Vector3::from(target) - eye).normalize();
        let right = fwd.cross(&Vector3::from(up)).normalize();
        let down = fwd.cross(&right);
        let r = Matrix3::from_rows(&[right.transpose(), down.transpose(), fwd.transpose()]);
        let t = -(r * eye);
        Camera {
            rotation: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
            translation: [t.x, t.y, t.z],
            focal,
            principal,
            image_size,
        }
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        let r = &self.rotation;
        Matrix3::new(
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
        )
    }

    /// `R^T R = I` within `tol` and `det R = +1` within `tol`; positive focal.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let r = self.rotation_matrix();
        let err = (r.transpose() * r - Matrix3::identity()).abs().max();
        if err > tol || (r.determinant() - 1.0).abs() > tol {
            return Err(Error::Config(format!("camera rotation is not a proper rotation (orthogonality error {err:e})")));
        }
        if self.focal.iter().any(|&f| f <= 0.0 || !f.is_finite()) {
            return Err(Error::Config("camera focal length must be positive".into()));
        }
        Ok(())
    }

    /// World point (meters) to camera coordinates (meters).
    pub fn to_camera(&self, p: [f64; 3]) -> [f64; 3] {
        let c = self.rotation_matrix() * Vector3::from(p) + Vector3::from(self.translation);
        [c.x, c.y, c.z]
    }

    pub fn to_world(&self, c: [f64; 3]) -> [f64; 3] {
        let w = self.rotation_matrix().transpose() * (Vector3::from(c) - Vector3::from(self.translation));
        [w.x, w.y, w.z]
    }

    /// Optical center in world coordinates.
    pub fn center(&self) -> [f64; 3] {
        self.to_world([0.0; 3])
    }

    /// Pinhole projection of a camera-frame point; any unit works since only
    /// the ratios `x/z`, `y/z` matter.
    pub fn project_camera_point(&self, c: [f64; 3]) -> Result<Projection> {
        if c[2] <= 0.0 {
            return Err(Error::BehindCamera(c[2]));
        }
        Ok(Projection {
            pixel: [
                self.focal[0] * c[0] / c[2] + self.principal[0],
                self.focal[1] * c[1] / c[2] + self.principal[1],
            ],
            depth: c[2],
        })
    }

    /// Project a world point. Points at or behind the image plane are
    /// reported as [`Error::BehindCamera`].
    pub fn project(&self, p: [f64; 3]) -> Result<Projection> {
        self.project_camera_point(self.to_camera(p))
    }

    /// Inverse of [`Camera::project`] for a known depth.
    pub fn unproject(&self, pixel: [f64; 2], depth: f64) -> [f64; 3] {
        let x = (pixel[0] - self.principal[0]) / self.focal[0] * depth;
        let y = (pixel[1] - self.principal[1]) / self.focal[1] * depth;
        self.to_world([x, y, depth])
    }

    pub fn in_image(&self, pixel: [f64; 2]) -> bool {
        pixel[0] >= 0.0 && pixel[0] < self.image_size[0] as f64 && pixel[1] >= 0.0 && pixel[1] < self.image_size[1] as f64
    }

    /// Apply a rigid motion to the rig: `R' = R * Q^T`, i.e. the camera seen
    /// from a world rotated by `Q`. Used in tests.
    pub fn rotated(&self, axis_angle: [f64; 3], translation: [f64; 3]) -> Self {
        let q = Rotation3::new(Vector3::from(axis_angle)).into_inner();
        let r = self.rotation_matrix() * q;
        let mut out = self.clone();
        for i in 0..3 {
            for j in 0..3 {
                out.rotation[i][j] = r[(i, j)];
            }
        }
        out.translation = translation;
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn optical_axis_hits_principal_point() {
        let cam = Camera::identity([1000.0, 1000.0], [500.0, 400.0], [1000, 800]);
        let p = cam.project([0.0, 0.0, 2.0]).unwrap();
        assert_eq!(p.pixel, [500.0, 400.0]);
        assert_eq!(p.depth, 2.0);
    }

    #[test]
    fn off_axis_point() {
        let cam = Camera::identity([1000.0, 1000.0], [500.0, 500.0], [1000, 1000]);
        let p = cam.project([0.1, 0.0, 2.0]).unwrap();
        assert!((p.pixel[0] - 550.0).abs() < 1e-12);
        assert_eq!(p.pixel[1], 500.0);
    }

    #[test]
    fn behind_camera_flagged() {
        let cam = Camera::identity([1000.0, 1000.0], [500.0, 500.0], [1000, 1000]);
        assert!(matches!(cam.project([0.0, 0.0, -1.0]), Err(Error::BehindCamera(_))));
        assert!(cam.project([0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn look_at_sees_target_at_center() {
        let cam = Camera::look_at([4.0, 1.0, 1.5], [0.0, 0.0, 1.0], [0.0, 0.0, 1.0], [900.0, 900.0], [480.0, 360.0], [960, 720]);
        cam.validate(1e-9).unwrap();
        let p = cam.project([0.0, 0.0, 1.0]).unwrap();
        assert!((p.pixel[0] - 480.0).abs() < 1e-9 && (p.pixel[1] - 360.0).abs() < 1e-9);
        // world up projects upward in the image (smaller y)
        let above = cam.project([0.0, 0.0, 1.5]).unwrap();
        assert!(above.pixel[1] < 360.0);
    }
}
