//! Visibility labeling: a joint is hidden when the segment from the camera
//! center to it crosses an occluder box, or when it projects outside the
//! image or behind the camera. Self-occlusion is not modeled.

use serde::{Deserialize, Serialize};

use super::camera::Camera;
use crate::error::{Error, Result};

/// Axis-aligned box in world meters, optionally translating by `velocity`
/// every frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Occluder {
    pub min: [f64; 3],
    pub max: [f64; 3],
    #[serde(default)]
    pub velocity: [f64; 3],
}

impl Occluder {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Result<Self> {
        if (0..3).any(|i| min[i] > max[i]) {
            return Err(Error::Config(format!("occluder min {min:?} exceeds max {max:?}")));
        }
        Ok(Occluder {
            min,
            max,
            velocity: [0.0; 3],
        })
    }

    pub fn moving(mut self, velocity: [f64; 3]) -> Self {
        self.velocity = velocity;
        self
    }

    /// Box corners at `frame`.
    pub fn at_frame(&self, frame: usize) -> ([f64; 3], [f64; 3]) {
        let f = frame as f64;
        let lo = [0, 1, 2].map(|i| self.min[i] + f * self.velocity[i]);
        let hi = [0, 1, 2].map(|i| self.max[i] + f * self.velocity[i]);
        (lo, hi)
    }

    pub fn contains(&self, frame: usize, p: [f64; 3]) -> bool {
        let (lo, hi) = self.at_frame(frame);
        (0..3).all(|i| p[i] >= lo[i] && p[i] <= hi[i])
    }
}

/// Slab test: does the closed segment `a -> b` meet the box `[lo, hi]`?
pub fn segment_hits_box(a: [f64; 3], b: [f64; 3], lo: [f64; 3], hi: [f64; 3]) -> bool {
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    for i in 0..3 {
        let d = b[i] - a[i];
        if d == 0.0 {
            if a[i] < lo[i] || a[i] > hi[i] {
                return false;
            }
            continue;
        }
        let mut ta = (lo[i] - a[i]) / d;
        let mut tb = (hi[i] - a[i]) / d;
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        t0 = t0.max(ta);
        t1 = t1.min(tb);
        if t0 > t1 {
            return false;
        }
    }
    true
}

/// Visibility of one world point at `frame`: 1 visible, 0 hidden.
pub fn point_visibility(camera: &Camera, occluders: &[Occluder], frame: usize, p: [f64; 3]) -> u8 {
    match camera.project(p) {
        Ok(proj) if camera.in_image(proj.pixel) => {}
        _ => return 0,
    }
    let eye = camera.center();
    for occ in occluders {
        let (lo, hi) = occ.at_frame(frame);
        if segment_hits_box(eye, p, lo, hi) {
            return 0;
        }
    }
    1
}

/// `F x J` visibility labels for world joints laid out frame-major.
pub fn compute_visibility(joints_world: &[[f64; 3]], joints: usize, camera: &Camera, occluders: &[Occluder]) -> Vec<u8> {
    joints_world
        .iter()
        .enumerate()
        .map(|(i, &p)| point_visibility(camera, occluders, i / joints.max(1), p))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam() -> Camera {
        Camera::identity([1000.0, 1000.0], [500.0, 500.0], [1000, 1000])
    }

    #[test]
    fn clear_scene_is_fully_visible() {
        let pts = vec![[0.0, 0.0, 3.0], [0.2, -0.3, 4.0]];
        assert_eq!(compute_visibility(&pts, 2, &cam(), &[]), vec![1, 1]);
    }

    #[test]
    fn out_of_frame_is_hidden() {
        // pixel x = 1000 * (-0.505/1) + 500 = -5
        let p = [-0.505, -0.4, 1.0];
        let proj = cam().project(p).unwrap();
        assert!((proj.pixel[0] + 5.0).abs() < 1e-9);
        assert_eq!(point_visibility(&cam(), &[], 0, p), 0);
        assert_eq!(point_visibility(&cam(), &[], 0, [0.0, 0.0, -2.0]), 0);
    }

    #[test]
    fn box_on_line_of_sight_hides_only_that_joint() {
        let occ = Occluder::new([-0.05, -0.05, 1.0], [0.05, 0.05, 1.2]).unwrap();
        let pts = vec![[0.0, 0.0, 3.0], [0.5, 0.0, 3.0]];
        assert_eq!(compute_visibility(&pts, 2, &cam(), &[occ]), vec![0, 1]);
    }

    #[test]
    fn moving_box_follows_velocity() {
        let occ = Occluder::new([-0.05, -0.05, 1.0], [0.05, 0.05, 1.2]).unwrap().moving([0.1, 0.0, 0.0]);
        let target = [0.3, 0.0, 3.0];
        assert_eq!(point_visibility(&cam(), std::slice::from_ref(&occ), 0, target), 1);
        assert_eq!(point_visibility(&cam(), std::slice::from_ref(&occ), 1, target), 0);
    }

    #[test]
    fn inverted_box_rejected() {
        assert!(Occluder::new([0.0, 1.0, 0.0], [1.0, 0.0, 1.0]).is_err());
    }
}
