//! Synthetic occluded pose data: cameras, occluders, a procedural motion
//! generator, the corruption model standing in for a lifting backbone,
//! windowing, and the on-disk layout.

pub mod camera;
pub mod corrupt;
pub mod io;
pub mod motion;
pub mod occlusion;
pub mod scene;
pub mod window;

pub use camera::{Camera, Projection};
pub use corrupt::{corrupt, CorruptionModel};
pub use io::{read_dataset, read_sequence, write_dataset, write_sequence};
pub use motion::ActionKind;
pub use occlusion::{compute_visibility, Occluder};
pub use scene::{generate_scene, generate_sequence, SceneSpec, SequenceSpec};
pub use window::{window_frames, windows, Window};

use crate::error::{Error, Result};

/// One subject/action clip seen by one camera.
///
/// `joints_3d` is `F x J x 3` in camera coordinates (millimeters),
/// `joints_2d` is `F x J x 2` in pixels, `visibility` is `F x J` with 1 for
/// visible. Coordinates are stored as `f64` but hold `f32`-representable
/// values, so the on-disk round trip is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSequence {
    pub subject: String,
    pub action: String,
    pub camera_id: String,
    pub camera: Camera,
    pub frames: usize,
    pub joints: usize,
    pub joints_3d: Vec<f64>,
    pub joints_2d: Vec<f64>,
    pub visibility: Vec<u8>,
}

impl PoseSequence {
    /// Check array lengths and label values.
    pub fn validate(&self) -> Result<()> {
        let fj = self.frames * self.joints;
        if self.joints_3d.len() != fj * 3 || self.joints_2d.len() != fj * 2 || self.visibility.len() != fj {
            return Err(Error::shape(
                "pose_sequence",
                format!(
                    "{} frames x {} joints but arrays of {}, {}, {}",
                    self.frames,
                    self.joints,
                    self.joints_3d.len(),
                    self.joints_2d.len(),
                    self.visibility.len()
                ),
            ));
        }
        if let Some(v) = self.visibility.iter().find(|&&v| v > 1) {
            return Err(Error::shape("pose_sequence", format!("visibility value {v}")));
        }
        Ok(())
    }

    /// `subject/action/camera` key, also the relative directory on disk.
    pub fn key(&self) -> String {
        format!("{}/{}/{}", self.subject, self.action, self.camera_id)
    }

    pub fn joint(&self, frame: usize, joint: usize) -> [f64; 3] {
        let i = (frame * self.joints + joint) * 3;
        [self.joints_3d[i], self.joints_3d[i + 1], self.joints_3d[i + 2]]
    }

    pub fn occluded_fraction(&self) -> f64 {
        if self.visibility.is_empty() {
            return 0.0;
        }
        self.visibility.iter().filter(|&&v| v == 0).count() as f64 / self.visibility.len() as f64
    }
}

/// Round to the nearest `f32`, the storage precision.
pub fn quantize(x: f64) -> f64 {
    x as f32 as f64
}

/// Sequences whose subject is in `subjects`, and the rest.
pub fn split_by_subject<'a>(seqs: &'a [PoseSequence], subjects: &[String]) -> (Vec<&'a PoseSequence>, Vec<&'a PoseSequence>) {
    seqs.iter().partition(|s| subjects.contains(&s.subject))
}
