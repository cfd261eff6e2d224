//! T-frame windows around every frame, with edge replication at the
//! sequence borders, and their assembly into model input tensors.
//!
//! Coordinates inside a window are relative to the root joint of the
//! window's center frame (of the input pose), so the model never sees the
//! camera-space position of the body. The same root is subtracted from the
//! ground truth.

use super::PoseSequence;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Frame indices of the window centered on `center`: `center - T/2 ..=
/// center + T/2`, clamped into `[0, frames)`.
pub fn window_frames(frames: usize, t: usize, center: usize) -> Vec<usize> {
    let half = (t / 2) as isize;
    let last = frames as isize - 1;
    (-half..=half)
        .map(|d| (center as isize + d).clamp(0, last) as usize)
        .collect()
}

/// One training/evaluation example.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub center: usize,
    pub frames: Vec<usize>,
    /// Root of the input center frame, camera millimeters.
    pub root: [f64; 3],
    /// `T x J x 3`, root-relative.
    pub input: Vec<f64>,
    /// `J x 3`, root-relative.
    pub target: Vec<f64>,
    /// `T x J`.
    pub visibility: Vec<u8>,
}

/// One window per frame of `seq`. `input` supplies the (possibly
/// corrupted) `F x J x 3` poses; `None` uses the clean poses.
pub fn windows(seq: &PoseSequence, input: Option<&[f64]>, t: usize, root_joint: usize) -> Result<Vec<Window>> {
    let (f, j) = (seq.frames, seq.joints);
    let input = input.unwrap_or(&seq.joints_3d);
    if t % 2 == 0 || t == 0 {
        return Err(Error::Config(format!("window length {t} must be odd")));
    }
    if input.len() != f * j * 3 || root_joint >= j {
        return Err(Error::shape("windows", format!("{} values for {f} frames x {j} joints", input.len())));
    }
    Ok((0..f)
        .map(|c| {
            let frames = window_frames(f, t, c);
            let r = (c * j + root_joint) * 3;
            let root = [input[r], input[r + 1], input[r + 2]];
            let mut inp = Vec::with_capacity(t * j * 3);
            let mut vis = Vec::with_capacity(t * j);
            for &fr in &frames {
                for k in 0..j {
                    let i = (fr * j + k) * 3;
                    inp.extend((0..3).map(|a| input[i + a] - root[a]));
                    vis.push(seq.visibility[fr * j + k]);
                }
            }
            let target = (0..j * 3).map(|i| seq.joints_3d[c * j * 3 + i] - root[i % 3]).collect();
            Window {
                center: c,
                frames,
                root,
                input: inp,
                target,
                visibility: vis,
            }
        })
        .collect())
}

/// Batch of windows as the model input `(N, C, T, J, 1)`, with `C = 3` or 4
/// when the visibility channel is appended.
pub fn input_tensor(windows: &[&Window], t: usize, j: usize, with_visibility: bool) -> Result<Tensor> {
    let c = if with_visibility { 4 } else { 3 };
    let n = windows.len();
    let tj = t * j;
    let mut data = vec![0.0; n * c * tj];
    for (b, w) in windows.iter().enumerate() {
        if w.input.len() != tj * 3 {
            return Err(Error::shape("input_tensor", "window length does not match T x J"));
        }
        let base = b * c * tj;
        for p in 0..tj {
            for a in 0..3 {
                data[base + a * tj + p] = w.input[p * 3 + a];
            }
            if with_visibility {
                data[base + 3 * tj + p] = f64::from(w.visibility[p]);
            }
        }
    }
    Tensor::new(data, &[n, c, t, j, 1])
}

/// Targets as `(N, 3, J, 1)`, the model output layout.
pub fn target_tensor(windows: &[&Window], j: usize) -> Result<Tensor> {
    let n = windows.len();
    let mut data = vec![0.0; n * 3 * j];
    for (b, w) in windows.iter().enumerate() {
        for k in 0..j {
            for a in 0..3 {
                data[b * 3 * j + a * j + k] = w.target[k * 3 + a];
            }
        }
    }
    Tensor::new(data, &[n, 3, j, 1])
}
