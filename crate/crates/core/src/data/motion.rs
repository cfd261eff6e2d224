//! Procedural motion for the default 17-joint skeleton.
//!
//! Poses are built by forward kinematics: every bone is its fixed length
//! times a unit direction derived from a handful of joint angles, so bone
//! lengths are constant by construction. World frame is meters with `z` up.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionKind {
    Walking,
    Reaching,
    Idle,
}

impl ActionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::Walking => "walking",
            ActionKind::Reaching => "reaching",
            ActionKind::Idle => "idle",
        }
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ActionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "walking" => Ok(ActionKind::Walking),
            "reaching" => Ok(ActionKind::Reaching),
            "idle" => Ok(ActionKind::Idle),
            _ => Err(Error::Config(format!("unknown action kind {s:?}"))),
        }
    }
}

/// Segment lengths in meters for a subject of scale 1.
#[derive(Debug, Clone, Copy)]
pub struct BodyShape {
    pub hip_half_width: f64,
    pub thigh: f64,
    pub shin: f64,
    pub lower_spine: f64,
    pub upper_spine: f64,
    pub neck: f64,
    pub head: f64,
    pub shoulder_half_width: f64,
    pub shoulder_drop: f64,
    pub upper_arm: f64,
    pub forearm: f64,
    pub ankle_height: f64,
}

impl BodyShape {
    pub fn scaled(s: f64) -> Self {
        BodyShape {
            hip_half_width: 0.11 * s,
            thigh: 0.44 * s,
            shin: 0.43 * s,
            lower_spine: 0.22 * s,
            upper_spine: 0.24 * s,
            neck: 0.10 * s,
            head: 0.13 * s,
            shoulder_half_width: 0.17 * s,
            shoulder_drop: 0.03 * s,
            upper_arm: 0.28 * s,
            forearm: 0.26 * s,
            ankle_height: 0.08 * s,
        }
    }
}

/// Joint angles (radians) and root placement for one frame.
#[derive(Debug, Clone, Copy, Default)]
struct PoseAngles {
    root: [f64; 3],
    heading: f64,
    lean: f64,
    /// [right, left]
    hip_flex: [f64; 2],
    hip_abduct: [f64; 2],
    knee: [f64; 2],
    /// [left, right]
    shoulder_flex: [f64; 2],
    shoulder_abduct: [f64; 2],
    elbow: [f64; 2],
}

fn limb_dir(flex: f64, abduct: f64, side: f64) -> [f64; 3] {
    [flex.sin() * abduct.cos(), side * abduct.sin(), -flex.cos() * abduct.cos()]
}

fn pitch(v: [f64; 3], a: f64) -> [f64; 3] {
    // rotation about the body y axis; positive leans +x upward vectors forward
    let (s, c) = a.sin_cos();
    [c * v[0] + s * v[2], v[1], -s * v[0] + c * v[2]]
}

fn yaw(v: [f64; 3], a: f64) -> [f64; 3] {
    let (s, c) = a.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]]
}

fn add(a: [f64; 3], b: [f64; 3], scale: f64) -> [f64; 3] {
    [a[0] + scale * b[0], a[1] + scale * b[1], a[2] + scale * b[2]]
}

/// World joint positions for one frame, in default-topology order.
fn pose(shape: &BodyShape, q: &PoseAngles) -> [[f64; 3]; 17] {
    let w = |v: [f64; 3]| yaw(v, q.heading);
    let mut j = [[0.0; 3]; 17];
    j[0] = q.root;
    // legs: index 0 right (y < 0), 1 left
    for (leg, (hip, knee, ankle), side) in [(0usize, (1usize, 2usize, 3usize), -1.0), (1, (4, 5, 6), 1.0)] {
        j[hip] = add(j[0], w([0.0, side, 0.0]), shape.hip_half_width);
        let thigh = limb_dir(q.hip_flex[leg], q.hip_abduct[leg], side);
        j[knee] = add(j[hip], w(thigh), shape.thigh);
        let shin = limb_dir(q.hip_flex[leg] - q.knee[leg], q.hip_abduct[leg], side);
        j[ankle] = add(j[knee], w(shin), shape.shin);
    }
    let up = w(pitch([0.0, 0.0, 1.0], q.lean));
    j[7] = add(j[0], up, shape.lower_spine);
    j[8] = add(j[7], up, shape.upper_spine);
    j[9] = add(j[8], up, shape.neck);
    j[10] = add(j[9], up, shape.head);
    // arms: index 0 left (y > 0), 1 right
    for (arm, (sh, el, wr), side) in [(0usize, (11usize, 12usize, 13usize), 1.0), (1, (14, 15, 16), -1.0)] {
        let off = pitch([0.0, side * shape.shoulder_half_width, -shape.shoulder_drop], q.lean);
        j[sh] = add(j[8], w(off), 1.0);
        let upper = pitch(limb_dir(q.shoulder_flex[arm], q.shoulder_abduct[arm], side), q.lean);
        j[el] = add(j[sh], w(upper), shape.upper_arm);
        let fore = pitch(limb_dir(q.shoulder_flex[arm] + q.elbow[arm], q.shoulder_abduct[arm], side), q.lean);
        j[wr] = add(j[el], w(fore), shape.forearm);
    }
    j
}

/// Parameters of one generated clip.
#[derive(Debug, Clone)]
pub struct MotionSpec {
    pub action: ActionKind,
    pub frames: usize,
    pub fps: f64,
    pub scale: f64,
    /// Stage half-extent (meters) the root path is kept inside.
    pub stage_radius: f64,
}

/// Generate `frames` poses (frame-major, 17 joints each) in world meters.
pub fn generate_motion(spec: &MotionSpec, rng: &mut SeededRng) -> Result<Vec<[f64; 3]>> {
    if spec.frames == 0 || spec.fps <= 0.0 || spec.scale <= 0.0 {
        return Err(Error::Config("motion needs frames > 0, fps > 0 and scale > 0".into()));
    }
    let shape = BodyShape::scaled(spec.scale);
    let stand = shape.thigh + shape.shin + shape.ankle_height;
    let dt = 1.0 / spec.fps;
    let heading0 = rng.random_range(-PI..PI);
    let mut out = Vec::with_capacity(spec.frames * 17);

    match spec.action {
        ActionKind::Walking => {
            let speed = rng.random_range(0.8..1.3);
            let freq = rng.random_range(0.8..1.0);
            let amp = rng.random_range(0.35..0.5);
            let turn = rng.random_range(-0.25..0.25);
            let phase = rng.random_range(0.0..2.0 * PI);
            let arm_amp = rng.random_range(0.4..0.7) * amp;
            // start so the path is roughly centered on the stage
            let duration = spec.frames as f64 * dt;
            let half = (0.5 * speed * duration).min(spec.stage_radius);
            let start = [-half * heading0.cos(), -half * heading0.sin()];
            let mut pos = start;
            for f in 0..spec.frames {
                let t = f as f64 * dt;
                let heading = heading0 + turn * t;
                if f > 0 {
                    pos[0] += speed * dt * heading.cos();
                    pos[1] += speed * dt * heading.sin();
                    let r = (pos[0] * pos[0] + pos[1] * pos[1]).sqrt();
                    if r > spec.stage_radius {
                        pos[0] *= spec.stage_radius / r;
                        pos[1] *= spec.stage_radius / r;
                    }
                }
                let ph = 2.0 * PI * freq * t + phase;
                let swing = ph.sin();
                let q = PoseAngles {
                    root: [pos[0], pos[1], stand - 0.03 + 0.02 * (2.0 * ph).cos()],
                    heading,
                    lean: 0.06,
                    hip_flex: [amp * swing, -amp * swing],
                    hip_abduct: [0.04, 0.04],
                    knee: [
                        0.1 + 0.9 * amp * (ph + 0.5 * PI).sin().max(0.0) * 2.0,
                        0.1 + 0.9 * amp * (ph - 0.5 * PI).sin().max(0.0) * 2.0,
                    ],
                    shoulder_flex: [arm_amp * swing, -arm_amp * swing],
                    shoulder_abduct: [0.12, 0.12],
                    elbow: [0.3 + 0.2 * swing.max(0.0), 0.3 + 0.2 * (-swing).max(0.0)],
                };
                out.extend_from_slice(&pose(&shape, &q));
            }
        }
        ActionKind::Reaching => {
            let r0 = rng.random_range(0.0..0.5 * spec.stage_radius);
            let a0 = rng.random_range(-PI..PI);
            let root_xy = [r0 * a0.cos(), r0 * a0.sin()];
            let period = rng.random_range(1.5..2.5);
            let reach = rng.random_range(1.1..1.6);
            let both = rng.random_bool(0.3);
            let left = rng.random_bool(0.5);
            let lean_max = rng.random_range(0.15..0.45);
            let bend = rng.random_range(0.0..0.5);
            for f in 0..spec.frames {
                let t = f as f64 * dt;
                let r = 0.5 * (1.0 - (2.0 * PI * t / period).cos());
                let active = |is_left: bool| both || is_left == left;
                let arm = |is_left: bool| if active(is_left) { reach * r } else { 0.1 * r };
                let elbow = |is_left: bool| if active(is_left) { 1.3 * (1.0 - r) + 0.1 } else { 0.25 };
                let knee = bend * r;
                let q = PoseAngles {
                    root: [root_xy[0], root_xy[1], stand - 0.03 - shape.thigh * (1.0 - (0.5 * knee).cos()) * 2.0],
                    heading: heading0,
                    lean: lean_max * r,
                    hip_flex: [0.5 * knee, 0.5 * knee],
                    hip_abduct: [0.05, 0.05],
                    knee: [knee, knee],
                    shoulder_flex: [arm(true), arm(false)],
                    shoulder_abduct: [0.1 + 0.2 * r, 0.1 + 0.2 * r],
                    elbow: [elbow(true), elbow(false)],
                };
                out.extend_from_slice(&pose(&shape, &q));
            }
        }
        ActionKind::Idle => {
            let r0 = rng.random_range(0.0..0.5 * spec.stage_radius);
            let a0 = rng.random_range(-PI..PI);
            let sway_f = rng.random_range(0.2..0.4);
            let sway_a = rng.random_range(0.01..0.03);
            let arm_f = rng.random_range(0.3..0.6);
            for f in 0..spec.frames {
                let t = f as f64 * dt;
                let s = (2.0 * PI * sway_f * t).sin();
                let side = [-s.sin() * sway_a, s.cos() * sway_a];
                let a = 0.1 * (2.0 * PI * arm_f * t).sin();
                let q = PoseAngles {
                    root: [r0 * a0.cos() + side[0] * s, r0 * a0.sin() + side[1] * s, stand - 0.02],
                    heading: heading0 + 0.1 * s,
                    lean: 0.03 + 0.02 * s,
                    hip_flex: [0.03 * s, -0.03 * s],
                    hip_abduct: [0.06 + 0.02 * s, 0.06 - 0.02 * s],
                    knee: [0.05 + 0.03 * s.max(0.0), 0.05 + 0.03 * (-s).max(0.0)],
                    shoulder_flex: [a, -a],
                    shoulder_abduct: [0.15, 0.15],
                    elbow: [0.3 + a, 0.3 - a],
                };
                out.extend_from_slice(&pose(&shape, &q));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::default_topology;
    use crate::tensor::rng::seeded;

    fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
    }

    #[test]
    fn bone_lengths_constant_for_every_action() {
        let topo = default_topology();
        for action in [ActionKind::Walking, ActionKind::Reaching, ActionKind::Idle] {
            let spec = MotionSpec {
                action,
                frames: 90,
                fps: 30.0,
                scale: 1.05,
                stage_radius: 2.0,
            };
            let m = generate_motion(&spec, &mut seeded(11)).unwrap();
            for &(p, c) in topo.bones() {
                let l0 = dist(m[p], m[c]);
                for f in 1..90 {
                    let l = dist(m[f * 17 + p], m[f * 17 + c]);
                    assert!((l - l0).abs() < 1e-6, "{action} bone ({p},{c}) frame {f}");
                }
            }
        }
    }

    #[test]
    fn root_path_is_continuous_and_on_stage() {
        let spec = MotionSpec {
            action: ActionKind::Walking,
            frames: 200,
            fps: 30.0,
            scale: 1.0,
            stage_radius: 1.5,
        };
        let m = generate_motion(&spec, &mut seeded(3)).unwrap();
        for f in 1..200 {
            assert!(dist(m[f * 17], m[(f - 1) * 17]) < 0.1);
            assert!(m[f * 17][0].hypot(m[f * 17][1]) <= 1.5 + 1e-9);
        }
    }

    #[test]
    fn feet_stay_near_ground() {
        let spec = MotionSpec {
            action: ActionKind::Walking,
            frames: 60,
            fps: 30.0,
            scale: 1.0,
            stage_radius: 2.0,
        };
        let m = generate_motion(&spec, &mut seeded(5)).unwrap();
        for f in 0..60 {
            let low = m[f * 17 + 3][2].min(m[f * 17 + 6][2]);
            assert!(low > -0.05 && low < 0.3, "frame {f}: {low}");
            assert!(m[f * 17 + 10][2] > 1.4);
        }
    }
}
