//! Scene specs and sequence generation.
//!
//! # Scene file
//!
//! Plain text, one `key = value` per line, `#` starts a comment. Keys
//! `subject`, `action`, `camera`, `ring` and `occluder` may repeat.
//!
//! ```text
//! frames = 100
//! fps = 30
//! seed = 7
//! stage_radius = 1.5
//! subject = SS1 1.00            # name, body scale
//! action = walking              # walking | reaching | idle
//! camera = c0 4.5 0 1.4 0 0 1 1000 1000 500 500 1000 1000
//! #        id eye(3) target(3) fx fy cx cy width height
//! ring = 4 4.5 1.4 1.0 1000 1000 1000
//! #      count radius height target_z focal width height
//! occluder = 2.2 -0.8 0 2.4 0.8 1.1 [vx vy vz]
//! ```

use std::path::Path;

use super::camera::Camera;
use super::motion::{generate_motion, ActionKind, MotionSpec};
use super::occlusion::{compute_visibility, Occluder};
use super::{quantize, PoseSequence};
use crate::error::{Error, Result};
use crate::skeleton::{default_topology, SkeletonTopology};
use crate::tensor::rng::keyed;

/// A look-at camera as written in scene files.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraSpec {
    pub id: String,
    pub eye: [f64; 3],
    pub target: [f64; 3],
    pub focal: [f64; 2],
    pub principal: [f64; 2],
    pub image_size: [u32; 2],
}

impl CameraSpec {
    pub fn camera(&self) -> Camera {
        Camera::look_at(self.eye, self.target, [0.0, 0.0, 1.0], self.focal, self.principal, self.image_size)
    }

    /// `count` cameras evenly spaced on a circle, the first on the +x axis.
    pub fn ring(count: usize, radius: f64, height: f64, target_z: f64, focal: f64, image_size: [u32; 2]) -> Vec<CameraSpec> {
        (0..count)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / count as f64;
                CameraSpec {
                    id: format!("cam{i}"),
                    eye: [radius * a.cos(), radius * a.sin(), height],
                    target: [0.0, 0.0, target_z],
                    focal: [focal, focal],
                    principal: [image_size[0] as f64 / 2.0, image_size[1] as f64 / 2.0],
                    image_size,
                }
            })
            .collect()
    }
}

/// Everything needed to render one subject/action clip from every camera.
#[derive(Debug, Clone)]
pub struct SequenceSpec {
    pub subject: String,
    pub scale: f64,
    pub action: ActionKind,
    pub frames: usize,
    pub fps: f64,
    pub seed: u64,
    pub stage_radius: f64,
    pub cameras: Vec<CameraSpec>,
    pub occluders: Vec<Occluder>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub frames: usize,
    pub fps: f64,
    pub seed: u64,
    pub stage_radius: f64,
    pub subjects: Vec<(String, f64)>,
    pub actions: Vec<ActionKind>,
    pub cameras: Vec<CameraSpec>,
    pub occluders: Vec<Occluder>,
}

impl SceneSpec {
    /// Five subjects, two actions, a four-camera ring and one occluder per
    /// camera: forty sequences. Subject `SS5` is meant to be held out.
    pub fn desk(frames: usize, seed: u64) -> Self {
        let occ = |min: [f64; 3], max: [f64; 3]| Occluder::new(min, max).expect("ordered corners");
        SceneSpec {
            frames,
            fps: 30.0,
            seed,
            stage_radius: 1.5,
            subjects: vec![
                ("SS1".into(), 1.00),
                ("SS2".into(), 0.94),
                ("SS3".into(), 1.06),
                ("SS4".into(), 0.97),
                ("SS5".into(), 1.03),
            ],
            actions: vec![ActionKind::Walking, ActionKind::Reaching],
            cameras: CameraSpec::ring(4, 4.5, 1.4, 1.0, 1000.0, [1000, 1000]),
            occluders: vec![
                // low wall in front of cam0
                occ([2.2, -0.8, 0.0], [2.4, 0.8, 1.1]),
                // pillar in front of cam1
                occ([-0.1, 1.9, 0.0], [0.1, 2.0, 2.2]),
                // raised panel in front of cam2
                occ([-2.0, -0.25, 1.1], [-1.9, 0.25, 1.4]),
                // narrow panel sliding across cam3
                occ([-1.2, -2.0, 0.0], [-0.9, -1.9, 1.8]).moving([0.02, 0.0, 0.0]),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.fps <= 0.0 || self.stage_radius <= 0.0 {
            return Err(Error::Config("scene needs frames > 0, fps > 0 and stage_radius > 0".into()));
        }
        if self.subjects.is_empty() || self.actions.is_empty() || self.cameras.is_empty() {
            return Err(Error::Config("scene needs at least one subject, action and camera".into()));
        }
        if let Some((name, _)) = self.subjects.iter().find(|(_, s)| *s <= 0.0) {
            return Err(Error::Config(format!("subject {name} has non-positive scale")));
        }
        let mut ids: Vec<&str> = self.cameras.iter().map(|c| c.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("duplicate camera id".into()));
        }
        for c in &self.cameras {
            c.camera().validate(1e-9)?;
        }
        Ok(())
    }

    /// One spec per (subject, action), each with a seed derived from the
    /// scene seed and its labels.
    pub fn sequences(&self) -> Vec<SequenceSpec> {
        let mut out = Vec::new();
        for (subject, scale) in &self.subjects {
            for &action in &self.actions {
                out.push(SequenceSpec {
                    subject: subject.clone(),
                    scale: *scale,
                    action,
                    frames: self.frames,
                    fps: self.fps,
                    seed: derive_seed(self.seed, &format!("{subject}/{action}")),
                    stage_radius: self.stage_radius,
                    cameras: self.cameras.clone(),
                    occluders: self.occluders.clone(),
                });
            }
        }
        out
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut scene = SceneSpec {
            frames: 100,
            fps: 30.0,
            seed: 0,
            stage_radius: 1.5,
            subjects: Vec::new(),
            actions: Vec::new(),
            cameras: Vec::new(),
            occluders: Vec::new(),
        };
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |detail: String| Error::format(origin, format!("line {}: {detail}", ln + 1));
            let (key, value) = line.split_once('=').ok_or_else(|| bad("expected key = value".into()))?;
            let (key, value) = (key.trim(), value.trim());
            let toks: Vec<&str> = value.split_whitespace().collect();
            let nums = |from: usize| -> Result<Vec<f64>> {
                toks[from..]
                    .iter()
                    .map(|t| t.parse::<f64>().map_err(|_| bad(format!("bad number {t:?}"))))
                    .collect()
            };
            match key {
                "frames" => scene.frames = value.parse().map_err(|_| bad("bad frames".into()))?,
                "fps" => scene.fps = value.parse().map_err(|_| bad("bad fps".into()))?,
                "seed" => scene.seed = value.parse().map_err(|_| bad("bad seed".into()))?,
                "stage_radius" => scene.stage_radius = value.parse().map_err(|_| bad("bad stage_radius".into()))?,
                "subject" => {
                    if toks.len() != 2 {
                        return Err(bad("subject takes a name and a scale".into()));
                    }
                    scene.subjects.push((toks[0].to_string(), nums(1)?[0]));
                }
                "action" => scene.actions.push(value.parse().map_err(|e: Error| bad(e.to_string()))?),
                "camera" => {
                    if toks.len() != 13 {
                        return Err(bad("camera takes id and 12 numbers".into()));
                    }
                    let n = nums(1)?;
                    scene.cameras.push(CameraSpec {
                        id: toks[0].to_string(),
                        eye: [n[0], n[1], n[2]],
                        target: [n[3], n[4], n[5]],
                        focal: [n[6], n[7]],
                        principal: [n[8], n[9]],
                        image_size: [n[10] as u32, n[11] as u32],
                    });
                }
                "ring" => {
                    let n = nums(0)?;
                    if n.len() != 7 {
                        return Err(bad("ring takes 7 numbers".into()));
                    }
                    scene
                        .cameras
                        .extend(CameraSpec::ring(n[0] as usize, n[1], n[2], n[3], n[4], [n[5] as u32, n[6] as u32]));
                }
                "occluder" => {
                    let n = nums(0)?;
                    if n.len() != 6 && n.len() != 9 {
                        return Err(bad("occluder takes 6 or 9 numbers".into()));
                    }
                    let mut o = Occluder::new([n[0], n[1], n[2]], [n[3], n[4], n[5]]).map_err(|e| bad(e.to_string()))?;
                    if n.len() == 9 {
                        o = o.moving([n[6], n[7], n[8]]);
                    }
                    scene.occluders.push(o);
                }
                _ => return Err(bad(format!("unknown key {key:?}"))),
            }
        }
        scene.validate()?;
        Ok(scene)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Scene file text; parsing it yields an equal spec.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "frames = {}\nfps = {}\nseed = {}\nstage_radius = {}\n",
            self.frames, self.fps, self.seed, self.stage_radius
        );
        for (name, scale) in &self.subjects {
            s += &format!("subject = {name} {scale}\n");
        }
        for a in &self.actions {
            s += &format!("action = {a}\n");
        }
        for c in &self.cameras {
            s += &format!(
                "camera = {} {} {} {} {} {} {} {} {} {} {} {} {}\n",
                c.id,
                c.eye[0],
                c.eye[1],
                c.eye[2],
                c.target[0],
                c.target[1],
                c.target[2],
                c.focal[0],
                c.focal[1],
                c.principal[0],
                c.principal[1],
                c.image_size[0],
                c.image_size[1]
            );
        }
        for o in &self.occluders {
            s += &format!(
                "occluder = {} {} {} {} {} {}",
                o.min[0], o.min[1], o.min[2], o.max[0], o.max[1], o.max[2]
            );
            if o.velocity != [0.0; 3] {
                s += &format!(" {} {} {}", o.velocity[0], o.velocity[1], o.velocity[2]);
            }
            s.push('\n');
        }
        s
    }
}

/// Seed for a labeled child of a seeded run.
pub fn derive_seed(seed: u64, key: &str) -> u64 {
    use rand::RngCore;
    keyed(seed, key).next_u64()
}

fn check_topology(topology: &SkeletonTopology) -> Result<()> {
    let default = default_topology();
    let same = topology.joint_count() == default.joint_count()
        && (0..default.joint_count()).all(|j| topology.parent(j) == default.parent(j));
    if same {
        Ok(())
    } else {
        Err(Error::SkeletonMismatch(
            "the motion generator only drives the default 17-joint tree".into(),
        ))
    }
}

/// Generate the motion once and render it from every camera in the spec.
pub fn generate_sequence(spec: &SequenceSpec, topology: &SkeletonTopology) -> Result<Vec<PoseSequence>> {
    check_topology(topology)?;
    if spec.cameras.is_empty() {
        return Err(Error::Config("sequence spec has no cameras".into()));
    }
    let joints = topology.joint_count();
    let mut rng = keyed(spec.seed, "motion");
    let world = generate_motion(
        &MotionSpec {
            action: spec.action,
            frames: spec.frames,
            fps: spec.fps,
            scale: spec.scale,
            stage_radius: spec.stage_radius,
        },
        &mut rng,
    )?;

    let mut out = Vec::with_capacity(spec.cameras.len());
    for cs in &spec.cameras {
        let camera = cs.camera();
        camera.validate(1e-9)?;
        let mut visibility = compute_visibility(&world, joints, &camera, &spec.occluders);
        let mut joints_3d = Vec::with_capacity(world.len() * 3);
        let mut joints_2d = Vec::with_capacity(world.len() * 2);
        for (i, &p) in world.iter().enumerate() {
            let c = camera.to_camera(p).map(|v| quantize(v * 1000.0));
            joints_3d.extend_from_slice(&c);
            match camera.project_camera_point(c) {
                Ok(proj) => {
                    let px = proj.pixel.map(quantize);
                    // label from the stored pixel so the stored data is self-consistent
                    if !camera.in_image(px) {
                        visibility[i] = 0;
                    }
                    joints_2d.extend_from_slice(&px);
                }
                Err(_) => {
                    visibility[i] = 0;
                    joints_2d.extend_from_slice(&[f64::from(f32::NAN); 2]);
                }
            }
        }
        let seq = PoseSequence {
            subject: spec.subject.clone(),
            action: spec.action.to_string(),
            camera_id: cs.id.clone(),
            camera,
            frames: spec.frames,
            joints,
            joints_3d,
            joints_2d,
            visibility,
        };
        seq.validate()?;
        out.push(seq);
    }
    Ok(out)
}

/// Every sequence of the scene, ordered by subject, action, camera.
pub fn generate_scene(scene: &SceneSpec, topology: &SkeletonTopology) -> Result<Vec<PoseSequence>> {
    scene.validate()?;
    let mut out = Vec::new();
    for spec in scene.sequences() {
        out.extend(generate_sequence(&spec, topology)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_scene_text_round_trip() {
        let scene = SceneSpec::desk(60, 3);
        let parsed = SceneSpec::parse(&scene.to_text(), Path::new("desk.scene")).unwrap();
        assert_eq!(parsed, scene);
    }

    #[test]
    fn unknown_key_names_the_line() {
        let err = SceneSpec::parse("frames = 10\nbogus = 1\n", Path::new("s.scene")).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn rig_views_share_one_world_motion() {
        let scene = SceneSpec::desk(20, 1);
        let spec = &scene.sequences()[0];
        let seqs = generate_sequence(spec, &default_topology()).unwrap();
        assert_eq!(seqs.len(), 4);
        for f in [0, 7, 19] {
            for j in 0..17 {
                let w: Vec<[f64; 3]> = seqs
                    .iter()
                    .map(|s| s.camera.to_world(s.joint(f, j).map(|v| v / 1000.0)))
                    .collect();
                for other in &w[1..] {
                    for a in 0..3 {
                        assert!((other[a] - w[0][a]).abs() < 1e-6);
                    }
                }
            }
        }
    }

    #[test]
    fn stored_pixels_reproject_from_stored_3d() {
        let scene = SceneSpec::desk(30, 2);
        for seq in generate_scene(&scene, &default_topology()).unwrap().iter().take(8) {
            for i in 0..seq.frames * seq.joints {
                let c = [seq.joints_3d[3 * i], seq.joints_3d[3 * i + 1], seq.joints_3d[3 * i + 2]];
                let p = seq.camera.project_camera_point(c).unwrap();
                assert!((p.pixel[0] - seq.joints_2d[2 * i]).abs() < 1e-3);
                assert!((p.pixel[1] - seq.joints_2d[2 * i + 1]).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn other_skeletons_rejected() {
        let topo = SkeletonTopology::new(
            vec!["a".into(), "b".into()],
            vec![None, Some(0)],
            vec![None, None],
        )
        .unwrap();
        let spec = &SceneSpec::desk(5, 0).sequences()[0];
        assert!(matches!(generate_sequence(spec, &topo), Err(Error::SkeletonMismatch(_))));
    }
}
