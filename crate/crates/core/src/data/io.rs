//! On-disk layout, one directory per sequence:
//!
//! ```text
//! <root>/<subject>/<action>/<camera-id>/
//!     manifest.json   labels, shapes and SHA-256 of every other file
//!     poses_3d.f32    F x J x 3, camera millimeters
//!     poses_2d.f32    F x J x 2, pixels
//!     visibility.u8   F x J, 1 = visible
//!     camera.json     intrinsics and extrinsics
//! ```
//!
//! Blobs are row-major little-endian without headers; their shapes live in
//! the manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::camera::Camera;
use super::{quantize, PoseSequence};
use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.json";
pub const POSES_3D: &str = "poses_3d.f32";
pub const POSES_2D: &str = "poses_2d.f32";
pub const VISIBILITY: &str = "visibility.u8";
pub const CAMERA: &str = "camera.json";
const FORMAT: &str = "stgcn-refine/sequence";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct FileEntry {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    shape: Vec<usize>,
    sha256: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    subject: String,
    action: String,
    camera_id: String,
    frames: usize,
    joints: usize,
    files: BTreeMap<String, FileEntry>,
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn f32_blob(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Directory of `seq` under `root`.
pub fn sequence_dir(root: &Path, seq: &PoseSequence) -> PathBuf {
    root.join(&seq.subject).join(&seq.action).join(&seq.camera_id)
}

/// Write one sequence into `dir`, creating it. Values are stored as `f32`.
pub fn write_sequence(seq: &PoseSequence, dir: &Path) -> Result<()> {
    seq.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (f, j) = (seq.frames, seq.joints);
    let camera = serde_json::to_vec_pretty(&seq.camera).expect("camera serializes");
    let blobs: [(&str, Vec<usize>, Vec<u8>); 4] = [
        (POSES_3D, vec![f, j, 3], f32_blob(&seq.joints_3d)),
        (POSES_2D, vec![f, j, 2], f32_blob(&seq.joints_2d)),
        (VISIBILITY, vec![f, j], seq.visibility.clone()),
        (CAMERA, vec![], camera),
    ];
    let mut files = BTreeMap::new();
    for (name, shape, bytes) in &blobs {
        write_file(&dir.join(name), bytes)?;
        files.insert(
            name.to_string(),
            FileEntry {
                shape: shape.clone(),
                sha256: hex_digest(bytes),
            },
        );
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        version: VERSION,
        subject: seq.subject.clone(),
        action: seq.action.clone(),
        camera_id: seq.camera_id.clone(),
        frames: f,
        joints: j,
        files,
    };
    let mut text = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    text.push(b'\n');
    write_file(&dir.join(MANIFEST), &text)
}

/// Read a file listed in the manifest, checking its size against
/// `elem_size * prod(shape)` and then its checksum.
fn read_checked(dir: &Path, manifest: &Manifest, name: &str, elem_size: usize) -> Result<Vec<u8>> {
    let path = dir.join(name);
    let entry = manifest
        .files
        .get(name)
        .ok_or_else(|| Error::format(dir.join(MANIFEST), format!("no entry for {name}")))?;
    let bytes = read_file(&path)?;
    if elem_size > 0 {
        let expect = entry.shape.iter().product::<usize>() * elem_size;
        if bytes.len() != expect {
            return Err(Error::FileShape {
                path,
                detail: format!("{} bytes, manifest shape {:?} needs {expect}", bytes.len(), entry.shape),
            });
        }
    }
    if hex_digest(&bytes) != entry.sha256 {
        return Err(Error::Checksum(path));
    }
    Ok(bytes)
}

fn check_shape(dir: &Path, manifest: &Manifest, name: &str, expect: &[usize]) -> Result<()> {
    let got = manifest.files.get(name).map(|e| e.shape.as_slice()).unwrap_or(&[]);
    if got != expect {
        return Err(Error::FileShape {
            path: dir.join(name),
            detail: format!("manifest shape {got:?}, expected {expect:?}"),
        });
    }
    Ok(())
}

fn f32_values(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect()
}

/// Read the sequence stored in `dir`.
pub fn read_sequence(dir: &Path) -> Result<PoseSequence> {
    let mpath = dir.join(MANIFEST);
    let manifest: Manifest =
        serde_json::from_slice(&read_file(&mpath)?).map_err(|e| Error::format(&mpath, e.to_string()))?;
    if manifest.format != FORMAT || manifest.version != VERSION {
        return Err(Error::format(
            &mpath,
            format!("unsupported format {} v{}", manifest.format, manifest.version),
        ));
    }
    let (f, j) = (manifest.frames, manifest.joints);
    check_shape(dir, &manifest, POSES_3D, &[f, j, 3])?;
    check_shape(dir, &manifest, POSES_2D, &[f, j, 2])?;
    check_shape(dir, &manifest, VISIBILITY, &[f, j])?;
    let joints_3d = f32_values(&read_checked(dir, &manifest, POSES_3D, 4)?);
    let joints_2d = f32_values(&read_checked(dir, &manifest, POSES_2D, 4)?);
    let visibility = read_checked(dir, &manifest, VISIBILITY, 1)?;
    let cpath = dir.join(CAMERA);
    let camera: Camera = serde_json::from_slice(&read_checked(dir, &manifest, CAMERA, 0)?)
        .map_err(|e| Error::format(&cpath, e.to_string()))?;
    let seq = PoseSequence {
        subject: manifest.subject,
        action: manifest.action,
        camera_id: manifest.camera_id,
        camera,
        frames: f,
        joints: j,
        joints_3d,
        joints_2d,
        visibility,
    };
    seq.validate().map_err(|e| Error::FileShape {
        path: dir.to_path_buf(),
        detail: e.to_string(),
    })?;
    Ok(seq)
}

/// Write every sequence under `root` in the subject/action/camera layout.
/// Coordinates must already be `f32`-representable for an exact round trip
/// (see [`quantize`]).
pub fn write_dataset(seqs: &[PoseSequence], root: &Path) -> Result<()> {
    for seq in seqs {
        write_sequence(seq, &sequence_dir(root, seq))?;
    }
    Ok(())
}

fn sorted_subdirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if entry.file_type().map_err(|e| Error::io(entry.path(), e))?.is_dir() {
            out.push(entry.path());
        }
    }
    out.sort();
    Ok(out)
}

/// Read every sequence under `root`, ordered by subject, action, camera.
/// A directory that is a single sequence (holds a manifest) is also
/// accepted.
pub fn read_dataset(root: &Path) -> Result<Vec<PoseSequence>> {
    if root.join(MANIFEST).is_file() {
        return Ok(vec![read_sequence(root)?]);
    }
    let mut out = Vec::new();
    for subject in sorted_subdirs(root)? {
        for action in sorted_subdirs(&subject)? {
            for cam in sorted_subdirs(&action)? {
                out.push(read_sequence(&cam)?);
            }
        }
    }
    if out.is_empty() {
        return Err(Error::MissingFile(root.join("<subject>/<action>/<camera>").join(MANIFEST)));
    }
    Ok(out)
}

/// Largest deviation between stored pixels and the reprojection of stored
/// camera-space joints, skipping joints at or behind the image plane.
pub fn reprojection_error(seq: &PoseSequence) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..seq.frames * seq.joints {
        let c = [seq.joints_3d[3 * i], seq.joints_3d[3 * i + 1], seq.joints_3d[3 * i + 2]];
        if let Ok(p) = seq.camera.project_camera_point(c) {
            worst = worst
                .max((quantize(p.pixel[0]) - seq.joints_2d[2 * i]).abs())
                .max((quantize(p.pixel[1]) - seq.joints_2d[2 * i + 1]).abs());
        }
    }
    worst
}
