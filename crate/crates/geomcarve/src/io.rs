//! Sequence directory format: a JSON manifest plus raw binary tensors.
//!
//! A sequence directory holds `manifest.json` and one file per tensor. The
//! manifest (format version "1") lists image size, frame count, tensor
//! entries `{name, dtype, shape, file}`, and per-frame cameras. Tensors are
//! raw little-endian IEEE-754 binary32 in row-major order — masks are one
//! byte per element, 0 or 1 — so any language can parse them without a
//! container library. Writing is deterministic: identical samples produce
//! byte-identical directories. Values are stored at 32-bit precision and
//! widened to f64 on read; cameras live in the manifest at full precision.

use serde::Deserialize;
use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::camera::CameraParams;
use crate::error::{Error, Result};
use crate::grid::{ScalarGrid, ValidMask, VecGrid};
use crate::json::JsonValue;
use crate::sample::{FrameSample, SequenceSample};

/// File name of the manifest inside a sequence directory.
pub const MANIFEST_NAME: &str = "manifest.json";
const FORMAT_VERSION: &str = "1";

#[derive(Deserialize)]
struct ManifestDoc {
    version: String,
    frames: usize,
    width: usize,
    height: usize,
    tensors: Vec<TensorEntry>,
    cameras: Vec<CameraEntry>,
}

#[derive(Deserialize)]
struct TensorEntry {
    name: String,
    dtype: String,
    shape: Vec<usize>,
    file: String,
}

#[derive(Deserialize)]
struct CameraEntry {
    quaternion: [f64; 4],
    translation: [f64; 3],
    fov: [f64; 2],
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.display().to_string(), source }
}

fn manifest_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Manifest { path: path.display().to_string(), reason: reason.into() }
}

/// Writes `sample` into `dir`, creating it if needed. A directory that
/// already holds a manifest is only overwritten when `force` is set.
pub fn write_sequence(sample: &SequenceSample, dir: &Path, force: bool) -> Result<()> {
    let manifest_path = dir.join(MANIFEST_NAME);
    if manifest_path.exists() && !force {
        return Err(Error::RefusingOverwrite { path: manifest_path.display().to_string() });
    }
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;

    let first = &sample.frames()[0];
    let (height, width) = (first.depth.height, first.depth.width);

    let mut tensors = Vec::new();
    let mut cameras = Vec::new();
    for (t, frame) in sample.frames().iter().enumerate() {
        let emit_f32 = |tensors: &mut Vec<JsonValue>,
                            name: String,
                            shape: Vec<usize>,
                            values: &[f64]|
         -> Result<()> {
            let file = format!("{name}.bin");
            write_f32_tensor(&dir.join(&file), values)?;
            tensors.push(tensor_entry(name, "f32", shape, file));
            Ok(())
        };
        emit_f32(&mut tensors, format!("depth_{t:03}"), vec![height, width], &frame.depth.values)?;
        emit_f32(
            &mut tensors,
            format!("points_{t:03}"),
            vec![height, width, 3],
            &frame.points.values,
        )?;

        let mask_name = format!("mask_{t:03}");
        let mask_file = format!("{mask_name}.bin");
        let bytes: Vec<u8> = frame.mask.flags.iter().map(|&f| f as u8).collect();
        fs::write(dir.join(&mask_file), &bytes).map_err(|e| io_err(&dir.join(&mask_file), e))?;
        tensors.push(tensor_entry(mask_name, "u8", vec![height, width], mask_file));

        if let Some(conf) = &frame.conf_depth {
            emit_f32(&mut tensors, format!("conf_depth_{t:03}"), vec![height, width], &conf.values)?;
        }
        if let Some(conf) = &frame.conf_point {
            emit_f32(&mut tensors, format!("conf_point_{t:03}"), vec![height, width], &conf.values)?;
        }

        cameras.push(JsonValue::object([
            ("quaternion", frame.camera.quaternion.iter().copied().collect::<JsonValue>()),
            ("translation", frame.camera.translation.iter().copied().collect()),
            ("fov", frame.camera.fov.iter().copied().collect()),
        ]));
    }

    let manifest = JsonValue::object([
        ("version", JsonValue::from(FORMAT_VERSION)),
        ("frames", JsonValue::from(sample.len())),
        ("width", JsonValue::from(width)),
        ("height", JsonValue::from(height)),
        ("tensors", JsonValue::Array(tensors)),
        ("cameras", JsonValue::Array(cameras)),
    ]);
    let mut text = manifest.to_pretty();
    text.push('\n');
    fs::write(&manifest_path, text).map_err(|e| io_err(&manifest_path, e))
}

fn tensor_entry(name: String, dtype: &str, shape: Vec<usize>, file: String) -> JsonValue {
    JsonValue::object([
        ("name", JsonValue::Str(name)),
        ("dtype", JsonValue::from(dtype)),
        ("shape", shape.into_iter().collect()),
        ("file", JsonValue::Str(file)),
    ])
}

fn write_f32_tensor(path: &Path, values: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

/// Reads a sequence directory written by [`write_sequence`] (or a compatible
/// producer), widening 32-bit storage back to f64. Errors name the offending
/// file; a manifest with any version other than "1" is rejected.
pub fn read_sequence(dir: &Path) -> Result<SequenceSample> {
    let manifest_path = dir.join(MANIFEST_NAME);
    let text = fs::read_to_string(&manifest_path)
        .map_err(|e| manifest_err(&manifest_path, e.to_string()))?;
    let doc: ManifestDoc = serde_json::from_str(&text)
        .map_err(|e| manifest_err(&manifest_path, format!("invalid JSON: {e}")))?;

    if doc.version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion { found: doc.version });
    }
    if doc.frames == 0 {
        return Err(manifest_err(&manifest_path, "frame count is zero"));
    }
    if doc.cameras.len() != doc.frames {
        return Err(manifest_err(
            &manifest_path,
            format!("{} camera entries for {} frames", doc.cameras.len(), doc.frames),
        ));
    }

    let mut by_name: HashMap<&str, &TensorEntry> = HashMap::new();
    for entry in &doc.tensors {
        if by_name.insert(entry.name.as_str(), entry).is_some() {
            return Err(manifest_err(
                &manifest_path,
                format!("duplicate tensor name '{}'", entry.name),
            ));
        }
    }
    let lookup = |name: &str, dtype: &str, shape: &[usize]| -> Result<&TensorEntry> {
        let entry = by_name.get(name).copied().ok_or_else(|| {
            manifest_err(&manifest_path, format!("missing tensor entry '{name}'"))
        })?;
        if entry.dtype != dtype {
            return Err(manifest_err(
                &manifest_path,
                format!("tensor '{name}' has dtype '{}', expected '{dtype}'", entry.dtype),
            ));
        }
        if entry.shape != shape {
            return Err(manifest_err(
                &manifest_path,
                format!(
                    "tensor '{name}' has shape {:?}, expected {shape:?}",
                    entry.shape
                ),
            ));
        }
        Ok(entry)
    };

    let (h, w) = (doc.height, doc.width);
    let mut frames = Vec::with_capacity(doc.frames);
    for t in 0..doc.frames {
        let depth_entry = lookup(&format!("depth_{t:03}"), "f32", &[h, w])?;
        let points_entry = lookup(&format!("points_{t:03}"), "f32", &[h, w, 3])?;
        let mask_entry = lookup(&format!("mask_{t:03}"), "u8", &[h, w])?;

        let depth = ScalarGrid::new(h, w, read_f32_tensor(&dir.join(&depth_entry.file), h * w)?)?;
        let points =
            VecGrid::new(h, w, 3, read_f32_tensor(&dir.join(&points_entry.file), h * w * 3)?)?;
        let mask = read_mask(&dir.join(&mask_entry.file), h, w)?;

        let conf = |prefix: &str| -> Result<Option<ScalarGrid>> {
            let name = format!("{prefix}_{t:03}");
            if !by_name.contains_key(name.as_str()) {
                return Ok(None);
            }
            let entry = lookup(&name, "f32", &[h, w])?;
            let values = read_f32_tensor(&dir.join(&entry.file), h * w)?;
            Ok(Some(ScalarGrid::new(h, w, values)?))
        };
        let conf_depth = conf("conf_depth")?;
        let conf_point = conf("conf_point")?;

        let cam = &doc.cameras[t];
        let camera = CameraParams::new(cam.quaternion, cam.translation, cam.fov)
            .map_err(|e| manifest_err(&manifest_path, format!("camera {t}: {e}")))?;

        frames.push(FrameSample { depth, points, mask, camera, conf_depth, conf_point });
    }
    SequenceSample::new(frames)
}

fn read_f32_tensor(path: &Path, count: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.len() != count * 4 {
        return Err(Error::TensorFile {
            path: path.display().to_string(),
            reason: format!(
                "expected {} bytes ({count} f32 values), found {}",
                count * 4,
                bytes.len()
            ),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

fn read_mask(path: &Path, height: usize, width: usize) -> Result<ValidMask> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.len() != height * width {
        return Err(Error::TensorFile {
            path: path.display().to_string(),
            reason: format!("expected {} mask bytes, found {}", height * width, bytes.len()),
        });
    }
    let mut flags = Vec::with_capacity(bytes.len());
    for (i, b) in bytes.iter().enumerate() {
        match b {
            0 => flags.push(false),
            1 => flags.push(true),
            other => {
                return Err(Error::TensorFile {
                    path: path.display().to_string(),
                    reason: format!("mask byte {other} at index {i} (must be 0 or 1)"),
                })
            }
        }
    }
    ValidMask::new(height, width, flags)
}
