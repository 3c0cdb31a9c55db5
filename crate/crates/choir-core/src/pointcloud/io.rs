//! Point-cloud file formats and the corpus manifest.
//!
//! xyz-text: one point per line, three reals separated by whitespace,
//! '#'-prefixed comment lines allowed anywhere. choir-binary (".cpts"):
//! magic "CHOIRPTS", version u32, point count u64, then 3N little-endian
//! f64 coordinates; round trips are bit-exact.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{Dataset, PointCloud};

pub const BINARY_MAGIC: &[u8; 8] = b"CHOIRPTS";
pub const BINARY_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    XyzText,
    ChoirBinary,
}

impl CloudFormat {
    pub fn extension(self) -> &'static str {
        match self {
            CloudFormat::XyzText => "xyz",
            CloudFormat::ChoirBinary => "cpts",
        }
    }

    /// Infer the format from a file extension.
    pub fn for_path(path: &Path) -> Result<CloudFormat> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("xyz") => Ok(CloudFormat::XyzText),
            Some("cpts") => Ok(CloudFormat::ChoirBinary),
            other => Err(Error::Format {
                path: path.display().to_string(),
                message: format!(
                    "unknown point-cloud extension {:?} (expected .xyz or .cpts)",
                    other.unwrap_or("")
                ),
            }),
        }
    }
}

/// Load a cloud. The result is NOT auto-centered. Identity defaults to the
/// file stem unless the file carries id comments (xyz) written by `save`.
pub fn load<S: Scalar>(path: &Path, format: CloudFormat) -> Result<PointCloud<S>> {
    match format {
        CloudFormat::XyzText => load_xyz(path),
        CloudFormat::ChoirBinary => load_binary(path),
    }
}

pub fn save<S: Scalar>(path: &Path, pc: &PointCloud<S>, format: CloudFormat) -> Result<()> {
    match format {
        CloudFormat::XyzText => save_xyz(path, pc),
        CloudFormat::ChoirBinary => save_binary(path, pc),
    }
}

fn stem_id(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("unknown")
        .to_string()
}

pub fn load_xyz<S: Scalar>(path: &Path) -> Result<PointCloud<S>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut points = Vec::new();
    let mut class_id = String::from("unknown");
    let mut instance_id = stem_id(path);
    for (lineno, line) in text.lines().enumerate() {
        let line_number = lineno + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            if let Some((k, v)) = comment.split_once('=') {
                match k.trim() {
                    "class_id" => class_id = v.trim().to_string(),
                    "instance_id" => instance_id = v.trim().to_string(),
                    _ => {}
                }
            }
            continue;
        }
        let tokens: Vec<&str> = trimmed.split_whitespace().collect();
        if tokens.len() != 3 {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: line_number,
                message: format!("expected 3 coordinates, found {} tokens", tokens.len()),
            });
        }
        let mut p = [S::zero(); 3];
        for (d, tok) in tokens.iter().enumerate() {
            let v: f64 = tok.parse().map_err(|_| Error::Parse {
                path: path.display().to_string(),
                line: line_number,
                message: format!("non-numeric coordinate '{tok}'"),
            })?;
            p[d] = S::fl(v);
        }
        points.push(p);
    }
    Ok(PointCloud {
        points,
        class_id,
        instance_id,
    })
}

pub fn save_xyz<S: Scalar>(path: &Path, pc: &PointCloud<S>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path.display().to_string(), e);
    writeln!(w, "# class_id = {}", pc.class_id).map_err(io_err)?;
    writeln!(w, "# instance_id = {}", pc.instance_id).map_err(io_err)?;
    for p in &pc.points {
        writeln!(w, "{} {} {}", p[0].as_f64(), p[1].as_f64(), p[2].as_f64()).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn load_binary<S: Scalar>(path: &Path) -> Result<PointCloud<S>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let fmt_err = |message: String| Error::Format {
        path: path.display().to_string(),
        message,
    };
    if bytes.len() < 20 || &bytes[..8] != BINARY_MAGIC {
        return Err(fmt_err("missing CHOIRPTS magic".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != BINARY_VERSION {
        return Err(fmt_err(format!(
            "format version {version}, this build reads {BINARY_VERSION}"
        )));
    }
    let n = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let expected = 20 + n * 24;
    if bytes.len() != expected {
        return Err(fmt_err(format!(
            "expected {expected} bytes for {n} points, found {}",
            bytes.len()
        )));
    }
    let mut points = Vec::with_capacity(n);
    for i in 0..n {
        let mut p = [S::zero(); 3];
        for d in 0..3 {
            let off = 20 + (i * 3 + d) * 8;
            let v = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
            p[d] = S::fl(v);
        }
        points.push(p);
    }
    Ok(PointCloud {
        points,
        class_id: String::from("unknown"),
        instance_id: stem_id(path),
    })
}

pub fn save_binary<S: Scalar>(path: &Path, pc: &PointCloud<S>) -> Result<()> {
    let mut bytes = Vec::with_capacity(20 + pc.points.len() * 24);
    bytes.extend_from_slice(BINARY_MAGIC);
    bytes.extend_from_slice(&BINARY_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(pc.points.len() as u64).to_le_bytes());
    for p in &pc.points {
        for d in 0..3 {
            bytes.extend_from_slice(&p[d].as_f64().to_le_bytes());
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
}

/// One corpus instance on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: String,
    pub class_id: String,
    pub instance_id: String,
}

pub const MANIFEST_HEADER: &str = "path,class_id,instance_id";

pub fn save_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut text = String::from(MANIFEST_HEADER);
    text.push('\n');
    for e in entries {
        text.push_str(&format!("{},{},{}\n", e.path, e.class_id, e.instance_id));
    }
    fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == MANIFEST_HEADER => {}
        _ => {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: 1,
                message: format!("expected header '{MANIFEST_HEADER}'"),
            })
        }
    }
    let mut entries = Vec::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                message: format!("expected 3 comma-separated fields, found {}", fields.len()),
            });
        }
        entries.push(ManifestEntry {
            path: fields[0].trim().to_string(),
            class_id: fields[1].trim().to_string(),
            instance_id: fields[2].trim().to_string(),
        });
    }
    Ok(entries)
}

/// Load every instance listed in a manifest (paths resolved relative to
/// the manifest's directory). Clouds are centered on load.
pub fn load_dataset<S: Scalar>(manifest_path: &Path) -> Result<Dataset<S>> {
    let entries = load_manifest(manifest_path)?;
    let base = manifest_path.parent().map(PathBuf::from).unwrap_or_default();
    let mut instances = Vec::with_capacity(entries.len());
    for e in &entries {
        let path = base.join(&e.path);
        let format = CloudFormat::for_path(&path)?;
        let mut pc: PointCloud<S> = load(&path, format)?;
        pc.class_id = e.class_id.clone();
        pc.instance_id = e.instance_id.clone();
        instances.push(pc.center());
    }
    Ok(Dataset::new(instances))
}
