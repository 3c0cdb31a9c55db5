//! Model checkpoints: a small self-describing binary format holding named
//! f64 tensors.
//!
//! Layout (all integers little-endian): magic `CHOIRCKPT`, `u32` format
//! version, `u32` entry count, then per entry a `u16` name length, the
//! UTF-8 name, a `u8` rank, `rank x u64` extents, and the row-major `f64`
//! values. Model checkpoints store the architecture as `meta.*` entries
//! next to the parameters, so a file fully determines the network.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::hypothesizer::HypothesizerConfig;
use crate::residual::{CharacteristicOrientationPredictor, KnnMode, PredictorConfig, ResidualConfig};
use crate::scalar::Scalar;
use crate::tensor::{numel, Tensor};
use crate::vnn::Aggregation;

pub const CKPT_MAGIC: &[u8; 9] = b"CHOIRCKPT";
pub const CKPT_VERSION: u32 = 1;

/// Write named tensors in checkpoint layout.
pub fn write_entries(path: &Path, entries: &[(String, Tensor<f64>)]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path.display().to_string(), e);
    w.write_all(CKPT_MAGIC).map_err(io_err)?;
    w.write_all(&CKPT_VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(entries.len() as u32).to_le_bytes())
        .map_err(io_err)?;
    for (name, t) in entries {
        if name.len() > u16::MAX as usize {
            return Err(Error::Checkpoint {
                message: format!("entry name too long ({} bytes)", name.len()),
            });
        }
        if t.shape.len() > u8::MAX as usize {
            return Err(Error::Checkpoint {
                message: format!("entry '{name}' rank {} too large", t.shape.len()),
            });
        }
        w.write_all(&(name.len() as u16).to_le_bytes())
            .map_err(io_err)?;
        w.write_all(name.as_bytes()).map_err(io_err)?;
        w.write_all(&[t.shape.len() as u8]).map_err(io_err)?;
        for &e in &t.shape {
            w.write_all(&(e as u64).to_le_bytes()).map_err(io_err)?;
        }
        for &v in &t.data {
            w.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

/// Read named tensors written by [`write_entries`].
pub fn read_entries(path: &Path) -> Result<Vec<(String, Tensor<f64>)>> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut r = BufReader::new(file);
    let pd = || path.display().to_string();
    let io_err = |e| Error::io(path.display().to_string(), e);
    let mut magic = [0u8; 9];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != CKPT_MAGIC {
        return Err(Error::Format {
            path: pd(),
            message: "not a model checkpoint (bad magic)".into(),
        });
    }
    let mut u32b = [0u8; 4];
    r.read_exact(&mut u32b).map_err(io_err)?;
    let version = u32::from_le_bytes(u32b);
    if version != CKPT_VERSION {
        return Err(Error::Checkpoint {
            message: format!(
                "checkpoint format version {version}, this build reads {CKPT_VERSION}"
            ),
        });
    }
    r.read_exact(&mut u32b).map_err(io_err)?;
    let count = u32::from_le_bytes(u32b) as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let mut u16b = [0u8; 2];
        r.read_exact(&mut u16b).map_err(io_err)?;
        let name_len = u16::from_le_bytes(u16b) as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name).map_err(io_err)?;
        let name = String::from_utf8(name).map_err(|_| Error::Format {
            path: pd(),
            message: "entry name is not UTF-8".into(),
        })?;
        let mut rank = [0u8; 1];
        r.read_exact(&mut rank).map_err(io_err)?;
        let mut shape = Vec::with_capacity(rank[0] as usize);
        for _ in 0..rank[0] {
            let mut u64b = [0u8; 8];
            r.read_exact(&mut u64b).map_err(io_err)?;
            shape.push(u64::from_le_bytes(u64b) as usize);
        }
        let n = numel(&shape);
        if n > (1 << 32) {
            return Err(Error::Format {
                path: pd(),
                message: format!("entry '{name}' has implausible size {n}"),
            });
        }
        let mut buf = vec![0u8; n * 8];
        r.read_exact(&mut buf).map_err(io_err)?;
        let data: Vec<f64> = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let tensor = Tensor::new(shape, data).map_err(|e| Error::Format {
            path: pd(),
            message: format!("entry '{name}': {e}"),
        })?;
        entries.push((name, tensor));
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(io_err)? != 0 {
        return Err(Error::Format {
            path: pd(),
            message: "trailing bytes after final entry".into(),
        });
    }
    Ok(entries)
}

fn meta_scalar(v: f64) -> Tensor<f64> {
    Tensor::scalar(v)
}

fn read_meta_scalar(entries: &[(String, Tensor<f64>)], name: &str) -> Result<f64> {
    entries
        .iter()
        .find(|(n, _)| n == name)
        .and_then(|(_, t)| if t.numel() == 1 { Some(t.data[0]) } else { None })
        .ok_or_else(|| Error::Checkpoint {
            message: format!("missing or malformed metadata entry '{name}'"),
        })
}

/// Save a model (architecture + parameters) to `path`.
pub fn save_model<S: Scalar>(
    path: &Path,
    model: &CharacteristicOrientationPredictor<S>,
) -> Result<()> {
    let cfg = model.config();
    let mut entries: Vec<(String, Tensor<f64>)> = Vec::new();
    let widths: Vec<f64> = cfg.hypothesizer.widths.iter().map(|&w| w as f64).collect();
    entries.push((
        "meta.widths".into(),
        Tensor::new(vec![widths.len()], widths)?,
    ));
    entries.push(("meta.k".into(), meta_scalar(cfg.hypothesizer.k as f64)));
    entries.push((
        "meta.aggregation".into(),
        meta_scalar(match cfg.hypothesizer.aggregation {
            Aggregation::Mean => 0.0,
            Aggregation::Max => 1.0,
        }),
    ));
    entries.push(("meta.hidden".into(), meta_scalar(cfg.residual.hidden as f64)));
    entries.push(("meta.blocks".into(), meta_scalar(cfg.residual.blocks as f64)));
    entries.push(("meta.k_att".into(), meta_scalar(cfg.residual.k_att as f64)));
    entries.push((
        "meta.pos_hidden".into(),
        meta_scalar(cfg.residual.pos_hidden as f64),
    ));
    entries.push((
        "meta.knn_mode".into(),
        meta_scalar(match cfg.knn_mode {
            KnnMode::Adaptive => 0.0,
            KnnMode::Frozen => 1.0,
        }),
    ));
    entries.push((
        "meta.use_residual".into(),
        meta_scalar(if cfg.use_residual { 1.0 } else { 0.0 }),
    ));
    for (name, t) in model.params.iter() {
        entries.push((name.to_string(), t.cast()));
    }
    write_entries(path, &entries)
}

/// Load a model saved by [`save_model`]. The parameter set in the file
/// must exactly match the architecture the metadata describes.
pub fn load_model<S: Scalar>(path: &Path) -> Result<CharacteristicOrientationPredictor<S>> {
    let entries = read_entries(path)?;
    let widths_t = entries
        .iter()
        .find(|(n, _)| n == "meta.widths")
        .ok_or_else(|| Error::Checkpoint {
            message: "missing metadata entry 'meta.widths'".into(),
        })?;
    let widths: Vec<usize> = widths_t.1.data.iter().map(|&v| v as usize).collect();
    let aggregation = match read_meta_scalar(&entries, "meta.aggregation")? as i64 {
        0 => Aggregation::Mean,
        1 => Aggregation::Max,
        other => {
            return Err(Error::Checkpoint {
                message: format!("unknown aggregation code {other}"),
            })
        }
    };
    let knn_mode = match read_meta_scalar(&entries, "meta.knn_mode")? as i64 {
        0 => KnnMode::Adaptive,
        1 => KnnMode::Frozen,
        other => {
            return Err(Error::Checkpoint {
                message: format!("unknown knn mode code {other}"),
            })
        }
    };
    let config = PredictorConfig {
        hypothesizer: HypothesizerConfig {
            widths,
            k: read_meta_scalar(&entries, "meta.k")? as usize,
            aggregation,
        },
        residual: ResidualConfig {
            hidden: read_meta_scalar(&entries, "meta.hidden")? as usize,
            blocks: read_meta_scalar(&entries, "meta.blocks")? as usize,
            k_att: read_meta_scalar(&entries, "meta.k_att")? as usize,
            pos_hidden: read_meta_scalar(&entries, "meta.pos_hidden")? as usize,
        },
        knn_mode,
        use_residual: read_meta_scalar(&entries, "meta.use_residual")? != 0.0,
    };
    let mut model = CharacteristicOrientationPredictor::<S>::new(config, 0)?;
    let mut seen = std::collections::BTreeSet::new();
    for (name, t) in &entries {
        if name.starts_with("meta.") {
            continue;
        }
        let param = model.params.get_mut(name).ok_or_else(|| Error::Checkpoint {
            message: format!("file has parameter '{name}' the architecture does not"),
        })?;
        if param.shape != t.shape {
            return Err(Error::Checkpoint {
                message: format!(
                    "parameter '{name}' has shape {:?} in the file but the architecture \
                     expects {:?}",
                    t.shape, param.shape
                ),
            });
        }
        *param = {
            let mut cast: Tensor<S> = t.cast();
            cast.requires_grad = true;
            cast
        };
        seen.insert(name.clone());
    }
    let missing: Vec<&str> = model
        .params
        .iter()
        .map(|(n, _)| n)
        .filter(|n| !seen.contains(*n))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Checkpoint {
            message: format!("file is missing parameters: {}", missing.join(", ")),
        });
    }
    Ok(model)
}
