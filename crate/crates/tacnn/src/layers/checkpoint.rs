//! Binary checkpoint container.
//!
//! Layout: magic `TACN`, format version (u32 LE), length-prefixed UTF-8
//! architecture descriptor, then every parameter block in spec order as
//! little-endian f32. The file length must match the descriptor exactly;
//! truncated or padded files are rejected.

use super::model::{Model, ModelSpec};
use crate::error::{Error, Result};
use crate::precision::Real;
use std::fs;
use std::path::Path;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"TACN";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn save_checkpoint<T: Real>(model: &Model<T>, path: &Path) -> Result<()> {
    let descriptor = model.spec().descriptor();
    let mut bytes = Vec::new();
    bytes.extend_from_slice(&CHECKPOINT_MAGIC);
    bytes.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(descriptor.len() as u32).to_le_bytes());
    bytes.extend_from_slice(descriptor.as_bytes());
    for block in model.param_blocks() {
        for v in block {
            bytes.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    let tmp = path.with_extension("ckpt.part");
    fs::write(&tmp, &bytes).map_err(|e| Error::io(tmp.display().to_string(), e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

struct Header {
    spec: ModelSpec,
    param_offset: usize,
}

fn parse_header(bytes: &[u8], path: &Path) -> Result<Header> {
    let ctx = path.display();
    if bytes.len() < 12 {
        return Err(Error::Checkpoint {
            message: format!("{ctx}: file too short for header ({} bytes)", bytes.len()),
        });
    }
    if bytes[0..4] != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint {
            message: format!("{ctx}: bad magic {:02x?}, expected {CHECKPOINT_MAGIC:02x?}", &bytes[0..4]),
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint {
            message: format!("{ctx}: unsupported version {version}, expected {CHECKPOINT_VERSION}"),
        });
    }
    let desc_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if bytes.len() < 12 + desc_len {
        return Err(Error::Checkpoint {
            message: format!("{ctx}: truncated descriptor (need {desc_len} bytes)"),
        });
    }
    let descriptor = std::str::from_utf8(&bytes[12..12 + desc_len]).map_err(|_| Error::Checkpoint {
        message: format!("{ctx}: descriptor is not valid UTF-8"),
    })?;
    let spec = ModelSpec::parse_descriptor(descriptor)?;
    Ok(Header {
        spec,
        param_offset: 12 + desc_len,
    })
}

/// Architecture stored in a checkpoint, without loading parameters.
pub fn read_checkpoint_spec(path: &Path) -> Result<ModelSpec> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(parse_header(&bytes, path)?.spec)
}

pub fn load_checkpoint<T: Real>(path: &Path) -> Result<Model<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let header = parse_header(&bytes, path)?;
    let mut model = Model::<T>::zeros(header.spec)?;
    let expected = model.param_count() * 4;
    let payload = &bytes[header.param_offset..];
    if payload.len() != expected {
        return Err(Error::Checkpoint {
            message: format!(
                "{}: parameter payload is {} bytes, expected {expected}",
                path.display(),
                payload.len()
            ),
        });
    }
    let mut cursor = 0usize;
    for block in model.param_blocks_mut() {
        for v in block.iter_mut() {
            let raw = f32::from_le_bytes(payload[cursor..cursor + 4].try_into().unwrap());
            if !raw.is_finite() {
                return Err(Error::Checkpoint {
                    message: format!("{}: non-finite parameter at byte {cursor}", path.display()),
                });
            }
            *v = T::from_f64(f64::from(raw));
            cursor += 4;
        }
    }
    Ok(model)
}
