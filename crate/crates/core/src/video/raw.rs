//! Planar RGB8 raw files with a TOML sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Pixels, VideoBuffer};
use crate::error::{Error, Result};

/// The only pixel format understood by the raw reader.
pub const RAW_FORMAT: &str = "rgb8-planar";

/// Dimensions and format of a raw file, stored next to it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSidecar {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub format: String,
}

impl RawSidecar {
    pub fn for_video(v: &VideoBuffer) -> Self {
        RawSidecar { width: v.width(), height: v.height(), frames: v.frames(), format: RAW_FORMAT.into() }
    }
}

/// `clip.rgb` -> `clip.rgb.toml`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".toml");
    PathBuf::from(s)
}

/// Frame-major planar bytes; floats are clamped and rounded to 8 bits.
pub fn encode_raw(v: &VideoBuffer) -> Vec<u8> {
    match v.to_u8().pixels {
        Pixels::U8(b) => b,
        Pixels::F32(_) => unreachable!("to_u8 returns bytes"),
    }
}

pub fn decode_raw(bytes: &[u8], sidecar: &RawSidecar) -> Result<VideoBuffer> {
    if sidecar.format != RAW_FORMAT {
        return Err(Error::Format(format!("unsupported pixel format {:?}", sidecar.format)));
    }
    let expected = sidecar.frames * sidecar.height * sidecar.width * 3;
    if expected == 0 || bytes.len() != expected {
        return Err(Error::Format(format!(
            "sidecar declares {} x {} x {} RGB ({expected} bytes), file has {}",
            sidecar.frames,
            sidecar.height,
            sidecar.width,
            bytes.len()
        )));
    }
    VideoBuffer::new(sidecar.frames, sidecar.height, sidecar.width, Pixels::U8(bytes.to_vec()))
}

pub fn read_sidecar(path: &Path) -> Result<RawSidecar> {
    let sp = sidecar_path(path);
    let text = fs::read_to_string(&sp)?;
    toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", sp.display())))
}

/// Writes `path` and its sidecar.
pub fn save_raw(path: &Path, v: &VideoBuffer) -> Result<()> {
    fs::write(path, encode_raw(v))?;
    let side = toml::to_string(&RawSidecar::for_video(v)).expect("sidecar always serializes");
    fs::write(sidecar_path(path), side)?;
    Ok(())
}

pub fn load_raw(path: &Path) -> Result<VideoBuffer> {
    let sidecar = read_sidecar(path)?;
    let bytes = fs::read(path)?;
    decode_raw(&bytes, &sidecar)
}
