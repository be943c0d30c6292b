//! Artifact file formats.
//!
//! All binary artifacts are little-endian and self-identifying by magic
//! bytes: `SIGS` (datasets), `CSMD` (models), `CSHD` (shields). Writers go
//! through a temp-file-and-rename so a failed run never leaves a truncated
//! primary output.

pub mod model;
pub mod report;
pub mod shieldfile;
pub mod sigset;
pub mod svg;

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Write `bytes` to `path` atomically (temp file in the same directory,
/// then rename).
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("artifact")
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Read a file's magic and render its header as human-readable text.
pub fn inspect(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    if bytes.len() < 4 {
        return Err(Error::Format(format!("{} is too short to carry a magic", path.display())));
    }
    match &bytes[..4] {
        b"SIGS" => sigset::describe(&bytes),
        b"CSMD" => model::describe(&bytes),
        b"CSHD" => shieldfile::describe(&bytes),
        other => Err(Error::Format(format!(
            "unknown magic {:?} in {}",
            String::from_utf8_lossy(other),
            path.display()
        ))),
    }
}

pub(crate) fn read_exact<'a>(bytes: &'a [u8], pos: &mut usize, n: usize, what: &str) -> Result<&'a [u8]> {
    if *pos + n > bytes.len() {
        return Err(Error::Format(format!("truncated file while reading {what}")));
    }
    let slice = &bytes[*pos..*pos + n];
    *pos += n;
    Ok(slice)
}

pub(crate) fn read_u16(bytes: &[u8], pos: &mut usize, what: &str) -> Result<u16> {
    let s = read_exact(bytes, pos, 2, what)?;
    Ok(u16::from_le_bytes([s[0], s[1]]))
}

pub(crate) fn read_u32(bytes: &[u8], pos: &mut usize, what: &str) -> Result<u32> {
    let s = read_exact(bytes, pos, 4, what)?;
    Ok(u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
}

pub(crate) fn read_u64(bytes: &[u8], pos: &mut usize, what: &str) -> Result<u64> {
    let s = read_exact(bytes, pos, 8, what)?;
    Ok(u64::from_le_bytes(s.try_into().expect("8 bytes")))
}

pub(crate) fn read_f32(bytes: &[u8], pos: &mut usize, what: &str) -> Result<f32> {
    let s = read_exact(bytes, pos, 4, what)?;
    Ok(f32::from_le_bytes([s[0], s[1], s[2], s[3]]))
}

pub(crate) fn read_f64(bytes: &[u8], pos: &mut usize, what: &str) -> Result<f64> {
    let s = read_exact(bytes, pos, 8, what)?;
    Ok(f64::from_le_bytes(s.try_into().expect("8 bytes")))
}

/// Length-prefixed UTF-8 string (u16 length).
pub(crate) fn read_string(bytes: &[u8], pos: &mut usize, what: &str) -> Result<String> {
    let len = read_u16(bytes, pos, what)? as usize;
    let s = read_exact(bytes, pos, len, what)?;
    String::from_utf8(s.to_vec()).map_err(|_| Error::Format(format!("invalid UTF-8 in {what}")))
}

pub(crate) fn write_string(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u16).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}
