//! SIGSET dataset files.
//!
//! Layout (little-endian):
//!   magic "SIGS", version u16 = 1, L u16, frame count u32, label count u16,
//!   label-name table (u16 length-prefixed UTF-8 each), then per frame:
//!   label u16 (0xFFFF = unlabeled), snr f32, segment_id u32, slice_index
//!   u16, split tag u8 (0 train / 1 cal / 2 test), 2·L f32 samples (I row
//!   then Q row).
//!
//! The sidecar accompanying adversarial SIGSETs is plain text, one
//! key=value record line per frame.

use std::path::Path;

use crate::attacks::AttackRecord;
use crate::error::{Error, Result};
use crate::labels::ModulationLabel;
use crate::signal::{Dataset, IqFrame, SplitTag};

use super::{atomic_write, read_exact, read_f32, read_string, read_u16, read_u32, write_string};

const MAGIC: &[u8; 4] = b"SIGS";
const VERSION: u16 = 1;
const NO_LABEL: u16 = 0xFFFF;

pub fn to_bytes(dataset: &Dataset) -> Result<Vec<u8>> {
    dataset.validate()?;
    if dataset.frame_len > u16::MAX as usize {
        return Err(Error::Format(format!("frame_len {} exceeds u16", dataset.frame_len)));
    }
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(dataset.frame_len as u16).to_le_bytes());
    out.extend_from_slice(&(dataset.frames.len() as u32).to_le_bytes());
    out.extend_from_slice(&(dataset.label_names.len() as u16).to_le_bytes());
    for name in &dataset.label_names {
        write_string(&mut out, name);
    }
    for frame in &dataset.frames {
        let label = frame.label.map(|l| l.code() as u16).unwrap_or(NO_LABEL);
        out.extend_from_slice(&label.to_le_bytes());
        out.extend_from_slice(&(frame.snr_db as f32).to_le_bytes());
        out.extend_from_slice(&frame.segment_id.to_le_bytes());
        out.extend_from_slice(&frame.slice_index.to_le_bytes());
        out.push(frame.split.code());
        for &v in &frame.samples {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<Dataset> {
    let mut pos = 0usize;
    let magic = read_exact(bytes, &mut pos, 4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Format(format!(
            "bad SIGSET magic {:?}",
            String::from_utf8_lossy(magic)
        )));
    }
    let version = read_u16(bytes, &mut pos, "version")?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported SIGSET version {version}")));
    }
    let frame_len = read_u16(bytes, &mut pos, "frame length")? as usize;
    let n_frames = read_u32(bytes, &mut pos, "frame count")? as usize;
    let n_labels = read_u16(bytes, &mut pos, "label count")? as usize;
    let mut label_names = Vec::with_capacity(n_labels);
    for _ in 0..n_labels {
        label_names.push(read_string(bytes, &mut pos, "label name")?);
    }
    let mut frames = Vec::with_capacity(n_frames);
    for _ in 0..n_frames {
        let label_code = read_u16(bytes, &mut pos, "frame label")?;
        let label = if label_code == NO_LABEL {
            None
        } else {
            Some(ModulationLabel::from_code(label_code as usize)?)
        };
        let snr_db = read_f32(bytes, &mut pos, "snr")? as f64;
        let segment_id = read_u32(bytes, &mut pos, "segment id")?;
        let slice_index = read_u16(bytes, &mut pos, "slice index")?;
        let split = SplitTag::from_code(read_exact(bytes, &mut pos, 1, "split tag")?[0])?;
        let mut samples = Vec::with_capacity(2 * frame_len);
        for _ in 0..2 * frame_len {
            samples.push(read_f32(bytes, &mut pos, "samples")? as f64);
        }
        frames.push(IqFrame { samples, frame_len, snr_db, label, segment_id, slice_index, split });
    }
    if pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes in SIGSET", bytes.len() - pos)));
    }
    let dataset = Dataset { frames, label_names, frame_len, seed: 0 };
    dataset.validate()?;
    Ok(dataset)
}

pub fn write(dataset: &Dataset, path: &Path) -> Result<()> {
    atomic_write(path, &to_bytes(dataset)?)
}

pub fn read(path: &Path) -> Result<Dataset> {
    from_bytes(&std::fs::read(path)?)
}

/// Header summary for `inspect`.
pub fn describe(bytes: &[u8]) -> Result<String> {
    let ds = from_bytes(bytes)?;
    let mut counts = [0usize; 3];
    for f in &ds.frames {
        counts[f.split.code() as usize] += 1;
    }
    let n_segments = {
        let mut ids: Vec<u32> = ds.frames.iter().map(|f| f.segment_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    };
    Ok(format!(
        "SIGSET v{VERSION}\nframe_len: {}\nframes: {}\nsegments: {}\nlabels: {}\nsplit: train={} cal={} test={}\n",
        ds.frame_len,
        ds.frames.len(),
        n_segments,
        ds.label_names.join(","),
        counts[0],
        counts[1],
        counts[2],
    ))
}

/// Render the attack sidecar: one `key=value` record line per frame.
pub fn sidecar_text(records: &[AttackRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let method = r.method.map(|m| m.name()).unwrap_or("clean");
        let achieved = if r.achieved_psr_db.is_nan() {
            "skipped".to_string()
        } else {
            format!("{:.6}", r.achieved_psr_db)
        };
        out.push_str(&format!(
            "frame={} segment={} slice={} method={} target_psr_db={:.6} achieved_psr_db={} seed={} skipped={}\n",
            r.frame_index, r.segment_id, r.slice_index, method, r.target_psr_db, achieved, r.seed, r.skipped
        ));
    }
    out
}

pub fn write_sidecar(records: &[AttackRecord], path: &Path) -> Result<()> {
    atomic_write(path, sidecar_text(records).as_bytes())
}
