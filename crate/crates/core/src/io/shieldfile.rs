//! SHIELD calibration files.
//!
//! Layout (little-endian): magic "CSHD", version u16 = 1, K u16, alpha f64,
//! N u32, label table (u16 count + u16 length-prefixed UTF-8 names), then
//! per fold: an embedded MODEL payload followed by u32 count and that many
//! sorted f64 NCS values. A trailing provenance record (master seed u64 +
//! u16 length-prefixed digest string) follows the folds.

use std::path::Path;

use crate::conformal::{CalibrationFold, Provenance, ShieldModel};
use crate::error::{Error, Result};

use super::{atomic_write, model, read_exact, read_f64, read_string, read_u16, read_u32, read_u64, write_string};

const MAGIC: &[u8; 4] = b"CSHD";
const VERSION: u16 = 1;

pub fn to_bytes(shield: &ShieldModel) -> Result<Vec<u8>> {
    shield.validate()?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(shield.folds.len() as u16).to_le_bytes());
    out.extend_from_slice(&shield.alpha.to_le_bytes());
    out.extend_from_slice(&(shield.total_calibration as u32).to_le_bytes());
    out.extend_from_slice(&(shield.label_names.len() as u16).to_le_bytes());
    for name in &shield.label_names {
        write_string(&mut out, name);
    }
    for fold in &shield.folds {
        out.extend_from_slice(&model::to_bytes(&fold.params)?);
        out.extend_from_slice(&(fold.scores.len() as u32).to_le_bytes());
        for &s in &fold.scores {
            out.extend_from_slice(&s.to_le_bytes());
        }
    }
    out.extend_from_slice(&shield.provenance.master_seed.to_le_bytes());
    write_string(&mut out, &shield.provenance.config_digest);
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<ShieldModel> {
    let mut pos = 0usize;
    let magic = read_exact(bytes, &mut pos, 4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Format(format!(
            "bad SHIELD magic {:?}",
            String::from_utf8_lossy(magic)
        )));
    }
    let version = read_u16(bytes, &mut pos, "version")?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported SHIELD version {version}")));
    }
    let k = read_u16(bytes, &mut pos, "fold count")? as usize;
    let alpha = read_f64(bytes, &mut pos, "alpha")?;
    let total = read_u32(bytes, &mut pos, "calibration count")? as usize;
    let n_labels = read_u16(bytes, &mut pos, "label count")? as usize;
    let mut label_names = Vec::with_capacity(n_labels);
    for _ in 0..n_labels {
        label_names.push(read_string(bytes, &mut pos, "label name")?);
    }
    let mut folds = Vec::with_capacity(k);
    for index in 0..k {
        let params = model::parse(bytes, &mut pos)?;
        let n_scores = read_u32(bytes, &mut pos, "fold score count")? as usize;
        let mut scores = Vec::with_capacity(n_scores);
        for _ in 0..n_scores {
            scores.push(read_f64(bytes, &mut pos, "fold score")?);
        }
        if scores.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Format(format!("fold {index} scores are not sorted")));
        }
        folds.push(CalibrationFold { index, params, scores });
    }
    let master_seed = read_u64(bytes, &mut pos, "provenance seed")?;
    let config_digest = read_string(bytes, &mut pos, "provenance digest")?;
    if pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes in SHIELD", bytes.len() - pos)));
    }
    let shield = ShieldModel {
        folds,
        alpha,
        label_names,
        total_calibration: total,
        provenance: Provenance { master_seed, config_digest },
    };
    shield.validate()?;
    Ok(shield)
}

pub fn write(shield: &ShieldModel, path: &Path) -> Result<()> {
    atomic_write(path, &to_bytes(shield)?)
}

pub fn read(path: &Path) -> Result<ShieldModel> {
    from_bytes(&std::fs::read(path)?)
}

pub fn describe(bytes: &[u8]) -> Result<String> {
    let shield = from_bytes(bytes)?;
    let fold_sizes: Vec<String> = shield.folds.iter().map(|f| f.scores.len().to_string()).collect();
    Ok(format!(
        "SHIELD v{VERSION}\nK: {}\nalpha: {}\nN: {}\nfold held-out sizes: {}\nthreshold floor(alpha*(N+1)): {}\nlabels: {}\nmaster_seed: {}\nconfig_digest: {}\n",
        shield.folds.len(),
        shield.alpha,
        shield.total_calibration,
        fold_sizes.join(","),
        shield.threshold(),
        shield.label_names.join(","),
        shield.provenance.master_seed,
        shield.provenance.config_digest,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::NetworkParams;
    use crate::labels::label_names;

    fn tiny_shield() -> ShieldModel {
        ShieldModel {
            folds: vec![
                CalibrationFold {
                    index: 0,
                    params: NetworkParams::init(5),
                    scores: vec![0.1, 0.5, 2.0],
                },
                CalibrationFold {
                    index: 1,
                    params: NetworkParams::init(6),
                    scores: vec![0.2, 0.3],
                },
            ],
            alpha: 0.1,
            label_names: label_names(),
            total_calibration: 5,
            provenance: Provenance { master_seed: 42, config_digest: "abc123".into() },
        }
    }

    #[test]
    fn shield_round_trips_bit_exactly() {
        let shield = tiny_shield();
        let bytes = to_bytes(&shield).unwrap();
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(back.alpha, shield.alpha);
        assert_eq!(back.total_calibration, shield.total_calibration);
        assert_eq!(back.label_names, shield.label_names);
        assert_eq!(back.provenance, shield.provenance);
        for (a, b) in shield.folds.iter().zip(&back.folds) {
            assert_eq!(a.scores, b.scores);
            assert_eq!(a.params.to_flat(), b.params.to_flat());
        }
        assert_eq!(to_bytes(&back).unwrap(), bytes);
    }

    #[test]
    fn unsorted_scores_are_rejected() {
        let mut shield = tiny_shield();
        shield.folds[0].scores = vec![2.0, 0.1, 0.5];
        let mut bytes = Vec::new();
        // bypass to_bytes validation by writing manually through to_bytes of
        // a sorted shield, then corrupting the first fold's score order
        shield.folds[0].scores.sort_by(|a, b| a.partial_cmp(b).unwrap());
        bytes.extend_from_slice(&to_bytes(&shield).unwrap());
        // swap the first two f64 scores of fold 0 in place
        let model_len = model::to_bytes(&shield.folds[0].params).unwrap().len();
        let label_table_len: usize = 2 + shield.label_names.iter().map(|n| 2 + n.len()).sum::<usize>();
        let score_base = 4 + 2 + 2 + 8 + 4 + label_table_len + model_len + 4;
        let (a, b) = (score_base, score_base + 8);
        let mut tmp = [0u8; 8];
        tmp.copy_from_slice(&bytes[a..a + 8]);
        bytes.copy_within(b..b + 8, a);
        bytes[b..b + 8].copy_from_slice(&tmp);
        assert!(matches!(from_bytes(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn bad_magic_is_rejected() {
        let bytes = to_bytes(&tiny_shield()).unwrap();
        let mut corrupted = bytes.clone();
        corrupted[0] = b'Z';
        assert!(matches!(from_bytes(&corrupted), Err(Error::Format(_))));
    }
}
