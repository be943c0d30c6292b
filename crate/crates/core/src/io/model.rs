//! MODEL classifier files.
//!
//! Layout (little-endian): magic "CSMD", version u16 = 1, layer count u16,
//! then per parameterized layer: kind u8 (1 = conv1d, 2 = dense), ndim u8,
//! u16 shape dims, f64 weights, f64 biases. The loader checks that the
//! stored shapes match the fixed architecture.

use std::path::Path;

use crate::classifier::{NetworkParams, HIDDEN, IN_CH, K1, K2, N_CLASSES};
use crate::error::{Error, Result};

use super::{atomic_write, read_exact, read_f64, read_u16};

const MAGIC: &[u8; 4] = b"CSMD";
const VERSION: u16 = 1;
const KIND_CONV: u8 = 1;
const KIND_DENSE: u8 = 2;

pub fn to_bytes(params: &NetworkParams) -> Result<Vec<u8>> {
    params.validate()?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&4u16.to_le_bytes());
    for conv in [&params.conv1, &params.conv2, &params.conv3] {
        out.push(KIND_CONV);
        out.push(3);
        for dim in [conv.out_ch, conv.in_ch, conv.k] {
            out.extend_from_slice(&(dim as u16).to_le_bytes());
        }
        for &v in conv.w.iter().chain(&conv.b) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.push(KIND_DENSE);
    out.push(2);
    for dim in [params.dense.out_d, params.dense.in_d] {
        out.extend_from_slice(&(dim as u16).to_le_bytes());
    }
    for &v in params.dense.w.iter().chain(&params.dense.b) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Parse a MODEL payload starting at `pos`; used both for standalone files
/// and for the payloads embedded in SHIELD files.
pub(crate) fn parse(bytes: &[u8], pos: &mut usize) -> Result<NetworkParams> {
    let magic = read_exact(bytes, pos, 4, "model magic")?;
    if magic != MAGIC {
        return Err(Error::Format(format!(
            "bad MODEL magic {:?}",
            String::from_utf8_lossy(magic)
        )));
    }
    let version = read_u16(bytes, pos, "model version")?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported MODEL version {version}")));
    }
    let n_layers = read_u16(bytes, pos, "layer count")?;
    if n_layers != 4 {
        return Err(Error::Format(format!("expected 4 layers, found {n_layers}")));
    }

    let mut params = NetworkParams::zeros();
    let expected: [(u8, Vec<usize>); 4] = [
        (KIND_CONV, vec![HIDDEN, IN_CH, K1]),
        (KIND_CONV, vec![HIDDEN, HIDDEN, K2]),
        (KIND_CONV, vec![HIDDEN, HIDDEN, K2]),
        (KIND_DENSE, vec![N_CLASSES, HIDDEN]),
    ];
    for (layer_idx, (want_kind, want_dims)) in expected.iter().enumerate() {
        let kind = read_exact(bytes, pos, 1, "layer kind")?[0];
        if kind != *want_kind {
            return Err(Error::Format(format!(
                "layer {layer_idx}: kind {kind} does not match the fixed architecture"
            )));
        }
        let ndim = read_exact(bytes, pos, 1, "layer ndim")?[0] as usize;
        if ndim != want_dims.len() {
            return Err(Error::Format(format!("layer {layer_idx}: bad dim count {ndim}")));
        }
        for &want in want_dims {
            let got = read_u16(bytes, pos, "layer dim")? as usize;
            if got != want {
                return Err(Error::Format(format!(
                    "layer {layer_idx}: dim {got} does not match expected {want}"
                )));
            }
        }
        let (w, b): (&mut Vec<f64>, &mut Vec<f64>) = match layer_idx {
            0 => (&mut params.conv1.w, &mut params.conv1.b),
            1 => (&mut params.conv2.w, &mut params.conv2.b),
            2 => (&mut params.conv3.w, &mut params.conv3.b),
            _ => (&mut params.dense.w, &mut params.dense.b),
        };
        for slot in w.iter_mut().chain(b.iter_mut()) {
            *slot = read_f64(bytes, pos, "layer payload")?;
        }
    }
    params.validate()?;
    Ok(params)
}

pub fn from_bytes(bytes: &[u8]) -> Result<NetworkParams> {
    let mut pos = 0usize;
    let params = parse(bytes, &mut pos)?;
    if pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes in MODEL", bytes.len() - pos)));
    }
    Ok(params)
}

pub fn write(params: &NetworkParams, path: &Path) -> Result<()> {
    atomic_write(path, &to_bytes(params)?)
}

pub fn read(path: &Path) -> Result<NetworkParams> {
    from_bytes(&std::fs::read(path)?)
}

pub fn describe(bytes: &[u8]) -> Result<String> {
    let params = from_bytes(bytes)?;
    Ok(format!(
        "MODEL v{VERSION}\nlayers: conv1d({IN_CH}->{HIDDEN},k={K1}) + ReLU | residual[conv1d({HIDDEN}->{HIDDEN},k={K2}) + ReLU + conv1d({HIDDEN}->{HIDDEN},k={K2})] | GAP | dense({HIDDEN}->{N_CLASSES})\nparameters: {}\n",
        params.param_count()
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_round_trips_bit_exactly() {
        let params = NetworkParams::init(123);
        let bytes = to_bytes(&params).unwrap();
        let back = from_bytes(&bytes).unwrap();
        let (a, b) = (params.to_flat(), back.to_flat());
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn corrupt_headers_are_rejected() {
        let params = NetworkParams::init(1);
        let mut bytes = to_bytes(&params).unwrap();
        bytes[1] = b'Z';
        assert!(matches!(from_bytes(&bytes), Err(Error::Format(_))));

        let mut bytes = to_bytes(&params).unwrap();
        bytes[4] = 2; // version
        assert!(matches!(from_bytes(&bytes), Err(Error::Format(_))));

        let mut bytes = to_bytes(&params).unwrap();
        bytes[8] = 9; // first layer kind
        assert!(matches!(from_bytes(&bytes), Err(Error::Format(_))));
    }
}
