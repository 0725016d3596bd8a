//! NPY v1.0 reader/writer, the distribution format of the benchmark
//! datasets. Deliberately narrow: little-endian `<f4`/`<f8`, C order only;
//! anything else fails with a dedicated error.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 6] = b"\x93NUMPY";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NpyDType {
    F4,
    F8,
}

impl NpyDType {
    fn descr(self) -> &'static str {
        match self {
            NpyDType::F4 => "<f4",
            NpyDType::F8 => "<f8",
        }
    }

    fn size(self) -> usize {
        match self {
            NpyDType::F4 => 4,
            NpyDType::F8 => 8,
        }
    }
}

fn shape_literal(shape: &[usize]) -> String {
    match shape.len() {
        0 => "()".to_string(),
        1 => format!("({},)", shape[0]),
        _ => {
            let parts: Vec<String> = shape.iter().map(|e| e.to_string()).collect();
            format!("({})", parts.join(", "))
        }
    }
}

/// Write a tensor as NPY v1.0. `f8` mode widens the stored values (exact for
/// every f32).
pub fn write_npy(tensor: &Tensor<f32>, path: impl AsRef<Path>, dtype: NpyDType) -> Result<()> {
    let mut header = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': {}, }}",
        dtype.descr(),
        shape_literal(tensor.shape())
    );
    // pad with spaces so magic+version+len+header+newline is 64-byte aligned
    let base = MAGIC.len() + 2 + 2;
    let pad = (64 - (base + header.len() + 1) % 64) % 64;
    header.extend(std::iter::repeat_n(' ', pad));
    header.push('\n');

    let mut bytes = Vec::with_capacity(base + header.len() + tensor.len() * dtype.size());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&[1u8, 0u8]);
    bytes.extend_from_slice(&(header.len() as u16).to_le_bytes());
    bytes.extend_from_slice(header.as_bytes());
    match dtype {
        NpyDType::F4 => {
            for &v in tensor.data() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        NpyDType::F8 => {
            for &v in tensor.data() {
                bytes.extend_from_slice(&(v as f64).to_le_bytes());
            }
        }
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// Read an NPY v1.0 file into an f32 tensor. `<f8` payloads are converted to
/// f32 with round-to-nearest.
pub fn read_npy(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    let bytes = fs::read(path)?;
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(Error::NpyBadMagic);
    }
    let (major, minor) = (bytes[6], bytes[7]);
    if (major, minor) != (1, 0) {
        return Err(Error::NpyVersion { major, minor });
    }
    let hlen = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    if bytes.len() < 10 + hlen {
        return Err(Error::NpyHeader("declared header extends past end of file".into()));
    }
    let header = std::str::from_utf8(&bytes[10..10 + hlen])
        .map_err(|_| Error::NpyHeader("header is not UTF-8".into()))?;

    let descr = dict_str(header, "descr")?;
    let dtype = match descr.as_str() {
        "<f4" => NpyDType::F4,
        "<f8" => NpyDType::F8,
        other => return Err(Error::NpyDtype(other.to_string())),
    };
    match dict_word(header, "fortran_order")?.as_str() {
        "False" => {}
        "True" => return Err(Error::NpyFortranOrder),
        other => return Err(Error::NpyHeader(format!("fortran_order is {other:?}"))),
    }
    let shape = dict_shape(header)?;

    let count: usize = shape.iter().product();
    let payload = &bytes[10 + hlen..];
    let need = count * dtype.size();
    if payload.len() < need {
        return Err(Error::NpyTruncated { expected: need, got: payload.len() });
    }
    let data: Vec<f32> = match dtype {
        NpyDType::F4 => payload[..need]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
        NpyDType::F8 => payload[..need]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]) as f32)
            .collect(),
    };
    Tensor::from_vec(shape, data)
}

fn find_key<'a>(header: &'a str, key: &str) -> Result<&'a str> {
    let pat = format!("'{key}'");
    let at = header
        .find(&pat)
        .ok_or_else(|| Error::NpyHeader(format!("missing key {key:?}")))?;
    let rest = &header[at + pat.len()..];
    let colon = rest
        .find(':')
        .ok_or_else(|| Error::NpyHeader(format!("no value for key {key:?}")))?;
    Ok(rest[colon + 1..].trim_start())
}

fn dict_str(header: &str, key: &str) -> Result<String> {
    let v = find_key(header, key)?;
    let mut chars = v.chars();
    if chars.next() != Some('\'') {
        return Err(Error::NpyHeader(format!("value of {key:?} is not a string")));
    }
    let rest: &str = chars.as_str();
    let end = rest
        .find('\'')
        .ok_or_else(|| Error::NpyHeader(format!("unterminated string for {key:?}")))?;
    Ok(rest[..end].to_string())
}

fn dict_word(header: &str, key: &str) -> Result<String> {
    let v = find_key(header, key)?;
    Ok(v.chars().take_while(|c| c.is_ascii_alphanumeric()).collect())
}

fn dict_shape(header: &str) -> Result<Vec<usize>> {
    let v = find_key(header, "shape")?;
    if !v.starts_with('(') {
        return Err(Error::NpyHeader("shape is not a tuple".into()));
    }
    let end = v.find(')').ok_or_else(|| Error::NpyHeader("unterminated shape tuple".into()))?;
    let inner = &v[1..end];
    let mut shape = Vec::new();
    for part in inner.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        shape.push(
            part.parse::<usize>()
                .map_err(|_| Error::NpyHeader(format!("bad shape extent {part:?}")))?,
        );
    }
    Ok(shape)
}
