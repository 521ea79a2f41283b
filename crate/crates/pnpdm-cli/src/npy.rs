//! Minimal NPY (version 1.0) reader/writer for little-endian real arrays.
//!
//! Supports `<f8` and `<f4` payloads in C order. Round trips are bitwise
//! lossless; truncated or malformed files are rejected with an error rather
//! than a partial array.

use anyhow::{anyhow, bail, Context, Result};
use std::fs;
use std::io::Write;
use std::path::Path;

const MAGIC: &[u8; 6] = b"\x93NUMPY";

/// An n-dimensional real array with C-order storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Array {
    pub shape: Vec<usize>,
    pub data: ArrayData,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArrayData {
    F64(Vec<f64>),
    F32(Vec<f32>),
}

impl Array {
    pub fn from_f64(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            bail!(
                "shape {:?} requires {} elements, got {}",
                shape,
                expected,
                data.len()
            );
        }
        Ok(Array {
            shape,
            data: ArrayData::F64(data),
        })
    }

    pub fn from_f32(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            bail!(
                "shape {:?} requires {} elements, got {}",
                shape,
                expected,
                data.len()
            );
        }
        Ok(Array {
            shape,
            data: ArrayData::F32(data),
        })
    }

    pub fn len(&self) -> usize {
        match &self.data {
            ArrayData::F64(v) => v.len(),
            ArrayData::F32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Values widened to f64 regardless of on-disk precision.
    pub fn to_f64(&self) -> Vec<f64> {
        match &self.data {
            ArrayData::F64(v) => v.clone(),
            ArrayData::F32(v) => v.iter().map(|&x| x as f64).collect(),
        }
    }
}

fn descr(data: &ArrayData) -> &'static str {
    match data {
        ArrayData::F64(_) => "<f8",
        ArrayData::F32(_) => "<f4",
    }
}

fn shape_tuple(shape: &[usize]) -> String {
    match shape.len() {
        0 => "()".to_string(),
        1 => format!("({},)", shape[0]),
        _ => {
            let parts: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
            format!("({})", parts.join(", "))
        }
    }
}

/// Serialize an array to NPY v1.0 bytes.
pub fn to_bytes(array: &Array) -> Vec<u8> {
    let header_dict = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': {}, }}",
        descr(&array.data),
        shape_tuple(&array.shape)
    );
    // Total header (magic + version + length field + dict + padding + '\n')
    // padded to a multiple of 64 bytes.
    let prefix_len = MAGIC.len() + 2 + 2;
    let unpadded = prefix_len + header_dict.len() + 1;
    let padded = unpadded.div_ceil(64) * 64;
    let header_len = padded - prefix_len;

    let mut out = Vec::with_capacity(padded + array.len() * 8);
    out.extend_from_slice(MAGIC);
    out.push(1);
    out.push(0);
    out.extend_from_slice(&(header_len as u16).to_le_bytes());
    out.extend_from_slice(header_dict.as_bytes());
    out.resize(padded - 1, b' ');
    out.push(b'\n');
    match &array.data {
        ArrayData::F64(v) => {
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        ArrayData::F32(v) => {
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    out
}

pub fn write_array(path: &Path, array: &Array) -> Result<()> {
    let bytes = to_bytes(array);
    let mut file = fs::File::create(path)
        .with_context(|| format!("failed to create {}", path.display()))?;
    file.write_all(&bytes)
        .with_context(|| format!("failed to write {}", path.display()))?;
    Ok(())
}

/// Extract the value of a quoted or bare dict entry from the header text.
fn header_field<'a>(header: &'a str, key: &str) -> Result<&'a str> {
    let needle = format!("'{key}':");
    let start = header
        .find(&needle)
        .ok_or_else(|| anyhow!("NPY header missing key '{key}'"))?
        + needle.len();
    let rest = header[start..].trim_start();
    Ok(rest)
}

fn parse_shape(text: &str) -> Result<Vec<usize>> {
    let open = text
        .find('(')
        .ok_or_else(|| anyhow!("NPY header shape is not a tuple"))?;
    let close = text[open..]
        .find(')')
        .ok_or_else(|| anyhow!("NPY header shape tuple is unterminated"))?
        + open;
    let inner = &text[open + 1..close];
    let mut shape = Vec::new();
    for part in inner.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        shape.push(
            part.parse::<usize>()
                .with_context(|| format!("invalid shape entry '{part}'"))?,
        );
    }
    Ok(shape)
}

/// Parse NPY bytes into an array, rejecting truncated or malformed input.
pub fn from_bytes(bytes: &[u8]) -> Result<Array> {
    if bytes.len() < 10 {
        bail!("NPY file truncated before header");
    }
    if &bytes[..6] != MAGIC {
        bail!("bad NPY magic bytes");
    }
    let (major, minor) = (bytes[6], bytes[7]);
    if major != 1 || minor != 0 {
        bail!("unsupported NPY version {major}.{minor} (only 1.0 supported)");
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let payload_start = 10 + header_len;
    if bytes.len() < payload_start {
        bail!("NPY file truncated inside header");
    }
    let header = std::str::from_utf8(&bytes[10..payload_start])
        .context("NPY header is not valid UTF-8")?;

    let descr_text = header_field(header, "descr")?;
    let descr = descr_text
        .trim_start_matches(['\'', '"'])
        .get(..3)
        .ok_or_else(|| anyhow!("NPY descr too short"))?;
    let fortran_text = header_field(header, "fortran_order")?;
    if !fortran_text.starts_with("False") {
        bail!("Fortran-order NPY arrays are not supported");
    }
    let shape = parse_shape(header_field(header, "shape")?)?;
    let count: usize = shape.iter().product();
    let payload = &bytes[payload_start..];

    match descr {
        "<f8" => {
            if payload.len() < count * 8 {
                bail!(
                    "NPY payload truncated: expected {} bytes, got {}",
                    count * 8,
                    payload.len()
                );
            }
            let data = payload[..count * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            Ok(Array {
                shape,
                data: ArrayData::F64(data),
            })
        }
        "<f4" => {
            if payload.len() < count * 4 {
                bail!(
                    "NPY payload truncated: expected {} bytes, got {}",
                    count * 4,
                    payload.len()
                );
            }
            let data = payload[..count * 4]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            Ok(Array {
                shape,
                data: ArrayData::F32(data),
            })
        }
        other => bail!("unsupported NPY dtype '{other}' (expected <f8 or <f4)"),
    }
}

pub fn read_array(path: &Path) -> Result<Array> {
    let bytes =
        fs::read(path).with_context(|| format!("failed to read {}", path.display()))?;
    from_bytes(&bytes).with_context(|| format!("while parsing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_f64_64x64_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data: Vec<f64> = (0..64 * 64).map(|_| rng.gen::<f64>() * 10.0 - 5.0).collect();
        let array = Array::from_f64(vec![64, 64], data).unwrap();
        let bytes = to_bytes(&array);
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(back, array);
        // Bitwise: re-serializing is byte identical too.
        assert_eq!(to_bytes(&back), bytes);
    }

    #[test]
    fn round_trip_f32() {
        let data: Vec<f32> = vec![1.5, -2.25, 0.0, f32::MIN_POSITIVE];
        let array = Array::from_f32(vec![4], data).unwrap();
        let back = from_bytes(&to_bytes(&array)).unwrap();
        assert_eq!(back, array);
    }

    #[test]
    fn scalar_shape_round_trips() {
        let array = Array::from_f64(vec![], vec![3.25]).unwrap();
        let bytes = to_bytes(&array);
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(back.shape, Vec::<usize>::new());
        assert_eq!(back.to_f64(), vec![3.25]);
    }

    #[test]
    fn header_is_64_byte_aligned() {
        let array = Array::from_f64(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let bytes = to_bytes(&array);
        let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
        assert_eq!((10 + header_len) % 64, 0);
        assert_eq!(bytes[10 + header_len - 1], b'\n');
    }

    #[test]
    fn truncated_payload_is_an_error() {
        let array = Array::from_f64(vec![8], (0..8).map(|i| i as f64).collect()).unwrap();
        let bytes = to_bytes(&array);
        let truncated = &bytes[..bytes.len() - 5];
        assert!(from_bytes(truncated).is_err());
    }

    #[test]
    fn bad_magic_is_an_error() {
        let array = Array::from_f64(vec![2], vec![1.0, 2.0]).unwrap();
        let mut bytes = to_bytes(&array);
        bytes[0] = 0x92;
        assert!(from_bytes(&bytes).is_err());
    }

    #[test]
    fn shape_element_mismatch_rejected() {
        assert!(Array::from_f64(vec![3, 2], vec![0.0; 5]).is_err());
    }
}
