//! Consistent Overhead Byte Stuffing. Encoded output never contains 0x00;
//! the caller appends the delimiter.

use thiserror::Error;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum CobsError {
    #[error("empty input")]
    Empty,
    #[error("zero byte at offset {0}")]
    ZeroByte(usize),
    #[error("code byte at offset {offset} overruns input of {len} bytes")]
    Overrun { offset: usize, len: usize },
}

/// Upper bound on the encoded length of `len` input bytes.
pub const fn max_encoded_len(len: usize) -> usize {
    len + len / 254 + 1
}

pub fn encode(data: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(max_encoded_len(data.len()));
    let mut code_idx = 0;
    out.push(0);
    let mut code: u8 = 1;
    for &b in data {
        if b == 0 {
            out[code_idx] = code;
            code_idx = out.len();
            out.push(0);
            code = 1;
        } else {
            out.push(b);
            code += 1;
            if code == 0xFF {
                out[code_idx] = code;
                code_idx = out.len();
                out.push(0);
                code = 1;
            }
        }
    }
    out[code_idx] = code;
    out
}

/// Decodes one COBS block (without its trailing delimiter).
pub fn decode(encoded: &[u8]) -> Result<Vec<u8>, CobsError> {
    if encoded.is_empty() {
        return Err(CobsError::Empty);
    }
    let mut out = Vec::with_capacity(encoded.len());
    let mut i = 0;
    while i < encoded.len() {
        let code = encoded[i];
        if code == 0 {
            return Err(CobsError::ZeroByte(i));
        }
        let end = i + usize::from(code);
        if end > encoded.len() {
            return Err(CobsError::Overrun {
                offset: i,
                len: encoded.len(),
            });
        }
        for (j, &b) in encoded[i + 1..end].iter().enumerate() {
            if b == 0 {
                return Err(CobsError::ZeroByte(i + 1 + j));
            }
            out.push(b);
        }
        i = end;
        if code != 0xFF && i < encoded.len() {
            out.push(0);
        }
    }
    Ok(out)
}
