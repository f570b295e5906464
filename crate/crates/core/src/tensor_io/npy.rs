//! Minimal NPY reader/writer for little-endian floating point arrays.
//!
//! Reads format versions 1.0 and 2.0, writes 1.0. Only `<f4` and `<f8`
//! payloads in C order are accepted; anything else is rejected rather than
//! reinterpreted.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{OodError, Result};

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const ALIGN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// A dense C-order array of any rank, widened to `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct NpyArray {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Header {
    pub dtype: Dtype,
    pub fortran_order: bool,
    pub shape: Vec<usize>,
}

fn format_err(offset: usize, message: impl Into<String>) -> OodError {
    OodError::Format {
        offset,
        message: message.into(),
    }
}

/// Parse the NPY preamble and header dictionary. Returns the header and the
/// byte offset at which the payload starts.
pub(crate) fn parse_header(bytes: &[u8]) -> Result<(Header, usize)> {
    if bytes.len() < 8 {
        return Err(format_err(bytes.len(), "file too short for NPY preamble"));
    }
    if &bytes[..6] != MAGIC {
        return Err(format_err(0, "missing \\x93NUMPY magic"));
    }
    let (major, minor) = (bytes[6], bytes[7]);
    let (header_len, dict_start) = match (major, minor) {
        (1, 0) => {
            if bytes.len() < 10 {
                return Err(format_err(bytes.len(), "truncated header length"));
            }
            (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10)
        }
        (2, 0) => {
            if bytes.len() < 12 {
                return Err(format_err(bytes.len(), "truncated header length"));
            }
            (
                u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize,
                12,
            )
        }
        _ => {
            return Err(format_err(
                6,
                format!("unsupported NPY version {major}.{minor}"),
            ))
        }
    };
    let dict_end = dict_start + header_len;
    if bytes.len() < dict_end {
        return Err(format_err(bytes.len(), "header extends past end of file"));
    }
    let text = std::str::from_utf8(&bytes[dict_start..dict_end])
        .map_err(|e| format_err(dict_start + e.valid_up_to(), "header is not valid text"))?;
    let header = DictParser::new(text, dict_start).parse()?;
    Ok((header, dict_end))
}

/// Recursive-descent parser for the restricted Python dict literal used in
/// NPY headers: string keys, string / bool / integer-tuple values.
struct DictParser<'a> {
    src: &'a [u8],
    pos: usize,
    base: usize,
}

enum Value {
    Str(String),
    Bool(bool),
    Tuple(Vec<usize>),
}

impl<'a> DictParser<'a> {
    fn new(text: &'a str, base: usize) -> Self {
        Self {
            src: text.as_bytes(),
            pos: 0,
            base,
        }
    }

    fn err(&self, message: impl Into<String>) -> OodError {
        format_err(self.base + self.pos, message)
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected '{}'", c as char)))
        }
    }

    fn string(&mut self) -> Result<String> {
        let quote = match self.peek() {
            Some(q @ (b'\'' | b'"')) => q,
            _ => return Err(self.err("expected quoted string")),
        };
        self.pos += 1;
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos] != quote {
            self.pos += 1;
        }
        if self.pos >= self.src.len() {
            return Err(self.err("unterminated string"));
        }
        let s = String::from_utf8_lossy(&self.src[start..self.pos]).into_owned();
        self.pos += 1;
        Ok(s)
    }

    fn integer(&mut self) -> Result<usize> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected non-negative integer"));
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| self.err("integer out of range"))
    }

    fn value(&mut self) -> Result<Value> {
        match self.peek() {
            Some(b'\'' | b'"') => Ok(Value::Str(self.string()?)),
            Some(b'(') => {
                self.pos += 1;
                let mut dims = Vec::new();
                loop {
                    if self.peek() == Some(b')') {
                        self.pos += 1;
                        break;
                    }
                    dims.push(self.integer()?);
                    match self.peek() {
                        Some(b',') => self.pos += 1,
                        Some(b')') => {}
                        _ => return Err(self.err("expected ',' or ')' in shape tuple")),
                    }
                }
                Ok(Value::Tuple(dims))
            }
            _ => {
                let rest = &self.src[self.pos..];
                if rest.starts_with(b"True") {
                    self.pos += 4;
                    Ok(Value::Bool(true))
                } else if rest.starts_with(b"False") {
                    self.pos += 5;
                    Ok(Value::Bool(false))
                } else {
                    Err(self.err("unsupported header value"))
                }
            }
        }
    }

    fn parse(mut self) -> Result<Header> {
        self.expect(b'{')?;
        let mut descr = None;
        let mut fortran = None;
        let mut shape = None;
        loop {
            if self.peek() == Some(b'}') {
                self.pos += 1;
                break;
            }
            let key_at = self.pos;
            let key = self.string()?;
            self.expect(b':')?;
            let value_at = self.pos;
            let value = self.value()?;
            match (key.as_str(), value) {
                ("descr", Value::Str(s)) => descr = Some((s, value_at)),
                ("fortran_order", Value::Bool(b)) => fortran = Some(b),
                ("shape", Value::Tuple(t)) => shape = Some(t),
                ("descr" | "fortran_order" | "shape", _) => {
                    return Err(format_err(self.base + value_at, format!("bad type for {key}")))
                }
                _ => return Err(format_err(self.base + key_at, format!("unknown key {key:?}"))),
            }
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b'}') => {}
                _ => return Err(self.err("expected ',' or '}'")),
            }
        }
        let (descr, descr_at) = descr.ok_or_else(|| self.err("missing 'descr'"))?;
        let dtype = match descr.as_str() {
            "<f4" => Dtype::F32,
            "<f8" => Dtype::F64,
            other => {
                return Err(format_err(
                    self.base + descr_at,
                    format!("unsupported dtype {other:?}; only '<f4' and '<f8' are accepted"),
                ))
            }
        };
        let fortran_order = fortran.ok_or_else(|| self.err("missing 'fortran_order'"))?;
        if fortran_order {
            return Err(self.err("fortran_order=True is not supported"));
        }
        let shape = shape.ok_or_else(|| self.err("missing 'shape'"))?;
        Ok(Header {
            dtype,
            fortran_order,
            shape,
        })
    }
}

/// Decode an NPY byte buffer. Values are widened to `f64` and checked finite.
pub fn decode(bytes: &[u8]) -> Result<NpyArray> {
    let (header, start) = parse_header(bytes)?;
    let count: usize = header.shape.iter().product();
    let width = header.dtype.width();
    let expected = count
        .checked_mul(width)
        .ok_or_else(|| format_err(start, "shape product overflows"))?;
    let payload = &bytes[start..];
    if payload.len() != expected {
        return Err(format_err(
            start,
            format!(
                "payload has {} bytes, shape {:?} needs {expected}",
                payload.len(),
                header.shape
            ),
        ));
    }
    let data: Vec<f64> = match header.dtype {
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
        Dtype::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    if let Some(index) = data.iter().position(|v| !v.is_finite()) {
        return Err(OodError::NonFinite { index });
    }
    Ok(NpyArray {
        shape: header.shape,
        data,
    })
}

fn shape_literal(shape: &[usize]) -> String {
    match shape {
        [one] => format!("({one},)"),
        _ => {
            let parts: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
            format!("({})", parts.join(", "))
        }
    }
}

/// Encode as NPY 1.0, `<f8`, C order. The header is padded so the payload
/// starts on a 64-byte boundary.
pub fn encode(shape: &[usize], data: &[f64]) -> Vec<u8> {
    debug_assert_eq!(shape.iter().product::<usize>(), data.len());
    let mut dict = format!(
        "{{'descr': '<f8', 'fortran_order': False, 'shape': {}, }}",
        shape_literal(shape)
    );
    let unpadded = MAGIC.len() + 2 + 2 + dict.len() + 1;
    let pad = (ALIGN - unpadded % ALIGN) % ALIGN;
    dict.extend(std::iter::repeat_n(' ', pad));
    dict.push('\n');

    let mut out = Vec::with_capacity(MAGIC.len() + 4 + dict.len() + data.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(dict.len() as u16).to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn read_npy(path: &Path) -> Result<NpyArray> {
    let bytes = fs::read(path).map_err(|e| OodError::io(path, e))?;
    decode(&bytes)
}

pub fn write_npy(path: &Path, shape: &[usize], data: &[f64]) -> Result<()> {
    let bytes = encode(shape, data);
    let mut file = fs::File::create(path).map_err(|e| OodError::io(path, e))?;
    file.write_all(&bytes).map_err(|e| OodError::io(path, e))
}
