//! NPY v1.0 reader and writer for 2-D little-endian float arrays.
//!
//! Layout: magic `\x93NUMPY`, version bytes `1 0`, a little-endian `u16`
//! header length, then an ASCII Python dict literal padded with spaces and a
//! trailing newline so the payload starts on a 64-byte boundary.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const MAGIC: &[u8; 6] = b"\x93NUMPY";
const ALIGN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NpyDtype {
    F32,
    F64,
}

impl NpyDtype {
    fn descr(self) -> &'static str {
        match self {
            NpyDtype::F32 => "<f4",
            NpyDtype::F64 => "<f8",
        }
    }

    fn size(self) -> usize {
        match self {
            NpyDtype::F32 => 4,
            NpyDtype::F64 => 8,
        }
    }
}

/// A decoded 2-D array, widened to `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct NpyArray {
    pub rows: usize,
    pub cols: usize,
    pub dtype: NpyDtype,
    pub data: Vec<f64>,
}

pub fn encode(rows: usize, cols: usize, data: &[f64], dtype: NpyDtype) -> Vec<u8> {
    assert_eq!(data.len(), rows * cols, "payload does not match shape");
    let mut header = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': ({rows}, {cols}), }}",
        dtype.descr()
    );
    let unpadded = MAGIC.len() + 2 + 2 + header.len() + 1;
    let pad = (ALIGN - unpadded % ALIGN) % ALIGN;
    header.extend(std::iter::repeat_n(' ', pad));
    header.push('\n');

    let mut out = Vec::with_capacity(MAGIC.len() + 4 + header.len() + data.len() * dtype.size());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    match dtype {
        NpyDtype::F64 => data.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
        NpyDtype::F32 => data
            .iter()
            .for_each(|v| out.extend_from_slice(&(*v as f32).to_le_bytes())),
    }
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<NpyArray> {
    let fail = |reason: &str| Error::format(path, reason);
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(fail("bad magic bytes (not an NPY file)"));
    }
    if bytes[6..8] != [1, 0] {
        return Err(fail(&format!(
            "unsupported NPY version {}.{}",
            bytes[6], bytes[7]
        )));
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let header_end = 10 + header_len;
    if bytes.len() < header_end {
        return Err(fail("truncated header"));
    }
    let header = std::str::from_utf8(&bytes[10..header_end])
        .map_err(|_| fail("header is not ASCII"))?;
    let header = parse_header(header).map_err(|reason| fail(&reason))?;

    if header.fortran_order {
        return Err(fail("fortran-order arrays are not supported"));
    }
    let dtype = match header.descr.as_str() {
        "<f8" => NpyDtype::F64,
        "<f4" => NpyDtype::F32,
        other => return Err(fail(&format!("unsupported dtype `{other}`"))),
    };
    let (rows, cols) = match header.shape.as_slice() {
        [r, c] => (*r, *c),
        other => {
            return Err(fail(&format!(
                "expected a 2-D array, found {} dimension(s)",
                other.len()
            )))
        }
    };
    let payload = &bytes[header_end..];
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(dtype.size()))
        .ok_or_else(|| fail("shape overflows"))?;
    if payload.len() != expected {
        return Err(fail(&format!(
            "payload has {} bytes, shape ({rows}, {cols}) needs {expected}",
            payload.len()
        )));
    }
    let data = match dtype {
        NpyDtype::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect(),
        NpyDtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4-byte chunk"))))
            .collect(),
    };
    Ok(NpyArray {
        rows,
        cols,
        dtype,
        data,
    })
}

pub fn read_array(path: &Path) -> Result<NpyArray> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

pub fn write_array(path: &Path, rows: usize, cols: usize, data: &[f64], dtype: NpyDtype) -> Result<()> {
    if data.len() != rows * cols {
        return Err(Error::InvalidData(format!(
            "{} values do not fill shape ({rows}, {cols})",
            data.len()
        )));
    }
    write_atomic(path, &encode(rows, cols, data, dtype))
}

struct Header {
    descr: String,
    fortran_order: bool,
    shape: Vec<usize>,
}

#[derive(Debug, PartialEq)]
enum Literal {
    Str(String),
    Bool(bool),
    Tuple(Vec<usize>),
}

/// Parses the restricted dict literal numpy writes:
/// `{'descr': '<f8', 'fortran_order': False, 'shape': (3, 4), }`.
fn parse_header(text: &str) -> std::result::Result<Header, String> {
    let body = text.trim_end_matches(['\n', ' ', '\0']).trim();
    let body = body
        .strip_prefix('{')
        .and_then(|b| b.strip_suffix('}'))
        .ok_or("header is not a dict literal")?;
    let mut cursor = Cursor { s: body.as_bytes(), pos: 0 };
    let mut descr = None;
    let mut fortran = None;
    let mut shape = None;
    loop {
        cursor.skip_ws();
        if cursor.done() {
            break;
        }
        let key = match cursor.literal()? {
            Literal::Str(k) => k,
            _ => return Err("dict key is not a string".into()),
        };
        cursor.skip_ws();
        cursor.expect(b':')?;
        cursor.skip_ws();
        let value = cursor.literal()?;
        match (key.as_str(), value) {
            ("descr", Literal::Str(s)) => descr = Some(s),
            ("fortran_order", Literal::Bool(b)) => fortran = Some(b),
            ("shape", Literal::Tuple(t)) => shape = Some(t),
            (k, _) => return Err(format!("unexpected or malformed header key `{k}`")),
        }
        cursor.skip_ws();
        if !cursor.done() {
            cursor.expect(b',')?;
        }
    }
    Ok(Header {
        descr: descr.ok_or("header lacks `descr`")?,
        fortran_order: fortran.ok_or("header lacks `fortran_order`")?,
        shape: shape.ok_or("header lacks `shape`")?,
    })
}

struct Cursor<'a> {
    s: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn done(&self) -> bool {
        self.pos >= self.s.len()
    }

    fn peek(&self) -> Option<u8> {
        self.s.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b' ' | b'\t')) {
            self.pos += 1;
        }
    }

    fn expect(&mut self, c: u8) -> std::result::Result<(), String> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(format!("expected `{}` at header offset {}", c as char, self.pos))
        }
    }

    fn literal(&mut self) -> std::result::Result<Literal, String> {
        match self.peek() {
            Some(q @ (b'\'' | b'"')) => {
                self.pos += 1;
                let start = self.pos;
                while self.peek().is_some_and(|c| c != q) {
                    self.pos += 1;
                }
                let s = String::from_utf8_lossy(&self.s[start..self.pos]).into_owned();
                self.expect(q)?;
                Ok(Literal::Str(s))
            }
            Some(b'(') => {
                self.pos += 1;
                let mut dims = Vec::new();
                loop {
                    self.skip_ws();
                    if self.peek() == Some(b')') {
                        self.pos += 1;
                        return Ok(Literal::Tuple(dims));
                    }
                    let start = self.pos;
                    while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                        self.pos += 1;
                    }
                    let digits = std::str::from_utf8(&self.s[start..self.pos]).unwrap_or("");
                    dims.push(digits.parse().map_err(|_| "malformed shape tuple".to_string())?);
                    self.skip_ws();
                    if self.peek() == Some(b',') {
                        self.pos += 1;
                    }
                }
            }
            _ => {
                let rest = &self.s[self.pos..];
                if rest.starts_with(b"True") {
                    self.pos += 4;
                    Ok(Literal::Bool(true))
                } else if rest.starts_with(b"False") {
                    self.pos += 5;
                    Ok(Literal::Bool(false))
                } else {
                    Err(format!("unrecognized header value at offset {}", self.pos))
                }
            }
        }
    }
}
