//! Framing shared by the binary caches: an 8-byte magic, a `u32` format
//! version, a little-endian body, and a trailing SHA-256 of everything before
//! it.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{GhmError, Result};

const HEADER: usize = 12;
const DIGEST: usize = 32;

#[derive(Default)]
pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new(magic: &[u8; 8], version: u32) -> Self {
        let mut buf = Vec::with_capacity(1 << 16);
        buf.extend_from_slice(magic);
        buf.extend_from_slice(&version.to_le_bytes());
        Writer { buf }
    }

    pub fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    /// Fixed-width ascii field, zero-padded or truncated to `width`.
    pub fn ascii(&mut self, s: &str, width: usize) {
        let mut field = vec![b'0'; width];
        for (dst, src) in field.iter_mut().zip(s.bytes()) {
            *dst = src;
        }
        self.buf.extend_from_slice(&field);
    }

    pub fn finish(mut self, path: &Path) -> Result<()> {
        let digest = Sha256::digest(&self.buf);
        self.buf.extend_from_slice(&digest);
        fs::write(path, self.buf)?;
        Ok(())
    }
}

pub(crate) struct Reader<'a> {
    path: &'a Path,
    buf: Vec<u8>,
    pos: usize,
    end: usize,
}

impl<'a> Reader<'a> {
    /// Reads and verifies the frame; the returned reader is positioned at the
    /// start of the body.
    pub fn open(path: &'a Path, magic: &[u8; 8], version: u32, what: &str) -> Result<Self> {
        let buf = fs::read(path)?;
        if buf.len() < HEADER || &buf[..8] != magic {
            return Err(GhmError::CacheFormat {
                path: path.to_path_buf(),
                reason: format!("not a {what} file"),
            });
        }
        let found = u32::from_le_bytes(buf[8..12].try_into().unwrap());
        if found != version {
            return Err(GhmError::Version { path: path.to_path_buf(), found, expected: version });
        }
        if buf.len() < HEADER + DIGEST {
            return Err(GhmError::Digest { path: path.to_path_buf() });
        }
        let end = buf.len() - DIGEST;
        if Sha256::digest(&buf[..end]).as_slice() != &buf[end..] {
            return Err(GhmError::Digest { path: path.to_path_buf() });
        }
        Ok(Reader { path, buf, pos: HEADER, end })
    }

    pub fn format_error(&self, reason: impl Into<String>) -> GhmError {
        GhmError::CacheFormat { path: self.path.to_path_buf(), reason: reason.into() }
    }

    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.end {
            return Err(self.format_error("body ends early"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn ascii(&mut self, width: usize) -> Result<String> {
        let bytes = self.take(width)?.to_vec();
        String::from_utf8(bytes).map_err(|_| self.format_error("field is not ascii"))
    }

    /// Fails unless the whole body was consumed.
    pub fn done(&self) -> Result<()> {
        if self.pos != self.end {
            return Err(self.format_error("trailing bytes after body"));
        }
        Ok(())
    }
}
