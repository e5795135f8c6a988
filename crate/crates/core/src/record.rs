//! Content hashing and checksummed little-endian binary records.
//!
//! Record layout: 4-byte magic, `u32` version, payload, then the SHA-256
//! digest of everything before it.

use sha2::{Digest as _, Sha256};

use crate::error::{Error, Result};

pub type Digest = [u8; 32];

/// Incremental content hasher over typed values.
pub struct ContentHasher(Sha256);

impl Default for ContentHasher {
    fn default() -> Self {
        Self::new()
    }
}

impl ContentHasher {
    pub fn new() -> Self {
        Self(Sha256::new())
    }

    pub fn tag(&mut self, s: &str) -> &mut Self {
        self.u64(s.len() as u64);
        self.0.update(s.as_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.0.update(v.to_le_bytes());
        self
    }

    pub fn f64(&mut self, v: f64) -> &mut Self {
        self.0.update(v.to_bits().to_le_bytes());
        self
    }

    pub fn f64s(&mut self, v: &[f64]) -> &mut Self {
        self.u64(v.len() as u64);
        for x in v {
            self.f64(*x);
        }
        self
    }

    pub fn digest(&mut self, d: &Digest) -> &mut Self {
        self.0.update(d);
        self
    }

    pub fn finish(self) -> Digest {
        self.0.finalize().into()
    }
}

pub fn hex(d: &Digest) -> String {
    d.iter().map(|b| format!("{b:02x}")).collect()
}

pub struct RecordWriter {
    buf: Vec<u8>,
}

impl RecordWriter {
    pub fn new(magic: &[u8; 4], version: u32) -> Self {
        let mut buf = magic.to_vec();
        buf.extend_from_slice(&version.to_le_bytes());
        Self { buf }
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
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

    pub fn bytes(&mut self, v: &[u8]) {
        self.buf.extend_from_slice(v);
    }

    pub fn finish(mut self) -> Vec<u8> {
        let sum: Digest = Sha256::digest(&self.buf).into();
        self.buf.extend_from_slice(&sum);
        self.buf
    }
}

pub struct RecordReader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> RecordReader<'a> {
    /// Verifies magic, version and trailing checksum.
    pub fn open(data: &'a [u8], magic: &[u8; 4], version: u32) -> Result<Self> {
        if data.len() < 8 + 32 {
            return Err(Error::CorruptRecord("record too short".into()));
        }
        let (body, sum) = data.split_at(data.len() - 32);
        let expect: Digest = Sha256::digest(body).into();
        if expect[..] != sum[..] {
            return Err(Error::CorruptRecord("checksum mismatch".into()));
        }
        if &body[..4] != magic {
            return Err(Error::CorruptRecord("bad magic".into()));
        }
        let v = u32::from_le_bytes(body[4..8].try_into().unwrap());
        if v != version {
            return Err(Error::CorruptRecord(format!(
                "version {v}, expected {version}"
            )));
        }
        Ok(Self {
            data: body,
            pos: 8,
        })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::CorruptRecord("truncated payload".into()));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
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

    pub fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        self.take(n)
    }

    pub fn is_done(&self) -> bool {
        self.pos == self.data.len()
    }
}
