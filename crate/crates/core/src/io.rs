//! Little-endian binary helpers shared by the file formats.

use crate::error::{Error, Result};

pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new(magic: &[u8], version: u16) -> Self {
        let mut buf = Vec::new();
        buf.extend_from_slice(magic);
        buf.extend_from_slice(&version.to_le_bytes());
        Self { buf }
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64s<'a, I: IntoIterator<Item = &'a f64>>(&mut self, vs: I) {
        for v in vs {
            self.f64(*v);
        }
    }

    /// Appends the CRC32 of everything written so far.
    pub fn finish(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.buf);
        self.buf.extend_from_slice(&crc.to_le_bytes());
        self.buf
    }

    pub fn finish_without_crc(self) -> Vec<u8> {
        self.buf
    }
}

pub(crate) struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    /// Checks magic, version and (when `crc`) the CRC32 trailer, returning a
    /// reader over the payload that follows the version field.
    pub fn open(data: &'a [u8], magic: &[u8], version: u16, crc: bool, what: &'static str) -> Result<Self> {
        if data.len() < magic.len() || &data[..magic.len()] != magic {
            return Err(Error::Format(format!("not a {what} file (bad magic)")));
        }
        let body_end = if crc {
            if data.len() < magic.len() + 2 + 4 {
                return Err(Error::Corrupt(format!("{what} file is truncated")));
            }
            let end = data.len() - 4;
            let stored = u32::from_le_bytes(data[end..].try_into().unwrap());
            if crc32fast::hash(&data[..end]) != stored {
                return Err(Error::Corrupt(format!("{what} checksum mismatch (truncated or modified file)")));
            }
            end
        } else {
            data.len()
        };
        let mut r = Reader {
            data: &data[..body_end],
            pos: magic.len(),
            what,
        };
        let found = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
        if found != version {
            return Err(Error::Format(format!("unsupported {what} version {found} (expected {version})")));
        }
        Ok(r)
    }

    fn truncated(&self) -> Error {
        Error::Corrupt(format!("{} file is truncated at byte {}", self.what, self.pos))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or_else(|| self.truncated())?;
        if end > self.data.len() {
            return Err(self.truncated());
        }
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| Error::Format(format!("{} header value {v} is out of range", self.what)))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = n.checked_mul(8).ok_or_else(|| self.truncated())?;
        let raw = self.take(bytes)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    pub fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(Error::Format(format!("{} trailing bytes in {} file", self.remaining(), self.what)));
        }
        Ok(())
    }
}

/// Product of header sizes, failing instead of overflowing.
pub(crate) fn checked_len(parts: &[usize], what: &str) -> Result<usize> {
    parts
        .iter()
        .try_fold(1usize, |acc, &p| acc.checked_mul(p))
        .ok_or_else(|| Error::Format(format!("{what} header sizes overflow")))
}
