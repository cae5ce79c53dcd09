//! Little-endian binary containers with a magic tag and a format version.
//!
//! Every sidecar written by this crate starts with four magic bytes followed
//! by a `u32` version. Readers refuse unknown magic or newer versions.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

pub struct BinWriter<W: Write> {
    inner: W,
}

impl<W: Write> BinWriter<W> {
    pub fn new(mut inner: W, magic: &[u8; 4], version: u32) -> Result<Self> {
        inner.write_all(magic)?;
        inner.write_u32::<LittleEndian>(version)?;
        Ok(Self { inner })
    }

    pub fn u32(&mut self, v: u32) -> Result<()> {
        Ok(self.inner.write_u32::<LittleEndian>(v)?)
    }

    pub fn u64(&mut self, v: u64) -> Result<()> {
        Ok(self.inner.write_u64::<LittleEndian>(v)?)
    }

    pub fn f64(&mut self, v: f64) -> Result<()> {
        Ok(self.inner.write_f64::<LittleEndian>(v)?)
    }

    pub fn str(&mut self, s: &str) -> Result<()> {
        self.u64(s.len() as u64)?;
        Ok(self.inner.write_all(s.as_bytes())?)
    }

    pub fn f64s(&mut self, values: &[f64]) -> Result<()> {
        self.u64(values.len() as u64)?;
        for &v in values {
            self.f64(v)?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

pub struct BinReader<R: Read> {
    inner: R,
    what: &'static str,
    pub version: u32,
}

/// Upper bound on any single length prefix, to fail fast on corrupt input.
const MAX_LEN: u64 = 1 << 34;

impl<R: Read> BinReader<R> {
    pub fn new(
        mut inner: R,
        magic: &[u8; 4],
        max_version: u32,
        what: &'static str,
    ) -> Result<Self> {
        let mut got = [0u8; 4];
        inner
            .read_exact(&mut got)
            .map_err(|_| Error::format(what, "truncated header"))?;
        if &got != magic {
            return Err(Error::format(what, format!("bad magic {got:?}")));
        }
        let version = inner.read_u32::<LittleEndian>()?;
        if version == 0 || version > max_version {
            return Err(Error::format(
                what,
                format!("format version {version} not supported (max {max_version})"),
            ));
        }
        Ok(Self {
            inner,
            what,
            version,
        })
    }

    fn truncated(&self) -> Error {
        Error::format(self.what, "unexpected end of data")
    }

    pub fn u32(&mut self) -> Result<u32> {
        self.inner
            .read_u32::<LittleEndian>()
            .map_err(|_| self.truncated())
    }

    pub fn u64(&mut self) -> Result<u64> {
        self.inner
            .read_u64::<LittleEndian>()
            .map_err(|_| self.truncated())
    }

    pub fn f64(&mut self) -> Result<f64> {
        self.inner
            .read_f64::<LittleEndian>()
            .map_err(|_| self.truncated())
    }

    pub fn read_len(&mut self) -> Result<usize> {
        let n = self.u64()?;
        if n > MAX_LEN {
            return Err(Error::format(self.what, format!("length {n} too large")));
        }
        Ok(n as usize)
    }

    pub fn str(&mut self) -> Result<String> {
        let n = self.read_len()?;
        let mut buf = vec![0u8; n];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| self.truncated())?;
        String::from_utf8(buf).map_err(|e| Error::format(self.what, e.to_string()))
    }

    pub fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.read_len()?;
        let mut out = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            out.push(self.f64()?);
        }
        Ok(out)
    }

    /// Errors unless the stream is exhausted.
    pub fn expect_end(mut self) -> Result<()> {
        let mut probe = [0u8; 1];
        match self.inner.read(&mut probe)? {
            0 => Ok(()),
            _ => Err(Error::format(self.what, "trailing bytes after payload")),
        }
    }
}
