//! Little-endian cursor over an in-memory file, tracking offsets for errors.

use crate::error::Error;

pub(crate) struct Cursor<'a> {
    kind: &'static str,
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub fn new(kind: &'static str, buf: &'a [u8]) -> Self {
        Self { kind, buf, pos: 0 }
    }

    pub fn offset(&self) -> u64 {
        self.pos as u64
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn error(&self, offset: u64, detail: impl Into<String>) -> Error {
        Error::BinaryFormat {
            kind: self.kind,
            offset,
            detail: detail.into(),
        }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], Error> {
        if self.remaining() < n {
            return Err(self.error(
                self.offset(),
                format!("truncated: need {n} bytes, {} remain", self.remaining()),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn expect_magic(&mut self, magic: &[u8]) -> Result<(), Error> {
        let got = self.take(magic.len())?;
        if got != magic {
            return Err(self.error(0, format!("bad magic {got:?}")));
        }
        Ok(())
    }

    pub fn u8(&mut self) -> Result<u8, Error> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, Error> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, Error> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f32(&mut self) -> Result<f32, Error> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64, Error> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// A u64 count that must fit in `usize` and in the remaining bytes at
    /// `elem_size` bytes per element.
    pub fn count(&mut self, elem_size: usize) -> Result<usize, Error> {
        let at = self.offset();
        let n = self.u64()?;
        let fits = usize::try_from(n)
            .ok()
            .and_then(|n| n.checked_mul(elem_size))
            .is_some_and(|bytes| bytes <= self.remaining());
        if !fits {
            return Err(self.error(at, format!("count {n} exceeds remaining file size")));
        }
        Ok(n as usize)
    }

    pub fn finish(&self) -> Result<(), Error> {
        if self.remaining() != 0 {
            return Err(self.error(
                self.offset(),
                format!("{} trailing bytes", self.remaining()),
            ));
        }
        Ok(())
    }
}
