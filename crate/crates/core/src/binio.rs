//! Little-endian encoding helpers for the on-disk formats.

pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self { buf: Vec::new() }
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32s(&mut self, values: &[f32]) {
        self.buf.reserve(values.len() * 4);
        for v in values {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    pub fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.bytes(s.as_bytes());
    }

    /// Appends a `tag` + `u64 length` header followed by the section body.
    pub fn section(&mut self, tag: &[u8; 4], body: Writer) {
        self.bytes(tag);
        self.u64(body.buf.len() as u64);
        self.bytes(&body.buf);
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

pub(crate) type ReadResult<T> = std::result::Result<T, String>;

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> ReadResult<&'a [u8]> {
        if self.remaining() < n {
            return Err(format!(
                "unexpected end of data at byte {} (need {n}, have {})",
                self.pos,
                self.remaining()
            ));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u32(&mut self) -> ReadResult<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> ReadResult<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn len_u64(&mut self) -> ReadResult<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| format!("length {v} out of range"))
    }

    pub fn f32s(&mut self, n: usize) -> ReadResult<Vec<f32>> {
        let bytes = n
            .checked_mul(4)
            .ok_or_else(|| format!("element count {n} overflows"))?;
        let raw = self.take(bytes)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn str(&mut self) -> ReadResult<String> {
        let n = self.u32()? as usize;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec()).map_err(|e| format!("invalid UTF-8: {e}"))
    }

    pub fn expect(&mut self, magic: &[u8]) -> ReadResult<()> {
        let got = self.take(magic.len())?;
        if got != magic {
            return Err(format!(
                "bad magic: expected {:?}, found {:?}",
                String::from_utf8_lossy(magic),
                String::from_utf8_lossy(got)
            ));
        }
        Ok(())
    }

    /// Reads a section header with the given tag and returns a reader over
    /// exactly its body.
    pub fn section(&mut self, tag: &[u8; 4]) -> ReadResult<Reader<'a>> {
        self.expect(tag)?;
        let len = self.len_u64()?;
        Ok(Reader::new(self.take(len)?))
    }

    pub fn finish(&self) -> ReadResult<()> {
        if self.remaining() != 0 {
            return Err(format!("{} trailing bytes", self.remaining()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncated_reads_fail() {
        let mut w = Writer::new();
        w.u32(7);
        w.f32s(&[1.0, -2.5]);
        let bytes = w.finish();
        let mut r = Reader::new(&bytes[..bytes.len() - 1]);
        assert_eq!(r.u32().unwrap(), 7);
        assert!(r.f32s(2).is_err());
    }

    #[test]
    fn sections_are_length_delimited() {
        let mut body = Writer::new();
        body.str("héllo");
        let mut w = Writer::new();
        w.section(b"TEST", body);
        w.u32(1);
        let bytes = w.finish();
        let mut r = Reader::new(&bytes);
        let mut s = r.section(b"TEST").unwrap();
        assert_eq!(s.str().unwrap(), "héllo");
        s.finish().unwrap();
        assert_eq!(r.u32().unwrap(), 1);
        r.finish().unwrap();
    }
}
