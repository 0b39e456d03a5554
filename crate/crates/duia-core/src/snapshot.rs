//! Little-endian binary framing for snapshots: a growable writer, a
//! checked reader that reports byte offsets, and CRC32 integrity trailers.
//! Readers never hand back partially-parsed structures; any failure surfaces
//! as a typed [`SnapshotError`].

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("bad magic at byte {offset}: expected {expected:?}, found {found:?}")]
    BadMagic {
        offset: usize,
        expected: String,
        found: String,
    },
    #[error("unsupported format version {found} (expected {expected}) at byte {offset}")]
    Version {
        offset: usize,
        expected: u32,
        found: u32,
    },
    #[error("truncated input at byte {offset}: wanted {wanted} more bytes, {available} available")]
    Truncated {
        offset: usize,
        wanted: usize,
        available: usize,
    },
    #[error("checksum mismatch: expected {expected:#010x}, actual {actual:#010x}")]
    Checksum { expected: u32, actual: u32 },
    #[error("invalid {what} at byte {offset}")]
    Invalid { offset: usize, what: String },
    #[error("{0} trailing bytes after end of snapshot")]
    Trailing(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// CRC-32 (IEEE, reflected polynomial 0xEDB88320), table-driven.
pub fn crc32(data: &[u8]) -> u32 {
    static TABLE: std::sync::OnceLock<[u32; 256]> = std::sync::OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut t = [0u32; 256];
        for (n, slot) in t.iter_mut().enumerate() {
            let mut c = n as u32;
            for _ in 0..8 {
                c = if c & 1 != 0 { 0xEDB8_8320 ^ (c >> 1) } else { c >> 1 };
            }
            *slot = c;
        }
        t
    });
    let mut c = 0xFFFF_FFFFu32;
    for &b in data {
        c = table[((c ^ b as u32) & 0xFF) as usize] ^ (c >> 8);
    }
    c ^ 0xFFFF_FFFF
}

#[derive(Debug, Default)]
pub struct ByteWriter {
    buf: Vec<u8>,
}

impl ByteWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put_bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn put_u8(&mut self, x: u8) {
        self.buf.push(x);
    }

    pub fn put_u32(&mut self, x: u32) {
        self.buf.extend_from_slice(&x.to_le_bytes());
    }

    pub fn put_u64(&mut self, x: u64) {
        self.buf.extend_from_slice(&x.to_le_bytes());
    }

    pub fn put_f64(&mut self, x: f64) {
        self.buf.extend_from_slice(&x.to_le_bytes());
    }

    pub fn put_f64s(&mut self, xs: &[f64]) {
        for &x in xs {
            self.put_f64(x);
        }
    }

    pub fn put_u64s(&mut self, xs: &[u64]) {
        for &x in xs {
            self.put_u64(x);
        }
    }

    /// Length-prefixed byte blob.
    pub fn put_blob(&mut self, b: &[u8]) {
        self.put_u64(b.len() as u64);
        self.put_bytes(b);
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    /// Appends the CRC32 of everything written so far and returns the buffer.
    pub fn finish_with_crc(mut self) -> Vec<u8> {
        let crc = crc32(&self.buf);
        self.put_u32(crc);
        self.buf
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }
}

#[derive(Debug)]
pub struct ByteReader<'a> {
    data: &'a [u8],
    at: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        ByteReader { data, at: 0 }
    }

    pub fn offset(&self) -> usize {
        self.at
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.at
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], SnapshotError> {
        if self.remaining() < n {
            return Err(SnapshotError::Truncated {
                offset: self.at,
                wanted: n,
                available: self.remaining(),
            });
        }
        let out = &self.data[self.at..self.at + n];
        self.at += n;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, SnapshotError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, SnapshotError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, SnapshotError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64, SnapshotError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>, SnapshotError> {
        let raw = self.take(n * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn u64s(&mut self, n: usize) -> Result<Vec<u64>, SnapshotError> {
        let raw = self.take(n * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn blob(&mut self) -> Result<&'a [u8], SnapshotError> {
        let n = self.u64()? as usize;
        self.take(n)
    }

    pub fn expect_magic(&mut self, magic: &[u8]) -> Result<(), SnapshotError> {
        let offset = self.at;
        let found = self.take(magic.len())?;
        if found != magic {
            return Err(SnapshotError::BadMagic {
                offset,
                expected: String::from_utf8_lossy(magic).into_owned(),
                found: String::from_utf8_lossy(found).into_owned(),
            });
        }
        Ok(())
    }

    pub fn expect_version(&mut self, expected: u32) -> Result<(), SnapshotError> {
        let offset = self.at;
        let found = self.u32()?;
        if found != expected {
            return Err(SnapshotError::Version {
                offset,
                expected,
                found,
            });
        }
        Ok(())
    }

    /// Verifies that the final 4 bytes of the whole input are the CRC32 of
    /// everything before them, and that the cursor sits exactly at that
    /// trailer.
    pub fn verify_crc_trailer(&mut self) -> Result<(), SnapshotError> {
        self.verify_crc_since(0)?;
        if self.remaining() != 0 {
            return Err(SnapshotError::Trailing(self.remaining()));
        }
        Ok(())
    }

    /// Reads a u32 CRC and checks it against the bytes from `start` up to the
    /// cursor. Used for segments embedded inside a larger snapshot.
    pub fn verify_crc_since(&mut self, start: usize) -> Result<(), SnapshotError> {
        let expected = crc32(&self.data[start..self.at]);
        let actual = self.u32()?;
        if expected != actual {
            return Err(SnapshotError::Checksum { expected, actual });
        }
        Ok(())
    }
}
