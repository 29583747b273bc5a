//! Little-endian binary formats for descriptor (`VPRD`) and correspondence
//! (`VPRC`) files.
//!
//! ```text
//! VPRD: magic "VPRD" | u16 version | str method_tag | u8 subset ('A'|'B')
//!       | u32 N | u32 D | N x str image_id | N*D x f32 (row-major)
//! VPRC: magic "VPRC" | u16 version | str image_id_a | str image_id_b
//!       | u32 M | M x 4 x f32 (x_a, y_a, x_b, y_b)
//! str:  u16 byte length | UTF-8 bytes
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::{CorrespondenceSet, DescriptorSet, Subset};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

pub const DESCRIPTOR_MAGIC: &[u8; 4] = b"VPRD";
pub const CORRESPONDENCE_MAGIC: &[u8; 4] = b"VPRC";
pub const FORMAT_VERSION: u16 = 1;

struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    fn new(magic: &[u8; 4]) -> Self {
        let mut buf = Vec::new();
        buf.extend_from_slice(magic);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        Encoder { buf }
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u32(&mut self, v: usize, what: &str) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::Config(format!("{what} {v} exceeds u32")))?;
        self.buf.extend_from_slice(&v.to_le_bytes());
        Ok(())
    }

    fn str(&mut self, s: &str) -> Result<()> {
        let len = u16::try_from(s.len())
            .map_err(|_| Error::Config(format!("string of {} bytes exceeds u16 length", s.len())))?;
        self.buf.extend_from_slice(&len.to_le_bytes());
        self.buf.extend_from_slice(s.as_bytes());
        Ok(())
    }

    fn f32s<'a>(&mut self, values: impl IntoIterator<Item = &'a f32>) {
        for v in values {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Decoder<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    fn new(buf: &'a [u8], magic: &[u8; 4]) -> Result<Self> {
        if buf.len() < 6 {
            return Err(Error::Truncated(format!("{} byte header", buf.len())));
        }
        if &buf[..4] != magic {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&buf[..4]),
                String::from_utf8_lossy(magic)
            )));
        }
        let version = u16::from_le_bytes([buf[4], buf[5]]);
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        Ok(Decoder { buf, pos: 6 })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| {
                Error::Truncated(format!(
                    "need {n} bytes at offset {}, {} available",
                    self.pos,
                    self.buf.len() - self.pos
                ))
            })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn str(&mut self) -> Result<String> {
        let len = self.u16()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| Error::Format("invalid UTF-8 string".into()))
    }

    /// Reads exactly `count` floats, which must end the buffer.
    fn trailing_f32s(&mut self, count: usize) -> Result<Vec<f32>> {
        let remaining = self.buf.len() - self.pos;
        let expected = count
            .checked_mul(4)
            .ok_or_else(|| Error::Format("payload size overflows".into()))?;
        if remaining != expected {
            return Err(Error::Truncated(format!(
                "payload has {remaining} bytes, expected {expected}"
            )));
        }
        let bytes = self.take(expected)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }
}

fn read_all(mut source: impl Read) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    source
        .read_to_end(&mut buf)
        .map_err(|e| Error::io("<stream>", e))?;
    Ok(buf)
}

pub(crate) fn encode_descriptors(set: &DescriptorSet) -> Result<Vec<u8>> {
    let mut enc = Encoder::new(DESCRIPTOR_MAGIC);
    enc.str(set.method_tag())?;
    enc.u8(set.subset().as_byte());
    enc.u32(set.len(), "descriptor count")?;
    enc.u32(set.dim(), "descriptor dimension")?;
    for id in set.image_ids() {
        enc.str(id)?;
    }
    enc.f32s(set.data());
    Ok(enc.buf)
}

pub(crate) fn decode_descriptors(buf: &[u8]) -> Result<DescriptorSet> {
    let mut dec = Decoder::new(buf, DESCRIPTOR_MAGIC)?;
    let method_tag = dec.str()?;
    let subset_byte = dec.u8()?;
    let subset = Subset::from_byte(subset_byte)
        .ok_or_else(|| Error::Format(format!("invalid subset byte 0x{subset_byte:02x}")))?;
    let n = dec.u32()?;
    let dim = dec.u32()?;
    let mut image_ids = Vec::with_capacity(n.min(1 << 16));
    for _ in 0..n {
        image_ids.push(dec.str()?);
    }
    let count = n
        .checked_mul(dim)
        .ok_or_else(|| Error::Format("N*D overflows".into()))?;
    let data = dec.trailing_f32s(count)?;
    DescriptorSet::new(subset, method_tag, image_ids, dim, data)
}

pub fn write_descriptor_file(set: &DescriptorSet, mut sink: impl Write) -> Result<()> {
    let bytes = encode_descriptors(set)?;
    sink.write_all(&bytes).map_err(|e| Error::io("<stream>", e))
}

pub fn read_descriptor_file(source: impl Read) -> Result<DescriptorSet> {
    decode_descriptors(&read_all(source)?)
}

pub fn write_descriptor_path(set: &DescriptorSet, path: &Path) -> Result<()> {
    write_atomic(path, &encode_descriptors(set)?)
}

pub fn read_descriptor_path(path: &Path) -> Result<DescriptorSet> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_descriptors(&bytes).map_err(|e| annotate(e, path))
}

pub(crate) fn encode_correspondences(set: &CorrespondenceSet) -> Result<Vec<u8>> {
    let mut enc = Encoder::new(CORRESPONDENCE_MAGIC);
    enc.str(set.image_id_a())?;
    enc.str(set.image_id_b())?;
    enc.u32(set.len(), "correspondence count")?;
    enc.f32s(set.points().iter().flatten());
    Ok(enc.buf)
}

pub(crate) fn decode_correspondences(buf: &[u8]) -> Result<CorrespondenceSet> {
    let mut dec = Decoder::new(buf, CORRESPONDENCE_MAGIC)?;
    let a = dec.str()?;
    let b = dec.str()?;
    let m = dec.u32()?;
    let count = m
        .checked_mul(4)
        .ok_or_else(|| Error::Format("M*4 overflows".into()))?;
    let flat = dec.trailing_f32s(count)?;
    let points = flat
        .chunks_exact(4)
        .map(|c| [c[0], c[1], c[2], c[3]])
        .collect();
    CorrespondenceSet::new(a, b, points)
}

pub fn write_correspondence_file(set: &CorrespondenceSet, mut sink: impl Write) -> Result<()> {
    let bytes = encode_correspondences(set)?;
    sink.write_all(&bytes).map_err(|e| Error::io("<stream>", e))
}

pub fn read_correspondence_file(source: impl Read) -> Result<CorrespondenceSet> {
    decode_correspondences(&read_all(source)?)
}

pub fn write_correspondence_path(set: &CorrespondenceSet, path: &Path) -> Result<()> {
    write_atomic(path, &encode_correspondences(set)?)
}

pub fn read_correspondence_path(path: &Path) -> Result<CorrespondenceSet> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_correspondences(&bytes).map_err(|e| annotate(e, path))
}

fn annotate(err: Error, path: &Path) -> Error {
    let p = path.display();
    match err {
        Error::Format(m) => Error::Format(format!("{p}: {m}")),
        Error::Truncated(m) => Error::Truncated(format!("{p}: {m}")),
        Error::Integrity(m) => Error::Integrity(format!("{p}: {m}")),
        Error::DegenerateDescriptor(m) => Error::DegenerateDescriptor(format!("{p}: {m}")),
        other => other,
    }
}
