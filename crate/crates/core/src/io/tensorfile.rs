//! Minimal binary tensor container, bit-exact and trivially parseable.
//!
//! A *record* is:
//!
//! ```text
//! magic   4 bytes  "MTSR"
//! version u8       1
//! dtype   u8       1 = float32, 2 = uint8 bitmask (values 0/1)
//! ndim    u8
//! dims    ndim x u32 little-endian
//! payload product(dims) x dtype-size bytes, row-major little-endian
//! ```
//!
//! A single-tensor file is exactly one record. A checkpoint-style container
//! is a sequence of records followed by a trailing named index:
//!
//! ```text
//! count   u32 little-endian
//! entry   count x { name_len u16, name bytes, offset u64 }   (record start)
//! ```
//!
//! Records are self-delimiting (the header determines the payload length),
//! so the reader walks records until the next four bytes are not the magic,
//! then reads the index. Everything is validated on read; malformed input is
//! rejected, never guessed at.

use crate::error::{MarError, Result};
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: [u8; 4] = *b"MTSR";
pub const VERSION: u8 = 1;

const DTYPE_F32: u8 = 1;
const DTYPE_BITMASK: u8 = 2;
const MAX_NDIM: usize = 8;

/// One tensor payload.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorRecord {
    F32 { dims: Vec<u32>, data: Vec<f32> },
    Bitmask { dims: Vec<u32>, data: Vec<bool> },
}

impl TensorRecord {
    pub fn dims(&self) -> &[u32] {
        match self {
            TensorRecord::F32 { dims, .. } => dims,
            TensorRecord::Bitmask { dims, .. } => dims,
        }
    }

    pub fn numel(&self) -> usize {
        self.dims().iter().map(|&d| d as usize).product()
    }

    pub fn as_f32(&self) -> Result<(&[u32], &[f32])> {
        match self {
            TensorRecord::F32 { dims, data } => Ok((dims, data)),
            _ => Err(MarError::format("expected a float32 record".into())),
        }
    }

    pub fn as_bitmask(&self) -> Result<(&[u32], &[bool])> {
        match self {
            TensorRecord::Bitmask { dims, data } => Ok((dims, data)),
            _ => Err(MarError::format("expected a bitmask record".into())),
        }
    }

    fn validate(&self) -> Result<()> {
        let dims = self.dims();
        if dims.is_empty() || dims.len() > MAX_NDIM {
            return Err(MarError::format(format!(
                "ndim {} out of range 1..={MAX_NDIM}",
                dims.len()
            )));
        }
        let n: usize = self.numel();
        let len = match self {
            TensorRecord::F32 { data, .. } => data.len(),
            TensorRecord::Bitmask { data, .. } => data.len(),
        };
        if n != len {
            return Err(MarError::format(format!(
                "dims {:?} imply {n} elements, payload has {len}",
                dims
            )));
        }
        Ok(())
    }

    fn write_to(&self, out: &mut impl Write) -> Result<()> {
        self.validate()?;
        out.write_all(&MAGIC)?;
        out.write_all(&[VERSION])?;
        let dtype = match self {
            TensorRecord::F32 { .. } => DTYPE_F32,
            TensorRecord::Bitmask { .. } => DTYPE_BITMASK,
        };
        out.write_all(&[dtype])?;
        let dims = self.dims();
        out.write_all(&[dims.len() as u8])?;
        for &d in dims {
            out.write_all(&d.to_le_bytes())?;
        }
        match self {
            TensorRecord::F32 { data, .. } => {
                let mut buf = Vec::with_capacity(data.len() * 4);
                for v in data {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
                out.write_all(&buf)?;
            }
            TensorRecord::Bitmask { data, .. } => {
                let buf: Vec<u8> = data.iter().map(|&b| b as u8).collect();
                out.write_all(&buf)?;
            }
        }
        Ok(())
    }

    /// Serialized byte length of this record.
    fn byte_len(&self) -> u64 {
        let payload = match self {
            TensorRecord::F32 { data, .. } => data.len() * 4,
            TensorRecord::Bitmask { data, .. } => data.len(),
        };
        (4 + 1 + 1 + 1 + 4 * self.dims().len() + payload) as u64
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(MarError::format(format!(
                "truncated file: need {n} bytes at offset {}",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn peek_magic(&self) -> bool {
        self.buf.len() >= self.pos + 4 && self.buf[self.pos..self.pos + 4] == MAGIC
    }

    fn at_end(&self) -> bool {
        self.pos == self.buf.len()
    }
}

fn read_record(cur: &mut Cursor) -> Result<TensorRecord> {
    let magic = cur.take(4)?;
    if magic != MAGIC {
        return Err(MarError::format(format!("bad magic {magic:02x?}")));
    }
    let version = cur.u8()?;
    if version != VERSION {
        return Err(MarError::format(format!("unsupported version {version}")));
    }
    let dtype = cur.u8()?;
    let ndim = cur.u8()? as usize;
    if ndim == 0 || ndim > MAX_NDIM {
        return Err(MarError::format(format!("ndim {ndim} out of range")));
    }
    let mut dims = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        dims.push(cur.u32()?);
    }
    let numel: usize = dims.iter().map(|&d| d as usize).product();
    match dtype {
        DTYPE_F32 => {
            let raw = cur.take(numel * 4)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            Ok(TensorRecord::F32 { dims, data })
        }
        DTYPE_BITMASK => {
            let raw = cur.take(numel)?;
            let mut data = Vec::with_capacity(numel);
            for &b in raw {
                match b {
                    0 => data.push(false),
                    1 => data.push(true),
                    other => {
                        return Err(MarError::format(format!(
                            "bitmask byte {other} is not 0 or 1"
                        )))
                    }
                }
            }
            Ok(TensorRecord::Bitmask { dims, data })
        }
        other => Err(MarError::format(format!("unknown dtype code {other}"))),
    }
}

/// Write a single-tensor file (one record, no index).
pub fn write_single(path: &Path, rec: &TensorRecord) -> Result<()> {
    let mut buf = Vec::new();
    rec.write_to(&mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

/// Read a single-tensor file; trailing bytes are rejected.
pub fn read_single(path: &Path) -> Result<TensorRecord> {
    let buf = read_file(path)?;
    let mut cur = Cursor { buf: &buf, pos: 0 };
    let rec = read_record(&mut cur)?;
    if !cur.at_end() {
        return Err(MarError::format(format!(
            "{} trailing bytes after the record (container file?)",
            buf.len() - cur.pos
        )));
    }
    Ok(rec)
}

/// Write a named-tensor container: records in order, then the index.
pub fn write_container(path: &Path, entries: &[(String, TensorRecord)]) -> Result<()> {
    for (name, _) in entries {
        if name.len() > u16::MAX as usize {
            return Err(MarError::format(format!("name too long: {name}")));
        }
    }
    let mut buf = Vec::new();
    let mut offsets = Vec::with_capacity(entries.len());
    let mut offset = 0u64;
    for (_, rec) in entries {
        offsets.push(offset);
        rec.write_to(&mut buf)?;
        offset += rec.byte_len();
    }
    buf.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for ((name, _), off) in entries.iter().zip(&offsets) {
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&off.to_le_bytes());
    }
    std::fs::write(path, buf)?;
    Ok(())
}

/// Read a named-tensor container, validating the index offsets.
pub fn read_container(path: &Path) -> Result<Vec<(String, TensorRecord)>> {
    let buf = read_file(path)?;
    let mut cur = Cursor { buf: &buf, pos: 0 };
    let mut records = Vec::new();
    let mut starts = Vec::new();
    while cur.peek_magic() {
        starts.push(cur.pos as u64);
        records.push(read_record(&mut cur)?);
    }
    if records.is_empty() {
        return Err(MarError::format("no records in container".into()));
    }
    let count = cur.u32()? as usize;
    if count != records.len() {
        return Err(MarError::format(format!(
            "index lists {count} tensors, file holds {}",
            records.len()
        )));
    }
    let mut names = Vec::with_capacity(count);
    for i in 0..count {
        let len = cur.u16()? as usize;
        let name = String::from_utf8(cur.take(len)?.to_vec())
            .map_err(|_| MarError::format("index name is not utf-8".into()))?;
        let off = cur.u64()?;
        if off != starts[i] {
            return Err(MarError::format(format!(
                "index offset {off} for '{name}' does not match record start {}",
                starts[i]
            )));
        }
        names.push(name);
    }
    if !cur.at_end() {
        return Err(MarError::format("trailing bytes after index".into()));
    }
    Ok(names.into_iter().zip(records).collect())
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut f = std::fs::File::open(path).map_err(|e| {
        MarError::format(format!("cannot open {}: {e}", path.display()))
    })?;
    let mut buf = Vec::new();
    f.read_to_end(&mut buf)?;
    Ok(buf)
}

/// Find a named record in a loaded container.
pub fn find<'a>(
    entries: &'a [(String, TensorRecord)],
    name: &str,
) -> Result<&'a TensorRecord> {
    entries
        .iter()
        .find(|(n, _)| n == name)
        .map(|(_, r)| r)
        .ok_or_else(|| MarError::format(format!("tensor '{name}' not found")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("mtsr_tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn single_roundtrip() {
        let rec = TensorRecord::F32 {
            dims: vec![2, 3],
            data: vec![1.0, -2.5, 3.25, 0.0, -0.0, f32::MIN_POSITIVE],
        };
        let p = tmp("single.mtsr");
        write_single(&p, &rec).unwrap();
        let back = read_single(&p).unwrap();
        let (dims, data) = back.as_f32().unwrap();
        assert_eq!(dims, &[2, 3]);
        let (_, orig) = rec.as_f32().unwrap();
        for (a, b) in data.iter().zip(orig) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn container_roundtrip_and_lookup() {
        let entries = vec![
            (
                "weights".to_string(),
                TensorRecord::F32 {
                    dims: vec![2, 2],
                    data: vec![1.0, 2.0, 3.0, 4.0],
                },
            ),
            (
                "mask".to_string(),
                TensorRecord::Bitmask {
                    dims: vec![5],
                    data: vec![true, false, true, true, false],
                },
            ),
        ];
        let p = tmp("container.mtsr");
        write_container(&p, &entries).unwrap();
        let back = read_container(&p).unwrap();
        assert_eq!(back, entries);
        assert!(find(&back, "mask").is_ok());
        assert!(find(&back, "nope").is_err());
    }

    #[test]
    fn bad_magic_is_rejected() {
        let p = tmp("bad.mtsr");
        std::fs::write(&p, b"NOPE\x01\x01\x01\x01\x00\x00\x00").unwrap();
        assert!(matches!(read_single(&p), Err(MarError::Format(_))));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let rec = TensorRecord::F32 {
            dims: vec![4],
            data: vec![0.0; 4],
        };
        let p = tmp("trunc.mtsr");
        write_single(&p, &rec).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes.truncate(bytes.len() - 3);
        std::fs::write(&p, bytes).unwrap();
        assert!(read_single(&p).is_err());
    }

    #[test]
    fn non_binary_bitmask_is_rejected() {
        let rec = TensorRecord::Bitmask {
            dims: vec![2],
            data: vec![true, false],
        };
        let p = tmp("bits.mtsr");
        write_single(&p, &rec).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        let n = bytes.len();
        bytes[n - 1] = 7;
        std::fs::write(&p, bytes).unwrap();
        assert!(read_single(&p).is_err());
    }

    #[test]
    fn single_reader_rejects_containers() {
        let entries = vec![(
            "a".to_string(),
            TensorRecord::F32 {
                dims: vec![1],
                data: vec![1.0],
            },
        )];
        let p = tmp("reject.mtsr");
        write_container(&p, &entries).unwrap();
        assert!(read_single(&p).is_err());
    }

    proptest! {
        #[test]
        fn f32_payloads_roundtrip_bitwise(values in proptest::collection::vec(-1e6f32..1e6f32, 1..64)) {
            let rec = TensorRecord::F32 { dims: vec![values.len() as u32], data: values.clone() };
            let p = tmp(&format!("prop_{}.mtsr", values.len()));
            write_single(&p, &rec).unwrap();
            let back = read_single(&p).unwrap();
            let (_, data) = back.as_f32().unwrap();
            for (a, b) in data.iter().zip(&values) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
