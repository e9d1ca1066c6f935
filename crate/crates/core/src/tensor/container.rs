//! Flat binary container for named tensors.
//!
//! Layout: magic `MLRN`, one version byte (0x01), then entries until EOF.
//! Each entry is a u32-LE length-prefixed UTF-8 name, four u64-LE shape
//! extents `(n, c, h, w)`, and `n*c*h*w` f64-LE values in row-major order.

use std::io::{self, Read, Write};

use thiserror::Error;

use super::Shape;

pub const MAGIC: [u8; 4] = *b"MLRN";
pub const FORMAT_VERSION: u8 = 0x01;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic bytes (not an MLRN parameter container)")]
    BadMagic,
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u8),
    #[error("truncated container while reading {0}")]
    Truncated(&'static str),
    #[error("entry name is not valid UTF-8")]
    BadName,
}

/// One serialized tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Shape,
    pub values: Vec<f64>,
}

pub fn write_named_tensors<W: Write>(w: &mut W, entries: &[NamedTensor]) -> io::Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&[FORMAT_VERSION])?;
    for entry in entries {
        let name = entry.name.as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        for extent in [entry.shape.n, entry.shape.c, entry.shape.h, entry.shape.w] {
            w.write_all(&(extent as u64).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(entry.values.len() * 8);
        for v in &entry.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_named_tensors<R: Read>(r: &mut R) -> Result<Vec<NamedTensor>, ContainerError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| ContainerError::Truncated("magic"))?;
    if magic != MAGIC {
        return Err(ContainerError::BadMagic);
    }
    let mut version = [0u8; 1];
    r.read_exact(&mut version)
        .map_err(|_| ContainerError::Truncated("version"))?;
    if version[0] != FORMAT_VERSION {
        return Err(ContainerError::UnsupportedVersion(version[0]));
    }

    let mut entries = Vec::new();
    loop {
        let mut len_buf = [0u8; 4];
        match r.read_exact(&mut len_buf) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
        let name_len = u32::from_le_bytes(len_buf) as usize;
        let mut name_buf = vec![0u8; name_len];
        r.read_exact(&mut name_buf)
            .map_err(|_| ContainerError::Truncated("name"))?;
        let name = String::from_utf8(name_buf).map_err(|_| ContainerError::BadName)?;

        let mut extents = [0usize; 4];
        for extent in extents.iter_mut() {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)
                .map_err(|_| ContainerError::Truncated("shape"))?;
            *extent = u64::from_le_bytes(b) as usize;
        }
        let shape = Shape::new(extents[0], extents[1], extents[2], extents[3]);

        let count = shape.count();
        let mut raw = vec![0u8; count * 8];
        r.read_exact(&mut raw)
            .map_err(|_| ContainerError::Truncated("values"))?;
        let values = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        entries.push(NamedTensor {
            name,
            shape,
            values,
        });
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_entries() {
        let entries = vec![
            NamedTensor {
                name: "coarse.weight".into(),
                shape: Shape::new(2, 3, 3, 3),
                values: (0..54).map(|i| i as f64 * 0.25 - 3.0).collect(),
            },
            NamedTensor {
                name: "coarse.bias".into(),
                shape: Shape::new(1, 2, 1, 1),
                values: vec![0.5, -0.5],
            },
        ];
        let mut buf = Vec::new();
        write_named_tensors(&mut buf, &entries).unwrap();
        assert_eq!(&buf[..4], b"MLRN");
        assert_eq!(buf[4], 0x01);
        let back = read_named_tensors(&mut buf.as_slice()).unwrap();
        assert_eq!(back, entries);
    }

    #[test]
    fn rejects_foreign_files() {
        let mut data: &[u8] = b"PNGX\x01";
        assert!(matches!(
            read_named_tensors(&mut data),
            Err(ContainerError::BadMagic)
        ));
        let mut short: &[u8] = b"ML";
        assert!(read_named_tensors(&mut short).is_err());
        let mut bad_version: &[u8] = b"MLRN\x02";
        assert!(matches!(
            read_named_tensors(&mut bad_version),
            Err(ContainerError::UnsupportedVersion(2))
        ));
    }
}
