//! On-disk layout shared by card images and authority secrets:
//! `magic(4) || version(1) || alg(1) || block(32) || block(32)`, 70 bytes.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

use crate::primitives::{Digest, HashAlgorithm, PrimitiveError, DIGEST_LEN};

pub const FILE_VERSION: u8 = 0x01;
pub const FILE_LEN: usize = 4 + 1 + 1 + 2 * DIGEST_LEN;

#[derive(Debug, Error)]
pub enum FileFormatError {
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { expected: [u8; 4], found: Vec<u8> },
    #[error("unknown file version {0}")]
    UnknownVersion(u8),
    #[error("unknown hash algorithm id 0x{0:02x}")]
    UnknownAlgorithm(u8),
    #[error("file truncated: {0} of {FILE_LEN} bytes")]
    Truncated(usize),
    #[error("file has {0} bytes, more than the {FILE_LEN}-byte layout")]
    TrailingData(usize),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub(crate) fn encode(magic: &[u8; 4], alg: HashAlgorithm, a: &[u8; 32], b: &[u8; 32]) -> [u8; FILE_LEN] {
    let mut out = [0u8; FILE_LEN];
    out[..4].copy_from_slice(magic);
    out[4] = FILE_VERSION;
    out[5] = alg.id();
    out[6..38].copy_from_slice(a);
    out[38..].copy_from_slice(b);
    out
}

pub(crate) fn decode(
    magic: &[u8; 4],
    bytes: &[u8],
) -> Result<(HashAlgorithm, [u8; 32], Digest), FileFormatError> {
    // Magic is checked on whatever prefix exists so that a short file with
    // the wrong magic still reports BadMagic.
    let head = &bytes[..bytes.len().min(4)];
    if head != &magic[..head.len()] {
        return Err(FileFormatError::BadMagic { expected: *magic, found: head.to_vec() });
    }
    if bytes.len() < FILE_LEN {
        return Err(FileFormatError::Truncated(bytes.len()));
    }
    if bytes.len() > FILE_LEN {
        return Err(FileFormatError::TrailingData(bytes.len()));
    }
    if bytes[4] != FILE_VERSION {
        return Err(FileFormatError::UnknownVersion(bytes[4]));
    }
    let alg = HashAlgorithm::from_id(bytes[5]).map_err(|e| match e {
        PrimitiveError::UnknownAlgorithm(id) => FileFormatError::UnknownAlgorithm(id),
        _ => unreachable!(),
    })?;
    let mut a = [0u8; 32];
    a.copy_from_slice(&bytes[6..38]);
    let b = Digest::from_slice(&bytes[38..]).expect("fixed-size slice");
    Ok((alg, a, b))
}

/// Whole-file replace: write a sibling temp file (mode 0600 on unix), fsync,
/// then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::Builder::new()
        .prefix(".dynid-")
        .suffix(".tmp")
        .tempfile_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>, FileFormatError> {
    Ok(fs::read(path)?)
}
