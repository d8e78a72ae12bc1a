//! On-disk cache of kernel profile tables.
//!
//! Layout, all little endian: magic, format version, `ell`, table size,
//! nodes per profile, profile count, the ratio of each profile, the node
//! values, and a trailing SHA-256 of everything before it. A file that fails
//! any check is rebuilt and overwritten, never trusted.

use std::fs;
use std::path::Path;

use anikde_core::KernelBank;
use sha2::{Digest, Sha256};

use crate::error::CliResult;
use crate::io::atomic_write;

const MAGIC: &[u8; 8] = b"ANIKDEKB";
const FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

/// How a bank was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CacheStatus {
    /// No cache path configured.
    Disabled,
    Hit,
    /// Missing, corrupt, mismatched or too small; rebuilt and rewritten.
    Rebuilt,
}

pub fn encode(bank: &KernelBank) -> Vec<u8> {
    let profiles = bank.profiles();
    let nodes = profiles[0].table().values().len();
    let mut out = Vec::with_capacity(48 + profiles.len() * (8 + 8 * nodes) + DIGEST_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(bank.ell() as u32).to_le_bytes());
    out.extend_from_slice(&(bank.table_size() as u64).to_le_bytes());
    out.extend_from_slice(&(nodes as u64).to_le_bytes());
    out.extend_from_slice(&(profiles.len() as u32).to_le_bytes());
    for p in profiles {
        out.extend_from_slice(&p.ratio().to_le_bytes());
    }
    for p in profiles {
        for v in p.table().values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Option<&[u8]> {
        if self.bytes.len() < n {
            return None;
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Some(head)
    }

    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }

    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }

    fn f64(&mut self) -> Option<f64> {
        Some(f64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
}

/// Decodes a cached bank if it is intact, matches `ell` and `table_size`
/// and covers `max_exponent`. Extra ratio tables are dropped.
pub fn decode(bytes: &[u8], ell: usize, table_size: usize, max_exponent: u8) -> Option<KernelBank> {
    if bytes.len() < DIGEST_LEN {
        return None;
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return None;
    }
    let mut r = Reader { bytes: body };
    if r.take(MAGIC.len())? != MAGIC || r.u32()? != FORMAT_VERSION {
        return None;
    }
    if r.u32()? as usize != ell || r.u64()? as usize != table_size {
        return None;
    }
    let nodes = usize::try_from(r.u64()?).ok()?;
    let count = r.u32()? as usize;
    if count <= max_exponent as usize || count > 64 {
        return None;
    }
    let mut ratio = 1.0;
    for _ in 0..count {
        if r.f64()? != ratio {
            return None;
        }
        ratio *= 0.5;
    }
    if r.bytes.len() != count.checked_mul(nodes)?.checked_mul(8)? {
        return None;
    }
    let values: Vec<Vec<f64>> = (0..=max_exponent as usize)
        .map(|_| (0..nodes).map(|_| r.f64()).collect::<Option<Vec<f64>>>())
        .collect::<Option<_>>()?;
    if values.iter().flatten().any(|v| !v.is_finite()) {
        return None;
    }
    KernelBank::from_profile_values(ell, table_size, values).ok()
}

/// Loads the bank from `path` or builds it, rewriting the cache on a miss.
pub fn load_or_build(
    path: Option<&Path>,
    ell: usize,
    table_size: usize,
    max_exponent: u8,
) -> CliResult<(KernelBank, CacheStatus)> {
    let Some(path) = path else {
        return Ok((KernelBank::new(ell, table_size, max_exponent)?, CacheStatus::Disabled));
    };
    if let Ok(bytes) = fs::read(path) {
        if let Some(bank) = decode(&bytes, ell, table_size, max_exponent) {
            return Ok((bank, CacheStatus::Hit));
        }
    }
    let bank = KernelBank::new(ell, table_size, max_exponent)?;
    atomic_write(path, &encode(&bank))?;
    Ok((bank, CacheStatus::Rebuilt))
}
