//! On-disk index snapshot.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes   "TRIRIDX\0"
//! version      u32       FORMAT_VERSION
//! payload_len  u64
//! payload      payload_len bytes
//! checksum     32 bytes  SHA-256 of payload
//!
//! payload:
//!   stats_hash   str
//!   n_docs       u32
//!   n_docs x     { docno: str, length: u32 }
//!   n_terms      u32
//!   n_terms x    { term: str, df: u32, df x { doc: u32, tf: u32 } }
//!
//! str = u32 byte length + UTF-8 bytes
//! ```
//!
//! Terms are written in sorted order and postings by increasing ordinal, so
//! the same index always produces the same bytes.

use std::path::Path;

use sha2::{Digest, Sha256};

use super::{DocEntry, IndexError, InvertedIndex, Posting};

pub const MAGIC: &[u8; 8] = b"TRIRIDX\0";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8;
const CHECKSUM_LEN: usize = 32;

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    put_u32(buf, s.len() as u32);
    buf.extend_from_slice(s.as_bytes());
}

impl InvertedIndex {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut payload = Vec::new();
        put_str(&mut payload, &self.stats_hash);
        put_u32(&mut payload, self.docs.len() as u32);
        for d in &self.docs {
            put_str(&mut payload, &d.docno);
            put_u32(&mut payload, d.length);
        }
        put_u32(&mut payload, self.terms.len() as u32);
        for (term, plist) in self.terms.iter().zip(&self.postings) {
            put_str(&mut payload, term);
            put_u32(&mut payload, plist.len() as u32);
            for p in plist {
                put_u32(&mut payload, p.doc);
                put_u32(&mut payload, p.tf);
            }
        }
        let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + CHECKSUM_LEN);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&payload);
        out.extend_from_slice(&Sha256::digest(&payload));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IndexError> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(IndexError::NotAnIndex);
        }
        if bytes.len() < HEADER_LEN {
            return Err(IndexError::Corrupt("truncated header".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(IndexError::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let payload_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
        let expected_total = (HEADER_LEN as u64)
            .checked_add(payload_len)
            .and_then(|n| n.checked_add(CHECKSUM_LEN as u64));
        if expected_total != Some(bytes.len() as u64) {
            return Err(IndexError::Corrupt(format!(
                "expected {} bytes, file has {}",
                HEADER_LEN as u64 + payload_len + CHECKSUM_LEN as u64,
                bytes.len()
            )));
        }
        let payload = &bytes[HEADER_LEN..HEADER_LEN + payload_len as usize];
        let checksum = &bytes[HEADER_LEN + payload_len as usize..];
        if Sha256::digest(payload).as_slice() != checksum {
            return Err(IndexError::Corrupt("checksum mismatch".into()));
        }
        decode_payload(payload)
    }

    /// Write the snapshot via a temporary file and rename, so a crash never
    /// leaves a half-written index at `path`.
    pub fn persist(&self, path: &Path) -> Result<(), IndexError> {
        let io = |source| IndexError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        std::fs::write(&tmp, self.to_bytes()).map_err(io)?;
        std::fs::rename(&tmp, path).map_err(io)
    }

    pub fn open(path: &Path) -> Result<Self, IndexError> {
        let bytes = std::fs::read(path).map_err(|source| IndexError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IndexError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| IndexError::Corrupt(format!("payload ends early at {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, IndexError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn str(&mut self) -> Result<String, IndexError> {
        let n = self.u32()? as usize;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec()).map_err(|e| IndexError::Corrupt(e.to_string()))
    }
}

fn decode_payload(payload: &[u8]) -> Result<InvertedIndex, IndexError> {
    let corrupt = |m: String| IndexError::Corrupt(m);
    let mut c = Cursor { buf: payload, pos: 0 };
    let stats_hash = c.str()?;
    let n_docs = c.u32()? as usize;
    if n_docs == 0 {
        return Err(corrupt("zero documents".into()));
    }
    let mut docs = Vec::with_capacity(n_docs.min(payload.len()));
    for _ in 0..n_docs {
        docs.push(DocEntry {
            docno: c.str()?,
            length: c.u32()?,
        });
    }
    let n_terms = c.u32()? as usize;
    let mut terms: Vec<String> = Vec::with_capacity(n_terms.min(payload.len()));
    let mut postings = Vec::with_capacity(n_terms.min(payload.len()));
    let mut length_check = vec![0u64; n_docs];
    for _ in 0..n_terms {
        let term = c.str()?;
        if terms.last().is_some_and(|prev| *prev >= term) {
            return Err(corrupt(format!("vocabulary out of order at {term:?}")));
        }
        let df = c.u32()? as usize;
        if df == 0 || df > n_docs {
            return Err(corrupt(format!("bad df {df} for {term:?}")));
        }
        let mut plist = Vec::with_capacity(df);
        for _ in 0..df {
            let p = Posting {
                doc: c.u32()?,
                tf: c.u32()?,
            };
            if p.doc as usize >= n_docs || p.tf == 0 {
                return Err(corrupt(format!("bad posting for {term:?}")));
            }
            if plist.last().is_some_and(|q: &Posting| q.doc >= p.doc) {
                return Err(corrupt(format!("postings out of order for {term:?}")));
            }
            length_check[p.doc as usize] += p.tf as u64;
            plist.push(p);
        }
        terms.push(term);
        postings.push(plist);
    }
    if c.pos != payload.len() {
        return Err(corrupt("trailing bytes after vocabulary".into()));
    }
    if docs
        .iter()
        .zip(&length_check)
        .any(|(d, &sum)| d.length as u64 != sum)
    {
        return Err(corrupt("document lengths disagree with postings".into()));
    }
    Ok(InvertedIndex::from_parts(terms, postings, docs, stats_hash))
}
