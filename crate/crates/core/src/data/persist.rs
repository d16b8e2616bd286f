//! `HLTF-BM1` matrix files and two-column vocabulary files.
//!
//! Matrix layout, all little-endian: the 8-byte magic `HLTF-BM1`, `u32`
//! user count, `u32` item count, `u64` number of stored cells, then
//! `n_users + 1` `u64` row offsets and the `u32` item index of every cell,
//! row by row.

use std::io::{BufRead, BufReader, Read, Write};

use super::{BinaryMatrix, TokenIndex};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"HLTF-BM1";

pub fn write_matrix<W: Write>(m: &BinaryMatrix, mut w: W) -> Result<()> {
    let dim =
        |n: usize| u32::try_from(n).map_err(|_| Error::invalid("matrix dimension exceeds u32"));
    w.write_all(MAGIC)?;
    w.write_all(&dim(m.n_users())?.to_le_bytes())?;
    w.write_all(&dim(m.n_items())?.to_le_bytes())?;
    w.write_all(&(m.nnz() as u64).to_le_bytes())?;
    for &off in m.row_offsets() {
        w.write_all(&(off as u64).to_le_bytes())?;
    }
    for &i in m.row_indices() {
        w.write_all(&i.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_matrix<R: Read>(r: R) -> Result<BinaryMatrix> {
    let mut r = BufReader::new(r);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::format("binary matrix", "truncated header"))?;
    if &magic != MAGIC {
        return Err(Error::format(
            "binary matrix",
            "bad magic, expected HLTF-BM1",
        ));
    }
    let n_users = read_u32(&mut r)? as usize;
    let n_items = read_u32(&mut r)? as usize;
    let nnz = read_u64(&mut r)? as usize;
    let mut offsets = Vec::with_capacity(n_users + 1);
    for _ in 0..=n_users {
        offsets.push(read_u64(&mut r)? as usize);
    }
    let mut idx = Vec::with_capacity(nnz);
    for _ in 0..nnz {
        idx.push(read_u32(&mut r)?);
    }
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(Error::format("binary matrix", "trailing bytes"));
    }
    BinaryMatrix::from_csr_parts(n_users, n_items, offsets, idx)
}

/// One `index<TAB>token` line per entry, in index order.
pub fn write_vocabulary_tokens<W: Write>(index: &TokenIndex, mut w: W) -> Result<()> {
    for (i, t) in index.tokens().iter().enumerate() {
        if t.contains(['\t', '\n', '\r']) {
            return Err(Error::invalid(format!(
                "token {t:?} contains a tab or newline"
            )));
        }
        writeln!(w, "{i}\t{t}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_vocabulary_tokens<R: Read>(r: R) -> Result<TokenIndex> {
    let mut tokens = Vec::new();
    for (k, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let (idx, tok) = line
            .split_once('\t')
            .ok_or_else(|| Error::format("vocabulary", format!("line {}: missing tab", k + 1)))?;
        if idx.parse::<usize>().ok() != Some(tokens.len()) {
            return Err(Error::format(
                "vocabulary",
                format!("line {}: expected index {}", k + 1, tokens.len()),
            ));
        }
        tokens.push(tok.to_owned());
    }
    TokenIndex::from_ordered(tokens)
}
