//! Sparse cosine similarity between binary item columns.
//!
//! Two items that were never co-consumed have similarity zero and are not
//! stored, so memory follows the co-consumption structure rather than
//! `|I|²`.

use std::collections::HashMap;
use std::io::{BufReader, Read, Write};

use rayon::prelude::*;

use crate::data::BinaryMatrix;
use crate::{Error, Result};

/// Per-item neighbour lists sorted by neighbour index. Symmetric, no self
/// entries, values in `(0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSimilarity {
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CosineOptions {
    /// Users with more consumed items than this are left out of pair
    /// enumeration (their `i_z²` term would dominate).
    pub power_user_cap: usize,
    /// Tolerate items nobody consumed (they get empty neighbour lists).
    pub allow_empty_columns: bool,
}

impl Default for CosineOptions {
    fn default() -> Self {
        CosineOptions {
            power_user_cap: 10_000,
            allow_empty_columns: false,
        }
    }
}

/// `|users(a) ∩ users(b)| / sqrt(|users(a)| · |users(b)|)` for every
/// co-consumed pair.
pub fn cosine_item_pairs(matrix: &BinaryMatrix) -> Result<SparseSimilarity> {
    cosine_item_pairs_with(matrix, &CosineOptions::default())
}

pub fn cosine_item_pairs_with(
    matrix: &BinaryMatrix,
    opts: &CosineOptions,
) -> Result<SparseSimilarity> {
    let n = matrix.n_items();
    let sizes = matrix.column_sizes();
    if !opts.allow_empty_columns {
        if let Some(i) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::invalid(format!(
                "item {i} has no consumers; filter the data first"
            )));
        }
    }
    let skipped = (0..matrix.n_users())
        .filter(|&u| matrix.row(u).len() > opts.power_user_cap)
        .count();
    if skipped > 0 {
        log::warn!(
            "{skipped} users with more than {} items left out of similarity",
            opts.power_user_cap
        );
    }

    let lists: Vec<(Vec<u32>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map_init(
            || (vec![0u32; n], Vec::<u32>::new()),
            |(acc, touched), a| {
                for &u in matrix.col(a) {
                    let row = matrix.row(u as usize);
                    if row.len() > opts.power_user_cap {
                        continue;
                    }
                    for &b in row {
                        if b as usize != a {
                            if acc[b as usize] == 0 {
                                touched.push(b);
                            }
                            acc[b as usize] += 1;
                        }
                    }
                }
                touched.sort_unstable();
                let na = sizes[a] as f64;
                let mut nbrs = Vec::with_capacity(touched.len());
                let mut vals = Vec::with_capacity(touched.len());
                for &b in touched.iter() {
                    let count = acc[b as usize] as f64;
                    acc[b as usize] = 0;
                    nbrs.push(b);
                    vals.push(count / (na * sizes[b as usize] as f64).sqrt());
                }
                touched.clear();
                (nbrs, vals)
            },
        )
        .collect();

    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0);
    let total = lists.iter().map(|l| l.0.len()).sum();
    let mut neighbors = Vec::with_capacity(total);
    let mut values = Vec::with_capacity(total);
    for (nb, v) in lists {
        neighbors.extend(nb);
        values.extend(v);
        offsets.push(neighbors.len());
    }
    Ok(SparseSimilarity {
        offsets,
        neighbors,
        values,
    })
}

impl SparseSimilarity {
    pub fn n_items(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of stored ordered entries (each unordered pair counts twice).
    pub fn n_entries(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, item: usize) -> (&[u32], &[f64]) {
        let r = self.offsets[item]..self.offsets[item + 1];
        (&self.neighbors[r.clone()], &self.values[r])
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        let (nb, v) = self.neighbors(a);
        nb.binary_search(&(b as u32)).map_or(0.0, |k| v[k])
    }

    /// Keeps each item's `k` most similar neighbours (ties → lower index).
    /// The result is no longer symmetric.
    pub fn top_k(&self, item: usize, k: usize) -> Vec<(u32, f64)> {
        let (nb, v) = self.neighbors(item);
        let mut pairs: Vec<(u32, f64)> = nb.iter().copied().zip(v.iter().copied()).collect();
        pairs.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
        pairs.truncate(k);
        pairs
    }

    /// `HLTF-CS1`: magic, `u32` item count, then per item a `u32` neighbour
    /// count, LEB128 index deltas and `f32` values.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(b"HLTF-CS1")?;
        w.write_all(&(self.n_items() as u32).to_le_bytes())?;
        let mut buf = Vec::new();
        for a in 0..self.n_items() {
            let (nb, v) = self.neighbors(a);
            buf.clear();
            buf.extend_from_slice(&(nb.len() as u32).to_le_bytes());
            let mut prev = 0u32;
            for &b in nb {
                let mut d = b - prev;
                prev = b;
                loop {
                    let byte = (d & 0x7f) as u8;
                    d >>= 7;
                    if d == 0 {
                        buf.push(byte);
                        break;
                    }
                    buf.push(byte | 0x80);
                }
            }
            for &x in v {
                buf.extend_from_slice(&(x as f32).to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let bad = |d: &str| Error::format("similarity file", d.to_owned());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|_| bad("truncated header"))?;
        if &magic != b"HLTF-CS1" {
            return Err(bad("bad magic, expected HLTF-CS1"));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let n = u32::from_le_bytes(b4) as usize;
        let mut offsets = vec![0];
        let (mut neighbors, mut values) = (Vec::new(), Vec::new());
        for _ in 0..n {
            r.read_exact(&mut b4)?;
            let count = u32::from_le_bytes(b4) as usize;
            let mut prev = 0u32;
            for _ in 0..count {
                let (mut d, mut shift) = (0u32, 0);
                loop {
                    let mut byte = [0u8];
                    r.read_exact(&mut byte)?;
                    d |= u32::from(byte[0] & 0x7f) << shift;
                    if byte[0] & 0x80 == 0 {
                        break;
                    }
                    shift += 7;
                    if shift > 28 {
                        return Err(bad("varint overflow"));
                    }
                }
                prev += d;
                if prev as usize >= n {
                    return Err(bad("neighbour index out of range"));
                }
                neighbors.push(prev);
            }
            for _ in 0..count {
                r.read_exact(&mut b4)?;
                values.push(f64::from(f32::from_le_bytes(b4)));
            }
            offsets.push(neighbors.len());
        }
        Ok(SparseSimilarity {
            offsets,
            neighbors,
            values,
        })
    }
}

/// Strictly higher score, or an equal score at a lower index.
fn better(score: f64, item: usize, best: Option<(usize, f64)>) -> bool {
    match best {
        None => true,
        Some((bi, bs)) => score > bs || (score == bs && item < bi),
    }
}

/// Candidate with the highest similarity to the set, where the similarity of
/// an item to a set is its maximum over the set's members. `None` when no
/// candidate was co-consumed with any member.
pub fn most_similar_to_set(
    candidates: &[usize],
    set: &[usize],
    sim: &SparseSimilarity,
) -> Option<usize> {
    let mut affinity = SetAffinity::new(sim);
    for &s in set {
        affinity.add_member(s);
    }
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    affinity.best(|i| sorted.binary_search(&i).is_ok())
}

/// Member of `set` most similar to `x`; the lowest index when all are zero.
pub fn closest_in_set(set: &[usize], x: usize, sim: &SparseSimilarity) -> usize {
    assert!(!set.is_empty(), "closest_in_set needs a non-empty set");
    let mut best: Option<(usize, f64)> = None;
    for &s in set {
        let v = sim.get(s, x);
        if better(v, s, best) {
            best = Some((s, v));
        }
    }
    best.unwrap().0
}

/// Running max-similarity of every touched item to a growing set.
///
/// Adding a member costs one pass over its neighbour list; `best` scans only
/// items that co-occur with some member.
#[derive(Debug, Clone)]
pub struct SetAffinity<'a> {
    sim: &'a SparseSimilarity,
    agg: HashMap<u32, f64>,
}

impl<'a> SetAffinity<'a> {
    pub fn new(sim: &'a SparseSimilarity) -> Self {
        SetAffinity {
            sim,
            agg: HashMap::new(),
        }
    }

    pub fn add_member(&mut self, item: usize) {
        let (nb, v) = self.sim.neighbors(item);
        for (&b, &s) in nb.iter().zip(v) {
            let e = self.agg.entry(b).or_insert(0.0);
            if s > *e {
                *e = s;
            }
        }
    }

    pub fn get(&self, item: usize) -> f64 {
        self.agg.get(&(item as u32)).copied().unwrap_or(0.0)
    }

    pub fn best(&self, is_candidate: impl Fn(usize) -> bool) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (&b, &s) in &self.agg {
            let b = b as usize;
            if s > 0.0 && is_candidate(b) && better(s, b, best) {
                best = Some((b, s));
            }
        }
        best.map(|(b, _)| b)
    }
}
