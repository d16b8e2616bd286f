use std::io::{BufRead, BufReader, Read, Write};

use crate::data::TokenIndex;
use crate::{Error, Result};

/// One user's ranked recommendations, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub user: usize,
    pub entries: Vec<(usize, f64)>,
}

impl RankedList {
    pub fn new(user: usize, entries: Vec<(usize, f64)>) -> Self {
        RankedList { user, entries }
    }

    pub fn items(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|e| e.0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn truncated(&self, n: usize) -> RankedList {
        RankedList {
            user: self.user,
            entries: self.entries.iter().take(n).copied().collect(),
        }
    }
}

/// `user<TAB>item<TAB>score<TAB>rank` with 1-based ranks.
pub fn write_lists<W: Write>(
    lists: &[RankedList],
    users: &TokenIndex,
    items: &TokenIndex,
    mut w: W,
) -> Result<()> {
    for l in lists {
        let u = users.token(l.user);
        for (r, &(i, s)) in l.entries.iter().enumerate() {
            writeln!(w, "{u}\t{}\t{s}\t{}", items.token(i), r + 1)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads lists written by [`write_lists`] or any tool using the same four
/// columns. Lines starting with `#` are skipped. Lists come back in order of
/// first appearance, entries sorted by rank.
pub fn read_lists<R: Read>(
    r: R,
    users: &TokenIndex,
    items: &TokenIndex,
) -> Result<Vec<RankedList>> {
    let mut out: Vec<(RankedList, Vec<usize>)> = Vec::new();
    let mut slot = std::collections::HashMap::new();
    for (n, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |d: &str| Error::format("ranked list", format!("line {}: {d}", n + 1));
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(bad("expected user, item, score, rank"));
        }
        let u = users.index(f[0]).ok_or_else(|| bad("unknown user"))?;
        let i = items.index(f[1]).ok_or_else(|| bad("unknown item"))?;
        let s: f64 = f[2].parse().map_err(|_| bad("bad score"))?;
        let rank: usize = f[3].parse().map_err(|_| bad("bad rank"))?;
        let k = *slot.entry(u).or_insert_with(|| {
            out.push((RankedList::new(u, Vec::new()), Vec::new()));
            out.len() - 1
        });
        out[k].0.entries.push((i, s));
        out[k].1.push(rank);
    }
    out.into_iter()
        .map(|(mut l, ranks)| {
            let mut idx: Vec<usize> = (0..ranks.len()).collect();
            idx.sort_by_key(|&k| ranks[k]);
            if idx.iter().enumerate().any(|(pos, &k)| ranks[k] != pos + 1) {
                return Err(Error::format(
                    "ranked list",
                    format!(
                        "ranks for user {} are not 1..{}",
                        users.token(l.user),
                        ranks.len()
                    ),
                ));
            }
            l.entries = idx.into_iter().map(|k| l.entries[k]).collect();
            let mut seen: Vec<usize> = l.items().collect();
            seen.sort_unstable();
            if seen.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::format(
                    "ranked list",
                    format!("duplicate item for user {}", users.token(l.user)),
                ));
            }
            Ok(l)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> (TokenIndex, TokenIndex) {
        (
            TokenIndex::from_tokens(["u1", "u2"]),
            TokenIndex::from_tokens(["a", "b", "c"]),
        )
    }

    #[test]
    fn lists_round_trip() {
        let (u, i) = vocab();
        let lists = vec![
            RankedList::new(1, vec![(2, 0.75), (0, 0.1 + 0.2)]),
            RankedList::new(0, vec![(1, 3.0)]),
        ];
        let mut buf = Vec::new();
        write_lists(&lists, &u, &i, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), "u2\tc\t0.75\t1");
        assert_eq!(read_lists(buf.as_slice(), &u, &i).unwrap(), lists);
    }

    #[test]
    fn reader_sorts_by_rank_and_rejects_gaps() {
        let (u, i) = vocab();
        let text = "# produced elsewhere\nu1\tb\t1\t2\nu1\ta\t2\t1\n";
        let l = read_lists(text.as_bytes(), &u, &i).unwrap();
        assert_eq!(l[0].items().collect::<Vec<_>>(), vec![0, 1]);
        assert!(read_lists("u1\ta\t1\t2\n".as_bytes(), &u, &i).is_err());
        assert!(read_lists("u1\tz\t1\t1\n".as_bytes(), &u, &i).is_err());
        assert!(read_lists("u1\ta\t1\n".as_bytes(), &u, &i).is_err());
        assert!(read_lists("u1\ta\t1\t1\nu1\ta\t1\t2\n".as_bytes(), &u, &i).is_err());
    }
}
