//! Implicit-feedback events and the sparse binary user × item matrix.

mod ingest;
mod matrix;
mod persist;
mod prep;

use std::collections::HashMap;

pub use ingest::{ingest_events, open_source, IngestReport, Schema};
pub use matrix::BinaryMatrix;
pub use persist::{read_matrix, read_vocabulary_tokens, write_matrix, write_vocabulary_tokens};
pub use prep::{filter_min_activity, temporal_split, to_binary_matrix, Split};

/// One consumption event. Tokens are opaque: no case folding, no trimming
/// beyond what the delimited reader does.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub user: String,
    pub item: String,
    pub timestamp: f64,
}

impl Event {
    pub fn new(user: impl Into<String>, item: impl Into<String>, timestamp: f64) -> Self {
        Event {
            user: user.into(),
            item: item.into(),
            timestamp,
        }
    }
}

/// Raw events. Duplicate `(user, item)` pairs are allowed here and collapse
/// when the log becomes a [`BinaryMatrix`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InteractionLog {
    pub events: Vec<Event>,
}

impl InteractionLog {
    pub fn new(events: Vec<Event>) -> Self {
        InteractionLog { events }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Events ordered by `(timestamp, user, item)`; independent of input order.
    pub fn sorted_by_time(&self) -> Vec<Event> {
        let mut ev = self.events.clone();
        ev.sort_by(|a, b| {
            a.timestamp
                .total_cmp(&b.timestamp)
                .then_with(|| a.user.cmp(&b.user))
                .then_with(|| a.item.cmp(&b.item))
        });
        ev
    }

    pub fn time_range(&self) -> Option<(f64, f64)> {
        let mut it = self.events.iter().map(|e| e.timestamp);
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), t| (lo.min(t), hi.max(t))))
    }
}

/// Dense index ↔ token bijection for one side (users or items).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TokenIndex {
    tokens: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl TokenIndex {
    /// Builds an index over the distinct tokens, ordered bytewise.
    pub fn from_tokens<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Self {
        let mut uniq: Vec<String> = tokens.into_iter().map(str::to_owned).collect();
        uniq.sort_unstable();
        uniq.dedup();
        Self::from_ordered(uniq).expect("deduplicated")
    }

    /// Keeps the given order; fails on duplicates.
    pub fn from_ordered(tokens: Vec<String>) -> crate::Result<Self> {
        let mut lookup = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if lookup.insert(t.clone(), i).is_some() {
                return Err(crate::Error::format(
                    "vocabulary",
                    format!("duplicate token {t:?}"),
                ));
            }
        }
        Ok(TokenIndex { tokens, lookup })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index(&self, token: &str) -> Option<usize> {
        self.lookup.get(token).copied()
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// User and item vocabularies of one matrix.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Vocabulary {
    pub users: TokenIndex,
    pub items: TokenIndex,
}

impl Vocabulary {
    /// Maps a log onto this vocabulary, dropping events whose user or item is
    /// unknown. Returns the matrix and the number of dropped events.
    pub fn map_log(&self, log: &InteractionLog) -> (BinaryMatrix, usize) {
        let mut rows: Vec<Vec<u32>> = vec![Vec::new(); self.users.len()];
        let mut dropped = 0;
        for e in &log.events {
            match (self.users.index(&e.user), self.items.index(&e.item)) {
                (Some(u), Some(i)) => rows[u].push(i as u32),
                _ => dropped += 1,
            }
        }
        (BinaryMatrix::from_rows(self.items.len(), rows), dropped)
    }
}
